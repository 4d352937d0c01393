//! Bihermitian data of a commuting pair on ℝ⁴.
//!
//! Conventions, all fixed by round-tripping through [`extract`] and
//! [`reconstruct`]:
//!
//! * `V₊` is the −1 eigenspace of `J₁J₂` (where `J₁ = J₂`); it is the graph
//!   `X ↦ g(X,·) + b(X,·)`, and `g` must be positive definite.
//! * `I₊` is `J₁` carried to T along `V₊`; `I₋` is *minus* `J₁` carried along
//!   `V₋`, so a Kähler pair gives `I₊ = I`, `I₋ = −I`.
//! * `ω±(X, Y) = g(I±X, Y)`.
//! * Two-forms act as maps by `X ↦ i_Xβ`.
//!
//! With these choices the pair is recovered as
//! `J₁ = ½ e^b [[I₊−I₋, −(ω₊⁻¹+ω₋⁻¹)], [ω₊+ω₋, −(I₊−I₋)ᵀ]] e^{−b}` and
//! `J₂ = ½ e^b [[I₊+I₋, −(ω₊⁻¹−ω₋⁻¹)], [ω₊−ω₋, −(I₊+I₋)ᵀ]] e^{−b}`.

use nalgebra::{DMatrix, Matrix2, Matrix4, SMatrix, SymmetricEigen, Vector4};

use crate::error::{Error, Result};
use crate::exterior::{wedge, ComplexForm, C64};
use crate::gcs::GCStructure;
use crate::linalg::{max_abs, svd_sorted};

type Matrix8 = SMatrix<f64, 8, 8>;
type CMatrix4 = Matrix4<C64>;

const I: C64 = C64::new(0.0, 1.0);

/// Commutator tolerance for [`extract`], relative to `‖J₁‖‖J₂‖`.
pub const COMMUTE_TOL: f64 = 1e-9;

/// The bihermitian package at one point.
#[derive(Clone, Debug)]
pub struct BihermitianPoint {
    /// Metric, positive definite.
    pub g: Matrix4<f64>,
    /// `b_ij = b(eᵢ, eⱼ)`.
    pub b: Matrix4<f64>,
    /// Complex structure from `V₊`.
    pub i_plus: Matrix4<f64>,
    /// Complex structure from `V₋`.
    pub i_minus: Matrix4<f64>,
    /// `g(I₊·, ·)`.
    pub omega_plus: ComplexForm,
    /// `g(I₋·, ·)`.
    pub omega_minus: ComplexForm,
    /// Angle function, `ω₋^{1,1} = p ω₊`.
    pub p: f64,
    /// Holomorphic symplectic form; `β̄₁ − β̄₂` when the spinors are known,
    /// otherwise read off from `ω₋^{2,0}` while `|p| < 1`.
    pub gamma: Option<ComplexForm>,
    /// Orthonormal `I₊`-holomorphic frame, columns `(1,0)` vectors.
    pub frame: SMatrix<C64, 4, 2>,
    /// `σ₊ : (T^{1,0})* → T^{1,0}` in `frame`, from the Poisson block of `J₁`.
    pub sigma_plus: Matrix2<C64>,
    /// The `T* → T` block of `J₁`.
    pub poisson: Matrix4<f64>,
}

fn to_m8(j: &GCStructure) -> Result<Matrix8> {
    if j.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, found: j.dim() });
    }
    Ok(Matrix8::from_fn(|r, c| j.mat()[(r, c)]))
}

fn to_dm(m: &Matrix8) -> DMatrix<f64> {
    DMatrix::from_fn(8, 8, |r, c| m[(r, c)])
}

fn block(m: &Matrix8, r: usize, c: usize) -> Matrix4<f64> {
    m.fixed_view::<4, 4>(r, c).into_owned()
}

fn max4(m: &Matrix4<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// `Mᵀ` for the graph `{(X, MᵀX)}` spanned by the columns of a projector.
fn graph_map(p: &Matrix8) -> Result<Matrix4<f64>> {
    let pa = p.fixed_view::<4, 8>(0, 0).into_owned();
    let pb = p.fixed_view::<4, 8>(4, 0).into_owned();
    let gram = pa * pa.transpose();
    let inv = gram.try_inverse().ok_or_else(|| Error::Singular("eigenspace meets T*".into()))?;
    Ok(pb * pa.transpose() * inv)
}

/// `ω(eᵢ, eⱼ) = g(I eᵢ, eⱼ)` as a matrix.
pub fn hermitian_matrix(g: &Matrix4<f64>, i: &Matrix4<f64>) -> Matrix4<f64> {
    i.transpose() * g
}

pub(crate) fn form_of(m: &Matrix4<f64>) -> ComplexForm {
    ComplexForm::two_form_real(&DMatrix::from_fn(4, 4, |r, c| m[(r, c)]))
}

pub(crate) fn cmat_of(f: &ComplexForm) -> CMatrix4 {
    let m = f.to_matrix();
    CMatrix4::from_fn(|r, c| m[(r, c)])
}

fn cform_of(m: &CMatrix4) -> ComplexForm {
    ComplexForm::two_form(&DMatrix::from_fn(4, 4, |r, c| m[(r, c)]))
}

/// The `(2,0)` part `Pᵀ A P`, `P = (1 − iI)/2`, of a 2-form matrix.
pub fn part_20(a: &CMatrix4, i: &Matrix4<f64>) -> CMatrix4 {
    let p = (CMatrix4::identity() - i.map(|x| I * x)) * C64::new(0.5, 0.0);
    p.transpose() * a * p
}

/// Orthonormal basis of `T^{1,0}` for `(g, I)` by Gram–Schmidt on the +i
/// eigenvectors `eⱼ − iIeⱼ`, with `h(u, v) = uᵀ g v̄`.
pub fn unitary_frame(g: &Matrix4<f64>, i: &Matrix4<f64>) -> Result<SMatrix<C64, 4, 2>> {
    let gc = g.map(|x| C64::new(x, 0.0));
    let mut cols: Vec<Vector4<C64>> = Vec::with_capacity(2);
    for k in 0..4 {
        if cols.len() == 2 {
            break;
        }
        let e = Vector4::from_fn(|r, _| if r == k { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
        let mut u = e - i.map(|x| I * x) * e;
        for c in &cols {
            let proj = (u.transpose() * gc * c.map(|z| z.conj()))[(0, 0)];
            u -= c * proj;
        }
        let n2 = (u.transpose() * gc * u.map(|z| z.conj()))[(0, 0)].re;
        if n2 > 1e-12 * max4(g) {
            cols.push(u / C64::new(n2.sqrt(), 0.0));
        }
    }
    if cols.len() < 2 {
        return Err(Error::Singular("no (1,0) frame".into()));
    }
    Ok(SMatrix::<C64, 4, 2>::from_columns(&cols))
}

/// Dual (1,0)-coframe of a frame, as rows, vanishing on the conjugate frame.
fn coframe(frame: &SMatrix<C64, 4, 2>) -> Result<SMatrix<C64, 2, 4>> {
    let full = CMatrix4::from_fn(|r, c| if c < 2 { frame[(r, c)] } else { frame[(r, c - 2)].conj() });
    let inv = full.try_inverse().ok_or_else(|| Error::Singular("frame".into()))?;
    Ok(inv.fixed_view::<2, 4>(0, 0).into_owned())
}

/// `σ₊` from a `T* → T` block: the (1,0) part of `π(θᵃ)` expressed in the frame.
fn sigma_from_block(pi: &Matrix4<f64>, i_plus: &Matrix4<f64>, frame: &SMatrix<C64, 4, 2>) -> Result<Matrix2<C64>> {
    let theta = coframe(frame)?;
    let pic = pi.map(|x| C64::new(x, 0.0));
    let p10 = (CMatrix4::identity() - i_plus.map(|x| I * x)) * C64::new(0.5, 0.0);
    let mut s = Matrix2::zeros();
    for a in 0..2 {
        let th = theta.row(a).transpose();
        let img = p10 * (pic * th);
        let coords = theta * img;
        s[(0, a)] = coords[0];
        s[(1, a)] = coords[1];
    }
    Ok(s)
}

/// The map `X ↦ i_Xγ` from `T^{1,0}` to its dual, in a frame: `G[a][b] = γ(u_b, u_a)`.
pub fn gamma_in_frame(gamma: &ComplexForm, frame: &SMatrix<C64, 4, 2>) -> Matrix2<C64> {
    let m = cmat_of(gamma);
    Matrix2::from_fn(|a, b| (frame.column(b).transpose() * m * frame.column(a))[(0, 0)])
}

/// From a commuting pair to `(g, b, I₊, I₋, ω₊, ω₋, p, γ, σ₊)`.
pub fn extract(j1: &GCStructure, j2: &GCStructure) -> Result<BihermitianPoint> {
    let a = to_m8(j1)?;
    let c = to_m8(j2)?;
    let na = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let nc = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let comm = a * c - c * a;
    let residual = comm.iter().fold(0.0f64, |m, x| m.max(x.abs())) / (na * nc);
    if residual > COMMUTE_TOL {
        return Err(Error::NotCommuting { residual });
    }
    let prod = a * c;
    let p_plus = (Matrix8::identity() - prod) * 0.5;
    let p_minus = (Matrix8::identity() + prod) * 0.5;
    let mt_plus = graph_map(&p_plus)?;
    let mt_minus = graph_map(&p_minus)?;
    let m = mt_plus.transpose();
    let g = (m + m.transpose()) * 0.5;
    let b = (m - m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(g).eigenvalues;
    let min_eigenvalue = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let max_eigenvalue = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(min_eigenvalue > 64.0 * f64::EPSILON * max_eigenvalue.abs().max(f64::MIN_POSITIVE)) {
        return Err(Error::IndefiniteMetric { min_eigenvalue });
    }
    let tt = block(&a, 0, 0);
    let ts = block(&a, 0, 4);
    let i_plus = tt + ts * mt_plus;
    let i_minus = -(tt + ts * mt_minus);
    let omega_plus = form_of(&hermitian_matrix(&g, &i_plus));
    let omega_minus = form_of(&hermitian_matrix(&g, &i_minus));
    let p = (wedge(&omega_minus, &omega_plus)?.top() / wedge(&omega_plus, &omega_plus)?.top()).re;
    let frame = unitary_frame(&g, &i_plus)?;
    let sigma_plus = sigma_from_block(&ts, &i_plus, &frame)?;
    let gamma = if 1.0 - p * p > 1e-12 {
        let w20 = part_20(&cmat_of(&omega_minus), &i_plus);
        Some(cform_of(&(w20 * (I * 4.0 / (p * p - 1.0)))))
    } else {
        None
    };
    Ok(BihermitianPoint { g, b, i_plus, i_minus, omega_plus, omega_minus, p, gamma, frame, sigma_plus, poisson: ts })
}

/// As [`extract`] for the pair of `exp β₁`, `exp β₂`, with `γ = β̄₁ − β̄₂` recorded exactly.
pub fn extract_from_betas(beta1: &ComplexForm, beta2: &ComplexForm) -> Result<BihermitianPoint> {
    let j1 = crate::gcs::j_from_two_form(beta1)?;
    let j2 = crate::gcs::j_from_two_form(beta2)?;
    let mut bp = extract(&j1, &j2)?;
    bp.gamma = Some(beta1.conj() - beta2.conj());
    Ok(bp)
}

impl BihermitianPoint {
    /// `max ‖g(I±·, I±·) − g‖`, relative to `‖g‖`.
    pub fn hermiticity_residual(&self) -> f64 {
        let r1 = max4(&(self.i_plus.transpose() * self.g * self.i_plus - self.g));
        let r2 = max4(&(self.i_minus.transpose() * self.g * self.i_minus - self.g));
        r1.max(r2) / max4(&self.g)
    }

    /// `max ‖I±² + 1‖`.
    pub fn complex_residual(&self) -> f64 {
        let r1 = max4(&(self.i_plus * self.i_plus + Matrix4::identity()));
        let r2 = max4(&(self.i_minus * self.i_minus + Matrix4::identity()));
        r1.max(r2)
    }

    /// `|ω₊² − ω₋²|` relative to `|ω₊²|`.
    pub fn volume_residual(&self) -> f64 {
        let a = wedge(&self.omega_plus, &self.omega_plus).expect("dim 4").top();
        let b = wedge(&self.omega_minus, &self.omega_minus).expect("dim 4").top();
        (a - b).norm() / a.norm()
    }

    /// `‖ω₋^{1,1} − pω₊‖` relative to `‖ω₊‖`.
    pub fn angle_residual(&self) -> f64 {
        let w = cmat_of(&self.omega_minus);
        let w20 = part_20(&w, &self.i_plus);
        let w02 = w20.map(|z| z.conj());
        let w11 = w - w20 - w02;
        let target = cmat_of(&self.omega_plus) * C64::new(self.p, 0.0);
        (w11 - target).iter().fold(0.0f64, |m, z| m.max(z.norm())) / self.omega_plus.norm_max()
    }

    /// Smallest eigenvalue of `g`.
    pub fn min_metric_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.g).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Rebuilds `(J₁, J₂)` from bihermitian data.
pub fn reconstruct(bp: &BihermitianPoint) -> Result<(GCStructure, GCStructure)> {
    let wp = bp.g * bp.i_plus;
    let wm = bp.g * bp.i_minus;
    let wpi = wp.try_inverse().ok_or_else(|| Error::Singular("ω₊".into()))?;
    let wmi = wm.try_inverse().ok_or_else(|| Error::Singular("ω₋".into()))?;
    let bh = bp.b.transpose();
    let mut eb = Matrix8::identity();
    eb.fixed_view_mut::<4, 4>(4, 0).copy_from(&bh);
    let mut emb = Matrix8::identity();
    emb.fixed_view_mut::<4, 4>(4, 0).copy_from(&(-bh));
    let assemble = |tl: Matrix4<f64>, tr: Matrix4<f64>, bl: Matrix4<f64>| {
        let mut m = Matrix8::zeros();
        m.fixed_view_mut::<4, 4>(0, 0).copy_from(&(tl * 0.5));
        m.fixed_view_mut::<4, 4>(0, 4).copy_from(&(tr * 0.5));
        m.fixed_view_mut::<4, 4>(4, 0).copy_from(&(bl * 0.5));
        m.fixed_view_mut::<4, 4>(4, 4).copy_from(&(-tl.transpose() * 0.5));
        eb * m * emb
    };
    let j1 = assemble(bp.i_plus - bp.i_minus, -(wpi + wmi), wp + wm);
    let j2 = assemble(bp.i_plus + bp.i_minus, -(wpi - wmi), wp - wm);
    // Errors in the extracted data are amplified by the conditioning of ω± and by e^{±b}.
    let kappa = (max4(&wp) * max4(&wpi)).max(max4(&wm) * max4(&wmi)) * (1.0 + max4(&bp.b)).powi(2);
    let tol = 1e-8 * kappa.max(1.0);
    Ok((GCStructure::with_tolerance(to_dm(&j1), tol)?, GCStructure::with_tolerance(to_dm(&j2), tol)?))
}

/// Largest entry of `J − J′` over both structures, relative to the larger of
/// `‖J₁‖, ‖J₂‖`: the extracted data carry errors of that size.
pub fn round_trip_residual(j1: &GCStructure, j2: &GCStructure) -> Result<f64> {
    let bp = extract(j1, j2)?;
    let (k1, k2) = reconstruct(&bp)?;
    let scale = max_abs(j1.mat()).max(max_abs(j2.mat()));
    let d = max_abs(&(j1.mat() - k1.mat())).max(max_abs(&(j2.mat() - k2.mat())));
    Ok(d / scale)
}

/// Residuals of the identities tying `β₁, β₂` to the bihermitian data.
#[derive(Clone, Debug)]
pub struct BetaIdentityReport {
    /// Sign of b in `β₁ = ±b + iω₊ − (p−1)γ̄/2` that fits best.
    pub b_sign: i8,
    /// `(β₁ residual, β₂ residual)` with `+b`, relative to `max ‖βᵢ‖`.
    pub plus_b: (f64, f64),
    /// Same with `−b`.
    pub minus_b: (f64, f64),
    /// `ω₋ = pω₊ + i(p²−1)γ̄/4 − i(p²−1)γ/4`, relative to `‖ω₊‖`.
    pub omega_minus: f64,
    /// `γ₁ = q₁γ̄`.
    pub q1: C64,
    /// `γ₂ = q₂γ̄`.
    pub q2: C64,
    /// `|q₁ − q₂ − 1|`.
    pub q_difference: f64,
    /// `|q₁ + (p−1)/2|` and `|q₂ + (p+1)/2|`, the larger.
    pub q_values: f64,
    /// Coefficient of γ̄ in `ω₋`.
    pub rho_coef: C64,
    /// `|ρ-coef − i(p²−1)/4|`.
    pub rho_coef_residual: f64,
    /// `(1−p²)ω₊² = 2|r|²γγ̄`, relative to `|ω₊²|`.
    pub eq_a: f64,
    /// `−(1−p)²ω₊² = 2i(q₁ − ir) r̄ γγ̄`, relative.
    pub eq_b: f64,
    /// `(1+p)²ω₊² = 2i(q₂ + ir) r̄ γγ̄`, relative.
    pub eq_c: f64,
    /// Both Liouville estimates of p minus the extracted p, the larger.
    pub liouville: f64,
}

impl BetaIdentityReport {
    /// Largest residual over the identities, using the adopted sign of b.
    pub fn max_residual(&self) -> f64 {
        let (r1, r2) = if self.b_sign > 0 { self.plus_b } else { self.minus_b };
        [r1, r2, self.omega_minus, self.q_difference, self.q_values, self.rho_coef_residual, self.eq_a, self.eq_b, self.eq_c, self.liouville]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Checks the decomposition of `β₁, β₂` against extracted data.
pub fn prop4_verify(beta1: &ComplexForm, beta2: &ComplexForm, bp: &BihermitianPoint) -> Result<BetaIdentityReport> {
    let gamma = beta1.conj() - beta2.conj();
    let gbar = gamma.conj();
    let b = form_of(&bp.b);
    let wp = &bp.omega_plus;
    let wm = &bp.omega_minus;
    let p = bp.p;
    let pc = C64::new(p, 0.0);
    let scale = beta1.norm_max().max(beta2.norm_max());
    let iw = wp.scale(I);
    let fit = |sign: f64| -> (f64, f64) {
        let sb = &b * sign;
        let t1 = &(&sb + &iw) - &(&gbar * ((p - 1.0) / 2.0));
        let t2 = &(&sb + &iw) - &(&gbar * ((p + 1.0) / 2.0));
        ((beta1 - &t1).norm_max() / scale, (beta2 - &t2).norm_max() / scale)
    };
    let plus_b = fit(1.0);
    let minus_b = fit(-1.0);
    let b_sign: i8 = if plus_b.0.max(plus_b.1) <= minus_b.0.max(minus_b.1) { 1 } else { -1 };
    let k = I * ((p * p - 1.0) / 4.0);
    let target = &(&(wp * pc) + &(&gbar * k)) - &(&gamma * k);
    let omega_minus = (wm - &target).norm_max() / wp.norm_max();

    let gg = wedge(&gamma, &gbar)?.top();
    let gbg = wedge(&gbar, &gamma)?.top();
    if gg.norm() <= 1e-14 * gamma.norm_max().powi(2) {
        return Err(Error::VanishingVolume);
    }
    let base = &(&b * f64::from(b_sign)) + &iw;
    let gamma1 = beta1 - &base;
    let gamma2 = beta2 - &base;
    let q1 = wedge(&gamma1, &gamma)?.top() / gbg;
    let q2 = wedge(&gamma2, &gamma)?.top() / gbg;
    let q_difference = (q1 - q2 - 1.0).norm();
    let q_values = (q1 + (p - 1.0) / 2.0).norm().max((q2 + (p + 1.0) / 2.0).norm());
    let r = wedge(wm, &gamma)?.top() / gbg;
    let rho_coef_residual = (r - k).norm();
    let w2 = wedge(wp, wp)?.top();
    let rel = |lhs: C64, rhs: C64| (lhs - rhs).norm() / w2.norm();
    let eq_a = rel(w2 * (1.0 - p * p), gg * (2.0 * r.norm_sqr()));
    let eq_b = rel(-w2 * (1.0 - p).powi(2), I * 2.0 * (q1 - I * r) * r.conj() * gg);
    let eq_c = rel(w2 * (1.0 + p).powi(2), I * 2.0 * (q2 + I * r) * r.conj() * gg);
    let (l1, l2) = angle_from_liouville(beta1, beta2, &gamma)?;
    let liouville = (l1 - p).abs().max((l2 - p).abs());
    Ok(BetaIdentityReport {
        b_sign,
        plus_b,
        minus_b,
        omega_minus,
        q1,
        q2,
        q_difference,
        q_values,
        rho_coef: r,
        rho_coef_residual,
        eq_a,
        eq_b,
        eq_c,
        liouville,
    })
}

/// The two estimates of p from `(β₁−β̄₁)² = (p−1)γγ̄` and `(β₂−β̄₂)² = −(p+1)γγ̄`.
pub fn angle_from_liouville(beta1: &ComplexForm, beta2: &ComplexForm, gamma: &ComplexForm) -> Result<(f64, f64)> {
    let gg = wedge(gamma, &gamma.conj())?.top();
    if gg.norm() <= 1e-14 * gamma.norm_max().powi(2).max(f64::MIN_POSITIVE) {
        return Err(Error::VanishingVolume);
    }
    let d1 = beta1 - &beta1.conj();
    let d2 = beta2 - &beta2.conj();
    let v1 = wedge(&d1, &d1)?.top() / gg;
    let v2 = wedge(&d2, &d2)?.top() / gg;
    Ok((v1.re + 1.0, -v2.re - 1.0))
}

/// The form `S(X, Y) = g([I₊, I₋]X, Y)` and the Poisson structure read from it.
#[derive(Clone, Debug)]
pub struct PoissonReport {
    /// `S_ij = S(eᵢ, eⱼ)`.
    pub s: Matrix4<f64>,
    /// `‖S(I₊·, I₊·) + S‖`, relative to `‖g‖`.
    pub type_residual: f64,
    /// `S^{0,2}` carried to `Λ²T^{1,0}` by the metric, as a map in `bp.frame`.
    pub sigma_s: Matrix2<C64>,
    /// `σ₊ = σ_S / 4i`; the constant makes it agree with the Poisson block of `J₁`.
    pub sigma_plus: Matrix2<C64>,
    /// `‖σ₊ − bp.sigma_plus‖`.
    pub route_residual: f64,
    /// `‖σ₊γ − 2i·id‖` when γ is known and nondegenerate.
    pub sigma_gamma_residual: Option<f64>,
}

/// Normalization between the metric picture of `σ₊` and the `J₁` picture.
pub const SIGMA_S_FACTOR: C64 = C64::new(0.0, 4.0);

/// See [`PoissonReport`]. Fails with `TypeViolation` when `S` has a (1,1) part
/// above `tol` relative to `‖g‖`.
pub fn poisson_sigma(bp: &BihermitianPoint, tol: f64) -> Result<PoissonReport> {
    let comm = bp.i_plus * bp.i_minus - bp.i_minus * bp.i_plus;
    let s = comm.transpose() * bp.g;
    let type_residual = max4(&(bp.i_plus.transpose() * s * bp.i_plus + s)) / max4(&bp.g);
    if type_residual > tol {
        return Err(Error::TypeViolation { residual: type_residual });
    }
    let sc = s.map(|x| C64::new(x, 0.0));
    let fb = bp.frame.map(|z| z.conj());
    let s02 = Matrix2::from_fn(|a, b| (fb.column(a).transpose() * sc * fb.column(b))[(0, 0)]);
    let sigma_s = s02.transpose();
    let sigma_plus = sigma_s / SIGMA_S_FACTOR;
    let route_residual = (sigma_plus - bp.sigma_plus).iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let sigma_gamma_residual = bp.gamma.as_ref().map(|gamma| {
        let gm = gamma_in_frame(gamma, &bp.frame);
        let prod = bp.sigma_plus * gm - Matrix2::identity() * (I * 2.0);
        prod.iter().fold(0.0f64, |m, z| m.max(z.norm()))
    });
    Ok(PoissonReport { s, type_residual, sigma_s, sigma_plus, route_residual, sigma_gamma_residual })
}

/// `‖σ₊‖` in the unitary frame.
pub fn sigma_norm(bp: &BihermitianPoint) -> f64 {
    bp.sigma_plus.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

/// The real Poisson bivector of a structure (its `T* → T` block) and the
/// dimension of its kernel.
pub fn real_poisson(j: &GCStructure) -> (DMatrix<f64>, usize) {
    let pi = j.poisson_block();
    let d = pi.nrows();
    let scale = max_abs(&pi);
    let kernel = if scale == 0.0 { d } else { d - pi.rank(1e-9 * scale) };
    (pi, kernel)
}

/// Kernel dimensions of `I₊ − I₋` and `I₊ + I₋`.
pub fn structure_kernels(bp: &BihermitianPoint) -> (usize, usize) {
    let k = |m: Matrix4<f64>| 4 - m.rank(1e-9 * max4(&bp.i_plus).max(1.0));
    (k(bp.i_plus - bp.i_minus), k(bp.i_plus + bp.i_minus))
}

/// Hodge star of a 2-form for `g`, with orientation sign `orient` on `e₀₁₂₃`.
pub fn hodge_star(a: &Matrix4<f64>, g: &Matrix4<f64>, orient: f64) -> Result<Matrix4<f64>> {
    let gi = g.try_inverse().ok_or_else(|| Error::Singular("metric".into()))?;
    let up = gi * a * gi.transpose();
    let vol = g.determinant().abs().sqrt() * orient;
    let mut out = Matrix4::zeros();
    for k in 0..4 {
        for l in 0..4 {
            let mut s = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    s += levi_civita([i, j, k, l]) * up[(i, j)];
                }
            }
            out[(k, l)] = 0.5 * vol * s;
        }
    }
    Ok(out)
}

fn levi_civita(idx: [usize; 4]) -> f64 {
    let mut v = idx;
    let mut sign = 1.0;
    for i in 0..4 {
        for j in 0..3 - i {
            if v[j] == v[j + 1] {
                return 0.0;
            }
            if v[j] > v[j + 1] {
                v.swap(j, j + 1);
                sign = -sign;
            }
        }
    }
    if v[0] == v[1] || v[1] == v[2] || v[2] == v[3] {
        0.0
    } else {
        sign
    }
}

/// Linear dependence of the real and imaginary parts of `β₁, β₂` against self-duality of b.
#[derive(Clone, Debug)]
pub struct SelfDualReport {
    /// Singular values of the `4 × 6` coefficient matrix, decreasing.
    pub singular_values: Vec<f64>,
    /// Numerical rank at relative threshold `tol`.
    pub rank: usize,
    /// Max anti-self-dual coefficient of b.
    pub b_asd: f64,
    /// `rank < 4`.
    pub dependent: bool,
    /// `b_asd < tol`.
    pub self_dual: bool,
    /// `dependent == self_dual`.
    pub agree: bool,
}

/// The four real forms `β₁+β̄₁, β₂+β̄₂, −i(β₁−β̄₁), −i(β₂−β̄₂)` are linearly
/// dependent exactly when b is self-dual for g, oriented by `ω₊² > 0`.
pub fn selfdual_b_test(beta1: &ComplexForm, beta2: &ComplexForm, bp: &BihermitianPoint, tol: f64) -> Result<SelfDualReport> {
    let forms = [
        beta1 + &beta1.conj(),
        beta2 + &beta2.conj(),
        (beta1 - &beta1.conj()).scale(-I),
        (beta2 - &beta2.conj()).scale(-I),
    ];
    let pairs = [(0usize, 1usize), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    let m = DMatrix::from_fn(4, 6, |r, c| C64::new(forms[r].coeff(&[pairs[c].0, pairs[c].1]).re, 0.0));
    let (sv, _) = svd_sorted(&m.transpose());
    let rank = sv.iter().filter(|&&x| x > tol * sv[0]).count();
    let orient = wedge(&bp.omega_plus, &bp.omega_plus)?.top().re.signum();
    let star_b = hodge_star(&bp.b, &bp.g, orient)?;
    let asd = (bp.b - star_b) * 0.5;
    let b_asd = max4(&asd);
    let dependent = rank < 4;
    let self_dual = b_asd < tol;
    Ok(SelfDualReport { singular_values: sv, rank, b_asd, dependent, self_dual, agree: dependent == self_dual })
}

/// Inputs for [`synthetic_betas`].
#[derive(Clone, Debug)]
pub struct SyntheticPoint {
    /// Any invertible matrix A; the metric is `AᵀA`.
    pub a: Matrix4<f64>,
    /// `b_ij`, antisymmetric.
    pub b: Matrix4<f64>,
    /// Angle function, `|p| < 1`.
    pub p: f64,
    /// Phase of γ.
    pub phase: f64,
}

/// The data behind a synthetic point: `g = AᵀA`, `I₊ = A⁻¹I₀A` with `I₀` standard.
pub fn synthetic_structure(a: &Matrix4<f64>) -> Result<(Matrix4<f64>, Matrix4<f64>)> {
    let ai = a.try_inverse().ok_or_else(|| Error::Singular("A".into()))?;
    Ok((a.transpose() * a, ai * standard_complex() * a))
}

/// The standard structure `Ie₀ = e₁`, `Ie₂ = e₃`.
pub fn standard_complex() -> Matrix4<f64> {
    let mut i0 = Matrix4::zeros();
    i0[(1, 0)] = 1.0;
    i0[(0, 1)] = -1.0;
    i0[(3, 2)] = 1.0;
    i0[(2, 3)] = -1.0;
    i0
}

/// Builds `β₁ = −b + iω₊ − (p−1)γ̄/2`, `β₂ = −b + iω₊ − (p+1)γ̄/2` with γ a
/// (2,0)-form scaled so that `ω₊² = (1−p²)γγ̄/8`. Extraction then returns b,
/// g, I₊ and p unchanged.
pub fn synthetic_betas(pt: &SyntheticPoint) -> Result<(ComplexForm, ComplexForm)> {
    if !(pt.p.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("|p| = {} must be < 1", pt.p.abs())));
    }
    let (g, ip) = synthetic_structure(&pt.a)?;
    let wp = form_of(&hermitian_matrix(&g, &ip));
    // (1,0)-forms of I₊ are pullbacks of dz₁, dz₂ by A.
    let dz = |k: usize| {
        let mut v = vec![C64::new(0.0, 0.0); 4];
        for (c, slot) in v.iter_mut().enumerate() {
            *slot = C64::new(pt.a[(2 * k, c)], 0.0) + I * pt.a[(2 * k + 1, c)];
        }
        ComplexForm::covector(&v)
    };
    let g0 = wedge(&dz(0), &dz(1))?;
    let ratio = wedge(&wp, &wp)?.top() / wedge(&g0, &g0.conj())?.top();
    let c = (8.0 * ratio.re / (1.0 - pt.p * pt.p)).sqrt();
    let gamma = g0.scale(C64::from_polar(c, pt.phase));
    let gbar = gamma.conj();
    let base = &form_of(&(-pt.b)) + &wp.scale(I);
    let b1 = &base - &(&gbar * ((pt.p - 1.0) / 2.0));
    let b2 = &base - &(&gbar * ((pt.p + 1.0) / 2.0));
    Ok((b1, b2))
}
