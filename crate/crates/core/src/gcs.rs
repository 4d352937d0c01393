//! Generalized complex structures at a point.
//!
//! A structure is stored as a real `2d × 2d` matrix acting on `T ⊕ T*` in the
//! block order (vectors, covectors). The +i eigenspace of the matrix built
//! from a spinor is always the annihilator of that spinor.
//!
//! Two-forms act on vectors by `X ↦ i_Xβ`; with `M_ij = β(eᵢ, eⱼ)` that map
//! has matrix `Mᵀ`, written `β̂` below.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::exterior::{clifford_act, power, ComplexForm, GeneralizedVector, C64};
use crate::linalg::{complexify, max_abs, max_abs_c, null_space, rank, svd_sorted};

/// Relative singular-value threshold for annihilator null spaces.
pub const NULL_TOL: f64 = 1e-9;

/// Tolerance for `J² = −1` and `JᵀQJ = Q` on construction.
pub const STRUCTURE_TOL: f64 = 1e-10;

/// The matrix of the neutral pairing, `(A, B) = Aᵀ Q B` with
/// `Q = ½[[0, −1], [−1, 0]]`.
pub fn pairing_matrix(dim: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(2 * dim, 2 * dim);
    for i in 0..dim {
        q[(i, dim + i)] = -0.5;
        q[(dim + i, i)] = -0.5;
    }
    q
}

/// The map `X ↦ i_Xβ` of a 2-form, as a `d × d` matrix.
pub fn hat(beta: &ComplexForm) -> DMatrix<C64> {
    beta.to_matrix().transpose()
}

/// A real orthogonal complex structure on `T ⊕ T*`.
#[derive(Clone, Debug, PartialEq)]
pub struct GCStructure {
    dim: usize,
    mat: DMatrix<f64>,
}

impl GCStructure {
    /// Validates `J² = −1` and orthogonality for the neutral pairing.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(mat, STRUCTURE_TOL)
    }

    /// As [`GCStructure::new`] with a tolerance relative to `‖J‖²`.
    pub fn with_tolerance(mat: DMatrix<f64>, tol: f64) -> Result<Self> {
        if mat.nrows() != mat.ncols() || mat.nrows() % 2 != 0 {
            return Err(Error::NotGeneralizedComplex(format!("shape {}×{}", mat.nrows(), mat.ncols())));
        }
        let j = Self { dim: mat.nrows() / 2, mat };
        let scale = max_abs(&j.mat).powi(2).max(1.0);
        let sq = j.square_residual();
        let orth = j.orthogonality_residual();
        if sq > tol * scale || orth > tol * scale {
            return Err(Error::NotGeneralizedComplex(format!("‖J²+1‖ = {sq:.3e}, ‖JᵀQJ−Q‖ = {orth:.3e}")));
        }
        Ok(j)
    }

    pub(crate) fn from_raw(mat: DMatrix<f64>) -> Self {
        Self { dim: mat.nrows() / 2, mat }
    }

    /// Real dimension of the underlying manifold.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The `2d × 2d` matrix.
    pub fn mat(&self) -> &DMatrix<f64> {
        &self.mat
    }

    /// `‖J² + 1‖∞`.
    pub fn square_residual(&self) -> f64 {
        let n = 2 * self.dim;
        max_abs(&(&self.mat * &self.mat + DMatrix::identity(n, n)))
    }

    /// `‖JᵀQJ − Q‖∞`.
    pub fn orthogonality_residual(&self) -> f64 {
        let q = pairing_matrix(self.dim);
        max_abs(&(self.mat.transpose() * &q * &self.mat - q))
    }

    /// The `T* → T` block, the real Poisson bivector of the structure.
    pub fn poisson_block(&self) -> DMatrix<f64> {
        self.mat.view((0, self.dim), (self.dim, self.dim)).into_owned()
    }

    /// Columns spanning the +i eigenspace.
    pub fn plus_eigenspace(&self) -> DMatrix<C64> {
        let n = 2 * self.dim;
        let shifted = complexify(&self.mat) - DMatrix::identity(n, n) * C64::new(0.0, 1.0);
        null_space(&shifted, 1e-8)
    }
}

/// A basis of the annihilator `E = {A : A·ρ = 0}`.
#[derive(Clone, Debug)]
pub struct AnnihilatorBasis {
    dim: usize,
    basis: Vec<GeneralizedVector>,
}

impl AnnihilatorBasis {
    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The basis vectors of E.
    pub fn basis(&self) -> &[GeneralizedVector] {
        &self.basis
    }

    /// Basis as the columns of a `2d × d` matrix.
    pub fn matrix(&self) -> DMatrix<C64> {
        let cols: Vec<_> = self.basis.iter().map(|a| nalgebra::DVector::from_vec(a.stacked())).collect();
        DMatrix::from_columns(&cols)
    }
}

/// The linear map `A ↦ A·ρ` as a `2^d × 2d` matrix, columns ordered e₀…, dx₀….
pub fn clifford_matrix(rho: &ComplexForm) -> DMatrix<C64> {
    let d = rho.dim();
    let mut m = DMatrix::from_element(1 << d, 2 * d, C64::new(0.0, 0.0));
    for k in 0..2 * d {
        let mut col = vec![C64::new(0.0, 0.0); 2 * d];
        col[k] = C64::new(1.0, 0.0);
        let a = GeneralizedVector::from_stacked(&col);
        let img = clifford_act(&a, rho).expect("dimensions agree by construction");
        for (r, c) in img.coeffs().iter().enumerate() {
            m[(r, k)] = *c;
        }
    }
    m
}

/// Annihilator of a pure spinor, by SVD null space.
///
/// `NotPure` if the null space does not have dimension d; `Degenerate` if it
/// meets its own conjugate. The constant spinor 1 is annihilated by every
/// vector, so it is rejected as degenerate.
pub fn annihilator(rho: &ComplexForm) -> Result<AnnihilatorBasis> {
    let d = rho.dim();
    let scale = rho.norm_max();
    if scale == 0.0 {
        return Err(Error::NotPure { found: 2 * d, expected: d });
    }
    let m = clifford_matrix(&rho.scale(C64::new(1.0 / scale, 0.0)));
    let null = null_space(&m, NULL_TOL);
    if null.ncols() != d {
        return Err(Error::NotPure { found: null.ncols(), expected: d });
    }
    let stacked = DMatrix::from_fn(2 * d, 2 * d, |r, c| if c < d { null[(r, c)] } else { null[(r, c - d)].conj() });
    if rank(&stacked, NULL_TOL) < 2 * d {
        return Err(Error::Degenerate);
    }
    let basis = (0..d).map(|c| GeneralizedVector::from_stacked(null.column(c).as_slice())).collect();
    Ok(AnnihilatorBasis { dim: d, basis })
}

/// Assembles the real structure that is `+i` on the columns of `e` and `−i` on their conjugates.
fn structure_from_eigenspace(e: &DMatrix<C64>) -> Result<GCStructure> {
    let n = e.nrows();
    let d = e.ncols();
    let v = DMatrix::from_fn(n, n, |r, c| if c < d { e[(r, c)] } else { e[(r, c - d)].conj() });
    let vinv = v.clone().try_inverse().ok_or(Error::Degenerate)?;
    let diag = DMatrix::from_fn(n, n, |r, c| match (r == c, r < d) {
        (true, true) => C64::new(0.0, 1.0),
        (true, false) => C64::new(0.0, -1.0),
        _ => C64::new(0.0, 0.0),
    });
    let jc = &v * diag * vinv;
    let scale = max_abs_c(&jc).max(1.0);
    let imag = jc.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
    if imag > 1e-8 * scale {
        return Err(Error::NotGeneralizedComplex(format!("imaginary residue {imag:.3e}")));
    }
    GCStructure::with_tolerance(jc.map(|z| z.re), 1e-8)
}

/// The structure whose +i eigenspace is `Ann(ρ)`.
pub fn j_from_spinor(rho: &ComplexForm) -> Result<GCStructure> {
    let e = annihilator(rho)?;
    structure_from_eigenspace(&e.matrix())
}

/// Closed form of `j_from_spinor(exp β)` for `β = B + iω` with ω nondegenerate:
/// `J = e^{−B} [[0, −ω̂⁻¹], [ω̂, 0]] e^{B}`, where `e^{B}(X + ξ) = X + ξ + B̂X`.
///
/// ```
/// use genkahler::exterior::{ComplexForm, exp_two_form, C64};
/// use genkahler::gcs::{j_from_spinor, j_from_two_form};
///
/// let w = ComplexForm::basis(4, &[0, 1]).unwrap() + ComplexForm::basis(4, &[2, 3]).unwrap();
/// let beta = ComplexForm::basis(4, &[0, 2]).unwrap() * 0.3 + w.scale(C64::new(0.0, 1.0));
/// let a = j_from_two_form(&beta).unwrap();
/// let b = j_from_spinor(&exp_two_form(&beta).unwrap()).unwrap();
/// assert!((a.mat() - b.mat()).amax() < 1e-10);
/// ```
pub fn j_from_two_form(beta: &ComplexForm) -> Result<GCStructure> {
    if !beta.is_homogeneous(2, 0.0) {
        return Err(Error::NotDegreeTwo);
    }
    let d = beta.dim();
    let bh = hat(beta);
    let b = bh.map(|z| z.re);
    let w = bh.map(|z| z.im);
    let winv = w.clone().try_inverse().ok_or(Error::DegenerateImaginaryPart)?;
    if max_abs(&(&w * &winv - DMatrix::identity(d, d))) > 1e-8 {
        return Err(Error::DegenerateImaginaryPart);
    }
    // e^{−B} J_ω e^{B} written out blockwise.
    let mut j = DMatrix::zeros(2 * d, 2 * d);
    let tl = -&winv * &b;
    let tr = -&winv;
    let bl = &w + &b * &winv * &b;
    let br = &b * &winv;
    j.view_mut((0, 0), (d, d)).copy_from(&tl);
    j.view_mut((0, d), (d, d)).copy_from(&tr);
    j.view_mut((d, 0), (d, d)).copy_from(&bl);
    j.view_mut((d, d), (d, d)).copy_from(&br);
    Ok(GCStructure::from_raw(j))
}

fn check_complex_structure(i: &DMatrix<f64>) -> Result<()> {
    let n = i.nrows();
    if i.ncols() != n || n % 2 != 0 {
        return Err(Error::NotAlmostComplex { residual: f64::INFINITY });
    }
    let residual = max_abs(&(i * i + DMatrix::identity(n, n)));
    if residual > STRUCTURE_TOL * max_abs(i).powi(2).max(1.0) {
        return Err(Error::NotAlmostComplex { residual });
    }
    Ok(())
}

/// `J = diag(I, −Iᵀ)`; its +i eigenspace is spanned by the `(1,0)` vectors and `(0,1)` forms.
pub fn j_from_complex(i: &DMatrix<f64>) -> Result<GCStructure> {
    check_complex_structure(i)?;
    let d = i.nrows();
    let mut j = DMatrix::zeros(2 * d, 2 * d);
    j.view_mut((0, 0), (d, d)).copy_from(i);
    j.view_mut((d, d), (d, d)).copy_from(&(-i.transpose()));
    Ok(GCStructure::from_raw(j))
}

/// Complex linear coordinates adapted to a complex structure.
///
/// The real basis is `(a₁, Ia₁, a₂, Ia₂, …)` with each `aⱼ` the first standard
/// basis vector outside the span so far; `∂/∂zⱼ = (aⱼ − iIaⱼ)/2` and `dzⱼ` is the
/// dual (1,0)-form. For the standard structure `Ie₂ⱼ = e₂ⱼ₊₁` these are the usual
/// `zⱼ = x₂ⱼ + i x₂ⱼ₊₁`.
#[derive(Clone, Debug)]
pub struct HolomorphicFrame {
    /// Columns `∂/∂zⱼ`, `d × n`.
    pub vectors: DMatrix<C64>,
    /// Rows `dzⱼ`, `n × d`.
    pub forms: DMatrix<C64>,
}

/// See [`HolomorphicFrame`].
pub fn holomorphic_frame(i: &DMatrix<f64>) -> Result<HolomorphicFrame> {
    check_complex_structure(i)?;
    let d = i.nrows();
    let n = d / 2;
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(d);
    for k in 0..d {
        if basis.len() == d {
            break;
        }
        let mut a = nalgebra::DVector::zeros(d);
        a[k] = 1.0;
        let ia = i * &a;
        let mut trial = basis.clone();
        trial.push(a.clone());
        trial.push(ia.clone());
        let m = DMatrix::from_columns(&trial);
        if m.rank(1e-9) == trial.len() {
            basis = trial;
        }
    }
    let p = DMatrix::from_columns(&basis);
    let pinv = p.clone().try_inverse().ok_or(Error::NotAlmostComplex { residual: f64::INFINITY })?;
    let half = C64::new(0.5, 0.0);
    let iu = C64::new(0.0, 1.0);
    let vectors = DMatrix::from_fn(d, n, |r, j| (C64::new(p[(r, 2 * j)], 0.0) - iu * p[(r, 2 * j + 1)]) * half);
    let forms = DMatrix::from_fn(n, d, |j, c| C64::new(pinv[(2 * j, c)], 0.0) + iu * pinv[(2 * j + 1, c)]);
    Ok(HolomorphicFrame { vectors, forms })
}

/// The structure with +i eigenspace
/// `E = span{∂/∂zⱼ, dz̄ₖ + Σₗ σ̄^{kℓ} ∂/∂z̄ₗ}` for `σ = Σ_{k<ℓ} σ^{kℓ} ∂/∂zₖ∧∂/∂zₗ`
/// in the coordinates of [`holomorphic_frame`]. `sigma` is the full
/// antisymmetric coefficient matrix.
pub fn j_from_poisson(i: &DMatrix<f64>, sigma: &DMatrix<C64>) -> Result<GCStructure> {
    let frame = holomorphic_frame(i)?;
    let d = i.nrows();
    let n = d / 2;
    if sigma.nrows() != n || sigma.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: sigma.nrows() });
    }
    let residual = max_abs_c(&(sigma + sigma.transpose()));
    if residual > 1e-12 * max_abs_c(sigma).max(1.0) {
        return Err(Error::NotAntisymmetric { residual });
    }
    let mut e = DMatrix::from_element(2 * d, d, C64::new(0.0, 0.0));
    for j in 0..n {
        for r in 0..d {
            e[(r, j)] = frame.vectors[(r, j)];
        }
    }
    for k in 0..n {
        for r in 0..d {
            let mut v = C64::new(0.0, 0.0);
            for l in 0..n {
                v += sigma[(k, l)].conj() * frame.vectors[(r, l)].conj();
            }
            e[(r, n + k)] = v;
            e[(d + r, n + k)] = frame.forms[(k, r)].conj();
        }
    }
    structure_from_eigenspace(&e)
}

/// The Hermitian form `h(X, Y) = (β₂ − β̄₂)(X, Ȳ)` on the kernel of `β₁ − β₂`,
/// in coordinates rescaled so that every row of both forms has unit size.
#[derive(Clone, Debug)]
pub struct DefinitenessForm {
    /// Orthonormal kernel basis in the rescaled coordinates, as columns.
    pub kernel: DMatrix<C64>,
    /// The Hermitian matrix of the form on that basis.
    pub matrix: DMatrix<C64>,
    /// Eigenvalues in increasing order.
    pub eigenvalues: Vec<f64>,
    /// Largest coefficient of `β₂ − β̄₂` in the rescaled coordinates.
    pub scale: f64,
}

impl DefinitenessForm {
    /// `+1`, `−1`, or `0` for indefinite or degenerate, using eigenvalues scaled
    /// by `scale` against `tol`.
    pub fn sign(&self, scale: f64, tol: f64) -> i8 {
        let s = scale.max(f64::MIN_POSITIVE);
        if self.eigenvalues.is_empty() {
            0
        } else if self.eigenvalues.iter().all(|&x| x / s > tol) {
            1
        } else if self.eigenvalues.iter().all(|&x| x / s < -tol) {
            -1
        } else {
            0
        }
    }
}

/// See [`DefinitenessForm`]. The kernel is taken at the expected dimension
/// `d/2`, using the smallest singular directions.
pub fn definiteness_form(beta1: &ComplexForm, beta2: &ComplexForm) -> Result<DefinitenessForm> {
    let d = beta1.dim();
    if beta2.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: beta2.dim() });
    }
    // Rescaling the coordinates is a congruence and keeps the signature; it
    // removes the spread of coefficient sizes that comes from the coframe.
    let a0 = (beta1 - beta2).to_matrix();
    let m0 = (beta2 - &beta2.conj()).to_matrix();
    let s: Vec<f64> = (0..d)
        .map(|i| {
            let row = (0..d).fold(0.0f64, |m, j| m.max(a0[(i, j)].norm()).max(m0[(i, j)].norm()));
            if row > 0.0 {
                row.sqrt().recip()
            } else {
                1.0
            }
        })
        .collect();
    let alpha = DMatrix::from_fn(d, d, |i, j| a0[(i, j)] * (s[i] * s[j]));
    let m2 = DMatrix::from_fn(d, d, |i, j| m0[(i, j)] * (s[i] * s[j]));
    let scale = m2.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let (_, v) = svd_sorted(&alpha);
    let kdim = d / 2;
    let kernel = v.columns(d - kdim, kdim).into_owned();
    let matrix = kernel.transpose() * &m2 * kernel.map(|z| z.conj());
    let herm = (&matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(herm).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    Ok(DefinitenessForm { kernel, matrix, eigenvalues, scale })
}

/// Outcome of [`lemma1_check`].
#[derive(Clone, Debug)]
pub struct PairReport {
    /// `‖(β₁−β₂)^{k+1}‖`, absolute.
    pub same_top: f64,
    /// `‖(β₁−β̄₂)^{k+1}‖`, absolute.
    pub conj_top: f64,
    /// `‖(β₁−β₂)^k‖`.
    pub same_k: f64,
    /// `‖(β₁−β̄₂)^k‖`.
    pub conj_k: f64,
    /// `same_top` divided by `‖β₁−β₂‖^{k+1}`.
    pub same_top_rel: f64,
    /// `conj_top` divided by `‖β₁−β̄₂‖^{k+1}`.
    pub conj_top_rel: f64,
    /// `‖J₁J₂ − J₂J₁‖∞`.
    pub commutator: f64,
    /// Commutator divided by `‖J₁‖‖J₂‖`.
    pub commutator_rel: f64,
    /// Eigenvalues of the definiteness form divided by its [`DefinitenessForm::scale`].
    pub definiteness: Vec<f64>,
    /// Sign of the definiteness form (0 when indefinite).
    pub sign: i8,
    /// Hypotheses hold, structures commute, form definite.
    pub pass: bool,
}

/// Tests the commuting-pair hypotheses for `exp β₁`, `exp β₂` on ℝ^{4k}.
///
/// Relative residuals are compared with `tol`; a power counts as nonvanishing
/// when its relative size exceeds `1e−6`. The structures come from
/// [`j_from_two_form`], which agrees with [`j_from_spinor`] on these inputs and
/// stays accurate when the coefficients are large.
pub fn lemma1_check(beta1: &ComplexForm, beta2: &ComplexForm, k: usize, tol: f64) -> Result<PairReport> {
    let d = beta1.dim();
    if beta2.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: beta2.dim() });
    }
    if d != 4 * k {
        return Err(Error::InvalidParameter(format!("dimension {d} is not 4k for k = {k}")));
    }
    let j1 = j_from_two_form(beta1)?;
    let j2 = j_from_two_form(beta2)?;
    let same = beta1 - beta2;
    let conj = beta1 - &beta2.conj();
    let rel = |x: f64, base: &ComplexForm, p: usize| x / base.norm_max().powi(p as i32).max(f64::MIN_POSITIVE);
    let same_top = power(&same, k + 1)?.norm_max();
    let conj_top = power(&conj, k + 1)?.norm_max();
    let same_k = power(&same, k)?.norm_max();
    let conj_k = power(&conj, k)?.norm_max();
    let same_top_rel = rel(same_top, &same, k + 1);
    let conj_top_rel = rel(conj_top, &conj, k + 1);
    let nonvanishing = rel(same_k, &same, k) > 1e-6 && rel(conj_k, &conj, k) > 1e-6;
    let comm = j1.mat() * j2.mat() - j2.mat() * j1.mat();
    let commutator = max_abs(&comm);
    let commutator_rel = commutator / (max_abs(j1.mat()) * max_abs(j2.mat()));
    let (definiteness, sign) = if nonvanishing {
        let form = definiteness_form(beta1, beta2)?;
        let sign = form.sign(form.scale, 256.0 * f64::EPSILON);
        (form.eigenvalues.iter().map(|x| x / form.scale).collect(), sign)
    } else {
        (Vec::new(), 0)
    };
    let pass = same_top_rel < tol && conj_top_rel < tol && nonvanishing && commutator_rel < tol && sign != 0;
    Ok(PairReport {
        same_top,
        conj_top,
        same_k,
        conj_k,
        same_top_rel,
        conj_top_rel,
        commutator,
        commutator_rel,
        definiteness,
        sign,
        pass,
    })
}
