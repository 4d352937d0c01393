//! The SU(2)-invariant ansatz on ℂ²∖{0}.
//!
//! Pointwise everything lives in the coframe `e₀ = dr/r, e₁ = σ₁, e₂ = σ₂,
//! e₃ = σ₃`, with `v₁ = e₀ + ie₁` and `v₂ = e₂ + ie₃`. Forms whose
//! coefficients depend on r are carried as [`FrameJet`]s: a stack of the
//! coefficient form and its r-derivatives, written over the abstract
//! generators `(v₁, v₂, v̄₁, v̄₂)`.
//!
//! Radial profiles start from a potential `L(r)` or from a Kähler metric
//! `H₂₂(r)`, both given as functions on third-order dual numbers so that every
//! derivative the closedness equations need is exact.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_dual::{Dual3_64, DualNum};

use crate::biherm::extract_from_betas;
use crate::error::{Error, Result};
use crate::exterior::{wedge, ComplexForm, C64};

// ---------------------------------------------------------------- jets

/// Value and first three r-derivatives of a real function, `order` of them valid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    d: [f64; 4],
    order: usize,
}

const BINOM: [[f64; 4]; 4] = [[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0], [1.0, 3.0, 3.0, 1.0]];

impl Jet {
    /// `d[k]` is the k-th derivative.
    pub fn new(d: [f64; 4], order: usize) -> Self {
        assert!(order <= 3);
        Self { d, order }
    }

    /// A constant, exact to every order.
    pub fn constant(c: f64) -> Self {
        Self { d: [c, 0.0, 0.0, 0.0], order: 3 }
    }

    /// The coordinate r itself.
    pub fn variable(r: f64) -> Self {
        Self { d: [r, 1.0, 0.0, 0.0], order: 3 }
    }

    pub fn from_dual3(x: Dual3_64) -> Self {
        Self { d: [x.re, x.v1, x.v2, x.v3], order: 3 }
    }

    pub fn value(&self) -> f64 {
        self.d[0]
    }

    /// k-th derivative; panics past the valid order.
    pub fn deriv(&self, k: usize) -> f64 {
        assert!(k <= self.order, "derivative {k} beyond jet order {}", self.order);
        self.d[k]
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// The jet of the derivative, one order shorter.
    pub fn derivative(&self) -> Self {
        assert!(self.order >= 1, "cannot differentiate an order-0 jet");
        Self { d: [self.d[1], self.d[2], self.d[3], 0.0], order: self.order - 1 }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { d: self.d.map(|x| x * s), order: self.order }
    }

    /// `g ∘ self` given `g, g′, g″, g‴` at the value.
    fn compose(&self, g: [f64; 4]) -> Self {
        let [_, f1, f2, f3] = self.d;
        Self {
            d: [g[0], g[1] * f1, g[2] * f1 * f1 + g[1] * f2, g[3] * f1 * f1 * f1 + 3.0 * g[2] * f1 * f2 + g[1] * f3],
            order: self.order,
        }
    }

    pub fn recip(&self) -> Self {
        let x = self.d[0];
        self.compose([1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x), -6.0 / (x * x * x * x)])
    }

    pub fn sqrt(&self) -> Self {
        let s = self.d[0].sqrt();
        self.compose([s, 0.5 / s, -0.25 / (s * self.d[0]), 0.375 / (s * self.d[0] * self.d[0])])
    }

    pub fn powi(&self, n: i32) -> Self {
        let x = self.d[0];
        let nf = f64::from(n);
        self.compose([
            x.powi(n),
            nf * x.powi(n - 1),
            nf * (nf - 1.0) * x.powi(n - 2),
            nf * (nf - 1.0) * (nf - 2.0) * x.powi(n - 3),
        ])
    }
}

impl std::ops::Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet { d: [0, 1, 2, 3].map(|k| self.d[k] + o.d[k]), order: self.order.min(o.order) }
    }
}

impl std::ops::Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet { d: [0, 1, 2, 3].map(|k| self.d[k] - o.d[k]), order: self.order.min(o.order) }
    }
}

impl std::ops::Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl std::ops::Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut d = [0.0; 4];
        for (n, slot) in d.iter_mut().enumerate() {
            for k in 0..=n {
                *slot += BINOM[n][k] * self.d[k] * o.d[n - k];
            }
        }
        Jet { d, order: self.order.min(o.order) }
    }
}

impl std::ops::Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, c: f64) -> Jet {
        self.d[0] += c;
        self
    }
}

// ---------------------------------------------------------------- frame calculus

/// Bit of `v₁` in a frame word.
pub const V1: usize = 0b0001;
/// Bit of `v₂`.
pub const V2: usize = 0b0010;
/// Bit of `v̄₁`.
pub const V1B: usize = 0b0100;
/// Bit of `v̄₂`.
pub const V2B: usize = 0b1000;

fn gen(bit: usize) -> ComplexForm {
    let mut f = ComplexForm::zero(4);
    f.set(&[bit.trailing_zeros() as usize], C64::new(1.0, 0.0)).expect("generator");
    f
}

/// The monomial `g_{a} ∧ g_{b} ∧ …` over the frame generators, e.g. `word(&[V1, V2B])`.
pub fn word(bits: &[usize]) -> ComplexForm {
    let mut out = ComplexForm::one(4);
    for &b in bits {
        out = wedge(&out, &gen(b)).expect("dim 4");
    }
    out
}

/// `d` of each generator: `dv₁ = −v₂v̄₂`, `dv₂ = (v₁ − v̄₁)v₂`, and conjugates.
fn d_generator(bit: usize) -> ComplexForm {
    match bit {
        V1 => -word(&[V2, V2B]),
        V2 => word(&[V1, V2]) - word(&[V1B, V2]),
        V1B => word(&[V2, V2B]),
        V2B => word(&[V1B, V2B]) - word(&[V1, V2B]),
        _ => unreachable!(),
    }
}

/// Image under `v ↦ v̄` on words, with complex conjugation of coefficients.
fn conj_generators(f: &ComplexForm) -> ComplexForm {
    let mut out = ComplexForm::zero(4);
    for (idx, c) in f.terms() {
        let mut w = ComplexForm::scalar(4, c.conj());
        for i in idx {
            let swapped = match 1usize << i {
                V1 => V1B,
                V2 => V2B,
                V1B => V1,
                _ => V2,
            };
            w = wedge(&w, &gen(swapped)).expect("dim 4");
        }
        out += &w;
    }
    out
}

/// Applies the structure equations to every word: the constant-coefficient part of `d`.
fn structure_d(f: &ComplexForm) -> ComplexForm {
    let mut out = ComplexForm::zero(4);
    for (idx, c) in f.terms() {
        for j in 0..idx.len() {
            let mut w = ComplexForm::scalar(4, c * if j % 2 == 0 { 1.0 } else { -1.0 });
            for (k, &i) in idx.iter().enumerate() {
                let piece = if k == j { d_generator(1 << i) } else { gen(1 << i) };
                w = wedge(&w, &piece).expect("dim 4");
            }
            out += &w;
        }
    }
    out
}

/// A frame form at radius r together with r-derivatives of its coefficients.
#[derive(Clone, PartialEq)]
pub struct FrameJet {
    r: f64,
    levels: Vec<ComplexForm>,
}

impl fmt::Debug for FrameJet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrameJet").field("r", &self.r).field("value", &self.levels[0]).field("order", &self.order()).finish()
    }
}

impl FrameJet {
    /// `levels[k]` holds the k-th r-derivative of every coefficient.
    pub fn new(r: f64, levels: Vec<ComplexForm>) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::InvalidParameter(format!("radius {r} must be positive")));
        }
        if levels.is_empty() {
            return Err(Error::InvalidParameter("empty jet".into()));
        }
        for l in &levels {
            if l.dim() != 4 {
                return Err(Error::DimensionMismatch { expected: 4, found: l.dim() });
            }
        }
        Ok(Self { r, levels })
    }

    /// A form whose coefficients are `Σ cₖ(r)·word` with the given real jets.
    pub fn from_jets(r: f64, terms: &[(ComplexForm, C64, Jet)]) -> Result<Self> {
        let order = terms.iter().map(|t| t.2.order()).min().unwrap_or(3);
        let levels = (0..=order)
            .map(|k| {
                let mut f = ComplexForm::zero(4);
                for (w, scale, j) in terms {
                    f += &w.scale(*scale * j.deriv(k));
                }
                f
            })
            .collect();
        Self::new(r, levels)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Number of coefficient derivatives carried.
    pub fn order(&self) -> usize {
        self.levels.len() - 1
    }

    /// Coefficient form at r over `(v₁, v₂, v̄₁, v̄₂)`.
    pub fn value(&self) -> &ComplexForm {
        &self.levels[0]
    }

    pub fn level(&self, k: usize) -> &ComplexForm {
        &self.levels[k]
    }

    /// Coefficient of a word, e.g. `coeff(&[V1, V1B, V2B])`.
    pub fn coeff(&self, bits: &[usize]) -> C64 {
        let w = word(bits);
        let (idx, sign) = w.terms().next().expect("nonzero word");
        self.levels[0].coeff(&idx) * sign
    }

    /// Complex conjugate: coefficients conjugated and `vᵢ ↔ v̄ᵢ`.
    pub fn conj(&self) -> FrameJet {
        FrameJet { r: self.r, levels: self.levels.iter().map(conj_generators).collect() }
    }

    /// `‖f − f̄‖` at r; zero exactly when the form is real.
    pub fn reality_residual(&self) -> f64 {
        (&self.levels[0] - &conj_generators(&self.levels[0])).norm_max()
    }

    /// The form in the real coframe `(dr/r, σ₁, σ₂, σ₃)`.
    pub fn to_real(&self) -> ComplexForm {
        to_real_basis(&self.levels[0])
    }
}

/// Rewrites a form over `(v₁, v₂, v̄₁, v̄₂)` in the real coframe.
pub fn to_real_basis(f: &ComplexForm) -> ComplexForm {
    let i = C64::new(0.0, 1.0);
    let one = C64::new(1.0, 0.0);
    let z = C64::new(0.0, 0.0);
    let gens = [
        ComplexForm::covector(&[one, i, z, z]),
        ComplexForm::covector(&[z, z, one, i]),
        ComplexForm::covector(&[one, -i, z, z]),
        ComplexForm::covector(&[z, z, one, -i]),
    ];
    let mut out = ComplexForm::zero(4);
    for (idx, c) in f.terms() {
        let mut w = ComplexForm::scalar(4, c);
        for k in idx {
            w = wedge(&w, &gens[k]).expect("dim 4");
        }
        out += &w;
    }
    out
}

/// Exterior derivative at r: `df = f′·(r/2)(v₁ + v̄₁)` on coefficients plus
/// the structure equations on words. The result carries one derivative fewer.
pub fn frame_d(f: &FrameJet) -> Result<FrameJet> {
    if f.order() == 0 {
        return Err(Error::InvalidParameter("frame_d needs a coefficient derivative".into()));
    }
    let dr = &gen(V1) + &gen(V1B);
    let levels = (0..f.order())
        .map(|n| {
            let radial = &f.levels[n + 1] * (f.r / 2.0) + &f.levels[n] * (n as f64 / 2.0);
            &wedge(&dr, &radial).expect("dim 4") + &structure_d(&f.levels[n])
        })
        .collect();
    FrameJet::new(f.r, levels)
}

/// A frame form with coefficients given as functions of r.
#[derive(Clone)]
pub struct FrameForm {
    eval: Arc<dyn Fn(f64) -> FrameJet + Send + Sync>,
}

impl fmt::Debug for FrameForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FrameForm")
    }
}

impl FrameForm {
    /// `Σ cₖ(r)·wordₖ` with coefficients on dual numbers.
    pub fn from_terms(terms: Vec<(ComplexForm, C64, RadialFn)>) -> Self {
        let eval = move |r: f64| {
            let x = Dual3_64::from_re(r).derivative();
            let jets: Vec<(ComplexForm, C64, Jet)> =
                terms.iter().map(|(w, s, f)| (w.clone(), *s, Jet::from_dual3(f(x)))).collect();
            FrameJet::from_jets(r, &jets).expect("valid radius")
        };
        Self { eval: Arc::new(eval) }
    }

    pub fn eval(&self, r: f64) -> Result<FrameJet> {
        if !(r > 0.0) {
            return Err(Error::InvalidParameter(format!("radius {r} must be positive")));
        }
        Ok((self.eval)(r))
    }

    /// The exterior derivative, evaluated lazily.
    pub fn d(&self) -> FrameForm {
        let inner = self.eval.clone();
        Self { eval: Arc::new(move |r| frame_d(&inner(r)).expect("order ≥ 1")) }
    }
}

// ---------------------------------------------------------------- profiles

/// A radial function on third-order dual numbers.
pub type RadialFn = Arc<dyn Fn(Dual3_64) -> Dual3_64 + Send + Sync>;

/// Integration constants. Only `b` and `c` enter the formulas in terms of L;
/// `a` and `a′` are the lower limits absorbed into L and into b.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Constants {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub c: f64,
}

/// Radial data `H_ij, λ, L` on a grid, for the deformation parameter t.
#[derive(Clone)]
pub struct RadialProfile {
    pub name: String,
    pub grid: Vec<f64>,
    pub consts: Constants,
    pub t: f64,
    potential: RadialFn,
    kahler: Option<RadialFn>,
}

impl fmt::Debug for RadialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialProfile")
            .field("name", &self.name)
            .field("points", &self.grid.len())
            .field("range", &(self.grid.first(), self.grid.last()))
            .field("consts", &self.consts)
            .field("t", &self.t)
            .finish()
    }
}

/// All radial functions at one radius, with derivatives.
#[derive(Clone, Copy, Debug)]
pub struct RadialPoint {
    pub r: f64,
    pub t: f64,
    pub l: Jet,
    pub lambda: Jet,
    pub h11: Jet,
    pub h12: Jet,
    pub h21: Jet,
    pub h22: Jet,
}

/// Log-uniform grid.
pub fn log_grid(min: f64, max: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && min > 0.0 && max > min);
    let (a, b) = (min.ln(), max.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Default grid: 200 log-uniform points on `[1e−3, 1e3]`.
pub fn default_grid() -> Vec<f64> {
    log_grid(1e-3, 1e3, 200)
}

fn point_from_potential(l: Jet, r: f64, t: f64, consts: &Constants) -> Result<RadialPoint> {
    let rr = Jet::variable(r);
    let ri = rr.recip();
    let r2i = ri * ri;
    let r4i = r2i * r2i;
    let lp = l.derivative();
    let lambda = lp * ri;
    let h12 = (rr * lp - l.scale(4.0)) * r2i;
    let h21 = (-(rr * lp) + l.scale(4.0) + consts.b) * r2i;
    let rad = (l * l).scale(16.0) * r4i + l.scale(4.0 * consts.b) * r4i - l.scale(4.0 / t) + consts.c;
    if !(rad.value() > 0.0) {
        return Err(Error::NegativeRadicand { r, value: rad.value() });
    }
    let h22 = rad.sqrt();
    let h11 = rr * h22.derivative().scale(0.5);
    Ok(RadialPoint { r, t, l, lambda, h11, h12, h21, h22 })
}

/// `L` from a Kähler `H₂₂` on the branch making `L ≤ 0` when `H₂₂² ≥ c`:
/// the root of `16L²/r⁴ + (4b/r⁴ − 4/t)L + c − H₂₂² = 0` that tends to 0 with `H₂₂² − c`.
fn potential_from_kahler(h22: RadialFn, b: f64, c: f64, t: f64) -> RadialFn {
    Arc::new(move |x: Dual3_64| {
        let h = h22(x);
        let x4 = x.powi(4);
        let q = h * h - Dual3_64::from_re(c);
        let bb = Dual3_64::from_re(4.0 / t) - x4.recip() * (4.0 * b);
        let disc = bb * bb + q * 64.0 / x4;
        -(q * 2.0) / (bb + disc.sqrt())
    })
}

fn kahler_from_potential(l: RadialFn, b: f64, c: f64, t: f64) -> RadialFn {
    Arc::new(move |x: Dual3_64| {
        let lv = l(x);
        let x4i = x.powi(4).recip();
        (lv * lv * 16.0 * x4i + lv * (4.0 * b) * x4i - lv * (4.0 / t) + Dual3_64::from_re(c)).sqrt()
    })
}

impl RadialProfile {
    fn build(name: String, grid: Vec<f64>, consts: Constants, t: f64, potential: RadialFn, kahler: Option<RadialFn>) -> Result<Self> {
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!("t = {t} must be positive")));
        }
        if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) || !(grid[0] > 0.0) {
            return Err(Error::InvalidParameter("grid must be positive and strictly increasing".into()));
        }
        let p = Self { name, grid, consts, t, potential, kahler };
        for &r in &p.grid {
            if let Some(h) = &p.kahler {
                let x = Dual3_64::from_re(r);
                let q = h(x).re.powi(2) - consts.c;
                let bb = 4.0 / t - 4.0 * consts.b / r.powi(4);
                let disc = bb * bb + 64.0 * q / r.powi(4);
                if !(disc >= 0.0) {
                    return Err(Error::NegativeRadicand { r, value: disc });
                }
                if !(bb + disc.sqrt() > 0.0) {
                    return Err(Error::SingularDenominator { r });
                }
            }
            let pt = p.point_unchecked(r)?;
            for (which, v) in [("H22", pt.h22.value()), ("H11", pt.h11.value())] {
                if !(v > 0.0) {
                    return Err(Error::NonPositiveH { r, which, value: v });
                }
            }
        }
        Ok(p)
    }

    fn point_unchecked(&self, r: f64) -> Result<RadialPoint> {
        let l = Jet::from_dual3((self.potential)(Dual3_64::from_re(r).derivative()));
        point_from_potential(l, r, self.t, &self.consts)
    }

    /// All radial functions at r, which must lie in the grid range.
    pub fn point(&self, r: f64) -> Result<RadialPoint> {
        let (min, max) = (self.grid[0], *self.grid.last().expect("nonempty"));
        if !(r >= min * (1.0 - 1e-12) && r <= max * (1.0 + 1e-12)) {
            return Err(Error::OutOfRange { r, min, max });
        }
        self.point_unchecked(r)
    }

    /// Every grid point.
    pub fn samples(&self) -> Vec<RadialPoint> {
        self.grid.iter().map(|&r| self.point_unchecked(r).expect("validated at construction")).collect()
    }

    /// The potential L as a dual-number function.
    pub fn potential(&self) -> RadialFn {
        self.potential.clone()
    }

    /// The Kähler coefficient `H₂₂` this profile was built from, or the one it
    /// determines through the quadratic constraint.
    pub fn kahler_h22(&self) -> RadialFn {
        match &self.kahler {
            Some(h) => h.clone(),
            None => kahler_from_potential(self.potential.clone(), self.consts.b, self.consts.c, self.t),
        }
    }

    pub fn min_r(&self) -> f64 {
        self.grid[0]
    }

    pub fn max_r(&self) -> f64 {
        *self.grid.last().expect("nonempty")
    }
}

/// Profile from a real potential `L` by quadrature: `λ = L′/r`,
/// `r²H₁₂ = rL′ − 4L`, `r²H₂₁ = −rL′ + 4L + b`,
/// `H₂₂² = 16L²/r⁴ + 4bL/r⁴ − 4L + c`, `H₁₁ = rH₂₂′/2`.
pub fn quadrature(l: RadialFn, consts: Constants, grid: Vec<f64>) -> Result<RadialProfile> {
    RadialProfile::build("potential".into(), grid, consts, 1.0, l, None)
}

/// Profile canonically attached to an SU(2)-invariant Kähler metric with
/// coefficient `H₂₂`, with `a = a′ = b = 0`.
pub fn from_kahler(h22: RadialFn, c: f64, grid: Vec<f64>) -> Result<RadialProfile> {
    from_kahler_t(h22, c, 1.0, grid)
}

fn from_kahler_t(h22: RadialFn, c: f64, t: f64, grid: Vec<f64>) -> Result<RadialProfile> {
    let consts = Constants { c, ..Constants::default() };
    let l = potential_from_kahler(h22.clone(), 0.0, c, t);
    RadialProfile::build("kahler".into(), grid, consts, t, l, Some(h22))
}

/// Replaces `β₁` by `β₁/t` keeping the Kähler data `H₁₁, H₂₂`; the constraint
/// becomes `det H = λ(λ − r²/t)`.
pub fn t_family(p: &RadialProfile, t: f64) -> Result<RadialProfile> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must lie in (0, 1]")));
    }
    if t == p.t {
        return Ok(p.clone());
    }
    let h22 = p.kahler_h22();
    let l = potential_from_kahler(h22.clone(), p.consts.b, p.consts.c, t);
    let mut out = RadialProfile::build(p.name.clone(), p.grid.clone(), p.consts, t, l, Some(h22))?;
    out.name = format!("{} (t = {t})", p.name);
    Ok(out)
}

/// `H₂₂ = r²/(1 + r²)`, `c = 0`.
pub fn fubini_study(grid: Vec<f64>) -> Result<RadialProfile> {
    let mut p = from_kahler(Arc::new(|x: Dual3_64| x * x / (x * x + 1.0)), 0.0, grid)?;
    p.name = "fubini-study".into();
    Ok(p)
}

/// `H₂₂ = r²`, `c = 0`: the flat metric on ℂ².
pub fn flat(grid: Vec<f64>) -> Result<RadialProfile> {
    let mut p = from_kahler(Arc::new(|x: Dual3_64| x * x), 0.0, grid)?;
    p.name = "flat".into();
    Ok(p)
}

/// `H₂₂ = (1 + 2r⁴)/(1 + r⁴)` with `c = H₂₂(0)² = 1`: H₁₁ ~ r⁴ at the origin.
pub fn hirzebruch(grid: Vec<f64>) -> Result<RadialProfile> {
    let mut p = from_kahler(
        Arc::new(|x: Dual3_64| {
            let x4 = x.powi(4);
            (x4 * 2.0 + 1.0) / (x4 + 1.0)
        }),
        1.0,
        grid,
    )?;
    p.name = "f2".into();
    Ok(p)
}

/// The polynomial potential `L = −r⁴` with all constants zero.
pub fn quartic(grid: Vec<f64>) -> Result<RadialProfile> {
    let mut p = quadrature(Arc::new(|x: Dual3_64| -x.powi(4)), Constants::default(), grid)?;
    p.name = "quartic".into();
    Ok(p)
}

/// Natural cubic spline of `H₂₂` in `ln r` through tabulated `(r, H₂₂)`.
pub fn table_h22(table: &[(f64, f64)]) -> Result<RadialFn> {
    let n = table.len();
    if n < 4 {
        return Err(Error::InterpolationDegenerate(format!("{n} table rows, need at least 4")));
    }
    if table.iter().any(|&(r, _)| !(r > 0.0)) || table.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::InterpolationDegenerate("radii must be positive and increasing".into()));
    }
    let u: Vec<f64> = table.iter().map(|&(r, _)| r.ln()).collect();
    let y: Vec<f64> = table.iter().map(|&(_, h)| h).collect();
    let h: Vec<f64> = u.windows(2).map(|w| w[1] - w[0]).collect();
    // Second derivatives with natural end conditions.
    let mut a = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    a[(0, 0)] = 1.0;
    a[(n - 1, n - 1)] = 1.0;
    for i in 1..n - 1 {
        a[(i, i - 1)] = h[i - 1];
        a[(i, i)] = 2.0 * (h[i - 1] + h[i]);
        a[(i, i + 1)] = h[i];
        rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
    }
    let m = a.lu().solve(&rhs).ok_or_else(|| Error::InterpolationDegenerate("spline system".into()))?;
    let m: Vec<f64> = m.iter().copied().collect();
    Ok(Arc::new(move |x: Dual3_64| {
        let ux = x.ln();
        let k = match u.iter().position(|&v| v > ux.re) {
            Some(0) => 0,
            Some(j) => j - 1,
            None => n - 2,
        };
        let hk = h[k];
        let s = ux - u[k];
        let c3 = (m[k + 1] - m[k]) / (6.0 * hk);
        let c2 = m[k] / 2.0;
        let c1 = (y[k + 1] - y[k]) / hk - hk * (2.0 * m[k] + m[k + 1]) / 6.0;
        ((s * c3 + c2) * s + c1) * s + y[k]
    }))
}

/// Profile from a table of `(r, H₂₂)`; the grid must lie inside the table range.
pub fn from_table(table: &[(f64, f64)], c: f64, grid: Vec<f64>) -> Result<RadialProfile> {
    let (min, max) = (table[0].0, table[table.len() - 1].0);
    if let Some(&r) = grid.iter().find(|&&r| r < min * (1.0 - 1e-12) || r > max * (1.0 + 1e-12)) {
        return Err(Error::OutOfRange { r, min, max });
    }
    let mut p = from_kahler(table_h22(table)?, c, grid)?;
    p.name = "table".into();
    Ok(p)
}

// ---------------------------------------------------------------- pointwise

impl RadialPoint {
    /// `β₁ = (r²/t) v₁v₂` with derivatives.
    pub fn beta1_frame(&self) -> FrameJet {
        let rr = Jet::variable(self.r);
        let one = C64::new(1.0, 0.0);
        FrameJet::from_jets(self.r, &[(word(&[V1, V2]), one, (rr * rr).scale(1.0 / self.t))]).expect("r > 0")
    }

    /// `β₂ = Σ H_ij vᵢv̄ⱼ + λ(v₁v₂ + v̄₁v̄₂)` with derivatives.
    pub fn beta2_frame(&self) -> FrameJet {
        let one = C64::new(1.0, 0.0);
        FrameJet::from_jets(
            self.r,
            &[
                (word(&[V1, V1B]), one, self.h11),
                (word(&[V1, V2B]), one, self.h12),
                (word(&[V2, V1B]), one, self.h21),
                (word(&[V2, V2B]), one, self.h22),
                (word(&[V1, V2]), one, self.lambda),
                (word(&[V1B, V2B]), one, self.lambda),
            ],
        )
        .expect("r > 0")
    }

    /// The pair in the real coframe.
    pub fn betas(&self) -> (ComplexForm, ComplexForm) {
        (self.beta1_frame().to_real(), self.beta2_frame().to_real())
    }

    /// `det H − λ(λ − r²/t)`.
    pub fn det_residual(&self) -> f64 {
        let (h11, h12, h21, h22, l) = (self.h11.value(), self.h12.value(), self.h21.value(), self.h22.value(), self.lambda.value());
        h11 * h22 - h12 * h21 - l * (l - self.r * self.r / self.t)
    }

    /// The residual above divided by the size of its terms.
    pub fn det_residual_rel(&self) -> f64 {
        let (h11, h12, h21, h22, l) = (self.h11.value(), self.h12.value(), self.h21.value(), self.h22.value(), self.lambda.value());
        let scale = (h11 * h22).abs().max((h12 * h21).abs()).max((l * l).abs()).max((l * self.r * self.r / self.t).abs());
        self.det_residual().abs() / scale.max(f64::MIN_POSITIVE)
    }

    /// `rH₁₂′ + 2H₁₂ − rλ′ + 2λ`, `rH₂₂′ − 2H₁₁`, `rH₂₁′ + 2H₂₁ + rλ′ − 2λ`.
    pub fn ode_residuals(&self) -> [f64; 3] {
        let r = self.r;
        let (l, lp) = (self.lambda.value(), self.lambda.deriv(1));
        [
            r * self.h12.deriv(1) + 2.0 * self.h12.value() - r * lp + 2.0 * l,
            r * self.h22.deriv(1) - 2.0 * self.h11.value(),
            r * self.h21.deriv(1) + 2.0 * self.h21.value() + r * lp - 2.0 * l,
        ]
    }
}

/// How far `β₂` is from closed at a point.
#[derive(Clone, Debug)]
pub struct Closedness {
    pub r: f64,
    /// Largest frame coefficient of `dβ₂`.
    pub form: f64,
    /// `form` divided by the largest coefficient of `β₂`.
    pub form_rel: f64,
    /// The three radial equations, see [`RadialPoint::ode_residuals`].
    pub ode: [f64; 3],
    /// Coefficient of `v₁v̄₁v̄₂` in `dβ₂`, equal to minus half the first equation.
    pub v1_v1b_v2b: C64,
}

impl Closedness {
    pub fn ode_max(&self) -> f64 {
        self.ode.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// [`Closedness`] of the point's `β₂`.
pub fn closedness_at(pt: &RadialPoint) -> Closedness {
    let b2 = pt.beta2_frame();
    let d = frame_d(&b2).expect("order ≥ 1");
    Closedness {
        r: pt.r,
        form: d.value().norm_max(),
        form_rel: d.value().norm_max() / b2.value().norm_max(),
        ode: pt.ode_residuals(),
        v1_v1b_v2b: d.coeff(&[V1, V1B, V2B]),
    }
}

pub fn closedness_residual(p: &RadialProfile, r: f64) -> Result<Closedness> {
    Ok(closedness_at(&p.point(r)?))
}

/// The pair `(β₁, β₂)` at r in the real coframe.
pub fn build_betas(p: &RadialProfile, r: f64) -> Result<(ComplexForm, ComplexForm)> {
    Ok(p.point(r)?.betas())
}

/// Coefficients of `(dr/r)², σ₁², σ₂², σ₃²` in the displayed metric
/// `tH₁₁[dr²/(r²−2tλ+2tH₁₂) + r²σ₁²/(r²−2tλ−2tH₁₂)] + tH₂₂[r²σ₂²/(…+) + r²σ₃²/(…−)]`.
pub fn metric_coeffs(p: &RadialProfile, r: f64) -> Result<[f64; 4]> {
    point_metric(&p.point(r)?)
}

/// As [`metric_coeffs`] for a point.
pub fn point_metric(pt: &RadialPoint) -> Result<[f64; 4]> {
    let (r, t) = (pt.r, pt.t);
    let d1 = r * r - 2.0 * t * pt.lambda.value() + 2.0 * t * pt.h12.value();
    let d2 = r * r - 2.0 * t * pt.lambda.value() - 2.0 * t * pt.h12.value();
    if d1.abs() <= 1e-14 * r * r || d2.abs() <= 1e-14 * r * r {
        return Err(Error::SingularDenominator { r });
    }
    let (h11, h22) = (pt.h11.value(), pt.h22.value());
    Ok([t * h11 * r * r / d1, t * h11 * r * r / d2, t * h22 * r * r / d1, t * h22 * r * r / d2])
}

/// The same four coefficients read off the metric extracted from `(exp β₁, exp β₂)`.
/// The extracted g is `2/t` times the display; this returns `g·t/2` on the
/// diagonal together with the largest off-diagonal entry of `g·t/2`.
pub fn metric_from_extraction(p: &RadialProfile, r: f64) -> Result<([f64; 4], f64)> {
    let pt = p.point(r)?;
    let (b1, b2) = pt.betas();
    let bp = extract_from_betas(&b1, &b2)?;
    let g = bp.g * (pt.t / 2.0);
    let mut off = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                off = off.max(g[(i, j)].abs());
            }
        }
    }
    Ok(([g[(0, 0)], g[(1, 1)], g[(2, 2)], g[(3, 3)]], off))
}

// ---------------------------------------------------------------- boundary behaviour

/// Boundary class for [`extension_check`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Cp2,
    F2,
}

/// One fitted power law.
#[derive(Clone, Debug)]
pub struct ExponentFit {
    pub quantity: &'static str,
    /// `"0"` or `"inf"`.
    pub end: &'static str,
    pub fitted: f64,
    pub expected: f64,
    pub pass: bool,
}

/// Power-law fits near both ends plus the limit checks of the boundary class.
#[derive(Clone, Debug)]
pub struct ExtensionReport {
    pub boundary: Boundary,
    pub fits: Vec<ExponentFit>,
    /// `(name, value, pass)` for limits that are not exponents.
    pub limits: Vec<(&'static str, f64, bool)>,
    pub pass: bool,
}

/// Exponent tolerance of [`extension_check`].
pub const EXPONENT_TOL: f64 = 0.1;

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Least-squares exponent of `|f|` against r over a window of points.
pub fn fit_exponent(pts: &[RadialPoint], f: impl Fn(&RadialPoint) -> f64) -> f64 {
    let xs: Vec<f64> = pts.iter().map(|p| p.r.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| f(p).abs().ln()).collect();
    slope(&xs, &ys)
}

/// Fits the boundary power laws on `r ≤ 10⁻²` and `r ≥ 10²`.
pub fn extension_check(p: &RadialProfile, which: Boundary) -> Result<ExtensionReport> {
    if p.min_r() > 1e-3 * (1.0 + 1e-9) || p.max_r() < 1e3 * (1.0 - 1e-9) {
        return Err(Error::InsufficientRange(format!("grid [{:.3e}, {:.3e}] must contain [1e-3, 1e3]", p.min_r(), p.max_r())));
    }
    let samples = p.samples();
    let near: Vec<RadialPoint> = samples.iter().copied().filter(|s| s.r <= 1e-2).collect();
    let far: Vec<RadialPoint> = samples.iter().copied().filter(|s| s.r >= 1e2).collect();
    if near.len() < 3 || far.len() < 3 {
        return Err(Error::InsufficientRange("fewer than 3 points in an end window".into()));
    }
    type Getter = fn(&RadialPoint) -> f64;
    let get = |name: &str| -> Getter {
        match name {
            "H11" => |p| p.h11.value(),
            "H22" => |p| p.h22.value(),
            "L" => |p| p.l.value(),
            "lambda" => |p| p.lambda.value(),
            _ => |p| p.h12.value(),
        }
    };
    let spec: &[(&'static str, &'static str, f64)] = match which {
        Boundary::Cp2 => &[
            ("H11", "0", 2.0),
            ("H22", "0", 2.0),
            ("L", "0", 4.0),
            ("lambda", "0", 2.0),
            ("H12", "0", 4.0),
            ("H22", "inf", 0.0),
            ("lambda", "inf", -4.0),
            ("H12", "inf", -2.0),
        ],
        Boundary::F2 => &[("H11", "0", 4.0), ("H22", "0", 0.0), ("L", "0", 4.0), ("L", "inf", 0.0)],
    };
    let fits: Vec<ExponentFit> = spec
        .iter()
        .map(|&(quantity, end, expected)| {
            let window = if end == "0" { &near } else { &far };
            let fitted = fit_exponent(window, get(quantity));
            ExponentFit { quantity, end, fitted, expected, pass: (fitted - expected).abs() <= EXPONENT_TOL }
        })
        .collect();
    let mut limits = Vec::new();
    if which == Boundary::F2 {
        let first = &samples[0];
        let last = samples.last().expect("nonempty");
        limits.push(("H22(0)", first.h22.value(), first.h22.value() > 1e-3));
        let c_inf = last.h22.value().powi(2);
        let target = -(c_inf - p.consts.c) / 4.0;
        let dev = (last.l.value() - target).abs() / target.abs().max(f64::MIN_POSITIVE);
        limits.push(("L(inf) + (c'-c)/4, relative", dev, dev < 1e-3));
    }
    let pass = fits.iter().all(|f| f.pass) && limits.iter().all(|l| l.2);
    Ok(ExtensionReport { boundary: which, fits, limits, pass })
}

/// Frame coefficients of `β₁ − β₂` at the smallest grid radius.
#[derive(Clone, Debug)]
pub struct OriginLimits {
    pub r: f64,
    /// `(word, |coefficient|)` over the six words of `β₁ − β₂`.
    pub coefficients: Vec<(&'static str, f64)>,
    /// `H₁₁/r⁴`, the coefficient of the smooth form `r⁴v₁v̄₁`.
    pub h11_over_r4: f64,
}

/// Near `r = 0` on an F₂-type profile every coefficient of `β₁ − β₂` tends to
/// zero except those of `H₁₁v₁v̄₁ + H₂₂v₂v̄₂`, whose smooth versions stay
/// nonzero: `H₂₂ → H₂₂(0)` and `H₁₁/r⁴ → f₁(0) > 0`.
pub fn origin_limits(p: &RadialProfile) -> Result<OriginLimits> {
    let pt = p.point(p.min_r())?;
    let diff = &pt.beta1_frame().value().clone() - pt.beta2_frame().value();
    let fj = FrameJet::new(pt.r, vec![diff])?;
    let names: [(&'static str, [usize; 2]); 6] = [
        ("v1v2", [V1, V2]),
        ("v1v1b", [V1, V1B]),
        ("v1v2b", [V1, V2B]),
        ("v2v1b", [V2, V1B]),
        ("v2v2b", [V2, V2B]),
        ("v1bv2b", [V1B, V2B]),
    ];
    let coefficients = names.iter().map(|(n, w)| (*n, fj.coeff(w).norm())).collect();
    Ok(OriginLimits { r: pt.r, coefficients, h11_over_r4: pt.h11.value() / pt.r.powi(4) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jet_product_rule() {
        let r = Jet::variable(2.0);
        let c = r * r * r;
        assert_eq!(c.d, [8.0, 12.0, 12.0, 6.0]);
        let s = (r * r).sqrt();
        assert!((s.value() - 2.0).abs() < 1e-15 && (s.deriv(1) - 1.0).abs() < 1e-15 && s.deriv(2).abs() < 1e-15);
        let q = r.recip();
        assert!((q.deriv(3) + 6.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn dual3_holds_plain_derivatives() {
        let j = Jet::from_dual3(Dual3_64::from_re(5.0).derivative().powi(3));
        assert_eq!(j.d, [125.0, 75.0, 30.0, 6.0]);
    }

    #[test]
    fn conjugate_generators() {
        let w = conj_generators(&word(&[V1, V2]));
        assert_eq!(w, word(&[V1B, V2B]));
    }
}
