//! Exterior algebra of ℝ^d with complex coefficients, d ≤ 8.
//!
//! A [`ComplexForm`] stores one coefficient per basis blade, indexed by the
//! bitmask of the blade: bit `i` set means `dxᵢ` occurs. Blades are ordered
//! increasingly, so `dx₂ ∧ dx₀` is stored as `−dx₀ ∧ dx₂`.
//!
//! ```
//! use genkahler::exterior::{ComplexForm, wedge};
//!
//! let w = ComplexForm::basis(4, &[0, 1]).unwrap() + ComplexForm::basis(4, &[2, 3]).unwrap();
//! let vol = wedge(&w, &w).unwrap();
//! assert_eq!(vol.coeff(&[0, 1, 2, 3]).re, 2.0);
//! ```

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex scalar used throughout the crate.
pub type C64 = Complex64;

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 8;

/// Default tolerance for coefficient comparisons.
pub const DEFAULT_TOL: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Sign of `e_A ∧ e_B` relative to `e_{A∪B}`, zero when the blades overlap.
#[inline]
pub(crate) fn wedge_sign(a: usize, b: usize) -> f64 {
    if a & b != 0 {
        return 0.0;
    }
    // Each index j of B has to move past every index of A above it.
    let mut swaps = 0u32;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        swaps += (a >> (j + 1)).count_ones();
        rest &= rest - 1;
    }
    if swaps % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// A mixed-degree complex form on ℝ^dim.
#[derive(Clone, PartialEq)]
pub struct ComplexForm {
    dim: usize,
    coeffs: Vec<C64>,
}

impl ComplexForm {
    /// The zero form.
    ///
    /// # Panics
    /// If `dim > MAX_DIM`.
    pub fn zero(dim: usize) -> Self {
        assert!(dim <= MAX_DIM, "dimension {dim} exceeds {MAX_DIM}");
        Self { dim, coeffs: vec![ZERO; 1 << dim] }
    }

    /// The constant function 1.
    pub fn one(dim: usize) -> Self {
        let mut f = Self::zero(dim);
        f.coeffs[0] = ONE;
        f
    }

    /// The constant function `c`.
    pub fn scalar(dim: usize, c: C64) -> Self {
        let mut f = Self::zero(dim);
        f.coeffs[0] = c;
        f
    }

    /// The basis blade `dx_{i₀} ∧ … ∧ dx_{i_k}` for a strictly increasing index list.
    pub fn basis(dim: usize, indices: &[usize]) -> Result<Self> {
        let mask = mask_of(dim, indices)?;
        let mut f = Self::zero(dim);
        f.coeffs[mask] = ONE;
        Ok(f)
    }

    /// Builds a form from `(indices, coefficient)` terms; repeated blades accumulate.
    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<usize>, C64)>,
    {
        let mut f = Self::zero(dim);
        for (idx, c) in terms {
            f.coeffs[mask_of(dim, &idx)?] += c;
        }
        Ok(f)
    }

    /// The 1-form `Σ ξᵢ dxᵢ`.
    pub fn covector(xi: &[C64]) -> Self {
        let mut f = Self::zero(xi.len());
        for (i, &c) in xi.iter().enumerate() {
            f.coeffs[1 << i] = c;
        }
        f
    }

    /// The 2-form `Σ_{i<j} M_ij dxᵢ∧dxⱼ` of an antisymmetric matrix, so that
    /// `β(eᵢ, eⱼ) = M_ij`. Only the strict upper triangle is read.
    pub fn two_form(m: &DMatrix<C64>) -> Self {
        let d = m.nrows();
        let mut f = Self::zero(d);
        for i in 0..d {
            for j in i + 1..d {
                f.coeffs[(1 << i) | (1 << j)] = m[(i, j)];
            }
        }
        f
    }

    /// Real version of [`ComplexForm::two_form`].
    pub fn two_form_real(m: &DMatrix<f64>) -> Self {
        Self::two_form(&m.map(|x| C64::new(x, 0.0)))
    }

    /// The antisymmetric matrix `M_ij = β(eᵢ, eⱼ)` of the degree-2 part.
    pub fn to_matrix(&self) -> DMatrix<C64> {
        let d = self.dim;
        let mut m = DMatrix::from_element(d, d, ZERO);
        for i in 0..d {
            for j in i + 1..d {
                let c = self.coeffs[(1 << i) | (1 << j)];
                m[(i, j)] = c;
                m[(j, i)] = -c;
            }
        }
        m
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coefficient of a blade given by a strictly increasing index list
    /// (zero for an invalid list).
    pub fn coeff(&self, indices: &[usize]) -> C64 {
        mask_of(self.dim, indices).map(|m| self.coeffs[m]).unwrap_or(ZERO)
    }

    /// Coefficient by blade bitmask.
    pub fn coeff_mask(&self, mask: usize) -> C64 {
        self.coeffs[mask]
    }

    /// Sets a blade coefficient.
    pub fn set(&mut self, indices: &[usize], c: C64) -> Result<()> {
        let m = mask_of(self.dim, indices)?;
        self.coeffs[m] = c;
        Ok(())
    }

    /// Raw coefficients indexed by bitmask.
    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    /// Nonzero terms as `(indices, coefficient)`, by increasing bitmask.
    pub fn terms(&self) -> impl Iterator<Item = (Vec<usize>, C64)> + '_ {
        self.coeffs.iter().enumerate().filter(|(_, c)| **c != ZERO).map(|(m, &c)| (indices_of(m), c))
    }

    /// The degree-`k` component.
    pub fn part(&self, k: usize) -> Self {
        let mut f = Self::zero(self.dim);
        for (m, c) in self.coeffs.iter().enumerate() {
            if m.count_ones() as usize == k {
                f.coeffs[m] = *c;
            }
        }
        f
    }

    /// True if every component of degree other than `k` is below `tol`.
    pub fn is_homogeneous(&self, k: usize, tol: f64) -> bool {
        self.coeffs.iter().enumerate().all(|(m, c)| m.count_ones() as usize == k || c.norm() <= tol)
    }

    /// Coefficient of `dx₀ ∧ … ∧ dx_{d−1}`.
    pub fn top(&self) -> C64 {
        self.coeffs[(1 << self.dim) - 1]
    }

    /// Complex conjugate.
    pub fn conj(&self) -> Self {
        Self { dim: self.dim, coeffs: self.coeffs.iter().map(|c| c.conj()).collect() }
    }

    /// Largest coefficient modulus.
    pub fn norm_max(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |a, c| a.max(c.norm()))
    }

    /// Coefficient-wise comparison within `tol` (absolute).
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.dim == other.dim && self.coeffs.iter().zip(&other.coeffs).all(|(a, b)| (a - b).norm() <= tol)
    }

    /// `self` scaled by a complex factor.
    pub fn scale(&self, c: C64) -> Self {
        Self { dim: self.dim, coeffs: self.coeffs.iter().map(|x| x * c).collect() }
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim == other.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim, found: other.dim })
        }
    }
}

impl fmt::Debug for ComplexForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexForm(dim={}", self.dim)?;
        for (idx, c) in self.terms() {
            write!(f, ", {idx:?}: {c}")?;
        }
        write!(f, ")")
    }
}

impl Add for ComplexForm {
    type Output = ComplexForm;
    fn add(mut self, rhs: ComplexForm) -> ComplexForm {
        self += &rhs;
        self
    }
}

impl Add<&ComplexForm> for &ComplexForm {
    type Output = ComplexForm;
    fn add(self, rhs: &ComplexForm) -> ComplexForm {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl AddAssign<&ComplexForm> for ComplexForm {
    /// # Panics
    /// On dimension mismatch.
    fn add_assign(&mut self, rhs: &ComplexForm) {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in form addition");
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
    }
}

impl Sub for ComplexForm {
    type Output = ComplexForm;
    fn sub(mut self, rhs: ComplexForm) -> ComplexForm {
        self -= &rhs;
        self
    }
}

impl Sub<&ComplexForm> for &ComplexForm {
    type Output = ComplexForm;
    fn sub(self, rhs: &ComplexForm) -> ComplexForm {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl SubAssign<&ComplexForm> for ComplexForm {
    /// # Panics
    /// On dimension mismatch.
    fn sub_assign(&mut self, rhs: &ComplexForm) {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in form subtraction");
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a -= b;
        }
    }
}

impl Neg for ComplexForm {
    type Output = ComplexForm;
    fn neg(self) -> ComplexForm {
        self.scale(-ONE)
    }
}

impl Mul<C64> for &ComplexForm {
    type Output = ComplexForm;
    fn mul(self, c: C64) -> ComplexForm {
        self.scale(c)
    }
}

impl Mul<C64> for ComplexForm {
    type Output = ComplexForm;
    fn mul(self, c: C64) -> ComplexForm {
        self.scale(c)
    }
}

impl Mul<f64> for ComplexForm {
    type Output = ComplexForm;
    fn mul(self, c: f64) -> ComplexForm {
        self.scale(C64::new(c, 0.0))
    }
}

impl Mul<f64> for &ComplexForm {
    type Output = ComplexForm;
    fn mul(self, c: f64) -> ComplexForm {
        self.scale(C64::new(c, 0.0))
    }
}

fn mask_of(dim: usize, indices: &[usize]) -> Result<usize> {
    let mut mask = 0usize;
    let mut prev: Option<usize> = None;
    for &i in indices {
        if i >= dim || prev.is_some_and(|p| p >= i) {
            return Err(Error::InvalidIndex { indices: indices.to_vec(), dim });
        }
        mask |= 1 << i;
        prev = Some(i);
    }
    Ok(mask)
}

fn indices_of(mask: usize) -> Vec<usize> {
    (0..MAX_DIM).filter(|i| mask & (1 << i) != 0).collect()
}

/// An element `X + ξ` of `(T ⊕ T*) ⊗ ℂ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedVector {
    vec: Vec<C64>,
    cov: Vec<C64>,
}

impl GeneralizedVector {
    /// Pairs a vector part with a covector part of the same length.
    pub fn new(vec: Vec<C64>, cov: Vec<C64>) -> Result<Self> {
        if vec.len() != cov.len() {
            return Err(Error::DimensionMismatch { expected: vec.len(), found: cov.len() });
        }
        Ok(Self { vec, cov })
    }

    /// From real parts.
    pub fn real(vec: &[f64], cov: &[f64]) -> Result<Self> {
        Self::new(vec.iter().map(|&x| C64::new(x, 0.0)).collect(), cov.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// A pure vector.
    pub fn vector(vec: Vec<C64>) -> Self {
        let d = vec.len();
        Self { vec, cov: vec![ZERO; d] }
    }

    /// A pure covector.
    pub fn covector(cov: Vec<C64>) -> Self {
        let d = cov.len();
        Self { vec: vec![ZERO; d], cov }
    }

    /// Splits a stacked `[X; ξ]` column of length `2d`.
    pub fn from_stacked(col: &[C64]) -> Self {
        let d = col.len() / 2;
        Self { vec: col[..d].to_vec(), cov: col[d..].to_vec() }
    }

    /// Stacked `[X; ξ]`.
    pub fn stacked(&self) -> Vec<C64> {
        self.vec.iter().chain(&self.cov).copied().collect()
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.vec.len()
    }

    /// The vector part X.
    pub fn vec(&self) -> &[C64] {
        &self.vec
    }

    /// The covector part ξ.
    pub fn cov(&self) -> &[C64] {
        &self.cov
    }

    /// Complex conjugate.
    pub fn conj(&self) -> Self {
        Self { vec: self.vec.iter().map(|c| c.conj()).collect(), cov: self.cov.iter().map(|c| c.conj()).collect() }
    }
}

/// Exterior product.
pub fn wedge(a: &ComplexForm, b: &ComplexForm) -> Result<ComplexForm> {
    a.check_dim(b)?;
    let mut out = ComplexForm::zero(a.dim);
    for (ma, ca) in a.coeffs.iter().enumerate() {
        if *ca == ZERO {
            continue;
        }
        for (mb, cb) in b.coeffs.iter().enumerate() {
            if *cb == ZERO || ma & mb != 0 {
                continue;
            }
            out.coeffs[ma | mb] += ca * cb * wedge_sign(ma, mb);
        }
    }
    Ok(out)
}

/// `k`-fold exterior power; `power(β, 0) = 1`.
pub fn power(a: &ComplexForm, k: usize) -> Result<ComplexForm> {
    let mut out = ComplexForm::one(a.dim);
    for _ in 0..k {
        out = wedge(&out, a)?;
    }
    Ok(out)
}

/// Interior product `i_X a`.
pub fn interior(x: &[C64], a: &ComplexForm) -> Result<ComplexForm> {
    if x.len() != a.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, found: x.len() });
    }
    let mut out = ComplexForm::zero(a.dim);
    for (m, c) in a.coeffs.iter().enumerate() {
        if *c == ZERO {
            continue;
        }
        let mut rest = m;
        while rest != 0 {
            let k = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if x[k] == ZERO {
                continue;
            }
            let sign = if (m & ((1 << k) - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            out.coeffs[m & !(1 << k)] += c * x[k] * sign;
        }
    }
    Ok(out)
}

/// Clifford action `(X + ξ)·ρ = i_Xρ + ξ∧ρ`.
pub fn clifford_act(a: &GeneralizedVector, rho: &ComplexForm) -> Result<ComplexForm> {
    if a.dim() != rho.dim {
        return Err(Error::DimensionMismatch { expected: rho.dim, found: a.dim() });
    }
    let mut out = interior(&a.vec, rho)?;
    out += &wedge(&ComplexForm::covector(&a.cov), rho)?;
    Ok(out)
}

/// `exp β = 1 + β + β²/2! + …` for a 2-form; the series stops at degree `dim`.
pub fn exp_two_form(beta: &ComplexForm) -> Result<ComplexForm> {
    if !beta.is_homogeneous(2, 0.0) {
        return Err(Error::NotDegreeTwo);
    }
    let mut out = ComplexForm::one(beta.dim);
    let mut term = ComplexForm::one(beta.dim);
    for k in 1..=beta.dim / 2 {
        term = wedge(&term, beta)?.scale(C64::new(1.0 / k as f64, 0.0));
        out += &term;
    }
    Ok(out)
}

/// Neutral pairing `(A, B) = −(i_X η + i_Y ξ)/2`, so `(A, A) = −i_X ξ`.
pub fn pairing(a: &GeneralizedVector, b: &GeneralizedVector) -> Result<C64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let xe: C64 = a.vec.iter().zip(&b.cov).map(|(x, e)| x * e).sum();
    let yx: C64 = b.vec.iter().zip(&a.cov).map(|(y, x)| y * x).sum();
    Ok(-(xe + yx) * 0.5)
}

/// Pfaffian-type invariant of a 4×4 antisymmetric matrix: `α∧α = 2·pf(α)·vol`.
#[inline]
pub fn pfaffian4(m: &DMatrix<C64>) -> C64 {
    m[(0, 1)] * m[(2, 3)] - m[(0, 2)] * m[(1, 3)] + m[(0, 3)] * m[(1, 2)]
}
