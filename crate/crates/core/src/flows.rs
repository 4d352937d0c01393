//! Flat hyperkähler pairs, their deformations by symplectic flows on the
//! periodic unit grid, and the closed plus self-dual splitting of 2-forms on
//! the flat torus.
//!
//! The hyperkähler triple is `ω₁ = e₀₁ + e₂₃`, `ω₂ = e₀₃ + e₁₂`,
//! `ω₃ = e₀₂ + e₃₁`; with this ordering the extracted metric is `½δ`.
//! Grid axes on which a field cannot vary are stored with extent 1.

use std::io::{Read, Write};

use nalgebra::{Matrix3, Matrix4, SMatrix, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use crate::biherm::extract_from_betas;
use crate::error::{Error, Result};
use crate::exterior::{ComplexForm, C64};
use crate::gcs::lemma1_check;

/// Basis 2-forms in storage order.
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
/// Basis 3-forms in storage order.
pub const TRIPLES: [(usize, usize, usize); 4] = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)];

/// Components of a 2-form on ℝ⁴ in [`PAIRS`] order.
pub type Comps = [C64; 6];

const ZERO: C64 = C64::new(0.0, 0.0);
const TAU: f64 = std::f64::consts::TAU;

pub fn comps_of(f: &ComplexForm) -> Comps {
    PAIRS.map(|(i, j)| f.coeff(&[i, j]))
}

pub fn form_of(c: &Comps) -> ComplexForm {
    let mut f = ComplexForm::zero(4);
    for (k, &(i, j)) in PAIRS.iter().enumerate() {
        f.set(&[i, j], c[k]).expect("valid pair");
    }
    f
}

/// Antisymmetric matrix `M_ij = α(eᵢ, eⱼ)`.
pub fn mat_of(c: &Comps) -> Matrix4<C64> {
    let mut m = Matrix4::from_element(ZERO);
    for (k, &(i, j)) in PAIRS.iter().enumerate() {
        m[(i, j)] = c[k];
        m[(j, i)] = -c[k];
    }
    m
}

pub fn comps_of_mat(m: &Matrix4<C64>) -> Comps {
    PAIRS.map(|(i, j)| m[(i, j)])
}

/// Flat Hodge star with orientation `e₀₁₂₃`.
pub fn hodge_star_flat(c: &Comps) -> Comps {
    [c[5], -c[4], c[3], c[2], -c[1], c[0]]
}

/// `ω₁, ω₂, ω₃`.
pub fn hyperkahler_triple() -> [ComplexForm; 3] {
    let e = |i: usize, j: usize| ComplexForm::basis(4, &[i, j]).expect("basis");
    [&e(0, 1) + &e(2, 3), &e(0, 3) + &e(1, 2), &e(0, 2) - &e(1, 3)]
}

/// `β₁ = ω₁ + i(ω₂ − ω₃)/2`, `β₂ = i(ω₂ + ω₃)/2`.
pub fn hyperkahler_pair() -> (ComplexForm, ComplexForm) {
    let [w1, w2, w3] = hyperkahler_triple();
    pair_from(&w1, &w2, &w3)
}

fn pair_from(w1: &ComplexForm, w2: &ComplexForm, w3: &ComplexForm) -> (ComplexForm, ComplexForm) {
    let half_i = C64::new(0.0, 0.5);
    (w1 + &(w2 - w3).scale(half_i), (w2 + w3).scale(half_i))
}

// ---------------------------------------------------------------- grid fields

/// A complex 2-form sampled on the periodic grid `∏ {0, 1/nₐ, …}` of `[0,1)⁴`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField2Form {
    shape: [usize; 4],
    data: Vec<Comps>,
}

fn check_shape(shape: [usize; 4]) -> Result<usize> {
    if shape.iter().any(|&n| n == 0) {
        return Err(Error::InvalidParameter(format!("grid shape {shape:?} has an empty axis")));
    }
    Ok(shape.iter().product())
}

fn multi_index(shape: [usize; 4], mut k: usize) -> [usize; 4] {
    let mut out = [0; 4];
    for a in (0..4).rev() {
        out[a] = k % shape[a];
        k /= shape[a];
    }
    out
}

fn linear_index(shape: [usize; 4], m: [usize; 4]) -> usize {
    ((m[0] * shape[1] + m[1]) * shape[2] + m[2]) * shape[3] + m[3]
}

fn coords(shape: [usize; 4], m: [usize; 4]) -> [f64; 4] {
    [0, 1, 2, 3].map(|a| m[a] as f64 / shape[a] as f64)
}

/// Catmull–Rom weights and their first two derivatives for offsets −1..2.
fn cubic_weights(s: f64) -> [[f64; 4]; 3] {
    let (s2, s3) = (s * s, s * s * s);
    [
        [(-s + 2.0 * s2 - s3) / 2.0, (2.0 - 5.0 * s2 + 3.0 * s3) / 2.0, (s + 4.0 * s2 - 3.0 * s3) / 2.0, (-s2 + s3) / 2.0],
        [(-1.0 + 4.0 * s - 3.0 * s2) / 2.0, (-10.0 * s + 9.0 * s2) / 2.0, (1.0 + 8.0 * s - 9.0 * s2) / 2.0, (-2.0 * s + 3.0 * s2) / 2.0],
        [(4.0 - 6.0 * s) / 2.0, (-10.0 + 18.0 * s) / 2.0, (8.0 - 18.0 * s) / 2.0, (-2.0 + 6.0 * s) / 2.0],
    ]
}

/// Uniform cubic B-spline weights and their first two derivatives for offsets −1..2.
fn bspline_weights(s: f64) -> [[f64; 4]; 3] {
    let (s2, s3, u) = (s * s, s * s * s, 1.0 - s);
    [
        [u * u * u / 6.0, (3.0 * s3 - 6.0 * s2 + 4.0) / 6.0, (-3.0 * s3 + 3.0 * s2 + 3.0 * s + 1.0) / 6.0, s3 / 6.0],
        [-u * u / 2.0, (3.0 * s2 - 4.0 * s) / 2.0, (-3.0 * s2 + 2.0 * s + 1.0) / 2.0, s2 / 2.0],
        [u, 3.0 * s - 2.0, 1.0 - 3.0 * s, s],
    ]
}

fn axis_stencil(n: usize, x: f64) -> Result<Vec<(usize, [f64; 3])>> {
    axis_stencil_with(n, x, cubic_weights)
}

/// Per-axis stencil (indices, weights for derivative orders 0..2 in x).
fn axis_stencil_with(n: usize, x: f64, weights: fn(f64) -> [[f64; 4]; 3]) -> Result<Vec<(usize, [f64; 3])>> {
    if n == 1 {
        return Ok(vec![(0, [1.0, 0.0, 0.0])]);
    }
    if n < 4 {
        return Err(Error::InterpolationDegenerate(format!("axis with {n} samples; periodic cubic needs at least 4")));
    }
    let u = x.rem_euclid(1.0) * n as f64;
    let base = (u.floor() as usize).min(n - 1);
    let s = u - base as f64;
    let w = weights(s);
    let nf = n as f64;
    Ok((0..4)
        .map(|k| ((base + n + k - 1) % n, [w[0][k], w[1][k] * nf, w[2][k] * nf * nf]))
        .collect())
}

impl GridField2Form {
    pub fn constant(shape: [usize; 4], f: &ComplexForm) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Self { shape, data: vec![comps_of(f); n] })
    }

    /// Samples `f` at every grid point `x = (i₀/n₀, …)`.
    pub fn from_fn(shape: [usize; 4], f: impl Fn([f64; 4]) -> Comps) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Self { shape, data: (0..n).map(|k| f(coords(shape, multi_index(shape, k)))).collect() })
    }

    pub fn from_data(shape: [usize; 4], data: Vec<Comps>) -> Result<Self> {
        let n = check_shape(shape)?;
        if data.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Comps] {
        &self.data
    }

    pub fn multi_index(&self, k: usize) -> [usize; 4] {
        multi_index(self.shape, k)
    }

    pub fn coords(&self, k: usize) -> [f64; 4] {
        coords(self.shape, multi_index(self.shape, k))
    }

    pub fn at(&self, m: [usize; 4]) -> &Comps {
        &self.data[linear_index(self.shape, m)]
    }

    pub fn form_at(&self, k: usize) -> ComplexForm {
        form_of(&self.data[k])
    }

    /// Pointwise `Σ cᵢ·fieldᵢ`; all fields must share a shape.
    pub fn combine(terms: &[(C64, &GridField2Form)]) -> Result<Self> {
        let shape = terms.first().ok_or_else(|| Error::InvalidParameter("no terms".into()))?.1.shape;
        if let Some((_, f)) = terms.iter().find(|(_, f)| f.shape != shape) {
            return Err(Error::InvalidParameter(format!("shape {:?} differs from {shape:?}", f.shape)));
        }
        let data = (0..terms[0].1.len())
            .map(|k| {
                let mut c = [ZERO; 6];
                for (s, f) in terms {
                    for (slot, v) in c.iter_mut().zip(f.data[k].iter()) {
                        *slot += s * v;
                    }
                }
                c
            })
            .collect();
        Ok(Self { shape, data })
    }

    /// `max |self − other|` over points and components.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::InvalidParameter("shape mismatch".into()));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().flat_map(|c| c.iter().map(|z| z.norm())).fold(0.0, f64::max)
    }

    fn partial(&self, k: usize, axis: usize) -> Comps {
        let n = self.shape[axis];
        if n < 3 {
            return [ZERO; 6];
        }
        let m = multi_index(self.shape, k);
        let mut up = m;
        let mut dn = m;
        up[axis] = (m[axis] + 1) % n;
        dn[axis] = (m[axis] + n - 1) % n;
        let (a, b) = (self.at(up), self.at(dn));
        let s = n as f64 / 2.0;
        [0, 1, 2, 3, 4, 5].map(|c| (a[c] - b[c]) * s)
    }

    /// Centered-difference exterior derivative, in [`TRIPLES`] order.
    pub fn exterior_derivative(&self) -> Vec<[C64; 4]> {
        let pair = |i: usize, j: usize| PAIRS.iter().position(|&p| p == (i, j)).expect("ordered pair");
        (0..self.len())
            .map(|k| {
                let der: [Comps; 4] = [0, 1, 2, 3].map(|a| self.partial(k, a));
                TRIPLES.map(|(i, j, l)| der[i][pair(j, l)] - der[j][pair(i, l)] + der[l][pair(i, j)])
            })
            .collect()
    }

    /// Largest component of the centered-difference `d`.
    pub fn d_residual(&self) -> f64 {
        self.exterior_derivative().iter().flat_map(|c| c.iter().map(|z| z.norm())).fold(0.0, f64::max)
    }

    /// Periodic tensor-product Catmull–Rom interpolation at any point of ℝ⁴.
    pub fn interpolate(&self, x: [f64; 4]) -> Result<Comps> {
        let st: Vec<Vec<(usize, [f64; 3])>> = (0..4).map(|a| axis_stencil(self.shape[a], x[a])).collect::<Result<_>>()?;
        let mut out = [ZERO; 6];
        for &(i0, w0) in &st[0] {
            for &(i1, w1) in &st[1] {
                for &(i2, w2) in &st[2] {
                    for &(i3, w3) in &st[3] {
                        let w = w0[0] * w1[0] * w2[0] * w3[0];
                        let v = self.at([i0, i1, i2, i3]);
                        for c in 0..6 {
                            out[c] += v[c] * w;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Text form: one row per point, `i0,i1,i2,i3` then real and imaginary parts.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let io = |e: csv::Error| Error::InvalidParameter(format!("csv: {e}"));
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["i0".to_string(), "i1".into(), "i2".into(), "i3".into()];
        for (i, j) in PAIRS {
            header.push(format!("re{i}{j}"));
            header.push(format!("im{i}{j}"));
        }
        wr.write_record(&header).map_err(io)?;
        for (k, c) in self.data.iter().enumerate() {
            let m = multi_index(self.shape, k);
            let mut row: Vec<String> = m.iter().map(|v| v.to_string()).collect();
            for z in c {
                row.push(format!("{:.16e}", z.re));
                row.push(format!("{:.16e}", z.im));
            }
            wr.write_record(&row).map_err(io)?;
        }
        wr.flush().map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
        Ok(())
    }

    /// Inverse of [`Self::write_csv`]; the shape is read off the largest indices.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let bad = |s: String| Error::InvalidParameter(format!("csv: {s}"));
        let mut rd = csv::Reader::from_reader(r);
        let mut rows: Vec<([usize; 4], Comps)> = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != 16 {
                return Err(bad(format!("expected 16 fields, found {}", rec.len())));
            }
            let mut m = [0usize; 4];
            for (a, slot) in m.iter_mut().enumerate() {
                *slot = rec[a].trim().parse().map_err(|e| bad(format!("{e}")))?;
            }
            let mut c = [ZERO; 6];
            for (k, slot) in c.iter_mut().enumerate() {
                let re: f64 = rec[4 + 2 * k].trim().parse().map_err(|e| bad(format!("{e}")))?;
                let im: f64 = rec[5 + 2 * k].trim().parse().map_err(|e| bad(format!("{e}")))?;
                *slot = C64::new(re, im);
            }
            rows.push((m, c));
        }
        let mut shape = [0usize; 4];
        for (m, _) in &rows {
            for a in 0..4 {
                shape[a] = shape[a].max(m[a] + 1);
            }
        }
        let n = check_shape(shape)?;
        if rows.len() != n {
            return Err(bad(format!("{} rows for shape {shape:?}", rows.len())));
        }
        let mut data = vec![[ZERO; 6]; n];
        let mut seen = vec![false; n];
        for (m, c) in rows {
            let k = linear_index(shape, m);
            if seen[k] {
                return Err(bad(format!("duplicate index {m:?}")));
            }
            seen[k] = true;
            data[k] = c;
        }
        Ok(Self { shape, data })
    }
}

// ---------------------------------------------------------------- Hamiltonians

/// A periodic scalar sampled on the grid, interpolated by a periodic cubic
/// B-spline so that the Hessian is continuous.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarTable {
    pub shape: [usize; 4],
    pub values: Vec<f64>,
    coeffs: Vec<f64>,
}

impl ScalarTable {
    pub fn new(shape: [usize; 4], values: Vec<f64>) -> Result<Self> {
        let n = check_shape(shape)?;
        if values.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: values.len() });
        }
        for &s in &shape {
            if s != 1 && s < 4 {
                return Err(Error::InterpolationDegenerate(format!("axis with {s} samples")));
            }
        }
        // Interpolation condition (c₋₁ + 4c₀ + c₁)/6 = f, diagonal in Fourier space.
        let mut spec: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
        fft4(&mut spec, shape, false);
        for (k, z) in spec.iter_mut().enumerate() {
            let m = multi_index(shape, k);
            for a in 0..4 {
                if shape[a] > 1 {
                    *z *= 6.0 / (4.0 + 2.0 * (TAU * m[a] as f64 / shape[a] as f64).cos());
                }
            }
        }
        fft4(&mut spec, shape, true);
        let coeffs = spec.iter().map(|z| z.re).collect();
        Ok(Self { shape, values, coeffs })
    }

    fn eval(&self, x: [f64; 4]) -> (f64, Vector4<f64>, Matrix4<f64>) {
        let st: Vec<Vec<(usize, [f64; 3])>> = (0..4).map(|a| axis_stencil_with(self.shape[a], x[a], bspline_weights).expect("checked")).collect();
        let mut v = 0.0;
        let mut g = Vector4::zeros();
        let mut h = Matrix4::zeros();
        for &(i0, w0) in &st[0] {
            for &(i1, w1) in &st[1] {
                for &(i2, w2) in &st[2] {
                    for &(i3, w3) in &st[3] {
                        let f = self.coeffs[linear_index(self.shape, [i0, i1, i2, i3])];
                        let ws = [w0, w1, w2, w3];
                        let w = |orders: [usize; 4]| (0..4).map(|a| ws[a][orders[a]]).product::<f64>();
                        v += f * w([0; 4]);
                        for a in 0..4 {
                            let mut o = [0; 4];
                            o[a] = 1;
                            g[a] += f * w(o);
                            for b in 0..4 {
                                let mut o = [0; 4];
                                o[a] += 1;
                                o[b] += 1;
                                h[(a, b)] += f * w(o);
                            }
                        }
                    }
                }
            }
        }
        (v, g, h)
    }
}

/// The function f whose ω₁-Hamiltonian flow deforms the hyperkähler pair.
#[derive(Clone, Debug, PartialEq)]
pub enum Hamiltonian {
    /// `f = c·x`; the flow is a translation.
    Linear([f64; 4]),
    /// `f = ½ Σ Sᵢⱼ s(xᵢ)s(xⱼ)` over axes 0..2 with `s(x) = sin(2πx)/2π`: a
    /// quadratic form in periodic coordinates.
    Quadratic(Matrix3<f64>),
    /// `f = A·exp(κ Σ (cos 2π(xᵢ − cᵢ) − 1))`.
    Bump { amplitude: f64, kappa: f64, center: [f64; 4] },
    /// `f = ½ xᵀSx` on ℝ⁴; the flow is the linear map `exp(tPS)`.
    QuadraticForm(Matrix4<f64>),
    /// Sampled periodic f.
    Table(ScalarTable),
}

/// `X = P∇f` is the field with `i_Xω₁ = df`.
pub fn hamiltonian_matrix() -> Matrix4<f64> {
    Matrix4::new(0.0, 1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0, 0.0)
}

impl Hamiltonian {
    /// Named presets scaled by `amplitude`: `linear`, `quadratic`, `bump`.
    pub fn preset(name: &str, amplitude: f64) -> Result<Self> {
        match name {
            "linear" => Ok(Self::Linear([amplitude, 0.5 * amplitude, -0.25 * amplitude, 0.75 * amplitude])),
            "quadratic" => Ok(Self::Quadratic(Matrix3::new(1.0, 0.3, 0.0, 0.3, 0.5, 0.2, 0.0, 0.2, 0.8) * amplitude)),
            "bump" => Ok(Self::Bump { amplitude, kappa: 1.0, center: [0.5; 4] }),
            other => Err(Error::InvalidParameter(format!("unknown preset {other:?}"))),
        }
    }

    /// Value, gradient and Hessian.
    pub fn eval(&self, x: [f64; 4]) -> (f64, Vector4<f64>, Matrix4<f64>) {
        match self {
            Self::Linear(c) => {
                let g = Vector4::from(*c);
                (g.dot(&Vector4::from(x)), g, Matrix4::zeros())
            }
            Self::Quadratic(s) => {
                let sv: [f64; 3] = [0, 1, 2].map(|i| (TAU * x[i]).sin() / TAU);
                let d1: [f64; 3] = [0, 1, 2].map(|i| (TAU * x[i]).cos());
                let d2: [f64; 3] = [0, 1, 2].map(|i| -TAU * (TAU * x[i]).sin());
                let mut v = 0.0;
                let mut g = Vector4::zeros();
                let mut h = Matrix4::zeros();
                for k in 0..3 {
                    let sk: f64 = (0..3).map(|j| s[(k, j)] * sv[j]).sum();
                    v += 0.5 * sv[k] * sk;
                    g[k] = sk * d1[k];
                    h[(k, k)] += sk * d2[k];
                    for l in 0..3 {
                        h[(k, l)] += s[(k, l)] * d1[k] * d1[l];
                    }
                }
                (v, g, h)
            }
            Self::Bump { amplitude, kappa, center } => {
                let th: [f64; 4] = [0, 1, 2, 3].map(|i| TAU * (x[i] - center[i]));
                let f = amplitude * (kappa * th.iter().map(|t| t.cos() - 1.0).sum::<f64>()).exp();
                let q: [f64; 4] = th.map(|t| -kappa * TAU * t.sin());
                let g = Vector4::from(q) * f;
                let mut h = Matrix4::zeros();
                for a in 0..4 {
                    for b in 0..4 {
                        h[(a, b)] = f * q[a] * q[b];
                    }
                    h[(a, a)] -= f * kappa * TAU * TAU * th[a].cos();
                }
                (f, g, h)
            }
            Self::QuadraticForm(s) => {
                let xv = Vector4::from(x);
                let g = s * xv;
                (0.5 * xv.dot(&g), g, *s)
            }
            Self::Table(t) => t.eval(x),
        }
    }

    /// Axes along which the flow Jacobian can vary.
    pub fn support(&self) -> [bool; 4] {
        match self {
            Self::Linear(_) | Self::QuadraticForm(_) => [false; 4],
            Self::Quadratic(_) => [true, true, true, false],
            Self::Bump { .. } => [true; 4],
            Self::Table(t) => t.shape.map(|n| n > 1),
        }
    }

    /// `X` and `DX` at x.
    pub fn field(&self, x: [f64; 4]) -> (Vector4<f64>, Matrix4<f64>) {
        let (_, g, h) = self.eval(x);
        let p = hamiltonian_matrix();
        (p * g, p * h)
    }
}

// ---------------------------------------------------------------- flow

/// Maximum step of the fixed-step integrator.
pub const MAX_STEP: f64 = 0.01;

/// Time-t map of the ω₁-Hamiltonian flow at the grid points.
#[derive(Clone, Debug)]
pub struct FlowMap {
    pub t: f64,
    pub steps: usize,
    pub step: f64,
    pub shape: [usize; 4],
    /// `F_t(x)`, not reduced mod 1.
    pub image: Vec<[f64; 4]>,
    /// Derivative of the discrete RK4 map.
    pub jacobian: Vec<Matrix4<f64>>,
    /// Largest `‖DX‖∞` met during integration.
    pub lipschitz: f64,
}

fn row_sum_norm(m: &Matrix4<f64>) -> f64 {
    (0..4).map(|r| (0..4).map(|c| m[(r, c)].abs()).sum::<f64>()).fold(0.0, f64::max)
}

type State = SMatrix<f64, 4, 5>;

fn rhs(h: &Hamiltonian, s: &State, lip: &mut f64) -> State {
    let x = [s[(0, 0)], s[(1, 0)], s[(2, 0)], s[(3, 0)]];
    let (v, dv) = h.field(x);
    *lip = lip.max(row_sum_norm(&dv));
    let j = s.fixed_view::<4, 4>(0, 1).into_owned();
    let mut out = State::zeros();
    out.set_column(0, &v);
    out.fixed_view_mut::<4, 4>(0, 1).copy_from(&(dv * j));
    out
}

/// Integrates the flow with RK4 and step `t/⌈|t|/0.01⌉`, together with its
/// tangent map, from every grid point. Fails with `StepControl` once
/// `h·‖DX‖ > 1`.
pub fn flow(h: &Hamiltonian, t: f64, shape: [usize; 4]) -> Result<FlowMap> {
    let n = check_shape(shape)?;
    if !t.is_finite() {
        return Err(Error::InvalidParameter(format!("t = {t}")));
    }
    let steps = (t.abs() / MAX_STEP).ceil() as usize;
    let step = if steps == 0 { 0.0 } else { t / steps as f64 };
    let mut image = Vec::with_capacity(n);
    let mut jacobian = Vec::with_capacity(n);
    let mut lipschitz = 0.0f64;
    for k in 0..n {
        let x = coords(shape, multi_index(shape, k));
        let mut s = State::zeros();
        s.set_column(0, &Vector4::from(x));
        s.fixed_view_mut::<4, 4>(0, 1).copy_from(&Matrix4::identity());
        for _ in 0..steps {
            let k1 = rhs(h, &s, &mut lipschitz);
            let k2 = rhs(h, &(s + k1 * (step / 2.0)), &mut lipschitz);
            let k3 = rhs(h, &(s + k2 * (step / 2.0)), &mut lipschitz);
            let k4 = rhs(h, &(s + k3 * step), &mut lipschitz);
            s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (step / 6.0);
            if step.abs() * lipschitz > 1.0 {
                return Err(Error::StepControl { product: step.abs() * lipschitz });
            }
        }
        image.push([s[(0, 0)], s[(1, 0)], s[(2, 0)], s[(3, 0)]]);
        jacobian.push(s.fixed_view::<4, 4>(0, 1).into_owned());
    }
    Ok(FlowMap { t, steps, step, shape, image, jacobian, lipschitz })
}

impl FlowMap {
    /// Jacobian by centered differences of the grid images. Periodicity
    /// `F(x + eₐ) = F(x) + eₐ` unwraps neighbours; axes with fewer than 3
    /// samples take the tangent column.
    pub fn fd_jacobian(&self) -> Vec<Matrix4<f64>> {
        (0..self.image.len())
            .map(|k| {
                let m = multi_index(self.shape, k);
                let mut jac = self.jacobian[k];
                for a in 0..4 {
                    let n = self.shape[a];
                    if n < 3 {
                        continue;
                    }
                    let mut up = m;
                    let mut dn = m;
                    up[a] = (m[a] + 1) % n;
                    dn[a] = (m[a] + n - 1) % n;
                    let mut fu = self.image[linear_index(self.shape, up)];
                    let mut fd = self.image[linear_index(self.shape, dn)];
                    if up[a] == 0 {
                        fu[a] += 1.0;
                    }
                    if m[a] == 0 {
                        fd[a] -= 1.0;
                    }
                    for r in 0..4 {
                        jac[(r, a)] = (fu[r] - fd[r]) * n as f64 / 2.0;
                    }
                }
                jac
            })
            .collect()
    }

    /// `max ‖DFᵀ ω₁ DF − ω₁‖` over the points for the given Jacobians.
    pub fn symplectic_residual(jacs: &[Matrix4<f64>]) -> f64 {
        let w = omega1_matrix();
        jacs.iter().map(|j| (j.transpose() * w * j - w).abs().max()).fold(0.0, f64::max)
    }

    /// `max |det DF − 1|`.
    pub fn volume_residual(jacs: &[Matrix4<f64>]) -> f64 {
        jacs.iter().map(|j| (j.determinant() - 1.0).abs()).fold(0.0, f64::max)
    }
}

fn omega1_matrix() -> Matrix4<f64> {
    let mut w = Matrix4::zeros();
    w[(0, 1)] = 1.0;
    w[(1, 0)] = -1.0;
    w[(2, 3)] = 1.0;
    w[(3, 2)] = -1.0;
    w
}

/// `(F*α)_x = DFᵀ α(F(x)) DF`, with α interpolated at the image points.
pub fn pullback(field: &GridField2Form, map: &FlowMap) -> Result<GridField2Form> {
    pullback_with(field, map, &map.jacobian)
}

/// As [`pullback`] with explicit Jacobians, e.g. [`FlowMap::fd_jacobian`].
pub fn pullback_with(field: &GridField2Form, map: &FlowMap, jacs: &[Matrix4<f64>]) -> Result<GridField2Form> {
    let data = map
        .image
        .iter()
        .zip(jacs)
        .map(|(x, j)| {
            let a = mat_of(&field.interpolate(*x)?);
            let jc = j.map(|v| C64::new(v, 0.0));
            Ok(comps_of_mat(&(jc.transpose() * a * jc)))
        })
        .collect::<Result<Vec<_>>>()?;
    GridField2Form::from_data(map.shape, data)
}

/// Output of [`joyce_deform`].
#[derive(Clone, Debug)]
pub struct JoyceFields {
    pub beta1: GridField2Form,
    pub beta2: GridField2Form,
    /// `F_t*ω₃`.
    pub pulled_omega3: GridField2Form,
    pub flow: FlowMap,
}

/// `β₁ = ω₁ + i(ω₂ − F_t*ω₃)/2`, `β₂ = i(ω₂ + F_t*ω₃)/2` on the grid with n
/// samples along each axis the flow Jacobian depends on.
pub fn joyce_deform(h: &Hamiltonian, t: f64, n: usize) -> Result<JoyceFields> {
    let support = h.support();
    if support.iter().any(|&s| s) && n < 4 {
        return Err(Error::InterpolationDegenerate(format!("resolution {n} below 4")));
    }
    let shape = support.map(|s| if s { n } else { 1 });
    let map = flow(h, t, shape)?;
    let [w1, w2, w3] = hyperkahler_triple();
    let w3field = GridField2Form::constant([1; 4], &w3)?;
    let pulled = if map.steps == 0 { GridField2Form::constant(shape, &w3)? } else { pullback(&w3field, &map)? };
    let c1 = GridField2Form::constant(shape, &w1)?;
    let c2 = GridField2Form::constant(shape, &w2)?;
    let half_i = C64::new(0.0, 0.5);
    let one = C64::new(1.0, 0.0);
    let beta1 = GridField2Form::combine(&[(one, &c1), (half_i, &c2), (-half_i, &pulled)])?;
    let beta2 = GridField2Form::combine(&[(half_i, &c2), (half_i, &pulled)])?;
    Ok(JoyceFields { beta1, beta2, pulled_omega3: pulled, flow: map })
}

// ---------------------------------------------------------------- verification

/// Where and why the pointwise checks first failed.
#[derive(Clone, Debug, PartialEq)]
pub struct PointFailure {
    pub index: [usize; 4],
    pub reason: String,
}

/// `d^c₋ω₋ = db = −d^c₊ω₊` with `d^cω = −dω(I·, I·, I·)`.
#[derive(Clone, Debug)]
pub struct TorsionResiduals {
    /// `max |db|`.
    pub db: f64,
    /// `max |d^c₋ω₋ − db|`.
    pub minus: f64,
    /// `max |db + d^c₊ω₊|`.
    pub plus: f64,
    /// The same two with the opposite sign of `d^c`, for comparison.
    pub minus_flipped: f64,
    pub plus_flipped: f64,
}

impl TorsionResiduals {
    pub fn max(&self) -> f64 {
        self.minus.max(self.plus)
    }
}

#[derive(Clone, Debug)]
pub struct GkFieldReport {
    pub points: usize,
    /// Every point passes the commuting-pair test with the sign of the first point.
    pub pointwise_pass: bool,
    pub first_failure: Option<PointFailure>,
    pub max_same_top_rel: f64,
    pub max_conj_top_rel: f64,
    pub max_commutator_rel: f64,
    /// Smallest `|eigenvalue|` of the scaled definiteness form.
    pub min_definiteness: f64,
    /// Sign of the definiteness form at the first point.
    pub sign: i8,
    pub min_metric_eigenvalue: f64,
    /// Centered-difference `max |dβ₁|`, `max |dβ₂|`.
    pub d_beta1: f64,
    pub d_beta2: f64,
    /// Present when the pointwise checks pass and the grid resolves the fields.
    pub torsion: Option<TorsionResiduals>,
}

fn full_three_form(c: &[C64; 4]) -> [[[f64; 4]; 4]; 4] {
    let mut t = [[[0.0; 4]; 4]; 4];
    for (k, &(i, j, l)) in TRIPLES.iter().enumerate() {
        let v = c[k].re;
        for (a, b, cc, s) in [(i, j, l, 1.0), (j, l, i, 1.0), (l, i, j, 1.0), (j, i, l, -1.0), (i, l, j, -1.0), (l, j, i, -1.0)] {
            t[a][b][cc] = s * v;
        }
    }
    t
}

/// `(d^cω)_{ijk} = −Σ (dω)_{abc} I_{ai} I_{bj} I_{ck}` in [`TRIPLES`] order.
fn dc_of(d: &[C64; 4], i: &Matrix4<f64>) -> [f64; 4] {
    let t = full_three_form(d);
    TRIPLES.map(|(p, q, r)| {
        let mut s = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    s += t[a][b][c] * i[(a, p)] * i[(b, q)] * i[(c, r)];
                }
            }
        }
        -s
    })
}

/// Pointwise commuting-pair checks, grid `d` of both forms and, when those
/// pass, the torsion identity of the bihermitian fields.
pub fn verify_gk_field(beta1: &GridField2Form, beta2: &GridField2Form, tol: f64) -> Result<GkFieldReport> {
    if beta1.shape() != beta2.shape() {
        return Err(Error::InvalidParameter("fields on different grids".into()));
    }
    let n = beta1.len();
    let mut rep = GkFieldReport {
        points: n,
        pointwise_pass: true,
        first_failure: None,
        max_same_top_rel: 0.0,
        max_conj_top_rel: 0.0,
        max_commutator_rel: 0.0,
        min_definiteness: f64::INFINITY,
        sign: 0,
        min_metric_eigenvalue: f64::INFINITY,
        d_beta1: beta1.d_residual(),
        d_beta2: beta2.d_residual(),
        torsion: None,
    };
    let mut extracted = Vec::with_capacity(n);
    for k in 0..n {
        let (b1, b2) = (beta1.form_at(k), beta2.form_at(k));
        let fail = |reason: String| PointFailure { index: beta1.multi_index(k), reason };
        let l = match lemma1_check(&b1, &b2, 1, tol) {
            Ok(l) => l,
            Err(e) => {
                rep.pointwise_pass = false;
                rep.first_failure.get_or_insert(fail(e.to_string()));
                continue;
            }
        };
        rep.max_same_top_rel = rep.max_same_top_rel.max(l.same_top_rel);
        rep.max_conj_top_rel = rep.max_conj_top_rel.max(l.conj_top_rel);
        rep.max_commutator_rel = rep.max_commutator_rel.max(l.commutator_rel);
        if let Some(m) = l.definiteness.iter().map(|x| x.abs()).reduce(f64::min) {
            rep.min_definiteness = rep.min_definiteness.min(m);
        }
        if k == 0 {
            rep.sign = l.sign;
        }
        let failure = if !l.pass {
            Some(fail(format!("commuting-pair test failed (sign {})", l.sign)))
        } else if l.sign != rep.sign {
            Some(fail(format!("definiteness sign changed to {}", l.sign)))
        } else {
            match extract_from_betas(&b1, &b2) {
                Ok(bp) => {
                    rep.min_metric_eigenvalue = rep.min_metric_eigenvalue.min(bp.min_metric_eigenvalue());
                    extracted.push(bp);
                    None
                }
                Err(e) => Some(fail(e.to_string())),
            }
        };
        if let Some(f) = failure {
            rep.pointwise_pass = false;
            rep.first_failure.get_or_insert(f);
        }
    }
    if rep.pointwise_pass {
        let shape = beta1.shape();
        let resolved = shape.iter().all(|&s| s == 1 || s >= 3);
        if resolved {
            let real_field = |f: &dyn Fn(usize) -> Matrix4<f64>| {
                GridField2Form::from_data(shape, (0..n).map(|k| comps_of_mat(&f(k).map(|v| C64::new(v, 0.0)))).collect())
            };
            let wp = real_field(&|k| crate::biherm::hermitian_matrix(&extracted[k].g, &extracted[k].i_plus))?;
            let wm = real_field(&|k| crate::biherm::hermitian_matrix(&extracted[k].g, &extracted[k].i_minus))?;
            let bf = real_field(&|k| extracted[k].b)?;
            let (dwp, dwm, db) = (wp.exterior_derivative(), wm.exterior_derivative(), bf.exterior_derivative());
            let mut r = TorsionResiduals { db: 0.0, minus: 0.0, plus: 0.0, minus_flipped: 0.0, plus_flipped: 0.0 };
            for k in 0..n {
                let dcm = dc_of(&dwm[k], &extracted[k].i_minus);
                let dcp = dc_of(&dwp[k], &extracted[k].i_plus);
                for c in 0..4 {
                    let dbv = db[k][c].re;
                    r.db = r.db.max(dbv.abs());
                    r.minus = r.minus.max((dcm[c] - dbv).abs());
                    r.plus = r.plus.max((dbv + dcp[c]).abs());
                    r.minus_flipped = r.minus_flipped.max((dcm[c] + dbv).abs());
                    r.plus_flipped = r.plus_flipped.max((dbv - dcp[c]).abs());
                }
            }
            rep.torsion = Some(r);
        }
    }
    Ok(rep)
}

/// A t-interval whose ends pass and fail [`verify_gk_field`].
#[derive(Clone, Debug)]
pub struct FailureBracket {
    pub t_pass: f64,
    pub t_fail: f64,
    pub failure: PointFailure,
}

/// Bisects `[t_pass, t_fail]` for the first t where the pointwise checks fail.
pub fn bracket_failure(h: &Hamiltonian, n: usize, t_pass: f64, t_fail: f64, iterations: usize, tol: f64) -> Result<FailureBracket> {
    let check = |t: f64| -> Result<Option<PointFailure>> {
        let f = joyce_deform(h, t, n)?;
        Ok(verify_gk_field(&f.beta1, &f.beta2, tol)?.first_failure)
    };
    if check(t_pass)?.is_some() {
        return Err(Error::InvalidParameter(format!("t = {t_pass} already fails")));
    }
    let mut failure = check(t_fail)?.ok_or_else(|| Error::InvalidParameter(format!("t = {t_fail} does not fail")))?;
    let (mut lo, mut hi) = (t_pass, t_fail);
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        match check(mid)? {
            Some(f) => {
                hi = mid;
                failure = f;
            }
            None => lo = mid,
        }
    }
    Ok(FailureBracket { t_pass: lo, t_fail: hi, failure })
}

// ---------------------------------------------------------------- splitting

fn fft4(data: &mut [C64], shape: [usize; 4], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    for axis in 0..4 {
        let n = shape[axis];
        if n == 1 {
            continue;
        }
        let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
        let stride: usize = shape[axis + 1..].iter().product();
        let block = stride * n;
        let mut line = vec![ZERO; n];
        for start in (0..data.len()).step_by(block) {
            for off in 0..stride {
                for (i, slot) in line.iter_mut().enumerate() {
                    *slot = data[start + off + i * stride];
                }
                fft.process(&mut line);
                for (i, v) in line.iter().enumerate() {
                    data[start + off + i * stride] = *v;
                }
            }
        }
    }
    if inverse {
        let s = 1.0 / data.len() as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }
}

/// `k ∧ α` for a wavevector and 2-form components, in [`TRIPLES`] order.
fn k_wedge(k: [f64; 4], a: &Comps) -> [C64; 4] {
    let pair = |i: usize, j: usize| PAIRS.iter().position(|&p| p == (i, j)).expect("ordered pair");
    TRIPLES.map(|(i, j, l)| a[pair(j, l)] * k[i] - a[pair(i, l)] * k[j] + a[pair(i, j)] * k[l])
}

/// Self-dual basis `e₀₁ + e₂₃`, `e₀₂ − e₁₃`, `e₀₃ + e₁₂`.
fn selfdual_basis() -> [Comps; 3] {
    let o = C64::new(1.0, 0.0);
    [[o, ZERO, ZERO, ZERO, ZERO, o], [ZERO, o, ZERO, ZERO, -o, ZERO], [ZERO, ZERO, o, o, ZERO, ZERO]]
}

/// Output of [`split_closed_selfdual`].
#[derive(Clone, Debug)]
pub struct Split {
    pub closed: GridField2Form,
    pub selfdual: GridField2Form,
    /// `max |k ∧ b̂_closed(k)|·2π` over modes: the spectral `d` of the closed part.
    pub d_closed: f64,
    /// `max |b₊ − *b₊|`.
    pub selfdual_residual: f64,
    /// `max |b − b_closed − b₊|`.
    pub reconstruction: f64,
}

/// Writes `b = b_closed + b₊` with `d b_closed = 0` and `*b₊ = b₊` on the flat
/// torus. For each mode `k ≠ 0` the self-dual part solves `k∧b₊ = k∧b̂`, a
/// rank-3 system; the constant mode goes to the closed part.
pub fn split_closed_selfdual(b: &GridField2Form) -> Result<Split> {
    let shape = b.shape();
    let n = b.len();
    let mut spec: Vec<Vec<C64>> = (0..6).map(|c| b.data().iter().map(|v| v[c]).collect()).collect();
    for comp in spec.iter_mut() {
        fft4(comp, shape, false);
    }
    let basis = selfdual_basis();
    let mut sd_spec: Vec<Vec<C64>> = vec![vec![ZERO; n]; 6];
    let mut d_closed = 0.0f64;
    for idx in 0..n {
        let m = multi_index(shape, idx);
        let k: [f64; 4] = [0, 1, 2, 3].map(|a| {
            let (i, na) = (m[a] as i64, shape[a] as i64);
            (if i <= na / 2 { i } else { i - na }) as f64
        });
        if k.iter().all(|&v| v == 0.0) {
            continue;
        }
        let bk: Comps = [0, 1, 2, 3, 4, 5].map(|c| spec[c][idx]);
        let rhs = k_wedge(k, &bk);
        let mut a = SMatrix::<f64, 4, 3>::zeros();
        for (j, e) in basis.iter().enumerate() {
            let col = k_wedge(k, e);
            for r in 0..4 {
                a[(r, j)] = col[r].re;
            }
        }
        let svd = a.svd(true, true);
        let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
        if !(smin > 1e-12 * smax) {
            return Err(Error::SolverSingular(format!("mode {k:?}")));
        }
        let re = svd.solve(&nalgebra::Vector4::from(rhs.map(|z| z.re)), 1e-14).map_err(|e| Error::SolverSingular(e.to_string()))?;
        let im = svd.solve(&nalgebra::Vector4::from(rhs.map(|z| z.im)), 1e-14).map_err(|e| Error::SolverSingular(e.to_string()))?;
        let mut sd = [ZERO; 6];
        for j in 0..3 {
            let cj = C64::new(re[j], im[j]);
            for c in 0..6 {
                sd[c] += basis[j][c] * cj;
            }
        }
        let closed: Comps = [0, 1, 2, 3, 4, 5].map(|c| bk[c] - sd[c]);
        let scale = 1.0 / n as f64;
        for v in k_wedge(k, &closed) {
            d_closed = d_closed.max(v.norm() * TAU * scale);
        }
        for c in 0..6 {
            sd_spec[c][idx] = sd[c];
        }
    }
    for comp in sd_spec.iter_mut() {
        fft4(comp, shape, true);
    }
    let real_input = b.data().iter().all(|c| c.iter().all(|z| z.im == 0.0));
    let sd_data: Vec<Comps> = (0..n)
        .map(|idx| {
            [0, 1, 2, 3, 4, 5].map(|c| {
                let v = sd_spec[c][idx];
                if real_input {
                    C64::new(v.re, 0.0)
                } else {
                    v
                }
            })
        })
        .collect();
    let selfdual = GridField2Form::from_data(shape, sd_data)?;
    let one = C64::new(1.0, 0.0);
    let closed = GridField2Form::combine(&[(one, b), (-one, &selfdual)])?;
    let selfdual_residual = selfdual
        .data()
        .iter()
        .flat_map(|c| {
            let s = hodge_star_flat(c);
            (0..6).map(move |k| (c[k] - s[k]).norm())
        })
        .fold(0.0, f64::max);
    let recon = GridField2Form::combine(&[(one, b), (-one, &closed), (-one, &selfdual)])?;
    Ok(Split { closed, selfdual, d_closed, selfdual_residual, reconstruction: recon.max_abs() })
}

/// A real 2-form field with `modes` random Fourier modes of frequency at most
/// `max_freq` per axis, reproducible from `seed`.
pub fn random_band_limited(shape: [usize; 4], modes: usize, max_freq: i64, seed: u64) -> Result<GridField2Form> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<([f64; 4], [f64; 6], [f64; 6])> = (0..modes)
        .map(|_| {
            let mut k = [0.0; 4];
            while k.iter().all(|&v| v == 0.0) {
                for (a, slot) in k.iter_mut().enumerate() {
                    let lim = max_freq.min((shape[a] as i64 - 1) / 2);
                    *slot = if lim > 0 { rng.gen_range(-lim..=lim) as f64 } else { 0.0 };
                }
                if shape.iter().all(|&s| s < 3) {
                    break;
                }
            }
            let a = [(); 6].map(|_| rng.gen_range(-1.0..1.0));
            let b = [(); 6].map(|_| rng.gen_range(-1.0..1.0));
            (k, a, b)
        })
        .collect();
    GridField2Form::from_fn(shape, |x| {
        let mut c = [ZERO; 6];
        for (k, a, b) in &terms {
            let ph = TAU * (0..4).map(|i| k[i] * x[i]).sum::<f64>();
            let (s, co) = ph.sin_cos();
            for j in 0..6 {
                c[j] += C64::new(a[j] * co + b[j] * s, 0.0);
            }
        }
        c
    })
}
