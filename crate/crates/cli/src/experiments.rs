//! The named pipelines. Each fills a [`Report`]; errors that make a run
//! meaningless (bad input) are returned, failures of the mathematics are recorded.

use std::path::Path;

use genkahler::biherm::{
    extract_from_betas, hermitian_matrix, hodge_star, poisson_sigma, prop4_verify, BetaIdentityReport, round_trip_residual, selfdual_b_test,
    sigma_norm, synthetic_betas, synthetic_structure, BihermitianPoint, SyntheticPoint,
};
use genkahler::error::{Error, Result as CoreResult};
use genkahler::exterior::{wedge, ComplexForm};
use genkahler::flows::{
    hyperkahler_pair, joyce_deform, random_band_limited, split_closed_selfdual, verify_gk_field, FlowMap, GridField2Form,
    Hamiltonian,
};
use genkahler::gcs::{j_from_two_form, lemma1_check};
use genkahler::su2::{
    closedness_at, extension_check, flat, fubini_study, from_table, hirzebruch, log_grid, metric_from_extraction,
    point_metric, quartic, t_family, Boundary, RadialPoint, RadialProfile, EXPONENT_TOL,
};
use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::report::{Report, Table};
use crate::CliError;

/// Split of an upper bound between tolerance lookups and the report.
struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    rep: Report,
}

impl Ctx<'_> {
    fn check(&mut self, name: &str, residual: f64, default: f64, at: impl FnOnce() -> String) {
        let tol = self.cfg.tolerances.get(name, default);
        self.rep.record(name, residual, tol, at);
    }

    /// A yes/no check; only a per-name override can relax it.
    fn require(&mut self, name: &str, ok: bool, at: impl FnOnce() -> String) {
        let tol = self.cfg.tolerances.by_name.get(name).copied().unwrap_or(0.0);
        self.rep.record(name, if ok { 0.0 } else { 1.0 }, tol, at);
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let plot_x = match cfg.experiment.as_str() {
        "joyce" => "t",
        "hodge-t4" | "point-check" => "index",
        _ => "r",
    };
    let mut ctx = Ctx { cfg, rep: Report::new(&cfg.experiment, plot_x) };
    match cfg.experiment.as_str() {
        "cp2" => radial(&mut ctx, Boundary::Cp2)?,
        "f2" => radial(&mut ctx, Boundary::F2)?,
        "hyperkahler" => hyperkahler(&mut ctx),
        "joyce" => joyce(&mut ctx)?,
        "hodge-t4" => hodge(&mut ctx),
        "point-check" => point_check(&mut ctx),
        other => return Err(CliError::Config(format!("unknown experiment {other:?}"))),
    }
    Ok(ctx.rep)
}

fn input(e: Error) -> CliError {
    CliError::Input(e.to_string())
}

fn max_abs4(m: &Matrix4<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

// ---------------------------------------------------------------- shared point checks

/// Residuals common to every pointwise pair; returns the extracted point.
fn pair_checks(ctx: &mut Ctx, b1: &ComplexForm, b2: &ComplexForm, at: &dyn Fn() -> String) -> CoreResult<(BihermitianPoint, [f64; 6])> {
    let l1 = lemma1_check(b1, b2, 1, ctx.cfg.tolerances.get("pair_test", 1e-10))?;
    ctx.check("pair_same", l1.same_top_rel, 1e-10, at);
    ctx.check("pair_conj", l1.conj_top_rel, 1e-10, at);
    ctx.check("commutator", l1.commutator_rel, 1e-9, at);
    ctx.require("definite", l1.sign != 0, at);

    let bp = extract_from_betas(b1, b2)?;
    let min_eig = bp.min_metric_eigenvalue();
    ctx.require("metric_positive", min_eig > 0.0, at);
    ctx.check("p_bound", (bp.p.abs() - 1.0).max(0.0), 1e-10, at);
    ctx.check("hermiticity", bp.hermiticity_residual(), 1e-10, at);
    let (j1, j2) = (j_from_two_form(b1)?, j_from_two_form(b2)?);
    let round_trip = round_trip_residual(&j1, &j2)?;
    ctx.check("round_trip", round_trip, 1e-8, at);
    let sq = |w: &ComplexForm| wedge(w, w).map(|x| x.top());
    let (sp, sm) = (sq(&bp.omega_plus)?, sq(&bp.omega_minus)?);
    ctx.check("omega_squares", (sp - sm).norm() / sp.norm().max(f64::MIN_POSITIVE), 1e-9, at);

    let p3 = prop4_verify(b1, b2, &bp)?;
    let gap = 1.0 - bp.p * bp.p;
    // eq_b multiplies the small γ̄-coefficient of ω₋, known to relative accuracy ε/(1−p²),
    // by the large γγ̄; it is checked where sigma_gamma is.
    let beta_identities = if gap > 1e-6 { p3.max_residual() } else { BetaIdentityReport { eq_b: 0.0, ..p3 }.max_residual() };
    ctx.check("beta_identities", beta_identities, 1e-7, at);
    let poisson = poisson_sigma(&bp, f64::INFINITY)?;
    ctx.check("poisson_type", poisson.type_residual, 1e-9, at);
    ctx.check("poisson_route", poisson.route_residual, 1e-8, at);
    let sigma_gamma = match poisson.sigma_gamma_residual {
        Some(r) if gap > 1e-6 => {
            ctx.check("sigma_gamma", r, 1e-7, at);
            r
        }
        _ => f64::NAN,
    };
    Ok((bp, [l1.commutator_rel, round_trip, beta_identities, sigma_gamma, min_eig, sigma_norm_of(&poisson.sigma_plus)]))
}

fn sigma_norm_of(s: &nalgebra::Matrix2<genkahler::exterior::C64>) -> f64 {
    s.iter().fold(0.0, |m, z| m.max(z.norm()))
}

// ---------------------------------------------------------------- cp2 and f2

/// Reads `(r, H₂₂)` rows; a header line is allowed.
fn read_table(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Io { path: path.to_path_buf(), source: std::io::Error::other(e.to_string()) })?;
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let bad = || CliError::Input(format!("{}: row {} must hold two numbers r, H22", path.display(), line + 1));
        if rec.len() < 2 {
            return Err(bad());
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(r), Ok(h)) if r.is_finite() && h.is_finite() => rows.push((r, h)),
            _ if line == 0 => continue,
            _ => return Err(bad()),
        }
    }
    if rows.len() < 4 {
        return Err(CliError::Input(format!("{}: {} rows, need at least 4", path.display(), rows.len())));
    }
    if let Some(k) = rows.windows(2).position(|w| !(w[1].0 > w[0].0)) {
        return Err(CliError::Input(format!(
            "{}: radii must be strictly increasing, row {} has r = {} after {}",
            path.display(),
            k + 2,
            rows[k + 1].0,
            rows[k].0
        )));
    }
    if !(rows[0].0 > 0.0) {
        return Err(CliError::Input(format!("{}: radii must be positive", path.display())));
    }
    Ok(rows)
}

fn build_profile(cfg: &ExperimentConfig) -> Result<RadialProfile, CliError> {
    let grid = log_grid(cfg.grid_min, cfg.grid_max, cfg.grid_n);
    let base = match cfg.potential.as_str() {
        "fubini-study" => fubini_study(grid),
        "flat" => flat(grid),
        "hirzebruch" => hirzebruch(grid),
        "quartic" => quartic(grid),
        other => match other.strip_prefix("file:") {
            Some(path) => from_table(&read_table(Path::new(path))?, cfg.c, grid),
            None => {
                return Err(CliError::Config(format!(
                    "unknown potential {other:?}; expected fubini-study, flat, hirzebruch, quartic or file:PATH"
                )))
            }
        },
    }
    .map_err(input)?;
    if cfg.t < 1.0 {
        t_family(&base, cfg.t).map_err(input)
    } else {
        Ok(base)
    }
}

fn radial(ctx: &mut Ctx, boundary: Boundary) -> Result<(), CliError> {
    let profile = build_profile(ctx.cfg)?;
    let mut table = Table {
        columns: [
            "r", "H11", "H22", "H12", "lambda", "L", "p", "commutator", "round_trip", "beta_identities", "sigma_gamma", "det", "closedness",
            "metric",
        ]
        .map(String::from)
        .to_vec(),
        rows: Vec::new(),
    };
    let samples = profile.samples();
    for (k, pt) in samples.iter().enumerate() {
        let r = pt.r;
        let at = move || format!("r = {r:.6e}");
        match radial_point(ctx, &profile, pt, &at) {
            Ok((row, sigma)) => {
                for (name, v) in [("p", row[6]), ("H11", row[1]), ("H22", row[2]), ("H12", row[3]), ("lambda", row[4]), ("L", row[5])] {
                    ctx.rep.plot.push((name.into(), r, v));
                }
                ctx.rep.plot.push(("sigma_norm".into(), r, sigma));
                if k + 1 == samples.len() && profile.max_r() >= 1e3 * (1.0 - 1e-9) {
                    ctx.check("sigma_infinity", sigma, 1e-3, at);
                }
                table.rows.push(row);
            }
            Err(e) => ctx.rep.errors.push(format!("{}: {e}", at())),
        }
    }
    ctx.rep.table = table;
    if profile.min_r() <= 1e-3 * (1.0 + 1e-9) && profile.max_r() >= 1e3 * (1.0 - 1e-9) {
        match extension_check(&profile, boundary) {
            Ok(ext) => {
                for f in &ext.fits {
                    let name = format!("exponent_{}_{}", f.quantity, f.end);
                    ctx.check("boundary_exponents", (f.fitted - f.expected).abs(), EXPONENT_TOL, || name);
                }
                for (name, value, ok) in ext.limits {
                    ctx.require("boundary_limits", ok, || format!("{name} = {value:.6e}"));
                }
            }
            Err(e) => ctx.rep.errors.push(format!("boundary fit: {e}")),
        }
    }
    Ok(())
}

fn radial_point(ctx: &mut Ctx, profile: &RadialProfile, pt: &RadialPoint, at: &dyn Fn() -> String) -> CoreResult<(Vec<f64>, f64)> {
    let r = pt.r;
    let (b1, b2) = pt.betas();
    let (bp, [comm, round_trip, beta_identities, sigma_gamma, _, _]) = pair_checks(ctx, &b1, &b2, at)?;
    let sigma = sigma_norm(&bp);
    let det = pt.det_residual_rel();
    ctx.check("det", det, 1e-9, at);
    let closed = closedness_at(pt).form_rel;
    ctx.check("closedness", closed, 1e-9, at);
    let display = point_metric(pt)?;
    let (extracted, off) = metric_from_extraction(profile, r)?;
    let scale = display.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let metric = (0..4).map(|k| (display[k] - extracted[k]).abs() / display[k].abs()).fold(off / scale, f64::max);
    ctx.check("metric", metric, 1e-7, at);
    let row = vec![
        r,
        pt.h11.value(),
        pt.h22.value(),
        pt.h12.value(),
        pt.lambda.value(),
        pt.l.value(),
        bp.p,
        comm,
        round_trip,
        beta_identities,
        sigma_gamma,
        det,
        closed,
        metric,
    ];
    Ok((row, sigma))
}

// ---------------------------------------------------------------- hyperkahler

fn hyperkahler(ctx: &mut Ctx) {
    let (b1, b2) = hyperkahler_pair();
    let at = || "the flat pair".to_string();
    match pair_checks(ctx, &b1, &b2, &at) {
        Ok((bp, [comm, round_trip, beta_identities, sigma_gamma, min_eig, _])) => {
            // The flat pair is Euclidean up to the overall factor 2 of the extracted metric.
            let euclid = max_abs4(&(bp.g - Matrix4::identity() * 0.5));
            ctx.check("euclidean", euclid, 1e-12, at);
            // With p = 0 the pair reads β₁,₂ = −b + iω₊ ± γ̄/2, so b = −Re(β₁ + β₂)/2.
            let sum = (&b1 + &b2).to_matrix();
            let b_expected = Matrix4::from_fn(|i, j| -0.5 * sum[(i, j)].re);
            ctx.check("b_from_pair", max_abs4(&(bp.b - b_expected)), 1e-12, at);
            ctx.check("anticommute", max_abs4(&(bp.i_plus * bp.i_minus + bp.i_minus * bp.i_plus)), 1e-12, at);
            ctx.rep.table = Table {
                columns: ["g00", "p", "commutator", "round_trip", "beta_identities", "sigma_gamma", "min_metric_eigenvalue", "euclidean"]
                    .map(String::from)
                    .to_vec(),
                rows: vec![vec![bp.g[(0, 0)], bp.p, comm, round_trip, beta_identities, sigma_gamma, min_eig, euclid]],
            };
        }
        Err(e) => ctx.rep.errors.push(format!("flat pair: {e}")),
    }
}

// ---------------------------------------------------------------- joyce

fn joyce(ctx: &mut Ctx) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let h = Hamiltonian::preset(&cfg.potential, 1.0)
        .map_err(|_| CliError::Config(format!("unknown Hamiltonian {:?}; expected quadratic, linear or bump", cfg.potential)))?;
    let n = cfg.resolution;
    let dx2 = (1.0 / n as f64).powi(2);

    // At t = 0 the pair is the hyperkähler pair on the nose.
    let (hb1, hb2) = hyperkahler_pair();
    match joyce_deform(&h, 0.0, n) {
        Ok(f) => {
            let shape = f.beta1.shape();
            let diff = GridField2Form::constant(shape, &hb1)
                .and_then(|c1| Ok(f.beta1.max_abs_diff(&c1)?.max(f.beta2.max_abs_diff(&GridField2Form::constant(shape, &hb2)?)?)));
            match diff {
                Ok(d) => ctx.check("t0_hyperkahler", d, 1e-14, || "t = 0".into()),
                Err(e) => ctx.rep.errors.push(format!("t = 0: {e}")),
            }
        }
        Err(e) => ctx.rep.errors.push(format!("t = 0: {e}")),
    }

    let mut ts = vec![cfg.t];
    ts.extend(cfg.t_values.iter().copied());
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let mut table = Table {
        columns: ["t", "N", "d_beta1", "d_beta2", "symplectic", "commutator", "torsion_minus", "torsion_plus", "min_metric_eigenvalue"]
            .map(String::from)
            .to_vec(),
        rows: Vec::new(),
    };
    for t in ts {
        let at = move || format!("t = {t:.6e}");
        let fields = match joyce_deform(&h, t, n) {
            Ok(f) => f,
            Err(e) => {
                ctx.rep.errors.push(format!("{}: {e}", at()));
                continue;
            }
        };
        let rep = match verify_gk_field(&fields.beta1, &fields.beta2, cfg.tolerances.get("pair_test", 1e-9)) {
            Ok(r) => r,
            Err(e) => {
                ctx.rep.errors.push(format!("{}: {e}", at()));
                continue;
            }
        };
        // Discretization residuals are O(t·Δx²).
        let disc = 10.0 * t.abs() * dx2;
        let failure = rep.first_failure.as_ref().map(|f| format!("{}, grid index {:?}: {}", at(), f.index, f.reason));
        ctx.require("pointwise", rep.pointwise_pass, || failure.unwrap_or_default());
        ctx.check("commutator", rep.max_commutator_rel, 1e-8, at);
        ctx.require("metric_positive", rep.min_metric_eigenvalue > 0.0, at);
        ctx.check("d_beta1", rep.d_beta1, disc, at);
        ctx.check("d_beta2", rep.d_beta2, disc, at);
        let symplectic = FlowMap::symplectic_residual(&fields.flow.fd_jacobian());
        ctx.check("symplectic", symplectic, disc, at);
        let (minus, plus) = match &rep.torsion {
            Some(th) => {
                ctx.check("torsion_minus", th.minus, disc, at);
                ctx.check("torsion_plus", th.plus, disc, at);
                (th.minus, th.plus)
            }
            None => {
                if rep.pointwise_pass {
                    ctx.rep.errors.push(format!("{}: torsion identity not evaluated", at()));
                }
                (f64::NAN, f64::NAN)
            }
        };
        let row = vec![t, n as f64, rep.d_beta1, rep.d_beta2, symplectic, rep.max_commutator_rel, minus, plus, rep.min_metric_eigenvalue];
        for (k, name) in table.columns.iter().enumerate().skip(2) {
            if row[k].is_finite() {
                ctx.rep.plot.push((name.clone(), t, row[k]));
            }
        }
        table.rows.push(row);
    }
    ctx.rep.table = table;
    Ok(())
}

// ---------------------------------------------------------------- hodge-t4

fn hodge(ctx: &mut Ctx) {
    let n = ctx.cfg.resolution;
    let max_freq = ((n as i64 - 1) / 2).min(3);
    let mut table = Table { columns: ["index", "seed", "reconstruction", "d_closed", "selfdual"].map(String::from).to_vec(), rows: Vec::new() };
    for k in 0..ctx.cfg.count {
        let seed = ctx.cfg.seed.wrapping_add(k as u64);
        let at = move || format!("field {k} (seed {seed})");
        let split = random_band_limited([n; 4], 10, max_freq, seed).and_then(|b| split_closed_selfdual(&b));
        match split {
            Ok(s) => {
                ctx.check("reconstruction", s.reconstruction, 1e-10, at);
                ctx.check("d_closed", s.d_closed, 1e-10, at);
                ctx.check("selfdual", s.selfdual_residual, 1e-10, at);
                let x = k as f64;
                ctx.rep.plot.push(("reconstruction".into(), x, s.reconstruction));
                ctx.rep.plot.push(("d_closed".into(), x, s.d_closed));
                ctx.rep.plot.push(("selfdual".into(), x, s.selfdual_residual));
                table.rows.push(vec![x, seed as f64, s.reconstruction, s.d_closed, s.selfdual_residual]);
            }
            Err(e) => ctx.rep.errors.push(format!("{}: {e}", at())),
        }
    }
    ctx.rep.table = table;
}

// ---------------------------------------------------------------- point-check

/// A random synthetic point; with `selfdual` its b is projected to the self-dual part.
pub fn random_synthetic(rng: &mut ChaCha8Rng, selfdual: bool) -> CoreResult<SyntheticPoint> {
    let mut a = Matrix4::identity();
    for v in a.iter_mut() {
        *v += rng.gen_range(-0.3..0.3);
    }
    let mut b = Matrix4::zeros();
    for i in 0..4 {
        for j in i + 1..4 {
            let v = rng.gen_range(-0.6..0.6);
            b[(i, j)] = v;
            b[(j, i)] = -v;
        }
    }
    let p = rng.gen_range(-0.98..0.98);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    if selfdual {
        let (g, ip) = synthetic_structure(&a)?;
        let w = hermitian_matrix(&g, &ip);
        let pf = w[(0, 1)] * w[(2, 3)] - w[(0, 2)] * w[(1, 3)] + w[(0, 3)] * w[(1, 2)];
        b = (b + hodge_star(&b, &g, pf.signum())?) * 0.5;
    }
    Ok(SyntheticPoint { a, b, p, phase })
}

fn point_check(ctx: &mut Ctx) {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let mut table = Table {
        columns: ["index", "selfdual_input", "p", "b_asd", "rank", "round_trip", "beta_identities", "sigma_gamma"].map(String::from).to_vec(),
        rows: Vec::new(),
    };
    for k in 0..ctx.cfg.count {
        let sd = k % 2 == 1;
        let at = move || format!("point {k}");
        let result = random_synthetic(&mut rng, sd).and_then(|pt| {
            let (b1, b2) = synthetic_betas(&pt)?;
            let (bp, [_, round_trip, beta_identities, sigma_gamma, _, _]) = pair_checks(ctx, &b1, &b2, &at)?;
            ctx.check("p_recovered", (bp.p - pt.p).abs(), 1e-8, at);
            ctx.check("b_recovered", max_abs4(&(bp.b - pt.b)) / max_abs4(&pt.b).max(1.0), 1e-8, at);
            let sdr = selfdual_b_test(&b1, &b2, &bp, 1e-8)?;
            ctx.require("selfdual_agreement", sdr.agree, at);
            ctx.require("selfdual_expected", sdr.self_dual == sd, at);
            Ok(vec![k as f64, sd as u8 as f64, bp.p, sdr.b_asd, sdr.rank as f64, round_trip, beta_identities, sigma_gamma])
        });
        match result {
            Ok(row) => {
                ctx.rep.plot.push(("p".into(), k as f64, row[2]));
                ctx.rep.plot.push(("b_asd".into(), k as f64, row[3]));
                table.rows.push(row);
            }
            Err(e) => ctx.rep.errors.push(format!("{}: {e}", at())),
        }
    }
    ctx.rep.table = table;
}
