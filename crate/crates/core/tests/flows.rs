use genkahler::exterior::{ComplexForm, C64};
use genkahler::flows::*;
use genkahler::gcs::lemma1_check;
use genkahler::Error;
use nalgebra::{Matrix3, Matrix4};

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

fn e(i: usize, j: usize) -> ComplexForm {
    ComplexForm::basis(4, &[i, j]).unwrap()
}

#[test]
fn hyperkahler_pair_identities() {
    let (b1, b2) = hyperkahler_pair();
    let [w1, w2, w3] = hyperkahler_triple();
    let i = C64::new(0.0, 1.0);
    assert!((&b1 - &b2).approx_eq(&(&w1 - &w3.scale(i)), 0.0));
    assert!((&b1 - &b2.conj()).approx_eq(&(&w1 + &w2.scale(i)), 0.0));
    let rep = lemma1_check(&b1, &b2, 1, 1e-12).unwrap();
    assert!(rep.pass);
    assert_eq!(rep.same_top, 0.0);
    assert_eq!(rep.conj_top, 0.0);
    assert!(rep.commutator < 1e-15);
    // Definite, with the sign fixed by the pairing convention.
    assert_eq!(rep.sign, -1);
}

#[test]
fn zero_time_is_hyperkahler_exactly() {
    let h = Hamiltonian::preset("bump", 0.3).unwrap();
    let j = joyce_deform(&h, 0.0, 8).unwrap();
    let (b1, b2) = hyperkahler_pair();
    assert_eq!(j.flow.steps, 0);
    assert_eq!(j.beta1, GridField2Form::constant(j.beta1.shape(), &b1).unwrap());
    assert_eq!(j.beta2, GridField2Form::constant(j.beta2.shape(), &b2).unwrap());
    let rep = verify_gk_field(&j.beta1, &j.beta2, 1e-10).unwrap();
    assert!(rep.pointwise_pass);
    assert_eq!(rep.d_beta1, 0.0);
    assert!(rep.max_commutator_rel < 1e-15);
    assert!(rep.torsion.unwrap().max() < 1e-13);
}

#[test]
fn linear_hamiltonian_translates() {
    let h = Hamiltonian::preset("linear", 1.0).unwrap();
    let j = joyce_deform(&h, 0.37, 16).unwrap();
    let zero = joyce_deform(&h, 0.0, 16).unwrap();
    assert_eq!(j.beta1, zero.beta1);
    assert_eq!(j.beta2, zero.beta2);
    // X = (c₁, −c₀, c₃, −c₂).
    let c = [1.0, 0.5, -0.25, 0.75];
    let v = [c[1], -c[0], c[3], -c[2]];
    for (k, img) in j.flow.image.iter().enumerate() {
        let x = zero.flow.image[k];
        for a in 0..4 {
            assert!((img[a] - x[a] - 0.37 * v[a]).abs() < 1e-14);
        }
    }
}

#[test]
fn quadratic_form_flow_matches_matrix_exponential() {
    let s = Matrix4::new(1.0, 0.2, 0.0, -0.3, 0.2, 0.5, 0.4, 0.0, 0.0, 0.4, -0.7, 0.1, -0.3, 0.0, 0.1, 0.9);
    let h = Hamiltonian::QuadraticForm(s);
    let a = hamiltonian_matrix() * s;
    let anorm = a.norm();
    for t in [0.05, 0.3, 1.0] {
        let map = flow(&h, t, [2, 2, 2, 2]).unwrap();
        let exact = (a * t).exp();
        let err = map.jacobian.iter().map(|j| (j - exact).abs().max()).fold(0.0, f64::max);
        // Local RK4 error is (hA)⁵/120 per step.
        let bound = t * anorm.powi(5) * map.step.powi(4) * exact.norm();
        assert!(err < bound, "t={t}: {err:e} vs {bound:e}");
        for (k, img) in map.image.iter().enumerate() {
            let x = nalgebra::Vector4::from([0, 1, 2, 3].map(|i| ((k >> (3 - i)) & 1) as f64 / 2.0));
            let y = exact * x;
            for i in 0..4 {
                assert!((img[i] - y[i]).abs() < bound.max(1e-14));
            }
        }
        // Pullback of ω₃ against the closed form.
        let [_, _, w3] = hyperkahler_triple();
        let w3f = GridField2Form::constant([1; 4], &w3).unwrap();
        let pulled = pullback(&w3f, &map).unwrap();
        let m3 = mat_of(&comps_of(&w3)).map(|z| z.re);
        let want = exact.transpose() * m3 * exact;
        for c in pulled.data() {
            let got = mat_of(c).map(|z| z.re);
            assert!((got - want).abs().max() < 10.0 * bound);
        }
        assert!(FlowMap::symplectic_residual(&map.jacobian) < 10.0 * bound);
    }
}

#[test]
fn joyce_quadratic_convergence() {
    let h = Hamiltonian::preset("quadratic", 1.0).unwrap();
    let ns = [16usize, 32, 64];
    let mut dx = Vec::new();
    let (mut d1, mut d2, mut sym, mut tm, mut tp) = (vec![], vec![], vec![], vec![], vec![]);
    for &n in &ns {
        let j = joyce_deform(&h, 0.05, n).unwrap();
        assert_eq!(j.beta1.shape(), [n, n, n, 1]);
        let rep = verify_gk_field(&j.beta1, &j.beta2, 1e-8).unwrap();
        assert!(rep.pointwise_pass, "{:?}", rep.first_failure);
        assert!(rep.max_commutator_rel < 1e-8);
        assert!(rep.min_metric_eigenvalue > 0.0);
        let th = rep.torsion.unwrap();
        assert!(th.minus_flipped > 0.1 && th.plus_flipped > 0.1);
        dx.push(1.0 / n as f64);
        d1.push(rep.d_beta1);
        d2.push(rep.d_beta2);
        tm.push(th.minus);
        tp.push(th.plus);
        sym.push(FlowMap::symplectic_residual(&j.flow.fd_jacobian()));
        assert!(FlowMap::symplectic_residual(&j.flow.jacobian) < 1e-10);
        assert!(FlowMap::volume_residual(&j.flow.jacobian) < 1e-10);
    }
    for (name, ys) in [("dβ₁", &d1), ("dβ₂", &d2), ("symplectic", &sym), ("d^c₋ω₋ − db", &tm), ("db + d^c₊ω₊", &tp)] {
        let k = slope(&dx, ys);
        assert!(k >= 1.9, "{name}: order {k} from {ys:?}");
    }
}

#[test]
fn residuals_vanish_linearly_in_t() {
    let h = Hamiltonian::preset("quadratic", 1.0).unwrap();
    let ts = [0.04, 0.02, 0.01];
    let (mut d, mut th) = (vec![], vec![]);
    for &t in &ts {
        let j = joyce_deform(&h, t, 16).unwrap();
        let rep = verify_gk_field(&j.beta1, &j.beta2, 1e-8).unwrap();
        d.push(rep.d_beta1);
        th.push(rep.torsion.unwrap().max());
    }
    assert!(slope(&ts, &d) >= 0.9);
    assert!(slope(&ts, &th) >= 0.9);
}

#[test]
fn failure_is_bracketed() {
    let h = Hamiltonian::preset("quadratic", 1.0).unwrap();
    let b = bracket_failure(&h, 8, 0.5, 1.0, 8, 1e-8).unwrap();
    assert!(b.t_pass < b.t_fail && b.t_fail - b.t_pass < 0.5 / 128.0);
    let fail = joyce_deform(&h, b.t_fail, 8).unwrap();
    let rep = verify_gk_field(&fail.beta1, &fail.beta2, 1e-8).unwrap();
    assert_eq!(rep.first_failure.as_ref(), Some(&b.failure));
    let ok = joyce_deform(&h, b.t_pass, 8).unwrap();
    assert!(verify_gk_field(&ok.beta1, &ok.beta2, 1e-8).unwrap().pointwise_pass);
    assert!(matches!(bracket_failure(&h, 8, 1.0, 2.0, 2, 1e-8), Err(Error::InvalidParameter(_))));
}

#[test]
fn step_control_and_degenerate_grid() {
    let h = Hamiltonian::preset("quadratic", 1e4).unwrap();
    assert!(matches!(joyce_deform(&h, 0.05, 8), Err(Error::StepControl { .. })));
    let h = Hamiltonian::preset("bump", 0.1).unwrap();
    assert!(matches!(joyce_deform(&h, 0.05, 3), Err(Error::InterpolationDegenerate(_))));
    let f = GridField2Form::constant([3, 1, 1, 1], &e(0, 1)).unwrap();
    assert!(matches!(f.interpolate([0.1; 4]), Err(Error::InterpolationDegenerate(_))));
    assert!(matches!(Hamiltonian::preset("cubic", 1.0), Err(Error::InvalidParameter(_))));
}

#[test]
fn interpolation_is_third_order() {
    let errs: Vec<f64> = [16usize, 32, 64]
        .iter()
        .map(|&n| {
            let f = GridField2Form::from_fn([n, n, 1, 1], |x| {
                let v = (6.283185307179586 * x[0]).sin() * (6.283185307179586 * x[1]).cos();
                [C64::new(v, -v), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]
            })
            .unwrap();
            (0..50)
                .map(|k| {
                    let x = [0.013 * k as f64 + 0.0031, 0.029 * k as f64 - 0.4, 0.2, 0.7];
                    let v = (6.283185307179586 * x[0]).sin() * (6.283185307179586 * x[1]).cos();
                    (f.interpolate(x).unwrap()[0] - C64::new(v, -v)).norm()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    assert!(slope(&[16.0, 32.0, 64.0], &errs) < -2.9, "{errs:?}");
}

#[test]
fn table_hamiltonian_approaches_preset() {
    let exact = Hamiltonian::preset("quadratic", 1.0).unwrap();
    let reference = flow(&exact, 0.05, [8, 8, 8, 1]).unwrap();
    let mut errs = vec![];
    for n in [16usize, 32] {
        let shape = [n, n, n, 1];
        let values = (0..n * n * n)
            .map(|k| {
                let x = [k / (n * n), (k / n) % n, k % n].map(|i| i as f64 / n as f64);
                exact.eval([x[0], x[1], x[2], 0.0]).0
            })
            .collect();
        let table = Hamiltonian::Table(ScalarTable::new(shape, values).unwrap());
        assert_eq!(table.support(), [true, true, true, false]);
        let map = flow(&table, 0.05, [8, 8, 8, 1]).unwrap();
        errs.push(map.jacobian.iter().zip(&reference.jacobian).map(|(a, b)| (a - b).abs().max()).fold(0.0, f64::max));
    }
    assert!(errs[1] < errs[0] / 3.5 && errs[1] < 1e-3, "{errs:?}");
}

#[test]
fn quadratic_preset_derivatives() {
    let s = Matrix3::new(1.0, 0.3, 0.0, 0.3, 0.5, 0.2, 0.0, 0.2, 0.8);
    for h in [Hamiltonian::Quadratic(s), Hamiltonian::Bump { amplitude: 0.7, kappa: 1.3, center: [0.1, 0.2, 0.3, 0.4] }] {
        let x = [0.13, 0.71, 0.44, 0.9];
        let (_, g, hess) = h.eval(x);
        let step = 1e-5;
        for a in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += step;
            xm[a] -= step;
            let (fp, gp, _) = h.eval(xp);
            let (fm, gm, _) = h.eval(xm);
            assert!(((fp - fm) / (2.0 * step) - g[a]).abs() < 1e-8);
            for b in 0..4 {
                assert!(((gp[b] - gm[b]) / (2.0 * step) - hess[(b, a)]).abs() < 1e-7);
            }
        }
    }
}

fn sd_check(b: &GridField2Form) -> Split {
    let s = split_closed_selfdual(b).unwrap();
    assert!(s.reconstruction < 1e-10, "{}", s.reconstruction);
    assert!(s.d_closed < 1e-10, "{}", s.d_closed);
    assert!(s.selfdual_residual < 1e-10, "{}", s.selfdual_residual);
    s
}

#[test]
fn split_constant_forms() {
    for f in [&e(0, 2) + &e(1, 3).scale(C64::new(0.0, 2.0)), &e(0, 1) - &e(2, 3)] {
        let b = GridField2Form::constant([4, 4, 4, 4], &f).unwrap();
        let s = sd_check(&b);
        assert_eq!(s.closed, b);
        assert_eq!(s.selfdual.max_abs(), 0.0);
    }
}

#[test]
fn split_single_mode_closed_form() {
    // For b = sin(2πx₀) e₂₃ the self-dual part is sin(2πx₀)(e₀₁ + e₂₃).
    let n = 16;
    let mut b = GridField2Form::from_fn([n, 1, 1, 1], |x| {
        let mut c = [C64::new(0.0, 0.0); 6];
        c[5] = C64::new((6.283185307179586 * x[0]).sin(), 0.0);
        c
    })
    .unwrap();
    let s = sd_check(&b);
    for k in 0..n {
        let v = (6.283185307179586 * b.coords(k)[0]).sin();
        let c = s.selfdual.data()[k];
        assert!((c[0].re - v).abs() < 1e-13 && (c[5].re - v).abs() < 1e-13);
        assert!(c[1..5].iter().all(|z| z.norm() < 1e-13));
    }
    assert!(s.selfdual.max_abs() > 0.9);
    b = GridField2Form::from_data(b.shape(), b.data().to_vec()).unwrap();
    assert_eq!(split_closed_selfdual(&b).unwrap().selfdual, s.selfdual);
}

#[test]
fn split_random_band_limited() {
    let start = std::time::Instant::now();
    for seed in 0..100 {
        let b = random_band_limited([8, 8, 8, 8], 10, 3, seed).unwrap();
        let s = sd_check(&b);
        // The closed part is closed at the grid level too, up to truncation.
        assert!(s.closed.d_residual() < 20.0 * b.max_abs() * 40.0);
    }
    assert!(start.elapsed().as_secs_f64() < 60.0);
    assert_eq!(random_band_limited([8; 4], 10, 3, 7).unwrap(), random_band_limited([8; 4], 10, 3, 7).unwrap());
    assert_ne!(random_band_limited([8; 4], 10, 3, 7).unwrap(), random_band_limited([8; 4], 10, 3, 8).unwrap());
}

#[test]
fn csv_round_trip() {
    let b = random_band_limited([4, 1, 3, 2], 3, 1, 11).unwrap();
    let c = GridField2Form::combine(&[(C64::new(0.5, -1.0), &b)]).unwrap();
    let mut buf = Vec::new();
    c.write_csv(&mut buf).unwrap();
    let back = GridField2Form::read_csv(&buf[..]).unwrap();
    assert_eq!(back, c);
    let text = String::from_utf8(buf).unwrap();
    let truncated: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
    assert!(GridField2Form::read_csv(truncated.as_bytes()).is_err());
    assert!(GridField2Form::read_csv("i0,i1\n0,0\n".as_bytes()).is_err());
}
