use std::sync::Arc;

use genkahler::biherm::{extract_from_betas, gamma_in_frame, poisson_sigma, prop4_verify, round_trip_residual, sigma_norm};
use genkahler::exterior::{ComplexForm, C64};
use genkahler::gcs::lemma1_check;
use genkahler::su2::*;
use genkahler::Error;
use num_dual::{Dual3_64, DualNum};

fn one() -> C64 {
    C64::new(1.0, 0.0)
}

#[test]
fn structure_equations() {
    let v1 = FrameJet::from_jets(1.3, &[(word(&[V1]), one(), Jet::constant(1.0))]).unwrap();
    let d = frame_d(&v1).unwrap();
    assert!((d.value() - &(-word(&[V2, V2B]))).norm_max() < 1e-15);
    // dv₁ = i dσ₁ = 2i σ₂σ₃ in the real coframe.
    let real = d.to_real();
    assert!((real.coeff(&[2, 3]) - C64::new(0.0, 2.0)).norm() < 1e-15);
    assert!(real.terms().filter(|(_, c)| c.norm() > 1e-15).count() == 1);

    let c = FrameJet::from_jets(0.7, &[(word(&[]), one(), Jet::constant(3.0))]).unwrap();
    assert!(frame_d(&c).unwrap().value().norm_max() < 1e-15);
}

#[test]
fn holomorphic_volume_is_closed() {
    for r in [0.01, 0.5, 1.0, 7.0] {
        let rr = Jet::variable(r);
        let b = FrameJet::from_jets(r, &[(word(&[V1, V2]), one(), rr * rr)]).unwrap();
        assert!(frame_d(&b).unwrap().value().norm_max() < 1e-13 * r * r);
    }
}

#[test]
fn d_squared_vanishes_on_mixed_forms() {
    let f = FrameForm::from_terms(vec![
        (word(&[V1]), one(), Arc::new(|x: Dual3_64| x.sin())),
        (word(&[V2B]), C64::new(0.0, 1.0), Arc::new(|x: Dual3_64| x * x * x)),
        (word(&[V1, V2B]), one(), Arc::new(|x: Dual3_64| x.exp())),
        (word(&[]), one(), Arc::new(|x: Dual3_64| x.ln())),
    ]);
    let dd = f.d().d();
    for r in [0.3, 1.0, 2.5] {
        assert!(dd.eval(r).unwrap().value().norm_max() < 1e-12);
    }
}

#[test]
fn radial_derivative_matches_dr() {
    // d f(r) = f′ dr = f′ r e₀.
    let f = FrameForm::from_terms(vec![(word(&[]), one(), Arc::new(|x: Dual3_64| x * x))]);
    let df = f.d().eval(1.7).unwrap().to_real();
    assert!((df.coeff(&[0]) - C64::new(2.0 * 1.7 * 1.7, 0.0)).norm() < 1e-13);
}

#[test]
fn quartic_potential() {
    let p = quartic(log_grid(0.1, 10.0, 20)).unwrap();
    let s20 = 20f64.sqrt();
    for r in [0.1, 1.0, 3.0, 10.0] {
        let pt = p.point(r).unwrap();
        assert!((pt.lambda.value() + 4.0 * r * r).abs() < 1e-12 * r * r);
        assert!(pt.h12.value().abs() < 1e-12 * r * r && pt.h21.value().abs() < 1e-12 * r * r);
        assert!((pt.h22.value() - s20 * r * r).abs() < 1e-12 * r * r);
        assert!((pt.h11.value() - s20 * r * r).abs() < 1e-12 * r * r);
        assert!(pt.det_residual_rel() < 1e-12);
        let cl = closedness_at(&pt);
        assert!(cl.form_rel < 1e-12 && cl.ode_max() < 1e-11 * r * r, "{cl:?}");
    }
    let m = metric_coeffs(&p, 1.0).unwrap();
    for c in m {
        assert!((c - s20 / 9.0).abs() < 1e-12);
    }
}

#[test]
fn degenerate_potential_is_rejected() {
    let r = quadrature(Arc::new(|x: Dual3_64| x * 0.0), Constants { c: 2.0, ..Default::default() }, log_grid(0.1, 1.0, 5));
    assert!(matches!(r, Err(Error::NonPositiveH { which: "H11", .. })), "{r:?}");
}

#[test]
fn flat_metric_potential() {
    let p = flat(log_grid(0.01, 100.0, 30)).unwrap();
    for pt in p.samples() {
        let r4 = pt.r.powi(4);
        assert!((pt.l.value() - r4 * (1.0 - 5f64.sqrt()) / 8.0).abs() < 1e-13 * r4);
        assert!(pt.det_residual_rel() < 1e-12);
    }
}

#[test]
fn fubini_study_round_trip() {
    let p = fubini_study(default_grid()).unwrap();
    let reseed = quadrature(p.potential(), Constants::default(), default_grid()).unwrap();
    for (a, b) in p.samples().iter().zip(reseed.samples()) {
        let h = a.r * a.r / (1.0 + a.r * a.r);
        assert!((b.h22.value() - h).abs() < 1e-9 * h);
        assert!(a.l.value() < 0.0);
        assert!(a.det_residual_rel() < 1e-9);
    }
}

#[test]
fn closedness_detects_perturbation() {
    let p = fubini_study(default_grid()).unwrap();
    let mut pt = p.point(1.0).unwrap();
    let clean = closedness_at(&pt);
    assert!(clean.form < 1e-12 && clean.ode_max() < 1e-12, "{clean:?}");
    pt.h12 = pt.h12 + 0.01;
    let bad = closedness_at(&pt);
    assert!(bad.form > 1e-3 && bad.v1_v1b_v2b.norm() > 1e-3);
    assert!((bad.v1_v1b_v2b.re + 0.5 * bad.ode[0]).abs() < 1e-12);
}

#[test]
fn hirzebruch_boundary() {
    let p = hirzebruch(default_grid()).unwrap();
    let rep = extension_check(&p, Boundary::F2).unwrap();
    assert!(rep.pass, "{rep:?}");
    let lim = origin_limits(&p).unwrap();
    for (w, c) in &lim.coefficients {
        if *w == "v2v2b" {
            assert!(*c > 0.5);
        } else {
            assert!(*c < 1e-5, "{w} {c}");
        }
    }
    assert!(lim.h11_over_r4 > 0.5);
}

#[test]
fn cp2_boundary() {
    let p = fubini_study(default_grid()).unwrap();
    let rep = extension_check(&p, Boundary::Cp2).unwrap();
    assert!(rep.pass, "{rep:?}");
    let wrong = extension_check(&p, Boundary::F2).unwrap();
    assert!(!wrong.pass);
    assert!(wrong.fits.iter().any(|f| f.quantity == "H22" && f.end == "0" && !f.pass));
    let short = fubini_study(log_grid(0.1, 10.0, 20)).unwrap();
    assert!(matches!(extension_check(&short, Boundary::Cp2), Err(Error::InsufficientRange(_))));
}

#[test]
fn end_to_end_on_fubini_study() {
    let p = fubini_study(default_grid()).unwrap();
    for r in log_grid(1e-3, 1e3, 50) {
        let (b1, b2) = build_betas(&p, r).unwrap();
        let l1 = lemma1_check(&b1, &b2, 1, 1e-9).unwrap();
        assert!(l1.pass, "r = {r}: {l1:?}");
        let bp = extract_from_betas(&b1, &b2).unwrap();
        assert!(bp.p.abs() <= 1.0 + 1e-10);
        let ps = poisson_sigma(&bp, 1e-9).unwrap();
        let sigma_gamma = ps.sigma_gamma_residual.unwrap();
        assert!(sigma_gamma < 1e-7, "r = {r}: {sigma_gamma}");
        let (disp, off) = (metric_coeffs(&p, r).unwrap(), metric_from_extraction(&p, r).unwrap());
        for k in 0..4 {
            assert!((disp[k] - off.0[k]).abs() < 1e-7 * disp[k], "r = {r}: {disp:?} vs {:?}", off.0);
        }
        assert!(off.1 < 1e-7 * disp.iter().cloned().fold(0.0, f64::max));
    }
}

#[test]
fn beta_identities_on_profile() {
    let p = fubini_study(default_grid()).unwrap();
    let (b1, b2) = build_betas(&p, 1.0).unwrap();
    let bp = extract_from_betas(&b1, &b2).unwrap();
    let rep = prop4_verify(&b1, &b2, &bp).unwrap();
    assert!(rep.max_residual() < 1e-7, "{rep:?}");
    let g = gamma_in_frame(bp.gamma.as_ref().unwrap(), &bp.frame);
    assert!(g.iter().any(|z| z.norm() > 1e-3));
}

#[test]
fn t_family_limit() {
    let p = fubini_study(default_grid()).unwrap();
    let same = t_family(&p, 1.0).unwrap();
    assert_eq!(same.t, 1.0);
    assert!(matches!(t_family(&p, 0.0), Err(Error::InvalidParameter(_))));
    let r = 1.3;
    let kah = p.point(r).unwrap();
    let target = [kah.h11.value(), kah.h11.value(), kah.h22.value(), kah.h22.value()];
    let mut prev = f64::INFINITY;
    for k in 1..=6 {
        let t = 10f64.powi(-k);
        let q = t_family(&p, t).unwrap();
        let pt = q.point(r).unwrap();
        assert!(pt.det_residual_rel() < 1e-10);
        let m = metric_coeffs(&q, r).unwrap();
        let err = (0..4).map(|i| (m[i] / t - target[i]).abs()).fold(0.0, f64::max);
        assert!(err < prev);
        assert!(err < 10.0 * t, "t = {t}: {err}");
        prev = err;
    }
}

#[test]
fn spline_table_profile() {
    let rs = log_grid(1e-2, 1e2, 400);
    let table: Vec<(f64, f64)> = rs.iter().map(|&r| (r, r * r / (1.0 + r * r))).collect();
    let p = from_table(&table, 0.0, log_grid(2e-2, 50.0, 40)).unwrap();
    let fs = fubini_study(log_grid(2e-2, 50.0, 40)).unwrap();
    for (a, b) in p.samples().iter().zip(fs.samples()) {
        assert!((a.h22.value() - b.h22.value()).abs() < 1e-5 * b.h22.value());
        assert!((a.l.value() - b.l.value()).abs() < 1e-4 * b.l.value().abs());
    }
    assert!(matches!(from_table(&table, 0.0, log_grid(1e-3, 1.0, 5)), Err(Error::OutOfRange { .. })));
}

#[test]
fn out_of_range_radius() {
    let p = fubini_study(log_grid(0.1, 10.0, 10)).unwrap();
    assert!(matches!(build_betas(&p, 20.0), Err(Error::OutOfRange { .. })));
    let _ = ComplexForm::zero(4);
}

#[test]
fn real_forms_are_self_conjugate() {
    let p = fubini_study(log_grid(0.1, 10.0, 10)).unwrap();
    let pt = p.point(2.0).unwrap();
    let (b1, b2) = (pt.beta1_frame(), pt.beta2_frame());
    let im = &b2.value().clone() - &b2.conj().value().clone();
    // β₂ − β̄₂ = 2(H₁₁v₁v̄₁ + H₂₂v₂v̄₂) once H₁₂ = −H₂₁.
    let expect = &(&word(&[V1, V1B]) * (2.0 * pt.h11.value())) + &(&word(&[V2, V2B]) * (2.0 * pt.h22.value()));
    assert!((&im - &expect).norm_max() < 1e-12);
    assert!(b1.reality_residual() > 1.0);
    let re = FrameJet::new(2.0, vec![b1.value() + b1.conj().value()]).unwrap();
    assert!(re.reality_residual() < 1e-15);
    assert!(re.to_real().norm_max() > 0.0 && re.to_real().coeffs().iter().all(|c| c.im.abs() < 1e-15));
}

#[test]
fn hirzebruch_sweep_end_to_end() {
    // The coframe coefficients spread over twelve orders of magnitude at both ends.
    let p = hirzebruch(default_grid()).unwrap();
    for pt in p.samples() {
        let (b1, b2) = pt.betas();
        let l1 = lemma1_check(&b1, &b2, 1, 1e-9).unwrap();
        assert!(l1.pass && l1.sign == -1, "r = {}: {l1:?}", pt.r);
        let j1 = genkahler::gcs::j_from_two_form(&b1).unwrap();
        let j2 = genkahler::gcs::j_from_two_form(&b2).unwrap();
        assert!(round_trip_residual(&j1, &j2).unwrap() < 1e-8, "r = {}", pt.r);
        let bp = extract_from_betas(&b1, &b2).unwrap();
        assert!(bp.min_metric_eigenvalue() > 0.0);
    }
    let far = p.point(1e3).unwrap();
    let (b1, b2) = far.betas();
    assert!(sigma_norm(&extract_from_betas(&b1, &b2).unwrap()) < 1e-3);
}
