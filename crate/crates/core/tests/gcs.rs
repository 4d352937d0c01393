use genkahler::biherm::{synthetic_betas, SyntheticPoint};
use genkahler::exterior::*;
use genkahler::gcs::*;
use genkahler::Error;
use nalgebra::{DMatrix, Matrix4};
use proptest::prelude::*;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn e(ix: &[usize]) -> ComplexForm {
    ComplexForm::basis(4, ix).unwrap()
}

fn std_complex() -> DMatrix<f64> {
    let mut i = DMatrix::zeros(4, 4);
    i[(1, 0)] = 1.0;
    i[(0, 1)] = -1.0;
    i[(3, 2)] = 1.0;
    i[(2, 3)] = -1.0;
    i
}

fn omega_std() -> ComplexForm {
    &e(&[0, 1]) + &e(&[2, 3])
}

/// Rank of the columns of `m` via SVD, independent of the crate's helpers.
fn col_rank(m: &DMatrix<C64>) -> usize {
    let s = m.clone().svd(false, false).singular_values;
    let top = s.max();
    s.iter().filter(|&&x| x > 1e-9 * top).count()
}

fn stacked(vs: &[GeneralizedVector]) -> DMatrix<C64> {
    let cols: Vec<_> = vs.iter().map(|v| nalgebra::DVector::from_vec(v.stacked())).collect();
    DMatrix::from_columns(&cols)
}

#[test]
fn symplectic_annihilator_is_graph() {
    let w = omega_std();
    let rho = exp_two_form(&w.scale(c(0.0, 1.0))).unwrap();
    let ann = annihilator(&rho).unwrap();
    assert_eq!(ann.dim(), 4);
    let expected: Vec<GeneralizedVector> = (0..4)
        .map(|j| {
            let mut x = vec![c(0.0, 0.0); 4];
            x[j] = c(1.0, 0.0);
            let xi = interior(&x, &w).unwrap();
            let cov: Vec<C64> = (0..4).map(|k| xi.coeff(&[k]) * c(0.0, -1.0)).collect();
            GeneralizedVector::new(x, cov).unwrap()
        })
        .collect();
    for a in ann.basis().iter().chain(&expected) {
        assert!(clifford_act(a, &rho).unwrap().norm_max() < 1e-12);
    }
    let mut both = ann.basis().to_vec();
    both.extend(expected);
    assert_eq!(col_rank(&stacked(&both)), 4);
}

#[test]
fn constant_spinor_is_rejected() {
    assert!(matches!(annihilator(&ComplexForm::one(4)), Err(Error::Degenerate)));
    assert!(matches!(annihilator(&ComplexForm::zero(4)), Err(Error::NotPure { .. })));
}

#[test]
fn partly_real_spinor_has_four_solutions() {
    // exp(dx₀dx₁ + i dx₂dx₃) is real along the first plane, so its four
    // annihilating vectors meet their conjugates.
    let rho = exp_two_form(&(&e(&[0, 1]) + &e(&[2, 3]).scale(c(0.0, 1.0)))).unwrap();
    let m = clifford_matrix(&rho);
    let svd = m.clone().svd(false, true);
    let s = &svd.singular_values;
    let small: Vec<usize> = (0..8).filter(|&k| s[k] < 1e-12 * s.max()).collect();
    assert_eq!(small.len(), 4);
    let vt = svd.v_t.unwrap();
    for &k in &small {
        let v: Vec<C64> = (0..8).map(|r| vt[(k, r)].conj()).collect();
        let a = GeneralizedVector::from_stacked(&v);
        assert!(clifford_act(&a, &rho).unwrap().norm_max() < 1e-12);
    }
    assert!(matches!(annihilator(&rho), Err(Error::Degenerate)));
}

#[test]
fn symplectic_structure_blocks() {
    let w = omega_std();
    let j = j_from_spinor(&exp_two_form(&w.scale(c(0.0, 1.0))).unwrap()).unwrap();
    let wh = hat(&w).map(|z| z.re);
    let m = j.mat();
    assert!((m.view((0, 0), (4, 4)).into_owned()).amax() < 1e-12);
    assert!((m.view((4, 4), (4, 4)).into_owned()).amax() < 1e-12);
    assert!((m.view((0, 4), (4, 4)) + wh.clone().try_inverse().unwrap()).amax() < 1e-12);
    assert!((m.view((4, 0), (4, 4)) - &wh).amax() < 1e-12);
    let bt = (&e(&[0, 1]) + &w.scale(c(0.0, 1.0))).clone();
    let j = j_from_spinor(&exp_two_form(&bt).unwrap()).unwrap();
    assert!(j.square_residual() < 1e-10 && j.orthogonality_residual() < 1e-10);
}

#[test]
fn complex_structure_blocks() {
    let i = std_complex();
    let j = j_from_complex(&i).unwrap();
    assert_eq!(j.mat().view((0, 0), (4, 4)).into_owned(), i);
    assert_eq!(j.mat().view((4, 4), (4, 4)).into_owned(), -i.transpose());
    assert!(j.mat().view((0, 4), (4, 4)).amax() == 0.0);
    // +i eigenspace spanned by ∂/∂zⱼ and dz̄ₖ.
    let f = holomorphic_frame(&i).unwrap();
    let jc = j.mat().map(|x| c(x, 0.0));
    for k in 0..2 {
        let mut v = nalgebra::DVector::from_element(8, c(0.0, 0.0));
        for r in 0..4 {
            v[r] = f.vectors[(r, k)];
        }
        assert!((&jc * &v - &v * c(0.0, 1.0)).camax() < 1e-14);
        let mut w = nalgebra::DVector::from_element(8, c(0.0, 0.0));
        for r in 0..4 {
            w[4 + r] = f.forms[(k, r)].conj();
        }
        assert!((&jc * &w - &w * c(0.0, 1.0)).camax() < 1e-14);
    }
    let mut bad = i.clone();
    bad[(0, 0)] = 0.5;
    assert!(matches!(j_from_complex(&bad), Err(Error::NotAlmostComplex { .. })));
}

#[test]
fn poisson_structures() {
    let i = std_complex();
    let zero = DMatrix::from_element(2, 2, c(0.0, 0.0));
    let j0 = j_from_poisson(&i, &zero).unwrap();
    assert!((j0.mat() - j_from_complex(&i).unwrap().mat()).amax() < 1e-14);

    // σ = ∂/∂z₁∧∂/∂z₂ corresponds to the spinor exp(dz̄₁dz̄₂).
    let sigma = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)]);
    let js = j_from_poisson(&i, &sigma).unwrap();
    let f = holomorphic_frame(&i).unwrap();
    let dz = |k: usize| ComplexForm::covector(&(0..4).map(|r| f.forms[(k, r)]).collect::<Vec<_>>());
    let dz12 = wedge(&dz(0), &dz(1)).unwrap();
    let jr = j_from_spinor(&exp_two_form(&dz12.conj()).unwrap()).unwrap();
    assert!((js.mat() - jr.mat()).amax() < 1e-10);
    let jw = j_from_spinor(&exp_two_form(&dz12).unwrap()).unwrap();
    assert!((js.mat() - jw.mat()).amax() > 0.1);

    let skew = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
    assert!(matches!(j_from_poisson(&i, &skew), Err(Error::NotAntisymmetric { .. })));
}

#[test]
fn pair_test_examples() {
    let dz = |k: usize| {
        let mut v = vec![c(0.0, 0.0); 4];
        v[2 * k] = c(1.0, 0.0);
        v[2 * k + 1] = c(0.0, 1.0);
        ComplexForm::covector(&v)
    };
    let dz12 = wedge(&dz(0), &dz(1)).unwrap();
    let r = lemma1_check(&dz12, &dz12.scale(c(2.0, 0.0)), 1, 1e-10).unwrap();
    assert!(r.same_top < 1e-15);
    assert!(r.conj_top > 1.0);
    assert!(!r.pass);

    let b = &dz12 + &e(&[0, 1]).scale(c(0.3, 0.0));
    let r = lemma1_check(&b, &b, 1, 1e-10).unwrap();
    assert_eq!(r.same_k, 0.0);
    assert!(!r.pass);

    let real = e(&[0, 1]);
    assert!(matches!(lemma1_check(&real, &dz12, 1, 1e-10), Err(Error::DegenerateImaginaryPart)));
}

fn real_two_form() -> impl Strategy<Value = ComplexForm> {
    prop::array::uniform6(-1.0f64..1.0).prop_map(|v| {
        let pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let mut f = ComplexForm::zero(4);
        for (k, &(i, j)) in pairs.iter().enumerate() {
            f.set(&[i, j], c(v[k], 0.0)).unwrap();
        }
        f
    })
}

fn symplectic() -> impl Strategy<Value = ComplexForm> {
    real_two_form().prop_filter("nondegenerate", |w| wedge(w, w).unwrap().top().norm() > 0.2)
}

fn synthetic() -> impl Strategy<Value = SyntheticPoint> {
    (prop::array::uniform16(-0.3f64..0.3), prop::array::uniform6(-0.5f64..0.5), -0.95f64..0.95, 0.0f64..6.28).prop_map(
        |(a, b, p, phase)| {
            let a = Matrix4::identity() + Matrix4::from_row_slice(&a);
            let pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
            let mut bm = Matrix4::zeros();
            for (k, &(i, j)) in pairs.iter().enumerate() {
                bm[(i, j)] = b[k];
                bm[(j, i)] = -b[k];
            }
            SyntheticPoint { a, b: bm, p, phase }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symplectic_upper_right_block(w in symplectic()) {
        let j = j_from_spinor(&exp_two_form(&w.scale(c(0.0, 1.0))).unwrap()).unwrap();
        let winv = hat(&w).map(|z| z.re).try_inverse().unwrap();
        let ur = j.mat().view((0, 4), (4, 4)).into_owned();
        prop_assert!((ur + &winv).amax() < 1e-12 * winv.amax().max(1.0));
    }

    #[test]
    fn constructed_structures_are_generalized_complex(b in real_two_form(), w in symplectic()) {
        let beta = &b + &w.scale(c(0.0, 1.0));
        let a = j_from_spinor(&exp_two_form(&beta).unwrap()).unwrap();
        let f = j_from_two_form(&beta).unwrap();
        for j in [&a, &f] {
            prop_assert!(j.square_residual() < 1e-10);
            prop_assert!(j.orthogonality_residual() < 1e-10);
        }
        prop_assert!((a.mat() - f.mat()).amax() < 1e-9);
    }

    #[test]
    fn conjugated_complex_structure_squares_to_minus_one(m in prop::array::uniform16(-0.4f64..0.4)) {
        let a = DMatrix::identity(4, 4) + DMatrix::from_row_slice(4, 4, &m);
        let ai = a.clone().try_inverse().unwrap();
        let i = &ai * std_complex() * &a;
        let j = j_from_complex(&i).unwrap();
        prop_assert!(j.square_residual() < 1e-10);
        prop_assert!(j.orthogonality_residual() < 1e-10);
    }

    #[test]
    fn poisson_block_is_real_part(s in (-1.0f64..1.0, -1.0f64..1.0)) {
        let i = std_complex();
        let z = c(s.0, s.1);
        let sigma = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), z, -z, c(0.0, 0.0)]);
        let j = j_from_poisson(&i, &sigma).unwrap();
        let f = holomorphic_frame(&i).unwrap();
        let bivector = &f.vectors * &sigma * f.vectors.transpose();
        // A (2,0) bivector σ enters through the real bivector 2(iσ + conj(iσ)).
        let want = (&bivector * c(0.0, 1.0)).map(|z| 4.0 * z.re);
        prop_assert!((j.poisson_block() - want).amax() < 1e-12);
    }

    #[test]
    fn lemma_conclusion_holds_independently(pt in synthetic()) {
        let (b1, b2) = synthetic_betas(&pt).unwrap();
        let r = lemma1_check(&b1, &b2, 1, 1e-9).unwrap();
        prop_assert!(r.pass, "{:?}", r);
        let j1 = j_from_spinor(&exp_two_form(&b1).unwrap()).unwrap();
        let j2 = j_from_spinor(&exp_two_form(&b2).unwrap()).unwrap();
        let comm = j1.mat() * j2.mat() - j2.mat() * j1.mat();
        prop_assert!(comm.amax() < 1e-9 * j1.mat().amax() * j2.mat().amax());
    }
}
