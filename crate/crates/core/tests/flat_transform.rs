use nahmlab::ansatz::Chirality;
use nahmlab::bergmann::{
    compute_bergmann, eigenstate_zeta, green_basis, nahm_laplacian_green, nahm_laplacian_lifted, oscillator, position_ops, LiftedPair,
};
use nahmlab::diracop::{setting_for, GreenSolver};
use nahmlab::gauge::{bpst_field, flat_field};
use nahmlab::index::{affine_op, composite, null_count, numerical_index, symbol_op, Symbol};
use nahmlab::linalg::{frobenius, max_abs_diff, select_cols};
use nahmlab::nahm::{correlator, fiber, fiber_scan, flat_correlator_closed};
use nahmlab::quad::QuadOrders;
use nahmlab::NahmError;

fn flat_pair(n: usize) -> LiftedPair {
    let f = flat_field(1).unwrap();
    let set = setting_for(&f, 1.0, QuadOrders::default(), 1e-12).unwrap();
    LiftedPair::build(&f, &set, n, 1e-8, 1e2).unwrap()
}

#[test]
fn position_operators_are_hermitian() {
    let p = flat_pair(3);
    let x = position_ops(&p.lower, 1e-8);
    for m in &x.x {
        assert!(max_abs_diff(m.as_ref(), m.adjoint().to_owned().as_ref()) < 1e-12);
    }
}

#[test]
fn laplacian_backends_agree() {
    let f = flat_field(1).unwrap();
    let set = setting_for(&f, 1.0, QuadOrders::default(), 1e-12).unwrap();
    let p = LiftedPair::build(&f, &set, 3, 1e-8, 1e2).unwrap();
    let solver = GreenSolver::new(&f, &set, 5, Chirality::Minus).unwrap();
    let g = green_basis(&p.lower, &solver);
    for y in [[0.0; 4], [0.1, -0.2, 0.0, 0.3]] {
        let a = nahm_laplacian_lifted(&p, &y);
        let b = nahm_laplacian_green(&p.lower, &g, &y);
        assert!(frobenius((&a - &b).as_ref()) <= 1e-3 * frobenius(b.as_ref()));
    }
}

#[test]
fn fiber_is_a_line_inside_and_empty_outside() {
    let p = flat_pair(6);
    assert_eq!(fiber(&p, &[0.0; 4], 1e-3, 1e2).unwrap().dim(), 1);
    assert_eq!(fiber(&p, &[0.0, 1.5, 0.0, 0.0], 1e-3, 1e2).unwrap().dim(), 0);
}

#[test]
fn fiber_scan_flags_missing_gaps() {
    let f = flat_field(1).unwrap();
    let set = setting_for(&f, 1.0, QuadOrders::default(), 1e-12).unwrap();
    let p = LiftedPair::build(&f, &set, 4, 1e-8, 1e2).unwrap();
    let solver = GreenSolver::new(&f, &set, 6, Chirality::Minus).unwrap();
    let g = green_basis(&p.lower, &solver);
    let rows = fiber_scan(&p, &solver, &g, &[[0.0; 4], [2.0, 0.0, 0.0, 0.0]], 1e-3, 1e2).unwrap();
    assert_eq!(rows[0].fiber_dim, 1);
    assert!(rows[0].metric_defect.unwrap() < 2e-2);
    assert_eq!(rows[1].fiber_dim, 0);
    // an absurd gap requirement makes every point inconclusive
    let strict = fiber_scan(&p, &solver, &g, &[[0.0; 4]], 1e-3, 1e300).unwrap();
    assert!(!strict[0].conclusive);
}

#[test]
fn correlator_approaches_closed_form() {
    let f = flat_field(1).unwrap();
    let set = setting_for(&f, 1.0, QuadOrders::default(), 1e-12).unwrap();
    let b = compute_bergmann(&f, &set, 6, 1e-8, 1e2).unwrap();
    let solver = GreenSolver::new(&f, &set, 8, Chirality::Minus).unwrap();
    let g = green_basis(&b, &solver);
    let (x1, x2) = ([0.2, 0.1, -0.1, 0.0], [-0.1, 0.3, 0.0, 0.2]);
    let m = correlator(&solver, &g, 1, &x1, &x2).unwrap();
    let c = flat_correlator_closed(&x1, &x2, 1.0).unwrap();
    assert!((m[(0, 0)].re - c).abs() < 1e-2 * c);
    assert!(matches!(correlator(&solver, &g, 1, &x1, &x1), Err(NahmError::CoincidentPoints)));
}

#[test]
fn index_of_affine_symbols() {
    let p = flat_pair(5);
    let inside = numerical_index(&affine_op(&p, &[0.0; 4]).unwrap(), 1e-6, 1e2).unwrap();
    assert_eq!((inside.dim_ker, inside.dim_coker, inside.index), (1, 0, 1));
    assert_eq!(inside.expected, Some(1));
    let outside = numerical_index(&affine_op(&p, &[0.0, 0.0, 1.6, 0.0]).unwrap(), 1e-6, 1e2).unwrap();
    assert_eq!((outside.dim_ker, outside.dim_coker, outside.index), (0, 0, 0));
    assert!(matches!(affine_op(&p, &[0.0, 1.0, 0.0, 0.0]), Err(NahmError::NotFredholm(_))));
}

#[test]
fn index_is_additive_under_composition() {
    let f = flat_field(1).unwrap();
    let set = setting_for(&f, 1.0, QuadOrders::default(), 1e-12).unwrap();
    let b: Vec<_> = (4..=6).map(|n| compute_bergmann(&f, &set, n, 1e-8, 1e2).unwrap()).collect();
    let inner = symbol_op(&b[0], &b[1], &Symbol::Affine { y: [0.0; 4] }).unwrap();
    let outer = symbol_op(&b[1], &b[2], &Symbol::Affine { y: [0.0; 4] }).unwrap();
    let comp = composite(&outer, &inner).unwrap();
    let k = null_count(&comp.t, 1e-6).unwrap().count;
    let c = null_count(&comp.t_sharp, 1e-6).unwrap().count;
    assert_eq!(k as i64 - c as i64, 2);
}

#[test]
fn rank_two_line_bundle_doubles_the_index() {
    let f = flat_field(2).unwrap();
    let set = setting_for(&f, 1.0, QuadOrders::default(), 1e-12).unwrap();
    let p = LiftedPair::build(&f, &set, 3, 1e-8, 1e2).unwrap();
    let r = numerical_index(&affine_op(&p, &[0.0; 4]).unwrap(), 1e-6, 1e2).unwrap();
    assert_eq!((r.dim_ker, r.dim_coker, r.index), (2, 0, 2));
}

#[test]
fn flat_spectrum_starts_at_one_third_and_zeta_solves() {
    let f = flat_field(1).unwrap();
    let set = setting_for(&f, 1.0, QuadOrders::default(), 1e-12).unwrap();
    let b = compute_bergmann(&f, &set, 3, 1e-8, 1e2).unwrap();
    let rep = oscillator(&b).unwrap();
    let h = rep.half_lambda_sq();
    assert!((h[0] - 1.0 / 3.0).abs() < 1e-10 && (h[1] - 1.0 / 3.0).abs() < 1e-10);
    assert!(h[2] > 1.0 / 3.0 + 1e-3);
    let idx: Vec<usize> = (0..4).collect();
    let z = eigenstate_zeta(&b, &select_cols(rep.vectors.as_ref(), &idx), &h[..4]).unwrap();
    assert!(z.residuals.iter().all(|r| *r < 1e-4), "{:?}", z.residuals);
}

#[test]
fn bpst_small_state_below_the_band() {
    let f = bpst_field(0.15, [0.0; 4]).unwrap();
    let set = setting_for(&f, 1.0, QuadOrders::default(), 1e-12).unwrap();
    let b = compute_bergmann(&f, &set, 2, 1e-8, 1e2).unwrap();
    let rep = oscillator(&b).unwrap();
    let small = rep.rows.iter().filter(|r| r.lambda < 0.35).count();
    assert_eq!(small, 1);
}
