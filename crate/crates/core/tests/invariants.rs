use std::f64::consts::PI;

use nahmlab::clifford::{clifford_rep, epsilon};
use nahmlab::config::{sample_points, RunConfig};
use nahmlab::diracop::flat_green_closed;
use nahmlab::gauge::{bpst_field, norm4, FieldSpec};
use nahmlab::index::affine_degree;
use nahmlab::poly::{eval_mono, ScalarPoly};
use nahmlab::quad::{ball_rule, monomial_integral, QuadOrders};
use nahmlab::{c64, Point4};
use proptest::prelude::*;

fn point(r: f64) -> impl Strategy<Value = Point4> {
    prop::array::uniform4(-r..r)
}

fn spinor() -> impl Strategy<Value = [c64; 2]> {
    prop::array::uniform4(-2.0f64..2.0).prop_map(|v| [c64::new(v[0], v[1]), c64::new(v[2], v[3])])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn epsilon_squares_to_minus_one(v in spinor()) {
        let e = epsilon(&epsilon(&v));
        prop_assert!((e[0] + v[0]).norm() < 1e-15 && (e[1] + v[1]).norm() < 1e-15);
    }

    #[test]
    fn epsilon_commutes_with_clifford(v in spinor(), mu in 1usize..=4) {
        let c = clifford_rep();
        let a = epsilon(&c.act_plus(mu, &v).unwrap());
        let b = c.act_plus(mu, &epsilon(&v)).unwrap();
        prop_assert!((a[0] - b[0]).norm() < 1e-14 && (a[1] - b[1]).norm() < 1e-14);
        let a = epsilon(&c.act_minus(mu, &v).unwrap());
        let b = c.act_minus(mu, &epsilon(&v)).unwrap();
        prop_assert!((a[0] - b[0]).norm() < 1e-14 && (a[1] - b[1]).norm() < 1e-14);
    }

    #[test]
    fn clifford_squares_to_minus_one(v in spinor(), mu in 1usize..=4) {
        let c = clifford_rep();
        let w = c.act_plus(mu, &c.act_minus(mu, &v).unwrap()).unwrap();
        prop_assert!((w[0] + v[0]).norm() < 1e-14 && (w[1] + v[1]).norm() < 1e-14);
    }

    #[test]
    fn quadrature_matches_closed_moments(a in prop::array::uniform4(0u32..=4), r in 0.3f64..2.0) {
        prop_assume!(a.iter().sum::<u32>() <= 4);
        let alpha = [2 * a[0], 2 * a[1], 2 * a[2], 2 * a[3]];
        let rule = ball_rule(QuadOrders::default(), r).unwrap();
        let q = rule.integrate_real(|x| (0..4).map(|i| x[i].powi(alpha[i] as i32)).product());
        let e = monomial_integral(alpha, r);
        prop_assert!((q - e).abs() <= 1e-10 * e.abs());
    }

    #[test]
    fn polynomial_product_evaluates_pointwise(
        a in prop::array::uniform4(0u8..3), b in prop::array::uniform4(0u8..3),
        ca in -2.0f64..2.0, cb in -2.0f64..2.0, x in point(1.0),
    ) {
        let p = ScalarPoly::monomial(a, ca).plus(&ScalarPoly::constant(1.0));
        let q = ScalarPoly::monomial(b, cb).plus(&ScalarPoly::shifted_square(&[0.1, 0.0, -0.2, 0.3], 0.5));
        let lhs = p.mul(&q).eval(&x);
        let rhs = p.eval(&x) * q.eval(&x);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        let d = ScalarPoly::monomial(a, 1.0).deriv(0).eval(&x);
        let mut lower = a;
        let expect = if a[0] == 0 { 0.0 } else { lower[0] -= 1; a[0] as f64 * eval_mono(&lower, &x) };
        prop_assert!((d - expect).abs() <= 1e-12);
    }

    #[test]
    fn bpst_is_asd_everywhere(rho in 0.1f64..0.8, x in point(0.9)) {
        let f = bpst_field(rho, [0.0; 4]).unwrap();
        let scale = nahmlab::gauge::curvature_norm(&f.curvature(&x));
        prop_assert!(f.asd_residual(&x) <= 1e-12 * (1.0 + scale));
        prop_assert!(f.energy_density(&x) > 0.0);
    }

    #[test]
    fn green_function_is_symmetric_and_dirichlet(p in point(0.5), q in point(0.5), u in point(1.0)) {
        prop_assume!(norm4(&p) < 0.99 && norm4(&q) < 0.99 && norm4(&u) > 1e-3);
        prop_assume!((0..4).map(|i| (p[i] - q[i]).powi(2)).sum::<f64>() > 1e-6);
        let a = flat_green_closed(&p, &q, 1.0).unwrap();
        let b = flat_green_closed(&q, &p, 1.0).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs());
        prop_assert!(a > 0.0);
        let n = norm4(&u);
        let w = [u[0] / n, u[1] / n, u[2] / n, u[3] / n];
        prop_assert!(flat_green_closed(&w, &q, 1.0).unwrap().abs() < 1e-10 / (4.0 * PI * PI) * 1e3);
    }

    #[test]
    fn affine_degree_is_one_inside_zero_outside(y in point(2.0)) {
        let r = norm4(&y);
        prop_assume!((r - 1.0).abs() > 1e-6);
        let d = affine_degree(&y, 1.0).unwrap();
        prop_assert_eq!(d, if r < 1.0 { 1 } else { 0 });
    }

    #[test]
    fn config_round_trips(degree in 0usize..=14, seed in any::<u64>(), rho in 0.05f64..0.9) {
        let mut c = RunConfig::new(FieldSpec::Bpst { rho, center: [0.0; 4] });
        c.degree = degree;
        c.seed = seed;
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn sampled_points_respect_radii(seed in any::<u64>(), lo in 0.0f64..1.0, width in 0.01f64..1.0) {
        for p in sample_points(seed, 8, lo, lo + width) {
            let r = norm4(&p);
            prop_assert!(r >= lo - 1e-12 && r <= lo + width + 1e-12);
        }
        prop_assert_eq!(sample_points(seed, 3, lo, lo + width), sample_points(seed, 3, lo, lo + width));
    }
}

#[test]
fn boundary_symbol_is_refused() {
    assert!(affine_degree(&[1.0, 0.0, 0.0, 0.0], 1.0).is_err());
    assert!(affine_degree(&[0.0, 0.6, 0.8, 0.0], 1.0).is_err());
}
