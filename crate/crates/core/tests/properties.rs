//! Invariants checked on random inputs.

use std::f64::consts::{PI, SQRT_2};

use approx::assert_relative_eq;
use proptest::prelude::*;

use dsl::algebra::{Element, Level};
use dsl::fiber::{
    arc_alpha, check_pair_inequalities, fiber_exact_mult, fiber_numeric, fit_isometry, hopf_raw,
    Extraction,
};
use dsl::linalg::{self, Matrix};
use dsl::lipmap::{degree_jacobian, degree_winding, local_dilation, SphereMap};
use dsl::sphere::{
    geo_dist, geodesic, product_dist, random_point, random_unit_tangent, rng_for,
    sample_sphere_stream, ProductPoint, SpherePoint,
};
use dsl::torus::{f_eval, gamma_integrate, gradient_norm, phi, wrap, wrap_dist, TorusPoint};

fn level() -> impl Strategy<Value = Level> {
    prop::sample::select(Level::SPHERES.to_vec())
}

fn element(level: Level) -> impl Strategy<Value = Element> {
    prop::collection::vec(-10.0..10.0_f64, level.dim())
        .prop_filter("nonzero", |v| linalg::norm(v) > 1e-3)
        .prop_map(move |v| Element::from_slice(level, &v).unwrap())
}

fn elements(k: usize) -> impl Strategy<Value = Vec<Element>> {
    level().prop_flat_map(move |l| prop::collection::vec(element(l), k))
}

fn point(n: usize, seed: u64, stream: u64) -> SpherePoint {
    random_point(n, &mut rng_for(seed, stream))
}

fn product_point(n: usize, seed: u64, stream: u64) -> ProductPoint {
    ProductPoint::new(point(n, seed, stream), point(n, seed, stream + 1)).unwrap()
}

/// Orthogonal factor of the QR decomposition of a Gaussian matrix.
fn random_orthogonal(dim: usize, seed: u64) -> Matrix {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rng_for(seed, 77);
    let g = nalgebra::DMatrix::<f64>::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
    let q = g.qr().q();
    Matrix::from_rows(
        &(0..dim)
            .map(|i| q.row(i).iter().copied().collect())
            .collect::<Vec<_>>(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn norm_is_multiplicative(v in elements(2)) {
        let (a, b) = (v[0], v[1]);
        assert_relative_eq!((a * b).norm(), a.norm() * b.norm(), max_relative = 1e-12);
    }

    #[test]
    fn conjugation_reverses_products(v in elements(2)) {
        let (a, b) = (v[0], v[1]);
        let lhs = (a * b).conj();
        let rhs = b.conj() * a.conj();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * a.norm() * b.norm());
    }

    #[test]
    fn algebras_are_alternative(v in elements(2)) {
        let (a, b) = (v[0], v[1]);
        let scale = a.norm() * b.norm() * a.norm().max(b.norm());
        prop_assert!(Element::associator(&a, &a, &b).unwrap().norm() <= 1e-12 * scale);
        prop_assert!(Element::associator(&a, &b, &b).unwrap().norm() <= 1e-12 * scale);
    }

    #[test]
    fn inverse_is_two_sided(v in elements(1)) {
        let a = v[0];
        let one = Element::one(a.level());
        let inv = a.inv().unwrap();
        prop_assert!((a * inv - one).norm() <= 1e-12);
        prop_assert!((inv * a - one).norm() <= 1e-12);
    }

    #[test]
    fn geodesic_distance_is_a_metric(l in level(), seed in any::<u64>()) {
        let n = l.sphere_dim();
        let (a, b, c) = (point(n, seed, 0), point(n, seed, 1), point(n, seed, 2));
        let ab = geo_dist(&a, &b).unwrap();
        prop_assert_eq!(geo_dist(&a, &a).unwrap(), 0.0);
        prop_assert!((ab - geo_dist(&b, &a).unwrap()).abs() <= 1e-15);
        prop_assert!((0.0..=PI).contains(&ab));
        prop_assert!(geo_dist(&a, &c).unwrap() <= ab + geo_dist(&b, &c).unwrap() + 1e-12);
    }

    #[test]
    fn product_distance_is_a_metric(l in level(), seed in any::<u64>()) {
        let n = l.sphere_dim();
        let (p, q, r) = (product_point(n, seed, 0), product_point(n, seed, 2), product_point(n, seed, 4));
        let pq = product_dist(&p, &q).unwrap();
        prop_assert_eq!(product_dist(&p, &p).unwrap(), 0.0);
        prop_assert!((pq - product_dist(&q, &p).unwrap()).abs() <= 1e-15);
        prop_assert!(product_dist(&p, &r).unwrap() <= pq + product_dist(&q, &r).unwrap() + 1e-12);
    }

    #[test]
    fn diagonal_is_scaled_by_sqrt2(l in level(), seed in any::<u64>()) {
        let n = l.sphere_dim();
        let (x, y) = (point(n, seed, 0), point(n, seed, 1));
        let dx = ProductPoint::new(x.clone(), x.clone()).unwrap();
        let dy = ProductPoint::new(y.clone(), y.clone()).unwrap();
        let lhs = product_dist(&dx, &dy).unwrap();
        prop_assert!((lhs - SQRT_2 * geo_dist(&x, &y).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn geodesic_distance_is_linear_in_t(l in level(), seed in any::<u64>(), t in 0.0..=1.0_f64) {
        let n = l.sphere_dim();
        let (a, b) = (point(n, seed, 0), point(n, seed, 1));
        let g = geodesic(&a, &b, t).unwrap();
        let d = geo_dist(&a, &b).unwrap();
        prop_assert!((geo_dist(&a, &g).unwrap() - t * d).abs() <= 1e-10);
        prop_assert!((geo_dist(&g, &b).unwrap() - (1.0 - t) * d).abs() <= 1e-10);
    }

    #[test]
    fn multiplication_dilates_by_sqrt2(l in level(), seed in any::<u64>()) {
        let m = SphereMap::multiplication(l);
        let p = product_point(l.sphere_dim(), seed, 0).to_ambient();
        prop_assert!((local_dilation(&m, &p).unwrap() - SQRT_2).abs() <= 1e-9);
    }

    #[test]
    fn multiplication_quotients_bounded(l in level(), seed in any::<u64>()) {
        let n = l.sphere_dim();
        let m = SphereMap::multiplication(l);
        let (p, q) = (product_point(n, seed, 0), product_point(n, seed, 2));
        let (mp, mq) = (m.eval(&p.to_ambient()).unwrap(), m.eval(&q.to_ambient()).unwrap());
        let image = dsl::sphere::angle(&mp, &mq);
        prop_assert!(image <= SQRT_2 * product_dist(&p, &q).unwrap() + 1e-9);
    }

    #[test]
    fn exact_fiber_pairs_satisfy_inequalities(l in level(), seed in any::<u64>()) {
        let n = l.sphere_dim();
        let p = point(n, seed, 0);
        let fiber = fiber_exact_mult(&p, &sample_sphere_stream(n, 2, seed, 1)).unwrap();
        let r = check_pair_inequalities(&fiber.points[0], &fiber.points[1]).unwrap();
        prop_assert!(r.passes(1e-12), "{r:?}");
        prop_assert!(fiber.max_residual() <= 1e-12);
    }

    #[test]
    fn fiber_isometries_compose_to_identity(l in level(), seed in any::<u64>()) {
        let n = l.sphere_dim();
        let p = point(n, seed, 0);
        let fiber = fiber_exact_mult(&p, &sample_sphere_stream(n, 4 * (n + 1), seed, 1)).unwrap();
        let h = fit_isometry(&fiber).unwrap();
        let k = fit_isometry(&fiber.transposed()).unwrap();
        prop_assert!(k.matrix.matmul(&h.matrix).max_abs_diff(&Matrix::identity(n + 1)) <= 1e-9);
    }

    #[test]
    fn arcs_join_their_endpoints(l in level(), seed in any::<u64>()) {
        let n = l.sphere_dim();
        let (y1, y2) = (point(n, seed, 0), point(n, seed, 1));
        let x = random_unit_tangent(&y1, &mut rng_for(seed, 2));
        let arc = arc_alpha(&y1, &y2, &x, 65).unwrap();
        prop_assert!(geo_dist(&arc.points[0], &y1).unwrap() <= 1e-10);
        prop_assert!(geo_dist(&arc.points[64], &y2).unwrap() <= 1e-10);
        prop_assert!(arc.polyline_length() <= arc.length() + 1e-12);
    }

    #[test]
    fn hopf_lands_on_unit_sphere(l in level(), seed in any::<u64>()) {
        let n = l.sphere_dim();
        let d = l.dim();
        let z: Vec<f64> = point(2 * n + 1, seed, 0).coords().iter().map(|c| c * SQRT_2).collect();
        let (z1, z2) = (Element::from_slice(l, &z[..d]).unwrap(), Element::from_slice(l, &z[d..]).unwrap());
        prop_assert!((linalg::norm(&hopf_raw(&z1, &z2).unwrap()) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn gradient_has_unit_norm(x in 0.0..1.0_f64, y in 0.0..1.0_f64) {
        prop_assert!((gradient_norm(&TorusPoint::new(x, y)) - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn wrap_lands_in_unit_interval(v in -1e6..1e6_f64) {
        let w = wrap(v);
        prop_assert!((0.0..1.0).contains(&w));
        prop_assert!(wrap_dist(w, v) <= 1e-9);
    }

    #[test]
    fn phi_is_symmetric(x in 0.0..=1.0_f64) {
        prop_assert!((phi(1.0 - x) - phi(x)).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn f_is_constant_on_level_curves(a in 0.0..1.0_f64) {
        let trace = gamma_integrate(a, 1e-3).unwrap();
        for s in &trace.samples {
            prop_assert!(wrap_dist(f_eval(&s.point), a) <= 1e-6);
        }
    }

    #[test]
    fn numeric_fibers_track_isometric_images(l in level(), seed in any::<u64>()) {
        let n = l.sphere_dim();
        let q = random_orthogonal(n + 1, seed);
        let map = SphereMap::multiplication(l).then(SphereMap::isometry(q.clone()).unwrap()).unwrap();
        let p = point(n, seed, 0);
        let pulled = SpherePoint::normalize(q.transpose().mul_vec(p.coords())).unwrap();
        let seeds: Vec<ProductPoint> = (0..4).map(|k| product_point(n, seed, 10 + 2 * k)).collect();
        let Extraction::Found { fiber, .. } = fiber_numeric(&map, &p, &seeds, 1e-10).unwrap() else {
            return Err(TestCaseError::fail("no seed converged"));
        };
        for pt in &fiber.points {
            let exact = fiber_exact_mult(&pulled, std::slice::from_ref(&pt.first)).unwrap();
            prop_assert!(product_dist(pt, &exact.points[0]).unwrap() <= 1e-8);
        }
    }
}

#[test]
fn conjugation_has_degree_minus_one() {
    assert_eq!(
        degree_winding(&SphereMap::conjugation(Level::Complex), 1024).unwrap(),
        -1
    );
}

#[test]
fn identity_has_degree_one() {
    let est = degree_jacobian(&SphereMap::identity(7), 2000, 3).unwrap();
    assert_relative_eq!(est.mean, 1.0, epsilon = 1e-12);
}

#[test]
fn nalgebra_agrees_on_singular_values() {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rng_for(11, 0);
    for (r, c) in [(3, 3), (8, 14), (14, 8), (5, 2)] {
        let a = nalgebra::DMatrix::<f64>::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
        let ours = linalg::singular_values(&Matrix::from_rows(
            &(0..r)
                .map(|i| a.row(i).iter().copied().collect())
                .collect::<Vec<_>>(),
        ));
        let mut theirs: Vec<f64> = a.singular_values().iter().copied().collect();
        theirs.sort_by(|x, y| y.total_cmp(x));
        theirs.resize(c, 0.0);
        for (x, y) in ours.iter().zip(&theirs) {
            assert_relative_eq!(*x, *y, epsilon = 1e-12, max_relative = 1e-12);
        }
    }
}
