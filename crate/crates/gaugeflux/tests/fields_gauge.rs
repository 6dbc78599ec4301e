use std::f64::consts::PI;

use gaugeflux::fields::*;
use gaugeflux::lie::{LieAlgebraSpec, LieGroupSpec};
use gaugeflux::matcore::{CMatrix, MatrixShape};

fn algebras() -> Vec<LieAlgebraSpec> {
    vec![
        LieAlgebraSpec::unitary(1).unwrap(),
        LieAlgebraSpec::unitary(2).unwrap(),
        LieAlgebraSpec::unitary(3).unwrap(),
        LieAlgebraSpec::by_j(CMatrix::diag_real(&[1.0, -1.0])).unwrap(),
    ]
}

#[test]
fn field_strength_is_covariant() {
    let mut seed = 0;
    for n in 2..=4 {
        for g in algebras() {
            seed += 1;
            let a = GaugeConfig::random(g.clone(), seed, n, 1, 0.7).unwrap();
            let u = random_group_field(&LieGroupSpec::new(g).unwrap(), seed + 100, n, 1, 0.6).unwrap();
            let d = check_covariance(&a, &u, &random_points(seed, n, 6, 2.0 * PI)).unwrap();
            assert!(d <= 1e-10, "N={n} seed={seed} defect {d:e}");
        }
    }
}

#[test]
fn covariance_trivial_cases() {
    let g = LieAlgebraSpec::unitary(1).unwrap();
    let a = GaugeConfig::random(g, 4, 3, 1, 1.0).unwrap();
    let one = DerivedField::constant(3, CMatrix::identity(1));
    assert_eq!(check_covariance(&a, &one, &random_points(1, 3, 5, 6.0)).unwrap(), 0.0);
}

#[test]
fn gauge_action_composes() {
    let g = LieAlgebraSpec::unitary(2).unwrap();
    let grp = LieGroupSpec::new(g.clone()).unwrap();
    let a = GaugeConfig::random(g, 1, 3, 1, 0.8).unwrap();
    let u = random_group_field(&grp, 2, 3, 1, 0.5).unwrap();
    let v = random_group_field(&grp, 3, 3, 1, 0.5).unwrap();
    let lhs = gauge_transform_gauge(&gauge_transform_gauge(&a, &u).unwrap(), &v).unwrap();
    let rhs = gauge_transform_gauge(&a, &u.mul(&v).unwrap()).unwrap();
    for x in random_points(9, 3, 50, 2.0 * PI) {
        for (l, r) in lhs.components.iter().zip(&rhs.components) {
            assert!(l.value(&x).unwrap().dist(&r.value(&x).unwrap()) <= 1e-11);
        }
    }
    assert!(lhs.membership_defect(&random_points(2, 3, 10, 6.0)).unwrap() < 1e-9);
}

#[test]
fn field_strength_special_cases() {
    let g = LieAlgebraSpec::unitary(2).unwrap();
    let vals = vec![g.sample_algebra(1), g.sample_algebra(2)];
    let a = GaugeConfig::constant(g, &vals).unwrap();
    let f = field_strength(&a).unwrap();
    let want = -vals[0].comm(&vals[1]);
    assert!(f.get(0, 1).unwrap().value(&[0.2, 0.3]).unwrap().dist(&want) < 1e-15);
    assert!(f.get(1, 0).unwrap().value(&[0.2, 0.3]).unwrap().dist(&(-want)) < 1e-15);
}

#[test]
fn field_strength_matches_finite_differences() {
    let g = LieAlgebraSpec::unitary(2).unwrap();
    let a = GaugeConfig::random(g, 5, 3, 1, 1.0).unwrap();
    let f = field_strength(&a).unwrap();
    let h = 1e-3;
    for x in random_points(3, 3, 10, 2.0 * PI) {
        for (m, v) in pairs(3) {
            // fourth-order stencil
            let d = |c: usize, axis: usize| {
                let at = |s: f64| {
                    let mut y = x.clone();
                    y[axis] += s * h;
                    a.components[c].value(&y).unwrap()
                };
                (at(-2.0) - at(2.0) + (at(1.0) - at(-1.0)).scale_re(8.0)).scale_re(1.0 / (12.0 * h))
            };
            let am = a.components[m].value(&x).unwrap();
            let av = a.components[v].value(&x).unwrap();
            let fd = d(v, m) - d(m, v) - am.comm(&av);
            assert!(f.get(m, v).unwrap().value(&x).unwrap().dist(&fd) < 1e-9);
        }
    }
}

#[test]
fn covariant_derivative_rules() {
    let g = LieAlgebraSpec::unitary(2).unwrap();
    let n = 3;
    let a = GaugeConfig::random(g.clone(), 7, n, 1, 1.0).unwrap();
    let s = MatrixShape::square(2);
    let u: DerivedField = random_smooth_field(8, n, s, 1, 1.0, None).unwrap().into();
    let v: DerivedField = random_smooth_field(9, n, s, 1, 1.0, None).unwrap().into();
    let ug: DerivedField = random_smooth_field(10, n, s, 1, 1.0, Some(&g)).unwrap().into();
    for x in random_points(4, n, 20, 2.0 * PI) {
        for mu in 0..n {
            let lhs = covariant_ad(&u.mul(&v).unwrap(), &a, mu).unwrap().value(&x).unwrap();
            let du = covariant_ad(&u, &a, mu).unwrap().value(&x).unwrap();
            let dv = covariant_ad(&v, &a, mu).unwrap().value(&x).unwrap();
            let (uv, vv) = (u.value(&x).unwrap(), v.value(&x).unwrap());
            assert!(lhs.dist(&(&du * &vv + &uv * &dv)) < 1e-12);
            // Tr[u ∇v] = ∂Tr[uv] − Tr[(∇u) v]
            let dtr = u.mul(&v).unwrap().partial(mu).unwrap().value(&x).unwrap().trace();
            let t = (&uv * &dv).trace() - (dtr - (&du * &vv).trace());
            assert!(t.norm() < 1e-11);
            let dg = covariant_ad(&ug, &a, mu).unwrap().value(&x).unwrap();
            assert!(g.membership_defect(&dg).unwrap() < 1e-9);
        }
        let f = field_strength(&a).unwrap();
        for fv in f.values(&x).unwrap() {
            assert!(g.membership_defect(&fv).unwrap() < 1e-9);
        }
    }
}

#[test]
fn covariant_right_transports() {
    let g = LieAlgebraSpec::unitary(2).unwrap();
    let grp = LieGroupSpec::new(g.clone()).unwrap();
    let n = 2;
    let a = GaugeConfig::random(g, 11, n, 1, 1.0).unwrap();
    let u = random_group_field(&grp, 12, n, 1, 0.7).unwrap();
    let psi: DerivedField = random_smooth_field(13, n, MatrixShape::new(3, 2).unwrap(), 1, 1.0, None).unwrap().into();
    let psi_u = gauge_transform_matter(&psi, &u).unwrap();
    let a_u = gauge_transform_gauge(&a, &u).unwrap();
    for x in random_points(5, n, 20, 2.0 * PI) {
        for mu in 0..n {
            let lhs = covariant_right(&psi_u, &a_u, mu).unwrap().value(&x).unwrap();
            let rhs = &covariant_right(&psi, &a, mu).unwrap().value(&x).unwrap() * &u.value(&x).unwrap();
            assert!(lhs.dist(&rhs) < 1e-11);
        }
    }
}
