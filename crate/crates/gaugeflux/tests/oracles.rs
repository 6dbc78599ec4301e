use std::f64::consts::TAU;

use gaugeflux::fields::{random_points, DerivedField, GaugeConfig};
use gaugeflux::gauge_lagrangian::{
    eb_fields, extended_el_matter, gauge_el_residual, lorenz_defect, maxwell_defect, maxwell_potential_residual,
    minkowski_lagrangian, GaugeElVariant,
};
use gaugeflux::lagrangian::{dirac, el_residual_holomorphic, pauli, schrodinger, OuterDerivative};
use gaugeflux::lie::{LieAlgebraSpec, LieGroupSpec};
use gaugeflux::matcore::{CMatrix, I};
use gaugeflux::oracles::*;
use gaugeflux::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gammas() -> Vec<CMatrix> {
    let [sx, sy, _] = pauli();
    vec![CMatrix::identity(2), sx, sy]
}

fn mass() -> CMatrix {
    pauli()[2].scale(I * 0.7)
}

fn max_residual(sys: &FirstOrderSystem, psi: &DerivedField, pts: &[Vec<f64>]) -> f64 {
    pts.iter().map(|x| sys.residual(psi, x).unwrap().fro_norm()).fold(0.0, f64::max)
}

#[test]
fn scalar_first_order_wave() {
    let one = CMatrix::identity(1);
    let sol = dirac_plane_wave(vec![one.clone()], one.scale(I), vec![CMatrix::zeros(1, 1)], &[], 1).unwrap();
    assert!((sol.k[0] + 1.0).abs() <= 1e-12, "{:?}", sol.k);
    let sys = FirstOrderSystem::new(vec![one.clone()], one.scale(I), vec![CMatrix::zeros(1, 1)]).unwrap();
    assert!(max_residual(&sys, &sol.derived(), &random_points(1, 1, 20, TAU)) <= 1e-14);
}

#[test]
fn massless_symbol_degenerates_at_zero() {
    let sys = FirstOrderSystem::new(gammas(), CMatrix::zeros(2, 2), vec![CMatrix::zeros(2, 2); 3]).unwrap();
    assert_eq!(sys.symbol(&[0.0; 3]).max_abs(), 0.0);
    assert!(sys.real_branches(&[0.0, 0.0], 0).unwrap().contains(&0.0));
}

#[test]
fn random_admissible_waves() {
    let g = LieAlgebraSpec::unitary(2).unwrap();
    for seed in 1..=5u64 {
        let a: Vec<CMatrix> = (0..3).map(|m| g.sample_algebra(seed * 10 + m)).collect();
        let sys = FirstOrderSystem::new(gammas(), mass(), a).unwrap();
        let kp = [seed as f64 * 0.5, -1.0];
        let branches = sys.real_branches(&kp, 0).unwrap();
        assert_eq!(branches.len(), 4, "{branches:?}");
        let sol = sys.plane_wave(&kp, 0, seed).unwrap();
        assert!((sol.psi0.fro_norm() - 1.0).abs() <= 1e-12);
        assert!(max_residual(&sys, &sol.derived(), &random_points(seed, 3, 50, 20.0)) <= 1e-9);
    }
}

#[test]
fn pivot_must_be_invertible() {
    let [sx, sy, _] = pauli();
    let degenerate = vec![CMatrix::identity(2), &sx + &sy.scale(I), sy];
    let sys = FirstOrderSystem::new(degenerate, mass(), vec![CMatrix::zeros(2, 2); 3]).unwrap();
    assert!(matches!(sys.real_branches(&[1.0, 1.0], 1), Err(Error::Singular(_))));
}

#[test]
fn no_real_branch_is_reported() {
    // ∂_0ψ + ψ = 0 has only the decaying solution
    let one = CMatrix::identity(1);
    let err = dirac_plane_wave(vec![one.clone()], one, vec![CMatrix::zeros(1, 1)], &[], 1).unwrap_err();
    assert!(err.to_string().contains("no real wavenumber"), "{err}");
}

#[test]
fn dirac_waves_close_with_the_lagrangian_residuals() {
    let l = dirac(gammas(), mass(), 2).unwrap();
    let pts = random_points(2, 3, 10, TAU);
    let free = dirac_plane_wave(gammas(), mass(), vec![CMatrix::zeros(2, 2); 3], &[1.0, 2.0], 4).unwrap();
    for r in el_residual_holomorphic(&l, &free.derived(), &pts, OuterDerivative::jet()).unwrap() {
        assert!(r.d_psi_dag.fro_norm() <= 1e-8 && r.d_psi.fro_norm() <= 1e-8);
    }
    let g = LieAlgebraSpec::unitary(2).unwrap();
    let a: Vec<CMatrix> = (0..3).map(|m| g.sample_algebra(70 + m)).collect();
    let gauged = dirac_plane_wave(gammas(), mass(), a.clone(), &[-1.0, 0.5], 5).unwrap();
    let cfg = GaugeConfig::constant(g, &a).unwrap();
    for r in extended_el_matter(&l, &gauged.derived(), &cfg, &pts, OuterDerivative::jet()).unwrap() {
        assert!(r.psi.d_psi_dag.fro_norm() <= 1e-8, "{:e}", r.psi.d_psi_dag.fro_norm());
    }
}

#[test]
fn constant_gauge_transport_keeps_solutions() {
    let j = pauli()[2].clone();
    for alg in [LieAlgebraSpec::unitary(2).unwrap(), LieAlgebraSpec::by_j(j).unwrap()] {
        let grp = LieGroupSpec::new(alg.clone()).unwrap();
        let a: Vec<CMatrix> = (0..3).map(|m| alg.sample_algebra(90 + m)).collect();
        let sys = FirstOrderSystem::new(gammas(), mass(), a).unwrap();
        let sol = sys.plane_wave(&[0.5, 1.5], 0, 6).unwrap();
        let u = grp.sample_group(7, 1.0).unwrap();
        let moved = DerivedField::from(sol.field.clone()).mul(&DerivedField::constant(3, u.clone())).unwrap();
        let pts = random_points(8, 3, 30, TAU);
        assert!(max_residual(&sys.transported(&u).unwrap(), &moved, &pts) <= 1e-9);
    }
}

#[test]
fn superposed_waves_still_solve() {
    let sys = FirstOrderSystem::new(gammas(), mass(), vec![CMatrix::zeros(2, 2); 3]).unwrap();
    let parts: Vec<DerivedField> = [[1.0, 0.0], [0.0, 2.0], [-1.0, 1.0]]
        .iter()
        .enumerate()
        .map(|(i, kp)| sys.plane_wave(kp, 0, i as u64).unwrap().derived())
        .collect();
    let psi = superpose(&parts).unwrap();
    assert!(max_residual(&sys, &psi, &random_points(9, 3, 30, TAU)) <= 1e-9);
}

#[test]
fn maxwell_waves() {
    let pts = random_points(3, 4, 40, TAU);
    let pot = maxwell_plane_wave_with([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]).unwrap();
    let check = |p: &gaugeflux::gauge_lagrangian::MaxwellPotentials| {
        let res = maxwell_potential_residual(p, &pts).unwrap();
        let worst = res.iter().map(|(s, v)| v.iter().fold(s.norm(), |m, z| m.max(z.norm()))).fold(0.0, f64::max);
        assert!(worst <= 1e-10, "{worst:e}");
        assert!(lorenz_defect(p, &pts).unwrap() <= 1e-10);
        let d = maxwell_defect(&eb_fields(p).unwrap(), &pts).unwrap();
        assert!(d.faraday.max(d.ampere).max(d.div_b) <= 1e-10, "{d:?}");
    };
    check(&pot);
    let skew = maxwell_plane_wave([1.0, -2.0, 0.5], 11).unwrap();
    check(&skew);
    check(&add_potentials(&pot, &skew).unwrap());
    assert!(matches!(maxwell_plane_wave([0.0; 3], 1), Err(Error::Argument(_))));
    assert!(matches!(maxwell_plane_wave_with([1.0, 0.0, 0.0], [2.0, 0.0, 0.0]), Err(Error::Argument(_))));
    // the wave also solves the gauge equations of the Minkowski Lagrangian
    let cfg = skew.to_gauge_config().unwrap();
    let res = gauge_el_residual(&minkowski_lagrangian(1), &cfg, &pts[..8], GaugeElVariant::General, OuterDerivative::jet()).unwrap();
    assert!(res.iter().flatten().all(|m| m.max_abs() <= 1e-8));
}

#[test]
fn schrodinger_waves() {
    let zero = CMatrix::zeros(2, 2);
    for w in schrodinger_solution(&zero, &[1.0, 2.0]).unwrap() {
        assert!((w.omega + 5.0).abs() <= 1e-12);
    }
    let diag = schrodinger_solution(&CMatrix::diag_real(&[1.0, 2.0]), &[0.0, 0.0]).unwrap();
    assert!((diag[0].omega - 1.0).abs() <= 1e-12 && (diag[1].omega - 2.0).abs() <= 1e-12);
    assert!((diag[0].v[(0, 0)].norm() - 1.0).abs() <= 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..3 {
        let v = CMatrix::random_hermitian(2, &mut rng);
        let l = schrodinger(v.clone(), 3).unwrap();
        let op = l.expected_el().unwrap();
        let pts = random_points(5, 3, 20, TAU);
        for w in schrodinger_solution(&v, &[0.5, -1.0]).unwrap() {
            let psi: DerivedField = w.field.clone().into();
            for x in &pts {
                assert!((op.operator)(&psi.jet(x).unwrap(), x).fro_norm() <= 1e-10);
            }
            for r in el_residual_holomorphic(&l, &psi, &pts, OuterDerivative::jet()).unwrap() {
                assert!(r.d_psi_dag.fro_norm() <= 1e-8);
            }
        }
    }
    assert!(schrodinger_solution(&CMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]), &[0.0]).is_err());
}
