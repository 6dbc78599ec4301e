use std::f64::consts::TAU;

use gaugeflux::fields::{gauge_transform_gauge, gauge_transform_matter, random_group_field, random_points, random_smooth_field, DerivedField, GaugeConfig};
use gaugeflux::gauge_lagrangian::{quadratic_gauge_lagrangian, GaugeProtoLagrangian, QuadraticCoeffs};
use gaugeflux::lagrangian::{dirac, pauli, ProtoLagrangian};
use gaugeflux::lie::{LieAlgebraSpec, LieGroupSpec};
use gaugeflux::matcore::{CMatrix, MatrixShape, C64, I, ZERO};
use gaugeflux::noether::*;
use gaugeflux::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gammas() -> Vec<CMatrix> {
    let [sx, sy, _] = pauli();
    vec![CMatrix::identity(2), sx, sy]
}

fn sigma_z() -> CMatrix {
    pauli()[2].clone()
}

fn dirac_l(mass: f64) -> ProtoLagrangian {
    dirac(gammas(), sigma_z().scale(I * mass), 2).unwrap()
}

fn random_psi(seed: u64) -> DerivedField {
    random_smooth_field(seed, 3, MatrixShape::square(2), 1, 0.8, None).unwrap().into()
}

fn u2() -> LieAlgebraSpec {
    LieAlgebraSpec::unitary(2).unwrap()
}

fn quadratic_g(seed: u64) -> GaugeProtoLagrangian {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = 3;
    let raw = CMatrix::random(k, k, &mut rng);
    let h: Vec<Vec<C64>> = (0..k)
        .map(|a| (0..k).map(|b| C64::new(raw[(a, b)].re + raw[(b, a)].re + if a == b { 3.0 } else { 0.0 }, 0.0)).collect())
        .collect();
    quadratic_gauge_lagrangian(QuadraticCoeffs::new(3, h).unwrap(), 2)
}

fn rotation() -> Vec<Vec<f64>> {
    vec![vec![0.0, 0.0, 0.0], vec![0.0, 0.0, -1.0], vec![0.0, 1.0, 0.0]]
}

fn assert_offshell(flux: &FluxField, seed: u64) {
    let pts = random_points(seed, flux.n_dims, 4, TAU);
    let rep = offshell_identity_defect(flux, &pts, 0.2, 3).unwrap();
    assert!(rep.converges(1.9), "{} seed {seed}: {rep:?}", flux.kind);
}

fn flux_of_kind(kind: FluxKind, seed: u64) -> FluxField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi = random_psi(seed);
    let a = GaugeConfig::random(u2(), seed + 50, 3, 1, 0.6).unwrap();
    let b = u2().sample_algebra(seed + 7);
    match kind {
        FluxKind::Current => {
            let gj = LieAlgebraSpec::by_j(sigma_z()).unwrap();
            let a = GaugeConfig::random(gj, seed + 50, 3, 1, 0.6).unwrap();
            flux_current(&psi, &a, &CMatrix::identity(2), &gammas(), &sigma_z().scale(I * 0.7)).unwrap()
        }
        FluxKind::Translation => {
            let k = LinearMap::Right(CMatrix::random_hermitian(2, &mut rng).scale(I));
            flux_translation(&dirac_l(0.7), &psi, k, vec![0.3, -1.1, 0.4]).unwrap()
        }
        FluxKind::Dilation => {
            flux_dilation(&dirac_l(0.7), &psi, LinearMap::Left(sigma_z().scale(I * 0.5)), rotation()).unwrap()
        }
        FluxKind::Internal => flux_internal(&dirac_l(0.7), &psi, LinearMap::Right(CMatrix::random_hermitian(2, &mut rng).scale(I))).unwrap(),
        FluxKind::GaugeTranslation => flux_gauge_translation(&quadratic_g(seed), &a, vec![0.5, 0.2, -0.9]).unwrap(),
        FluxKind::GaugeDilation => flux_gauge_dilation_unchecked(&quadratic_g(seed), &a, rotation()).unwrap(),
        FluxKind::GaugeInternal => flux_gauge_internal(&quadratic_g(seed), &a, &b).unwrap(),
        FluxKind::Combined => flux_combined(&dirac_l(0.7), &quadratic_g(seed), &psi, &a, &b).unwrap(),
    }
}

#[test]
fn offshell_identity_for_every_kind() {
    for kind in FluxKind::ALL {
        for seed in 1..=10 {
            assert_offshell(&flux_of_kind(kind, seed), seed);
        }
    }
}

#[test]
fn random_fields_are_not_conserved() {
    for kind in [FluxKind::Current, FluxKind::Translation, FluxKind::Internal, FluxKind::GaugeInternal, FluxKind::Combined] {
        let flux = flux_of_kind(kind, 3);
        let rep = divergence_defect(&flux, &random_points(3, 3, 4, TAU), 0.05, 2).unwrap();
        assert!(rep.finest() > 1e-2 * rep.scale, "{kind}: {rep:?}");
    }
}

#[test]
fn internal_symmetry_examples() {
    let l = dirac_l(0.7);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let right = SymmetryCandidate::internal(LinearMap::Right(CMatrix::random_hermitian(2, &mut rng).scale(I)), 3);
    assert!(internal_symmetry_defect(&l, &right, 20, 2, Flow::Exponential).unwrap() <= 1e-8);
    let zero = ProtoLagrangian::new("zero", 3, 2, 2, |_| ZERO);
    assert_eq!(internal_symmetry_defect(&zero, &SymmetryCandidate::internal(LinearMap::Zero, 3), 5, 1, Flow::Exponential).unwrap(), 0.0);
    let cubic = ProtoLagrangian::new("cubic", 3, 2, 1, |p| {
        let n = p.q.trace_mul(&p.p);
        n * n.sqrt()
    });
    let scale = SymmetryCandidate::internal(LinearMap::Left(CMatrix::identity(2)), 3);
    assert!(internal_symmetry_defect(&cubic, &scale, 10, 3, Flow::Exponential).unwrap() > 1e-3);
}

#[test]
fn rotation_is_a_dilation_symmetry_of_dirac() {
    let l = dirac_l(0.7);
    let plus = SymmetryCandidate::dilation(LinearMap::Left(sigma_z().scale(I * 0.5)), rotation());
    let minus = SymmetryCandidate::dilation(LinearMap::Left(sigma_z().scale(-I * 0.5)), rotation());
    assert!(internal_symmetry_defect(&l, &plus, 20, 4, Flow::Exponential).unwrap() <= 1e-8);
    assert!(internal_symmetry_defect(&l, &minus, 20, 4, Flow::Exponential).unwrap() > 1e-3);
    assert!(external_symmetry_defect(&l, &plus, 20, 4).unwrap().max() <= 1e-8);
}

#[test]
fn external_symmetry_examples() {
    let l = ProtoLagrangian::new("sin-weighted", 2, 1, 1, |p| p.q.trace_mul(&p.p) * p.x[0].sin());
    let along = |a: Vec<f64>| external_symmetry_defect(&l, &SymmetryCandidate::translation(LinearMap::Zero, a), 20, 5).unwrap();
    let e2 = along(vec![0.0, 1.0]);
    assert!(e2.max() <= 1e-8, "{e2:?}");
    let e1 = along(vec![1.0, 0.0]);
    assert!(e1.flow > 1e-3 && (e1.flow - e1.gradient).abs() <= 1e-6, "{e1:?}");
    let free = dirac_l(0.3);
    let d = external_symmetry_defect(&free, &SymmetryCandidate::dilation(LinearMap::Zero, rotation()), 10, 6).unwrap();
    assert!(d.max() <= 1e-12);
}

#[test]
fn flow_form_does_not_change_verdicts() {
    let l = dirac_l(0.7);
    let cubic = ProtoLagrangian::new("quartic", 3, 2, 2, |p| {
        let qp = &p.q * &p.p;
        qp.trace_mul(&qp)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cands = [
        SymmetryCandidate::internal(LinearMap::Right(CMatrix::random_anti_hermitian(2, &mut rng)), 3),
        SymmetryCandidate::internal(LinearMap::Left(CMatrix::random(2, 2, &mut rng)), 3),
        SymmetryCandidate::dilation(LinearMap::Left(sigma_z().scale(I * 0.5)), rotation()),
        SymmetryCandidate::internal(LinearMap::from_fn(2, 2, |m| m.conj()), 3),
    ];
    for l in [&l, &cubic] {
        for c in &cands {
            let e = internal_symmetry_defect(l, c, 10, 3, Flow::Exponential).unwrap();
            let lin = internal_symmetry_defect(l, c, 10, 3, Flow::Linear).unwrap();
            assert!((e - lin).abs() <= 1e-7, "{e} vs {lin}");
        }
    }
}

#[test]
fn linear_map_representations_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = CMatrix::random(2, 2, &mut rng);
    let left = LinearMap::Left(m.clone());
    let tab = LinearMap::from_fn(2, 3, |x| &m * x);
    for _ in 0..5 {
        let x = CMatrix::random(2, 3, &mut rng);
        assert!(left.apply(&x).dist(&tab.apply(&x)) <= 1e-14);
    }
    assert!(LinearMap::Right(m).check_shape(2, 3).is_err());
}

#[test]
fn preconditions_are_enforced() {
    let psi = random_psi(1);
    let a = GaugeConfig::random(u2(), 2, 3, 1, 0.6).unwrap();
    let g = quadratic_g(1);
    let is_precondition = |e: Error| matches!(e, Error::Precondition(_));
    let is_validation = |e: Error| matches!(e, Error::Validation(_));

    // current: KΓ^μ not Hermitian, KM + M†K† ≠ 0, A outside g_J
    let k = sigma_z().scale(I);
    assert!(is_validation(flux_current(&psi, &a, &k, &gammas(), &CMatrix::zeros(2, 2)).unwrap_err()));
    let e = flux_current(&psi, &a, &CMatrix::identity(2), &gammas(), &CMatrix::identity(2)).unwrap_err();
    assert!(e.to_string().contains("iii"), "{e}");
    let amb = GaugeConfig::random(LieAlgebraSpec::full_ambient(2).unwrap(), 3, 3, 1, 0.6).unwrap();
    let e = flux_current(&psi, &amb, &CMatrix::identity(2), &gammas(), &sigma_z().scale(I)).unwrap_err();
    assert!(is_precondition(e));

    // matter fluxes: x-dependent L, non-symmetric K, trace-ful A
    let weighted = ProtoLagrangian::new("x-weighted", 3, 2, 2, |p| p.q.trace_mul(&p.p) * (1.0 + 0.5 * p.x[1].cos()));
    assert!(is_precondition(flux_translation(&weighted, &psi, LinearMap::Zero, vec![0.0, 1.0, 0.0]).unwrap_err()));
    assert!(flux_translation(&weighted, &psi, LinearMap::Zero, vec![1.0, 0.0, 0.0]).is_ok());
    assert!(is_precondition(flux_dilation(&weighted, &psi, LinearMap::Zero, rotation()).unwrap_err()));
    let l = dirac_l(0.7);
    assert!(is_precondition(flux_internal(&l, &psi, LinearMap::Left(CMatrix::identity(2))).unwrap_err()));
    let mut traceful = rotation();
    traceful[0][0] = 1.0;
    assert!(is_validation(flux_dilation(&l, &psi, LinearMap::Zero, traceful.clone()).unwrap_err()));

    // gauge fluxes
    let x_dependent = GaugeProtoLagrangian::new("x-weighted", 3, 2, {
        let g = g.clone();
        move |p| g.value(p) * (1.0 + 0.5 * p.x[0].sin())
    });
    assert!(is_precondition(flux_gauge_translation(&x_dependent, &a, vec![1.0, 0.0, 0.0]).unwrap_err()));
    assert!(flux_gauge_translation(&x_dependent, &a, vec![0.0, 1.0, 0.0]).is_ok());
    assert!(is_validation(flux_gauge_dilation(&g, &a, traceful).unwrap_err()));
    let e = flux_gauge_dilation(&g, &a, rotation()).unwrap_err();
    assert!(is_precondition(e.clone()) && e.to_string().contains("orthogonality"), "{e}");
    let not_in_g = CMatrix::identity(2);
    assert!(is_validation(flux_gauge_internal(&g, &a, &not_in_g).unwrap_err()));
    let lopsided = GaugeProtoLagrangian::new("lopsided", 3, 2, {
        let d = CMatrix::diag_real(&[1.0, 0.0]);
        move |p| p.p.iter().map(|f| (&(&d * f) * &f.dagger()).trace()).sum::<C64>()
    });
    let b = u2().sample_algebra(4);
    assert!(is_precondition(flux_gauge_internal(&lopsided, &a, &b).unwrap_err()));

    // combined: matter not invariant under right multiplication
    let [sx, _, _] = pauli();
    let quartic = ProtoLagrangian::new("quartic-probe", 3, 2, 2, move |p| {
        let qp = &p.q * &p.p;
        (&qp * &qp).trace_mul(&sx)
    });
    assert!(is_precondition(flux_combined(&quartic, &g, &psi, &a, &b).unwrap_err()));
    assert!(is_precondition(flux_combined(&l, &lopsided, &psi, &a, &b).unwrap_err()));
}

#[test]
fn trivial_fluxes_vanish() {
    let psi = random_psi(5);
    let l = dirac_l(0.7);
    let pts = random_points(5, 3, 6, TAU);
    let zero = |f: FluxField| pts.iter().all(|x| f.at(x).unwrap().iter().all(|z| z.norm() == 0.0));
    assert!(zero(flux_translation(&l, &psi, LinearMap::Zero, vec![0.0; 3]).unwrap()));
    assert!(zero(flux_internal(&l, &psi, LinearMap::Zero).unwrap()));
    let a = GaugeConfig::random(u2(), 6, 3, 1, 0.6).unwrap();
    assert!(zero(flux_combined(&l, &quadratic_g(2), &psi, &a, &CMatrix::zeros(2, 2)).unwrap()));
    let u1 = GaugeConfig::random(LieAlgebraSpec::unitary(1).unwrap(), 6, 3, 1, 0.6).unwrap();
    let g1 = quadratic_gauge_lagrangian(QuadraticCoeffs::identity(3).unwrap(), 1);
    let b1 = CMatrix::scalar(I * 0.8);
    let f = flux_gauge_internal(&g1, &u1, &b1).unwrap();
    assert!(pts.iter().all(|x| f.at(x).unwrap().iter().all(|z| z.norm() <= 1e-15)));
}

#[test]
fn flux_formulas_collapse_consistently() {
    let psi = random_psi(8);
    let l = dirac_l(0.4);
    let pts = random_points(8, 3, 8, TAU);
    let k = LinearMap::Right(sigma_z().scale(I * 0.5));
    let dil = flux_dilation(&l, &psi, k.clone(), vec![vec![0.0; 3]; 3]).unwrap();
    let tr = flux_translation(&l, &psi, k, vec![0.0; 3]).unwrap();
    let a = GaugeConfig::random(u2(), 9, 3, 1, 0.6).unwrap();
    let b = u2().sample_algebra(10);
    let zero_g = GaugeProtoLagrangian::new("zero", 3, 2, |_| ZERO);
    let comb = flux_combined(&l, &zero_g, &psi, &GaugeConfig::zero(u2(), 3), &b).unwrap();
    let int = flux_internal(&l, &psi, LinearMap::Right(b.clone())).unwrap();
    let comb_a = flux_combined(&l, &zero_g, &psi, &a, &b);
    assert!(comb_a.is_ok());
    // the current of the first-order system, with J = I, against the internal flux of K = i
    let cur = flux_current(&psi, &GaugeConfig::zero(u2(), 3), &CMatrix::identity(2), &gammas(), &sigma_z().scale(I * 0.4)).unwrap();
    let charge = flux_internal(&l, &psi, LinearMap::Right(CMatrix::identity(2).scale(I))).unwrap();
    for x in &pts {
        let d = |f: &FluxField, g: &FluxField, s: f64| f.at(x).unwrap().iter().zip(g.at(x).unwrap()).map(|(u, v)| (u - v * s).norm()).fold(0.0, f64::max);
        assert!(d(&dil, &tr, 1.0) <= 1e-14);
        assert!(d(&comb, &int, 1.0) <= 1e-12);
        assert!(d(&charge, &cur, -1.0) <= 1e-12);
    }
}

#[test]
fn current_values_are_gauge_invariant() {
    let j = sigma_z();
    let gj = LieAlgebraSpec::by_j(j.clone()).unwrap();
    let grp = LieGroupSpec::new(gj.clone()).unwrap();
    for seed in 1..=3 {
        let psi = random_psi(seed);
        let a = GaugeConfig::random(gj.clone(), seed + 20, 3, 1, 0.5).unwrap();
        let u = random_group_field(&grp, seed + 40, 3, 1, 0.5).unwrap();
        let m = sigma_z().scale(I * 0.6);
        let f = flux_current(&psi, &a, &CMatrix::identity(2), &gammas(), &m).unwrap();
        let fu = flux_current(&gauge_transform_matter(&psi, &u).unwrap(), &gauge_transform_gauge(&a, &u).unwrap(), &CMatrix::identity(2), &gammas(), &m).unwrap();
        for x in random_points(seed, 3, 20, TAU) {
            for (p, q) in f.at(&x).unwrap().iter().zip(fu.at(&x).unwrap()) {
                assert!((p - q).norm() <= 1e-10, "{p} vs {q}");
            }
        }
    }
}

#[test]
fn sampling_and_kind_names() {
    let f = flux_of_kind(FluxKind::Internal, 1);
    let grid = gaugeflux::fields::Grid::torus(3, 4).unwrap();
    let s = f.sample(&grid).unwrap();
    assert_eq!(s.components.len(), 3);
    assert!(s.is_finite() && s.max_abs() > 0.0);
    for k in FluxKind::ALL {
        assert_eq!(k.name().parse::<FluxKind>().unwrap(), k);
    }
    assert!("eq-4.5".parse::<FluxKind>().is_err());
}

#[test]
fn oracle_solutions_conserve_fluxes() {
    use gaugeflux::oracles::{superpose, FirstOrderSystem};
    let m = sigma_z().scale(I * 0.7);
    let sys = FirstOrderSystem::new(gammas(), m.clone(), vec![CMatrix::zeros(2, 2); 3]).unwrap();
    let parts: Vec<DerivedField> = [[1.0, 0.0], [0.0, -1.0], [1.0, 1.0]]
        .iter()
        .enumerate()
        .map(|(i, kp)| sys.plane_wave(kp, 0, 3 + i as u64).unwrap().derived())
        .collect();
    let psi = superpose(&parts).unwrap();
    let l = dirac_l(0.7);
    let pts = random_points(12, 3, 6, TAU);
    let fluxes = [
        flux_current(&psi, &GaugeConfig::zero(u2(), 3), &CMatrix::identity(2), &gammas(), &m).unwrap(),
        flux_translation(&l, &psi, LinearMap::Zero, vec![1.0, 0.5, -0.5]).unwrap(),
        flux_internal(&l, &psi, LinearMap::Right(CMatrix::identity(2).scale(I))).unwrap(),
        flux_dilation(&l, &psi, LinearMap::Left(sigma_z().scale(I * 0.5)), rotation()).unwrap(),
    ];
    for f in &fluxes {
        let rep = divergence_defect(f, &pts, 0.02, 3).unwrap();
        assert!(rep.converges(1.9) && rep.finest() <= 1e-4 * rep.scale, "{}: {rep:?}", f.kind);
    }
}

#[test]
fn reference_setups_conserve_on_solutions_only() {
    use gaugeflux::noether::reference::{onshell_control, onshell_flux};
    for kind in FluxKind::ALL {
        let Some(f) = onshell_flux(kind, 3).unwrap() else { continue };
        let pts = random_points(12, f.n_dims, 6, TAU);
        let rep = divergence_defect(&f, &pts, 0.02, 3).unwrap();
        assert!(rep.converges(1.9) && rep.finest() <= 1e-4 * rep.scale, "{kind}: {rep:?}");
        let c = onshell_control(kind, 3).unwrap().unwrap();
        let rep = divergence_defect(&c, &pts, 0.05, 2).unwrap();
        assert!(rep.finest() > 1e-2 * rep.scale, "{kind}: {rep:?}");
    }
}
