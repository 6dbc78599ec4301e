use gaugeflux::fields::{random_points, random_smooth_field, DerivedField, Grid};
use gaugeflux::lagrangian::*;
use gaugeflux::matcore::{CMatrix, MatrixShape, C64, I, ONE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instances(seed: u64) -> Vec<BuiltinInstance> {
    BuiltinKind::ALL.iter().map(|&k| reference_instance(k, seed).unwrap()).collect()
}

#[test]
fn three_residual_systems_agree() {
    for seed in [1, 2] {
        for inst in instances(seed) {
            let l = &inst.lagrangian;
            let pts = random_points(seed + 10, l.n_dims, 6, 6.0);
            let backend = OuterDerivative::Grid { h: inst.grid.h(0) };
            let hol = el_residual_holomorphic(l, &inst.psi, &pts, backend).unwrap();
            let real = el_residual_real(l, &inst.psi, &pts, backend).unwrap();
            let (d_re, d_im) = real_holomorphic_relation_defect(&hol, &real);
            assert!(d_re <= 1e-8 && d_im <= 1e-8, "{}: {d_re:e} {d_im:e}", l.name);
        }
    }
}

#[test]
fn dagger_relation_between_residuals() {
    for inst in instances(3) {
        let l = &inst.lagrangian;
        let pts = random_points(4, l.n_dims, 6, 6.0);
        let d = conjugate_slot_relation_defect(l, &inst.psi, &pts, OuterDerivative::jet()).unwrap();
        assert!(d <= 1e-8, "{}: {d:e}", l.name);
    }
}

#[test]
fn broken_dirac_fails_dagger_relation() {
    let [sx, sy, _] = pauli();
    let l = dirac_unchecked(vec![CMatrix::identity(2), sx, sy], CMatrix::diag_real(&[1.0, 0.5]), 1).unwrap();
    let psi: DerivedField = random_smooth_field(5, 3, MatrixShape::new(2, 1).unwrap(), 1, 1.0, None).unwrap().into();
    let d = conjugate_slot_relation_defect(&l, &psi, &random_points(1, 3, 6, 6.0), OuterDerivative::jet()).unwrap();
    assert!(d > 1e-3, "{d:e}");
}

#[test]
fn jet_and_grid_backends_converge() {
    let inst = reference_instance(BuiltinKind::SecondOrder, 7).unwrap();
    let pts = random_points(2, 3, 4, 6.0);
    let exact = el_residual_holomorphic(&inst.lagrangian, &inst.psi, &pts, OuterDerivative::jet()).unwrap();
    let err = |h: f64| {
        let fd = el_residual_holomorphic(&inst.lagrangian, &inst.psi, &pts, OuterDerivative::Grid { h }).unwrap();
        fd.iter().zip(&exact).map(|(a, b)| a.d_psi_dag.dist(&b.d_psi_dag)).fold(0.0, f64::max)
    };
    let order = (err(0.1) / err(0.05)).log2();
    assert!(order > 1.9, "order {order}");
}

#[test]
fn residuals_reproduce_expected_operators() {
    for inst in instances(5) {
        let l = &inst.lagrangian;
        let ex = l.expected_el().unwrap();
        let pts = random_points(6, l.n_dims, 6, 6.0);
        let res = el_residual_holomorphic(l, &inst.psi, &pts, OuterDerivative::jet()).unwrap();
        for (x, r) in pts.iter().zip(res) {
            let want = (ex.operator)(&inst.psi.jet(x).unwrap(), x).scale(ex.factor);
            assert!(r.d_psi_dag.dist(&want) <= 1e-7, "{}", l.name);
        }
    }
}

#[test]
fn realness_of_builtins() {
    for inst in instances(8) {
        let l = &inst.lagrangian;
        let rep = realness_defect(l, &inst.psi, &inst.grid).unwrap();
        assert!(rep.integral_im <= 1e-9, "{}: {:e}", l.name, rep.integral_im);
        match l.realness {
            RealnessMode::Pointwise => assert!(rep.pointwise_im <= 1e-12),
            RealnessMode::Slack => {
                let (_, _, order) = rep.slack.unwrap();
                assert!(order >= 1.9, "{}: order {order}", l.name);
            }
            RealnessMode::IntegralOnly => {}
        }
    }
}

#[test]
fn slot_conversion_to_real_parts() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for inst in instances(9) {
        let l = &inst.lagrangian;
        let (r, c, n) = (l.r, l.c, l.n_dims);
        let pt = SlotPoint {
            p: CMatrix::random(r, c, &mut rng),
            q: CMatrix::random(c, r, &mut rng),
            r: (0..n).map(|_| CMatrix::random(r, c, &mut rng)).collect(),
            s: (0..n).map(|_| CMatrix::random(c, r, &mut rng)).collect(),
            x: vec![0.4; n],
        };
        let s = l.slots(&pt).unwrap();
        let rs = numeric_real_slots(l, &pt).unwrap();
        assert!(rs.re.dist(&(&s.o + &s.o_star.transpose())) <= 1e-8);
        assert!(rs.im.dist(&(&s.o - &s.o_star.transpose()).scale(I)) <= 1e-8);
        for m in 0..n {
            assert!(rs.mu_re[m].dist(&(&s.mu[m] + &s.mu_star[m].transpose())) <= 1e-8);
            assert!(rs.mu_im[m].dist(&(&s.mu[m] - &s.mu_star[m].transpose()).scale(I)) <= 1e-8);
        }
    }
}

// f(z, z̄) = Σ a_ij z_i z̄_j + c.c. + |z_0|^4 is real; with z = x + iy,
// ∂f/∂x = ∂f/∂z + ∂f/∂z̄, ∂f/∂y = i(∂f/∂z − ∂f/∂z̄), ∂f/∂z̄ = conj(∂f/∂z)
#[test]
fn wirtinger_toy_relations() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = CMatrix::random(3, 3, &mut rng);
    let f = |z: &[C64], w: &[C64]| {
        let mut s = z[0] * z[0] * w[0] * w[0];
        for i in 0..3 {
            for j in 0..3 {
                s += a[(i, j)] * z[i] * w[j] + a[(i, j)].conj() * w[i] * z[j];
            }
        }
        s
    };
    let z: Vec<C64> = (0..3).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let zb: Vec<C64> = z.iter().map(|v| v.conj()).collect();
    assert!(f(&z, &zb).im.abs() < 1e-14);
    let e = 1e-5;
    for k in 0..3 {
        let bump = |v: &[C64], d: C64| {
            let mut v = v.to_vec();
            v[k] += d;
            v
        };
        let dz = (f(&bump(&z, ONE * e), &zb) - f(&bump(&z, -ONE * e), &zb)) / (2.0 * e);
        let dzb = (f(&z, &bump(&zb, ONE * e)) - f(&z, &bump(&zb, -ONE * e))) / (2.0 * e);
        let real = |d: C64| f(&bump(&z, d), &bump(&zb, d.conj()));
        let dx = (real(ONE * e) - real(-ONE * e)) / (2.0 * e);
        let dy = (real(I * e) - real(-I * e)) / (2.0 * e);
        assert!((dx - (dz + dzb)).norm() < 1e-8);
        assert!((dy - I * (dz - dzb)).norm() < 1e-8);
        assert!((dzb - dz.conj()).norm() < 1e-8);
    }
}

#[test]
fn gauge_density_trace_blocks() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let j = CMatrix::diag_real(&[1.0, -1.0]);
    let jinv = j.inverse().unwrap();
    for _ in 0..50 {
        let psi = CMatrix::random(3, 2, &mut rng);
        let dpsi = CMatrix::random(3, 2, &mut rng);
        let kg = CMatrix::random_hermitian(3, &mut rng);
        let dkg = CMatrix::random_hermitian(3, &mut rng);
        let km = CMatrix::random(3, 3, &mut rng);
        // A ∈ g_J: A†J + JA = 0
        let a = &jinv * &CMatrix::random_anti_hermitian(2, &mut rng);
        let pd = psi.dagger();
        let d_inner = &(&(&dpsi.dagger() * &kg) * &psi) + &(&(&pd * &dkg) * &psi) + &pd * &(&kg * &dpsi);
        let b1 = (&(&pd * &kg) * &dpsi * &jinv).trace() + (&jinv * &(&(&dpsi.dagger() * &kg.dagger()) * &psi)).trace()
            - (&jinv * &d_inner).trace()
            + (&jinv * &(&(&pd * &dkg) * &psi)).trace();
        let b2 = (&pd * &(&(&(&kg * &psi) * &a) * &jinv)).trace()
            + (&jinv * &(&(&(&a.dagger() * &pd) * &kg.dagger()) * &psi)).trace()
            - (&(&(&a * &jinv) + &(&jinv * &a.dagger())) * &(&(&pd * &kg) * &psi)).trace();
        let zero_a = (&(&a * &jinv) + &(&jinv * &a.dagger())).max_abs();
        let b3 = (&pd * &(&(&km * &psi) * &jinv)).trace() + (&jinv * &(&(&pd * &km.dagger()) * &psi)).trace()
            - (&jinv * &(&pd * &(&(&km + &km.dagger()) * &psi))).trace();
        assert!(b1.norm() <= 1e-10 && b2.norm() <= 1e-10 && b3.norm() <= 1e-10 && zero_a <= 1e-12);
    }
}

#[test]
fn origin_and_validation() {
    for inst in instances(13) {
        let l = &inst.lagrangian;
        assert!(l.origin_zero);
        assert_eq!(l.origin_defect(&random_points(1, l.n_dims, 5, 6.0)), 0.0);
    }
    let err = schrodinger(CMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]), 3).unwrap_err();
    assert!(err.to_string().contains("Hermitian"));
    let grid = Grid::torus(2, 8).unwrap();
    let psi: DerivedField = random_smooth_field(1, 3, MatrixShape::new(2, 1).unwrap(), 1, 1.0, None).unwrap().into();
    let l = reference_instance(BuiltinKind::Dirac, 1).unwrap().lagrangian;
    assert!(realness_defect(&l, &psi, &grid).is_err());
}
