//! The verification suites. Each suite returns a list of checks; `all` runs
//! them in a fixed order.

use gaugeflux::fields::*;
use gaugeflux::gauge_lagrangian::*;
use gaugeflux::lagrangian::*;
use gaugeflux::lie::{projection_facts, Expectation, LieAlgebraSpec, LieGroupSpec};
use gaugeflux::matcore::{trace_identity_defect, CMatrix, MatrixShape, TraceIdentity, C64, I};
use gaugeflux::noether::reference::{offshell_flux, onshell_control, onshell_flux};
use gaugeflux::noether::{divergence_defect, offshell_identity_defect, DivergenceReport, FluxKind};
use gaugeflux::oracles::maxwell_plane_wave;
use gaugeflux::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::SuiteConfig;
use crate::report::{Bound, Check};

/// Suite names accepted by `verify`, in the order `all` runs them.
pub fn suite_names() -> Vec<String> {
    let mut v: Vec<String> = [
        "trace-identities",
        "projections",
        "covariance",
        "el-equivalence",
        "gauge-el",
        "maxwell",
        "extensions",
        "stacked-gauge",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    v.extend(FluxKind::ALL.iter().map(|k| format!("noether-{}", k.name())));
    v
}

pub fn is_suite(name: &str) -> bool {
    name == "all" || suite_names().iter().any(|s| s == name)
}

struct Ctx<'a> {
    cfg: &'a SuiteConfig,
    suite: String,
    checks: Vec<Check>,
}

impl<'a> Ctx<'a> {
    fn new(cfg: &'a SuiteConfig, suite: &str) -> Self {
        Ctx { cfg, suite: suite.to_string(), checks: Vec::new() }
    }

    fn upper(&mut self, name: impl Into<String>, statement: &str, measured: f64, default: f64) {
        let name = name.into();
        let tol = self.cfg.tolerance(&name, default);
        self.checks.push(Check::new(&self.suite, name, statement, measured, tol, Bound::Upper));
    }

    fn lower(&mut self, name: impl Into<String>, statement: &str, measured: f64, default: f64) {
        let name = name.into();
        let tol = self.cfg.tolerance(&name, default);
        self.checks.push(Check::new(&self.suite, name, statement, measured, tol, Bound::Lower));
    }

    fn converging(&mut self, name: impl Into<String>, statement: &str, rep: &DivergenceReport, default: f64) {
        let name = name.into();
        let tol = self.cfg.tolerance(&name, default);
        let check = Check::new(&self.suite, name, statement, rep.finest(), tol, Bound::Upper)
            .with_order(rep.order, self.cfg.min_order);
        self.checks.push(check);
    }

    fn seed(&self, offset: u64) -> u64 {
        self.cfg.seed.wrapping_add(offset)
    }

    fn points(&self, seed: u64, n: usize, count: usize) -> Vec<Vec<f64>> {
        random_points(seed, n, count, self.cfg.grid.period)
    }
}

pub fn run_suite(name: &str, cfg: &SuiteConfig) -> Result<Vec<Check>> {
    if name == "all" {
        let mut out = Vec::new();
        for s in suite_names() {
            out.extend(run_suite(&s, cfg)?);
        }
        return Ok(out);
    }
    let mut ctx = Ctx::new(cfg, name);
    match name {
        "trace-identities" => trace_identities(&mut ctx)?,
        "projections" => projections(&mut ctx)?,
        "covariance" => covariance(&mut ctx)?,
        "el-equivalence" => el_equivalence(&mut ctx)?,
        "gauge-el" => gauge_el(&mut ctx)?,
        "maxwell" => maxwell(&mut ctx)?,
        "extensions" => extensions(&mut ctx)?,
        "stacked-gauge" => stacked_gauge(&mut ctx)?,
        _ => match name.strip_prefix("noether-").map(str::parse::<FluxKind>) {
            Some(Ok(kind)) => noether(&mut ctx, kind)?,
            _ => return Err(gaugeflux::Error::Argument(format!("unknown suite `{name}`"))),
        },
    }
    Ok(ctx.checks)
}

fn trace_identities(ctx: &mut Ctx) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed(0));
    for kind in TraceIdentity::ALL {
        let mut worst: f64 = 0.0;
        for c in 2..=4 {
            for _ in 0..ctx.cfg.samples {
                let inputs: Vec<CMatrix> = (0..kind.arity()).map(|_| CMatrix::random(c, c, &mut rng)).collect();
                worst = worst.max(trace_identity_defect(kind, &inputs)?);
            }
        }
        ctx.upper(kind.name(), "trace identity on random complex matrices, sizes 2 to 4", worst, 1e-12);
    }
    Ok(())
}

fn projections(ctx: &mut Ctx) -> Result<()> {
    for f in projection_facts(ctx.seed(0), 50)? {
        let statement = match f.expect {
            Expectation::Holds => "defect of the projection fact",
            Expectation::Fails => "defect without the hypothesis (negative control)",
        };
        match f.expect {
            Expectation::Holds => ctx.upper(f.name, statement, f.measured, f.tolerance),
            Expectation::Fails => ctx.lower(f.name, statement, f.measured, f.tolerance),
        }
    }
    Ok(())
}

fn sweep_algebras() -> Result<Vec<LieAlgebraSpec>> {
    Ok(vec![
        LieAlgebraSpec::unitary(1)?,
        LieAlgebraSpec::unitary(2)?,
        LieAlgebraSpec::unitary(3)?,
        LieAlgebraSpec::by_j(CMatrix::diag_real(&[1.0, -1.0]))?,
    ])
}

fn configured_algebra(cfg: &SuiteConfig, c: usize) -> Result<LieAlgebraSpec> {
    let alg = match &cfg.algebra {
        Some(a) => a.build()?,
        None => LieAlgebraSpec::unitary(c)?,
    };
    if alg.dim_c() != c {
        return Err(gaugeflux::Error::Validation(format!("algebra acts on {}x{}, dims ask for c = {c}", alg.dim_c(), alg.dim_c())));
    }
    Ok(alg)
}

fn covariance(ctx: &mut Ctx) -> Result<()> {
    let count = ctx.cfg.instances_or(20);
    let algebras = sweep_algebras()?;
    let mut worst: f64 = 0.0;
    let mut membership: f64 = 0.0;
    for i in 0..count {
        let (n, alg) = match &ctx.cfg.dims {
            Some(d) => (d.n, configured_algebra(ctx.cfg, d.c)?),
            None => ([2, 3, 4][i % 3], algebras[i % algebras.len()].clone()),
        };
        let seed = ctx.seed(i as u64);
        let grp = LieGroupSpec::new(alg.clone())?;
        let a = GaugeConfig::random(alg, seed, n, 1, 0.7)?;
        let u = random_group_field(&grp, seed + 1000, n, 1, 0.6)?;
        let pts = ctx.points(seed, n, ctx.cfg.points);
        worst = worst.max(check_covariance(&a, &u, &pts)?);
        membership = membership.max(gauge_transform_gauge(&a, &u)?.membership_defect(&pts)?);
    }
    ctx.upper("field-strength-covariance", "max |F(A⊣U) − U⁻¹F(A)U| with exact derivatives", worst, 1e-10);
    ctx.upper("transformed-potential-in-algebra", "A⊣U stays in the Lie algebra", membership, 1e-9);

    let mut composition: f64 = 0.0;
    let alg = match &ctx.cfg.dims {
        Some(d) => configured_algebra(ctx.cfg, d.c)?,
        None => LieAlgebraSpec::unitary(2)?,
    };
    let n = ctx.cfg.dims.as_ref().map_or(3, |d| d.n);
    let grp = LieGroupSpec::new(alg.clone())?;
    for s in 0..10u64 {
        let seed = ctx.seed(100 + 3 * s);
        let a = GaugeConfig::random(alg.clone(), seed, n, 1, 0.8)?;
        let u = random_group_field(&grp, seed + 1, n, 1, 0.5)?;
        let v = random_group_field(&grp, seed + 2, n, 1, 0.5)?;
        let lhs = gauge_transform_gauge(&gauge_transform_gauge(&a, &u)?, &v)?;
        let rhs = gauge_transform_gauge(&a, &u.mul(&v)?)?;
        for x in ctx.points(seed, n, 100) {
            for (l, r) in lhs.components.iter().zip(&rhs.components) {
                composition = composition.max(l.value(&x)?.dist(&r.value(&x)?));
            }
        }
    }
    ctx.upper("group-action-composes", "(A⊣U)⊣V = A⊣(UV) pointwise", composition, 1e-11);
    Ok(())
}

fn el_equivalence(ctx: &mut Ctx) -> Result<()> {
    let backend = OuterDerivative::jet();
    for &kind in &ctx.cfg.builtins.clone() {
        let inst = reference_instance(kind, ctx.seed(0))?;
        let l = &inst.lagrangian;
        let b = kind.name();
        let pts = ctx.points(ctx.seed(10), l.n_dims, ctx.cfg.points);
        // both systems through the same stencil, so the comparison is purely algebraic
        let stencil = OuterDerivative::Grid { h: inst.grid.h(0) };
        let hol = el_residual_holomorphic(l, &inst.psi, &pts, stencil)?;
        let real = el_residual_real(l, &inst.psi, &pts, stencil)?;
        let (d_re, d_im) = real_holomorphic_relation_defect(&hol, &real);
        ctx.upper(format!("real-holomorphic-relation/{b}"), "real-part residuals follow from the holomorphic ones", d_re.max(d_im), 1e-8);
        let d = conjugate_slot_relation_defect(l, &inst.psi, &pts, backend)?;
        ctx.upper(format!("dagger-relation/{b}"), "conjugate residual is the transposed conjugate of the holomorphic one", d, 1e-8);
        if let Some(ex) = l.expected_el() {
            let mut worst: f64 = 0.0;
            for (x, r) in pts.iter().zip(&el_residual_holomorphic(l, &inst.psi, &pts, backend)?) {
                let want = (ex.operator)(&inst.psi.jet(x)?, x).scale(ex.factor);
                worst = worst.max(r.d_psi_dag.dist(&want));
            }
            ctx.upper(format!("closed-form-equation/{b}"), "residual equals the closed-form field equation", worst, 1e-7);
        }
        let grid = match ctx.cfg.grid.points_per_axis {
            Some(p) => Grid::torus(l.n_dims, p)?,
            None => inst.grid.clone(),
        };
        let rep = realness_defect(l, &inst.psi, &grid)?;
        ctx.upper(format!("realness-integral/{b}"), "|∫ Im L| over the torus", rep.integral_im, 1e-9);
        if l.realness == RealnessMode::Pointwise {
            ctx.upper(format!("realness-pointwise/{b}"), "max |Im L|", rep.pointwise_im, 1e-12);
        }
        if let Some((_, _, order)) = rep.slack {
            ctx.lower(format!("realness-slack-order/{b}"), "order of L − L̄ − div w under grid refinement", order, ctx.cfg.min_order);
        }
    }
    let [sx, sy, _] = pauli();
    let broken = dirac_unchecked(vec![CMatrix::identity(2), sx, sy], CMatrix::diag_real(&[1.0, 0.5]), 1)?;
    let psi: DerivedField = random_smooth_field(ctx.seed(5), 3, MatrixShape::new(2, 1)?, 1, 1.0, None)?.into();
    let d = conjugate_slot_relation_defect(&broken, &psi, &ctx.points(ctx.seed(6), 3, ctx.cfg.points), backend)?;
    ctx.lower("dagger-relation-control", "Hermitian mass term breaks the conjugate relation", d, 1e-3);
    Ok(())
}

fn real_symmetric_h(n: usize, seed: u64) -> Result<QuadraticCoeffs> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let np = n * (n - 1) / 2;
    let m = CMatrix::random_hermitian(np, &mut rng);
    let h = (0..np)
        .map(|a| (0..np).map(|b| C64::new(m[(a, b)].re + if a == b { 2.0 } else { 0.0 }, 0.0)).collect())
        .collect();
    QuadraticCoeffs::new(n, h)
}

fn max_dist(a: &[Vec<CMatrix>], b: &[Vec<CMatrix>], f: impl Fn(&CMatrix) -> CMatrix) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| f(x).dist(y)).fold(0.0, f64::max)
}

fn gauge_el(ctx: &mut Ctx) -> Result<()> {
    let names = ["u1", "u2", "u3", "gj-diag"];
    let pts = ctx.points(ctx.seed(3), 3, ctx.cfg.points);
    for (k, alg) in sweep_algebras()?.into_iter().enumerate() {
        let c = alg.dim_c();
        let a = GaugeConfig::random(alg, ctx.seed(20 + k as u64), 3, 1, 0.7)?;
        let g = quadratic_gauge_lagrangian(real_symmetric_h(3, ctx.seed(k as u64))?, c);
        let run = |v| gauge_el_residual(&g, &a, &pts, v, OuterDerivative::jet());
        let ds = run(GaugeElVariant::DaggerStable)?;
        let general = run(GaugeElVariant::General)?;
        let qj = run(GaugeElVariant::Qj)?;
        let d = max_dist(&ds, &general, CMatrix::dagger).max(max_dist(&ds, &qj, Clone::clone));
        ctx.upper(format!("variants-agree/{}", names[k]), "general, dagger-stable and Q_J forms of the gauge equation agree", d, 1e-9);
    }
    let cases: Vec<(&str, QuadraticCoeffs, usize)> = vec![
        ("identity-n3-c2", QuadraticCoeffs::identity(3)?, 2),
        ("random-n3-c2", real_symmetric_h(3, ctx.seed(9))?, 2),
        ("random-n4-c1", real_symmetric_h(4, ctx.seed(10))?, 1),
        ("minkowski-c2", QuadraticCoeffs::minkowski(), 2),
    ];
    for (i, (label, h, c)) in cases.into_iter().enumerate() {
        let n = h.n_dims();
        let a = GaugeConfig::random(LieAlgebraSpec::unitary(c)?, ctx.seed(30 + i as u64), n, 1, 0.6)?;
        let g = quadratic_gauge_lagrangian(h.clone(), c);
        let pts = ctx.points(ctx.seed(11), n, ctx.cfg.points);
        let generic = gauge_el_residual(&g, &a, &pts, GaugeElVariant::DaggerStable, OuterDerivative::jet())?;
        let closed = quadratic_closed_form_residual(&h, &a, &pts)?;
        ctx.upper(format!("quadratic-closed-form/{label}"), "closed-form quadratic equation equals the generic residual", max_dist(&generic, &closed, Clone::clone), 1e-9);
    }
    let alg = LieAlgebraSpec::unitary(2)?;
    let g = quadratic_gauge_lagrangian(real_symmetric_h(4, ctx.seed(12))?, 2);
    ctx.upper("quadratic-realness", "Im of the quadratic gauge density on algebra-valued samples", gauge_realness_defect(&g, &alg, ctx.seed(13), 40), 1e-12);
    ctx.upper("slot-dagger-relation", "conjugate gauge slots are daggers of the holomorphic ones", gauge_slot_dagger_defect(&g, &alg, ctx.seed(14), 40)?, 1e-8);
    Ok(())
}

fn real_scalar(seed: u64) -> Result<DerivedField> {
    Ok(random_real_scalar(seed, 4, 1, 0.6)?.into())
}

fn random_potentials(seed: u64) -> Result<MaxwellPotentials> {
    MaxwellPotentials::new(real_scalar(seed)?, [real_scalar(seed + 1)?, real_scalar(seed + 2)?, real_scalar(seed + 3)?])
}

fn maxwell(ctx: &mut Ctx) -> Result<()> {
    let g = minkowski_lagrangian(1);
    let pts = ctx.points(ctx.seed(1), 4, ctx.cfg.points);
    let mut potential_form: f64 = 0.0;
    let mut case_table: f64 = 0.0;
    for s in 0..2u64 {
        let pot = random_potentials(ctx.seed(10 * s + 1))?;
        let a = pot.to_gauge_config()?;
        let res = gauge_el_residual(&g, &a, &pts, GaugeElVariant::DaggerStable, OuterDerivative::jet())?;
        let want = maxwell_potential_residual(&pot, &pts)?;
        for ((r, (s0, v)), x) in res.iter().zip(&want).zip(&pts) {
            potential_form = potential_form.max((r[0].as_scalar() - s0).norm());
            for k in 0..3 {
                potential_form = potential_form.max((r[k + 1].as_scalar() + v[k]).norm());
            }
            for (k, (slot, expanded)) in maxwell_case_table(&a, x)?.into_iter().enumerate() {
                case_table = case_table.max((slot - expanded).norm()).max((slot + r[k].as_scalar()).norm());
            }
        }
    }
    ctx.upper("minkowski-equals-potential-form", "abelian Minkowski gauge equation equals the potential form", potential_form, 1e-10);
    ctx.upper("case-table-expansion", "per-component expansion matches the slot form", case_table, 1e-10);

    let wave = maxwell_plane_wave([1.0, -2.0, 0.5], ctx.seed(2))?;
    let residual = maxwell_potential_residual(&wave, &pts)?
        .iter()
        .map(|(s, v)| v.iter().fold(s.norm(), |m, z| m.max(z.norm())))
        .fold(0.0, f64::max);
    ctx.upper("wave-potential-residual", "plane wave solves the potential equations", residual, 1e-10);
    ctx.upper("wave-lorenz", "plane wave satisfies the Lorenz condition", lorenz_defect(&wave, &pts)?, 1e-10);
    let d = maxwell_defect(&eb_fields(&wave)?, &pts)?;
    ctx.upper("wave-homogeneous-equations", "Faraday law and div B = 0 for the wave fields", d.faraday.max(d.div_b), 1e-10);
    ctx.upper("wave-vacuum-ampere", "vacuum Ampère law for the wave fields", d.ampere, 1e-10);
    let res = gauge_el_residual(&g, &wave.to_gauge_config()?, &pts, GaugeElVariant::DaggerStable, OuterDerivative::jet())?;
    ctx.upper("wave-gauge-equation", "plane wave solves the Minkowski gauge equation", res.iter().flatten().map(CMatrix::max_abs).fold(0.0, f64::max), 1e-8);

    let pot = random_potentials(ctx.seed(11))?;
    let shifted = gauge_shift(&pot, &real_scalar(ctx.seed(40))?)?;
    let (e0, e1) = (eb_fields(&pot)?, eb_fields(&shifted)?);
    let mut shift: f64 = 0.0;
    for x in &pts {
        for k in 0..3 {
            shift = shift.max(e0.e[k].value(x)?.dist(&e1.e[k].value(x)?));
            shift = shift.max(e0.b[k].value(x)?.dist(&e1.b[k].value(x)?));
        }
    }
    ctx.upper("gauge-shift-keeps-fields", "E and B unchanged by a gauge shift", shift, 1e-11);
    Ok(())
}

fn dirac_u2(seed: u64) -> Result<ProtoLagrangian> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [sx, sy, _] = pauli();
    dirac(vec![CMatrix::identity(2), sx, sy], CMatrix::random_anti_hermitian(2, &mut rng), 2)
}

fn extensions(ctx: &mut Ctx) -> Result<()> {
    let alg = LieAlgebraSpec::unitary(2)?;
    let grp = LieGroupSpec::new(alg.clone())?;
    let [sx, sy, _] = pauli();
    let gammas = vec![CMatrix::identity(2), sx, sy];
    let lags = [dirac_u2(ctx.seed(1))?, dirac_self_interacting(gammas.clone(), 2)?];
    let count = ctx.cfg.instances_or(10) as u64;
    for l in &lags {
        let mut worst: f64 = 0.0;
        let mut plain = f64::INFINITY;
        for s in 0..count {
            let seed = ctx.seed(50 + 3 * s);
            let psi: DerivedField = random_smooth_field(seed, 3, MatrixShape::square(2), 1, 1.0, None)?.into();
            let a = GaugeConfig::random(alg.clone(), seed + 1, 3, 1, 0.7)?;
            let u = random_group_field(&grp, seed + 2, 3, 1, 0.6)?;
            let pts = ctx.points(seed, 3, ctx.cfg.points);
            worst = worst.max(local_invariance_defect(l, &grp, &psi, &a, &u, &pts)?);
            let before = static_extension(l, &psi, &a, &pts)?;
            let after = static_extension(l, &gauge_transform_matter(&psi, &u)?, &a, &pts)?;
            let moved = before.values.iter().zip(&after.values).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            plain = plain.min(moved);
        }
        ctx.upper(format!("local-invariance/{}", l.name), "|L(ψU, A⊣U) − L(ψ, A)| pointwise", worst, 1e-10);
        ctx.lower(format!("matter-only-transform/{}", l.name), "moving ψ without A changes the density", plain, 1e-4);
    }
    let probe = quartic_probe(CMatrix::diag_real(&[1.0, 2.0]), 2, 2);
    let psi: DerivedField = random_smooth_field(ctx.seed(3), 2, MatrixShape::square(2), 1, 1.0, None)?.into();
    let a = GaugeConfig::random(alg.clone(), ctx.seed(4), 2, 1, 0.5)?;
    let u = random_group_field(&grp, ctx.seed(5), 2, 1, 0.6)?;
    let d = local_invariance_defect_unchecked(&probe, &psi, &a, &u, &ctx.points(ctx.seed(6), 2, ctx.cfg.points))?;
    ctx.lower("non-invariant-control", "a density without global invariance is not locally invariant", d, 1e-4);

    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed(70));
    let m = CMatrix::random_anti_hermitian(2, &mut rng);
    let l = dirac(gammas.clone(), m.clone(), 2)?;
    let pts = ctx.points(ctx.seed(8), 3, ctx.cfg.points);
    let (mut matter, mut split, mut current) = (0.0f64, 0.0f64, 0.0f64);
    for (i, alg) in [LieAlgebraSpec::unitary(2)?, LieAlgebraSpec::by_j(CMatrix::diag_real(&[1.0, -1.0]))?].into_iter().enumerate() {
        let psi: DerivedField = random_smooth_field(ctx.seed(71 + i as u64), 3, MatrixShape::square(2), 1, 1.0, None)?.into();
        let a = GaugeConfig::random(alg, ctx.seed(80 + i as u64), 3, 1, 0.6)?;
        let res = extended_el_matter(&l, &psi, &a, &pts, OuterDerivative::jet())?;
        for (x, r) in pts.iter().zip(&res) {
            let p = psi.value(x)?;
            let mut want = &m * &p;
            for (mu, g) in gammas.iter().enumerate() {
                want += &(g * &covariant_right(&psi, &a, mu)?.value(x)?);
            }
            matter = matter.max(r.psi.d_psi_dag.dist(&want.scale(I)));
            if let (Some(sp), Some(qj)) = (&r.a_split, &r.a_qj) {
                for k in 0..3 {
                    let combo = &r.a_plus[k] + &r.a_minus[k].scale(I);
                    split = split.max(sp[k].dist(&combo)).max(qj[k].dagger().dist(&sp[k]));
                    current = current.max(qj[k].dist(&(&(&p.dagger() * &gammas[k]) * &p).scale(I)));
                }
            }
        }
    }
    ctx.upper("extended-matter-equation", "extended residual is the covariant Dirac operator", matter, 1e-8);
    ctx.upper("extended-gauge-forms", "split and Q_J forms of the gauge-side residual agree", split, 1e-10);
    ctx.upper("extended-gauge-current", "gauge-side residual of Dirac is iψ†Γψ", current, 1e-10);

    ctx.upper("matter-slot-condition", "slot condition that makes the dynamic equations consistent", matter_slot_condition_defect(&l, &alg, ctx.seed(1), 30)?, 1e-12);
    let g = quadratic_gauge_lagrangian(QuadraticCoeffs::identity(3)?, 2);
    let psi: DerivedField = random_smooth_field(ctx.seed(91), 3, MatrixShape::square(2), 1, 1.0, None)?.into();
    let a = GaugeConfig::random(alg.clone(), ctx.seed(92), 3, 1, 0.6)?;
    let pts = ctx.points(ctx.seed(9), 3, ctx.cfg.points);
    let dynr = dynamic_el(&l, &g, &psi, &a, &pts, OuterDerivative::jet())?;
    let free = gauge_el_residual(&g, &a, &pts, GaugeElVariant::DaggerStable, OuterDerivative::jet())?;
    let ext = extended_el_matter(&l, &psi, &a, &pts, OuterDerivative::jet())?;
    let mut dynamic: f64 = 0.0;
    for ((d, f), e) in dynr.iter().zip(&free).zip(&ext) {
        for k in 0..3 {
            let want = &e.a_plus[k] - &f[k].dagger().scale_re(2.0);
            dynamic = dynamic.max(d.gauge[k].dist(&want));
            if let Some(q) = &d.gauge_qj {
                dynamic = dynamic.max(q[k].dagger().dist(&d.gauge[k]));
            }
        }
    }
    ctx.upper("dynamic-gauge-equation", "coupled gauge equation is matter source minus free gauge residual", dynamic, 1e-10);
    Ok(())
}

fn stacked_gauge(ctx: &mut Ctx) -> Result<()> {
    let a = GaugeConfig::random(LieAlgebraSpec::unitary(2)?, ctx.seed(100), 3, 1, 0.6)?;
    let g = quadratic_gauge_lagrangian(real_symmetric_h(3, ctx.seed(5))?, 2);
    let stacked = stacked_lagrangian(&g);
    let src = StackedGaugeSource { a: &a };
    let mut slots: f64 = 0.0;
    for x in ctx.points(ctx.seed(10), 3, 3) {
        let pt = src.point(&x)?;
        slots = slots.max(stacked.slots(&pt)?.max_dist(&numeric_slots(&stacked, &pt)?));
    }
    ctx.upper("stacked-slots", "analytic slots of the stacked Lagrangian match numeric ones", slots, 1e-7);
    let d = stacked_consistency(&g, &a, &ctx.points(ctx.seed(11), 3, ctx.cfg.points))?;
    ctx.upper("stacked-equals-gauge-equation", "matter-field route through stacked potentials equals the gauge equation", d, 1e-8);
    Ok(())
}

fn noether(ctx: &mut Ctx, kind: FluxKind) -> Result<()> {
    let count = ctx.cfg.instances_or(10) as u64;
    for s in 1..=count {
        let seed = ctx.seed(s);
        let flux = offshell_flux(kind, seed)?;
        if s == 1 {
            for p in &flux.preconditions {
                ctx.upper(format!("precondition/{}", p.name), "symmetry precondition of the flux", p.measured, p.tolerance);
            }
        }
        let pts = ctx.points(seed, flux.n_dims, 4);
        let rep = offshell_identity_defect(&flux, &pts, ctx.cfg.h0, ctx.cfg.levels)?;
        let coarse = rep.levels[0].max_abs.max(1e-11 * (1.0 + rep.scale));
        ctx.converging(format!("offshell-identity/seed-{seed}"), "div V + pairing − source vanishes under refinement", &rep, coarse);
    }
    if let Some(flux) = onshell_flux(kind, ctx.seed(0))? {
        let pts = ctx.points(ctx.seed(12), flux.n_dims, ctx.cfg.points);
        let rep = divergence_defect(&flux, &pts, ctx.cfg.onshell_h0, ctx.cfg.levels)?;
        ctx.converging("onshell-divergence", "div V on an exact solution, relative to the flux scale", &relative(&rep), 1e-4);
        let control = onshell_control(kind, ctx.seed(0))?.expect("controls exist wherever solutions do");
        let rep = divergence_defect(&control, &pts, 0.05, 2)?;
        ctx.lower("offshell-divergence-control", "div V on random fields, relative to the flux scale", rep.finest() / rep.scale, 1e-2);
    }
    Ok(())
}

/// The report with every level divided by the flux scale.
fn relative(rep: &DivergenceReport) -> DivergenceReport {
    let mut r = rep.clone();
    for l in &mut r.levels {
        l.max_abs /= rep.scale;
    }
    r.scale = 1.0;
    r
}
