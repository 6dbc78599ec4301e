//! Free gauge-field proto-Lagrangians `G(P_μν; Q_θρ⋆; x)`, their Euler–Lagrange
//! equations, the quadratic and Minkowski families, Maxwell's equations in
//! potential form, and static/dynamic gauge extensions of matter Lagrangians.
//!
//! Pair slots use the ordering of [`pairs`]: `(0,1), (0,2), …, (N−2,N−1)`.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Error, Result};
use crate::fields::{
    field_strength, gauge_transform_gauge, gauge_transform_matter, pair_index, pairs, random_points, DerivedField,
    FieldStrength, GaugeConfig,
};
use crate::lagrangian::{
    el_residual_at, evaluate_density, slot_derivative, DensityEvaluation, ElResidual, OuterDerivative, ProtoLagrangian,
    SlotPoint, SlotSource, Slots,
};
use crate::lie::{hermitian_defect, q_j, AlgebraKind, LieAlgebraSpec, LieGroupSpec};
use crate::matcore::{CMatrix, MatrixShape, C64, I, ONE, ZERO};

/// Arguments of a gauge proto-Lagrangian: `P_μν` and `Q_θρ⋆` for ordered pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeSlotPoint {
    pub p: Vec<CMatrix>,
    pub q: Vec<CMatrix>,
    pub x: Vec<f64>,
}

impl GaugeSlotPoint {
    fn along(&self, dir: &GaugeSlotPoint, t: f64) -> GaugeSlotPoint {
        let mv = |a: &[CMatrix], b: &[CMatrix]| a.iter().zip(b).map(|(u, v)| u + &v.scale_re(t)).collect();
        GaugeSlotPoint {
            p: mv(&self.p, &dir.p),
            q: mv(&self.q, &dir.q),
            x: self.x.iter().zip(&dir.x).map(|(a, b)| a + t * b).collect(),
        }
    }
}

/// `G^(μν)`, `G^(θρ⋆)` (transposed, as for matter slots) and `G^(∇)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeSlots {
    pub p: Vec<CMatrix>,
    pub q: Vec<CMatrix>,
    pub grad: Vec<C64>,
}

impl GaugeSlots {
    fn central(&self, o: &GaugeSlots, t: f64) -> GaugeSlots {
        let s = 0.5 / t;
        let d = |a: &[CMatrix], b: &[CMatrix]| a.iter().zip(b).map(|(u, v)| (u - v).scale_re(s)).collect();
        GaugeSlots {
            p: d(&self.p, &o.p),
            q: d(&self.q, &o.q),
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| (a - b) * s).collect(),
        }
    }

    pub fn max_dist(&self, o: &GaugeSlots) -> f64 {
        self.p
            .iter()
            .zip(&o.p)
            .chain(self.q.iter().zip(&o.q))
            .map(|(a, b)| a.dist(b))
            .chain(self.grad.iter().zip(&o.grad).map(|(a, b)| (a - b).norm()))
            .fold(0.0, f64::max)
    }
}

pub type GaugeValueFn = Arc<dyn Fn(&GaugeSlotPoint) -> C64 + Send + Sync>;
pub type GaugeSlotFn = Arc<dyn Fn(&GaugeSlotPoint) -> GaugeSlots + Send + Sync>;

#[derive(Clone)]
pub struct GaugeProtoLagrangian {
    pub name: String,
    pub n_dims: usize,
    pub c: usize,
    value: GaugeValueFn,
    slots: Option<GaugeSlotFn>,
    quadratic: Option<QuadraticCoeffs>,
}

impl fmt::Debug for GaugeProtoLagrangian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GaugeProtoLagrangian({}, N={}, c={})", self.name, self.n_dims, self.c)
    }
}

impl GaugeProtoLagrangian {
    pub fn new(
        name: impl Into<String>,
        n_dims: usize,
        c: usize,
        value: impl Fn(&GaugeSlotPoint) -> C64 + Send + Sync + 'static,
    ) -> Self {
        GaugeProtoLagrangian { name: name.into(), n_dims, c, value: Arc::new(value), slots: None, quadratic: None }
    }

    pub fn with_slots(mut self, f: impl Fn(&GaugeSlotPoint) -> GaugeSlots + Send + Sync + 'static) -> Self {
        self.slots = Some(Arc::new(f));
        self
    }

    /// Same Lagrangian with its analytic slots dropped (numeric differentiation only).
    pub fn numeric_only(&self) -> Self {
        GaugeProtoLagrangian { slots: None, name: format!("{} (numeric)", self.name), ..self.clone() }
    }

    pub fn n_pairs(&self) -> usize {
        self.n_dims * (self.n_dims - 1) / 2
    }

    pub fn quadratic(&self) -> Option<&QuadraticCoeffs> {
        self.quadratic.as_ref()
    }

    pub fn value(&self, pt: &GaugeSlotPoint) -> C64 {
        (self.value)(pt)
    }

    pub fn slots(&self, pt: &GaugeSlotPoint) -> Result<GaugeSlots> {
        match &self.slots {
            Some(f) => Ok(f(pt)),
            None => numeric_gauge_slots(self, pt),
        }
    }
}

fn finite(v: C64, x: &[f64]) -> Result<C64> {
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation(format!("non-finite gauge Lagrangian at x = {x:?}")))
    }
}

/// Central differences with step [`crate::lagrangian::SLOT_EPS`] in every entry.
pub fn numeric_gauge_slots(g: &GaugeProtoLagrangian, pt: &GaugeSlotPoint) -> Result<GaugeSlots> {
    let eps = crate::lagrangian::SLOT_EPS;
    let c = g.c;
    let mut work = pt.clone();
    let diff = |cell: &dyn Fn(&mut GaugeSlotPoint) -> &mut C64, work: &mut GaugeSlotPoint| -> Result<C64> {
        let orig = *cell(work);
        *cell(work) = orig + eps;
        let fp = finite(g.value(work), &work.x)?;
        *cell(work) = orig - eps;
        let fm = finite(g.value(work), &work.x)?;
        *cell(work) = orig;
        Ok((fp - fm) / (2.0 * eps))
    };
    let np = g.n_pairs();
    let mut out_p = vec![CMatrix::zeros(c, c); np];
    let mut out_q = vec![CMatrix::zeros(c, c); np];
    for k in 0..np {
        for i in 0..c {
            for j in 0..c {
                out_p[k][(j, i)] = diff(&|w| &mut w.p[k][(i, j)], &mut work)?;
                out_q[k][(j, i)] = diff(&|w| &mut w.q[k][(i, j)], &mut work)?;
            }
        }
    }
    let mut grad = Vec::with_capacity(g.n_dims);
    for m in 0..g.n_dims {
        let x0 = work.x[m];
        work.x[m] = x0 + eps;
        let fp = finite(g.value(&work), &work.x)?;
        work.x[m] = x0 - eps;
        let fm = finite(g.value(&work), &work.x)?;
        work.x[m] = x0;
        grad.push((fp - fm) / (2.0 * eps));
    }
    Ok(GaugeSlots { p: out_p, q: out_q, grad })
}

pub(crate) fn sample_gauge_point(g: &GaugeProtoLagrangian, algebra: &LieAlgebraSpec, rng: &mut ChaCha8Rng) -> GaugeSlotPoint {
    use rand::Rng;
    let p: Vec<CMatrix> = (0..g.n_pairs()).map(|_| algebra.sample_with(rng)).collect();
    GaugeSlotPoint {
        q: p.iter().map(CMatrix::dagger).collect(),
        p,
        x: (0..g.n_dims).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect(),
    }
}

/// `max |Im G(P; P†; x)|` over sampled `P_μν ∈ g`.
pub fn gauge_realness_defect(g: &GaugeProtoLagrangian, algebra: &LieAlgebraSpec, seed: u64, count: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| g.value(&sample_gauge_point(g, algebra, &mut rng)).im.abs()).fold(0.0, f64::max)
}

/// `max ‖G^(θρ⋆) − (G^(θρ))†‖` over sampled `P_μν ∈ g`, `Q = P†`.
pub fn gauge_slot_dagger_defect(g: &GaugeProtoLagrangian, algebra: &LieAlgebraSpec, seed: u64, count: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let s = g.slots(&sample_gauge_point(g, algebra, &mut rng))?;
        for (a, b) in s.p.iter().zip(&s.q) {
            worst = worst.max(b.dist(&a.dagger()));
        }
    }
    Ok(worst)
}

/// Antisymmetric extension `Ĝ^(μν)` of pair slots to all index pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct HatSlots {
    n: usize,
    m: Vec<CMatrix>,
}

impl HatSlots {
    pub fn from_upper(n: usize, upper: &[CMatrix]) -> Self {
        let c = upper.first().map_or(1, |u| u.rows());
        let mut m = vec![CMatrix::zeros(c, c); n * n];
        for (k, (a, b)) in pairs(n).into_iter().enumerate() {
            m[a * n + b] = upper[k].clone();
            m[b * n + a] = -&upper[k];
        }
        HatSlots { n, m }
    }

    pub fn get(&self, mu: usize, nu: usize) -> &CMatrix {
        &self.m[mu * self.n + nu]
    }

    pub fn map(&self, f: impl Fn(&CMatrix) -> CMatrix) -> Self {
        HatSlots { n: self.n, m: self.m.iter().map(f).collect() }
    }
}

/// Coefficients `h_(μν)(θρ)` over ordered pairs with `conj(h_ab) = h_ba`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCoeffs {
    n: usize,
    h: Vec<Vec<C64>>,
}

impl QuadraticCoeffs {
    pub fn new(n: usize, h: Vec<Vec<C64>>) -> Result<Self> {
        let np = n * (n.max(1) - 1) / 2;
        if n < 2 || h.len() != np || h.iter().any(|row| row.len() != np) {
            return dim_err(format!("h must be {np}×{np} for N = {n}"));
        }
        for a in 0..np {
            for b in 0..np {
                if (h[a][b].conj() - h[b][a]).norm() > 1e-12 {
                    return Err(Error::Validation(format!("h violates conj(h_ab) = h_ba at pairs ({a}, {b})")));
                }
            }
        }
        Ok(QuadraticCoeffs { n, h })
    }

    /// `h_ab = δ_ab`: `G_A = Σ_{μ<ν} Tr[F_μν F_μν†]`.
    pub fn identity(n: usize) -> Result<Self> {
        let np = n * (n.max(1) - 1) / 2;
        Self::new(n, (0..np).map(|a| (0..np).map(|b| if a == b { ONE } else { ZERO }).collect()).collect())
    }

    /// `h_(μν)(αβ) = (−1)^{δ_μ0 + δ_ν0} δ_μα δ_νβ` on `R^4`, axis 0 being time.
    pub fn minkowski() -> Self {
        let ps = pairs(4);
        let h = ps
            .iter()
            .map(|&(m, v)| {
                ps.iter()
                    .map(|&(a, b)| {
                        if (m, v) == (a, b) {
                            ONE * minkowski_sign(m, v)
                        } else {
                            ZERO
                        }
                    })
                    .collect()
            })
            .collect();
        QuadraticCoeffs { n: 4, h }
    }

    pub fn n_dims(&self) -> usize {
        self.n
    }

    pub fn get(&self, a: usize, b: usize) -> C64 {
        self.h[a][b]
    }

    pub fn is_real(&self) -> bool {
        self.h.iter().flatten().all(|z| z.im == 0.0)
    }

    /// Antisymmetric extension `ĥ_(μν)(θρ) = sgn(ν−μ) sgn(ρ−θ) h_(sorted)(sorted)`.
    pub fn hat(&self, mu: usize, nu: usize, th: usize, rho: usize) -> C64 {
        if mu == nu || th == rho {
            return ZERO;
        }
        let sign = |a: usize, b: usize| if a < b { 1.0 } else { -1.0 };
        let a = pair_index(self.n, mu.min(nu), mu.max(nu));
        let b = pair_index(self.n, th.min(rho), th.max(rho));
        self.h[a][b] * (sign(mu, nu) * sign(th, rho))
    }
}

/// `(−1)^{δ_μ0 + δ_ν0}`.
pub fn minkowski_sign(mu: usize, nu: usize) -> f64 {
    if (mu == 0) ^ (nu == 0) {
        -1.0
    } else {
        1.0
    }
}

/// `G = Σ h_(μν)(θρ) Tr[P_μν Q_θρ⋆]` with analytic slots.
pub fn quadratic_gauge_lagrangian(h: QuadraticCoeffs, c: usize) -> GaugeProtoLagrangian {
    let n = h.n;
    let np = h.h.len();
    let h1 = h.clone();
    let value = move |pt: &GaugeSlotPoint| {
        let mut s = ZERO;
        for a in 0..np {
            for b in 0..np {
                if h1.h[a][b] != ZERO {
                    s += h1.h[a][b] * pt.p[a].trace_mul(&pt.q[b]);
                }
            }
        }
        s
    };
    let h2 = h.clone();
    let slots = move |pt: &GaugeSlotPoint| {
        let comb = |coef: &dyn Fn(usize, usize) -> C64, src: &[CMatrix], a: usize| {
            (0..np).fold(CMatrix::zeros(c, c), |acc, b| {
                let k = coef(a, b);
                if k == ZERO {
                    acc
                } else {
                    acc + src[b].scale(k)
                }
            })
        };
        GaugeSlots {
            p: (0..np).map(|a| comb(&|a, b| h2.h[a][b], &pt.q, a)).collect(),
            q: (0..np).map(|t| comb(&|t, b| h2.h[b][t], &pt.p, t)).collect(),
            grad: vec![ZERO; n],
        }
    };
    let mut g = GaugeProtoLagrangian::new("quadratic", n, c, value).with_slots(slots);
    g.quadratic = Some(h);
    g
}

/// The Minkowski quadratic Lagrangian on `R^4`.
pub fn minkowski_lagrangian(c: usize) -> GaugeProtoLagrangian {
    let mut g = quadratic_gauge_lagrangian(QuadraticCoeffs::minkowski(), c);
    g.name = "minkowski".into();
    g
}

/// Gauge slot points built from a potential: `P = F`, `Q = F†`.
pub struct GaugeSource<'a> {
    pub a: &'a GaugeConfig,
    pub f: FieldStrength,
}

impl<'a> GaugeSource<'a> {
    pub fn new(a: &'a GaugeConfig) -> Result<Self> {
        Ok(GaugeSource { a, f: field_strength(a)? })
    }

    pub fn point(&self, x: &[f64]) -> Result<GaugeSlotPoint> {
        let p = self.f.values(x)?;
        Ok(GaugeSlotPoint { q: p.iter().map(CMatrix::dagger).collect(), p, x: x.to_vec() })
    }

    pub fn point_with_tangent(&self, x: &[f64], mu: usize) -> Result<(GaugeSlotPoint, GaugeSlotPoint)> {
        let jets = self.f.upper().iter().map(|f| f.eval(x, 1)).collect::<Result<Vec<_>>>()?;
        let p: Vec<CMatrix> = jets.iter().map(|j| j.value.clone()).collect();
        let dp: Vec<CMatrix> = jets.iter().map(|j| j.d1[mu].clone()).collect();
        let mut dx = vec![0.0; x.len()];
        dx[mu] = 1.0;
        Ok((
            GaugeSlotPoint { q: p.iter().map(CMatrix::dagger).collect(), p, x: x.to_vec() },
            GaugeSlotPoint { q: dp.iter().map(CMatrix::dagger).collect(), p: dp, x: dx },
        ))
    }
}

/// Slots at `x` and their derivative along every axis.
pub(crate) fn gauge_slot_field(
    g: &GaugeProtoLagrangian,
    src: &GaugeSource<'_>,
    x: &[f64],
    backend: OuterDerivative,
) -> Result<(GaugeSlots, Vec<GaugeSlots>)> {
    let base = g.slots(&src.point(x)?)?;
    let mut derivs = Vec::with_capacity(g.n_dims);
    for mu in 0..g.n_dims {
        derivs.push(match backend {
            OuterDerivative::Grid { h } => {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[mu] += h;
                xm[mu] -= h;
                g.slots(&src.point(&xp)?)?.central(&g.slots(&src.point(&xm)?)?, h)
            }
            OuterDerivative::Jet { t } => {
                let (pt, dir) = src.point_with_tangent(x, mu)?;
                g.slots(&pt.along(&dir, t))?.central(&g.slots(&pt.along(&dir, -t))?, t)
            }
        });
    }
    Ok((base, derivs))
}

fn check_gauge_shapes(g: &GaugeProtoLagrangian, a: &GaugeConfig) -> Result<()> {
    if g.n_dims != a.n_dims() || g.c != a.c() {
        return dim_err(format!("{g:?} does not match potentials on R^{} with c = {}", a.n_dims(), a.c()));
    }
    Ok(())
}

/// Form of the free gauge-field Euler–Lagrange equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaugeElVariant {
    /// `Σ_μ Π((∇_μ([ΠĜ^(μκ⋆)]†))†)`, any algebra.
    General,
    /// `Σ_μ ∇_μ ΠĜ^(μκ)`, requires `g† = g`.
    DaggerStable,
    /// `Σ_μ ∇_μ Q_J Ĝ^(μκ)`, requires `g = g_J` with `J = J† = J⁻¹`.
    Qj,
}

impl GaugeElVariant {
    pub const ALL: [GaugeElVariant; 3] = [GaugeElVariant::General, GaugeElVariant::DaggerStable, GaugeElVariant::Qj];

    pub fn name(self) -> &'static str {
        match self {
            GaugeElVariant::General => "general",
            GaugeElVariant::DaggerStable => "dagger-stable",
            GaugeElVariant::Qj => "qj",
        }
    }
}

/// `J` when the algebra is `g_J` with `J = J† = J⁻¹`.
pub fn involutive_j(algebra: &LieAlgebraSpec) -> Option<CMatrix> {
    match algebra.kind() {
        AlgebraKind::Unitary | AlgebraKind::ByJ(_) => {
            let j = algebra.j();
            let c = j.rows();
            let ok = hermitian_defect(j) <= 1e-12 && (j * j).dist(&CMatrix::identity(c)) <= 1e-12;
            ok.then(|| j.clone())
        }
        AlgebraKind::FullAmbient => None,
    }
}

/// `Σ_μ ∇_μ ΠĜ^(μκ)` for every κ from slots and their derivatives.
pub(crate) fn dagger_stable_terms(alg: &LieAlgebraSpec, n: usize, a_vals: &[CMatrix], base: &GaugeSlots, d: &[GaugeSlots]) -> Vec<CMatrix> {
    let hat = HatSlots::from_upper(n, &base.p).map(|m| alg.project(m));
    let dhat: Vec<HatSlots> = d.iter().map(|s| HatSlots::from_upper(n, &s.p).map(|m| alg.project(m))).collect();
    (0..n)
        .map(|k| {
            (0..n).fold(CMatrix::zeros(alg.dim_c(), alg.dim_c()), |acc, mu| {
                acc + dhat[mu].get(mu, k) - a_vals[mu].comm(hat.get(mu, k))
            })
        })
        .collect()
}

/// κ-indexed residual fields of the free gauge Euler–Lagrange equations at each point.
pub fn gauge_el_residual(
    g: &GaugeProtoLagrangian,
    a: &GaugeConfig,
    points: &[Vec<f64>],
    variant: GaugeElVariant,
    backend: OuterDerivative,
) -> Result<Vec<Vec<CMatrix>>> {
    check_gauge_shapes(g, a)?;
    let alg = &a.algebra;
    let j = match variant {
        GaugeElVariant::General => None,
        GaugeElVariant::DaggerStable => {
            if !alg.dagger_stable() {
                return Err(Error::Validation(format!(
                    "the dagger-stable form needs g† = g (dagger residual {:.2e})",
                    alg.dagger_residual()
                )));
            }
            None
        }
        GaugeElVariant::Qj => Some(involutive_j(alg).ok_or_else(|| {
            Error::Validation("the Q_J form needs g = g_J with J = J† = J⁻¹".to_string())
        })?),
    };
    let n = g.n_dims;
    let c = g.c;
    let src = GaugeSource::new(a)?;
    points
        .iter()
        .map(|x| {
            let a_vals: Vec<CMatrix> = a.components.iter().map(|f| f.value(x)).collect::<Result<_>>()?;
            let (base, d) = gauge_slot_field(g, &src, x, backend)?;
            Ok(match variant {
                GaugeElVariant::DaggerStable => dagger_stable_terms(alg, n, &a_vals, &base, &d),
                GaugeElVariant::General => {
                    let y = HatSlots::from_upper(n, &base.q).map(|m| alg.project(m).dagger());
                    let dy: Vec<HatSlots> =
                        d.iter().map(|s| HatSlots::from_upper(n, &s.q).map(|m| alg.project(m).dagger())).collect();
                    (0..n)
                        .map(|k| {
                            (0..n).fold(CMatrix::zeros(c, c), |acc, mu| {
                                let nab = dy[mu].get(mu, k) - a_vals[mu].comm(y.get(mu, k));
                                acc + alg.project(&nab.dagger())
                            })
                        })
                        .collect()
                }
                GaugeElVariant::Qj => {
                    let jm = j.as_ref().expect("checked above");
                    let qj = |m: &CMatrix| q_j(jm, m).expect("square");
                    let hat = HatSlots::from_upper(n, &base.p).map(qj);
                    let dhat: Vec<HatSlots> = d.iter().map(|s| HatSlots::from_upper(n, &s.p).map(qj)).collect();
                    (0..n)
                        .map(|k| {
                            (0..n).fold(CMatrix::zeros(c, c), |acc, mu| {
                                acc + dhat[mu].get(mu, k) - a_vals[mu].comm(hat.get(mu, k))
                            })
                        })
                        .collect()
                }
            })
        })
        .collect()
}

/// Closed form `½ Σ_{αβ} Σ_μ ĥ_(μκ)(αβ) (∂_μF†_αβ − [A_μ, F†_αβ])` for real `h` and `g† = g`.
pub fn quadratic_closed_form_residual(h: &QuadraticCoeffs, a: &GaugeConfig, points: &[Vec<f64>]) -> Result<Vec<Vec<CMatrix>>> {
    if !h.is_real() {
        return Err(Error::Validation("the closed form needs real h".into()));
    }
    if !a.algebra.dagger_stable() {
        return Err(Error::Validation("the closed form needs g† = g".into()));
    }
    let n = h.n;
    if a.n_dims() != n {
        return dim_err("h and the potential live on different dimensions");
    }
    let c = a.c();
    let f = field_strength(a)?;
    points
        .iter()
        .map(|x| {
            let a_vals: Vec<CMatrix> = a.components.iter().map(|f| f.value(x)).collect::<Result<_>>()?;
            let jets = f.upper().iter().map(|u| u.eval(x, 1)).collect::<Result<Vec<_>>>()?;
            let fd = HatSlots::from_upper(n, &jets.iter().map(|j| j.value.dagger()).collect::<Vec<_>>());
            let dfd: Vec<HatSlots> = (0..n)
                .map(|mu| HatSlots::from_upper(n, &jets.iter().map(|j| j.d1[mu].dagger()).collect::<Vec<_>>()))
                .collect();
            Ok((0..n)
                .map(|k| {
                    let mut acc = CMatrix::zeros(c, c);
                    for mu in 0..n {
                        for al in 0..n {
                            for be in 0..n {
                                let coef = h.hat(mu, k, al, be);
                                if coef != ZERO {
                                    let t = dfd[mu].get(al, be) - a_vals[mu].comm(fd.get(al, be));
                                    acc += &t.scale(coef * 0.5);
                                }
                            }
                        }
                    }
                    acc
                })
                .collect())
        })
        .collect()
}

/// Scalar potentials `Φ` and `A⃗` on `R^4` (axis 0 is time), each a 1×1 field.
#[derive(Debug, Clone)]
pub struct MaxwellPotentials {
    pub phi: DerivedField,
    pub avec: [DerivedField; 3],
}

impl MaxwellPotentials {
    pub fn new(phi: DerivedField, avec: [DerivedField; 3]) -> Result<Self> {
        for f in std::iter::once(&phi).chain(avec.iter()) {
            if f.n_dims() != 4 || f.shape() != MatrixShape::square(1) {
                return dim_err("Maxwell potentials are scalar fields on R^4");
            }
        }
        Ok(MaxwellPotentials { phi, avec })
    }

    pub fn zero() -> Self {
        let z = DerivedField::zero(4, MatrixShape::square(1));
        MaxwellPotentials { phi: z.clone(), avec: [z.clone(), z.clone(), z] }
    }

    /// `A_0 = −Φ†`, `A_j = A⃗_j†` valued in `C = gl(1)`.
    pub fn to_gauge_config(&self) -> Result<GaugeConfig> {
        let mut comps = vec![self.phi.dagger()?.neg()?];
        for a in &self.avec {
            comps.push(a.dagger()?);
        }
        GaugeConfig::new(LieAlgebraSpec::full_ambient(1)?, comps)
    }

    pub fn from_gauge_config(a: &GaugeConfig) -> Result<Self> {
        if a.n_dims() != 4 || a.c() != 1 {
            return dim_err("Maxwell potentials need an abelian potential on R^4");
        }
        let d = |k: usize| a.components[k].dagger();
        Self::new(d(0)?.neg()?, [d(1)?, d(2)?, d(3)?])
    }
}

/// `(∂_t div A⃗ + ΔΦ, ∂²_t A⃗ − ΔA⃗ + grad(∂_tΦ + div A⃗))` with exact derivatives.
pub fn maxwell_potential_residual(pot: &MaxwellPotentials, points: &[Vec<f64>]) -> Result<Vec<(C64, [C64; 3])>> {
    points
        .iter()
        .map(|x| {
            let phi = pot.phi.jet(x)?;
            let av = pot.avec.iter().map(|f| f.jet(x)).collect::<Result<Vec<_>>>()?;
            let s = |m: &CMatrix| m.as_scalar();
            let lap = |j: &crate::fields::Jet| (1..4).map(|i| s(j.d2(i, i))).sum::<C64>();
            let dt_div: C64 = (1..4).map(|i| s(av[i - 1].d2(0, i))).sum();
            let r0 = dt_div + lap(&phi);
            let mut rv = [ZERO; 3];
            for (k, r) in rv.iter_mut().enumerate() {
                let gk = k + 1;
                let grad_lorenz = s(phi.d2(0, gk)) + (1..4).map(|i| s(av[i - 1].d2(gk, i))).sum::<C64>();
                *r = s(av[k].d2(0, 0)) - lap(&av[k]) + grad_lorenz;
            }
            Ok((r0, rv))
        })
        .collect()
}

/// `E = −∂_tA⃗ − grad Φ`, `B = rot A⃗` as exact derived fields.
#[derive(Debug, Clone)]
pub struct EbFields {
    pub e: [DerivedField; 3],
    pub b: [DerivedField; 3],
}

pub fn eb_fields(pot: &MaxwellPotentials) -> Result<EbFields> {
    let a = &pot.avec;
    let e = |k: usize| a[k].partial(0)?.neg()?.sub(&pot.phi.partial(k + 1)?);
    // rot: B_k = ∂_{k+1} A_{k+2} − ∂_{k+2} A_{k+1}, indices cyclic over space axes
    let b = |k: usize| {
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        a[j].partial(i + 1)?.sub(&a[i].partial(j + 1)?)
    };
    Ok(EbFields { e: [e(0)?, e(1)?, e(2)?], b: [b(0)?, b(1)?, b(2)?] })
}

fn curl_at(v: &[DerivedField; 3], x: &[f64]) -> Result<[C64; 3]> {
    let jets = v.iter().map(|f| f.eval(x, 1)).collect::<Result<Vec<_>>>()?;
    let d = |f: usize, axis: usize| jets[f].d1[axis + 1].as_scalar();
    Ok([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)])
}

/// Homogeneous Maxwell defects of `(E, B)` at the points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxwellDefect {
    /// `max |∂_tB + rot E|`.
    pub faraday: f64,
    /// `max |∂_tE − rot B|`.
    pub ampere: f64,
    /// `max |div B|`, zero for any potential.
    pub div_b: f64,
}

pub fn maxwell_defect(eb: &EbFields, points: &[Vec<f64>]) -> Result<MaxwellDefect> {
    let mut out = MaxwellDefect { faraday: 0.0, ampere: 0.0, div_b: 0.0 };
    for x in points {
        let rot_e = curl_at(&eb.e, x)?;
        let rot_b = curl_at(&eb.b, x)?;
        let mut div_b = ZERO;
        for k in 0..3 {
            let bj = eb.b[k].eval(x, 1)?;
            let ej = eb.e[k].eval(x, 1)?;
            out.faraday = out.faraday.max((bj.d1[0].as_scalar() + rot_e[k]).norm());
            out.ampere = out.ampere.max((ej.d1[0].as_scalar() - rot_b[k]).norm());
            div_b += bj.d1[k + 1].as_scalar();
        }
        out.div_b = out.div_b.max(div_b.norm());
    }
    Ok(out)
}

/// `max |∂_tΦ + div A⃗|`.
pub fn lorenz_defect(pot: &MaxwellPotentials, points: &[Vec<f64>]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in points {
        let mut v = pot.phi.eval(x, 1)?.d1[0].as_scalar();
        for (k, a) in pot.avec.iter().enumerate() {
            v += a.eval(x, 1)?.d1[k + 1].as_scalar();
        }
        worst = worst.max(v.norm());
    }
    Ok(worst)
}

/// `(Φ − ∂_tΛ, A⃗ + grad Λ)`, the shift that leaves `E = −∂_tA⃗ − grad Φ` and `B` unchanged.
pub fn gauge_shift(pot: &MaxwellPotentials, lambda: &DerivedField) -> Result<MaxwellPotentials> {
    let a = |k: usize| pot.avec[k].add(&lambda.partial(k + 1)?);
    MaxwellPotentials::new(pot.phi.sub(&lambda.partial(0)?)?, [a(0)?, a(1)?, a(2)?])
}

/// For each κ, the slot form `−Σ_μ ∂_μĜ^(μκ)` of the Minkowski equations (with
/// `Ĝ^(μν) = (−1)^{δ_μ0+δ_ν0} F†_μν`) and its expansion in second derivatives of `A†`.
pub fn maxwell_case_table(a: &GaugeConfig, x: &[f64]) -> Result<Vec<(C64, C64)>> {
    if a.n_dims() != 4 || a.c() != 1 {
        return dim_err("the case table is for abelian potentials on R^4");
    }
    let f = field_strength(a)?;
    let jets = f.upper().iter().map(|u| u.eval(x, 1)).collect::<Result<Vec<_>>>()?;
    let aj = a.components.iter().map(|c| c.jet(x)).collect::<Result<Vec<_>>>()?;
    // second derivatives of A_k†
    let dd = |k: usize, m: usize, v: usize| aj[k].d2(m, v).as_scalar().conj();
    let slot = |mu: usize, k: usize, axis: usize| -> C64 {
        if mu == k {
            return ZERO;
        }
        let (lo, hi) = (mu.min(k), mu.max(k));
        let s = if mu < k { 1.0 } else { -1.0 };
        jets[pair_index(4, lo, hi)].d1[axis].as_scalar().conj() * (minkowski_sign(mu, k) * s)
    };
    Ok((0..4)
        .map(|k| {
            let slot_form: C64 = -(0..4).map(|mu| slot(mu, k, mu)).sum::<C64>();
            let expanded = if k == 0 {
                -(1..4).map(|i| dd(i, 0, i)).sum::<C64>() + (1..4).map(|i| dd(0, i, i)).sum::<C64>()
            } else {
                let lorenz = -dd(0, k, 0) + (1..4).map(|i| dd(i, k, i)).sum::<C64>();
                dd(k, 0, 0) + lorenz - (1..4).map(|i| dd(k, i, i)).sum::<C64>()
            };
            (slot_form, expanded)
        })
        .collect())
}

/// Slot points of the statically extended density: `R_μ = ∂_μψ + ψA_μ`.
pub struct ExtendedSource<'a> {
    pub psi: &'a DerivedField,
    pub a: &'a GaugeConfig,
}

impl<'a> ExtendedSource<'a> {
    pub fn new(psi: &'a DerivedField, a: &'a GaugeConfig) -> Result<Self> {
        if psi.shape().cols != a.c() || psi.n_dims() != a.n_dims() {
            return dim_err(format!("ψ {} on R^{} does not fit potentials with c = {}", psi.shape(), psi.n_dims(), a.c()));
        }
        Ok(ExtendedSource { psi, a })
    }
}

impl SlotSource for ExtendedSource<'_> {
    fn n_dims(&self) -> usize {
        self.psi.n_dims()
    }

    fn point(&self, x: &[f64]) -> Result<SlotPoint> {
        let j = self.psi.eval(x, 1)?;
        let r: Vec<CMatrix> = self
            .a
            .components
            .iter()
            .enumerate()
            .map(|(m, am)| Ok(&j.d1[m] + &(&j.value * &am.value(x)?)))
            .collect::<Result<_>>()?;
        Ok(SlotPoint { p: j.value.clone(), q: j.value.dagger(), s: r.iter().map(CMatrix::dagger).collect(), r, x: x.to_vec() })
    }

    fn point_with_tangent(&self, x: &[f64], nu: usize) -> Result<(SlotPoint, SlotPoint)> {
        let j = self.psi.jet(x)?;
        let aj = self.a.jets(x, 1)?;
        let n = self.n_dims();
        let r: Vec<CMatrix> = (0..n).map(|m| &j.d1[m] + &(&j.value * &aj[m].value)).collect();
        let dr: Vec<CMatrix> = (0..n)
            .map(|m| j.d2(nu, m) + &(&j.d1[nu] * &aj[m].value) + &j.value * &aj[m].d1[nu])
            .collect();
        let mut dx = vec![0.0; n];
        dx[nu] = 1.0;
        Ok((
            SlotPoint { p: j.value.clone(), q: j.value.dagger(), s: r.iter().map(CMatrix::dagger).collect(), r, x: x.to_vec() },
            SlotPoint { p: j.d1[nu].clone(), q: j.d1[nu].dagger(), s: dr.iter().map(CMatrix::dagger).collect(), r: dr, x: dx },
        ))
    }
}

/// The statically extended density and its slots at the points.
pub fn static_extension(l: &ProtoLagrangian, psi: &DerivedField, a: &GaugeConfig, points: &[Vec<f64>]) -> Result<DensityEvaluation> {
    let src = ExtendedSource::new(psi, a)?;
    evaluate_density(l, &src, points)
}

/// Largest `|L(PU; U†P†; RU; U†R†; x) − L(P; P†; R; R†; x)|` over sampled constant
/// `U ∈ G` and random arguments, with the worst `U`.
pub fn global_invariance_defect(l: &ProtoLagrangian, group: &LieGroupSpec, seed: u64, count: usize) -> Result<(f64, CMatrix)> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r, c, n) = (l.r, l.c, l.n_dims);
    if group.algebra.dim_c() != c {
        return dim_err("group acts on the wrong number of columns");
    }
    let mut worst = (0.0, CMatrix::identity(c));
    for k in 0..count {
        let u = group.sample_group(seed.wrapping_add(k as u64), 1.0)?;
        let p = CMatrix::random(r, c, &mut rng);
        let rr: Vec<CMatrix> = (0..n).map(|_| CMatrix::random(r, c, &mut rng)).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        let mk = |p: &CMatrix, rr: &[CMatrix]| SlotPoint {
            p: p.clone(),
            q: p.dagger(),
            r: rr.to_vec(),
            s: rr.iter().map(CMatrix::dagger).collect(),
            x: x.clone(),
        };
        let moved: Vec<CMatrix> = rr.iter().map(|m| m * &u).collect();
        let d = (l.value(&mk(&(&p * &u), &moved)) - l.value(&mk(&p, &rr))).norm();
        if d > worst.0 {
            worst = (d, u);
        }
    }
    Ok(worst)
}

/// Tolerance of the sampled global invariance precondition.
pub const GLOBAL_INVARIANCE_TOL: f64 = 1e-9;

/// `max |L_{ψU, A⊣U} − L_{ψ,A}|`; refuses when the proto-Lagrangian is not globally invariant.
pub fn local_invariance_defect(
    l: &ProtoLagrangian,
    group: &LieGroupSpec,
    psi: &DerivedField,
    a: &GaugeConfig,
    u: &DerivedField,
    points: &[Vec<f64>],
) -> Result<f64> {
    let (d, worst_u) = global_invariance_defect(l, group, 0x91, 50)?;
    if d > GLOBAL_INVARIANCE_TOL {
        return Err(Error::Precondition(format!(
            "{} is not invariant under constant group elements: defect {d:.3e} at U = {:?}",
            l.name,
            worst_u.data()
        )));
    }
    local_invariance_defect_unchecked(l, psi, a, u, points)
}

/// [`local_invariance_defect`] without the global invariance precondition.
pub fn local_invariance_defect_unchecked(
    l: &ProtoLagrangian,
    psi: &DerivedField,
    a: &GaugeConfig,
    u: &DerivedField,
    points: &[Vec<f64>],
) -> Result<f64> {
    let before = static_extension(l, psi, a, points)?;
    let psi_u = gauge_transform_matter(psi, u)?;
    let a_u = gauge_transform_gauge(a, u)?;
    let after = static_extension(l, &psi_u, &a_u, points)?;
    Ok(before.values.iter().zip(&after.values).map(|(b, a)| (a - b).norm()).fold(0.0, f64::max))
}

/// `i Tr[ψ†(Σ Γ^μ R_μ + iψψ†ψ)]`: the Dirac form with `M` replaced by `iψψ†`.
pub fn dirac_self_interacting(gammas: Vec<CMatrix>, c: usize) -> Result<ProtoLagrangian> {
    let n = gammas.len();
    let r = gammas.first().map_or(0, CMatrix::rows);
    for (k, g) in gammas.iter().enumerate() {
        if g.shape() != MatrixShape::square(r) || hermitian_defect(g) > 1e-12 {
            return Err(Error::Validation(format!("Γ^{k} must be Hermitian r×r")));
        }
    }
    Ok(ProtoLagrangian::new("dirac-self-interacting", n, r, c, move |p: &SlotPoint| {
        let mut t = ZERO;
        for (g, rm) in gammas.iter().zip(&p.r) {
            t += p.q.trace_mul(&(g * rm));
        }
        let qp = &p.q * &p.p;
        I * t - qp.trace_mul(&qp)
    })
    .with_origin_zero())
}

/// `Tr[ψ†ψψ†ψD]`, invariant under constant unitary `U` only when `D` commutes with them.
pub fn quartic_probe(d: CMatrix, r: usize, n: usize) -> ProtoLagrangian {
    let c = d.rows();
    ProtoLagrangian::new("quartic-probe", n, r, c, move |p: &SlotPoint| {
        let qp = &p.q * &p.p;
        (&qp * &qp).trace_mul(&d)
    })
    .with_origin_zero()
}

/// Matter and gauge residuals of the statically extended Lagrangian.
#[derive(Debug, Clone)]
pub struct ExtendedResidual {
    /// `D_ψ = L^(o) − Σ(∂_μL^(μ) − A_μL^(μ))` and its conjugate partner.
    pub psi: ElResidual,
    /// `Π(ψ†[L^(κ)† + L^(κ⋆)])`.
    pub a_plus: Vec<CMatrix>,
    /// `Π(ψ†[L^(κ)† − L^(κ⋆)]/i)`.
    pub a_minus: Vec<CMatrix>,
    /// `ψ†L^(κ)† + (Π − Π⊥)ψ†L^(κ⋆)` when `Π(iZ) = iΠ⊥Z`.
    pub a_split: Option<Vec<CMatrix>>,
    /// `L^(κ)ψ − Jψ†L^(κ⋆)J` when `g = g_J`, `J = J† = J⁻¹`.
    pub a_qj: Option<Vec<CMatrix>>,
}

/// Whether `Π(iZ) = iΠ⊥Z` on sampled matrices.
pub fn imaginary_swaps_complement(alg: &LieAlgebraSpec) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1c);
    (0..5).all(|_| {
        let z = CMatrix::random(alg.dim_c(), alg.dim_c(), &mut rng);
        let perp = &z - &alg.project(&z);
        alg.project(&z.scale(I)).dist(&perp.scale(I)) <= 1e-10
    })
}

pub(crate) fn extended_point_residual(
    l: &ProtoLagrangian,
    src: &ExtendedSource<'_>,
    x: &[f64],
    backend: OuterDerivative,
) -> Result<(ElResidual, Slots, CMatrix)> {
    let pt = src.point(x)?;
    let base = l.slots(&pt)?;
    let a_vals: Vec<CMatrix> = src.a.components.iter().map(|f| f.value(x)).collect::<Result<_>>()?;
    let mut d_psi = base.o.clone();
    let mut d_psi_dag = base.o_star.clone();
    let at = |p: &SlotPoint| l.slots(p);
    for (mu, am) in a_vals.iter().enumerate() {
        let d = slot_derivative(&at, src, x, mu, backend)?;
        d_psi -= &(&d.mu[mu] - &(am * &base.mu[mu]));
        d_psi_dag -= &(&d.mu_star[mu] - &(&base.mu_star[mu] * &am.dagger()));
    }
    Ok((ElResidual { d_psi, d_psi_dag }, base, pt.p))
}

pub fn extended_el_matter(
    l: &ProtoLagrangian,
    psi: &DerivedField,
    a: &GaugeConfig,
    points: &[Vec<f64>],
    backend: OuterDerivative,
) -> Result<Vec<ExtendedResidual>> {
    let src = ExtendedSource::new(psi, a)?;
    let alg = &a.algebra;
    let split = imaginary_swaps_complement(alg);
    let j = involutive_j(alg);
    points
        .iter()
        .map(|x| {
            let (res, s, p) = extended_point_residual(l, &src, x, backend)?;
            let pd = p.dagger();
            let xs: Vec<CMatrix> = s.mu.iter().map(|m| &pd * &m.dagger()).collect();
            let ys: Vec<CMatrix> = s.mu_star.iter().map(|m| &pd * m).collect();
            let a_plus = xs.iter().zip(&ys).map(|(x, y)| alg.project(&(x + y))).collect();
            let a_minus = xs.iter().zip(&ys).map(|(x, y)| alg.project(&(x - y).scale(-I))).collect();
            let a_split = split.then(|| {
                xs.iter().zip(&ys).map(|(x, y)| x + &(&alg.project(y).scale_re(2.0) - y)).collect()
            });
            let a_qj = j.as_ref().map(|jm| {
                s.mu.iter().zip(&s.mu_star).map(|(lk, lks)| &(lk * &p) - &(&(&(jm * &pd) * lks) * jm)).collect()
            });
            Ok(ExtendedResidual { psi: res, a_plus, a_minus, a_split, a_qj })
        })
        .collect()
}

/// `max ‖Π(P†[L^(κ)† − L^(κ⋆)]/i)‖` over random `(P, R, x)`.
pub fn matter_slot_condition_defect(l: &ProtoLagrangian, alg: &LieAlgebraSpec, seed: u64, count: usize) -> Result<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r, c, n) = (l.r, l.c, l.n_dims);
    if alg.dim_c() != c {
        return dim_err("algebra and Lagrangian disagree on c");
    }
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let p = CMatrix::random(r, c, &mut rng);
        let rr: Vec<CMatrix> = (0..n).map(|_| CMatrix::random(r, c, &mut rng)).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        let pt = SlotPoint { q: p.dagger(), s: rr.iter().map(CMatrix::dagger).collect(), p, r: rr, x };
        let s = l.slots(&pt)?;
        let pd = pt.p.dagger();
        for (lk, lks) in s.mu.iter().zip(&s.mu_star) {
            let z = (&(&pd * &lk.dagger()) - &(&pd * lks)).scale(-I);
            worst = worst.max(alg.project(&z).fro_norm());
        }
    }
    Ok(worst)
}

/// Tolerance of the sampled condition on the matter slots required by [`dynamic_el`].
pub const MATTER_SLOT_CONDITION_TOL: f64 = 1e-9;

/// Residuals of the dynamically extended Lagrangian `L_{ψ,A} + G_A`.
#[derive(Debug, Clone)]
pub struct DynamicResidual {
    pub psi: ElResidual,
    /// `Π(ψ†[L^(κ)† + L^(κ⋆)]) − 2(Σ_μ ∂_μΠĜ^(μκ) − [A_μ, ΠĜ^(μκ)])†`.
    pub gauge: Vec<CMatrix>,
    /// `L^(κ)ψ − Jψ†L^(κ⋆)J − 2Σ_μ(∂_μΠĜ^(μκ) − [A_μ, ΠĜ^(μκ)])` for `g_J`, `J = J† = J⁻¹`.
    pub gauge_qj: Option<Vec<CMatrix>>,
}

pub fn dynamic_el(
    l: &ProtoLagrangian,
    g: &GaugeProtoLagrangian,
    psi: &DerivedField,
    a: &GaugeConfig,
    points: &[Vec<f64>],
    backend: OuterDerivative,
) -> Result<Vec<DynamicResidual>> {
    check_gauge_shapes(g, a)?;
    let alg = &a.algebra;
    if !alg.dagger_stable() {
        return Err(Error::Precondition("the dynamic extension needs g† = g".into()));
    }
    let slot_defect = matter_slot_condition_defect(l, alg, 0x5107, 20)?;
    if slot_defect > MATTER_SLOT_CONDITION_TOL {
        return Err(Error::Precondition(format!("{} violates the matter-slot condition: defect {slot_defect:.3e}", l.name)));
    }
    let matter = extended_el_matter(l, psi, a, points, backend)?;
    let src = GaugeSource::new(a)?;
    let n = g.n_dims;
    points
        .iter()
        .zip(matter)
        .map(|(x, m)| {
            let a_vals: Vec<CMatrix> = a.components.iter().map(|f| f.value(x)).collect::<Result<_>>()?;
            let (base, d) = gauge_slot_field(g, &src, x, backend)?;
            let terms = dagger_stable_terms(alg, n, &a_vals, &base, &d);
            let gauge = m.a_plus.iter().zip(&terms).map(|(p, t)| p - &t.dagger().scale_re(2.0)).collect();
            let gauge_qj = m.a_qj.as_ref().map(|q| q.iter().zip(&terms).map(|(p, t)| p - &t.scale_re(2.0)).collect());
            Ok(DynamicResidual { psi: m.psi, gauge, gauge_qj })
        })
        .collect()
}

/// Slot points of the stacked field `col[A_0, …, A_{N−1}]` (Nc × c).
pub struct StackedGaugeSource<'a> {
    pub a: &'a GaugeConfig,
}

impl SlotSource for StackedGaugeSource<'_> {
    fn n_dims(&self) -> usize {
        self.a.n_dims()
    }

    fn point(&self, x: &[f64]) -> Result<SlotPoint> {
        let jets = self.a.jets(x, 1)?;
        let n = jets.len();
        let p = CMatrix::vstack(&jets.iter().map(|j| j.value.clone()).collect::<Vec<_>>())?;
        let r: Vec<CMatrix> = (0..n)
            .map(|m| CMatrix::vstack(&jets.iter().map(|j| j.d1[m].clone()).collect::<Vec<_>>()))
            .collect::<Result<_>>()?;
        Ok(SlotPoint { q: p.dagger(), p, s: r.iter().map(CMatrix::dagger).collect(), r, x: x.to_vec() })
    }

    fn point_with_tangent(&self, x: &[f64], nu: usize) -> Result<(SlotPoint, SlotPoint)> {
        let jets = self.a.jets(x, 2)?;
        let n = jets.len();
        let stack = |f: &dyn Fn(&crate::fields::Jet) -> CMatrix| CMatrix::vstack(&jets.iter().map(f).collect::<Vec<_>>());
        let p = stack(&|j| j.value.clone())?;
        let dp = stack(&|j| j.d1[nu].clone())?;
        let r: Vec<CMatrix> = (0..n).map(|m| stack(&|j| j.d1[m].clone())).collect::<Result<_>>()?;
        let dr: Vec<CMatrix> = (0..n).map(|m| stack(&|j| j.d2(nu, m).clone())).collect::<Result<_>>()?;
        let mut dx = vec![0.0; n];
        dx[nu] = 1.0;
        Ok((
            SlotPoint { q: p.dagger(), p, s: r.iter().map(CMatrix::dagger).collect(), r, x: x.to_vec() },
            SlotPoint { q: dp.dagger(), p: dp, s: dr.iter().map(CMatrix::dagger).collect(), r: dr, x: dx },
        ))
    }
}

fn block(m: &CMatrix, k: usize, c: usize, rows: bool) -> CMatrix {
    if rows {
        m.block(k * c, 0, c, c)
    } else {
        m.block(0, k * c, c, c)
    }
}

/// `F_μν` and `F_μν†` rebuilt from stacked slot arguments.
fn stacked_gauge_point(n: usize, c: usize, pt: &SlotPoint) -> GaugeSlotPoint {
    let a = |k: usize| block(&pt.p, k, c, true);
    let ad = |k: usize| block(&pt.q, k, c, false);
    let da = |m: usize, k: usize| block(&pt.r[m], k, c, true);
    let dad = |m: usize, k: usize| block(&pt.s[m], k, c, false);
    let mut p = Vec::new();
    let mut q = Vec::new();
    for (m, v) in pairs(n) {
        p.push(&(&da(m, v) - &da(v, m)) - &a(m).comm(&a(v)));
        q.push(&(&dad(m, v) - &dad(v, m)) + &ad(m).comm(&ad(v)));
    }
    GaugeSlotPoint { p, q, x: pt.x.clone() }
}

/// The free gauge Lagrangian viewed as a matter Lagrangian of `col[A_μ]`, with
/// slots populated from the gauge slots (row/column blocks per κ).
pub fn stacked_lagrangian(g: &GaugeProtoLagrangian) -> ProtoLagrangian {
    let (n, c) = (g.n_dims, g.c);
    let g1 = g.clone();
    let value = move |pt: &SlotPoint| g1.value(&stacked_gauge_point(n, c, pt));
    let g2 = g.clone();
    let slots = move |pt: &SlotPoint| {
        let gp = stacked_gauge_point(n, c, pt);
        let s = g2.slots(&gp).expect("gauge slots");
        let hat = HatSlots::from_upper(n, &s.p);
        let hat_s = HatSlots::from_upper(n, &s.q);
        let a: Vec<CMatrix> = (0..n).map(|k| block(&pt.p, k, c, true)).collect();
        let ad: Vec<CMatrix> = (0..n).map(|k| block(&pt.q, k, c, false)).collect();
        let row = |f: &dyn Fn(usize) -> CMatrix| CMatrix::hstack(&(0..n).map(f).collect::<Vec<_>>()).expect("blocks");
        let col = |f: &dyn Fn(usize) -> CMatrix| CMatrix::vstack(&(0..n).map(f).collect::<Vec<_>>()).expect("blocks");
        Slots {
            o: row(&|k| (0..n).fold(CMatrix::zeros(c, c), |acc, m| acc - hat.get(m, k).comm(&a[m]))),
            o_star: col(&|k| (0..n).fold(CMatrix::zeros(c, c), |acc, m| acc + hat_s.get(m, k).comm(&ad[m]))),
            mu: (0..n).map(|m| row(&|k| hat.get(m, k).clone())).collect(),
            mu_star: (0..n).map(|m| col(&|k| hat_s.get(m, k).clone())).collect(),
            grad: s.grad,
        }
    };
    ProtoLagrangian::new(format!("{} (stacked)", g.name), n, n * c, c, value).with_slots(slots)
}

/// `max ‖−Π(block_κ D_ψ) − Σ_μ ∇_μΠĜ^(μκ)‖` between the stacked matter-field
/// route and the direct gauge residual (`g† = g`).
pub fn stacked_consistency(g: &GaugeProtoLagrangian, a: &GaugeConfig, points: &[Vec<f64>]) -> Result<f64> {
    check_gauge_shapes(g, a)?;
    let alg = &a.algebra;
    let direct = gauge_el_residual(g, a, points, GaugeElVariant::DaggerStable, OuterDerivative::jet())?;
    let stacked = stacked_lagrangian(g);
    let src = StackedGaugeSource { a };
    let c = g.c;
    let mut worst: f64 = 0.0;
    for (x, d) in points.iter().zip(direct) {
        let res = el_residual_at(&stacked, &src, x, OuterDerivative::jet())?;
        for (k, dk) in d.iter().enumerate() {
            let via = -alg.project(&block(&res.d_psi, k, c, false));
            worst = worst.max(via.dist(dk));
        }
    }
    Ok(worst)
}

/// Random points on the torus for the given dimension (helper for suites).
pub fn torus_points(seed: u64, n: usize, count: usize) -> Vec<Vec<f64>> {
    random_points(seed, n, count, std::f64::consts::TAU)
}
