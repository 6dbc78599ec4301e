//! Matter proto-Lagrangians `L(P; Q; R_1..R_N; S_1..S_N; x)` with `P = ψ`,
//! `Q = ψ†`, `R_μ = ∂_μψ`, `S_μ = ∂_μψ†`, and their Euler–Lagrange residuals.
//!
//! Derivative slots are stored transposed: `[L^(o)]_{ji} = ∂L/∂P_{ij}`, so the
//! linearization reads `δL = Tr[L^(o) δP] + Tr[L^(o⋆) δQ] + Σ Tr[L^(μ) δR_μ] + Tr[L^(μ⋆) δS_μ]`.

use std::fmt;
use std::sync::Arc;

use crate::error::{dim_err, Error, Result};
use crate::fields::{DerivedField, Grid, Jet};
use crate::lie::{anti_hermitian_defect, hermitian_defect};
use crate::matcore::{CMatrix, C64, I, ONE, ZERO};
use serde::{Deserialize, Serialize};

/// Step of the central differences used for numeric slots.
pub const SLOT_EPS: f64 = 1e-5;
/// Step of the tangent-line difference used by [`OuterDerivative::Jet`].
pub const TANGENT_STEP: f64 = 1e-5;

/// Arguments of a matter proto-Lagrangian.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotPoint {
    pub p: CMatrix,
    pub q: CMatrix,
    pub r: Vec<CMatrix>,
    pub s: Vec<CMatrix>,
    pub x: Vec<f64>,
}

impl SlotPoint {
    /// `P = ψ`, `Q = ψ†`, `R_μ = ∂_μψ`, `S_μ = (∂_μψ)†` from a jet of order ≥ 1.
    pub fn from_jet(psi: &Jet, x: &[f64]) -> Self {
        SlotPoint {
            p: psi.value.clone(),
            q: psi.value.dagger(),
            r: psi.d1.clone(),
            s: psi.d1.iter().map(CMatrix::dagger).collect(),
            x: x.to_vec(),
        }
    }

    /// Derivative of [`Self::from_jet`] along axis `nu` (needs a second-order jet).
    pub fn tangent_from_jet(psi: &Jet, nu: usize) -> Self {
        let n = psi.n_dims();
        let r: Vec<CMatrix> = (0..n).map(|m| psi.d2(m, nu).clone()).collect();
        let mut x = vec![0.0; n];
        x[nu] = 1.0;
        SlotPoint {
            p: psi.d1[nu].clone(),
            q: psi.d1[nu].dagger(),
            s: r.iter().map(CMatrix::dagger).collect(),
            r,
            x,
        }
    }

    /// `self + t·dir`, including the point itself.
    pub fn along(&self, dir: &SlotPoint, t: f64) -> SlotPoint {
        let mv = |a: &CMatrix, b: &CMatrix| a + &b.scale_re(t);
        SlotPoint {
            p: mv(&self.p, &dir.p),
            q: mv(&self.q, &dir.q),
            r: self.r.iter().zip(&dir.r).map(|(a, b)| mv(a, b)).collect(),
            s: self.s.iter().zip(&dir.s).map(|(a, b)| mv(a, b)).collect(),
            x: self.x.iter().zip(&dir.x).map(|(a, b)| a + t * b).collect(),
        }
    }
}

/// All derivative slots of a proto-Lagrangian at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Slots {
    /// `L^(o)`, c×r.
    pub o: CMatrix,
    /// `L^(o⋆)`, r×c.
    pub o_star: CMatrix,
    /// `L^(μ)`, c×r.
    pub mu: Vec<CMatrix>,
    /// `L^(μ⋆)`, r×c.
    pub mu_star: Vec<CMatrix>,
    /// `L^(∇)`.
    pub grad: Vec<C64>,
}

impl Slots {
    fn combine(&self, o: &Slots, f: impl Fn(&CMatrix, &CMatrix) -> CMatrix, g: impl Fn(C64, C64) -> C64) -> Slots {
        Slots {
            o: f(&self.o, &o.o),
            o_star: f(&self.o_star, &o.o_star),
            mu: self.mu.iter().zip(&o.mu).map(|(a, b)| f(a, b)).collect(),
            mu_star: self.mu_star.iter().zip(&o.mu_star).map(|(a, b)| f(a, b)).collect(),
            grad: self.grad.iter().zip(&o.grad).map(|(&a, &b)| g(a, b)).collect(),
        }
    }

    /// `(self − o) / (2t)`.
    pub fn central(&self, o: &Slots, t: f64) -> Slots {
        let s = 0.5 / t;
        self.combine(o, |a, b| (a - b).scale_re(s), |a, b| (a - b) * s)
    }

    /// Largest Frobenius distance between matching slots.
    pub fn max_dist(&self, o: &Slots) -> f64 {
        let mut d = self.o.dist(&o.o).max(self.o_star.dist(&o.o_star));
        for (a, b) in self.mu.iter().zip(&o.mu).chain(self.mu_star.iter().zip(&o.mu_star)) {
            d = d.max(a.dist(b));
        }
        for (a, b) in self.grad.iter().zip(&o.grad) {
            d = d.max((a - b).norm());
        }
        d
    }
}

pub type ValueFn = Arc<dyn Fn(&SlotPoint) -> C64 + Send + Sync>;
pub type SlotFn = Arc<dyn Fn(&SlotPoint) -> Slots + Send + Sync>;
/// Quantities computed from the jet of ψ at a point.
pub type JetScalarFn = Arc<dyn Fn(&Jet, &[f64]) -> C64 + Send + Sync>;
pub type JetVectorFn = Arc<dyn Fn(&Jet, &[f64]) -> Vec<C64> + Send + Sync>;
pub type JetMatrixFn = Arc<dyn Fn(&Jet, &[f64]) -> CMatrix + Send + Sync>;

/// How the induced functional is known to be real.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RealnessMode {
    /// The density itself is real at every point.
    Pointwise,
    /// `L − L̄ = Σ ∂_μ w^μ` with a supplied slack `w`.
    Slack,
    /// Only the torus integral of `Im L` is checked.
    IntegralOnly,
}

/// A PDE operator the builtin's EL equation reproduces: `D_ψ† = factor · expected`.
#[derive(Clone)]
pub struct ExpectedEl {
    pub factor: C64,
    pub operator: JetMatrixFn,
}

#[derive(Clone)]
pub struct ProtoLagrangian {
    pub name: String,
    pub n_dims: usize,
    pub r: usize,
    pub c: usize,
    value: ValueFn,
    slots: Option<SlotFn>,
    pub origin_zero: bool,
    pub realness: RealnessMode,
    slack: Option<JetVectorFn>,
    density_override: Option<JetScalarFn>,
    expected_el: Option<ExpectedEl>,
}

impl fmt::Debug for ProtoLagrangian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ProtoLagrangian({}, N={}, r={}, c={})", self.name, self.n_dims, self.r, self.c)
    }
}

impl ProtoLagrangian {
    /// Lagrangian given by its value only; slots are numeric.
    pub fn new(
        name: impl Into<String>,
        n_dims: usize,
        r: usize,
        c: usize,
        value: impl Fn(&SlotPoint) -> C64 + Send + Sync + 'static,
    ) -> Self {
        ProtoLagrangian {
            name: name.into(),
            n_dims,
            r,
            c,
            value: Arc::new(value),
            slots: None,
            origin_zero: false,
            realness: RealnessMode::IntegralOnly,
            slack: None,
            density_override: None,
            expected_el: None,
        }
    }

    pub fn with_slots(mut self, slots: impl Fn(&SlotPoint) -> Slots + Send + Sync + 'static) -> Self {
        self.slots = Some(Arc::new(slots));
        self
    }

    pub fn with_origin_zero(mut self) -> Self {
        self.origin_zero = true;
        self
    }

    pub fn with_realness(mut self, mode: RealnessMode) -> Self {
        self.realness = mode;
        self
    }

    /// Slack `w` with `L − L̄ = Σ ∂_μ w^μ`, evaluated from the jet of ψ.
    pub fn with_slack(mut self, w: impl Fn(&Jet, &[f64]) -> Vec<C64> + Send + Sync + 'static) -> Self {
        self.slack = Some(Arc::new(w));
        self.realness = RealnessMode::Slack;
        self
    }

    /// Density used for realness checks instead of the proto-Lagrangian value
    /// (for densities written with second derivatives).
    pub fn with_density(mut self, d: impl Fn(&Jet, &[f64]) -> C64 + Send + Sync + 'static) -> Self {
        self.density_override = Some(Arc::new(d));
        self
    }

    pub fn with_expected_el(mut self, factor: C64, op: impl Fn(&Jet, &[f64]) -> CMatrix + Send + Sync + 'static) -> Self {
        self.expected_el = Some(ExpectedEl { factor, operator: Arc::new(op) });
        self
    }

    pub fn has_analytic_slots(&self) -> bool {
        self.slots.is_some()
    }

    pub fn expected_el(&self) -> Option<&ExpectedEl> {
        self.expected_el.as_ref()
    }

    pub fn slack(&self) -> Option<&JetVectorFn> {
        self.slack.as_ref()
    }

    pub fn value(&self, pt: &SlotPoint) -> C64 {
        (self.value)(pt)
    }

    /// Density for realness checks at a point (needs a second-order jet when overridden).
    pub fn density(&self, psi: &Jet, x: &[f64]) -> C64 {
        match &self.density_override {
            Some(d) => d(psi, x),
            None => self.value(&SlotPoint::from_jet(psi, x)),
        }
    }

    pub fn check_point(&self, pt: &SlotPoint) -> Result<()> {
        let n = self.n_dims;
        let ok = pt.p.rows() == self.r
            && pt.p.cols() == self.c
            && pt.q.rows() == self.c
            && pt.q.cols() == self.r
            && pt.r.len() == n
            && pt.s.len() == n
            && pt.x.len() == n;
        if !ok {
            return dim_err(format!("slot point does not match {self:?}"));
        }
        Ok(())
    }

    /// Analytic slots when available, numeric otherwise.
    pub fn slots(&self, pt: &SlotPoint) -> Result<Slots> {
        match &self.slots {
            Some(f) => {
                let s = f(pt);
                if !s.o.is_finite() || !s.o_star.is_finite() {
                    return Err(Error::Evaluation(format!("non-finite slots at x = {:?}", pt.x)));
                }
                Ok(s)
            }
            None => numeric_slots(self, pt),
        }
    }

    /// `max |L(0;0;0;0;x)|` over the given points.
    pub fn origin_defect(&self, points: &[Vec<f64>]) -> f64 {
        let zero_r = CMatrix::zeros(self.r, self.c);
        let zero_q = CMatrix::zeros(self.c, self.r);
        points
            .iter()
            .map(|x| {
                let pt = SlotPoint {
                    p: zero_r.clone(),
                    q: zero_q.clone(),
                    r: vec![zero_r.clone(); self.n_dims],
                    s: vec![zero_q.clone(); self.n_dims],
                    x: x.clone(),
                };
                self.value(&pt).norm()
            })
            .fold(0.0, f64::max)
    }
}

fn checked_value(l: &ProtoLagrangian, pt: &SlotPoint) -> Result<C64> {
    let v = l.value(pt);
    if !(v.re.is_finite() && v.im.is_finite()) {
        return Err(Error::Evaluation(format!("non-finite Lagrangian at x = {:?}", pt.x)));
    }
    Ok(v)
}

/// Transposed central-difference gradient of `L` with respect to one matrix argument.
fn numeric_matrix_slot(
    l: &ProtoLagrangian,
    pt: &SlotPoint,
    rows: usize,
    cols: usize,
    pick: impl Fn(&mut SlotPoint) -> &mut CMatrix,
) -> Result<CMatrix> {
    let mut out = CMatrix::zeros(cols, rows);
    let mut work = pt.clone();
    for i in 0..rows {
        for j in 0..cols {
            let orig = pick(&mut work)[(i, j)];
            pick(&mut work)[(i, j)] = orig + SLOT_EPS;
            let fp = checked_value(l, &work)?;
            pick(&mut work)[(i, j)] = orig - SLOT_EPS;
            let fm = checked_value(l, &work)?;
            pick(&mut work)[(i, j)] = orig;
            out[(j, i)] = (fp - fm) / (2.0 * SLOT_EPS);
        }
    }
    Ok(out)
}

/// All slots by central differences with step [`SLOT_EPS`]; `P` and `Q` are
/// perturbed independently.
pub fn numeric_slots(l: &ProtoLagrangian, pt: &SlotPoint) -> Result<Slots> {
    l.check_point(pt)?;
    let (r, c, n) = (l.r, l.c, l.n_dims);
    let o = numeric_matrix_slot(l, pt, r, c, |p| &mut p.p)?;
    let o_star = numeric_matrix_slot(l, pt, c, r, |p| &mut p.q)?;
    let mut mu = Vec::with_capacity(n);
    let mut mu_star = Vec::with_capacity(n);
    for m in 0..n {
        mu.push(numeric_matrix_slot(l, pt, r, c, |p| &mut p.r[m])?);
        mu_star.push(numeric_matrix_slot(l, pt, c, r, |p| &mut p.s[m])?);
    }
    let mut grad = Vec::with_capacity(n);
    let mut work = pt.clone();
    for m in 0..n {
        let x0 = work.x[m];
        work.x[m] = x0 + SLOT_EPS;
        let fp = checked_value(l, &work)?;
        work.x[m] = x0 - SLOT_EPS;
        let fm = checked_value(l, &work)?;
        work.x[m] = x0;
        grad.push((fp - fm) / (2.0 * SLOT_EPS));
    }
    Ok(Slots { o, o_star, mu, mu_star, grad })
}

/// Slots with respect to the real and imaginary parts of ψ and ∂_μψ,
/// `[∂L/∂ψ_ℜ]_{ji}` and `[∂L/∂ψ_ℑ]_{ji}`, by perturbing `(P, Q)` together.
#[derive(Debug, Clone)]
pub struct RealSlots {
    pub re: CMatrix,
    pub im: CMatrix,
    pub mu_re: Vec<CMatrix>,
    pub mu_im: Vec<CMatrix>,
}

fn real_pair_slot(
    l: &ProtoLagrangian,
    pt: &SlotPoint,
    which: Option<usize>,
    imag: bool,
) -> Result<CMatrix> {
    let (r, c) = (l.r, l.c);
    let step = if imag { I * SLOT_EPS } else { ONE * SLOT_EPS };
    let mut out = CMatrix::zeros(c, r);
    for i in 0..r {
        for j in 0..c {
            let eval = |sign: f64| {
                let mut w = pt.clone();
                let d = step * sign;
                match which {
                    None => {
                        w.p[(i, j)] += d;
                        w.q[(j, i)] += d.conj();
                    }
                    Some(m) => {
                        w.r[m][(i, j)] += d;
                        w.s[m][(j, i)] += d.conj();
                    }
                }
                checked_value(l, &w)
            };
            out[(j, i)] = (eval(1.0)? - eval(-1.0)?) / (2.0 * SLOT_EPS);
        }
    }
    Ok(out)
}

pub fn numeric_real_slots(l: &ProtoLagrangian, pt: &SlotPoint) -> Result<RealSlots> {
    l.check_point(pt)?;
    Ok(RealSlots {
        re: real_pair_slot(l, pt, None, false)?,
        im: real_pair_slot(l, pt, None, true)?,
        mu_re: (0..l.n_dims).map(|m| real_pair_slot(l, pt, Some(m), false)).collect::<Result<_>>()?,
        mu_im: (0..l.n_dims).map(|m| real_pair_slot(l, pt, Some(m), true)).collect::<Result<_>>()?,
    })
}

/// Produces slot points from fields; implemented for plain matter fields and
/// for gauge-extended ones.
pub trait SlotSource: Sync {
    fn n_dims(&self) -> usize;
    fn point(&self, x: &[f64]) -> Result<SlotPoint>;
    /// The slot point and its derivative along axis `nu`.
    fn point_with_tangent(&self, x: &[f64], nu: usize) -> Result<(SlotPoint, SlotPoint)>;
}

/// Slot points of a bare matter field ψ.
pub struct MatterSource<'a> {
    pub psi: &'a DerivedField,
}

impl SlotSource for MatterSource<'_> {
    fn n_dims(&self) -> usize {
        self.psi.n_dims()
    }

    fn point(&self, x: &[f64]) -> Result<SlotPoint> {
        Ok(SlotPoint::from_jet(&self.psi.eval(x, 1)?, x))
    }

    fn point_with_tangent(&self, x: &[f64], nu: usize) -> Result<(SlotPoint, SlotPoint)> {
        let j = self.psi.jet(x)?;
        Ok((SlotPoint::from_jet(&j, x), SlotPoint::tangent_from_jet(&j, nu)))
    }
}

/// How the outer `∂/∂x^μ` of slot fields is taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OuterDerivative {
    /// Central difference of the slot field with step `h`.
    Grid { h: f64 },
    /// Central difference of the slot function along the exact tangent of its arguments.
    Jet { t: f64 },
}

impl OuterDerivative {
    pub fn jet() -> Self {
        OuterDerivative::Jet { t: TANGENT_STEP }
    }
}

/// Derivative of every slot along axis `mu`, using `slots_at` to evaluate.
pub fn slot_derivative<S: SlotSource + ?Sized>(
    slots_at: &dyn Fn(&SlotPoint) -> Result<Slots>,
    src: &S,
    x: &[f64],
    mu: usize,
    backend: OuterDerivative,
) -> Result<Slots> {
    match backend {
        OuterDerivative::Grid { h } => {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[mu] += h;
            xm[mu] -= h;
            Ok(slots_at(&src.point(&xp)?)?.central(&slots_at(&src.point(&xm)?)?, h))
        }
        OuterDerivative::Jet { t } => {
            let (pt, dir) = src.point_with_tangent(x, mu)?;
            Ok(slots_at(&pt.along(&dir, t))?.central(&slots_at(&pt.along(&dir, -t))?, t))
        }
    }
}

/// `(D_ψ𝓛, D_ψ†𝓛)` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ElResidual {
    /// c×r.
    pub d_psi: CMatrix,
    /// r×c.
    pub d_psi_dag: CMatrix,
}

/// `D_ψ = L^(o) − Σ ∂_μ L^(μ)`, `D_ψ† = L^(o⋆) − Σ ∂_μ L^(μ⋆)` from any slot source.
pub fn el_residual_at<S: SlotSource + ?Sized>(
    l: &ProtoLagrangian,
    src: &S,
    x: &[f64],
    backend: OuterDerivative,
) -> Result<ElResidual> {
    let base = l.slots(&src.point(x)?)?;
    let mut d_psi = base.o;
    let mut d_psi_dag = base.o_star;
    let at = |p: &SlotPoint| l.slots(p);
    for mu in 0..src.n_dims() {
        let d = slot_derivative(&at, src, x, mu, backend)?;
        d_psi -= &d.mu[mu];
        d_psi_dag -= &d.mu_star[mu];
    }
    Ok(ElResidual { d_psi, d_psi_dag })
}

fn check_field(l: &ProtoLagrangian, psi: &DerivedField) -> Result<()> {
    if psi.shape().rows != l.r || psi.shape().cols != l.c || psi.n_dims() != l.n_dims {
        return dim_err(format!("ψ {} on R^{} does not fit {l:?}", psi.shape(), psi.n_dims()));
    }
    Ok(())
}

/// Holomorphic residual pair at each point.
pub fn el_residual_holomorphic(
    l: &ProtoLagrangian,
    psi: &DerivedField,
    points: &[Vec<f64>],
    backend: OuterDerivative,
) -> Result<Vec<ElResidual>> {
    check_field(l, psi)?;
    let src = MatterSource { psi };
    points.iter().map(|x| el_residual_at(l, &src, x, backend)).collect()
}

/// `(D_ψℜ𝓛, D_ψℑ𝓛)`, both c×r, computed from real perturbations of ψ.
#[derive(Debug, Clone, PartialEq)]
pub struct RealResidual {
    pub d_re: CMatrix,
    pub d_im: CMatrix,
}

pub fn el_residual_real(
    l: &ProtoLagrangian,
    psi: &DerivedField,
    points: &[Vec<f64>],
    backend: OuterDerivative,
) -> Result<Vec<RealResidual>> {
    check_field(l, psi)?;
    let src = MatterSource { psi };
    // pack the real slots into a `Slots` so the outer derivative machinery applies
    let pack = |p: &SlotPoint| -> Result<Slots> {
        let rs = numeric_real_slots(l, p)?;
        Ok(Slots { o: rs.re, o_star: rs.im, mu: rs.mu_re, mu_star: rs.mu_im, grad: vec![] })
    };
    points
        .iter()
        .map(|x| {
            let base = pack(&src.point(x)?)?;
            let mut d_re = base.o;
            let mut d_im = base.o_star;
            for mu in 0..l.n_dims {
                let d = slot_derivative(&pack, &src, x, mu, backend)?;
                d_re -= &d.mu[mu];
                d_im -= &d.mu_star[mu];
            }
            Ok(RealResidual { d_re, d_im })
        })
        .collect()
}

/// Max over points of `‖D_ψℜ − (D_ψ + [D_ψ†]ᵀ)‖` and `‖D_ψℑ − (iD_ψ − i[D_ψ†]ᵀ)‖`.
pub fn real_holomorphic_relation_defect(hol: &[ElResidual], real: &[RealResidual]) -> (f64, f64) {
    let mut d_re: f64 = 0.0;
    let mut d_im: f64 = 0.0;
    for (h, r) in hol.iter().zip(real) {
        let t = h.d_psi_dag.transpose();
        d_re = d_re.max(r.d_re.dist(&(&h.d_psi + &t)));
        d_im = d_im.max(r.d_im.dist(&(&h.d_psi - &t).scale(I)));
    }
    (d_re, d_im)
}

/// `max ‖[D_ψ†]† − D_ψ‖`; for pointwise-real densities also the slot relations
/// `L^(o⋆) = [L^(o)]†`, `L^(μ⋆) = [L^(μ)]†`.
pub fn conjugate_slot_relation_defect(
    l: &ProtoLagrangian,
    psi: &DerivedField,
    points: &[Vec<f64>],
    backend: OuterDerivative,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for res in el_residual_holomorphic(l, psi, points, backend)? {
        worst = worst.max(res.d_psi_dag.dagger().dist(&res.d_psi));
    }
    if l.realness == RealnessMode::Pointwise {
        let src = MatterSource { psi };
        for x in points {
            let s = l.slots(&src.point(x)?)?;
            worst = worst.max(s.o_star.dist(&s.o.dagger()));
            for (a, b) in s.mu.iter().zip(&s.mu_star) {
                worst = worst.max(b.dist(&a.dagger()));
            }
        }
    }
    Ok(worst)
}

/// Outcome of the realness checks on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RealnessReport {
    /// `|∫ Im L_ψ|` over the torus.
    pub integral_im: f64,
    /// `max |Im L_ψ|`.
    pub pointwise_im: f64,
    /// `max |L − L̄ − div_h w|` at `h` and `h/2`, with the observed order.
    pub slack: Option<(f64, f64, f64)>,
}

fn slack_residual(l: &ProtoLagrangian, psi: &DerivedField, grid: &Grid, w: &JetVectorFn) -> Result<f64> {
    let n = grid.n_dims;
    let rows = grid.try_map_points(|x| {
        let j = psi.jet(x)?;
        let dens = l.density(&j, x);
        let mut div = ZERO;
        for mu in 0..n {
            let h = grid.h(mu);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[mu] += h;
            xm[mu] -= h;
            let wp = w(&psi.eval(&xp, 2)?, &xp)[mu];
            let wm = w(&psi.eval(&xm, 2)?, &xm)[mu];
            div += (wp - wm) / (2.0 * h);
        }
        Ok((dens - dens.conj() - div).norm())
    })?;
    Ok(rows.into_iter().fold(0.0, f64::max))
}

/// Realness of the induced functional: torus integral of `Im L_ψ`, pointwise
/// imaginary part, and (when a slack is supplied) the divergence check.
pub fn realness_defect(l: &ProtoLagrangian, psi: &DerivedField, grid: &Grid) -> Result<RealnessReport> {
    check_field(l, psi)?;
    let vals = grid.try_map_points(|x| Ok(l.density(&psi.jet(x)?, x)))?;
    let ims: Vec<C64> = vals.iter().map(|v| C64::new(v.im, 0.0)).collect();
    let integral_im = grid.integrate(&ims).norm();
    let pointwise_im = vals.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    let slack = match &l.slack {
        Some(w) => {
            let coarse = slack_residual(l, psi, grid, w)?;
            let fine = slack_residual(l, psi, &grid.refined(), w)?;
            Some((coarse, fine, (coarse / fine).log2()))
        }
        None => None,
    };
    Ok(RealnessReport { integral_im, pointwise_im, slack })
}

fn require(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Validation(what.to_string()))
    }
}

const STRUCT_TOL: f64 = 1e-12;

/// `i Tr{ψ†Γ^μ∂_μψ + ψ†Mψ}`, requiring `Γ^μ = Γ^μ†` and `M = −M†`.
pub fn dirac(gammas: Vec<CMatrix>, m: CMatrix, c: usize) -> Result<ProtoLagrangian> {
    for (k, g) in gammas.iter().enumerate() {
        require(g.is_square() && hermitian_defect(g) <= STRUCT_TOL * (1.0 + g.max_abs()), &format!("Γ^{k} must be Hermitian"))?;
    }
    require(anti_hermitian_defect(&m) <= STRUCT_TOL * (1.0 + m.max_abs()), "M must be anti-Hermitian")?;
    dirac_unchecked(gammas, m, c)
}

/// [`dirac`] without the structural checks (for negative controls).
pub fn dirac_unchecked(gammas: Vec<CMatrix>, m: CMatrix, c: usize) -> Result<ProtoLagrangian> {
    let n = gammas.len();
    let r = m.rows();
    if gammas.iter().any(|g| g.shape() != m.shape()) || !m.is_square() || n == 0 {
        return dim_err("Γ^μ and M must be square of equal size");
    }
    let (g1, m1) = (gammas.clone(), m.clone());
    let value = move |p: &SlotPoint| {
        let mut t = p.q.trace_mul(&(&m1 * &p.p));
        for (g, rm) in g1.iter().zip(&p.r) {
            t += p.q.trace_mul(&(g * rm));
        }
        I * t
    };
    let (g2, m2) = (gammas.clone(), m.clone());
    let slots = move |p: &SlotPoint| {
        let mut o_star = &m2 * &p.p;
        for (g, rm) in g2.iter().zip(&p.r) {
            o_star += &(g * rm);
        }
        Slots {
            o: (&p.q * &m2).scale(I),
            o_star: o_star.scale(I),
            mu: g2.iter().map(|g| (&p.q * g).scale(I)).collect(),
            mu_star: vec![CMatrix::zeros(r, c); n],
            grad: vec![ZERO; n],
        }
    };
    let g3 = gammas.clone();
    let slack = move |j: &Jet, _: &[f64]| {
        let pd = j.value.dagger();
        g3.iter().map(|g| I * pd.trace_mul(&(g * &j.value))).collect()
    };
    let (g4, m4) = (gammas, m);
    let op = move |j: &Jet, _: &[f64]| {
        let mut e = &m4 * &j.value;
        for (g, d) in g4.iter().zip(&j.d1) {
            e += &(g * d);
        }
        e
    };
    Ok(ProtoLagrangian::new("dirac", n, r, c, value)
        .with_slots(slots)
        .with_origin_zero()
        .with_slack(slack)
        .with_expected_el(I, op))
}

/// `i Tr{ψ†KΓ^μ∂_μψJ⁻¹ + ψ†KΓ^μψA_μJ⁻¹ + ψ†KMψJ⁻¹}` with constant `K, Γ^μ, M, J`
/// and a potential `A_μ(x)` valued in `g_J`.
pub fn gauge_density(
    gammas: Vec<CMatrix>,
    m: CMatrix,
    k: CMatrix,
    j: CMatrix,
    a: Vec<DerivedField>,
    sample_points: &[Vec<f64>],
) -> Result<ProtoLagrangian> {
    let n = gammas.len();
    let r = m.rows();
    let c = j.rows();
    if a.len() != n || gammas.iter().any(|g| g.shape() != m.shape()) || k.shape() != m.shape() {
        return dim_err("K, Γ^μ, M must be r×r and there must be N potentials");
    }
    require(hermitian_defect(&j) <= STRUCT_TOL, "J must be Hermitian")?;
    let jinv = j.inverse()?;
    k.inverse()?;
    for (mu, g) in gammas.iter().enumerate() {
        let kg = &k * g;
        require(hermitian_defect(&kg) <= 1e-12 * (1.0 + kg.max_abs()), &format!("KΓ^{mu} must be Hermitian"))?;
    }
    let km = &k * &m;
    require((&km + &km.dagger()).max_abs() <= 1e-12 * (1.0 + km.max_abs()), "KM + M†K† must vanish")?;
    for x in sample_points {
        for (mu, am) in a.iter().enumerate() {
            let v = am.value(x)?;
            let d = (&(&v.dagger() * &j) + &(&j * &v)).fro_norm();
            require(d <= 1e-10, &format!("A_{mu}†J + JA_{mu} must vanish (defect {d:.2e})"))?;
        }
    }
    let kg: Vec<CMatrix> = gammas.iter().map(|g| &k * g).collect();
    let a_at = {
        let a = a.clone();
        move |x: &[f64]| -> Vec<CMatrix> { a.iter().map(|f| f.value(x).expect("potential evaluation")).collect() }
    };
    let a_at = Arc::new(a_at);
    let (kg1, km1, ji1, aa1) = (kg.clone(), km.clone(), jinv.clone(), a_at.clone());
    let value = move |p: &SlotPoint| {
        let av = aa1(&p.x);
        let mut inner = &km1 * &p.p;
        for ((g, rm), am) in kg1.iter().zip(&p.r).zip(&av) {
            inner += &(g * rm);
            inner += &(&(g * &p.p) * am);
        }
        I * p.q.trace_mul(&(&inner * &ji1))
    };
    let (kg2, km2, ji2, aa2) = (kg.clone(), km.clone(), jinv.clone(), a_at);
    let slots = move |p: &SlotPoint| {
        let av = aa2(&p.x);
        let jq = &ji2 * &p.q;
        let mut o = &jq * &km2;
        let mut o_star = &km2 * &p.p;
        for ((g, rm), am) in kg2.iter().zip(&p.r).zip(&av) {
            o += &(&(am * &jq) * g);
            o_star += &(g * rm);
            o_star += &(&(g * &p.p) * am);
        }
        Slots {
            o: o.scale(I),
            o_star: (&o_star * &ji2).scale(I),
            mu: kg2.iter().map(|g| (&jq * g).scale(I)).collect(),
            mu_star: vec![CMatrix::zeros(r, c); n],
            grad: vec![ZERO; n],
        }
    };
    let (kg3, ji3) = (kg.clone(), jinv.clone());
    // L − L̄ = i(T + T̄) with T = ∂_μ Tr{J⁻¹ψ†KΓ^μψ} real, hence the factor i
    let slack = move |jt: &Jet, _: &[f64]| {
        let pd = jt.value.dagger();
        kg3.iter().map(|g| I * ji3.trace_mul(&(&(&pd * g) * &jt.value))).collect()
    };
    let (g4, m4, aa4) = (gammas.clone(), m.clone(), a.clone());
    let (k4, ji4) = (k, jinv);
    let op = move |jt: &Jet, x: &[f64]| {
        let mut e = &m4 * &jt.value;
        for ((g, d), am) in g4.iter().zip(&jt.d1).zip(&aa4) {
            e += &(g * d);
            e += &(&(g * &jt.value) * &am.value(x).expect("potential evaluation"));
        }
        &(&k4 * &e) * &ji4
    };
    // the grad slot is left to numeric differentiation through the x-dependence of A
    let mut l = ProtoLagrangian::new("gauge-density", n, r, c, value)
        .with_origin_zero()
        .with_slack(slack)
        .with_expected_el(I, op);
    let numeric = l.clone();
    l = l.with_slots(move |p| {
        let mut s = slots(p);
        s.grad = numeric_slots(&numeric, p).map(|ns| ns.grad).unwrap_or_else(|_| vec![ZERO; n]);
        s
    });
    Ok(l)
}

/// `Tr{Σ_{μν} (∂_μψ)†Θ^{μν}∂_νψ + ψ†Rψ}` with `Θ^{μν}† = Θ^{νμ}` and `R = R†`.
pub fn second_order(theta: Vec<Vec<CMatrix>>, rmat: CMatrix, c: usize) -> Result<ProtoLagrangian> {
    let n = theta.len();
    let r = rmat.rows();
    if n == 0 || theta.iter().any(|row| row.len() != n || row.iter().any(|t| t.shape() != rmat.shape())) {
        return dim_err("Θ must be an N×N array of r×r matrices");
    }
    for a in 0..n {
        for b in 0..n {
            require(theta[a][b].dagger().dist(&theta[b][a]) <= STRUCT_TOL, &format!("Θ^{a}{b}† must equal Θ^{b}{a}"))?;
        }
    }
    require(hermitian_defect(&rmat) <= STRUCT_TOL, "R must be Hermitian")?;
    let (t1, r1) = (theta.clone(), rmat.clone());
    let value = move |p: &SlotPoint| {
        let mut v = p.q.trace_mul(&(&r1 * &p.p));
        for a in 0..n {
            for b in 0..n {
                v += p.s[a].trace_mul(&(&t1[a][b] * &p.r[b]));
            }
        }
        v
    };
    let (t2, r2) = (theta.clone(), rmat.clone());
    let slots = move |p: &SlotPoint| {
        let mu = (0..n)
            .map(|b| (0..n).fold(CMatrix::zeros(c, r), |acc, a| acc + &p.s[a] * &t2[a][b]))
            .collect();
        let mu_star = (0..n)
            .map(|a| (0..n).fold(CMatrix::zeros(r, c), |acc, b| acc + &t2[a][b] * &p.r[b]))
            .collect();
        Slots { o: &p.q * &r2, o_star: &r2 * &p.p, mu, mu_star, grad: vec![ZERO; n] }
    };
    let (t3, r3) = (theta, rmat);
    let op = move |j: &Jet, _: &[f64]| {
        let mut e = -(&r3 * &j.value);
        for a in 0..n {
            for b in 0..n {
                e += &(&t3[a][b] * j.d2(a, b));
            }
        }
        e
    };
    Ok(ProtoLagrangian::new("second-order", n, r, c, value)
        .with_slots(slots)
        .with_origin_zero()
        .with_realness(RealnessMode::Pointwise)
        .with_expected_el(-ONE, op))
}

/// Spin-½ Schrödinger density on `R^{1+d}` (axis 0 is time), `V = V†` constant.
///
/// The Euler–Lagrange machinery uses the first-order form
/// `Tr{iψ†ψ_t − Σ_j (∂_jψ)†∂_jψ + ψ†Vψ}`, which differs from
/// `Tr{ψ†(iψ_t + Δψ + Vψ)}` by `Σ_j ∂_j Tr{ψ†∂_jψ}`; the realness check
/// uses the second-order form and its slack.
pub fn schrodinger(v: CMatrix, n_dims: usize) -> Result<ProtoLagrangian> {
    if v.shape() != crate::matcore::MatrixShape::square(2) || n_dims < 2 {
        return dim_err("V must be 2×2 and there must be at least one spatial axis");
    }
    require(hermitian_defect(&v) <= STRUCT_TOL, "V must be Hermitian")?;
    let (r, c, n) = (2, 1, n_dims);
    let v1 = v.clone();
    let value = move |p: &SlotPoint| {
        let mut t = I * p.q.trace_mul(&p.r[0]) + p.q.trace_mul(&(&v1 * &p.p));
        for j in 1..n {
            t -= p.s[j].trace_mul(&p.r[j]);
        }
        t
    };
    let v2 = v.clone();
    let slots = move |p: &SlotPoint| {
        let mut mu = vec![p.q.scale(I)];
        let mut mu_star = vec![CMatrix::zeros(r, c)];
        for j in 1..n {
            mu.push(-&p.s[j]);
            mu_star.push(-&p.r[j]);
        }
        Slots {
            o: &p.q * &v2,
            o_star: p.r[0].scale(I) + &v2 * &p.p,
            mu,
            mu_star,
            grad: vec![ZERO; n],
        }
    };
    let v3 = v.clone();
    let op = move |j: &Jet, _: &[f64]| {
        let mut e = j.d1[0].scale(I) + &v3 * &j.value;
        for a in 1..n {
            e += j.d2(a, a);
        }
        e
    };
    let v4 = v;
    let density = move |j: &Jet, _: &[f64]| {
        let mut inner = j.d1[0].scale(I) + &v4 * &j.value;
        for a in 1..n {
            inner += j.d2(a, a);
        }
        j.value.dagger().trace_mul(&inner)
    };
    let slack = move |j: &Jet, _: &[f64]| {
        let pd = j.value.dagger();
        let mut w = vec![I * pd.trace_mul(&j.value)];
        for a in 1..n {
            w.push(pd.trace_mul(&j.d1[a]) - j.d1[a].dagger().trace_mul(&j.value));
        }
        w
    };
    Ok(ProtoLagrangian::new("schrodinger", n, r, c, value)
        .with_slots(slots)
        .with_origin_zero()
        .with_density(density)
        .with_slack(slack)
        .with_expected_el(ONE, op))
}

/// Density and slot fields of a Lagrangian evaluated along a slot source.
#[derive(Debug, Clone)]
pub struct DensityEvaluation {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<C64>,
    pub slots: Vec<Slots>,
}

pub fn evaluate_density<S: SlotSource + ?Sized>(
    l: &ProtoLagrangian,
    src: &S,
    points: &[Vec<f64>],
) -> Result<DensityEvaluation> {
    let mut values = Vec::with_capacity(points.len());
    let mut slots = Vec::with_capacity(points.len());
    for x in points {
        let pt = src.point(x)?;
        l.check_point(&pt)?;
        values.push(checked_value(l, &pt)?);
        slots.push(l.slots(&pt)?);
    }
    Ok(DensityEvaluation { points: points.to_vec(), values, slots })
}

/// The four worked matter Lagrangians.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinKind {
    Dirac,
    GaugeDensity,
    SecondOrder,
    Schrodinger,
}

impl BuiltinKind {
    pub const ALL: [BuiltinKind; 4] =
        [BuiltinKind::Dirac, BuiltinKind::GaugeDensity, BuiltinKind::SecondOrder, BuiltinKind::Schrodinger];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinKind::Dirac => "dirac",
            BuiltinKind::GaugeDensity => "gauge-density",
            BuiltinKind::SecondOrder => "second-order",
            BuiltinKind::Schrodinger => "schrodinger",
        }
    }
}

/// A builtin with seeded parameters, a random matter field and a grid to test on.
#[derive(Debug, Clone)]
pub struct BuiltinInstance {
    pub kind: BuiltinKind,
    pub lagrangian: ProtoLagrangian,
    pub psi: DerivedField,
    pub grid: Grid,
}

pub fn pauli() -> [CMatrix; 3] {
    [
        CMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]),
        CMatrix::new(2, 2, vec![ZERO, -I, I, ZERO]).expect("2×2"),
        CMatrix::diag_real(&[1.0, -1.0]),
    ]
}

/// Seeded reference parameters for each builtin.
pub fn reference_instance(kind: BuiltinKind, seed: u64) -> Result<BuiltinInstance> {
    use crate::fields::{random_smooth_field, GaugeConfig};
    use crate::lie::LieAlgebraSpec;
    use crate::matcore::MatrixShape;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xb117);
    let [sx, sy, sz] = pauli();
    let (l, n, shape) = match kind {
        BuiltinKind::Dirac => {
            let m = CMatrix::random_anti_hermitian(2, &mut rng);
            (dirac(vec![CMatrix::identity(2), sx, sy], m, 2)?, 3, MatrixShape::new(2, 2)?)
        }
        BuiltinKind::GaugeDensity => {
            let jm = CMatrix::diag_real(&[1.0, -1.0]);
            let g = LieAlgebraSpec::by_j(jm.clone())?;
            let a = GaugeConfig::random(g, seed ^ 0xa5, 2, 1, 0.5)?;
            let m = &sz * &CMatrix::random_anti_hermitian(2, &mut rng);
            let pts = crate::fields::random_points(seed, 2, 8, std::f64::consts::TAU);
            (gauge_density(vec![CMatrix::identity(2), &sz * &sx], m, sz, jm, a.components, &pts)?, 2, MatrixShape::new(2, 2)?)
        }
        BuiltinKind::SecondOrder => {
            let n = 3;
            let mut theta = vec![vec![CMatrix::zeros(2, 2); n]; n];
            for a in 0..n {
                theta[a][a] = &CMatrix::identity(2) + &CMatrix::random_hermitian(2, &mut rng).scale_re(0.3);
                for b in a + 1..n {
                    theta[a][b] = CMatrix::random(2, 2, &mut rng).scale_re(0.3);
                    theta[b][a] = theta[a][b].dagger();
                }
            }
            (second_order(theta, CMatrix::random_hermitian(2, &mut rng), 1)?, n, MatrixShape::new(2, 1)?)
        }
        BuiltinKind::Schrodinger => (schrodinger(CMatrix::random_hermitian(2, &mut rng), 3)?, 3, MatrixShape::new(2, 1)?),
    };
    let psi = random_smooth_field(seed, n, shape, 1, 1.0, None)?.into();
    let grid = Grid::torus(n, if n == 2 { 16 } else { 12 })?;
    Ok(BuiltinInstance { kind, lagrangian: l, psi, grid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{random_points, random_smooth_field};
    use crate::matcore::MatrixShape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pauli() -> Vec<CMatrix> {
        vec![
            CMatrix::identity(2),
            CMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]),
            CMatrix::from_rows(&[vec![ZERO, -I], vec![I, ZERO]]).unwrap(),
        ]
    }

    fn rand_point(l: &ProtoLagrangian, seed: u64) -> SlotPoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, c, n) = (l.r, l.c, l.n_dims);
        SlotPoint {
            p: CMatrix::random(r, c, &mut rng),
            q: CMatrix::random(c, r, &mut rng),
            r: (0..n).map(|_| CMatrix::random(r, c, &mut rng)).collect(),
            s: (0..n).map(|_| CMatrix::random(c, r, &mut rng)).collect(),
            x: vec![0.3; n],
        }
    }

    #[test]
    fn bilinear_numeric_slots() {
        let l = ProtoLagrangian::new("qp", 1, 2, 3, |p| p.q.trace_mul(&p.p));
        let pt = rand_point(&l, 1);
        let s = numeric_slots(&l, &pt).unwrap();
        assert!(s.o.dist(&pt.q) < 1e-9);
        assert!(s.o_star.dist(&pt.p) < 1e-9);
    }

    #[test]
    fn builtin_slots_match_numeric() {
        let ls = vec![
            dirac(pauli(), CMatrix::diag(&[I, I.scale(2.0)]), 2).unwrap(),
            second_order(
                vec![vec![CMatrix::identity(2), CMatrix::zeros(2, 2)], vec![CMatrix::zeros(2, 2), CMatrix::diag_real(&[2.0, 1.0])]],
                CMatrix::diag_real(&[1.0, -1.0]),
                1,
            )
            .unwrap(),
            schrodinger(CMatrix::from_real_rows(&[&[1.0, 0.5], &[0.5, -1.0]]), 3).unwrap(),
        ];
        for l in ls {
            let pt = rand_point(&l, 3);
            let d = l.slots(&pt).unwrap().max_dist(&numeric_slots(&l, &pt).unwrap());
            assert!(d < 1e-7, "{} slot mismatch {d:e}", l.name);
            assert_eq!(l.origin_defect(&[vec![0.1; l.n_dims]]), 0.0);
        }
    }

    #[test]
    fn linearization_is_second_order() {
        let l = dirac(pauli(), CMatrix::diag(&[I, -I]), 2).unwrap();
        let pt = rand_point(&l, 4);
        let dir = rand_point(&l, 5);
        let s = l.slots(&pt).unwrap();
        let lin = |e: f64| {
            let mut t = s.o.trace_mul(&dir.p) + s.o_star.trace_mul(&dir.q);
            for m in 0..3 {
                t += s.mu[m].trace_mul(&dir.r[m]) + s.mu_star[m].trace_mul(&dir.s[m]);
            }
            let moved = SlotPoint { x: pt.x.clone(), ..pt.along(&dir, e) };
            (l.value(&moved) - l.value(&pt) - t * e).norm()
        };
        // Dirac is quadratic in its arguments: the remainder is exactly quadratic in ε
        let order = (lin(1e-2) / lin(5e-3)).log2();
        assert!(order > 1.9, "order {order}");
    }

    #[test]
    fn validation_messages() {
        let err = dirac(pauli(), CMatrix::identity(2), 1).unwrap_err();
        assert!(err.to_string().contains("anti-Hermitian"));
        let bad = vec![vec![CMatrix::diag(&[I, ONE])]];
        assert!(second_order(bad, CMatrix::identity(2), 1).is_err());
    }

    #[test]
    fn dirac_residual_vanishes_for_zero_field() {
        let l = dirac(pauli(), CMatrix::diag(&[I, I]), 1).unwrap();
        let psi: DerivedField = crate::fields::SmoothField::zero(3, MatrixShape::new(2, 1).unwrap()).into();
        for res in el_residual_holomorphic(&l, &psi, &random_points(1, 3, 3, 6.0), OuterDerivative::jet()).unwrap() {
            assert_eq!(res.d_psi.max_abs(), 0.0);
            assert_eq!(res.d_psi_dag.max_abs(), 0.0);
        }
    }

    #[test]
    fn schrodinger_residual_is_the_pde() {
        let v = CMatrix::from_real_rows(&[&[0.3, 0.1], &[0.1, -0.2]]);
        let l = schrodinger(v, 3).unwrap();
        let psi: DerivedField = random_smooth_field(2, 3, MatrixShape::new(2, 1).unwrap(), 1, 1.0, None).unwrap().into();
        let pts = random_points(3, 3, 10, 6.0);
        let res = el_residual_holomorphic(&l, &psi, &pts, OuterDerivative::jet()).unwrap();
        let ex = l.expected_el().unwrap();
        for (x, r) in pts.iter().zip(res) {
            let want = (ex.operator)(&psi.jet(x).unwrap(), x).scale(ex.factor);
            assert!(r.d_psi_dag.dist(&want) < 1e-7);
        }
    }
}
