//! Symmetry checks and Noether fluxes.
//!
//! Every flux carries its own pairing with the Euler–Lagrange residuals, so the
//! off-shell identity `div V + pairing = source` can be checked on arbitrary
//! fields. Divergences use pointwise central stencils, which also work for
//! fluxes with explicit `x` dependence.

pub mod reference;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::fields::{field_strength, random_points, DerivedField, FieldStrength, GaugeConfig, Grid};
use crate::gauge_lagrangian::{
    dagger_stable_terms, extended_point_residual, gauge_slot_field, matter_slot_condition_defect,
    sample_gauge_point, ExtendedSource, GaugeProtoLagrangian, GaugeSlotPoint, GaugeSource, HatSlots,
    MATTER_SLOT_CONDITION_TOL,
};
use crate::lagrangian::{el_residual_at, MatterSource, OuterDerivative, ProtoLagrangian, SlotPoint, SlotSource};
use crate::lie::{hermitian_defect, LieAlgebraSpec};
use crate::matcore::{mat_exp, CMatrix, C64, ZERO};

/// Step of the central difference in the flow parameter.
pub const SYMMETRY_STEP: f64 = 1e-5;
/// Largest sampled derivative accepted as a symmetry.
pub const SYMMETRY_TOL: f64 = 1e-7;
/// Tolerance for the algebraic preconditions (membership, Hermiticity, vanishing traces).
pub const ALGEBRAIC_TOL: f64 = 1e-10;
/// Tolerance for the field-dependent orthogonality condition of gauge dilations.
pub const DILATION_SOURCE_TOL: f64 = 1e-9;

const SAMPLES: usize = 20;
const SAMPLE_SEED: u64 = 0x4e6f;

/// A real-linear map on `r×c` matrices.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearMap {
    Zero,
    /// `X ↦ M X`.
    Left(CMatrix),
    /// `X ↦ X M`.
    Right(CMatrix),
    /// Images of the real basis `E_ij`, `iE_ij`, ordered by `(i, j)` row-major with the
    /// real unit first.
    RealBasis { rows: usize, cols: usize, images: Vec<CMatrix> },
}

impl LinearMap {
    /// Tabulates `f` on the real basis of `rows×cols` matrices.
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(&CMatrix) -> CMatrix) -> Self {
        let mut images = Vec::with_capacity(2 * rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                for unit in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                    let mut e = CMatrix::zeros(rows, cols);
                    e[(i, j)] = unit;
                    images.push(f(&e));
                }
            }
        }
        LinearMap::RealBasis { rows, cols, images }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            LinearMap::Zero => true,
            LinearMap::Left(m) | LinearMap::Right(m) => m.max_abs() == 0.0,
            LinearMap::RealBasis { images, .. } => images.iter().all(|m| m.max_abs() == 0.0),
        }
    }

    /// Whether the map sends `rows×cols` matrices to `rows×cols` matrices.
    pub fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        let ok = match self {
            LinearMap::Zero => true,
            LinearMap::Left(m) => m.rows() == rows && m.cols() == rows,
            LinearMap::Right(m) => m.rows() == cols && m.cols() == cols,
            LinearMap::RealBasis { rows: r, cols: c, images } => {
                *r == rows && *c == cols && images.len() == 2 * r * c && images.iter().all(|m| m.rows() == rows && m.cols() == cols)
            }
        };
        if ok {
            Ok(())
        } else {
            dim_err(format!("linear map does not act on {rows}×{cols} matrices"))
        }
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        match self {
            LinearMap::Zero => CMatrix::zeros(x.rows(), x.cols()),
            LinearMap::Left(m) => m * x,
            LinearMap::Right(m) => x * m,
            LinearMap::RealBasis { rows, cols, images } => {
                let mut out = CMatrix::zeros(*rows, *cols);
                for i in 0..*rows {
                    for j in 0..*cols {
                        let z = x[(i, j)];
                        let k = 2 * (i * cols + j);
                        out += &images[k].scale_re(z.re);
                        out += &images[k + 1].scale_re(z.im);
                    }
                }
                out
            }
        }
    }
}

/// How the one-parameter family is built from its generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flow {
    /// `e^{sK}`.
    Exponential,
    /// `I + sK`.
    Linear,
}

/// Generator data of a symmetry: `K` on ψ, the maps `L^λ_μ` on derivatives,
/// the linear part `A` and shift `a` of the coordinate flow, and an optional
/// algebra element `B` for gauge symmetries.
#[derive(Debug, Clone)]
pub struct SymmetryCandidate {
    pub k: LinearMap,
    /// `l[λ][μ]`; when absent, `L^λ_μ = δ^λ_μ K + A^λ_μ Id`.
    pub l: Option<Vec<Vec<LinearMap>>>,
    pub aext: Vec<Vec<f64>>,
    pub a: Vec<f64>,
    pub b: Option<CMatrix>,
}

impl SymmetryCandidate {
    pub fn internal(k: LinearMap, n: usize) -> Self {
        SymmetryCandidate { k, l: None, aext: vec![vec![0.0; n]; n], a: vec![0.0; n], b: None }
    }

    pub fn translation(k: LinearMap, a: Vec<f64>) -> Self {
        let n = a.len();
        SymmetryCandidate { k, l: None, aext: vec![vec![0.0; n]; n], a, b: None }
    }

    pub fn dilation(k: LinearMap, aext: Vec<Vec<f64>>) -> Self {
        let n = aext.len();
        SymmetryCandidate { k, l: None, aext, a: vec![0.0; n], b: None }
    }

    pub fn n_dims(&self) -> usize {
        self.a.len()
    }

    pub fn aext_trace(&self) -> f64 {
        (0..self.n_dims()).map(|i| self.aext[i][i]).sum()
    }

    fn check(&self, l: &ProtoLagrangian) -> Result<()> {
        let n = l.n_dims;
        if self.a.len() != n || self.aext.len() != n || self.aext.iter().any(|row| row.len() != n) {
            return dim_err(format!("candidate does not live on R^{n}"));
        }
        self.k.check_shape(l.r, l.c)?;
        if let Some(maps) = &self.l {
            if maps.len() != n || maps.iter().any(|row| row.len() != n) {
                return dim_err("L^λ_μ must be an N×N table");
            }
            for m in maps.iter().flatten() {
                m.check_shape(l.r, l.c)?;
            }
        }
        Ok(())
    }

    /// The generator applied to `(P, Q_0, …, Q_{N−1})`.
    fn generate(&self, state: &[CMatrix]) -> Vec<CMatrix> {
        let n = state.len() - 1;
        let mut out = Vec::with_capacity(n + 1);
        out.push(self.k.apply(&state[0]));
        for mu in 0..n {
            let q = match &self.l {
                Some(maps) => (0..n).fold(CMatrix::zeros(state[0].rows(), state[0].cols()), |acc, lam| {
                    acc + &maps[lam][mu].apply(&state[1 + lam])
                }),
                None => (0..n).fold(self.k.apply(&state[1 + mu]), |acc, lam| {
                    acc + &state[1 + lam].scale_re(self.aext[lam][mu])
                }),
            };
            out.push(q);
        }
        out
    }

    fn flow(&self, state: &[CMatrix], s: f64, kind: Flow) -> Vec<CMatrix> {
        match kind {
            Flow::Linear => {
                let g = self.generate(state);
                state.iter().zip(&g).map(|(a, b)| a + &b.scale_re(s)).collect()
            }
            Flow::Exponential => {
                let mut out = state.to_vec();
                let mut term = state.to_vec();
                for k in 1..80 {
                    term = self.generate(&term).iter().map(|m| m.scale_re(s / k as f64)).collect();
                    let size = term.iter().map(CMatrix::max_abs).fold(0.0, f64::max);
                    for (o, t) in out.iter_mut().zip(&term) {
                        *o += t;
                    }
                    if size < 1e-18 {
                        break;
                    }
                }
                out
            }
        }
    }

    fn moved_point(&self, x: &[f64], s: f64) -> Result<Vec<f64>> {
        let n = x.len();
        let gen = CMatrix::from_fn(n, n, |i, j| C64::new(s * self.aext[i][j], 0.0));
        let e = mat_exp(&gen)?;
        Ok((0..n).map(|i| (0..n).map(|j| e[(i, j)].re * x[j]).sum::<f64>() - s * self.a[i]).collect())
    }

    /// `Ax − a` at `x`.
    pub fn velocity(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n).map(|i| (0..n).map(|j| self.aext[i][j] * x[j]).sum::<f64>() - self.a[i]).collect()
    }
}

fn random_slot_point(l: &ProtoLagrangian, rng: &mut ChaCha8Rng) -> (CMatrix, Vec<CMatrix>, Vec<f64>) {
    let p = CMatrix::random(l.r, l.c, rng);
    let r = (0..l.n_dims).map(|_| CMatrix::random(l.r, l.c, rng)).collect();
    let x = (0..l.n_dims).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    (p, r, x)
}

fn slot_point(state: &[CMatrix], x: Vec<f64>) -> SlotPoint {
    let r: Vec<CMatrix> = state[1..].to_vec();
    SlotPoint { p: state[0].clone(), q: state[0].dagger(), s: r.iter().map(CMatrix::dagger).collect(), r, x }
}

/// `max |d/ds L(e^{sK}P; …; e^{s𝕃}Q; …; x)|` at `s = 0` over random arguments.
pub fn internal_symmetry_defect(l: &ProtoLagrangian, cand: &SymmetryCandidate, samples: usize, seed: u64, flow: Flow) -> Result<f64> {
    cand.check(l)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = SYMMETRY_STEP;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let (p, r, x) = random_slot_point(l, &mut rng);
        let mut state = vec![p];
        state.extend(r);
        let at = |s: f64| l.value(&slot_point(&cand.flow(&state, s, flow), x.clone()));
        worst = worst.max(((at(h) - at(-h)) / (2.0 * h)).norm());
    }
    Ok(worst)
}

/// Both measurements of an external symmetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExternalDefect {
    /// `max |d/ds L(…; e^{sA}x − sa)|` at `s = 0`.
    pub flow: f64,
    /// `max |L^(∇)·(Ax − a)|`.
    pub gradient: f64,
}

impl ExternalDefect {
    pub fn max(&self) -> f64 {
        self.flow.max(self.gradient)
    }
}

pub fn external_symmetry_defect(l: &ProtoLagrangian, cand: &SymmetryCandidate, samples: usize, seed: u64) -> Result<ExternalDefect> {
    cand.check(l)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = SYMMETRY_STEP;
    let mut out = ExternalDefect { flow: 0.0, gradient: 0.0 };
    for _ in 0..samples {
        let (p, r, x) = random_slot_point(l, &mut rng);
        let mut state = vec![p];
        state.extend(r);
        let fp = l.value(&slot_point(&state, cand.moved_point(&x, h)?));
        let fm = l.value(&slot_point(&state, cand.moved_point(&x, -h)?));
        out.flow = out.flow.max(((fp - fm) / (2.0 * h)).norm());
        let grad = l.slots(&slot_point(&state, x.clone()))?.grad;
        let v = cand.velocity(&x);
        out.gradient = out.gradient.max(grad.iter().zip(&v).map(|(g, v)| g * *v).sum::<C64>().norm());
    }
    Ok(out)
}

/// `max |d/ds G(e^{sB}Pe^{−sB}; …)|` at `s = 0` over sampled `P_μν ∈ g`.
pub fn conjugation_invariance_defect(g: &GaugeProtoLagrangian, alg: &LieAlgebraSpec, b: &CMatrix, samples: usize, seed: u64) -> Result<f64> {
    if b.rows() != g.c || b.cols() != g.c {
        return dim_err("B must be c×c");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = SYMMETRY_STEP;
    let (up, dn) = (mat_exp(&b.scale_re(h))?, mat_exp(&b.scale_re(-h))?);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let pt = sample_gauge_point(g, alg, &mut rng);
        let conj = |u: &CMatrix, v: &CMatrix| {
            let p: Vec<CMatrix> = pt.p.iter().map(|m| &(u * m) * v).collect();
            GaugeSlotPoint { q: p.iter().map(CMatrix::dagger).collect(), p, x: pt.x.clone() }
        };
        let d = (g.value(&conj(&up, &dn)) - g.value(&conj(&dn, &up))) / (2.0 * h);
        worst = worst.max(d.norm());
    }
    Ok(worst)
}

/// `max |G^(∇)·v(x)|` over sampled `P_μν ∈ g` for the coordinate field `v(x) = a + Sx`.
fn gauge_gradient_defect(g: &GaugeProtoLagrangian, alg: &LieAlgebraSpec, a: &[f64], s: &[Vec<f64>]) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..SAMPLES {
        let pt = sample_gauge_point(g, alg, &mut rng);
        let grad = g.slots(&pt)?.grad;
        let v = affine_field(a, s, &pt.x);
        worst = worst.max(grad.iter().zip(&v).map(|(g, v)| g * *v).sum::<C64>().norm());
    }
    Ok(worst)
}

fn affine_field(a: &[f64], s: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    (0..x.len()).map(|i| a[i] + (0..x.len()).map(|j| s[i][j] * x[j]).sum::<f64>()).collect()
}

/// The eight kinds of conservation law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluxKind {
    /// `Tr(J⁻¹ψ†KΓ^μψ)` of the gauged first-order system.
    Current,
    Translation,
    Dilation,
    Internal,
    GaugeTranslation,
    GaugeDilation,
    GaugeInternal,
    /// Matter and gauge field under a common right multiplication.
    Combined,
}

impl FluxKind {
    pub const ALL: [FluxKind; 8] = [
        FluxKind::Current,
        FluxKind::Translation,
        FluxKind::Dilation,
        FluxKind::Internal,
        FluxKind::GaugeTranslation,
        FluxKind::GaugeDilation,
        FluxKind::GaugeInternal,
        FluxKind::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FluxKind::Current => "current",
            FluxKind::Translation => "translation",
            FluxKind::Dilation => "dilation",
            FluxKind::Internal => "internal",
            FluxKind::GaugeTranslation => "gauge-translation",
            FluxKind::GaugeDilation => "gauge-dilation",
            FluxKind::GaugeInternal => "gauge-internal",
            FluxKind::Combined => "combined",
        }
    }
}

impl fmt::Display for FluxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FluxKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FluxKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown flux kind '{s}'")))
    }
}

/// One measured precondition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreconditionCheck {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
}

impl PreconditionCheck {
    pub fn new(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        PreconditionCheck { name: name.into(), measured, tolerance }
    }

    pub fn holds(&self) -> bool {
        self.measured <= self.tolerance
    }
}

fn require(kind: FluxKind, checks: &[PreconditionCheck]) -> Result<()> {
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.holds())
        .map(|c| format!("{} (measured {:.3e} > {:.1e})", c.name, c.measured, c.tolerance))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("{kind} flux: {}", failed.join("; "))))
    }
}

fn validate(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Validation(msg()))
    }
}

type PointFn<T> = Arc<dyn Fn(&[f64]) -> Result<T> + Send + Sync>;

/// A flux `V^μ(x)` with its residual pairing and the preconditions it was built under.
#[derive(Clone)]
pub struct FluxField {
    pub kind: FluxKind,
    pub n_dims: usize,
    pub preconditions: Vec<PreconditionCheck>,
    /// Names of the Lagrangians and symmetry data used.
    pub provenance: String,
    flux: PointFn<Vec<C64>>,
    pairing: PointFn<C64>,
    source: Option<PointFn<C64>>,
}

impl fmt::Debug for FluxField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FluxField({}, N={}, {})", self.kind, self.n_dims, self.provenance)
    }
}

impl FluxField {
    /// `V^μ(x)` for every μ.
    pub fn at(&self, x: &[f64]) -> Result<Vec<C64>> {
        if x.len() != self.n_dims {
            return dim_err(format!("point in R^{} for a flux on R^{}", x.len(), self.n_dims));
        }
        (self.flux)(x)
    }

    /// The residual pairing at `x`; `div V + pairing = source` for every field.
    pub fn pairing_at(&self, x: &[f64]) -> Result<C64> {
        (self.pairing)(x)
    }

    /// Right-hand side of the off-shell identity; zero except for gauge dilations.
    pub fn source_at(&self, x: &[f64]) -> Result<C64> {
        match &self.source {
            Some(f) => f(x),
            None => Ok(ZERO),
        }
    }

    pub fn sample(&self, grid: &Grid) -> Result<NoetherFlux> {
        if grid.n_dims != self.n_dims {
            return dim_err("grid dimension differs from flux dimension");
        }
        let vals = grid.try_map_points(|x| self.at(x))?;
        let components = (0..self.n_dims).map(|mu| vals.iter().map(|v| v[mu]).collect()).collect();
        Ok(NoetherFlux {
            kind: self.kind,
            provenance: self.provenance.clone(),
            preconditions: self.preconditions.clone(),
            grid: grid.clone(),
            components,
        })
    }
}

/// Flux components sampled on a grid.
#[derive(Debug, Clone)]
pub struct NoetherFlux {
    pub kind: FluxKind,
    pub provenance: String,
    pub preconditions: Vec<PreconditionCheck>,
    pub grid: Grid,
    /// `components[μ][point]`.
    pub components: Vec<Vec<C64>>,
}

impl NoetherFlux {
    pub fn max_abs(&self) -> f64 {
        self.components.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

// ---------------------------------------------------------------- matter fluxes

fn check_psi(l: &ProtoLagrangian, psi: &DerivedField) -> Result<()> {
    if psi.shape().rows != l.r || psi.shape().cols != l.c || psi.n_dims() != l.n_dims {
        return dim_err(format!("ψ {} on R^{} does not fit {l:?}", psi.shape(), psi.n_dims()));
    }
    Ok(())
}

/// Translation, dilation and internal fluxes share one formula with the flow
/// direction `δψ = Kψ + (Ax − a)·∇ψ`.
fn affine_matter_flux(kind: FluxKind, l: &ProtoLagrangian, psi: &DerivedField, cand: &SymmetryCandidate) -> Result<FluxField> {
    check_psi(l, psi)?;
    cand.check(l)?;
    let mut checks = vec![PreconditionCheck::new(
        "internal symmetry",
        internal_symmetry_defect(l, cand, SAMPLES, SAMPLE_SEED, Flow::Exponential)?,
        SYMMETRY_TOL,
    )];
    if kind != FluxKind::Internal {
        checks.push(PreconditionCheck::new(
            "external symmetry",
            external_symmetry_defect(l, cand, SAMPLES, SAMPLE_SEED)?.max(),
            SYMMETRY_TOL,
        ));
    }
    if kind == FluxKind::Dilation {
        validate(cand.aext_trace().abs() <= ALGEBRAIC_TOL, || {
            format!("dilation generator must be trace-free (trace {:.3e})", cand.aext_trace())
        })?;
    }
    require(kind, &checks)?;
    let delta = {
        let cand = cand.clone();
        move |jet: &crate::fields::Jet, x: &[f64]| {
            let v = cand.velocity(x);
            v.iter().enumerate().fold(cand.k.apply(&jet.value), |acc, (lam, vl)| acc + &jet.d1[lam].scale_re(*vl))
        }
    };
    let delta = Arc::new(delta);
    let flux = {
        let (l, psi, cand, delta) = (l.clone(), psi.clone(), cand.clone(), delta.clone());
        move |x: &[f64]| -> Result<Vec<C64>> {
            let jet = psi.eval(x, 1)?;
            let pt = SlotPoint::from_jet(&jet, x);
            let s = l.slots(&pt)?;
            let value = l.value(&pt);
            let d = delta(&jet, x);
            let dd = d.dagger();
            let v = cand.velocity(x);
            Ok((0..l.n_dims).map(|mu| s.mu[mu].trace_mul(&d) + s.mu_star[mu].trace_mul(&dd) - value * v[mu]).collect())
        }
    };
    let pairing = {
        let (l, psi) = (l.clone(), psi.clone());
        move |x: &[f64]| -> Result<C64> {
            let res = el_residual_at(&l, &MatterSource { psi: &psi }, x, OuterDerivative::jet())?;
            let d = delta(&psi.eval(x, 1)?, x);
            Ok(res.d_psi.trace_mul(&d) + res.d_psi_dag.trace_mul(&d.dagger()))
        }
    };
    Ok(FluxField {
        kind,
        n_dims: l.n_dims,
        preconditions: checks,
        provenance: format!("{} with K = {:?}, A = {:?}, a = {:?}", l.name, cand.k, cand.aext, cand.a),
        flux: Arc::new(flux),
        pairing: Arc::new(pairing),
        source: None,
    })
}

/// `V^μ = Tr[L^(μ)δψ + L^(μ⋆)δψ†] + a^μL_ψ` with `δψ = Kψ − a^λ∂_λψ`.
pub fn flux_translation(l: &ProtoLagrangian, psi: &DerivedField, k: LinearMap, a: Vec<f64>) -> Result<FluxField> {
    affine_matter_flux(FluxKind::Translation, l, psi, &SymmetryCandidate::translation(k, a))
}

/// `V^μ = Tr[L^(μ)δψ + L^(μ⋆)δψ†] − (Ax)^μL_ψ` with `δψ = Kψ + (Ax)^α∂_αψ`.
pub fn flux_dilation(l: &ProtoLagrangian, psi: &DerivedField, k: LinearMap, aext: Vec<Vec<f64>>) -> Result<FluxField> {
    affine_matter_flux(FluxKind::Dilation, l, psi, &SymmetryCandidate::dilation(k, aext))
}

/// `V^μ = Tr[L^(μ)Kψ + L^(μ⋆)(Kψ)†]`.
pub fn flux_internal(l: &ProtoLagrangian, psi: &DerivedField, k: LinearMap) -> Result<FluxField> {
    affine_matter_flux(FluxKind::Internal, l, psi, &SymmetryCandidate::internal(k, l.n_dims))
}

/// `V^μ = Tr(J⁻¹ψ†KΓ^μψ)` for the gauged system `Σ Γ^μ(∂_μψ + ψA_μ) + Mψ = 0`,
/// with `J` taken from the algebra of the potentials.
pub fn flux_current(psi: &DerivedField, a: &GaugeConfig, k: &CMatrix, gammas: &[CMatrix], m: &CMatrix) -> Result<FluxField> {
    let n = a.n_dims();
    let (r, c) = (psi.shape().rows, psi.shape().cols);
    if gammas.len() != n || psi.n_dims() != n || c != a.c() {
        return dim_err("ψ, Γ and A must share N and c");
    }
    for mat in gammas.iter().chain([k, m]) {
        if mat.rows() != r || mat.cols() != r {
            return dim_err("K, Γ^μ and M must be r×r");
        }
    }
    for (mu, g) in gammas.iter().enumerate() {
        let d = hermitian_defect(&(k * g));
        validate(d <= ALGEBRAIC_TOL, || format!("condition i: KΓ^{mu} must be Hermitian (defect {d:.3e})"))?;
    }
    let d = (&(k * m) + &(m.dagger() * k.dagger())).max_abs();
    validate(d <= ALGEBRAIC_TOL, || format!("condition iii: KM + M†K† must vanish (defect {d:.3e})"))?;
    let j = a.algebra.j().clone();
    let jinv = j.inverse()?;
    let mut worst: f64 = 0.0;
    for x in random_points(SAMPLE_SEED, n, SAMPLES, std::f64::consts::TAU) {
        for am in &a.components {
            let v = am.value(&x)?;
            worst = worst.max((&(&v.dagger() * &j) + &(&j * &v)).max_abs());
        }
    }
    let checks = vec![
        PreconditionCheck::new("KΓ^μ Hermitian", 0.0, ALGEBRAIC_TOL),
        PreconditionCheck::new("KM + M†K† = 0", d, ALGEBRAIC_TOL),
        PreconditionCheck::new("A†J + JA = 0", worst, 1e-9),
    ];
    require(FluxKind::Current, &checks)?;
    let kg: Vec<CMatrix> = gammas.iter().map(|g| k * g).collect();
    let flux = {
        let (psi, jinv) = (psi.clone(), jinv.clone());
        move |x: &[f64]| -> Result<Vec<C64>> {
            let p = psi.value(x)?;
            let pd = p.dagger();
            Ok(kg.iter().map(|kgm| jinv.trace_mul(&(&(&pd * kgm) * &p))).collect())
        }
    };
    let pairing = {
        let (psi, a, k, gammas, m) = (psi.clone(), a.clone(), k.clone(), gammas.to_vec(), m.clone());
        move |x: &[f64]| -> Result<C64> {
            let jet = psi.eval(x, 1)?;
            let p = &jet.value;
            let mut e = &m * p;
            for (mu, g) in gammas.iter().enumerate() {
                e += &(g * &(&jet.d1[mu] + &(p * &a.components[mu].value(x)?)));
            }
            let pd = p.dagger();
            let inner = &(&(&pd * &k) * &e) + &(&(&e.dagger() * &k.dagger()) * p);
            Ok(-jinv.trace_mul(&inner))
        }
    };
    Ok(FluxField {
        kind: FluxKind::Current,
        n_dims: n,
        preconditions: checks,
        provenance: format!("first-order system with r = {r}, c = {c}"),
        flux: Arc::new(flux),
        pairing: Arc::new(pairing),
        source: None,
    })
}

// ---------------------------------------------------------------- gauge fluxes

struct GaugeCtx {
    g: GaugeProtoLagrangian,
    a: GaugeConfig,
    f: FieldStrength,
}

struct GaugeLocal {
    a: Vec<CMatrix>,
    /// `da[λ][κ] = ∂_λA_κ`.
    da: Vec<Vec<CMatrix>>,
    /// `ΠĜ^(μν)`.
    hat: HatSlots,
    value: C64,
}

impl GaugeCtx {
    fn new(g: &GaugeProtoLagrangian, a: &GaugeConfig) -> Result<Self> {
        if g.n_dims != a.n_dims() || g.c != a.c() {
            return dim_err(format!("{g:?} does not match potentials on R^{} with c = {}", a.n_dims(), a.c()));
        }
        validate(a.algebra.dagger_stable(), || {
            format!("gauge fluxes need g† = g (dagger residual {:.2e})", a.algebra.dagger_residual())
        })?;
        Ok(GaugeCtx { g: g.clone(), a: a.clone(), f: field_strength(a)? })
    }

    fn source(&self) -> GaugeSource<'_> {
        GaugeSource { a: &self.a, f: self.f.clone() }
    }

    fn local(&self, x: &[f64]) -> Result<GaugeLocal> {
        let n = self.g.n_dims;
        let jets = self.a.jets(x, 1)?;
        let pt = self.source().point(x)?;
        let s = self.g.slots(&pt)?;
        let alg = &self.a.algebra;
        Ok(GaugeLocal {
            a: jets.iter().map(|j| j.value.clone()).collect(),
            da: (0..n).map(|lam| jets.iter().map(|j| j.d1[lam].clone()).collect()).collect(),
            hat: HatSlots::from_upper(n, &s.p).map(|m| alg.project(m)),
            value: self.g.value(&pt),
        })
    }

    /// `E_κ = Σ_μ ∇_μ ΠĜ^(μκ)`.
    fn residual(&self, x: &[f64]) -> Result<Vec<CMatrix>> {
        let a_vals: Vec<CMatrix> = self.a.components.iter().map(|f| f.value(x)).collect::<Result<_>>()?;
        let (base, d) = gauge_slot_field(&self.g, &self.source(), x, OuterDerivative::jet())?;
        Ok(dagger_stable_terms(&self.a.algebra, self.g.n_dims, &a_vals, &base, &d))
    }
}

/// `X_κ = v^λ∂_λA_κ`.
fn directional(loc: &GaugeLocal, v: &[f64]) -> Vec<CMatrix> {
    let n = v.len();
    let c = loc.a[0].rows();
    (0..n).map(|k| (0..n).fold(CMatrix::zeros(c, c), |acc, lam| acc + &loc.da[lam][k].scale_re(v[lam]))).collect()
}

fn re_pairing(hat: &HatSlots, mu: usize, x: &[CMatrix]) -> f64 {
    x.iter().enumerate().map(|(k, xk)| hat.get(mu, k).trace_mul(xk).re).sum()
}

/// `ReΣ_{μν} Tr[ΠĜ^(μν) Σ_α S^α_μ ∂_αA_ν]`.
fn dilation_source(loc: &GaugeLocal, s: &[Vec<f64>]) -> f64 {
    let n = loc.a.len();
    let mut c = 0.0;
    for mu in 0..n {
        for nu in 0..n {
            let y = (0..n).fold(CMatrix::zeros(loc.a[0].rows(), loc.a[0].cols()), |acc, al| acc + &loc.da[al][nu].scale_re(s[al][mu]));
            c += loc.hat.get(mu, nu).trace_mul(&y).re;
        }
    }
    c
}

fn affine_gauge_flux(
    kind: FluxKind,
    g: &GaugeProtoLagrangian,
    a: &GaugeConfig,
    shift: Vec<f64>,
    s: Vec<Vec<f64>>,
    check_source: bool,
) -> Result<FluxField> {
    let ctx = Arc::new(GaugeCtx::new(g, a)?);
    let n = g.n_dims;
    if shift.len() != n || s.len() != n || s.iter().any(|row| row.len() != n) {
        return dim_err(format!("coordinate field must live on R^{n}"));
    }
    let tr: f64 = (0..n).map(|i| s[i][i]).sum();
    validate(tr.abs() <= ALGEBRAIC_TOL, || format!("dilation generator S must be trace-free (trace {tr:.3e})"))?;
    let mut checks = vec![PreconditionCheck::new(
        "G^(∇)·v = 0",
        gauge_gradient_defect(g, &a.algebra, &shift, &s)?,
        SYMMETRY_TOL,
    )];
    let dilating = s.iter().flatten().any(|v| *v != 0.0);
    if dilating && check_source {
        let mut worst: f64 = 0.0;
        for x in random_points(SAMPLE_SEED, n, SAMPLES, std::f64::consts::TAU) {
            worst = worst.max(dilation_source(&ctx.local(&x)?, &s).abs());
        }
        checks.push(PreconditionCheck::new("dilation orthogonality", worst, DILATION_SOURCE_TOL));
    }
    require(kind, &checks)?;
    let flux = {
        let (ctx, shift, s) = (ctx.clone(), shift.clone(), s.clone());
        move |x: &[f64]| -> Result<Vec<C64>> {
            let loc = ctx.local(x)?;
            let v = affine_field(&shift, &s, x);
            let xk = directional(&loc, &v);
            Ok((0..n).map(|mu| C64::new(2.0 * re_pairing(&loc.hat, mu, &xk), 0.0) - loc.value * v[mu]).collect())
        }
    };
    let pairing = {
        let (ctx, shift, s) = (ctx.clone(), shift.clone(), s.clone());
        move |x: &[f64]| -> Result<C64> {
            let loc = ctx.local(x)?;
            let v = affine_field(&shift, &s, x);
            let xk = directional(&loc, &v);
            let e = ctx.residual(x)?;
            Ok(C64::new(-2.0 * e.iter().zip(&xk).map(|(ek, xk)| ek.trace_mul(xk).re).sum::<f64>(), 0.0))
        }
    };
    let source: Option<PointFn<C64>> = dilating.then(|| {
        let ctx = ctx.clone();
        let s = s.clone();
        Arc::new(move |x: &[f64]| -> Result<C64> { Ok(C64::new(2.0 * dilation_source(&ctx.local(x)?, &s), 0.0)) }) as PointFn<C64>
    });
    Ok(FluxField {
        kind,
        n_dims: n,
        preconditions: checks,
        provenance: format!("{} with a = {shift:?}, S = {s:?}", g.name),
        flux: Arc::new(flux),
        pairing: Arc::new(pairing),
        source,
    })
}

/// `V^μ = 2ReΣ_κ Tr[ΠĜ^(μκ)(a·∂)A_κ] − a^μG_A`.
pub fn flux_gauge_translation(g: &GaugeProtoLagrangian, a: &GaugeConfig, shift: Vec<f64>) -> Result<FluxField> {
    let n = g.n_dims;
    affine_gauge_flux(FluxKind::GaugeTranslation, g, a, shift, vec![vec![0.0; n]; n], true)
}

/// `V^μ = 2ReΣ_κ Tr[ΠĜ^(μκ)(Sx·∂)A_κ] − (Sx)^μG_A`; needs `Tr S = 0` and the
/// orthogonality `ReΣ Tr[ΠĜ^(μν)S^α_μ∂_αA_ν] = 0` on the potentials.
pub fn flux_gauge_dilation(g: &GaugeProtoLagrangian, a: &GaugeConfig, s: Vec<Vec<f64>>) -> Result<FluxField> {
    affine_gauge_flux(FluxKind::GaugeDilation, g, a, vec![0.0; g.n_dims], s, true)
}

/// [`flux_gauge_dilation`] without the field-dependent orthogonality check; the
/// identity then reads `div V + pairing = 2ReΣ Tr[ΠĜ^(μν)S^α_μ∂_αA_ν]`.
pub fn flux_gauge_dilation_unchecked(g: &GaugeProtoLagrangian, a: &GaugeConfig, s: Vec<Vec<f64>>) -> Result<FluxField> {
    affine_gauge_flux(FluxKind::GaugeDilation, g, a, vec![0.0; g.n_dims], s, false)
}

fn check_in_algebra(alg: &LieAlgebraSpec, b: &CMatrix) -> Result<()> {
    if b.rows() != alg.dim_c() || b.cols() != alg.dim_c() {
        return dim_err("B must be c×c");
    }
    let d = alg.membership_defect(b)?;
    validate(d <= ALGEBRAIC_TOL, || format!("B is not in the gauge algebra (defect {d:.3e})"))
}

/// `V^μ = ReΣ_ν Tr[ΠĜ^(μν)[B, A_ν]]`.
pub fn flux_gauge_internal(g: &GaugeProtoLagrangian, a: &GaugeConfig, b: &CMatrix) -> Result<FluxField> {
    let ctx = Arc::new(GaugeCtx::new(g, a)?);
    check_in_algebra(&a.algebra, b)?;
    let checks = vec![PreconditionCheck::new(
        "conjugation invariance",
        conjugation_invariance_defect(g, &a.algebra, b, SAMPLES, SAMPLE_SEED)?,
        SYMMETRY_TOL,
    )];
    require(FluxKind::GaugeInternal, &checks)?;
    let n = g.n_dims;
    let xs = |loc: &GaugeLocal, b: &CMatrix| -> Vec<CMatrix> { loc.a.iter().map(|ak| b.comm(ak)).collect() };
    let flux = {
        let (ctx, b) = (ctx.clone(), b.clone());
        move |x: &[f64]| -> Result<Vec<C64>> {
            let loc = ctx.local(x)?;
            let xk = xs(&loc, &b);
            Ok((0..n).map(|mu| C64::new(re_pairing(&loc.hat, mu, &xk), 0.0)).collect())
        }
    };
    let pairing = {
        let (ctx, b) = (ctx.clone(), b.clone());
        move |x: &[f64]| -> Result<C64> {
            let loc = ctx.local(x)?;
            let e = ctx.residual(x)?;
            let xk = xs(&loc, &b);
            Ok(C64::new(-e.iter().zip(&xk).map(|(ek, xk)| ek.trace_mul(xk).re).sum::<f64>(), 0.0))
        }
    };
    Ok(FluxField {
        kind: FluxKind::GaugeInternal,
        n_dims: n,
        preconditions: checks,
        provenance: format!("{} with B = {:?}", g.name, b.data()),
        flux: Arc::new(flux),
        pairing: Arc::new(pairing),
        source: None,
    })
}

/// `V^μ = Tr[L^(μ)ψB] + Tr[L^(μ⋆)B†ψ†] + 2ReΣ_κ Tr[ΠĜ^(μκ)[A_κ, B]]` for the
/// dynamically extended system `L_{ψ,A} + G_A`.
pub fn flux_combined(
    l: &ProtoLagrangian,
    g: &GaugeProtoLagrangian,
    psi: &DerivedField,
    a: &GaugeConfig,
    b: &CMatrix,
) -> Result<FluxField> {
    let ctx = Arc::new(GaugeCtx::new(g, a)?);
    check_psi(l, psi)?;
    ExtendedSource::new(psi, a)?;
    check_in_algebra(&a.algebra, b)?;
    let right = SymmetryCandidate::internal(LinearMap::Right(b.clone()), l.n_dims);
    let checks = vec![
        PreconditionCheck::new(
            "matter invariance under right multiplication",
            internal_symmetry_defect(l, &right, SAMPLES, SAMPLE_SEED, Flow::Exponential)?,
            SYMMETRY_TOL,
        ),
        PreconditionCheck::new(
            "conjugation invariance",
            conjugation_invariance_defect(g, &a.algebra, b, SAMPLES, SAMPLE_SEED)?,
            SYMMETRY_TOL,
        ),
        PreconditionCheck::new(
            "matter slot condition",
            matter_slot_condition_defect(l, &a.algebra, SAMPLE_SEED, SAMPLES)?,
            MATTER_SLOT_CONDITION_TOL,
        ),
    ];
    require(FluxKind::Combined, &checks)?;
    let n = l.n_dims;
    let flux = {
        let (ctx, l, psi, b) = (ctx.clone(), l.clone(), psi.clone(), b.clone());
        move |x: &[f64]| -> Result<Vec<C64>> {
            let src = ExtendedSource { psi: &psi, a: &ctx.a };
            let pt = src.point(x)?;
            let s = l.slots(&pt)?;
            let loc = ctx.local(x)?;
            let d = &pt.p * &b;
            let dd = d.dagger();
            let xk: Vec<CMatrix> = loc.a.iter().map(|ak| ak.comm(&b)).collect();
            Ok((0..n)
                .map(|mu| s.mu[mu].trace_mul(&d) + s.mu_star[mu].trace_mul(&dd) + 2.0 * re_pairing(&loc.hat, mu, &xk))
                .collect())
        }
    };
    let pairing = {
        let (ctx, l, psi, b) = (ctx.clone(), l.clone(), psi.clone(), b.clone());
        move |x: &[f64]| -> Result<C64> {
            let src = ExtendedSource { psi: &psi, a: &ctx.a };
            let (res, s, p) = extended_point_residual(&l, &src, x, OuterDerivative::jet())?;
            let loc = ctx.local(x)?;
            let e = ctx.residual(x)?;
            let d = &p * &b;
            let mut total = res.d_psi.trace_mul(&d) + res.d_psi_dag.trace_mul(&d.dagger());
            for k in 0..n {
                let xk = loc.a[k].comm(&b);
                let px = &p * &xk;
                total += s.mu[k].trace_mul(&px) + s.mu_star[k].trace_mul(&px.dagger());
                total -= 2.0 * e[k].trace_mul(&xk).re;
            }
            Ok(total)
        }
    };
    Ok(FluxField {
        kind: FluxKind::Combined,
        n_dims: n,
        preconditions: checks,
        provenance: format!("{} + {} with B = {:?}", l.name, g.name, b.data()),
        flux: Arc::new(flux),
        pairing: Arc::new(pairing),
        source: None,
    })
}

// ---------------------------------------------------------------- divergence checks

/// Largest defect at one stencil width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceLevel {
    pub h: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub levels: Vec<DivergenceLevel>,
    /// Smallest observed order `log₂(e_k / e_{k+1})`; absent when the defect sits at
    /// rounding level.
    pub order: Option<f64>,
    /// `max |V^μ|` over the points.
    pub scale: f64,
}

impl DivergenceReport {
    pub fn finest(&self) -> f64 {
        self.levels.last().map_or(0.0, |l| l.max_abs)
    }

    /// Converges at `min_order` or better, or already sits at rounding level.
    pub fn converges(&self, min_order: f64) -> bool {
        match self.order {
            Some(o) => o >= min_order,
            None => self.finest() <= ROUNDING_FLOOR * (1.0 + self.scale),
        }
    }
}

const ROUNDING_FLOOR: f64 = 1e-11;

fn central_divergence(flux: &FluxField, x: &[f64], h: f64) -> Result<C64> {
    let mut div = ZERO;
    let mut y = x.to_vec();
    for mu in 0..flux.n_dims {
        y[mu] = x[mu] + h;
        let fp = flux.at(&y)?[mu];
        y[mu] = x[mu] - h;
        let fm = flux.at(&y)?[mu];
        y[mu] = x[mu];
        div += (fp - fm) / (2.0 * h);
    }
    Ok(div)
}

fn refinement(flux: &FluxField, points: &[Vec<f64>], h0: f64, levels: usize, with_pairing: bool) -> Result<DivergenceReport> {
    if levels == 0 || h0 <= 0.0 {
        return Err(Error::Argument("need at least one level and a positive step".into()));
    }
    let per_point: Vec<(f64, Vec<f64>)> = points
        .par_iter()
        .map(|x| -> Result<(f64, Vec<f64>)> {
            let scale = flux.at(x)?.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let offset = if with_pairing { flux.pairing_at(x)? - flux.source_at(x)? } else { ZERO };
            let errs = (0..levels)
                .map(|k| Ok((central_divergence(flux, x, h0 / f64::powi(2.0, k as i32))? + offset).norm()))
                .collect::<Result<Vec<f64>>>()?;
            Ok((scale, errs))
        })
        .collect::<Result<_>>()?;
    let scale = per_point.iter().map(|p| p.0).fold(0.0, f64::max);
    let levels: Vec<DivergenceLevel> = (0..levels)
        .map(|k| DivergenceLevel {
            h: h0 / f64::powi(2.0, k as i32),
            max_abs: per_point.iter().map(|p| p.1[k]).fold(0.0, f64::max),
        })
        .collect();
    let floor = ROUNDING_FLOOR * (1.0 + scale);
    let order = if levels.len() >= 2 && levels.last().is_some_and(|l| l.max_abs > floor) {
        levels.windows(2).map(|w| (w[0].max_abs / w[1].max_abs).log2()).reduce(f64::min)
    } else {
        None
    };
    Ok(DivergenceReport { levels, order, scale })
}

/// `max |div V|` at `points` with central stencils of width `h0, h0/2, …`.
pub fn divergence_defect(flux: &FluxField, points: &[Vec<f64>], h0: f64, levels: usize) -> Result<DivergenceReport> {
    refinement(flux, points, h0, levels, false)
}

/// `max |div V + pairing − source|`; converges to zero at second order for every field.
pub fn offshell_identity_defect(flux: &FluxField, points: &[Vec<f64>], h0: f64, levels: usize) -> Result<DivergenceReport> {
    refinement(flux, points, h0, levels, true)
}

/// Every `stride`-th point of the grid.
pub fn grid_subsample(grid: &Grid, stride: usize) -> Vec<Vec<f64>> {
    (0..grid.len()).step_by(stride.max(1)).map(|i| grid.point(i)).collect()
}
