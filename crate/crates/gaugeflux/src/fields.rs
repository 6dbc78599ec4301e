//! Matrix-valued fields on the torus with exact derivatives.
//!
//! A [`SmoothField`] is a finite Fourier sum. Composite expressions (products,
//! inverses, gauge transforms) are [`DerivedField`] trees; differentiating a
//! tree is symbolic, so every derived quantity carries exact first and second
//! partials. Finite differences only appear in [`grid_divergence`].

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{dim_err, Error, Result};
use crate::lie::{LieAlgebraSpec, LieGroupSpec};
use crate::matcore::{mat_exp, CMatrix, MatrixShape, C64, I, ONE, ZERO};
use crate::serial::{matrix_from_json, matrix_to_json};

pub const MAX_DEPTH: usize = 64;
pub const MAX_CONDITION: f64 = 1e8;

/// Value with first partials `d1[μ]` and second partials `d2[μ·n + ν]`.
/// Lower-order jets leave the higher vectors empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: CMatrix,
    pub d1: Vec<CMatrix>,
    pub d2: Vec<CMatrix>,
}

impl Jet {
    pub fn constant(value: CMatrix, n: usize, order: usize) -> Self {
        let z = CMatrix::zeros_like(value.shape());
        Jet {
            d1: if order >= 1 { vec![z.clone(); n] } else { vec![] },
            d2: if order >= 2 { vec![z; n * n] } else { vec![] },
            value,
        }
    }

    pub fn n_dims(&self) -> usize {
        self.d1.len()
    }

    pub fn order(&self) -> usize {
        if !self.d2.is_empty() {
            2
        } else if !self.d1.is_empty() {
            1
        } else {
            0
        }
    }

    pub fn d2(&self, mu: usize, nu: usize) -> &CMatrix {
        &self.d2[mu * self.d1.len() + nu]
    }

    fn map(&self, f: impl Fn(&CMatrix) -> CMatrix) -> Jet {
        Jet {
            value: f(&self.value),
            d1: self.d1.iter().map(&f).collect(),
            d2: self.d2.iter().map(&f).collect(),
        }
    }

    fn zip(&self, o: &Jet, f: impl Fn(&CMatrix, &CMatrix) -> CMatrix) -> Jet {
        Jet {
            value: f(&self.value, &o.value),
            d1: self.d1.iter().zip(&o.d1).map(|(a, b)| f(a, b)).collect(),
            d2: self.d2.iter().zip(&o.d2).map(|(a, b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, o: &Jet) -> Jet {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Jet) -> Jet {
        self.zip(o, |a, b| a - b)
    }

    pub fn scale(&self, s: C64) -> Jet {
        self.map(|a| a.scale(s))
    }

    pub fn dagger(&self) -> Jet {
        self.map(CMatrix::dagger)
    }

    /// Product rule through second order; `mul` multiplies the values.
    fn product(&self, o: &Jet, mul: impl Fn(&CMatrix, &CMatrix) -> CMatrix) -> Jet {
        let n = self.d1.len();
        let value = mul(&self.value, &o.value);
        let d1 = (0..self.d1.len().min(o.d1.len()))
            .map(|m| mul(&self.d1[m], &o.value) + mul(&self.value, &o.d1[m]))
            .collect();
        let mut d2 = Vec::new();
        if !self.d2.is_empty() && !o.d2.is_empty() {
            for m in 0..n {
                for v in 0..n {
                    let k = m * n + v;
                    let mut t = mul(&self.d2[k], &o.value) + mul(&self.value, &o.d2[k]);
                    t += &mul(&self.d1[m], &o.d1[v]);
                    t += &mul(&self.d1[v], &o.d1[m]);
                    d2.push(t);
                }
            }
        }
        Jet { value, d1, d2 }
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        self.product(o, |a, b| a * b)
    }

    /// `self` must be 1×1; multiplies `o` by that scalar.
    pub fn scalar_mul(&self, o: &Jet) -> Jet {
        self.product(o, |s, b| b.scale(s.as_scalar()))
    }

    pub fn comm(&self, o: &Jet) -> Jet {
        self.mul(o).sub(&o.mul(self))
    }

    /// `∂(U⁻¹) = −U⁻¹(∂U)U⁻¹` and its derivative.
    pub fn inverse(&self) -> Result<Jet> {
        let cond = self.value.condition()?;
        if !(cond <= MAX_CONDITION) {
            return Err(Error::Evaluation(format!("inverse of ill-conditioned matrix (cond {cond:.3e})")));
        }
        let v = self.value.inverse()?;
        let n = self.d1.len();
        let d1: Vec<CMatrix> = self.d1.iter().map(|a| -(&(&v * a) * &v)).collect();
        let mut d2 = Vec::new();
        if !self.d2.is_empty() {
            for m in 0..n {
                for nu in 0..n {
                    let t = &(&d1[nu] * &self.d1[m]) * &v
                        + &(&v * &self.d2[m * n + nu]) * &v
                        + &(&v * &self.d1[m]) * &d1[nu];
                    d2.push(-t);
                }
            }
        }
        Ok(Jet { value: v, d1, d2 })
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.d1.iter().all(CMatrix::is_finite)
            && self.d2.iter().all(CMatrix::is_finite)
    }
}

/// Truncated Fourier series `Σ_k C_k exp(i ω_k·x)` with `ω_μ = 2π k_μ / period_μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothField {
    n_dims: usize,
    shape: MatrixShape,
    period: Vec<f64>,
    modes: Vec<(Vec<i64>, CMatrix)>,
}

impl SmoothField {
    pub fn new(
        n_dims: usize,
        shape: MatrixShape,
        period: Vec<f64>,
        modes: Vec<(Vec<i64>, CMatrix)>,
    ) -> Result<Self> {
        if n_dims == 0 || period.len() != n_dims {
            return dim_err(format!("{} periods for {} axes", period.len(), n_dims));
        }
        if period.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Argument("periods must be positive".into()));
        }
        for (k, c) in &modes {
            if k.len() != n_dims || c.shape() != shape {
                return dim_err(format!("mode of shape {} with {} wavenumbers", c.shape(), k.len()));
            }
        }
        Ok(Self { n_dims, shape, period, modes })
    }

    pub fn constant(n_dims: usize, value: CMatrix) -> Self {
        Self::constant_with_period(vec![2.0 * PI; n_dims], value)
    }

    pub fn constant_with_period(period: Vec<f64>, value: CMatrix) -> Self {
        let n = period.len();
        Self { n_dims: n, shape: value.shape(), period, modes: vec![(vec![0; n], value)] }
    }

    pub fn zero(n_dims: usize, shape: MatrixShape) -> Self {
        Self { n_dims, shape, period: vec![2.0 * PI; n_dims], modes: vec![] }
    }

    /// Single mode `c·exp(i ω·x)`.
    pub fn plane_wave(period: Vec<f64>, k: Vec<i64>, c: CMatrix) -> Result<Self> {
        Self::new(period.len(), c.shape(), period, vec![(k, c)])
    }

    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    pub fn shape(&self) -> MatrixShape {
        self.shape
    }

    pub fn period(&self) -> &[f64] {
        &self.period
    }

    pub fn modes(&self) -> &[(Vec<i64>, CMatrix)] {
        &self.modes
    }

    pub fn omega(&self, k: &[i64]) -> Vec<f64> {
        k.iter().zip(&self.period).map(|(&k, &p)| 2.0 * PI * k as f64 / p).collect()
    }

    pub fn max_wavenumber(&self) -> f64 {
        self.modes
            .iter()
            .map(|(k, _)| self.omega(k).iter().map(|w| w.abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    fn phase(&self, k: &[i64], x: &[f64]) -> (Vec<f64>, C64) {
        let w = self.omega(k);
        let theta: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
        (w, C64::from_polar(1.0, theta))
    }

    pub fn eval(&self, x: &[f64], order: usize) -> Jet {
        let n = self.n_dims;
        let mut jet = Jet::constant(CMatrix::zeros_like(self.shape), n, order);
        for (k, c) in &self.modes {
            let (w, e) = self.phase(k, x);
            let ce = c.scale(e);
            jet.value += &ce;
            if order >= 1 {
                for m in 0..n {
                    if w[m] != 0.0 {
                        jet.d1[m] += &ce.scale(I * w[m]);
                    }
                }
            }
            if order >= 2 {
                for m in 0..n {
                    for v in 0..n {
                        let f = w[m] * w[v];
                        if f != 0.0 {
                            jet.d2[m * n + v] -= &ce.scale_re(f);
                        }
                    }
                }
            }
        }
        jet
    }

    pub fn value(&self, x: &[f64]) -> CMatrix {
        self.eval(x, 0).value
    }

    /// Exact partial derivative as another Fourier sum.
    pub fn partial(&self, mu: usize) -> SmoothField {
        let modes = self
            .modes
            .iter()
            .filter(|(k, _)| k[mu] != 0)
            .map(|(k, c)| (k.clone(), c.scale(I * self.omega(k)[mu])))
            .collect();
        SmoothField { modes, ..self.clone() }
    }

    pub fn dagger(&self) -> SmoothField {
        let modes = self.modes.iter().map(|(k, c)| (k.iter().map(|v| -v).collect(), c.dagger())).collect();
        SmoothField { shape: self.shape.transposed(), modes, ..self.clone() }
    }

    pub fn scale(&self, s: C64) -> SmoothField {
        let modes = self.modes.iter().map(|(k, c)| (k.clone(), c.scale(s))).collect();
        SmoothField { modes, ..self.clone() }
    }

    /// Mode-wise sum; periods and shapes must agree.
    pub fn add(&self, other: &SmoothField) -> Result<SmoothField> {
        if self.shape != other.shape || self.period != other.period {
            return dim_err("adding fields on different shapes or periods");
        }
        let mut modes = self.modes.clone();
        modes.extend(other.modes.iter().cloned());
        Ok(SmoothField { modes, ..self.clone() })
    }

    pub fn to_json(&self) -> Value {
        let modes: Vec<Value> = self
            .modes
            .iter()
            .map(|(k, c)| {
                let m = matrix_to_json(c);
                json!({"k": k, "re": m["re"], "im": m["im"]})
            })
            .collect();
        json!({"modes": modes, "period": self.period, "shape": [self.shape.rows, self.shape.cols]})
    }

    pub fn from_json(v: &Value) -> Result<SmoothField> {
        let bad = |m: &str| Error::Validation(format!("field json: {m}"));
        let period: Vec<f64> = serde_json::from_value(v["period"].clone()).map_err(|e| bad(&e.to_string()))?;
        let shape: [usize; 2] = serde_json::from_value(v["shape"].clone()).map_err(|e| bad(&e.to_string()))?;
        let shape = MatrixShape::new(shape[0], shape[1])?;
        let mut modes = Vec::new();
        for m in v["modes"].as_array().ok_or_else(|| bad("modes"))? {
            let k: Vec<i64> = serde_json::from_value(m["k"].clone()).map_err(|e| bad(&e.to_string()))?;
            let c = matrix_from_json(&json!({"re": m["re"], "im": m["im"]}))?;
            modes.push((k, c));
        }
        SmoothField::new(period.len(), shape, period, modes)
    }
}

fn wavevectors(n: usize, max_mode: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|v: Vec<i64>| {
                (-max_mode..=max_mode).map(move |k| {
                    let mut w = v.clone();
                    w.push(k);
                    w
                })
            })
            .collect();
    }
    out
}

fn is_positive_half(k: &[i64]) -> bool {
    match k.iter().find(|&&v| v != 0) {
        Some(&v) => v > 0,
        None => false,
    }
}

fn decay(k: &[i64]) -> f64 {
    let norm = k.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
    1.0 / (1.0 + norm).powi(3)
}

/// Random field whose pointwise values are real combinations of `span`
/// with real trigonometric coefficients.
pub fn random_field_in_span(
    seed: u64,
    n_dims: usize,
    span: &[CMatrix],
    max_mode: i64,
    amplitude: f64,
) -> Result<SmoothField> {
    let shape = span.first().map(CMatrix::shape).ok_or_else(|| Error::Argument("empty span".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = Vec::new();
    for k in wavevectors(n_dims, max_mode) {
        let zero = k.iter().all(|&v| v == 0);
        if !zero && !is_positive_half(&k) {
            continue;
        }
        let w = amplitude * decay(&k);
        let mut plus = CMatrix::zeros_like(shape);
        let mut minus = CMatrix::zeros_like(shape);
        for e in span {
            let a: f64 = rng.gen_range(-1.0..1.0) * w;
            let b: f64 = rng.gen_range(-1.0..1.0) * w;
            if zero {
                plus += &e.scale_re(a);
            } else {
                // a cos θ + b sin θ
                plus += &e.scale(C64::new(a, -b) * 0.5);
                minus += &e.scale(C64::new(a, b) * 0.5);
            }
        }
        if zero {
            modes.push((k, plus));
        } else {
            let neg: Vec<i64> = k.iter().map(|v| -v).collect();
            modes.push((k, plus));
            modes.push((neg, minus));
        }
    }
    SmoothField::new(n_dims, shape, vec![2.0 * PI; n_dims], modes)
}

/// Random field with coefficients decaying like `1/(1+|k|)³`. With an algebra
/// the values lie pointwise in `g`; otherwise they are generic complex.
pub fn random_smooth_field(
    seed: u64,
    n_dims: usize,
    shape: MatrixShape,
    max_mode: i64,
    amplitude: f64,
    algebra: Option<&LieAlgebraSpec>,
) -> Result<SmoothField> {
    if max_mode < 1 {
        return Err(Error::Argument("max_mode must be at least 1".into()));
    }
    if let Some(g) = algebra {
        if shape != MatrixShape::square(g.dim_c()) {
            return dim_err(format!("algebra fields are {0}x{0}", g.dim_c()));
        }
        return random_field_in_span(seed, n_dims, g.basis(), max_mode, amplitude);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = wavevectors(n_dims, max_mode)
        .into_iter()
        .map(|k| {
            let c = CMatrix::random(shape.rows, shape.cols, &mut rng).scale_re(amplitude * decay(&k));
            (k, c)
        })
        .collect();
    SmoothField::new(n_dims, shape, vec![2.0 * PI; n_dims], modes)
}

pub fn random_real_scalar(seed: u64, n_dims: usize, max_mode: i64, amplitude: f64) -> Result<SmoothField> {
    random_field_in_span(seed, n_dims, &[CMatrix::identity(1)], max_mode, amplitude)
}

#[derive(Clone)]
enum Node {
    Smooth(SmoothField),
    Const(CMatrix),
    /// `exp(f(x)·E)` with `f` scalar.
    ExpLine(SmoothField, CMatrix),
    Add(DerivedField, DerivedField),
    Sub(DerivedField, DerivedField),
    Mul(DerivedField, DerivedField),
    ScalarMul(DerivedField, DerivedField),
    Comm(DerivedField, DerivedField),
    Inv(DerivedField),
    Dagger(DerivedField),
    Scale(C64, DerivedField),
}

struct Inner {
    node: Node,
    n_dims: usize,
    shape: MatrixShape,
    depth: usize,
}

/// Expression tree over fields with symbolic differentiation.
#[derive(Clone)]
pub struct DerivedField(Arc<Inner>);

impl fmt::Debug for DerivedField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DerivedField({}, N={}, depth={})", self.shape(), self.n_dims(), self.depth())
    }
}

impl From<SmoothField> for DerivedField {
    fn from(f: SmoothField) -> Self {
        let (n_dims, shape) = (f.n_dims, f.shape);
        DerivedField(Arc::new(Inner { node: Node::Smooth(f), n_dims, shape, depth: 1 }))
    }
}

type Cache = HashMap<usize, Jet>;

impl DerivedField {
    fn make(node: Node, n_dims: usize, shape: MatrixShape, depth: usize) -> Result<Self> {
        if depth > MAX_DEPTH {
            return Err(Error::Evaluation(format!("expression depth {depth} exceeds {MAX_DEPTH}")));
        }
        Ok(DerivedField(Arc::new(Inner { node, n_dims, shape, depth })))
    }

    pub fn constant(n_dims: usize, value: CMatrix) -> Self {
        let shape = value.shape();
        Self::make(Node::Const(value), n_dims, shape, 1).expect("leaf depth")
    }

    pub fn zero(n_dims: usize, shape: MatrixShape) -> Self {
        Self::constant(n_dims, CMatrix::zeros_like(shape))
    }

    /// `exp(f(x)·E)`; with `E ∈ g_J` and real `f` the values lie in `G_J`.
    pub fn exp_line(f: SmoothField, generator: CMatrix) -> Result<Self> {
        if f.shape() != MatrixShape::square(1) || !generator.is_square() {
            return dim_err("exp_line needs a scalar field and a square generator");
        }
        let (n, shape) = (f.n_dims(), generator.shape());
        Self::make(Node::ExpLine(f, generator), n, shape, 1)
    }

    pub fn n_dims(&self) -> usize {
        self.0.n_dims
    }

    pub fn shape(&self) -> MatrixShape {
        self.0.shape
    }

    pub fn depth(&self) -> usize {
        self.0.depth
    }

    fn is_zero(&self) -> bool {
        match &self.0.node {
            Node::Const(c) => c.data().iter().all(|z| *z == ZERO),
            Node::Smooth(f) => f.modes.is_empty(),
            _ => false,
        }
    }

    fn binary(&self, o: &DerivedField, shape: MatrixShape, node: Node) -> Result<Self> {
        if self.n_dims() != o.n_dims() {
            return dim_err(format!("fields on R^{} and R^{}", self.n_dims(), o.n_dims()));
        }
        Self::make(node, self.n_dims(), shape, 1 + self.depth().max(o.depth()))
    }

    pub fn add(&self, o: &DerivedField) -> Result<Self> {
        if self.shape() != o.shape() {
            return dim_err(format!("adding {} and {}", self.shape(), o.shape()));
        }
        if o.is_zero() {
            return Ok(self.clone());
        }
        if self.is_zero() {
            return Ok(o.clone());
        }
        self.binary(o, self.shape(), Node::Add(self.clone(), o.clone()))
    }

    pub fn sub(&self, o: &DerivedField) -> Result<Self> {
        if self.shape() != o.shape() {
            return dim_err(format!("subtracting {} and {}", self.shape(), o.shape()));
        }
        if o.is_zero() {
            return Ok(self.clone());
        }
        self.binary(o, self.shape(), Node::Sub(self.clone(), o.clone()))
    }

    pub fn mul(&self, o: &DerivedField) -> Result<Self> {
        if self.shape().cols != o.shape().rows {
            return dim_err(format!("multiplying {} by {}", self.shape(), o.shape()));
        }
        let shape = MatrixShape { rows: self.shape().rows, cols: o.shape().cols };
        if self.is_zero() || o.is_zero() {
            return Ok(Self::zero(self.n_dims(), shape));
        }
        self.binary(o, shape, Node::Mul(self.clone(), o.clone()))
    }

    /// `self` is 1×1 and scales every entry of `o`.
    pub fn scalar_mul(&self, o: &DerivedField) -> Result<Self> {
        if self.shape() != MatrixShape::square(1) {
            return dim_err("scalar_mul needs a 1x1 left factor");
        }
        if self.is_zero() || o.is_zero() {
            return Ok(Self::zero(self.n_dims(), o.shape()));
        }
        self.binary(o, o.shape(), Node::ScalarMul(self.clone(), o.clone()))
    }

    pub fn comm(&self, o: &DerivedField) -> Result<Self> {
        if self.shape() != o.shape() || self.shape().rows != self.shape().cols {
            return dim_err(format!("commutator of {} and {}", self.shape(), o.shape()));
        }
        if self.is_zero() || o.is_zero() {
            return Ok(Self::zero(self.n_dims(), self.shape()));
        }
        self.binary(o, self.shape(), Node::Comm(self.clone(), o.clone()))
    }

    pub fn inv(&self) -> Result<Self> {
        if self.shape().rows != self.shape().cols {
            return dim_err(format!("inverse of {}", self.shape()));
        }
        Self::make(Node::Inv(self.clone()), self.n_dims(), self.shape(), self.depth() + 1)
    }

    pub fn dagger(&self) -> Result<Self> {
        Self::make(Node::Dagger(self.clone()), self.n_dims(), self.shape().transposed(), self.depth() + 1)
    }

    pub fn scale(&self, s: C64) -> Result<Self> {
        if self.is_zero() {
            return Ok(self.clone());
        }
        Self::make(Node::Scale(s, self.clone()), self.n_dims(), self.shape(), self.depth() + 1)
    }

    pub fn neg(&self) -> Result<Self> {
        self.scale(-ONE)
    }

    /// Symbolic `∂_μ`.
    pub fn partial(&self, mu: usize) -> Result<Self> {
        if mu >= self.n_dims() {
            return dim_err(format!("axis {mu} on R^{}", self.n_dims()));
        }
        let n = self.n_dims();
        match &self.0.node {
            Node::Smooth(f) => Ok(f.partial(mu).into()),
            Node::Const(_) => Ok(Self::zero(n, self.shape())),
            Node::ExpLine(f, e) => {
                let df: DerivedField = f.partial(mu).into();
                df.scalar_mul(&Self::constant(n, e.clone()).mul(self)?)
            }
            Node::Add(a, b) => a.partial(mu)?.add(&b.partial(mu)?),
            Node::Sub(a, b) => a.partial(mu)?.sub(&b.partial(mu)?),
            Node::Mul(a, b) => a.partial(mu)?.mul(b)?.add(&a.mul(&b.partial(mu)?)?),
            Node::ScalarMul(a, b) => a.partial(mu)?.scalar_mul(b)?.add(&a.scalar_mul(&b.partial(mu)?)?),
            Node::Comm(a, b) => a.partial(mu)?.comm(b)?.add(&a.comm(&b.partial(mu)?)?),
            Node::Inv(_) => self.mul(&self.partial_inner_inv(mu)?)?.mul(self)?.neg(),
            Node::Dagger(a) => a.partial(mu)?.dagger(),
            Node::Scale(s, a) => a.partial(mu)?.scale(*s),
        }
    }

    fn partial_inner_inv(&self, mu: usize) -> Result<Self> {
        match &self.0.node {
            Node::Inv(a) => a.partial(mu),
            _ => unreachable!(),
        }
    }

    fn eval_cached(&self, x: &[f64], order: usize, cache: &mut Cache) -> Result<Jet> {
        let shared = Arc::strong_count(&self.0) > 1;
        let key = Arc::as_ptr(&self.0) as usize;
        if shared {
            if let Some(j) = cache.get(&key) {
                return Ok(j.clone());
            }
        }
        let n = self.n_dims();
        let jet = match &self.0.node {
            Node::Smooth(f) => f.eval(x, order),
            Node::Const(c) => Jet::constant(c.clone(), n, order),
            Node::ExpLine(f, e) => {
                let fj = f.eval(x, order);
                let s = fj.value.as_scalar();
                let v = mat_exp(&e.scale(s))?;
                let ev = e * &v;
                let e2v = e * &ev;
                let d1: Vec<CMatrix> = fj.d1.iter().map(|d| ev.scale(d.as_scalar())).collect();
                let mut d2 = Vec::new();
                if order >= 2 {
                    for m in 0..n {
                        for nu in 0..n {
                            let t = ev.scale(fj.d2[m * n + nu].as_scalar())
                                + e2v.scale(fj.d1[m].as_scalar() * fj.d1[nu].as_scalar());
                            d2.push(t);
                        }
                    }
                }
                Jet { value: v, d1, d2 }
            }
            Node::Add(a, b) => a.eval_cached(x, order, cache)?.add(&b.eval_cached(x, order, cache)?),
            Node::Sub(a, b) => a.eval_cached(x, order, cache)?.sub(&b.eval_cached(x, order, cache)?),
            Node::Mul(a, b) => a.eval_cached(x, order, cache)?.mul(&b.eval_cached(x, order, cache)?),
            Node::ScalarMul(a, b) => {
                a.eval_cached(x, order, cache)?.scalar_mul(&b.eval_cached(x, order, cache)?)
            }
            Node::Comm(a, b) => a.eval_cached(x, order, cache)?.comm(&b.eval_cached(x, order, cache)?),
            Node::Inv(a) => a.eval_cached(x, order, cache)?.inverse()?,
            Node::Dagger(a) => a.eval_cached(x, order, cache)?.dagger(),
            Node::Scale(s, a) => a.eval_cached(x, order, cache)?.scale(*s),
        };
        if !jet.is_finite() {
            return Err(Error::Evaluation(format!("non-finite field value at x = {x:?}")));
        }
        if shared {
            cache.insert(key, jet.clone());
        }
        Ok(jet)
    }

    /// Jet of the given order (0, 1 or 2) at `x`.
    pub fn eval(&self, x: &[f64], order: usize) -> Result<Jet> {
        if x.len() != self.n_dims() {
            return dim_err(format!("point in R^{} for a field on R^{}", x.len(), self.n_dims()));
        }
        if order > 2 {
            return Err(Error::Argument("jets stop at second order".into()));
        }
        self.eval_cached(x, order, &mut Cache::new())
    }

    pub fn jet(&self, x: &[f64]) -> Result<Jet> {
        self.eval(x, 2)
    }

    pub fn value(&self, x: &[f64]) -> Result<CMatrix> {
        Ok(self.eval(x, 0)?.value)
    }
}

/// Uniform periodic grid with `P` points per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub n_dims: usize,
    pub points_per_axis: usize,
    pub period: Vec<f64>,
}

impl Grid {
    pub fn new(n_dims: usize, points_per_axis: usize, period: f64) -> Result<Self> {
        if points_per_axis < 4 {
            return Err(Error::Argument(format!("grids need P >= 4, got {points_per_axis}")));
        }
        if n_dims == 0 || !(period > 0.0) {
            return Err(Error::Argument("grid needs positive dimension and period".into()));
        }
        Ok(Self { n_dims, points_per_axis, period: vec![period; n_dims] })
    }

    /// Torus of side 2π.
    pub fn torus(n_dims: usize, points_per_axis: usize) -> Result<Self> {
        Self::new(n_dims, points_per_axis, 2.0 * PI)
    }

    /// Default resolution: P = 32 for N ≤ 2, 16 for N = 3, 12 for N = 4.
    pub fn default_for(n_dims: usize) -> Result<Self> {
        let p = match n_dims {
            0..=2 => 32,
            3 => 16,
            _ => 12,
        };
        Self::torus(n_dims, p)
    }

    pub fn refined(&self) -> Self {
        Self { points_per_axis: self.points_per_axis * 2, ..self.clone() }
    }

    pub fn h(&self, mu: usize) -> f64 {
        self.period[mu] / self.points_per_axis as f64
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.n_dims as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let p = self.points_per_axis;
        let mut out = vec![0; self.n_dims];
        for m in (0..self.n_dims).rev() {
            out[m] = idx % p;
            idx /= p;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &i| acc * self.points_per_axis + i)
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx).iter().enumerate().map(|(m, &i)| i as f64 * self.h(m)).collect()
    }

    /// Flat index of the neighbor `idx ± e_μ` with wraparound.
    pub fn shift(&self, idx: usize, mu: usize, forward: bool) -> usize {
        let mut m = self.multi_index(idx);
        let p = self.points_per_axis;
        m[mu] = if forward { (m[mu] + 1) % p } else { (m[mu] + p - 1) % p };
        self.flat_index(&m)
    }

    /// Evaluates `f` at every grid point in parallel; output order is the flat index order.
    pub fn map_points<T: Send>(&self, f: impl Fn(&[f64]) -> T + Sync) -> Vec<T> {
        (0..self.len()).into_par_iter().map(|i| f(&self.point(i))).collect()
    }

    pub fn try_map_points<T: Send>(&self, f: impl Fn(&[f64]) -> Result<T> + Sync) -> Result<Vec<T>> {
        self.map_points(f).into_iter().collect()
    }

    /// Midpoint-rule integral over the torus (exact for trigonometric polynomials
    /// whose frequencies stay below the Nyquist limit).
    pub fn integrate(&self, values: &[C64]) -> C64 {
        let cell: f64 = (0..self.n_dims).map(|m| self.h(m)).product();
        values.iter().sum::<C64>() * cell
    }

    /// CSV with coordinate columns followed by `re,im`.
    pub fn to_csv(&self, values: &[C64]) -> String {
        let mut s: String = (0..self.n_dims).map(|m| format!("x{m},")).collect();
        s.push_str("re,im\n");
        for (i, v) in values.iter().enumerate() {
            for x in self.point(i) {
                s.push_str(&format!("{x:.17e},"));
            }
            s.push_str(&format!("{:.17e},{:.17e}\n", v.re, v.im));
        }
        s
    }
}

/// `Σ_μ (v^μ(x+h e_μ) − v^μ(x−h e_μ)) / 2h` with periodic wraparound.
pub fn grid_divergence(v: &[Vec<C64>], grid: &Grid) -> Result<Vec<C64>> {
    if v.len() != grid.n_dims || v.iter().any(|c| c.len() != grid.len()) {
        return dim_err("flux components do not match the grid");
    }
    Ok((0..grid.len())
        .map(|i| {
            (0..grid.n_dims)
                .map(|m| {
                    let f = grid.shift(i, m, true);
                    let b = grid.shift(i, m, false);
                    (v[m][f] - v[m][b]) / (2.0 * grid.h(m))
                })
                .sum()
        })
        .collect())
}

/// Gauge potential `A_μ`, `μ = 0..N−1`, valued in `g`.
#[derive(Debug, Clone)]
pub struct GaugeConfig {
    pub algebra: LieAlgebraSpec,
    pub components: Vec<DerivedField>,
}

impl GaugeConfig {
    pub fn new(algebra: LieAlgebraSpec, components: Vec<DerivedField>) -> Result<Self> {
        let c = algebra.dim_c();
        let n = components.len();
        if n == 0 {
            return dim_err("gauge potential needs at least one component");
        }
        for a in &components {
            if a.shape() != MatrixShape::square(c) || a.n_dims() != n {
                return dim_err(format!("component {} on R^{}, expected {c}x{c} on R^{n}", a.shape(), a.n_dims()));
            }
        }
        Ok(Self { algebra, components })
    }

    pub fn zero(algebra: LieAlgebraSpec, n_dims: usize) -> Self {
        let c = algebra.dim_c();
        let comps = vec![DerivedField::zero(n_dims, MatrixShape::square(c)); n_dims];
        Self { algebra, components: comps }
    }

    pub fn constant(algebra: LieAlgebraSpec, values: &[CMatrix]) -> Result<Self> {
        let n = values.len();
        Self::new(algebra, values.iter().map(|v| DerivedField::constant(n, v.clone())).collect())
    }

    pub fn random(algebra: LieAlgebraSpec, seed: u64, n_dims: usize, max_mode: i64, amplitude: f64) -> Result<Self> {
        let c = algebra.dim_c();
        let comps = (0..n_dims)
            .map(|m| {
                random_smooth_field(seed.wrapping_mul(31).wrapping_add(m as u64), n_dims, MatrixShape::square(c), max_mode, amplitude, Some(&algebra))
                    .map(DerivedField::from)
            })
            .collect::<Result<_>>()?;
        Self::new(algebra, comps)
    }

    pub fn n_dims(&self) -> usize {
        self.components.len()
    }

    pub fn c(&self) -> usize {
        self.algebra.dim_c()
    }

    /// Jets of all components at `x`.
    pub fn jets(&self, x: &[f64], order: usize) -> Result<Vec<Jet>> {
        self.components.iter().map(|a| a.eval(x, order)).collect()
    }

    pub fn membership_defect(&self, points: &[Vec<f64>]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for x in points {
            for a in &self.components {
                worst = worst.max(self.algebra.membership_defect(&a.value(x)?)?);
            }
        }
        Ok(worst)
    }
}

/// Random `G_J`-valued field `Π_k exp(f_k(x) E_k)` over the algebra basis,
/// optionally right-multiplied by a constant group element.
pub fn random_group_field(
    group: &LieGroupSpec,
    seed: u64,
    n_dims: usize,
    max_mode: i64,
    amplitude: f64,
) -> Result<DerivedField> {
    let mut u: Option<DerivedField> = None;
    for (k, e) in group.algebra.basis().iter().enumerate() {
        let f = random_real_scalar(seed.wrapping_mul(7919).wrapping_add(k as u64), n_dims, max_mode, amplitude)?;
        let factor = DerivedField::exp_line(f, e.clone())?;
        u = Some(match u {
            None => factor,
            Some(prev) => prev.mul(&factor)?,
        });
    }
    let c0 = group.sample_group(seed ^ 0x5eed, 1.0)?;
    u.expect("non-empty basis").mul(&DerivedField::constant(n_dims, c0))
}

/// `ψU`.
pub fn gauge_transform_matter(psi: &DerivedField, u: &DerivedField) -> Result<DerivedField> {
    if u.shape().rows != u.shape().cols || psi.shape().cols != u.shape().rows {
        return dim_err(format!("ψ {} cannot be right-multiplied by U {}", psi.shape(), u.shape()));
    }
    psi.mul(u)
}

/// `A⊣U`: `Â_μ = U⁻¹A_μU − U⁻¹∂_μU`.
pub fn gauge_transform_gauge(a: &GaugeConfig, u: &DerivedField) -> Result<GaugeConfig> {
    if u.shape() != MatrixShape::square(a.c()) || u.n_dims() != a.n_dims() {
        return dim_err(format!("U {} does not act on {}x{} potentials", u.shape(), a.c(), a.c()));
    }
    let uinv = u.inv()?;
    let comps = a
        .components
        .iter()
        .enumerate()
        .map(|(m, am)| uinv.mul(am)?.mul(u)?.sub(&uinv.mul(&u.partial(m)?)?))
        .collect::<Result<_>>()?;
    GaugeConfig::new(a.algebra.clone(), comps)
}

/// `∂_μψ + ψA_μ`.
pub fn covariant_right(psi: &DerivedField, a: &GaugeConfig, mu: usize) -> Result<DerivedField> {
    if psi.shape().cols != a.c() {
        return dim_err(format!("ψ {} has the wrong column count for c = {}", psi.shape(), a.c()));
    }
    psi.partial(mu)?.add(&psi.mul(&a.components[mu])?)
}

/// `∇^A_μ u = ∂_μu − [A_μ, u]`.
pub fn covariant_ad(u: &DerivedField, a: &GaugeConfig, mu: usize) -> Result<DerivedField> {
    if u.shape() != MatrixShape::square(a.c()) {
        return dim_err(format!("∇ acts on {0}x{0} fields, got {1}", a.c(), u.shape()));
    }
    u.partial(mu)?.sub(&a.components[mu].comm(u)?)
}

/// `F_μν` for `μ < ν`, extended antisymmetrically.
#[derive(Debug, Clone)]
pub struct FieldStrength {
    n_dims: usize,
    c: usize,
    comps: Vec<DerivedField>,
}

/// Position of the pair `(μ, ν)`, `μ < ν`, in lexicographic order.
pub fn pair_index(n: usize, mu: usize, nu: usize) -> usize {
    debug_assert!(mu < nu && nu < n);
    mu * n - mu * (mu + 1) / 2 + (nu - mu - 1)
}

/// All pairs `μ < ν` in lexicographic order.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|m| (m + 1..n).map(move |v| (m, v))).collect()
}

impl FieldStrength {
    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    /// `F_μν` for any indices.
    pub fn get(&self, mu: usize, nu: usize) -> Result<DerivedField> {
        let n = self.n_dims;
        if mu >= n || nu >= n {
            return dim_err("field strength index out of range");
        }
        if mu == nu {
            return Ok(DerivedField::zero(n, MatrixShape::square(self.c)));
        }
        if mu < nu {
            Ok(self.comps[pair_index(n, mu, nu)].clone())
        } else {
            self.comps[pair_index(n, nu, mu)].neg()
        }
    }

    /// Values of `F_μν`, `μ < ν`, at `x` in [`pairs`] order.
    pub fn values(&self, x: &[f64]) -> Result<Vec<CMatrix>> {
        self.comps.iter().map(|f| f.value(x)).collect()
    }

    pub fn upper(&self) -> &[DerivedField] {
        &self.comps
    }
}

/// `F_μν = ∂_μA_ν − ∂_νA_μ − [A_μ, A_ν]`.
pub fn field_strength(a: &GaugeConfig) -> Result<FieldStrength> {
    let n = a.n_dims();
    let comps = pairs(n)
        .into_iter()
        .map(|(m, v)| {
            let am = &a.components[m];
            let av = &a.components[v];
            av.partial(m)?.sub(&am.partial(v)?)?.sub(&am.comm(av)?)
        })
        .collect::<Result<_>>()?;
    Ok(FieldStrength { n_dims: n, c: a.c(), comps })
}

/// Max over points and pairs of `‖F̂_μν − U⁻¹F_μνU‖_F` where `F̂` belongs to `A⊣U`.
pub fn check_covariance(a: &GaugeConfig, u: &DerivedField, points: &[Vec<f64>]) -> Result<f64> {
    let f = field_strength(a)?;
    let fhat = field_strength(&gauge_transform_gauge(a, u)?)?;
    let mut worst: f64 = 0.0;
    for x in points {
        let uv = u.value(x)?;
        let uinv = uv.inverse()?;
        for (fv, fh) in f.values(x)?.iter().zip(fhat.values(x)?) {
            worst = worst.max(fh.dist(&(&(&uinv * fv) * &uv)));
        }
    }
    Ok(worst)
}

/// Seeded uniform points in `[0, period)^N`.
pub fn random_points(seed: u64, n_dims: usize, count: usize, period: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..n_dims).map(|_| rng.gen_range(0.0..period)).collect()).collect()
}
