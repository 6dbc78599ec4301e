//! Dense complex matrices and the standalone trace identities.
//!
//! Everything in the crate is built from [`CMatrix`]: field values, gauge
//! components, derivative slots, fixed coefficient matrices. Sizes never
//! exceed a handful of rows, so storage is a plain row-major `Vec`.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

pub type C64 = Complex64;

pub const I: C64 = C64::new(0.0, 1.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatrixShape {
    pub rows: usize,
    pub cols: usize,
}

impl MatrixShape {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return dim_err(format!("empty shape {rows}x{cols}"));
        }
        Ok(Self { rows, cols })
    }

    pub fn square(n: usize) -> Self {
        Self { rows: n, cols: n }
    }

    pub fn transposed(self) -> Self {
        Self { rows: self.cols, cols: self.rows }
    }

    pub fn len(self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for MatrixShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.6e}{:+.6e}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return dim_err(format!("empty shape {rows}x{cols}"));
        }
        if data.len() != rows * cols {
            return dim_err(format!("{} entries for a {rows}x{cols} matrix", data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix shape");
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn zeros_like(shape: MatrixShape) -> Self {
        Self::zeros(shape.rows, shape.cols)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn scalar(z: C64) -> Self {
        Self { rows: 1, cols: 1, data: vec![z] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data).expect("from_fn shape")
    }

    /// Builds from nested rows; all rows must have the same length.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return dim_err("ragged rows");
        }
        Self::new(r, c, rows.iter().flatten().copied().collect())
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|row| row.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows).expect("from_real_rows")
    }

    pub fn diag(entries: &[C64]) -> Self {
        let n = entries.len();
        Self::from_fn(n, n, |i, j| if i == j { entries[i] } else { ZERO })
    }

    pub fn diag_real(entries: &[f64]) -> Self {
        let e: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::diag(&e)
    }

    /// Entries uniform in the unit square of the complex plane, centered at 0.
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        Self::from_fn(rows, cols, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let m = Self::random(n, n, rng);
        (&m + &m.dagger()).scale_re(0.5)
    }

    pub fn random_anti_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let m = Self::random(n, n, rng);
        (&m - &m.dagger()).scale_re(0.5)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> MatrixShape {
        MatrixShape { rows: self.rows, cols: self.cols }
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    /// Value of a 1×1 matrix.
    pub fn as_scalar(&self) -> C64 {
        assert_eq!(self.data.len(), 1, "as_scalar on a {} matrix", self.shape());
        self.data[0]
    }

    pub fn dagger(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| f(z)).collect() }
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn trace(&self) -> C64 {
        assert!(self.is_square(), "trace of a non-square {} matrix", self.shape());
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    pub fn fro_norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn fro_norm(&self) -> f64 {
        self.fro_norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Induced 1-norm (max column sum).
    pub fn norm1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn dist(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "dist shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return dim_err(format!("cannot multiply {} by {}", self.shape(), other.shape()));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return dim_err(format!("cannot add {} and {}", self.shape(), other.shape()));
        }
        Ok(self.zip_with(other, |a, b| a + b))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Unchecked-shape commutator for internal use; panics on mismatch.
    pub fn comm(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    /// Tr[self · other] without forming the product.
    pub fn trace_mul(&self, other: &Self) -> C64 {
        assert!(
            self.cols == other.rows && self.rows == other.cols,
            "trace_mul shape mismatch {} vs {}",
            self.shape(),
            other.shape()
        );
        let mut s = ZERO;
        for i in 0..self.rows {
            for k in 0..self.cols {
                s += self.data[i * self.cols + k] * other.data[k * other.cols + i];
            }
        }
        s
    }

    pub fn kron(&self, other: &Self) -> Self {
        let (r2, c2) = (other.rows, other.cols);
        Self::from_fn(self.rows * r2, self.cols * c2, |i, j| {
            self[(i / r2, j / c2)] * other[(i % r2, j % c2)]
        })
    }

    /// Column-major vectorization, matching `vec(AXB) = (Bᵀ ⊗ A) vec(X)`.
    pub fn vec_col(&self) -> Vec<C64> {
        let mut v = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                v.push(self[(i, j)]);
            }
        }
        v
    }

    pub fn from_vec_col(rows: usize, cols: usize, v: &[C64]) -> Result<Self> {
        if v.len() != rows * cols {
            return dim_err("vector length does not match shape");
        }
        Ok(Self::from_fn(rows, cols, |i, j| v[j * rows + i]))
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols, "block out of range");
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn vstack(parts: &[CMatrix]) -> Result<Self> {
        let cols = parts.first().map(|p| p.cols).ok_or_else(|| Error::Dimension("empty stack".into()))?;
        if parts.iter().any(|p| p.cols != cols) {
            return dim_err("vstack column mismatch");
        }
        let rows = parts.iter().map(|p| p.rows).sum();
        let data = parts.iter().flat_map(|p| p.data.iter().copied()).collect();
        Self::new(rows, cols, data)
    }

    pub fn hstack(parts: &[CMatrix]) -> Result<Self> {
        let t: Vec<CMatrix> = parts.iter().map(CMatrix::transpose).collect();
        Ok(Self::vstack(&t)?.transpose())
    }

    /// LU with partial pivoting; returns (lu, pivots, sign).
    fn lu(&self) -> Result<(Vec<C64>, Vec<usize>)> {
        if !self.is_square() {
            return dim_err(format!("LU of non-square {}", self.shape()));
        }
        let n = self.rows;
        let mut a = self.data.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| a[x * n + k].norm().total_cmp(&a[y * n + k].norm()))
                .unwrap();
            if a[p * n + k].norm() <= 1e-14 * scale {
                return Err(Error::Singular(format!("pivot {k} vanishes")));
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                piv.swap(k, p);
            }
            let d = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / d;
                a[i * n + k] = f;
                for j in k + 1..n {
                    let t = a[k * n + j];
                    a[i * n + j] -= f * t;
                }
            }
        }
        Ok((a, piv))
    }

    /// Solves `self · X = rhs`.
    pub fn solve(&self, rhs: &Self) -> Result<Self> {
        let (lu, piv) = self.lu()?;
        let n = self.rows;
        if rhs.rows != n {
            return dim_err("solve rhs rows");
        }
        let m = rhs.cols;
        let mut x = Self::from_fn(n, m, |i, j| rhs[(piv[i], j)]);
        for j in 0..m {
            for i in 0..n {
                let mut s = x[(i, j)];
                for k in 0..i {
                    s -= lu[i * n + k] * x[(k, j)];
                }
                x[(i, j)] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, j)];
                for k in i + 1..n {
                    s -= lu[i * n + k] * x[(k, j)];
                }
                x[(i, j)] = s / lu[i * n + i];
            }
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<Self> {
        self.solve(&Self::identity(self.rows))
    }

    /// 1-norm condition number estimate via the explicit inverse.
    pub fn condition(&self) -> Result<f64> {
        let inv = self.inverse()?;
        Ok(self.norm1() * inv.norm1())
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $op:tt) => {
        impl $tr<&CMatrix> for &CMatrix {
            type Output = CMatrix;
            fn $m(self, rhs: &CMatrix) -> CMatrix {
                assert_eq!(self.shape(), rhs.shape(), "elementwise shape mismatch");
                self.zip_with(rhs, |a, b| a $op b)
            }
        }
        impl $tr<CMatrix> for CMatrix {
            type Output = CMatrix;
            fn $m(self, rhs: CMatrix) -> CMatrix {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&CMatrix> for CMatrix {
            type Output = CMatrix;
            fn $m(self, rhs: &CMatrix) -> CMatrix {
                (&self).$m(rhs)
            }
        }
        impl $tr<CMatrix> for &CMatrix {
            type Output = CMatrix;
            fn $m(self, rhs: CMatrix) -> CMatrix {
                self.$m(&rhs)
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);

impl Mul<&CMatrix> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.try_mul(rhs).unwrap_or_else(|e| panic!("{e}"))
    }
}

impl Mul<CMatrix> for CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: CMatrix) -> CMatrix {
        &self * &rhs
    }
}

impl Mul<&CMatrix> for CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        &self * rhs
    }
}

impl Mul<CMatrix> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: CMatrix) -> CMatrix {
        self * &rhs
    }
}

impl Mul<C64> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, s: C64) -> CMatrix {
        self.scale(s)
    }
}

impl Mul<C64> for CMatrix {
    type Output = CMatrix;
    fn mul(self, s: C64) -> CMatrix {
        self.scale(s)
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.map(|z| -z)
    }
}

impl Neg for CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        -&self
    }
}

impl AddAssign<&CMatrix> for CMatrix {
    fn add_assign(&mut self, rhs: &CMatrix) {
        assert_eq!(self.shape(), rhs.shape(), "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl SubAssign<&CMatrix> for CMatrix {
    fn sub_assign(&mut self, rhs: &CMatrix) {
        assert_eq!(self.shape(), rhs.shape(), "sub_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.dagger()
}

/// `ab − ba` for square matrices of equal shape.
pub fn commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if !a.is_square() || a.shape() != b.shape() {
        return dim_err(format!("commutator of {} and {}", a.shape(), b.shape()));
    }
    Ok(a.comm(b))
}

/// `Re Tr[x† y]`.
pub fn re_inner(x: &CMatrix, y: &CMatrix) -> Result<f64> {
    if x.shape() != y.shape() {
        return dim_err(format!("re_inner of {} and {}", x.shape(), y.shape()));
    }
    Ok(x.data.iter().zip(&y.data).map(|(a, b)| (a.conj() * b).re).sum())
}

/// Panicking variant of [`re_inner`] for internal contractions.
pub fn rip(x: &CMatrix, y: &CMatrix) -> f64 {
    re_inner(x, y).unwrap_or_else(|e| panic!("{e}"))
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential, Padé(13) with scaling and squaring.
pub fn mat_exp(a: &CMatrix) -> Result<CMatrix> {
    if !a.is_square() {
        return dim_err(format!("exponential of non-square {}", a.shape()));
    }
    if !a.is_finite() {
        return Err(Error::Evaluation("non-finite matrix in mat_exp".into()));
    }
    let n = a.rows();
    let norm = a.norm1();
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a.scale_re(0.5f64.powi(s));
    let b = &PADE13;
    let id = CMatrix::identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let lin = |c6: f64, c4: f64, c2: f64, c0: f64| {
        let mut m = a6.scale_re(c6) + a4.scale_re(c4) + a2.scale_re(c2);
        if c0 != 0.0 {
            m += &id.scale_re(c0);
        }
        m
    };
    let u_inner = &a6 * &lin(b[13], b[11], b[9], 0.0) + lin(b[7], b[5], b[3], b[1]);
    let u = &a * &u_inner;
    let v = &a6 * &lin(b[12], b[10], b[8], 0.0) + lin(b[6], b[4], b[2], b[0]);
    let mut r = (&v - &u).solve(&(&v + &u))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// The three trace identities that close the Noether proofs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceIdentity {
    /// `−Tr([M,G][B,N]) + Tr([N,G][B,M]) = Tr(G[B,[M,N]])`, inputs `[G, B, M, N]`.
    CommutatorPair,
    /// `Tr[XZ + YZ†] = Re Tr[(X†+Y)†Z] − i Re Tr[((X†−Y)/i)†Z]`, inputs `[X, Y, Z]`.
    RealImagSplit,
    /// Twelve-term expansion of `Tr([M,G][K,B]) − Tr([K,G][M,B]) + Tr(G[[M,K],B])`, inputs `[M, G, K, B]`.
    TwelveTerm,
}

impl TraceIdentity {
    pub const ALL: [TraceIdentity; 3] =
        [TraceIdentity::CommutatorPair, TraceIdentity::RealImagSplit, TraceIdentity::TwelveTerm];

    pub fn arity(self) -> usize {
        match self {
            TraceIdentity::RealImagSplit => 3,
            _ => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TraceIdentity::CommutatorPair => "commutator-pair",
            TraceIdentity::RealImagSplit => "real-imag-split",
            TraceIdentity::TwelveTerm => "twelve-term",
        }
    }
}

fn tr3(a: &CMatrix, b: &CMatrix, c: &CMatrix, d: &CMatrix) -> C64 {
    (a * b).trace_mul(&(c * d))
}

/// `|LHS − RHS|` of the selected identity. For [`TraceIdentity::TwelveTerm`]
/// both the expanded sum and its commutator form must vanish; the larger
/// modulus is returned.
pub fn trace_identity_defect(kind: TraceIdentity, inputs: &[CMatrix]) -> Result<f64> {
    if inputs.len() != kind.arity() {
        return Err(Error::Argument(format!(
            "{} takes {} matrices, got {}",
            kind.name(),
            kind.arity(),
            inputs.len()
        )));
    }
    let shape = inputs[0].shape();
    if !inputs.iter().all(|m| m.is_square() && m.shape() == shape) {
        return dim_err("trace identity inputs must be square with equal shapes");
    }
    Ok(match kind {
        TraceIdentity::CommutatorPair => {
            let (g, b, m, n) = (&inputs[0], &inputs[1], &inputs[2], &inputs[3]);
            let lhs = -m.comm(g).trace_mul(&b.comm(n)) + n.comm(g).trace_mul(&b.comm(m));
            let rhs = g.trace_mul(&b.comm(&m.comm(n)));
            (lhs - rhs).norm()
        }
        TraceIdentity::RealImagSplit => {
            let (x, y, z) = (&inputs[0], &inputs[1], &inputs[2]);
            let lhs = x.trace_mul(z) + y.trace_mul(&z.dagger());
            let xd = x.dagger();
            let plus = &xd + y;
            let minus = (&xd - y).scale(-I);
            let rhs = C64::new(rip(&plus, z), 0.0) - I * rip(&minus, z);
            (lhs - rhs).norm()
        }
        TraceIdentity::TwelveTerm => {
            let (m, g, k, b) = (&inputs[0], &inputs[1], &inputs[2], &inputs[3]);
            let twelve = tr3(m, g, k, b) - tr3(g, m, k, b) - tr3(m, g, b, k) + tr3(g, m, b, k)
                - tr3(k, g, m, b)
                + tr3(g, k, m, b)
                + tr3(k, g, b, m)
                - tr3(g, k, b, m)
                + tr3(g, m, k, b)
                - tr3(g, k, m, b)
                - tr3(g, b, m, k)
                + tr3(g, b, k, m);
            let compact = m.comm(g).trace_mul(&k.comm(b)) - k.comm(g).trace_mul(&m.comm(b))
                + g.trace_mul(&m.comm(k).comm(b));
            twelve.norm().max(compact.norm())
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn dagger_of_diag() {
        let d = CMatrix::diag(&[I, -I]);
        assert_eq!(d.dagger(), CMatrix::diag(&[-I, I]));
        assert_eq!(CMatrix::identity(2).dagger(), CMatrix::identity(2));
    }

    #[test]
    fn pauli_commutator() {
        let x = CMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let y = CMatrix::from_rows(&[vec![ZERO, -I], vec![I, ZERO]]).unwrap();
        let z = CMatrix::diag_real(&[1.0, -1.0]).scale(2.0 * I);
        assert!(commutator(&x, &y).unwrap().dist(&z) < 1e-15);
        assert!(commutator(&x, &CMatrix::identity(3)).is_err());
    }

    #[test]
    fn re_inner_examples() {
        let id = CMatrix::identity(2);
        assert_eq!(re_inner(&id, &id).unwrap(), 2.0);
        assert_eq!(re_inner(&id.scale(I), &id).unwrap(), 0.0);
        let x = CMatrix::random(3, 2, &mut rng(1));
        assert!((re_inner(&x, &x).unwrap() - x.fro_norm_sq()).abs() < 1e-14);
    }

    #[test]
    fn exp_basics() {
        let z = CMatrix::zeros(3, 3);
        assert_eq!(mat_exp(&z).unwrap(), CMatrix::identity(3));
        let nil = CMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(mat_exp(&nil).unwrap().dist(&(&CMatrix::identity(2) + &nil)) < 1e-15);
        assert!(mat_exp(&CMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn exp_matches_diagonal_and_is_unitary() {
        let d = CMatrix::diag(&[C64::new(1.5, 0.3), C64::new(-2.0, 4.0), C64::new(0.0, -7.0)]);
        let e = mat_exp(&d).unwrap();
        for i in 0..3 {
            let want = d[(i, i)].exp();
            assert!((e[(i, i)] - want).norm() <= 1e-13 * want.norm());
        }
        let a = CMatrix::random_anti_hermitian(4, &mut rng(7)).scale_re(4.0);
        let u = mat_exp(&a).unwrap();
        assert!((&u.dagger() * &u).dist(&CMatrix::identity(4)) < 1e-12);
    }

    #[test]
    fn exp_of_commuting_sum_factorizes() {
        // exp(aX) exp(bX) = exp((a+b)X)
        let x = CMatrix::random(3, 3, &mut rng(3));
        let e1 = mat_exp(&x.scale_re(0.7)).unwrap();
        let e2 = mat_exp(&x.scale_re(1.6)).unwrap();
        let e12 = mat_exp(&x.scale_re(2.3)).unwrap();
        assert!((&e1 * &e2).dist(&e12) <= 1e-12 * e12.fro_norm());
    }

    #[test]
    fn inverse_roundtrip() {
        let m = CMatrix::random(4, 4, &mut rng(11));
        let inv = m.inverse().unwrap();
        assert!((&m * &inv).dist(&CMatrix::identity(4)) < 1e-12);
        let sing = CMatrix::from_real_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(sing.inverse(), Err(Error::Singular(_))));
    }

    #[test]
    fn kron_vec_rule() {
        let mut r = rng(5);
        let a = CMatrix::random(2, 3, &mut r);
        let x = CMatrix::random(3, 2, &mut r);
        let b = CMatrix::random(2, 4, &mut r);
        let lhs = (&(&a * &x) * &b).vec_col();
        let k = b.transpose().kron(&a);
        let rhs = &k * &CMatrix::new(6, 1, x.vec_col()).unwrap();
        for (p, q) in lhs.iter().zip(rhs.data()) {
            assert!((p - q).norm() < 1e-13);
        }
    }

    #[test]
    fn identities_trivial_inputs() {
        for kind in TraceIdentity::ALL {
            let zeros = vec![CMatrix::zeros(3, 3); kind.arity()];
            assert_eq!(trace_identity_defect(kind, &zeros).unwrap(), 0.0);
            let ids = vec![CMatrix::identity(3); kind.arity()];
            assert!(trace_identity_defect(kind, &ids).unwrap() < 1e-14);
            assert!(matches!(
                trace_identity_defect(kind, &ids[1..]),
                Err(Error::Argument(_))
            ));
        }
    }

    #[test]
    fn identities_random() {
        let mut r = rng(99);
        for kind in TraceIdentity::ALL {
            let ins: Vec<_> = (0..kind.arity()).map(|_| CMatrix::random(3, 3, &mut r)).collect();
            assert!(trace_identity_defect(kind, &ins).unwrap() < 1e-12);
        }
    }

    #[test]
    fn twelve_term_catches_a_wrong_sign() {
        // flipping B's role in one commutator breaks the identity
        let mut r = rng(4);
        let m = CMatrix::random(3, 3, &mut r);
        let g = CMatrix::random(3, 3, &mut r);
        let k = CMatrix::random(3, 3, &mut r);
        let b = CMatrix::random(3, 3, &mut r);
        let wrong = m.comm(&g).trace_mul(&k.comm(&b)) + k.comm(&g).trace_mul(&m.comm(&b))
            + g.trace_mul(&m.comm(&k).comm(&b));
        assert!(wrong.norm() > 1e-3);
    }
}
