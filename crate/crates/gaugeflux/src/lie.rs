//! Real matrix Lie algebras `g ⊂ C^{c×c}`, the map `Q_J` and the real
//! orthogonal projection `Π`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::matcore::{mat_exp, rip, CMatrix, C64, I, ONE};

pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum AlgebraKind {
    /// `u(c)`, i.e. `g_J` with `J = I`.
    Unitary,
    /// `g_J = { X | X†J + JX = 0 }`.
    ByJ(CMatrix),
    /// All of `C^{c×c}` as a real vector space.
    FullAmbient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LieAlgebraSpec {
    dim_c: usize,
    kind: AlgebraKind,
    j: CMatrix,
    basis: Vec<CMatrix>,
}

/// JSON form used by configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AlgebraConfig {
    #[serde(rename = "unitary")]
    Unitary { c: usize },
    #[serde(rename = "byJ")]
    ByJ {
        #[serde(rename = "J")]
        j: serde_json::Value,
    },
    #[serde(rename = "fullAmbient")]
    FullAmbient { c: usize },
}

impl AlgebraConfig {
    pub fn build(&self) -> Result<LieAlgebraSpec> {
        match self {
            AlgebraConfig::Unitary { c } => LieAlgebraSpec::unitary(*c),
            AlgebraConfig::ByJ { j } => LieAlgebraSpec::by_j(crate::serial::matrix_from_json(j)?),
            AlgebraConfig::FullAmbient { c } => LieAlgebraSpec::full_ambient(*c),
        }
    }
}

/// Index `k` of the real basis of `C^{c×c}`: even `k` is a real unit, odd `k` an imaginary one.
fn ambient_unit(c: usize, k: usize) -> CMatrix {
    let mut m = CMatrix::zeros(c, c);
    let e = k / 2;
    m[(e / c, e % c)] = if k.is_multiple_of(2) { ONE } else { I };
    m
}

fn real_coords(m: &CMatrix) -> Vec<f64> {
    m.data().iter().flat_map(|z| [z.re, z.im]).collect()
}

fn from_real_coords(c: usize, v: &[f64]) -> CMatrix {
    let data = v.chunks(2).map(|p| C64::new(p[0], p[1])).collect();
    CMatrix::new(c, c, data).expect("coordinate length")
}

impl LieAlgebraSpec {
    pub fn unitary(c: usize) -> Result<Self> {
        let mut s = Self::solve_basis(CMatrix::identity(c))?;
        s.kind = AlgebraKind::Unitary;
        Ok(s)
    }

    pub fn by_j(j: CMatrix) -> Result<Self> {
        if !j.is_square() {
            return dim_err(format!("J must be square, got {}", j.shape()));
        }
        j.inverse()?;
        Self::solve_basis(j)
    }

    pub fn full_ambient(c: usize) -> Result<Self> {
        if c == 0 {
            return dim_err("c must be positive");
        }
        let basis = (0..2 * c * c).map(|k| ambient_unit(c, k)).collect();
        Ok(Self { dim_c: c, kind: AlgebraKind::FullAmbient, j: CMatrix::identity(c), basis })
    }

    /// Null space of the real-linear map `X ↦ X†J + JX`, orthonormal under `Re Tr[X†Y]`.
    fn solve_basis(j: CMatrix) -> Result<Self> {
        let c = j.rows();
        if c == 0 {
            return dim_err("c must be positive");
        }
        let n = 2 * c * c;
        let mut m = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let e = ambient_unit(c, k);
            let img = &(&e.dagger() * &j) + &(&j * &e);
            for (row, v) in real_coords(&img).into_iter().enumerate() {
                m[(row, k)] = v;
            }
        }
        // null space via the symmetric eigenproblem of MᵀM
        let gram = m.transpose() * &m;
        let eig = gram.symmetric_eigen();
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max).max(1.0);
        let mut basis = Vec::new();
        for (idx, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam.abs() <= 1e-12 * top {
                let v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
                basis.push(from_real_coords(c, &v));
            }
        }
        let basis = gram_schmidt(basis);
        Ok(Self { dim_c: c, kind: AlgebraKind::ByJ(j.clone()), j, basis })
    }

    pub fn dim_c(&self) -> usize {
        self.dim_c
    }

    pub fn kind(&self) -> &AlgebraKind {
        &self.kind
    }

    pub fn j(&self) -> &CMatrix {
        &self.j
    }

    pub fn basis(&self) -> &[CMatrix] {
        &self.basis
    }

    /// Real dimension of `g`.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    fn check_shape(&self, x: &CMatrix) -> Result<()> {
        if x.rows() != self.dim_c || x.cols() != self.dim_c {
            return dim_err(format!("expected {0}x{0}, got {1}", self.dim_c, x.shape()));
        }
        Ok(())
    }

    pub fn membership_defect(&self, x: &CMatrix) -> Result<f64> {
        self.check_shape(x)?;
        Ok(match self.kind {
            AlgebraKind::FullAmbient => 0.0,
            _ => (&(&x.dagger() * &self.j) + &(&self.j * x)).fro_norm(),
        })
    }

    pub fn is_in_algebra(&self, x: &CMatrix, tol: f64) -> Result<bool> {
        Ok(self.membership_defect(x)? <= tol)
    }

    /// `Π x = Σ_k Re Tr[E_k† x] E_k`.
    pub fn ortho_project(&self, x: &CMatrix) -> Result<CMatrix> {
        self.check_shape(x)?;
        Ok(self.project(x))
    }

    /// Panicking variant of [`Self::ortho_project`] for internal use.
    pub fn project(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim_c, self.dim_c);
        for e in &self.basis {
            out += &e.scale_re(rip(e, x));
        }
        out
    }

    pub fn coords(&self, x: &CMatrix) -> Vec<f64> {
        self.basis.iter().map(|e| rip(e, x)).collect()
    }

    pub fn from_coords(&self, coeffs: &[f64]) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim_c, self.dim_c);
        for (e, &a) in self.basis.iter().zip(coeffs) {
            out += &e.scale_re(a);
        }
        out
    }

    /// Largest residual `‖E† − Π E†‖` over the basis.
    pub fn dagger_residual(&self) -> f64 {
        self.basis
            .iter()
            .map(|e| {
                let d = e.dagger();
                d.dist(&self.project(&d))
            })
            .fold(0.0, f64::max)
    }

    pub fn dagger_stable(&self) -> bool {
        self.dagger_residual() <= 1e-10
    }

    /// `‖Π[E_a, E_b] − [E_a, E_b]‖` maximized over basis pairs.
    pub fn closure_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in &self.basis {
            for b in &self.basis {
                let cm = a.comm(b);
                worst = worst.max(cm.dist(&self.project(&cm)));
            }
        }
        worst
    }

    /// Random real combination of basis elements with coefficients in `[-1, 1]`.
    pub fn sample_algebra(&self, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> CMatrix {
        let coeffs: Vec<f64> = self.basis.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        self.from_coords(&coeffs)
    }
}

fn gram_schmidt(vs: Vec<CMatrix>) -> Vec<CMatrix> {
    let mut out: Vec<CMatrix> = Vec::new();
    for v in vs {
        let mut w = v;
        for _ in 0..2 {
            for e in &out {
                w -= &e.scale_re(rip(e, &w));
            }
        }
        let n = w.fro_norm();
        if n > 1e-8 {
            out.push(w.scale_re(1.0 / n));
        }
    }
    out
}

/// `Q_J x = ½(x − J⁻¹ x† J)`.
pub fn q_j(j: &CMatrix, x: &CMatrix) -> Result<CMatrix> {
    if !j.is_square() || x.shape() != j.shape() {
        return dim_err(format!("q_j with J {} and x {}", j.shape(), x.shape()));
    }
    let jinv = j.inverse()?;
    Ok((x - &(&(&jinv * &x.dagger()) * j)).scale_re(0.5))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LieGroupSpec {
    pub algebra: LieAlgebraSpec,
}

impl LieGroupSpec {
    pub fn new(algebra: LieAlgebraSpec) -> Result<Self> {
        if matches!(algebra.kind, AlgebraKind::FullAmbient) {
            return Err(Error::Argument("the full ambient algebra has no matching J-group".into()));
        }
        Ok(Self { algebra })
    }

    pub fn j(&self) -> &CMatrix {
        &self.algebra.j
    }

    /// `‖U†JU − J‖_F`.
    pub fn group_defect(&self, u: &CMatrix) -> f64 {
        (&(&u.dagger() * self.j()) * u).dist(self.j())
    }

    /// `U = exp(scale · X)` with `X` a random algebra element.
    pub fn sample_group(&self, seed: u64, scale: f64) -> Result<CMatrix> {
        if !(scale >= 0.0) {
            return Err(Error::Argument(format!("scale must be non-negative, got {scale}")));
        }
        let x = self.algebra.sample_algebra(seed);
        mat_exp(&x.scale_re(scale))
    }
}

/// Whether a fact is expected to hold (defect below the tolerance) or, as a
/// negative control, to fail (defect above it).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expectation {
    Holds,
    Fails,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionFact {
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
    pub expect: Expectation,
}

impl ProjectionFact {
    pub fn pass(&self) -> bool {
        match self.expect {
            Expectation::Holds => self.measured <= self.tolerance,
            Expectation::Fails => self.measured > self.tolerance,
        }
    }
}

pub const PROJECTION_TOL: f64 = 1e-10;
/// Lower bound a negative control has to exceed.
pub const CONTROL_FLOOR: f64 = 1e-6;

/// `U diag(d) U†` with `U` a random unitary.
fn hermitian_with_spectrum(d: &[f64], rng: &mut ChaCha8Rng) -> Result<CMatrix> {
    let c = d.len();
    let u = mat_exp(&LieAlgebraSpec::unitary(c)?.sample_with(rng).scale_re(2.0))?;
    Ok(&(&u * &CMatrix::diag_real(d)) * &u.dagger())
}

fn random_hermitian_j(c: usize, rng: &mut ChaCha8Rng) -> Result<CMatrix> {
    let d: Vec<f64> = (0..c)
        .map(|_| rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    hermitian_with_spectrum(&d, rng)
}

fn random_involution_j(c: usize, rng: &mut ChaCha8Rng) -> Result<CMatrix> {
    let mut d: Vec<f64> = (0..c).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    // keep at least one sign of each kind so g_J is not just u(c)
    d[0] = 1.0;
    d[c - 1] = -1.0;
    hermitian_with_spectrum(&d, rng)
}

fn random_general_j(c: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    &CMatrix::random(c, c, rng) + &CMatrix::identity(c).scale_re(c as f64)
}

fn modified_inner(j2: &CMatrix, x: &CMatrix, y: &CMatrix) -> f64 {
    (&(&x.dagger() * j2) * y).trace().re
}

/// Numerical check of the basic facts about `†`, `Π` and `Q_J` on `C^{c×c}`
/// seen as a real inner-product space, for `c = 2, 3, 4`.
///
/// Each "iff" fact comes with a negative control on a non-Hermitian `J`.
pub fn projection_facts(seed: u64, samples: usize) -> Result<Vec<ProjectionFact>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 9];
    // controls record their smallest defect over the trials
    let mut ctrl = [f64::INFINITY; 2];
    let bump = |w: &mut f64, v: f64| *w = w.max(v);
    for c in 2..=4 {
        for _ in 0..samples {
            let x = CMatrix::random(c, c, &mut rng);
            let y = CMatrix::random(c, c, &mut rng);
            let k = CMatrix::random(c, c, &mut rng);
            let l = CMatrix::random(c, c, &mut rng);

            let sym = (rip(&x.dagger(), &y) - rip(&x, &y.dagger())).abs();
            let orth = (rip(&x.dagger(), &y.dagger()) - rip(&x, &y)).abs();
            bump(&mut worst[0], sym.max(orth));

            let stable = [
                LieAlgebraSpec::unitary(c)?,
                LieAlgebraSpec::by_j(random_involution_j(c, &mut rng)?)?,
            ];
            for g in &stable {
                bump(&mut worst[1], g.project(&x.dagger()).dist(&g.project(&x).dagger()));
            }

            let kxl = &(&k * &x.dagger()) * &l;
            let lyk = &(&l * &y.dagger()) * &k;
            bump(&mut worst[2], (rip(&kxl, &y) - rip(&x, &lyk)).abs());

            let jg = random_general_j(c, &mut rng);
            let gj = LieAlgebraSpec::by_j(jg.clone())?;
            let z = gj.sample_with(&mut rng);
            bump(&mut worst[3], q_j(&jg, &z)?.dist(&z));

            let jh = random_hermitian_j(c, &mut rng)?;
            let gh = LieAlgebraSpec::by_j(jh.clone())?;
            let qx = q_j(&jh, &x)?;
            let idem = q_j(&jh, &qx)?.dist(&qx);
            bump(&mut worst[4], idem.max(gh.membership_defect(&qx)?));
            let qg = q_j(&jg, &x)?;
            ctrl[0] = ctrl[0].min(q_j(&jg, &qg)?.dist(&qg));

            let ji = random_involution_j(c, &mut rng)?;
            let gi = LieAlgebraSpec::by_j(ji.clone())?;
            let qi = q_j(&ji, &x)?;
            bump(&mut worst[5], qi.dist(&gi.project(&x)));
            let w = gi.sample_with(&mut rng);
            bump(&mut worst[6], rip(&(&x - &qi), &w).abs());

            let j2 = &jh * &jh;
            let qy = q_j(&jh, &y)?;
            let adj = (modified_inner(&j2, &qx, &y) - modified_inner(&j2, &x, &qy)).abs();
            let perp = modified_inner(&j2, &(&x - &qx), &gh.sample_with(&mut rng)).abs();
            bump(&mut worst[7], adj.max(perp));
            let jg2 = &jg * &jg;
            let qgy = q_j(&jg, &y)?;
            ctrl[1] = ctrl[1].min((modified_inner(&jg2, &qg, &y) - modified_inner(&jg2, &x, &qgy)).abs());
        }
    }
    let holds = |name, measured| ProjectionFact { name, measured, tolerance: PROJECTION_TOL, expect: Expectation::Holds };
    let fails = |name, measured| ProjectionFact { name, measured, tolerance: CONTROL_FLOOR, expect: Expectation::Fails };
    Ok(vec![
        holds("dagger-is-symmetric-and-orthogonal", worst[0]),
        holds("dagger-commutes-with-projection", worst[1]),
        holds("real-adjoint-of-kxl", worst[2]),
        holds("qj-fixes-its-algebra", worst[3]),
        holds("qj-projects-for-hermitian-j", worst[4]),
        fails("qj-not-idempotent-for-general-j", ctrl[0]),
        holds("qj-equals-projection-for-involutive-j", worst[5]),
        holds("qj-kernel-orthogonal-for-involutive-j", worst[6]),
        holds("qj-orthogonal-in-modified-product", worst[7]),
        fails("qj-not-orthogonal-in-modified-product-for-general-j", ctrl[1]),
    ])
}

/// True when every entry of `m` is real.
pub fn is_real(m: &CMatrix, tol: f64) -> bool {
    m.data().iter().all(|z| z.im.abs() <= tol)
}

pub fn hermitian_defect(m: &CMatrix) -> f64 {
    m.dist(&m.dagger())
}

pub fn anti_hermitian_defect(m: &CMatrix) -> f64 {
    (m + &m.dagger()).fro_norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::re_inner;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn basis_dimensions() {
        assert_eq!(LieAlgebraSpec::unitary(1).unwrap().dim(), 1);
        assert_eq!(LieAlgebraSpec::unitary(2).unwrap().dim(), 4);
        assert_eq!(LieAlgebraSpec::unitary(3).unwrap().dim(), 9);
        let j = CMatrix::diag_real(&[1.0, -1.0]);
        assert_eq!(LieAlgebraSpec::by_j(j).unwrap().dim(), 4);
        assert_eq!(LieAlgebraSpec::full_ambient(2).unwrap().dim(), 8);
    }

    #[test]
    fn basis_is_orthonormal_closed_and_in_algebra() {
        let mut r = rng(2);
        let specs = vec![
            LieAlgebraSpec::unitary(3).unwrap(),
            LieAlgebraSpec::by_j(CMatrix::diag_real(&[1.0, -1.0])).unwrap(),
            LieAlgebraSpec::by_j(CMatrix::random(3, 3, &mut r)).unwrap(),
        ];
        for s in &specs {
            for (a, ea) in s.basis().iter().enumerate() {
                assert!(s.membership_defect(ea).unwrap() < 1e-12);
                for (b, eb) in s.basis().iter().enumerate() {
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((re_inner(ea, eb).unwrap() - want).abs() < 1e-12);
                }
            }
            assert!(s.closure_residual() < 1e-10);
        }
    }

    #[test]
    fn membership_examples() {
        let u2 = LieAlgebraSpec::unitary(2).unwrap();
        assert!(u2.is_in_algebra(&CMatrix::identity(2).scale(I), 1e-12).unwrap());
        assert!(!u2.is_in_algebra(&CMatrix::identity(2), 1e-12).unwrap());
        assert!(u2.is_in_algebra(&CMatrix::identity(3), 1e-12).is_err());
        let gj = LieAlgebraSpec::by_j(CMatrix::diag_real(&[1.0, -1.0])).unwrap();
        let x = gj.sample_algebra(8);
        assert!(gj.is_in_algebra(&x, 1e-12).unwrap());
    }

    #[test]
    fn unitary_projection_is_anti_hermitian_part() {
        let u3 = LieAlgebraSpec::unitary(3).unwrap();
        let x = CMatrix::random(3, 3, &mut rng(4));
        let want = (&x - &x.dagger()).scale_re(0.5);
        assert!(u3.project(&x).dist(&want) < 1e-12);
        assert!(q_j(&CMatrix::identity(3), &x).unwrap().dist(&want) < 1e-12);
    }

    #[test]
    fn dagger_stability() {
        assert!(LieAlgebraSpec::unitary(2).unwrap().dagger_stable());
        assert!(LieAlgebraSpec::by_j(CMatrix::diag_real(&[1.0, -1.0])).unwrap().dagger_stable());
        // a non-normal J gives an algebra that is not closed under †
        let j = CMatrix::from_real_rows(&[&[1.0, 3.0], &[0.0, 1.0]]);
        let s = LieAlgebraSpec::by_j(j).unwrap();
        assert!(!s.dagger_stable());
    }

    #[test]
    fn group_samples() {
        let g = LieGroupSpec::new(LieAlgebraSpec::unitary(2).unwrap()).unwrap();
        assert_eq!(g.sample_group(3, 0.0).unwrap(), CMatrix::identity(2));
        for seed in 0..10 {
            assert!(g.group_defect(&g.sample_group(seed, 2.0).unwrap()) < 1e-11);
        }
        let g = LieGroupSpec::new(LieAlgebraSpec::by_j(CMatrix::diag_real(&[1.0, -1.0])).unwrap())
            .unwrap();
        for seed in 0..10 {
            assert!(g.group_defect(&g.sample_group(seed, 1.0).unwrap()) < 1e-11);
        }
    }

    #[test]
    fn projection_facts_hold() {
        let facts = projection_facts(11, 30).unwrap();
        assert_eq!(facts.len(), 10);
        for f in &facts {
            assert!(f.pass(), "{f:?}");
        }
    }

    #[test]
    fn config_roundtrip() {
        let cfg: AlgebraConfig = serde_json::from_str(r#"{"kind":"unitary","c":2}"#).unwrap();
        assert_eq!(cfg.build().unwrap().dim(), 4);
        let cfg: AlgebraConfig =
            serde_json::from_str(r#"{"kind":"byJ","J":[[1,0],[0,-1]]}"#).unwrap();
        assert_eq!(cfg.build().unwrap().dim(), 4);
    }
}
