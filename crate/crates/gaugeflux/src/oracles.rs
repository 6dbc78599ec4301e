//! Exact solutions: plane waves of constant-coefficient first-order systems,
//! Maxwell plane waves in potential form, and spin-½ Schrödinger waves.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, Schur, SymmetricEigen, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Error, Result};
use crate::fields::{random_points, DerivedField, SmoothField};
use crate::gauge_lagrangian::MaxwellPotentials;
use crate::lie::hermitian_defect;
use crate::matcore::{CMatrix, MatrixShape, C64, I, ZERO};

/// Largest residual accepted from a constructed solution, relative to its amplitude.
pub const ORACLE_TOL: f64 = 1e-9;

/// `c·e^{ik·x}` as a one-mode Fourier field. Each axis with `k_μ ≠ 0` gets the
/// period `2π/|k_μ|`, so the field is exactly periodic for any real `k`.
pub fn exp_wave(k: &[f64], c: CMatrix) -> Result<SmoothField> {
    let period = k.iter().map(|&w| if w == 0.0 { TAU } else { TAU / w.abs() }).collect();
    let mode = k.iter().map(|&w| if w == 0.0 { 0 } else if w > 0.0 { 1 } else { -1 }).collect();
    SmoothField::plane_wave(period, mode, c)
}

/// Sum of fields, possibly with different periods.
pub fn superpose(parts: &[DerivedField]) -> Result<DerivedField> {
    let first = parts.first().ok_or_else(|| Error::Argument("nothing to superpose".into()))?;
    parts[1..].iter().try_fold(first.clone(), |acc, p| acc.add(p))
}

/// `ψ(x) = ψ₀e^{ik·x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneWaveSolution {
    pub k: Vec<f64>,
    pub psi0: CMatrix,
    pub field: SmoothField,
}

impl PlaneWaveSolution {
    pub fn derived(&self) -> DerivedField {
        self.field.clone().into()
    }
}

fn to_na(m: &CMatrix) -> DMatrix<C64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

/// `Σ Γ^μ(∂_μψ + ψA_μ) + Mψ = 0` with constant `Γ^μ`, `M` (r×r) and `A_μ` (c×c).
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderSystem {
    pub gammas: Vec<CMatrix>,
    pub m: CMatrix,
    pub a: Vec<CMatrix>,
}

impl FirstOrderSystem {
    pub fn new(gammas: Vec<CMatrix>, m: CMatrix, a: Vec<CMatrix>) -> Result<Self> {
        let r = m.rows();
        if gammas.is_empty() || gammas.len() != a.len() {
            return dim_err("need one Γ^μ and one A_μ per axis");
        }
        if gammas.iter().chain([&m]).any(|g| g.shape() != MatrixShape::square(r)) {
            return dim_err("Γ^μ and M must be r×r");
        }
        let c = a[0].rows();
        if a.iter().any(|x| x.shape() != MatrixShape::square(c)) {
            return dim_err("A_μ must be c×c");
        }
        Ok(FirstOrderSystem { gammas, m, a })
    }

    pub fn n_dims(&self) -> usize {
        self.gammas.len()
    }

    pub fn shape(&self) -> MatrixShape {
        MatrixShape { rows: self.m.rows(), cols: self.a[0].rows() }
    }

    fn apply(&self, k: &[f64], x: &CMatrix) -> CMatrix {
        let mut out = &self.m * x;
        for (mu, (g, a)) in self.gammas.iter().zip(&self.a).enumerate() {
            out += &(g * &(&x.scale(I * k[mu]) + &(x * a)));
        }
        out
    }

    /// The vectorized symbol `T(k)` acting on column-major `vec ψ₀`.
    pub fn symbol(&self, k: &[f64]) -> CMatrix {
        self.linear_symbol(|x| self.apply(k, x))
    }

    fn linear_symbol(&self, f: impl Fn(&CMatrix) -> CMatrix) -> CMatrix {
        let MatrixShape { rows: r, cols: c } = self.shape();
        let n = r * c;
        let mut t = CMatrix::zeros(n, n);
        for col in 0..n {
            let mut e = CMatrix::zeros(r, c);
            e[(col % r, col / r)] = C64::new(1.0, 0.0);
            for (row, v) in f(&e).vec_col().into_iter().enumerate() {
                t[(row, col)] = v;
            }
        }
        t
    }

    /// The residual at `x` of a field.
    pub fn residual(&self, psi: &DerivedField, x: &[f64]) -> Result<CMatrix> {
        let j = psi.eval(x, 1)?;
        let mut out = &self.m * &j.value;
        for (mu, (g, a)) in self.gammas.iter().zip(&self.a).enumerate() {
            out += &(g * &(&j.d1[mu] + &(&j.value * a)));
        }
        Ok(out)
    }

    /// Real wavenumbers along `pivot` for which `T(k)` is singular, the other
    /// components fixed to `k_partial`, in increasing order.
    pub fn real_branches(&self, k_partial: &[f64], pivot: usize) -> Result<Vec<f64>> {
        let n = self.n_dims();
        if pivot >= n || k_partial.len() + 1 != n {
            return dim_err(format!("need {} transverse wavenumbers and a pivot below {n}", n - 1));
        }
        let gp = &self.gammas[pivot];
        let gp_inv = gp.inverse().map_err(|_| Error::Singular(format!("Γ^{pivot} is not invertible")))?;
        let k0 = full_k(k_partial, pivot, 0.0);
        // T(k) = ik_p (I ⊗ Γ^p) + T₀, so ik_p is an eigenvalue of −(I ⊗ Γ^p)⁻¹T₀
        let t0 = self.symbol(&k0);
        let lift = self.linear_symbol(|x| &gp_inv * x);
        let comp = (&lift * &t0).scale_re(-1.0);
        let eig = eigenvalues(&comp)?;
        let mut ks: Vec<f64> = eig
            .iter()
            .filter(|l| l.re.abs() <= 1e-9 * (1.0 + l.norm()))
            .map(|l| l.im)
            .collect();
        ks.sort_by(f64::total_cmp);
        ks.dedup_by(|a, b| (*a - *b).abs() <= 1e-8 * (1.0 + b.abs()));
        Ok(ks)
    }

    /// A plane-wave solution; the branch and the combination of kernel vectors are
    /// chosen from `seed`.
    pub fn plane_wave(&self, k_partial: &[f64], pivot: usize, seed: u64) -> Result<PlaneWaveSolution> {
        let ks = self.real_branches(k_partial, pivot)?;
        if ks.is_empty() {
            return Err(Error::Evaluation(format!("no real wavenumber along axis {pivot} for k = {k_partial:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = full_k(k_partial, pivot, ks[rng.gen_range(0..ks.len())]);
        let t = self.symbol(&k);
        let svd = SVD::new(to_na(&t), false, true);
        let v_t = svd.v_t.as_ref().expect("requested");
        let scale = 1.0 + t.max_abs();
        let mut v = vec![ZERO; t.cols()];
        for (i, s) in svd.singular_values.iter().enumerate() {
            if *s <= 1e-8 * scale {
                let w = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                for (j, vj) in v.iter_mut().enumerate() {
                    *vj += w * v_t[(i, j)].conj();
                }
            }
        }
        let MatrixShape { rows: r, cols: c } = self.shape();
        let mut psi0 = CMatrix::from_vec_col(r, c, &v)?;
        let norm = psi0.fro_norm();
        if norm == 0.0 {
            return Err(Error::Evaluation("symbol has no kernel at the computed wavenumber".into()));
        }
        psi0 = psi0.scale_re(1.0 / norm);
        let field = exp_wave(&k, psi0.clone())?;
        let sol = PlaneWaveSolution { k, psi0, field };
        let d = sol.derived();
        for x in random_points(seed, self.n_dims(), 50, TAU) {
            let res = self.residual(&d, &x)?.fro_norm();
            if res > ORACLE_TOL {
                return Err(Error::Evaluation(format!("plane wave leaves residual {res:.3e}")));
            }
        }
        Ok(sol)
    }

    /// The same system seen through a constant `U`: `A_μ ↦ U⁻¹A_μU`.
    pub fn transported(&self, u: &CMatrix) -> Result<Self> {
        let ui = u.inverse()?;
        FirstOrderSystem::new(self.gammas.clone(), self.m.clone(), self.a.iter().map(|a| &(&ui * a) * u).collect())
    }
}

fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    let n = m.rows();
    if (0..n).all(|i| (0..i).all(|j| m[(i, j)].norm() == 0.0)) {
        return Ok((0..n).map(|i| m[(i, i)]).collect());
    }
    let schur = Schur::try_new(to_na(m), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Evaluation("Schur iteration did not converge".into()))?;
    let ev = schur.eigenvalues().ok_or_else(|| Error::Evaluation("Schur form is not triangular".into()))?;
    Ok(ev.iter().copied().collect())
}

fn full_k(k_partial: &[f64], pivot: usize, kp: f64) -> Vec<f64> {
    let mut k = k_partial.to_vec();
    k.insert(pivot, kp);
    k
}

/// Plane wave of `Σ Γ^μ(∂_μψ + ψA_μ) + Mψ = 0` along the first axis.
pub fn dirac_plane_wave(gammas: Vec<CMatrix>, m: CMatrix, a: Vec<CMatrix>, k_partial: &[f64], seed: u64) -> Result<PlaneWaveSolution> {
    FirstOrderSystem::new(gammas, m, a)?.plane_wave(k_partial, 0, seed)
}

/// `Φ = 0`, `A⃗ = ε cos(k·x − |k|t)` with `ε ⊥ k`, on `(t, x, y, z)`.
pub fn maxwell_plane_wave_with(k3: [f64; 3], eps: [f64; 3]) -> Result<MaxwellPotentials> {
    let kn = k3.iter().map(|v| v * v).sum::<f64>().sqrt();
    if kn == 0.0 {
        return Err(Error::Argument("zero wavevector".into()));
    }
    let en = eps.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dot: f64 = k3.iter().zip(&eps).map(|(a, b)| a * b).sum();
    if en == 0.0 || dot.abs() > 1e-12 * kn * en {
        return Err(Error::Argument(format!("polarization {eps:?} is not transverse to {k3:?}")));
    }
    let kk = [-kn, k3[0], k3[1], k3[2]];
    let minus: Vec<f64> = kk.iter().map(|v| -v).collect();
    let comp = |e: f64| -> Result<DerivedField> {
        let half = CMatrix::scalar(C64::new(0.5 * e, 0.0));
        Ok(exp_wave(&kk, half.clone())?.add(&exp_wave(&minus, half)?)?.into())
    };
    MaxwellPotentials::new(
        DerivedField::zero(4, MatrixShape::square(1)),
        [comp(eps[0])?, comp(eps[1])?, comp(eps[2])?],
    )
}

/// [`maxwell_plane_wave_with`] with a unit polarization drawn from `seed`.
pub fn maxwell_plane_wave(k3: [f64; 3], seed: u64) -> Result<MaxwellPotentials> {
    let kn = k3.iter().map(|v| v * v).sum::<f64>().sqrt();
    if kn == 0.0 {
        return Err(Error::Argument("zero wavevector".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let r: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let proj: f64 = r.iter().zip(&k3).map(|(a, b)| a * b).sum::<f64>() / (kn * kn);
        let e: Vec<f64> = (0..3).map(|i| r[i] - proj * k3[i]).collect();
        let en = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        if en > 0.1 {
            return maxwell_plane_wave_with(k3, [e[0] / en, e[1] / en, e[2] / en]);
        }
    }
}

/// Sum of two potentials, component-wise.
pub fn add_potentials(p: &MaxwellPotentials, q: &MaxwellPotentials) -> Result<MaxwellPotentials> {
    MaxwellPotentials::new(
        p.phi.add(&q.phi)?,
        [p.avec[0].add(&q.avec[0])?, p.avec[1].add(&q.avec[1])?, p.avec[2].add(&q.avec[2])?],
    )
}

/// A spin-½ Schrödinger wave and its frequency.
#[derive(Debug, Clone)]
pub struct SchrodingerWave {
    pub omega: f64,
    pub v: CMatrix,
    pub field: SmoothField,
}

/// Solutions `v e^{i(k·x + ωt)}` of `iψ_t + Δψ + Vψ = 0`, where
/// `(V − |k|²)v = ωv`; one per eigenvalue, in increasing `ω`.
pub fn schrodinger_solution(v: &CMatrix, k: &[f64]) -> Result<Vec<SchrodingerWave>> {
    if v.shape() != MatrixShape::square(2) || hermitian_defect(v) > 1e-12 {
        return Err(Error::Validation("V must be Hermitian 2×2".into()));
    }
    let k2: f64 = k.iter().map(|w| w * w).sum();
    let eig = SymmetricEigen::new(to_na(v));
    let mut order: Vec<usize> = (0..2).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    order
        .into_iter()
        .map(|i| {
            let omega = eig.eigenvalues[i] - k2;
            let col = CMatrix::from_fn(2, 1, |r, _| eig.eigenvectors[(r, i)]);
            let mut wk = vec![omega];
            wk.extend_from_slice(k);
            Ok(SchrodingerWave { omega, field: exp_wave(&wk, col.clone())?, v: col })
        })
        .collect()
}
