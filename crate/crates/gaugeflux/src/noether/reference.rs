//! Seeded flux setups: a 2+1 dimensional Dirac system (`r = c = 2`) with
//! `u(2)` potentials and a positive quadratic gauge Lagrangian, plus on-shell
//! variants built from the plane-wave oracles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fields::random_smooth_field;
use crate::gauge_lagrangian::{minkowski_lagrangian, quadratic_gauge_lagrangian, QuadraticCoeffs};
use crate::lagrangian::{dirac, pauli};
use crate::matcore::{MatrixShape, I};
use crate::oracles::{maxwell_plane_wave, superpose, FirstOrderSystem};

pub const MASS: f64 = 0.7;

pub fn gammas() -> Vec<CMatrix> {
    let [sx, sy, _] = pauli();
    vec![CMatrix::identity(2), sx, sy]
}

/// `M = i·0.7·σ_z`.
pub fn mass_matrix() -> CMatrix {
    pauli()[2].scale(I * MASS)
}

pub fn dirac_lagrangian() -> Result<ProtoLagrangian> {
    dirac(gammas(), mass_matrix(), 2)
}

/// `Tr Ĝ h F F` with a random real symmetric `h` shifted to be positive.
pub fn quadratic_gauge(seed: u64) -> Result<GaugeProtoLagrangian> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = CMatrix::random(3, 3, &mut rng);
    let h: Vec<Vec<C64>> = (0..3)
        .map(|a| (0..3).map(|b| C64::new(raw[(a, b)].re + raw[(b, a)].re + if a == b { 3.0 } else { 0.0 }, 0.0)).collect())
        .collect();
    Ok(quadratic_gauge_lagrangian(QuadraticCoeffs::new(3, h)?, 2))
}

/// Spatial rotation generator in the `(x, y)` plane.
pub fn rotation() -> Vec<Vec<f64>> {
    vec![vec![0.0, 0.0, 0.0], vec![0.0, 0.0, -1.0], vec![0.0, 1.0, 0.0]]
}

/// The matching spinor rotation `K = iσ_z/2`.
pub fn spin_generator() -> LinearMap {
    LinearMap::Left(pauli()[2].scale(I * 0.5))
}

pub fn random_matter(seed: u64) -> Result<DerivedField> {
    Ok(random_smooth_field(seed, 3, MatrixShape::square(2), 1, 0.8, None)?.into())
}

fn u2() -> Result<LieAlgebraSpec> {
    LieAlgebraSpec::unitary(2)
}

/// Flux of the given kind on random (non-solution) fields.
pub fn offshell_flux(kind: FluxKind, seed: u64) -> Result<FluxField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi = random_matter(seed)?;
    let a = GaugeConfig::random(u2()?, seed + 50, 3, 1, 0.6)?;
    let b = u2()?.sample_algebra(seed + 7);
    let right = |rng: &mut ChaCha8Rng| LinearMap::Right(CMatrix::random_hermitian(2, rng).scale(I));
    match kind {
        FluxKind::Current => {
            let gj = LieAlgebraSpec::by_j(pauli()[2].clone())?;
            let a = GaugeConfig::random(gj, seed + 50, 3, 1, 0.6)?;
            flux_current(&psi, &a, &CMatrix::identity(2), &gammas(), &mass_matrix())
        }
        FluxKind::Translation => flux_translation(&dirac_lagrangian()?, &psi, right(&mut rng), vec![0.3, -1.1, 0.4]),
        FluxKind::Dilation => flux_dilation(&dirac_lagrangian()?, &psi, spin_generator(), rotation()),
        FluxKind::Internal => flux_internal(&dirac_lagrangian()?, &psi, right(&mut rng)),
        FluxKind::GaugeTranslation => flux_gauge_translation(&quadratic_gauge(seed)?, &a, vec![0.5, 0.2, -0.9]),
        FluxKind::GaugeDilation => flux_gauge_dilation_unchecked(&quadratic_gauge(seed)?, &a, rotation()),
        FluxKind::GaugeInternal => flux_gauge_internal(&quadratic_gauge(seed)?, &a, &b),
        FluxKind::Combined => flux_combined(&dirac_lagrangian()?, &quadratic_gauge(seed)?, &psi, &a, &b),
    }
}

/// Superposition of three free Dirac plane waves.
pub fn dirac_solution(seed: u64) -> Result<DerivedField> {
    let sys = FirstOrderSystem::new(gammas(), mass_matrix(), vec![CMatrix::zeros(2, 2); 3])?;
    let parts = [[1.0, 0.0], [0.0, -1.0], [1.0, 1.0]]
        .iter()
        .enumerate()
        .map(|(i, kp)| Ok(sys.plane_wave(kp, 0, seed + i as u64)?.derived()))
        .collect::<Result<Vec<_>>>()?;
    superpose(&parts)
}

fn matter_flux(kind: FluxKind, psi: &DerivedField) -> Result<Option<FluxField>> {
    let l = dirac_lagrangian()?;
    Ok(Some(match kind {
        FluxKind::Current => {
            flux_current(psi, &GaugeConfig::zero(u2()?, 3), &CMatrix::identity(2), &gammas(), &mass_matrix())?
        }
        FluxKind::Translation => flux_translation(&l, psi, LinearMap::Zero, vec![1.0, 0.5, -0.5])?,
        FluxKind::Internal => flux_internal(&l, psi, LinearMap::Right(CMatrix::identity(2).scale(I)))?,
        FluxKind::Dilation => flux_dilation(&l, psi, spin_generator(), rotation())?,
        _ => return Ok(None),
    }))
}

fn maxwell_flux(kind: FluxKind, a: &GaugeConfig) -> Result<Option<FluxField>> {
    let g = minkowski_lagrangian(1);
    Ok(Some(match kind {
        FluxKind::GaugeTranslation => flux_gauge_translation(&g, a, vec![1.0, -0.5, 0.25, 0.5])?,
        _ => return Ok(None),
    }))
}

/// Flux of the given kind on an exact solution, when the reference systems
/// have one: free Dirac waves for the matter kinds, a Maxwell wave for
/// gauge translations.
pub fn onshell_flux(kind: FluxKind, seed: u64) -> Result<Option<FluxField>> {
    match kind {
        FluxKind::GaugeTranslation => maxwell_flux(kind, &maxwell_plane_wave([1.0, -1.0, 1.0], seed)?.to_gauge_config()?),
        _ => matter_flux(kind, &dirac_solution(seed)?),
    }
}

/// The same flux as [`onshell_flux`] evaluated on random fields instead.
pub fn onshell_control(kind: FluxKind, seed: u64) -> Result<Option<FluxField>> {
    match kind {
        FluxKind::GaugeTranslation => maxwell_flux(kind, &GaugeConfig::random(LieAlgebraSpec::unitary(1)?, seed, 4, 1, 0.6)?),
        _ => matter_flux(kind, &random_matter(seed)?),
    }
}
