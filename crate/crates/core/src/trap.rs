//! Standing-wave trap description and the quantities derived from it.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_non_negative, ensure_positive, Error, Result};
use crate::units::PhysConstants;

/// Conversion factor between the 1/e time of the Ramsey envelope and the
/// gamma-distribution time constant `K`.
pub const T2_STAR_PER_K: f64 = 1.67;

/// Radial beam waist used when none is configured, m.
pub const DEFAULT_WAIST: f64 = 20e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    /// Potential depth U₀, J.
    pub depth: f64,
    /// Trap laser wavelength, m.
    pub wavelength: f64,
    /// Effective (signed) detuning of the trap laser, rad/s.
    pub effective_detuning: f64,
    /// Ensemble temperature, K.
    pub temperature: f64,
    /// 1/e² intensity radius of the trap beams, m.
    pub waist: f64,
    pub constants: PhysConstants,
}

impl TrapConfig {
    /// Caesium in a 1064 nm standing wave, Δ/2π = −64 THz.
    pub fn cesium_1064(depth: f64, temperature: f64) -> Self {
        TrapConfig {
            depth,
            wavelength: 1064e-9,
            effective_detuning: -TAU * 64e12,
            temperature,
            waist: DEFAULT_WAIST,
            constants: PhysConstants::default(),
        }
    }

    /// Depth zero is accepted as the untrapped limit; everything else must
    /// be strictly positive and finite.
    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        ensure_non_negative("depth_U0", self.depth)?;
        ensure_positive("wavelength", self.wavelength)?;
        ensure_positive("temperature_T", self.temperature)?;
        ensure_positive("waist", self.waist)?;
        ensure_finite("effective_detuning_Delta", self.effective_detuning)?;
        if self.effective_detuning == 0.0 {
            return Err(Error::validation("effective_detuning_Delta", "must be non-zero"));
        }
        Ok(())
    }

    pub fn wavenumber(&self) -> f64 {
        TAU / self.wavelength
    }

    pub fn with_depth(&self, depth: f64) -> Self {
        TrapConfig { depth, ..*self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedTrapParams {
    /// η = ω_hfs/Δ, carries the sign of Δ.
    pub eta: f64,
    /// Differential light shift at the bottom of a well, rad/s.
    pub delta0: f64,
    /// Time constant of the light-shift distribution, s. Infinite when the
    /// trap depth is zero.
    pub k_time: f64,
    /// Reversible dephasing time, `1.67·K`.
    pub t2_star: f64,
    pub omega_axial: f64,
    pub omega_radial: f64,
    pub depth: f64,
    pub hbar: f64,
}

pub fn derive_trap_params(trap: &TrapConfig) -> Result<DerivedTrapParams> {
    trap.validate()?;
    let c = &trap.constants;
    let eta = c.omega_hfs / trap.effective_detuning;
    let delta0 = eta * trap.depth / c.hbar;
    let k_time = if trap.depth == 0.0 { f64::INFINITY } else { 2.0 * c.hbar / (eta.abs() * c.k_b * trap.temperature) };
    let omega_axial = trap.wavenumber() * (2.0 * trap.depth / c.atom_mass).sqrt();
    let omega_radial = (4.0 * trap.depth / (c.atom_mass * trap.waist * trap.waist)).sqrt();
    Ok(DerivedTrapParams {
        eta,
        delta0,
        k_time,
        t2_star: T2_STAR_PER_K * k_time,
        omega_axial,
        omega_radial,
        depth: trap.depth,
        hbar: c.hbar,
    })
}

/// Mean differential light shift of an atom with energy `energy` (J above
/// the well bottom), harmonic approximation: `δ₀(1 − E/2U₀)`. The shift
/// relaxes toward zero as the atom samples weaker intensity.
pub fn mean_lightshift(energy: f64, params: &DerivedTrapParams) -> Result<f64> {
    ensure_non_negative("energy", energy)?;
    Ok(lightshift_unchecked(energy, params))
}

#[inline]
pub(crate) fn lightshift_unchecked(energy: f64, params: &DerivedTrapParams) -> f64 {
    params.delta0 - params.eta * energy / (2.0 * params.hbar)
}

/// Temperature that produces a given reversible dephasing time.
pub fn temperature_for_t2_star(t2_star: f64, trap: &TrapConfig) -> Result<f64> {
    ensure_positive("t2_star", t2_star)?;
    let c = &trap.constants;
    let eta = (c.omega_hfs / trap.effective_detuning).abs();
    let k_time = t2_star / T2_STAR_PER_K;
    Ok(2.0 * c.hbar / (eta * c.k_b * k_time))
}
