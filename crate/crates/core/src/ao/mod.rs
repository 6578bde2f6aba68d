//! Adaptive optics: beacon phase sensing, unwrapping, modal (Zernike)
//! reconstruction and conjugate correction, with an optional delay line.

mod unwrap;

pub use unwrap::{branch_cuts, find_residues, unwrap, wrap, Residue, UnwrapDiagnostics, Unwrapped};

use std::collections::VecDeque;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, PhaseMap};
use crate::grid::Grid;
use crate::modes::ZernikeBasis;
use crate::scalar::{lit, wide, Real};


#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AoMode {
    None,
    Realistic,
    Ideal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AoConfig {
    pub mode: AoMode,
    /// Highest Noll index corrected in realistic mode.
    pub order: usize,
    pub unwrap: bool,
    /// Correction aperture radius (m).
    pub radius: f64,
    /// Beacon amplitude, relative to its peak in the aperture, below which
    /// the sensor reports no phase.
    pub min_amplitude: f64,
    /// Wavefront camera frame rate (Hz).
    pub camera_rate: f64,
    /// Loop bandwidth `f_AO` (Hz); defaults to a fifth of the camera rate.
    pub bandwidth: Option<f64>,
    /// Apply the correction measured `delay_frames` camera frames earlier.
    pub delay: bool,
    /// Scales the delay in units of `τ_AO`.
    pub delay_multiplier: usize,
}

impl Default for AoConfig {
    fn default() -> Self {
        Self {
            mode: AoMode::Realistic,
            order: 30,
            unwrap: true,
            radius: 0.1,
            min_amplitude: 0.01,
            camera_rate: 1000.0,
            bandwidth: None,
            delay: false,
            delay_multiplier: 1,
        }
    }
}

impl AoConfig {
    pub fn with_mode(mut self, mode: AoMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth.unwrap_or(self.camera_rate / 5.0)
    }

    /// `τ_AO = 1/f_AO`.
    pub fn tau(&self) -> f64 {
        1.0 / self.bandwidth()
    }

    /// Camera frames between measurement and correction.
    pub fn delay_frames(&self) -> usize {
        if !self.delay {
            return 0;
        }
        (self.camera_rate / self.bandwidth()).round() as usize * self.delay_multiplier
    }

    pub fn frame_period(&self) -> f64 {
        1.0 / self.camera_rate
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::Config("AO order must be at least 1".into()));
        }
        if !(self.radius > 0.0) {
            return Err(Error::Config(format!("AO radius must be positive, got {}", self.radius)));
        }
        if !(0.0..1.0).contains(&self.min_amplitude) {
            return Err(Error::Config(format!("min_amplitude must lie in [0, 1), got {}", self.min_amplitude)));
        }
        if !(self.camera_rate > 0.0) || !(self.bandwidth() > 0.0) {
            return Err(Error::Config("camera rate and AO bandwidth must be positive".into()));
        }
        if self.bandwidth() > self.camera_rate {
            return Err(Error::Config("AO bandwidth cannot exceed the camera rate".into()));
        }
        if self.delay_multiplier == 0 {
            return Err(Error::Config("delay multiplier must be at least 1".into()));
        }
        Ok(())
    }
}

/// Greenwood frequency `0.43 v / r0` (Hz).
pub fn greenwood_frequency(wind_speed: f64, r0: f64) -> f64 {
    0.43 * wind_speed / r0
}

/// One beacon frame as seen by the wavefront sensor.
#[derive(Clone, Debug)]
pub struct BeaconMeasurement<T: Real> {
    pub frame: u64,
    /// Perturbed phase, in `(−π, π]`.
    pub wrapped: PhaseMap<T>,
    pub amplitude: Vec<T>,
    pub unwrapped: Option<PhaseMap<T>>,
    /// Aperture pixels with enough light to be sensed.
    pub valid: Vec<bool>,
    pub diagnostics: Option<UnwrapDiagnostics>,
    /// Zernike coefficients `a_n` (wrapped) or `A_n` (unwrapped).
    pub coefficients: Vec<T>,
}

/// Per-pixel phase in `(−π, π]` and amplitude of `field`.
///
/// With a `reference` (the same beam propagated through vacuum) the phase is
/// that of `E · conj(E_ref)`, i.e. only the turbulent perturbation.
pub fn beacon_phase<T: Real>(
    field: &ComplexField<T>,
    reference: Option<&ComplexField<T>>,
) -> Result<(PhaseMap<T>, Vec<T>)> {
    let values = match reference {
        Some(r) => {
            field.grid.ensure_same(&r.grid)?;
            field.data.iter().zip(&r.data).map(|(e, v)| wrap((e * v.conj()).arg())).collect()
        }
        None => field.data.iter().map(|e| wrap(e.arg())).collect(),
    };
    Ok((PhaseMap { grid: field.grid, values }, field.amplitude()))
}

/// Disk-average overlap of `phase` with each basis mode.
pub fn project<T: Real>(phase: &PhaseMap<T>, basis: &ZernikeBasis<T>) -> Result<Vec<T>> {
    phase.grid.ensure_same(basis.grid())?;
    let samples: Vec<T> = basis.indices().iter().map(|&i| phase.values[i]).collect();
    Ok((1..=basis.order()).map(|j| basis.disk_average(&samples, basis.mode(j))).collect())
}

/// `Σ c_n Z_n` on the aperture, zero outside.
pub fn reconstruct<T: Real>(coeffs: &[T], basis: &ZernikeBasis<T>) -> Result<PhaseMap<T>> {
    if coeffs.len() != basis.order() {
        return Err(Error::Config(format!(
            "{} coefficients for a basis of {} modes",
            coeffs.len(),
            basis.order()
        )));
    }
    let mut map = PhaseMap::zeros(*basis.grid());
    for (j, &c) in coeffs.iter().enumerate() {
        if c == T::zero() {
            continue;
        }
        for (&idx, &z) in basis.indices().iter().zip(basis.mode(j + 1)) {
            map.values[idx] = map.values[idx] + c * z;
        }
    }
    Ok(map)
}

/// Multiplies by `exp(−i φ̃)`.
pub fn correct<T: Real>(signal: &ComplexField<T>, estimate: &PhaseMap<T>) -> Result<ComplexField<T>> {
    signal.grid.ensure_same(&estimate.grid)?;
    let mut out = signal.clone();
    for (v, &p) in out.data.iter_mut().zip(&estimate.values) {
        if p != T::zero() {
            *v = *v * Complex::new(p.cos(), -p.sin());
        }
    }
    Ok(out)
}

/// Sensor and reconstructor for one AO configuration on one grid.
#[derive(Clone, Debug)]
pub struct AoSystem<T: Real> {
    config: AoConfig,
    grid: Grid<T>,
    basis: Option<ZernikeBasis<T>>,
    aperture: Vec<bool>,
}

impl<T: Real> AoSystem<T> {
    pub fn new(config: AoConfig, grid: &Grid<T>) -> Result<Self> {
        config.validate()?;
        let radius = lit::<T>(config.radius);
        if radius > grid.half_extent() {
            return Err(Error::Config(format!(
                "AO radius {} m exceeds the grid half-width {} m",
                config.radius,
                grid.half_extent()
            )));
        }
        let basis = match config.mode {
            AoMode::Realistic => Some(ZernikeBasis::new(config.order, grid, radius)?),
            _ => None,
        };
        let mut aperture = vec![false; grid.len()];
        for i in grid.disk_indices(radius) {
            aperture[i] = true;
        }
        Ok(Self { config, grid: *grid, basis, aperture })
    }

    pub fn config(&self) -> &AoConfig {
        &self.config
    }

    pub fn basis(&self) -> Option<&ZernikeBasis<T>> {
        self.basis.as_ref()
    }

    /// Senses the beacon: phase relative to `reference`, validity by
    /// amplitude, unwrapping over the valid aperture pixels when configured,
    /// and (realistic mode) Zernike coefficients of the sensed phase, taken
    /// as zero where nothing was sensed.
    pub fn measure(
        &self,
        beacon: &ComplexField<T>,
        reference: Option<&ComplexField<T>>,
        frame: u64,
    ) -> Result<BeaconMeasurement<T>> {
        self.grid.ensure_same(&beacon.grid)?;
        let (wrapped, amplitude) = beacon_phase(beacon, reference)?;
        let peak = self
            .aperture
            .iter()
            .zip(&amplitude)
            .filter(|(&a, _)| a)
            .map(|(_, &v)| wide(v))
            .fold(0.0, f64::max);
        let floor = self.config.min_amplitude * peak;
        let valid: Vec<bool> = self
            .aperture
            .iter()
            .zip(&amplitude)
            .map(|(&a, &v)| a && wide(v) > floor)
            .collect();
        let (unwrapped, diagnostics) = if self.config.unwrap && self.config.mode != AoMode::None {
            let u = unwrap(&wrapped.values, &amplitude, &valid, self.grid.n());
            (Some(PhaseMap { grid: self.grid, values: u.phase }), Some(u.diagnostics))
        } else {
            (None, None)
        };
        let coefficients = match &self.basis {
            Some(b) => {
                let src = unwrapped.as_ref().unwrap_or(&wrapped);
                let sensed = PhaseMap {
                    grid: self.grid,
                    values: src.values.iter().zip(&valid).map(|(&p, &ok)| if ok { p } else { T::zero() }).collect(),
                };
                project(&sensed, b)?
            }
            None => Vec::new(),
        };
        Ok(BeaconMeasurement { frame, wrapped, amplitude, unwrapped, valid, diagnostics, coefficients })
    }

    /// Wavefront estimate `φ̃` the mirror would apply for `m`.
    pub fn estimate(&self, m: &BeaconMeasurement<T>) -> Result<PhaseMap<T>> {
        match self.config.mode {
            AoMode::None => Ok(PhaseMap::zeros(self.grid)),
            AoMode::Realistic => reconstruct(&m.coefficients, self.basis.as_ref().expect("realistic mode has a basis")),
            AoMode::Ideal => {
                let src = m.unwrapped.as_ref().unwrap_or(&m.wrapped);
                let mut map = PhaseMap::zeros(self.grid);
                for (i, &inside) in self.aperture.iter().enumerate() {
                    if inside {
                        map.values[i] = src.values[i];
                    }
                }
                Ok(map)
            }
        }
    }
}

/// Correction history: estimates are pushed per frame and read back
/// `delay` frames later.
#[derive(Clone, Debug)]
pub struct DelayLine<T: Real> {
    delay: u64,
    entries: VecDeque<(u64, PhaseMap<T>)>,
}

/// Correction to apply now, and whether the history was too short.
#[derive(Clone, Debug)]
pub struct Delayed<T: Real> {
    pub estimate: PhaseMap<T>,
    pub cold_start: bool,
}

impl<T: Real> DelayLine<T> {
    pub fn new(delay: usize) -> Self {
        Self { delay: delay as u64, entries: VecDeque::new() }
    }

    pub fn delay(&self) -> usize {
        self.delay as usize
    }

    pub fn push(&mut self, frame: u64, estimate: PhaseMap<T>) {
        self.entries.push_back((frame, estimate));
    }

    /// Estimate measured at `now − delay`; flat with `cold_start` set if it
    /// was never recorded.
    pub fn delayed_phase(&mut self, now: u64, grid: Grid<T>) -> Delayed<T> {
        let wanted = now.checked_sub(self.delay);
        while let Some((f, _)) = self.entries.front() {
            match wanted {
                Some(w) if *f < w => {
                    self.entries.pop_front();
                }
                _ => break,
            }
        }
        match wanted.and_then(|w| self.entries.iter().find(|(f, _)| *f == w)) {
            Some((_, e)) => Delayed { estimate: e.clone(), cold_start: false },
            None => Delayed { estimate: PhaseMap::zeros(grid), cold_start: true },
        }
    }
}
