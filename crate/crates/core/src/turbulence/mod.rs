//! Von Kármán phase screens that stream indefinitely under frozen-flow wind.
//!
//! An initial screen is synthesized in the Fourier domain (with subharmonic
//! low-frequency compensation); afterwards every wind step appends fresh
//! rows or columns drawn from their conditional Gaussian law given the
//! trailing edge of the screen, and discards the same number at the far edge.

mod extension;
mod screen;
mod synthesis;

pub use extension::{extension_matrices, ExtensionGeometry, ExtensionMatrices};
pub use screen::{PhaseScreen, ScreenDump, StreamKey, WindStep};
pub use synthesis::{initial_screen, synthesize_phase, SUBHARMONIC_LEVELS, SYNTHESIS_PADDING};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{bessel_k, gamma};

/// Statistics and wind of a single phase screen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreenParams {
    /// Fried parameter of this screen (m).
    pub r0: f64,
    /// Outer scale (m).
    pub outer_scale: f64,
    /// Wind speed (m/s).
    pub wind_speed: f64,
    /// Wind direction (rad); the horizontal component is `v sin θ`, the vertical `v cos θ`.
    pub wind_direction: f64,
    /// Rows/columns of trailing screen data conditioning each extension.
    pub n_col: usize,
}

impl ScreenParams {
    pub fn new(r0: f64, outer_scale: f64) -> Self {
        Self {
            r0,
            outer_scale,
            wind_speed: 0.0,
            wind_direction: std::f64::consts::FRAC_PI_2,
            n_col: 2,
        }
    }

    pub fn with_wind(mut self, speed: f64, direction: f64) -> Self {
        self.wind_speed = speed;
        self.wind_direction = direction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r0 > 0.0) || !(self.outer_scale > 0.0) {
            return Err(Error::Config(format!(
                "screen needs r0 > 0 and L0 > 0 (r0 = {}, L0 = {})",
                self.r0, self.outer_scale
            )));
        }
        if !(self.wind_speed >= 0.0) || !self.wind_direction.is_finite() {
            return Err(Error::Config(format!("invalid wind speed {}", self.wind_speed)));
        }
        if !(2..=8).contains(&self.n_col) {
            return Err(Error::Config(format!("n_col must be in 2..=8, got {}", self.n_col)));
        }
        Ok(())
    }
}

/// Whole-path atmosphere: strength, outer scale, wind, optics and layering.
///
/// Exactly one of `cn2` / `r0` sets the strength; `r0` is the plane-wave
/// Fried parameter of the full path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TurbulenceParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cn2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    pub outer_scale: f64,
    pub wind_speed: f64,
    pub wind_direction: f64,
    pub wavelength: f64,
    pub path_length: f64,
    pub layers: usize,
    pub n_col: usize,
}

/// Optics and wind of the reference link; strength left unset.
impl Default for TurbulenceParams {
    fn default() -> Self {
        Self {
            cn2: None,
            r0: None,
            outer_scale: 10.0,
            wind_speed: 1.0,
            wind_direction: std::f64::consts::FRAC_PI_2,
            wavelength: 632e-9,
            path_length: 1000.0,
            layers: 10,
            n_col: 2,
        }
    }
}

impl TurbulenceParams {
    pub fn wavenumber(&self) -> f64 {
        std::f64::consts::TAU / self.wavelength
    }

    /// Plane-wave Fried parameter of the whole path, resolving `cn2` if needed.
    pub fn total_r0(&self) -> Result<f64> {
        let k = self.wavenumber();
        match (self.cn2, self.r0) {
            (Some(cn2), None) => Ok((0.423 * k * k * cn2 * self.path_length).powf(-3.0 / 5.0)),
            (None, Some(r0)) => Ok(r0),
            _ => Err(Error::Config("give exactly one of cn2 and r0".into())),
        }
    }

    pub fn total_cn2(&self) -> Result<f64> {
        let k = self.wavenumber();
        match (self.cn2, self.r0) {
            (Some(cn2), None) => Ok(cn2),
            (None, Some(r0)) => Ok(r0.powf(-5.0 / 3.0) / (0.423 * k * k * self.path_length)),
            _ => Err(Error::Config("give exactly one of cn2 and r0".into())),
        }
    }

    /// Plane-wave Rytov variance `1.23 Cn² k^{7/6} z^{11/6}` of the whole path.
    pub fn rytov_variance(&self) -> Result<f64> {
        Ok(rytov(self.total_cn2()?, self.wavenumber(), self.path_length))
    }

    /// Rytov variance accumulated over one slab of length `z / layers`.
    pub fn step_rytov_variance(&self) -> Result<f64> {
        Ok(rytov(self.total_cn2()?, self.wavenumber(), self.path_length / self.layers as f64))
    }

    /// Equal-strength split: `Σ r0_i^{-5/3} = r0^{-5/3}`.
    pub fn layer_r0(&self) -> Result<f64> {
        Ok(self.total_r0()? * (self.layers as f64).powf(3.0 / 5.0))
    }

    pub fn screen_params(&self) -> Result<ScreenParams> {
        let p = ScreenParams {
            r0: self.layer_r0()?,
            outer_scale: self.outer_scale,
            wind_speed: self.wind_speed,
            wind_direction: self.wind_direction,
            n_col: self.n_col,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.total_r0()?;
        if let Some(c) = self.cn2 {
            if !(c > 0.0) {
                return Err(Error::Config(format!("cn2 must be positive, got {c}")));
            }
        }
        if let Some(r) = self.r0 {
            if !(r > 0.0) {
                return Err(Error::Config(format!("r0 must be positive, got {r}")));
            }
        }
        if self.layers == 0 {
            return Err(Error::Config("need at least one turbulent layer".into()));
        }
        if !(self.wavelength > 0.0) || !(self.path_length > 0.0) {
            return Err(Error::Config("wavelength and path length must be positive".into()));
        }
        let step = self.step_rytov_variance()?;
        if !(step < MAX_STEP_RYTOV) {
            return Err(Error::Config(format!(
                "per-slab Rytov variance {step:.3} ≥ {MAX_STEP_RYTOV}; use more layers"
            )));
        }
        self.screen_params().map(|_| ())
    }
}

/// Largest Rytov variance allowed within one split-step slab.
pub const MAX_STEP_RYTOV: f64 = 0.1;

fn rytov(cn2: f64, k: f64, z: f64) -> f64 {
    1.23 * cn2 * k.powf(7.0 / 6.0) * z.powf(11.0 / 6.0)
}

fn covariance_prefactor() -> f64 {
    gamma(11.0 / 6.0) / (2f64.powf(5.0 / 6.0) * std::f64::consts::PI.powf(8.0 / 3.0))
        * (24.0 / 5.0 * gamma(6.0 / 5.0)).powf(5.0 / 6.0)
}

/// Von Kármán phase covariance `C_φ(r)` in rad².
///
/// At `r = 0` the small-argument limit `x^{5/6} K_{5/6}(x) → 2^{-1/6} Γ(5/6)`
/// is used.
pub fn phase_covariance(r: f64, r0: f64, outer_scale: f64) -> f64 {
    let scale = (outer_scale / r0).powf(5.0 / 3.0) * covariance_prefactor();
    let x = std::f64::consts::TAU * r / outer_scale;
    if x == 0.0 {
        scale * 2f64.powf(-1.0 / 6.0) * gamma(5.0 / 6.0)
    } else {
        scale * x.powf(5.0 / 6.0) * bessel_k(5.0 / 6.0, x)
    }
}

/// Phase structure function `D(r) = 2 (C_φ(0) − C_φ(r))`.
pub fn structure_function(r: f64, r0: f64, outer_scale: f64) -> f64 {
    2.0 * (phase_covariance(0.0, r0, outer_scale) - phase_covariance(r, r0, outer_scale))
}

/// Kolmogorov structure function `6.88 (r/r0)^{5/3}`.
pub fn kolmogorov_structure_function(r: f64, r0: f64) -> f64 {
    6.88 * (r / r0).powf(5.0 / 3.0)
}

/// Von Kármán phase power spectral density in cycles/m,
/// `c · r0^{-5/3} (f² + 1/L0²)^{-11/6}` with `c ≈ 0.0229`.
pub fn phase_psd(f: f64, r0: f64, outer_scale: f64) -> f64 {
    PsdScale::new(r0, outer_scale).at(f)
}

/// [`phase_psd`] with its `f`-independent factors evaluated once.
#[derive(Clone, Copy, Debug)]
pub struct PsdScale {
    scale: f64,
    f0_sq: f64,
}

impl PsdScale {
    pub fn new(r0: f64, outer_scale: f64) -> Self {
        let c = gamma(11.0 / 6.0).powi(2) / (2.0 * std::f64::consts::PI.powf(11.0 / 3.0))
            * (24.0 / 5.0 * gamma(6.0 / 5.0)).powf(5.0 / 6.0);
        Self { scale: c * r0.powf(-5.0 / 3.0), f0_sq: (1.0 / outer_scale).powi(2) }
    }

    #[inline]
    pub fn at(&self, f: f64) -> f64 {
        self.scale * (f * f + self.f0_sq).powf(-11.0 / 6.0)
    }
}
