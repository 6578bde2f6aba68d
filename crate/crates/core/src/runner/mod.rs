//! Experiment configuration, the per-realization time loop, and run output.

mod experiment;
mod output;

pub use experiment::{Experiment, Outcome, RealizationResult};
pub use output::{histogram, read_records, run_experiment, summarize, summarize_dir, RunOptions, RunReport, Summary};

use serde::{Deserialize, Serialize};

use crate::ao::{greenwood_frequency, AoConfig};
use crate::error::{Error, Result};
use crate::qkd::ProtocolConfig;
use crate::turbulence::TurbulenceParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_turbulence")]
    pub turbulence: TurbulenceParams,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub ao: AoConfig,
    /// Extra AO / aperture settings scored against the same received fields.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// One scoring configuration; `aperture` overrides the protocol's.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default)]
    pub ao: AoConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aperture: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub size: usize,
    pub pitch: f64,
    pub precision: Precision,
    pub absorber: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { size: 256, pitch: 1.5625e-3, precision: Precision::F64, absorber: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "r0")]
    R0,
    #[serde(rename = "Cn2")]
    Cn2,
    #[serde(rename = "N")]
    Order,
    #[serde(rename = "R")]
    Aperture,
    #[serde(rename = "v")]
    Wind,
    #[serde(rename = "d")]
    Dimension,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::R0 => "r0",
            SweepAxis::Cn2 => "Cn2",
            SweepAxis::Order => "N",
            SweepAxis::Aperture => "R",
            SweepAxis::Wind => "v",
            SweepAxis::Dimension => "d",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "r0" => SweepAxis::R0,
            "Cn2" | "cn2" => SweepAxis::Cn2,
            "N" => SweepAxis::Order,
            "R" => SweepAxis::Aperture,
            "v" => SweepAxis::Wind,
            "d" => SweepAxis::Dimension,
            other => return Err(Error::Config(format!("unknown sweep axis {other:?} (r0, Cn2, N, R, v, d)"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub realizations: u64,
    /// Scored span per realization; `duration_s / dt_s` records each.
    pub duration_s: Option<f64>,
    pub dt_s: f64,
    pub master_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    /// Score QBER from subspace-normalized matrices (otherwise raw).
    pub normalized_qber: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            realizations: 100,
            duration_s: None,
            dt_s: 1e-3,
            master_seed: 1,
            sweep: None,
            normalized_qber: true,
        }
    }
}

impl RunConfig {
    pub fn frames(&self) -> u64 {
        match self.duration_s {
            Some(d) => ((d / self.dt_s).round() as u64).max(1),
            None => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
    /// Subset of `records`, `matrices`, `json`.
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: "run".into(), formats: vec!["records".into(), "matrices".into(), "json".into()] }
    }
}

impl OutputConfig {
    pub fn wants(&self, what: &str) -> bool {
        self.formats.iter().any(|f| f == what)
    }
}

fn default_turbulence() -> TurbulenceParams {
    TurbulenceParams { cn2: Some(2.2e-15), ..TurbulenceParams::default() }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            turbulence: default_turbulence(),
            protocol: ProtocolConfig::default(),
            ao: AoConfig::default(),
            variants: Vec::new(),
            grid: GridConfig::default(),
            run: RunConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Scoring configurations; the top-level `ao` alone when none are listed.
    pub fn scoring_variants(&self) -> Vec<Variant> {
        if self.variants.is_empty() {
            vec![Variant { name: "default".into(), ao: self.ao.clone(), aperture: None }]
        } else {
            self.variants.clone()
        }
    }

    /// Full-scale settings: 512² grid at the same pitch, 300 realizations.
    pub fn full_scale(mut self) -> Self {
        self.grid.size = 512;
        self.run.realizations = 300;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.turbulence.validate()?;
        self.protocol.validate()?;
        let variants = self.scoring_variants();
        let mut names = std::collections::HashSet::new();
        for v in &variants {
            v.ao.validate()?;
            if !names.insert(v.name.as_str()) || v.name.is_empty() || v.name.contains(['/', '\\']) {
                return Err(Error::Config(format!("variant names must be unique, non-empty path segments: {:?}", v.name)));
            }
            if let Some(a) = v.aperture {
                if !(a > 0.0) {
                    return Err(Error::Config(format!("variant {} has aperture {a}", v.name)));
                }
            }
        }
        let delayed: Vec<&Variant> = variants.iter().filter(|v| v.ao.delay_frames() > 0).collect();
        if let Some(first) = delayed.first() {
            if delayed.iter().any(|v| v.ao.camera_rate != first.ao.camera_rate) {
                return Err(Error::Config("delayed variants must share one camera rate".into()));
            }
            let ratio = self.run.dt_s * first.ao.camera_rate;
            if (ratio - ratio.round()).abs() > 1e-6 || ratio.round() < 1.0 {
                return Err(Error::Config(format!(
                    "dt_s = {} must be a whole number of camera frames when a delay is configured",
                    self.run.dt_s
                )));
            }
        }
        if !(self.run.dt_s > 0.0) {
            return Err(Error::Config(format!("dt_s must be positive, got {}", self.run.dt_s)));
        }
        if self.run.realizations == 0 {
            return Err(Error::Config("need at least one realization".into()));
        }
        if let Some(s) = &self.run.sweep {
            if s.values.is_empty() {
                return Err(Error::Config("sweep has no values".into()));
            }
            let up = s.values.windows(2).all(|w| w[1] > w[0]);
            let down = s.values.windows(2).all(|w| w[1] < w[0]);
            if !(up || down) {
                return Err(Error::Config("sweep values must be strictly monotone".into()));
            }
            for &v in &s.values {
                self.at_point(s.axis, v)?;
            }
        }
        if self.grid.size < 64 || self.grid.size % 2 != 0 || !(self.grid.pitch > 0.0) {
            return Err(Error::Config(format!("invalid grid {}×{} at pitch {}", self.grid.size, self.grid.size, self.grid.pitch)));
        }
        Ok(())
    }

    /// Copy of this configuration with the sweep axis set to `value`.
    pub fn at_point(&self, axis: SweepAxis, value: f64) -> Result<Self> {
        let mut c = self.clone();
        c.run.sweep = None;
        match axis {
            SweepAxis::R0 => {
                c.turbulence.r0 = Some(value);
                c.turbulence.cn2 = None;
            }
            SweepAxis::Cn2 => {
                c.turbulence.cn2 = Some(value);
                c.turbulence.r0 = None;
            }
            SweepAxis::Order => {
                let n = integral(value, "N")?;
                c.ao.order = n;
                c.variants.iter_mut().for_each(|v| v.ao.order = n);
            }
            SweepAxis::Aperture => c.protocol.aperture = value,
            SweepAxis::Wind => c.turbulence.wind_speed = value,
            SweepAxis::Dimension => c.protocol.dimension = integral(value, "d")?,
        }
        c.turbulence.validate()?;
        c.protocol.validate()?;
        Ok(c)
    }

    /// `(label, config)` for every sweep point; a single unnamed point
    /// without a sweep.
    pub fn points(&self) -> Result<Vec<(Option<String>, f64, Self)>> {
        match &self.run.sweep {
            None => Ok(vec![(None, f64::NAN, self.clone())]),
            Some(s) => s
                .values
                .iter()
                .map(|&v| Ok((Some(format!("{}_{}", s.axis.name(), v)), v, self.at_point(s.axis, v)?)))
                .collect(),
        }
    }
}

fn integral(v: f64, what: &str) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!("{what} must be a positive integer, got {v}")))
    }
}

/// Atmospheric and AO-timing quantities implied by a configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub r0: f64,
    pub cn2: f64,
    pub sigma_r2: f64,
    pub layer_r0: f64,
    pub step_sigma_r2: f64,
    pub f_g: f64,
    /// `1/f_G`; absent without wind.
    pub tau_g: Option<f64>,
    pub f_ao: f64,
    pub tau_ao: f64,
}

pub fn derived_params(turbulence: &TurbulenceParams, ao: &AoConfig) -> Result<DerivedParams> {
    let r0 = turbulence.total_r0()?;
    let f_g = greenwood_frequency(turbulence.wind_speed, r0);
    Ok(DerivedParams {
        r0,
        cn2: turbulence.total_cn2()?,
        sigma_r2: turbulence.rytov_variance()?,
        layer_r0: turbulence.layer_r0()?,
        step_sigma_r2: turbulence.step_rytov_variance()?,
        f_g,
        tau_g: (f_g > 0.0).then(|| 1.0 / f_g),
        f_ao: ao.bandwidth(),
        tau_ao: ao.tau(),
    })
}

/// Cn² giving a plane-wave Rytov variance `sigma_r2` over the path.
pub fn cn2_for_rytov(sigma_r2: f64, wavelength: f64, path_length: f64) -> f64 {
    let k = std::f64::consts::TAU / wavelength;
    sigma_r2 / (1.23 * k.powf(7.0 / 6.0) * path_length.powf(11.0 / 6.0))
}
