use std::collections::HashMap;

use super::{ExperimentConfig, Variant};
use crate::ao::{correct, AoMode, AoSystem, DelayLine};
use crate::error::{Error, Result};
use crate::field::{ComplexField, PhaseMap};
use crate::grid::Grid;
use crate::modes::{lg_field, LgModeSpec};
use crate::propagation::{Propagator, ScreenStack};
use crate::qkd::{build_mubs, crosstalk_matrices, transmitter_modes, CrosstalkMatrix, ExperimentRecord, ModalDecomposer, Mubs};
use crate::scalar::{lit, Real};

struct Prepared<T: Real> {
    variant: Variant,
    ao: AoSystem<T>,
    decomposer: usize,
    delay: u64,
}

/// Everything fixed across realizations of one sweep point: grid,
/// propagator, transmitted modes, receiver projectors and AO systems.
pub struct Experiment<T: Real> {
    config: ExperimentConfig,
    grid: Grid<T>,
    propagator: Propagator<T>,
    mubs: Mubs,
    transmit: Vec<ComplexField<T>>,
    beacon: ComplexField<T>,
    beacon_reference: ComplexField<T>,
    decomposers: Vec<ModalDecomposer<T>>,
    variants: Vec<Prepared<T>>,
    tick: f64,
    ticks_per_record: u64,
    max_delay: u64,
}

/// One scored frame of one variant, or why it was dropped.
#[derive(Clone, Debug)]
pub enum Outcome {
    Scored { record: ExperimentRecord, oam: CrosstalkMatrix, ang: CrosstalkMatrix },
    Degenerate { i: u64, t: f64, reason: String },
}

impl Outcome {
    pub fn record(&self) -> Option<&ExperimentRecord> {
        match self {
            Outcome::Scored { record, .. } => Some(record),
            Outcome::Degenerate { .. } => None,
        }
    }
}

/// All frames of one realization, `per_variant[v][frame]`.
#[derive(Clone, Debug)]
pub struct RealizationResult {
    pub index: u64,
    pub per_variant: Vec<Vec<Outcome>>,
}

impl<T: Real> Experiment<T> {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        if config.run.sweep.is_some() {
            return Err(Error::Config("resolve sweep points with ExperimentConfig::points first".into()));
        }
        let grid = Grid::<T>::new(config.grid.size, lit(config.grid.pitch))?;
        let turb = &config.turbulence;
        let wavelength = lit::<T>(turb.wavelength);
        let z = lit::<T>(turb.path_length);
        let mut propagator = Propagator::new(grid, wavelength);
        if !config.grid.absorber {
            propagator = propagator.without_absorber();
        }
        let proto = &config.protocol;
        let mubs = build_mubs(proto)?;
        let transmit = transmitter_modes(&mubs, proto, &grid, wavelength)?;
        let beacon = lg_field(&LgModeSpec::new(0, 0, lit(proto.waist), wavelength)?, &grid, T::zero())?;
        let beacon_reference = propagator.propagate(&beacon, &ScreenStack::vacuum(z))?;

        let mut decomposers: Vec<ModalDecomposer<T>> = Vec::new();
        let mut by_radius: HashMap<u64, usize> = HashMap::new();
        let mut variants = Vec::new();
        for v in config.scoring_variants() {
            let radius = v.aperture.unwrap_or(proto.aperture);
            if lit::<T>(radius) > grid.half_extent() {
                return Err(Error::Config(format!("receiver aperture {radius} m exceeds the grid half-width")));
            }
            let idx = match by_radius.get(&radius.to_bits()) {
                Some(&i) => i,
                None => {
                    decomposers.push(ModalDecomposer::new(
                        &grid,
                        &mubs.oam,
                        proto.p_max,
                        lit(radius),
                        lit(proto.waist),
                        wavelength,
                        z,
                    )?);
                    by_radius.insert(radius.to_bits(), decomposers.len() - 1);
                    decomposers.len() - 1
                }
            };
            let ao = AoSystem::new(v.ao.clone(), &grid)?;
            let delay = if v.ao.mode == AoMode::None { 0 } else { v.ao.delay_frames() as u64 };
            variants.push(Prepared { variant: v, ao, decomposer: idx, delay });
        }
        let max_delay = variants.iter().map(|p| p.delay).max().unwrap_or(0);
        let tick = match variants.iter().find(|p| p.delay > 0) {
            Some(p) => p.variant.ao.frame_period(),
            None => config.run.dt_s,
        };
        let ticks_per_record = ((config.run.dt_s / tick).round() as u64).max(1);
        Ok(Self {
            config: config.clone(),
            grid,
            propagator,
            mubs,
            transmit,
            beacon,
            beacon_reference,
            decomposers,
            variants,
            tick,
            ticks_per_record,
            max_delay,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn propagator(&self) -> &Propagator<T> {
        &self.propagator
    }

    pub fn mubs(&self) -> &Mubs {
        &self.mubs
    }

    pub fn variant_names(&self) -> Vec<String> {
        self.variants.iter().map(|p| p.variant.name.clone()).collect()
    }

    /// Fresh turbulence for realization `i`.
    pub fn stack(&self, i: u64) -> Result<ScreenStack<T>> {
        ScreenStack::generate(&self.config.turbulence, &self.grid, self.config.run.master_seed, i)
    }

    /// Received OAM basis states through `stack`.
    pub fn receive(&self, stack: &ScreenStack<T>) -> Result<Vec<ComplexField<T>>> {
        self.transmit.iter().map(|f| self.propagator.propagate(f, stack)).collect()
    }

    /// Scores already-received fields for variant `v`, after applying
    /// `estimate`.
    pub fn score(
        &self,
        v: usize,
        received: &[ComplexField<T>],
        estimate: &PhaseMap<T>,
        i: u64,
        t: f64,
        residues: usize,
    ) -> Outcome {
        let p = &self.variants[v];
        let dec = &self.decomposers[p.decomposer];
        let flat = p.variant.ao.mode == AoMode::None;
        let coeffs: Result<Vec<_>> = received
            .iter()
            .map(|f| {
                if flat {
                    dec.coefficients(f)
                } else {
                    dec.coefficients(&correct(f, estimate)?)
                }
            })
            .collect();
        match coeffs.and_then(|c| crosstalk_matrices(&self.mubs, &c)) {
            Ok((mut oam, mut ang)) => {
                for m in [&mut oam, &mut ang] {
                    m.realization = i;
                    m.t = t;
                }
                let record = ExperimentRecord::score(i, t, &oam, &ang, residues, self.config.run.normalized_qber);
                Outcome::Scored { record, oam, ang }
            }
            Err(e @ Error::DegenerateRow { .. }) => Outcome::Degenerate { i, t, reason: e.to_string() },
            Err(e) => Outcome::Degenerate { i, t, reason: format!("scoring failed: {e}") },
        }
    }

    /// Runs the time loop of realization `i`: screens advance by the wind,
    /// the beacon is sensed `delay` camera frames before each scored frame,
    /// and every variant scores the same received fields.
    pub fn run_realization(&self, i: u64) -> Result<RealizationResult> {
        let frames = self.config.run.frames();
        let dt = self.config.run.dt_s;
        let mut stack = self.stack(i)?;
        let record_tick = |f: u64| self.max_delay + f * self.ticks_per_record;
        let last = record_tick(frames - 1);
        let mut lines: Vec<DelayLine<T>> = self.variants.iter().map(|p| DelayLine::new(p.delay as usize)).collect();
        let mut residues: Vec<HashMap<u64, usize>> = vec![HashMap::new(); self.variants.len()];
        let mut per_variant: Vec<Vec<Outcome>> = vec![Vec::with_capacity(frames as usize); self.variants.len()];

        for tick in 0..=last {
            let sensing: Vec<usize> = (0..self.variants.len())
                .filter(|&v| {
                    let p = &self.variants[v];
                    if p.variant.ao.mode == AoMode::None {
                        return false;
                    }
                    let target = tick + p.delay;
                    target >= self.max_delay
                        && (target - self.max_delay) % self.ticks_per_record == 0
                        && (target - self.max_delay) / self.ticks_per_record < frames
                })
                .collect();
            if !sensing.is_empty() {
                let rx = self.propagator.propagate(&self.beacon, &stack)?;
                for v in sensing {
                    let ao = &self.variants[v].ao;
                    let m = ao.measure(&rx, Some(&self.beacon_reference), tick)?;
                    residues[v].insert(tick, m.diagnostics.map_or(0, |d| d.residues));
                    lines[v].push(tick, ao.estimate(&m)?);
                }
            }
            if tick >= self.max_delay && (tick - self.max_delay) % self.ticks_per_record == 0 {
                let f = (tick - self.max_delay) / self.ticks_per_record;
                let t = (i * frames + f) as f64 * dt;
                let received = self.receive(&stack)?;
                for v in 0..self.variants.len() {
                    let p = &self.variants[v];
                    let (estimate, res) = if p.variant.ao.mode == AoMode::None {
                        (PhaseMap::zeros(self.grid), 0)
                    } else {
                        let d = lines[v].delayed_phase(tick, self.grid);
                        debug_assert!(!d.cold_start, "warm-up covers the delay");
                        let sensed = tick - p.delay;
                        (d.estimate, residues[v].remove(&sensed).unwrap_or(0))
                    };
                    per_variant[v].push(self.score(v, &received, &estimate, i, t, res));
                }
            }
            if tick < last {
                stack.advance(self.tick)?;
            }
        }
        Ok(RealizationResult { index: i, per_variant })
    }
}
