use std::io::{Read, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::{extension_matrices, ExtensionGeometry, ExtensionMatrices, ScreenParams};
use crate::error::{Error, Result};
use crate::field::PhaseMap;
use crate::grid::Grid;
use crate::scalar::{lit, wide, Real};

/// Identifies the random stream of one layer in one realization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master: u64,
    pub realization: u64,
    pub layer: u32,
}

impl StreamKey {
    pub fn new(master: u64, realization: u64, layer: u32) -> Self {
        Self { master, realization, layer }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.master);
        rng.set_stream((self.realization << 16) | u64::from(self.layer & 0xffff));
        rng
    }
}

/// Lines added by one call to [`PhaseScreen::advance`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WindStep {
    pub columns: usize,
    pub rows: usize,
}

/// A turbulent phase screen that can be translated by the wind forever.
///
/// Only screen-sized data are ever held: each extension appends one line on
/// the upwind edge and drops the line on the downwind edge.
#[derive(Clone, Debug)]
pub struct PhaseScreen<T: Real> {
    grid: Grid<T>,
    params: ScreenParams,
    phase: Vec<T>,
    residual_x: f64,
    residual_y: f64,
    moved_x: u64,
    moved_y: u64,
    rng: ChaCha20Rng,
    key: StreamKey,
    ext: Option<Arc<ExtensionMatrices>>,
}

// components smaller than this are treated as exactly zero so that e.g.
// cos(π/2) does not leak a drift into the vertical accumulator
const ZERO_COMPONENT: f64 = 1e-12;

impl<T: Real> PhaseScreen<T> {
    pub(crate) fn from_parts(
        grid: Grid<T>,
        params: ScreenParams,
        phase: Vec<f64>,
        rng: ChaCha20Rng,
        key: StreamKey,
    ) -> Result<Self> {
        if phase.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "phase has {} samples, grid has {}",
                phase.len(),
                grid.len()
            )));
        }
        if phase.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("phase screen contains non-finite values".into()));
        }
        Ok(Self {
            grid,
            params,
            phase: phase.into_iter().map(lit).collect(),
            residual_x: 0.0,
            residual_y: 0.0,
            moved_x: 0,
            moved_y: 0,
            rng,
            key,
            ext: None,
        })
    }

    /// A screen of identically zero phase (no turbulence, no randomness used).
    pub fn flat(grid: Grid<T>, params: ScreenParams) -> Self {
        let key = StreamKey::new(0, 0, 0);
        Self {
            phase: vec![T::zero(); grid.len()],
            grid,
            params,
            residual_x: 0.0,
            residual_y: 0.0,
            moved_x: 0,
            moved_y: 0,
            rng: key.rng(),
            key,
            ext: None,
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn params(&self) -> &ScreenParams {
        &self.params
    }

    pub fn phase(&self) -> &[T] {
        &self.phase
    }

    pub fn phase_mut(&mut self) -> &mut [T] {
        &mut self.phase
    }

    pub fn to_map(&self) -> PhaseMap<T> {
        PhaseMap { grid: self.grid, values: self.phase.clone() }
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    /// Sub-pixel motion carried over to the next step, `(horizontal, vertical)`.
    pub fn residuals(&self) -> (f64, f64) {
        (self.residual_x, self.residual_y)
    }

    /// Total columns and rows appended since creation.
    pub fn moved(&self) -> (u64, u64) {
        (self.moved_x, self.moved_y)
    }

    fn components(&self) -> (f64, f64) {
        let (s, c) = self.params.wind_direction.sin_cos();
        let clean = |v: f64| if v.abs() < ZERO_COMPONENT { 0.0 } else { v };
        (clean(s), clean(c))
    }

    /// Translates the screen by the wind over `dt` seconds.
    ///
    /// The per-step motion `N = v·dt/pitch` splits into `N sin θ` columns and
    /// `N cos θ` rows. Whole pixels are executed by alternating one column and
    /// one row until neither direction has a full pixel pending; the
    /// fractional remainders carry over to the next call.
    pub fn advance(&mut self, dt: f64) -> Result<WindStep> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        let n_move = self.params.wind_speed * dt / wide(self.grid.pitch());
        let (sx, sy) = self.components();
        let mut demand_x = n_move * sx.abs() + self.residual_x;
        let mut demand_y = n_move * sy.abs() + self.residual_y;
        let mut step = WindStep::default();
        while demand_x >= 1.0 || demand_y >= 1.0 {
            if demand_x >= 1.0 {
                self.extend_column(sx > 0.0)?;
                demand_x -= 1.0;
                step.columns += 1;
            }
            if demand_y >= 1.0 {
                self.extend_row(sy > 0.0)?;
                demand_y -= 1.0;
                step.rows += 1;
            }
        }
        self.residual_x = demand_x;
        self.residual_y = demand_y;
        Ok(step)
    }

    fn operators(&mut self) -> Result<Arc<ExtensionMatrices>> {
        if let Some(ext) = &self.ext {
            return Ok(ext.clone());
        }
        let geometry = ExtensionGeometry {
            n: self.grid.n(),
            pitch: wide(self.grid.pitch()),
            n_col: self.params.n_col,
        };
        let ext = extension_matrices(geometry, &self.params)?;
        self.ext = Some(ext.clone());
        Ok(ext)
    }

    fn noise(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.rng.sample(StandardNormal)).collect()
    }

    /// Appends a column on the upwind side; `positive` = content moves toward +x.
    pub fn extend_column(&mut self, positive: bool) -> Result<()> {
        let ext = self.operators()?;
        let n = self.grid.n();
        let z: Vec<f64> = ext
            .stencil
            .iter()
            .map(|&(c, iy)| {
                let ix = if positive { c } else { n - 1 - c };
                wide(self.phase[iy * n + ix])
            })
            .collect();
        let beta = self.noise(n);
        let x = ext.draw(&z, &beta, self.params.r0);
        for (iy, &v) in x.iter().enumerate() {
            let row = &mut self.phase[iy * n..(iy + 1) * n];
            if positive {
                row.copy_within(0..n - 1, 1);
                row[0] = lit(v);
            } else {
                row.copy_within(1..n, 0);
                row[n - 1] = lit(v);
            }
        }
        self.moved_x += 1;
        Ok(())
    }

    /// Appends a row on the upwind side; `positive` = content moves toward +y.
    pub fn extend_row(&mut self, positive: bool) -> Result<()> {
        let ext = self.operators()?;
        let n = self.grid.n();
        let z: Vec<f64> = ext
            .stencil
            .iter()
            .map(|&(c, ix)| {
                let iy = if positive { c } else { n - 1 - c };
                wide(self.phase[iy * n + ix])
            })
            .collect();
        let beta = self.noise(n);
        let x = ext.draw(&z, &beta, self.params.r0);
        if positive {
            self.phase.copy_within(0..n * (n - 1), n);
            for (dst, &v) in self.phase[..n].iter_mut().zip(&x) {
                *dst = lit(v);
            }
        } else {
            self.phase.copy_within(n.., 0);
            for (dst, &v) in self.phase[n * (n - 1)..].iter_mut().zip(&x) {
                *dst = lit(v);
            }
        }
        self.moved_y += 1;
        Ok(())
    }

    pub fn dump(&self) -> ScreenDump {
        ScreenDump {
            n: self.grid.n() as u64,
            pitch: wide(self.grid.pitch()),
            r0: self.params.r0,
            outer_scale: self.params.outer_scale,
            seed: self.key.master,
            phase: self.phase.iter().map(|&v| wide(v)).collect(),
        }
    }
}

/// Binary screen dump: little-endian header `{n: u64, pitch: f64, r0: f64,
/// L0: f64, seed: u64}` followed by `n²` row-major `f64` phase samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ScreenDump {
    pub n: u64,
    pub pitch: f64,
    pub r0: f64,
    pub outer_scale: f64,
    pub seed: u64,
    pub phase: Vec<f64>,
}

impl ScreenDump {
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.n.to_le_bytes())?;
        w.write_all(&self.pitch.to_le_bytes())?;
        w.write_all(&self.r0.to_le_bytes())?;
        w.write_all(&self.outer_scale.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in &self.phase {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let n = u64::from_le_bytes(next(&mut r)?);
        let pitch = f64::from_le_bytes(next(&mut r)?);
        let r0 = f64::from_le_bytes(next(&mut r)?);
        let outer_scale = f64::from_le_bytes(next(&mut r)?);
        let seed = u64::from_le_bytes(next(&mut r)?);
        if n == 0 || n > 1 << 16 {
            return Err(Error::Parse(format!("implausible screen size {n}")));
        }
        let count = (n * n) as usize;
        let mut phase = Vec::with_capacity(count);
        for _ in 0..count {
            phase.push(f64::from_le_bytes(next(&mut r)?));
        }
        Ok(Self { n, pitch, r0, outer_scale, seed, phase })
    }
}
