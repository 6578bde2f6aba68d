//! Split-step propagation through a stack of thin phase screens.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::field::ComplexField;
use crate::grid::Grid;
use crate::scalar::{lit, wide, Real};
use crate::turbulence::{initial_screen, PhaseScreen, StreamKey, TurbulenceParams};

/// Fraction of each half-width occupied by the absorbing boundary.
pub const ABSORBER_FRACTION: f64 = 0.1;
/// Super-Gaussian order of the absorber profile.
pub const ABSORBER_ORDER: i32 = 8;

/// One thin screen at distance `z` from the transmitter.
#[derive(Clone, Debug)]
pub struct Layer<T: Real> {
    pub screen: PhaseScreen<T>,
    pub z: T,
}

/// Ordered thin-screen model of a turbulent path of length `path_length`.
#[derive(Clone, Debug)]
pub struct ScreenStack<T: Real> {
    layers: Vec<Layer<T>>,
    path_length: T,
}

impl<T: Real> ScreenStack<T> {
    pub fn new(layers: Vec<Layer<T>>, path_length: T) -> Result<Self> {
        let mut prev = T::zero();
        for layer in &layers {
            if !(layer.z > prev) || layer.z > path_length {
                return Err(Error::Config(format!(
                    "screen positions must satisfy 0 < z_1 < … ≤ {path_length}; got {}",
                    layer.z
                )));
            }
            prev = layer.z;
        }
        if let Some(first) = layers.first() {
            for l in &layers[1..] {
                first.screen.grid().ensure_same(l.screen.grid())?;
            }
        }
        Ok(Self { layers, path_length })
    }

    /// Fresh equal-strength layers at the slab midpoints for one realization.
    pub fn generate(params: &TurbulenceParams, grid: &Grid<T>, master: u64, realization: u64) -> Result<Self> {
        params.validate()?;
        let screen = params.screen_params()?;
        let path = lit::<T>(params.path_length);
        let layers = Self::slab_midpoints(params.layers, path)
            .into_iter()
            .enumerate()
            .map(|(i, z)| {
                let key = StreamKey::new(master, realization, i as u32);
                Ok(Layer { screen: initial_screen(&screen, grid, key)?, z })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers, path)
    }

    pub fn vacuum(path_length: T) -> Self {
        Self { layers: Vec::new(), path_length }
    }

    /// Midpoints `(i − ½)·Δz` of `count` equal slabs.
    pub fn slab_midpoints(count: usize, path_length: T) -> Vec<T> {
        let dz = path_length / lit(count as f64);
        (0..count).map(|i| dz * (lit::<T>(i as f64) + lit(0.5))).collect()
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn path_length(&self) -> T {
        self.path_length
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Advances every screen by the wind over `dt`.
    pub fn advance(&mut self, dt: f64) -> Result<()> {
        for layer in &mut self.layers {
            layer.screen.advance(dt)?;
        }
        Ok(())
    }
}

/// Angular-spectrum propagator bound to one grid and wavelength.
pub struct Propagator<T: Real> {
    grid: Grid<T>,
    wavelength: T,
    fft: Fft2<T>,
    absorber: Option<Vec<T>>,
    transfer: Mutex<HashMap<u64, Arc<Vec<Complex<T>>>>>,
}

impl<T: Real> std::fmt::Debug for Propagator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator")
            .field("grid", &self.grid)
            .field("wavelength", &self.wavelength)
            .field("absorber", &self.absorber.is_some())
            .finish()
    }
}

/// Separable super-Gaussian edge profile: 1 in the interior, falling
/// smoothly to ~0 across the outer `ABSORBER_FRACTION` of each half-width.
pub fn absorber_profile<T: Real>(grid: &Grid<T>) -> Vec<T> {
    let half = wide(grid.half_extent());
    let inner = 1.0 - ABSORBER_FRACTION;
    let axis: Vec<f64> = (0..grid.n())
        .map(|i| {
            let u = wide(grid.coord(i)).abs() / half;
            if u <= inner {
                1.0
            } else {
                let s = 2.0 * (u - inner) / ABSORBER_FRACTION;
                (-s.powi(ABSORBER_ORDER)).exp()
            }
        })
        .collect();
    let n = grid.n();
    let mut out = Vec::with_capacity(n * n);
    for &ay in &axis {
        for &ax in &axis {
            out.push(lit(ax * ay));
        }
    }
    out
}

impl<T: Real> Propagator<T> {
    pub fn new(grid: Grid<T>, wavelength: T) -> Self {
        Self {
            absorber: Some(absorber_profile(&grid)),
            fft: Fft2::new(grid.n()),
            grid,
            wavelength,
            transfer: Mutex::new(HashMap::new()),
        }
    }

    /// Same propagator with the absorbing boundary switched off.
    pub fn without_absorber(mut self) -> Self {
        self.absorber = None;
        self
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn wavelength(&self) -> T {
        self.wavelength
    }

    /// Longest step whose Fresnel transfer function is sampled without
    /// aliasing: `n · pitch² / λ`.
    pub fn max_step(&self) -> T {
        lit::<T>(self.grid.n() as f64) * self.grid.cell_area() / self.wavelength
    }

    fn transfer_function(&self, dz: T) -> Arc<Vec<Complex<T>>> {
        let key = wide(dz).to_bits();
        if let Some(h) = self.transfer.lock().expect("transfer cache poisoned").get(&key) {
            return h.clone();
        }
        let freqs = self.grid.freqs();
        let c = -T::PI() * self.wavelength * dz;
        let mut h = Vec::with_capacity(self.grid.len());
        for &fy in &freqs {
            for &fx in &freqs {
                let ph = c * (fx * fx + fy * fy);
                h.push(Complex::new(ph.cos(), ph.sin()));
            }
        }
        let h = Arc::new(h);
        self.transfer
            .lock()
            .expect("transfer cache poisoned")
            .entry(key)
            .or_insert(h)
            .clone()
    }

    /// Free-space step of `dz` metres with the Fresnel transfer function.
    pub fn vacuum_step(&self, field: &ComplexField<T>, dz: T) -> Result<ComplexField<T>> {
        self.grid.ensure_same(&field.grid)?;
        if dz < T::zero() {
            return Err(Error::Config(format!("negative propagation step {dz}")));
        }
        if dz == T::zero() {
            return Ok(field.clone());
        }
        let max = self.max_step();
        if dz > max * lit(1.0 + 1e-9) {
            return Err(Error::Aliasing { dz: wide(dz), max: wide(max) });
        }
        let h = self.transfer_function(dz);
        let mut out = field.clone();
        self.fft.forward(&mut out.data);
        for (v, &hk) in out.data.iter_mut().zip(h.iter()) {
            *v = *v * hk;
        }
        self.fft.inverse(&mut out.data);
        out.z = field.z + dz;
        Ok(out)
    }

    /// Pointwise multiplication by `exp(i·phase)`.
    pub fn apply_screen(&self, field: &ComplexField<T>, screen: &PhaseScreen<T>) -> Result<ComplexField<T>> {
        apply_phase(field, screen.grid(), screen.phase())
    }

    /// Vacuum segment split into alias-free sub-steps, absorbing after each.
    fn vacuum_segment(&self, mut field: ComplexField<T>, length: T) -> Result<ComplexField<T>> {
        if length <= T::zero() {
            return Ok(field);
        }
        let steps = wide(length / self.max_step()).ceil().max(1.0);
        let dz = length / lit(steps);
        for _ in 0..steps as usize {
            field = self.vacuum_step(&field, dz)?;
            if let Some(mask) = &self.absorber {
                for (v, &m) in field.data.iter_mut().zip(mask) {
                    *v = v.scale(m);
                }
            }
        }
        Ok(field)
    }

    /// Split-step propagation from the field's plane through every screen of
    /// `stack` to the end of the path.
    pub fn propagate(&self, field: &ComplexField<T>, stack: &ScreenStack<T>) -> Result<ComplexField<T>> {
        let mut current = field.clone();
        for layer in stack.layers() {
            if layer.z < current.z {
                return Err(Error::Config(format!(
                    "screen at z = {} lies behind the field plane z = {}",
                    layer.z, current.z
                )));
            }
            let seg = layer.z - current.z;
            current = self.vacuum_segment(current, seg)?;
            current.z = layer.z;
            current = self.apply_screen(&current, &layer.screen)?;
        }
        let seg = stack.path_length() - current.z;
        current = self.vacuum_segment(current, seg)?;
        current.z = stack.path_length();
        Ok(current)
    }
}

/// Multiplies `field` by `exp(i·phase)` sample by sample.
pub fn apply_phase<T: Real>(field: &ComplexField<T>, grid: &Grid<T>, phase: &[T]) -> Result<ComplexField<T>> {
    field.grid.ensure_same(grid)?;
    let mut out = field.clone();
    for (v, &p) in out.data.iter_mut().zip(phase) {
        *v = *v * Complex::new(p.cos(), p.sin());
    }
    Ok(out)
}
