//! Sampled complex fields and real-valued maps on a [`Grid`].

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::{lit, Real};

/// Scalar optical field sampled on a grid at propagation distance `z`.
#[derive(Clone, Debug)]
pub struct ComplexField<T: Real> {
    pub grid: Grid<T>,
    pub z: T,
    pub data: Vec<Complex<T>>,
}

impl<T: Real> ComplexField<T> {
    pub fn zeros(grid: Grid<T>, z: T) -> Self {
        Self {
            data: vec![Complex::new(T::zero(), T::zero()); grid.len()],
            grid,
            z,
        }
    }

    pub fn from_fn(grid: Grid<T>, z: T, mut f: impl FnMut(T, T) -> Complex<T>) -> Self {
        let n = grid.n();
        let mut data = Vec::with_capacity(grid.len());
        for iy in 0..n {
            let y = grid.coord(iy);
            for ix in 0..n {
                data.push(f(grid.coord(ix), y));
            }
        }
        Self { grid, z, data }
    }

    /// `∫|E|² dA` on the grid.
    pub fn power(&self) -> T {
        self.data.iter().map(|c| c.norm_sqr()).sum::<T>() * self.grid.cell_area()
    }

    pub fn scale(&mut self, s: Complex<T>) {
        for c in &mut self.data {
            *c = *c * s;
        }
    }

    /// Rescales to unit grid power and returns the power before rescaling.
    pub fn normalize(&mut self) -> T {
        let p = self.power();
        if p > T::zero() {
            let s = T::one() / p.sqrt();
            for c in &mut self.data {
                *c = c.scale(s);
            }
        }
        p
    }

    pub fn ensure_compatible(&self, other: &ComplexField<T>) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        let tol = lit::<T>(1e-9) * (T::one() + self.z.abs());
        if (self.z - other.z).abs() > tol {
            return Err(Error::GridMismatch(format!(
                "fields at different planes: z = {} vs {}",
                self.z, other.z
            )));
        }
        Ok(())
    }

    /// `Σ_k w_k · fields[k]`; all fields must share grid and plane.
    pub fn superpose(fields: &[&ComplexField<T>], weights: &[Complex<T>]) -> Result<Self> {
        assert_eq!(fields.len(), weights.len(), "one weight per field");
        let first = fields
            .first()
            .ok_or_else(|| Error::Config("cannot superpose an empty set of fields".into()))?;
        let mut out = ComplexField::zeros(first.grid, first.z);
        for (f, &w) in fields.iter().zip(weights) {
            first.ensure_compatible(f)?;
            for (o, &v) in out.data.iter_mut().zip(&f.data) {
                *o = *o + v * w;
            }
        }
        Ok(out)
    }

    pub fn amplitude(&self) -> Vec<T> {
        self.data.iter().map(|c| c.norm()).collect()
    }

    pub fn cast<U: Real>(&self) -> ComplexField<U> {
        use crate::scalar::wide;
        ComplexField {
            grid: self.grid.cast(),
            z: lit(wide(self.z)),
            data: self
                .data
                .iter()
                .map(|c| Complex::new(lit(wide(c.re)), lit(wide(c.im))))
                .collect(),
        }
    }
}

/// Real-valued map on a grid (phases, estimated wavefronts, Zernike samples).
#[derive(Clone, Debug)]
pub struct PhaseMap<T: Real> {
    pub grid: Grid<T>,
    pub values: Vec<T>,
}

impl<T: Real> PhaseMap<T> {
    pub fn zeros(grid: Grid<T>) -> Self {
        Self {
            values: vec![T::zero(); grid.len()],
            grid,
        }
    }

    pub fn from_fn(grid: Grid<T>, mut f: impl FnMut(T, T) -> T) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.len());
        for iy in 0..n {
            let y = grid.coord(iy);
            for ix in 0..n {
                values.push(f(grid.coord(ix), y));
            }
        }
        Self { grid, values }
    }

    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / lit(self.values.len() as f64)
    }

    pub fn variance(&self) -> T {
        let m = self.mean();
        self.values.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / lit(self.values.len() as f64)
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> T {
        self.values[iy * self.grid.n() + ix]
    }
}
