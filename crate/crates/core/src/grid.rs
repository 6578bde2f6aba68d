//! Square sampling lattice shared by optical fields and phase screens.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Square grid of `n × n` samples spaced by `pitch` metres, origin at sample
/// `(n/2, n/2)`. Data laid out on this grid are row-major: index `iy * n + ix`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid<T: Real> {
    n: usize,
    pitch: T,
}

impl<T: Real> Grid<T> {
    pub fn new(n: usize, pitch: T) -> Result<Self> {
        if n < 64 || n % 2 != 0 {
            return Err(Error::Config(format!(
                "grid size must be even and at least 64, got {n}"
            )));
        }
        if !(pitch > T::zero()) || !pitch.is_finite() {
            return Err(Error::Config(format!("grid pitch must be positive, got {pitch}")));
        }
        Ok(Self { n, pitch })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pitch(&self) -> T {
        self.pitch
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Side length `n · pitch`.
    pub fn extent(&self) -> T {
        lit::<T>(self.n as f64) * self.pitch
    }

    pub fn half_extent(&self) -> T {
        self.extent() / lit(2.0)
    }

    /// Area of one sample cell.
    pub fn cell_area(&self) -> T {
        self.pitch * self.pitch
    }

    /// Physical coordinate of sample index `i` along either axis.
    #[inline]
    pub fn coord(&self, i: usize) -> T {
        lit::<T>(i as f64 - (self.n / 2) as f64) * self.pitch
    }

    pub fn coords(&self) -> Vec<T> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    /// Spatial frequency (cycles per metre) of FFT bin `k`, in unshifted order.
    #[inline]
    pub fn freq(&self, k: usize) -> T {
        let n = self.n as isize;
        let k = k as isize;
        let signed = if k < n / 2 { k } else { k - n };
        lit::<T>(signed as f64) / self.extent()
    }

    pub fn freqs(&self) -> Vec<T> {
        (0..self.n).map(|k| self.freq(k)).collect()
    }

    /// Polar coordinates `(r, φ)` of sample `(ix, iy)`.
    #[inline]
    pub fn polar(&self, ix: usize, iy: usize) -> (T, T) {
        let x = self.coord(ix);
        let y = self.coord(iy);
        (x.hypot(y), y.atan2(x))
    }

    /// Row-major indices of samples with `r < radius`.
    pub fn disk_indices(&self, radius: T) -> Vec<usize> {
        let mut out = Vec::new();
        for iy in 0..self.n {
            let y = self.coord(iy);
            for ix in 0..self.n {
                let x = self.coord(ix);
                if x.hypot(y) < radius {
                    out.push(iy * self.n + ix);
                }
            }
        }
        out
    }

    /// Grids are compatible when both size and pitch agree to round-off.
    pub fn same_as(&self, other: &Grid<T>) -> bool {
        self.n == other.n
            && (self.pitch - other.pitch).abs() <= self.pitch * lit(1e-12)
    }

    pub fn ensure_same(&self, other: &Grid<T>) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{}×{} @ {} vs {}×{} @ {}",
                self.n, self.n, self.pitch, other.n, other.n, other.pitch
            )))
        }
    }

    pub fn cast<U: Real>(&self) -> Grid<U> {
        Grid {
            n: self.n,
            pitch: lit(crate::scalar::wide(self.pitch)),
        }
    }
}
