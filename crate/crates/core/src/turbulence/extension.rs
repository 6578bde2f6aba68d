use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};

use super::{phase_covariance, ScreenParams};
use crate::error::{Error, Result};

/// Shape of one extension step: a new line of `n` samples next to `n_col`
/// dense conditioning lines, all at spacing `pitch`.
///
/// Beyond the dense lines the stencil also holds sparse samples from lines at
/// power-of-two offsets (and the far edge), which keeps the large-scale
/// correlation from decaying as the screen is extended.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtensionGeometry {
    pub n: usize,
    pub pitch: f64,
    pub n_col: usize,
}

impl ExtensionGeometry {
    /// Conditioning points as `(line offset from the edge, sample index)`.
    /// Offset 0 is the line adjacent to the new one.
    pub fn stencil(&self) -> Vec<(usize, usize)> {
        let n = self.n;
        let mut pts = Vec::new();
        for c in 0..self.n_col.min(n) {
            pts.extend((0..n).map(|i| (c, i)));
        }
        let mut offsets: Vec<usize> = (1..usize::BITS)
            .map(|k| 1usize << k)
            .take_while(|&o| o < n - 1)
            .filter(|&o| o >= self.n_col)
            .collect();
        if n - 1 >= self.n_col {
            offsets.push(n - 1);
        }
        for &off in &offsets {
            let stride = (off / 4).max(1);
            let mut i = 0;
            while i < n {
                pts.push((off, i));
                i += stride;
            }
            if (n - 1) % stride != 0 {
                pts.push((off, n - 1));
            }
        }
        pts
    }
}

/// Conditional-draw operators for `X = A Z + B β`.
///
/// `A` is independent of r0 while `B` scales as `r0^{-5/6}`, so the cached
/// operators are computed once for `r0 = 1` and `B` is rescaled per screen.
#[derive(Debug)]
pub struct ExtensionMatrices {
    pub geometry: ExtensionGeometry,
    pub outer_scale: f64,
    /// `n × m`; columns follow [`ExtensionGeometry::stencil`].
    pub a: DMatrix<f64>,
    /// `n × n` symmetric square root of the unit-r0 conditional covariance.
    pub b_unit: DMatrix<f64>,
    pub stencil: Vec<(usize, usize)>,
}

impl ExtensionMatrices {
    pub fn b_scale(r0: f64) -> f64 {
        r0.powf(-5.0 / 6.0)
    }

    /// New line from the conditioning vector `z` and white noise `beta`.
    pub fn draw(&self, z: &[f64], beta: &[f64], r0: f64) -> Vec<f64> {
        let z = DVector::from_column_slice(z);
        let beta = DVector::from_column_slice(beta);
        let mut x = &self.a * z;
        x.gemv(Self::b_scale(r0), &self.b_unit, &beta, 1.0);
        x.as_slice().to_vec()
    }

    /// Covariance blocks `(⟨ZZᵀ⟩, ⟨XZᵀ⟩, ⟨XXᵀ⟩)` for the given r0; exposed for
    /// verification.
    pub fn covariances(geometry: &ExtensionGeometry, r0: f64, outer_scale: f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let ExtensionGeometry { n, pitch, .. } = *geometry;
        // covariance only depends on (|Δline|, |Δsample|); line gaps reach n
        let mut table = vec![0.0; (n + 1) * n];
        for dc in 0..=n {
            for di in 0..n {
                let r = pitch * ((dc * dc + di * di) as f64).sqrt();
                table[dc * n + di] = phase_covariance(r, r0, outer_scale);
            }
        }
        let cov = |dc: usize, di: usize| table[dc * n + di];
        let pts = geometry.stencil();
        let m = pts.len();
        let zz = DMatrix::from_fn(m, m, |a, b| {
            let ((ca, ia), (cb, ib)) = (pts[a], pts[b]);
            cov(ca.abs_diff(cb), ia.abs_diff(ib))
        });
        // the new line sits one pitch outside line 0
        let xz = DMatrix::from_fn(n, m, |i, b| {
            let (cb, ib) = pts[b];
            cov(cb + 1, i.abs_diff(ib))
        });
        let xx = DMatrix::from_fn(n, n, |i, j| cov(0, i.abs_diff(j)));
        (zz, xz, xx)
    }

    pub fn compute(geometry: ExtensionGeometry, outer_scale: f64) -> Result<Self> {
        if geometry.n_col < 2 {
            return Err(Error::Config("extension needs at least two conditioning lines".into()));
        }
        let (mut zz, xz, xx) = Self::covariances(&geometry, 1.0, outer_scale);
        let m = zz.nrows();
        let reg = 1e-9 * zz.trace() / m as f64;
        for i in 0..m {
            zz[(i, i)] += reg;
        }
        let chol = zz
            .cholesky()
            .ok_or_else(|| Error::Singular(format!("⟨ZZᵀ⟩ for {geometry:?}")))?;
        let zx = xz.transpose();
        let a = chol.solve(&zx).transpose();
        let mut cond = &xx - &a * &zx;
        cond = (&cond + cond.transpose()) * 0.5;
        let eig = cond.symmetric_eigen();
        let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let b_unit = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
        if a.iter().chain(b_unit.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Singular(format!("non-finite extension operators for {geometry:?}")));
        }
        Ok(Self { geometry, outer_scale, a, b_unit, stencil: geometry.stencil() })
    }
}

type CacheKey = (usize, u64, usize, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<ExtensionMatrices>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<ExtensionMatrices>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Extension operators for `geometry`, computed once per geometry and outer
/// scale and shared afterwards.
pub fn extension_matrices(geometry: ExtensionGeometry, params: &ScreenParams) -> Result<Arc<ExtensionMatrices>> {
    let key = (geometry.n, geometry.pitch.to_bits(), geometry.n_col, params.outer_scale.to_bits());
    if let Some(hit) = cache().lock().expect("extension cache poisoned").get(&key) {
        return Ok(hit.clone());
    }
    let fresh = Arc::new(ExtensionMatrices::compute(geometry, params.outer_scale)?);
    let mut guard = cache().lock().expect("extension cache poisoned");
    Ok(guard.entry(key).or_insert(fresh).clone())
}
