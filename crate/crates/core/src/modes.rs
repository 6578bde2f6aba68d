//! Laguerre-Gaussian modes, angular-position superpositions, Zernike
//! polynomials and aperture-weighted overlaps.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::field::{ComplexField, PhaseMap};
use crate::grid::Grid;
use crate::scalar::{lit, wide, Real};
use crate::special::{laguerre, ln_factorial};

/// Power a grid may lose to truncation before [`lg_field`] refuses the mode.
pub const MAX_TRUNCATION_LOSS: f64 = 1e-3;

/// Laguerre-Gaussian mode `LG_{p,l}` launched with waist `w0` at `z = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LgModeSpec<T: Real> {
    pub p: u32,
    pub l: i32,
    pub w0: T,
    pub wavelength: T,
}

impl<T: Real> LgModeSpec<T> {
    pub fn new(p: u32, l: i32, w0: T, wavelength: T) -> Result<Self> {
        if !(w0 > T::zero()) || !(wavelength > T::zero()) {
            return Err(Error::Config(format!(
                "LG mode needs positive waist and wavelength (w0 = {w0}, λ = {wavelength})"
            )));
        }
        Ok(Self { p, l, w0, wavelength })
    }

    pub fn wavenumber(&self) -> T {
        T::TAU() / self.wavelength
    }

    pub fn rayleigh_range(&self) -> T {
        T::PI() * self.w0 * self.w0 / self.wavelength
    }

    /// Beam radius `w_z = w0 √(1 + (z/z_R)²)`.
    pub fn waist_at(&self, z: T) -> T {
        let q = z / self.rayleigh_range();
        self.w0 * (T::one() + q * q).sqrt()
    }

    /// Wavefront radius of curvature; infinite at the waist plane.
    pub fn curvature_radius(&self, z: T) -> T {
        if z == T::zero() {
            return T::infinity();
        }
        let q = self.rayleigh_range() / z;
        z * (T::one() + q * q)
    }

    pub fn gouy(&self, z: T) -> T {
        (z / self.rayleigh_range()).atan()
    }

    /// `A = √(2 p! / (π (p+|l|)!))`, evaluated in log space.
    pub fn normalization(&self) -> T {
        let al = self.l.unsigned_abs();
        let ln_a =
            0.5 * ((2.0f64).ln() + ln_factorial(self.p) - std::f64::consts::PI.ln() - ln_factorial(self.p + al));
        lit(ln_a.exp())
    }

    /// Analytic field value at polar position `(r, φ)` in plane `z`.
    pub fn value(&self, r: T, phi: T, z: T) -> Complex<T> {
        let w = self.waist_at(z);
        let al = self.l.unsigned_abs();
        let rho = r / w;
        let radial = self.normalization() / w
            * (lit::<T>(2.0f64.sqrt()) * rho).powi(al as i32)
            * lit::<T>(laguerre(self.p, al as f64, wide(lit::<T>(2.0) * rho * rho)))
            * (-rho * rho).exp();
        let curvature = self.curvature_radius(z);
        let curv_phase = if curvature.is_infinite() {
            T::zero()
        } else {
            self.wavenumber() * r * r / (lit::<T>(2.0) * curvature)
        };
        let order = lit::<T>((2 * self.p + al + 1) as f64);
        let phase = curv_phase + lit::<T>(self.l as f64) * phi - order * self.gouy(z);
        Complex::from_polar(radial, phase)
    }
}

/// Samples `LG_{p,l}` in plane `z` and renormalizes it to unit grid power.
///
/// Fails with [`Error::Truncation`] when the grid captures less than
/// `1 − MAX_TRUNCATION_LOSS` of the analytic (unit) power.
pub fn lg_field<T: Real>(spec: &LgModeSpec<T>, grid: &Grid<T>, z: T) -> Result<ComplexField<T>> {
    let mut field = ComplexField::from_fn(*grid, z, |x, y| spec.value(x.hypot(y), y.atan2(x), z));
    let captured = wide(field.power());
    if 1.0 - captured > MAX_TRUNCATION_LOSS {
        return Err(Error::Truncation { captured });
    }
    field.normalize();
    Ok(field)
}

/// Coefficients `c_m = exp(−2πi j m / d) / √d`, `m = −L..=L`, of the `j`-th
/// angular-position state in the OAM basis.
pub fn ang_coeffs<T: Real>(j: usize, l_max: usize) -> Vec<Complex<T>> {
    let d = 2 * l_max + 1;
    assert!(j < d, "angular index {j} outside 0..{d}");
    let amp = T::one() / lit::<T>(d as f64).sqrt();
    (-(l_max as i64)..=(l_max as i64))
        .map(|m| {
            // reduce jm mod d first so the phase stays accurate for large products
            let k = ((j as i64 * m).rem_euclid(d as i64)) as f64;
            Complex::from_polar(amp, lit::<T>(-std::f64::consts::TAU * k / d as f64))
        })
        .collect()
}

/// Angular dependence of a Zernike polynomial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Azimuth {
    Radial,
    Cos,
    Sin,
}

/// Noll single index `j ≥ 1` → radial order `n`, azimuthal order `m ≥ 0` and
/// the azimuthal factor (even `j` carries cos, odd `j` carries sin).
pub fn noll_to_nm(j: usize) -> (u32, u32, Azimuth) {
    assert!(j >= 1, "Noll indices start at 1");
    let mut n = 0usize;
    while (n + 1) * (n + 2) / 2 < j {
        n += 1;
    }
    let k = j - n * (n + 1) / 2 - 1;
    // within order n, |m| rises in steps of 2 and every m > 0 appears twice
    let mut ms = Vec::with_capacity(n + 1);
    let mut m = n % 2;
    while m <= n {
        if m == 0 {
            ms.push(0);
        } else {
            ms.push(m);
            ms.push(m);
        }
        m += 2;
    }
    let m = ms[k];
    let az = if m == 0 {
        Azimuth::Radial
    } else if j % 2 == 0 {
        Azimuth::Cos
    } else {
        Azimuth::Sin
    };
    (n as u32, m as u32, az)
}

fn zernike_radial(n: u32, m: u32, rho: f64) -> f64 {
    let mut out = 0.0;
    let half_plus = (n + m) / 2;
    let half_minus = (n - m) / 2;
    for s in 0..=half_minus {
        let ln_c = ln_factorial(n - s) - ln_factorial(s) - ln_factorial(half_plus - s) - ln_factorial(half_minus - s);
        let c = ln_c.exp().round();
        let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
        out += sign * c * rho.powi((n - 2 * s) as i32);
    }
    out
}

/// Noll-normalized Zernike polynomial at normalized radius `rho ≤ 1`.
pub fn zernike_value(j: usize, rho: f64, theta: f64) -> f64 {
    let (n, m, az) = noll_to_nm(j);
    let radial = zernike_radial(n, m, rho);
    let norm = (n as f64 + 1.0).sqrt();
    match az {
        Azimuth::Radial => norm * radial,
        Azimuth::Cos => norm * std::f64::consts::SQRT_2 * radial * (m as f64 * theta).cos(),
        Azimuth::Sin => norm * std::f64::consts::SQRT_2 * radial * (m as f64 * theta).sin(),
    }
}

/// Samples Zernike `Z_j` on the disk `r < radius`, zero outside.
pub fn zernike_eval<T: Real>(noll_index: usize, grid: &Grid<T>, radius: T) -> PhaseMap<T> {
    let r_ap = wide(radius);
    PhaseMap::from_fn(*grid, |x, y| {
        let (x, y) = (wide(x), wide(y));
        let rho = x.hypot(y) / r_ap;
        if rho < 1.0 {
            lit(zernike_value(noll_index, rho, y.atan2(x)))
        } else {
            T::zero()
        }
    })
}

/// Zernike modes `Z_1..Z_N` sampled on a disk and cached.
///
/// The cached samples are re-orthonormalized (modified Gram-Schmidt in Noll
/// order) under the discrete disk average `(1/N_disk) Σ f g`, the sampled
/// stand-in for `(1/πR²) ∫ f g dA`. Edge pixelization leaves raw samples
/// orthogonal only to ~2e-3; after re-orthonormalization projection and
/// reconstruction form an exact projector pair on the grid.
#[derive(Clone, Debug)]
pub struct ZernikeBasis<T: Real> {
    grid: Grid<T>,
    radius: T,
    indices: Vec<usize>,
    modes: Vec<Vec<T>>,
}

impl<T: Real> ZernikeBasis<T> {
    pub fn new(order: usize, grid: &Grid<T>, radius: T) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("Zernike basis needs at least one mode".into()));
        }
        if radius > grid.half_extent() || !(radius > T::zero()) {
            return Err(Error::Config(format!(
                "Zernike aperture radius {radius} must lie in (0, {}]",
                grid.half_extent()
            )));
        }
        let indices = grid.disk_indices(radius);
        let n = grid.n();
        let r_ap = wide(radius);
        let polar: Vec<(f64, f64)> = indices
            .iter()
            .map(|&idx| {
                let x = wide(grid.coord(idx % n));
                let y = wide(grid.coord(idx / n));
                (x.hypot(y) / r_ap, y.atan2(x))
            })
            .collect();
        let count = indices.len() as f64;
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / count;
        let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(order);
        for j in 1..=order {
            let mut v: Vec<f64> = polar.iter().map(|&(rho, th)| zernike_value(j, rho, th)).collect();
            for _ in 0..2 {
                for u in &ortho {
                    let c = dot(&v, u);
                    for (vi, ui) in v.iter_mut().zip(u) {
                        *vi -= c * ui;
                    }
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm < 1e-6 {
                return Err(Error::Config(format!(
                    "aperture too coarsely sampled to resolve Zernike mode {j}"
                )));
            }
            v.iter_mut().for_each(|x| *x /= norm);
            ortho.push(v);
        }
        let modes = ortho.into_iter().map(|v| v.into_iter().map(lit).collect()).collect();
        Ok(Self { grid: *grid, radius, indices, modes })
    }

    pub fn order(&self) -> usize {
        self.modes.len()
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    /// Row-major grid indices of the aperture samples.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Samples of mode `j` (1-based Noll index) at [`Self::indices`].
    pub fn mode(&self, j: usize) -> &[T] {
        &self.modes[j - 1]
    }

    /// Mode `j` scattered onto the full grid.
    pub fn mode_map(&self, j: usize) -> PhaseMap<T> {
        let mut map = PhaseMap::zeros(self.grid);
        for (&idx, &v) in self.indices.iter().zip(self.mode(j)) {
            map.values[idx] = v;
        }
        map
    }

    /// Discrete disk average `(1/N_disk) Σ a b` over the aperture.
    pub fn disk_average(&self, a: &[T], b: &[T]) -> T {
        a.iter().zip(b).map(|(&x, &y)| x * y).sum::<T>() / lit(self.indices.len() as f64)
    }
}

/// `∫_{r ≤ R} a · b* dA` with a hard circular mask.
pub fn aperture_inner_product<T: Real>(
    a: &ComplexField<T>,
    b: &ComplexField<T>,
    radius: T,
) -> Result<Complex<T>> {
    a.ensure_compatible(b)?;
    let grid = &a.grid;
    let n = grid.n();
    let r2 = radius * radius;
    let mut acc = Complex::new(T::zero(), T::zero());
    for iy in 0..n {
        let y = grid.coord(iy);
        for ix in 0..n {
            let x = grid.coord(ix);
            if x * x + y * y < r2 {
                let k = iy * n + ix;
                acc = acc + a.data[k] * b.data[k].conj();
            }
        }
    }
    Ok(acc * grid.cell_area())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize, pitch: f64) -> Grid<f64> {
        Grid::new(n, pitch).unwrap()
    }

    #[test]
    fn fundamental_mode_is_flat_phase_unit_power() {
        let g = grid(128, 1e-3);
        let spec = LgModeSpec::new(0, 0, 0.01, 632e-9).unwrap();
        let f = lg_field(&spec, &g, 0.0).unwrap();
        assert!((f.power() - 1.0).abs() < 1e-6);
        assert!(f.data.iter().all(|c| c.im.abs() <= 1e-12 * c.norm().max(1e-300)));
    }

    #[test]
    fn vortex_has_zero_center_and_winds_three_times() {
        let g = grid(128, 1e-3);
        let spec = LgModeSpec::new(0, 3, 0.01, 632e-9).unwrap();
        let f = lg_field(&spec, &g, 0.0).unwrap();
        let n = g.n();
        assert_eq!(f.data[(n / 2) * n + n / 2].norm(), 0.0);
        let winding = loop_winding(&f, 20);
        assert!((winding - 3.0 * 2.0 * PI).abs() < 1e-6);
    }

    /// Sum of wrapped phase differences around the square loop of half-size `h` pixels.
    fn loop_winding(f: &ComplexField<f64>, h: usize) -> f64 {
        let n = f.grid.n();
        let c = n / 2;
        let mut pts = Vec::new();
        for i in 0..2 * h {
            pts.push((c + h, c - h + i));
        }
        for i in 0..2 * h {
            pts.push((c + h - i, c + h));
        }
        for i in 0..2 * h {
            pts.push((c - h, c + h - i));
        }
        for i in 0..2 * h {
            pts.push((c - h + i, c - h));
        }
        let phase = |p: (usize, usize)| f.data[p.1 * n + p.0].arg();
        let mut total = 0.0;
        for k in 0..pts.len() {
            let d = phase(pts[(k + 1) % pts.len()]) - phase(pts[k]);
            total += (d + PI).rem_euclid(2.0 * PI) - PI;
        }
        total
    }

    #[test]
    fn truncated_mode_is_rejected_with_captured_fraction() {
        let g = grid(64, 1e-3);
        let spec = LgModeSpec::new(0, 4, 0.02, 632e-9).unwrap();
        match lg_field(&spec, &g, 0.0) {
            Err(Error::Truncation { captured }) => assert!(captured < 0.999 && captured > 0.0),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn normalization_matches_closed_form() {
        let spec = LgModeSpec::new(2, -3, 0.01_f64, 1e-6).unwrap();
        let expected = (2.0 * 2.0 / (PI * 120.0)).sqrt();
        assert!((spec.normalization() - expected).abs() < 1e-14);
        // |l| = 20 must not overflow
        let big = LgModeSpec::new(5, 20, 0.01_f64, 1e-6).unwrap();
        assert!(big.normalization().is_finite() && big.normalization() > 0.0);
    }

    #[test]
    fn beam_parameters_follow_gaussian_optics() {
        let spec = LgModeSpec::new(0, 0, 0.03_f64, 632e-9).unwrap();
        let zr = spec.rayleigh_range();
        assert!((spec.waist_at(zr) - 0.03 * 2f64.sqrt()).abs() < 1e-15);
        assert!(spec.waist_at(1000.0) >= spec.w0);
        assert!(spec.curvature_radius(0.0).is_infinite());
        assert!((spec.curvature_radius(zr) - 2.0 * zr).abs() < 1e-9);
        assert!((spec.gouy(zr) - PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn ang_coeffs_examples() {
        let c = ang_coeffs::<f64>(0, 1);
        for v in &c {
            assert!((v.re - 1.0 / 3f64.sqrt()).abs() < 1e-15 && v.im.abs() < 1e-15);
        }
        for l in 1..4 {
            for j in 0..2 * l + 1 {
                let n: f64 = ang_coeffs::<f64>(j, l).iter().map(|c| c.norm_sqr()).sum();
                assert!((n - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn ang_states_are_orthonormal_by_geometric_series() {
        // ⟨j|j'⟩ = (1/d) Σ_m e^{2πi (j-j') m / d}: the finite geometric series
        // sums to d when j = j' and to (1 - e^{2πi(j-j')})/(1 - e^{2πi(j-j')/d}) = 0 otherwise.
        let big_l = 2;
        let d = 2 * big_l + 1;
        for j in 0..d {
            for k in 0..d {
                let a = ang_coeffs::<f64>(j, big_l);
                let b = ang_coeffs::<f64>(k, big_l);
                let s: Complex<f64> = a.iter().zip(&b).map(|(x, y)| y.conj() * x).sum();
                let expected = if j == k { 1.0 } else { 0.0 };
                assert!((s.re - expected).abs() < 1e-14 && s.im.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn noll_table_first_entries() {
        let table = [
            (1, (0, 0, Azimuth::Radial)),
            (2, (1, 1, Azimuth::Cos)),
            (3, (1, 1, Azimuth::Sin)),
            (4, (2, 0, Azimuth::Radial)),
            (5, (2, 2, Azimuth::Sin)),
            (6, (2, 2, Azimuth::Cos)),
            (7, (3, 1, Azimuth::Sin)),
            (8, (3, 1, Azimuth::Cos)),
            (11, (4, 0, Azimuth::Radial)),
            (22, (6, 0, Azimuth::Radial)),
        ];
        for (j, nm) in table {
            assert_eq!(noll_to_nm(j), nm, "j = {j}");
        }
    }

    #[test]
    fn piston_and_defocus_values() {
        let g = grid(64, 1.0);
        let piston = zernike_eval(1, &g, 20.0);
        assert_eq!(piston.at(32, 32), 1.0);
        assert_eq!(piston.at(32 + 10, 32), 1.0);
        assert_eq!(piston.at(1, 1), 0.0);
        let defocus = zernike_eval(4, &g, 20.0);
        assert!((defocus.at(32, 32) + 3f64.sqrt()).abs() < 1e-15);
        // edge value √3(2·1 − 1) at ρ = 1; the rim itself is outside the open disk
        assert!((zernike_value(4, 1.0, 0.0) - 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(defocus.at(52, 32), 0.0);
    }

    #[test]
    fn inner_product_limits() {
        let g = grid(128, 1e-3);
        let spec = LgModeSpec::new(0, 1, 0.01, 632e-9).unwrap();
        let a = lg_field(&spec, &g, 0.0).unwrap();
        let b = lg_field(&LgModeSpec { l: 2, ..spec }, &g, 0.0).unwrap();
        let full = g.half_extent();
        assert!((aperture_inner_product(&a, &a, full).unwrap().re - 1.0).abs() < 1e-6);
        assert!(aperture_inner_product(&a, &b, full).unwrap().norm() < 1e-3);
        assert_eq!(aperture_inner_product(&a, &a, 0.0).unwrap().norm(), 0.0);
        let other = ComplexField::zeros(grid(64, 1e-3), 0.0);
        assert!(matches!(aperture_inner_product(&a, &other, full), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn basis_rejects_oversized_aperture() {
        let g = grid(64, 1.0);
        assert!(ZernikeBasis::new(10, &g, 40.0).is_err());
        assert!(ZernikeBasis::new(0, &g, 20.0).is_err());
    }
}
