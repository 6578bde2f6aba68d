use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{PhaseScreen, PsdScale, ScreenParams, StreamKey};
use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::grid::Grid;
use crate::scalar::{wide, Real};

/// Octaves of 3×3 subharmonics added below the FFT's lowest frequency.
pub const SUBHARMONIC_LEVELS: usize = 3;
/// The FFT screen is drawn on a grid this many times wider and cropped.
pub const SYNTHESIS_PADDING: usize = 2;

/// Draws a zero-mean von Kármán phase sample (rad) on `grid`.
///
/// Fourier synthesis on a `SYNTHESIS_PADDING`-times wider grid supplies the
/// high frequencies and is cropped to the centre; `SUBHARMONIC_LEVELS`
/// octaves of 3×3 subharmonics at spacing `Δf/3^p` restore the
/// low-frequency power the periodic FFT misses.
pub fn synthesize_phase(params: &ScreenParams, grid: &Grid<f64>, rng: &mut impl Rng) -> Result<Vec<f64>> {
    params.validate()?;
    if !(grid.pitch() < params.r0 / 2.0) {
        return Err(Error::Config(format!(
            "grid pitch {} m does not resolve r0 = {} m (need pitch < r0/2)",
            grid.pitch(),
            params.r0
        )));
    }
    let n = grid.n();
    let big = Grid::<f64>::new(n * SYNTHESIS_PADDING, grid.pitch())?;
    let nb = big.n();
    let df = 1.0 / big.extent();
    let freqs = big.freqs();
    let psd = PsdScale::new(params.r0, params.outer_scale);

    let mut spectrum = vec![Complex::new(0.0, 0.0); nb * nb];
    for (ky, &fy) in freqs.iter().enumerate() {
        for (kx, &fx) in freqs.iter().enumerate() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            if kx == 0 && ky == 0 {
                continue;
            }
            let amp = psd.at(fx.hypot(fy)).sqrt() * df;
            spectrum[ky * nb + kx] = Complex::new(re, im) * amp;
        }
    }
    Fft2::<f64>::new(nb).inverse_unnormalized(&mut spectrum);
    // crop so that both grids share the origin sample
    let off = (nb - n) / 2;
    let mut phase = Vec::with_capacity(n * n);
    for iy in 0..n {
        phase.extend(spectrum[(iy + off) * nb + off..(iy + off) * nb + off + n].iter().map(|c| c.re));
    }

    let coords = grid.coords();
    let mut low = vec![0.0; n * n];
    for level in 1..=SUBHARMONIC_LEVELS {
        let dfp = df / 3f64.powi(level as i32);
        for a in -1i32..=1 {
            for b in -1i32..=1 {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                if a == 0 && b == 0 {
                    continue;
                }
                let (fx, fy) = (a as f64 * dfp, b as f64 * dfp);
                let c = Complex::new(re, im) * (psd.at(fx.hypot(fy)).sqrt() * dfp);
                // exp(2πi(fx x + fy y)) factorizes over the axes
                let ex: Vec<Complex<f64>> = coords.iter().map(|&x| Complex::from_polar(1.0, std::f64::consts::TAU * fx * x)).collect();
                for (iy, &y) in coords.iter().enumerate() {
                    let cy = c * Complex::from_polar(1.0, std::f64::consts::TAU * fy * y);
                    for (dst, e) in low[iy * n..(iy + 1) * n].iter_mut().zip(&ex) {
                        *dst += cy.re * e.re - cy.im * e.im;
                    }
                }
            }
        }
    }
    for (p, l) in phase.iter_mut().zip(&low) {
        *p += l;
    }
    let mean = phase.iter().sum::<f64>() / (n * n) as f64;
    phase.iter_mut().for_each(|p| *p -= mean);
    Ok(phase)
}

/// Initial screen for one layer of one realization.
///
/// The RNG stream is fully determined by `key`, so the same key always
/// yields the same screen and the same sequence of extensions.
pub fn initial_screen<T: Real>(params: &ScreenParams, grid: &Grid<T>, key: StreamKey) -> Result<PhaseScreen<T>> {
    let mut rng = key.rng();
    let g64 = Grid::<f64>::new(grid.n(), wide(grid.pitch()))?;
    let phase = synthesize_phase(params, &g64, &mut rng)?;
    PhaseScreen::from_parts(*grid, *params, phase, rng, key)
}
