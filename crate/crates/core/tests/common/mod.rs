#![allow(dead_code)]

use std::f64::consts::PI;

use oamqkd::modes::zernike_value;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A smooth test phase on an `n × n` pixel grid, nonzero on a centred disk.
pub struct SyntheticPhase {
    pub n: usize,
    pub truth: Vec<f64>,
    pub region: Vec<bool>,
    pub modes: usize,
    pub peak_to_valley: f64,
}

/// Random sum of up to 36 Noll modes, scaled to a peak-to-valley drawn from
/// `(π, max_pv]`, redrawn until no neighbouring pair inside the disk
/// differs by π or more (so the wrapped map is residue-free).
pub fn residue_free_zernike_phase(seed: u64, n: usize, radius_px: f64, max_pv: f64) -> SyntheticPhase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (n / 2) as f64;
    let region: Vec<bool> = (0..n * n)
        .map(|i| {
            let (x, y) = ((i % n) as f64 - c, (i / n) as f64 - c);
            x.hypot(y) < radius_px
        })
        .collect();
    loop {
        let modes = rng.random_range(2..=36);
        let coeffs: Vec<f64> = (1..=modes)
            .map(|j| if j == 1 { 0.0 } else { rng.sample::<f64, _>(StandardNormal) / j as f64 })
            .collect();
        let mut truth = vec![0.0; n * n];
        for (i, v) in truth.iter_mut().enumerate() {
            if region[i] {
                let (x, y) = ((i % n) as f64 - c, (i / n) as f64 - c);
                let rho = x.hypot(y) / radius_px;
                *v = coeffs.iter().enumerate().map(|(j, a)| a * zernike_value(j + 1, rho, y.atan2(x))).sum();
            }
        }
        let (lo, hi) = truth
            .iter()
            .zip(&region)
            .filter(|(_, &r)| r)
            .fold((f64::MAX, f64::MIN), |(lo, hi), (&v, _)| (lo.min(v), hi.max(v)));
        let pv = rng.random_range(PI..=max_pv);
        let s = pv / (hi - lo);
        truth.iter_mut().for_each(|v| *v *= s);
        let smooth = (0..n * n).all(|i| {
            let (ix, iy) = (i % n, i / n);
            !region[i]
                || [(ix + 1 < n, i + 1), (iy + 1 < n, i + n)]
                    .iter()
                    .all(|&(ok, j)| !ok || !region[j] || (truth[j] - truth[i]).abs() < PI)
        });
        if smooth {
            return SyntheticPhase { n, truth, region, modes, peak_to_valley: pv };
        }
    }
}
