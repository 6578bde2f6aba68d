use num_complex::Complex;
use oamqkd::field::ComplexField;
use oamqkd::grid::Grid;
use oamqkd::modes::{aperture_inner_product, lg_field, LgModeSpec};
use oamqkd::propagation::{Layer, Propagator, ScreenStack};
use oamqkd::turbulence::{initial_screen, ScreenParams, StreamKey, TurbulenceParams};

const LAMBDA: f64 = 632e-9;

fn grid() -> Grid<f64> {
    Grid::new(256, 1.5625e-3).unwrap()
}

fn full_overlap(a: &ComplexField<f64>, b: &ComplexField<f64>) -> Complex<f64> {
    aperture_inner_product(a, b, a.grid.half_extent() * 2.0).unwrap()
}

#[test]
fn gaussian_waist_doubles_in_area_after_rayleigh_range() {
    let g = grid();
    let spec = LgModeSpec::new(0, 0, 0.03, LAMBDA).unwrap();
    let zr = spec.rayleigh_range();
    let prop = Propagator::new(g, LAMBDA);
    let e = prop.propagate(&lg_field(&spec, &g, 0.0).unwrap(), &ScreenStack::vacuum(zr)).unwrap();
    let (mut m2, mut p) = (0.0, 0.0);
    for iy in 0..g.n() {
        for ix in 0..g.n() {
            let i = e.data[iy * g.n() + ix].norm_sqr();
            let (x, y) = (g.coord(ix), g.coord(iy));
            m2 += i * (x * x + y * y);
            p += i;
        }
    }
    // |E|² ∝ exp(-2r²/w²) has ⟨r²⟩ = w²/2
    let w = (2.0 * m2 / p).sqrt();
    let expected = 2f64.sqrt() * 0.03;
    assert!((w / expected - 1.0).abs() < 0.01, "w = {w}, expected {expected}");
    assert!((w / spec.waist_at(zr) - 1.0).abs() < 0.01);
}

#[test]
fn vacuum_propagation_is_modal_identity() {
    let g = grid();
    let prop = Propagator::new(g, LAMBDA);
    for l in [0, 3, -6, 12] {
        let spec = LgModeSpec::new(0, l, 0.03, LAMBDA).unwrap();
        let out = prop.propagate(&lg_field(&spec, &g, 0.0).unwrap(), &ScreenStack::vacuum(1000.0)).unwrap();
        let target = lg_field(&spec, &g, 1000.0).unwrap();
        let c = full_overlap(&out, &target).norm_sqr();
        assert!(c >= 0.999, "l = {l}: |c|² = {c}");
    }
}

#[test]
fn power_is_conserved_without_absorber_and_never_grows_with_it() {
    let g = grid();
    let spec = LgModeSpec::new(0, 6, 0.03, LAMBDA).unwrap();
    let e = lg_field(&spec, &g, 0.0).unwrap();
    let p0 = e.power();
    let stack = ScreenStack::vacuum(1000.0);
    let free = Propagator::new(g, LAMBDA).without_absorber().propagate(&e, &stack).unwrap();
    assert!((free.power() - p0).abs() < 1e-6);
    let absorbed = Propagator::new(g, LAMBDA).propagate(&e, &stack).unwrap();
    assert!(absorbed.power() <= p0 + 1e-12);
}

fn turbulent_stack(g: &Grid<f64>, r0: f64, layers: usize, seed: u64) -> ScreenStack<f64> {
    let params = ScreenParams::new(r0, 10.0);
    let zs = ScreenStack::slab_midpoints(layers, 1000.0);
    let layers = zs
        .into_iter()
        .enumerate()
        .map(|(i, z)| Layer { screen: initial_screen(&params, g, StreamKey::new(seed, 0, i as u32)).unwrap(), z })
        .collect();
    ScreenStack::new(layers, 1000.0).unwrap()
}

#[test]
fn propagation_is_linear() {
    let g = grid();
    let prop = Propagator::new(g, LAMBDA);
    let stack = turbulent_stack(&g, 0.05, 3, 11);
    let e1 = lg_field(&LgModeSpec::new(0, 2, 0.03, LAMBDA).unwrap(), &g, 0.0).unwrap();
    let e2 = lg_field(&LgModeSpec::new(1, -4, 0.03, LAMBDA).unwrap(), &g, 0.0).unwrap();
    let (a, b) = (Complex::new(0.3, -1.2), Complex::new(-0.7, 0.25));
    let mix = ComplexField::superpose(&[&e1, &e2], &[a, b]).unwrap();
    let lhs = prop.propagate(&mix, &stack).unwrap();
    let (o1, o2) = (prop.propagate(&e1, &stack).unwrap(), prop.propagate(&e2, &stack).unwrap());
    let err = lhs
        .data
        .iter()
        .zip(o1.data.iter().zip(&o2.data))
        .map(|(l, (x, y))| (l - (a * x + b * y)).norm())
        .fold(0.0, f64::max);
    let scale = lhs.data.iter().map(|v| v.norm()).fold(0.0, f64::max);
    assert!(err < 1e-9 * scale.max(1.0), "max deviation {err}");
}

#[test]
fn weak_screen_keeps_oam_spectrum_peaked() {
    let g = grid();
    let prop = Propagator::new(g, LAMBDA);
    let stack = turbulent_stack(&g, 2.0, 1, 5);
    let spec = LgModeSpec::new(0, 3, 0.03, LAMBDA).unwrap();
    let out = prop.propagate(&lg_field(&spec, &g, 0.0).unwrap(), &stack).unwrap();
    let target = lg_field(&spec, &g, 1000.0).unwrap();
    let c = full_overlap(&out, &target).norm_sqr() / out.power();
    assert!(c >= 0.9, "p_3 = {c}");
}

#[test]
fn on_axis_scintillation_matches_weak_fluctuation_theory() {
    let g = grid();
    let k = std::f64::consts::TAU / LAMBDA;
    let cn2 = 0.15 / (1.23 * k.powf(7.0 / 6.0) * 1000f64.powf(11.0 / 6.0));
    let params = TurbulenceParams {
        cn2: Some(cn2),
        r0: None,
        outer_scale: 10.0,
        wind_speed: 0.0,
        wind_direction: std::f64::consts::FRAC_PI_2,
        wavelength: LAMBDA,
        path_length: 1000.0,
        layers: 10,
        n_col: 2,
    };
    assert!((params.rytov_variance().unwrap() - 0.15).abs() < 1e-12);
    let prop = Propagator::new(g, LAMBDA);
    let beam = lg_field(&LgModeSpec::new(0, 0, 0.08, LAMBDA).unwrap(), &g, 0.0).unwrap();
    let n = g.n();
    let c = n / 2;
    // well-separated near-axis samples; the beam is flat over this patch
    let probes: Vec<usize> = [(0, 0), (-12, 0), (12, 0), (0, -12), (0, 12)]
        .iter()
        .map(|&(dx, dy): &(i32, i32)| (c as i32 + dy) as usize * n + (c as i32 + dx) as usize)
        .collect();
    let mut samples = vec![Vec::new(); probes.len()];
    for r in 0..40 {
        let stack = ScreenStack::generate(&params, &g, 99, r).unwrap();
        let out = prop.propagate(&beam, &stack).unwrap();
        for (s, &i) in samples.iter_mut().zip(&probes) {
            s.push(out.data[i].norm_sqr());
        }
    }
    let sigma2 = samples
        .iter()
        .map(|s| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (s.len() - 1) as f64 / (m * m)
        })
        .sum::<f64>()
        / probes.len() as f64;
    assert!(sigma2 > 0.05 && sigma2 < 0.4, "σ_I² = {sigma2}");
}
