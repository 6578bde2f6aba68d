use std::fs;
use std::path::Path;

use oamqkd::ao::{AoConfig, AoMode};
use oamqkd::runner::{read_records, Sweep, SweepAxis, Variant};
use oamqkd::{run_experiment, summarize_dir, Experiment64, ExperimentConfig, RunOptions};

fn variant(name: &str, mode: AoMode) -> Variant {
    Variant { name: name.into(), ao: AoConfig { mode, ..AoConfig::default() }, aperture: None }
}

fn small(realizations: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.grid.size = 128;
    cfg.grid.pitch = 3.125e-3;
    cfg.turbulence.cn2 = None;
    cfg.turbulence.r0 = Some(0.05);
    cfg.run.realizations = realizations;
    cfg.variants = vec![
        variant("none", AoMode::None),
        variant("realistic", AoMode::Realistic),
        variant("ideal", AoMode::Ideal),
    ];
    cfg
}

fn opts(threads: usize) -> RunOptions {
    RunOptions { threads: Some(threads) }
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn sweep_writes_the_documented_layout() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(2);
    cfg.run.sweep = Some(Sweep { axis: SweepAxis::R0, values: vec![0.05, 0.1] });
    let report = run_experiment(&cfg, dir.path(), &opts(1)).unwrap();
    assert_eq!(report.status, "complete");
    assert_eq!(report.points.len(), 2);
    assert!(dir.path().join("run.json").exists());
    for v in ["none", "realistic", "ideal"] {
        let vdir = dir.path().join(v);
        assert_eq!(first_line(&vdir.join("sweep.csv")), "axis,mean_Q,se_Q,mean_r,se_r");
        assert_eq!(fs::read_to_string(vdir.join("sweep.csv")).unwrap().lines().count(), 3);
        for point in ["r0_0.05", "r0_0.1"] {
            let p = vdir.join(point);
            assert_eq!(first_line(&p.join("records.csv")), "i,t,Q_oam,Q_ang,Q,r_min,captured_energy,residues");
            assert_eq!(first_line(&p.join("degenerate.csv")), "i,t,reason");
            assert_eq!(first_line(&p.join("histogram.csv")), "bin_lo,bin_hi,count");
            assert_eq!(read_records(&p.join("records.csv")).unwrap().len(), 2);
            for stem in ["oam", "ang"] {
                for i in 0..2 {
                    assert!(p.join("crosstalk").join(format!("{stem}_{i}.csv")).exists());
                }
            }
        }
    }
    // stronger turbulence scores worse without correction
    let none = &report.points.iter().map(|p| p.variants[0].summary.clone().unwrap().mean_q).collect::<Vec<_>>();
    assert!(none[0] > none[1], "{none:?}");
}

#[test]
fn single_variant_writes_into_the_root() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(1);
    cfg.variants.clear();
    cfg.output.formats = vec!["records".into()];
    run_experiment(&cfg, dir.path(), &opts(1)).unwrap();
    assert!(dir.path().join("records.csv").exists());
    assert!(!dir.path().join("crosstalk").exists());
    assert!(!dir.path().join("run.json").exists());
}

#[test]
fn interrupted_run_resumes_to_the_same_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(3);
    run_experiment(&cfg, dir.path(), &opts(1)).unwrap();
    let path = dir.path().join("realistic").join("records.csv");
    let complete = fs::read_to_string(&path).unwrap();

    // pretend the run died after one realization, mid-way through a row
    fs::write(dir.path().join("none").join("progress"), "1\n").unwrap();
    let mut partial: String = complete.lines().take(2).map(|l| format!("{l}\n")).collect();
    partial.push_str("2,0,0.1,0.");
    fs::write(&path, partial).unwrap();

    run_experiment(&cfg, dir.path(), &opts(1)).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), complete);
}

#[test]
fn directory_of_another_run_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&small(1), dir.path(), &opts(1)).unwrap();
    let mut other = small(1);
    other.run.master_seed = 99;
    let err = run_experiment(&other, dir.path(), &opts(1)).unwrap_err().to_string();
    assert!(err.contains("different run"), "{err}");
}

#[test]
fn thread_count_does_not_change_the_output() {
    let cfg = small(4);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&cfg, a.path(), &opts(1)).unwrap();
    run_experiment(&cfg, b.path(), &opts(3)).unwrap();
    for v in ["none", "realistic", "ideal"] {
        let ra = fs::read(a.path().join(v).join("records.csv")).unwrap();
        let rb = fs::read(b.path().join(v).join("records.csv")).unwrap();
        assert_eq!(ra, rb, "variant {v}");
        let ma = fs::read(a.path().join(v).join("crosstalk").join("ang_3.csv")).unwrap();
        let mb = fs::read(b.path().join(v).join("crosstalk").join("ang_3.csv")).unwrap();
        assert_eq!(ma, mb);
    }
}

#[test]
fn summarize_reproduces_the_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&small(2), dir.path(), &opts(1)).unwrap();
    let again = summarize_dir(dir.path()).unwrap();
    assert_eq!(again.points.len(), report.points.len());
    for (a, b) in again.points[0].variants.iter().zip(&report.points[0].variants) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.summary, b.summary);
    }
}

#[test]
fn ideal_correction_dominates_realistic_on_paired_screens() {
    // σ_R² ≈ 0.2: scintillation is mild, so the full phase is the better estimate
    let exp = Experiment64::new(&small(1)).unwrap();
    let names = exp.variant_names();
    assert_eq!(names, ["none", "realistic", "ideal"]);
    let mut sums = [0.0; 3];
    let n = 6;
    for i in 0..n {
        let r = exp.run_realization(i).unwrap();
        let q: Vec<f64> = r.per_variant.iter().map(|o| o[0].record().unwrap().q).collect();
        assert!(q[2] <= q[1] + 1e-9, "realization {i}: ideal {} vs realistic {}", q[2], q[1]);
        sums.iter_mut().zip(&q).for_each(|(s, v)| *s += v);
    }
    assert!(sums[2] < sums[0] && sums[1] < sums[0], "{sums:?}");
}

#[test]
fn partial_toml_fills_in_defaults() {
    let cfg = ExperimentConfig::from_toml(
        "[turbulence]\nr0 = 0.05\n[run]\nrealizations = 3\n[[variants]]\nname = \"ideal\"\nao = { mode = \"ideal\" }\n",
    )
    .unwrap();
    assert_eq!(cfg.turbulence.r0, Some(0.05));
    assert_eq!(cfg.turbulence.outer_scale, 10.0);
    assert_eq!(cfg.turbulence.layers, 10);
    assert_eq!(cfg.run.realizations, 3);
    assert_eq!(cfg.variants[0].ao.mode, AoMode::Ideal);
    assert_eq!(cfg.variants[0].ao.order, 30);
    let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn bad_configs_are_rejected() {
    assert!(ExperimentConfig::from_toml("[turbulence]\nr0 = 0.05\ncolour = 3\n").is_err());
    assert!(ExperimentConfig::from_toml("[run]\nrealizations = 0\n").is_err());
    assert!(ExperimentConfig::from_toml("[run.sweep]\naxis = \"r0\"\nvalues = [0.1, 0.05, 0.2]\n").is_err());
    assert!(ExperimentConfig::from_toml("[[variants]]\nname = \"a\"\n[[variants]]\nname = \"a\"\n").is_err());
}
