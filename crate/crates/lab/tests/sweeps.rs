mod common;

use ddst_lab::workflow;
use ddst_lab::{wilson_interval, LabError};

use common::{small_config, write_identity_checkpoints};

#[test]
fn classic_sweep_needs_no_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.variants = vec!["LS_CE + ZF_SD".into(), "MMSE_CE + MMSE_SD".into()];
    let out = workflow::sweep(&cfg).unwrap();
    assert_eq!(out.result.rows.len(), 2);
    assert!(out.csv.exists() && out.plot_data.exists() && out.metadata.exists());
    assert!(!cfg.checkpoint_path(ddst_lab::Net::Ce).exists());
}

#[test]
fn neural_variant_without_checkpoint_is_a_missing_dependency() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let err = workflow::sweep(&cfg).unwrap_err();
    assert!(matches!(err, LabError::MissingDependency(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("ddst train --net ce"));
}

#[test]
fn three_variants_by_eleven_snrs_give_33_sorted_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.snr_grid_db = (0..=10).map(|k| 3.0 * k as f64).collect();
    cfg.stopping.min_trials = 1;
    cfg.stopping.max_trials = 1;
    write_identity_checkpoints(&cfg);
    let out = workflow::sweep(&cfg).unwrap();
    let rows = &out.result.rows;
    assert_eq!(rows.len(), 33);
    let text = std::fs::read_to_string(&out.csv).unwrap();
    assert_eq!(text.lines().count(), 34);
    assert!(text.starts_with("variant,snr_db,evm_pct,paths,trials,bit_errors,ber,capped,wall_time_s,config_hash\n"));
    for w in rows.windows(2) {
        let key = |r: &ddst_lab::SweepRow| (r.variant.clone(), r.snr_db.to_bits());
        assert!(w[0].variant < w[1].variant || (w[0].variant == w[1].variant && w[0].snr_db < w[1].snr_db), "{:?} {:?}", key(&w[0]), key(&w[1]));
    }
    assert!(text.lines().skip(1).all(|l| l.ends_with(&out.result.config_hash)));
}

#[test]
fn ber_accounting_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.variants = vec!["LS_CE + ZF_SD".into(), "MMSE_CE + ZF_SD".into()];
    cfg.snr_grid_db = vec![0.0, 12.0, 30.0];
    cfg.stopping = ddst_lab::StoppingRule { min_trials: 3, min_errors: 50, max_trials: 40 };
    let out = workflow::sweep(&cfg).unwrap();
    let bpf = out.result.bits_per_frame;
    assert_eq!(bpf, 480);
    for r in &out.result.rows {
        let product = r.ber * (r.trials * bpf) as f64;
        assert_eq!(product.round() as usize, r.bit_errors);
        assert!((product - r.bit_errors as f64).abs() < 1e-9);
        assert_eq!(r.ber, r.bit_errors as f64 / (r.trials * bpf) as f64);
        assert!(r.trials >= 3 && r.trials <= 40);
        // Either enough errors, or the cap stopped the point and says so.
        assert!(r.bit_errors >= 50 || (r.trials == 40 && r.capped), "{r:?}");
    }
    // The CSV keeps every BER bit-exact.
    let mut reader = csv::Reader::from_path(&out.csv).unwrap();
    for (rec, row) in reader.records().zip(&out.result.rows) {
        let rec = rec.unwrap();
        assert_eq!(rec[6].parse::<f64>().unwrap(), row.ber);
        assert_eq!(rec[5].parse::<usize>().unwrap(), row.bit_errors);
    }
}

#[test]
fn deterministic_reruns_write_identical_files() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.variants = vec!["LS_CE + ZF_SD".into(), "MMSE_CE + MMSE_SD".into()];
        cfg.snr_grid_db = vec![6.0, 18.0];
        let out = workflow::sweep(&cfg).unwrap();
        (std::fs::read(out.csv).unwrap(), std::fs::read(out.plot_data).unwrap(), std::fs::read(out.metadata).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn evm_and_path_grids_form_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.variants = vec!["LS_CE + ZF_SD".into()];
    cfg.stopping.min_trials = 1;
    cfg.stopping.max_trials = 1;
    cfg.evm_grid_pct = vec![45.0, 50.0, 55.0, 60.0, 65.0];
    let out = workflow::sweep(&cfg).unwrap();
    let evms: Vec<_> = out.result.rows.iter().map(|r| r.evm_pct.unwrap()).collect();
    assert_eq!(evms, vec![45.0, 50.0, 55.0, 60.0, 65.0]);

    cfg.evm_grid_pct.clear();
    cfg.paths_grid = vec![4, 6, 8, 10, 12];
    let out = workflow::sweep(&cfg).unwrap();
    let paths: Vec<_> = out.result.rows.iter().map(|r| r.paths).collect();
    assert_eq!(paths, vec![4, 6, 8, 10, 12]);
    let blocks: std::collections::BTreeSet<String> =
        std::fs::read_to_string(out.plot_data).unwrap().lines().skip(1).map(|l| l.split(',').next().unwrap().to_owned()).collect();
    assert_eq!(blocks.len(), 5);
}

#[test]
fn wilson_interval_matches_hand_values() {
    // p = 0.5, n = 100: centre 0.5, half-width z*sqrt(0.0025 + z^2/40000)/(1 + z^2/100).
    let z: f64 = 1.959_963_984_540_054;
    let half = z * (0.0025 + z * z / 40_000.0).sqrt() / (1.0 + z * z / 100.0);
    let (lo, hi) = wilson_interval(50, 100);
    assert!((lo - (0.5 - half)).abs() < 1e-15 && (hi - (0.5 + half)).abs() < 1e-15);
    // Zero errors still give a positive upper bound, z^2/(n + z^2).
    let (lo, hi) = wilson_interval(0, 1000);
    assert_eq!(lo, 0.0);
    assert!((hi - z * z / (1000.0 + z * z)).abs() < 1e-15);
}
