use std::fs;
use std::path::Path;

use superlase::model::{hz_to_rad, preset};
use superlase::sweep::*;
use superlase::SystemParams;

fn small(path: &Path, workers: usize) -> SweepConfig {
    let base = preset("sr88").unwrap();
    SweepConfig {
        base,
        n_list: vec![1000, 100],
        eta_grid: EtaGrid { min_hz: 100.0, max_hz: 3e5, points: 8, spacing: Spacing::Log },
        observables: Observables { photons: true, dicke: true, linewidth: true, analytic: true },
        output_path: path.to_path_buf(),
        workers,
    }
}

#[test]
fn rows_are_sorted_and_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(&dir.path().join("a.csv"), 4);
    let rep = run_grid(&cfg).unwrap();
    assert_eq!(rep.rows.len(), 16);
    assert_eq!(rep.computed, 16);
    let keys: Vec<(u64, f64)> = rep.rows.iter().map(|r| (r.n_atoms, r.eta_hz)).collect();
    assert_eq!(keys, cfg.cells());
    for r in &rep.rows {
        assert_ne!(r.status, RowStatus::SolverError, "{r:?}");
        assert!(r.j_over_n.unwrap() <= 0.5 + 1e-6);
        assert!(r.m_over_n.unwrap().abs() <= 0.5 + 1e-6);
        if r.status == RowStatus::Ok {
            assert!(r.delta_nu_hz.unwrap() > 0.0);
        }
    }
    let text = fs::read_to_string(&cfg.output_path).unwrap();
    assert_eq!(text.lines().next().unwrap(), HEADER.join(","));
    assert_eq!(text.lines().count(), 17);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(cfg.meta_path()).unwrap()).unwrap();
    assert_eq!(meta["config_hash"], cfg.hash());
    assert_eq!(meta["complete"], true);
}

#[test]
fn output_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let one = small(&dir.path().join("one.csv"), 1);
    let eight = small(&dir.path().join("eight.csv"), 8);
    run_grid(&one).unwrap();
    run_grid(&eight).unwrap();
    let a = fs::read(&one.output_path).unwrap();
    assert_eq!(a, fs::read(&eight.output_path).unwrap());
    // and a fresh run of the same config reproduces the bytes
    fs::remove_file(&one.output_path).unwrap();
    run_grid(&one).unwrap();
    assert_eq!(a, fs::read(&one.output_path).unwrap());
}

#[test]
fn resume_recomputes_exactly_the_missing_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(&dir.path().join("r.csv"), 3);
    run_grid(&cfg).unwrap();
    let full = fs::read_to_string(&cfg.output_path).unwrap();
    let n_ok = full.lines().filter(|l| l.ends_with(",ok")).count();

    let rep = run_grid(&cfg).unwrap();
    assert_eq!(rep.computed, 16 - n_ok);
    assert_eq!(full, fs::read_to_string(&cfg.output_path).unwrap());

    let lines: Vec<&str> = full.lines().collect();
    let truncated = lines[..lines.len() - 10].join("\n") + "\n";
    fs::write(&cfg.output_path, truncated).unwrap();
    let kept_ok = lines[1..lines.len() - 10].iter().filter(|l| l.ends_with(",ok")).count();
    let rep = run_grid(&cfg).unwrap();
    assert_eq!(rep.computed, 16 - kept_ok);
    assert_eq!(full, fs::read_to_string(&cfg.output_path).unwrap());
}

#[test]
fn corrupt_rows_are_quarantined_and_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(&dir.path().join("c.csv"), 2);
    cfg.observables.linewidth = false;
    run_grid(&cfg).unwrap();
    let full = fs::read_to_string(&cfg.output_path).unwrap();
    let mut lines: Vec<String> = full.lines().map(String::from).collect();
    lines[3] = lines[3].replace(",ok", ",o");
    lines[5].truncate(20);
    fs::write(&cfg.output_path, lines.join("\n") + "\n").unwrap();
    let rep = run_grid(&cfg).unwrap();
    assert_eq!(rep.quarantined, 2);
    assert_eq!(rep.computed, 2);
    assert_eq!(full, fs::read_to_string(&cfg.output_path).unwrap());
    let q = fs::read_to_string(cfg.quarantine_path()).unwrap();
    assert_eq!(q.lines().count(), 2);
}

#[test]
fn empty_file_is_a_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(&dir.path().join("e.csv"), 2);
    cfg.observables.linewidth = false;
    fs::write(&cfg.output_path, "").unwrap();
    assert_eq!(run_grid(&cfg).unwrap().computed, 16);
}

#[test]
fn foreign_output_is_not_overwritten() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(&dir.path().join("f.csv"), 2);
    cfg.observables.linewidth = false;
    fs::write(&cfg.output_path, "precious\n").unwrap();
    assert!(matches!(run_grid(&cfg), Err(superlase::Error::SweepConfig(_))));
    assert_eq!(fs::read_to_string(&cfg.output_path).unwrap(), "precious\n");
    run_grid(&SweepConfig { output_path: dir.path().join("g.csv"), ..cfg.clone() }).unwrap();
    let changed = SweepConfig { output_path: dir.path().join("g.csv"), n_list: vec![10], ..cfg };
    assert!(matches!(run_grid(&changed), Err(superlase::Error::SweepConfig(_))));
}

#[test]
fn unwritable_output_fails_first() {
    let cfg = small(Path::new("/nonexistent-dir/x.csv"), 1);
    let t = std::time::Instant::now();
    assert!(matches!(run_grid(&cfg), Err(superlase::Error::Io { .. })));
    assert!(t.elapsed().as_millis() < 500);
}

#[test]
fn single_uncoupled_cell() {
    let dir = tempfile::tempdir().unwrap();
    let (gamma, eta) = (200.0, 700.0);
    let base = SystemParams::new(1, 0.0, hz_to_rad(1e5), hz_to_rad(gamma));
    let cfg = SweepConfig {
        base,
        n_list: vec![50],
        eta_grid: EtaGrid { min_hz: eta, max_hz: eta, points: 1, spacing: Spacing::Log },
        observables: Observables::default(),
        output_path: dir.path().join("one.csv"),
        workers: 1,
    };
    let rep = run_grid(&cfg).unwrap();
    assert_eq!(rep.rows.len(), 1);
    let r = &rep.rows[0];
    assert_eq!(r.status, RowStatus::Ok);
    assert!((r.inversion.unwrap() - (eta - gamma) / (eta + gamma)).abs() < 1e-12);
    assert_eq!(r.photon_number.unwrap(), 0.0);
}

#[test]
fn sweep_file_fills_defaults() {
    let f = SweepFile::from_json(
        r#"{"base": {"preset": "sr88"}, "n_list": [100], "eta_grid": {"min_hz": 1, "max_hz": 10, "points": 3, "spacing": "linear"}}"#,
    )
    .unwrap();
    assert!(f.resolve(None, None).is_err());
    let cfg = f.resolve(Some("x.csv".into()), Some(3)).unwrap();
    assert_eq!(cfg.workers, 3);
    assert_eq!(cfg.observables, Observables::default());
    assert_eq!(cfg.eta_grid.values(), vec![1.0, 5.5, 10.0]);
}
