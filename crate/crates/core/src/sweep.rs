//! Parallel (N, η) grids with CSV persistence and resume.
//!
//! Rows are written as they finish so an interrupted run leaves a usable
//! checkpoint; the file is rewritten in sorted order at the end. A second run
//! with the same configuration skips every cell already marked `ok`.
//!
//! ```no_run
//! use superlase::sweep::{run_grid, EtaGrid, Observables, Spacing, SweepConfig};
//!
//! let base = superlase::preset("sr88").unwrap();
//! let cfg = SweepConfig {
//!     base,
//!     n_list: vec![100, 1000],
//!     eta_grid: EtaGrid { min_hz: 1e2, max_hz: 1e6, points: 20, spacing: Spacing::Log },
//!     observables: Observables::default(),
//!     output_path: "fig2.csv".into(),
//!     workers: 4,
//! };
//! let report = run_grid(&cfg).unwrap();
//! println!("{} rows, {} computed", report.rows.len(), report.computed);
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytic::{crossover_linewidth, tieri_linewidth, AnalyticInputs};
use crate::cumulant::{steady_state, SolverConfig};
use crate::dicke::{classify_regime, dicke_numbers, RegimeLabel};
use crate::error::{Error, Result};
use crate::model::{hz_to_rad, rad_to_hz, ParamsConfig, SystemParams};
use crate::spectrum::linewidth_with_base;

/// Bumped whenever the CSV columns or their meaning change.
pub const SCHEMA_VERSION: u32 = 1;

pub const HEADER: [&str; 14] = [
    "n_atoms",
    "eta_hz",
    "photon_number",
    "inversion",
    "pair_corr_re",
    "j_eff",
    "m_eff",
    "j_over_n",
    "m_over_n",
    "regime",
    "delta_nu_hz",
    "delta_nu_eq3_hz",
    "delta_nu_eq4_hz",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Log,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaGrid {
    pub min_hz: f64,
    pub max_hz: f64,
    pub points: usize,
    pub spacing: Spacing,
}

impl EtaGrid {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::SweepConfig(m.into()));
        if !(self.min_hz.is_finite() && self.max_hz.is_finite()) || self.min_hz < 0.0 {
            return bad("eta_grid bounds must be finite and non-negative");
        }
        // a single cell is spelled points = 1 with min = max
        if self.points == 1 && self.min_hz == self.max_hz {
            return Ok(());
        }
        if self.points < 2 {
            return bad("eta_grid.points must be at least 2 (or 1 with min_hz = max_hz)");
        }
        if !(self.max_hz > self.min_hz) {
            return bad("eta_grid.max_hz must exceed min_hz");
        }
        if self.spacing == Spacing::Log && !(self.min_hz > 0.0) {
            return bad("log spacing needs min_hz > 0");
        }
        Ok(())
    }

    /// Grid values in Hz; both end points are exact.
    pub fn values(&self) -> Vec<f64> {
        let last = self.points - 1;
        (0..self.points)
            .map(|i| {
                if i == last {
                    return self.max_hz;
                }
                let t = i as f64 / last as f64;
                match self.spacing {
                    Spacing::Linear => self.min_hz + t * (self.max_hz - self.min_hz),
                    Spacing::Log => self.min_hz * (self.max_hz / self.min_hz).powf(t),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Observables {
    pub photons: bool,
    pub dicke: bool,
    pub linewidth: bool,
    pub analytic: bool,
}

impl Default for Observables {
    fn default() -> Self {
        Self { photons: true, dicke: true, linewidth: false, analytic: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Everything except N and η.
    pub base: SystemParams,
    pub n_list: Vec<u64>,
    pub eta_grid: EtaGrid,
    pub observables: Observables,
    pub output_path: PathBuf,
    pub workers: usize,
}

/// On-disk form of [`SweepConfig`]: the base system is given in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub base: ParamsConfig,
    pub n_list: Vec<u64>,
    pub eta_grid: EtaGrid,
    #[serde(default)]
    pub observables: Observables,
    pub output_path: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.eta_grid.validate()?;
        if self.n_list.is_empty() {
            return Err(Error::SweepConfig("n_list is empty".into()));
        }
        if self.n_list.contains(&0) {
            return Err(Error::SweepConfig("n_list entries must be positive".into()));
        }
        if self.workers == 0 {
            return Err(Error::SweepConfig("workers must be at least 1".into()));
        }
        self.base.with_n(self.n_list[0]).validate()
    }

    /// SHA-256 over everything that can change the data rows.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            schema: u32,
            base: &'a SystemParams,
            n_list: &'a [u64],
            eta_grid: &'a EtaGrid,
            observables: &'a Observables,
        }
        let key = Key {
            schema: SCHEMA_VERSION,
            base: &self.base,
            n_list: &self.n_list,
            eta_grid: &self.eta_grid,
            observables: &self.observables,
        };
        let bytes = serde_json::to_vec(&key).expect("plain data serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Sorted, de-duplicated cell list.
    pub fn cells(&self) -> Vec<(u64, f64)> {
        let mut ns = self.n_list.clone();
        ns.sort_unstable();
        ns.dedup();
        let etas = self.eta_grid.values();
        ns.iter().flat_map(|&n| etas.iter().map(move |&e| (n, e))).collect()
    }

    pub fn meta_path(&self) -> PathBuf {
        sidecar(&self.output_path, "meta.json")
    }

    pub fn quarantine_path(&self) -> PathBuf {
        sidecar(&self.output_path, "quarantine.csv")
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    SolverError,
    FitError,
}

impl RowStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::SolverError => "solver_error",
            RowStatus::FitError => "fit_error",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ok" => RowStatus::Ok,
            "solver_error" => RowStatus::SolverError,
            "fit_error" => RowStatus::FitError,
            _ => return None,
        })
    }
}

/// One grid cell. Frequencies in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_atoms: u64,
    pub eta_hz: f64,
    pub photon_number: Option<f64>,
    pub inversion: Option<f64>,
    pub pair_corr_re: Option<f64>,
    pub j_eff: Option<f64>,
    pub m_eff: Option<f64>,
    pub j_over_n: Option<f64>,
    pub m_over_n: Option<f64>,
    pub regime: Option<RegimeLabel>,
    pub delta_nu_hz: Option<f64>,
    pub delta_nu_eq3_hz: Option<f64>,
    pub delta_nu_eq4_hz: Option<f64>,
    pub status: RowStatus,
}

fn fmt_f(x: f64) -> String {
    format!("{x:.8e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

impl SweepRow {
    fn empty(n_atoms: u64, eta_hz: f64, status: RowStatus) -> Self {
        Self {
            n_atoms,
            eta_hz,
            photon_number: None,
            inversion: None,
            pair_corr_re: None,
            j_eff: None,
            m_eff: None,
            j_over_n: None,
            m_over_n: None,
            regime: None,
            delta_nu_hz: None,
            delta_nu_eq3_hz: None,
            delta_nu_eq4_hz: None,
            status,
        }
    }

    pub fn record(&self) -> Vec<String> {
        vec![
            self.n_atoms.to_string(),
            fmt_f(self.eta_hz),
            fmt_opt(self.photon_number),
            fmt_opt(self.inversion),
            fmt_opt(self.pair_corr_re),
            fmt_opt(self.j_eff),
            fmt_opt(self.m_eff),
            fmt_opt(self.j_over_n),
            fmt_opt(self.m_over_n),
            self.regime.map(|r| r.as_str().to_string()).unwrap_or_default(),
            fmt_opt(self.delta_nu_hz),
            fmt_opt(self.delta_nu_eq3_hz),
            fmt_opt(self.delta_nu_eq4_hz),
            self.status.as_str().to_string(),
        ]
    }

    /// Parses a data record; `None` for anything malformed.
    pub fn parse(fields: &[&str]) -> Option<Self> {
        if fields.len() != HEADER.len() {
            return None;
        }
        let num = |s: &str| -> Option<Option<f64>> {
            if s.is_empty() {
                return Some(None);
            }
            s.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some)
        };
        let regime = match fields[9] {
            "" => None,
            s => Some(s.parse().ok()?),
        };
        Some(Self {
            n_atoms: fields[0].parse().ok()?,
            eta_hz: num(fields[1])??,
            photon_number: num(fields[2])?,
            inversion: num(fields[3])?,
            pair_corr_re: num(fields[4])?,
            j_eff: num(fields[5])?,
            m_eff: num(fields[6])?,
            j_over_n: num(fields[7])?,
            m_over_n: num(fields[8])?,
            regime,
            delta_nu_hz: num(fields[10])?,
            delta_nu_eq3_hz: num(fields[11])?,
            delta_nu_eq4_hz: num(fields[12])?,
            status: RowStatus::parse(fields[13])?,
        })
    }

    fn key(&self) -> (u64, String) {
        (self.n_atoms, fmt_f(self.eta_hz))
    }
}

/// Evaluates one cell: steady state, Dicke numbers, regime, then the
/// optional linewidth and analytic predictions.
pub fn evaluate_cell(base: &SystemParams, n_atoms: u64, eta_hz: f64, obs: &Observables) -> SweepRow {
    let params = base.with_n(n_atoms).with_eta(hz_to_rad(eta_hz));
    let ss = match steady_state(&params, &SolverConfig::for_params(&params)) {
        Ok(ss) => ss,
        Err(_) => return SweepRow::empty(n_atoms, eta_hz, RowStatus::SolverError),
    };
    let state = ss.state;
    let (dicke, regime) = match (dicke_numbers(&state, &params), classify_regime(&state, &params)) {
        (Ok(d), Ok(r)) => (d, r),
        _ => return SweepRow::empty(n_atoms, eta_hz, RowStatus::SolverError),
    };
    let mut row = SweepRow::empty(n_atoms, eta_hz, RowStatus::Ok);
    if obs.photons {
        row.photon_number = Some(state.photon_number);
        row.inversion = Some(state.inversion);
        row.pair_corr_re = Some(state.pair_corr.re);
    }
    if obs.dicke {
        row.j_eff = Some(dicke.j_eff);
        row.m_eff = Some(dicke.m_eff);
        row.j_over_n = Some(dicke.j_over_n);
        row.m_over_n = Some(dicke.m_over_n);
        row.regime = Some(regime.label);
    }
    if obs.analytic {
        let inputs = AnalyticInputs::new(&params, dicke.m_eff);
        // outside their domains the formulas have no value; the cell is still fine
        row.delta_nu_eq3_hz = tieri_linewidth(&inputs, params.eta, params.gamma).ok().map(rad_to_hz);
        row.delta_nu_eq4_hz = crossover_linewidth(&inputs).ok().map(rad_to_hz);
    }
    if obs.linewidth {
        match linewidth_with_base(&params, &state) {
            Ok(lw) => row.delta_nu_hz = Some(rad_to_hz(lw.delta_nu)),
            Err(_) => row.status = RowStatus::FitError,
        }
    }
    row
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Every cell, sorted by (N, η).
    pub rows: Vec<SweepRow>,
    pub computed: usize,
    pub reused: usize,
    pub quarantined: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    schema_version: u32,
    config_hash: String,
    code_version: String,
    complete: bool,
    wall_time_s: f64,
    cells: usize,
    computed: usize,
    reused: usize,
    quarantined: usize,
    config: SweepConfig,
}

struct Existing {
    rows: Vec<SweepRow>,
    corrupt: Vec<String>,
}

fn header_line() -> String {
    HEADER.join(",")
}

/// Splits an existing output file into reusable rows and corrupt lines.
fn read_existing(cfg: &SweepConfig) -> Result<Option<Existing>> {
    let path = &cfg.output_path;
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(path, e)),
    };
    if text.trim().is_empty() {
        return Ok(None);
    }
    let meta_path = cfg.meta_path();
    let meta: Option<Meta> = fs::read_to_string(&meta_path).ok().and_then(|t| serde_json::from_str(&t).ok());
    match meta {
        Some(m) if m.config_hash == cfg.hash() => {}
        _ => {
            return Err(Error::SweepConfig(format!(
                "{} exists but was not produced by this configuration (missing or different {}); move it away first",
                path.display(),
                meta_path.display()
            )))
        }
    }
    let mut lines = text.lines();
    let mut out = Existing { rows: Vec::new(), corrupt: Vec::new() };
    if lines.next() != Some(header_line().as_str()) {
        out.corrupt.extend(text.lines().map(str::to_string));
        return Ok(Some(out));
    }
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        match SweepRow::parse(&fields) {
            // a row that does not reproduce its own text was damaged in place
            Some(row) if row.record().join(",") == line => out.rows.push(row),
            _ => out.corrupt.push(line.to_string()),
        }
    }
    Ok(Some(out))
}

fn write_atomic(path: &Path, rows: &[&SweepRow]) -> Result<()> {
    let tmp = sidecar(path, "tmp");
    {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = csv::WriterBuilder::new().from_writer(file);
        w.write_record(HEADER)?;
        for r in rows {
            w.write_record(r.record())?;
        }
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_meta(cfg: &SweepConfig, report: &SweepReport, complete: bool) -> Result<()> {
    let meta = Meta {
        schema_version: SCHEMA_VERSION,
        config_hash: cfg.hash(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        complete,
        wall_time_s: report.wall_time_s,
        cells: cfg.cells().len(),
        computed: report.computed,
        reused: report.reused,
        quarantined: report.quarantined,
        config: cfg.clone(),
    };
    let path = cfg.meta_path();
    let text = serde_json::to_string_pretty(&meta)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// Runs every missing cell of the grid and leaves a sorted CSV at
/// `cfg.output_path` plus a JSON sidecar.
pub fn run_grid(cfg: &SweepConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let start = Instant::now();
    let cells = cfg.cells();
    let order: BTreeMap<(u64, String), usize> =
        cells.iter().enumerate().map(|(i, &(n, e))| ((n, fmt_f(e)), i)).collect();

    let existing = read_existing(cfg)?;
    let mut done: Vec<Option<SweepRow>> = vec![None; cells.len()];
    let mut corrupt = Vec::new();
    if let Some(ex) = existing {
        corrupt = ex.corrupt;
        for row in ex.rows {
            if row.status != RowStatus::Ok {
                continue;
            }
            if let Some(&i) = order.get(&row.key()) {
                done[i].get_or_insert(row);
            }
        }
    }
    if !corrupt.is_empty() {
        let qp = cfg.quarantine_path();
        let mut q = OpenOptions::new().create(true).append(true).open(&qp).map_err(|e| Error::io(&qp, e))?;
        for line in &corrupt {
            writeln!(q, "{line}").map_err(|e| Error::io(&qp, e))?;
        }
    }

    // checkpoint file: reusable rows first, then rows in completion order
    let kept: Vec<&SweepRow> = done.iter().flatten().collect();
    let reused = kept.len();
    write_atomic(&cfg.output_path, &kept)?;
    let mut report = SweepReport { rows: Vec::new(), computed: 0, reused, quarantined: corrupt.len(), wall_time_s: 0.0 };
    write_meta(cfg, &report, false)?;

    let file = OpenOptions::new()
        .append(true)
        .open(&cfg.output_path)
        .map_err(|e| Error::io(&cfg.output_path, e))?;
    let sink = Mutex::new(csv::WriterBuilder::new().has_headers(false).from_writer(file));
    let todo: Vec<usize> = (0..cells.len()).filter(|&i| done[i].is_none()).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::SweepConfig(format!("thread pool: {e}")))?;
    let fresh: Vec<(usize, SweepRow)> = pool.install(|| {
        todo.par_iter()
            .map(|&i| {
                let (n, eta) = cells[i];
                let row = evaluate_cell(&cfg.base, n, eta, &cfg.observables);
                let mut w = sink.lock().unwrap_or_else(|p| p.into_inner());
                // checkpoint only; the final sorted rewrite is authoritative
                let _ = w.write_record(row.record()).and_then(|_| Ok(w.flush()?));
                (i, row)
            })
            .collect()
    });
    drop(sink);
    report.computed = fresh.len();
    for (i, row) in fresh {
        done[i] = Some(row);
    }
    let rows: Vec<SweepRow> = done.into_iter().map(|r| r.expect("every cell evaluated")).collect();
    write_atomic(&cfg.output_path, &rows.iter().collect::<Vec<_>>())?;
    report.rows = rows;
    report.wall_time_s = start.elapsed().as_secs_f64();
    write_meta(cfg, &report, true)?;
    Ok(report)
}

/// (N, formatted η) keys of the cells marked `ok` in an existing output.
pub fn completed_cells(cfg: &SweepConfig) -> Result<HashSet<(u64, String)>> {
    Ok(read_existing(cfg)?
        .map(|ex| ex.rows.into_iter().filter(|r| r.status == RowStatus::Ok).map(|r| r.key()).collect())
        .unwrap_or_default())
}

impl SweepFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn resolve(&self, output_path: Option<PathBuf>, workers: Option<usize>) -> Result<SweepConfig> {
        let output_path = output_path
            .or_else(|| self.output_path.clone())
            .ok_or_else(|| Error::SweepConfig("no output path".into()))?;
        let cfg = SweepConfig {
            base: self.base.resolve()?,
            n_list: self.n_list.clone(),
            eta_grid: self.eta_grid,
            observables: self.observables,
            output_path,
            workers: workers.or(self.workers).unwrap_or(1),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
