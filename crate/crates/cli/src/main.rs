//! `superlase` command line.
//!
//! Every frequency on the command line, in config files and in the output is
//! an ordinary frequency in Hz (not rad/s, no factor 2π).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use superlase::analytic::{crossover_linewidth, limit_linewidths, tieri_linewidth, AnalyticInputs};
use superlase::cumulant::{self, write_trajectory_csv, SolverConfig};
use superlase::dicke::{classify_regime, collective_threshold, dicke_numbers};
use superlase::model::{rad_to_hz, ParamsConfig, Preset};
use superlase::oracle::checks::run_checks;
use superlase::spectrum::{fit_lorentzian, linear_grid, linewidth_with_base, scan_with_base, ScanMethod};
use superlase::sweep::{self, EtaGrid, Observables, Spacing, SweepFile};
use superlase::SystemParams;

#[derive(Parser)]
#[command(
    name = "superlase",
    version,
    about = "Steady states, spectra and linewidths of superradiant lasers (all frequencies in Hz)",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON parameter file; explicit flags override its fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// sr88 or sr87
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Number of atoms
    #[arg(long, global = true)]
    n: Option<u64>,
    /// Repumping rate, Hz
    #[arg(long = "eta-hz", global = true)]
    eta_hz: Option<f64>,
    /// Atom-cavity coupling, Hz
    #[arg(long = "g-hz", global = true)]
    g_hz: Option<f64>,
    /// Cavity decay rate, Hz
    #[arg(long = "kappa-hz", global = true)]
    kappa_hz: Option<f64>,
    /// Spontaneous decay rate, Hz
    #[arg(long = "gamma-hz", global = true)]
    gamma_hz: Option<f64>,
    /// Dephasing rate, Hz
    #[arg(long = "chi-hz", global = true)]
    chi_hz: Option<f64>,
    /// Atom-cavity detuning, Hz
    #[arg(long = "detuning-hz", global = true)]
    detuning_hz: Option<f64>,
    /// Output file (default: standard output)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for `sweep`
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Table format
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    ClosedForm,
    Ode,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SpacingArg {
    Log,
    Linear,
}

#[derive(Args, Clone, Default)]
struct GridArgs {
    /// Atom numbers, comma separated
    #[arg(long = "n-list", value_delimiter = ',')]
    n_list: Option<Vec<u64>>,
    /// Smallest repumping rate, Hz (default γ/100)
    #[arg(long = "eta-min-hz")]
    eta_min_hz: Option<f64>,
    /// Largest repumping rate, Hz (default 1000γ)
    #[arg(long = "eta-max-hz")]
    eta_max_hz: Option<f64>,
    /// Number of η points (default 40)
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, value_enum)]
    spacing: Option<SpacingArg>,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in parameter sets
    Presets,
    /// Cumulant steady state, Dicke numbers and regime (JSON)
    Steady {
        /// Also write the relaxation trajectory as CSV
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Filter-cavity emission spectrum; the Lorentzian fit goes to <out>.fit.json
    Spectrum {
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[arg(long, value_enum, default_value = "closed-form")]
        method: Method,
    },
    /// Parallel (N, η) grid to CSV with resume
    Sweep {
        #[command(flatten)]
        grid: GridArgs,
        /// Include the numerical linewidth (slow)
        #[arg(long)]
        linewidth: bool,
        /// Include the two analytic linewidths
        #[arg(long)]
        analytic: bool,
    },
    /// J/N, M/N and regime over an (N, η) grid
    DickeMap {
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Limiting linewidths and the analytic predictions (JSON)
    Limits,
    /// Compare the moment equations with the exact solution (N ≤ 4)
    OracleCheck,
}

enum CliError {
    Usage(String),
    Lib(superlase::Error),
    ChecksFailed,
}

impl From<superlase::Error> for CliError {
    fn from(e: superlase::Error) -> Self {
        CliError::Lib(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 1 } else { 2 })
        }
        Err(CliError::ChecksFailed) => {
            eprintln!("error: at least one oracle check failed");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let c = &cli.common;
    match &cli.command {
        Command::Presets => presets(c),
        Command::Steady { trajectory } => steady(c, trajectory.as_deref()),
        Command::Spectrum { points, method } => spectrum(c, *points, *method),
        Command::Sweep { grid, linewidth, analytic } => run_sweep(c, grid, *linewidth, *analytic),
        Command::DickeMap { grid } => dicke_map(c, grid),
        Command::Limits => limits(c),
        Command::OracleCheck => oracle_check(c),
    }
}

fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn flag_params(c: &Common) -> ParamsConfig {
    ParamsConfig {
        preset: c.preset.clone(),
        n_atoms: c.n,
        eta_hz: c.eta_hz,
        chi_hz: c.chi_hz,
        g_hz: c.g_hz,
        kappa_hz: c.kappa_hz,
        gamma_hz: c.gamma_hz,
        detuning_hz: c.detuning_hz,
    }
}

/// `--config` overlaid with the explicit flags.
fn effective_params(c: &Common) -> CliResult<ParamsConfig> {
    let base = match &c.config {
        Some(path) => ParamsConfig::from_json(&read_file(path)?)?,
        None => ParamsConfig::default(),
    };
    Ok(base.overlay(&flag_params(c)))
}

fn params_hz(p: &SystemParams) -> Value {
    json!({
        "n_atoms": p.n_atoms,
        "g_hz": rad_to_hz(p.g),
        "kappa_hz": rad_to_hz(p.kappa),
        "gamma_hz": rad_to_hz(p.gamma),
        "eta_hz": rad_to_hz(p.eta),
        "chi_hz": rad_to_hz(p.chi),
        "detuning_hz": rad_to_hz(p.detuning()),
    })
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Lib(superlase::Error::Io { path: path.display().to_string(), source: e }))
}

/// Machine output to `--out` (plus the effective-config sidecar) or stdout.
fn emit(c: &Common, command: &str, config: &Value, text: &str) -> CliResult<()> {
    match &c.out {
        Some(path) => {
            write_text(path, text)?;
            let echo = json!({
                "command": command,
                "version": env!("CARGO_PKG_VERSION"),
                "units": "Hz",
                "config": config,
            });
            write_text(&sidecar(path, "config.json"), &(serde_json::to_string_pretty(&echo).unwrap() + "\n"))
        }
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| CliError::Usage(format!("stdout: {e}")))
        }
    }
}

fn emit_json(c: &Common, command: &str, config: &Value, value: &Value) -> CliResult<()> {
    emit(c, command, config, &(serde_json::to_string_pretty(value).unwrap() + "\n"))
}

#[derive(Clone)]
enum Cell {
    Int(u64),
    Float(f64),
    Str(String),
    Bool(bool),
    Null,
}

impl Cell {
    fn opt(x: Option<f64>) -> Cell {
        x.map_or(Cell::Null, Cell::Float)
    }

    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.8e}"),
            Cell::Str(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Null => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Float(v) => json!(v),
            Cell::Str(s) => json!(s),
            Cell::Bool(b) => json!(b),
            Cell::Null => Value::Null,
        }
    }
}

fn render(header: &[&str], rows: &[Vec<Cell>], format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Csv => {
            out.push_str(&header.join(","));
            out.push('\n');
            for r in rows {
                out.push_str(&r.iter().map(Cell::csv).collect::<Vec<_>>().join(","));
                out.push('\n');
            }
        }
        Format::Jsonl => {
            for r in rows {
                let obj: serde_json::Map<String, Value> =
                    header.iter().zip(r).map(|(h, v)| (h.to_string(), v.json())).collect();
                out.push_str(&Value::Object(obj).to_string());
                out.push('\n');
            }
        }
    }
    out
}

fn presets(c: &Common) -> CliResult<()> {
    let header = ["name", "g_hz", "kappa_hz", "gamma_hz", "purcell_hz", "collective_threshold_n"];
    let rows: Vec<Vec<Cell>> = Preset::all()
        .iter()
        .map(|p| {
            vec![
                Cell::Str(p.name.to_string()),
                Cell::Float(rad_to_hz(p.params.g)),
                Cell::Float(rad_to_hz(p.params.kappa)),
                Cell::Float(rad_to_hz(p.params.gamma)),
                Cell::Float(rad_to_hz(p.params.derived().purcell)),
                Cell::Float(collective_threshold(&p.params).n_threshold),
            ]
        })
        .collect();
    emit(c, "presets", &Value::Null, &render(&header, &rows, c.format.unwrap_or(Format::Csv)))
}

fn steady(c: &Common, trajectory: Option<&Path>) -> CliResult<()> {
    let cfg = effective_params(c)?;
    let p = cfg.resolve()?;
    let solver = SolverConfig::for_params(&p);
    let ss = cumulant::steady_state(&p, &solver)?;
    let s = ss.state;
    let d = dicke_numbers(&s, &p)?;
    let regime = classify_regime(&s, &p)?;
    if let Some(path) = trajectory {
        let traj = cumulant::integrate(&cumulant::initial_state(&p), &p, &solver)?;
        write_trajectory_csv(path, &traj)?;
    }
    eprintln!(
        "N = {}, eta = {:.6e} Hz: <a+a> = {:.6e}, <sz> = {:.6e}, regime {} ({:?})",
        p.n_atoms,
        rad_to_hz(p.eta),
        s.photon_number,
        s.inversion,
        regime.label,
        ss.route
    );
    if let Some(w) = ss.warning {
        eprintln!("warning: {w}");
    }
    let value = json!({
        "photon_number": s.photon_number,
        "atom_photon": [s.atom_photon.re, s.atom_photon.im],
        "inversion": s.inversion,
        "pair_corr": [s.pair_corr.re, s.pair_corr.im],
        "route": format!("{:?}", ss.route).to_lowercase(),
        "residual": ss.residual,
        "physical": ss.physical,
        "cauchy_schwarz_excess": ss.cauchy_schwarz_excess,
        "warning": ss.warning,
        "j_eff": d.j_eff,
        "m_eff": d.m_eff,
        "j_over_n": d.j_over_n,
        "m_over_n": d.m_over_n,
        "regime": regime.label.as_str(),
        "params": params_hz(&p),
        "config": cfg,
    });
    emit_json(c, "steady", &json!(cfg), &value)
}

fn spectrum(c: &Common, points: usize, method: Method) -> CliResult<()> {
    if points < 8 {
        return Err(CliError::Usage("--points must be at least 8".into()));
    }
    let cfg = effective_params(c)?;
    let p = cfg.resolve()?;
    let base = cumulant::steady_state(&p, &SolverConfig::for_params(&p))?.state;
    let lw = linewidth_with_base(&p, &base)?;
    let probe = lw.probe;
    let grid = linear_grid(probe.omega_f, 6.0 * lw.delta_nu, points);
    let method = match method {
        Method::ClosedForm => ScanMethod::ClosedForm,
        Method::Ode => ScanMethod::Ode,
    };
    let scan = scan_with_base(&p, &base, &probe, &grid, method)?;
    let fit = fit_lorentzian(&scan)?;
    let delta_nu = fit.fwhm - probe.beta;
    let fit_json = json!({
        "delta_nu_hz": rad_to_hz(delta_nu),
        "center_hz": rad_to_hz(fit.center),
        "fwhm_hz": rad_to_hz(fit.fwhm),
        "amplitude": fit.amplitude,
        "offset": fit.offset,
        "rms_residual": fit.rms_residual,
        "beta_hz": rad_to_hz(probe.beta),
        "big_g_hz": rad_to_hz(probe.big_g),
        "photon_number": base.photon_number,
        "params": params_hz(&p),
    });
    eprintln!(
        "N = {}, eta = {:.6e} Hz: linewidth {:.6e} Hz (filter width {:.3e} Hz, rms {:.2e})",
        p.n_atoms,
        rad_to_hz(p.eta),
        rad_to_hz(delta_nu),
        rad_to_hz(probe.beta),
        fit.rms_residual
    );
    let peak = scan.intensities().iter().cloned().fold(0.0, f64::max);
    let rows: Vec<Vec<Cell>> = scan
        .points
        .iter()
        .map(|&(w, i)| vec![Cell::Float(rad_to_hz(w)), Cell::Float(i), Cell::Float(if peak > 0.0 { i / peak } else { 0.0 })])
        .collect();
    let text = render(&["omega_f_hz", "intensity", "normalized"], &rows, c.format.unwrap_or(Format::Csv));
    emit(c, "spectrum", &json!(cfg), &text)?;
    match &c.out {
        Some(out) => write_text(&sidecar(out, "fit.json"), &(serde_json::to_string_pretty(&fit_json).unwrap() + "\n")),
        None => {
            eprintln!("{fit_json}");
            Ok(())
        }
    }
}

/// Grid flags over an optional config grid; γ/100 … 1000γ, 40 log points by default.
fn eta_grid(grid: &GridArgs, from_config: Option<EtaGrid>, p: &SystemParams) -> EtaGrid {
    let gamma_hz = rad_to_hz(p.gamma);
    let mut g = from_config.unwrap_or(EtaGrid {
        min_hz: gamma_hz / 100.0,
        max_hz: gamma_hz * 1000.0,
        points: 40,
        spacing: Spacing::Log,
    });
    if let Some(v) = grid.eta_min_hz {
        g.min_hz = v;
    }
    if let Some(v) = grid.eta_max_hz {
        g.max_hz = v;
    }
    if let Some(v) = grid.points {
        g.points = v;
    }
    if let Some(s) = grid.spacing {
        g.spacing = match s {
            SpacingArg::Log => Spacing::Log,
            SpacingArg::Linear => Spacing::Linear,
        };
    }
    g
}

fn n_list(grid: &GridArgs, c: &Common, from_config: Option<Vec<u64>>) -> CliResult<Vec<u64>> {
    grid.n_list
        .clone()
        .or_else(|| c.n.map(|n| vec![n]))
        .or(from_config)
        .ok_or_else(|| CliError::Usage("give the atom numbers with --n-list or --n".into()))
}

fn run_sweep(c: &Common, grid: &GridArgs, linewidth: bool, analytic: bool) -> CliResult<()> {
    if c.format == Some(Format::Jsonl) {
        return Err(CliError::Usage("sweep writes CSV only".into()));
    }
    let file = match &c.config {
        Some(path) => Some(SweepFile::from_json(&read_file(path)?)?),
        None => None,
    };
    let mut flags = flag_params(c);
    // N and η are grid axes here, not base parameters
    flags.n_atoms = None;
    flags.eta_hz = None;
    let base_cfg = file.as_ref().map(|f| f.base.clone()).unwrap_or_default().overlay(&flags);
    let base = base_cfg.resolve()?;
    let mut observables = file.as_ref().map(|f| f.observables).unwrap_or_default();
    observables.linewidth |= linewidth;
    observables.analytic |= analytic;
    let effective = SweepFile {
        base: base_cfg,
        n_list: n_list(grid, c, file.as_ref().map(|f| f.n_list.clone()))?,
        eta_grid: eta_grid(grid, file.as_ref().map(|f| f.eta_grid), &base),
        observables,
        output_path: c.out.clone().or_else(|| file.as_ref().and_then(|f| f.output_path.clone())),
        workers: c.workers.or(file.as_ref().and_then(|f| f.workers)),
    };
    if effective.output_path.is_none() {
        return Err(CliError::Usage("sweep needs an output file (--out or output_path in the config)".into()));
    }
    let cfg = effective.resolve(None, None)?;
    let out = cfg.output_path.clone();
    write_text(
        &sidecar(&out, "config.json"),
        &(serde_json::to_string_pretty(&json!({
            "command": "sweep",
            "version": env!("CARGO_PKG_VERSION"),
            "units": "Hz",
            "config": effective,
        }))
        .unwrap()
            + "\n"),
    )?;
    let report = sweep::run_grid(&cfg)?;
    let failed = report.rows.iter().filter(|r| r.status != sweep::RowStatus::Ok).count();
    eprintln!(
        "{} cells ({} computed, {} reused, {} quarantined, {} not ok) in {:.2} s -> {}",
        report.rows.len(),
        report.computed,
        report.reused,
        report.quarantined,
        failed,
        report.wall_time_s,
        out.display()
    );
    Ok(())
}

fn dicke_map(c: &Common, grid: &GridArgs) -> CliResult<()> {
    let mut cfg = effective_params(c)?;
    cfg.n_atoms = None;
    let p = cfg.resolve()?;
    let ns = n_list(grid, c, None)?;
    let eg = eta_grid(grid, None, &p);
    eg.validate()?;
    let obs = Observables { photons: false, dicke: true, linewidth: false, analytic: false };
    let mut rows = Vec::new();
    let mut ns_sorted = ns.clone();
    ns_sorted.sort_unstable();
    ns_sorted.dedup();
    for &n in &ns_sorted {
        for &eta in &eg.values() {
            let r = sweep::evaluate_cell(&p, n, eta, &obs);
            rows.push(vec![
                Cell::Int(n),
                Cell::Float(eta),
                Cell::opt(r.j_eff),
                Cell::opt(r.m_eff),
                Cell::opt(r.j_over_n),
                Cell::opt(r.m_over_n),
                r.regime.map_or(Cell::Null, |l| Cell::Str(l.as_str().into())),
            ]);
        }
    }
    eprintln!("{} cells", rows.len());
    let header = ["N", "eta_hz", "J", "M", "J_over_N", "M_over_N", "regime"];
    let echo = json!({"params": cfg, "n_list": ns_sorted, "eta_grid": eg});
    emit(c, "dicke-map", &echo, &render(&header, &rows, c.format.unwrap_or(Format::Csv)))
}

fn limits(c: &Common) -> CliResult<()> {
    let cfg = effective_params(c)?;
    let p = cfg.resolve()?;
    let (inputs, m_source) = if p.eta > 0.0 {
        let s = cumulant::steady_state(&p, &SolverConfig::for_params(&p))?.state;
        (AnalyticInputs::new(&p, dicke_numbers(&s, &p)?.m_eff), "steady_state")
    } else {
        (AnalyticInputs::at_ground(&p), "ground")
    };
    let l = limit_linewidths(&inputs);
    let d = p.derived();
    let value = json!({
        "n_purcell_hz": rad_to_hz(l.n_purcell),
        "collective_rabi_hz": rad_to_hz(l.collective_rabi),
        "strong_pump_hz": rad_to_hz(l.strong_pump),
        "cavity_hz": rad_to_hz(l.cavity),
        "purcell_hz": rad_to_hz(d.purcell),
        "big_gamma_hz": rad_to_hz(d.big_gamma),
        "m_eff": inputs.m_eff,
        "m_source": m_source,
        "crossover_hz": crossover_linewidth(&inputs).ok().map(rad_to_hz),
        "mean_field_hz": tieri_linewidth(&inputs, p.eta, p.gamma).ok().map(rad_to_hz),
        "collective_threshold_n": collective_threshold(&p).n_threshold,
        "params": params_hz(&p),
    });
    eprintln!("N = {}: N*Gamma_c = {:.6e} Hz, kappa = {:.6e} Hz", p.n_atoms, rad_to_hz(l.n_purcell), rad_to_hz(l.cavity));
    emit_json(c, "limits", &json!(cfg), &value)
}

fn oracle_check(c: &Common) -> CliResult<()> {
    let mut cfg = effective_params(c)?;
    if cfg.preset.is_none() && cfg.g_hz.is_none() && cfg.kappa_hz.is_none() && cfg.gamma_hz.is_none() {
        // dimensionless test point scaled to κ = 1 kHz: g = κ/4, γ = κ/100, η = 20γ
        cfg = ParamsConfig {
            n_atoms: Some(3),
            g_hz: Some(250.0),
            kappa_hz: Some(1e3),
            gamma_hz: Some(10.0),
            eta_hz: Some(200.0),
            ..ParamsConfig::default()
        }
        .overlay(&cfg);
    }
    let p = cfg.resolve()?;
    if p.n_atoms > 4 {
        return Err(CliError::Usage(format!("oracle-check needs N <= 4, got {}", p.n_atoms)));
    }
    let results = run_checks(&p)?;
    for r in &results {
        eprintln!("[{}] {} max_error = {:.3e} (tolerance {:.0e})", if r.pass { "PASS" } else { "FAIL" }, r.test, r.max_error, r.tolerance);
    }
    let rows: Vec<Vec<Cell>> = results
        .iter()
        .map(|r| vec![Cell::Str(r.test.clone()), Cell::Float(r.max_error), Cell::Float(r.tolerance), Cell::Bool(r.pass)])
        .collect();
    let text = render(&["test", "max_error", "tolerance", "pass"], &rows, c.format.unwrap_or(Format::Jsonl));
    emit(c, "oracle-check", &json!({"params": cfg}), &text)?;
    if results.iter().all(|r| r.pass) {
        Ok(())
    } else {
        Err(CliError::ChecksFailed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use superlase::model::hz_to_rad;

    #[test]
    fn grid_defaults_follow_gamma() {
        let p = superlase::preset("sr88").unwrap();
        let g = eta_grid(&GridArgs::default(), None, &p);
        assert!((g.min_hz - 75.0).abs() < 1e-9);
        assert!((g.max_hz - 7.5e6).abs() < 1e-3);
        assert_eq!(g.points, 40);
        let g = eta_grid(&GridArgs { points: Some(5), ..GridArgs::default() }, None, &p);
        assert_eq!(g.points, 5);
        assert_eq!(hz_to_rad(rad_to_hz(p.gamma)), p.gamma);
    }

    #[test]
    fn csv_and_jsonl_rendering() {
        let rows = vec![vec![Cell::Int(3), Cell::Float(0.5), Cell::Null]];
        assert_eq!(render(&["a", "b", "c"], &rows, Format::Csv), "a,b,c\n3,5.00000000e-1,\n");
        assert_eq!(render(&["a", "b", "c"], &rows, Format::Jsonl), "{\"a\":3,\"b\":0.5,\"c\":null}\n");
    }
}
