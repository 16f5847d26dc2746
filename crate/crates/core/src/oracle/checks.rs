//! Self-checks of the moment equations against the exact solution, run from
//! the command line.

use faer::{c64, Mat};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{moment_derivatives, moments, oracle_steady_state, product_state, OracleSpace, MAX_ATOMS};
use crate::cumulant::{self, MomentState, SolverConfig};
use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::spectrum::{filter_rhs, ExtendedState, FilterProbe};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub test: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckResult {
    fn new(test: &str, max_error: f64, tolerance: f64) -> Self {
        Self { test: test.into(), max_error, tolerance, pass: max_error <= tolerance }
    }
}

/// Worst component-wise relative error, floored at 1e-3 of the vector norm.
fn mismatch(exact: &[Complex64], approx: &[Complex64]) -> f64 {
    let norm = exact.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    exact
        .iter()
        .zip(approx)
        .map(|(e, a)| (e - a).norm() / e.norm().max(1e-3 * norm))
        .fold(0.0, f64::max)
}

fn as_vec(m: &MomentState) -> Vec<Complex64> {
    vec![Complex64::new(m.photon_number, 0.0), m.atom_photon, Complex64::new(m.inversion, 0.0), m.pair_corr]
}

/// Deterministic qubit state with Bloch vector of length < 1.
fn qubit(k: usize) -> [[c64; 2]; 2] {
    let t = k as f64 + 0.5;
    let (x, y, z) = (0.5 * t.sin(), 0.4 * (1.7 * t).cos(), 0.45 * (0.9 * t).sin());
    [
        [c64::new((1.0 - z) / 2.0, 0.0), c64::new(x / 2.0, -y / 2.0)],
        [c64::new(x / 2.0, y / 2.0), c64::new((1.0 + z) / 2.0, 0.0)],
    ]
}

/// Mixture of a truncated coherent state and a thermal-like diagonal; the top
/// level is left empty so the cutoff does not enter first derivatives.
fn mode(k: usize, dim: usize) -> Mat<c64> {
    let alpha = c64::from_polar(0.6 + 0.1 * (k % 3) as f64, 0.7 * k as f64);
    let mut psi: Vec<c64> = vec![c64::new(0.0, 0.0); dim];
    let mut term = c64::new(1.0, 0.0);
    for (n, v) in psi.iter_mut().enumerate().take(dim - 1) {
        if n > 0 {
            term = term * alpha / (n as f64).sqrt();
        }
        *v = term;
    }
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    let diag: Vec<f64> = (0..dim).map(|n| if n + 1 < dim { 0.5f64.powi(n as i32) } else { 0.0 }).collect();
    let dnorm: f64 = diag.iter().sum();
    Mat::from_fn(dim, dim, |i, j| {
        let pure = psi[i] * psi[j].conj() / norm * 0.7;
        if i == j {
            pure + c64::new(0.3 * diag[i] / dnorm, 0.0)
        } else {
            pure
        }
    })
}

/// Runs every check for `params` (N ≤ 4 atoms).
pub fn run_checks(params: &SystemParams) -> Result<Vec<CheckResult>> {
    params.validate()?;
    let na = params.n_atoms as usize;
    if na > MAX_ATOMS.min(4) {
        return Err(Error::InvalidParams(format!("oracle checks need N ≤ 4, got {na}")));
    }
    let mut out = Vec::new();

    let space = OracleSpace::new(na, 6);
    let mut worst = 0.0f64;
    for k in 0..10 {
        let rho = product_state(&space, &qubit(k), &mode(k, space.nc()), None)?;
        let m = moments(&space, &rho)?.as_moment_state();
        let exact = moment_derivatives(params, &space, None, &rho)?.base;
        let approx = cumulant::rhs(&m, params)?;
        worst = worst.max(mismatch(&as_vec(&exact), &as_vec(&approx)));
    }
    out.push(CheckResult::new("moment_derivatives", worst, 1e-10));

    let fspace = OracleSpace::with_filter(na, 4, 3);
    let probe = FilterProbe::new(0.07 * params.kappa, 0.05 * params.kappa, 0.1 * params.kappa);
    let mut worst = 0.0f64;
    for k in 0..5 {
        let rho = product_state(&fspace, &qubit(k), &mode(k, fspace.nc()), Some(&mode(k + 7, fspace.nf())))?;
        let m = moments(&fspace, &rho)?;
        let ext = ExtendedState {
            base: m.as_moment_state(),
            filter_number: m.filter_number.unwrap_or_default(),
            cross_photon: m.cross_photon.unwrap_or_default(),
            cross_atom: m.cross_atom.unwrap_or_default(),
        };
        let exact = moment_derivatives(params, &fspace, Some(&probe), &rho)?;
        let d = filter_rhs(&ext, params, &probe)?;
        let (df, dx, dy) = exact.filter.unwrap_or_default();
        let mut e = as_vec(&exact.base);
        e.extend([Complex64::new(df, 0.0), dx, dy]);
        let mut a = as_vec(&d.base);
        a.extend([Complex64::new(d.filter_number, 0.0), d.cross_photon, d.cross_atom]);
        worst = worst.max(mismatch(&e, &a));
    }
    out.push(CheckResult::new("filter_derivatives", worst, 1e-10));

    let ss = oracle_steady_state(params, 4)?;
    let rho = &ss.rho_ss;
    out.push(CheckResult::new("steady_state_trace", (rho.trace() - c64::new(1.0, 0.0)).norm(), 1e-9));
    out.push(CheckResult::new("steady_state_hermiticity", rho.hermiticity_error(), 1e-9));
    out.push(CheckResult::new("steady_state_positivity", (-rho.min_eigenvalue()?).max(0.0), 1e-9));
    out.push(CheckResult::new("steady_state_residual", ss.residual, 1e-9));

    let cum = cumulant::steady_state(params, &SolverConfig::for_params(params))?;
    let exact_n = ss.moments.photon_number;
    let rel = (cum.state.photon_number - exact_n).abs() / exact_n.abs().max(1e-12);
    out.push(CheckResult::new("photon_number_vs_cumulant", rel, 0.2));
    Ok(out)
}
