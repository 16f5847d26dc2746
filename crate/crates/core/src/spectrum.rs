//! Emission spectrum seen through a weakly coupled filter cavity.
//!
//! The filter mode f (frequency ω_f, loss β) couples to the cavity as
//! `G (a f† + a† f)`. Its steady photon number as a function of ω_f traces
//! the emission line. Besides the base moments three filter moments enter:
//!
//! ```text
//! d⟨f†f⟩/dt  = 2G Im⟨af†⟩ − β⟨f†f⟩
//! d⟨af†⟩/dt  = i ω̃₁ ⟨af†⟩ + iG(n − ⟨f†f⟩) − i g N ⟨σ⁻f†⟩
//! d⟨σ⁻f†⟩/dt = i ω̃₂ ⟨σ⁻f†⟩ + iG c* + i g s ⟨af†⟩
//! ω̃₁ = ω_f − ω_c + i(β+κ)/2,   ω̃₂ = ω_f − ω_a + i[(β+γ+η)/2 + χ]
//! ```
//!
//! and the filter feeds back on the base moments through
//! `dn/dt −= 2G Im⟨af†⟩` and `dc/dt −= iG⟨σ⁻f†⟩*`.
//!
//! Dropping the feedback and the ⟨f†f⟩ term in the second equation gives
//!
//! ```text
//! ⟨f†f⟩ = −(2G²/β) Im[(ω̃₂ n + N g c*) / (ω̃₁ω̃₂ + N g² s)]
//! ```

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cumulant::{self, MomentState, SolverConfig};
use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::newton::{self, NewtonOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterProbe {
    pub big_g: f64,
    pub beta: f64,
    pub omega_f: f64,
}

impl FilterProbe {
    pub fn new(big_g: f64, beta: f64, omega_f: f64) -> Self {
        Self { big_g, beta, omega_f }
    }

    pub fn at(&self, omega_f: f64) -> Self {
        Self { omega_f, ..*self }
    }

    /// `G²/(κβ)`; small when the filter barely loads the system.
    pub fn weakness(&self, kappa: f64) -> f64 {
        self.big_g * self.big_g / (kappa * self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.big_g.is_finite() && self.beta.is_finite() && self.omega_f.is_finite();
        if !finite || self.big_g < 0.0 || self.beta <= 0.0 {
            return Err(Error::Probe(format!("need G ≥ 0 and β > 0 (got G = {}, β = {})", self.big_g, self.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtendedState {
    pub base: MomentState,
    pub filter_number: f64,
    /// `⟨a f†⟩`
    pub cross_photon: Complex64,
    /// `⟨σ⁻ᵢ f†⟩`
    pub cross_atom: Complex64,
}

impl ExtendedState {
    pub fn to_array(&self) -> [f64; 11] {
        let b = self.base.to_array();
        [
            b[0],
            b[1],
            b[2],
            b[3],
            b[4],
            b[5],
            self.filter_number,
            self.cross_photon.re,
            self.cross_photon.im,
            self.cross_atom.re,
            self.cross_atom.im,
        ]
    }

    pub fn from_array(x: &[f64; 11]) -> Self {
        let base = MomentState::from_array(&[x[0], x[1], x[2], x[3], x[4], x[5]]);
        Self {
            base,
            filter_number: x[6],
            cross_photon: Complex64::new(x[7], x[8]),
            cross_atom: Complex64::new(x[9], x[10]),
        }
    }
}

fn omegas(p: &SystemParams, probe: &FilterProbe) -> (Complex64, Complex64) {
    let w1 = Complex64::new(probe.omega_f - p.omega_c, (probe.beta + p.kappa) / 2.0);
    let w2 = Complex64::new(probe.omega_f - p.omega_a, (probe.beta + p.gamma + p.eta) / 2.0 + p.chi);
    (w1, w2)
}

fn ext_rhs_array(x: &[f64; 11], p: &SystemParams, probe: &FilterProbe) -> [f64; 11] {
    let base = cumulant::rhs_array(&[x[0], x[1], x[2], x[3], x[4], x[5]], p);
    let (w1, w2) = omegas(p, probe);
    let big_g = probe.big_g;
    let gn = p.g * p.n();
    let (n, cr, ci, s) = (x[0], x[1], x[2], x[3]);
    let (f, xr, xi, yr, yi) = (x[6], x[7], x[8], x[9], x[10]);
    [
        base[0] - 2.0 * big_g * xi,
        base[1] - big_g * yi,
        base[2] - big_g * yr,
        base[3],
        base[4],
        base[5],
        2.0 * big_g * xi - probe.beta * f,
        -w1.re * xi - w1.im * xr + gn * yi,
        w1.re * xr - w1.im * xi + big_g * (n - f) - gn * yr,
        -w2.re * yi - w2.im * yr + big_g * ci - p.g * s * xi,
        w2.re * yr - w2.im * yi + big_g * cr + p.g * s * xr,
    ]
}

/// Time derivative of the base and filter moments, feedback included.
pub fn filter_rhs(ext: &ExtendedState, params: &SystemParams, probe: &FilterProbe) -> Result<ExtendedState> {
    let x = ext.to_array();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("extended state"));
    }
    Ok(ExtendedState::from_array(&ext_rhs_array(&x, params, probe)))
}

/// Weak-probe steady values `(⟨f†f⟩, ⟨af†⟩, ⟨σ⁻f†⟩)`.
pub fn closed_form_filter(
    base: &MomentState,
    params: &SystemParams,
    probe: &FilterProbe,
) -> Result<(f64, Complex64, Complex64)> {
    probe.validate()?;
    let (w1, w2) = omegas(params, probe);
    let n_at = params.n();
    let g = params.g;
    let den = w1 * w2 + n_at * g * g * base.inversion;
    if den.norm() <= 1e-300 || den.norm() <= 1e-15 * (w1 * w2).norm().max(n_at * g * g) {
        return Err(Error::PolaritonPole(probe.omega_f));
    }
    let num = w2 * base.photon_number + base.atom_photon.conj() * (n_at * g);
    let x = -num / den * probe.big_g;
    let y = -(base.atom_photon.conj() * probe.big_g + x * (g * base.inversion)) / w2;
    let f = 2.0 * probe.big_g * x.im / probe.beta;
    Ok((f, x, y))
}

/// Weak-probe filter photon number at `probe.omega_f`.
pub fn closed_form_point(base: &MomentState, params: &SystemParams, probe: &FilterProbe) -> Result<f64> {
    if !base.is_finite() {
        return Err(Error::NonFinite("moment state"));
    }
    closed_form_filter(base, params, probe).map(|(f, _, _)| f)
}

/// Steady state of the extended system by Newton iteration from the weak-probe values.
pub fn extended_steady_state(
    base: &MomentState,
    params: &SystemParams,
    probe: &FilterProbe,
) -> Result<ExtendedState> {
    probe.validate()?;
    if probe.big_g == 0.0 {
        return Ok(ExtendedState {
            base: *base,
            filter_number: 0.0,
            cross_photon: Complex64::new(0.0, 0.0),
            cross_atom: Complex64::new(0.0, 0.0),
        });
    }
    let (f0, x0c, y0c) = closed_form_filter(base, params, probe)?;
    let seed = ExtendedState { base: *base, filter_number: f0, cross_photon: x0c, cross_atom: y0c }.to_array();

    let mut scale = [0.0; 11];
    let pairs = [(1, 2), (4, 5), (7, 8), (9, 10)];
    for i in 0..11 {
        scale[i] = seed[i].abs();
    }
    for (a, b) in pairs {
        let m = seed[a].hypot(seed[b]);
        scale[a] = m;
        scale[b] = m;
    }
    scale[3] = scale[3].max(1e-3);
    let floor = scale.iter().cloned().fold(0.0, f64::max) * 1e-300;
    for (i, s) in scale.iter_mut().enumerate() {
        // filter moments vanish together with G; keep their weights relative to F
        let rel = if i >= 6 { seed[6].abs() * 1e-12 } else { 1e-15 };
        *s = s.max(rel).max(floor).max(1e-300);
    }

    let raw = |x: &[f64; 11]| ext_rhs_array(x, params, probe);
    let jac0 = newton::fd_jacobian(&raw, &seed, &scale);
    let mut eq_scale = [0.0; 11];
    let r0 = raw(&seed);
    for i in 0..11 {
        let mut acc = r0[i].abs();
        for j in 0..11 {
            acc += jac0[(i, j)].abs() * scale[j];
        }
        eq_scale[i] = if acc > 0.0 { acc } else { 1.0 };
    }
    let scaled = |x: &[f64; 11]| {
        let r = raw(x);
        let mut out = [0.0; 11];
        for i in 0..11 {
            out[i] = r[i] / eq_scale[i];
        }
        out
    };
    let opts = NewtonOptions { tol: 1e-13, max_iter: 50, residual_floor: 1e-11 };
    let out = newton::newton(&scaled, |x| newton::fd_jacobian(&scaled, x, &scale), seed, &scale, &opts);
    if !out.converged {
        return Err(Error::Probe(format!("extended steady state did not converge (scaled residual {:.3e})", out.residual)));
    }
    Ok(ExtendedState::from_array(&out.x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMethod {
    /// Extended steady state re-solved at every filter frequency.
    Ode,
    ClosedForm,
    /// Exact two-time correlator, normalized to unit peak.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumScan {
    /// `(ω_f, ⟨f†f⟩)`
    pub points: Vec<(f64, f64)>,
    pub method: ScanMethod,
}

impl SpectrumScan {
    pub fn omegas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    /// Intensities divided by their maximum.
    pub fn normalized(&self) -> Vec<f64> {
        let peak = self.points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        self.points.iter().map(|p| p.1 / peak).collect()
    }
}

pub fn linear_grid(center: f64, half_width: f64, points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n).map(|i| center - half_width + 2.0 * half_width * i as f64 / (n - 1) as f64).collect()
}

/// Filter scan around a known base steady state.
pub fn scan_with_base(
    params: &SystemParams,
    base: &MomentState,
    probe: &FilterProbe,
    grid: &[f64],
    method: ScanMethod,
) -> Result<SpectrumScan> {
    probe.validate()?;
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Probe("frequency grid must be strictly increasing".into()));
    }
    let point = |&w: &f64| -> Result<(f64, f64)> {
        let pr = probe.at(w);
        let v = match method {
            ScanMethod::ClosedForm => closed_form_point(base, params, &pr),
            ScanMethod::Ode => extended_steady_state(base, params, &pr).map(|e| e.filter_number),
            ScanMethod::Oracle => Err(Error::Probe("oracle spectra come from the oracle module".into())),
        };
        v.map(|v| (w, v)).map_err(|e| Error::ScanPoint { omega_f: w, source: Box::new(e) })
    };
    let points = grid.par_iter().map(point).collect::<Result<Vec<_>>>()?;
    Ok(SpectrumScan { points, method })
}

/// Filter scan; solves the base steady state first.
pub fn scan(params: &SystemParams, probe: &FilterProbe, grid: &[f64], method: ScanMethod) -> Result<SpectrumScan> {
    let base = cumulant::steady_state(params, &SolverConfig::for_params(params))?.state;
    scan_with_base(params, &base, probe, grid, method)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub amplitude: f64,
    pub center: f64,
    pub fwhm: f64,
    pub offset: f64,
    /// RMS residual divided by the amplitude.
    pub rms_residual: f64,
    pub iterations: usize,
}

impl LorentzianFit {
    pub fn eval(&self, omega: f64) -> f64 {
        lorentzian(&[self.amplitude, self.center, self.fwhm, self.offset], omega)
    }
}

fn lorentzian(p: &[f64; 4], x: f64) -> f64 {
    let h = p[2] / 2.0;
    let d = x - p[1];
    p[0] * h * h / (d * d + h * h) + p[3]
}

fn lorentzian_grad(p: &[f64; 4], x: f64) -> [f64; 4] {
    let h = p[2] / 2.0;
    let d = x - p[1];
    let den = d * d + h * h;
    [h * h / den, p[0] * h * h * 2.0 * d / (den * den), p[0] * h * d * d / (den * den), 1.0]
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Damped least-squares fit of `A (w/2)² / ((ω−ω₀)² + (w/2)²) + offset`.
pub fn fit_lorentzian(scan: &SpectrumScan) -> Result<LorentzianFit> {
    const MAX_ITER: usize = 200;
    let n = scan.points.len();
    if n < 8 {
        return Err(Error::Fit(format!("need at least 8 points, got {n}")));
    }
    if scan.points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::NonFinite("spectrum scan"));
    }
    let xs_raw: Vec<f64> = scan.points.iter().map(|p| p.0).collect();
    let ys_raw: Vec<f64> = scan.points.iter().map(|p| p.1).collect();
    let (imax, &ymax) = ys_raw.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let ymin = ys_raw.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(ymax - ymin > 1e-12 * ymax.abs()) || ymax <= 0.0 {
        return Err(Error::NoLine);
    }

    let edge: Vec<f64> = ys_raw[..3].iter().chain(&ys_raw[n - 3..]).cloned().collect();
    let off0 = median(edge);
    let half = off0 + (ymax - off0) / 2.0;
    let cross = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = imax;
        for i in range {
            if ys_raw[i] < half {
                let t = (ys_raw[prev] - half) / (ys_raw[prev] - ys_raw[i]);
                return Some(xs_raw[prev] + t * (xs_raw[i] - xs_raw[prev]));
            }
            prev = i;
        }
        None
    };
    let left = cross(&mut (0..imax).rev());
    let right = cross(&mut (imax + 1..n));
    let x0 = xs_raw[imax];
    let span = xs_raw[n - 1] - xs_raw[0];
    let w0 = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (x0 - l),
        (None, Some(r)) => 2.0 * (r - x0),
        (None, None) => return Err(Error::Fit("scan does not reach half maximum on either side".into())),
    };
    if !(w0 > 0.0) || span < 1.5 * w0 {
        return Err(Error::Fit(format!("scan span {span:.3e} covers fewer than 3 half-widths of a {w0:.3e} line")));
    }

    // work in units of the initial width around the peak
    let xs: Vec<f64> = xs_raw.iter().map(|x| (x - x0) / w0).collect();
    let ys: Vec<f64> = ys_raw.iter().map(|y| y / ymax).collect();
    let cost = |p: &[f64; 4]| -> f64 { xs.iter().zip(&ys).map(|(x, y)| (lorentzian(p, *x) - y).powi(2)).sum() };

    let mut p = [1.0 - off0 / ymax, 0.0, 1.0, off0 / ymax];
    let mut c = cost(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for (x, y) in xs.iter().zip(&ys) {
            let g = Vector4::from(lorentzian_grad(&p, *x));
            let r = lorentzian(&p, *x) - y;
            jtj += g * g.transpose();
            jtr += g * r;
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj;
            for i in 0..4 {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(delta) = a.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [p[0] + delta[0], p[1] + delta[1], p[2] + delta[2], p[3] + delta[3]];
            let ct = cost(&trial);
            if trial[2] > 0.0 && ct <= c {
                let amp = trial[0].abs().max(1e-300);
                let small = delta[0].abs() / amp < 1e-8
                    && delta[1].abs() / trial[2] < 1e-8
                    && delta[2].abs() / trial[2] < 1e-8
                    && delta[3].abs() / amp < 1e-8;
                p = trial;
                c = ct;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                converged = small;
                break;
            }
            lambda *= 4.0;
        }
        if converged || !improved {
            // no downhill step left means the minimum is at rounding level
            converged = converged || c <= 1e-28 * ys.len() as f64 || lambda >= 1e12;
            break;
        }
    }

    let fit = LorentzianFit {
        amplitude: p[0] * ymax,
        center: x0 + p[1] * w0,
        fwhm: p[2] * w0,
        offset: p[3] * ymax,
        rms_residual: (c / n as f64).sqrt() / p[0].abs(),
        iterations,
    };
    if !converged {
        return Err(Error::FitNoConvergence { iterations, best_fwhm: fit.fwhm, best_rms: fit.rms_residual });
    }
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    /// Initial filter width.
    pub beta0: f64,
    /// Initial coupling.
    pub big_g0: f64,
    /// Narrowest resolvable line.
    pub floor: f64,
    pub max_passes: usize,
}

impl ProbeOptions {
    pub fn for_params(p: &SystemParams) -> Self {
        Self { beta0: p.kappa / 10.0, big_g0: 1e-3 * p.kappa, floor: 1e-12 * p.kappa, max_passes: 16 }
    }
}

/// Picks the filter width and coupling for a steady state.
///
/// The line is first located with a broad filter, then β is shrunk until the
/// estimated width `Δν_est = fwhm − β` exceeds 10β. The final probe has
/// `β = Δν_est/10` and `G = min(10⁻³κ, 10⁻²√(βΔν_est))`, halved until
/// halving it again moves the normalized line shape by less than 0.5%.
pub fn auto_probe(params: &SystemParams, base: &MomentState) -> Result<FilterProbe> {
    auto_probe_with(params, base, &ProbeOptions::for_params(params)).map(|(p, _)| p)
}

/// Same as [`auto_probe`]; also returns `Δν_est`.
pub fn auto_probe_with(params: &SystemParams, base: &MomentState, opts: &ProbeOptions) -> Result<(FilterProbe, f64)> {
    if !(opts.big_g0 > 0.0) {
        return Err(Error::Probe("zero filter coupling gives no signal".into()));
    }
    if base.photon_number <= 0.0 {
        return Err(Error::Probe("empty cavity emits no line".into()));
    }
    let mut beta = opts.beta0;
    let mut center = (params.omega_a * params.kappa + params.omega_c * (params.gamma + params.eta))
        / (params.kappa + params.gamma + params.eta);
    let mut observed = params.kappa + beta;
    let mut estimate = None;
    for _ in 0..opts.max_passes {
        let probe = FilterProbe::new(opts.big_g0, beta, center);
        let grid = linear_grid(center, 4.0 * observed, 101);
        let s = scan_with_base(params, base, &probe, &grid, ScanMethod::ClosedForm)?;
        let fit = fit_lorentzian(&s)?;
        center = fit.center;
        observed = fit.fwhm;
        let est = fit.fwhm - beta;
        if est >= 10.0 * beta * (1.0 - 1e-9) {
            estimate = Some(est);
            break;
        }
        // line narrower than the filter; shrink the filter
        let next = (est.max(0.0) / 10.0).max(observed / 100.0);
        if next < opts.floor {
            return Err(Error::Unresolvable { floor: opts.floor });
        }
        beta = next;
    }
    let Some(dnu) = estimate else {
        return Err(Error::Unresolvable { floor: opts.floor });
    };
    let beta = dnu / 10.0;
    let mut big_g = (1e-3 * params.kappa).min(1e-2 * (beta * dnu).sqrt());
    let grid = linear_grid(center, 3.0 * (dnu + beta), 21);
    for _ in 0..12 {
        let probe = FilterProbe::new(big_g, beta, center);
        let full = scan_with_base(params, base, &probe, &grid, ScanMethod::Ode)?.normalized();
        let halved = FilterProbe::new(big_g / 2.0, beta, center);
        let half = scan_with_base(params, base, &halved, &grid, ScanMethod::Ode)?.normalized();
        let change = full.iter().zip(&half).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if change < 5e-3 {
            return Ok((probe, dnu));
        }
        big_g /= 2.0;
    }
    Err(Error::Probe("filter back-action did not become negligible".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linewidth {
    /// Fitted FWHM minus β.
    pub delta_nu: f64,
    pub fit: LorentzianFit,
    pub probe: FilterProbe,
    pub base: MomentState,
}

/// Steady state, automatic probe, 101-point closed-form scan over ±6Δν_est
/// and a Lorentzian fit.
pub fn linewidth(params: &SystemParams) -> Result<Linewidth> {
    let base = cumulant::steady_state(params, &SolverConfig::for_params(params))?.state;
    linewidth_with_base(params, &base)
}

pub fn linewidth_with_base(params: &SystemParams, base: &MomentState) -> Result<Linewidth> {
    let (probe, dnu) = auto_probe_with(params, base, &ProbeOptions::for_params(params))?;
    let grid = linear_grid(probe.omega_f, 6.0 * dnu, 101);
    let s = scan_with_base(params, base, &probe, &grid, ScanMethod::ClosedForm)?;
    let fit = fit_lorentzian(&s)?;
    Ok(Linewidth { delta_nu: fit.fwhm - probe.beta, fit, probe: probe.at(fit.center), base: *base })
}
