//! Second-order cumulant (mean-field) equations for N identical atoms in a
//! lossy cavity, and their steady state.
//!
//! Tracked moments, identical for every atom and every atom pair:
//!
//! ```text
//! n = ⟨a†a⟩     c = ⟨a σ⁺ᵢ⟩     s = ⟨σᶻᵢ⟩     p = ⟨σ⁺ᵢ σ⁻ⱼ⟩ (i ≠ j)
//! ```
//!
//! Third-order products are closed as `⟨σᶻᵢ a†a⟩ → s·n` and
//! `⟨a σ⁺ᵢ σᶻⱼ⟩ → c·s`, which gives
//!
//! ```text
//! dn/dt = −2gN Im c − κ n
//! dc/dt = i ω̃ c − i g s n − i (g/2)(1 + s) − i g (N−1) p,   ω̃ = ω_a − ω_c + i[(κ+γ+η)/2 + χ]
//! ds/dt = 4g Im c − γ(1 + s) + η(1 − s)
//! dp/dt = −2g s Im c − (γ + η + 2χ) p
//! ```
//!
//! The closure is exact on uncorrelated product states, which is what the
//! oracle derivative-match tests exploit.

use std::io::Write;
use std::ops::ControlFlow;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::newton::{self, NewtonOptions};
use crate::ode::{self, OdeOptions};

/// Hard tolerance on the physical ranges of `n` and `s`.
pub const EPS_PHYS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentState {
    pub photon_number: f64,
    pub atom_photon: Complex64,
    pub inversion: f64,
    pub pair_corr: Complex64,
}

impl MomentState {
    pub fn new(photon_number: f64, atom_photon: Complex64, inversion: f64, pair_corr: Complex64) -> Self {
        Self { photon_number, atom_photon, inversion, pair_corr }
    }

    /// Vacuum field, every atom in its ground state.
    pub fn ground() -> Self {
        Self::new(0.0, Complex64::new(0.0, 0.0), -1.0, Complex64::new(0.0, 0.0))
    }

    /// `[n, Re c, Im c, s, Re p, Im p]`
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.photon_number,
            self.atom_photon.re,
            self.atom_photon.im,
            self.inversion,
            self.pair_corr.re,
            self.pair_corr.im,
        ]
    }

    pub fn from_array(x: &[f64; 6]) -> Self {
        Self::new(x[0], Complex64::new(x[1], x[2]), x[3], Complex64::new(x[4], x[5]))
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// `n ≥ −ε` and `|s| ≤ 1 + ε` with ε = [`EPS_PHYS`].
    pub fn is_physical(&self) -> bool {
        self.is_finite()
            && self.photon_number >= -EPS_PHYS
            && self.inversion >= -1.0 - EPS_PHYS
            && self.inversion <= 1.0 + EPS_PHYS
    }

    /// Relative excess δ in `|c|² ≤ n (1 + s)/2 · (1 + δ)`; zero or negative
    /// when the Cauchy–Schwarz bound holds. The closure may break it mildly.
    pub fn cauchy_schwarz_excess(&self) -> f64 {
        let lhs = self.atom_photon.norm_sqr();
        let bound = self.photon_number * (1.0 + self.inversion) / 2.0;
        if lhs == 0.0 {
            return if bound >= 0.0 { -1.0 } else { f64::INFINITY };
        }
        if bound <= 0.0 {
            return f64::INFINITY;
        }
        lhs / bound - 1.0
    }

    pub fn norm(&self) -> f64 {
        newton::norm2(&self.to_array())
    }
}

pub fn initial_state(_params: &SystemParams) -> MomentState {
    MomentState::ground()
}

pub(crate) fn rhs_array(x: &[f64; 6], p: &SystemParams) -> [f64; 6] {
    let [n, cr, ci, s, pr, pi] = *x;
    let nat = p.n();
    let det = p.detuning();
    let lam = (p.kappa + p.gamma + p.eta) / 2.0 + p.chi;
    let big_gamma = p.gamma + p.eta + 2.0 * p.chi;
    let g = p.g;
    [
        -2.0 * g * nat * ci - p.kappa * n,
        -det * ci - lam * cr + g * (nat - 1.0) * pi,
        det * cr - lam * ci - g * s * n - 0.5 * g * (1.0 + s) - g * (nat - 1.0) * pr,
        4.0 * g * ci - p.gamma * (1.0 + s) + p.eta * (1.0 - s),
        -2.0 * g * s * ci - big_gamma * pr,
        -big_gamma * pi,
    ]
}

/// Magnitude of the largest single term in the right-hand side; rounding in
/// the residual is a few ulps of this.
pub(crate) fn rhs_term_scale(x: &[f64; 6], p: &SystemParams) -> f64 {
    let [n, cr, ci, s, pr, pi] = *x;
    let c = cr.hypot(ci);
    let pm = pr.hypot(pi);
    let nat = p.n();
    let lam = (p.kappa + p.gamma + p.eta) / 2.0 + p.chi + p.detuning().abs();
    [
        2.0 * p.g * nat * c,
        p.kappa * n.abs(),
        lam * c,
        p.g * (nat - 1.0) * pm,
        p.g * (s * n).abs(),
        p.g,
        4.0 * p.g * c,
        2.0 * (p.gamma + p.eta),
        (p.gamma + p.eta + 2.0 * p.chi) * pm,
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

pub(crate) fn jacobian_array(x: &[f64; 6], p: &SystemParams) -> DMatrix<f64> {
    let [n, _cr, ci, s, _pr, _pi] = *x;
    let nat = p.n();
    let det = p.detuning();
    let lam = (p.kappa + p.gamma + p.eta) / 2.0 + p.chi;
    let big_gamma = p.gamma + p.eta + 2.0 * p.chi;
    let g = p.g;
    #[rustfmt::skip]
    let rows = [
        [-p.kappa, 0.0, -2.0 * g * nat, 0.0, 0.0, 0.0],
        [0.0, -lam, -det, 0.0, 0.0, g * (nat - 1.0)],
        [-g * s, det, -lam, -g * n - 0.5 * g, -g * (nat - 1.0), 0.0],
        [0.0, 0.0, 4.0 * g, -p.gamma - p.eta, 0.0, 0.0],
        [0.0, 0.0, -2.0 * g * s, -2.0 * g * ci, -big_gamma, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, -big_gamma],
    ];
    DMatrix::from_fn(6, 6, |i, j| rows[i][j])
}

/// Time derivative of every tracked moment.
pub fn rhs(state: &MomentState, params: &SystemParams) -> Result<MomentState> {
    if !state.is_finite() {
        return Err(Error::NonFinite("moment state"));
    }
    Ok(MomentState::from_array(&rhs_array(&state.to_array(), params)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Relaxation horizon in seconds.
    pub t_max: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Accepted-step budget of the relaxation phase.
    pub relax_max_steps: usize,
}

impl SolverConfig {
    pub fn for_params(p: &SystemParams) -> Self {
        let slow = p.gamma + p.eta + 2.0 * p.chi;
        let t_max = if slow > 0.0 { 1e3 / slow } else { 1e3 / p.kappa.max(1e-300) };
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            t_max,
            newton_tol: 1e-10 * p.kappa.max(1.0),
            newton_max_iter: 100,
            relax_max_steps: 50_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.t_max > 0.0
            && self.newton_tol > 0.0
            && self.newton_max_iter > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams("solver tolerances and horizons must be positive".into()))
        }
    }

    fn ode_options(&self, max_steps: usize) -> OdeOptions {
        OdeOptions { rel_tol: self.rel_tol, abs_tol: self.abs_tol, h0: None, max_steps }
    }
}

pub type Trajectory = Vec<(f64, MomentState)>;

/// Adaptive time integration recording every accepted step.
pub fn integrate(state0: &MomentState, params: &SystemParams, cfg: &SolverConfig) -> Result<Trajectory> {
    cfg.validate()?;
    params.validate()?;
    let mut traj = vec![(0.0, *state0)];
    let max_steps = cfg.relax_max_steps.max(1) * 40;
    ode::dopri45(
        |_, y| rhs_array(y, params),
        0.0,
        state0.to_array(),
        cfg.t_max,
        &cfg.ode_options(max_steps),
        |t, y, _| {
            traj.push((t, MomentState::from_array(y)));
            ControlFlow::Continue(())
        },
    )?;
    Ok(traj)
}

/// CSV with columns `t, n, re_c, im_c, s, re_p, im_p` (seconds, dimensionless moments).
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "t,n,re_c,im_c,s,re_p,im_p").map_err(io)?;
    for (t, st) in traj {
        let a = st.to_array();
        writeln!(w, "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}", t, a[0], a[1], a[2], a[3], a[4], a[5])
            .map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyRoute {
    /// Newton polish of the relaxed state.
    Newton,
    /// Newton continuation in g from the decoupled fixed point.
    Continuation,
    /// Linearly implicit pseudo-time stepping from the ground state.
    PseudoTransient,
    /// Relaxation only; Newton gave nothing physical.
    Relaxation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub state: MomentState,
    /// Euclidean norm of the right-hand side at `state`.
    pub residual: f64,
    pub route: SteadyRoute,
    /// False only on the relaxation fallback with an unphysical state.
    pub physical: bool,
    /// See [`MomentState::cauchy_schwarz_excess`].
    pub cauchy_schwarz_excess: f64,
    /// Largest real part of the Jacobian spectrum at `state`, in rad/s.
    pub growth_rate: f64,
    /// Set when the result fell back to the relaxation state or is unstable.
    pub warning: Option<&'static str>,
}

struct Relaxed {
    x: [f64; 6],
    residual: f64,
    converged: bool,
}

fn residual_norm(x: &[f64; 6], p: &SystemParams) -> f64 {
    newton::norm2(&rhs_array(x, p))
}

fn relax(x0: [f64; 6], p: &SystemParams, cfg: &SolverConfig, tol: f64) -> Relaxed {
    let r0 = residual_norm(&x0, p);
    if r0 <= tol {
        return Relaxed { x: x0, residual: r0, converged: true };
    }
    let target = (r0 * 1e-6).max(tol);
    let mut best = (r0, x0);
    let mut last_improvement = 0usize;
    let mut steps = 0usize;
    let mut hit_target = false;
    let end = ode::dopri45(
        |_, y| rhs_array(y, p),
        0.0,
        x0,
        cfg.t_max,
        &cfg.ode_options(usize::MAX),
        |_, y, dy| {
            steps += 1;
            let r = newton::norm2(dy);
            if r < 0.5 * best.0 {
                best = (r, *y);
                last_improvement = steps;
            } else if r < best.0 {
                best = (r, *y);
            }
            if r <= target {
                hit_target = true;
                return ControlFlow::Break(());
            }
            // plateau or budget
            if steps - last_improvement > 5_000 || steps >= cfg.relax_max_steps {
                return ControlFlow::Break(());
            }
            ControlFlow::Continue(())
        },
    );
    if let Ok(end) = end {
        let r = residual_norm(&end.y, p);
        if r < best.0 {
            best = (r, end.y);
        }
    }
    Relaxed { x: best.1, residual: best.0, converged: hit_target }
}

fn newton_scale(x: &[f64; 6]) -> [f64; 6] {
    let c = x[1].hypot(x[2]).max(1e-12);
    let pm = x[4].hypot(x[5]).max(1e-15);
    [x[0].abs().max(1e-9), c, c, 1e-3, pm, pm]
}

fn polish(x0: [f64; 6], p: &SystemParams, cfg: &SolverConfig) -> Option<(MomentState, f64)> {
    // iterate to rounding level; the slow equations need more than the
    // absolute tolerance, which is set by the fast ones
    let opts = NewtonOptions {
        tol: cfg.newton_tol.min(1e3 * f64::EPSILON * rhs_term_scale(&x0, p)),
        max_iter: cfg.newton_max_iter,
        residual_floor: cfg.newton_tol.max(1e3 * f64::EPSILON * rhs_term_scale(&x0, p).max(1.0)),
    };
    let out = newton::newton(
        |x| rhs_array(x, p),
        |x| jacobian_array(x, p),
        x0,
        &newton_scale(&x0),
        &opts,
    );
    let state = MomentState::from_array(&out.x);
    let floor = 1e3 * f64::EPSILON * rhs_term_scale(&out.x, p);
    let ok = out.converged || out.residual <= floor;
    (ok && state.is_physical()).then_some((state, out.residual))
}

/// Decoupled (g = 0) fixed point.
pub fn decoupled_fixed_point(p: &SystemParams) -> MomentState {
    let s = p.derived().d0.unwrap_or(-1.0);
    MomentState::new(0.0, Complex64::new(0.0, 0.0), s, Complex64::new(0.0, 0.0))
}

fn continuation(p: &SystemParams, cfg: &SolverConfig) -> Option<(MomentState, f64)> {
    const DECADES: f64 = 4.0;
    const STEPS: usize = 10;
    if p.g == 0.0 {
        return polish(decoupled_fixed_point(p).to_array(), p, cfg);
    }
    let mut x = decoupled_fixed_point(p).to_array();
    let mut log_g = p.g.ln() - DECADES * std::f64::consts::LN_10;
    let log_end = p.g.ln();
    let mut dlog = DECADES * std::f64::consts::LN_10 / (STEPS - 1) as f64;
    let mut solves = 0;
    let mut first = true;
    let mut last = None;
    while solves < 200 {
        let target = if first { log_g } else { (log_g + dlog).min(log_end) };
        let q = p.with_g(target.exp());
        solves += 1;
        match polish(x, &q, cfg) {
            Some((st, r)) => {
                x = st.to_array();
                log_g = target;
                first = false;
                last = Some((st, r));
                if target >= log_end {
                    return last;
                }
                dlog = (dlog * 1.5).min(DECADES * std::f64::consts::LN_10 / (STEPS - 1) as f64);
            }
            None => {
                if first {
                    return None;
                }
                dlog *= 0.5;
                if dlog < 1e-6 {
                    return None;
                }
            }
        }
    }
    last.filter(|_| log_g >= log_end)
}

/// Largest real part of the linearised spectrum at `state`; positive means
/// the fixed point is unstable.
pub fn growth_rate(state: &MomentState, params: &SystemParams) -> f64 {
    jacobian_array(&state.to_array(), params)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn is_stable(x: &[f64; 6], p: &SystemParams) -> bool {
    let j = jacobian_array(x, p);
    let tol = 1e-9 * j.norm();
    j.complex_eigenvalues().iter().all(|z| z.re <= tol)
}

/// Linearly implicit Euler in pseudo-time, `(I/Δt − J) δ = f`, with Δt grown
/// as the residual falls. Δt stays below the inverse growth rate of any
/// unstable mode so that saddle points are not mistaken for steady states.
fn pseudo_transient(x0: [f64; 6], p: &SystemParams, cfg: &SolverConfig) -> Option<[f64; 6]> {
    const MAX_STEPS: usize = 200_000;
    let fastest = p.kappa + p.gamma + p.eta + 2.0 * p.chi + p.detuning().abs() + 2.0 * p.g * p.n().sqrt();
    let mut dt = 0.1 / fastest;
    let mut x = x0;
    let mut f = rhs_array(&x, p);
    let mut r = newton::norm2(&f);
    for _ in 0..MAX_STEPS {
        if r <= cfg.newton_tol {
            return Some(x);
        }
        let jac = jacobian_array(&x, p);
        let unstable = jac.complex_eigenvalues().iter().map(|z| z.re).fold(0.0, f64::max);
        let cap = if unstable > 1e-9 * jac.norm() { 0.5 / unstable } else { f64::INFINITY };
        let mut h = dt.min(cap);
        loop {
            let mut a = -jac.clone();
            for i in 0..6 {
                a[(i, i)] += 1.0 / h;
            }
            let step = a.lu().solve(&nalgebra::DVector::from_column_slice(&f))?;
            let mut xt = x;
            for i in 0..6 {
                xt[i] += step[i];
            }
            let ft = rhs_array(&xt, p);
            let rt = newton::norm2(&ft);
            if MomentState::from_array(&xt).is_physical() && rt.is_finite() {
                let grow = if rt > 1.5 * r { 0.5 } else { (r / rt).clamp(1.2, 4.0) };
                dt = (h * grow).max(1e-3 / fastest);
                x = xt;
                f = ft;
                r = rt;
                break;
            }
            h *= 0.25;
            if h < 1e-12 / fastest {
                return None;
            }
        }
    }
    None
}

/// Steady state of the cumulant equations.
///
/// Relaxes from the ground state with the adaptive integrator, polishes with
/// Newton, and falls back to Newton continuation in g when the polish fails
/// or lands on an unphysical root. A root with a growing mode is rejected in
/// favour of pseudo-time stepping from the ground state, which follows the
/// dynamics onto the attracting branch however stiff the rates are.
pub fn steady_state(params: &SystemParams, cfg: &SolverConfig) -> Result<SteadyState> {
    params.validate()?;
    cfg.validate()?;
    let finish = |state: MomentState, residual: f64, route: SteadyRoute| SteadyState {
        state,
        residual,
        route,
        physical: state.is_physical(),
        cauchy_schwarz_excess: state.cauchy_schwarz_excess(),
        growth_rate: growth_rate(&state, params),
        warning: None,
    };

    let relaxed = relax(initial_state(params).to_array(), params, cfg, cfg.newton_tol);
    let mut unstable = None;
    if let Some((st, r)) = polish(relaxed.x, params, cfg) {
        if is_stable(&st.to_array(), params) {
            return Ok(finish(st, r, SteadyRoute::Newton));
        }
        unstable = Some(finish(st, r, SteadyRoute::Newton));
    }
    if unstable.is_none() {
        if let Some((st, r)) = continuation(params, cfg) {
            if is_stable(&st.to_array(), params) {
                return Ok(finish(st, r, SteadyRoute::Continuation));
            }
            unstable = Some(finish(st, r, SteadyRoute::Continuation));
        }
    }
    if let Some(x) = pseudo_transient(initial_state(params).to_array(), params, cfg) {
        if let Some((st, r)) = polish(x, params, cfg) {
            if is_stable(&st.to_array(), params) {
                return Ok(finish(st, r, SteadyRoute::PseudoTransient));
            }
        }
    }
    if let Some(mut out) = unstable {
        out.warning = Some("no stable root found; returning an unstable fixed point");
        return Ok(out);
    }
    if relaxed.converged {
        let mut out = finish(MomentState::from_array(&relaxed.x), relaxed.residual, SteadyRoute::Relaxation);
        out.warning = Some("Newton found no physical root; returning the relaxation state");
        return Ok(out);
    }
    Err(Error::SteadyStateFailed { best_residual: relaxed.residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{preset, ETA_EXP};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn desk(n: u64) -> SystemParams {
        let kappa = 1.0;
        SystemParams::new(n, kappa / 4.0, kappa, kappa / 100.0).with_eta(20.0 * kappa / 100.0)
    }

    #[test]
    fn decoupled_rhs() {
        let p = SystemParams::new(5, 0.0, 2.0, 0.3).with_eta(0.7).with_chi(0.1);
        let st = MomentState::new(2.0, c(0.0, 0.0), 0.0, c(0.1, 0.0));
        let d = rhs(&st, &p).unwrap();
        assert_eq!(d.photon_number, -2.0 * 2.0);
        assert_eq!(d.atom_photon, c(0.0, 0.0));
        assert!((d.inversion - (0.7 - 0.3)).abs() < 1e-15);
        assert!((d.pair_corr.re + (0.3 + 0.7 + 0.2) * 0.1).abs() < 1e-15);

        let s0 = (0.7 - 0.3) / (0.7 + 0.3);
        let fixed = MomentState::new(0.0, c(0.0, 0.0), s0, c(0.0, 0.0));
        let d = rhs(&fixed, &p).unwrap();
        assert!(d.norm() < 1e-15, "{d:?}");
    }

    #[test]
    fn rhs_rejects_nan() {
        let st = MomentState::new(f64::NAN, c(0.0, 0.0), 0.0, c(0.0, 0.0));
        assert!(matches!(rhs(&st, &desk(2)), Err(Error::NonFinite(_))));
    }

    #[test]
    fn initial_state_is_ground() {
        for p in [desk(1), desk(7), preset("sr87").unwrap()] {
            assert_eq!(initial_state(&p), MomentState::new(0.0, c(0.0, 0.0), -1.0, c(0.0, 0.0)));
        }
    }

    proptest! {
        #[test]
        fn analytic_jacobian_matches_differences(
            n in 0.0f64..50.0, cr in -2.0f64..2.0, ci in -2.0f64..2.0, s in -1.0f64..1.0,
            pr in -0.2f64..0.2, pi in -0.2f64..0.2, det in -1.0f64..1.0, chi in 0.0f64..0.3,
        ) {
            let p = desk(9).with_detuning(det).with_chi(chi);
            let x = [n, cr, ci, s, pr, pi];
            let jac = jacobian_array(&x, &p);
            for j in 0..6 {
                let h = 1e-6;
                let (mut xp, mut xm) = (x, x);
                xp[j] += h;
                xm[j] -= h;
                let (fp, fm) = (rhs_array(&xp, &p), rhs_array(&xm, &p));
                for i in 0..6 {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    prop_assert!((fd - jac[(i, j)]).abs() < 1e-6 * (1.0 + fd.abs()), "({i},{j}) {fd} vs {}", jac[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn decoupled_inversion_relaxes_to_bare_value() {
        let p = SystemParams::new(3, 0.0, 10.0, 1.0).with_eta(3.0);
        let cfg = SolverConfig { t_max: 20.0, ..SolverConfig::for_params(&p) };
        let traj = integrate(&initial_state(&p), &p, &cfg).unwrap();
        let last = traj.last().unwrap().1;
        // global error is a small multiple of the local tolerance
        assert!((last.inversion - 0.5).abs() < 10.0 * cfg.rel_tol * 0.5, "{}", last.inversion);
    }

    #[test]
    fn pure_cavity_decay() {
        let p = SystemParams::new(1, 0.0, 2.0, 0.0);
        let cfg = SolverConfig { t_max: 3.0, ..SolverConfig::for_params(&p) };
        let st0 = MomentState::new(1.0, c(0.0, 0.0), -1.0, c(0.0, 0.0));
        let traj = integrate(&st0, &p, &cfg).unwrap();
        for (t, st) in &traj {
            let exact = (-2.0 * t).exp();
            assert!((st.photon_number - exact).abs() <= 1e-7 * exact + 1e-12, "t={t}");
        }
        assert_eq!(traj.last().unwrap().0, 3.0);
    }

    #[test]
    fn sr88_trajectory_becomes_stationary() {
        let base = preset("sr88").unwrap();
        let p = base.with_n(100).with_eta(10.0 * base.gamma);
        let mut cfg = SolverConfig::for_params(&p);
        cfg.t_max = 1e3 / p.gamma;
        let traj = integrate(&initial_state(&p), &p, &cfg).unwrap();
        let last = traj.last().unwrap().1;
        let r = rhs(&last, &p).unwrap().norm();
        let scale = rhs_term_scale(&last.to_array(), &p);
        assert!(r < 1e-6 * scale, "residual {r} against term scale {scale}");
        let ss = steady_state(&p, &cfg).unwrap();
        assert!((last.photon_number - ss.state.photon_number).abs() < 1e-5 * ss.state.photon_number);
    }

    #[test]
    fn stiff_clock_transition_lands_on_the_stable_branch() {
        // κ/η ~ 10⁷: explicit relaxation cannot leave the non-lasing saddle
        let base = preset("sr87").unwrap().with_n(100_000);
        let p = base.with_eta(10.0 * base.gamma);
        let ss = steady_state(&p, &SolverConfig::for_params(&p)).unwrap();
        assert!(ss.warning.is_none() && ss.growth_rate < 0.0, "{ss:?}");
        assert!(ss.state.photon_number > 1e-3 && ss.state.inversion < 1e-2, "{ss:?}");
        let saddle = MomentState::new(0.0, Complex64::new(0.0, 0.0), 9.0 / 11.0, Complex64::new(0.0, 0.0));
        assert!(growth_rate(&saddle, &p) > 10.0);
    }

    #[test]
    fn trajectory_csv_has_header() {
        let p = SystemParams::new(2, 0.1, 1.0, 0.1).with_eta(0.5);
        let cfg = SolverConfig { t_max: 1.0, ..SolverConfig::for_params(&p) };
        let traj = integrate(&initial_state(&p), &p, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        write_trajectory_csv(&path, &traj).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,n,re_c,im_c,s,re_p,im_p"));
        assert_eq!(lines.count(), traj.len());
    }

    #[test]
    fn decoupled_steady_state_is_exact() {
        let p = SystemParams::new(10, 0.0, 1.0, 0.5).with_eta(1.0);
        let ss = steady_state(&p, &SolverConfig::for_params(&p)).unwrap();
        let a = ss.state.to_array();
        let expect = [0.0, 0.0, 0.0, 1.0 / 3.0, 0.0, 0.0];
        for i in 0..6 {
            assert!((a[i] - expect[i]).abs() < 1e-12, "{a:?}");
        }
    }

    #[test]
    fn sr88_experimental_pump_photon_number() {
        let p = preset("sr88").unwrap().with_n(100_000).with_eta(ETA_EXP);
        let cfg = SolverConfig::for_params(&p);
        let ss = steady_state(&p, &cfg).unwrap();
        let n = ss.state.photon_number;
        assert!(n > 2.5e3 && n < 1e4, "n = {n}");
        assert!(ss.residual < cfg.newton_tol, "residual {}", ss.residual);
        let pm = ss.state.pair_corr;
        assert!(pm.im.abs() < 1e-8 * pm.norm() + 1e-12);
    }

    #[test]
    fn sr87_steady_state_is_physical() {
        let base = preset("sr87").unwrap();
        for eta_factor in [0.5, 1.0, 10.0, 300.0] {
            let p = base.with_n(100_000).with_eta(eta_factor * base.gamma);
            let cfg = SolverConfig::for_params(&p);
            let ss = steady_state(&p, &cfg).unwrap();
            assert!(ss.physical, "{eta_factor}: {ss:?}");
            assert!(ss.residual < cfg.newton_tol, "{eta_factor}: {ss:?}");
        }
    }

    #[test]
    fn detuned_steady_state_converges() {
        let p = desk(20).with_detuning(0.3).with_chi(0.01);
        let cfg = SolverConfig::for_params(&p);
        let ss = steady_state(&p, &cfg).unwrap();
        assert!(ss.physical && ss.residual < cfg.newton_tol, "{ss:?}");
    }
}
