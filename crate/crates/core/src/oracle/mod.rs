//! Exact solution of the master equation for a handful of atoms.
//!
//! ```text
//! H = ω_c a†a + (ω_a/2) Σᵢ σᶻᵢ + g Σᵢ (a†σ⁻ᵢ + a σ⁺ᵢ)   [+ ω_f f†f + G (a f† + a† f)]
//! dρ/dt = −i[H, ρ] + κ 𝒟[a] + Σᵢ (γ 𝒟[σ⁻ᵢ] + η 𝒟[σ⁺ᵢ] + (χ/2) 𝒟[σᶻᵢ])   [+ β 𝒟[f]]
//! ```
//!
//! The dephasing channel carries χ/2 so that atomic coherences decay at
//! `(γ+η)/2 + χ`, the convention of the moment equations.
//!
//! Every term conserves `exc(ket) − exc(bra)` (total excitation number), so
//! the superoperator is block diagonal in that charge q. The steady state
//! lives in q = 0 and `a ρ` in q = −1; only those blocks are ever formed as
//! dense matrices.

pub mod checks;
pub mod expm;
mod ops;

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, Side};
use num_complex::Complex64;

pub use ops::{Mono, OracleSpace, Term};

use crate::cumulant::MomentState;
use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::spectrum::{FilterProbe, ScanMethod, SpectrumScan};

/// Largest dense superoperator block, in rows.
pub const SECTOR_BUDGET: usize = 4096;
/// Soft cap on the number of atoms.
pub const MAX_ATOMS: usize = 6;

#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub dim: usize,
    pub entries: Mat<c64>,
}

impl DenseOperator {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: Mat::zeros(dim, dim) }
    }

    pub fn trace(&self) -> c64 {
        (0..self.dim).map(|i| self.entries[(i, i)]).sum()
    }

    /// Largest entry of `ρ − ρ†`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..=i {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let h = Mat::from_fn(self.dim, self.dim, |i, j| (self.entries[(i, j)] + self.entries[(j, i)].conj()) * 0.5);
        let ev = h
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Oracle(format!("eigenvalues: {e:?}")))?;
        Ok(ev.into_iter().fold(f64::INFINITY, f64::min))
    }

    pub fn expect(&self, op: &Mono) -> c64 {
        op.expect(|i, j| self.entries[(i, j)])
    }
}

/// Block of the superoperator acting on density-matrix entries `|k⟩⟨l|`
/// with `exc(k) − exc(l) = q`.
#[derive(Debug, Clone)]
pub struct Sector {
    pub q: isize,
    pub pairs: Vec<(u32, u32)>,
    lookup: Vec<u32>,
    dim: usize,
}

impl Sector {
    pub fn new(space: &OracleSpace, q: isize) -> Self {
        let d = space.dim();
        let exc: Vec<isize> = (0..d).map(|k| space.excitations(k) as isize).collect();
        let mut lookup = vec![u32::MAX; d * d];
        let mut pairs = Vec::new();
        for k in 0..d {
            for l in 0..d {
                if exc[k] - exc[l] == q {
                    lookup[k * d + l] = pairs.len() as u32;
                    pairs.push((k as u32, l as u32));
                }
            }
        }
        Self { q, pairs, lookup, dim: d }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    #[inline]
    pub fn position(&self, k: usize, l: usize) -> Option<usize> {
        let p = self.lookup[k * self.dim + l];
        (p != u32::MAX).then_some(p as usize)
    }

    pub fn gather(&self, rho: &Mat<c64>) -> Vec<c64> {
        self.pairs.iter().map(|&(k, l)| rho[(k as usize, l as usize)]).collect()
    }

    pub fn scatter(&self, v: &[c64], rho: &mut Mat<c64>) {
        for (&(k, l), x) in self.pairs.iter().zip(v) {
            rho[(k as usize, l as usize)] = *x;
        }
    }
}

/// Lindblad superoperator as a sum of monomial terms.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    pub space: OracleSpace,
    terms: Vec<Term>,
}

impl Liouvillian {
    pub fn new(params: &SystemParams, space: OracleSpace, probe: Option<&FilterProbe>) -> Result<Self> {
        params.validate()?;
        if space.n_atoms as u64 != params.n_atoms {
            return Err(Error::Oracle(format!(
                "space holds {} atoms, parameters {}",
                space.n_atoms, params.n_atoms
            )));
        }
        if probe.is_some() != space.m_max.is_some() {
            return Err(Error::Oracle("filter probe and filter mode must come together".into()));
        }
        let id = Mono::identity(&space);
        let a = Mono::a(&space);
        let ad = a.adjoint();
        let mut hamiltonian: Vec<(f64, Mono)> = vec![(params.omega_c, ad.then_after(&a))];
        let mut channels: Vec<(f64, Mono)> = vec![(params.kappa, a.clone())];
        for i in 0..space.n_atoms {
            let sm = Mono::sm(&space, i);
            let spl = sm.adjoint();
            hamiltonian.push((params.omega_a / 2.0, Mono::sz(&space, i)));
            hamiltonian.push((params.g, ad.then_after(&sm)));
            hamiltonian.push((params.g, a.then_after(&spl)));
            channels.push((params.gamma, sm));
            channels.push((params.eta, spl));
            channels.push((params.chi / 2.0, Mono::sz(&space, i)));
        }
        if let Some(pr) = probe {
            let f = Mono::f(&space);
            let fd = f.adjoint();
            hamiltonian.push((pr.omega_f, fd.then_after(&f)));
            hamiltonian.push((pr.big_g, a.then_after(&fd)));
            hamiltonian.push((pr.big_g, ad.then_after(&f)));
            channels.push((pr.beta, f));
        }

        let mut terms = Vec::new();
        let i_unit = c64::new(0.0, 1.0);
        for (h, op) in hamiltonian {
            if h == 0.0 {
                continue;
            }
            terms.push(Term { alpha: -i_unit * h, left: op.clone(), right_adj: id.clone() });
            terms.push(Term { alpha: i_unit * h, left: id.clone(), right_adj: op.adjoint() });
        }
        for (r, c) in channels {
            if r == 0.0 {
                continue;
            }
            let cdc = c.adjoint().then_after(&c);
            terms.push(Term { alpha: c64::new(r, 0.0), left: c.clone(), right_adj: c });
            terms.push(Term { alpha: c64::new(-0.5 * r, 0.0), left: cdc.clone(), right_adj: id.clone() });
            terms.push(Term { alpha: c64::new(-0.5 * r, 0.0), left: id.clone(), right_adj: cdc });
        }
        Ok(Self { space, terms })
    }

    /// `L(ρ)` without forming the superoperator.
    pub fn apply(&self, rho: &Mat<c64>) -> Mat<c64> {
        let d = self.space.dim();
        let mut out = Mat::<c64>::zeros(d, d);
        for t in &self.terms {
            for k in 0..d {
                let Some((k2, ca)) = t.left.apply(k) else { continue };
                for l in 0..d {
                    let Some((l2, cb)) = t.right_adj.apply(l) else { continue };
                    let v = rho[(k, l)];
                    if v != c64::new(0.0, 0.0) {
                        out[(k2, l2)] += t.alpha * (ca * cb) * v;
                    }
                }
            }
        }
        out
    }

    /// Dense block of the superoperator on one charge sector.
    pub fn block(&self, sector: &Sector) -> Result<Mat<c64>> {
        let n = sector.len();
        if n > SECTOR_BUDGET {
            return Err(Error::SpaceTooLarge { dim: n, budget: SECTOR_BUDGET });
        }
        let mut m = Mat::<c64>::zeros(n, n);
        for (col, &(k, l)) in sector.pairs.iter().enumerate() {
            for t in &self.terms {
                let Some((k2, ca)) = t.left.apply(k as usize) else { continue };
                let Some((l2, cb)) = t.right_adj.apply(l as usize) else { continue };
                let row = sector
                    .position(k2, l2)
                    .ok_or_else(|| Error::Oracle("term leaves its charge sector".into()))?;
                m[(row, col)] += t.alpha * (ca * cb);
            }
        }
        Ok(m)
    }

    /// Full `d² × d²` superoperator, column index `k·d + l` for `|k⟩⟨l|`.
    /// Only for tiny spaces.
    pub fn dense_matrix(&self) -> Result<Mat<c64>> {
        let d = self.space.dim();
        if d * d > SECTOR_BUDGET {
            return Err(Error::SpaceTooLarge { dim: d * d, budget: SECTOR_BUDGET });
        }
        let mut m = Mat::<c64>::zeros(d * d, d * d);
        for k in 0..d {
            for l in 0..d {
                for t in &self.terms {
                    let Some((k2, ca)) = t.left.apply(k) else { continue };
                    let Some((l2, cb)) = t.right_adj.apply(l) else { continue };
                    m[(k2 * d + l2, k * d + l)] += t.alpha * (ca * cb);
                }
            }
        }
        Ok(m)
    }
}

fn check_space(params: &SystemParams, n_max: usize) -> Result<()> {
    if params.n_atoms as usize > MAX_ATOMS {
        return Err(Error::Oracle(format!("at most {MAX_ATOMS} atoms (got {})", params.n_atoms)));
    }
    if n_max < 1 {
        return Err(Error::Oracle("photon cutoff must be at least 1".into()));
    }
    Ok(())
}

pub fn build_liouvillian(params: &SystemParams, n_max: usize) -> Result<Liouvillian> {
    check_space(params, n_max)?;
    Liouvillian::new(params, OracleSpace::new(params.n_atoms as usize, n_max), None)
}

/// Exact values of the tracked moments and a few extras.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleMoments {
    pub photon_number: f64,
    /// `⟨a σ⁺₀⟩`
    pub atom_photon: Complex64,
    /// `⟨σᶻ₀⟩`
    pub inversion: f64,
    /// `⟨σ⁺₀ σ⁻₁⟩`, zero for a single atom.
    pub pair_corr: Complex64,
    /// `⟨σᶻ₀ σᶻ₁⟩`, `s²` for a single atom.
    pub zz: f64,
    pub j_squared: f64,
    /// Largest difference between atoms (or atom pairs) in any moment.
    pub symmetry_spread: f64,
    pub filter_number: Option<f64>,
    /// `⟨a f†⟩`
    pub cross_photon: Option<Complex64>,
    /// `⟨σ⁻₀ f†⟩`
    pub cross_atom: Option<Complex64>,
}

impl OracleMoments {
    pub fn as_moment_state(&self) -> MomentState {
        MomentState::new(self.photon_number, self.atom_photon, self.inversion, self.pair_corr)
    }

    fn values(&self) -> Vec<Complex64> {
        let r = |x: f64| Complex64::new(x, 0.0);
        vec![r(self.photon_number), self.atom_photon, r(self.inversion), self.pair_corr, r(self.zz), r(self.j_squared)]
    }
}

pub fn moments(space: &OracleSpace, rho: &DenseOperator) -> Result<OracleMoments> {
    if rho.dim != space.dim() {
        return Err(Error::Oracle(format!("operator of dimension {} on a space of dimension {}", rho.dim, space.dim())));
    }
    let ev = |op: &Mono| rho.expect(op);
    let na = space.n_atoms;
    let a = Mono::a(space);
    let sm: Vec<Mono> = (0..na).map(|i| Mono::sm(space, i)).collect();
    let spl: Vec<Mono> = sm.iter().map(Mono::adjoint).collect();
    let sz: Vec<Mono> = (0..na).map(|i| Mono::sz(space, i)).collect();

    let photon_number = ev(&a.adjoint().then_after(&a)).re;
    let cs: Vec<c64> = spl.iter().map(|s| ev(&a.then_after(s))).collect();
    let ss: Vec<f64> = sz.iter().map(|s| ev(s).re).collect();
    let mut spread = 0.0f64;
    for i in 1..na {
        spread = spread.max((cs[i] - cs[0]).norm()).max((ss[i] - ss[0]).abs());
    }

    let mut pair = c64::new(0.0, 0.0);
    let mut zz = ss[0] * ss[0];
    let mut j_squared = 0.0;
    if na >= 2 {
        pair = ev(&spl[0].then_after(&sm[1]));
        zz = ev(&sz[0].then_after(&sz[1])).re;
    }
    // J² = J₊J₋ + J_z² − J_z
    for i in 0..na {
        j_squared -= 0.5 * ss[i];
        for j in 0..na {
            let pij = ev(&spl[i].then_after(&sm[j]));
            let zij = ev(&sz[i].then_after(&sz[j])).re;
            j_squared += pij.re + 0.25 * zij;
            if i != j {
                spread = spread.max((pij - pair).norm()).max((zij - zz).abs());
            }
        }
    }

    let (mut filter_number, mut cross_photon, mut cross_atom) = (None, None, None);
    if space.m_max.is_some() {
        let f = Mono::f(space);
        let fd = f.adjoint();
        filter_number = Some(ev(&fd.then_after(&f)).re);
        cross_photon = Some(ev(&a.then_after(&fd)));
        cross_atom = Some(ev(&sm[0].then_after(&fd)));
    }
    Ok(OracleMoments {
        photon_number,
        atom_photon: cs[0],
        inversion: ss[0],
        pair_corr: pair,
        zz,
        j_squared,
        symmetry_spread: spread,
        filter_number,
        cross_photon,
        cross_atom,
    })
}

/// `d⟨O⟩/dt = Tr[O L(ρ)]` for every tracked moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentDerivatives {
    pub base: MomentState,
    /// `(d⟨f†f⟩, d⟨a f†⟩, d⟨σ⁻₀ f†⟩)` when a filter mode is present.
    pub filter: Option<(f64, Complex64, Complex64)>,
}

pub fn moment_derivatives(
    params: &SystemParams,
    space: &OracleSpace,
    probe: Option<&FilterProbe>,
    rho: &DenseOperator,
) -> Result<MomentDerivatives> {
    let l = Liouvillian::new(params, *space, probe)?;
    if rho.dim != space.dim() {
        return Err(Error::Oracle(format!("operator of dimension {} on a space of dimension {}", rho.dim, space.dim())));
    }
    let drho = DenseOperator { dim: rho.dim, entries: l.apply(&rho.entries) };
    let m = moments(space, &drho)?;
    let filter = match (m.filter_number, m.cross_photon, m.cross_atom) {
        (Some(f), Some(x), Some(y)) => Some((f, x, y)),
        _ => None,
    };
    Ok(MomentDerivatives { base: m.as_moment_state(), filter })
}

/// `ρ_atom^⊗N ⊗ ρ_cavity [⊗ ρ_filter]`.
pub fn product_state(
    space: &OracleSpace,
    atom: &[[c64; 2]; 2],
    cavity: &Mat<c64>,
    filter: Option<&Mat<c64>>,
) -> Result<DenseOperator> {
    if cavity.nrows() != space.nc() || filter.map_or(1, |f| f.nrows()) != space.nf() {
        return Err(Error::Oracle("factor dimensions do not match the space".into()));
    }
    let d = space.dim();
    let one = Mat::from_fn(1, 1, |_, _| c64::new(1.0, 0.0));
    let filt = filter.unwrap_or(&one);
    let entries = Mat::from_fn(d, d, |k, l| {
        let (bk, nk, mk) = space.decode(k);
        let (bl, nl, ml) = space.decode(l);
        let mut v = cavity[(nk, nl)] * filt[(mk, ml)];
        for i in 0..space.n_atoms {
            v *= atom[bk >> i & 1][bl >> i & 1];
        }
        v
    });
    Ok(DenseOperator { dim: d, entries })
}

/// Exact solution `e^{Lt} ρ`, sector by sector.
pub fn evolve(l: &Liouvillian, rho: &DenseOperator, t: f64) -> Result<DenseOperator> {
    let space = l.space;
    let d = space.dim();
    let max_exc = (0..d).map(|k| space.excitations(k)).max().unwrap_or(0) as isize;
    let mut out = Mat::<c64>::zeros(d, d);
    for q in -max_exc..=max_exc {
        let sector = Sector::new(&space, q);
        let v = sector.gather(&rho.entries);
        if v.iter().all(|x| x.norm() == 0.0) {
            continue;
        }
        let block = l.block(&sector)?;
        let n = sector.len();
        let e = expm::expm(&Mat::from_fn(n, n, |i, j| block[(i, j)] * t));
        let x = Mat::from_fn(n, 1, |i, _| v[i]);
        let y = &e * &x;
        let yv: Vec<c64> = (0..n).map(|i| y[(i, 0)]).collect();
        sector.scatter(&yv, &mut out);
    }
    Ok(DenseOperator { dim: d, entries: out })
}

/// Steady state at a fixed cutoff, with `‖L(ρ)‖` (max entry).
pub fn steady_state_at(l: &Liouvillian) -> Result<(DenseOperator, f64)> {
    let space = l.space;
    let d = space.dim();
    let sector = Sector::new(&space, 0);
    let mut m = l.block(&sector)?;
    let n = sector.len();
    // the trace functional is a left null vector; swap it in for one row
    let anchor = sector.position(0, 0).expect("ground state is in the neutral sector");
    for j in 0..n {
        let (k, l2) = sector.pairs[j];
        m[(anchor, j)] = c64::new(if k == l2 { 1.0 } else { 0.0 }, 0.0);
    }
    let mut rhs = Mat::<c64>::zeros(n, 1);
    rhs[(anchor, 0)] = c64::new(1.0, 0.0);
    let x = m.partial_piv_lu().solve(&rhs);
    let v: Vec<c64> = (0..n).map(|i| x[(i, 0)]).collect();
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Oracle("singular steady-state system".into()));
    }
    let mut rho = Mat::<c64>::zeros(d, d);
    sector.scatter(&v, &mut rho);
    let residual = l.apply(&rho).norm_max();
    Ok((DenseOperator { dim: d, entries: rho }, residual))
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub rho_ss: DenseOperator,
    pub moments: OracleMoments,
    pub n_max: usize,
    /// Largest entry of `L(ρ_ss)`.
    pub residual: f64,
    /// Relative moment shift between the last two cutoffs.
    pub drift: f64,
}

/// Relative change per moment, floored at 1e-10 absolute.
fn moment_drift(a: &OracleMoments, b: &OracleMoments) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).norm() / y.norm().max(1e-10))
        .fold(0.0, f64::max)
}

/// Steady state with cutoff convergence: the cutoff is raised by 2 until
/// every reported moment moves by less than 1e-6 relative (at most 3 rounds).
pub fn oracle_steady_state(params: &SystemParams, n_max: usize) -> Result<OracleResult> {
    check_space(params, n_max)?;
    let na = params.n_atoms as usize;
    let solve = |nm: usize| -> Result<(DenseOperator, f64, OracleMoments)> {
        let l = Liouvillian::new(params, OracleSpace::new(na, nm), None)?;
        let (rho, res) = steady_state_at(&l)?;
        let m = moments(&l.space, &rho)?;
        Ok((rho, res, m))
    };
    let mut cur = n_max;
    let mut prev = solve(cur)?;
    let mut drift = f64::INFINITY;
    for _ in 0..3 {
        let next = solve(cur + 2)?;
        drift = moment_drift(&prev.2, &next.2);
        cur += 2;
        prev = next;
        if drift < 1e-6 {
            let (rho_ss, residual, moments) = prev;
            return Ok(OracleResult { rho_ss, moments, n_max: cur, residual, drift });
        }
    }
    Err(Error::CutoffDrift { drift, n_max: cur })
}

struct CorrelatorSetup {
    block: Mat<c64>,
    x0: Vec<c64>,
    readout: Vec<c64>,
    n0: f64,
}

fn correlator_setup(params: &SystemParams, n_max: usize) -> Result<CorrelatorSetup> {
    let ss = oracle_steady_state(params, n_max)?;
    let space = OracleSpace::new(params.n_atoms as usize, ss.n_max);
    let l = Liouvillian::new(params, space, None)?;
    let sector = Sector::new(&space, -1);
    let block = l.block(&sector)?;
    let d = space.dim();
    let a = Mono::a(&space);
    let ad = a.adjoint();
    let mut x0 = vec![c64::new(0.0, 0.0); sector.len()];
    for k0 in 0..d {
        let Some((k, c)) = a.apply(k0) else { continue };
        for l2 in 0..d {
            if let Some(p) = sector.position(k, l2) {
                x0[p] += ss.rho_ss.entries[(k0, l2)] * c;
            }
        }
    }
    let mut readout = vec![c64::new(0.0, 0.0); sector.len()];
    for k in 0..d {
        if let Some((l2, c)) = ad.apply(k) {
            if let Some(p) = sector.position(k, l2) {
                readout[p] += c;
            }
        }
    }
    Ok(CorrelatorSetup { block, x0, readout, n0: ss.moments.photon_number })
}

fn normalized_scan(grid: &[f64], mut values: Vec<f64>) -> SpectrumScan {
    let peak = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak > 0.0 {
        values.iter_mut().for_each(|v| *v /= peak);
    }
    SpectrumScan { points: grid.iter().cloned().zip(values).collect(), method: ScanMethod::Oracle }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Oracle("frequency grid must be non-empty and strictly increasing".into()));
    }
    Ok(())
}

/// Emission spectrum `Re ∫₀^T e^{−iωτ} Tr[a† e^{Lτ}(a ρ_ss)] dτ` by exact
/// propagation over steps `dt` and trapezoidal quadrature, normalized to
/// unit peak. T is the first time the correlator stays below 1e-6 of its
/// initial value.
pub fn oracle_spectrum(params: &SystemParams, n_max: usize, grid: &[f64]) -> Result<SpectrumScan> {
    const MAX_STEPS: usize = 400_000;
    const WINDOW: usize = 64;
    check_grid(grid)?;
    let setup = correlator_setup(params, n_max)?;
    if setup.n0 <= 0.0 {
        return Ok(normalized_scan(grid, vec![0.0; grid.len()]));
    }
    let omega_max = grid.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let rabi = 2.0 * params.g * (params.n() * (n_max as f64 + 3.0)).sqrt();
    let big_omega = omega_max + params.omega_c.abs() + params.omega_a.abs() + rabi + params.kappa;
    let dt = 0.5 / big_omega;
    let n = setup.block.nrows();
    let prop = expm::expm(&Mat::from_fn(n, n, |i, j| setup.block[(i, j)] * dt));

    let read = |x: &Mat<c64>| -> c64 { (0..n).map(|i| setup.readout[i] * x[(i, 0)]).sum() };
    let mut x = Mat::from_fn(n, 1, |i, _| setup.x0[i]);
    let g0 = read(&x);
    let mut acc: Vec<c64> = vec![g0 * 0.5; grid.len()];
    let phase_step: Vec<c64> = grid.iter().map(|w| c64::from_polar(1.0, -w * dt)).collect();
    let mut phase: Vec<c64> = vec![c64::new(1.0, 0.0); grid.len()];
    let mut recent_max = 0.0f64;
    let mut since = 0usize;
    for step in 1..=MAX_STEPS {
        x = &prop * &x;
        let gk = read(&x);
        for (j, a) in acc.iter_mut().enumerate() {
            phase[j] *= phase_step[j];
            *a += gk * phase[j];
        }
        recent_max = recent_max.max(gk.norm());
        since += 1;
        if since == WINDOW {
            if recent_max < 1e-6 * g0.norm() {
                let values = acc.iter().map(|a| (a * dt).re).collect();
                return Ok(normalized_scan(grid, values));
            }
            recent_max = 0.0;
            since = 0;
        }
        if step == MAX_STEPS {
            return Err(Error::CorrelatorNotDecayed { t_max: step as f64 * dt, remaining: gk.norm() / g0.norm() });
        }
    }
    unreachable!()
}

/// Same spectrum from the resolvent, `Re Tr[a† (iω − L)⁻¹ (a ρ_ss)]`,
/// one linear solve per frequency.
pub fn oracle_spectrum_resolvent(params: &SystemParams, n_max: usize, grid: &[f64]) -> Result<SpectrumScan> {
    check_grid(grid)?;
    let setup = correlator_setup(params, n_max)?;
    if setup.n0 <= 0.0 {
        return Ok(normalized_scan(grid, vec![0.0; grid.len()]));
    }
    let n = setup.block.nrows();
    let rhs = Mat::from_fn(n, 1, |i, _| setup.x0[i]);
    let mut values = Vec::with_capacity(grid.len());
    for &w in grid {
        let m = Mat::from_fn(n, n, |i, j| {
            let diag = if i == j { c64::new(0.0, w) } else { c64::new(0.0, 0.0) };
            diag - setup.block[(i, j)]
        });
        let y = m.partial_piv_lu().solve(&rhs);
        let v: c64 = (0..n).map(|i| setup.readout[i] * y[(i, 0)]).sum();
        values.push(v.re);
    }
    Ok(normalized_scan(grid, values))
}
