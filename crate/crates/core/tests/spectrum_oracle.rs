mod common;

use superlase::oracle::{self, moments, steady_state_at, Liouvillian, OracleSpace};
use superlase::spectrum::{fit_lorentzian, linear_grid, linewidth, FilterProbe, ScanMethod, SpectrumScan};
use superlase::SystemParams;

/// One atom, weakly coupled: the closure is nearly exact.
fn weak_single_atom() -> SystemParams {
    SystemParams::new(1, 0.01, 1.0, 0.01).with_eta(0.005)
}

#[test]
fn weak_coupling_linewidth_matches_exact_spectrum() {
    let p = weak_single_atom();
    let lw = linewidth(&p).unwrap();
    let grid = linear_grid(lw.fit.center, 6.0 * lw.delta_nu, 81);
    let exact = fit_lorentzian(&oracle::oracle_spectrum(&p, 3, &grid).unwrap()).unwrap();
    let dev = (lw.delta_nu - exact.fwhm).abs() / exact.fwhm;
    assert!(dev < 0.05, "cumulant {} exact {} ({dev})", lw.delta_nu, exact.fwhm);
}

#[test]
fn propagation_and_resolvent_agree() {
    let p = common::desk(2);
    let grid = linear_grid(0.0, 1.5, 31);
    let a = oracle::oracle_spectrum(&p, 4, &grid).unwrap().intensities();
    let b = oracle::oracle_spectrum_resolvent(&p, 4, &grid).unwrap().intensities();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-5, "{x} vs {y}");
    }
}

#[test]
fn uncoupled_cavity_has_no_spectrum() {
    let p = SystemParams::new(2, 0.0, 1.0, 0.01).with_eta(0.2);
    let grid = linear_grid(0.0, 1.0, 11);
    let s = oracle::oracle_spectrum_resolvent(&p, 3, &grid).unwrap();
    assert!(s.intensities().iter().all(|&v| v == 0.0));
}

#[test]
fn explicit_filter_mode_reproduces_the_correlator_spectrum() {
    let p = common::desk(1);
    let beta = 0.02;
    let grid = linear_grid(0.0, 1.2, 61);
    let space = OracleSpace::with_filter(1, 4, 2);
    let points = grid
        .iter()
        .map(|&w| {
            let probe = FilterProbe::new(1e-3, beta, w);
            let l = Liouvillian::new(&p, space.clone(), Some(&probe)).unwrap();
            let (rho, _) = steady_state_at(&l).unwrap();
            (w, moments(&space, &rho).unwrap().filter_number.unwrap())
        })
        .collect();
    let filtered = fit_lorentzian(&SpectrumScan { points, method: ScanMethod::Oracle }).unwrap();
    let exact = fit_lorentzian(&oracle::oracle_spectrum(&p, 4, &grid).unwrap()).unwrap();
    let dev = (filtered.fwhm - beta - exact.fwhm).abs() / exact.fwhm;
    assert!(dev < 0.01, "filter {} correlator {} ({dev})", filtered.fwhm - beta, exact.fwhm);
}
