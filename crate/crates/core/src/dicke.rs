//! Collective (Dicke) description of the atomic moments.

use serde::{Deserialize, Serialize};

use crate::cumulant::MomentState;
use crate::error::{Error, Result};
use crate::model::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DickePoint {
    pub j_eff: f64,
    pub m_eff: f64,
    pub j_over_n: f64,
    pub m_over_n: f64,
    /// `⟨J²⟩` before the clamp.
    pub j_squared: f64,
    /// Set when the closure produced `⟨J²⟩ < 0` and it was clamped to zero.
    pub clamped: bool,
}

/// `⟨J²⟩` for N identical atoms from single-atom and pair moments.
///
/// `zz` is `⟨σᶻⱼσᶻₖ⟩` for j ≠ k.
pub fn j_squared(n_atoms: f64, pair_re: f64, zz: f64) -> f64 {
    0.75 * n_atoms + 0.25 * n_atoms * (n_atoms - 1.0) * (4.0 * pair_re + zz)
}

/// J from `J(J+1) = ⟨J²⟩`.
pub fn j_from_j_squared(j2: f64) -> f64 {
    ((1.0 + 4.0 * j2).sqrt() - 1.0) / 2.0
}

/// Effective (J, M) with `⟨σᶻⱼσᶻₖ⟩` factorized as `s²`.
pub fn dicke_numbers(state: &MomentState, params: &SystemParams) -> Result<DickePoint> {
    dicke_numbers_with_zz(state, params, state.inversion * state.inversion)
}

/// Same as [`dicke_numbers`] with an explicit `⟨σᶻⱼσᶻₖ⟩`.
pub fn dicke_numbers_with_zz(state: &MomentState, params: &SystemParams, zz: f64) -> Result<DickePoint> {
    if !state.is_finite() || !zz.is_finite() {
        return Err(Error::NonFinite("moment state"));
    }
    let n = params.n();
    let j2 = j_squared(n, state.pair_corr.re, zz);
    let clamped = j2 < 0.0;
    let j = j_from_j_squared(j2.max(0.0));
    let m = n * state.inversion / 2.0;
    Ok(DickePoint { j_eff: j, m_eff: m, j_over_n: j / n, m_over_n: m / n, j_squared: j2, clamped })
}

/// `√((J−M+1)(J+M))`, the matrix element of J⁻ between |J,M⟩ and |J,M−1⟩.
pub fn lowering_amplitude(j: f64, m: f64) -> Result<f64> {
    let slack = 1e-12 * (1.0 + j.abs());
    if !(j.is_finite() && m.is_finite()) || j < 0.0 || m.abs() > j + slack {
        return Err(Error::DickeDomain(format!("|M| = {} exceeds J = {j}", m.abs())));
    }
    Ok(((j - m + 1.0) * (j + m)).max(0.0).sqrt())
}

/// Pump-induced transition rates out of |J,M⟩.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchRates {
    /// To |J, M+1⟩.
    pub up_in_j: f64,
    /// To |J−1, M+1⟩.
    pub down_j: f64,
    /// To |J+1, M+1⟩.
    pub up_j: f64,
}

impl BranchRates {
    pub fn total(&self) -> f64 {
        self.up_in_j + self.down_j + self.up_j
    }
}

pub fn pump_branching(n_atoms: u64, j: f64, m: f64, eta: f64) -> Result<BranchRates> {
    let n = n_atoms as f64;
    let slack = 1e-12 * (1.0 + n);
    if !(j.is_finite() && m.is_finite() && eta.is_finite()) || j < -slack || j > n / 2.0 + slack || m.abs() > j + slack
    {
        return Err(Error::DickeDomain(format!("(J, M) = ({j}, {m}) with N = {n_atoms}")));
    }
    if eta < 0.0 {
        return Err(Error::InvalidParams("pump rate must be non-negative".into()));
    }
    let up_j = eta * (n - 2.0 * j) * (j + m + 1.0) * (j + m + 2.0) / (4.0 * (j + 1.0) * (2.0 * j + 1.0));
    if j == 0.0 {
        return Ok(BranchRates { up_in_j: 0.0, down_j: 0.0, up_j });
    }
    let up_in_j = eta * (2.0 + n) * (j - m) * (j + m + 1.0) / (4.0 * j * (j + 1.0));
    let down_j = eta * (n + 2.0 * j + 2.0) * (j - m) * (j - m - 1.0) / (4.0 * j * (2.0 * j + 1.0));
    Ok(BranchRates { up_in_j, down_j, up_j })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    Subradiant,
    Superradiant,
    SuperradiantLasing,
    ConventionalLike,
}

impl RegimeLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegimeLabel::Subradiant => "subradiant",
            RegimeLabel::Superradiant => "superradiant",
            RegimeLabel::SuperradiantLasing => "superradiant_lasing",
            RegimeLabel::ConventionalLike => "conventional-like",
        }
    }
}

impl std::fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RegimeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "subradiant" => RegimeLabel::Subradiant,
            "superradiant" => RegimeLabel::Superradiant,
            "superradiant_lasing" => RegimeLabel::SuperradiantLasing,
            "conventional-like" => RegimeLabel::ConventionalLike,
            other => return Err(Error::InvalidParams(format!("unknown regime `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub label: RegimeLabel,
    pub purcell: f64,
    pub gamma: f64,
    pub photon_number: f64,
}

pub fn classify_regime(state: &MomentState, params: &SystemParams) -> Result<Regime> {
    let n = state.photon_number;
    if !n.is_finite() {
        return Err(Error::NonFinite("photon number"));
    }
    let purcell = params.derived().purcell;
    let eta = params.eta;
    let label = if eta < purcell {
        RegimeLabel::Subradiant
    } else if n < 1.0 {
        RegimeLabel::Superradiant
    } else if eta > params.gamma {
        RegimeLabel::SuperradiantLasing
    } else {
        RegimeLabel::ConventionalLike
    };
    Ok(Regime { label, purcell, gamma: params.gamma, photon_number: n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectiveThreshold {
    /// Atom number at which `√N g = κ`.
    pub n_threshold: f64,
    pub exceeded: bool,
}

pub fn collective_threshold(params: &SystemParams) -> CollectiveThreshold {
    if params.g == 0.0 {
        return CollectiveThreshold { n_threshold: f64::INFINITY, exceeded: false };
    }
    let n_threshold = (params.kappa / params.g).powi(2);
    CollectiveThreshold { n_threshold, exceeded: params.n() > n_threshold }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::preset;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn state(s: f64, p: f64) -> MomentState {
        MomentState::new(0.0, Complex64::new(0.0, 0.0), s, Complex64::new(p, 0.0))
    }

    #[test]
    fn ground_and_inverted_are_extreme_dicke_states() {
        let p = preset("sr88").unwrap().with_n(4);
        let d = dicke_numbers(&state(-1.0, 0.0), &p).unwrap();
        assert_eq!(d.j_squared, 6.0);
        assert!((d.j_eff - 2.0).abs() < 1e-14);
        assert_eq!(d.m_eff, -2.0);
        let d = dicke_numbers(&state(1.0, 0.0), &p).unwrap();
        assert!((d.j_eff - 2.0).abs() < 1e-14);
        assert_eq!(d.m_eff, 2.0);
        assert_eq!(d.m_over_n, 0.5);
    }

    #[test]
    fn triplet_zero() {
        let p = preset("sr88").unwrap().with_n(2);
        let d = dicke_numbers_with_zz(&state(0.0, 0.5), &p, -1.0).unwrap();
        assert!((d.j_squared - 2.0).abs() < 1e-15);
        assert!((d.j_eff - 1.0).abs() < 1e-15);
        assert_eq!(d.m_eff, 0.0);
    }

    #[test]
    fn negative_j_squared_is_clamped() {
        let p = preset("sr88").unwrap().with_n(10);
        let d = dicke_numbers_with_zz(&state(0.0, -0.5), &p, 0.0).unwrap();
        assert!(d.clamped && d.j_eff == 0.0);
    }

    #[test]
    fn nan_moments_are_rejected() {
        let p = preset("sr88").unwrap().with_n(10);
        assert!(dicke_numbers(&state(f64::NAN, 0.0), &p).is_err());
    }

    #[test]
    fn lowering_amplitude_values() {
        assert_eq!(lowering_amplitude(3.0, -3.0).unwrap(), 0.0);
        assert!((lowering_amplitude(1.0, 1.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let a = lowering_amplitude(50.0, 0.0).unwrap();
        assert!((a - (51.0f64 * 50.0).sqrt()).abs() < 1e-12);
        assert!((a - 50.5).abs() < 0.01);
        assert!(lowering_amplitude(1.0, 1.5).is_err());
    }

    #[test]
    fn branching_examples() {
        let eta = 1.7;
        let r = pump_branching(4, 2.0, -2.0, eta).unwrap();
        assert!((r.up_in_j - eta).abs() < 1e-15 && (r.down_j - 3.0 * eta).abs() < 1e-15 && r.up_j == 0.0);
        let r = pump_branching(4, 1.0, 1.0, eta).unwrap();
        assert!(r.up_in_j == 0.0 && r.down_j == 0.0 && (r.up_j - eta).abs() < 1e-15);
        let r = pump_branching(4, 1.0, -1.0, eta).unwrap();
        assert!((r.up_in_j - 1.5 * eta).abs() < 1e-15);
        assert!((r.down_j - 4.0 / 3.0 * eta).abs() < 1e-15);
        assert!((r.up_j - eta / 6.0).abs() < 1e-15);
        let r = pump_branching(4, 0.0, 0.0, eta).unwrap();
        assert_eq!((r.up_in_j, r.down_j), (0.0, 0.0));
        assert!((r.up_j - 2.0 * eta).abs() < 1e-15);
        assert!(pump_branching(4, 3.0, 0.0, eta).is_err());
        assert!(pump_branching(4, 1.0, 2.0, eta).is_err());
    }

    #[test]
    fn regimes() {
        let base = preset("sr88").unwrap();
        let purcell = base.derived().purcell;
        let p = base.with_n(100).with_eta(purcell / 10.0);
        let r = classify_regime(&state(-0.9, 0.0), &p).unwrap();
        assert_eq!(r.label, RegimeLabel::Subradiant);
        let p = base.with_n(100).with_eta(2.0 * base.gamma);
        let mut st = state(0.1, 0.01);
        st.photon_number = 0.5;
        assert_eq!(classify_regime(&st, &p).unwrap().label, RegimeLabel::Superradiant);
        st.photon_number = 50.0;
        assert_eq!(classify_regime(&st, &p).unwrap().label, RegimeLabel::SuperradiantLasing);
        let p = base.with_n(100).with_eta(0.9 * base.gamma);
        assert_eq!(classify_regime(&st, &p).unwrap().label, RegimeLabel::ConventionalLike);
        st.photon_number = f64::NAN;
        assert!(classify_regime(&st, &p).is_err());
        for l in [RegimeLabel::Subradiant, RegimeLabel::Superradiant, RegimeLabel::SuperradiantLasing, RegimeLabel::ConventionalLike] {
            assert_eq!(l.as_str().parse::<RegimeLabel>().unwrap(), l);
        }
    }

    #[test]
    fn collective_thresholds() {
        let t = collective_threshold(&preset("sr87").unwrap());
        assert!((t.n_threshold / 4.4e9 - 1.0).abs() < 0.01, "{}", t.n_threshold);
        let t = collective_threshold(&preset("sr88").unwrap());
        assert!((t.n_threshold - (160.0f64 / 10.6).powi(2)).abs() < 1e-9);
        let t = collective_threshold(&SystemParams::new(2, 1.0, 1.0, 0.1));
        assert_eq!(t.n_threshold, 1.0);
        assert!(t.exceeded);
        let t = collective_threshold(&SystemParams::new(2, 0.0, 1.0, 0.1));
        assert!(t.n_threshold.is_infinite() && !t.exceeded);
    }

    proptest! {
        #[test]
        fn branching_sum_rule(n in 1u64..=20, jk in 0usize..=10, mk in 0usize..=20, eta in 0.01f64..100.0) {
            let jmax = n as f64 / 2.0;
            let j = jmax - (jk as f64).min(jmax.floor());
            let m = -j + (mk as f64).min(2.0 * j);
            let r = pump_branching(n, j, m, eta).unwrap();
            let expect = eta * (jmax - m);
            prop_assert!((r.total() - expect).abs() <= 1e-12 * expect);
            prop_assert!(r.up_in_j >= 0.0 && r.down_j >= 0.0 && r.up_j >= 0.0);
        }
    }
}
