//! Physical parameters, presets and derived rates.
//!
//! Every rate and frequency is stored as an angular frequency in rad/s.
//! Configuration files, CSV and the command line speak ordinary frequency in
//! Hz; [`hz_to_rad`] and [`rad_to_hz`] are the only crossing points.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Repumping rate reported for the Sr-88 experiment, rad/s.
pub const ETA_EXP: f64 = TAU * 23.87e3;

pub fn hz_to_rad(f_hz: f64) -> f64 {
    f_hz * TAU
}

pub fn rad_to_hz(omega: f64) -> f64 {
    omega / TAU
}

/// Atoms, cavity and reservoir rates of the laser model.
///
/// `omega_a` is the atomic transition frequency and `omega_c` the cavity
/// frequency, both measured in a common rotating frame; only their
/// difference and the filter detuning enter any observable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub n_atoms: u64,
    pub omega_a: f64,
    pub omega_c: f64,
    pub g: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub eta: f64,
    pub chi: f64,
}

impl SystemParams {
    /// Resonant system with no pumping or dephasing.
    pub fn new(n_atoms: u64, g: f64, kappa: f64, gamma: f64) -> Self {
        Self {
            n_atoms,
            omega_a: 0.0,
            omega_c: 0.0,
            g,
            kappa,
            gamma,
            eta: 0.0,
            chi: 0.0,
        }
    }

    pub fn with_n(mut self, n_atoms: u64) -> Self {
        self.n_atoms = n_atoms;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_chi(mut self, chi: f64) -> Self {
        self.chi = chi;
        self
    }

    pub fn with_g(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    /// Sets `omega_a - omega_c` while keeping the cavity at the frame origin.
    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.omega_c = 0.0;
        self.omega_a = detuning;
        self
    }

    pub fn n(&self) -> f64 {
        self.n_atoms as f64
    }

    pub fn detuning(&self) -> f64 {
        self.omega_a - self.omega_c
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_atoms < 1 {
            return Err(Error::InvalidParams("n_atoms must be at least 1".into()));
        }
        let fields = [
            ("omega_a", self.omega_a),
            ("omega_c", self.omega_c),
            ("g", self.g),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("eta", self.eta),
            ("chi", self.chi),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} is not finite")));
            }
        }
        for (name, v) in &fields[2..] {
            if *v < 0.0 {
                return Err(Error::InvalidParams(format!("{name} = {v} is negative")));
            }
        }
        Ok(())
    }

    pub fn derived(&self) -> DerivedRates {
        derived(self)
    }
}

/// Rates built from [`SystemParams`] that recur in the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedRates {
    /// Purcell-enhanced single-atom decay 4g²/κ.
    pub purcell: f64,
    /// Coherence decay η + γ + 2χ.
    pub big_gamma: f64,
    /// Collective Purcell rate N·Γ_c.
    pub c_collective: f64,
    /// Bare inversion (η − γ)/(η + γ); `None` when η + γ = 0.
    pub d0: Option<f64>,
    /// √N·g.
    pub collective_coupling: f64,
}

pub fn derived(p: &SystemParams) -> DerivedRates {
    let purcell = if p.kappa > 0.0 {
        4.0 * p.g * p.g / p.kappa
    } else if p.g == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let pump_plus_decay = p.eta + p.gamma;
    DerivedRates {
        purcell,
        big_gamma: p.eta + p.gamma + 2.0 * p.chi,
        c_collective: p.n() * purcell,
        d0: (pump_plus_decay > 0.0).then(|| (p.eta - p.gamma) / pump_plus_decay),
        collective_coupling: p.n().sqrt() * p.g,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Sr88,
    Sr87,
}

impl std::str::FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sr88" => Ok(PresetName::Sr88),
            "sr87" => Ok(PresetName::Sr87),
            _ => Err(Error::UnknownPreset(s.to_string())),
        }
    }
}

impl std::fmt::Display for PresetName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PresetName::Sr88 => "sr88",
            PresetName::Sr87 => "sr87",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Preset {
    pub name: PresetName,
    pub params: SystemParams,
}

impl Preset {
    pub fn all() -> [Preset; 2] {
        [PresetName::Sr88, PresetName::Sr87].map(|name| Preset {
            name,
            params: preset_params(name),
        })
    }
}

fn preset_params(name: PresetName) -> SystemParams {
    let kappa = TAU * 160e3;
    match name {
        // 3P1 -> 1S0 intercombination line
        PresetName::Sr88 => SystemParams::new(1, TAU * 10.6e3, kappa, TAU * 7.5e3),
        // 3P0 -> 1S0 clock line
        PresetName::Sr87 => SystemParams::new(1, TAU * 2.41, kappa, TAU * 1e-3),
    }
}

/// Looks up a named preset: resonant, no pumping, no dephasing, one atom.
pub fn preset(name: &str) -> Result<SystemParams> {
    Ok(preset_params(name.parse()?))
}

/// External parameter file. Frequencies are in Hz; explicit fields override
/// the preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_atoms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning_hz: Option<f64>,
}

impl ParamsConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(&self, other: &ParamsConfig) -> ParamsConfig {
        ParamsConfig {
            preset: other.preset.clone().or_else(|| self.preset.clone()),
            n_atoms: other.n_atoms.or(self.n_atoms),
            eta_hz: other.eta_hz.or(self.eta_hz),
            chi_hz: other.chi_hz.or(self.chi_hz),
            g_hz: other.g_hz.or(self.g_hz),
            kappa_hz: other.kappa_hz.or(self.kappa_hz),
            gamma_hz: other.gamma_hz.or(self.gamma_hz),
            detuning_hz: other.detuning_hz.or(self.detuning_hz),
        }
    }

    pub fn resolve(&self) -> Result<SystemParams> {
        let mut p = match &self.preset {
            Some(name) => preset(name)?,
            None => {
                let missing: Vec<&str> = [
                    ("g_hz", self.g_hz),
                    ("kappa_hz", self.kappa_hz),
                    ("gamma_hz", self.gamma_hz),
                ]
                .iter()
                .filter(|(_, v)| v.is_none())
                .map(|(k, _)| *k)
                .collect();
                if !missing.is_empty() {
                    return Err(Error::InvalidParams(format!(
                        "no preset given and missing {}",
                        missing.join(", ")
                    )));
                }
                SystemParams::new(1, 0.0, 0.0, 0.0)
            }
        };
        if let Some(n) = self.n_atoms {
            p.n_atoms = n;
        }
        if let Some(v) = self.eta_hz {
            p.eta = hz_to_rad(v);
        }
        if let Some(v) = self.chi_hz {
            p.chi = hz_to_rad(v);
        }
        if let Some(v) = self.g_hz {
            p.g = hz_to_rad(v);
        }
        if let Some(v) = self.kappa_hz {
            p.kappa = hz_to_rad(v);
        }
        if let Some(v) = self.gamma_hz {
            p.gamma = hz_to_rad(v);
        }
        if let Some(v) = self.detuning_hz {
            p = p.with_detuning(hz_to_rad(v));
        }
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn presets_hold_quoted_rates() {
        let sr88 = preset("sr88").unwrap();
        assert_eq!(sr88.gamma, TAU * 7.5e3);
        assert_eq!(sr88.kappa, TAU * 160e3);
        assert_eq!(sr88.g, TAU * 10.6e3);
        assert_eq!((sr88.omega_a, sr88.omega_c, sr88.chi, sr88.eta), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(sr88.n_atoms, 1);

        let sr87 = preset("sr87").unwrap();
        assert_eq!(sr87.gamma, TAU * 1e-3);
        assert_eq!(sr87.kappa, TAU * 160e3);
        assert_eq!(sr87.g, TAU * 2.41);
    }

    #[test]
    fn unknown_preset_is_an_error() {
        let err = preset("sr86").unwrap_err();
        assert!(matches!(err, Error::UnknownPreset(ref s) if s == "sr86"));
        assert!(err.to_string().contains("sr86"));
    }

    #[test]
    fn purcell_rates() {
        let d = derived(&preset("sr88").unwrap());
        assert!(rel(d.purcell, TAU * 2.81e3) < 5e-3);

        let d = derived(&preset("sr87").unwrap());
        // 4 (2π·2.41)² / (2π·160e3) = 2π · 1.452025e-4
        assert!(rel(d.purcell, TAU * 1.452025e-4) < 1e-12);

        let d = derived(&preset("sr88").unwrap().with_g(0.0));
        assert_eq!(d.purcell, 0.0);
        assert_eq!(d.c_collective, 0.0);
    }

    #[test]
    fn derived_fields() {
        let p = SystemParams::new(100, 2.0, 16.0, 1.0).with_eta(3.0).with_chi(0.5);
        let d = p.derived();
        assert_eq!(d.purcell, 1.0);
        assert_eq!(d.big_gamma, 5.0);
        assert_eq!(d.c_collective, 100.0);
        assert_eq!(d.d0, Some(0.5));
        assert_eq!(d.collective_coupling, 20.0);

        let d = SystemParams::new(1, 1.0, 1.0, 0.0).derived();
        assert_eq!(d.d0, None);
    }

    #[test]
    fn config_overrides_preset() {
        let cfg = ParamsConfig::from_json(
            r#"{"preset": "sr88", "n_atoms": 1000, "eta_hz": 23870.0, "chi_hz": 0.0, "kappa_hz": 100000.0}"#,
        )
        .unwrap();
        let p = cfg.resolve().unwrap();
        assert_eq!(p.n_atoms, 1000);
        assert_eq!(p.kappa, TAU * 1e5);
        assert_eq!(p.g, TAU * 10.6e3);
        assert!(rel(p.eta, ETA_EXP) < 1e-15);

        let flags = ParamsConfig {
            n_atoms: Some(7),
            ..Default::default()
        };
        assert_eq!(cfg.overlay(&flags).resolve().unwrap().n_atoms, 7);
    }

    #[test]
    fn config_without_preset_needs_rates() {
        let cfg = ParamsConfig::from_json(r#"{"n_atoms": 2, "eta_hz": 1.0, "chi_hz": 0.0}"#).unwrap();
        assert!(matches!(cfg.resolve(), Err(Error::InvalidParams(_))));
        assert!(ParamsConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn validation_rejects_bad_records() {
        let p = SystemParams::new(0, 1.0, 1.0, 1.0);
        assert!(p.validate().is_err());
        assert!(SystemParams::new(1, 1.0, -1.0, 1.0).validate().is_err());
        assert!(SystemParams::new(1, f64::NAN, 1.0, 1.0).validate().is_err());
        assert!(SystemParams::new(1, 0.0, 1.0, 1.0).validate().is_ok());
    }

    proptest! {
        #[test]
        fn hz_round_trip_prints_back(f in 1e-6f64..1e9) {
            let back = rad_to_hz(hz_to_rad(f));
            prop_assert_eq!(format!("{:.11e}", back), format!("{:.11e}", f));
        }

        #[test]
        fn derived_is_pure(g in 0.0f64..1e5, kappa in 1e-3f64..1e7, gamma in 0.0f64..1e5, eta in 0.0f64..1e6, n in 1u64..1_000_000) {
            let p = SystemParams::new(n, g, kappa, gamma).with_eta(eta);
            let (a, b) = (derived(&p), derived(&p));
            prop_assert_eq!(a.purcell.to_bits(), b.purcell.to_bits());
            prop_assert_eq!(a.big_gamma.to_bits(), b.big_gamma.to_bits());
            prop_assert_eq!(a.purcell, 4.0 * g * g / kappa);
            if let Some(d0) = a.d0 {
                prop_assert!((-1.0..=1.0).contains(&d0));
            }
        }
    }
}
