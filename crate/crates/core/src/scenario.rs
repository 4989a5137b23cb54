//! Complete link configuration and the bridges into the analysis and
//! stabilization models.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    noise_corrected_chain, visibility_with_noise, BerCalibration, CorrectedChain, DistanceModel, VisibilityInputs,
};
use crate::apc::{control_noise_penalty, jitter_for_penalty, ApcState, QuantumPath, StabilizationConfig};
use crate::error::{Error, Result};
use crate::link::{
    build_channel_plan, dgd_constraint, total_loss_db, ChannelPlan, Direction, FiberSpec, FiberType, LossBudget,
    PerDirection,
};
use crate::photon::{click_probability, DetectorSpec, SourceSpec};
use crate::polarization::{pbs_split_onto, JonesVector};
use crate::raman::{calibrate, total_background_rate, ChannelConfig, NoiseScenario, RamanParams};

pub const QUANTUM_WAVELENGTH_NM: f64 = 1546.12;
pub const REFERENCE_LENGTH_KM: f64 = 23.0;
pub const BASELINE_LAUNCH_DBM: f64 = -19.8;
pub const HIGH_LAUNCH_DBM: f64 = -17.8;
pub const MEASURED_RAMAN_LOW: (f64, f64) = (1.63, 4.58);
pub const MEASURED_RAMAN_HIGH: (f64, f64) = (2.59, 7.26);

/// Per-node insertion loss left after the itemized components (connectors,
/// circulators, FBGs, couplers); fitted to the 2→1 distance limits.
pub const NODE_INSERTION_DB: f64 = 1.9585;
pub const PBS_EXTINCTION_DB: f64 = 25.0;
/// Residual misalignment of each analyzer, fitted to the controlled visibilities.
pub const ALIGNMENT_ERROR_12_RAD: f64 = 0.0830;
pub const ALIGNMENT_ERROR_21_RAD: f64 = 0.0598;
/// Visibility factor attributed to controller noise.
pub const CONTROL_NOISE_PENALTY: f64 = 0.9677 / 0.9877;
/// Classical reach the BER model is pinned to, km.
pub const CLASSICAL_REACH_KM: f64 = 69.5;
pub const DRIFT_RATE: f64 = 0.05;
/// Per-channel launch for the many-channel projections, dBm.
pub const MULTICHANNEL_LAUNCH_DBM: f64 = -5.0;
/// Quantum filter for the many-channel projections, GHz.
pub const MULTICHANNEL_FILTER_GHZ: f64 = 1.0;

pub const LAUNCH_BAND_DBM: (f64, f64) = (-40.0, 10.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorPair {
    /// Detector on the aligned PBS port.
    pub a: DetectorSpec<f64>,
    pub b: DetectorSpec<f64>,
}

impl DetectorPair {
    /// Mean dark rate per detector, counts/s.
    pub fn mean_dark_rate(&self) -> f64 {
        (self.a.dark_rate_cps() + self.b.dark_rate_cps()) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerSpec {
    pub extinction_ratio_db: f64,
    pub alignment_error_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApcSettings {
    pub controller: ApcState<f64>,
    /// Fiber-spool drift, rad/√s.
    pub drift_rate: f64,
    /// Drift of the uncontrolled pigtails, rad/√s; zero disables it.
    pub residual_drift_rate: f64,
    pub controller_jitter_rad: f64,
    pub loop_period_s: f64,
    pub log_period_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    /// Per classical channel at the fiber input, dBm.
    pub launch_dbm: f64,
    pub quantum_filter_ghz: f64,
    pub quantum_input_sop: JonesVector<f64>,
    pub plan: ChannelPlan,
    pub fiber: FiberSpec<f64>,
    pub budgets: PerDirection<LossBudget<f64>>,
    /// Keyed by the direction the source launches into.
    pub source: PerDirection<SourceSpec<f64>>,
    /// Keyed by the direction whose photons the pair detects.
    pub detectors: PerDirection<DetectorPair>,
    pub analyzer: PerDirection<AnalyzerSpec>,
    pub raman: RamanParams<f64>,
    pub apc: ApcSettings,
    pub ber: BerCalibration<f64>,
}

fn spcm(dark_prob_per_gate: f64) -> DetectorSpec<f64> {
    DetectorSpec {
        efficiency: 0.15,
        dark_prob_per_gate,
        gate_rate_hz: 1e5,
        gate_width_ns: 2.5,
    }
}

pub fn default_paper_scenario() -> Scenario {
    let fiber = FiberSpec {
        length_km: REFERENCE_LENGTH_KM,
        attenuation_db_per_km: 0.2,
        mean_dgd_ps: 0.22,
        fiber_type: FiberType::DispersionShifted,
    };
    let raman = calibrate(
        REFERENCE_LENGTH_KM,
        BASELINE_LAUNCH_DBM,
        MEASURED_RAMAN_LOW.0,
        MEASURED_RAMAN_LOW.1,
        fiber.attenuation_db_per_km,
    )
    .expect("positive calibration counts");
    let pair = DetectorPair {
        a: spcm(3.7e-5),
        b: spcm(3.2e-5),
    };
    let reach_db = fiber.attenuation_db_per_km * (CLASSICAL_REACH_KM - REFERENCE_LENGTH_KM);
    Scenario {
        seed: 1,
        launch_dbm: BASELINE_LAUNCH_DBM,
        quantum_filter_ghz: 50.0,
        quantum_input_sop: JonesVector::horizontal(),
        plan: build_channel_plan(2, 100, QUANTUM_WAVELENGTH_NM).expect("static plan"),
        fiber,
        budgets: PerDirection::new(
            LossBudget::baseline(Direction::OneToTwo, NODE_INSERTION_DB),
            LossBudget::baseline(Direction::TwoToOne, NODE_INSERTION_DB),
        ),
        source: PerDirection::new(SourceSpec { mean_photon_number: 1.0 }, SourceSpec { mean_photon_number: 1.0 }),
        detectors: PerDirection::new(pair, pair),
        analyzer: PerDirection::new(
            AnalyzerSpec {
                extinction_ratio_db: PBS_EXTINCTION_DB,
                alignment_error_rad: ALIGNMENT_ERROR_12_RAD,
            },
            AnalyzerSpec {
                extinction_ratio_db: PBS_EXTINCTION_DB,
                alignment_error_rad: ALIGNMENT_ERROR_21_RAD,
            },
        ),
        raman,
        apc: ApcSettings {
            controller: ApcState::default(),
            drift_rate: DRIFT_RATE,
            residual_drift_rate: 0.0,
            controller_jitter_rad: jitter_for_penalty(CONTROL_NOISE_PENALTY).expect("valid penalty"),
            loop_period_s: 0.01,
            log_period_s: 1.0,
        },
        ber: BerCalibration::from_reach(reach_db, crate::analysis::EFEC_BER_THRESHOLD).expect("valid threshold"),
    }
}

impl Default for Scenario {
    fn default() -> Self {
        default_paper_scenario()
    }
}

impl Scenario {
    pub fn channel_config(&self) -> ChannelConfig {
        ChannelConfig::new(self.plan.n_classical() as u32, self.plan.grid_spacing_ghz, self.fiber.fiber_type)
    }

    pub fn noise_scenario(&self) -> NoiseScenario<f64> {
        NoiseScenario {
            launch_dbm: self.launch_dbm,
            filter_bw_ghz: self.quantum_filter_ghz,
            channels: self.channel_config(),
        }
    }

    /// Source-to-detector loss at the configured fiber length, dB.
    pub fn path_loss_db(&self, direction: Direction) -> f64 {
        total_loss_db(self.budgets.get(direction), &self.fiber)
    }

    pub fn raman_rate(&self, direction: Direction, z_km: f64) -> Result<f64> {
        total_background_rate(direction, z_km, &self.noise_scenario(), &self.raman)
    }

    pub fn control_noise_penalty(&self) -> f64 {
        control_noise_penalty(self.apc.controller_jitter_rad)
    }

    /// Mean signal rates on both PBS ports with the polarization perfectly
    /// compensated; controller noise is folded in as a contrast reduction.
    pub fn signal_rates(&self, direction: Direction) -> Result<(f64, f64)> {
        let psi = self.quantum_input_sop.normalize()?;
        let an = self.analyzer.get(direction);
        let (pa, pb) = pbs_split_onto(&psi, &psi.tilted(an.alignment_error_rad), an.extinction_ratio_db);
        let mu = self.source.get(direction).mean_photon_number;
        let loss = self.path_loss_db(direction);
        let pair = self.detectors.get(direction);
        let c1 = click_probability(mu * pa, loss, &pair.a.noiseless(), 0.0)? * pair.a.gate_rate_hz;
        let c2 = click_probability(mu * pb, loss, &pair.b.noiseless(), 0.0)? * pair.b.gate_rate_hz;
        let (sum, diff) = (c1 + c2, (c1 - c2) * self.control_noise_penalty());
        Ok(((sum + diff) / 2.0, (sum - diff) / 2.0))
    }

    /// Count-rate decomposition at the configured fiber length.
    pub fn baseline_inputs(&self, direction: Direction) -> Result<VisibilityInputs<f64>> {
        let (c1, c2) = self.signal_rates(direction)?;
        Ok(VisibilityInputs {
            c1,
            c2,
            dark_rate: self.detectors.get(direction).mean_dark_rate(),
            raman_rate: self.raman_rate(direction, self.fiber.length_km)?,
        })
    }

    pub fn baseline_visibility(&self, direction: Direction) -> Result<f64> {
        visibility_with_noise(&self.baseline_inputs(direction)?)
    }

    pub fn corrected_chain(&self, direction: Direction) -> Result<CorrectedChain<f64>> {
        noise_corrected_chain(&self.baseline_inputs(direction)?, self.control_noise_penalty())
    }

    /// Expected total rate on the aligned detector, 2→1 over 1→2.
    pub fn count_rate_ratio(&self) -> Result<f64> {
        let aligned = |d| -> Result<f64> {
            let v = self.baseline_inputs(d)?;
            Ok(v.c1 + v.dark_rate + v.raman_rate)
        };
        Ok(aligned(Direction::TwoToOne)? / aligned(Direction::OneToTwo)?)
    }

    pub fn distance_model(&self) -> Result<DistanceModel<f64>> {
        Ok(DistanceModel {
            z_ref_km: self.fiber.length_km,
            attenuation_db_per_km: self.fiber.attenuation_db_per_km,
            baselines: PerDirection::new(
                self.baseline_inputs(Direction::OneToTwo)?,
                self.baseline_inputs(Direction::TwoToOne)?,
            ),
            raman: self.raman.clone(),
            noise: self.noise_scenario(),
            ber: self.ber,
        })
    }

    pub fn stabilization_config(&self) -> Result<StabilizationConfig<f64>> {
        let path = |d: Direction| -> Result<QuantumPath<f64>> {
            let pair = self.detectors.get(d);
            let an = self.analyzer.get(d);
            Ok(QuantumPath {
                mean_photon_number: self.source.get(d).mean_photon_number,
                loss_db: self.path_loss_db(d),
                detectors: [pair.a, pair.b],
                background_cps: self.raman_rate(d, self.fiber.length_km)?,
                extinction_ratio_db: an.extinction_ratio_db,
                alignment_error_rad: an.alignment_error_rad,
            })
        };
        Ok(StabilizationConfig {
            apc: self.apc.controller.clone(),
            drift_rate: self.apc.drift_rate,
            residual_drift_rate: self.apc.residual_drift_rate,
            controller_jitter_rad: self.apc.controller_jitter_rad,
            loop_period_s: self.apc.loop_period_s,
            log_period_s: self.apc.log_period_s,
            quantum_input_sop: self.quantum_input_sop.normalize()?,
            paths: PerDirection::new(path(Direction::OneToTwo)?, path(Direction::TwoToOne)?),
        })
    }

    /// Same link carrying `n` classical channels on a `spacing_ghz` grid over
    /// `fiber_type`, seen through a `filter_ghz` quantum filter.
    pub fn with_channels(&self, n: usize, spacing_ghz: u32, fiber_type: FiberType, filter_ghz: f64) -> Result<Self> {
        let mut s = self.clone();
        s.plan = build_channel_plan(n, spacing_ghz, self.plan.quantum_wavelength_nm)?;
        s.fiber.fiber_type = fiber_type;
        s.quantum_filter_ghz = filter_ghz;
        s.checked()
    }

    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        out.extend(self.plan.violations());
        out.extend(self.fiber.violations());
        for d in Direction::BOTH {
            let b = self.budgets.get(d);
            if b.direction != d {
                out.push(format!("budget under `{d}` is labelled `{}`", b.direction));
            }
            out.extend(b.violations());
            out.extend(self.source.get(d).violations().into_iter().map(|v| format!("{d} source: {v}")));
            let pair = self.detectors.get(d);
            for (name, det) in [("a", &pair.a), ("b", &pair.b)] {
                out.extend(det.violations().into_iter().map(|v| format!("{d} detector {name}: {v}")));
            }
            let an = self.analyzer.get(d);
            if !(an.extinction_ratio_db >= 0.0) {
                out.push(format!("{d} PBS extinction ratio {} dB must be >= 0", an.extinction_ratio_db));
            }
            if !an.alignment_error_rad.is_finite() {
                out.push(format!("{d} alignment error {} is not finite", an.alignment_error_rad));
            }
        }
        let dgd = dgd_constraint(self.fiber.mean_dgd_ps, self.plan.grid_spacing_ghz as f64);
        if !dgd.pass {
            out.push(format!(
                "DGD constraint violated: τΔω = {:.3} >= 1 for {} ps at {} GHz",
                dgd.product, self.fiber.mean_dgd_ps, self.plan.grid_spacing_ghz
            ));
        }
        let (lo, hi) = LAUNCH_BAND_DBM;
        if !(lo..=hi).contains(&self.launch_dbm) {
            out.push(format!("launch power {} dBm outside [{lo}, {hi}] dBm", self.launch_dbm));
        }
        if !(self.quantum_filter_ghz > 0.0) {
            out.push(format!("quantum filter {} GHz must be > 0", self.quantum_filter_ghz));
        }
        if (self.quantum_input_sop.norm() - 1.0).abs() > 1e-9 {
            out.push(format!("quantum input SOP has norm {}, expected 1", self.quantum_input_sop.norm()));
        }
        out.extend(self.raman.violations());
        if let Err(e) = self.raman.channel_scaling.factor(self.channel_config()) {
            out.push(e.to_string());
        }
        out.extend(self.apc.controller.violations());
        let a = &self.apc;
        if !(a.drift_rate >= 0.0 && a.residual_drift_rate >= 0.0) {
            out.push(format!("drift rates ({}, {}) must be >= 0", a.drift_rate, a.residual_drift_rate));
        }
        if !(a.controller_jitter_rad >= 0.0) {
            out.push(format!("controller jitter {} must be >= 0", a.controller_jitter_rad));
        }
        if !(a.loop_period_s > 0.0 && a.log_period_s >= a.loop_period_s) {
            out.push(format!(
                "loop period {} s must be > 0 and no longer than the log period {} s",
                a.loop_period_s, a.log_period_s
            ));
        }
        if !(self.ber.q_ref > 0.0) {
            out.push(format!("BER q_ref {} must be > 0", self.ber.q_ref));
        }
        out
    }

    /// Returns `self` if valid, otherwise the violation list as an error.
    pub fn checked(self) -> Result<Self> {
        let v = self.validate();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::Invalid(v))
        }
    }

    /// Functional update from dotted keys (`fiber.length_km`,
    /// `source.1-2.mean_photon_number`, `budgets.2-1.entries.0.loss_db`).
    /// `mu` sets both sources. Values are parsed as TOML literals, with bare
    /// words taken as strings. The result is re-validated.
    pub fn with_overrides<K: AsRef<str>, V: AsRef<str>>(&self, overrides: &[(K, V)]) -> Result<Self> {
        let mut root = toml::Value::try_from(self).map_err(|e| Error::ConfigParse(e.to_string()))?;
        for (k, v) in overrides {
            let (k, v) = (k.as_ref().trim(), v.as_ref().trim());
            let value = parse_literal(v);
            let keys: Vec<String> = match k {
                "mu" => Direction::BOTH
                    .iter()
                    .map(|d| format!("source.{}.mean_photon_number", d.label()))
                    .collect(),
                _ => vec![k.to_owned()],
            };
            for key in keys {
                set_path(&mut root, &key, value.clone())?;
            }
        }
        let s: Scenario = root.try_into().map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
        s.checked()
    }

    /// Parses `key=value` strings for [`Scenario::with_overrides`].
    pub fn with_override_strings<S: AsRef<str>>(&self, pairs: &[S]) -> Result<Self> {
        let parsed = parse_override_pairs(pairs)?;
        self.with_overrides(&parsed.into_iter().collect::<Vec<_>>())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    /// Parses and validates.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(s).map_err(|e| Error::ConfigParse(e.to_string()))?;
        sc.checked()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}

/// Splits `key=value` strings; later duplicates win, order of first appearance kept.
pub fn parse_override_pairs<S: AsRef<str>>(pairs: &[S]) -> Result<Vec<(String, String)>> {
    let mut order: Vec<String> = Vec::new();
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    for p in pairs {
        let p = p.as_ref();
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("override `{p}` is not key=value")))?;
        let k = k.trim().to_owned();
        if !map.contains_key(&k) {
            order.push(k.clone());
        }
        map.insert(k, v.trim().to_owned());
    }
    Ok(order.into_iter().map(|k| {
        let v = map[&k].clone();
        (k, v)
    }).collect())
}

fn parse_literal(v: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("x = {v}"))
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| toml::Value::String(v.to_owned()))
}

fn set_path(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let unknown = || Error::UnknownKey(key.to_owned());
    let mut node = root;
    for part in key.split('.') {
        node = match node {
            toml::Value::Table(t) => t.get_mut(part).ok_or_else(unknown)?,
            toml::Value::Array(a) => {
                let i: usize = part.parse().map_err(|_| unknown())?;
                a.get_mut(i).ok_or_else(unknown)?
            }
            _ => return Err(unknown()),
        };
    }
    let value = match (&*node, value) {
        (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (toml::Value::Table(_) | toml::Value::Array(_), _) => {
            return Err(Error::InvalidArgument(format!("`{key}` is a section, not a value")))
        }
        (old, new) if std::mem::discriminant(old) != std::mem::discriminant(&new) => {
            return Err(Error::InvalidArgument(format!(
                "`{key}` expects a {}, got {}",
                old.type_str(),
                new.type_str()
            )))
        }
        (_, new) => new,
    };
    *node = value;
    Ok(())
}
