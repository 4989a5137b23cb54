//! Spontaneous Raman noise reaching the quantum-channel detectors.
//!
//! Co-propagating noise (quantum signal travelling 1→2 with the pumps)
//! follows `P(0)·β·z·e^(−αz)`; counter-propagating noise (2→1) follows
//! `P(0)·β/(2α)·(1 − e^(−2αz))`. Both coefficients are *effective*: they are
//! fitted to at-detector counts and so already contain detector efficiency,
//! gate duty cycle and the reference filter bandwidth.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{db_per_km_to_natural, dbm_to_mw, natural_to_db_per_km, Direction, FiberType};
use crate::scalar::Real;

/// Classical-channel configuration a Raman coefficient or table factor refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub n: u32,
    pub spacing_ghz: u32,
    pub fiber_type: FiberType,
}

impl ChannelConfig {
    pub fn new(n: u32, spacing_ghz: u32, fiber_type: FiberType) -> Self {
        Self { n, spacing_ghz, fiber_type }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow<T> {
    pub n: u32,
    pub spacing_ghz: u32,
    pub fiber_type: FiberType,
    pub factor: T,
}

/// Multiplicative Raman correction per (channel count, spacing, fiber type),
/// relative to a single channel on 100 GHz DS fiber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<ScalingRow<T>>", into = "Vec<ScalingRow<T>>")]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct ChannelScaling<T> {
    table: BTreeMap<ChannelConfig, T>,
}

impl<T: Real> From<Vec<ScalingRow<T>>> for ChannelScaling<T> {
    fn from(rows: Vec<ScalingRow<T>>) -> Self {
        Self {
            table: rows
                .into_iter()
                .map(|r| (ChannelConfig::new(r.n, r.spacing_ghz, r.fiber_type), r.factor))
                .collect(),
        }
    }
}

impl<T: Real> From<ChannelScaling<T>> for Vec<ScalingRow<T>> {
    fn from(s: ChannelScaling<T>) -> Self {
        s.rows()
    }
}

/// Spectral weight growth of Raman scattering with pump detuning, per THz.
pub const DEFAULT_DETUNING_SLOPE_PER_THZ: f64 = 3.0424;

/// Raman noise of G.652 fiber relative to dispersion-shifted fiber.
pub const DEFAULT_STANDARD_FIBER_RATIO: f64 = 0.5580;

const TABLE_CHANNEL_COUNTS: [u32; 5] = [1, 2, 4, 8, 16];

impl<T: Real> ChannelScaling<T> {
    pub fn empty() -> Self {
        Self { table: BTreeMap::new() }
    }

    pub fn insert(&mut self, cfg: ChannelConfig, factor: T) {
        self.table.insert(cfg, factor);
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn rows(&self) -> Vec<ScalingRow<T>> {
        self.table
            .iter()
            .map(|(c, &factor)| ScalingRow {
                n: c.n,
                spacing_ghz: c.spacing_ghz,
                fiber_type: c.fiber_type,
                factor,
            })
            .collect()
    }

    /// Table generated from a linear-in-detuning spectral weight summed over
    /// channels placed alternately outward from the quantum slot, scaled by a
    /// per-fiber ratio and normalized so one channel at 100 GHz on DS fiber is 1.
    pub fn from_spectral_model(detuning_slope_per_thz: f64, standard_fiber_ratio: f64) -> Self {
        let weight = |n: u32, spacing: u32| -> f64 {
            (0..n)
                .map(|i| {
                    let slot = (i / 2 + 1) as f64;
                    1.0 + detuning_slope_per_thz * slot * spacing as f64 / 1e3
                })
                .sum()
        };
        let anchor = weight(1, 100);
        let mut out = Self::empty();
        for fiber in [FiberType::DispersionShifted, FiberType::Standard] {
            let ratio = match fiber {
                FiberType::DispersionShifted => 1.0,
                FiberType::Standard => standard_fiber_ratio,
            };
            for spacing in [100, 200] {
                for n in TABLE_CHANNEL_COUNTS {
                    out.insert(ChannelConfig::new(n, spacing, fiber), T::lit(ratio * weight(n, spacing) / anchor));
                }
            }
        }
        out
    }

    /// Factor for `cfg`; channel counts between tabulated entries of the same
    /// spacing and fiber interpolate linearly in `n`.
    pub fn factor(&self, cfg: ChannelConfig) -> Result<T> {
        if let Some(&f) = self.table.get(&cfg) {
            return Ok(f);
        }
        let same = |c: &&ChannelConfig| c.spacing_ghz == cfg.spacing_ghz && c.fiber_type == cfg.fiber_type;
        let below = self.table.keys().filter(same).filter(|c| c.n < cfg.n).max_by_key(|c| c.n);
        let above = self.table.keys().filter(same).filter(|c| c.n > cfg.n).min_by_key(|c| c.n);
        match (below, above) {
            (Some(lo), Some(hi)) => {
                let (flo, fhi) = (self.table[lo], self.table[hi]);
                let w = T::lit((cfg.n - lo.n) as f64 / (hi.n - lo.n) as f64);
                Ok(flo + (fhi - flo) * w)
            }
            _ => Err(Error::UncalibratedConfiguration {
                n: cfg.n,
                spacing_ghz: cfg.spacing_ghz,
                fiber: cfg.fiber_type.to_string(),
            }),
        }
    }

    /// Reads `n,spacing_ghz,fiber_type,factor` rows with a header line.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut out = Self::empty();
        for row in rdr.deserialize::<ScalingRow<T>>() {
            let row = row?;
            if !(row.factor >= T::zero()) {
                return Err(Error::InvalidArgument(format!(
                    "negative scaling factor {} for n={}",
                    row.factor, row.n
                )));
            }
            out.insert(ChannelConfig::new(row.n, row.spacing_ghz, row.fiber_type), row.factor);
        }
        Ok(out)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()>
    where
        T: Serialize,
    {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl<T: Real> Default for ChannelScaling<T> {
    fn default() -> Self {
        Self::from_spectral_model(DEFAULT_DETUNING_SLOPE_PER_THZ, DEFAULT_STANDARD_FIBER_RATIO)
    }
}

/// Effective Raman coefficients for both propagation directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct RamanParams<T> {
    /// Co-propagating coefficient, counts/(s·mW·km).
    pub beta_12: T,
    /// Counter-propagating coefficient, counts/(s·mW·km).
    pub beta_21: T,
    /// Natural attenuation, 1/km.
    pub alpha_per_km: T,
    /// Filter bandwidth the coefficients were measured with, GHz.
    pub filter_bw_ghz: T,
    /// Classical channel configuration present during calibration.
    pub calibrated_with: ChannelConfig,
    pub channel_scaling: ChannelScaling<T>,
}

impl<T: Real> RamanParams<T> {
    pub fn alpha_db_per_km(&self) -> T {
        natural_to_db_per_km(self.alpha_per_km)
    }

    pub fn beta(&self, direction: Direction) -> T {
        match direction {
            Direction::OneToTwo => self.beta_12,
            Direction::TwoToOne => self.beta_21,
        }
    }

    /// At-detector rate for `direction` before filter/channel corrections.
    pub fn rate(&self, direction: Direction, z_km: T, launch_mw: T) -> T {
        match direction {
            Direction::OneToTwo => s12(z_km, launch_mw, self),
            Direction::TwoToOne => s21(z_km, launch_mw, self),
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.beta_12 >= T::zero() && self.beta_21 >= T::zero()) {
            out.push(format!("Raman coefficients ({}, {}) must be >= 0", self.beta_12, self.beta_21));
        }
        if !(self.alpha_per_km > T::zero()) {
            out.push(format!("Raman alpha {} /km must be > 0", self.alpha_per_km));
        }
        if !(self.filter_bw_ghz > T::zero()) {
            out.push(format!("Raman reference bandwidth {} GHz must be > 0", self.filter_bw_ghz));
        }
        match self.channel_scaling.factor(self.calibrated_with) {
            Ok(f) if f > T::zero() => {}
            Ok(f) => out.push(format!("calibration configuration has non-positive factor {f}")),
            Err(e) => out.push(e.to_string()),
        }
        let anchor = ChannelConfig::new(1, 100, FiberType::DispersionShifted);
        if let Ok(f) = self.channel_scaling.factor(anchor) {
            if (f - T::one()).abs() > T::lit(1e-9) {
                out.push(format!("channel scaling anchor factor(1, 100, DS) = {f}, expected 1"));
            }
        }
        out
    }
}

/// Co-propagating Raman count rate at distance `z_km`.
pub fn s12<T: Real>(z_km: T, launch_mw: T, p: &RamanParams<T>) -> T {
    launch_mw * p.beta_12 * z_km * (-p.alpha_per_km * z_km).exp()
}

/// Counter-propagating Raman count rate at distance `z_km`.
pub fn s21<T: Real>(z_km: T, launch_mw: T, p: &RamanParams<T>) -> T {
    let two_alpha = T::lit(2.0) * p.alpha_per_km;
    launch_mw * p.beta_21 / two_alpha * (T::one() - (-two_alpha * z_km).exp())
}

/// Counter-propagating saturation level `P(0)·β₂₁/(2α)`.
pub fn s21_saturation<T: Real>(launch_mw: T, p: &RamanParams<T>) -> T {
    launch_mw * p.beta_21 / (T::lit(2.0) * p.alpha_per_km)
}

/// Inverts both noise laws at `z_ref_km` from at-detector counts measured
/// with the quantum sources off. `alpha_db_per_km` is the fiber loss in dB/km.
///
/// The result refers to a 50 GHz filter and the two-channel 100 GHz DS setup;
/// override `filter_bw_ghz` / `calibrated_with` when calibrating elsewhere.
pub fn calibrate<T: Real>(
    z_ref_km: T,
    launch_dbm: T,
    measured_12_cps: T,
    measured_21_cps: T,
    alpha_db_per_km: T,
) -> Result<RamanParams<T>> {
    if !(z_ref_km > T::zero()) {
        return Err(Error::DegenerateCalibration(format!("reference distance {z_ref_km} km")));
    }
    if !(measured_12_cps > T::zero() && measured_21_cps > T::zero()) {
        return Err(Error::DegenerateCalibration(format!(
            "measured rates ({measured_12_cps}, {measured_21_cps}) must be > 0"
        )));
    }
    if !(alpha_db_per_km > T::zero()) {
        return Err(Error::DegenerateCalibration(format!("attenuation {alpha_db_per_km} dB/km")));
    }
    let alpha = db_per_km_to_natural(alpha_db_per_km);
    let p0 = dbm_to_mw(launch_dbm);
    let two_alpha = T::lit(2.0) * alpha;
    let beta_12 = measured_12_cps / (p0 * z_ref_km * (-alpha * z_ref_km).exp());
    let beta_21 = measured_21_cps * two_alpha / (p0 * (T::one() - (-two_alpha * z_ref_km).exp()));
    Ok(RamanParams {
        beta_12,
        beta_21,
        alpha_per_km: alpha,
        filter_bw_ghz: T::lit(50.0),
        calibrated_with: ChannelConfig::new(2, 100, FiberType::DispersionShifted),
        channel_scaling: ChannelScaling::default(),
    })
}

/// Rescales a flat-spectrum noise rate from one filter bandwidth to another.
pub fn scale_filter<T: Real>(rate_cps: T, from_bw_ghz: T, to_bw_ghz: T) -> Result<T> {
    if !(from_bw_ghz > T::zero() && to_bw_ghz > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "filter bandwidths ({from_bw_ghz}, {to_bw_ghz}) GHz must be > 0"
        )));
    }
    Ok(rate_cps * to_bw_ghz / from_bw_ghz)
}

pub fn scale_channels<T: Real>(
    rate_cps: T,
    n: u32,
    spacing_ghz: u32,
    fiber_type: FiberType,
    p: &RamanParams<T>,
) -> Result<T> {
    Ok(rate_cps * p.channel_scaling.factor(ChannelConfig::new(n, spacing_ghz, fiber_type))?)
}

/// Everything needed to turn the calibrated laws into a detector background rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseScenario<T> {
    /// Per-channel launch power, dBm.
    pub launch_dbm: T,
    pub filter_bw_ghz: T,
    pub channels: ChannelConfig,
}

/// Raman background `S(z)` at one detector for the given scenario: the
/// calibrated law scaled by filter bandwidth and by the channel factor
/// relative to the calibration configuration.
pub fn total_background_rate<T: Real>(
    direction: Direction,
    z_km: T,
    scenario: &NoiseScenario<T>,
    p: &RamanParams<T>,
) -> Result<T> {
    let base = p.rate(direction, z_km, dbm_to_mw(scenario.launch_dbm));
    let filtered = scale_filter(base, p.filter_bw_ghz, scenario.filter_bw_ghz)?;
    let cfg = scenario.channels;
    let scaled = scale_channels(filtered, cfg.n, cfg.spacing_ghz, cfg.fiber_type, p)?;
    Ok(scaled / p.channel_scaling.factor(p.calibrated_with)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn calibrated() -> RamanParams<f64> {
        calibrate(23.0, -19.8, 1.63, 4.58, 0.2).unwrap()
    }

    fn baseline_noise() -> NoiseScenario<f64> {
        NoiseScenario {
            launch_dbm: -19.8,
            filter_bw_ghz: 50.0,
            channels: ChannelConfig::new(2, 100, FiberType::DispersionShifted),
        }
    }

    #[test]
    fn zero_distance_is_zero() {
        let p = calibrated();
        assert_eq!(s12(0.0, 1.0, &p), 0.0);
        assert_eq!(s21(0.0, 1.0, &p), 0.0);
    }

    #[test]
    fn calibration_coefficients() {
        // Independent scalar inversion of both laws at 23 km.
        let p0 = 10f64.powf(-1.98);
        let a = 0.2 * 10f64.ln() / 10.0;
        let b12 = 1.63 / (p0 * 23.0 * (-a * 23.0).exp());
        let b21 = 4.58 / (p0 * (1.0 - (-2.0 * a * 23.0).exp()) / (2.0 * a));
        let p = calibrated();
        assert_abs_diff_eq!(p.beta_12, b12, epsilon = 1e-9);
        assert_abs_diff_eq!(p.beta_21, b21, epsilon = 1e-9);
        assert_abs_diff_eq!(p.beta_12, 19.52, epsilon = 0.01);
        assert_abs_diff_eq!(p.beta_21, 45.79, epsilon = 0.01);
    }

    #[test]
    fn calibration_round_trip() {
        let p = calibrated();
        let l = dbm_to_mw(-19.8);
        assert!((s12(23.0, l, &p) / 1.63 - 1.0).abs() < 1e-9);
        assert!((s21(23.0, l, &p) / 4.58 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn high_power_prediction() {
        let p = calibrated();
        let h = dbm_to_mw(-17.8);
        let (r12, r21) = (s12(23.0, h, &p), s21(23.0, h, &p));
        assert!((r12 - 2.59).abs() / 2.59 < 0.01, "{r12}");
        assert!((r21 - 7.26).abs() / 7.26 < 0.01, "{r21}");
        assert_abs_diff_eq!(r12, 2.58, epsilon = 0.005);
    }

    #[test]
    fn calibration_is_linear_in_counts() {
        let p = calibrated();
        let q = calibrate(23.0, -19.8, 3.26, 9.16, 0.2).unwrap();
        assert_abs_diff_eq!(q.beta_12, 2.0 * p.beta_12, epsilon = 1e-9);
        assert_abs_diff_eq!(q.beta_21, 2.0 * p.beta_21, epsilon = 1e-9);
    }

    #[test]
    fn calibration_errors() {
        assert!(matches!(calibrate(0.0, -19.8, 1.63, 4.58, 0.2), Err(Error::DegenerateCalibration(_))));
        assert!(calibrate(23.0, -19.8, 0.0, 4.58, 0.2).is_err());
    }

    #[test]
    fn co_propagating_peak_at_inverse_alpha() {
        let p = calibrated();
        let z_peak = 1.0 / p.alpha_per_km;
        assert_abs_diff_eq!(z_peak, 21.71, epsilon = 0.01);
        let h = 1e-3;
        assert!(s12(z_peak, 1.0, &p) > s12(z_peak - h, 1.0, &p));
        assert!(s12(z_peak, 1.0, &p) > s12(z_peak + h, 1.0, &p));
    }

    #[test]
    fn counter_propagating_saturates() {
        let p = calibrated();
        let sat = s21_saturation(1.0, &p);
        assert!((s21(1e4, 1.0, &p) / sat - 1.0).abs() < 1e-12);
        assert!(s21(100.0, 1.0, &p) / sat > 0.99);
    }

    #[test]
    fn filter_scaling() {
        assert_abs_diff_eq!(scale_filter(4.58, 50.0, 1.0).unwrap(), 0.0916, epsilon = 1e-12);
        assert_eq!(scale_filter(4.58, 50.0, 50.0).unwrap(), 4.58);
        assert_abs_diff_eq!(scale_filter(3.0, 50.0, 25.0).unwrap(), 1.5);
        assert!(scale_filter(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn channel_scaling_examples() {
        let p = calibrated();
        assert_eq!(scale_channels(2.5, 1, 100, FiberType::DispersionShifted, &p).unwrap(), 2.5);
        let f100 = p.channel_scaling.factor(ChannelConfig::new(16, 100, FiberType::Standard)).unwrap();
        let f200 = p.channel_scaling.factor(ChannelConfig::new(16, 200, FiberType::Standard)).unwrap();
        assert!(f200 > f100);
        let mut empty = p.clone();
        empty.channel_scaling = ChannelScaling::empty();
        let err = scale_channels(1.0, 16, 100, FiberType::Standard, &empty).unwrap_err();
        assert!(err.to_string().contains("uncalibrated configuration"));
    }

    #[test]
    fn interpolates_between_table_rows() {
        let t = ChannelScaling::<f64>::default();
        let f = |n| t.factor(ChannelConfig::new(n, 100, FiberType::Standard)).unwrap();
        assert_abs_diff_eq!(f(3), 0.5 * (f(2) + f(4)), epsilon = 1e-12);
        assert_abs_diff_eq!(f(12), 0.5 * (f(8) + f(16)), epsilon = 1e-12);
        assert!(t.factor(ChannelConfig::new(17, 100, FiberType::Standard)).is_err());
    }

    #[test]
    fn default_table_shape() {
        let t = ChannelScaling::<f64>::default();
        assert_eq!(t.len(), 20);
        assert_abs_diff_eq!(t.factor(ChannelConfig::new(1, 100, FiberType::DispersionShifted)).unwrap(), 1.0);
        for fiber in [FiberType::DispersionShifted, FiberType::Standard] {
            for spacing in [100, 200] {
                let fs: Vec<f64> = TABLE_CHANNEL_COUNTS
                    .iter()
                    .map(|&n| t.factor(ChannelConfig::new(n, spacing, fiber)).unwrap())
                    .collect();
                assert!(fs.windows(2).all(|w| w[1] > w[0]));
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let t = ChannelScaling::<f64>::default();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("n,spacing_ghz,fiber_type,factor"));
        assert_eq!(ChannelScaling::<f64>::from_csv_reader(&buf[..]).unwrap(), t);
    }

    #[test]
    fn background_rate_baseline() {
        let p = calibrated();
        let s = baseline_noise();
        assert!((total_background_rate(Direction::TwoToOne, 23.0, &s, &p).unwrap() - 4.58).abs() < 1e-9);
        assert!((total_background_rate(Direction::OneToTwo, 23.0, &s, &p).unwrap() - 1.63).abs() < 1e-9);

        let off = NoiseScenario { launch_dbm: f64::NEG_INFINITY, ..s };
        assert_eq!(total_background_rate(Direction::TwoToOne, 23.0, &off, &p).unwrap(), 0.0);

        let full = NoiseScenario { launch_dbm: 0.0, ..s };
        let ratio = total_background_rate(Direction::TwoToOne, 23.0, &full, &p).unwrap() / 4.58;
        assert!((ratio - 95.5).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn params_validate() {
        assert!(calibrated().violations().is_empty());
        let mut p = calibrated();
        p.channel_scaling = ChannelScaling::empty();
        assert!(p.violations().iter().any(|v| v.contains("uncalibrated configuration")));
    }

    proptest! {
        #[test]
        fn linear_in_launch(z in 0.0..300.0f64, p0 in 0.0..2.0f64, k in 0.0..10.0f64) {
            let p = calibrated();
            prop_assert!((s12(z, k * p0, &p) - k * s12(z, p0, &p)).abs() <= 1e-9 * (1.0 + s12(z, k * p0, &p)));
            prop_assert!((s21(z, k * p0, &p) - k * s21(z, p0, &p)).abs() <= 1e-9 * (1.0 + s21(z, k * p0, &p)));
        }

        #[test]
        fn counter_propagating_monotone_bounded(z in 0.0..300.0f64, dz in 0.0..50.0f64) {
            let p = calibrated();
            prop_assert!(s21(z + dz, 1.0, &p) >= s21(z, 1.0, &p));
            prop_assert!(s21(z, 1.0, &p) <= s21_saturation(1.0, &p) * (1.0 + 1e-12));
        }

        #[test]
        fn calibrate_round_trips(z in 1.0..100.0f64, dbm in -30.0..5.0f64, m12 in 0.01..100.0f64, m21 in 0.01..100.0f64, adb in 0.15..0.4f64) {
            let p = calibrate(z, dbm, m12, m21, adb).unwrap();
            let l = dbm_to_mw(dbm);
            prop_assert!((s12(z, l, &p) / m12 - 1.0).abs() < 1e-9);
            prop_assert!((s21(z, l, &p) / m21 - 1.0).abs() < 1e-9);
            prop_assert!((p.alpha_db_per_km() - adb).abs() < 1e-12);
        }
    }
}
