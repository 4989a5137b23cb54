//! Visibility, QBER, classical BER and distance limits.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::apc::DriftRecord;
use crate::error::{Error, Result};
use crate::link::{Direction, PerDirection};
use crate::raman::{total_background_rate, NoiseScenario, RamanParams};
use crate::scalar::Real;

/// One-way QKD feasibility threshold on visibility (QBER 11 %).
pub const VISIBILITY_THRESHOLD: f64 = 0.78;
/// BER limit with enhanced forward error correction.
pub const EFEC_BER_THRESHOLD: f64 = 3.9e-3;
/// Distance beyond which a crossing search gives up.
pub const SEARCH_LIMIT_KM: f64 = 500.0;
const VISIBILITY_TOL: f64 = 1e-4;
const DISTANCE_TOL_KM: f64 = 0.01;

/// Signal count rates at the two PBS ports (aligned port first) with the
/// per-detector noise contributions kept separate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityInputs<T> {
    pub c1: T,
    pub c2: T,
    /// Dark counts per detector, counts/s.
    pub dark_rate: T,
    /// Raman counts per detector, counts/s.
    pub raman_rate: T,
}

impl<T: Real> VisibilityInputs<T> {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("c1", self.c1),
            ("c2", self.c2),
            ("dark_rate", self.dark_rate),
            ("raman_rate", self.raman_rate),
        ] {
            if !(v >= T::zero()) {
                out.push(format!("{name} = {v} must be >= 0"));
            }
        }
        if self.c1 < self.c2 {
            out.push(format!("aligned port c1 = {} below orthogonal port c2 = {}", self.c1, self.c2));
        }
        out
    }
}

pub fn visibility<T: Real>(c1: T, c2: T) -> Result<T> {
    let sum = c1 + c2;
    if !(sum > T::zero()) {
        return Err(Error::NoCounts);
    }
    Ok((c1 - c2).abs() / sum)
}

/// `(c1 − c2) / (c1 + c2 + 2·dark + 2·raman)`.
pub fn visibility_with_noise<T: Real>(v: &VisibilityInputs<T>) -> Result<T> {
    let two = T::lit(2.0);
    let denominator = v.c1 + v.c2 + two * v.dark_rate + two * v.raman_rate;
    if !(denominator > T::zero()) {
        return Err(Error::NoCounts);
    }
    Ok((v.c1 - v.c2) / denominator)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectedChain<T> {
    pub raw: T,
    pub minus_raman: T,
    pub minus_dark: T,
    pub minus_control_noise: T,
}

impl<T: Real> CorrectedChain<T> {
    pub fn as_array(&self) -> [T; 4] {
        [self.raw, self.minus_raman, self.minus_dark, self.minus_control_noise]
    }

    pub fn is_monotone(&self) -> bool {
        self.as_array().windows(2).all(|w| w[1] >= w[0])
    }
}

/// Removes Raman, then dark counts, then the controller-noise visibility
/// factor `penalty ∈ (0, 1]`.
pub fn noise_corrected_chain<T: Real>(v: &VisibilityInputs<T>, penalty: T) -> Result<CorrectedChain<T>> {
    if !(penalty > T::zero() && penalty <= T::one()) {
        return Err(Error::InvalidArgument(format!("control-noise penalty {penalty} outside (0, 1]")));
    }
    let raw = visibility_with_noise(v)?;
    let no_raman = VisibilityInputs {
        raman_rate: T::zero(),
        ..*v
    };
    let minus_raman = visibility_with_noise(&no_raman)?;
    let minus_dark = visibility_with_noise(&VisibilityInputs {
        dark_rate: T::zero(),
        ..no_raman
    })?;
    Ok(CorrectedChain {
        raw,
        minus_raman,
        minus_dark,
        minus_control_noise: (minus_dark / penalty).min(T::one()),
    })
}

pub fn qber_from_visibility<T: Real>(v: T) -> Result<T> {
    if !(v >= T::zero() && v <= T::one()) {
        return Err(Error::InvalidArgument(format!("visibility {v} outside [0, 1]")));
    }
    Ok((T::one() - v) / T::lit(2.0))
}

pub fn visibility_from_qber<T: Real>(qber: T) -> Result<T> {
    if !(qber >= T::zero() && qber <= T::lit(0.5)) {
        return Err(Error::InvalidArgument(format!("QBER {qber} outside [0, 0.5]")));
    }
    Ok(T::one() - T::lit(2.0) * qber)
}

/// Gaussian receiver whose Q factor scales linearly with received power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerCalibration<T> {
    /// Q at the reference received power.
    pub q_ref: T,
}

impl<T: Real> BerCalibration<T> {
    /// Q chosen so that `BER(0 dB) = ber_ref`.
    pub fn from_reference_ber(ber_ref: T) -> Result<Self> {
        Ok(Self {
            q_ref: q_for_ber(ber_ref)?,
        })
    }

    /// Q chosen so that the threshold BER is reached after `extra_db` of added attenuation.
    pub fn from_reach(extra_db: T, threshold: T) -> Result<Self> {
        Ok(Self {
            q_ref: q_for_ber(threshold)? * extra_db.db_to_linear(),
        })
    }
}

fn q_for_ber<T: Real>(ber: T) -> Result<T> {
    if !(ber > T::zero() && ber < T::lit(0.5)) {
        return Err(Error::InvalidArgument(format!("BER {ber} outside (0, 0.5)")));
    }
    Ok(T::lit(std::f64::consts::SQRT_2 * erfc_inv(2.0 * ber.as_f64())))
}

/// `½·erfc(Q/√2)` with `Q = q_ref·10^(rel_db/10)`.
pub fn classical_ber<T: Real>(received_power_rel_db: T, cal: &BerCalibration<T>) -> T {
    let q = cal.q_ref * received_power_rel_db.db_to_linear();
    T::lit(0.5 * erfc(q.as_f64() / std::f64::consts::SQRT_2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ClassicalReach<T> {
    Finite(T),
    /// The BER never exceeds the threshold.
    Unbounded,
}

impl<T: Copy> ClassicalReach<T> {
    pub fn km(&self) -> Option<T> {
        match self {
            Self::Finite(z) => Some(*z),
            Self::Unbounded => None,
        }
    }
}

/// Distance at which the classical BER reaches `threshold`, with the receiver
/// calibrated at `z_ref_km` and only fiber attenuation added beyond it.
pub fn classical_max_distance<T: Real>(
    cal: &BerCalibration<T>,
    z_ref_km: T,
    attenuation_db_per_km: T,
    threshold: T,
) -> Result<ClassicalReach<T>> {
    if threshold >= T::lit(0.5) {
        return Ok(ClassicalReach::Unbounded);
    }
    if !(threshold > T::zero()) {
        return Err(Error::InvalidArgument(format!("BER threshold {threshold} must be > 0")));
    }
    if !(attenuation_db_per_km > T::zero()) {
        return Err(Error::InvalidArgument(format!("attenuation {attenuation_db_per_km} dB/km must be > 0")));
    }
    let ber_at = |extra_db: T| classical_ber(-extra_db, cal);
    if ber_at(T::zero()) >= threshold {
        return Err(Error::BelowThresholdAtReference {
            baseline: ber_at(T::zero()).as_f64(),
            threshold: threshold.as_f64(),
        });
    }
    let max_db = attenuation_db_per_km * (T::lit(SEARCH_LIMIT_KM) - z_ref_km);
    let (mut lo, mut hi) = (T::zero(), T::one());
    while ber_at(hi) < threshold {
        lo = hi;
        hi *= T::lit(2.0);
        if hi > max_db {
            if ber_at(max_db) < threshold {
                return Err(Error::ThresholdNeverReached {
                    limit_km: SEARCH_LIMIT_KM,
                });
            }
            hi = max_db;
        }
    }
    let tol_db = attenuation_db_per_km * T::lit(DISTANCE_TOL_KM) * T::lit(0.01);
    while hi - lo > tol_db {
        let mid = (lo + hi) / T::lit(2.0);
        if ber_at(mid) < threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ClassicalReach::Finite(z_ref_km + (lo + hi) / T::lit(2.0) / attenuation_db_per_km))
}

/// Everything needed to extrapolate the reference-point visibilities to other lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceModel<T> {
    pub z_ref_km: T,
    pub attenuation_db_per_km: T,
    /// Signal and dark rates at `z_ref_km`; `raman_rate` is recomputed per distance.
    pub baselines: PerDirection<VisibilityInputs<T>>,
    pub raman: RamanParams<T>,
    pub noise: NoiseScenario<T>,
    pub ber: BerCalibration<T>,
}

impl<T: Real> DistanceModel<T> {
    pub fn raman_rate(&self, direction: Direction, z_km: T) -> Result<T> {
        total_background_rate(direction, z_km, &self.noise, &self.raman)
    }

    pub fn inputs_at(&self, direction: Direction, z_km: T) -> Result<VisibilityInputs<T>> {
        let base = self.baselines.get(direction);
        let scale = (-self.attenuation_db_per_km * (z_km - self.z_ref_km)).db_to_linear();
        Ok(VisibilityInputs {
            c1: base.c1 * scale,
            c2: base.c2 * scale,
            dark_rate: base.dark_rate,
            raman_rate: self.raman_rate(direction, z_km)?,
        })
    }

    pub fn visibility_at(&self, direction: Direction, z_km: T) -> Result<T> {
        visibility_with_noise(&self.inputs_at(direction, z_km)?)
    }

    pub fn ber_at(&self, z_km: T) -> T {
        classical_ber(-self.attenuation_db_per_km * (z_km - self.z_ref_km), &self.ber)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow<T> {
    pub z_km: T,
    pub v_12: T,
    pub v_21: T,
    pub ber: T,
    pub raman_12_cps: T,
    pub raman_21_cps: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult<T> {
    pub rows: Vec<SweepRow<T>>,
}

impl<T: Real> SweepResult<T> {
    pub fn column(&self, direction: Direction) -> Vec<T> {
        self.rows
            .iter()
            .map(|r| match direction {
                Direction::OneToTwo => r.v_12,
                Direction::TwoToOne => r.v_21,
            })
            .collect()
    }
}

/// Evenly spaced grid `start, start + step, …` up to and including `stop`.
pub fn z_grid<T: Real>(start: T, stop: T, step: T) -> Result<Vec<T>> {
    if !(step > T::zero()) {
        return Err(Error::InvalidArgument(format!("step {step} must be > 0")));
    }
    if stop < start {
        return Err(Error::InvalidArgument(format!("grid end {stop} precedes start {start}")));
    }
    let n = ((stop - start) / step + T::lit(1e-9)).floor().to_usize().unwrap_or(0);
    Ok((0..=n).map(|i| start + step * T::lit(i as f64)).collect())
}

pub fn visibility_vs_distance<T: Real>(model: &DistanceModel<T>, z_grid: &[T]) -> Result<SweepResult<T>> {
    if z_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("distance grid must be strictly increasing".into()));
    }
    let rows = z_grid
        .iter()
        .map(|&z| {
            Ok(SweepRow {
                z_km: z,
                v_12: model.visibility_at(Direction::OneToTwo, z)?,
                v_21: model.visibility_at(Direction::TwoToOne, z)?,
                ber: model.ber_at(z),
                raman_12_cps: model.raman_rate(Direction::OneToTwo, z)?,
                raman_21_cps: model.raman_rate(Direction::TwoToOne, z)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { rows })
}

/// Length at which the visibility for `direction` falls to `threshold`.
pub fn max_distance<T: Real>(model: &DistanceModel<T>, direction: Direction, threshold: T) -> Result<T> {
    let v = |z: T| model.visibility_at(direction, z);
    let z0 = model.z_ref_km;
    let v0 = v(z0)?;
    if !(v0 > threshold) {
        return Err(Error::BelowThresholdAtReference {
            baseline: v0.as_f64(),
            threshold: threshold.as_f64(),
        });
    }
    let limit = T::lit(SEARCH_LIMIT_KM);
    let (mut lo, mut step) = (z0, T::one());
    let mut hi = z0 + step;
    while v(hi)? > threshold {
        if hi >= limit {
            return Err(Error::ThresholdNeverReached {
                limit_km: SEARCH_LIMIT_KM,
            });
        }
        lo = hi;
        step *= T::lit(2.0);
        hi = (hi + step).min(limit);
    }
    let (vtol, ztol) = (T::lit(VISIBILITY_TOL), T::lit(DISTANCE_TOL_KM));
    loop {
        let mid = (lo + hi) / T::lit(2.0);
        let vm = v(mid)?;
        if ((vm - threshold).abs() < vtol && hi - lo < ztol) || hi - lo < T::epsilon() * hi {
            return Ok(mid);
        }
        if vm > threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// First length beyond the reference point at which the 1→2 visibility
/// overtakes the 2→1 visibility, scanning in `step_km` increments.
pub fn crossover_distance<T: Real>(model: &DistanceModel<T>, step_km: T) -> Result<Option<T>> {
    let diff = |z: T| -> Result<T> {
        Ok(model.visibility_at(Direction::OneToTwo, z)? - model.visibility_at(Direction::TwoToOne, z)?)
    };
    let mut lo = model.z_ref_km;
    let mut d_lo = diff(lo)?;
    while lo < T::lit(SEARCH_LIMIT_KM) {
        let hi = lo + step_km;
        let d_hi = diff(hi)?;
        if d_lo < T::zero() && d_hi >= T::zero() {
            let (mut a, mut b) = (lo, hi);
            while b - a > T::lit(DISTANCE_TOL_KM) * T::lit(0.1) {
                let m = (a + b) / T::lit(2.0);
                if diff(m)? < T::zero() {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Ok(Some((a + b) / T::lit(2.0)));
        }
        lo = hi;
        d_lo = d_hi;
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram<T> {
    /// `bins + 1` edges.
    pub edges: Vec<T>,
    pub counts: Vec<u64>,
    pub n: usize,
    pub min: T,
    pub max: T,
    pub mean: T,
    pub std: T,
}

impl<T: Real> Histogram<T> {
    pub fn occupied_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

/// Histogram of the per-window visibilities of one direction, binned over
/// the observed range. `std` is the sample standard deviation.
pub fn visibility_histogram<T: Real>(records: &[DriftRecord<T>], direction: Direction, bins: usize) -> Result<Histogram<T>> {
    let values: Vec<T> = records
        .iter()
        .filter(|r| r.direction == direction)
        .map(|r| r.visibility_window)
        .collect();
    histogram(&values, bins)
}

pub fn histogram<T: Real>(values: &[T], bins: usize) -> Result<Histogram<T>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("empty visibility series".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be > 0".into()));
    }
    let n = values.len();
    let min = values.iter().copied().fold(T::infinity(), T::min);
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    let mean = values.iter().copied().sum::<T>() / T::lit(n as f64);
    let std = if n > 1 {
        (values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / T::lit((n - 1) as f64)).sqrt()
    } else {
        T::zero()
    };
    let width = (max - min) / T::lit(bins as f64);
    let edges = (0..=bins).map(|i| min + width * T::lit(i as f64)).collect();
    let mut counts = vec![0u64; bins];
    for &v in values {
        let idx = if width > T::zero() {
            ((v - min) / width).floor().to_usize().unwrap_or(0).min(bins - 1)
        } else {
            0
        };
        counts[idx] += 1;
    }
    Ok(Histogram {
        edges,
        counts,
        n,
        min,
        max,
        mean,
        std,
    })
}

/// Mean and sample standard deviation of the per-window visibilities by direction.
pub fn visibility_summary<T: Real>(records: &[DriftRecord<T>]) -> PerDirection<Option<(T, T)>> {
    PerDirection::new((), ()).map(|d, _| visibility_histogram(records, d, 1).ok().map(|h| (h.mean, h.std)))
}
