//! Weak-coherent source and gated SPCM models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Attenuated laser; `mean_photon_number` photons per detection window at the fiber input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec<T> {
    pub mean_photon_number: T,
}

impl<T: Real> SourceSpec<T> {
    pub fn violations(&self) -> Vec<String> {
        if self.mean_photon_number >= T::zero() {
            vec![]
        } else {
            vec![format!("mean photon number {} < 0", self.mean_photon_number)]
        }
    }
}

/// Gated Geiger-mode single-photon counter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec<T> {
    pub efficiency: T,
    pub dark_prob_per_gate: T,
    pub gate_rate_hz: T,
    pub gate_width_ns: T,
}

impl<T: Real> DetectorSpec<T> {
    pub fn dark_rate_cps(&self) -> T {
        self.dark_prob_per_gate * self.gate_rate_hz
    }

    /// Same detector with dark counts switched off.
    pub fn noiseless(&self) -> Self {
        Self {
            dark_prob_per_gate: T::zero(),
            ..*self
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let unit = |x: T| x >= T::zero() && x <= T::one();
        let mut out = Vec::new();
        if !unit(self.efficiency) {
            out.push(format!("detector efficiency {} outside [0, 1]", self.efficiency));
        }
        if !unit(self.dark_prob_per_gate) {
            out.push(format!("dark probability {} outside [0, 1]", self.dark_prob_per_gate));
        }
        if !(self.gate_rate_hz > T::zero()) {
            out.push(format!("gate rate {} Hz must be > 0", self.gate_rate_hz));
        }
        if !(self.gate_width_ns > T::zero()) {
            out.push(format!("gate width {} ns must be > 0", self.gate_width_ns));
        }
        out
    }
}

/// Probability that a gate fires: a Poissonian signal of mean `mu` attenuated
/// by `loss_db`, plus dark counts and detector-referred background counts.
pub fn click_probability<T: Real>(mu: T, loss_db: T, det: &DetectorSpec<T>, background_rate_cps: T) -> Result<T> {
    let p_bg = background_rate_cps / det.gate_rate_hz;
    if p_bg > T::one() {
        return Err(Error::BackgroundTooHigh(p_bg.as_f64()));
    }
    let detected_mean = mu * (-loss_db).db_to_linear() * det.efficiency;
    let log_no_click = (-det.dark_prob_per_gate).ln_1p() + (-p_bg).ln_1p() - detected_mean;
    Ok(-log_no_click.exp_m1())
}

pub fn expected_count_rate<T: Real>(p_click: T, det: &DetectorSpec<T>) -> T {
    p_click * det.gate_rate_hz
}

/// Poisson-distributed count for a window, drawn from a caller-owned RNG.
pub fn sample_counts_with<R: Rng + ?Sized>(rate_cps: f64, window_s: f64, rng: &mut R) -> u64 {
    let mean = rate_cps * window_s;
    if !(mean > 0.0) {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
}

pub fn sample_counts(rate_cps: f64, window_s: f64, seed: u64) -> u64 {
    sample_counts_with(rate_cps, window_s, &mut ChaCha8Rng::seed_from_u64(seed))
}
