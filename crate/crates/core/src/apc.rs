//! Automatic polarization control.
//!
//! Two classical reference channels launched with non-orthogonal SOPs are
//! analyzed behind linear polarizers matched to those SOPs. The controller
//! dithers each retardance of a four-plate compensator and climbs
//! `J = I1 + I2`; `J = 2` pins the fiber+controller product to the identity
//! (up to phase), which then holds for every SOP, the quantum one included.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{Direction, PerDirection};
use crate::photon::{click_probability, sample_counts_with, DetectorSpec};
use crate::polarization::{
    alternating_axes, fidelity, pbs_split_onto, polarizer_intensity, unitary_from_waveplates, DriftProcess,
    JonesVector, PolUnitary,
};
use crate::scalar::Real;

pub const CONTROLLER_PLATES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApcState<T> {
    pub controller_retardances: [T; CONTROLLER_PLATES],
    pub ref_state_1: JonesVector<T>,
    pub ref_state_2: JonesVector<T>,
    pub polarizer_1_angle: T,
    pub polarizer_2_angle: T,
    pub dither_amplitude: T,
    pub step_gain: T,
    #[serde(default)]
    pub iteration: u64,
}

impl<T: Real> Default for ApcState<T> {
    /// References linear at 0° and 45° with matching polarizers.
    fn default() -> Self {
        Self {
            controller_retardances: [T::zero(); CONTROLLER_PLATES],
            ref_state_1: JonesVector::linear(T::zero()),
            ref_state_2: JonesVector::linear(T::FRAC_PI_4()),
            polarizer_1_angle: T::zero(),
            polarizer_2_angle: T::FRAC_PI_4(),
            dither_amplitude: T::lit(0.01),
            step_gain: T::lit(0.5),
            iteration: 0,
        }
    }
}

impl<T: Real> ApcState<T> {
    pub fn controller_unitary(&self) -> PolUnitary<T> {
        controller_unitary(&self.controller_retardances)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let overlap = fidelity(&self.ref_state_1, &self.ref_state_2);
        if (overlap - T::lit(0.5)).abs() > T::lit(1e-6) {
            out.push(format!("reference SOP overlap {overlap} is not 0.5 (references must be 45° apart)"));
        }
        for (k, (r, a)) in [
            (&self.ref_state_1, self.polarizer_1_angle),
            (&self.ref_state_2, self.polarizer_2_angle),
        ]
        .into_iter()
        .enumerate()
        {
            let t = polarizer_intensity(r, a);
            if (T::one() - t) > T::lit(1e-6) {
                out.push(format!("polarizer {} transmits only {t} of its reference", k + 1));
            }
        }
        if !(self.dither_amplitude > T::zero()) {
            out.push(format!("dither amplitude {} must be > 0", self.dither_amplitude));
        }
        if !(self.step_gain >= T::zero()) {
            out.push(format!("step gain {} must be >= 0", self.step_gain));
        }
        out
    }
}

pub fn controller_unitary<T: Real>(retardances: &[T; CONTROLLER_PLATES]) -> PolUnitary<T> {
    unitary_from_waveplates(&alternating_axes(CONTROLLER_PLATES), retardances).expect("four plates")
}

fn intensities_with<T: Real>(ctrl: &[T; CONTROLLER_PLATES], fiber_u: &PolUnitary<T>, apc: &ApcState<T>) -> (T, T) {
    let total = controller_unitary(ctrl) * *fiber_u;
    (
        polarizer_intensity(&total.apply(&apc.ref_state_1), apc.polarizer_1_angle),
        polarizer_intensity(&total.apply(&apc.ref_state_2), apc.polarizer_2_angle),
    )
}

/// Polarizer-filtered reference intensities `(I1, I2)` seen by the feedback detectors.
pub fn feedback_intensities<T: Real>(fiber_u: &PolUnitary<T>, apc: &ApcState<T>) -> (T, T) {
    intensities_with(&apc.controller_retardances, fiber_u, apc)
}

/// `J = I1 + I2`, maximal (2) exactly when both references are restored.
pub fn objective<T: Real>(fiber_u: &PolUnitary<T>, apc: &ApcState<T>) -> T {
    let (i1, i2) = feedback_intensities(fiber_u, apc);
    i1 + i2
}

/// One sequential dither-and-step sweep over the controller retardances.
pub fn controller_step<T: Real>(apc: &ApcState<T>, fiber_u: &PolUnitary<T>) -> ApcState<T> {
    let mut next = apc.clone();
    let d = apc.dither_amplitude;
    for i in 0..CONTROLLER_PLATES {
        let mut probe = next.controller_retardances;
        probe[i] = next.controller_retardances[i] + d;
        let (a1, a2) = intensities_with(&probe, fiber_u, apc);
        probe[i] = next.controller_retardances[i] - d;
        let (b1, b2) = intensities_with(&probe, fiber_u, apc);
        let gradient = ((a1 + a2) - (b1 + b2)) / (T::lit(2.0) * d);
        next.controller_retardances[i] += apc.step_gain * gradient;
    }
    next.iteration += 1;
    next
}

/// Runs `controller_step` on a frozen fiber until `J ≥ target` or the budget is
/// spent; returns the final state and the iterations used.
pub fn converge<T: Real>(apc: &ApcState<T>, fiber_u: &PolUnitary<T>, target: T, max_iterations: usize) -> (ApcState<T>, Option<usize>) {
    let mut state = apc.clone();
    for it in 0..=max_iterations {
        if objective(fiber_u, &state) >= target {
            return (state, Some(it));
        }
        if it < max_iterations {
            state = controller_step(&state, fiber_u);
        }
    }
    (state, None)
}

/// Mean visibility factor left by independent Gaussian jitter of standard
/// deviation `jitter_rad` on each controller retardance, averaged over
/// isotropically oriented states.
pub fn control_noise_penalty<T: Real>(jitter_rad: T) -> T {
    let two = T::lit(2.0);
    let per_plate = (T::one() + two * (-(jitter_rad * jitter_rad) / two).exp()) / T::lit(3.0);
    per_plate.powi(CONTROLLER_PLATES as i32)
}

/// Inverse of [`control_noise_penalty`].
pub fn jitter_for_penalty<T: Real>(penalty: T) -> Result<T> {
    if !(penalty > T::lit(1.0 / 81.0) && penalty <= T::one()) {
        return Err(Error::InvalidArgument(format!("penalty {penalty} not reachable")));
    }
    let per_plate = penalty.powf(T::one() / T::lit(CONTROLLER_PLATES as f64));
    let e = (T::lit(3.0) * per_plate - T::one()) / T::lit(2.0);
    Ok((-T::lit(2.0) * e.ln()).sqrt())
}

/// Per-direction quantum channel as seen by the stabilization run.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumPath<T> {
    pub mean_photon_number: T,
    pub loss_db: T,
    /// Aligned port first.
    pub detectors: [DetectorSpec<T>; 2],
    /// Raman background per detector, counts/s.
    pub background_cps: T,
    pub extinction_ratio_db: T,
    /// Angle between the launched SOP and the PBS transmission state.
    pub alignment_error_rad: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilizationConfig<T> {
    pub apc: ApcState<T>,
    pub drift_rate: T,
    /// Drift of uncontrolled pigtails between controller and analyzer, rad/√s.
    pub residual_drift_rate: T,
    pub controller_jitter_rad: T,
    pub loop_period_s: T,
    pub log_period_s: T,
    pub quantum_input_sop: JonesVector<T>,
    pub paths: PerDirection<QuantumPath<T>>,
}

/// One logging window for one direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftRecord<T> {
    pub t_s: T,
    pub direction: Direction,
    pub i1: T,
    pub i2: T,
    pub counts_spcm_a: u64,
    pub counts_spcm_b: u64,
    /// Window-averaged fidelity of the delivered quantum SOP to the launched one.
    pub fidelity: T,
    pub visibility_window: T,
}

#[derive(Debug, Default)]
struct WindowAccumulator<T> {
    rate_a: T,
    rate_b: T,
    fidelity: T,
    samples: usize,
}

/// Simulates drift and (optionally) feedback control for `duration_s`,
/// logging both directions every `log_period_s`. Deterministic per `seed`.
///
/// Controller jitter perturbs the retardances seen by the quantum channel on
/// every loop; the feedback path works on the commanded retardances.
pub fn run_stabilization<T: Real>(
    cfg: &StabilizationConfig<T>,
    duration_s: T,
    control_on: bool,
    seed: u64,
) -> Result<Vec<DriftRecord<T>>>
where
    StandardNormal: Distribution<T>,
{
    if !(duration_s > T::zero()) {
        return Err(Error::InvalidArgument(format!("duration {duration_s} s must be > 0")));
    }
    if !(cfg.loop_period_s > T::zero() && cfg.log_period_s >= cfg.loop_period_s) {
        return Err(Error::InvalidArgument(format!(
            "loop period {} s and log period {} s are inconsistent",
            cfg.loop_period_s, cfg.log_period_s
        )));
    }
    let violations = cfg.apc.violations();
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }

    let mut fiber = DriftProcess::randomized(cfg.drift_rate, seed)?;
    let mut residual = DriftProcess::randomized(cfg.residual_drift_rate, seed.wrapping_add(1))?;
    let mut jitter_rng = ChaCha8Rng::seed_from_u64(seed);
    jitter_rng.set_stream(1);
    let mut count_rng = ChaCha8Rng::seed_from_u64(seed);
    count_rng.set_stream(2);
    let jitter = if cfg.controller_jitter_rad > T::zero() {
        Some(Normal::new(T::zero(), cfg.controller_jitter_rad).expect("finite jitter"))
    } else {
        None
    };

    // The launch SOPs are aligned against a residual element that starts at
    // its initial state, so only its later drift is seen.
    let residual_start = residual.unitary();

    let mut apc = cfg.apc.clone();
    let mut fiber_u = fiber.unitary();
    // Both runs start from a realigned state, as in the experiment.
    apc = converge(&apc, &fiber_u, T::lit(2.0) - T::lit(1e-9), 5000).0;

    let loops_per_log = (cfg.log_period_s / cfg.loop_period_s).round().to_usize().unwrap_or(1).max(1);
    let n_logs = (duration_s / cfg.log_period_s).floor().to_usize().unwrap_or(0).max(1);
    let window_s = cfg.loop_period_s * T::lit(loops_per_log as f64);

    let psi = cfg.quantum_input_sop;
    let analyzers = cfg.paths.map(|_, p| psi.tilted(p.alignment_error_rad));

    let mut records = Vec::with_capacity(2 * n_logs);
    for log in 0..n_logs {
        let mut acc: PerDirection<WindowAccumulator<T>> = PerDirection::new(Default::default(), Default::default());
        for _ in 0..loops_per_log {
            fiber.advance(cfg.loop_period_s);
            fiber_u = fiber.unitary();
            residual.advance(cfg.loop_period_s);
            if control_on {
                apc = controller_step(&apc, &fiber_u);
            }
            let mut applied = apc.controller_retardances;
            if let Some(n) = &jitter {
                for r in &mut applied {
                    *r += n.sample(&mut jitter_rng);
                }
            }
            let res = residual.unitary() * residual_start.adjoint();
            let ctrl = controller_unitary(&applied);
            for d in Direction::BOTH {
                // 1→2: fiber then controller. 2→1: controller then the fiber
                // traversed backwards, whose Jones matrix is the transpose.
                let w = match d {
                    Direction::OneToTwo => res * ctrl * fiber_u,
                    Direction::TwoToOne => res * (ctrl * fiber_u).transpose(),
                };
                let out = w.apply(&psi);
                let path = cfg.paths.get(d);
                let (pa, pb) = pbs_split_onto(&out, analyzers.get(d), path.extinction_ratio_db);
                let ra = click_probability(
                    path.mean_photon_number * pa,
                    path.loss_db,
                    &path.detectors[0],
                    path.background_cps,
                )? * path.detectors[0].gate_rate_hz;
                let rb = click_probability(
                    path.mean_photon_number * pb,
                    path.loss_db,
                    &path.detectors[1],
                    path.background_cps,
                )? * path.detectors[1].gate_rate_hz;
                let a = acc.get_mut(d);
                a.rate_a += ra;
                a.rate_b += rb;
                a.fidelity += fidelity(&psi, &out);
                a.samples += 1;
            }
        }
        let (i1, i2) = feedback_intensities(&fiber_u, &apc);
        let t_s = T::lit((log + 1) as f64) * window_s;
        for d in Direction::BOTH {
            let a = acc.get(d);
            let n = T::lit(a.samples as f64);
            let ca = sample_counts_with((a.rate_a / n).as_f64(), window_s.as_f64(), &mut count_rng);
            let cb = sample_counts_with((a.rate_b / n).as_f64(), window_s.as_f64(), &mut count_rng);
            let visibility = if ca + cb == 0 {
                T::zero()
            } else {
                T::lit(ca.abs_diff(cb) as f64 / (ca + cb) as f64)
            };
            records.push(DriftRecord {
                t_s,
                direction: d,
                i1,
                i2,
                counts_spcm_a: ca,
                counts_spcm_b: cb,
                fidelity: a.fidelity / n,
                visibility_window: visibility,
            });
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polarization::PolUnitary;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI};

    type U = PolUnitary<f64>;

    #[test]
    fn default_state_is_valid() {
        assert!(ApcState::<f64>::default().violations().is_empty());
        assert!(ApcState::<f32>::default().violations().is_empty());
    }

    #[test]
    fn orthogonal_references_flagged() {
        let s = ApcState::<f64> {
            ref_state_2: JonesVector::vertical(),
            polarizer_2_angle: FRAC_PI_2,
            ..Default::default()
        };
        assert!(s.violations().iter().any(|v| v.contains("overlap")));
    }

    #[test]
    fn identity_fiber_full_transmission() {
        let (i1, i2) = feedback_intensities(&U::identity(), &ApcState::default());
        assert_abs_diff_eq!(i1, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(i2, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rotated_fiber_halves_reference_one() {
        // HWP at 22.5° rotates linear SOPs by 45°.
        let fiber = U::waveplate(FRAC_PI_8, PI);
        let (i1, _) = feedback_intensities(&fiber, &ApcState::default());
        assert_abs_diff_eq!(i1, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn intensities_ignore_global_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fiber = U::random(&mut rng);
        let shifted = fiber.scaled(num_complex::Complex::from_polar(1.0, 1.234));
        let s = ApcState::default();
        let (a1, a2) = feedback_intensities(&fiber, &s);
        let (b1, b2) = feedback_intensities(&shifted, &s);
        assert_abs_diff_eq!(a1, b1, epsilon = 1e-12);
        assert_abs_diff_eq!(a2, b2, epsilon = 1e-12);
    }

    #[test]
    fn converged_state_barely_moves() {
        let s = ApcState::<f64>::default();
        let next = controller_step(&s, &U::identity());
        for (a, b) in s.controller_retardances.iter().zip(&next.controller_retardances) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(next.iteration, 1);
    }

    #[test]
    fn zero_gain_is_frozen() {
        let s = ApcState::<f64> {
            step_gain: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let next = controller_step(&s, &U::random(&mut rng));
        assert_eq!(next.controller_retardances, s.controller_retardances);
    }

    #[test]
    fn single_step_improves_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = ApcState::<f64>::default();
        let (mut eligible, mut improved) = (0, 0);
        while eligible < 1000 {
            let fiber = U::random(&mut rng);
            let j0 = objective(&fiber, &s);
            if j0 >= 1.9 {
                continue;
            }
            eligible += 1;
            if objective(&fiber, &controller_step(&s, &fiber)) > j0 {
                improved += 1;
            }
        }
        assert!(improved >= 950, "{improved}/1000");
    }

    #[test]
    fn orthogonal_reference_counterexample() {
        // H/V references are both restored by any retarder aligned with H,
        // yet such a retarder still scrambles diagonal inputs.
        let s = ApcState::<f64> {
            ref_state_2: JonesVector::vertical(),
            polarizer_2_angle: FRAC_PI_2,
            ..Default::default()
        };
        let fiber = U::waveplate(0.0, FRAC_PI_2);
        let (i1, i2) = feedback_intensities(&fiber, &s);
        assert_abs_diff_eq!(i1, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(i2, 1.0, epsilon = 1e-12);
        let probe = JonesVector::linear(FRAC_PI_4);
        let out = (s.controller_unitary() * fiber).apply(&probe);
        assert_abs_diff_eq!(fidelity(&probe, &out), 0.5, epsilon = 1e-12);
        // With 45° references the same fiber is detected.
        assert!(objective(&fiber, &ApcState::default()) < 1.9);
    }

    #[test]
    fn penalty_inverse() {
        for p in [0.5, 0.9, 0.97975, 0.999] {
            assert_abs_diff_eq!(control_noise_penalty(jitter_for_penalty(p).unwrap()), p, epsilon = 1e-12);
        }
        assert_eq!(control_noise_penalty(0.0), 1.0);
        assert!(jitter_for_penalty(0.0).is_err());
    }

    #[test]
    fn penalty_matches_isotropic_monte_carlo() {
        // Oracle: random states through one jittered plate at random orientation.
        let sigma = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let normal = Normal::new(0.0, sigma).unwrap();
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let psi = JonesVector::<f64>::random(&mut rng);
            let frame = U::random(&mut rng);
            let plate = frame.adjoint() * U::waveplate(0.0, normal.sample(&mut rng)) * frame;
            acc += 2.0 * fidelity(&psi, &plate.apply(&psi)) - 1.0;
        }
        let mc = acc / n as f64;
        let analytic = control_noise_penalty(sigma).powf(0.25);
        assert!((mc - analytic).abs() < 3e-3, "{mc} vs {analytic}");
    }
}
