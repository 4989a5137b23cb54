//! Jones-calculus polarization algebra.
//!
//! States are complex 2-vectors, fiber sections and controllers are SU(2)
//! matrices built from cascades of variable waveplates. Global phase is never
//! observable here: every measurement goes through `|⟨a|b⟩|²`.

use std::ops::Mul;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Fully polarized state as a pair of complex field amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JonesVector<T> {
    pub ex: Complex<T>,
    pub ey: Complex<T>,
}

impl<T: Real> JonesVector<T> {
    pub fn new(ex: Complex<T>, ey: Complex<T>) -> Self {
        Self { ex, ey }
    }

    pub fn from_real(ex: T, ey: T) -> Self {
        Self::new(Complex::new(ex, T::zero()), Complex::new(ey, T::zero()))
    }

    pub fn horizontal() -> Self {
        Self::from_real(T::one(), T::zero())
    }

    pub fn vertical() -> Self {
        Self::from_real(T::zero(), T::one())
    }

    /// Linear polarization at `angle` radians from horizontal.
    pub fn linear(angle: T) -> Self {
        Self::from_real(angle.cos(), angle.sin())
    }

    pub fn norm_sqr(&self) -> T {
        self.ex.norm_sqr() + self.ey.norm_sqr()
    }

    pub fn norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    pub fn normalize(&self) -> Result<Self> {
        normalize(*self)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Complex<T> {
        self.ex.conj() * other.ex + self.ey.conj() * other.ey
    }

    /// The state orthogonal to `self` with the same norm.
    pub fn orthogonal(&self) -> Self {
        Self::new(-self.ey.conj(), self.ex.conj())
    }

    /// State at angular distance `angle` from `self` in Hilbert space, so that
    /// `fidelity(self, self.tilted(angle)) = cos²(angle)`.
    pub fn tilted(&self, angle: T) -> Self {
        let perp = self.orthogonal();
        let (s, c) = angle.sin_cos();
        Self::new(self.ex * c + perp.ex * s, self.ey * c + perp.ey * s)
    }

    /// Uniformly distributed pure state (Haar measure).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self
    where
        StandardNormal: Distribution<T>,
    {
        loop {
            let g: [T; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
            let v = Self::new(Complex::new(g[0], g[1]), Complex::new(g[2], g[3]));
            if let Ok(n) = v.normalize() {
                return n;
            }
        }
    }
}

pub fn normalize<T: Real>(v: JonesVector<T>) -> Result<JonesVector<T>> {
    let n = v.norm();
    if !(n > T::zero()) || !n.is_finite() {
        return Err(Error::DegenerateState);
    }
    Ok(JonesVector::new(v.ex / n, v.ey / n))
}

/// `|⟨a|b⟩|²` for normalized inputs.
pub fn fidelity<T: Real>(a: &JonesVector<T>, b: &JonesVector<T>) -> T {
    a.inner(b).norm_sqr()
}

/// Transmitted fraction through an ideal linear polarizer.
pub fn polarizer_intensity<T: Real>(v: &JonesVector<T>, polarizer_angle: T) -> T {
    fidelity(&JonesVector::linear(polarizer_angle), v)
}

/// Leakage fraction `10^(−ER/10)` of a splitter with the given extinction ratio.
pub fn extinction_leakage<T: Real>(extinction_ratio_db: T) -> T {
    if extinction_ratio_db.is_infinite() {
        return T::zero();
    }
    (-extinction_ratio_db).db_to_linear()
}

/// Port fractions of a polarizing beam splitter analyzing onto `analyzer`
/// (port 1) and its orthogonal complement (port 2).
pub fn pbs_split_onto<T: Real>(
    v: &JonesVector<T>,
    analyzer: &JonesVector<T>,
    extinction_ratio_db: T,
) -> (T, T) {
    let eps = extinction_leakage(extinction_ratio_db);
    let p1 = fidelity(analyzer, v).min(T::one());
    let p2 = T::one() - p1;
    let port1 = (T::one() - eps) * p1 + eps * p2;
    (port1, T::one() - port1)
}

/// Port fractions of a PBS whose transmitted port is linear at `basis_angle`.
pub fn pbs_split<T: Real>(v: &JonesVector<T>, basis_angle: T, extinction_ratio_db: T) -> (T, T) {
    pbs_split_onto(v, &JonesVector::linear(basis_angle), extinction_ratio_db)
}

/// 2×2 complex matrix acting on Jones vectors. Row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolUnitary<T> {
    m: [[Complex<T>; 2]; 2],
}

impl<T: Real> PolUnitary<T> {
    pub fn from_matrix(m: [[Complex<T>; 2]; 2]) -> Self {
        Self { m }
    }

    pub fn identity() -> Self {
        let (o, z) = (Complex::new(T::one(), T::zero()), Complex::new(T::zero(), T::zero()));
        Self { m: [[o, z], [z, o]] }
    }

    pub fn matrix(&self) -> &[[Complex<T>; 2]; 2] {
        &self.m
    }

    /// Linear retarder with fast axis at `axis` and retardance `retardance`.
    pub fn waveplate(axis: T, retardance: T) -> Self {
        let two = T::lit(2.0);
        let (s, c) = (retardance / two).sin_cos();
        let (s2, c2) = (two * axis).sin_cos();
        Self {
            m: [
                [Complex::new(c, -s * c2), Complex::new(T::zero(), -s * s2)],
                [Complex::new(T::zero(), -s * s2), Complex::new(c, s * c2)],
            ],
        }
    }

    /// Haar-distributed element of SU(2).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self
    where
        StandardNormal: Distribution<T>,
    {
        let q = loop {
            let g: [T; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
            let n = g.iter().map(|x| *x * *x).sum::<T>().sqrt();
            if n > T::zero() {
                break g.map(|x| x / n);
            }
        };
        Self {
            m: [
                [Complex::new(q[0], q[1]), Complex::new(q[2], q[3])],
                [Complex::new(-q[2], q[3]), Complex::new(q[0], -q[1])],
            ],
        }
    }

    pub fn apply(&self, v: &JonesVector<T>) -> JonesVector<T> {
        JonesVector::new(
            self.m[0][0] * v.ex + self.m[0][1] * v.ey,
            self.m[1][0] * v.ex + self.m[1][1] * v.ey,
        )
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.m;
        Self {
            m: [[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]],
        }
    }

    /// Jones matrix seen by light traversing a reciprocal element backwards.
    pub fn transpose(&self) -> Self {
        let m = &self.m;
        Self {
            m: [[m[0][0], m[1][0]], [m[0][1], m[1][1]]],
        }
    }

    pub fn det(&self) -> Complex<T> {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn scaled(&self, phase: Complex<T>) -> Self {
        Self {
            m: self.m.map(|row| row.map(|x| x * phase)),
        }
    }

    /// Largest entry-wise deviation of `U†U` from the identity.
    pub fn unitarity_error(&self) -> T {
        let p = self.adjoint() * *self;
        let id = Self::identity();
        let mut worst = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((p.m[i][j] - id.m[i][j]).norm());
            }
        }
        worst
    }

    /// `|tr(U)|/2`: equals 1 exactly when `U` is the identity up to global phase.
    pub fn identity_overlap(&self) -> T {
        (self.m[0][0] + self.m[1][1]).norm() / T::lit(2.0)
    }
}

impl<T: Real> Mul for PolUnitary<T> {
    type Output = PolUnitary<T>;

    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (&self.m, &rhs.m);
        let mut m = [[Complex::new(T::zero(), T::zero()); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Self { m }
    }
}

/// Unitary of a waveplate cascade. Light meets `axes[0]` first, so the result
/// is `W_n ⋯ W_1`.
pub fn unitary_from_waveplates<T: Real>(axes: &[T], retardances: &[T]) -> Result<PolUnitary<T>> {
    if axes.len() != retardances.len() {
        return Err(Error::CascadeMismatch {
            axes: axes.len(),
            retardances: retardances.len(),
        });
    }
    if axes.is_empty() {
        return Err(Error::EmptyCascade);
    }
    Ok(axes
        .iter()
        .zip(retardances)
        .fold(PolUnitary::identity(), |acc, (&axis, &ret)| {
            PolUnitary::waveplate(axis, ret) * acc
        }))
}

/// Plate orientations shared by the fiber model and the controller: 0°, 45°, 0°, 45°.
pub fn alternating_axes<T: Real>(n: usize) -> Vec<T> {
    (0..n)
        .map(|i| if i % 2 == 0 { T::zero() } else { T::FRAC_PI_4() })
        .collect()
}

pub fn wrap_angle<T: Real>(x: T) -> T {
    let tau = T::TAU();
    let r = x % tau;
    let r = if r < T::zero() { r + tau } else { r };
    // `r + tau` can round up to exactly tau for tiny negative inputs.
    if r >= tau {
        T::zero()
    } else {
        r
    }
}

/// Birefringence drift as an independent Wiener walk on each retardance of a
/// fixed waveplate cascade.
#[derive(Debug, Clone)]
pub struct DriftProcess<T> {
    rate: T,
    axes: Vec<T>,
    retardances: Vec<T>,
    rng_seed: u64,
    rng: ChaCha8Rng,
}

impl<T: Real> DriftProcess<T>
where
    StandardNormal: Distribution<T>,
{
    /// `rate` is in rad/√s.
    pub fn new(rate: T, axes: Vec<T>, retardances: Vec<T>, rng_seed: u64) -> Result<Self> {
        if !(rate >= T::zero()) {
            return Err(Error::InvalidArgument(format!("drift rate {rate} < 0")));
        }
        unitary_from_waveplates(&axes, &retardances)?;
        Ok(Self {
            rate,
            axes,
            retardances: retardances.into_iter().map(wrap_angle).collect(),
            rng_seed,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        })
    }

    /// Four-plate alternating cascade with retardances drawn uniformly from the seed.
    pub fn randomized(rate: T, rng_seed: u64) -> Result<Self> {
        let mut init = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x5eed_f1be);
        let retardances = (0..4)
            .map(|_| T::lit(init.random::<f64>()) * T::TAU())
            .collect();
        Self::new(rate, alternating_axes(4), retardances, rng_seed)
    }

    pub fn rate(&self) -> T {
        self.rate
    }

    pub fn seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn axes(&self) -> &[T] {
        &self.axes
    }

    pub fn retardances(&self) -> &[T] {
        &self.retardances
    }

    pub fn unitary(&self) -> PolUnitary<T> {
        unitary_from_waveplates(&self.axes, &self.retardances).expect("validated at construction")
    }

    /// Advances by `dt` seconds and returns the new process with its unitary.
    pub fn step(&self, dt: T) -> (Self, PolUnitary<T>) {
        let mut next = self.clone();
        next.advance(dt);
        let u = next.unitary();
        (next, u)
    }

    /// In-place variant of [`DriftProcess::step`] for long simulation loops.
    pub fn advance(&mut self, dt: T) {
        if self.rate == T::zero() {
            return;
        }
        let sigma = self.rate * dt.sqrt();
        let normal = Normal::new(T::zero(), sigma).expect("finite sigma");
        for r in &mut self.retardances {
            *r = wrap_angle(*r + normal.sample(&mut self.rng));
        }
    }
}

/// Functional form of [`DriftProcess::step`].
pub fn drift_step<T: Real>(p: &DriftProcess<T>, dt: T) -> (DriftProcess<T>, PolUnitary<T>)
where
    StandardNormal: Distribution<T>,
{
    p.step(dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI, TAU};

    type J = JonesVector<f64>;
    type U = PolUnitary<f64>;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn normalize_examples() {
        let v = normalize(J::from_real(2.0, 0.0)).unwrap();
        assert_abs_diff_eq!(v.ex.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.ey.norm(), 0.0);

        let v = normalize(J::from_real(1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(v.ex.re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(v.ey.re, FRAC_1_SQRT_2, epsilon = 1e-15);

        let v = normalize(J::new(c(0.0, 3.0), c(4.0, 0.0))).unwrap();
        assert_abs_diff_eq!(v.ex.norm_sqr(), 9.0 / 25.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.norm_sqr(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn normalize_rejects_zero() {
        assert!(matches!(normalize(J::from_real(0.0, 0.0)), Err(Error::DegenerateState)));
        assert!(normalize(J::from_real(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn zero_retardance_cascade_is_identity() {
        let u = unitary_from_waveplates(&[0.1, 0.7, 2.0], &[0.0, 0.0, 0.0]).unwrap();
        let id = U::identity();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!((u.matrix()[i][j] - id.matrix()[i][j]).norm(), 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn half_wave_plate_at_45_swaps_h_and_v() {
        let u = unitary_from_waveplates(&[FRAC_PI_4], &[PI]).unwrap();
        let out = u.apply(&J::horizontal());
        assert_abs_diff_eq!(fidelity(&out, &J::vertical()), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn cascade_length_mismatch() {
        assert!(matches!(
            unitary_from_waveplates(&[0.0, 1.0], &[0.0]),
            Err(Error::CascadeMismatch { axes: 2, retardances: 1 })
        ));
        assert!(matches!(unitary_from_waveplates::<f64>(&[], &[]), Err(Error::EmptyCascade)));
    }

    #[test]
    fn identity_apply_is_noop() {
        let v = normalize(J::new(c(0.3, -0.2), c(0.1, 0.9))).unwrap();
        assert_eq!(U::identity().apply(&v), v);
    }

    #[test]
    fn polarizer_malus() {
        let h = J::horizontal();
        assert_abs_diff_eq!(polarizer_intensity(&h, 0.0), 1.0);
        assert_abs_diff_eq!(polarizer_intensity(&h, FRAC_PI_2), 0.0, epsilon = 1e-30);
        assert_abs_diff_eq!(polarizer_intensity(&h, FRAC_PI_4), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn pbs_examples() {
        let h = J::horizontal();
        let (p1, p2) = pbs_split(&h, 0.0, f64::INFINITY);
        assert_eq!((p1, p2), (1.0, 0.0));

        let (p1, p2) = pbs_split(&h, 0.0, 30.0);
        assert_abs_diff_eq!(p1, 0.999, epsilon = 1e-12);
        assert_abs_diff_eq!(p2, 0.001, epsilon = 1e-12);

        let d = J::linear(FRAC_PI_4);
        for er in [3.0, 20.0, 45.0] {
            let (p1, p2) = pbs_split(&d, 0.0, er);
            assert_abs_diff_eq!(p1, 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(p2, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn fidelity_examples() {
        let v = normalize(J::new(c(0.3, -0.2), c(0.1, 0.9))).unwrap();
        assert_abs_diff_eq!(fidelity(&v, &v), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity(&v, &v.orthogonal()), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity(&J::horizontal(), &J::linear(FRAC_PI_4)), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity(&v, &v.tilted(0.3)), 0.3f64.cos().powi(2), epsilon = 1e-14);
    }

    #[test]
    fn drift_rate_zero_is_frozen() {
        let p = DriftProcess::<f64>::randomized(0.0, 9).unwrap();
        let u0 = p.unitary();
        let (p1, u1) = drift_step(&p, 0.5);
        assert_eq!(u0, u1);
        assert_eq!(p.retardances(), p1.retardances());
    }

    #[test]
    fn drift_is_deterministic_per_seed() {
        let run = |seed| {
            let mut p = DriftProcess::<f64>::randomized(0.05, seed).unwrap();
            (0..200)
                .map(|_| {
                    let (n, u) = p.step(0.01);
                    p = n;
                    u
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn drift_increment_variance_and_mean() {
        // Unwrapped increments: stay away from the wrap boundary by diffing modulo 2π.
        let (rate, dt) = (0.3, 0.04);
        let mut p = DriftProcess::<f64>::new(rate, vec![0.0], vec![1.0], 7).unwrap();
        let n = 100_000;
        let mut incs = Vec::with_capacity(n);
        for _ in 0..n {
            let before = p.retardances()[0];
            p.advance(dt);
            let mut d = p.retardances()[0] - before;
            if d > PI {
                d -= TAU;
            } else if d < -PI {
                d += TAU;
            }
            incs.push(d);
        }
        let mean = incs.iter().sum::<f64>() / n as f64;
        let var = incs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expected = rate * rate * dt;
        assert!((var / expected - 1.0).abs() < 0.05, "variance ratio {}", var / expected);
        let three_sigma = 3.0 * (expected / n as f64).sqrt();
        assert!(mean.abs() < three_sigma, "mean {mean} vs 3σ {three_sigma}");
        assert!(p.retardances().iter().all(|r| (0.0..TAU).contains(r)));
    }

    #[test]
    fn negative_rate_rejected() {
        assert!(DriftProcess::<f64>::new(-1.0, vec![0.0], vec![0.0], 0).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        for x in [-1e-18, -TAU, TAU, 3.0 * TAU + 0.1, -0.1] {
            let w = wrap_angle(x);
            assert!((0.0..TAU).contains(&w), "{x} -> {w}");
        }
    }

    #[test]
    fn works_in_single_precision() {
        let u = unitary_from_waveplates(&alternating_axes::<f32>(4), &[0.3, 1.2, 2.2, 5.0]).unwrap();
        assert!(u.unitarity_error() < 1e-6);
        let v = u.apply(&JonesVector::<f32>::linear(0.4));
        assert!((v.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn norm_preserved_for_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let u = U::random(&mut rng);
            let v = J::random(&mut rng);
            assert!((u.apply(&v).norm() - 1.0).abs() < 1e-10);
            assert!(u.unitarity_error() < 1e-10);
            assert!((u.det().norm() - 1.0).abs() < 1e-10);
        }
    }

    fn angle() -> impl Strategy<Value = f64> {
        -10.0..10.0f64
    }

    fn state() -> impl Strategy<Value = J> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter_map("nonzero", |(a, b, cc, d)| normalize(J::new(c(a, b), c(cc, d))).ok())
    }

    proptest! {
        #[test]
        fn cascade_is_unitary(rets in prop::collection::vec(angle(), 4), axes in prop::collection::vec(angle(), 4)) {
            let u = unitary_from_waveplates(&axes, &rets).unwrap();
            prop_assert!(u.unitarity_error() < 1e-10);
            prop_assert!((u.det().norm() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn complementary_polarizers_sum_to_one(v in state(), theta in angle()) {
            let s = polarizer_intensity(&v, theta) + polarizer_intensity(&v, theta + FRAC_PI_2);
            prop_assert!((s - 1.0).abs() < 1e-10);
        }

        #[test]
        fn pbs_fractions_sum_to_one(v in state(), theta in angle(), er in 0.1..60.0f64) {
            let (a, b) = pbs_split(&v, theta, er);
            prop_assert_eq!(a + b, 1.0);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn global_phase_invisible(v in state(), phi in angle(), theta in angle()) {
            let w = J::new(v.ex * Complex::from_polar(1.0, phi), v.ey * Complex::from_polar(1.0, phi));
            prop_assert!((polarizer_intensity(&v, theta) - polarizer_intensity(&w, theta)).abs() < 1e-12);
        }
    }
}
