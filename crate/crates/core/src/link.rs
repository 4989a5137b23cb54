//! Physical plant: ITU channel plan, fiber, per-direction loss budgets.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// ITU-T G.694.1 anchor frequency, THz.
pub const ITU_ANCHOR_THZ: f64 = 193.1;

pub const MAX_CLASSICAL_CHANNELS: usize = 16;

/// Propagation direction of the quantum signal between the two nodes.
///
/// The classical channels always travel 1→2, so `OneToTwo` is the
/// co-propagating case and `TwoToOne` the counter-propagating one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "1-2")]
    OneToTwo,
    #[serde(rename = "2-1")]
    TwoToOne,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::OneToTwo, Direction::TwoToOne];

    pub fn label(self) -> &'static str {
        match self {
            Direction::OneToTwo => "1-2",
            Direction::TwoToOne => "2-1",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A value held once per propagation direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerDirection<V> {
    #[serde(rename = "1-2")]
    pub one_to_two: V,
    #[serde(rename = "2-1")]
    pub two_to_one: V,
}

impl<V> PerDirection<V> {
    pub fn new(one_to_two: V, two_to_one: V) -> Self {
        Self { one_to_two, two_to_one }
    }

    pub fn get(&self, d: Direction) -> &V {
        match d {
            Direction::OneToTwo => &self.one_to_two,
            Direction::TwoToOne => &self.two_to_one,
        }
    }

    pub fn get_mut(&mut self, d: Direction) -> &mut V {
        match d {
            Direction::OneToTwo => &mut self.one_to_two,
            Direction::TwoToOne => &mut self.two_to_one,
        }
    }

    pub fn map<W>(&self, mut f: impl FnMut(Direction, &V) -> W) -> PerDirection<W> {
        PerDirection::new(
            f(Direction::OneToTwo, &self.one_to_two),
            f(Direction::TwoToOne, &self.two_to_one),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FiberType {
    #[serde(rename = "DS")]
    DispersionShifted,
    #[serde(rename = "standard")]
    Standard,
}

impl FiberType {
    pub fn label(self) -> &'static str {
        match self {
            FiberType::DispersionShifted => "DS",
            FiberType::Standard => "standard",
        }
    }
}

impl fmt::Display for FiberType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for FiberType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "DS" | "ds" => Ok(FiberType::DispersionShifted),
            "standard" | "std" | "G.652" => Ok(FiberType::Standard),
            other => Err(Error::InvalidArgument(format!("unknown fiber type `{other}`"))),
        }
    }
}

pub fn wavelength_nm_to_thz(nm: f64) -> f64 {
    SPEED_OF_LIGHT / nm / 1e3
}

pub fn thz_to_wavelength_nm(thz: f64) -> f64 {
    SPEED_OF_LIGHT / thz / 1e3
}

/// Quantum slot plus the classical DWDM channels sharing the fiber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelPlan {
    pub quantum_wavelength_nm: f64,
    /// Ordered closest-first around the quantum slot.
    pub classical_wavelengths_nm: Vec<f64>,
    pub grid_spacing_ghz: u32,
}

impl ChannelPlan {
    pub fn new(quantum_wavelength_nm: f64, classical_wavelengths_nm: Vec<f64>, grid_spacing_ghz: u32) -> Result<Self> {
        let plan = Self {
            quantum_wavelength_nm,
            classical_wavelengths_nm,
            grid_spacing_ghz,
        };
        let problems = plan.violations();
        if problems.is_empty() {
            Ok(plan)
        } else {
            Err(Error::ChannelPlan(problems.join("; ")))
        }
    }

    pub fn n_classical(&self) -> usize {
        self.classical_wavelengths_nm.len()
    }

    /// Signed frequency offsets of each classical channel from the quantum slot, GHz.
    pub fn classical_offsets_ghz(&self) -> Vec<f64> {
        let fq = wavelength_nm_to_thz(self.quantum_wavelength_nm);
        self.classical_wavelengths_nm
            .iter()
            .map(|&nm| (wavelength_nm_to_thz(nm) - fq) * 1e3)
            .collect()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !matches!(self.grid_spacing_ghz, 100 | 200) {
            out.push(format!("grid spacing {} GHz is not 100 or 200", self.grid_spacing_ghz));
        }
        let n = self.n_classical();
        if !(1..=MAX_CLASSICAL_CHANNELS).contains(&n) {
            out.push(format!("{n} classical channels outside 1..={MAX_CLASSICAL_CHANNELS}"));
        }
        if !(self.quantum_wavelength_nm > 0.0) {
            out.push(format!("quantum wavelength {} nm is not positive", self.quantum_wavelength_nm));
        }
        // Distinct means at least a quarter grid slot apart.
        let guard_ghz = self.grid_spacing_ghz as f64 / 4.0;
        let fq = wavelength_nm_to_thz(self.quantum_wavelength_nm);
        let freqs: Vec<f64> = self.classical_wavelengths_nm.iter().map(|&nm| wavelength_nm_to_thz(nm)).collect();
        for (i, f) in freqs.iter().enumerate() {
            if !(f.is_finite() && *f > 0.0) {
                out.push(format!("classical wavelength {} nm is invalid", self.classical_wavelengths_nm[i]));
                continue;
            }
            if ((f - fq) * 1e3).abs() < guard_ghz {
                out.push(format!(
                    "classical channel {} nm collides with quantum slot {} nm",
                    self.classical_wavelengths_nm[i], self.quantum_wavelength_nm
                ));
            }
            for (j, g) in freqs.iter().enumerate().skip(i + 1) {
                if ((f - g) * 1e3).abs() < guard_ghz {
                    out.push(format!(
                        "classical channels {} nm and {} nm coincide",
                        self.classical_wavelengths_nm[i], self.classical_wavelengths_nm[j]
                    ));
                }
            }
        }
        out
    }
}

/// Places `n` classical channels on the ITU grid around the quantum slot,
/// alternating sides outward, nearest first, higher frequency first on ties.
pub fn build_channel_plan(n: usize, spacing_ghz: u32, quantum_slot_nm: f64) -> Result<ChannelPlan> {
    if !(1..=MAX_CLASSICAL_CHANNELS).contains(&n) {
        return Err(Error::ChannelPlan(format!("{n} classical channels outside 1..={MAX_CLASSICAL_CHANNELS}")));
    }
    if !matches!(spacing_ghz, 100 | 200) {
        return Err(Error::ChannelPlan(format!("grid spacing {spacing_ghz} GHz is not 100 or 200")));
    }
    if !(quantum_slot_nm > 0.0) {
        return Err(Error::ChannelPlan(format!("quantum slot {quantum_slot_nm} nm is invalid")));
    }
    let step = spacing_ghz as f64 / 1e3;
    let fq = wavelength_nm_to_thz(quantum_slot_nm);
    let k0 = ((fq - ITU_ANCHOR_THZ) / step).round() as i64;
    let mut slots: Vec<f64> = (k0 - 2 * n as i64 - 2..=k0 + 2 * n as i64 + 2)
        .map(|k| ITU_ANCHOR_THZ + k as f64 * step)
        .filter(|f| (f - fq).abs() >= step / 2.0)
        .collect();
    slots.sort_by(|a, b| {
        let (da, db) = ((a - fq).abs(), (b - fq).abs());
        da.partial_cmp(&db).unwrap().then(b.partial_cmp(a).unwrap())
    });
    let classical = slots.into_iter().take(n).map(thz_to_wavelength_nm).collect();
    ChannelPlan::new(quantum_slot_nm, classical, spacing_ghz)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberSpec<T> {
    pub length_km: T,
    pub attenuation_db_per_km: T,
    pub mean_dgd_ps: T,
    pub fiber_type: FiberType,
}

impl<T: Real> FiberSpec<T> {
    /// Natural attenuation coefficient, 1/km.
    pub fn alpha_per_km(&self) -> T {
        db_per_km_to_natural(self.attenuation_db_per_km)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.length_km > T::zero()) {
            out.push(format!("fiber length {} km must be > 0", self.length_km));
        }
        if !(self.attenuation_db_per_km > T::zero()) {
            out.push(format!("fiber attenuation {} dB/km must be > 0", self.attenuation_db_per_km));
        }
        if !(self.mean_dgd_ps >= T::zero()) {
            out.push(format!("mean DGD {} ps must be >= 0", self.mean_dgd_ps));
        }
        out
    }
}

pub fn db_per_km_to_natural<T: Real>(db_per_km: T) -> T {
    db_per_km * T::LN_10() / T::lit(10.0)
}

pub fn natural_to_db_per_km<T: Real>(per_km: T) -> T {
    per_km * T::lit(10.0) / T::LN_10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossEntry<T> {
    pub component: String,
    pub loss_db: T,
}

/// Lumped component losses along one direction, excluding the fiber itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBudget<T> {
    pub direction: Direction,
    pub entries: Vec<LossEntry<T>>,
}

impl<T: Real> LossBudget<T> {
    pub fn new(direction: Direction) -> Self {
        Self {
            direction,
            entries: Vec::new(),
        }
    }

    pub fn with(mut self, component: &str, loss_db: T) -> Self {
        self.entries.push(LossEntry {
            component: component.to_owned(),
            loss_db,
        });
        self
    }

    pub fn components_db(&self) -> T {
        self.entries.iter().map(|e| e.loss_db).sum()
    }

    /// Two DWDM filters and one insertion entry per node in both directions;
    /// the LiNbO₃ controller sits in the 1→2 path only, since in the 2→1 path
    /// it precedes the attenuator that sets the launched photon number.
    pub fn baseline(direction: Direction, node_insertion_db: T) -> Self {
        let b = Self::new(direction)
            .with("dwdm_node1", T::lit(3.5))
            .with("dwdm_node2", T::lit(3.5))
            .with("node1_insertion", node_insertion_db)
            .with("node2_insertion", node_insertion_db);
        match direction {
            Direction::OneToTwo => b.with("polarization_controller", T::lit(3.0)),
            Direction::TwoToOne => b,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|e| !(e.loss_db >= T::zero()))
            .map(|e| format!("{} budget entry `{}` has negative loss {} dB", self.direction, e.component, e.loss_db))
            .collect()
    }
}

pub fn total_loss_db<T: Real>(budget: &LossBudget<T>, fiber: &FiberSpec<T>) -> T {
    budget.components_db() + fiber.attenuation_db_per_km * fiber.length_km
}

pub fn dbm_to_mw<T: Real>(dbm: T) -> T {
    dbm.db_to_linear()
}

pub fn mw_to_dbm<T: Real>(mw: T) -> T {
    mw.linear_to_db()
}

pub fn received_power_mw<T: Real>(launch_dbm: T, loss_db: T) -> T {
    dbm_to_mw(launch_dbm - loss_db)
}

/// Outcome of the `τΔω < 1` check for the polarization controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgdCheck<T> {
    /// `τ·2π·Δf`, dimensionless.
    pub product: T,
    pub pass: bool,
}

impl<T: Real> DgdCheck<T> {
    /// Distance to the boundary, positive when passing.
    pub fn margin(&self) -> T {
        T::one() - self.product
    }
}

pub fn dgd_constraint<T: Real>(tau_ps: T, spacing_ghz: T) -> DgdCheck<T> {
    let product = tau_ps * T::lit(1e-12) * T::TAU() * spacing_ghz * T::lit(1e9);
    DgdCheck {
        product,
        pass: product < T::one(),
    }
}
