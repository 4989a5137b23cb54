use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use qlink_core::analysis::{
    classical_max_distance, max_distance, visibility_histogram, visibility_vs_distance, z_grid, ClassicalReach,
    EFEC_BER_THRESHOLD, VISIBILITY_THRESHOLD,
};
use qlink_core::apc::{run_stabilization, DriftRecord};
use qlink_core::link::dbm_to_mw;
use qlink_core::raman::{calibrate, s12, s21};
use qlink_core::scenario::{MULTICHANNEL_FILTER_GHZ, MULTICHANNEL_LAUNCH_DBM};
use qlink_core::{Direction, Error as CoreError, FiberType, PerDirection, Scenario};
use serde::{Deserialize, Serialize};

use crate::format::{km, sig6};

/// Bad invocation: exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Files written and lines for the terminal.
#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<String>,
    pub summary: Vec<String>,
}

fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>], footer: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let mut bytes = w.into_inner().context("flushing CSV")?;
    for line in footer {
        bytes.extend_from_slice(format!("# {line}\n").as_bytes());
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn output(out: &Path, name: &str) -> (PathBuf, String) {
    (out.join(name), name.to_owned())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Control {
    On,
    Off,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DriftArgs {
    /// Simulated duration, s.
    #[arg(long, default_value_t = 21600.0)]
    pub duration: f64,
    #[arg(long, value_enum, default_value_t = Control::On)]
    pub control: Control,
}

struct WindowStats {
    mean: f64,
    std: f64,
    shot_noise_std: f64,
    fidelity: f64,
}

fn window_stats(records: &[DriftRecord<f64>], d: Direction) -> Option<WindowStats> {
    let rows: Vec<_> = records.iter().filter(|r| r.direction == d).collect();
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r.visibility_window).sum::<f64>() / n;
    let std = if rows.len() > 1 {
        (rows.iter().map(|r| (r.visibility_window - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    // Binomial spread of the contrast for the observed totals.
    let shot_var = rows
        .iter()
        .map(|r| {
            let total = (r.counts_spcm_a + r.counts_spcm_b).max(1) as f64;
            (1.0 - mean * mean) / total
        })
        .sum::<f64>()
        / n;
    Some(WindowStats {
        mean,
        std,
        shot_noise_std: shot_var.sqrt(),
        fidelity: rows.iter().map(|r| r.fidelity).sum::<f64>() / n,
    })
}

pub fn drift_run(s: &Scenario, a: &DriftArgs, out: &Path) -> Result<Outcome> {
    if !(a.duration > 0.0) {
        return Err(usage(format!("--duration must be > 0 (got {})", a.duration)));
    }
    let cfg = s.stabilization_config()?;
    let records = run_stabilization(&cfg, a.duration, a.control == Control::On, s.seed)?;
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                sig6(r.t_s),
                r.direction.to_string(),
                sig6(r.i1),
                sig6(r.i2),
                r.counts_spcm_a.to_string(),
                r.counts_spcm_b.to_string(),
                sig6(r.fidelity),
                sig6(r.visibility_window),
            ]
        })
        .collect();
    let mut summary = Vec::new();
    for d in Direction::BOTH {
        let Some(w) = window_stats(&records, d) else { continue };
        summary.push(format!(
            "{d}: mean visibility {} ± {} (fidelity {})",
            sig6(w.mean),
            sig6(w.std),
            sig6(w.fidelity)
        ));
        if w.std > 3.0 * w.shot_noise_std {
            summary.push(format!(
                "{d}: visibility non-stationary (spread {} vs shot noise {})",
                sig6(w.std),
                sig6(w.shot_noise_std)
            ));
        }
    }
    let (path, name) = output(out, "drift-run.csv");
    write_table(
        &path,
        &["t_s", "direction", "i1", "i2", "counts_spcm_a", "counts_spcm_b", "fidelity", "visibility_window"],
        &rows,
        &summary,
    )?;
    Ok(Outcome {
        outputs: vec![name],
        summary,
    })
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct HistArgs {
    /// CSV written by drift-run.
    pub input: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
}

#[derive(Deserialize)]
struct DriftRow {
    t_s: f64,
    direction: Direction,
    counts_spcm_a: u64,
    counts_spcm_b: u64,
    fidelity: f64,
    visibility_window: f64,
}

fn read_drift_csv(path: &Path) -> Result<Vec<DriftRecord<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    rdr.deserialize::<DriftRow>()
        .map(|row| {
            let r = row?;
            Ok(DriftRecord {
                t_s: r.t_s,
                direction: r.direction,
                i1: f64::NAN,
                i2: f64::NAN,
                counts_spcm_a: r.counts_spcm_a,
                counts_spcm_b: r.counts_spcm_b,
                fidelity: r.fidelity,
                visibility_window: r.visibility_window,
            })
        })
        .collect()
}

pub fn visibility_hist(a: &HistArgs, out: &Path) -> Result<Outcome> {
    if a.bins == 0 {
        return Err(usage("--bins must be > 0"));
    }
    let records = read_drift_csv(&a.input)?;
    if records.is_empty() {
        bail!("{} contains no visibility samples", a.input.display());
    }
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut means = PerDirection::new(None, None);
    for d in Direction::BOTH {
        let h = match visibility_histogram(&records, d, a.bins) {
            Ok(h) => h,
            Err(CoreError::InvalidArgument(_)) => continue,
            Err(e) => return Err(e.into()),
        };
        for (i, c) in h.counts.iter().enumerate() {
            rows.push(vec![d.to_string(), sig6(h.edges[i]), sig6(h.edges[i + 1]), c.to_string()]);
        }
        summary.push(format!(
            "{d}: n={} min={} mean={} std={} all_above_{}={}",
            h.n,
            sig6(h.min),
            sig6(h.mean),
            sig6(h.std),
            VISIBILITY_THRESHOLD,
            h.min > VISIBILITY_THRESHOLD
        ));
        *means.get_mut(d) = Some(h.mean);
    }
    if let (Some(m12), Some(m21)) = (means.one_to_two, means.two_to_one) {
        let better = if m21 > m12 { Direction::TwoToOne } else { Direction::OneToTwo };
        summary.push(format!("higher mean visibility: {better}"));
    }
    let (path, name) = output(out, "visibility-hist.csv");
    write_table(&path, &["direction", "bin_lo", "bin_hi", "count"], &rows, &summary)?;
    Ok(Outcome {
        outputs: vec![name],
        summary,
    })
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    /// Per-channel launch powers, dBm.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-19.8, -17.8])]
    pub powers: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub zmin: f64,
    #[arg(long, default_value_t = 100.0)]
    pub zmax: f64,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
}

fn sweep_grid(s: &Scenario, zmin: f64, zmax: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(usage(format!("--step must be > 0 (got {step})")));
    }
    let z_ref = s.fiber.length_km;
    if zmax < z_ref || zmin > z_ref {
        bail!("sweep excludes calibration point {z_ref} km");
    }
    Ok(z_grid(zmin, zmax, step)?)
}

/// Crossing distance and its report form.
fn crossing(s: &Scenario, d: Direction) -> Result<(Option<f64>, String)> {
    match max_distance(&s.distance_model()?, d, VISIBILITY_THRESHOLD) {
        Ok(z) => Ok((Some(z), km(z))),
        Err(CoreError::BelowThresholdAtReference { .. }) => Ok((None, "below_reference".into())),
        Err(CoreError::ThresholdNeverReached { .. }) => Ok((None, "none".into())),
        Err(e) => Err(e.into()),
    }
}

pub fn distance_sweep(s: &Scenario, a: &SweepArgs, out: &Path) -> Result<Outcome> {
    let grid = sweep_grid(s, a.zmin, a.zmax, a.step)?;
    if a.powers.is_empty() {
        return Err(usage("--powers needs at least one value"));
    }
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &p in &a.powers {
        let sp = s.with_overrides(&[("launch_dbm", p.to_string())])?;
        let sweep = visibility_vs_distance(&sp.distance_model()?, &grid)?;
        for r in &sweep.rows {
            rows.push(vec![
                sig6(p),
                sig6(r.z_km),
                sig6(r.v_12),
                sig6(r.v_21),
                sig6(r.ber),
                sig6(r.raman_12_cps),
                sig6(r.raman_21_cps),
            ]);
        }
        let limits = PerDirection::new(crossing(&sp, Direction::OneToTwo)?, crossing(&sp, Direction::TwoToOne)?);
        let binding = match (limits.one_to_two.0, limits.two_to_one.0) {
            (Some(a), Some(b)) if a < b => "1-2",
            (Some(a), Some(b)) if b < a => "2-1",
            (Some(_), Some(_)) => "tie",
            _ => "n/a",
        };
        let classical = match classical_max_distance(&sp.ber, sp.fiber.length_km, sp.fiber.attenuation_db_per_km, EFEC_BER_THRESHOLD)? {
            ClassicalReach::Finite(z) => km(z),
            ClassicalReach::Unbounded => "unbounded".into(),
        };
        summary.push(format!(
            "launch_dbm={} max_distance_1-2={} max_distance_2-1={} binding={binding} classical_max_distance={classical}",
            sig6(p),
            limits.one_to_two.1,
            limits.two_to_one.1
        ));
    }
    let (path, name) = output(out, "distance-sweep.csv");
    write_table(
        &path,
        &["launch_dbm", "z_km", "v_12", "v_21", "ber", "raman_12_cps", "raman_21_cps"],
        &rows,
        &summary,
    )?;
    Ok(Outcome {
        outputs: vec![name],
        summary,
    })
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MultiArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2, 4, 8, 16])]
    pub channels: Vec<u32>,
    #[arg(long = "filter-ghz", default_value_t = MULTICHANNEL_FILTER_GHZ)]
    pub filter_ghz: f64,
    #[arg(long, default_value = "standard")]
    pub fiber: FiberType,
    #[arg(long, default_value_t = 100)]
    pub spacing: u32,
    /// Per-channel launch power, dBm.
    #[arg(long = "launch-dbm", allow_hyphen_values = true, default_value_t = MULTICHANNEL_LAUNCH_DBM)]
    pub launch_dbm: f64,
    #[arg(long, default_value_t = 0.0)]
    pub zmin: f64,
    #[arg(long, default_value_t = 100.0)]
    pub zmax: f64,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
}

pub fn multichannel_sweep(s: &Scenario, a: &MultiArgs, out: &Path) -> Result<Outcome> {
    let grid = sweep_grid(s, a.zmin, a.zmax, a.step)?;
    let mut channels = a.channels.clone();
    channels.sort_unstable();
    channels.dedup();
    if channels.is_empty() {
        return Err(usage("--channels needs at least one value"));
    }
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for n in channels {
        let mut sn = s.with_channels(n as usize, a.spacing, a.fiber, a.filter_ghz)?;
        sn.launch_dbm = a.launch_dbm;
        let sn = sn.checked()?;
        let sweep = visibility_vs_distance(&sn.distance_model()?, &grid)?;
        for r in &sweep.rows {
            rows.push(vec![n.to_string(), sig6(r.z_km), sig6(r.v_12), sig6(r.v_21)]);
        }
        summary.push(format!(
            "n={n} spacing_ghz={} fiber={} crossing_1-2={} crossing_2-1={}",
            a.spacing,
            a.fiber,
            crossing(&sn, Direction::OneToTwo)?.1,
            crossing(&sn, Direction::TwoToOne)?.1
        ));
    }
    let (path, name) = output(out, "multichannel-sweep.csv");
    write_table(&path, &["n", "z_km", "v_12", "v_21"], &rows, &summary)?;
    Ok(Outcome {
        outputs: vec![name],
        summary,
    })
}

/// Relative linearity residual above which a calibration is flagged.
pub const LINEARITY_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CalibrateArgs {
    /// Raman-only counts/s as 1-2,2-1 pairs, one pair per power.
    #[arg(long, value_delimiter = ',', required = true)]
    pub measured: Vec<f64>,
    /// Launch powers of the pairs, dBm; the first pair calibrates.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-19.8, -17.8])]
    pub powers: Vec<f64>,
}

pub fn calibrate_cmd(s: &Scenario, a: &CalibrateArgs, out: &Path) -> Result<Outcome> {
    if a.measured.is_empty() || !a.measured.len().is_multiple_of(2) {
        return Err(usage("--measured takes 1-2,2-1 count pairs"));
    }
    let pairs: Vec<(f64, f64)> = a.measured.chunks(2).map(|c| (c[0], c[1])).collect();
    if pairs.len() > a.powers.len() {
        return Err(usage(format!("{} count pairs but only {} powers", pairs.len(), a.powers.len())));
    }
    if let Some(bad) = a.measured.iter().find(|&&m| !(m > 0.0)) {
        bail!("measured counts must be > 0 (got {bad})");
    }
    let z = s.fiber.length_km;
    let mut raman = calibrate(z, a.powers[0], pairs[0].0, pairs[0].1, s.fiber.attenuation_db_per_km)?;
    raman.channel_scaling = s.raman.channel_scaling.clone();
    raman.calibrated_with = s.channel_config();
    raman.filter_bw_ghz = s.quantum_filter_ghz;

    let mut rows = Vec::new();
    let mut residual: Option<f64> = None;
    for (i, (&(m12, m21), &p)) in pairs.iter().zip(&a.powers).enumerate() {
        let mw = dbm_to_mw(p);
        let (p12, p21) = (s12(z, mw, &raman), s21(z, mw, &raman));
        let (e12, e21) = (p12 / m12 - 1.0, p21 / m21 - 1.0);
        if i > 0 {
            residual = Some(residual.unwrap_or(0.0).max(e12.abs()).max(e21.abs()));
        }
        rows.push(vec![sig6(p), sig6(m12), sig6(m21), sig6(p12), sig6(p21), sig6(e12), sig6(e21)]);
    }
    let mut summary = vec![
        format!("beta_12={} beta_21={} counts/(s·mW·km)", sig6(raman.beta_12), sig6(raman.beta_21)),
        match residual {
            Some(r) => format!("linearity_residual={}", sig6(r)),
            None => "linearity_residual=n/a".to_owned(),
        },
    ];
    if residual.is_some_and(|r| r > LINEARITY_TOLERANCE) {
        summary.push(format!("linearity violated: residual exceeds {LINEARITY_TOLERANCE}"));
    }
    let (csv_path, csv_name) = output(out, "calibrate.csv");
    write_table(
        &csv_path,
        &[
            "launch_dbm",
            "measured_12_cps",
            "measured_21_cps",
            "predicted_12_cps",
            "predicted_21_cps",
            "rel_error_12",
            "rel_error_21",
        ],
        &rows,
        &summary,
    )?;
    #[derive(Serialize)]
    struct RamanSection<'a> {
        raman: &'a qlink_core::RamanParams,
    }
    let (toml_path, toml_name) = output(out, "calibrate.toml");
    std::fs::write(&toml_path, toml::to_string(&RamanSection { raman: &raman })?)
        .with_context(|| format!("writing {}", toml_path.display()))?;
    Ok(Outcome {
        outputs: vec![csv_name, toml_name],
        summary,
    })
}
