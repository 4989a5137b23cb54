//! Re-derives the fitted constants frozen in `scenario` and the default
//! channel-scaling table from the measured anchors.
//!
//! cargo run -p qlink-core --release --example fit_defaults

use qlink_core::analysis::{max_distance, VISIBILITY_THRESHOLD};
use qlink_core::link::LossBudget;
use qlink_core::raman::{ChannelConfig, ChannelScaling};
use qlink_core::scenario::{self, default_paper_scenario};
use qlink_core::{Direction, Error, FiberType, Scenario};

const TARGET_V: [(Direction, f64); 2] = [(Direction::OneToTwo, 0.916), (Direction::TwoToOne, 0.931)];
const LIMITS_21: [(f64, f64); 2] = [(scenario::BASELINE_LAUNCH_DBM, 61.0), (scenario::HIGH_LAUNCH_DBM, 55.0)];
const MULTI_TARGETS: [(u32, f64); 2] = [(100, 44.0), (200, 34.0)];

fn bisect(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn golden(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let (c, d) = (b - g * (b - a), a + g * (b - a));
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

fn with_node_loss(x: f64) -> Scenario {
    let mut s = default_paper_scenario();
    for d in Direction::BOTH {
        *s.budgets.get_mut(d) = LossBudget::baseline(d, x);
    }
    for (d, target) in TARGET_V {
        let delta = bisect(0.0, 0.5, |delta| {
            let mut t = s.clone();
            t.analyzer.get_mut(d).alignment_error_rad = delta;
            t.baseline_visibility(d).unwrap() - target
        });
        s.analyzer.get_mut(d).alignment_error_rad = delta;
    }
    s
}

fn limit(s: &Scenario, d: Direction, launch_dbm: f64) -> f64 {
    let mut t = s.clone();
    t.launch_dbm = launch_dbm;
    match max_distance(&t.distance_model().unwrap(), d, VISIBILITY_THRESHOLD) {
        Ok(z) => z,
        Err(Error::BelowThresholdAtReference { .. }) => t.fiber.length_km,
        Err(e) => panic!("{e}"),
    }
}

fn main() {
    let x = golden(1.0, 3.0, |x| {
        let s = with_node_loss(x);
        LIMITS_21
            .iter()
            .map(|&(p, z)| (limit(&s, Direction::TwoToOne, p) - z).powi(2))
            .sum()
    });
    let s = with_node_loss(x);
    println!("node_insertion_db      = {x:.4}");
    for d in Direction::BOTH {
        println!("alignment_error[{d}]   = {:.4}", s.analyzer.get(d).alignment_error_rad);
    }
    for (p, _) in LIMITS_21 {
        println!(
            "limits at {p} dBm: 1-2 {:.2} km, 2-1 {:.2} km",
            limit(&s, Direction::OneToTwo, p),
            limit(&s, Direction::TwoToOne, p)
        );
    }
    for d in Direction::BOTH {
        let (c1, c2) = s.signal_rates(d).unwrap();
        println!("signal[{d}] = ({c1:.2}, {c2:.2}) cps, chain {:?}", s.corrected_chain(d).unwrap().as_array());
    }

    // Noise factor (relative to the calibration setup) that puts the 1→2
    // crossing on each many-channel anchor.
    let calib = ChannelConfig::new(2, 100, FiberType::DispersionShifted);
    let needed: Vec<f64> = MULTI_TARGETS
        .iter()
        .map(|&(spacing, z)| {
            let mut m = s
                .with_channels(16, spacing, FiberType::Standard, scenario::MULTICHANNEL_FILTER_GHZ)
                .unwrap();
            m.launch_dbm = scenario::MULTICHANNEL_LAUNCH_DBM;
            let target = ChannelConfig::new(16, spacing, FiberType::Standard);
            bisect(1e-3, 1e4, |f| {
                let mut table = ChannelScaling::empty();
                table.insert(calib, 1.0);
                table.insert(target, f);
                m.raman.channel_scaling = table;
                limit(&m, Direction::OneToTwo, m.launch_dbm) - z
            })
        })
        .collect();
    let ratio = needed[1] / needed[0];
    let rel = |c: f64, spacing: u32| {
        let t = ChannelScaling::<f64>::from_spectral_model(c, 1.0);
        t.factor(ChannelConfig::new(16, spacing, FiberType::Standard)).unwrap() / t.factor(calib).unwrap()
    };
    let slope = bisect(1e-6, 100.0, |c| rel(c, 200) / rel(c, 100) - ratio);
    let std_ratio = needed[0] / rel(slope, 100);
    println!("required factors       = {needed:?}");
    println!("detuning slope /THz    = {slope:.4}");
    println!("standard fiber ratio   = {std_ratio:.4}");
}
