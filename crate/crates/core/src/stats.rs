//! Repeated-trial statistics per probe coordinate.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classify::{FaultClass, FaultObservation, FlipTally};
use crate::geometry::ProbeCoordinate;

/// Two-sided 95% normal quantile used for stored intervals.
pub const Z_95: f64 = 1.96;
/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.575_829_303_548_900_4;

/// Wilson score interval for `successes` out of `trials`, clamped so that
/// `0 <= low <= p_hat <= high <= 1`. Zero trials give `(0, 1)`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let low = (center - half).clamp(0.0, p);
    let high = (center + half).clamp(p, 1.0);
    (low, high)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub none: u64,
    pub control_flow: u64,
    pub data_corruption: u64,
    pub system_level: u64,
}

impl ClassCounts {
    pub fn get(&self, class: FaultClass) -> u64 {
        match class {
            FaultClass::None => self.none,
            FaultClass::ControlFlow => self.control_flow,
            FaultClass::DataCorruption => self.data_corruption,
            FaultClass::SystemLevel => self.system_level,
        }
    }

    pub fn bump(&mut self, class: FaultClass) {
        *match class {
            FaultClass::None => &mut self.none,
            FaultClass::ControlFlow => &mut self.control_flow,
            FaultClass::DataCorruption => &mut self.data_corruption,
            FaultClass::SystemLevel => &mut self.system_level,
        } += 1;
    }

    pub fn add(&mut self, o: &ClassCounts) {
        self.none += o.none;
        self.control_flow += o.control_flow;
        self.data_corruption += o.data_corruption;
        self.system_level += o.system_level;
    }

    pub fn total(&self) -> u64 {
        self.none + self.control_flow + self.data_corruption + self.system_level
    }

    pub fn faults(&self) -> u64 {
        self.total() - self.none
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateStats {
    pub coordinate: ProbeCoordinate,
    pub trials: u64,
    pub counts: ClassCounts,
    pub fault_rate: f64,
    /// 95% Wilson bounds on `fault_rate`.
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub flips: FlipTally,
    /// Sum of per-trial error counts.
    pub error_total: u64,
}

impl CoordinateStats {
    fn from_parts(coordinate: ProbeCoordinate, counts: ClassCounts, flips: FlipTally, error_total: u64) -> Self {
        let trials = counts.total();
        let faults = counts.faults();
        let (wilson_low, wilson_high) = wilson_interval(faults, trials, Z_95);
        CoordinateStats {
            coordinate,
            trials,
            counts,
            fault_rate: if trials == 0 { 0.0 } else { faults as f64 / trials as f64 },
            wilson_low,
            wilson_high,
            flips,
            error_total,
        }
    }

    pub fn faults(&self) -> u64 {
        self.counts.faults()
    }

    /// Wilson interval at an arbitrary normal quantile.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        wilson_interval(self.faults(), self.trials, z)
    }
}

/// Total order on coordinates by `(y, x, z)`.
pub fn coordinate_order(a: &ProbeCoordinate, b: &ProbeCoordinate) -> Ordering {
    a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)).then(a.z.total_cmp(&b.z))
}

#[derive(Debug, Clone, Copy)]
struct CoordKey(ProbeCoordinate);

impl CoordKey {
    fn new(c: ProbeCoordinate) -> Self {
        // Fold -0.0 into 0.0 so both land in one group.
        CoordKey(ProbeCoordinate { x: c.x + 0.0, y: c.y + 0.0, z: c.z + 0.0 })
    }
}

impl PartialEq for CoordKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for CoordKey {}
impl PartialOrd for CoordKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for CoordKey {
    fn cmp(&self, other: &Self) -> Ordering {
        coordinate_order(&self.0, &other.0)
    }
}

#[derive(Debug, Clone, Default)]
struct Partial {
    counts: ClassCounts,
    flips: FlipTally,
    error_total: u64,
}

/// Streaming form of [`aggregate_coordinate_stats`].
#[derive(Debug, Clone, Default)]
pub struct StatsAccumulator {
    cells: BTreeMap<CoordKey, Partial>,
}

impl StatsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, coordinate: ProbeCoordinate, obs: &FaultObservation) {
        let cell = self.cells.entry(CoordKey::new(coordinate)).or_default();
        cell.counts.bump(obs.class);
        cell.flips.add(obs.flips);
        cell.error_total += obs.error_count();
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Stats sorted by `(y, x, z)`.
    pub fn finish(&self) -> Vec<CoordinateStats> {
        self.cells.iter().map(|(k, p)| CoordinateStats::from_parts(k.0, p.counts, p.flips, p.error_total)).collect()
    }
}

pub fn aggregate_coordinate_stats<'a, I>(observations: I) -> Vec<CoordinateStats>
where
    I: IntoIterator<Item = &'a (ProbeCoordinate, FaultObservation)>,
{
    let mut acc = StatsAccumulator::new();
    for (c, o) in observations {
        acc.add(*c, o);
    }
    acc.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dominance {
    ZeroToOne,
    OneToZero,
    Balanced,
}

/// Strict majority of recorded flip directions.
pub fn dominant_flip_direction(stats: &CoordinateStats) -> Dominance {
    match stats.flips.zero_to_one.cmp(&stats.flips.one_to_zero) {
        Ordering::Greater => Dominance::ZeroToOne,
        Ordering::Less => Dominance::OneToZero,
        Ordering::Equal => Dominance::Balanced,
    }
}
