//! Pulse parameter space and sweep enumeration.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_VOLTAGES: [f64; 3] = [150.0, 250.0, 350.0];
pub const DEFAULT_WIDTHS_NS: [f64; 2] = [45.0, 80.0];
pub const DEFAULT_OFFSET_STEP_NS: f64 = 10.0;

/// Coil drive direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Normal,
    Reversed,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Normal => "normal",
            Polarity::Reversed => "reversed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseParameters {
    /// Discharge voltage, volts.
    pub voltage: f64,
    pub width_ns: f64,
    pub polarity: Polarity,
    /// Delay after the trigger marker.
    pub timing_offset_ns: f64,
}

impl PulseParameters {
    pub fn validate(&self) -> Result<()> {
        if !self.voltage.is_finite() || self.voltage <= 0.0 {
            return Err(Error::validation("voltage", format!("{} must be > 0", self.voltage)));
        }
        if !self.width_ns.is_finite() || self.width_ns <= 0.0 {
            return Err(Error::validation("width_ns", format!("{} must be > 0", self.width_ns)));
        }
        if !self.timing_offset_ns.is_finite() || self.timing_offset_ns < 0.0 {
            return Err(Error::validation("timing_offset_ns", format!("{} must be >= 0", self.timing_offset_ns)));
        }
        Ok(())
    }

    /// Short stable hex tag used in artifact file names.
    pub fn tag(&self) -> String {
        use sha2::{Digest, Sha256};
        let canon = format!("v={};w={};p={};o={}", self.voltage, self.width_ns, self.polarity, self.timing_offset_ns);
        hex::encode(&Sha256::digest(canon.as_bytes())[..4])
    }
}

fn default_voltages() -> Vec<f64> {
    DEFAULT_VOLTAGES.to_vec()
}
fn default_widths() -> Vec<f64> {
    DEFAULT_WIDTHS_NS.to_vec()
}
fn default_polarities() -> Vec<Polarity> {
    vec![Polarity::Normal]
}
fn default_offsets() -> Vec<f64> {
    (0..6).map(|k| k as f64 * DEFAULT_OFFSET_STEP_NS).collect()
}
fn default_trials() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    #[serde(default = "default_voltages")]
    pub voltages: Vec<f64>,
    #[serde(default = "default_widths")]
    pub widths_ns: Vec<f64>,
    #[serde(default = "default_polarities")]
    pub polarities: Vec<Polarity>,
    #[serde(default = "default_offsets")]
    pub offsets_ns: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials_per_point: u32,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            voltages: default_voltages(),
            widths_ns: default_widths(),
            polarities: default_polarities(),
            offsets_ns: default_offsets(),
            trials_per_point: default_trials(),
        }
    }
}

impl SweepSpec {
    /// One value per axis.
    pub fn single(p: PulseParameters, trials_per_point: u32) -> Self {
        SweepSpec {
            voltages: vec![p.voltage],
            widths_ns: vec![p.width_ns],
            polarities: vec![p.polarity],
            offsets_ns: vec![p.timing_offset_ns],
            trials_per_point,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, len) in [
            ("voltages", self.voltages.len()),
            ("widths_ns", self.widths_ns.len()),
            ("polarities", self.polarities.len()),
            ("offsets_ns", self.offsets_ns.len()),
        ] {
            if len == 0 {
                return Err(Error::validation(name, "axis list is empty"));
            }
        }
        if self.trials_per_point == 0 {
            return Err(Error::validation("trials_per_point", "must be >= 1"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.voltages.len() * self.widths_ns.len() * self.polarities.len() * self.offsets_ns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Limits spanning each axis' own min and max.
    pub fn envelope(&self) -> ParameterLimits {
        fn span(v: &[f64]) -> Bounds {
            Bounds {
                min: v.iter().copied().fold(f64::INFINITY, f64::min),
                max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        }
        ParameterLimits {
            voltage: span(&self.voltages),
            width_ns: span(&self.widths_ns),
            timing_offset_ns: span(&self.offsets_ns),
        }
    }
}

/// Cartesian product of the sweep axes: voltage outermost, then width,
/// polarity and offset.
pub fn enumerate_sweep(spec: &SweepSpec) -> Result<Vec<PulseParameters>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.len());
    for &voltage in &spec.voltages {
        for &width_ns in &spec.widths_ns {
            for &polarity in &spec.polarities {
                for &timing_offset_ns in &spec.offsets_ns {
                    let p = PulseParameters { voltage, width_ns, polarity, timing_offset_ns };
                    p.validate()?;
                    out.push(p);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub const fn new(min: f64, max: f64) -> Self {
        Bounds { min, max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterLimits {
    pub voltage: Bounds,
    pub width_ns: Bounds,
    pub timing_offset_ns: Bounds,
}

impl Default for ParameterLimits {
    fn default() -> Self {
        ParameterLimits {
            voltage: Bounds::new(50.0, 500.0),
            width_ns: Bounds::new(1.0, 1000.0),
            timing_offset_ns: Bounds::new(0.0, 1.0e6),
        }
    }
}

impl ParameterLimits {
    pub fn validate(&self) -> Result<()> {
        for (name, b) in self.fields() {
            if b.min.is_nan() || b.max.is_nan() || b.min > b.max {
                return Err(Error::validation(
                    format!("limits.{name}"),
                    format!("min {} exceeds max {}", b.min, b.max),
                ));
            }
        }
        Ok(())
    }

    fn fields(&self) -> [(&'static str, Bounds); 3] {
        [("voltage", self.voltage), ("width_ns", self.width_ns), ("timing_offset_ns", self.timing_offset_ns)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: &'static str,
    pub value: f64,
    pub kind: BoundKind,
    pub bound: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.kind {
            BoundKind::Min => "below minimum",
            BoundKind::Max => "above maximum",
        };
        write!(f, "{} = {} {} {}", self.field, self.value, op, self.bound)
    }
}

/// Every bound `p` violates, in field order voltage, width, offset.
pub fn validate_parameters(p: &PulseParameters, limits: &ParameterLimits) -> Vec<Violation> {
    let values = [p.voltage, p.width_ns, p.timing_offset_ns];
    let mut out = Vec::new();
    for ((field, b), value) in limits.fields().into_iter().zip(values) {
        if value < b.min {
            out.push(Violation { field, value, kind: BoundKind::Min, bound: b.min });
        } else if value > b.max {
            out.push(Violation { field, value, kind: BoundKind::Max, bound: b.max });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn spec(v: &[f64], w: &[f64], p: &[Polarity], o: &[f64]) -> SweepSpec {
        SweepSpec {
            voltages: v.to_vec(),
            widths_ns: w.to_vec(),
            polarities: p.to_vec(),
            offsets_ns: o.to_vec(),
            trials_per_point: 1,
        }
    }

    #[test]
    fn singleton_product() {
        let out = enumerate_sweep(&spec(&[200.0], &[50.0], &[Polarity::Normal], &[0.0])).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn voltage_outermost_order() {
        let out =
            enumerate_sweep(&spec(&[200.0, 300.0], &[50.0], &[Polarity::Normal, Polarity::Reversed], &[0.0])).unwrap();
        let got: Vec<_> = out.iter().map(|p| (p.voltage, p.polarity)).collect();
        assert_eq!(
            got,
            vec![
                (200.0, Polarity::Normal),
                (200.0, Polarity::Reversed),
                (300.0, Polarity::Normal),
                (300.0, Polarity::Reversed),
            ]
        );
    }

    #[test]
    fn product_matches_brute_force() {
        let s = spec(
            &[100.0, 200.0, 300.0],
            &[40.0, 80.0],
            &[Polarity::Normal, Polarity::Reversed],
            &[0.0, 10.0, 20.0, 30.0],
        );
        let out = enumerate_sweep(&s).unwrap();
        assert_eq!(out.len(), 48);

        let mut expected = Vec::new();
        for v in &s.voltages {
            for w in &s.widths_ns {
                for p in &s.polarities {
                    for o in &s.offsets_ns {
                        expected.push((v.to_bits(), w.to_bits(), *p, o.to_bits()));
                    }
                }
            }
        }
        let got: Vec<_> = out
            .iter()
            .map(|p| (p.voltage.to_bits(), p.width_ns.to_bits(), p.polarity, p.timing_offset_ns.to_bits()))
            .collect();
        assert_eq!(got, expected);
        let distinct: HashSet<_> = got.iter().collect();
        assert_eq!(distinct.len(), 48);
    }

    #[test]
    fn empty_axis_rejected() {
        let s = spec(&[200.0], &[], &[Polarity::Normal], &[0.0]);
        assert!(matches!(enumerate_sweep(&s), Err(Error::Validation { field, .. }) if field == "widths_ns"));
        let mut s = spec(&[200.0], &[50.0], &[Polarity::Normal], &[0.0]);
        s.trials_per_point = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn limit_checks() {
        let limits = ParameterLimits {
            voltage: Bounds::new(50.0, 500.0),
            width_ns: Bounds::new(10.0, 100.0),
            timing_offset_ns: Bounds::new(0.0, 1000.0),
        };
        let ok = PulseParameters { voltage: 200.0, width_ns: 50.0, polarity: Polarity::Normal, timing_offset_ns: 0.0 };
        assert!(validate_parameters(&ok, &limits).is_empty());

        let hot = PulseParameters { voltage: 600.0, ..ok };
        let v = validate_parameters(&hot, &limits);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "voltage");
        assert_eq!(v[0].kind, BoundKind::Max);
        assert_eq!(v[0].bound, 500.0);

        let two = PulseParameters { voltage: 10.0, timing_offset_ns: 2000.0, ..ok };
        let v = validate_parameters(&two, &limits);
        let fields: Vec<_> = v.iter().map(|v| v.field).collect();
        assert_eq!(fields, ["voltage", "timing_offset_ns"]);
    }

    proptest! {
        #[test]
        fn sweep_is_deterministic_and_within_envelope(
            v in prop::collection::vec(1.0f64..600.0, 1..4),
            w in prop::collection::vec(1.0f64..200.0, 1..3),
            o in prop::collection::vec(0.0f64..500.0, 1..5),
            both in any::<bool>(),
        ) {
            let pols = if both { vec![Polarity::Normal, Polarity::Reversed] } else { vec![Polarity::Reversed] };
            let s = spec(&v, &w, &pols, &o);
            let a = enumerate_sweep(&s).unwrap();
            let b = enumerate_sweep(&s).unwrap();
            prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
            prop_assert_eq!(a.len(), s.len());
            let env = s.envelope();
            for p in &a {
                prop_assert!(validate_parameters(p, &env).is_empty());
            }
        }
    }
}
