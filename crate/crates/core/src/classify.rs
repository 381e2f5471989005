//! Three-tier fault classification of parsed target sessions.
//!
//! Evidence from different tiers can co-occur in one session. The verdict
//! follows a fixed priority: system-level over data corruption over control
//! flow. Within a tier the detail is also fixed by priority (listed on
//! [`FaultDetail`]), so the verdict never depends on line order.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::protocol::{parse_uint, FlipDirection, SessionParse, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultClass {
    None,
    ControlFlow,
    DataCorruption,
    SystemLevel,
}

impl FaultClass {
    pub const ALL: [FaultClass; 4] =
        [FaultClass::None, FaultClass::ControlFlow, FaultClass::DataCorruption, FaultClass::SystemLevel];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultClass::None => "none",
            FaultClass::ControlFlow => "control_flow",
            FaultClass::DataCorruption => "data_corruption",
            FaultClass::SystemLevel => "system_level",
        }
    }

    pub fn is_fault(self) -> bool {
        self != FaultClass::None
    }
}

impl fmt::Display for FaultClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sub-type of a verdict. Within-tier priority is declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultDetail {
    Nominal,
    // control flow
    Skip,
    EarlyExit,
    LoopCountMismatch,
    // data corruption
    BitFlips(u64),
    CrcMismatch,
    RegisterDeviation,
    // system level
    Hang,
    Reset,
    Halt,
    MalformedOutput,
}

impl FaultDetail {
    pub fn class(self) -> FaultClass {
        use FaultDetail::*;
        match self {
            Nominal => FaultClass::None,
            Skip | EarlyExit | LoopCountMismatch => FaultClass::ControlFlow,
            BitFlips(_) | CrcMismatch | RegisterDeviation => FaultClass::DataCorruption,
            Hang | Reset | Halt | MalformedOutput => FaultClass::SystemLevel,
        }
    }
}

impl fmt::Display for FaultDetail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use FaultDetail::*;
        match self {
            Nominal => f.write_str("nominal"),
            Skip => f.write_str("skip"),
            EarlyExit => f.write_str("early_exit"),
            LoopCountMismatch => f.write_str("loop_count_mismatch"),
            BitFlips(n) => write!(f, "bit_flips({n})"),
            CrcMismatch => f.write_str("crc_mismatch"),
            RegisterDeviation => f.write_str("register_deviation"),
            Hang => f.write_str("hang"),
            Reset => f.write_str("reset"),
            Halt => f.write_str("halt"),
            MalformedOutput => f.write_str("malformed_output"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipTally {
    pub zero_to_one: u64,
    pub one_to_zero: u64,
}

impl FlipTally {
    pub fn add(&mut self, other: FlipTally) {
        self.zero_to_one += other.zero_to_one;
        self.one_to_zero += other.one_to_zero;
    }

    pub fn total(&self) -> u64 {
        self.zero_to_one + self.one_to_zero
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultObservation {
    pub class: FaultClass,
    pub detail: FaultDetail,
    /// Raw line indices supporting the verdict.
    pub evidence: Vec<usize>,
    /// Number of `BITFLIP` lines in the session, whatever the verdict.
    pub bit_flips: u64,
    pub flips: FlipTally,
}

impl FaultObservation {
    pub fn nominal() -> Self {
        FaultObservation {
            class: FaultClass::None,
            detail: FaultDetail::Nominal,
            evidence: Vec::new(),
            bit_flips: 0,
            flips: FlipTally::default(),
        }
    }

    /// Per-trial error count: `BITFLIP` lines when present, else 1 for any
    /// fault and 0 for a clean run.
    pub fn error_count(&self) -> u64 {
        if self.bit_flips > 0 {
            self.bit_flips
        } else {
            u64::from(self.class.is_fault())
        }
    }
}

pub type RegisterSnapshot = Vec<(String, u64)>;

/// Fault-free output profile of a target.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NominalProfile {
    /// Expected number of `MARK` lines.
    pub markers: usize,
    /// Expected `REGS` snapshots in order. Empty means snapshots are not checked.
    #[serde(default)]
    pub snapshots: Vec<RegisterSnapshot>,
}

pub fn classify_session(session: &SessionParse, nominal: &NominalProfile) -> FaultObservation {
    let mut flips = FlipTally::default();
    let mut bit_flips = 0u64;

    let mut system = Vec::new();
    let (mut resets, mut halts) = (false, false);
    let mut data = Vec::new();
    let (mut crc, mut regs_dev) = (false, false);
    let mut control = Vec::new();
    let (mut skip, mut exit) = (false, false);
    let mut marks = Vec::new();
    let mut snapshot = 0usize;

    for parsed in &session.lines {
        let line = &parsed.line;
        let idx = parsed.index;
        match line.token {
            Token::Reset => {
                resets = true;
                system.push(idx);
            }
            Token::Halt => {
                halts = true;
                system.push(idx);
            }
            Token::BitFlip => {
                bit_flips += 1;
                match line.attr("dir").and_then(FlipDirection::from_wire) {
                    Some(FlipDirection::ZeroToOne) => flips.zero_to_one += 1,
                    Some(FlipDirection::OneToZero) => flips.one_to_zero += 1,
                    None => {}
                }
                data.push(idx);
            }
            Token::CrcErr => {
                crc = true;
                data.push(idx);
            }
            Token::Regs => {
                if !nominal.snapshots.is_empty() {
                    let deviates = match nominal.snapshots.get(snapshot) {
                        Some(expected) => !registers_match(&line.attributes, expected),
                        None => true,
                    };
                    if deviates {
                        regs_dev = true;
                        data.push(idx);
                    }
                }
                snapshot += 1;
            }
            Token::CfSkip => {
                skip = true;
                control.push(idx);
            }
            Token::CfExit => {
                exit = true;
                control.push(idx);
            }
            Token::Mark => marks.push(idx),
            Token::Boot | Token::Ok => {}
        }
    }
    system.extend(session.malformed.iter().map(|m| m.index));
    system.sort_unstable();

    let silent = session.lines.is_empty() && session.malformed.is_empty();
    let verdict = |detail: FaultDetail, evidence: Vec<usize>| FaultObservation {
        class: detail.class(),
        detail,
        evidence,
        bit_flips,
        flips,
    };

    if session.hang || silent {
        return verdict(FaultDetail::Hang, system);
    }
    if !system.is_empty() {
        let detail = if resets {
            FaultDetail::Reset
        } else if halts {
            FaultDetail::Halt
        } else {
            FaultDetail::MalformedOutput
        };
        return verdict(detail, system);
    }
    if !data.is_empty() {
        let detail = if bit_flips > 0 {
            FaultDetail::BitFlips(bit_flips)
        } else if crc {
            FaultDetail::CrcMismatch
        } else {
            debug_assert!(regs_dev);
            FaultDetail::RegisterDeviation
        };
        return verdict(detail, data);
    }
    let count_mismatch = marks.len() != nominal.markers;
    if !control.is_empty() || count_mismatch {
        let detail = if skip {
            FaultDetail::Skip
        } else if exit {
            FaultDetail::EarlyExit
        } else {
            FaultDetail::LoopCountMismatch
        };
        if count_mismatch {
            if marks.is_empty() {
                // No marker at all: point at whatever the target did print.
                control.extend(session.lines.iter().map(|l| l.index));
            } else {
                control.extend(&marks);
            }
            control.sort_unstable();
            control.dedup();
        }
        return verdict(detail, control);
    }
    verdict(FaultDetail::Nominal, Vec::new())
}

fn registers_match(got: &[(String, String)], expected: &RegisterSnapshot) -> bool {
    got.len() == expected.len()
        && got.iter().zip(expected).all(|((gk, gv), (ek, ev))| gk == ek && parse_uint(gv) == Some(*ev))
}
