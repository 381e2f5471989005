//! Offline re-analysis of a campaign log.
//!
//! Every trial's stored output is parsed and classified again with the
//! nominal profile from the log header. Any field that comes out different
//! is a disagreement; maps are rebuilt from the recomputed verdicts.

use std::collections::BTreeMap;
use std::io::BufRead;

use crate::classify::{classify_session, FaultObservation};
use crate::error::Result;
use crate::protocol::parse_session;
use crate::stats::ClassCounts;

use super::plan::{derive_trial_seed, Layer};
use super::record::{CampaignHeader, LogEntry, TrialRecord};
use super::run::{LayerMap, MapAggregator};

#[derive(Debug, Clone, PartialEq)]
pub struct Disagreement {
    pub seq: u64,
    /// 1-based line in the log.
    pub line: usize,
    /// Names of the fields that differ.
    pub fields: Vec<&'static str>,
    pub stored: FaultObservation,
    pub recomputed: FaultObservation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MalformedRecord {
    pub line: usize,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReplayOptions {
    /// Keep every trial record, with the recomputed classification.
    pub keep_records: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ReplayReport {
    pub header: Option<CampaignHeader>,
    pub layers: Vec<Layer>,
    pub trials: u64,
    pub disagreements: Vec<Disagreement>,
    pub malformed: Vec<MalformedRecord>,
    pub class_totals: ClassCounts,
    pub maps: Vec<LayerMap>,
    pub records: Vec<TrialRecord>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.disagreements.is_empty() && self.malformed.is_empty()
    }
}

pub fn replay_str(log: &str, options: ReplayOptions) -> Result<ReplayReport> {
    replay_reader(log.as_bytes(), options)
}

pub fn replay_reader<R: BufRead>(reader: R, options: ReplayOptions) -> Result<ReplayReport> {
    let mut report = ReplayReport::default();
    let mut agg = MapAggregator::new();
    let mut layers: BTreeMap<u32, Layer> = BTreeMap::new();
    let mut next_seq = 0u64;

    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |error: String| MalformedRecord { line: lineno, error };
        let entry = match LogEntry::parse(&line) {
            Ok(e) => e,
            Err(e) => {
                report.malformed.push(malformed(e.to_string()));
                continue;
            }
        };
        match entry {
            LogEntry::Campaign(h) => {
                if report.header.is_some() {
                    report.malformed.push(malformed("second campaign header".into()));
                } else {
                    report.header = Some(*h);
                }
            }
            LogEntry::Layer(l) => {
                layers.insert(l.layer.id, l.layer);
            }
            LogEntry::Trial(mut t) => {
                let Some(header) = &report.header else {
                    report.malformed.push(malformed("trial before campaign header".into()));
                    continue;
                };
                if !layers.contains_key(&t.layer) {
                    report.malformed.push(malformed(format!("trial on undeclared layer {}", t.layer)));
                    continue;
                }
                let session = parse_session(&t.output_lines, t.responded);
                let recomputed = classify_session(&session, &header.nominal);
                let mut fields = Vec::new();
                if recomputed.class != t.classification.class {
                    fields.push("class");
                }
                if recomputed.detail != t.classification.detail {
                    fields.push("detail");
                }
                if recomputed.evidence != t.classification.evidence {
                    fields.push("evidence");
                }
                if recomputed.bit_flips != t.classification.bit_flips || recomputed.flips != t.classification.flips {
                    fields.push("flips");
                }
                if recomputed.error_count() != t.error_count {
                    fields.push("error_count");
                }
                let expected_seed = derive_trial_seed(
                    header.config.seed,
                    t.coordinate_index,
                    t.param_index as u64,
                    u64::from(t.trial_index),
                );
                if expected_seed != t.trial_seed {
                    fields.push("trial_seed");
                }
                if t.config_hash != header.config_hash {
                    fields.push("config_hash");
                }
                if t.seq != next_seq {
                    fields.push("seq");
                }
                next_seq = t.seq + 1;
                if !fields.is_empty() {
                    report.disagreements.push(Disagreement {
                        seq: t.seq,
                        line: lineno,
                        fields,
                        stored: t.classification.clone(),
                        recomputed: recomputed.clone(),
                    });
                }
                agg.add(t.layer, t.param_index, t.coordinate, &recomputed);
                report.class_totals.bump(recomputed.class);
                report.trials += 1;
                if options.keep_records {
                    t.error_count = recomputed.error_count();
                    t.classification = recomputed;
                    report.records.push(*t);
                }
            }
        }
    }

    if let Some(h) = &report.header {
        for layer in layers.values() {
            report.maps.extend(agg.layer_maps(&h.campaign_id, layer, &h.parameter_points)?);
        }
    }
    report.layers = layers.into_values().collect();
    Ok(report)
}
