use std::collections::BTreeMap;
use std::io;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::Map;

use crate::classify::FaultObservation;
use crate::error::{Error, Result};
use crate::geometry::ProbeCoordinate;
use crate::map::{build_map, MapMetadata, SusceptibilityMap};
use crate::pulse::PulseParameters;
use crate::stats::{ClassCounts, StatsAccumulator};
use crate::target::{SimTarget, TargetBackend};

use super::config::CampaignConfig;
use super::exec::{Execution, Executor};
use super::plan::{plan_stage, plan_trials, refine_layers, Layer, LayerMaps};
use super::record::{CampaignHeader, LayerRecord, LogEntry, LogSink, TrialRecord, LOG_FORMAT};

/// Trials executed between flushes.
const CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub execution: Execution,
    /// Write `timestamp_ms = 0` so logs are byte-for-byte reproducible.
    pub zero_timestamps: bool,
}

/// Map of one layer, for one parameter point or (`param_index == None`) all
/// of them pooled.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMap {
    pub layer: u32,
    pub level: u32,
    pub param_index: Option<usize>,
    pub map: SusceptibilityMap,
}

#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub campaign_id: String,
    pub config_hash: String,
    pub parameter_points: Vec<PulseParameters>,
    pub layers: Vec<Layer>,
    pub maps: Vec<LayerMap>,
    pub class_totals: ClassCounts,
    pub trials: u64,
}

impl CampaignOutcome {
    pub fn map(&self, layer: u32, param_index: Option<usize>) -> Option<&SusceptibilityMap> {
        self.maps.iter().find(|m| m.layer == layer && m.param_index == param_index).map(|m| &m.map)
    }
}

/// Per-layer statistics accumulated in log order.
#[derive(Debug, Default)]
pub struct MapAggregator {
    per_param: BTreeMap<(u32, usize), StatsAccumulator>,
    pooled: BTreeMap<u32, StatsAccumulator>,
}

impl MapAggregator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, layer: u32, param_index: usize, coordinate: ProbeCoordinate, obs: &FaultObservation) {
        self.per_param.entry((layer, param_index)).or_default().add(coordinate, obs);
        self.pooled.entry(layer).or_default().add(coordinate, obs);
    }

    /// Pooled map first, then one map per parameter point of the layer that
    /// received trials.
    pub fn layer_maps(&self, campaign_id: &str, layer: &Layer, params: &[PulseParameters]) -> Result<Vec<LayerMap>> {
        let make = |acc: Option<&StatsAccumulator>, param_index: Option<usize>| -> Result<LayerMap> {
            let stats = acc.map(StatsAccumulator::finish).unwrap_or_default();
            let trials = stats.iter().map(|s| s.trials).sum();
            let map = build_map(&layer.grid, &stats)?.with_metadata(MapMetadata {
                campaign_id: campaign_id.to_owned(),
                layer: layer.id,
                param_index,
                parameters: param_index.and_then(|p| params.get(p).copied()),
                trials,
            });
            Ok(LayerMap { layer: layer.id, level: layer.level, param_index, map })
        };
        let mut out = vec![make(self.pooled.get(&layer.id), None)?];
        for &p in &layer.params {
            out.push(make(self.per_param.get(&(layer.id, p)), Some(p))?);
        }
        Ok(out)
    }
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

struct Appender<'a, S: LogSink> {
    sink: &'a mut S,
    last_appended: Option<u64>,
    last_durable: Option<u64>,
}

impl<S: LogSink> Appender<'_, S> {
    fn fail(&self, source: io::Error) -> Error {
        Error::Persistence { last_durable: self.last_durable, source }
    }

    fn append(&mut self, entry: &LogEntry) -> Result<()> {
        self.sink.append(entry).map_err(|e| self.fail(e))?;
        if let LogEntry::Trial(t) = entry {
            self.last_appended = Some(t.seq);
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.sink.flush().map_err(|e| self.fail(e))?;
        self.last_durable = self.last_appended;
        Ok(())
    }
}

/// Runs the simulated target described by the configuration.
pub fn run_simulated<S: LogSink>(
    config: &CampaignConfig,
    sink: &mut S,
    options: RunOptions,
) -> Result<CampaignOutcome> {
    let target: SimTarget = config.build_target()?;
    run_campaign(config, &target, sink, options)
}

/// Coarse scan followed by up to `refinement.max_levels` refinement rounds.
///
/// Every trial is appended to `sink` before the campaign moves on; a sink
/// failure aborts with [`Error::Persistence`] naming the last trial known to
/// be durable.
pub fn run_campaign<B, S>(
    config: &CampaignConfig,
    backend: &B,
    sink: &mut S,
    options: RunOptions,
) -> Result<CampaignOutcome>
where
    B: TargetBackend + Clone + Send + Sync,
    S: LogSink,
{
    let plan = plan_trials(config)?;
    let params = plan.parameter_points;
    let config_hash = config.hash();
    let nominal = backend.nominal_profile();
    let executor = Executor::new(options.execution)?;
    let mut out = Appender { sink, last_appended: None, last_durable: None };

    out.append(&LogEntry::Campaign(Box::new(CampaignHeader {
        format: LOG_FORMAT.into(),
        campaign_id: config.campaign_id.clone(),
        config_hash: config_hash.clone(),
        config: config.clone(),
        nominal: nominal.clone(),
        parameter_points: params.clone(),
        extra: Map::new(),
    })))?;

    let mut agg = MapAggregator::new();
    let mut totals = ClassCounts::default();
    let mut seq = 0u64;
    let mut all_layers: Vec<Layer> = Vec::new();
    let mut all_maps: Vec<LayerMap> = Vec::new();

    let mut stage_layers = plan.coarse_layers;
    let mut stage_trials = plan.coarse;
    let mut round = 0;
    loop {
        for layer in &stage_layers {
            out.append(&LogEntry::Layer(LayerRecord { layer: layer.clone(), extra: Map::new() }))?;
        }
        for chunk in stage_trials.chunks(CHUNK) {
            let results = executor.run(backend, chunk, &params, &nominal);
            let timestamp_ms = if options.zero_timestamps { 0 } else { now_ms() };
            for (t, r) in chunk.iter().zip(results) {
                agg.add(t.layer, t.param_index, t.coordinate, &r.classification);
                totals.bump(r.classification.class);
                let error_count = r.classification.error_count();
                out.append(&LogEntry::Trial(Box::new(TrialRecord {
                    seq,
                    campaign_id: config.campaign_id.clone(),
                    config_hash: config_hash.clone(),
                    layer: t.layer,
                    level: t.level,
                    coordinate_index: t.coordinate_index(),
                    param_index: t.param_index,
                    trial_index: t.trial_index,
                    trial_seed: t.trial_seed,
                    coordinate: t.coordinate,
                    parameters: params[t.param_index],
                    output_lines: r.raw.output_lines,
                    responded: r.raw.responded,
                    duration_ms: r.raw.duration_ms,
                    classification: r.classification,
                    error_count,
                    timestamp_ms,
                    extra: Map::new(),
                })))?;
                seq += 1;
            }
            out.flush()?;
        }
        out.flush()?;

        let mut stage_maps = Vec::new();
        for layer in &stage_layers {
            stage_maps.extend(agg.layer_maps(&config.campaign_id, layer, &params)?);
        }
        let next = if round < config.refinement.max_levels {
            let finished: Vec<LayerMaps<'_>> = stage_layers
                .iter()
                .map(|layer| {
                    let mine = stage_maps.iter().filter(|m| m.layer == layer.id);
                    let mut combined = None;
                    let mut per_param = BTreeMap::new();
                    for m in mine {
                        match m.param_index {
                            None => combined = Some(&m.map),
                            Some(p) => {
                                per_param.insert(p, &m.map);
                            }
                        }
                    }
                    LayerMaps { layer, combined: combined.expect("pooled map is always built"), per_param }
                })
                .collect();
            let next_id = stage_layers.iter().chain(&all_layers).map(|l| l.id + 1).max().unwrap_or(0);
            refine_layers(&config.refinement, &finished, next_id)?
        } else {
            Vec::new()
        };
        all_layers.append(&mut stage_layers);
        all_maps.append(&mut stage_maps);
        if next.is_empty() {
            break;
        }
        stage_trials = plan_stage(config.seed, &next, config.sweep.trials_per_point);
        stage_layers = next;
        round += 1;
    }

    Ok(CampaignOutcome {
        campaign_id: config.campaign_id.clone(),
        config_hash,
        parameter_points: params,
        layers: all_layers,
        maps: all_maps,
        class_totals: totals,
        trials: seq,
    })
}
