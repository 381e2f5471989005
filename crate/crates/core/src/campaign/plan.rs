//! Staged trial planning.
//!
//! A campaign scans layers. Coarse layers (one per probe height) come first;
//! each refinement round derives child layers from regions of interest on
//! the previous round's maps. Within a stage trials are ordered by layer,
//! then grid row-major, then parameter point, then trial index.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{refine_region, select_regions_of_interest, GridSpec, ProbeCoordinate, RefinementRegion};
use crate::map::SusceptibilityMap;
use crate::pulse::PulseParameters;
use crate::rng::{mix64, GOLDEN_GAMMA};

use super::config::{CampaignConfig, RefinementConfig};

/// Domain separator folded into the campaign seed ("EMFISCAN").
const SEED_DOMAIN: u64 = 0x454D_4649_5343_414E;

/// Per-trial seed from the campaign seed and the trial's position.
///
/// ```text
/// h = mix64(campaign_seed ^ 0x454D46495343414E)
/// for v in [coordinate_index, param_index, trial_index]:
///     h = mix64((h + 0x9E3779B97F4A7C15) ^ v)
/// ```
///
/// with wrapping addition and [`mix64`] the SplitMix64 finalizer.
pub fn derive_trial_seed(campaign_seed: u64, coordinate_index: u64, param_index: u64, trial_index: u64) -> u64 {
    let mut h = mix64(campaign_seed ^ SEED_DOMAIN);
    for v in [coordinate_index, param_index, trial_index] {
        h = mix64(h.wrapping_add(GOLDEN_GAMMA) ^ v);
    }
    h
}

/// Campaign-wide coordinate index: layer id in the high 32 bits, row-major
/// point index in the low 32.
pub fn coordinate_index(layer: u32, point: u32) -> u64 {
    (u64::from(layer) << 32) | u64::from(point)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub id: u32,
    /// 0 for coarse layers.
    pub level: u32,
    pub parent: Option<u32>,
    pub grid: GridSpec,
    /// Parameter points scanned on this layer.
    pub params: Vec<usize>,
    pub region: Option<RefinementRegion>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannedTrial {
    pub layer: u32,
    pub level: u32,
    pub point: u32,
    pub coordinate: ProbeCoordinate,
    pub param_index: usize,
    pub trial_index: u32,
    pub trial_seed: u64,
}

impl PlannedTrial {
    pub fn coordinate_index(&self) -> u64 {
        coordinate_index(self.layer, self.point)
    }
}

pub fn plan_stage(campaign_seed: u64, layers: &[Layer], trials_per_point: u32) -> Vec<PlannedTrial> {
    let mut out = Vec::new();
    for layer in layers {
        for point in 0..layer.grid.len() as u32 {
            let coordinate = layer.grid.coordinate_at(point as usize);
            let ci = coordinate_index(layer.id, point);
            for &param_index in &layer.params {
                for trial_index in 0..trials_per_point {
                    out.push(PlannedTrial {
                        layer: layer.id,
                        level: layer.level,
                        point,
                        coordinate,
                        param_index,
                        trial_index,
                        trial_seed: derive_trial_seed(campaign_seed, ci, param_index as u64, u64::from(trial_index)),
                    });
                }
            }
        }
    }
    out
}

/// The coarse stage in full plus the refinement schedule that follows it.
#[derive(Debug, Clone)]
pub struct StagedPlan {
    pub parameter_points: Vec<PulseParameters>,
    pub coarse_layers: Vec<Layer>,
    pub coarse: Vec<PlannedTrial>,
    /// Refinement rounds still to come; their trials depend on coarse results.
    pub refinement: RefinementConfig,
}

impl StagedPlan {
    pub fn refinement_rounds(&self) -> u32 {
        self.refinement.max_levels
    }
}

pub fn coarse_layers(config: &CampaignConfig, param_count: usize) -> Vec<Layer> {
    config
        .coarse_grids()
        .into_iter()
        .enumerate()
        .map(|(k, grid)| Layer {
            id: k as u32,
            level: 0,
            parent: None,
            grid,
            params: (0..param_count).collect(),
            region: None,
        })
        .collect()
}

pub fn plan_trials(config: &CampaignConfig) -> Result<StagedPlan> {
    config.validate()?;
    let parameter_points = config.parameter_points()?;
    let coarse_layers = coarse_layers(config, parameter_points.len());
    let coarse = plan_stage(config.seed, &coarse_layers, config.sweep.trials_per_point);
    Ok(StagedPlan { parameter_points, coarse_layers, coarse, refinement: config.refinement.clone() })
}

/// Maps of one finished layer.
#[derive(Debug, Clone)]
pub struct LayerMaps<'a> {
    pub layer: &'a Layer,
    /// All parameter points pooled.
    pub combined: &'a SusceptibilityMap,
    pub per_param: BTreeMap<usize, &'a SusceptibilityMap>,
}

/// Child layers for the next refinement round, ids starting at `next_id`.
///
/// By default regions come from the pooled map and children scan all of the
/// parent's parameter points. With `refine_best_param_only` they come from
/// the map of the parameter point with the most faults (ties to the lowest
/// index) and children scan only that point.
pub fn refine_layers(refinement: &RefinementConfig, finished: &[LayerMaps<'_>], next_id: u32) -> Result<Vec<Layer>> {
    let mut out = Vec::new();
    let mut id = next_id;
    for lm in finished {
        let (source, params) = if refinement.refine_best_param_only {
            let best = lm.per_param.iter().fold(None, |best: Option<(usize, u64)>, (&p, m)| {
                let faults = m.populated().map(|(_, c)| c.faults()).sum::<u64>();
                match best {
                    Some((_, f)) if f >= faults => best,
                    _ => Some((p, faults)),
                }
            });
            match best {
                Some((p, _)) => (lm.per_param[&p], vec![p]),
                None => continue,
            }
        } else {
            (lm.combined, lm.layer.params.clone())
        };
        for region in select_regions_of_interest(source, refinement.threshold, refinement.factor) {
            let grid = refine_region(&lm.layer.grid, &region)?;
            out.push(Layer {
                id,
                level: lm.layer.level + 1,
                parent: Some(lm.layer.id),
                grid,
                params: params.clone(),
                region: Some(region),
            });
            id += 1;
        }
    }
    Ok(out)
}
