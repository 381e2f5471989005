//! Per-coordinate susceptibility maps and their file exports.
//!
//! Cells with no trials are "no data", which is kept distinct from a
//! measured rate of zero all the way into the exports (`NA` in CSV).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::campaign::TrialRecord;
use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::pulse::PulseParameters;
use crate::stats::CoordinateStats;

pub const SCATTER_HEADER: &str = "x,y,trial_index,error_count,fault_class";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub campaign_id: String,
    pub layer: u32,
    pub param_index: Option<usize>,
    pub parameters: Option<PulseParameters>,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SusceptibilityMap {
    grid: GridSpec,
    cells: Vec<Option<CoordinateStats>>,
    pub metadata: MapMetadata,
}

impl SusceptibilityMap {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Cell by row-major grid index.
    pub fn cell(&self, index: usize) -> Option<&CoordinateStats> {
        self.cells.get(index).and_then(Option::as_ref)
    }

    pub fn cell_at(&self, i: u32, j: u32) -> Option<&CoordinateStats> {
        self.cell(self.grid.index(i, j))
    }

    pub fn populated(&self) -> impl Iterator<Item = (usize, &CoordinateStats)> {
        self.cells.iter().enumerate().filter_map(|(k, c)| c.as_ref().map(|c| (k, c)))
    }

    pub fn populated_count(&self) -> usize {
        self.populated().count()
    }

    pub fn with_metadata(mut self, metadata: MapMetadata) -> Self {
        self.metadata = metadata;
        self
    }

    /// Largest per-cell error total; 0 when empty.
    pub fn max_error_total(&self) -> u64 {
        self.populated().map(|(_, c)| c.error_total).max().unwrap_or(0)
    }

    /// Cell of highest fault rate, ties by lowest grid index.
    pub fn peak(&self) -> Option<(usize, &CoordinateStats)> {
        self.populated().fold(None, |best: Option<(usize, &CoordinateStats)>, (k, c)| match best {
            Some((_, b)) if b.fault_rate >= c.fault_rate => best,
            _ => Some((k, c)),
        })
    }

    /// Union of two maps over the same grid with disjoint populated cells.
    pub fn merge(&self, other: &SusceptibilityMap) -> Result<SusceptibilityMap> {
        if self.grid != other.grid {
            return Err(Error::domain("cannot merge maps over different grids"));
        }
        let mut cells = self.cells.clone();
        for (k, c) in other.populated() {
            if cells[k].is_some() {
                let at = self.grid.coordinate_at(k);
                return Err(Error::domain(format!("both maps populate coordinate ({}, {}, {})", at.x, at.y, at.z)));
            }
            cells[k] = Some(c.clone());
        }
        let mut metadata = self.metadata.clone();
        metadata.trials = self.metadata.trials + other.metadata.trials;
        Ok(SusceptibilityMap { grid: self.grid, cells, metadata })
    }
}

/// Places each stats entry on its grid cell (coordinates snap within 1e-9 mm).
pub fn build_map(grid: &GridSpec, stats: &[CoordinateStats]) -> Result<SusceptibilityMap> {
    grid.validate()?;
    let mut cells = vec![None; grid.len()];
    let mut trials = 0;
    for s in stats {
        let c = &s.coordinate;
        let (i, j) = grid
            .locate(c)
            .ok_or_else(|| Error::domain(format!("coordinate ({}, {}, {}) is not on the grid", c.x, c.y, c.z)))?;
        let slot = &mut cells[grid.index(i, j)];
        if slot.is_some() {
            return Err(Error::domain(format!("duplicate stats for coordinate ({}, {}, {})", c.x, c.y, c.z)));
        }
        trials += s.trials;
        *slot = Some(s.clone());
    }
    Ok(SusceptibilityMap { grid: *grid, cells, metadata: MapMetadata { trials, ..MapMetadata::default() } })
}

/// `ny` rows of `nx` per-cell error totals, row 0 at the smallest `y`,
/// preceded by one `#` header line describing the grid.
pub fn export_heatmap_csv(map: &SusceptibilityMap) -> String {
    let g = map.grid();
    let mut out = format!(
        "# heatmap origin_x={} origin_y={} pitch={} nx={} ny={} z={}\n",
        g.origin[0], g.origin[1], g.pitch, g.nx, g.ny, g.z
    );
    for j in 0..g.ny {
        for i in 0..g.nx {
            if i > 0 {
                out.push(',');
            }
            match map.cell_at(i, j) {
                Some(c) => write!(out, "{}", c.error_total).unwrap(),
                None => out.push_str("NA"),
            }
        }
        out.push('\n');
    }
    out
}

/// One row per trial in log order.
pub fn export_scatter_csv<'a, I>(records: I) -> String
where
    I: IntoIterator<Item = &'a TrialRecord>,
{
    let mut out = String::from(SCATTER_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.coordinate.x, r.coordinate.y, r.trial_index, r.error_count, r.classification.class
        )
        .unwrap();
    }
    out
}

/// Binary P5 graymap, one pixel per cell, row 0 at the smallest `y`.
/// Pixel value is `round(255 * min(count, scale) / scale)` rounding half up;
/// no-data cells are 0.
pub fn export_pgm(map: &SusceptibilityMap, scale: u64) -> Result<Vec<u8>> {
    if scale == 0 {
        return Err(Error::validation("scale", "must be >= 1"));
    }
    let g = map.grid();
    let mut out = format!("P5\n{} {}\n255\n", g.nx, g.ny).into_bytes();
    out.reserve(g.len());
    let scale = scale as u128;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let px = match map.cell_at(i, j) {
                Some(c) => {
                    let v = (c.error_total as u128).min(scale);
                    ((510 * v + scale) / (2 * scale)) as u8
                }
                None => 0,
            };
            out.push(px);
        }
    }
    Ok(out)
}
