//! Probe positions, uniform scan grids and nested refinement grids.
//!
//! All lengths are millimeters. Grids are generated row-major with `y` as the
//! outer index, and coordinates are always recomputed from `origin + i * pitch`
//! rather than accumulated, so refined grids land on their parent lattice to
//! within [`COORD_EPS`].

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::SusceptibilityMap;

/// Tolerance for coordinate equality, in millimeters.
pub const COORD_EPS: f64 = 1e-9;

pub const DEFAULT_PITCH_MM: f64 = 1.0;
pub const DEFAULT_REFINEMENT_FACTOR: u32 = 2;
pub const MAX_REFINEMENT_LEVELS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeCoordinate {
    pub x: f64,
    pub y: f64,
    /// Probe height above the package surface.
    pub z: f64,
}

impl ProbeCoordinate {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let c = ProbeCoordinate { x, y, z };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.x.is_finite() {
            return Err(Error::validation("x", format!("{} is not finite", self.x)));
        }
        if !self.y.is_finite() {
            return Err(Error::validation("y", format!("{} is not finite", self.y)));
        }
        if !self.z.is_finite() || self.z < 0.0 {
            return Err(Error::validation("z", format!("{} must be finite and >= 0", self.z)));
        }
        Ok(())
    }

    pub fn approx_eq(&self, other: &ProbeCoordinate) -> bool {
        (self.x - other.x).abs() <= COORD_EPS
            && (self.y - other.y).abs() <= COORD_EPS
            && (self.z - other.z).abs() <= COORD_EPS
    }

    pub fn planar_distance(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 2],
    #[serde(default = "default_pitch")]
    pub pitch: f64,
    pub nx: u32,
    pub ny: u32,
    #[serde(default)]
    pub z: f64,
}

fn default_pitch() -> f64 {
    DEFAULT_PITCH_MM
}

impl GridSpec {
    pub fn new(origin: [f64; 2], pitch: f64, nx: u32, ny: u32, z: f64) -> Result<Self> {
        let g = GridSpec { origin, pitch, nx, ny, z };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.origin[0].is_finite() || !self.origin[1].is_finite() {
            return Err(Error::validation("origin", "coordinates must be finite"));
        }
        if !self.pitch.is_finite() || self.pitch <= 0.0 {
            return Err(Error::validation("pitch", format!("{} must be > 0", self.pitch)));
        }
        if self.nx == 0 {
            return Err(Error::validation("nx", "must be >= 1"));
        }
        if self.ny == 0 {
            return Err(Error::validation("ny", "must be >= 1"));
        }
        if !self.z.is_finite() || self.z < 0.0 {
            return Err(Error::validation("z", format!("{} must be finite and >= 0", self.z)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx as usize * self.ny as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinate of lattice point `(i, j)`; no bounds check.
    pub fn coordinate(&self, i: u32, j: u32) -> ProbeCoordinate {
        ProbeCoordinate {
            x: self.origin[0] + i as f64 * self.pitch,
            y: self.origin[1] + j as f64 * self.pitch,
            z: self.z,
        }
    }

    /// Row-major index of `(i, j)`.
    pub fn index(&self, i: u32, j: u32) -> usize {
        j as usize * self.nx as usize + i as usize
    }

    pub fn coordinate_at(&self, index: usize) -> ProbeCoordinate {
        let nx = self.nx as usize;
        self.coordinate((index % nx) as u32, (index / nx) as u32)
    }

    pub fn x_max(&self) -> f64 {
        self.origin[0] + (self.nx - 1) as f64 * self.pitch
    }

    pub fn y_max(&self) -> f64 {
        self.origin[1] + (self.ny - 1) as f64 * self.pitch
    }

    /// Lattice indices of `c`, if it lies on this grid within [`COORD_EPS`].
    pub fn locate(&self, c: &ProbeCoordinate) -> Option<(u32, u32)> {
        if (c.z - self.z).abs() > COORD_EPS {
            return None;
        }
        let i = snap_index(c.x, self.origin[0], self.pitch, self.nx)?;
        let j = snap_index(c.y, self.origin[1], self.pitch, self.ny)?;
        let on = self.coordinate(i, j);
        on.approx_eq(c).then_some((i, j))
    }
}

fn snap_index(v: f64, origin: f64, pitch: f64, n: u32) -> Option<u32> {
    let k = ((v - origin) / pitch).round();
    if k < 0.0 || k >= n as f64 {
        return None;
    }
    Some(k as u32)
}

/// All lattice points of `spec`, `y` outer and `x` inner.
pub fn generate_grid(spec: &GridSpec) -> Result<Vec<ProbeCoordinate>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.len());
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            out.push(spec.coordinate(i, j));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementRegion {
    pub center: [f64; 2],
    pub half_extent: f64,
    pub refinement_factor: u32,
}

impl RefinementRegion {
    pub fn new(center: [f64; 2], half_extent: f64, refinement_factor: u32) -> Result<Self> {
        let r = RefinementRegion { center, half_extent, refinement_factor };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.center[0].is_finite() || !self.center[1].is_finite() {
            return Err(Error::validation("center", "must be finite"));
        }
        if !self.half_extent.is_finite() || self.half_extent <= 0.0 {
            return Err(Error::validation("half_extent", format!("{} must be > 0", self.half_extent)));
        }
        if self.refinement_factor < 2 {
            return Err(Error::validation("refinement_factor", "must be >= 2"));
        }
        Ok(())
    }

    /// Whether `(x, y)` lies in the square `center ± half_extent`.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.center[0]).abs() <= self.half_extent + COORD_EPS
            && (y - self.center[1]).abs() <= self.half_extent + COORD_EPS
    }
}

/// Finer grid covering `region` clipped to `parent`'s extent.
///
/// The refined lattice is aligned with the parent lattice, so every parent
/// point inside the region is also a refined point.
pub fn refine_region(parent: &GridSpec, region: &RefinementRegion) -> Result<GridSpec> {
    parent.validate()?;
    region.validate()?;
    let fine = parent.pitch / region.refinement_factor as f64;
    let (i0, nx) = refine_axis(parent.origin[0], parent.x_max(), region.center[0], region.half_extent, fine)
        .ok_or_else(|| outside(parent, region))?;
    let (j0, ny) = refine_axis(parent.origin[1], parent.y_max(), region.center[1], region.half_extent, fine)
        .ok_or_else(|| outside(parent, region))?;
    Ok(GridSpec {
        origin: [parent.origin[0] + i0 as f64 * fine, parent.origin[1] + j0 as f64 * fine],
        pitch: fine,
        nx,
        ny,
        z: parent.z,
    })
}

fn outside(parent: &GridSpec, region: &RefinementRegion) -> Error {
    Error::domain(format!(
        "refinement region centered at ({}, {}) with half extent {} does not intersect grid [{}, {}] x [{}, {}]",
        region.center[0],
        region.center[1],
        region.half_extent,
        parent.origin[0],
        parent.x_max(),
        parent.origin[1],
        parent.y_max()
    ))
}

/// First fine-lattice index and count covering `[c - h, c + h] ∩ [lo, hi]`.
fn refine_axis(lo: f64, hi: f64, c: f64, h: f64, fine: f64) -> Option<(i64, u32)> {
    let a = (c - h).max(lo);
    let b = (c + h).min(hi);
    if a > b + COORD_EPS {
        return None;
    }
    let first = ((a - lo - COORD_EPS) / fine).ceil().max(0.0) as i64;
    let last = ((b - lo + COORD_EPS) / fine).floor() as i64;
    if last < first {
        return None;
    }
    Some((first, (last - first + 1) as u32))
}

/// Regions around 4-connected components of cells with `fault_rate >= threshold`.
///
/// Each region is centered on its component's centroid, with half extent equal
/// to the component bounding box's half-diagonal plus one grid pitch. Regions
/// are ordered by descending peak rate, ties by ascending `(y, x)` of the peak.
pub fn select_regions_of_interest(
    map: &SusceptibilityMap,
    threshold: f64,
    refinement_factor: u32,
) -> Vec<RefinementRegion> {
    let grid = map.grid();
    let (nx, ny) = (grid.nx as usize, grid.ny as usize);
    let hot: Vec<bool> = (0..nx * ny).map(|k| map.cell(k).is_some_and(|s| s.fault_rate >= threshold)).collect();
    let mut label = vec![usize::MAX; nx * ny];
    let mut found: Vec<(f64, usize, RefinementRegion)> = Vec::new();

    for start in 0..nx * ny {
        if !hot[start] || label[start] != usize::MAX {
            continue;
        }
        let id = found.len();
        label[start] = id;
        let mut queue = VecDeque::from([start]);
        let mut members = Vec::new();
        while let Some(k) = queue.pop_front() {
            members.push(k);
            let (i, j) = (k % nx, k / nx);
            let mut visit = |n: usize| {
                if hot[n] && label[n] == usize::MAX {
                    label[n] = id;
                    queue.push_back(n);
                }
            };
            if i > 0 {
                visit(k - 1);
            }
            if i + 1 < nx {
                visit(k + 1);
            }
            if j > 0 {
                visit(k - nx);
            }
            if j + 1 < ny {
                visit(k + nx);
            }
        }

        // Row-major index order is ascending (y, x), so the first maximum wins ties.
        members.sort_unstable();
        let mut peak = members[0];
        let (mut sx, mut sy) = (0.0, 0.0);
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &k in &members {
            let c = grid.coordinate_at(k);
            sx += c.x;
            sy += c.y;
            x0 = x0.min(c.x);
            x1 = x1.max(c.x);
            y0 = y0.min(c.y);
            y1 = y1.max(c.y);
            if rate(map, k) > rate(map, peak) {
                peak = k;
            }
        }
        let n = members.len() as f64;
        let half_diag = 0.5 * (x1 - x0).hypot(y1 - y0);
        found.push((
            rate(map, peak),
            peak,
            RefinementRegion { center: [sx / n, sy / n], half_extent: half_diag + grid.pitch, refinement_factor },
        ));
    }

    found.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    found.into_iter().map(|(_, _, r)| r).collect()
}

fn rate(map: &SusceptibilityMap, k: usize) -> f64 {
    map.cell(k).map_or(f64::NEG_INFINITY, |s| s.fault_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(origin: [f64; 2], pitch: f64, nx: u32, ny: u32) -> GridSpec {
        GridSpec::new(origin, pitch, nx, ny, 1.0).unwrap()
    }

    #[test]
    fn three_by_three() {
        let pts = generate_grid(&grid([0.0, 0.0], 0.5, 3, 3)).unwrap();
        assert_eq!(pts.len(), 9);
        let vals = [0.0, 0.5, 1.0];
        for (k, p) in pts.iter().enumerate() {
            assert_eq!(p.x, vals[k % 3]);
            assert_eq!(p.y, vals[k / 3]);
            assert_eq!(p.z, 1.0);
        }
    }

    #[test]
    fn degenerate_grid_is_origin() {
        let pts = generate_grid(&grid([2.5, -1.0], 1.0, 1, 1)).unwrap();
        assert_eq!(pts, vec![ProbeCoordinate { x: 2.5, y: -1.0, z: 1.0 }]);
    }

    #[test]
    fn offset_grid_extent() {
        let pts = generate_grid(&grid([2.0, 3.0], 0.25, 5, 2)).unwrap();
        assert_eq!(pts.len(), 10);
        let mx = pts.iter().map(|p| p.x).fold(f64::MIN, f64::max);
        let my = pts.iter().map(|p| p.y).fold(f64::MIN, f64::max);
        assert!((mx - 3.0).abs() < COORD_EPS);
        assert!((my - 3.25).abs() < COORD_EPS);
    }

    #[test]
    fn invalid_specs_name_field() {
        let bad = GridSpec { origin: [0.0, 0.0], pitch: 0.0, nx: 2, ny: 2, z: 0.0 };
        match generate_grid(&bad) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "pitch"),
            other => panic!("{other:?}"),
        }
        let bad = GridSpec { origin: [0.0, 0.0], pitch: 1.0, nx: 2, ny: 0, z: 0.0 };
        match generate_grid(&bad) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "ny"),
            other => panic!("{other:?}"),
        }
        let bad = GridSpec { origin: [0.0, 0.0], pitch: 1.0, nx: 0, ny: 2, z: 0.0 };
        assert!(matches!(generate_grid(&bad), Err(Error::Validation { field, .. }) if field == "nx"));
        assert!(ProbeCoordinate::new(0.0, 0.0, -0.1).is_err());
        assert!(ProbeCoordinate::new(f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn refine_full_square() {
        let parent = grid([0.0, 0.0], 0.5, 3, 3);
        let region = RefinementRegion::new([0.5, 0.5], 0.5, 2).unwrap();
        let fine = refine_region(&parent, &region).unwrap();
        assert_eq!(fine.pitch, 0.25);
        assert_eq!((fine.nx, fine.ny), (5, 5));
        assert_eq!(fine.origin, [0.0, 0.0]);
        assert!((fine.x_max() - 1.0).abs() < COORD_EPS);
    }

    #[test]
    fn refine_twice_quarters_pitch() {
        let parent = grid([0.0, 0.0], 0.5, 3, 3);
        let region = RefinementRegion::new([0.5, 0.5], 0.5, 2).unwrap();
        let once = refine_region(&parent, &region).unwrap();
        let twice = refine_region(&once, &region).unwrap();
        assert_eq!(twice.pitch, 0.125);
    }

    #[test]
    fn refine_clips_to_parent() {
        let parent = grid([0.0, 0.0], 0.5, 3, 3);
        let region = RefinementRegion::new([0.0, 0.0], 0.5, 2).unwrap();
        let fine = refine_region(&parent, &region).unwrap();
        assert_eq!(fine.origin, [0.0, 0.0]);
        assert_eq!((fine.nx, fine.ny), (3, 3));
        assert!((fine.x_max() - 0.5).abs() < COORD_EPS);
        assert!((fine.y_max() - 0.5).abs() < COORD_EPS);
    }

    #[test]
    fn refine_outside_is_domain_error() {
        let parent = grid([0.0, 0.0], 0.5, 3, 3);
        let region = RefinementRegion::new([5.0, 5.0], 0.5, 2).unwrap();
        assert!(matches!(refine_region(&parent, &region), Err(Error::Domain(_))));
    }

    fn rate_map(g: &GridSpec, cells: &[Option<(u64, u64)>]) -> SusceptibilityMap {
        use crate::classify::{FaultClass, FaultDetail, FaultObservation};
        use crate::stats::StatsAccumulator;
        let mut acc = StatsAccumulator::new();
        let fault = FaultObservation {
            class: FaultClass::ControlFlow,
            detail: FaultDetail::Skip,
            ..FaultObservation::nominal()
        };
        for (k, cell) in cells.iter().enumerate() {
            if let Some((faults, trials)) = *cell {
                for t in 0..trials {
                    let obs = if t < faults { fault.clone() } else { FaultObservation::nominal() };
                    acc.add(g.coordinate_at(k), &obs);
                }
            }
        }
        crate::map::build_map(g, &acc.finish()).unwrap()
    }

    /// Union-find labelling, independent of the BFS in the implementation.
    fn components(nx: usize, ny: usize, hot: &[bool]) -> Vec<Vec<usize>> {
        fn find(p: &mut [usize], mut a: usize) -> usize {
            while p[a] != a {
                a = p[a];
            }
            a
        }
        let mut parent: Vec<usize> = (0..nx * ny).collect();
        for k in 0..nx * ny {
            if !hot[k] {
                continue;
            }
            for n in [(k % nx + 1 < nx).then(|| k + 1), (k + nx < nx * ny).then(|| k + nx)].into_iter().flatten() {
                if hot[n] {
                    let (a, b) = (find(&mut parent, k), find(&mut parent, n));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for k in (0..nx * ny).filter(|&k| hot[k]) {
            let r = find(&mut parent, k);
            groups.entry(r).or_default().push(k);
        }
        groups.into_values().collect()
    }

    #[test]
    fn diagonal_cells_are_separate_regions() {
        let g = grid([0.0, 0.0], 1.0, 3, 3);
        let mut cells = vec![Some((0, 10)); 9];
        cells[0] = Some((9, 10));
        cells[4] = Some((5, 10));
        let regions = select_regions_of_interest(&rate_map(&g, &cells), 0.5, 2);
        assert_eq!(regions.len(), 2);
        assert_eq!(regions[0].center, [0.0, 0.0]);
        assert_eq!(regions[1].center, [1.0, 1.0]);
        assert!((regions[0].half_extent - 1.0).abs() < 1e-12);
    }

    #[test]
    fn l_shape_is_one_region() {
        let g = grid([0.0, 0.0], 0.5, 4, 4);
        let mut cells = vec![Some((0, 4)); 16];
        for k in [0, 1, 2, 6] {
            cells[k] = Some((4, 4));
        }
        cells[9] = None;
        let regions = select_regions_of_interest(&rate_map(&g, &cells), 1.0, 3);
        assert_eq!(regions.len(), 1);
        let r = &regions[0];
        assert!((r.center[0] - 0.625).abs() < 1e-12 && (r.center[1] - 0.125).abs() < 1e-12);
        let half_diag = (1.0f64 * 1.0 + 0.5 * 0.5).sqrt() / 2.0;
        assert!((r.half_extent - (half_diag + 0.5)).abs() < 1e-12);
        assert_eq!(r.refinement_factor, 3);
    }

    #[test]
    fn regions_ordered_by_peak_then_position() {
        let g = grid([0.0, 0.0], 1.0, 5, 1);
        let cells = [Some((6, 10)), None, Some((8, 10)), None, Some((8, 10))];
        let regions = select_regions_of_interest(&rate_map(&g, &cells), 0.5, 2);
        let xs: Vec<f64> = regions.iter().map(|r| r.center[0]).collect();
        assert_eq!(xs, [2.0, 4.0, 0.0]);
    }

    #[test]
    fn nothing_above_threshold() {
        let g = grid([0.0, 0.0], 1.0, 2, 2);
        let cells = vec![Some((1, 10)); 4];
        assert!(select_regions_of_interest(&rate_map(&g, &cells), 0.5, 2).is_empty());
    }

    #[test]
    fn region_validation() {
        assert!(RefinementRegion::new([0.0, 0.0], 0.0, 2).is_err());
        assert!(RefinementRegion::new([0.0, 0.0], 1.0, 1).is_err());
    }

    #[test]
    fn locate_snaps_within_tolerance() {
        let g = grid([0.0, 0.0], 0.1, 11, 11);
        let c = ProbeCoordinate { x: 0.30000000000000004, y: 0.7, z: 1.0 };
        assert_eq!(g.locate(&c), Some((3, 7)));
        let off = ProbeCoordinate { x: 0.35, y: 0.7, z: 1.0 };
        assert_eq!(g.locate(&off), None);
        let wrong_z = ProbeCoordinate { x: 0.3, y: 0.7, z: 2.0 };
        assert_eq!(g.locate(&wrong_z), None);
    }

    proptest! {
        #[test]
        fn grid_is_pure_and_distinct(ox in -10.0f64..10.0, oy in -10.0f64..10.0,
                                     pitch in 0.01f64..3.0, nx in 1u32..12, ny in 1u32..12) {
            let spec = GridSpec::new([ox, oy], pitch, nx, ny, 0.5).unwrap();
            let a = generate_grid(&spec).unwrap();
            let b = generate_grid(&spec).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.len(), (nx * ny) as usize);
            for (k, p) in a.iter().enumerate() {
                prop_assert_eq!(spec.locate(p), Some(((k as u32) % nx, (k as u32) / nx)));
            }
        }

        #[test]
        fn refinement_nests_parent_points(ox in -5.0f64..5.0, oy in -5.0f64..5.0,
                                          pitch in 0.1f64..2.0, nx in 1u32..10, ny in 1u32..10,
                                          fx in 0.0f64..1.0, fy in 0.0f64..1.0,
                                          half in 0.05f64..4.0, factor in 2u32..5) {
            let parent = GridSpec::new([ox, oy], pitch, nx, ny, 0.0).unwrap();
            let center = [ox + fx * (nx - 1) as f64 * pitch, oy + fy * (ny - 1) as f64 * pitch];
            let region = RefinementRegion::new(center, half, factor).unwrap();
            let step = pitch / factor as f64;
            let lattice_hit = |lo: f64, n: u32, c: f64| {
                (0..=(n - 1) * factor).any(|k| (lo + k as f64 * step - c).abs() <= half + COORD_EPS)
            };
            let fine = match refine_region(&parent, &region) {
                Ok(f) => f,
                Err(e) => {
                    prop_assert!(matches!(e, Error::Domain(_)));
                    prop_assert!(!(lattice_hit(ox, nx, center[0]) && lattice_hit(oy, ny, center[1])));
                    return Ok(());
                }
            };
            prop_assert!((fine.pitch - pitch / factor as f64).abs() < 1e-15);
            for p in generate_grid(&parent).unwrap() {
                if region.contains(p.x, p.y) {
                    prop_assert!(fine.locate(&p).is_some(), "{:?} missing from {:?}", p, fine);
                }
            }
            for p in generate_grid(&fine).unwrap() {
                prop_assert!(region.contains(p.x, p.y));
                prop_assert!(p.x >= parent.origin[0] - COORD_EPS && p.x <= parent.x_max() + COORD_EPS);
                prop_assert!(p.y >= parent.origin[1] - COORD_EPS && p.y <= parent.y_max() + COORD_EPS);
            }
        }

        #[test]
        fn regions_match_union_find(nx in 1usize..7, ny in 1usize..7, mask in proptest::collection::vec(0u8..4, 36)) {
            let g = grid([1.0, -2.0], 0.5, nx as u32, ny as u32);
            let cells: Vec<_> = (0..nx * ny).map(|k| match mask[k] {
                0 => None,
                1 => Some((0, 4)),
                m => Some((u64::from(m), 4)),
            }).collect();
            let hot: Vec<bool> = cells.iter().map(|c| matches!(c, Some((f, _)) if *f >= 2)).collect();
            let expected = components(nx, ny, &hot);
            let regions = select_regions_of_interest(&rate_map(&g, &cells), 0.5, 2);
            prop_assert_eq!(regions.len(), expected.len());
            for comp in &expected {
                let n = comp.len() as f64;
                let cx = comp.iter().map(|&k| g.coordinate_at(k).x).sum::<f64>() / n;
                let cy = comp.iter().map(|&k| g.coordinate_at(k).y).sum::<f64>() / n;
                let r = regions.iter().find(|r| (r.center[0] - cx).abs() < 1e-9 && (r.center[1] - cy).abs() < 1e-9);
                prop_assert!(r.is_some(), "no region at ({}, {})", cx, cy);
                for &k in comp {
                    let c = g.coordinate_at(k);
                    prop_assert!(r.unwrap().contains(c.x, c.y));
                }
            }
            for w in regions.windows(2) {
                let peak = |r: &RefinementRegion| {
                    expected.iter().find(|comp| {
                        let n = comp.len() as f64;
                        (comp.iter().map(|&k| g.coordinate_at(k).x).sum::<f64>() / n - r.center[0]).abs() < 1e-9
                            && (comp.iter().map(|&k| g.coordinate_at(k).y).sum::<f64>() / n - r.center[1]).abs() < 1e-9
                    }).map(|comp| comp.iter().map(|&k| cells[k].unwrap().0).max().unwrap()).unwrap()
                };
                prop_assert!(peak(&w[0]) >= peak(&w[1]));
            }
        }
    }
}
