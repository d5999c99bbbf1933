//! Dense 3D log-odds occupancy grid fed by rays from resampled mixtures.
//!
//! Voxel `(i, j, k)` covers the half-open cube
//! `origin + res·[i, i+1) × [j, j+1) × [k, k+1)`. A ray visits every voxel
//! containing some point of the half-open segment `[origin, end)`; axes that
//! cross a boundary at the same parameter step together. The voxel holding
//! `end + 1e-9·res·direction` takes the hit update, every other visited voxel
//! a miss update.
//!
//! Binary dump, little-endian: the magic `SGGRID01`, `f64` resolution and
//! origin `[3]`, `u64` dims `[3]`, `f64` hit, miss, min, max, occupied and
//! free thresholds, then one `f32` log-odds per cell with `x` fastest.
//! Unknown cells are NaN.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ingest::ply::{self, PlyEncoding};
use crate::inference::joint_dist_sample;
use crate::model::{Gmm4, RigidTransform};
use crate::par;

pub const MAGIC: &[u8; 8] = b"SGGRID01";
const HEADER_LEN: usize = 8 + 8 * 4 + 8 * 3 + 8 * 6;

/// Offset along the ray, in voxels, that decides the end voxel when the
/// end point lies on a boundary.
const END_NUDGE: f64 = 1e-9;

/// Rays traced per parallel batch during model insertion.
const RAY_BATCH: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridParams {
    /// Edge length of a voxel in meters.
    pub resolution: f64,
    /// World coordinates of the minimum corner of voxel `(0, 0, 0)`.
    pub origin: [f64; 3],
    pub dims: [usize; 3],
    pub log_odds_hit: f64,
    pub log_odds_miss: f64,
    pub log_odds_min: f64,
    pub log_odds_max: f64,
    pub occupied_threshold: f64,
    pub free_threshold: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            resolution: 0.05,
            origin: [-5.0, -5.0, -5.0],
            dims: [200, 200, 200],
            log_odds_hit: 0.85,
            log_odds_miss: -0.4,
            log_odds_min: -3.5,
            log_odds_max: 3.5,
            occupied_threshold: 0.5,
            free_threshold: -0.5,
        }
    }
}

impl GridParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(invalid(format!("resolution {} must be positive", self.resolution)));
        }
        if self.dims.contains(&0) {
            return Err(invalid(format!("grid dims {:?} must all be at least 1", self.dims)));
        }
        if self.dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).is_none() {
            return Err(invalid(format!("grid dims {:?} overflow", self.dims)));
        }
        let scalars = [
            self.log_odds_hit,
            self.log_odds_miss,
            self.log_odds_min,
            self.log_odds_max,
            self.occupied_threshold,
            self.free_threshold,
        ];
        if self.origin.iter().chain(&scalars).any(|v| !v.is_finite()) {
            return Err(invalid("grid parameters must be finite"));
        }
        if !(self.log_odds_min < self.log_odds_max) {
            return Err(invalid(format!("clamp range [{}, {}] is empty", self.log_odds_min, self.log_odds_max)));
        }
        if !(self.free_threshold < self.occupied_threshold) {
            return Err(invalid(format!(
                "free threshold {} must lie below occupied threshold {}",
                self.free_threshold, self.occupied_threshold
            )));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Continuous grid coordinates of a world point.
    fn to_grid(&self, p: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|a| (p[a] - self.origin[a]) / self.resolution)
    }

    fn cell(&self, g: [f64; 3]) -> Option<[usize; 3]> {
        let mut v = [0; 3];
        for a in 0..3 {
            let f = g[a].floor();
            if !(f >= 0.0 && f < self.dims[a] as f64) {
                return None;
            }
            v[a] = f as usize;
        }
        Some(v)
    }

    /// Voxel containing world point `p`, if inside the grid.
    pub fn voxel_of(&self, p: [f64; 3]) -> Option<[usize; 3]> {
        self.cell(self.to_grid(p))
    }

    pub fn center(&self, v: [usize; 3]) -> [f64; 3] {
        std::array::from_fn(|a| self.origin[a] + (v[a] as f64 + 0.5) * self.resolution)
    }

    pub fn linear(&self, v: [usize; 3]) -> usize {
        v[0] + self.dims[0] * (v[1] + self.dims[1] * v[2])
    }

    pub fn unlinear(&self, i: usize) -> [usize; 3] {
        [i % self.dims[0], (i / self.dims[0]) % self.dims[1], i / (self.dims[0] * self.dims[1])]
    }
}

/// Voxels touched by one ray.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RayTrace {
    /// Visited voxels other than the hit voxel, in traversal order.
    pub misses: Vec<[usize; 3]>,
    /// End voxel, absent when the ray was trimmed or ends outside the grid.
    pub hit: Option<[usize; 3]>,
}

/// Walks the ray from `origin` toward `end`, stopping at `max_range` meters.
///
/// Errors when `origin` is outside the grid or `max_range` is not positive.
/// A zero-length ray touches nothing.
pub fn trace_ray(params: &GridParams, origin: [f64; 3], end: [f64; 3], max_range: f64) -> Result<RayTrace> {
    if !(max_range > 0.0) {
        return Err(invalid(format!("trimmed max range {max_range} must be positive")));
    }
    let go = params.to_grid(origin);
    let start = params.cell(go).ok_or(Error::OriginOutsideGrid(origin))?;
    let ge = params.to_grid(end);
    let dg: [f64; 3] = std::array::from_fn(|a| ge[a] - go[a]);
    let len = (0..3).map(|a| (end[a] - origin[a]).powi(2)).sum::<f64>().sqrt();
    if !len.is_finite() {
        return Err(invalid("ray end point must be finite"));
    }
    let mut out = RayTrace::default();
    if len == 0.0 {
        return Ok(out);
    }
    let trimmed = len > max_range;
    let s_stop = if trimmed { max_range / len } else { 1.0 };
    if !trimmed {
        let glen = dg.iter().map(|d| d * d).sum::<f64>().sqrt();
        out.hit = params.cell(std::array::from_fn(|a| ge[a] + END_NUDGE * dg[a] / glen));
    }
    walk(params, go, dg, start, s_stop, |v| {
        if Some(v) != out.hit {
            out.misses.push(v);
        }
    });
    Ok(out)
}

/// Incremental line walk over `go + s·dg`, `s ∈ [0, s_stop)`.
fn walk(params: &GridParams, go: [f64; 3], dg: [f64; 3], start: [usize; 3], s_stop: f64, mut visit: impl FnMut([usize; 3])) {
    let mut v = start.map(|c| c as i64);
    let step: [i64; 3] = std::array::from_fn(|a| if dg[a] > 0.0 { 1 } else if dg[a] < 0.0 { -1 } else { 0 });
    // Next boundary plane along each axis, and the parameter reaching it.
    let mut plane: [i64; 3] = std::array::from_fn(|a| if step[a] > 0 { v[a] + 1 } else { v[a] });
    let cross = |a: usize, plane: i64| if step[a] == 0 { f64::INFINITY } else { (plane as f64 - go[a]) / dg[a] };
    let mut s_next: [f64; 3] = std::array::from_fn(|a| cross(a, plane[a]));
    loop {
        visit(v.map(|c| c as usize));
        let s = s_next[0].min(s_next[1]).min(s_next[2]);
        if s >= s_stop {
            return;
        }
        for a in 0..3 {
            if s_next[a] == s {
                v[a] += step[a];
                plane[a] += step[a];
                s_next[a] = cross(a, plane[a]);
            }
        }
        if (0..3).any(|a| v[a] < 0 || v[a] >= params.dims[a] as i64) {
            return;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellState {
    Occupied,
    Free,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CellCounts {
    pub occupied: usize,
    pub free: usize,
    pub unknown: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid3D {
    params: GridParams,
    /// Log-odds per cell; NaN marks a cell no ray has touched.
    cells: Vec<f32>,
}

impl OccupancyGrid3D {
    pub fn new(params: GridParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { cells: vec![f32::NAN; params.cell_count()], params })
    }

    pub fn params(&self) -> &GridParams {
        &self.params
    }

    pub fn cells(&self) -> &[f32] {
        &self.cells
    }

    /// Log-odds of a touched cell.
    pub fn log_odds(&self, v: [usize; 3]) -> Option<f32> {
        let x = self.cells[self.params.linear(v)];
        (!x.is_nan()).then_some(x)
    }

    fn update(&mut self, v: [usize; 3], delta: f64) {
        let p = &self.params;
        let c = &mut self.cells[p.linear(v)];
        let old = if c.is_nan() { 0.0 } else { *c as f64 };
        *c = (old + delta).clamp(p.log_odds_min, p.log_odds_max) as f32;
    }

    pub fn apply(&mut self, trace: &RayTrace) {
        let miss = self.params.log_odds_miss;
        for &v in &trace.misses {
            self.update(v, miss);
        }
        if let Some(v) = trace.hit {
            self.update(v, self.params.log_odds_hit);
        }
    }

    /// Miss-updates the voxels between `origin` and `end` and hit-updates
    /// the end voxel; see [`trace_ray`] for trimming.
    pub fn add_ray(&mut self, origin: [f64; 3], end: [f64; 3], max_range: f64) -> Result<()> {
        let t = trace_ray(&self.params, origin, end, max_range)?;
        self.apply(&t);
        Ok(())
    }

    /// Samples `num_pts` world-frame points from `model` and casts a ray to
    /// each from the sensor position. Rays are traced in parallel and applied
    /// in sample order, so the grid does not depend on the thread count.
    pub fn insert_resampled_model(
        &mut self,
        model: &Gmm4,
        sensor_pose: &RigidTransform,
        num_pts: usize,
        max_range: f64,
        seed: u64,
    ) -> Result<()> {
        let t = sensor_pose.translation();
        let origin = [t.x, t.y, t.z];
        if self.params.voxel_of(origin).is_none() {
            return Err(Error::OriginOutsideGrid(origin));
        }
        if !(max_range > 0.0) {
            return Err(invalid(format!("trimmed max range {max_range} must be positive")));
        }
        let samples = joint_dist_sample(model, num_pts, seed)?;
        for batch in samples.points().chunks(RAY_BATCH) {
            let traces = par::map(batch.len(), |i| {
                let p = batch[i];
                trace_ray(&self.params, origin, [p[0], p[1], p[2]], max_range)
            });
            for t in traces {
                self.apply(&t?);
            }
        }
        Ok(())
    }

    pub fn state(&self, v: [usize; 3]) -> CellState {
        self.classify(self.cells[self.params.linear(v)])
    }

    fn classify(&self, x: f32) -> CellState {
        let x = x as f64;
        if x > self.params.occupied_threshold {
            CellState::Occupied
        } else if x < self.params.free_threshold {
            CellState::Free
        } else {
            // NaN lands here too.
            CellState::Unknown
        }
    }

    fn centers_where(&self, want: CellState) -> Vec<[f64; 3]> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &x)| self.classify(x) == want)
            .map(|(i, _)| self.params.center(self.params.unlinear(i)))
            .collect()
    }

    pub fn query_occupied(&self) -> Vec<[f64; 3]> {
        self.centers_where(CellState::Occupied)
    }

    pub fn query_free(&self) -> Vec<[f64; 3]> {
        self.centers_where(CellState::Free)
    }

    pub fn query_unknown(&self) -> Vec<[f64; 3]> {
        self.centers_where(CellState::Unknown)
    }

    pub fn counts(&self) -> CellCounts {
        let mut c = CellCounts::default();
        for &x in &self.cells {
            match self.classify(x) {
                CellState::Occupied => c.occupied += 1,
                CellState::Free => c.free += 1,
                CellState::Unknown => c.unknown += 1,
            }
        }
        c
    }

    /// PLY of occupied voxel centers.
    pub fn write_occupied_ply(&self, path: impl AsRef<Path>, encoding: PlyEncoding) -> Result<()> {
        let flat: Vec<f64> = self.query_occupied().into_iter().flatten().collect();
        ply::write_table(path, &["x", "y", "z"], &flat, encoding)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.cells.len());
        out.extend_from_slice(MAGIC);
        let mut put = |v: f64| out.extend_from_slice(&v.to_le_bytes());
        put(p.resolution);
        p.origin.iter().for_each(|&v| put(v));
        for d in p.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in [p.log_odds_hit, p.log_odds_miss, p.log_odds_min, p.log_odds_max, p.occupied_threshold, p.free_threshold] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for c in &self.cells {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated { expected: HEADER_LEN, found: bytes.len() });
        }
        let word = |i: usize| -> [u8; 8] { bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap() };
        let f = |i: usize| f64::from_le_bytes(word(i));
        let dim = |i: usize| usize::try_from(u64::from_le_bytes(word(i))).map_err(|_| Error::Format("grid dims overflow".into()));
        let params = GridParams {
            resolution: f(0),
            origin: [f(1), f(2), f(3)],
            dims: [dim(4)?, dim(5)?, dim(6)?],
            log_odds_hit: f(7),
            log_odds_miss: f(8),
            log_odds_min: f(9),
            log_odds_max: f(10),
            occupied_threshold: f(11),
            free_threshold: f(12),
        };
        params.validate().map_err(|e| Error::Format(format!("grid header: {e}")))?;
        let expected = params
            .cell_count()
            .checked_mul(4)
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or_else(|| Error::Format("grid dims overflow".into()))?;
        if bytes.len() < expected {
            return Err(Error::Truncated { expected, found: bytes.len() });
        }
        if bytes.len() > expected {
            return Err(Error::Format(format!("{} trailing bytes after grid payload", bytes.len() - expected)));
        }
        let cells = bytes[HEADER_LEN..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { params, cells })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
