use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{RegionDescriptor, RegionKind};
use crate::dictionary::StorageEstimate;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl SearchBox {
    pub fn symmetric(half_widths: [f64; 2]) -> Self {
        Self { lo: [-half_widths[0], -half_widths[1]], hi: half_widths }
    }

    fn half_widths(&self) -> [f64; 2] {
        [self.lo[0].abs().max(self.hi[0].abs()), self.lo[1].abs().max(self.hi[1].abs())]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DoaOptions {
    /// Width of the final bisection bracket on `c`.
    pub c_tol: f64,
    /// Grid nodes per axis, rounded up to an odd count so the origin is a node.
    pub grid_resolution: usize,
    /// Search box half-widths as a multiple of the region's extent.
    pub padding: f64,
    /// Search box used when the region is the whole space.
    pub whole_space_box: Option<SearchBox>,
    pub use_pruned: bool,
}

impl Default for DoaOptions {
    fn default() -> Self {
        Self { c_tol: 0.01, grid_resolution: 400, padding: 1.5, whole_space_box: None, use_pruned: true }
    }
}

/// Largest sublevel set `{S < c}` found to be bounded and inside the region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoaEstimate {
    pub level: f64,
    pub storage: StorageEstimate,
    pub region: RegionDescriptor,
    pub boundedness_checked: bool,
    /// Fraction of sampled boundary points within one grid cell of the region.
    pub boundary_samples_inside: f64,
    pub grid_resolution: usize,
    pub search_box: SearchBox,
    /// Points on `{S = level}` around the origin.
    pub boundary: Vec<[f64; 2]>,
}

/// Summary written next to level-curve data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoaReport {
    pub c: f64,
    pub storage_ref: String,
    pub region_kind: RegionKind,
    pub boundedness_checked: bool,
    pub grid_resolution: usize,
}

impl DoaEstimate {
    pub fn report(&self, storage_ref: impl Into<String>) -> DoaReport {
        DoaReport {
            c: self.level,
            storage_ref: storage_ref.into(),
            region_kind: self.region.kind(),
            boundedness_checked: self.boundedness_checked,
            grid_resolution: self.grid_resolution,
        }
    }
}

struct Grid {
    m: usize,
    side: usize,
    h: [f64; 2],
    values: Vec<f64>,
}

impl Grid {
    fn new(est: &StorageEstimate, sbox: &SearchBox, resolution: usize, use_pruned: bool) -> Self {
        let m = resolution.max(3) / 2;
        let side = 2 * m + 1;
        let half = sbox.half_widths();
        let h = [half[0] / m as f64, half[1] / m as f64];
        let mut values = vec![0.0; side * side];
        values.par_chunks_mut(side).enumerate().for_each(|(j, row)| {
            let x2 = (j as f64 - m as f64) * h[1];
            for (i, v) in row.iter_mut().enumerate() {
                let x1 = (i as f64 - m as f64) * h[0];
                *v = est.eval_storage(&[x1, x2], use_pruned);
            }
        });
        Self { m, side, h, values }
    }

    fn point(&self, idx: usize) -> [f64; 2] {
        let (i, j) = (idx % self.side, idx / self.side);
        [(i as f64 - self.m as f64) * self.h[0], (j as f64 - self.m as f64) * self.h[1]]
    }

    fn origin(&self) -> usize {
        self.m * self.side + self.m
    }

    fn on_edge(&self, idx: usize) -> bool {
        let (i, j) = (idx % self.side, idx / self.side);
        i == 0 || j == 0 || i + 1 == self.side || j + 1 == self.side
    }

    fn neighbours4(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = ((idx % self.side) as isize, (idx / self.side) as isize);
        self.around(i, j, &[(1, 0), (-1, 0), (0, 1), (0, -1)])
    }

    fn around<'a>(&'a self, i: isize, j: isize, offs: &'a [(isize, isize)]) -> impl Iterator<Item = usize> + 'a {
        let s = self.side as isize;
        offs.iter().filter_map(move |&(di, dj)| {
            let (a, b) = (i + di, j + dj);
            (a >= 0 && b >= 0 && a < s && b < s).then(|| (b * s + a) as usize)
        })
    }

    /// Interior nodes other than the origin that are no higher than their
    /// eight neighbours.
    fn local_minima(&self) -> Vec<usize> {
        const RING: [(isize, isize); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
        (0..self.values.len())
            .filter(|&idx| idx != self.origin() && !self.on_edge(idx))
            .filter(|&idx| {
                let (i, j) = ((idx % self.side) as isize, (idx / self.side) as isize);
                let v = self.values[idx];
                self.around(i, j, &RING).all(|n| self.values[n] >= v)
            })
            .collect()
    }

    /// Origin component of `{S < c}` under 4-connectivity.
    fn component(&self, c: f64) -> Vec<bool> {
        let mut seen = vec![false; self.values.len()];
        let start = self.origin();
        if !(self.values[start] < c) {
            return seen;
        }
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(idx) = queue.pop_front() {
            for n in self.neighbours4(idx) {
                if !seen[n] && self.values[n] < c {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    fn crossing(&self, a: usize, b: usize, c: f64) -> [f64; 2] {
        let (pa, pb) = (self.point(a), self.point(b));
        let (va, vb) = (self.values[a], self.values[b]);
        let t = if vb != va { ((c - va) / (vb - va)).clamp(0.0, 1.0) } else { 0.5 };
        [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
    }
}

/// Bisection for the largest level `c` whose origin component of `{S < c}` is
/// bounded inside the search box, holds no other local minimum of `S`, and
/// lies in `region`. The level sets are tested on a uniform grid.
pub fn doa_estimate(est: &StorageEstimate, region: &RegionDescriptor, opts: &DoaOptions) -> Result<DoaEstimate> {
    if est.dictionary.state_dim() != 2 {
        return Err(Error::arg("level-set estimation is implemented for planar systems only"));
    }
    if !(opts.c_tol > 0.0) {
        return Err(Error::arg("c_tol must be positive"));
    }
    if !(opts.padding >= 1.0) {
        return Err(Error::arg("padding must be at least 1"));
    }
    let sbox = match (region.extent(), opts.whole_space_box) {
        (_, Some(b)) if region.kind() == RegionKind::WholeSpace => b,
        (Some((lo, hi)), _) => {
            let half = [lo[0].abs().max(hi[0].abs()), lo[1].abs().max(hi[1].abs())];
            SearchBox::symmetric([opts.padding * half[0], opts.padding * half[1]])
        }
        (None, _) => return Err(Error::arg("a whole-space region needs an explicit search box")),
    };
    let half = sbox.half_widths();
    if !(half[0] > 0.0 && half[1] > 0.0) {
        return Err(Error::DegenerateRegion("search box has zero width".into()));
    }

    let grid = Grid::new(est, &sbox, opts.grid_resolution, opts.use_pruned);
    let inside: Vec<bool> = (0..grid.values.len()).map(|idx| region.contains(&grid.point(idx))).collect();
    let origin = grid.origin();
    if let Some(idx) = (0..grid.values.len()).find(|&idx| idx != origin && inside[idx] && !(grid.values[idx] > 0.0)) {
        let p = grid.point(idx);
        return Err(Error::DegenerateEstimate(format!(
            "storage is not positive at ({:.4}, {:.4}) inside the region",
            p[0], p[1]
        )));
    }
    let minima = grid.local_minima();

    let admissible = |c: f64| -> bool {
        let comp = grid.component(c);
        comp.iter().enumerate().all(|(idx, &in_c)| !in_c || (inside[idx] && !grid.on_edge(idx)))
            && minima.iter().all(|&idx| !comp[idx])
    };

    let mut lo = 0.0_f64;
    let mut hi = grid.values.iter().copied().fold(0.0, f64::max) * (1.0 + 1e-9) + f64::MIN_POSITIVE;
    while hi - lo > opts.c_tol {
        let mid = 0.5 * (lo + hi);
        if admissible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if !(lo > 0.0) {
        return Err(Error::DegenerateRegion(format!(
            "no level above {} gives a bounded sublevel set inside the region",
            opts.c_tol
        )));
    }

    let comp = grid.component(lo);
    let mut boundary = Vec::new();
    for idx in (0..comp.len()).filter(|&i| comp[i]) {
        for n in grid.neighbours4(idx) {
            if !comp[n] {
                boundary.push(grid.crossing(idx, n, lo));
            }
        }
    }
    let tol = grid.h[0].max(grid.h[1]);
    let ok = boundary.iter().filter(|p| region.distance_outside(&p[..]) <= tol).count();
    let boundary_samples_inside = if boundary.is_empty() { 1.0 } else { ok as f64 / boundary.len() as f64 };

    Ok(DoaEstimate {
        level: lo,
        storage: est.clone(),
        region: region.clone(),
        boundedness_checked: true,
        boundary_samples_inside,
        grid_resolution: grid.side,
        search_box: sbox,
        boundary,
    })
}

/// Points where `S = c` on the edges of a uniform grid over `sbox`, for
/// plotting level curves.
pub fn level_curve_points(est: &StorageEstimate, c: f64, sbox: &SearchBox, resolution: usize, use_pruned: bool) -> Vec<[f64; 2]> {
    let grid = Grid::new(est, sbox, resolution, use_pruned);
    let mut out = Vec::new();
    for idx in 0..grid.values.len() {
        let i = idx % grid.side;
        let below = grid.values[idx] < c;
        if i + 1 < grid.side && (grid.values[idx + 1] < c) != below {
            out.push(grid.crossing(idx, idx + 1, c));
        }
        if idx + grid.side < grid.values.len() && (grid.values[idx + grid.side] < c) != below {
            out.push(grid.crossing(idx, idx + grid.side, c));
        }
    }
    out
}
