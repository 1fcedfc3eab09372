use serde::{Deserialize, Serialize};

use super::LfsSeries;
use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    ConvexHull,
    Box,
    WholeSpace,
}

/// Estimate of the origin-containing set where `L_f S < 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionDescriptor {
    /// Counter-clockwise vertices of a planar convex polygon.
    ConvexHull { vertices: Vec<[f64; 2]> },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    WholeSpace,
}

impl RegionDescriptor {
    pub fn kind(&self) -> RegionKind {
        match self {
            RegionDescriptor::ConvexHull { .. } => RegionKind::ConvexHull,
            RegionDescriptor::Box { .. } => RegionKind::Box,
            RegionDescriptor::WholeSpace => RegionKind::WholeSpace,
        }
    }

    /// Hull of planar points. Fails when fewer than three non-collinear points
    /// are given.
    pub fn convex_hull(points: &[[f64; 2]]) -> Result<Self> {
        let vertices = monotone_chain(points);
        if vertices.len() < 3 {
            return Err(Error::DegenerateRegion("convex hull has empty interior".into()));
        }
        Ok(RegionDescriptor::ConvexHull { vertices })
    }

    pub fn bounding_box(points: &[Vec<f64>]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::DegenerateRegion("no points".into()))?;
        let mut lo = first.clone();
        let mut hi = first.clone();
        for p in points {
            for (i, &v) in p.iter().enumerate() {
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
        }
        Ok(RegionDescriptor::Box { lo, hi })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            RegionDescriptor::ConvexHull { vertices } => {
                let scale = vertices.iter().fold(1.0_f64, |m, v| m.max(v[0].abs()).max(v[1].abs()));
                let eps = 1e-12 * scale * scale;
                edges(vertices).all(|(a, b)| cross(a, b, [x[0], x[1]]) >= -eps)
            }
            RegionDescriptor::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| l <= v && v <= h),
            RegionDescriptor::WholeSpace => true,
        }
    }

    /// Euclidean distance from `x` to the region, zero inside.
    pub fn distance_outside(&self, x: &[f64]) -> f64 {
        if self.contains(x) {
            return 0.0;
        }
        match self {
            RegionDescriptor::ConvexHull { vertices } => edges(vertices)
                .map(|(a, b)| segment_distance(a, b, [x[0], x[1]]))
                .fold(f64::INFINITY, f64::min),
            RegionDescriptor::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| (l - v).max(v - h).max(0.0).powi(2))
                .sum::<f64>()
                .sqrt(),
            RegionDescriptor::WholeSpace => 0.0,
        }
    }

    /// Axis-aligned bounds, `None` for the whole space.
    pub fn extent(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            RegionDescriptor::ConvexHull { vertices } => {
                let pts: Vec<Vec<f64>> = vertices.iter().map(|v| v.to_vec()).collect();
                match RegionDescriptor::bounding_box(&pts) {
                    Ok(RegionDescriptor::Box { lo, hi }) => Some((lo, hi)),
                    _ => None,
                }
            }
            RegionDescriptor::Box { lo, hi } => Some((lo.clone(), hi.clone())),
            RegionDescriptor::WholeSpace => None,
        }
    }
}

fn edges(v: &[[f64; 2]]) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
    (0..v.len()).map(move |i| (v[i], v[(i + 1) % v.len()]))
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segment_distance(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((a[0] + t * d[0] - p[0]).powi(2) + (a[1] + t * d[1] - p[1]).powi(2)).sqrt()
}

fn monotone_chain(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.iter().copied().filter(|p| p[0].is_finite() && p[1].is_finite()).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegionOptions {
    /// Samples qualify when their `L_f S` estimate is below this value.
    pub margin_tol: f64,
    /// Samples closer to the origin than this are not tested.
    pub origin_radius: f64,
    /// Use the bounding box of the qualifying samples instead of their hull.
    pub bounding_box: bool,
    /// Assume `L_f S < 0` on the whole state space.
    pub whole_space_prior: bool,
}

impl Default for RegionOptions {
    fn default() -> Self {
        Self { margin_tol: 0.0, origin_radius: 1e-9, bounding_box: false, whole_space_prior: false }
    }
}

/// Data-supported estimate of the negative region of `L_f S`.
///
/// When every sample qualifies the result is the hull of all visited states.
/// Otherwise only the qualifying samples strictly closer to the origin than
/// the nearest failing one are used.
pub fn negative_region(lfs: &LfsSeries, traj: &Trajectory, opts: &RegionOptions) -> Result<RegionDescriptor> {
    if opts.whole_space_prior {
        return Ok(RegionDescriptor::WholeSpace);
    }
    let n = traj.len();
    if lfs.len() + 1 != n {
        return Err(Error::arg(format!("L_fS series has {} values for {n} samples", lfs.len())));
    }
    if traj.state_dim() != 2 && !opts.bounding_box {
        return Err(Error::arg("convex hull regions need a two-dimensional state; use a bounding box"));
    }
    let value = |k: usize| lfs.values[k.min(n - 2)];
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();

    let mut cutoff = f64::INFINITY;
    for k in 0..n {
        let r = norm(traj.state(k));
        if r > opts.origin_radius && !(value(k) < opts.margin_tol) {
            cutoff = cutoff.min(r);
        }
    }
    let chosen: Vec<Vec<f64>> = (0..n)
        .map(|k| traj.state(k))
        .filter(|x| norm(x) < cutoff)
        .map(|x| x.to_vec())
        .collect();
    if chosen.is_empty() {
        return Err(Error::DegenerateRegion("no sample has a negative L_fS estimate".into()));
    }

    let region = if opts.bounding_box {
        RegionDescriptor::bounding_box(&chosen)?
    } else {
        let pts: Vec<[f64; 2]> = chosen.iter().map(|x| [x[0], x[1]]).collect();
        RegionDescriptor::convex_hull(&pts)?
    };
    if !region.contains(&vec![0.0; traj.state_dim()]) {
        return Err(Error::DegenerateRegion("the qualifying samples do not enclose the origin".into()));
    }
    Ok(region)
}
