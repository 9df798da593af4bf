//! Exact nearest-neighbour and radius queries.
//!
//! Planar points live in a 2-d kd-tree. Lon/lat points are embedded on the
//! unit sphere and searched with chord distance in 3-d; chord length is a
//! monotone function of great-circle distance, so results are exact.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{sq, sqrt};
use crate::types::{Crs, Location};

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Great-circle distance in kilometres by the haversine formula.
pub fn haversine_km(a: &Location, b: &Location) -> f64 {
    let to_rad = core::f64::consts::PI / 180.0;
    let (lat1, lat2) = (a.y * to_rad, b.y * to_rad);
    let dlat = lat2 - lat1;
    let dlon = (b.x - a.x) * to_rad;
    let h = sq(libm::sin(dlat / 2.0)) + libm::cos(lat1) * libm::cos(lat2) * sq(libm::sin(dlon / 2.0));
    2.0 * EARTH_RADIUS_KM * libm::asin(sqrt(h.min(1.0)))
}

/// Distance in the natural unit of the CRS: planar units or kilometres.
pub fn distance(a: &Location, b: &Location) -> f64 {
    match a.crs {
        Crs::Planar => sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y)),
        Crs::LonLat => haversine_km(a, b),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Static kd-tree over a fixed point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialIndex {
    crs: Crs,
    dim: usize,
    points: Vec<[f64; 3]>,
    /// Tree order: the pivot of range `[lo, hi)` sits at `(lo + hi) / 2`.
    order: Vec<usize>,
}

impl SpatialIndex {
    pub fn new(locations: &[Location]) -> Result<Self> {
        let crs = crate::types::uniform_crs(locations)?.unwrap_or(Crs::Planar);
        let dim = if crs == Crs::LonLat { 3 } else { 2 };
        let points: Vec<[f64; 3]> = locations.iter().map(|l| embed(l, crs)).collect();
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(&points, &mut order, 0, dim);
        Ok(Self { crs, dim, points, order })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn crs(&self) -> Crs {
        self.crs
    }

    fn d2(&self, a: &[f64; 3], b: &[f64; 3]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.dim {
            let d = a[k] - b[k];
            s += d * d;
        }
        s
    }

    fn to_distance(&self, d2: f64) -> f64 {
        match self.crs {
            Crs::Planar => sqrt(d2),
            Crs::LonLat => 2.0 * EARTH_RADIUS_KM * libm::asin((sqrt(d2) / 2.0).min(1.0)),
        }
    }

    fn radius_to_d2(&self, radius: f64) -> f64 {
        match self.crs {
            Crs::Planar => radius * radius,
            Crs::LonLat => {
                let half_angle = (radius / (2.0 * EARTH_RADIUS_KM)).min(core::f64::consts::FRAC_PI_2);
                let chord = 2.0 * libm::sin(half_angle);
                chord * chord
            }
        }
    }

    fn check_query(&self, loc: &Location) -> Result<()> {
        if !self.points.is_empty() && loc.crs != self.crs {
            return Err(Error::MixedCrs);
        }
        Ok(())
    }

    /// Squared embedded distance of the k-th nearest point.
    fn kth_d2(&self, q: &[f64; 3], k: usize) -> f64 {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(q, 0, self.order.len(), 0, k, &mut heap);
        heap.peek().map_or(f64::INFINITY, |h| h.0)
    }

    fn knn_rec(&self, q: &[f64; 3], lo: usize, hi: usize, depth: usize, k: usize, heap: &mut BinaryHeap<HeapItem>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx];
        let d2 = self.d2(q, p);
        if heap.len() < k {
            heap.push(HeapItem(d2, idx));
        } else if d2 < heap.peek().expect("k >= 1").0 {
            heap.pop();
            heap.push(HeapItem(d2, idx));
        }
        let axis = depth % self.dim;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.knn_rec(q, near.0, near.1, depth + 1, k, heap);
        let worst = if heap.len() < k { f64::INFINITY } else { heap.peek().expect("non-empty").0 };
        if diff * diff <= worst {
            self.knn_rec(q, far.0, far.1, depth + 1, k, heap);
        }
    }

    fn radius_rec(&self, q: &[f64; 3], lo: usize, hi: usize, depth: usize, r2: f64, out: &mut Vec<(f64, usize)>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx];
        let d2 = self.d2(q, p);
        if d2 <= r2 {
            out.push((d2, idx));
        }
        let axis = depth % self.dim;
        let diff = q[axis] - p[axis];
        if diff <= 0.0 || diff * diff <= r2 {
            self.radius_rec(q, lo, mid, depth + 1, r2, out);
        }
        if diff >= 0.0 || diff * diff <= r2 {
            self.radius_rec(q, mid + 1, hi, depth + 1, r2, out);
        }
    }

    fn any_rec(&self, q: &[f64; 3], lo: usize, hi: usize, depth: usize, r2: f64) -> bool {
        if lo >= hi {
            return false;
        }
        let mid = (lo + hi) / 2;
        let p = &self.points[self.order[mid]];
        if self.d2(q, p) <= r2 {
            return true;
        }
        let axis = depth % self.dim;
        let diff = q[axis] - p[axis];
        ((diff <= 0.0 || diff * diff <= r2) && self.any_rec(q, lo, mid, depth + 1, r2))
            || ((diff >= 0.0 || diff * diff <= r2) && self.any_rec(q, mid + 1, hi, depth + 1, r2))
    }

    fn collect_sorted(&self, mut hits: Vec<(f64, usize)>) -> Vec<Neighbor> {
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        hits.into_iter()
            .map(|(d2, index)| Neighbor { index, distance: self.to_distance(d2) })
            .collect()
    }

    /// The `k` nearest points plus every point tied with the k-th distance,
    /// sorted by distance then index.
    pub fn nearest_with_ties(&self, loc: &Location, k: usize) -> Result<Vec<Neighbor>> {
        self.check_query(loc)?;
        if k == 0 || k > self.len() {
            return Err(Error::InvalidK { k, n: self.len() });
        }
        let q = embed(loc, self.crs);
        let r2 = self.kth_d2(&q, k);
        let mut hits = Vec::with_capacity(k);
        self.radius_rec(&q, 0, self.order.len(), 0, r2, &mut hits);
        Ok(self.collect_sorted(hits))
    }

    /// All points within `radius` (inclusive), sorted by distance then index.
    pub fn within_radius(&self, loc: &Location, radius: f64) -> Result<Vec<Neighbor>> {
        self.check_query(loc)?;
        let q = embed(loc, self.crs);
        let mut hits = Vec::new();
        self.radius_rec(&q, 0, self.order.len(), 0, self.radius_to_d2(radius), &mut hits);
        Ok(self.collect_sorted(hits))
    }

    /// True when at least one point lies within `radius`.
    pub fn any_within(&self, loc: &Location, radius: f64) -> Result<bool> {
        self.check_query(loc)?;
        let q = embed(loc, self.crs);
        Ok(self.any_rec(&q, 0, self.order.len(), 0, self.radius_to_d2(radius)))
    }
}

fn embed(loc: &Location, crs: Crs) -> [f64; 3] {
    match crs {
        Crs::Planar => [loc.x, loc.y, 0.0],
        Crs::LonLat => {
            let to_rad = core::f64::consts::PI / 180.0;
            let (lon, lat) = (loc.x * to_rad, loc.y * to_rad);
            let c = libm::cos(lat);
            [c * libm::cos(lon), c * libm::sin(lon), libm::sin(lat)]
        }
    }
}

fn build(points: &[[f64; 3]], order: &mut [usize], depth: usize, dim: usize) {
    if order.len() <= 1 {
        return;
    }
    let mid = order.len() / 2;
    let axis = depth % dim;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    build(points, left, depth + 1, dim);
    build(points, &mut right[1..], depth + 1, dim);
}
