//! Box geometry, sub-box partitions, dyadic box hierarchies, and the torus
//! metric.
//!
//! Conventions fixed here and relied on everywhere else:
//! * the boundary of a box is its outermost ring of sites; interior sites are
//!   those whose four lattice neighbors stay inside the box;
//! * the delta-interior margin is `ceil(delta * side / k)` lattice units;
//! * sub-boxes are indexed row-major from the parent origin.

use crate::error::DgffError;
use crate::Result;

/// Lattice point.
pub type Point = (i64, i64);

/// An axis-aligned square box of lattice sites.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoxSpec {
    side: usize,
    origin: Point,
}

impl BoxSpec {
    /// Standard constructor: side length must be a power of two.
    pub fn new(side: usize) -> Result<Self> {
        Self::with_origin(side, (0, 0))
    }

    pub fn with_origin(side: usize, origin: Point) -> Result<Self> {
        if side == 0 || !side.is_power_of_two() {
            return Err(DgffError::Domain(format!(
                "box side must be a power of two, got {side}"
            )));
        }
        Ok(BoxSpec { side, origin })
    }

    /// Non-dyadic box, for oracle tables (e.g. the single-interior-point box
    /// of side 3). Operations that require the dyadic structure reject these.
    pub fn any_side(side: usize) -> Result<Self> {
        if side == 0 {
            return Err(DgffError::Domain("box side must be positive".into()));
        }
        Ok(BoxSpec { side, origin: (0, 0) })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn is_dyadic(&self) -> bool {
        self.side.is_power_of_two()
    }

    /// `n = log2(N)`; error for non-dyadic sides.
    pub fn level(&self) -> Result<u32> {
        if !self.is_dyadic() {
            return Err(DgffError::Domain(format!(
                "side {} is not a power of two",
                self.side
            )));
        }
        Ok(self.side.trailing_zeros())
    }

    pub fn site_count(&self) -> usize {
        self.side * self.side
    }

    /// Interior side length (0 for boxes of side < 3).
    pub fn interior_side(&self) -> usize {
        self.side.saturating_sub(2)
    }

    pub fn contains(&self, p: Point) -> bool {
        let (x, y) = (p.0 - self.origin.0, p.1 - self.origin.1);
        x >= 0 && y >= 0 && (x as usize) < self.side && (y as usize) < self.side
    }

    /// Boundary = outermost ring.
    pub fn is_boundary(&self, p: Point) -> bool {
        if !self.contains(p) {
            return false;
        }
        let (x, y) = (p.0 - self.origin.0, p.1 - self.origin.1);
        let last = (self.side - 1) as i64;
        x == 0 || y == 0 || x == last || y == last
    }

    pub fn is_interior(&self, p: Point) -> bool {
        self.contains(p) && !self.is_boundary(p)
    }

    /// All boundary sites, in a stable scan order.
    pub fn boundary_sites(&self) -> Vec<Point> {
        let last = (self.side - 1) as i64;
        let (ox, oy) = self.origin;
        let mut out = Vec::new();
        for y in 0..=last {
            for x in 0..=last {
                if x == 0 || y == 0 || x == last || y == last {
                    out.push((ox + x, oy + y));
                }
            }
        }
        out
    }

    /// All interior sites, row-major.
    pub fn interior_sites(&self) -> Vec<Point> {
        let last = (self.side - 1) as i64;
        let (ox, oy) = self.origin;
        let mut out = Vec::new();
        for y in 1..last {
            for x in 1..last {
                out.push((ox + x, oy + y));
            }
        }
        out
    }

    /// Center site `origin + (side/2, side/2)`.
    pub fn center(&self) -> Point {
        (
            self.origin.0 + (self.side / 2) as i64,
            self.origin.1 + (self.side / 2) as i64,
        )
    }
}

/// Partition of a box into `k^2` sub-boxes of side `N/k`, with a
/// delta-interior margin.
#[derive(Clone, Copy, Debug)]
pub struct SubBoxPartition {
    parent: BoxSpec,
    k: usize,
    delta: f64,
}

/// A dyadic rational in `[0, 1/2)` written with denominator `2^20` or less.
fn is_dyadic_fraction(x: f64) -> bool {
    if !(0.0..0.5).contains(&x) {
        return false;
    }
    let scaled = x * (1u64 << 20) as f64;
    scaled == scaled.floor()
}

impl SubBoxPartition {
    pub fn new(parent: BoxSpec, k: usize, delta: f64) -> Result<Self> {
        if !parent.is_dyadic() {
            return Err(DgffError::InvalidPartition(
                "parent box must have dyadic side".into(),
            ));
        }
        if k == 0 || !k.is_power_of_two() {
            return Err(DgffError::InvalidPartition(format!(
                "K must be a positive power of two, got {k}"
            )));
        }
        if k >= parent.side() {
            return Err(DgffError::InvalidPartition(format!(
                "K = {k} must be smaller than the box side {}",
                parent.side()
            )));
        }
        if !is_dyadic_fraction(delta) {
            return Err(DgffError::InvalidPartition(format!(
                "delta must be a dyadic rational in [0, 1/2), got {delta}"
            )));
        }
        Ok(SubBoxPartition { parent, k, delta })
    }

    pub fn parent(&self) -> BoxSpec {
        self.parent
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn sub_box_side(&self) -> usize {
        self.parent.side() / self.k
    }

    /// Margin of the delta-interior in lattice units: `ceil(delta * N / K)`.
    pub fn delta_margin(&self) -> usize {
        (self.delta * self.sub_box_side() as f64).ceil() as usize
    }

    pub fn sub_box_count(&self) -> usize {
        self.k * self.k
    }

    /// Row-major sub-box `i`.
    pub fn sub_box(&self, i: usize) -> Result<BoxSpec> {
        if i >= self.sub_box_count() {
            return Err(DgffError::Domain(format!(
                "sub-box index {i} out of range (K^2 = {})",
                self.sub_box_count()
            )));
        }
        let s = self.sub_box_side() as i64;
        let (ox, oy) = self.parent.origin();
        let row = (i / self.k) as i64;
        let col = (i % self.k) as i64;
        BoxSpec::with_origin(self.sub_box_side(), (ox + col * s, oy + row * s))
    }

    /// All `K^2` sub-boxes, row-major from the parent origin.
    pub fn enumerate_subboxes(&self) -> Vec<(usize, BoxSpec)> {
        (0..self.sub_box_count())
            .map(|i| (i, self.sub_box(i).expect("index in range")))
            .collect()
    }

    /// Index of the sub-box containing `p`.
    pub fn sub_box_index_of(&self, p: Point) -> Option<usize> {
        if !self.parent.contains(p) {
            return None;
        }
        let s = self.sub_box_side() as i64;
        let col = ((p.0 - self.parent.origin().0) / s) as usize;
        let row = ((p.1 - self.parent.origin().1) / s) as usize;
        Some(row * self.k + col)
    }

    /// Points of sub-box `i` at L-infinity distance >= margin from the
    /// sub-box boundary ring.
    pub fn delta_interior(&self, i: usize) -> Result<Vec<Point>> {
        let sb = self.sub_box(i)?;
        let m = self.delta_margin() as i64;
        let s = sb.side() as i64;
        let (ox, oy) = sb.origin();
        let mut out = Vec::new();
        for y in m..s - m {
            for x in m..s - m {
                out.push((ox + x, oy + y));
            }
        }
        Ok(out)
    }

    pub fn in_delta_interior(&self, p: Point) -> bool {
        let Some(i) = self.sub_box_index_of(p) else {
            return false;
        };
        let sb = self.sub_box(i).expect("index valid");
        let m = self.delta_margin() as i64;
        let s = sb.side() as i64;
        let (x, y) = (p.0 - sb.origin().0, p.1 - sb.origin().1);
        x >= m && y >= m && x < s - m && y < s - m
    }

    /// Union of all delta-interiors.
    pub fn delta_interior_all(&self) -> Vec<Point> {
        (0..self.sub_box_count())
            .flat_map(|i| self.delta_interior(i).expect("index valid"))
            .collect()
    }
}

/// A dyadic box of side `2^level` with the given lower-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DyadicBox {
    pub level: u32,
    pub corner: Point,
}

impl DyadicBox {
    pub fn side(&self) -> i64 {
        1i64 << self.level
    }

    pub fn contains(&self, p: Point) -> bool {
        let s = self.side();
        p.0 >= self.corner.0
            && p.0 < self.corner.0 + s
            && p.1 >= self.corner.1
            && p.1 < self.corner.1 + s
    }
}

/// All `2^(2j)` level-`j` boxes containing `v` (corners anywhere in Z^2).
pub fn dyadic_boxes_containing(v: Point, level: u32, n_side: usize) -> Result<Vec<DyadicBox>> {
    let n = BoxSpec::new(n_side)?.level()?;
    if level > n {
        return Err(DgffError::Domain(format!(
            "level {level} exceeds n = {n} for side {n_side}"
        )));
    }
    let s = 1i64 << level;
    let mut out = Vec::with_capacity((s * s) as usize);
    for dy in 0..s {
        for dx in 0..s {
            out.push(DyadicBox {
                level,
                corner: (v.0 - dx, v.1 - dy),
            });
        }
    }
    Ok(out)
}

/// The unique grid-aligned level-`j` box containing `v`.
pub fn aligned_dyadic_box(v: Point, level: u32) -> DyadicBox {
    let s = 1i64 << level;
    DyadicBox {
        level,
        corner: (v.0.div_euclid(s) * s, v.1.div_euclid(s) * s),
    }
}

/// Signed displacement folded per axis to `[0, N)`.
#[inline]
pub fn torus_displacement(d: i64, n_side: usize) -> u64 {
    d.rem_euclid(n_side as i64) as u64
}

/// Euclidean distance on the side-`N` torus: the minimum over all
/// translates by `(i N, j N)`.
pub fn torus_distance(u: Point, v: Point, n_side: usize) -> f64 {
    let n = n_side as i64;
    let fold = |d: i64| -> f64 {
        let r = d.rem_euclid(n);
        r.min(n - r) as f64
    };
    let dx = fold(u.0 - v.0);
    let dy = fold(u.1 - v.1);
    (dx * dx + dy * dy).sqrt()
}
