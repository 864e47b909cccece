//! Polygons, boundary distance, and the Whitney decomposition.
//!
//! Polygons are simple, counterclockwise, with interior angle factors
//! alpha_k in (0,2) \ {1} summing to n-2. The Whitney decomposition used
//! everywhere downstream consists of the maximal dyadic squares S (anchored
//! to the bounding box) satisfying
//!
//!   sqrt(2) * side <= dist(S, boundary) <= 4 * sqrt(2) * side,
//!
//! which makes the squares pairwise disjoint, comparable in size to their
//! boundary distance, and reproducible by a brute-force sieve over all dyadic
//! squares applying the same predicate.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Angle factors closer to 1 than this are rejected as collinear vertices.
const COLLINEAR_TOL: f64 = 1e-9;

/// Default cap on the number of squares a decomposition may produce.
pub const DEFAULT_SQUARE_CAP: usize = 1 << 20;

// ---------------------------------------------------------------------------
// Polygon
// ---------------------------------------------------------------------------

/// A simple counterclockwise polygon with validated angle factors.
#[derive(Clone, Debug)]
pub struct Polygon {
    vertices: Vec<Complex64>,
    angle_factors: Vec<f64>,
    diameter: f64,
    bbox_min: Complex64,
    bbox_max: Complex64,
}

#[derive(Serialize, Deserialize)]
struct PolygonDto {
    vertices: Vec<[f64; 2]>,
}

impl Polygon {
    pub fn new(vertices: Vec<Complex64>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::Geometry(format!(
                "need at least 3 vertices, got {n}"
            )));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::Geometry(format!("vertex {i} is not finite")));
            }
        }
        for i in 0..n {
            if (vertices[i] - vertices[(i + 1) % n]).norm() == 0.0 {
                return Err(Error::Geometry(format!("repeated vertex at index {i}")));
            }
        }
        if signed_area(&vertices) <= 0.0 {
            return Err(Error::Geometry(
                "vertices must be in counterclockwise order".into(),
            ));
        }
        if !is_simple(&vertices) {
            return Err(Error::Geometry("boundary is self-intersecting".into()));
        }
        let angle_factors = angle_factors_of(&vertices)?;
        let mut diameter: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                diameter = diameter.max((vertices[i] - vertices[j]).norm());
            }
        }
        let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in &vertices {
            xmin = xmin.min(v.re);
            xmax = xmax.max(v.re);
            ymin = ymin.min(v.im);
            ymax = ymax.max(v.im);
        }
        Ok(Self {
            vertices,
            angle_factors,
            diameter,
            bbox_min: Complex64::new(xmin, ymin),
            bbox_max: Complex64::new(xmax, ymax),
        })
    }

    /// Parses `{"vertices": [[x, y], ...]}`.
    pub fn from_json(s: &str) -> Result<Self> {
        let dto: PolygonDto =
            serde_json::from_str(s).map_err(|e| Error::Config(format!("polygon JSON: {e}")))?;
        Self::new(
            dto.vertices
                .into_iter()
                .map(|[x, y]| Complex64::new(x, y))
                .collect(),
        )
    }

    pub fn to_json(&self) -> String {
        let dto = PolygonDto {
            vertices: self.vertices.iter().map(|v| [v.re, v.im]).collect(),
        };
        serde_json::to_string(&dto).expect("polygon serialization cannot fail")
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn vertices(&self) -> &[Complex64] {
        &self.vertices
    }

    pub fn angle_factors(&self) -> &[f64] {
        &self.angle_factors
    }

    pub fn alpha_max(&self) -> f64 {
        self.angle_factors[self.alpha_max_index()]
    }

    /// Index of the vertex with the largest angle factor (first on ties).
    pub fn alpha_max_index(&self) -> usize {
        let mut best = 0;
        for (i, &a) in self.angle_factors.iter().enumerate() {
            if a > self.angle_factors[best] {
                best = i;
            }
        }
        best
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn bounding_box(&self) -> (Complex64, Complex64) {
        (self.bbox_min, self.bbox_max)
    }

    pub fn edges(&self) -> impl Iterator<Item = (Complex64, Complex64)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Even-odd crossing test; points on the boundary count as inside.
    pub fn contains(&self, w: Complex64) -> bool {
        if self.dist_to_boundary(w) == 0.0 {
            return true;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.im > w.im) != (b.im > w.im) {
                let x_cross = a.re + (w.im - a.im) / (b.im - a.im) * (b.re - a.re);
                if w.re < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// v(w) = dist(w, boundary): exact minimum over the edge segments.
    /// Defined for every planar point; zero exactly on the boundary.
    pub fn dist_to_boundary(&self, w: Complex64) -> f64 {
        let mut d = f64::INFINITY;
        for (a, b) in self.edges() {
            d = d.min(dist_point_segment(w, a, b));
        }
        d
    }

    /// Distance from the segment a -> b to the boundary; zero iff the
    /// segment meets an edge.
    pub fn dist_segment_boundary(&self, a: Complex64, b: Complex64) -> f64 {
        let mut d = f64::INFINITY;
        for (ea, eb) in self.edges() {
            d = d.min(dist_segment_segment(a, b, ea, eb));
            if d == 0.0 {
                return 0.0;
            }
        }
        d
    }

    /// Whether the open segment between two interior points stays strictly
    /// inside the domain.
    pub fn segment_in_interior(&self, a: Complex64, b: Complex64) -> bool {
        self.contains(0.5 * (a + b)) && self.dist_segment_boundary(a, b) > 0.0
    }
}

/// Interior angle factors alpha_k of a validated polygon.
pub fn interior_angles(polygon: &Polygon) -> &[f64] {
    polygon.angle_factors()
}

fn angle_factors_of(vertices: &[Complex64]) -> Result<Vec<f64>> {
    let n = vertices.len();
    let mut alphas = Vec::with_capacity(n);
    for k in 0..n {
        let prev = vertices[(k + n - 1) % n];
        let cur = vertices[k];
        let next = vertices[(k + 1) % n];
        // interior angle between the edges cur->next and cur->prev,
        // measured inside a counterclockwise polygon
        let ratio = (prev - cur) / (next - cur);
        let mut angle = ratio.arg();
        if angle <= 0.0 {
            angle += 2.0 * std::f64::consts::PI;
        }
        let alpha = angle / std::f64::consts::PI;
        if (alpha - 1.0).abs() < COLLINEAR_TOL {
            return Err(Error::Geometry(format!(
                "vertex {k} is collinear with its neighbors (angle factor {alpha})"
            )));
        }
        alphas.push(alpha);
    }
    let sum: f64 = alphas.iter().sum();
    let expect = n as f64 - 2.0;
    debug_assert!(
        (sum - expect).abs() <= 1e-9 * (n as f64),
        "angle factors sum to {sum}, expected {expect}"
    );
    Ok(alphas)
}

fn signed_area(vertices: &[Complex64]) -> f64 {
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        acc += a.re * b.im - b.re * a.im;
    }
    0.5 * acc
}

fn is_simple(vertices: &[Complex64]) -> bool {
    let n = vertices.len();
    for i in 0..n {
        let (a1, b1) = (vertices[i], vertices[(i + 1) % n]);
        for j in i + 1..n {
            let (a2, b2) = (vertices[j], vertices[(j + 1) % n]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // adjacent edges may only meet at their shared vertex; any
                // further contact (an endpoint other than the shared vertex
                // lying on the other edge) means collinear back-tracking
                let shared = if j == i + 1 { b1 } else { a1 };
                for (pt, (sa, sb)) in [
                    (a1, (a2, b2)),
                    (b1, (a2, b2)),
                    (a2, (a1, b1)),
                    (b2, (a1, b1)),
                ] {
                    if (pt - shared).norm() > 0.0 && dist_point_segment(pt, sa, sb) == 0.0 {
                        return false;
                    }
                }
            } else if segments_intersect(a1, b1, a2, b2) {
                return false;
            }
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Segment primitives
// ---------------------------------------------------------------------------

fn orient(a: Complex64, b: Complex64, c: Complex64) -> f64 {
    (b.re - a.re) * (c.im - a.im) - (b.im - a.im) * (c.re - a.re)
}

fn on_segment_collinear(a: Complex64, b: Complex64, p: Complex64) -> bool {
    p.re >= a.re.min(b.re)
        && p.re <= a.re.max(b.re)
        && p.im >= a.im.min(b.im)
        && p.im <= a.im.max(b.im)
}

/// Closed-segment intersection test (touching counts).
pub fn segments_intersect(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    (o1 == 0.0 && on_segment_collinear(a, b, c))
        || (o2 == 0.0 && on_segment_collinear(a, b, d))
        || (o3 == 0.0 && on_segment_collinear(c, d, a))
        || (o4 == 0.0 && on_segment_collinear(c, d, b))
}

/// Distance from a point to a closed segment.
pub fn dist_point_segment(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p.re - a.re) * ab.re + (p.im - a.im) * ab.im) / len2;
    let t = t.clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn dist_segment_segment(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    dist_point_segment(a, c, d)
        .min(dist_point_segment(b, c, d))
        .min(dist_point_segment(c, a, b))
        .min(dist_point_segment(d, a, b))
}

// ---------------------------------------------------------------------------
// Squares
// ---------------------------------------------------------------------------

/// Axis-aligned square S(anchor, side): [u, u+side] x [v, v+side].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Square {
    pub anchor: Complex64,
    pub side: f64,
}

impl Square {
    pub fn new(anchor: Complex64, side: f64) -> Self {
        Self { anchor, side }
    }

    /// Far corner u + side + i(v + side).
    pub fn corner(&self) -> Complex64 {
        self.anchor + Complex64::new(self.side, self.side)
    }

    pub fn center(&self) -> Complex64 {
        self.anchor + Complex64::new(0.5 * self.side, 0.5 * self.side)
    }

    /// Plain planar measure |S| = side^2 (deliberately unnormalized; symbol
    /// averages divide by this).
    pub fn area(&self) -> f64 {
        self.side * self.side
    }

    pub fn diam(&self) -> f64 {
        self.side * SQRT2
    }

    /// Closed containment.
    pub fn contains(&self, p: Complex64) -> bool {
        p.re >= self.anchor.re
            && p.re <= self.anchor.re + self.side
            && p.im >= self.anchor.im
            && p.im <= self.anchor.im + self.side
    }

    pub fn corners(&self) -> [Complex64; 4] {
        let a = self.anchor;
        let s = self.side;
        [
            a,
            a + Complex64::new(s, 0.0),
            a + Complex64::new(s, s),
            a + Complex64::new(0.0, s),
        ]
    }

    fn sides(&self) -> [(Complex64, Complex64); 4] {
        let c = self.corners();
        [(c[0], c[1]), (c[1], c[2]), (c[2], c[3]), (c[3], c[0])]
    }

    /// Open-interior overlap test (shared edges do not count).
    pub fn intersects_interior(&self, other: &Square) -> bool {
        let (a0, a1) = (self.anchor, self.corner());
        let (b0, b1) = (other.anchor, other.corner());
        a0.re < b1.re && b0.re < a1.re && a0.im < b1.im && b0.im < a1.im
    }
}

/// Distance from the square (as a closed region) to a segment.
fn dist_square_segment(sq: &Square, a: Complex64, b: Complex64) -> f64 {
    if sq.contains(a) || sq.contains(b) {
        return 0.0;
    }
    let mut d = f64::INFINITY;
    for (sa, sb) in sq.sides() {
        d = d.min(dist_segment_segment(sa, sb, a, b));
        if d == 0.0 {
            return 0.0;
        }
    }
    d
}

/// dist(S, boundary of the polygon): exact minimum over edges; zero iff the
/// boundary meets the closed square.
pub fn dist_square_boundary(sq: &Square, polygon: &Polygon) -> f64 {
    let mut d = f64::INFINITY;
    for (a, b) in polygon.edges() {
        d = d.min(dist_square_segment(sq, a, b));
        if d == 0.0 {
            return 0.0;
        }
    }
    d
}

/// The slightly larger concentric-ish square used for overlap estimates:
/// side 11/10 * side, anchor shifted by -side/20 in both axes.
pub fn enlarge(square: &Square) -> Square {
    Square {
        anchor: square.anchor - Complex64::new(square.side / 20.0, square.side / 20.0),
        side: square.side * (11.0 / 10.0),
    }
}

// ---------------------------------------------------------------------------
// Whitney decomposition
// ---------------------------------------------------------------------------

/// A decomposition square with its dyadic generation (level 0 spans the
/// bounding box).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WhitneySquare {
    pub square: Square,
    pub level: u32,
}

/// Maximal dyadic squares accepted by the Whitney predicate, sorted
/// level-major then lexicographically by anchor (re, then im).
#[derive(Clone, Debug)]
pub struct WhitneyDecomposition {
    pub squares: Vec<WhitneySquare>,
    /// Side of the level-0 root square (max bounding-box side).
    pub base: f64,
    /// Anchor of the level-0 root square (bounding-box minimum).
    pub origin: Complex64,
    pub max_level: u32,
}

#[derive(Serialize, Deserialize)]
struct WhitneySquareDto {
    anchor: [f64; 2],
    side: f64,
    level: u32,
}

impl WhitneyDecomposition {
    pub fn len(&self) -> usize {
        self.squares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.squares.is_empty()
    }

    pub fn enlargements(&self) -> impl Iterator<Item = Square> + '_ {
        self.squares.iter().map(|ws| enlarge(&ws.square))
    }

    /// Uncovered boundary collar: every interior point with
    /// dist(w, boundary) >= collar lies in some accepted square.
    /// (Walk the dyadic ancestor chain of the level-max_level square
    /// containing w: its boundary distance is at least
    /// v(w) - sqrt(2) * side, so the lower Whitney bound holds at the finest
    /// level once v(w) >= 2 sqrt(2) * side, and the first coarser level
    /// where the lower bound fails forces the upper bound one level below.)
    pub fn collar(&self) -> f64 {
        2.0 * SQRT2 * self.base * 2f64.powi(-(self.max_level as i32))
    }

    pub fn to_json(&self) -> String {
        let dtos: Vec<WhitneySquareDto> = self
            .squares
            .iter()
            .map(|ws| WhitneySquareDto {
                anchor: [ws.square.anchor.re, ws.square.anchor.im],
                side: ws.square.side,
                level: ws.level,
            })
            .collect();
        serde_json::to_string(&dtos).expect("decomposition serialization cannot fail")
    }
}

/// Whitney acceptance predicate for a dyadic square: contained in the domain
/// with sqrt(2) * side <= dist(S, boundary) <= 4 sqrt(2) * side. Containment
/// follows from a positive boundary distance plus an interior center.
pub(crate) fn whitney_eligible(sq: &Square, polygon: &Polygon) -> bool {
    let d = dist_square_boundary(sq, polygon);
    d >= SQRT2 * sq.side && d <= 4.0 * SQRT2 * sq.side && polygon.contains(sq.center())
}

/// Whether a dyadic square can be discarded without descending: entirely
/// outside the closed domain.
fn entirely_outside(sq: &Square, polygon: &Polygon) -> bool {
    dist_square_boundary(sq, polygon) > 0.0 && !polygon.contains(sq.center())
}

pub fn whitney_decompose(polygon: &Polygon, max_level: u32) -> Result<WhitneyDecomposition> {
    whitney_decompose_capped(polygon, max_level, DEFAULT_SQUARE_CAP)
}

pub fn whitney_decompose_capped(
    polygon: &Polygon,
    max_level: u32,
    cap: usize,
) -> Result<WhitneyDecomposition> {
    if max_level < 1 {
        return Err(Error::Config("max_level must be >= 1".into()));
    }
    let (lo, hi) = polygon.bounding_box();
    let base = (hi.re - lo.re).max(hi.im - lo.im);
    let root = Square {
        anchor: lo,
        side: base,
    };
    let mut accepted = Vec::new();
    descend(polygon, &root, 0, max_level, cap, &mut accepted)?;
    accepted.sort_by(|a, b| {
        a.level
            .cmp(&b.level)
            .then(a.square.anchor.re.total_cmp(&b.square.anchor.re))
            .then(a.square.anchor.im.total_cmp(&b.square.anchor.im))
    });
    Ok(WhitneyDecomposition {
        squares: accepted,
        base,
        origin: lo,
        max_level,
    })
}

fn descend(
    polygon: &Polygon,
    sq: &Square,
    level: u32,
    max_level: u32,
    cap: usize,
    out: &mut Vec<WhitneySquare>,
) -> Result<()> {
    if whitney_eligible(sq, polygon) {
        if out.len() >= cap {
            return Err(Error::Capacity(format!(
                "decomposition exceeds {cap} squares; lower max_level or raise the cap"
            )));
        }
        out.push(WhitneySquare { square: *sq, level });
        return Ok(()); // maximality: never descend into an accepted square
    }
    if level == max_level || entirely_outside(sq, polygon) {
        return Ok(());
    }
    let h = 0.5 * sq.side;
    for (dx, dy) in [(0.0, 0.0), (h, 0.0), (0.0, h), (h, h)] {
        let child = Square {
            anchor: sq.anchor + Complex64::new(dx, dy),
            side: h,
        };
        descend(polygon, &child, level + 1, max_level, cap, out)?;
    }
    Ok(())
}

/// Maximum number of enlarged squares covering any of `samples` uniformly
/// drawn interior points (seeded). Returns (max_count, flagged) where the
/// flag marks counts in (100, 144] for review; counts above 144 violate the
/// decomposition's overlap bound.
pub fn max_enlargement_overlap(
    decomp: &WhitneyDecomposition,
    polygon: &Polygon,
    samples: usize,
    seed: u64,
) -> (usize, bool) {
    use std::collections::HashMap;
    // bucket enlargements by the dyadic index of their parent square
    let mut by_level: HashMap<u32, HashMap<(i64, i64), Square>> = HashMap::new();
    for ws in &decomp.squares {
        let side = ws.square.side;
        let ix = ((ws.square.anchor.re - decomp.origin.re) / side).round() as i64;
        let iy = ((ws.square.anchor.im - decomp.origin.im) / side).round() as i64;
        by_level
            .entry(ws.level)
            .or_default()
            .insert((ix, iy), enlarge(&ws.square));
    }
    let (lo, hi) = polygon.bounding_box();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut max_count = 0usize;
    let mut drawn = 0usize;
    while drawn < samples {
        let p = Complex64::new(
            rng.random_range(lo.re..hi.re),
            rng.random_range(lo.im..hi.im),
        );
        if !polygon.contains(p) {
            continue;
        }
        drawn += 1;
        let mut count = 0usize;
        for (&level, buckets) in &by_level {
            let side = decomp.base * 2f64.powi(-(level as i32));
            let ix = ((p.re - decomp.origin.re) / side).floor() as i64;
            let iy = ((p.im - decomp.origin.im) / side).floor() as i64;
            // enlargements only spill side/20 beyond the parent square, so
            // the 3x3 dyadic neighborhood is exhaustive
            for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(e) = buckets.get(&(ix + dx, iy + dy)) {
                        if e.contains(p) {
                            count += 1;
                        }
                    }
                }
            }
        }
        max_count = max_count.max(count);
    }
    (max_count, max_count > 100 && max_count <= 144)
}
