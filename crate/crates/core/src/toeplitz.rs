//! Toeplitz operators with locally integrable symbols, applied through the
//! Whitney decomposition of the domain.
//!
//! The operator `T_a f(z) = int_Omega a f conj(h_z) dA` is evaluated square by
//! square: each Whitney square contributes one term, partial sums accumulate
//! in the decomposition's level-major order, and convergence or divergence is
//! read off the per-level checkpoints. The boundedness side of the story is
//! probed by averaged-symbol checks: the hat average of `a` over sub-boxes of
//! Whitney squares must stay uniformly bounded as the squares shrink toward
//! the boundary, optionally after division by a boundary weight concentrated
//! at one vertex.
//!
//! All area integrals here use the normalized measure dA = dxdy / pi except
//! the box integrals behind hat averages, which the averaging definition
//! wants unnormalized.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::bergman::{ErrorSlot, KernelContext, kernel_from_jets};
use crate::error::{Error, Result};
use crate::geometry::{Polygon, Square, WhitneyDecomposition, whitney_decompose, whitney_eligible};
use crate::quadrature::{QuadratureSpec, integrate_rect_plain, integrate_segment, integrate_square};
use crate::scmap::{ConformalMap, MapJet};

/// Two consecutive level-to-level growth factors at or above this ratio make
/// the averaged-symbol check fail outright.
pub const CONDITION_FAIL_RATIO: f64 = 1.5;

/// Slack on top of ratio 1 below which the per-level maxima count as
/// non-increasing; between the slack and the fail ratio the verdict is
/// inconclusive.
pub const CONDITION_TREND_SLACK: f64 = 0.05;

type FieldFn = dyn Fn(Complex64) -> Result<Complex64> + Send + Sync;
type BoxFn = dyn Fn(f64, f64, f64, f64) -> Complex64 + Send + Sync;

/// A symbol on the polygonal domain: a pointwise evaluator plus two optional
/// accelerators. `exact_box` gives closed-form axis-aligned box integrals
/// (unnormalized dxdy) and makes hat averages and the decomposition identity
/// cheap; `disk_form` gives `a(psi(w))` directly in disk coordinates and lets
/// norm experiments avoid inverse-map solves entirely.
#[derive(Clone)]
pub struct Symbol {
    descriptor: String,
    eval: Arc<FieldFn>,
    disk_form: Option<Arc<FieldFn>>,
    exact_box: Option<Arc<BoxFn>>,
}

impl Symbol {
    /// Symbol from a bare evaluator; no exact boxes, no disk form.
    pub fn from_fn<F>(descriptor: impl Into<String>, eval: F) -> Self
    where
        F: Fn(Complex64) -> Result<Complex64> + Send + Sync + 'static,
    {
        Self {
            descriptor: descriptor.into(),
            eval: Arc::new(eval),
            disk_form: None,
            exact_box: None,
        }
    }

    /// The constant symbol `a = c`.
    pub fn constant(c: Complex64) -> Self {
        let descriptor = json!({"kind": "constant", "params": {"re": c.re, "im": c.im}});
        Self {
            descriptor: descriptor.to_string(),
            eval: Arc::new(move |_| Ok(c)),
            disk_form: Some(Arc::new(move |_| Ok(c))),
            exact_box: Some(Arc::new(move |x0, x1, y0, y1| c * ((x1 - x0) * (y1 - y0)))),
        }
    }

    /// The affine symbol `a(x + iy) = cx * x + cy * y + c0`, with exact box
    /// integrals.
    pub fn linear(cx: f64, cy: f64, c0: Complex64) -> Self {
        let descriptor = json!({
            "kind": "linear",
            "params": {"cx": cx, "cy": cy, "c0_re": c0.re, "c0_im": c0.im},
        });
        Self {
            descriptor: descriptor.to_string(),
            eval: Arc::new(move |w| Ok(Complex64::new(cx * w.re + cy * w.im, 0.0) + c0)),
            disk_form: None,
            exact_box: Some(Arc::new(move |x0, x1, y0, y1| {
                let dx = x1 - x0;
                let dy = y1 - y0;
                let moment = 0.5 * cx * (x1 * x1 - x0 * x0) * dy
                    + 0.5 * cy * (y1 * y1 - y0 * y0) * dx;
                c0 * (dx * dy) + Complex64::new(moment, 0.0)
            })),
        }
    }

    /// The unbounded model symbol `a(w) = 1 / dist(w, boundary)`, whose hat
    /// averages double per Whitney level.
    pub fn inv_boundary_dist(polygon: Polygon) -> Self {
        let descriptor = json!({"kind": "inv_boundary_dist", "params": {}});
        Self {
            descriptor: descriptor.to_string(),
            eval: Arc::new(move |w| {
                let d = polygon.dist_to_boundary(w);
                if d <= 0.0 {
                    return Err(Error::Numerical(format!(
                        "1/dist symbol evaluated on or outside the boundary at ({:.6}, {:.6})",
                        w.re, w.im
                    )));
                }
                Ok(Complex64::new(1.0 / d, 0.0))
            }),
            disk_form: None,
            exact_box: None,
        }
    }

    /// The vertex-concentrated power `a(xi) = |1 - conj(z_m) phi(xi)|^t`
    /// where `z_m` is the prevertex of the given vertex. Decays (t > 0) or
    /// blows up (t < 0) exactly at that vertex; taking the modulus keeps the
    /// symbol genuinely non-analytic, so the projection in `T_a` has real
    /// work to do.
    pub fn corner_power(map: Arc<ConformalMap>, vertex: usize, t: f64) -> Result<Self> {
        let n = map.polygon().vertices().len();
        if vertex >= n {
            return Err(Error::Config(format!(
                "corner_power vertex {vertex} out of range for a {n}-gon"
            )));
        }
        let zm = map.prevertex_points()[vertex];
        let descriptor = json!({"kind": "corner_power", "params": {"vertex": vertex, "t": t}});
        let eval_map = Arc::clone(&map);
        Ok(Self {
            descriptor: descriptor.to_string(),
            eval: Arc::new(move |xi| {
                let z = eval_map.phi(xi)?;
                let den = (Complex64::new(1.0, 0.0) - zm.conj() * z).norm();
                Ok(Complex64::new(den.powf(t), 0.0))
            }),
            disk_form: Some(Arc::new(move |w| {
                let den = (Complex64::new(1.0, 0.0) - zm.conj() * w).norm();
                Ok(Complex64::new(den.powf(t), 0.0))
            })),
            exact_box: None,
        })
    }

    /// The two-term projection symbol
    /// `a = (phi')^{1 - 2/p} (1 - |phi|^2) (1 + |phi|^2 - 2 phi)`,
    /// whose disk form is `(psi')^{2/p - 1} (1 - |w|^2) (1 + |w|^2 - 2w)`.
    pub fn example_53(map: Arc<ConformalMap>, p: f64) -> Result<Self> {
        if !(p > 1.0) {
            return Err(Error::Config(format!(
                "two-term projection symbol needs p > 1, got {p}"
            )));
        }
        let descriptor = json!({"kind": "example_53", "params": {"p": p}});
        let eval_map = Arc::clone(&map);
        let disk_map = Arc::clone(&map);
        Ok(Self {
            descriptor: descriptor.to_string(),
            eval: Arc::new(move |xi| {
                let jet = eval_map.phi_derivatives(xi)?;
                let z = jet.z;
                let r2 = z.norm_sqr();
                Ok(jet.d1.powf(1.0 - 2.0 / p)
                    * (1.0 - r2)
                    * (Complex64::new(1.0 + r2, 0.0) - 2.0 * z))
            }),
            disk_form: Some(Arc::new(move |w| {
                let r2 = w.norm_sqr();
                Ok(disk_map.psi_prime(w).powf(2.0 / p - 1.0)
                    * (1.0 - r2)
                    * (Complex64::new(1.0 + r2, 0.0) - 2.0 * w))
            })),
            exact_box: None,
        })
    }

    /// The oscillating radial symbol
    /// `a = (phi')^{1 - 2/p} (1 - |phi|^2) (phi/|phi| - |phi|)^m`,
    /// disk form `(psi')^{2/p - 1} (1 - |w|^2) (w/|w| - |w|)^m`, set to zero
    /// at the center where the angular factor has no limit.
    pub fn example_54(map: Arc<ConformalMap>, p: f64, m: u32) -> Result<Self> {
        if !(p > 1.0) {
            return Err(Error::Config(format!(
                "oscillating radial symbol needs p > 1, got {p}"
            )));
        }
        if m == 0 {
            return Err(Error::Config(
                "oscillating radial symbol needs a positive power m".into(),
            ));
        }
        let descriptor = json!({"kind": "example_54", "params": {"p": p, "m": m}});
        let eval_map = Arc::clone(&map);
        let disk_map = Arc::clone(&map);
        let radial = move |w: Complex64| -> Complex64 {
            let r = w.norm();
            if r == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            (w / r - r).powu(m)
        };
        Ok(Self {
            descriptor: descriptor.to_string(),
            eval: Arc::new(move |xi| {
                let jet = eval_map.phi_derivatives(xi)?;
                let ang = radial(jet.z);
                if ang == Complex64::new(0.0, 0.0) && jet.z.norm() == 0.0 {
                    return Ok(Complex64::new(0.0, 0.0));
                }
                Ok(jet.d1.powf(1.0 - 2.0 / p) * (1.0 - jet.z.norm_sqr()) * ang)
            }),
            disk_form: Some(Arc::new(move |w| {
                if w.norm() == 0.0 {
                    return Ok(Complex64::new(0.0, 0.0));
                }
                Ok(disk_map.psi_prime(w).powf(2.0 / p - 1.0) * (1.0 - w.norm_sqr()) * radial(w))
            })),
            exact_box: None,
        })
    }

    /// The symbol `factor * a`, preserving exact boxes and the disk form.
    pub fn scaled(&self, factor: Complex64) -> Self {
        let descriptor = json!({
            "kind": "scaled",
            "params": {"re": factor.re, "im": factor.im},
            "inner": serde_json::from_str::<serde_json::Value>(&self.descriptor)
                .unwrap_or_else(|_| json!(self.descriptor)),
        });
        let eval = Arc::clone(&self.eval);
        let disk_form = self.disk_form.as_ref().map(|f| {
            let f = Arc::clone(f);
            Arc::new(move |w: Complex64| f(w).map(|v| factor * v)) as Arc<FieldFn>
        });
        let exact_box = self.exact_box.as_ref().map(|f| {
            let f = Arc::clone(f);
            Arc::new(move |x0: f64, x1: f64, y0: f64, y1: f64| factor * f(x0, x1, y0, y1))
                as Arc<BoxFn>
        });
        Self {
            descriptor: descriptor.to_string(),
            eval: Arc::new(move |w| eval(w).map(|v| factor * v)),
            disk_form,
            exact_box,
        }
    }

    /// Builds a symbol from its JSON descriptor `{"kind": ..., "params": ...}`.
    /// Kinds tied to the conformal structure (`corner_power`, `example_53`,
    /// `example_54`) need the solved map.
    pub fn from_descriptor(
        descriptor: &serde_json::Value,
        polygon: &Polygon,
        map: Option<&Arc<ConformalMap>>,
    ) -> Result<Symbol> {
        let kind = descriptor["kind"].as_str().ok_or_else(|| {
            Error::Config("symbol descriptor needs a string field 'kind'".into())
        })?;
        let params = &descriptor["params"];
        let need_map = || {
            map.cloned().ok_or_else(|| {
                Error::Config(format!("symbol kind '{kind}' requires a solved conformal map"))
            })
        };
        let num = |name: &str| {
            params[name].as_f64().ok_or_else(|| {
                Error::Config(format!("symbol kind '{kind}' needs a numeric parameter '{name}'"))
            })
        };
        match kind {
            "constant" => {
                let re = num("re")?;
                let im = params["im"].as_f64().unwrap_or(0.0);
                Ok(Symbol::constant(Complex64::new(re, im)))
            }
            "linear" => {
                let cx = params["cx"].as_f64().unwrap_or(0.0);
                let cy = params["cy"].as_f64().unwrap_or(0.0);
                let c0 = Complex64::new(
                    params["c0_re"].as_f64().unwrap_or(0.0),
                    params["c0_im"].as_f64().unwrap_or(0.0),
                );
                Ok(Symbol::linear(cx, cy, c0))
            }
            "inv_boundary_dist" => Ok(Symbol::inv_boundary_dist(polygon.clone())),
            "corner_power" => {
                let vertex = params["vertex"].as_u64().ok_or_else(|| {
                    Error::Config("corner_power needs an integer parameter 'vertex'".into())
                })? as usize;
                Symbol::corner_power(need_map()?, vertex, num("t")?)
            }
            "example_53" => Symbol::example_53(need_map()?, num("p")?),
            "example_54" => {
                let m = params["m"].as_u64().ok_or_else(|| {
                    Error::Config("example_54 needs an integer parameter 'm'".into())
                })? as u32;
                Symbol::example_54(need_map()?, num("p")?, m)
            }
            other => Err(Error::Config(format!(
                "unknown symbol kind '{other}' (expected constant, linear, inv_boundary_dist, \
                 corner_power, example_53, or example_54)"
            ))),
        }
    }

    /// JSON descriptor string recorded in reports.
    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    pub fn eval(&self, w: Complex64) -> Result<Complex64> {
        (self.eval)(w)
    }

    pub fn has_disk_form(&self) -> bool {
        self.disk_form.is_some()
    }

    pub fn has_exact_box(&self) -> bool {
        self.exact_box.is_some()
    }

    /// Evaluates `a(psi(w))` through the stored disk form.
    pub fn disk_eval(&self, w: Complex64) -> Result<Complex64> {
        match &self.disk_form {
            Some(f) => f(w),
            None => Err(Error::Config(format!(
                "symbol {} has no disk form",
                self.descriptor
            ))),
        }
    }

    /// Unnormalized `int a dxdy` over the axis-aligned box
    /// `[x0, x1] x [y0, y1]`: closed form when available, adaptive tensor
    /// quadrature otherwise. Degenerate boxes integrate to zero.
    pub fn box_integral(
        &self,
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        spec: &QuadratureSpec,
    ) -> Result<Complex64> {
        if x1 <= x0 || y1 <= y0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        if let Some(exact) = &self.exact_box {
            return Ok(exact(x0, x1, y0, y1));
        }
        let slot = ErrorSlot::new();
        let value = integrate_rect_plain(&|w| slot.absorb(self.eval(w)), x0, x1, y0, y1, spec);
        slot.finish(value)
    }
}

impl std::fmt::Debug for Symbol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Symbol")
            .field("descriptor", &self.descriptor)
            .field("disk_form", &self.disk_form.is_some())
            .field("exact_box", &self.exact_box.is_some())
            .finish()
    }
}

/// Average of `a` over the sub-box of `square` spanned from its anchor to
/// `z_prime`, divided by the full square area: with `S = S(anchor, rho)` and
/// `z'` in the closed square, this is
/// `(1 / rho^2) int_{[u, x'] x [v, y']} a dxdy`. `z'` on the anchor edges
/// gives zero; `z'` outside the closed square is an error.
pub fn hat_average(
    a: &Symbol,
    square: &Square,
    z_prime: Complex64,
    spec: &QuadratureSpec,
) -> Result<Complex64> {
    let u = square.anchor.re;
    let v = square.anchor.im;
    let rho = square.side;
    let tol = 1e-12 * rho.max(1.0);
    if z_prime.re < u - tol
        || z_prime.re > u + rho + tol
        || z_prime.im < v - tol
        || z_prime.im > v + rho + tol
    {
        return Err(Error::Config(format!(
            "hat average point ({:.6}, {:.6}) lies outside the closed square at ({:.6}, {:.6}), side {:.3e}",
            z_prime.re, z_prime.im, u, v, rho
        )));
    }
    let x1 = z_prime.re.clamp(u, u + rho);
    let y1 = z_prime.im.clamp(v, v + rho);
    Ok(a.box_integral(u, x1, v, y1, spec)? / (rho * rho))
}

/// Sampling plan for the averaged-symbol condition check.
#[derive(Clone, Copy, Debug, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ConditionSampling {
    /// Interior corner-point lattice per square side; the four square corners
    /// are always added on top of the `grid x grid` interior points.
    pub grid: usize,
    /// Jittered companion squares drawn per Whitney square; only those that
    /// still satisfy the Whitney admissibility predicate are kept.
    pub translates: usize,
    /// Midpoint cells per square side for the summed-area table behind the
    /// box integrals.
    pub resolution: usize,
    pub seed: u64,
}

impl Default for ConditionSampling {
    fn default() -> Self {
        Self {
            grid: 3,
            translates: 8,
            resolution: 32,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionVerdict {
    /// Per-level maxima are non-increasing up to the trend slack.
    Pass,
    /// Maxima grew by the fail ratio or more across three consecutive
    /// populated levels.
    Fail,
    /// Neither trend is clear at the sampled depth.
    Inconclusive,
}

/// Boundary weight attached to a condition report: hat averages were divided
/// by `|1 - conj(z_m) phi(z')|^t` at the given vertex.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConditionWeight {
    pub t: f64,
    pub vertex: usize,
}

/// Outcome of sampling hat averages across a Whitney decomposition.
#[derive(Clone, Debug, Serialize)]
pub struct SymbolConditionReport {
    pub descriptor: String,
    /// Largest sampled |hat a|, weighted when a weight is attached.
    pub sup_average: f64,
    /// Maximum per Whitney level, ascending.
    pub level_maxima: Vec<(u32, f64)>,
    /// Squares actually sampled, jittered translates included.
    pub squares_sampled: usize,
    pub points_sampled: usize,
    pub verdict: ConditionVerdict,
    pub weight: Option<ConditionWeight>,
}

/// Trend verdict from per-level maxima: ratios are taken between adjacent
/// populated levels; two consecutive ratios at or above the fail ratio fail,
/// all ratios within the slack of 1 pass, anything else is inconclusive.
fn condition_verdict(level_maxima: &[(u32, f64)]) -> ConditionVerdict {
    let mut ratios = Vec::new();
    for pair in level_maxima.windows(2) {
        if pair[0].1 > 0.0 {
            ratios.push(pair[1].1 / pair[0].1);
        }
    }
    if ratios
        .windows(2)
        .any(|r| r[0] >= CONDITION_FAIL_RATIO && r[1] >= CONDITION_FAIL_RATIO)
    {
        return ConditionVerdict::Fail;
    }
    if ratios.iter().all(|&r| r <= 1.0 + CONDITION_TREND_SLACK) {
        return ConditionVerdict::Pass;
    }
    ConditionVerdict::Inconclusive
}

/// Largest weighted hat average of `a` over sub-boxes of one square, sampled
/// at the four corners plus an interior lattice. A summed-area table of
/// midpoint cell values makes every sampled box integral O(1), so the cost
/// per square is `resolution^2` symbol evaluations regardless of how many
/// corner points are sampled.
fn square_sample_max(
    a: &Symbol,
    sq: &Square,
    sampling: &ConditionSampling,
    weight: Option<&(dyn Fn(Complex64) -> Result<f64> + Sync)>,
) -> Result<(f64, usize)> {
    let m = sampling.resolution.max(1);
    let h = sq.side / m as f64;
    let stride = m + 1;
    let mut cum = vec![Complex64::new(0.0, 0.0); stride * stride];
    for j in 0..m {
        for i in 0..m {
            let w = sq.anchor + Complex64::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            let idx = (j + 1) * stride + (i + 1);
            cum[idx] = a.eval(w)? + cum[idx - 1] + cum[idx - stride] - cum[idx - stride - 1];
        }
    }
    let mut lattice = BTreeSet::new();
    for &c in &[(0usize, 0usize), (m, 0), (0, m), (m, m)] {
        lattice.insert(c);
    }
    let g = sampling.grid;
    for k in 1..=g {
        for l in 1..=g {
            let ix = ((k * m) as f64 / (g + 1) as f64).round() as usize;
            let iy = ((l * m) as f64 / (g + 1) as f64).round() as usize;
            lattice.insert((ix.min(m), iy.min(m)));
        }
    }
    let inv_area = 1.0 / (sq.side * sq.side);
    let mut max = 0.0f64;
    for &(i, j) in &lattice {
        let hat = cum[j * stride + i] * (h * h) * inv_area;
        let mut value = hat.norm();
        if let Some(wf) = weight {
            let z_prime = sq.anchor + Complex64::new(i as f64 * h, j as f64 * h);
            value *= wf(z_prime)?;
        }
        max = max.max(value);
    }
    Ok((max, lattice.len()))
}

fn condition_scan(
    a: &Symbol,
    polygon: &Polygon,
    max_level: u32,
    sampling: &ConditionSampling,
    weight: Option<&(dyn Fn(Complex64) -> Result<f64> + Sync)>,
) -> Result<(Vec<(u32, f64)>, f64, usize, usize)> {
    let decomposition = whitney_decompose(polygon, max_level)?;
    let per_square: Vec<(u32, f64, usize, usize)> = decomposition
        .squares
        .par_iter()
        .enumerate()
        .map(|(idx, ws)| -> Result<(u32, f64, usize, usize)> {
            let mut rng = ChaCha8Rng::seed_from_u64(
                sampling.seed ^ (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            let mut squares = vec![ws.square];
            for _ in 0..sampling.translates {
                let dx = rng.random_range(-0.5..=0.5) * ws.square.side;
                let dy = rng.random_range(-0.5..=0.5) * ws.square.side;
                let candidate = Square::new(
                    ws.square.anchor + Complex64::new(dx, dy),
                    ws.square.side,
                );
                if whitney_eligible(&candidate, polygon) {
                    squares.push(candidate);
                }
            }
            let mut max = 0.0f64;
            let mut points = 0;
            for sq in &squares {
                let (sq_max, sq_points) = square_sample_max(a, sq, sampling, weight)?;
                max = max.max(sq_max);
                points += sq_points;
            }
            Ok((ws.level, max, squares.len(), points))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut level_maxima = BTreeMap::new();
    let mut squares_sampled = 0;
    let mut points_sampled = 0;
    for (level, max, squares, points) in per_square {
        let entry = level_maxima.entry(level).or_insert(0.0f64);
        *entry = entry.max(max);
        squares_sampled += squares;
        points_sampled += points;
    }
    let level_maxima: Vec<(u32, f64)> = level_maxima.into_iter().collect();
    let sup = level_maxima.iter().fold(0.0f64, |acc, &(_, v)| acc.max(v));
    Ok((level_maxima, sup, squares_sampled, points_sampled))
}

/// Samples hat averages of `a` over every Whitney square up to `max_level`
/// plus jittered admissible translates, and judges whether the per-level
/// maxima stay bounded. The averaged-symbol boundedness condition holds
/// exactly when this supremum is finite over all admissible squares, so a
/// clear growth trend is reported as failure.
pub fn check_symbol_condition(
    a: &Symbol,
    polygon: &Polygon,
    max_level: u32,
    sampling: &ConditionSampling,
) -> Result<SymbolConditionReport> {
    let (level_maxima, sup, squares, points) =
        condition_scan(a, polygon, max_level, sampling, None)?;
    Ok(SymbolConditionReport {
        descriptor: a.descriptor().to_string(),
        sup_average: sup,
        verdict: condition_verdict(&level_maxima),
        level_maxima,
        squares_sampled: squares,
        points_sampled: points,
        weight: None,
    })
}

/// Weighted variant: every sampled |hat a(z')| is divided by
/// `|1 - conj(z_m) phi(z')|^t` with `z_m` the prevertex of `vertex`, so a
/// symbol may blow up at that vertex exactly as fast as the weight allows and
/// still pass.
pub fn check_symbol_condition_weighted(
    a: &Symbol,
    map: &Arc<ConformalMap>,
    t: f64,
    vertex: usize,
    max_level: u32,
    sampling: &ConditionSampling,
) -> Result<SymbolConditionReport> {
    let n = map.polygon().vertices().len();
    if vertex >= n {
        return Err(Error::Config(format!(
            "weighted condition check vertex {vertex} out of range for a {n}-gon"
        )));
    }
    let zm = map.prevertex_points()[vertex];
    let weight_map = Arc::clone(map);
    let weight = move |z_prime: Complex64| -> Result<f64> {
        let z = weight_map.phi(z_prime)?;
        let den = (Complex64::new(1.0, 0.0) - zm.conj() * z).norm();
        if den <= 0.0 {
            return Err(Error::Numerical(format!(
                "boundary weight vanished at ({:.6}, {:.6})",
                z_prime.re, z_prime.im
            )));
        }
        Ok(den.powf(-t))
    };
    let (level_maxima, sup, squares, points) =
        condition_scan(a, map.polygon(), max_level, sampling, Some(&weight))?;
    Ok(SymbolConditionReport {
        descriptor: a.descriptor().to_string(),
        sup_average: sup,
        verdict: condition_verdict(&level_maxima),
        level_maxima,
        squares_sampled: squares,
        points_sampled: points,
        weight: Some(ConditionWeight { t, vertex }),
    })
}

/// One square's contribution `(1/pi) int_S a f conj(h_z) dxdy`.
fn square_term<F>(
    a: &Symbol,
    f: &F,
    ctx: &KernelContext,
    zjet: &MapJet,
    square: &Square,
    spec: &QuadratureSpec,
) -> Result<Complex64>
where
    F: Fn(Complex64) -> Result<Complex64> + Sync,
{
    let slot = ErrorSlot::new();
    let value = integrate_square(
        &|w| {
            let jet = match ctx.jet(w) {
                Ok(jet) => jet,
                Err(e) => return slot.absorb(Err(e)),
            };
            let aw = slot.absorb(a.eval(w));
            let fw = slot.absorb(f(w));
            aw * fw * kernel_from_jets(zjet, &jet)
        },
        square,
        spec,
    );
    slot.finish(value).map_err(|e| {
        Error::Numerical(format!(
            "Toeplitz term failed on the square at ({:.6}, {:.6}), side {:.3e}: {e}",
            square.anchor.re, square.anchor.im, square.side
        ))
    })
}

/// Partial sum over the first `count` squares in the decomposition's
/// level-major order. Terms are evaluated independently but accumulated
/// sequentially, so `partial(m) = partial(m-1) + F_m` holds to the last bit.
pub fn apply_partial<F>(
    a: &Symbol,
    f: &F,
    ctx: &KernelContext,
    decomposition: &WhitneyDecomposition,
    count: usize,
    z: Complex64,
    spec: &QuadratureSpec,
) -> Result<Complex64>
where
    F: Fn(Complex64) -> Result<Complex64> + Sync,
{
    if count > decomposition.squares.len() {
        return Err(Error::Config(format!(
            "partial sum over {count} squares requested, decomposition has {}",
            decomposition.squares.len()
        )));
    }
    let zjet = ctx.jet(z)?;
    let terms: Vec<Complex64> = decomposition.squares[..count]
        .par_iter()
        .map(|ws| square_term(a, f, ctx, &zjet, &ws.square, spec))
        .collect::<Result<Vec<_>>>()?;
    let mut value = Complex64::new(0.0, 0.0);
    for t in terms {
        value += t;
    }
    Ok(value)
}

/// A generalized Toeplitz application: per-square terms in decomposition
/// order, cumulative checkpoints after each Whitney level, and the
/// convergence bookkeeping read from them.
#[derive(Clone, Debug)]
pub struct ToeplitzApplication {
    pub z: Complex64,
    /// Terms for the squares actually evaluated, in decomposition order.
    pub square_values: Vec<Complex64>,
    pub square_levels: Vec<u32>,
    /// Cumulative value after finishing each evaluated level.
    pub level_values: Vec<(u32, Complex64)>,
    /// Increment sizes between level checkpoints; the first entry is the
    /// size of the first checkpoint itself.
    pub level_increments: Vec<f64>,
    /// Sum of |F_n| within each evaluated level, the absolute-convergence
    /// diagnostic.
    pub level_abs: Vec<(u32, f64)>,
    pub value: Complex64,
    pub converged: bool,
    pub tol: f64,
}

impl ToeplitzApplication {
    /// Sequential prefix sum over the first `count` evaluated squares.
    pub fn partial(&self, count: usize) -> Complex64 {
        let mut value = Complex64::new(0.0, 0.0);
        for t in &self.square_values[..count.min(self.square_values.len())] {
            value += t;
        }
        value
    }

    pub fn squares_evaluated(&self) -> usize {
        self.square_values.len()
    }

    /// Total of the per-level absolute sums.
    pub fn absolute_sum(&self) -> f64 {
        self.level_abs.iter().map(|&(_, v)| v).sum()
    }
}

/// Applies the generalized Toeplitz operator at `z`, level by level. The sum
/// is declared converged once three consecutive level increments fall below
/// `tol` (deeper levels are then skipped); otherwise every level is
/// evaluated and `converged` stays false -- running out of levels without
/// meeting the criterion is a reported status, not an error.
pub fn apply_generalized<F>(
    a: &Symbol,
    f: &F,
    ctx: &KernelContext,
    decomposition: &WhitneyDecomposition,
    z: Complex64,
    tol: f64,
    spec: &QuadratureSpec,
) -> Result<ToeplitzApplication>
where
    F: Fn(Complex64) -> Result<Complex64> + Sync,
{
    let zjet = ctx.jet(z)?;
    let squares = &decomposition.squares;
    let mut app = ToeplitzApplication {
        z,
        square_values: Vec::with_capacity(squares.len()),
        square_levels: Vec::with_capacity(squares.len()),
        level_values: Vec::new(),
        level_increments: Vec::new(),
        level_abs: Vec::new(),
        value: Complex64::new(0.0, 0.0),
        converged: false,
        tol,
    };
    let mut start = 0;
    while start < squares.len() && !app.converged {
        let level = squares[start].level;
        let mut end = start;
        while end < squares.len() && squares[end].level == level {
            end += 1;
        }
        let terms: Vec<Complex64> = squares[start..end]
            .par_iter()
            .map(|ws| square_term(a, f, ctx, &zjet, &ws.square, spec))
            .collect::<Result<Vec<_>>>()?;
        let before = app.value;
        let mut abs = 0.0;
        for t in terms {
            app.value += t;
            abs += t.norm();
            app.square_values.push(t);
            app.square_levels.push(level);
        }
        app.level_values.push((level, app.value));
        app.level_abs.push((level, abs));
        app.level_increments.push((app.value - before).norm());
        let k = app.level_increments.len();
        if k >= 3 && app.level_increments[k - 3..].iter().all(|&d| d < tol) {
            app.converged = true;
        }
        start = end;
    }
    Ok(app)
}

/// Outcome of a classical (truncated-domain) application.
#[derive(Clone, Debug)]
pub enum ClassicalOutcome {
    /// The truncation limit: the deepest cumulative value, and its
    /// three-point extrapolation against the shrinking boundary collar.
    Converged {
        raw: Complex64,
        extrapolated: Complex64,
    },
    /// Per-level absolute increments grew by at least `1 + margin` across
    /// the last three levels: the defining integral is absolutely divergent
    /// at this point.
    Diverging { growth: f64 },
}

/// A classical application together with the per-level evidence behind its
/// outcome.
#[derive(Clone, Debug)]
pub struct ClassicalApplication {
    pub application: ToeplitzApplication,
    pub outcome: ClassicalOutcome,
}

/// Applies the classical Toeplitz operator by exhausting the decomposition
/// (the union of Whitney squares is the truncated domain; deeper levels push
/// the truncation toward the boundary). Sustained growth of the per-level
/// absolute increments is reported as divergence; otherwise the limit is
/// estimated from the last three level checkpoints by Aitken extrapolation.
pub fn apply_classical<F>(
    a: &Symbol,
    f: &F,
    ctx: &KernelContext,
    decomposition: &WhitneyDecomposition,
    z: Complex64,
    margin: f64,
    spec: &QuadratureSpec,
) -> Result<ClassicalApplication>
where
    F: Fn(Complex64) -> Result<Complex64> + Sync,
{
    let application = apply_generalized(a, f, ctx, decomposition, z, 0.0, spec)?;
    let abs = &application.level_abs;
    if abs.len() >= 3 {
        let a0 = abs[abs.len() - 3].1;
        let a1 = abs[abs.len() - 2].1;
        let a2 = abs[abs.len() - 1].1;
        if a0 > 0.0 && a1 >= (1.0 + margin) * a0 && a2 >= (1.0 + margin) * a1 {
            return Ok(ClassicalApplication {
                outcome: ClassicalOutcome::Diverging { growth: a2 / a1 },
                application,
            });
        }
    }
    let values = &application.level_values;
    let raw = application.value;
    let extrapolated = if values.len() >= 3 {
        let v0 = values[values.len() - 3].1;
        let v1 = values[values.len() - 2].1;
        let v2 = values[values.len() - 1].1;
        let d1 = v1 - v0;
        let d2 = v2 - v1;
        let den = d2 - d1;
        if den.norm() <= 1e-14 * (d1.norm() + d2.norm()) {
            v2
        } else {
            v2 - d2 * d2 / den
        }
    } else {
        raw
    };
    Ok(ClassicalApplication {
        outcome: ClassicalOutcome::Converged { raw, extrapolated },
        application,
    })
}

/// A polynomial in one complex variable, coefficients in ascending degree.
#[derive(Clone, Debug)]
pub struct ComplexPolynomial {
    pub coeffs: Vec<Complex64>,
}

impl ComplexPolynomial {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        Self { coeffs }
    }

    pub fn monomial(degree: usize) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); degree + 1];
        coeffs[degree] = Complex64::new(1.0, 0.0);
        Self { coeffs }
    }

    pub fn eval(&self, w: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * w + c;
        }
        acc
    }

    pub fn d1(&self, w: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, &c) in self.coeffs.iter().enumerate().skip(1).rev() {
            acc = acc * w + c * k as f64;
        }
        acc
    }

    pub fn d2(&self, w: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, &c) in self.coeffs.iter().enumerate().skip(2).rev() {
            acc = acc * w + c * (k * (k - 1)) as f64;
        }
        acc
    }
}

/// The four pieces of one Toeplitz term after integrating the symbol out by
/// parts, and the residual against direct quadrature.
#[derive(Clone, Debug)]
pub struct FDecomposition {
    /// `(1/pi) int_S a f conj(h_z)` by direct quadrature.
    pub direct: Complex64,
    /// Corner term `H(c) g(c) / pi` at the far corner `c`.
    pub corner: Complex64,
    /// Edge term along the top edge (the x-derivative of `g` appears).
    pub edge_top: Complex64,
    /// Edge term along the right edge (the y-derivative of `g` appears).
    pub edge_right: Complex64,
    /// Interior double integral against the mixed derivative of `g`.
    pub interior: Complex64,
    /// `corner - edge_top - edge_right + interior`.
    pub recombined: Complex64,
    pub residual: f64,
}

/// Verifies the per-square decomposition of a Toeplitz term: with
/// `H(x, y) = int_v^y int_u^x a` the box antiderivative of the symbol and
/// `g = f conj(h_z)`, integration by parts in both variables gives
///
/// `int_S a g = H(c) g(c) - int_right H g_y - int_top H g_x + int_S H g_xy`
///
/// (unnormalized measure; every reported piece carries the 1/pi of the
/// normalized one). The residual `|direct - recombined|` quantifies how well
/// quadrature closes the identity.
pub fn f_decomposition_check(
    a: &Symbol,
    f: &ComplexPolynomial,
    ctx: &KernelContext,
    square: &Square,
    z: Complex64,
    spec: &QuadratureSpec,
) -> Result<FDecomposition> {
    let zjet = ctx.jet(z)?;
    let u = square.anchor.re;
    let v = square.anchor.im;
    let rho = square.side;
    let corner_point = square.anchor + Complex64::new(rho, rho);

    let slot = ErrorSlot::new();
    let direct = integrate_square(
        &|w| {
            let aw = slot.absorb(a.eval(w));
            let hj = match ctx.h_at(&zjet, w) {
                Ok(hj) => hj,
                Err(e) => return slot.absorb(Err(e)),
            };
            aw * f.eval(w) * hj.h.conj()
        },
        square,
        spec,
    );
    let direct = slot.finish(direct)?;

    let corner_h = a.box_integral(u, u + rho, v, v + rho, spec)?;
    let corner_jet = ctx.h_at(&zjet, corner_point)?;
    let corner = corner_h * f.eval(corner_point) * corner_jet.h.conj() / PI;

    // g_x = f' conj(h) + f conj(h'); g_y = i f' conj(h) - i f conj(h');
    // g_xy = i f'' conj(h) - i f conj(h'').
    let slot = ErrorSlot::new();
    let edge_top = integrate_segment(
        &|w| {
            let h_box = slot.absorb(a.box_integral(u, w.re, v, v + rho, spec));
            let hj = match ctx.h_at(&zjet, w) {
                Ok(hj) => hj,
                Err(e) => return slot.absorb(Err(e)),
            };
            h_box * (f.d1(w) * hj.h.conj() + f.eval(w) * hj.h1.conj())
        },
        square.anchor + Complex64::new(0.0, rho),
        corner_point,
        spec,
    );
    let edge_top = slot.finish(edge_top)? / PI;

    let slot = ErrorSlot::new();
    let i = Complex64::new(0.0, 1.0);
    let edge_right = integrate_segment(
        &|w| {
            let h_box = slot.absorb(a.box_integral(u, u + rho, v, w.im, spec));
            let hj = match ctx.h_at(&zjet, w) {
                Ok(hj) => hj,
                Err(e) => return slot.absorb(Err(e)),
            };
            h_box * (i * f.d1(w) * hj.h.conj() - i * f.eval(w) * hj.h1.conj())
        },
        square.anchor + Complex64::new(rho, 0.0),
        corner_point,
        spec,
    );
    // The segment integral carries dzeta = i dy on a vertical edge; the
    // decomposition wants plain dy.
    let edge_right = (-i) * slot.finish(edge_right)? / PI;

    let slot = ErrorSlot::new();
    let interior = integrate_rect_plain(
        &|w| {
            let h_box = slot.absorb(a.box_integral(u, w.re, v, w.im, spec));
            let hj = match ctx.h_at(&zjet, w) {
                Ok(hj) => hj,
                Err(e) => return slot.absorb(Err(e)),
            };
            h_box * (i * f.d2(w) * hj.h.conj() - i * f.eval(w) * hj.h2.conj())
        },
        u,
        u + rho,
        v,
        v + rho,
        spec,
    );
    let interior = slot.finish(interior)? / PI;

    let recombined = corner - edge_top - edge_right + interior;
    Ok(FDecomposition {
        direct,
        corner,
        edge_top,
        edge_right,
        interior,
        recombined,
        residual: (direct - recombined).norm(),
    })
}
