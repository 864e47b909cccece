//! Norm-growth tables and divergence probes for operators near the
//! boundedness edge.
//!
//! Everything here works disk-side through the change of variables
//!
//! ```text
//! ||T_a f||_p^p = int_D |psi'(z)|^{2-p} | int_D F(w) A(w) psi'(w)
//!                 (1 - z conj(w))^{-2} dA(w) |^p dA(z),
//! ```
//!
//! with `F = f o psi` and `A = a o psi`, so the only map evaluations are the
//! closed-form `psi'`. Two kinds of evidence are produced: truncated-integral
//! growth tables over dyadic radii ([`divergence_probe`]), whose verdicts are
//! trend-based and never claimed as proofs, and ratio tables
//! ||T_a f||/||f|| over corner-concentrated test families
//! ([`estimate_operator_norm`]). The module also carries exact witnesses for
//! the projection identity P((1-|w|^2)(1+|w|^2-2w)w^n) = 2w^n(1-w)/(n+3) and
//! for the boundary-power theta integral evaluated three independent ways.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::sync::{Arc, RwLock};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;

use crate::bergman::{
    disk_project, disk_project_truncated, project_polynomial_exact, szego_project,
    theta_integral, theta_integral_closed_form, ErrorSlot, KernelContext,
};
use crate::error::{Error, Result};
use crate::geometry::WhitneyDecomposition;
use crate::quadrature::{integrate_annulus, integrate_disk, legendre_rule, QuadratureSpec};
use crate::scmap::ConformalMap;
use crate::sum::{pairwise_sum, pairwise_sum_complex};
use crate::toeplitz::{apply_generalized, Symbol};

/// Default growth margin for divergence verdicts: a truncated integral is
/// called divergent only when consecutive dyadic truncations keep growing by
/// at least this fraction.
pub const PROBE_MARGIN: f64 = 0.05;

/// Default dyadic probe depth: radii 1 - 2^{-k} for k = 1..=12.
pub const PROBE_DEPTH: u32 = 12;

/// Reference-point scale for inner-integral probes: the probe fixes the
/// outer variable at `PROBE_BASE_POINT` times the worst prevertex, close
/// enough to the corner that the kernel amplifies the singularity, far
/// enough that the point is interior.
pub const PROBE_BASE_POINT: f64 = 0.8;

/// Allowed growth of consecutive norm ratios in a bounded-verdict table.
pub const NORM_GROWTH_TOL: f64 = 0.10;

/// How many trailing cumulative ratios must clear the margin.
const PROBE_TAIL: usize = 4;

/// How many trailing ring increments enter the log-log exponent fit.
const PROBE_FIT_WINDOW: usize = 6;

/// Interior sample points (all |z| < 0.6) shared by the constancy and
/// identity cross-checks.
const SAMPLE_POINTS: [(f64, f64); 5] = [
    (0.0, 0.0),
    (0.3, 0.2),
    (-0.5, 0.0),
    (0.2, -0.4),
    (0.1, 0.55),
];

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

// ---------------------------------------------------------------------------
// Divergence probes
// ---------------------------------------------------------------------------

/// Trend verdict of a truncated-integral growth table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ProbeVerdict {
    Divergent,
    Convergent,
}

/// Growth table of a radial truncation family I(r) = int_{|w|<r} g dA.
///
/// `values[k]` is I(radii[k]) built cumulatively from ring integrals, so the
/// table is monotone for nonnegative integrands up to quadrature error;
/// `ratios[k]` is I(radii[k+1])/I(radii[k]). The fitted exponent is the
/// log-log slope of the ring increments against 1 - r: it recovers -g
/// exactly for I ~ (1-r)^{-g}, is slightly negative for logarithmic growth,
/// and comes out positive when the tail decays.
#[derive(Clone, Debug, Serialize)]
pub struct DivergenceProbe {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub ratios: Vec<f64>,
    pub fitted_exponent: f64,
    pub margin: f64,
    pub verdict: ProbeVerdict,
}

/// The dyadic radii schedule 1 - 2^{-k}, k = 1..=depth.
pub fn probe_radii(depth: u32) -> Vec<f64> {
    (1..=depth).map(|k| 1.0 - 2f64.powi(-(k as i32))).collect()
}

/// Quadrature settings for probe rings. The deepest rings need the angular
/// trapezoid to resolve boundary peaks of width comparable to 2^{-depth},
/// hence the generous refinement budget; the tolerance is survey-grade
/// because verdicts ride on percent-level ratios.
pub fn probe_spec() -> QuadratureSpec {
    QuadratureSpec {
        base_nodes: 16,
        max_refinements: 13,
        abs_tol: 1e-12,
        rel_tol: 1e-6,
    }
}

/// Truncated-integral divergence probe for a nonnegative integrand.
///
/// Integrates `density` over the disks |w| < radii[k] by summing ring
/// integrals (each ring adaptively, rings in parallel), then applies the
/// two-part trend test: DIVERGENT iff every trailing cumulative ratio
/// exceeds 1 + margin AND the fitted power of (1 - r) is negative. The
/// cumulative ratios are what catch logarithmic divergence, whose ring
/// increments look flat.
pub fn divergence_probe<F>(
    density: &F,
    radii: &[f64],
    margin: f64,
    spec: &QuadratureSpec,
) -> Result<DivergenceProbe>
where
    F: Fn(Complex64) -> f64 + Sync,
{
    if radii.len() < 2 {
        return Err(Error::Config(format!(
            "divergence probe needs at least 2 radii, got {}",
            radii.len()
        )));
    }
    if !radii.windows(2).all(|w| w[0] < w[1]) || radii[0] <= 0.0 || radii[radii.len() - 1] >= 1.0 {
        return Err(Error::Config(
            "probe radii must increase strictly inside (0, 1)".into(),
        ));
    }
    if !(margin > 0.0) {
        return Err(Error::Config(format!(
            "probe margin must be positive, got {margin}"
        )));
    }

    let wrap = |w: Complex64| Complex64::new(density(w), 0.0);
    let rings: Result<Vec<f64>> = (0..radii.len())
        .into_par_iter()
        .map(|k| {
            let v = if k == 0 {
                integrate_disk(&wrap, radii[0], spec)?
            } else {
                integrate_annulus(&wrap, radii[k - 1], radii[k], spec)?
            };
            Ok(v.re)
        })
        .collect();
    let rings = rings?;

    let mut values = Vec::with_capacity(radii.len());
    let mut acc = 0.0;
    for &ring in &rings {
        acc += ring;
        values.push(acc);
    }
    let ratios: Vec<f64> = values
        .windows(2)
        .map(|v| {
            if v[0] == 0.0 {
                if v[1] == 0.0 { 1.0 } else { f64::INFINITY }
            } else {
                v[1] / v[0]
            }
        })
        .collect();

    // Ring k >= 1 covers [radii[k-1], radii[k]]; its natural abscissa is the
    // remaining gap 1 - radii[k].
    let start = rings.len().saturating_sub(PROBE_FIT_WINDOW);
    let pts: Vec<(f64, f64)> = (start..rings.len())
        .filter(|&k| k >= 1 && rings[k] > 0.0)
        .map(|k| ((1.0 - radii[k]).ln(), rings[k].ln()))
        .collect();
    let fitted_exponent = if pts.len() < 2 {
        0.0
    } else {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let den: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        num / den
    };

    let tail = PROBE_TAIL.min(ratios.len());
    let growing = ratios[ratios.len() - tail..]
        .iter()
        .all(|&r| r >= 1.0 + margin);
    let verdict = if growing && fitted_exponent < 0.0 {
        ProbeVerdict::Divergent
    } else {
        ProbeVerdict::Convergent
    };

    Ok(DivergenceProbe {
        radii: radii.to_vec(),
        values,
        ratios,
        fitted_exponent,
        margin,
        verdict,
    })
}

/// Probe of int_{|w|<r} |psi'|^{2-p} dA — the integral that decides whether
/// a compactly supported (or rim-vanishing) symbol can map constants into
/// A^p at all.
pub fn map_derivative_probe(
    map: &ConformalMap,
    p: f64,
    depth: u32,
    margin: f64,
) -> Result<DivergenceProbe> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Config(format!("exponent p must be in (1, inf), got {p}")));
    }
    let radii = probe_radii(depth);
    divergence_probe(
        &|w| map.psi_prime(w).norm().powf(2.0 - p),
        &radii,
        margin,
        &probe_spec(),
    )
}

/// Probe of the absolute inner integrand of T_a f at a fixed interior
/// reference point: density
///
/// ```text
/// |1 - conj(z_m) w|^{t - s} |psi'(w)| / |1 - z_ref conj(w)|^2,
/// ```
///
/// where z_m is the prevertex of `vertex`, z_ref = PROBE_BASE_POINT * z_m,
/// `s` is the test-function exponent and `t` the symbol decay. A divergent
/// verdict means the defining Lebesgue integral of T_a f does not exist
/// there.
pub fn inner_integral_probe(
    map: &ConformalMap,
    vertex: usize,
    s: f64,
    t: f64,
    depth: u32,
    margin: f64,
) -> Result<DivergenceProbe> {
    let points = map.prevertex_points();
    if vertex >= points.len() {
        return Err(Error::Config(format!(
            "probe vertex {vertex} out of range for a {}-gon",
            points.len()
        )));
    }
    let zm = points[vertex];
    let zref = PROBE_BASE_POINT * zm;
    let radii = probe_radii(depth);
    divergence_probe(
        &|w| {
            let corner = (one() - zm.conj() * w).norm();
            let kernel = (one() - zref * w.conj()).norm();
            corner.powf(t - s) * map.psi_prime(w).norm() / (kernel * kernel)
        },
        &radii,
        margin,
        &probe_spec(),
    )
}

// ---------------------------------------------------------------------------
// Corner-concentrated test families
// ---------------------------------------------------------------------------

/// One test function F_s(w) = (1 - conj(z_m) w)^{-s}, kept as a disk-side
/// closure; the domain-side function is F_s o phi.
#[derive(Clone)]
pub struct FamilyMember {
    pub label: String,
    pub s: f64,
    disk: Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>,
}

impl FamilyMember {
    pub fn disk_value(&self, w: Complex64) -> Complex64 {
        (self.disk)(w)
    }
}

impl std::fmt::Debug for FamilyMember {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FamilyMember")
            .field("label", &self.label)
            .field("s", &self.s)
            .finish()
    }
}

/// A family of test functions concentrated at one vertex.
#[derive(Clone, Debug)]
pub struct TestFamily {
    pub vertex: usize,
    pub members: Vec<FamilyMember>,
}

/// Builds the family f_s = (1 - conj(phi(vertex)) phi)^{-s} for the given
/// exponents; in disk coordinates each member is (1 - conj(z_m) w)^{-s}.
pub fn corner_family(map: &ConformalMap, vertex: usize, exponents: &[f64]) -> Result<TestFamily> {
    let points = map.prevertex_points();
    if vertex >= points.len() {
        return Err(Error::Config(format!(
            "family vertex {vertex} out of range for a {}-gon",
            points.len()
        )));
    }
    if exponents.is_empty() {
        return Err(Error::Config("test family needs at least one exponent".into()));
    }
    let zm = points[vertex];
    let members = exponents
        .iter()
        .map(|&s| {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config(format!(
                    "family exponent must be finite and nonnegative, got {s}"
                )));
            }
            Ok(FamilyMember {
                label: format!("s={s:.4}"),
                s,
                disk: Arc::new(move |w| (one() - zm.conj() * w).powf(-s)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TestFamily { vertex, members })
}

/// Exponents at the given fractions of the A^p-membership edge
/// s* = 2 alpha_max / p (members with s < s* transplant to A^p functions).
pub fn edge_exponents(p: f64, alpha_max: f64, fractions: &[f64]) -> Result<Vec<f64>> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Config(format!("exponent p must be in (1, inf), got {p}")));
    }
    if !(0.0 < alpha_max && alpha_max < 2.0) {
        return Err(Error::Config(format!(
            "angle factor must lie in (0, 2), got {alpha_max}"
        )));
    }
    let edge = 2.0 * alpha_max / p;
    fractions
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::Config(format!(
                    "edge fraction must be positive, got {f}"
                )));
            }
            Ok(f * edge)
        })
        .collect()
}

/// The divergence witness exponent 1 + alpha_max: with a trivial symbol the
/// inner integrand of T_a applied to (1 - conj(z_m) w)^{-(1+alpha_max)}
/// scales like |1 - w|^{-2} near the corner, the borderline failure.
pub fn witness_exponent(alpha_max: f64) -> f64 {
    1.0 + alpha_max
}

// ---------------------------------------------------------------------------
// The graded product rule
// ---------------------------------------------------------------------------

/// Node budget for the truncated disk-side norm integrals.
///
/// The outer and inner integrals of the norm identity share one fixed
/// composite Gauss-Legendre rule: radial bands halving toward the rim,
/// angular panels halving toward the worst corner with extra splits at the
/// remaining prevertex angles. A fixed rule (rather than the adaptive disk
/// quadrature) keeps the nested cost at (number of nodes)^2 and lets the
/// corner-independent part of the inner integrand be evaluated once.
#[derive(Clone, Debug, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct NormBudget {
    /// Truncation radius shared by every norm integral in a table.
    pub truncation: f64,
    /// Radial bands: boundaries at truncation * (1 - 2^{-j}), j = 1..=bands.
    pub bands: u32,
    /// Angular halvings toward the focus corner: panel boundaries at
    /// +/- pi * 2^{-j}, j = 0..=wedges.
    pub wedges: u32,
    pub order_radial: usize,
    pub order_angular: usize,
    /// Depth and margin of the per-member inner-integral probes.
    pub probe_depth: u32,
    pub probe_margin: f64,
}

impl Default for NormBudget {
    fn default() -> Self {
        Self {
            truncation: 1.0 - 2f64.powi(-6),
            bands: 7,
            wedges: 9,
            order_radial: 6,
            order_angular: 6,
            probe_depth: 10,
            probe_margin: PROBE_MARGIN,
        }
    }
}

impl NormBudget {
    fn validate(&self) -> Result<()> {
        if !(0.0 < self.truncation && self.truncation < 1.0) {
            return Err(Error::Config(format!(
                "truncation radius must be in (0, 1), got {}",
                self.truncation
            )));
        }
        if self.bands < 2 || self.wedges < 2 || self.order_radial < 2 || self.order_angular < 2 {
            return Err(Error::Config(
                "norm budget needs bands, wedges >= 2 and orders >= 2".into(),
            ));
        }
        if self.probe_depth < 4 || !(self.probe_margin > 0.0) {
            return Err(Error::Config(
                "norm budget needs probe_depth >= 4 and a positive margin".into(),
            ));
        }
        Ok(())
    }
}

/// Extra angular splits dropped around each non-focus prevertex so the wide
/// far-field panels do not step over those milder peaks.
const SIDE_WEDGES: [f64; 2] = [0.15, 0.0375];

/// Builds the fixed rule: nodes w and weights for int f dA/pi over
/// |w| < radius. Deterministic by construction.
fn graded_disk_nodes(
    radius: f64,
    focus: f64,
    side_angles: &[f64],
    budget: &NormBudget,
) -> Vec<(Complex64, f64)> {
    let mut rho_bounds = Vec::with_capacity(budget.bands as usize + 2);
    rho_bounds.push(0.0);
    for j in 1..=budget.bands {
        rho_bounds.push(radius * (1.0 - 2f64.powi(-(j as i32))));
    }
    rho_bounds.push(radius);

    // Angular panel boundaries as offsets from the focus, in [-pi, pi].
    let mut offsets = vec![-PI, PI];
    for j in 0..=budget.wedges {
        let d = PI * 2f64.powi(-(j as i32));
        offsets.push(d);
        offsets.push(-d);
    }
    let wrap = |a: f64| {
        let d = (a - focus).rem_euclid(2.0 * PI);
        if d > PI { d - 2.0 * PI } else { d }
    };
    for &sa in side_angles {
        let base = wrap(sa);
        offsets.push(base);
        for &w in &SIDE_WEDGES {
            for cand in [base - w, base + w] {
                if cand.abs() < PI {
                    offsets.push(cand);
                }
            }
        }
    }
    offsets.sort_by(f64::total_cmp);
    offsets.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let rule_r = legendre_rule(budget.order_radial);
    let rule_a = legendre_rule(budget.order_angular);
    let mut nodes = Vec::new();
    for rb in rho_bounds.windows(2) {
        let (r0, r1) = (rb[0], rb[1]);
        let rh = 0.5 * (r1 - r0);
        let rm = 0.5 * (r0 + r1);
        for ab in offsets.windows(2) {
            let (a0, a1) = (ab[0], ab[1]);
            if a1 - a0 < 1e-12 {
                continue;
            }
            let ah = 0.5 * (a1 - a0);
            let am = 0.5 * (a0 + a1);
            for (&xr, &wr) in rule_r.nodes.iter().zip(&rule_r.weights) {
                let rho = rm + rh * xr;
                for (&xa, &wa) in rule_a.nodes.iter().zip(&rule_a.weights) {
                    let theta = focus + am + ah * xa;
                    let weight = rho * (rh * wr) * (ah * wa) / PI;
                    nodes.push((Complex64::from_polar(rho, theta), weight));
                }
            }
        }
    }
    nodes
}

// ---------------------------------------------------------------------------
// Norm-growth tables
// ---------------------------------------------------------------------------

/// Disk-side view of a symbol: the closed disk form when the symbol carries
/// one, otherwise the transplant a(psi(w)) with a per-point cache (the
/// graded rule reuses node sets, so the cache pays off across a table).
struct DiskSymbol<'a> {
    symbol: &'a Symbol,
    map: &'a ConformalMap,
    cache: RwLock<HashMap<(u64, u64), Complex64>>,
}

impl<'a> DiskSymbol<'a> {
    fn new(symbol: &'a Symbol, map: &'a ConformalMap) -> Self {
        Self {
            symbol,
            map,
            cache: RwLock::new(HashMap::new()),
        }
    }

    fn at(&self, w: Complex64) -> Result<Complex64> {
        if self.symbol.has_disk_form() {
            return self.symbol.disk_eval(w);
        }
        let key = (w.re.to_bits(), w.im.to_bits());
        if let Some(&v) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(v);
        }
        let xi = self.map.psi(w)?;
        let v = self.symbol.eval(xi)?;
        self.cache.write().expect("cache lock").insert(key, v);
        Ok(v)
    }
}

/// One row of a norm-growth table. Both norms are truncated at the table's
/// radius; a row whose inner-integral probe diverges is flagged and left
/// without a ratio.
#[derive(Clone, Debug, Serialize)]
pub struct NormGrowthRow {
    pub label: String,
    pub s: f64,
    pub input_norm: f64,
    pub output_norm: Option<f64>,
    pub ratio: Option<f64>,
    pub diverged: bool,
}

/// Measured ||T_a f||_p / ||f||_p over a test family.
///
/// `bounded` means no member diverged and consecutive ratios grew by at most
/// [`NORM_GROWTH_TOL`]; `sup_ratio` is a supremum over the finite designed
/// family, never a claimed operator norm. When a Whitney decomposition is
/// supplied, `agreement_residual` compares the disk-side route against the
/// square-by-square domain route at one interior point.
#[derive(Clone, Debug, Serialize)]
pub struct NormGrowthTable {
    pub p: f64,
    pub symbol: String,
    pub vertex: usize,
    pub truncation: f64,
    pub rows: Vec<NormGrowthRow>,
    pub sup_ratio: f64,
    pub max_consecutive_growth: f64,
    pub bounded: bool,
    pub agreement_residual: Option<f64>,
}

/// Builds the ratio table ||T_a f_s||_p / ||f_s||_p over the family.
///
/// Each member is first screened by [`inner_integral_probe`]-style evidence
/// (when the symbol has a disk form): if the absolute inner integrand
/// already fails to be integrable at the reference point, the row is marked
/// diverged and no ratio is reported. Otherwise both truncated norms are
/// computed on the shared graded rule.
pub fn estimate_operator_norm(
    a: &Symbol,
    map: &Arc<ConformalMap>,
    p: f64,
    family: &TestFamily,
    decomposition: Option<&WhitneyDecomposition>,
    budget: &NormBudget,
) -> Result<NormGrowthTable> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Config(format!("exponent p must be in (1, inf), got {p}")));
    }
    budget.validate()?;
    let points = map.prevertex_points();
    if family.vertex >= points.len() {
        return Err(Error::Config(format!(
            "family vertex {} out of range for a {}-gon",
            family.vertex,
            points.len()
        )));
    }
    if family.members.is_empty() {
        return Err(Error::Config("test family has no members".into()));
    }
    let zm = points[family.vertex];
    let focus = zm.arg();
    let side_angles: Vec<f64> = points
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != family.vertex)
        .map(|(_, z)| z.arg())
        .collect();
    let nodes = graded_disk_nodes(budget.truncation, focus, &side_angles, budget);

    // Member-independent data at the shared nodes: the symbol-and-Jacobian
    // product for the inner integral, |psi'|^2 for input norms, |psi'|^{2-p}
    // for the outer weight (each times the rule weight).
    let dsym = DiskSymbol::new(a, map);
    let prepared: Result<Vec<(Complex64, Complex64, f64, f64)>> = nodes
        .par_iter()
        .map(|&(w, wt)| {
            let psi_p = map.psi_prime(w);
            let av = dsym.at(w)?;
            let mag = psi_p.norm();
            Ok((w, av * psi_p * wt, mag * mag * wt, mag.powf(2.0 - p) * wt))
        })
        .collect();
    let prepared = prepared?;

    let probe_schedule = probe_radii(budget.probe_depth);
    let zref = PROBE_BASE_POINT * zm;
    let rows: Result<Vec<NormGrowthRow>> = family
        .members
        .par_iter()
        .map(|member| {
            let diverged = if a.has_disk_form() {
                let slot = ErrorSlot::new();
                let density = |w: Complex64| {
                    let av = slot.absorb(dsym.at(w));
                    let kernel = (one() - zref * w.conj()).norm();
                    member.disk_value(w).norm() * av.norm() * map.psi_prime(w).norm()
                        / (kernel * kernel)
                };
                let probe = slot.finish(divergence_probe(
                    &density,
                    &probe_schedule,
                    budget.probe_margin,
                    &probe_spec(),
                ))?;
                probe.verdict == ProbeVerdict::Divergent
            } else {
                false
            };

            let f_vals: Vec<Complex64> =
                prepared.iter().map(|&(w, _, _, _)| member.disk_value(w)).collect();
            let input_terms: Vec<f64> = f_vals
                .iter()
                .zip(&prepared)
                .map(|(f, &(_, _, in_wt, _))| f.norm().powf(p) * in_wt)
                .collect();
            let input_norm = pairwise_sum(&input_terms).max(0.0).powf(1.0 / p);
            if !(input_norm > 0.0) {
                return Err(Error::Numerical(format!(
                    "test member {} has vanishing truncated norm",
                    member.label
                )));
            }

            let (output_norm, ratio) = if diverged {
                (None, None)
            } else {
                let g: Vec<Complex64> = f_vals
                    .iter()
                    .zip(&prepared)
                    .map(|(f, &(_, base, _, _))| f * base)
                    .collect();
                let mut inner_buf = Vec::with_capacity(g.len());
                let outer_terms: Vec<f64> = prepared
                    .iter()
                    .map(|&(z, _, _, out_wt)| {
                        inner_buf.clear();
                        inner_buf.extend(prepared.iter().zip(&g).map(|(&(w, _, _, _), &gj)| {
                            let d = one() - z * w.conj();
                            gj / (d * d)
                        }));
                        let inner = pairwise_sum_complex(&inner_buf);
                        inner.norm().powf(p) * out_wt
                    })
                    .collect();
                let out = pairwise_sum(&outer_terms).max(0.0).powf(1.0 / p);
                (Some(out), Some(out / input_norm))
            };

            Ok(NormGrowthRow {
                label: member.label.clone(),
                s: member.s,
                input_norm,
                output_norm,
                ratio,
                diverged,
            })
        })
        .collect();
    let rows = rows?;

    let finite: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let sup_ratio = finite.iter().copied().fold(0.0, f64::max);
    let max_consecutive_growth = finite
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .fold(1.0, f64::max);
    let bounded =
        rows.iter().all(|r| !r.diverged) && max_consecutive_growth <= 1.0 + NORM_GROWTH_TOL;

    let agreement_residual = match decomposition {
        Some(dec) => Some(cross_route_residual(
            a,
            map,
            &family.members[0],
            zm,
            dec,
            &prepared,
        )?),
        None => None,
    };

    Ok(NormGrowthTable {
        p,
        symbol: a.descriptor().to_string(),
        vertex: family.vertex,
        truncation: budget.truncation,
        rows,
        sup_ratio,
        max_consecutive_growth,
        bounded,
        agreement_residual,
    })
}

/// Evaluates T_a f at one interior point along both routes — the Whitney
/// square-by-square quadrature in the domain, and the disk-side rule via
/// T_a f(psi(z)) = inner(z)/psi'(z) — and returns the relative gap. Both
/// routes truncate differently (by level vs by radius), so the gap measures
/// collar mass, not roundoff.
fn cross_route_residual(
    a: &Symbol,
    map: &Arc<ConformalMap>,
    member: &FamilyMember,
    zm: Complex64,
    decomposition: &WhitneyDecomposition,
    prepared: &[(Complex64, Complex64, f64, f64)],
) -> Result<f64> {
    let z0 = 0.35 * zm;
    let lambda = map.psi(z0)?;
    let ctx = KernelContext::new(Arc::clone(map));
    let f_dom = |xi: Complex64| ctx.jet(xi).map(|jet| member.disk_value(jet.z));
    let app = apply_generalized(
        a,
        &f_dom,
        &ctx,
        decomposition,
        lambda,
        0.0,
        &QuadratureSpec::default(),
    )?;

    let mut terms = Vec::with_capacity(prepared.len());
    terms.extend(prepared.iter().map(|&(w, base, _, _)| {
        let d = one() - z0 * w.conj();
        member.disk_value(w) * base / (d * d)
    }));
    let disk = pairwise_sum_complex(&terms) / map.psi_prime(z0);
    Ok((app.value - disk).norm() / (1.0 + disk.norm()))
}

// ---------------------------------------------------------------------------
// The weighted-corner boundedness experiment
// ---------------------------------------------------------------------------

/// Outcome of the weighted-symbol experiment below the projection-bounded
/// range: the decay threshold, whether the supplied decay clears it, and the
/// measured ratio table.
#[derive(Clone, Debug, Serialize)]
pub struct CornerBoundednessReport {
    pub p: f64,
    pub vertex: usize,
    pub alpha_max: f64,
    pub t: f64,
    pub threshold: f64,
    pub hypothesis_met: bool,
    pub table: NormGrowthTable,
}

/// Ratio table for the corner-decay symbol |1 - conj(z_m) phi|^t at
/// 1 < p < 4/3. With t above the threshold (2-p)(alpha_max - 1) - 2(p-1)
/// the table should stay bounded as the family approaches the A^p edge;
/// t = 0 reduces to the constant symbol, for which the witness member
/// (1 - w)^{-(1+alpha_max)} makes the inner integral diverge outright.
pub fn example_e0b_boundedness(
    map: &Arc<ConformalMap>,
    p: f64,
    t: f64,
    family: &TestFamily,
    budget: &NormBudget,
) -> Result<CornerBoundednessReport> {
    if !(1.0 < p && p < 4.0 / 3.0) {
        return Err(Error::Config(format!(
            "the weighted-corner experiment runs at 1 < p < 4/3, got {p}"
        )));
    }
    if !t.is_finite() {
        return Err(Error::Config(format!("symbol decay must be finite, got {t}")));
    }
    let polygon = map.polygon();
    let vertex = polygon.alpha_max_index();
    let alpha_max = polygon.alpha_max();
    if family.vertex != vertex {
        return Err(Error::Config(format!(
            "family is concentrated at vertex {}, but the maximal angle sits at {vertex}",
            family.vertex
        )));
    }
    let threshold = (2.0 - p) * (alpha_max - 1.0) - 2.0 * (p - 1.0);
    let symbol = if t == 0.0 {
        Symbol::constant(one())
    } else {
        Symbol::corner_power(Arc::clone(map), vertex, t)?
    };
    let table = estimate_operator_norm(&symbol, map, p, family, None, budget)?;
    Ok(CornerBoundednessReport {
        p,
        vertex,
        alpha_max,
        t,
        threshold,
        hypothesis_met: t > threshold,
        table,
    })
}

// ---------------------------------------------------------------------------
// Ill-definedness of the plain projection below 4/3
// ---------------------------------------------------------------------------

/// Probe report for the constant-symbol failure: with
/// alpha_max > 1 + 2(p-1)/(2-p) the function transplanting to
/// (1 - w)^{-(1+alpha_max)} lies in A^p, yet the defining integral of
/// T_1 f diverges absolutely at every interior point.
#[derive(Clone, Debug, Serialize)]
pub struct CornerDivergenceReport {
    pub p: f64,
    pub vertex: usize,
    pub alpha_max: f64,
    pub witness_exponent: f64,
    /// Near-corner exponent of the absolute integrand; -2 is the borderline
    /// divergence the probe is expected to flag.
    pub integrand_exponent: f64,
    pub probe: DivergenceProbe,
}

pub fn example_e0a_divergence(
    map: &ConformalMap,
    p: f64,
    depth: u32,
    margin: f64,
) -> Result<CornerDivergenceReport> {
    if !(1.0 < p && p < 4.0 / 3.0) {
        return Err(Error::Config(format!(
            "the constant-symbol failure example runs at 1 < p < 4/3, got {p}"
        )));
    }
    let polygon = map.polygon();
    let vertex = polygon.alpha_max_index();
    let alpha_max = polygon.alpha_max();
    let needed = 1.0 + 2.0 * (p - 1.0) / (2.0 - p);
    if !(alpha_max > needed) {
        return Err(Error::Config(format!(
            "domain angle factor {alpha_max:.4} does not reach the unbounded range (> {needed:.4}) at p = {p}"
        )));
    }
    for (k, &a) in polygon.angle_factors().iter().enumerate() {
        if k != vertex && a >= 1.0 {
            return Err(Error::Config(
                "all corners except the maximal one must be outward (factor < 1)".into(),
            ));
        }
    }
    let s = witness_exponent(alpha_max);
    let probe = inner_integral_probe(map, vertex, s, 0.0, depth, margin)?;
    Ok(CornerDivergenceReport {
        p,
        vertex,
        alpha_max,
        witness_exponent: s,
        integrand_exponent: -2.0,
        probe,
    })
}

// ---------------------------------------------------------------------------
// Rim-vanishing and compactly supported symbols above 4
// ---------------------------------------------------------------------------

/// Constancy witness for an inner projection integral whose exact value is
/// independent of the evaluation point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProjectionConstancy {
    pub expected: f64,
    pub max_residual: f64,
}

/// P[(1 - |w|^2)](z) = 1/2 for every z — the inner integral produced by the
/// rim-vanishing symbol phi'(1 - |phi|^2) acting on constants.
pub fn weighted_inner_constancy(spec: &QuadratureSpec) -> Result<ProjectionConstancy> {
    constancy_at_samples(0.5, |z| {
        disk_project(&|w: Complex64| Complex64::new(1.0 - w.norm_sqr(), 0.0), z, spec)
    })
}

/// The projection of the indicator of |w| < radius is the constant radius^2
/// — the inner integral produced by a symbol supported well inside the
/// domain acting on constants.
pub fn truncated_inner_constancy(radius: f64, spec: &QuadratureSpec) -> Result<ProjectionConstancy> {
    if !(0.0 < radius && radius < 1.0) {
        return Err(Error::Config(format!(
            "support radius must be in (0, 1), got {radius}"
        )));
    }
    constancy_at_samples(radius * radius, |z| {
        disk_project_truncated(&|_| one(), z, radius, spec)
    })
}

fn constancy_at_samples(
    expected: f64,
    project: impl Fn(Complex64) -> Result<Complex64>,
) -> Result<ProjectionConstancy> {
    let mut max_residual: f64 = 0.0;
    for &(re, im) in &SAMPLE_POINTS {
        let v = project(Complex64::new(re, im))?;
        max_residual = max_residual.max((v - expected).norm());
    }
    Ok(ProjectionConstancy {
        expected,
        max_residual,
    })
}

/// Report for the symbols that reduce T_a 1 to a constant times the
/// weighted mass of |psi'|^{2-p}: the operator fails to map into A^p
/// exactly when that mass diverges, i.e. when (alpha_max - 1)(2 - p) <= -2.
#[derive(Clone, Debug, Serialize)]
pub struct MapDerivativeReport {
    pub p: f64,
    pub alpha_max: f64,
    /// Near-corner exponent (alpha_max - 1)(2 - p) of |psi'|^{2-p}.
    pub exponent: f64,
    pub expected_divergent: bool,
    /// None for the rim-vanishing symbol; the support radius otherwise.
    pub support_radius: Option<f64>,
    pub inner: ProjectionConstancy,
    pub probe: DivergenceProbe,
}

/// The rim-vanishing symbol phi'(1 - |phi|^2): bounded, yet T_a does not
/// map A^p into A^p once the maximal corner is sharp enough.
pub fn example_e1a_report(
    map: &ConformalMap,
    p: f64,
    depth: u32,
    margin: f64,
    spec: &QuadratureSpec,
) -> Result<MapDerivativeReport> {
    let inner = weighted_inner_constancy(spec)?;
    map_derivative_report(map, p, depth, margin, None, inner)
}

/// The compactly supported symbol phi' * (indicator of |phi| < radius):
/// vanishes near the whole boundary, same failure mechanism.
pub fn example_e1b_report(
    map: &ConformalMap,
    p: f64,
    radius: f64,
    depth: u32,
    margin: f64,
    spec: &QuadratureSpec,
) -> Result<MapDerivativeReport> {
    let inner = truncated_inner_constancy(radius, spec)?;
    map_derivative_report(map, p, depth, margin, Some(radius), inner)
}

fn map_derivative_report(
    map: &ConformalMap,
    p: f64,
    depth: u32,
    margin: f64,
    support_radius: Option<f64>,
    inner: ProjectionConstancy,
) -> Result<MapDerivativeReport> {
    let alpha_max = map.polygon().alpha_max();
    let exponent = (alpha_max - 1.0) * (2.0 - p);
    let probe = map_derivative_probe(map, p, depth, margin)?;
    Ok(MapDerivativeReport {
        p,
        alpha_max,
        exponent,
        expected_divergent: exponent <= -2.0,
        support_radius,
        inner,
        probe,
    })
}

// ---------------------------------------------------------------------------
// Exact identities
// ---------------------------------------------------------------------------

/// Exact-arithmetic witness of
/// P((1 - |w|^2)(1 + |w|^2 - 2w) w^n) = 2 w^n (1 - w)/(n + 3).
#[derive(Clone, Debug)]
pub struct ProjectionIdentityWitness {
    pub n: u32,
    /// Projection coefficients from the monomial expansion, degree -> value.
    pub coefficients: BTreeMap<u32, BigRational>,
    pub expected: BTreeMap<u32, BigRational>,
    pub exact_match: bool,
    pub max_numeric_residual: f64,
}

/// Expands (1 - |w|^2)(1 + |w|^2 - 2w) w^n = w^n - 2w^{n+1}
/// + 2 w^{n+2} conj(w) - w^{n+2} conj(w)^2, projects term by term in
/// rational arithmetic, and cross-checks the resulting polynomial against
/// the direct projection integral at interior sample points.
pub fn example_53_identity(n: u32, spec: &QuadratureSpec) -> Result<ProjectionIdentityWitness> {
    let big = |v: i64| BigRational::from(BigInt::from(v));
    let terms = [
        (n, 0, big(1)),
        (n + 1, 0, big(-2)),
        (n + 2, 1, big(2)),
        (n + 2, 2, big(-1)),
    ];
    let coefficients = project_polynomial_exact(&terms);

    let mut expected = BTreeMap::new();
    let frac = BigRational::new(BigInt::from(2), BigInt::from(i64::from(n) + 3));
    expected.insert(n, frac.clone());
    expected.insert(n + 1, -frac);
    let exact_match = coefficients == expected;

    let as_f64 = |q: &BigRational| -> f64 {
        let num: f64 = q.numer().to_string().parse().unwrap_or(f64::NAN);
        let den: f64 = q.denom().to_string().parse().unwrap_or(f64::NAN);
        num / den
    };
    let mut max_numeric_residual: f64 = 0.0;
    for &(re, im) in &SAMPLE_POINTS {
        let z = Complex64::new(re, im);
        let numeric = disk_project(
            &|w: Complex64| {
                let weight = 1.0 - w.norm_sqr();
                let factor = Complex64::new(1.0 + w.norm_sqr(), 0.0) - 2.0 * w;
                weight * factor * w.powi(n as i32)
            },
            z,
            spec,
        )?;
        let reference: Complex64 = expected
            .iter()
            .map(|(&k, q)| as_f64(q) * z.powi(k as i32))
            .sum();
        max_numeric_residual = max_numeric_residual.max((numeric - reference).norm());
    }

    Ok(ProjectionIdentityWitness {
        n,
        coefficients,
        expected,
        exact_match,
        max_numeric_residual,
    })
}

/// Three-route evaluation of the boundary-power angular integral
/// int_0^{2pi} e^{i n t} (e^{it} - r)^m (1 - z r e^{-it})^{-2} dt.
#[derive(Clone, Debug, Serialize)]
pub struct ThetaIntegralWitness {
    pub n: u32,
    pub m: u32,
    pub r: f64,
    pub z: Complex64,
    pub numeric: Complex64,
    pub closed_form: Complex64,
    pub szego: Complex64,
    pub residual: f64,
    pub szego_residual: f64,
}

/// Evaluates the theta integral by adaptive circle quadrature, by the closed
/// form 2 pi r^{n+m} (z-1)^{m-1} ((n+m+1) z^{n+1} - (n+1) z^n), and through
/// the boundary-projection route: the integral equals
/// (2 pi / u) (S h_r)(u) at u = zr with
/// h_r(w) = (n+1) w^{n+1} (w - r)^m + m w^{n+2} (w - r)^{m-1}. Since h_r
/// vanishes at the origin, the division is carried out on the polynomial
/// level (h_r(w)/w), which keeps u = 0 regular.
pub fn example_54_theta_integral(
    n: u32,
    m: u32,
    r: f64,
    z: Complex64,
    spec: &QuadratureSpec,
) -> Result<ThetaIntegralWitness> {
    if m < 2 {
        return Err(Error::Config(format!(
            "the boundary-power exponent must be an integer >= 2, got {m}"
        )));
    }
    if !(0.0 < r && r < 1.0) {
        return Err(Error::Config(format!("radius must be in (0, 1), got {r}")));
    }
    if z.norm() >= 1.0 {
        return Err(Error::Config(format!(
            "evaluation point must be inside the disk, got |z| = {}",
            z.norm()
        )));
    }
    let numeric = theta_integral(n, m, r, z, spec)?;
    let closed_form = theta_integral_closed_form(n, m, r, z);

    let u = z * r;
    let q = |w: Complex64| {
        f64::from(n + 1) * w.powi(n as i32) * (w - r).powi(m as i32)
            + f64::from(m) * w.powi(n as i32 + 1) * (w - r).powi(m as i32 - 1)
    };
    let szego = 2.0 * PI * szego_project(&q, u, spec)?;

    let scale = 1.0 + closed_form.norm();
    Ok(ThetaIntegralWitness {
        n,
        m,
        r,
        z,
        numeric,
        closed_form,
        szego,
        residual: (numeric - closed_form).norm() / scale,
        szego_residual: (szego - closed_form).norm() / scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polygons::unit_square;
    use crate::scmap::ConformalMap;
    use approx::assert_abs_diff_eq;
    use std::sync::OnceLock;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn square_map() -> Arc<ConformalMap> {
        static MAP: OnceLock<Arc<ConformalMap>> = OnceLock::new();
        MAP.get_or_init(|| {
            Arc::new(ConformalMap::new(unit_square(), spec()).expect("square map solves"))
        })
        .clone()
    }

    fn test_budget() -> NormBudget {
        NormBudget {
            bands: 5,
            wedges: 7,
            order_radial: 5,
            order_angular: 5,
            probe_depth: 6,
            ..NormBudget::default()
        }
    }

    #[test]
    fn probe_radii_schedule_and_validation() {
        let radii = probe_radii(3);
        assert_eq!(radii, vec![0.5, 0.75, 0.875]);
        let density = |_: Complex64| 1.0;
        assert!(divergence_probe(&density, &[0.5], 0.05, &spec()).is_err());
        assert!(divergence_probe(&density, &[0.5, 0.5], 0.05, &spec()).is_err());
        assert!(divergence_probe(&density, &[0.5, 0.75], 0.0, &spec()).is_err());
    }

    #[test]
    fn constant_density_probe_converges_to_full_mass() {
        let probe =
            divergence_probe(&|_| 1.0, &probe_radii(PROBE_DEPTH), PROBE_MARGIN, &spec()).unwrap();
        assert_eq!(probe.verdict, ProbeVerdict::Convergent);
        let last = *probe.values.last().unwrap();
        assert!((last - 1.0).abs() < 1e-3, "mass {last} should approach 1");
        assert!(probe.fitted_exponent > 0.5);
        for v in probe.values.windows(2) {
            assert!(v[1] >= v[0]);
        }
    }

    #[test]
    fn log_divergence_is_flagged_by_cumulative_ratios() {
        let density = |w: Complex64| {
            let d = (one() - w).norm();
            1.0 / (d * d)
        };
        let probe =
            divergence_probe(&density, &probe_radii(PROBE_DEPTH), PROBE_MARGIN, &probe_spec())
                .unwrap();
        assert_eq!(probe.verdict, ProbeVerdict::Divergent);
        assert!(probe.fitted_exponent < 0.0);
        for (k, (&r, &v)) in probe.radii.iter().zip(&probe.values).enumerate() {
            let exact = -(1.0 - r * r).ln();
            assert!(
                (v - exact).abs() <= 1e-4 * exact,
                "ring sum {k}: {v} vs exact {exact}"
            );
        }
    }

    #[test]
    fn power_law_exponents_are_recovered_from_ring_fits() {
        let power_density = |gamma: f64| {
            move |w: Complex64| (one() - w).norm().powf(gamma)
        };
        let diverging = divergence_probe(
            &power_density(-2.4),
            &probe_radii(PROBE_DEPTH),
            PROBE_MARGIN,
            &probe_spec(),
        )
        .unwrap();
        assert_eq!(diverging.verdict, ProbeVerdict::Divergent);
        assert_abs_diff_eq!(diverging.fitted_exponent, -0.4, epsilon = 0.05);

        let converging = divergence_probe(
            &power_density(-0.8),
            &probe_radii(PROBE_DEPTH),
            PROBE_MARGIN,
            &probe_spec(),
        )
        .unwrap();
        assert_eq!(converging.verdict, ProbeVerdict::Convergent);
        assert!(converging.fitted_exponent > 0.5);
    }

    #[test]
    fn graded_rule_matches_closed_forms() {
        let budget = NormBudget::default();
        // Smooth: (1/pi) int_{|w|<R} |1 + w|^2 dA = R^2 + R^4/2.
        let r = 0.9;
        let nodes = graded_disk_nodes(r, 0.0, &[2.0, 4.0], &budget);
        let terms: Vec<f64> = nodes.iter().map(|&(w, wt)| (one() + w).norm_sqr() * wt).collect();
        let smooth = pairwise_sum(&terms);
        assert_abs_diff_eq!(smooth, r * r + r.powi(4) / 2.0, epsilon = 1e-7);

        // Corner-singular: (1/pi) int_{|w|<R} |1 - w|^{-2} dA = -ln(1 - R^2).
        let r = 1.0 - 2f64.powi(-6);
        let nodes = graded_disk_nodes(r, 0.0, &[1.3, -1.3], &budget);
        let terms: Vec<f64> = nodes
            .iter()
            .map(|&(w, wt)| {
                let d = (one() - w).norm();
                wt / (d * d)
            })
            .collect();
        let singular = pairwise_sum(&terms);
        let exact = -(1.0 - r * r).ln();
        assert!(
            (singular - exact).abs() <= 1e-3 * exact,
            "graded rule {singular} vs exact {exact}"
        );

        // Generic smooth density against the adaptive disk quadrature.
        let lopsided = |w: Complex64| Complex64::new((w.re).exp() * (1.0 + w.im * w.im), 0.0);
        let adaptive = integrate_disk(&lopsided, 0.95, &spec()).unwrap().re;
        let nodes = graded_disk_nodes(0.95, 0.7, &[-2.0], &budget);
        let terms: Vec<f64> = nodes.iter().map(|&(w, wt)| lopsided(w).re * wt).collect();
        let graded = pairwise_sum(&terms);
        assert!(
            (graded - adaptive).abs() <= 1e-6 * adaptive.abs(),
            "graded {graded} vs adaptive {adaptive}"
        );
    }

    #[test]
    fn corner_family_profiles_and_validation() {
        let map = square_map();
        let family = corner_family(&map, 0, &[0.5, 1.25]).unwrap();
        assert_eq!(family.members.len(), 2);
        assert_eq!(family.members[1].label, "s=1.2500");
        let zm = map.prevertex_points()[0];
        for member in &family.members {
            assert_abs_diff_eq!(member.disk_value(Complex64::new(0.0, 0.0)).norm(), 1.0, epsilon = 1e-12);
            let rho = 0.9;
            let along = member.disk_value(rho * zm).norm();
            assert_abs_diff_eq!(along, (1.0 - rho).powf(-member.s), epsilon = 1e-10 * along);
        }
        assert!(corner_family(&map, 9, &[0.5]).is_err());
        assert!(corner_family(&map, 0, &[]).is_err());
        assert!(corner_family(&map, 0, &[-1.0]).is_err());

        let exps = edge_exponents(1.2, 1.9, &[0.5, 0.95]).unwrap();
        assert_abs_diff_eq!(exps[0], 0.5 * 2.0 * 1.9 / 1.2, epsilon = 1e-14);
        assert_abs_diff_eq!(witness_exponent(1.9), 2.9, epsilon = 1e-14);
    }

    #[test]
    fn zero_symbol_gives_zero_ratio_table() {
        let map = square_map();
        let family = corner_family(&map, 0, &[0.25, 0.4]).unwrap();
        let table = estimate_operator_norm(
            &Symbol::constant(Complex64::new(0.0, 0.0)),
            &map,
            2.0,
            &family,
            None,
            &test_budget(),
        )
        .unwrap();
        assert!(table.rows.iter().all(|r| r.ratio == Some(0.0) && !r.diverged));
        assert_eq!(table.sup_ratio, 0.0);
        assert!(table.bounded);
    }

    #[test]
    fn doubling_the_symbol_doubles_every_ratio() {
        let map = square_map();
        let family = corner_family(&map, 0, &[0.3, 0.45]).unwrap();
        let budget = test_budget();
        let base = estimate_operator_norm(
            &Symbol::constant(one()),
            &map,
            2.0,
            &family,
            None,
            &budget,
        )
        .unwrap();
        let doubled = estimate_operator_norm(
            &Symbol::constant(one()).scaled(Complex64::new(2.0, 0.0)),
            &map,
            2.0,
            &family,
            None,
            &budget,
        )
        .unwrap();
        for (b, d) in base.rows.iter().zip(&doubled.rows) {
            let (rb, rd) = (b.ratio.unwrap(), d.ratio.unwrap());
            assert!(
                (rd - 2.0 * rb).abs() <= 1e-10 * rb,
                "ratio {rb} should double, got {rd}"
            );
        }
    }

    #[test]
    fn projection_contracts_on_the_unit_square_at_p_two() {
        let map = square_map();
        let exps = edge_exponents(2.0, 0.5, &[0.5, 0.7, 0.85, 0.95]).unwrap();
        let family = corner_family(&map, 0, &exps).unwrap();
        let table = estimate_operator_norm(
            &Symbol::constant(one()),
            &map,
            2.0,
            &family,
            None,
            &test_budget(),
        )
        .unwrap();
        assert!(table.rows.iter().all(|r| !r.diverged));
        assert!(
            table.sup_ratio <= 1.05,
            "projection ratio table sup {} exceeds the A^2 contraction bound",
            table.sup_ratio
        );
        assert!(table.bounded);
    }

    #[test]
    fn disk_and_whitney_routes_agree_at_an_interior_point() {
        // Use a symbol whose disk form vanishes at the rim so both routes'
        // truncation collars (Whitney squares vs. disk radius) are
        // quadratically small and the comparison isolates quadrature error.
        let map = square_map();
        let family = corner_family(&map, 0, &[0.25]).unwrap();
        let symbol = Symbol::example_53(Arc::clone(&map), 2.0).unwrap();
        let decomposition =
            crate::geometry::whitney_decompose(map.polygon(), 6).unwrap();
        let table = estimate_operator_norm(
            &symbol,
            &map,
            2.0,
            &family,
            Some(&decomposition),
            &test_budget(),
        )
        .unwrap();
        let residual = table.agreement_residual.expect("cross-route residual");
        assert!(
            residual <= 1e-2,
            "disk and Whitney routes disagree: residual {residual}"
        );
    }

    #[test]
    fn identity_53_exact_for_small_n() {
        for n in [0u32, 3] {
            let witness = example_53_identity(n, &spec()).unwrap();
            assert!(witness.exact_match, "coefficients differ at n = {n}");
            assert!(
                witness.max_numeric_residual <= 1e-8,
                "numeric residual {} at n = {n}",
                witness.max_numeric_residual
            );
            let frac = BigRational::new(BigInt::from(2), BigInt::from(i64::from(n) + 3));
            assert_eq!(witness.coefficients.get(&n), Some(&frac));
            assert_eq!(witness.coefficients.get(&(n + 1)), Some(&(-frac)));
        }
    }

    #[test]
    fn theta_integral_three_routes_agree() {
        let w = example_54_theta_integral(
            1,
            2,
            0.5,
            Complex64::new(0.3, 0.2),
            &spec(),
        )
        .unwrap();
        assert!(w.residual <= 1e-8, "numeric residual {}", w.residual);
        assert!(w.szego_residual <= 1e-8, "szego residual {}", w.szego_residual);

        // z = 0, n = 0: the closed form collapses to 2 pi (-1)^m r^m.
        let at_zero =
            example_54_theta_integral(0, 2, 0.5, Complex64::new(0.0, 0.0), &spec()).unwrap();
        let expected = 2.0 * PI * 0.25;
        assert_abs_diff_eq!(at_zero.closed_form.re, expected, epsilon = 1e-12);
        assert!(at_zero.residual <= 1e-8);
        assert!(at_zero.szego_residual <= 1e-8);

        assert!(example_54_theta_integral(0, 1, 0.5, Complex64::new(0.0, 0.0), &spec()).is_err());
    }

    #[test]
    fn inner_projection_constancy_for_weight_and_truncation() {
        let weighted = weighted_inner_constancy(&spec()).unwrap();
        assert_abs_diff_eq!(weighted.expected, 0.5, epsilon = 1e-15);
        assert!(weighted.max_residual <= 1e-6, "residual {}", weighted.max_residual);

        let truncated = truncated_inner_constancy(0.7, &spec()).unwrap();
        assert_abs_diff_eq!(truncated.expected, 0.49, epsilon = 1e-15);
        assert!(truncated.max_residual <= 1e-8, "residual {}", truncated.max_residual);

        assert!(truncated_inner_constancy(1.0, &spec()).is_err());
    }

    #[test]
    fn tame_square_report_expects_and_finds_convergence() {
        let map = square_map();
        let report = example_e1b_report(&map, 3.0, 0.6, 8, PROBE_MARGIN, &spec()).unwrap();
        assert!(!report.expected_divergent);
        assert_eq!(report.probe.verdict, ProbeVerdict::Convergent);
        assert_abs_diff_eq!(report.exponent, 0.5, epsilon = 1e-12);
        assert_eq!(report.support_radius, Some(0.6));
        assert!(report.inner.max_residual <= 1e-8);

        // The square never reaches the constant-symbol failure regime.
        assert!(example_e0a_divergence(&map, 1.2, 8, PROBE_MARGIN).is_err());
    }
}
