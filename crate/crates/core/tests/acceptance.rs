//! Release acceptance suite: one check per shipping criterion, each printing
//! a single PASS/FAIL line with its headline measurements.
//!
//! Run `cargo test -p polyberg --test acceptance -- --nocapture` to see the
//! lines on success; on failure the panic message reprints the whole table.
//! Every check is self-contained and deterministic (fixed seeds, fixed
//! grids), and the timed checks enforce their own runtime budgets.

use std::any::Any;
use std::collections::{BTreeMap, HashSet};
use std::f64::consts::{PI, SQRT_2};
use std::panic::{AssertUnwindSafe, catch_unwind};
use std::sync::Arc;
use std::time::Instant;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use polyberg::geometry::{dist_square_boundary, max_enlargement_overlap};
use polyberg::polygons::{
    equilateral_triangle, l_hexagon, random_simple_7gon, regular_ngon, spiked_pentagon,
    unit_square,
};
use polyberg::{
    ComplexPolynomial, ConditionSampling, ConditionVerdict, ConformalMap, KernelContext,
    NormBudget, Polygon, ProbeVerdict, QuadratureSpec, Symbol, apply_generalized, check_symbol_condition,
    classify, corner_family, disk_project, edge_exponents, example_53_identity,
    example_54_theta_integral, example_e0a_divergence, example_e0b_boundedness,
    example_e1b_report, f_decomposition_check, probe_spec, project_monomial_exact,
    project_weighted_monomial_exact, whitney_decompose, witness_exponent,
};

type Check = std::result::Result<String, String>;

struct Outcome {
    label: &'static str,
    detail: Check,
    secs: f64,
}

fn run(label: &'static str, f: impl FnOnce() -> Check) -> Outcome {
    let t = Instant::now();
    let detail = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(format!("panicked: {}", panic_text(&p))),
    };
    Outcome {
        label,
        detail,
        secs: t.elapsed().as_secs_f64(),
    }
}

fn panic_text(p: &Box<dyn Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}

fn estr(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Deterministic rejection sample of interior points, kept at least
/// `margin_frac * diameter` away from the boundary.
fn interior_points(polygon: &Polygon, count: usize, seed: u64, margin_frac: f64) -> Vec<Complex64> {
    let (lo, hi) = polygon.bounding_box();
    let margin = margin_frac * polygon.diameter();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let w = Complex64::new(
            rng.random_range(lo.re..hi.re),
            rng.random_range(lo.im..hi.im),
        );
        if polygon.contains(w) && polygon.dist_to_boundary(w) >= margin {
            out.push(w);
        }
    }
    out
}

fn wrap_angle(x: f64) -> f64 {
    let mut y = x % (2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    if y <= -PI {
        y += 2.0 * PI;
    }
    y
}

fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

// ---------------------------------------------------------------------------
// 1. Whitney invariants
// ---------------------------------------------------------------------------

fn whitney_invariants() -> Check {
    let t = Instant::now();
    let cases = [
        ("unit square", unit_square()),
        ("L-hexagon", l_hexagon()),
        ("random 7-gon", random_simple_7gon(42)),
    ];
    let max_level = 6u32;
    let mut total = 0usize;
    let mut worst_overlap = 0usize;
    for (name, polygon) in cases {
        let d = whitney_decompose(&polygon, max_level).map_err(|e| format!("{name}: {e}"))?;
        total += d.len();
        // Exact pairwise disjointness: every square's footprint on the
        // finest-level integer grid must claim fresh cells.
        let mut cells: HashSet<(i64, i64)> = HashSet::new();
        for ws in &d.squares {
            let scale = 1i64 << (max_level - ws.level);
            let side = ws.square.side;
            let ix = ((ws.square.anchor.re - d.origin.re) / side).round() as i64 * scale;
            let iy = ((ws.square.anchor.im - d.origin.im) / side).round() as i64 * scale;
            for a in 0..scale {
                for b in 0..scale {
                    if !cells.insert((ix + a, iy + b)) {
                        return Err(format!(
                            "{name}: overlapping squares at grid cell ({}, {})",
                            ix + a,
                            iy + b
                        ));
                    }
                }
            }
        }
        // Distance comparability and containment, rechecked per square.
        let tol = 1e-9 * d.base;
        for ws in &d.squares {
            let s = ws.square.side;
            let dist = dist_square_boundary(&ws.square, &polygon);
            if !(dist >= SQRT_2 * s - tol && dist <= 4.0 * SQRT_2 * s + tol) {
                return Err(format!(
                    "{name}: square at ({:.4}, {:.4}) side {:.3e} has boundary distance {:.3e} outside [sqrt2 s, 4 sqrt2 s]",
                    ws.square.anchor.re, ws.square.anchor.im, s, dist
                ));
            }
            if !polygon.contains(ws.square.center()) {
                return Err(format!("{name}: square center escaped the domain"));
            }
        }
        let (overlap, _review) = max_enlargement_overlap(&d, &polygon, 10_000, 0x5eed);
        if overlap > 144 {
            return Err(format!("{name}: enlargement overlap {overlap} > 144"));
        }
        worst_overlap = worst_overlap.max(overlap);
    }
    let secs = t.elapsed().as_secs_f64();
    if secs >= 10.0 {
        return Err(format!("runtime {secs:.1}s exceeds the 10s budget"));
    }
    Ok(format!(
        "{total} squares over 3 polygons at max_level {max_level}; disjoint, bounds hold, max enlargement overlap {worst_overlap} <= 144"
    ))
}

// ---------------------------------------------------------------------------
// 2. Parameter solver on regular polygons
// ---------------------------------------------------------------------------

fn vertex_residuals(map: &ConformalMap) -> std::result::Result<f64, String> {
    let polygon = map.polygon();
    let scale = polygon.diameter();
    let mut worst = 0.0f64;
    for (k, &v) in polygon.vertices().iter().enumerate() {
        let got = map.psi_at_prevertex(k).map_err(estr)?;
        worst = worst.max((got - v).norm() / scale);
    }
    Ok(worst)
}

fn solver_regular_polygons(shared: &[(&'static str, &Arc<ConformalMap>)]) -> Check {
    let t = Instant::now();
    let spec = QuadratureSpec::default();
    let mut worst_angle = 0.0f64;
    let mut worst_residual = 0.0f64;
    for n in 3..=8usize {
        let polygon = regular_ngon(n).map_err(estr)?;
        let map = ConformalMap::new(polygon, spec.clone()).map_err(|e| format!("{n}-gon: {e}"))?;
        let pts = map.prevertex_points();
        let step = 2.0 * PI / n as f64;
        let sign = if wrap_angle(pts[1].arg() - pts[0].arg()) >= 0.0 {
            1.0
        } else {
            -1.0
        };
        for (k, z) in pts.iter().enumerate() {
            let dev = wrap_angle(z.arg() - pts[0].arg() - sign * step * k as f64).abs();
            worst_angle = worst_angle.max(dev);
        }
        worst_residual = worst_residual.max(vertex_residuals(&map).map_err(|e| format!("{n}-gon: {e}"))?);
    }
    // The interpolation residual must also hold on the irregular testbed maps.
    for (name, map) in shared {
        worst_residual =
            worst_residual.max(vertex_residuals(map).map_err(|e| format!("{name}: {e}"))?);
    }
    let secs = t.elapsed().as_secs_f64();
    if worst_angle > 1e-8 {
        return Err(format!(
            "prevertex deviation from equispaced: {worst_angle:.3e} > 1e-8"
        ));
    }
    if worst_residual > 1e-8 {
        return Err(format!(
            "vertex interpolation residual {worst_residual:.3e} x diam > 1e-8 x diam"
        ));
    }
    if secs >= 30.0 {
        return Err(format!("runtime {secs:.1}s exceeds the 30s budget"));
    }
    Ok(format!(
        "regular 3..8-gons equispaced to {worst_angle:.1e}; worst vertex residual {worst_residual:.1e} x diam"
    ))
}

// ---------------------------------------------------------------------------
// 3. Roundtrip and derivative jets on the L-shaped domain
// ---------------------------------------------------------------------------

fn roundtrip_and_jets(map: &ConformalMap) -> Check {
    let mut worst_rt = 0.0f64;
    let mut tested = 0usize;
    for i in 0..40 {
        for j in 0..40 {
            let x = -0.99 + 1.98 * i as f64 / 39.0;
            let y = -0.99 + 1.98 * j as f64 / 39.0;
            let z = Complex64::new(x, y);
            if z.norm() > 0.99 {
                continue;
            }
            let w = map.psi(z).map_err(estr)?;
            let back = map.phi(w).map_err(estr)?;
            worst_rt = worst_rt.max((back - z).norm());
            tested += 1;
        }
    }
    if worst_rt > 1e-9 {
        return Err(format!(
            "roundtrip error {worst_rt:.3e} > 1e-9 over {tested} grid points"
        ));
    }

    let h = 1e-5;
    let step = Complex64::new(h, 0.0);
    let mut worst_d1 = 0.0f64;
    let mut worst_d2 = 0.0f64;
    let mut worst_d3 = 0.0f64;
    for &w in &interior_points(map.polygon(), 100, 0xC3, 0.04) {
        let jet = map.phi_derivatives(w).map_err(estr)?;
        let fp = (map.phi(w + step).map_err(estr)? - map.phi(w - step).map_err(estr)?) / (2.0 * h);
        worst_d1 = worst_d1.max((fp - jet.d1).norm() / jet.d1.norm());
        let jp = map.phi_derivatives(w + step).map_err(estr)?;
        let jm = map.phi_derivatives(w - step).map_err(estr)?;
        let d2 = (jp.d1 - jm.d1) / (2.0 * h);
        worst_d2 = worst_d2.max((d2 - jet.d2).norm() / jet.d2.norm().max(1.0));
        let d3 = (jp.d2 - jm.d2) / (2.0 * h);
        worst_d3 = worst_d3.max((d3 - jet.d3).norm() / jet.d3.norm().max(1.0));
    }
    let worst_fd = worst_d1.max(worst_d2).max(worst_d3);
    if worst_fd > 1e-4 {
        return Err(format!(
            "derivative vs finite differences: {worst_fd:.3e} > 1e-4 (d1 {worst_d1:.1e}, d2 {worst_d2:.1e}, d3 {worst_d3:.1e})"
        ));
    }
    Ok(format!(
        "roundtrip {worst_rt:.1e} over {tested} points; derivative jets within {worst_fd:.1e} of finite differences at 100 points"
    ))
}

// ---------------------------------------------------------------------------
// 4. Distortion band
// ---------------------------------------------------------------------------

fn koebe_band(shared: &[(&'static str, &Arc<ConformalMap>)]) -> Check {
    let spec = QuadratureSpec::default();
    let extra = [
        ("triangle", Arc::new(ConformalMap::new(equilateral_triangle(), spec.clone()).map_err(estr)?)),
        ("random 7-gon", Arc::new(ConformalMap::new(random_simple_7gon(42), spec.clone()).map_err(estr)?)),
    ];
    let mut lo_seen = f64::INFINITY;
    let mut hi_seen = f64::NEG_INFINITY;
    let all: Vec<(&str, &Arc<ConformalMap>)> = shared
        .iter()
        .map(|&(n, m)| (n, m))
        .chain(extra.iter().map(|(n, m)| (*n, m)))
        .collect();
    for (name, map) in all {
        for (i, &w) in interior_points(map.polygon(), 1000, 0xB4D, 0.002).iter().enumerate() {
            let r = map.koebe_ratio(w).map_err(|e| format!("{name}: {e}"))?;
            if !(r >= 0.25 - 1e-9 && r <= 1.0 + 1e-9) {
                return Err(format!(
                    "{name}: ratio {r:.12} outside [0.25, 1.0] at sample {i} ({:.4}, {:.4})",
                    w.re, w.im
                ));
            }
            lo_seen = lo_seen.min(r);
            hi_seen = hi_seen.max(r);
        }
    }
    Ok(format!(
        "4000 interior samples over 4 polygons stay in [0.25, 1.0]; observed range [{lo_seen:.4}, {hi_seen:.4}]"
    ))
}

// ---------------------------------------------------------------------------
// 5. Exact disk projection identities
// ---------------------------------------------------------------------------

fn disk_projection_identities() -> Check {
    let zero = BigRational::from(BigInt::from(0));
    for m in 0..=10u32 {
        // weight only: P[(1 - |w|^2) w^m] = w^m / (m + 2)
        let got = project_weighted_monomial_exact(m, 0);
        let want = rat(1, i64::from(m) + 2);
        if got != want {
            return Err(format!("weighted monomial ({m}, 0): got {got}, want {want}"));
        }
        for n in 0..=10u32 {
            let got = project_monomial_exact(m, n);
            let want = if m >= n {
                rat(i64::from(m - n) + 1, i64::from(m) + 1)
            } else {
                zero.clone()
            };
            if got != want {
                return Err(format!("monomial ({m}, {n}): got {got}, want {want}"));
            }
            let got = project_weighted_monomial_exact(m, n);
            let want = if m >= n {
                rat(
                    i64::from(m - n) + 1,
                    (i64::from(m) + 1) * (i64::from(m) + 2),
                )
            } else {
                zero.clone()
            };
            if got != want {
                return Err(format!("weighted monomial ({m}, {n}): got {got}, want {want}"));
            }
        }
    }

    // Numerical cross-check through the projection integral itself.
    let spec = QuadratureSpec::default();
    let samples = [Complex64::new(0.3, 0.2), Complex64::new(-0.45, 0.15)];
    let mut worst = 0.0f64;
    for m in 0..=6u32 {
        for n in 0..=6u32 {
            let plain = if m >= n {
                (f64::from(m - n) + 1.0) / (f64::from(m) + 1.0)
            } else {
                0.0
            };
            let weighted = if m >= n {
                (f64::from(m - n) + 1.0) / ((f64::from(m) + 1.0) * (f64::from(m) + 2.0))
            } else {
                0.0
            };
            for &z in &samples {
                let zp = if m >= n {
                    z.powi((m - n) as i32)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                let f = |w: Complex64| w.powi(m as i32) * w.conj().powi(n as i32);
                let got = disk_project(&f, z, &spec).map_err(estr)?;
                worst = worst.max((got - plain * zp).norm());
                let fw = |w: Complex64| {
                    (1.0 - w.norm_sqr()) * w.powi(m as i32) * w.conj().powi(n as i32)
                };
                let got = disk_project(&fw, z, &spec).map_err(estr)?;
                worst = worst.max((got - weighted * zp).norm());
            }
        }
    }
    if worst > 1e-8 {
        return Err(format!("numeric projection residual {worst:.3e} > 1e-8"));
    }
    Ok(format!(
        "exact identities for m, n <= 10; numeric projections within {worst:.1e} for m, n <= 6"
    ))
}

// ---------------------------------------------------------------------------
// 6. Rational projection of the rim-vanishing product
// ---------------------------------------------------------------------------

fn projection_identity_family() -> Check {
    let spec = QuadratureSpec::default();
    let mut worst = 0.0f64;
    for n in 0..=10u32 {
        let w = example_53_identity(n, &spec).map_err(estr)?;
        if !w.exact_match {
            let expect: BTreeMap<u32, String> =
                w.expected.iter().map(|(k, v)| (*k, v.to_string())).collect();
            let got: BTreeMap<u32, String> = w
                .coefficients
                .iter()
                .map(|(k, v)| (*k, v.to_string()))
                .collect();
            return Err(format!("n = {n}: coefficients {got:?} != expected {expect:?}"));
        }
        worst = worst.max(w.max_numeric_residual);
    }
    if worst > 1e-8 {
        return Err(format!("numeric residual {worst:.3e} > 1e-8"));
    }
    Ok(format!(
        "exact rational match for n = 0..10; worst numeric residual {worst:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// 7. Theta integral against its closed form
// ---------------------------------------------------------------------------

fn theta_integral_grid() -> Check {
    let t = Instant::now();
    let spec = QuadratureSpec::default();
    let zs = [
        Complex64::new(0.0, 0.0),
        Complex64::new(0.3, 0.2),
        Complex64::new(-0.5, 0.0),
    ];
    let mut worst = 0.0f64;
    let mut worst_szego = 0.0f64;
    let mut count = 0usize;
    for n in [0u32, 1, 3] {
        for m in [2u32, 3, 4] {
            for r in [0.3f64, 0.7] {
                for &z in &zs {
                    let w = example_54_theta_integral(n, m, r, z, &spec).map_err(estr)?;
                    worst = worst.max(w.residual);
                    worst_szego = worst_szego.max(w.szego_residual);
                    count += 1;
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    if worst > 1e-8 {
        return Err(format!("closed-form residual {worst:.3e} > 1e-8"));
    }
    if worst_szego > 1e-8 {
        return Err(format!("boundary-route residual {worst_szego:.3e} > 1e-8"));
    }
    if secs >= 5.0 {
        return Err(format!("runtime {secs:.1}s exceeds the 5s budget"));
    }
    Ok(format!(
        "{count} grid cases within {worst:.1e} of the closed form (boundary route {worst_szego:.1e})"
    ))
}

// ---------------------------------------------------------------------------
// 8. Boundedness classifier
// ---------------------------------------------------------------------------

fn classifier_truth_table() -> Check {
    // Worked cases: p = 3 for any angle; p = 5 splits at alpha = 5/3;
    // p = 1.2 rejects alpha = 1.9.
    for alpha in [1.1, 1.5, 1.9] {
        let v = classify(3.0, alpha).map_err(estr)?;
        if !(v.projection_bounded && v.main1_hypothesis) {
            return Err(format!("p = 3, alpha = {alpha}: expected unconditional boundedness"));
        }
    }
    let v = classify(5.0, 1.5).map_err(estr)?;
    if !(v.projection_bounded && v.main1_hypothesis) {
        return Err("p = 5, alpha = 1.5: expected bounded".into());
    }
    let v = classify(5.0, 1.8).map_err(estr)?;
    if v.projection_bounded || v.main1_hypothesis {
        return Err("p = 5, alpha = 1.8: expected unbounded".into());
    }
    let v = classify(1.2, 1.9).map_err(estr)?;
    if v.projection_bounded || v.main1_hypothesis {
        return Err("p = 1.2, alpha = 1.9: expected unbounded".into());
    }

    // Grid consistency: the exact verdict must agree with the floating
    // inequalities away from the critical manifolds, and the
    // unconditional-convergence hypothesis must imply boundedness.
    let mut checked = 0usize;
    for i in 0..100 {
        for j in 0..100 {
            let p = 1.02 + 6.96 * i as f64 / 99.0;
            let alpha = 1.005 + 0.985 * j as f64 / 99.0;
            let v = classify(p, alpha).map_err(estr)?;
            let (lhs, rhs) = if p <= 2.0 {
                ((2.0 - p) * (alpha - 1.0), 2.0 * (p - 1.0))
            } else {
                ((p - 2.0) * (alpha - 1.0), 2.0)
            };
            if (lhs - rhs).abs() > 1e-9 && v.projection_bounded != (lhs < rhs) {
                return Err(format!(
                    "grid inconsistency at p = {p:.4}, alpha = {alpha:.4}: exact {} vs float {}",
                    v.projection_bounded,
                    lhs < rhs
                ));
            }
            if v.main1_hypothesis && !v.projection_bounded {
                return Err(format!(
                    "p = {p:.4}, alpha = {alpha:.4}: hypothesis met but projection unbounded"
                ));
            }
            let unconditional = (4.0 / 3.0..=4.0).contains(&p);
            if unconditional != (v.angle_threshold.is_none() && v.weighted_threshold.is_none()) {
                return Err(format!(
                    "p = {p:.4}: threshold fields inconsistent with the regime"
                ));
            }
            checked += 1;
        }
    }
    Ok(format!(
        "worked cases match; {checked} grid points consistent, hypothesis always implies boundedness"
    ))
}

// ---------------------------------------------------------------------------
// 9. Averaged-symbol condition
// ---------------------------------------------------------------------------

fn symbol_condition_contrast() -> Check {
    let polygon = unit_square();
    let sampling = ConditionSampling::default();

    let c = Complex64::new(1.5, -2.0);
    let report =
        check_symbol_condition(&Symbol::constant(c), &polygon, 5, &sampling).map_err(estr)?;
    if report.verdict != ConditionVerdict::Pass {
        return Err(format!("constant symbol verdict {:?}, expected pass", report.verdict));
    }
    if (report.sup_average - c.norm()).abs() > 1e-9 {
        return Err(format!(
            "constant symbol sup {} differs from |c| = {}",
            report.sup_average,
            c.norm()
        ));
    }

    let growth = check_symbol_condition(
        &Symbol::inv_boundary_dist(polygon.clone()),
        &polygon,
        6,
        &sampling,
    )
    .map_err(estr)?;
    if growth.verdict != ConditionVerdict::Fail {
        return Err(format!(
            "reciprocal-distance verdict {:?}, expected fail",
            growth.verdict
        ));
    }
    let maxima: BTreeMap<u32, f64> = growth.level_maxima.iter().copied().collect();
    let mut min_factor = f64::INFINITY;
    for l in 3..6u32 {
        let (a, b) = match (maxima.get(&l), maxima.get(&(l + 1))) {
            (Some(a), Some(b)) => (*a, *b),
            _ => return Err(format!("levels {l} and {} not both sampled", l + 1)),
        };
        min_factor = min_factor.min(b / a);
    }
    if min_factor < 1.8 {
        return Err(format!(
            "level growth factor {min_factor:.3} < 1.8 over levels 3-6"
        ));
    }
    Ok(format!(
        "constant passes with sup exactly |c|; reciprocal distance fails with growth factor >= {min_factor:.2} per level"
    ))
}

// ---------------------------------------------------------------------------
// 10. Per-square integration by parts
// ---------------------------------------------------------------------------

fn parts_identity(map: &Arc<ConformalMap>) -> Check {
    let spec = QuadratureSpec::default();
    let ctx = KernelContext::new(Arc::clone(map));
    let decomposition = whitney_decompose(map.polygon(), 4).map_err(estr)?;
    if decomposition.len() < 20 {
        return Err(format!("only {} squares available", decomposition.len()));
    }
    let symbols = [
        Symbol::constant(Complex64::new(0.8, -0.3)),
        Symbol::linear(0.6, -0.35, Complex64::new(1.0, 0.4)),
    ];
    let functions = [
        ComplexPolynomial::monomial(2),
        ComplexPolynomial::new(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(-0.4, 0.2),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.3, 0.0),
        ]),
    ];
    let z = Complex64::new(0.42, 0.58);
    let mut worst = 0.0f64;
    for ws in decomposition.squares.iter().take(20) {
        for a in &symbols {
            for f in &functions {
                let d = f_decomposition_check(a, f, &ctx, &ws.square, z, &spec).map_err(estr)?;
                let rel = d.residual / d.direct.norm().max(1e-9);
                worst = worst.max(rel);
            }
        }
    }
    if worst > 1e-6 {
        return Err(format!("relative residual {worst:.3e} > 1e-6"));
    }
    Ok(format!(
        "80 square x symbol x function cases recombine within {worst:.1e} relative"
    ))
}

// ---------------------------------------------------------------------------
// 11. Partial sums reproduce analytic inputs
// ---------------------------------------------------------------------------

fn aitken(x1: Complex64, x2: Complex64, x3: Complex64) -> Complex64 {
    let denom = x3 - 2.0 * x2 + x1;
    if denom.norm() < 1e-14 {
        x3
    } else {
        let d = x3 - x2;
        x3 - d * d / denom
    }
}

fn partial_sum_convergence(map: &Arc<ConformalMap>) -> Check {
    let spec = QuadratureSpec::default();
    let ctx = KernelContext::new(Arc::clone(map));
    let decomposition = whitney_decompose(map.polygon(), 6).map_err(estr)?;
    let a = Symbol::constant(Complex64::new(1.0, 0.0));
    let f = |w: Complex64| Ok(w * w);
    let points = [
        Complex64::new(0.5, 0.5),
        Complex64::new(0.37, 0.41),
        Complex64::new(0.68, 0.59),
        Complex64::new(0.52, 0.24),
        Complex64::new(0.21, 0.73),
    ];
    let mut worst = 0.0f64;
    for &z in &points {
        let app = apply_generalized(&a, &f, &ctx, &decomposition, z, 0.0, &spec).map_err(estr)?;
        let by_level: BTreeMap<u32, Complex64> = app.level_values.iter().copied().collect();
        let s = |l: u32| -> std::result::Result<Complex64, String> {
            by_level
                .get(&l)
                .copied()
                .ok_or_else(|| format!("level {l} missing from the sweep"))
        };
        let extrapolated = aitken(s(4)?, s(5)?, s(6)?);
        let err = (extrapolated - z * z).norm();
        worst = worst.max(err);
        if err > 1e-3 {
            return Err(format!(
                "extrapolated value off by {err:.3e} > 1e-3 at ({:.2}, {:.2})",
                z.re, z.im
            ));
        }
        let last = s(6)?;
        let tails: Vec<f64> = (2..6u32)
            .map(|l| s(l).map(|v| (v - last).norm()))
            .collect::<std::result::Result<_, _>>()?;
        for pair in tails.windows(2) {
            if !(pair[1] < pair[0]) {
                return Err(format!(
                    "tail sequence {tails:?} is not strictly decreasing at ({:.2}, {:.2})",
                    z.re, z.im
                ));
            }
        }
    }
    Ok(format!(
        "identity symbol reproduces w^2 at 5 points within {worst:.1e} after extrapolation; tails decrease monotonically"
    ))
}

// ---------------------------------------------------------------------------
// 12. Divergence probes
// ---------------------------------------------------------------------------

fn divergence_probes(pent18: &Arc<ConformalMap>, pent19: &Arc<ConformalMap>) -> Check {
    let spec = probe_spec();
    let depth = 12;
    let margin = 0.05;

    let hard = example_e1b_report(pent18, 5.0, 0.5, depth, margin, &spec).map_err(estr)?;
    if hard.probe.verdict != ProbeVerdict::Divergent || !hard.expected_divergent {
        return Err(format!(
            "p = 5 probe verdict {:?}, expected divergent",
            hard.probe.verdict
        ));
    }
    let fitted = hard.probe.fitted_exponent;
    if !(-0.5..=-0.3).contains(&fitted) {
        return Err(format!("p = 5 fitted exponent {fitted:.4} outside -0.4 +/- 0.1"));
    }

    let easy = example_e1b_report(pent18, 3.0, 0.5, depth, margin, &spec).map_err(estr)?;
    if easy.probe.verdict != ProbeVerdict::Convergent || easy.expected_divergent {
        return Err(format!(
            "p = 3 probe verdict {:?}, expected convergent",
            easy.probe.verdict
        ));
    }

    let constant = example_e0a_divergence(pent19, 1.2, depth, margin).map_err(estr)?;
    if constant.probe.verdict != ProbeVerdict::Divergent {
        return Err(format!(
            "constant-symbol probe verdict {:?}, expected divergent",
            constant.probe.verdict
        ));
    }
    Ok(format!(
        "p = 5 divergent with fitted exponent {fitted:.3}; p = 3 convergent; constant-symbol case divergent at p = 1.2"
    ))
}

// ---------------------------------------------------------------------------
// 13. Weighted regime ratio tables
// ---------------------------------------------------------------------------

fn weighted_regime_tables(pent19: &Arc<ConformalMap>) -> Check {
    let p = 1.2;
    let polygon = pent19.polygon();
    let alpha = polygon.alpha_max();
    let threshold = (2.0 - p) * (alpha - 1.0) - 2.0 * (p - 1.0);
    let t = 2.0 * threshold;
    let mut exponents = edge_exponents(p, alpha, &[0.5, 0.7, 0.85, 0.95]).map_err(estr)?;
    exponents.push(witness_exponent(alpha));
    let family = corner_family(pent19, polygon.alpha_max_index(), &exponents).map_err(estr)?;
    let budget = NormBudget::default();

    let decayed = example_e0b_boundedness(pent19, p, t, &family, &budget).map_err(estr)?;
    if !decayed.hypothesis_met {
        return Err(format!("t = {t:.3} should satisfy the decay hypothesis"));
    }
    if !decayed.table.bounded {
        return Err("decayed table flagged unbounded".into());
    }
    let growth = decayed.table.max_consecutive_growth;
    if growth > 1.10 {
        return Err(format!("ratio growth {growth:.3} exceeds 10%"));
    }

    let control = example_e0b_boundedness(pent19, p, 0.0, &family, &budget).map_err(estr)?;
    if control.hypothesis_met {
        return Err("t = 0 control should not satisfy the decay hypothesis".into());
    }
    if control.table.bounded || !control.table.rows.iter().any(|r| r.diverged) {
        return Err("t = 0 control failed to reproduce the divergence".into());
    }
    Ok(format!(
        "t = {t:.2} = 2 x threshold bounded with {:.1}% max growth; t = 0 control diverges",
        (growth - 1.0) * 100.0
    ))
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance() {
    let spec = QuadratureSpec::default();
    let square_map = Arc::new(
        ConformalMap::new(unit_square(), spec.clone()).expect("unit square map must solve"),
    );
    let hex_map =
        Arc::new(ConformalMap::new(l_hexagon(), spec.clone()).expect("L-hexagon map must solve"));
    let pent18 = Arc::new(
        ConformalMap::new(
            spiked_pentagon(1.8).expect("pentagon construction"),
            spec.clone(),
        )
        .expect("spiked pentagon (1.8) map must solve"),
    );
    let pent19 = Arc::new(
        ConformalMap::new(
            spiked_pentagon(1.9).expect("pentagon construction"),
            spec.clone(),
        )
        .expect("spiked pentagon (1.9) map must solve"),
    );

    let shared: Vec<(&'static str, &Arc<ConformalMap>)> = vec![
        ("unit square", &square_map),
        ("L-hexagon", &hex_map),
        ("spiked pentagon", &pent18),
    ];

    let outcomes = vec![
        run("criterion 1, Whitney invariants", whitney_invariants),
        run("criterion 2, parameter solver", || {
            solver_regular_polygons(&shared)
        }),
        run("criterion 3, roundtrip and jets", || {
            roundtrip_and_jets(&hex_map)
        }),
        run("criterion 4, distortion band", || {
            koebe_band(&shared[..2])
        }),
        run("criterion 5, disk projection identities", disk_projection_identities),
        run("criterion 6, rational projection family", projection_identity_family),
        run("criterion 7, theta integral grid", theta_integral_grid),
        run("criterion 8, boundedness classifier", classifier_truth_table),
        run("criterion 9, averaged-symbol condition", symbol_condition_contrast),
        run("criterion 10, per-square integration by parts", || {
            parts_identity(&square_map)
        }),
        run("criterion 11, partial-sum convergence", || {
            partial_sum_convergence(&square_map)
        }),
        run("criterion 12, divergence probes", || {
            divergence_probes(&pent18, &pent19)
        }),
        run("criterion 13, weighted regime tables", || {
            weighted_regime_tables(&pent19)
        }),
    ];

    let mut all_pass = true;
    let mut lines = Vec::new();
    for o in &outcomes {
        let (tag, detail) = match &o.detail {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => {
                all_pass = false;
                ("FAIL", d.as_str())
            }
        };
        lines.push(format!("[{tag}] {} ({:.1}s) - {detail}", o.label, o.secs));
    }
    let table = lines.join("\n");
    println!("{table}");
    assert!(all_pass, "acceptance failures:\n{table}");
}
