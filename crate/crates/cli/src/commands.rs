//! The seven subcommand runners.
//!
//! Each runner resolves its effective configuration, runs the corresponding
//! core computation, and emits a report envelope. Divergence experiments
//! additionally compare the detected verdict against the expectation implied
//! by the closed-form criteria and fail with exit code 4 on contradiction —
//! after the report has been written, so the evidence is always available.

use crate::config::{
    outputs, parse_f64_list, parse_point, parse_point_list, parse_u32_list, require_polygon,
    RunConfig,
};
use crate::report::{emit, envelope, opt_f64, Csv};
use crate::{
    Cli, ClassifyArgs, Command, ExperimentArgs, Failure, KernelArgs, MapSolveArgs, SymbolCheckArgs,
    ToeplitzApplyArgs, WhitneyArgs,
};
use num_complex::Complex64;
use polyberg::bergman::{kernel_from_jets, KernelContext};
use polyberg::classifier::classify;
use polyberg::experiments::{
    corner_family, edge_exponents, example_53_identity, example_54_theta_integral,
    example_e0a_divergence, example_e0b_boundedness, example_e1a_report, example_e1b_report,
    probe_spec, witness_exponent, DivergenceProbe, NormBudget, ProbeVerdict, NORM_GROWTH_TOL,
    PROBE_DEPTH, PROBE_MARGIN,
};
use polyberg::geometry::{
    dist_square_boundary, max_enlargement_overlap, whitney_decompose, Polygon,
};
use polyberg::scmap::ConformalMap;
use polyberg::toeplitz::{
    apply_generalized, check_symbol_condition, check_symbol_condition_weighted, ConditionSampling,
    Symbol, CONDITION_FAIL_RATIO, CONDITION_TREND_SLACK,
};
use polyberg::QuadratureSpec;
use serde::Serialize;
use std::sync::Arc;

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::MapSolve(args) => map_solve(args),
        Command::Whitney(args) => whitney(args),
        Command::Kernel(args) => kernel(args),
        Command::ToeplitzApply(args) => toeplitz_apply(args),
        Command::Classify(args) => classify_cmd(args),
        Command::SymbolCheck(args) => symbol_check(args),
        Command::Experiment(args) => experiment(args),
    }
}

fn point_pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn solve_map(polygon: &Polygon, spec: &QuadratureSpec) -> Result<Arc<ConformalMap>, Failure> {
    Ok(Arc::new(ConformalMap::new(polygon.clone(), spec.clone())?))
}

/// Point from flag "x,y" or config [x, y].
fn resolve_point(
    flag: &Option<String>,
    cfg_value: Option<[f64; 2]>,
    what: &str,
) -> Result<Complex64, Failure> {
    match flag {
        Some(s) => parse_point(s),
        None => cfg_value
            .map(|[x, y]| Complex64::new(x, y))
            .ok_or_else(|| Failure::config(format!("{what} is required"))),
    }
}

// ---------------------------------------------------------------------------
// map-solve
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct MapSolveConfig {
    polygon: serde_json::Value,
    quadrature: QuadratureSpec,
}

#[derive(Serialize)]
struct MapSolveResults {
    vertices: Vec<[f64; 2]>,
    angle_factors: Vec<f64>,
    alpha_max: f64,
    alpha_max_vertex: usize,
    diameter: f64,
    prevertices: Vec<[f64; 2]>,
    prevertex_min_gap: f64,
    crowded: bool,
    vertex_residuals: Vec<f64>,
    max_vertex_residual: f64,
    max_relative_residual: f64,
}

fn map_solve(args: MapSolveArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let (polygon, polygon_descr) = require_polygon(&args.polygon, &cfg)?;
    let spec = cfg.quadrature.clone().unwrap_or_default();
    let map = solve_map(&polygon, &spec)?;

    let vertices = polygon.vertices();
    let mut residuals = Vec::with_capacity(vertices.len());
    for (k, &v) in vertices.iter().enumerate() {
        residuals.push((map.psi_at_prevertex(k)? - v).norm());
    }
    let max_residual = residuals.iter().cloned().fold(0.0f64, f64::max);

    let config = MapSolveConfig {
        polygon: polygon_descr,
        quadrature: spec.clone(),
    };
    let results = MapSolveResults {
        vertices: vertices.iter().map(|&v| point_pair(v)).collect(),
        angle_factors: polygon.angle_factors().to_vec(),
        alpha_max: polygon.alpha_max(),
        alpha_max_vertex: polygon.alpha_max_index(),
        diameter: polygon.diameter(),
        prevertices: map
            .prevertex_points()
            .iter()
            .map(|&z| point_pair(z))
            .collect(),
        prevertex_min_gap: map.config().min_gap(),
        crowded: map.config().is_crowded(),
        vertex_residuals: residuals.clone(),
        max_vertex_residual: max_residual,
        max_relative_residual: max_residual / polygon.diameter(),
    };

    let mut csv = Csv::new("vertex,x,y,angle_factor,prevertex_re,prevertex_im,residual");
    for (k, &v) in vertices.iter().enumerate() {
        let z = map.prevertex_points()[k];
        csv.row(&[
            k.to_string(),
            v.re.to_string(),
            v.im.to_string(),
            polygon.angle_factors()[k].to_string(),
            z.re.to_string(),
            z.im.to_string(),
            residuals[k].to_string(),
        ]);
    }

    let (json_path, csv_path) = outputs(&args.common.json, &args.common.csv, &cfg);
    let tolerances = Some(serde_json::json!({ "quadrature": spec }));
    let env = envelope("map-solve", "quadrature", config, tolerances, results);
    let body = csv.finish();
    emit(
        &env,
        json_path.as_deref(),
        csv_path.as_deref().map(|p| (p, body.as_str())),
    )
}

// ---------------------------------------------------------------------------
// whitney
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct WhitneyConfig {
    polygon: serde_json::Value,
    max_level: u32,
    overlap_samples: usize,
    seed: u64,
}

#[derive(Serialize)]
struct WhitneyResults {
    squares: usize,
    per_level: Vec<(u32, usize)>,
    base: f64,
    origin: [f64; 2],
    collar: f64,
    whitney_bounds_hold: bool,
    max_enlargement_overlap: usize,
    overlap_bound_holds: bool,
}

fn whitney(args: WhitneyArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let (polygon, polygon_descr) = require_polygon(&args.polygon, &cfg)?;
    let max_level = args.max_level.or(cfg.max_level).unwrap_or(6);
    let samples = args.samples.or(cfg.samples).unwrap_or(10_000);
    let seed = args.seed.or(cfg.seed).unwrap_or(0x5eed);

    let decomposition = whitney_decompose(&polygon, max_level)?;
    let mut per_level: Vec<(u32, usize)> = Vec::new();
    let mut bounds_hold = true;
    let mut csv = Csv::new("anchor_x,anchor_y,side,level,boundary_dist");
    for ws in &decomposition.squares {
        match per_level.last_mut() {
            Some((level, count)) if *level == ws.level => *count += 1,
            _ => per_level.push((ws.level, 1)),
        }
        let dist = dist_square_boundary(&ws.square, &polygon);
        let side = ws.square.side;
        bounds_hold &= dist >= std::f64::consts::SQRT_2 * side
            && dist <= 4.0 * std::f64::consts::SQRT_2 * side;
        csv.row(&[
            ws.square.anchor.re.to_string(),
            ws.square.anchor.im.to_string(),
            side.to_string(),
            ws.level.to_string(),
            dist.to_string(),
        ]);
    }
    let (max_overlap, _review) = max_enlargement_overlap(&decomposition, &polygon, samples, seed);

    let config = WhitneyConfig {
        polygon: polygon_descr,
        max_level,
        overlap_samples: samples,
        seed,
    };
    let results = WhitneyResults {
        squares: decomposition.len(),
        per_level,
        base: decomposition.base,
        origin: point_pair(decomposition.origin),
        collar: decomposition.collar(),
        whitney_bounds_hold: bounds_hold,
        max_enlargement_overlap: max_overlap,
        overlap_bound_holds: max_overlap <= 144,
    };

    let (json_path, csv_path) = outputs(&args.common.json, &args.common.csv, &cfg);
    let env = envelope("whitney", "geometric", config, None, results);
    let body = csv.finish();
    emit(
        &env,
        json_path.as_deref(),
        csv_path.as_deref().map(|p| (p, body.as_str())),
    )
}

// ---------------------------------------------------------------------------
// kernel
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct KernelConfig {
    polygon: serde_json::Value,
    z: Option<[f64; 2]>,
    w: Option<[f64; 2]>,
    grid: Option<usize>,
    quadrature: QuadratureSpec,
}

#[derive(Serialize)]
struct KernelPair {
    z: [f64; 2],
    w: [f64; 2],
    kernel: [f64; 2],
    conjugate_symmetry_residual: f64,
    phi_z: [f64; 2],
    phi_w: [f64; 2],
    boundary_dist_z: f64,
    boundary_dist_w: f64,
}

#[derive(Serialize)]
struct KernelGridSummary {
    points: usize,
    min_diagonal: f64,
    max_diagonal: f64,
}

#[derive(Serialize)]
struct KernelResults {
    #[serde(skip_serializing_if = "Option::is_none")]
    pair: Option<KernelPair>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<KernelGridSummary>,
}

fn interior_check(polygon: &Polygon, z: Complex64, what: &str) -> Result<(), Failure> {
    if !polygon.contains(z) {
        return Err(Failure::config(format!(
            "{what} = ({}, {}) is not an interior point of the polygon",
            z.re, z.im
        )));
    }
    Ok(())
}

fn kernel(args: KernelArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let (polygon, polygon_descr) = require_polygon(&args.polygon, &cfg)?;
    let spec = cfg.quadrature.clone().unwrap_or_default();
    let grid = args.grid.or(cfg.grid);

    let z = match (&args.z, cfg.z, grid) {
        (None, None, Some(_)) => None,
        (flag, cfg_z, _) => Some(resolve_point(flag, cfg_z, "an evaluation point --z")?),
    };
    let w = match (&args.w, cfg.w) {
        (Some(s), _) => Some(parse_point(s)?),
        (None, Some([x, y])) => Some(Complex64::new(x, y)),
        (None, None) => z,
    };

    let map = solve_map(&polygon, &spec)?;
    let pair = match (z, w) {
        (Some(z), Some(w)) => {
            interior_check(&polygon, z, "z")?;
            interior_check(&polygon, w, "w")?;
            let zjet = map.phi_derivatives(z)?;
            let wjet = map.phi_derivatives(w)?;
            let k = kernel_from_jets(&zjet, &wjet);
            let k_swapped = kernel_from_jets(&wjet, &zjet);
            Some(KernelPair {
                z: point_pair(z),
                w: point_pair(w),
                kernel: [k.re, k.im],
                conjugate_symmetry_residual: (k - k_swapped.conj()).norm(),
                phi_z: point_pair(zjet.z),
                phi_w: point_pair(wjet.z),
                boundary_dist_z: polygon.dist_to_boundary(z),
                boundary_dist_w: polygon.dist_to_boundary(w),
            })
        }
        _ => None,
    };

    let mut csv = Csv::new("x,y,kernel_re,kernel_im");
    let grid_summary = match grid {
        None => None,
        Some(n) => {
            if n < 2 {
                return Err(Failure::config("--grid needs at least 2 points per axis"));
            }
            let (lo, hi) = polygon.bounding_box();
            let margin = polygon.diameter() * 1e-3;
            let mut points = 0usize;
            let mut min_diag = f64::INFINITY;
            let mut max_diag = f64::NEG_INFINITY;
            for j in 0..n {
                for i in 0..n {
                    let x = lo.re + (i as f64 + 0.5) * (hi.re - lo.re) / n as f64;
                    let y = lo.im + (j as f64 + 0.5) * (hi.im - lo.im) / n as f64;
                    let p = Complex64::new(x, y);
                    if !polygon.contains(p) || polygon.dist_to_boundary(p) < margin {
                        continue;
                    }
                    let jet = map.phi_derivatives(p)?;
                    let k = kernel_from_jets(&jet, &jet);
                    points += 1;
                    min_diag = min_diag.min(k.re);
                    max_diag = max_diag.max(k.re);
                    csv.row(&[
                        x.to_string(),
                        y.to_string(),
                        k.re.to_string(),
                        k.im.to_string(),
                    ]);
                }
            }
            if points == 0 {
                return Err(Failure::config(
                    "the diagonal grid contains no interior points; increase --grid",
                ));
            }
            Some(KernelGridSummary {
                points,
                min_diagonal: min_diag,
                max_diagonal: max_diag,
            })
        }
    };

    if pair.is_none() && grid_summary.is_none() {
        return Err(Failure::config(
            "kernel needs an evaluation point (--z) or a diagonal grid (--grid)",
        ));
    }

    let config = KernelConfig {
        polygon: polygon_descr,
        z: z.map(point_pair),
        w: w.map(point_pair),
        grid,
        quadrature: spec.clone(),
    };
    let results = KernelResults {
        pair,
        grid: grid_summary,
    };
    let (json_path, csv_path) = outputs(&args.common.json, &args.common.csv, &cfg);
    let tolerances = Some(serde_json::json!({ "quadrature": spec }));
    let env = envelope("kernel", "quadrature", config, tolerances, results);
    let body = csv.finish();
    emit(
        &env,
        json_path.as_deref(),
        csv_path.as_deref().map(|p| (p, body.as_str())),
    )
}

// ---------------------------------------------------------------------------
// toeplitz-apply
// ---------------------------------------------------------------------------

type DomainFn = Box<dyn Fn(Complex64) -> polyberg::Result<Complex64> + Send + Sync>;

/// Builds the test function from its descriptor. Functions are defined
/// through disk coordinates so the same descriptors work on every polygon.
fn build_function(
    descr: &serde_json::Value,
    map: &Arc<ConformalMap>,
) -> Result<DomainFn, Failure> {
    let kind = descr["kind"]
        .as_str()
        .ok_or_else(|| Failure::config("function descriptor needs a string field 'kind'"))?;
    let params = &descr["params"];
    match kind {
        "constant" => {
            let c = Complex64::new(
                params["re"].as_f64().unwrap_or(1.0),
                params["im"].as_f64().unwrap_or(0.0),
            );
            Ok(Box::new(move |_| Ok(c)))
        }
        "disk-monomial" => {
            let n = params["n"].as_u64().ok_or_else(|| {
                Failure::config("disk-monomial needs an integer parameter 'n'")
            })? as u32;
            let map = Arc::clone(map);
            Ok(Box::new(move |xi| map.phi(xi).map(|w| w.powu(n))))
        }
        "corner-decay" => {
            let s = params["s"]
                .as_f64()
                .ok_or_else(|| Failure::config("corner-decay needs a numeric parameter 's'"))?;
            if !(s.is_finite() && s >= 0.0) {
                return Err(Failure::config(
                    "corner-decay exponent must be finite and nonnegative",
                ));
            }
            let vertex = match params["vertex"].as_u64() {
                Some(v) => v as usize,
                None => map.polygon().alpha_max_index(),
            };
            let points = map.prevertex_points();
            if vertex >= points.len() {
                return Err(Failure::config(format!(
                    "corner-decay vertex {vertex} out of range for a {}-gon",
                    points.len()
                )));
            }
            let zm = points[vertex];
            let map = Arc::clone(map);
            Ok(Box::new(move |xi| {
                map.phi(xi)
                    .map(|w| (Complex64::new(1.0, 0.0) - zm.conj() * w).powf(-s))
            }))
        }
        other => Err(Failure::config(format!(
            "unknown function kind '{other}' (expected constant, disk-monomial, or corner-decay)"
        ))),
    }
}

fn resolve_value(
    flag: &Option<String>,
    cfg_value: &Option<serde_json::Value>,
    what: &str,
) -> Result<serde_json::Value, Failure> {
    match flag {
        Some(s) => serde_json::from_str(s)
            .map_err(|e| Failure::config(format!("{what} descriptor: {e}"))),
        None => cfg_value
            .clone()
            .ok_or_else(|| Failure::config(format!("a {what} descriptor is required"))),
    }
}

#[derive(Serialize)]
struct ApplyConfig {
    polygon: serde_json::Value,
    symbol: serde_json::Value,
    f: serde_json::Value,
    max_level: u32,
    z: [f64; 2],
    tol: f64,
    quadrature: QuadratureSpec,
}

#[derive(Serialize)]
struct ApplyLevel {
    level: u32,
    cumulative: [f64; 2],
    increment: f64,
    absolute_sum: f64,
}

#[derive(Serialize)]
struct ApplyResults {
    value: [f64; 2],
    converged: bool,
    squares_evaluated: usize,
    decomposition_squares: usize,
    collar: f64,
    levels: Vec<ApplyLevel>,
}

fn toeplitz_apply(args: ToeplitzApplyArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let (polygon, polygon_descr) = require_polygon(&args.polygon, &cfg)?;
    let spec = cfg.quadrature.clone().unwrap_or_default();
    let max_level = args.max_level.or(cfg.max_level).unwrap_or(5);
    let tol = args.tol.or(cfg.tol).unwrap_or(1e-9);
    let z = resolve_point(&args.z, cfg.z, "an evaluation point --z")?;
    interior_check(&polygon, z, "z")?;
    let symbol_descr = resolve_value(&args.symbol, &cfg.symbol, "symbol")?;
    let f_descr = match (&args.f, &cfg.f) {
        (None, None) => serde_json::json!({"kind": "constant", "params": {"re": 1.0}}),
        (flag, cfg_f) => resolve_value(flag, cfg_f, "function")?,
    };

    let map = solve_map(&polygon, &spec)?;
    let symbol = Symbol::from_descriptor(&symbol_descr, &polygon, Some(&map))?;
    let f = build_function(&f_descr, &map)?;
    let decomposition = whitney_decompose(&polygon, max_level)?;
    let ctx = KernelContext::new(Arc::clone(&map));
    let app = apply_generalized(&symbol, &f, &ctx, &decomposition, z, tol, &spec)?;

    let mut levels = Vec::new();
    let mut csv = Csv::new("level,cumulative_re,cumulative_im,increment,absolute_sum");
    for (k, &(level, value)) in app.level_values.iter().enumerate() {
        let increment = app.level_increments[k];
        let absolute = app.level_abs[k].1;
        levels.push(ApplyLevel {
            level,
            cumulative: [value.re, value.im],
            increment,
            absolute_sum: absolute,
        });
        csv.row(&[
            level.to_string(),
            value.re.to_string(),
            value.im.to_string(),
            increment.to_string(),
            absolute.to_string(),
        ]);
    }

    let config = ApplyConfig {
        polygon: polygon_descr,
        symbol: symbol_descr,
        f: f_descr,
        max_level,
        z: point_pair(z),
        tol,
        quadrature: spec.clone(),
    };
    let results = ApplyResults {
        value: [app.value.re, app.value.im],
        converged: app.converged,
        squares_evaluated: app.squares_evaluated(),
        decomposition_squares: decomposition.len(),
        collar: decomposition.collar(),
        levels,
    };
    let (json_path, csv_path) = outputs(&args.common.json, &args.common.csv, &cfg);
    let tolerances = Some(serde_json::json!({
        "level_increment_tol": tol,
        "quadrature": spec,
    }));
    let env = envelope("toeplitz-apply", "quadrature", config, tolerances, results);
    let body = csv.finish();
    emit(
        &env,
        json_path.as_deref(),
        csv_path.as_deref().map(|p| (p, body.as_str())),
    )
}

// ---------------------------------------------------------------------------
// classify
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ClassifyConfig {
    p: f64,
    alpha_max: f64,
    weighted: bool,
}

fn classify_cmd(args: ClassifyArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let p = args
        .p
        .or(cfg.p)
        .ok_or_else(|| Failure::config("--p is required"))?;
    let alpha_max = args
        .alpha_max
        .or(cfg.alpha_max)
        .ok_or_else(|| Failure::config("--alpha-max is required"))?;
    let verdict = classify(p, alpha_max)?;
    if args.weighted && verdict.weighted_threshold.is_none() {
        return Err(Failure::config(
            "no weighted regime applies: 4/3 <= p <= 4 needs no corner weight",
        ));
    }

    let mut csv = Csv::new(
        "p,alpha_max,projection_bounded,main1_hypothesis,regime,angle_threshold,weighted_threshold",
    );
    csv.row(&[
        verdict.p.to_string(),
        verdict.alpha_max.to_string(),
        verdict.projection_bounded.to_string(),
        verdict.main1_hypothesis.to_string(),
        verdict.regime.to_string(),
        opt_f64(verdict.angle_threshold),
        opt_f64(verdict.weighted_threshold),
    ]);

    let config = ClassifyConfig {
        p,
        alpha_max,
        weighted: args.weighted,
    };
    let (json_path, csv_path) = outputs(&args.common.json, &args.common.csv, &cfg);
    let env = envelope("classify", "exact", config, None, verdict);
    let body = csv.finish();
    emit(
        &env,
        json_path.as_deref(),
        csv_path.as_deref().map(|p| (p, body.as_str())),
    )
}

// ---------------------------------------------------------------------------
// symbol-check
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SymbolCheckConfig {
    polygon: serde_json::Value,
    symbol: serde_json::Value,
    max_level: u32,
    sampling: ConditionSampling,
    #[serde(skip_serializing_if = "Option::is_none")]
    weighted_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vertex: Option<usize>,
}

fn symbol_check(args: SymbolCheckArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let (polygon, polygon_descr) = require_polygon(&args.polygon, &cfg)?;
    let symbol_descr = resolve_value(&args.symbol, &cfg.symbol, "symbol")?;
    let max_level = args.max_level.or(cfg.max_level).unwrap_or(6);
    let mut sampling = cfg.sampling.unwrap_or_default();
    if let Some(seed) = args.seed.or(cfg.seed) {
        sampling.seed = seed;
    }
    let weighted_t = args.weighted_t.or(cfg.weighted_t);

    let kind = symbol_descr["kind"].as_str().unwrap_or("");
    let needs_map = matches!(kind, "corner_power" | "example_53" | "example_54")
        || weighted_t.is_some();
    let map = if needs_map {
        let spec = cfg.quadrature.clone().unwrap_or_default();
        Some(solve_map(&polygon, &spec)?)
    } else {
        None
    };
    let symbol = Symbol::from_descriptor(&symbol_descr, &polygon, map.as_ref())?;

    let (vertex, report) = match weighted_t {
        Some(t) => {
            let map = map.as_ref().expect("weighted check solved the map");
            let vertex = args
                .vertex
                .or(cfg.vertex)
                .unwrap_or_else(|| polygon.alpha_max_index());
            let report =
                check_symbol_condition_weighted(&symbol, map, t, vertex, max_level, &sampling)?;
            (Some(vertex), report)
        }
        None => (
            None,
            check_symbol_condition(&symbol, &polygon, max_level, &sampling)?,
        ),
    };

    let mut csv = Csv::new("level,max_average");
    for &(level, max) in &report.level_maxima {
        csv.row(&[level.to_string(), max.to_string()]);
    }

    let config = SymbolCheckConfig {
        polygon: polygon_descr,
        symbol: symbol_descr,
        max_level,
        sampling,
        weighted_t,
        vertex,
    };
    let (json_path, csv_path) = outputs(&args.common.json, &args.common.csv, &cfg);
    let tolerances = Some(serde_json::json!({
        "fail_ratio": CONDITION_FAIL_RATIO,
        "trend_slack": CONDITION_TREND_SLACK,
    }));
    let env = envelope("symbol-check", "quadrature", config, tolerances, report);
    let body = csv.finish();
    emit(
        &env,
        json_path.as_deref(),
        csv_path.as_deref().map(|p| (p, body.as_str())),
    )
}

// ---------------------------------------------------------------------------
// experiment
// ---------------------------------------------------------------------------

fn experiment(args: ExperimentArgs) -> Result<(), Failure> {
    match args.name.as_str() {
        "e0a" => experiment_e0a(args),
        "e0b" => experiment_e0b(args),
        "e1a" => experiment_e1a(args),
        "e1b" => experiment_e1b(args),
        "e2-closed-form" => experiment_e2(args),
        "e3-szego" => experiment_e3(args),
        other => Err(Failure::config(format!(
            "unknown experiment '{other}' (expected e0a, e0b, e1a, e1b, e2-closed-form, or \
             e3-szego)"
        ))),
    }
}

/// Polygon for the corner experiments: explicit source if given, otherwise a
/// spiked pentagon with the requested worst angle factor.
fn experiment_polygon(
    args: &ExperimentArgs,
    cfg: &RunConfig,
    default_alpha: f64,
) -> Result<(Polygon, serde_json::Value), Failure> {
    if args.polygon.is_some() || cfg.polygon.is_some() {
        return require_polygon(&args.polygon, cfg);
    }
    let alpha = args.alpha.or(cfg.alpha_max).unwrap_or(default_alpha);
    let name = format!("spiked-pentagon-{alpha}");
    let polygon = polyberg::polygons::spiked_pentagon(alpha)?;
    let vertices: Vec<[f64; 2]> = polygon.vertices().iter().map(|v| [v.re, v.im]).collect();
    Ok((
        polygon,
        serde_json::json!({ "name": name, "vertices": vertices }),
    ))
}

fn verdict_name(verdict: ProbeVerdict) -> &'static str {
    match verdict {
        ProbeVerdict::Divergent => "divergent",
        ProbeVerdict::Convergent => "convergent",
    }
}

fn probe_csv(probe: &DivergenceProbe) -> String {
    let mut csv = Csv::new("radius,cumulative_integral,growth_ratio");
    for (k, &r) in probe.radii.iter().enumerate() {
        let ratio = if k == 0 {
            String::new()
        } else {
            probe.ratios[k - 1].to_string()
        };
        csv.row(&[r.to_string(), probe.values[k].to_string(), ratio]);
    }
    csv.finish()
}

#[derive(Serialize)]
struct ProbeExperimentConfig {
    experiment: &'static str,
    polygon: serde_json::Value,
    p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
    depth: u32,
    margin: f64,
    quadrature: QuadratureSpec,
}

#[derive(Serialize)]
struct VerdictWrap<R: Serialize> {
    expected_verdict: &'static str,
    detected_verdict: &'static str,
    verdict_matches: bool,
    report: R,
}

fn emit_probe_experiment<R: Serialize>(
    name: &'static str,
    config: ProbeExperimentConfig,
    expected_divergent: bool,
    probe: &DivergenceProbe,
    report: R,
    args: &ExperimentArgs,
    cfg: &RunConfig,
) -> Result<(), Failure> {
    let expected = if expected_divergent {
        "divergent"
    } else {
        "convergent"
    };
    let detected = verdict_name(probe.verdict);
    let matches = expected == detected;
    let tolerances = Some(serde_json::json!({
        "probe_margin": config.margin,
        "probe_depth": config.depth,
        "probe_quadrature": probe_spec(),
    }));
    let results = VerdictWrap {
        expected_verdict: expected,
        detected_verdict: detected,
        verdict_matches: matches,
        report,
    };
    let (json_path, csv_path) = outputs(&args.common.json, &args.common.csv, cfg);
    let env = envelope(name, "quadrature", config, tolerances, results);
    let body = probe_csv(probe);
    emit(
        &env,
        json_path.as_deref(),
        csv_path.as_deref().map(|p| (p, body.as_str())),
    )?;
    if !matches {
        return Err(Failure::mismatch(format!(
            "{name}: expected {expected} but the probe detected {detected}"
        )));
    }
    Ok(())
}

fn experiment_e0a(args: ExperimentArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let (polygon, polygon_descr) = experiment_polygon(&args, &cfg, 1.9)?;
    let p = args.p.or(cfg.p).unwrap_or(1.2);
    let depth = args.depth.or(cfg.depth).unwrap_or(PROBE_DEPTH);
    let margin = args.margin.or(cfg.margin).unwrap_or(PROBE_MARGIN);
    let spec = cfg.quadrature.clone().unwrap_or_default();

    let map = solve_map(&polygon, &spec)?;
    let report = example_e0a_divergence(&map, p, depth, margin)?;
    let probe = report.probe.clone();
    let config = ProbeExperimentConfig {
        experiment: "e0a",
        polygon: polygon_descr,
        p,
        radius: None,
        depth,
        margin,
        quadrature: spec,
    };
    emit_probe_experiment("experiment-e0a", config, true, &probe, report, &args, &cfg)
}

#[derive(Serialize)]
struct E0bConfig {
    experiment: &'static str,
    polygon: serde_json::Value,
    p: f64,
    t: f64,
    family_fractions: Vec<f64>,
    include_witness: bool,
    family_exponents: Vec<f64>,
    budget: NormBudget,
    quadrature: QuadratureSpec,
}

fn experiment_e0b(args: ExperimentArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let (polygon, polygon_descr) = experiment_polygon(&args, &cfg, 1.9)?;
    let p = args.p.or(cfg.p).unwrap_or(1.2);
    let alpha = polygon.alpha_max();
    let threshold = (2.0 - p) * (alpha - 1.0) - 2.0 * (p - 1.0);
    let t = args
        .t
        .or(cfg.t)
        .unwrap_or(if threshold > 0.0 { 2.0 * threshold } else { 0.0 });
    let include_witness = args.witness.or(cfg.witness).unwrap_or(true);
    let mut budget = cfg.budget.clone().unwrap_or_default();
    if let Some(depth) = args.depth.or(cfg.depth) {
        budget.probe_depth = depth;
    }
    if let Some(margin) = args.margin.or(cfg.margin) {
        budget.probe_margin = margin;
    }
    let spec = cfg.quadrature.clone().unwrap_or_default();

    let map = solve_map(&polygon, &spec)?;
    let fractions = vec![0.5, 0.7, 0.85, 0.95];
    let mut exponents = edge_exponents(p, alpha, &fractions)?;
    if include_witness {
        exponents.push(witness_exponent(alpha));
    }
    let family = corner_family(&map, polygon.alpha_max_index(), &exponents)?;
    let report = example_e0b_boundedness(&map, p, t, &family, &budget)?;

    let expects_bounded = report.hypothesis_met;
    let any_diverged = report.table.rows.iter().any(|r| r.diverged);
    let detected = if any_diverged {
        "divergent"
    } else if report.table.bounded {
        "bounded"
    } else {
        "unbounded-growth"
    };
    let expected = if expects_bounded {
        "bounded"
    } else {
        "divergent"
    };
    let matches = expected == detected;

    let mut csv = Csv::new("label,s,input_norm,output_norm,ratio,diverged");
    for row in &report.table.rows {
        csv.row(&[
            row.label.clone(),
            row.s.to_string(),
            row.input_norm.to_string(),
            opt_f64(row.output_norm),
            opt_f64(row.ratio),
            row.diverged.to_string(),
        ]);
    }

    let config = E0bConfig {
        experiment: "e0b",
        polygon: polygon_descr,
        p,
        t,
        family_fractions: fractions,
        include_witness,
        family_exponents: exponents,
        budget: budget.clone(),
        quadrature: spec,
    };
    let tolerances = Some(serde_json::json!({
        "norm_growth_tol": NORM_GROWTH_TOL,
        "probe_margin": budget.probe_margin,
        "probe_depth": budget.probe_depth,
    }));
    let results = VerdictWrap {
        expected_verdict: expected,
        detected_verdict: detected,
        verdict_matches: matches,
        report,
    };
    let (json_path, csv_path) = outputs(&args.common.json, &args.common.csv, &cfg);
    let env = envelope("experiment-e0b", "quadrature", config, tolerances, results);
    let body = csv.finish();
    emit(
        &env,
        json_path.as_deref(),
        csv_path.as_deref().map(|p| (p, body.as_str())),
    )?;
    if !matches {
        return Err(Failure::mismatch(format!(
            "e0b: expected {expected} but the ratio table shows {detected}"
        )));
    }
    Ok(())
}

fn experiment_e1a(args: ExperimentArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let (polygon, polygon_descr) = experiment_polygon(&args, &cfg, 1.8)?;
    let p = args.p.or(cfg.p).unwrap_or(5.0);
    let depth = args.depth.or(cfg.depth).unwrap_or(PROBE_DEPTH);
    let margin = args.margin.or(cfg.margin).unwrap_or(PROBE_MARGIN);
    let spec = cfg.quadrature.clone().unwrap_or_default();

    let map = solve_map(&polygon, &spec)?;
    let report = example_e1a_report(&map, p, depth, margin, &spec)?;
    let probe = report.probe.clone();
    let expected_divergent = report.expected_divergent;
    let config = ProbeExperimentConfig {
        experiment: "e1a",
        polygon: polygon_descr,
        p,
        radius: None,
        depth,
        margin,
        quadrature: spec,
    };
    emit_probe_experiment(
        "experiment-e1a",
        config,
        expected_divergent,
        &probe,
        report,
        &args,
        &cfg,
    )
}

fn experiment_e1b(args: ExperimentArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let (polygon, polygon_descr) = experiment_polygon(&args, &cfg, 1.8)?;
    let p = args.p.or(cfg.p).unwrap_or(5.0);
    let radius = args.radius.or(cfg.radius).unwrap_or(0.5);
    let depth = args.depth.or(cfg.depth).unwrap_or(PROBE_DEPTH);
    let margin = args.margin.or(cfg.margin).unwrap_or(PROBE_MARGIN);
    let spec = cfg.quadrature.clone().unwrap_or_default();

    let map = solve_map(&polygon, &spec)?;
    let report = example_e1b_report(&map, p, radius, depth, margin, &spec)?;
    let probe = report.probe.clone();
    let expected_divergent = report.expected_divergent;
    let config = ProbeExperimentConfig {
        experiment: "e1b",
        polygon: polygon_descr,
        p,
        radius: Some(radius),
        depth,
        margin,
        quadrature: spec,
    };
    emit_probe_experiment(
        "experiment-e1b",
        config,
        expected_divergent,
        &probe,
        report,
        &args,
        &cfg,
    )
}

#[derive(Serialize)]
struct E2Config {
    experiment: &'static str,
    degrees: Vec<u32>,
    numeric_residual_tol: f64,
    quadrature: QuadratureSpec,
}

#[derive(Serialize)]
struct CoefficientEntry {
    degree: u32,
    value: String,
    expected: String,
}

#[derive(Serialize)]
struct IdentityRow {
    n: u32,
    coefficients: Vec<CoefficientEntry>,
    exact_match: bool,
    max_numeric_residual: f64,
}

#[derive(Serialize)]
struct E2Results {
    rows: Vec<IdentityRow>,
    all_exact: bool,
    max_numeric_residual: f64,
}

fn experiment_e2(args: ExperimentArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let degrees = match &args.n {
        Some(s) => parse_u32_list(s)?,
        None => (0..=10).collect(),
    };
    if degrees.is_empty() {
        return Err(Failure::config("e2-closed-form needs at least one degree"));
    }
    let tol = args.tol.or(cfg.tol).unwrap_or(1e-8);
    let spec = cfg.quadrature.clone().unwrap_or_default();

    let mut rows = Vec::with_capacity(degrees.len());
    let mut csv = Csv::new("n,degree,coefficient,expected,exact_match,numeric_residual");
    let mut all_exact = true;
    let mut max_residual = 0.0f64;
    for &n in &degrees {
        let witness = example_53_identity(n, &spec)?;
        let mut entries = Vec::new();
        let mut degrees_seen: Vec<u32> = witness
            .coefficients
            .keys()
            .chain(witness.expected.keys())
            .copied()
            .collect();
        degrees_seen.sort_unstable();
        degrees_seen.dedup();
        for degree in degrees_seen {
            let value = witness
                .coefficients
                .get(&degree)
                .map(|v| v.to_string())
                .unwrap_or_else(|| "0".to_string());
            let expected = witness
                .expected
                .get(&degree)
                .map(|v| v.to_string())
                .unwrap_or_else(|| "0".to_string());
            csv.row(&[
                n.to_string(),
                degree.to_string(),
                value.clone(),
                expected.clone(),
                witness.exact_match.to_string(),
                witness.max_numeric_residual.to_string(),
            ]);
            entries.push(CoefficientEntry {
                degree,
                value,
                expected,
            });
        }
        all_exact &= witness.exact_match;
        max_residual = max_residual.max(witness.max_numeric_residual);
        rows.push(IdentityRow {
            n,
            coefficients: entries,
            exact_match: witness.exact_match,
            max_numeric_residual: witness.max_numeric_residual,
        });
    }

    let config = E2Config {
        experiment: "e2-closed-form",
        degrees,
        numeric_residual_tol: tol,
        quadrature: spec,
    };
    let tolerances = Some(serde_json::json!({ "numeric_residual_tol": tol }));
    let pass = all_exact && max_residual <= tol;
    let results = E2Results {
        rows,
        all_exact,
        max_numeric_residual: max_residual,
    };
    let (json_path, csv_path) = outputs(&args.common.json, &args.common.csv, &cfg);
    let env = envelope(
        "experiment-e2-closed-form",
        "exact+quadrature",
        config,
        tolerances,
        results,
    );
    let body = csv.finish();
    emit(
        &env,
        json_path.as_deref(),
        csv_path.as_deref().map(|p| (p, body.as_str())),
    )?;
    if !pass {
        return Err(Failure {
            code: 3,
            kind: "numerical",
            message: format!(
                "e2-closed-form: exact match {all_exact}, max numeric residual {max_residual:e} \
                 (tolerance {tol:e})"
            ),
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct E3Config {
    experiment: &'static str,
    degrees: Vec<u32>,
    zero_orders: Vec<u32>,
    zero_locations: Vec<f64>,
    points: Vec<[f64; 2]>,
    residual_tol: f64,
    quadrature: QuadratureSpec,
}

#[derive(Serialize)]
struct E3Results {
    witnesses: Vec<polyberg::experiments::ThetaIntegralWitness>,
    max_residual: f64,
    max_szego_residual: f64,
    pass: bool,
}

fn experiment_e3(args: ExperimentArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let degrees = match &args.n {
        Some(s) => parse_u32_list(s)?,
        None => vec![0, 1, 3],
    };
    let orders = match &args.m {
        Some(s) => parse_u32_list(s)?,
        None => vec![2, 3, 4],
    };
    let locations = match &args.r {
        Some(s) => parse_f64_list(s)?,
        None => vec![0.3, 0.7],
    };
    let points = match &args.z {
        Some(s) => parse_point_list(s)?,
        None => vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(0.3, 0.2),
            Complex64::new(-0.5, 0.0),
        ],
    };
    if degrees.is_empty() || orders.is_empty() || locations.is_empty() || points.is_empty() {
        return Err(Failure::config("e3-szego needs a nonempty parameter grid"));
    }
    let tol = args.tol.or(cfg.tol).unwrap_or(1e-8);
    let spec = cfg.quadrature.clone().unwrap_or_default();

    let mut witnesses = Vec::new();
    let mut csv = Csv::new("n,m,r,z_re,z_im,residual,szego_residual");
    let mut max_residual = 0.0f64;
    let mut max_szego = 0.0f64;
    for &n in &degrees {
        for &m in &orders {
            for &r in &locations {
                for &z in &points {
                    let witness = example_54_theta_integral(n, m, r, z, &spec)?;
                    max_residual = max_residual.max(witness.residual);
                    max_szego = max_szego.max(witness.szego_residual);
                    csv.row(&[
                        n.to_string(),
                        m.to_string(),
                        r.to_string(),
                        z.re.to_string(),
                        z.im.to_string(),
                        witness.residual.to_string(),
                        witness.szego_residual.to_string(),
                    ]);
                    witnesses.push(witness);
                }
            }
        }
    }

    let pass = max_residual <= tol && max_szego <= tol;
    let config = E3Config {
        experiment: "e3-szego",
        degrees,
        zero_orders: orders,
        zero_locations: locations,
        points: points.iter().map(|&z| point_pair(z)).collect(),
        residual_tol: tol,
        quadrature: spec,
    };
    let tolerances = Some(serde_json::json!({ "residual_tol": tol }));
    let results = E3Results {
        witnesses,
        max_residual,
        max_szego_residual: max_szego,
        pass,
    };
    let (json_path, csv_path) = outputs(&args.common.json, &args.common.csv, &cfg);
    let env = envelope(
        "experiment-e3-szego",
        "closed-form+quadrature",
        config,
        tolerances,
        results,
    );
    let body = csv.finish();
    emit(
        &env,
        json_path.as_deref(),
        csv_path.as_deref().map(|p| (p, body.as_str())),
    )?;
    if !pass {
        return Err(Failure {
            code: 3,
            kind: "numerical",
            message: format!(
                "e3-szego: max residual {max_residual:e}, max projection residual {max_szego:e} \
                 (tolerance {tol:e})"
            ),
        });
    }
    Ok(())
}
