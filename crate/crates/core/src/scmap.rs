//! Conformal map between the unit disk and a polygonal domain.
//!
//! The forward map has the derivative-product form
//!
//!   psi(z) = A * int_0^z prod_k (1 - conj(z_k) zeta)^(alpha_k - 1) dzeta + B,
//!
//! with prevertices z_k on the unit circle and angle factors alpha_k taken
//! from the polygon. Three prevertex arguments are fixed (0, 2pi/n, 4pi/n);
//! the remaining gaps solve the side-length-ratio equations by a damped
//! Newton iteration. The inverse is evaluated per point: ODE continuation
//! dz/dt = (w - psi(z0))/psi'(z) from a nearby anchor, then a damped Newton
//! polish against the forward map, with recursive waypoint routing when the
//! straight segment to the target leaves the domain.

use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::Value;
use std::f64::consts::PI;
use std::sync::RwLock;

use crate::error::{Error, Result};
use crate::geometry::{Polygon, WhitneyDecomposition, dist_point_segment, enlarge};
use crate::hexfloat::{format_hex, parse_hex};
use crate::quadrature::{
    QuadratureSpec, integrate_segment, integrate_segment_jacobi, jacobi_pair_integral,
};

const TWO_PI: f64 = 2.0 * PI;

/// Prevertex gaps below this trigger the crowding flag.
pub const CROWDING_GAP: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Prevertex configuration
// ---------------------------------------------------------------------------

/// Solved map parameters: prevertex arguments, angle factors, and the affine
/// constants of the derivative-product form.
#[derive(Clone, Debug, PartialEq)]
pub struct PrevertexConfig {
    /// Arguments theta_k of the prevertices, strictly increasing from 0.
    pub prevertices: Vec<f64>,
    /// Angle factors alpha_k, matching the polygon vertex order.
    pub alphas: Vec<f64>,
    /// Multiplicative constant.
    pub a: Complex64,
    /// Additive constant; equals the image of the disk center.
    pub b: Complex64,
}

impl PrevertexConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.prevertices.len();
        if n < 3 {
            return Err(Error::Config(format!("need at least 3 prevertices, got {n}")));
        }
        if self.alphas.len() != n {
            return Err(Error::Config(format!(
                "{} angle factors for {n} prevertices",
                self.alphas.len()
            )));
        }
        if self.prevertices[0] != 0.0 {
            return Err(Error::Config("first prevertex argument must be 0".into()));
        }
        for w in self.prevertices.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config(
                    "prevertex arguments must be strictly increasing".into(),
                ));
            }
        }
        if *self.prevertices.last().unwrap() >= TWO_PI {
            return Err(Error::Config(
                "prevertex arguments must stay below 2*pi".into(),
            ));
        }
        for &a in &self.alphas {
            if !(0.0 < a && a < 2.0) {
                return Err(Error::Config(format!("angle factor {a} outside (0, 2)")));
            }
        }
        if !self.a.is_finite() || !self.b.is_finite() || self.a.norm() == 0.0 {
            return Err(Error::Config("affine constants must be finite, A nonzero".into()));
        }
        Ok(())
    }

    /// Smallest gap between consecutive prevertices (wrap-around included).
    pub fn min_gap(&self) -> f64 {
        let n = self.prevertices.len();
        let mut g = TWO_PI - self.prevertices[n - 1] + self.prevertices[0];
        for w in self.prevertices.windows(2) {
            g = g.min(w[1] - w[0]);
        }
        g
    }

    pub fn is_crowded(&self) -> bool {
        self.min_gap() < CROWDING_GAP
    }

    /// Serializes with hex-float strings so parse(format(c)) is bit-exact.
    pub fn to_json(&self) -> String {
        let floats = |v: &[f64]| Value::Array(v.iter().map(|&x| Value::String(format_hex(x))).collect());
        let pair = |z: Complex64| Value::Array(vec![
            Value::String(format_hex(z.re)),
            Value::String(format_hex(z.im)),
        ]);
        let mut obj = serde_json::Map::new();
        obj.insert("prevertices".into(), floats(&self.prevertices));
        obj.insert("A".into(), pair(self.a));
        obj.insert("B".into(), pair(self.b));
        obj.insert("alphas".into(), floats(&self.alphas));
        Value::Object(obj).to_string()
    }

    /// Parses the `to_json` schema; values may be hex-float strings or plain
    /// JSON numbers.
    pub fn from_json(s: &str) -> Result<Self> {
        let v: Value =
            serde_json::from_str(s).map_err(|e| Error::Config(format!("config JSON: {e}")))?;
        let field = |name: &str| -> Result<&Value> {
            v.get(name)
                .ok_or_else(|| Error::Config(format!("config JSON: missing field `{name}`")))
        };
        let scalar = |x: &Value| -> Result<f64> {
            match x {
                Value::String(h) => parse_hex(h).map_err(Error::Config),
                Value::Number(n) => n
                    .as_f64()
                    .ok_or_else(|| Error::Config(format!("non-finite number {n}"))),
                other => Err(Error::Config(format!("expected number, got {other}"))),
            }
        };
        let floats = |x: &Value| -> Result<Vec<f64>> {
            x.as_array()
                .ok_or_else(|| Error::Config("expected array".into()))?
                .iter()
                .map(scalar)
                .collect()
        };
        let pair = |x: &Value| -> Result<Complex64> {
            let parts = floats(x)?;
            if parts.len() != 2 {
                return Err(Error::Config("expected [re, im]".into()));
            }
            Ok(Complex64::new(parts[0], parts[1]))
        };
        let config = Self {
            prevertices: floats(field("prevertices")?)?,
            alphas: floats(field("alphas")?)?,
            a: pair(field("A")?)?,
            b: pair(field("B")?)?,
        };
        config.validate()?;
        Ok(config)
    }
}

// ---------------------------------------------------------------------------
// Parameter problem
// ---------------------------------------------------------------------------

fn unit(theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, theta)
}

/// log of prod_k (1 - conj(z_k) zeta)^(alpha_k - 1), optionally skipping up
/// to two factor indices (the endpoints of a side integral).
fn log_product(
    points: &[Complex64],
    alphas: &[f64],
    zeta: Complex64,
    skip: [Option<usize>; 2],
) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, (&zk, &ak)) in points.iter().zip(alphas).enumerate() {
        if skip[0] == Some(k) || skip[1] == Some(k) {
            continue;
        }
        acc += (ak - 1.0) * (Complex64::new(1.0, 0.0) - zk.conj() * zeta).ln();
    }
    acc
}

/// Integral along a -> b of a full integrand with a power singularity of
/// exponent mu at the endpoint b. The one-sided Jacobi rule absorbs that
/// endpoint exactly; when it stalls (a further singularity sits just past b,
/// as happens for uneven prevertex gaps mid-iteration), panels are graded
/// geometrically toward b until the rule converges on the tail piece.
fn graded_toward_end<F: Fn(Complex64) -> Complex64>(
    f: &F,
    mu: f64,
    a: Complex64,
    b: Complex64,
    spec: &QuadratureSpec,
    depth: u32,
) -> Result<Complex64> {
    match integrate_segment_jacobi(f, mu, a, b, spec) {
        Err(Error::QuadratureNoConvergence { .. }) if depth < 40 => {
            let mid = 0.5 * (a + b);
            Ok(integrate_segment(f, a, mid, spec)?
                + graded_toward_end(f, mu, mid, b, spec, depth + 1)?)
        }
        other => other,
    }
}

/// Side integral I_k = int_{z_k}^{z_{k+1}} prod_j (1 - conj(z_j) zeta)^(alpha_j - 1) dzeta
/// along the chord. The two-sided Jacobi rule handles both endpoint
/// singularities in one shot when the neighborhood is benign; otherwise the
/// chord is split at its midpoint into two one-sided graded integrals. On
/// the chord the endpoint factors reduce to t * (1 - e^{i delta}) and
/// (1 - t) * (1 - e^{-i delta}), so the phases outside the real distance
/// powers are constant.
fn side_integral(
    thetas: &[f64],
    points: &[Complex64],
    alphas: &[f64],
    k: usize,
    spec: &QuadratureSpec,
) -> Result<Complex64> {
    let n = thetas.len();
    let k1 = (k + 1) % n;
    let delta = if k1 == 0 {
        TWO_PI - thetas[k] + thetas[0]
    } else {
        thetas[k1] - thetas[k]
    };
    let mu_a = alphas[k] - 1.0;
    let mu_b = alphas[k1] - 1.0;
    // arg(1 - e^{i delta}) = (delta - pi)/2; the conjugate for the far end
    let phase = Complex64::from_polar(1.0, 0.5 * (delta - PI) * mu_a)
        * Complex64::from_polar(1.0, 0.5 * (PI - delta) * mu_b);
    let smooth = |zeta: Complex64| log_product(points, alphas, zeta, [Some(k), Some(k1)]).exp();
    match jacobi_pair_integral(&smooth, mu_a, mu_b, points[k], points[k1], spec) {
        Ok(v) => Ok(phase * v),
        Err(Error::QuadratureNoConvergence { .. }) => {
            let full = |zeta: Complex64| log_product(points, alphas, zeta, [None, None]).exp();
            let mid = 0.5 * (points[k] + points[k1]);
            let head = graded_toward_end(&full, mu_a, mid, points[k], spec, 0)?;
            let tail = graded_toward_end(&full, mu_b, mid, points[k1], spec, 0)?;
            Ok(tail - head)
        }
        Err(e) => Err(e),
    }
}

/// int_0^{z_k} of the full product, with the single endpoint singularity at
/// z_k handled by a graded one-sided Jacobi rule (on the ray the k-th factor
/// is the real power (1 - t)^(alpha_k - 1)).
fn ray_integral_to_prevertex(
    points: &[Complex64],
    alphas: &[f64],
    k: usize,
    spec: &QuadratureSpec,
) -> Result<Complex64> {
    let full = |zeta: Complex64| log_product(points, alphas, zeta, [None, None]).exp();
    graded_toward_end(
        &full,
        alphas[k] - 1.0,
        Complex64::new(0.0, 0.0),
        points[k],
        spec,
        0,
    )
}

fn thetas_from_gaps(n: usize, free_gaps: &[f64]) -> Vec<f64> {
    let fixed = TWO_PI / n as f64;
    let mut thetas = Vec::with_capacity(n);
    thetas.push(0.0);
    thetas.push(fixed);
    thetas.push(2.0 * fixed);
    for g in &free_gaps[..n - 3] {
        let last = *thetas.last().unwrap();
        thetas.push(last + g);
    }
    thetas
}

/// Softmax over n-2 exponents (the first pinned to 0) scaled to the total
/// arc left after the fixed gaps; keeps every gap positive for any y.
fn gaps_from_unknowns(n: usize, y: &[f64]) -> Vec<f64> {
    let total = TWO_PI - 2.0 * (TWO_PI / n as f64);
    let mut exps = Vec::with_capacity(n - 2);
    exps.push(0.0);
    exps.extend_from_slice(y);
    let m = exps.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let weights: Vec<f64> = exps.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = weights.iter().sum();
    weights.iter().map(|&w| total * w / s).collect()
}

/// Solves for the prevertex arguments and affine constants of the polygon's
/// disk map. Three arguments are fixed by conformal invariance; the rest
/// come from matching consecutive side-length ratios with a damped Newton
/// iteration on softmax-parametrized gaps.
pub fn solve_parameter_problem(
    polygon: &Polygon,
    spec: &QuadratureSpec,
) -> Result<PrevertexConfig> {
    let n = polygon.len();
    let alphas = polygon.angle_factors().to_vec();
    let w = polygon.vertices();
    let solver_spec = QuadratureSpec {
        rel_tol: spec.rel_tol.min(1e-12),
        abs_tol: spec.abs_tol.min(1e-15),
        ..spec.clone()
    };

    let thetas = if n == 3 {
        vec![0.0, TWO_PI / 3.0, 2.0 * TWO_PI / 3.0]
    } else {
        let lengths: Vec<f64> = (0..n).map(|k| (w[(k + 1) % n] - w[k]).norm()).collect();
        let targets: Vec<f64> = (1..=n - 3).map(|k| lengths[k] / lengths[0]).collect();
        let residual = |y: &[f64]| -> Result<Vec<f64>> {
            let thetas = thetas_from_gaps(n, &gaps_from_unknowns(n, y));
            let points: Vec<Complex64> = thetas.iter().map(|&t| unit(t)).collect();
            let base = side_integral(&thetas, &points, &alphas, 0, &solver_spec)?.norm();
            (1..=n - 3)
                .map(|k| {
                    Ok(side_integral(&thetas, &points, &alphas, k, &solver_spec)?.norm() / base
                        - targets[k - 1])
                })
                .collect()
        };

        let m = n - 3;
        let mut y = vec![0.0; m];
        let mut r = residual(&y)?;
        let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let norm_inf = |v: &[f64]| v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let mut iterations = 0;
        while norm_inf(&r) > 1e-11 {
            iterations += 1;
            if iterations > 60 {
                return Err(Error::SolverNoConvergence {
                    iterations,
                    residual: norm_inf(&r),
                });
            }
            let h = 1e-7;
            let mut jac = nalgebra::DMatrix::<f64>::zeros(m, m);
            for j in 0..m {
                let mut yj = y.clone();
                yj[j] += h;
                let rj = residual(&yj)?;
                for i in 0..m {
                    jac[(i, j)] = (rj[i] - r[i]) / h;
                }
            }
            let rhs = nalgebra::DVector::from_iterator(m, r.iter().map(|&v| -v));
            let step = jac.lu().solve(&rhs).ok_or_else(|| Error::Numerical(
                "singular Jacobian in the prevertex iteration".into(),
            ))?;
            let mut lambda = 1.0;
            loop {
                let yt: Vec<f64> = y
                    .iter()
                    .zip(step.iter())
                    .map(|(&yi, &si)| yi + lambda * si)
                    .collect();
                let rt = residual(&yt)?;
                if norm2(&rt) < norm2(&r) {
                    y = yt;
                    r = rt;
                    break;
                }
                lambda *= 0.5;
                if lambda < 2f64.powi(-25) {
                    return Err(Error::SolverNoConvergence {
                        iterations,
                        residual: norm_inf(&r),
                    });
                }
            }
        }
        thetas_from_gaps(n, &gaps_from_unknowns(n, &y))
    };

    let points: Vec<Complex64> = thetas.iter().map(|&t| unit(t)).collect();
    let side0 = side_integral(&thetas, &points, &alphas, 0, &solver_spec)?;
    let a = (w[1] - w[0]) / side0;
    let b = w[0] - a * ray_integral_to_prevertex(&points, &alphas, 0, &solver_spec)?;
    let config = PrevertexConfig {
        prevertices: thetas,
        alphas,
        a,
        b,
    };
    config.validate()?;
    Ok(config)
}

// ---------------------------------------------------------------------------
// The map
// ---------------------------------------------------------------------------

/// First three derivatives of the disk-valued inverse at a domain point.
#[derive(Clone, Copy, Debug)]
pub struct MapJet {
    /// phi(w), in the unit disk.
    pub z: Complex64,
    pub d1: Complex64,
    pub d2: Complex64,
    pub d3: Complex64,
}

/// A solved polygon <-> disk conformal map with per-point inverse.
pub struct ConformalMap {
    polygon: Polygon,
    config: PrevertexConfig,
    points: Vec<Complex64>,
    spec: QuadratureSpec,
    /// (z, psi(z)) computed directly from the center; immutable basis for
    /// every later psi evaluation, so repeated calls are deterministic.
    seeds: Vec<(Complex64, Complex64)>,
    /// Verified inverse results reused as warm starts for the ODE leg.
    warm: RwLock<Vec<(Complex64, Complex64)>>,
}

impl ConformalMap {
    pub fn new(polygon: Polygon, spec: QuadratureSpec) -> Result<Self> {
        let config = solve_parameter_problem(&polygon, &spec)?;
        Self::from_config(polygon, config, spec)
    }

    pub fn from_config(
        polygon: Polygon,
        config: PrevertexConfig,
        spec: QuadratureSpec,
    ) -> Result<Self> {
        config.validate()?;
        spec.validate()?;
        if config.alphas.len() != polygon.len() {
            return Err(Error::Config(format!(
                "config has {} prevertices for a {}-gon",
                config.alphas.len(),
                polygon.len()
            )));
        }
        for (k, (&ca, &pa)) in config
            .alphas
            .iter()
            .zip(polygon.angle_factors())
            .enumerate()
        {
            if (ca - pa).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "angle factor {k} disagrees with the polygon: {ca} vs {pa}"
                )));
            }
        }
        let points: Vec<Complex64> = config.prevertices.iter().map(|&t| unit(t)).collect();
        let mut map = Self {
            polygon,
            config,
            points,
            spec,
            seeds: Vec::new(),
            warm: RwLock::new(Vec::new()),
        };
        map.seed_anchors()?;
        Ok(map)
    }

    /// Precomputes (z, psi(z)) on rays toward each prevertex and each gap
    /// midpoint; all later psi calls integrate from the nearest of these.
    fn seed_anchors(&mut self) -> Result<()> {
        let mut seeds = vec![(Complex64::new(0.0, 0.0), self.config.b)];
        let n = self.points.len();
        for k in 0..n {
            let t0 = self.config.prevertices[k];
            let t1 = if k + 1 == n {
                TWO_PI + self.config.prevertices[0]
            } else {
                self.config.prevertices[k + 1]
            };
            for theta in [t0, 0.5 * (t0 + t1)] {
                for r in [0.6, 0.9] {
                    let z = Complex64::from_polar(r, theta);
                    let w = self.psi_from_center(z)?;
                    seeds.push((z, w));
                }
            }
        }
        self.seeds = seeds;
        Ok(())
    }

    pub fn polygon(&self) -> &Polygon {
        &self.polygon
    }

    pub fn config(&self) -> &PrevertexConfig {
        &self.config
    }

    pub fn prevertex_points(&self) -> &[Complex64] {
        &self.points
    }

    /// Derivative of the forward map; the derivative-product closed form.
    pub fn psi_prime(&self, z: Complex64) -> Complex64 {
        self.config.a * log_product(&self.points, &self.config.alphas, z, [None, None]).exp()
    }

    fn psi_from_center(&self, z: Complex64) -> Result<Complex64> {
        let f = |zeta: Complex64| {
            log_product(&self.points, &self.config.alphas, zeta, [None, None]).exp()
        };
        Ok(self.config.b
            + self.config.a * integrate_segment(&f, Complex64::new(0.0, 0.0), z, &self.spec)?)
    }

    /// Forward map at |z| <= 1 (prevertices themselves go through
    /// `psi_at_prevertex`). Integrates from the nearest precomputed anchor.
    pub fn psi(&self, z: Complex64) -> Result<Complex64> {
        if z.norm() > 1.0 + 1e-12 {
            return Err(Error::Numerical(format!(
                "psi evaluated outside the closed disk: |z| = {}",
                z.norm()
            )));
        }
        let (za, wa) = self
            .seeds
            .iter()
            .min_by(|p, q| (p.0 - z).norm().total_cmp(&(q.0 - z).norm()))
            .copied()
            .expect("seed anchors are never empty");
        let f = |zeta: Complex64| {
            log_product(&self.points, &self.config.alphas, zeta, [None, None]).exp()
        };
        Ok(wa + self.config.a * integrate_segment(&f, za, z, &self.spec)?)
    }

    /// Forward-map increment psi(z1) - psi(z0) along the chord.
    pub fn psi_between(&self, z0: Complex64, z1: Complex64) -> Result<Complex64> {
        let f = |zeta: Complex64| {
            log_product(&self.points, &self.config.alphas, zeta, [None, None]).exp()
        };
        Ok(self.config.a * integrate_segment(&f, z0, z1, &self.spec)?)
    }

    /// Boundary value at the k-th prevertex; should reproduce vertex k.
    pub fn psi_at_prevertex(&self, k: usize) -> Result<Complex64> {
        if k >= self.points.len() {
            return Err(Error::Config(format!("prevertex index {k} out of range")));
        }
        Ok(self.config.b
            + self.config.a
                * ray_integral_to_prevertex(&self.points, &self.config.alphas, k, &self.spec)?)
    }

    fn inverse_tolerance(&self) -> f64 {
        1e-11 * self.polygon.diameter().max(1.0)
    }

    /// Inverse map: the disk point z with psi(z) = w, for w inside the
    /// domain. The final residual |psi(z) - w| is verified against the
    /// forward map before returning.
    pub fn phi(&self, w: Complex64) -> Result<Complex64> {
        if !self.polygon.contains(w) {
            return Err(Error::Numerical(format!(
                "inverse map evaluated outside the domain at {w}"
            )));
        }
        let (z0, w0) = self.best_start(w);
        let z = self.continue_to(z0, w0, w, 0)?;
        self.remember(z, w);
        Ok(z)
    }

    fn best_start(&self, w: Complex64) -> (Complex64, Complex64) {
        let mut best = self.seeds[0];
        let mut dist = (best.1 - w).norm();
        for &(z, wz) in self.seeds.iter().chain(self.warm.read().unwrap().iter()) {
            let d = (wz - w).norm();
            if d < dist {
                best = (z, wz);
                dist = d;
            }
        }
        best
    }

    fn remember(&self, z: Complex64, w: Complex64) {
        let mut warm = self.warm.write().unwrap();
        if warm.len() < 256
            && warm
                .iter()
                .all(|&(zs, _)| (zs - z).norm() > 0.02)
        {
            warm.push((z, w));
        }
    }

    /// Reaches w from the known pair (z0, w0 = psi(z0)); routes through a
    /// deep-interior waypoint whenever the straight segment w0 -> w leaves
    /// the domain.
    fn continue_to(
        &self,
        z0: Complex64,
        w0: Complex64,
        w: Complex64,
        depth: u32,
    ) -> Result<Complex64> {
        if self.polygon.segment_in_interior(w0, w) || (w - w0).norm() == 0.0 {
            return self.ode_then_newton(z0, w0, w);
        }
        if depth >= 8 {
            return Err(Error::SolverNoConvergence {
                iterations: depth,
                residual: (w - w0).norm(),
            });
        }
        let mid = 0.5 * (w0 + w);
        let dir = (w - w0) / (w - w0).norm();
        let perp = Complex64::new(-dir.im, dir.re);
        let scale = (w - w0).norm();
        let mut candidates = vec![mid];
        for s in [0.25, 0.5, 0.75, 1.0, 1.5] {
            candidates.push(mid + perp * (s * scale));
            candidates.push(mid - perp * (s * scale));
        }
        let waypoint = candidates
            .into_iter()
            .filter(|&c| self.polygon.contains(c))
            .max_by(|p, q| {
                self.polygon
                    .dist_to_boundary(*p)
                    .total_cmp(&self.polygon.dist_to_boundary(*q))
            })
            .ok_or_else(|| Error::Numerical("no interior waypoint found".into()))?;
        let zc = self.continue_to(z0, w0, waypoint, depth + 1)?;
        let wc = self.psi(zc)?;
        self.continue_to(zc, wc, w, depth + 1)
    }

    fn clamp_disk(z: Complex64) -> Complex64 {
        let r = z.norm();
        if r > 1.0 - 1e-13 {
            z * ((1.0 - 1e-13) / r)
        } else {
            z
        }
    }

    fn ode_then_newton(&self, z0: Complex64, w0: Complex64, w: Complex64) -> Result<Complex64> {
        // continuation: psi(z(t)) follows the straight path w0 + t (w - w0)
        let c = w - w0;
        let mut z = z0;
        let steps = 32;
        let h = 1.0 / steps as f64;
        for _ in 0..steps {
            let f = |zz: Complex64| c / self.psi_prime(zz);
            let k1 = f(z);
            let k2 = f(Self::clamp_disk(z + 0.5 * h * k1));
            let k3 = f(Self::clamp_disk(z + 0.5 * h * k2));
            let k4 = f(Self::clamp_disk(z + h * k3));
            z = Self::clamp_disk(z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        }
        // Newton polish against the forward map
        let tol = self.inverse_tolerance();
        let mut fz = self.psi(z)? - w;
        for _ in 0..40 {
            if fz.norm() <= tol {
                return Ok(z);
            }
            let step = fz / self.psi_prime(z);
            let mut lambda = 1.0;
            loop {
                let zt = Self::clamp_disk(z - lambda * step);
                let ft = self.psi(zt)? - w;
                if ft.norm() < fz.norm() {
                    z = zt;
                    fz = ft;
                    break;
                }
                lambda *= 0.5;
                if lambda < 2f64.powi(-30) {
                    return Err(Error::SolverNoConvergence {
                        iterations: 40,
                        residual: fz.norm(),
                    });
                }
            }
        }
        if fz.norm() <= tol {
            Ok(z)
        } else {
            Err(Error::SolverNoConvergence {
                iterations: 40,
                residual: fz.norm(),
            })
        }
    }

    /// Inverse map with first three derivatives, in closed form through the
    /// solved point: with G_k = 1 - conj(z_k) phi(w), E = prod G_k^(1-alpha_k),
    /// P = sum (1-alpha_k) conj(z_k)/G_k and Q the same sum with squares,
    ///
    ///   phi'   = E / A,
    ///   phi''  = -E^2 P / A^2,
    ///   phi''' = E^3 (2 P^2 - Q) / A^3.
    pub fn phi_derivatives(&self, w: Complex64) -> Result<MapJet> {
        let z = self.phi(w)?;
        Ok(self.jet_at(z))
    }

    /// Derivative jet expressed at a known disk point z = phi(w).
    pub fn jet_at(&self, z: Complex64) -> MapJet {
        let one = Complex64::new(1.0, 0.0);
        let mut log_e = Complex64::new(0.0, 0.0);
        let mut p = Complex64::new(0.0, 0.0);
        let mut q = Complex64::new(0.0, 0.0);
        for (&zk, &ak) in self.points.iter().zip(&self.config.alphas) {
            let g = one - zk.conj() * z;
            log_e += (1.0 - ak) * g.ln();
            let x = (1.0 - ak) * zk.conj() / g;
            p += x;
            q += x * zk.conj() / g;
        }
        let e = log_e.exp();
        let a = self.config.a;
        MapJet {
            z,
            d1: e / a,
            d2: -e * e * p / (a * a),
            d3: e * e * e * (2.0 * p * p - q) / (a * a * a),
        }
    }

    /// dist(w, boundary) * |phi'(w)| / (1 - |phi(w)|^2); lies in [1/4, 1]
    /// by the distortion bounds for conformal maps onto the disk.
    pub fn koebe_ratio(&self, w: Complex64) -> Result<f64> {
        let jet = self.phi_derivatives(w)?;
        let v = self.polygon.dist_to_boundary(w);
        Ok(v * jet.d1.norm() / (1.0 - jet.z.norm_sqr()))
    }
}

// ---------------------------------------------------------------------------
// Whitney-square map statistics
// ---------------------------------------------------------------------------

/// Sampled bounds for the inverse map over the enlarged Whitney squares.
/// The ratio fields are suprema of scale-invariant derivative quotients;
/// `rho_over_v_*` track side / boundary-distance, whose provable range on
/// enlarged squares is [1/(5.1*sqrt(2)), 1/(0.95*sqrt(2))].
#[derive(Clone, Debug)]
pub struct WhitneyMapStats {
    pub squares_sampled: usize,
    pub points_sampled: usize,
    /// max of rho * |phi''| / |phi'|
    pub max_second_ratio: f64,
    /// max of rho^2 * |phi'''| / |phi'|
    pub max_third_ratio: f64,
    /// max over same-square pairs of rho * |phi'(w)| / |1 - conj(phi(z)) phi(w)|
    pub max_pair_ratio: f64,
    pub rho_over_v_min: f64,
    pub rho_over_v_max: f64,
}

/// Provable range of side / boundary-distance over enlarged Whitney squares.
pub fn rho_over_v_range() -> (f64, f64) {
    let s = std::f64::consts::SQRT_2;
    (1.0 / (5.1 * s), 1.0 / (0.95 * s))
}

/// Samples the inverse-map jet on a lattice over each enlarged square and
/// returns the extreme derivative ratios. `stride` subsamples the square
/// list; `grid` is the per-axis lattice resolution.
pub fn whitney_map_stats(
    map: &ConformalMap,
    decomp: &WhitneyDecomposition,
    grid: usize,
    stride: usize,
) -> Result<WhitneyMapStats> {
    if grid < 2 {
        return Err(Error::Config("lattice needs at least 2 points per axis".into()));
    }
    let squares: Vec<_> = decomp
        .squares
        .iter()
        .step_by(stride.max(1))
        .collect();
    let per_square: Vec<Result<(f64, f64, f64, f64, f64, usize)>> = squares
        .par_iter()
        .map(|ws| {
            let rho = ws.square.side;
            let big = enlarge(&ws.square);
            let mut jets = Vec::with_capacity(grid * grid);
            for i in 0..grid {
                for j in 0..grid {
                    let t = |k: usize| k as f64 / (grid - 1) as f64;
                    let w = big.anchor + Complex64::new(big.side * t(i), big.side * t(j));
                    let jet = map.phi_derivatives(w)?;
                    jets.push((w, jet));
                }
            }
            let mut second: f64 = 0.0;
            let mut third: f64 = 0.0;
            let mut pair: f64 = 0.0;
            let mut rv_min = f64::INFINITY;
            let mut rv_max: f64 = 0.0;
            for &(w, ref jet) in &jets {
                second = second.max(rho * jet.d2.norm() / jet.d1.norm());
                third = third.max(rho * rho * jet.d3.norm() / jet.d1.norm());
                let rv = rho / map.polygon().dist_to_boundary(w);
                rv_min = rv_min.min(rv);
                rv_max = rv_max.max(rv);
            }
            for (i, &(_, ref jz)) in jets.iter().enumerate() {
                let (_, ref jw) = jets[(i + jets.len() / 2 + 1) % jets.len()];
                let denom = (Complex64::new(1.0, 0.0) - jz.z.conj() * jw.z).norm();
                pair = pair.max(rho * jw.d1.norm() / denom);
            }
            Ok((second, third, pair, rv_min, rv_max, jets.len()))
        })
        .collect();
    let mut stats = WhitneyMapStats {
        squares_sampled: 0,
        points_sampled: 0,
        max_second_ratio: 0.0,
        max_third_ratio: 0.0,
        max_pair_ratio: 0.0,
        rho_over_v_min: f64::INFINITY,
        rho_over_v_max: 0.0,
    };
    for r in per_square {
        let (second, third, pair, rv_min, rv_max, pts) = r?;
        stats.squares_sampled += 1;
        stats.points_sampled += pts;
        stats.max_second_ratio = stats.max_second_ratio.max(second);
        stats.max_third_ratio = stats.max_third_ratio.max(third);
        stats.max_pair_ratio = stats.max_pair_ratio.max(pair);
        stats.rho_over_v_min = stats.rho_over_v_min.min(rv_min);
        stats.rho_over_v_max = stats.rho_over_v_max.max(rv_max);
    }
    Ok(stats)
}

/// Boundary distance of the straight segment between two points, exposed for
/// diagnostics on waypoint routing.
pub fn segment_clearance(polygon: &Polygon, a: Complex64, b: Complex64) -> f64 {
    polygon
        .edges()
        .map(|(ea, eb)| {
            dist_point_segment(ea, a, b)
                .min(dist_point_segment(eb, a, b))
                .min(dist_point_segment(a, ea, eb))
                .min(dist_point_segment(b, ea, eb))
        })
        .fold(f64::INFINITY, f64::min)
}
