//! Reproducing kernel of the Bergman space of a polygonal domain, together
//! with the disk-side projection identities, the Cauchy-Szego operator, and
//! the norm estimators used by the operator experiments.
//!
//! Every integral is taken against normalized area measure dA = dxdy / pi.
//! Under that normalization the disk kernel is (1 - z conj(w))^{-2}, and the
//! kernel of a polygonal domain transplants through the disk map as
//!
//!   K(z, w) = phi'(z) conj(phi'(w)) (1 - phi(z) conj(phi(w)))^{-2}.
//!
//! The kernel is evaluated through derivative jets of the inverse map; jets
//! are cached per point so operator sums revisiting the same quadrature
//! nodes at many evaluation points pay for each inverse solve once.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use rayon::prelude::*;
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, RwLock};

use crate::error::{Error, Result};
use crate::geometry::WhitneyDecomposition;
use crate::quadrature::{QuadratureSpec, integrate_circle, integrate_disk, integrate_square};
use crate::scmap::{ConformalMap, MapJet};
use crate::sum::pairwise_sum;

/// Jet caching stops growing past this many distinct points; later lookups
/// past the cap fall through to a fresh inverse solve.
const JET_CACHE_CAP: usize = 1 << 20;

/// Routes the first error raised inside an integrand closure out of an
/// integrator that only sees plain complex values: `absorb` records the
/// error and substitutes zero, `finish` re-raises it over the final result.
pub(crate) struct ErrorSlot(Mutex<Option<Error>>);

impl ErrorSlot {
    pub fn new() -> Self {
        Self(Mutex::new(None))
    }

    pub fn absorb(&self, r: Result<Complex64>) -> Complex64 {
        match r {
            Ok(v) => v,
            Err(e) => {
                let mut slot = self.0.lock().unwrap();
                if slot.is_none() {
                    *slot = Some(e);
                }
                Complex64::new(0.0, 0.0)
            }
        }
    }

    pub fn finish<T>(&self, value: Result<T>) -> Result<T> {
        if let Some(e) = self.0.lock().unwrap().take() {
            return Err(e);
        }
        value
    }
}

// ---------------------------------------------------------------------------
// Kernel evaluation
// ---------------------------------------------------------------------------

/// K(z, w) from the two inverse-map jets.
pub fn kernel_from_jets(zjet: &MapJet, wjet: &MapJet) -> Complex64 {
    let g = Complex64::new(1.0, 0.0) - zjet.z * wjet.z.conj();
    zjet.d1 * wjet.d1.conj() / (g * g)
}

/// Value and first two w-derivatives of h_z(w) = conj(K(z, w)), the function
/// holomorphic in w that integration by parts differentiates. With
/// G = 1 - conj(phi(z)) phi(w),
///
///   h   = conj(phi'(z)) phi'(w) G^{-2},
///   h'  = conj(phi'(z)) [phi''(w) G^{-2} + 2 conj(phi(z)) phi'(w)^2 G^{-3}],
///   h'' = conj(phi'(z)) [phi'''(w) G^{-2} + 6 conj(phi(z)) phi'(w) phi''(w) G^{-3}
///                        + 6 conj(phi(z))^2 phi'(w)^3 G^{-4}].
#[derive(Clone, Copy, Debug)]
pub struct HJet {
    pub h: Complex64,
    pub h1: Complex64,
    pub h2: Complex64,
}

/// Evaluates the h-jet at w for the evaluation point carried by `zjet`.
pub fn h_jet(zjet: &MapJet, wjet: &MapJet) -> HJet {
    let cz = zjet.z.conj();
    let cd = zjet.d1.conj();
    let g = Complex64::new(1.0, 0.0) - cz * wjet.z;
    let g2 = g * g;
    let g3 = g2 * g;
    let g4 = g2 * g2;
    let d1 = wjet.d1;
    HJet {
        h: cd * d1 / g2,
        h1: cd * (wjet.d2 / g2 + 2.0 * cz * d1 * d1 / g3),
        h2: cd
            * (wjet.d3 / g2
                + 6.0 * cz * d1 * wjet.d2 / g3
                + 6.0 * cz * cz * d1 * d1 * d1 / g4),
    }
}

/// A conformal map together with a point-keyed cache of inverse jets.
pub struct KernelContext {
    map: Arc<ConformalMap>,
    jets: RwLock<HashMap<(u64, u64), MapJet>>,
}

impl KernelContext {
    pub fn new(map: Arc<ConformalMap>) -> Self {
        Self {
            map,
            jets: RwLock::new(HashMap::new()),
        }
    }

    pub fn map(&self) -> &ConformalMap {
        &self.map
    }

    pub fn share_map(&self) -> Arc<ConformalMap> {
        self.map.clone()
    }

    pub fn cached_jets(&self) -> usize {
        self.jets.read().unwrap().len()
    }

    /// Inverse jet at `w`, solved once per distinct point.
    pub fn jet(&self, w: Complex64) -> Result<MapJet> {
        let key = (w.re.to_bits(), w.im.to_bits());
        if let Some(jet) = self.jets.read().unwrap().get(&key) {
            return Ok(*jet);
        }
        let jet = self.map.phi_derivatives(w)?;
        let mut cache = self.jets.write().unwrap();
        if cache.len() < JET_CACHE_CAP {
            cache.insert(key, jet);
        }
        Ok(jet)
    }

    pub fn kernel(&self, z: Complex64, w: Complex64) -> Result<Complex64> {
        Ok(kernel_from_jets(&self.jet(z)?, &self.jet(w)?))
    }

    /// h-jet at `w` for a fixed evaluation point whose jet the caller holds.
    pub fn h_at(&self, zjet: &MapJet, w: Complex64) -> Result<HJet> {
        Ok(h_jet(zjet, &self.jet(w)?))
    }
}

// ---------------------------------------------------------------------------
// Disk-side projection
// ---------------------------------------------------------------------------

/// Bergman projection on the unit disk,
/// P f(z) = int_D f(w) (1 - z conj(w))^{-2} dA(w).
pub fn disk_project<F: Fn(Complex64) -> Complex64>(
    f: &F,
    z: Complex64,
    spec: &QuadratureSpec,
) -> Result<Complex64> {
    disk_project_truncated(f, z, 1.0, spec)
}

/// The same integral truncated to |w| < r, for symbols that are only
/// integrable away from the rim.
pub fn disk_project_truncated<F: Fn(Complex64) -> Complex64>(
    f: &F,
    z: Complex64,
    r: f64,
    spec: &QuadratureSpec,
) -> Result<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    integrate_disk(
        &|w: Complex64| {
            let g = one - z * w.conj();
            f(w) / (g * g)
        },
        r,
        spec,
    )
}

fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact projection coefficient of a disk monomial:
/// P[w^m conj(w)^n] = ((m - n + 1)/(m + 1)) z^{m-n} for m >= n, zero below
/// the diagonal.
pub fn project_monomial_exact(m: u32, n: u32) -> BigRational {
    if m < n {
        return BigRational::from(BigInt::from(0));
    }
    ratio(i64::from(m - n) + 1, i64::from(m) + 1)
}

/// Exact projection coefficient with the weight (1 - |w|^2):
/// P[(1 - |w|^2) w^m conj(w)^n] = ((m - n + 1)/((m + 1)(m + 2))) z^{m-n}.
pub fn project_weighted_monomial_exact(m: u32, n: u32) -> BigRational {
    if m < n {
        return BigRational::from(BigInt::from(0));
    }
    ratio(i64::from(m - n) + 1, (i64::from(m) + 1) * (i64::from(m) + 2))
}

/// Exact projection of a finite combination sum_j c_j w^{m_j} conj(w)^{n_j},
/// term by term in rational arithmetic. The result maps each analytic degree
/// to its coefficient; exact zeros are dropped.
pub fn project_polynomial_exact(
    terms: &[(u32, u32, BigRational)],
) -> BTreeMap<u32, BigRational> {
    let mut out: BTreeMap<u32, BigRational> = BTreeMap::new();
    for (m, n, c) in terms {
        if m < n {
            continue;
        }
        let contrib = c * project_monomial_exact(*m, *n);
        let entry = out
            .entry(m - n)
            .or_insert_with(|| BigRational::from(BigInt::from(0)));
        *entry += contrib;
    }
    out.retain(|_, c| *c != BigRational::from(BigInt::from(0)));
    out
}

// ---------------------------------------------------------------------------
// Circle integrals
// ---------------------------------------------------------------------------

/// int_0^{2pi} e^{i n t} (e^{i t} - r)^m (1 - z r e^{-i t})^{-2} dt — the
/// angular factor of projecting a boundary-power symbol ring by ring.
pub fn theta_integral(
    n: u32,
    m: u32,
    r: f64,
    z: Complex64,
    spec: &QuadratureSpec,
) -> Result<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    integrate_circle(
        &|t: f64| {
            let e = Complex64::from_polar(1.0, t);
            let g = one - z * r * e.conj();
            Complex64::from_polar(1.0, n as f64 * t) * (e - r).powi(m as i32) / (g * g)
        },
        spec,
    )
    .map(|v| 2.0 * PI * v)
}

/// Closed form of `theta_integral`:
/// 2 pi r^{n+m} (z - 1)^{m-1} ((n + m + 1) z^{n+1} - (n + 1) z^n),
/// written with the (z - 1)^m factor distributed so m = 0 needs no division.
pub fn theta_integral_closed_form(n: u32, m: u32, r: f64, z: Complex64) -> Complex64 {
    let zn = z.powi(n as i32);
    let zm1 = z - 1.0;
    let first = f64::from(n + 1) * zn * zm1.powi(m as i32);
    let second = if m == 0 {
        Complex64::new(0.0, 0.0)
    } else {
        f64::from(m) * zn * z * zm1.powi(m as i32 - 1)
    };
    2.0 * PI * r.powi((n + m) as i32) * (first + second)
}

/// Cauchy-Szego operator on the circle,
/// S f(z) = (1/2pi) int_0^{2pi} f(e^{i t}) (1 - z e^{-i t})^{-1} dt.
pub fn szego_project<F: Fn(Complex64) -> Complex64>(
    f: &F,
    z: Complex64,
    spec: &QuadratureSpec,
) -> Result<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    integrate_circle(
        &|t: f64| {
            let e = Complex64::from_polar(1.0, t);
            f(e) / (one - z * e.conj())
        },
        spec,
    )
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

/// p-norm of `f` over |w| < r against normalized area measure.
pub fn disk_norm<F: Fn(Complex64) -> Complex64>(
    f: &F,
    p: f64,
    r: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::Config(format!("norm exponent must be positive, got {p}")));
    }
    let v = integrate_disk(
        &|w: Complex64| Complex64::new(f(w).norm().powf(p), 0.0),
        r,
        spec,
    )?;
    Ok(v.re.max(0.0).powf(1.0 / p))
}

/// p-norm of `f` over the union of accepted Whitney squares; a lower
/// approximation to the norm over the whole domain that exhausts it as the
/// decomposition level grows.
pub fn whitney_norm<F>(
    f: &F,
    p: f64,
    decomposition: &WhitneyDecomposition,
    spec: &QuadratureSpec,
) -> Result<f64>
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    if !(p > 0.0) {
        return Err(Error::Config(format!("norm exponent must be positive, got {p}")));
    }
    let parts: Result<Vec<f64>> = decomposition
        .squares
        .par_iter()
        .map(|ws| {
            integrate_square(
                &|w: Complex64| Complex64::new(f(w).norm().powf(p), 0.0),
                &ws.square,
                spec,
            )
            .map(|v| v.re)
        })
        .collect();
    Ok(pairwise_sum(&parts?).max(0.0).powf(1.0 / p))
}

/// Two-sided enclosure of the A^p(D) norm of a polynomial sum a_n z^n:
///
///   max_n |a_n| / ((n+1) ||w^n||_{p'})  <=  ||f||_p  <=  sum_n |a_n| ||w^n||_p,
///
/// the lower bound from the coefficient functionals a_n = (n+1) <f, w^n> and
/// Hoelder, the upper from the triangle inequality, with
/// ||w^n||_q = (2/(nq + 2))^{1/q}.
#[derive(Clone, Copy, Debug)]
pub struct NormSandwich {
    pub lower: f64,
    pub upper: f64,
    /// Worst single-monomial gap: for f = a_n w^n the two bounds differ by
    /// exactly (n+1) ||w^n||_{p'} ||w^n||_p; this is the max over the
    /// occupied degrees. Equals 1 for every degree at p = 2.
    pub c_p: f64,
}

pub fn taylor_norm_sandwich(coeffs: &[Complex64], p: f64) -> Result<NormSandwich> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Config(format!(
            "sandwich exponent must lie in (1, inf), got {p}"
        )));
    }
    let q = p / (p - 1.0);
    let monomial_norm = |n: usize, e: f64| (2.0 / (n as f64 * e + 2.0)).powf(1.0 / e);
    let mut upper_terms = Vec::with_capacity(coeffs.len());
    let mut lower = 0.0f64;
    let mut c_p = 0.0f64;
    for (n, a) in coeffs.iter().enumerate() {
        let t_p = monomial_norm(n, p);
        let t_q = monomial_norm(n, q);
        upper_terms.push(a.norm() * t_p);
        if a.norm() > 0.0 {
            lower = lower.max(a.norm() / ((n as f64 + 1.0) * t_q));
            c_p = c_p.max((n as f64 + 1.0) * t_q * t_p);
        }
    }
    Ok(NormSandwich {
        lower,
        upper: pairwise_sum(&upper_terms),
        c_p,
    })
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::whitney_decompose;
    use crate::polygons::{equilateral_triangle, unit_square};
    use crate::quadrature::gamma;
    use approx::assert_abs_diff_eq;
    use num_traits::ToPrimitive;
    use std::sync::OnceLock;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn square_map() -> &'static Arc<ConformalMap> {
        static MAP: OnceLock<Arc<ConformalMap>> = OnceLock::new();
        MAP.get_or_init(|| {
            Arc::new(ConformalMap::new(unit_square(), spec()).expect("square map solves"))
        })
    }

    // Independent derivation of the monomial projections: expand the kernel
    // as sum_k (k+1) z^k conj(w)^k and integrate each term in polar
    // coordinates, where the radial moments are exact rationals
    // int |w|^{2m} dA = 1/(m+1). Only k = m - n survives the angular
    // integral.
    fn moment_series_coeff(m: i64, n: i64, k: i64, weighted: bool) -> BigRational {
        if m != n + k {
            return BigRational::from(BigInt::from(0));
        }
        let radial = if weighted {
            ratio(1, m + 1) - ratio(1, m + 2)
        } else {
            ratio(1, m + 1)
        };
        BigRational::from(BigInt::from(k + 1)) * radial
    }

    #[test]
    fn monomial_projection_matches_moment_series() {
        for m in 0..=10i64 {
            for n in 0..=10i64 {
                let mut plain = BigRational::from(BigInt::from(0));
                let mut weighted = BigRational::from(BigInt::from(0));
                for k in 0..=(m + n + 1) {
                    plain += moment_series_coeff(m, n, k, false);
                    weighted += moment_series_coeff(m, n, k, true);
                }
                assert_eq!(plain, project_monomial_exact(m as u32, n as u32));
                assert_eq!(
                    weighted,
                    project_weighted_monomial_exact(m as u32, n as u32)
                );
            }
        }
    }

    #[test]
    fn unweighted_projection_of_unit_weight_is_identity_seed() {
        // P[1] = 1 and P[(1 - |w|^2) w^m] = w^m / (m + 2)
        assert_eq!(project_monomial_exact(0, 0), ratio(1, 1));
        for m in 0..=10 {
            assert_eq!(
                project_weighted_monomial_exact(m, 0),
                ratio(1, i64::from(m) + 2)
            );
        }
    }

    #[test]
    fn numeric_projection_matches_exact_coefficients() {
        let spec = spec();
        let zs = [c(0.3, 0.4), c(-0.5, 0.1)];
        for m in 0..=6u32 {
            for n in 0..=6u32 {
                let f = |w: Complex64| w.powi(m as i32) * w.conj().powi(n as i32);
                let coeff = project_monomial_exact(m, n).to_f64().unwrap();
                for &z in &zs {
                    let numeric = disk_project(&f, z, &spec).unwrap();
                    let exact = if m >= n {
                        coeff * z.powi((m - n) as i32)
                    } else {
                        c(0.0, 0.0)
                    };
                    assert!(
                        (numeric - exact).norm() <= 1e-8,
                        "m={m} n={n} z={z}: |{numeric} - {exact}|"
                    );
                }
            }
        }
    }

    #[test]
    fn ring_polynomial_projects_to_two_term_closed_form() {
        // (1 - |w|^2)(1 + |w|^2 - 2w) w^n expands to
        //   w^n - 2 w^{n+1} + 2 w^{n+2} conj(w) - w^{n+2} conj(w)^2,
        // and its projection collapses to 2 z^n (1 - z)/(n + 3).
        for n in 0..=10u32 {
            let terms = vec![
                (n, 0, ratio(1, 1)),
                (n + 1, 0, ratio(-2, 1)),
                (n + 2, 1, ratio(2, 1)),
                (n + 2, 2, ratio(-1, 1)),
            ];
            let projected = project_polynomial_exact(&terms);
            let expected: BTreeMap<u32, BigRational> = [
                (n, ratio(2, i64::from(n) + 3)),
                (n + 1, ratio(-2, i64::from(n) + 3)),
            ]
            .into_iter()
            .collect();
            assert_eq!(projected, expected, "n = {n}");
        }
    }

    #[test]
    fn theta_integral_matches_closed_form() {
        let spec = spec();
        for &n in &[0u32, 1, 3] {
            for &m in &[2u32, 3, 4] {
                for &r in &[0.3, 0.7] {
                    for &z in &[c(0.0, 0.0), c(0.3, 0.2), c(-0.5, 0.0)] {
                        let numeric = theta_integral(n, m, r, z, &spec).unwrap();
                        let exact = theta_integral_closed_form(n, m, r, z);
                        assert!(
                            (numeric - exact).norm() <= 1e-8 * (1.0 + exact.norm()),
                            "n={n} m={m} r={r} z={z}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn theta_integral_closed_form_handles_flat_power() {
        // m = 0 reduces to the plain kernel moment 2 pi (n+1) (z r)^n.
        let z = c(0.4, -0.3);
        let exact = theta_integral_closed_form(2, 0, 0.5, z);
        let expected = 2.0 * PI * 3.0 * (z * 0.5).powi(2);
        assert!((exact - expected).norm() <= 1e-14);
        let numeric = theta_integral(2, 0, 0.5, z, &spec()).unwrap();
        assert!((numeric - exact).norm() <= 1e-10);
    }

    #[test]
    fn szego_reproduces_analytic_and_kills_antianalytic() {
        let spec = spec();
        let z = c(0.4, 0.25);
        for n in 0..5i32 {
            let s = szego_project(&|w: Complex64| w.powi(n), z, &spec).unwrap();
            assert!((s - z.powi(n)).norm() <= 1e-12, "n = {n}");
        }
        let dead = szego_project(&|w: Complex64| w.conj(), z, &spec).unwrap();
        assert!(dead.norm() <= 1e-12);
        // real parts project to the analytic half plus half the mean
        let s = szego_project(&|w: Complex64| c(w.powi(2).re, 0.0), z, &spec).unwrap();
        assert!((s - 0.5 * z.powi(2)).norm() <= 1e-12);
    }

    #[test]
    fn disk_norm_of_monomials_matches_closed_form() {
        let spec = spec();
        for p in [1.5, 2.0, 3.5] {
            for n in 0..4i32 {
                let numeric = disk_norm(&|w: Complex64| w.powi(n), p, 1.0, &spec).unwrap();
                let exact = (2.0 / (n as f64 * p + 2.0)).powf(1.0 / p);
                assert_abs_diff_eq!(numeric, exact, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn taylor_sandwich_encloses_the_numeric_norm() {
        let spec = spec();
        let coeffs = [c(1.0, 0.0), c(-0.5, 0.0), c(0.0, 0.3)];
        let f = |w: Complex64| coeffs[0] + coeffs[1] * w + coeffs[2] * w * w;
        for p in [2.0, 3.0, 5.0] {
            let sandwich = taylor_norm_sandwich(&coeffs, p).unwrap();
            let numeric = disk_norm(&f, p, 1.0, &spec).unwrap();
            assert!(
                sandwich.lower <= numeric + 1e-9 && numeric <= sandwich.upper + 1e-9,
                "p = {p}: {} <= {numeric} <= {}",
                sandwich.lower,
                sandwich.upper
            );
            assert!(sandwich.c_p >= 1.0 - 1e-12);
        }
        // at p = 2 the single-monomial gap closes exactly
        let single = taylor_norm_sandwich(&[c(0.0, 0.0), c(2.0, 0.0)], 2.0).unwrap();
        assert_abs_diff_eq!(single.c_p, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(single.lower, single.upper, epsilon = 1e-12);
    }

    #[test]
    fn whitney_norm_of_unit_function_tracks_domain_area() {
        let dec = whitney_decompose(&unit_square(), 5).unwrap();
        let spec = spec();
        let norm = whitney_norm(&|_| c(1.0, 0.0), 2.0, &dec, &spec).unwrap();
        let covered = norm * norm * PI;
        assert!(covered <= 1.0 + 1e-12);
        assert!(
            covered >= 1.0 - 4.0 * dec.collar(),
            "covered area {covered} vs collar bound {}",
            1.0 - 4.0 * dec.collar()
        );
    }

    #[test]
    fn kernel_at_conformal_center_matches_classical_radius() {
        // Unit square, side 1: the conformal radius at the center is
        // 2 sqrt(2) Gamma(3/4) / (Gamma(1/4) sqrt(pi)), and
        // K(w0, w0) = 1/r^2 there.
        let sq = square_map();
        let r_square = 2.0 * 2f64.sqrt() * gamma(0.75) / (gamma(0.25) * PI.sqrt());
        let w0 = sq.config().b;
        assert!((w0 - c(0.5, 0.5)).norm() <= 1e-9, "center off at {w0}");
        let ctx = KernelContext::new(sq.clone());
        let k = ctx.kernel(w0, w0).unwrap();
        assert!(k.im.abs() <= 1e-9 * k.re);
        assert!(
            (k.re - 1.0 / (r_square * r_square)).abs() <= 1e-6 / (r_square * r_square),
            "square center kernel {} vs {}",
            k.re,
            1.0 / (r_square * r_square)
        );

        // Equilateral triangle, side 1: radius sqrt(3) Gamma(2/3) / Gamma(1/3)^2
        // at the centroid.
        let tri = Arc::new(ConformalMap::new(equilateral_triangle(), spec()).unwrap());
        let r_triangle = 3f64.sqrt() * gamma(2.0 / 3.0) / gamma(1.0 / 3.0).powi(2);
        let w0 = tri.config().b;
        assert!((w0 - c(0.5, 3f64.sqrt() / 6.0)).norm() <= 1e-9);
        let ctx = KernelContext::new(tri);
        let k = ctx.kernel(w0, w0).unwrap();
        assert!(
            (k.re - 1.0 / (r_triangle * r_triangle)).abs()
                <= 1e-6 / (r_triangle * r_triangle),
            "triangle center kernel {} vs {}",
            k.re,
            1.0 / (r_triangle * r_triangle)
        );
    }

    #[test]
    fn kernel_is_conjugate_symmetric_and_matches_h() {
        let ctx = KernelContext::new(square_map().clone());
        let z = c(0.3, 0.45);
        let w = c(0.7, 0.6);
        let kzw = ctx.kernel(z, w).unwrap();
        let kwz = ctx.kernel(w, z).unwrap();
        assert!((kzw - kwz.conj()).norm() <= 1e-12 * kzw.norm());
        let zjet = ctx.jet(z).unwrap();
        let h = ctx.h_at(&zjet, w).unwrap();
        assert!((h.h - kzw.conj()).norm() <= 1e-12 * kzw.norm());
    }

    #[test]
    fn h_jet_matches_finite_differences() {
        let ctx = KernelContext::new(square_map().clone());
        let z = c(0.3, 0.4);
        let zjet = ctx.jet(z).unwrap();
        let step = 1e-5;
        for &w in &[c(0.6, 0.55), c(0.25, 0.7)] {
            let at = |w: Complex64| ctx.h_at(&zjet, w).unwrap();
            let jet = at(w);
            let re_p = at(w + c(step, 0.0));
            let re_m = at(w - c(step, 0.0));
            let d1_fd = (re_p.h - re_m.h) / (2.0 * step);
            assert!(
                (d1_fd - jet.h1).norm() <= 1e-5 * jet.h1.norm(),
                "h' mismatch at {w}: fd {d1_fd} vs {}",
                jet.h1
            );
            let d2_fd = (re_p.h1 - re_m.h1) / (2.0 * step);
            assert!(
                (d2_fd - jet.h2).norm() <= 1e-4 * jet.h2.norm(),
                "h'' mismatch at {w}: fd {d2_fd} vs {}",
                jet.h2
            );
        }
    }

    #[test]
    fn jet_cache_deduplicates_points() {
        let ctx = KernelContext::new(square_map().clone());
        let z = c(0.4, 0.4);
        let w = c(0.6, 0.5);
        ctx.kernel(z, w).unwrap();
        ctx.kernel(z, w).unwrap();
        ctx.kernel(w, z).unwrap();
        assert_eq!(ctx.cached_jets(), 2);
    }

    #[test]
    fn error_slot_reraises_first_failure() {
        let slot = ErrorSlot::new();
        let ok = slot.absorb(Ok(c(2.0, 0.0)));
        assert_eq!(ok, c(2.0, 0.0));
        let zero = slot.absorb(Err(Error::Numerical("first".into())));
        assert_eq!(zero, c(0.0, 0.0));
        slot.absorb(Err(Error::Numerical("second".into())));
        let out: Result<f64> = slot.finish(Ok(1.0));
        match out {
            Err(Error::Numerical(msg)) => assert_eq!(msg, "first"),
            other => panic!("expected the first stored error, got {other:?}"),
        }
    }
}
