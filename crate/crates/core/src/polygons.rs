//! A small catalogue of named test domains.
//!
//! Every constructor returns a validated [`Polygon`]; the spiked pentagons
//! are built from their prescribed angle factors by an edge walk, so the
//! resulting geometry reproduces those factors to machine precision.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::Polygon;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// The unit square with vertices 0, 1, 1+i, i (all angle factors 1/2).
pub fn unit_square() -> Polygon {
    Polygon::new(vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 1.0), c(0.0, 1.0)])
        .expect("unit square is valid")
}

/// Equilateral triangle on [0, 1] (all angle factors 1/3).
pub fn equilateral_triangle() -> Polygon {
    Polygon::new(vec![c(0.0, 0.0), c(1.0, 0.0), c(0.5, 3f64.sqrt() / 2.0)])
        .expect("equilateral triangle is valid")
}

/// L-shaped hexagon with one reentrant corner (angle factor 3/2) at 1+i.
/// The reentrant corner is vertex index 3.
pub fn l_hexagon() -> Polygon {
    Polygon::new(vec![
        c(0.0, 0.0),
        c(2.0, 0.0),
        c(2.0, 1.0),
        c(1.0, 1.0),
        c(1.0, 2.0),
        c(0.0, 2.0),
    ])
    .expect("L-shaped hexagon is valid")
}

/// Regular n-gon inscribed in the unit circle, first vertex at 1.
pub fn regular_ngon(n: usize) -> Result<Polygon> {
    if n < 3 {
        return Err(Error::Config(format!("regular n-gon needs n >= 3, got {n}")));
    }
    Polygon::new(
        (0..n)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64))
            .collect(),
    )
}

/// Symmetric pentagon with one deep reentrant "spike" vertex of angle factor
/// `alpha_max` (placed first) and four equal sharp corners of factor
/// (3 - alpha_max)/4 each.
///
/// The polygon is laid out by walking edge directions from the prescribed
/// turning angles pi*(1 - alpha_k), mirror-symmetric about the imaginary
/// axis: spike at the origin, flank edges of length 1, side edges of length
/// 2 (long enough that the spike never pierces the opposite edge for any
/// alpha_max in (1, 2)).
pub fn spiked_pentagon(alpha_max: f64) -> Result<Polygon> {
    if !(1.0 < alpha_max && alpha_max < 2.0) {
        return Err(Error::Config(format!(
            "spiked pentagon needs alpha_max in (1, 2), got {alpha_max}"
        )));
    }
    let a = (3.0 - alpha_max) / 4.0; // flank angle factor; in (1/4, 1/2)
    let v0 = c(0.0, 0.0);
    // edge v0 -> v1 points along exp(i*pi*(2a - 1)); flank length 1
    let v1 = Complex64::from_polar(1.0, PI * (2.0 * a - 1.0));
    // edge v1 -> v2 points along exp(i*pi*a); side length 2
    let v2 = v1 + Complex64::from_polar(2.0, PI * a);
    let v3 = c(-v2.re, v2.im);
    let v4 = c(-v1.re, v1.im);
    Polygon::new(vec![v0, v1, v2, v3, v4])
}

/// Star-shaped 7-gon with vertices at seeded random angles (minimum angular
/// gap 0.3) and radii in [0.5, 1.2]. Resamples until the polygon validates,
/// so the result is always simple and free of collinear vertices.
pub fn random_simple_7gon(seed: u64) -> Polygon {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut angles: Vec<f64> = (0..7).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        angles.sort_by(f64::total_cmp);
        let wrap_gap = 2.0 * PI - angles[6] + angles[0];
        let min_gap = angles
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(wrap_gap, f64::min);
        if min_gap < 0.3 {
            continue;
        }
        let vertices: Vec<Complex64> = angles
            .iter()
            .map(|&t| Complex64::from_polar(rng.random_range(0.5..1.2), t))
            .collect();
        if let Ok(p) = Polygon::new(vertices) {
            return p;
        }
    }
}
