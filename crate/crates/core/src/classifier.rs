//! Exact-arithmetic classification of the boundedness regime.
//!
//! Every criterion here is a strict polynomial inequality in the exponent p
//! and the maximal angle factor alpha_max, so the classification is carried
//! out in arbitrary-precision rational arithmetic: a finite f64 input is a
//! dyadic rational and converts exactly, boundary cases land on exact
//! equality, and equality is never rounded into a verdict. All inequalities
//! are strict — a configuration sitting exactly on a threshold is classified
//! as outside the bounded range.

use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::Serialize;

use crate::error::{Error, Result};

fn rational(value: f64, name: &str) -> Result<BigRational> {
    BigRational::from_float(value)
        .ok_or_else(|| Error::Config(format!("{name} must be a finite number, got {value}")))
}

fn int(v: i64) -> BigRational {
    BigRational::from_integer(v.into())
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn validate(p: &BigRational, alpha_max: &BigRational) -> Result<()> {
    if *p <= int(1) {
        return Err(Error::Config(format!(
            "exponent p must lie in (1, inf), got {p}"
        )));
    }
    if *alpha_max <= int(0) || *alpha_max >= int(2) {
        return Err(Error::Config(format!(
            "angle factor alpha_max must lie in (0, 2), got {alpha_max}"
        )));
    }
    Ok(())
}

/// Whether the Bergman projection of the polygon is bounded on L^p:
/// (2 - p)(alpha_max - 1) < 2(p - 1) for p <= 2, and
/// (p - 2)(alpha_max - 1) < 2 for p >= 2. The two branches agree at p = 2
/// (both reduce to 0 < 2).
pub fn projection_bounded_exact(p: &BigRational, alpha_max: &BigRational) -> bool {
    let am1 = alpha_max - int(1);
    if *p <= int(2) {
        (int(2) - p) * am1 < int(2) * (p - int(1))
    } else {
        (p - int(2)) * am1 < int(2)
    }
}

/// Whether the unconditional-convergence hypothesis holds: no restriction
/// for 4/3 <= p <= 4, alpha_max < 1 + 2/(p - 2) for p > 4, and
/// alpha_max < 1 + 2(p - 1)/(2 - p) for p < 4/3.
pub fn main1_hypothesis_exact(p: &BigRational, alpha_max: &BigRational) -> bool {
    if *p > int(4) {
        *alpha_max < int(1) + int(2) / (p - int(2))
    } else if *p < ratio(4, 3) {
        *alpha_max < int(1) + int(2) * (p - int(1)) / (int(2) - p)
    } else {
        true
    }
}

/// Minimal corner decay t that restores boundedness through the weighted
/// estimates: (p - 2)(alpha_max - 1) - 2 for p > 4 and
/// (2 - p)(alpha_max - 1) - 2(p - 1) for p < 4/3. In between no weighted
/// regime applies (the projection is already bounded) and the threshold is
/// refused rather than reported as zero.
pub fn weighted_exponent_threshold_exact(
    p: &BigRational,
    alpha_max: &BigRational,
) -> Result<BigRational> {
    let am1 = alpha_max - int(1);
    if *p > int(4) {
        Ok((p - int(2)) * am1 - int(2))
    } else if *p < ratio(4, 3) {
        Ok((int(2) - p) * am1 - int(2) * (p - int(1)))
    } else {
        Err(Error::Config(format!(
            "no weighted regime applies at p = {p}: for 4/3 <= p <= 4 the projection is bounded outright"
        )))
    }
}

/// Which side of the unconditional band the exponent falls on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BoundednessRegime {
    /// 4/3 <= p <= 4: bounded for every angle.
    #[serde(rename = "no-restriction")]
    NoRestriction,
    /// p > 4: bounded only below the critical angle.
    #[serde(rename = "p>4")]
    LargeExponent,
    /// p < 4/3: bounded only below the critical angle.
    #[serde(rename = "p<4/3")]
    SmallExponent,
}

impl std::fmt::Display for BoundednessRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self {
            Self::NoRestriction => "no-restriction",
            Self::LargeExponent => "p>4",
            Self::SmallExponent => "p<4/3",
        };
        f.write_str(tag)
    }
}

/// Complete classification of one (p, alpha_max) configuration, with the
/// regime thresholds echoed for reporting.
#[derive(Clone, Debug, Serialize)]
pub struct BoundednessVerdict {
    pub p: f64,
    pub alpha_max: f64,
    pub projection_bounded: bool,
    pub main1_hypothesis: bool,
    pub regime: BoundednessRegime,
    /// Critical angle factor of the regime; None in the unconditional band.
    pub angle_threshold: Option<f64>,
    /// Minimal corner decay t of the weighted estimates; None in the
    /// unconditional band. Negative when no decay is needed.
    pub weighted_threshold: Option<f64>,
}

/// Classifies exactly from f64 inputs (which are dyadic rationals, so the
/// conversion loses nothing).
pub fn classify(p: f64, alpha_max: f64) -> Result<BoundednessVerdict> {
    let pq = rational(p, "exponent p")?;
    let aq = rational(alpha_max, "angle factor alpha_max")?;
    classify_exact(&pq, &aq)
}

pub fn classify_exact(p: &BigRational, alpha_max: &BigRational) -> Result<BoundednessVerdict> {
    validate(p, alpha_max)?;
    let regime = if *p > int(4) {
        BoundednessRegime::LargeExponent
    } else if *p < ratio(4, 3) {
        BoundednessRegime::SmallExponent
    } else {
        BoundednessRegime::NoRestriction
    };
    let angle_threshold = match regime {
        BoundednessRegime::LargeExponent => Some(int(1) + int(2) / (p - int(2))),
        BoundednessRegime::SmallExponent => {
            Some(int(1) + int(2) * (p - int(1)) / (int(2) - p))
        }
        BoundednessRegime::NoRestriction => None,
    };
    let weighted_threshold = match regime {
        BoundednessRegime::NoRestriction => None,
        _ => Some(weighted_exponent_threshold_exact(p, alpha_max)?),
    };
    Ok(BoundednessVerdict {
        p: p.to_f64().unwrap_or(f64::NAN),
        alpha_max: alpha_max.to_f64().unwrap_or(f64::NAN),
        projection_bounded: projection_bounded_exact(p, alpha_max),
        main1_hypothesis: main1_hypothesis_exact(p, alpha_max),
        regime,
        angle_threshold: angle_threshold.and_then(|q| q.to_f64()),
        weighted_threshold: weighted_threshold.and_then(|q| q.to_f64()),
    })
}
