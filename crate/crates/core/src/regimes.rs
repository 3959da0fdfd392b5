//! Closed-form phase-regime predictors.

use serde::{Deserialize, Serialize};

use crate::ensemble::BilevelParams;
use crate::error::Result;

/// Absolute tolerance on `threshold - t` below which a point is a tie.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Generalizes,
    Misclassifies,
    Boundary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeVerdict {
    pub verdict: Verdict,
    pub threshold: f64,
    pub margin: f64,
}

impl RegimeVerdict {
    pub fn from_threshold(threshold: f64, t: f64) -> Self {
        let margin = threshold - t;
        let verdict = if margin > TIE_TOL {
            Verdict::Generalizes
        } else if margin < -TIE_TOL {
            Verdict::Misclassifies
        } else {
            Verdict::Boundary
        };
        Self {
            verdict,
            threshold,
            margin,
        }
    }
}

pub fn mni_threshold(p: f64, q: f64, r: f64) -> f64 {
    (1.0 - r).min(p + 1.0 - 2.0 * (q + r).max(1.0))
}

pub fn averaging_threshold(p: f64, q: f64, r: f64) -> f64 {
    (1.0 - r).min(p + 1.0 - 2.0 * (q + r))
}

/// The tight MNI characterization: generalizes iff
/// `t < min{1 - r, p + 1 - 2 max{1, q + r}}`.
pub fn mni_regime(p: f64, q: f64, r: f64, t: f64) -> Result<RegimeVerdict> {
    BilevelParams::validate_exponents(p, q, r, t)?;
    Ok(RegimeVerdict::from_threshold(mni_threshold(p, q, r), t))
}

/// The averaging baseline: works iff `t < min{1 - r, p + 1 - 2(q + r)}`.
pub fn averaging_regime(p: f64, q: f64, r: f64, t: f64) -> Result<RegimeVerdict> {
    BilevelParams::validate_exponents(p, q, r, t)?;
    Ok(RegimeVerdict::from_threshold(averaging_threshold(p, q, r), t))
}

/// What a one-sided legacy result says at a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Claim {
    Generalizes,
    /// Error probability at least 1/2.
    Misclassifies,
    /// The result says nothing here.
    Silent,
    Boundary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegacyClaim {
    pub claim: Claim,
    pub threshold: f64,
    pub margin: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LegacyVerdicts {
    /// The earlier results only cover `q + r > 1`.
    NotApplicable,
    Applicable {
        old_positive: LegacyClaim,
        old_negative: LegacyClaim,
    },
}

/// The earlier positive result (`t < min{1-r, p+1-2(q+r), p-2, 2q+r-2}`)
/// and negative result (`t > min{1-r, p+1-2(q+r)}`).
pub fn legacy_regimes(p: f64, q: f64, r: f64, t: f64) -> Result<LegacyVerdicts> {
    BilevelParams::validate_exponents(p, q, r, t)?;
    if q + r <= 1.0 {
        return Ok(LegacyVerdicts::NotApplicable);
    }
    let pos = averaging_threshold(p, q, r)
        .min(p - 2.0)
        .min(2.0 * q + r - 2.0);
    let neg = averaging_threshold(p, q, r);
    let claim = |threshold: f64, above: Claim, below: Claim| {
        let margin = threshold - t;
        let claim = if margin > TIE_TOL {
            above
        } else if margin < -TIE_TOL {
            below
        } else {
            Claim::Boundary
        };
        LegacyClaim {
            claim,
            threshold,
            margin,
        }
    };
    Ok(LegacyVerdicts::Applicable {
        old_positive: claim(pos, Claim::Generalizes, Claim::Silent),
        old_negative: claim(neg, Claim::Silent, Claim::Misclassifies),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regression {
    Works,
    Fails,
    Boundary,
}

impl Regression {
    pub fn works(self) -> bool {
        self == Regression::Works
    }
}

/// Regression works iff `q + r < 1`.
pub fn regression_works(q: f64, r: f64) -> Result<Regression> {
    if !(q.is_finite() && q > 0.0) || !(0.0..1.0).contains(&r) {
        return Err(crate::Error::InvalidParams(format!(
            "need q > 0 and 0 <= r < 1 (q = {q}, r = {r})"
        )));
    }
    let gap = 1.0 - (q + r);
    Ok(if gap > TIE_TOL {
        Regression::Works
    } else if gap < -TIE_TOL {
        Regression::Fails
    } else {
        Regression::Boundary
    })
}

/// Everything the sweep annotates a grid point with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeAnnotations {
    pub mni_regime: RegimeVerdict,
    pub averaging_regime: RegimeVerdict,
    pub legacy: LegacyVerdicts,
    pub regression_works: Regression,
}

pub fn annotate(p: f64, q: f64, r: f64, t: f64) -> Result<RegimeAnnotations> {
    Ok(RegimeAnnotations {
        mni_regime: mni_regime(p, q, r, t)?,
        averaging_regime: averaging_regime(p, q, r, t)?,
        legacy: legacy_regimes(p, q, r, t)?,
        regression_works: regression_works(q, r)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discussion_example() {
        let v = mni_regime(1.1, 0.1, 0.5, 0.3).unwrap();
        assert_eq!(v.verdict, Verdict::Misclassifies);
        assert!((v.threshold - 0.1).abs() < 1e-15);
        let v = mni_regime(1.1, 0.1, 0.5, 0.05).unwrap();
        assert_eq!(v.verdict, Verdict::Generalizes);
        let a = averaging_regime(1.1, 0.1, 0.5, 0.3).unwrap();
        assert_eq!(a.verdict, Verdict::Generalizes);
        assert!((a.threshold - 0.5).abs() < 1e-15);
    }

    #[test]
    fn regression_fails_examples() {
        let v = mni_regime(2.0, 0.9, 0.6, 0.3).unwrap();
        assert_eq!(v.verdict, Verdict::Misclassifies);
        assert!(v.threshold.abs() < 1e-15);
        let a = averaging_regime(2.0, 0.75, 0.5, 0.49).unwrap();
        assert_eq!(a.verdict, Verdict::Generalizes);
        assert!((a.threshold - 0.5).abs() < 1e-15);
    }

    #[test]
    fn legacy_examples() {
        let LegacyVerdicts::Applicable { old_positive, .. } =
            legacy_regimes(4.0, 1.0, 0.5, 0.1).unwrap()
        else {
            panic!("should apply");
        };
        assert_eq!(old_positive.claim, Claim::Generalizes);
        assert!((old_positive.threshold - 0.5).abs() < 1e-15);

        let LegacyVerdicts::Applicable { old_positive, .. } =
            legacy_regimes(2.2, 1.0, 0.5, 0.15).unwrap()
        else {
            panic!("should apply");
        };
        assert_eq!(old_positive.claim, Claim::Generalizes);
        assert!((old_positive.threshold - 0.2).abs() < 1e-12);
        assert!((mni_regime(2.2, 1.0, 0.5, 0.15).unwrap().threshold - 0.2).abs() < 1e-12);

        assert_eq!(
            legacy_regimes(2.0, 0.4, 0.5, 0.1).unwrap(),
            LegacyVerdicts::NotApplicable
        );
    }

    #[test]
    fn regression_flags() {
        assert_eq!(regression_works(0.1, 0.5).unwrap(), Regression::Works);
        assert_eq!(regression_works(0.9, 0.6).unwrap(), Regression::Fails);
        assert_eq!(regression_works(0.5, 0.5).unwrap(), Regression::Boundary);
    }

    #[test]
    fn invalid_exponents_rejected() {
        assert!(mni_regime(0.9, 0.1, 0.5, 0.1).is_err());
        assert!(averaging_regime(2.0, 0.1, 0.5, 0.6).is_err());
    }

    #[test]
    fn tie_is_boundary() {
        let v = RegimeVerdict::from_threshold(0.2, 0.2);
        assert_eq!(v.verdict, Verdict::Boundary);
    }
}
