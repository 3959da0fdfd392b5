use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative distance under which `n^x` is snapped to the nearest integer
/// before flooring, so that e.g. `100^0.5` floors to 10 rather than 9.
const FLOOR_SNAP_REL: f64 = 1e-12;

/// Largest feature count the floors are allowed to produce.
const MAX_DIMENSION: f64 = 9.0e15;

/// Scaling knobs of the bi-level ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BilevelParams {
    /// Number of training points.
    pub n: usize,
    /// Overparameterization exponent, `d = floor(n^p)`.
    pub p: f64,
    /// Favoring exponent, `a = n^-q`.
    pub q: f64,
    /// Favored-dimension exponent, `s = floor(n^r)`.
    pub r: f64,
    /// Class-count exponent, `k = c_k * floor(n^t)`.
    pub t: f64,
    /// Class multiplier.
    pub c_k: usize,
}

/// Sizes and weights implied by [`BilevelParams`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedScaling {
    pub n: usize,
    pub d: usize,
    pub s: usize,
    pub k: usize,
    pub a: f64,
    pub lambda_f: f64,
    pub lambda_u: f64,
    pub mu: f64,
}

impl DerivedScaling {
    /// Squared weight of feature `j` (0-based).
    #[inline]
    pub fn lambda(&self, j: usize) -> f64 {
        if j < self.s {
            self.lambda_f
        } else {
            self.lambda_u
        }
    }
}

/// `floor(n^x)` with boundary snapping.
pub fn floor_pow(n: usize, x: f64) -> Result<usize> {
    let value = (x * (n as f64).ln()).exp();
    if !value.is_finite() || value > MAX_DIMENSION {
        return Err(Error::InvalidParams(format!(
            "n^{x} = {value:e} exceeds the supported dimension"
        )));
    }
    let nearest = value.round();
    let snapped = if (value - nearest).abs() <= FLOOR_SNAP_REL * nearest.max(1.0) {
        nearest
    } else {
        value.floor()
    };
    Ok(snapped as usize)
}

impl BilevelParams {
    /// Checks the exponent ranges of the ensemble definition.
    pub fn validate_exponents(p: f64, q: f64, r: f64, t: f64) -> Result<()> {
        let all_finite = [p, q, r, t].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidParams("exponents must be finite".into()));
        }
        if p <= 1.0 {
            return Err(Error::InvalidParams(format!("p > 1 violated (p = {p})")));
        }
        if !(0.0..1.0).contains(&r) {
            return Err(Error::InvalidParams(format!(
                "0 <= r < 1 violated (r = {r})"
            )));
        }
        if q <= 0.0 || q >= p - r {
            return Err(Error::InvalidParams(format!(
                "0 < q < p - r violated (q = {q}, p - r = {})",
                p - r
            )));
        }
        if t < 0.0 || t >= r {
            return Err(Error::InvalidParams(format!(
                "0 <= t < r violated (t = {t}, r = {r})"
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.derive().map(|_| ())
    }

    /// Computes all derived sizes and weights, validating first.
    pub fn derive(&self) -> Result<DerivedScaling> {
        Self::validate_exponents(self.p, self.q, self.r, self.t)?;
        if self.c_k == 0 {
            return Err(Error::InvalidParams("c_k must be a positive integer".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidParams(format!("n >= 2 required (n = {})", self.n)));
        }
        let n = self.n;
        let d = floor_pow(n, self.p)?;
        let s = floor_pow(n, self.r)?;
        let k = self
            .c_k
            .checked_mul(floor_pow(n, self.t)?)
            .ok_or_else(|| Error::InvalidParams("k overflows".into()))?;
        if k < 2 {
            return Err(Error::InvalidParams(format!("k >= 2 violated (k = {k})")));
        }
        if k > s {
            return Err(Error::InvalidParams(format!(
                "k <= s violated (k = {k}, s = {s}): label-defining features must be favored"
            )));
        }
        if !(d > n && n > s) {
            return Err(Error::InvalidParams(format!(
                "d > n > s violated (d = {d}, n = {n}, s = {s})"
            )));
        }
        let nf = n as f64;
        let a = nf.powf(-self.q);
        let (df, sf) = (d as f64, s as f64);
        Ok(DerivedScaling {
            n,
            d,
            s,
            k,
            a,
            lambda_f: a * df / sf,
            lambda_u: (1.0 - a) * df / (df - sf),
            mu: nf.powf(self.q + self.r - 1.0),
        })
    }

    /// Same exponents at a different training-set size.
    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..*self }
    }
}

/// Trial configuration accepted as a JSON object.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub t: f64,
    pub c_k: usize,
    pub seed: u64,
}

impl TrialConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn params(&self) -> BilevelParams {
        BilevelParams {
            n: self.n,
            p: self.p,
            q: self.q,
            r: self.r,
            t: self.t,
            c_k: self.c_k,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, p: f64, q: f64, r: f64, t: f64, c_k: usize) -> BilevelParams {
        BilevelParams { n, p, q, r, t, c_k }
    }

    #[test]
    fn derive_reference_configuration() {
        let s = params(100, 2.0, 0.5, 0.5, 0.25, 1).derive().unwrap();
        assert_eq!((s.d, s.s, s.k), (10_000, 10, 3));
        assert!((s.a - 0.1).abs() < 1e-15);
        assert!((s.lambda_f - 100.0).abs() < 1e-9);
        assert!((s.lambda_u - 9000.0 / 9990.0).abs() < 1e-12);
        assert!((s.mu - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_class_count_at_zero_t() {
        let s = params(100, 1.5, 0.2, 0.5, 0.0, 2).derive().unwrap();
        assert_eq!(s.k, 2);
    }

    #[test]
    fn too_many_classes_rejected() {
        // k = 3 * floor(100^0.19) = 6 > s = floor(100^0.2) = 2
        let err = params(100, 2.0, 0.5, 0.2, 0.19, 3).derive().unwrap_err();
        assert!(matches!(err, Error::InvalidParams(ref m) if m.contains("k <= s")), "{err}");
    }

    #[test]
    fn exponent_ranges_rejected() {
        assert!(params(100, 1.0, 0.5, 0.5, 0.2, 1).derive().is_err());
        assert!(params(100, 2.0, 0.0, 0.5, 0.2, 1).derive().is_err());
        assert!(params(100, 2.0, 1.5, 0.5, 0.2, 1).derive().is_err());
        assert!(params(100, 2.0, 0.5, 1.0, 0.2, 1).derive().is_err());
        assert!(params(100, 2.0, 0.5, 0.5, 0.5, 1).derive().is_err());
        assert!(params(100, 2.0, 0.5, 0.5, 0.2, 0).derive().is_err());
        assert!(params(100, f64::NAN, 0.5, 0.5, 0.2, 1).derive().is_err());
    }

    #[test]
    fn k_below_two_rejected() {
        let err = params(100, 2.0, 0.5, 0.5, 0.1, 1).derive().unwrap_err();
        assert!(err.to_string().contains("k >= 2"));
    }

    #[test]
    fn oversized_dimension_rejected_before_overflow() {
        assert!(params(1_000_000, 40.0, 0.5, 0.5, 0.2, 1).derive().is_err());
    }

    #[test]
    fn exact_powers_floor_correctly() {
        assert_eq!(floor_pow(100, 0.5).unwrap(), 10);
        assert_eq!(floor_pow(1000, 1.0 / 3.0).unwrap(), 10);
        assert_eq!(floor_pow(64, 0.5).unwrap(), 8);
        assert_eq!(floor_pow(99, 0.5).unwrap(), 9);
        assert_eq!(floor_pow(400, 1.5).unwrap(), 8000);
    }

    #[test]
    fn trace_is_preserved() {
        for &(n, p, q, r) in &[(100, 2.0, 0.5, 0.5), (237, 1.7, 0.3, 0.6), (800, 1.1, 0.1, 0.5)] {
            let s = params(n, p, q, r, 0.0, 2).derive().unwrap();
            let trace = s.s as f64 * s.lambda_f + (s.d - s.s) as f64 * s.lambda_u;
            assert!((trace - s.d as f64).abs() <= 1e-9 * s.d as f64);
        }
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let ok = r#"{"n":100,"p":2.0,"q":0.5,"r":0.5,"t":0.25,"c_k":1,"seed":3}"#;
        assert_eq!(TrialConfig::from_json_str(ok).unwrap().seed, 3);
        let extra = r#"{"n":100,"p":2.0,"q":0.5,"r":0.5,"t":0.25,"c_k":1,"seed":3,"x":1}"#;
        assert!(TrialConfig::from_json_str(extra).is_err());
    }
}
