//! Bit-complexity bounds for memorizing n labels on a δ-separated subset of
//! the unit sphere.
//!
//! The packing number P_δ of S^{d−1} is unknown, so every output here is a
//! bound evaluated on the closed-form sandwich
//! (1/(4δ))^{d−1} ≤ C_δ ≤ P_δ ≤ (2/δ)^d, never the true quantity. All
//! arithmetic stays in the log domain.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    UnitSphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityQuery {
    pub n: u64,
    pub d: u64,
    pub delta: f64,
    pub set_kind: SetKind,
}

impl CapacityQuery {
    pub fn new(n: u64, d: u64, delta: f64) -> Result<Self> {
        let q = Self {
            n,
            d,
            delta,
            set_kind: SetKind::UnitSphere,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("n must be at least 1".into()));
        }
        if self.d < 2 {
            return Err(Error::InvalidInput(format!("d must be at least 2, got {}", self.d)));
        }
        if !(self.delta > 0.0 && self.delta <= 2.0) {
            return Err(Error::InvalidInput(format!(
                "delta must lie in (0, 2], got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PackingBounds {
    /// log₂ of (1/(4δ))^{d−1}, clamped at 0.
    pub lower_log2: f64,
    /// log₂ of (2/δ)^d.
    pub upper_log2: f64,
    /// The unclamped lower value was negative.
    pub lower_clamped: bool,
}

pub fn packing_bounds(d: u64, delta: f64) -> PackingBounds {
    let raw = (d as f64 - 1.0) * (1.0 / (4.0 * delta)).log2();
    PackingBounds {
        lower_log2: raw.max(0.0),
        upper_log2: d as f64 * (2.0 / delta).log2(),
        lower_clamped: raw < 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitBound {
    pub bits: f64,
    /// The geometric term was vacuous and the bound fell back to n.
    pub degenerate: bool,
}

/// max(n, log₂ log₂ P), with the packing lower bound standing in for P.
pub fn bits_lower_bound(q: &CapacityQuery) -> Result<BitBound> {
    q.validate()?;
    let log2_p = packing_bounds(q.d, q.delta).lower_log2;
    let n = q.n as f64;
    if log2_p <= 1.0 {
        return Ok(BitBound {
            bits: n,
            degenerate: true,
        });
    }
    Ok(BitBound {
        bits: n.max(log2_p.log2()),
        degenerate: false,
    })
}

/// n + log₂ n + log₂ ln(2·C), with C = (4/δ)^d the packing upper bound at
/// scale δ/2.
pub fn bits_upper_bound(q: &CapacityQuery) -> Result<BitBound> {
    q.validate()?;
    let n = q.n as f64;
    let ln_2c = std::f64::consts::LN_2 + q.d as f64 * (4.0 / q.delta).ln();
    Ok(BitBound {
        bits: n + n.log2() + ln_2c.log2(),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub query: CapacityQuery,
    pub packing: PackingBounds,
    pub lower: BitBound,
    pub upper: BitBound,
}

pub fn capacity_report(q: &CapacityQuery) -> Result<CapacityReport> {
    Ok(CapacityReport {
        query: *q,
        packing: packing_bounds(q.d, q.delta),
        lower: bits_lower_bound(q)?,
        upper: bits_upper_bound(q)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: u64, d: u64, delta: f64) -> CapacityQuery {
        CapacityQuery::new(n, d, delta).unwrap()
    }

    #[test]
    fn packing_examples() {
        let p = packing_bounds(2, 0.25);
        assert_eq!(p.lower_log2, 0.0);
        assert!((p.upper_log2 - 6.0).abs() < 1e-12);
        assert!(!p.lower_clamped);
        let p = packing_bounds(2, 0.5);
        assert_eq!(p.lower_log2, 0.0);
        assert!(p.lower_clamped);
    }

    #[test]
    fn lower_bound_examples() {
        let b = bits_lower_bound(&q(100, 2, 0.25)).unwrap();
        assert_eq!(b.bits, 100.0);
        assert!(b.degenerate);
        let b = bits_lower_bound(&q(1, 50, 0.01)).unwrap();
        let expected = (49.0 * 25f64.log2()).log2();
        assert!((b.bits - expected).abs() < 1e-12);
        assert!((b.bits - 7.83).abs() < 0.01);
    }

    #[test]
    fn upper_bound_example() {
        // ln(2·40^10) = ln 2 + 10 ln 40 ≈ 37.58
        let b = bits_upper_bound(&q(100, 10, 0.1)).unwrap();
        assert!((b.bits - 111.87).abs() < 0.01, "{}", b.bits);
    }

    #[test]
    fn query_validation() {
        assert!(CapacityQuery::new(0, 3, 0.1).is_err());
        assert!(CapacityQuery::new(3, 1, 0.1).is_err());
        assert!(CapacityQuery::new(3, 3, 0.0).is_err());
        assert!(CapacityQuery::new(3, 3, 2.5).is_err());
    }

    #[test]
    fn large_dimensions_stay_finite() {
        let r = capacity_report(&q(10, 10_000, 1e-9)).unwrap();
        assert!(r.packing.upper_log2.is_finite() && r.upper.bits.is_finite());
    }

    proptest! {
        #[test]
        fn lower_never_below_n(n in 1u64..100_000, d in 2u64..500, delta in 1e-6f64..2.0) {
            let b = bits_lower_bound(&q(n, d, delta)).unwrap();
            prop_assert!(b.bits >= n as f64);
        }

        #[test]
        fn upper_grows_as_delta_shrinks(d in 2u64..200, delta in 1e-6f64..1.0, f in 0.1f64..0.99) {
            prop_assert!(packing_bounds(d, delta * f).upper_log2 > packing_bounds(d, delta).upper_log2);
        }
    }
}
