//! Delay statistics: moments, entropic risk, empirical CCDF.
//!
//! Moments use population (1/n) estimators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSummary {
    pub mean_s: f64,
    pub variance_s2: f64,
    pub std_s: f64,
    /// `μ3 / Var^(3/2)`; `None` with fewer than three samples or zero variance.
    pub skewness: Option<f64>,
    /// `(1/ρ) ln E[exp(ρ T)]`.
    pub entropic_risk_s: f64,
    pub samples: usize,
}

/// Entropic risk `(1/ρ) ln mean(exp(ρ T))`, shifted by the maximum so large
/// `ρ T` cannot overflow.
pub fn entropic_risk(samples: &[f64], rho: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if !(rho > 0.0) {
        return Err(Error::domain("rho", rho));
    }
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = samples.len() as f64;
    let shifted = samples.iter().map(|&t| (rho * (t - max)).exp_m1()).sum::<f64>() / n;
    Ok(max + shifted.ln_1p() / rho)
}

pub fn summarize(samples: &[f64], rho: f64) -> Result<RiskSummary> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if let Some(&bad) = samples.iter().find(|t| !t.is_finite()) {
        return Err(Error::domain("delay sample", bad));
    }
    let nf = n as f64;
    // Accumulate offsets from the first sample so constant data is exact.
    let pivot = samples[0];
    let mean = pivot + samples.iter().map(|t| t - pivot).sum::<f64>() / nf;
    let (m2, m3) = samples.iter().fold((0.0, 0.0), |(m2, m3), &t| {
        let d = t - mean;
        (m2 + d * d, m3 + d * d * d)
    });
    let variance = m2 / nf;
    let mu3 = m3 / nf;
    let skewness = (n >= 3 && variance > 0.0).then(|| mu3 / variance.powf(1.5));
    Ok(RiskSummary {
        mean_s: mean,
        variance_s2: variance,
        std_s: variance.sqrt(),
        skewness,
        entropic_risk_s: entropic_risk(samples, rho)?,
        samples: n,
    })
}

/// Right-continuous empirical CCDF `P(T > x)` stored at the sorted unique
/// sample values.
#[derive(Debug, Clone, PartialEq)]
pub struct Ccdf {
    points: Vec<(f64, f64)>,
    sorted: Vec<f64>,
}

impl Ccdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut points: Vec<(f64, f64)> = Vec::new();
        for (i, &x) in sorted.iter().enumerate() {
            let exceed = (sorted.len() - i - 1) as f64 / n;
            match points.last_mut() {
                Some(last) if last.0 == x => last.1 = exceed,
                _ => points.push((x, exceed)),
            }
        }
        Ok(Self { points, sorted })
    }

    /// `(threshold, exceedance)` pairs, thresholds ascending.
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn samples(&self) -> usize {
        self.sorted.len()
    }

    /// `P(T > x)`.
    pub fn exceedance(&self, x: f64) -> f64 {
        let above = self.sorted.len() - self.sorted.partition_point(|&t| t <= x);
        above as f64 / self.sorted.len() as f64
    }

    /// Smallest sample threshold whose exceedance is at most `level`.
    pub fn tail_crossing(&self, level: f64) -> Result<f64> {
        if !(level > 0.0 && level <= 1.0) {
            return Err(Error::domain("exceedance level", level));
        }
        let n = self.sorted.len();
        if level < 1.0 / n as f64 {
            return Err(Error::Resolution { level, samples: n });
        }
        let idx = self.points.partition_point(|&(_, p)| p > level);
        Ok(self.points[idx].0)
    }
}

pub fn ccdf(samples: &[f64]) -> Result<Ccdf> {
    Ccdf::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_samples() {
        let s = summarize(&[0.1, 0.1, 0.1], 30.0).unwrap();
        assert_eq!(s.mean_s, 0.1);
        assert_eq!(s.variance_s2, 0.0);
        assert_eq!(s.entropic_risk_s, 0.1);
        assert_eq!(s.skewness, None);
    }

    #[test]
    fn two_point_entropic_risk() {
        let s = summarize(&[0.0, std::f64::consts::LN_2], 1.0).unwrap();
        assert!((s.mean_s - 0.34657359027997264).abs() < 1e-15);
        assert!((s.entropic_risk_s - 1.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn symmetric_skewness() {
        let s = summarize(&[0.1, 0.2, 0.3], 5.0).unwrap();
        assert!(s.skewness.unwrap().abs() < 1e-12);
        let right = summarize(&[0.1, 0.1, 0.1, 0.5], 5.0).unwrap();
        assert!(right.skewness.unwrap() > 0.0);
    }

    #[test]
    fn too_few_samples() {
        assert_eq!(
            summarize(&[0.1], 1.0),
            Err(Error::InsufficientData { needed: 2, got: 1 })
        );
        assert!(ccdf(&[]).is_err());
    }

    #[test]
    fn no_overflow_at_large_rho() {
        let r = entropic_risk(&[10.0, 20.0], 1000.0).unwrap();
        assert!((r - (20.0 - 2f64.ln() / 1000.0)).abs() < 1e-12);
    }

    #[test]
    fn ccdf_counting() {
        let c = ccdf(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(c.exceedance(2.5), 0.5);
        assert_eq!(c.exceedance(4.0), 0.0);
        assert_eq!(c.exceedance(f64::NEG_INFINITY), 1.0);
        assert_eq!(c.points(), &[(1.0, 0.75), (2.0, 0.5), (3.0, 0.25), (4.0, 0.0)]);
        assert_eq!(c.tail_crossing(0.5).unwrap(), 2.0);
        assert_eq!(c.tail_crossing(1.0).unwrap(), 1.0);
        assert_eq!(c.tail_crossing(0.25).unwrap(), 3.0);
        assert!(matches!(c.tail_crossing(0.2), Err(Error::Resolution { .. })));
    }

    #[test]
    fn ccdf_merges_ties() {
        let c = ccdf(&[1.0, 1.0, 2.0]).unwrap();
        assert_eq!(c.points().len(), 2);
        assert!((c.points()[0].1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn exponential_ccdf_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let s: Vec<f64> = (0..100_000).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let c = ccdf(&s).unwrap();
        assert!((c.exceedance(1.0) - (-1f64).exp()).abs() < 0.01);
    }

    #[test]
    fn risk_grows_with_rho() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<f64> = (0..5000).map(|_| 0.05 + 0.2 * rng.random::<f64>().powi(3)).collect();
        let risks: Vec<f64> = [1.0, 5.0, 15.0, 30.0, 60.0]
            .iter()
            .map(|&r| entropic_risk(&s, r).unwrap())
            .collect();
        assert!(risks.windows(2).all(|w| w[1] >= w[0]));
    }

    fn samples() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.001f64..1.0, 3..200)
    }

    proptest! {
        #[test]
        fn jensen(s in samples(), rho in 0.1f64..100.0) {
            let sum = summarize(&s, rho).unwrap();
            prop_assert!(sum.entropic_risk_s >= sum.mean_s - 1e-12);
            prop_assert!(sum.variance_s2 >= 0.0);
        }

        #[test]
        fn ccdf_is_monotone(s in samples()) {
            let c = ccdf(&s).unwrap();
            let pts = c.points();
            prop_assert!(pts.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 > w[1].1));
            prop_assert_eq!(pts.last().unwrap().1, 0.0);
            prop_assert_eq!(c.exceedance(pts[0].0 - 1.0), 1.0);
        }

        #[test]
        fn shift_equivariance(s in samples(), c in -0.5f64..0.5) {
            let a = summarize(&s, 10.0).unwrap();
            let shifted: Vec<f64> = s.iter().map(|t| t + c).collect();
            let b = summarize(&shifted, 10.0).unwrap();
            prop_assert!((b.mean_s - a.mean_s - c).abs() < 1e-12);
            prop_assert!((b.variance_s2 - a.variance_s2).abs() < 1e-12);
            prop_assert!((b.entropic_risk_s - a.entropic_risk_s - c).abs() < 1e-12);
            if let (Some(x), Some(y)) = (a.skewness, b.skewness) {
                if a.variance_s2 > 1e-8 {
                    prop_assert!((x - y).abs() < 1e-6);
                }
            }
        }

        // Cumulant expansion mean + ρ/2 Var + ρ²/6 μ3 is accurate to
        // O((ρ spread)^3 spread); the bound below dominates it once ρ spread >= 1/60.
        #[test]
        fn third_order_expansion(
            base in 0.05f64..0.5,
            raw in prop::collection::vec(-1.0f64..1.0, 3..100),
            rho_spread in 0.02f64..0.1,
        ) {
            let spread_raw = raw.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            prop_assume!(spread_raw > 1e-3);
            let s: Vec<f64> = raw.iter().map(|x| base + 0.01 * x).collect();
            let sum = summarize(&s, 1.0).unwrap();
            let spread = s.iter().fold(0.0f64, |m, t| m.max((t - sum.mean_s).abs()));
            let rho = rho_spread / spread;
            let mu3 = sum.skewness.unwrap_or(0.0) * sum.variance_s2.powf(1.5);
            let approx = sum.mean_s + rho / 2.0 * sum.variance_s2 + rho * rho / 6.0 * mu3;
            let exact = entropic_risk(&s, rho).unwrap();
            prop_assert!((exact - approx).abs() <= 10.0 * (rho * spread).powi(4) * spread + 1e-13);
        }
    }
}
