//! Unbiased pass@k and speedup@k estimators and evaluation reports.

mod generate;
mod report;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::Scalar;

pub use generate::{sample_tasks, EvalTask};
pub use report::{aggregate, EvalReport, MetricRow, ProblemEval, ProblemMetrics, SampleResult};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("inconsistent samples: {0}")]
    Inconsistent(String),
}

fn check(n: usize, c: usize, k: usize) -> Result<(), MetricError> {
    if c > n {
        return Err(MetricError::Domain(format!("c = {c} exceeds N = {n}")));
    }
    if k == 0 || k > n {
        return Err(MetricError::Domain(format!("k = {k} outside 1..={n}")));
    }
    Ok(())
}

/// `1 - C(N-c, k) / C(N, k)` as `1 - Π_{i=N-c+1}^{N} (1 - k/i)`.
pub fn pass_at_k<S: Scalar>(n: usize, c: usize, k: usize) -> Result<S, MetricError> {
    check(n, c, k)?;
    if n - c < k {
        return Ok(S::one());
    }
    let kk = S::lit(k as f64);
    let mut miss = S::one();
    for i in (n - c + 1)..=n {
        miss *= S::one() - kk / S::lit(i as f64);
    }
    Ok(S::one() - miss)
}

/// Exact value of [`pass_at_k`] as a rational: `1 - Π_{i<k} (N-c-i)/(N-i)`.
pub fn pass_at_k_exact(n: usize, c: usize, k: usize) -> Result<BigRational, MetricError> {
    check(n, c, k)?;
    if n - c < k {
        return Ok(BigRational::one());
    }
    let mut miss = BigRational::one();
    for i in 0..k {
        miss *= BigRational::new(BigInt::from(n - c - i), BigInt::from(n - i));
    }
    Ok(BigRational::one() - miss)
}

/// Weights `C(j-1, k-1) / C(N, k)` for `j = 1..=N`, built down from `w_N = k/N`.
pub fn order_statistic_weights<S: Scalar>(n: usize, k: usize) -> Result<Vec<S>, MetricError> {
    check(n, 0, k)?;
    let mut w = vec![S::zero(); n];
    w[n - 1] = S::lit(k as f64) / S::lit(n as f64);
    for j in (k + 1..=n).rev() {
        // w_{j-1} = w_j (j - k) / (j - 1)
        w[j - 2] = w[j - 1] * S::lit((j - k) as f64) / S::lit((j - 1) as f64);
    }
    Ok(w)
}

fn speedups(samples: &[(bool, f64)], baseline: f64) -> Result<Vec<f64>, MetricError> {
    if !(baseline > 0.0) {
        return Err(MetricError::Domain(format!("baseline must be positive, got {baseline}")));
    }
    let mut v = samples
        .iter()
        .map(|&(ok, rt)| {
            if !ok {
                Ok(0.0)
            } else if rt > 0.0 {
                Ok(baseline / rt)
            } else {
                Err(MetricError::Domain(format!("runtime must be positive, got {rt}")))
            }
        })
        .collect::<Result<Vec<f64>, _>>()?;
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Expected maximum speedup over a uniformly drawn `k`-subset of the samples.
/// Incorrect samples count as speedup 0.
pub fn speedup_n_at_k<S: Scalar>(samples: &[(bool, f64)], baseline: f64, k: usize) -> Result<S, MetricError> {
    let sorted = speedups(samples, baseline)?;
    let w = order_statistic_weights::<S>(sorted.len(), k)?;
    Ok(sorted.iter().zip(&w).map(|(&s, &wj)| S::lit(s) * wj).sum())
}

/// [`speedup_n_at_k`] with exact rational weights; speedups enter as exact binary fractions.
pub fn speedup_n_at_k_exact(samples: &[(bool, f64)], baseline: f64, k: usize) -> Result<BigRational, MetricError> {
    let sorted = speedups(samples, baseline)?;
    let n = sorted.len();
    check(n, 0, k)?;
    let mut w = BigRational::new(BigInt::from(k), BigInt::from(n));
    let mut total = BigRational::zero();
    for j in (k..=n).rev() {
        let s = BigRational::from_float(sorted[j - 1]).expect("finite speedup");
        total += s * &w;
        if j > k {
            w *= BigRational::new(BigInt::from(j - k), BigInt::from(j - 1));
        }
    }
    Ok(total)
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Every k-subset of 0..n, as index lists.
    fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in start..n {
                cur.push(i);
                rec(i + 1, n, k, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(0, n, k, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn worked_values() {
        assert_eq!(pass_at_k::<f64>(1, 1, 1).unwrap(), 1.0);
        assert!((pass_at_k::<f64>(20, 5, 1).unwrap() - 0.25).abs() < 1e-15);
        assert!((pass_at_k::<f64>(5, 2, 2).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(pass_at_k_exact(5, 2, 2).unwrap(), BigRational::new(7.into(), 10.into()));
        let s: f64 = speedup_n_at_k(&[(true, 4.0), (true, 2.0), (true, 1.0)], 4.0, 2).unwrap();
        assert!((s - 10.0 / 3.0).abs() < 1e-12);
        assert_eq!(speedup_n_at_k::<f64>(&[(true, 1.0)], 2.0, 1).unwrap(), 2.0);
        assert_eq!(speedup_n_at_k::<f64>(&[(false, 1.0), (false, 3.0)], 2.0, 2).unwrap(), 0.0);
    }

    #[test]
    fn domain_errors() {
        assert!(pass_at_k::<f64>(3, 1, 4).is_err());
        assert!(pass_at_k::<f64>(3, 1, 0).is_err());
        assert!(pass_at_k::<f64>(3, 4, 1).is_err());
        assert!(speedup_n_at_k::<f64>(&[(true, 1.0)], 0.0, 1).is_err());
        assert!(speedup_n_at_k::<f64>(&[(true, 0.0)], 1.0, 1).is_err());
    }

    #[test]
    fn large_n_is_finite() {
        let p: f64 = pass_at_k(10_000, 3, 5000).unwrap();
        assert!(p.is_finite() && p > 0.87 && p < 0.88);
        let w = order_statistic_weights::<f64>(10_000, 100).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn enumeration_oracle_small() {
        for n in 1..=8 {
            for c in 0..=n {
                for k in 1..=n {
                    let all = subsets(n, k);
                    let hits = all.iter().filter(|s| s.iter().any(|&i| i < c)).count();
                    let oracle = hits as f64 / all.len() as f64;
                    assert!((pass_at_k::<f64>(n, c, k).unwrap() - oracle).abs() < 1e-12, "{n} {c} {k}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn speedup_matches_enumeration(
            raw in prop::collection::vec((any::<bool>(), 1u32..100), 1..9),
            k_seed in any::<usize>(),
            baseline in 1u32..200,
        ) {
            let samples: Vec<(bool, f64)> = raw.iter().map(|&(ok, r)| (ok, r as f64)).collect();
            let n = samples.len();
            let k = 1 + k_seed % n;
            let all = subsets(n, k);
            let oracle = all
                .iter()
                .map(|s| s.iter().map(|&i| if samples[i].0 { baseline as f64 / samples[i].1 } else { 0.0 }).fold(0.0, f64::max))
                .sum::<f64>() / all.len() as f64;
            let got: f64 = speedup_n_at_k(&samples, baseline as f64, k).unwrap();
            prop_assert!((got - oracle).abs() <= 1e-9 * oracle.max(1.0));
            let exact = rational_to_f64(&speedup_n_at_k_exact(&samples, baseline as f64, k).unwrap());
            prop_assert!((exact - oracle).abs() <= 1e-9 * oracle.max(1.0));
            let mut rev = samples.clone();
            rev.reverse();
            prop_assert_eq!(got, speedup_n_at_k::<f64>(&rev, baseline as f64, k).unwrap());
        }

        #[test]
        fn pass_monotone_in_k(n in 1usize..60, c_seed in any::<usize>()) {
            let c = c_seed % (n + 1);
            let mut prev = 0.0;
            for k in 1..=n {
                let p: f64 = pass_at_k(n, c, k).unwrap();
                prop_assert!(p + 1e-12 >= prev);
                prop_assert!((0.0..=1.0).contains(&p));
                prev = p;
            }
            prop_assert_eq!(pass_at_k::<f64>(n, c, n).unwrap() == 1.0, c >= 1);
            prop_assert_eq!(pass_at_k::<f64>(n, c, 1).unwrap() == 0.0, c == 0);
        }

        #[test]
        fn speedup_monotone_in_k(raw in prop::collection::vec((any::<bool>(), 1u32..100), 1..30)) {
            let samples: Vec<(bool, f64)> = raw.iter().map(|&(ok, r)| (ok, r as f64)).collect();
            let mut prev = 0.0;
            for k in 1..=samples.len() {
                let s: f64 = speedup_n_at_k(&samples, 50.0, k).unwrap();
                prop_assert!(s + 1e-9 >= prev);
                prev = s;
            }
        }
    }
}
