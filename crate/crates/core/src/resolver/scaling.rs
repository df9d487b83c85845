use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::{Field, Result};

/// Default shortest resolvable lifetime, ns (one 100 ps histogram bin).
pub const DEFAULT_MIN_TAU1_NS: f64 = 0.1;

/// τ₁(N) = b + a/N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeScalingFit {
    /// Slope against 1/N, ns.
    pub a: f64,
    /// Lifetime floor, ns.
    pub b: f64,
    /// Covariance of (a, b).
    pub covariance: [[f64; 2]; 2],
    /// Residual standard deviation, ns.
    pub goodness: f64,
    /// The unconstrained intercept was negative and has been set to zero.
    #[serde(default)]
    pub b_clamped: bool,
}

impl LifetimeScalingFit {
    pub fn tau1_ns(&self, n: f64) -> f64 {
        self.b + self.a / n
    }
}

/// Ordinary least squares of τ₁ against 1/N.
pub fn fit_lifetime_scaling(points: &[(f64, f64)]) -> Result<LifetimeScalingFit> {
    if points
        .iter()
        .any(|(n, t)| !(*n >= 1.0) || !(*t > 0.0) || !t.is_finite())
    {
        return Err(invalid("scaling points need N ≥ 1 and positive lifetimes"));
    }
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(invalid("lifetime scaling fit needs at least 3 distinct N"));
    }
    let xs: Vec<f64> = points.iter().map(|p| 1.0 / p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let mut a = sxy / sxx;
    let mut b = my - a * mx;
    let mut b_clamped = false;
    let (covariance, dof);
    if b < 0.0 {
        b_clamped = true;
        b = 0.0;
        let sx2: f64 = xs.iter().map(|x| x * x).sum();
        a = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / sx2;
        dof = m - 1.0;
        let s2 = residual_ss(&xs, &ys, a, b) / dof;
        covariance = [[s2 / sx2, 0.0], [0.0, 0.0]];
    } else {
        dof = m - 2.0;
        let s2 = if dof > 0.0 {
            residual_ss(&xs, &ys, a, b) / dof
        } else {
            0.0
        };
        let var_a = s2 / sxx;
        covariance = [
            [var_a, -mx * var_a],
            [-mx * var_a, s2 / m + mx * mx * var_a],
        ];
    }
    if !(a > 0.0) {
        return Err(invalid(format!(
            "fitted slope a = {a} is not positive; lifetimes do not shorten with N"
        )));
    }
    let goodness = if dof > 0.0 {
        (residual_ss(&xs, &ys, a, b) / dof).sqrt()
    } else {
        0.0
    };
    Ok(LifetimeScalingFit {
        a,
        b,
        covariance,
        goodness,
        b_clamped,
    })
}

fn residual_ss(xs: &[f64], ys: &[f64], a: f64, b: f64) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (y - b - a * x).powi(2))
        .sum()
}

/// g² predicted along the scaling curve:
/// 1 − 1/n + (n−1)·τ̄₀² / (n·(a + b·n)²).
pub fn g2_of_n_value<T: Field>(n: u32, a: &T, b: &T, tau0_mean: &T) -> Result<T> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let nn = T::from_u32(n).expect("representable");
    let denom = a.clone() + b.clone() * nn.clone();
    if !(denom > T::zero()) {
        return Err(invalid("a + b·n must be positive"));
    }
    let one = T::one();
    Ok(one.clone() - one.clone() / nn.clone()
        + (nn.clone() - one) * tau0_mean.clone() * tau0_mean.clone() / (nn * denom.clone() * denom))
}

pub fn g2_of_n(n: u32, fit: &LifetimeScalingFit, tau0_mean_ns: f64) -> Result<f64> {
    g2_of_n_with_floor(n, fit, tau0_mean_ns, DEFAULT_MIN_TAU1_NS)
}

/// Refuses `n` whose predicted lifetime b + a/n falls below `min_tau1_ns`.
pub fn g2_of_n_with_floor(
    n: u32,
    fit: &LifetimeScalingFit,
    tau0_mean_ns: f64,
    min_tau1_ns: f64,
) -> Result<f64> {
    if !(tau0_mean_ns > 0.0) {
        return Err(invalid("tau0 must be positive"));
    }
    if n >= 1 && fit.tau1_ns(n as f64) < min_tau1_ns {
        return Err(invalid(format!(
            "predicted lifetime {:.4} ns at n = {n} is below the {min_tau1_ns} ns resolution",
            fit.tau1_ns(n as f64)
        )));
    }
    g2_of_n_value(n, &fit.a, &fit.b, &tau0_mean_ns)
}

/// Every n in [1, n_max) with g2_of_n(n + 1) < g2_of_n(n).
pub fn scaling_monotonicity_violations(
    a: f64,
    b: f64,
    tau0_mean_ns: f64,
    n_max: u32,
) -> Result<Vec<u32>> {
    let values = (1..=n_max)
        .map(|n| g2_of_n_value(n, &a, &b, &tau0_mean_ns))
        .collect::<Result<Vec<_>>>()?;
    Ok(values
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] < w[0])
        .map(|(i, _)| i as u32 + 1)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photstat::g2_dominant_value;
    use num_rational::Ratio;
    use proptest::prelude::*;

    const FIG5: [(f64, f64); 4] = [(1.0, 48.95), (2.0, 31.42), (5.0, 24.72), (10.0, 19.39)];

    #[test]
    fn exact_data_is_recovered() {
        let pts: Vec<(f64, f64)> = (1..=6)
            .map(|n| (n as f64, 10.0 + 40.0 / n as f64))
            .collect();
        let f = fit_lifetime_scaling(&pts).unwrap();
        assert!((f.a - 40.0).abs() < 1e-9 && (f.b - 10.0).abs() < 1e-9);
        assert!(!f.b_clamped);
    }

    #[test]
    fn paper_pairs() {
        let f = fit_lifetime_scaling(&FIG5).unwrap();
        assert!(f.a > 0.0 && f.b > 0.0);
        for (n, t) in FIG5 {
            assert!((f.tau1_ns(n) / t - 1.0).abs() < 0.15);
        }
        assert!(scaling_monotonicity_violations(f.a, f.b, 48.95, 10)
            .unwrap()
            .is_empty());
        assert!(fit_lifetime_scaling(&FIG5[..2]).is_err());
    }

    #[test]
    fn negative_intercept_is_clamped() {
        let pts = [(1.0, 50.0), (2.0, 20.0), (4.0, 5.0)];
        let f = fit_lifetime_scaling(&pts).unwrap();
        assert!(f.b_clamped);
        assert_eq!(f.b, 0.0);
        assert!(f.a > 0.0);
    }

    #[test]
    fn scaling_curve_examples() {
        let tau0 = 48.95;
        let dicke = LifetimeScalingFit {
            a: tau0,
            b: 0.0,
            covariance: [[0.0; 2]; 2],
            goodness: 0.0,
            b_clamped: false,
        };
        assert_eq!(g2_of_n(1, &dicke, tau0).unwrap(), 0.0);
        assert!((g2_of_n(2, &dicke, tau0).unwrap() - 1.0).abs() < 1e-12);
        for n in 1..=10u32 {
            let want = g2_dominant_value(n as usize, &(n as f64 / tau0), &(1.0 / tau0)).unwrap();
            assert!((g2_of_n(n, &dicke, tau0).unwrap() - want).abs() < 1e-12);
        }
        let floor = LifetimeScalingFit {
            a: 30.0,
            b: 15.0,
            ..dicke.clone()
        };
        assert!((g2_of_n(100_000, &floor, tau0).unwrap() - 1.0).abs() < 1e-4);
        // exact arithmetic with rationals
        let q = |x: i128| Ratio::new(x, 1);
        assert_eq!(
            g2_of_n_value(2, &q(4), &q(0), &q(2)).unwrap(),
            Ratio::new(5, 8)
        );
        let tiny = LifetimeScalingFit {
            a: 0.05,
            b: 0.0,
            ..dicke
        };
        assert!(g2_of_n(2, &tiny, tau0).is_err());
    }

    #[test]
    fn monotonicity_fails_inside_the_stated_domain() {
        // τ̄₀ ≤ a + b, yet g² decreases from n = 5 to n = 6
        let v = scaling_monotonicity_violations(40.0, 10.0, 48.95, 10).unwrap();
        assert!(v.contains(&5));
        let g5 = g2_of_n_value(5, &40.0, &10.0, &48.95).unwrap();
        let g6 = g2_of_n_value(6, &40.0, &10.0, &48.95).unwrap();
        assert!(g6 < g5);
    }

    proptest! {
        #[test]
        fn violations_are_reported_exactly(a in 1.0f64..80.0, b in 0.01f64..40.0, frac in 0.05f64..1.0) {
            let tau0 = frac * (a + b);
            let reported = scaling_monotonicity_violations(a, b, tau0, 12).unwrap();
            for n in 1..12u32 {
                let d = g2_of_n_value(n + 1, &a, &b, &tau0).unwrap() - g2_of_n_value(n, &a, &b, &tau0).unwrap();
                prop_assert_eq!(d < 0.0, reported.contains(&n));
            }
        }
    }
}
