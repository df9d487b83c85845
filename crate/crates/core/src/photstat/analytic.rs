use super::{G2Estimate, G2Method};
use crate::ensemble::CollectiveModes;
use crate::error::invalid;
use crate::{Field, Real, Result};

fn count<T: Field>(n: usize) -> T {
    T::from_usize(n).expect("small integers are representable")
}

/// Population variance (divide by N).
pub fn population_variance<T: Field>(xs: &[T]) -> T {
    let n: T = count(xs.len());
    let mean = xs.iter().cloned().fold(T::zero(), |a, x| a + x) / n.clone();
    xs.iter().cloned().fold(T::zero(), |a, x| {
        let d = x - mean.clone();
        a + d.clone() * d
    }) / n
}

fn normalized<T: Field>(xs: &[T], by: &T) -> Vec<T> {
    xs.iter().cloned().map(|x| x / by.clone()).collect()
}

/// g²(0) = 1 + (1/N)[Var({Γ_ν}/Γ̄₀) − 1] for identical emitters starting fully
/// excited.
pub fn g2_modes_value<T: Field>(rates: &[T], gamma0_mean: &T) -> Result<T> {
    if rates.is_empty() {
        return Err(invalid("g2 needs at least one emitter"));
    }
    if !(gamma0_mean.clone() > T::zero()) {
        return Err(invalid("mean intrinsic rate must be positive"));
    }
    let n: T = count(rates.len());
    let var = population_variance(&normalized(rates, gamma0_mean));
    Ok(T::one() + (var - T::one()) / n)
}

/// g²(0) including the inhomogeneity term −(2/N)·Var(Γ₀ⁱ/Γ̄₀), with Γ̄₀ the
/// mean of `gamma0`. Returns the value clamped at zero and whether clamping
/// happened.
pub fn g2_full_value<T: Field>(rates: &[T], gamma0: &[T]) -> Result<(T, bool)> {
    if rates.len() != gamma0.len() {
        return Err(crate::Error::DimensionMismatch {
            expected: rates.len(),
            got: gamma0.len(),
        });
    }
    if gamma0.is_empty() {
        return Err(invalid("g2 needs at least one emitter"));
    }
    let n: T = count(gamma0.len());
    let mean = gamma0.iter().cloned().fold(T::zero(), |a, x| a + x) / n.clone();
    let homogeneous = g2_modes_value(rates, &mean)?;
    let two: T = count(2);
    let value = homogeneous - two * population_variance(&normalized(gamma0, &mean)) / n;
    if value < T::zero() {
        Ok((T::zero(), true))
    } else {
        Ok((value, false))
    }
}

/// Dominant-channel form: g²(0) = 1 + (1/n)[(n−1)Γ_c²/(n²Γ̄₀²) − 1].
pub fn g2_dominant_value<T: Field>(n: usize, gamma_c: &T, gamma0_mean: &T) -> Result<T> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if !(gamma_c.clone() > T::zero()) || !(gamma0_mean.clone() > T::zero()) {
        return Err(invalid("rates must be positive"));
    }
    let nn: T = count(n);
    let r = gamma_c.clone() / gamma0_mean.clone();
    let inner = (nn.clone() - T::one()) * r.clone() * r / (nn.clone() * nn.clone()) - T::one();
    Ok(T::one() + inner / nn)
}

pub fn g2_analytic_modes<T: Real>(m: &CollectiveModes<T>, gamma0_mean: T) -> Result<G2Estimate> {
    let v = g2_modes_value(m.rates(), &gamma0_mean)?;
    Ok(G2Estimate::exact(v.to_f64_lossy(), G2Method::AnalyticModes))
}

pub fn g2_full<T: Real>(rates: &[T], gamma0: &[T]) -> Result<G2Estimate> {
    let (v, clamped) = g2_full_value(rates, gamma0)?;
    Ok(G2Estimate {
        clamped,
        ..G2Estimate::exact(v.to_f64_lossy(), G2Method::AnalyticFull)
    })
}

pub fn g2_dominant_channel<T: Real>(n: usize, gamma_c: T, gamma0_mean: T) -> Result<G2Estimate> {
    let v = g2_dominant_value(n, &gamma_c, &gamma0_mean)?;
    Ok(G2Estimate::exact(
        v.to_f64_lossy(),
        G2Method::DominantChannel,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    type Q = Ratio<i128>;

    fn q(n: i128, d: i128) -> Q {
        Ratio::new(n, d)
    }

    #[test]
    fn single_rate_is_perfect_antibunching() {
        assert_eq!(g2_modes_value(&[q(3, 1)], &q(3, 1)).unwrap(), q(0, 1));
    }

    #[test]
    fn uncoupled_four_emitters() {
        assert_eq!(g2_modes_value(&[q(1, 1); 4], &q(1, 1)).unwrap(), q(3, 4));
    }

    #[test]
    fn half_coupled_pair() {
        // rates Γ₀(1±κ), κ = 1/2 → (1+κ²)/2
        assert_eq!(
            g2_modes_value(&[q(3, 2), q(1, 2)], &q(1, 1)).unwrap(),
            q(5, 8)
        );
    }

    #[test]
    fn homogeneous_full_equals_modes() {
        let rates = [q(5, 2), q(1, 3), q(1, 6)];
        let (full, clamped) = g2_full_value(&rates, &[q(1, 1); 3]).unwrap();
        assert!(!clamped);
        assert_eq!(full, g2_modes_value(&rates, &q(1, 1)).unwrap());
    }

    #[test]
    fn inhomogeneous_pair() {
        // Var = 0.04 for both sets: 1 + (0.04 − 1)/2 − 0.04 = 0.48
        let g0 = [q(4, 5), q(6, 5)];
        let (v, _) = g2_full_value(&g0, &g0).unwrap();
        assert_eq!(v, q(12, 25));
        let f = g2_full(&[0.8, 1.2], &[0.8, 1.2]).unwrap();
        assert!((f.value - 0.48).abs() < 1e-15);
    }

    #[test]
    fn strong_inhomogeneity_clamps() {
        let g0 = [0.05, 1.95];
        let e = g2_full(&[1.0, 1.0], &g0).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(e.clamped);
    }

    #[test]
    fn dominant_channel_examples() {
        assert_eq!(g2_dominant_value(1, &q(7, 3), &q(1, 1)).unwrap(), q(0, 1));
        assert_eq!(g2_dominant_value(2, &q(2, 1), &q(1, 1)).unwrap(), q(1, 1));
        // τ̄₀ = 48.95 ns, τ_c = 24.72 ns, n = 5; evaluated by hand:
        // r² = (4895/2472)², g² = 1 + (4r²/25 − 1)/5
        let r = 4895.0f64 / 2472.0;
        let expected = 1.0 + (4.0 * r * r / 25.0 - 1.0) / 5.0;
        let v = g2_dominant_channel(5, 1.0 / 24.72, 1.0 / 48.95)
            .unwrap()
            .value;
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.92548).abs() < 5e-5);
    }

    #[test]
    fn variance_identity_for_dominant_spectrum() {
        for n in 2..=12i128 {
            let gc = q(7, 3);
            let mut rates = vec![q(0, 1); n as usize];
            rates[0] = gc;
            let var = population_variance(&rates);
            assert_eq!(q(n, 1) * var, q(n - 1, 1) * gc * gc / q(n, 1));
            let g0 = q(5, 4);
            assert_eq!(
                g2_modes_value(&rates, &g0).unwrap(),
                g2_dominant_value(n as usize, &gc, &g0).unwrap()
            );
        }
    }
}
