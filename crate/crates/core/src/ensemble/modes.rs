use std::cmp::Ordering;

use nalgebra::{DMatrix, SymmetricEigen};

use super::{CollectiveModes, CouplingMatrix};
use crate::{Error, Real, Result};

/// Relative tolerance (in units of Γ̄₀) below which negative eigenvalues are
/// rounding noise and clamped to zero.
pub(crate) const CLAMP_TOLERANCE: f64 = 1e-9;

/// Diagonalizes Γ into collective decay channels, rates sorted descending.
///
/// Eigenvectors are sign-normalized so their first significant component is
/// positive; equal rates are ordered lexicographically by eigenvector.
pub fn collective_modes<T: Real>(c: &CouplingMatrix<T>) -> Result<CollectiveModes<T>> {
    let n = c.n();
    let eps = T::default_epsilon();
    let eig = SymmetricEigen::try_new(c.gamma().clone(), eps, 10_000)
        .ok_or(Error::EigenNonConvergence)?;

    let floor = -T::of(CLAMP_TOLERANCE) * c.gamma0_mean();
    let sig = T::of(1e-10).max(eps * T::of(100.0));
    let mut modes: Vec<(T, Vec<T>)> = (0..n)
        .map(|k| {
            let mut v: Vec<T> = eig.eigenvectors.column(k).iter().copied().collect();
            if let Some(first) = v.iter().find(|x| x.abs() > sig) {
                if *first < T::zero() {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
            (eig.eigenvalues[k], v)
        })
        .collect();

    for (rate, _) in modes.iter_mut() {
        if *rate < T::zero() {
            if *rate < floor {
                return Err(Error::NotPositiveSemiDefinite {
                    eigenvalue: rate.to_f64_lossy(),
                });
            }
            *rate = T::zero();
        }
    }

    modes.sort_by(
        |a, b| match b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal) {
            Ordering::Equal => lexicographic(&a.1, &b.1),
            o => o,
        },
    );

    let rates = modes.iter().map(|m| m.0).collect();
    let vectors = DMatrix::from_fn(n, n, |r, col| modes[r].1[col]);
    Ok(CollectiveModes { rates, vectors })
}

fn lexicographic<T: Real>(a: &[T], b: &[T]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match y.partial_cmp(x).unwrap_or(Ordering::Equal) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::coupling_uniform;
    use proptest::prelude::*;

    fn random_gamma(n: usize, seed: &[f64]) -> DMatrix<f64> {
        // Gram matrix of random vectors: symmetric PSD with a non-trivial spectrum
        let a = DMatrix::from_fn(n, n + 1, |r, c| seed[(r * (n + 1) + c) % seed.len()]);
        &a * a.transpose() + DMatrix::identity(n, n) * 1e-3
    }

    #[test]
    fn dicke_bright_mode_is_symmetric() {
        let m = collective_modes(&coupling_uniform(3, 1.0, 1.0).unwrap()).unwrap();
        let u = m.vector(0);
        let s = 1.0 / 3f64.sqrt();
        assert!(u.iter().all(|x| (x - s).abs() < 1e-12));
        assert!((m.rates()[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn identity_gamma_has_equal_rates() {
        let c = CouplingMatrix::<f64>::new(DMatrix::zeros(5, 5), DMatrix::identity(5, 5) * 0.7)
            .unwrap();
        let m = collective_modes(&c).unwrap();
        assert!(m.rates().iter().all(|r| (r - 0.7).abs() < 1e-14));
        let v = m.vectors();
        assert!((v * v.transpose() - DMatrix::identity(5, 5)).amax() < 1e-12);
    }

    #[test]
    fn indefinite_gamma_is_rejected() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let c = CouplingMatrix::new(DMatrix::zeros(2, 2), g).unwrap();
        assert!(matches!(
            collective_modes(&c),
            Err(Error::NotPositiveSemiDefinite { .. })
        ));
    }

    #[test]
    fn f32_modes() {
        let m = collective_modes(&coupling_uniform(2, 1.0f32, 0.5).unwrap()).unwrap();
        assert!((m.rates()[0] - 1.5).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn trace_and_reconstruction(seed in proptest::collection::vec(-1.0f64..1.0, 30), n in 2usize..6) {
            let g = random_gamma(n, &seed);
            let c = CouplingMatrix::new(DMatrix::zeros(n, n), g.clone()).unwrap();
            let m = collective_modes(&c).unwrap();
            let tr = g.trace();
            prop_assert!((m.total_rate() - tr).abs() <= 1e-9 * tr);
            prop_assert!((m.reconstruct() - &g).norm() <= 1e-9 * g.norm());
            prop_assert!(m.rates().windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn permutation_invariant_spectrum(seed in proptest::collection::vec(-1.0f64..1.0, 30), shift in 1usize..4) {
            let n = 4;
            let g = random_gamma(n, &seed);
            let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            let gp = DMatrix::from_fn(n, n, |r, c| g[(perm[r], perm[c])]);
            let a = collective_modes(&CouplingMatrix::new(DMatrix::zeros(n, n), g).unwrap()).unwrap();
            let b = collective_modes(&CouplingMatrix::new(DMatrix::zeros(n, n), gp).unwrap()).unwrap();
            for (x, y) in a.rates().iter().zip(b.rates()) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }
}
