use nalgebra::DMatrix;

use super::{CouplingMatrix, Dipoles, EmitterEnsemble};
use crate::error::invalid;
use crate::{Error, Real, Result};

/// Below this kx the radial functions switch to their Taylor series.
const SERIES_CUTOFF: f64 = 0.1;

/// sin(x)/x
fn sinc<T: Real>(x: T) -> T {
    if x.abs() < T::of(SERIES_CUTOFF) {
        let x2 = x * x;
        T::one() - x2 / T::of(6.0) + x2 * x2 / T::of(120.0) - x2 * x2 * x2 / T::of(5040.0)
    } else {
        x.sin() / x
    }
}

/// cos(x)/x² − sin(x)/x³
fn near_field_sin<T: Real>(x: T) -> T {
    if x.abs() < T::of(SERIES_CUTOFF) {
        let x2 = x * x;
        -T::one() / T::of(3.0) + x2 / T::of(30.0) - x2 * x2 / T::of(840.0)
            + x2 * x2 * x2 / T::of(45360.0)
    } else {
        x.cos() / (x * x) - x.sin() / (x * x * x)
    }
}

/// Normalized pair couplings (Γ_ij/√(Γ₀ⁱΓ₀ʲ), J_ij/√(Γ₀ⁱΓ₀ʲ)) at phase
/// separation `x = k r`.
///
/// `orient` carries `(d̂ᵢ·d̂ⱼ, (d̂ᵢ·r̂)(d̂ⱼ·r̂))` for fixed dipoles; `None`
/// selects the orientation average.
pub fn free_space_pair<T: Real>(x: T, orient: Option<(T, T)>) -> (T, T) {
    let half = T::of(0.5);
    match orient {
        None => (sinc(x), -half * x.cos() / x),
        Some((dd, dr)) => {
            let three = T::of(3.0);
            let transverse = dd - dr;
            let longitudinal = dd - three * dr;
            let gamma = T::of(1.5) * (transverse * sinc(x) + longitudinal * near_field_sin(x));
            let near_cos = x.sin() / (x * x) + x.cos() / (x * x * x);
            let j = -T::of(0.75) * (transverse * x.cos() / x - longitudinal * near_cos);
            (gamma, j)
        }
    }
}

/// Free-space dipole–dipole couplings from the dyadic Green's function.
pub fn coupling_free_space<T: Real>(e: &EmitterEnsemble<T>) -> Result<CouplingMatrix<T>> {
    let n = e.n();
    let k = e.wavenumber();
    let g0 = e.gamma0();
    let mut gamma = DMatrix::zeros(n, n);
    let mut j = DMatrix::zeros(n, n);
    for a in 0..n {
        gamma[(a, a)] = g0[a];
        for b in 0..a {
            let sep = e.positions()[a] - e.positions()[b];
            let r = sep.norm();
            if !(r > T::zero()) {
                return Err(Error::CoincidentEmitters { i: b, j: a });
            }
            let orient = match e.dipoles() {
                Dipoles::Isotropic => None,
                Dipoles::Fixed(d) => {
                    let rhat = sep / r;
                    Some((d[a].dot(&d[b]), d[a].dot(&rhat) * d[b].dot(&rhat)))
                }
            };
            let (g, jj) = free_space_pair(k * r, orient);
            let scale = (g0[a] * g0[b]).sqrt();
            gamma[(a, b)] = g * scale;
            gamma[(b, a)] = g * scale;
            j[(a, b)] = jj * scale;
            j[(b, a)] = jj * scale;
        }
    }
    CouplingMatrix::new(j, gamma)
}

/// All-to-all dissipative coupling Γ_ij = κΓ₀ with no exchange.
pub fn coupling_uniform<T: Real>(n: usize, gamma0: T, kappa: T) -> Result<CouplingMatrix<T>> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if !(kappa >= T::zero() && kappa <= T::one()) {
        return Err(invalid(format!("kappa must lie in [0, 1], got {kappa:?}")));
    }
    if !(gamma0 > T::zero()) {
        return Err(invalid("gamma0 must be positive"));
    }
    let gamma = DMatrix::from_fn(n, n, |r, c| if r == c { gamma0 } else { kappa * gamma0 });
    CouplingMatrix::new(DMatrix::zeros(n, n), gamma)
}
