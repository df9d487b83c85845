use super::{G2Estimate, G2Method};
use crate::ensemble::CollectiveModes;
use crate::{Error, Real, Result};

/// Largest ensemble handled by the explicit 2^N operator algebra.
pub const ORACLE_MAX_EMITTERS: usize = 5;

/// Applies L = Σ_n u_n σ_n to a state vector in the 2^N product basis
/// (bit n set ⇔ emitter n excited).
fn lower<T: Real>(u: &[T], psi: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); psi.len()];
    for (b, amp) in psi.iter().enumerate() {
        if *amp == T::zero() {
            continue;
        }
        for (n, coeff) in u.iter().enumerate() {
            let bit = 1usize << n;
            if b & bit != 0 {
                out[b ^ bit] += *coeff * *amp;
            }
        }
    }
    out
}

fn norm_sq<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, x| a + *x * *x)
}

/// Σ_{ν,μ} Γ_ν Γ_μ ⟨L_ν†L_μ†L_μL_ν⟩ / (Σ_ν Γ_ν ⟨L_ν†L_ν⟩)² on |e…e⟩,
/// evaluated by building every L_μL_ν|e…e⟩ explicitly.
pub fn g2_oracle_value<T: Real>(m: &CollectiveModes<T>) -> Result<T> {
    let n = m.n();
    if n > ORACLE_MAX_EMITTERS {
        return Err(Error::ScaleLimit {
            what: "g2 oracle",
            max: ORACLE_MAX_EMITTERS,
            n,
        });
    }
    let dim = 1usize << n;
    let mut excited = vec![T::zero(); dim];
    excited[dim - 1] = T::one();

    let modes: Vec<Vec<T>> = (0..n).map(|nu| m.vector(nu)).collect();
    let once: Vec<Vec<T>> = modes.iter().map(|u| lower(u, &excited)).collect();

    let mut denominator = T::zero();
    let mut numerator = T::zero();
    for (nu, first) in once.iter().enumerate() {
        let g_nu = m.rates()[nu];
        denominator += g_nu * norm_sq(first);
        for (mu, u) in modes.iter().enumerate() {
            let twice = lower(u, first);
            numerator += g_nu * m.rates()[mu] * norm_sq(&twice);
        }
    }
    if !(denominator > T::zero()) {
        return Err(crate::error::invalid("total emission rate vanishes"));
    }
    Ok(numerator / (denominator * denominator))
}

pub fn g2_oracle_fully_excited<T: Real>(m: &CollectiveModes<T>) -> Result<G2Estimate> {
    Ok(G2Estimate::exact(
        g2_oracle_value(m)?.to_f64_lossy(),
        G2Method::Oracle,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{collective_modes, coupling_uniform, CouplingMatrix};
    use crate::photstat::{g2_full_value, g2_modes_value};
    use nalgebra::DMatrix;

    #[test]
    fn uncoupled_pair() {
        let m = collective_modes(&coupling_uniform::<f64>(2, 1.0, 0.0).unwrap()).unwrap();
        assert!((g2_oracle_value(&m).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn dicke_pair() {
        let m = collective_modes(&coupling_uniform::<f64>(2, 1.0, 1.0).unwrap()).unwrap();
        assert!((g2_oracle_value(&m).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn heterogeneous_diagonal_matches_inhomogeneous_form() {
        let g = DMatrix::from_row_slice(3, 3, &[0.8, 0.3, 0.1, 0.3, 1.2, 0.2, 0.1, 0.2, 1.0]);
        let c = CouplingMatrix::<f64>::new(DMatrix::zeros(3, 3), g).unwrap();
        let m = collective_modes(&c).unwrap();
        let (full, _) = g2_full_value(m.rates(), &c.gamma0()).unwrap();
        assert!((g2_oracle_value(&m).unwrap() - full).abs() < 1e-12);
        // and differs from the homogeneous form
        let hom = g2_modes_value(m.rates(), &c.gamma0_mean()).unwrap();
        assert!((hom - full).abs() > 1e-3);
    }

    #[test]
    fn refuses_large_ensembles() {
        let m = collective_modes(&coupling_uniform::<f64>(6, 1.0, 0.2).unwrap()).unwrap();
        assert!(matches!(g2_oracle_value(&m), Err(Error::ScaleLimit { .. })));
    }
}
