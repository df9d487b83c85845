use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::{Error, Result};

const STATE_TOLERANCE: f64 = 1e-9;

/// State of N emitters in the 2^N product basis.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantumState {
    Pure {
        n: usize,
        amplitudes: DVector<Complex64>,
    },
    Density {
        n: usize,
        rho: DMatrix<Complex64>,
    },
}

impl QuantumState {
    pub fn pure(n: usize, amplitudes: DVector<Complex64>) -> Result<Self> {
        check_dim(n, amplitudes.len())?;
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > STATE_TOLERANCE {
            return Err(Error::InvalidState(format!("norm {norm} differs from 1")));
        }
        Ok(QuantumState::Pure { n, amplitudes })
    }

    pub fn density(n: usize, rho: DMatrix<Complex64>) -> Result<Self> {
        check_dim(n, rho.nrows())?;
        if !rho.is_square() {
            return Err(Error::InvalidState("density matrix must be square".into()));
        }
        let herm_err = (&rho - rho.adjoint()).camax();
        if herm_err > STATE_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "not Hermitian (deviation {herm_err:e})"
            )));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > STATE_TOLERANCE || tr.im.abs() > STATE_TOLERANCE {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min_eig = hermitian_eigenvalues(&rho)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -STATE_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(QuantumState::Density { n, rho })
    }

    /// Product state with the emitters in `excited_mask` excited.
    pub fn product(n: usize, excited_mask: u32) -> Self {
        let mut amplitudes = DVector::zeros(1 << n);
        amplitudes[excited_mask as usize] = Complex64::new(1.0, 0.0);
        QuantumState::Pure { n, amplitudes }
    }

    pub fn fully_excited(n: usize) -> Self {
        Self::product(n, ((1u64 << n) - 1) as u32)
    }

    pub fn ground(n: usize) -> Self {
        Self::product(n, 0)
    }

    pub fn n(&self) -> usize {
        match self {
            QuantumState::Pure { n, .. } | QuantumState::Density { n, .. } => *n,
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.n()
    }

    pub fn to_density(&self) -> DMatrix<Complex64> {
        match self {
            QuantumState::Pure { amplitudes, .. } => amplitudes * amplitudes.adjoint(),
            QuantumState::Density { rho, .. } => rho.clone(),
        }
    }

    /// Probability of each product basis state.
    pub fn probabilities(&self) -> Vec<f64> {
        match self {
            QuantumState::Pure { amplitudes, .. } => {
                amplitudes.iter().map(|a| a.norm_sqr()).collect()
            }
            QuantumState::Density { rho, .. } => rho.diagonal().iter().map(|d| d.re).collect(),
        }
    }

    /// Excited-state population of each emitter.
    pub fn populations(&self) -> Vec<f64> {
        let n = self.n();
        let mut pops = vec![0.0; n];
        for (mask, p) in self.probabilities().into_iter().enumerate() {
            for (i, pop) in pops.iter_mut().enumerate() {
                if mask & (1 << i) != 0 {
                    *pop += p;
                }
            }
        }
        pops
    }

    /// Expected number of excitations ⟨Σ σᵢ†σᵢ⟩.
    pub fn excitation_number(&self) -> f64 {
        self.populations().iter().sum()
    }

    pub fn trace(&self) -> f64 {
        self.probabilities().iter().sum()
    }
}

fn check_dim(n: usize, got: usize) -> Result<()> {
    if n >= usize::BITS as usize || got != 1usize << n {
        return Err(Error::DimensionMismatch {
            expected: 1usize << n.min(30),
            got,
        });
    }
    Ok(())
}

pub(crate) fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect()
}

/// Trace norm ‖A‖₁ of a (near-)Hermitian matrix.
pub(crate) fn trace_norm(m: &DMatrix<Complex64>) -> f64 {
    hermitian_eigenvalues(m).iter().map(|x| x.abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let n = 2;
        let amps = DVector::from_element(4, Complex64::new(0.5, 0.0));
        assert!(QuantumState::pure(n, amps.clone()).is_ok());
        assert!(QuantumState::pure(n, amps * Complex64::new(2.0, 0.0)).is_err());
        assert!(QuantumState::pure(3, DVector::zeros(4)).is_err());

        let mut rho = DMatrix::zeros(4, 4);
        rho[(0, 0)] = Complex64::new(1.5, 0.0);
        rho[(1, 1)] = Complex64::new(-0.5, 0.0);
        assert!(matches!(
            QuantumState::density(2, rho),
            Err(Error::InvalidState(_))
        ));
        assert!(QuantumState::density(2, QuantumState::fully_excited(2).to_density()).is_ok());
    }

    #[test]
    fn populations_of_product_state() {
        let s = QuantumState::product(3, 0b101);
        assert_eq!(s.populations(), vec![1.0, 0.0, 1.0]);
        assert_eq!(s.excitation_number(), 2.0);
    }
}
