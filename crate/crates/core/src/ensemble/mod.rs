//! Emitter ensembles, pairwise couplings and collective decay modes.

mod coupling;
mod geometry;
mod modes;

use std::io::Write;

use nalgebra::{DMatrix, Vector3};

use crate::error::invalid;
use crate::{Real, Result};

pub use coupling::{coupling_free_space, coupling_uniform, free_space_pair};
pub use geometry::{build_ensemble, DipoleRule, EnsembleSpec, Gamma0Rule};
pub use modes::collective_modes;

/// Default emission wavelength (nm) when a configuration does not set one.
pub const DEFAULT_WAVELENGTH_NM: f64 = 620.0;
/// Default confinement radius (nm), a 60 nm capsule.
pub const DEFAULT_RADIUS_NM: f64 = 30.0;
/// Default minimum centre-to-centre distance (nm), the outer shell diameter.
pub const DEFAULT_MIN_DISTANCE_NM: f64 = 15.7;

/// Transition dipole orientations of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum Dipoles<T: Real = f64> {
    /// Orientation-averaged (non-polarized) emitters.
    Isotropic,
    /// One unit vector per emitter.
    Fixed(Vec<Vector3<T>>),
}

#[derive(Debug, Clone)]
pub struct EmitterEnsemble<T: Real = f64> {
    positions: Vec<Vector3<T>>,
    dipoles: Dipoles<T>,
    wavelength_nm: T,
    gamma0: Vec<T>,
    gamma0_mean: T,
}

impl<T: Real> EmitterEnsemble<T> {
    pub fn new(
        positions: Vec<Vector3<T>>,
        dipoles: Dipoles<T>,
        wavelength_nm: T,
        gamma0: Vec<T>,
    ) -> Result<Self> {
        let n = positions.len();
        if n == 0 {
            return Err(invalid("an ensemble needs at least one emitter"));
        }
        if gamma0.len() != n {
            return Err(crate::Error::DimensionMismatch {
                expected: n,
                got: gamma0.len(),
            });
        }
        if gamma0.iter().any(|g| !(*g > T::zero()) || !g.is_finite()) {
            return Err(invalid("intrinsic decay rates must be positive and finite"));
        }
        if !(wavelength_nm > T::zero()) {
            return Err(invalid("wavelength must be positive"));
        }
        if let Dipoles::Fixed(d) = &dipoles {
            if d.len() != n {
                return Err(crate::Error::DimensionMismatch {
                    expected: n,
                    got: d.len(),
                });
            }
            let tol = T::of(1e-12).max(T::default_epsilon() * T::of(16.0));
            if d.iter().any(|v| (v.norm() - T::one()).abs() > tol) {
                return Err(invalid("dipole vectors must have unit norm"));
            }
        }
        let sum = gamma0.iter().fold(T::zero(), |acc, g| acc + *g);
        let gamma0_mean = sum / T::of(n as f64);
        Ok(Self {
            positions,
            dipoles,
            wavelength_nm,
            gamma0,
            gamma0_mean,
        })
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[Vector3<T>] {
        &self.positions
    }

    pub fn dipoles(&self) -> &Dipoles<T> {
        &self.dipoles
    }

    pub fn wavelength_nm(&self) -> T {
        self.wavelength_nm
    }

    /// Free-space wavenumber k = 2π/λ₀ in nm⁻¹.
    pub fn wavenumber(&self) -> T {
        T::two_pi() / self.wavelength_nm
    }

    pub fn gamma0(&self) -> &[T] {
        &self.gamma0
    }

    /// Mean intrinsic decay rate Γ̄₀ (ns⁻¹).
    pub fn gamma0_mean(&self) -> T {
        self.gamma0_mean
    }

    /// Mean single-emitter lifetime τ̄₀ = 1/Γ̄₀ (ns).
    pub fn tau0_mean(&self) -> T {
        T::one() / self.gamma0_mean
    }
}

/// Coherent exchange J and dissipative coupling Γ between emitters, ns⁻¹.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix<T: Real = f64> {
    j: DMatrix<T>,
    gamma: DMatrix<T>,
}

impl<T: Real> CouplingMatrix<T> {
    /// Validates shape, symmetry, zero J diagonal and positive Γ diagonal.
    /// Positive semi-definiteness is checked by [`collective_modes`].
    pub fn new(j: DMatrix<T>, gamma: DMatrix<T>) -> Result<Self> {
        let n = gamma.nrows();
        if n == 0 || !gamma.is_square() || j.shape() != gamma.shape() {
            return Err(invalid("J and Γ must be square matrices of equal size"));
        }
        let scale = gamma.amax().max(T::min_value().unwrap_or(T::zero()));
        let tol = scale * T::of(1e-12).max(T::default_epsilon() * T::of(64.0));
        for r in 0..n {
            if !(gamma[(r, r)] > T::zero()) {
                return Err(invalid("Γ diagonal entries must be positive"));
            }
            if j[(r, r)] != T::zero() {
                return Err(invalid("J diagonal must be zero"));
            }
            for c in 0..r {
                if (gamma[(r, c)] - gamma[(c, r)]).abs() > tol
                    || (j[(r, c)] - j[(c, r)]).abs() > tol
                {
                    return Err(invalid("J and Γ must be symmetric"));
                }
            }
        }
        Ok(Self { j, gamma })
    }

    pub fn n(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn j(&self) -> &DMatrix<T> {
        &self.j
    }

    pub fn gamma(&self) -> &DMatrix<T> {
        &self.gamma
    }

    /// Intrinsic rates Γ₀ⁱ (the Γ diagonal).
    pub fn gamma0(&self) -> Vec<T> {
        self.gamma.diagonal().iter().copied().collect()
    }

    pub fn gamma0_mean(&self) -> T {
        self.gamma.trace() / T::of(self.n() as f64)
    }

    /// Copy with the coherent exchange removed.
    pub fn without_exchange(&self) -> Self {
        let n = self.n();
        Self {
            j: DMatrix::zeros(n, n),
            gamma: self.gamma.clone(),
        }
    }

    pub fn has_exchange(&self) -> bool {
        let tol = self.gamma.amax() * T::of(1e-14);
        self.j.iter().any(|v| v.abs() > tol)
    }

    /// Long-format CSV, row-major: `row,col,gamma_per_ns,j_per_ns`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row,col,gamma_per_ns,j_per_ns")?;
        let n = self.n();
        for r in 0..n {
            for c in 0..n {
                writeln!(
                    w,
                    "{r},{c},{:e},{:e}",
                    self.gamma[(r, c)].to_f64_lossy(),
                    self.j[(r, c)].to_f64_lossy()
                )?;
            }
        }
        Ok(())
    }
}

/// Eigen-decomposition of Γ: rates Γ_ν (descending) and the orthonormal
/// vectors u^(ν) stored as rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveModes<T: Real = f64> {
    rates: Vec<T>,
    vectors: DMatrix<T>,
}

impl<T: Real> CollectiveModes<T> {
    /// Builds modes from explicit rates and row eigenvectors. Rows must be
    /// orthonormal.
    pub fn from_parts(rates: Vec<T>, vectors: DMatrix<T>) -> Result<Self> {
        let n = rates.len();
        if n == 0 || vectors.shape() != (n, n) {
            return Err(crate::Error::DimensionMismatch {
                expected: n,
                got: vectors.nrows(),
            });
        }
        let gram = &vectors * vectors.transpose();
        let tol = T::of(1e-9).max(T::default_epsilon() * T::of(1e3));
        if (gram - DMatrix::identity(n, n)).amax() > tol {
            return Err(invalid("mode vectors must be orthonormal"));
        }
        Ok(Self { rates, vectors })
    }

    pub fn n(&self) -> usize {
        self.rates.len()
    }

    pub fn rates(&self) -> &[T] {
        &self.rates
    }

    /// Row ν holds the coefficients u_n^(ν) of L_ν = Σ_n u_n^(ν) σ_n.
    pub fn vectors(&self) -> &DMatrix<T> {
        &self.vectors
    }

    pub fn vector(&self, nu: usize) -> Vec<T> {
        self.vectors.row(nu).iter().copied().collect()
    }

    pub fn total_rate(&self) -> T {
        self.rates.iter().fold(T::zero(), |a, r| a + *r)
    }

    /// Γ = Σ_ν Γ_ν u^(ν) u^(ν)ᵀ.
    pub fn reconstruct(&self) -> DMatrix<T> {
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.rates.clone()));
        self.vectors.transpose() * lambda * &self.vectors
    }

    /// CSV with one row per mode: `mode,rate_per_ns,u_0,…,u_{N-1}`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.n();
        let cols: Vec<String> = (0..n).map(|i| format!("u_{i}")).collect();
        writeln!(w, "mode,rate_per_ns,{}", cols.join(","))?;
        for nu in 0..n {
            let row: Vec<String> = self
                .vectors
                .row(nu)
                .iter()
                .map(|v| format!("{:e}", v.to_f64_lossy()))
                .collect();
            writeln!(
                w,
                "{nu},{:e},{}",
                self.rates[nu].to_f64_lossy(),
                row.join(",")
            )?;
        }
        Ok(())
    }
}
