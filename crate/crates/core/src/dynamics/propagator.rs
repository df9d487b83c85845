use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use super::ExcitationBasis;
use crate::{Error, Result};

/// Sectors up to this dimension are diagonalized once and propagated exactly.
pub(crate) const SPECTRAL_MAX_DIM: usize = 1024;
/// Largest ‖G‖·h used by the Taylor stepper.
const TAYLOR_STEP_NORM: f64 = 0.5;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

pub(crate) fn norm_sq(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// Generator of the no-jump evolution in one excitation sector,
/// ψ̇ = −iH_eff ψ = (−iH − K/2)ψ, as scatter lists per source state.
#[derive(Debug, Clone)]
pub(crate) struct SparseGenerator {
    entries: Vec<Vec<(u32, Complex64)>>,
    norm1: f64,
}

impl SparseGenerator {
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        y.iter_mut().for_each(|v| *v = ZERO);
        for (src, row) in self.entries.iter().enumerate() {
            let xs = x[src];
            if xs == ZERO {
                continue;
            }
            for (dst, coeff) in row {
                y[*dst as usize] += coeff * xs;
            }
        }
    }

    /// exp(G h) x by Taylor summation; callers keep ‖G‖h ≤ 0.5.
    fn exp_apply(&self, x: &[Complex64], h: f64) -> Vec<Complex64> {
        let mut sum = x.to_vec();
        let mut term = x.to_vec();
        let mut next = vec![ZERO; x.len()];
        let scale = norm_sq(x).sqrt().max(f64::MIN_POSITIVE);
        for m in 1..64 {
            self.apply(&term, &mut next);
            let f = h / m as f64;
            let mut tnorm = 0.0f64;
            for (t, nx) in term.iter_mut().zip(&next) {
                *t = nx * f;
                tnorm = tnorm.max(t.norm());
            }
            sum.iter_mut().zip(&term).for_each(|(s, t)| *s += t);
            if tnorm <= 1e-17 * scale {
                break;
            }
        }
        sum
    }
}

/// No-jump propagator restricted to one excitation sector.
#[derive(Debug, Clone)]
pub(crate) enum SectorPropagator {
    /// Hermitian decay only (no exchange): K = V diag(λ) Vᵀ.
    Spectral {
        decay: Vec<f64>,
        vectors: DMatrix<f64>,
    },
    Taylor {
        generator: SparseGenerator,
        step: f64,
    },
}

impl SectorPropagator {
    /// `gamma` is the dissipative coupling rebuilt from the collective modes,
    /// `j` the exchange matrix (ignored when `exchange` is false).
    pub(crate) fn build(
        basis: &ExcitationBasis,
        k: usize,
        gamma: &DMatrix<f64>,
        j: &DMatrix<f64>,
        exchange: bool,
    ) -> Result<Self> {
        let n = basis.n();
        let sector = basis.sector(k);
        let dim = sector.len();
        let mut entries: Vec<Vec<(u32, Complex64)>> = vec![Vec::new(); dim];
        for (src, &b) in sector.iter().enumerate() {
            let mut diag = 0.0;
            for jj in (0..n).filter(|jj| b & (1 << jj) != 0) {
                diag += gamma[(jj, jj)];
                for ii in (0..n).filter(|ii| b & (1 << ii) == 0) {
                    let g = gamma[(ii, jj)];
                    let h = if exchange { j[(ii, jj)] } else { 0.0 };
                    if g == 0.0 && h == 0.0 {
                        continue;
                    }
                    let dst = basis.position(b ^ (1 << jj) | (1 << ii)) as u32;
                    // −iH − K/2
                    entries[src].push((dst, Complex64::new(-0.5 * g, -h)));
                }
            }
            entries[src].push((src as u32, Complex64::new(-0.5 * diag, 0.0)));
        }

        if !exchange && dim <= SPECTRAL_MAX_DIM {
            // K = −2 Re G (G is real here)
            let mut kmat = DMatrix::<f64>::zeros(dim, dim);
            for (src, row) in entries.iter().enumerate() {
                for (dst, coeff) in row {
                    kmat[(*dst as usize, src)] += -2.0 * coeff.re;
                }
            }
            let eig = SymmetricEigen::try_new(kmat, f64::EPSILON, 10_000)
                .ok_or(Error::EigenNonConvergence)?;
            let decay = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
            return Ok(SectorPropagator::Spectral {
                decay,
                vectors: eig.eigenvectors,
            });
        }

        let mut colsum = vec![0.0f64; dim];
        for row in &entries {
            for (dst, coeff) in row {
                colsum[*dst as usize] += coeff.norm();
            }
        }
        let rowsum = entries
            .iter()
            .map(|r| r.iter().map(|(_, c)| c.norm()).sum::<f64>());
        let norm1 = rowsum.chain(colsum).fold(0.0, f64::max);
        let step = if norm1 > 0.0 {
            TAYLOR_STEP_NORM / norm1
        } else {
            f64::INFINITY
        };
        Ok(SectorPropagator::Taylor {
            generator: SparseGenerator { entries, norm1 },
            step,
        })
    }

    /// Evolves the normalized sector state `psi` without jumps until its
    /// squared norm falls to `threshold`, searching at most `horizon` ns.
    /// Returns the elapsed time and the unnormalized state at that time, or
    /// `None` if the threshold is not reached within the horizon.
    pub(crate) fn evolve_until(
        &self,
        psi: &[Complex64],
        threshold: f64,
        horizon: f64,
        tolerance: f64,
    ) -> Option<(f64, Vec<Complex64>)> {
        match self {
            SectorPropagator::Spectral { decay, vectors } => {
                let cx = DVector::from_iterator(psi.len(), psi.iter().copied());
                let coeffs: Vec<Complex64> = (0..decay.len())
                    .map(|a| {
                        vectors
                            .column(a)
                            .iter()
                            .zip(cx.iter())
                            .map(|(v, x)| x * *v)
                            .sum()
                    })
                    .collect();
                let weights: Vec<f64> = coeffs.iter().map(|c| c.norm_sqr()).collect();
                let norm_at = |t: f64| -> f64 {
                    weights
                        .iter()
                        .zip(decay)
                        .map(|(w, l)| w * (-l * t).exp())
                        .sum()
                };
                if norm_at(horizon) > threshold {
                    return None;
                }
                let (mut lo, mut hi) = (0.0, horizon);
                while hi - lo > tolerance {
                    let mid = 0.5 * (lo + hi);
                    if norm_at(mid) > threshold {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let t = 0.5 * (lo + hi);
                let mut out = vec![ZERO; psi.len()];
                for (a, c) in coeffs.iter().enumerate() {
                    if *c == ZERO {
                        continue;
                    }
                    let f = c * (-0.5 * decay[a] * t).exp();
                    for (o, v) in out.iter_mut().zip(vectors.column(a).iter()) {
                        *o += f * *v;
                    }
                }
                Some((t, out))
            }
            SectorPropagator::Taylor { generator, step } => {
                if generator.norm1 == 0.0 {
                    return None;
                }
                let mut state = psi.to_vec();
                let mut t = 0.0;
                while t < horizon {
                    let h = step.min(horizon - t);
                    let next = generator.exp_apply(&state, h);
                    if norm_sq(&next) <= threshold {
                        let (mut lo, mut hi) = (0.0, h);
                        while hi - lo > tolerance {
                            let mid = 0.5 * (lo + hi);
                            if norm_sq(&generator.exp_apply(&state, mid)) > threshold {
                                lo = mid;
                            } else {
                                hi = mid;
                            }
                        }
                        let tj = 0.5 * (lo + hi);
                        return Some((t + tj, generator.exp_apply(&state, tj)));
                    }
                    state = next;
                    t += h;
                }
                None
            }
        }
    }
}
