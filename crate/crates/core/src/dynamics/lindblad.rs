use nalgebra::DMatrix;
use num_complex::Complex64;

use super::state::trace_norm;
use super::QuantumState;
use crate::ensemble::{CollectiveModes, CouplingMatrix};
use crate::error::invalid;
use crate::{Error, Result};

/// Density-matrix propagation is dense in 4^N; kept to oracle scale.
pub const LINDBLAD_MAX_EMITTERS: usize = 6;

/// Step-halving acceptance threshold on the trace norm.
const STEP_TOLERANCE: f64 = 1e-8;
/// Initial RK4 step, as a fraction of the inverse generator scale.
const STEP_FRACTION: f64 = 0.2;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Dense lowering operator Σ_n u_n σ_n.
fn collective_lowering(u: &[f64]) -> DMatrix<Complex64> {
    let dim = 1usize << u.len();
    let mut l = DMatrix::zeros(dim, dim);
    for b in 0..dim {
        for (i, coeff) in u.iter().enumerate() {
            if b & (1 << i) != 0 {
                l[(b ^ (1 << i), b)] += c(*coeff);
            }
        }
    }
    l
}

/// Σ_{i≠j} J_ij σᵢ†σⱼ
fn exchange_hamiltonian(j: &DMatrix<f64>) -> DMatrix<Complex64> {
    let n = j.nrows();
    let dim = 1usize << n;
    let mut h = DMatrix::zeros(dim, dim);
    for b in 0..dim {
        for jj in 0..n {
            if b & (1 << jj) == 0 {
                continue;
            }
            for ii in 0..n {
                if ii == jj || b & (1 << ii) != 0 {
                    continue;
                }
                let target = b ^ (1 << jj) | (1 << ii);
                h[(target, b)] += c(j[(ii, jj)]);
            }
        }
    }
    h
}

struct Liouvillian {
    heff: DMatrix<Complex64>,
    heff_adj: DMatrix<Complex64>,
    jumps: Vec<DMatrix<Complex64>>,
    jumps_adj: Vec<DMatrix<Complex64>>,
    scale: f64,
}

impl Liouvillian {
    fn new(cm: &CouplingMatrix<f64>, m: &CollectiveModes<f64>) -> Self {
        let h = exchange_hamiltonian(cm.j());
        let dim = h.nrows();
        let mut k = DMatrix::<Complex64>::zeros(dim, dim);
        let mut jumps = Vec::new();
        for (nu, rate) in m.rates().iter().enumerate() {
            if *rate <= 0.0 {
                continue;
            }
            let l = collective_lowering(&m.vector(nu)) * c(rate.sqrt());
            k += l.adjoint() * &l;
            jumps.push(l);
        }
        let heff = h - k * Complex64::new(0.0, 0.5);
        let jumps_adj = jumps.iter().map(|l| l.adjoint()).collect();
        let scale = m.total_rate() + 2.0 * cm.j().iter().map(|x| x.abs()).sum::<f64>();
        Self {
            heff_adj: heff.adjoint(),
            heff,
            jumps,
            jumps_adj,
            scale: scale.max(1e-300),
        }
    }

    fn apply(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let mut out = (&self.heff * rho - rho * &self.heff_adj) * Complex64::new(0.0, -1.0);
        for (l, ld) in self.jumps.iter().zip(&self.jumps_adj) {
            out += l * rho * ld;
        }
        out
    }

    fn rk4(&self, rho: &DMatrix<Complex64>, h: f64, steps: usize) -> DMatrix<Complex64> {
        let mut r = rho.clone();
        let (half, sixth) = (c(0.5 * h), c(h / 6.0));
        for _ in 0..steps {
            let k1 = self.apply(&r);
            let k2 = self.apply(&(&r + &k1 * half));
            let k3 = self.apply(&(&r + &k2 * half));
            let k4 = self.apply(&(&r + &k3 * c(h)));
            r += (k1 + (k2 + k3) * c(2.0) + k4) * sixth;
        }
        r
    }
}

/// Integrates the master equation with the collective (diagonalized)
/// dissipator, returning ρ(t) at each grid time. `rho0` is the state at t = 0.
///
/// Each grid interval is integrated with RK4 and the step is halved until a
/// further halving changes the result by less than 1e−8 in trace norm.
pub fn lindblad_propagate(
    cm: &CouplingMatrix<f64>,
    m: &CollectiveModes<f64>,
    rho0: &QuantumState,
    t_grid: &[f64],
) -> Result<Vec<QuantumState>> {
    let n = cm.n();
    if m.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m.n(),
        });
    }
    if rho0.n() != n {
        return Err(Error::DimensionMismatch {
            expected: 1 << n.min(30),
            got: rho0.dim(),
        });
    }
    if n > LINDBLAD_MAX_EMITTERS {
        return Err(Error::ScaleLimit {
            what: "master equation",
            max: LINDBLAD_MAX_EMITTERS,
            n,
        });
    }
    if t_grid.first().is_some_and(|t| *t < 0.0) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("time grid must be ascending and start at t >= 0"));
    }
    let liou = Liouvillian::new(cm, m);
    let mut rho = rho0.to_density();
    let mut t = 0.0;
    let mut steps_per_ns = liou.scale / STEP_FRACTION;
    let mut out = Vec::with_capacity(t_grid.len());
    for &target in t_grid {
        let dt = target - t;
        if dt > 0.0 {
            let mut steps = ((dt * steps_per_ns).ceil() as usize).max(1);
            loop {
                let coarse = liou.rk4(&rho, dt / steps as f64, steps);
                let fine = liou.rk4(&rho, dt / (2 * steps) as f64, 2 * steps);
                if trace_norm(&(&coarse - &fine)) < STEP_TOLERANCE {
                    rho = fine;
                    break;
                }
                steps *= 2;
                steps_per_ns = steps_per_ns.max(steps as f64 / dt);
            }
            t = target;
        }
        out.push(QuantumState::Density {
            n,
            rho: rho.clone(),
        });
    }
    Ok(out)
}

/// Total photon emission rate R = Σ_ν Γ_ν ⟨L_ν†L_ν⟩ (ns⁻¹), clamped at zero.
pub fn emission_rate(state: &QuantumState, m: &CollectiveModes<f64>) -> Result<f64> {
    let n = m.n();
    if state.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: state.n(),
        });
    }
    let mut r = 0.0;
    match state {
        QuantumState::Pure { amplitudes, .. } => {
            let dim = 1usize << n;
            let mut lowered = vec![Complex64::new(0.0, 0.0); dim];
            for (nu, rate) in m.rates().iter().enumerate() {
                if *rate <= 0.0 {
                    continue;
                }
                lowered
                    .iter_mut()
                    .for_each(|x| *x = Complex64::new(0.0, 0.0));
                let u = m.vector(nu);
                for (b, amp) in amplitudes.iter().enumerate() {
                    for (i, coeff) in u.iter().enumerate() {
                        if b & (1 << i) != 0 {
                            lowered[b ^ (1 << i)] += amp * coeff;
                        }
                    }
                }
                r += rate * lowered.iter().map(|x| x.norm_sqr()).sum::<f64>();
            }
        }
        QuantumState::Density { rho, .. } => {
            for (nu, rate) in m.rates().iter().enumerate() {
                if *rate <= 0.0 {
                    continue;
                }
                let l = collective_lowering(&m.vector(nu));
                r += rate * (l.adjoint() * &l * rho).trace().re;
            }
        }
    }
    Ok(if r < 0.0 { 0.0 } else { r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{
        collective_modes, coupling_free_space, coupling_uniform, Dipoles, EmitterEnsemble,
    };
    use nalgebra::{DVector, Vector3};

    fn modes(n: usize, kappa: f64) -> (CouplingMatrix<f64>, CollectiveModes<f64>) {
        let c = coupling_uniform(n, 1.0, kappa).unwrap();
        let m = collective_modes(&c).unwrap();
        (c, m)
    }

    #[test]
    fn single_emitter_decays_exponentially() {
        let (c, m) = modes(1, 0.0);
        let grid: Vec<f64> = (0..=20).map(|i| 0.25 * i as f64).collect();
        let states = lindblad_propagate(&c, &m, &QuantumState::fully_excited(1), &grid).unwrap();
        for (t, s) in grid.iter().zip(&states) {
            assert!((s.populations()[0] - (-t).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn uncoupled_pair_is_independent() {
        let (c, m) = modes(2, 0.0);
        let grid = [0.0, 0.3, 1.0, 2.5];
        let states = lindblad_propagate(&c, &m, &QuantumState::fully_excited(2), &grid).unwrap();
        for (t, s) in grid.iter().zip(&states) {
            for p in s.populations() {
                assert!((p - (-t).exp()).abs() < 1e-6);
            }
            assert!((s.excitation_number() - 2.0 * (-t).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn dicke_pair_emits_two_photons() {
        // ∫R dt by the trapezoid rule on a fine grid, plus the analytic tail
        let (c, m) = modes(2, 1.0);
        let grid: Vec<f64> = (0..=3000).map(|i| 0.005 * i as f64).collect();
        let states = lindblad_propagate(&c, &m, &QuantumState::fully_excited(2), &grid).unwrap();
        let rates: Vec<f64> = states
            .iter()
            .map(|s| emission_rate(s, &m).unwrap())
            .collect();
        let mut total = 0.0;
        for i in 1..rates.len() {
            total += 0.5 * (rates[i] + rates[i - 1]) * 0.005;
        }
        let remaining = states.last().unwrap().excitation_number();
        assert!(
            (total + remaining - 2.0).abs() < 1e-4,
            "{total} + {remaining}"
        );
        // closed form: R(t) = 2Γe^{−2Γt}(1 + 2Γt)
        for (t, r) in grid.iter().zip(&rates).step_by(250) {
            let exact = 2.0 * (-2.0 * t).exp() * (1.0 + 2.0 * t);
            assert!((r - exact).abs() < 1e-6, "t={t}: {r} vs {exact}");
        }
    }

    #[test]
    fn trace_and_hermiticity_preserved_with_exchange() {
        let e = EmitterEnsemble::new(
            vec![
                Vector3::zeros(),
                Vector3::new(40.0, 0.0, 0.0),
                Vector3::new(0.0, 55.0, 10.0),
            ],
            Dipoles::Isotropic,
            620.0,
            vec![0.05, 0.05, 0.05],
        )
        .unwrap();
        let c = coupling_free_space(&e).unwrap();
        assert!(c.has_exchange());
        let m = collective_modes(&c).unwrap();
        let states =
            lindblad_propagate(&c, &m, &QuantumState::product(3, 0b001), &[5.0, 20.0, 80.0])
                .unwrap();
        for s in states {
            let rho = s.to_density();
            assert!((rho.trace().re - 1.0).abs() < 1e-9);
            assert!((&rho - rho.adjoint()).camax() < 1e-12);
        }
    }

    #[test]
    fn emission_rate_examples() {
        let (c, m) = modes(3, 0.4);
        let r = emission_rate(&QuantumState::fully_excited(3), &m).unwrap();
        assert!((r - c.gamma0().iter().sum::<f64>()).abs() < 1e-12);
        assert_eq!(emission_rate(&QuantumState::ground(3), &m).unwrap(), 0.0);

        let (_, m2) = modes(2, 1.0);
        let s = 1.0 / 2f64.sqrt();
        let amps = DVector::from_vec(
            vec![0.0, s, s, 0.0]
                .into_iter()
                .map(|x| Complex64::new(x, 0.0))
                .collect(),
        );
        let sym = QuantumState::pure(2, amps).unwrap();
        assert!((emission_rate(&sym, &m2).unwrap() - 2.0).abs() < 1e-12);
        let dens = QuantumState::density(2, sym.to_density()).unwrap();
        assert!((emission_rate(&dens, &m2).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn scale_and_dimension_errors() {
        let (c, m) = modes(7, 0.1);
        assert!(matches!(
            lindblad_propagate(&c, &m, &QuantumState::fully_excited(7), &[1.0]),
            Err(Error::ScaleLimit { .. })
        ));
        let (c, m) = modes(2, 0.1);
        assert!(lindblad_propagate(&c, &m, &QuantumState::fully_excited(3), &[1.0]).is_err());
        assert!(lindblad_propagate(&c, &m, &QuantumState::fully_excited(2), &[2.0, 1.0]).is_err());
    }
}
