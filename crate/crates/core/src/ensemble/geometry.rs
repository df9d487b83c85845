use nalgebra::Vector3;
use rand::RngExt;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    Dipoles, EmitterEnsemble, DEFAULT_MIN_DISTANCE_NM, DEFAULT_RADIUS_NM, DEFAULT_WAVELENGTH_NM,
};
use crate::error::invalid;
use crate::rng::{unit_rng, DOMAIN_GEOMETRY};
use crate::{Error, Real, Result};

const ATTEMPTS_PER_EMITTER: usize = 20_000;
const RESTARTS: usize = 16;
/// Jamming density of random sequential addition of hard spheres.
const RSA_JAMMING_FRACTION: f64 = 0.38;

/// How intrinsic decay rates Γ₀ⁱ are assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum Gamma0Rule {
    /// Every emitter has lifetime `tau0_ns`.
    Uniform { tau0_ns: f64 },
    /// Rates drawn from a normal distribution around 1/`tau0_ns` with the given
    /// relative standard deviation, redrawn until positive.
    Gaussian { tau0_ns: f64, relative_spread: f64 },
    /// Explicit per-emitter rates.
    Explicit { rates_per_ns: Vec<f64> },
}

impl Default for Gamma0Rule {
    fn default() -> Self {
        Gamma0Rule::Uniform { tau0_ns: 48.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum DipoleRule {
    #[default]
    Isotropic,
    /// All dipoles along one axis (normalized on use).
    Aligned { axis: [f64; 3] },
    /// Independent uniformly random orientations.
    Random,
}

/// Recipe for [`build_ensemble`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub n: usize,
    #[serde(default = "default_radius")]
    pub radius_nm: f64,
    #[serde(default = "default_min_distance")]
    pub min_distance_nm: f64,
    #[serde(default = "default_wavelength")]
    pub wavelength_nm: f64,
    #[serde(default)]
    pub gamma0: Gamma0Rule,
    #[serde(default)]
    pub dipoles: DipoleRule,
    #[serde(default)]
    pub seed: u64,
}

fn default_radius() -> f64 {
    DEFAULT_RADIUS_NM
}
fn default_min_distance() -> f64 {
    DEFAULT_MIN_DISTANCE_NM
}
fn default_wavelength() -> f64 {
    DEFAULT_WAVELENGTH_NM
}

impl EnsembleSpec {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            radius_nm: DEFAULT_RADIUS_NM,
            min_distance_nm: DEFAULT_MIN_DISTANCE_NM,
            wavelength_nm: DEFAULT_WAVELENGTH_NM,
            gamma0: Gamma0Rule::default(),
            dipoles: DipoleRule::default(),
            seed,
        }
    }

    /// Volume fraction of hard spheres of diameter `min_distance_nm` whose
    /// centres lie in the confinement sphere.
    pub fn packing_fraction(&self) -> f64 {
        let r = 0.5 * self.min_distance_nm;
        self.n as f64 * (r / (self.radius_nm + r)).powi(3)
    }
}

/// Places emitters uniformly in a sphere with minimum-distance rejection and
/// draws their rates and dipoles. Deterministic in `spec.seed`.
pub fn build_ensemble<T: Real>(spec: &EnsembleSpec) -> Result<EmitterEnsemble<T>> {
    if spec.n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if !(spec.radius_nm >= 0.0) || !(spec.min_distance_nm >= 0.0) {
        return Err(invalid("radius and minimum distance must be non-negative"));
    }
    let mut rng = unit_rng(spec.seed, DOMAIN_GEOMETRY, 0);

    let positions = if spec.n == 1 {
        vec![[0.0; 3]]
    } else {
        place(spec, &mut rng)?
    };

    let gamma0: Vec<f64> = match &spec.gamma0 {
        Gamma0Rule::Uniform { tau0_ns } => {
            if !(*tau0_ns > 0.0) {
                return Err(invalid("tau0_ns must be positive"));
            }
            vec![1.0 / tau0_ns; spec.n]
        }
        Gamma0Rule::Gaussian {
            tau0_ns,
            relative_spread,
        } => {
            if !(*tau0_ns > 0.0) || !(*relative_spread >= 0.0) {
                return Err(invalid(
                    "gaussian rate rule needs tau0_ns > 0 and relative_spread >= 0",
                ));
            }
            let mean = 1.0 / tau0_ns;
            let normal =
                Normal::new(mean, relative_spread * mean).map_err(|e| invalid(e.to_string()))?;
            (0..spec.n)
                .map(|_| loop {
                    let g = normal.sample(&mut rng);
                    if g > 0.0 {
                        break g;
                    }
                })
                .collect()
        }
        Gamma0Rule::Explicit { rates_per_ns } => {
            if rates_per_ns.len() != spec.n {
                return Err(Error::DimensionMismatch {
                    expected: spec.n,
                    got: rates_per_ns.len(),
                });
            }
            rates_per_ns.clone()
        }
    };

    let dipoles = match &spec.dipoles {
        DipoleRule::Isotropic => Dipoles::Isotropic,
        DipoleRule::Aligned { axis } => {
            let v = Vector3::new(axis[0], axis[1], axis[2]);
            let norm = v.norm();
            if !(norm > 0.0) {
                return Err(invalid("dipole axis must be non-zero"));
            }
            let u = v / norm;
            Dipoles::Fixed(vec![to_t(&[u.x, u.y, u.z]); spec.n])
        }
        DipoleRule::Random => Dipoles::Fixed(
            (0..spec.n)
                .map(|_| {
                    let v =
                        Vector3::<f64>::from_fn(|_, _| StandardNormal.sample(&mut rng)).normalize();
                    to_t(&[v.x, v.y, v.z])
                })
                .collect(),
        ),
    };

    EmitterEnsemble::new(
        positions.iter().map(to_t).collect(),
        dipoles,
        T::of(spec.wavelength_nm),
        gamma0.into_iter().map(T::of).collect(),
    )
}

fn to_t<T: Real>(p: &[f64; 3]) -> Vector3<T> {
    Vector3::new(T::of(p[0]), T::of(p[1]), T::of(p[2]))
}

fn place<R: rand::Rng>(spec: &EnsembleSpec, rng: &mut R) -> Result<Vec<[f64; 3]>> {
    let min_d2 = spec.min_distance_nm * spec.min_distance_nm;
    let mut best = 0;
    for _ in 0..RESTARTS {
        let mut placed: Vec<[f64; 3]> = Vec::with_capacity(spec.n);
        'emitter: while placed.len() < spec.n {
            for _ in 0..ATTEMPTS_PER_EMITTER {
                let p = sample_ball(rng, spec.radius_nm);
                let clear = placed.iter().all(|q| {
                    let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                    d2 >= min_d2
                });
                if clear {
                    placed.push(p);
                    continue 'emitter;
                }
            }
            break;
        }
        if placed.len() == spec.n {
            return Ok(placed);
        }
        best = best.max(placed.len());
    }
    Err(Error::PackingFailure {
        requested: spec.n,
        placed: best,
        radius_nm: spec.radius_nm,
        min_distance_nm: spec.min_distance_nm,
        packing_fraction: spec.packing_fraction(),
        achievable_fraction: RSA_JAMMING_FRACTION,
    })
}

fn sample_ball<R: rand::Rng>(rng: &mut R, radius: f64) -> [f64; 3] {
    loop {
        let p: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= 1.0 {
            return p.map(|x| x * radius);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_emitter_sits_at_origin() {
        let mut spec = EnsembleSpec::new(1, 3);
        spec.radius_nm = 500.0;
        let e = build_ensemble::<f64>(&spec).unwrap();
        assert_eq!(e.positions()[0], Vector3::zeros());
    }

    #[test]
    fn ten_emitters_in_a_capsule_respect_min_distance() {
        let spec = EnsembleSpec::new(10, 42);
        let e = build_ensemble::<f64>(&spec).unwrap();
        assert_eq!(e.n(), 10);
        for (i, p) in e.positions().iter().enumerate() {
            assert!(p.norm() <= 30.0 + 1e-12);
            for q in &e.positions()[..i] {
                assert!((p - q).norm() >= 15.7);
            }
        }
    }

    #[test]
    fn overpacked_sphere_reports_density() {
        let mut spec = EnsembleSpec::new(50, 1);
        spec.radius_nm = 10.0;
        match build_ensemble::<f64>(&spec) {
            Err(Error::PackingFailure {
                requested,
                packing_fraction,
                ..
            }) => {
                assert_eq!(requested, 50);
                assert!(packing_fraction > 1.0);
            }
            other => panic!("expected packing failure, got {other:?}"),
        }
    }

    #[test]
    fn same_seed_same_geometry() {
        let spec = EnsembleSpec {
            dipoles: DipoleRule::Random,
            ..EnsembleSpec::new(6, 9)
        };
        let a = build_ensemble::<f64>(&spec).unwrap();
        let b = build_ensemble::<f64>(&spec).unwrap();
        assert_eq!(a.positions(), b.positions());
        assert_eq!(a.dipoles(), b.dipoles());
        let c = build_ensemble::<f64>(&EnsembleSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a.positions(), c.positions());
    }

    #[test]
    fn gamma0_mean_is_arithmetic_mean() {
        let spec = EnsembleSpec {
            gamma0: Gamma0Rule::Gaussian {
                tau0_ns: 20.0,
                relative_spread: 0.2,
            },
            ..EnsembleSpec::new(7, 5)
        };
        let e = build_ensemble::<f64>(&spec).unwrap();
        let mean = e.gamma0().iter().sum::<f64>() / 7.0;
        assert!((e.gamma0_mean() - mean).abs() <= 1e-12 * mean);
    }

    #[test]
    fn explicit_rates_must_match_n() {
        let spec = EnsembleSpec {
            gamma0: Gamma0Rule::Explicit {
                rates_per_ns: vec![1.0, 2.0],
            },
            ..EnsembleSpec::new(3, 0)
        };
        assert!(build_ensemble::<f64>(&spec).is_err());
    }
}
