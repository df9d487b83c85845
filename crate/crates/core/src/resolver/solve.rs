use serde::{Deserialize, Serialize};

use super::cubic::{cubic_roots, eval};
use crate::error::invalid;
use crate::photstat::G2Estimate;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootClass {
    Physical,
    RejectedBelowOne,
    /// Collective rate more than the allowed factor above the ideal N·Γ̄₀.
    RejectedExceedsDickeBound,
    RejectedComplex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootReport {
    pub value: f64,
    /// Imaginary part, zero for real roots.
    pub imag: f64,
    pub class: RootClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolveStatus {
    Unique,
    Ambiguous,
    SingleEmitter,
    /// Ambiguity removed with a brightness constraint.
    Constrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolveMethod {
    /// Cubic inversion of the dominant-channel relation.
    DominantChannelInversion,
    /// Nearest point on the fitted lifetime-scaling curve.
    ScalingLookup,
    Surface,
}

/// Resolved emitter number with root diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NEstimate {
    /// Selected real solution.
    pub n_real: f64,
    pub n_int: u32,
    pub roots: Vec<RootReport>,
    pub status: ResolveStatus,
    pub method: ResolveMethod,
    pub constraint_used: Option<f64>,
    /// Selected root is far from any integer.
    pub low_confidence: bool,
    /// The only physical root lies above the ideal collective bound.
    pub dicke_bound_exceeded: bool,
    /// (g²−1), 1, −r², r² for the cubic in N.
    pub coefficients: [f64; 4],
}

impl NEstimate {
    pub fn physical_roots(&self) -> Vec<f64> {
        self.roots
            .iter()
            .filter(|r| r.class == RootClass::Physical)
            .map(|r| r.value)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolverOptions {
    /// Distance from the nearest integer beyond which a root is flagged.
    pub low_confidence_distance: f64,
    /// Roots with τ̄₀/τ₁ above this factor times N are rejected.
    pub dicke_bound_factor: f64,
    pub single_emitter_g2: f64,
    /// Relative window of τ₁ around τ̄₀ for the single-emitter shortcut.
    pub single_emitter_tau_tolerance: f64,
}

impl Default for ResolverOptions {
    fn default() -> Self {
        Self {
            low_confidence_distance: 0.35,
            dicke_bound_factor: 1.5,
            single_emitter_g2: 0.5,
            single_emitter_tau_tolerance: 0.25,
        }
    }
}

/// Nearest integer, halves rounded up, at least 1.
pub fn round_half_up(x: f64) -> u32 {
    ((x + 0.5).floor()).max(1.0) as u32
}

fn distance_to_integer(x: f64) -> f64 {
    (x - x.round()).abs()
}

pub fn solve_n(g2: f64, tau1_ns: f64, tau0_mean_ns: f64) -> Result<NEstimate> {
    solve_n_with(g2, tau1_ns, tau0_mean_ns, &ResolverOptions::default())
}

/// Inverts g² = 1 + (1/N)[(N−1)r²/N² − 1], r = τ̄₀/τ₁, for N.
pub fn solve_n_with(
    g2: f64,
    tau1_ns: f64,
    tau0_mean_ns: f64,
    opts: &ResolverOptions,
) -> Result<NEstimate> {
    if !(0.0..2.0).contains(&g2) {
        return Err(invalid(format!("g2 = {g2} outside [0, 2)")));
    }
    if !(tau1_ns > 0.0)
        || !(tau0_mean_ns > 0.0)
        || !tau1_ns.is_finite()
        || !tau0_mean_ns.is_finite()
    {
        return Err(invalid("lifetimes must be positive and finite"));
    }
    let r = tau0_mean_ns / tau1_ns;
    let r2 = r * r;
    let coefficients = [g2 - 1.0, 1.0, -r2, r2];

    let mut roots: Vec<RootReport> = cubic_roots(coefficients)
        .into_iter()
        .map(|z| {
            let class = if z.im != 0.0 {
                RootClass::RejectedComplex
            } else if z.re < 1.0 - 1e-9 {
                RootClass::RejectedBelowOne
            } else {
                RootClass::Physical
            };
            RootReport {
                value: if class == RootClass::Physical {
                    z.re.max(1.0)
                } else {
                    z.re
                },
                imag: z.im,
                class,
            }
        })
        .collect();
    roots.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.imag.total_cmp(&b.imag)));
    roots.dedup_by(|a, b| {
        a.class == b.class && a.imag == 0.0 && b.imag == 0.0 && (a.value - b.value).abs() < 1e-9
    });

    let above_bound = |x: f64| r > opts.dicke_bound_factor * x;
    let within = roots
        .iter()
        .filter(|x| x.class == RootClass::Physical && !above_bound(x.value))
        .count();
    let mut dicke_bound_exceeded = false;
    for root in roots
        .iter_mut()
        .filter(|x| x.class == RootClass::Physical && above_bound(x.value))
    {
        if within > 0 {
            root.class = RootClass::RejectedExceedsDickeBound;
        } else {
            dicke_bound_exceeded = true;
        }
    }

    let physical: Vec<f64> = roots
        .iter()
        .filter(|x| x.class == RootClass::Physical)
        .map(|x| x.value)
        .collect();
    let single_shortcut = g2 < opts.single_emitter_g2
        && (tau1_ns / tau0_mean_ns - 1.0).abs() <= opts.single_emitter_tau_tolerance;
    if single_shortcut {
        return Ok(NEstimate {
            n_real: physical.first().copied().unwrap_or(1.0),
            n_int: 1,
            roots,
            status: ResolveStatus::SingleEmitter,
            method: ResolveMethod::DominantChannelInversion,
            constraint_used: None,
            low_confidence: false,
            dicke_bound_exceeded,
            coefficients,
        });
    }
    if physical.is_empty() {
        return Err(Error::NoPhysicalRoot { coefficients });
    }
    let (status, n_real) = if physical.len() == 1 {
        (ResolveStatus::Unique, physical[0])
    } else {
        let best = physical
            .iter()
            .copied()
            .min_by(|a, b| distance_to_integer(*a).total_cmp(&distance_to_integer(*b)))
            .expect("nonempty");
        (ResolveStatus::Ambiguous, best)
    };
    debug_assert!(eval(coefficients, n_real).abs() < 1e-8 * (1.0 + n_real.powi(3)));
    Ok(NEstimate {
        n_real,
        n_int: round_half_up(n_real),
        roots,
        status,
        method: ResolveMethod::DominantChannelInversion,
        constraint_used: None,
        low_confidence: distance_to_integer(n_real) > opts.low_confidence_distance,
        dicke_bound_exceeded,
        coefficients,
    })
}

/// Like [`solve_n`], but breaks ambiguity with a relative brightness
/// I/I₁ ∝ N^exponent (exponent defaults to 1).
pub fn resolve_with_constraints(
    g2: f64,
    tau1_ns: f64,
    tau0_mean_ns: f64,
    brightness: Option<f64>,
    exponent: Option<f64>,
) -> Result<NEstimate> {
    let mut est = solve_n(g2, tau1_ns, tau0_mean_ns)?;
    let Some(b) = brightness else {
        return Ok(est);
    };
    if !(b > 0.0) {
        return Err(invalid("brightness must be positive"));
    }
    if est.status != ResolveStatus::Ambiguous {
        return Ok(est);
    }
    let p = exponent.unwrap_or(1.0);
    let score = |n: f64| (b.ln() - p * n.ln()).abs();
    let chosen = est
        .physical_roots()
        .into_iter()
        .min_by(|x, y| score(*x).total_cmp(&score(*y)))
        .expect("ambiguous implies physical roots");
    est.n_real = chosen;
    est.n_int = round_half_up(chosen);
    est.low_confidence =
        distance_to_integer(chosen) > ResolverOptions::default().low_confidence_distance;
    est.status = ResolveStatus::Constrained;
    est.constraint_used = Some(b);
    Ok(est)
}

/// Single-photon emitter criterion: the g²(0) error bar stays below 1/2.
pub fn classify_single_emitter(g2: &G2Estimate) -> bool {
    g2.value + g2.std_error < 0.5
}
