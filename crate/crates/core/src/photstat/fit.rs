use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::detection::DecayHistogram;
use crate::error::invalid;
use crate::{Error, Result};

pub const MIN_NONZERO_BINS: usize = 20;
const MAX_ITERATIONS: usize = 500;
/// Rate ratio below which a two-component fit is reported as degenerate.
const DEGENERATE_RATIO: f64 = 1.2;
const REWEIGHT_ROUNDS: usize = 20;
const MIN_MODEL_COUNTS: f64 = 1e-6;
const MIN_RATE: f64 = 1e-9;
/// A component decaying by fewer e-folds than this over the fit window is
/// indistinguishable from the background.
const FLAT_COMPONENT_EFOLDS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    Mono,
    Biexp,
}

/// Weighted least-squares decay fit. Amplitudes are counts per bin at
/// `origin_ns`, the centre of the histogram peak bin where the fit starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: DecayModel,
    pub gamma1: f64,
    pub gamma2: Option<f64>,
    pub a1: f64,
    pub a2: Option<f64>,
    pub background: f64,
    /// Parameter order: a1, gamma1, [a2, gamma2,] background.
    pub covariance: Vec<Vec<f64>>,
    /// Reduced χ².
    pub goodness: f64,
    pub origin_ns: f64,
    /// Set when a bi-exponential fit collapsed to one component.
    #[serde(default)]
    pub degenerate: bool,
}

impl DecayFit {
    pub fn tau1_ns(&self) -> f64 {
        1.0 / self.gamma1
    }

    pub fn gamma1_std_error(&self) -> f64 {
        self.covariance[1][1].max(0.0).sqrt()
    }

    pub fn tau1_std_error(&self) -> f64 {
        self.gamma1_std_error() / (self.gamma1 * self.gamma1)
    }

    pub fn gamma2_std_error(&self) -> Option<f64> {
        self.gamma2.map(|_| self.covariance[3][3].max(0.0).sqrt())
    }

    /// Model counts per bin at time `t_ns` after the pulse.
    pub fn evaluate(&self, t_ns: f64) -> f64 {
        let dt = t_ns - self.origin_ns;
        let mut y = self.a1 * (-self.gamma1 * dt).exp() + self.background;
        if let (Some(a2), Some(g2)) = (self.a2, self.gamma2) {
            y += a2 * (-g2 * dt).exp();
        }
        y
    }
}

struct Data {
    t: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

/// params: [a, γ, a, γ, …, background]
fn model(p: &[f64], t: f64) -> f64 {
    let comps = (p.len() - 1) / 2;
    (0..comps)
        .map(|c| p[2 * c] * (-p[2 * c + 1] * t).exp())
        .sum::<f64>()
        + p[p.len() - 1]
}

fn chi2(d: &Data, p: &[f64]) -> f64 {
    d.t.iter()
        .zip(&d.y)
        .zip(&d.w)
        .map(|((t, y), w)| w * (y - model(p, *t)).powi(2))
        .sum()
}

fn normal_equations(d: &Data, p: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let k = p.len();
    let mut jtj = DMatrix::zeros(k, k);
    let mut jtr = DVector::zeros(k);
    let mut row = vec![0.0; k];
    for ((t, y), w) in d.t.iter().zip(&d.y).zip(&d.w) {
        let comps = (k - 1) / 2;
        for c in 0..comps {
            let e = (-p[2 * c + 1] * t).exp();
            row[2 * c] = e;
            row[2 * c + 1] = -p[2 * c] * t * e;
        }
        row[k - 1] = 1.0;
        let r = y - model(p, *t);
        for a in 0..k {
            jtr[a] += w * row[a] * r;
            for b in a..k {
                jtj[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            jtj[(a, b)] = jtj[(b, a)];
        }
    }
    (jtj, jtr)
}

fn lower_bounds(k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| {
            if i + 1 < k && i % 2 == 1 {
                MIN_RATE
            } else {
                0.0
            }
        })
        .collect()
}

fn project(p: &mut [f64]) {
    let lower = lower_bounds(p.len());
    for (x, lo) in p.iter_mut().zip(lower) {
        *x = x.max(lo);
    }
}

/// Levenberg–Marquardt with box projection. Returns parameters and χ².
fn levenberg_marquardt(d: &Data, mut p: Vec<f64>) -> Result<(Vec<f64>, f64)> {
    project(&mut p);
    let mut cost = chi2(d, &p);
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITERATIONS {
        let (jtj, jtr) = normal_equations(d, &p);
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..p.len() {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(mut step) = a.clone().cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            // Parameters sitting on their bound and pushed outwards are frozen.
            let lower = lower_bounds(p.len());
            let frozen: Vec<usize> = (0..p.len())
                .filter(|&i| p[i] <= lower[i] && step[i] < 0.0)
                .collect();
            if !frozen.is_empty() {
                let mut a = a;
                let mut rhs = jtr.clone();
                for &i in &frozen {
                    a.row_mut(i).fill(0.0);
                    a.column_mut(i).fill(0.0);
                    a[(i, i)] = 1.0;
                    rhs[i] = 0.0;
                }
                let Some(s) = a.cholesky().map(|c| c.solve(&rhs)) else {
                    lambda *= 10.0;
                    continue;
                };
                step = s;
            }
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, s)| x + s).collect();
            project(&mut trial);
            let trial_cost = chi2(d, &trial);
            if trial_cost.is_finite() && trial_cost <= cost {
                let rel = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                let moved = p
                    .iter()
                    .zip(&trial)
                    .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1e-12));
                p = trial;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel < 1e-10 || moved {
                    return Ok((p, cost));
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No downhill step at any damping: stationary point.
            return Ok((p, cost));
        }
    }
    Err(Error::FitNonConvergence {
        iterations: MAX_ITERATIONS,
    })
}

/// Count-weighted fit followed by reweighting with the model prediction
/// until the weights settle. The fixed point solves the Poisson likelihood
/// equations, removing the low bias of observed-count weights.
fn fit_poisson(d: &mut Data, seed: Vec<f64>) -> Result<(Vec<f64>, f64)> {
    let (mut p, mut cost) = levenberg_marquardt(d, seed)?;
    for _ in 0..REWEIGHT_ROUNDS {
        for (w, t) in d.w.iter_mut().zip(&d.t) {
            *w = 1.0 / model(&p, *t).max(MIN_MODEL_COUNTS);
        }
        let (next, next_cost) = levenberg_marquardt(d, p.clone())?;
        let settled = p
            .iter()
            .zip(&next)
            .all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs().max(1e-12));
        p = next;
        cost = next_cost;
        if settled {
            break;
        }
    }
    Ok((p, cost))
}

/// Weighted straight-line fit of ln(y) against t, weights y. Returns (slope, intercept).
fn log_linear(t: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(_, y)| **y > 0.0)
        .map(|(t, y)| (*t, y.ln(), *y))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mt = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ml = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mt).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mt) * (p.1 - ml)).sum();
    let slope = sxy / sxx;
    Some((slope, ml - slope * mt))
}

fn fit_result(model_kind: DecayModel, d: &Data, p: &[f64], cost: f64, origin_ns: f64) -> DecayFit {
    let (jtj, _) = normal_equations(d, p);
    let k = p.len();
    let cov = jtj
        .clone()
        .try_inverse()
        .unwrap_or_else(|| DMatrix::from_element(k, k, f64::NAN));
    let mut covariance: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| cov[(i, j)]).collect())
        .collect();
    let dof = (d.t.len() as f64 - k as f64).max(1.0);
    let mut fit = DecayFit {
        model: model_kind,
        gamma1: p[1],
        gamma2: None,
        a1: p[0],
        a2: None,
        background: p[k - 1],
        covariance: Vec::new(),
        goodness: cost / dof,
        origin_ns,
        degenerate: false,
    };
    if model_kind == DecayModel::Biexp {
        fit.gamma2 = Some(p[3]);
        fit.a2 = Some(p[2]);
        if p[3] < p[1] {
            // reorder so that γ₁ < γ₂, permuting covariance alike
            fit.gamma1 = p[3];
            fit.a1 = p[2];
            fit.gamma2 = Some(p[1]);
            fit.a2 = Some(p[0]);
            let perm = [2, 3, 0, 1, 4];
            covariance = perm
                .iter()
                .map(|&i| perm.iter().map(|&j| covariance[i][j]).collect())
                .collect();
        }
    }
    fit.covariance = covariance;
    fit
}

/// Fits the decay tail from the peak bin onwards, starting from Poisson
/// weights 1/max(count, 1).
pub fn fit_decay(h: &DecayHistogram, model_kind: DecayModel) -> Result<DecayFit> {
    let counts = h.counts();
    let nonzero = counts.iter().filter(|c| **c > 0).count();
    if nonzero < MIN_NONZERO_BINS {
        return Err(Error::TooFewBins {
            nonzero,
            required: MIN_NONZERO_BINS,
        });
    }
    let peak = (0..counts.len())
        .max_by_key(|&i| (counts[i], std::cmp::Reverse(i)))
        .expect("nonempty");
    let origin_ns = h.bin_center_ns(peak);
    let last = counts.iter().rposition(|c| *c > 0).expect("nonzero bins");
    let t: Vec<f64> = (peak..counts.len())
        .map(|i| h.bin_center_ns(i) - origin_ns)
        .collect();
    let y: Vec<f64> = counts[peak..].iter().map(|c| *c as f64).collect();
    let w: Vec<f64> = y.iter().map(|c| 1.0 / c.max(1.0)).collect();
    let count_weights = w.clone();
    let mut data = Data { t, y, w };
    let span = last - peak + 1;
    if span < MIN_NONZERO_BINS / 2 {
        return Err(Error::TooFewBins {
            nonzero: span,
            required: MIN_NONZERO_BINS / 2,
        });
    }

    let whole = log_linear(&data.t[..span], &data.y[..span]);
    let tail_start = span * 2 / 3;
    let tail = log_linear(&data.t[tail_start..span], &data.y[tail_start..span]).or(whole);
    let (slope, intercept) = tail.ok_or_else(|| invalid("cannot seed decay fit"))?;
    let slow_rate = (-slope).max(1e-6);
    let slow_amp = intercept.exp();

    let mono_seed = whole.map_or((slow_amp, slow_rate), |(s, i)| (i.exp(), (-s).max(1e-6)));
    let (mono_p, mono_cost) = fit_poisson(&mut data, vec![mono_seed.0, mono_seed.1, 0.0])?;
    let mono = fit_result(DecayModel::Mono, &data, &mono_p, mono_cost, origin_ns);
    if model_kind == DecayModel::Mono {
        return Ok(mono);
    }

    let head = (span / 10).max(3).min(span);
    let resid: Vec<f64> = (0..head)
        .map(|i| data.y[i] - slow_amp * (-slow_rate * data.t[i]).exp())
        .collect();
    let (fast_amp, fast_rate) = match log_linear(&data.t[..head], &resid) {
        Some((s, i)) if -s > slow_rate * DEGENERATE_RATIO => (i.exp(), -s),
        _ => ((data.y[0] - slow_amp).max(data.y[0] * 0.1), 5.0 * slow_rate),
    };
    data.w = count_weights;
    let (p, cost) = fit_poisson(
        &mut data,
        vec![slow_amp, slow_rate, fast_amp, fast_rate, 0.0],
    )?;
    let bi = fit_result(DecayModel::Biexp, &data, &p, cost, origin_ns);
    let ratio = bi.gamma2.unwrap_or(0.0) / bi.gamma1;
    let empty_component = bi.a1 <= 0.0 || bi.a2.unwrap_or(0.0) <= 0.0;
    let flat = bi.gamma1 * data.t[span - 1] < FLAT_COMPONENT_EFOLDS;
    if ratio < DEGENERATE_RATIO || empty_component || flat || !ratio.is_finite() {
        return Ok(DecayFit {
            degenerate: true,
            ..mono
        });
    }
    Ok(bi)
}

/// Histogram of expected counts for a sum of exponentials (amplitude, τ in ns)
/// sampled at bin centres. Used by tests and synthetic-data tooling.
pub fn synthetic_decay(components: &[(f64, f64)], bin_width_ps: u64, n_bins: usize) -> Vec<f64> {
    (0..n_bins)
        .map(|i| {
            let t = (i as f64 + 0.5) * bin_width_ps as f64 * 1e-3;
            components.iter().map(|(a, tau)| a * (-t / tau).exp()).sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    fn histogram(expected: &[f64], bin_width_ps: u64, noise_seed: Option<u64>) -> DecayHistogram {
        let counts = match noise_seed {
            None => expected.iter().map(|v| v.round() as u64).collect(),
            Some(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                expected
                    .iter()
                    .map(|v| {
                        if *v > 0.0 {
                            Poisson::new(*v).unwrap().sample(&mut rng) as u64
                        } else {
                            0
                        }
                    })
                    .collect()
            }
        };
        DecayHistogram::new(bin_width_ps, counts, 1).unwrap()
    }

    #[test]
    fn noiseless_mono_recovers_lifetime() {
        let exp = synthetic_decay(&[(1e5, 48.95)], 100, 4000);
        let fit = fit_decay(&histogram(&exp, 100, None), DecayModel::Mono).unwrap();
        assert!(
            (fit.tau1_ns() / 48.95 - 1.0).abs() < 1e-3,
            "{}",
            fit.tau1_ns()
        );
    }

    #[test]
    fn noisy_biexp_recovers_both_rates() {
        let shape = synthetic_decay(&[(1000.0, 30.0), (400.0, 5.0)], 100, 2500);
        let scale = 1e6 / shape.iter().sum::<f64>();
        let exp: Vec<f64> = shape.iter().map(|v| v * scale).collect();
        let fit = fit_decay(&histogram(&exp, 100, Some(4)), DecayModel::Biexp).unwrap();
        assert_eq!(fit.model, DecayModel::Biexp);
        assert!(fit.gamma1 < fit.gamma2.unwrap());
        assert!((fit.tau1_ns() / 30.0 - 1.0).abs() < 0.05);
        assert!((1.0 / fit.gamma2.unwrap() / 5.0 - 1.0).abs() < 0.05);
        assert!((fit.goodness - 1.0).abs() < 0.2, "{}", fit.goodness);
    }

    #[test]
    fn mono_data_fitted_as_biexp_is_degenerate() {
        let exp = synthetic_decay(&[(5000.0, 20.0)], 200, 800);
        let fit = fit_decay(&histogram(&exp, 200, Some(2)), DecayModel::Biexp).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.model, DecayModel::Mono);
        assert!((fit.tau1_ns() / 20.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn sparse_mono_tail_does_not_become_a_flat_component() {
        let exp = synthetic_decay(&[(200.0, 48.95)], 100, 5000);
        for seed in 0..4 {
            let fit = fit_decay(&histogram(&exp, 100, Some(seed)), DecayModel::Biexp).unwrap();
            assert!(fit.gamma1 * 500.0 > 0.1, "{fit:?}");
            assert!(
                (fit.tau1_ns() / 48.95 - 1.0).abs() < 0.05 || fit.gamma2.is_some(),
                "{fit:?}"
            );
        }
    }

    #[test]
    fn fit_is_self_consistent() {
        let exp = synthetic_decay(&[(2000.0, 25.0)], 100, 2000);
        let first = fit_decay(&histogram(&exp, 100, Some(8)), DecayModel::Mono).unwrap();
        let regenerated: Vec<f64> = (0..2000)
            .map(|i| first.evaluate((i as f64 + 0.5) * 0.1))
            .collect();
        let second = fit_decay(&histogram(&regenerated, 100, Some(9)), DecayModel::Mono).unwrap();
        assert!((second.gamma1 - first.gamma1).abs() < 3.0 * first.gamma1_std_error());
    }

    #[test]
    fn empty_histogram_is_an_error() {
        let h = DecayHistogram::new(100, vec![0; 1000], 10).unwrap();
        assert!(matches!(
            fit_decay(&h, DecayModel::Mono),
            Err(Error::TooFewBins { .. })
        ));
    }
}
