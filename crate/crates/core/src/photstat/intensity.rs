use serde::{Deserialize, Serialize};

use crate::detection::DecayHistogram;
use crate::error::invalid;
use crate::Result;

/// Maximum of the smoothed decay profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakIntensity {
    /// Smoothed counts per bin.
    pub counts: f64,
    pub bin: usize,
    pub time_ns: f64,
}

/// Peak of the 3-bin centred moving average (edge bins average what exists).
pub fn peak_intensity(h: &DecayHistogram) -> Result<PeakIntensity> {
    let c = h.counts();
    if c.is_empty() || h.total() == 0 {
        return Err(invalid("peak intensity of an empty histogram"));
    }
    let smoothed = (0..c.len()).map(|i| {
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(c.len() - 1);
        c[lo..=hi].iter().sum::<u64>() as f64 / (hi - lo + 1) as f64
    });
    let (bin, counts) = smoothed
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        });
    Ok(PeakIntensity {
        counts,
        bin,
        time_ns: h.bin_center_ns(bin),
    })
}

/// I ∝ N^exponent by least squares in log-log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub std_error: f64,
    pub prefactor: f64,
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.iter().any(|(n, i)| !(*n > 0.0) || !(*i > 0.0)) {
        return Err(invalid("power-law points must be positive"));
    }
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(invalid("power-law fit needs at least 3 distinct N"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let std_error = if xs.len() > 2 {
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(PowerLawFit {
        exponent: slope,
        std_error,
        prefactor: intercept.exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_decay_peaks_in_first_bin() {
        let h = DecayHistogram::new(100, vec![100, 80, 60, 40, 20, 10], 1).unwrap();
        let p = peak_intensity(&h).unwrap();
        assert_eq!(p.bin, 0);
        assert_eq!(p.counts, 90.0);
        assert!(peak_intensity(&DecayHistogram::new(100, vec![0; 5], 1).unwrap()).is_err());
        assert!(peak_intensity(&DecayHistogram::new(100, vec![], 1).unwrap()).is_err());
    }

    #[test]
    fn exact_power_laws() {
        let sq: Vec<(f64, f64)> = (1..=6).map(|n| (n as f64, 3.0 * (n * n) as f64)).collect();
        let f = fit_power_law(&sq).unwrap();
        assert!((f.exponent - 2.0).abs() < 1e-9);
        assert!((f.prefactor - 3.0).abs() < 1e-9);
        let lin: Vec<(f64, f64)> = (1..=6).map(|n| (n as f64, 7.0 * n as f64)).collect();
        assert!((fit_power_law(&lin).unwrap().exponent - 1.0).abs() < 1e-12);
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 2.0), (2.0, 2.1)]).is_err());
    }
}
