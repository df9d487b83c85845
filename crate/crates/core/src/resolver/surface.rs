use std::io::Write;

use serde::{Deserialize, Serialize};

use super::scaling::{g2_of_n_value, LifetimeScalingFit};
use crate::error::invalid;
use crate::photstat::g2_dominant_value;
use crate::Result;

pub const SURFACE_MIN_N: u32 = 2;
pub const DEFAULT_SURFACE_MAX_N: u32 = 10;

/// Regular grid over (τ₁, g²). τ₁ values are cell centres; each g² cell is
/// centred on its grid value with half-width `g2_tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceGrid {
    pub tau1_min_ns: f64,
    pub tau1_max_ns: f64,
    pub tau1_steps: usize,
    pub g2_min: f64,
    pub g2_max: f64,
    pub g2_steps: usize,
    /// Half-width of the g² band of a cell; defaults to half the g² spacing.
    #[serde(default)]
    pub g2_tolerance: Option<f64>,
}

impl SurfaceGrid {
    fn axis(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
        if steps == 1 {
            return vec![lo];
        }
        (0..steps)
            .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
            .collect()
    }

    fn g2_spacing(&self) -> f64 {
        if self.g2_steps > 1 {
            (self.g2_max - self.g2_min) / (self.g2_steps - 1) as f64
        } else {
            0.0
        }
    }

    pub fn tolerance(&self) -> f64 {
        self.g2_tolerance.unwrap_or(0.5 * self.g2_spacing())
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau1_min_ns > 0.0)
            || !(self.tau1_max_ns >= self.tau1_min_ns)
            || self.tau1_steps == 0
        {
            return Err(invalid("τ₁ axis needs 0 < min ≤ max and at least one step"));
        }
        if !(self.g2_max >= self.g2_min) || self.g2_steps == 0 {
            return Err(invalid("g² axis needs min ≤ max and at least one step"));
        }
        if !(self.tolerance() >= 0.0) {
            return Err(invalid("g² tolerance must be non-negative"));
        }
        Ok(())
    }
}

/// One point of the fitted scaling curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n: u32,
    pub tau1_ns: f64,
    pub g2: f64,
}

/// Admissible emitter numbers for each (τ₁, g²) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMap {
    pub schema_version: u32,
    pub tau0_mean_ns: f64,
    pub n_max: u32,
    pub tau1_ns: Vec<f64>,
    pub g2: Vec<f64>,
    pub g2_tolerance: f64,
    /// `cells[i][j]`: N values for τ₁ index i and g² index j.
    pub cells: Vec<Vec<Vec<u32>>>,
    #[serde(default)]
    pub scaling_curve: Option<Vec<ScalingPoint>>,
}

fn forward(n: u32, tau1_ns: f64, tau0_mean_ns: f64) -> f64 {
    g2_dominant_value(n as usize, &(1.0 / tau1_ns), &(1.0 / tau0_mean_ns)).expect("positive inputs")
}

/// Forward-evaluates the dominant-channel relation for N = 2..=n_max at each
/// τ₁ and records which N land in each g² band. With `fit`, also attaches
/// the scaling curve τ₁ = b + a/N and its predicted g².
pub fn generate_surface(
    fit: Option<&LifetimeScalingFit>,
    tau0_mean_ns: f64,
    n_max: u32,
    grid: &SurfaceGrid,
) -> Result<SurfaceMap> {
    if n_max < SURFACE_MIN_N {
        return Err(invalid("n_max must be at least 2"));
    }
    if !(tau0_mean_ns > 0.0) {
        return Err(invalid("tau0 must be positive"));
    }
    grid.validate()?;
    let tau1 = SurfaceGrid::axis(grid.tau1_min_ns, grid.tau1_max_ns, grid.tau1_steps);
    let g2 = SurfaceGrid::axis(grid.g2_min, grid.g2_max, grid.g2_steps);
    let tol = grid.tolerance();
    let cells = tau1
        .iter()
        .map(|&t| {
            let values: Vec<(u32, f64)> = (SURFACE_MIN_N..=n_max)
                .map(|n| (n, forward(n, t, tau0_mean_ns)))
                .collect();
            g2.iter()
                .map(|&g| {
                    values
                        .iter()
                        .filter(|(_, v)| (v - g).abs() <= tol)
                        .map(|(n, _)| *n)
                        .collect()
                })
                .collect()
        })
        .collect();
    let scaling_curve = fit
        .map(|f| {
            (1..=n_max)
                .map(|n| {
                    Ok(ScalingPoint {
                        n,
                        tau1_ns: f.tau1_ns(n as f64),
                        g2: g2_of_n_value(n, &f.a, &f.b, &tau0_mean_ns)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    Ok(SurfaceMap {
        schema_version: crate::detection::SCHEMA_VERSION,
        tau0_mean_ns,
        n_max,
        tau1_ns: tau1,
        g2,
        g2_tolerance: tol,
        cells,
        scaling_curve,
    })
}

fn nearest(axis: &[f64], x: f64) -> usize {
    (0..axis.len())
        .min_by(|&i, &j| (axis[i] - x).abs().total_cmp(&(axis[j] - x).abs()))
        .unwrap_or(0)
}

impl SurfaceMap {
    /// Cell indices closest to (τ₁, g²).
    pub fn cell_index(&self, tau1_ns: f64, g2: f64) -> (usize, usize) {
        (nearest(&self.tau1_ns, tau1_ns), nearest(&self.g2, g2))
    }

    pub fn lookup(&self, tau1_ns: f64, g2: f64) -> &[u32] {
        let (i, j) = self.cell_index(tau1_ns, g2);
        &self.cells[i][j]
    }

    pub fn is_multi_root(&self, i: usize, j: usize) -> bool {
        self.cells[i][j].len() > 1
    }

    /// Long format `tau1_ns,g2,n,flag`, one row per admissible N.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tau1_ns,g2,n,flag")?;
        for (i, row) in self.cells.iter().enumerate() {
            for (j, set) in row.iter().enumerate() {
                let flag = if set.len() > 1 {
                    "multi_root"
                } else {
                    "single"
                };
                for n in set {
                    writeln!(w, "{},{},{},{}", self.tau1_ns[i], self.g2[j], n, flag)?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SurfaceGrid {
        SurfaceGrid {
            tau1_min_ns: 10.0,
            tau1_max_ns: 50.0,
            tau1_steps: 81,
            g2_min: 0.0,
            g2_max: 1.5,
            g2_steps: 301,
            g2_tolerance: None,
        }
    }

    #[test]
    fn every_forward_value_lies_in_its_cell() {
        let s = generate_surface(None, 48.95, 10, &grid()).unwrap();
        for (i, &t) in s.tau1_ns.iter().enumerate() {
            for n in 2..=10 {
                let g = forward(n, t, 48.95);
                if g > 1.5 + s.g2_tolerance {
                    continue;
                }
                let (_, j) = s.cell_index(t, g);
                assert!(s.cells[i][j].contains(&n), "n={n} t={t}");
            }
        }
    }

    #[test]
    fn crossing_bands_share_a_cell() {
        // 1/2 + r²/8 = 2/3 + 2r²/27  ⇔  r² = 216/66
        let r = (216.0f64 / 66.0).sqrt();
        let tau1 = 48.95 / r;
        let g = 0.5 + r * r / 8.0;
        let custom = SurfaceGrid {
            tau1_min_ns: tau1,
            tau1_max_ns: tau1,
            tau1_steps: 1,
            ..grid()
        };
        let s = generate_surface(None, 48.95, 10, &custom).unwrap();
        let set = s.lookup(tau1, g);
        assert!(set.contains(&2) && set.contains(&3), "{set:?}");
        let (i, j) = s.cell_index(tau1, g);
        assert!(s.is_multi_root(i, j));
    }

    #[test]
    fn cells_above_every_band_are_empty() {
        let s = generate_surface(None, 48.95, 10, &grid()).unwrap();
        let max_forward = (2..=10)
            .map(|n| forward(n, 20.0, 48.95))
            .fold(0.0, f64::max);
        assert!(max_forward < 1.4);
        assert!(s.lookup(20.0, 1.5).is_empty());
        let mut csv = Vec::new();
        s.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv)
            .unwrap()
            .starts_with("tau1_ns,g2,n,flag\n"));
    }

    #[test]
    fn bands_are_monotone_in_tau1() {
        let fit = crate::resolver::fit_lifetime_scaling(&[
            (1.0, 48.95),
            (2.0, 31.42),
            (5.0, 24.72),
            (10.0, 19.39),
        ])
        .unwrap();
        let s = generate_surface(Some(&fit), 48.95, 10, &grid()).unwrap();
        assert_eq!(s.scaling_curve.as_ref().unwrap().len(), 10);
        for n in 2..=10 {
            let centres: Vec<f64> = s
                .cells
                .iter()
                .filter_map(|row| {
                    let js: Vec<usize> = (0..row.len()).filter(|&j| row[j].contains(&n)).collect();
                    (!js.is_empty()).then(|| js.iter().sum::<usize>() as f64 / js.len() as f64)
                })
                .collect();
            assert!(centres.windows(2).all(|w| w[1] <= w[0]), "n={n}");
        }
        assert!(generate_surface(None, 48.95, 1, &grid()).is_err());
    }
}
