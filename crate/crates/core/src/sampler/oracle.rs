//! Exact conditional marginals for `n ∈ {2, 3}` by midpoint-rule quadrature of
//! Lebesgue measure restricted to the shell.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ShellSpec;
use crate::error::{Error, Result};

/// Piecewise-constant marginal density on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTable {
    /// Cell boundaries, `resolution + 1` of them.
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    /// CDF at each edge.
    pub cdf: Vec<f64>,
}

impl OracleTable {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.density
            .iter()
            .zip(self.edges.windows(2))
            .map(|(d, w)| d * (w[1] - w[0]))
            .sum()
    }

    /// CDF, linear inside each cell.
    pub fn cdf_at(&self, x: f64) -> f64 {
        let m = self.density.len();
        if x <= self.edges[0] {
            return 0.0;
        }
        if x >= self.edges[m] {
            return 1.0;
        }
        let i = self.edges.partition_point(|e| *e <= x) - 1;
        self.cdf[i] + self.density[i] * (x - self.edges[i])
    }
}

/// Marginal of coordinate 1.
pub fn brute_force_conditional(spec: &ShellSpec, resolution: usize) -> Result<OracleTable> {
    brute_force_marginal(spec, resolution, 0)
}

/// Marginal of coordinate `coord` (zero-based).
pub fn brute_force_marginal(spec: &ShellSpec, resolution: usize, coord: usize) -> Result<OracleTable> {
    let n = spec.n;
    if !(n == 2 || n == 3) {
        return Err(Error::Argument(format!("brute force needs n in {{2, 3}}, got {n}")));
    }
    if coord >= n || resolution < 2 {
        return Err(Error::Argument("coordinate or resolution out of range".into()));
    }
    // No coordinate can exceed the level where it alone saturates some constraint.
    let bounds: Vec<f64> = spec.a.iter().map(|a| n as f64 * (a + spec.delta)).collect();
    let x_max = spec.set.coordinate_cap(&bounds);
    let (edges, slice) = slices(spec, coord, resolution, x_max);
    let widths: Vec<f64> = edges.windows(2).map(|w| w[1] - w[0]).collect();
    let total: f64 = slice.iter().zip(&widths).map(|(s, w)| s * w).sum();
    if total <= 0.0 {
        return Err(Error::EmptyShell);
    }
    let density: Vec<f64> = slice.iter().map(|s| s / total).collect();
    let mut cdf = Vec::with_capacity(resolution + 1);
    cdf.push(0.0);
    let mut c = 0.0;
    for (d, w) in density.iter().zip(&widths) {
        c += d * w;
        cdf.push(c);
    }
    Ok(OracleTable { edges, density, cdf })
}

/// Uniform edges on `[0, x_max]` and the unnormalized slice weights of `coord`.
fn slices(spec: &ShellSpec, coord: usize, resolution: usize, x_max: f64) -> (Vec<f64>, Vec<f64>) {
    let n = spec.n;
    let k = spec.set.k();
    let edges: Vec<f64> = (0..=resolution)
        .map(|i| x_max * i as f64 / resolution as f64)
        .collect();
    let centers: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let widths: Vec<f64> = edges.windows(2).map(|w| w[1] - w[0]).collect();
    let phis: Vec<Vec<f64>> = centers.iter().map(|&c| spec.set.eval_all(c)).collect();
    let lo: Vec<f64> = spec.a.iter().map(|a| n as f64 * (a - spec.delta)).collect();
    let hi: Vec<f64> = spec.a.iter().map(|a| n as f64 * (a + spec.delta)).collect();
    let inside = |tot: &[f64]| (0..k).all(|i| tot[i] >= lo[i] && tot[i] <= hi[i]);

    let slice = (0..resolution)
        .into_par_iter()
        .map(|i| {
            let mut tot = vec![0.0; k];
            let mut cells = vec![0usize; n];
            let mut acc = 0.0;
            let others = resolution.pow(n as u32 - 1);
            for idx in 0..others {
                let mut rest = idx;
                let mut weight = 1.0;
                for (pos, cell) in cells.iter_mut().enumerate() {
                    if pos == coord {
                        *cell = i;
                    } else {
                        *cell = rest % resolution;
                        rest /= resolution;
                        weight *= widths[*cell];
                    }
                }
                for (m, t) in tot.iter_mut().enumerate() {
                    *t = cells.iter().map(|&c| phis[c][m]).sum();
                }
                if inside(&tot) {
                    acc += weight;
                }
            }
            acc
        })
        .collect();
    (edges, slice)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::power_set;

    #[test]
    fn normalized_and_exchangeable() {
        let spec = ShellSpec::new(power_set(&[1.0, 2.0]).unwrap(), 2, 0.15, vec![1.0, 1.6]).unwrap();
        let t1 = brute_force_conditional(&spec, 400).unwrap();
        assert!((t1.total_mass() - 1.0).abs() < 1e-4);
        let t2 = brute_force_marginal(&spec, 400, 1).unwrap();
        assert_eq!(t1.density, t2.density);
    }

    #[test]
    fn empty_shell() {
        // Means (1, 0.5) violate Jensen, so no grid cell is inside.
        let spec = ShellSpec::new(power_set(&[1.0, 2.0]).unwrap(), 2, 0.05, vec![1.0, 0.5]).unwrap();
        assert!(matches!(brute_force_conditional(&spec, 100), Err(Error::EmptyShell)));
    }
}
