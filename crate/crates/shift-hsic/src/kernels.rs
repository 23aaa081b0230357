//! Kernel functions, Gram matrices, centering and bandwidth selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::substream;
use rand::seq::index::sample;

/// Seed used for the pairwise-distance subsample when the caller goes
/// through a [`KernelSpec`] instead of calling
/// [`median_heuristic_seeded`] directly.
pub const MEDIAN_SUBSAMPLE_SEED: u64 = 0x6d65_6469_616e;

/// Exact median computation is used up to this many points; larger series
/// are subsampled.
pub const MEDIAN_EXACT_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    /// Fixed positive bandwidth.
    Explicit(f64),
    /// Median of pairwise distances, resolved against the data.
    MedianHeuristic,
}

/// Kernel choice for one side of the test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KernelSpec {
    Gaussian { bandwidth: Bandwidth },
    Linear,
}

impl KernelSpec {
    /// Gaussian RBF with an explicit bandwidth.
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidInput(format!(
                "bandwidth must be a positive finite number, got {bandwidth}"
            )));
        }
        Ok(KernelSpec::Gaussian {
            bandwidth: Bandwidth::Explicit(bandwidth),
        })
    }

    /// Gaussian RBF with the median-heuristic bandwidth (the default).
    pub fn gaussian_median() -> Self {
        KernelSpec::Gaussian {
            bandwidth: Bandwidth::MedianHeuristic,
        }
    }

    pub fn linear() -> Self {
        KernelSpec::Linear
    }

    /// Fix any data-dependent parameters against `series`.
    pub fn resolve(&self, series: &[f64]) -> Result<ResolvedKernel> {
        match *self {
            KernelSpec::Gaussian { bandwidth } => {
                let sigma = match bandwidth {
                    Bandwidth::Explicit(s) => s,
                    Bandwidth::MedianHeuristic => {
                        median_heuristic_seeded(series, MEDIAN_SUBSAMPLE_SEED)?
                    }
                };
                Ok(ResolvedKernel::Gaussian { sigma })
            }
            KernelSpec::Linear => Ok(ResolvedKernel::Linear),
        }
    }
}

/// A kernel with all parameters fixed; evaluable pointwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ResolvedKernel {
    Gaussian { sigma: f64 },
    Linear,
}

impl ResolvedKernel {
    #[inline]
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        match *self {
            ResolvedKernel::Gaussian { sigma } => {
                let d = a - b;
                (-(d * d) / (2.0 * sigma * sigma)).exp()
            }
            ResolvedKernel::Linear => a * b,
        }
    }
}

/// Symmetric n x n kernel evaluation matrix, stored row major.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: Vec<f64>,
    n: usize,
    centered: bool,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Build the uncentered Gram matrix `K[a][b] = k(series[a], series[b])`.
///
/// The matrix is filled from the upper triangle and mirrored, so it is
/// symmetric by construction.
pub fn gram(series: &[f64], kernel: &ResolvedKernel) -> Result<GramMatrix> {
    if series.is_empty() {
        return Err(Error::EmptyInput("gram of an empty series".into()));
    }
    if let Some(v) = series.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "series contains non-finite value {v}"
        )));
    }
    let n = series.len();
    let mut values = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let v = kernel.eval(series[a], series[b]);
            values[a * n + b] = v;
            values[b * n + a] = v;
        }
    }
    Ok(GramMatrix {
        values,
        n,
        centered: false,
    })
}

/// Double-center a Gram matrix: `HgH` with `H = I - n^{-1} 1 1^T`,
/// computed as `g - row means - column means + grand mean` without ever
/// materializing `H`.
pub fn center(g: &GramMatrix) -> GramMatrix {
    let n = g.n;
    let mut row_means = vec![0.0; n];
    for i in 0..n {
        row_means[i] = g.row(i).iter().sum::<f64>() / n as f64;
    }
    // g is symmetric, so column means equal row means.
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        let ri = row_means[i];
        let src = g.row(i);
        let dst = &mut values[i * n..(i + 1) * n];
        for j in 0..n {
            dst[j] = src[j] - ri - row_means[j] + grand;
        }
    }
    GramMatrix {
        values,
        n,
        centered: true,
    }
}

/// Median of pairwise distances `|x_a - x_b|` over `a < b`, lower-median
/// convention for even counts.
///
/// Exact for `n <=` [`MEDIAN_EXACT_LIMIT`]; above that, distances are
/// taken over a seeded uniform subsample of that many points.
///
/// ```
/// use shift_hsic::kernels::median_heuristic_seeded;
/// // pairwise distances of [0, 1, 2, 4]: {1, 2, 4, 1, 3, 2}, lower median 2
/// assert_eq!(median_heuristic_seeded(&[0.0, 1.0, 2.0, 4.0], 0).unwrap(), 2.0);
/// ```
pub fn median_heuristic_seeded(series: &[f64], seed: u64) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: series.len(),
        });
    }
    let points: Vec<f64> = if series.len() <= MEDIAN_EXACT_LIMIT {
        series.to_vec()
    } else {
        let mut rng = substream(seed, &[series.len() as u64]);
        let idx = sample(&mut rng, series.len(), MEDIAN_EXACT_LIMIT);
        idx.into_iter().map(|i| series[i]).collect()
    };
    let m = points.len();
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for a in 0..m {
        for b in (a + 1)..m {
            dists.push((points[a] - points[b]).abs());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = dists[(dists.len() - 1) / 2];
    if median == 0.0 {
        return Err(Error::DegenerateSeries(
            "median pairwise distance is zero; supply an explicit bandwidth".into(),
        ));
    }
    Ok(median)
}
