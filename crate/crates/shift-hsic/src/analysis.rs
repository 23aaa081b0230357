//! Higher-level studies: lagged residual-dependence scans and pairwise
//! dependence graphs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmtnum::fmt_f64;
use crate::kernels::KernelSpec;
use crate::nulldist::{run_method, TestMethod};
use crate::seed::derive_seed;
use crate::statistic::SeriesPair;

/// Ordinary least squares of `y_t` on `(x_t, ..., x_{t-q})`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagFit {
    /// `a_0 .. a_q` (plus a trailing intercept when requested).
    pub coefficients: Vec<f64>,
    /// `R_t = y_t - yhat_t` for `t = q .. n-1` (0-based).
    pub residuals: Vec<f64>,
    /// Index of the first residual in the original series.
    pub offset: usize,
    pub intercept: bool,
}

/// OLS lag regression via normal equations with a pivoted solve.
/// No intercept by default (differenced series are mean-zero by
/// construction); pass `intercept = true` to append one.
pub fn ols_lag_fit(pair: &SeriesPair, max_lag: usize, intercept: bool) -> Result<LagFit> {
    let n = pair.len();
    let q = max_lag;
    if n <= q + 2 {
        return Err(Error::TooShort { need: q + 3, got: n });
    }
    let p = q + 1 + usize::from(intercept);
    let rows = n - q;
    // design row for t: [x_t, x_{t-1}, ..., x_{t-q}, (1)]
    let row = |t: usize, j: usize| -> f64 {
        if j <= q {
            pair.x[t - j]
        } else {
            1.0
        }
    };
    let mut ata = vec![0.0; p * p];
    let mut aty = vec![0.0; p];
    for t in q..n {
        for i in 0..p {
            let ri = row(t, i);
            aty[i] += ri * pair.y[t];
            for j in i..p {
                ata[i * p + j] += ri * row(t, j);
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            ata[i * p + j] = ata[j * p + i];
        }
    }
    let coefficients = solve_symmetric(&mut ata, &mut aty, p, rows)?;
    let mut residuals = Vec::with_capacity(rows);
    for t in q..n {
        let yhat: f64 = (0..p).map(|j| coefficients[j] * row(t, j)).sum();
        residuals.push(pair.y[t] - yhat);
    }
    Ok(LagFit {
        coefficients,
        residuals,
        offset: q,
        intercept,
    })
}

/// Gaussian elimination with partial pivoting on the normal equations.
fn solve_symmetric(a: &mut [f64], b: &mut [f64], p: usize, rows: usize) -> Result<Vec<f64>> {
    let scale = a
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for col in 0..p {
        let pivot_row = (col..p)
            .max_by(|&i, &j| {
                a[i * p + col]
                    .abs()
                    .partial_cmp(&a[j * p + col].abs())
                    .unwrap()
            })
            .unwrap();
        if a[pivot_row * p + col].abs() <= 1e-12 * scale * rows as f64 {
            return Err(Error::SingularDesign);
        }
        if pivot_row != col {
            for j in 0..p {
                a.swap(col * p + j, pivot_row * p + j);
            }
            b.swap(col, pivot_row);
        }
        let pv = a[col * p + col];
        for i in (col + 1)..p {
            let f = a[i * p + col] / pv;
            if f == 0.0 {
                continue;
            }
            for j in col..p {
                a[i * p + j] -= f * a[col * p + j];
            }
            b[i] -= f * b[col];
        }
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut acc = b[i];
        for j in (i + 1)..p {
            acc -= a[i * p + j] * x[j];
        }
        x[i] = acc / a[i * p + i];
    }
    Ok(x)
}

/// Per-lag p-values of residual dependence, one column per method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagScanResult {
    pub lags: Vec<usize>,
    pub methods: Vec<TestMethod>,
    /// `p_values[lag_index][method_index]`
    pub p_values: Vec<Vec<f64>>,
    /// Fitted regression coefficients `a_0 .. a_q`.
    pub coefficients: Vec<f64>,
}

impl LagScanResult {
    /// CSV rows `lag,method,p_value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lag,method,p_value\n");
        for (li, &lag) in self.lags.iter().enumerate() {
            for (mi, method) in self.methods.iter().enumerate() {
                out.push_str(&format!(
                    "{lag},{},{}\n",
                    method.label(),
                    fmt_f64(self.p_values[li][mi])
                ));
            }
        }
        out
    }

    /// Expected number of p-values at or below `level` under uniformity,
    /// and the observed count (the paper-style exceedance summary).
    pub fn exceedance(&self, method_index: usize, level: f64) -> (f64, usize) {
        let observed = self
            .p_values
            .iter()
            .filter(|row| row[method_index] <= level)
            .count();
        (level * self.lags.len() as f64, observed)
    }
}

/// Test residuals against lagged regressors: for each `k` in `0..=max_lag`
/// run the independence test between `R_t` and `x_{t-k}` on the
/// overlapping range `t = max(k, q) .. n-1`, so every method sees the same
/// sample size at a given lag.
pub fn lag_scan(
    x: &[f64],
    fit: &LagFit,
    max_lag: usize,
    methods: &[TestMethod],
    kx: &KernelSpec,
    ky: &KernelSpec,
    seed: u64,
) -> Result<LagScanResult> {
    let n = x.len();
    if max_lag >= n / 4 {
        return Err(Error::InvalidInput(format!(
            "max scan lag {max_lag} must be below n/4 = {}",
            n / 4
        )));
    }
    let q = fit.offset;
    let lags: Vec<usize> = (0..=max_lag).collect();
    let p_values: Vec<Vec<f64>> = lags
        .par_iter()
        .map(|&k| {
            let t0 = k.max(q);
            let r: Vec<f64> = (t0..n).map(|t| fit.residuals[t - q]).collect();
            let xs: Vec<f64> = (t0..n).map(|t| x[t - k]).collect();
            let pair = SeriesPair::new(r, xs)?;
            methods
                .iter()
                .map(|&m| {
                    run_method(m, &pair, kx, ky, derive_seed(seed, &[k as u64]))
                        .map(|r| r.p_value)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(LagScanResult {
        lags,
        methods: methods.to_vec(),
        p_values,
        coefficients: fit.coefficients.clone(),
    })
}

/// Fit the lag regression, then scan residual dependence.
pub fn residual_lag_scan(
    pair: &SeriesPair,
    reg_lag: usize,
    scan_lag: usize,
    methods: &[TestMethod],
    kx: &KernelSpec,
    ky: &KernelSpec,
    seed: u64,
) -> Result<LagScanResult> {
    let fit = ols_lag_fit(pair, reg_lag, false)?;
    lag_scan(&pair.x, &fit, scan_lag, methods, kx, ky, seed)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphEdge {
    pub a: String,
    pub b: String,
    pub p_value: f64,
}

/// Pairwise dependence structure at level `alpha`: an undirected edge is
/// present iff the pair's p-value is at most `alpha`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DependenceGraph {
    pub method: TestMethod,
    pub alpha: f64,
    pub nodes: Vec<String>,
    pub edges: Vec<GraphEdge>,
}

impl DependenceGraph {
    /// DOT serialization (undirected, edges labeled with p-values).
    pub fn to_dot(&self) -> String {
        let mut out = format!("graph \"{}\" {{\n", self.method.label());
        for node in &self.nodes {
            out.push_str(&format!("  \"{node}\";\n"));
        }
        for e in &self.edges {
            out.push_str(&format!(
                "  \"{}\" -- \"{}\" [label=\"p={:.4}\"];\n",
                e.a, e.b, e.p_value
            ));
        }
        out.push_str("}\n");
        out
    }
}

/// The HSIC graph and the correlation-baseline graph over the same data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DependenceGraphs {
    pub hsic: DependenceGraph,
    pub correlation: DependenceGraph,
}

/// Run the shift-null test on every unordered pair of series and build
/// both graphs. All series must have equal length (aligned beforehand).
pub fn dependence_graph(
    series: &[(String, Vec<f64>)],
    alpha: f64,
    kx: &KernelSpec,
    ky: &KernelSpec,
    seed: u64,
) -> Result<DependenceGraphs> {
    if series.len() < 2 {
        return Err(Error::InvalidInput("need at least two series".into()));
    }
    let n = series[0].1.len();
    if series.iter().any(|(_, v)| v.len() != n) {
        return Err(Error::InvalidInput("series are not aligned".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must be in (0,1), got {alpha}")));
    }
    let mut index_pairs = Vec::new();
    for i in 0..series.len() {
        for j in (i + 1)..series.len() {
            index_pairs.push((i, j));
        }
    }
    let results: Vec<(usize, usize, f64, f64)> = index_pairs
        .par_iter()
        .map(|&(i, j)| {
            let pair = SeriesPair::new(series[i].1.clone(), series[j].1.clone())?;
            let pair_seed = derive_seed(seed, &[i as u64, j as u64]);
            let h = run_method(TestMethod::ShiftHsic, &pair, kx, ky, pair_seed)?;
            let c = run_method(TestMethod::Correlation, &pair, kx, ky, pair_seed)?;
            Ok((i, j, h.p_value, c.p_value))
        })
        .collect::<Result<_>>()?;
    let nodes: Vec<String> = series.iter().map(|(name, _)| name.clone()).collect();
    let build = |method: TestMethod, pick: fn(&(usize, usize, f64, f64)) -> f64| DependenceGraph {
        method,
        alpha,
        nodes: nodes.clone(),
        edges: results
            .iter()
            .filter(|r| pick(r) <= alpha)
            .map(|r| GraphEdge {
                a: nodes[r.0].clone(),
                b: nodes[r.1].clone(),
                p_value: pick(r),
            })
            .collect(),
    };
    Ok(DependenceGraphs {
        hsic: build(TestMethod::ShiftHsic, |r| r.2),
        correlation: build(TestMethod::Correlation, |r| r.3),
    })
}

/// Diagnostic: HSIC between `(X_t)` and `(X_{t+m})` with the shift null,
/// for each lag `m` in `1..=max_lag`. Advisory only; used to eyeball how
/// fast serial dependence decays.
pub fn serial_dependence_check(
    series: &[f64],
    max_lag: usize,
    kernel: &KernelSpec,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = series.len();
    if max_lag >= n / 4 {
        return Err(Error::InvalidInput(format!(
            "max lag {max_lag} must be below n/4 = {}",
            n / 4
        )));
    }
    (1..=max_lag)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&m| {
            let pair = SeriesPair::new(series[..n - m].to_vec(), series[m..].to_vec())?;
            run_method(
                TestMethod::ShiftHsic,
                &pair,
                kernel,
                kernel,
                derive_seed(seed, &[m as u64]),
            )
            .map(|r| r.p_value)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::substream;
    use rand_distr::{Distribution, StandardNormal};

    fn gauss_med() -> KernelSpec {
        KernelSpec::gaussian_median()
    }

    fn normal_series(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, &[]);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn exact_linear_model_recovered() {
        let x = normal_series(200, 1);
        let y: Vec<f64> = x.iter().map(|v| 0.97 * v).collect();
        let fit = ols_lag_fit(&SeriesPair::new(x, y).unwrap(), 6, false).unwrap();
        assert!((fit.coefficients[0] - 0.97).abs() <= 1e-10);
        for j in 1..=6 {
            assert!(fit.coefficients[j].abs() <= 1e-10);
        }
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-10));
    }

    #[test]
    fn independent_noise_coefficients_near_zero() {
        // MC over seeds: each coefficient within 4 standard errors of 0.
        // For standard normal regressors/targets the coefficient se is
        // roughly 1/sqrt(rows).
        let mut hits = 0;
        let mut total = 0;
        for seed in 0..10 {
            let x = normal_series(2000, 100 + seed);
            let y = normal_series(2000, 200 + seed);
            let fit = ols_lag_fit(&SeriesPair::new(x, y).unwrap(), 3, false).unwrap();
            let se = 1.0 / (2000.0_f64).sqrt();
            for c in &fit.coefficients {
                total += 1;
                if c.abs() < 4.0 * se {
                    hits += 1;
                }
            }
        }
        assert!(hits == total, "{hits}/{total} coefficients within 4 se");
    }

    #[test]
    fn q0_reduces_to_simple_regression_slope() {
        let x = normal_series(500, 3);
        let y: Vec<f64> = x
            .iter()
            .zip(normal_series(500, 4))
            .map(|(a, e)| 2.0 * a + 0.1 * e)
            .collect();
        let pair = SeriesPair::new(x.clone(), y.clone()).unwrap();
        let fit = ols_lag_fit(&pair, 0, false).unwrap();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        assert!((fit.coefficients[0] - sxy / sxx).abs() < 1e-12);
    }

    #[test]
    fn residuals_orthogonal_to_regressors() {
        let x = normal_series(300, 5);
        let y = normal_series(300, 6);
        let pair = SeriesPair::new(x.clone(), y).unwrap();
        let q = 4;
        let fit = ols_lag_fit(&pair, q, false).unwrap();
        let n = pair.len();
        for j in 0..=q {
            let dot: f64 = (q..n).map(|t| fit.residuals[t - q] * x[t - j]).sum();
            assert!(dot.abs() <= 1e-8 * n as f64, "lag {j}: {dot}");
        }
    }

    #[test]
    fn rank_deficient_design_rejected() {
        // x constant: columns x_t and the duplicate lags are collinear.
        let x = vec![1.0; 50];
        let y = normal_series(50, 7);
        let pair = SeriesPair::new(x, y).unwrap();
        assert!(matches!(
            ols_lag_fit(&pair, 2, false),
            Err(Error::SingularDesign)
        ));
    }

    #[test]
    fn perfect_fit_scan_degenerates() {
        let x = normal_series(200, 8);
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v).collect();
        let pair = SeriesPair::new(x, y).unwrap();
        let err = residual_lag_scan(
            &pair,
            2,
            5,
            &[TestMethod::ShiftHsic],
            &gauss_med(),
            &gauss_med(),
            0,
        );
        assert!(matches!(err, Err(Error::DegenerateSeries(_))));
    }

    #[test]
    fn injected_lag5_nonlinearity_is_located() {
        // y_t = 0.9 x_t + 0.6 (x_{t-5}^2 - 1) + small noise. The squared
        // term is uncorrelated with x, so OLS leaves it in the residuals.
        let mut located = 0;
        let seeds = 10;
        for seed in 0..seeds {
            let x = normal_series(400, 300 + seed);
            let noise = normal_series(400, 400 + seed);
            let y: Vec<f64> = (0..400)
                .map(|t| {
                    let lag5 = if t >= 5 { x[t - 5] } else { 0.0 };
                    0.9 * x[t] + 0.6 * (lag5 * lag5 - 1.0) + 0.1 * noise[t]
                })
                .collect();
            let pair = SeriesPair::new(x, y).unwrap();
            let scan = residual_lag_scan(
                &pair,
                6,
                10,
                &[TestMethod::ShiftHsic],
                &gauss_med(),
                &gauss_med(),
                seed,
            )
            .unwrap();
            // p-values are discrete (multiples of 1/(m+1)), so the signal
            // lag can tie with a noise lag at the attainable minimum;
            // located = lag 5 reaches the minimum and is clearly small.
            let min_p = scan
                .p_values
                .iter()
                .map(|r| r[0])
                .fold(f64::INFINITY, f64::min);
            let p5 = scan.p_values[5][0];
            if p5 <= min_p && p5 < 0.01 {
                located += 1;
            }
        }
        assert!(
            located * 10 >= seeds * 9,
            "lag 5 located in only {located}/{seeds} runs"
        );
    }

    #[test]
    fn lag_zero_near_independent_for_correct_model() {
        let mut ok = 0;
        let seeds = 20;
        for seed in 0..seeds {
            let x = normal_series(300, 500 + seed);
            let noise = normal_series(300, 600 + seed);
            let y: Vec<f64> = x.iter().zip(&noise).map(|(a, e)| 0.8 * a + e).collect();
            let pair = SeriesPair::new(x, y).unwrap();
            let scan = residual_lag_scan(
                &pair,
                2,
                0,
                &[TestMethod::ShiftHsic],
                &gauss_med(),
                &gauss_med(),
                seed,
            )
            .unwrap();
            if scan.p_values[0][0] > 0.05 {
                ok += 1;
            }
        }
        assert!(ok * 10 >= seeds * 9, "lag-0 independence held in {ok}/{seeds}");
    }

    #[test]
    fn expected_exceedance_for_independent_series() {
        // independent x and y: expected count of p <= 0.06 across lags
        // 0..=29 is about 1.8 per dataset.
        let seeds = 8;
        let mut total = 0usize;
        for seed in 0..seeds {
            let x = normal_series(400, 700 + seed);
            let y = normal_series(400, 800 + seed);
            let pair = SeriesPair::new(x, y).unwrap();
            let scan = residual_lag_scan(
                &pair,
                6,
                29,
                &[TestMethod::ShiftHsic],
                &gauss_med(),
                &gauss_med(),
                seed,
            )
            .unwrap();
            let (_, observed) = scan.exceedance(0, 0.06);
            total += observed;
        }
        let mean = total as f64 / seeds as f64;
        // Binomial(30, 0.06) has sd ~ 1.3; 4 se over 8 datasets ~ 1.85
        assert!(
            (mean - 1.8).abs() < 1.85,
            "mean exceedance {mean}, expected about 1.8"
        );
    }

    #[test]
    fn graph_duplicate_series_single_edge() {
        let x = normal_series(200, 9);
        let series = vec![("a".to_string(), x.clone()), ("b".to_string(), x)];
        let graphs = dependence_graph(&series, 0.05, &gauss_med(), &gauss_med(), 0).unwrap();
        assert_eq!(graphs.hsic.edges.len(), 1);
        let (lo, hi) = crate::nulldist::default_shift_range(200);
        let m = hi - lo + 1;
        assert!((graphs.hsic.edges[0].p_value - 1.0 / (m + 1) as f64).abs() < 1e-15);
    }

    #[test]
    fn graph_independent_series_edge_rate() {
        let mut edges = 0usize;
        let seeds = 20;
        let k = 4;
        for seed in 0..seeds {
            let series: Vec<(String, Vec<f64>)> = (0..k)
                .map(|i| (format!("s{i}"), normal_series(150, 2000 + seed * 10 + i)))
                .collect();
            let graphs =
                dependence_graph(&series, 0.05, &gauss_med(), &gauss_med(), seed).unwrap();
            edges += graphs.hsic.edges.len();
        }
        let pairs = (k * (k - 1) / 2) as f64;
        let mean = edges as f64 / seeds as f64;
        let expect = 0.05 * pairs;
        // Binomial(6, 0.05) sd ~ 0.53 per seed; 4 se over 20 seeds ~ 0.48
        assert!(
            (mean - expect).abs() < 0.5,
            "mean edges {mean}, expected about {expect}"
        );
    }

    #[test]
    fn graph_detects_quadratic_coupling_missed_by_correlation() {
        let mut hsic_hits = 0;
        let mut corr_hits = 0;
        let seeds = 10;
        for seed in 0..seeds {
            let x = normal_series(300, 3000 + seed);
            let y: Vec<f64> = x.iter().map(|v| v * v).collect();
            let series = vec![("x".to_string(), x), ("y".to_string(), y)];
            let graphs =
                dependence_graph(&series, 0.05, &gauss_med(), &gauss_med(), seed).unwrap();
            hsic_hits += graphs.hsic.edges.len();
            corr_hits += graphs.correlation.edges.len();
        }
        // Exact quadratic coupling inflates the variance of the sample
        // correlation even though the population correlation is zero, so
        // the correlation baseline detects some fraction of these pairs.
        // The contract here is only that HSIC detects essentially all of
        // them and strictly dominates the baseline.
        assert!(hsic_hits >= seeds as usize - 1, "hsic edges {hsic_hits}/{seeds}");
        assert!(corr_hits < hsic_hits, "corr edges {corr_hits} vs hsic {hsic_hits}");
    }

    #[test]
    fn graph_symmetry_via_single_evaluation() {
        let series = vec![
            ("a".to_string(), normal_series(150, 11)),
            ("b".to_string(), normal_series(150, 12)),
        ];
        let g1 = dependence_graph(&series, 0.999, &gauss_med(), &gauss_med(), 5).unwrap();
        let rev: Vec<_> = series.iter().cloned().rev().collect();
        let g2 = dependence_graph(&rev, 0.999, &gauss_med(), &gauss_med(), 5).unwrap();
        // one edge each (alpha near 1), same pair regardless of order
        assert_eq!(g1.hsic.edges.len(), 1);
        assert_eq!(g2.hsic.edges.len(), 1);
    }

    #[test]
    fn dot_output_shape() {
        let g = DependenceGraph {
            method: TestMethod::ShiftHsic,
            alpha: 0.05,
            nodes: vec!["a".into(), "b".into()],
            edges: vec![GraphEdge {
                a: "a".into(),
                b: "b".into(),
                p_value: 0.01,
            }],
        };
        let dot = g.to_dot();
        assert!(dot.starts_with("graph"));
        assert!(dot.contains("\"a\" -- \"b\""));
        assert!(dot.ends_with("}\n"));
    }

    #[test]
    fn serial_dependence_detects_ar() {
        let mut hits = 0;
        let seeds = 10;
        for seed in 0..seeds {
            let mut rng = substream(4000 + seed, &[]);
            let mut x = Vec::with_capacity(400);
            let mut v = 0.0;
            for _ in 0..400 {
                let e: f64 = StandardNormal.sample(&mut rng);
                v = 0.9 * v + e;
                x.push(v);
            }
            let p = serial_dependence_check(&x, 1, &gauss_med(), seed).unwrap();
            if p[0] < 0.05 {
                hits += 1;
            }
        }
        assert!(hits * 10 >= seeds * 9, "AR(0.9) lag-1 detected in {hits}/{seeds}");
    }

    #[test]
    fn serial_dependence_constant_run_degenerates() {
        let x = vec![3.0; 200];
        assert!(matches!(
            serial_dependence_check(&x, 2, &gauss_med(), 0),
            Err(Error::DegenerateSeries(_))
        ));
    }

    #[test]
    fn scan_lag_bound_enforced() {
        let x = normal_series(100, 13);
        let y = normal_series(100, 14);
        let pair = SeriesPair::new(x, y).unwrap();
        assert!(residual_lag_scan(
            &pair,
            2,
            25,
            &[TestMethod::ShiftHsic],
            &gauss_med(),
            &gauss_med(),
            0
        )
        .is_err());
    }

    #[test]
    fn csv_export_shape() {
        let r = LagScanResult {
            lags: vec![0, 1],
            methods: vec![TestMethod::ShiftHsic, TestMethod::Correlation],
            p_values: vec![vec![0.5, 0.6], vec![0.01, 0.9]],
            coefficients: vec![1.0],
        };
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "lag,method,p_value");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0,shift-hsic,"));
        assert!(lines[4].starts_with("1,correlation,"));
    }
}
