//! The HSIC V-statistic, its symmetric 4-argument core, and brute-force
//! oracle evaluations.
//!
//! The production path is the O(n^2) trace formula
//! `V = n^{-2} tr(HKH L)`, evaluated as the elementwise inner product of
//! the two centered Gram matrices. The O(n^4) quadruple sum over the core
//! exists only as a cross-check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{center, gram, GramMatrix, KernelSpec, ResolvedKernel};

/// Largest n accepted by [`hsic_v_bruteforce`].
pub const BRUTEFORCE_MAX_N: usize = 14;

/// Two aligned real-valued sequences, the object under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub labels: Option<(String, String)>,
}

impl SeriesPair {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidInput(format!(
                "series lengths differ: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::EmptyInput("series pair".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("series contain non-finite values".into()));
        }
        Ok(SeriesPair { x, y, labels: None })
    }

    pub fn with_labels(mut self, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        self.labels = Some((x_label.into(), y_label.into()));
        self
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// An HSIC estimate. `value` is clamped to zero when roundoff produces a
/// tiny negative; the raw value is kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsicValue {
    pub value: f64,
    pub raw: f64,
    pub n: usize,
}

impl HsicValue {
    fn from_raw(raw: f64, n: usize) -> Self {
        HsicValue {
            value: raw.max(0.0),
            raw,
            n,
        }
    }
}

/// Resolve both kernels against the pair's series.
pub fn resolve_kernels(
    pair: &SeriesPair,
    kx: &KernelSpec,
    ky: &KernelSpec,
) -> Result<(ResolvedKernel, ResolvedKernel)> {
    Ok((kx.resolve(&pair.x)?, ky.resolve(&pair.y)?))
}

/// `n^{-2} tr(HKH L)` from a centered x-side Gram matrix and an
/// (uncentered or centered) y-side Gram matrix.
///
/// Because `HKH` is doubly centered, its elementwise inner product with
/// `L` equals the one with `HLH`, so the second centering is optional.
pub fn hsic_from_grams(kc: &GramMatrix, l: &GramMatrix) -> HsicValue {
    debug_assert!(kc.is_centered());
    let n = kc.n();
    let inner: f64 = kc
        .values()
        .iter()
        .zip(l.values())
        .map(|(a, b)| a * b)
        .sum();
    HsicValue::from_raw(inner / (n as f64 * n as f64), n)
}

/// The biased HSIC estimate `V(h, Z) = n^{-2} tr(HKHL)`.
pub fn hsic_v(pair: &SeriesPair, kx: &KernelSpec, ky: &KernelSpec) -> Result<HsicValue> {
    if pair.len() < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: pair.len(),
        });
    }
    let (rkx, rky) = resolve_kernels(pair, kx, ky)?;
    let kc = center(&gram(&pair.x, &rkx)?);
    let lc = center(&gram(&pair.y, &rky)?);
    Ok(hsic_from_grams(&kc, &lc))
}

/// The symmetric core of the HSIC V-statistic,
///
/// `h = (1/4!) sum_pi k(x_p1, x_p2) [ l(y_p1, y_p2) + l(y_p3, y_p4) - 2 l(y_p2, y_p3) ]`
///
/// over all 24 argument orderings. The orderings sharing the same first
/// two slots are grouped, which halves the work and, with the bracket
/// associated as below, makes `h(z, z, z, z')` cancel to a bitwise zero
/// instead of leaving ulp-level residue:
///
/// `h = (1/12) sum_{i != j} k_ij [ (l_ij - l_{j c1}) + (l_{c1 c2} - l_{j c2}) ]`
///
/// where `{c1, c2}` is the complement of `{i, j}` in `{0, 1, 2, 3}`.
pub fn core_h(z: &[(f64, f64); 4], kx: &ResolvedKernel, ky: &ResolvedKernel) -> f64 {
    let k = |a: usize, b: usize| kx.eval(z[a].0, z[b].0);
    let l = |a: usize, b: usize| ky.eval(z[a].1, z[b].1);
    let mut acc = 0.0;
    for i in 0..4usize {
        for j in (i + 1)..4 {
            let [c1, c2] = complement(i, j);
            let term = |a: usize, b: usize| {
                k(a, b) * ((l(a, b) - l(b, c1)) + (l(c1, c2) - l(b, c2)))
            };
            // Both orders of the pair are added together so that their
            // contributions cancel exactly when points coincide.
            acc += term(i, j) + term(j, i);
        }
    }
    acc / 12.0
}

fn complement(i: usize, j: usize) -> [usize; 2] {
    let mut out = [0usize; 2];
    let mut w = 0;
    for c in 0..4 {
        if c != i && c != j {
            out[w] = c;
            w += 1;
        }
    }
    out
}

/// O(n^4) oracle: `n^{-4}` times the sum of [`core_h`] over all ordered
/// index quadruples. Kernels are resolved exactly as in [`hsic_v`].
pub fn hsic_v_bruteforce(pair: &SeriesPair, kx: &KernelSpec, ky: &KernelSpec) -> Result<HsicValue> {
    let n = pair.len();
    if n > BRUTEFORCE_MAX_N {
        return Err(Error::TooLarge {
            n,
            max: BRUTEFORCE_MAX_N,
        });
    }
    if n < 2 {
        return Err(Error::TooShort { need: 2, got: n });
    }
    let (rkx, rky) = resolve_kernels(pair, kx, ky)?;
    let z: Vec<(f64, f64)> = pair.x.iter().copied().zip(pair.y.iter().copied()).collect();
    let mut acc = 0.0;
    for i1 in 0..n {
        for i2 in 0..n {
            for i3 in 0..n {
                for i4 in 0..n {
                    acc += core_h(&[z[i1], z[i2], z[i3], z[i4]], &rkx, &rky);
                }
            }
        }
    }
    let nf = n as f64;
    Ok(HsicValue::from_raw(acc / (nf * nf * nf * nf), n))
}

/// The empirical centered-product kernel `s(z_a, z_b) = (HKH)_ab (HLH)_ab`,
/// with population expectations replaced by empirical means.
pub fn s_kernel_empirical(
    pair: &SeriesPair,
    a: usize,
    b: usize,
    kx: &KernelSpec,
    ky: &KernelSpec,
) -> Result<f64> {
    if pair.len() < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: pair.len(),
        });
    }
    let (rkx, rky) = resolve_kernels(pair, kx, ky)?;
    let kc = center(&gram(&pair.x, &rkx)?);
    let lc = center(&gram(&pair.y, &rky)?);
    Ok(kc.get(a, b) * lc.get(a, b))
}
