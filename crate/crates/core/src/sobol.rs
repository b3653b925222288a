//! Sobol indices from expansion coefficients, and a Monte Carlo
//! pick-freeze oracle (Saltelli first-order, Jansen total).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::models::{eval_uncached, sample_inputs, Model};
use crate::orthopoly::VariableSpec;
use crate::pce::Expansion;

/// Relative contribution below which a subset is left out of the report.
const OMIT_BELOW: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct SobolReport {
    pub mean: f64,
    pub variance: f64,
    /// Index per variable subset (sorted 0-based positions). Absent means 0.
    pub subset_indices: BTreeMap<Vec<usize>, f64>,
    pub total_indices: Vec<f64>,
    /// Standard errors of the singleton entries, Monte Carlo only.
    pub first_order_se: Option<Vec<f64>>,
    pub total_se: Option<Vec<f64>>,
}

impl SobolReport {
    pub fn dim(&self) -> usize {
        self.total_indices.len()
    }

    pub fn subset(&self, subset: &[usize]) -> f64 {
        self.subset_indices.get(subset).copied().unwrap_or(0.0)
    }

    pub fn first_order(&self, i: usize) -> f64 {
        self.subset(&[i])
    }

    pub fn first_order_all(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.first_order(i)).collect()
    }
}

/// Variance of `e`, rejecting expansions whose variance is zero up to
/// round-off relative to the mean.
fn checked_variance(e: &Expansion) -> Result<f64> {
    let var = e.variance();
    if !(var > 0.0) || var.sqrt() <= 1e-12 * e.mean().abs() {
        return Err(Error::Degenerate(format!(
            "expansion variance {var:e} is zero relative to mean {:e}; Sobol indices are undefined",
            e.mean()
        )));
    }
    Ok(var)
}

/// `SU` of the set of multi-indices non-zero exactly on `subset`.
pub fn subset_index(e: &Expansion, subset: &[usize]) -> Result<f64> {
    let var = checked_variance(e)?;
    let mut want: Vec<usize> = subset.to_vec();
    want.sort_unstable();
    want.dedup();
    if want.is_empty() {
        return Err(Error::Degenerate("empty variable subset".into()));
    }
    if let Some(&bad) = want.iter().find(|&&i| i >= e.dim()) {
        return Err(Error::DimensionMismatch { expected: e.dim(), got: bad + 1 });
    }
    let partial: f64 = e
        .terms()
        .filter(|(phi, _)| phi.support() == want)
        .map(|(_, t)| t.coeff * t.coeff * t.norm_sq)
        .sum();
    Ok(partial / var)
}

/// Partial variance of every subset with a contributing basis, normalized.
pub fn all_indices(e: &Expansion) -> Result<SobolReport> {
    let var = checked_variance(e)?;
    let mut partials: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for (phi, t) in e.terms() {
        if phi.is_zero() {
            continue;
        }
        *partials.entry(phi.support()).or_default() += t.coeff * t.coeff * t.norm_sq;
    }
    let subset_indices = partials
        .into_iter()
        .filter(|(_, d)| *d >= OMIT_BELOW * var)
        .map(|(s, d)| (s, d / var))
        .collect();
    Ok(SobolReport {
        mean: e.mean(),
        variance: var,
        subset_indices,
        total_indices: total_indices(e)?,
        first_order_se: None,
        total_se: None,
    })
}

/// `SU^T_i`: contributions of every basis with `phi_i != 0`.
pub fn total_indices(e: &Expansion) -> Result<Vec<f64>> {
    let var = checked_variance(e)?;
    let mut totals = vec![0.0; e.dim()];
    for (phi, t) in e.terms() {
        let contrib = t.coeff * t.coeff * t.norm_sq;
        for i in phi.support() {
            totals[i] += contrib;
        }
    }
    Ok(totals.into_iter().map(|d| d / var).collect())
}

fn mean_and_se(terms: &[f64]) -> (f64, f64) {
    let n = terms.len() as f64;
    let mean = terms.iter().sum::<f64>() / n;
    let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo first-order and total indices from `n_base * (dim + 2)` model
/// evaluations, with standard errors.
pub fn mc_sobol(model: &dyn Model, specs: &[VariableSpec], n_base: usize, seed: u64) -> Result<SobolReport> {
    if n_base < 2 {
        return Err(Error::Config("Monte Carlo Sobol needs at least 2 base samples".into()));
    }
    let dim = specs.len();
    if model.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: model.dim() });
    }
    let mut rows = sample_inputs(specs, 2 * n_base, seed);
    let b_rows = rows.split_off(n_base);
    let a_rows = rows;

    let f_a = eval_uncached(model, &a_rows)?;
    let f_b = eval_uncached(model, &b_rows)?;

    let all: Vec<f64> = f_a.iter().chain(&f_b).copied().collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let var = all.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (all.len() as f64 - 1.0);
    if !(var > 0.0) {
        return Err(Error::Degenerate("sample variance is zero; Sobol indices are undefined".into()));
    }

    let mut subset_indices = BTreeMap::new();
    let mut first_se = Vec::with_capacity(dim);
    let mut totals = Vec::with_capacity(dim);
    let mut total_se = Vec::with_capacity(dim);
    for i in 0..dim {
        let mixed: Vec<Vec<f64>> = a_rows
            .iter()
            .zip(&b_rows)
            .map(|(a, b)| {
                let mut x = a.clone();
                x[i] = b[i];
                x
            })
            .collect();
        let f_ab = eval_uncached(model, &mixed)?;

        let first: Vec<f64> = (0..n_base).map(|j| f_b[j] * (f_ab[j] - f_a[j])).collect();
        let total: Vec<f64> = (0..n_base).map(|j| 0.5 * (f_a[j] - f_ab[j]).powi(2)).collect();
        let (s, se) = mean_and_se(&first);
        let (st, st_se) = mean_and_se(&total);
        subset_indices.insert(vec![i], s / var);
        first_se.push(se / var);
        totals.push(st / var);
        total_se.push(st_se / var);
    }

    Ok(SobolReport {
        mean,
        variance: var,
        subset_indices,
        total_indices: totals,
        first_order_se: Some(first_se),
        total_se: Some(total_se),
    })
}
