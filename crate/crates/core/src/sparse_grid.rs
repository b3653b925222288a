//! Isotropic Smolyak sparse grids built from Gauss rules with the `2m + 1`
//! growth rule (1, 3, 7, 15, ... points per level).
//!
//! Levels are counted from 0. The grid is the combination-coefficient form
//! `sum_{w-n+1 <= |l| <= w} (-1)^(w-|l|) C(n-1, w-|l|) Q_l`, with nodes shared
//! between tensor terms merged after rounding to `1e-12`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orthopoly::{gauss_rule, GaussRule, PolyFamily, VariableSpec};

/// Tuple of non-negative integers; used both as a polynomial degree vector and
/// as a sparse-grid level vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    pub fn zeros(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `|l|`, the entry sum.
    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0)
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().copied()
    }

    /// Positions with a non-zero entry, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, &v)| v > 0).map(|(i, _)| i).collect()
    }
}

impl std::ops::Index<usize> for MultiIndex {
    type Output = u32;

    fn index(&self, i: usize) -> &u32 {
        &self.0[i]
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex(v)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str(")")
    }
}

/// Number of Gauss points at `level`: `m(0) = 1`, `m(l) = 2 m(l-1) + 1`.
pub fn growth(level: u32) -> usize {
    (1usize << (level + 1)) - 1
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// All multi-indices of length `n` with `lo <= |l| <= hi`, sorted.
pub fn indices_with_total(n: usize, lo: u32, hi: u32) -> Vec<MultiIndex> {
    fn rec(pos: usize, remaining: u32, cur: &mut Vec<u32>, lo: u32, hi: u32, out: &mut Vec<MultiIndex>) {
        if pos == cur.len() {
            let used = hi - remaining;
            if used >= lo {
                out.push(MultiIndex(cur.clone()));
            }
            return;
        }
        for v in 0..=remaining {
            cur[pos] = v;
            rec(pos + 1, remaining - v, cur, lo, hi, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::new();
    if lo <= hi {
        rec(0, hi, &mut vec![0; n], lo, hi, &mut out);
    }
    out.sort();
    out
}

/// A tensor level vector with its Smolyak combination coefficient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelTerm {
    pub levels: MultiIndex,
    pub coeff: i64,
}

/// Smolyak combination terms for dimension `n` at level `w`, sorted by levels.
pub fn level_terms(n: usize, w: u32) -> Vec<LevelTerm> {
    assert!(n >= 1);
    let lo = (w as i64 - n as i64 + 1).max(0) as u32;
    indices_with_total(n, lo, w)
        .into_iter()
        .map(|levels| {
            let gap = (w - levels.total()) as u64;
            let mag = binomial(n as u64 - 1, gap) as i64;
            let coeff = if gap % 2 == 0 { mag } else { -mag };
            LevelTerm { levels, coeff }
        })
        .collect()
}

/// Gauss rules for both families at levels `0..=max_level`.
#[derive(Debug, Clone)]
pub struct RuleBook {
    legendre: Vec<GaussRule>,
    hermite: Vec<GaussRule>,
}

impl RuleBook {
    pub fn new(max_level: u32) -> Result<Self> {
        let build = |family| (0..=max_level).map(|l| gauss_rule(family, growth(l))).collect::<Result<Vec<_>>>();
        Ok(RuleBook { legendre: build(PolyFamily::Legendre)?, hermite: build(PolyFamily::Hermite)? })
    }

    pub fn get(&self, family: PolyFamily, level: u32) -> &GaussRule {
        match family {
            PolyFamily::Legendre => &self.legendre[level as usize],
            PolyFamily::Hermite => &self.hermite[level as usize],
        }
    }

    pub fn max_level(&self) -> u32 {
        self.legendre.len() as u32 - 1
    }
}

/// Canonical rounded coordinates used to merge coincident nodes.
pub type NodeKey = Vec<i64>;

pub fn node_key(standard: &[f64]) -> NodeKey {
    standard.iter().map(|x| (x * 1e12).round() as i64).collect()
}

/// One tensor term of a grid and where its nodes landed in the merged list.
#[derive(Debug, Clone)]
pub struct GridTerm {
    pub levels: MultiIndex,
    pub coeff: i64,
    /// Global node index for each tensor node, row-major (last dimension fastest).
    pub node_ids: Vec<usize>,
}

/// Deduplicated nodes and accumulated weights of a tensor or Smolyak grid.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub specs: Vec<VariableSpec>,
    /// Smolyak level, or `None` for a single tensor grid.
    pub level: Option<u32>,
    /// Standard coordinates.
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub keys: Vec<NodeKey>,
    pub terms: Vec<GridTerm>,
    pub rules: RuleBook,
}

impl QuadratureGrid {
    pub fn dim(&self) -> usize {
        self.specs.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn physical_node(&self, i: usize) -> Vec<f64> {
        self.nodes[i].iter().zip(&self.specs).map(|(&x, s)| s.from_standard(x)).collect()
    }

    pub fn physical_nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.physical_node(i)).collect()
    }

    /// Weighted sum of values given in node order.
    pub fn integrate_values(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: values.len() });
        }
        Ok(self.weights.iter().zip(values).map(|(w, v)| w * v).sum())
    }

    /// Integrates `f` over the standard coordinates.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }

    fn build(specs: &[VariableSpec], level: Option<u32>, terms: Vec<LevelTerm>, rules: RuleBook) -> Self {
        let n = specs.len();
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut keys: Vec<NodeKey> = Vec::new();
        let mut lookup: HashMap<NodeKey, usize> = HashMap::new();
        let mut grid_terms = Vec::with_capacity(terms.len());

        for term in terms {
            let factors: Vec<&GaussRule> =
                (0..n).map(|j| rules.get(specs[j].family(), term.levels[j])).collect();
            let mut node_ids = Vec::new();
            for_each_tensor_point(&factors, |x, w| {
                let key = node_key(x);
                let id = *lookup.entry(key.clone()).or_insert_with(|| {
                    nodes.push(x.to_vec());
                    weights.push(0.0);
                    keys.push(key);
                    nodes.len() - 1
                });
                weights[id] += term.coeff as f64 * w;
                node_ids.push(id);
            });
            grid_terms.push(GridTerm { levels: term.levels, coeff: term.coeff, node_ids });
        }

        QuadratureGrid { specs: specs.to_vec(), level, nodes, weights, keys, terms: grid_terms, rules }
    }
}

/// Visits the points of a tensor product of 1D rules in row-major order.
pub fn for_each_tensor_point(factors: &[&GaussRule], mut visit: impl FnMut(&[f64], f64)) {
    let n = factors.len();
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    loop {
        let mut w = 1.0;
        for j in 0..n {
            x[j] = factors[j].points[idx[j]];
            w *= factors[j].weights[idx[j]];
        }
        visit(&x, w);
        let mut j = n;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < factors[j].len() {
                break;
            }
            idx[j] = 0;
        }
    }
}

fn check_specs(n: usize, specs: &[VariableSpec]) -> Result<()> {
    if specs.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: specs.len() });
    }
    specs.iter().try_for_each(VariableSpec::validate)
}

/// Full tensor grid of `gauss_rule(family_j, growth(levels_j))`.
pub fn tensor_grid(levels: &MultiIndex, specs: &[VariableSpec]) -> Result<QuadratureGrid> {
    check_specs(levels.len(), specs)?;
    let rules = RuleBook::new(levels.iter().max().unwrap_or(0))?;
    let term = LevelTerm { levels: levels.clone(), coeff: 1 };
    Ok(QuadratureGrid::build(specs, None, vec![term], rules))
}

/// Smolyak grid of level `w` over `specs`.
pub fn smolyak_grid(n: usize, w: u32, specs: &[VariableSpec]) -> Result<QuadratureGrid> {
    check_specs(n, specs)?;
    let rules = RuleBook::new(w)?;
    Ok(QuadratureGrid::build(specs, Some(w), level_terms(n, w), rules))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthopoly::VariableSpec;

    fn unif(n: usize) -> Vec<VariableSpec> {
        (0..n).map(|i| VariableSpec::uniform(format!("x{i}"), -1.0, 1.0).unwrap()).collect()
    }

    fn mixed(n: usize) -> Vec<VariableSpec> {
        (0..n)
            .map(|i| {
                if i % 2 == 0 {
                    VariableSpec::uniform(format!("x{i}"), 0.0, 3.0).unwrap()
                } else {
                    VariableSpec::normal(format!("x{i}"), 1.0, 2.0).unwrap()
                }
            })
            .collect()
    }

    #[test]
    fn growth_rule() {
        assert_eq!(growth(0), 1);
        assert_eq!(growth(1), 3);
        assert_eq!(growth(3), 15);
        for l in 1..8 {
            assert_eq!(growth(l), 2 * growth(l - 1) + 1);
        }
    }

    #[test]
    fn level_term_examples() {
        let t = level_terms(1, 2);
        assert_eq!(t, vec![LevelTerm { levels: vec![2].into(), coeff: 1 }]);

        let t = level_terms(2, 1);
        let mut got: Vec<_> = t.iter().map(|t| (t.levels.as_slice().to_vec(), t.coeff)).collect();
        got.sort();
        assert_eq!(got, vec![(vec![0, 0], -1), (vec![0, 1], 1), (vec![1, 0], 1)]);

        let t = level_terms(3, 0);
        assert_eq!(t, vec![LevelTerm { levels: vec![0, 0, 0].into(), coeff: 1 }]);
    }

    #[test]
    fn combination_coefficients_sum_to_one() {
        for n in 1..=8 {
            for w in 0..=5 {
                let s: i64 = level_terms(n, w).iter().map(|t| t.coeff).sum();
                assert_eq!(s, 1, "n={n} w={w}");
            }
        }
    }

    #[test]
    fn tensor_grid_examples() {
        let g = tensor_grid(&vec![0, 0].into(), &unif(2)).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.nodes[0], vec![0.0, 0.0]);
        assert_eq!(g.weights, vec![1.0]);

        let g = tensor_grid(&vec![1, 0].into(), &unif(2)).unwrap();
        assert_eq!(g.len(), 3);
        for (w, want) in g.weights.iter().zip([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0]) {
            assert!((w - want).abs() < 1e-15);
        }

        let g = tensor_grid(&vec![1, 1].into(), &unif(2)).unwrap();
        assert_eq!(g.len(), 9);
        let r = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
        for i in 0..3 {
            for j in 0..3 {
                assert!((g.weights[3 * i + j] - r[i] * r[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn smolyak_node_counts() {
        assert_eq!(smolyak_grid(2, 0, &unif(2)).unwrap().len(), 1);
        let g = smolyak_grid(2, 1, &unif(2)).unwrap();
        assert_eq!(g.len(), 5);
        assert!(g.nodes.iter().all(|x| x[0] == 0.0 || x[1] == 0.0));
        assert_eq!(smolyak_grid(8, 1, &unif(8)).unwrap().len(), 17);
    }

    #[test]
    fn weights_sum_to_one_and_keys_unique() {
        for n in 1..=4 {
            for w in 0..=4 {
                let g = smolyak_grid(n, w, &mixed(n)).unwrap();
                let total: f64 = g.weights.iter().sum();
                assert!((total - 1.0).abs() < 1e-10, "n={n} w={w} total={total}");
                let mut keys = g.keys.clone();
                keys.sort();
                keys.dedup();
                assert_eq!(keys.len(), g.len());
            }
        }
    }

    #[test]
    fn rejects_mismatched_specs() {
        assert!(matches!(smolyak_grid(3, 1, &unif(2)), Err(Error::DimensionMismatch { .. })));
    }

    /// Independent difference-form construction: `sum_{|l| <= w} Delta_l`, each
    /// difference expanded by inclusion-exclusion over the unit cube of offsets.
    fn difference_form_integral(n: usize, w: u32, specs: &[VariableSpec], f: &dyn Fn(&[f64]) -> f64) -> f64 {
        let rules = RuleBook::new(w).unwrap();
        let mut total = 0.0;
        for l in indices_with_total(n, 0, w) {
            for mask in 0u32..(1 << n) {
                let mut shifted = Vec::with_capacity(n);
                let mut valid = true;
                for j in 0..n {
                    let drop = (mask >> j) & 1;
                    if l[j] < drop {
                        valid = false;
                        break;
                    }
                    shifted.push(l[j] - drop);
                }
                if !valid {
                    continue;
                }
                let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                let factors: Vec<&GaussRule> = (0..n).map(|j| rules.get(specs[j].family(), shifted[j])).collect();
                let mut q = 0.0;
                for_each_tensor_point(&factors, |x, wt| q += wt * f(x));
                total += sign * q;
            }
        }
        total
    }

    #[test]
    fn matches_difference_form() {
        let funcs: Vec<Box<dyn Fn(&[f64]) -> f64>> = vec![
            Box::new(|x: &[f64]| x.iter().map(|v| (1.3 * v).cos()).product()),
            Box::new(|x: &[f64]| (x.iter().sum::<f64>() * 0.4).exp()),
            Box::new(|x: &[f64]| x.iter().map(|v| v.powi(4) + v).sum::<f64>() + x[0] * x[x.len() - 1].powi(3)),
        ];
        for n in 1..=3 {
            for w in 0..=3 {
                let specs = mixed(n);
                let g = smolyak_grid(n, w, &specs).unwrap();
                for f in &funcs {
                    let a = g.integrate(|x| f(x));
                    let b = difference_form_integral(n, w, &specs, f.as_ref());
                    assert!((a - b).abs() < 1e-12 * b.abs().max(1.0), "n={n} w={w} {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn dedup_preserves_sum() {
        let specs = mixed(3);
        let g = smolyak_grid(3, 3, &specs).unwrap();
        let f = |x: &[f64]| (0.3 * x[0] - 0.2 * x[1] + 0.1 * x[2]).sin() + 1.0;
        let merged = g.integrate(f);
        let mut raw = 0.0;
        for term in &g.terms {
            let factors: Vec<&GaussRule> =
                (0..3).map(|j| g.rules.get(specs[j].family(), term.levels[j])).collect();
            for_each_tensor_point(&factors, |x, w| raw += term.coeff as f64 * w * f(x));
        }
        assert!((merged - raw).abs() < 1e-12);
    }

    #[test]
    fn exact_for_low_degree_products() {
        // with levels summing to w, x^(2 m(w) - 1) in a single coordinate is exact
        let specs = unif(3);
        let g = smolyak_grid(3, 2, &specs).unwrap();
        let v = g.integrate(|x| x[0].powi(12));
        assert!((v - 1.0 / 13.0).abs() < 1e-13);
        let v = g.integrate(|x| x[0].powi(2) * x[1].powi(4));
        assert!((v - 1.0 / 15.0).abs() < 1e-13);
    }
}
