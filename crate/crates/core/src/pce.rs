//! Polynomial chaos expansions: index sets, pseudo-spectral projection on
//! sparse grids, evaluation and moments.
//!
//! Projection is assembled subspace by subspace: each Smolyak tensor term `l`
//! projects onto the tensor basis `{phi : phi_j <= m(l_j) - 1}` using its own
//! Gauss rule, and the per-term coefficient tables are summed with the
//! combination coefficients. Since an `m`-point rule is exact to degree
//! `2m - 1`, every `Psi_phi^2` in a term's basis is integrated exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orthopoly::{eval_all, norm_sq, PolyFamily, VariableSpec};
use crate::sparse_grid::{growth, indices_with_total, smolyak_grid, GridTerm, MultiIndex, QuadratureGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    HF,
    LF,
    Correction,
    Combined,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::HF => "HF",
            Provenance::LF => "LF",
            Provenance::Correction => "CR",
            Provenance::Combined => "MF",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub coeff: f64,
    /// `<Psi_phi^2>`, product of the 1D norms.
    pub norm_sq: f64,
}

/// Coefficient table over an unnormalized product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    specs: Vec<VariableSpec>,
    terms: BTreeMap<MultiIndex, Term>,
    provenance: Provenance,
}

pub fn basis_norm_sq(specs: &[VariableSpec], phi: &MultiIndex) -> f64 {
    specs.iter().zip(phi.iter()).map(|(s, k)| norm_sq(s.family(), k as usize)).product()
}

impl Expansion {
    /// Builds an expansion from raw coefficients; norms are derived from `specs`.
    pub fn from_coefficients(
        specs: Vec<VariableSpec>,
        coeffs: impl IntoIterator<Item = (MultiIndex, f64)>,
        provenance: Provenance,
    ) -> Result<Self> {
        let n = specs.len();
        let mut terms = BTreeMap::new();
        for (phi, coeff) in coeffs {
            if phi.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: phi.len() });
            }
            let norm_sq = basis_norm_sq(&specs, &phi);
            terms.entry(phi).or_insert(Term { coeff: 0.0, norm_sq }).coeff += coeff;
        }
        terms.entry(MultiIndex::zeros(n)).or_insert(Term { coeff: 0.0, norm_sq: 1.0 });
        Ok(Expansion { specs, terms, provenance })
    }

    pub fn constant(specs: Vec<VariableSpec>, value: f64, provenance: Provenance) -> Self {
        let n = specs.len();
        Self::from_coefficients(specs, [(MultiIndex::zeros(n), value)], provenance)
            .expect("zero index always matches dimension")
    }

    pub fn dim(&self) -> usize {
        self.specs.len()
    }

    pub fn specs(&self) -> &[VariableSpec] {
        &self.specs
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Term)> {
        self.terms.iter()
    }

    pub fn support(&self) -> BTreeSet<MultiIndex> {
        self.terms.keys().cloned().collect()
    }

    pub fn coeff(&self, phi: &MultiIndex) -> f64 {
        self.terms.get(phi).map_or(0.0, |t| t.coeff)
    }

    pub fn norm_sq(&self, phi: &MultiIndex) -> Option<f64> {
        self.terms.get(phi).map(|t| t.norm_sq)
    }

    /// First coefficient.
    pub fn mean(&self) -> f64 {
        self.coeff(&MultiIndex::zeros(self.dim()))
    }

    /// `sum_{phi != 0} alpha_phi^2 <Psi_phi^2>`.
    pub fn variance(&self) -> f64 {
        self.terms.iter().filter(|(phi, _)| !phi.is_zero()).map(|(_, t)| t.coeff * t.coeff * t.norm_sq).sum()
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Evaluates the surrogate at a physical input.
    pub fn evaluate(&self, xi: &[f64]) -> Result<f64> {
        let n = self.dim();
        if xi.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: xi.len() });
        }
        let mut max_deg = vec![0usize; n];
        for phi in self.terms.keys() {
            for (j, k) in phi.iter().enumerate() {
                max_deg[j] = max_deg[j].max(k as usize);
            }
        }
        let tables: Vec<Vec<f64>> = (0..n)
            .map(|j| eval_all(self.specs[j].family(), max_deg[j], self.specs[j].to_standard(xi[j])))
            .collect();
        Ok(self
            .terms
            .iter()
            .map(|(phi, t)| t.coeff * phi.iter().enumerate().map(|(j, k)| tables[j][k as usize]).product::<f64>())
            .sum())
    }

    /// Coefficientwise sum; the union of supports.
    pub fn add(&self, other: &Expansion, provenance: Provenance) -> Result<Expansion> {
        if self.specs != other.specs {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        let mut terms = self.terms.clone();
        for (phi, t) in &other.terms {
            terms.entry(phi.clone()).or_insert(Term { coeff: 0.0, norm_sq: t.norm_sq }).coeff += t.coeff;
        }
        Ok(Expansion { specs: self.specs.clone(), terms, provenance })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexSetMode {
    TensorProduct(MultiIndex),
    TotalOrder(u32),
    SparseGrid(u32),
}

pub fn index_set(mode: &IndexSetMode, n: usize) -> BTreeSet<MultiIndex> {
    match mode {
        IndexSetMode::TensorProduct(p) => {
            assert_eq!(p.len(), n, "order vector must have one entry per dimension");
            let caps: Vec<u32> = p.iter().collect();
            box_indices(&caps).into_iter().collect()
        }
        IndexSetMode::TotalOrder(p) => indices_with_total(n, 0, *p).into_iter().collect(),
        IndexSetMode::SparseGrid(w) => {
            let mut out = BTreeSet::new();
            for l in indices_with_total(n, *w, *w) {
                let caps: Vec<u32> = l.iter().map(|lj| growth(lj) as u32 - 1).collect();
                out.extend(box_indices(&caps));
            }
            out
        }
    }
}

/// `{phi : phi_j <= caps_j}` in row-major order.
fn box_indices(caps: &[u32]) -> Vec<MultiIndex> {
    let n = caps.len();
    let mut out = Vec::new();
    let mut cur = vec![0u32; n];
    loop {
        out.push(MultiIndex::new(cur.clone()));
        let mut j = n;
        loop {
            if j == 0 {
                return out;
            }
            j -= 1;
            cur[j] += 1;
            if cur[j] <= caps[j] {
                break;
            }
            cur[j] = 0;
        }
    }
}

/// `Psi_k(x_i)` for `k, i < m(level)`, stored `[k * m + i]`.
fn poly_table(family: PolyFamily, points: &[f64]) -> Vec<f64> {
    let m = points.len();
    let mut table = vec![0.0; m * m];
    for (i, &x) in points.iter().enumerate() {
        for (k, v) in eval_all(family, m - 1, x).into_iter().enumerate() {
            table[k * m + i] = v;
        }
    }
    table
}

/// Applies `matrix` (square, `[k * m + t]`) along `axis` of a row-major tensor.
fn contract_axis(data: &[f64], dims: &[usize], axis: usize, matrix: &[f64]) -> Vec<f64> {
    let m = dims[axis];
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let mut out = vec![0.0; data.len()];
    for o in 0..outer {
        let base = o * m * inner;
        for k in 0..m {
            let row = &matrix[k * m..(k + 1) * m];
            let dst = &mut out[base + k * inner..base + (k + 1) * inner];
            for (t, &a) in row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let src = &data[base + t * inner..base + (t + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
    }
    out
}

struct Tables {
    /// `[family][level]`
    legendre: Vec<Vec<f64>>,
    hermite: Vec<Vec<f64>>,
}

impl Tables {
    fn get(&self, family: PolyFamily, level: u32) -> &[f64] {
        match family {
            PolyFamily::Legendre => &self.legendre[level as usize],
            PolyFamily::Hermite => &self.hermite[level as usize],
        }
    }
}

/// Coefficients of one tensor term, already scaled by its combination coefficient.
fn project_term(grid: &QuadratureGrid, tables: &Tables, term: &GridTerm, values: &[f64]) -> Vec<(MultiIndex, f64)> {
    let specs = &grid.specs;
    let n = specs.len();
    let dims: Vec<usize> = term.levels.iter().map(growth).collect();
    let rules: Vec<_> = (0..n).map(|j| grid.rules.get(specs[j].family(), term.levels[j])).collect();

    // f * tensor weight, row-major
    let mut data = Vec::with_capacity(term.node_ids.len());
    let mut idx = vec![0usize; n];
    for &id in &term.node_ids {
        let w: f64 = (0..n).map(|j| rules[j].weights[idx[j]]).product();
        data.push(values[id] * w);
        let mut j = n;
        while j > 0 {
            j -= 1;
            idx[j] += 1;
            if idx[j] < dims[j] {
                break;
            }
            idx[j] = 0;
        }
    }

    for j in 0..n {
        if dims[j] > 1 {
            data = contract_axis(&data, &dims, j, tables.get(specs[j].family(), term.levels[j]));
        }
    }

    let caps: Vec<u32> = dims.iter().map(|&m| m as u32 - 1).collect();
    let scale = term.coeff as f64;
    box_indices(&caps)
        .into_iter()
        .zip(data)
        .map(|(phi, proj)| {
            let coeff = scale * proj / basis_norm_sq(specs, &phi);
            (phi, coeff)
        })
        .collect()
}

/// Pseudo-spectral projection of node values (in grid node order).
pub fn project(grid: &QuadratureGrid, values: &[f64], provenance: Provenance) -> Result<Expansion> {
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), got: values.len() });
    }
    let max_level = grid.rules.max_level();
    let build = |family| (0..=max_level).map(|l| poly_table(family, &grid.rules.get(family, l).points)).collect();
    let tables = Tables { legendre: build(PolyFamily::Legendre), hermite: build(PolyFamily::Hermite) };

    #[cfg(feature = "parallel")]
    let partials: Vec<Vec<(MultiIndex, f64)>> = {
        use rayon::prelude::*;
        grid.terms.par_iter().map(|t| project_term(grid, &tables, t, values)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<Vec<(MultiIndex, f64)>> =
        grid.terms.iter().map(|t| project_term(grid, &tables, t, values)).collect();

    // terms are sorted by level, so this reduction order is fixed
    Expansion::from_coefficients(grid.specs.clone(), partials.into_iter().flatten(), provenance)
}

/// Projects a function of the physical inputs on a fresh level-`w` grid.
pub fn project_fn(
    specs: &[VariableSpec],
    w: u32,
    provenance: Provenance,
    f: impl Fn(&[f64]) -> f64,
) -> Result<Expansion> {
    let grid = smolyak_grid(specs.len(), w, specs)?;
    let values: Vec<f64> = (0..grid.len()).map(|i| f(&grid.physical_node(i))).collect();
    project(&grid, &values, provenance)
}

/// Projection when the caller only holds the node values and the grid parameters.
pub fn project_values(values: &[f64], n: usize, w: u32, specs: &[VariableSpec]) -> Result<Expansion> {
    let grid = smolyak_grid(n, w, specs)?;
    project(&grid, values, Provenance::HF)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unif(n: usize) -> Vec<VariableSpec> {
        (0..n).map(|i| VariableSpec::uniform(format!("x{i}"), -1.0, 1.0).unwrap()).collect()
    }

    #[test]
    fn index_set_sizes() {
        assert_eq!(index_set(&IndexSetMode::TensorProduct(vec![1, 1].into()), 2).len(), 4);
        assert_eq!(index_set(&IndexSetMode::TensorProduct(vec![2, 0, 3].into()), 3).len(), 12);
        assert_eq!(index_set(&IndexSetMode::TotalOrder(2), 3).len(), 10);
        assert_eq!(index_set(&IndexSetMode::TotalOrder(3), 4).len(), 35);
        for n in 1..5 {
            let s = index_set(&IndexSetMode::SparseGrid(0), n);
            assert_eq!(s.len(), 1);
            assert!(s.iter().next().unwrap().is_zero());
        }
        // level 1 in 2D: the axis crosses of degree <= 2
        assert_eq!(index_set(&IndexSetMode::SparseGrid(1), 2).len(), 5);
    }

    #[test]
    fn constant_function() {
        for (n, w) in [(1, 0), (2, 2), (3, 3)] {
            let e = project_fn(&unif(n), w, Provenance::HF, |_| 3.5).unwrap();
            assert!((e.mean() - 3.5).abs() < 1e-12);
            for (phi, t) in e.terms() {
                if !phi.is_zero() {
                    assert!(t.coeff.abs() < 1e-12);
                }
            }
            assert!(e.variance() < 1e-20);
        }
    }

    #[test]
    fn linear_function() {
        let e = project_fn(&unif(2), 1, Provenance::HF, |x| x[0]).unwrap();
        assert!((e.coeff(&vec![1, 0].into()) - 1.0).abs() < 1e-12);
        for (phi, t) in e.terms() {
            if phi.as_slice() != [1, 0] {
                assert!(t.coeff.abs() < 1e-12);
            }
        }
        assert!(e.mean().abs() < 1e-14);
        assert!((e.variance() - 1.0 / 3.0).abs() < 1e-12);
        let spec = VariableSpec::uniform("x", 2.0, 4.0).unwrap();
        let e = project_fn(&[spec.clone(), spec], 1, Provenance::HF, |x| x[0] - 3.0).unwrap();
        assert!((e.evaluate(&[3.3, 2.5]).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn support_is_sparse_index_set() {
        let specs = unif(3);
        for w in 0..4 {
            let e = project_fn(&specs, w, Provenance::HF, |x| (x[0] + 2.0 * x[1] * x[2]).exp()).unwrap();
            assert_eq!(e.support(), index_set(&IndexSetMode::SparseGrid(w), 3));
        }
    }

    #[test]
    fn constant_expansion_evaluates_to_constant() {
        let e = Expansion::constant(unif(2), 2.25, Provenance::HF);
        assert_eq!(e.evaluate(&[0.1, -0.9]).unwrap(), 2.25);
        assert_eq!(e.variance(), 0.0);
        assert!(e.evaluate(&[0.1]).is_err());
    }

    #[test]
    fn mean_equals_smolyak_integral() {
        let specs = vec![
            VariableSpec::uniform("a", 0.0, 1.0).unwrap(),
            VariableSpec::normal("b", 2.0, 0.5).unwrap(),
            VariableSpec::uniform("c", -2.0, 5.0).unwrap(),
        ];
        let grid = smolyak_grid(3, 3, &specs).unwrap();
        let f = |x: &[f64]| (x[0] * x[1]).sin() + x[2] * x[2] / 10.0;
        let values: Vec<f64> = (0..grid.len()).map(|i| f(&grid.physical_node(i))).collect();
        let e = project(&grid, &values, Provenance::HF).unwrap();
        let q = grid.integrate_values(&values).unwrap();
        assert!((e.mean() - q).abs() < 1e-13);
    }

    #[test]
    fn global_rule_agrees_on_low_order_coefficients() {
        // for a polynomial inside the exactness span, applying the global
        // Smolyak rule to f * Psi_phi agrees with subspace assembly on
        // low-order bases
        let specs = unif(2);
        let grid = smolyak_grid(2, 3, &specs).unwrap();
        let f = |x: &[f64]| 1.0 + x[0] - 2.0 * x[1] * x[1] + 0.5 * x[0] * x[1];
        let values: Vec<f64> = (0..grid.len()).map(|i| f(&grid.physical_node(i))).collect();
        let e = project(&grid, &values, Provenance::HF).unwrap();
        for phi in [vec![0, 0], vec![1, 0], vec![0, 2], vec![1, 1], vec![0, 1]] {
            let phi: MultiIndex = phi.into();
            let global = grid.integrate(|x| {
                f(x) * phi.iter().enumerate().map(|(j, k)| crate::orthopoly::eval_poly(specs[j].family(), k as usize, x[j])).product::<f64>()
            }) / basis_norm_sq(&specs, &phi);
            assert!((global - e.coeff(&phi)).abs() < 1e-12, "{phi}");
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let grid = smolyak_grid(2, 1, &unif(2)).unwrap();
        assert!(matches!(project(&grid, &[1.0; 3], Provenance::HF), Err(Error::LengthMismatch { expected: 5, got: 3 })));
    }

    #[test]
    fn contract_axis_matches_naive() {
        let dims = [2, 3, 2];
        let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.5 - 1.0).collect();
        let matrix: Vec<f64> = (0..9).map(|i| (i as f64).sin()).collect();
        let out = contract_axis(&data, &dims, 1, &matrix);
        for a in 0..2 {
            for k in 0..3 {
                for c in 0..2 {
                    let want: f64 = (0..3).map(|t| matrix[k * 3 + t] * data[a * 6 + t * 2 + c]).sum();
                    assert!((out[a * 6 + k * 2 + c] - want).abs() < 1e-14);
                }
            }
        }
    }
}
