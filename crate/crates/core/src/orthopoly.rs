//! One-dimensional orthogonal polynomial families and their Gauss rules.
//!
//! Everything lives in probabilists' normalization: the weight function is the
//! probability density of the standard variable (uniform on `[-1, 1]` with
//! density 1/2, or the standard normal), so quadrature weights sum to one and
//! `norm_sq` is an expectation.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolyFamily {
    /// Legendre `P_k` with `P_k(1) = 1`, orthogonal under the uniform density on `[-1, 1]`.
    Legendre,
    /// Probabilists' Hermite `He_k`, orthogonal under the standard normal density.
    Hermite,
}

impl PolyFamily {
    /// Monic recurrence coefficient `beta_k` (all `alpha_k` vanish for both
    /// families): `pi_{k+1} = x pi_k - beta_k pi_{k-1}`.
    fn beta(self, k: usize) -> f64 {
        let k = k as f64;
        match self {
            PolyFamily::Legendre => k * k / (4.0 * k * k - 1.0),
            PolyFamily::Hermite => k,
        }
    }
}

/// Evaluates the degree-`degree` polynomial of `family` at `x`.
pub fn eval_poly(family: PolyFamily, degree: usize, x: f64) -> f64 {
    if degree == 0 {
        return 1.0;
    }
    let (mut prev, mut cur) = (1.0, x);
    for k in 1..degree {
        let kf = k as f64;
        let next = match family {
            PolyFamily::Legendre => ((2.0 * kf + 1.0) * x * cur - kf * prev) / (kf + 1.0),
            PolyFamily::Hermite => x * cur - kf * prev,
        };
        prev = cur;
        cur = next;
    }
    cur
}

/// Values of degrees `0..=max_degree` at `x`, in one recurrence sweep.
pub fn eval_all(family: PolyFamily, max_degree: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(max_degree + 1);
    out.push(1.0);
    if max_degree == 0 {
        return out;
    }
    out.push(x);
    for k in 1..max_degree {
        let kf = k as f64;
        let next = match family {
            PolyFamily::Legendre => ((2.0 * kf + 1.0) * x * out[k] - kf * out[k - 1]) / (kf + 1.0),
            PolyFamily::Hermite => x * out[k] - kf * out[k - 1],
        };
        out.push(next);
    }
    out
}

/// `E[Psi_k^2]` under the family's probability density.
pub fn norm_sq(family: PolyFamily, degree: usize) -> f64 {
    match family {
        PolyFamily::Legendre => 1.0 / (2 * degree + 1) as f64,
        PolyFamily::Hermite => (1..=degree).fold(1.0, |acc, k| acc * k as f64),
    }
}

/// Gauss rule on the standard variable, probability-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

const NEWTON_TOL: f64 = 1e-14;

/// `m`-point Gauss rule for `family`, exact to degree `2m - 1`.
///
/// Nodes come from the eigenvalues of the Jacobi matrix (implicit QL), are
/// polished by Newton iteration on the orthonormal recurrence, and the weights
/// are the Christoffel numbers `1 / sum_k p_k(x)^2`.
pub fn gauss_rule(family: PolyFamily, m: usize) -> Result<GaussRule> {
    assert!(m >= 1, "a Gauss rule needs at least one point");
    if m == 1 {
        return Ok(GaussRule { points: vec![0.0], weights: vec![1.0] });
    }

    let mut diag = vec![0.0; m];
    let mut off: Vec<f64> = (1..m).map(|k| family.beta(k).sqrt()).collect();
    off.push(0.0);
    let mut first = vec![0.0; m];
    first[0] = 1.0;
    tridiagonal_ql(&mut diag, &mut off, &mut first)
        .ok_or(Error::QuadratureNoConvergence { family, points: m })?;

    let mut points = diag;
    points.sort_by(|a, b| a.total_cmp(b));

    let sqrt_beta: Vec<f64> = (0..=m).map(|k| if k == 0 { 0.0 } else { family.beta(k).sqrt() }).collect();
    let mut weights = Vec::with_capacity(m);
    for x in points.iter_mut() {
        let mut converged = false;
        for _ in 0..20 {
            let (p, dp, _) = orthonormal(&sqrt_beta, m, *x);
            let dx = p / dp;
            *x -= dx;
            if dx.abs() <= NEWTON_TOL * x.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::QuadratureNoConvergence { family, points: m });
        }
        let (_, _, sum_sq) = orthonormal(&sqrt_beta, m, *x);
        weights.push(1.0 / sum_sq);
    }

    // both densities are even, so enforce exact mirror symmetry
    for i in 0..m / 2 {
        let j = m - 1 - i;
        let x = 0.5 * (points[j] - points[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        points[i] = -x;
        points[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if m % 2 == 1 {
        points[m / 2] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }

    Ok(GaussRule { points, weights })
}

/// Orthonormal recurrence up to degree `m`: returns `(p_m(x), p_m'(x), sum_{k<m} p_k(x)^2)`.
fn orthonormal(sqrt_beta: &[f64], m: usize, x: f64) -> (f64, f64, f64) {
    let (mut p_prev, mut p) = (0.0, 1.0);
    let (mut d_prev, mut d) = (0.0, 0.0);
    let mut sum_sq = 0.0;
    for k in 0..m {
        sum_sq += p * p;
        let p_next = (x * p - sqrt_beta[k] * p_prev) / sqrt_beta[k + 1];
        let d_next = (p + x * d - sqrt_beta[k] * d_prev) / sqrt_beta[k + 1];
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, d, sum_sq)
}

/// Implicit QL with Wilkinson shifts on a symmetric tridiagonal matrix.
/// `diag` is overwritten with eigenvalues, `off[i]` couples rows `i` and `i+1`,
/// and `first` tracks the first row of the eigenvector matrix.
fn tridiagonal_ql(diag: &mut [f64], off: &mut [f64], first: &mut [f64]) -> Option<()> {
    let n = diag.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return None;
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                let z = first[i + 1];
                first[i + 1] = s * first[i] + c * z;
                first[i] = c * first[i] - s * z;
            }
            if underflow {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Some(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Distribution {
    Uniform { lower: f64, upper: f64 },
    Normal { mean: f64, std_dev: f64 },
}

/// One independent input random variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    #[serde(flatten)]
    pub dist: Distribution,
}

impl VariableSpec {
    pub fn uniform(name: impl Into<String>, lower: f64, upper: f64) -> Result<Self> {
        let spec = VariableSpec { name: name.into(), dist: Distribution::Uniform { lower, upper } };
        spec.validate()?;
        Ok(spec)
    }

    pub fn normal(name: impl Into<String>, mean: f64, std_dev: f64) -> Result<Self> {
        let spec = VariableSpec { name: name.into(), dist: Distribution::Normal { mean, std_dev } };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidVariable { name: self.name.clone(), reason: reason.into() };
        match self.dist {
            Distribution::Uniform { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite()) {
                    return Err(bad("uniform bounds must be finite"));
                }
                if lower >= upper {
                    return Err(bad("uniform requires lower < upper"));
                }
            }
            Distribution::Normal { mean, std_dev } => {
                if !(mean.is_finite() && std_dev.is_finite()) {
                    return Err(bad("normal parameters must be finite"));
                }
                if std_dev <= 0.0 {
                    return Err(bad("normal requires std_dev > 0"));
                }
            }
        }
        Ok(())
    }

    pub fn family(&self) -> PolyFamily {
        match self.dist {
            Distribution::Uniform { .. } => PolyFamily::Legendre,
            Distribution::Normal { .. } => PolyFamily::Hermite,
        }
    }

    pub fn to_standard(&self, physical: f64) -> f64 {
        match self.dist {
            Distribution::Uniform { lower, upper } => (2.0 * physical - lower - upper) / (upper - lower),
            Distribution::Normal { mean, std_dev } => (physical - mean) / std_dev,
        }
    }

    pub fn from_standard(&self, standard: f64) -> f64 {
        match self.dist {
            Distribution::Uniform { lower, upper } => 0.5 * (lower + upper) + 0.5 * (upper - lower) * standard,
            Distribution::Normal { mean, std_dev } => mean + std_dev * standard,
        }
    }

    pub fn mean(&self) -> f64 {
        match self.dist {
            Distribution::Uniform { lower, upper } => 0.5 * (lower + upper),
            Distribution::Normal { mean, .. } => mean,
        }
    }

    pub fn std_dev(&self) -> f64 {
        match self.dist {
            Distribution::Uniform { lower, upper } => (upper - lower) / 12f64.sqrt(),
            Distribution::Normal { std_dev, .. } => std_dev,
        }
    }

    /// Draws one physical sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let standard = match self.family() {
            PolyFamily::Legendre => rng.random_range(-1.0..1.0),
            PolyFamily::Hermite => rng.sample(StandardNormal),
        };
        self.from_standard(standard)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300) || (a - b).abs() < 1e-15
    }

    #[test]
    fn eval_poly_examples() {
        assert_eq!(eval_poly(PolyFamily::Legendre, 0, 0.37), 1.0);
        assert!((eval_poly(PolyFamily::Legendre, 2, 1.0) - 1.0).abs() < 1e-15);
        assert!((eval_poly(PolyFamily::Hermite, 3, 2.0) - 2.0).abs() < 1e-15);
        for k in 0..12 {
            assert!((eval_poly(PolyFamily::Legendre, k, 1.0) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn eval_all_matches_single() {
        for family in [PolyFamily::Legendre, PolyFamily::Hermite] {
            let all = eval_all(family, 9, 0.41);
            for (k, v) in all.iter().enumerate() {
                assert_eq!(*v, eval_poly(family, k, 0.41));
            }
        }
    }

    #[test]
    fn norm_sq_examples() {
        assert_eq!(norm_sq(PolyFamily::Legendre, 0), 1.0);
        assert!((norm_sq(PolyFamily::Legendre, 2) - 0.2).abs() < 1e-16);
        assert_eq!(norm_sq(PolyFamily::Hermite, 4), 24.0);
    }

    #[test]
    fn small_rules() {
        let r = gauss_rule(PolyFamily::Legendre, 1).unwrap();
        assert_eq!(r.points, vec![0.0]);
        assert_eq!(r.weights, vec![1.0]);

        let r = gauss_rule(PolyFamily::Legendre, 3).unwrap();
        let x = (0.6f64).sqrt();
        for (got, want) in r.points.iter().zip([-x, 0.0, x]) {
            assert!((got - want).abs() < 1e-15);
        }
        for (got, want) in r.weights.iter().zip([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0]) {
            assert!((got - want).abs() < 1e-15);
        }

        let r = gauss_rule(PolyFamily::Hermite, 3).unwrap();
        let x = 3f64.sqrt();
        for (got, want) in r.points.iter().zip([-x, 0.0, x]) {
            assert!((got - want).abs() < 1e-14);
        }
        for (got, want) in r.weights.iter().zip([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn hermite_seven_point_matches_reference() {
        // frozen from an independent Golub-Welsch implementation (numpy hermegauss)
        let points = [-3.7504397177257425, -2.366759410734541, -1.1544053947399682, 0.0];
        let weights = [0.000548268855972217, 0.03075712396758652, 0.2401231786050127, 0.45714285714285724];
        let r = gauss_rule(PolyFamily::Hermite, 7).unwrap();
        for i in 0..4 {
            assert!((r.points[i] - points[i]).abs() < 1e-13);
            assert!(close(r.weights[i], weights[i], 1e-12));
        }
    }

    #[test]
    fn rules_are_symmetric_and_normalized() {
        for family in [PolyFamily::Legendre, PolyFamily::Hermite] {
            for level in 0..7 {
                let m = (1usize << (level + 1)) - 1;
                let r = gauss_rule(family, m).unwrap();
                let total: f64 = r.weights.iter().sum();
                assert!((total - 1.0).abs() < 1e-12);
                assert!(r.points.windows(2).all(|w| w[0] < w[1]));
                for i in 0..m {
                    assert_eq!(r.points[i], -r.points[m - 1 - i]);
                    assert_eq!(r.weights[i], r.weights[m - 1 - i]);
                }
            }
        }
    }

    #[test]
    fn affine_maps() {
        let u = VariableSpec::uniform("u", 0.0, 2.0).unwrap();
        assert_eq!(u.to_standard(1.0), 0.0);
        let p = VariableSpec::uniform("p", -std::f64::consts::PI, std::f64::consts::PI).unwrap();
        assert!((p.to_standard(std::f64::consts::PI) - 1.0).abs() < 1e-15);
        let n = VariableSpec::normal("n", 500.0, 100.0).unwrap();
        assert_eq!(n.to_standard(700.0), 2.0);
        for x in [-3.0, -0.2, 0.0, 0.7, 5.0] {
            for s in [&u, &p, &n] {
                let back = s.to_standard(s.from_standard(x));
                assert!((back - x).abs() < 1e-14 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(VariableSpec::uniform("a", 1.0, 1.0).is_err());
        assert!(VariableSpec::uniform("a", 2.0, 1.0).is_err());
        assert!(VariableSpec::normal("a", 0.0, 0.0).is_err());
        assert!(VariableSpec::normal("a", 0.0, -1.0).is_err());
        assert!(VariableSpec::normal("a", f64::NAN, 1.0).is_err());
    }

    #[test]
    fn family_follows_distribution() {
        assert_eq!(VariableSpec::uniform("a", 0.0, 1.0).unwrap().family(), PolyFamily::Legendre);
        assert_eq!(VariableSpec::normal("a", 0.0, 1.0).unwrap().family(), PolyFamily::Hermite);
    }
}
