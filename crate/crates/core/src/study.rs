//! Evaluation apparatus: similarity and prediction metrics, Sobol error
//! metrics, the analytic Ishigami decomposition, convergence sweeps with cost
//! accounting, and coefficient-decay spectra.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mf_pce::{build_mf, build_single, MfConfig};
use crate::models::{eval_uncached, sample_inputs, EvalCache, Model, SharedStore};
use crate::orthopoly::VariableSpec;
use crate::pce::{Expansion, Provenance};
use crate::sobol::{all_indices, mc_sobol, SobolReport};

/// Default LF/HF cost ratios for cost-accounting sweeps.
pub const DEFAULT_RT_VALUES: [f64; 4] = [0.25, 0.125, 0.0625, 0.03125];

/// `|y_ref|` below this is skipped in relative-error sums.
const MARE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    /// Squared Pearson correlation.
    pub r2: f64,
    /// Mean absolute relative error over the non-skipped samples.
    pub mare: f64,
    /// Samples dropped from the MARE because the reference value was zero.
    pub skipped: usize,
}

/// `r^2_lh` and `MARE_lh` of LF responses against HF responses.
pub fn similarity(y_l: &[f64], y_h: &[f64]) -> Result<Similarity> {
    if y_l.len() != y_h.len() {
        return Err(Error::LengthMismatch { expected: y_h.len(), got: y_l.len() });
    }
    if y_h.len() < 2 {
        return Err(Error::Degenerate("need at least two samples".into()));
    }
    let n = y_h.len() as f64;
    let mean_h = y_h.iter().sum::<f64>() / n;
    let mean_l = y_l.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&h, &l) in y_h.iter().zip(y_l) {
        let dh = h - mean_h;
        let dl = l - mean_l;
        sxy += dh * dl;
        sxx += dh * dh;
        syy += dl * dl;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::Degenerate("constant response; correlation is undefined".into()));
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());

    let mut skipped = 0;
    let mut sum = 0.0;
    for (&h, &l) in y_h.iter().zip(y_l) {
        if h.abs() < MARE_FLOOR {
            skipped += 1;
            continue;
        }
        sum += ((l - h) / h).abs();
    }
    let used = y_h.len() - skipped;
    let mare = if used == 0 { f64::NAN } else { sum / used as f64 };
    Ok(Similarity { r2: r * r, mare, skipped })
}

/// `r^2` and `MARE` of surrogate predictions against true responses.
pub fn prediction_error(y_true: &[f64], y_pred: &[f64]) -> Result<Similarity> {
    similarity(y_pred, y_true)
}

/// `(e, e_T)`: summed absolute differences over all subsets and over totals.
pub fn sobol_errors(report: &SobolReport, reference: &SobolReport) -> Result<(f64, f64)> {
    if report.dim() != reference.dim() {
        return Err(Error::DimensionMismatch { expected: reference.dim(), got: report.dim() });
    }
    let subsets: BTreeSet<&Vec<usize>> = report.subset_indices.keys().chain(reference.subset_indices.keys()).collect();
    let e = subsets.into_iter().map(|s| (report.subset(s) - reference.subset(s)).abs()).sum();
    let e_t = report.total_indices.iter().zip(&reference.total_indices).map(|(a, b)| (a - b).abs()).sum();
    Ok((e, e_t))
}

/// Closed-form decomposition of `sin x1 + a sin^2 x2 + b x3^4 sin x1` with
/// inputs uniform on `[-pi, pi]^3`.
pub fn ishigami_analytic(a: f64, b: f64) -> SobolReport {
    use std::f64::consts::PI;
    let pi4 = PI.powi(4);
    let pi8 = PI.powi(8);
    let d = a * a / 8.0 + b * pi4 / 5.0 + b * b * pi8 / 18.0 + 0.5;
    let d1 = b * pi4 / 5.0 + b * b * pi8 / 50.0 + 0.5;
    let d2 = a * a / 8.0;
    let d13 = 8.0 * b * b * pi8 / 225.0;

    let mut subset_indices = BTreeMap::new();
    for (s, v) in [(vec![0], d1), (vec![1], d2), (vec![0, 2], d13)] {
        if v != 0.0 {
            subset_indices.insert(s, v / d);
        }
    }
    SobolReport {
        mean: a / 2.0,
        variance: d,
        subset_indices,
        total_indices: vec![(d1 + d13) / d, d2 / d, d13 / d],
        first_order_se: None,
        total_se: None,
    }
}

/// An expansion with zero variance carries no sensitivity information; for
/// error metrics it is scored as all-zero indices.
pub fn report_or_empty(e: &Expansion) -> Result<SobolReport> {
    match all_indices(e) {
        Ok(r) => Ok(r),
        Err(err) if err.is_degenerate() => Ok(SobolReport {
            mean: e.mean(),
            variance: e.variance(),
            subset_indices: BTreeMap::new(),
            total_indices: vec![0.0; e.dim()],
            first_order_se: None,
            total_se: None,
        }),
        Err(err) => Err(err),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeKind {
    HF { w: u32 },
    LF { w: u32 },
    MF { w: u32, q: u32 },
}

impl SchemeKind {
    pub fn w(&self) -> u32 {
        match *self {
            SchemeKind::HF { w } | SchemeKind::LF { w } | SchemeKind::MF { w, .. } => w,
        }
    }

    pub fn q(&self) -> Option<u32> {
        match *self {
            SchemeKind::MF { q, .. } => Some(q),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    pub hf: String,
    pub lf: Option<String>,
    /// LF/HF cost ratio.
    pub rt: Option<f64>,
}

impl SchemeSpec {
    pub fn validate(&self) -> Result<()> {
        if let SchemeKind::MF { w, q } = self.kind {
            MfConfig::new(w, q)?;
        }
        if matches!(self.kind, SchemeKind::MF { .. } | SchemeKind::LF { .. }) && self.lf.is_none() {
            return Err(Error::Config("LF and MF schemes need an LF model".into()));
        }
        if let Some(rt) = self.rt {
            if !(rt > 0.0 && rt <= 1.0) {
                return Err(Error::Config(format!("cost ratio {rt} must lie in (0, 1]")));
            }
        }
        Ok(())
    }

    /// Label without the level, e.g. `MF:hf/lf1@rt=0.03125`.
    pub fn label(&self) -> String {
        let kind = match self.kind {
            SchemeKind::HF { .. } => "HF",
            SchemeKind::LF { .. } => "LF",
            SchemeKind::MF { .. } => "MF",
        };
        let mut s = match (&self.kind, &self.lf) {
            (SchemeKind::HF { .. }, _) | (_, None) => format!("{kind}:{}", self.hf),
            (SchemeKind::LF { .. }, Some(lf)) => format!("{kind}:{lf}"),
            (SchemeKind::MF { .. }, Some(lf)) => format!("{kind}:{}/{lf}", self.hf),
        };
        if let Some(rt) = self.rt {
            s.push_str(&format!("@rt={rt}"));
        }
        s
    }
}

impl fmt::Display for SchemeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub scheme: SchemeSpec,
    pub n_hf: usize,
    pub n_lf: usize,
    pub n_e: usize,
    pub n_tot: f64,
    pub mare: f64,
    pub r2: f64,
    pub e: f64,
    pub e_t: f64,
    pub mean: f64,
    pub std: f64,
}

pub const CONVERGENCE_HEADER: &str = "scheme,w,q,n_hf,n_lf,n_e,n_tot,mare,r2,e,e_t,mean,std";

fn fmt12(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn write_convergence_csv(rows: &[ConvergenceRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "{CONVERGENCE_HEADER}")?;
    for r in rows {
        let q = r.scheme.kind.q().map(|q| q.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scheme.label(),
            r.scheme.kind.w(),
            q,
            r.n_hf,
            r.n_lf,
            r.n_e,
            fmt12(r.n_tot),
            fmt12(r.mare),
            fmt12(r.r2),
            fmt12(r.e),
            fmt12(r.e_t),
            fmt12(r.mean),
            fmt12(r.std)
        )?;
    }
    Ok(())
}

/// Where the reference indices of a convergence study come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSource {
    Analytic { a: f64, b: f64 },
    Pce { model: String, w: u32 },
    MonteCarlo { model: String, samples: usize, seed: u64 },
}

/// Models and inputs shared by every cell of a study.
#[derive(Clone)]
pub struct StudyContext {
    pub specs: Vec<VariableSpec>,
    pub models: BTreeMap<String, Arc<dyn Model>>,
    pub store: Arc<SharedStore>,
}

impl StudyContext {
    pub fn new(specs: Vec<VariableSpec>) -> Self {
        StudyContext { specs, models: BTreeMap::new(), store: Arc::new(SharedStore::in_memory()) }
    }

    pub fn with_model(mut self, id: impl Into<String>, model: Arc<dyn Model>) -> Self {
        self.models.insert(id.into(), model);
        self
    }

    pub fn model(&self, id: &str) -> Result<&dyn Model> {
        self.models.get(id).map(|m| m.as_ref()).ok_or_else(|| Error::Config(format!("unknown model id `{id}`")))
    }

    pub fn cache_view(&self) -> EvalCache {
        EvalCache::with_backing(Arc::clone(&self.store))
    }

    pub fn reference(&self, source: &ReferenceSource) -> Result<SobolReport> {
        match source {
            ReferenceSource::Analytic { a, b } => Ok(ishigami_analytic(*a, *b)),
            ReferenceSource::Pce { model, w } => {
                let m = self.model(model)?;
                let e = build_single(m, &self.specs, *w, Provenance::HF, &self.cache_view())?;
                all_indices(&e)
            }
            ReferenceSource::MonteCarlo { model, samples, seed } => mc_sobol(self.model(model)?, &self.specs, *samples, *seed),
        }
    }
}

/// Result of building one scheme at one level.
pub struct SchemeBuild {
    pub expansion: Expansion,
    pub n_hf: usize,
    pub n_lf: usize,
}

/// Builds the expansion a scheme describes, with a private cache view.
pub fn build_scheme(ctx: &StudyContext, scheme: &SchemeSpec) -> Result<SchemeBuild> {
    scheme.validate()?;
    let cache = ctx.cache_view();
    let hf = ctx.model(&scheme.hf)?;
    let lf_id = scheme.lf.as_deref();
    let expansion = match scheme.kind {
        SchemeKind::HF { w } => build_single(hf, &ctx.specs, w, Provenance::HF, &cache)?,
        SchemeKind::LF { w } => build_single(ctx.model(lf_id.unwrap_or_default())?, &ctx.specs, w, Provenance::LF, &cache)?,
        SchemeKind::MF { w, q } => {
            build_mf(ctx.model(lf_id.unwrap_or_default())?, hf, &ctx.specs, MfConfig::new(w, q)?, &cache)?.combined
        }
    };
    let n_hf = if matches!(scheme.kind, SchemeKind::LF { .. }) { 0 } else { cache.count(hf.id()) };
    let n_lf = match lf_id {
        Some(id) if !matches!(scheme.kind, SchemeKind::HF { .. }) => cache.count(ctx.model(id)?.id()),
        _ => 0,
    };
    Ok(SchemeBuild { expansion, n_hf, n_lf })
}

/// Validation set: physical samples and true HF responses.
pub struct Validation {
    pub points: Vec<Vec<f64>>,
    pub truth: Vec<f64>,
}

impl Validation {
    pub fn new(ctx: &StudyContext, hf: &str, count: usize, seed: u64) -> Result<Self> {
        let points = sample_inputs(&ctx.specs, count, seed);
        let truth = eval_uncached(ctx.model(hf)?, &points)?;
        Ok(Validation { points, truth })
    }

    pub fn score(&self, e: &Expansion) -> Result<Similarity> {
        let pred = self.points.iter().map(|x| e.evaluate(x)).collect::<Result<Vec<_>>>()?;
        match prediction_error(&self.truth, &pred) {
            Err(err) if err.is_degenerate() => {
                // constant surrogate: r^2 is undefined, MARE is still meaningful
                let fake = similarity(&self.truth, &self.truth)?;
                let mare = self
                    .truth
                    .iter()
                    .zip(&pred)
                    .filter(|(t, _)| t.abs() >= MARE_FLOOR)
                    .map(|(t, p)| ((p - t) / t).abs())
                    .sum::<f64>()
                    / (self.truth.len() - fake.skipped) as f64;
                Ok(Similarity { r2: f64::NAN, mare, skipped: fake.skipped })
            }
            other => other,
        }
    }
}

/// Everything a convergence sweep needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergencePlan {
    /// Scheme templates; their `w` is replaced by each level in `levels`.
    pub schemes: Vec<SchemeSpec>,
    pub levels: std::ops::RangeInclusive<u32>,
    pub reference: ReferenceSource,
    pub validation_count: usize,
    pub validation_seed: u64,
    /// Cost ratios expanded for MF schemes whose `rt` is unset.
    pub rt_values: Vec<f64>,
}

fn at_level(template: &SchemeSpec, w: u32) -> SchemeSpec {
    let kind = match template.kind {
        SchemeKind::HF { .. } => SchemeKind::HF { w },
        SchemeKind::LF { .. } => SchemeKind::LF { w },
        SchemeKind::MF { q, .. } => SchemeKind::MF { w, q },
    };
    SchemeSpec { kind, ..template.clone() }
}

/// One row per (scheme, level, cost ratio), in plan order.
pub fn run_convergence(ctx: &StudyContext, plan: &ConvergencePlan) -> Result<Vec<ConvergenceRow>> {
    if plan.schemes.is_empty() {
        return Err(Error::Config("no schemes to run".into()));
    }
    let reference = ctx.reference(&plan.reference)?;
    let hf_id = &plan.schemes[0].hf;
    let validation = Validation::new(ctx, hf_id, plan.validation_count, plan.validation_seed)?;

    let mut cells = Vec::new();
    for template in &plan.schemes {
        for w in plan.levels.clone() {
            if template.kind.q().is_some_and(|q| q > w) {
                continue;
            }
            cells.push(at_level(template, w));
        }
    }

    let run_cell = |scheme: &SchemeSpec| -> Result<Vec<ConvergenceRow>> {
        let ctx_err = |e: Error| match e {
            Error::Eval(f) => Error::Eval(crate::error::EvalFailure {
                reason: format!("{} (scheme {} at w={})", f.reason, scheme.label(), scheme.kind.w()),
                ..f
            }),
            other => other,
        };
        let build = build_scheme(ctx, scheme).map_err(ctx_err)?;
        let report = report_or_empty(&build.expansion)?;
        let (e, e_t) = sobol_errors(&report, &reference)?;
        let fit = validation.score(&build.expansion)?;

        let lf_cost = scheme.lf.as_deref().map(|id| ctx.model(id).map(|m| m.cost_unit())).transpose()?.unwrap_or(1.0);
        let rts: Vec<Option<f64>> = match (scheme.kind, scheme.rt) {
            (_, Some(rt)) => vec![Some(rt)],
            (SchemeKind::MF { .. }, None) if !plan.rt_values.is_empty() => plan.rt_values.iter().map(|&r| Some(r)).collect(),
            _ => vec![None],
        };
        Ok(rts
            .into_iter()
            .map(|rt| {
                let ratio = rt.unwrap_or(lf_cost);
                let (n_e, n_tot) = match scheme.kind {
                    SchemeKind::HF { .. } => (build.n_hf, build.n_hf as f64),
                    SchemeKind::LF { .. } => (build.n_lf, ratio * build.n_lf as f64),
                    SchemeKind::MF { .. } => (build.n_hf, build.n_hf as f64 + ratio * build.n_lf as f64),
                };
                ConvergenceRow {
                    scheme: SchemeSpec { rt, ..scheme.clone() },
                    n_hf: build.n_hf,
                    n_lf: build.n_lf,
                    n_e,
                    n_tot,
                    mare: fit.mare,
                    r2: fit.r2,
                    e,
                    e_t,
                    mean: build.expansion.mean(),
                    std: build.expansion.std_dev(),
                }
            })
            .collect())
    };

    #[cfg(feature = "parallel")]
    let results: Vec<Result<Vec<ConvergenceRow>>> = {
        use rayon::prelude::*;
        cells.par_iter().map(run_cell).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<Vec<ConvergenceRow>>> = cells.iter().map(run_cell).collect();

    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Sorted `|alpha|` spectrum of one expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct DecaySeries {
    pub provenance: Provenance,
    pub values: Vec<f64>,
}

pub fn decay_report(expansions: &[Expansion]) -> Vec<DecaySeries> {
    expansions
        .iter()
        .map(|e| {
            let mut values: Vec<f64> = e.terms().map(|(_, t)| t.coeff.abs()).collect();
            values.sort_by(|a, b| b.total_cmp(a));
            DecaySeries { provenance: e.provenance(), values }
        })
        .collect()
}

pub fn write_decay_csv(series: &[DecaySeries], mut out: impl Write) -> Result<()> {
    writeln!(out, "provenance,rank,abs_coeff")?;
    for s in series {
        for (rank, v) in s.values.iter().enumerate() {
            writeln!(out, "{},{},{}", s.provenance, rank + 1, fmt12(*v))?;
        }
    }
    Ok(())
}

/// Fraction of ranks (over the shorter series) where `lower` sits below `upper`.
pub fn fraction_below(lower: &DecaySeries, upper: &DecaySeries) -> f64 {
    let n = lower.values.len().min(upper.values.len());
    if n == 0 {
        return 0.0;
    }
    let below = lower.values.iter().zip(&upper.values).filter(|(l, u)| l < u).count();
    below as f64 / n as f64
}

/// LF-vs-HF similarity over `count` seeded samples.
pub fn lf_similarity(hf: &dyn Model, lf: &dyn Model, specs: &[VariableSpec], count: usize, seed: u64) -> Result<Similarity> {
    let points = sample_inputs(specs, count, seed);
    let y_h = eval_uncached(hf, &points)?;
    let y_l = eval_uncached(lf, &points)?;
    similarity(&y_l, &y_h)
}
