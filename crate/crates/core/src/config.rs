//! Study configuration files (TOML).
//!
//! ```toml
//! output = "out/borehole"
//! rt_values = [0.25, 0.125, 0.0625, 0.03125]
//! cache = "out/borehole/cache.tsv"   # optional persistent evaluation cache
//!
//! [levels]
//! min = 1
//! max = 4
//!
//! [validation]
//! count = 100000
//! seed = 7
//!
//! [reference]
//! kind = "pce"        # or "analytic" (a, b) or "mc" (model, samples, seed)
//! model = "hf"
//! w = 5
//!
//! [[variables]]
//! name = "r_w"
//! kind = "uniform"
//! lower = 0.05
//! upper = 0.15
//!
//! [[models]]
//! id = "hf"
//! builtin = "borehole"
//! fidelity = "hf"
//!
//! [[models]]
//! id = "ext"
//! command = "python3 scripts/ishigami.py"
//! protocol = "streaming"
//! fidelity = "hf"
//!
//! [[schemes]]
//! kind = "mf"
//! hf = "hf"
//! lf = "lf"
//! q = 1
//! ```
//!
//! `variables` may be replaced by `benchmark = "borehole"` to use a built-in
//! input description.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{benchmark_specs, builtin, ExternalModel, Fidelity, Model, ProtocolMode, SharedStore};
use crate::orthopoly::VariableSpec;
use crate::study::{ConvergencePlan, ReferenceSource, SchemeKind, SchemeSpec, StudyContext, DEFAULT_RT_VALUES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<String>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_rt_values")]
    pub rt_values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
    pub levels: LevelRange,
    #[serde(default)]
    pub validation: ValidationConfig,
    pub reference: ReferenceConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variables: Vec<VariableSpec>,
    #[serde(default)]
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub schemes: Vec<SchemeConfig>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_rt_values() -> Vec<f64> {
    DEFAULT_RT_VALUES.to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelRange {
    pub min: u32,
    pub max: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    pub count: usize,
    pub seed: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig { count: 10_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ReferenceConfig {
    Analytic { a: f64, b: f64 },
    Pce { model: String, w: u32 },
    Mc { model: String, samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolMode>,
    pub fidelity: Fidelity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_unit: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKindConfig {
    Hf,
    Lf,
    Mf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub kind: SchemeKindConfig,
    pub hf: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lf: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rt: Option<f64>,
}

impl SchemeConfig {
    /// The scheme at sparse level `w`.
    pub fn at_level(&self, w: u32) -> SchemeSpec {
        let kind = match self.kind {
            SchemeKindConfig::Hf => SchemeKind::HF { w },
            SchemeKindConfig::Lf => SchemeKind::LF { w },
            SchemeKindConfig::Mf => SchemeKind::MF { w, q: self.q.unwrap_or(0) },
        };
        SchemeSpec { kind, hf: self.hf.clone(), lf: self.lf.clone(), rt: self.rt }
    }
}

/// A model registered under the id its config gave it.
struct Bound {
    id: String,
    cost_unit: f64,
    inner: Box<dyn Model>,
}

impl Model for Bound {
    fn id(&self) -> &str {
        &self.id
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn fidelity(&self) -> Fidelity {
        self.inner.fidelity()
    }
    fn cost_unit(&self) -> f64 {
        self.cost_unit
    }
    fn eval(&self, xi: &[f64]) -> std::result::Result<f64, String> {
        self.inner.eval(xi)
    }
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Input descriptions, from `variables` or the named benchmark.
    pub fn specs(&self) -> Result<Vec<VariableSpec>> {
        match (&self.benchmark, self.variables.is_empty()) {
            (_, false) => Ok(self.variables.clone()),
            (Some(name), true) => benchmark_specs(name),
            (None, true) => Err(Error::Config("at least one variable is required".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.benchmark.is_some() && !self.variables.is_empty() {
            return Err(Error::Config("give either `benchmark` or `variables`, not both".into()));
        }
        for v in self.specs()? {
            v.validate()?;
        }
        if self.models.is_empty() {
            return Err(Error::Config("at least one model is required".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("at least one scheme is required".into()));
        }
        if self.levels.min > self.levels.max {
            return Err(Error::Config(format!("levels.min {} exceeds levels.max {}", self.levels.min, self.levels.max)));
        }
        if self.validation.count < 2 {
            return Err(Error::Config("validation.count must be at least 2".into()));
        }
        for rt in &self.rt_values {
            if !(*rt > 0.0 && *rt <= 1.0) {
                return Err(Error::Config(format!("rt value {rt} must lie in (0, 1]")));
            }
        }

        let mut ids = BTreeSet::new();
        for m in &self.models {
            if !ids.insert(m.id.as_str()) {
                return Err(Error::Config(format!("duplicate model id `{}`", m.id)));
            }
            match (&m.builtin, &m.command) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => return Err(Error::Config(format!("model `{}` needs exactly one of `builtin` or `command`", m.id))),
            }
            if m.builtin.is_some() && m.protocol.is_some() {
                return Err(Error::Config(format!("model `{}`: `protocol` applies to external commands only", m.id)));
            }
            if let Some(c) = m.cost_unit {
                if !(c > 0.0) {
                    return Err(Error::Config(format!("model `{}`: cost_unit must be positive", m.id)));
                }
            }
        }
        let known = |id: &str, what: &str| -> Result<()> {
            if ids.contains(id) {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} refers to unknown model id `{id}`")))
            }
        };

        for (i, s) in self.schemes.iter().enumerate() {
            let what = format!("schemes[{i}]");
            known(&s.hf, &what)?;
            if let Some(lf) = &s.lf {
                known(lf, &what)?;
            }
            match s.kind {
                SchemeKindConfig::Hf if s.q.is_some() => return Err(Error::Config(format!("{what}: `q` applies to mf schemes only"))),
                SchemeKindConfig::Lf | SchemeKindConfig::Mf if s.lf.is_none() => {
                    return Err(Error::Config(format!("{what}: lf and mf schemes need `lf`")))
                }
                SchemeKindConfig::Mf => {
                    let q = s.q.ok_or_else(|| Error::Config(format!("{what}: mf schemes need `q`")))?;
                    if q > self.levels.max {
                        return Err(Error::Config(format!("{what}: q={q} exceeds levels.max {}", self.levels.max)));
                    }
                }
                _ => {}
            }
            s.at_level(self.levels.max).validate().map_err(|e| Error::Config(format!("{what}: {e}")))?;
        }
        match &self.reference {
            ReferenceConfig::Pce { model, .. } => known(model, "reference")?,
            ReferenceConfig::Mc { model, samples, .. } => {
                known(model, "reference")?;
                if *samples < 2 {
                    return Err(Error::Config("reference.samples must be at least 2".into()));
                }
            }
            ReferenceConfig::Analytic { .. } => {}
        }
        Ok(())
    }

    /// Instantiates every model. Relative external commands and cache paths
    /// resolve against `base_dir`.
    pub fn context(&self, base_dir: &Path) -> Result<StudyContext> {
        let specs = self.specs()?;
        let store = match &self.cache {
            Some(p) => SharedStore::persistent(&base_dir.join(p))?,
            None => SharedStore::in_memory(),
        };
        let mut models: BTreeMap<String, Arc<dyn Model>> = BTreeMap::new();
        for m in &self.models {
            let cost_unit = m.cost_unit.unwrap_or(1.0);
            let model: Arc<dyn Model> = match (&m.builtin, &m.command) {
                (Some(name), _) => {
                    let inner = builtin(name, m.fidelity)?;
                    if inner.dim() != specs.len() {
                        return Err(Error::Config(format!(
                            "model `{}` takes {} inputs but {} variables are configured",
                            m.id,
                            inner.dim(),
                            specs.len()
                        )));
                    }
                    Arc::new(Bound { id: m.id.clone(), cost_unit, inner })
                }
                (None, Some(cmd)) => Arc::new(ExternalModel::new(
                    m.id.clone(),
                    &resolve_command(cmd, base_dir),
                    specs.len(),
                    m.fidelity,
                    cost_unit,
                    m.protocol.unwrap_or_default(),
                )?),
                (None, None) => unreachable!("validated"),
            };
            models.insert(m.id.clone(), model);
        }
        Ok(StudyContext { specs, models, store: Arc::new(store) })
    }

    pub fn reference_source(&self) -> ReferenceSource {
        match &self.reference {
            ReferenceConfig::Analytic { a, b } => ReferenceSource::Analytic { a: *a, b: *b },
            ReferenceConfig::Pce { model, w } => ReferenceSource::Pce { model: model.clone(), w: *w },
            ReferenceConfig::Mc { model, samples, seed } => {
                ReferenceSource::MonteCarlo { model: model.clone(), samples: *samples, seed: *seed }
            }
        }
    }

    pub fn plan(&self) -> ConvergencePlan {
        ConvergencePlan {
            schemes: self.schemes.iter().map(|s| s.at_level(self.levels.min)).collect(),
            levels: self.levels.min..=self.levels.max,
            reference: self.reference_source(),
            validation_count: self.validation.count,
            validation_seed: self.validation.seed,
            rt_values: self.rt_values.clone(),
        }
    }

    /// Replaces every configured seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.validation.seed = seed;
        if let ReferenceConfig::Mc { seed: s, .. } = &mut self.reference {
            *s = seed;
        }
    }
}

/// Arguments that name an existing file relative to `base_dir` are rewritten
/// to that path; everything else is left alone.
fn resolve_command(cmd: &str, base_dir: &Path) -> String {
    cmd.split_whitespace()
        .map(|arg| {
            let p = Path::new(arg);
            if p.is_relative() && base_dir.join(p).is_file() {
                base_dir.join(p).to_string_lossy().into_owned()
            } else {
                arg.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}
