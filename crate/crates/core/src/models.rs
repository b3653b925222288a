//! Benchmark models, the external-process adapter, and the evaluation cache.

use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, EvalFailure, Result};
use crate::orthopoly::VariableSpec;
use crate::sparse_grid::QuadratureGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Fidelity {
    HF,
    LF(u8),
}

impl fmt::Display for Fidelity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fidelity::HF => f.write_str("hf"),
            Fidelity::LF(v) => write!(f, "lf{v}"),
        }
    }
}

impl std::str::FromStr for Fidelity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if lower == "hf" {
            return Ok(Fidelity::HF);
        }
        lower
            .strip_prefix("lf")
            .and_then(|v| v.parse::<u8>().ok())
            .filter(|&v| v > 0)
            .map(Fidelity::LF)
            .ok_or_else(|| Error::Config(format!("unknown fidelity `{s}` (expected hf, lf1, lf2, ...)")))
    }
}

impl TryFrom<String> for Fidelity {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Fidelity> for String {
    fn from(f: Fidelity) -> String {
        f.to_string()
    }
}

/// A deterministic scalar response of `dim()` physical inputs.
pub trait Model: Send + Sync {
    fn id(&self) -> &str;

    fn dim(&self) -> usize;

    fn fidelity(&self) -> Fidelity;

    /// Cost of one evaluation relative to one HF evaluation.
    fn cost_unit(&self) -> f64 {
        1.0
    }

    /// Raw evaluation; the error string is the failure reason.
    fn eval(&self, xi: &[f64]) -> std::result::Result<f64, String>;
}

/// Evaluates `model` and rejects wrong arity and non-finite output.
pub fn evaluate(model: &dyn Model, xi: &[f64]) -> Result<f64, EvalFailure> {
    let fail = |reason: String| EvalFailure { model: model.id().to_string(), node: xi.to_vec(), reason };
    if xi.len() != model.dim() {
        return Err(fail(format!("expected {} inputs, got {}", model.dim(), xi.len())));
    }
    let y = model.eval(xi).map_err(fail)?;
    if !y.is_finite() {
        return Err(fail(format!("non-finite output {y}")));
    }
    Ok(y)
}

/// Names of the built-in benchmark families.
pub const BENCHMARKS: [&str; 3] = ["borehole", "ishigami", "short_column"];

/// Builds a benchmark model. Valid variants: borehole lf1; ishigami lf1-lf3;
/// short_column lf1-lf5.
pub fn builtin(name: &str, fidelity: Fidelity) -> Result<Box<dyn Model>> {
    let bad = || Error::Config(format!("unknown builtin model {name}/{fidelity}"));
    Ok(match (name, fidelity) {
        ("borehole", Fidelity::HF | Fidelity::LF(1)) => Box::new(Borehole::new(fidelity)),
        ("ishigami", Fidelity::HF | Fidelity::LF(1..=3)) => Box::new(Ishigami::variant(fidelity)),
        ("short_column", Fidelity::HF | Fidelity::LF(1..=5)) => Box::new(ShortColumn::new(fidelity)),
        _ => return Err(bad()),
    })
}

/// Input distributions of a benchmark family.
pub fn benchmark_specs(name: &str) -> Result<Vec<VariableSpec>> {
    match name {
        "borehole" => borehole_specs(),
        "ishigami" => ishigami_specs(),
        "short_column" => short_column_specs(),
        _ => Err(Error::Config(format!("unknown benchmark {name}"))),
    }
}

pub fn borehole_specs() -> Result<Vec<VariableSpec>> {
    [
        ("r_w", 0.05, 0.15),
        ("r_a", 100.0, 50000.0),
        ("T_u", 63700.0, 115600.0),
        ("H_u", 990.0, 1100.0),
        ("T_l", 63.1, 116.0),
        ("H_l", 700.0, 820.0),
        ("L", 1120.0, 1680.0),
        ("K_w", 9855.0, 12045.0),
    ]
    .into_iter()
    .map(|(n, a, b)| VariableSpec::uniform(n, a, b))
    .collect()
}

pub fn ishigami_specs() -> Result<Vec<VariableSpec>> {
    use std::f64::consts::PI;
    (1..=3).map(|i| VariableSpec::uniform(format!("xi_{i}"), -PI, PI)).collect()
}

pub fn short_column_specs() -> Result<Vec<VariableSpec>> {
    Ok(vec![
        VariableSpec::uniform("b", 5.0, 15.0)?,
        VariableSpec::uniform("h", 15.0, 25.0)?,
        VariableSpec::normal("P", 500.0, 100.0)?,
        VariableSpec::normal("M", 2000.0, 400.0)?,
        VariableSpec::normal("Y", 5.0, 0.5)?,
    ])
}

/// Water flow through a borehole; inputs `(r_w, r_a, T_u, H_u, T_l, H_l, L, K_w)`.
#[derive(Debug, Clone)]
pub struct Borehole {
    id: String,
    fidelity: Fidelity,
}

impl Borehole {
    pub fn new(fidelity: Fidelity) -> Self {
        Borehole { id: format!("borehole/{fidelity}"), fidelity }
    }

    pub fn value(fidelity: Fidelity, xi: &[f64]) -> std::result::Result<f64, String> {
        let [rw, ra, tu, hu, tl, hl, l, kw] = xi else {
            return Err("borehole takes 8 inputs".into());
        };
        let log_ratio = (ra / rw).ln();
        if !(log_ratio > 0.0) {
            return Err(format!("ln(r_a/r_w) = {log_ratio} must be positive"));
        }
        let (numer, offset) = match fidelity {
            Fidelity::HF => (2.0 * std::f64::consts::PI, 1.0),
            Fidelity::LF(_) => (5.0, 1.5),
        };
        let denom = log_ratio * (offset + 2.0 * l * tu / (log_ratio * rw * rw * kw) + tu / tl);
        if denom == 0.0 || !denom.is_finite() {
            return Err("zero or non-finite denominator".into());
        }
        Ok(numer * tu * (hu - hl) / denom)
    }
}

impl Model for Borehole {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        8
    }

    fn fidelity(&self) -> Fidelity {
        self.fidelity
    }

    fn eval(&self, xi: &[f64]) -> std::result::Result<f64, String> {
        Self::value(self.fidelity, xi)
    }
}

/// `sin x1 + a sin^2 x2 + b x3^4 sin x1 + shift`.
#[derive(Debug, Clone)]
pub struct Ishigami {
    id: String,
    fidelity: Fidelity,
    pub a: f64,
    pub b: f64,
    pub shift: f64,
}

impl Ishigami {
    pub fn variant(fidelity: Fidelity) -> Self {
        let (a, b, shift) = match fidelity {
            Fidelity::HF => (7.0, 0.1, 0.0),
            Fidelity::LF(1) => (7.3, 0.08, 0.0),
            Fidelity::LF(2) => (7.3, 0.04, 0.0),
            Fidelity::LF(_) => (7.3, 0.04, 0.02),
        };
        Ishigami { id: format!("ishigami/{fidelity}"), fidelity, a, b, shift }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let s1 = x[0].sin();
        let s2 = x[1].sin();
        s1 + self.a * s2 * s2 + self.b * x[2].powi(4) * s1 + self.shift
    }
}

impl Model for Ishigami {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        3
    }

    fn fidelity(&self) -> Fidelity {
        self.fidelity
    }

    fn eval(&self, xi: &[f64]) -> std::result::Result<f64, String> {
        Ok(self.value(xi))
    }
}

/// Short column limit state; inputs `(b, h, P, M, Y)`.
#[derive(Debug, Clone)]
pub struct ShortColumn {
    id: String,
    fidelity: Fidelity,
}

impl ShortColumn {
    pub fn new(fidelity: Fidelity) -> Self {
        ShortColumn { id: format!("short_column/{fidelity}"), fidelity }
    }

    pub fn value(fidelity: Fidelity, xi: &[f64]) -> std::result::Result<f64, String> {
        let &[b, h, p, m, y] = xi else {
            return Err("short column takes 5 inputs".into());
        };
        if b == 0.0 || h == 0.0 || y == 0.0 {
            return Err("b, h and Y must be non-zero".into());
        }
        let bhy = b * h * y;
        let bh2y = b * h * h * y;
        let hf = |lin: f64, quad: f64| 1.0 - 4.0 * lin / bh2y - (quad / bhy).powi(2);
        Ok(match fidelity {
            Fidelity::HF => hf(m, p),
            Fidelity::LF(1) => hf(p, p),
            Fidelity::LF(2) => hf(m, m),
            Fidelity::LF(3) => hf(m, p) - 4.0 * (p - m) / bhy,
            Fidelity::LF(4) => hf(m, p) - 0.4 * (p - m) / bhy,
            Fidelity::LF(5) => hf(m, p) - 40.0 * (p - m) / bhy,
            Fidelity::LF(v) => return Err(format!("no short column LF variant {v}")),
        })
    }
}

impl Model for ShortColumn {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        5
    }

    fn fidelity(&self) -> Fidelity {
        self.fidelity
    }

    fn eval(&self, xi: &[f64]) -> std::result::Result<f64, String> {
        Self::value(self.fidelity, xi)
    }
}

/// Renders a decimal with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolMode {
    /// One process per evaluation.
    #[default]
    Oneshot,
    /// One long-lived process answering line for line.
    Streaming,
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Black-box model behind a child process speaking the line protocol:
/// one line of space-separated coordinates in, one decimal out.
pub struct ExternalModel {
    id: String,
    argv: Vec<String>,
    dim: usize,
    fidelity: Fidelity,
    cost_unit: f64,
    mode: ProtocolMode,
    session: Mutex<Option<Session>>,
}

impl ExternalModel {
    /// `command` is split on whitespace into program and arguments (no shell).
    pub fn new(
        id: impl Into<String>,
        command: &str,
        dim: usize,
        fidelity: Fidelity,
        cost_unit: f64,
        mode: ProtocolMode,
    ) -> Result<Self> {
        let argv: Vec<String> = command.split_whitespace().map(str::to_string).collect();
        if argv.is_empty() {
            return Err(Error::Config("external model command is empty".into()));
        }
        Ok(ExternalModel { id: id.into(), argv, dim, fidelity, cost_unit, mode, session: Mutex::new(None) })
    }

    fn request_line(xi: &[f64]) -> String {
        let mut line = xi.iter().map(|&x| fmt17(x)).collect::<Vec<_>>().join(" ");
        line.push('\n');
        line
    }

    fn parse_response(raw: &str) -> std::result::Result<f64, String> {
        let trimmed = raw.trim();
        let y: f64 = trimmed.parse().map_err(|_| format!("malformed response {raw:?}"))?;
        if !y.is_finite() {
            return Err(format!("non-finite output, raw response {raw:?}"));
        }
        Ok(y)
    }

    fn spawn(&self) -> std::result::Result<Child, String> {
        Command::new(&self.argv[0])
            .args(&self.argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| format!("failed to start {:?}: {e}", self.argv[0]))
    }

    fn oneshot(&self, xi: &[f64]) -> std::result::Result<f64, String> {
        let mut child = self.spawn()?;
        {
            let mut stdin = child.stdin.take().ok_or("no stdin")?;
            stdin.write_all(Self::request_line(xi).as_bytes()).map_err(|e| format!("write failed: {e}"))?;
        }
        let mut raw = String::new();
        {
            let stdout = child.stdout.take().ok_or("no stdout")?;
            BufReader::new(stdout).read_line(&mut raw).map_err(|e| format!("read failed: {e}"))?;
        }
        let status = child.wait().map_err(|e| format!("wait failed: {e}"))?;
        if !status.success() {
            return Err(format!("process exited with {status}, raw response {raw:?}"));
        }
        Self::parse_response(&raw)
    }

    fn streaming(&self, xi: &[f64]) -> std::result::Result<f64, String> {
        let mut guard = self.session.lock().map_err(|_| "session lock poisoned")?;
        if guard.is_none() {
            let mut child = self.spawn()?;
            let stdin = child.stdin.take().ok_or("no stdin")?;
            let stdout = BufReader::new(child.stdout.take().ok_or("no stdout")?);
            *guard = Some(Session { child, stdin, stdout });
        }
        let session = guard.as_mut().expect("session just created");
        let result = (|| {
            session.stdin.write_all(Self::request_line(xi).as_bytes()).map_err(|e| format!("write failed: {e}"))?;
            session.stdin.flush().map_err(|e| format!("flush failed: {e}"))?;
            let mut raw = String::new();
            let read = session.stdout.read_line(&mut raw).map_err(|e| format!("read failed: {e}"))?;
            if read == 0 {
                return Err("process closed its output".to_string());
            }
            Self::parse_response(&raw)
        })();
        if result.is_err() {
            // drop a broken session so the next call starts fresh
            if let Some(mut s) = guard.take() {
                let _ = s.child.kill();
                let _ = s.child.wait();
            }
        }
        result
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        if let Ok(mut guard) = self.session.lock() {
            if let Some(s) = guard.take() {
                let Session { mut child, stdin, .. } = s;
                drop(stdin);
                let _ = child.wait();
            }
        }
    }
}

impl Model for ExternalModel {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn fidelity(&self) -> Fidelity {
        self.fidelity
    }

    fn cost_unit(&self) -> f64 {
        self.cost_unit
    }

    fn eval(&self, xi: &[f64]) -> std::result::Result<f64, String> {
        match self.mode {
            ProtocolMode::Oneshot => self.oneshot(xi),
            ProtocolMode::Streaming => self.streaming(xi),
        }
    }
}

type CacheKey = (String, Vec<u64>);

fn cache_key(model: &str, xi: &[f64]) -> CacheKey {
    // -0.0 and 0.0 are the same node
    (model.to_string(), xi.iter().map(|&x| if x == 0.0 { 0u64 } else { x.to_bits() }).collect())
}

/// Values shared by every cache view of a study, optionally persisted as
/// `model_id<TAB>x1 x2 ... xn<TAB>y` lines.
#[derive(Default)]
pub struct SharedStore {
    values: Mutex<HashMap<CacheKey, f64>>,
    sink: Option<Mutex<BufWriter<File>>>,
}

impl SharedStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads existing records (if the file exists) and appends new ones to it.
    pub fn persistent(path: &Path) -> Result<Self> {
        let mut values = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (lineno, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let (id, xi, y) = parse_cache_record(&line)
                    .ok_or_else(|| Error::Config(format!("{}:{}: malformed cache record", path.display(), lineno + 1)))?;
                values.insert(cache_key(&id, &xi), y);
            }
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(SharedStore { values: Mutex::new(values), sink: Some(Mutex::new(BufWriter::new(file))) })
    }

    pub fn len(&self) -> usize {
        self.values.lock().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, key: &CacheKey) -> Option<f64> {
        self.values.lock().expect("store lock").get(key).copied()
    }

    fn insert(&self, key: CacheKey, xi: &[f64], y: f64) -> Result<()> {
        let fresh = self.values.lock().expect("store lock").insert(key.clone(), y).is_none();
        if fresh {
            if let Some(sink) = &self.sink {
                let mut out = sink.lock().expect("sink lock");
                writeln!(out, "{}", format_cache_record(&key.0, xi, y))?;
                out.flush()?;
            }
        }
        Ok(())
    }
}

pub fn format_cache_record(model: &str, xi: &[f64], y: f64) -> String {
    let coords = xi.iter().map(|&x| fmt17(x)).collect::<Vec<_>>().join(" ");
    format!("{model}\t{coords}\t{}", fmt17(y))
}

pub fn parse_cache_record(line: &str) -> Option<(String, Vec<f64>, f64)> {
    let mut parts = line.split('\t');
    let id = parts.next()?.to_string();
    let xi = parts.next()?.split_whitespace().map(|s| s.parse().ok()).collect::<Option<Vec<f64>>>()?;
    let y = parts.next()?.trim().parse().ok()?;
    if parts.next().is_some() {
        return None;
    }
    Some((id, xi, y))
}

#[derive(Default)]
struct CacheState {
    values: HashMap<CacheKey, f64>,
    counters: HashMap<String, usize>,
    calls: HashMap<String, usize>,
}

/// Per-study view of model evaluations. Each distinct `(model, node)` pair is
/// counted once; values already in the backing store are reused without
/// calling the model again.
pub struct EvalCache {
    state: Mutex<CacheState>,
    backing: Arc<SharedStore>,
}

impl Default for EvalCache {
    fn default() -> Self {
        Self::new()
    }
}

impl EvalCache {
    pub fn new() -> Self {
        Self::with_backing(Arc::new(SharedStore::in_memory()))
    }

    pub fn with_backing(backing: Arc<SharedStore>) -> Self {
        EvalCache { state: Mutex::new(CacheState::default()), backing }
    }

    pub fn get_or_eval(&self, model: &dyn Model, xi: &[f64]) -> Result<f64> {
        let key = cache_key(model.id(), xi);
        if let Some(&y) = self.state.lock().expect("cache lock").values.get(&key) {
            return Ok(y);
        }
        let (y, called) = match self.backing.get(&key) {
            Some(y) => (y, false),
            None => {
                let y = evaluate(model, xi)?;
                self.backing.insert(key.clone(), xi, y)?;
                (y, true)
            }
        };
        let mut state = self.state.lock().expect("cache lock");
        if called {
            *state.calls.entry(model.id().to_string()).or_default() += 1;
        }
        if state.values.insert(key, y).is_none() {
            *state.counters.entry(model.id().to_string()).or_default() += 1;
        }
        Ok(y)
    }

    /// Distinct nodes requested from `model` through this view.
    pub fn count(&self, model_id: &str) -> usize {
        self.state.lock().expect("cache lock").counters.get(model_id).copied().unwrap_or(0)
    }

    /// Times `model` was actually invoked by this view.
    pub fn calls(&self, model_id: &str) -> usize {
        self.state.lock().expect("cache lock").calls.get(model_id).copied().unwrap_or(0)
    }

    /// Fresh counters over the same backing store.
    pub fn fresh_view(&self) -> EvalCache {
        EvalCache::with_backing(Arc::clone(&self.backing))
    }
}

/// Evaluates `model` at every grid node, in node order.
pub fn eval_grid(model: &dyn Model, grid: &QuadratureGrid, cache: &EvalCache) -> Result<Vec<f64>> {
    let nodes = grid.physical_nodes();
    eval_points(model, &nodes, cache)
}

pub fn eval_points(model: &dyn Model, points: &[Vec<f64>], cache: &EvalCache) -> Result<Vec<f64>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        points.par_iter().map(|x| cache.get_or_eval(model, x)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        points.iter().map(|x| cache.get_or_eval(model, x)).collect()
    }
}

/// Evaluates without caching, for validation and Monte Carlo samples.
pub fn eval_uncached(model: &dyn Model, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        points.par_iter().map(|x| evaluate(model, x).map_err(Error::from)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        points.iter().map(|x| evaluate(model, x).map_err(Error::from)).collect()
    }
}

/// `count` independent physical samples from a seeded ChaCha8 stream.
pub fn sample_inputs(specs: &[VariableSpec], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| specs.iter().map(|s| s.sample(&mut rng)).collect()).collect()
}
