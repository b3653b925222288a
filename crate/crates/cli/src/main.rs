use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mfsobol::config::{SchemeConfig, SchemeKindConfig, StudyConfig};
use mfsobol::mf_pce::{build_mf, build_single, MfConfig};
use mfsobol::pce::{Expansion, Provenance};
use mfsobol::sobol::{all_indices, mc_sobol, SobolReport};
use mfsobol::study::{
    build_scheme, decay_report, run_convergence, write_convergence_csv, write_decay_csv, SchemeKind, SchemeSpec, StudyContext,
};
use mfsobol::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_MODEL: u8 = 3;
const EXIT_DEGENERATE: u8 = 4;

#[derive(Parser)]
#[command(name = "mfsobol", version, about = "Sobol sensitivity analysis with single- and multi-fidelity polynomial chaos")]
struct Cli {
    /// Study configuration (TOML).
    #[arg(long, global = true, env = "MFSOBOL_CONFIG")]
    config: Option<PathBuf>,

    /// Output directory; overrides `output` from the config.
    #[arg(long, global = true, env = "MFSOBOL_OUT")]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "MFSOBOL_THREADS")]
    threads: Option<usize>,

    /// Replaces every seed in the config.
    #[arg(long, global = true, env = "MFSOBOL_SEED")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sobol indices of one scheme; writes a JSON report and a totals CSV.
    Sobol(SchemeArgs),
    /// Convergence sweep over every configured scheme and level.
    Converge,
    /// Sorted coefficient spectra of one scheme.
    Decay(SchemeArgs),
    /// Monte Carlo pick-freeze indices next to the HF expansion's.
    McCheck(McArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Hf,
    Lf,
    Mf,
}

#[derive(Args)]
struct SchemeArgs {
    #[arg(long, value_enum, default_value = "mf")]
    scheme: Kind,
    /// Sparse level.
    #[arg(long)]
    w: u32,
    /// Level offset (mf only); defaults to the configured scheme's.
    #[arg(long)]
    q: Option<u32>,
    /// HF model id; defaults to the first matching configured scheme.
    #[arg(long)]
    hf: Option<String>,
    /// LF model id; defaults to the first matching configured scheme.
    #[arg(long)]
    lf: Option<String>,
}

#[derive(Args)]
struct McArgs {
    /// Model id; defaults to the HF model of the first scheme.
    #[arg(long)]
    model: Option<String>,
    /// Base sample count N (the model runs N * (n + 2) times).
    #[arg(long, default_value_t = 65536)]
    samples: usize,
    /// Sparse level of the expansion compared against.
    #[arg(long, default_value_t = 4)]
    w: u32,
}

struct Session {
    config: StudyConfig,
    ctx: StudyContext,
    out: PathBuf,
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Eval(_) => EXIT_MODEL,
        Error::Degenerate(_) | Error::QuadratureNoConvergence { .. } => EXIT_DEGENERATE,
        Error::Io(_) => 1,
        _ => EXIT_CONFIG,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot set thread count: {e}")))?;
    }
    let path = cli.config.ok_or_else(|| Error::Config("no config given (use --config or MFSOBOL_CONFIG)".into()))?;
    let mut config = StudyConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        config.override_seed(seed);
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let ctx = config.context(&base)?;
    let out = cli.out.unwrap_or_else(|| base.join(&config.output));
    fs::create_dir_all(&out)?;
    let session = Session { config, ctx, out, seed: cli.seed };

    match cli.command {
        Command::Sobol(args) => cmd_sobol(&session, &args),
        Command::Converge => cmd_converge(&session),
        Command::Decay(args) => cmd_decay(&session, &args),
        Command::McCheck(args) => cmd_mc_check(&session, &args),
    }
}

impl Session {
    fn scheme(&self, args: &SchemeArgs) -> Result<SchemeSpec, Error> {
        let wanted = match args.scheme {
            Kind::Hf => SchemeKindConfig::Hf,
            Kind::Lf => SchemeKindConfig::Lf,
            Kind::Mf => SchemeKindConfig::Mf,
        };
        let template = self.config.schemes.iter().find(|s| s.kind == wanted);
        let hf = args
            .hf
            .clone()
            .or_else(|| template.map(|s| s.hf.clone()))
            .or_else(|| self.config.schemes.first().map(|s| s.hf.clone()))
            .ok_or_else(|| Error::Config("no HF model given".into()))?;
        let lf = args.lf.clone().or_else(|| template.and_then(|s| s.lf.clone()));
        let q = args.q.or_else(|| template.and_then(|s| s.q));
        if wanted != SchemeKindConfig::Hf && lf.is_none() {
            return Err(Error::Config("this scheme needs an LF model (--lf)".into()));
        }
        if wanted == SchemeKindConfig::Mf && q.is_none() {
            return Err(Error::Config("mf needs a level offset (--q)".into()));
        }
        let cfg = SchemeConfig { kind: wanted, hf, lf, q: if wanted == SchemeKindConfig::Mf { q } else { None }, rt: None };
        let spec = cfg.at_level(args.w);
        spec.validate()?;
        for id in std::iter::once(&spec.hf).chain(spec.lf.iter()) {
            self.ctx.model(id)?;
        }
        Ok(spec)
    }

    fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn file_stem(scheme: &SchemeSpec) -> String {
    match scheme.kind {
        SchemeKind::HF { w } => format!("hf_w{w}"),
        SchemeKind::LF { w } => format!("lf_w{w}"),
        SchemeKind::MF { w, q } => format!("mf_w{w}_q{q}"),
    }
}

fn report_json(session: &Session, scheme: &SchemeSpec, r: &SobolReport) -> serde_json::Value {
    let names: Vec<&str> = session.ctx.specs.iter().map(|s| s.name.as_str()).collect();
    let subsets: Vec<_> = r.subset_indices.iter().map(|(s, v)| json!({ "subset": s, "index": v })).collect();
    json!({
        "scheme": scheme.label(),
        "w": scheme.kind.w(),
        "q": scheme.kind.q(),
        "variables": names,
        "mean": r.mean,
        "variance": r.variance,
        "first_order": r.first_order_all(),
        "total": r.total_indices,
        "subsets": subsets,
    })
}

fn write_totals_csv(path: &Path, session: &Session, r: &SobolReport) -> Result<(), Error> {
    let mut text = String::from("variable,first_order,total\n");
    for (i, spec) in session.ctx.specs.iter().enumerate() {
        text.push_str(&format!("{},{:.11e},{:.11e}\n", spec.name, r.first_order(i), r.total_indices[i]));
    }
    fs::write(path, text)?;
    Ok(())
}

fn cmd_sobol(session: &Session, args: &SchemeArgs) -> Result<(), Error> {
    let scheme = session.scheme(args)?;
    let build = build_scheme(&session.ctx, &scheme)?;
    let report = all_indices(&build.expansion)?;

    let stem = file_stem(&scheme);
    let json_path = session.file(&format!("sobol_{stem}.json"));
    let csv_path = session.file(&format!("sobol_{stem}_totals.csv"));
    let text = serde_json::to_string_pretty(&report_json(session, &scheme, &report)).expect("report serializes");
    fs::write(&json_path, text + "\n")?;
    write_totals_csv(&csv_path, session, &report)?;

    println!("{} at w={}: mean {:.6e}, variance {:.6e}, n_hf={}, n_lf={}", scheme.label(), scheme.kind.w(), report.mean, report.variance, build.n_hf, build.n_lf);
    println!("{:<12} {:>12} {:>12}", "variable", "first", "total");
    for (i, spec) in session.ctx.specs.iter().enumerate() {
        println!("{:<12} {:>12.6} {:>12.6}", spec.name, report.first_order(i), report.total_indices[i]);
    }
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

fn cmd_converge(session: &Session) -> Result<(), Error> {
    let rows = run_convergence(&session.ctx, &session.config.plan())?;
    let path = session.file("convergence.csv");
    write_convergence_csv(&rows, BufWriter::new(fs::File::create(&path)?))?;
    println!("{:<28} {:>3} {:>7} {:>7} {:>11} {:>11} {:>11}", "scheme", "w", "n_hf", "n_lf", "n_tot", "e_t", "r2");
    for r in &rows {
        println!(
            "{:<28} {:>3} {:>7} {:>7} {:>11.2} {:>11.3e} {:>11.6}",
            r.scheme.label(),
            r.scheme.kind.w(),
            r.n_hf,
            r.n_lf,
            r.n_tot,
            r.e_t,
            r.r2
        );
    }
    println!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

fn cmd_decay(session: &Session, args: &SchemeArgs) -> Result<(), Error> {
    let scheme = session.scheme(args)?;
    let ctx = &session.ctx;
    let cache = ctx.cache_view();
    let hf = ctx.model(&scheme.hf)?;
    let expansions: Vec<Expansion> = match scheme.kind {
        SchemeKind::HF { w } => vec![build_single(hf, &ctx.specs, w, Provenance::HF, &cache)?],
        SchemeKind::LF { w } => {
            vec![build_single(ctx.model(scheme.lf.as_deref().unwrap_or_default())?, &ctx.specs, w, Provenance::LF, &cache)?]
        }
        SchemeKind::MF { w, q } => {
            let lf = ctx.model(scheme.lf.as_deref().unwrap_or_default())?;
            let built = build_mf(lf, hf, &ctx.specs, MfConfig::new(w, q)?, &cache)?;
            let hf_same_grid = build_single(hf, &ctx.specs, w - q, Provenance::HF, &cache)?;
            vec![hf_same_grid, built.lf, built.correction]
        }
    };
    let series = decay_report(&expansions);
    let path = session.file(&format!("decay_{}.csv", file_stem(&scheme)));
    write_decay_csv(&series, BufWriter::new(fs::File::create(&path)?))?;
    for s in &series {
        let head: Vec<String> = s.values.iter().take(5).map(|v| format!("{v:.3e}")).collect();
        println!("{:<3} {:>5} terms, leading |coeff|: {}", s.provenance.to_string(), s.values.len(), head.join(" "));
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_mc_check(session: &Session, args: &McArgs) -> Result<(), Error> {
    let ctx = &session.ctx;
    let id = args
        .model
        .clone()
        .or_else(|| session.config.schemes.first().map(|s| s.hf.clone()))
        .ok_or_else(|| Error::Config("no model given".into()))?;
    let model = ctx.model(&id)?;
    let seed = session.seed.unwrap_or(session.config.validation.seed);
    let mc = mc_sobol(model, &ctx.specs, args.samples, seed)?;
    let pce = all_indices(&build_single(model, &ctx.specs, args.w, Provenance::HF, &ctx.cache_view())?)?;
    let se1 = mc.first_order_se.clone().unwrap_or_default();
    let set = mc.total_se.clone().unwrap_or_default();

    let mut text = String::from("variable,pce_first,mc_first,mc_first_se,pce_total,mc_total,mc_total_se\n");
    println!("{:<12} {:>10} {:>10} {:>8} {:>10} {:>10} {:>8}", "variable", "pce", "mc", "z", "pce_T", "mc_T", "z_T");
    let mut worst: f64 = 0.0;
    for (i, spec) in ctx.specs.iter().enumerate() {
        let z1 = (pce.first_order(i) - mc.first_order(i)).abs() / se1[i];
        let zt = (pce.total_indices[i] - mc.total_indices[i]).abs() / set[i];
        worst = worst.max(if z1.is_nan() { 0.0 } else { z1 }).max(if zt.is_nan() { 0.0 } else { zt });
        println!(
            "{:<12} {:>10.5} {:>10.5} {:>8.2} {:>10.5} {:>10.5} {:>8.2}",
            spec.name,
            pce.first_order(i),
            mc.first_order(i),
            z1,
            pce.total_indices[i],
            mc.total_indices[i],
            zt
        );
        text.push_str(&format!(
            "{},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e}\n",
            spec.name,
            pce.first_order(i),
            mc.first_order(i),
            se1[i],
            pce.total_indices[i],
            mc.total_indices[i],
            set[i]
        ));
    }
    let path = session.file("mc_check.csv");
    fs::write(&path, text)?;
    println!("largest deviation {worst:.2} standard errors; wrote {}", path.display());
    Ok(())
}
