//! Command-line front end: run configuration, `learn`, `evaluate`, `inspect`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::abstraction::{LiteralConjunction, UniverseDef};
use crate::capability_model::CapabilityModel;
use crate::dataset::TemporalBound;
use crate::environment::{BlocksWorld, EnvParams, Environment, RoadWorld, VacuumWorld, BUILTIN_ENVIRONMENTS};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluation_filter, exact_vd, generate_eval_dataset, ground_truth_transitions, model_replay, sampled_vd, EvalConfig,
};
use crate::learner::{self, LearnerConfig, RunLog, StopReason, Variant};
use crate::model_io;

/// Environment variable naming the default output root for `learn`.
pub const OUTPUT_ROOT_VAR: &str = "CAPML_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub name: String,
    #[serde(default)]
    pub params: EnvParams,
}

/// `"builtin"` or an explicit definition, which must name the environment's atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UniverseSpec {
    Keyword(String),
    Definition(UniverseDef),
}

impl Default for UniverseSpec {
    fn default() -> Self {
        UniverseSpec::Keyword("builtin".into())
    }
}

/// One file per run. The top-level seed drives both learning and evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub environment: EnvironmentSpec,
    #[serde(default)]
    pub universe: UniverseSpec,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub evaluation: EvalConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfigFile =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Checks everything that can be checked without running; also pins the
    /// learner and evaluation seeds to the run seed.
    pub fn resolve(mut self) -> Result<Self> {
        self.learner.seed = self.seed;
        self.evaluation.seed = self.seed;
        self.learner.validate()?;
        self.evaluation.validate()?;
        let env = Builtin::from_spec(&self.environment)?;
        match &self.universe {
            UniverseSpec::Keyword(k) if k == "builtin" => {}
            UniverseSpec::Keyword(k) => return Err(Error::Config(format!("universe must be \"builtin\" or a definition, got {k:?}"))),
            UniverseSpec::Definition(def) => {
                let u = def.build()?;
                let declared: Vec<&str> = (0..u.len()).map(|i| u.name(i)).collect();
                let builtin = env.universe();
                let expected: Vec<&str> = (0..builtin.len()).map(|i| builtin.name(i)).collect();
                if declared != expected {
                    return Err(Error::Config(format!(
                        "universe definition does not match the {} environment's atoms",
                        self.environment.name
                    )));
                }
            }
        }
        Ok(self)
    }
}

/// A built-in environment chosen by name.
pub enum Builtin {
    Vacuum(VacuumWorld),
    Roads(RoadWorld),
    Blocks(BlocksWorld),
}

macro_rules! with_env {
    ($b:expr, $e:ident => $body:expr) => {
        match $b {
            Builtin::Vacuum($e) => $body,
            Builtin::Roads($e) => $body,
            Builtin::Blocks($e) => $body,
        }
    };
}

impl Builtin {
    pub fn from_spec(spec: &EnvironmentSpec) -> Result<Self> {
        spec.params.validate()?;
        Self::named(&spec.name, &spec.params)
    }

    pub fn named(name: &str, params: &EnvParams) -> Result<Self> {
        Ok(match name {
            "vacuum" => Builtin::Vacuum(VacuumWorld::new()),
            "roads" => Builtin::Roads(RoadWorld::new(params.flat_probability)),
            "blocks" => Builtin::Blocks(BlocksWorld::new(params.blocks, params.slip)?),
            other => {
                return Err(Error::Config(format!(
                    "unknown environment {other:?} (expected one of {})",
                    BUILTIN_ENVIRONMENTS.join(", ")
                )))
            }
        })
    }

    pub fn universe(&self) -> &std::sync::Arc<crate::abstraction::AtomUniverse> {
        with_env!(self, e => e.universe())
    }

    pub fn ground_truth(&self) -> CapabilityModel<f64> {
        with_env!(self, e => e.ground_truth())
    }

    pub fn default_theta(&self) -> TemporalBound {
        with_env!(self, e => e.default_theta())
    }
}

#[derive(Debug, Parser)]
#[command(name = "capml", version, about = "Active learning of probabilistic capability models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a capability model by querying the environment's agent.
    Learn(LearnArgs),
    /// Score every model snapshot of a run.
    Evaluate(EvaluateArgs),
    /// Pretty-print a model, dataset, last query or ground truth.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub max_queries: Option<usize>,
    /// Suppress per-query progress lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub min_len: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// CSV destination; defaults to `evaluation.csv` inside the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct InspectArgs {
    #[arg(long, group = "target")]
    pub model: Option<PathBuf>,
    #[arg(long, group = "target")]
    pub dataset: Option<PathBuf>,
    #[arg(long, group = "target")]
    pub last_query: Option<PathBuf>,
    #[arg(long, group = "target")]
    pub ground_truth: Option<String>,
}

/// Written next to the model; everything `evaluate` needs to rebuild the run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfigFile,
    pub stop: StopReason,
    pub queries: usize,
    pub capability_executions: usize,
    pub wall_seconds: f64,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Learn(a) => cmd_learn(&a).map(|_| ()),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Inspect(a) => cmd_inspect(&a, &mut std::io::stdout().lock()),
    }
}

/// Parses arguments, runs the command and maps errors to the exit-code contract.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn default_out_dir(cfg: &RunConfigFile) -> PathBuf {
    let leaf = format!("{}-{}-seed{}", cfg.environment.name, cfg.learner.variant, cfg.seed);
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) => PathBuf::from(root).join(leaf),
        None => PathBuf::from("runs").join(leaf),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents)?;
    Ok(())
}

pub fn cmd_learn(args: &LearnArgs) -> Result<PathBuf> {
    let mut cfg = RunConfigFile::load(&args.config)?;
    if let Some(v) = args.variant {
        cfg.learner.variant = v;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = args.max_queries {
        cfg.learner.max_queries = m;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = Some(o.clone());
    }
    let cfg = cfg.resolve()?;
    let out = cfg.output_dir.clone().unwrap_or_else(|| default_out_dir(&cfg));
    let env = Builtin::from_spec(&cfg.environment)?;

    let snapshots = out.join("snapshots");
    if snapshots.exists() {
        fs::remove_dir_all(&snapshots)?;
    }
    fs::create_dir_all(&snapshots)?;

    let start = Instant::now();
    let mut io_error: Option<Error> = None;
    let quiet = args.quiet;
    let outcome = with_env!(&env, e => learner::run::<_, f64>(e, &cfg.learner, |ev| {
        if io_error.is_some() {
            return;
        }
        let r = ev.record;
        let res = model_io::to_json(ev.pess)
            .and_then(|json| write_file(&snapshots.join(format!("{}.json", r.snapshot)), json.as_bytes()));
        if let Err(err) = res {
            io_error = Some(err);
        }
        if !quiet {
            println!(
                "{} {} score={:.4}{} novel={} unique={} executions={} capabilities={} t={:.1}s",
                r.snapshot,
                r.variant,
                r.score,
                if r.fallback { " (random)" } else { "" },
                r.novel,
                r.unique_transitions,
                r.cumulative_capability_executions,
                r.capabilities,
                r.elapsed_seconds
            );
        }
    }))?;
    if let Some(err) = io_error {
        return Err(err);
    }

    let u = env.universe();
    write_file(&out.join("model.json"), model_io::to_json(&outcome.pess)?.as_bytes())?;
    write_file(&out.join("model_optimistic.json"), model_io::to_json(&outcome.opt)?.as_bytes())?;
    write_file(&out.join("model.txt"), model_io::to_text(&outcome.pess).as_bytes())?;
    let mut log = BufWriter::new(fs::File::create(out.join("runlog.jsonl"))?);
    outcome.log.write_jsonl(&mut log)?;
    log.flush()?;
    let mut data = BufWriter::new(fs::File::create(out.join("dataset.jsonl"))?);
    outcome.dataset.write_jsonl(u, &mut data)?;
    data.flush()?;
    let last = serde_json::to_string_pretty(&outcome.last_policy.to_json(u))?;
    write_file(&out.join("last_query.json"), last.as_bytes())?;
    let manifest = RunManifest {
        queries: outcome.log.records.len(),
        capability_executions: outcome.log.records.last().map_or(0, |r| r.cumulative_capability_executions),
        stop: outcome.stop,
        wall_seconds: start.elapsed().as_secs_f64(),
        config: cfg,
    };
    write_file(&out.join("run.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    if !quiet {
        println!(
            "stopped ({:?}) after {} queries; wrote {}",
            manifest.stop,
            manifest.queries,
            out.display()
        );
    }
    Ok(out)
}

/// One CSV row per snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub checkpoint: String,
    pub queries: usize,
    pub unique_transitions: usize,
    pub vd_sampled: f64,
    pub vd_exact_if_available: Option<f64>,
    pub wall_seconds: f64,
}

fn snapshot_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    if dir.is_dir() {
        for entry in fs::read_dir(dir)? {
            let p = entry?.path();
            if p.extension().is_some_and(|x| x == "json") {
                paths.push(p);
            }
        }
    }
    paths.sort();
    Ok(paths)
}

pub fn evaluate_run(run_dir: &Path, eval: &EvalConfig) -> Result<Vec<EvalRow>> {
    let snaps = snapshot_paths(&run_dir.join("snapshots"))?;
    if snaps.is_empty() {
        return Err(Error::Environment(format!("no model snapshots under {}", run_dir.display())));
    }
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(run_dir.join("run.json"))?)?;
    let log = RunLog::read_jsonl(BufReader::new(fs::File::open(run_dir.join("runlog.jsonl"))?))?;
    let by_snapshot: BTreeMap<&str, &learner::QueryRecord> =
        log.records.iter().map(|r| (r.snapshot.as_str(), r)).collect();

    let env = Builtin::from_spec(&manifest.config.environment)?;
    let theta = manifest.config.learner.theta.unwrap_or_else(|| env.default_theta());
    let final_model: CapabilityModel<f64> = model_io::from_json(&fs::read_to_string(snaps.last().expect("nonempty"))?)?;
    let intents: BTreeMap<String, LiteralConjunction> =
        final_model.capabilities().map(|c| (c.name.clone(), c.intent.clone())).collect();
    let (agent_data, seqs) = with_env!(&env, e => generate_eval_dataset(e, &intents, eval, theta))?;
    let s0 = with_env!(&env, e => e.abstraction(&e.reset_state()));
    let truth = env.ground_truth();
    let dstar = ground_truth_transitions(&truth, &s0);

    let mut rows = Vec::with_capacity(snaps.len());
    for path in &snaps {
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let model: CapabilityModel<f64> = model_io::from_json(&fs::read_to_string(path)?)?;
        let filtered = evaluation_filter(&model);
        let mut rng = ChaCha8Rng::seed_from_u64(eval.seed);
        let replay = model_replay(&filtered, &seqs, &s0, &mut rng);
        let rec = by_snapshot.get(name.as_str());
        rows.push(EvalRow {
            queries: rec.map_or(0, |r| r.index + 1),
            unique_transitions: rec.map_or(0, |r| r.unique_transitions),
            wall_seconds: rec.map_or(0.0, |r| r.elapsed_seconds),
            vd_sampled: sampled_vd(&agent_data, &replay),
            vd_exact_if_available: Some(exact_vd(&model, &dstar)),
            checkpoint: name,
        });
    }
    Ok(rows)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let manifest_path = args.run.join("run.json");
    let mut eval = match fs::read_to_string(&manifest_path) {
        Ok(text) => serde_json::from_str::<RunManifest>(&text)?.config.evaluation,
        Err(_) => EvalConfig::default(),
    };
    if let Some(n) = args.episodes {
        eval.episodes = n;
    }
    if let Some(n) = args.min_len {
        eval.min_len = n;
    }
    if let Some(n) = args.max_len {
        eval.max_len = n;
    }
    eval.validate()?;
    let rows = evaluate_run(&args.run, &eval)?;
    let out = args.out.clone().unwrap_or_else(|| args.run.join("evaluation.csv"));
    let mut w = csv::Writer::from_path(&out)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    if let Some(last) = rows.last() {
        println!(
            "{} checkpoints; final vd_sampled={:.4} vd_exact={} -> {}",
            rows.len(),
            last.vd_sampled,
            last.vd_exact_if_available.map_or("n/a".into(), |v| format!("{v:.4}")),
            out.display()
        );
    }
    Ok(())
}

pub fn cmd_inspect(args: &InspectArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(p) = &args.model {
        let model: CapabilityModel<f64> = model_io::from_json(&fs::read_to_string(p)?)?;
        out.write_all(model_io::to_text(&model).as_bytes())?;
    } else if let Some(p) = &args.dataset {
        for (i, line) in BufReader::new(fs::File::open(p)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value =
                serde_json::from_str(&line).map_err(|e| Error::Format(format!("dataset line {}: {e}", i + 1)))?;
            writeln!(out, "{v}")?;
        }
    } else if let Some(p) = &args.last_query {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p)?)?;
        writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
    } else if let Some(name) = &args.ground_truth {
        let env = Builtin::named(name, &EnvParams::default())?;
        out.write_all(model_io::to_text(&env.ground_truth()).as_bytes())?;
    }
    Ok(())
}
