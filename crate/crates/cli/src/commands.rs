use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use steerbench_core::codec;
use steerbench_core::dataset::generate_dataset;
use steerbench_core::experiment::{
    horizon_run, run_seed, scaling_sweep, write_run, ExperimentConfig, HorizonSeries, ScalingRow,
};
use steerbench_core::metrics::MetricValues;
use steerbench_core::model::{ActivationModel, ModelConfig};
use steerbench_core::persona::{
    generate_personas, import_personas, time_slot, validate_distribution, PersonaSchedule, SchedulePool,
    DEFAULT_MIX,
};
use steerbench_core::schema::{ActivityContext, ActivityType, DatasetTuple, Split};
use steerbench_core::sft;
use steerbench_core::steering::{ContrastivePair, SteeringConfig, SteeringState};
use steerbench_core::templates::TEMPLATE_VERSION;
use steerbench_core::user_sim::remote::{RemoteConfig, RemoteJudge};
use steerbench_core::user_sim::{OracleUser, UserBackend};
use steerbench_service::ServiceConfig;

use crate::{Backend, Command, RemoteArgs, RunArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] steerbench_core::Error),
    #[error(transparent)]
    Service(#[from] steerbench_service::ServiceError),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
}

type Result<T> = std::result::Result<T, CliError>;

/// `println!` that tolerates a closed stdout (e.g. piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

const TUPLES: &str = "tuples.jsonl";
const SCHEDULES: &str = "schedules.jsonl";

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(steerbench_core::Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    Ok(codec::atomic_write(path, bytes)?)
}

fn load_toml<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn experiment(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = load_toml(args.config.as_deref())?;
    if let Some(s) = &args.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(n) = args.personas {
        cfg.personas = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: Serialize>(value: &T) {
    say!("{}", serde_json::to_string_pretty(value).expect("reports serialize"));
}

pub fn run(command: Command) -> Result<u8> {
    match command {
        Command::GenPersonas { count, seed, out } => {
            let personas = generate_personas(count, seed)?;
            write(&out, codec::encode_lines(&personas).as_bytes())?;
            say!("wrote {} personas to {}", personas.len(), out.display());
            Ok(0)
        }
        Command::GenDataset {
            personas,
            seed,
            out,
            backend,
            per_persona,
            remote,
        } => gen_dataset(&personas, seed, &out, backend, per_persona, &remote),
        Command::ValidateDataset { input, tolerance } => validate_dataset(&input, tolerance),
        Command::Simulate {
            run,
            strategies,
            no_records,
        } => {
            let mut cfg = experiment(&run)?;
            if let Some(s) = strategies {
                cfg.strategies = s;
            }
            cfg.validate()?;
            let runs: Vec<_> = cfg
                .seeds
                .par_iter()
                .map(|seed| run_seed(&cfg, *seed, &OracleUser))
                .collect::<std::result::Result<_, _>>()?;
            for r in &runs {
                let dir = write_run(&run.out, &cfg, r, !no_records)?;
                say!("{}", dir.display());
                for s in &r.strategies {
                    if let Some(rep) = s.report(Split::All) {
                        say!("  {:<9} {}", s.strategy.to_string(), summary(&rep.overall));
                    }
                }
            }
            Ok(0)
        }
        Command::Sweep { run, counts } => {
            let cfg = experiment(&run)?;
            let rows = scaling_sweep(&cfg, &counts, &OracleUser)?;
            let mut csv = String::from("count,seed,strategy,split,cas,psc,tai,iqa,n\n");
            for r in &rows {
                csv.push_str(&sweep_row(r));
            }
            write(&run.out.join("sweep.csv"), csv.as_bytes())?;
            write_manifest(&run.out, &cfg, json!({"counts": counts}))?;
            say!("{}", csv.trim_end());
            Ok(0)
        }
        Command::Horizon { run, opportunities } => {
            let mut cfg = experiment(&run)?;
            cfg.opportunities = opportunities;
            let series: Vec<HorizonSeries> = cfg
                .seeds
                .par_iter()
                .map(|seed| horizon_run(&cfg, *seed, &OracleUser))
                .collect::<std::result::Result<_, _>>()?;
            let mut csv = String::from("seed,window,tai,cas,psc,iqa,n\n");
            for s in &series {
                for (i, w) in s.windows.iter().enumerate() {
                    csv.push_str(&format!(
                        "{},{i},{},{},{},{},{}\n",
                        s.seed,
                        cell(w.tai),
                        cell(w.cas),
                        cell(w.psc),
                        cell(w.iqa),
                        w.n
                    ));
                }
                say!(
                    "seed {}: tai spread {:.4}, max alpha {:.4}, alpha violations {}",
                    s.seed, s.tai_spread, s.max_alpha, s.alpha_violations
                );
            }
            write(&run.out.join("horizon.csv"), csv.as_bytes())?;
            write(&run.out.join("horizon.json"), codec::encode_lines(&series).as_bytes())?;
            write_manifest(&run.out, &cfg, json!({"opportunities": opportunities}))?;
            Ok(0)
        }
        Command::ExportSft { phase, input, out } => {
            let tuples: Vec<DatasetTuple> = codec::read_lines(&dataset_file(&input, TUPLES))?;
            let n = match phase {
                1 => sft::export_phase1(&tuples, &out)?,
                _ => sft::export_phase2(&tuples, &out)?,
            };
            say!("wrote {n} phase-{phase} examples to {}", out.display());
            Ok(0)
        }
        Command::SteerDemo {
            pairs,
            text,
            activity_type,
            start_minute,
        } => steer_demo(&pairs, &text, &activity_type, start_minute),
        Command::Serve {
            port,
            host,
            data_dir,
            static_dir,
            config,
            token,
        } => {
            let mut cfg: ServiceConfig = load_toml(config.as_deref())?;
            if let Some(d) = data_dir {
                cfg.data_dir = d;
            }
            if static_dir.is_some() {
                cfg.static_dir = static_dir;
            }
            if token.is_some() {
                cfg.token = token;
            }
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| io(Path::new("tokio runtime"), e))?;
            rt.block_on(steerbench_service::serve(cfg, (host, port).into()))?;
            Ok(0)
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

fn summary(v: &MetricValues) -> String {
    format!(
        "n={} tai={} cas={} psc={} iqa={}",
        v.n,
        cell(v.tai),
        cell(v.cas),
        cell(v.psc),
        cell(v.iqa)
    )
}

fn sweep_row(r: &ScalingRow) -> String {
    let v = &r.values;
    let split = match r.split {
        Split::Seen => "seen",
        Split::Unseen => "unseen",
        Split::All => "all",
    };
    format!(
        "{},{},{},{split},{},{},{},{},{}\n",
        r.count,
        r.seed,
        r.strategy,
        cell(v.cas),
        cell(v.psc),
        cell(v.tai),
        cell(v.iqa),
        v.n
    )
}

fn write_manifest(dir: &Path, cfg: &ExperimentConfig, extra: serde_json::Value) -> Result<()> {
    let manifest = json!({
        "config_hash": cfg.hash(),
        "config": cfg,
        "template_version": TEMPLATE_VERSION,
        "extra": extra,
    });
    write(&dir.join("manifest.json"), codec::to_line(&manifest).as_bytes())
}

/// `path` itself when it is a file, else `path/name`.
fn dataset_file(path: &Path, name: &str) -> PathBuf {
    if path.is_file() {
        path.to_owned()
    } else {
        path.join(name)
    }
}

fn gen_dataset(
    personas: &Path,
    seed: u64,
    out: &Path,
    backend: Backend,
    per_persona: usize,
    remote: &RemoteArgs,
) -> Result<u8> {
    let personas = import_personas(personas, seed)?;
    let user: Box<dyn UserBackend> = match backend {
        Backend::Oracle => Box::new(OracleUser),
        Backend::Remote => {
            let (Some(url), Some(model)) = (&remote.remote_url, &remote.remote_model) else {
                return Err(CliError::Usage(
                    "--backend remote needs --remote-url and --remote-model".into(),
                ));
            };
            Box::new(RemoteJudge::new(RemoteConfig::new(url.clone(), model.clone())))
        }
    };
    let tuples = generate_dataset(&personas, seed, &DEFAULT_MIX, per_persona, user.as_ref())?;
    let pool = SchedulePool::generate(personas, seed, &DEFAULT_MIX)?;
    write(&out.join(SCHEDULES), codec::encode_lines(&pool.schedule_lines()).as_bytes())?;
    write(&out.join(TUPLES), codec::encode_lines(&tuples).as_bytes())?;
    let manifest = json!({
        "seed": seed,
        "personas": pool.personas.len(),
        "tuples": tuples.len(),
        "per_persona": per_persona,
        "backend": format!("{backend:?}").to_lowercase(),
        "target_mix": DEFAULT_MIX,
        "template_version": TEMPLATE_VERSION,
    });
    write(&out.join("manifest.json"), codec::to_line(&manifest).as_bytes())?;
    say!("wrote {} tuples for {} personas to {}", tuples.len(), pool.personas.len(), out.display());
    Ok(0)
}

fn validate_dataset(dir: &Path, tolerance: f64) -> Result<u8> {
    let schedules: Vec<PersonaSchedule> = codec::read_lines(&dir.join(SCHEDULES))?;
    let report = validate_distribution(schedules.iter().map(|s| &s.days), &DEFAULT_MIX, tolerance)?;
    let tuples_path = dir.join(TUPLES);
    let mut invalid = Vec::new();
    let mut count = 0;
    if tuples_path.exists() {
        let tuples: Vec<DatasetTuple> = codec::read_lines(&tuples_path)?;
        count = tuples.len();
        for (i, t) in tuples.iter().enumerate() {
            if let Err(e) = t.validate() {
                invalid.push(format!("tuple {i}: {e}"));
            }
        }
    }
    let pass = report.pass && invalid.is_empty();
    print_json(&json!({
        "pass": pass,
        "distribution": report,
        "tuples": count,
        "invalid_tuples": invalid,
    }));
    Ok(if pass { 0 } else { crate::EX_INVALID })
}

fn steer_demo(pairs: &Path, text: &str, activity_type: &str, start_minute: u32) -> Result<u8> {
    let t = ActivityType::parse_key(activity_type)
        .ok_or_else(|| CliError::Usage(format!("unknown activity type `{activity_type}`")))?;
    let pairs: Vec<ContrastivePair> = if fs::metadata(pairs).map_err(|e| io(pairs, e))?.len() == 0 {
        Vec::new()
    } else {
        codec::read_lines(pairs)?
    };
    let model = ActivationModel::new(ModelConfig::default())?;
    let state = SteeringState::for_encoder(&model, SteeringConfig::default())?;
    let state = if pairs.is_empty() { state } else { state.update(&pairs, &model)? };
    let ctx = ActivityContext {
        activity_type: t,
        day: 0,
        period_index: time_slot(start_minute),
        start_minute,
        duration_minutes: 30,
        description: format!("{t}: {text}"),
        template_id: 0,
    };
    let prompt = ActivationModel::render_prompt(&ctx, "");
    let before = model.descriptor_for(&prompt, &ctx, &Default::default())?;
    let after = model.descriptor_for(&prompt, &ctx, &state.build_injection())?;
    print_json(&json!({
        "pairs": pairs.len(),
        "alphas": state.alphas(),
        "before": before,
        "after": after,
    }));
    Ok(0)
}
