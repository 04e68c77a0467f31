use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use commrobust::adversarial::{metattack, nettack_attack, write_flips, MetattackConfig, NettackConfig};
use commrobust::graph::{Graph, Partition};
use commrobust::harness::{
    apply_perturbation, emit_plot_data, generate_graph, read_bundle, read_csv, read_json, read_partition, run_matrix,
    summarize, train_and_score, write_bundle, write_json, write_partition, DatasetSpec, ExperimentConfig,
    HarnessError,
};
use commrobust::models::{save_checkpoint, Architecture};
use commrobust::perturb::PerturbationKind;
use commrobust::similarity::{ecs, EcsParams};
use commrobust::synth::{AttributeParams, LfrParams};

#[derive(Parser)]
#[command(name = "commrobust", version, about = "Robustness benchmark for GNN community detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML or JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic graph bundle.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Mixing parameter (LFR) or inter-community degree (ADC-SBM).
        #[arg(long)]
        strength: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply attribute noise or edge deletion to a bundle.
    Perturb {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        kind: PerturbationKind,
        #[arg(long)]
        level: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run Nettack or Metattack; flips go to `<out>.flips.jsonl`.
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        kind: PerturbationKind,
        /// Target fraction (Nettack) or budget fraction (Metattack).
        #[arg(long)]
        level: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a labeled bundle and write its partition.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: Architecture,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Element-centric similarity between two partition files.
    Eval {
        #[command(flatten)]
        common: Common,
        first: PathBuf,
        second: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        alpha: f64,
    },
    /// Run the full matrix from a config.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summary tables and plot series from a results file.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::new(DatasetSpec::Lfr {
            lfr: LfrParams::default(),
            attributes: AttributeParams::default(),
        }),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn labels_of(g: &Graph, path: &Path) -> Result<Partition, HarnessError> {
    g.labels()
        .cloned()
        .ok_or_else(|| HarnessError::Data(format!("{}: bundle has no label line", path.display())))
}

fn attrs_of(g: &Graph, path: &Path) -> Result<commrobust::Tensor, HarnessError> {
    g.attrs()
        .cloned()
        .ok_or_else(|| HarnessError::Data(format!("{}: bundle has no attribute block", path.display())))
}

fn with_parts(g: Graph, x: commrobust::Tensor, labels: Option<Partition>) -> Result<Graph, HarnessError> {
    let g = g.with_attrs(x).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    match labels {
        Some(l) => g.with_labels(l).map_err(|e| HarnessError::Runtime(e.to_string())),
        None => Ok(g),
    }
}

fn emit(format: Format, fields: &[(&str, String)]) {
    match format {
        Format::Csv => {
            let keys: Vec<&str> = fields.iter().map(|f| f.0).collect();
            let vals: Vec<&str> = fields.iter().map(|f| f.1.as_str()).collect();
            println!("{}\n{}", keys.join(","), vals.join(","));
        }
        Format::Json => {
            let map: serde_json::Map<String, serde_json::Value> = fields
                .iter()
                .map(|(k, v)| {
                    let val = v.parse::<f64>().map(serde_json::Value::from).unwrap_or_else(|_| v.clone().into());
                    (k.to_string(), val)
                })
                .collect();
            println!("{}", serde_json::Value::Object(map));
        }
    }
}

fn execute(cmd: Command) -> Result<(), HarnessError> {
    match cmd {
        Command::Generate { common, strength, out } => {
            let cfg = load_config(&common)?;
            let strength = strength.or(cfg.strengths.first().copied()).unwrap_or(0.1);
            let g = generate_graph(&cfg.dataset, strength, cfg.seed)?;
            write_bundle(&g, &out)?;
            emit(common.format, &[("nodes", g.n().to_string()), ("edges", g.m().to_string())]);
        }
        Command::Perturb { common, input, kind, level, out } => {
            if kind.is_adversarial() {
                return Err(HarnessError::Config(format!("use `attack` for {kind}")));
            }
            let cfg = load_config(&common)?;
            let g = read_bundle(&input)?;
            let x = attrs_of(&g, &input)?;
            let truth = g.labels().cloned().unwrap_or_else(|| Partition::singletons(g.n()));
            let p = apply_perturbation(&g, &x, &truth, kind, level, &cfg.nettack, &cfg.metattack, cfg.seed)?;
            let removed = g.m() - p.graph.m();
            write_bundle(&with_parts(p.graph, p.x, g.labels().cloned())?, &out)?;
            emit(common.format, &[("kind", kind.to_string()), ("level", level.to_string()), ("edges_removed", removed.to_string())]);
        }
        Command::Attack { common, input, kind, level, out } => {
            let cfg = load_config(&common)?;
            let g = read_bundle(&input)?;
            let x = attrs_of(&g, &input)?;
            let truth = labels_of(&g, &input)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let level = level.unwrap_or_else(|| kind.levels()[0]);
            let run = |e: commrobust::adversarial::AdversarialError| HarnessError::Runtime(e.to_string());
            let outcome = match kind {
                PerturbationKind::Nettack => {
                    let c = NettackConfig { target_fraction: level, ..cfg.nettack.clone() };
                    nettack_attack(&g, &x, &truth, &c, &mut rng).map_err(run)?
                }
                PerturbationKind::Metattack => {
                    let c = MetattackConfig { budget_fraction: level, ..cfg.metattack.clone() };
                    metattack(&g, &x, &truth, &c, &mut rng).map_err(run)?
                }
                other => return Err(HarnessError::Config(format!("{other} is not an attack; use `perturb`"))),
            };
            let flips_path = PathBuf::from(format!("{}.flips.jsonl", out.display()));
            let file = std::fs::File::create(&flips_path).map_err(|e| HarnessError::Io { path: flips_path.clone(), source: e })?;
            write_flips(&outcome.flips, std::io::BufWriter::new(file))
                .map_err(|e| HarnessError::Io { path: flips_path.clone(), source: e })?;
            let (edges, features) = (outcome.edge_flips(), outcome.feature_flips());
            write_bundle(&with_parts(outcome.graph, outcome.x, Some(truth))?, &out)?;
            emit(common.format, &[("edge_flips", edges.to_string()), ("feature_flips", features.to_string())]);
        }
        Command::Train { common, input, model, out, checkpoint } => {
            let cfg = load_config(&common)?;
            let g = read_bundle(&input)?;
            let x = attrs_of(&g, &input)?;
            let truth = labels_of(&g, &input)?;
            let (m, score) = train_and_score(&g, &x, &truth, &cfg.model_config(model), &cfg.ecs, cfg.seed)?;
            let p = m.predict(&g, &x).map_err(|e| HarnessError::Runtime(e.to_string()))?;
            write_partition(&p, &out)?;
            if let Some(path) = checkpoint {
                let file = std::fs::File::create(&path).map_err(|e| HarnessError::Io { path: path.clone(), source: e })?;
                save_checkpoint(&m, std::io::BufWriter::new(file)).map_err(|e| HarnessError::Runtime(e.to_string()))?;
            }
            emit(common.format, &[("model", model.to_string()), ("ecs", format!("{score:.6}"))]);
        }
        Command::Eval { common, first, second, alpha } => {
            let a = read_partition(&first)?;
            let b = read_partition(&second)?;
            let params = EcsParams { alpha, ..EcsParams::default() };
            params.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
            let s: f64 = ecs(&a, &b, &params).map_err(|e| HarnessError::Data(e.to_string()))?;
            emit(common.format, &[("ecs", format!("{s:.6}"))]);
        }
        Command::Run { common, jobs, out } => {
            if common.config.is_none() {
                return Err(HarnessError::Config("`run` needs --config".into()));
            }
            let mut cfg = load_config(&common)?;
            if let Some(j) = jobs {
                cfg.jobs = j;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            std::fs::create_dir_all(&cfg.out_dir).map_err(|e| HarnessError::Io { path: cfg.out_dir.clone(), source: e })?;
            let csv = cfg.out_dir.join("results.csv");
            let outcome = run_matrix(&cfg, Some(&csv))?;
            if let Format::Json = common.format {
                write_json(&outcome.records, &cfg.out_dir.join("results.json"))?;
            }
            let failures = cfg.out_dir.join("failures.jsonl");
            let mut text = String::new();
            for f in &outcome.failures {
                text += &serde_json::to_string(f).map_err(|e| HarnessError::Runtime(e.to_string()))?;
                text.push('\n');
            }
            std::fs::write(&failures, text).map_err(|e| HarnessError::Io { path: failures.clone(), source: e })?;
            log::info!("{} records, {} failures", outcome.records.len(), outcome.failures.len());
            emit(
                common.format,
                &[("records", outcome.records.len().to_string()), ("failures", outcome.failures.len().to_string())],
            );
        }
        Command::Report { common, input, out } => {
            let records = if input.extension().is_some_and(|e| e == "json") { read_json(&input)? } else { read_csv(&input)? };
            if records.is_empty() {
                return Err(HarnessError::Data(format!("{}: no records", input.display())));
            }
            let summary = summarize(&records);
            let mut files = summary.write(&out, matches!(common.format, Format::Json))?;
            files.extend(emit_plot_data(&records, &out)?);
            for f in files {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
