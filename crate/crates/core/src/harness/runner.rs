use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversarial::{metattack, nettack_attack, MetattackConfig, NettackConfig};
use crate::graph::{Graph, Partition};
use crate::models::{fit, stratified_split, Architecture, ModelConfig, TrainedModel};
use crate::perturb::{
    apply_edge_deletion, perturb_attributes, AttributeKind, DeletionKind, EdgeDeletionSpec, PerturbationKind,
};
use crate::similarity::{ecs, EcsParams};
use crate::synth::{adcsbm_generate, gen_attributes, lfr_generate, AdcSbmParams, LfrParams};
use crate::tensor::Tensor;

use super::config::{DatasetSpec, ExperimentConfig, Regime};
use super::dataset::load_content_cites;
use super::records::{CsvSink, RunRecord};
use super::seed::{derive_seed, SeedKey};
use super::HarnessError;

/// A cell that produced no record, and why.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub dataset: String,
    pub model: Option<String>,
    pub strength: f64,
    pub perturbation: Option<String>,
    pub level: Option<f64>,
    pub realization: usize,
    pub stage: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatrixOutcome {
    pub records: Vec<RunRecord>,
    pub failures: Vec<Failure>,
}

/// Perturbed graph and attributes.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbed {
    pub graph: Graph,
    pub x: Tensor<f64>,
}

/// Applies one perturbation at one level. Adversarial kinds read the level
/// as the Nettack target fraction or the Metattack budget fraction.
pub fn apply_perturbation(
    g: &Graph,
    x: &Tensor<f64>,
    truth: &Partition,
    kind: PerturbationKind,
    level: f64,
    nettack: &NettackConfig,
    meta: &MetattackConfig,
    seed: u64,
) -> Result<Perturbed, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let err = |e: String| HarnessError::Runtime(format!("{kind} at {level}: {e}"));
    Ok(match kind {
        PerturbationKind::Location | PerturbationKind::Scale => {
            let ak = if kind == PerturbationKind::Location { AttributeKind::Location } else { AttributeKind::Scale };
            let x = perturb_attributes(x, ak, level, &mut rng).map_err(|e| err(e.to_string()))?;
            Perturbed { graph: g.clone(), x }
        }
        PerturbationKind::Random | PerturbationKind::Targeted => {
            let dk = if kind == PerturbationKind::Random { DeletionKind::Random } else { DeletionKind::Targeted };
            let graph = apply_edge_deletion(g, &EdgeDeletionSpec::new(dk, level), &mut rng).map_err(|e| err(e.to_string()))?;
            Perturbed { graph, x: x.clone() }
        }
        PerturbationKind::Nettack => {
            let cfg = NettackConfig { target_fraction: level, ..nettack.clone() };
            let out = nettack_attack(g, x, truth, &cfg, &mut rng).map_err(|e| err(e.to_string()))?;
            Perturbed { graph: out.graph, x: out.x }
        }
        PerturbationKind::Metattack => {
            let cfg = MetattackConfig { budget_fraction: level, budget: None, ..meta.clone() };
            let out = metattack(g, x, truth, &cfg, &mut rng).map_err(|e| err(e.to_string()))?;
            Perturbed { graph: out.graph, x: out.x }
        }
    })
}

/// Trains on `(g, x)` and scores the argmax partition against `truth`.
/// Supervised models see a stratified labeled split; unsupervised heads get
/// `k = truth.k()` when the config leaves it open.
pub fn train_and_score(
    g: &Graph,
    x: &Tensor<f64>,
    truth: &Partition,
    cfg: &ModelConfig,
    ecs_params: &EcsParams,
    seed: u64,
) -> Result<(TrainedModel<f64>, f64), HarnessError> {
    let mut cfg = cfg.clone();
    cfg.k = cfg.k.or(Some(truth.k()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let split = if cfg.arch.is_supervised() { stratified_split(truth, cfg.train_fraction, &mut rng) } else { Vec::new() };
    let model = fit(g, x, Some(truth), &cfg, &split, &mut rng).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let score = score(&model, g, x, truth, ecs_params)?;
    Ok((model, score))
}

fn score(m: &TrainedModel<f64>, g: &Graph, x: &Tensor<f64>, truth: &Partition, p: &EcsParams) -> Result<f64, HarnessError> {
    let pred = m.predict(g, x).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    ecs(&pred, truth, p).map_err(|e| HarnessError::Runtime(e.to_string()))
}

fn attempt_seed(seed: u64, attempt: usize) -> u64 {
    if attempt == 0 {
        seed
    } else {
        derive_seed(seed, &SeedKey { realization: Some(attempt), ..SeedKey::dataset("retry") })
    }
}

struct Instance {
    graph: Graph,
    x: Tensor<f64>,
    truth: Partition,
}

fn load_files(cfg: &ExperimentConfig) -> Result<Option<Instance>, HarnessError> {
    let DatasetSpec::Files { content, cites } = &cfg.dataset else {
        return Ok(None);
    };
    let data = load_content_cites(content, cites)?;
    let truth = data.graph.labels().cloned().expect("loader attaches labels");
    let x = data.graph.attrs().cloned().expect("loader attaches attributes");
    Ok(Some(Instance { graph: data.graph, x, truth }))
}

/// Samples one synthetic instance with attributes and ground-truth labels
/// attached. `strength` replaces `mu` (LFR) or `rho` (ADC-SBM).
pub fn generate_graph(dataset: &DatasetSpec, strength: f64, seed: u64) -> Result<Graph, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let err = |e: crate::synth::SynthError| HarnessError::Runtime(format!("generation: {e}"));
    let (graph, truth, x) = match dataset {
        DatasetSpec::Lfr { lfr, attributes } => {
            let params = LfrParams { mu: strength, ..lfr.clone() };
            let (graph, truth) = lfr_generate(&params, &mut rng).map_err(err)?;
            let x = gen_attributes(&truth, attributes, &mut rng).map_err(err)?;
            (graph, truth, x)
        }
        DatasetSpec::Adcsbm { sbm, attributes } => {
            let params = AdcSbmParams { rho: strength, ..sbm.clone() };
            adcsbm_generate(&params, attributes, &mut rng).map_err(err)?
        }
        DatasetSpec::Files { .. } => {
            return Err(HarnessError::Config("file datasets are loaded, not generated".into()));
        }
    };
    graph
        .with_attrs(x)
        .and_then(|g| g.with_labels(truth))
        .map_err(|e| HarnessError::Runtime(e.to_string()))
}

fn generate(cfg: &ExperimentConfig, strength: f64, seed: u64) -> Result<Instance, HarnessError> {
    let graph = generate_graph(&cfg.dataset, strength, seed)?;
    let truth = graph.labels().cloned().expect("attached");
    let x = graph.attrs().cloned().expect("attached");
    Ok(Instance { graph, x, truth })
}

struct Task {
    strength: f64,
    realization: usize,
}

fn run_task(cfg: &ExperimentConfig, task: &Task, shared: Option<&Instance>) -> MatrixOutcome {
    let dataset = cfg.dataset_name().to_string();
    let mut out = MatrixOutcome::default();
    let fail = |model: Option<&str>, kind: Option<PerturbationKind>, level: Option<f64>, stage: &str, e: &HarnessError| Failure {
        dataset: dataset.clone(),
        model: model.map(str::to_string),
        strength: task.strength,
        perturbation: kind.map(|k| k.name().to_string()),
        level,
        realization: task.realization,
        stage: stage.to_string(),
        reason: e.to_string(),
    };
    let key = SeedKey {
        strength: Some(task.strength),
        realization: Some(task.realization),
        ..SeedKey::dataset(&dataset)
    };
    let generated;
    let inst = match shared {
        Some(i) => i,
        None => match generate(cfg, task.strength, derive_seed(cfg.seed, &key)) {
            Ok(i) => {
                generated = i;
                &generated
            }
            Err(e) => {
                out.failures.push(fail(None, None, None, "generate", &e));
                return out;
            }
        },
    };

    let train = |arch: Architecture, g: &Graph, x: &Tensor<f64>| -> Result<(TrainedModel<f64>, f64), HarnessError> {
        let seed = derive_seed(cfg.seed, &SeedKey { model: Some(arch.name()), ..key });
        let mcfg = cfg.model_config(arch);
        let mut last = None;
        for attempt in 0..cfg.max_attempts {
            match train_and_score(g, x, &inst.truth, &mcfg, &cfg.ecs, attempt_seed(seed, attempt)) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    log::warn!("{arch} attempt {} failed: {e}", attempt + 1);
                    last = Some(e);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    };

    let mut baselines: Vec<Option<(TrainedModel<f64>, f64)>> = Vec::new();
    for &arch in &cfg.models {
        match train(arch, &inst.graph, &inst.x) {
            Ok(b) => baselines.push(Some(b)),
            Err(e) => {
                out.failures.push(fail(Some(arch.name()), None, None, "baseline", &e));
                baselines.push(None);
            }
        }
    }

    let mut per_model: Vec<Vec<RunRecord>> = vec![Vec::new(); cfg.models.len()];
    for spec in &cfg.perturbations {
        for level in spec.levels() {
            let pkey = SeedKey { kind: Some(spec.kind.name()), level: Some(level), ..key };
            let pseed = derive_seed(cfg.seed, &pkey);
            let t0 = Instant::now();
            let perturbed = apply_perturbation(
                &inst.graph,
                &inst.x,
                &inst.truth,
                spec.kind,
                level,
                &cfg.nettack,
                &cfg.metattack,
                pseed,
            );
            let perturb_ms = t0.elapsed().as_millis() as u64;
            let p = match perturbed {
                Ok(p) => p,
                Err(e) => {
                    for &arch in &cfg.models {
                        out.failures.push(fail(Some(arch.name()), Some(spec.kind), Some(level), "perturb", &e));
                    }
                    continue;
                }
            };
            for (mi, &arch) in cfg.models.iter().enumerate() {
                let Some((clean, baseline)) = &baselines[mi] else { continue };
                let t1 = Instant::now();
                let scored = match cfg.regime {
                    Regime::Poisoning => train(arch, &p.graph, &p.x).map(|(_, s)| s),
                    Regime::Evasion => score(clean, &p.graph, &p.x, &inst.truth, &cfg.ecs),
                };
                match scored {
                    Ok(s) => per_model[mi].push(RunRecord {
                        dataset: dataset.clone(),
                        model: arch.name().to_string(),
                        strength: task.strength,
                        perturbation: spec.kind.name().to_string(),
                        level,
                        realization: task.realization,
                        seed: pseed,
                        baseline_ecs: *baseline,
                        ecs: s,
                        runtime_ms: if cfg.record_timing { perturb_ms + t1.elapsed().as_millis() as u64 } else { 0 },
                    }),
                    Err(e) => out.failures.push(fail(Some(arch.name()), Some(spec.kind), Some(level), "perturbed", &e)),
                }
            }
        }
    }
    out.records = per_model.into_iter().flatten().collect();
    out
}

/// Runs every (strength, realization) task on a pool of `cfg.jobs` workers.
/// Records come back, and are streamed to `csv` when given, in the fixed
/// order strength, realization, model, perturbation, level, so the output
/// does not depend on the worker count.
pub fn run_matrix(cfg: &ExperimentConfig, csv: Option<&Path>) -> Result<MatrixOutcome, HarnessError> {
    cfg.validate()?;
    let shared = load_files(cfg)?;
    let tasks: Vec<Task> = cfg
        .effective_strengths()
        .into_iter()
        .flat_map(|strength| (0..cfg.realizations).map(move |realization| Task { strength, realization }))
        .collect();
    let sink = csv.map(CsvSink::create).transpose()?.map(Mutex::new);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let results: Vec<Result<MatrixOutcome, HarnessError>> = pool.install(|| {
        tasks
            .par_iter()
            .enumerate()
            .map(|(i, task)| {
                let outcome = run_task(cfg, task, shared.as_ref());
                log::info!(
                    "strength {} realization {}: {} records, {} failures",
                    task.strength,
                    task.realization,
                    outcome.records.len(),
                    outcome.failures.len()
                );
                if let Some(s) = &sink {
                    s.lock().expect("sink lock").submit(i, outcome.records.clone())?;
                }
                Ok(outcome)
            })
            .collect()
    });
    let mut all = MatrixOutcome::default();
    for r in results {
        let r = r?;
        all.records.extend(r.records);
        all.failures.extend(r.failures);
    }
    if let Some(s) = sink {
        s.into_inner().expect("sink lock").finish()?;
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::PerturbationSpec;
    use crate::synth::AttributeParams;

    fn tiny(models: Vec<Architecture>, perturbations: Vec<PerturbationSpec>, realizations: usize) -> ExperimentConfig {
        let lfr = LfrParams { n: 120, avg_k: 8.0, max_k: 20, min_c: 20, max_c: 30, ..LfrParams::default() };
        let mut cfg = ExperimentConfig::new(DatasetSpec::Lfr {
            lfr,
            attributes: AttributeParams { d: 8, sigma_c: 3.0, sigma: 2.0 },
        });
        cfg.models = models;
        cfg.strengths = vec![0.2];
        cfg.perturbations = perturbations;
        cfg.realizations = realizations;
        cfg.seed = 5;
        for arch in Architecture::ALL {
            cfg.model_overrides.insert(arch, crate::harness::ModelOverride { epochs: Some(30), ..Default::default() });
        }
        cfg
    }

    #[test]
    fn cardinality() {
        let spec = PerturbationSpec { kind: PerturbationKind::Scale, levels: Some(vec![1.0, 5.0]) };
        let out = run_matrix(&tiny(vec![Architecture::Gcn], vec![spec], 3), None).unwrap();
        assert_eq!(out.records.len(), 6);
        assert!(out.failures.is_empty());
        let keys: Vec<_> = out.records.iter().map(|r| (r.realization, r.level)).collect();
        assert_eq!(keys, vec![(0, 1.0), (0, 5.0), (1, 1.0), (1, 5.0), (2, 1.0), (2, 5.0)]);
        assert!(out.records.iter().all(|r| (0.0..=1.0).contains(&r.ecs) && (0.0..=1.0).contains(&r.baseline_ecs)));
    }

    #[test]
    fn identity_level_reproduces_baseline() {
        let specs = vec![
            PerturbationSpec { kind: PerturbationKind::Random, levels: Some(vec![0.0]) },
            PerturbationSpec { kind: PerturbationKind::Metattack, levels: Some(vec![0.0]) },
        ];
        let out = run_matrix(&tiny(vec![Architecture::Gcn, Architecture::DMoN], specs, 2), None).unwrap();
        assert_eq!(out.records.len(), 8);
        for r in &out.records {
            assert_eq!(r.ecs, r.baseline_ecs, "{r:?}");
        }
    }

    #[test]
    fn baseline_shared_across_kinds() {
        let specs = vec![
            PerturbationSpec { kind: PerturbationKind::Location, levels: Some(vec![1.0]) },
            PerturbationSpec { kind: PerturbationKind::Targeted, levels: Some(vec![0.2]) },
        ];
        let out = run_matrix(&tiny(vec![Architecture::Gcn], specs, 1), None).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records[0].baseline_ecs, out.records[1].baseline_ecs);
        assert_ne!(out.records[0].seed, out.records[1].seed);
    }

    #[test]
    fn evasion_keeps_the_clean_model() {
        let spec = PerturbationSpec { kind: PerturbationKind::Scale, levels: Some(vec![1e-9]) };
        let mut cfg = tiny(vec![Architecture::Gcn], vec![spec], 1);
        cfg.regime = Regime::Evasion;
        let out = run_matrix(&cfg, None).unwrap();
        // a vanishing perturbation cannot move argmax labels of the same model
        assert_eq!(out.records[0].ecs, out.records[0].baseline_ecs);
    }

    #[test]
    fn csv_is_independent_of_jobs() {
        let dir = tempfile::tempdir().unwrap();
        let spec = PerturbationSpec { kind: PerturbationKind::Random, levels: Some(vec![0.1, 0.3]) };
        let mut cfg = tiny(vec![Architecture::Gcn], vec![spec], 3);
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        cfg.jobs = 1;
        let first = run_matrix(&cfg, Some(&a)).unwrap();
        cfg.jobs = 3;
        run_matrix(&cfg, Some(&b)).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(crate::harness::read_csv(&a).unwrap().len(), first.records.len());
    }

    #[test]
    fn perturbation_failures_are_recorded_and_the_matrix_continues() {
        let specs = vec![
            PerturbationSpec { kind: PerturbationKind::Nettack, levels: Some(vec![2.0]) },
            PerturbationSpec { kind: PerturbationKind::Scale, levels: Some(vec![5.0]) },
        ];
        let out = run_matrix(&tiny(vec![Architecture::Gcn, Architecture::Sage], specs, 1), None).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.failures.len(), 2);
        assert!(out.failures.iter().all(|f| f.stage == "perturb" && f.perturbation.as_deref() == Some("nettack")));
    }
}
