//! Subcommand implementations. Each writes its outputs plus the resolved
//! config (`config.json`, presets expanded inline) into the output directory
//! and returns a short human-readable summary.

use std::collections::BTreeMap;
use std::path::Path;

use erd_core::baselines::BinaryDiscriminator;
use erd_core::datagen::SplitBundle;
use erd_core::ensemble::{grid_eval, Bounds2d, ErdEnsemble, Statistic};
use erd_core::nn::MlpClassifier;
use erd_core::propcheck::{check_preconditions, run_seed, PropCheckReport, SeedOutcome};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    BaselineConfig, BaselineMethod, ErdConfig, EvalConfig, ExperimentRef, ExperimentSpec, GenConfig,
    PretrainConfig, PropcheckConfig, ScorerSpec, SweepConfig,
};
use crate::error::{CliError, Result};
use crate::io::{
    read_bundle, read_ensemble, read_model, write_bundle, write_ensemble, write_json, write_learning_curve,
    write_model, write_roc, write_table, EnsembleManifest, StatisticDefaults,
};
use crate::pipeline::{
    self, binary_scores, ensemble_scores, evaluate, stage_seed, MetricSummary, Stage, TARGET_FPR,
};

/// Cells per side of the decision-surface grid exported for 2D data.
pub const GRID_RESOLUTION: usize = 60;

fn inline(spec: &ExperimentSpec) -> ExperimentRef {
    ExperimentRef::Inline(Box::new(spec.clone()))
}

fn load_bundle(spec: &ExperimentSpec, dir: Option<&Path>) -> Result<SplitBundle> {
    match dir {
        Some(d) => Ok(read_bundle(d)?.0),
        None => Ok(pipeline::generate(spec)?.0),
    }
}

pub fn gen(config: &GenConfig, out: &Path) -> Result<String> {
    let spec = config.experiment.resolve()?;
    let (bundle, meta) = pipeline::generate(&spec)?;
    write_bundle(out, &bundle, &meta)?;
    write_json(
        &out.join("config.json"),
        &GenConfig {
            experiment: inline(&spec),
        },
    )?;
    let s = &meta.sizes;
    Ok(format!(
        "{}: |S| = {}, |V| = {}, |U| = {} ({} OOD), |test| = {} ({} OOD), d = {}, classes = {}",
        spec.name,
        s.train,
        s.validation,
        s.unlabeled,
        s.unlabeled_ood,
        s.test,
        s.test_ood,
        meta.dim,
        meta.num_classes
    ))
}

pub fn pretrain(config: &PretrainConfig, out: &Path) -> Result<String> {
    let spec = config.experiment.resolve()?;
    let bundle = load_bundle(&spec, config.bundle.as_deref())?;
    let fitted = pipeline::pretrain(&spec, &bundle)?;
    let seed = stage_seed(spec.seed, Stage::Pretrain);
    write_model(&out.join("model.json"), &fitted.model, seed, fitted.stop_epoch)?;
    let rows: Vec<Vec<f64>> = fitted
        .scores
        .iter()
        .enumerate()
        .map(|(e, &a)| vec![e as f64, a])
        .collect();
    write_table(&out.join("val_accuracy.csv"), &["epoch", "val_acc"], &rows)?;
    write_json(
        &out.join("config.json"),
        &PretrainConfig {
            experiment: inline(&spec),
            ..config.clone()
        },
    )?;
    Ok(format!(
        "validation accuracy {:.4} at epoch {}",
        fitted.scores[fitted.stop_epoch], fitted.stop_epoch
    ))
}

fn data_bounds(bundle: &SplitBundle) -> Bounds2d {
    let mut b = Bounds2d {
        x_min: f64::INFINITY,
        x_max: f64::NEG_INFINITY,
        y_min: f64::INFINITY,
        y_max: f64::NEG_INFINITY,
    };
    for set in [&bundle.train, &bundle.unlabeled, &bundle.test] {
        for p in set.features().iter_rows() {
            b.x_min = b.x_min.min(p[0]);
            b.x_max = b.x_max.max(p[0]);
            b.y_min = b.y_min.min(p[1]);
            b.y_max = b.y_max.max(p[1]);
        }
    }
    Bounds2d {
        x_min: b.x_min - 1.0,
        x_max: b.x_max + 1.0,
        y_min: b.y_min - 1.0,
        y_max: b.y_max + 1.0,
    }
}

/// `x, y, member_0.., tdis` over the data's bounding box (2D data only).
fn write_grid(path: &Path, members: &[MlpClassifier], bundle: &SplitBundle) -> Result<()> {
    let grid = grid_eval(members, data_bounds(bundle), GRID_RESOLUTION, GRID_RESOLUTION)?;
    let mut header = vec!["x".to_string(), "y".to_string()];
    header.extend((0..members.len()).map(|i| format!("member_{i}")));
    header.push("tdis".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = grid
        .iter()
        .map(|g| {
            let mut row = vec![g.x, g.y];
            row.extend(g.predictions.iter().map(|&p| p as f64));
            row.push(g.tdis);
            row
        })
        .collect();
    write_table(path, &header, &rows)
}

fn write_erd(out: &Path, spec: &ExperimentSpec, ensemble: &ErdEnsemble, bundle: &SplitBundle) -> Result<()> {
    let base = stage_seed(spec.seed, Stage::Erd);
    let seeds: Vec<u64> = (0..ensemble.members.len() as u64)
        .map(|i| base.wrapping_add(i))
        .collect();
    write_ensemble(
        &out.join("ensemble"),
        &ensemble.members,
        &seeds,
        &EnsembleManifest {
            kind: "erd".into(),
            artificial_labels: ensemble.artificial_labels.clone(),
            stop_epochs: ensemble.stop_epochs.clone(),
            statistic_defaults: StatisticDefaults {
                statistic: Statistic::TdisTv,
                target_fpr: TARGET_FPR,
            },
            members: Vec::new(),
        },
    )?;
    for (i, (trace, c)) in ensemble
        .traces
        .iter()
        .zip(&ensemble.artificial_labels)
        .enumerate()
    {
        write_learning_curve(&out.join(format!("curves/member_{i}_label_{c}.csv")), trace)?;
    }
    if bundle.train.dim() == 2 {
        write_grid(&out.join("grid.csv"), &ensemble.members, bundle)?;
    }
    Ok(())
}

pub fn erd(config: &ErdConfig, out: &Path) -> Result<String> {
    let spec = config.experiment.resolve()?;
    let bundle = load_bundle(&spec, config.bundle.as_deref())?;
    let pretrained = match &config.pretrained {
        Some(path) => read_model(path)?.0,
        None => pipeline::pretrain(&spec, &bundle)?.model,
    };
    let ensemble = pipeline::fit_erd(&spec, &bundle, &pretrained)?;
    write_erd(out, &spec, &ensemble, &bundle)?;
    write_json(
        &out.join("config.json"),
        &ErdConfig {
            experiment: inline(&spec),
            ..config.clone()
        },
    )?;
    Ok(format!(
        "artificial labels {:?}, stop epochs {:?}",
        ensemble.artificial_labels, ensemble.stop_epochs
    ))
}

fn write_binary(path: &Path, spec: &ExperimentSpec, model: &BinaryDiscriminator) -> Result<()> {
    write_model(path, &model.model, pipeline::binary_seed(spec), model.stop_epoch)
}

pub fn baseline(config: &BaselineConfig, out: &Path) -> Result<String> {
    let spec = config.experiment.resolve()?;
    let bundle = load_bundle(&spec, config.bundle.as_deref())?;
    let summary = match config.method {
        BaselineMethod::Vanilla => {
            let ens = pipeline::fit_vanilla(&spec, &bundle)?;
            let base = pipeline::vanilla_seed(&spec);
            let seeds: Vec<u64> = (0..ens.members.len() as u64)
                .map(|i| base.wrapping_add(i))
                .collect();
            write_ensemble(
                &out.join("ensemble"),
                &ens.members,
                &seeds,
                &EnsembleManifest {
                    kind: "vanilla".into(),
                    artificial_labels: Vec::new(),
                    stop_epochs: ens.stop_epochs.clone(),
                    statistic_defaults: StatisticDefaults {
                        statistic: Statistic::EntropyAvg,
                        target_fpr: TARGET_FPR,
                    },
                    members: Vec::new(),
                },
            )?;
            if bundle.train.dim() == 2 {
                write_grid(&out.join("grid.csv"), &ens.members, &bundle)?;
            }
            format!(
                "vanilla ensemble of {}, stop epochs {:?}",
                ens.members.len(),
                ens.stop_epochs
            )
        }
        BaselineMethod::Binary => {
            let model = pipeline::fit_binary(&spec, &bundle)?;
            write_binary(&out.join("model.json"), &spec, &model)?;
            let rows: Vec<Vec<f64>> = model
                .val_id_accuracy
                .iter()
                .enumerate()
                .map(|(e, &a)| vec![e as f64, a])
                .collect();
            write_table(&out.join("val_id_accuracy.csv"), &["epoch", "val_id_acc"], &rows)?;
            format!(
                "binary discriminator stopped at epoch {} (ID validation accuracy {:.4})",
                model.stop_epoch, model.val_id_accuracy[model.stop_epoch]
            )
        }
    };
    write_json(
        &out.join("config.json"),
        &BaselineConfig {
            experiment: inline(&spec),
            ..config.clone()
        },
    )?;
    Ok(summary)
}

/// Models trained in memory during one `eval` run, shared across scorers.
#[derive(Default)]
struct ModelCache {
    erd: Option<Vec<MlpClassifier>>,
    vanilla: Option<Vec<MlpClassifier>>,
    binary: Option<BinaryDiscriminator>,
}

fn scorer_scores(
    scorer: &ScorerSpec,
    spec: &ExperimentSpec,
    bundle: &SplitBundle,
    cache: &mut ModelCache,
) -> Result<pipeline::Scores> {
    match scorer {
        ScorerSpec::Erd { ensemble, statistic } => {
            let members = match ensemble {
                Some(dir) => read_ensemble(dir)?.0,
                None => {
                    if cache.erd.is_none() {
                        let pre = pipeline::pretrain(spec, bundle)?;
                        cache.erd = Some(pipeline::fit_erd(spec, bundle, &pre.model)?.members);
                    }
                    cache.erd.clone().expect("filled above")
                }
            };
            ensemble_scores(&members, bundle, *statistic)
        }
        ScorerSpec::Vanilla { ensemble, statistic } => {
            let members = match ensemble {
                Some(dir) => read_ensemble(dir)?.0,
                None => {
                    if cache.vanilla.is_none() {
                        cache.vanilla = Some(pipeline::fit_vanilla(spec, bundle)?.members);
                    }
                    cache.vanilla.clone().expect("filled above")
                }
            };
            ensemble_scores(&members, bundle, *statistic)
        }
        ScorerSpec::Binary { model } => {
            let disc = match model {
                Some(path) => {
                    let (m, ckpt) = read_model(path)?;
                    BinaryDiscriminator {
                        model: m,
                        stop_epoch: ckpt.epochs_trained,
                        val_id_accuracy: Vec::new(),
                    }
                }
                None => {
                    if cache.binary.is_none() {
                        cache.binary = Some(pipeline::fit_binary(spec, bundle)?);
                    }
                    cache.binary.clone().expect("filled above")
                }
            };
            binary_scores(&disc, bundle)
        }
    }
}

pub fn eval(config: &EvalConfig, out: &Path) -> Result<String> {
    let spec = config.experiment.resolve()?;
    if config.scorers.is_empty() {
        return Err(CliError::Config("eval needs at least one scorer".into()));
    }
    let bundle = load_bundle(&spec, config.bundle.as_deref())?;
    let mut cache = ModelCache::default();
    let mut metrics: BTreeMap<String, MetricSummary> = BTreeMap::new();
    for scorer in &config.scorers {
        let name = scorer.name();
        if metrics.contains_key(&name) {
            return Err(CliError::Config(format!("scorer {name} listed twice")));
        }
        let scores = scorer_scores(scorer, &spec, &bundle, &mut cache)?;
        let ev = evaluate(&scores, &bundle.test_truth)?;
        let dir = out.join(&name);
        write_roc(&dir.join("roc.csv"), &ev.roc)?;
        write_json(&dir.join("summary.json"), &ev.summary)?;
        let rows: Vec<Vec<f64>> = scores
            .test
            .iter()
            .zip(&bundle.test_truth)
            .map(|(&s, &t)| vec![s, t as u8 as f64])
            .collect();
        write_table(&dir.join("test_scores.csv"), &["score", "ood"], &rows)?;
        metrics.insert(name, ev.summary);
    }
    write_json(&out.join("metrics.json"), &metrics)?;
    write_json(
        &out.join("config.json"),
        &EvalConfig {
            experiment: inline(&spec),
            ..config.clone()
        },
    )?;
    Ok(metrics
        .iter()
        .map(|(name, m)| {
            format!(
                "{name}: AUROC {:.4}, TNR@95 {:.4}, threshold@FPR0.05 {:.6}",
                m.auroc, m.tnr_at_tpr95, m.threshold_at_fpr05
            )
        })
        .collect::<Vec<_>>()
        .join("\n"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRun {
    pub value: f64,
    pub seed: u64,
    pub auroc: f64,
    pub tnr_at_tpr95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub auroc: f64,
    pub tnr_at_tpr95: f64,
}

/// Runs ERD for every (value, seed) pair in parallel and averages over seeds.
pub fn sweep_runs(config: &SweepConfig, spec: &ExperimentSpec) -> Result<(Vec<SweepRun>, Vec<SweepPoint>)> {
    if config.values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let seeds = if config.seeds.is_empty() {
        vec![spec.seed]
    } else {
        config.seeds.clone()
    };
    let jobs: Vec<(f64, u64)> = config
        .values
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    // validate every point before spending compute on any of them
    let specs = jobs
        .iter()
        .map(|&(v, s)| Ok(config.axis.apply(spec, v)?.with_seed(s)))
        .collect::<Result<Vec<_>>>()?;
    for s in &specs {
        let available = s.data.num_classes();
        if s.erd.labels.is_none() && s.erd.k > available {
            return Err(erd_core::Error::LabelExhaustion {
                requested: s.erd.k,
                available,
            }
            .into());
        }
    }
    let runs = specs
        .par_iter()
        .zip(&jobs)
        .map(|(s, &(value, seed))| {
            let (ev, _) = pipeline::run_erd(s, config.statistic)?;
            Ok(SweepRun {
                value,
                seed,
                auroc: ev.summary.auroc,
                tnr_at_tpr95: ev.summary.tnr_at_tpr95,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let points = config
        .values
        .iter()
        .map(|&v| {
            let of: Vec<&SweepRun> = runs.iter().filter(|r| r.value == v).collect();
            let n = of.len() as f64;
            SweepPoint {
                value: v,
                auroc: of.iter().map(|r| r.auroc).sum::<f64>() / n,
                tnr_at_tpr95: of.iter().map(|r| r.tnr_at_tpr95).sum::<f64>() / n,
            }
        })
        .collect();
    Ok((runs, points))
}

pub fn sweep(config: &SweepConfig, out: &Path) -> Result<String> {
    let spec = config.experiment.resolve()?;
    let (runs, points) = sweep_runs(config, &spec)?;
    let axis = config.axis.name();
    write_table(
        &out.join("sweep.csv"),
        &[axis, "auroc", "tnr_at_tpr95"],
        &points
            .iter()
            .map(|p| vec![p.value, p.auroc, p.tnr_at_tpr95])
            .collect::<Vec<_>>(),
    )?;
    write_table(
        &out.join("sweep_runs.csv"),
        &[axis, "seed", "auroc", "tnr_at_tpr95"],
        &runs
            .iter()
            .map(|r| vec![r.value, r.seed as f64, r.auroc, r.tnr_at_tpr95])
            .collect::<Vec<_>>(),
    )?;
    write_json(&out.join("sweep.json"), &points)?;
    write_json(
        &out.join("config.json"),
        &SweepConfig {
            experiment: inline(&spec),
            ..config.clone()
        },
    )?;
    Ok(points
        .iter()
        .map(|p| {
            format!(
                "{axis} = {}: AUROC {:.4}, TNR@95 {:.4}",
                p.value, p.auroc, p.tnr_at_tpr95
            )
        })
        .collect::<Vec<_>>()
        .join("\n"))
}

/// Runs the verifier with one job per seed; output order follows the seed list.
pub fn propcheck_report(config: &PropcheckConfig) -> Result<PropCheckReport> {
    check_preconditions(config)?;
    let outcomes = config
        .seeds
        .par_iter()
        .map(|&s| run_seed(config, s))
        .collect::<erd_core::Result<Vec<SeedOutcome>>>()?;
    let wins = outcomes.iter().filter(|o| o.success()).count();
    Ok(PropCheckReport {
        success_rate: wins as f64 / outcomes.len() as f64,
        outcomes,
    })
}

#[derive(Debug, Serialize)]
struct PropcheckSummary {
    success_rate: f64,
    successes: usize,
    seeds: usize,
    first_success_steps: Vec<Option<usize>>,
    t_stops: Vec<usize>,
}

pub fn propcheck(config: &PropcheckConfig, out: &Path) -> Result<String> {
    let report = propcheck_report(config)?;
    let summary = PropcheckSummary {
        success_rate: report.success_rate,
        successes: report.outcomes.iter().filter(|o| o.success()).count(),
        seeds: report.outcomes.len(),
        first_success_steps: report.outcomes.iter().map(|o| o.first_success_step).collect(),
        t_stops: report.outcomes.iter().map(|o| o.t_stop).collect(),
    };
    write_json(&out.join("report.json"), &report)?;
    write_json(&out.join("summary.json"), &summary)?;
    write_json(&out.join("config.json"), config)?;
    Ok(format!(
        "success rate {:.2} ({} of {} seeds)",
        summary.success_rate, summary.successes, summary.seeds
    ))
}
