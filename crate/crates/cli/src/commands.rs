use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use synergy_core::dataio::{
    assemble_pairs, parse_representation_table, parse_synergy_triples, RepresentationTable, SynergyInstance,
    TanhNormalizer,
};
use synergy_core::ensemble::{
    greedy_forward_ensemble_traced, parse_prediction_csv, prediction_csv, weighted_predict, BaseLearnerEntry,
};
use synergy_core::eval::{
    cells_of, compare_runs, cross_validate, drugs_of, make_folds, mirrored_graph_rows, parse_held_out_csv, CvOutcome,
    EvalReport, GraphPipeline, Pairing, TabularPipeline,
};
use synergy_core::learners::gnn::{fit_gnn, GraphPairs};
use synergy_core::learners::{model_from_str, model_to_string, FittedModel};
use synergy_core::molgraph::{parse_structures_csv, MolecularGraph};
use synergy_core::{Matrix, Scalar};

use crate::config::{ModelConfig, ModelKind, RunConfig, ScalarKind};
use crate::manifest::Run;
use crate::{svg, Cli, CliError, Command};

pub const PREPROCESS_FILE: &str = "preprocess.json";
const PREPROCESS_FORMAT: &str = "synergy-preprocess";

/// Normalizer statistics fitted at training time, stored beside the model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Preprocess<F> {
    pub format: String,
    pub version: u32,
    pub representation: String,
    pub drug_normalizer: Option<TanhNormalizer<F>>,
    pub cell_normalizer: Option<TanhNormalizer<F>>,
}

macro_rules! with_scalar {
    ($kind:expr, $f:ident ( $($arg:expr),* )) => {
        match $kind {
            ScalarKind::F32 => $f::<f32>($($arg),*),
            ScalarKind::F64 => $f::<f64>($($arg),*),
        }
    };
}

pub fn dispatch(cli: &Cli) -> Result<String, CliError> {
    if let Command::Report {
        predictions,
        targets,
        n,
        title,
    } = &cli.command
    {
        return report(cli, predictions, targets, *n, title);
    }
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Validation("--config is required for this command".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.cv.seed = seed;
        if let Some(m) = cfg.model.as_mut() {
            m.seed = seed;
        }
    }
    match &cli.command {
        Command::Validate => validate(&cfg),
        Command::Cv => {
            let model = check_model_inputs(&cfg)?;
            with_scalar!(model.scalar, cv(&cfg, out_dir(cli)?))
        }
        Command::Train => {
            let model = check_model_inputs(&cfg)?;
            with_scalar!(model.scalar, train(&cfg, out_dir(cli)?))
        }
        Command::Predict { model } => {
            cfg.check_paths()?;
            with_scalar!(model_scalar(model)?, predict(&cfg, model, out_dir(cli)?))
        }
        Command::Embed { model } => {
            cfg.check_paths()?;
            with_scalar!(model_scalar(model)?, embed(&cfg, model, out_dir(cli)?))
        }
        Command::Ensemble => ensemble(&cfg, out_dir(cli)?),
        Command::Report { .. } => unreachable!("handled above"),
    }
}

fn out_dir(cli: &Cli) -> Result<&Path, CliError> {
    cli.out
        .as_deref()
        .ok_or_else(|| CliError::Validation("--out is required for this command".into()))
}

fn config_dir(cfg: &RunConfig) -> PathBuf {
    cfg.source.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn invalid(e: synergy_core::Error) -> CliError {
    CliError::Validation(e.to_string())
}

/// Checks paths, the inputs the model kind needs and the learner settings.
fn check_model_inputs(cfg: &RunConfig) -> Result<&ModelConfig, CliError> {
    cfg.check_paths()?;
    let model = cfg.model()?;
    cfg.require(&cfg.data.synergy, "data", "synergy")?;
    cfg.require(&cfg.data.cells, "data", "cells")?;
    if model.kind == ModelKind::Gnn {
        cfg.require(&cfg.data.structures, "data", "structures")?;
        model.gnn::<f64>().expect("graph kind").validate().map_err(invalid)?;
    } else {
        cfg.require(&cfg.data.drugs, "data", "drugs")?;
        model
            .tabular::<f64>()
            .expect("tabular kind")
            .validate()
            .map_err(invalid)?;
    }
    Ok(model)
}

fn validate(cfg: &RunConfig) -> Result<String, CliError> {
    if cfg.model.is_some() {
        check_model_inputs(cfg)?;
    } else {
        cfg.check_paths()?;
    }
    Ok(format!("{}: configuration is valid", cfg.source.display()))
}

fn with_file<T>(path: &Path, r: synergy_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn read_instances<F: Scalar>(run: &mut Run, cfg: &RunConfig) -> Result<Vec<SynergyInstance<F>>, CliError> {
    let path = cfg.require(&cfg.data.synergy, "data", "synergy")?;
    let text = run.read(path)?;
    with_file(path, parse_synergy_triples(&text))
}

fn read_table<F: Scalar>(run: &mut Run, path: &Path, name: &str) -> Result<RepresentationTable<F>, CliError> {
    let text = run.read(path)?;
    with_file(path, parse_representation_table(&text, name))
}

fn read_structures(run: &mut Run, cfg: &RunConfig) -> Result<BTreeMap<String, MolecularGraph>, CliError> {
    let path = cfg.require(&cfg.data.structures, "data", "structures")?;
    let text = run.read(path)?;
    let mut out = BTreeMap::new();
    for record in with_file(path, parse_structures_csv(&text))? {
        let graph = with_file(path, record.graph())?;
        if out.insert(record.id.clone(), graph).is_some() {
            return Err(CliError::Runtime(format!(
                "{}: duplicate drug id `{}`",
                path.display(),
                record.id
            )));
        }
    }
    Ok(out)
}

fn start_run(command: &str, cfg: &RunConfig, out: &Path) -> Result<Run, CliError> {
    let mut run = Run::new(command, out, &config_dir(cfg))?;
    run.config(&cfg.echo);
    Ok(run)
}

fn targets_csv<F: Scalar>(instances: &[SynergyInstance<F>]) -> String {
    let mirrored: Vec<F> = instances.iter().chain(instances).map(|i| i.score).collect();
    prediction_csv(&mirrored, "target")
}

/// Held-out predictions in assembled row order: instance `i` at row `i`,
/// its mirror at row `N + i`.
fn out_of_fold<F: Scalar>(outcome: &CvOutcome<F>, n: usize) -> Vec<F> {
    let mut v = vec![F::nan(); 2 * n];
    for r in &outcome.predictions {
        v[r.instance + if r.mirrored { n } else { 0 }] = r.prediction;
    }
    v
}

fn cv<F: Scalar>(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let model = cfg.model()?;
    let mut run = start_run("cv", cfg, out)?;
    run.scalar(F::NAME);
    run.seed("cv", cfg.cv.seed);
    run.seed("model", model.seed);
    let instances = read_instances::<F>(&mut run, cfg)?;
    let cells = read_table::<F>(&mut run, cfg.require(&cfg.data.cells, "data", "cells")?, "cells")?;
    let plan = make_folds(&instances, cfg.cv.folds, cfg.cv.seed)?;
    let scale = F::of(cfg.data.tanh_scale);
    let outcome = match model.kind {
        ModelKind::Gnn => cross_validate(
            &GraphPipeline {
                structures: read_structures(&mut run, cfg)?,
                cells,
                config: model.gnn().expect("graph kind"),
                normalize_cells: cfg.data.normalize_cells,
                tanh_scale: scale,
            },
            &instances,
            &plan,
        )?,
        _ => cross_validate(
            &TabularPipeline {
                drugs: read_table(
                    &mut run,
                    cfg.require(&cfg.data.drugs, "data", "drugs")?,
                    &cfg.data.representation,
                )?,
                cells,
                learner: model.tabular().expect("tabular kind"),
                normalize_drugs: cfg.data.normalize_drugs,
                normalize_cells: cfg.data.normalize_cells,
                tanh_scale: scale,
            },
            &instances,
            &plan,
        )?,
    };

    let summary = outcome.report.summary_line();
    run.write("report.csv", outcome.report.to_csv())?;
    run.write("summary.txt", format!("{summary}\n"))?;
    run.write("predictions.csv", outcome.predictions_csv())?;
    run.write(
        "oof.csv",
        prediction_csv(&out_of_fold(&outcome, instances.len()), "prediction"),
    )?;
    run.write("targets.csv", targets_csv(&instances))?;
    run.write("folds.csv", plan.to_csv())?;

    let mut message = summary;
    if let Some(dir) = &cfg.cv.baseline {
        let line = compare_with_baseline(&mut run, cfg, dir, &plan.to_csv(), &outcome)?;
        run.write("comparison.txt", format!("{line}\n"))?;
        message = format!("{message}\n{line}");
    }
    run.finish()?;
    Ok(message)
}

fn compare_with_baseline<F: Scalar>(
    run: &mut Run,
    cfg: &RunConfig,
    dir: &Path,
    folds_csv: &str,
    outcome: &CvOutcome<F>,
) -> Result<String, CliError> {
    if run.read(&dir.join("folds.csv"))? != folds_csv {
        return Err(CliError::Runtime(format!(
            "baseline {} used a different fold plan",
            dir.display()
        )));
    }
    let path = dir.join("report.csv");
    let report: EvalReport<F> = with_file(&path, EvalReport::parse_csv(&run.read(&path)?))?;
    let (pairing, rows) = if cfg.cv.instance_pairing {
        let path = dir.join("predictions.csv");
        (
            Pairing::Instances,
            with_file(&path, parse_held_out_csv(&run.read(&path)?))?,
        )
    } else {
        (Pairing::Folds, Vec::new())
    };
    let w = compare_runs((&outcome.report, &outcome.predictions), (&report, &rows), pairing)?;
    Ok(format!(
        "wilcoxon pairing={} n={} W={} p={} ({})",
        if cfg.cv.instance_pairing { "instances" } else { "folds" },
        w.n,
        w.statistic,
        w.p_value,
        if w.exact { "exact" } else { "normal approximation" }
    ))
}

fn normalizer_for<F: Scalar>(
    on: bool,
    table: &RepresentationTable<F>,
    ids: &[String],
    scale: F,
) -> Result<Option<TanhNormalizer<F>>, CliError> {
    Ok(if on {
        Some(TanhNormalizer::fit(table, ids, scale)?)
    } else {
        None
    })
}

fn apply<F: Scalar>(
    n: &Option<TanhNormalizer<F>>,
    t: RepresentationTable<F>,
) -> Result<RepresentationTable<F>, CliError> {
    Ok(match n {
        Some(n) => n.apply(&t)?,
        None => t,
    })
}

fn train<F: Scalar>(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let model = cfg.model()?;
    let mut run = start_run("train", cfg, out)?;
    run.scalar(F::NAME);
    run.seed("model", model.seed);
    let instances = read_instances::<F>(&mut run, cfg)?;
    let cells = read_table::<F>(&mut run, cfg.require(&cfg.data.cells, "data", "cells")?, "cells")?;
    let scale = F::of(cfg.data.tanh_scale);
    let cell_normalizer = normalizer_for(cfg.data.normalize_cells, &cells, &cells_of(&instances), scale)?;
    let cells = apply(&cell_normalizer, cells)?;
    let y: Vec<F> = instances.iter().chain(&instances).map(|i| i.score).collect();

    let (fitted, drug_normalizer) = if model.kind == ModelKind::Gnn {
        let structures = read_structures(&mut run, cfg)?;
        let (graphs, pairs, cell_rows) = mirrored_graph_rows(&structures, &instances, &cells)?;
        let data = GraphPairs {
            graphs: &graphs,
            pairs: &pairs,
            cells: &cell_rows,
        };
        (
            FittedModel::Gnn(fit_gnn(&data, &y, &model.gnn().expect("graph kind"))?),
            None,
        )
    } else {
        let drugs = read_table::<F>(
            &mut run,
            cfg.require(&cfg.data.drugs, "data", "drugs")?,
            &cfg.data.representation,
        )?;
        let dn = normalizer_for(cfg.data.normalize_drugs, &drugs, &drugs_of(&instances), scale)?;
        let drugs = apply(&dn, drugs)?;
        let assembled = assemble_pairs(&instances, &drugs, &cells)?;
        let learner = model.tabular::<F>().expect("tabular kind");
        (learner.fit(&assembled.features, &assembled.targets)?, dn)
    };
    let pre = Preprocess {
        format: PREPROCESS_FORMAT.to_string(),
        version: 1,
        representation: cfg.data.representation.clone(),
        drug_normalizer,
        cell_normalizer,
    };
    run.write("model.json", model_to_string(&fitted))?;
    run.write(PREPROCESS_FILE, serde_json::to_string(&pre).expect("serializes") + "\n")?;
    run.finish()?;
    Ok(format!(
        "trained {} on {} rows; wrote {}",
        fitted.kind(),
        y.len(),
        out.join("model.json").display()
    ))
}

fn model_scalar(path: &Path) -> Result<ScalarKind, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Runtime(format!("{}: not a model file: {e}", path.display())))?;
    match v.get("scalar").and_then(|s| s.as_str()) {
        Some("f32") => Ok(ScalarKind::F32),
        Some("f64") => Ok(ScalarKind::F64),
        _ => Err(CliError::Runtime(format!(
            "{}: model file has no valid `scalar`",
            path.display()
        ))),
    }
}

fn read_model<F: Scalar>(run: &mut Run, path: &Path) -> Result<FittedModel<F>, CliError> {
    let text = run.read(path)?;
    with_file(path, model_from_str(&text))
}

fn predict<F: Scalar>(cfg: &RunConfig, model_path: &Path, out: &Path) -> Result<String, CliError> {
    let mut run = start_run("predict", cfg, out)?;
    run.scalar(F::NAME);
    let model = read_model::<F>(&mut run, model_path)?;
    run.seed("model", model.seed());
    let pre_path = model_path.with_file_name(PREPROCESS_FILE);
    if !pre_path.is_file() {
        return Err(CliError::Runtime(format!(
            "{} is missing; predict needs the file `train` writes beside the model",
            pre_path.display()
        )));
    }
    let pre: Preprocess<F> = serde_json::from_str(&run.read(&pre_path)?)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", pre_path.display())))?;
    let instances = read_instances::<F>(&mut run, cfg)?;
    let cells = read_table::<F>(&mut run, cfg.require(&cfg.data.cells, "data", "cells")?, "cells")?;
    let cells = apply(&pre.cell_normalizer, cells)?;
    let predictions = match &model {
        FittedModel::Gnn(gnn) => {
            let structures = read_structures(&mut run, cfg)?;
            let (graphs, pairs, cell_rows) = mirrored_graph_rows(&structures, &instances, &cells)?;
            gnn.predict(&GraphPairs {
                graphs: &graphs,
                pairs: &pairs,
                cells: &cell_rows,
            })?
        }
        other => {
            let drugs = read_table::<F>(
                &mut run,
                cfg.require(&cfg.data.drugs, "data", "drugs")?,
                &pre.representation,
            )?;
            let drugs = apply(&pre.drug_normalizer, drugs)?;
            let assembled = assemble_pairs(&instances, &drugs, &cells)?;
            other
                .as_regressor()
                .expect("row-wise model")
                .predict(&assembled.features)?
        }
    };
    run.write("predictions.csv", prediction_csv(&predictions, "prediction"))?;
    run.write("targets.csv", targets_csv(&instances))?;
    run.finish()?;
    Ok(format!("wrote {} predictions", predictions.len()))
}

fn embed<F: Scalar>(cfg: &RunConfig, model_path: &Path, out: &Path) -> Result<String, CliError> {
    let mut run = start_run("embed", cfg, out)?;
    run.scalar(F::NAME);
    let FittedModel::Gnn(model) = read_model::<F>(&mut run, model_path)? else {
        return Err(CliError::Runtime(format!(
            "{} does not hold a graph model",
            model_path.display()
        )));
    };
    run.seed("model", model.config.seed);
    let structures = read_structures(&mut run, cfg)?;
    let d = model.embed_dim();
    let mut vectors = Matrix::zeros(0, d);
    for graph in structures.values() {
        vectors.push_row(&model.extract(graph))?;
    }
    let table = RepresentationTable::new("GNNR", structures.keys().cloned().collect(), vectors)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf).expect("in-memory write");
    run.write("gnnr.csv", buf)?;
    run.finish()?;
    Ok(format!("wrote {}-dimensional vectors for {} drugs", d, table.len()))
}

fn ensemble(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let targets_path = cfg.require(&cfg.ensemble.targets, "ensemble", "targets")?;
    if cfg.ensemble.members.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: [ensemble] needs at least one `member`",
            cfg.source.display()
        )));
    }
    cfg.check_paths()?;
    let mut run = start_run("ensemble", cfg, out)?;
    run.scalar(f64::NAME);
    let y: Vec<f64> = with_file(targets_path, parse_prediction_csv(&run.read(targets_path)?, "target"))?;
    let mut entries = Vec::new();
    for (id, path) in &cfg.ensemble.members {
        let p: Vec<f64> = with_file(path, parse_prediction_csv(&run.read(path)?, "prediction"))?;
        if p.len() != y.len() {
            return Err(CliError::Runtime(format!(
                "member `{id}` ({}) has {} rows but the targets file has {}",
                path.display(),
                p.len(),
                y.len()
            )));
        }
        entries.push(BaseLearnerEntry::new(id.clone(), p));
    }
    let fit = greedy_forward_ensemble_traced(&entries, &y, cfg.ensemble.step, cfg.ensemble.rel_tol)?;
    let members: Vec<&[f64]> = fit
        .model
        .member_ids
        .iter()
        .map(|id| {
            entries
                .iter()
                .find(|e| &e.id == id)
                .expect("member comes from entries")
                .val_predictions
                .as_slice()
        })
        .collect();
    let blend = weighted_predict(&members, &fit.model.weights)?;
    let description = fit.model.to_description();
    run.write("ensemble.txt", &description)?;
    run.write("blend.csv", prediction_csv(&blend, "prediction"))?;
    run.finish()?;
    Ok(description.trim_end().to_string())
}

fn report(cli: &Cli, predictions: &Path, targets: &Path, n: usize, title: &str) -> Result<String, CliError> {
    let out = out_dir(cli)?;
    let seed = cli.seed.unwrap_or(0);
    if n == 0 {
        return Err(CliError::Validation(
            "--n must be positive; an empty plot has nothing to show".into(),
        ));
    }
    let mut run = Run::new("report", out, Path::new(""))?;
    run.seed("sample", seed);
    run.config(&[format!("n = {n}"), format!("title = {title}")]);
    let p: Vec<f64> = with_file(predictions, parse_prediction_csv(&run.read(predictions)?, "prediction"))?;
    let y: Vec<f64> = with_file(targets, parse_prediction_csv(&run.read(targets)?, "target"))?;
    if p.len() != y.len() {
        return Err(CliError::Runtime(format!(
            "{} has {} rows but {} has {}",
            predictions.display(),
            p.len(),
            targets.display(),
            y.len()
        )));
    }
    if n > p.len() {
        return Err(CliError::Validation(format!(
            "--n {n} exceeds the {} available rows",
            p.len()
        )));
    }
    let mut rows = index::sample(&mut ChaCha8Rng::seed_from_u64(seed), p.len(), n).into_vec();
    rows.sort_unstable();
    let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    let ps: Vec<f64> = rows.iter().map(|&i| p[i]).collect();
    run.write("report.svg", svg::target_estimate_plot(title, &ys, &ps))?;
    run.finish()?;
    Ok(format!("plotted {n} of {} rows", p.len()))
}
