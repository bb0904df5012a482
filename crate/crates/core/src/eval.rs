//! Leave-drug-combinations-out cross-validation, regression metrics and the
//! Wilcoxon signed-rank test.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataio::{assemble_pairs, RepresentationTable, SynergyInstance, TanhNormalizer};
use crate::error::{Error, Result};
use crate::learners::gnn::{fit_gnn, GnnConfig, GraphPairs};
use crate::learners::TabularLearner;
use crate::matrix::Matrix;
use crate::molgraph::MolecularGraph;
use crate::scalar::Scalar;

/// Assignment of unordered drug pairs to folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, pair_id: &str) -> Option<usize> {
        self.assignment.get(pair_id).copied()
    }

    /// Fold of each instance, in input order.
    pub fn instance_folds<F: Scalar>(&self, instances: &[SynergyInstance<F>]) -> Result<Vec<usize>> {
        instances
            .iter()
            .map(|inst| {
                let id = inst.pair_id();
                self.fold_of(&id).ok_or(Error::MissingKey {
                    id,
                    table: "fold plan".into(),
                })
            })
            .collect()
    }

    /// Number of pairs in each fold.
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// `pair_id,fold` CSV text.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair_id,fold\n");
        for (id, f) in &self.assignment {
            let _ = writeln!(out, "{id},{f}");
        }
        out
    }
}

/// Shuffles the sorted unique pair ids with a seeded generator and deals
/// them round-robin into `k` folds.
pub fn make_folds<F: Scalar>(instances: &[SynergyInstance<F>], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Argument(format!("fold count must be at least 2, got {k}")));
    }
    let mut pairs: Vec<String> = instances
        .iter()
        .map(SynergyInstance::pair_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if pairs.len() < k {
        return Err(Error::Argument(format!(
            "{} distinct drug pairs cannot fill {k} folds",
            pairs.len()
        )));
    }
    pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let assignment = pairs.into_iter().enumerate().map(|(i, p)| (p, i % k)).collect();
    Ok(FoldPlan { k, seed, assignment })
}

fn check_pair<F: Scalar>(pred: &[F], y: &[F]) -> Result<()> {
    if pred.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            y.len()
        )));
    }
    Ok(())
}

pub fn mse<F: Scalar>(pred: &[F], y: &[F]) -> Result<F> {
    check_pair(pred, y)?;
    if y.is_empty() {
        return Err(Error::Argument("MSE of an empty sample".into()));
    }
    Ok(crate::scalar::sum_sq_diff(pred, y) / F::of_usize(y.len()))
}

/// Sample Pearson correlation.
pub fn pearson<F: Scalar>(pred: &[F], y: &[F]) -> Result<F> {
    check_pair(pred, y)?;
    if y.len() < 2 {
        return Err(Error::Argument("correlation needs at least two points".into()));
    }
    let mp = crate::scalar::mean(pred);
    let my = crate::scalar::mean(y);
    let (mut sxy, mut sxx, mut syy) = (F::zero(), F::zero(), F::zero());
    for (&p, &t) in pred.iter().zip(y) {
        let (dp, dt) = (p - mp, t - my);
        sxy += dp * dt;
        sxx += dp * dp;
        syy += dt * dt;
    }
    if sxx == F::zero() {
        return Err(Error::UndefinedCorrelation("prediction"));
    }
    if syy == F::zero() {
        return Err(Error::UndefinedCorrelation("target"));
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-F::one()).min(F::one()))
}

/// Mean and sample standard deviation; the deviation is zero for one value.
pub fn mean_and_sample_std<F: Scalar>(values: &[F]) -> (F, F) {
    let m = crate::scalar::mean(values);
    if values.len() < 2 {
        return (m, F::zero());
    }
    let ss = values.iter().fold(F::zero(), |a, &v| a + (v - m) * (v - m));
    (m, (ss / F::of_usize(values.len() - 1)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`; a multiple of 0.5 when ranks are tied.
    pub statistic: f64,
    pub p_value: f64,
    /// Number of non-zero differences.
    pub n: usize,
    pub exact: bool,
}

/// Largest sample for which the null distribution is enumerated exactly.
pub const WILCOXON_EXACT_MAX: usize = 20;

/// Ranks of `|d|` with ties sharing their average rank, doubled so that every
/// rank is an integer.
fn doubled_ranks(abs: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0u64; abs.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        // Positions i..=j hold ranks i+1..=j+1; their doubled mean is i+j+2.
        for &o in &order[i..=j] {
            ranks[o] = (i + j + 2) as u64;
        }
        if j > i {
            ties.push(j - i + 1);
        }
        i = j + 1;
    }
    (ranks, ties)
}

/// Two-sided paired test on `a - b`. Zero differences are dropped.
pub fn wilcoxon_signed_rank<F: Scalar>(a: &[F], b: &[F]) -> Result<WilcoxonResult> {
    check_pair(a, b)?;
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).as_f64())
        .filter(|&v| v != 0.0)
        .collect();
    if d.is_empty() {
        return Err(Error::DegenerateSample);
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite paired difference".into()));
    }
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let (ranks, ties) = doubled_ranks(&abs);
    let total: u64 = ranks.iter().sum();
    let plus: u64 = ranks.iter().zip(&d).filter(|(_, &v)| v > 0.0).map(|(r, _)| r).sum();
    let w2 = plus.min(total - plus);
    let statistic = w2 as f64 / 2.0;

    if n <= WILCOXON_EXACT_MAX {
        // counts[s]: sign patterns whose doubled positive-rank sum is s.
        let mut counts = vec![0u64; total as usize + 1];
        counts[0] = 1;
        let mut reach = 0usize;
        for &r in &ranks {
            let r = r as usize;
            for s in (0..=reach).rev() {
                if counts[s] > 0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let tail: u64 = counts[..=w2 as usize].iter().sum();
        let p = (2.0 * tail as f64 / (1u64 << n) as f64).min(1.0);
        return Ok(WilcoxonResult {
            statistic,
            p_value: p,
            n,
            exact: true,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let z = ((mean - statistic).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(WilcoxonResult {
        statistic,
        p_value: (2.0 * normal.cdf(-z)).min(1.0),
        n,
        exact: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldMetrics<F> {
    pub mse: F,
    pub pearson: F,
}

/// Per-fold metrics with their mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport<F> {
    pub per_fold: Vec<FoldMetrics<F>>,
    pub mse_mean: F,
    pub mse_std: F,
    pub pearson_mean: F,
    pub pearson_std: F,
}

impl<F: Scalar> EvalReport<F> {
    pub fn from_folds(per_fold: Vec<FoldMetrics<F>>) -> Self {
        let mses: Vec<F> = per_fold.iter().map(|m| m.mse).collect();
        let rhos: Vec<F> = per_fold.iter().map(|m| m.pearson).collect();
        let (mse_mean, mse_std) = mean_and_sample_std(&mses);
        let (pearson_mean, pearson_std) = mean_and_sample_std(&rhos);
        Self {
            per_fold,
            mse_mean,
            mse_std,
            pearson_mean,
            pearson_std,
        }
    }

    /// `fold,mse,pearson` with one row per fold.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fold,mse,pearson\n");
        for (i, m) in self.per_fold.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{}", m.mse, m.pearson);
        }
        out
    }

    /// One-line `mean ± std` summary in the style of a results table.
    pub fn summary_line(&self) -> String {
        format!(
            "folds={} mse={:.3} ± {:.3} pearson={:.3} ± {:.3} (std: sample, across folds)",
            self.per_fold.len(),
            self.mse_mean.as_f64(),
            self.mse_std.as_f64(),
            self.pearson_mean.as_f64(),
            self.pearson_std.as_f64()
        )
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == "fold,mse,pearson" => {}
            other => {
                return Err(Error::Format {
                    line: other.map_or(1, |(i, _)| i + 1),
                    msg: "header must be `fold,mse,pearson`".into(),
                })
            }
        }
        let mut per_fold = Vec::new();
        for (i, line) in lines {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            let parse = |s: &str| -> Result<F> {
                s.parse().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: format!("`{s}` is not a number"),
                })
            };
            if cells.len() != 3 || cells[0] != per_fold.len().to_string() {
                return Err(Error::Format {
                    line: i + 1,
                    msg: "expected `fold,mse,pearson` with consecutive folds".into(),
                });
            }
            per_fold.push(FoldMetrics {
                mse: parse(cells[1])?,
                pearson: parse(cells[2])?,
            });
        }
        Ok(Self::from_folds(per_fold))
    }
}

/// Training and held-out instance indices of one fold.
#[derive(Debug, Clone, Copy)]
pub struct FoldSplit<'a> {
    pub fold: usize,
    pub train: &'a [usize],
    pub test: &'a [usize],
}

/// A model pipeline evaluated fold by fold.
///
/// `fit_predict` returns predictions for the mirrored held-out rows: first
/// every test instance in `split.test` order, then the same instances with
/// the drugs swapped.
pub trait FoldModel<F: Scalar>: Sync {
    fn fit_predict(&self, instances: &[SynergyInstance<F>], split: FoldSplit<'_>) -> Result<Vec<F>>;
}

/// One held-out row.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldOutRow<F> {
    pub fold: usize,
    pub instance: usize,
    pub mirrored: bool,
    pub target: F,
    pub prediction: F,
}

#[derive(Debug, Clone)]
pub struct CvOutcome<F> {
    pub report: EvalReport<F>,
    /// Held-out rows grouped by fold, in fold order.
    pub predictions: Vec<HeldOutRow<F>>,
}

impl<F: Scalar> CvOutcome<F> {
    /// `fold,instance,mirrored,target,prediction` CSV text.
    pub fn predictions_csv(&self) -> String {
        let mut out = String::from("fold,instance,mirrored,target,prediction\n");
        for r in &self.predictions {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.fold, r.instance, r.mirrored as u8, r.target, r.prediction
            );
        }
        out
    }
}

/// Reads the CSV written by [`CvOutcome::predictions_csv`].
pub fn parse_held_out_csv<F: Scalar>(text: &str) -> Result<Vec<HeldOutRow<F>>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "fold,instance,mirrored,target,prediction" => {}
        other => {
            return Err(Error::Format {
                line: other.map_or(1, |(i, _)| i + 1),
                msg: "header must be `fold,instance,mirrored,target,prediction`".into(),
            })
        }
    }
    lines
        .map(|(i, line)| {
            let bad = |msg: &str| Error::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            let c: Vec<&str> = line.split(',').map(str::trim).collect();
            if c.len() != 5 {
                return Err(Error::Format {
                    line: i + 1,
                    msg: "expected 5 columns".into(),
                });
            }
            Ok(HeldOutRow {
                fold: c[0].parse().map_err(|_| bad("bad fold"))?,
                instance: c[1].parse().map_err(|_| bad("bad instance"))?,
                mirrored: match c[2] {
                    "0" => false,
                    "1" => true,
                    _ => return Err(bad("mirrored must be 0 or 1")),
                },
                target: c[3].parse().map_err(|_| bad("bad target"))?,
                prediction: c[4].parse().map_err(|_| bad("bad prediction"))?,
            })
        })
        .collect()
}

/// Which paired values a comparison of two runs ranks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    /// Per-fold MSE values; needs identical fold plans.
    Folds,
    /// Absolute error of every held-out row.
    Instances,
}

/// Wilcoxon test between two evaluations of the same plan.
pub fn compare_runs<F: Scalar>(
    a: (&EvalReport<F>, &[HeldOutRow<F>]),
    b: (&EvalReport<F>, &[HeldOutRow<F>]),
    pairing: Pairing,
) -> Result<WilcoxonResult> {
    match pairing {
        Pairing::Folds => {
            if a.0.per_fold.len() != b.0.per_fold.len() {
                return Err(Error::Shape(format!(
                    "runs have {} and {} folds",
                    a.0.per_fold.len(),
                    b.0.per_fold.len()
                )));
            }
            let ma: Vec<F> = a.0.per_fold.iter().map(|m| m.mse).collect();
            let mb: Vec<F> = b.0.per_fold.iter().map(|m| m.mse).collect();
            wilcoxon_signed_rank(&ma, &mb)
        }
        Pairing::Instances => {
            let key = |r: &HeldOutRow<F>| (r.instance, r.mirrored);
            let errors = |rows: &[HeldOutRow<F>]| -> BTreeMap<(usize, bool), F> {
                rows.iter().map(|r| (key(r), (r.prediction - r.target).abs())).collect()
            };
            let (ea, eb) = (errors(a.1), errors(b.1));
            if ea.len() != eb.len() || ea.keys().ne(eb.keys()) {
                return Err(Error::Shape(format!(
                    "runs hold out different rows ({} and {})",
                    ea.len(),
                    eb.len()
                )));
            }
            let va: Vec<F> = ea.into_values().collect();
            let vb: Vec<F> = eb.into_values().collect();
            wilcoxon_signed_rank(&va, &vb)
        }
    }
}

/// Fits on all folds but one and scores the held-out fold, for every fold.
/// Folds run in parallel; results are identical to a sequential run.
pub fn cross_validate<F: Scalar, M: FoldModel<F>>(
    model: &M,
    instances: &[SynergyInstance<F>],
    plan: &FoldPlan,
) -> Result<CvOutcome<F>> {
    let folds = plan.instance_folds(instances)?;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..plan.k)
        .map(|f| (0..instances.len()).partition(|&i| folds[i] != f))
        .collect();

    let results: Vec<Result<(FoldMetrics<F>, Vec<HeldOutRow<F>>)>> = splits
        .par_iter()
        .enumerate()
        .map(|(fold, (train, test))| {
            let tag = |e: Error| Error::Fold {
                fold,
                source: Box::new(e),
            };
            if train.is_empty() || test.is_empty() {
                return Err(tag(Error::Argument("fold has no training or no test rows".into())));
            }
            let pred = model
                .fit_predict(instances, FoldSplit { fold, train, test })
                .map_err(tag)?;
            let targets: Vec<F> = test.iter().chain(test).map(|&i| instances[i].score).collect();
            if pred.len() != targets.len() {
                return Err(tag(Error::Shape(format!(
                    "pipeline returned {} predictions for {} held-out rows",
                    pred.len(),
                    targets.len()
                ))));
            }
            let metrics = FoldMetrics {
                mse: mse(&pred, &targets).map_err(tag)?,
                pearson: pearson(&pred, &targets).map_err(tag)?,
            };
            let m = test.len();
            let rows = pred
                .iter()
                .zip(&targets)
                .enumerate()
                .map(|(r, (&prediction, &target))| HeldOutRow {
                    fold,
                    instance: test[r % m],
                    mirrored: r >= m,
                    target,
                    prediction,
                })
                .collect();
            Ok((metrics, rows))
        })
        .collect();

    let mut per_fold = Vec::with_capacity(plan.k);
    let mut predictions = Vec::with_capacity(2 * instances.len());
    for r in results {
        let (m, rows) = r?;
        per_fold.push(m);
        predictions.extend(rows);
    }
    Ok(CvOutcome {
        report: EvalReport::from_folds(per_fold),
        predictions,
    })
}

fn subset<F: Clone>(instances: &[SynergyInstance<F>], idx: &[usize]) -> Vec<SynergyInstance<F>> {
    idx.iter().map(|&i| instances[i].clone()).collect()
}

/// Sorted unique drug ids of `instances`.
pub fn drugs_of<F>(instances: &[SynergyInstance<F>]) -> Vec<String> {
    instances
        .iter()
        .flat_map(|i| [i.drug_a.clone(), i.drug_b.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Sorted unique cell-line ids of `instances`.
pub fn cells_of<F>(instances: &[SynergyInstance<F>]) -> Vec<String> {
    instances
        .iter()
        .map(|i| i.cell_line.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Normalizes `table` with statistics from the `fit_ids` rows.
fn normalized<F: Scalar>(
    table: &RepresentationTable<F>,
    fit_ids: &[String],
    scale: F,
) -> Result<RepresentationTable<F>> {
    TanhNormalizer::fit(table, fit_ids, scale)?.apply(table)
}

/// Precomputed drug vectors, cell-line vectors and a row-wise learner.
///
/// Normalizers are fitted on the drugs and cell lines of each fold's
/// training instances only.
#[derive(Debug, Clone)]
pub struct TabularPipeline<F> {
    pub drugs: RepresentationTable<F>,
    pub cells: RepresentationTable<F>,
    pub learner: TabularLearner<F>,
    pub normalize_drugs: bool,
    pub normalize_cells: bool,
    pub tanh_scale: F,
}

impl<F: Scalar> FoldModel<F> for TabularPipeline<F> {
    fn fit_predict(&self, instances: &[SynergyInstance<F>], split: FoldSplit<'_>) -> Result<Vec<F>> {
        let train = subset(instances, split.train);
        let test = subset(instances, split.test);
        let drugs = if self.normalize_drugs {
            normalized(&self.drugs, &drugs_of(&train), self.tanh_scale)?
        } else {
            self.drugs.clone()
        };
        let cells = if self.normalize_cells {
            normalized(&self.cells, &cells_of(&train), self.tanh_scale)?
        } else {
            self.cells.clone()
        };
        let tr = assemble_pairs(&train, &drugs, &cells)?;
        let te = assemble_pairs(&test, &drugs, &cells)?;
        let fitted = self.learner.fit(&tr.features, &tr.targets)?;
        fitted
            .as_regressor()
            .expect("tabular learners are row-wise")
            .predict(&te.features)
    }
}

/// Molecular graphs, cell-line vectors and the graph network.
#[derive(Debug, Clone)]
pub struct GraphPipeline<F> {
    pub structures: BTreeMap<String, MolecularGraph>,
    pub cells: RepresentationTable<F>,
    pub config: GnnConfig<F>,
    pub normalize_cells: bool,
    pub tanh_scale: F,
}

/// Graph list, mirrored index pairs and cell rows for `instances`: rows
/// `0..N` pair `(drug_a, drug_b)`, rows `N..2N` the swapped order.
pub fn mirrored_graph_rows<F: Scalar>(
    structures: &BTreeMap<String, MolecularGraph>,
    instances: &[SynergyInstance<F>],
    cells: &RepresentationTable<F>,
) -> Result<(Vec<MolecularGraph>, Vec<(usize, usize)>, Matrix<F>)> {
    let ids = drugs_of(instances);
    let mut graphs = Vec::with_capacity(ids.len());
    for id in &ids {
        graphs.push(structures.get(id).cloned().ok_or_else(|| Error::MissingKey {
            id: id.clone(),
            table: "structures".into(),
        })?);
    }
    let pos = |id: &str| ids.binary_search_by(|p| p.as_str().cmp(id)).expect("collected above");
    let mut pairs = Vec::with_capacity(2 * instances.len());
    let mut cell_rows = Matrix::zeros(0, cells.dim());
    for mirrored in [false, true] {
        for inst in instances {
            let (a, b) = (pos(&inst.drug_a), pos(&inst.drug_b));
            pairs.push(if mirrored { (b, a) } else { (a, b) });
            cell_rows.push_row(cells.vector(&inst.cell_line)?)?;
        }
    }
    Ok((graphs, pairs, cell_rows))
}

impl<F: Scalar> FoldModel<F> for GraphPipeline<F> {
    fn fit_predict(&self, instances: &[SynergyInstance<F>], split: FoldSplit<'_>) -> Result<Vec<F>> {
        let train = subset(instances, split.train);
        let test = subset(instances, split.test);
        let cells = if self.normalize_cells {
            normalized(&self.cells, &cells_of(&train), self.tanh_scale)?
        } else {
            self.cells.clone()
        };
        let (g, p, c) = mirrored_graph_rows(&self.structures, &train, &cells)?;
        let y: Vec<F> = train.iter().chain(&train).map(|i| i.score).collect();
        let model = fit_gnn(
            &GraphPairs {
                graphs: &g,
                pairs: &p,
                cells: &c,
            },
            &y,
            &self.config,
        )?;
        let (g, p, c) = mirrored_graph_rows(&self.structures, &test, &cells)?;
        model.predict(&GraphPairs {
            graphs: &g,
            pairs: &p,
            cells: &c,
        })
    }
}

/// Checks that no pair id has instances on both sides of any split.
pub fn plan_is_leak_free<F: Scalar>(instances: &[SynergyInstance<F>], plan: &FoldPlan) -> bool {
    let Ok(folds) = plan.instance_folds(instances) else {
        return false;
    };
    (0..plan.k).all(|f| {
        let train: HashSet<String> = instances
            .iter()
            .zip(&folds)
            .filter(|(_, &g)| g != f)
            .map(|(i, _)| i.pair_id())
            .collect();
        instances
            .iter()
            .zip(&folds)
            .filter(|(_, &g)| g == f)
            .all(|(i, _)| !train.contains(&i.pair_id()))
    })
}
