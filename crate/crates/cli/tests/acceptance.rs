//! Acceptance suite. Each criterion prints one PASS or FAIL line; the
//! process exits non-zero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use synergy_cli::config::{ModelKind, RunConfig};
use synergy_core::dataio::{assemble_pairs, SynergyInstance};
use synergy_core::ensemble::{greedy_forward_ensemble_traced, BaseLearnerEntry, DEFAULT_REL_TOL, DEFAULT_STEP};
use synergy_core::eval::{cross_validate, make_folds, wilcoxon_signed_rank, FoldModel, FoldSplit};
use synergy_core::learners::fcnn::{mse_loss, mse_loss_and_grad};
use synergy_core::learners::gbm::fit_gbm_traced;
use synergy_core::learners::gnn::{gnn_loss, gnn_loss_and_grad, init_gnn};
use synergy_core::learners::mlp::Mlp;
use synergy_core::learners::Regressor;
use synergy_core::learners::{
    fit_decision_tree, fit_elastic_net, fit_gnn, fit_random_forest, ElasticNetConfig, FcnnConfig, ForestConfig,
    GbmConfig, GnnConfig, GraphPairs, TreeConfig,
};
use synergy_core::molgraph::{parse_smiles, MolecularGraph};
use synergy_core::synthetic::{generate, planted_learners, random_smiles, SyntheticConfig, SyntheticScreen};
use synergy_core::{Error, Matrix};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn uniform_rows(rng: &mut ChaCha8Rng, n: usize, p: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..p).map(|_| rng.gen_range(lo..hi)).collect())
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}

// 1. Elastic net against ordinary least squares and the one-feature
//    closed form.
fn elastic_net_oracles() -> Outcome {
    const TOL: f64 = 1e-6;
    const BUDGET: Duration = Duration::from_secs(5);
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_ols = 0.0f64;
    for problem in 0..50 {
        let p = rng.gen_range(1..=5);
        let n = rng.gen_range(p + 3..=20);
        let rows = uniform_rows(&mut rng, n, p, -2.0, 2.0);
        let coef: Vec<f64> = (0..p).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| 0.5 + r.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(-0.5..0.5))
            .collect();

        let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
        let ols = design
            .svd(true, true)
            .solve(&DVector::from_vec(y.clone()), 1e-14)
            .map_err(|e| format!("problem {problem}: OLS oracle failed: {e}"))?;

        let cfg = ElasticNetConfig {
            strength: 0.0,
            mixing: 0.5,
            tol: 1e-13,
            max_sweeps: 1_000_000,
        };
        let x = Matrix::from_rows(&rows).map_err(err)?;
        let fit = fit_elastic_net(&x, &y, &cfg).map_err(err)?;
        for j in 0..p {
            let d = (fit.beta[j] - ols[j + 1]).abs();
            worst_ols = worst_ols.max(d);
            ensure(d <= TOL, || {
                format!("problem {problem}: beta[{j}] {} vs OLS {}", fit.beta[j], ols[j + 1])
            })?;
        }
        let d = (fit.intercept - ols[0]).abs();
        ensure(d <= TOL, || {
            format!("problem {problem}: intercept {} vs OLS {}", fit.intercept, ols[0])
        })?;
    }

    let mut worst_soft = 0.0f64;
    for problem in 0..50 {
        let n = rng.gen_range(3..=20);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let slope = rng.gen_range(-2.0..2.0);
        let y: Vec<f64> = x.iter().map(|v| 1.0 + slope * v + rng.gen_range(-1.0..1.0)).collect();
        let lambda = rng.gen_range(0.01..2.0);
        let alpha: f64 = rng.gen_range(0.0..=1.0);

        let (mx, my) = (mean(&x), mean(&y));
        let sxy = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n as f64;
        let sxx = x.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>() / n as f64;
        let shrunk = sxy.signum() * (sxy.abs() - lambda * alpha).max(0.0);
        let beta = shrunk / (sxx + lambda * (1.0 - alpha));
        let intercept = my - beta * mx;

        let cfg = ElasticNetConfig {
            strength: lambda,
            mixing: alpha,
            tol: 1e-13,
            max_sweeps: 1_000_000,
        };
        let column: Vec<[f64; 1]> = x.iter().map(|&v| [v]).collect();
        let fit = fit_elastic_net(&Matrix::from_rows(&column).map_err(err)?, &y, &cfg).map_err(err)?;
        let d = (fit.beta[0] - beta).abs().max((fit.intercept - intercept).abs());
        worst_soft = worst_soft.max(d);
        ensure(d <= TOL, || {
            format!(
                "problem {problem}: ({}, {}) vs closed form ({beta}, {intercept})",
                fit.beta[0], fit.intercept
            )
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < BUDGET, || format!("took {elapsed:?}, budget {BUDGET:?}"))?;
    Ok(format!(
        "max |beta - OLS| {worst_ols:.1e}, max |beta - soft threshold| {worst_soft:.1e}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

/// Greedy tree grown by trying every feature and every cut between adjacent
/// distinct values, with the first strictly best cut kept.
fn oracle_tree(x: &[Vec<f64>], y: &[f64], rows: &[usize], depth: usize, max_depth: usize, out: &mut [f64]) {
    let targets: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
    let value = mean(&targets);
    let pure = targets.iter().all(|&t| t == targets[0]);
    if depth == max_depth || pure || rows.len() < 2 {
        rows.iter().for_each(|&r| out[r] = value);
        return;
    }
    let sse = |idx: &[usize]| {
        let m = mean(&idx.iter().map(|&r| y[r]).collect::<Vec<_>>());
        idx.iter().map(|&r| (y[r] - m) * (y[r] - m)).sum::<f64>()
    };
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..x[0].len() {
        let mut values: Vec<f64> = rows.iter().map(|&r| x[r][f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for &cut in &values[..values.len() - 1] {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= cut);
            let s = sse(&l) + sse(&r);
            if best.map_or(true, |(b, _, _)| s < b) {
                best = Some((s, f, cut));
            }
        }
    }
    match best {
        None => rows.iter().for_each(|&r| out[r] = value),
        Some((_, f, cut)) => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= cut);
            oracle_tree(x, y, &l, depth + 1, max_depth, out);
            oracle_tree(x, y, &r, depth + 1, max_depth, out);
        }
    }
}

// 2. Trees against exhaustive split search; a one-tree forest without
//    bagging or feature sampling against a single tree.
fn tree_oracles() -> Outcome {
    const TOL: f64 = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for problem in 0..50 {
        let p = rng.gen_range(1..=4);
        let n = rng.gen_range(2..=32);
        let depth = rng.gen_range(1..=2);
        // Half-integer grid so that feature values repeat.
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| f64::from(rng.gen_range(0..10)) / 2.0).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let x = Matrix::from_rows(&rows).map_err(err)?;
        let cfg = TreeConfig::new(depth);
        let tree = fit_decision_tree(&x, &y, &cfg).map_err(err)?;
        let tree_pred: Vec<f64> = rows.iter().map(|r| tree.predict_row(r)).collect();
        let mut oracle = vec![0.0; n];
        oracle_tree(&rows, &y, &(0..n).collect::<Vec<_>>(), 0, depth, &mut oracle);
        let (a, b) = (mse(&tree_pred, &y), mse(&oracle, &y));
        worst = worst.max((a - b).abs());
        ensure((a - b).abs() <= TOL, || {
            format!("problem {problem}: tree MSE {a} vs oracle {b}")
        })?;

        let forest = fit_random_forest(
            &x,
            &y,
            &ForestConfig {
                n_estimators: 1,
                tree: cfg.clone(),
                feature_fraction: 1.0,
                bootstrap: false,
                seed: problem,
            },
        )
        .map_err(err)?;
        let probes: Vec<Vec<f64>> = rows
            .iter()
            .cloned()
            .chain(uniform_rows(&mut rng, 10, p, -1.0, 6.0))
            .collect();
        for probe in &probes {
            let (t, f) = (tree.predict_row(probe), forest.predict_row(probe));
            ensure(t.to_bits() == f.to_bits(), || {
                format!("problem {problem}: forest {f} vs tree {t}")
            })?;
        }
    }
    Ok(format!(
        "max |tree MSE - oracle MSE| {worst:.1e}; degenerate forest bit-identical on 50 problems"
    ))
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8)
}

// 3. Analytic gradients against central differences.
fn gradient_checks() -> Outcome {
    const TOL: f64 = 1e-4;
    const BUDGET: Duration = Duration::from_secs(30);
    const H: f64 = 1e-5;
    let start = Instant::now();

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net = Mlp::<f64>::init(&[3, 5, 4, 1], &mut rng).map_err(err)?;
    // Non-zero biases so every parameter is exercised away from its initial value.
    for k in 0..net.param_count() {
        let v = net.param(k) + rng.gen_range(-0.1..0.1);
        net.set_param(k, v);
    }
    let x = Matrix::from_rows(&uniform_rows(&mut rng, 8, 3, -1.0, 1.0)).map_err(err)?;
    let y: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (_, grads) = mse_loss_and_grad(&net, &x, &y);
    let mut worst_fcnn = 0.0f64;
    for k in 0..net.param_count() {
        let mut plus = net.clone();
        plus.set_param(k, net.param(k) + H);
        let mut minus = net.clone();
        minus.set_param(k, net.param(k) - H);
        let numeric = (mse_loss(&plus, &x, &y) - mse_loss(&minus, &x, &y)) / (2.0 * H);
        let rel = relative_error(grads.param(k), numeric);
        worst_fcnn = worst_fcnn.max(rel);
        ensure(rel <= TOL, || {
            format!("FCNN parameter {k}: analytic {} numeric {numeric}", grads.param(k))
        })?;
    }

    let graphs = vec![
        parse_smiles("CC(=O)N").map_err(err)?,
        parse_smiles("C1CC1O").map_err(err)?,
    ];
    ensure(graphs.iter().all(|g| g.atom_count() <= 6), || {
        "molecules exceed 6 vertices".into()
    })?;
    let pairs = vec![(0, 1), (1, 0), (0, 0)];
    let cells = Matrix::from_rows(&uniform_rows(&mut rng, 3, 2, -1.0, 1.0)).map_err(err)?;
    let y = vec![0.7, 0.7, -1.2];
    let data = GraphPairs {
        graphs: &graphs,
        pairs: &pairs,
        cells: &cells,
    };
    let cfg = GnnConfig {
        embed_dim: 4,
        radius: 1,
        layers: 2,
        head: FcnnConfig {
            hidden: vec![6, 5],
            ..FcnnConfig::default()
        },
        epochs: 1,
        seed: 3,
        bond_orders: true,
    };
    let model = init_gnn(&graphs, 2, &cfg, &mut rng).map_err(err)?;
    let (_, grads) = gnn_loss_and_grad(&model, &data, &y).map_err(err)?;
    let mut worst_gnn = 0.0f64;
    for k in 0..model.params.param_count() {
        let mut plus = model.clone();
        plus.params.set_param(k, model.params.param(k) + H);
        let mut minus = model.clone();
        minus.params.set_param(k, model.params.param(k) - H);
        let numeric =
            (gnn_loss(&plus, &data, &y).map_err(err)? - gnn_loss(&minus, &data, &y).map_err(err)?) / (2.0 * H);
        let rel = relative_error(grads.param(k), numeric);
        worst_gnn = worst_gnn.max(rel);
        ensure(rel <= TOL, || {
            format!("GNN parameter {k}: analytic {} numeric {numeric}", grads.param(k))
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < BUDGET, || format!("took {elapsed:?}, budget {BUDGET:?}"))?;
    Ok(format!(
        "{} FCNN params (max rel {worst_fcnn:.1e}), {} GNN params (max rel {worst_gnn:.1e}), {:.2}s",
        net.param_count(),
        model.params.param_count(),
        elapsed.as_secs_f64()
    ))
}

// 4. Boosting never increases the training error.
fn gbm_monotone() -> Outcome {
    let rates = [0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.0, 0.1, 0.25, 0.6];
    for (dataset, &rate) in rates.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + dataset as u64);
        let n = rng.gen_range(30..=80);
        let rows = uniform_rows(&mut rng, n, 3, -2.0, 2.0);
        let y: Vec<f64> = rows
            .iter()
            .map(|r| 3.0 * r[0].sin() + r[1] * r[2] + rng.gen_range(-0.5..0.5))
            .collect();
        let x = Matrix::from_rows(&rows).map_err(err)?;
        let cfg = GbmConfig {
            n_estimators: 100,
            learning_rate: rate,
            tree: TreeConfig::new(1 + dataset % 3),
        };
        let fit = fit_gbm_traced(&x, &y, &cfg).map_err(err)?;
        ensure(fit.train_mse.len() == 101, || {
            format!("dataset {dataset}: trace has {} entries", fit.train_mse.len())
        })?;
        if let Some(s) = fit.train_mse.windows(2).position(|w| w[1] > w[0]) {
            return Err(format!(
                "dataset {dataset}: MSE rose at stage {}: {} -> {}",
                s + 1,
                fit.train_mse[s],
                fit.train_mse[s + 1]
            ));
        }
        // The recorded trace is the error of the model actually returned.
        let mut pred = vec![fit.model.base(); n];
        for tree in fit.model.stages() {
            for (p, r) in pred.iter_mut().zip(&rows) {
                *p += rate * tree.predict_row(r);
            }
        }
        let last = *fit.train_mse.last().unwrap();
        ensure((mse(&pred, &y) - last).abs() <= 1e-12 * last.max(1.0), || {
            format!("dataset {dataset}: final trace {last} but model MSE {}", mse(&pred, &y))
        })?;
    }
    Ok("training MSE non-increasing at every one of 100 stages on 10 datasets".into())
}

/// Two-sided p by listing every sign pattern: the share of patterns whose
/// positive-rank sum is at least as far from its mean as the observed one.
fn enumerated_p(d: &[f64]) -> f64 {
    let d: Vec<f64> = d.iter().copied().filter(|&v| v != 0.0).collect();
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks: Vec<f64> = abs
        .iter()
        .map(|&a| {
            let below = abs.iter().filter(|&&b| b < a).count() as f64;
            let equal = abs.iter().filter(|&&b| b == a).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let centre = ranks.iter().sum::<f64>() / 2.0;
    let observed: f64 = ranks.iter().zip(&d).filter(|(_, &v)| v > 0.0).map(|(r, _)| r).sum();
    let extreme = (0u32..1 << n)
        .filter(|mask| {
            let w: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            (w - centre).abs() >= (observed - centre).abs()
        })
        .count();
    extreme as f64 / f64::from(1u32 << n)
}

// 5. Exact signed-rank p-values.
fn wilcoxon_exact() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for n in 1..=10 {
        for sample in 0..400 {
            let a: Vec<f64> = (0..n)
                .map(|_| {
                    if sample % 2 == 0 {
                        f64::from(rng.gen_range(-3..=3))
                    } else {
                        rng.gen_range(-3.0..3.0)
                    }
                })
                .collect();
            let b = vec![0.0; n];
            if a.iter().all(|&v| v == 0.0) {
                ensure(
                    matches!(wilcoxon_signed_rank(&a, &b), Err(Error::DegenerateSample)),
                    || format!("n={n}: all-zero differences were not rejected"),
                )?;
                continue;
            }
            let got = wilcoxon_signed_rank(&a, &b).map_err(err)?;
            let want = enumerated_p(&a);
            ensure(got.exact && got.p_value == want, || {
                format!("n={n} sample {a:?}: p {} vs enumeration {want}", got.p_value)
            })?;
            checked += 1;
        }
    }
    let five = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]).map_err(err)?;
    ensure(five.p_value == 0.0625, || {
        format!("n=5 all positive: p {}", five.p_value)
    })?;
    Ok(format!(
        "{checked} samples with n <= 10 equal to enumeration; n=5 all positive gives p = {}",
        five.p_value
    ))
}

/// Returns held-out targets with a small row-dependent offset, refusing any
/// split whose training and test sets share a drug pair.
struct LeakCheck;

impl FoldModel<f64> for LeakCheck {
    fn fit_predict(&self, instances: &[SynergyInstance<f64>], split: FoldSplit<'_>) -> synergy_core::Result<Vec<f64>> {
        let train: BTreeSet<String> = split.train.iter().map(|&i| instances[i].pair_id()).collect();
        if let Some(&i) = split.test.iter().find(|&&i| train.contains(&instances[i].pair_id())) {
            return Err(Error::Invariant(format!(
                "pair {} is in both sides",
                instances[i].pair_id()
            )));
        }
        Ok(split
            .test
            .iter()
            .chain(split.test)
            .enumerate()
            .map(|(r, &i)| instances[i].score + 0.1 * (r % 7) as f64)
            .collect())
    }
}

// 6. Folds keyed on unordered pairs, with mirrored rows kept together.
fn cv_integrity() -> Outcome {
    let screen: SyntheticScreen<f64> = generate(&SyntheticConfig::default()).map_err(err)?;
    let instances = &screen.instances;
    let pairs: BTreeSet<String> = instances.iter().map(|i| i.pair_id()).collect();
    let rows = assemble_pairs(instances, &screen.drugs, &screen.cells).map_err(err)?;
    ensure(screen.drugs.len() == 12 && screen.cells.len() == 3, || {
        "screen is not 12 x 3".into()
    })?;
    ensure(pairs.len() == 66 && instances.len() == 198 && rows.len() == 396, || {
        format!(
            "{} pairs, {} instances, {} rows",
            pairs.len(),
            instances.len(),
            rows.len()
        )
    })?;
    let n = instances.len();
    for seed in 0..100 {
        let plan = make_folds(instances, 5, seed).map_err(err)?;
        let keys: BTreeSet<String> = plan.assignment.keys().cloned().collect();
        ensure(keys == pairs, || {
            format!("plan {seed}: assignment keys differ from the pair set")
        })?;

        let mut fold_of_pair: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        let folds = plan.instance_folds(instances).map_err(err)?;
        for (inst, &f) in instances.iter().zip(&folds) {
            fold_of_pair.entry(inst.pair_id()).or_default().insert(f);
        }
        ensure(fold_of_pair.values().all(|s| s.len() == 1), || {
            format!("plan {seed}: a pair straddles folds")
        })?;

        for i in 0..n {
            let (a, b) = (&rows.row_meta[i], &rows.row_meta[n + i]);
            ensure(
                a.pair_id == b.pair_id && a.cell_line == b.cell_line && !a.mirrored && b.mirrored,
                || format!("plan {seed}: row {i} and its mirror disagree"),
            )?;
            ensure(plan.fold_of(&a.pair_id) == plan.fold_of(&b.pair_id), || {
                format!("plan {seed}: row {i} and its mirror are in different folds")
            })?;
        }

        let outcome = cross_validate(&LeakCheck, instances, &plan).map_err(|e| format!("plan {seed}: {e}"))?;
        ensure(outcome.predictions.len() == 2 * n, || {
            format!("plan {seed}: {} held-out rows", outcome.predictions.len())
        })?;
        let mut seen: BTreeMap<usize, Vec<(usize, bool)>> = BTreeMap::new();
        for row in &outcome.predictions {
            seen.entry(row.instance).or_default().push((row.fold, row.mirrored));
        }
        for (i, v) in &seen {
            ensure(
                v.len() == 2 && v[0].0 == v[1].0 && v[0].0 == folds[*i] && v[0].1 != v[1].1,
                || format!("plan {seed}: instance {i} held out as {v:?}"),
            )?;
        }
        ensure(seen.len() == n, || {
            format!("plan {seed}: {} instances held out", seen.len())
        })?;
    }
    Ok("66 pairs / 198 instances / 396 rows; 100 plans without straddling pairs, mirrors co-located".into())
}

// 7. The greedy ensemble never loses to its best member and its mixing
//    weights are the grid minima.
fn ensemble_dominance() -> Outcome {
    let grid = (1.0 / DEFAULT_STEP).round() as usize;
    let mut wins = 0;
    let mut members_total = 0;
    for trial in 0..100u64 {
        let screen: SyntheticScreen<f64> = generate(&SyntheticConfig {
            seed: trial,
            ..SyntheticConfig::default()
        })
        .map_err(err)?;
        let y: Vec<f64> = screen.instances.iter().map(|i| i.score).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + trial);
        let mut entries: Vec<BaseLearnerEntry<f64>> = planted_learners(&y, &[1.0, 1.5, 2.0], &mut rng);
        entries.shuffle(&mut rng);
        let fit = greedy_forward_ensemble_traced(&entries, &y, DEFAULT_STEP, DEFAULT_REL_TOL).map_err(err)?;
        let by_id: BTreeMap<&str, &[f64]> = entries
            .iter()
            .map(|e| (e.id.as_str(), e.val_predictions.as_slice()))
            .collect();

        let best_single = entries
            .iter()
            .map(|e| mse(&e.val_predictions, &y))
            .fold(f64::INFINITY, f64::min);
        let mut blended = vec![0.0; y.len()];
        for (id, &w) in fit.model.member_ids.iter().zip(&fit.model.weights) {
            for (b, v) in blended.iter_mut().zip(by_id[id.as_str()]) {
                *b += w * v;
            }
        }
        let ensemble = mse(&blended, &y);
        ensure(ensemble <= best_single, || {
            format!("trial {trial}: ensemble MSE {ensemble} above best member {best_single}")
        })?;
        wins += 1;
        members_total += fit.model.member_ids.len();

        let mut current: Vec<f64> = by_id[fit.ranking[0].0.as_str()].to_vec();
        for step in &fit.steps {
            let cand = by_id[step.candidate.as_str()];
            let mut best = (0usize, f64::INFINITY);
            for i in 0..=grid {
                let g = i as f64 / grid as f64;
                let mixed: Vec<f64> = current.iter().zip(cand).map(|(c, d)| (1.0 - g) * c + g * d).collect();
                let m = mse(&mixed, &y);
                if m < best.1 {
                    best = (i, m);
                }
            }
            let want = best.0 as f64 / grid as f64;
            ensure(step.gamma == want, || {
                format!(
                    "trial {trial}, candidate {}: gamma {} vs brute force {want}",
                    step.candidate, step.gamma
                )
            })?;
            if !step.accepted {
                break;
            }
            for (c, d) in current.iter_mut().zip(cand) {
                *c += step.gamma * (d - *c);
            }
        }
    }
    Ok(format!(
        "ensemble <= best member in {wins}/100 trials (mean {:.2} members); every gamma equals the grid minimum",
        members_total as f64 / 100.0
    ))
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn read_dir_sorted(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(err)? {
        let entry = entry.map_err(err)?;
        files.insert(
            entry.file_name().to_string_lossy().into_owned(),
            fs::read(entry.path()).map_err(err)?,
        );
    }
    Ok(files)
}

// 8. The command-line `cv` on the bundled configuration.
fn end_to_end_smoke() -> Outcome {
    const BUDGET: Duration = Duration::from_secs(60);
    let config = workspace_root().join("configs/demo.conf");
    let parsed = RunConfig::load(&config).map_err(err)?;
    let model = parsed.model().map_err(err)?;
    ensure(model.kind == ModelKind::Gbm && model.max_depth == Some(2), || {
        "demo configuration is not a depth-2 GBM".into()
    })?;

    let tmp = tempfile::tempdir().map_err(err)?;
    let mut outputs = Vec::new();
    let mut first_time = Duration::ZERO;
    for run in ["first", "second"] {
        let out = tmp.path().join(run);
        let start = Instant::now();
        let status = Command::new(env!("CARGO_BIN_EXE_synergy"))
            .arg("cv")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--threads", "1"])
            .output()
            .map_err(err)?;
        let elapsed = start.elapsed();
        ensure(status.status.code() == Some(0), || {
            format!(
                "{run} run exited {:?}: {}",
                status.status.code(),
                String::from_utf8_lossy(&status.stderr)
            )
        })?;
        ensure(elapsed < BUDGET, || {
            format!("{run} run took {elapsed:?}, budget {BUDGET:?}")
        })?;
        if run == "first" {
            first_time = elapsed;
        }
        outputs.push(read_dir_sorted(&out)?);
    }
    ensure(outputs[0].contains_key("report.csv"), || "report.csv missing".into())?;
    let names: Vec<&String> = outputs[0].keys().collect();
    ensure(outputs[0] == outputs[1], || format!("reruns differ among {names:?}"))?;
    Ok(format!(
        "exit 0 in {:.2}s on one thread; {} output files byte-identical on rerun",
        first_time.as_secs_f64(),
        names.len()
    ))
}

// 9. Drug vectors do not depend on atom numbering.
fn gnnr_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let graphs: Vec<MolecularGraph> = (0..10)
        .map(|_| parse_smiles(&random_smiles(&mut rng)))
        .collect::<synergy_core::Result<_>>()
        .map_err(err)?;
    let pairs: Vec<(usize, usize)> = (0..10).map(|i| (i, (i + 1) % 10)).collect();
    let cells = Matrix::from_rows(&uniform_rows(&mut rng, 10, 2, -1.0, 1.0)).map_err(err)?;
    let y: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let cfg = GnnConfig {
        head: FcnnConfig {
            hidden: vec![16, 8],
            learning_rate: 1e-3,
            dropout: 0.0,
            batch_size: 4,
            ..FcnnConfig::default()
        },
        epochs: 3,
        seed: 9,
        ..GnnConfig::default()
    };
    let data = GraphPairs {
        graphs: &graphs,
        pairs: &pairs,
        cells: &cells,
    };
    let model = fit_gnn(&data, &y, &cfg).map_err(err)?;
    for (m, g) in graphs.iter().enumerate() {
        let reference = model.extract(g);
        ensure(reference.iter().any(|&v| v != 0.0), || {
            format!("molecule {m}: embedding is all zero")
        })?;
        let mut perm: Vec<usize> = (0..g.atom_count()).collect();
        for trial in 0..100 {
            perm.shuffle(&mut rng);
            let relabeled = g.permuted(&perm).map_err(err)?;
            ensure(model.extract(&relabeled) == reference, || {
                format!("molecule {m}, relabeling {trial} ({perm:?}): embedding changed")
            })?;
        }
    }
    Ok(format!(
        "1000 relabelings of 10 molecules give identical {}-length vectors",
        model.embed_dim()
    ))
}

// 10. The reference configurations carry the published best settings.
fn reference_configs() -> Outcome {
    let dir = workspace_root().join("configs/reference");
    let load = |name: &str| {
        let path = dir.join(name);
        let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        RunConfig::parse(&text, &path).map_err(err)
    };
    let echoes = |c: &RunConfig, lines: &[&str]| {
        for l in lines {
            ensure(c.echo.iter().any(|e| e == l), || {
                format!("{}: missing `{l}`", c.source.display())
            })?;
        }
        Ok::<(), String>(())
    };

    let cdr_fcnn = load("cdr_fcnn.conf")?;
    echoes(
        &cdr_fcnn,
        &[
            "[model] kind = fcnn",
            "[model] epochs = 455",
            "[model] hidden = 3000,1500",
            "[model] dropout = 0.4",
        ],
    )?;
    match cdr_fcnn.model().map_err(err)?.tabular::<f64>() {
        Some(synergy_core::learners::TabularLearner::Fcnn(c)) => {
            ensure(c.epochs == 455 && c.hidden == [3000, 1500] && c.dropout == 0.4, || {
                format!("CDR FCNN maps to {c:?}")
            })?
        }
        other => return Err(format!("CDR FCNN maps to {other:?}")),
    }

    for name in ["cdr_gb.conf", "chemr_gb.conf"] {
        let c = load(name)?;
        echoes(
            &c,
            &[
                "[model] kind = gbm",
                "[model] max_depth = 6",
                "[model] learning_rate = 0.05",
            ],
        )?;
        match c.model().map_err(err)?.tabular::<f64>() {
            Some(synergy_core::learners::TabularLearner::Gbm(g)) => {
                ensure(g.tree.max_depth == 6 && g.learning_rate == 0.05, || {
                    format!("{name} maps to {g:?}")
                })?
            }
            other => return Err(format!("{name} maps to {other:?}")),
        }
    }

    let gnn = load("gnnr_fcnn.conf")?;
    echoes(
        &gnn,
        &[
            "[model] kind = gnn",
            "[model] epochs = 1000",
            "[model] radius = 2",
            "[model] embed_dim = 25",
            "[model] layers = 3",
            "[model] hidden = 3000,1500",
        ],
    )?;
    let g = gnn
        .model()
        .map_err(err)?
        .gnn::<f64>()
        .ok_or("GNN configuration does not map to a graph network")?;
    ensure(
        g.epochs == 1000 && g.radius == 2 && g.embed_dim == 25 && g.layers == 3 && g.head.hidden == [3000, 1500],
        || format!("GNN maps to {g:?}"),
    )?;

    let chemr = load("chemr_fcnn.conf")?;
    echoes(
        &chemr,
        &["[model] hidden = 8192,4096", "[model] learning_rate = 0.00001"],
    )?;

    let ensemble = load("ensemble.conf")?;
    ensure(ensemble.ensemble.members.len() == 5, || {
        format!("{} ensemble members", ensemble.ensemble.members.len())
    })?;
    Ok("FCNN E=455 H={3000,1500} D=0.4; GB M=6 T=0.05; GNN E=1000 r=2 d=25 L=3 H={3000,1500}".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("elastic net oracles", elastic_net_oracles),
        ("tree oracles", tree_oracles),
        ("gradient checks", gradient_checks),
        ("GBM monotonicity", gbm_monotone),
        ("Wilcoxon exactness", wilcoxon_exact),
        ("CV integrity", cv_integrity),
        ("ensemble dominance", ensemble_dominance),
        ("end-to-end smoke", end_to_end_smoke),
        ("GNNR permutation invariance", gnnr_invariance),
        ("reference configurations", reference_configs),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
