//! Weighted blends of base learners built by greedy forward selection.
//!
//! Base learners are sorted best-first by validation MSE. The blend starts
//! from the best learner; each next learner is mixed in as
//! `(1 - gamma) * blend + gamma * candidate` with `gamma` grid-searched on
//! `[0, 1]`. Selection stops at the first candidate that is not taken
//! (`gamma = 0`) or improves MSE by less than the relative tolerance. The
//! cascade of mixing factors yields simplex weights.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{sum_sq_diff, Scalar};

pub const DEFAULT_STEP: f64 = 0.005;
pub const DEFAULT_REL_TOL: f64 = 1e-4;
/// Allowed deviation of the weight sum from one.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Validation predictions of one representation-model combination.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseLearnerEntry<F> {
    pub id: String,
    pub val_predictions: Vec<F>,
}

impl<F: Scalar> BaseLearnerEntry<F> {
    pub fn new(id: impl Into<String>, val_predictions: Vec<F>) -> Self {
        Self {
            id: id.into(),
            val_predictions,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel<F> {
    pub member_ids: Vec<String>,
    pub weights: Vec<F>,
    /// Validation MSE of the final blend.
    pub val_mse: F,
}

impl<F: Scalar> EnsembleModel<F> {
    pub fn new(member_ids: Vec<String>, weights: Vec<F>, val_mse: F) -> Result<Self> {
        if member_ids.len() != weights.len() {
            return Err(Error::Shape("one weight per member required".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = member_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::DuplicateKey(dup.clone()));
        }
        check_simplex(&weights)?;
        Ok(Self {
            member_ids,
            weights,
            val_mse,
        })
    }

    /// Blends member predictions given in `member_ids` order.
    pub fn predict(&self, member_predictions: &[&[F]]) -> Result<Vec<F>> {
        weighted_predict(member_predictions, &self.weights)
    }

    /// `member_id weight` lines followed by a `# validation_mse` comment.
    pub fn to_description(&self) -> String {
        let mut out = String::new();
        for (id, w) in self.member_ids.iter().zip(&self.weights) {
            let _ = writeln!(out, "{id} {w}");
        }
        let _ = writeln!(out, "# validation_mse {}", self.val_mse);
        out
    }

    pub fn parse_description(text: &str) -> Result<Self> {
        let mut ids = Vec::new();
        let mut weights = Vec::new();
        let mut val_mse = F::nan();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("validation_mse") {
                    val_mse = v.trim().parse().map_err(|_| Error::Parse {
                        line: i + 1,
                        msg: "bad validation_mse".into(),
                    })?;
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::Format {
                    line: i + 1,
                    msg: "expected `member_id weight`".into(),
                });
            }
            ids.push(fields[0].to_string());
            weights.push(fields[1].parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("weight `{}` is not a number", fields[1]),
            })?);
        }
        Self::new(ids, weights, val_mse)
    }
}

fn check_simplex<F: Scalar>(weights: &[F]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::Invariant("ensemble has no members".into()));
    }
    if weights.iter().any(|&w| !(w >= F::zero() && w <= F::one())) {
        return Err(Error::Invariant("weights must lie in [0, 1]".into()));
    }
    let sum = weights.iter().fold(F::zero(), |a, &w| a + w);
    if (sum - F::one()).abs().as_f64() > SIMPLEX_TOL {
        return Err(Error::Invariant(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

fn mse<F: Scalar>(p: &[F], y: &[F]) -> F {
    sum_sq_diff(p, y) / F::of_usize(y.len())
}

/// Elementwise `sum_i weights[i] * entries[i]`.
pub fn weighted_predict<F: Scalar>(entries: &[&[F]], weights: &[F]) -> Result<Vec<F>> {
    if entries.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} prediction vectors but {} weights",
            entries.len(),
            weights.len()
        )));
    }
    check_simplex(weights)?;
    let n = entries[0].len();
    if entries.iter().any(|e| e.len() != n) {
        return Err(Error::Shape("prediction vectors differ in length".into()));
    }
    Ok((0..n)
        .map(|r| {
            entries
                .iter()
                .zip(weights)
                .fold(F::zero(), |acc, (e, &w)| acc + w * e[r])
        })
        .collect())
}

fn grid_size<F: Scalar>(step: F) -> Result<usize> {
    if !(step > F::zero() && step <= F::one()) {
        return Err(Error::Argument("grid step must lie in (0, 1]".into()));
    }
    let k = (F::one() / step).round();
    if (k * step - F::one()).abs().as_f64() > 1e-9 {
        return Err(Error::Argument(format!("grid step {step} does not divide 1")));
    }
    Ok(k.to_usize().expect("positive"))
}

/// Grid point `i` of `k`, computed as `i / k` so that endpoints are exact.
#[inline]
fn grid_point<F: Scalar>(i: usize, k: usize) -> F {
    F::of_usize(i) / F::of_usize(k)
}

#[inline]
fn mix<F: Scalar>(current: F, candidate: F, gamma: F) -> F {
    current + gamma * (candidate - current)
}

/// Best `gamma` on `{0, step, ..., 1}` for `(1 - gamma) * current + gamma *
/// candidate`; ties go to the smallest `gamma`.
pub fn search_mixing_weight<F: Scalar>(current: &[F], candidate: &[F], y: &[F], step: F) -> Result<(F, F)> {
    if current.len() != y.len() || candidate.len() != y.len() {
        return Err(Error::Shape(format!(
            "lengths differ: current {}, candidate {}, targets {}",
            current.len(),
            candidate.len(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Argument("empty validation set".into()));
    }
    let k = grid_size(step)?;
    let n = F::of_usize(y.len());
    let mut best = (F::zero(), F::infinity());
    for i in 0..=k {
        let gamma = grid_point::<F>(i, k);
        let sse = current
            .iter()
            .zip(candidate)
            .zip(y)
            .fold(F::zero(), |acc, ((&c, &d), &t)| {
                let e = mix(c, d, gamma) - t;
                acc + e * e
            });
        let m = sse / n;
        if m < best.1 {
            best = (gamma, m);
        }
    }
    Ok(best)
}

/// One accepted or rejected step of the greedy procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyStep<F> {
    pub candidate: String,
    pub gamma: F,
    pub mse_before: F,
    pub mse_after: F,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct GreedyFit<F> {
    pub model: EnsembleModel<F>,
    /// Entry ids sorted best-first by individual MSE.
    pub ranking: Vec<(String, F)>,
    pub steps: Vec<GreedyStep<F>>,
}

pub fn greedy_forward_ensemble<F: Scalar>(
    entries: &[BaseLearnerEntry<F>],
    y: &[F],
    step: F,
    rel_tol: F,
) -> Result<EnsembleModel<F>> {
    greedy_forward_ensemble_traced(entries, y, step, rel_tol).map(|f| f.model)
}

pub fn greedy_forward_ensemble_traced<F: Scalar>(
    entries: &[BaseLearnerEntry<F>],
    y: &[F],
    step: F,
    rel_tol: F,
) -> Result<GreedyFit<F>> {
    if entries.is_empty() {
        return Err(Error::Argument("at least one base learner is required".into()));
    }
    for e in entries {
        if e.val_predictions.len() != y.len() {
            return Err(Error::Shape(format!(
                "`{}` has {} predictions for {} targets",
                e.id,
                e.val_predictions.len(),
                y.len()
            )));
        }
        if e.val_predictions.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("`{}` has non-finite predictions", e.id)));
        }
    }
    if y.is_empty() {
        return Err(Error::Argument("empty validation set".into()));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = entries.iter().find(|e| !seen.insert(e.id.as_str())) {
        return Err(Error::DuplicateKey(dup.id.clone()));
    }
    grid_size(step)?;

    let mut order: Vec<(usize, F)> = entries
        .iter()
        .enumerate()
        .map(|(i, e)| (i, mse(&e.val_predictions, y)))
        .collect();
    // Stable: equal MSE keeps input order.
    order.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let ranking = order.iter().map(|&(i, m)| (entries[i].id.clone(), m)).collect();

    let (first, first_mse) = order[0];
    let mut members = vec![first];
    let mut weights = vec![F::one()];
    let mut blend = entries[first].val_predictions.clone();
    let mut current_mse = first_mse;
    let mut steps = Vec::new();

    for &(idx, _) in &order[1..] {
        let cand = &entries[idx].val_predictions;
        let (gamma, new_mse) = search_mixing_weight(&blend, cand, y, step)?;
        let improved = current_mse > F::zero() && (current_mse - new_mse) / current_mse >= rel_tol;
        let accepted = gamma > F::zero() && improved;
        steps.push(GreedyStep {
            candidate: entries[idx].id.clone(),
            gamma,
            mse_before: current_mse,
            mse_after: new_mse,
            accepted,
        });
        if !accepted {
            break;
        }
        weights.iter_mut().for_each(|w| *w *= F::one() - gamma);
        weights.push(gamma);
        members.push(idx);
        for (b, &c) in blend.iter_mut().zip(cand) {
            *b = mix(*b, c, gamma);
        }
        current_mse = new_mse;
    }

    let total = weights.iter().fold(F::zero(), |a, &w| a + w);
    weights.iter_mut().for_each(|w| *w /= total);
    let model = EnsembleModel::new(
        members.iter().map(|&i| entries[i].id.clone()).collect(),
        weights,
        current_mse,
    )?;
    Ok(GreedyFit { model, ranking, steps })
}

/// Exhaustive search over simplex weights on a coarse grid, for up to three
/// members. Returns weights in `entries` order and the best MSE.
pub fn joint_grid_search<F: Scalar>(entries: &[&[F]], y: &[F], step: F) -> Result<(Vec<F>, F)> {
    if entries.is_empty() || entries.len() > 3 {
        return Err(Error::Argument("joint grid search supports 1 to 3 members".into()));
    }
    if step.as_f64() < 0.05 {
        return Err(Error::Argument("joint grid step must be >= 0.05".into()));
    }
    let k = grid_size(step)?;
    let m = entries.len();
    let mut best: (Vec<F>, F) = (Vec::new(), F::infinity());
    let mut counts = vec![0usize; m];
    // Enumerate integer compositions of k into m parts.
    fn rec<F: Scalar>(
        pos: usize,
        left: usize,
        k: usize,
        counts: &mut Vec<usize>,
        entries: &[&[F]],
        y: &[F],
        best: &mut (Vec<F>, F),
    ) {
        let m = counts.len();
        if pos == m - 1 {
            counts[pos] = left;
            let w: Vec<F> = counts.iter().map(|&c| grid_point(c, k)).collect();
            let sse = (0..y.len()).fold(F::zero(), |acc, r| {
                let p = entries.iter().zip(&w).fold(F::zero(), |a, (e, &wi)| a + wi * e[r]);
                acc + (p - y[r]) * (p - y[r])
            });
            let v = sse / F::of_usize(y.len());
            if v < best.1 {
                *best = (w, v);
            }
            return;
        }
        for c in 0..=left {
            counts[pos] = c;
            rec(pos + 1, left - c, k, counts, entries, y, best);
        }
    }
    if entries.iter().any(|e| e.len() != y.len()) {
        return Err(Error::Shape("prediction vectors differ in length".into()));
    }
    rec(0, k, k, &mut counts, entries, y, &mut best);
    Ok(best)
}

/// Reads a `row_id,prediction` CSV, returning values ordered by row id.
/// Row ids must be exactly `0..n` in any order.
pub fn parse_prediction_csv<F: Scalar>(text: &str, header_name: &str) -> Result<Vec<F>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());
    let expected = format!("row_id,{header_name}");
    match lines.next() {
        Some((_, h)) if h.trim() == expected => {}
        other => {
            return Err(Error::Format {
                line: other.map_or(1, |(l, _)| l),
                msg: format!("header must be `{expected}`"),
            })
        }
    }
    let mut rows: Vec<(usize, F)> = Vec::new();
    for (lineno, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 2 {
            return Err(Error::Format {
                line: lineno,
                msg: "expected 2 columns".into(),
            });
        }
        let id: usize = cells[0].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("row id `{}` is not an integer", cells[0]),
        })?;
        let v: F = cells[1].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("value `{}` is not a number", cells[1]),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                msg: "value is not finite".into(),
            });
        }
        rows.push((id, v));
    }
    rows.sort_by_key(|r| r.0);
    if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
        return Err(Error::Format {
            line: 0,
            msg: "row ids must be exactly 0..n without gaps or repeats".into(),
        });
    }
    Ok(rows.into_iter().map(|r| r.1).collect())
}

pub fn load_prediction_csv<F: Scalar>(path: impl AsRef<Path>, header_name: &str) -> Result<Vec<F>> {
    let path = path.as_ref();
    parse_prediction_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?, header_name)
}

/// `row_id,<name>` CSV text.
pub fn prediction_csv<F: Scalar>(values: &[F], header_name: &str) -> String {
    let mut out = format!("row_id,{header_name}\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{i},{v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Independent oracle: evaluate every grid point directly, using a
    // straightforward mean of squared errors.
    fn brute_force(current: &[f64], candidate: &[f64], y: &[f64], k: usize) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY);
        for i in 0..=k {
            let g = i as f64 / k as f64;
            let m: f64 = y
                .iter()
                .enumerate()
                .map(|(r, t)| ((1.0 - g) * current[r] + g * candidate[r] - t).powi(2))
                .sum::<f64>()
                / y.len() as f64;
            if m < best.1 {
                best = (g, m);
            }
        }
        best
    }

    #[test]
    fn weighted_predict_cases() {
        let a = [1.0, 2.0];
        assert_eq!(weighted_predict(&[&a[..]], &[1.0]).unwrap(), vec![1.0, 2.0]);
        let two = [2.0];
        let four = [4.0];
        assert_eq!(
            weighted_predict(&[&two[..], &four[..]], &[0.5, 0.5]).unwrap(),
            vec![3.0]
        );
        assert!(matches!(
            weighted_predict(&[&two[..], &four[..]], &[0.5, 0.6]),
            Err(Error::Invariant(_))
        ));
        let short: [f64; 0] = [];
        assert!(matches!(
            weighted_predict(&[&two[..], &short[..]], &[0.5, 0.5]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn published_weights_form_a_simplex() {
        let w = [0.535, 0.19, 0.15, 0.065, 0.06];
        let preds: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 10.0]).collect();
        let refs: Vec<&[f64]> = preds.iter().map(Vec::as_slice).collect();
        let out = weighted_predict(&refs, &w).unwrap();
        let expect0 = 0.19 + 2.0 * 0.15 + 3.0 * 0.065 + 4.0 * 0.06;
        assert!((out[0] - expect0).abs() < 1e-12);
        assert!((out[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_search_cases() {
        let c = [1.0, 2.0, 3.0];
        let y = [1.5, 2.0, 2.0];
        let (g, m) = search_mixing_weight(&c, &c, &y, 0.005).unwrap();
        assert_eq!(g, 0.0);
        assert_eq!(m, mse(&c, &y));

        let (g, m) = search_mixing_weight(&[0.0, 0.0], &[2.0, 2.0], &[1.0, 1.0], 0.005).unwrap();
        assert_eq!(g, 0.5);
        assert_eq!(m, 0.0);
        assert!(search_mixing_weight(&[0.0], &[1.0, 2.0], &[1.0], 0.005).is_err());
        assert!(search_mixing_weight(&[0.0], &[1.0], &[1.0], 0.3).is_err());
    }

    #[test]
    fn noise_candidate_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let y: Vec<f64> = (0..200).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let noise: Vec<f64> = (0..200).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let (g, _) = search_mixing_weight(&y, &noise, &y, 0.005).unwrap();
        assert_eq!(g, brute_force(&y, &noise, &y, 200).0);
        assert_eq!(g, 0.0);
        let entries = vec![
            BaseLearnerEntry::new("noise", noise),
            BaseLearnerEntry::new("perfect", y.clone()),
        ];
        let ens = greedy_forward_ensemble(&entries, &y, 0.005, 1e-4).unwrap();
        assert_eq!(ens.member_ids, vec!["perfect"]);
        assert_eq!(ens.weights, vec![1.0]);
    }

    #[test]
    fn gamma_is_grid_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let n = 30;
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let a: Vec<f64> = y.iter().map(|v| v + rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = y.iter().map(|v| v + rng.gen_range(-2.0..2.0)).collect();
            let got = search_mixing_weight(&a, &b, &y, 0.005).unwrap();
            let oracle = brute_force(&a, &b, &y, 200);
            assert_eq!(got.0, oracle.0);
            assert!((got.1 - oracle.1).abs() <= 1e-12 * oracle.1);
        }
    }

    #[test]
    fn complementary_halves_get_equal_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 400;
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        // Each base sees one component, scaled so that the 50/50 blend is exact.
        let pa: Vec<f64> = u.iter().map(|a| 2.0 * a).collect();
        let pb: Vec<f64> = v.iter().map(|b| 2.0 * b).collect();
        let (g, _) = brute_force(&pa, &pb, &y, 200);
        let ens = greedy_forward_ensemble(
            &[BaseLearnerEntry::new("a", pa), BaseLearnerEntry::new("b", pb)],
            &y,
            0.005,
            1e-4,
        )
        .unwrap();
        assert_eq!(ens.member_ids.len(), 2);
        assert!((ens.weights[1] - g).abs() < 1e-12);
        assert!((ens.weights[0] - 0.5).abs() < 1e-12 && (ens.weights[1] - 0.5).abs() < 1e-12);
        assert!(ens.val_mse < 1e-20);
    }

    #[test]
    fn greedy_errors_and_single_entry() {
        assert!(matches!(
            greedy_forward_ensemble::<f64>(&[], &[1.0], 0.005, 1e-4),
            Err(Error::Argument(_))
        ));
        let e =
            greedy_forward_ensemble(&[BaseLearnerEntry::new("x", vec![1.0, 2.0])], &[1.0, 1.0], 0.005, 1e-4).unwrap();
        assert_eq!(e.member_ids, vec!["x"]);
        assert_eq!(e.weights, vec![1.0]);
    }

    #[test]
    fn cascade_weights_and_dominance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let n = 100;
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let entries: Vec<BaseLearnerEntry<f64>> = [1.0, 2.0, 3.0, 4.0]
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    BaseLearnerEntry::new(format!("m{i}"), y.iter().map(|v| v + rng.gen_range(-*s..*s)).collect())
                })
                .collect();
            let fit = greedy_forward_ensemble_traced(&entries, &y, 0.005, 1e-4).unwrap();
            let sum: f64 = fit.model.weights.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-9);
            assert!(fit.model.val_mse <= fit.ranking[0].1);
            // Recomputing the blend from the weights reproduces the reported MSE.
            let preds: Vec<&[f64]> = fit
                .model
                .member_ids
                .iter()
                .map(|id| entries.iter().find(|e| &e.id == id).unwrap().val_predictions.as_slice())
                .collect();
            let blend = fit.model.predict(&preds).unwrap();
            assert!((mse(&blend, &y) - fit.model.val_mse).abs() < 1e-9);
        }
    }

    #[test]
    fn joint_grid_agrees_with_cascade_on_two_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let y: Vec<f64> = (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a: Vec<f64> = y.iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect();
        let b: Vec<f64> = y.iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect();
        let (w, m) = joint_grid_search(&[&a[..], &b[..]], &y, 0.05).unwrap();
        let (g, mg) = search_mixing_weight(&a, &b, &y, 0.05).unwrap();
        assert!((w[1] - g).abs() < 1e-12);
        assert!((m - mg).abs() < 1e-12);
        assert!(joint_grid_search(&[&a[..], &b[..]], &y, 0.01).is_err());
    }

    #[test]
    fn description_round_trip() {
        let m = EnsembleModel::new(vec!["CDR^FCNN".into(), "ChemR^GB".into()], vec![0.75, 0.25], 12.5).unwrap();
        let text = m.to_description();
        assert_eq!(text, "CDR^FCNN 0.75\nChemR^GB 0.25\n# validation_mse 12.5\n");
        assert_eq!(EnsembleModel::<f64>::parse_description(&text).unwrap(), m);
    }

    #[test]
    fn prediction_csv_round_trip() {
        let v = vec![0.1, -2.5, 1e-300];
        let text = prediction_csv(&v, "prediction");
        assert_eq!(parse_prediction_csv::<f64>(&text, "prediction").unwrap(), v);
        assert!(parse_prediction_csv::<f64>("row_id,prediction\n0,1\n2,3\n", "prediction").is_err());
    }
}
