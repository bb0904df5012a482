//! Seeded synthetic drug screens for demos and tests.
//!
//! Every unordered pair of drugs is measured on every cell line. Scores are
//! symmetric in the two drugs: an additive single-drug effect plus a
//! cell-dependent interaction term plus Gaussian noise.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataio::{RepresentationTable, SynergyInstance};
use crate::ensemble::BaseLearnerEntry;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::molgraph::StructureRecord;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub drugs: usize,
    pub cells: usize,
    pub drug_dim: usize,
    pub cell_dim: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            drugs: 12,
            cells: 3,
            drug_dim: 8,
            cell_dim: 4,
            noise: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScreen<F> {
    pub drugs: RepresentationTable<F>,
    pub cells: RepresentationTable<F>,
    pub instances: Vec<SynergyInstance<F>>,
    pub structures: Vec<StructureRecord>,
}

const ORGANIC: [&str; 6] = ["C", "C", "C", "N", "O", "S"];

/// A random connected molecule in the supported SMILES subset: a backbone
/// with optional side branches, double bonds and one ring closure.
pub fn random_smiles(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(3..=8);
    let ring = (n >= 4 && rng.gen_bool(0.5)).then(|| {
        let open = rng.gen_range(0..n - 2);
        (open, rng.gen_range(open + 2..n))
    });
    let mut s = String::new();
    for i in 0..n {
        if i > 0 && rng.gen_bool(0.15) {
            s.push('=');
        }
        s.push_str(ORGANIC[rng.gen_range(0..ORGANIC.len())]);
        if let Some((open, close)) = ring {
            if i == open || i == close {
                s.push('1');
            }
        }
        if i + 1 < n && rng.gen_bool(0.25) {
            s.push('(');
            s.push_str(["C", "O", "N", "F", "Cl"][rng.gen_range(0..5)]);
            s.push(')');
        }
    }
    s
}

fn table<F: Scalar>(
    prefix: &str,
    name: &str,
    n: usize,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RepresentationTable<F>> {
    let ids = (0..n).map(|i| format!("{prefix}{i:02}")).collect();
    let data = (0..n * dim).map(|_| F::of(rng.gen_range(-1.0..1.0))).collect();
    RepresentationTable::new(name, ids, Matrix::new(n, dim, data)?)
}

pub fn generate<F: Scalar>(cfg: &SyntheticConfig) -> Result<SyntheticScreen<F>> {
    if cfg.drugs < 2 || cfg.cells < 1 || cfg.drug_dim < 1 || cfg.cell_dim < 1 {
        return Err(Error::Argument(
            "synthetic screen needs >= 2 drugs, >= 1 cell line and positive dims".into(),
        ));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(Error::Argument("noise must be finite and non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let drugs: RepresentationTable<F> = table("drug", "drugs", cfg.drugs, cfg.drug_dim, &mut rng)?;
    let cells: RepresentationTable<F> = table("cell", "cells", cfg.cells, cfg.cell_dim, &mut rng)?;
    let structures = drugs
        .ids()
        .iter()
        .map(|id| StructureRecord {
            id: id.clone(),
            smiles: random_smiles(&mut rng),
        })
        .collect();
    let noise = Normal::new(0.0, cfg.noise).expect("validated");

    let v =
        |t: &RepresentationTable<F>, i: usize| -> Vec<f64> { t.vectors().row(i).iter().map(|x| x.as_f64()).collect() };
    let single = |u: &[f64]| {
        6.0 * u
            .iter()
            .enumerate()
            .map(|(j, x)| x * (1.0 + j as f64 / 4.0))
            .sum::<f64>()
            / u.len() as f64
    };
    let mut instances = Vec::new();
    for a in 0..cfg.drugs {
        for b in a + 1..cfg.drugs {
            let (ua, ub) = (v(&drugs, a), v(&drugs, b));
            let dot: f64 = ua.iter().zip(&ub).map(|(x, y)| x * y).sum::<f64>() / cfg.drug_dim as f64;
            for c in 0..cfg.cells {
                let uc = v(&cells, c);
                let score = single(&ua)
                    + single(&ub)
                    + 20.0 * dot * (1.0 + uc[0])
                    + 3.0 * uc[uc.len() - 1]
                    + noise.sample(&mut rng);
                instances.push(SynergyInstance {
                    drug_a: drugs.ids()[a].clone(),
                    drug_b: drugs.ids()[b].clone(),
                    cell_line: cells.ids()[c].clone(),
                    score: F::of(score),
                });
            }
        }
    }
    Ok(SyntheticScreen {
        drugs,
        cells,
        instances,
        structures,
    })
}

impl<F: Scalar> SyntheticScreen<F> {
    /// Writes `drugs.csv`, `cells.csv`, `synergy.csv` and `structures.csv`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (file, t) in [("drugs.csv", &self.drugs), ("cells.csv", &self.cells)] {
            let mut buf = Vec::new();
            t.write_csv(&mut buf).expect("in-memory write");
            let p = dir.join(file);
            fs::write(&p, buf).map_err(|e| Error::io(&p, e))?;
        }
        let mut syn = String::from("drug_a,drug_b,cell_line,score\n");
        for i in &self.instances {
            syn.push_str(&format!("{},{},{},{}\n", i.drug_a, i.drug_b, i.cell_line, i.score));
        }
        let mut st = String::from("id,smiles\n");
        for r in &self.structures {
            st.push_str(&format!("{},{}\n", r.id, r.smiles));
        }
        for (file, text) in [("synergy.csv", syn), ("structures.csv", st)] {
            let p = dir.join(file);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Validation predictions `y + N(0, sigma)` for each noise level, named
/// `planted0`, `planted1`, ...
pub fn planted_learners<F: Scalar>(y: &[F], sigmas: &[f64], rng: &mut impl Rng) -> Vec<BaseLearnerEntry<F>> {
    sigmas
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let normal = Normal::new(0.0, s).expect("finite sigma");
            BaseLearnerEntry::new(
                format!("planted{i}"),
                y.iter().map(|&t| t + F::of(normal.sample(rng))).collect(),
            )
        })
        .collect()
}
