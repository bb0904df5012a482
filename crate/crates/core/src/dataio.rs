//! Representation tables, synergy triples, tanh normalization and mirrored
//! pair assembly.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Default scale inside the tanh transform.
pub const DEFAULT_TANH_SCALE: f64 = 0.01;

/// Entity id to fixed-length feature vector.
#[derive(Debug, Clone)]
pub struct RepresentationTable<F> {
    name: String,
    ids: Vec<String>,
    vectors: Matrix<F>,
    index: HashMap<String, usize>,
}

impl<F: Scalar> RepresentationTable<F> {
    pub fn new(name: impl Into<String>, ids: Vec<String>, vectors: Matrix<F>) -> Result<Self> {
        if ids.len() != vectors.rows() {
            return Err(Error::Shape(format!(
                "{} ids but {} vectors",
                ids.len(),
                vectors.rows()
            )));
        }
        if !vectors.all_finite() {
            return Err(Error::Numeric("representation contains non-finite values".into()));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateKey(id.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            ids,
            vectors,
            index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &Matrix<F> {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Vector for `id`, or a missing-key error naming this table.
    pub fn vector(&self, id: &str) -> Result<&[F]> {
        self.position(id)
            .map(|i| self.vectors.row(i))
            .ok_or_else(|| Error::MissingKey {
                id: id.to_string(),
                table: self.name.clone(),
            })
    }

    /// Writes `id,f1,...,fD` CSV with round-trip float formatting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = String::from("id");
        for j in 1..=self.dim() {
            let _ = write!(header, ",f{j}");
        }
        writeln!(w, "{header}")?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut line = id.clone();
            for v in self.vectors.row(i) {
                let _ = write!(line, ",{v}");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn split_line(line: &str, lineno: usize) -> Result<Vec<&str>> {
    if line.contains('"') {
        return Err(Error::Format {
            line: lineno,
            msg: "quoted fields are not supported".into(),
        });
    }
    Ok(line.split(',').map(str::trim).collect())
}

/// Non-blank lines with 1-based line numbers, CR stripped.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_scalar<F: Scalar>(cell: &str, lineno: usize, what: &str) -> Result<F> {
    let v: F = cell.parse().map_err(|_| Error::Parse {
        line: lineno,
        msg: format!("{what} `{cell}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("{what} `{cell}` is not finite"),
        });
    }
    Ok(v)
}

pub fn load_representation_table<F: Scalar>(path: impl AsRef<Path>, name: &str) -> Result<RepresentationTable<F>> {
    parse_representation_table(&read_text(path.as_ref())?, name)
}

/// Parses `id,f1,...,fD` CSV text. Row order follows the file.
pub fn parse_representation_table<F: Scalar>(text: &str, name: &str) -> Result<RepresentationTable<F>> {
    let mut lines = data_lines(text);
    let (hline, header) = lines.next().ok_or(Error::Format {
        line: 1,
        msg: "missing header".into(),
    })?;
    let header = split_line(header, hline)?;
    if header[0] != "id" || header.len() < 2 {
        return Err(Error::Format {
            line: hline,
            msg: "header must be `id,f1,...,fD` with at least one feature".into(),
        });
    }
    let dim = header.len() - 1;
    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in lines {
        let cells = split_line(line, lineno)?;
        if cells.len() != dim + 1 {
            return Err(Error::Format {
                line: lineno,
                msg: format!("expected {} columns, found {}", dim + 1, cells.len()),
            });
        }
        let id = cells[0];
        if id.is_empty() {
            return Err(Error::Format {
                line: lineno,
                msg: "empty id".into(),
            });
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateKey(id.to_string()));
        }
        for cell in &cells[1..] {
            data.push(parse_scalar::<F>(cell, lineno, "feature")?);
        }
        ids.push(id.to_string());
    }
    let vectors = Matrix::new(ids.len(), dim, data)?;
    RepresentationTable::new(name, ids, vectors)
}

/// One drug pair measured on one cell line.
#[derive(Debug, Clone, PartialEq)]
pub struct SynergyInstance<F> {
    pub drug_a: String,
    pub drug_b: String,
    pub cell_line: String,
    pub score: F,
}

impl<F: Scalar> SynergyInstance<F> {
    pub fn pair_id(&self) -> String {
        pair_id(&self.drug_a, &self.drug_b)
    }
}

/// Order-independent key of a drug pair: sorted ids joined by `|`.
pub fn pair_id(a: &str, b: &str) -> String {
    if a <= b {
        format!("{a}|{b}")
    } else {
        format!("{b}|{a}")
    }
}

pub fn load_synergy_triples<F: Scalar>(path: impl AsRef<Path>) -> Result<Vec<SynergyInstance<F>>> {
    parse_synergy_triples(&read_text(path.as_ref())?)
}

pub fn parse_synergy_triples<F: Scalar>(text: &str) -> Result<Vec<SynergyInstance<F>>> {
    let mut lines = data_lines(text);
    let (hline, header) = lines.next().ok_or(Error::Format {
        line: 1,
        msg: "missing header".into(),
    })?;
    if split_line(header, hline)? != ["drug_a", "drug_b", "cell_line", "score"] {
        return Err(Error::Format {
            line: hline,
            msg: "header must be `drug_a,drug_b,cell_line,score`".into(),
        });
    }
    let mut out = Vec::new();
    for (lineno, line) in lines {
        let cells = split_line(line, lineno)?;
        if cells.len() != 4 {
            return Err(Error::Format {
                line: lineno,
                msg: format!("expected 4 columns, found {}", cells.len()),
            });
        }
        if cells[..3].iter().any(|c| c.is_empty()) {
            return Err(Error::Format {
                line: lineno,
                msg: "empty id".into(),
            });
        }
        if cells[0] == cells[1] {
            return Err(Error::InvalidInstance {
                line: lineno,
                msg: format!("drug_a and drug_b are both `{}`", cells[0]),
            });
        }
        out.push(SynergyInstance {
            drug_a: cells[0].to_string(),
            drug_b: cells[1].to_string(),
            cell_line: cells[2].to_string(),
            score: parse_scalar(cells[3], lineno, "score")?,
        });
    }
    Ok(out)
}

/// Per-feature `0.5 * (tanh(scale * (x - mean) / std) + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct TanhNormalizer<F> {
    pub means: Vec<F>,
    pub stds: Vec<F>,
    pub scale: F,
}

impl<F: Scalar> TanhNormalizer<F> {
    /// Statistics come from the `training_ids` rows only (population std).
    pub fn fit<S: AsRef<str>>(table: &RepresentationTable<F>, training_ids: &[S], scale: F) -> Result<Self> {
        if training_ids.is_empty() {
            return Err(Error::Argument("normalizer needs at least one training id".into()));
        }
        let mut rows = Vec::with_capacity(training_ids.len());
        let mut seen = HashSet::new();
        for id in training_ids {
            let id = id.as_ref();
            if !seen.insert(id) {
                continue;
            }
            rows.push(table.position(id).ok_or_else(|| Error::MissingKey {
                id: id.to_string(),
                table: table.name().to_string(),
            })?);
        }
        let dim = table.dim();
        let n = F::of_usize(rows.len());
        let mut means = vec![F::zero(); dim];
        for &r in &rows {
            for (m, &x) in means.iter_mut().zip(table.vectors().row(r)) {
                *m += x;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut stds = vec![F::zero(); dim];
        for &r in &rows {
            for ((s, &x), &m) in stds.iter_mut().zip(table.vectors().row(r)).zip(&means) {
                *s += (x - m) * (x - m);
            }
        }
        stds.iter_mut().for_each(|s| *s = (*s / n).sqrt());
        Ok(Self { means, stds, scale })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    #[inline]
    pub fn transform(&self, feature: usize, x: F) -> F {
        let half = F::of(0.5);
        let std = self.stds[feature];
        if std <= F::zero() {
            return half;
        }
        half * ((self.scale * (x - self.means[feature]) / std).tanh() + F::one())
    }

    pub fn apply(&self, table: &RepresentationTable<F>) -> Result<RepresentationTable<F>> {
        if table.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "normalizer fitted on {} features, table `{}` has {}",
                self.dim(),
                table.name(),
                table.dim()
            )));
        }
        let mut out = table.vectors().clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = self.transform(j, *v);
            }
        }
        RepresentationTable::new(table.name(), table.ids().to_vec(), out)
    }
}

/// Provenance of one assembled row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowMeta {
    pub pair_id: String,
    pub cell_line: String,
    pub mirrored: bool,
}

/// Mirrored feature matrix: rows `0..N` are `[A | B | cell]`, rows `N..2N`
/// are `[B | A | cell]` for the same instances.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledDataset<F> {
    pub features: Matrix<F>,
    pub targets: Vec<F>,
    pub row_meta: Vec<RowMeta>,
}

impl<F: Scalar> AssembledDataset<F> {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Number of underlying (unmirrored) instances.
    pub fn instance_count(&self) -> usize {
        self.targets.len() / 2
    }

    /// `pair_id,mirrored,cell_line,target,x1..xW`
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = String::from("pair_id,mirrored,cell_line,target");
        for j in 1..=self.features.cols() {
            let _ = write!(header, ",x{j}");
        }
        writeln!(w, "{header}")?;
        for (i, meta) in self.row_meta.iter().enumerate() {
            let mut line = format!(
                "{},{},{},{}",
                meta.pair_id,
                u8::from(meta.mirrored),
                meta.cell_line,
                self.targets[i]
            );
            for v in self.features.row(i) {
                let _ = write!(line, ",{v}");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = data_lines(text);
        let (hline, header) = lines.next().ok_or(Error::Format {
            line: 1,
            msg: "missing header".into(),
        })?;
        let header = split_line(header, hline)?;
        if header.len() < 4 || header[..4] != ["pair_id", "mirrored", "cell_line", "target"] {
            return Err(Error::Format {
                line: hline,
                msg: "header must start with `pair_id,mirrored,cell_line,target`".into(),
            });
        }
        let width = header.len() - 4;
        let mut features = Matrix::empty(width);
        let mut targets = Vec::new();
        let mut row_meta = Vec::new();
        let mut row = Vec::with_capacity(width);
        for (lineno, line) in lines {
            let cells = split_line(line, lineno)?;
            if cells.len() != width + 4 {
                return Err(Error::Format {
                    line: lineno,
                    msg: format!("expected {} columns, found {}", width + 4, cells.len()),
                });
            }
            let mirrored = match cells[1] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("mirrored flag `{other}` is not 0 or 1"),
                    })
                }
            };
            row.clear();
            for c in &cells[4..] {
                row.push(parse_scalar(c, lineno, "feature")?);
            }
            features.push_row(&row)?;
            targets.push(parse_scalar(cells[3], lineno, "target")?);
            row_meta.push(RowMeta {
                pair_id: cells[0].to_string(),
                cell_line: cells[2].to_string(),
                mirrored,
            });
        }
        Ok(Self {
            features,
            targets,
            row_meta,
        })
    }
}

/// Builds the mirrored design matrix for `instances`.
pub fn assemble_pairs<F: Scalar>(
    instances: &[SynergyInstance<F>],
    drug_table: &RepresentationTable<F>,
    cell_table: &RepresentationTable<F>,
) -> Result<AssembledDataset<F>> {
    let dd = drug_table.dim();
    let cd = cell_table.dim();
    let width = 2 * dd + cd;
    let n = instances.len();
    let mut features = Matrix::zeros(2 * n, width);
    let mut targets = Vec::with_capacity(2 * n);
    let mut row_meta = Vec::with_capacity(2 * n);
    for (i, inst) in instances.iter().enumerate() {
        let a = drug_table.vector(&inst.drug_a)?;
        let b = drug_table.vector(&inst.drug_b)?;
        let c = cell_table.vector(&inst.cell_line)?;
        {
            let row = features.row_mut(i);
            row[..dd].copy_from_slice(a);
            row[dd..2 * dd].copy_from_slice(b);
            row[2 * dd..].copy_from_slice(c);
        }
        let row = features.row_mut(n + i);
        row[..dd].copy_from_slice(b);
        row[dd..2 * dd].copy_from_slice(a);
        row[2 * dd..].copy_from_slice(c);
    }
    for mirrored in [false, true] {
        for inst in instances {
            targets.push(inst.score);
            row_meta.push(RowMeta {
                pair_id: inst.pair_id(),
                cell_line: inst.cell_line.clone(),
                mirrored,
            });
        }
    }
    Ok(AssembledDataset {
        features,
        targets,
        row_meta,
    })
}
