//! Run configuration: flat `key = value` lines grouped under `[data]`,
//! `[model]`, `[cv]` and `[ensemble]`.
//!
//! `#` starts a comment. Keys that a section does not define are errors, as
//! are keys that the chosen model kind does not use. Relative paths resolve
//! against the directory holding the config file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use synergy_core::learners::{
    ElasticNetConfig, FcnnConfig, ForestConfig, GbmConfig, GnnConfig, TabularLearner, TreeConfig,
};
use synergy_core::Scalar;

use crate::CliError;

/// A config value with the line it came from.
#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    ElasticNet,
    Tree,
    Forest,
    Gbm,
    Fcnn,
    Gnn,
}

impl ModelKind {
    pub const ALL: [Self; 6] = [
        Self::ElasticNet,
        Self::Tree,
        Self::Forest,
        Self::Gbm,
        Self::Fcnn,
        Self::Gnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::ElasticNet => "elastic_net",
            Self::Tree => "tree",
            Self::Forest => "forest",
            Self::Gbm => "gbm",
            Self::Fcnn => "fcnn",
            Self::Gnn => "gnn",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "elastic_net" => Self::ElasticNet,
            "tree" => Self::Tree,
            "forest" => Self::Forest,
            "gbm" => Self::Gbm,
            "fcnn" => Self::Fcnn,
            "gnn" => Self::Gnn,
            _ => return None,
        })
    }

    /// Hyperparameter keys of this kind, besides `kind`, `seed` and `scalar`.
    fn keys(self) -> &'static [&'static str] {
        match self {
            Self::ElasticNet => &["strength", "mixing", "tol", "max_sweeps"],
            Self::Tree => &["max_depth", "min_samples_leaf"],
            Self::Forest => &[
                "n_estimators",
                "max_depth",
                "min_samples_leaf",
                "feature_fraction",
                "bootstrap",
            ],
            Self::Gbm => &["n_estimators", "learning_rate", "max_depth", "min_samples_leaf"],
            Self::Fcnn => &["hidden", "learning_rate", "dropout", "epochs", "batch_size"],
            Self::Gnn => &[
                "hidden",
                "learning_rate",
                "dropout",
                "epochs",
                "batch_size",
                "embed_dim",
                "radius",
                "layers",
                "bond_orders",
            ],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarKind {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub synergy: Option<PathBuf>,
    pub drugs: Option<PathBuf>,
    pub cells: Option<PathBuf>,
    pub structures: Option<PathBuf>,
    /// Label of the drug representation, used in member ids such as `CDR^FCNN`.
    pub representation: String,
    pub normalize_drugs: bool,
    pub normalize_cells: bool,
    pub tanh_scale: f64,
}

/// Hyperparameters as written; unset keys take the learner defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub scalar: ScalarKind,
    pub seed: u64,
    pub strength: Option<f64>,
    pub mixing: Option<f64>,
    pub tol: Option<f64>,
    pub max_sweeps: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: Option<usize>,
    pub n_estimators: Option<usize>,
    pub feature_fraction: Option<f64>,
    pub bootstrap: Option<bool>,
    pub learning_rate: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub dropout: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub embed_dim: Option<usize>,
    pub radius: Option<usize>,
    pub layers: Option<usize>,
    pub bond_orders: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    /// Output directory of an earlier `cv` run to test against.
    pub baseline: Option<PathBuf>,
    /// Pair per-instance absolute errors in the Wilcoxon comparison instead
    /// of per-fold MSE values.
    pub instance_pairing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub targets: Option<PathBuf>,
    /// `(member id, prediction file)` in config order.
    pub members: Vec<(String, PathBuf)>,
    pub step: f64,
    pub rel_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: PathBuf,
    pub data: DataConfig,
    pub model: Option<ModelConfig>,
    pub cv: CvConfig,
    pub ensemble: EnsembleConfig,
    /// Every key as written, for the run manifest.
    pub echo: Vec<String>,
}

const SECTIONS: [&str; 4] = ["data", "model", "cv", "ensemble"];
const DATA_KEYS: [&str; 8] = [
    "synergy",
    "drugs",
    "cells",
    "structures",
    "representation",
    "normalize_drugs",
    "normalize_cells",
    "tanh_scale",
];
const CV_KEYS: [&str; 4] = ["folds", "seed", "baseline", "instance_pairing"];
const ENSEMBLE_KEYS: [&str; 4] = ["targets", "member", "step", "rel_tol"];

struct Sections {
    file: String,
    map: BTreeMap<String, BTreeMap<String, Vec<Entry>>>,
}

impl Sections {
    fn err(&self, line: usize, msg: impl fmt::Display) -> CliError {
        CliError::Validation(format!("{}:{line}: {msg}", self.file))
    }

    fn single(&self, section: &str, key: &str) -> Result<Option<&Entry>, CliError> {
        match self.map.get(section).and_then(|s| s.get(key)) {
            None => Ok(None),
            Some(v) if v.len() == 1 => Ok(Some(&v[0])),
            Some(v) => Err(self.err(v[1].line, format!("duplicate key `{key}` in [{section}]"))),
        }
    }

    fn parsed<T: std::str::FromStr>(
        &self,
        section: &str,
        key: &str,
        what: &str,
    ) -> Result<Option<(T, usize)>, CliError> {
        let Some(e) = self.single(section, key)? else {
            return Ok(None);
        };
        e.value
            .parse()
            .map(|v| Some((v, e.line)))
            .map_err(|_| self.err(e.line, format!("`{key}` must be {what}, got `{}`", e.value)))
    }

    fn uint(&self, section: &str, key: &str, min: usize) -> Result<Option<usize>, CliError> {
        match self.parsed::<usize>(section, key, "a non-negative integer")? {
            Some((v, line)) if v < min => Err(self.err(line, format!("`{key}` must be >= {min}, got {v}"))),
            other => Ok(other.map(|p| p.0)),
        }
    }

    /// A finite real checked against `ok`, whose failure text is `domain`.
    fn real(&self, section: &str, key: &str, ok: impl Fn(f64) -> bool, domain: &str) -> Result<Option<f64>, CliError> {
        match self.parsed::<f64>(section, key, "a number")? {
            Some((v, line)) if !(v.is_finite() && ok(v)) => {
                Err(self.err(line, format!("`{key}` must lie in {domain}, got {v}")))
            }
            other => Ok(other.map(|p| p.0)),
        }
    }

    fn flag(&self, section: &str, key: &str) -> Result<Option<bool>, CliError> {
        Ok(self.parsed::<bool>(section, key, "`true` or `false`")?.map(|p| p.0))
    }

    fn path(&self, section: &str, key: &str, base: &Path) -> Result<Option<PathBuf>, CliError> {
        Ok(self.single(section, key)?.map(|e| base.join(&e.value)))
    }
}

fn parse_sections(text: &str, file: &str) -> Result<(Sections, Vec<String>), CliError> {
    let mut s = Sections {
        file: file.to_string(),
        map: BTreeMap::new(),
    };
    let mut echo = Vec::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| s.err(line, "section header must look like `[name]`"))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(s.err(line, format!("unknown section `[{name}]`")));
            }
            if s.map.contains_key(name) {
                return Err(s.err(line, format!("section `[{name}]` appears twice")));
            }
            s.map.insert(name.to_string(), BTreeMap::new());
            current = Some(name.to_string());
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| s.err(line, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        let Some(section) = current.clone() else {
            return Err(s.err(line, format!("key `{key}` appears before any section")));
        };
        if key.is_empty() || value.is_empty() {
            return Err(s.err(line, "expected `key = value`"));
        }
        let allowed: &[&str] = match section.as_str() {
            "data" => &DATA_KEYS,
            "cv" => &CV_KEYS,
            "ensemble" => &ENSEMBLE_KEYS,
            _ => &[],
        };
        if section != "model" && !allowed.contains(&key) {
            return Err(s.err(line, format!("unknown key `{key}` in [{section}]")));
        }
        echo.push(format!("[{section}] {key} = {value}"));
        s.map
            .get_mut(&section)
            .expect("inserted at header")
            .entry(key.to_string())
            .or_default()
            .push(Entry {
                value: value.to_string(),
                line,
            });
    }
    Ok((s, echo))
}

fn parse_model(s: &Sections) -> Result<Option<ModelConfig>, CliError> {
    let Some(section) = s.map.get("model") else {
        return Ok(None);
    };
    let kind_entry = s.single("model", "kind")?.ok_or_else(|| {
        s.err(
            section.values().flatten().map(|e| e.line).min().unwrap_or(1),
            "[model] needs `kind`",
        )
    })?;
    let kind = ModelKind::parse(&kind_entry.value).ok_or_else(|| {
        s.err(
            kind_entry.line,
            format!(
                "unknown model kind `{}` (expected elastic_net, tree, forest, gbm, fcnn or gnn)",
                kind_entry.value
            ),
        )
    })?;
    for (key, entries) in section {
        if !["kind", "seed", "scalar"].contains(&key.as_str()) && !kind.keys().contains(&key.as_str()) {
            let known = ModelKind::ALL.iter().any(|k| k.keys().contains(&key.as_str()));
            let msg = if known {
                format!("key `{key}` does not apply to model kind `{kind}`")
            } else {
                format!("unknown key `{key}` in [model]")
            };
            return Err(s.err(entries[0].line, msg));
        }
    }
    let scalar = match s.single("model", "scalar")? {
        None => ScalarKind::F64,
        Some(e) if e.value == "f64" => ScalarKind::F64,
        Some(e) if e.value == "f32" => ScalarKind::F32,
        Some(e) => return Err(s.err(e.line, format!("`scalar` must be f32 or f64, got `{}`", e.value))),
    };
    let hidden = match s.single("model", "hidden")? {
        None => None,
        Some(e) => {
            let widths: Option<Vec<usize>> = e.value.split(',').map(|w| w.trim().parse().ok()).collect();
            match widths {
                Some(w) if !w.is_empty() && !w.contains(&0) => Some(w),
                _ => {
                    return Err(s.err(
                        e.line,
                        format!("`hidden` must be comma-separated positive widths, got `{}`", e.value),
                    ))
                }
            }
        }
    };
    let lr_domain = if kind == ModelKind::Gbm { "(0, 1]" } else { "(0, inf)" };
    Ok(Some(ModelConfig {
        kind,
        scalar,
        seed: s
            .parsed::<u64>("model", "seed", "an unsigned 64-bit integer")?
            .map_or(0, |p| p.0),
        strength: s.real("model", "strength", |v| v >= 0.0, "[0, inf)")?,
        mixing: s.real("model", "mixing", |v| (0.0..=1.0).contains(&v), "[0, 1]")?,
        tol: s.real("model", "tol", |v| v > 0.0, "(0, inf)")?,
        max_sweeps: s.uint("model", "max_sweeps", 1)?,
        max_depth: s.uint("model", "max_depth", 1)?,
        min_samples_leaf: s.uint("model", "min_samples_leaf", 1)?,
        n_estimators: s.uint("model", "n_estimators", if kind == ModelKind::Gbm { 0 } else { 1 })?,
        feature_fraction: s.real("model", "feature_fraction", |v| v > 0.0 && v <= 1.0, "(0, 1]")?,
        bootstrap: s.flag("model", "bootstrap")?,
        learning_rate: s.real(
            "model",
            "learning_rate",
            |v| v > 0.0 && (kind != ModelKind::Gbm || v <= 1.0),
            lr_domain,
        )?,
        hidden,
        dropout: s.real("model", "dropout", |v| (0.0..1.0).contains(&v), "[0, 1)")?,
        epochs: s.uint("model", "epochs", 1)?,
        batch_size: s.uint("model", "batch_size", 1)?,
        embed_dim: s.uint("model", "embed_dim", 1)?,
        radius: s.uint("model", "radius", 0)?,
        layers: s.uint("model", "layers", 1)?,
        bond_orders: s.flag("model", "bond_orders")?,
    }))
}

impl RunConfig {
    /// Parses and checks value domains. Paths are not touched.
    pub fn parse(text: &str, source: &Path) -> Result<Self, CliError> {
        let file = source.display().to_string();
        let base = source.parent().map(Path::to_path_buf).unwrap_or_default();
        let (s, echo) = parse_sections(text, &file)?;

        let data = DataConfig {
            synergy: s.path("data", "synergy", &base)?,
            drugs: s.path("data", "drugs", &base)?,
            cells: s.path("data", "cells", &base)?,
            structures: s.path("data", "structures", &base)?,
            representation: s
                .single("data", "representation")?
                .map_or_else(|| "drugs".to_string(), |e| e.value.clone()),
            normalize_drugs: s.flag("data", "normalize_drugs")?.unwrap_or(true),
            normalize_cells: s.flag("data", "normalize_cells")?.unwrap_or(false),
            tanh_scale: s
                .real("data", "tanh_scale", |v| v > 0.0, "(0, inf)")?
                .unwrap_or(synergy_core::dataio::DEFAULT_TANH_SCALE),
        };
        let cv = CvConfig {
            folds: s.uint("cv", "folds", 2)?.unwrap_or(5),
            seed: s
                .parsed::<u64>("cv", "seed", "an unsigned 64-bit integer")?
                .map_or(0, |p| p.0),
            baseline: s.path("cv", "baseline", &base)?,
            instance_pairing: s.flag("cv", "instance_pairing")?.unwrap_or(false),
        };
        let mut members = Vec::new();
        for e in s
            .map
            .get("ensemble")
            .and_then(|m| m.get("member"))
            .into_iter()
            .flatten()
        {
            let mut parts = e.value.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(id), Some(path), None) => {
                    if members.iter().any(|(m, _): &(String, PathBuf)| m == id) {
                        return Err(s.err(e.line, format!("member `{id}` listed twice")));
                    }
                    members.push((id.to_string(), base.join(path)));
                }
                _ => return Err(s.err(e.line, "`member` must be `<id> <prediction file>`")),
            }
        }
        let step = s.real("ensemble", "step", |v| v > 0.0 && v <= 1.0, "(0, 1]")?;
        if let (Some(v), Some(e)) = (step, s.single("ensemble", "step")?) {
            let k = (1.0 / v).round();
            if (k * v - 1.0).abs() > 1e-9 {
                return Err(s.err(e.line, format!("`step` must divide 1 evenly, got {v}")));
            }
        }
        let ensemble = EnsembleConfig {
            targets: s.path("ensemble", "targets", &base)?,
            members,
            step: step.unwrap_or(synergy_core::ensemble::DEFAULT_STEP),
            rel_tol: s
                .real("ensemble", "rel_tol", |v| v >= 0.0, "[0, inf)")?
                .unwrap_or(synergy_core::ensemble::DEFAULT_REL_TOL),
        };
        Ok(Self {
            source: source.to_path_buf(),
            data,
            model: parse_model(&s)?,
            cv,
            ensemble,
            echo,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    /// Every configured input path must exist.
    pub fn check_paths(&self) -> Result<(), CliError> {
        let d = &self.data;
        let paths = [&d.synergy, &d.drugs, &d.cells, &d.structures, &self.ensemble.targets]
            .into_iter()
            .flatten()
            .chain(self.ensemble.members.iter().map(|m| &m.1));
        for p in paths {
            if !p.is_file() {
                return Err(CliError::Validation(format!(
                    "{}: input file {} does not exist",
                    self.source.display(),
                    p.display()
                )));
            }
        }
        if let Some(dir) = &self.cv.baseline {
            if !dir.join("report.csv").is_file() {
                return Err(CliError::Validation(format!(
                    "{}: baseline {} holds no report.csv",
                    self.source.display(),
                    dir.display()
                )));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<&ModelConfig, CliError> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Validation(format!("{}: missing [model] section", self.source.display())))
    }

    /// The path stored under `[section] key`, or a validation error.
    pub fn require<'a>(&self, path: &'a Option<PathBuf>, section: &str, key: &str) -> Result<&'a Path, CliError> {
        path.as_deref()
            .ok_or_else(|| CliError::Validation(format!("{}: [{section}] needs `{key}`", self.source.display())))
    }
}

impl ModelConfig {
    fn tree(&self) -> TreeConfig {
        let d = TreeConfig::default();
        TreeConfig {
            max_depth: self.max_depth.unwrap_or(d.max_depth),
            min_samples_leaf: self.min_samples_leaf.unwrap_or(d.min_samples_leaf),
        }
    }

    fn fcnn<F: Scalar>(&self, base: FcnnConfig<F>) -> FcnnConfig<F> {
        FcnnConfig {
            hidden: self.hidden.clone().unwrap_or(base.hidden),
            learning_rate: self.learning_rate.map_or(base.learning_rate, F::of),
            dropout: self.dropout.map_or(base.dropout, F::of),
            epochs: self.epochs.unwrap_or(base.epochs),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            seed: self.seed,
        }
    }

    /// The learner for every kind except `gnn`.
    pub fn tabular<F: Scalar>(&self) -> Option<TabularLearner<F>> {
        Some(match self.kind {
            ModelKind::ElasticNet => {
                let d = ElasticNetConfig::<F>::default();
                TabularLearner::ElasticNet(ElasticNetConfig {
                    strength: self.strength.map_or(d.strength, F::of),
                    mixing: self.mixing.map_or(d.mixing, F::of),
                    tol: self.tol.map_or(d.tol, F::of),
                    max_sweeps: self.max_sweeps.unwrap_or(d.max_sweeps),
                })
            }
            ModelKind::Tree => TabularLearner::Tree(self.tree()),
            ModelKind::Forest => {
                let d = ForestConfig::<F>::default();
                TabularLearner::Forest(ForestConfig {
                    n_estimators: self.n_estimators.unwrap_or(d.n_estimators),
                    tree: self.tree(),
                    feature_fraction: self.feature_fraction.map_or(d.feature_fraction, F::of),
                    bootstrap: self.bootstrap.unwrap_or(d.bootstrap),
                    seed: self.seed,
                })
            }
            ModelKind::Gbm => {
                let d = GbmConfig::<F>::default();
                TabularLearner::Gbm(GbmConfig {
                    n_estimators: self.n_estimators.unwrap_or(d.n_estimators),
                    learning_rate: self.learning_rate.map_or(d.learning_rate, F::of),
                    tree: self.tree(),
                })
            }
            ModelKind::Fcnn => TabularLearner::Fcnn(self.fcnn(FcnnConfig::default())),
            ModelKind::Gnn => return None,
        })
    }

    pub fn gnn<F: Scalar>(&self) -> Option<GnnConfig<F>> {
        if self.kind != ModelKind::Gnn {
            return None;
        }
        let d = GnnConfig::<F>::default();
        Some(GnnConfig {
            embed_dim: self.embed_dim.unwrap_or(d.embed_dim),
            radius: self.radius.unwrap_or(d.radius),
            layers: self.layers.unwrap_or(d.layers),
            head: self.fcnn(d.head),
            epochs: self.epochs.unwrap_or(d.epochs),
            seed: self.seed,
            bond_orders: self.bond_orders.unwrap_or(d.bond_orders),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        RunConfig::parse(text, Path::new("dir/run.conf"))
    }

    fn validation_msg(r: Result<RunConfig, CliError>) -> String {
        match r {
            Err(CliError::Validation(m)) => m,
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn full_config() {
        let c = parse(
            "# demo\n[data]\nsynergy = s.csv\ndrugs = d.csv # trailing\ncells = c.csv\nrepresentation = CDR\n\
             [model]\nkind = fcnn\nhidden = 30, 15\ndropout = 0.4\nepochs = 455\nseed = 7\n[cv]\nfolds = 5\n",
        )
        .unwrap();
        assert_eq!(c.data.synergy, Some(PathBuf::from("dir/s.csv")));
        assert_eq!(c.data.representation, "CDR");
        let m = c.model.as_ref().unwrap();
        let Some(TabularLearner::Fcnn(f)) = m.tabular::<f64>() else {
            panic!()
        };
        assert_eq!(f.hidden, vec![30, 15]);
        assert_eq!(f.dropout, 0.4);
        assert_eq!(f.epochs, 455);
        assert_eq!(f.seed, 7);
        assert_eq!(f.learning_rate, 1e-4);
        assert_eq!(c.echo[0], "[data] synergy = s.csv");
    }

    #[test]
    fn dropout_out_of_range_names_key_and_line() {
        let m = validation_msg(parse("[model]\nkind = fcnn\ndropout = 1.5\n"));
        assert!(m.contains("dir/run.conf:3"), "{m}");
        assert!(m.contains("`dropout`"), "{m}");
    }

    #[test]
    fn unknown_and_misplaced_keys() {
        assert!(validation_msg(parse("[data]\ncolour = red\n")).contains("unknown key `colour`"));
        assert!(validation_msg(parse("[model]\nkind = gbm\ncolour = red\n")).contains("unknown key `colour`"));
        assert!(validation_msg(parse("[model]\nkind = gbm\ndropout = 0.1\n")).contains("does not apply"));
        assert!(validation_msg(parse("[stuff]\n")).contains("unknown section"));
        assert!(validation_msg(parse("kind = gbm\n")).contains("before any section"));
        assert!(validation_msg(parse("[model]\nkind = gbm\nkind = tree\n")).contains("duplicate key"));
        assert!(validation_msg(parse("[model]\nkind = svm\n")).contains("unknown model kind"));
        assert!(validation_msg(parse("[ensemble]\nstep = 0.3\n")).contains("divide 1"));
        assert!(validation_msg(parse("[cv]\nfolds = 1\n")).contains("`folds` must be >= 2"));
        assert!(validation_msg(parse("[model]\nkind = fcnn\nhidden = 10,0\n")).contains("`hidden`"));
    }

    #[test]
    fn gnn_settings_map_onto_config() {
        let c = parse(
            "[model]\nkind = gnn\nembed_dim = 4\nradius = 1\nlayers = 2\nhidden = 8\nepochs = 3\nbond_orders = false\n",
        )
        .unwrap();
        let g = c.model.unwrap().gnn::<f32>().unwrap();
        assert_eq!((g.embed_dim, g.radius, g.layers, g.epochs), (4, 1, 2, 3));
        assert_eq!(g.head.hidden, vec![8]);
        assert!(!g.bond_orders);
    }

    #[test]
    fn ensemble_members() {
        let c = parse("[ensemble]\ntargets = t.csv\nmember = CDR^GB a.csv\nmember = ChemR^GB b.csv\n").unwrap();
        assert_eq!(c.ensemble.members.len(), 2);
        assert_eq!(
            c.ensemble.members[1],
            ("ChemR^GB".to_string(), PathBuf::from("dir/b.csv"))
        );
        assert!(validation_msg(parse("[ensemble]\nmember = x a.csv\nmember = x b.csv\n")).contains("twice"));
    }
}
