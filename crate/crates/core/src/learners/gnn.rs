//! Graph network over r-radius vertex types with a dense prediction head.
//!
//! Each vertex starts from a learned embedding of its r-radius type. Layer
//! `l` updates every vertex as `h_v <- relu(W_l (h_v + sum_{u in N(v)} h_u))`,
//! and a molecule is read out as the mean of its final vertex states. The
//! head is a dense network on `[emb(A) | emb(B) | cell]`. The readout vector
//! is the learned drug representation exported by [`GnnModel::extract`].

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fcnn::FcnnConfig;
use super::mlp::Mlp;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::molgraph::{assign_r_radius_types, lookup_r_radius_types, MolecularGraph, SubgraphDictionary};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct GnnConfig<F> {
    /// Length of vertex states and of the exported drug vector.
    pub embed_dim: usize,
    pub radius: usize,
    /// Number of message-passing layers.
    pub layers: usize,
    /// Head widths, learning rate, dropout, batch size. Its `epochs` and
    /// `seed` are not used; the fields below govern the joint training.
    pub head: FcnnConfig<F>,
    pub epochs: usize,
    pub seed: u64,
    /// Whether bond orders enter the vertex-type encoding.
    pub bond_orders: bool,
}

impl<F: Scalar> Default for GnnConfig<F> {
    fn default() -> Self {
        Self {
            embed_dim: 25,
            radius: 2,
            layers: 3,
            head: FcnnConfig {
                hidden: vec![3000, 1500],
                ..FcnnConfig::default()
            },
            epochs: 1000,
            seed: 0,
            bond_orders: true,
        }
    }
}

impl<F: Scalar> GnnConfig<F> {
    pub fn validate(&self) -> Result<()> {
        self.head.validate()?;
        if self.embed_dim == 0 || self.layers == 0 || self.epochs == 0 {
            return Err(Error::Argument("embed_dim, layers and epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Trainable weights; also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct GnnParams<F> {
    /// `vocab x d`, one row per vertex type plus the unknown row.
    pub embedding: Matrix<F>,
    /// `d x d` per message-passing layer.
    pub layers: Vec<Matrix<F>>,
    pub head: Mlp<F>,
}

impl<F: Scalar> GnnParams<F> {
    fn zeros_like(&self) -> Self {
        Self {
            embedding: Matrix::zeros(self.embedding.rows(), self.embedding.cols()),
            layers: self.layers.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            head: self.head.zeros_like(),
        }
    }

    fn fill_zero(&mut self) {
        self.embedding.as_mut_slice().iter_mut().for_each(|v| *v = F::zero());
        for w in &mut self.layers {
            w.as_mut_slice().iter_mut().for_each(|v| *v = F::zero());
        }
        self.head.fill_zero();
    }

    fn add_scaled(&mut self, other: &Self, scale: F) {
        let axpy = |a: &mut [F], b: &[F]| a.iter_mut().zip(b).for_each(|(x, &y)| *x += scale * y);
        axpy(self.embedding.as_mut_slice(), other.embedding.as_slice());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            axpy(a.as_mut_slice(), b.as_slice());
        }
        self.head.add_scaled(&other.head, scale);
    }

    fn all_finite(&self) -> bool {
        self.embedding.all_finite() && self.layers.iter().all(Matrix::all_finite) && self.head.all_finite()
    }

    pub fn param_count(&self) -> usize {
        self.embedding.as_slice().len()
            + self.layers.iter().map(|w| w.as_slice().len()).sum::<usize>()
            + self.head.param_count()
    }

    fn slot(&mut self, mut k: usize) -> &mut F {
        let ne = self.embedding.as_slice().len();
        if k < ne {
            return &mut self.embedding.as_mut_slice()[k];
        }
        k -= ne;
        for w in &mut self.layers {
            let nw = w.as_slice().len();
            if k < nw {
                return &mut w.as_mut_slice()[k];
            }
            k -= nw;
        }
        self.head.locate_mut(k)
    }

    /// Flat order: embedding table, layer matrices, head.
    pub fn param(&self, mut k: usize) -> F {
        let ne = self.embedding.as_slice().len();
        if k < ne {
            return self.embedding.as_slice()[k];
        }
        k -= ne;
        for w in &self.layers {
            let nw = w.as_slice().len();
            if k < nw {
                return w.as_slice()[k];
            }
            k -= nw;
        }
        self.head.param(k)
    }

    pub fn set_param(&mut self, k: usize, v: F) {
        *self.slot(k) = v;
    }
}

/// Rows of a graph-pair dataset: row `k` pairs `graphs[pairs[k].0]` with
/// `graphs[pairs[k].1]` on cell line `cells.row(k)`.
#[derive(Debug, Clone, Copy)]
pub struct GraphPairs<'a, F> {
    pub graphs: &'a [MolecularGraph],
    pub pairs: &'a [(usize, usize)],
    pub cells: &'a Matrix<F>,
}

impl<F: Scalar> GraphPairs<'_, F> {
    fn check(&self) -> Result<()> {
        if self.pairs.len() != self.cells.rows() {
            return Err(Error::Shape(format!(
                "{} graph pairs but {} cell rows",
                self.pairs.len(),
                self.cells.rows()
            )));
        }
        let n = self.graphs.len();
        if self.pairs.iter().any(|&(a, b)| a >= n || b >= n) {
            return Err(Error::Shape("pair references a missing graph".into()));
        }
        Ok(())
    }
}

struct TypedGraph {
    types: Vec<u32>,
    adj: Vec<Vec<usize>>,
}

impl TypedGraph {
    fn new(graph: &MolecularGraph, types: Vec<u32>) -> Self {
        let adj = graph
            .adjacency()
            .into_iter()
            .map(|nb| nb.into_iter().map(|(u, _)| u).collect())
            .collect();
        Self { types, adj }
    }
}

struct GraphTrace<F> {
    /// Aggregated input `h_v + sum h_u` of each layer.
    agg: Vec<Matrix<F>>,
    /// Pre-activation of each layer.
    pre: Vec<Matrix<F>>,
    readout: Vec<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct GnnModel<F> {
    pub config: GnnConfig<F>,
    pub dictionary: SubgraphDictionary,
    pub params: GnnParams<F>,
    pub cell_dim: usize,
}

impl<F: Scalar> GnnModel<F> {
    fn graph_forward(&self, g: &TypedGraph) -> GraphTrace<F> {
        graph_forward(&self.params, g)
    }

    fn typed(&self, graph: &MolecularGraph) -> TypedGraph {
        TypedGraph::new(graph, lookup_r_radius_types(graph, &self.dictionary))
    }

    /// Learned drug vector: the mean-pooled final vertex states.
    pub fn extract(&self, graph: &MolecularGraph) -> Vec<F> {
        self.graph_forward(&self.typed(graph)).readout
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    pub fn predict(&self, data: &GraphPairs<'_, F>) -> Result<Vec<F>> {
        data.check()?;
        if data.pairs.is_empty() {
            return Ok(Vec::new());
        }
        if data.cells.cols() != self.cell_dim {
            return Err(Error::Shape(format!(
                "model expects {} cell features, input has {}",
                self.cell_dim,
                data.cells.cols()
            )));
        }
        let mut cache: BTreeMap<usize, Vec<F>> = BTreeMap::new();
        let mut out = Vec::with_capacity(data.pairs.len());
        let mut input = Vec::new();
        for (k, &(a, b)) in data.pairs.iter().enumerate() {
            for g in [a, b] {
                cache.entry(g).or_insert_with(|| self.extract(&data.graphs[g]));
            }
            input.clear();
            input.extend_from_slice(&cache[&a]);
            input.extend_from_slice(&cache[&b]);
            input.extend_from_slice(data.cells.row(k));
            let p = self.params.head.forward(&input)[0];
            if !p.is_finite() {
                return Err(Error::Numeric("non-finite prediction".into()));
            }
            out.push(p);
        }
        Ok(out)
    }
}

/// Free-function form of [`GnnModel::extract`].
pub fn extract_gnnr<F: Scalar>(model: &GnnModel<F>, graph: &MolecularGraph) -> Vec<F> {
    model.extract(graph)
}

/// Sum of a multiset, independent of the order the values arrive in.
fn ordered_sum<F: Scalar>(values: &mut [F]) -> F {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    values.iter().fold(F::zero(), |a, &b| a + b)
}

fn graph_forward<F: Scalar>(params: &GnnParams<F>, g: &TypedGraph) -> GraphTrace<F> {
    let n = g.types.len();
    let d = params.embedding.cols();
    let mut h = Matrix::zeros(n, d);
    for (v, &t) in g.types.iter().enumerate() {
        h.row_mut(v).copy_from_slice(params.embedding.row(t as usize));
    }
    let mut agg = Vec::with_capacity(params.layers.len());
    let mut pre = Vec::with_capacity(params.layers.len());
    let mut buf = Vec::new();
    for w in &params.layers {
        let mut m = Matrix::zeros(n, d);
        for v in 0..n {
            for c in 0..d {
                buf.clear();
                buf.push(h.get(v, c));
                buf.extend(g.adj[v].iter().map(|&u| h.get(u, c)));
                m.set(v, c, ordered_sum(&mut buf));
            }
        }
        let mut z = Matrix::zeros(n, d);
        for v in 0..n {
            let mv = m.row(v);
            for o in 0..d {
                let s = w.row(o).iter().zip(mv).fold(F::zero(), |a, (&wi, &xi)| a + wi * xi);
                z.set(v, o, s);
            }
        }
        let mut next = z.clone();
        next.as_mut_slice().iter_mut().for_each(|x| *x = x.max(F::zero()));
        agg.push(m);
        pre.push(z);
        h = next;
    }
    let inv_n = F::one() / F::of_usize(n);
    let readout = (0..d)
        .map(|c| {
            buf.clear();
            buf.extend((0..n).map(|v| h.get(v, c)));
            ordered_sum(&mut buf) * inv_n
        })
        .collect();
    GraphTrace { agg, pre, readout }
}

fn graph_backward<F: Scalar>(
    params: &GnnParams<F>,
    g: &TypedGraph,
    trace: &GraphTrace<F>,
    d_readout: &[F],
    grads: &mut GnnParams<F>,
) {
    let n = g.types.len();
    let d = params.embedding.cols();
    let inv_n = F::one() / F::of_usize(n);
    let mut dh = Matrix::zeros(n, d);
    for v in 0..n {
        for (x, &r) in dh.row_mut(v).iter_mut().zip(d_readout) {
            *x = r * inv_n;
        }
    }
    for l in (0..params.layers.len()).rev() {
        let w = &params.layers[l];
        let z = &trace.pre[l];
        let m = &trace.agg[l];
        let mut dm = Matrix::zeros(n, d);
        for v in 0..n {
            for o in 0..d {
                if z.get(v, o) <= F::zero() {
                    continue;
                }
                let dz = dh.get(v, o);
                if dz == F::zero() {
                    continue;
                }
                for (gw, &mi) in grads.layers[l].row_mut(o).iter_mut().zip(m.row(v)) {
                    *gw += dz * mi;
                }
                for (dmi, &wi) in dm.row_mut(v).iter_mut().zip(w.row(o)) {
                    *dmi += dz * wi;
                }
            }
        }
        // m_v = h_v + sum_{u in N(v)} h_u, so h_v feeds m_v and every m_u with u ~ v.
        let mut prev = dm.clone();
        for v in 0..n {
            for &u in &g.adj[v] {
                for c in 0..d {
                    let val = prev.get(v, c) + dm.get(u, c);
                    prev.set(v, c, val);
                }
            }
        }
        dh = prev;
    }
    for (v, &t) in g.types.iter().enumerate() {
        for (ge, &x) in grads.embedding.row_mut(t as usize).iter_mut().zip(dh.row(v)) {
            *ge += x;
        }
    }
}

/// Accumulates the loss of `rows` into gradients. `scale` multiplies each
/// row's `2 * err`. Returns the summed squared error.
fn batch_step<F: Scalar, R: Rng>(
    params: &GnnParams<F>,
    typed: &[TypedGraph],
    data: &GraphPairs<'_, F>,
    y: &[F],
    rows: &[usize],
    dropout: F,
    scale: F,
    rng: &mut R,
    grads: &mut GnnParams<F>,
) -> F {
    let d = params.embedding.cols();
    let mut traces: BTreeMap<usize, GraphTrace<F>> = BTreeMap::new();
    for &k in rows {
        let (a, b) = data.pairs[k];
        for g in [a, b] {
            traces.entry(g).or_insert_with(|| graph_forward(params, &typed[g]));
        }
    }
    let mut d_readout: BTreeMap<usize, Vec<F>> = traces.keys().map(|&g| (g, vec![F::zero(); d])).collect();
    let mut sse = F::zero();
    let mut input = Vec::new();
    for &k in rows {
        let (a, b) = data.pairs[k];
        input.clear();
        input.extend_from_slice(&traces[&a].readout);
        input.extend_from_slice(&traces[&b].readout);
        input.extend_from_slice(data.cells.row(k));
        let trace = params.head.forward_train(&input, dropout, rng);
        let err = trace.output[0] - y[k];
        sse += err * err;
        let dinput = params
            .head
            .backward(&trace, &[scale * F::of(2.0) * err], &mut grads.head);
        for (x, &g) in d_readout.get_mut(&a).expect("traced").iter_mut().zip(&dinput[..d]) {
            *x += g;
        }
        for (x, &g) in d_readout.get_mut(&b).expect("traced").iter_mut().zip(&dinput[d..2 * d]) {
            *x += g;
        }
    }
    for (g, trace) in &traces {
        graph_backward(params, &typed[*g], trace, &d_readout[g], grads);
    }
    sse
}

#[derive(Debug, Clone)]
pub struct GnnFit<F> {
    pub model: GnnModel<F>,
    pub epoch_loss: Vec<F>,
}

pub fn fit_gnn<F: Scalar>(data: &GraphPairs<'_, F>, y: &[F], cfg: &GnnConfig<F>) -> Result<GnnModel<F>> {
    fit_gnn_traced(data, y, cfg).map(|f| f.model)
}

/// Convenience form taking explicit graph pairs.
pub fn fit_gnn_on_pairs<F: Scalar>(
    pairs: &[(MolecularGraph, MolecularGraph)],
    cells: &Matrix<F>,
    y: &[F],
    cfg: &GnnConfig<F>,
) -> Result<GnnModel<F>> {
    let graphs: Vec<MolecularGraph> = pairs.iter().flat_map(|(a, b)| [a.clone(), b.clone()]).collect();
    let idx: Vec<(usize, usize)> = (0..pairs.len()).map(|k| (2 * k, 2 * k + 1)).collect();
    fit_gnn(
        &GraphPairs {
            graphs: &graphs,
            pairs: &idx,
            cells,
        },
        y,
        cfg,
    )
}

/// Builds the type dictionary from `graphs`, freezes it and draws initial
/// weights.
pub fn init_gnn<F: Scalar>(
    graphs: &[MolecularGraph],
    cell_dim: usize,
    cfg: &GnnConfig<F>,
    rng: &mut impl Rng,
) -> Result<GnnModel<F>> {
    cfg.validate()?;
    let mut dictionary = SubgraphDictionary::new(cfg.radius, cfg.bond_orders);
    for g in graphs {
        assign_r_radius_types(g, cfg.radius, &mut dictionary)?;
    }
    dictionary.freeze();
    let d = cfg.embed_dim;
    let emb_limit = F::of((3.0 / d as f64).sqrt());
    let embedding = Matrix::new(
        dictionary.vocab_size(),
        d,
        (0..dictionary.vocab_size() * d)
            .map(|_| rng.gen_range(-emb_limit..emb_limit))
            .collect(),
    )?;
    let layers = (0..cfg.layers)
        .map(|_| Matrix::new(d, d, (0..d * d).map(|_| rng.gen_range(-emb_limit..emb_limit)).collect()))
        .collect::<Result<Vec<_>>>()?;
    let head = Mlp::init(&cfg.head.layer_sizes(2 * d + cell_dim), rng)?;
    Ok(GnnModel {
        config: cfg.clone(),
        dictionary,
        params: GnnParams {
            embedding,
            layers,
            head,
        },
        cell_dim,
    })
}

pub fn fit_gnn_traced<F: Scalar>(data: &GraphPairs<'_, F>, y: &[F], cfg: &GnnConfig<F>) -> Result<GnnFit<F>> {
    data.check()?;
    if y.len() != data.pairs.len() {
        return Err(Error::Shape(format!(
            "{} graph pairs but {} targets",
            data.pairs.len(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Shape("cannot fit on zero rows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = init_gnn(data.graphs, data.cells.cols(), cfg, &mut rng)?;
    let typed: Vec<TypedGraph> = data.graphs.iter().map(|g| model.typed(g)).collect();
    let mut grads = model.params.zeros_like();
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = F::zero();
        for batch in order.chunks(cfg.head.batch_size) {
            grads.fill_zero();
            let scale = F::one() / F::of_usize(batch.len());
            total += batch_step(
                &model.params,
                &typed,
                data,
                y,
                batch,
                cfg.head.dropout,
                scale,
                &mut rng,
                &mut grads,
            );
            model.params.add_scaled(&grads, -cfg.head.learning_rate);
        }
        let loss = total / F::of_usize(y.len());
        if !loss.is_finite() || !model.params.all_finite() {
            return Err(Error::Divergence { epoch });
        }
        epoch_loss.push(loss);
    }
    Ok(GnnFit { model, epoch_loss })
}

/// Full-batch MSE and its gradient with respect to every weight, dropout off.
pub fn gnn_loss_and_grad<F: Scalar>(
    model: &GnnModel<F>,
    data: &GraphPairs<'_, F>,
    y: &[F],
) -> Result<(F, GnnParams<F>)> {
    data.check()?;
    let typed: Vec<TypedGraph> = data.graphs.iter().map(|g| model.typed(g)).collect();
    let mut grads = model.params.zeros_like();
    let rows: Vec<usize> = (0..y.len()).collect();
    let n = F::of_usize(y.len());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let sse = batch_step(
        &model.params,
        &typed,
        data,
        y,
        &rows,
        F::zero(),
        F::one() / n,
        &mut rng,
        &mut grads,
    );
    Ok((sse / n, grads))
}

pub fn gnn_loss<F: Scalar>(model: &GnnModel<F>, data: &GraphPairs<'_, F>, y: &[F]) -> Result<F> {
    let p = model.predict(data)?;
    Ok(crate::scalar::sum_sq_diff(&p, y) / F::of_usize(y.len()))
}
