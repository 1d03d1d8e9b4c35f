//! Sampled polynomial graph convolution.

use std::sync::Arc;

use ndarray::Array2;

use super::config::{Activation, ConvView};
use crate::autodiff::{RowMap, Tape, Tensor};
use crate::error::{bail, Result};
use crate::graph::{reduced_shift, CsrMatrix, GraphShift, NestedSampler, SamplerHierarchy};
use crate::scalar::Scalar;

/// Row operators for one resolution, replicated over a stacked batch.
#[derive(Debug, Clone)]
pub struct Resolution<T> {
    n_active: usize,
    identity: bool,
    /// `Dᵀ`: active rows to the full graph.
    pad: Arc<RowMap>,
    /// `D`: full graph to active rows.
    sub: Arc<RowMap>,
    /// `D (S^γ)^k Dᵀ` for k = 0..=K, block-diagonal over the batch.
    reduced: Vec<Arc<CsrMatrix<T>>>,
}

impl<T: Scalar> Resolution<T> {
    /// Builds the operators for `sampler`. Reduced shifts up to `max_taps`
    /// are precomputed only when `view` needs them.
    pub fn new(
        sampler: &NestedSampler,
        shift: &GraphShift<T>,
        gamma: usize,
        max_taps: usize,
        view: ConvView,
        batch: usize,
    ) -> Result<Self> {
        let n0 = sampler.n_original();
        let kept = sampler.kept();
        let pad = RowMap::scatter(n0, kept)?.block_diagonal(batch);
        let sub = RowMap::gather(n0, kept)?.block_diagonal(batch);
        let reduced = match view {
            ConvView::Reduced => (0..=max_taps)
                .map(|k| {
                    let dense = reduced_shift(sampler, shift, gamma, k)?;
                    Ok(Arc::new(CsrMatrix::from_dense(dense.view()).block_diagonal(batch)))
                })
                .collect::<Result<Vec<_>>>()?,
            ConvView::ZeroPad => Vec::new(),
        };
        Ok(Self {
            n_active: sampler.n_out(),
            identity: sampler.selector().is_identity(),
            pad: Arc::new(pad),
            sub: Arc::new(sub),
            reduced,
        })
    }

    pub fn n_active(&self) -> usize {
        self.n_active
    }
}

/// Everything a forward pass needs about the graph for one batch size.
#[derive(Debug, Clone)]
pub struct BatchGraph<T> {
    batch: usize,
    n_nodes: usize,
    gamma: usize,
    view: ConvView,
    shift: Arc<CsrMatrix<T>>,
    /// `D_b` resolutions, b = 0..=B.
    resolutions: Vec<Resolution<T>>,
    /// `C_b` gathers and `C_bᵀ` scatters, b = 1..=B (index 0 unused).
    select: Vec<Arc<RowMap>>,
    lift: Vec<Arc<RowMap>>,
}

impl<T: Scalar> BatchGraph<T> {
    pub fn new(
        shift: &GraphShift<T>,
        hierarchy: &SamplerHierarchy,
        gamma: usize,
        max_taps: usize,
        view: ConvView,
        batch: usize,
    ) -> Result<Self> {
        if batch == 0 {
            bail!(Argument, "batch size must be positive");
        }
        if hierarchy.n_original() != shift.n_nodes() {
            bail!(
                Structural,
                "hierarchy spans {} nodes, shift has {}",
                hierarchy.n_original(),
                shift.n_nodes()
            );
        }
        let mut resolutions = Vec::new();
        let mut select = Vec::new();
        let mut lift = Vec::new();
        for b in 0..=hierarchy.depth() {
            let level = hierarchy.level(b);
            resolutions.push(Resolution::new(&level.nested, shift, gamma, max_taps, view, batch)?);
            let c = &level.select;
            select.push(Arc::new(RowMap::gather(c.n_in(), c.kept())?.block_diagonal(batch)));
            lift.push(Arc::new(RowMap::scatter(c.n_in(), c.kept())?.block_diagonal(batch)));
        }
        Ok(Self {
            batch,
            n_nodes: shift.n_nodes(),
            gamma,
            view,
            shift: Arc::new(shift.matrix().block_diagonal(batch)),
            resolutions,
            select,
            lift,
        })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn view(&self) -> ConvView {
        self.view
    }

    pub fn resolution(&self, b: usize) -> &Resolution<T> {
        &self.resolutions[b]
    }

    /// `C_b X_{b−1}`.
    pub(crate) fn select(&self, b: usize) -> &Arc<RowMap> {
        &self.select[b]
    }

    /// `C_bᵀ Y`.
    pub(crate) fn lift(&self, b: usize) -> &Arc<RowMap> {
        &self.lift[b]
    }

    pub fn depth(&self) -> usize {
        self.resolutions.len() - 1
    }
}

/// Learnable tensors of one convolution layer.
#[derive(Debug, Clone)]
pub struct LayerParams {
    /// `H_0..H_K`, each `w_in × w_out`.
    pub taps: Vec<Tensor>,
    /// Layer-norm gain and bias (1 × w_out); `None` disables normalization.
    pub norm: Option<(Tensor, Tensor)>,
}

/// `φ(norm(Σ_k [D (S^γ)^k Dᵀ] V H_k))` for a stacked batch at resolution `b`.
pub fn sampled_graph_conv<T: Scalar>(
    tape: &mut Tape<T>,
    v: Tensor,
    graph: &BatchGraph<T>,
    b: usize,
    layer: &LayerParams,
    activation: Activation,
) -> Result<Tensor> {
    let res = graph.resolution(b);
    if v.rows() != res.n_active * graph.batch {
        bail!(
            Structural,
            "convolution input has {} rows, resolution {b} expects {}",
            v.rows(),
            res.n_active * graph.batch
        );
    }
    let Some(&h0) = layer.taps.first() else {
        bail!(Structural, "filter bank has no taps");
    };
    let mut acc = tape.matmul(v, h0)?;
    match graph.view {
        ConvView::ZeroPad => {
            let mut z = if res.identity { v } else { tape.row_select(v, &res.pad)? };
            for h in &layer.taps[1..] {
                for _ in 0..graph.gamma {
                    z = tape.sparse_matmul(&graph.shift, z)?;
                }
                let zk = if res.identity { z } else { tape.row_select(z, &res.sub)? };
                let term = tape.matmul(zk, *h)?;
                acc = tape.add(acc, term)?;
            }
        }
        ConvView::Reduced => {
            for (k, h) in layer.taps.iter().enumerate().skip(1) {
                let Some(rk) = res.reduced.get(k) else {
                    bail!(Structural, "reduced shift for k = {k} was not precomputed");
                };
                let zk = tape.sparse_matmul(rk, v)?;
                let term = tape.matmul(zk, *h)?;
                acc = tape.add(acc, term)?;
            }
        }
    }
    if let Some((gain, bias)) = layer.norm {
        acc = tape.layer_norm(acc, gain, bias)?;
    }
    activate(tape, acc, activation)
}

pub fn activate<T: Scalar>(tape: &mut Tape<T>, x: Tensor, activation: Activation) -> Result<Tensor> {
    match activation {
        Activation::Relu => tape.relu(x),
        Activation::Silu => tape.silu(x),
        Activation::Identity => Ok(x),
    }
}

/// Dense reference for one layer without normalization: `Σ_k S^k V H_k`
/// evaluated with explicit dense matrix powers.
pub fn dense_polynomial_filter<T: Scalar>(shift: &Array2<T>, v: &Array2<T>, taps: &[Array2<T>]) -> Array2<T> {
    let mut acc = Array2::zeros((v.nrows(), taps[0].ncols()));
    let mut power = v.clone();
    for (k, h) in taps.iter().enumerate() {
        if k > 0 {
            power = shift.dot(&power);
        }
        acc = acc + power.dot(h);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use ndarray::array;

    #[test]
    fn two_node_hand_example() {
        let s = GraphShift::<f64>::from_adjacency(array![[0.0, 1.0], [1.0, 0.0]].view(), false).unwrap();
        let h = SamplerHierarchy::identity(2, 0);
        for view in [ConvView::ZeroPad, ConvView::Reduced] {
            let g = BatchGraph::new(&s, &h, 1, 1, view, 1).unwrap();
            let mut tape = Tape::new();
            let v = tape.constant(array![[1.0], [0.0]]).unwrap();
            let h0 = tape.constant(array![[1.0]]).unwrap();
            let h1 = tape.constant(array![[1.0]]).unwrap();
            let layer = LayerParams { taps: vec![h0, h1], norm: None };
            let out = sampled_graph_conv(&mut tape, v, &g, 0, &layer, Activation::Relu).unwrap();
            assert_eq!(tape.value(out), &array![[1.0], [1.0]]);
        }
    }

    #[test]
    fn rejects_wrong_row_count() {
        let s = GraphShift::<f64>::from_adjacency(array![[0.0, 1.0], [1.0, 0.0]].view(), false).unwrap();
        let g = BatchGraph::new(&s, &SamplerHierarchy::identity(2, 0), 1, 1, ConvView::ZeroPad, 1).unwrap();
        let mut tape = Tape::new();
        let v = tape.constant(array![[1.0], [0.0], [2.0]]).unwrap();
        let h0 = tape.constant(array![[1.0]]).unwrap();
        let layer = LayerParams { taps: vec![h0], norm: None };
        assert!(sampled_graph_conv(&mut tape, v, &g, 0, &layer, Activation::Relu).is_err());
    }
}
