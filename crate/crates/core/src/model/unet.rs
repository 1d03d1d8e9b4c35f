//! The U-GNN noise predictor.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use ndarray::Array2;
use rand::Rng;

use super::config::{Activation, Normalization, UGnnConfig};
use super::conv::{activate, sampled_graph_conv, BatchGraph, LayerParams};
use super::embed::batched_time_embedding;
use crate::autodiff::{BoundParams, ParameterStore, Tape, Tensor};
use crate::diffusion::Denoiser;
use crate::error::{bail, Result};
use crate::graph::{GraphShift, SamplerHierarchy};
use crate::scalar::Scalar;

/// Parameters of one L-layer GNN block.
#[derive(Debug, Clone)]
pub struct BlockParams {
    pub layers: Vec<LayerParams>,
}

/// Encoder block at depth `b`: downsample with `C_b`, then L sampled
/// convolutions at resolution `D_b`.
pub fn encoder_block<T: Scalar>(
    tape: &mut Tape<T>,
    x_prev: Tensor,
    graph: &BatchGraph<T>,
    b: usize,
    block: &BlockParams,
    activation: Activation,
) -> Result<Tensor> {
    if b == 0 || b > graph.depth() {
        bail!(Argument, "encoder depth {b} outside 1..={}", graph.depth());
    }
    let mut v = if is_identity(graph, b) {
        x_prev
    } else {
        tape.row_select(x_prev, graph.select(b))?
    };
    for layer in &block.layers {
        v = sampled_graph_conv(tape, v, graph, b, layer, activation)?;
    }
    Ok(v)
}

/// Decoder block at depth `b`: concatenate `[Y_b ; X_b]`, zero-pad with
/// `C_bᵀ`, then L sampled convolutions at resolution `D_{b−1}`.
pub fn decoder_block<T: Scalar>(
    tape: &mut Tape<T>,
    y_b: Tensor,
    skip: Tensor,
    graph: &BatchGraph<T>,
    b: usize,
    block: &BlockParams,
    activation: Activation,
) -> Result<Tensor> {
    if b == 0 || b > graph.depth() {
        bail!(Argument, "decoder depth {b} outside 1..={}", graph.depth());
    }
    if y_b.rows() != skip.rows() {
        bail!(
            Structural,
            "decoder input has {} rows but skip has {}",
            y_b.rows(),
            skip.rows()
        );
    }
    let cat = tape.concat_cols(&[y_b, skip])?;
    let mut v = if is_identity(graph, b) {
        cat
    } else {
        tape.row_select(cat, graph.lift(b))?
    };
    for layer in &block.layers {
        v = sampled_graph_conv(tape, v, graph, b - 1, layer, activation)?;
    }
    Ok(v)
}

fn is_identity<T: Scalar>(graph: &BatchGraph<T>, b: usize) -> bool {
    graph.resolution(b).n_active() == graph.resolution(b - 1).n_active()
}

/// U-GNN noise predictor `ε_θ(x_t, t; S, u)`.
///
/// Signals are stacked per sample: a batch of `m` graph signals with `N`
/// nodes is an `(m·N) × F` matrix.
#[derive(Debug)]
pub struct UGnn<T> {
    config: UGnnConfig,
    shift: GraphShift<T>,
    hierarchy: SamplerHierarchy,
    graphs: Mutex<HashMap<usize, Arc<BatchGraph<T>>>>,
}

impl<T: Scalar> UGnn<T> {
    pub fn new(config: UGnnConfig, shift: GraphShift<T>, hierarchy: SamplerHierarchy) -> Result<Self> {
        config.validate()?;
        if shift.n_nodes() != config.n_nodes() {
            bail!(
                Structural,
                "config expects {} nodes, shift has {}",
                config.n_nodes(),
                shift.n_nodes()
            );
        }
        if hierarchy.depth() != config.depth || hierarchy.node_counts() != config.node_counts {
            bail!(
                Structural,
                "sampler hierarchy {:?} does not match node counts {:?}",
                hierarchy.node_counts(),
                config.node_counts
            );
        }
        Ok(Self {
            config,
            shift,
            hierarchy,
            graphs: Mutex::new(HashMap::new()),
        })
    }

    /// Model whose samplers drop the lowest-degree nodes at each level.
    pub fn with_degree_selection(config: UGnnConfig, shift: GraphShift<T>) -> Result<Self> {
        config.validate()?;
        let hierarchy = SamplerHierarchy::by_degree(&shift, &config.node_counts)?;
        Self::new(config, shift, hierarchy)
    }

    pub fn config(&self) -> &UGnnConfig {
        &self.config
    }

    pub fn shift(&self) -> &GraphShift<T> {
        &self.shift
    }

    pub fn hierarchy(&self) -> &SamplerHierarchy {
        &self.hierarchy
    }

    /// Row operators for a batch of `batch` stacked signals (cached).
    pub fn batch_graph(&self, batch: usize) -> Result<Arc<BatchGraph<T>>> {
        let mut cache = self.graphs.lock().expect("graph cache poisoned");
        if let Some(g) = cache.get(&batch) {
            return Ok(Arc::clone(g));
        }
        let g = Arc::new(BatchGraph::new(
            &self.shift,
            &self.hierarchy,
            self.config.stride,
            self.config.max_taps(),
            self.config.conv_view,
            batch,
        )?);
        cache.insert(batch, Arc::clone(&g));
        Ok(g)
    }

    /// Names and shapes of every learnable tensor.
    pub fn parameter_shapes(&self) -> Vec<(String, (usize, usize))> {
        let c = &self.config;
        let f0 = c.widths[0];
        let mut shapes = vec![
            ("read_in.weight".to_string(), (c.target_width, f0)),
            ("read_in.bias".to_string(), (1, f0)),
            ("embed_x.weight".to_string(), (f0, f0 / 2)),
            ("embed_x.bias".to_string(), (1, f0 / 2)),
            ("embed_u.weight".to_string(), (c.conditioning_width, f0 / 2)),
            ("embed_u.bias".to_string(), (1, f0 / 2)),
        ];
        for b in 1..=c.depth {
            for (l, (w_in, w_out)) in self.encoder_plan(b).into_iter().enumerate() {
                push_layer(&mut shapes, &format!("enc.{b}.layer.{l}"), c.taps[l], w_in, w_out, c.normalization);
            }
            for (l, (w_in, w_out)) in self.decoder_plan(b).into_iter().enumerate() {
                push_layer(&mut shapes, &format!("dec.{b}.layer.{l}"), c.taps[l], w_in, w_out, c.normalization);
            }
        }
        let fb = c.widths[c.depth];
        for i in 0..2 {
            shapes.push((format!("bottleneck.{i}.weight"), (fb, fb)));
            shapes.push((format!("bottleneck.{i}.bias"), (1, fb)));
        }
        shapes.push(("read_out.weight".to_string(), (f0, c.target_width)));
        shapes.push(("read_out.bias".to_string(), (1, c.target_width)));
        shapes
    }

    fn encoder_plan(&self, b: usize) -> Vec<(usize, usize)> {
        let w = &self.config.widths;
        (0..self.config.layers_per_block)
            .map(|l| (if l == 0 { w[b - 1] } else { w[b] }, w[b]))
            .collect()
    }

    fn decoder_plan(&self, b: usize) -> Vec<(usize, usize)> {
        let w = &self.config.widths;
        (0..self.config.layers_per_block)
            .map(|l| (if l == 0 { 2 * w[b] } else { w[b - 1] }, w[b - 1]))
            .collect()
    }

    /// Glorot-uniform weights (filter banks scaled by the tap count), zero
    /// biases, unit layer-norm gains.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterStore<T> {
        let mut store = ParameterStore::new();
        for (name, (rows, cols)) in self.parameter_shapes() {
            let value = if name.ends_with("bias") {
                Array2::zeros((rows, cols))
            } else if name.ends_with("ln_gain") {
                Array2::ones((rows, cols))
            } else {
                let taps = if name.contains(".H_k") {
                    let layer = name.split(".layer.").nth(1).and_then(|s| s.split('.').next());
                    let l: usize = layer.and_then(|s| s.parse().ok()).unwrap_or(0);
                    (self.config.taps[l] + 1) as f64
                } else {
                    1.0
                };
                let limit = (6.0 / ((rows + cols).max(1) as f64 * taps)).sqrt();
                Array2::from_shape_fn((rows, cols), |_| T::of(rng.random_range(-limit..=limit)))
            };
            store.insert(name, value).expect("unique parameter names");
        }
        log::info!("U-GNN built with {} parameters", store.n_scalars());
        store
    }

    fn block(&self, params: &BoundParams, prefix: &str, b: usize) -> Result<BlockParams> {
        let c = &self.config;
        let layers = (0..c.layers_per_block)
            .map(|l| {
                let base = format!("{prefix}.{b}.layer.{l}");
                let taps = (0..=c.taps[l])
                    .map(|k| params.get(&format!("{base}.H_k{k}")))
                    .collect::<Result<Vec<_>>>()?;
                let norm = match c.normalization {
                    Normalization::Layer => Some((
                        params.get(&format!("{base}.ln_gain"))?,
                        params.get(&format!("{base}.ln_bias"))?,
                    )),
                    Normalization::None => None,
                };
                Ok(LayerParams { taps, norm })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockParams { layers })
    }

    /// Records `ε̂ = ε_θ(x_t, t; S, u)` for a stacked batch.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        graph: &BatchGraph<T>,
        x_t: Tensor,
        steps: &[usize],
        u: Tensor,
    ) -> Result<Tensor> {
        let c = &self.config;
        let n = c.n_nodes();
        let rows = steps.len() * n;
        if graph.batch() != steps.len() || graph.n_nodes() != n {
            bail!(Structural, "batch graph does not match {} samples of {n} nodes", steps.len());
        }
        if x_t.shape() != (rows, c.target_width) {
            bail!(Structural, "x_t has shape {:?}, expected {:?}", x_t.shape(), (rows, c.target_width));
        }
        if u.shape() != (rows, c.conditioning_width) {
            bail!(
                Contract,
                "conditioning has shape {:?}, expected {:?}",
                u.shape(),
                (rows, c.conditioning_width)
            );
        }
        let f0 = c.widths[0];
        let x0 = linear(tape, params, "read_in", x_t)?;
        let v0 = input_embedding(tape, params, x0, steps, n, u, f0)?;

        let mut skips = Vec::with_capacity(c.depth);
        let mut x = v0;
        for b in 1..=c.depth {
            let block = self.block(params, "enc", b)?;
            x = encoder_block(tape, x, graph, b, &block, c.activation)?;
            skips.push(x);
        }
        let h = linear(tape, params, "bottleneck.0", x)?;
        let h = activate(tape, h, c.activation)?;
        let mut y = linear(tape, params, "bottleneck.1", h)?;
        for b in (1..=c.depth).rev() {
            let block = self.block(params, "dec", b)?;
            y = decoder_block(tape, y, skips[b - 1], graph, b, &block, c.activation)?;
        }
        linear(tape, params, "read_out", y)
    }

    /// Forward evaluation without keeping the tape.
    pub fn predict(
        &self,
        params: &ParameterStore<T>,
        x_t: &Array2<T>,
        steps: &[usize],
        u: &Array2<T>,
    ) -> Result<Array2<T>> {
        let graph = self.batch_graph(steps.len())?;
        let mut tape = Tape::new();
        let bound = tape.bind(params)?;
        let x = tape.constant(x_t.clone())?;
        let uc = tape.constant(u.clone())?;
        let out = self.forward(&mut tape, &bound, &graph, x, steps, uc)?;
        Ok(tape.value(out).clone())
    }
}

fn push_layer(
    shapes: &mut Vec<(String, (usize, usize))>,
    base: &str,
    taps: usize,
    w_in: usize,
    w_out: usize,
    norm: Normalization,
) {
    for k in 0..=taps {
        shapes.push((format!("{base}.H_k{k}"), (w_in, w_out)));
    }
    if norm == Normalization::Layer {
        shapes.push((format!("{base}.ln_gain"), (1, w_out)));
        shapes.push((format!("{base}.ln_bias"), (1, w_out)));
    }
}

/// Per-node affine map `x W + b` using `{prefix}.weight` / `{prefix}.bias`.
pub fn linear<T: Scalar>(tape: &mut Tape<T>, params: &BoundParams, prefix: &str, x: Tensor) -> Result<Tensor> {
    let w = params.get(&format!("{prefix}.weight"))?;
    let b = params.get(&format!("{prefix}.bias"))?;
    let xw = tape.matmul(x, w)?;
    tape.add(xw, b)
}

/// `V_0 = [Υ_X(X) + Υ_T(t) ; Υ_U(U)]`, each half `f_in / 2` wide.
pub fn input_embedding<T: Scalar>(
    tape: &mut Tape<T>,
    params: &BoundParams,
    x: Tensor,
    steps: &[usize],
    n_nodes: usize,
    u: Tensor,
    f_in: usize,
) -> Result<Tensor> {
    if x.rows() != u.rows() {
        bail!(Contract, "signal has {} rows but conditioning has {}", x.rows(), u.rows());
    }
    let ex = linear(tape, params, "embed_x", x)?;
    let te = tape.constant(batched_time_embedding(steps, n_nodes, f_in / 2)?)?;
    let left = tape.add(ex, te)?;
    let right = linear(tape, params, "embed_u", u)?;
    tape.concat_cols(&[left, right])
}

impl<T: Scalar> Denoiser<T> for UGnn<T> {
    fn n_nodes(&self) -> usize {
        self.config.n_nodes()
    }

    fn target_width(&self) -> usize {
        self.config.target_width
    }

    fn conditioning_width(&self) -> usize {
        self.config.conditioning_width
    }

    fn predict_on(
        &self,
        tape: &mut Tape<T>,
        params: &BoundParams,
        x_t: Tensor,
        steps: &[usize],
        u: Tensor,
    ) -> Result<Tensor> {
        let graph = self.batch_graph(steps.len())?;
        self.forward(tape, params, &graph, x_t, steps, u)
    }
}
