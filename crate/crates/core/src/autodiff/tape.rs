use std::sync::Arc;

use ndarray::{concatenate, s, Array2, Axis, Zip};

use super::params::{BoundParams, Gradients, ParameterStore};
use crate::error::{bail, Result};
use crate::graph::CsrMatrix;
use crate::scalar::Scalar;

/// Epsilon added to the variance inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tensor {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Tensor {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

/// Fixed 0/1 row operator: output row `i` copies input row `sources[i]`, or
/// is zero when `sources[i]` is `None`. Covers both `C X` and `Cᵀ X`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMap {
    n_in: usize,
    sources: Vec<Option<usize>>,
}

impl RowMap {
    pub fn new(n_in: usize, sources: Vec<Option<usize>>) -> Result<Self> {
        if let Some(bad) = sources.iter().flatten().find(|&&s| s >= n_in) {
            bail!(Structural, "row map source {bad} out of range {n_in}");
        }
        Ok(Self { n_in, sources })
    }

    /// Gather map extracting `kept` rows.
    pub fn gather(n_in: usize, kept: &[usize]) -> Result<Self> {
        Self::new(n_in, kept.iter().map(|&k| Some(k)).collect())
    }

    /// Scatter map placing `n = kept.len()` rows at `kept` within `n_out`.
    pub fn scatter(n_out: usize, kept: &[usize]) -> Result<Self> {
        let mut sources = vec![None; n_out];
        for (i, &k) in kept.iter().enumerate() {
            if k >= n_out {
                bail!(Structural, "scatter target {k} out of range {n_out}");
            }
            sources[k] = Some(i);
        }
        Self::new(kept.len(), sources)
    }

    /// Same map applied independently to `copies` stacked blocks.
    pub fn block_diagonal(&self, copies: usize) -> Self {
        let mut sources = Vec::with_capacity(self.sources.len() * copies);
        for b in 0..copies {
            sources.extend(self.sources.iter().map(|s| s.map(|j| j + b * self.n_in)));
        }
        Self {
            n_in: self.n_in * copies,
            sources,
        }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.sources.len()
    }

    pub fn apply<T: Scalar>(&self, x: &Array2<T>) -> Array2<T> {
        let mut out = Array2::zeros((self.n_out(), x.ncols()));
        for (i, src) in self.sources.iter().enumerate() {
            if let Some(j) = src {
                out.row_mut(i).assign(&x.row(*j));
            }
        }
        out
    }

    fn apply_transpose<T: Scalar>(&self, g: &Array2<T>) -> Array2<T> {
        let mut out = Array2::zeros((self.n_in, g.ncols()));
        for (i, src) in self.sources.iter().enumerate() {
            if let Some(j) = src {
                out.row_mut(*j).scaled_add(T::one(), &g.row(i));
            }
        }
        out
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    Add { a: usize, b: usize, broadcast: bool },
    Scale(usize, T),
    Concat(Vec<usize>),
    Slice { x: usize, start: usize },
    Relu(usize),
    Silu(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Array2<T>,
        inv_std: Vec<T>,
    },
    Mse { pred: usize, target: usize },
    RowSelect { x: usize, map: Arc<RowMap> },
    SparseMatMul { x: usize, matrix: Arc<CsrMatrix<T>> },
}

#[derive(Debug)]
struct Node<T> {
    value: Array2<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recorded computation. Nodes are stored in insertion order, which is a
/// topological order; backward walks it in reverse.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: Vec<(String, usize)>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, t: Tensor) -> &Array2<T> {
        &self.nodes[t.id].value
    }

    /// Scalar value of a 1×1 tensor.
    pub fn scalar(&self, t: Tensor) -> T {
        self.nodes[t.id].value[[0, 0]]
    }

    fn push(&mut self, value: Array2<T>, op: Op<T>, requires_grad: bool) -> Result<Tensor> {
        if value.iter().any(|v| !v.is_finite()) {
            bail!(Numeric, "non-finite value produced by {}", op_name(&op));
        }
        let (rows, cols) = value.dim();
        let id = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Tensor { id, rows, cols })
    }

    fn needs(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    pub fn constant(&mut self, value: Array2<T>) -> Result<Tensor> {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: Array2<T>) -> Result<Tensor> {
        self.push(value, Op::Leaf, true)
    }

    /// Records every parameter as a differentiable leaf.
    pub fn bind(&mut self, store: &ParameterStore<T>) -> Result<BoundParams> {
        let mut bound = BoundParams::default();
        for (name, value) in store.iter() {
            let t = self.leaf(value.clone())?;
            self.params.push((name.to_string(), t.id));
            bound.insert(name.to_string(), t);
        }
        Ok(bound)
    }

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.cols != b.rows {
            bail!(Structural, "matmul {:?} x {:?}", a.shape(), b.shape());
        }
        let v = self.value(a).dot(self.value(b));
        let rg = self.needs(&[a.id, b.id]);
        self.push(v, Op::MatMul(a.id, b.id), rg)
    }

    /// Elementwise sum; `b` may be a single row broadcast over `a`'s rows.
    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let broadcast = if a.shape() == b.shape() {
            false
        } else if b.rows == 1 && b.cols == a.cols {
            true
        } else {
            bail!(Structural, "add {:?} + {:?}", a.shape(), b.shape());
        };
        let v = if broadcast {
            self.value(a) + &self.value(b).row(0)
        } else {
            self.value(a) + self.value(b)
        };
        let rg = self.needs(&[a.id, b.id]);
        self.push(v, Op::Add { a: a.id, b: b.id, broadcast }, rg)
    }

    pub fn scale(&mut self, a: Tensor, factor: T) -> Result<Tensor> {
        let v = self.value(a) * factor;
        let rg = self.needs(&[a.id]);
        self.push(v, Op::Scale(a.id, factor), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Tensor]) -> Result<Tensor> {
        let Some(first) = parts.first() else {
            bail!(Structural, "concat of zero tensors");
        };
        if parts.iter().any(|p| p.rows != first.rows) {
            bail!(Structural, "concat with mismatched row counts");
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = concatenate(Axis(1), &views).map_err(|e| crate::Error::Structural(e.to_string()))?;
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = self.needs(&ids);
        self.push(v, Op::Concat(ids), rg)
    }

    pub fn slice_cols(&mut self, a: Tensor, start: usize, end: usize) -> Result<Tensor> {
        if start > end || end > a.cols {
            bail!(Structural, "slice {start}..{end} of {} columns", a.cols);
        }
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        let rg = self.needs(&[a.id]);
        self.push(v, Op::Slice { x: a.id, start }, rg)
    }

    pub fn relu(&mut self, a: Tensor) -> Result<Tensor> {
        let v = self.value(a).mapv(|x| x.max(T::zero()));
        let rg = self.needs(&[a.id]);
        self.push(v, Op::Relu(a.id), rg)
    }

    pub fn silu(&mut self, a: Tensor) -> Result<Tensor> {
        let v = self.value(a).mapv(|x| x * sigmoid(x));
        let rg = self.needs(&[a.id]);
        self.push(v, Op::Silu(a.id), rg)
    }

    /// Per-row normalization over columns with learnable 1×C gain and bias.
    pub fn layer_norm(&mut self, x: Tensor, gain: Tensor, bias: Tensor) -> Result<Tensor> {
        if gain.shape() != (1, x.cols) || bias.shape() != (1, x.cols) {
            bail!(
                Structural,
                "layer norm of {:?} with gain {:?}, bias {:?}",
                x.shape(),
                gain.shape(),
                bias.shape()
            );
        }
        if x.cols == 0 {
            bail!(Structural, "layer norm over zero columns");
        }
        let eps = T::of(LAYER_NORM_EPS);
        let xv = self.value(x);
        let n = T::of_usize(x.cols);
        let mut xhat = Array2::zeros(xv.dim());
        let mut inv_std = Vec::with_capacity(x.rows);
        for (r, row) in xv.rows().into_iter().enumerate() {
            let mean = row.sum() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            Zip::from(xhat.row_mut(r)).and(&row).for_each(|h, &v| *h = (v - mean) * is);
        }
        let g = self.value(gain).row(0).to_owned();
        let b = self.value(bias).row(0).to_owned();
        let v = &xhat * &g + &b;
        let rg = self.needs(&[x.id, gain.id, bias.id]);
        self.push(
            v,
            Op::LayerNorm {
                x: x.id,
                gain: gain.id,
                bias: bias.id,
                xhat,
                inv_std,
            },
            rg,
        )
    }

    /// Mean of squared differences over all entries, as a 1×1 tensor.
    pub fn mse(&mut self, pred: Tensor, target: Tensor) -> Result<Tensor> {
        if pred.shape() != target.shape() {
            bail!(Structural, "mse {:?} vs {:?}", pred.shape(), target.shape());
        }
        let count = pred.rows * pred.cols;
        if count == 0 {
            bail!(Structural, "mse over an empty tensor");
        }
        let diff = self.value(pred) - self.value(target);
        let v = diff.iter().map(|&d| d * d).sum::<T>() / T::of_usize(count);
        let rg = self.needs(&[pred.id, target.id]);
        self.push(
            Array2::from_elem((1, 1), v),
            Op::Mse {
                pred: pred.id,
                target: target.id,
            },
            rg,
        )
    }

    pub fn row_select(&mut self, x: Tensor, map: &Arc<RowMap>) -> Result<Tensor> {
        if map.n_in() != x.rows {
            bail!(Structural, "row map expects {} rows, got {}", map.n_in(), x.rows);
        }
        let v = map.apply(self.value(x));
        let rg = self.needs(&[x.id]);
        self.push(
            v,
            Op::RowSelect {
                x: x.id,
                map: Arc::clone(map),
            },
            rg,
        )
    }

    /// `M · x` for a constant sparse `M`.
    pub fn sparse_matmul(&mut self, matrix: &Arc<CsrMatrix<T>>, x: Tensor) -> Result<Tensor> {
        let v = matrix.matmul(self.value(x).view())?;
        let rg = self.needs(&[x.id]);
        self.push(
            v,
            Op::SparseMatMul {
                x: x.id,
                matrix: Arc::clone(matrix),
            },
            rg,
        )
    }

    /// Reverse accumulation from a scalar loss.
    pub fn backward(&self, loss: Tensor) -> Result<Adjoints<'_, T>> {
        if loss.shape() != (1, 1) {
            bail!(Contract, "backward needs a 1x1 loss, got {:?}", loss.shape());
        }
        let mut grads: Vec<Option<Array2<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Array2::from_elem((1, 1), T::one()));
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            self.propagate(&node.op, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Adjoints { tape: self, grads })
    }

    fn propagate(&self, op: &Op<T>, g: &Array2<T>, grads: &mut [Option<Array2<T>>]) {
        let val = |i: usize| &self.nodes[i].value;
        let rg = |i: usize| self.nodes[i].requires_grad;
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if rg(*a) {
                    accumulate(grads, *a, g.dot(&val(*b).t()));
                }
                if rg(*b) {
                    accumulate(grads, *b, val(*a).t().dot(g));
                }
            }
            Op::Add { a, b, broadcast } => {
                if rg(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if rg(*b) {
                    let gb = if *broadcast {
                        g.sum_axis(Axis(0)).insert_axis(Axis(0))
                    } else {
                        g.clone()
                    };
                    accumulate(grads, *b, gb);
                }
            }
            Op::Scale(a, f) => {
                if rg(*a) {
                    accumulate(grads, *a, g * *f);
                }
            }
            Op::Concat(ids) => {
                let mut start = 0;
                for &i in ids {
                    let w = val(i).ncols();
                    if rg(i) {
                        accumulate(grads, i, g.slice(s![.., start..start + w]).to_owned());
                    }
                    start += w;
                }
            }
            Op::Slice { x, start } => {
                if rg(*x) {
                    let mut gx = Array2::zeros(val(*x).dim());
                    gx.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                    accumulate(grads, *x, gx);
                }
            }
            Op::Relu(x) => {
                let mut gx = g.clone();
                Zip::from(&mut gx).and(val(*x)).for_each(|d, &v| {
                    if v <= T::zero() {
                        *d = T::zero();
                    }
                });
                accumulate(grads, *x, gx);
            }
            Op::Silu(x) => {
                let mut gx = g.clone();
                Zip::from(&mut gx).and(val(*x)).for_each(|d, &v| {
                    let sg = sigmoid(v);
                    *d = *d * sg * (T::one() + v * (T::one() - sg));
                });
                accumulate(grads, *x, gx);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                if rg(*gain) {
                    let gg = (g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(grads, *gain, gg);
                }
                if rg(*bias) {
                    accumulate(grads, *bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if rg(*x) {
                    let gain_row = val(*gain).row(0).to_owned();
                    let n = T::of_usize(xhat.ncols());
                    let mut gx = Array2::zeros(xhat.dim());
                    for r in 0..xhat.nrows() {
                        let dy = &g.row(r) * &gain_row;
                        let xh = xhat.row(r);
                        let mean_dy = dy.sum() / n;
                        let mean_dy_xh = dy.dot(&xh) / n;
                        let is = inv_std[r];
                        Zip::from(gx.row_mut(r))
                            .and(&dy)
                            .and(&xh)
                            .for_each(|o, &d, &h| *o = is * (d - mean_dy - h * mean_dy_xh));
                    }
                    accumulate(grads, *x, gx);
                }
            }
            Op::Mse { pred, target } => {
                let count = T::of_usize(val(*pred).len());
                let scale = g[[0, 0]] * T::of(2.0) / count;
                let diff = val(*pred) - val(*target);
                if rg(*pred) {
                    accumulate(grads, *pred, &diff * scale);
                }
                if rg(*target) {
                    accumulate(grads, *target, &diff * (-scale));
                }
            }
            Op::RowSelect { x, map } => {
                accumulate(grads, *x, map.apply_transpose(g));
            }
            Op::SparseMatMul { x, matrix } => {
                let gx = matrix
                    .transpose_matmul(g.view())
                    .expect("shapes validated when recorded");
                accumulate(grads, *x, gx);
            }
        }
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Array2<T>>], id: usize, g: Array2<T>) {
    match &mut grads[id] {
        Some(existing) => existing.scaled_add(T::one(), &g),
        slot => *slot = Some(g),
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn op_name<T>(op: &Op<T>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::Add { .. } => "add",
        Op::Scale(..) => "scale",
        Op::Concat(_) => "concat-columns",
        Op::Slice { .. } => "slice-columns",
        Op::Relu(_) => "relu",
        Op::Silu(_) => "silu",
        Op::LayerNorm { .. } => "layer-norm",
        Op::Mse { .. } => "mean-squared-error",
        Op::RowSelect { .. } => "row-select",
        Op::SparseMatMul { .. } => "fixed-sparse-matmul",
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Adjoints<'a, T> {
    tape: &'a Tape<T>,
    grads: Vec<Option<Array2<T>>>,
}

impl<T: Scalar> Adjoints<'_, T> {
    /// Gradient with respect to any recorded tensor; zeros when unreached.
    pub fn wrt(&self, t: Tensor) -> Array2<T> {
        self.grads[t.id]
            .clone()
            .unwrap_or_else(|| Array2::zeros(t.shape()))
    }

    /// Gradients for every bound parameter, keyed by name.
    pub fn parameters(&self) -> Gradients<T> {
        let mut out = Gradients::new();
        for (name, id) in &self.tape.params {
            let g = self.grads[*id]
                .clone()
                .unwrap_or_else(|| Array2::zeros(self.tape.nodes[*id].value.dim()));
            out.set(name.clone(), g);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn shape_contracts() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Array2::ones((2, 3))).unwrap();
        let b = tape.constant(Array2::ones((3, 4))).unwrap();
        assert_eq!(tape.matmul(a, b).unwrap().shape(), (2, 4));
        assert!(tape.matmul(b, b).is_err());
        let c = tape.constant(Array2::ones((2, 5))).unwrap();
        assert_eq!(tape.concat_cols(&[a, c]).unwrap().shape(), (2, 8));
        assert!(tape.concat_cols(&[a, b]).is_err());
        assert!(tape.add(a, c).is_err());
        assert!(tape.slice_cols(a, 2, 5).is_err());
    }

    #[test]
    fn relu_values() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(array![[-1.0, 2.0]]).unwrap();
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y), &array![[0.0, 2.0]]);
    }

    #[test]
    fn chain_rule_on_scalar_product() {
        // loss = mse(w·x, y), w=1, x=2, y=0: d/dw = 2·(w·x − y)·x = 8
        let mut tape = Tape::<f64>::new();
        let w = tape.leaf(array![[1.0]]).unwrap();
        let x = tape.constant(array![[2.0]]).unwrap();
        let y = tape.constant(array![[0.0]]).unwrap();
        let wx = tape.matmul(w, x).unwrap();
        let loss = tape.mse(wx, y).unwrap();
        let adj = tape.backward(loss).unwrap();
        assert_eq!(adj.wrt(w), array![[8.0]]);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(array![[3.0]]).unwrap();
        let z = tape.constant(array![[0.0]]).unwrap();
        let loss = tape.mse(x, z).unwrap();
        let adj = tape.backward(loss).unwrap();
        assert_eq!(adj.wrt(x), array![[6.0]]);
    }

    #[test]
    fn unreached_parameters_get_zero() {
        let mut store = ParameterStore::<f64>::new();
        store.insert("a", array![[1.0, 2.0]]).unwrap();
        store.insert("b", array![[3.0]]).unwrap();
        let mut tape = Tape::new();
        let p = tape.bind(&store).unwrap();
        let z = tape.constant(array![[0.0, 0.0]]).unwrap();
        let loss = tape.mse(p.get("a").unwrap(), z).unwrap();
        let grads = tape.backward(loss).unwrap().parameters();
        assert_eq!(grads.get("b").unwrap(), &array![[0.0]]);
        assert_eq!(grads.get("a").unwrap(), &array![[1.0, 2.0]]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(array![[1.0, 2.0]]).unwrap();
        assert!(matches!(tape.backward(x), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn non_finite_values_trip() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(array![[f64::MAX]]).unwrap();
        assert!(matches!(tape.scale(x, 10.0), Err(crate::Error::Numeric(_))));
    }

    #[test]
    fn row_maps() {
        let g = RowMap::gather(4, &[0, 3]).unwrap();
        let s = RowMap::scatter(4, &[0, 3]).unwrap();
        let x = array![[1.0], [9.0], [9.0], [2.0]];
        let sub = g.apply(&x);
        assert_eq!(sub, array![[1.0], [2.0]]);
        assert_eq!(s.apply(&sub), array![[1.0], [0.0], [0.0], [2.0]]);
        let bd = g.block_diagonal(2);
        assert_eq!(bd.n_in(), 8);
        assert_eq!(bd.n_out(), 4);
        assert!(RowMap::gather(2, &[2]).is_err());
    }
}
