//! Node selection, nested sampling matrices and zero-padding.

use std::fmt;

use ndarray::{Array2, ArrayView2};

use super::shift::GraphShift;
use crate::error::{bail, Result};
use crate::scalar::Scalar;

/// Binary fat selection matrix stored as its ordered kept indices.
///
/// Row `i` has its single one at column `kept[i]`; `kept` is strictly
/// increasing, so every column holds at most one one.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SelectionMatrix {
    n_in: usize,
    kept: Vec<usize>,
}

impl SelectionMatrix {
    pub fn new(n_in: usize, kept: Vec<usize>) -> Result<Self> {
        if kept.is_empty() {
            bail!(Argument, "selection must keep at least one node");
        }
        if kept.windows(2).any(|w| w[0] >= w[1]) {
            bail!(Structural, "kept indices must be strictly increasing");
        }
        if let Some(&last) = kept.last() {
            if last >= n_in {
                bail!(Structural, "kept index {last} out of range for {n_in} nodes");
            }
        }
        Ok(Self { n_in, kept })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_in: n,
            kept: (0..n).collect(),
        }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.kept.len()
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn is_identity(&self) -> bool {
        self.n_in == self.kept.len()
    }

    pub fn to_dense<T: Scalar>(&self) -> Array2<T> {
        let mut out = Array2::zeros((self.n_out(), self.n_in));
        for (i, &j) in self.kept.iter().enumerate() {
            out[[i, j]] = T::one();
        }
        out
    }

    /// `C · X`: extract kept rows.
    pub fn select<T: Scalar>(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if x.nrows() != self.n_in {
            bail!(Structural, "select expects {} rows, got {}", self.n_in, x.nrows());
        }
        let mut out = Array2::zeros((self.n_out(), x.ncols()));
        for (i, &j) in self.kept.iter().enumerate() {
            out.row_mut(i).assign(&x.row(j));
        }
        Ok(out)
    }

    /// `Cᵀ · X`: place rows back at kept indices, zeros elsewhere.
    pub fn lift<T: Scalar>(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if x.nrows() != self.n_out() {
            bail!(Structural, "lift expects {} rows, got {}", self.n_out(), x.nrows());
        }
        let mut out = Array2::zeros((self.n_in, x.ncols()));
        for (i, &j) in self.kept.iter().enumerate() {
            out.row_mut(j).assign(&x.row(i));
        }
        Ok(out)
    }

    /// Parses the single-line form written by `Display`.
    pub fn parse_line(line: &str, n_in: usize) -> Result<Self> {
        let kept = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|e| crate::Error::Data(format!("bad kept index {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n_in, kept)
    }
}

impl fmt::Display for SelectionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.kept.iter().map(|k| k.to_string()).collect();
        f.write_str(&parts.join(" "))
    }
}

/// Selects `n_keep` nodes by repeatedly dropping the one with the smallest
/// weighted degree. Degrees are computed once; ties drop the larger index.
pub fn select_by_degree<T: Scalar>(shift: &GraphShift<T>, n_keep: usize) -> Result<SelectionMatrix> {
    let degrees = shift.degrees();
    select_by_scores(&degrees, n_keep)
}

fn select_by_scores<T: Scalar>(degrees: &[T], n_keep: usize) -> Result<SelectionMatrix> {
    let n = degrees.len();
    if n_keep == 0 || n_keep > n {
        bail!(Argument, "n_keep = {n_keep} must lie in [1, {n}]");
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        degrees[a]
            .partial_cmp(&degrees[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.cmp(&a))
    });
    let mut dropped = vec![false; n];
    for &i in &order[..n - n_keep] {
        dropped[i] = true;
    }
    let kept = (0..n).filter(|&i| !dropped[i]).collect();
    SelectionMatrix::new(n, kept)
}

/// Product of the per-level selections, tracked as original-graph indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NestedSampler {
    depth: usize,
    selector: SelectionMatrix,
}

impl NestedSampler {
    pub fn identity(n: usize) -> Self {
        Self {
            depth: 0,
            selector: SelectionMatrix::identity(n),
        }
    }

    /// Sampler keeping an arbitrary (sorted) set of original nodes.
    pub fn from_kept(depth: usize, n0: usize, kept: Vec<usize>) -> Result<Self> {
        Ok(Self {
            depth,
            selector: SelectionMatrix::new(n0, kept)?,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn selector(&self) -> &SelectionMatrix {
        &self.selector
    }

    pub fn n_out(&self) -> usize {
        self.selector.n_out()
    }

    pub fn n_original(&self) -> usize {
        self.selector.n_in()
    }

    pub fn kept(&self) -> &[usize] {
        self.selector.kept()
    }
}

/// `D_b = C_b ⋯ C_1`. An empty list yields the identity at depth 0.
pub fn compose_nested(n0: usize, selections: &[SelectionMatrix]) -> Result<NestedSampler> {
    let mut kept: Vec<usize> = (0..n0).collect();
    for (level, c) in selections.iter().enumerate() {
        if c.n_in() != kept.len() {
            bail!(
                Structural,
                "selection at level {} expects {} inputs, previous level has {}",
                level + 1,
                c.n_in(),
                kept.len()
            );
        }
        kept = c.kept().iter().map(|&i| kept[i]).collect();
    }
    NestedSampler::from_kept(selections.len(), n0, kept)
}

/// `Dᵀ X`: lift a depth-b signal to the original node set.
pub fn zero_pad<T: Scalar>(sampler: &NestedSampler, x_sub: ArrayView2<'_, T>) -> Result<Array2<T>> {
    sampler.selector.lift(x_sub)
}

/// `D X`: keep only the depth-b rows.
pub fn downsample<T: Scalar>(sampler: &NestedSampler, x_full: ArrayView2<'_, T>) -> Result<Array2<T>> {
    sampler.selector.select(x_full)
}

/// `D (S^γ)^k Dᵀ` via γ·k sparse shifts of the columns of `Dᵀ`.
pub fn reduced_shift<T: Scalar>(
    sampler: &NestedSampler,
    shift: &GraphShift<T>,
    gamma: usize,
    k: usize,
) -> Result<Array2<T>> {
    if gamma == 0 {
        bail!(Argument, "stride gamma must be positive");
    }
    if sampler.n_original() != shift.n_nodes() {
        bail!(
            Structural,
            "sampler spans {} nodes, shift has {}",
            sampler.n_original(),
            shift.n_nodes()
        );
    }
    let nb = sampler.n_out();
    let eye = Array2::<T>::eye(nb);
    let mut cols = zero_pad(sampler, eye.view())?;
    for _ in 0..gamma * k {
        cols = shift.matrix().matmul(cols.view())?;
    }
    downsample(sampler, cols.view())
}

/// One pooling level: the selection `C_b` relative to the previous level and
/// the nested sampler `D_b` relative to the original graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub select: SelectionMatrix,
    pub nested: NestedSampler,
}

/// Nested samplers for every depth `0..=B`. `levels[0]` is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerHierarchy {
    levels: Vec<Level>,
}

impl SamplerHierarchy {
    /// Degree-based hierarchy. Level b keeps `node_counts[b]` nodes; degrees
    /// are taken on the shift induced by the nodes surviving level b−1.
    pub fn by_degree<T: Scalar>(shift: &GraphShift<T>, node_counts: &[usize]) -> Result<Self> {
        let n0 = shift.n_nodes();
        if node_counts.first() != Some(&n0) {
            bail!(Argument, "node_counts must start with N = {n0}");
        }
        let mut selections = Vec::new();
        let mut kept: Vec<usize> = (0..n0).collect();
        for &nb in &node_counts[1..] {
            let induced = shift.induced(&kept);
            let degrees: Vec<T> = (0..induced.n_rows())
                .map(|r| induced.row(r).map(|(_, v)| v).sum())
                .collect();
            let c = select_by_scores(&degrees, nb)
                .map_err(|e| crate::Error::Argument(format!("node counts must be non-increasing: {e}")))?;
            kept = c.kept().iter().map(|&i| kept[i]).collect();
            selections.push(c);
        }
        Self::from_selections(n0, selections)
    }

    pub fn from_selections(n0: usize, selections: Vec<SelectionMatrix>) -> Result<Self> {
        let mut levels = vec![Level {
            select: SelectionMatrix::identity(n0),
            nested: NestedSampler::identity(n0),
        }];
        for b in 1..=selections.len() {
            let nested = compose_nested(n0, &selections[..b])?;
            levels.push(Level {
                select: selections[b - 1].clone(),
                nested,
            });
        }
        Ok(Self { levels })
    }

    /// Builds the hierarchy from the kept original-node sets of depths 1..=B.
    /// Each set must be contained in the previous one.
    pub fn from_nested_sets(n0: usize, sets: &[Vec<usize>]) -> Result<Self> {
        let mut prev: Vec<usize> = (0..n0).collect();
        let mut selections = Vec::with_capacity(sets.len());
        for set in sets {
            let mut local = Vec::with_capacity(set.len());
            for node in set {
                match prev.binary_search(node) {
                    Ok(pos) => local.push(pos),
                    Err(_) => bail!(Structural, "node {node} not active at the previous level"),
                }
            }
            selections.push(SelectionMatrix::new(prev.len(), local)?);
            prev = set.clone();
        }
        Self::from_selections(n0, selections)
    }

    pub fn identity(n0: usize, depth: usize) -> Self {
        Self::from_selections(n0, vec![SelectionMatrix::identity(n0); depth])
            .expect("identity selections always chain")
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn n_original(&self) -> usize {
        self.levels[0].nested.n_original()
    }

    pub fn level(&self, b: usize) -> &Level {
        &self.levels[b]
    }

    pub fn node_counts(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.nested.n_out()).collect()
    }
}
