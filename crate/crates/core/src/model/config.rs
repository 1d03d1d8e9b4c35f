use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    #[default]
    Silu,
    /// No nonlinearity; used to isolate the linear algebra in tests.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Layer,
    None,
}

/// How a sampled convolution applies `D (S^γ)^k Dᵀ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConvView {
    /// Precomputed reduced shift matrices on the active nodes.
    Reduced,
    /// Zero-pad to the full graph, shift sparsely, then subsample.
    #[default]
    ZeroPad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UGnnConfig {
    /// Number of encoder (and decoder) blocks, B.
    pub depth: usize,
    /// Graph-convolution layers per block, L.
    pub layers_per_block: usize,
    /// Filter taps K_ℓ for each of the L layers.
    pub taps: Vec<usize>,
    /// Shift stride γ.
    pub stride: usize,
    /// Feature widths F_0..F_B.
    pub widths: Vec<usize>,
    /// Active node counts N_0..N_B.
    pub node_counts: Vec<usize>,
    pub activation: Activation,
    pub normalization: Normalization,
    pub conv_view: ConvView,
    /// Conditioning features per node, U (0 for unconditional models).
    pub conditioning_width: usize,
    /// Target features per node, F.
    pub target_width: usize,
}

impl UGnnConfig {
    /// Widths start at `f0` and halve at each depth.
    pub fn halving_widths(f0: usize, depth: usize) -> Vec<usize> {
        (0..=depth).map(|b| (f0 >> b).max(1)).collect()
    }

    /// Node counts from per-level keep ratios, e.g. `[1.0, 0.8, 0.8]` keeps all
    /// nodes at level 1 and 80% at each of the next two levels.
    pub fn node_counts_from_ratios(n0: usize, ratios: &[f64]) -> Vec<usize> {
        let mut counts = vec![n0];
        for r in ratios {
            let prev = *counts.last().expect("nonempty");
            counts.push(((prev as f64 * r).round() as usize).clamp(1, prev));
        }
        counts
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.depth;
        if b == 0 {
            bail!(Argument, "depth must be at least 1");
        }
        if self.layers_per_block == 0 {
            bail!(Argument, "layers_per_block must be at least 1");
        }
        if self.taps.len() != self.layers_per_block {
            bail!(
                Argument,
                "{} filter tap counts for {} layers",
                self.taps.len(),
                self.layers_per_block
            );
        }
        if self.stride == 0 {
            bail!(Argument, "stride must be positive");
        }
        if self.widths.len() != b + 1 || self.node_counts.len() != b + 1 {
            bail!(Argument, "widths and node_counts need depth + 1 = {} entries", b + 1);
        }
        if self.widths.windows(2).any(|w| w[1] >= w[0]) || self.widths[b] == 0 {
            bail!(Argument, "feature widths must be strictly decreasing and positive: {:?}", self.widths);
        }
        if self.widths[0] % 2 != 0 {
            bail!(Argument, "F_0 = {} must be even", self.widths[0]);
        }
        if self.node_counts.windows(2).any(|w| w[1] > w[0]) || self.node_counts[b] == 0 {
            bail!(Argument, "node counts must be non-increasing and positive: {:?}", self.node_counts);
        }
        if self.target_width == 0 {
            bail!(Argument, "target width must be positive");
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.node_counts[0]
    }

    pub fn max_taps(&self) -> usize {
        self.taps.iter().copied().max().unwrap_or(0)
    }
}
