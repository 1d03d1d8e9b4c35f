//! Sparse graph-shift algebra: shift operators, degree-based node selection,
//! nested sampling matrices, zero-padding and reduced shifts.

mod io;
mod sampling;
mod shift;
mod sparse;

pub use io::{read_adjacency_csv, write_adjacency_csv, LabeledAdjacency};
pub use sampling::{
    compose_nested, downsample, reduced_shift, select_by_degree, zero_pad, Level, NestedSampler,
    SamplerHierarchy, SelectionMatrix,
};
pub use shift::{spectral_norm, GraphShift};
pub use sparse::CsrMatrix;
