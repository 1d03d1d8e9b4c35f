//! Price ingestion, return features, windowing and synthetic markets.

mod returns;
mod synth;
mod table;
mod windows;

pub use returns::{build_fundamentals_graph, day_features, log_returns, prices_from_returns, Feature};
pub use synth::{business_days, synth_fundamentals, synth_market, synth_returns, ticker_names, SynthProcess, INITIAL_PRICE};
pub use table::{FundamentalsTable, PriceTable};
pub use windows::{chunk_split, window_dataset, windows_for, ChunkSplit, Standardizer, WindowOrigin, WindowPair, STD_FLOOR};
