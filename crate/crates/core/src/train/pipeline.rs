use std::path::Path;

use ndarray::{Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::trainer::{EpochReport, Sample, Trainer};
use crate::autodiff::ParameterStore;
use crate::diffusion::{sample_windows_with_ids, NoiseSchedule, DEFAULT_SAMPLE_BATCH};
use crate::error::{bail, Result};
use crate::graph::{read_adjacency_csv, GraphShift, SamplerHierarchy};
use crate::market::{build_fundamentals_graph, chunk_split, day_features, windows_for, ChunkSplit, FundamentalsTable, PriceTable, Standardizer, WindowPair};
use crate::model::{UGnn, UGnnConfig};

const INIT_SALT: u64 = 0x1A17_C0DE_0000_0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitSet {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitSet {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            other => Err(crate::Error::Argument(format!("unknown split {other}, expected train, val or test"))),
        }
    }
}

/// Returns, features, graph and split of one experiment.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub table: PriceTable,
    /// days × N
    pub returns: Array2<f64>,
    /// days × N × U
    pub features: Array3<f64>,
    pub adjacency: Array2<f64>,
    pub split: ChunkSplit,
    pub feature_norm: Standardizer,
    pub return_norm: Standardizer,
}

fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>> {
    let f = std::fs::File::open(path).map_err(|e| crate::Error::Data(format!("cannot open {}: {e}", path.display())))?;
    Ok(std::io::BufReader::new(f))
}

/// Reorders a labeled node set to `tickers`.
fn align(labels: &[String], tickers: &[String], what: &str) -> Result<Vec<usize>> {
    tickers
        .iter()
        .map(|t| {
            labels
                .iter()
                .position(|l| l == t)
                .ok_or_else(|| crate::Error::Data(format!("{what} has no entry for ticker {t}")))
        })
        .collect()
}

impl Prepared {
    /// Loads every input named in `config` (paths already resolved).
    pub fn load(config: &RunConfig) -> Result<Self> {
        let table = PriceTable::read_csv(open(&config.data.prices)?)?;
        let n = table.n_stocks();
        let adjacency = if let Some(path) = &config.data.graph {
            let adj = read_adjacency_csv(open(path)?)?;
            match &adj.labels {
                Some(labels) => {
                    let order = align(labels, &table.tickers, "graph")?;
                    Array2::from_shape_fn((n, n), |(i, j)| adj.matrix[[order[i], order[j]]])
                }
                None => adj.matrix,
            }
        } else if let Some(path) = &config.data.fundamentals {
            let fund = FundamentalsTable::read_csv(open(path)?)?;
            let order = align(&fund.tickers, &table.tickers, "fundamentals")?;
            let aligned = FundamentalsTable {
                tickers: table.tickers.clone(),
                names: fund.names.clone(),
                indicators: fund.indicators.select(Axis(0), &order),
            };
            build_fundamentals_graph(&aligned)?
        } else {
            bail!(Config, "set data.fundamentals or data.graph");
        };
        Self::from_parts(config.clone(), table, adjacency)
    }

    pub fn from_parts(config: RunConfig, table: PriceTable, adjacency: Array2<f64>) -> Result<Self> {
        let n = table.n_stocks();
        if adjacency.dim() != (n, n) {
            bail!(Data, "graph is {:?} but there are {n} tickers", adjacency.dim());
        }
        let (returns, features) = day_features(&table, &config.data.features)?;
        let d = &config.data;
        let split = chunk_split(returns.nrows(), d.chunk_len, (d.split[0], d.split[1], d.split[2]), d.split_seed)?;
        let train_days = split.train_days();
        let feature_norm = Standardizer::fit(features.view(), &train_days)?;
        let return_norm = Standardizer::fit(returns.view().insert_axis(Axis(2)), &train_days)?;
        Ok(Self {
            config,
            table,
            returns,
            features,
            adjacency,
            split,
            feature_norm,
            return_norm,
        })
    }

    pub fn chunk_ids(&self, set: SplitSet) -> &[usize] {
        match set {
            SplitSet::Train => &self.split.train,
            SplitSet::Val => &self.split.val,
            SplitSet::Test => &self.split.test,
        }
    }

    pub fn windows(&self, set: SplitSet) -> Result<Vec<WindowPair>> {
        let d = &self.config.data;
        windows_for(self.returns.view(), self.features.view(), &self.split, self.chunk_ids(set), d.t_p, d.t_h, d.window_stride)
    }

    /// Raw log returns of the past days of `w` (N × T_p).
    pub fn past_returns(&self, w: &WindowPair) -> Array2<f64> {
        let start = w.origin.start;
        self.returns.slice(ndarray::s![start..start + self.config.data.t_p, ..]).t().to_owned()
    }

    pub fn samples(&self, windows: &[WindowPair]) -> Result<Vec<Sample<f64>>> {
        windows
            .iter()
            .map(|w| {
                Ok(Sample {
                    x0: self.return_norm.standardize(&w.future)?,
                    u: self.feature_norm.standardize(&w.past)?,
                })
            })
            .collect()
    }
}

pub fn model_config(cfg: &RunConfig, n_nodes: usize) -> UGnnConfig {
    let m = &cfg.model;
    let taps = if m.taps.len() == 1 { vec![m.taps[0]; m.layers_per_block] } else { m.taps.clone() };
    UGnnConfig {
        depth: m.depth,
        layers_per_block: m.layers_per_block,
        taps,
        stride: m.stride,
        widths: UGnnConfig::halving_widths(m.f0, m.depth),
        node_counts: UGnnConfig::node_counts_from_ratios(n_nodes, &m.keep_ratios),
        activation: m.activation,
        normalization: m.normalization,
        conv_view: m.conv_view,
        conditioning_width: cfg.data.t_p * cfg.data.features.len(),
        target_width: cfg.data.t_h,
    }
}

pub fn build_model(cfg: &RunConfig, adjacency: &Array2<f64>) -> Result<UGnn<f64>> {
    let shift = GraphShift::from_adjacency(adjacency.view(), cfg.data.normalize_shift)?;
    UGnn::with_degree_selection(model_config(cfg, adjacency.nrows()), shift)
}

/// Trains the experiment described by `cfg`. On divergence the last state is
/// written to `snapshot` (when given) before the error is returned.
pub fn train_run(cfg: &RunConfig, snapshot: Option<&Path>, on_epoch: impl FnMut(&EpochReport)) -> Result<Checkpoint> {
    let prepared = Prepared::load(cfg)?;
    train_prepared(&prepared, snapshot, on_epoch)
}

pub fn train_prepared(prepared: &Prepared, snapshot: Option<&Path>, on_epoch: impl FnMut(&EpochReport)) -> Result<Checkpoint> {
    let cfg = &prepared.config;
    let model = build_model(cfg, &prepared.adjacency)?;
    let schedule = NoiseSchedule::build(cfg.diffusion.kind(), cfg.diffusion.steps)?;
    let train = prepared.samples(&prepared.windows(SplitSet::Train)?)?;
    let val = prepared.samples(&prepared.windows(SplitSet::Val)?)?;
    log::info!("{} training and {} validation windows", train.len(), val.len());
    let init = model.init_params(&mut ChaCha8Rng::seed_from_u64(cfg.train.seed ^ INIT_SALT));
    let mut trainer = Trainer::new(&model, &schedule, cfg.train.clone(), &train, &val, init)?;
    let text = cfg.to_toml()?;
    if let Err(e) = trainer.fit(on_epoch) {
        if let (Some(path), crate::Error::Numeric(_)) = (snapshot, &e) {
            let mut ck = trainer.checkpoint(text);
            attach_model(&mut ck, prepared, &model);
            ck.save(path)?;
            log::error!("diagnostic snapshot written to {}", path.display());
        }
        return Err(e);
    }
    let mut ck = trainer.checkpoint(text);
    attach_model(&mut ck, prepared, &model);
    Ok(ck)
}

fn row(values: impl IntoIterator<Item = f64>) -> Array2<f64> {
    let v: Vec<f64> = values.into_iter().collect();
    Array2::from_shape_vec((1, v.len()), v).expect("row shape")
}

fn attach_model(ck: &mut Checkpoint, prepared: &Prepared, model: &UGnn<f64>) {
    ck.insert("graph/adjacency", prepared.adjacency.clone());
    for b in 1..=model.hierarchy().depth() {
        let kept = model.hierarchy().level(b).nested.kept();
        ck.insert(format!("graph/kept/{b}"), row(kept.iter().map(|&k| k as f64)));
    }
    ck.insert("norm/feature_mean", prepared.feature_norm.mean.clone());
    ck.insert("norm/feature_std", prepared.feature_norm.std.clone());
    ck.insert("norm/return_mean", prepared.return_norm.mean.clone());
    ck.insert("norm/return_std", prepared.return_norm.std.clone());
}

/// A trained model restored from a checkpoint, ready to forecast.
pub struct TrainedModel {
    pub config: RunConfig,
    pub model: UGnn<f64>,
    pub params: ParameterStore<f64>,
    pub schedule: NoiseSchedule<f64>,
    pub feature_norm: Standardizer,
    pub return_norm: Standardizer,
}

impl TrainedModel {
    /// Uses the best-validation parameters.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = RunConfig::from_toml(&ck.config)?;
        let adjacency = ck.get("graph/adjacency")?.clone();
        let n = adjacency.nrows();
        let shift = GraphShift::from_adjacency(adjacency.view(), config.data.normalize_shift)?;
        let sets = (1..=config.model.depth)
            .map(|b| {
                ck.get(&format!("graph/kept/{b}")).map(|a| a.iter().map(|&v| v as usize).collect::<Vec<usize>>())
            })
            .collect::<Result<Vec<_>>>()?;
        let hierarchy = SamplerHierarchy::from_nested_sets(n, &sets)?;
        let model = UGnn::new(model_config(&config, n), shift, hierarchy)?;
        let params = ck.store("best")?;
        for (name, shape) in model.parameter_shapes() {
            match params.get(&name) {
                Some(p) if p.dim() == shape => {}
                _ => bail!(Data, "checkpoint parameter {name} is missing or has the wrong shape"),
            }
        }
        Ok(Self {
            schedule: NoiseSchedule::build(config.diffusion.kind(), config.diffusion.steps)?,
            feature_norm: Standardizer {
                mean: ck.get("norm/feature_mean")?.clone(),
                std: ck.get("norm/feature_std")?.clone(),
            },
            return_norm: Standardizer {
                mean: ck.get("norm/return_mean")?.clone(),
                std: ck.get("norm/return_std")?.clone(),
            },
            config,
            model,
            params,
        })
    }

    /// `n_traj` sampled future log-return paths (N × T_h) per window.
    pub fn forecast(&self, windows: &[WindowPair], ids: &[u64], n_traj: usize, seed: u64) -> Result<Vec<Vec<Array2<f64>>>> {
        let conditions = windows.iter().map(|w| self.feature_norm.standardize(&w.past)).collect::<Result<Vec<_>>>()?;
        let sampled = sample_windows_with_ids(
            &self.model,
            &self.params,
            &conditions,
            ids,
            &self.schedule,
            self.config.train.objective,
            n_traj,
            seed,
            DEFAULT_SAMPLE_BATCH,
        )?;
        sampled
            .into_iter()
            .map(|trajs| trajs.iter().map(|t| self.return_norm.destandardize(t)).collect())
            .collect()
    }
}
