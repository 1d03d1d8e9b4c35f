use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use ugnn::diffusion::{read_ensemble_csv, write_ensemble_csv};
use ugnn::eval::{fit_grw, report_rows, simulate_grw, write_report, MetricAccumulator, MetricMode, ReportRow};
use ugnn::graph::{read_adjacency_csv, write_adjacency_csv, GraphShift};
use ugnn::market::{
    build_fundamentals_graph, day_features, synth_fundamentals, synth_market, window_dataset, Feature, FundamentalsTable, PriceTable, SynthProcess,
};
use ugnn::train::{train_run, Checkpoint, Prepared, RunConfig, SplitSet, TrainedModel};
use ugnn::{Error, Result};

use crate::{EvaluateArgs, GraphArgs, Mode, PlotArgs, Process, SampleArgs, SynthArgs, TrainArgs};

pub const UGNN_LABEL: &str = "U-GNN";
pub const GRW_LABEL: &str = "GRW";

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

impl From<Mode> for MetricMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Cumulative => MetricMode::Cumulative,
            Mode::PerDay => MetricMode::PerDay,
        }
    }
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let fund = synth_fundamentals(a.n_stocks, a.n_indicators, a.n_sectors, a.seed)?;
    if let Some(path) = &a.fundamentals_out {
        fund.write_csv(create(path)?)?;
    }
    let process = match a.process {
        Process::Grw => SynthProcess::Grw { mu: a.mu, sigma: a.sigma },
        Process::GraphVar => SynthProcess::GraphVar { rho: a.rho, sigma: a.sigma, mu: a.mu },
    };
    let shift = match (a.process, &a.graph) {
        (Process::Grw, _) => None,
        (Process::GraphVar, Some(path)) => Some(GraphShift::from_adjacency(read_adjacency_csv(open(path)?)?.matrix.view(), true)?),
        (Process::GraphVar, None) => Some(GraphShift::from_adjacency(build_fundamentals_graph(&fund)?.view(), true)?),
    };
    let table = synth_market(a.n_stocks, a.days, shift.as_ref(), process, a.seed)?;
    table.write_csv(create(&a.out)?)?;
    log::info!("wrote {} days of {} stocks to {}", table.n_days(), table.n_stocks(), a.out.display());
    Ok(())
}

pub fn graph(a: GraphArgs) -> Result<()> {
    let fund = FundamentalsTable::read_csv(open(&a.fundamentals)?)?;
    let adj = build_fundamentals_graph(&fund)?;
    write_adjacency_csv(create(&a.out)?, &adj, Some(&fund.tickers))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(tp) = a.tp {
        cfg.data.t_p = tp;
    }
    if let Some(th) = a.th {
        cfg.data.t_h = th;
    }
    if let Some(m) = a.max_epochs {
        cfg.train.max_epochs = m;
    }
    cfg.validate()?;
    // checkpoints carry absolute data paths so that they can be used from anywhere
    cfg.resolve_paths(&std::env::current_dir()?);
    let snapshot = PathBuf::from(format!("{}.diverged", a.out.display()));
    let ck = train_run(&cfg, Some(&snapshot), |r| {
        let line = format!(
            "epoch {:>6}  lr {:.3e}  train {:.6}  val {:.6}{}",
            r.epoch,
            r.lr,
            r.train_loss,
            r.val_loss,
            if r.improved { "  *" } else { "" }
        );
        if r.epoch % 10 == 0 || r.epoch == 1 {
            log::info!("{line}");
        } else {
            log::debug!("{line}");
        }
    })?;
    log::info!(
        "stopped after {} epochs, best validation loss {:.6} at epoch {}",
        ck.state.epoch,
        ck.state.best_loss,
        ck.state.best_epoch
    );
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    ck.save(&a.out)
}

fn window_file(dir: &Path, id: usize, suffix: &str) -> PathBuf {
    dir.join(format!("window_{id:04}{suffix}.csv"))
}

pub fn sample(a: SampleArgs) -> Result<()> {
    let split: SplitSet = a.split.parse()?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let trained = TrainedModel::from_checkpoint(&ck)?;
    let prepared = Prepared::load(&trained.config)?;
    let windows = prepared.windows(split)?;
    if windows.is_empty() {
        return Err(Error::Data(format!("the {} split has no windows", a.split)));
    }
    let ids: Vec<usize> = match a.window {
        Some(w) if w < windows.len() => vec![w],
        Some(w) => return Err(Error::Argument(format!("window {w} out of range, the split has {}", windows.len()))),
        None => (0..windows.len()).collect(),
    };
    let chosen: Vec<_> = ids.iter().map(|&i| windows[i].clone()).collect();
    let stream_ids: Vec<u64> = ids.iter().map(|&i| i as u64).collect();
    let ensembles = trained.forecast(&chosen, &stream_ids, a.ntraj, a.seed)?;
    fs::create_dir_all(&a.out)?;
    let mut index = create(&a.out.join("index.csv"))?;
    writeln!(index, "window_id,chunk,offset,start,first_target_date")?;
    let t_p = trained.config.data.t_p;
    for ((&id, w), trajs) in ids.iter().zip(&chosen).zip(&ensembles) {
        write_ensemble_csv(create(&window_file(&a.out, id, ""))?, trajs)?;
        write_ensemble_csv(create(&window_file(&a.out, id, ".target"))?, std::slice::from_ref(&w.future))?;
        write_ensemble_csv(create(&window_file(&a.out, id, ".past"))?, &[prepared.past_returns(w)])?;
        // return k ends on price day k + 1
        let date = prepared.table.dates.get(w.origin.start + t_p + 1).cloned().unwrap_or_default();
        writeln!(index, "{id},{},{},{},{date}", w.origin.chunk, w.origin.offset, w.origin.start)?;
    }
    index.flush()?;
    log::info!("sampled {} windows x {} trajectories into {}", ids.len(), a.ntraj, a.out.display());
    Ok(())
}

fn read_single(path: &Path) -> Result<Array2<f64>> {
    let mut v = read_ensemble_csv(open(path)?)?;
    if v.len() != 1 {
        return Err(Error::Data(format!("{} should hold exactly one path", path.display())));
    }
    Ok(v.remove(0))
}

/// Window ids present in a sample directory, ascending.
fn window_ids(dir: &Path) -> Result<Vec<usize>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::Data(format!("cannot read {}: {e}", dir.display())))? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(id) = name.strip_prefix("window_").and_then(|s| s.strip_suffix(".csv")).and_then(|s| s.parse::<usize>().ok()) {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    if ids.is_empty() {
        return Err(Error::Data(format!("no window_XXXX.csv files in {}", dir.display())));
    }
    Ok(ids)
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mode: MetricMode = a.mode.into();
    let rows = match (&a.ensembles, &a.prices) {
        (Some(dir), _) => evaluate_dir(dir, &a, mode)?,
        (None, Some(prices)) => evaluate_prices(prices, &a, mode)?,
        (None, None) => return Err(Error::Argument("pass --ensembles DIR or --prices CSV".into())),
    };
    write_report(create(&a.out)?, &rows)?;
    for r in &rows {
        log::info!("{:<6} {:<5} {:.6e}", r.model, r.metric, r.value);
    }
    Ok(())
}

fn evaluate_dir(dir: &Path, a: &EvaluateArgs, mode: MetricMode) -> Result<Vec<ReportRow>> {
    let mut model = MetricAccumulator::new();
    let mut grw = MetricAccumulator::new();
    let (mut t_p, mut t_h) = (0, 0);
    for id in window_ids(dir)? {
        let trajs = read_ensemble_csv(open(&window_file(dir, id, ""))?)?;
        let target = read_single(&window_file(dir, id, ".target"))?;
        let past = read_single(&window_file(dir, id, ".past"))?;
        t_p = past.ncols();
        t_h = target.ncols();
        model.add(&trajs, &target, mode, a.alpha)?;
        let params = fit_grw(past.view())?;
        let baseline = simulate_grw(&params, t_h, a.ntraj.unwrap_or(trajs.len()), a.seed, id as u64)?;
        grw.add(&baseline, &target, mode, a.alpha)?;
    }
    let mut rows = report_rows(UGNN_LABEL, t_p, t_h, &model.finish()?);
    rows.extend(report_rows(GRW_LABEL, t_p, t_h, &grw.finish()?));
    Ok(rows)
}

fn evaluate_prices(prices: &Path, a: &EvaluateArgs, mode: MetricMode) -> Result<Vec<ReportRow>> {
    let table = PriceTable::read_csv(open(prices)?)?;
    let (returns, features) = day_features(&table, &[Feature::LogReturn])?;
    let windows = window_dataset(returns.view(), features.view(), 0..returns.nrows(), 0, a.tp, a.th, a.window_stride)?;
    if windows.is_empty() {
        return Err(Error::Data("series is too short for a single window".into()));
    }
    let mut grw = MetricAccumulator::new();
    for (id, w) in windows.iter().enumerate() {
        let params = fit_grw(w.past.view())?;
        let trajs = simulate_grw(&params, a.th, a.ntraj.unwrap_or(20), a.seed, id as u64)?;
        grw.add(&trajs, &w.future, mode, a.alpha)?;
    }
    Ok(report_rows(GRW_LABEL, a.tp, a.th, &grw.finish()?))
}

pub fn plot(a: PlotArgs) -> Result<()> {
    let trajs = read_ensemble_csv(open(&a.ensemble)?)?;
    let target_path = a.target.clone().or_else(|| {
        let s = a.ensemble.to_string_lossy();
        let p = PathBuf::from(format!("{}.target.csv", s.strip_suffix(".csv").unwrap_or(&s)));
        p.exists().then_some(p)
    });
    let target = target_path.map(|p| read_single(&p)).transpose()?;
    let mode: MetricMode = a.mode.into();
    let svg = crate::plot::render(&trajs, target.as_ref(), &a.nodes, mode)?;
    let mut out = create(&a.out)?;
    out.write_all(svg.as_bytes())?;
    out.flush()?;
    Ok(())
}
