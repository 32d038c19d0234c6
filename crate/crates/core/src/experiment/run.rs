//! Sweep execution and CSV emission.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Experiment, PumpSpec, SweepConfig};
use super::verify::{run_gates, VerifyOptions};
use crate::error::{Error, Result};
use crate::export::{write_transfer_1n, write_transfer_mn, GridInfo};
use crate::grid::{FrequencyGrid, GateParams};
use crate::kernel1n::{asymptotic_coeffs, build_kernels, lossy_coeffs, peak_lossy_ce, transfer_matrix};
use crate::kernelmn::{transfer_mn, MnSolver};
use crate::linalg::CMatrix;
use crate::metrics::{
    config_hash, metrics_1n, metrics_from_kernels, metrics_streamed, sf_indistinguishability, MetricsReport,
};
use crate::pumps::MultiPump;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Directory that relative pump CSV paths resolve against.
    pub config_dir: PathBuf,
    pub full: bool,
    pub verify: bool,
    pub stream: bool,
    /// Write measured wall time; with `false` every `runtime_ms` is 0 and
    /// output is byte-identical between runs.
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("."),
            config_dir: PathBuf::from("."),
            full: false,
            verify: false,
            stream: false,
            timing: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MetricRow {
    pub r: f64,
    pub metric_name: String,
    pub value: f64,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LossRow {
    pub iota_over_gamma: f64,
    pub peak_ce_analytic: f64,
    pub peak_ce_numeric: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub rows: usize,
}

#[derive(Serialize)]
struct RunSidecar<'a> {
    schema_version: u32,
    experiment: &'static str,
    grid: GridInfo,
    config: &'a SweepConfig,
    config_hashes: Vec<String>,
    files: Vec<String>,
}

/// Rates for ratio `r` under the config's coupling rule.
pub fn params_for(cfg: &SweepConfig, r: f64, iota_over_gamma: f64, grid: &FrequencyGrid) -> Result<GateParams> {
    let gamma = r * grid.bin_spacing();
    let base = GateParams::new(gamma, 0.0, iota_over_gamma * gamma, grid.window())?;
    Ok(if cfg.matched_coupling {
        base.matched()
    } else {
        let x = cfg.eta_over_sqrt_gamma_t.unwrap_or(1.0);
        base.with_eta(x * (gamma * grid.window()).sqrt())
    })
}

fn elapsed_ms(start: Instant, timing: bool) -> f64 {
    if timing {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
    ))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_sidecar(path: &Path, sidecar: &RunSidecar) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, sidecar)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

fn build_pumps(cfg: &SweepConfig, grid: &FrequencyGrid, opts: &RunOptions) -> Result<Vec<(String, MultiPump)>> {
    cfg.pumps
        .iter()
        .map(|spec| Ok((spec.label(), spec.build(grid, &opts.config_dir)?)))
        .collect()
}

/// Runs one configured sweep and writes its artifacts into `opts.out_dir`.
pub fn run(cfg: &SweepConfig, opts: &RunOptions) -> Result<RunSummary> {
    cfg.validate()?;
    if opts.verify {
        let gates = run_gates(&VerifyOptions::default());
        if let Some(bad) = gates.iter().find(|g| !g.passed) {
            return Err(Error::Oracle(format!(
                "verification gate {} failed: residual {:.3e} above {:.1e}",
                bad.name, bad.residual, bad.tolerance
            )));
        }
    }
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| Error::Io(format!("{}: {e}", opts.out_dir.display())))?;
    let grid = cfg.grid_spec(opts.full).build()?;
    match cfg.experiment {
        Experiment::TransferMap => run_transfer_map(cfg, &grid, opts),
        Experiment::Metrics1n | Experiment::MetricsMn => run_metrics(cfg, &grid, opts),
        Experiment::LossPeakCe => run_loss(cfg, &grid, opts),
        Experiment::Sensitivity => run_sensitivity(cfg, &grid, opts),
        Experiment::SynthCheck => run_synth(cfg, &grid, opts),
    }
}

fn finish(
    cfg: &SweepConfig,
    grid: &FrequencyGrid,
    opts: &RunOptions,
    mut files: Vec<PathBuf>,
    hashes: Vec<String>,
    rows: usize,
) -> Result<RunSummary> {
    let path = opts.out_dir.join(format!("{}.json", cfg.output));
    let sidecar = RunSidecar {
        schema_version: cfg.schema_version,
        experiment: cfg.experiment.name(),
        grid: grid.into(),
        config: cfg,
        config_hashes: hashes,
        files: files
            .iter()
            .filter_map(|p| p.file_name().map(|s| s.to_string_lossy().into_owned()))
            .collect(),
    };
    write_sidecar(&path, &sidecar)?;
    files.push(path);
    Ok(RunSummary { files, rows })
}

fn run_transfer_map(cfg: &SweepConfig, grid: &FrequencyGrid, opts: &RunOptions) -> Result<RunSummary> {
    let pumps = build_pumps(cfg, grid, opts)?;
    let rs = cfg.r_values();
    let points: Vec<(usize, usize)> = (0..pumps.len())
        .flat_map(|p| (0..rs.len()).map(move |i| (p, i)))
        .collect();
    let results = points
        .par_iter()
        .map(|&(p, i)| -> Result<(MetricRow, Vec<PathBuf>, String)> {
            let (label, pump) = &pumps[p];
            let start = Instant::now();
            let params = params_for(cfg, rs[i], cfg.loss_ratio(), grid)?;
            let stem = format!("{}_{label}_r{i}", cfg.output);
            let (residual, files) = if pump.channels() == 1 {
                let t = transfer_matrix(&build_kernels(&params, pump.envelope(0))?);
                (
                    t.isometry_residual(),
                    write_transfer_1n(&opts.out_dir, &stem, &t, &params, pump)?,
                )
            } else {
                let steps = cfg.steps_per_sample.map(|s| s * grid.n_times());
                let t = transfer_mn(&MnSolver::new(&params, pump, steps)?, true);
                let res = t.isometry_residual().unwrap_or(f64::NAN);
                (res, write_transfer_mn(&opts.out_dir, &stem, &t, &params, pump)?)
            };
            let row = MetricRow {
                r: rs[i],
                metric_name: format!("{label}_isometry_residual"),
                value: residual,
                runtime_ms: elapsed_ms(start, opts.timing),
            };
            Ok((row, files, config_hash(&params, grid, pump)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut files = Vec::new();
    let mut hashes = Vec::new();
    for (row, f, h) in results {
        rows.push(row);
        files.extend(f);
        hashes.push(h);
    }
    let path = opts.out_dir.join(format!("{}.csv", cfg.output));
    write_rows(&path, &rows)?;
    files.push(path);
    finish(cfg, grid, opts, files, hashes, rows.len())
}

fn metrics_for(
    cfg: &SweepConfig,
    params: &GateParams,
    pump: &MultiPump,
    grid: &FrequencyGrid,
    stream: bool,
) -> Result<MetricsReport> {
    match cfg.experiment {
        Experiment::Metrics1n => {
            if pump.channels() != 1 {
                return Err(Error::Dimension(format!(
                    "metrics_1n needs single-channel pumps, got {} channels",
                    pump.channels()
                )));
            }
            metrics_1n(&build_kernels(params, pump.envelope(0))?)
        }
        _ => {
            let steps = cfg.steps_per_sample.map(|s| s * grid.n_times());
            let solver = MnSolver::new(params, pump, steps)?;
            if stream {
                metrics_streamed(&solver)
            } else {
                let (nt, m) = (grid.n_times(), pump.channels());
                let mut gs = vec![CMatrix::zeros(nt, nt); m];
                solver.signal_columns(false, |b, col, _| {
                    for a in 0..nt {
                        for k in 0..m {
                            gs[k][(a, b)] = col[a * m + k];
                        }
                    }
                });
                metrics_from_kernels(grid, pump, &gs, config_hash(params, grid, pump))
            }
        }
    }
}

fn run_metrics(cfg: &SweepConfig, grid: &FrequencyGrid, opts: &RunOptions) -> Result<RunSummary> {
    let pumps = build_pumps(cfg, grid, opts)?;
    let rs = cfg.r_values();
    let points: Vec<(usize, usize)> = (0..pumps.len())
        .flat_map(|p| (0..rs.len()).map(move |i| (p, i)))
        .collect();
    let reports = points
        .par_iter()
        .map(|&(p, i)| -> Result<(MetricsReport, f64)> {
            let start = Instant::now();
            let params = params_for(cfg, rs[i], cfg.loss_ratio(), grid)?;
            let report = metrics_for(cfg, &params, &pumps[p].1, grid, opts.stream)?;
            Ok((report, elapsed_ms(start, opts.timing)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut families: [(&str, Vec<MetricRow>); 3] = [("fm", vec![]), ("pc", vec![]), ("hd", vec![])];
    let mut hashes = Vec::new();
    for (&(p, i), (report, ms)) in points.iter().zip(&reports) {
        let label = &pumps[p].0;
        for (name, value) in report.entries() {
            let (family, kind) = name.split_once('_').expect("metric names are family_kind");
            let rows = &mut families.iter_mut().find(|(f, _)| *f == family).expect("known family").1;
            rows.push(MetricRow {
                r: rs[i],
                metric_name: format!("{label}_{kind}"),
                value,
                runtime_ms: *ms,
            });
        }
        hashes.push(report.config_hash.clone());
    }
    let mut files = Vec::new();
    let mut count = 0;
    for (family, rows) in &families {
        let path = opts.out_dir.join(format!("{}_{family}.csv", cfg.output));
        write_rows(&path, rows)?;
        files.push(path);
        count += rows.len();
    }
    finish(cfg, grid, opts, files, hashes, count)
}

/// Maximises `f` on `[lo, hi]` by golden-section search; returns
/// `(argmax, max)`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Peak target-mode CE over the coupling, found numerically.
pub fn numeric_peak_ce(iota_over_gamma: f64, gamma: f64, window: f64) -> Result<f64> {
    let base = GateParams::new(gamma, 0.0, iota_over_gamma * gamma, window)?;
    let reach = 4.0 * (base.total_decay() * window).sqrt();
    let ce = |eta: f64| {
        lossy_coeffs(&base.with_eta(eta))
            .map(|(mu, _, _)| mu * mu)
            .unwrap_or(0.0)
    };
    Ok(golden_max(ce, 0.0, reach, 1e-10 * reach).1)
}

fn run_loss(cfg: &SweepConfig, grid: &FrequencyGrid, opts: &RunOptions) -> Result<RunSummary> {
    let gamma = cfg.r_values().first().copied().unwrap_or(0.1) * grid.bin_spacing();
    let rows = cfg
        .iota_over_gamma
        .iter()
        .map(|&x| {
            Ok(LossRow {
                iota_over_gamma: x,
                peak_ce_analytic: peak_lossy_ce(x),
                peak_ce_numeric: numeric_peak_ce(x, gamma, grid.window())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let path = opts.out_dir.join(format!("{}.csv", cfg.output));
    write_rows(&path, &rows)?;
    finish(cfg, grid, opts, vec![path], Vec::new(), rows.len())
}

fn run_sensitivity(cfg: &SweepConfig, grid: &FrequencyGrid, opts: &RunOptions) -> Result<RunSummary> {
    let rows = cfg
        .r_values()
        .par_iter()
        .map(|&r| {
            let start = Instant::now();
            let params = params_for(cfg, r, cfg.loss_ratio(), grid)?;
            let value = sf_indistinguishability(&params, grid)?;
            Ok(MetricRow {
                r,
                metric_name: "sf_indistinguishability".into(),
                value,
                runtime_ms: elapsed_ms(start, opts.timing),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let path = opts.out_dir.join(format!("{}.csv", cfg.output));
    write_rows(&path, &rows)?;
    finish(cfg, grid, opts, vec![path], Vec::new(), rows.len())
}

/// Largest `|g̃_s,k(0, l) - μ'₀·(-U_kl)|` over channels and input bins.
pub fn synthesis_error(transfer: &[CMatrix], target: &CMatrix, mu0: f64, grid: &FrequencyGrid) -> f64 {
    let centre = grid.position(0).expect("centre bin");
    let mut worst: f64 = 0.0;
    for (k, g) in transfer.iter().enumerate() {
        for l in 0..grid.n_bins() {
            worst = worst.max((g[(centre, l)] + target[(k, l)] * mu0).norm());
        }
    }
    worst
}

fn run_synth(cfg: &SweepConfig, grid: &FrequencyGrid, opts: &RunOptions) -> Result<RunSummary> {
    let rs = cfg.r_values();
    let targets: Vec<(String, MultiPump, CMatrix)> = cfg
        .pumps
        .iter()
        .map(|spec: &PumpSpec| {
            let u = spec
                .target(grid)?
                .ok_or_else(|| Error::Parse(format!("synth_check pump {} has no target unitary", spec.label())))?;
            Ok((spec.label(), spec.build(grid, &opts.config_dir)?, u))
        })
        .collect::<Result<_>>()?;
    let points: Vec<(usize, usize)> = (0..targets.len())
        .flat_map(|p| (0..rs.len()).map(move |i| (p, i)))
        .collect();
    let results = points
        .par_iter()
        .map(|&(p, i)| -> Result<(Vec<MetricRow>, String)> {
            let (label, pump, u) = &targets[p];
            let start = Instant::now();
            let params = params_for(cfg, rs[i], cfg.loss_ratio(), grid)?;
            let steps = cfg.steps_per_sample.map(|s| s * grid.n_times());
            let t = transfer_mn(&MnSolver::new(&params, pump, steps)?, false);
            let (mu0, _) = asymptotic_coeffs(&params)?;
            let err = synthesis_error(&t.gs_tilde, u, mu0, grid);
            let roundtrip = crate::linalg::max_abs_diff(&pump.realized_unitary(), u);
            let ms = elapsed_ms(start, opts.timing);
            let rows = vec![
                MetricRow {
                    r: rs[i],
                    metric_name: format!("{label}_synthesis_error"),
                    value: err,
                    runtime_ms: ms,
                },
                MetricRow {
                    r: rs[i],
                    metric_name: format!("{label}_roundtrip_error"),
                    value: roundtrip,
                    runtime_ms: ms,
                },
            ];
            Ok((rows, config_hash(&params, grid, pump)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut hashes = Vec::new();
    for (r, h) in results {
        rows.extend(r);
        hashes.push(h);
    }
    let path = opts.out_dir.join(format!("{}.csv", cfg.output));
    write_rows(&path, &rows)?;
    finish(cfg, grid, opts, vec![path], hashes, rows.len())
}

/// Writes each configured pump as `{label}.csv`, or `{label}_ch{k}.csv`
/// per channel for multi-channel pumps.
pub fn export_pumps(cfg: &SweepConfig, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| Error::Io(format!("{}: {e}", opts.out_dir.display())))?;
    let grid = cfg.grid_spec(opts.full).build()?;
    let mut files = Vec::new();
    for (label, pump) in build_pumps(cfg, &grid, opts)? {
        for (i, env) in pump.envelopes().iter().enumerate() {
            let name = if pump.channels() == 1 {
                format!("{label}.csv")
            } else {
                format!("{label}_ch{}.csv", pump.channel_label(i))
            };
            let path = opts.out_dir.join(name);
            let mut f = create(&path)?;
            env.write_csv(&mut f)?;
            f.flush()?;
            files.push(path);
        }
    }
    Ok(files)
}
