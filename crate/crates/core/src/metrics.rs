//! Fidelities and conversion efficiencies of the realised signal kernel
//! against the ideal map `G_k(t, u) ∝ β_k(u)/√T`, whose overlap with the pump
//! is taken with `β_k*(u)`.
//!
//! Every figure is assembled from four midpoint sums over the sampled kernel
//! `G_k(t_a, t_b)`, so the Cauchy–Schwarz orderings between them hold
//! exactly for the discrete objects, independent of resolution:
//!
//! ```text
//! num  = Σ_{a,b,k} β_k*(t_b) G_k(t_a, t_b) Δt²
//! den  = Σ_{a,b,k} |G_k(t_a, t_b)|² Δt²
//! x_k(t_a) = Σ_b β_k*(t_b) G_k(t_a, t_b) Δt
//! H_k(t_b) = Σ_a G_k(t_a, t_b) Δt
//! ```

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{FrequencyGrid, GateParams};
use crate::kernel1n::{check_dynamics, sf_response, KernelSet1N};
use crate::kernelmn::{KernelSetMN, MnSolver};
use crate::linalg::{CMatrix, ZERO};
use crate::pumps::MultiPump;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub fm_fidelity: f64,
    pub fm_ce: f64,
    pub pc_fidelity: f64,
    pub pc_ce: f64,
    pub hd_fidelity: f64,
    pub hd_ce: f64,
    pub config_hash: String,
}

impl MetricsReport {
    /// `(name, value)` pairs in a fixed order.
    pub fn entries(&self) -> [(&'static str, f64); 6] {
        [
            ("fm_fidelity", self.fm_fidelity),
            ("fm_ce", self.fm_ce),
            ("pc_fidelity", self.pc_fidelity),
            ("pc_ce", self.pc_ce),
            ("hd_fidelity", self.hd_fidelity),
            ("hd_ce", self.hd_ce),
        ]
    }
}

/// Hex SHA-256 identifying a configuration: rates, grid and pump digests.
pub fn config_hash(params: &GateParams, grid: &FrequencyGrid, pump: &MultiPump) -> String {
    let mut h = Sha256::new();
    for v in [params.gamma, params.eta, params.iota, params.window] {
        h.update(v.to_le_bytes());
    }
    h.update((grid.n_bins() as u64).to_le_bytes());
    h.update((grid.oversample() as u64).to_le_bytes());
    for e in pump.envelopes() {
        h.update(e.digest().as_bytes());
    }
    hex::encode(h.finalize())
}

/// Consumes kernel columns `G(·, t_b)` in any order and accumulates the
/// sums every metric needs.
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    channels: usize,
    dt: f64,
    window: f64,
    samples: Vec<Vec<Complex64>>,
    num: Complex64,
    den: f64,
    x: Vec<Complex64>,
    hd_den: f64,
}

impl MetricAccumulator {
    /// `samples[b]` is the channel vector `β(t_b)`.
    pub fn new(grid: &FrequencyGrid, samples: Vec<Vec<Complex64>>) -> Self {
        let channels = samples.first().map_or(0, |s| s.len());
        Self {
            channels,
            dt: grid.dt(),
            window: grid.window(),
            x: vec![ZERO; grid.n_times() * channels],
            samples,
            num: ZERO,
            den: 0.0,
            hd_den: 0.0,
        }
    }

    /// `values` holds `G_k(t_a, t_b)` at `a·M + k`.
    pub fn consume(&mut self, b: usize, values: &[Complex64]) {
        let m = self.channels;
        let dt = self.dt;
        let beta = &self.samples[b];
        let mut h = vec![ZERO; m];
        let mut col_num = ZERO;
        let mut col_den = 0.0;
        for (a, g) in values.chunks_exact(m).enumerate() {
            for k in 0..m {
                let w = beta[k].conj() * g[k];
                col_num += w;
                col_den += g[k].norm_sqr();
                self.x[a * m + k] += w * dt;
                h[k] += g[k];
            }
        }
        self.num += col_num * dt * dt;
        self.den += col_den * dt * dt;
        self.hd_den += dt * h.iter().map(|z| (z * dt).norm_sqr()).sum::<f64>();
    }

    pub fn finish(&self, config_hash: String) -> Result<MetricsReport> {
        if !(self.den > 0.0) {
            return Err(Error::NoConversion);
        }
        let m = self.channels as f64;
        let t = self.window;
        let overlap = self.num.norm_sqr();
        let pc_sum: f64 = self.x.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dt;
        let fm_ce = overlap / (m * m * t);
        Ok(MetricsReport {
            fm_fidelity: overlap / (m * t * self.den),
            fm_ce,
            pc_fidelity: pc_sum / self.den,
            pc_ce: pc_sum / m,
            hd_fidelity: overlap / (m * self.hd_den),
            hd_ce: fm_ce,
            config_hash,
        })
    }
}

/// All six metrics from per-channel kernel matrices `gs[k][(a, b)]`.
pub fn metrics_from_kernels(
    grid: &FrequencyGrid,
    pump: &MultiPump,
    gs: &[CMatrix],
    config_hash: String,
) -> Result<MetricsReport> {
    let m = pump.channels();
    if gs.len() != m {
        return Err(Error::Dimension(format!("{} kernel channels for {m} pumps", gs.len())));
    }
    let nt = grid.n_times();
    let mut acc = MetricAccumulator::new(grid, pump.sample_vectors());
    let mut col = vec![ZERO; nt * m];
    for b in 0..nt {
        for (k, g) in gs.iter().enumerate() {
            for (a, v) in g.column(b).iter().enumerate() {
                col[a * m + k] = *v;
            }
        }
        acc.consume(b, &col);
    }
    acc.finish(config_hash)
}

pub fn metrics_1n(kernels: &KernelSet1N) -> Result<MetricsReport> {
    let pump = MultiPump::single(kernels.pump.clone());
    let hash = config_hash(&kernels.params, &kernels.grid, &pump);
    metrics_from_kernels(&kernels.grid, &pump, std::slice::from_ref(&kernels.gs), hash)
}

/// `(fidelity, ce)` of the Hilbert–Schmidt overlap.
pub fn fm_metrics_1n(kernels: &KernelSet1N) -> Result<(f64, f64)> {
    metrics_1n(kernels).map(|r| (r.fm_fidelity, r.fm_ce))
}

/// `(fidelity, ce)` assuming photon counting.
pub fn pc_metrics_1n(kernels: &KernelSet1N) -> Result<(f64, f64)> {
    metrics_1n(kernels).map(|r| (r.pc_fidelity, r.pc_ce))
}

pub fn metrics_mn(kernels: &KernelSetMN) -> Result<MetricsReport> {
    let hash = config_hash(&kernels.params, &kernels.grid, &kernels.pump);
    metrics_from_kernels(&kernels.grid, &kernels.pump, &kernels.gs, hash)
}

pub fn fm_metrics_mn(kernels: &KernelSetMN) -> Result<(f64, f64)> {
    metrics_mn(kernels).map(|r| (r.fm_fidelity, r.fm_ce))
}

pub fn pc_metrics_mn(kernels: &KernelSetMN) -> Result<(f64, f64)> {
    metrics_mn(kernels).map(|r| (r.pc_fidelity, r.pc_ce))
}

/// `(fidelity, ce)` for homodyne projection onto the flat mode `1/√T`.
pub fn hd_metrics_mn(kernels: &KernelSetMN) -> Result<(f64, f64)> {
    metrics_mn(kernels).map(|r| (r.hd_fidelity, r.hd_ce))
}

/// Metrics without materialising the kernel: columns are streamed from
/// the solver straight into the accumulator.
pub fn metrics_streamed(solver: &MnSolver) -> Result<MetricsReport> {
    let mut acc = MetricAccumulator::new(solver.grid(), solver.samples().to_vec());
    solver.signal_columns(false, |b, col, _| acc.consume(b, col));
    acc.finish(config_hash(solver.params(), solver.grid(), solver.pump()))
}

/// Bhattacharyya overlap between the bin responses of two adjacent
/// single-bin pumps, over the bins where both are on the grid.
pub fn sf_indistinguishability(params: &GateParams, grid: &FrequencyGrid) -> Result<f64> {
    check_dynamics(params)?;
    let sf = sf_response(params, 0, grid)?;
    let mag: Vec<f64> = sf.mu.iter().map(|z| z.norm()).collect();
    let (mut cross, mut lo, mut hi) = (0.0, 0.0, 0.0);
    for w in mag.windows(2) {
        cross += w[0] * w[1];
        lo += w[0] * w[0];
        hi += w[1] * w[1];
    }
    if !(lo > 0.0 && hi > 0.0) {
        return Err(Error::NoConversion);
    }
    Ok(cross * cross / (lo * hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel1n::build_kernels;
    use crate::kernelmn::build_mn;
    use crate::pumps::{hermite_gauss_pump, identity_multipump, single_bin_pump};
    use approx::assert_abs_diff_eq;

    fn grid(n: usize, os: usize) -> FrequencyGrid {
        FrequencyGrid::new(n, os).unwrap()
    }

    #[test]
    fn factorised_kernel_is_ideal() {
        let g = grid(5, 8);
        let pump = hermite_gauss_pump(1, 0.7, &g).unwrap();
        let beta = pump.samples();
        let mp = MultiPump::single(pump);
        let flat = CMatrix::from_fn(g.n_times(), g.n_times(), |_, b| beta[b] * 0.6);
        let r = metrics_from_kernels(&g, &mp, &[flat], String::new()).unwrap();
        for (name, v) in r.entries() {
            let expect = if name.ends_with("ce") { 0.36 } else { 1.0 };
            assert_abs_diff_eq!(v, expect, epsilon = 1e-12);
        }

        // any output shape keeps the counting figures ideal
        let phi = hermite_gauss_pump(0, 0.5, &g).unwrap().samples();
        let shaped = CMatrix::from_fn(g.n_times(), g.n_times(), |a, b| phi[a] * beta[b] * 0.6);
        let r = metrics_from_kernels(&g, &mp, &[shaped], String::new()).unwrap();
        assert_abs_diff_eq!(r.pc_fidelity, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.pc_ce, 0.36, epsilon = 1e-12);
        assert!(r.fm_fidelity < 0.99);
    }

    #[test]
    fn time_constant_kernel_has_unit_hd() {
        let g = grid(5, 8);
        let pump = single_bin_pump(2, &g).unwrap();
        let beta = pump.samples();
        let gs = CMatrix::from_fn(g.n_times(), g.n_times(), |a, b| {
            beta[b] * (1.0 + 0.5 * (a as f64).sin())
        });
        let r = metrics_from_kernels(&g, &MultiPump::single(pump), &[gs], String::new()).unwrap();
        assert_abs_diff_eq!(r.hd_fidelity, 1.0, epsilon = 1e-12);
        assert!(r.fm_fidelity < r.hd_fidelity);
    }

    #[test]
    fn zero_kernel_is_no_conversion() {
        let g = grid(3, 8);
        let p = GateParams::from_ratio(0.1, &g).unwrap().with_eta(0.0);
        let k = build_kernels(&p, &single_bin_pump(0, &g).unwrap()).unwrap();
        assert_eq!(metrics_1n(&k).unwrap_err(), Error::NoConversion);
    }

    #[test]
    fn ce_vanishes_with_coupling() {
        let g = grid(5, 8);
        let p = GateParams::from_ratio(0.1, &g).unwrap();
        let pump = hermite_gauss_pump(2, 0.6, &g).unwrap();
        let ces: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|s| {
                fm_metrics_1n(&build_kernels(&p.with_eta(s * p.eta), &pump).unwrap())
                    .unwrap()
                    .1
            })
            .collect();
        assert!(ces[0] > ces[1] && ces[1] > ces[2] && ces[2] < 1e-5);
    }

    #[test]
    fn single_channel_mn_equals_1n() {
        let g = grid(5, 8);
        let p = GateParams::from_ratio(0.2, &g).unwrap();
        let pump = hermite_gauss_pump(2, 0.6, &g).unwrap();
        let r1 = metrics_1n(&build_kernels(&p, &pump).unwrap()).unwrap();
        let (k, _) = build_mn(&p, &MultiPump::single(pump)).unwrap();
        let rm = metrics_mn(&k).unwrap();
        for ((_, a), (_, b)) in r1.entries().iter().zip(rm.entries()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert_eq!(r1.config_hash, rm.config_hash);
    }

    #[test]
    fn streamed_equals_materialised() {
        let g = grid(5, 8);
        let p = GateParams::from_ratio(0.2, &g).unwrap();
        let mp = identity_multipump(3, &g).unwrap();
        let (k, _) = build_mn(&p, &mp).unwrap();
        let a = metrics_mn(&k).unwrap();
        let b = metrics_streamed(&MnSolver::new(&p, &mp, None).unwrap()).unwrap();
        for ((_, x), (_, y)) in a.entries().iter().zip(b.entries()) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-13);
        }
    }

    #[test]
    fn channel_phases_leave_pc_unchanged() {
        let g = grid(5, 8);
        let p = GateParams::from_ratio(0.2, &g).unwrap();
        let mp = identity_multipump(3, &g).unwrap();
        let (mut k, _) = build_mn(&p, &mp).unwrap();
        let before = metrics_mn(&k).unwrap();
        for (i, th) in [0.3, -1.2, 2.0].iter().enumerate() {
            k.gs[i] *= Complex64::from_polar(1.0, *th);
        }
        let after = metrics_mn(&k).unwrap();
        assert_abs_diff_eq!(before.pc_fidelity, after.pc_fidelity, epsilon = 1e-14);
        assert_abs_diff_eq!(before.pc_ce, after.pc_ce, epsilon = 1e-14);
        assert!(after.fm_fidelity < before.fm_fidelity);
    }

    #[test]
    fn indistinguishability_grows_with_linewidth() {
        let g = grid(31, 8);
        let f: Vec<f64> = [0.01, 0.05, 0.1, 0.5]
            .iter()
            .map(|r| sf_indistinguishability(&GateParams::from_ratio(*r, &g).unwrap(), &g).unwrap())
            .collect();
        assert!(f.windows(2).all(|w| w[1] > w[0]), "{f:?}");
        assert!(f[0] < 0.05);
        assert!(f.iter().all(|x| *x <= 1.0));
    }
}
