//! Multi-channel kernels from the periodic time-ordered propagator.
//!
//! The intracavity vector obeys `ḃ = -𝕄(t) b - (input)` with
//! `𝕄(t) = ((γ+ι)/2) I + (η²/2) β(t)β(t)†`. Its periodic Green's function is
//!
//! ```text
//! 𝕂(t, u) = -ℙ(t, -T/2) [I - Φ]⁻¹ ℙ(T/2, u) - Θ(t - u) ℙ(t, u),   Φ = ℙ(T/2, -T/2)
//! ```
//!
//! and the signal and idler kernels are `G_s = √γ η 𝕂 β(u)` and
//! `𝔾_i = γ𝕂 + δ(t - u) I`.
//!
//! `ℙ` is a product of rank-one step exponentials, so columns of `𝕂` are
//! produced by propagating vectors, never M×M blocks per time pair.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{FrequencyGrid, GateParams};
use crate::kernel1n::{check_dynamics, check_window, identity_deviation};
use crate::linalg::{norm1, CMatrix, RankOneStep, ZERO};
use crate::pumps::MultiPump;

/// Periodic solves with a worse condition number are refused.
pub const MAX_CONDITION: f64 = 1e12;

/// Columns computed per parallel batch before they are handed on in order.
const COLUMN_BLOCK: usize = 64;

/// Step factors of one time cell, split at the cell centre `t_a`.
#[derive(Debug, Clone)]
struct CellFactors {
    /// cell start → `t_a`, in application order
    lo: Vec<RankOneStep>,
    /// `t_a` → cell end
    hi: Vec<RankOneStep>,
}

#[derive(Debug, Clone)]
pub struct PropagatorChain {
    grid: FrequencyGrid,
    channels: usize,
    substeps: usize,
    cells: Vec<CellFactors>,
}

/// Builds the piecewise-constant chain with `n_steps` steps over the window,
/// each evaluating `𝕄` at its own midpoint.
pub fn propagator(params: &GateParams, pump: &MultiPump, n_steps: usize) -> Result<PropagatorChain> {
    check_dynamics(params)?;
    let grid = *pump.grid();
    check_window(params, &grid)?;
    let nt = grid.n_times();
    if n_steps < nt || !n_steps.is_multiple_of(nt) {
        return Err(Error::StepMisaligned { n_steps, n_times: nt });
    }
    let s = n_steps / nt;
    let dt = grid.dt();
    let h = dt / s as f64;
    let rate = params.total_decay();
    let strength = params.eta * params.eta;
    let step = |t: f64, len: f64| RankOneStep::new(rate, strength, pump.eval_vector(t), len);

    let cells = (0..nt)
        .into_par_iter()
        .map(|a| {
            let start = grid.time(a) - 0.5 * dt;
            let mid = |j: usize| start + (j as f64 + 0.5) * h;
            let q = s / 2;
            let mut lo: Vec<RankOneStep> = (0..q).map(|j| step(mid(j), h)).collect();
            let mut hi = Vec::with_capacity(q + 1);
            if s % 2 == 1 {
                lo.push(step(mid(q), 0.5 * h));
                hi.push(step(mid(q), 0.5 * h));
            }
            hi.extend((s - q..s).map(|j| step(mid(j), h)));
            CellFactors { lo, hi }
        })
        .collect();
    Ok(PropagatorChain {
        grid,
        channels: pump.channels(),
        substeps: s,
        cells,
    })
}

impl PropagatorChain {
    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn n_steps(&self) -> usize {
        self.substeps * self.grid.n_times()
    }

    fn apply_lo(&self, a: usize, x: &mut [Complex64]) {
        for f in &self.cells[a].lo {
            f.apply(x);
        }
    }

    fn apply_hi(&self, a: usize, x: &mut [Complex64]) {
        for f in &self.cells[a].hi {
            f.apply(x);
        }
    }

    /// `ℙ(t_a, t_b)` for `a ≥ b`.
    pub fn between(&self, a: usize, b: usize) -> CMatrix {
        assert!(a >= b);
        let mut p = CMatrix::identity(self.channels, self.channels);
        if a == b {
            return p;
        }
        let mut apply = |fs: &[RankOneStep]| {
            for f in fs {
                f.apply_left(&mut p);
            }
        };
        apply(&self.cells[b].hi);
        for c in b + 1..a {
            apply(&self.cells[c].lo);
            apply(&self.cells[c].hi);
        }
        apply(&self.cells[a].lo);
        p
    }

    /// `Φ = ℙ(T/2, -T/2)`.
    pub fn monodromy(&self) -> CMatrix {
        let mut p = CMatrix::identity(self.channels, self.channels);
        for cell in &self.cells {
            for f in cell.lo.iter().chain(&cell.hi) {
                f.apply_left(&mut p);
            }
        }
        p
    }

    /// Every step factor as a dense matrix, in time order.
    pub fn step_matrices(&self) -> Vec<CMatrix> {
        self.cells
            .iter()
            .flat_map(|c| c.lo.iter().chain(&c.hi))
            .map(|f| f.matrix())
            .collect()
    }

    /// `ℙ(T/2, t_b)` for every `b`, by one backward sweep.
    fn tails(&self) -> Vec<CMatrix> {
        let m = self.channels;
        let nt = self.grid.n_times();
        let mut out = vec![CMatrix::zeros(m, m); nt];
        let mut s = CMatrix::identity(m, m);
        for b in (0..nt).rev() {
            let mut t = s.clone();
            for f in self.cells[b].hi.iter().rev() {
                f.apply_right(&mut t);
            }
            out[b] = t;
            for f in self.cells[b].hi.iter().rev().chain(self.cells[b].lo.iter().rev()) {
                f.apply_right(&mut s);
            }
        }
        out
    }

    /// `ℙ(T/2, t_b) v_b` for every `b`, each propagated to the window end.
    fn tail_vectors(&self, inputs: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        let nt = self.grid.n_times();
        (0..nt)
            .into_par_iter()
            .map(|b| {
                let mut y = inputs[b].clone();
                self.apply_hi(b, &mut y);
                for c in b + 1..nt {
                    self.apply_lo(c, &mut y);
                    self.apply_hi(c, &mut y);
                }
                y
            })
            .collect()
    }
}

/// Evaluator for the periodic kernel `𝕂`.
#[derive(Debug, Clone)]
pub struct PeriodicKernel {
    chain: PropagatorChain,
    /// `[I - Φ]⁻¹`
    inverse: CMatrix,
    condition: f64,
}

pub fn periodic_kernel(chain: PropagatorChain) -> Result<PeriodicKernel> {
    let m = chain.channels;
    let a = CMatrix::identity(m, m) - chain.monodromy();
    let inverse = a.clone().lu().try_inverse().ok_or(Error::NearSingularPeriodicSolve {
        condition: f64::INFINITY,
    })?;
    let condition = norm1(&a) * norm1(&inverse);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::NearSingularPeriodicSolve { condition });
    }
    Ok(PeriodicKernel {
        chain,
        inverse,
        condition,
    })
}

impl PeriodicKernel {
    pub fn chain(&self) -> &PropagatorChain {
        &self.chain
    }

    /// 1-norm condition number of `I - Φ`.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// The M×M block `𝕂(t_a, t_b)`.
    pub fn block(&self, a: usize, b: usize) -> CMatrix {
        let nt = self.chain.grid.n_times();
        let head = self.chain.between(a, 0);
        let mut start = CMatrix::identity(self.chain.channels, self.chain.channels);
        for f in &self.chain.cells[0].lo {
            // ℙ(t_a, -T/2) = ℙ(t_a, t_0) ℙ(t_0, -T/2)
            f.apply_left(&mut start);
        }
        let tail = self.chain.between(nt - 1, b);
        let mut end = tail;
        for f in &self.chain.cells[nt - 1].hi {
            f.apply_left(&mut end);
        }
        let mut k = -(head * start) * &self.inverse * end;
        if a > b {
            k -= self.chain.between(a, b);
        } else if a == b {
            k -= CMatrix::identity(self.chain.channels, self.chain.channels) * Complex64::new(0.5, 0.0);
        }
        k
    }

    /// Writes `𝕂(t_a, t_b) v` for every `a` into `out` (a-major, length
    /// `N_t·M`), given `w = [I - Φ]⁻¹ ℙ(T/2, t_b) v`.
    fn column_from(&self, b: usize, w: &[Complex64], v: &[Complex64], out: &mut [Complex64]) {
        let m = self.chain.channels;
        let mut z = w.to_vec();
        for a in 0..self.chain.grid.n_times() {
            self.chain.apply_lo(a, &mut z);
            let dst = &mut out[a * m..(a + 1) * m];
            if a == b {
                for k in 0..m {
                    dst[k] = -(z[k] + 0.5 * v[k]);
                    z[k] += v[k];
                }
            } else {
                for k in 0..m {
                    dst[k] = -z[k];
                }
            }
            self.chain.apply_hi(a, &mut z);
        }
    }

    fn solve(&self, y: &[Complex64]) -> Vec<Complex64> {
        let m = self.chain.channels;
        (0..m)
            .map(|r| (0..m).map(|c| self.inverse[(r, c)] * y[c]).sum())
            .collect()
    }

    /// `𝕂(·, t_b) v` as an a-major `N_t·M` vector.
    pub fn column(&self, b: usize, v: &[Complex64]) -> Vec<Complex64> {
        let y = self.chain.tail_vectors_single(b, v);
        let w = self.solve(&y);
        let mut out = vec![ZERO; self.chain.grid.n_times() * self.chain.channels];
        self.column_from(b, &w, v, &mut out);
        out
    }
}

impl PropagatorChain {
    fn tail_vectors_single(&self, b: usize, v: &[Complex64]) -> Vec<Complex64> {
        let mut y = v.to_vec();
        self.apply_hi(b, &mut y);
        for c in b + 1..self.grid.n_times() {
            self.apply_lo(c, &mut y);
            self.apply_hi(c, &mut y);
        }
        y
    }
}

/// Streaming column generator for one M×N configuration.
#[derive(Debug, Clone)]
pub struct MnSolver {
    params: GateParams,
    pump: MultiPump,
    samples: Vec<Vec<Complex64>>,
    kernel: PeriodicKernel,
    phases: Vec<Complex64>,
}

impl MnSolver {
    /// `n_steps = None` uses one step per time sample.
    pub fn new(params: &GateParams, pump: &MultiPump, n_steps: Option<usize>) -> Result<Self> {
        let grid = *pump.grid();
        let chain = propagator(params, pump, n_steps.unwrap_or(grid.n_times()))?;
        let kernel = periodic_kernel(chain)?;
        let nt = grid.n_times();
        let mut phases = Vec::with_capacity(grid.n_bins() * nt);
        for n in grid.bins() {
            phases.extend(grid.forward_row(n));
        }
        Ok(Self {
            params: *params,
            pump: pump.clone(),
            samples: pump.sample_vectors(),
            kernel,
            phases,
        })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        self.pump.grid()
    }

    pub fn params(&self) -> &GateParams {
        &self.params
    }

    pub fn pump(&self) -> &MultiPump {
        &self.pump
    }

    pub fn samples(&self) -> &[Vec<Complex64>] {
        &self.samples
    }

    pub fn kernel(&self) -> &PeriodicKernel {
        &self.kernel
    }

    pub fn channels(&self) -> usize {
        self.pump.channels()
    }

    /// `R_k(n) = Σ_a e^{iω_n t_a} x_k(t_a) Δt`, stored `k·N + n`.
    fn rows_of(&self, values: &[Complex64]) -> Vec<Complex64> {
        let grid = self.grid();
        let (nb, nt, m) = (grid.n_bins(), grid.n_times(), self.channels());
        let dt = grid.dt();
        let mut out = vec![ZERO; m * nb];
        let mut acc = vec![ZERO; m];
        for j in 0..nb {
            acc.iter_mut().for_each(|x| *x = ZERO);
            let row = &self.phases[j * nt..(j + 1) * nt];
            for a in 0..nt {
                let p = row[a];
                for (k, x) in acc.iter_mut().enumerate() {
                    *x += p * values[a * m + k];
                }
            }
            for k in 0..m {
                out[k * nb + j] = acc[k] * dt;
            }
        }
        out
    }

    /// Streams the signal kernel `G_s(·, t_b)` column by column in
    /// ascending `b`. The callback receives `b`, the a-major `N_t·M`
    /// samples and, if `with_rows`, their row transform.
    pub fn signal_columns<F>(&self, with_rows: bool, mut sink: F)
    where
        F: FnMut(usize, &[Complex64], Option<&[Complex64]>),
    {
        let nt = self.grid().n_times();
        let m = self.channels();
        let scale = self.params.gamma.sqrt() * self.params.eta;
        let ys = self.kernel.chain.tail_vectors(&self.samples);
        for start in (0..nt).step_by(COLUMN_BLOCK) {
            let end = (start + COLUMN_BLOCK).min(nt);
            let block: Vec<(Vec<Complex64>, Option<Vec<Complex64>>)> = (start..end)
                .into_par_iter()
                .map(|b| {
                    let w = self.kernel.solve(&ys[b]);
                    let mut col = vec![ZERO; nt * m];
                    self.kernel.column_from(b, &w, &self.samples[b], &mut col);
                    col.iter_mut().for_each(|x| *x *= scale);
                    let rows = with_rows.then(|| self.rows_of(&col));
                    (col, rows)
                })
                .collect();
            for (i, (col, rows)) in block.iter().enumerate() {
                sink(start + i, col, rows.as_deref());
            }
        }
    }

    /// Streams `𝕂(·, t_b) e_j` for every `b` and channel `j`, unscaled.
    /// The callback receives `(b, j, samples, rows)`.
    pub fn idler_columns<F>(&self, with_rows: bool, mut sink: F)
    where
        F: FnMut(usize, usize, &[Complex64], Option<&[Complex64]>),
    {
        let nt = self.grid().n_times();
        let m = self.channels();
        let tails = self.kernel.chain.tails();
        for start in (0..nt).step_by(COLUMN_BLOCK) {
            let end = (start + COLUMN_BLOCK).min(nt);
            let block: Vec<Vec<(Vec<Complex64>, Option<Vec<Complex64>>)>> = (start..end)
                .into_par_iter()
                .map(|b| {
                    let w = &self.kernel.inverse * &tails[b];
                    (0..m)
                        .map(|j| {
                            let mut e = vec![ZERO; m];
                            e[j] = Complex64::new(1.0, 0.0);
                            let wj: Vec<Complex64> = w.column(j).iter().copied().collect();
                            let mut col = vec![ZERO; nt * m];
                            self.kernel.column_from(b, &wj, &e, &mut col);
                            let rows = with_rows.then(|| self.rows_of(&col));
                            (col, rows)
                        })
                        .collect()
                })
                .collect();
            for (i, per_j) in block.iter().enumerate() {
                for (j, (col, rows)) in per_j.iter().enumerate() {
                    sink(start + i, j, col, rows.as_deref());
                }
            }
        }
    }
}

/// Sampled M×N kernels. `gs[k]` is `G_s,k(t_a, t_b)`; `gi_smooth[k·M + j]`
/// is `γ𝕂_kj(t_a, t_b)`.
#[derive(Debug, Clone)]
pub struct KernelSetMN {
    pub grid: FrequencyGrid,
    pub params: GateParams,
    pub pump: MultiPump,
    pub gs: Vec<CMatrix>,
    pub gi_smooth: Vec<CMatrix>,
}

/// Per-channel transfer matrices. `gs_tilde[k]` is `g̃_s,k(ω_n, ω_m)`;
/// `gi_tilde[k·M + j]` couples idler input channel `j` to output `k`;
/// `loss_tilde` has the same layout when `ι > 0`.
#[derive(Debug, Clone)]
pub struct TransferSetMN {
    pub grid: FrequencyGrid,
    pub channels: usize,
    pub gs_tilde: Vec<CMatrix>,
    pub gi_tilde: Vec<CMatrix>,
    pub loss_tilde: Vec<CMatrix>,
    rows_s: Vec<CMatrix>,
    rows_i: Vec<CMatrix>,
    rows_l: Vec<CMatrix>,
}

impl TransferSetMN {
    pub fn has_idler(&self) -> bool {
        !self.rows_i.is_empty()
    }

    /// Stacked row isometry over all outputs `(k, n)` with inputs on the
    /// full time grid; `None` if the idler part was skipped.
    pub fn isometry_residual(&self) -> Option<f64> {
        if !self.has_idler() {
            return None;
        }
        let m = self.channels;
        let nb = self.grid.n_bins();
        let nt = self.grid.n_times();
        let scale = Complex64::new(self.grid.dt() / self.grid.window(), 0.0);
        // outputs (k, n) stacked as rows; inputs as columns
        let ports = 1 + m + if self.rows_l.is_empty() { 0 } else { m };
        let mut big = CMatrix::zeros(m * nb, ports * nt);
        for k in 0..m {
            big.view_mut((k * nb, 0), (nb, nt)).copy_from(&self.rows_s[k]);
            for j in 0..m {
                big.view_mut((k * nb, (1 + j) * nt), (nb, nt))
                    .copy_from(&self.rows_i[k * m + j]);
                if !self.rows_l.is_empty() {
                    big.view_mut((k * nb, (1 + m + j) * nt), (nb, nt))
                        .copy_from(&self.rows_l[k * m + j]);
                }
            }
        }
        let gram = &big * big.adjoint() * scale;
        Some(identity_deviation(&gram))
    }
}

fn to_transfer(grid: &FrequencyGrid, rows: &CMatrix) -> CMatrix {
    crate::kernel1n::column_transform(grid, rows)
}

/// Transfer matrices by streaming columns; the idler and loss blocks are
/// only formed when `with_idler` is set (they cost `M` times the signal).
pub fn transfer_mn(solver: &MnSolver, with_idler: bool) -> TransferSetMN {
    let grid = *solver.grid();
    let (nb, nt, m) = (grid.n_bins(), grid.n_times(), solver.channels());
    let mut rows_s = vec![CMatrix::zeros(nb, nt); m];
    solver.signal_columns(true, |b, _, rows| {
        let rows = rows.expect("rows requested");
        for k in 0..m {
            for j in 0..nb {
                rows_s[k][(j, b)] = rows[k * nb + j];
            }
        }
    });
    let params = *solver.params();
    let mut rows_i = Vec::new();
    let mut rows_l = Vec::new();
    if with_idler {
        rows_i = vec![CMatrix::zeros(nb, nt); m * m];
        if params.iota > 0.0 {
            rows_l = vec![CMatrix::zeros(nb, nt); m * m];
        }
        let gi = params.gamma;
        let gl = (params.gamma * params.iota).sqrt();
        solver.idler_columns(true, |b, j, _, rows| {
            let rows = rows.expect("rows requested");
            for k in 0..m {
                for n in 0..nb {
                    let r = rows[k * nb + n];
                    rows_i[k * m + j][(n, b)] = r * gi;
                    if !rows_l.is_empty() {
                        rows_l[k * m + j][(n, b)] = r * gl;
                    }
                }
            }
        });
        for k in 0..m {
            crate::kernel1n::add_identity_rows(&grid, &mut rows_i[k * m + k]);
        }
    }
    TransferSetMN {
        grid,
        channels: m,
        gs_tilde: rows_s.iter().map(|r| to_transfer(&grid, r)).collect(),
        gi_tilde: rows_i.iter().map(|r| to_transfer(&grid, r)).collect(),
        loss_tilde: rows_l.iter().map(|r| to_transfer(&grid, r)).collect(),
        rows_s,
        rows_i,
        rows_l,
    }
}

/// Materialises the kernels and their transfer matrices. Memory grows as
/// `M²N_t²`; use [`MnSolver`] with [`transfer_mn`] for large grids.
pub fn build_mn(params: &GateParams, pump: &MultiPump) -> Result<(KernelSetMN, TransferSetMN)> {
    build_mn_with_steps(params, pump, None)
}

pub fn build_mn_with_steps(
    params: &GateParams,
    pump: &MultiPump,
    n_steps: Option<usize>,
) -> Result<(KernelSetMN, TransferSetMN)> {
    let solver = MnSolver::new(params, pump, n_steps)?;
    let grid = *pump.grid();
    let (nt, m) = (grid.n_times(), pump.channels());
    let mut gs = vec![CMatrix::zeros(nt, nt); m];
    solver.signal_columns(false, |b, col, _| {
        for a in 0..nt {
            for k in 0..m {
                gs[k][(a, b)] = col[a * m + k];
            }
        }
    });
    let mut gi = vec![CMatrix::zeros(nt, nt); m * m];
    solver.idler_columns(false, |b, j, col, _| {
        for a in 0..nt {
            for k in 0..m {
                gi[k * m + j][(a, b)] = col[a * m + k] * params.gamma;
            }
        }
    });
    let transfer = transfer_mn(&solver, true);
    Ok((
        KernelSetMN {
            grid,
            params: *params,
            pump: pump.clone(),
            gs,
            gi_smooth: gi,
        },
        transfer,
    ))
}
