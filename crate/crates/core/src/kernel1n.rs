//! Single-channel kernels, their transfer matrices and the closed-form
//! coefficients of the 1×N gate.
//!
//! With `κ(t) = (γ+ι)/2 + η²|β(t)|²/2` the periodic solution of the cavity
//! equation gives
//!
//! ```text
//! g'(t, t') = -[A + Θ(t - t')] · exp(-∫_{t'}^{t} κ) · h(t'),   A = e^{-Λ}/(1 - e^{-Λ})
//! ```
//!
//! where `Λ = ∫κ` over the window and the exponent wraps around the window
//! when `t < t'`. The signal, idler and loss kernels differ only in the
//! input factor `h`: `ηβ(t')`, `√γ` and `√ι`, each multiplied by the output
//! coupling `√γ`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{FrequencyGrid, GateParams};
use crate::linalg::{CMatrix, ONE, ZERO};
use crate::pumps::PumpEnvelope;

/// Kernel samples `g(t_a, t_b)` on the time grid, column `b` for input time
/// `t_b`. The idler's `δ(t - t')` is not sampled.
#[derive(Debug, Clone)]
pub struct KernelSet1N {
    pub grid: FrequencyGrid,
    pub params: GateParams,
    pub pump: PumpEnvelope,
    pub gs: CMatrix,
    pub gi_smooth: CMatrix,
    pub loss: Option<CMatrix>,
}

/// Frequency-bin transfer matrices plus the half-transformed rows
/// `R(n, b) = Σ_a e^{iω_n t_a} g(t_a, t_b) Δt` they are built from.
#[derive(Debug, Clone)]
pub struct TransferSet {
    pub grid: FrequencyGrid,
    pub gs_tilde: CMatrix,
    pub gi_tilde: CMatrix,
    pub loss_tilde: Option<CMatrix>,
    pub rows_s: CMatrix,
    pub rows_i: CMatrix,
    pub rows_l: Option<CMatrix>,
}

pub(crate) fn check_dynamics(params: &GateParams) -> Result<()> {
    let total = params.total_decay() * params.window + params.eta * params.eta;
    if !(total > 0.0) {
        return Err(Error::NoCavityDynamics);
    }
    params.validate()
}

pub(crate) fn check_window(params: &GateParams, grid: &FrequencyGrid) -> Result<()> {
    if (params.window - grid.window()).abs() > 1e-12 * grid.window() {
        return Err(Error::InvalidParams(format!(
            "window {} differs from the grid window {}",
            params.window,
            grid.window()
        )));
    }
    Ok(())
}

/// `base(a, b) = A + Θ(t_a - t_b)` times the decay from `t_b` to `t_a`,
/// with `Θ(0) = 1/2` and the exponent integrated by the midpoint rule.
#[derive(Debug, Clone)]
pub(crate) struct DecayProfile {
    /// `C_a`: integral of κ from the window start to `t_a`.
    cumulative: Vec<f64>,
    /// `Λ`: integral over the whole window.
    total: f64,
    /// `1 / (1 - e^{-Λ})`
    prefactor: f64,
}

impl DecayProfile {
    pub(crate) fn new(kappa: &[f64], dt: f64) -> Self {
        let mut cumulative = Vec::with_capacity(kappa.len());
        let mut acc = 0.0;
        for k in kappa {
            cumulative.push(acc + 0.5 * k * dt);
            acc += k * dt;
        }
        Self {
            cumulative,
            total: acc,
            prefactor: -1.0 / (-acc).exp_m1(),
        }
    }

    pub(crate) fn base(&self, a: usize, b: usize) -> f64 {
        let (ca, cb) = (self.cumulative[a], self.cumulative[b]);
        if a > b {
            self.prefactor * (cb - ca).exp()
        } else if a == b {
            0.5 * self.prefactor * (1.0 + (-self.total).exp())
        } else {
            self.prefactor * (-(self.total - (cb - ca))).exp()
        }
    }
}

/// Builds the sampled kernels for one pump.
pub fn build_kernels(params: &GateParams, pump: &PumpEnvelope) -> Result<KernelSet1N> {
    check_dynamics(params)?;
    let grid = *pump.grid();
    check_window(params, &grid)?;
    let nt = grid.n_times();
    let dt = grid.dt();
    let beta = pump.samples();
    let rate = params.total_decay();
    let eta2 = params.eta * params.eta;
    let kappa: Vec<f64> = beta.iter().map(|b| 0.5 * rate + 0.5 * eta2 * b.norm_sqr()).collect();
    let profile = DecayProfile::new(&kappa, dt);

    let sg = params.gamma.sqrt();
    let mut gs = CMatrix::zeros(nt, nt);
    let mut gi = CMatrix::zeros(nt, nt);
    gs.as_mut_slice()
        .par_chunks_mut(nt)
        .zip(gi.as_mut_slice().par_chunks_mut(nt))
        .enumerate()
        .for_each(|(b, (col_s, col_i))| {
            let hs = -sg * params.eta * beta[b];
            for a in 0..nt {
                let base = profile.base(a, b);
                col_s[a] = hs * base;
                col_i[a] = Complex64::new(-params.gamma * base, 0.0);
            }
        });
    let loss = (params.iota > 0.0).then(|| gi.map(|g| g * (params.iota / params.gamma).sqrt()));
    Ok(KernelSet1N {
        grid,
        params: *params,
        pump: pump.clone(),
        gs,
        gi_smooth: gi,
        loss,
    })
}

/// `R(n, b) = Σ_a e^{iω_n t_a} g(t_a, t_b) Δt`, one parallel task per column
/// with a fixed summation order.
pub(crate) fn row_transform(grid: &FrequencyGrid, g: &CMatrix) -> CMatrix {
    let nt = grid.n_times();
    let n = grid.n_bins();
    let dt = grid.dt();
    let phases: Vec<Vec<Complex64>> = grid.bins().map(|k| grid.forward_row(k)).collect();
    let mut out = CMatrix::zeros(n, g.ncols());
    out.as_mut_slice().par_chunks_mut(n).enumerate().for_each(|(b, col)| {
        let src = g.column(b);
        for (j, row) in phases.iter().enumerate() {
            let mut acc = ZERO;
            for a in 0..nt {
                acc += row[a] * src[a];
            }
            col[j] = acc * dt;
        }
    });
    out
}

/// `G̃(n, m) = (Δt/T) Σ_b R(n, b) e^{-iω_m t_b}`.
pub(crate) fn column_transform(grid: &FrequencyGrid, rows: &CMatrix) -> CMatrix {
    let scale = grid.dt() / grid.window();
    let inverse = CMatrix::from_fn(grid.n_times(), grid.n_bins(), |b, j| {
        Complex64::from_polar(scale, -grid.omega(grid.label(j)) * grid.time(b))
    });
    rows * inverse
}

/// Adds the `δ(t - t')` contribution `e^{iω_n t_b}` to half-transformed rows.
pub(crate) fn add_identity_rows(grid: &FrequencyGrid, rows: &mut CMatrix) {
    for (j, n) in grid.bins().enumerate() {
        for (b, p) in grid.forward_row(n).into_iter().enumerate() {
            rows[(j, b)] += p;
        }
    }
}

pub fn transfer_matrix(kernels: &KernelSet1N) -> TransferSet {
    let grid = &kernels.grid;
    let rows_s = row_transform(grid, &kernels.gs);
    let mut rows_i = row_transform(grid, &kernels.gi_smooth);
    add_identity_rows(grid, &mut rows_i);
    let rows_l = kernels.loss.as_ref().map(|l| row_transform(grid, l));
    TransferSet {
        grid: *grid,
        gs_tilde: column_transform(grid, &rows_s),
        gi_tilde: column_transform(grid, &rows_i),
        loss_tilde: rows_l.as_ref().map(|r| column_transform(grid, r)),
        rows_s,
        rows_i,
        rows_l,
    }
}

impl TransferSet {
    /// Largest entry of `|(Δt/T) Σ_j R_j R_j† - I|` over the signal, idler
    /// and loss ports, with inputs on the full time grid.
    pub fn isometry_residual(&self) -> f64 {
        let scale = self.grid.dt() / self.grid.window();
        let mut gram = &self.rows_s * self.rows_s.adjoint() + &self.rows_i * self.rows_i.adjoint();
        if let Some(l) = &self.rows_l {
            gram += l * l.adjoint();
        }
        gram *= Complex64::new(scale, 0.0);
        identity_deviation(&gram)
    }

    /// The same check restricted to the `N` input bins, `g̃_s g̃_s† + g̃_i g̃_i†`.
    /// Inputs outside the band make this larger near the band edges.
    pub fn truncated_isometry_residual(&self) -> f64 {
        let mut gram = &self.gs_tilde * self.gs_tilde.adjoint() + &self.gi_tilde * self.gi_tilde.adjoint();
        if let Some(l) = &self.loss_tilde {
            gram += l * l.adjoint();
        }
        identity_deviation(&gram)
    }
}

pub(crate) fn identity_deviation(gram: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..gram.nrows() {
        for c in 0..gram.ncols() {
            let target = if r == c { ONE } else { ZERO };
            worst = worst.max((gram[(r, c)] - target).norm());
        }
    }
    worst
}

/// Lossless coefficients `(μ'₀, ν'₀)` of the target mode for `T·ω → 0`.
pub fn asymptotic_coeffs(params: &GateParams) -> Result<(f64, f64)> {
    let gt = params.gamma * params.window;
    let e2 = params.eta * params.eta;
    let d = gt + e2;
    if !(d > 0.0) {
        return Err(Error::NoCavityDynamics);
    }
    Ok((-2.0 * params.eta * gt.sqrt() / d, (e2 - gt) / d))
}

/// Target-mode coefficients `(μ''₀, ν''₀, υ''₀)` with internal loss.
pub fn lossy_coeffs(params: &GateParams) -> Result<(f64, f64, f64)> {
    let t = params.window;
    let e2 = params.eta * params.eta;
    let d = params.total_decay() * t + e2;
    if !(d > 0.0) {
        return Err(Error::NoCavityDynamics);
    }
    let mu = -2.0 * params.eta * (params.gamma * t).sqrt() / d;
    let nu = (e2 - params.gamma * t + params.iota * t) / d;
    let ups = -2.0 * t * (params.gamma * params.iota).sqrt() / d;
    Ok((mu, nu, ups))
}

/// The loss coefficient without the window factor in the numerator. It only
/// agrees with [`lossy_coeffs`] when `T = 1`.
pub fn uncorrected_upsilon(params: &GateParams) -> f64 {
    let d = params.total_decay() * params.window + params.eta * params.eta;
    -2.0 * (params.gamma * params.iota).sqrt() / d
}

/// Largest target-mode CE over `η` for a given `ι/γ`.
pub fn peak_lossy_ce(iota_over_gamma: f64) -> f64 {
    1.0 / (1.0 + iota_over_gamma)
}

/// Per-bin coefficients for a single-bin pump at bin `l`: output bin `n`
/// receives signal bin `n - l` with amplitude `mu[n]`.
#[derive(Debug, Clone)]
pub struct SfResponse {
    pub pump_bin: i64,
    pub bins: Vec<i64>,
    pub mu: Vec<Complex64>,
    pub nu: Vec<Complex64>,
    pub ups: Vec<Complex64>,
}

impl SfResponse {
    pub fn input_bin(&self, n: i64) -> i64 {
        n - self.pump_bin
    }
}

/// Exact continuous-time response to a flat pump.
pub fn sf_response(params: &GateParams, l: i64, grid: &FrequencyGrid) -> Result<SfResponse> {
    check_dynamics(params)?;
    grid.checked_position(l)?;
    let t = params.window;
    let half_e2 = 0.5 * params.eta * params.eta / t;
    let mut out = SfResponse {
        pump_bin: l,
        bins: grid.bins().collect(),
        mu: Vec::new(),
        nu: Vec::new(),
        ups: Vec::new(),
    };
    for n in grid.bins() {
        let iw = Complex64::new(0.0, n as f64 * 2.0 * std::f64::consts::PI / t);
        let den = iw - 0.5 * params.total_decay() - half_e2;
        out.mu.push(params.eta * (params.gamma / t).sqrt() / den);
        out.nu
            .push((iw + 0.5 * params.gamma - 0.5 * params.iota - half_e2) / den);
        out.ups.push((params.gamma * params.iota).sqrt() / den);
    }
    Ok(out)
}

/// The same response under the midpoint discretisation used by
/// [`build_kernels`]: `1/z` becomes `(Δt/2) coth(zΔt/2)` with
/// `z = κ - iω_n`.
pub fn sf_response_discrete(params: &GateParams, l: i64, grid: &FrequencyGrid) -> Result<SfResponse> {
    check_dynamics(params)?;
    check_window(params, grid)?;
    grid.checked_position(l)?;
    let t = params.window;
    let dt = grid.dt();
    let kappa = 0.5 * params.total_decay() + 0.5 * params.eta * params.eta / t;
    let mut out = SfResponse {
        pump_bin: l,
        bins: grid.bins().collect(),
        mu: Vec::new(),
        nu: Vec::new(),
        ups: Vec::new(),
    };
    for n in grid.bins() {
        let z = Complex64::new(kappa, -grid.omega(n));
        let x = z * (0.5 * dt);
        let resolvent = 0.5 * dt / x.tanh();
        out.mu.push(-params.eta * (params.gamma / t).sqrt() * resolvent);
        out.nu.push(ONE - params.gamma * resolvent);
        out.ups.push(-(params.gamma * params.iota).sqrt() * resolvent);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pumps::{hermite_gauss_pump, single_bin_pump};
    use approx::assert_abs_diff_eq;

    fn params(r: f64, grid: &FrequencyGrid) -> GateParams {
        GateParams::from_ratio(r, grid).unwrap()
    }

    #[test]
    fn asymptotic_examples() {
        let p = GateParams::new(1.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(asymptotic_coeffs(&p).unwrap(), (-1.0, 0.0));
        let (mu, nu) = asymptotic_coeffs(&p.with_eta(0.0)).unwrap();
        assert_eq!((mu, nu), (0.0, -1.0));
        let (mu, nu) = asymptotic_coeffs(&p.with_eta(3f64.sqrt())).unwrap();
        assert_abs_diff_eq!(mu, -3f64.sqrt() / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(nu, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn lossy_examples() {
        let p = GateParams::new(1.0, 1.0, 0.5, 1.0).unwrap();
        let (mu, nu, ups) = lossy_coeffs(&p).unwrap();
        assert_abs_diff_eq!(mu, -0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(nu, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(ups, -0.32f64.sqrt(), epsilon = 1e-15);

        let p = GateParams::new(2.0, 0.0, 2.0, 1.5).unwrap().matched();
        let (mu, _, _) = lossy_coeffs(&p).unwrap();
        assert_abs_diff_eq!(mu, -1.0 / 2f64.sqrt(), epsilon = 1e-15);

        let p = GateParams::new(1.3, 0.7, 0.0, 2.0).unwrap();
        let (mu, nu, ups) = lossy_coeffs(&p).unwrap();
        let (mu0, nu0) = asymptotic_coeffs(&p).unwrap();
        assert_eq!((mu, nu, ups), (mu0, nu0, 0.0));
    }

    #[test]
    fn uncorrected_upsilon_only_differs_off_unit_window() {
        let p = GateParams::new(1.0, 1.0, 0.5, 1.0).unwrap();
        assert_eq!(uncorrected_upsilon(&p), lossy_coeffs(&p).unwrap().2);
        let p = GateParams::new(1.0, 1.0, 0.5, 2.0).unwrap();
        let (mu, nu, _) = lossy_coeffs(&p).unwrap();
        let bad = uncorrected_upsilon(&p);
        assert!((mu * mu + nu * nu + bad * bad - 1.0).abs() > 1e-3);
    }

    #[test]
    fn sf_response_limits() {
        let g = FrequencyGrid::new(101, 8).unwrap();
        let p = params(0.1, &g);
        let sf = sf_response(&p, 0, &g).unwrap();
        let c = g.position(0).unwrap();
        assert!((sf.mu[c] + ONE).norm() < 1e-15);
        assert!(sf.mu[100].norm() < 0.02);
        assert!((sf.nu[100] - ONE).norm() < 2e-3);
        for (m, n) in sf.mu.iter().zip(&sf.nu) {
            assert_abs_diff_eq!(m.norm_sqr() + n.norm_sqr(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn decay_only_kernel() {
        let g = FrequencyGrid::new(5, 8).unwrap();
        let p = params(0.3, &g).with_eta(0.0);
        let k = build_kernels(&p, &hermite_gauss_pump(2, 0.5, &g).unwrap()).unwrap();
        assert!(k.gs.iter().all(|z| z.norm() == 0.0));
        let gamma = p.gamma;
        let a_pref = (-gamma / 2.0).exp() / (1.0 - (-gamma / 2.0).exp());
        for (a, b) in [(7, 3), (3, 7), (30, 0), (4, 4)] {
            let lag = g.time(a) - g.time(b);
            let step = if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
            let expect = -(a_pref + step) * gamma * (-gamma * lag / 2.0).exp();
            assert_abs_diff_eq!(k.gi_smooth[(a, b)].re, expect, epsilon = 1e-12);
        }
        let t = transfer_matrix(&k);
        assert!(t.gs_tilde.iter().all(|z| z.norm() < 1e-15));
        // the bare cavity is all-pass: unit-modulus diagonal, reflection -1 at n=0
        let sf = sf_response(&p, 0, &g).unwrap();
        for j in 0..5 {
            for i in 0..5 {
                if i != j {
                    assert!(t.gi_tilde[(j, i)].norm() < 1e-12);
                }
            }
            assert!((t.gi_tilde[(j, j)].norm() - 1.0).abs() < 1e-3);
            assert!((t.gi_tilde[(j, j)] - sf.nu[j]).norm() < 1e-2);
        }
        assert!(t.isometry_residual() < 1e-3);
    }

    #[test]
    fn sf_kernel_is_circulant() {
        let g = FrequencyGrid::new(5, 8).unwrap();
        let p = params(0.4, &g);
        let k = build_kernels(&p, &single_bin_pump(0, &g).unwrap()).unwrap();
        let nt = g.n_times();
        for shift in [0, 1, 7, 20] {
            let reference = k.gs[(shift % nt, 0)];
            for b in 0..nt {
                let a = (b + shift) % nt;
                assert!((k.gs[(a, b)] - reference).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn sf_transfer_matches_discrete_identity() {
        let g = FrequencyGrid::new(11, 8).unwrap();
        for r in [0.01, 0.5] {
            for l in [0, 2] {
                let p = params(r, &g);
                let t = transfer_matrix(&build_kernels(&p, &single_bin_pump(l, &g).unwrap()).unwrap());
                let d = sf_response_discrete(&p, l, &g).unwrap();
                for (j, n) in g.bins().enumerate() {
                    for (i, m) in g.bins().enumerate() {
                        let expect = if m == d.input_bin(n) { d.mu[j] } else { ZERO };
                        assert!((t.gs_tilde[(j, i)] - expect).norm() < 1e-12, "r={r} l={l} n={n} m={m}");
                    }
                }
            }
        }
    }

    #[test]
    fn sf_discrete_converges_to_closed_form() {
        let p = GateParams::from_ratio(0.5, &FrequencyGrid::new(11, 8).unwrap()).unwrap();
        let mut errs = Vec::new();
        for os in [8, 16, 32] {
            let g = FrequencyGrid::new(11, os).unwrap();
            let c = sf_response(&p, 0, &g).unwrap();
            let d = sf_response_discrete(&p, 0, &g).unwrap();
            errs.push(c.mu.iter().zip(&d.mu).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
        }
    }

    #[test]
    fn isometry_shrinks_with_oversample() {
        let mut res = Vec::new();
        for os in [8, 16, 32] {
            let g = FrequencyGrid::new(11, os).unwrap();
            let p = params(0.5, &g);
            let pump = hermite_gauss_pump(2, 1.1, &g).unwrap();
            res.push(transfer_matrix(&build_kernels(&p, &pump).unwrap()).isometry_residual());
        }
        assert!(res[1] < 1e-3);
        assert!(res[0] / res[1] > 3.0 && res[1] / res[2] > 3.0, "{res:?}");
    }

    #[test]
    fn lossy_isometry_includes_bath() {
        let g = FrequencyGrid::new(11, 16).unwrap();
        let p = GateParams::new(0.2 * g.bin_spacing(), 0.0, 0.3 * g.bin_spacing(), 1.0)
            .unwrap()
            .matched();
        let t = transfer_matrix(&build_kernels(&p, &hermite_gauss_pump(0, 1.0, &g).unwrap()).unwrap());
        assert!(t.loss_tilde.is_some());
        assert!(t.isometry_residual() < 1e-3);
    }

    #[test]
    fn asymptotic_row_follows_pump() {
        let g = FrequencyGrid::new(11, 8).unwrap();
        let p = params(1e-3, &g);
        let pump = hermite_gauss_pump(2, 1.1, &g).unwrap();
        let t = transfer_matrix(&build_kernels(&p, &pump).unwrap());
        let c = pump.reflected();
        let row = g.position(0).unwrap();
        for j in 0..11 {
            assert!((t.gs_tilde[(row, j)] + c[j]).norm() < 1e-2);
        }
    }

    #[test]
    fn no_dynamics_is_reported() {
        let p = GateParams {
            gamma: 0.0,
            eta: 0.0,
            iota: 0.0,
            window: 1.0,
        };
        let g = FrequencyGrid::new(3, 8).unwrap();
        let pump = single_bin_pump(0, &g).unwrap();
        assert_eq!(build_kernels(&p, &pump).unwrap_err(), Error::NoCavityDynamics);
        assert_eq!(asymptotic_coeffs(&p).unwrap_err(), Error::NoCavityDynamics);
    }
}
