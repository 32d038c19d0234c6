//! The oracle gate matrix run by `csfg verify` and `csfg run --verify`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::run::numeric_peak_ce;
use crate::error::Result;
use crate::grid::{FrequencyGrid, GateParams};
use crate::kernel1n::{
    asymptotic_coeffs, build_kernels, lossy_coeffs, peak_lossy_ce, sf_response, transfer_matrix, uncorrected_upsilon,
};
use crate::kernelmn::{build_mn, transfer_mn, MnSolver};
use crate::linalg::{max_abs_diff, CMatrix, RankOneStep};
use crate::oracle::{column_deviation, dense_expm, sf_discrete_check, OraclePort, DEFAULT_SUBSTEPS};
use crate::pumps::{default_hg_width, hermite_gauss_pump, identity_multipump, single_bin_pump, MultiPump};

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Oversample of the isometry gates; the shrink ratio is measured
    /// against twice this value.
    pub oversample: usize,
    /// Use the loss coefficient without the window factor. Its unitarity
    /// gate is expected to fail.
    pub uncorrected_upsilon: bool,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            oversample: 16,
            uncorrected_upsilon: false,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GateResult {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GateResult {
    fn new(name: &str, residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            residual,
            tolerance,
            passed: residual.is_finite() && residual <= tolerance,
        }
    }

    /// Gate that passes when `value >= floor`; the residual is the value.
    fn at_least(name: &str, value: f64, floor: f64) -> Self {
        Self {
            name: name.into(),
            residual: value,
            tolerance: floor,
            passed: value.is_finite() && value >= floor,
        }
    }

    fn failed(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            residual: f64::NAN,
            tolerance,
            passed: false,
        }
    }
}

fn gate(name: &str, tolerance: f64, f: impl FnOnce() -> Result<f64>) -> GateResult {
    match f() {
        Ok(r) => GateResult::new(name, r, tolerance),
        Err(_) => GateResult::failed(name, tolerance),
    }
}

/// `(γ, η, ι, T)` drawn over a few decades.
fn random_params(rng: &mut impl Rng, lossy: bool) -> GateParams {
    let window = rng.gen_range(0.2..5.0);
    let gamma = 10f64.powf(rng.gen_range(-3.0..2.0));
    let eta = 10f64.powf(rng.gen_range(-2.0..1.0));
    let iota = if lossy { gamma * rng.gen_range(0.0..3.0) } else { 0.0 };
    GateParams::new(gamma, eta, iota, window).expect("positive draws")
}

/// Largest deviation of `|μ'₀|²+|ν'₀|²` and of the three-term lossy sum
/// from one.
pub fn coefficient_unitarity(draws: usize, seed: u64, uncorrected: bool) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let p = random_params(&mut rng, true);
        let (mu, nu) = asymptotic_coeffs(&p.with_iota(0.0))?;
        worst = worst.max((mu * mu + nu * nu - 1.0).abs());
        let (mu, nu, mut ups) = lossy_coeffs(&p)?;
        if uncorrected {
            ups = uncorrected_upsilon(&p);
        }
        worst = worst.max((mu * mu + nu * nu + ups * ups - 1.0).abs());
    }
    Ok(worst)
}

/// Largest `||μ'_n|²+|ν'_n|² - 1|` over random parameters and bins.
pub fn per_bin_unitarity(draws: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = FrequencyGrid::new(31, 8)?;
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let mut p = random_params(&mut rng, false);
        p.window = grid.window();
        let sf = sf_response(&p, 0, &grid)?;
        for (mu, nu) in sf.mu.iter().zip(&sf.nu) {
            worst = worst.max((mu.norm_sqr() + nu.norm_sqr() - 1.0).abs());
        }
    }
    Ok(worst)
}

/// Largest gap between the numerically maximised target-mode CE and
/// `1/(1+ι/γ)`.
pub fn lossy_peak(ratios: &[f64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &x in ratios {
        worst = worst.max((numeric_peak_ce(x, 0.7, 1.0)? - peak_lossy_ce(x)).abs());
    }
    Ok(worst)
}

/// Rank-one step factor against a dense exponential of `-𝕄h`.
pub fn rank_one_vs_expm(max_dim: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for m in 1..=max_dim {
        let beta: Vec<Complex64> = (0..m)
            .map(|_| Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
            .collect();
        let rate = rng.gen_range(0.1..10.0);
        let strength = rng.gen_range(0.1..10.0);
        let h = rng.gen_range(0.001..0.2);
        let step = RankOneStep::new(rate, strength, beta.clone(), h);
        let a = CMatrix::from_fn(m, m, |r, c| {
            let diag = if r == c { 0.5 * rate } else { 0.0 };
            -(Complex64::new(diag, 0.0) + beta[r] * beta[c].conj() * (0.5 * strength)) * h
        });
        worst = worst.max(max_abs_diff(&step.matrix(), &dense_expm(&a)));
    }
    worst
}

/// Analytic 1×N signal and idler kernels against the dense solver.
pub fn oracle_1n(grid: &FrequencyGrid, r: f64) -> Result<f64> {
    let p = GateParams::from_ratio(r, grid)?;
    let pump = hermite_gauss_pump(2, default_hg_width(grid), grid)?;
    let k = build_kernels(&p, &pump)?;
    let mp = MultiPump::single(pump);
    let nt = grid.n_times();
    let cols = [0, nt / 3, nt / 2, nt - 1];
    let s = column_deviation(
        std::slice::from_ref(&k.gs),
        &p,
        &mp,
        OraclePort::Signal,
        &cols,
        DEFAULT_SUBSTEPS,
    )?;
    let i = column_deviation(
        std::slice::from_ref(&k.gi_smooth),
        &p,
        &mp,
        OraclePort::Idler(0),
        &cols,
        DEFAULT_SUBSTEPS,
    )?;
    Ok(s.max(i))
}

/// Analytic M×N kernels for the identity multipump against the dense solver.
pub fn oracle_mn(grid: &FrequencyGrid, channels: usize, r: f64) -> Result<f64> {
    let p = GateParams::from_ratio(r, grid)?;
    let mp = identity_multipump(channels, grid)?;
    let (k, _) = build_mn(&p, &mp)?;
    let nt = grid.n_times();
    let cols = [1, nt / 2 + 3];
    let mut worst = column_deviation(&k.gs, &p, &mp, OraclePort::Signal, &cols, DEFAULT_SUBSTEPS)?;
    for j in 0..channels {
        let out: Vec<CMatrix> = (0..channels).map(|r| k.gi_smooth[r * channels + j].clone()).collect();
        worst = worst.max(column_deviation(
            &out,
            &p,
            &mp,
            OraclePort::Idler(j),
            &cols,
            DEFAULT_SUBSTEPS,
        )?);
    }
    Ok(worst)
}

/// Full-grid row-isometry residual of the 1×N transfer matrices.
pub fn isometry_1n(n_bins: usize, oversample: usize, r: f64, hermite: bool) -> Result<f64> {
    let grid = FrequencyGrid::new(n_bins, oversample)?;
    let p = GateParams::from_ratio(r, &grid)?;
    let pump = if hermite {
        hermite_gauss_pump(2, default_hg_width(&grid), &grid)?
    } else {
        single_bin_pump(1, &grid)?
    };
    Ok(transfer_matrix(&build_kernels(&p, &pump)?).isometry_residual())
}

/// Stacked row-isometry residual of the M×N transfer set.
pub fn isometry_mn(n_bins: usize, oversample: usize, channels: usize, r: f64) -> Result<f64> {
    let grid = FrequencyGrid::new(n_bins, oversample)?;
    let p = GateParams::from_ratio(r, &grid)?;
    let mp = identity_multipump(channels, &grid)?;
    let t = transfer_mn(&MnSolver::new(&p, &mp, None)?, true);
    Ok(t.isometry_residual().unwrap_or(f64::NAN))
}

/// Largest single-channel difference between the M×N solver and the
/// 1×N kernels, over kernels and transfer matrices.
pub fn m1_reduction(grid: &FrequencyGrid, r: f64) -> Result<f64> {
    let p = GateParams::from_ratio(r, grid)?;
    let mut worst: f64 = 0.0;
    for pump in [
        hermite_gauss_pump(2, default_hg_width(grid), grid)?,
        single_bin_pump(1, grid)?,
    ] {
        let k1 = build_kernels(&p, &pump)?;
        let t1 = transfer_matrix(&k1);
        let (kmn, tmn) = build_mn(&p, &MultiPump::single(pump))?;
        worst = worst
            .max(max_abs_diff(&kmn.gs[0], &k1.gs))
            .max(max_abs_diff(&kmn.gi_smooth[0], &k1.gi_smooth))
            .max(max_abs_diff(&tmn.gs_tilde[0], &t1.gs_tilde))
            .max(max_abs_diff(&tmn.gi_tilde[0], &t1.gi_tilde));
    }
    Ok(worst)
}

/// Runs every gate. Each gate is independent; an error inside one marks
/// it failed without stopping the rest.
pub fn run_gates(opts: &VerifyOptions) -> Vec<GateResult> {
    let mut out = Vec::new();
    let unitarity_name = if opts.uncorrected_upsilon {
        "coefficient_unitarity_uncorrected"
    } else {
        "coefficient_unitarity"
    };
    out.push(gate(unitarity_name, 1e-15, || {
        coefficient_unitarity(100, opts.seed, opts.uncorrected_upsilon)
    }));
    out.push(gate("per_bin_unitarity", 1e-14, || per_bin_unitarity(100, opts.seed)));
    out.push(gate("lossy_peak_ce", 1e-9, || lossy_peak(&[0.0, 0.25, 1.0, 3.0])));
    out.push(GateResult::new(
        "rank_one_vs_expm",
        rank_one_vs_expm(8, opts.seed),
        1e-12,
    ));

    let small = FrequencyGrid::new(11, 8).expect("valid grid");
    out.push(gate("oracle_1n", 1e-6, || oracle_1n(&small, 0.1)));
    out.push(gate("oracle_mn", 1e-6, || oracle_mn(&small, 3, 0.1)));
    out.push(gate("sf_discrete_identity", 1e-12, || {
        let g = FrequencyGrid::new(11, opts.oversample)?;
        let mut worst: f64 = 0.0;
        for r in [0.01, 0.1, 0.5] {
            worst = worst.max(sf_discrete_check(&GateParams::from_ratio(r, &g)?, &g, 1)?);
        }
        Ok(worst)
    }));

    let os = opts.oversample;
    for hermite in [true, false] {
        let family = if hermite { "hg2" } else { "sf" };
        for r in [0.01, 0.5] {
            let coarse = isometry_1n(11, os, r, hermite);
            let fine = isometry_1n(11, 2 * os, r, hermite);
            match coarse {
                Ok(c) => {
                    out.push(GateResult::new(&format!("isometry_1n_{family}_r{r}"), c, 1e-3));
                    match fine {
                        Ok(f) => out.push(GateResult::at_least(
                            &format!("isometry_1n_{family}_r{r}_shrink"),
                            c / f,
                            3.0,
                        )),
                        Err(_) => out.push(GateResult::failed(&format!("isometry_1n_{family}_r{r}_shrink"), 3.0)),
                    }
                }
                Err(_) => out.push(GateResult::failed(&format!("isometry_1n_{family}_r{r}"), 1e-3)),
            }
        }
    }
    out.push(gate("isometry_mn", 1e-3, || isometry_mn(11, os, 3, 0.1)));
    out.push(gate("m1_reduction", 1e-8, || m1_reduction(&small, 0.1)));
    out
}
