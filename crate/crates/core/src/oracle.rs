//! Brute-force reference solvers for checking the analytic kernels.
//!
//! [`dense_bvp_solve`] integrates the cavity equation directly with the
//! implicit midpoint rule and enforces periodicity through the monodromy,
//! never touching the closed-form propagator. [`dense_expm`] is a plain
//! scaling-and-squaring exponential for checking the rank-one step factors.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{FrequencyGrid, GateParams};
use crate::kernel1n::{self, check_dynamics, check_window, sf_response, sf_response_discrete};
use crate::linalg::{norm1, CMatrix, CVector, ZERO};
use crate::pumps::{single_bin_pump, MultiPump};

/// Default implicit-midpoint substeps per time cell.
pub const DEFAULT_SUBSTEPS: usize = 16;

/// Where the unit impulse enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OraclePort {
    Signal,
    Idler(usize),
    Loss(usize),
}

/// Response to a unit impulse at the centre of one time cell.
#[derive(Debug, Clone)]
pub struct BVPSolution {
    /// `b_k(t_a)`, M×N_t; at the impulse cell the mean of the values on
    /// either side of the jump.
    pub b_samples: CMatrix,
    /// Smooth part of the idler output, `√γ b`.
    pub out_samples: CMatrix,
    /// `‖b(T/2) - b(-T/2)‖` after the periodic solve.
    pub boundary_mismatch: f64,
}

fn cell_matrix(params: &GateParams, beta: &[Complex64]) -> CMatrix {
    let m = beta.len();
    let e2 = 0.5 * params.eta * params.eta;
    CMatrix::from_fn(m, m, |r, c| {
        let diag = if r == c { 0.5 * params.total_decay() } else { 0.0 };
        Complex64::new(diag, 0.0) + beta[r] * beta[c].conj() * e2
    })
}

/// Solves `ḃ = -𝕄(t) b - h δ(t - t_b)` on the periodic window with `𝕄`
/// frozen at `t_a` inside each cell and `substeps` (even) implicit
/// midpoint steps per cell.
pub fn dense_bvp_solve(
    params: &GateParams,
    pump: &MultiPump,
    port: OraclePort,
    input_time_index: usize,
    substeps: usize,
) -> Result<BVPSolution> {
    check_dynamics(params)?;
    let grid = *pump.grid();
    check_window(params, &grid)?;
    let (nt, m) = (grid.n_times(), pump.channels());
    if input_time_index >= nt {
        return Err(Error::Dimension(format!(
            "time index {input_time_index} beyond {nt} samples"
        )));
    }
    if substeps == 0 || substeps % 2 == 1 {
        return Err(Error::Oracle(format!(
            "substeps must be even and positive, got {substeps}"
        )));
    }
    let samples = pump.sample_vectors();
    let h = grid.dt() / substeps as f64;
    let id = CMatrix::identity(m, m);
    let half = Complex64::new(0.5 * h, 0.0);
    // one half-cell map per cell: (s/2) Cayley steps
    let maps: Vec<CMatrix> = samples
        .iter()
        .map(|beta| {
            let mm = cell_matrix(params, beta);
            let lhs = &id + &mm * half;
            let rhs = &id - &mm * half;
            let step = lhs
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Oracle("singular Cayley step".into()))?;
            let mut p = id.clone();
            for _ in 0..substeps / 2 {
                p = &step * p;
            }
            Ok(p)
        })
        .collect::<Result<_>>()?;

    let jump: CVector = match port {
        OraclePort::Signal => DVector::from_iterator(m, samples[input_time_index].iter().map(|b| b * params.eta)),
        OraclePort::Idler(j) | OraclePort::Loss(j) => {
            if j >= m {
                return Err(Error::Dimension(format!("channel {j} beyond {m}")));
            }
            let rate = if matches!(port, OraclePort::Idler(_)) {
                params.gamma
            } else {
                params.iota
            };
            let mut v = CVector::zeros(m);
            v[j] = Complex64::new(rate.sqrt(), 0.0);
            v
        }
    };

    let sweep = |start: CVector, record: Option<&mut CMatrix>| -> CVector {
        let mut b = start;
        let mut rec = record;
        for a in 0..nt {
            b = &maps[a] * b;
            if a == input_time_index {
                let after = &b - &jump;
                if let Some(r) = rec.as_deref_mut() {
                    r.set_column(a, &((&b + &after) * Complex64::new(0.5, 0.0)));
                }
                b = after;
            } else if let Some(r) = rec.as_deref_mut() {
                r.set_column(a, &b);
            }
            b = &maps[a] * b;
        }
        b
    };

    // monodromy and particular solution
    let mut phi = CMatrix::zeros(m, m);
    for (a, map) in maps.iter().enumerate() {
        phi = if a == 0 { map * map } else { map * map * phi };
    }
    let particular = sweep(CVector::zeros(m), None);
    let system = &id - &phi;
    let start = system
        .clone()
        .lu()
        .solve(&particular)
        .ok_or_else(|| Error::Oracle("singular periodic system I - Φ".into()))?;
    let mut b_samples = CMatrix::zeros(m, nt);
    let end = sweep(start.clone(), Some(&mut b_samples));
    let boundary_mismatch = (&end - &start).norm();
    let out_samples = &b_samples * Complex64::new(params.gamma.sqrt(), 0.0);
    Ok(BVPSolution {
        b_samples,
        out_samples,
        boundary_mismatch,
    })
}

/// Padé(13,13) numerator/denominator coefficients.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Largest 1-norm for which the unscaled Padé(13) approximant is accurate
/// to double precision.
const THETA_13: f64 = 5.371920351148152;

/// `exp(A)` by scaling and squaring with a Padé(13) approximant.
pub fn dense_expm(a: &CMatrix) -> CMatrix {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    let norm = norm1(a);
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * Complex64::new(2f64.powi(-s), 0.0);
    let c = |k: usize| Complex64::new(PADE13[k], 0.0);
    let id = CMatrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let u_inner = &a6 * (&a6 * c(13) + &a4 * c(11) + &a2 * c(9)) + &a6 * c(7) + &a4 * c(5) + &a2 * c(3) + &id * c(1);
    let u = &a * u_inner;
    let v = &a6 * (&a6 * c(12) + &a4 * c(10) + &a2 * c(8)) + &a6 * c(6) + &a4 * c(4) + &a2 * c(2) + &id * c(0);
    let mut r = (&v - &u)
        .lu()
        .solve(&(&v + &u))
        .expect("Padé denominator is nonsingular for scaled input");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Largest relative column deviation between sampled kernels and oracle
/// responses, `max_a |G(t_a,t_b) - g_oracle(t_a)| / max_a |G(t_a,t_b)|`,
/// over the listed columns. `kernels[k]` holds output channel `k`.
pub fn column_deviation(
    kernels: &[CMatrix],
    params: &GateParams,
    pump: &MultiPump,
    port: OraclePort,
    columns: &[usize],
    substeps: usize,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &b in columns {
        let sol = dense_bvp_solve(params, pump, port, b, substeps)?;
        let mut scale: f64 = 0.0;
        let mut diff: f64 = 0.0;
        for (k, g) in kernels.iter().enumerate() {
            for a in 0..g.nrows() {
                scale = scale.max(g[(a, b)].norm());
                diff = diff.max((g[(a, b)] - sol.out_samples[(k, a)]).norm());
            }
        }
        if scale > 0.0 {
            worst = worst.max(diff / scale);
        } else {
            worst = worst.max(diff);
        }
    }
    Ok(worst)
}

/// `max_n |g̃_s(n, n - l) - μ'_n|` for a single-bin pump at `l`, against the
/// continuous-time closed form.
pub fn sf_closed_form_check(params: &GateParams, grid: &FrequencyGrid, l: i64) -> Result<f64> {
    let sf = sf_response(params, l, grid)?;
    sf_deviation(params, grid, l, &sf.mu)
}

/// The same comparison against the exact response of the discretised
/// kernel, which the quadrature must reproduce to rounding error.
pub fn sf_discrete_check(params: &GateParams, grid: &FrequencyGrid, l: i64) -> Result<f64> {
    let sf = sf_response_discrete(params, l, grid)?;
    sf_deviation(params, grid, l, &sf.mu)
}

fn sf_deviation(params: &GateParams, grid: &FrequencyGrid, l: i64, mu: &[Complex64]) -> Result<f64> {
    let pump = single_bin_pump(l, grid)?;
    let t = kernel1n::transfer_matrix(&kernel1n::build_kernels(params, &pump)?);
    let mut worst: f64 = 0.0;
    for (j, n) in grid.bins().enumerate() {
        for (i, m) in grid.bins().enumerate() {
            let expect = if m == n - l { mu[j] } else { ZERO };
            worst = worst.max((t.gs_tilde[(j, i)] - expect).norm());
        }
    }
    Ok(worst)
}
