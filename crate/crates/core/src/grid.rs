//! Frequency-bin and time grids plus the gate parameter set.
//!
//! Internal units fix the observation window to `T = 1`, so the bin spacing
//! is `Δω = 2π` and every rate is measured against it. Bins are labelled
//! `n ∈ {-(N-1)/2, …, (N-1)/2}` with `ω_n = n Δω`; time samples are the
//! midpoints of `N_t` equal cells covering `[-T/2, T/2)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted ratio of time samples to frequency bins.
pub const MIN_OVERSAMPLE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    n_bins: usize,
    oversample: usize,
    window: f64,
}

impl FrequencyGrid {
    /// Grid with `n_bins` frequency bins and `n_bins * oversample` midpoint
    /// time samples over a unit window.
    pub fn new(n_bins: usize, oversample: usize) -> Result<Self> {
        if n_bins.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "n_bins must be odd so that bin 0 is the centre, got {n_bins}"
            )));
        }
        if n_bins < 3 {
            return Err(Error::InvalidGrid(format!("n_bins must be at least 3, got {n_bins}")));
        }
        if oversample < MIN_OVERSAMPLE {
            return Err(Error::InvalidGrid(format!(
                "oversample must be at least {MIN_OVERSAMPLE}, got {oversample}"
            )));
        }
        Ok(Self {
            n_bins,
            oversample,
            window: 1.0,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn oversample(&self) -> usize {
        self.oversample
    }

    /// `(N-1)/2`, the largest bin label.
    pub fn half_width(&self) -> i64 {
        (self.n_bins as i64 - 1) / 2
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn bin_spacing(&self) -> f64 {
        2.0 * PI / self.window
    }

    pub fn n_times(&self) -> usize {
        self.n_bins * self.oversample
    }

    pub fn dt(&self) -> f64 {
        self.window / self.n_times() as f64
    }

    /// Bin labels in ascending order.
    pub fn bins(&self) -> impl Iterator<Item = i64> + Clone {
        let half = self.half_width();
        -half..=half
    }

    /// Storage position of bin `n`.
    pub fn position(&self, n: i64) -> Option<usize> {
        let half = self.half_width();
        (-half..=half).contains(&n).then(|| (n + half) as usize)
    }

    pub fn checked_position(&self, n: i64) -> Result<usize> {
        self.position(n).ok_or(Error::BinOutOfRange {
            bin: n,
            half: self.half_width(),
        })
    }

    /// Bin label stored at position `j`.
    pub fn label(&self, j: usize) -> i64 {
        j as i64 - self.half_width()
    }

    pub fn omega(&self, n: i64) -> f64 {
        n as f64 * self.bin_spacing()
    }

    /// Midpoint `t_a` of time cell `a`.
    pub fn time(&self, a: usize) -> f64 {
        (a as f64 + 0.5) * self.dt() - 0.5 * self.window
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_times()).map(|a| self.time(a)).collect()
    }

    /// Time samples `f(t_a) = T^{-1/2} Σ_m c_m e^{-iω_m t_a}` of the bin
    /// coefficients `c` (stored in ascending bin order).
    pub fn synthesize(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(coeffs.len(), self.n_bins);
        (0..self.n_times()).map(|a| self.eval(coeffs, self.time(a))).collect()
    }

    /// Evaluate the trigonometric polynomial `T^{-1/2} Σ_m c_m e^{-iω_m t}` at
    /// an arbitrary time.
    pub fn eval(&self, coeffs: &[Complex64], t: f64) -> Complex64 {
        self.eval_at(coeffs, t) / self.window.sqrt()
    }

    fn eval_at(&self, coeffs: &[Complex64], t: f64) -> Complex64 {
        // e^{-iω_m t} for ascending m via a single rotation.
        let step = Complex64::from_polar(1.0, -self.bin_spacing() * t);
        let mut phase = Complex64::from_polar(1.0, self.bin_spacing() * t * self.half_width() as f64);
        let mut acc = Complex64::new(0.0, 0.0);
        for c in coeffs {
            acc += c * phase;
            phase *= step;
        }
        acc
    }

    /// Inverse of [`synthesize`](Self::synthesize):
    /// `c_m = T^{-1/2} Σ_a f(t_a) e^{iω_m t_a} Δt`.
    pub fn analyze(&self, samples: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(samples.len(), self.n_times());
        let dt = self.dt();
        let norm = self.window.sqrt().recip();
        self.bins()
            .map(|n| {
                let w = self.omega(n);
                samples
                    .iter()
                    .enumerate()
                    .map(|(a, f)| f * Complex64::from_polar(1.0, w * self.time(a)))
                    .sum::<Complex64>()
                    * dt
                    * norm
            })
            .collect()
    }

    /// Row `n` of the partial DFT, `e^{iω_n t_a}` for every time sample.
    pub fn forward_row(&self, n: i64) -> Vec<Complex64> {
        let w = self.omega(n);
        (0..self.n_times())
            .map(|a| Complex64::from_polar(1.0, w * self.time(a)))
            .collect()
    }
}

/// Physical rates of one gate configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    /// External cavity coupling rate γ.
    pub gamma: f64,
    /// Effective nonlinear coupling η (η²/T is a rate).
    pub eta: f64,
    /// Internal loss rate ι.
    pub iota: f64,
    /// Observation window T.
    pub window: f64,
}

impl GateParams {
    pub fn new(gamma: f64, eta: f64, iota: f64, window: f64) -> Result<Self> {
        let params = Self {
            gamma,
            eta,
            iota,
            window,
        };
        params.validate()?;
        Ok(params)
    }

    /// Parameters with `γ = r Δω` on `grid`, lossless and matched.
    pub fn from_ratio(r: f64, grid: &FrequencyGrid) -> Result<Self> {
        Ok(Self::new(r * grid.bin_spacing(), 0.0, 0.0, grid.window())?.matched())
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.gamma, self.eta, self.iota, self.window]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("all rates must be finite".into()));
        }
        if self.gamma <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.eta < 0.0 {
            return Err(Error::InvalidParams(format!(
                "eta must be non-negative, got {}",
                self.eta
            )));
        }
        if self.iota < 0.0 {
            return Err(Error::InvalidParams(format!(
                "iota must be non-negative, got {}",
                self.iota
            )));
        }
        if self.window <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "window must be positive, got {}",
                self.window
            )));
        }
        Ok(())
    }

    /// Same parameters at the matched coupling `η = √((γ+ι)T)`.
    pub fn matched(self) -> Self {
        Self {
            eta: ((self.gamma + self.iota) * self.window).sqrt(),
            ..self
        }
    }

    pub fn with_eta(self, eta: f64) -> Self {
        Self { eta, ..self }
    }

    pub fn with_iota(self, iota: f64) -> Self {
        Self { iota, ..self }
    }

    /// `γ/Δω` for a window `T`.
    pub fn gamma_over_bin_spacing(&self) -> f64 {
        self.gamma * self.window / (2.0 * PI)
    }

    pub fn eta_over_sqrt_gamma_t(&self) -> f64 {
        self.eta / (self.gamma * self.window).sqrt()
    }

    /// Total cavity decay rate `γ + ι`.
    pub fn total_decay(&self) -> f64 {
        self.gamma + self.iota
    }
}

/// Returns `params` with `η = √((γ+ι)T)`.
pub fn matched_eta(params: GateParams) -> GateParams {
    params.matched()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_101_by_8() {
        let g = FrequencyGrid::new(101, 8).unwrap();
        assert_eq!(g.n_times(), 808);
        assert_abs_diff_eq!(g.bin_spacing(), 2.0 * PI);
        assert_abs_diff_eq!(g.bin_spacing() * g.window(), 2.0 * PI);
        for a in [0, 1, 400, 807] {
            assert_abs_diff_eq!(g.time(a), (a as f64 + 0.5) / 808.0 - 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn smallest_grid() {
        let g = FrequencyGrid::new(3, 8).unwrap();
        assert_eq!(g.bins().collect::<Vec<_>>(), vec![-1, 0, 1]);
        assert_eq!(g.n_times(), 24);
    }

    #[test]
    fn times_symmetric() {
        let g = FrequencyGrid::new(11, 8).unwrap();
        let t = g.times();
        for a in 0..t.len() {
            assert_abs_diff_eq!(t[a], -t[t.len() - 1 - a], epsilon = 1e-15);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(FrequencyGrid::new(10, 8), Err(Error::InvalidGrid(_))));
        assert!(matches!(FrequencyGrid::new(1, 8), Err(Error::InvalidGrid(_))));
        assert!(matches!(FrequencyGrid::new(11, 4), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn positions_round_trip() {
        let g = FrequencyGrid::new(7, 8).unwrap();
        for (j, n) in g.bins().enumerate() {
            assert_eq!(g.position(n), Some(j));
            assert_eq!(g.label(j), n);
        }
        assert_eq!(g.position(4), None);
        assert!(g.checked_position(-4).is_err());
    }

    #[test]
    fn parseval_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n_bins in [3, 11, 31] {
            let g = FrequencyGrid::new(n_bins, 8).unwrap();
            let c: Vec<Complex64> = (0..n_bins)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let f = g.synthesize(&c);
            let energy_t: f64 = f.iter().map(|v| v.norm_sqr()).sum::<f64>() * g.dt();
            let energy_f: f64 = c.iter().map(|v| v.norm_sqr()).sum();
            assert!((energy_t - energy_f).abs() < 1e-12 * energy_f.max(1.0));
            let back = g.analyze(&f);
            for (x, y) in back.iter().zip(&c) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn eval_matches_samples() {
        let g = FrequencyGrid::new(5, 8).unwrap();
        let c: Vec<Complex64> = (0..5).map(|k| Complex64::new(k as f64, 1.0 - k as f64)).collect();
        let f = g.synthesize(&c);
        for a in [0, 3, 39] {
            assert!((g.eval(&c, g.time(a)) - f[a]).norm() < 1e-13);
        }
    }

    #[test]
    fn matched_coupling_examples() {
        let p = GateParams::new(1.0, 0.3, 0.0, 1.0).unwrap().matched();
        assert_abs_diff_eq!(p.eta, 1.0, epsilon = 1e-15);
        let p = GateParams::new(1.0, 0.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(matched_eta(p).eta, 2f64.sqrt(), epsilon = 1e-15);
        let p = GateParams::new(4.0, 0.0, 0.0, 1.0).unwrap().matched();
        assert_abs_diff_eq!(p.eta, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn ratio_parameterisation() {
        let g = FrequencyGrid::new(11, 8).unwrap();
        let p = GateParams::from_ratio(0.25, &g).unwrap();
        assert_abs_diff_eq!(p.gamma_over_bin_spacing(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(p.eta_over_sqrt_gamma_t(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(GateParams::new(0.0, 1.0, 0.0, 1.0).is_err());
        assert!(GateParams::new(1.0, -1.0, 0.0, 1.0).is_err());
        assert!(GateParams::new(1.0, 1.0, -0.1, 1.0).is_err());
        assert!(GateParams::new(f64::NAN, 1.0, 0.0, 1.0).is_err());
    }
}
