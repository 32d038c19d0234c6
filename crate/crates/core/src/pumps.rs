//! Pump envelopes: construction, normalisation and CSV interchange.
//!
//! An envelope is stored by its frequency-bin coefficients `β(ω_m)` in
//! ascending bin order, with `β(t) = T^{-1/2} Σ_m β(ω_m) e^{-iω_m t}` and
//! `Σ_m |β(ω_m)|² = 1`. The temporal mode it selects is
//! `Σ_m β(ω_{-m}) a(ω_m)`, so the vector the figures of merit compare
//! against is the reflected one, `c_m = β(ω_{-m})`.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::linalg::{row_orthonormality, CMatrix, ONE, ZERO};

/// Largest energy fraction a Hermite–Gaussian pump may lose outside the grid.
pub const MAX_TAIL_FRACTION: f64 = 1e-6;

/// Gram-matrix tolerance for mutually orthonormal pumps.
pub const GRAM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PumpEnvelope {
    grid: FrequencyGrid,
    coeffs: Vec<Complex64>,
}

impl PumpEnvelope {
    /// Normalises `coeffs` (ascending bin order) to unit energy.
    pub fn new(grid: FrequencyGrid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.n_bins() {
            return Err(Error::Dimension(format!(
                "pump has {} coefficients but the grid has {} bins",
                coeffs.len(),
                grid.n_bins()
            )));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidPump("non-finite coefficient".into()));
        }
        let norm = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidPump("pump has zero energy".into()));
        }
        Ok(Self {
            grid,
            coeffs: coeffs.into_iter().map(|c| c / norm).collect(),
        })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `β(ω_n)`, zero outside the grid.
    pub fn coeff(&self, n: i64) -> Complex64 {
        self.grid.position(n).map_or(ZERO, |j| self.coeffs[j])
    }

    /// `c_m = β(ω_{-m})` in ascending `m`.
    pub fn reflected(&self) -> Vec<Complex64> {
        self.coeffs.iter().rev().copied().collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `β(t_a)` on every time sample.
    pub fn samples(&self) -> Vec<Complex64> {
        self.grid.synthesize(&self.coeffs)
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        self.grid.eval(&self.coeffs, t)
    }

    pub fn with_global_phase(&self, theta: f64) -> Self {
        let p = Complex64::from_polar(1.0, theta);
        Self {
            grid: self.grid,
            coeffs: self.coeffs.iter().map(|c| c * p).collect(),
        }
    }

    /// Hex SHA-256 over the little-endian coefficient bytes.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for c in &self.coeffs {
            h.update(c.re.to_le_bytes());
            h.update(c.im.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Writes `bin_index,re,im` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (n, c) in self.grid.bins().zip(&self.coeffs) {
            w.serialize(CoeffRow {
                bin_index: n,
                re: c.re,
                im: c.im,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `bin_index,re,im` rows; missing bins are zero and the result is
    /// renormalised.
    pub fn read_csv<R: Read>(reader: R, grid: FrequencyGrid) -> Result<Self> {
        let mut coeffs = vec![ZERO; grid.n_bins()];
        let mut r = csv::Reader::from_reader(reader);
        for row in r.deserialize() {
            let row: CoeffRow = row?;
            let j = grid.checked_position(row.bin_index)?;
            coeffs[j] = Complex64::new(row.re, row.im);
        }
        Self::new(grid, coeffs)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CoeffRow {
    bin_index: i64,
    re: f64,
    im: f64,
}

/// Default Hermite–Gaussian spectral width: a tenth of the bin count.
pub fn default_hg_width(grid: &FrequencyGrid) -> f64 {
    grid.n_bins() as f64 / 10.0
}

/// Normalised Hermite function `ψ_n(x) ∝ H_n(x) e^{-x²/2}` by the stable
/// three-term recurrence.
fn hermite_function(order: u32, x: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    for k in 0..order {
        let k = k as f64;
        let next = (2.0 / (k + 1.0)).sqrt() * x * cur - (k / (k + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Hermite–Gaussian pump `β(ω_m) ∝ H_order(m/σ) e^{-m²/2σ²}` with width `σ`
/// in bins.
pub fn hermite_gauss_pump(order: u32, width: f64, grid: &FrequencyGrid) -> Result<PumpEnvelope> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::InvalidPump(format!("width must be positive, got {width}")));
    }
    let coeffs: Vec<Complex64> = grid
        .bins()
        .map(|m| Complex64::new(hermite_function(order, m as f64 / width), 0.0))
        .collect();
    let inside: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
    let half = grid.half_width();
    let reach = half + 64 + (40.0 * width * (1.0 + (order as f64).sqrt())) as i64;
    let tail: f64 = (half + 1..=reach)
        .map(|m| 2.0 * hermite_function(order, m as f64 / width).powi(2))
        .sum();
    let tail_fraction = tail / (inside + tail);
    if !(tail_fraction <= MAX_TAIL_FRACTION) {
        return Err(Error::AliasedPump { tail_fraction });
    }
    PumpEnvelope::new(*grid, coeffs)
}

/// Pump occupying the single bin `l`: `β(t) = T^{-1/2} e^{-iω_l t}`.
pub fn single_bin_pump(l: i64, grid: &FrequencyGrid) -> Result<PumpEnvelope> {
    let j = grid.checked_position(l)?;
    let mut coeffs = vec![ZERO; grid.n_bins()];
    coeffs[j] = ONE;
    PumpEnvelope::new(*grid, coeffs)
}

/// `M` mutually orthonormal envelopes, one per cavity resonance channel.
///
/// Channel `i` (storage order) carries the label `k = i - (M-1)/2`.
#[derive(Debug, Clone)]
pub struct MultiPump {
    envelopes: Vec<PumpEnvelope>,
    target_unitary: Option<CMatrix>,
}

impl MultiPump {
    pub fn new(envelopes: Vec<PumpEnvelope>) -> Result<Self> {
        let Some(first) = envelopes.first() else {
            return Err(Error::InvalidPump("multipump needs at least one channel".into()));
        };
        let grid = *first.grid();
        if envelopes.iter().any(|e| *e.grid() != grid) {
            return Err(Error::Dimension("all envelopes must share one grid".into()));
        }
        let pump = Self {
            envelopes,
            target_unitary: None,
        };
        let gram = pump.gram();
        let mut worst = (0, 0, 0.0);
        for r in 0..gram.nrows() {
            for c in 0..gram.ncols() {
                let target = if r == c { ONE } else { ZERO };
                let d = (gram[(r, c)] - target).norm();
                if d > worst.2 {
                    worst = (r, c, d);
                }
            }
        }
        if worst.2 > GRAM_TOLERANCE {
            return Err(Error::NonOrthonormalPumps {
                row: worst.0,
                col: worst.1,
                deviation: worst.2,
            });
        }
        Ok(pump)
    }

    pub fn single(pump: PumpEnvelope) -> Self {
        Self {
            envelopes: vec![pump],
            target_unitary: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.envelopes.len()
    }

    pub fn channel_label(&self, i: usize) -> i64 {
        i as i64 - (self.channels() as i64 - 1) / 2
    }

    pub fn envelopes(&self) -> &[PumpEnvelope] {
        &self.envelopes
    }

    pub fn envelope(&self, i: usize) -> &PumpEnvelope {
        &self.envelopes[i]
    }

    pub fn grid(&self) -> &FrequencyGrid {
        self.envelopes[0].grid()
    }

    pub fn target_unitary(&self) -> Option<&CMatrix> {
        self.target_unitary.as_ref()
    }

    /// `∫ β_k*(t) β_k'(t) dt`, evaluated from the bin coefficients.
    pub fn gram(&self) -> CMatrix {
        let m = self.channels();
        CMatrix::from_fn(m, m, |r, c| {
            self.envelopes[r]
                .coeffs()
                .iter()
                .zip(self.envelopes[c].coeffs())
                .map(|(a, b)| a.conj() * b)
                .sum()
        })
    }

    /// Time-major samples: entry `a` is the channel vector `β(t_a)`.
    pub fn sample_vectors(&self) -> Vec<Vec<Complex64>> {
        let per_channel: Vec<Vec<Complex64>> = self.envelopes.iter().map(|e| e.samples()).collect();
        let nt = self.grid().n_times();
        (0..nt).map(|a| per_channel.iter().map(|s| s[a]).collect()).collect()
    }

    pub fn eval_vector(&self, t: f64) -> Vec<Complex64> {
        self.envelopes.iter().map(|e| e.eval(t)).collect()
    }

    /// Reads back `U_kl = -β_k(ω_{-l})` as an `M × N` matrix.
    pub fn realized_unitary(&self) -> CMatrix {
        let n = self.grid().n_bins();
        CMatrix::from_fn(self.channels(), n, |k, j| -self.envelopes[k].reflected()[j])
    }

    pub fn with_channel_phases(&self, phases: &[f64]) -> Self {
        assert_eq!(phases.len(), self.channels());
        Self {
            envelopes: self
                .envelopes
                .iter()
                .zip(phases)
                .map(|(e, th)| e.with_global_phase(*th))
                .collect(),
            target_unitary: self.target_unitary.clone(),
        }
    }
}

/// Pumps realising the truncated unitary `U` (rows ↔ channels ascending,
/// columns ↔ bins ascending) through `β_k(ω_{-l}) = -U_kl`.
pub fn pump_from_unitary(u: &CMatrix, grid: &FrequencyGrid) -> Result<MultiPump> {
    let n = grid.n_bins();
    if u.ncols() != n {
        return Err(Error::Dimension(format!(
            "unitary has {} columns but the grid has {n} bins",
            u.ncols()
        )));
    }
    if u.nrows() == 0 || u.nrows() > n {
        return Err(Error::Dimension(format!(
            "unitary must have between 1 and {n} rows, got {}",
            u.nrows()
        )));
    }
    let (row_a, row_b, deviation) = row_orthonormality(u);
    if deviation > GRAM_TOLERANCE {
        return Err(Error::NonIsometric {
            row_a,
            row_b,
            deviation,
        });
    }
    let envelopes = (0..u.nrows())
        .map(|k| {
            // coefficient at bin m is -U_{k, -m}; reversing the row maps l → -l
            let coeffs: Vec<Complex64> = (0..n).rev().map(|j| -u[(k, j)]).collect();
            PumpEnvelope::new(*grid, coeffs)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pump = MultiPump::new(envelopes)?;
    pump.target_unitary = Some(u.clone());
    Ok(pump)
}

/// The multi-tone pump `β_k(ω_m) = -δ_{m,-k}` realising the identity gate.
pub fn identity_multipump(channels: usize, grid: &FrequencyGrid) -> Result<MultiPump> {
    if channels == 0 || channels.is_multiple_of(2) {
        return Err(Error::InvalidPump(format!("channel count must be odd, got {channels}")));
    }
    if channels > grid.n_bins() {
        return Err(Error::Dimension(format!(
            "{channels} channels exceed the {} grid bins",
            grid.n_bins()
        )));
    }
    let offset = (grid.n_bins() - channels) / 2;
    let u = CMatrix::from_fn(channels, grid.n_bins(), |k, j| if j == k + offset { ONE } else { ZERO });
    pump_from_unitary(&u, grid)
}

/// Haar-random `m × n` isometry (orthonormal rows) from the QR
/// decomposition of a complex Gaussian matrix, phase-fixed so the
/// distribution is uniform.
pub fn random_isometry<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> CMatrix {
    assert!(m <= n && m > 0);
    let z = CMatrix::from_fn(n, m, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..m {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for row in 0..n {
            q[(row, c)] *= phase;
        }
    }
    q.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> FrequencyGrid {
        FrequencyGrid::new(n, 8).unwrap()
    }

    #[test]
    fn gaussian_is_normalised() {
        let p = hermite_gauss_pump(0, 5.0, &grid(101)).unwrap();
        assert_abs_diff_eq!(p.norm_sqr(), 1.0, epsilon = 1e-12);
        let dt = p.grid().dt();
        let e: f64 = p.samples().iter().map(|b| b.norm_sqr()).sum::<f64>() * dt;
        assert_abs_diff_eq!(e, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn default_width_hg2_fits_grids() {
        for n in [3, 11, 31, 101] {
            let g = grid(n);
            let p = hermite_gauss_pump(2, default_hg_width(&g), &g).unwrap();
            assert_abs_diff_eq!(p.norm_sqr(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn hg2_shape() {
        let g = grid(101);
        let p = hermite_gauss_pump(2, 10.0, &g).unwrap();
        // even, with negative lobe at the centre and sign change near σ/√2
        assert!((p.coeff(7) - p.coeff(-7)).norm() < 1e-15);
        assert!(p.coeff(0).re < 0.0);
        assert!(p.coeff(10).re > 0.0);
    }

    #[test]
    fn hermite_orthogonality() {
        let g = grid(101);
        let a = hermite_gauss_pump(1, 10.0, &g).unwrap();
        let b = hermite_gauss_pump(2, 10.0, &g).unwrap();
        let ip: Complex64 = a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| x.conj() * y).sum();
        assert!(ip.norm() < 1e-10);
    }

    #[test]
    fn wide_hg_is_rejected() {
        let err = hermite_gauss_pump(2, 4.0, &grid(11)).unwrap_err();
        assert!(matches!(err, Error::AliasedPump { .. }));
        assert!(hermite_gauss_pump(0, 0.0, &grid(11)).is_err());
    }

    #[test]
    fn single_bin_pumps() {
        let g = grid(11);
        let p = single_bin_pump(0, &g).unwrap();
        for b in p.samples() {
            assert!((b - ONE).norm() < 1e-14);
        }
        let p = single_bin_pump(1, &g).unwrap();
        for (a, b) in p.samples().iter().enumerate() {
            let expect = Complex64::from_polar(1.0, -g.omega(1) * g.time(a));
            assert!((b - expect).norm() < 1e-13);
        }
        for l in g.bins() {
            assert_eq!(single_bin_pump(l, &g).unwrap().norm_sqr(), 1.0);
        }
        assert!(matches!(single_bin_pump(6, &g), Err(Error::BinOutOfRange { .. })));
    }

    #[test]
    fn identity_from_unitary() {
        let g = grid(3);
        let u = CMatrix::identity(3, 3);
        let mp = pump_from_unitary(&u, &g).unwrap();
        for k in 0..3 {
            let reflected = mp.envelope(k).reflected();
            for l in 0..3 {
                let expect = if k == l { -1.0 } else { 0.0 };
                assert_abs_diff_eq!(reflected[l].re, expect);
                assert_abs_diff_eq!(reflected[l].im, 0.0);
            }
        }
        let id = identity_multipump(3, &g).unwrap();
        for k in 0..3 {
            assert_eq!(id.envelope(k).coeffs(), mp.envelope(k).coeffs());
        }
    }

    #[test]
    fn identity_channel_bins() {
        let g = grid(11);
        let id = identity_multipump(5, &g).unwrap();
        for i in 0..5 {
            let k = id.channel_label(i);
            for m in g.bins() {
                let expect = if m == -k { -1.0 } else { 0.0 };
                assert_eq!(id.envelope(i).coeff(m), Complex64::new(expect, 0.0));
            }
        }
        let gram = id.gram();
        assert_eq!(gram, CMatrix::identity(5, 5));
        assert!(identity_multipump(13, &g).is_err());
        assert!(identity_multipump(4, &g).is_err());
    }

    #[test]
    fn single_channel_identity_is_sf_pump() {
        let g = grid(7);
        let id = identity_multipump(1, &g).unwrap();
        let sf = single_bin_pump(0, &g).unwrap();
        for (a, b) in id.envelope(0).coeffs().iter().zip(sf.coeffs()) {
            assert_eq!(*a, -b);
        }
    }

    #[test]
    fn dft_unitary_pumps() {
        let g = grid(3);
        let u = CMatrix::from_fn(3, 3, |k, l| {
            Complex64::from_polar(1.0 / 3f64.sqrt(), -2.0 * std::f64::consts::PI * (k * l) as f64 / 3.0)
        });
        let mp = pump_from_unitary(&u, &g).unwrap();
        let gram = mp.gram();
        for r in 0..3 {
            for c in 0..3 {
                let target = if r == c { 1.0 } else { 0.0 };
                assert!((gram[(r, c)] - target).norm() < 1e-12);
            }
            for c in mp.envelope(r).coeffs() {
                assert_abs_diff_eq!(c.norm(), 1.0 / 3f64.sqrt(), epsilon = 1e-15);
            }
        }
        let back = mp.realized_unitary();
        assert!(crate::linalg::max_abs_diff(&back, &u) < 1e-12);
    }

    #[test]
    fn random_isometry_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = grid(5);
        let u = random_isometry(2, 5, &mut rng);
        let mp = pump_from_unitary(&u, &g).unwrap();
        assert_eq!(mp.channels(), 2);
        assert!(crate::linalg::max_abs_diff(&mp.realized_unitary(), &u) < 1e-12);
    }

    #[test]
    fn non_isometry_rejected() {
        let g = grid(3);
        let mut u = CMatrix::identity(2, 3);
        u[(0, 1)] = Complex64::new(0.1, 0.0);
        match pump_from_unitary(&u, &g) {
            Err(Error::NonIsometric { deviation, .. }) => assert!(deviation > 0.09),
            other => panic!("expected NonIsometric, got {other:?}"),
        }
    }

    #[test]
    fn non_orthogonal_envelopes_rejected() {
        let g = grid(5);
        let a = hermite_gauss_pump(0, 0.5, &g).unwrap();
        let b = single_bin_pump(0, &g).unwrap();
        assert!(matches!(
            MultiPump::new(vec![a, b]),
            Err(Error::NonOrthonormalPumps { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let g = grid(11);
        let p = hermite_gauss_pump(2, 1.1, &g).unwrap().with_global_phase(0.4);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("bin_index,re,im\n-5,"));
        let q = PumpEnvelope::read_csv(buf.as_slice(), g).unwrap();
        for (a, b) in p.coeffs().iter().zip(q.coeffs()) {
            assert!((a - b).norm() < 1e-15);
        }
        assert_eq!(p.digest().len(), 64);
        assert_eq!(p.digest(), p.clone().digest());
        assert_ne!(p.digest(), p.with_global_phase(0.1).digest());
    }

    #[test]
    fn csv_rejects_out_of_range_bins() {
        let g = grid(3);
        let text = "bin_index,re,im\n5,1.0,0.0\n";
        assert!(matches!(
            PumpEnvelope::read_csv(text.as_bytes(), g),
            Err(Error::BinOutOfRange { .. })
        ));
    }
}
