//! Sweep configuration files.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "experiment": "metrics_1n",
//!   "grid": { "n_bins": 31, "oversample": 16 },
//!   "pumps": [{ "kind": "hermite_gauss", "order": 2, "label": "hg2" },
//!             { "kind": "single_bin", "bin": 0, "label": "sf" }],
//!   "r_range": { "start": 0.001, "stop": 0.5, "count": 8, "log": true },
//!   "matched_coupling": true,
//!   "output": "fig2"
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::linalg::CMatrix;
use crate::pumps::{
    default_hg_width, hermite_gauss_pump, identity_multipump, pump_from_unitary, random_isometry, single_bin_pump,
    MultiPump, PumpEnvelope,
};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    TransferMap,
    #[serde(rename = "metrics_1n")]
    Metrics1n,
    MetricsMn,
    LossPeakCe,
    Sensitivity,
    SynthCheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::TransferMap => "transfer_map",
            Experiment::Metrics1n => "metrics_1n",
            Experiment::MetricsMn => "metrics_mn",
            Experiment::LossPeakCe => "loss_peak_ce",
            Experiment::Sensitivity => "sensitivity",
            Experiment::SynthCheck => "synth_check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_bins: usize,
    pub oversample: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.n_bins, self.oversample)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RRange {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    #[serde(default)]
    pub log: bool,
}

impl RRange {
    pub fn values(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.start];
        }
        let steps = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                let f = i as f64 / steps;
                if i == 0 {
                    self.start
                } else if i == self.count - 1 {
                    self.stop
                } else if self.log {
                    (self.start.ln() + f * (self.stop.ln() - self.start.ln())).exp()
                } else {
                    self.start + f * (self.stop - self.start)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PumpSpec {
    HermiteGauss {
        order: u32,
        /// Spectral width in bins; defaults to a tenth of the bin count.
        #[serde(default)]
        width: Option<f64>,
        #[serde(default)]
        label: Option<String>,
    },
    SingleBin {
        bin: i64,
        #[serde(default)]
        label: Option<String>,
    },
    /// Identity gate on the central `channels` bins (all bins by default).
    Identity {
        #[serde(default)]
        channels: Option<usize>,
        #[serde(default)]
        label: Option<String>,
    },
    /// Discrete Fourier transform on the central `channels` bins.
    Dft {
        #[serde(default)]
        channels: Option<usize>,
        #[serde(default)]
        label: Option<String>,
    },
    /// Haar-random `channels × N` isometry.
    RandomIsometry {
        channels: usize,
        seed: u64,
        #[serde(default)]
        label: Option<String>,
    },
    /// One `bin_index,re,im` file per channel.
    Csv {
        paths: Vec<String>,
        #[serde(default)]
        label: Option<String>,
    },
}

impl PumpSpec {
    pub fn label(&self) -> String {
        let explicit = match self {
            PumpSpec::HermiteGauss { label, .. }
            | PumpSpec::SingleBin { label, .. }
            | PumpSpec::Identity { label, .. }
            | PumpSpec::Dft { label, .. }
            | PumpSpec::RandomIsometry { label, .. }
            | PumpSpec::Csv { label, .. } => label.clone(),
        };
        explicit.unwrap_or_else(|| match self {
            PumpSpec::HermiteGauss { order, .. } => format!("hg{order}"),
            PumpSpec::SingleBin { bin, .. } => format!("sf{bin}"),
            PumpSpec::Identity { .. } => "identity".into(),
            PumpSpec::Dft { .. } => "dft".into(),
            PumpSpec::RandomIsometry { seed, .. } => format!("random{seed}"),
            PumpSpec::Csv { .. } => "csv".into(),
        })
    }

    fn central(grid: &FrequencyGrid, channels: Option<usize>) -> Result<(usize, usize)> {
        let m = channels.unwrap_or(grid.n_bins());
        if m == 0 || m > grid.n_bins() {
            return Err(Error::Dimension(format!("{m} channels on {} bins", grid.n_bins())));
        }
        Ok((m, (grid.n_bins() - m) / 2))
    }

    /// The target isometry, for specs defined by one.
    pub fn target(&self, grid: &FrequencyGrid) -> Result<Option<CMatrix>> {
        use num_complex::Complex64;
        use rand::SeedableRng;
        Ok(match self {
            PumpSpec::Identity { channels, .. } => {
                let (m, off) = Self::central(grid, *channels)?;
                Some(CMatrix::from_fn(m, grid.n_bins(), |k, j| {
                    Complex64::new(if j == k + off { 1.0 } else { 0.0 }, 0.0)
                }))
            }
            PumpSpec::Dft { channels, .. } => {
                let (m, off) = Self::central(grid, *channels)?;
                let norm = 1.0 / (m as f64).sqrt();
                Some(CMatrix::from_fn(m, grid.n_bins(), |k, j| {
                    if j < off || j >= off + m {
                        Complex64::new(0.0, 0.0)
                    } else {
                        let phase = -2.0 * std::f64::consts::PI * (k * (j - off)) as f64 / m as f64;
                        Complex64::from_polar(norm, phase)
                    }
                }))
            }
            PumpSpec::RandomIsometry { channels, seed, .. } => {
                if *channels == 0 || *channels > grid.n_bins() {
                    return Err(Error::Dimension(format!(
                        "{channels} channels on {} bins",
                        grid.n_bins()
                    )));
                }
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
                Some(random_isometry(*channels, grid.n_bins(), &mut rng))
            }
            _ => None,
        })
    }

    /// Builds the pump; relative CSV paths resolve against `base`.
    pub fn build(&self, grid: &FrequencyGrid, base: &Path) -> Result<MultiPump> {
        match self {
            PumpSpec::HermiteGauss { order, width, .. } => Ok(MultiPump::single(hermite_gauss_pump(
                *order,
                width.unwrap_or_else(|| default_hg_width(grid)),
                grid,
            )?)),
            PumpSpec::SingleBin { bin, .. } => Ok(MultiPump::single(single_bin_pump(*bin, grid)?)),
            PumpSpec::Identity { channels, .. } => {
                let (m, _) = Self::central(grid, *channels)?;
                identity_multipump(m, grid)
            }
            PumpSpec::Dft { .. } | PumpSpec::RandomIsometry { .. } => {
                let u = self.target(grid)?.expect("spec defines a target");
                pump_from_unitary(&u, grid)
            }
            PumpSpec::Csv { paths, .. } => {
                let envelopes = paths
                    .iter()
                    .map(|p| {
                        let path = base.join(p);
                        let f =
                            std::fs::File::open(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                        PumpEnvelope::read_csv(f, *grid)
                    })
                    .collect::<Result<Vec<_>>>()?;
                MultiPump::new(envelopes)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub grid: GridSpec,
    /// Grid used with `--full`.
    #[serde(default)]
    pub full_grid: Option<GridSpec>,
    #[serde(default)]
    pub pumps: Vec<PumpSpec>,
    #[serde(default)]
    pub r_values: Vec<f64>,
    #[serde(default)]
    pub r_range: Option<RRange>,
    #[serde(default)]
    pub iota_over_gamma: Vec<f64>,
    #[serde(default = "default_true")]
    pub matched_coupling: bool,
    /// `η/√(γT)` when coupling is not matched.
    #[serde(default)]
    pub eta_over_sqrt_gamma_t: Option<f64>,
    /// Propagator steps per time sample for multi-channel kernels.
    #[serde(default)]
    pub steps_per_sample: Option<usize>,
    pub output: String,
}

fn default_true() -> bool {
    true
}

/// Grid used when `--full` is given without a `full_grid` entry.
pub const FULL_GRID: GridSpec = GridSpec {
    n_bins: 101,
    oversample: 8,
};

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// All r values: the explicit list followed by the range.
    pub fn r_values(&self) -> Vec<f64> {
        let mut r = self.r_values.clone();
        if let Some(range) = &self.r_range {
            r.extend(range.values());
        }
        r
    }

    /// `ι/γ` for the non-loss experiments.
    pub fn loss_ratio(&self) -> f64 {
        self.iota_over_gamma.first().copied().unwrap_or(0.0)
    }

    pub fn grid_spec(&self, full: bool) -> GridSpec {
        if full {
            self.full_grid.unwrap_or(FULL_GRID)
        } else {
            self.grid
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.grid.build()?;
        if let Some(g) = &self.full_grid {
            g.build()?;
        }
        if let Some(range) = &self.r_range {
            if range.count == 0 || (range.log && (range.start <= 0.0 || range.stop <= 0.0)) {
                return Err(Error::Parse(
                    "r_range needs count ≥ 1 and positive bounds for log spacing".into(),
                ));
            }
        }
        if self.r_values().iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::Parse("all r values must be positive".into()));
        }
        if self.iota_over_gamma.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::Parse("iota_over_gamma values must be non-negative".into()));
        }
        if self.output.is_empty() || self.output.contains(['/', '\\']) {
            return Err(Error::Parse("output must be a plain file stem".into()));
        }
        if !self.matched_coupling && self.eta_over_sqrt_gamma_t.is_none() {
            return Err(Error::Parse(
                "eta_over_sqrt_gamma_t is required without matched coupling".into(),
            ));
        }
        if matches!(self.steps_per_sample, Some(0)) {
            return Err(Error::Parse("steps_per_sample must be positive".into()));
        }
        if !matches!(self.experiment, Experiment::LossPeakCe) && self.iota_over_gamma.len() > 1 {
            return Err(Error::Parse(format!(
                "{} takes at most one iota_over_gamma value",
                self.experiment.name()
            )));
        }
        let needs_r = !matches!(self.experiment, Experiment::LossPeakCe);
        if needs_r && self.r_values().is_empty() {
            return Err(Error::Parse(format!(
                "{} needs r_values or r_range",
                self.experiment.name()
            )));
        }
        if matches!(self.experiment, Experiment::LossPeakCe) && self.iota_over_gamma.is_empty() {
            return Err(Error::Parse("loss_peak_ce needs iota_over_gamma".into()));
        }
        let needs_pumps = matches!(
            self.experiment,
            Experiment::TransferMap | Experiment::Metrics1n | Experiment::MetricsMn | Experiment::SynthCheck
        );
        if needs_pumps && self.pumps.is_empty() {
            return Err(Error::Parse(format!(
                "{} needs at least one pump",
                self.experiment.name()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2: &str = r#"{
        "schema_version": 1,
        "experiment": "metrics_1n",
        "grid": { "n_bins": 31, "oversample": 16 },
        "pumps": [{ "kind": "hermite_gauss", "order": 2 }, { "kind": "single_bin", "bin": 0, "label": "sf" }],
        "r_range": { "start": 0.001, "stop": 0.5, "count": 4, "log": true },
        "output": "fig2"
    }"#;

    #[test]
    fn parses_fig2() {
        let cfg = SweepConfig::from_json(FIG2).unwrap();
        assert_eq!(cfg.experiment, Experiment::Metrics1n);
        assert!(cfg.matched_coupling);
        let r = cfg.r_values();
        assert_eq!(r.len(), 4);
        assert!((r[0] - 0.001).abs() < 1e-15 && (r[3] - 0.5).abs() < 1e-12);
        assert_eq!(cfg.pumps[0].label(), "hg2");
        assert_eq!(cfg.pumps[1].label(), "sf");
        assert_eq!(cfg.grid_spec(true), FULL_GRID);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            FIG2.replace("\"schema_version\": 1", "\"schema_version\": 7"),
            FIG2.replace("\"n_bins\": 31", "\"n_bins\": 30"),
            FIG2.replace("\"start\": 0.001", "\"start\": -1.0"),
            FIG2.replace("\"output\": \"fig2\"", "\"output\": \"a/b\""),
            FIG2.replace("\"experiment\": \"metrics_1n\"", "\"experiment\": \"nope\""),
            FIG2.replace("\"output\"", "\"unknown\": 1, \"output\""),
        ];
        for text in bad {
            assert!(SweepConfig::from_json(&text).is_err(), "{text}");
        }
    }

    #[test]
    fn targets() {
        let g = FrequencyGrid::new(5, 8).unwrap();
        let dft = PumpSpec::Dft {
            channels: Some(3),
            label: None,
        };
        let u = dft.target(&g).unwrap().unwrap();
        let gram = &u * u.adjoint();
        assert!(crate::linalg::max_abs_diff(&gram, &CMatrix::identity(3, 3)) < 1e-12);
        let mp = dft.build(&g, Path::new(".")).unwrap();
        assert_eq!(mp.channels(), 3);
        let id = PumpSpec::Identity {
            channels: None,
            label: None,
        };
        assert_eq!(id.build(&g, Path::new(".")).unwrap().channels(), 5);
    }
}
