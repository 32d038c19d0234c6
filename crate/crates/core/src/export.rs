//! CSV and JSON writers for transfer matrices.
//!
//! Each matrix is a long-format CSV with one row per entry, bins in
//! ascending order. Multi-channel files prepend channel columns. A JSON
//! sidecar records the parameters, the grid and a digest of the pump.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{FrequencyGrid, GateParams};
use crate::kernel1n::TransferSet;
use crate::kernelmn::TransferSetMN;
use crate::linalg::CMatrix;
use crate::pumps::MultiPump;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridInfo {
    pub n_bins: usize,
    pub oversample: usize,
    pub n_times: usize,
    pub window: f64,
}

impl From<&FrequencyGrid> for GridInfo {
    fn from(g: &FrequencyGrid) -> Self {
        Self {
            n_bins: g.n_bins(),
            oversample: g.oversample(),
            n_times: g.n_times(),
            window: g.window(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TransferSidecar {
    pub schema_version: u32,
    pub kind: String,
    pub channels: usize,
    pub params: GateParams,
    pub gamma_over_bin_spacing: f64,
    pub grid: GridInfo,
    pub pump_sha256: String,
    pub files: Vec<String>,
    pub isometry_residual: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    n: i64,
    m: i64,
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct ChannelEntry {
    channel: i64,
    n: i64,
    m: i64,
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct PairEntry {
    out_channel: i64,
    in_channel: i64,
    n: i64,
    m: i64,
    re: f64,
    im: f64,
}

/// SHA-256 over the digests of every channel envelope.
pub fn pump_digest(pump: &MultiPump) -> String {
    let mut h = Sha256::new();
    for e in pump.envelopes() {
        h.update(e.digest().as_bytes());
    }
    hex::encode(h.finalize())
}

fn entries<'a>(grid: &'a FrequencyGrid, m: &'a CMatrix) -> impl Iterator<Item = (i64, i64, Complex64)> + 'a {
    grid.bins()
        .enumerate()
        .flat_map(move |(j, n)| grid.bins().enumerate().map(move |(i, mm)| (n, mm, m[(j, i)])))
}

/// Writes `n,m,re,im` rows.
pub fn write_matrix_csv<W: Write>(writer: W, grid: &FrequencyGrid, m: &CMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (n, mm, z) in entries(grid, m) {
        w.serialize(Entry {
            n,
            m: mm,
            re: z.re,
            im: z.im,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `n,m,re,im` rows back into an N×N matrix.
pub fn read_matrix_csv<R: Read>(reader: R, grid: &FrequencyGrid) -> Result<CMatrix> {
    let nb = grid.n_bins();
    let mut out = CMatrix::zeros(nb, nb);
    let mut r = csv::Reader::from_reader(reader);
    for row in r.deserialize() {
        let e: Entry = row?;
        let j = grid.checked_position(e.n)?;
        let i = grid.checked_position(e.m)?;
        out[(j, i)] = Complex64::new(e.re, e.im);
    }
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
    ))
}

fn write_sidecar(dir: &Path, stem: &str, sidecar: &TransferSidecar) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.json"));
    let mut f = create(&path)?;
    serde_json::to_writer_pretty(&mut f, sidecar)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(path)
}

/// Writes `{stem}_gs.csv`, `{stem}_gi.csv`, optionally `{stem}_loss.csv`,
/// and the sidecar `{stem}.json`. Returns every path written.
pub fn write_transfer_1n(
    dir: &Path,
    stem: &str,
    transfer: &TransferSet,
    params: &GateParams,
    pump: &MultiPump,
) -> Result<Vec<PathBuf>> {
    let grid = &transfer.grid;
    let mut mats = vec![("gs", &transfer.gs_tilde), ("gi", &transfer.gi_tilde)];
    if let Some(l) = &transfer.loss_tilde {
        mats.push(("loss", l));
    }
    let mut written = Vec::new();
    for (tag, m) in mats {
        let path = dir.join(format!("{stem}_{tag}.csv"));
        let mut f = create(&path)?;
        write_matrix_csv(&mut f, grid, m)?;
        f.flush()?;
        written.push(path);
    }
    let sidecar = TransferSidecar {
        schema_version: SCHEMA_VERSION,
        kind: "transfer_1n".into(),
        channels: 1,
        params: *params,
        gamma_over_bin_spacing: params.gamma_over_bin_spacing(),
        grid: grid.into(),
        pump_sha256: pump_digest(pump),
        files: file_names(&written),
        isometry_residual: Some(transfer.isometry_residual()),
    };
    written.push(write_sidecar(dir, stem, &sidecar)?);
    Ok(written)
}

fn file_names(paths: &[PathBuf]) -> Vec<String> {
    paths
        .iter()
        .filter_map(|p| p.file_name().map(|s| s.to_string_lossy().into_owned()))
        .collect()
}

/// Multi-channel counterpart of [`write_transfer_1n`]: `{stem}_gs.csv` has
/// `channel,n,m,re,im`; idler and loss files have
/// `out_channel,in_channel,n,m,re,im`.
pub fn write_transfer_mn(
    dir: &Path,
    stem: &str,
    transfer: &TransferSetMN,
    params: &GateParams,
    pump: &MultiPump,
) -> Result<Vec<PathBuf>> {
    let grid = &transfer.grid;
    let mc = transfer.channels;
    let label = |i: usize| pump.channel_label(i);
    let mut written = Vec::new();

    let path = dir.join(format!("{stem}_gs.csv"));
    let mut w = csv::Writer::from_writer(create(&path)?);
    for (k, m) in transfer.gs_tilde.iter().enumerate() {
        for (n, mm, z) in entries(grid, m) {
            w.serialize(ChannelEntry {
                channel: label(k),
                n,
                m: mm,
                re: z.re,
                im: z.im,
            })?;
        }
    }
    w.flush()?;
    written.push(path);

    for (tag, set) in [("gi", &transfer.gi_tilde), ("loss", &transfer.loss_tilde)] {
        if set.is_empty() {
            continue;
        }
        let path = dir.join(format!("{stem}_{tag}.csv"));
        let mut w = csv::Writer::from_writer(create(&path)?);
        for k in 0..mc {
            for j in 0..mc {
                for (n, mm, z) in entries(grid, &set[k * mc + j]) {
                    w.serialize(PairEntry {
                        out_channel: label(k),
                        in_channel: label(j),
                        n,
                        m: mm,
                        re: z.re,
                        im: z.im,
                    })?;
                }
            }
        }
        w.flush()?;
        written.push(path);
    }
    let sidecar = TransferSidecar {
        schema_version: SCHEMA_VERSION,
        kind: "transfer_mn".into(),
        channels: mc,
        params: *params,
        gamma_over_bin_spacing: params.gamma_over_bin_spacing(),
        grid: grid.into(),
        pump_sha256: pump_digest(pump),
        files: file_names(&written),
        isometry_residual: transfer.isometry_residual(),
    };
    written.push(write_sidecar(dir, stem, &sidecar)?);
    Ok(written)
}
