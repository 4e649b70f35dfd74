//! Binary field checkpoints: one text header line, then raw little-endian
//! `f64` values in row-major order.
//!
//! ```text
//! FDISP1 dim=2 nx=256 ny=256 Lx=32 Ly=32 alpha=1 t=0.5
//! ```

use crate::error::{Error, Result};
use crate::field::RealField;
use crate::grid::GridSpec;
use crate::table::atomic_write;
use std::path::Path;

const MAGIC: &str = "FDISP1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointHeader {
    pub grid: GridSpec,
    pub alpha: f64,
    pub t: f64,
}

impl CheckpointHeader {
    pub fn to_line(&self) -> String {
        let g = &self.grid;
        let mut s = format!("{MAGIC} dim={} nx={}", g.dim(), g.n(0));
        if g.dim() == 2 {
            s.push_str(&format!(" ny={}", g.n(1)));
        }
        s.push_str(&format!(" Lx={}", g.length(0)));
        if g.dim() == 2 {
            s.push_str(&format!(" Ly={}", g.length(1)));
        }
        s.push_str(&format!(" alpha={} t={}", self.alpha, self.t));
        s
    }

    pub fn parse(line: &str) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(format!("bad header: {m}"));
        let mut parts = line.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(bad(format!("missing {MAGIC} tag")));
        }
        let mut dim = None;
        let (mut nx, mut ny, mut lx, mut ly, mut alpha, mut t) = (None, None, None, None, None, None);
        for p in parts {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| bad(format!("token `{p}` is not key=value")))?;
            let int = || v.parse::<usize>().map_err(|_| bad(format!("{k}={v}")));
            let real = || v.parse::<f64>().map_err(|_| bad(format!("{k}={v}")));
            match k {
                "dim" => dim = Some(int()?),
                "nx" => nx = Some(int()?),
                "ny" => ny = Some(int()?),
                "Lx" => lx = Some(real()?),
                "Ly" => ly = Some(real()?),
                "alpha" => alpha = Some(real()?),
                "t" => t = Some(real()?),
                _ => return Err(bad(format!("unknown key `{k}`"))),
            }
        }
        let need = |o: Option<f64>, k: &str| o.ok_or_else(|| bad(format!("missing {k}")));
        let nx = nx.ok_or_else(|| bad("missing nx".into()))?;
        let lx = need(lx, "Lx")?;
        let grid = match dim {
            Some(1) => {
                if ny.is_some() || ly.is_some() {
                    return Err(bad("ny/Ly given for dim=1".into()));
                }
                GridSpec::new_1d(nx, lx)
            }
            Some(2) => GridSpec::new_2d(
                nx,
                ny.ok_or_else(|| bad("missing ny".into()))?,
                lx,
                need(ly, "Ly")?,
            ),
            Some(d) => return Err(bad(format!("dim={d}"))),
            None => return Err(bad("missing dim".into())),
        }
        .map_err(|e| bad(e.to_string()))?;
        Ok(Self {
            grid,
            alpha: need(alpha, "alpha")?,
            t: need(t, "t")?,
        })
    }
}

pub fn encode(field: &RealField, alpha: f64, t: f64) -> Vec<u8> {
    let header = CheckpointHeader {
        grid: *field.grid(),
        alpha,
        t,
    };
    let mut bytes = header.to_line().into_bytes();
    bytes.push(b'\n');
    bytes.reserve(8 * field.values().len());
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

pub fn decode(bytes: &[u8]) -> Result<(CheckpointHeader, RealField)> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("no header line".into()))?;
    let line = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
    let header = CheckpointHeader::parse(line)?;
    let payload = &bytes[nl + 1..];
    let expected = 8 * header.grid.len();
    if payload.len() != expected {
        return Err(Error::Checkpoint(format!(
            "payload has {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, RealField::new(header.grid, values)?))
}

pub fn save_checkpoint(field: &RealField, alpha: f64, t: f64, path: &Path) -> Result<()> {
    atomic_write(path, &encode(field, alpha, t))
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, RealField)> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    decode(&bytes)
}

/// Loads and checks the grid against the session's.
pub fn load_checkpoint_for(path: &Path, grid: &GridSpec) -> Result<(CheckpointHeader, RealField)> {
    let (h, f) = load_checkpoint(path)?;
    if !h.grid.same_as(grid) {
        return Err(Error::Checkpoint(format!(
            "checkpoint grid {:?} does not match session grid {:?}",
            h.grid, grid
        )));
    }
    Ok((h, f))
}
