//! Binary checkpoints: a short text header followed by raw little-endian
//! `f64` arrays in the order `f, By, Bz, log_ne, M, nuI`.
//!
//! ```text
//! kinhall-checkpoint
//! format_version = 1
//! L = 6.283185307179586e0
//! ...
//! f = 2097152
//! ...
//! end_header
//! <payload>
//! ```
//!
//! Scalars are written in shortest round-trip form, so a save/load cycle is
//! bit-exact.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::diagnostics::{compute_ledger, EnergyLedger};
use crate::error::{Error, Result};
use crate::grid_state::{DistributionFunction, FieldState, PhaseSpaceGrid, RunConfig, SimulationState, Vec3};
use crate::moments::compute_moments;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "kinhall-checkpoint";
const END: &str = "end_header";
const ARRAYS: [&str; 6] = ["f", "By", "Bz", "log_ne", "M", "nuI"];

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn flatten(v: &[Vec3]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

pub fn write_checkpoint(path: &Path, state: &SimulationState) -> Result<()> {
    let g = state.grid();
    let nu = flatten(&compute_moments(&state.f).nu);
    let m = flatten(&state.m_last);
    let fs = &state.fields;
    let arrays: [&[f64]; 6] = [&state.f.values, &fs.by, &fs.bz, &fs.log_ne, &m, &nu];

    let mut header = format!("{MAGIC}\nformat_version = {FORMAT_VERSION}\n");
    for (k, v) in [
        ("L", g.length),
        ("v_max", g.v_max),
        ("t", state.t),
        ("Bx0", fs.bx0),
        ("box_outflow", state.box_outflow),
        ("d_cum", state.ledger.current.d_cum),
    ] {
        header.push_str(&format!("{k} = {v:e}\n"));
    }
    header.push_str(&format!("Nx = {}\nNv = {}\nstep = {}\n", g.nx, g.nv, state.step));
    for (name, a) in ARRAYS.iter().zip(arrays) {
        header.push_str(&format!("{name} = {}\n", a.len()));
    }
    header.push_str(END);
    header.push('\n');

    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(header.as_bytes())?;
    for a in arrays {
        for v in a {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Loads a checkpoint written by [`write_checkpoint`]. The grid must match
/// `grid` exactly; the ledger is rebuilt from the restored state with `cfg`.
pub fn read_checkpoint(path: &Path, grid: &PhaseSpaceGrid, cfg: &RunConfig) -> Result<SimulationState> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(bad(format!("{} is not a checkpoint file", path.display())));
    }
    let mut fields = HashMap::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("header is not terminated"));
        }
        let l = line.trim_end();
        if l == END {
            break;
        }
        let (k, v) = l.split_once(" = ").ok_or_else(|| bad(format!("malformed header line \"{l}\"")))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| fields.get(k).ok_or_else(|| bad(format!("header lacks \"{k}\"")));
    let float = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| bad(format!("header \"{k}\" is not a number"))) };
    let int = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| bad(format!("header \"{k}\" is not an integer"))) };

    let version = int("format_version")?;
    if version != FORMAT_VERSION as u64 {
        return Err(bad(format!("format_version {version} is not supported (expected {FORMAT_VERSION})")));
    }
    let (length, v_max, nx, nv) = (float("L")?, float("v_max")?, int("Nx")? as usize, int("Nv")? as usize);
    if length != grid.length || v_max != grid.v_max || nx != grid.nx || nv != grid.nv {
        return Err(bad(format!(
            "grid (L = {length}, Nx = {nx}, Nv = {nv}, v_max = {v_max}) differs from the configuration \
             (L = {}, Nx = {}, Nv = {}, v_max = {})",
            grid.length, grid.nx, grid.nv, grid.v_max
        )));
    }
    let expected = [grid.len(), nx, nx, nx, 3 * nx, 3 * nx];
    let mut arrays = Vec::with_capacity(ARRAYS.len());
    for (name, want) in ARRAYS.iter().zip(expected) {
        let n = int(name)? as usize;
        if n != want {
            return Err(bad(format!("array {name} has length {n}, expected {want}")));
        }
        let mut bytes = vec![0u8; 8 * n];
        r.read_exact(&mut bytes)
            .map_err(|_| bad(format!("payload ends inside array {name}")))?;
        arrays.push(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect::<Vec<f64>>(),
        );
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(bad("trailing bytes after the declared arrays"));
    }
    let mut it = arrays.into_iter();
    let mut next = || it.next().expect("six arrays");
    let f = DistributionFunction {
        grid: grid.clone(),
        values: next(),
    };
    let (by, bz, log_ne, m, nu) = (next(), next(), next(), next(), next());
    let vec3 = |a: &[f64]| a.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect::<Vec<Vec3>>();
    if flatten(&compute_moments(&f).nu) != nu {
        return Err(bad("stored nuI does not match the moments of the stored f"));
    }
    let mut state = SimulationState {
        t: float("t")?,
        step: int("step")?,
        fields: FieldState::new(float("Bx0")?, by, bz, log_ne, grid.dx),
        f,
        ledger: EnergyLedger::default(),
        box_outflow: float("box_outflow")?,
        m_last: vec3(&m),
    };
    let mut row = compute_ledger(&state, cfg, float("d_cum")?);
    row.t = state.t;
    state.ledger = EnergyLedger::new(row);
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_state::make_maxwellian;
    use crate::splitting::initialize_state;

    #[test]
    fn truncated_file_is_rejected() {
        let g = PhaseSpaceGrid::new(1.0, 3, 4, 8.0).unwrap();
        let cfg = RunConfig::new(&g, 0.5, 1.0, 0.1, 0.01);
        let f = make_maxwellian(&g, &[1.0; 3], 1.0, &[[0.0; 3]; 3]).unwrap();
        let st = initialize_state(f, 0.0, vec![0.1; 3], vec![0.0; 3], &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        write_checkpoint(&p, &st).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(read_checkpoint(&p, &g, &cfg), Err(Error::Checkpoint(_))));
        let mut v2 = bytes.clone();
        let pos = bytes.windows(18).position(|w| w == b"format_version = 1").unwrap();
        v2[pos + 17] = b'9';
        std::fs::write(&p, &v2).unwrap();
        let err = read_checkpoint(&p, &g, &cfg).unwrap_err().to_string();
        assert!(err.contains("format_version 9"), "{err}");
    }
}
