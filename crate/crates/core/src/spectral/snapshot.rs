//! `.mfld` snapshots: one UTF-8 JSON header line `{"n_modes","side","time","kind"}`
//! terminated by `\n`, followed by `n_modes^2` little-endian `f64` coefficients in
//! row-major `(j, k)` order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{GridSpec, ModalField};
use crate::error::{Error, Result};

pub const EXTENSION: &str = "mfld";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub n_modes: usize,
    pub side: f64,
    pub time: f64,
    pub kind: String,
}

pub fn write_field<W: Write>(mut w: W, field: &ModalField, time: f64, kind: &str) -> Result<()> {
    let header = SnapshotHeader {
        n_modes: field.n_modes(),
        side: field.grid.side,
        time,
        kind: kind.to_string(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    let mut bytes = Vec::with_capacity(8 * field.coeff.len());
    for c in field.coeff.iter() {
        bytes.extend_from_slice(&c.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_field<R: BufRead>(mut r: R) -> Result<(ModalField, SnapshotHeader)> {
    let mut line = Vec::new();
    let read = r.read_until(b'\n', &mut line)?;
    if read == 0 || line.last() != Some(&b'\n') {
        return Err(Error::CorruptFile("missing snapshot header".into()));
    }
    let header: SnapshotHeader = serde_json::from_slice(&line[..line.len() - 1])
        .map_err(|e| Error::CorruptFile(format!("bad snapshot header: {e}")))?;
    let grid = GridSpec::new(header.n_modes, header.side)
        .map_err(|e| Error::CorruptFile(format!("bad snapshot grid: {e}")))?;
    let n = header.n_modes;
    let mut bytes = vec![0u8; 8 * n * n];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::CorruptFile(format!("truncated coefficient block (expected {} values)", n * n)))?;
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let coeff = Array2::from_shape_vec((n, n), values).expect("shape matches length");
    Ok((ModalField { grid, coeff }, header))
}

pub fn save(path: impl AsRef<Path>, field: &ModalField, time: f64, kind: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_field(&mut w, field, time, kind)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<(ModalField, SnapshotHeader)> {
    let mut r = BufReader::new(File::open(path)?);
    let out = read_field(&mut r)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::CorruptFile("trailing bytes after snapshot".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::random_band_limited;

    #[test]
    fn roundtrip_is_bitwise() {
        let g = GridSpec::new(6, 3.0).unwrap();
        let z = random_band_limited(g, 6, 1.3, 8).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &z, 0.25, "u").unwrap();
        let (back, header) = read_field(&buf[..]).unwrap();
        assert_eq!(header.kind, "u");
        assert_eq!(header.time, 0.25);
        assert!(back.coeff.iter().zip(z.coeff.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(buf.len(), buf.iter().position(|&b| b == b'\n').unwrap() + 1 + 8 * 36);
    }

    #[test]
    fn truncated_or_garbage_is_corrupt() {
        let g = GridSpec::new(3, 1.0).unwrap();
        let z = random_band_limited(g, 3, 1.0, 1).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &z, 0.0, "u").unwrap();
        let cut = &buf[..buf.len() - 5];
        assert!(matches!(read_field(cut), Err(Error::CorruptFile(_))));
        assert!(matches!(read_field(&b"not json\n"[..]), Err(Error::CorruptFile(_))));
        assert!(matches!(read_field(&b""[..]), Err(Error::CorruptFile(_))));
    }
}
