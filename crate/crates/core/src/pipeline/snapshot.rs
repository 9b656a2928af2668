//! Binary snapshot files.
//!
//! Layout: the 8 magic bytes `ROMSNAP1`, then `rows` and `cols` as
//! little-endian `u64`, then `rows * cols` little-endian `f64` values in
//! column-major order (one snapshot per column).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"ROMSNAP1";

pub fn write_snapshots(path: &Path, x: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&(x.rows() as u64).to_le_bytes())?;
    w.write_all(&(x.cols() as u64).to_le_bytes())?;
    for v in x.to_col_major() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshots(path: &Path) -> Result<DenseMatrix> {
    let bad = |message: String| Error::Format {
        path: path.display().to_string(),
        message,
    };
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| bad("file too short for the header".into()))?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(bad("missing ROMSNAP1 magic".into()));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word).map_err(|_| bad("truncated header".into()))?;
    let rows = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word).map_err(|_| bad("truncated header".into()))?;
    let cols = u64::from_le_bytes(word) as usize;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| bad(format!("{rows} x {cols} overflows")))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * len {
        return Err(bad(format!(
            "expected {} payload bytes for {rows} x {cols}, found {}",
            8 * len,
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    DenseMatrix::from_col_major(rows, cols, &data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        let x = DenseMatrix::from_fn(5, 3, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0) - 1e-300);
        write_snapshots(&path, &x).unwrap();
        let y = read_snapshots(&path).unwrap();
        assert_eq!(x.shape(), y.shape());
        for (a, b) in x.data().iter().zip(y.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"ROMSNAP1");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 5);
        assert_eq!(bytes.len(), 24 + 8 * 15);
        // Column-major: the second stored value is x[1, 0].
        assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), x[(1, 0)]);
    }

    #[test]
    fn corrupt_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"ROMSNAP2aaaaaaaabbbbbbbb").unwrap();
        assert!(matches!(read_snapshots(&path), Err(Error::Format { .. })));
        let mut ok = Vec::from(&b"ROMSNAP1"[..]);
        ok.extend_from_slice(&2u64.to_le_bytes());
        ok.extend_from_slice(&2u64.to_le_bytes());
        ok.extend_from_slice(&1.0f64.to_le_bytes());
        std::fs::write(&path, &ok).unwrap();
        assert!(matches!(read_snapshots(&path), Err(Error::Format { .. })));
    }
}
