//! Binary weight-file records.
//!
//! Layout (all integers little-endian):
//! magic `XYZW1`, then per tensor: name length (u32), UTF-8 name,
//! rank (u32), dims (u32 each), then the values as 32-bit floats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const WEIGHT_MAGIC: &[u8; 5] = b"XYZW1";

#[derive(Debug, Clone)]
pub struct WeightRecord {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

pub fn write_weight_records(path: &Path, records: &[WeightRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(WEIGHT_MAGIC).map_err(io_err)?;
    for rec in records {
        let name = rec.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(name).map_err(io_err)?;
        w.write_all(&(rec.dims.len() as u32).to_le_bytes()).map_err(io_err)?;
        for &d in &rec.dims {
            w.write_all(&(d as u32).to_le_bytes()).map_err(io_err)?;
        }
        let n: usize = rec.dims.iter().product();
        if n != rec.values.len() {
            return Err(Error::shape(format!("{:?} = {n} values", rec.dims), format!("{}", rec.values.len())));
        }
        for &v in &rec.values {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn read_weight_records(path: &Path) -> Result<Vec<WeightRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(|_| Error::format(path, "truncated header"))?;
    if &magic != WEIGHT_MAGIC {
        return Err(Error::format(path, format!("bad magic {magic:?}, expected {WEIGHT_MAGIC:?}")));
    }

    let mut records = Vec::new();
    loop {
        let mut len_buf = [0u8; 4];
        match r.read_exact(&mut len_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(Error::io(path, e)),
        }
        let name_len = u32::from_le_bytes(len_buf) as usize;
        if name_len > 4096 {
            return Err(Error::format(path, format!("implausible name length {name_len}")));
        }
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes).map_err(|_| Error::format(path, "truncated record name"))?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::format(path, "record name is not UTF-8"))?;

        let mut rank_buf = [0u8; 4];
        r.read_exact(&mut rank_buf).map_err(|_| Error::format(path, "truncated rank"))?;
        let rank = u32::from_le_bytes(rank_buf) as usize;
        if rank == 0 || rank > 8 {
            return Err(Error::format(path, format!("implausible rank {rank} for {name:?}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut d = [0u8; 4];
            r.read_exact(&mut d).map_err(|_| Error::format(path, "truncated dims"))?;
            dims.push(u32::from_le_bytes(d) as usize);
        }
        let n: usize = dims.iter().product();
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw)
            .map_err(|_| Error::format(path, format!("truncated data for {name:?}")))?;
        let values = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        records.push(WeightRecord { name, dims, values });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let records = vec![
            WeightRecord { name: "a.weight".into(), dims: vec![2, 3], values: vec![1.0, -2.5, 0.0, 3.25, 9.0, -0.125] },
            WeightRecord { name: "a.bias".into(), dims: vec![2], values: vec![0.5, -0.5] },
        ];
        write_weight_records(&path, &records).unwrap();
        let back = read_weight_records(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].name, "a.weight");
        assert_eq!(back[0].dims, vec![2, 3]);
        assert_eq!(back[0].values, records[0].values);
        assert_eq!(back[1].values, records[1].values);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"NOPE!rest").unwrap();
        assert!(matches!(read_weight_records(&path), Err(Error::Format { .. })));
    }
}
