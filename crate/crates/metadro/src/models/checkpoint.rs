//! Named-tensor checkpoint files: the store binary container reused with an
//! `MSHP` magic.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::autodiff::Tensor;
use crate::dataset::io::{read_f64s, read_str, read_u32, write_f64s, write_str};
use crate::error::{Error, Result};

const CKPT_MAGIC: &[u8; 4] = b"MSHP";
const CKPT_VERSION: u8 = 1;

pub fn save_params(path: &Path, params: &[(String, Tensor)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CKPT_MAGIC)?;
    w.write_all(&[CKPT_VERSION])?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params {
        write_str(&mut w, name)?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for d in t.shape() {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        write_f64s(&mut w, t.data())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CKPT_MAGIC {
        return Err(Error::Ingest(format!("bad checkpoint magic {:?}, expected MSHP", magic)));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version)?;
    if version[0] != CKPT_VERSION {
        return Err(Error::Ingest(format!("unsupported checkpoint version {}", version[0])));
    }
    let count = read_u32(&mut r)? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name = read_str(&mut r)?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let data = read_f64s(&mut r, numel)?;
        params.push((name, Tensor::new(shape, data)?));
    }
    Ok(params)
}
