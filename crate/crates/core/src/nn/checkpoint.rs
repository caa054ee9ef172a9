//! Versioned flat parameter dump.
//!
//! Layout (little-endian): magic `FOGCKPT\0`, `u32` version, `u64` seed,
//! `u64` step, `u32` critic depth, `u32` section count, then the schema of
//! every section (`u32` name length, UTF-8 name, `u32` tensor count, and
//! `u32` rows / `u32` cols per tensor), then every tensor's values as `f64`
//! in row-major order, section by section.

use std::io::{Read, Write};

use ndarray::Array2;

use super::{NnError, Result};

const MAGIC: &[u8; 8] = b"FOGCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub name: String,
    pub tensors: Vec<Array2<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub step: u64,
    pub depth: u32,
    pub sections: Vec<Section>,
}

impl Checkpoint {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }
}

pub fn write_checkpoint<W: Write>(out: &mut W, ckpt: &Checkpoint) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&ckpt.seed.to_le_bytes())?;
    out.write_all(&ckpt.step.to_le_bytes())?;
    out.write_all(&ckpt.depth.to_le_bytes())?;
    out.write_all(&(ckpt.sections.len() as u32).to_le_bytes())?;
    for s in &ckpt.sections {
        out.write_all(&(s.name.len() as u32).to_le_bytes())?;
        out.write_all(s.name.as_bytes())?;
        out.write_all(&(s.tensors.len() as u32).to_le_bytes())?;
        for t in &s.tensors {
            out.write_all(&(t.nrows() as u32).to_le_bytes())?;
            out.write_all(&(t.ncols() as u32).to_le_bytes())?;
        }
    }
    for s in &ckpt.sections {
        for t in &s.tensors {
            for v in t.iter() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(input)?))
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(input)?))
}

pub fn read_checkpoint<R: Read>(input: &mut R) -> Result<Checkpoint> {
    if &read_array::<8, _>(input)? != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(input)?;
    if version != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let seed = read_u64(input)?;
    let step = read_u64(input)?;
    let depth = read_u32(input)?;
    let count = read_u32(input)?;
    let mut schema = Vec::new();
    for _ in 0..count {
        let len = read_u32(input)? as usize;
        let mut name = vec![0u8; len];
        input.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        let tensors = read_u32(input)?;
        let shapes = (0..tensors)
            .map(|_| Ok((read_u32(input)? as usize, read_u32(input)? as usize)))
            .collect::<Result<Vec<_>>>()?;
        schema.push((name, shapes));
    }
    let mut sections = Vec::with_capacity(schema.len());
    for (name, shapes) in schema {
        let tensors = shapes
            .into_iter()
            .map(|(r, c)| {
                let data = (0..r * c)
                    .map(|_| read_u64(input).map(f64::from_bits))
                    .collect::<Result<Vec<_>>>()?;
                Array2::from_shape_vec((r, c), data).map_err(|e| NnError::Checkpoint(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        sections.push(Section { name, tensors });
    }
    Ok(Checkpoint {
        seed,
        step,
        depth,
        sections,
    })
}
