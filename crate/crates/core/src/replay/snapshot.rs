//! Flat little-endian dump of a buffer's live transitions.
//!
//! Layout: 8-byte magic `FOGRPLY1`, then `state_dim`, `action_dim` and the
//! record count as `u64`. Each record is the insert index as `u64` followed
//! by `state`, `action`, `reward`, `next_state` and `done` (0.0 or 1.0) as
//! `f64`. Not a stability-guaranteed format.

use std::io::{Read, Write};

use super::{ReplayError, Result, Schema, Transition};

const MAGIC: &[u8; 8] = b"FOGRPLY1";

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub schema: Schema,
    pub transitions: Vec<Transition>,
}

pub fn write_snapshot<W: Write>(out: &mut W, snapshot: &Snapshot) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(snapshot.schema.state_dim as u64).to_le_bytes())?;
    out.write_all(&(snapshot.schema.action_dim as u64).to_le_bytes())?;
    out.write_all(&(snapshot.transitions.len() as u64).to_le_bytes())?;
    for t in &snapshot.transitions {
        out.write_all(&t.insert_index.to_le_bytes())?;
        let done = if t.done { 1.0 } else { 0.0 };
        let floats = t
            .state
            .iter()
            .chain(&t.action)
            .chain(std::iter::once(&t.reward))
            .chain(&t.next_state)
            .chain(std::iter::once(&done));
        for v in floats {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f64>> {
    (0..n)
        .map(|_| read_u64(input).map(f64::from_bits))
        .collect()
}

pub fn read_snapshot<R: Read>(input: &mut R) -> Result<Snapshot> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ReplayError::Snapshot("bad magic".into()));
    }
    let schema = Schema {
        state_dim: read_u64(input)? as usize,
        action_dim: read_u64(input)? as usize,
    };
    let count = read_u64(input)?;
    let mut transitions = Vec::with_capacity(count.min(1 << 20) as usize);
    for _ in 0..count {
        let insert_index = read_u64(input)?;
        let state = read_f64s(input, schema.state_dim)?;
        let action = read_f64s(input, schema.action_dim)?;
        let reward = read_f64s(input, 1)?[0];
        let next_state = read_f64s(input, schema.state_dim)?;
        let done = match read_f64s(input, 1)?[0] {
            0.0 => false,
            1.0 => true,
            d => return Err(ReplayError::Snapshot(format!("done flag {d}"))),
        };
        transitions.push(Transition {
            state,
            action,
            reward,
            next_state,
            done,
            insert_index,
        });
    }
    Ok(Snapshot {
        schema,
        transitions,
    })
}
