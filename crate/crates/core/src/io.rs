//! Container used by every binary artifact: one line of compact JSON header,
//! a `\n`, then a little-endian `f32` payload.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

pub fn write_container<H: Serialize>(mut w: impl Write, header: &H, payload: &[f32]) -> Result<()> {
    let json = serde_json::to_string(header).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(json.as_bytes())?;
    w.write_all(b"\n")?;
    let mut bytes = Vec::with_capacity(payload.len() * 4);
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_container<H: DeserializeOwned>(r: impl Read) -> Result<(H, Vec<f32>)> {
    let mut r = BufReader::new(r);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format("missing header line".into()));
    }
    line.pop();
    let header = serde_json::from_slice(&line).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Format(format!("payload of {} bytes is not a whole number of f32", bytes.len())));
    }
    let payload = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok((header, payload))
}

pub fn save<H: Serialize>(path: &Path, header: &H, payload: &[f32]) -> Result<()> {
    write_container(BufWriter::new(File::create(path)?), header, payload)
}

pub fn load<H: DeserializeOwned>(path: &Path) -> Result<(H, Vec<f32>)> {
    read_container(File::open(path)?)
}
