//! Little-endian binary primitives shared by the network and replay-buffer
//! file formats. Every file opens with a 6-byte magic and a `u32` version.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub(crate) fn write_header<W: Write>(w: &mut W, magic: &[u8; 6], version: u32) -> Result<()> {
    w.write_all(magic)?;
    write_u32(w, version)
}

pub(crate) fn read_header<R: Read>(r: &mut R, magic: &[u8; 6], version: u32) -> Result<()> {
    let mut found = [0u8; 6];
    r.read_exact(&mut found)?;
    if &found != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&found),
            String::from_utf8_lossy(magic)
        )));
    }
    let v = read_u32(r)?;
    if v != version {
        return Err(Error::Format(format!(
            "unsupported version {v}, expected {version}"
        )));
    }
    Ok(())
}

pub(crate) fn write_u8<W: Write>(w: &mut W, v: u8) -> Result<()> {
    w.write_all(&[v])?;
    Ok(())
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, vals: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub(crate) fn read_usize<R: Read>(r: &mut R, what: &str, limit: u64) -> Result<usize> {
    let v = read_u64(r)?;
    if v > limit {
        return Err(Error::Format(format!("{what} = {v} exceeds limit {limit}")));
    }
    Ok(v as usize)
}
