//! Binary checkpoint format.
//!
//! ```text
//! magic      8 bytes  b"SWIPTNN\0"
//! version    u32 LE   (1)
//! enc_dims   u32 LE count, then count x u32 LE
//! dec_dims   u32 LE count, then count x u32 LE
//! payload    per layer, encoder first: weights (row-major out x in), biases,
//!            every value f64 LE
//! ```

use std::io::{Read, Write};

use super::params::{Architecture, NetworkParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SWIPTNN\0";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(params: &NetworkParams, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for dims in [params.encoder.dims(), params.decoder.dims()] {
        w.write_all(&(dims.len() as u32).to_le_bytes())?;
        for d in dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
    }
    for block in params.blocks() {
        for v in block {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(u32::from_le_bytes(buf))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated checkpoint".into())
    } else {
        Error::Io(e)
    }
}

fn read_dims<R: Read>(r: &mut R) -> Result<Vec<usize>> {
    let n = read_u32(r)? as usize;
    if !(2..=64).contains(&n) {
        return Err(Error::Format(format!("implausible layer count {n}")));
    }
    (0..n).map(|_| read_u32(r).map(|d| d as usize)).collect()
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<NetworkParams> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic; not a checkpoint file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let enc = read_dims(&mut r)?;
    let dec = read_dims(&mut r)?;
    let messages = enc[0];
    if enc[enc.len() - 1] != 2 || dec[0] != 2 || dec[dec.len() - 1] != messages {
        return Err(Error::Format(format!(
            "inconsistent layer dims: encoder {enc:?}, decoder {dec:?}"
        )));
    }
    let arch = Architecture {
        messages,
        encoder_hidden: enc[1..enc.len() - 1].to_vec(),
        decoder_hidden: dec[1..dec.len() - 1].to_vec(),
    };
    let mut params = NetworkParams::zeros(&arch).map_err(|e| Error::Format(e.to_string()))?;
    let mut buf = [0u8; 8];
    for block in params.blocks_mut() {
        for v in block.iter_mut() {
            r.read_exact(&mut buf).map_err(truncated)?;
            *v = f64::from_le_bytes(buf);
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    Ok(params)
}
