//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "PDAE" | version u32 | metadata_len u32 | metadata bytes
//! | spec_count u32 | per spec: kind u8, stride u8, in u32, out u32, units u32
//! | tensor_count u32 | per tensor: ndim u8, dims u32..., f64 data (LE)
//! ```
//!
//! The metadata blob is caller-defined (the autoencoder stores its config
//! JSON there). Round trips are byte-exact: floats are preserved bit for
//! bit and the writer is canonical.

use std::io::{Read, Write};

use super::{AutodiffError, LayerKind, LayerSpec, Result, Tensor};

pub const MAGIC: &[u8; 4] = b"PDAE";
pub const VERSION: u32 = 1;

pub struct Checkpoint {
    pub metadata: Vec<u8>,
    pub specs: Vec<LayerSpec>,
    pub tensors: Vec<Tensor>,
}

pub fn write(ckpt: &Checkpoint, writer: &mut impl Write) -> Result<()> {
    writer.write_all(MAGIC)?;
    writer.write_all(&VERSION.to_le_bytes())?;
    writer.write_all(&(ckpt.metadata.len() as u32).to_le_bytes())?;
    writer.write_all(&ckpt.metadata)?;

    writer.write_all(&(ckpt.specs.len() as u32).to_le_bytes())?;
    for spec in &ckpt.specs {
        writer.write_all(&[spec.kind.code(), spec.stride])?;
        writer.write_all(&spec.in_channels.to_le_bytes())?;
        writer.write_all(&spec.out_channels.to_le_bytes())?;
        writer.write_all(&spec.units.to_le_bytes())?;
    }

    writer.write_all(&(ckpt.tensors.len() as u32).to_le_bytes())?;
    for tensor in &ckpt.tensors {
        writer.write_all(&[tensor.shape().len() as u8])?;
        for &dim in tensor.shape() {
            writer.write_all(&(dim as u32).to_le_bytes())?;
        }
        let mut bytes = Vec::with_capacity(tensor.numel() * 8);
        for &v in tensor.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        writer.write_all(&bytes)?;
    }
    Ok(())
}

fn read_u32(reader: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u8(reader: &mut impl Read) -> Result<u8> {
    let mut buf = [0u8; 1];
    reader.read_exact(&mut buf)?;
    Ok(buf[0])
}

pub fn read(reader: &mut impl Read) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(AutodiffError::Checkpoint(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = read_u32(reader)?;
    if version != VERSION {
        return Err(AutodiffError::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let meta_len = read_u32(reader)? as usize;
    let mut metadata = vec![0u8; meta_len];
    reader.read_exact(&mut metadata)?;

    let spec_count = read_u32(reader)? as usize;
    let mut specs = Vec::with_capacity(spec_count);
    for _ in 0..spec_count {
        let kind = LayerKind::from_code(read_u8(reader)?)?;
        let stride = read_u8(reader)?;
        let in_channels = read_u32(reader)?;
        let out_channels = read_u32(reader)?;
        let units = read_u32(reader)?;
        specs.push(LayerSpec { kind, stride, in_channels, out_channels, units });
    }

    let tensor_count = read_u32(reader)? as usize;
    let mut tensors = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let ndim = read_u8(reader)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u32(reader)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut bytes = vec![0u8; numel * 8];
        reader.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        tensors.push(Tensor::from_vec(&shape, data)?);
    }
    Ok(Checkpoint { metadata, specs, tensors })
}
