//! Compact weight blob: the on-disk and over-the-air form of a [`QNetwork`].
//!
//! Layout (all integers and floats little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `QNET` |
//! | 2     | format version (`u16`, currently 1) |
//! | 4     | dropout rate (`f32`) |
//! | 1     | number of layer dims `k` |
//! | 2·k   | layer dims (`u16` each) |
//! | 4·p   | parameters as `f32`: γ, β, running mean, running var, then `W₀, b₀, W₁, b₁, …` with weights row-major `(out, in)` |
//! | 4     | CRC-32 (IEEE) of every preceding byte |

use thiserror::Error;

use super::network::QNetwork;

pub const MAGIC: [u8; 4] = *b"QNET";
pub const FORMAT_VERSION: u16 = 1;
/// Upper bound on a transferable blob.
pub const MAX_BLOB_BYTES: usize = 10 * 1024;

#[derive(Debug, Error, PartialEq)]
pub enum BlobError {
    #[error("blob truncated: {0} bytes")]
    Truncated(usize),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported blob version {0}")]
    UnsupportedVersion(u16),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("blob length {got} does not match architecture (expected {expected})")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid architecture in blob: {0}")]
    Architecture(String),
}

fn param_count(dims: &[usize]) -> usize {
    4 * dims[0] + dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>()
}

pub fn serialize(net: &QNetwork) -> Vec<u8> {
    let dims = net.layer_dims();
    let mut out = Vec::with_capacity(11 + 2 * dims.len() + 4 * param_count(dims) + 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.dropout_rate() as f32).to_le_bytes());
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u16).to_le_bytes());
    }
    let mut put = |xs: &[f64]| {
        for &x in xs {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    };
    put(&net.bn.gamma);
    put(&net.bn.beta);
    put(&net.bn.running_mean);
    put(&net.bn.running_var);
    for layer in &net.layers {
        put(layer.weights.as_slice());
        put(&layer.bias);
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn deserialize(blob: &[u8]) -> Result<QNetwork, BlobError> {
    // magic + version + dropout + dim count + crc
    if blob.len() < 15 {
        return Err(BlobError::Truncated(blob.len()));
    }
    let magic: [u8; 4] = blob[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(BlobError::BadMagic(magic));
    }
    let version = u16::from_le_bytes([blob[4], blob[5]]);
    if version != FORMAT_VERSION {
        return Err(BlobError::UnsupportedVersion(version));
    }
    let (body, tail) = blob.split_at(blob.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(BlobError::ChecksumMismatch { stored, computed });
    }

    let dropout = f32::from_le_bytes(body[6..10].try_into().unwrap()) as f64;
    let k = body[10] as usize;
    let dims_end = 11 + 2 * k;
    if body.len() < dims_end || k < 2 {
        return Err(BlobError::Truncated(blob.len()));
    }
    let dims: Vec<usize> = body[11..dims_end]
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]) as usize)
        .collect();
    let expected = dims_end + 4 * param_count(&dims) + 4;
    if blob.len() != expected {
        return Err(BlobError::LengthMismatch {
            expected,
            got: blob.len(),
        });
    }

    let mut net = QNetwork::new(&dims, dropout, 0).map_err(|e| BlobError::Architecture(e.to_string()))?;
    let mut floats = body[dims_end..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let mut fill = |dst: &mut [f64]| {
        for d in dst.iter_mut() {
            *d = floats.next().expect("length checked above");
        }
    };
    fill(&mut net.bn.gamma);
    fill(&mut net.bn.beta);
    fill(&mut net.bn.running_mean);
    fill(&mut net.bn.running_var);
    for layer in &mut net.layers {
        fill(layer.weights.as_mut_slice());
        fill(&mut layer.bias);
    }
    Ok(net)
}
