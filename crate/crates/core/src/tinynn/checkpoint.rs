//! Binary weight files: `CFNN` magic, format version, input shape, layer
//! count, then per layer a kind byte, its attributes and its parameter
//! tensors (rank, extents, little-endian f32 values). All integers are
//! little-endian u32.

use std::fs;
use std::path::Path;

use super::model::{LayerSpec, ModelConfig};
use super::tensor::Tensor;
use super::NnError;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CFNN";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("extent fits u32").to_le_bytes());
}

pub fn encode_checkpoint(config: &ModelConfig, params: &[Tensor<f32>]) -> Result<Vec<u8>, NnError> {
    let shapes = config.param_shapes()?;
    if shapes.len() != params.len() || shapes.iter().zip(params).any(|(s, p)| s != p.shape()) {
        return Err(NnError::Checkpoint("parameters do not match the model".into()));
    }
    let mut out = CHECKPOINT_MAGIC.to_vec();
    put(&mut out, CHECKPOINT_VERSION as usize);
    for v in [config.channels, config.height, config.width, config.layers.len()] {
        put(&mut out, v);
    }
    let mut tensors = params.iter();
    for layer in &config.layers {
        let (kind, attrs, count): (u8, Vec<usize>, usize) = match *layer {
            LayerSpec::Conv { out_channels, kernel, stride } => (0, vec![out_channels, kernel, stride], 2),
            LayerSpec::MaxPool { window } => (1, vec![window], 0),
            LayerSpec::Relu => (2, vec![], 0),
            LayerSpec::Flatten => (3, vec![], 0),
            LayerSpec::Dense { units } => (4, vec![units], 2),
        };
        out.push(kind);
        for a in attrs {
            put(&mut out, a);
        }
        put(&mut out, count);
        for t in tensors.by_ref().take(count) {
            put(&mut out, t.shape().len());
            for &d in t.shape() {
                put(&mut out, d);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NnError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelConfig, Vec<Tensor<f32>>), NnError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let (channels, height, width, n_layers) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let mut layers = Vec::new();
    let mut params = Vec::new();
    for _ in 0..n_layers {
        let kind = r.take(1)?[0];
        layers.push(match kind {
            0 => LayerSpec::Conv { out_channels: r.u32()?, kernel: r.u32()?, stride: r.u32()? },
            1 => LayerSpec::MaxPool { window: r.u32()? },
            2 => LayerSpec::Relu,
            3 => LayerSpec::Flatten,
            4 => LayerSpec::Dense { units: r.u32()? },
            k => return Err(NnError::Checkpoint(format!("unknown layer kind {k}"))),
        });
        for _ in 0..r.u32()? {
            let rank = r.u32()?;
            let shape: Vec<usize> = (0..rank).map(|_| r.u32()).collect::<Result<_, _>>()?;
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let n = n.ok_or_else(|| NnError::Checkpoint("tensor too large".into()))?;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| NnError::Checkpoint("tensor too large".into()))?)?;
            let data: Vec<f32> =
                raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            params.push(Tensor::new(shape, data)?);
        }
    }
    if r.pos != bytes.len() {
        return Err(NnError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let config = ModelConfig { height, width, channels, layers };
    let expected = config.param_shapes().map_err(|e| NnError::Checkpoint(e.to_string()))?;
    if expected.len() != params.len() || expected.iter().zip(&params).any(|(s, p)| s != p.shape()) {
        return Err(NnError::Checkpoint("tensor shapes do not match the layer list".into()));
    }
    if !params.iter().all(Tensor::all_finite) {
        return Err(NnError::Checkpoint("non-finite weight".into()));
    }
    Ok((config, params))
}

pub fn write_checkpoint(path: &Path, config: &ModelConfig, params: &[Tensor<f32>]) -> Result<(), NnError> {
    fs::write(path, encode_checkpoint(config, params)?)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(ModelConfig, Vec<Tensor<f32>>), NnError> {
    decode_checkpoint(&fs::read(path)?)
}
