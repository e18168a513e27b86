//! `.vphd` head checkpoints.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "VPHD"
//! 4       2     version (u16) = 1
//! 6       20    T_v, E, t, e, C (u32 each)
//! 26      1     flags: bit 0 squared distance, bit 1 Adam block present
//! 27      ...   W1, W2, W3, c, ρ as f32, row-major
//!         ...   optional Adam block: step (u64), β1, β2, eps (f64),
//!               first moments then second moments, same tensor order (f32)
//! ```

use std::fs;
use std::path::Path;

use vipera_core::head::{HeadConfig, HeadParams};
use vipera_core::trainer::{AdamConfig, AdamState};

use super::bytes::{check_magic, put_f32s, Reader};
use crate::error::{Result, StoreError};

pub const VPHD_MAGIC: &[u8; 4] = b"VPHD";
pub const VPHD_VERSION: u16 = 1;
pub const VPHD_HEADER_LEN: usize = 27;

const FLAG_SQUARED: u8 = 1;
const FLAG_ADAM: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub params: HeadParams,
    pub adam: Option<AdamState>,
}

impl ModelCheckpoint {
    pub fn new(params: HeadParams) -> Self {
        ModelCheckpoint { params, adam: None }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.params.validate()?;
        let cfg = &self.params.config;
        let mut out = Vec::new();
        out.extend_from_slice(VPHD_MAGIC);
        out.extend_from_slice(&VPHD_VERSION.to_le_bytes());
        for d in [
            cfg.visual_tokens,
            cfg.embed_width,
            cfg.tokens,
            cfg.width,
            cfg.prototypes,
        ] {
            let d = u32::try_from(d).map_err(|_| StoreError::Header(format!("{d} does not fit in u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        let mut flags = 0;
        if cfg.squared_distance {
            flags |= FLAG_SQUARED;
        }
        if self.adam.is_some() {
            flags |= FLAG_ADAM;
        }
        out.push(flags);
        for t in self.params.tensors() {
            put_f32s(&mut out, t);
        }
        if let Some(adam) = &self.adam {
            let shapes: Vec<usize> = self.params.tensors().iter().map(|t| t.len()).collect();
            let adam_shapes: Vec<usize> = adam.first.iter().map(Vec::len).collect();
            let second_shapes: Vec<usize> = adam.second.iter().map(Vec::len).collect();
            if shapes != adam_shapes || shapes != second_shapes {
                return Err(StoreError::Header("Adam moments do not match head tensors".into()));
            }
            out.extend_from_slice(&adam.step.to_le_bytes());
            for v in [adam.config.beta1, adam.config.beta2, adam.config.eps] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for t in adam.first.iter().chain(&adam.second) {
                put_f32s(&mut out, t);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut rd = Reader::new(buf);
        check_magic(rd.array()?, VPHD_MAGIC)?;
        let version = rd.u16()?;
        if version != VPHD_VERSION {
            return Err(StoreError::UnsupportedVersion(version));
        }
        let mut dims = [0usize; 5];
        for d in dims.iter_mut() {
            *d = rd.u32()? as usize;
        }
        let flags = rd.u8()?;
        if flags & !(FLAG_SQUARED | FLAG_ADAM) != 0 {
            return Err(StoreError::Header(format!("unknown flag bits 0x{flags:02x}")));
        }
        let config = HeadConfig {
            visual_tokens: dims[0],
            embed_width: dims[1],
            tokens: dims[2],
            width: dims[3],
            prototypes: dims[4],
            squared_distance: flags & FLAG_SQUARED != 0,
        };
        config.validate()?;
        let n_params = config.parameter_count();
        let mut expected = VPHD_HEADER_LEN + n_params * 4;
        if flags & FLAG_ADAM != 0 {
            expected += 8 + 3 * 8 + 2 * n_params * 4;
        }
        if buf.len() < expected {
            return Err(StoreError::Truncated {
                expected,
                actual: buf.len(),
            });
        }
        if buf.len() > expected {
            return Err(StoreError::SizeMismatch {
                expected,
                actual: buf.len(),
            });
        }

        let mut params = HeadParams::zeros(config)?;
        let lens: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        for (i, t) in params.tensors_mut().into_iter().enumerate() {
            t.copy_from_slice(&rd.f32s(lens[i], i)?);
        }
        let adam = if flags & FLAG_ADAM != 0 {
            let step = rd.u64()?;
            let config = AdamConfig {
                beta1: rd.f64()?,
                beta2: rd.f64()?,
                eps: rd.f64()?,
            };
            let mut state = AdamState::new(config, &lens);
            state.step = step;
            for (i, &n) in lens.iter().enumerate() {
                state.first[i] = rd.f32s(n, 5 + i)?;
            }
            for (i, &n) in lens.iter().enumerate() {
                state.second[i] = rd.f32s(n, 10 + i)?;
            }
            Some(state)
        } else {
            None
        };
        Ok(ModelCheckpoint { params, adam })
    }
}

pub fn write_checkpoint(path: impl AsRef<Path>, ckpt: &ModelCheckpoint) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_bytes()?).map_err(|e| StoreError::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<ModelCheckpoint> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| StoreError::io(path, e))?;
    ModelCheckpoint::from_bytes(&buf)
}

/// Head whose weights are all zero and `σ = e`: every window scores
/// `log σ = 1`.
pub fn zero_head(visual_tokens: usize, embed_width: usize) -> Result<HeadParams> {
    Ok(HeadParams::zeros(HeadConfig {
        visual_tokens,
        embed_width,
        ..HeadConfig::default()
    })?)
}
