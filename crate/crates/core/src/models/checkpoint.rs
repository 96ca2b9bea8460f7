//! Binary checkpoints.
//!
//! Layout (little-endian): magic `ODCK`, u32 version, u32 variant id, u32
//! stage, u64 optimizer step, JSON header string (model and optimizer
//! settings), u32 parameter count, then per parameter: name string, u32
//! rank, u32 dims, u8 trainable flag, f32 data. Optimizer first and second
//! moments follow as f32 blocks in parameter order. Strings are u32 length
//! plus UTF-8 bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelVariant};
use crate::binio::{self, put_f32s, put_str, put_u32, put_u64, Reader};
use crate::error::{Error, Result};
use crate::tensor::{Adam, AdamConfig, ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ODCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    adam: AdamConfig,
}

/// Parameters and optimizer state after a completed curriculum stage.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    /// Number of completed stages.
    pub stage: u32,
    pub params: ParamStore,
    pub adam: Adam,
}

impl Checkpoint {
    pub fn variant(&self) -> ModelVariant {
        self.config.variant
    }

    /// The checkpoint as it reads back from disk: every value rounded to
    /// f32.
    pub fn rounded(mut self) -> Self {
        let ids: Vec<_> = self.params.iter().map(|(id, _)| id).collect();
        for id in ids {
            self.params
                .value_mut(id)
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = f64::from(*v as f32));
        }
        for m in self.adam.m.iter_mut().chain(self.adam.v.iter_mut()) {
            m.iter_mut().for_each(|v| *v = f64::from(*v as f32));
        }
        self
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let n = self.params.len();
        if self.adam.m.len() != n || self.adam.v.len() != n {
            return Err(Error::Config(format!(
                "optimizer state covers {} of {n} parameters",
                self.adam.m.len()
            )));
        }
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_u32(&mut out, self.config.variant.id());
        put_u32(&mut out, self.stage);
        put_u64(&mut out, self.adam.step);
        let header = Header {
            model: self.config.clone(),
            adam: self.adam.config,
        };
        let json = serde_json::to_string(&header)
            .map_err(|e| Error::Config(format!("checkpoint header: {e}")))?;
        put_str(&mut out, &json);
        put_u32(&mut out, binio::to_u32(n, "parameter count")?);
        for (_, p) in self.params.iter() {
            put_str(&mut out, &p.name);
            put_u32(&mut out, binio::to_u32(p.value.rank(), "rank")?);
            for &d in p.value.shape() {
                put_u32(&mut out, binio::to_u32(d, "dimension")?);
            }
            out.push(u8::from(p.trainable));
            put_f32s(&mut out, p.value.data().iter().map(|&v| v as f32));
        }
        for moments in [&self.adam.m, &self.adam.v] {
            for m in moments {
                put_f32s(&mut out, m.iter().map(|&v| v as f32));
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(bytes, "checkpoint", path);
        r.expect_magic(CHECKPOINT_MAGIC)?;
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(r.error(format!("unsupported version {version}")));
        }
        let variant_id = r.u32()?;
        let variant = ModelVariant::from_id(variant_id)
            .ok_or_else(|| r.error(format!("unknown variant id {variant_id}")))?;
        let stage = r.u32()?;
        let step = r.u64()?;
        let header: Header =
            serde_json::from_str(&r.string()?).map_err(|e| r.error(format!("bad header: {e}")))?;
        if header.model.variant != variant {
            return Err(r.error(format!(
                "header variant {} does not match id {variant}",
                header.model.variant
            )));
        }
        let n = r.u32()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..n {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let trainable = match r.bytes(1)?[0] {
                0 => false,
                1 => true,
                b => return Err(r.error(format!("bad trainable flag {b} for `{name}`"))),
            };
            let len = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| r.error("shape overflow"))?;
            let data = r.f32s(len)?.into_iter().map(f64::from).collect();
            params
                .add(name, Tensor::new(shape, data)?, trainable)
                .map_err(|e| r.error(e.to_string()))?;
        }
        let mut moments = [Vec::with_capacity(n), Vec::with_capacity(n)];
        for m in &mut moments {
            for (_, p) in params.iter() {
                m.push(r.f32s(p.value.len())?.into_iter().map(f64::from).collect());
            }
        }
        r.finish()?;
        let [m, v] = moments;
        Ok(Checkpoint {
            config: header.model,
            stage,
            params,
            adam: Adam {
                config: header.adam,
                step,
                m,
                v,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binio::write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&binio::read_file(path)?, path)
    }
}
