//! Binary checkpoint format: full trainer state so a resumed run is
//! bit-identical to an uninterrupted one.
//!
//! Layout (all little-endian):
//! magic "BNBN" | version u32 | model-config JSON (u32 len + bytes)
//! | lr, beta1, beta2, eps f64 | seed u64 | step u64 | adam_t u64
//! | rng word position u128 | epoch_pos u64 | epoch order (u64 len + u64s)
//! | param count u32 | per param: name, shape, values, adam m, adam v

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Params};
use crate::train::{Adam, TrainConfig, Trainer};

const MAGIC: &[u8; 4] = b"BNBN";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub step: u64,
    pub adam_t: u64,
    pub rng_word_pos: u128,
    pub epoch_pos: u64,
    pub epoch_order: Vec<u64>,
    pub params: Params,
    pub adam_m: IndexMap<String, Tensor>,
    pub adam_v: IndexMap<String, Tensor>,
}

impl Checkpoint {
    pub fn from_trainer(t: &Trainer) -> Self {
        Self {
            model: t.cfg.model.clone(),
            lr: t.cfg.lr,
            beta1: t.cfg.beta1,
            beta2: t.cfg.beta2,
            eps: t.cfg.eps,
            seed: t.cfg.seed,
            step: t.step,
            adam_t: t.adam.t,
            rng_word_pos: t.rng.get_word_pos(),
            epoch_pos: t.epoch_pos as u64,
            epoch_order: t.epoch_order.iter().map(|&i| i as u64).collect(),
            params: t.params.clone(),
            adam_m: t.adam.m.clone(),
            adam_v: t.adam.v.clone(),
        }
    }

    /// Rebuild a trainer; remaining train-loop settings (steps, batch size,
    /// loss weights, logging) come from `cfg`, whose model/optimizer fields
    /// must match the checkpoint.
    pub fn into_trainer(self, cfg: TrainConfig) -> Result<Trainer> {
        if cfg.model != self.model {
            return Err(Error::Config(
                "checkpoint model configuration does not match the requested one".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_5eed_5eed_5eed);
        rng.set_word_pos(self.rng_word_pos);
        let adam = Adam {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            m: self.adam_m,
            v: self.adam_v,
            t: self.adam_t,
        };
        Ok(Trainer {
            cfg: TrainConfig {
                model: self.model,
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
                seed: self.seed,
                ..cfg
            },
            params: self.params,
            adam,
            step: self.step,
            rng,
            epoch_order: self.epoch_order.iter().map(|&i| i as usize).collect(),
            epoch_pos: self.epoch_pos as usize,
        })
    }
}

fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> Result<()> {
    w.write_u32::<LittleEndian>(t.shape.len() as u32)?;
    for &d in &t.shape {
        w.write_u64::<LittleEndian>(d as u64)?;
    }
    for &v in &t.data {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor> {
    let ndim = r.read_u32::<LittleEndian>()? as usize;
    if ndim > 8 {
        return Err(Error::Data(format!("checkpoint tensor rank {ndim} is implausible")));
    }
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(r.read_u64::<LittleEndian>()? as usize);
    }
    let n: usize = shape.iter().product();
    if n > 1 << 28 {
        return Err(Error::Data(format!("checkpoint tensor of {n} elements is implausible")));
    }
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(r.read_f64::<LittleEndian>()?);
    }
    Ok(Tensor::new(shape, data))
}

fn write_string<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_string<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    if len > 1 << 20 {
        return Err(Error::Data(format!("checkpoint string of {len} bytes is implausible")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Data("checkpoint string is not UTF-8".into()))
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    let cfg_json = serde_json::to_string(&ckpt.model)
        .map_err(|e| Error::Data(format!("serializing model config: {e}")))?;
    write_string(&mut w, &cfg_json)?;
    for v in [ckpt.lr, ckpt.beta1, ckpt.beta2, ckpt.eps] {
        w.write_f64::<LittleEndian>(v)?;
    }
    w.write_u64::<LittleEndian>(ckpt.seed)?;
    w.write_u64::<LittleEndian>(ckpt.step)?;
    w.write_u64::<LittleEndian>(ckpt.adam_t)?;
    w.write_u128::<LittleEndian>(ckpt.rng_word_pos)?;
    w.write_u64::<LittleEndian>(ckpt.epoch_pos)?;
    w.write_u64::<LittleEndian>(ckpt.epoch_order.len() as u64)?;
    for &i in &ckpt.epoch_order {
        w.write_u64::<LittleEndian>(i)?;
    }
    w.write_u32::<LittleEndian>(ckpt.params.map.len() as u32)?;
    for (name, p) in &ckpt.params.map {
        write_string(&mut w, name)?;
        write_tensor(&mut w, p)?;
        write_tensor(&mut w, &ckpt.adam_m[name])?;
        write_tensor(&mut w, &ckpt.adam_v[name])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);
    let inner = (|| -> Result<Checkpoint> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Data(format!(
                "{}: not a checkpoint (bad magic)",
                path.display()
            )));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Data(format!(
                "{}: unsupported checkpoint version {version}",
                path.display()
            )));
        }
        let cfg_json = read_string(&mut r)?;
        let model: ModelConfig = serde_json::from_str(&cfg_json)
            .map_err(|e| Error::Data(format!("{}: bad model config: {e}", path.display())))?;
        let lr = r.read_f64::<LittleEndian>()?;
        let beta1 = r.read_f64::<LittleEndian>()?;
        let beta2 = r.read_f64::<LittleEndian>()?;
        let eps = r.read_f64::<LittleEndian>()?;
        let seed = r.read_u64::<LittleEndian>()?;
        let step = r.read_u64::<LittleEndian>()?;
        let adam_t = r.read_u64::<LittleEndian>()?;
        let rng_word_pos = r.read_u128::<LittleEndian>()?;
        let epoch_pos = r.read_u64::<LittleEndian>()?;
        let n_order = r.read_u64::<LittleEndian>()? as usize;
        if n_order > 1 << 24 {
            return Err(Error::Data("checkpoint epoch order is implausibly long".into()));
        }
        let mut epoch_order = Vec::with_capacity(n_order);
        for _ in 0..n_order {
            epoch_order.push(r.read_u64::<LittleEndian>()?);
        }
        let n_params = r.read_u32::<LittleEndian>()? as usize;
        let mut params = IndexMap::new();
        let mut adam_m = IndexMap::new();
        let mut adam_v = IndexMap::new();
        for _ in 0..n_params {
            let name = read_string(&mut r)?;
            let p = read_tensor(&mut r)?;
            let m = read_tensor(&mut r)?;
            let v = read_tensor(&mut r)?;
            if m.shape != p.shape || v.shape != p.shape {
                return Err(Error::Data(format!(
                    "checkpoint moment shapes disagree for parameter '{name}'"
                )));
            }
            params.insert(name.clone(), p);
            adam_m.insert(name.clone(), m);
            adam_v.insert(name, v);
        }
        // verify the parameter set matches what the config implies
        let expected = Params::init(&model, seed)?;
        if expected.map.len() != params.len()
            || expected
                .map
                .iter()
                .zip(&params)
                .any(|((an, at), (bn, bt))| an != bn || at.shape != bt.shape)
        {
            return Err(Error::Data(format!(
                "{}: parameter inventory does not match the stored model config",
                path.display()
            )));
        }
        Ok(Checkpoint {
            model,
            lr,
            beta1,
            beta2,
            eps,
            seed,
            step,
            adam_t,
            rng_word_pos,
            epoch_pos,
            epoch_order,
            params: Params { map: params },
            adam_m,
            adam_v,
        })
    })();
    inner.map_err(|e| match e {
        Error::Io(ioe) if ioe.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::Data(format!("{}: checkpoint is truncated", path.display()))
        }
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn toy_trainer() -> Trainer {
        let cfg = TrainConfig {
            model: ModelConfig::toy(),
            steps: 10,
            batch_size: 2,
            seed: 3,
            ..TrainConfig::default()
        };
        Trainer::new(cfg).unwrap()
    }

    #[test]
    fn roundtrip_preserves_state() {
        let t = toy_trainer();
        let ckpt = Checkpoint::from_trainer(&t);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        save(&path, &ckpt).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.params, t.params);
        assert_eq!(loaded.step, t.step);
        assert_eq!(loaded.rng_word_pos, t.rng.get_word_pos());
        assert_eq!(loaded.model, t.cfg.model);
    }

    #[test]
    fn truncation_is_a_data_error() {
        let t = toy_trainer();
        let ckpt = Checkpoint::from_trainer(&t);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        save(&path, &ckpt).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut = path.with_extension("cut");
        std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load(&cut), Err(Error::Data(_))));
        // garbage magic
        let bad = path.with_extension("bad");
        std::fs::write(&bad, b"not a checkpoint at all").unwrap();
        assert!(matches!(load(&bad), Err(Error::Data(_))));
    }
}
