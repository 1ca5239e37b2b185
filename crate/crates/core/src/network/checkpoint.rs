//! Checkpoint serialization.
//!
//! File layout: a little-endian u64 header length, the JSON header (config,
//! epoch, config digest, optimizer hyperparameters, tensor names/shapes),
//! then the raw tensor payloads as little-endian f64 in header order.

use super::adam::{Adam, AdamHyper};
use super::model::{Model, ModelConfig};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

const FORMAT: &str = "evipitch-checkpoint-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TensorKind {
    Param,
    Buffer,
    AdamM,
    AdamV,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    kind: TensorKind,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format: String,
    epoch: usize,
    config_digest: String,
    config: ModelConfig,
    adam: Option<AdamState>,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AdamState {
    step_count: u64,
    hyper: AdamHyper,
}

/// A frozen model (+ optional optimizer) state.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub epoch: usize,
    pub config_digest: String,
    pub config: ModelConfig,
    adam: Option<AdamState>,
    entries: Vec<(TensorEntry, Tensor)>,
}

impl Checkpoint {
    /// Snapshot the model (and optimizer when resumability is wanted).
    pub fn capture(model: &mut Model, adam: Option<&Adam>, epoch: usize, config_digest: &str) -> Self {
        let mut entries: Vec<(TensorEntry, Tensor)> = Vec::new();
        model.visit_params(&mut |name, p| {
            entries.push((
                TensorEntry {
                    name,
                    kind: TensorKind::Param,
                    shape: p.value.shape.clone(),
                },
                p.value.clone(),
            ));
        });
        model.visit_buffers(&mut |name, b| {
            entries.push((
                TensorEntry {
                    name,
                    kind: TensorKind::Buffer,
                    shape: vec![b.len()],
                },
                Tensor {
                    shape: vec![b.len()],
                    data: b.clone(),
                },
            ));
        });
        if let Some(adam) = adam {
            for (name, t) in &adam.m {
                entries.push((
                    TensorEntry {
                        name: name.clone(),
                        kind: TensorKind::AdamM,
                        shape: t.shape.clone(),
                    },
                    t.clone(),
                ));
            }
            for (name, t) in &adam.v {
                entries.push((
                    TensorEntry {
                        name: name.clone(),
                        kind: TensorKind::AdamV,
                        shape: t.shape.clone(),
                    },
                    t.clone(),
                ));
            }
        }
        Checkpoint {
            epoch,
            config_digest: config_digest.to_string(),
            config: model.config.clone(),
            adam: adam.map(|a| AdamState {
                step_count: a.step_count,
                hyper: a.hyper,
            }),
            entries,
        }
    }

    /// Rebuild the model; optimizer state comes back when it was captured.
    pub fn restore(&self) -> Result<(Model, Option<Adam>)> {
        let mut model = Model::new(self.config.clone())?;
        let mut by_name: BTreeMap<(String, TensorKind), &Tensor> = BTreeMap::new();
        for (e, t) in &self.entries {
            by_name.insert((e.name.clone(), e.kind), t);
        }
        let mut missing: Vec<String> = Vec::new();
        model.visit_params(&mut |name, p| {
            match by_name.get(&(name.clone(), TensorKind::Param)) {
                Some(t) if t.data.len() == p.value.data.len() => {
                    p.value.data.copy_from_slice(&t.data)
                }
                _ => missing.push(name),
            }
        });
        model.visit_buffers(&mut |name, b| {
            match by_name.get(&(name.clone(), TensorKind::Buffer)) {
                Some(t) if t.data.len() == b.len() => b.copy_from_slice(&t.data),
                _ => missing.push(name),
            }
        });
        if !missing.is_empty() {
            return Err(Error::format(format!(
                "checkpoint missing or mismatched tensors: {missing:?}"
            )));
        }
        let adam = match &self.adam {
            Some(state) => {
                let mut adam = Adam::new(state.hyper)?;
                adam.step_count = state.step_count;
                for (e, t) in &self.entries {
                    match e.kind {
                        TensorKind::AdamM => {
                            adam.m.insert(e.name.clone(), t.clone());
                        }
                        TensorKind::AdamV => {
                            adam.v.insert(e.name.clone(), t.clone());
                        }
                        _ => {}
                    }
                }
                Some(adam)
            }
            None => None,
        };
        Ok((model, adam))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            format: FORMAT.to_string(),
            epoch: self.epoch,
            config_digest: self.config_digest.clone(),
            config: self.config.clone(),
            adam: self.adam.clone(),
            tensors: self.entries.iter().map(|(e, _)| e.clone()).collect(),
        };
        let header_json = serde_json::to_vec(&header)?;
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(&(header_json.len() as u64).to_le_bytes())?;
        file.write_all(&header_json)?;
        for (_, t) in &self.entries {
            for v in &t.data {
                file.write_all(&v.to_le_bytes())?;
            }
        }
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut len_bytes = [0u8; 8];
        file.read_exact(&mut len_bytes)?;
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let mut header_json = vec![0u8; header_len];
        file.read_exact(&mut header_json)?;
        let header: Header = serde_json::from_slice(&header_json)?;
        if header.format != FORMAT {
            return Err(Error::format(format!("unknown checkpoint format {:?}", header.format)));
        }
        let mut entries = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            let mut data = vec![0.0f64; n];
            let mut buf = [0u8; 8];
            for v in data.iter_mut() {
                file.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
            let tensor = Tensor {
                shape: e.shape.clone(),
                data,
            };
            entries.push((e, tensor));
        }
        Ok(Checkpoint {
            epoch: header.epoch,
            config_digest: header.config_digest,
            config: header.config,
            adam: header.adam,
            entries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::model::Task;
    use crate::network::tensor::Batch4;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn capture_restore_round_trips_eval_outputs() {
        let cfg = ModelConfig::tiny(Task::M2);
        let digest = cfg.digest();
        let mut model = Model::new(cfg).unwrap();
        // push the model away from init so the test is not trivial
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut x = Batch4::zeros(2, 1, 10, 65);
        use rand::Rng;
        x.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let mut drop_rng = ChaCha8Rng::seed_from_u64(1);
        model.forward_train(&x, &mut drop_rng).unwrap();

        let ckpt = Checkpoint::capture(&mut model, None, 5, &digest);
        let (restored, adam) = ckpt.restore().unwrap();
        assert!(adam.is_none());
        let a = model.forward_eval(&x).unwrap();
        let b = restored.forward_eval(&x).unwrap();
        // bitwise identical evaluation outputs
        assert_eq!(a.head.data, b.head.data);
        assert_eq!(a.voicing.data, b.voicing.data);
    }

    #[test]
    fn save_load_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let cfg = ModelConfig::tiny(Task::M1);
        let digest = cfg.digest();
        let mut model = Model::new(cfg).unwrap();
        let adam = Adam::new(AdamHyper::default()).unwrap();
        let ckpt = Checkpoint::capture(&mut model, Some(&adam), 3, &digest);
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.epoch, 3);
        assert_eq!(loaded.config_digest, digest);

        let mut x = Batch4::zeros(1, 1, 6, 65);
        x.data.iter_mut().enumerate().for_each(|(i, v)| *v = (i % 7) as f64 * 0.1);
        let a = model.forward_eval(&x).unwrap();
        let (restored, _) = loaded.restore().unwrap();
        let b = restored.forward_eval(&x).unwrap();
        assert_eq!(a.head.data, b.head.data);
    }

    #[test]
    fn adam_state_survives_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let cfg = ModelConfig::tiny(Task::M2);
        let digest = cfg.digest();
        let mut model = Model::new(cfg).unwrap();
        let mut adam = Adam::new(AdamHyper::default()).unwrap();
        // take a couple of steps so moments are nonzero
        for _ in 0..3 {
            model.visit_params(&mut |_, p| p.grad.data.iter_mut().for_each(|g| *g = 0.01));
            adam.step(&mut model);
        }
        let ckpt = Checkpoint::capture(&mut model, Some(&adam), 1, &digest);
        ckpt.save(&path).unwrap();
        let (_, restored) = Checkpoint::load(&path).unwrap().restore().unwrap();
        let restored = restored.unwrap();
        assert_eq!(restored.step_count, 3);
        assert_eq!(restored.m.len(), adam.m.len());
        for (k, t) in &adam.m {
            assert_eq!(&restored.m[k].data, &t.data);
        }
    }
}
