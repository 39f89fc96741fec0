//! Binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  "TRAJACT\0"
//! version   u32      1
//! header    u32 length + UTF-8 JSON (CheckpointHeader)
//! count     u32      number of parameters
//! per parameter:
//!   name    u32 length + UTF-8
//!   dtype   u8       0 = f32, 1 = f64
//!   rank    u32, then rank × u64 dimensions
//!   data    product(dims) little-endian values
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use trajact_core::data::Tracklet;
use trajact_core::model::{model_from_params, Model, ModelSpec, PredictionOutput};
use trajact_core::numerics::{DType, ParamStore, Scalar, Tensor};
use trajact_core::train::{evaluate, EvalMetrics, F1Average, FoldMetrics};
use trajact_core::vocab::Vocabulary;

pub const MAGIC: &[u8; 8] = b"TRAJACT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic bytes)")]
    Magic,
    #[error("checkpoint version {found} is not supported (expected {VERSION})")]
    Version { found: u32 },
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint does not match its model spec: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything needed to rebuild and re-evaluate a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: ModelSpec,
    pub vocabulary: Vocabulary,
    pub dtype: DType,
    /// Validation fold and fold count, if trained inside cross-validation.
    pub fold: Option<usize>,
    pub folds: Option<usize>,
    /// Seed of the fold assignment.
    pub split_seed: u64,
    pub train_seed: u64,
    pub f1_average: F1Average,
    /// Metrics recorded on the validation fold at the end of training.
    pub metrics: Option<FoldMetrics>,
}

/// A model of either precision.
#[derive(Debug, Clone)]
pub enum AnyModel {
    F32(Model<f32>),
    F64(Model<f64>),
}

impl AnyModel {
    pub fn spec(&self) -> &ModelSpec {
        match self {
            AnyModel::F32(m) => &m.spec,
            AnyModel::F64(m) => &m.spec,
        }
    }

    pub fn evaluate(&self, tracklets: &[&Tracklet], vocab: &Vocabulary, avg: F1Average) -> trajact_core::Result<EvalMetrics> {
        match self {
            AnyModel::F32(m) => evaluate(m, tracklets, vocab, avg),
            AnyModel::F64(m) => evaluate(m, tracklets, vocab, avg),
        }
    }

    pub fn predict(&self, tracklets: &[&Tracklet], vocab: &Vocabulary) -> trajact_core::Result<Vec<PredictionOutput>> {
        match self {
            AnyModel::F32(m) => m.predict(tracklets, vocab),
            AnyModel::F64(m) => m.predict(tracklets, vocab),
        }
    }
}

pub fn encode<S: Scalar>(header: &CheckpointHeader, model: &Model<S>) -> Result<Vec<u8>, CheckpointError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let json = serde_json::to_vec(header)?;
    put_len(&mut out, json.len())?;
    out.extend_from_slice(&json);
    put_len(&mut out, model.params.len())?;
    for p in model.params.iter() {
        put_len(&mut out, p.name.len())?;
        out.extend_from_slice(p.name.as_bytes());
        out.push(S::DTYPE.code());
        put_len(&mut out, p.value.rank())?;
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in p.value.data() {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

fn put_len(out: &mut Vec<u8>, n: usize) -> Result<(), CheckpointError> {
    let n = u32::try_from(n).map_err(|_| CheckpointError::Mismatch(format!("length {n} exceeds u32")))?;
    out.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() < n {
            return Err(CheckpointError::Truncated);
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn read_params<S: Scalar>(c: &mut Cursor<'_>, count: usize) -> Result<ParamStore<S>, CheckpointError> {
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| CheckpointError::Mismatch("parameter name is not UTF-8".into()))?
            .to_string();
        let code = c.take(1)?[0];
        if DType::from_code(code) != Some(S::DTYPE) {
            return Err(CheckpointError::Mismatch(format!("{name}: dtype code {code}, header says {:?}", S::DTYPE)));
        }
        let rank = c.u32()? as usize;
        let shape = (0..rank).map(|_| c.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let size = S::DTYPE.size();
        let raw = c.take(n.checked_mul(size).ok_or(CheckpointError::Truncated)?)?;
        let data: Vec<S> = raw.chunks_exact(size).map(S::read_le).collect();
        let value = Tensor::new(&shape, data).map_err(|e| CheckpointError::Mismatch(e.to_string()))?;
        store.add(name, value);
    }
    Ok(store)
}

pub fn decode(bytes: &[u8]) -> Result<(CheckpointHeader, AnyModel), CheckpointError> {
    let mut c = Cursor { bytes };
    if c.take(MAGIC.len()).map_err(|_| CheckpointError::Magic)? != MAGIC {
        return Err(CheckpointError::Magic);
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Version { found: version });
    }
    let len = c.u32()? as usize;
    let header: CheckpointHeader = serde_json::from_slice(c.take(len)?)?;
    let vocab = Vocabulary::new(header.vocabulary.actions().to_vec(), header.vocabulary.agent_classes().to_vec())
        .map_err(|e| CheckpointError::Mismatch(e.to_string()))?;
    header.model.check_vocab(&vocab).map_err(|e| CheckpointError::Mismatch(e.to_string()))?;
    let count = c.u32()? as usize;
    let mismatch = |e: trajact_core::Error| CheckpointError::Mismatch(e.to_string());
    let model = match header.dtype {
        DType::F32 => AnyModel::F32(model_from_params(&header.model, &read_params::<f32>(&mut c, count)?).map_err(mismatch)?),
        DType::F64 => AnyModel::F64(model_from_params(&header.model, &read_params::<f64>(&mut c, count)?).map_err(mismatch)?),
    };
    if !c.bytes.is_empty() {
        return Err(CheckpointError::Mismatch(format!("{} trailing bytes", c.bytes.len())));
    }
    Ok((header, model))
}

pub fn save<S: Scalar>(path: &Path, header: &CheckpointHeader, model: &Model<S>) -> Result<(), CheckpointError> {
    fs::write(path, encode(header, model)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(CheckpointHeader, AnyModel), CheckpointError> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use trajact_core::model::{build_model, Task};
    use trajact_core::vocab::{scenario_vocabulary, ScenarioSelector};

    fn header(spec: &ModelSpec, dtype: DType) -> CheckpointHeader {
        CheckpointHeader {
            model: spec.clone(),
            vocabulary: scenario_vocabulary(ScenarioSelector::Scenarios2and3),
            dtype,
            fold: Some(1),
            folds: Some(5),
            split_seed: 3,
            train_seed: 4,
            f1_average: F1Average::Macro,
            metrics: None,
        }
    }

    fn spec() -> ModelSpec {
        ModelSpec::for_vocab(&scenario_vocabulary(ScenarioSelector::Scenarios2and3))
            .with_task(Task::MTL)
            .with_agent_class(true)
    }

    #[test]
    fn round_trip_both_precisions() {
        let s = spec();
        let m32 = build_model::<f32>(&s, 1).unwrap();
        let (h, back) = decode(&encode(&header(&s, DType::F32), &m32).unwrap()).unwrap();
        assert_eq!(h, header(&s, DType::F32));
        let AnyModel::F32(b) = back else { panic!("wrong precision") };
        for (x, y) in m32.params.iter().zip(b.params.iter()) {
            assert_eq!((&x.name, &x.value), (&y.name, &y.value));
        }
        let m64 = build_model::<f64>(&s, 2).unwrap();
        let (_, back) = decode(&encode(&header(&s, DType::F64), &m64).unwrap()).unwrap();
        assert!(matches!(back, AnyModel::F64(_)));
    }

    #[test]
    fn byte_layout_prefix() {
        let s = spec();
        let bytes = encode(&header(&s, DType::F32), &build_model::<f32>(&s, 1).unwrap()).unwrap();
        assert_eq!(&bytes[..8], b"TRAJACT\0");
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        assert!(serde_json::from_slice::<CheckpointHeader>(&bytes[16..16 + hlen]).is_ok());
    }

    #[test]
    fn rejects_corruption() {
        let s = spec();
        let good = encode(&header(&s, DType::F32), &build_model::<f32>(&s, 1).unwrap()).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(CheckpointError::Magic)));
        let mut bad = good.clone();
        bad[8] = 2;
        assert!(matches!(decode(&bad), Err(CheckpointError::Version { found: 2 })));
        assert!(matches!(decode(&good[..good.len() - 3]), Err(CheckpointError::Truncated)));
        // weights of a baseline model under an MTL header
        let base = ModelSpec::for_vocab(&scenario_vocabulary(ScenarioSelector::Scenarios2and3));
        let other = encode(&header(&s, DType::F32), &build_model::<f32>(&base, 1).unwrap()).unwrap();
        assert!(matches!(decode(&other), Err(CheckpointError::Mismatch(_))));
    }
}
