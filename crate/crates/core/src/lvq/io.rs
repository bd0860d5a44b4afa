//! Binary model container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes   "ACHDSLVQ"
//! version      u32
//! D, d         u64, u64
//! beta         f64
//! distance     u8        0 = chordal, 1 = geodesic
//! classes      u32 count, then per label: u32 byte length + UTF-8
//! relevances   d × f64
//! prototypes   u32 count, then per prototype: u32 class index + D·d f64 (row-major)
//! hyperparams  f64 lr_w, f64 lr_lambda, u64 epochs, u64 per_class, u64 seed
//! training log u32 count, then per epoch: u64 epoch, f64 cost, f64 accuracy, u64 skipped
//! ```

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::{DistanceKind, EpochLog, HyperParams, ModelState, Prototype, RelevanceVector};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"ACHDSLVQ";
pub const MODEL_FORMAT_VERSION: u32 = 1;

fn u32_len(n: usize, what: &str) -> std::io::Result<u32> {
    u32::try_from(n).map_err(|_| std::io::Error::other(format!("too many {what}")))
}

pub fn write_model<W: Write>(model: &ModelState, mut out: W) -> std::io::Result<()> {
    out.write_all(MODEL_MAGIC)?;
    out.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(model.embedding_dim as u64).to_le_bytes())?;
    out.write_all(&(model.subspace_dim as u64).to_le_bytes())?;
    out.write_all(&model.beta.to_le_bytes())?;
    out.write_all(&[model.distance_kind.code()])?;

    out.write_all(&u32_len(model.class_labels.len(), "classes")?.to_le_bytes())?;
    for label in &model.class_labels {
        out.write_all(&u32_len(label.len(), "label bytes")?.to_le_bytes())?;
        out.write_all(label.as_bytes())?;
    }
    for w in model.relevances.weights() {
        out.write_all(&w.to_le_bytes())?;
    }

    out.write_all(&u32_len(model.prototypes.len(), "prototypes")?.to_le_bytes())?;
    for p in &model.prototypes {
        let class = model
            .class_labels
            .iter()
            .position(|l| l == &p.label)
            .ok_or_else(|| std::io::Error::other(format!("prototype label {:?} not in class list", p.label)))?;
        out.write_all(&(class as u32).to_le_bytes())?;
        for r in 0..p.basis.nrows() {
            for c in 0..p.basis.ncols() {
                out.write_all(&p.basis[(r, c)].to_le_bytes())?;
            }
        }
    }

    let h = &model.hyperparams;
    out.write_all(&h.lr_prototypes.to_le_bytes())?;
    out.write_all(&h.lr_relevances.to_le_bytes())?;
    out.write_all(&(h.epochs as u64).to_le_bytes())?;
    out.write_all(&(h.per_class as u64).to_le_bytes())?;
    out.write_all(&h.seed.to_le_bytes())?;

    out.write_all(&u32_len(model.training_log.len(), "log entries")?.to_le_bytes())?;
    for e in &model.training_log {
        out.write_all(&(e.epoch as u64).to_le_bytes())?;
        out.write_all(&e.mean_cost.to_le_bytes())?;
        out.write_all(&e.accuracy.to_le_bytes())?;
        out.write_all(&(e.skipped as u64).to_le_bytes())?;
    }
    out.flush()
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::ModelFormat(format!("truncated while reading {what}"))),
        }
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.array::<1>(what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        usize::try_from(self.u64(what)?).map_err(|_| Error::ModelFormat(format!("{what} out of range")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }
}

pub fn read_model<R: Read>(mut input: R) -> Result<ModelState> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::ModelFormat(format!("read failed: {e}")))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };

    if cur.take(8, "magic")? != MODEL_MAGIC {
        return Err(Error::ModelFormat("not a model file (bad magic)".into()));
    }
    let version = cur.u32("version")?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported format version {version} (expected {MODEL_FORMAT_VERSION})"
        )));
    }
    let embedding_dim = cur.usize("embedding dimension")?;
    let subspace_dim = cur.usize("subspace dimension")?;
    if subspace_dim == 0 || embedding_dim < subspace_dim {
        return Err(Error::ModelFormat(format!(
            "invalid dimensions D = {embedding_dim}, d = {subspace_dim}"
        )));
    }
    let beta = cur.f64("beta")?;
    let kind_code = cur.u8("distance kind")?;
    let distance_kind = DistanceKind::from_code(kind_code)
        .ok_or_else(|| Error::ModelFormat(format!("unknown distance kind {kind_code}")))?;

    let n_classes = cur.u32("class count")? as usize;
    let mut class_labels = Vec::with_capacity(n_classes.min(1024));
    for _ in 0..n_classes {
        let len = cur.u32("label length")? as usize;
        let raw = cur.take(len, "label")?;
        let label = std::str::from_utf8(raw).map_err(|_| Error::ModelFormat("label is not UTF-8".into()))?;
        class_labels.push(label.to_string());
    }

    let mut weights = Vec::with_capacity(subspace_dim);
    for _ in 0..subspace_dim {
        weights.push(cur.f64("relevances")?);
    }
    let relevances = RelevanceVector::from_weights(weights).map_err(|e| Error::ModelFormat(e.to_string()))?;

    let n_protos = cur.u32("prototype count")? as usize;
    // guard allocation against corrupt counts
    let entries = embedding_dim
        .checked_mul(subspace_dim)
        .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= bytes.len()))
        .ok_or_else(|| Error::ModelFormat("prototype size exceeds file size".into()))?;
    let mut prototypes = Vec::with_capacity(n_protos.min(1024));
    for _ in 0..n_protos {
        let class = cur.u32("prototype class")? as usize;
        let label = class_labels
            .get(class)
            .ok_or_else(|| Error::ModelFormat(format!("prototype class index {class} out of range")))?
            .clone();
        let mut row_major = Vec::with_capacity(entries);
        for _ in 0..entries {
            row_major.push(cur.f64("prototype")?);
        }
        let basis = DMatrix::from_row_slice(embedding_dim, subspace_dim, &row_major);
        prototypes.push(Prototype::new(basis, label));
    }

    let hyperparams = HyperParams {
        lr_prototypes: cur.f64("hyperparameters")?,
        lr_relevances: cur.f64("hyperparameters")?,
        epochs: cur.usize("hyperparameters")?,
        per_class: cur.usize("hyperparameters")?,
        seed: cur.u64("hyperparameters")?,
    };

    let n_log = cur.u32("log count")? as usize;
    let mut training_log = Vec::with_capacity(n_log.min(100_000));
    for _ in 0..n_log {
        training_log.push(EpochLog {
            epoch: cur.usize("training log")?,
            mean_cost: cur.f64("training log")?,
            accuracy: cur.f64("training log")?,
            skipped: cur.usize("training log")?,
        });
    }
    if cur.pos != bytes.len() {
        return Err(Error::ModelFormat(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }

    let model = ModelState {
        prototypes,
        relevances,
        embedding_dim,
        subspace_dim,
        beta,
        distance_kind,
        class_labels,
        hyperparams,
        training_log,
    };
    model.validate()?;
    Ok(model)
}

/// Writes to a temporary file next to `path`, then renames it into place.
pub fn save_model(model: &ModelState, path: &Path) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    write_model(model, std::io::BufWriter::new(tmp.as_file_mut())).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelState> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(std::io::BufReader::new(file))
}
