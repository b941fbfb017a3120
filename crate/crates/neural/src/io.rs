//! Binary containers for checkpoints and datasets.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header, then little-endian 64-bit payload words. The header lists every
//! tensor so a reader can verify the payload length before building anything.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetKind};
use crate::error::{NeuralError, Result};
use crate::mlp::{MlpArchitecture, MlpModel};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DDSTMLP\0";
pub const DATASET_MAGIC: &[u8; 8] = b"DDSTSET\0";
pub const FORMAT_VERSION: u32 = 1;
/// Upper bound on the JSON header, to reject garbage lengths early.
const MAX_HEADER: u64 = 1 << 24;
/// Rows written per chunk in dataset files.
const CHUNK_ROWS: usize = 4096;

fn format_err(msg: impl Into<String>) -> NeuralError {
    NeuralError::Format(msg.into())
}

fn write_preamble<W: Write, H: Serialize>(w: &mut W, magic: &[u8; 8], header: &H) -> Result<()> {
    let json = serde_json::to_vec(header).map_err(|e| format_err(e.to_string()))?;
    w.write_all(magic)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

fn read_exact_or_format<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => format_err(format!("truncated file while reading {what}")),
        _ => NeuralError::Io(e),
    })
}

fn read_preamble<R: Read, H: for<'de> Deserialize<'de>>(r: &mut R, magic: &[u8; 8], kind: &str) -> Result<H> {
    let mut m = [0u8; 8];
    read_exact_or_format(r, &mut m, "magic")?;
    if &m != magic {
        return Err(format_err(format!("not a {kind} file (bad magic)")));
    }
    let mut b4 = [0u8; 4];
    read_exact_or_format(r, &mut b4, "version")?;
    let version = u32::from_le_bytes(b4);
    if version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported {kind} version {version}, expected {FORMAT_VERSION}")));
    }
    let mut b8 = [0u8; 8];
    read_exact_or_format(r, &mut b8, "header length")?;
    let len = u64::from_le_bytes(b8);
    if len > MAX_HEADER {
        return Err(format_err(format!("header length {len} exceeds limit")));
    }
    let mut json = vec![0u8; len as usize];
    read_exact_or_format(r, &mut json, "header")?;
    serde_json::from_slice(&json).map_err(|e| format_err(format!("bad {kind} header: {e}")))
}

fn write_f64s<W: Write>(w: &mut W, values: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, count: usize, what: &str) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    read_exact_or_format(r, &mut bytes, what)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

fn expect_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(format_err("trailing bytes after payload")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointHeader {
    architecture: MlpArchitecture,
    step: u64,
    config_hash: String,
    tensors: Vec<TensorInfo>,
}

/// A model together with the hash of the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: MlpModel,
    pub config_hash: String,
}

fn tensor_layout(arch: &MlpArchitecture) -> Vec<TensorInfo> {
    let mut t = vec![
        TensorInfo { name: "bn_running_mean".into(), shape: vec![arch.input_width()] },
        TensorInfo { name: "bn_running_var".into(), shape: vec![arch.input_width()] },
    ];
    for (k, w) in arch.layer_sizes.windows(2).enumerate() {
        // Layer numbering starts at 2: layer 1 is the input.
        t.push(TensorInfo { name: format!("W{}", k + 2), shape: vec![w[0], w[1]] });
        t.push(TensorInfo { name: format!("b{}", k + 2), shape: vec![w[1]] });
    }
    t
}

pub fn write_checkpoint<W: Write>(w: &mut W, model: &MlpModel, config_hash: &str) -> Result<()> {
    model.validate()?;
    let header = CheckpointHeader {
        architecture: model.architecture.clone(),
        step: model.step,
        config_hash: config_hash.to_owned(),
        tensors: tensor_layout(&model.architecture),
    };
    write_preamble(w, CHECKPOINT_MAGIC, &header)?;
    write_f64s(w, model.bn_running_mean.iter().copied())?;
    write_f64s(w, model.bn_running_var.iter().copied())?;
    for (wk, bk) in model.weights.iter().zip(&model.biases) {
        write_f64s(w, wk.iter().copied())?;
        write_f64s(w, bk.iter().copied())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint> {
    let header: CheckpointHeader = read_preamble(r, CHECKPOINT_MAGIC, "checkpoint")?;
    header.architecture.validate()?;
    if header.tensors != tensor_layout(&header.architecture) {
        return Err(format_err("tensor table does not match the declared architecture"));
    }
    let arch = header.architecture;
    let d = arch.input_width();
    let mean = Array1::from(read_f64s(r, d, "bn_running_mean")?);
    let var = Array1::from(read_f64s(r, d, "bn_running_var")?);
    let mut weights = Vec::with_capacity(arch.depth());
    let mut biases = Vec::with_capacity(arch.depth());
    for (k, w) in arch.layer_sizes.windows(2).enumerate() {
        let data = read_f64s(r, w[0] * w[1], &format!("W{}", k + 2))?;
        weights.push(Array2::from_shape_vec((w[0], w[1]), data).map_err(|e| format_err(e.to_string()))?);
        biases.push(Array1::from(read_f64s(r, w[1], &format!("b{}", k + 2))?));
    }
    expect_eof(r)?;
    let model = MlpModel { architecture: arch, weights, biases, bn_running_mean: mean, bn_running_var: var, step: header.step };
    model.validate()?;
    Ok(Checkpoint { model, config_hash: header.config_hash })
}

pub fn save_checkpoint(path: &Path, model: &MlpModel, config_hash: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, model, config_hash)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);
    read_checkpoint(&mut r)
}

/// Load and require a specific architecture.
pub fn load_checkpoint_for(path: &Path, expected: &MlpArchitecture) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if &ckpt.model.architecture != expected {
        return Err(format_err(format!(
            "architecture mismatch in {}: expected layers {:?}, found {:?}",
            path.display(),
            expected.layer_sizes,
            ckpt.model.architecture.layer_sizes
        )));
    }
    Ok(ckpt)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetHeader {
    kind: DatasetKind,
    rows: usize,
    input_width: usize,
    label_width: usize,
    seed: u64,
    config_hash: String,
    chunk_rows: usize,
    /// Free-form generation settings supplied by the caller.
    generation: serde_json::Value,
}

pub fn write_dataset<W: Write>(w: &mut W, ds: &Dataset, generation: &serde_json::Value) -> Result<()> {
    ds.validate()?;
    let header = DatasetHeader {
        kind: ds.kind,
        rows: ds.len(),
        input_width: ds.input_width(),
        label_width: ds.label_width(),
        seed: ds.seed,
        config_hash: ds.config_hash.clone(),
        chunk_rows: CHUNK_ROWS,
        generation: generation.clone(),
    };
    write_preamble(w, DATASET_MAGIC, &header)?;
    write_f64s(w, ds.snr_db.iter().copied())?;
    // Stream indices travel as raw 64-bit words.
    write_f64s(w, ds.streams.iter().map(|&s| f64::from_bits(s)))?;
    for start in (0..ds.len()).step_by(CHUNK_ROWS) {
        let end = (start + CHUNK_ROWS).min(ds.len());
        write_f64s(w, ds.inputs.slice(ndarray::s![start..end, ..]).iter().copied())?;
        write_f64s(w, ds.labels.slice(ndarray::s![start..end, ..]).iter().copied())?;
    }
    Ok(())
}

/// Read a dataset and the generation settings stored with it.
pub fn read_dataset<R: Read>(r: &mut R) -> Result<(Dataset, serde_json::Value)> {
    let h: DatasetHeader = read_preamble(r, DATASET_MAGIC, "dataset")?;
    if h.chunk_rows == 0 {
        return Err(format_err("chunk size must be positive"));
    }
    let snr_db = read_f64s(r, h.rows, "per-sample SNR")?;
    let streams = read_f64s(r, h.rows, "per-sample streams")?.into_iter().map(f64::to_bits).collect();
    let mut inputs = Vec::with_capacity(h.rows * h.input_width);
    let mut labels = Vec::with_capacity(h.rows * h.label_width);
    for start in (0..h.rows).step_by(h.chunk_rows) {
        let n = (start + h.chunk_rows).min(h.rows) - start;
        inputs.extend(read_f64s(r, n * h.input_width, "input rows")?);
        labels.extend(read_f64s(r, n * h.label_width, "label rows")?);
    }
    expect_eof(r)?;
    let shape_err = |e: ndarray::ShapeError| format_err(e.to_string());
    let ds = Dataset::new(
        h.kind,
        Array2::from_shape_vec((h.rows, h.input_width), inputs).map_err(shape_err)?,
        Array2::from_shape_vec((h.rows, h.label_width), labels).map_err(shape_err)?,
        snr_db,
        streams,
        h.seed,
        h.config_hash,
    )?;
    Ok((ds, h.generation))
}

pub fn save_dataset(path: &Path, ds: &Dataset, generation: &serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(&mut w, ds, generation)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<(Dataset, serde_json::Value)> {
    let mut r = BufReader::new(File::open(path)?);
    read_dataset(&mut r)
}
