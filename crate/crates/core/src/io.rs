//! Dataset CSV files and network checkpoints.
//!
//! Dataset CSV: a header row, then one row per instance in index order.
//! Columns are `f0..f{d-1}` (features), `noisy_label` (current class),
//! optionally `true_label`, and optionally `soft0..soft{C-1}` holding a soft
//! label that takes precedence over `noisy_label` when present.
//!
//! Checkpoint: one UTF-8 JSON header line terminated by `\n`, for example
//! `{"format":"relabel-mlp","version":1,"layers":[{"inputs":10,"outputs":64,"activation":"tanh"}]}`,
//! followed by every layer's weights (row-major, `outputs x inputs`) and then
//! its bias, all as little-endian `f64`, layer by layer, with nothing after.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{argmax_class, one_hot, GroundTruth, Instance, LabelState, SoftLabel};
use crate::mlp::{Activation, Dense, Mlp};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub state: LabelState,
    pub truth: Option<GroundTruth>,
}

enum Column {
    Feature(usize),
    Noisy,
    Truth,
    Soft(usize),
}

fn parse_column(name: &str) -> Result<Column> {
    let indexed = |prefix: &str| -> Option<usize> { name.strip_prefix(prefix)?.parse().ok() };
    match name {
        "noisy_label" => Ok(Column::Noisy),
        "true_label" => Ok(Column::Truth),
        _ => {
            if let Some(i) = indexed("soft") {
                Ok(Column::Soft(i))
            } else if let Some(i) = indexed("f") {
                Ok(Column::Feature(i))
            } else {
                Err(Error::Format(format!("unknown dataset column `{name}`")))
            }
        }
    }
}

fn check_contiguous(mut idx: Vec<usize>, what: &str) -> Result<usize> {
    idx.sort_unstable();
    for (expected, &got) in idx.iter().enumerate() {
        if expected != got {
            return Err(Error::Format(format!("{what} columns are not numbered 0..n")));
        }
    }
    Ok(idx.len())
}

pub fn read_dataset_from<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let columns = rdr
        .headers()?
        .iter()
        .map(|h| parse_column(h.trim()))
        .collect::<Result<Vec<_>>>()?;
    let feature_ids: Vec<usize> = columns
        .iter()
        .filter_map(|c| if let Column::Feature(i) = c { Some(*i) } else { None })
        .collect();
    let soft_ids: Vec<usize> = columns
        .iter()
        .filter_map(|c| if let Column::Soft(i) = c { Some(*i) } else { None })
        .collect();
    let dim = check_contiguous(feature_ids, "feature")?;
    let soft_classes = check_contiguous(soft_ids, "soft label")?;
    if dim == 0 {
        return Err(Error::Format("dataset has no feature columns".into()));
    }
    if !columns.iter().any(|c| matches!(c, Column::Noisy)) {
        return Err(Error::Format("dataset has no `noisy_label` column".into()));
    }
    let has_truth = columns.iter().any(|c| matches!(c, Column::Truth));

    let mut instances = Vec::new();
    let mut noisy = Vec::new();
    let mut truth = Vec::new();
    let mut soft = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let mut features = vec![0.0; dim];
        let mut probs = vec![0.0; soft_classes];
        let mut label = 0usize;
        let mut true_label = 0usize;
        for (col, field) in columns.iter().zip(record.iter()) {
            let field = field.trim();
            let bad = |what: &str| Error::Format(format!("row {row}: invalid {what} `{field}`"));
            match col {
                Column::Feature(i) => features[*i] = field.parse().map_err(|_| bad("feature"))?,
                Column::Soft(j) => probs[*j] = field.parse().map_err(|_| bad("soft label"))?,
                Column::Noisy => label = field.parse().map_err(|_| bad("noisy_label"))?,
                Column::Truth => true_label = field.parse().map_err(|_| bad("true_label"))?,
            }
        }
        instances.push(Instance::new(row, features)?);
        noisy.push(label);
        truth.push(true_label);
        if soft_classes > 0 {
            soft.push(SoftLabel::new(probs)?);
        }
    }
    if instances.is_empty() {
        return Err(Error::Format("dataset has no rows".into()));
    }
    let max_class = noisy
        .iter()
        .chain(if has_truth { truth.iter() } else { [].iter() })
        .copied()
        .max()
        .unwrap_or(0);
    let num_classes = if soft_classes > 0 {
        if max_class >= soft_classes {
            return Err(Error::Format(format!(
                "class {max_class} exceeds the {soft_classes} soft label columns"
            )));
        }
        soft_classes
    } else {
        (max_class + 1).max(2)
    };
    let instances = Arc::new(instances);
    let state = if soft_classes > 0 {
        LabelState::new(instances, soft)?
    } else {
        LabelState::from_hard_labels(instances, &noisy, num_classes)?
    };
    Ok(Dataset {
        state,
        truth: has_truth.then(|| GroundTruth::new(truth)),
    })
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| Error::Config(format!("cannot open dataset {}: {e}", path.display())))?;
    read_dataset_from(BufReader::new(file))
}

/// Writes the dataset; `soft` adds the soft label columns.
pub fn write_dataset_to<W: Write>(
    writer: W,
    state: &LabelState,
    truth: Option<&GroundTruth>,
    soft: bool,
) -> Result<()> {
    if let Some(t) = truth {
        Error::check_dim("dataset truth", state.len(), t.len())?;
    }
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..state.feature_dim()).map(|i| format!("f{i}")).collect();
    header.push("noisy_label".into());
    if truth.is_some() {
        header.push("true_label".into());
    }
    if soft {
        header.extend((0..state.num_classes()).map(|j| format!("soft{j}")));
    }
    wtr.write_record(&header)?;
    for (i, (x, y)) in state.instances.iter().zip(&state.labels).enumerate() {
        let mut row: Vec<String> = x.features.iter().map(|v| v.to_string()).collect();
        row.push(argmax_class(y).to_string());
        if let Some(t) = truth {
            row.push(t.labels[i].to_string());
        }
        if soft {
            row.extend(y.probs().iter().map(|v| v.to_string()));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_dataset(
    path: impl AsRef<Path>,
    state: &LabelState,
    truth: Option<&GroundTruth>,
    soft: bool,
) -> Result<()> {
    write_dataset_to(BufWriter::new(File::create(path)?), state, truth, soft)
}

/// Hard labels as a state, for datasets whose soft columns should be ignored.
pub fn hard_state(state: &LabelState) -> Result<LabelState> {
    let c = state.num_classes();
    let labels = state
        .labels
        .iter()
        .map(|y| one_hot(argmax_class(y), c))
        .collect::<Result<Vec<_>>>()?;
    LabelState::new(Arc::clone(&state.instances), labels)
}

const CHECKPOINT_FORMAT: &str = "relabel-mlp";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerShape {
    inputs: usize,
    outputs: usize,
    activation: Activation,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    format: String,
    version: u32,
    layers: Vec<LayerShape>,
}

pub fn write_params_to<W: Write>(mut w: W, net: &Mlp) -> Result<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        layers: net
            .layers
            .iter()
            .map(|l| LayerShape {
                inputs: l.inputs,
                outputs: l.outputs,
                activation: l.activation,
            })
            .collect(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for layer in &net.layers {
        for v in layer.weights.iter().chain(&layer.bias) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_params_from<R: Read>(r: R) -> Result<Mlp> {
    let mut r = BufReader::new(r);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format("checkpoint header is not newline-terminated".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&line[..line.len() - 1])?;
    if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint {} v{}",
            header.format, header.version
        )));
    }
    let mut buf = [0u8; 8];
    let mut next = |r: &mut BufReader<R>| -> Result<f64> {
        r.read_exact(&mut buf)
            .map_err(|_| Error::Format("checkpoint body is truncated".into()))?;
        Ok(f64::from_le_bytes(buf))
    };
    let mut layers = Vec::with_capacity(header.layers.len());
    for shape in &header.layers {
        let mut layer = Dense::zeros(shape.inputs, shape.outputs, shape.activation);
        for w in layer.weights.iter_mut() {
            *w = next(&mut r)?;
        }
        for b in layer.bias.iter_mut() {
            *b = next(&mut r)?;
        }
        layers.push(layer);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes in checkpoint", rest.len())));
    }
    let net = Mlp::from_layers(layers)?;
    if !net.is_finite() {
        return Err(Error::Format("checkpoint holds non-finite parameters".into()));
    }
    Ok(net)
}

pub fn write_params(path: impl AsRef<Path>, net: &Mlp) -> Result<()> {
    write_params_to(BufWriter::new(File::create(path)?), net)
}

pub fn read_params(path: impl AsRef<Path>) -> Result<Mlp> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| Error::Config(format!("cannot open checkpoint {}: {e}", path.display())))?;
    read_params_from(file)
}
