//! Stage hand-off files: POD bases, sensor sets, decoder checkpoints and
//! training histories.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparsense_core::linalg::Matrix;
use sparsense_core::lowrank::PodBasis;
use sparsense_core::placement::{SensorMethod, SensorSet};
use sparsense_core::sdn::{Activation, Architecture, History, SdnModel};
use sparsense_core::snapshots::{decode_f64_le, encode_f64_le};

use crate::error::{Error, Result};
use crate::formats::{read_bytes, read_json, sidecar_path, write_bytes, write_json, Layout};

pub fn hex(v: u64) -> String {
    format!("{v:016x}")
}

/// Sidecar of a stored basis. The raw file holds the `m × r` modes column
/// by column, followed by the `m` training-mean entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSidecar {
    pub m: usize,
    pub r: usize,
    pub singular_values: Vec<f64>,
    pub mean_included: bool,
    pub fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_shape: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
}

pub fn save_basis(path: &Path, basis: &PodBasis, layout: &Layout) -> Result<()> {
    let mut values = basis.modes().as_slice().to_vec();
    values.extend_from_slice(basis.train_mean());
    write_bytes(path, &encode_f64_le(&values))?;
    let side = BasisSidecar {
        m: basis.dim(),
        r: basis.rank(),
        singular_values: basis.singular_values().to_vec(),
        mean_included: true,
        fingerprint: hex(basis.fingerprint()),
        grid_shape: layout.grid_shape.map(|(r, c)| [r, c]),
        mask_path: layout.save_mask_beside(path)?,
    };
    write_json(&sidecar_path(path), &side)
}

pub fn load_basis(path: &Path) -> Result<(PodBasis, Layout)> {
    let side: BasisSidecar = read_json(&sidecar_path(path))?;
    let values = decode_f64_le(&read_bytes(path)?).map_err(|e| Error::load(path, e))?;
    let modes_len = side.m * side.r;
    let expected = modes_len + if side.mean_included { side.m } else { 0 };
    if values.len() != expected {
        return Err(Error::artifact(
            path,
            format!("expected {expected} values for m = {}, r = {}, found {}", side.m, side.r, values.len()),
        ));
    }
    let modes = Matrix::from_col_major(side.m, side.r, values[..modes_len].to_vec())?;
    let mean = if side.mean_included {
        values[modes_len..].to_vec()
    } else {
        vec![0.0; side.m]
    };
    let basis = PodBasis::from_parts(modes, side.singular_values, mean).map_err(|e| Error::load(path, e))?;
    let layout = Layout::load_beside(path, side.grid_shape, side.mask_path.as_deref())?;
    Ok((basis, layout))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorsFile {
    pub indices: Vec<usize>,
    pub m: usize,
    pub method: SensorMethod,
    pub seed: Option<u64>,
    /// Grid `(row, col)` of each sensor, for reading only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<Vec<[usize; 2]>>,
}

pub fn save_sensors(path: &Path, sensors: &SensorSet, layout: &Layout) -> Result<()> {
    let coordinates = layout.grid_shape.map(|_| {
        sensors
            .indices()
            .iter()
            .map(|&k| {
                let (r, c) = layout.coordinates(k).unwrap_or_default();
                [r, c]
            })
            .collect()
    });
    let file = SensorsFile {
        indices: sensors.indices().to_vec(),
        m: sensors.m(),
        method: sensors.method(),
        seed: sensors.seed(),
        coordinates,
    };
    write_json(path, &file)
}

pub fn load_sensors(path: &Path) -> Result<SensorSet> {
    let f: SensorsFile = read_json(path)?;
    SensorSet::new(f.indices, f.m, f.method, f.seed).map_err(|e| Error::load(path, e))
}

/// JSON manifest of a decoder checkpoint. Parameters live in the raw file
/// named by `parameters_path` in `W1, b1, W2, b2, …` order, followed by
/// the training mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub use_bias: bool,
    pub mask: Vec<bool>,
    pub parameters_path: String,
    pub parameter_count: usize,
    pub mean_included: bool,
    /// Sensor set feeding the inputs, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensors: Option<SensorsFile>,
    pub config_fingerprint: String,
    pub model_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: SdnModel,
    pub train_mean: Vec<f64>,
    pub sensors: Option<SensorSet>,
    pub config_fingerprint: u64,
}

fn parameters_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Writes `<stem>.json` (the path given) and `<stem>.bin`.
pub fn save_checkpoint(manifest_path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let model = &ckpt.model;
    if ckpt.train_mean.len() != model.output_width() {
        return Err(Error::artifact(
            manifest_path,
            format!("mean has {} entries, model outputs {}", ckpt.train_mean.len(), model.output_width()),
        ));
    }
    let bin = parameters_path(manifest_path);
    let mut values: Vec<f64> = model.parameters().concat();
    values.extend_from_slice(&ckpt.train_mean);
    write_bytes(&bin, &encode_f64_le(&values))?;
    let arch = model.architecture();
    let manifest = ModelManifest {
        layer_sizes: arch.layer_sizes.clone(),
        hidden_activation: arch.hidden_activation,
        output_activation: arch.output_activation,
        use_bias: arch.use_bias,
        mask: model.input_mask().to_vec(),
        parameters_path: bin.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        parameter_count: model.parameter_count(),
        mean_included: true,
        sensors: ckpt.sensors.as_ref().map(|s| SensorsFile {
            indices: s.indices().to_vec(),
            m: s.m(),
            method: s.method(),
            seed: s.seed(),
            coordinates: None,
        }),
        config_fingerprint: hex(ckpt.config_fingerprint),
        model_fingerprint: hex(model.fingerprint()),
    };
    write_json(manifest_path, &manifest)
}

pub fn load_checkpoint(manifest_path: &Path) -> Result<Checkpoint> {
    let man: ModelManifest = read_json(manifest_path)?;
    let bin = manifest_path
        .parent()
        .map_or_else(|| PathBuf::from(&man.parameters_path), |d| d.join(&man.parameters_path));
    let values = decode_f64_le(&read_bytes(&bin)?).map_err(|e| Error::load(&bin, e))?;
    let arch = Architecture {
        layer_sizes: man.layer_sizes.clone(),
        hidden_activation: man.hidden_activation,
        output_activation: man.output_activation,
        use_bias: man.use_bias,
    };
    arch.validate().map_err(|e| Error::load(manifest_path, e))?;
    let out = *arch.layer_sizes.last().unwrap_or(&0);
    let mean_len = if man.mean_included { out } else { 0 };
    if values.len() != man.parameter_count + mean_len {
        return Err(Error::artifact(
            &bin,
            format!("expected {} values, found {}", man.parameter_count + mean_len, values.len()),
        ));
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    let mut pos = 0;
    let mut take = |len: usize| {
        let s = values.get(pos..pos + len).map(<[f64]>::to_vec);
        pos += len;
        s
    };
    let short = || Error::artifact(&bin, "parameter file shorter than the layer sizes require");
    for w in arch.layer_sizes.windows(2) {
        let (d_in, d_out) = (w[0], w[1]);
        weights.push(Matrix::from_col_major(d_out, d_in, take(d_in * d_out).ok_or_else(short)?)?);
        biases.push(take(d_out).ok_or_else(short)?);
    }
    let train_mean = if man.mean_included {
        take(out).ok_or_else(short)?
    } else {
        vec![0.0; out]
    };
    let model = SdnModel::from_parts(arch, weights, biases, man.mask).map_err(|e| Error::load(manifest_path, e))?;
    let config_fingerprint = u64::from_str_radix(&man.config_fingerprint, 16)
        .map_err(|e| Error::artifact(manifest_path, format!("config_fingerprint: {e}")))?;
    let sensors = man
        .sensors
        .map(|f| SensorSet::new(f.indices, f.m, f.method, f.seed))
        .transpose()
        .map_err(|e| Error::load(manifest_path, e))?;
    Ok(Checkpoint {
        model,
        train_mean,
        sensors,
        config_fingerprint,
    })
}

pub fn history_csv(history: &History) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for e in &history.epochs {
        let _ = writeln!(out, "{},{:?},{:?}", e.epoch, e.train_loss, e.val_loss);
    }
    out
}

pub fn save_history(path: &Path, history: &History) -> Result<()> {
    write_bytes(path, history_csv(history).as_bytes())
}
