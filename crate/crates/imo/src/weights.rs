//! TCN weight files.
//!
//! ```json
//! {"format_version": 1,
//!  "meta": {"channels": 6, "window": 50, "kernel": 3, "dilations": [1, 2], "hidden_channels": 64},
//!  "norm": {"mean": [...], "std": [...]},
//!  "tensors": {"block0.conv1.weight": {"shape": [64, 6, 3], "data": [...]}}}
//! ```
//!
//! Python's `json` module writes non-finite floats as bare `NaN` and
//! `Infinity`. Those are accepted by the reader so that the engine can reject
//! them with the name of the tensor that holds them.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use imo_core::tcn::{Normalization, TcnMeta, TcnModel, Tensor, WEIGHT_FORMAT_VERSION};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum WeightError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: malformed weight file: {reason}", path.display())]
    Parse { path: PathBuf, reason: String },
    #[error("{}: format_version {found}, this build reads {WEIGHT_FORMAT_VERSION}", path.display())]
    Version { path: PathBuf, found: u32 },
    #[error("{}: {source}", path.display())]
    Model {
        path: PathBuf,
        source: imo_core::Error,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaDoc {
    channels: usize,
    window: usize,
    kernel: usize,
    dilations: Vec<usize>,
    hidden_channels: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Number {
    Finite(f64),
    Named(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NormDoc {
    mean: Vec<Number>,
    std: Vec<Number>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorDoc {
    shape: Vec<usize>,
    data: Vec<Number>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightDoc {
    format_version: u32,
    meta: MetaDoc,
    norm: NormDoc,
    tensors: BTreeMap<String, TensorDoc>,
}

/// Quotes bare `NaN`, `Infinity` and `-Infinity` tokens outside strings.
fn quote_non_finite(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
        } else if c == '"' {
            in_string = true;
        } else if let Some(tok) = ["-Infinity", "Infinity", "NaN"].iter().find(|t| rest.starts_with(**t)) {
            out.push('"');
            out.push_str(tok);
            out.push('"');
            rest = &rest[tok.len()..];
            continue;
        }
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out
}

fn numbers(values: Vec<Number>, path: &Path, owner: &str) -> Result<Vec<f64>, WeightError> {
    values
        .into_iter()
        .map(|n| match n {
            Number::Finite(x) => Ok(x),
            Number::Named(s) => match s.as_str() {
                "NaN" => Ok(f64::NAN),
                "Infinity" => Ok(f64::INFINITY),
                "-Infinity" => Ok(f64::NEG_INFINITY),
                _ => Err(WeightError::Parse {
                    path: path.to_path_buf(),
                    reason: format!("`{owner}` holds the string {s:?}"),
                }),
            },
        })
        .collect()
}

/// Parses a weight document. `path` is only used in error messages.
pub fn parse_weights(text: &str, path: &Path) -> Result<TcnModel, WeightError> {
    let doc: WeightDoc =
        serde_json::from_str(&quote_non_finite(text)).map_err(|e| WeightError::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    if doc.format_version != WEIGHT_FORMAT_VERSION {
        return Err(WeightError::Version {
            path: path.to_path_buf(),
            found: doc.format_version,
        });
    }
    let meta = TcnMeta {
        channels: doc.meta.channels,
        window: doc.meta.window,
        kernel: doc.meta.kernel,
        dilations: doc.meta.dilations,
        hidden_channels: doc.meta.hidden_channels,
    };
    let norm = Normalization {
        mean: numbers(doc.norm.mean, path, "norm.mean")?,
        std: numbers(doc.norm.std, path, "norm.std")?,
    };
    let mut tensors = BTreeMap::new();
    for (name, t) in doc.tensors {
        let data = numbers(t.data, path, &name)?;
        tensors.insert(name, Tensor::new(t.shape, data));
    }
    TcnModel::from_tensors(meta, norm, &tensors).map_err(|source| WeightError::Model {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_weights(path: &Path) -> Result<TcnModel, WeightError> {
    let text = fs::read_to_string(path).map_err(|source| WeightError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_weights(&text, path)
}

pub fn weights_to_json(model: &TcnModel) -> String {
    let m = model.meta();
    let finite = |v: &[f64]| v.iter().map(|x| Number::Finite(*x)).collect();
    let doc = WeightDoc {
        format_version: WEIGHT_FORMAT_VERSION,
        meta: MetaDoc {
            channels: m.channels,
            window: m.window,
            kernel: m.kernel,
            dilations: m.dilations.clone(),
            hidden_channels: m.hidden_channels,
        },
        norm: NormDoc {
            mean: finite(&model.normalization().mean),
            std: finite(&model.normalization().std),
        },
        tensors: model
            .tensors()
            .into_iter()
            .map(|(name, t)| {
                (
                    name,
                    TensorDoc {
                        shape: t.shape,
                        data: finite(&t.data),
                    },
                )
            })
            .collect(),
    };
    serde_json::to_string(&doc).expect("weight document serializes")
}

/// Writes to a temporary sibling and renames it over `path`.
pub fn save_weights(model: &TcnModel, path: &Path) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "no file name"))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(weights_to_json(model).as_bytes())?;
        f.write_all(b"\n")?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}
