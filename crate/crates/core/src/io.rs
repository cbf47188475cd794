//! File formats.
//!
//! * `.bin`: headerless little-endian `f32` quadruplets `(x, y, z, intensity)`.
//! * `.label`: little-endian `u32` per point; low 16 bits are the class id,
//!   high 16 bits must be zero.
//! * `.mask`: one byte per point, `1` = kept, `0` = removed.
//! * `.json`: scenes, annotation scenes, configs.
//! * `.csv`: results tables.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::annotate::AnnotationScene;
use crate::eval::{EvalError, ResultsTable};
use crate::scene::SceneSpec;
use crate::types::{Class, LabelSet, PointCloud};

const POINT_BYTES: usize = 16;
const LABEL_BYTES: usize = 4;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{len} bytes is not a multiple of the {stride}-byte record size")]
    TruncatedFile { len: usize, stride: usize },
    #[error("non-finite value in point {0}")]
    NonFiniteCoordinate(usize),
    #[error("invalid class id in label {0}")]
    InvalidClass(usize),
    #[error("invalid mask byte at {0}")]
    InvalidMask(usize),
    #[error("schema error at {path}: {message}")]
    SchemaError { path: String, message: String },
    #[error("invalid content: {0}")]
    Invalid(String),
    #[error(transparent)]
    Table(#[from] EvalError),
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },
}

impl IoError {
    /// JSON pointer of a schema error, if this is one.
    pub fn schema_path(&self) -> Option<&str> {
        match self {
            IoError::SchemaError { path, .. } => Some(path),
            _ => None,
        }
    }
}

/// Encodes a cloud; fails on values that are not finite as `f32`.
pub fn write_cloud(cloud: &PointCloud) -> Result<Vec<u8>, IoError> {
    if cloud.coords.len() != cloud.intensity.len() {
        return Err(IoError::Invalid("coordinate and intensity counts differ".into()));
    }
    let mut out = Vec::with_capacity(cloud.len() * POINT_BYTES);
    for (i, (p, &w)) in cloud.coords.iter().zip(&cloud.intensity).enumerate() {
        for v in [p[0], p[1], p[2], w] {
            let f = v as f32;
            if !f.is_finite() {
                return Err(IoError::NonFiniteCoordinate(i));
            }
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_cloud(bytes: &[u8]) -> Result<PointCloud, IoError> {
    if bytes.len() % POINT_BYTES != 0 {
        return Err(IoError::TruncatedFile { len: bytes.len(), stride: POINT_BYTES });
    }
    let n = bytes.len() / POINT_BYTES;
    let mut coords = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(POINT_BYTES).enumerate() {
        let mut v = [0.0f64; 4];
        for (k, word) in rec.chunks_exact(4).enumerate() {
            let f = f32::from_le_bytes(word.try_into().unwrap());
            if !f.is_finite() {
                return Err(IoError::NonFiniteCoordinate(i));
            }
            v[k] = f as f64;
        }
        coords.push([v[0], v[1], v[2]]);
        intensity.push(v[3]);
    }
    Ok(PointCloud::new(coords, intensity))
}

pub fn write_labels(labels: &LabelSet) -> Vec<u8> {
    labels.labels.iter().flat_map(|c| (c.id() as u32).to_le_bytes()).collect()
}

pub fn read_labels(bytes: &[u8]) -> Result<LabelSet, IoError> {
    if bytes.len() % LABEL_BYTES != 0 {
        return Err(IoError::TruncatedFile { len: bytes.len(), stride: LABEL_BYTES });
    }
    let labels = bytes
        .chunks_exact(LABEL_BYTES)
        .enumerate()
        .map(|(i, w)| {
            let v = u32::from_le_bytes(w.try_into().unwrap());
            u16::try_from(v).ok().and_then(Class::from_id).ok_or(IoError::InvalidClass(i))
        })
        .collect::<Result<_, _>>()?;
    Ok(LabelSet::new(labels))
}

pub fn write_mask(keep: &[bool]) -> Vec<u8> {
    keep.iter().map(|&k| k as u8).collect()
}

pub fn read_mask(bytes: &[u8]) -> Result<Vec<bool>, IoError> {
    bytes
        .iter()
        .enumerate()
        .map(|(i, &b)| match b {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(IoError::InvalidMask(i)),
        })
        .collect()
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } | Segment::Enum { variant: key } => {
                out.push_str(&key.replace('~', "~0").replace('/', "~1"))
            }
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

/// Deserializes `text`, reporting failures with a JSON pointer to the
/// offending value; a missing key points at where the key belongs.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, IoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut path = json_pointer(e.path());
        let message = e.inner().to_string();
        if let Some(rest) = message.strip_prefix("missing field `") {
            if let Some(field) = rest.split('`').next() {
                path.push('/');
                path.push_str(field);
            }
        }
        IoError::SchemaError { path: if path.is_empty() { "/".into() } else { path }, message }
    })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn read_scene_json(text: &str) -> Result<SceneSpec, IoError> {
    let spec: SceneSpec = parse_json(text)?;
    spec.validate().map_err(|e| IoError::Invalid(e.to_string()))?;
    Ok(spec)
}

pub fn read_annotation_scene_json(text: &str) -> Result<AnnotationScene, IoError> {
    let scene: AnnotationScene = parse_json(text)?;
    scene.validate().map_err(|e| IoError::Invalid(e.to_string()))?;
    Ok(scene)
}

pub fn write_results_csv(table: &ResultsTable) -> String {
    table.to_csv()
}

pub fn read_results_csv(text: &str) -> Result<ResultsTable, IoError> {
    Ok(ResultsTable::from_csv(text)?)
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, IoError> {
    fs::read(path).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

/// Writes a file, creating parent directories as needed.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let err = |source| IoError::File { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(err)?;
    }
    fs::write(path, bytes).map_err(err)
}

pub fn load_cloud(path: &Path) -> Result<PointCloud, IoError> {
    read_cloud(&read_file(path)?)
}

pub fn load_labels(path: &Path) -> Result<LabelSet, IoError> {
    read_labels(&read_file(path)?)
}
