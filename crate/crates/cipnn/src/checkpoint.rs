//! Checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"CIPNNCK1"
//! u32 section count
//! per section: u32 name length, name (UTF-8), u8 kind, u64 payload length, payload
//!   kind 0 (matrix): u64 rows, u64 cols, rows*cols f64 in row-major order
//!   kind 1 (text):   UTF-8 bytes
//! ```
//!
//! A model checkpoint holds a `meta` text section (JSON with the training
//! config, input dimension, class count and image shape), `param.<i>` for
//! every weight in store order, and `labels.{targets,mu,sigma}` plus
//! optionally `pixels.{targets,mu,sigma}` for the record windows.

use std::collections::BTreeMap;
use std::path::Path;

use cipnn_core::autodiff::ParamStore;
use cipnn_core::recorder::{RecordSet, TargetKind};
use cipnn_core::training::{TrainConfig, TrainedModel};
use cipnn_core::Matrix;
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 8] = b"CIPNNCK1";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },
    #[error("checkpoint is missing section `{0}`")]
    Missing(String),
    #[error("section `{0}` has the wrong kind")]
    WrongKind(String),
    #[error("bad metadata: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("checkpoint does not describe a usable model: {0}")]
    Model(#[from] cipnn_core::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Section {
    Matrix(Matrix),
    Text(String),
}

/// Ordered named sections.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub sections: BTreeMap<String, Section>,
}

impl Container {
    pub fn insert_matrix(&mut self, name: &str, m: Matrix) {
        self.sections.insert(name.to_string(), Section::Matrix(m));
    }

    pub fn insert_text(&mut self, name: &str, s: String) {
        self.sections.insert(name.to_string(), Section::Text(s));
    }

    pub fn matrix(&self, name: &str) -> Result<&Matrix, CheckpointError> {
        match self.sections.get(name) {
            Some(Section::Matrix(m)) => Ok(m),
            Some(_) => Err(CheckpointError::WrongKind(name.into())),
            None => Err(CheckpointError::Missing(name.into())),
        }
    }

    pub fn text(&self, name: &str) -> Result<&str, CheckpointError> {
        match self.sections.get(name) {
            Some(Section::Text(s)) => Ok(s),
            Some(_) => Err(CheckpointError::WrongKind(name.into())),
            None => Err(CheckpointError::Missing(name.into())),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (name, sec) in &self.sections {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            let (kind, payload) = match sec {
                Section::Matrix(m) => {
                    let mut p = Vec::with_capacity(16 + 8 * m.len());
                    p.extend_from_slice(&(m.rows() as u64).to_le_bytes());
                    p.extend_from_slice(&(m.cols() as u64).to_le_bytes());
                    for v in m.data() {
                        p.extend_from_slice(&v.to_le_bytes());
                    }
                    (0u8, p)
                }
                Section::Text(s) => (1u8, s.as_bytes().to_vec()),
            };
            out.push(kind);
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(&payload);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(r.err(0, "bad magic"));
        }
        let count = r.u32()? as usize;
        let mut sections = BTreeMap::new();
        for _ in 0..count {
            let at = r.pos;
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| r.err(at, "section name is not UTF-8"))?
                .to_string();
            let kind_at = r.pos;
            let kind = r.take(1)?[0];
            let plen = r.u64()? as usize;
            let payload_at = r.pos;
            let payload = r.take(plen)?;
            let sec = match kind {
                0 => {
                    if plen < 16 {
                        return Err(r.err(payload_at, "matrix payload too short"));
                    }
                    let rows = u64::from_le_bytes(payload[..8].try_into().expect("8")) as usize;
                    let cols = u64::from_le_bytes(payload[8..16].try_into().expect("8")) as usize;
                    let body = &payload[16..];
                    if rows.checked_mul(cols).and_then(|n| n.checked_mul(8)) != Some(body.len()) {
                        return Err(r.err(payload_at, "matrix payload length does not match its shape"));
                    }
                    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8"))).collect();
                    Section::Matrix(Matrix::from_vec(rows, cols, data).expect("sized"))
                }
                1 => Section::Text(
                    String::from_utf8(payload.to_vec()).map_err(|_| r.err(payload_at, "text is not UTF-8"))?,
                ),
                _ => return Err(r.err(kind_at, "unknown section kind")),
            };
            if sections.insert(name, sec).is_some() {
                return Err(r.err(at, "duplicate section name"));
            }
        }
        if r.pos != bytes.len() {
            return Err(r.err(r.pos, "trailing bytes"));
        }
        Ok(Self { sections })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, offset: usize, msg: &str) -> CheckpointError {
        CheckpointError::Format {
            offset,
            msg: msg.to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| self.err(self.bytes.len(), "unexpected end of file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: TrainConfig,
    input_dim: usize,
    classes: usize,
    image_shape: Option<(usize, usize)>,
}

/// A trained model and the image shape of its inputs, if any.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: TrainedModel,
    pub image_shape: Option<(usize, usize)>,
}

fn put_records(c: &mut Container, prefix: &str, r: &RecordSet) {
    let (t, mu, s) = r.to_matrices();
    c.insert_matrix(&format!("{prefix}.targets"), t);
    c.insert_matrix(&format!("{prefix}.mu"), mu);
    c.insert_matrix(&format!("{prefix}.sigma"), s);
}

fn get_records(c: &Container, prefix: &str, kind: TargetKind) -> Result<RecordSet, CheckpointError> {
    let m = |k: &str| c.matrix(&format!("{prefix}.{k}")).cloned();
    Ok(RecordSet::from_matrices(m("targets")?, m("mu")?, m("sigma")?, kind)?)
}

impl Checkpoint {
    pub fn to_container(&self) -> Container {
        let m = &self.model;
        let mut c = Container::default();
        let meta = Meta {
            config: m.config.clone(),
            input_dim: m.input_dim,
            classes: m.classes,
            image_shape: self.image_shape,
        };
        c.insert_text("meta", serde_json::to_string_pretty(&meta).expect("serializable"));
        for (i, p) in m.store.iter().enumerate() {
            c.insert_matrix(&format!("param.{i:04}"), p.value().clone());
        }
        put_records(&mut c, "labels", &m.labels);
        if let Some(px) = &m.pixels {
            put_records(&mut c, "pixels", px);
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self, CheckpointError> {
        let meta: Meta = serde_json::from_str(c.text("meta")?)?;
        let mut store = ParamStore::new();
        for (name, sec) in c.sections.range("param.".to_string().."param/".to_string()) {
            match sec {
                Section::Matrix(m) => {
                    store.add(m.clone());
                }
                Section::Text(_) => return Err(CheckpointError::WrongKind(name.clone())),
            }
        }
        let labels = get_records(c, "labels", TargetKind::OneHot)?;
        let pixels = if c.sections.contains_key("pixels.targets") {
            Some(get_records(c, "pixels", TargetKind::Soft)?)
        } else {
            None
        };
        let model = TrainedModel::rebuild(meta.config, meta.input_dim, meta.classes, store, labels, pixels)?;
        Ok(Self {
            model,
            image_shape: meta.image_shape,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_container().encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_container(&Container::decode(&std::fs::read(path)?)?)
    }
}
