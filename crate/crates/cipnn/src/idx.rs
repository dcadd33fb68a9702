//! IDX files (the MNIST distribution format), plain or gzip-compressed.
//!
//! Big-endian header: magic `0x00000803` for images followed by count, rows
//! and cols, or `0x00000801` for labels followed by count; then raw bytes.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use cipnn_core::data::Dataset;
use cipnn_core::Matrix;
use flate2::read::GzDecoder;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, thiserror::Error)]
pub enum IdxError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: bad magic 0x{found:08x} at byte 0, expected 0x{expected:08x}")]
    BadMagic { path: PathBuf, found: u32, expected: u32 },
    #[error("{path}: truncated at byte {offset}, needed {needed} bytes")]
    Truncated { path: PathBuf, offset: usize, needed: usize },
    #[error("{path}: {count} images but {labels} labels")]
    CountMismatch { path: PathBuf, count: usize, labels: usize },
    #[error("{path}: label {label} at byte {offset} is not below {classes}")]
    BadLabel { path: PathBuf, label: u8, offset: usize, classes: usize },
}

/// Raw image block: `count` images of `rows x cols` bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    /// Pixels scaled to `[0, 1]`, one row per image.
    pub fn to_matrix(&self) -> Matrix {
        let data = self.pixels.iter().map(|&p| p as f64 / 255.0).collect();
        Matrix::from_vec(self.count, self.rows * self.cols, data).expect("sized")
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>, IdxError> {
    let io = |source| IdxError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut raw = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut raw)).map_err(io)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(io)?;
        return Ok(out);
    }
    Ok(raw)
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IdxError> {
        if self.bytes.len() < self.offset + n {
            return Err(IdxError::Truncated {
                path: self.path.to_path_buf(),
                offset: self.bytes.len(),
                needed: self.offset + n,
            });
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IdxError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn magic(&mut self, expected: u32) -> Result<(), IdxError> {
        let found = self.u32()?;
        if found != expected {
            return Err(IdxError::BadMagic {
                path: self.path.to_path_buf(),
                found,
                expected,
            });
        }
        Ok(())
    }
}

pub fn parse_images(path: &Path, bytes: &[u8]) -> Result<IdxImages, IdxError> {
    let mut c = Cursor { path, bytes, offset: 0 };
    c.magic(IMAGE_MAGIC)?;
    let count = c.u32()? as usize;
    let rows = c.u32()? as usize;
    let cols = c.u32()? as usize;
    let pixels = c.take(count * rows * cols)?.to_vec();
    Ok(IdxImages { count, rows, cols, pixels })
}

pub fn parse_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    let mut c = Cursor { path, bytes, offset: 0 };
    c.magic(LABEL_MAGIC)?;
    let count = c.u32()? as usize;
    Ok(c.take(count)?.to_vec())
}

pub fn read_idx_images(path: &Path) -> Result<IdxImages, IdxError> {
    parse_images(path, &read_all(path)?)
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>, IdxError> {
    parse_labels(path, &read_all(path)?)
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGE_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IdxError> {
    File::create(path).and_then(|mut f| f.write_all(bytes)).map_err(|source| IdxError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_idx_images(path: &Path, images: &IdxImages) -> Result<(), IdxError> {
    write_bytes(path, &encode_images(images))
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<(), IdxError> {
    write_bytes(path, &encode_labels(labels))
}

/// Loads an image/label file pair as a [`Dataset`] with `classes` labels.
pub fn load_pair(images: &Path, labels: &Path, classes: usize) -> Result<Dataset, IdxError> {
    let img = read_idx_images(images)?;
    let lab = read_idx_labels(labels)?;
    if img.count != lab.len() {
        return Err(IdxError::CountMismatch {
            path: labels.to_path_buf(),
            count: img.count,
            labels: lab.len(),
        });
    }
    if let Some((i, &l)) = lab.iter().enumerate().find(|(_, &l)| l as usize >= classes) {
        return Err(IdxError::BadLabel {
            path: labels.to_path_buf(),
            label: l,
            offset: 8 + i,
            classes,
        });
    }
    let ds = Dataset::new(img.to_matrix(), lab.iter().map(|&l| l as usize).collect(), classes)
        .and_then(|d| d.with_image_shape(img.cols, img.rows))
        .expect("validated labels and pixel range");
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;

    fn fixture() -> IdxImages {
        IdxImages {
            count: 2,
            rows: 2,
            cols: 3,
            pixels: vec![0, 1, 2, 128, 254, 255, 9, 8, 7, 6, 5, 4],
        }
    }

    #[test]
    fn image_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img");
        write_idx_images(&p, &fixture()).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 16 + 12);
        let back = read_idx_images(&p).unwrap();
        assert_eq!(back, fixture());
        let m = back.to_matrix();
        assert_eq!(m.shape(), (2, 6));
        assert_eq!(m.get(0, 5), 1.0);
        assert_eq!(m.get(0, 3), 128.0 / 255.0);
    }

    #[test]
    fn label_round_trip_and_gzip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lab");
        write_idx_labels(&p, &[3, 1, 4]).unwrap();
        assert_eq!(read_idx_labels(&p).unwrap(), vec![3, 1, 4]);

        let gz = dir.path().join("img.gz");
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&encode_images(&fixture())).unwrap();
        std::fs::write(&gz, enc.finish().unwrap()).unwrap();
        assert_eq!(read_idx_images(&gz).unwrap(), fixture());
    }

    #[test]
    fn wrong_magic_and_truncation() {
        let p = Path::new("x");
        let labels = encode_labels(&[1, 2]);
        assert!(matches!(parse_images(p, &labels), Err(IdxError::BadMagic { found: LABEL_MAGIC, .. })));
        let mut img = encode_images(&fixture());
        img.truncate(20);
        match parse_images(p, &img) {
            Err(IdxError::Truncated { offset, needed, .. }) => assert_eq!((offset, needed), (20, 28)),
            other => panic!("{other:?}"),
        }
        match parse_labels(p, &labels[..9]) {
            Err(IdxError::Truncated { offset, .. }) => assert_eq!(offset, 9),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_labels(p, &labels[..3]), Err(IdxError::Truncated { offset: 3, .. })));
    }

    #[test]
    fn pair_loading_checks_counts_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let (i, l) = (dir.path().join("i"), dir.path().join("l"));
        write_idx_images(&i, &fixture()).unwrap();
        write_idx_labels(&l, &[1, 0]).unwrap();
        let ds = load_pair(&i, &l, 2).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.image_shape(), Some((3, 2)));
        assert!(matches!(load_pair(&i, &l, 1), Err(IdxError::BadLabel { offset: 8, .. })));
        write_idx_labels(&l, &[1]).unwrap();
        assert!(matches!(load_pair(&i, &l, 2), Err(IdxError::CountMismatch { .. })));
    }
}
