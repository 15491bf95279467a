//! Reader for the IDX files MNIST and MNIST-C ship in.
//!
//! Big-endian header: magic `0x00000803` followed by image count, rows and
//! columns for images; magic `0x00000801` followed by the count for labels.
//! Payloads are one unsigned byte per pixel or label.

use std::path::Path;

use ndarray::Array2;

use crate::dataset::{LabeledDataset, Provenance};
use crate::error::{FlareError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| FlareError::Parse {
            offset,
            message: format!("truncated before {what}"),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = be_u32(bytes, 0, "magic number")?;
    if magic != expected {
        return Err(FlareError::Parse {
            offset: 0,
            message: format!("magic {magic:#010x}, expected {expected:#010x}"),
        });
    }
    Ok(())
}

/// Images as an `n x (rows * cols)` matrix scaled to `[0, 1]`.
pub fn parse_images(bytes: &[u8]) -> Result<Array2<f64>> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let n = be_u32(bytes, 4, "image count")? as usize;
    let rows = be_u32(bytes, 8, "row count")? as usize;
    let cols = be_u32(bytes, 12, "column count")? as usize;
    let dim = rows * cols;
    let payload = &bytes[16..];
    let expected = n.saturating_mul(dim);
    if payload.len() != expected {
        return Err(FlareError::Parse {
            offset: 16 + payload.len().min(expected),
            message: format!("expected {expected} pixel bytes, found {}", payload.len()),
        });
    }
    Ok(Array2::from_shape_vec((n, dim), payload.iter().map(|&p| p as f64 / 255.0).collect())
        .expect("length checked"))
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let n = be_u32(bytes, 4, "label count")? as usize;
    let payload = &bytes[8..];
    if payload.len() != n {
        return Err(FlareError::Parse {
            offset: 8 + payload.len().min(n),
            message: format!("expected {n} label bytes, found {}", payload.len()),
        });
    }
    Ok(payload.iter().map(|&l| l as usize).collect())
}

pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<LabeledDataset> {
    let x = parse_images(images)?;
    let y = parse_labels(labels)?;
    if x.nrows() != y.len() {
        return Err(FlareError::Parse {
            offset: 4,
            message: format!("{} images but {} labels", x.nrows(), y.len()),
        });
    }
    let classes = y.iter().copied().max().map_or(0, |m| m + 1);
    LabeledDataset::new(x, y, classes, Provenance::Clean)
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let images = std::fs::read(images_path).map_err(|e| FlareError::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| FlareError::io(labels_path, e))?;
    parse_idx(&images, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let mut images = Vec::new();
        images.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&4u32.to_be_bytes());
        images.extend_from_slice(&4u32.to_be_bytes());
        images.extend((0..32u8).map(|i| if i == 0 { 255 } else { i }));
        let mut labels = Vec::new();
        labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        labels.extend_from_slice(&2u32.to_be_bytes());
        labels.extend_from_slice(&[7, 3]);
        (images, labels)
    }

    #[test]
    fn parses_handcrafted_fixture() {
        let (images, labels) = fixture();
        let d = parse_idx(&images, &labels).unwrap();
        assert_eq!((d.len(), d.dim()), (2, 16));
        assert_eq!(d.labels(), &[7, 3]);
        assert_eq!(d.features()[[0, 0]], 1.0);
        assert_eq!(d.features()[[1, 15]], 31.0 / 255.0);
    }

    #[test]
    fn truncation_and_bad_magic_are_errors() {
        let (images, labels) = fixture();
        let err = parse_idx(&images[..20], &labels).unwrap_err();
        assert!(matches!(err, FlareError::Parse { offset: 20, .. }), "{err}");
        assert!(matches!(parse_idx(&images[..6], &labels), Err(FlareError::Parse { offset: 4, .. })));
        assert!(matches!(parse_idx(&labels, &labels), Err(FlareError::Parse { offset: 0, .. })));
        let mut short = labels.clone();
        short.pop();
        assert!(parse_idx(&images, &short).is_err());
    }

    #[test]
    fn loads_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = fixture();
        let ip = dir.path().join("images.idx3-ubyte");
        let lp = dir.path().join("labels.idx1-ubyte");
        std::fs::write(&ip, images).unwrap();
        std::fs::write(&lp, labels).unwrap();
        assert_eq!(load_idx(&ip, &lp).unwrap().len(), 2);
        assert!(matches!(load_idx(&dir.path().join("missing"), &lp), Err(FlareError::Io { .. })));
    }
}
