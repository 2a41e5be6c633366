//! Reader for the IDX binary format (big-endian header, `u8` payload).

use std::fs;
use std::path::Path;

use super::{LabeledDataset, Sample};
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn format_err(file: &str, offset: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        file: file.to_string(),
        offset,
        reason: reason.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize, file: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_err(file, offset, "truncated header"))
}

/// Parse in-memory IDX image and label buffers. Returns the dataset and the
/// `(rows, cols)` image shape. Pixels are scaled to `[0, 1]`.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<(LabeledDataset, (usize, usize))> {
    const IMG: &str = "images";
    const LBL: &str = "labels";
    let magic = read_u32(images, 0, IMG)?;
    if magic != IMAGES_MAGIC {
        return Err(format_err(IMG, 0, format!("bad magic {magic:#010x}")));
    }
    let n = read_u32(images, 4, IMG)? as usize;
    let rows = read_u32(images, 8, IMG)? as usize;
    let cols = read_u32(images, 12, IMG)? as usize;

    let magic = read_u32(labels, 0, LBL)?;
    if magic != LABELS_MAGIC {
        return Err(format_err(LBL, 0, format!("bad magic {magic:#010x}")));
    }
    let n_labels = read_u32(labels, 4, LBL)? as usize;
    if n_labels != n {
        return Err(format_err(
            LBL,
            4,
            format!("label count {n_labels} does not match image count {n}"),
        ));
    }

    let pixels = rows * cols;
    let needed = 16 + n * pixels;
    if images.len() < needed {
        return Err(format_err(
            IMG,
            images.len(),
            format!("truncated payload: expected {needed} bytes"),
        ));
    }
    if labels.len() < 8 + n {
        return Err(format_err(
            LBL,
            labels.len(),
            format!("truncated payload: expected {} bytes", 8 + n),
        ));
    }

    let label_bytes = &labels[8..8 + n];
    let num_classes = label_bytes.iter().map(|&l| l as usize + 1).max().unwrap_or(0).max(2);
    let samples = images[16..needed]
        .chunks_exact(pixels.max(1))
        .take(n)
        .zip(label_bytes)
        .enumerate()
        .map(|(i, (px, &label))| Sample {
            id: i as u64,
            features: px.iter().map(|&b| b as f64 / 255.0).collect(),
            label: label as usize,
        })
        .collect();
    Ok((LabeledDataset::with_dim(samples, num_classes, pixels)?, (rows, cols)))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_idx_with_shape(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<(LabeledDataset, (usize, usize))> {
    let images = read(images_path.as_ref())?;
    let labels = read(labels_path.as_ref())?;
    parse_idx(&images, &labels).map_err(|e| match e {
        Error::Format { file, offset, reason } => Error::Format {
            file: if file == "images" {
                images_path.as_ref().display().to_string()
            } else {
                labels_path.as_ref().display().to_string()
            },
            offset,
            reason,
        },
        other => other,
    })
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    load_idx_with_shape(images_path, labels_path).map(|(d, _)| d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(n: u32, rows: u32, cols: u32, payload: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for w in [IMAGES_MAGIC, n, rows, cols] {
            v.extend_from_slice(&w.to_be_bytes());
        }
        v.extend_from_slice(payload);
        v
    }

    fn labels(labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        v.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        v.extend_from_slice(labels);
        v
    }

    #[test]
    fn two_image_fixture() {
        let img = images(2, 2, 2, &[0, 255, 51, 102, 255, 0, 0, 0]);
        let (d, shape) = parse_idx(&img, &labels(&[3, 1])).unwrap();
        assert_eq!(shape, (2, 2));
        assert_eq!(d.len(), 2);
        assert_eq!(d.feature_dim(), 4);
        assert_eq!(d.num_classes(), 4);
        assert_eq!(d.samples()[0].features, vec![0.0, 1.0, 0.2, 0.4]);
        assert_eq!(d.samples()[1].label, 1);
    }

    #[test]
    fn truncated_images_rejected() {
        let img = images(2, 2, 2, &[0, 1, 2]);
        assert!(matches!(
            parse_idx(&img, &labels(&[0, 1])),
            Err(Error::Format { offset: 19, .. })
        ));
        assert!(matches!(parse_idx(&img[..10], &labels(&[0, 1])), Err(Error::Format { .. })));
    }

    #[test]
    fn count_mismatch_rejected() {
        let img = images(2, 1, 1, &[0, 1]);
        assert!(matches!(
            parse_idx(&img, &labels(&[0])),
            Err(Error::Format { offset: 4, .. })
        ));
    }

    #[test]
    fn bad_magic_rejected() {
        let mut img = images(1, 1, 1, &[0]);
        img[3] = 0x02;
        assert!(matches!(parse_idx(&img, &labels(&[0])), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_idx("/nonexistent/a", "/nonexistent/b"), Err(Error::Io { .. })));
    }
}
