//! IDX image/label files (the MNIST distribution format).

use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::io::Reader;
use crate::linalg::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Decodes an image file: `n × (rows·cols)` pixels scaled by 1/255.
pub fn decode_images(bytes: &[u8]) -> Result<Matrix> {
    let mut r = Reader::new(bytes, "IDX images");
    let magic = r.u32_be()?;
    if magic != IMAGES_MAGIC {
        return Err(Error::BadMagic {
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = r.u32_be()? as usize;
    let rows = r.u32_be()? as usize;
    let cols = r.u32_be()? as usize;
    let pixels = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::TruncatedFile("IDX images: dimensions overflow".into()))?;
    let raw = r.take(pixels)?;
    let data = raw.iter().map(|&b| b as f64 / 255.0).collect();
    Matrix::new(n, rows * cols, data)
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut r = Reader::new(bytes, "IDX labels");
    let magic = r.u32_be()?;
    if magic != LABELS_MAGIC {
        return Err(Error::BadMagic {
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let n = r.u32_be()? as usize;
    Ok(r.take(n)?.iter().map(|&b| b as usize).collect())
}

/// Loads an image/label file pair. The class count is one past the largest
/// label present.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let inputs = decode_images(&read(images_path)?)?;
    let labels = decode_labels(&read(labels_path)?)?;
    if inputs.rows() != labels.len() {
        return Err(Error::CountMismatch {
            images: inputs.rows(),
            labels: labels.len(),
        });
    }
    let classes = labels.iter().max().map_or(1, |m| m + 1);
    let name = images_path
        .file_stem()
        .map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(inputs, labels, classes, name)
}

/// Encodes images in IDX form; used to build fixtures.
pub fn encode_images(images: &[Vec<u8>], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for d in [images.len(), rows, cols] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn write_pair(dir: &Path, images: &[u8], labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
        let ip = dir.join("images.idx");
        let lp = dir.join("labels.idx");
        std::fs::write(&ip, images).unwrap();
        std::fs::write(&lp, labels).unwrap();
        (ip, lp)
    }

    #[test]
    fn all_white_image() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_pair(dir.path(), &encode_images(&[vec![255; 4]], 2, 2), &encode_labels(&[3]));
        let d = load_idx(&ip, &lp).unwrap();
        assert_eq!(d.inputs(), &Matrix::from_rows(&[vec![1.0; 4]]));
        assert_eq!(d.labels(), &[3]);
    }

    #[test]
    fn scaling_by_hand() {
        let m = decode_images(&encode_images(&[vec![0, 128, 255, 0]], 2, 2)).unwrap();
        assert_eq!(m.shape(), (1, 4));
        assert_eq!(m[(0, 0)], 0.0);
        assert_abs_diff_eq!(m[(0, 1)], 0.501961, epsilon = 1e-6);
        assert_eq!(m[(0, 2)], 1.0);
        assert_eq!(m[(0, 3)], 0.0);
    }

    #[test]
    fn count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_pair(
            dir.path(),
            &encode_images(&[vec![0; 4], vec![1; 4]], 2, 2),
            &encode_labels(&[0]),
        );
        assert!(matches!(
            load_idx(&ip, &lp),
            Err(Error::CountMismatch { images: 2, labels: 1 })
        ));
    }

    #[test]
    fn bad_magic_and_truncation() {
        let labels = encode_labels(&[1, 2]);
        assert!(matches!(decode_images(&labels), Err(Error::BadMagic { .. })));
        let images = encode_images(&[vec![0; 4]], 2, 2);
        assert!(matches!(
            decode_images(&images[..images.len() - 1]),
            Err(Error::TruncatedFile(_))
        ));
        assert!(matches!(decode_labels(&labels[..6]), Err(Error::TruncatedFile(_))));
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = load_idx(Path::new("/nonexistent/imgs.idx"), Path::new("/nonexistent/l.idx")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/imgs.idx"));
    }
}
