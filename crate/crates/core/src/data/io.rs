//! File loading: IDX image/label pairs, CSV feature tables, and the
//! JSON dataset manifest tying files together.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::linalg::Matrix;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| CoreError::io(path.display().to_string(), e))?;
    Ok(buf)
}

fn be_u32(bytes: &[u8], pos: usize, path: &Path) -> Result<u32> {
    bytes
        .get(pos..pos + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| CoreError::Checkpoint(format!("IDX {}: truncated header", path.display())))
}

/// IDX image tensor (magic 0x00000803), pixels scaled to [0, 1];
/// returns one flattened row per image.
pub fn read_idx_images(path: &Path) -> Result<Matrix> {
    let bytes = read_file(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(CoreError::IdxMagic {
            path: path.display().to_string(),
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let need = 16 + n * rows * cols;
    if bytes.len() != need {
        return Err(CoreError::Checkpoint(format!(
            "IDX {}: expected {need} bytes, found {}",
            path.display(),
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes[16..].iter().map(|&b| b as f64 / 255.0).collect();
    Matrix::from_vec(n, rows * cols, data)
}

/// IDX label vector (magic 0x00000801).
pub fn read_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = read_file(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(CoreError::IdxMagic {
            path: path.display().to_string(),
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    if bytes.len() != 8 + n {
        return Err(CoreError::Checkpoint(format!(
            "IDX {}: expected {} bytes, found {}",
            path.display(),
            8 + n,
            bytes.len()
        )));
    }
    Ok(bytes[8..].iter().map(|&b| b as usize).collect())
}

/// Paired IDX images + labels as one dataset.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let inputs = read_idx_images(images)?;
    let labels = read_idx_labels(labels)?;
    if inputs.rows() != labels.len() {
        return Err(CoreError::InvalidArgument(format!(
            "IDX pair mismatch: {} images vs {} labels",
            inputs.rows(),
            labels.len()
        )));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(inputs, labels, None, num_classes)
}

/// CSV with header `label,f0,f1,...`; label is a non-negative integer,
/// features are doubles.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => CoreError::io(
                display.clone(),
                std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
            ),
            _ => CoreError::Csv(e),
        })?;
    let width = reader.headers()?.len();
    if width < 2 {
        return Err(CoreError::InvalidArgument(format!(
            "CSV {display}: need a label column plus at least one feature"
        )));
    }
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 1; // 1-based, header is row 0
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => CoreError::RaggedRow {
                path: display.clone(),
                row,
                expected: *expected_len as usize,
                found: *len as usize,
            },
            _ => CoreError::Csv(e),
        })?;
        let label_text = record.get(0).unwrap_or("");
        let label: usize = label_text.parse().map_err(|_| CoreError::BadNumber {
            path: display.clone(),
            row,
            col: 0,
            text: label_text.to_string(),
        })?;
        labels.push(label);
        for col in 1..width {
            let text = record.get(col).unwrap_or("");
            let value: f64 = text.parse().map_err(|_| CoreError::BadNumber {
                path: display.clone(),
                row,
                col,
                text: text.to_string(),
            })?;
            if !value.is_finite() {
                return Err(CoreError::NonFinite("csv feature"));
            }
            data.push(value);
        }
    }
    let n = labels.len();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(Matrix::from_vec(n, width - 1, data)?, labels, None, num_classes)
}

/// Write the `label,f0,f1,...` form; values use the shortest
/// round-trippable decimal representation.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["label".to_string()];
    header.extend((0..ds.dim()).map(|j| format!("f{j}")));
    writer.write_record(&header)?;
    for i in 0..ds.len() {
        let mut record = vec![ds.labels[i].to_string()];
        record.extend(ds.inputs.row(i).iter().map(|v| v.to_string()));
        writer.write_record(&record)?;
    }
    writer.flush().map_err(|e| CoreError::io(path.display().to_string(), e))?;
    Ok(())
}

/// One file entry in a dataset manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ManifestEntry {
    Csv {
        path: String,
        #[serde(default)]
        domain: Option<usize>,
    },
    Idx {
        images: String,
        labels: String,
        #[serde(default)]
        domain: Option<usize>,
    },
}

/// UTF-8 JSON manifest: label-space size plus the files (with optional
/// per-file domain ids) that make up one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub num_classes: usize,
    pub files: Vec<ManifestEntry>,
}

/// Load and concatenate every file in a manifest; relative paths are
/// resolved against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.files.is_empty() {
        return Err(CoreError::EmptyInput("manifest lists no files"));
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let any_domain = manifest.files.iter().any(|f| match f {
        ManifestEntry::Csv { domain, .. } | ManifestEntry::Idx { domain, .. } => domain.is_some(),
    });

    let mut inputs: Option<Matrix> = None;
    let mut labels = Vec::new();
    let mut domains = Vec::new();
    let mut append = |part: Dataset, domain: Option<usize>| -> Result<()> {
        if any_domain {
            let dom = domain.ok_or_else(|| {
                CoreError::InvalidArgument(
                    "manifest mixes files with and without domain ids".into(),
                )
            })?;
            domains.extend(std::iter::repeat(dom).take(part.len()));
        }
        labels.extend_from_slice(&part.labels);
        inputs = Some(match inputs.take() {
            None => part.inputs,
            Some(acc) => {
                if acc.cols() != part.inputs.cols() {
                    return Err(CoreError::ShapeMismatch {
                        op: "manifest concat",
                        left_rows: acc.rows(),
                        left_cols: acc.cols(),
                        right_rows: part.inputs.rows(),
                        right_cols: part.inputs.cols(),
                    });
                }
                let mut data = acc.data().to_vec();
                data.extend_from_slice(part.inputs.data());
                Matrix::from_vec(acc.rows() + part.inputs.rows(), acc.cols(), data)?
            }
        });
        Ok(())
    };

    for entry in &manifest.files {
        match entry {
            ManifestEntry::Csv { path, domain } => {
                append(load_csv(&base.join(path))?, *domain)?;
            }
            ManifestEntry::Idx {
                images,
                labels: label_path,
                domain,
            } => {
                append(load_idx(&base.join(images), &base.join(label_path))?, *domain)?;
            }
        }
    }
    Dataset::new(
        inputs.expect("nonempty file list"),
        labels,
        any_domain.then_some(domains),
        manifest.num_classes,
    )
}
