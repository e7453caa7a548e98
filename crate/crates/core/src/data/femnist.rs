//! Writer-keyed JSON, as produced by the LEAF preprocessing scripts:
//!
//! ```json
//! {"users": ["f0000_14", ...],
//!  "user_data": {"f0000_14": {"x": [[0.0, 1.0, ...], ...], "y": [3, ...]}}}
//! ```
//!
//! A bare map from writer id to `{"x", "y"}` is accepted as well.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

use super::RawDataset;

#[derive(Debug, Deserialize)]
struct WriterData {
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Layout {
    Leaf { user_data: BTreeMap<String, WriterData> },
    Flat(BTreeMap<String, WriterData>),
}

/// One writer's samples.
#[derive(Debug, Clone, PartialEq)]
pub struct WriterDataset {
    pub writer: String,
    pub data: RawDataset,
}

fn format_error(path: &Path, reason: String) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: 0,
        reason,
    }
}

/// Loads every writer in `path`, sorted by writer id. All writers share `K`,
/// one more than the largest label in the file.
pub fn load_femnist_json(path: &Path) -> Result<Vec<WriterDataset>> {
    let text = fs::read_to_string(path)?;
    let layout: Layout = serde_json::from_str(&text)
        .map_err(|e| format_error(path, format!("line {} column {}: {e}", e.line(), e.column())))?;
    let writers = match layout {
        Layout::Leaf { user_data } => user_data,
        Layout::Flat(m) => m,
    };
    let k = writers
        .values()
        .flat_map(|w| w.y.iter().copied())
        .max()
        .map_or(1, |m| m + 1);
    let mut width = None;
    let mut out = Vec::with_capacity(writers.len());
    for (writer, w) in writers {
        if w.x.len() != w.y.len() {
            return Err(format_error(
                path,
                format!("writer {writer}: {} feature rows but {} labels", w.x.len(), w.y.len()),
            ));
        }
        for (i, row) in w.x.iter().enumerate() {
            let expected = *width.get_or_insert(row.len());
            if row.len() != expected {
                return Err(format_error(
                    path,
                    format!(
                        "writer {writer}, sample {i}: {} features, expected {expected}",
                        row.len()
                    ),
                ));
            }
        }
        let data = RawDataset::new(w.x, w.y, k).map_err(|e| format_error(path, format!("writer {writer}: {e}")))?;
        out.push(WriterDataset { writer, data });
    }
    Ok(out)
}
