//! The IDX container used by MNIST: big-endian headers, `u8` payloads,
//! optionally gzip-compressed.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};

use super::RawDataset;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| format_error(path, 0, format!("gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn format_error(path: &Path, offset: u64, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset,
        reason: reason.into(),
    }
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| format_error(self.path, self.pos as u64, format!("truncated while reading {what}")))?;
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("four bytes")))
    }

    fn payload(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let have = self.bytes.len() - self.pos;
        if have < len {
            return Err(format_error(
                self.path,
                self.bytes.len() as u64,
                format!(
                    "truncated {what}: expected {len} bytes after offset {}, found {have}",
                    self.pos
                ),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }
}

fn expect_magic(cur: &mut Cursor<'_>, expected: u32) -> Result<()> {
    let magic = cur.u32("magic number")?;
    if magic != expected {
        return Err(format_error(
            cur.path,
            0,
            format!("bad magic 0x{magic:08x}, expected 0x{expected:08x}"),
        ));
    }
    Ok(())
}

/// Loads an image/label file pair. Pixels are scaled to `[0, 1]` by `/255`;
/// `K` is one more than the largest label.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<RawDataset> {
    let img_bytes = read_bytes(images_path)?;
    let mut img = Cursor {
        path: images_path,
        bytes: &img_bytes,
        pos: 0,
    };
    expect_magic(&mut img, IMAGE_MAGIC)?;
    let n = img.u32("image count")? as usize;
    let rows = img.u32("row count")? as usize;
    let cols = img.u32("column count")? as usize;
    let j = rows * cols;
    if j == 0 {
        return Err(format_error(images_path, 8, "images have zero pixels"));
    }
    let total = n
        .checked_mul(j)
        .ok_or_else(|| format_error(images_path, 4, "image dimensions overflow"))?;
    let pixels = img.payload(total, "pixel data")?;

    let lab_bytes = read_bytes(labels_path)?;
    let mut lab = Cursor {
        path: labels_path,
        bytes: &lab_bytes,
        pos: 0,
    };
    expect_magic(&mut lab, LABEL_MAGIC)?;
    let n_labels = lab.u32("label count")? as usize;
    if n_labels != n {
        return Err(format_error(
            labels_path,
            4,
            format!("label count {n_labels} does not match image count {n}"),
        ));
    }
    let labels: Vec<usize> = lab.payload(n, "label data")?.iter().map(|&b| b as usize).collect();

    let features = pixels
        .chunks_exact(j)
        .map(|c| c.iter().map(|&b| b as f64 / 255.0).collect())
        .collect();
    let k = labels.iter().max().map_or(1, |m| m + 1);
    let raw = RawDataset::new(features, labels, k)?;
    log::info!(
        "loaded {} samples of {}x{} from {}",
        raw.len(),
        rows,
        cols,
        images_path.display()
    );
    Ok(raw)
}

/// Writes `raw` as an IDX pair with `rows x cols` images, gzip-compressed
/// when `gzip` is set. Every feature must be an exact multiple of `1/255`.
pub fn write_idx(
    raw: &RawDataset,
    rows: usize,
    cols: usize,
    images_path: &Path,
    labels_path: &Path,
    gzip: bool,
) -> Result<()> {
    if rows * cols != raw.num_features() {
        return Err(Error::usage(format!(
            "{rows}x{cols} images cannot hold {} features",
            raw.num_features()
        )));
    }
    let n = u32::try_from(raw.len()).map_err(|_| Error::usage("too many samples for IDX"))?;
    let mut img = Vec::with_capacity(16 + raw.len() * rows * cols);
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&n.to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    for x in raw.features() {
        for &v in x {
            let b = (v * 255.0).round();
            if !(0.0..=255.0).contains(&b) || b / 255.0 != v {
                return Err(Error::usage(format!("feature {v} is not a byte intensity")));
            }
            img.push(b as u8);
        }
    }
    let mut lab = Vec::with_capacity(8 + raw.len());
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&n.to_be_bytes());
    for &c in raw.labels() {
        lab.push(u8::try_from(c).map_err(|_| Error::usage(format!("label {c} does not fit a byte")))?);
    }
    write_maybe_gz(images_path, &img, gzip)?;
    write_maybe_gz(labels_path, &lab, gzip)
}

fn write_maybe_gz(path: &Path, bytes: &[u8], gzip: bool) -> Result<()> {
    if gzip {
        let mut enc = GzEncoder::new(fs::File::create(path)?, Compression::default());
        enc.write_all(bytes)?;
        enc.finish()?;
    } else {
        fs::write(path, bytes)?;
    }
    Ok(())
}
