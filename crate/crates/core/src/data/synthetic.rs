//! Small generated datasets for tests, examples and the writer fixture.
//!
//! Features are byte intensities (`m / 255`) so every generated set can be
//! written to IDX unchanged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::{RawDataset, WriterDataset};

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

fn class_centers(rng: &mut ChaCha12Rng, features: usize, classes: usize) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|_| {
            (0..features)
                .map(|_| {
                    if rng.random_bool(0.3) {
                        rng.random_range(0.5..1.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

fn draw(rng: &mut ChaCha12Rng, center: &[f64], noise: &Normal<f64>) -> Vec<f64> {
    center.iter().map(|&c| quantize(c + noise.sample(rng))).collect()
}

/// `n` samples around `classes` random sparse centers with Gaussian spread
/// `spread`; labels cycle through the classes.
pub fn synthetic_blobs(n: usize, features: usize, classes: usize, spread: f64, seed: u64) -> Result<RawDataset> {
    if classes == 0 || features == 0 {
        return Err(Error::usage("need at least one class and one feature"));
    }
    let noise = Normal::new(0.0, spread).map_err(|e| Error::usage(format!("spread {spread}: {e}")))?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let centers = class_centers(&mut rng, features, classes);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        x.push(draw(&mut rng, &centers[c], &noise));
        y.push(c);
    }
    RawDataset::new(x, y, classes)
}

/// Writer-keyed data with skewed class mixes: writer `w` draws its dominant
/// class `w mod K` with probability `skew` and a uniform class otherwise.
/// Writer sizes cycle through `sizes`.
pub fn synthetic_writers(
    sizes: &[usize],
    writers: usize,
    features: usize,
    classes: usize,
    skew: f64,
    seed: u64,
) -> Result<Vec<WriterDataset>> {
    if sizes.is_empty() || !(0.0..=1.0).contains(&skew) {
        return Err(Error::usage("need writer sizes and skew in [0, 1]"));
    }
    let noise = Normal::new(0.0, 0.15).expect("fixed spread");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let centers = class_centers(&mut rng, features, classes);
    (0..writers)
        .map(|w| {
            let n = sizes[w % sizes.len()];
            let mut x = Vec::with_capacity(n);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let c = if rng.random_bool(skew) {
                    w % classes
                } else {
                    rng.random_range(0..classes)
                };
                x.push(draw(&mut rng, &centers[c], &noise));
                y.push(c);
            }
            Ok(WriterDataset {
                writer: format!("w{w:04}"),
                data: RawDataset::new(x, y, classes)?,
            })
        })
        .collect()
}
