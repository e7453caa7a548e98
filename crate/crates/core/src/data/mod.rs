//! Datasets: loading, and splitting into per-agent shards.

mod femnist;
mod idx;
mod synthetic;

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::model::{AgentShard, LogisticLoss, ModelConfig, Sample};

pub use femnist::{load_femnist_json, WriterDataset};
pub use idx::{load_idx, write_idx, IMAGE_MAGIC, LABEL_MAGIC};
pub use synthetic::{synthetic_blobs, synthetic_writers};

/// Dense features with class-index labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl RawDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::usage("dataset has no samples"));
        }
        if features.len() != labels.len() {
            return Err(Error::usage(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let j = features[0].len();
        if j == 0 {
            return Err(Error::usage("samples have no features"));
        }
        if let Some((i, row)) = features.iter().enumerate().find(|(_, r)| r.len() != j) {
            return Err(Error::usage(format!(
                "sample {i} has {} features, expected {j}",
                row.len()
            )));
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::usage("non-finite feature value"));
        }
        if let Some(&c) = labels.iter().find(|&&c| c >= num_classes) {
            return Err(Error::usage(format!(
                "label {c} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `J`.
    pub fn num_features(&self) -> usize {
        self.features[0].len()
    }

    /// `K`.
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Widens `K`, e.g. so a train and a test split agree.
    pub fn with_num_classes(mut self, k: usize) -> Result<Self> {
        if k < self.num_classes && self.labels.iter().any(|&c| c >= k) {
            return Err(Error::usage(format!("cannot shrink to {k} classes")));
        }
        self.num_classes = k;
        Ok(self)
    }

    /// The first `n` samples.
    pub fn truncated(mut self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::usage("cannot keep zero samples"));
        }
        self.features.truncate(n);
        self.labels.truncate(n);
        Ok(self)
    }

    /// Appends a constant 1 feature to every sample.
    pub fn with_bias(mut self) -> Self {
        for row in &mut self.features {
            row.push(1.0);
        }
        self
    }

    /// Samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::usage(format!("sample index {i} out of range")));
            }
            features.push(self.features[i].clone());
            labels.push(self.labels[i]);
        }
        Self::new(features, labels, self.num_classes)
    }

    fn samples(&self, indices: &[usize]) -> Result<Vec<Sample>> {
        indices
            .iter()
            .map(|&i| Sample::new(self.features[i].clone(), self.labels[i], self.num_classes))
            .collect()
    }
}

/// How the training data were split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Iid,
    ByWriter,
}

impl Provenance {
    pub fn name(&self) -> &'static str {
        match self {
            Provenance::Iid => "iid",
            Provenance::ByWriter => "by_writer",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FederatedDataset {
    pub shards: Vec<Arc<AgentShard>>,
    pub test_set: RawDataset,
    /// `(J, K)`.
    pub dims: (usize, usize),
    pub provenance: Provenance,
    /// For each shard, the indices of its samples in the pooled training set
    /// (for writer splits, writers concatenated in order).
    pub assignment: Vec<Vec<usize>>,
}

impl FederatedDataset {
    pub fn num_agents(&self) -> usize {
        self.shards.len()
    }

    /// `I`.
    pub fn total_samples(&self) -> usize {
        self.shards.iter().map(|s| s.shard_size()).sum()
    }

    pub fn model_config(&self, beta: f64) -> ModelConfig {
        ModelConfig {
            beta,
            total_samples: self.total_samples(),
            num_agents: self.num_agents(),
        }
    }

    /// One logistic loss per agent.
    pub fn losses(&self, beta: f64) -> Vec<LogisticLoss> {
        let cfg = self.model_config(beta);
        self.shards
            .iter()
            .map(|s| LogisticLoss::new(Arc::clone(s), cfg))
            .collect()
    }
}

fn check_test_dims(train: (usize, usize), test: &RawDataset) -> Result<()> {
    let t = (test.num_features(), test.num_classes());
    if t != train {
        return Err(Error::DimensionMismatch {
            context: "test set",
            expected: train,
            actual: t,
        });
    }
    Ok(())
}

/// Shuffles with `seed`, then cuts into `agents` contiguous shards whose
/// sizes differ by at most one (larger shards first).
pub fn partition_iid(train: &RawDataset, test: RawDataset, agents: usize, seed: u64) -> Result<FederatedDataset> {
    let n = train.len();
    if agents == 0 || agents > n {
        return Err(Error::usage(format!("cannot split {n} samples over {agents} agents")));
    }
    let dims = (train.num_features(), train.num_classes());
    check_test_dims(dims, &test)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha12Rng::seed_from_u64(seed));
    let (base, extra) = (n / agents, n % agents);
    let mut assignment = Vec::with_capacity(agents);
    let mut start = 0;
    for p in 0..agents {
        let len = base + usize::from(p < extra);
        assignment.push(order[start..start + len].to_vec());
        start += len;
    }
    let shards = assignment
        .iter()
        .enumerate()
        .map(|(p, idx)| AgentShard::new(p, train.samples(idx)?).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    Ok(FederatedDataset {
        shards,
        test_set: test,
        dims,
        provenance: Provenance::Iid,
        assignment,
    })
}

/// One agent per writer, in the given order.
pub fn partition_by_writer(writers: &[WriterDataset], test: RawDataset) -> Result<FederatedDataset> {
    let first = writers
        .first()
        .ok_or_else(|| Error::usage("need at least one writer"))?;
    let dims = (first.data.num_features(), first.data.num_classes());
    check_test_dims(dims, &test)?;
    let mut shards = Vec::with_capacity(writers.len());
    let mut assignment = Vec::with_capacity(writers.len());
    let mut offset = 0;
    for (p, w) in writers.iter().enumerate() {
        let d = (w.data.num_features(), w.data.num_classes());
        if d != dims {
            return Err(Error::DimensionMismatch {
                context: "writer dataset",
                expected: dims,
                actual: d,
            });
        }
        let idx: Vec<usize> = (0..w.data.len()).collect();
        shards.push(Arc::new(AgentShard::new(p, w.data.samples(&idx)?)?));
        assignment.push((offset..offset + idx.len()).collect());
        offset += idx.len();
    }
    Ok(FederatedDataset {
        shards,
        test_set: test,
        dims,
        provenance: Provenance::ByWriter,
        assignment,
    })
}

/// Pools writers into one dataset, e.g. to build a held-out test set.
pub fn pool_writers(writers: &[WriterDataset]) -> Result<RawDataset> {
    let first = writers
        .first()
        .ok_or_else(|| Error::usage("need at least one writer"))?;
    let k = first.data.num_classes();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for w in writers {
        features.extend(w.data.features().iter().cloned());
        labels.extend_from_slice(w.data.labels());
    }
    RawDataset::new(features, labels, k)
}
