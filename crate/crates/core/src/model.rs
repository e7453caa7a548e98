//! Multiclass logistic regression: the per-agent loss `f_p`, its gradient and
//! the per-round l1 sensitivity that calibrates the Laplace noise.
//!
//! ```text
//! h_k(w; x)  = exp(<x, w_k>) / sum_k' exp(<x, w_k'>)
//! f_p(w)     = -(1/I) sum_i sum_k y_ik ln h_k(w; x_i) + (beta/P) sum_jk w_jk^2
//! df_p/dw_jk = (1/I) sum_i x_ij (h_k(w; x_i) - y_ik) + (2 beta/P) w_jk
//! ```
//!
//! `I` is the federation-wide sample count, not the shard size, so the agent
//! losses sum to the global empirical risk.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::ParamMatrix;

/// Floor applied to probabilities before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-300;

/// One labeled example with a one-hot label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    features: Vec<f64>,
    label: Vec<f64>,
    class: usize,
}

impl Sample {
    pub fn new(features: Vec<f64>, class: usize, num_classes: usize) -> Result<Self> {
        if class >= num_classes {
            return Err(Error::usage(format!(
                "class {class} out of range for {num_classes} classes"
            )));
        }
        let mut label = vec![0.0; num_classes];
        label[class] = 1.0;
        Self::checked(features, label, class)
    }

    pub fn from_one_hot(features: Vec<f64>, label: Vec<f64>) -> Result<Self> {
        let mut class = None;
        for (k, &y) in label.iter().enumerate() {
            if y == 1.0 {
                if class.is_some() {
                    return Err(Error::usage("label has more than one active entry"));
                }
                class = Some(k);
            } else if y != 0.0 {
                return Err(Error::usage(format!("label entry {y} is not 0 or 1")));
            }
        }
        let class = class.ok_or_else(|| Error::usage("label has no active entry"))?;
        Self::checked(features, label, class)
    }

    fn checked(features: Vec<f64>, label: Vec<f64>, class: usize) -> Result<Self> {
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::usage("non-finite feature value"));
        }
        Ok(Self { features, label, class })
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn label(&self) -> &[f64] {
        &self.label
    }

    pub fn class(&self) -> usize {
        self.class
    }
}

/// One agent's local dataset.
///
/// Alongside the samples the shard keeps a compressed copy of the nonzero
/// feature entries; image features are mostly zero and every hot loop
/// iterates over that copy instead of the dense vectors.
#[derive(Debug, Clone)]
pub struct AgentShard {
    agent_id: usize,
    samples: Vec<Sample>,
    dims: (usize, usize),
    offsets: Vec<usize>,
    nz_index: Vec<usize>,
    nz_value: Vec<f64>,
}

impl AgentShard {
    pub fn new(agent_id: usize, samples: Vec<Sample>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::usage(format!("agent {agent_id} has an empty shard")))?;
        let dims = (first.features.len(), first.label.len());
        let mut offsets = Vec::with_capacity(samples.len() + 1);
        let mut nz_index = Vec::new();
        let mut nz_value = Vec::new();
        offsets.push(0);
        for s in &samples {
            if (s.features.len(), s.label.len()) != dims {
                return Err(Error::DimensionMismatch {
                    context: "shard sample",
                    expected: dims,
                    actual: (s.features.len(), s.label.len()),
                });
            }
            for (j, &x) in s.features.iter().enumerate() {
                if x != 0.0 {
                    nz_index.push(j);
                    nz_value.push(x);
                }
            }
            offsets.push(nz_index.len());
        }
        Ok(Self {
            agent_id,
            samples,
            dims,
            offsets,
            nz_index,
            nz_value,
        })
    }

    pub fn agent_id(&self) -> usize {
        self.agent_id
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// `I_p`.
    pub fn shard_size(&self) -> usize {
        self.samples.len()
    }

    /// `(J, K)`.
    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    #[inline]
    fn sparse_row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.nz_index[r.clone()], &self.nz_value[r])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// Regularization weight `beta`.
    pub beta: f64,
    /// `I`, the sum of all shard sizes.
    pub total_samples: usize,
    /// `P`.
    pub num_agents: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::usage(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.num_agents == 0 || self.total_samples == 0 {
            return Err(Error::usage("need at least one agent and one sample"));
        }
        Ok(())
    }

    /// Config matching a full set of shards.
    pub fn for_shards(beta: f64, shards: &[AgentShard]) -> Self {
        Self {
            beta,
            total_samples: shards.iter().map(AgentShard::shard_size).sum(),
            num_agents: shards.len(),
        }
    }
}

/// In-place softmax with max-logit subtraction.
pub(crate) fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut total = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    let inv = 1.0 / total;
    for v in logits.iter_mut() {
        *v *= inv;
    }
}

/// `ln h_class` from raw logits, via log-sum-exp, floored at `ln(1e-300)`.
fn log_prob(logits: &[f64], class: usize) -> f64 {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    (logits[class] - max - lse).max(LOG_FLOOR.ln())
}

/// Raw class scores `x^T w` for a dense feature vector.
pub fn logits(w: &ParamMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != w.rows() {
        return Err(Error::DimensionMismatch {
            context: "logits",
            expected: (w.rows(), w.cols()),
            actual: (x.len(), w.cols()),
        });
    }
    let k = w.cols();
    let mut out = vec![0.0; k];
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            for (o, &wv) in out.iter_mut().zip(w.row(j)) {
                *o += xj * wv;
            }
        }
    }
    Ok(out)
}

/// Class probabilities `h(w; x)`.
pub fn softmax_probs(w: &ParamMatrix, x: &[f64]) -> Result<Vec<f64>> {
    let mut out = logits(w, x)?;
    softmax_in_place(&mut out);
    Ok(out)
}

fn check_dims(w: &ParamMatrix, shard: &AgentShard, context: &'static str) -> Result<()> {
    w.ensure_shape(context, shard.dims())
}

/// `f_p(w)`.
pub fn local_objective(w: &ParamMatrix, shard: &AgentShard, cfg: &ModelConfig) -> Result<f64> {
    check_dims(w, shard, "local_objective")?;
    Ok(objective_unchecked(w, shard, cfg))
}

/// `grad f_p(w)`.
pub fn local_gradient(w: &ParamMatrix, shard: &AgentShard, cfg: &ModelConfig) -> Result<ParamMatrix> {
    check_dims(w, shard, "local_gradient")?;
    Ok(gradient_pass(w, shard, cfg, false).0)
}

/// Sensitivity `max_i sum_jk |(1/I) x_ij (h_k - y_ik)|` of the local gradient
/// to a single sample.
pub fn sensitivity(z: &ParamMatrix, shard: &AgentShard, cfg: &ModelConfig) -> Result<f64> {
    check_dims(z, shard, "sensitivity")?;
    if shard.shard_size() == 0 {
        return Err(Error::usage("sensitivity of an empty shard"));
    }
    let k = z.cols();
    let inv_i = 1.0 / cfg.total_samples as f64;
    let mut probs = vec![0.0; k];
    let mut worst: f64 = 0.0;
    for i in 0..shard.shard_size() {
        let (idx, val) = shard.sparse_row(i);
        sparse_probs(z, idx, val, &mut probs);
        let class = shard.samples[i].class;
        worst = worst.max(sample_contribution_l1(val, &mut probs, class, inv_i));
    }
    Ok(worst)
}

fn objective_unchecked(w: &ParamMatrix, shard: &AgentShard, cfg: &ModelConfig) -> f64 {
    let mut scores = vec![0.0; w.cols()];
    let mut loss = 0.0;
    for (i, s) in shard.samples.iter().enumerate() {
        let (idx, val) = shard.sparse_row(i);
        sparse_logits(w, idx, val, &mut scores);
        loss -= log_prob(&scores, s.class);
    }
    loss / cfg.total_samples as f64 + regularizer(w, cfg)
}

fn regularizer(w: &ParamMatrix, cfg: &ModelConfig) -> f64 {
    cfg.beta / cfg.num_agents as f64 * w.norm_sq()
}

#[inline]
fn sparse_logits(w: &ParamMatrix, idx: &[usize], val: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (&j, &x) in idx.iter().zip(val) {
        for (o, &wv) in out.iter_mut().zip(w.row(j)) {
            *o += x * wv;
        }
    }
}

#[inline]
fn sparse_probs(w: &ParamMatrix, idx: &[usize], val: &[f64], out: &mut [f64]) {
    sparse_logits(w, idx, val, out);
    softmax_in_place(out);
}

/// Turns `probs` into the residual `h - y` and returns the sample's l1
/// gradient contribution, summed j-major then k.
#[inline]
fn sample_contribution_l1(val: &[f64], probs: &mut [f64], class: usize, inv_i: f64) -> f64 {
    probs[class] -= 1.0;
    let mut total = 0.0;
    for &x in val {
        for &r in probs.iter() {
            total += (inv_i * (x * r)).abs();
        }
    }
    total
}

/// One pass over the shard producing the gradient and, on request, the
/// sensitivity at the same point.
fn gradient_pass(w: &ParamMatrix, shard: &AgentShard, cfg: &ModelConfig, with_sensitivity: bool) -> (ParamMatrix, f64) {
    let (rows, k) = w.shape();
    let inv_i = 1.0 / cfg.total_samples as f64;
    let mut acc = ParamMatrix::zeros(rows, k);
    let mut probs = vec![0.0; k];
    let mut worst: f64 = 0.0;
    {
        let acc = acc.as_mut_slice();
        for i in 0..shard.shard_size() {
            let (idx, val) = shard.sparse_row(i);
            sparse_probs(w, idx, val, &mut probs);
            let class = shard.samples[i].class;
            if with_sensitivity {
                worst = worst.max(sample_contribution_l1(val, &mut probs, class, inv_i));
            } else {
                probs[class] -= 1.0;
            }
            for (&j, &x) in idx.iter().zip(val) {
                for (a, &r) in acc[j * k..(j + 1) * k].iter_mut().zip(&probs) {
                    *a += x * r;
                }
            }
        }
    }
    let reg = 2.0 * cfg.beta / cfg.num_agents as f64;
    let grad = acc.zip_map(w, |a, wv| inv_i * a + reg * wv);
    (grad, worst)
}

/// A local objective the optimizer can linearize: value, (sub)gradient and the
/// l1 sensitivity of the gradient to one sample.
pub trait LocalLoss: Send + Sync {
    /// `(J, K)`.
    fn dims(&self) -> (usize, usize);

    fn objective(&self, z: &ParamMatrix) -> f64;

    fn gradient(&self, z: &ParamMatrix) -> ParamMatrix;

    /// Gradient and sensitivity at `z`, computed together.
    fn gradient_with_sensitivity(&self, z: &ParamMatrix) -> (ParamMatrix, f64);
}

/// `f_p` for one agent of a logistic regression federation.
#[derive(Debug, Clone)]
pub struct LogisticLoss {
    shard: Arc<AgentShard>,
    cfg: ModelConfig,
}

impl LogisticLoss {
    pub fn new(shard: Arc<AgentShard>, cfg: ModelConfig) -> Self {
        Self { shard, cfg }
    }

    pub fn shard(&self) -> &AgentShard {
        &self.shard
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }
}

impl LocalLoss for LogisticLoss {
    fn dims(&self) -> (usize, usize) {
        self.shard.dims()
    }

    fn objective(&self, z: &ParamMatrix) -> f64 {
        objective_unchecked(z, &self.shard, &self.cfg)
    }

    fn gradient(&self, z: &ParamMatrix) -> ParamMatrix {
        gradient_pass(z, &self.shard, &self.cfg, false).0
    }

    fn gradient_with_sensitivity(&self, z: &ParamMatrix) -> (ParamMatrix, f64) {
        gradient_pass(z, &self.shard, &self.cfg, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_sample_shard(x: Vec<f64>, class: usize, k: usize) -> AgentShard {
        AgentShard::new(0, vec![Sample::new(x, class, k).unwrap()]).unwrap()
    }

    fn cfg(beta: f64, total: usize, agents: usize) -> ModelConfig {
        ModelConfig {
            beta,
            total_samples: total,
            num_agents: agents,
        }
    }

    #[test]
    fn zero_weights_give_uniform_probs() {
        let w = ParamMatrix::zeros(3, 4);
        let p = softmax_probs(&w, &[0.3, -1.0, 2.0]).unwrap();
        for v in p {
            assert_eq!(v, 0.25);
        }
    }

    #[test]
    fn softmax_two_class_analytic() {
        let w = ParamMatrix::from_rows(&[vec![0.0, 3f64.ln()]]).unwrap();
        let p = softmax_probs(&w, &[1.0]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15);
        assert!((p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_large_logit_does_not_overflow() {
        let w = ParamMatrix::from_rows(&[vec![1000.0, 0.0]]).unwrap();
        let p = softmax_probs(&w, &[1.0]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        // shifted-logit oracle: p1 = 1 / (1 + e^{-1000}), p2 = e^{-1000} / (1 + e^{-1000})
        let tail = (-1000f64).exp();
        assert!((p[0] - 1.0 / (1.0 + tail)).abs() < 1e-12);
        assert!((p[1] - tail / (1.0 + tail)).abs() < 1e-12);
    }

    #[test]
    fn softmax_dimension_mismatch() {
        let w = ParamMatrix::zeros(2, 3);
        assert!(matches!(
            softmax_probs(&w, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn objective_at_zero_is_ln_k() {
        let shard = one_sample_shard(vec![0.7, -0.2], 1, 2);
        let w = ParamMatrix::zeros(2, 2);
        let f = local_objective(&w, &shard, &cfg(0.0, 1, 1)).unwrap();
        assert!((f - 2f64.ln()).abs() < 1e-15);
        // the regularizer vanishes at zero for any beta
        let f_reg = local_objective(&w, &shard, &cfg(3.5, 1, 1)).unwrap();
        assert_eq!(f, f_reg);
    }

    #[test]
    fn gradient_hand_example() {
        let shard = one_sample_shard(vec![2.0], 0, 2);
        let w = ParamMatrix::zeros(1, 2);
        let g = local_gradient(&w, &shard, &cfg(0.0, 1, 1)).unwrap();
        assert_eq!(g.as_slice(), &[-1.0, 1.0]);
        let g_reg = local_gradient(&w, &shard, &cfg(0.9, 1, 1)).unwrap();
        assert_eq!(g, g_reg);
    }

    #[test]
    fn sensitivity_single_sample() {
        let shard = one_sample_shard(vec![2.0, -1.0], 0, 2);
        let w = ParamMatrix::zeros(2, 2);
        // h = (1/2, 1/2), y = (1, 0): sum |x_j (h_k - y_k)| / I = (1 + 1 + 0.5 + 0.5) / 4
        let s = sensitivity(&w, &shard, &cfg(0.0, 4, 1)).unwrap();
        assert_eq!(s, 0.75);
    }

    #[test]
    fn sensitivity_zero_features() {
        let shard = AgentShard::new(
            0,
            vec![
                Sample::new(vec![0.0; 3], 0, 2).unwrap(),
                Sample::new(vec![0.0; 3], 1, 2).unwrap(),
            ],
        )
        .unwrap();
        let w = ParamMatrix::filled(3, 2, 0.4);
        assert_eq!(sensitivity(&w, &shard, &cfg(0.1, 2, 1)).unwrap(), 0.0);
    }

    #[test]
    fn empty_shard_rejected() {
        assert!(matches!(AgentShard::new(3, vec![]), Err(Error::Usage(_))));
    }

    #[test]
    fn one_hot_validation() {
        assert!(Sample::from_one_hot(vec![1.0], vec![0.0, 1.0]).is_ok());
        assert!(Sample::from_one_hot(vec![1.0], vec![1.0, 1.0]).is_err());
        assert!(Sample::from_one_hot(vec![1.0], vec![0.0, 0.5]).is_err());
        assert!(Sample::from_one_hot(vec![f64::NAN], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn fused_sensitivity_matches_standalone() {
        let samples = (0..7)
            .map(|i| {
                let x = (0..4).map(|j| ((i * 3 + j) % 5) as f64 / 4.0).collect();
                Sample::new(x, i % 3, 3).unwrap()
            })
            .collect();
        let shard = Arc::new(AgentShard::new(0, samples).unwrap());
        let c = cfg(1e-3, 20, 3);
        let w = ParamMatrix::from_fn(4, 3, |j, k| (j as f64 - k as f64) * 0.3);
        let loss = LogisticLoss::new(shard.clone(), c);
        let (g, s) = loss.gradient_with_sensitivity(&w);
        assert_eq!(s, sensitivity(&w, &shard, &c).unwrap());
        assert!(g.bits_eq(&local_gradient(&w, &shard, &c).unwrap()));
    }
}
