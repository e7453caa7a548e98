//! Noise generation: the Laplace objective-perturbation mechanism and the
//! Gaussian output-perturbation baseline.
//!
//! Every draw comes from an [`RngStream`], a ChaCha generator keyed by the run
//! seed together with the `(agent, round, local update)` triple. The key
//! embeds all four 64-bit values verbatim, so distinct triples never share a
//! stream and draws are reproducible on any platform or thread layout.

use rand::distr::{Distribution, Open01};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::ParamMatrix;

/// Identifies one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub agent: u64,
    pub round: u64,
    pub local_update: u64,
}

impl RngStream {
    pub fn new(seed: u64, agent: usize, round: usize, local_update: usize) -> Self {
        Self {
            seed,
            agent: agent as u64,
            round: round as u64,
            local_update: local_update as u64,
        }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.agent.to_le_bytes());
        key[16..24].copy_from_slice(&self.round.to_le_bytes());
        key[24..32].copy_from_slice(&self.local_update.to_le_bytes());
        ChaCha12Rng::from_seed(key)
    }
}

/// Entry-wise Laplace(0, scale) noise over a `J x K` matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceSpec {
    pub scale: f64,
    pub shape: (usize, usize),
}

impl LaplaceSpec {
    /// Scale `sensitivity / eps_bar`; an infinite budget gives zero scale.
    pub fn calibrated(sensitivity: f64, eps_bar: f64, shape: (usize, usize)) -> Result<Self> {
        if !(eps_bar > 0.0) {
            return Err(Error::usage(format!("eps_bar must be > 0, got {eps_bar}")));
        }
        if !(sensitivity >= 0.0) || !sensitivity.is_finite() {
            return Err(Error::usage(format!("invalid sensitivity {sensitivity}")));
        }
        let scale = if eps_bar.is_infinite() {
            0.0
        } else {
            sensitivity / eps_bar
        };
        Ok(Self { scale, shape })
    }
}

/// One Laplace(0, b) draw by inverting the CDF at an open-interval uniform.
#[inline]
pub fn laplace_draw<R: rand::Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    let u: f64 = Open01.sample(rng);
    let centered = u - 0.5;
    -scale * centered.signum() * (1.0 - 2.0 * centered.abs()).ln()
}

pub fn sample_laplace_matrix(spec: &LaplaceSpec, stream: RngStream) -> ParamMatrix {
    let (rows, cols) = spec.shape;
    if spec.scale == 0.0 {
        return ParamMatrix::zeros(rows, cols);
    }
    let mut rng = stream.rng();
    ParamMatrix::from_fn(rows, cols, |_, _| laplace_draw(&mut rng, spec.scale))
}

/// Gaussian output noise with standard deviation `sigma0 / t^decay` at round `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSpec {
    pub sigma0: f64,
    pub decay: f64,
    pub delta_bar: f64,
    pub shape: (usize, usize),
}

impl GaussianSpec {
    /// Classic `(eps, delta)` calibration
    /// `sigma0 = sqrt(2 ln(1.25/delta)) * l2_scale * sensitivity / eps`.
    pub fn calibrated(
        sensitivity: f64,
        l2_scale: f64,
        eps_bar: f64,
        delta_bar: f64,
        decay: f64,
        shape: (usize, usize),
    ) -> Result<Self> {
        if !(eps_bar > 0.0) {
            return Err(Error::usage(format!("eps_bar must be > 0, got {eps_bar}")));
        }
        let sigma0 = if eps_bar.is_infinite() {
            0.0
        } else {
            (2.0 * (1.25 / delta_bar).ln()).sqrt() * l2_scale * sensitivity / eps_bar
        };
        let spec = Self {
            sigma0,
            decay,
            delta_bar,
            shape,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 >= 0.0) || !self.sigma0.is_finite() {
            return Err(Error::usage(format!("sigma0 must be >= 0, got {}", self.sigma0)));
        }
        if !(self.delta_bar > 0.0 && self.delta_bar < 1.0) {
            return Err(Error::usage(format!(
                "delta_bar must lie in (0, 1), got {}",
                self.delta_bar
            )));
        }
        if !(self.decay >= 0.0) {
            return Err(Error::usage(format!("decay must be >= 0, got {}", self.decay)));
        }
        Ok(())
    }

    pub fn sigma_at(&self, t: usize) -> f64 {
        self.sigma0 / (t.max(1) as f64).powf(self.decay)
    }
}

pub fn sample_gaussian_output_noise(spec: &GaussianSpec, t: usize, stream: RngStream) -> ParamMatrix {
    let (rows, cols) = spec.shape;
    let sigma = spec.sigma_at(t);
    if sigma == 0.0 {
        return ParamMatrix::zeros(rows, cols);
    }
    let mut rng = stream.rng();
    ParamMatrix::from_fn(rows, cols, |_, _| {
        let n: f64 = StandardNormal.sample(&mut rng);
        sigma * n
    })
}

/// Histogram layout for [`laplace_ratio_audit`]: `bins` equal-width bins
/// covering `[-reach * b, shift + reach * b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramSpec {
    pub bins: usize,
    pub reach: f64,
    /// Bins with fewer counts than this in either population are ignored.
    pub min_count: u64,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            bins: 40,
            reach: 5.0,
            min_count: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AuditOutcome {
    /// Largest `|ln(count_a / count_b)|` over the well-populated bins.
    Measured { max_log_ratio: f64, bins_used: usize },
    /// No bin reached the population threshold.
    Inconclusive { max_bin_count: u64 },
}

impl AuditOutcome {
    pub fn max_log_ratio(&self) -> Option<f64> {
        match self {
            AuditOutcome::Measured { max_log_ratio, .. } => Some(*max_log_ratio),
            AuditOutcome::Inconclusive { .. } => None,
        }
    }
}

/// Empirical check of the Laplace density-ratio bound: draws `samples` values
/// of `Lap(0, b)` and of `shift + Lap(0, b)`, histograms both and reports the
/// largest bin log-ratio.
pub fn laplace_ratio_audit(
    scale: f64,
    shift: f64,
    samples: u64,
    hist: HistogramSpec,
    seed: u64,
) -> Result<AuditOutcome> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::usage(format!("audit scale must be > 0, got {scale}")));
    }
    if hist.bins == 0 || !(hist.reach > 0.0) {
        return Err(Error::usage("histogram needs at least one bin and positive reach"));
    }
    let lo = -hist.reach * scale;
    let hi = shift.max(0.0) + hist.reach * scale;
    let width = (hi - lo) / hist.bins as f64;
    let fill = |stream: RngStream, offset: f64| {
        let mut counts = vec![0u64; hist.bins];
        let mut rng = stream.rng();
        for _ in 0..samples {
            let v = offset + laplace_draw(&mut rng, scale);
            if v >= lo && v < hi {
                let b = (((v - lo) / width) as usize).min(hist.bins - 1);
                counts[b] += 1;
            }
        }
        counts
    };
    let base = fill(RngStream::new(seed, 0, 0, 0), 0.0);
    let moved = fill(RngStream::new(seed, 1, 0, 0), shift);

    let mut best: Option<f64> = None;
    let mut used = 0;
    let mut max_count = 0;
    for (&a, &b) in base.iter().zip(&moved) {
        max_count = max_count.max(a.min(b));
        if a >= hist.min_count && b >= hist.min_count {
            used += 1;
            let r = (a as f64 / b as f64).ln().abs();
            best = Some(best.map_or(r, |m: f64| m.max(r)));
        }
    }
    Ok(match best {
        Some(max_log_ratio) => AuditOutcome::Measured {
            max_log_ratio,
            bins_used: used,
        },
        None => AuditOutcome::Inconclusive {
            max_bin_count: max_count,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_scale_is_deterministic_zero() {
        let spec = LaplaceSpec {
            scale: 0.0,
            shape: (3, 2),
        };
        let m = sample_laplace_matrix(&spec, RngStream::new(9, 1, 2, 3));
        assert!(m.is_zero());
    }

    #[test]
    fn same_stream_same_draws() {
        let spec = LaplaceSpec {
            scale: 1.5,
            shape: (4, 3),
        };
        let s = RngStream::new(42, 3, 17, 2);
        assert!(sample_laplace_matrix(&spec, s).bits_eq(&sample_laplace_matrix(&spec, s)));
        let other = RngStream::new(42, 3, 17, 3);
        assert!(!sample_laplace_matrix(&spec, s).bits_eq(&sample_laplace_matrix(&spec, other)));
    }

    #[test]
    fn infinite_budget_means_no_noise() {
        let spec = LaplaceSpec::calibrated(0.3, f64::INFINITY, (2, 2)).unwrap();
        assert_eq!(spec.scale, 0.0);
        assert!(LaplaceSpec::calibrated(0.3, 0.0, (2, 2)).is_err());
    }

    #[test]
    fn gaussian_sigma_schedule() {
        let spec = GaussianSpec {
            sigma0: 1.0,
            decay: 0.5,
            delta_bar: 1e-6,
            shape: (1, 1),
        };
        assert_eq!(spec.sigma_at(4), 0.5);
        let mut prev = f64::INFINITY;
        for t in 1..200 {
            let s = spec.sigma_at(t);
            assert!(s <= prev);
            prev = s;
        }
        let zero = GaussianSpec { sigma0: 0.0, ..spec };
        assert!(sample_gaussian_output_noise(&zero, 3, RngStream::new(1, 0, 3, 0)).is_zero());
    }

    #[test]
    fn gaussian_spec_validation() {
        let bad = GaussianSpec {
            sigma0: 1.0,
            decay: 0.5,
            delta_bar: 1.0,
            shape: (1, 1),
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn audit_inconclusive_with_few_samples() {
        let out = laplace_ratio_audit(1.0, 0.5, 100, HistogramSpec::default(), 7).unwrap();
        assert!(matches!(out, AuditOutcome::Inconclusive { .. }));
    }
}
