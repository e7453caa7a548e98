use crate::error::{Error, Result};
use crate::matrix::ParamMatrix;
use crate::optimizer::RoundReport;

use super::bounds::Regime;

/// Running construction of the averaged iterates `w^(T)` and `z^(T)` that a
/// convergence inequality is stated for.
///
/// * smooth: uniform weights on `w^{t+1}` and on the inner iterates
///   `z^{t,e+1}`, whose per-round mean is the transmitted `z^{t+1}`;
/// * nonsmooth: uniform weights on `w^{t+1}` and on `z^{t,e}`, `e = 1..E`;
/// * strong: weight `2t / (T (T+1))` on round `t`, iterates as nonsmooth.
#[derive(Debug, Clone)]
pub struct AveragedIterates {
    regime: Regime,
    rounds: usize,
    seen: usize,
    weight_sum: f64,
    w: ParamMatrix,
    z: Vec<ParamMatrix>,
}

impl AveragedIterates {
    pub fn new(regime: Regime, rounds: usize, agents: usize, shape: (usize, usize)) -> Result<Self> {
        if rounds == 0 || agents == 0 {
            return Err(Error::usage("averaged iterates need T >= 1 and P >= 1"));
        }
        Ok(Self {
            regime,
            rounds,
            seen: 0,
            weight_sum: 0.0,
            w: ParamMatrix::zeros(shape.0, shape.1),
            z: vec![ParamMatrix::zeros(shape.0, shape.1); agents],
        })
    }

    /// Weight of round `t` (1-based).
    pub fn weight(&self, t: usize) -> f64 {
        let big_t = self.rounds as f64;
        match self.regime {
            Regime::Strong { .. } => 2.0 * t as f64 / (big_t * (big_t + 1.0)),
            _ => 1.0 / big_t,
        }
    }

    pub fn observe(&mut self, report: &RoundReport<'_>) -> Result<()> {
        if report.t != self.seen + 1 || report.t > self.rounds {
            return Err(Error::usage(format!(
                "averaged iterates expected round {}, got {}",
                self.seen + 1,
                report.t
            )));
        }
        if report.outcomes.len() != self.z.len() {
            return Err(Error::usage("agent count changed between rounds"));
        }
        let wt = self.weight(report.t);
        self.w.axpy(wt, report.w);
        for (acc, out) in self.z.iter_mut().zip(report.outcomes) {
            let src = match self.regime {
                Regime::Smooth { .. } => &out.z,
                _ => &out.inner_mean_prev,
            };
            acc.axpy(wt, src);
        }
        self.weight_sum += wt;
        self.seen = report.t;
        Ok(())
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight_sum
    }

    pub fn is_complete(&self) -> bool {
        self.seen == self.rounds
    }

    pub fn w(&self) -> &ParamMatrix {
        &self.w
    }

    /// Per-agent `z_p^(T)`.
    pub fn z(&self) -> &[ParamMatrix] {
        &self.z
    }
}
