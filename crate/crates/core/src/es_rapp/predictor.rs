//! Per-cell load predictors over interval-spaced utilization history.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::traffic::INTERVALS_PER_DAY;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredictError {
    #[error("need at least {needed} intervals of history, have {have}")]
    InsufficientHistory { needed: usize, have: usize },
    #[error("horizon {0} outside 1..={INTERVALS_PER_DAY}")]
    BadHorizon(usize),
}

/// Maps one cell's history (oldest first, last element = now) to the
/// utilization expected `horizon` intervals ahead, in [0, 1].
pub trait Predictor {
    fn predict(&self, history: &[f64], horizon: usize) -> Result<f64, PredictError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    #[default]
    SeasonalEwma,
    Persistence,
}

impl PredictorKind {
    pub fn build(self) -> Box<dyn Predictor + Send + Sync> {
        match self {
            PredictorKind::SeasonalEwma => Box::new(SeasonalEwma::default()),
            PredictorKind::Persistence => Box::new(Persistence),
        }
    }
}

/// Seasonal-naive mean over past days blended 50/50 with an EWMA of the
/// last few intervals. The EWMA runs on residuals against the seasonal
/// profile so that periodic and constant histories are exact fixed points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeasonalEwma {
    pub period: usize,
    pub window: usize,
    pub alpha: f64,
    pub blend: f64,
}

impl Default for SeasonalEwma {
    fn default() -> Self {
        Self {
            period: INTERVALS_PER_DAY,
            window: 4,
            alpha: 0.5,
            blend: 0.5,
        }
    }
}

impl SeasonalEwma {
    /// Mean of `history` at `index - d * period` for every d >= 1 in range.
    /// `index` may point past the end of the history.
    fn seasonal_mean(&self, history: &[f64], index: usize) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        let mut i = index;
        while i >= self.period {
            i -= self.period;
            if i < history.len() {
                sum += history[i];
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    fn residual_ewma(&self, history: &[f64]) -> f64 {
        let now = history.len() - 1;
        let mut residuals = Vec::with_capacity(self.window);
        for back in (0..self.window).rev() {
            let Some(i) = now.checked_sub(back) else {
                continue;
            };
            if let Some(s) = self.seasonal_mean(history, i) {
                residuals.push(history[i] - s);
            }
        }
        let mut iter = residuals.into_iter();
        let Some(first) = iter.next() else {
            return 0.0;
        };
        iter.fold(first, |acc, r| self.alpha * r + (1.0 - self.alpha) * acc)
    }
}

impl Predictor for SeasonalEwma {
    fn predict(&self, history: &[f64], horizon: usize) -> Result<f64, PredictError> {
        if horizon == 0 || horizon > self.period {
            return Err(PredictError::BadHorizon(horizon));
        }
        if history.len() < self.period {
            return Err(PredictError::InsufficientHistory {
                needed: self.period,
                have: history.len(),
            });
        }
        let target = history.len() - 1 + horizon;
        let seasonal = self
            .seasonal_mean(history, target)
            .expect("a full period of history covers every phase");
        let adjusted = seasonal + self.residual_ewma(history);
        Ok((self.blend * seasonal + (1.0 - self.blend) * adjusted).clamp(0.0, 1.0))
    }
}

/// Last observed value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Persistence;

impl Predictor for Persistence {
    fn predict(&self, history: &[f64], horizon: usize) -> Result<f64, PredictError> {
        if horizon == 0 {
            return Err(PredictError::BadHorizon(horizon));
        }
        history
            .last()
            .map(|v| v.clamp(0.0, 1.0))
            .ok_or(PredictError::InsufficientHistory { needed: 1, have: 0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::DiurnalConfig;

    fn periodic(days: usize) -> Vec<f64> {
        (0..days * INTERVALS_PER_DAY)
            .map(|i| 0.3 + 0.2 * ((i % INTERVALS_PER_DAY) as f64 / 10.0).sin())
            .collect()
    }

    #[test]
    fn periodic_is_fixed_point() {
        let p = SeasonalEwma::default();
        let h = periodic(3);
        for horizon in [1, 4, 96] {
            let got = p.predict(&h, horizon).unwrap();
            let want = h[h.len() - 1 + horizon - INTERVALS_PER_DAY];
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn constant_is_fixed_point() {
        let p = SeasonalEwma::default();
        let h = vec![0.37; 200];
        assert!((p.predict(&h, 1).unwrap() - 0.37).abs() < 1e-12);
    }

    #[test]
    fn short_history_rejected() {
        let p = SeasonalEwma::default();
        assert_eq!(
            p.predict(&[0.1; 95], 1),
            Err(PredictError::InsufficientHistory { needed: 96, have: 95 })
        );
        assert!(p.predict(&[0.1; 96], 1).is_ok());
        assert_eq!(p.predict(&[0.1; 96], 0), Err(PredictError::BadHorizon(0)));
    }

    #[test]
    fn level_shift_pulls_half_way() {
        // Flat 0.2 for a day, then the last four intervals at 0.6. Residuals
        // are all 0.4, so the EWMA is 0.4 and the blend adds half of it.
        let p = SeasonalEwma::default();
        let mut h = vec![0.2; INTERVALS_PER_DAY + 4];
        let n = h.len();
        for v in &mut h[n - 4..] {
            *v = 0.6;
        }
        assert!((p.predict(&h, 1).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn ewma_weights_recent_residuals() {
        // Residuals r1..r4 = 0, 0, 0, 0.4 on a flat profile:
        // ewma = 0.5 * 0.4 = 0.2, prediction = 0.2 + 0.5 * 0.2.
        let p = SeasonalEwma::default();
        let mut h = vec![0.2; INTERVALS_PER_DAY + 4];
        *h.last_mut().unwrap() = 0.6;
        assert!((p.predict(&h, 1).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn output_clamped() {
        let p = SeasonalEwma::default();
        let mut h = vec![0.95; INTERVALS_PER_DAY + 4];
        let n = h.len();
        for v in &mut h[n - 4..] {
            *v = 1.0;
        }
        h[0] = 1.0;
        let got = p.predict(&h, 96).unwrap();
        assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn noisy_sinusoid_error_bounded() {
        let cfg = DiurnalConfig {
            noise_std: 0.02,
            ..DiurnalConfig::default()
        };
        let mut rng_state = 7u64;
        let mut noise = || {
            // xorshift, uniform in [-sqrt(3), sqrt(3)] * std: same variance as the target noise
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            ((rng_state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0) * 3f64.sqrt() * cfg.noise_std
        };
        let truth: Vec<f64> = (0..7 * INTERVALS_PER_DAY).map(|i| cfg.mean_utilization(1, i)).collect();
        let observed: Vec<f64> = truth.iter().map(|t| t + noise()).collect();
        let p = SeasonalEwma::default();
        let mut err = 0.0;
        let mut n = 0;
        for t in INTERVALS_PER_DAY..truth.len() - 1 {
            err += (p.predict(&observed[..=t], 1).unwrap() - truth[t + 1]).abs();
            n += 1;
        }
        let mae = err / n as f64;
        assert!(mae <= cfg.noise_std, "mae {mae}");
    }

    #[test]
    fn persistence_returns_last() {
        assert_eq!(Persistence.predict(&[0.1, 0.4], 3).unwrap(), 0.4);
        assert!(Persistence.predict(&[], 1).is_err());
    }
}
