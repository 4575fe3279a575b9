use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step-size schedule `eta_t` for `t = 0, 1, ...`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant {
        eta: f64,
    },
    /// `eta0 / (1 + t / tau)`: positive, vanishing, non-summable.
    Harmonic {
        eta0: f64,
        tau: f64,
    },
    /// Linear ramp over the first `warmup_ratio * total_steps` steps, then
    /// cosine decay to zero at `total_steps`.
    CosineWarmup {
        eta0: f64,
        warmup_ratio: f64,
        total_steps: usize,
    },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant { eta } => eta >= 0.0 && eta.is_finite(),
            StepSchedule::Harmonic { eta0, tau } => {
                eta0 > 0.0 && eta0.is_finite() && tau > 0.0 && tau.is_finite()
            }
            StepSchedule::CosineWarmup {
                eta0,
                warmup_ratio,
                total_steps,
            } => {
                eta0 >= 0.0 && eta0.is_finite() && (0.0..=1.0).contains(&warmup_ratio) && total_steps > 0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid step schedule {self:?}")))
        }
    }

    /// Scales the peak step size, keeping the shape.
    pub fn with_peak(self, peak: f64) -> Self {
        match self {
            StepSchedule::Constant { .. } => StepSchedule::Constant { eta: peak },
            StepSchedule::Harmonic { tau, .. } => StepSchedule::Harmonic { eta0: peak, tau },
            StepSchedule::CosineWarmup {
                warmup_ratio,
                total_steps,
                ..
            } => StepSchedule::CosineWarmup {
                eta0: peak,
                warmup_ratio,
                total_steps,
            },
        }
    }

    pub fn eta(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::Constant { eta } => eta,
            StepSchedule::Harmonic { eta0, tau } => eta0 / (1.0 + t as f64 / tau),
            StepSchedule::CosineWarmup {
                eta0, total_steps, ..
            } => {
                let warmup = self.warmup_steps();
                if t < warmup {
                    eta0 * (t + 1) as f64 / warmup as f64
                } else if t >= total_steps {
                    0.0
                } else {
                    let progress = (t - warmup) as f64 / (total_steps - warmup) as f64;
                    0.5 * eta0 * (1.0 + (PI * progress).cos())
                }
            }
        }
    }

    pub fn warmup_steps(&self) -> usize {
        match *self {
            StepSchedule::CosineWarmup {
                warmup_ratio,
                total_steps,
                ..
            } => ((warmup_ratio * total_steps as f64).round() as usize).min(total_steps),
            _ => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_values() {
        let s = StepSchedule::Harmonic { eta0: 1.0, tau: 1.0 };
        assert_eq!(s.eta(0), 1.0);
        assert!((s.eta(9) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn constant_is_flat() {
        let s = StepSchedule::Constant { eta: 0.5 };
        assert_eq!(s.eta(0), 0.5);
        assert_eq!(s.eta(123_456), 0.5);
    }

    #[test]
    fn cosine_warmup_peaks_at_end_of_ramp() {
        let s = StepSchedule::CosineWarmup {
            eta0: 0.02,
            warmup_ratio: 0.03,
            total_steps: 1000,
        };
        assert_eq!(s.warmup_steps(), 30);
        assert!(s.eta(0) < s.eta(10));
        assert_eq!(s.eta(29), 0.02);
        assert_eq!(s.eta(30), 0.02);
        assert!(s.eta(999) > 0.0 && s.eta(999) < 1e-6);
        assert_eq!(s.eta(1000), 0.0);
        for t in 30..999 {
            assert!(s.eta(t + 1) <= s.eta(t));
        }
    }

    #[test]
    fn cosine_without_warmup_starts_at_peak() {
        let s = StepSchedule::CosineWarmup {
            eta0: 1.0,
            warmup_ratio: 0.0,
            total_steps: 10,
        };
        assert_eq!(s.eta(0), 1.0);
    }

    #[test]
    fn json_form() {
        let s: StepSchedule = serde_json::from_str(r#"{"kind":"harmonic","eta0":0.5,"tau":1}"#).unwrap();
        assert_eq!(s, StepSchedule::Harmonic { eta0: 0.5, tau: 1.0 });
        assert!(StepSchedule::Harmonic { eta0: 0.5, tau: 0.0 }.validate().is_err());
    }
}
