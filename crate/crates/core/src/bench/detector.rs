//! Threshold detectors behind the final polarizing splitter.

use rand::Rng;

use crate::protocol::ProtocolBit;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum DetectorError {
    #[error("detector intensities must be finite and non-negative, got ({0}, {1})")]
    BadIntensity(f64, f64),
    #[error("extinction ratio must be at least 1, got {0}")]
    BadExtinction(f64),
    #[error("dark click probability must lie in [0, 1], got {0}")]
    BadDarkProbability(f64),
}

/// How a click is decided from the two arm intensities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum DecisionRule {
    /// Click in arm `k` with probability `Iₖ / (I₀ + I₁)` (Born rule).
    #[default]
    Proportional,
    /// The brighter arm clicks; equal intensities are an erasure.
    GreaterIntensity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectorModel {
    /// Intended-to-orthogonal intensity ratio; `f64::INFINITY` means no leakage.
    pub extinction_ratio: f64,
    /// Probability per slot of a dark click, which reports a uniformly random arm.
    pub dark_click_probability: f64,
    pub rule: DecisionRule,
}

impl Default for DetectorModel {
    /// 500:1 extinction, no dark clicks.
    fn default() -> Self {
        Self {
            extinction_ratio: 500.0,
            dark_click_probability: 0.0,
            rule: DecisionRule::Proportional,
        }
    }
}

impl DetectorModel {
    /// No leakage and no dark clicks.
    pub fn ideal() -> Self {
        Self {
            extinction_ratio: f64::INFINITY,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.extinction_ratio.is_nan() || self.extinction_ratio < 1.0 {
            return Err(DetectorError::BadExtinction(self.extinction_ratio));
        }
        if !(0.0..=1.0).contains(&self.dark_click_probability) {
            return Err(DetectorError::BadDarkProbability(self.dark_click_probability));
        }
        Ok(())
    }

    /// Fraction of each arm's intensity that leaks into the other, `1/(R+1)`.
    pub fn leakage(&self) -> f64 {
        1.0 / (self.extinction_ratio + 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum DetectorOutcome {
    Click(ProtocolBit),
    Erasure,
}

impl DetectorOutcome {
    pub fn bit(self) -> Option<ProtocolBit> {
        match self {
            Self::Click(b) => Some(b),
            Self::Erasure => None,
        }
    }
}

/// Decides which detector fires given the intensities reaching the 0° arm
/// (`i0`) and the 90° arm (`i1`).
pub fn detector_click<R: Rng + ?Sized>(
    i0: f64,
    i1: f64,
    detector: &DetectorModel,
    rng: &mut R,
) -> Result<DetectorOutcome, DetectorError> {
    if !(i0.is_finite() && i1.is_finite()) || i0 < 0.0 || i1 < 0.0 {
        return Err(DetectorError::BadIntensity(i0, i1));
    }
    detector.validate()?;
    if detector.dark_click_probability > 0.0 && rng.random::<f64>() < detector.dark_click_probability {
        return Ok(DetectorOutcome::Click(ProtocolBit::from_bool(rng.random())));
    }
    let eps = detector.leakage();
    let (a, b) = ((1.0 - eps) * i0 + eps * i1, (1.0 - eps) * i1 + eps * i0);
    if a + b == 0.0 {
        return Ok(DetectorOutcome::Erasure);
    }
    Ok(match detector.rule {
        DecisionRule::Proportional => {
            let one = rng.random::<f64>() < b / (a + b);
            DetectorOutcome::Click(ProtocolBit::from_bool(one))
        }
        DecisionRule::GreaterIntensity if a > b => DetectorOutcome::Click(ProtocolBit::Zero),
        DecisionRule::GreaterIntensity if b > a => DetectorOutcome::Click(ProtocolBit::One),
        DecisionRule::GreaterIntensity => DetectorOutcome::Erasure,
    })
}
