//! Multi-photon pulses.

use num_complex::Complex64;

use crate::linalg::StateVector;
use crate::polarization::{jones_to_stokes, JonesVector, PolarizationError, StokesVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PulseError {
    #[error("a pulse needs at least one photon")]
    Empty,
    #[error("cannot take {taken} of {available} photons")]
    TooManyTaken { taken: u32, available: u32 },
}

/// `photon_count` photons sharing one quantum state.
///
/// For polarization modes the state is a Jones vector (dimension 2); the
/// two-qubit transformation families use dimension 4.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhotonPulse {
    photon_count: u32,
    state: StateVector,
    intensity: f64,
}

impl PhotonPulse {
    pub fn new(photon_count: u32, state: StateVector, intensity: f64) -> Result<Self, PulseError> {
        if photon_count == 0 {
            return Err(PulseError::Empty);
        }
        Ok(Self {
            photon_count,
            state,
            intensity,
        })
    }

    pub fn polarized(photon_count: u32, polarization: JonesVector) -> Result<Self, PulseError> {
        Self::new(photon_count, polarization.into(), 1.0)
    }

    pub fn photon_count(&self) -> u32 {
        self.photon_count
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn with_state(&self, state: StateVector) -> Self {
        Self {
            state,
            ..self.clone()
        }
    }

    pub fn with_photon_count(&self, photon_count: u32) -> Result<Self, PulseError> {
        Self::new(photon_count, self.state.clone(), self.intensity)
    }

    /// The shared polarization, when the state is a single qubit.
    pub fn polarization(&self) -> Option<JonesVector> {
        JonesVector::try_from(&self.state).ok()
    }

    pub fn stokes(&self) -> Result<StokesVector, PolarizationError> {
        let v = self
            .polarization()
            .ok_or(PolarizationError::NotAQubit(self.state.dim()))?;
        let v = v.normalized().ok_or(PolarizationError::NotNormalized { norm_sqr: 0.0 })?;
        jones_to_stokes(&v, self.intensity)
    }

    /// Splits off `k` photons; both parts keep the shared state.
    pub fn split(&self, k: u32) -> Result<(Self, Self), PulseError> {
        if k == 0 || k >= self.photon_count {
            return Err(PulseError::TooManyTaken {
                taken: k,
                available: self.photon_count,
            });
        }
        let frac = k as f64 / self.photon_count as f64;
        let tapped = Self {
            photon_count: k,
            state: self.state.clone(),
            intensity: self.intensity * frac,
        };
        let forward = Self {
            photon_count: self.photon_count - k,
            state: self.state.clone(),
            intensity: self.intensity * (1.0 - frac),
        };
        Ok((tapped, forward))
    }

    /// Amplitude of each computational basis state, for inspection.
    pub fn amplitudes(&self) -> &[Complex64] {
        self.state.amplitudes()
    }
}
