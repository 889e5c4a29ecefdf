//! Multisine excitation signals.
//!
//! Each input channel is driven by a sum of `harmonics` sinusoids at integer
//! multiples of a base frequency, with phases drawn independently per
//! trajectory and per channel. Equal amplitudes on a harmonic comb give a
//! persistently exciting, band-limited input whose realization is fixed by
//! the phase vector alone.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Template for drawing multisine realizations: amplitude per harmonic,
/// base frequency in Hz, number of harmonics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalParams {
    pub amplitude: f64,
    pub base_freq: f64,
    pub harmonics: usize,
}

impl Default for SignalParams {
    fn default() -> Self {
        SignalParams { amplitude: 0.5, base_freq: 0.1, harmonics: 10 }
    }
}

impl SignalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude.is_finite() && self.base_freq.is_finite()) {
            return Err(Error::invalid("signal amplitude and base frequency must be finite"));
        }
        if self.base_freq <= 0.0 {
            return Err(Error::invalid("signal base frequency must be positive"));
        }
        if self.harmonics == 0 {
            return Err(Error::invalid("signal needs at least one harmonic"));
        }
        Ok(())
    }
}

/// One realized channel: the template plus its sampled phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multisine {
    pub amplitude: f64,
    pub base_freq: f64,
    pub phases: Vec<f64>,
}

impl Multisine {
    /// Draw phases uniformly from `[0, 2pi)`, one per harmonic in order.
    pub fn sample<R: Rng>(params: &SignalParams, rng: &mut R) -> Self {
        let phases = (0..params.harmonics)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        Multisine { amplitude: params.amplitude, base_freq: params.base_freq, phases }
    }

    /// Signal value at time `t` (continuous; usable at integrator stage
    /// midpoints, not just grid times).
    pub fn eval(&self, t: f64) -> f64 {
        let w0 = std::f64::consts::TAU * self.base_freq;
        let mut acc = 0.0;
        for (i, &phase) in self.phases.iter().enumerate() {
            let k = (i + 1) as f64;
            acc += self.amplitude * (k * w0 * t + phase).sin();
        }
        acc
    }
}
