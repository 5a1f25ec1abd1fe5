//! Physical configuration of the oscillator and its classical operating point.
//!
//! All signal modes share the loss rate `k_a`; the pump decays at `k_p`. Above
//! threshold the intracavity pump is clamped at `k_a / 2chi` and the signal
//! amplitudes absorb the excess drive:
//!
//! ```text
//! 4 chi^2 sum_i |alpha_i|^2 = k_a k_p (sqrt(sigma) - 1)
//! ```
//!
//! Only the sum of squared amplitudes is fixed. The split between pairs is a
//! free `amplitude_profile`, equal by default.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optional comb geometry. Purely descriptive: nothing downstream reads it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombGeometry {
    /// Pump frequency `omega_p`.
    pub pump_frequency: f64,
    /// Free spectral range `Delta`.
    pub free_spectral_range: f64,
}

impl CombGeometry {
    /// Frequency of signal mode `i` (negative `i` for idlers):
    /// `omega_p/2 + sign(i) (|i| + 1/2) Delta`.
    pub fn mode_frequency(&self, i: i64) -> f64 {
        assert!(i != 0, "comb modes are labelled by nonzero integers");
        let offset = (i.unsigned_abs() as f64 + 0.5) * self.free_spectral_range;
        0.5 * self.pump_frequency + offset * (i.signum() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpoParams {
    /// Signal/idler loss rate, common to every comb mode.
    pub k_a: f64,
    /// Pump loss rate.
    pub k_p: f64,
    /// Nonlinear coupling.
    pub chi: f64,
    /// Number of signal/idler pairs.
    pub n: usize,
    /// Pump power in units of the threshold power.
    pub sigma: f64,
    /// Relative weights of the classical pair amplitudes `|alpha_i|`.
    pub amplitude_profile: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comb: Option<CombGeometry>,
}

impl OpoParams {
    /// Dimensionless configuration: `k_a = chi = 1`, `k_p = kappa`, equal amplitudes.
    pub fn new(kappa: f64, sigma: f64, n: usize) -> Result<Self> {
        let params = OpoParams {
            k_a: 1.0,
            k_p: kappa,
            chi: 1.0,
            n,
            sigma,
            amplitude_profile: vec![1.0; n],
            comb: None,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_profile(mut self, profile: Vec<f64>) -> Result<Self> {
        self.amplitude_profile = profile;
        self.validate()?;
        Ok(self)
    }

    /// Rescale the physical rates while keeping `kappa = k_p / k_a` fixed.
    pub fn with_rates(mut self, k_a: f64, chi: f64) -> Result<Self> {
        let kappa = self.kappa();
        self.k_a = k_a;
        self.k_p = kappa * k_a;
        self.chi = chi;
        self.validate()?;
        Ok(self)
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        let mut p = self.clone();
        p.sigma = sigma;
        p.validate()?;
        Ok(p)
    }

    /// Same rates and pump ratio, `n` pairs of equal amplitude.
    pub fn with_pairs(&self, n: usize) -> Result<Self> {
        let mut p = self.clone();
        p.n = n;
        p.amplitude_profile = vec![1.0; n];
        p.validate()?;
        Ok(p)
    }

    /// Pump-to-signal loss ratio.
    pub fn kappa(&self) -> f64 {
        self.k_p / self.k_a
    }

    pub fn has_equal_profile(&self) -> bool {
        let first = self.amplitude_profile[0];
        self.amplitude_profile
            .iter()
            .all(|&p| (p - first).abs() <= 1e-14 * first.abs())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("k_a", self.k_a), ("k_p", self.k_p), ("chi", self.chi)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be finite and strictly positive, got {v}"
                )));
            }
        }
        if self.n == 0 {
            return Err(Error::InvalidParams("n must be at least 1".into()));
        }
        if !self.sigma.is_finite() {
            return Err(Error::InvalidParams(format!(
                "sigma must be finite, got {}",
                self.sigma
            )));
        }
        if self.sigma < 1.0 {
            return Err(Error::BelowThreshold { sigma: self.sigma });
        }
        if self.amplitude_profile.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: self.amplitude_profile.len(),
            });
        }
        if self
            .amplitude_profile
            .iter()
            .any(|&p| !(p.is_finite() && p >= 0.0))
        {
            return Err(Error::InvalidParams(
                "amplitude profile entries must be finite and nonnegative".into(),
            ));
        }
        if !self.amplitude_profile.iter().any(|&p| p > 0.0) {
            return Err(Error::InvalidParams(
                "amplitude profile needs at least one positive entry".into(),
            ));
        }
        Ok(())
    }
}

/// Classical mean fields in the gauge where the pump drive is real and positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    /// `|alpha_i|` for each pair.
    pub alpha: Vec<f64>,
    /// Intracavity pump amplitude, clamped at `k_a / 2chi`.
    pub pump_mean: f64,
    /// External drive amplitude implied by `sigma`.
    pub pump_in: f64,
    /// Signal phases `phi_i`; the idler carries `-phi_i` and the pump phase is 0.
    pub phases: Vec<f64>,
}

impl SteadyState {
    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    /// `sum_i alpha_i^2`.
    pub fn total_power(&self) -> f64 {
        self.alpha.iter().map(|a| a * a).sum()
    }

    /// Residual of the threshold relation, relative to `k_a k_p`.
    pub fn threshold_residual(&self, params: &OpoParams) -> f64 {
        let lhs = 4.0 * params.chi * params.chi * self.total_power();
        let rhs = params.k_a * params.k_p * (params.sigma.sqrt() - 1.0);
        (lhs - rhs).abs() / (params.k_a * params.k_p)
    }

    pub(crate) fn check_against(&self, params: &OpoParams) -> Result<()> {
        if self.alpha.len() != params.n {
            return Err(Error::DimensionMismatch {
                expected: params.n,
                found: self.alpha.len(),
            });
        }
        if self.phases.len() != params.n {
            return Err(Error::DimensionMismatch {
                expected: params.n,
                found: self.phases.len(),
            });
        }
        Ok(())
    }
}

/// Drive amplitude at which oscillation starts.
pub fn threshold_pump(params: &OpoParams) -> Result<f64> {
    params.validate()?;
    Ok(params.k_a / (2.0 * params.chi) * (params.k_p / 2.0).sqrt())
}

pub fn steady_state(params: &OpoParams) -> Result<SteadyState> {
    params.validate()?;
    let total = params.k_a * params.k_p * (params.sigma.sqrt() - 1.0) / (4.0 * params.chi.powi(2));
    let norm: f64 = params.amplitude_profile.iter().map(|p| p * p).sum();
    let alpha = params
        .amplitude_profile
        .iter()
        .map(|p| p * (total / norm).sqrt())
        .collect();
    Ok(SteadyState {
        alpha,
        pump_mean: params.k_a / (2.0 * params.chi),
        pump_in: params.sigma.sqrt() * threshold_pump(params)?,
        phases: vec![0.0; params.n],
    })
}

/// JSON parameter file: `{"kappa", "sigma", "n", "profile"?, "k_a"?, "chi"?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub kappa: f64,
    pub sigma: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi: Option<f64>,
}

impl ParamSpec {
    pub fn resolve(&self) -> Result<OpoParams> {
        let k_a = self.k_a.unwrap_or(1.0);
        let params = OpoParams {
            k_a,
            k_p: self.kappa * k_a,
            chi: self.chi.unwrap_or(1.0),
            n: self.n,
            sigma: self.sigma,
            amplitude_profile: self.profile.clone().unwrap_or_else(|| vec![1.0; self.n]),
            comb: None,
        };
        params.validate()?;
        Ok(params)
    }
}

impl From<&OpoParams> for ParamSpec {
    fn from(p: &OpoParams) -> Self {
        ParamSpec {
            kappa: p.kappa(),
            sigma: p.sigma,
            n: p.n,
            profile: Some(p.amplitude_profile.clone()),
            k_a: Some(p.k_a),
            chi: Some(p.chi),
        }
    }
}
