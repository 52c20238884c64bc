//! Model variants and prior settings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::InferenceError;

/// The four nested observation models.
///
/// * `Model0`: one error SD shared by all examiners, no bias.
/// * `Model1`: an error SD per examiner, no bias.
/// * `Model2`: per-examiner SDs plus one constant bias per non-reference examiner.
/// * `Model3`: per-examiner SDs plus site-level biases under a truncated
///   stick-breaking Dirichlet process prior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelVariant {
    Model0,
    Model1,
    Model2,
    Model3,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [
        ModelVariant::Model0,
        ModelVariant::Model1,
        ModelVariant::Model2,
        ModelVariant::Model3,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn shared_sigma(self) -> bool {
        self == ModelVariant::Model0
    }

    pub fn has_bias(self) -> bool {
        matches!(self, ModelVariant::Model2 | ModelVariant::Model3)
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Model{}", self.number())
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let digits = t
            .strip_prefix("Model")
            .or_else(|| t.strip_prefix("model"))
            .unwrap_or(t);
        match digits {
            "0" => Ok(ModelVariant::Model0),
            "1" => Ok(ModelVariant::Model1),
            "2" => Ok(ModelVariant::Model2),
            "3" => Ok(ModelVariant::Model3),
            _ => Err(format!("unknown model `{s}` (expected 0, 1, 2 or 3)")),
        }
    }
}

/// Truncated Dirichlet-process settings, shared by the three non-reference
/// examiners.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DppSpec {
    /// Number of atoms `M`.
    pub truncation: usize,
    /// Concentration `α`.
    pub alpha: f64,
    pub base_mean: f64,
    pub base_variance: f64,
}

impl Default for DppSpec {
    fn default() -> Self {
        DppSpec {
            truncation: 6,
            alpha: 8.0,
            base_mean: 0.0,
            base_variance: 1000.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: ModelVariant,
    pub prior_mu_mean: f64,
    pub prior_mu_variance: f64,
    /// Upper bound of the uniform prior on every standard deviation.
    pub sd_upper: f64,
    pub dpp: DppSpec,
}

impl ModelSpec {
    pub fn new(variant: ModelVariant) -> Self {
        ModelSpec {
            variant,
            prior_mu_mean: 0.0,
            prior_mu_variance: 1000.0,
            sd_upper: 10.0,
            dpp: DppSpec::default(),
        }
    }

    /// Atoms per examiner actually used by the sampler: none without bias,
    /// one for the constant-bias model.
    pub fn atoms(&self) -> usize {
        match self.variant {
            ModelVariant::Model0 | ModelVariant::Model1 => 0,
            ModelVariant::Model2 => 1,
            ModelVariant::Model3 => self.dpp.truncation,
        }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |m: String| Err(InferenceError::InvalidSpec(m));
        if !(self.prior_mu_variance > 0.0 && self.prior_mu_variance.is_finite()) || !self.prior_mu_mean.is_finite() {
            return bad("prior on mu must have finite mean and positive variance".into());
        }
        if !(self.sd_upper > 0.0 && self.sd_upper.is_finite()) {
            return bad(format!("sd_upper must be positive, got {}", self.sd_upper));
        }
        if self.variant == ModelVariant::Model3 {
            if self.dpp.truncation < 2 {
                return bad(format!("DPP truncation must be at least 2, got {}", self.dpp.truncation));
            }
            if self.dpp.truncation > u8::MAX as usize {
                return bad(format!("DPP truncation {} exceeds 255", self.dpp.truncation));
            }
            if !(self.dpp.alpha > 0.0 && self.dpp.alpha.is_finite()) {
                return bad(format!("DPP concentration must be positive, got {}", self.dpp.alpha));
            }
        }
        if self.variant.has_bias() && !(self.dpp.base_variance > 0.0 && self.dpp.base_variance.is_finite()) {
            return bad("bias base distribution needs positive finite variance".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_variants() {
        assert_eq!("3".parse::<ModelVariant>().unwrap(), ModelVariant::Model3);
        assert_eq!("Model0".parse::<ModelVariant>().unwrap(), ModelVariant::Model0);
        assert!("4".parse::<ModelVariant>().is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = ModelSpec::new(ModelVariant::Model3);
        assert!(s.validate().is_ok());
        assert_eq!(s.atoms(), 6);
        s.dpp.truncation = 1;
        assert!(s.validate().is_err());
        s.dpp.truncation = 6;
        s.dpp.alpha = 0.0;
        assert!(s.validate().is_err());
        assert_eq!(ModelSpec::new(ModelVariant::Model2).atoms(), 1);
    }
}
