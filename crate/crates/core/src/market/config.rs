use serde::{Deserialize, Serialize};

use super::MarketError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Plaintext,
    Encrypted,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "plaintext" => Ok(Mode::Plaintext),
            "encrypted" => Ok(Mode::Encrypted),
            other => Err(format!("unknown mode {other:?} (expected plaintext or encrypted)")),
        }
    }
}

/// Per-seller heterogeneity. Each seller's mean-shift magnitude and
/// label-noise rate are drawn by stratified sampling from [0, max], so the
/// sellers of one replication spread across the whole range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Heterogeneity {
    /// Largest mean shift, in units of each feature's standard deviation.
    pub max_shift: f64,
    pub max_label_noise: f64,
}

impl Default for Heterogeneity {
    fn default() -> Self {
        Self {
            max_shift: 1.0,
            max_label_noise: 0.4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub l2: f64,
    /// Adam step size and iterations for the base model.
    pub lr: f64,
    pub epochs: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            l2: 0.01,
            lr: 0.02,
            epochs: 300,
        }
    }
}

/// Valuation happens on the classification head: its input rank `k_in`
/// (at most hidden + 1, the bias included) and output rank `k_out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValuationConfig {
    pub damping: f64,
    pub k_in: usize,
    pub k_out: usize,
}

impl Default for ValuationConfig {
    fn default() -> Self {
        Self {
            damping: 1.0,
            k_in: 17,
            k_out: 1,
        }
    }
}

/// Ex-post realization: head-only minibatch SGD on the acquired bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundTruthConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for GroundTruthConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            lr: 0.005,
            batch_size: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    pub num_replications: usize,
    pub num_sellers_per_trial: usize,
    pub n_train: usize,
    pub n_eval: usize,
    /// Bundle size per seller.
    pub n_seller: usize,
    pub features: usize,
    /// Ratio between the largest and smallest feature variance.
    pub variance_ratio: f64,
    /// Distance between the two class means along every feature.
    pub class_separation: f64,
    pub heterogeneity: Heterogeneity,
    pub model: ModelConfig,
    pub valuation: ValuationConfig,
    pub ground_truth: GroundTruthConfig,
    pub seed: u64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            num_replications: 20,
            num_sellers_per_trial: 5,
            n_train: 400,
            n_eval: 200,
            n_seller: 200,
            features: 30,
            variance_ratio: 100.0,
            class_separation: 1.0,
            heterogeneity: Heterogeneity::default(),
            model: ModelConfig::default(),
            valuation: ValuationConfig::default(),
            ground_truth: GroundTruthConfig::default(),
            seed: 2024,
        }
    }
}

impl MarketConfig {
    pub fn from_json(text: &str) -> Result<Self, MarketError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| MarketError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        let bad = |m: String| Err(MarketError::InvalidConfig(m));
        for (name, v) in [
            ("num_replications", self.num_replications),
            ("num_sellers_per_trial", self.num_sellers_per_trial),
            ("n_train", self.n_train),
            ("n_eval", self.n_eval),
            ("n_seller", self.n_seller),
            ("features", self.features),
            ("model.hidden", self.model.hidden),
            ("ground_truth.batch_size", self.ground_truth.batch_size),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.variance_ratio < 1.0 || !self.variance_ratio.is_finite() {
            return bad("variance_ratio must be a finite number ≥ 1".into());
        }
        let h = &self.heterogeneity;
        if h.max_shift < 0.0 || !(0.0..=1.0).contains(&h.max_label_noise) {
            return bad("heterogeneity needs max_shift ≥ 0 and max_label_noise in [0, 1]".into());
        }
        if self.valuation.k_in == 0 || self.valuation.k_in > self.model.hidden + 1 || self.valuation.k_out != 1 {
            return bad(format!(
                "valuation ranks must satisfy 1 ≤ k_in ≤ {} and k_out = 1",
                self.model.hidden + 1
            ));
        }
        if self.valuation.damping < 0.0 || self.model.l2 < 0.0 {
            return bad("damping and l2 must be non-negative".into());
        }
        Ok(())
    }
}
