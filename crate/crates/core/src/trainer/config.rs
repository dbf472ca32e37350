use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adversarial::AdvConfig;
use crate::attention::AttentionConfig;
use crate::error::{Error, Result};

/// Model variant: adversarial or joint-loss training, and which attention
/// components feed the text embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "ACNE")]
    Acne,
    #[serde(rename = "ACNE-mu")]
    AcneMu,
    #[serde(rename = "CNE")]
    Cne,
    #[serde(rename = "CNE-mu")]
    CneMu,
    #[serde(rename = "CNE-top")]
    CneTop,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Acne, Mode::AcneMu, Mode::Cne, Mode::CneMu, Mode::CneTop];

    pub fn is_adversarial(self) -> bool {
        matches!(self, Mode::Acne | Mode::AcneMu)
    }

    pub fn attention(self) -> AttentionConfig {
        let (l1, l2, l3) = match self {
            Mode::Acne | Mode::Cne => (1.0, 1.0, 1.0),
            Mode::AcneMu | Mode::CneMu => (1.0, 0.0, 0.0),
            Mode::CneTop => (0.0, 1.0, 1.0),
        };
        AttentionConfig {
            lambda1: l1,
            lambda2: l2,
            lambda3: l3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Acne => "ACNE",
            Mode::AcneMu => "ACNE-mu",
            Mode::Cne => "CNE",
            Mode::CneMu => "CNE-mu",
            Mode::CneTop => "CNE-top",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown mode `{s}` (expected ACNE, ACNE-mu, CNE, CNE-mu or CNE-top)")))
    }
}

/// Weight of the supervised generator term for a training-edge percentage.
pub fn eta_for_ratio(ratio: f64) -> f64 {
    if ratio <= 35.0 {
        0.0
    } else if ratio < 75.0 {
        0.5
    } else {
        1.0
    }
}

/// Weights of the four joint-loss terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointWeights {
    pub ss: f64,
    pub tt: f64,
    pub st: f64,
    pub ts: f64,
}

impl Default for JointWeights {
    fn default() -> Self {
        JointWeights {
            ss: 1.0,
            tt: 1.0,
            st: 0.1,
            ts: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub dim: usize,
    pub negatives: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub d_steps: usize,
    pub g_steps: usize,
    pub lr: f64,
    pub max_len: usize,
    pub min_count: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    /// `None` selects the value from the training ratio.
    pub eta: Option<f64>,
    pub joint: JointWeights,
    pub pretrain_epochs: usize,
    pub aggregate_samples: usize,
    pub exact_threshold: usize,
    /// Early-stopping patience in epochs; 0 disables validation.
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Acne,
            dim: 100,
            negatives: 1,
            batch_size: 256,
            epochs: 50,
            d_steps: 2,
            g_steps: 1,
            lr: 0.001,
            max_len: 300,
            min_count: 1,
            alpha1: 1.0,
            alpha2: 1.0,
            alpha3: 1.0,
            eta: None,
            joint: JointWeights::default(),
            pretrain_epochs: 20,
            aggregate_samples: 16,
            exact_threshold: 512,
            patience: 5,
            validation_fraction: 0.05,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("bad value `{value}` for `{key}`")))
}

impl TrainConfig {
    pub fn attention(&self) -> AttentionConfig {
        self.mode.attention()
    }

    pub fn adversarial(&self, ratio: f64) -> AdvConfig {
        AdvConfig {
            negatives: self.negatives,
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            alpha3: self.alpha3,
            eta: self.eta.unwrap_or_else(|| eta_for_ratio(ratio)),
        }
    }

    /// The attention weights are fixed by the mode; an explicit value is
    /// accepted only when it agrees.
    fn check_lambda(&self, key: &str, value: f64) -> Result<()> {
        let a = self.attention();
        let forced = match key {
            "lambda1" => a.lambda1,
            "lambda2" => a.lambda2,
            _ => a.lambda3,
        };
        if value != forced {
            return Err(Error::invalid(format!(
                "{key} = {value} conflicts with mode {}, which fixes it at {forced}",
                self.mode
            )));
        }
        Ok(())
    }

    /// Sets one `key=value` entry; `lambda*` keys are only checked against
    /// the current mode, so they must come after it. returns `false` for keys it does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "mode" => self.mode = value.parse()?,
            "dim" => self.dim = parse(key, value)?,
            "negatives" => self.negatives = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "d_steps" => self.d_steps = parse(key, value)?,
            "g_steps" => self.g_steps = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "min_count" => self.min_count = parse(key, value)?,
            "alpha1" => self.alpha1 = parse(key, value)?,
            "alpha2" => self.alpha2 = parse(key, value)?,
            "alpha3" => self.alpha3 = parse(key, value)?,
            "eta" => {
                self.eta = if value.trim() == "auto" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "alpha_ss" => self.joint.ss = parse(key, value)?,
            "alpha_tt" => self.joint.tt = parse(key, value)?,
            "alpha_st" => self.joint.st = parse(key, value)?,
            "alpha_ts" => self.joint.ts = parse(key, value)?,
            "pretrain_epochs" => self.pretrain_epochs = parse(key, value)?,
            "aggregate_samples" => self.aggregate_samples = parse(key, value)?,
            "exact_threshold" => self.exact_threshold = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "validation_fraction" => self.validation_fraction = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "lambda1" | "lambda2" | "lambda3" => self.check_lambda(key, parse(key, value)?)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Flat `key=value` lines describing every field.
    pub fn entries(&self) -> Vec<(String, String)> {
        let eta = self.eta.map_or("auto".to_string(), |e| e.to_string());
        let a = self.attention();
        [
            ("mode", self.mode.to_string()),
            ("lambda1", a.lambda1.to_string()),
            ("lambda2", a.lambda2.to_string()),
            ("lambda3", a.lambda3.to_string()),
            ("dim", self.dim.to_string()),
            ("negatives", self.negatives.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("d_steps", self.d_steps.to_string()),
            ("g_steps", self.g_steps.to_string()),
            ("lr", self.lr.to_string()),
            ("max_len", self.max_len.to_string()),
            ("min_count", self.min_count.to_string()),
            ("alpha1", self.alpha1.to_string()),
            ("alpha2", self.alpha2.to_string()),
            ("alpha3", self.alpha3.to_string()),
            ("eta", eta),
            ("alpha_ss", self.joint.ss.to_string()),
            ("alpha_tt", self.joint.tt.to_string()),
            ("alpha_st", self.joint.st.to_string()),
            ("alpha_ts", self.joint.ts.to_string()),
            ("pretrain_epochs", self.pretrain_epochs.to_string()),
            ("aggregate_samples", self.aggregate_samples.to_string()),
            ("exact_threshold", self.exact_threshold.to_string()),
            ("patience", self.patience.to_string()),
            ("validation_fraction", self.validation_fraction.to_string()),
            ("seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("batch_size", self.batch_size),
            ("max_len", self.max_len),
            ("min_count", self.min_count),
            ("aggregate_samples", self.aggregate_samples),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.mode.is_adversarial() && (self.d_steps == 0 && self.g_steps == 0) {
            return Err(Error::invalid("d_steps and g_steps are both zero"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("lr = {} must be positive", self.lr)));
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation_fraction must be in [0, 0.5)"));
        }
        let j = self.joint;
        for (name, v) in [("alpha_ss", j.ss), ("alpha_tt", j.tt), ("alpha_st", j.st), ("alpha_ts", j.ts)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} = {v} outside [0, 1]")));
            }
        }
        self.adversarial(50.0).validate()?;
        self.attention().validate()
    }
}
