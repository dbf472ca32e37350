//! Flat `key = value` run configuration covering training, the unseen-node
//! stage and evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ClassifierConfig;
use crate::inductive::InductiveConfig;
use crate::trainer::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub inductive: InductiveConfig,
    pub classifier: ClassifierConfig,
    /// Repetitions of every evaluation protocol.
    pub repetitions: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            inductive: InductiveConfig::default(),
            classifier: ClassifierConfig::default(),
            repetitions: 10,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("bad value `{value}` for `{key}`")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        if self.train.set(key, value)? || self.inductive.set(key, value)? {
            return Ok(());
        }
        match key {
            "repetitions" => self.repetitions = parse(key, value)?,
            "classifier_epochs" => self.classifier.epochs = parse(key, value)?,
            "classifier_lr" => self.classifier.lr = parse(key, value)?,
            "classifier_l2" => self.classifier.l2 = parse(key, value)?,
            "classifier_standardize" => self.classifier.standardize = parse(key, value)?,
            _ => return Err(Error::invalid(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a `key = value` document; `#` starts a comment. Attention
    /// weights are checked after every other line so they may precede `mode`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut deferred = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("config line {}: expected key = value", n + 1)))?;
            if k.trim().starts_with("lambda") {
                deferred.push((n, k, v));
                continue;
            }
            self.set(k, v)
                .map_err(|e| Error::invalid(format!("config line {}: {e}", n + 1)))?;
        }
        for (n, k, v) in deferred {
            self.set(k, v)
                .map_err(|e| Error::invalid(format!("config line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = self.train.entries();
        out.extend(self.inductive.entries());
        out.extend(
            [
                ("repetitions", self.repetitions.to_string()),
                ("classifier_epochs", self.classifier.epochs.to_string()),
                ("classifier_lr", self.classifier.lr.to_string()),
                ("classifier_l2", self.classifier.l2.to_string()),
                ("classifier_standardize", self.classifier.standardize.to_string()),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v)),
        );
        out
    }

    /// Resolved configuration as a `key = value` document.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions must be positive"));
        }
        self.train.validate()?;
        self.inductive.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::Mode;

    #[test]
    fn text_round_trip() {
        let c = RunConfig::from_text("mode = CNE-top # ablation\n\ndim=16\nlambda_r = 0.3\nrepetitions=2\n").unwrap();
        assert_eq!(c.train.mode, Mode::CneTop);
        assert_eq!(c.train.dim, 16);
        assert_eq!(c.inductive.lambda_r, 0.3);
        assert_eq!(RunConfig::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(RunConfig::from_text("colour = blue").is_err());
        assert!(RunConfig::from_text("dim").is_err());
        let e = RunConfig::from_text("\nepochs = many").unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
        let e = RunConfig::from_text("lambda2 = 1\nmode = ACNE-mu").unwrap_err().to_string();
        assert!(e.contains("line 1") && e.contains("ACNE-mu"), "{e}");
        assert!(RunConfig::from_text("lambda2 = 0\nmode = ACNE-mu").is_ok());
    }
}
