//! Key-value run configuration.
//!
//! One `section.key = value` pair per line; `#` starts a comment. Every key is
//! optional and falls back to the module default. Unknown keys are errors.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::dataset::GenConfig;
use crate::error::{Error, Result};
use crate::eval::EvalProtocol;
use crate::goal::GoalConfig;
use crate::io::sha256_hex;
use crate::predict::RolloutConfig;
use crate::sfm::SimConfig;
use crate::train::TrainConfig;

/// Settings shared by every subcommand. `sim` drives the `simulate`
/// command, which runs the full duration unless `sim.stop_radius` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub sim: SimConfig,
    pub gen: GenConfig,
    pub train: TrainConfig,
    pub rollout: RolloutConfig,
    pub goal: GoalConfig,
    pub eval: EvalProtocol,
    /// Seconds per frame index in benchmark track files. The common ETH/UCY
    /// text exports number frames in steps of 10 at 2.5 Hz.
    pub frame_dt: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            sim: SimConfig {
                stop_radius: None,
                ..SimConfig::default()
            },
            gen: GenConfig::default(),
            train: TrainConfig::default(),
            rollout: RolloutConfig::default(),
            goal: GoalConfig::default(),
            eval: EvalProtocol::default(),
            frame_dt: 0.04,
        }
    }
}

fn value<T: FromStr>(raw: &str) -> std::result::Result<T, String> {
    raw.parse::<T>().map_err(|_| format!("invalid value `{raw}`"))
}

impl RunConfig {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source, i + 1, "expected `key = value`"))?;
            cfg.set(key.trim(), raw.trim())
                .map_err(|msg| Error::parse(source, i + 1, msg))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, raw: &str) -> std::result::Result<(), String> {
        match key {
            "seed" => self.seed = value(raw)?,
            "sim.duration" => self.sim.duration = value(raw)?,
            "sim.dt" => self.sim.dt = value(raw)?,
            "sim.stop_radius" => {
                self.sim.stop_radius = if raw == "none" { None } else { Some(value(raw)?) }
            }
            "sim.contact_terms" => self.sim.contact_terms = value(raw)?,
            "gen.count" => self.gen.count = value(raw)?,
            "gen.duration" => self.gen.duration = value(raw)?,
            "gen.dt" => self.gen.dt = value(raw)?,
            "gen.window_len" => self.gen.window_len = value(raw)?,
            "gen.train_fraction" => self.gen.train_fraction = value(raw)?,
            "train.learning_rate" => self.train.learning_rate = value(raw)?,
            "train.batch_size" => self.train.batch_size = value(raw)?,
            "train.epochs" => self.train.epochs = value(raw)?,
            "train.adam_beta1" => self.train.adam_beta1 = value(raw)?,
            "train.adam_beta2" => self.train.adam_beta2 = value(raw)?,
            "train.adam_eps" => self.train.adam_eps = value(raw)?,
            "rollout.horizon" => self.rollout.horizon = value(raw)?,
            "rollout.dt" => self.rollout.dt = value(raw)?,
            "rollout.mass" => self.rollout.mass = value(raw)?,
            "goal.sigma" => self.goal.sigma = value(raw)?,
            "goal.floor" => self.goal.floor = value(raw)?,
            "goal.threshold" => self.goal.threshold = value(raw)?,
            "goal.reseed_every" => self.goal.reseed_every = value(raw)?,
            "goal.stop_hypothesis" => self.goal.stop_hypothesis = value(raw)?,
            "goal.mass" => self.goal.mass = value(raw)?,
            "eval.observe_duration" => self.eval.observe_duration = value(raw)?,
            "eval.predict_duration" => self.eval.predict_duration = value(raw)?,
            "eval.resample_dt" => self.eval.resample_dt = value(raw)?,
            "eval.frame_dt" => self.frame_dt = value(raw)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sim.duration > 0.0 && self.sim.dt > 0.0) {
            return Err(Error::InvalidParams("sim.duration and sim.dt must be > 0".into()));
        }
        if !(self.gen.duration > 0.0 && self.gen.dt > 0.0) {
            return Err(Error::InvalidParams("gen.duration and gen.dt must be > 0".into()));
        }
        if !(self.gen.train_fraction > 0.0 && self.gen.train_fraction < 1.0) {
            return Err(Error::InvalidParams("gen.train_fraction must lie in (0, 1)".into()));
        }
        if self.gen.window_len < 3 {
            return Err(Error::InvalidParams("gen.window_len must be >= 3".into()));
        }
        if !(self.frame_dt > 0.0) {
            return Err(Error::InvalidParams("eval.frame_dt must be > 0".into()));
        }
        self.train.validate()?;
        self.rollout.validate()?;
        self.goal.validate()?;
        self.eval.validate()
    }

    /// Canonical listing of every key; parsing it yields the same config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# Corridor runs draw mass, characteristic time and desired speed from the\n\
             # same ranges as open-space runs: m {:?} kg, tau {:?} s, v_d {:?} m/s.",
            crate::dataset::MASS_RANGE,
            crate::dataset::CHAR_TIME_RANGE,
            crate::dataset::DESIRED_SPEED_RANGE
        );
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("sim.duration", format!("{:?}", self.sim.duration));
        kv("sim.dt", format!("{:?}", self.sim.dt));
        kv(
            "sim.stop_radius",
            self.sim.stop_radius.map_or("none".into(), |r| format!("{r:?}")),
        );
        kv("sim.contact_terms", self.sim.contact_terms.to_string());
        kv("gen.count", self.gen.count.to_string());
        kv("gen.duration", format!("{:?}", self.gen.duration));
        kv("gen.dt", format!("{:?}", self.gen.dt));
        kv("gen.window_len", self.gen.window_len.to_string());
        kv("gen.train_fraction", format!("{:?}", self.gen.train_fraction));
        kv("train.learning_rate", format!("{:?}", self.train.learning_rate));
        kv("train.batch_size", self.train.batch_size.to_string());
        kv("train.epochs", self.train.epochs.to_string());
        kv("train.adam_beta1", format!("{:?}", self.train.adam_beta1));
        kv("train.adam_beta2", format!("{:?}", self.train.adam_beta2));
        kv("train.adam_eps", format!("{:?}", self.train.adam_eps));
        kv("rollout.horizon", format!("{:?}", self.rollout.horizon));
        kv("rollout.dt", format!("{:?}", self.rollout.dt));
        kv("rollout.mass", format!("{:?}", self.rollout.mass));
        kv("goal.sigma", format!("{:?}", self.goal.sigma));
        kv("goal.floor", format!("{:?}", self.goal.floor));
        kv("goal.threshold", format!("{:?}", self.goal.threshold));
        kv("goal.reseed_every", self.goal.reseed_every.to_string());
        kv("goal.stop_hypothesis", self.goal.stop_hypothesis.to_string());
        kv("goal.mass", format!("{:?}", self.goal.mass));
        kv("eval.observe_duration", format!("{:?}", self.eval.observe_duration));
        kv("eval.predict_duration", format!("{:?}", self.eval.predict_duration));
        kv("eval.resample_dt", format!("{:?}", self.eval.resample_dt));
        kv("eval.frame_dt", format!("{:?}", self.frame_dt));
        out
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_text(), "x").unwrap(), cfg);
    }

    #[test]
    fn overrides_and_comments() {
        let cfg = RunConfig::parse(
            "# desk scale\ntrain.epochs = 100\ngen.count=200 # trailing\nsim.stop_radius = none\n",
            "x",
        )
        .unwrap();
        assert_eq!(cfg.train.epochs, 100);
        assert_eq!(cfg.gen.count, 200);
        assert_eq!(cfg.sim.stop_radius, None);
        assert_ne!(cfg.digest(), RunConfig::default().digest());
    }

    #[test]
    fn rejects_unknown_and_bad_values() {
        let err = RunConfig::parse("train.epochs = 3\ntrain.momentum = 0.9\n", "cfg.txt").unwrap_err();
        assert!(err.to_string().contains("cfg.txt:2"), "{err}");
        assert!(RunConfig::parse("train.epochs = many\n", "x").is_err());
        assert!(RunConfig::parse("train.learning_rate = -1\n", "x").is_err());
        assert!(RunConfig::parse("just words\n", "x").is_err());
    }
}
