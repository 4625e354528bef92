//! Flat `key=value` settings for training runs.
//!
//! ```text
//! # comments and blank lines are ignored
//! epochs=30
//! batch_size=32
//! optimizer=adam        # adam | sgd | momentum
//! lr=0.001
//! momentum=0.9          # momentum only
//! beta1=0.9
//! beta2=0.999
//! eps=1e-8
//! patience=5            # 0 disables early stopping
//! dropout=true          # phase 2 only
//! freeze_encoder=false
//! wall_time=false
//! arch.enc1=16
//! arch.enc2=32
//! arch.dec1=16
//! arch.dec2=8
//! arch.ext=64
//! arch.hidden=128
//! arch.dropout_rate=0.5
//! ```

use std::path::Path;
use std::str::FromStr;

use dpt_core::optim::UpdateRule;
use dpt_core::pipeline::{PhaseConfig, ReferenceArchitecture};

use crate::error::{CliError, CliResult};

/// Splits `text` into `(key, value)` pairs, reporting the line of any malformed entry.
pub fn parse_pairs(text: &str, origin: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("{origin}:{}: expected key=value, got `{line}`", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_pairs(path: &Path) -> CliResult<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    parse_pairs(&text, &path.display().to_string())
}

fn value<T: FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.parse().map_err(|_| CliError::usage(format!("bad value for `{key}`: `{v}`")))
}

/// Training settings: a phase config plus architecture widths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub config: PhaseConfig,
    pub arch: ReferenceArchitecture,
}

#[derive(Debug, Clone, Copy)]
struct Optimizer {
    kind: &'static str,
    lr: f32,
    momentum: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
}

impl Optimizer {
    fn of(rule: UpdateRule) -> Self {
        let mut o = Self { kind: "adam", lr: 1e-3, momentum: 0.9, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
        match rule {
            UpdateRule::Sgd { learning_rate } => {
                o.kind = "sgd";
                o.lr = learning_rate;
            }
            UpdateRule::SgdMomentum { learning_rate, momentum } => {
                o.kind = "momentum";
                o.lr = learning_rate;
                o.momentum = momentum;
            }
            UpdateRule::Adam { learning_rate, beta1, beta2, eps } => {
                o.lr = learning_rate;
                o.beta1 = beta1;
                o.beta2 = beta2;
                o.eps = eps;
            }
        }
        o
    }

    fn rule(&self) -> UpdateRule {
        match self.kind {
            "sgd" => UpdateRule::Sgd { learning_rate: self.lr },
            "momentum" => UpdateRule::SgdMomentum { learning_rate: self.lr, momentum: self.momentum },
            _ => UpdateRule::Adam { learning_rate: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps },
        }
    }
}

impl Settings {
    pub fn new(config: PhaseConfig) -> Self {
        Self { config, arch: ReferenceArchitecture::default() }
    }

    /// Applies `pairs` in order; later keys win.
    pub fn apply(&mut self, pairs: &[(String, String)]) -> CliResult<()> {
        let mut opt = Optimizer::of(self.config.optimizer);
        let c = &mut self.config;
        let a = &mut self.arch;
        for (k, v) in pairs {
            let k = k.as_str();
            match k {
                "epochs" => c.epochs = value(k, v)?,
                "batch_size" => c.batch_size = value(k, v)?,
                "patience" => c.patience = value(k, v)?,
                "dropout" => c.dropout_enabled = value(k, v)?,
                "freeze_encoder" => c.freeze_encoder = value(k, v)?,
                "wall_time" => c.record_wall_time = value(k, v)?,
                "optimizer" => {
                    opt.kind = match v.as_str() {
                        "adam" => "adam",
                        "sgd" => "sgd",
                        "momentum" => "momentum",
                        _ => return Err(CliError::usage(format!("unknown optimizer `{v}` (adam, sgd, momentum)"))),
                    }
                }
                "lr" => opt.lr = value(k, v)?,
                "momentum" => opt.momentum = value(k, v)?,
                "beta1" => opt.beta1 = value(k, v)?,
                "beta2" => opt.beta2 = value(k, v)?,
                "eps" => opt.eps = value(k, v)?,
                "arch.enc1" => a.enc_channels[0] = value(k, v)?,
                "arch.enc2" => a.enc_channels[1] = value(k, v)?,
                "arch.dec1" => a.dec_channels[0] = value(k, v)?,
                "arch.dec2" => a.dec_channels[1] = value(k, v)?,
                "arch.ext" => a.ext_channels = value(k, v)?,
                "arch.hidden" => a.hidden = value(k, v)?,
                "arch.dropout_rate" => a.dropout_rate = value(k, v)?,
                _ => return Err(CliError::usage(format!("unknown setting `{k}`"))),
            }
        }
        c.optimizer = opt.rule();
        c.validate()?;
        a.validate()?;
        Ok(())
    }

    /// Every setting, one `key=value` per line, in the order documented above.
    pub fn render(&self) -> String {
        let c = &self.config;
        let a = &self.arch;
        let o = Optimizer::of(c.optimizer);
        let mut s = format!("epochs={}\nbatch_size={}\noptimizer={}\nlr={:?}\n", c.epochs, c.batch_size, o.kind, o.lr);
        match o.kind {
            "momentum" => s += &format!("momentum={:?}\n", o.momentum),
            "adam" => s += &format!("beta1={:?}\nbeta2={:?}\neps={:?}\n", o.beta1, o.beta2, o.eps),
            _ => {}
        }
        s += &format!(
            "patience={}\ndropout={}\nfreeze_encoder={}\nwall_time={}\n",
            c.patience, c.dropout_enabled, c.freeze_encoder, c.record_wall_time
        );
        s += &format!(
            "arch.enc1={}\narch.enc2={}\narch.dec1={}\narch.dec2={}\narch.ext={}\narch.hidden={}\narch.dropout_rate={:?}\n",
            a.enc_channels[0], a.enc_channels[1], a.dec_channels[0], a.dec_channels[1], a.ext_channels, a.hidden, a.dropout_rate
        );
        s
    }
}
