//! Flat key=value run configuration. A `--config` argument is either a path
//! to a file of `key = value` lines (# comments allowed) or, when it
//! contains `=`, an inline comma-separated list; command-line flags override
//! file values. The fully resolved config is echoed into every report.

use std::path::Path;

use serde::Serialize;

use socnn_core::models::{CnnConfig, KernelPattern, SocnnConfig};
use socnn_core::train::TrainConfig;
use socnn_core::{Error, Result};

/// Everything a training-style run needs, with defaults matching the
/// standard artificial/electricity setup.
#[derive(Clone, Debug, Serialize)]
pub struct RunSpec {
    pub window: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip: Option<f64>,
    pub patience: usize,
    pub max_reductions: usize,
    pub reduction_factor: f64,
    pub max_epochs: usize,
    pub filters: usize,
    pub sig_depth: usize,
    pub sig_kernels: String,
    pub offset_depth: usize,
    pub alpha: f64,
    pub dropout: f64,
    pub batchnorm: bool,
    pub leak: f64,
    pub conv_layers: usize,
    pub ridge: f64,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            window: 60,
            batch_size: 128,
            lr: 1e-3,
            clip: Some(1.0),
            patience: 10,
            max_reductions: 2,
            reduction_factor: 10.0,
            max_epochs: 1000,
            filters: 8,
            sig_depth: 10,
            sig_kernels: "3-1".to_string(),
            offset_depth: 1,
            alpha: 0.01,
            dropout: 0.0,
            batchnorm: true,
            leak: 0.1,
            conv_layers: 7,
            ridge: 1e-6,
        }
    }
}

impl RunSpec {
    /// Loads a `--config` argument (file path or inline pairs) over the
    /// defaults.
    pub fn from_arg(arg: Option<&str>) -> Result<Self> {
        let mut spec = Self::default();
        if let Some(arg) = arg {
            let pairs = if arg.contains('=') {
                parse_inline(arg)?
            } else {
                parse_file(Path::new(arg))?
            };
            for (key, value) in pairs {
                spec.set(&key, &value)?;
            }
        }
        Ok(spec)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("config {key}={value}: {what}"));
        match key {
            "window" | "m" => self.window = value.parse().map_err(|_| bad("not an integer"))?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad("not an integer"))?,
            "lr" => self.lr = value.parse().map_err(|_| bad("not a number"))?,
            "clip" => {
                self.clip = if value == "none" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad("not a number"))?)
                }
            }
            "patience" => self.patience = value.parse().map_err(|_| bad("not an integer"))?,
            "max_reductions" => {
                self.max_reductions = value.parse().map_err(|_| bad("not an integer"))?
            }
            "reduction_factor" => {
                self.reduction_factor = value.parse().map_err(|_| bad("not a number"))?
            }
            "max_epochs" => self.max_epochs = value.parse().map_err(|_| bad("not an integer"))?,
            "filters" => self.filters = value.parse().map_err(|_| bad("not an integer"))?,
            "sig_depth" => self.sig_depth = value.parse().map_err(|_| bad("not an integer"))?,
            "sig_kernels" => {
                KernelPattern::parse(value)?;
                self.sig_kernels = value.to_string();
            }
            "offset_depth" => {
                self.offset_depth = value.parse().map_err(|_| bad("not an integer"))?
            }
            "alpha" => self.alpha = value.parse().map_err(|_| bad("not a number"))?,
            "dropout" => self.dropout = value.parse().map_err(|_| bad("not a number"))?,
            "batchnorm" => self.batchnorm = value.parse().map_err(|_| bad("not a bool"))?,
            "leak" => self.leak = value.parse().map_err(|_| bad("not a number"))?,
            "conv_layers" => {
                self.conv_layers = value.parse().map_err(|_| bad("not an integer"))?
            }
            "ridge" => self.ridge = value.parse().map_err(|_| bad("not a number"))?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            lr: self.lr,
            clip: self.clip,
            patience: self.patience,
            max_reductions: self.max_reductions,
            reduction_factor: self.reduction_factor,
            max_epochs: self.max_epochs,
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn socnn_config(
        &self,
        input_dim: usize,
        output_dim: usize,
        anchor_cols: Option<Vec<usize>>,
    ) -> Result<SocnnConfig> {
        Ok(SocnnConfig {
            input_dim,
            output_dim,
            window: self.window,
            anchor_cols,
            significance_depth: self.sig_depth,
            significance_filters: self.filters,
            kernels: KernelPattern::parse(&self.sig_kernels)?,
            offset_depth: self.offset_depth,
            alpha: self.alpha,
            dropout: self.dropout,
            batchnorm: self.batchnorm,
            leak: self.leak,
        })
    }

    pub fn cnn_config(&self, input_dim: usize, output_dim: usize) -> CnnConfig {
        CnnConfig {
            input_dim,
            output_dim,
            window: self.window,
            conv_layers: self.conv_layers,
            filters: self.filters,
            kernels: KernelPattern::parse(&self.sig_kernels).unwrap_or(KernelPattern::Alternating31),
            dropout: self.dropout,
            batchnorm: self.batchnorm,
            leak: self.leak,
        }
    }
}

fn parse_inline(arg: &str) -> Result<Vec<(String, String)>> {
    arg.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            pair.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Config(format!("inline config {pair:?} is not key=value")))
        })
        .collect()
}

fn parse_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("{line:?} is not key = value"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Seeds and alphas arrive as comma-separated lists.
pub fn parse_list<T: std::str::FromStr>(arg: &str, what: &str) -> Result<Vec<T>> {
    arg.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| Error::Config(format!("bad {what} entry {s:?}")))
        })
        .collect()
}

