//! Flat key-value run configuration.
//!
//! One `key = value` per line; `#` starts a comment; blank lines are
//! ignored. Every key is optional — defaults are the pipeline's shipped
//! values (25 anchors per location as 5 scales x 5 aspects, simplified
//! labeling, sigma = 0.9, Top-1 inference, lambda_reg = 2,
//! lambda_ac = 1). Unknown and duplicate keys are errors, as are
//! out-of-range values, each named by key. [`save_config`] writes keys
//! in a canonical order and floats in shortest round-trip form, so
//! load(save(cfg)) == cfg exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::assignment::LocationLabeler;
use crate::error::{Error, Result};
use crate::geometry::AnchorSpec;
use crate::inference::{InferenceConfig, SelectionStrategy};
use crate::losses::{IouLossKind, LossConfig};

use super::write_atomic;

/// Everything a pipeline run needs besides the data itself.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub spec: AnchorSpec,
    /// Anchor-label IoU band.
    pub fg_thresh: f64,
    pub bg_thresh: f64,
    /// Post-regression IoU at which an anchor counts as correctly
    /// refined.
    pub ac_iou_thresh: f64,
    pub labeler: LocationLabeler,
    pub loss: LossConfig,
    pub inference: InferenceConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            spec: AnchorSpec::new(5, 5).expect("static spec"),
            fg_thresh: 0.5,
            bg_thresh: 0.4,
            ac_iou_thresh: 0.5,
            labeler: LocationLabeler::Simplified,
            loss: LossConfig::default(),
            inference: InferenceConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.inference.validate()?;
        for (key, v) in [
            ("fg_thresh", self.fg_thresh),
            ("bg_thresh", self.bg_thresh),
            ("ac_iou_thresh", self.ac_iou_thresh),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config {
                    key: key.into(),
                    reason: format!("must be in [0,1], got {v}"),
                });
            }
        }
        if self.bg_thresh > self.fg_thresh {
            return Err(Error::Config {
                key: "bg_thresh".into(),
                reason: format!(
                    "must not exceed fg_thresh ({} > {})",
                    self.bg_thresh, self.fg_thresh
                ),
            });
        }
        if let LocationLabeler::ThresholdMove { gamma } = self.labeler {
            if !(0.0..1.0).contains(&gamma) {
                return Err(Error::Config {
                    key: "gamma".into(),
                    reason: format!("must be in [0,1), got {gamma}"),
                });
            }
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config {
        key: key.into(),
        reason: format!("cannot parse `{value}`"),
    })
}

/// Parses the `top-<k>` / `pos-<tau>` strategy grammar shared by the
/// config file and the CLI.
pub fn parse_strategy(value: &str) -> Result<SelectionStrategy> {
    let err = || Error::Config {
        key: "strategy".into(),
        reason: format!("expected `top-<k>` or `pos-<tau>`, got `{value}`"),
    };
    if let Some(k) = value.strip_prefix("top-") {
        let k: usize = k.trim().parse().map_err(|_| err())?;
        Ok(SelectionStrategy::TopK { k })
    } else if let Some(tau) = value.strip_prefix("pos-") {
        let tau: f64 = tau.trim().parse().map_err(|_| err())?;
        Ok(SelectionStrategy::Pos { tau })
    } else {
        Err(err())
    }
}

fn strategy_text(s: SelectionStrategy) -> String {
    match s {
        SelectionStrategy::TopK { k } => format!("top-{k}"),
        SelectionStrategy::Pos { tau } => format!("pos-{tau}"),
    }
}

/// Parses config text. `source` names the input in error messages.
pub fn parse_config(text: &str, source: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen: Vec<String> = Vec::new();
    for (line_no, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config {
                key: format!("{source}:{}", line_no + 1),
                reason: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if seen.iter().any(|s| s == key) {
            return Err(Error::Config {
                key: key.into(),
                reason: "duplicate key".into(),
            });
        }
        seen.push(key.to_string());
        match key {
            "seed" => cfg.seed = parse_num(key, value)?,
            "num_scales" => {
                cfg.spec = AnchorSpec::new(parse_num(key, value)?, cfg.spec.num_aspects)?
            }
            "num_aspects" => {
                cfg.spec = AnchorSpec::new(cfg.spec.num_scales, parse_num(key, value)?)?
            }
            "fg_thresh" => cfg.fg_thresh = parse_num(key, value)?,
            "bg_thresh" => cfg.bg_thresh = parse_num(key, value)?,
            "ac_iou_thresh" => cfg.ac_iou_thresh = parse_num(key, value)?,
            "gamma" => {
                cfg.labeler = if value == "simplified" {
                    LocationLabeler::Simplified
                } else {
                    LocationLabeler::ThresholdMove { gamma: parse_num(key, value)? }
                }
            }
            "sigma" => cfg.loss.sigma = parse_num(key, value)?,
            "alpha_loc" => cfg.loss.alpha_loc = parse_num(key, value)?,
            "beta_loc" => cfg.loss.beta_loc = parse_num(key, value)?,
            "alpha_ac" => cfg.loss.alpha_ac = parse_num(key, value)?,
            "beta_ac" => cfg.loss.beta_ac = parse_num(key, value)?,
            "lambda_reg" => cfg.loss.lambda_reg = parse_num(key, value)?,
            "lambda_ac" => cfg.loss.lambda_ac = parse_num(key, value)?,
            "prob_eps" => cfg.loss.prob_eps = parse_num(key, value)?,
            "iou_eps" => cfg.loss.iou_eps = parse_num(key, value)?,
            "iou_loss" => {
                cfg.loss.iou_loss = match value {
                    "neg-log" => IouLossKind::NegLog,
                    "one-minus-iou" => IouLossKind::OneMinusIou,
                    other => {
                        return Err(Error::Config {
                            key: key.into(),
                            reason: format!(
                                "expected `neg-log` or `one-minus-iou`, got `{other}`"
                            ),
                        })
                    }
                }
            }
            "strategy" => cfg.inference.strategy = parse_strategy(value)?,
            "nms_iou_thresh" => cfg.inference.nms_iou_thresh = parse_num(key, value)?,
            "pre_nms_score_thresh" => {
                cfg.inference.pre_nms_score_thresh = parse_num(key, value)?
            }
            "max_detections" => cfg.inference.max_detections = parse_num(key, value)?,
            unknown => {
                return Err(Error::Config {
                    key: unknown.into(),
                    reason: "unknown key".into(),
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Renders a config in canonical key order. Center-containment
/// labeling is a library-level ablation setting with no config-file
/// spelling, so it is rejected here.
pub fn config_text(cfg: &RunConfig) -> Result<String> {
    let mut out = String::new();
    let gamma = match cfg.labeler {
        LocationLabeler::Simplified => "simplified".to_string(),
        LocationLabeler::ThresholdMove { gamma } => format!("{gamma}"),
        LocationLabeler::Fcos { .. } => {
            return Err(Error::Config {
                key: "gamma".into(),
                reason: "center-containment labeling has no config-file form".into(),
            })
        }
    };
    let iou_loss = match cfg.loss.iou_loss {
        IouLossKind::NegLog => "neg-log",
        IouLossKind::OneMinusIou => "one-minus-iou",
    };
    let pairs: Vec<(&str, String)> = vec![
        ("seed", cfg.seed.to_string()),
        ("num_scales", cfg.spec.num_scales.to_string()),
        ("num_aspects", cfg.spec.num_aspects.to_string()),
        ("fg_thresh", format!("{}", cfg.fg_thresh)),
        ("bg_thresh", format!("{}", cfg.bg_thresh)),
        ("ac_iou_thresh", format!("{}", cfg.ac_iou_thresh)),
        ("gamma", gamma),
        ("sigma", format!("{}", cfg.loss.sigma)),
        ("alpha_loc", format!("{}", cfg.loss.alpha_loc)),
        ("beta_loc", format!("{}", cfg.loss.beta_loc)),
        ("alpha_ac", format!("{}", cfg.loss.alpha_ac)),
        ("beta_ac", format!("{}", cfg.loss.beta_ac)),
        ("lambda_reg", format!("{}", cfg.loss.lambda_reg)),
        ("lambda_ac", format!("{}", cfg.loss.lambda_ac)),
        ("prob_eps", format!("{}", cfg.loss.prob_eps)),
        ("iou_eps", format!("{}", cfg.loss.iou_eps)),
        ("iou_loss", iou_loss.to_string()),
        ("strategy", strategy_text(cfg.inference.strategy)),
        ("nms_iou_thresh", format!("{}", cfg.inference.nms_iou_thresh)),
        (
            "pre_nms_score_thresh",
            format!("{}", cfg.inference.pre_nms_score_thresh),
        ),
        ("max_detections", cfg.inference.max_detections.to_string()),
    ];
    for (key, value) in pairs {
        writeln!(out, "{key} = {value}").expect("string write");
    }
    Ok(out)
}

/// Loads a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, &path.display().to_string())
}

/// Saves a config file atomically in canonical order.
pub fn save_config(path: &Path, cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    write_atomic(path, &config_text(cfg)?)
}
