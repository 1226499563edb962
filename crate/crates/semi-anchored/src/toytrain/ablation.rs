//! Paired ablation tables over the synthetic benchmark.
//!
//! Each axis varies one ingredient of the pipeline while holding the seed
//! (and therefore the generated scenes) fixed, so settings within a row
//! group see identical data. Rows report mAP per seed plus the mean over
//! seeds, which is the number the directional comparisons use.

use std::fmt;

use crate::assignment::LocationLabeler;
use crate::error::{Error, Result};
use crate::geometry::AnchorSpec;
use crate::inference::SelectionStrategy;

use super::trainer::{ToyTrainer, TrainConfig};

/// Which ingredient the ablation varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    /// Anchor-classification head on vs. the sampled-anchor baseline
    /// (random anchor per positive location scored by the location
    /// probability, best of 10 repetitions).
    AcHead,
    /// Inference-time anchor selection: Top-1 / Top-2 / Top-5 / Pos(0.1).
    Strategy,
    /// Soft-label exponent for anchor-classification targets.
    Sigma,
    /// Location-labeling rule: simplified argmax rule vs. explicit
    /// threshold moving at two gamma values.
    Gamma,
    /// Anchors per location: 1x1, 3x3, 5x5 grids of scales x aspects.
    AnchorCount,
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AblationAxis::AcHead => "ac-head",
            AblationAxis::Strategy => "strategy",
            AblationAxis::Sigma => "sigma",
            AblationAxis::Gamma => "gamma",
            AblationAxis::AnchorCount => "anchor-count",
        };
        f.write_str(name)
    }
}

/// One setting of the varied ingredient, with its mAP per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub setting: String,
    pub map_per_seed: Vec<f64>,
    pub mean_map: f64,
}

/// The full comparison for one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub axis: AblationAxis,
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// The row whose setting matches `name`, if present.
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.setting == name)
    }
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ablation axis: {}", self.axis)?;
        write!(f, "{:<22}", "setting")?;
        for s in &self.seeds {
            write!(f, " {:>9}", format!("seed={s}"))?;
        }
        writeln!(f, " {:>9}", "mean")?;
        for row in &self.rows {
            write!(f, "{:<22}", row.setting)?;
            for v in &row.map_per_seed {
                write!(f, " {:>9.4}", v)?;
            }
            writeln!(f, " {:>9.4}", row.mean_map)?;
        }
        Ok(())
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn trained(cfg: &TrainConfig) -> Result<ToyTrainer> {
    let mut trainer = ToyTrainer::new(cfg.clone())?;
    trainer.run()?;
    Ok(trainer)
}

/// Trains and evaluates the paired settings of one axis over the given
/// seeds. Every setting of an axis sees the same scenes for a given seed;
/// only the varied ingredient differs.
pub fn run_ablation(
    axis: AblationAxis,
    base: &TrainConfig,
    seeds: &[u64],
) -> Result<AblationTable> {
    if seeds.is_empty() {
        return Err(Error::invalid("seeds", "need at least one seed"));
    }
    base.validate()?;

    let settings: Vec<String> = match axis {
        AblationAxis::AcHead => vec!["with-ac-head".into(), "no-ac-best-of-10".into()],
        AblationAxis::Strategy => {
            vec!["top-1".into(), "top-2".into(), "top-5".into(), "pos-0.1".into()]
        }
        AblationAxis::Sigma => vec!["sigma=0.1".into(), "sigma=0.5".into(), "sigma=0.9".into()],
        AblationAxis::Gamma => vec![
            "simplified".into(),
            format!("gamma=1/(K+1)={:.4}", 1.0 / (base.spec.anchors_per_location() + 1) as f64),
            "gamma=0.2".into(),
        ],
        AblationAxis::AnchorCount => vec!["K=1".into(), "K=9".into(), "K=25".into()],
    };
    let mut per_setting: Vec<Vec<f64>> = vec![Vec::with_capacity(seeds.len()); settings.len()];

    for &seed in seeds {
        let mut cfg = base.clone();
        cfg.seed = seed;
        match axis {
            AblationAxis::AcHead => {
                let with = trained(&cfg)?;
                per_setting[0].push(with.evaluate()?.ap);
                let mut no_ac_cfg = cfg.clone();
                no_ac_cfg.ac_head_enabled = false;
                let without = trained(&no_ac_cfg)?;
                per_setting[1].push(without.evaluate_sampled_anchor(10)?.ap);
            }
            AblationAxis::Strategy => {
                // One training run per seed; only the inference-time
                // selection differs between rows.
                let trainer = trained(&cfg)?;
                let strategies = [
                    SelectionStrategy::TopK { k: 1 },
                    SelectionStrategy::TopK { k: 2 },
                    SelectionStrategy::TopK { k: 5 },
                    SelectionStrategy::Pos { tau: 0.1 },
                ];
                for (slot, strategy) in strategies.into_iter().enumerate() {
                    let mut inf = cfg.inference.clone();
                    inf.strategy = strategy;
                    per_setting[slot].push(trainer.evaluate_with(&inf)?.ap);
                }
            }
            AblationAxis::Sigma => {
                for (slot, sigma) in [0.1, 0.5, 0.9].into_iter().enumerate() {
                    let mut c = cfg.clone();
                    c.loss.sigma = sigma;
                    per_setting[slot].push(trained(&c)?.evaluate()?.ap);
                }
            }
            AblationAxis::Gamma => {
                let k = base.spec.anchors_per_location();
                let labelers = [
                    LocationLabeler::Simplified,
                    LocationLabeler::ThresholdMove { gamma: 1.0 / (k + 1) as f64 },
                    LocationLabeler::ThresholdMove { gamma: 0.2 },
                ];
                for (slot, labeler) in labelers.into_iter().enumerate() {
                    let mut c = cfg.clone();
                    c.labeler = labeler;
                    per_setting[slot].push(trained(&c)?.evaluate()?.ap);
                }
            }
            AblationAxis::AnchorCount => {
                for (slot, side) in [1usize, 3, 5].into_iter().enumerate() {
                    let mut c = cfg.clone();
                    c.spec = AnchorSpec::new(side, side)?;
                    per_setting[slot].push(trained(&c)?.evaluate()?.ap);
                }
            }
        }
    }

    let rows = settings
        .into_iter()
        .zip(per_setting)
        .map(|(setting, map_per_seed)| {
            let mean_map = mean(&map_per_seed);
            AblationRow { setting, map_per_seed, mean_map }
        })
        .collect();
    Ok(AblationTable { axis, seeds: seeds.to_vec(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config() -> TrainConfig {
        TrainConfig {
            steps: 30,
            num_images: 4,
            num_eval_images: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn ac_head_axis_has_two_rows_with_one_map_per_seed() {
        let table = run_ablation(AblationAxis::AcHead, &quick_config(), &[1, 2]).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].setting, "with-ac-head");
        for row in &table.rows {
            assert_eq!(row.map_per_seed.len(), 2);
            assert!(row.map_per_seed.iter().all(|m| (0.0..=1.0).contains(m)));
            assert!((row.mean_map - mean(&row.map_per_seed)).abs() < 1e-12);
        }
    }

    #[test]
    fn strategy_axis_reuses_one_model_per_seed() {
        let table = run_ablation(AblationAxis::Strategy, &quick_config(), &[3]).unwrap();
        assert_eq!(table.rows.len(), 4);
        let names: Vec<&str> = table.rows.iter().map(|r| r.setting.as_str()).collect();
        assert_eq!(names, ["top-1", "top-2", "top-5", "pos-0.1"]);
    }

    #[test]
    fn gamma_axis_names_the_simplified_rule_and_both_gammas() {
        let table = run_ablation(AblationAxis::Gamma, &quick_config(), &[1]).unwrap();
        assert_eq!(table.rows[0].setting, "simplified");
        assert!(table.rows[1].setting.starts_with("gamma=1/(K+1)"));
        assert_eq!(table.rows[2].setting, "gamma=0.2");
    }

    #[test]
    fn anchor_count_axis_is_deterministic() {
        let a = run_ablation(AblationAxis::AnchorCount, &quick_config(), &[5]).unwrap();
        let b = run_ablation(AblationAxis::AnchorCount, &quick_config(), &[5]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sigma_axis_rows_and_display_render() {
        let table = run_ablation(AblationAxis::Sigma, &quick_config(), &[1]).unwrap();
        let text = table.to_string();
        assert!(text.contains("ablation axis: sigma"));
        assert!(text.contains("sigma=0.9"));
        assert!(text.contains("seed=1"));
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        assert!(run_ablation(AblationAxis::AcHead, &quick_config(), &[]).is_err());
    }
}
