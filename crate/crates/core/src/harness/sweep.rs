//! Parameter sweeps over seeded trials.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::pipeline::raw_key_metrics;
use crate::statistics::mean_std;

/// Sweepable parameters and the tag of the CSV they produce.
pub const PARAMETERS: [(&str, &str); 5] = [
    ("M", "fig6"),
    ("L_f", "fig7"),
    ("eta", "fig8"),
    ("first_component_bits", "fig9"),
    ("L_w", "fig10"),
];

pub fn figure_tag(parameter: &str) -> Result<&'static str> {
    PARAMETERS
        .iter()
        .find(|(p, _)| *p == parameter)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::Unknown {
            kind: "sweep parameter",
            name: parameter.to_string(),
            available: PARAMETERS.iter().map(|(p, _)| *p).collect::<Vec<_>>().join(", "),
        })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub bmr_mean: f64,
    pub bmr_std: f64,
    pub bgr_mean: f64,
    pub bgr_std: f64,
    pub trials: usize,
    /// Per-trial (bmr, bgr), trial i run with seed + i.
    #[serde(skip)]
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub parameter: String,
    pub tag: String,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("value,bmr_mean,bmr_std,bgr_mean,bgr_std,trials\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.6},{:.6},{:.4},{:.4},{}\n",
                r.value, r.bmr_mean, r.bmr_std, r.bgr_mean, r.bgr_std, r.trials
            ));
        }
        s
    }

    pub fn bgr_means(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.bgr_mean).collect()
    }

    pub fn bmr_means(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.bmr_mean).collect()
    }
}

/// Mean ± std of raw-key BMR and BGR for each value, over `trials` seeds.
pub fn sweep(cfg: &ExperimentConfig, parameter: &str, values: &[&str], trials: usize) -> Result<SweepTable> {
    let tag = figure_tag(parameter)?;
    if trials == 0 {
        return Err(Error::param("sweep needs at least one trial"));
    }
    let mut configs = Vec::new();
    for v in values {
        let mut c = cfg.clone();
        c.set(parameter, v)?;
        c.validate()?;
        configs.push(c);
    }
    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|i| (0..trials as u64).map(move |t| (i, t)))
        .collect();
    let results: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(i, t)| {
            let mut c = configs[i].clone();
            c.seed = cfg.seed.wrapping_add(t);
            raw_key_metrics(&c).map(|(m, _)| (m.bmr, m.bgr))
        })
        .collect::<Result<_>>()?;

    let rows = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let samples: Vec<(f64, f64)> = results[i * trials..(i + 1) * trials].to_vec();
            let (bmr_mean, bmr_std) = mean_std(&samples.iter().map(|s| s.0).collect::<Vec<_>>());
            let (bgr_mean, bgr_std) = mean_std(&samples.iter().map(|s| s.1).collect::<Vec<_>>());
            SweepRow {
                value: v.to_string(),
                bmr_mean,
                bmr_std,
                bgr_mean,
                bgr_std,
                trials,
                samples,
            }
        })
        .collect();
    Ok(SweepTable {
        parameter: parameter.to_string(),
        tag: tag.to_string(),
        rows,
    })
}
