use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CURVE_HEADER: &str = "update,env_steps,mean_episode_reward,solved_fraction,energy,mean_entropy,wall_time_s";

/// One learning-curve sample, written after every update.
///
/// Episode statistics cover episodes that ended during the update's rollout
/// and are `NaN` when none did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub update: usize,
    pub env_steps: usize,
    pub mean_episode_reward: f64,
    pub solved_fraction: f64,
    pub energy: f64,
    pub mean_entropy: f64,
    pub wall_time_s: f64,
}

impl CurveRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.update,
            self.env_steps,
            self.mean_episode_reward,
            self.solved_fraction,
            self.energy,
            self.mean_entropy,
            self.wall_time_s
        )
    }
}

pub fn write_curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn read_curve_csv(text: &str) -> Result<Vec<CurveRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CURVE_HEADER) {
        return Err(Error::Config("learning curve: unexpected header".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let bad = |m: String| Error::ConfigParse {
                line: i + 2,
                column: 0,
                message: m,
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(format!("expected 7 fields, found {}", f.len())));
            }
            let u = |s: &str| s.parse::<usize>().map_err(|e| bad(e.to_string()));
            let x = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
            Ok(CurveRow {
                update: u(f[0])?,
                env_steps: u(f[1])?,
                mean_episode_reward: x(f[2])?,
                solved_fraction: x(f[3])?,
                energy: x(f[4])?,
                mean_entropy: x(f[5])?,
                wall_time_s: x(f[6])?,
            })
        })
        .collect()
}
