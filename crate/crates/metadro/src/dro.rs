//! Group-robust objectives: per-group loss partition, worst-group selection,
//! count-based group adjustment, l2 regularization, and global group stats.

use std::collections::BTreeMap;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DroMode {
    Erm,
    Dro,
    GroupAdjustedDro,
}

impl std::str::FromStr for DroMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erm" => Ok(DroMode::Erm),
            "dro" => Ok(DroMode::Dro),
            "adjusted" | "group_adjusted_dro" => Ok(DroMode::GroupAdjustedDro),
            other => Err(Error::Validation(format!("unknown dro mode '{}'", other))),
        }
    }
}

/// Whether the 1/√n_g adjustment reads cumulative training counts or only the
/// current batch's counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    Cumulative,
    Batch,
}

#[derive(Debug, Clone, Copy)]
pub struct DroConfig {
    pub mode: DroMode,
    /// l2 coefficient λ ≥ 0 over all trainable parameters.
    pub l2_coeff: f64,
    /// Scale C on the 1/√n_g adjustment.
    pub adjust_scale: f64,
    pub count_mode: CountMode,
}

impl Default for DroConfig {
    fn default() -> Self {
        DroConfig {
            mode: DroMode::Erm,
            l2_coeff: 0.0,
            adjust_scale: 1.0,
            count_mode: CountMode::Cumulative,
        }
    }
}

impl DroConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.l2_coeff.is_finite() || self.l2_coeff < 0.0 {
            return Err(Error::Validation("l2_coeff must be finite and >= 0".into()));
        }
        if !self.adjust_scale.is_finite() || self.adjust_scale < 0.0 {
            return Err(Error::Validation("adjust_scale must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// One group's aggregated contribution to a meta batch.
#[derive(Debug, Clone)]
pub struct GroupLoss {
    /// Tape node holding the group's mean query loss.
    pub mean_var: Var,
    pub mean_value: f64,
    pub count: u64,
}

/// Per-group mean losses for one meta batch, aggregated across all tasks.
#[derive(Debug, Clone, Default)]
pub struct GroupBatch {
    pub groups: BTreeMap<String, GroupLoss>,
}

/// Cumulative per-group loss sums and query counts over training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupStats {
    sums: BTreeMap<String, (f64, u64)>,
}

impl GroupStats {
    pub fn new() -> Self {
        GroupStats::default()
    }

    pub fn count(&self, group: &str) -> u64 {
        self.sums.get(group).map(|(_, n)| *n).unwrap_or(0)
    }

    pub fn mean_loss(&self, group: &str) -> Option<f64> {
        self.sums.get(group).and_then(|(s, n)| if *n > 0 { Some(s / *n as f64) } else { None })
    }

    /// (group, count, mean loss) rows in lexicographic group order.
    pub fn rows(&self) -> Vec<(String, u64, f64)> {
        self.sums
            .iter()
            .filter(|(_, (_, n))| *n > 0)
            .map(|(g, (s, n))| (g.clone(), *n, s / *n as f64))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.sums.values().all(|(_, n)| *n == 0)
    }

    /// Build stats directly from (group, count, loss sum) entries.
    pub fn from_entries(entries: impl IntoIterator<Item = (String, u64, f64)>) -> Self {
        let mut sums = BTreeMap::new();
        for (g, n, s) in entries {
            let e = sums.entry(g).or_insert((0.0, 0));
            e.0 += s;
            e.1 += n;
        }
        GroupStats { sums }
    }
}

/// Group per-example losses by group code and average within each group,
/// aggregated across every task in the meta batch.
pub fn partition_by_group(tape: &mut Tape, losses: &[(String, Var)]) -> Result<GroupBatch> {
    if losses.is_empty() {
        return Err(Error::Validation("partition_by_group on empty loss list".into()));
    }
    let mut grouped: BTreeMap<String, Vec<Var>> = BTreeMap::new();
    for (g, v) in losses {
        grouped.entry(g.clone()).or_default().push(*v);
    }
    let mut groups = BTreeMap::new();
    for (g, vars) in grouped {
        let mut acc = vars[0];
        for v in &vars[1..] {
            acc = tape.add(acc, *v)?;
        }
        let mean = tape.scale(acc, 1.0 / vars.len() as f64);
        let mean_scalar = tape.reshape(mean, &[])?;
        groups.insert(
            g,
            GroupLoss {
                mean_var: mean_scalar,
                mean_value: tape.value(mean_scalar).item()?,
                count: vars.len() as u64,
            },
        );
    }
    Ok(GroupBatch { groups })
}

/// Fold a batch's group contributions into the cumulative stats. Pure update:
/// the input stats are left untouched.
pub fn update_stats(stats: &GroupStats, batch: &GroupBatch) -> GroupStats {
    let mut sums = stats.sums.clone();
    for (g, gl) in &batch.groups {
        let e = sums.entry(g.clone()).or_insert((0.0, 0));
        e.0 += gl.mean_value * gl.count as f64;
        e.1 += gl.count;
    }
    GroupStats { sums }
}

/// The training objective for one meta batch, and the selected (argmax) group
/// when the mode is a robust one.
///
/// - `erm`: query-count-weighted mean over all groups (the plain mean over
///   all query examples).
/// - `dro`: the largest per-group mean loss.
/// - `group_adjusted_dro`: max over groups of mean loss + C/√n_g, with n_g
///   read from `stats`, which must already include the current batch.
///
/// λ·Σ‖θ‖² is added afterwards, so regularization never changes the selected
/// group. Ties select the lexicographically smallest group.
pub fn robust_objective(
    tape: &mut Tape,
    batch: &GroupBatch,
    stats: &GroupStats,
    config: &DroConfig,
    params: &[Var],
) -> Result<(Var, Option<String>)> {
    config.validate()?;
    if batch.groups.is_empty() {
        return Err(Error::Validation("robust_objective on empty group map".into()));
    }
    let (mut objective, selected) = match config.mode {
        DroMode::Erm => {
            let total: u64 = batch.groups.values().map(|g| g.count).sum();
            let mut acc: Option<Var> = None;
            for gl in batch.groups.values() {
                let w = tape.scale(gl.mean_var, gl.count as f64 / total as f64);
                acc = Some(match acc {
                    None => w,
                    Some(a) => tape.add(a, w)?,
                });
            }
            (acc.unwrap(), None)
        }
        DroMode::Dro | DroMode::GroupAdjustedDro => {
            let mut best: Option<(&String, f64, Var)> = None;
            for (g, gl) in &batch.groups {
                let score = match config.mode {
                    DroMode::Dro => gl.mean_value,
                    _ => {
                        let n_g = match config.count_mode {
                            CountMode::Cumulative => stats.count(g),
                            CountMode::Batch => gl.count,
                        };
                        assert!(n_g >= 1, "group '{}' has zero count after update", g);
                        gl.mean_value + config.adjust_scale / (n_g as f64).sqrt()
                    }
                };
                // BTreeMap order makes strict '>' pick the lexicographically
                // smallest group among ties.
                if best.as_ref().map_or(true, |(_, s, _)| score > *s) {
                    best = Some((g, score, gl.mean_var));
                }
            }
            let (g, score, var) = best.unwrap();
            let adjustment = score - tape.value(var).item()?;
            let obj = if adjustment != 0.0 {
                let c = tape.constant(crate::autodiff::Tensor::scalar(adjustment));
                tape.add(var, c)?
            } else {
                var
            };
            (obj, Some(g.clone()))
        }
    };
    if config.l2_coeff > 0.0 {
        let mut reg: Option<Var> = None;
        for p in params {
            let sq = tape.mul(*p, *p)?;
            let s = tape.sum_all(sq);
            reg = Some(match reg {
                None => s,
                Some(r) => tape.add(r, s)?,
            });
        }
        if let Some(r) = reg {
            let scaled = tape.scale(r, config.l2_coeff);
            let scaled = tape.reshape(scaled, tape.shape(objective).to_vec().as_slice())?;
            objective = tape.add(objective, scaled)?;
        }
    }
    Ok((objective, selected))
}

/// Worst, best, and middle groups by running mean loss. Middle is the lower
/// median. Ties break lexicographically.
pub fn rank_groups(stats: &GroupStats) -> Result<(String, String, String)> {
    let mut rows = stats.rows();
    if rows.is_empty() {
        return Err(Error::Ranking("no group has any recorded queries".into()));
    }
    // Sort ascending by mean loss, then label.
    rows.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap().then_with(|| a.0.cmp(&b.0)));
    let best = rows.first().unwrap().0.clone();
    let middle = rows[(rows.len() - 1) / 2].0.clone();
    // Worst: maximum mean; among ties, the lexicographically smallest label.
    let max_mean = rows.last().unwrap().2;
    let worst = rows
        .iter()
        .filter(|r| r.2 == max_mean)
        .map(|r| r.0.clone())
        .min()
        .unwrap();
    Ok((worst, best, middle))
}
