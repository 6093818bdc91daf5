//! Gated trajectory reward, group-normalized advantages, the KL surrogate and
//! the GRPO objective value.
//!
//! The reward of a trajectory is
//!
//! ```text
//! R = R_acc + R_format + lambda * R_risk + R_tool
//! R_risk = -alpha * [FP] - gamma * [FN]            (Fake is the positive class)
//! R_tool = +r_tool_plus  if a tool was used and R_acc > 0
//!          -r_tool_minus if a tool was used and R_acc <= 0
//!          0             otherwise
//! ```
//!
//! Advantages standardize rewards within a group by the population standard
//! deviation. The objective is evaluated as a diagnostic only:
//!
//! ```text
//! J = mean_i(ratio_i * A_i) - beta * mean_i(kl_i)
//! ratio_i = exp(logp_policy_i - logp_rollout_i)
//! kl_i    = r - ln r - 1,  r = exp(logp_ref_i - logp_policy_i)
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parser::FormatVerdict;
use crate::types::{Label, RewardConfig, Trajectory, TrajectoryGroup, TrajectoryLogProbs};

/// Largest exponent accepted before `exp` is reported as saturated.
pub const EXP_LIMIT: f64 = 700.0;
/// Groups whose reward spread is below this are treated as all-equal.
pub const DEGENERATE_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("GROUP_TOO_SMALL: need at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("OVERFLOW: exponent {0} exceeds {EXP_LIMIT}")]
    Overflow(f64),
    #[error("MISSING_LOGPROBS: trajectory {0} has no log-probabilities")]
    MissingLogprobs(usize),
    #[error("LENGTH_MISMATCH: {0}")]
    LengthMismatch(String),
    #[error("NON_FINITE: {0}")]
    NonFinite(String),
}

impl RewardError {
    pub fn code(&self) -> &'static str {
        match self {
            RewardError::GroupTooSmall(_) => "GROUP_TOO_SMALL",
            RewardError::Overflow(_) => "OVERFLOW",
            RewardError::MissingLogprobs(_) => "MISSING_LOGPROBS",
            RewardError::LengthMismatch(_) => "LENGTH_MISMATCH",
            RewardError::NonFinite(_) => "NON_FINITE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_acc: f64,
    pub r_format: f64,
    /// Before scaling by lambda.
    pub r_risk: f64,
    pub r_tool: f64,
    pub total: f64,
    pub is_fp: bool,
    pub is_fn: bool,
    pub tool_used: bool,
}

pub fn reward_acc(verdict: Option<Label>, truth: Label, cfg: &RewardConfig) -> f64 {
    if verdict == Some(truth) {
        cfg.r_acc_correct
    } else {
        0.0
    }
}

pub fn is_false_positive(verdict: Option<Label>, truth: Label) -> bool {
    verdict == Some(Label::Fake) && truth == Label::Real
}

pub fn is_false_negative(verdict: Option<Label>, truth: Label) -> bool {
    verdict == Some(Label::Real) && truth == Label::Fake
}

/// An absent verdict is neither FP nor FN.
pub fn reward_risk(verdict: Option<Label>, truth: Label, alpha: f64, gamma: f64) -> f64 {
    if is_false_positive(verdict, truth) {
        -alpha
    } else if is_false_negative(verdict, truth) {
        -gamma
    } else {
        0.0
    }
}

pub fn reward_format(fv: &FormatVerdict, cfg: &RewardConfig) -> f64 {
    if fv.well_formed {
        cfg.r_format_valid
    } else {
        0.0
    }
}

pub fn reward_tool(tool_used: bool, r_acc: f64, cfg: &RewardConfig) -> f64 {
    match (tool_used, r_acc > 0.0) {
        (true, true) => cfg.r_tool_plus,
        (true, false) => -cfg.r_tool_minus,
        (false, _) => 0.0,
    }
}

/// Scores the components that determine the reward directly; the trajectory
/// wrapper below only extracts them.
pub fn reward_from_parts(
    verdict: Option<Label>,
    truth: Label,
    format: &FormatVerdict,
    tool_used: bool,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let r_acc = reward_acc(verdict, truth, cfg);
    let r_format = reward_format(format, cfg);
    let r_risk = reward_risk(verdict, truth, cfg.alpha_fp, cfg.gamma_fn);
    let r_tool = reward_tool(tool_used, r_acc, cfg);
    RewardBreakdown {
        r_acc,
        r_format,
        r_risk,
        r_tool,
        total: r_acc + r_format + cfg.lambda_risk * r_risk + r_tool,
        is_fp: is_false_positive(verdict, truth),
        is_fn: is_false_negative(verdict, truth),
        tool_used,
    }
}

pub fn total_reward(t: &Trajectory, truth: Label, cfg: &RewardConfig) -> RewardBreakdown {
    reward_from_parts(t.verdict, truth, &t.format_verdict, t.tool_used(), cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageVector {
    pub values: Vec<f64>,
    pub degenerate: bool,
}

/// `(R_i - mean) / std` with the population standard deviation. All-equal
/// groups get zero advantages instead of a division by ~0.
pub fn group_advantages(rewards: &[f64]) -> Result<AdvantageVector, RewardError> {
    let n = rewards.len();
    if n < 2 {
        return Err(RewardError::GroupTooSmall(n));
    }
    if let Some(bad) = rewards.iter().find(|r| !r.is_finite()) {
        return Err(RewardError::NonFinite(format!("reward {bad}")));
    }
    let mean = rewards.iter().sum::<f64>() / n as f64;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std < DEGENERATE_STD {
        return Ok(AdvantageVector {
            values: vec![0.0; n],
            degenerate: true,
        });
    }
    Ok(AdvantageVector {
        values: rewards.iter().map(|r| (r - mean) / std).collect(),
        degenerate: false,
    })
}

/// `r - ln r - 1` with `r = exp(logp_ref - logp_policy)`, evaluated as
/// `expm1(d) - d` on the log difference `d`.
pub fn kl_surrogate(logp_ref: f64, logp_policy: f64) -> Result<f64, RewardError> {
    if !logp_ref.is_finite() || !logp_policy.is_finite() {
        return Err(RewardError::NonFinite(format!("log-probs ({logp_ref}, {logp_policy})")));
    }
    let d = logp_ref - logp_policy;
    if d > EXP_LIMIT {
        return Err(RewardError::Overflow(d));
    }
    Ok((d.exp_m1() - d).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerTrajectoryTerms {
    pub ratio: f64,
    pub weighted_adv: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoDiagnostics {
    pub objective: f64,
    pub per_traj: Vec<PerTrajectoryTerms>,
}

pub fn importance_ratio(lp: &TrajectoryLogProbs) -> Result<f64, RewardError> {
    let d = lp.sum_logp_policy - lp.sum_logp_rollout;
    if !d.is_finite() {
        return Err(RewardError::NonFinite(format!("log-ratio {d}")));
    }
    if d > EXP_LIMIT {
        return Err(RewardError::Overflow(d));
    }
    Ok(d.exp())
}

/// Objective value from advantages and per-trajectory log-masses.
pub fn grpo_objective_from_parts(
    advantages: &[f64],
    logprobs: &[Option<TrajectoryLogProbs>],
    beta: f64,
) -> Result<GrpoDiagnostics, RewardError> {
    let g = advantages.len();
    if g != logprobs.len() {
        return Err(RewardError::LengthMismatch(format!(
            "{g} advantages vs {} log-prob records",
            logprobs.len()
        )));
    }
    if g == 0 {
        return Err(RewardError::GroupTooSmall(0));
    }
    let mut per_traj = Vec::with_capacity(g);
    for (i, (a, lp)) in advantages.iter().zip(logprobs).enumerate() {
        let lp = lp.ok_or(RewardError::MissingLogprobs(i))?;
        let ratio = importance_ratio(&lp)?;
        let kl = kl_surrogate(lp.sum_logp_reference, lp.sum_logp_policy)?;
        per_traj.push(PerTrajectoryTerms {
            ratio,
            weighted_adv: ratio * a,
            kl,
        });
    }
    let n = g as f64;
    let surrogate = per_traj.iter().map(|t| t.weighted_adv).sum::<f64>() / n;
    let kl = per_traj.iter().map(|t| t.kl).sum::<f64>() / n;
    Ok(GrpoDiagnostics {
        objective: surrogate - beta * kl,
        per_traj,
    })
}

pub fn grpo_objective(group: &TrajectoryGroup, beta: f64) -> Result<GrpoDiagnostics, RewardError> {
    if group.advantages.len() != group.trajectories.len() {
        return Err(RewardError::LengthMismatch("group has not been scored".into()));
    }
    let lps: Vec<_> = group.trajectories.iter().map(|t| t.token_logprobs).collect();
    grpo_objective_from_parts(&group.advantages, &lps, beta)
}

/// Fills `rewards` and `advantages` of a group in place.
pub fn score_group(group: &mut TrajectoryGroup, cfg: &RewardConfig) -> Result<(Vec<RewardBreakdown>, bool), RewardError> {
    let breakdowns: Vec<_> = group
        .trajectories
        .iter()
        .map(|t| total_reward(t, group.truth, cfg))
        .collect();
    let rewards: Vec<f64> = breakdowns.iter().map(|b| b.total).collect();
    let adv = group_advantages(&rewards)?;
    group.rewards = rewards;
    group.advantages = adv.values;
    Ok((breakdowns, adv.degenerate))
}
