//! Verifiable-reward GRPO machinery.
//!
//! * [`binary_reward`]: 1 iff the predicted point lies in the closed target box.
//! * [`group_advantages`]: `(R_i - mean) / std` with population std; a group
//!   whose rewards are all equal gets all-zero advantages.
//! * [`grpo_objective`]: per-token clipped surrogate
//!   `min(r·A, clip(r, 1-ε, 1+ε)·A)`, summed over a group's tokens and divided
//!   by the group's total token count, then averaged over groups.
//! * [`pass_rate_filter`]: keeps tasks whose pass rate lies in `(low, high]`.

pub mod sim;

use serde::{Deserialize, Serialize};

use crate::geometry::{NormBox, NormPoint};
use crate::schema::Difficulty;
use crate::{Error, Result, Scalar};

pub fn binary_reward<T: Scalar>(p: &NormPoint<T>, target: &NormBox<T>) -> u8 {
    u8::from(target.contains(p))
}

pub fn group_advantages<T: Scalar>(rewards: &[T]) -> Result<Vec<T>> {
    let g = rewards.len();
    if g < 2 {
        return Err(Error::GroupSize(g));
    }
    let n = T::of_usize(g);
    let mean = rewards.iter().fold(T::zero(), |a, &r| a + r) / n;
    let var = rewards
        .iter()
        .fold(T::zero(), |a, &r| a + (r - mean) * (r - mean))
        / n;
    let std = var.sqrt();
    if std == T::zero() {
        return Ok(vec![T::zero(); g]);
    }
    Ok(rewards.iter().map(|&r| (r - mean) / std).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout<T> {
    pub prediction: NormPoint<T>,
    /// Per-token log-probabilities under the current policy.
    pub logprob_new: Vec<T>,
    /// Per-token log-probabilities under the sampling policy.
    pub logprob_old: Vec<T>,
    /// Reference-policy log-probabilities, only needed when a KL penalty is on.
    pub logprob_ref: Option<Vec<T>>,
}

impl<T: Scalar> Rollout<T> {
    pub fn token_count(&self) -> usize {
        self.logprob_old.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupRollout<T> {
    pub task_id: String,
    pub target: NormBox<T>,
    pub rollouts: Vec<Rollout<T>>,
    pub rewards: Vec<u8>,
    /// One advantage per rollout, shared by all of its tokens.
    pub advantages: Vec<T>,
}

impl<T: Scalar> GroupRollout<T> {
    /// Scores every rollout against `target` and normalizes within the group.
    pub fn score(task_id: impl Into<String>, target: NormBox<T>, rollouts: Vec<Rollout<T>>) -> Result<Self> {
        let rewards: Vec<u8> = rollouts
            .iter()
            .map(|r| binary_reward(&r.prediction, &target))
            .collect();
        let as_scalar: Vec<T> = rewards.iter().map(|&r| T::of(r as f64)).collect();
        let advantages = group_advantages(&as_scalar)?;
        Ok(Self {
            task_id: task_id.into(),
            target,
            rollouts,
            rewards,
            advantages,
        })
    }

    pub fn group_size(&self) -> usize {
        self.rollouts.len()
    }

    pub fn mean_reward(&self) -> f64 {
        self.rewards.iter().map(|&r| r as f64).sum::<f64>() / self.rewards.len().max(1) as f64
    }

    fn check_shape(&self, need_ref: bool) -> Result<()> {
        let g = self.rollouts.len();
        if self.rewards.len() != g || self.advantages.len() != g {
            return Err(Error::Shape(format!(
                "group `{}`: {g} rollouts, {} rewards, {} advantages",
                self.task_id,
                self.rewards.len(),
                self.advantages.len()
            )));
        }
        for (i, r) in self.rollouts.iter().enumerate() {
            if r.logprob_new.len() != r.logprob_old.len() || r.logprob_old.is_empty() {
                return Err(Error::Shape(format!(
                    "group `{}` rollout {i}: {} new vs {} old log-probs",
                    self.task_id,
                    r.logprob_new.len(),
                    r.logprob_old.len()
                )));
            }
            if need_ref && r.logprob_ref.as_ref().map(Vec::len) != Some(r.logprob_old.len()) {
                return Err(Error::Shape(format!(
                    "group `{}` rollout {i}: KL penalty needs reference log-probs per token",
                    self.task_id
                )));
            }
        }
        Ok(())
    }
}

/// `min(r·A, clip(r, 1-ε, 1+ε)·A)` for one token.
pub fn clipped_term<T: Scalar>(ratio: T, advantage: T, epsilon: T) -> T {
    let clipped = ratio.max(T::one() - epsilon).min(T::one() + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Optional per-token KL penalty `β·(e^{ref-new} - (ref-new) - 1)`. Off by default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig<T> {
    pub epsilon: T,
    pub kl_beta: Option<T>,
}

/// Clipped surrogate without a KL term.
pub fn grpo_objective<T: Scalar>(groups: &[GroupRollout<T>], epsilon: T) -> Result<T> {
    grpo_objective_with(groups, &ObjectiveConfig { epsilon, kl_beta: None })
}

pub fn grpo_objective_with<T: Scalar>(groups: &[GroupRollout<T>], cfg: &ObjectiveConfig<T>) -> Result<T> {
    if !(cfg.epsilon > T::zero()) {
        return Err(Error::Validation(format!("epsilon must be positive, got {}", cfg.epsilon)));
    }
    if groups.is_empty() {
        return Ok(T::zero());
    }
    let mut total = T::zero();
    for g in groups {
        g.check_shape(cfg.kl_beta.is_some())?;
        let tokens: usize = g.rollouts.iter().map(Rollout::token_count).sum();
        let sum = g
            .rollouts
            .iter()
            .zip(&g.advantages)
            .flat_map(|(r, &adv)| {
                let refs = r.logprob_ref.as_deref();
                r.logprob_new
                    .iter()
                    .zip(&r.logprob_old)
                    .enumerate()
                    .map(move |(t, (&new, &old))| {
                        let term = clipped_term((new - old).exp(), adv, cfg.epsilon);
                        match (cfg.kl_beta, refs) {
                            (Some(beta), Some(refs)) => {
                                let d = refs[t] - new;
                                term - beta * (d.exp() - d - T::one())
                            }
                            _ => term,
                        }
                    })
            })
            .fold(T::zero(), |a, v| a + v);
        total = total + sum / T::of_usize(tokens);
    }
    Ok(total / T::of_usize(groups.len()))
}

/// Pass-rate window `(low, high]` for RL task selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PassRateWindow {
    pub low: f64,
    pub high: f64,
}

impl Default for PassRateWindow {
    fn default() -> Self {
        Self { low: 0.0, high: 0.75 }
    }
}

/// Keeps a task iff `low < passes / k <= high`. The strict lower bound drops
/// all-fail tasks, whose groups would have zero variance.
pub fn pass_rate_filter(passes: usize, k: usize, window: &PassRateWindow) -> bool {
    if k == 0 {
        return false;
    }
    let rate = passes as f64 / k as f64;
    window.low < rate && rate <= window.high
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumStage {
    pub buckets: Vec<Difficulty>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    pub stages: Vec<CurriculumStage>,
    pub pass_rate: PassRateWindow,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self::parse("easy:50,medium:50,hard:100").expect("default curriculum parses")
    }
}

impl CurriculumConfig {
    /// Parses `easy:50,medium:50,hard:100`; a stage may allow several buckets
    /// joined with `+`, e.g. `easy+medium:80`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut stages = Vec::new();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (names, steps) = part.split_once(':').ok_or_else(|| {
                Error::Validation(format!("curriculum stage `{part}` is not `bucket:steps`"))
            })?;
            let buckets = names
                .split('+')
                .map(str::parse)
                .collect::<Result<Vec<Difficulty>>>()?;
            let steps: usize = steps
                .trim()
                .parse()
                .map_err(|_| Error::Validation(format!("bad step count in `{part}`")))?;
            stages.push(CurriculumStage { buckets, steps });
        }
        let cfg = Self {
            stages,
            pass_rate: PassRateWindow::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config {
                path: "curriculum.stages".into(),
                msg: "at least one stage is required".into(),
            });
        }
        if let Some(i) = self.stages.iter().position(|s| s.buckets.is_empty()) {
            return Err(Error::Config {
                path: format!("curriculum.stages[{i}].buckets"),
                msg: "stage allows no bucket".into(),
            });
        }
        let PassRateWindow { low, high } = self.pass_rate;
        if !(0.0 <= low && low < high && high <= 1.0) {
            return Err(Error::Config {
                path: "curriculum.pass_rate".into(),
                msg: format!("need 0 <= low < high <= 1, got ({low}, {high})"),
            });
        }
        Ok(())
    }

    /// Truncates the schedule to `steps`, or stretches its last stage to reach it.
    pub fn with_total_steps(mut self, steps: usize) -> Self {
        let mut left = steps;
        for s in &mut self.stages {
            s.steps = s.steps.min(left);
            left -= s.steps;
        }
        if let Some(last) = self.stages.last_mut() {
            last.steps += left;
        }
        self.stages.retain(|s| s.steps > 0);
        self
    }

    pub fn total_steps(&self) -> usize {
        self.stages.iter().map(|s| s.steps).sum()
    }

    /// Stage active at `step` (0-based); the last stage persists past the end.
    pub fn stage_at(&self, step: usize) -> &CurriculumStage {
        let mut acc = 0;
        for s in &self.stages {
            acc += s.steps;
            if step < acc {
                return s;
            }
        }
        self.stages.last().expect("validated non-empty")
    }
}
