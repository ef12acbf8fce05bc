//! Desk-scale GRPO simulator with a mock pointer policy.
//!
//! Each task family owns a policy: an isotropic normal truncated to the unit
//! square, centered on `anchor + bias` with scale `sigma`. A task's anchor is
//! a noisy guess of its target center; the family-wide `bias` and `sigma` are
//! the learned parameters. A rollout emits two "tokens" (the x and y
//! coordinates) whose log-probabilities are the per-axis truncated-normal log
//! densities. Parameters ascend the clipped GRPO surrogate using a
//! central-difference gradient.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::{grpo_objective, pass_rate_filter, CurriculumConfig, GroupRollout, PassRateWindow, Rollout};
use crate::geometry::{NormBox, NormPoint};
use crate::schema::Difficulty;
use crate::{Error, Result};

fn std_normal() -> Normal {
    Normal::standard()
}

/// One axis of an isotropic normal truncated to `[0, 1]`. An infinite
/// `sigma` is the uniform distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedAxis {
    pub mean: f64,
    pub sigma: f64,
}

impl TruncatedAxis {
    fn bounds(&self) -> (f64, f64, f64) {
        let n = std_normal();
        let a = (0.0 - self.mean) / self.sigma;
        let b = (1.0 - self.mean) / self.sigma;
        (a, b, n.cdf(b) - n.cdf(a))
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if self.sigma.is_infinite() {
            return 0.0;
        }
        let (_, _, z) = self.bounds();
        let u = (x - self.mean) / self.sigma;
        std_normal().ln_pdf(u) - self.sigma.ln() - z.ln()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        if self.sigma.is_infinite() {
            return u;
        }
        let n = std_normal();
        let (a, _, z) = self.bounds();
        let p = (n.cdf(a) + u * z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        (self.mean + self.sigma * n.inverse_cdf(p)).clamp(0.0, 1.0)
    }

    /// Differential entropy in nats; 0 for the uniform case.
    pub fn entropy(&self) -> f64 {
        if self.sigma.is_infinite() {
            return 0.0;
        }
        let n = std_normal();
        let (a, b, z) = self.bounds();
        let base = (2.0 * std::f64::consts::PI * std::f64::consts::E).sqrt().ln() + self.sigma.ln() + z.ln();
        base + (a * n.pdf(a) - b * n.pdf(b)) / (2.0 * z)
    }
}

/// Isotropic pointer policy over the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPolicy {
    pub mean: NormPoint<f64>,
    pub sigma: f64,
}

impl PointPolicy {
    pub fn uniform() -> Self {
        Self {
            mean: NormPoint::new_unchecked(0.5, 0.5),
            sigma: f64::INFINITY,
        }
    }

    fn axes(&self) -> [TruncatedAxis; 2] {
        [
            TruncatedAxis { mean: self.mean.x, sigma: self.sigma },
            TruncatedAxis { mean: self.mean.y, sigma: self.sigma },
        ]
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> NormPoint<f64> {
        let [ax, ay] = self.axes();
        let x = ax.sample(rng);
        let y = ay.sample(rng);
        NormPoint::new_unchecked(x, y)
    }

    /// Per-token log densities of a point: `[ln p(x), ln p(y)]`.
    pub fn token_logprobs(&self, p: &NormPoint<f64>) -> Vec<f64> {
        let [ax, ay] = self.axes();
        vec![ax.ln_pdf(p.x), ay.ln_pdf(p.y)]
    }

    pub fn entropy(&self) -> f64 {
        self.axes().iter().map(TruncatedAxis::entropy).sum()
    }
}

/// Monte Carlo estimate of the expected binary reward of `policy` on `target`.
pub fn expected_reward<R: Rng>(policy: &PointPolicy, target: &NormBox<f64>, samples: usize, rng: &mut R) -> f64 {
    let hits = (0..samples)
        .filter(|_| target.contains(&policy.sample(rng)))
        .count();
    hits as f64 / samples.max(1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTask {
    pub id: String,
    pub target: NormBox<f64>,
    /// Where the policy aims before any learned bias.
    pub anchor: NormPoint<f64>,
    pub bucket: Difficulty,
    pub family: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskLine {
    id: String,
    target: [f64; 4],
    #[serde(default)]
    anchor: Option<[f64; 2]>,
    bucket: Difficulty,
    #[serde(default)]
    family: Option<String>,
}

impl SimTask {
    pub fn from_json_line(s: &str) -> Result<Self> {
        let t: TaskLine = serde_json::from_str(s)?;
        let target = NormBox::new(t.target[0], t.target[1], t.target[2], t.target[3])?;
        let anchor = match t.anchor {
            Some([x, y]) => NormPoint::new(x, y)?,
            None => target.center(),
        };
        Ok(Self {
            id: t.id,
            target,
            anchor,
            bucket: t.bucket,
            family: t.family.unwrap_or_else(|| "default".into()),
        })
    }

    pub fn to_json_line(&self) -> String {
        let b = &self.target;
        serde_json::to_string(&TaskLine {
            id: self.id.clone(),
            target: [b.x0, b.y0, b.x1, b.y1],
            anchor: Some([self.anchor.x, self.anchor.y]),
            bucket: self.bucket,
            family: Some(self.family.clone()),
        })
        .expect("task serializes")
    }
}

pub fn read_tasks(text: &str) -> Result<Vec<SimTask>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            SimTask::from_json_line(l).map_err(|e| Error::Line {
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Synthetic task set: one family whose anchors share a systematic offset
/// from the true centers, with box size shrinking by difficulty. Roughly
/// 30% easy, 30% medium, 40% hard.
pub fn synthetic_tasks(n: usize, seed: u64) -> Vec<SimTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = (0.08, -0.06);
    let n_easy = (n * 3).div_ceil(10);
    let n_medium = (n * 3) / 10;
    (0..n)
        .map(|i| {
            let bucket = if i < n_easy {
                Difficulty::Easy
            } else if i < n_easy + n_medium {
                Difficulty::Medium
            } else {
                Difficulty::Hard
            };
            let half = match bucket {
                Difficulty::Easy => 0.12,
                Difficulty::Medium => 0.06,
                Difficulty::Hard => 0.03,
            };
            let cx: f64 = rng.random_range(0.2..0.8);
            let cy: f64 = rng.random_range(0.2..0.8);
            let jitter = |rng: &mut ChaCha8Rng| -> f64 { rng.random_range(-0.01..0.01) };
            let ax = (cx + offset.0 + jitter(&mut rng)).clamp(0.0, 1.0);
            let ay = (cy + offset.1 + jitter(&mut rng)).clamp(0.0, 1.0);
            SimTask {
                id: format!("task-{i:03}"),
                target: NormBox::new_unchecked(cx - half, cy - half, cx + half, cy + half),
                anchor: NormPoint::new_unchecked(ax, ay),
                bucket,
                family: "default".into(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub group_size: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub learning_rate: f64,
    /// Optimizer passes over each sampled batch.
    pub inner_epochs: usize,
    /// Central-difference step for the numerical gradient.
    pub fd_step: f64,
    pub init_sigma: f64,
    pub min_sigma: f64,
    /// Norm clip on the preconditioned step, per family.
    pub max_grad_norm: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            epsilon: 0.2,
            seed: 1,
            learning_rate: 0.1,
            inner_epochs: 2,
            fd_step: 1e-5,
            init_sigma: 0.15,
            min_sigma: 0.005,
            max_grad_norm: 1.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str, m: &str| {
            Err(Error::Config {
                path: format!("rl.{k}"),
                msg: m.into(),
            })
        };
        if self.group_size < 2 {
            return bad("group_size", "must be at least 2");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon", "must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate", "must be positive");
        }
        if !(self.init_sigma > 0.0 && self.min_sigma > 0.0 && self.min_sigma <= self.init_sigma) {
            return bad("min_sigma", "need 0 < min_sigma <= init_sigma");
        }
        if !(self.fd_step > 0.0) {
            return bad("fd_step", "must be positive");
        }
        Ok(())
    }
}

/// Learned parameters of one family: `[bias_x, bias_y, ln sigma]`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct FamilyParams([f64; 3]);

impl FamilyParams {
    fn policy_for(&self, task: &SimTask) -> PointPolicy {
        let [bx, by, ls] = self.0;
        PointPolicy {
            mean: NormPoint::new_unchecked(
                (task.anchor.x + bx).clamp(0.0, 1.0),
                (task.anchor.y + by).clamp(0.0, 1.0),
            ),
            sigma: ls.exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub mean_reward: f64,
    pub policy_entropy: f64,
    pub objective: f64,
}

/// Learned parameters of one family at the end of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyState {
    pub bias_x: f64,
    pub bias_y: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
    pub families: BTreeMap<String, FamilyState>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,mean_reward,policy_entropy,objective\n");
        for r in &self.rows {
            writeln!(s, "{},{:.6},{:.6},{:.6}", r.step, r.mean_reward, r.policy_entropy, r.objective)
                .expect("writing to String");
        }
        s
    }

    /// Mean reward over rows `range`.
    pub fn mean_reward(&self, range: std::ops::Range<usize>) -> f64 {
        let rows = &self.rows[range];
        rows.iter().map(|r| r.mean_reward).sum::<f64>() / rows.len().max(1) as f64
    }

    /// Least-squares slope of policy entropy against step over the last `n` rows.
    pub fn entropy_slope(&self, n: usize) -> f64 {
        let rows = &self.rows[self.rows.len().saturating_sub(n)..];
        let k = rows.len() as f64;
        if rows.len() < 2 {
            return 0.0;
        }
        let mx = rows.iter().map(|r| r.step as f64).sum::<f64>() / k;
        let my = rows.iter().map(|r| r.policy_entropy).sum::<f64>() / k;
        let cov: f64 = rows.iter().map(|r| (r.step as f64 - mx) * (r.policy_entropy - my)).sum();
        let var: f64 = rows.iter().map(|r| (r.step as f64 - mx).powi(2)).sum();
        cov / var
    }
}

struct Sampled {
    task: usize,
    group: GroupRollout<f64>,
}

fn refresh_logprobs(batch: &mut [Sampled], tasks: &[SimTask], params: &BTreeMap<String, FamilyParams>) {
    for s in batch.iter_mut() {
        let task = &tasks[s.task];
        let policy = params[&task.family].policy_for(task);
        for r in &mut s.group.rollouts {
            r.logprob_new = policy.token_logprobs(&r.prediction);
        }
    }
}

fn surrogate(batch: &mut [Sampled], tasks: &[SimTask], params: &BTreeMap<String, FamilyParams>, eps: f64) -> Result<f64> {
    refresh_logprobs(batch, tasks, params);
    let groups: Vec<GroupRollout<f64>> = batch.iter().map(|s| s.group.clone()).collect();
    grpo_objective(&groups, eps)
}

/// Runs the curriculum for `curriculum.total_steps()` steps.
///
/// At each step the batch is every task whose bucket the active stage allows
/// (all tasks if none match). Each task gets `group_size` rollouts from the
/// current policy; the surrogate is then maximized for `inner_epochs`
/// gradient steps. The log's entropy is the mean policy entropy over all tasks.
pub fn simulate_training(tasks: &[SimTask], curriculum: &CurriculumConfig, cfg: &SimConfig) -> Result<TrainingLog> {
    cfg.validate()?;
    curriculum.validate()?;
    if tasks.is_empty() {
        return Err(Error::Validation("simulation needs at least one task".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params: BTreeMap<String, FamilyParams> = tasks
        .iter()
        .map(|t| (t.family.clone(), FamilyParams([0.0, 0.0, cfg.init_sigma.ln()])))
        .collect();
    let min_log_sigma = cfg.min_sigma.ln();
    let mut log = TrainingLog::default();

    for step in 0..curriculum.total_steps() {
        let stage = curriculum.stage_at(step);
        let mut pool: Vec<usize> = (0..tasks.len())
            .filter(|&i| stage.buckets.contains(&tasks[i].bucket))
            .collect();
        if pool.is_empty() {
            pool = (0..tasks.len()).collect();
        }

        let mut batch = Vec::with_capacity(pool.len());
        for &ti in &pool {
            let task = &tasks[ti];
            let policy = params[&task.family].policy_for(task);
            let rollouts = (0..cfg.group_size)
                .map(|_| {
                    let p = policy.sample(&mut rng);
                    let lp = policy.token_logprobs(&p);
                    Rollout {
                        prediction: p,
                        logprob_new: lp.clone(),
                        logprob_old: lp,
                        logprob_ref: None,
                    }
                })
                .collect();
            batch.push(Sampled {
                task: ti,
                group: GroupRollout::score(task.id.clone(), task.target, rollouts)?,
            });
        }
        let mean_reward = batch.iter().map(|s| s.group.mean_reward()).sum::<f64>() / batch.len() as f64;

        let families: Vec<String> = {
            let mut f: Vec<String> = batch.iter().map(|s| tasks[s.task].family.clone()).collect();
            f.sort();
            f.dedup();
            f
        };
        for _ in 0..cfg.inner_epochs {
            for fam in &families {
                let mut grad = [0.0; 3];
                for (k, g) in grad.iter_mut().enumerate() {
                    let base = params[fam];
                    let mut plus = base;
                    plus.0[k] += cfg.fd_step;
                    let mut minus = base;
                    minus.0[k] -= cfg.fd_step;
                    params.insert(fam.clone(), plus);
                    let jp = surrogate(&mut batch, tasks, &params, cfg.epsilon)?;
                    params.insert(fam.clone(), minus);
                    let jm = surrogate(&mut batch, tasks, &params, cfg.epsilon)?;
                    params.insert(fam.clone(), base);
                    *g = (jp - jm) / (2.0 * cfg.fd_step);
                }
                // diagonal Fisher preconditioning: sigma² for the mean, 1/2 for ln sigma
                let p = params.get_mut(fam).expect("family present");
                let var = (2.0 * p.0[2]).exp();
                let step = [grad[0] * var, grad[1] * var, grad[2] / 2.0];
                let norm = step.iter().map(|g| g * g).sum::<f64>().sqrt();
                let shrink = if norm > cfg.max_grad_norm { cfg.max_grad_norm / norm } else { 1.0 };
                for (v, g) in p.0.iter_mut().zip(step) {
                    *v += cfg.learning_rate * shrink * g;
                }
                p.0[2] = p.0[2].max(min_log_sigma);
            }
        }
        let objective = surrogate(&mut batch, tasks, &params, cfg.epsilon)?;
        let policy_entropy = tasks
            .iter()
            .map(|t| params[&t.family].policy_for(t).entropy())
            .sum::<f64>()
            / tasks.len() as f64;

        log.rows.push(LogRow {
            step,
            mean_reward,
            policy_entropy,
            objective,
        });
    }
    log.families = params
        .into_iter()
        .map(|(f, p)| {
            let [bias_x, bias_y, ls] = p.0;
            (f, FamilyState { bias_x, bias_y, sigma: ls.exp() })
        })
        .collect();
    Ok(log)
}

/// Pass-rate screening with the initial policy: `k` rollouts per task, kept
/// iff the pass rate lies in the window. Returns `(kept, dropped)`.
pub fn select_by_pass_rate(
    tasks: &[SimTask],
    init_sigma: f64,
    k: usize,
    window: &PassRateWindow,
    seed: u64,
) -> (Vec<SimTask>, Vec<SimTask>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = FamilyParams([0.0, 0.0, init_sigma.ln()]);
    tasks.iter().cloned().partition(|t| {
        let policy = init.policy_for(t);
        let passes = (0..k).filter(|_| t.target.contains(&policy.sample(&mut rng))).count();
        pass_rate_filter(passes, k, window)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sharp_policy_always_hits() {
        let target = NormBox::new(0.4, 0.4, 0.6, 0.6).unwrap();
        let policy = PointPolicy {
            mean: target.center(),
            sigma: 1e-6,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(expected_reward(&policy, &target, 2000, &mut rng), 1.0);
    }

    #[test]
    fn uniform_policy_hits_with_box_area() {
        let target = NormBox::new(0.1, 0.2, 0.4, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = expected_reward(&PointPolicy::uniform(), &target, 40_000, &mut rng);
        assert_abs_diff_eq!(r, target.area(), epsilon = 0.01);
    }

    #[test]
    fn truncated_density_integrates_to_one() {
        let ax = TruncatedAxis { mean: 0.3, sigma: 0.2 };
        let n = 20_000;
        let integral: f64 = (0..n).map(|i| ax.ln_pdf((i as f64 + 0.5) / n as f64).exp()).sum::<f64>() / n as f64;
        assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn truncated_entropy_matches_quadrature() {
        let ax = TruncatedAxis { mean: 0.8, sigma: 0.3 };
        let n = 200_000;
        let h: f64 = (0..n)
            .map(|i| {
                let lp = ax.ln_pdf((i as f64 + 0.5) / n as f64);
                -lp.exp() * lp
            })
            .sum::<f64>()
            / n as f64;
        assert_abs_diff_eq!(ax.entropy(), h, epsilon = 1e-6);
        assert_eq!(TruncatedAxis { mean: 0.5, sigma: f64::INFINITY }.entropy(), 0.0);
    }

    #[test]
    fn samples_stay_in_unit_square() {
        let p = PointPolicy {
            mean: NormPoint::new_unchecked(0.99, 0.01),
            sigma: 0.5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let s = p.sample(&mut rng);
            assert!((0.0..=1.0).contains(&s.x) && (0.0..=1.0).contains(&s.y));
        }
    }

    #[test]
    fn task_lines_round_trip() {
        let tasks = synthetic_tasks(5, 1);
        let text: String = tasks.iter().map(|t| t.to_json_line() + "\n").collect();
        assert_eq!(read_tasks(&text).unwrap(), tasks);
        assert!(read_tasks("{\"id\":\"x\"}\n").is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        let tasks = synthetic_tasks(4, 2);
        let cur = CurriculumConfig::parse("easy:5,hard:5").unwrap();
        let cfg = SimConfig::default();
        let a = simulate_training(&tasks, &cur, &cfg).unwrap();
        let b = simulate_training(&tasks, &cur, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 10);
        assert!(a.to_csv().starts_with("step,mean_reward,policy_entropy,objective\n0,"));
    }

    #[test]
    fn pass_rate_selection_partitions() {
        let tasks = synthetic_tasks(10, 4);
        let (kept, dropped) = select_by_pass_rate(&tasks, 0.15, 8, &PassRateWindow::default(), 1);
        assert_eq!(kept.len() + dropped.len(), tasks.len());
    }
}
