//! Supervised pre-training on teacher labels and PPO fine-tuning against a
//! greedy self-critical baseline.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Adam, Tape};
use crate::env::{legal_actions, EnvState};
use crate::error::{CarpError, Result};
use crate::model::{rollout, rollout_from, DecodeMode, InstanceContext, ModelConfig, Policy};
use crate::teacher::LabelSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub shuffle_seed: u64,
}

impl Default for SlConfig {
    fn default() -> Self {
        SlConfig {
            batch_size: 128,
            epochs: 10,
            learning_rate: 1e-4,
            shuffle_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoConfig {
    pub batch_size: usize,
    pub episodes: usize,
    pub clip_epsilon: f64,
    /// Fixed at 1; kept for completeness of the configuration.
    pub gamma: f64,
    pub inner_epochs: usize,
    /// Number of test-pool instances used to compare the two policies.
    pub eval_pool: usize,
    pub learning_rate: f64,
    pub constrained: bool,
    /// When set, the sampled trajectory from `s` starts with the stored
    /// action `a`, so the advantage depends on the action being reinforced.
    /// When unset, the trajectory is sampled freely from `s`.
    pub anchor_action: bool,
    /// Finish the trajectory from `s` greedily under `pi_theta` instead of
    /// sampling it.
    pub greedy_continuation: bool,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            batch_size: 64,
            episodes: 200,
            clip_epsilon: 0.1,
            gamma: 1.0,
            inner_epochs: 1,
            eval_pool: 64,
            learning_rate: 1e-4,
            constrained: true,
            anchor_action: true,
            greedy_continuation: false,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CarpError::InvalidInstance(format!("ppo config: {m}")));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip_epsilon must lie in (0, 1)");
        }
        if self.gamma != 1.0 {
            return bad("gamma must be 1");
        }
        if self.batch_size == 0 || self.inner_epochs == 0 {
            return bad("batch_size and inner_epochs must be positive");
        }
        Ok(())
    }
}

/// One structured training log line.
#[derive(Debug, Clone, PartialEq)]
pub enum LogRecord {
    SlEpoch {
        epoch: usize,
        loss: f64,
        accuracy: f64,
        samples: usize,
    },
    SlSkipped {
        instance: String,
        reason: String,
    },
    SlRestart {
        seed: u64,
        accuracy: f64,
    },
    PpoEpisode {
        episode: usize,
        loss: f64,
        mean_advantage: f64,
        candidate_cost: f64,
        baseline_cost: f64,
        swaps: usize,
    },
}

impl fmt::Display for LogRecord {
    /// One JSON object per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogRecord::SlEpoch {
                epoch,
                loss,
                accuracy,
                samples,
            } => write!(
                f,
                r#"{{"stage":"sl","epoch":{epoch},"loss":{loss:.6},"accuracy":{accuracy:.4},"samples":{samples}}}"#
            ),
            LogRecord::SlSkipped { instance, reason } => write!(
                f,
                r#"{{"stage":"sl","skipped":"{}","reason":"{}"}}"#,
                instance.replace('"', "'"),
                reason.replace('"', "'")
            ),
            LogRecord::SlRestart { seed, accuracy } => {
                write!(f, r#"{{"stage":"sl","restart_seed":{seed},"selection_accuracy":{accuracy:.4}}}"#)
            }
            LogRecord::PpoEpisode {
                episode,
                loss,
                mean_advantage,
                candidate_cost,
                baseline_cost,
                swaps,
            } => write!(
                f,
                r#"{{"stage":"rl","episode":{episode},"loss":{loss:.6},"mean_advantage":{mean_advantage:.3},"candidate_cost":{candidate_cost:.3},"baseline_cost":{baseline_cost:.3},"swaps":{swaps}}}"#
            ),
        }
    }
}

/// A labeled decision: instance index, state before the step, target arc.
#[derive(Debug, Clone)]
pub struct LabeledStep {
    pub instance: usize,
    pub state: EnvState,
    pub action: usize,
}

/// Replays each label against its instance, dropping forced depot returns.
/// Labels that fail to replay are skipped and reported.
pub fn labeled_steps(
    contexts: &[InstanceContext],
    labels: &[LabelSet],
    log: &mut dyn FnMut(LogRecord),
) -> Vec<LabeledStep> {
    let mut out = Vec::new();
    for (i, (ctx, label)) in contexts.iter().zip(labels).enumerate() {
        match label.states(&ctx.graph) {
            Ok(states) => {
                for (state, &action) in states.into_iter().zip(&label.actions) {
                    if state.forced_action().is_none() {
                        out.push(LabeledStep { instance: i, state, action });
                    }
                }
            }
            Err(e) => log(LogRecord::SlSkipped {
                instance: label.instance_name.clone(),
                reason: e.to_string(),
            }),
        }
    }
    out
}

/// Cross-entropy of one step; gradients are added to the policy scaled by
/// `weight`. Returns the loss and whether the argmax matches the target.
fn sl_step(policy: &mut Policy, ctx: &InstanceContext, step: &LabeledStep, weight: f64) -> Result<(f64, bool)> {
    let mask = legal_actions(&step.state, &ctx.graph, true);
    let mut tape = Tape::new();
    let logp = policy.forward(&mut tape, ctx, &step.state, &mask)?;
    let correct = argmax(&tape.value(logp).data) == step.action;
    let pick = tape.pick(logp, 0, step.action)?;
    let loss = tape.scale(pick, -1.0);
    let value = tape.scalar(loss);
    tape.backward(loss)?;
    policy.params.accumulate(&tape, weight);
    Ok((value, correct))
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlReport {
    pub epoch_loss: Vec<f64>,
    pub epoch_accuracy: Vec<f64>,
    pub samples: usize,
}

/// Minimizes the mean step cross-entropy with Adam over shuffled minibatches.
pub fn pretrain_sl(
    policy: &mut Policy,
    contexts: &[InstanceContext],
    labels: &[LabelSet],
    config: SlConfig,
    log: &mut dyn FnMut(LogRecord),
) -> Result<SlReport> {
    let steps = labeled_steps(contexts, labels, log);
    let mut run = SlRun::new(policy.clone(), steps.len(), config);
    run.epochs(contexts, &steps, config.epochs, log)?;
    *policy = run.policy;
    Ok(run.report)
}

/// A policy part-way through supervised training, with its optimizer state.
struct SlRun {
    policy: Policy,
    adam: Adam,
    config: SlConfig,
    order: Vec<usize>,
    report: SlReport,
}

impl SlRun {
    fn new(mut policy: Policy, samples: usize, config: SlConfig) -> SlRun {
        let adam = Adam::new(&policy.params, config.learning_rate);
        policy.params.zero_grad();
        SlRun {
            policy,
            adam,
            config,
            order: (0..samples).collect(),
            report: SlReport {
                epoch_loss: Vec::new(),
                epoch_accuracy: Vec::new(),
                samples,
            },
        }
    }

    fn epochs(
        &mut self,
        contexts: &[InstanceContext],
        steps: &[LabeledStep],
        count: usize,
        log: &mut dyn FnMut(LogRecord),
    ) -> Result<()> {
        let batch = self.config.batch_size.max(1);
        for _ in 0..count {
            let epoch = self.report.epoch_loss.len();
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.shuffle_seed.wrapping_add(epoch as u64));
            self.order.shuffle(&mut rng);
            let (mut total, mut hits) = (0.0, 0usize);
            for chunk in self.order.chunks(batch) {
                let w = 1.0 / chunk.len() as f64;
                for &k in chunk {
                    let s = &steps[k];
                    let (l, ok) = sl_step(&mut self.policy, &contexts[s.instance], s, w)?;
                    total += l;
                    hits += ok as usize;
                }
                self.adam.step(&mut self.policy.params);
            }
            let n = steps.len().max(1) as f64;
            self.report.epoch_loss.push(total / n);
            self.report.epoch_accuracy.push(hits as f64 / n);
            log(LogRecord::SlEpoch {
                epoch: epoch + 1,
                loss: total / n,
                accuracy: hits as f64 / n,
                samples: steps.len(),
            });
        }
        Ok(())
    }
}

/// Outcome of [`pretrain_sl_restarts`].
#[derive(Debug, Clone, PartialEq)]
pub struct RestartReport {
    /// Initialization seed of each candidate.
    pub seeds: Vec<u64>,
    /// Selection-set teacher-match accuracy of each candidate after the probe.
    pub accuracies: Vec<f64>,
    pub chosen: usize,
    pub training: SlReport,
}

/// Supervised training from several random initializations. Candidate `r`
/// is initialized and shuffled with seed `shuffle_seed + r` and trained for
/// `probe_epochs`; the one with the highest teacher-match accuracy on the
/// selection set (earliest on ties) then finishes the remaining epochs with
/// its optimizer state intact. One restart is plain [`pretrain_sl`] from a
/// policy seeded with `shuffle_seed`.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_sl_restarts(
    model: ModelConfig,
    contexts: &[InstanceContext],
    labels: &[LabelSet],
    config: SlConfig,
    restarts: usize,
    probe_epochs: usize,
    selection: (&[InstanceContext], &[LabelSet]),
    log: &mut dyn FnMut(LogRecord),
) -> Result<(Policy, RestartReport)> {
    if restarts == 0 {
        return Err(CarpError::InvalidInstance("at least one restart is needed".into()));
    }
    let steps = labeled_steps(contexts, labels, log);
    let probe = probe_epochs.min(config.epochs);
    let mut best: Option<(f64, SlRun)> = None;
    let mut report = RestartReport {
        seeds: Vec::new(),
        accuracies: Vec::new(),
        chosen: 0,
        training: SlReport {
            epoch_loss: Vec::new(),
            epoch_accuracy: Vec::new(),
            samples: steps.len(),
        },
    };
    for r in 0..restarts {
        let seed = config.shuffle_seed.wrapping_add(r as u64);
        let policy = Policy::new(model, &mut ChaCha8Rng::seed_from_u64(seed))?;
        let cfg = SlConfig {
            shuffle_seed: seed,
            ..config
        };
        let mut run = SlRun::new(policy, steps.len(), cfg);
        run.epochs(contexts, &steps, probe, log)?;
        let (accuracy, _) = teacher_match(&run.policy, selection.0, selection.1)?;
        log(LogRecord::SlRestart { seed, accuracy });
        report.seeds.push(seed);
        report.accuracies.push(accuracy);
        if best.as_ref().map_or(true, |(a, _)| accuracy > *a) {
            report.chosen = r;
            best = Some((accuracy, run));
        }
    }
    let (_, mut run) = best.expect("at least one restart");
    run.epochs(contexts, &steps, config.epochs - probe, log)?;
    report.training = run.report;
    Ok((run.policy, report))
}

/// Fraction of labeled decisions where the policy's most likely arc is the
/// teacher's, and the mean cross-entropy over them.
pub fn teacher_match(policy: &Policy, contexts: &[InstanceContext], labels: &[LabelSet]) -> Result<(f64, f64)> {
    let steps = labeled_steps(contexts, labels, &mut |_| {});
    let (mut hits, mut loss) = (0usize, 0.0);
    for s in &steps {
        let ctx = &contexts[s.instance];
        let probs = policy.probabilities(ctx, &s.state, true)?;
        hits += (argmax(&probs) == s.action) as usize;
        loss -= probs[s.action].max(f64::MIN_POSITIVE).ln();
    }
    let n = steps.len().max(1) as f64;
    Ok((hits as f64 / n, loss / n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    pub costs: Vec<i64>,
    pub mean: f64,
}

/// Greedy constrained decode of every instance.
pub fn evaluate_policy(policy: &Policy, contexts: &[InstanceContext]) -> Result<PolicyEvaluation> {
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let costs = contexts
        .iter()
        .map(|ctx| Ok(rollout(policy, ctx, true, DecodeMode::Greedy, &mut rng)?.cost(ctx)))
        .collect::<Result<Vec<i64>>>()?;
    let mean = if costs.is_empty() {
        0.0
    } else {
        costs.iter().sum::<i64>() as f64 / costs.len() as f64
    };
    Ok(PolicyEvaluation { costs, mean })
}

/// Clipped surrogate `min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage)
}

/// A decision collected by the behavior policy.
#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub instance: usize,
    pub state: EnvState,
    pub action: usize,
    pub advantage: f64,
    pub behavior_log_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoReport {
    pub swaps: usize,
    pub baseline_costs: Vec<f64>,
    pub candidate_costs: Vec<f64>,
}

/// PPO fine-tuning with a greedy self-critical baseline. Returns the
/// baseline policy, i.e. the best parameters seen on the test pool.
pub fn finetune_ppo(
    initial: &Policy,
    pool: &[InstanceContext],
    test: &[InstanceContext],
    config: PpoConfig,
    log: &mut dyn FnMut(LogRecord),
) -> Result<(Policy, PpoReport)> {
    config.validate()?;
    if pool.is_empty() {
        return Err(CarpError::InvalidInstance("empty training pool".into()));
    }
    let test = &test[..config.eval_pool.min(test.len())];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut theta = initial.clone();
    let mut baseline = initial.clone();
    let mut baseline_cost = evaluate_policy(&baseline, test)?.mean;
    let mut adam = Adam::new(&theta.params, config.learning_rate);
    theta.params.zero_grad();
    let mut report = PpoReport {
        swaps: 0,
        baseline_costs: Vec::new(),
        candidate_costs: Vec::new(),
    };
    let cons = config.constrained;
    let continuation = if config.greedy_continuation {
        DecodeMode::Greedy
    } else {
        DecodeMode::Sample
    };
    for episode in 1..=config.episodes {
        let mut batch: Vec<TrajectorySample> = Vec::with_capacity(config.batch_size);
        while batch.len() < config.batch_size {
            let i = rng.gen_range(0..pool.len());
            let ctx = &pool[i];
            let r = rollout(&baseline, ctx, cons, DecodeMode::Sample, &mut rng)?;
            let mut state = EnvState::initial(&ctx.graph);
            for t in 0..r.actions.len() {
                if !r.forced[t] && batch.len() < config.batch_size {
                    batch.push(TrajectorySample {
                        instance: i,
                        state: state.clone(),
                        action: r.actions[t],
                        advantage: 0.0,
                        behavior_log_prob: r.log_probs[t],
                    });
                }
                crate::env::apply(&mut state, r.actions[t], &ctx.graph, cons)?;
            }
        }
        for s in &mut batch {
            let ctx = &pool[s.instance];
            let sampled = if config.anchor_action {
                let (next, reward) = crate::env::step(&s.state, s.action, &ctx.graph, cons)?;
                reward + rollout_from(&theta, ctx, next, cons, continuation, &mut rng)?.total_reward()
            } else {
                rollout_from(&theta, ctx, s.state.clone(), cons, continuation, &mut rng)?.total_reward()
            };
            let greedy = rollout_from(&baseline, ctx, s.state.clone(), cons, DecodeMode::Greedy, &mut rng)?.total_reward();
            s.advantage = (sampled - greedy) as f64;
        }
        let mut loss_sum = 0.0;
        for _ in 0..config.inner_epochs {
            loss_sum = 0.0;
            let w = 1.0 / batch.len() as f64;
            for s in &batch {
                let ctx = &pool[s.instance];
                let mask = legal_actions(&s.state, &ctx.graph, cons);
                let mut tape = Tape::new();
                let logp = theta.forward(&mut tape, ctx, &s.state, &mask)?;
                let lp = tape.pick(logp, 0, s.action)?;
                let b = tape.constant(crate::autodiff::Matrix::scalar(s.behavior_log_prob));
                let diff = tape.sub(lp, b)?;
                let ratio = tape.exp(diff);
                let unclipped = tape.scale(ratio, s.advantage);
                let clipped = tape.clamp(ratio, 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon);
                let clipped = tape.scale(clipped, s.advantage);
                let obj = tape.minimum(unclipped, clipped)?;
                let loss = tape.scale(obj, -1.0);
                loss_sum += tape.scalar(loss) * w;
                tape.backward(loss)?;
                theta.params.accumulate(&tape, w);
            }
            adam.step(&mut theta.params);
        }
        let candidate_cost = evaluate_policy(&theta, test)?.mean;
        if candidate_cost < baseline_cost {
            baseline = theta.clone();
            baseline_cost = candidate_cost;
            report.swaps += 1;
        }
        report.baseline_costs.push(baseline_cost);
        report.candidate_costs.push(candidate_cost);
        let mean_advantage = batch.iter().map(|s| s.advantage).sum::<f64>() / batch.len() as f64;
        log(LogRecord::PpoEpisode {
            episode,
            loss: loss_sum,
            mean_advantage,
            candidate_cost,
            baseline_cost,
            swaps: report.swaps,
        });
    }
    Ok((baseline, report))
}
