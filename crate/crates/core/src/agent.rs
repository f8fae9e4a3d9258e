//! Dueling-DQN training and evaluation on the re-dispatch environment:
//! FIFO replay, epsilon-greedy behaviour with action masking, a periodically
//! copied target network, and the squared TD error minimised with Adam.
//!
//! The crate takes no wall-clock readings itself; callers inject a [`Clock`]
//! (the CLI passes a monotonic one, [`NullClock`] keeps outputs deterministic).

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::env::{EnvError, Environment, Observation, Outcome, Scenario, TaskContext};
use crate::math;
use crate::nn::{NetConfig, NnError, ObsInputs, PolicyNet};
use crate::rng::Rng;
use crate::store::{AdamConfig, StoreError};
use crate::tensor::Tape;

/// Monotonic time source in seconds.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// Clock that always reads zero; keeps training artifacts bit-reproducible.
pub struct NullClock;

impl Clock for NullClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AgentError {
    AllMasked,
    EmptyBatch,
    Env(EnvError),
    Net(NnError),
    Store(StoreError),
    NoScenarios,
}

impl From<EnvError> for AgentError {
    fn from(e: EnvError) -> Self {
        AgentError::Env(e)
    }
}

impl From<NnError> for AgentError {
    fn from(e: NnError) -> Self {
        AgentError::Net(e)
    }
}

impl From<crate::tensor::TensorError> for AgentError {
    fn from(e: crate::tensor::TensorError) -> Self {
        AgentError::Net(NnError::Tensor(e))
    }
}

impl From<StoreError> for AgentError {
    fn from(e: StoreError) -> Self {
        AgentError::Store(e)
    }
}

impl fmt::Display for AgentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentError::AllMasked => write!(f, "no unmasked action available"),
            AgentError::EmptyBatch => write!(f, "empty training batch"),
            AgentError::Env(e) => write!(f, "{e}"),
            AgentError::Net(e) => write!(f, "{e}"),
            AgentError::Store(e) => write!(f, "{e}"),
            AgentError::NoScenarios => write!(f, "scenario set is empty"),
        }
    }
}

/// One stored interaction. `next` is `None` for terminal transitions.
#[derive(Clone, Debug)]
pub struct Transition {
    pub obs: Observation,
    pub action: usize,
    pub reward: f64,
    pub next: Option<Observation>,
}

/// Fixed-capacity FIFO ring.
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            items: Vec::with_capacity(capacity.min(4096)),
            capacity,
            inserted: 0,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            let pos = (self.inserted % self.capacity as u64) as usize;
            self.items[pos] = t;
        }
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// The `i`-th oldest item still stored.
    pub fn get_oldest(&self, i: usize) -> &Transition {
        if self.items.len() < self.capacity {
            &self.items[i]
        } else {
            let head = (self.inserted % self.capacity as u64) as usize;
            &self.items[(head + i) % self.capacity]
        }
    }

    fn sample<'b>(&'b self, rng: &mut Rng) -> &'b Transition {
        &self.items[rng.below(self.items.len())]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub gamma: f64,
    pub batch: usize,
    /// Copy the online parameters into the target every this many updates.
    pub target_interval: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Steps over which epsilon decays linearly before holding constant.
    pub eps_horizon: u64,
    pub total_steps: u64,
    pub seed: u64,
    pub buffer_capacity: usize,
    /// Environment steps per gradient update.
    pub update_every: u64,
    /// Metrics cadence (environment steps).
    pub eval_interval: u64,
    pub adam: AdamConfig,
    /// Episode window for the trailing success rate.
    pub trailing_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.9,
            batch: 64,
            target_interval: 100,
            eps_start: 0.1,
            eps_end: 0.01,
            eps_horizon: 500_000,
            total_steps: 0,
            seed: 0,
            buffer_capacity: 20_000,
            update_every: 1,
            eval_interval: 1_000,
            adam: AdamConfig::default(),
            trailing_window: 100,
        }
    }
}

/// Piecewise-linear exploration schedule.
pub fn epsilon_at(cfg: &TrainConfig, step: u64) -> f64 {
    if cfg.eps_horizon == 0 || step >= cfg.eps_horizon {
        return cfg.eps_end;
    }
    let frac = step as f64 / cfg.eps_horizon as f64;
    cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac
}

/// Argmax over unmasked entries, ties broken by the lowest index.
pub fn masked_argmax(q: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&v, &m)) in q.iter().zip(mask).enumerate() {
        if !m {
            continue;
        }
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Epsilon-greedy action selection restricted to unmasked actions.
pub fn select_action(
    net: &PolicyNet,
    ctx: &TaskContext,
    obs: &Observation,
    epsilon: f64,
    rng: &mut Rng,
) -> Result<usize, AgentError> {
    let allowed: Vec<usize> = obs
        .mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| i)
        .collect();
    if allowed.is_empty() {
        return Err(AgentError::AllMasked);
    }
    if epsilon > 0.0 && rng.next_f64() < epsilon {
        return Ok(allowed[rng.below(allowed.len())]);
    }
    let q = net.q_values(ObsInputs {
        h: &obs.h,
        z: &obs.z,
        adj: &ctx.adj,
    })?;
    masked_argmax(&q, &obs.mask).ok_or(AgentError::AllMasked)
}

/// Bootstrapped target `r + gamma * max_{a' unmasked} Q_target(s', a')`;
/// plain `r` for terminal transitions.
pub fn td_target(
    target: &PolicyNet,
    ctx: &TaskContext,
    transition: &Transition,
    gamma: f64,
) -> Result<f64, AgentError> {
    let mut y = transition.reward;
    if let Some(next) = &transition.next {
        let q = target.q_values(ObsInputs {
            h: &next.h,
            z: &next.z,
            adj: &ctx.adj,
        })?;
        if let Some(best) = masked_argmax(&q, &next.mask) {
            y += gamma * q[best];
        }
    }
    Ok(y)
}

/// Bootstrap targets for a whole batch on one tape, so the target network's
/// parameters are registered once.
fn td_targets(
    target: &PolicyNet,
    ctx: &TaskContext,
    batch: &[&Transition],
    gamma: f64,
) -> Result<Vec<f64>, AgentError> {
    let mut ys: Vec<f64> = batch.iter().map(|t| t.reward).collect();
    let mut tape = Tape::new();
    let mut pending = Vec::new();
    for (i, t) in batch.iter().enumerate() {
        if let Some(next) = &t.next {
            let nodes = target.forward_on(
                &mut tape,
                ObsInputs {
                    h: &next.h,
                    z: &next.z,
                    adj: &ctx.adj,
                },
            )?;
            pending.push((i, nodes.q));
        }
    }
    for (i, q_node) in pending {
        let q = &tape.value(q_node).data;
        let next = batch[i].next.as_ref().expect("pending only for non-terminal");
        if let Some(best) = masked_argmax(q, &next.mask) {
            ys[i] += gamma * q[best];
        }
    }
    Ok(ys)
}

/// One optimisation step on a batch: mean squared TD error, gradients through
/// the online network only.
pub fn td_update(
    net: &mut PolicyNet,
    target: &PolicyNet,
    ctx: &TaskContext,
    batch: &[&Transition],
    gamma: f64,
    adam: &AdamConfig,
) -> Result<f64, AgentError> {
    if batch.is_empty() {
        return Err(AgentError::EmptyBatch);
    }
    let targets = td_targets(target, ctx, batch, gamma)?;

    let mut tape = Tape::new();
    let mut picks = Vec::with_capacity(batch.len());
    for t in batch {
        let nodes = net.forward_on(
            &mut tape,
            ObsInputs {
                h: &t.obs.h,
                z: &t.obs.z,
                adj: &ctx.adj,
            },
        )?;
        picks.push(tape.pick(nodes.q, t.action)?);
    }
    let predicted = tape.concat_rows(&picks)?;
    let target_node = tape.input(crate::tensor::Tensor::column(targets));
    let loss = tape.mse(predicted, target_node)?;
    let loss_value = tape.value(loss).data[0];
    tape.backward(loss)?;
    net.store.zero_grads();
    tape.accumulate_grads(&mut net.store);
    net.store.adam_step(adam)?;
    Ok(loss_value)
}

/// One metrics row per evaluation interval.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    /// Success fraction over the trailing episode window, in percent.
    pub trailing_success: f64,
    pub loss: f64,
    pub epsilon: f64,
    pub wall_seconds: f64,
}

pub struct TrainResult {
    pub net: PolicyNet,
    pub target: PolicyNet,
    pub metrics: Vec<MetricsRow>,
    pub episodes: u64,
    pub updates: u64,
}

/// Train a fresh network on uniformly sampled scenarios. Fully deterministic
/// under `cfg.seed` (with a [`NullClock`]). `on_interval` fires at each
/// metrics row, e.g. for rolling checkpoints.
pub fn train(
    ctx: &TaskContext,
    scenarios: &[&Scenario],
    net_cfg: NetConfig,
    cfg: &TrainConfig,
    clock: &dyn Clock,
    mut on_interval: impl FnMut(&MetricsRow, &PolicyNet),
) -> Result<TrainResult, AgentError> {
    if scenarios.is_empty() {
        return Err(AgentError::NoScenarios);
    }
    let n = ctx.graph.n;
    let mut net = PolicyNet::new(net_cfg, n, ctx.z_len(), ctx.n_actions(), cfg.seed);
    let mut target = PolicyNet::new(net_cfg, n, ctx.z_len(), ctx.n_actions(), cfg.seed);
    target.store.copy_values_from(&net.store);

    let mut rng = Rng::seed_from(cfg.seed ^ 0xD1CE_B00C_5EED_1234);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut env = Environment::new(ctx);
    let mut metrics = Vec::new();
    let mut window: Vec<bool> = Vec::new();
    let mut episodes = 0u64;
    let mut updates = 0u64;
    let mut last_loss = 0.0f64;
    let start = clock.seconds();

    let mut step = 0u64;
    'outer: while step < cfg.total_steps {
        let scenario = scenarios[rng.below(scenarios.len())];
        let mut obs = env.reset(scenario)?;
        loop {
            let eps = epsilon_at(cfg, step);
            let action = select_action(&net, ctx, &obs, eps, &mut rng)?;
            let result = env.step(action)?;
            buffer.push(Transition {
                obs,
                action,
                reward: result.reward,
                next: if result.done {
                    None
                } else {
                    Some(result.obs.clone())
                },
            });
            obs = result.obs;
            step += 1;

            if buffer.len() >= cfg.batch && step % cfg.update_every.max(1) == 0 {
                let batch: Vec<&Transition> =
                    (0..cfg.batch).map(|_| buffer.sample(&mut rng)).collect();
                last_loss = td_update(&mut net, &target, ctx, &batch, cfg.gamma, &cfg.adam)?;
                updates += 1;
                if updates % cfg.target_interval.max(1) == 0 {
                    target.store.copy_values_from(&net.store);
                }
            }

            if cfg.eval_interval > 0 && step % cfg.eval_interval == 0 {
                let trailing = if window.is_empty() {
                    0.0
                } else {
                    100.0 * window.iter().filter(|&&s| s).count() as f64 / window.len() as f64
                };
                let row = MetricsRow {
                    step,
                    trailing_success: trailing,
                    loss: last_loss,
                    epsilon: epsilon_at(cfg, step),
                    wall_seconds: clock.seconds() - start,
                };
                on_interval(&row, &net);
                metrics.push(row);
            }

            if result.done {
                episodes += 1;
                window.push(result.outcome == Outcome::Success);
                let excess = window.len().saturating_sub(cfg.trailing_window.max(1));
                if excess > 0 {
                    window.drain(..excess);
                }
                break;
            }
            if step >= cfg.total_steps {
                break 'outer;
            }
        }
    }

    Ok(TrainResult {
        net,
        target,
        metrics,
        episodes,
        updates,
    })
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Policy under evaluation: greedy over a trained network, or uniform random
/// over unmasked actions (the comparison baseline).
pub enum EvalPolicy<'a> {
    Greedy(&'a PolicyNet),
    Random(u64),
}

#[derive(Clone, Debug)]
pub struct ScenarioEvalRow {
    pub scenario_id: u32,
    pub section_id: u32,
    pub outcome: Outcome,
    pub steps: usize,
    pub final_p_mw: f64,
    pub cost: f64,
    /// Wall time spent in policy decisions (s).
    pub infer_seconds: f64,
    /// Wall time spent in environment solves (s).
    pub solver_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct SectionStats {
    pub section_id: u32,
    pub scenarios: usize,
    pub successes: usize,
    pub mean_cost: f64,
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub scenarios: usize,
    pub successes: usize,
    /// Percent.
    pub success_rate: f64,
    /// Mean end-of-episode economic cost ($).
    pub mean_cost: f64,
    pub infer_mean_s: f64,
    pub infer_std_s: f64,
    pub solver_mean_s: f64,
    pub per_section: Vec<SectionStats>,
    pub rows: Vec<ScenarioEvalRow>,
}

/// Greedy (or random) rollouts over a scenario list. Per-scenario solver
/// failures are recorded as unsuccessful outcomes, never fatal.
pub fn evaluate(
    policy: EvalPolicy<'_>,
    ctx: &TaskContext,
    scenarios: &[&Scenario],
    clock: &dyn Clock,
) -> Result<EvalReport, AgentError> {
    let mut rng = match &policy {
        EvalPolicy::Random(seed) => Rng::seed_from(*seed),
        EvalPolicy::Greedy(_) => Rng::seed_from(0),
    };
    let mut env = Environment::new(ctx);
    let mut rows = Vec::with_capacity(scenarios.len());

    for scenario in scenarios {
        let t0 = clock.seconds();
        let reset = env.reset(scenario);
        let mut solver_s = clock.seconds() - t0;
        let mut infer_s = 0.0;
        let mut outcome = Outcome::Diverged;
        let mut steps = 0usize;
        let mut final_p = scenario.initial_p_mw;
        let mut cost = f64::NAN;

        if let Ok(mut obs) = reset {
            outcome = Outcome::Running;
            cost = {
                let outputs =
                    crate::powerflow::generator_outputs(env.current_case(), env.last_solution().unwrap());
                crate::env::economic_cost(env.current_case(), &outputs)
            };
            loop {
                let t0 = clock.seconds();
                let action = match &policy {
                    EvalPolicy::Greedy(net) => select_action(net, ctx, &obs, 0.0, &mut rng),
                    EvalPolicy::Random(_) => {
                        let allowed: Vec<usize> = obs
                            .mask
                            .iter()
                            .enumerate()
                            .filter(|(_, &m)| m)
                            .map(|(i, _)| i)
                            .collect();
                        if allowed.is_empty() {
                            Err(AgentError::AllMasked)
                        } else {
                            Ok(allowed[rng.below(allowed.len())])
                        }
                    }
                };
                infer_s += clock.seconds() - t0;
                let action = match action {
                    Ok(a) => a,
                    Err(_) => break, // stuck: recorded as a non-success
                };
                let t1 = clock.seconds();
                let result = match env.step(action) {
                    Ok(r) => r,
                    Err(_) => break,
                };
                solver_s += clock.seconds() - t1;
                steps += 1;
                outcome = result.outcome;
                if result.outcome != Outcome::Diverged {
                    final_p = result.section_p;
                    cost = result.cost;
                }
                if result.done {
                    break;
                }
                obs = result.obs;
            }
        }

        rows.push(ScenarioEvalRow {
            scenario_id: scenario.id,
            section_id: scenario.section_id,
            outcome,
            steps,
            final_p_mw: final_p,
            cost,
            infer_seconds: infer_s,
            solver_seconds: solver_s,
        });
    }

    // aggregate
    let n = rows.len();
    let successes = rows.iter().filter(|r| r.outcome == Outcome::Success).count();
    let success_rate = if n == 0 {
        0.0
    } else {
        100.0 * successes as f64 / n as f64
    };
    let costs: Vec<f64> = rows.iter().map(|r| r.cost).filter(|c| c.is_finite()).collect();
    let mean_cost = if costs.is_empty() {
        f64::NAN
    } else {
        costs.iter().sum::<f64>() / costs.len() as f64
    };
    let infer_mean_s = mean(rows.iter().map(|r| r.infer_seconds));
    let infer_std_s = std_dev(rows.iter().map(|r| r.infer_seconds), infer_mean_s);
    let solver_mean_s = mean(rows.iter().map(|r| r.solver_seconds));

    let mut per_section: Vec<SectionStats> = Vec::new();
    for s in &ctx.sections {
        let matching: Vec<&ScenarioEvalRow> =
            rows.iter().filter(|r| r.section_id == s.id).collect();
        if matching.is_empty() {
            continue;
        }
        let wins = matching.iter().filter(|r| r.outcome == Outcome::Success).count();
        let section_costs: Vec<f64> =
            matching.iter().map(|r| r.cost).filter(|c| c.is_finite()).collect();
        per_section.push(SectionStats {
            section_id: s.id,
            scenarios: matching.len(),
            successes: wins,
            mean_cost: if section_costs.is_empty() {
                f64::NAN
            } else {
                section_costs.iter().sum::<f64>() / section_costs.len() as f64
            },
        });
    }

    Ok(EvalReport {
        scenarios: n,
        successes,
        success_rate,
        mean_cost,
        infer_mean_s,
        infer_std_s,
        solver_mean_s,
        per_section,
        rows,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        sum += v;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

fn std_dev(values: impl Iterator<Item = f64>, mean: f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        sum += math::sq(v - mean);
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        math::sqrt(sum / count as f64)
    }
}

/// Render a metrics series as the CSV the CLI writes:
/// `step,trailing_success_rate,loss,epsilon,wall_seconds`.
pub fn metrics_to_csv(metrics: &[MetricsRow]) -> String {
    use core::fmt::Write;
    let mut out = String::from("step,trailing_success_rate,loss,epsilon,wall_seconds\n");
    for row in metrics {
        let _ = writeln!(
            out,
            "{},{:.6},{:.9},{:.6},{:.6}",
            row.step, row.trailing_success, row.loss, row.epsilon, row.wall_seconds
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::env::{generate_scenarios, EnvConfig};
    use crate::nn::NetworkKind;

    fn nine_ctx() -> TaskContext {
        let case = cases::nine_bus();
        let (sections, _) = cases::nine_bus_sections(&case);
        let mut ctx = TaskContext::new(case, sections, EnvConfig::default());
        let set = generate_scenarios(&ctx, 3, 4).unwrap();
        ctx.scaler = set.scaler.clone();
        ctx
    }

    fn small_cfg() -> NetConfig {
        NetConfig::small(NetworkKind::Powerformer, 8)
    }

    #[test]
    fn epsilon_schedule_probe_points() {
        let cfg = TrainConfig::default();
        assert_eq!(epsilon_at(&cfg, 0), 0.1);
        assert!((epsilon_at(&cfg, 125_000) - 0.0775).abs() < 1e-12);
        assert!((epsilon_at(&cfg, 250_000) - 0.055).abs() < 1e-12);
        assert!((epsilon_at(&cfg, 500_000) - 0.01).abs() < 1e-12);
        assert_eq!(epsilon_at(&cfg, 2_000_000), 0.01);
    }

    #[test]
    fn argmax_respects_mask_and_ties() {
        let q = [1.0, 3.0, 2.0];
        assert_eq!(masked_argmax(&q, &[true, true, true]), Some(1));
        assert_eq!(masked_argmax(&q, &[true, false, true]), Some(2));
        assert_eq!(masked_argmax(&[2.0, 2.0, 1.0], &[true, true, true]), Some(0));
        assert_eq!(masked_argmax(&q, &[false, false, false]), None);
    }

    #[test]
    fn epsilon_one_explores_uniformly() {
        let ctx = nine_ctx();
        let net = PolicyNet::new(small_cfg(), 9, ctx.z_len(), ctx.n_actions(), 1);
        let set = generate_scenarios(&ctx, 3, 1).unwrap();
        let mut env = Environment::new(&ctx);
        let mut obs = env.reset(&set.scenarios[0]).unwrap();
        // restrict to exactly three unmasked actions
        let allowed: Vec<usize> = obs
            .mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
            .take(3)
            .collect();
        obs.mask.iter_mut().for_each(|m| *m = false);
        for &a in &allowed {
            obs.mask[a] = true;
        }
        let mut rng = Rng::seed_from(99);
        let mut counts = [0usize; 3];
        let draws = 10_000;
        for _ in 0..draws {
            let a = select_action(&net, &ctx, &obs, 1.0, &mut rng).unwrap();
            let slot = allowed.iter().position(|&x| x == a).unwrap();
            counts[slot] += 1;
        }
        // 3-sigma band around uniform
        let p = 1.0 / 3.0;
        let sigma = math::sqrt(draws as f64 * p * (1.0 - p));
        for &c in &counts {
            assert!(
                (c as f64 - draws as f64 * p).abs() < 3.0 * sigma,
                "counts {counts:?} outside the 3-sigma band"
            );
        }
    }

    #[test]
    fn buffer_is_strictly_fifo() {
        let ctx = nine_ctx();
        let set = generate_scenarios(&ctx, 3, 1).unwrap();
        let mut env = Environment::new(&ctx);
        let obs = env.reset(&set.scenarios[0]).unwrap();
        let make = |reward: f64| Transition {
            obs: obs.clone(),
            action: 0,
            reward,
            next: None,
        };
        let mut buf = ReplayBuffer::new(5);
        for i in 0..8 {
            buf.push(make(i as f64));
        }
        assert_eq!(buf.len(), 5);
        // items 0..3 evicted; remaining order 3,4,5,6,7
        for (i, want) in (3..8).enumerate() {
            assert_eq!(buf.get_oldest(i).reward, want as f64);
        }
    }

    #[test]
    fn gamma_zero_target_is_reward_and_terminal_contributes_zero() {
        let ctx = nine_ctx();
        let mut net = PolicyNet::new(small_cfg(), 9, ctx.z_len(), ctx.n_actions(), 7);
        let target = PolicyNet::new(small_cfg(), 9, ctx.z_len(), ctx.n_actions(), 7);
        let set = generate_scenarios(&ctx, 3, 1).unwrap();
        let mut env = Environment::new(&ctx);
        let obs = env.reset(&set.scenarios[0]).unwrap();

        // zero every parameter: Q == 0 everywhere
        let names: Vec<String> = net.store.names().map(String::from).collect();
        for name in &names {
            net.store.get_mut(name).unwrap().data.iter_mut().for_each(|v| *v = 0.0);
        }

        // terminal transition with reward r: loss = (0 - r)^2
        let r = 0.75;
        let t = Transition {
            obs: obs.clone(),
            action: 0,
            reward: r,
            next: None,
        };
        let y = td_target(&target, &ctx, &t, 0.9).unwrap();
        assert_eq!(y, r, "terminal target is the reward alone");
        let loss = td_update(&mut net, &target, &ctx, &[&t], 0.9, &AdamConfig::default()).unwrap();
        assert!((loss - r * r).abs() < 1e-12, "hand-computed loss (0 - r)^2");

        // gamma = 0 reduces the non-terminal target to r as well
        let t2 = Transition {
            obs: obs.clone(),
            action: 0,
            reward: -0.25,
            next: Some(obs.clone()),
        };
        let y2 = td_target(&target, &ctx, &t2, 0.0).unwrap();
        assert_eq!(y2, -0.25);
    }

    #[test]
    fn terminal_transition_with_exact_q_gives_zero_loss() {
        let ctx = nine_ctx();
        let mut net = PolicyNet::new(small_cfg(), 9, ctx.z_len(), ctx.n_actions(), 7);
        let target = PolicyNet::new(small_cfg(), 9, ctx.z_len(), ctx.n_actions(), 7);
        let set = generate_scenarios(&ctx, 3, 1).unwrap();
        let mut env = Environment::new(&ctx);
        let obs = env.reset(&set.scenarios[0]).unwrap();

        // zero everything, then set the value head's final bias to r: Q(s,.) == r
        let r = 1.25;
        let names: Vec<String> = net.store.names().map(String::from).collect();
        for name in &names {
            net.store.get_mut(name).unwrap().data.iter_mut().for_each(|v| *v = 0.0);
        }
        net.store.get_mut("value.2.b").unwrap().data[0] = r;

        let t = Transition {
            obs,
            action: 2,
            reward: r,
            next: None,
        };
        let loss = td_update(&mut net, &target, &ctx, &[&t], 0.9, &AdamConfig::default()).unwrap();
        assert!(loss.abs() < 1e-12, "exact prediction contributes zero loss, got {loss}");
    }

    #[test]
    fn masked_actions_never_enter_the_target_max() {
        let ctx = nine_ctx();
        let net = PolicyNet::new(small_cfg(), 9, ctx.z_len(), ctx.n_actions(), 21);
        let set = generate_scenarios(&ctx, 3, 1).unwrap();
        let mut env = Environment::new(&ctx);
        let obs = env.reset(&set.scenarios[0]).unwrap();

        let q = net
            .q_values(ObsInputs {
                h: &obs.h,
                z: &obs.z,
                adj: &ctx.adj,
            })
            .unwrap();
        let best_all = masked_argmax(&q, &alloc::vec![true; q.len()]).unwrap();

        let mut next = obs.clone();
        next.mask.iter_mut().for_each(|m| *m = true);
        next.mask[best_all] = false;
        let t = Transition {
            obs: obs.clone(),
            action: 0,
            reward: 0.0,
            next: Some(next.clone()),
        };
        let y = td_target(&net, &ctx, &t, 1.0).unwrap();
        let runner_up = masked_argmax(&q, &next.mask).unwrap();
        assert!((y - q[runner_up]).abs() < 1e-12);
        assert_ne!(runner_up, best_all);
    }

    #[test]
    fn repeated_updates_overfit_a_frozen_batch() {
        let ctx = nine_ctx();
        let mut net = PolicyNet::new(small_cfg(), 9, ctx.z_len(), ctx.n_actions(), 33);
        let target = PolicyNet::new(small_cfg(), 9, ctx.z_len(), ctx.n_actions(), 34);
        let set = generate_scenarios(&ctx, 13, 2).unwrap();
        let mut env = Environment::new(&ctx);
        let mut rng = Rng::seed_from(17);

        // collect a small frozen batch
        let mut transitions = Vec::new();
        let mut obs = env.reset(&set.scenarios[0]).unwrap();
        for _ in 0..8 {
            let action = select_action(&net, &ctx, &obs, 1.0, &mut rng).unwrap();
            let r = env.step(action).unwrap();
            transitions.push(Transition {
                obs: obs.clone(),
                action,
                reward: r.reward,
                next: if r.done { None } else { Some(r.obs.clone()) },
            });
            if r.done {
                obs = env.reset(&set.scenarios[1]).unwrap();
            } else {
                obs = r.obs;
            }
        }
        let batch: Vec<&Transition> = transitions.iter().collect();
        let adam = AdamConfig {
            lr: 3e-3,
            ..AdamConfig::default()
        };
        let first = td_update(&mut net, &target, &ctx, &batch, 0.9, &adam).unwrap();
        let mut last = first;
        for _ in 0..199 {
            last = td_update(&mut net, &target, &ctx, &batch, 0.9, &adam).unwrap();
        }
        assert!(
            last <= first / 100.0,
            "200 updates must shrink the frozen-batch loss 100x: {first} -> {last}"
        );
    }

    #[test]
    fn zero_steps_returns_initial_parameters_and_no_metrics() {
        let ctx = nine_ctx();
        let set = generate_scenarios(&ctx, 3, 4).unwrap();
        let train_refs: Vec<&Scenario> = set.scenarios.iter().collect();
        let cfg = TrainConfig {
            total_steps: 0,
            ..TrainConfig::default()
        };
        let result = train(&ctx, &train_refs, small_cfg(), &cfg, &NullClock, |_, _| {}).unwrap();
        assert!(result.metrics.is_empty());
        assert_eq!(result.updates, 0);
        let fresh = PolicyNet::new(small_cfg(), 9, ctx.z_len(), ctx.n_actions(), cfg.seed);
        for name in fresh.store.names() {
            assert_eq!(
                fresh.store.get(name).unwrap().data,
                result.net.store.get(name).unwrap().data
            );
        }
    }

    #[test]
    fn training_is_deterministic_and_target_stays_stale_between_copies() {
        let ctx = nine_ctx();
        let set = generate_scenarios(&ctx, 3, 4).unwrap();
        let refs: Vec<&Scenario> = set.scenarios.iter().collect();
        let cfg = TrainConfig {
            total_steps: 60,
            batch: 8,
            eval_interval: 20,
            target_interval: 1_000_000, // never copied within this run
            eps_horizon: 100,
            seed: 5,
            ..TrainConfig::default()
        };
        let a = train(&ctx, &refs, small_cfg(), &cfg, &NullClock, |_, _| {}).unwrap();
        let b = train(&ctx, &refs, small_cfg(), &cfg, &NullClock, |_, _| {}).unwrap();
        assert_eq!(a.metrics, b.metrics, "identical seeds give identical metrics");
        // the online net moved; the target must still equal the initial values
        let fresh = PolicyNet::new(small_cfg(), 9, ctx.z_len(), ctx.n_actions(), cfg.seed);
        let mut online_moved = false;
        for name in fresh.store.names() {
            let initial = &fresh.store.get(name).unwrap().data;
            assert_eq!(
                initial,
                &a.target.store.get(name).unwrap().data,
                "target drifted without a copy"
            );
            if initial != &a.net.store.get(name).unwrap().data {
                online_moved = true;
            }
        }
        assert!(online_moved, "online parameters should have been updated");
    }

    #[test]
    fn random_policy_report_is_well_formed() {
        let ctx = nine_ctx();
        let set = generate_scenarios(&ctx, 3, 6).unwrap();
        let refs: Vec<&Scenario> = set.scenarios.iter().collect();
        let report = evaluate(EvalPolicy::Random(4), &ctx, &refs, &NullClock).unwrap();
        assert_eq!(report.scenarios, 6);
        assert!(report.success_rate >= 0.0 && report.success_rate <= 100.0);
        assert_eq!(report.rows.len(), 6);
        assert!(!report.per_section.is_empty());
    }
}
