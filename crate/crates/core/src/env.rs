//! Generator re-dispatch environment: scenario generation, episode dynamics
//! with masked actions, and the two-part reward.
//!
//! An episode starts from an insecure operating point (the target section's
//! flow violates its bounds), and each step scales one generator's setpoint by
//! +10% or -10%, re-solves the AC power flow, and scores the result. The slack
//! bus absorbs the net power change between solves.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use alloc::{format, vec};
use core::fmt;

use crate::grid::{build_graph, GridCase, PowerGraph, Section};
use crate::nn::SectionEncodingMode;
use crate::powerflow::{
    generator_outputs, raw_state_features, section_encoding, section_encoding_active,
    section_flow, solve_ac, FeatureScaler, PfError, PowerFlowSolution, StateMatrix,
};
use crate::rng::{hash_u64, Rng};
use crate::tensor::Adjacency;

#[derive(Clone, Copy, Debug)]
pub struct EnvConfig {
    /// Weight of the economic component in the reward.
    pub w_ed: f64,
    /// One-off bonus when the section flow first enters its bounds.
    pub success_bonus: f64,
    pub step_limit: usize,
    /// Also require reactive bounds (when the section declares them) for
    /// success.
    pub strict_q: bool,
    /// Reward on solver divergence (episode aborts).
    pub diverge_penalty: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            w_ed: 0.1,
            success_bonus: 10.0,
            step_limit: 50,
            strict_q: false,
            diverge_penalty: -10.0,
            tol: 1e-8,
            max_iter: 20,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementKind {
    Gen,
    Load,
}

/// One multiplicative disturbance applied at episode start.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perturbation {
    pub kind: ElementKind,
    /// Generator index (into `case.generators`) or bus index (into
    /// `case.buses`) depending on `kind`.
    pub index: usize,
    /// Factor in {0.1, 0.2, ..., 2.0}.
    pub factor: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub id: u32,
    /// Declared id of the target section.
    pub section_id: u32,
    pub perturbations: Vec<Perturbation>,
    pub split: Split,
    /// Target-section active flow at the (insecure) starting point (MW).
    pub initial_p_mw: f64,
}

/// Scenarios plus the feature statistics frozen from the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSet {
    pub seed: u64,
    pub requested: usize,
    pub scenarios: Vec<Scenario>,
    pub scaler: FeatureScaler,
}

impl ScenarioSet {
    pub fn train(&self) -> Vec<&Scenario> {
        self.scenarios.iter().filter(|s| s.split == Split::Train).collect()
    }

    pub fn test(&self) -> Vec<&Scenario> {
        self.scenarios.iter().filter(|s| s.split == Split::Test).collect()
    }
}

/// Immutable per-task data shared by environments, training, and evaluation.
pub struct TaskContext {
    pub case: GridCase,
    pub sections: Vec<Section>,
    pub graph: PowerGraph,
    pub adj: Arc<Adjacency>,
    pub scaler: FeatureScaler,
    pub cfg: EnvConfig,
    pub z_mode: SectionEncodingMode,
    /// Indices of in-service generators; the action space is two actions per
    /// entry (even = +10%, odd = -10%).
    pub action_gens: Vec<usize>,
}

impl TaskContext {
    pub fn new(case: GridCase, sections: Vec<Section>, cfg: EnvConfig) -> Self {
        let graph = build_graph(&case);
        let adj = Arc::new(Adjacency::from_edges(graph.n, &graph.edge_list));
        let action_gens = case.in_service_gens();
        TaskContext {
            case,
            sections,
            graph,
            adj,
            scaler: FeatureScaler::identity(),
            cfg,
            z_mode: SectionEncodingMode::FourFactor,
            action_gens,
        }
    }

    pub fn n_actions(&self) -> usize {
        2 * self.action_gens.len()
    }

    pub fn z_len(&self) -> usize {
        match self.z_mode {
            SectionEncodingMode::FourFactor => 4 * self.case.branches.len(),
            SectionEncodingMode::ActiveOnly => self.case.branches.len(),
        }
    }

    pub fn section_by_id(&self, id: u32) -> Option<&Section> {
        self.sections.iter().find(|s| s.id == id)
    }

    fn encode_section(
        &self,
        sol: &PowerFlowSolution,
        case: &GridCase,
        section: &Section,
    ) -> Result<Vec<f64>, PfError> {
        match self.z_mode {
            SectionEncodingMode::FourFactor => section_encoding(sol, case, section),
            SectionEncodingMode::ActiveOnly => section_encoding_active(sol, case, section),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnvError {
    Solver(PfError),
    MaskedAction { action: usize },
    EpisodeOver,
    NotReset,
    UnknownSection { id: u32 },
    ExhaustedAttempts { attempts: usize, accepted: usize },
    NoSections,
    BadScenarioFile { line: usize, what: String },
}

impl From<PfError> for EnvError {
    fn from(e: PfError) -> Self {
        EnvError::Solver(e)
    }
}

impl fmt::Display for EnvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvError::Solver(e) => write!(f, "solver: {e}"),
            EnvError::MaskedAction { action } => {
                write!(f, "action {action} is masked; selecting it is a programming error")
            }
            EnvError::EpisodeOver => write!(f, "episode already finished"),
            EnvError::NotReset => write!(f, "environment was never reset"),
            EnvError::UnknownSection { id } => write!(f, "scenario targets unknown section {id}"),
            EnvError::ExhaustedAttempts { attempts, accepted } => write!(
                f,
                "gave up after {attempts} draws with only {accepted} insecure scenarios; bounds may be too loose"
            ),
            EnvError::NoSections => write!(f, "no sections configured"),
            EnvError::BadScenarioFile { line, what } => {
                write!(f, "scenario file line {line}: {what}")
            }
        }
    }
}

/// What the agent observes: standardized state, section encoding, action mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub h: StateMatrix,
    pub z: Vec<f64>,
    pub mask: Vec<bool>,
    pub step: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Running,
    Success,
    StepLimit,
    Diverged,
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub outcome: Outcome,
    /// Economic cost of the post-step dispatch ($).
    pub cost: f64,
    /// Target-section active flow after the step (MW).
    pub section_p: f64,
}

/// Total quadratic generation cost over in-service units ($).
pub fn economic_cost(case: &GridCase, outputs: &[f64]) -> f64 {
    case.generators
        .iter()
        .zip(&case.gencost)
        .zip(outputs)
        .filter(|((g, _), _)| g.status)
        .map(|((_, c), &p)| c.eval(p))
        .sum()
}

/// Apply a scenario's perturbations to a fresh copy of the base case.
/// Generator setpoints are clamped into their limits so that the masked
/// action set stays sound.
pub fn apply_scenario(case: &GridCase, scenario: &Scenario) -> GridCase {
    let mut work = case.clone();
    for p in &scenario.perturbations {
        match p.kind {
            ElementKind::Gen => {
                let g = &mut work.generators[p.index];
                g.pg = (g.pg * p.factor).clamp(g.pmin, g.pmax);
            }
            ElementKind::Load => {
                let b = &mut work.buses[p.index];
                b.pd *= p.factor;
                b.qd *= p.factor;
            }
        }
    }
    work
}

/// The episode state machine. One instance is single-threaded; create one per
/// worker for concurrent evaluation over the shared [`TaskContext`].
pub struct Environment<'a> {
    pub ctx: &'a TaskContext,
    work: GridCase,
    section_pos: usize,
    step_count: usize,
    bonus_given: bool,
    initial_cost: f64,
    last_solution: Option<PowerFlowSolution>,
    done: bool,
}

impl<'a> Environment<'a> {
    pub fn new(ctx: &'a TaskContext) -> Self {
        Environment {
            ctx,
            work: ctx.case.clone(),
            section_pos: 0,
            step_count: 0,
            bonus_given: false,
            initial_cost: 1.0,
            last_solution: None,
            done: true,
        }
    }

    pub fn section(&self) -> &Section {
        &self.ctx.sections[self.section_pos]
    }

    /// Current generator setpoints (the dispatch the agent edits).
    pub fn dispatch(&self) -> Vec<f64> {
        self.work.generators.iter().map(|g| g.pg).collect()
    }

    pub fn current_case(&self) -> &GridCase {
        &self.work
    }

    pub fn last_solution(&self) -> Option<&PowerFlowSolution> {
        self.last_solution.as_ref()
    }

    /// Episode-start economic cost, the normaliser of the economic reward.
    pub fn initial_cost(&self) -> f64 {
        self.initial_cost
    }

    /// Mask over the 2 * N_G actions: even index = increase by 10%, odd =
    /// decrease by 10%. An action is allowed only when the scaled setpoint
    /// stays inside the unit's limits; out-of-service units are fully masked.
    pub fn action_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.ctx.n_actions()];
        for (slot, &gi) in self.ctx.action_gens.iter().enumerate() {
            let g = &self.work.generators[gi];
            if !g.status {
                continue;
            }
            mask[2 * slot] = g.pg * 1.1 <= g.pmax;
            mask[2 * slot + 1] = g.pg * 0.9 >= g.pmin;
        }
        mask
    }

    fn observe(&self, sol: &PowerFlowSolution, step: usize) -> Result<Observation, EnvError> {
        let raw = raw_state_features(sol)?;
        let h = self.ctx.scaler.standardize(&raw);
        let z = self.ctx.encode_section(sol, &self.work, self.section())?;
        Ok(Observation {
            h,
            z,
            mask: self.action_mask(),
            step,
        })
    }

    /// Start an episode: apply the scenario, solve, and observe.
    pub fn reset(&mut self, scenario: &Scenario) -> Result<Observation, EnvError> {
        let section_pos = self
            .ctx
            .sections
            .iter()
            .position(|s| s.id == scenario.section_id)
            .ok_or(EnvError::UnknownSection {
                id: scenario.section_id,
            })?;
        self.work = apply_scenario(&self.ctx.case, scenario);
        self.section_pos = section_pos;
        self.step_count = 0;
        self.bonus_given = false;
        self.done = false;
        let sol = solve_ac(&self.work, self.ctx.cfg.tol, self.ctx.cfg.max_iter)?;
        let outputs = generator_outputs(&self.work, &sol);
        self.initial_cost = economic_cost(&self.work, &outputs).max(1e-9);
        let obs = self.observe(&sol, 0)?;
        self.last_solution = Some(sol);
        Ok(obs)
    }

    fn success_reached(&self, flow: &crate::powerflow::SectionFlow) -> bool {
        let section = self.section();
        if !flow.within_p_bounds {
            return false;
        }
        if self.ctx.cfg.strict_q {
            if let (Some(qmin), Some(qmax)) = (section.q_min, section.q_max) {
                return qmin <= flow.q && flow.q <= qmax;
            }
        }
        true
    }

    /// Apply one re-dispatch action and advance the episode.
    pub fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        if self.last_solution.is_none() {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let mask = self.action_mask();
        if action >= mask.len() || !mask[action] {
            return Err(EnvError::MaskedAction { action });
        }
        let gi = self.ctx.action_gens[action / 2];
        let factor = if action % 2 == 0 { 1.1 } else { 0.9 };
        self.work.generators[gi].pg *= factor;
        self.step_count += 1;

        let cfg = &self.ctx.cfg;
        let sol = match solve_ac(&self.work, cfg.tol, cfg.max_iter) {
            Ok(sol) => sol,
            Err(PfError::NonConvergence { .. }) | Err(PfError::SingularJacobian) => {
                self.done = true;
                let last = self.last_solution.as_ref().expect("episode was reset");
                let obs = self.observe(last, self.step_count)?;
                return Ok(StepResult {
                    obs,
                    reward: cfg.diverge_penalty,
                    done: true,
                    outcome: Outcome::Diverged,
                    cost: 0.0,
                    section_p: f64::NAN,
                });
            }
            Err(e) => return Err(e.into()),
        };

        let section = self.section();
        let flow = section_flow(&sol, &self.work, section)?;
        let mid = 0.5 * (section.p_min + section.p_max);
        let half_range = 0.5 * (section.p_max - section.p_min);
        let r_pf = -(flow.p - mid).abs() / half_range;
        let outputs = generator_outputs(&self.work, &sol);
        let cost = economic_cost(&self.work, &outputs);
        let r_ed = -cost / self.initial_cost;
        let mut reward = r_pf + cfg.w_ed * r_ed;
        if flow.within_p_bounds && !self.bonus_given {
            reward += cfg.success_bonus;
            self.bonus_given = true;
        }

        let success = self.success_reached(&flow);
        let outcome = if success {
            Outcome::Success
        } else if self.step_count >= cfg.step_limit {
            Outcome::StepLimit
        } else {
            Outcome::Running
        };
        self.done = outcome != Outcome::Running;
        let obs = self.observe(&sol, self.step_count)?;
        self.last_solution = Some(sol);
        Ok(StepResult {
            obs,
            reward,
            done: self.done,
            outcome,
            cost,
            section_p: flow.p,
        })
    }
}

// ---------------------------------------------------------------------------
// Scenario generation
// ---------------------------------------------------------------------------

fn ceil_quarter(pool: usize) -> usize {
    pool.div_ceil(4)
}

/// Draw insecure scenarios: perturb 25% of the generator/load pool with
/// factors in {0.1, ..., 2.0}, keep only candidates whose target-section flow
/// violates its bounds, and split train/test 90/10 by a stable hash of the
/// scenario id. Deterministic under `seed`.
pub fn generate_scenarios(
    ctx: &TaskContext,
    seed: u64,
    count: usize,
) -> Result<ScenarioSet, EnvError> {
    if ctx.sections.is_empty() {
        return Err(EnvError::NoSections);
    }
    let mut rng = Rng::seed_from(seed);
    let gens = &ctx.action_gens;
    let loads = ctx.case.load_buses();
    let pool = gens.len() + loads.len();
    let k = ceil_quarter(pool);
    let max_attempts = (count * 500).max(2000);

    let mut scenarios = Vec::with_capacity(count);
    let mut train_features: Vec<StateMatrix> = Vec::new();
    let mut attempts = 0usize;

    while scenarios.len() < count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(EnvError::ExhaustedAttempts {
                attempts,
                accepted: scenarios.len(),
            });
        }
        let section = &ctx.sections[rng.below(ctx.sections.len())];
        let picked = rng.choose_k(pool, k);
        let perturbations: Vec<Perturbation> = picked
            .iter()
            .map(|&p| {
                let factor = (rng.below(20) + 1) as f64 / 10.0;
                if p < gens.len() {
                    Perturbation {
                        kind: ElementKind::Gen,
                        index: gens[p],
                        factor,
                    }
                } else {
                    Perturbation {
                        kind: ElementKind::Load,
                        index: loads[p - gens.len()],
                        factor,
                    }
                }
            })
            .collect();

        let candidate = Scenario {
            id: scenarios.len() as u32,
            section_id: section.id,
            perturbations,
            split: Split::Train,
            initial_p_mw: 0.0,
        };
        let work = apply_scenario(&ctx.case, &candidate);
        let sol = match solve_ac(&work, ctx.cfg.tol, ctx.cfg.max_iter) {
            Ok(sol) => sol,
            Err(_) => continue, // unsolvable draw, discard
        };
        let flow = match section_flow(&sol, &work, section) {
            Ok(flow) => flow,
            Err(_) => continue,
        };
        if flow.within_p_bounds {
            continue; // secure draw, discard
        }

        let id = scenarios.len() as u32;
        let split = if hash_u64(id as u64) % 10 == 0 {
            Split::Test
        } else {
            Split::Train
        };
        if split == Split::Train {
            if let Ok(raw) = raw_state_features(&sol) {
                train_features.push(raw);
            }
        }
        scenarios.push(Scenario {
            id,
            split,
            initial_p_mw: flow.p,
            ..candidate
        });
    }

    let scaler = FeatureScaler::fit(train_features.iter());
    Ok(ScenarioSet {
        seed,
        requested: count,
        scenarios,
        scaler,
    })
}

// ---------------------------------------------------------------------------
// Scenario file format (line-oriented, version 1)
// ---------------------------------------------------------------------------

/// Serialise a scenario set. Floats use shortest round-trip form, so
/// regeneration from the same (case, seed, count) reproduces the file
/// bit-exactly.
pub fn write_scenario_set(set: &ScenarioSet) -> String {
    use core::fmt::Write;
    let mut out = String::from("# scenario set v1\n");
    let _ = writeln!(out, "meta seed={} count={}", set.seed, set.requested);
    let _ = write!(out, "scaler mean=");
    for (i, m) in set.scaler.mean.iter().enumerate() {
        if i > 0 {
            let _ = write!(out, ",");
        }
        let _ = write!(out, "{m}");
    }
    let _ = write!(out, " std=");
    for (i, s) in set.scaler.std.iter().enumerate() {
        if i > 0 {
            let _ = write!(out, ",");
        }
        let _ = write!(out, "{s}");
    }
    let _ = writeln!(out);
    for s in &set.scenarios {
        let _ = write!(
            out,
            "scenario {} section={} split={} init_p={} perturb=",
            s.id,
            s.section_id,
            match s.split {
                Split::Train => "train",
                Split::Test => "test",
            },
            s.initial_p_mw
        );
        for (i, p) in s.perturbations.iter().enumerate() {
            if i > 0 {
                let _ = write!(out, ";");
            }
            let kind = match p.kind {
                ElementKind::Gen => "gen",
                ElementKind::Load => "load",
            };
            let _ = write!(out, "{kind}:{}:{}", p.index, p.factor);
        }
        let _ = writeln!(out);
    }
    out
}

/// Parse a scenario file written by [`write_scenario_set`].
pub fn parse_scenario_set(text: &str, ctx: &TaskContext) -> Result<ScenarioSet, EnvError> {
    let bad = |line: usize, what: &str| EnvError::BadScenarioFile {
        line,
        what: what.to_string(),
    };
    let mut seed = 0u64;
    let mut requested = 0usize;
    let mut scaler = FeatureScaler::identity();
    let mut scenarios = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("meta ") {
            for tok in rest.split_whitespace() {
                match tok.split_once('=') {
                    Some(("seed", v)) => {
                        seed = v.parse().map_err(|_| bad(line_no, "bad seed"))?
                    }
                    Some(("count", v)) => {
                        requested = v.parse().map_err(|_| bad(line_no, "bad count"))?
                    }
                    _ => return Err(bad(line_no, "unknown meta field")),
                }
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("scaler ") {
            for tok in rest.split_whitespace() {
                let (key, list) = tok
                    .split_once('=')
                    .ok_or_else(|| bad(line_no, "bad scaler field"))?;
                let vals: Result<Vec<f64>, _> = list.split(',').map(|v| v.parse()).collect();
                let vals = vals.map_err(|_| bad(line_no, "non-numeric scaler value"))?;
                if vals.len() != 4 {
                    return Err(bad(line_no, "scaler needs 4 values per field"));
                }
                match key {
                    "mean" => scaler.mean.copy_from_slice(&vals),
                    "std" => scaler.std.copy_from_slice(&vals),
                    _ => return Err(bad(line_no, "unknown scaler field")),
                }
            }
            continue;
        }
        let rest = line
            .strip_prefix("scenario ")
            .ok_or_else(|| bad(line_no, "expected `scenario ...`"))?;
        let mut parts = rest.split_whitespace();
        let id: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(line_no, "missing scenario id"))?;
        let mut section_id = None;
        let mut split = None;
        let mut init_p = None;
        let mut perturbations = Vec::new();
        for tok in parts {
            match tok.split_once('=') {
                Some(("section", v)) => {
                    section_id = Some(v.parse().map_err(|_| bad(line_no, "bad section id"))?)
                }
                Some(("split", "train")) => split = Some(Split::Train),
                Some(("split", "test")) => split = Some(Split::Test),
                Some(("split", _)) => return Err(bad(line_no, "split must be train or test")),
                Some(("init_p", v)) => {
                    init_p = Some(v.parse().map_err(|_| bad(line_no, "bad init_p"))?)
                }
                Some(("perturb", list)) => {
                    for item in list.split(';').filter(|s| !s.is_empty()) {
                        let mut f = item.split(':');
                        let kind = match f.next() {
                            Some("gen") => ElementKind::Gen,
                            Some("load") => ElementKind::Load,
                            _ => return Err(bad(line_no, "perturbation kind must be gen or load")),
                        };
                        let index: usize = f
                            .next()
                            .and_then(|v| v.parse().ok())
                            .ok_or_else(|| bad(line_no, "bad perturbation index"))?;
                        let factor: f64 = f
                            .next()
                            .and_then(|v| v.parse().ok())
                            .ok_or_else(|| bad(line_no, "bad perturbation factor"))?;
                        let in_range = match kind {
                            ElementKind::Gen => index < ctx.case.generators.len(),
                            ElementKind::Load => index < ctx.case.buses.len(),
                        };
                        if !in_range {
                            return Err(bad(line_no, "perturbation index out of range for case"));
                        }
                        perturbations.push(Perturbation { kind, index, factor });
                    }
                }
                _ => return Err(bad(line_no, &format!("unknown field `{tok}`"))),
            }
        }
        let section_id = section_id.ok_or_else(|| bad(line_no, "missing section"))?;
        if ctx.section_by_id(section_id).is_none() {
            return Err(EnvError::UnknownSection { id: section_id });
        }
        scenarios.push(Scenario {
            id,
            section_id,
            perturbations,
            split: split.ok_or_else(|| bad(line_no, "missing split"))?,
            initial_p_mw: init_p.ok_or_else(|| bad(line_no, "missing init_p"))?,
        });
    }

    Ok(ScenarioSet {
        seed,
        requested,
        scenarios,
        scaler,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    fn bench_ctx() -> TaskContext {
        let case = cases::bench30();
        let (sections, _) = cases::bench30_sections(&case);
        TaskContext::new(case, sections, EnvConfig::default())
    }

    fn nine_ctx() -> TaskContext {
        let case = cases::nine_bus();
        let (sections, _) = cases::nine_bus_sections(&case);
        TaskContext::new(case, sections, EnvConfig::default())
    }

    #[test]
    fn pool_quarter_is_ceiled() {
        assert_eq!(ceil_quarter(153), 39);
        assert_eq!(ceil_quarter(4), 1);
        assert_eq!(ceil_quarter(5), 2);
    }

    #[test]
    fn generation_is_deterministic_and_insecure() {
        let ctx = bench_ctx();
        let a = generate_scenarios(&ctx, 42, 20).unwrap();
        let b = generate_scenarios(&ctx, 42, 20).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.scenarios.len(), 20);
        for s in &a.scenarios {
            let section = ctx.section_by_id(s.section_id).unwrap();
            assert!(
                s.initial_p_mw < section.p_min || s.initial_p_mw > section.p_max,
                "scenario {} must start insecure",
                s.id
            );
            assert_eq!(s.perturbations.len(), ceil_quarter(7 + ctx.case.load_buses().len()));
            for p in &s.perturbations {
                let steps = p.factor / 0.1;
                assert!((steps - libm::round(steps)).abs() < 1e-9);
                assert!(p.factor >= 0.1 - 1e-12 && p.factor <= 2.0 + 1e-12);
            }
        }
    }

    #[test]
    fn different_seeds_differ() {
        let ctx = bench_ctx();
        let a = generate_scenarios(&ctx, 1, 10).unwrap();
        let b = generate_scenarios(&ctx, 2, 10).unwrap();
        assert_ne!(a.scenarios, b.scenarios);
    }

    #[test]
    fn loose_bounds_exhaust_attempts() {
        let mut ctx = nine_ctx();
        ctx.sections[0].p_min = -100000.0;
        ctx.sections[0].p_max = 100000.0;
        match generate_scenarios(&ctx, 7, 5) {
            Err(EnvError::ExhaustedAttempts { accepted, .. }) => assert_eq!(accepted, 0),
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn reset_zeroes_encoding_outside_section_and_shapes_state() {
        let ctx = nine_ctx();
        let set = generate_scenarios(&ctx, 3, 5).unwrap();
        let mut env = Environment::new(&ctx);
        let obs = env.reset(&set.scenarios[0]).unwrap();
        assert_eq!(obs.h.n, 9);
        assert_eq!(obs.h.values.len(), 9 * 4);
        assert_eq!(obs.z.len(), 4 * ctx.case.branches.len());
        let member: Vec<usize> = env
            .section()
            .lines
            .iter()
            .map(|&(f, t)| ctx.case.find_branch(f, t)[0].0)
            .collect();
        for k in 0..ctx.case.branches.len() {
            if !member.contains(&k) {
                for c in 0..4 {
                    assert_eq!(obs.z[4 * k + c], 0.0);
                }
            }
        }
        assert!(obs.mask.iter().any(|&m| m));
    }

    #[test]
    fn mask_boundary_rules() {
        let ctx = nine_ctx();
        let mut env = Environment::new(&ctx);
        let set = generate_scenarios(&ctx, 3, 1).unwrap();
        env.reset(&set.scenarios[0]).unwrap();

        // force gen 0 to its ceiling: increase masked, decrease allowed
        env.work.generators[0].pg = env.work.generators[0].pmax;
        let mask = env.action_mask();
        assert!(!mask[0], "increase at Pmax must be masked");
        assert!(mask[1], "decrease at Pmax stays allowed when 0.9 Pg >= Pmin");

        // Pg = 0 with Pmin = 0: decrease allowed (0.9 * 0 = 0 >= 0)
        env.work.generators[3].pg = 0.0;
        env.work.generators[3].pmin = 0.0;
        let mask = env.action_mask();
        assert!(mask[7], "decrease at zero output with zero floor stays allowed");

        // mid-range unit: both directions allowed
        env.work.generators[1].pg =
            0.5 * (env.work.generators[1].pmin + env.work.generators[1].pmax);
        let mask = env.action_mask();
        assert!(mask[2] && mask[3]);
    }

    #[test]
    fn masked_action_is_hard_error() {
        let ctx = nine_ctx();
        let set = generate_scenarios(&ctx, 3, 1).unwrap();
        let mut env = Environment::new(&ctx);
        env.reset(&set.scenarios[0]).unwrap();
        env.work.generators[0].pg = env.work.generators[0].pmax;
        assert_eq!(
            env.step(0).unwrap_err(),
            EnvError::MaskedAction { action: 0 }
        );
    }

    #[test]
    fn reward_is_zero_at_bound_midpoint() {
        // steer a two-bus case so the section flow sits exactly mid-bounds
        let case = cases::two_bus();
        let sections = crate::grid::load_section_config(
            "version 1\nsection 1 p_min=40 p_max=60 lines=(1,2)\n",
            &case,
        )
        .unwrap();
        let mut cfg = EnvConfig::default();
        cfg.w_ed = 0.0;
        cfg.success_bonus = 0.0;
        let ctx = TaskContext::new(case, sections, cfg);
        let mut env = Environment::new(&ctx);
        // hand-built scenario: no perturbations, flow = 50 MW = midpoint
        let scenario = Scenario {
            id: 0,
            section_id: 1,
            perturbations: vec![],
            split: Split::Train,
            initial_p_mw: 50.0,
        };
        env.reset(&scenario).unwrap();
        // act on the slack unit: setpoint change does not move the flow
        let result = env.step(0).unwrap();
        assert!(
            result.reward.abs() < 1e-9,
            "midpoint flow must score zero, got {}",
            result.reward
        );
        assert_eq!(result.outcome, Outcome::Success);
    }

    #[test]
    fn strict_mode_also_requires_reactive_bounds() {
        // the two-bus line carries ~50 MW (inside 40..60) but its from-side
        // reactive flow is the series loss, well above a 1 MVAr cap
        let case = cases::two_bus();
        let sections = crate::grid::load_section_config(
            "version 1\nsection 1 p_min=40 p_max=60 q_min=-1 q_max=1 lines=(1,2)\n",
            &case,
        )
        .unwrap();
        let scenario = Scenario {
            id: 0,
            section_id: 1,
            perturbations: vec![],
            split: Split::Train,
            initial_p_mw: 50.0,
        };

        let relaxed = TaskContext::new(case.clone(), sections.clone(), EnvConfig::default());
        let mut env = Environment::new(&relaxed);
        env.reset(&scenario).unwrap();
        let r = env.step(0).unwrap();
        assert_eq!(r.outcome, Outcome::Success, "default mode checks MW only");

        let mut cfg = EnvConfig::default();
        cfg.strict_q = true;
        let strict = TaskContext::new(case, sections, cfg);
        let mut env = Environment::new(&strict);
        env.reset(&scenario).unwrap();
        let r = env.step(0).unwrap();
        assert_eq!(
            r.outcome,
            Outcome::Running,
            "strict mode must also demand the reactive bounds"
        );
        // the first in-bounds MW flow still earns the bonus exactly once
        assert!(r.reward > EnvConfig::default().success_bonus / 2.0);
        let r2 = env.step(0).unwrap();
        assert!(r2.reward < EnvConfig::default().success_bonus / 2.0);
    }

    #[test]
    fn linear_cost_sums_generation() {
        let mut case = cases::bench30();
        for c in &mut case.gencost {
            *c = crate::grid::GenCost {
                alpha: 0.0,
                beta: 1.0,
                lambda: 0.0,
            };
        }
        let outputs = vec![100.0, 50.0, 50.0, 40.0, 30.0, 20.0, 10.0];
        assert_eq!(economic_cost(&case, &outputs), 300.0);
    }

    #[test]
    fn success_iff_active_bounds() {
        let ctx = nine_ctx();
        let set = generate_scenarios(&ctx, 11, 3).unwrap();
        let mut env = Environment::new(&ctx);
        env.reset(&set.scenarios[0]).unwrap();
        for _ in 0..ctx.cfg.step_limit {
            let mask = env.action_mask();
            let action = mask.iter().position(|&m| m).unwrap();
            let r = env.step(action).unwrap();
            let section = env.section();
            let in_bounds = section.p_min <= r.section_p && r.section_p <= section.p_max;
            assert_eq!(
                r.outcome == Outcome::Success,
                in_bounds,
                "success must coincide with the active-power bounds"
            );
            if r.done {
                break;
            }
        }
    }

    #[test]
    fn episodes_are_bitwise_deterministic() {
        let ctx = nine_ctx();
        let set = generate_scenarios(&ctx, 5, 3).unwrap();
        let run = || {
            let mut env = Environment::new(&ctx);
            let mut trace = Vec::new();
            let obs = env.reset(&set.scenarios[1]).unwrap();
            trace.extend_from_slice(&obs.h.values);
            for _ in 0..10 {
                let mask = env.action_mask();
                let action = mask.iter().position(|&m| m).unwrap();
                let r = env.step(action).unwrap();
                trace.push(r.reward);
                trace.extend_from_slice(&r.obs.h.values);
                trace.extend_from_slice(&r.obs.z);
                if r.done {
                    break;
                }
            }
            trace
        };
        let a = run();
        let b = run();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn mask_soundness_under_rollout() {
        let ctx = nine_ctx();
        let set = generate_scenarios(&ctx, 21, 2).unwrap();
        let mut env = Environment::new(&ctx);
        env.reset(&set.scenarios[0]).unwrap();
        let mut rng = Rng::seed_from(3);
        for _ in 0..30 {
            let mask = env.action_mask();
            let allowed: Vec<usize> = mask
                .iter()
                .enumerate()
                .filter(|(_, &m)| m)
                .map(|(i, _)| i)
                .collect();
            let action = allowed[rng.below(allowed.len())];
            let r = env.step(action).unwrap();
            for &gi in &ctx.action_gens {
                let g = &env.work.generators[gi];
                assert!(
                    g.pg >= g.pmin - 1e-9 && g.pg <= g.pmax + 1e-9,
                    "unmasked action pushed unit {gi} outside its limits"
                );
            }
            if r.done {
                env.reset(&set.scenarios[1]).unwrap();
            }
        }
    }

    #[test]
    fn scenario_file_roundtrip_and_bitexact_regeneration() {
        let ctx = bench_ctx();
        let set = generate_scenarios(&ctx, 9, 12).unwrap();
        let text = write_scenario_set(&set);
        let parsed = parse_scenario_set(&text, &ctx).unwrap();
        assert_eq!(set, parsed);
        // regeneration reproduces the exact bytes
        let again = write_scenario_set(&generate_scenarios(&ctx, 9, 12).unwrap());
        assert_eq!(text, again);
    }

    #[test]
    fn scenario_file_rejects_bad_input() {
        let ctx = bench_ctx();
        assert!(matches!(
            parse_scenario_set("scenario 0 section=1 split=xyz init_p=1 perturb=", &ctx),
            Err(EnvError::BadScenarioFile { .. })
        ));
        assert!(matches!(
            parse_scenario_set(
                "scenario 0 section=99 split=train init_p=1 perturb=gen:0:1.5",
                &ctx
            ),
            Err(EnvError::UnknownSection { id: 99 })
        ));
        assert!(matches!(
            parse_scenario_set(
                "scenario 0 section=1 split=train init_p=1 perturb=gen:999:1.5",
                &ctx
            ),
            Err(EnvError::BadScenarioFile { .. })
        ));
    }
}
