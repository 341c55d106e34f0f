//! The active learning loop: bootstrap walk, capability discovery, query
//! synthesis and execution, model rebuilds, initial-state sampling and
//! stopping rules.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::abstraction::{AbstractState, AtomUniverse, Literal, LiteralConjunction};
use crate::capability_model::{build_models, capability_name, CapabilityModel};
use crate::dataset::{abstract_trajectory_indexed, TemporalBound, Transition, TransitionDataset};
use crate::environment::{Abstraction, BlackBoxAgent, Environment, ScriptedAgent, Simulator};
use crate::error::{Error, Result};
use crate::query_engine::{random_policy_query, synthesize_exact, synthesize_sampled, Query, QueryPolicy, SearchConfig};
use crate::scalar::Probability;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Exact,
    Sampled,
    Random,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Variant::Exact),
            "sampled" => Ok(Variant::Sampled),
            "random" | "random-baseline" => Ok(Variant::Random),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Exact => "exact",
            Variant::Sampled => "sampled",
            Variant::Random => "random",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub variant: Variant,
    pub runs_per_query: usize,
    /// Environment-step horizon per capability attempt.
    pub horizon: usize,
    /// Temporal bound Θ; `None` uses the environment's default.
    pub theta: Option<TemporalBound>,
    pub search: SearchConfig,
    /// Stop after this many consecutive queries without a novel transition
    /// (not applied to the random baseline).
    pub early_stop_window: usize,
    pub max_queries: usize,
    pub wall_clock_seconds: Option<f64>,
    /// Low-level random-walk steps used for capability discovery.
    pub bootstrap_steps: usize,
    pub random_policy_length: usize,
    /// Use a random policy when synthesis finds no distinguishing policy.
    pub random_fallback: bool,
    /// Synthesized policies scoring at or below this count as not distinguishing.
    pub min_score: f64,
    /// After a query that added nothing new, run a random policy instead of
    /// synthesizing again from the unchanged models.
    pub fallback_when_stale: bool,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            variant: Variant::Exact,
            runs_per_query: 25,
            horizon: 100,
            theta: None,
            search: SearchConfig::default(),
            early_stop_window: 20,
            max_queries: 200,
            wall_clock_seconds: None,
            bootstrap_steps: 300,
            random_policy_length: 30,
            random_fallback: true,
            min_score: 0.0,
            fallback_when_stale: true,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs_per_query == 0 || self.horizon == 0 || self.early_stop_window == 0 || self.random_policy_length == 0 {
            return Err(Error::Config(
                "runs_per_query, horizon, early_stop_window and random_policy_length must be positive".into(),
            ));
        }
        if let Some(t) = self.theta {
            t.validate()?;
        }
        if !(self.min_score >= 0.0) {
            return Err(Error::Config("min_score must be non-negative".into()));
        }
        if let Some(w) = self.wall_clock_seconds {
            if !(w >= 0.0) {
                return Err(Error::Config("wall_clock_seconds must be non-negative".into()));
            }
        }
        self.search.validate()
    }
}

/// Uniform-random low-level walk of `steps` actions from the reset state.
pub fn random_walk<E: Environment, R: Rng + ?Sized>(sim: &mut Simulator<'_, E>, steps: usize, rng: &mut R) -> Vec<E::State> {
    let mut traj = vec![sim.reset()];
    for _ in 0..steps {
        let actions = sim.available_actions();
        let Some(a) = actions.choose(rng) else { break };
        traj.push(sim.step(a));
    }
    traj
}

/// Single-literal intents from observed abstract changes: the post-change
/// literal of every changed atom, plus its re-groundings over all objects of
/// matching type.
pub fn discover_capabilities<'a>(
    sequences: impl IntoIterator<Item = &'a [AbstractState]>,
    universe: &AtomUniverse,
) -> BTreeMap<String, LiteralConjunction> {
    let mut out = BTreeMap::new();
    let n = universe.len();
    for seq in sequences {
        for w in seq.windows(2) {
            let changed = w[0].bits().and_not(w[1].bits()).or(&w[1].bits().and_not(w[0].bits()));
            for atom in changed.ones_iter() {
                let positive = w[1].holds(atom);
                for k in universe.regroundings(atom) {
                    let lit = Literal { atom: k, positive };
                    out.entry(capability_name(&lit, universe)).or_insert_with(|| lit.as_conjunction(n));
                }
            }
        }
    }
    out
}

/// A candidate next initial state.
#[derive(Clone, Debug)]
pub struct OutcomeState<X> {
    pub x: X,
    pub s: AbstractState,
    /// Environment steps from the reset state.
    pub distance: usize,
}

/// Weights n_max + 1 − |𝒟(s)| over the candidates' abstract states.
pub fn initial_state_weights(candidates: &[AbstractState], dataset: &TransitionDataset) -> Vec<u64> {
    let visits: Vec<u64> = candidates.iter().map(|s| dataset.visits_from(s)).collect();
    let n_max = visits.iter().copied().max().unwrap_or(0);
    visits.iter().map(|v| n_max + 1 - v).collect()
}

/// Picks the next query's initial state from the outcome states `S_o`, or
/// `None` for a reset: when every candidate lies more than `horizon` steps from
/// reset, or only the previous initial state remains.
pub fn sample_initial_state<X: Clone, R: Rng + ?Sized>(
    outcomes: &[OutcomeState<X>],
    previous: &AbstractState,
    dataset: &TransitionDataset,
    horizon: usize,
    rng: &mut R,
) -> Option<OutcomeState<X>> {
    let mut seen = std::collections::BTreeSet::new();
    let candidates: Vec<&OutcomeState<X>> = outcomes
        .iter()
        .filter(|o| o.distance <= horizon)
        .filter(|o| seen.insert(o.s.clone()))
        .collect();
    if candidates.is_empty() || (candidates.len() == 1 && &candidates[0].s == previous) {
        return None;
    }
    let states: Vec<AbstractState> = candidates.iter().map(|o| o.s.clone()).collect();
    let weights = initial_state_weights(&states, dataset);
    let total: u64 = weights.iter().sum();
    let mut u = rng.gen_range(0..total);
    for (o, w) in candidates.iter().zip(&weights) {
        if u < *w {
            return Some((*o).clone());
        }
        u -= w;
    }
    unreachable!("weights cover the sampled index")
}

/// Result of executing one query.
#[derive(Clone, Debug)]
pub struct Execution<X> {
    pub transitions: Vec<Transition>,
    /// Abstract sequences of every attempt, for capability discovery.
    pub sequences: Vec<Vec<AbstractState>>,
    pub outcomes: Vec<OutcomeState<X>>,
    pub capability_executions: usize,
}

/// Runs the query `n` times from `x0` (at `distance` steps from reset).
pub fn execute_query<E: Environment>(
    sim: &mut Simulator<'_, E>,
    agent: &mut impl BlackBoxAgent<E>,
    query: &Query<E::State>,
    capabilities: &BTreeMap<String, LiteralConjunction>,
    theta: TemporalBound,
    horizon: usize,
    distance: usize,
) -> Result<Execution<E::State>> {
    let env = sim.env();
    let alpha = Abstraction(env);
    let mut exec = Execution {
        transitions: Vec::new(),
        sequences: Vec::new(),
        outcomes: Vec::new(),
        capability_executions: 0,
    };
    for _ in 0..query.n {
        sim.revert(&query.x0);
        let mut steps = distance;
        for step in 0..query.policy.len() {
            let s = env.abstraction(sim.current());
            let Some(c) = query.policy.action(step, &s) else { break };
            let Some(intent) = capabilities.get(c) else { break };
            let traj = agent.attempt(sim, intent, horizon);
            exec.capability_executions += 1;
            let abs = abstract_trajectory_indexed(&traj, &alpha, theta)?;
            let (end_idx, end) = abs.last().expect("nonempty").clone();
            let full_len = traj.len();
            exec.sequences.push(abs.into_iter().map(|(_, s)| s).collect());
            // observation stops at the Θ-th abstract state; resume from there
            let keep = if end_idx + 1 < full_len {
                let mut k = end_idx;
                while k + 1 < full_len && env.abstraction(&traj[k + 1]) == end {
                    k += 1;
                }
                k
            } else {
                full_len - 1
            };
            if keep + 1 < full_len {
                sim.revert(&traj[keep]);
            }
            steps += keep;
            exec.transitions.push(Transition::new(s, c, end));
        }
        exec.outcomes.push(OutcomeState {
            x: sim.current().clone(),
            s: env.abstraction(sim.current()),
            distance: steps,
        });
    }
    Ok(exec)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    EarlyStop,
    QueryBudget,
    WallClock,
}

/// One line of the run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub index: usize,
    pub variant: Variant,
    pub initial_state: Vec<String>,
    pub score: f64,
    pub fallback: bool,
    pub policy: serde_json::Value,
    pub runs: usize,
    pub transitions: usize,
    pub novel: usize,
    pub capability_executions: usize,
    pub cumulative_capability_executions: usize,
    pub unique_transitions: usize,
    pub total_transitions: u64,
    pub capabilities: usize,
    pub snapshot: String,
    pub synthesis_seconds: f64,
    pub elapsed_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub records: Vec<QueryRecord>,
}

impl RunLog {
    pub fn push(&mut self, record: QueryRecord) {
        debug_assert!(self.records.last().is_none_or(|r| r.elapsed_seconds <= record.elapsed_seconds));
        self.records.push(record);
    }

    pub fn write_jsonl<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: std::io::BufRead>(input: R) -> Result<Self> {
        let mut log = RunLog::default();
        for line in input.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                log.records.push(serde_json::from_str(&line)?);
            }
        }
        Ok(log)
    }
}

/// State handed to the per-query observer.
pub struct QueryEvent<'a, P> {
    pub record: &'a QueryRecord,
    pub pess: &'a CapabilityModel<P>,
    pub opt: &'a CapabilityModel<P>,
    pub dataset: &'a TransitionDataset,
    pub capabilities: &'a BTreeMap<String, LiteralConjunction>,
    pub policy: &'a QueryPolicy,
}

pub struct LearnOutcome<P> {
    pub pess: CapabilityModel<P>,
    pub opt: CapabilityModel<P>,
    pub dataset: TransitionDataset,
    pub capabilities: BTreeMap<String, LiteralConjunction>,
    pub log: RunLog,
    pub stop: StopReason,
    pub last_policy: QueryPolicy,
}

/// Runs the learning loop; `observer` sees the models after every query.
pub fn run<E: Environment, P: Probability>(
    env: &E,
    config: &LearnerConfig,
    mut observer: impl FnMut(&QueryEvent<'_, P>),
) -> Result<LearnOutcome<P>> {
    config.validate()?;
    let start = Instant::now();
    let universe: Arc<AtomUniverse> = env.universe().clone();
    let theta = config.theta.unwrap_or_else(|| env.default_theta());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sim = Simulator::new(env, rng.gen());
    let mut agent = ScriptedAgent;
    let alpha = Abstraction(env);

    let walk = random_walk(&mut sim, config.bootstrap_steps, &mut rng);
    let walk_abs: Vec<AbstractState> = abstract_trajectory_indexed(&walk, &alpha, TemporalBound::Unbounded)?
        .into_iter()
        .map(|(_, s)| s)
        .collect();
    let mut capabilities = discover_capabilities([walk_abs.as_slice()], &universe);
    let mut dataset = TransitionDataset::new();
    let (mut pess, mut opt) = build_models::<P>(&universe, &capabilities, &dataset);

    let reset = OutcomeState {
        x: env.reset_state(),
        s: env.abstraction(&env.reset_state()),
        distance: 0,
    };
    let mut current = reset.clone();
    let mut log = RunLog::default();
    let mut streak = 0usize;
    let mut executions = 0usize;
    let mut stop = StopReason::QueryBudget;
    let mut last_policy = QueryPolicy::empty();

    for index in 0..config.max_queries {
        if let Some(limit) = config.wall_clock_seconds {
            if start.elapsed().as_secs_f64() >= limit {
                stop = StopReason::WallClock;
                break;
            }
        }
        let synth_start = Instant::now();
        let synth_seed: u64 = rng.gen();
        let names: Vec<String> = capabilities.keys().cloned().collect();
        let stale = config.random_fallback && config.fallback_when_stale && streak > 0;
        let synthesis = match config.variant {
            _ if stale => None,
            Variant::Exact => Some(synthesize_exact(&current.s, &pess, &opt, &config.search, synth_seed)),
            Variant::Sampled => Some(synthesize_sampled(&current.s, &pess, &opt, &config.search, synth_seed)),
            Variant::Random => None,
        };
        let score = synthesis.as_ref().map_or(0.0, |s| s.score);
        let mut fallback = false;
        let policy = match synthesis {
            Some(s) if s.score > config.min_score => s.policy,
            _ if names.is_empty() => QueryPolicy::empty(),
            Some(_) if !config.random_fallback => QueryPolicy::empty(),
            _ => {
                fallback = config.variant != Variant::Random;
                random_policy_query((), &names, config.random_policy_length, 1, &mut rng)?.policy
            }
        };
        let synthesis_seconds = synth_start.elapsed().as_secs_f64();
        let query = Query {
            x0: current.x.clone(),
            policy,
            n: config.runs_per_query,
        };
        let exec = execute_query(&mut sim, &mut agent, &query, &capabilities, theta, config.horizon, current.distance)?;
        let mut novel = 0;
        for t in &exec.transitions {
            novel += dataset.insert(t.clone()) as usize;
        }
        executions += exec.capability_executions;
        for (k, v) in discover_capabilities(exec.sequences.iter().map(Vec::as_slice), &universe) {
            capabilities.entry(k).or_insert(v);
        }
        (pess, opt) = build_models::<P>(&universe, &capabilities, &dataset);

        let record = QueryRecord {
            index,
            variant: config.variant,
            initial_state: universe.decode_state(&current.s),
            score,
            fallback,
            policy: query.policy.to_json(&universe),
            runs: query.n,
            transitions: exec.transitions.len(),
            novel,
            capability_executions: exec.capability_executions,
            cumulative_capability_executions: executions,
            unique_transitions: dataset.unique(),
            total_transitions: dataset.total(),
            capabilities: capabilities.len(),
            snapshot: format!("q{index:04}"),
            synthesis_seconds,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        };
        observer(&QueryEvent {
            record: &record,
            pess: &pess,
            opt: &opt,
            dataset: &dataset,
            capabilities: &capabilities,
            policy: &query.policy,
        });
        log.push(record);
        last_policy = query.policy;

        let mut outcomes = exec.outcomes;
        outcomes.push(current.clone());
        current = sample_initial_state(&outcomes, &current.s, &dataset, config.horizon, &mut rng)
            .unwrap_or_else(|| reset.clone());

        streak = if novel == 0 { streak + 1 } else { 0 };
        if config.variant != Variant::Random && streak >= config.early_stop_window {
            stop = StopReason::EarlyStop;
            break;
        }
    }

    Ok(LearnOutcome {
        pess,
        opt,
        dataset,
        capabilities,
        log,
        stop,
        last_policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::VacuumWorld;

    #[test]
    fn walk_examples() {
        let w = VacuumWorld::new();
        let mut sim = Simulator::new(&w, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(random_walk(&mut sim, 0, &mut rng), vec![w.reset_state()]);
        let a = random_walk(&mut Simulator::new(&w, 4), 50, &mut ChaCha8Rng::seed_from_u64(2));
        let b = random_walk(&mut Simulator::new(&w, 4), 50, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(a, b);
        assert_eq!(a.len(), 51);
    }

    #[test]
    fn walk_changes_abstraction() {
        let w = VacuumWorld::new();
        let mut changed = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let walk = random_walk(&mut Simulator::new(&w, seed), 100, &mut rng);
            let s0 = w.abstraction(&walk[0]);
            changed += walk.iter().any(|x| w.abstraction(x) != s0) as usize;
        }
        assert!(changed >= 99);
    }

    #[test]
    fn discovery_examples() {
        let w = VacuumWorld::new();
        let u = w.universe();
        let a = u.encode_state(["charged(robot)"]).unwrap();
        assert!(discover_capabilities([vec![a.clone(), a.clone()].as_slice()], u).is_empty());

        let b = u.encode_state(["charged(robot)", "clean(l1)"]).unwrap();
        let caps = discover_capabilities([vec![a.clone(), b].as_slice()], u);
        assert_eq!(
            caps.keys().cloned().collect::<Vec<_>>(),
            ["achieve__clean(l1)", "achieve__clean(l2)"]
        );
        let c = u.empty_state();
        let caps = discover_capabilities([vec![a, c].as_slice()], u);
        assert_eq!(caps.keys().cloned().collect::<Vec<_>>(), ["achieve__not_charged(robot)"]);
        let intent = &caps["achieve__not_charged(robot)"];
        assert!(intent.satisfied_by(&u.empty_state()));
    }

    #[test]
    fn initial_state_examples() {
        let w = VacuumWorld::new();
        let u = w.universe();
        let s1 = u.empty_state();
        let s2 = u.encode_state(["charged(robot)"]).unwrap();
        let mut ds = TransitionDataset::new();
        ds.add(Transition::new(s2.clone(), "c", s1.clone()), 4);
        assert_eq!(initial_state_weights(&[s1.clone(), s2.clone()], &ds), vec![5, 1]);
        assert_eq!(initial_state_weights(&[s1.clone(), s1.clone()], &ds), vec![1, 1]);

        let only_prev = vec![OutcomeState { x: (), s: s2.clone(), distance: 3 }];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_initial_state(&only_prev, &s2, &ds, 100, &mut rng).is_none());
        let far = vec![OutcomeState { x: (), s: s1.clone(), distance: 101 }];
        assert!(sample_initial_state(&far, &s2, &ds, 100, &mut rng).is_none());

        let both = vec![
            OutcomeState { x: (), s: s1.clone(), distance: 1 },
            OutcomeState { x: (), s: s2.clone(), distance: 1 },
        ];
        let trials = 60_000;
        let hits = (0..trials)
            .filter(|_| sample_initial_state(&both, &s2, &ds, 100, &mut rng).unwrap().s == s1)
            .count();
        assert!((hits as f64 / trials as f64 - 5.0 / 6.0).abs() < 0.01);
    }

    #[test]
    fn zero_query_budget_keeps_bootstrap_model() {
        let w = VacuumWorld::new();
        let cfg = LearnerConfig {
            max_queries: 0,
            ..LearnerConfig::default()
        };
        let out = run::<_, f64>(&w, &cfg, |_| {}).unwrap();
        assert!(out.dataset.is_empty());
        assert!(out.log.records.is_empty());
        assert_eq!(out.pess.rule_count(), 0);
        assert!(!out.capabilities.is_empty());
    }

    #[test]
    fn undefined_policy_gives_trivial_runs() {
        let w = VacuumWorld::new();
        let mut sim = Simulator::new(&w, 0);
        let q = Query {
            x0: w.reset_state(),
            policy: QueryPolicy::empty(),
            n: 25,
        };
        let exec = execute_query(&mut sim, &mut ScriptedAgent, &q, &BTreeMap::new(), TemporalBound::Unbounded, 100, 0)
            .unwrap();
        assert!(exec.transitions.is_empty());
        assert_eq!(exec.outcomes.len(), 25);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = LearnerConfig {
            runs_per_query: 0,
            ..LearnerConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
