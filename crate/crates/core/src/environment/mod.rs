//! Simulator and black-box agent contracts, plus built-in environments with
//! scripted stochastic agents and declared ground-truth capability models.

mod blocks;
mod roads;
mod vacuum;

use std::fmt::Debug;
use std::hash::Hash;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::abstraction::{AbstractState, AbstractionFn, AtomUniverse, Condition, LiteralConjunction};
use crate::capability_model::{capability_name, Capability, CapabilityModel, ConditionalEffectRule, Flavor, Outcome};
use crate::dataset::{EffectPair, TemporalBound};
use crate::error::{Error, Result};

pub use blocks::{BlockPos, BlocksAction, BlocksState, BlocksWorld};
pub use roads::{RoadAction, RoadState, RoadWorld};
pub use vacuum::{Place, VacuumAction, VacuumState, VacuumWorld};

/// A problem instance: low-level dynamics, the abstraction α, a scripted agent
/// and the agent's ground-truth capability model.
///
/// Dynamics are pure functions of (state, action, rng); the stateful
/// [`Simulator`] handle adds reset/revert on top.
pub trait Environment: Send + Sync {
    type State: Clone + Debug + PartialEq + Eq + Hash + Send + Sync;
    type Action: Clone + Debug;

    fn name(&self) -> &str;
    fn universe(&self) -> &Arc<AtomUniverse>;
    fn reset_state(&self) -> Self::State;
    fn abstraction(&self, x: &Self::State) -> AbstractState;
    fn available_actions(&self, x: &Self::State) -> Vec<Self::Action>;
    fn step(&self, x: &Self::State, a: &Self::Action, rng: &mut dyn RngCore) -> Self::State;

    /// The scripted agent's next action toward `intent` at step `t` of an
    /// attempt, or `None` to stop (intent satisfied, or the agent gives up).
    fn agent_action(&self, x: &Self::State, intent: &LiteralConjunction, t: usize) -> Option<Self::Action>;

    fn ground_truth(&self) -> CapabilityModel<f64>;

    fn default_theta(&self) -> TemporalBound {
        TemporalBound::Unbounded
    }
}

/// α as an [`AbstractionFn`] over an environment.
pub struct Abstraction<'a, E>(pub &'a E);

impl<E: Environment> AbstractionFn<E::State> for Abstraction<'_, E> {
    fn abstract_state(&self, x: &E::State) -> AbstractState {
        self.0.abstraction(x)
    }
}

/// Stateful simulator handle with reset and revert.
pub struct Simulator<'a, E: Environment> {
    env: &'a E,
    current: E::State,
    rng: ChaCha8Rng,
}

impl<'a, E: Environment> Simulator<'a, E> {
    pub fn new(env: &'a E, seed: u64) -> Self {
        Simulator {
            env,
            current: env.reset_state(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn env(&self) -> &'a E {
        self.env
    }

    pub fn reset(&mut self) -> E::State {
        self.current = self.env.reset_state();
        self.current.clone()
    }

    pub fn revert(&mut self, x: &E::State) {
        self.current = x.clone();
    }

    pub fn current(&self) -> &E::State {
        &self.current
    }

    pub fn available_actions(&self) -> Vec<E::Action> {
        self.env.available_actions(&self.current)
    }

    pub fn step(&mut self, a: &E::Action) -> E::State {
        self.current = self.env.step(&self.current, a, &mut self.rng);
        self.current.clone()
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn rng_snapshot(&self) -> ChaCha8Rng {
        self.rng.clone()
    }

    pub fn restore_rng(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Intent in, trajectory out.
pub trait BlackBoxAgent<E: Environment> {
    /// Pursues `intent` from the simulator's current state for at most
    /// `horizon` steps and returns the visited states, starting state included.
    fn attempt(&mut self, sim: &mut Simulator<'_, E>, intent: &LiteralConjunction, horizon: usize) -> Vec<E::State>;
}

/// Agent driven by the environment's own policy table.
#[derive(Clone, Copy, Debug, Default)]
pub struct ScriptedAgent;

impl<E: Environment> BlackBoxAgent<E> for ScriptedAgent {
    fn attempt(&mut self, sim: &mut Simulator<'_, E>, intent: &LiteralConjunction, horizon: usize) -> Vec<E::State> {
        let mut traj = vec![sim.current().clone()];
        for t in 0..horizon {
            let Some(a) = sim.env().agent_action(sim.current(), intent, t) else {
                break;
            };
            traj.push(sim.step(&a));
        }
        traj
    }
}

/// Single literal of a one-literal intent, as (atom, polarity).
pub(crate) fn single_literal(intent: &LiteralConjunction) -> Option<(usize, bool)> {
    let lits = intent.literals();
    match lits.as_slice() {
        [l] => Some((l.atom, l.positive)),
        _ => None,
    }
}

/// Ground-truth declaration helper: one capability per literal of the universe,
/// each closed with a no-op rule over the states its other rules do not cover.
pub(crate) struct GroundTruthBuilder {
    universe: Arc<AtomUniverse>,
    rules: std::collections::BTreeMap<String, Vec<ConditionalEffectRule<f64>>>,
}

impl GroundTruthBuilder {
    pub fn new(universe: Arc<AtomUniverse>) -> Self {
        GroundTruthBuilder {
            universe,
            rules: Default::default(),
        }
    }

    pub fn conj(&self, pos: &[&str], neg: &[&str]) -> LiteralConjunction {
        LiteralConjunction::from_names(&self.universe, pos.iter().copied(), neg.iter().copied())
            .expect("ground-truth literal names are valid")
    }

    pub fn effect(&self, add: &[&str], del: &[&str]) -> EffectPair {
        EffectPair::from_names(&self.universe, add.iter().copied(), del.iter().copied())
            .expect("ground-truth effect names are valid")
    }

    /// Adds a rule to the capability for `literal` (`"p(a)"` or `"¬p(a)"`).
    pub fn rule(&mut self, literal: &str, clauses: Vec<LiteralConjunction>, outcomes: Vec<(f64, EffectPair)>) {
        let outcomes: Vec<Outcome<f64>> = outcomes
            .into_iter()
            .filter(|(p, _)| *p > 0.0)
            .map(|(probability, effect)| Outcome { probability, effect })
            .collect();
        let rule = ConditionalEffectRule::new(Condition::dnf(clauses), outcomes).expect("valid ground-truth rule");
        self.rules.entry(literal.to_string()).or_default().push(rule);
    }

    pub fn build(self) -> CapabilityModel<f64> {
        let u = self.universe;
        let n = u.len();
        let mut model = CapabilityModel::new(u.clone(), Flavor::GroundTruth);
        let mut rules = self.rules;
        for atom in 0..n {
            for positive in [true, false] {
                let lit = crate::abstraction::Literal { atom, positive };
                let key = if positive {
                    u.name(atom).to_string()
                } else {
                    format!("¬{}", u.name(atom))
                };
                let mut cap = Capability::new(capability_name(&lit, &u), lit.as_conjunction(n));
                cap.rules = rules.remove(&key).unwrap_or_default();
                let covered: Vec<LiteralConjunction> =
                    cap.rules.iter().flat_map(|r| r.condition.clauses().iter().cloned()).collect();
                cap.rules.push(ConditionalEffectRule {
                    condition: Condition::negated_dnf(covered),
                    outcomes: vec![Outcome {
                        probability: 1.0,
                        effect: EffectPair::none(n),
                    }],
                });
                model.insert(cap).expect("consistent ground truth");
            }
        }
        assert!(rules.is_empty(), "rules declared for unknown literals: {:?}", rules.keys());
        model
    }
}

/// Built-in environment names accepted in configuration files.
pub const BUILTIN_ENVIRONMENTS: [&str; 3] = ["vacuum", "roads", "blocks"];

/// Parameters for the built-in environments.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvParams {
    pub blocks: usize,
    pub slip: f64,
    pub flat_probability: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            blocks: 3,
            slip: 0.25,
            flat_probability: 0.8,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        if !(3..=5).contains(&self.blocks) {
            return Err(Error::Config(format!("blocks must be in 3..=5, got {}", self.blocks)));
        }
        for (name, p) in [("slip", self.slip), ("flat_probability", self.flat_probability)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be a probability, got {p}")));
            }
        }
        Ok(())
    }
}
