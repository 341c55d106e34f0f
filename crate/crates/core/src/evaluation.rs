//! Model quality: exact variational distance against a known ground truth and
//! the sampled estimator computed from paired agent/model replays.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::abstraction::{AbstractState, LiteralConjunction};
use crate::capability_model::{CapabilityModel, ConditionalEffectRule};
use crate::dataset::{abstract_trajectory, EffectPair, TemporalBound, Transition, TransitionDataset};
use crate::environment::{Abstraction, BlackBoxAgent, Environment, ScriptedAgent, Simulator};
use crate::error::{Error, Result};
use crate::scalar::Probability;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            episodes: 1000,
            min_len: 10,
            max_len: 30,
            horizon: 100,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_len == 0 || self.min_len > self.max_len || self.horizon == 0 {
            return Err(Error::Config(format!(
                "evaluation needs 1 ≤ min_len ≤ max_len and a positive horizon (got {}..{})",
                self.min_len, self.max_len
            )));
        }
        Ok(())
    }
}

/// Abstract states reachable from `s0` under the model's predictions.
pub fn reachable_states<P: Probability>(model: &CapabilityModel<P>, s0: &AbstractState) -> BTreeSet<AbstractState> {
    let mut seen = BTreeSet::from([s0.clone()]);
    let mut queue = VecDeque::from([s0.clone()]);
    while let Some(s) = queue.pop_front() {
        for c in model.names() {
            for n in model.predict(&s, c).into_keys() {
                if seen.insert(n.clone()) {
                    queue.push_back(n);
                }
            }
        }
    }
    seen
}

/// One element of 𝒟★ with its true probability.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedTransition {
    pub transition: Transition,
    pub probability: f64,
}

/// 𝒟★: every non-zero-probability ground-truth transition from the states
/// reachable from `s0`.
pub fn ground_truth_transitions<P: Probability>(truth: &CapabilityModel<P>, s0: &AbstractState) -> Vec<WeightedTransition> {
    let mut out = Vec::new();
    for s in reachable_states(truth, s0) {
        for c in truth.names() {
            for (n, p) in truth.predict(&s, c) {
                out.push(WeightedTransition {
                    transition: Transition::new(s.clone(), c, n),
                    probability: p.as_f64(),
                });
            }
        }
    }
    out
}

/// VD = Σ_{𝒟★} |Pr_M(s′|s,c) − Pr★(s′|s,c)| / |𝒟★|.
pub fn exact_vd<P: Probability>(model: &CapabilityModel<P>, dstar: &[WeightedTransition]) -> f64 {
    if dstar.is_empty() {
        return 0.0;
    }
    let mut cache: BTreeMap<(&AbstractState, &str), BTreeMap<AbstractState, P>> = BTreeMap::new();
    let mut total = 0.0;
    for w in dstar {
        let t = &w.transition;
        let pred = cache
            .entry((&t.s, t.c.as_str()))
            .or_insert_with(|| model.predict(&t.s, &t.c));
        let p = pred.get(&t.s_next).map_or(0.0, |p| p.as_f64());
        total += (p - w.probability).abs();
    }
    total / dstar.len() as f64
}

fn marginal(d: &TransitionDataset, c: &str, s: &AbstractState) -> u64 {
    d.successors(c, s).map_or(0, |m| m.values().sum())
}

/// Agent-side and model-side transition counts over the same capability sequences.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairedCounts {
    pub agent: TransitionDataset,
    pub model: TransitionDataset,
}

impl PairedCounts {
    pub fn sampled_vd(&self) -> f64 {
        sampled_vd(&self.agent, &self.model)
    }
}

/// VD_s = (1/|T∪|) Σ |N_e(t)/N_e(s,c) − N_M(t)/N_M(s,c)|, with a ratio of 0
/// where the marginal is 0. Ranges over [0, 2].
pub fn sampled_vd(agent: &TransitionDataset, model: &TransitionDataset) -> f64 {
    let union: BTreeSet<Transition> = agent.iter().chain(model.iter()).map(|(t, _)| t).collect();
    if union.is_empty() {
        return 0.0;
    }
    let ratio = |d: &TransitionDataset, t: &Transition| {
        let m = marginal(d, &t.c, &t.s);
        if m == 0 {
            0.0
        } else {
            d.count(t) as f64 / m as f64
        }
    };
    let sum: f64 = union.iter().map(|t| (ratio(agent, t) - ratio(model, t)).abs()).sum();
    sum / union.len() as f64
}

/// Capability sequences of an evaluation dataset, one per episode.
pub type Sequences = Vec<Vec<String>>;

/// Runs `episodes` random capability sequences through the agent from reset.
pub fn generate_eval_dataset<E: Environment>(
    env: &E,
    capabilities: &BTreeMap<String, LiteralConjunction>,
    cfg: &EvalConfig,
    theta: TemporalBound,
) -> Result<(TransitionDataset, Sequences)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sim = Simulator::new(env, rng.gen());
    let names: Vec<&String> = capabilities.keys().collect();
    let alpha = Abstraction(env);
    let mut data = TransitionDataset::new();
    let mut seqs = Vec::with_capacity(cfg.episodes);
    if names.is_empty() {
        return Ok((data, seqs));
    }
    for _ in 0..cfg.episodes {
        let len = rng.gen_range(cfg.min_len..=cfg.max_len);
        let seq: Vec<String> = (0..len).map(|_| (*names.choose(&mut rng).expect("nonempty")).clone()).collect();
        sim.reset();
        for c in &seq {
            let traj = ScriptedAgent.attempt(&mut sim, &capabilities[c], cfg.horizon);
            let abs = abstract_trajectory(&traj, &alpha, theta)?;
            let end = abs.last().expect("nonempty").clone();
            if abs.len() < abstract_trajectory(&traj, &alpha, TemporalBound::Unbounded)?.len() {
                // continue from the last environment state still abstracting to the endpoint
                if let Some(x) = traj.iter().rev().find(|x| env.abstraction(x) == end) {
                    sim.revert(x);
                }
            }
            data.insert(Transition::new(abs[0].clone(), c.clone(), end));
        }
        seqs.push(seq);
    }
    Ok((data, seqs))
}

/// Replays the sequences open-loop inside the model from `s0`, sampling
/// successors (self-loop when no rule fires).
pub fn model_replay<P: Probability, R: Rng + ?Sized>(
    model: &CapabilityModel<P>,
    sequences: &[Vec<String>],
    s0: &AbstractState,
    rng: &mut R,
) -> TransitionDataset {
    let mut data = TransitionDataset::new();
    for seq in sequences {
        let mut s = s0.clone();
        for c in seq {
            let pred = model.predict(&s, c);
            let mut u = rng.gen::<f64>();
            let mut next = pred.keys().next_back().expect("nonempty prediction").clone();
            for (k, p) in &pred {
                let p = p.as_f64();
                if u < p {
                    next = k.clone();
                    break;
                }
                u -= p;
            }
            data.insert(Transition::new(s.clone(), c.clone(), next.clone()));
            s = next;
        }
    }
    data
}

/// True when some state accepted by `clause` reaches the intent via `effect`.
fn clause_can_achieve(clause: &LiteralConjunction, effect: &EffectPair, intent: &LiteralConjunction) -> bool {
    let pos_ok = intent
        .positives
        .ones_iter()
        .all(|a| effect.add.get(a) || (!effect.del.get(a) && !clause.negatives.get(a)));
    let neg_ok = intent
        .negatives
        .ones_iter()
        .all(|a| effect.del.get(a) || (!effect.add.get(a) && !clause.positives.get(a)));
    pos_ok && neg_ok
}

fn rule_achieves<P: Probability>(rule: &ConditionalEffectRule<P>, intent: &LiteralConjunction) -> bool {
    let n = intent.len();
    let clauses: Vec<LiteralConjunction> = if rule.condition.is_negated() {
        // the complement of a DNF is not enumerated; judge effects on an unconstrained state
        vec![LiteralConjunction::empty(n)]
    } else {
        rule.condition.clauses().to_vec()
    };
    rule.outcomes
        .iter()
        .any(|o| clauses.iter().any(|k| clause_can_achieve(k, &o.effect, intent)))
}

/// Drops rules none of whose effects can yield a state satisfying the intent,
/// then capabilities left without rules.
pub fn evaluation_filter<P: Probability>(model: &CapabilityModel<P>) -> CapabilityModel<P> {
    let mut out = model.clone();
    for cap in out.capabilities_mut() {
        let intent = cap.intent.clone();
        cap.rules.retain(|r| rule_achieves(r, &intent));
    }
    out.retain(|c| !c.rules.is_empty());
    out
}
