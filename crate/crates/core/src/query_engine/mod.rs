//! Distinguishing-query synthesis: MCTS over the distinguishing MDP built from
//! a pessimistic/optimistic model pair, plus the random-sequence baseline.

mod distribution;
mod exact;
mod sampled;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::abstraction::{AbstractState, AtomUniverse};
use crate::capability_model::CapabilityModel;
use crate::error::{Error, Result};
use crate::scalar::Probability;

pub use distribution::{sd_reward, tv_distance, StateDistribution};
pub use exact::{exhaustive_best_score, synthesize_exact};
pub use sampled::synthesize_sampled;

/// MCTS hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub iterations: usize,
    pub kappa: f64,
    /// Maximum capability-sequence length.
    pub depth: usize,
    /// Children created per visit of a node with unexpanded edges (exact variant).
    pub expand_per_visit: usize,
    pub rollouts_exact: usize,
    pub rollouts_sampled: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            iterations: 1000,
            kappa: std::f64::consts::SQRT_2,
            depth: 20,
            expand_per_visit: 3,
            rollouts_exact: 3,
            rollouts_sampled: 1,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.expand_per_visit == 0 || self.kappa < 0.0 || !self.kappa.is_finite() {
            return Err(Error::Config(
                "search depth and expansions must be positive and kappa finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// A partial policy over abstract states.
///
/// `Stepwise` holds one state→capability map per step of the run; execution
/// stops at the first state the current step does not cover. `Sequence` is an
/// open-loop capability list, used by the random baseline.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QueryPolicy {
    Stepwise(Vec<BTreeMap<AbstractState, String>>),
    Sequence(Vec<String>),
}

impl QueryPolicy {
    pub fn empty() -> Self {
        QueryPolicy::Stepwise(Vec::new())
    }

    /// Capability to run at `step` from `state`, if defined.
    pub fn action(&self, step: usize, state: &AbstractState) -> Option<&str> {
        match self {
            QueryPolicy::Stepwise(steps) => steps.get(step)?.get(state).map(String::as_str),
            QueryPolicy::Sequence(seq) => seq.get(step).map(String::as_str),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            QueryPolicy::Stepwise(s) => s.len(),
            QueryPolicy::Sequence(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every abstract state the policy is defined on.
    pub fn states(&self) -> BTreeSet<&AbstractState> {
        match self {
            QueryPolicy::Stepwise(s) => s.iter().flat_map(|m| m.keys()).collect(),
            QueryPolicy::Sequence(_) => BTreeSet::new(),
        }
    }

    /// JSON form with atom names: a list of steps of `{state, capability}`
    /// entries, or a plain capability list.
    pub fn to_json(&self, universe: &AtomUniverse) -> serde_json::Value {
        match self {
            QueryPolicy::Stepwise(steps) => serde_json::json!({
                "kind": "stepwise",
                "steps": steps.iter().map(|m| m.iter().map(|(s, c)| serde_json::json!({
                    "state": universe.decode_state(s),
                    "capability": c,
                })).collect::<Vec<_>>()).collect::<Vec<_>>(),
            }),
            QueryPolicy::Sequence(seq) => serde_json::json!({
                "kind": "sequence",
                "capabilities": seq,
            }),
        }
    }
}

/// ⟨x0, π, n⟩: run π from environment state x0, n times.
#[derive(Clone, Debug)]
pub struct Query<X> {
    pub x0: X,
    pub policy: QueryPolicy,
    pub n: usize,
}

/// Output of a synthesizer: the greedy policy and the root's best score.
#[derive(Clone, Debug, PartialEq)]
pub struct Synthesis {
    pub policy: QueryPolicy,
    pub score: f64,
    pub tree_size: usize,
}

impl Synthesis {
    pub fn empty() -> Self {
        Synthesis {
            policy: QueryPolicy::empty(),
            score: 0.0,
            tree_size: 0,
        }
    }
}

/// UCT(s,c) = Q + κ √(ln N(s) / N(s,c)); unvisited edges score +∞.
pub fn uct_score(q: f64, n_parent: f64, n_edge: f64, kappa: f64) -> f64 {
    if n_edge <= 0.0 {
        return f64::INFINITY;
    }
    q + kappa * (n_parent.max(1.0).ln() / n_edge).sqrt()
}

/// Index of the maximum by `key`, ties to the lowest index.
pub(crate) fn argmax_by(items: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in items {
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Capability set shared by the two models, in name order.
pub(crate) fn capability_names<P: Probability>(
    a: &CapabilityModel<P>,
    b: &CapabilityModel<P>,
) -> Vec<String> {
    a.names()
        .chain(b.names())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_string)
        .collect()
}

/// Baseline query: `length` capabilities drawn uniformly with replacement.
pub fn random_policy_query<X, R: Rng + ?Sized>(
    x0: X,
    capabilities: &[String],
    length: usize,
    n: usize,
    rng: &mut R,
) -> Result<Query<X>> {
    if capabilities.is_empty() {
        return Err(Error::Contract("random policy needs at least one capability".into()));
    }
    let seq = (0..length)
        .map(|_| capabilities.choose(rng).expect("nonempty").clone())
        .collect();
    Ok(Query {
        x0,
        policy: QueryPolicy::Sequence(seq),
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uct_examples() {
        let k = std::f64::consts::SQRT_2;
        assert_eq!(uct_score(0.0, 1.0, 1.0, k), 0.0);
        assert_eq!(uct_score(0.3, 50.0, 4.0, 0.0), 0.3);
        let v = uct_score(0.4, std::f64::consts::E, 1.0, k);
        assert!((v - (0.4 + k)).abs() < 1e-12);
        assert!(uct_score(0.0, 10.0, 0.0, 1.0).is_infinite());
        assert!(uct_score(0.0, 3.0, 1.0, 1.0) > uct_score(0.0, 3.0, 2.0, 1.0));
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax_by([(0, 1.0), (1, 2.0), (2, 2.0)].into_iter()), Some(1));
        assert_eq!(argmax_by(std::iter::empty()), None);
    }

    #[test]
    fn random_query_examples() {
        let caps = vec!["c".to_string()];
        let q = random_policy_query((), &caps, 30, 25, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(q.policy, QueryPolicy::Sequence(vec!["c".to_string(); 30]));
        let caps: Vec<String> = (0..5).map(|i| format!("c{i}")).collect();
        let a = random_policy_query((), &caps, 30, 1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = random_policy_query((), &caps, 30, 1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.policy, b.policy);
        assert!(random_policy_query((), &[], 30, 1, &mut ChaCha8Rng::seed_from_u64(9)).is_err());
    }

    #[test]
    fn stepwise_lookup() {
        let s = AbstractState(crate::bits::Bits::from_u64(2, 1));
        let p = QueryPolicy::Stepwise(vec![[(s.clone(), "c".to_string())].into_iter().collect()]);
        assert_eq!(p.action(0, &s), Some("c"));
        assert_eq!(p.action(1, &s), None);
        assert_eq!(p.action(0, &AbstractState(crate::bits::Bits::from_u64(2, 0))), None);
    }
}
