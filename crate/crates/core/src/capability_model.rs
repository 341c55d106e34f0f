//! Capability models with conditional probabilistic effects, and their
//! construction from a transition dataset by effect-based state partitioning.
//!
//! For every capability the observed start states are grouped by the *set* of
//! effects seen from them. Each group becomes one rule whose outcome
//! probabilities are maximum-likelihood estimates over the group's transitions.
//! The pessimistic model accepts exactly the group's states; the optimistic
//! model accepts every state not claimed by another group.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::abstraction::{literal_of, AbstractState, AtomUniverse, Condition, Literal, LiteralConjunction};
use crate::dataset::{apply, effect_between, EffectPair, Transition, TransitionDataset};
use crate::error::{Error, Result};
use crate::scalar::Probability;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    Pessimistic,
    Optimistic,
    GroundTruth,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome<P> {
    pub probability: P,
    pub effect: EffectPair,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalEffectRule<P> {
    pub condition: Condition,
    pub outcomes: Vec<Outcome<P>>,
}

impl<P: Probability> ConditionalEffectRule<P> {
    pub fn new(condition: Condition, outcomes: Vec<Outcome<P>>) -> Result<Self> {
        let rule = ConditionalEffectRule {
            condition,
            outcomes,
        };
        rule.validate()?;
        Ok(rule)
    }

    /// Probabilities in (0, 1], summing to one, over distinct effects.
    pub fn validate(&self) -> Result<()> {
        let tol = if std::mem::size_of::<P>() == 4 { 1e-5 } else { 1e-9 };
        let mut sum = 0.0;
        for o in &self.outcomes {
            let p = o.probability.as_f64();
            if !(p > 0.0 && p <= 1.0 + tol) {
                return Err(Error::Contract(format!("outcome probability {p} outside (0,1]")));
            }
            sum += p;
        }
        if self.outcomes.is_empty() || (sum - 1.0).abs() > tol {
            return Err(Error::Contract(format!("rule probabilities sum to {sum}")));
        }
        let distinct: BTreeSet<&EffectPair> = self.outcomes.iter().map(|o| &o.effect).collect();
        if distinct.len() != self.outcomes.len() {
            return Err(Error::Contract("duplicate effect within a rule".into()));
        }
        Ok(())
    }

    pub fn cast<Q: Probability>(&self) -> ConditionalEffectRule<Q> {
        ConditionalEffectRule {
            condition: self.condition.clone(),
            outcomes: self
                .outcomes
                .iter()
                .map(|o| Outcome {
                    probability: Q::of(o.probability.as_f64()),
                    effect: o.effect.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Capability<P> {
    pub name: String,
    pub intent: LiteralConjunction,
    pub rules: Vec<ConditionalEffectRule<P>>,
}

impl<P: Probability> Capability<P> {
    pub fn new(name: impl Into<String>, intent: LiteralConjunction) -> Self {
        Capability {
            name: name.into(),
            intent,
            rules: Vec::new(),
        }
    }

    /// First rule whose condition accepts `s`.
    #[inline]
    pub fn firing_rule(&self, s: &AbstractState) -> Option<&ConditionalEffectRule<P>> {
        self.rules.iter().find(|r| r.condition.accepts(s))
    }

    pub fn fires(&self, s: &AbstractState) -> bool {
        self.firing_rule(s).is_some()
    }
}

/// Canonical capability name for a single-literal intent.
pub fn capability_name(literal: &Literal, universe: &AtomUniverse) -> String {
    if literal.positive {
        format!("achieve__{}", universe.name(literal.atom))
    } else {
        format!("achieve__not_{}", universe.name(literal.atom))
    }
}

#[derive(Clone, Debug)]
pub struct CapabilityModel<P> {
    universe: Arc<AtomUniverse>,
    capabilities: BTreeMap<String, Capability<P>>,
    flavor: Flavor,
}

impl<P: Probability> CapabilityModel<P> {
    pub fn new(universe: Arc<AtomUniverse>, flavor: Flavor) -> Self {
        CapabilityModel {
            universe,
            capabilities: BTreeMap::new(),
            flavor,
        }
    }

    pub fn universe(&self) -> &Arc<AtomUniverse> {
        &self.universe
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn insert(&mut self, capability: Capability<P>) -> Result<()> {
        let n = self.universe.len();
        if capability.intent.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: capability.intent.len(),
            });
        }
        for r in &capability.rules {
            r.validate()?;
            for o in &r.outcomes {
                if o.effect.add.len() != n {
                    return Err(Error::Dimension {
                        expected: n,
                        found: o.effect.add.len(),
                    });
                }
            }
        }
        self.capabilities.insert(capability.name.clone(), capability);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Capability<P>> {
        self.capabilities.get(name)
    }

    pub fn capabilities(&self) -> impl Iterator<Item = &Capability<P>> {
        self.capabilities.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.capabilities.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.capabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.capabilities.is_empty()
    }

    pub fn rule_count(&self) -> usize {
        self.capabilities.values().map(|c| c.rules.len()).sum()
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&Capability<P>) -> bool) {
        self.capabilities.retain(|_, c| keep(c));
    }

    pub fn capabilities_mut(&mut self) -> impl Iterator<Item = &mut Capability<P>> {
        self.capabilities.values_mut()
    }

    pub fn cast<Q: Probability>(&self) -> CapabilityModel<Q> {
        CapabilityModel {
            universe: self.universe.clone(),
            flavor: self.flavor,
            capabilities: self
                .capabilities
                .iter()
                .map(|(k, c)| {
                    (
                        k.clone(),
                        Capability {
                            name: c.name.clone(),
                            intent: c.intent.clone(),
                            rules: c.rules.iter().map(|r| r.cast()).collect(),
                        },
                    )
                })
                .collect(),
        }
    }

    /// ℳ ⊨ ⟨s,c,s′⟩: some rule accepts `s` and one of its effects maps `s` to `s′`.
    pub fn entails(&self, t: &Transition) -> bool {
        let Some(cap) = self.capabilities.get(&t.c) else {
            return false;
        };
        cap.rules.iter().any(|r| {
            r.condition.accepts(&t.s) && r.outcomes.iter().any(|o| apply(&t.s, &o.effect) == t.s_next)
        })
    }

    /// Successor distribution under the first firing rule; a point mass on `s`
    /// when no rule fires or the capability is unknown.
    pub fn predict(&self, s: &AbstractState, c: &str) -> BTreeMap<AbstractState, P> {
        let mut out = BTreeMap::new();
        match self.capabilities.get(c).and_then(|cap| cap.firing_rule(s)) {
            Some(rule) => {
                for o in &rule.outcomes {
                    let p = out.entry(apply(s, &o.effect)).or_insert_with(P::zero);
                    *p = *p + o.probability;
                }
            }
            None => {
                out.insert(s.clone(), P::one());
            }
        }
        out
    }

    /// Every successor any firing rule can produce (or `s` itself when none fires).
    pub fn possible_successors(&self, s: &AbstractState, c: &str) -> BTreeSet<AbstractState> {
        let mut out = BTreeSet::new();
        if let Some(cap) = self.capabilities.get(c) {
            for r in cap.rules.iter().filter(|r| r.condition.accepts(s)) {
                out.extend(r.outcomes.iter().map(|o| apply(s, &o.effect)));
            }
        }
        if out.is_empty() {
            out.insert(s.clone());
        }
        out
    }
}

/// A block Φ_c: states with identical observed effect sets, plus per-effect counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub states: BTreeSet<AbstractState>,
    pub counts: BTreeMap<EffectPair, u64>,
}

impl Partition {
    pub fn effects(&self) -> impl Iterator<Item = &EffectPair> {
        self.counts.keys()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// Groups the observed start states of `capability` by equal effect sets.
/// Partitions are ordered by effect set.
pub fn partition(dataset: &TransitionDataset, capability: &str) -> Vec<Partition> {
    let Some(by_state) = dataset.for_capability(capability) else {
        return Vec::new();
    };
    let mut groups: BTreeMap<BTreeSet<EffectPair>, Partition> = BTreeMap::new();
    for (s, succ) in by_state {
        let effects: BTreeMap<EffectPair, u64> = succ
            .iter()
            .map(|(n, &k)| (effect_between(s, n), k))
            .collect();
        let key: BTreeSet<EffectPair> = effects.keys().cloned().collect();
        let part = groups.entry(key).or_insert_with(|| Partition {
            states: BTreeSet::new(),
            counts: BTreeMap::new(),
        });
        part.states.insert(s.clone());
        for (e, k) in effects {
            *part.counts.entry(e).or_insert(0) += k;
        }
    }
    groups.into_values().collect()
}

/// ⋁_{s ∈ S_φ} ℓ(s).
pub fn pessimistic_condition(partition: &Partition) -> Condition {
    Condition::dnf(partition.states.iter().map(literal_of).collect())
}

/// ¬⋁ ℓ(s) over the states of every other partition.
pub fn optimistic_condition(all: &[Partition], target: usize) -> Condition {
    Condition::negated_dnf(
        all.iter()
            .enumerate()
            .filter(|&(i, _)| i != target)
            .flat_map(|(_, p)| p.states.iter().map(literal_of))
            .collect(),
    )
}

/// Rule order for the optimistic model. Observed states match exactly one
/// ocond, but an unobserved state matches all of them and takes the first; we
/// put partitions that change the state first (most states, then effect order)
/// so generalization predicts the capability doing something.
pub fn optimistic_order(parts: &[Partition]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..parts.len()).collect();
    order.sort_by_key(|&i| {
        let p = &parts[i];
        let changes = p.counts.keys().any(|e| !e.is_noop());
        (!changes, std::cmp::Reverse(p.states.len()), i)
    });
    order
}

fn mle_outcomes<P: Probability>(p: &Partition) -> Vec<Outcome<P>> {
    let total = p.total() as f64;
    p.counts
        .iter()
        .map(|(e, &k)| Outcome {
            probability: P::of(k as f64 / total),
            effect: e.clone(),
        })
        .collect()
}

/// Builds the pessimistic and optimistic models for the given capabilities
/// (name → intent). Capabilities without data get no rules in either model, so
/// both predict a self-loop for them.
pub fn build_models<P: Probability>(
    universe: &Arc<AtomUniverse>,
    capabilities: &BTreeMap<String, LiteralConjunction>,
    dataset: &TransitionDataset,
) -> (CapabilityModel<P>, CapabilityModel<P>) {
    let mut pess = CapabilityModel::new(universe.clone(), Flavor::Pessimistic);
    let mut opt = CapabilityModel::new(universe.clone(), Flavor::Optimistic);
    for (name, intent) in capabilities {
        let parts = partition(dataset, name);
        let mut pc = Capability::new(name.clone(), intent.clone());
        let mut oc = Capability::new(name.clone(), intent.clone());
        for p in &parts {
            pc.rules.push(ConditionalEffectRule {
                condition: pessimistic_condition(p),
                outcomes: mle_outcomes::<P>(p),
            });
        }
        for i in optimistic_order(&parts) {
            oc.rules.push(ConditionalEffectRule {
                condition: optimistic_condition(&parts, i),
                outcomes: mle_outcomes::<P>(&parts[i]),
            });
        }
        pess.capabilities.insert(name.clone(), pc);
        opt.capabilities.insert(name.clone(), oc);
    }
    (pess, opt)
}

/// Functional equivalence over a finite state set: both models entail the same
/// transitions ⟨s,c,s′⟩ for every s in `states`, every capability of either
/// model, and every s′ either model can produce.
pub fn equivalent<P: Probability, Q: Probability>(
    m1: &CapabilityModel<P>,
    m2: &CapabilityModel<Q>,
    states: impl IntoIterator<Item = AbstractState>,
) -> bool {
    first_disagreement(m1, m2, states).is_none()
}

/// The first transition on which the two models disagree, if any.
pub fn first_disagreement<P: Probability, Q: Probability>(
    m1: &CapabilityModel<P>,
    m2: &CapabilityModel<Q>,
    states: impl IntoIterator<Item = AbstractState>,
) -> Option<Transition> {
    let caps: BTreeSet<&str> = m1.names().chain(m2.names()).collect();
    for s in states {
        for &c in &caps {
            let mut succ = m1.possible_successors(&s, c);
            succ.extend(m2.possible_successors(&s, c));
            for n in succ {
                let t = Transition::new(s.clone(), c, n);
                if m1.entails(&t) != m2.entails(&t) {
                    return Some(t);
                }
            }
        }
    }
    None
}
