//! Random instance generators and brute-force oracles shared by the
//! integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use capml::abstraction::{build_universe, AbstractState, AtomUniverse, Condition, LiteralConjunction, Object, Predicate};
use capml::bits::Bits;
use capml::capability_model::{Capability, CapabilityModel, ConditionalEffectRule, Flavor, Outcome};
use capml::dataset::{EffectPair, Transition, TransitionDataset};
use capml::query_engine::StateDistribution;
use rand::Rng;

/// `n` atoms `p(o0) … p(o{n-1})`.
pub fn universe(n: usize) -> Arc<AtomUniverse> {
    let objects: Vec<Object> = (0..n).map(|i| Object::new(&format!("o{i}"), "obj")).collect();
    Arc::new(build_universe(&[Predicate::new("p", &["obj"])], &objects).unwrap())
}

pub fn state(n: usize, v: u64) -> AbstractState {
    AbstractState(Bits::from_u64(n, v))
}

pub fn index(s: &AbstractState) -> usize {
    (0..s.len()).filter(|&i| s.holds(i)).map(|i| 1usize << i).sum()
}

pub fn all_states(n: usize) -> impl Iterator<Item = AbstractState> {
    (0..1u64 << n).map(move |v| state(n, v))
}

pub fn random_state<R: Rng>(rng: &mut R, n: usize) -> AbstractState {
    state(n, rng.gen_range(0..1u64 << n))
}

/// Flips up to `k` random atoms.
pub fn perturb<R: Rng>(rng: &mut R, s: &AbstractState, k: usize) -> AbstractState {
    let mut out = s.clone();
    for _ in 0..rng.gen_range(0..=k) {
        let i = rng.gen_range(0..s.len());
        out = out.with(i, !out.holds(i));
    }
    out
}

pub fn cap_names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("c{i}")).collect()
}

/// Dataset over a small pool of start states so that states recur with
/// several successors and partitions merge.
pub fn random_dataset<R: Rng>(rng: &mut R, n: usize, caps: &[String]) -> TransitionDataset {
    let pool: Vec<AbstractState> = (0..rng.gen_range(1..=20)).map(|_| random_state(rng, n)).collect();
    let mut ds = TransitionDataset::new();
    for _ in 0..rng.gen_range(1..=60) {
        let c = &caps[rng.gen_range(0..caps.len())];
        let s = pool[rng.gen_range(0..pool.len())].clone();
        let s_next = if rng.gen_bool(0.3) { s.clone() } else { perturb(rng, &s, 2) };
        ds.add(Transition::new(s, c.clone(), s_next), rng.gen_range(1..=3));
    }
    ds
}

pub fn intents(u: &AtomUniverse, caps: &[String]) -> BTreeMap<String, LiteralConjunction> {
    caps.iter()
        .enumerate()
        .map(|(i, c)| {
            let lit = capml::abstraction::Literal {
                atom: i % u.len(),
                positive: true,
            };
            (c.clone(), lit.as_conjunction(u.len()))
        })
        .collect()
}

/// Each atom is unconstrained with probability `free`, else a random literal.
pub fn random_conjunction<R: Rng>(rng: &mut R, n: usize, free: f64) -> LiteralConjunction {
    let mut pos = Bits::zeros(n);
    let mut neg = Bits::zeros(n);
    for i in 0..n {
        if !rng.gen_bool(free) {
            if rng.gen_bool(0.5) {
                pos.set(i, true);
            } else {
                neg.set(i, true);
            }
        }
    }
    LiteralConjunction::new(pos, neg).unwrap()
}

pub fn random_condition<R: Rng>(rng: &mut R, n: usize) -> Condition {
    let clauses = (0..rng.gen_range(1..=3)).map(|_| random_conjunction(rng, n, 0.7)).collect();
    if rng.gen_bool(0.3) {
        Condition::negated_dnf(clauses)
    } else {
        Condition::dnf(clauses)
    }
}

pub fn random_effect<R: Rng>(rng: &mut R, n: usize) -> EffectPair {
    let mut add = Bits::zeros(n);
    let mut del = Bits::zeros(n);
    for i in 0..n {
        match rng.gen_range(0..6) {
            0 => add.set(i, true),
            1 => del.set(i, true),
            _ => {}
        }
    }
    EffectPair::new(add, del).unwrap()
}

pub fn random_rule<R: Rng>(rng: &mut R, n: usize) -> ConditionalEffectRule<f64> {
    let mut effects: Vec<EffectPair> = (0..rng.gen_range(1..=4)).map(|_| random_effect(rng, n)).collect();
    effects.sort();
    effects.dedup();
    let weights: Vec<f64> = effects.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let outcomes = effects
        .into_iter()
        .zip(weights)
        .map(|(effect, w)| Outcome {
            probability: w / total,
            effect,
        })
        .collect();
    ConditionalEffectRule::new(random_condition(rng, n), outcomes).unwrap()
}

/// One capability `c` with 1..=3 random rules.
pub fn random_model<R: Rng>(rng: &mut R, u: &Arc<AtomUniverse>) -> CapabilityModel<f64> {
    let n = u.len();
    let mut m = CapabilityModel::new(u.clone(), Flavor::GroundTruth);
    let mut cap = Capability::new("c", LiteralConjunction::empty(n));
    cap.rules = (0..rng.gen_range(1..=3)).map(|_| random_rule(rng, n)).collect();
    m.insert(cap).unwrap();
    m
}

pub fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> StateDistribution<f64> {
    let k = rng.gen_range(1..=20);
    StateDistribution::from_probabilities((0..k).map(|_| (random_state(rng, n), rng.gen_range(0.01..1.0))))
}

/// Literal-by-literal evaluation, independent of the indexed matcher.
pub fn naive_accepts(cond: &Condition, s: &AbstractState) -> bool {
    let n = s.len();
    let dnf = cond.clauses().iter().any(|c| {
        (0..n).all(|i| (!c.positives.get(i) || s.holds(i)) && (!c.negatives.get(i) || !s.holds(i)))
    });
    dnf != cond.is_negated()
}

pub fn naive_apply(s: &AbstractState, e: &EffectPair) -> AbstractState {
    let n = s.len();
    let v = (0..n)
        .filter(|&i| e.add.get(i) || (s.holds(i) && !e.del.get(i)))
        .map(|i| 1u64 << i)
        .sum();
    state(n, v)
}

/// Dense 2^n-vector push: first accepting rule splits the mass, else self-loop.
pub fn dense_push(model: &CapabilityModel<f64>, c: &str, rho: &StateDistribution<f64>) -> Vec<f64> {
    let n = model.universe().len();
    let mut out = vec![0.0; 1 << n];
    let rules = &model.get(c).unwrap().rules;
    for (s, p) in rho.iter() {
        match rules.iter().find(|r| naive_accepts(&r.condition, s)) {
            Some(r) => {
                for o in &r.outcomes {
                    out[index(&naive_apply(s, &o.effect))] += p * o.probability;
                }
            }
            None => out[index(s)] += p,
        }
    }
    out
}

/// ℳ ⊨ ⟨s,c,s′⟩ by scanning every rule with the naive evaluator.
pub fn naive_entails(m: &CapabilityModel<f64>, s: &AbstractState, c: &str, s_next: &AbstractState) -> bool {
    m.get(c).is_some_and(|cap| {
        cap.rules.iter().any(|r| {
            naive_accepts(&r.condition, s) && r.outcomes.iter().any(|o| naive_apply(s, &o.effect) == *s_next)
        })
    })
}
