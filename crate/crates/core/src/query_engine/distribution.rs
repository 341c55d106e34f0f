//! Sparse log-space state distributions and the distances used as MCTS rewards.

use std::collections::BTreeMap;

use crate::abstraction::AbstractState;
use crate::capability_model::CapabilityModel;
use crate::dataset::apply;
use crate::scalar::{log_sum_exp, Probability};

/// Sparse map from abstract state to log-probability mass. Entries with zero
/// mass are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct StateDistribution<P> {
    log_mass: BTreeMap<AbstractState, P>,
}

impl<P: Probability> StateDistribution<P> {
    pub fn point(s: AbstractState) -> Self {
        StateDistribution {
            log_mass: [(s, P::zero())].into_iter().collect(),
        }
    }

    /// Builds a normalized distribution from linear-space weights.
    pub fn from_probabilities(entries: impl IntoIterator<Item = (AbstractState, P)>) -> Self {
        let mut log_mass = BTreeMap::new();
        for (s, p) in entries {
            if p > P::zero() {
                accumulate(&mut log_mass, s, p.ln());
            }
        }
        let mut d = StateDistribution { log_mass };
        d.normalize();
        d
    }

    pub fn len(&self) -> usize {
        self.log_mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_mass.is_empty()
    }

    pub fn log_prob(&self, s: &AbstractState) -> P {
        self.log_mass.get(s).copied().unwrap_or_else(P::neg_infinity)
    }

    pub fn prob(&self, s: &AbstractState) -> P {
        self.log_prob(s).exp()
    }

    pub fn support(&self) -> impl Iterator<Item = &AbstractState> {
        self.log_mass.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AbstractState, P)> {
        self.log_mass.iter().map(|(s, &l)| (s, l.exp()))
    }

    pub fn same_support(&self, other: &Self) -> bool {
        self.log_mass.len() == other.log_mass.len()
            && self.log_mass.keys().eq(other.log_mass.keys())
    }

    /// ln Σ exp(mass); zero for a normalized distribution.
    pub fn log_total(&self) -> P {
        log_sum_exp(self.log_mass.values().copied())
    }

    fn normalize(&mut self) {
        let z = self.log_total();
        if z.is_finite() && z != P::zero() {
            for v in self.log_mass.values_mut() {
                *v = *v - z;
            }
        }
    }

    /// One-step push through capability `c`: τ(ρ)(s′) = Σ_s Pr(s′|s,c) ρ(s).
    ///
    /// States accepted by no rule keep their mass; matching states split it
    /// across the first firing rule's effects, merging colliding successors.
    pub fn push(&self, model: &CapabilityModel<P>, c: &str) -> Self {
        let Some(cap) = model.get(c) else {
            return self.clone();
        };
        let mut out = BTreeMap::new();
        for (s, &lp) in &self.log_mass {
            match cap.firing_rule(s) {
                None => accumulate(&mut out, s.clone(), lp),
                Some(rule) => {
                    for o in &rule.outcomes {
                        accumulate(&mut out, apply(s, &o.effect), lp + o.probability.ln());
                    }
                }
            }
        }
        let mut d = StateDistribution { log_mass: out };
        d.normalize();
        d
    }
}

fn accumulate<P: Probability>(map: &mut BTreeMap<AbstractState, P>, s: AbstractState, lp: P) {
    if lp == P::neg_infinity() {
        return;
    }
    map.entry(s)
        .and_modify(|v| *v = v.log_add_exp(lp))
        .or_insert(lp);
}

/// Walks the union of both supports in order, yielding (ρ1(s), ρ2(s)).
fn merged<'a, P: Probability>(
    a: &'a StateDistribution<P>,
    b: &'a StateDistribution<P>,
) -> impl Iterator<Item = (P, P)> + 'a {
    let mut ia = a.log_mass.iter().peekable();
    let mut ib = b.log_mass.iter().peekable();
    std::iter::from_fn(move || match (ia.peek(), ib.peek()) {
        (None, None) => None,
        (Some(_), None) => ia.next().map(|(_, &x)| (x.exp(), P::zero())),
        (None, Some(_)) => ib.next().map(|(_, &y)| (P::zero(), y.exp())),
        (Some((sa, _)), Some((sb, _))) => match sa.cmp(sb) {
            std::cmp::Ordering::Less => ia.next().map(|(_, &x)| (x.exp(), P::zero())),
            std::cmp::Ordering::Greater => ib.next().map(|(_, &y)| (P::zero(), y.exp())),
            std::cmp::Ordering::Equal => {
                let x = ia.next().unwrap().1.exp();
                let y = ib.next().unwrap().1.exp();
                Some((x, y))
            }
        },
    })
}

/// δ_TV = ½ Σ_s |ρ1(s) − ρ2(s)|.
pub fn tv_distance<P: Probability>(a: &StateDistribution<P>, b: &StateDistribution<P>) -> P {
    let half = P::of(0.5);
    let d: P = merged(a, b).map(|(x, y)| (x - y).abs()).sum();
    (d * half).min(P::one())
}

/// δ_SD: half-mixture mass on the symmetric difference of the two supports.
pub fn sd_reward<P: Probability>(a: &StateDistribution<P>, b: &StateDistribution<P>) -> P {
    let half = P::of(0.5);
    merged(a, b)
        .filter(|&(x, y)| (x == P::zero()) != (y == P::zero()))
        .map(|(x, y)| half * x + half * y)
        .sum::<P>()
        .min(P::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::{literal_of, Condition, LiteralConjunction};
    use crate::bits::Bits;
    use crate::capability_model::{Capability, ConditionalEffectRule, Flavor, Outcome};
    use crate::dataset::EffectPair;
    use std::sync::Arc;

    fn st(v: u64) -> AbstractState {
        AbstractState(Bits::from_u64(3, v))
    }

    fn universe() -> Arc<crate::abstraction::AtomUniverse> {
        use crate::abstraction::{build_universe, Object, Predicate};
        Arc::new(
            build_universe(
                &[Predicate::new("p", &["t"])],
                &[Object::new("a", "t"), Object::new("b", "t"), Object::new("c", "t")],
            )
            .unwrap(),
        )
    }

    fn eff(add: u64, del: u64) -> EffectPair {
        EffectPair::new(Bits::from_u64(3, add), Bits::from_u64(3, del)).unwrap()
    }

    fn model(rule_on: Vec<AbstractState>, outcomes: Vec<(f64, EffectPair)>) -> CapabilityModel<f64> {
        let mut m = CapabilityModel::new(universe(), Flavor::GroundTruth);
        let mut cap = Capability::new("c", LiteralConjunction::empty(3));
        cap.rules.push(
            ConditionalEffectRule::new(
                Condition::dnf(rule_on.iter().map(literal_of).collect()),
                outcomes
                    .into_iter()
                    .map(|(probability, effect)| Outcome { probability, effect })
                    .collect(),
            )
            .unwrap(),
        );
        m.insert(cap).unwrap();
        m
    }

    #[test]
    fn push_examples() {
        let m = model(vec![st(0)], vec![(0.5, eff(1, 0)), (0.25, eff(2, 0)), (0.25, eff(4, 0))]);
        let rho = StateDistribution::point(st(7));
        assert_eq!(rho.push(&m, "c"), rho);

        let out = StateDistribution::point(st(0)).push(&m, "c");
        assert_eq!(out.len(), 3);
        assert!((out.prob(&st(1)) - 0.5).abs() < 1e-12);
        assert!((out.prob(&st(2)) - 0.25).abs() < 1e-12);
        assert!((out.prob(&st(4)) - 0.25).abs() < 1e-12);

        let m = model(vec![st(0)], vec![(1.0, eff(1, 0))]);
        let rho = StateDistribution::from_probabilities([(st(0), 0.5), (st(2), 0.5)]);
        let out = rho.push(&m, "c");
        assert!((out.prob(&st(1)) - 0.5).abs() < 1e-12);
        assert!((out.prob(&st(2)) - 0.5).abs() < 1e-12);
        assert!(out.log_total().abs() < 1e-9);
    }

    #[test]
    fn push_merges_collisions() {
        // both effects land on 0b011 from 0b010
        let m = model(vec![st(2)], vec![(0.5, eff(1, 0)), (0.5, eff(3, 0))]);
        let out = StateDistribution::point(st(2)).push(&m, "c");
        assert_eq!(out.len(), 1);
        assert!((out.prob(&st(3)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distance_examples() {
        let a = StateDistribution::from_probabilities([(st(0), 0.5), (st(1), 0.5)]);
        let b = StateDistribution::<f64>::point(st(0));
        assert_eq!(tv_distance(&a, &a), 0.0);
        assert!((tv_distance(&a, &b) - 0.5).abs() < 1e-12);
        assert!((tv_distance(&b, &StateDistribution::point(st(5))) - 1.0).abs() < 1e-12);

        let c = StateDistribution::from_probabilities([(st(1), 0.5), (st(2), 0.5)]);
        assert!((sd_reward(&a, &c) - 0.5).abs() < 1e-12);
        assert_eq!(sd_reward(&a, &a), 0.0);
        assert!((sd_reward(&b, &StateDistribution::point(st(5))) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn f32_distances() {
        let a = StateDistribution::<f32>::from_probabilities([(st(0), 0.5), (st(1), 0.5)]);
        let b = StateDistribution::<f32>::point(st(0));
        assert!((tv_distance(&a, &b) - 0.5).abs() < 1e-6);
    }
}
