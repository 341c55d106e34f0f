//! One-way road network over six locations with flat tires and spare pickups.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::sync::Arc;

use rand::{Rng, RngCore};

use super::{single_literal, Environment, GroundTruthBuilder};
use crate::abstraction::{
    build_universe_typed, literal_of, AbstractState, AtomUniverse, Literal, LiteralConjunction, Object, Predicate,
};
use crate::bits::Bits;
use crate::capability_model::CapabilityModel;
use crate::dataset::{effect_between, EffectPair};

pub const LOCATIONS: usize = 6;

/// Directed roads (0-based location indices).
pub const ROADS: [(usize, usize); 8] = [(0, 1), (1, 2), (2, 0), (1, 3), (2, 4), (3, 4), (4, 5), (5, 3)];

const SPARES: [usize; 2] = [1, 3];

/// Step bound for one attempt; every route and repair finishes well inside it.
const AGENT_HORIZON: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RoadState {
    pub pos: usize,
    pub flat: bool,
    pub has_spare: bool,
    pub spare: [bool; LOCATIONS],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoadAction {
    Move(usize),
    ChangeTire,
    PickUp,
    Wait,
}

pub struct RoadWorld {
    universe: Arc<AtomUniverse>,
    flat_probability: f64,
    at: [usize; LOCATIONS],
    spare_in: [usize; LOCATIONS],
    flat: usize,
    has_spare: usize,
}

impl Default for RoadWorld {
    fn default() -> Self {
        Self::new(0.8)
    }
}

fn loc(i: usize) -> String {
    format!("l{}", i + 1)
}

pub fn successors(i: usize) -> impl Iterator<Item = usize> {
    ROADS.iter().filter(move |&&(a, _)| a == i).map(|&(_, b)| b)
}

pub fn has_road(a: usize, b: usize) -> bool {
    ROADS.contains(&(a, b))
}

impl RoadWorld {
    pub fn new(flat_probability: f64) -> Self {
        let types = ["car", "loc", "tire"].map(String::from);
        let mut objects = vec![Object::new("car", "car"), Object::new("tire", "tire")];
        objects.extend((0..LOCATIONS).map(|i| Object::new(&loc(i), "loc")));
        let universe = build_universe_typed(
            &types,
            &[
                Predicate::new("at", &["loc"]),
                Predicate::new("flat", &["tire"]),
                Predicate::new("has_spare", &["car"]),
                Predicate::new("spare_in", &["loc"]),
            ],
            &objects,
        )
        .expect("road universe");
        let idx = |n: &str| universe.index_of(n).expect("road atom");
        RoadWorld {
            at: std::array::from_fn(|i| idx(&format!("at({})", loc(i)))),
            spare_in: std::array::from_fn(|i| idx(&format!("spare_in({})", loc(i)))),
            flat: idx("flat(tire)"),
            has_spare: idx("has_spare(car)"),
            universe: Arc::new(universe),
            flat_probability,
        }
    }
}

impl Environment for RoadWorld {
    type State = RoadState;
    type Action = RoadAction;

    fn name(&self) -> &str {
        "roads"
    }

    fn universe(&self) -> &Arc<AtomUniverse> {
        &self.universe
    }

    fn reset_state(&self) -> RoadState {
        let mut spare = [false; LOCATIONS];
        for i in SPARES {
            spare[i] = true;
        }
        RoadState {
            pos: 0,
            flat: false,
            has_spare: false,
            spare,
        }
    }

    fn abstraction(&self, x: &RoadState) -> AbstractState {
        let mut b = Bits::zeros(self.universe.len());
        b.set(self.at[x.pos], true);
        b.set(self.flat, x.flat);
        b.set(self.has_spare, x.has_spare);
        for i in 0..LOCATIONS {
            b.set(self.spare_in[i], x.spare[i]);
        }
        AbstractState(b)
    }

    fn available_actions(&self, x: &RoadState) -> Vec<RoadAction> {
        let mut out: Vec<RoadAction> = successors(x.pos).map(RoadAction::Move).collect();
        out.extend([RoadAction::ChangeTire, RoadAction::PickUp, RoadAction::Wait]);
        out
    }

    fn step(&self, x: &RoadState, a: &RoadAction, rng: &mut dyn RngCore) -> RoadState {
        let outcomes = self.outcomes(x, a);
        if outcomes.len() == 1 {
            return outcomes[0].1;
        }
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for &(p, y) in &outcomes {
            acc += p;
            if u < acc {
                return y;
            }
        }
        outcomes[outcomes.len() - 1].1
    }

    /// A planning driver: routes along shortest paths, repairs flats with a
    /// carried or local spare, and gives up when stranded.
    fn agent_action(&self, x: &RoadState, intent: &LiteralConjunction, t: usize) -> Option<RoadAction> {
        if intent.satisfied_by(&self.abstraction(x)) {
            return None;
        }
        let (atom, positive) = single_literal(intent)?;
        let drive_to = |j: usize| {
            if x.flat {
                repair(x)
            } else {
                next_hop(x.pos, j).map(RoadAction::Move)
            }
        };
        if let Some(j) = self.at.iter().position(|&a| a == atom) {
            return if positive {
                drive_to(j)
            } else if x.flat {
                repair(x)
            } else {
                successors(x.pos).next().map(RoadAction::Move)
            };
        }
        if atom == self.flat {
            return if positive {
                (t == 0).then(|| successors(x.pos).next().map(RoadAction::Move)).flatten()
            } else {
                repair(x)
            };
        }
        if atom == self.has_spare {
            return if positive {
                if x.spare[x.pos] {
                    Some(RoadAction::PickUp)
                } else {
                    (0..LOCATIONS)
                        .filter(|&l| x.spare[l])
                        .filter_map(|l| distance(x.pos, l).map(|d| (d, l)))
                        .min()
                        .and_then(|(_, l)| drive_to(l))
                }
            } else {
                (x.flat && x.has_spare).then_some(RoadAction::ChangeTire)
            };
        }
        let l = self.spare_in.iter().position(|&a| a == atom)?;
        if positive || x.has_spare {
            None
        } else if x.pos == l {
            Some(RoadAction::PickUp)
        } else {
            drive_to(l)
        }
    }

    fn ground_truth(&self) -> CapabilityModel<f64> {
        let u = self.universe.clone();
        let n = u.len();
        let mut g = GroundTruthBuilder::new(u.clone());
        let states = self.reachable_states();
        for atom in 0..n {
            for positive in [true, false] {
                let lit = Literal { atom, positive };
                let intent = lit.as_conjunction(n);
                let key = if positive { u.name(atom).to_string() } else { format!("¬{}", u.name(atom)) };
                // group states by identical outcome distributions
                let mut groups: BTreeMap<Vec<(EffectPair, u64)>, (Vec<(f64, EffectPair)>, Vec<LiteralConjunction>)> =
                    BTreeMap::new();
                for x in &states {
                    let s = self.abstraction(x);
                    let dist = self.attempt_distribution(x, &intent);
                    if dist.len() == 1 && dist.keys().all(|e| e.is_noop()) {
                        continue;
                    }
                    let sig = dist.iter().map(|(e, p)| (e.clone(), (p * 1e12).round() as u64)).collect();
                    let entry = groups
                        .entry(sig)
                        .or_insert_with(|| (dist.into_iter().map(|(e, p)| (p, e)).collect(), Vec::new()));
                    entry.1.push(literal_of(&s).clone());
                }
                for (_, (outcomes, clauses)) in groups {
                    g.rule(&key, clauses, outcomes);
                }
            }
        }
        g.build()
    }
}

/// Exact dynamics, used both for sampling and for deriving the ground truth.
impl RoadWorld {
    pub fn outcomes(&self, x: &RoadState, a: &RoadAction) -> Vec<(f64, RoadState)> {
        let mut y = *x;
        match *a {
            RoadAction::Move(to) if has_road(x.pos, to) && !x.flat => {
                y.pos = to;
                let mut f = y;
                f.flat = true;
                return [(1.0 - self.flat_probability, y), (self.flat_probability, f)]
                    .into_iter()
                    .filter(|&(p, _)| p > 0.0)
                    .collect();
            }
            RoadAction::ChangeTire if x.flat && x.has_spare => {
                y.flat = false;
                y.has_spare = false;
            }
            RoadAction::PickUp if x.spare[x.pos] && !x.has_spare => {
                y.spare[x.pos] = false;
                y.has_spare = true;
            }
            _ => {}
        }
        vec![(1.0, y)]
    }

    /// Environment states reachable from reset under any action sequence.
    pub fn reachable_states(&self) -> Vec<RoadState> {
        let mut seen = HashSet::from([self.reset_state()]);
        let mut order = vec![self.reset_state()];
        let mut i = 0;
        while i < order.len() {
            let x = order[i];
            i += 1;
            for a in self.available_actions(&x) {
                for (_, y) in self.outcomes(&x, &a) {
                    if seen.insert(y) {
                        order.push(y);
                    }
                }
            }
        }
        order
    }

    /// Exact distribution over the effects of one agent attempt from `x`.
    pub fn attempt_distribution(&self, x: &RoadState, intent: &LiteralConjunction) -> BTreeMap<EffectPair, f64> {
        let s = self.abstraction(x);
        let mut out = BTreeMap::new();
        let mut stack = vec![(*x, 0usize, 1.0f64)];
        while let Some((y, t, p)) = stack.pop() {
            match (t < AGENT_HORIZON).then(|| self.agent_action(&y, intent, t)).flatten() {
                Some(a) => stack.extend(self.outcomes(&y, &a).into_iter().map(|(q, z)| (z, t + 1, p * q))),
                None => *out.entry(effect_between(&s, &self.abstraction(&y))).or_insert(0.0) += p,
            }
        }
        out
    }
}

/// Shortest-path distances over the one-way roads.
fn distances_from(a: usize) -> [Option<usize>; LOCATIONS] {
    let mut d = [None; LOCATIONS];
    d[a] = Some(0);
    let mut queue = VecDeque::from([a]);
    while let Some(i) = queue.pop_front() {
        for j in successors(i) {
            if d[j].is_none() {
                d[j] = Some(d[i].expect("visited") + 1);
                queue.push_back(j);
            }
        }
    }
    d
}

pub fn distance(a: usize, b: usize) -> Option<usize> {
    distances_from(a)[b]
}

/// First move of a shortest path from `a` to `b` (lowest index on ties).
pub fn next_hop(a: usize, b: usize) -> Option<usize> {
    let d = distance(a, b)?;
    if d == 0 {
        return None;
    }
    successors(a).filter(|&j| distance(j, b) == Some(d - 1)).min()
}

fn repair(x: &RoadState) -> Option<RoadAction> {
    if x.has_spare {
        Some(RoadAction::ChangeTire)
    } else if x.spare[x.pos] {
        Some(RoadAction::PickUp)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{testing, BlackBoxAgent, ScriptedAgent, Simulator};
    use rand::SeedableRng;
    use std::collections::BTreeSet;

    #[test]
    fn flat_frequency_on_move() {
        let w = RoadWorld::default();
        let u = w.universe().clone();
        let intent = u.parse_literal("at(l2)").unwrap().as_conjunction(u.len());
        let mut sim = Simulator::new(&w, 5);
        let runs = 10_000;
        let mut flats = 0;
        for _ in 0..runs {
            sim.reset();
            let traj = ScriptedAgent.attempt(&mut sim, &intent, 100);
            let last = traj.last().unwrap();
            assert_eq!(last.pos, 1);
            flats += last.flat as usize;
        }
        assert!((flats as f64 / runs as f64 - 0.8).abs() < 0.02);
    }

    #[test]
    fn unreachable_target_is_constant() {
        let w = RoadWorld::default();
        let u = w.universe().clone();
        let intent = u.parse_literal("at(l1)").unwrap().as_conjunction(u.len());
        let mut sim = Simulator::new(&w, 5);
        let mut x = w.reset_state();
        x.pos = 3;
        sim.revert(&x);
        let traj = ScriptedAgent.attempt(&mut sim, &intent, 100);
        assert_eq!(traj, vec![x]);
    }

    #[test]
    fn two_hop_route_distribution() {
        // l1 → l2 → l3; a flat at l2 is fixed with the spare found there
        let w = RoadWorld::default();
        let u = w.universe().clone();
        let intent = u.parse_literal("at(l3)").unwrap().as_conjunction(u.len());
        let dist = w.attempt_distribution(&w.reset_state(), &intent);
        let e = |add: &[&str], del: &[&str]| EffectPair::from_names(&u, add, del).unwrap();
        let expected = [
            (e(&["at(l3)", "flat(tire)"], &["at(l1)"]), 0.16),
            (e(&["at(l3)"], &["at(l1)"]), 0.04),
            (e(&["at(l3)", "flat(tire)"], &["at(l1)", "spare_in(l2)"]), 0.64),
            (e(&["at(l3)"], &["at(l1)", "spare_in(l2)"]), 0.16),
        ];
        assert_eq!(dist.len(), 4);
        for (eff, p) in expected {
            assert!((dist[&eff] - p).abs() < 1e-12, "{}", eff.display(&u));
        }
    }

    #[test]
    fn next_hop_follows_shortest_path() {
        assert_eq!(next_hop(0, 4), Some(1));
        assert_eq!(next_hop(1, 4), Some(2));
        assert_eq!(next_hop(3, 0), None);
        assert_eq!(distance(0, 5), Some(4));
    }

    #[test]
    fn reachability_matches_transitive_closure() {
        let w = RoadWorld::new(0.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let positions: BTreeSet<usize> = testing::reachable_env_states(&w, &mut rng, 1)
            .into_iter()
            .map(|x| x.pos)
            .collect();
        // closure of the road graph from l1
        let mut closure = BTreeSet::from([0]);
        loop {
            let next: BTreeSet<usize> = closure.iter().flat_map(|&a| successors(a)).collect();
            if next.is_subset(&closure) {
                break;
            }
            closure.extend(next);
        }
        assert_eq!(positions, closure);
        let from_l4: BTreeSet<usize> = [3, 4, 5].into();
        assert!(successors(3).chain(successors(4)).chain(successors(5)).all(|j| from_l4.contains(&j)));
    }

    #[test]
    fn ground_truth_consistent() {
        testing::check_ground_truth(&RoadWorld::default(), 300, 0.1);
    }
}
