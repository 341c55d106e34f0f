//! Stochastic blocks world: placing a block on another slips it onto the table
//! with a configurable probability.

use std::sync::Arc;

use rand::{Rng, RngCore};

use super::{single_literal, Environment, GroundTruthBuilder};
use crate::abstraction::{build_universe_typed, AbstractState, AtomUniverse, LiteralConjunction, Object, Predicate};
use crate::bits::Bits;
use crate::capability_model::CapabilityModel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockPos {
    Table,
    On(usize),
    Held,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BlocksState {
    pub pos: Vec<BlockPos>,
}

impl BlocksState {
    pub fn clear(&self, x: usize) -> bool {
        self.pos[x] != BlockPos::Held && !self.pos.contains(&BlockPos::On(x))
    }

    pub fn held(&self) -> Option<usize> {
        self.pos.iter().position(|&p| p == BlockPos::Held)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlocksAction {
    Pick(usize),
    Place(usize, usize),
    PutDown(usize),
}

enum Atom {
    Clear(usize),
    HandEmpty,
    Holding(usize),
    On(usize, usize),
    OnTable(usize),
}

pub struct BlocksWorld {
    universe: Arc<AtomUniverse>,
    n: usize,
    slip: f64,
    clear: Vec<usize>,
    handempty: usize,
    holding: Vec<usize>,
    on: Vec<Vec<usize>>,
    ontable: Vec<usize>,
}

fn block(i: usize) -> String {
    ((b'a' + i as u8) as char).to_string()
}

impl BlocksWorld {
    pub fn new(n: usize, slip: f64) -> Result<Self> {
        if !(3..=5).contains(&n) {
            return Err(Error::Config(format!("blocks world needs 3 to 5 blocks, got {n}")));
        }
        if !(0.0..=1.0).contains(&slip) {
            return Err(Error::Config(format!("slip must be a probability, got {slip}")));
        }
        let objects: Vec<Object> = (0..n).map(|i| Object::new(&block(i), "block")).collect();
        let universe = build_universe_typed(
            &["block".to_string()],
            &[
                Predicate::new("clear", &["block"]),
                Predicate::new("handempty", &[]),
                Predicate::new("holding", &["block"]),
                Predicate::new("on", &["block", "block"]),
                Predicate::new("ontable", &["block"]),
            ],
            &objects,
        )?;
        let idx = |s: String| universe.index_of(&s).expect("blocks atom");
        Ok(BlocksWorld {
            clear: (0..n).map(|i| idx(format!("clear({})", block(i)))).collect(),
            handempty: idx("handempty".into()),
            holding: (0..n).map(|i| idx(format!("holding({})", block(i)))).collect(),
            on: (0..n)
                .map(|i| (0..n).map(|j| idx(format!("on({},{})", block(i), block(j)))).collect())
                .collect(),
            ontable: (0..n).map(|i| idx(format!("ontable({})", block(i)))).collect(),
            universe: Arc::new(universe),
            n,
            slip,
        })
    }

    fn classify(&self, atom: usize) -> Option<Atom> {
        if atom == self.handempty {
            return Some(Atom::HandEmpty);
        }
        for i in 0..self.n {
            if self.clear[i] == atom {
                return Some(Atom::Clear(i));
            }
            if self.holding[i] == atom {
                return Some(Atom::Holding(i));
            }
            if self.ontable[i] == atom {
                return Some(Atom::OnTable(i));
            }
            if let Some(j) = self.on[i].iter().position(|&a| a == atom) {
                return Some(Atom::On(i, j));
            }
        }
        None
    }

    fn can_pick(x: &BlocksState, b: usize) -> bool {
        x.held().is_none() && x.clear(b)
    }
}

impl Environment for BlocksWorld {
    type State = BlocksState;
    type Action = BlocksAction;

    fn name(&self) -> &str {
        "blocks"
    }

    fn universe(&self) -> &Arc<AtomUniverse> {
        &self.universe
    }

    /// All blocks on the table.
    fn reset_state(&self) -> BlocksState {
        BlocksState {
            pos: vec![BlockPos::Table; self.n],
        }
    }

    fn abstraction(&self, x: &BlocksState) -> AbstractState {
        let mut b = Bits::zeros(self.universe.len());
        b.set(self.handempty, x.held().is_none());
        for i in 0..self.n {
            b.set(self.clear[i], x.clear(i));
            match x.pos[i] {
                BlockPos::Table => b.set(self.ontable[i], true),
                BlockPos::On(j) => b.set(self.on[i][j], true),
                BlockPos::Held => b.set(self.holding[i], true),
            }
        }
        AbstractState(b)
    }

    fn available_actions(&self, x: &BlocksState) -> Vec<BlocksAction> {
        match x.held() {
            Some(h) => {
                let mut out = vec![BlocksAction::PutDown(h)];
                out.extend((0..self.n).filter(|&j| j != h && x.clear(j)).map(|j| BlocksAction::Place(h, j)));
                out
            }
            None => (0..self.n).filter(|&i| x.clear(i)).map(BlocksAction::Pick).collect(),
        }
    }

    fn step(&self, x: &BlocksState, a: &BlocksAction, rng: &mut dyn RngCore) -> BlocksState {
        let mut y = x.clone();
        match *a {
            BlocksAction::Pick(b) if Self::can_pick(x, b) => y.pos[b] = BlockPos::Held,
            BlocksAction::Place(b, t) if x.pos[b] == BlockPos::Held && b != t && x.clear(t) => {
                y.pos[b] = if rng.gen_bool(self.slip) { BlockPos::Table } else { BlockPos::On(t) };
            }
            BlocksAction::PutDown(b) if x.pos[b] == BlockPos::Held => y.pos[b] = BlockPos::Table,
            _ => {}
        }
        y
    }

    fn agent_action(&self, x: &BlocksState, intent: &LiteralConjunction, t: usize) -> Option<BlocksAction> {
        if t > 0 || intent.satisfied_by(&self.abstraction(x)) {
            return None;
        }
        let (atom, positive) = single_literal(intent)?;
        let held = x.held();
        match (self.classify(atom)?, positive) {
            (Atom::Holding(b), true) => Self::can_pick(x, b).then_some(BlocksAction::Pick(b)),
            (Atom::OnTable(b), false) => {
                (x.pos[b] == BlockPos::Table && Self::can_pick(x, b)).then_some(BlocksAction::Pick(b))
            }
            (Atom::On(b, t), true) => {
                (b != t && held == Some(b) && x.clear(t)).then_some(BlocksAction::Place(b, t))
            }
            (Atom::OnTable(b), true) | (Atom::Holding(b), false) => {
                (held == Some(b)).then_some(BlocksAction::PutDown(b))
            }
            (Atom::HandEmpty, true) => held.map(BlocksAction::PutDown),
            (Atom::Clear(t), true) => {
                let top = (0..self.n).find(|&b| x.pos[b] == BlockPos::On(t))?;
                Self::can_pick(x, top).then_some(BlocksAction::Pick(top))
            }
            (Atom::On(b, t), false) => {
                (x.pos[b] == BlockPos::On(t) && Self::can_pick(x, b)).then_some(BlocksAction::Pick(b))
            }
            _ => None,
        }
    }

    fn ground_truth(&self) -> CapabilityModel<f64> {
        let mut g = GroundTruthBuilder::new(self.universe.clone());
        let he = "handempty";
        let name = |p: &str, i: usize| format!("{p}({})", block(i));
        for b in 0..self.n {
            let (cb, hb, tb) = (name("clear", b), name("holding", b), name("ontable", b));
            // pick from the table
            let cl = vec![g.conj(&[&tb, &cb, he], &[])];
            let e = g.effect(&[&hb], &[&tb, &cb, he]);
            for lit in [hb.clone(), format!("¬{tb}")] {
                g.rule(&lit, cl.clone(), vec![(1.0, e.clone())]);
            }
            // pick from another block
            for t in (0..self.n).filter(|&t| t != b) {
                let on = format!("on({},{})", block(b), block(t));
                let ct = name("clear", t);
                let cl = vec![g.conj(&[&on, &cb, he], &[])];
                let e = g.effect(&[&hb, &ct], &[&on, &cb, he]);
                for lit in [hb.clone(), ct.clone(), format!("¬{on}")] {
                    g.rule(&lit, cl.clone(), vec![(1.0, e.clone())]);
                }
                // place onto t, slipping to the table
                let cl = vec![g.conj(&[&hb, &ct], &[])];
                let outs = vec![
                    (1.0 - self.slip, g.effect(&[&on, &cb, he], &[&hb, &ct])),
                    (self.slip, g.effect(&[&tb, &cb, he], &[&hb])),
                ];
                g.rule(&on, cl, outs);
            }
            // put down
            let cl = vec![g.conj(&[&hb], &[])];
            let e = g.effect(&[&tb, &cb, he], &[&hb]);
            for lit in [tb.clone(), format!("¬{hb}"), he.to_string()] {
                g.rule(&lit, cl.clone(), vec![(1.0, e.clone())]);
            }
        }
        g.build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{testing, BlackBoxAgent, ScriptedAgent, Simulator};

    fn holding_a(w: &BlocksWorld) -> BlocksState {
        let mut x = w.reset_state();
        x.pos[0] = BlockPos::Held;
        x
    }

    fn place_frequency(slip: f64) -> f64 {
        let w = BlocksWorld::new(3, slip).unwrap();
        let u = w.universe().clone();
        let intent = u.parse_literal("on(a,b)").unwrap().as_conjunction(u.len());
        let mut sim = Simulator::new(&w, 8);
        let runs = 10_000;
        let mut hits = 0;
        for _ in 0..runs {
            sim.revert(&holding_a(&w));
            let traj = ScriptedAgent.attempt(&mut sim, &intent, 100);
            hits += (traj.last().unwrap().pos[0] == BlockPos::On(1)) as usize;
        }
        hits as f64 / runs as f64
    }

    #[test]
    fn place_slip_frequencies() {
        assert_eq!(place_frequency(0.0), 1.0);
        assert!((place_frequency(0.25) - 0.75).abs() < 0.02);
    }

    #[test]
    fn pick_covered_block_does_nothing() {
        let w = BlocksWorld::new(3, 0.25).unwrap();
        let u = w.universe().clone();
        let mut x = w.reset_state();
        x.pos[1] = BlockPos::On(0);
        let intent = u.parse_literal("holding(a)").unwrap().as_conjunction(u.len());
        let mut sim = Simulator::new(&w, 1);
        sim.revert(&x);
        assert_eq!(ScriptedAgent.attempt(&mut sim, &intent, 100), vec![x]);
    }

    #[test]
    fn size_validation() {
        assert!(BlocksWorld::new(2, 0.25).is_err());
        assert!(BlocksWorld::new(6, 0.25).is_err());
        assert_eq!(BlocksWorld::new(5, 0.25).unwrap().universe().len(), 41);
    }

    #[test]
    fn ground_truth_consistent() {
        testing::check_ground_truth(&BlocksWorld::new(3, 0.25).unwrap(), 60, 0.2);
    }
}
