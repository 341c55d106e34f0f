//! Two-room vacuum world. The clean(l1) capability realizes the three-outcome
//! rule: from has ∧ (charged ∨ at charger) it cleans and drains the battery
//! (0.50), cleans and ends at the charger (0.25), or only drains (0.25).

use std::sync::Arc;

use rand::{Rng, RngCore};

use super::{single_literal, Environment, GroundTruthBuilder};
use crate::abstraction::{build_universe_typed, AbstractState, AtomUniverse, LiteralConjunction, Object, Predicate};
use crate::bits::Bits;
use crate::capability_model::CapabilityModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Place {
    L1,
    L2,
    Charger,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VacuumState {
    pub pos: Place,
    /// 0 (empty) to 2 (full).
    pub battery: u8,
    pub has_vacuum: bool,
    pub clean: [bool; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VacuumAction {
    MoveTo(Place),
    Charge,
    Grab,
    Drop,
    Vacuum(usize),
    Spill(usize),
    Idle,
}

const FULL: u8 = 2;
const GRAB_SUCCESS: f64 = 0.9;
const L2_SUCCESS: f64 = 0.8;

struct Atoms {
    at: usize,
    charged: usize,
    clean: [usize; 2],
    has: usize,
}

pub struct VacuumWorld {
    universe: Arc<AtomUniverse>,
    atoms: Atoms,
}

impl Default for VacuumWorld {
    fn default() -> Self {
        Self::new()
    }
}

impl VacuumWorld {
    pub fn new() -> Self {
        let types = ["agent", "loc", "station", "tool"].map(String::from);
        let universe = build_universe_typed(
            &types,
            &[
                Predicate::new("at", &["station", "agent"]),
                Predicate::new("charged", &["agent"]),
                Predicate::new("clean", &["loc"]),
                Predicate::new("has", &["agent", "tool"]),
            ],
            &[
                Object::new("robot", "agent"),
                Object::new("charger", "station"),
                Object::new("vacuum", "tool"),
                Object::new("l1", "loc"),
                Object::new("l2", "loc"),
            ],
        )
        .expect("vacuum universe");
        let idx = |n: &str| universe.index_of(n).expect("vacuum atom");
        let atoms = Atoms {
            at: idx("at(charger,robot)"),
            charged: idx("charged(robot)"),
            clean: [idx("clean(l1)"), idx("clean(l2)")],
            has: idx("has(robot,vacuum)"),
        };
        VacuumWorld {
            universe: Arc::new(universe),
            atoms,
        }
    }

    fn can_vacuum(x: &VacuumState, room: usize) -> bool {
        x.has_vacuum
            && match room {
                0 => x.battery > 0 || x.pos == Place::Charger,
                _ => x.battery > 0,
            }
    }
}

impl Environment for VacuumWorld {
    type State = VacuumState;
    type Action = VacuumAction;

    fn name(&self) -> &str {
        "vacuum"
    }

    fn universe(&self) -> &Arc<AtomUniverse> {
        &self.universe
    }

    fn reset_state(&self) -> VacuumState {
        VacuumState {
            pos: Place::L1,
            battery: 1,
            has_vacuum: false,
            clean: [false, true],
        }
    }

    fn abstraction(&self, x: &VacuumState) -> AbstractState {
        let a = &self.atoms;
        let mut b = Bits::zeros(self.universe.len());
        b.set(a.at, x.pos == Place::Charger);
        b.set(a.charged, x.battery > 0);
        b.set(a.has, x.has_vacuum);
        b.set(a.clean[0], x.clean[0]);
        b.set(a.clean[1], x.clean[1]);
        AbstractState(b)
    }

    fn available_actions(&self, _x: &VacuumState) -> Vec<VacuumAction> {
        use VacuumAction::*;
        vec![
            MoveTo(Place::L1),
            MoveTo(Place::Charger),
            Charge,
            Grab,
            Drop,
            Vacuum(0),
            Vacuum(1),
            Spill(0),
            Spill(1),
            Idle,
        ]
    }

    fn step(&self, x: &VacuumState, a: &VacuumAction, rng: &mut dyn RngCore) -> VacuumState {
        let mut y = *x;
        match *a {
            VacuumAction::MoveTo(p) => y.pos = p,
            VacuumAction::Charge => {
                if x.pos == Place::Charger {
                    y.battery = FULL;
                }
            }
            VacuumAction::Grab => {
                if !x.has_vacuum && rng.gen_bool(GRAB_SUCCESS) {
                    y.has_vacuum = true;
                }
            }
            VacuumAction::Drop => y.has_vacuum = false,
            VacuumAction::Vacuum(0) if Self::can_vacuum(x, 0) => {
                let u: f64 = rng.gen();
                if u < 0.5 {
                    y.clean[0] = true;
                    y.battery = 0;
                } else if u < 0.75 {
                    y.clean[0] = true;
                    y.pos = Place::Charger;
                } else {
                    y.battery = 0;
                }
            }
            VacuumAction::Vacuum(1) if Self::can_vacuum(x, 1) => {
                if rng.gen_bool(L2_SUCCESS) {
                    y.clean[1] = true;
                } else {
                    y.battery = 0;
                }
            }
            VacuumAction::Vacuum(_) => {}
            VacuumAction::Spill(i) => y.clean[i] = false,
            VacuumAction::Idle => {
                if x.pos != Place::Charger {
                    y.battery = x.battery.saturating_sub(1);
                }
            }
        }
        y
    }

    fn agent_action(&self, x: &VacuumState, intent: &LiteralConjunction, t: usize) -> Option<VacuumAction> {
        if intent.satisfied_by(&self.abstraction(x)) {
            return None;
        }
        let (atom, positive) = single_literal(intent)?;
        let a = &self.atoms;
        let at = x.pos == Place::Charger;
        use VacuumAction::*;
        match (atom, positive) {
            (i, true) if i == a.charged => Some(if at { Charge } else { MoveTo(Place::Charger) }),
            (i, false) if i == a.charged => (!at).then_some(Idle),
            (i, true) if i == a.at => Some(MoveTo(Place::Charger)),
            (i, false) if i == a.at => Some(MoveTo(Place::L1)),
            (i, true) if i == a.has => (t == 0).then_some(Grab),
            (i, false) if i == a.has => Some(Drop),
            (i, true) if i == a.clean[0] => (t == 0 && Self::can_vacuum(x, 0)).then_some(Vacuum(0)),
            (i, true) if i == a.clean[1] => (t == 0 && Self::can_vacuum(x, 1)).then_some(Vacuum(1)),
            (i, false) if i == a.clean[0] => Some(Spill(0)),
            (i, false) if i == a.clean[1] => Some(Spill(1)),
            _ => None,
        }
    }

    fn ground_truth(&self) -> CapabilityModel<f64> {
        let mut g = GroundTruthBuilder::new(self.universe.clone());
        let (at, ch, has) = ("at(charger,robot)", "charged(robot)", "has(robot,vacuum)");
        let (c1, c2) = ("clean(l1)", "clean(l2)");

        let cl = vec![g.conj(&[], &[ch])];
        let e = g.effect(&[ch, at], &[]);
        g.rule(ch, cl, vec![(1.0, e)]);
        let cl = vec![g.conj(&[ch], &[at])];
        let e = g.effect(&[], &[ch]);
        g.rule(&format!("¬{ch}"), cl, vec![(1.0, e)]);

        let cl = vec![g.conj(&[], &[at])];
        let e = g.effect(&[at], &[]);
        g.rule(at, cl, vec![(1.0, e)]);
        let cl = vec![g.conj(&[at], &[])];
        let e = g.effect(&[], &[at]);
        g.rule(&format!("¬{at}"), cl, vec![(1.0, e)]);

        let cl = vec![g.conj(&[], &[has])];
        let outs = vec![(GRAB_SUCCESS, g.effect(&[has], &[])), (1.0 - GRAB_SUCCESS, g.effect(&[], &[]))];
        g.rule(has, cl, outs);
        let cl = vec![g.conj(&[has], &[])];
        let e = g.effect(&[], &[has]);
        g.rule(&format!("¬{has}"), cl, vec![(1.0, e)]);

        let cl = vec![g.conj(&[has, ch], &[c1]), g.conj(&[has, at], &[c1])];
        let outs = vec![
            (0.50, g.effect(&[c1], &[ch])),
            (0.25, g.effect(&[c1, at], &[])),
            (0.25, g.effect(&[], &[ch])),
        ];
        g.rule(c1, cl, outs);
        let cl = vec![g.conj(&[has, ch], &[c2])];
        let outs = vec![(L2_SUCCESS, g.effect(&[c2], &[])), (1.0 - L2_SUCCESS, g.effect(&[], &[ch]))];
        g.rule(c2, cl, outs);

        for c in [c1, c2] {
            let cl = vec![g.conj(&[c], &[])];
            let e = g.effect(&[], &[c]);
            g.rule(&format!("¬{c}"), cl, vec![(1.0, e)]);
        }
        g.build()
    }
}
