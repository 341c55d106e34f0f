//! The capability-transition multiset, effect extraction, and conversion of
//! environment trajectories into abstract transitions.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::abstraction::{AbstractState, AbstractionFn, AtomUniverse};
use crate::bits::Bits;
use crate::error::{Error, Result};

/// ⟨s, c, s′⟩.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Transition {
    pub c: String,
    pub s: AbstractState,
    pub s_next: AbstractState,
}

impl Transition {
    pub fn new(s: AbstractState, c: impl Into<String>, s_next: AbstractState) -> Self {
        Transition {
            c: c.into(),
            s,
            s_next,
        }
    }
}

/// Atoms added (`add`) and removed (`del`) across a transition.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EffectPair {
    pub add: Bits,
    pub del: Bits,
}

impl EffectPair {
    pub fn new(add: Bits, del: Bits) -> Result<Self> {
        if add.intersects(&del) {
            return Err(Error::Contract("effect adds and deletes the same atom".into()));
        }
        Ok(EffectPair { add, del })
    }

    pub fn none(n: usize) -> Self {
        EffectPair {
            add: Bits::zeros(n),
            del: Bits::zeros(n),
        }
    }

    pub fn is_noop(&self) -> bool {
        self.add.is_zero() && self.del.is_zero()
    }

    pub fn from_names<S: AsRef<str>>(
        universe: &AtomUniverse,
        add: impl IntoIterator<Item = S>,
        del: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        Self::new(universe.mask(add)?, universe.mask(del)?)
    }

    pub fn display(&self, universe: &AtomUniverse) -> String {
        let mut parts: Vec<String> = universe.mask_names(&self.add);
        parts.extend(universe.mask_names(&self.del).into_iter().map(|n| format!("¬{n}")));
        if parts.is_empty() {
            "(no change)".to_string()
        } else {
            parts.join(" ∧ ")
        }
    }
}

/// η(⟨s,c,s′⟩) = (s′ ∖ s, s ∖ s′).
pub fn effects_of(t: &Transition) -> EffectPair {
    effect_between(&t.s, &t.s_next)
}

pub fn effect_between(s: &AbstractState, s_next: &AbstractState) -> EffectPair {
    EffectPair {
        add: s_next.0.and_not(&s.0),
        del: s.0.and_not(&s_next.0),
    }
}

/// (state AND NOT del) OR add.
#[inline]
pub fn apply(state: &AbstractState, effect: &EffectPair) -> AbstractState {
    AbstractState(state.0.and_not(&effect.del).or(&effect.add))
}

/// Bound Θ on the number of distinct abstract states observed per execution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TemporalBound {
    #[default]
    Unbounded,
    #[serde(untagged)]
    Max(usize),
}

impl TemporalBound {
    pub fn validate(self) -> Result<Self> {
        match self {
            TemporalBound::Max(0) => Err(Error::Config("temporal bound must be ≥ 1".into())),
            t => Ok(t),
        }
    }
}

/// Abstraction of a trajectory with consecutive duplicates collapsed, truncated to
/// at most Θ states. Each entry carries the index of the first environment state
/// that produced it.
pub fn abstract_trajectory_indexed<X, F: AbstractionFn<X> + ?Sized>(
    trajectory: &[X],
    abstraction: &F,
    theta: TemporalBound,
) -> Result<Vec<(usize, AbstractState)>> {
    if trajectory.is_empty() {
        return Err(Error::Contract("empty trajectory".into()));
    }
    let limit = match theta {
        TemporalBound::Unbounded => usize::MAX,
        TemporalBound::Max(0) => return Err(Error::Contract("temporal bound must be ≥ 1".into())),
        TemporalBound::Max(k) => k,
    };
    let mut out: Vec<(usize, AbstractState)> = Vec::new();
    for (i, x) in trajectory.iter().enumerate() {
        let s = abstraction.abstract_state(x);
        if out.last().map(|(_, last)| last != &s).unwrap_or(true) {
            if out.len() == limit {
                break;
            }
            out.push((i, s));
        }
    }
    Ok(out)
}

pub fn abstract_trajectory<X, F: AbstractionFn<X> + ?Sized>(
    trajectory: &[X],
    abstraction: &F,
    theta: TemporalBound,
) -> Result<Vec<AbstractState>> {
    Ok(abstract_trajectory_indexed(trajectory, abstraction, theta)?
        .into_iter()
        .map(|(_, s)| s)
        .collect())
}

/// Multiset of capability transitions, indexed by capability and start state.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TransitionDataset {
    by_cap: BTreeMap<String, BTreeMap<AbstractState, BTreeMap<AbstractState, u64>>>,
    total: u64,
    unique: usize,
}

impl TransitionDataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `count` copies of `t`; returns true when the triple was previously unseen.
    pub fn add(&mut self, t: Transition, count: u64) -> bool {
        if count == 0 {
            return false;
        }
        let slot = self
            .by_cap
            .entry(t.c)
            .or_default()
            .entry(t.s)
            .or_default()
            .entry(t.s_next)
            .or_insert(0);
        let novel = *slot == 0;
        *slot += count;
        self.total += count;
        if novel {
            self.unique += 1;
        }
        novel
    }

    pub fn insert(&mut self, t: Transition) -> bool {
        self.add(t, 1)
    }

    /// Records the endpoint transition of an environment trajectory.
    pub fn record<X, F: AbstractionFn<X> + ?Sized>(
        &mut self,
        trajectory: &[X],
        capability: &str,
        abstraction: &F,
        theta: TemporalBound,
    ) -> Result<(Transition, bool)> {
        let seq = abstract_trajectory(trajectory, abstraction, theta)?;
        let t = Transition::new(
            seq[0].clone(),
            capability,
            seq.last().expect("nonempty").clone(),
        );
        let novel = self.insert(t.clone());
        Ok((t, novel))
    }

    pub fn count(&self, t: &Transition) -> u64 {
        self.by_cap
            .get(&t.c)
            .and_then(|m| m.get(&t.s))
            .and_then(|m| m.get(&t.s_next))
            .copied()
            .unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn unique(&self) -> usize {
        self.unique
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn capabilities(&self) -> impl Iterator<Item = &str> {
        self.by_cap.keys().map(String::as_str)
    }

    /// 𝒟_c grouped by start state: s → (s′ → count).
    pub fn for_capability(
        &self,
        c: &str,
    ) -> Option<&BTreeMap<AbstractState, BTreeMap<AbstractState, u64>>> {
        self.by_cap.get(c)
    }

    /// 𝒟_c(s): successor counts from `s` under `c`.
    pub fn successors(&self, c: &str, s: &AbstractState) -> Option<&BTreeMap<AbstractState, u64>> {
        self.by_cap.get(c).and_then(|m| m.get(s))
    }

    /// η_c(s, 𝒟).
    pub fn effect_set(&self, c: &str, s: &AbstractState) -> BTreeSet<EffectPair> {
        self.successors(c, s)
            .map(|succ| succ.keys().map(|n| effect_between(s, n)).collect())
            .unwrap_or_default()
    }

    /// |𝒟(s)|: number of transitions (with multiplicity) starting in `s`, over all
    /// capabilities.
    pub fn visits_from(&self, s: &AbstractState) -> u64 {
        self.by_cap
            .values()
            .filter_map(|m| m.get(s))
            .flat_map(|succ| succ.values())
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Transition, u64)> + '_ {
        self.by_cap.iter().flat_map(|(c, by_s)| {
            by_s.iter().flat_map(move |(s, succ)| {
                succ.iter()
                    .map(move |(n, &k)| (Transition::new(s.clone(), c.clone(), n.clone()), k))
            })
        })
    }

    pub fn merge(&mut self, other: &TransitionDataset) {
        for (t, k) in other.iter() {
            self.add(t, k);
        }
    }

    pub fn write_jsonl<W: Write>(&self, universe: &AtomUniverse, mut out: W) -> Result<()> {
        for (t, count) in self.iter() {
            let rec = TransitionRecord {
                s: universe.decode_state(&t.s),
                c: t.c,
                s_next: universe.decode_state(&t.s_next),
                count,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(universe: &AtomUniverse, input: R) -> Result<Self> {
        let mut ds = TransitionDataset::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TransitionRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("dataset line {}: {e}", lineno + 1)))?;
            if rec.count == 0 {
                return Err(Error::Format(format!(
                    "dataset line {}: zero count",
                    lineno + 1
                )));
            }
            let t = Transition::new(
                universe.encode_state(&rec.s)?,
                rec.c,
                universe.encode_state(&rec.s_next)?,
            );
            ds.add(t, rec.count);
        }
        Ok(ds)
    }
}

/// One line of the JSON-lines dataset file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub s: Vec<String>,
    pub c: String,
    pub s_next: Vec<String>,
    pub count: u64,
}
