//! Ground-atom universe, abstract states as bit vectors, literal conjunctions and
//! DNF conditions.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Predicate {
    pub name: String,
    pub params: Vec<String>,
}

impl Predicate {
    pub fn new(name: &str, params: &[&str]) -> Self {
        Predicate {
            name: name.to_string(),
            params: params.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Object {
    pub name: String,
    pub ty: String,
}

impl Object {
    pub fn new(name: &str, ty: &str) -> Self {
        Object {
            name: name.to_string(),
            ty: ty.to_string(),
        }
    }
}

/// Universe definition as it appears in configuration files.
///
/// `objects` maps object name to type and `predicates` maps predicate name to its
/// parameter types. Both are read as ordered pairs so duplicate keys are reported
/// instead of silently overwritten.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniverseDef {
    pub types: Vec<String>,
    #[serde(with = "pairs")]
    pub objects: Vec<(String, String)>,
    #[serde(with = "pairs")]
    pub predicates: Vec<(String, Vec<String>)>,
}

mod pairs {
    use std::fmt;
    use std::marker::PhantomData;

    use serde::de::{DeserializeOwned, MapAccess, Visitor};
    use serde::ser::SerializeMap;
    use serde::{Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, V: Serialize>(
        items: &[(String, V)],
        ser: S,
    ) -> Result<S::Ok, S::Error> {
        let mut map = ser.serialize_map(Some(items.len()))?;
        for (k, v) in items {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>, V: DeserializeOwned>(
        de: D,
    ) -> Result<Vec<(String, V)>, D::Error> {
        struct PairVisitor<V>(PhantomData<V>);
        impl<'de, V: DeserializeOwned> Visitor<'de> for PairVisitor<V> {
            type Value = Vec<(String, V)>;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, V>()? {
                    out.push((k, v));
                }
                Ok(out)
            }
        }
        de.deserialize_map(PairVisitor(PhantomData))
    }
}

impl UniverseDef {
    pub fn build(&self) -> Result<AtomUniverse> {
        let predicates: Vec<Predicate> = self
            .predicates
            .iter()
            .map(|(n, p)| Predicate {
                name: n.clone(),
                params: p.clone(),
            })
            .collect();
        let objects: Vec<Object> = self
            .objects
            .iter()
            .map(|(n, t)| Object {
                name: n.clone(),
                ty: t.clone(),
            })
            .collect();
        build_universe_typed(&self.types, &predicates, &objects)
    }
}

/// A well-typed ground atom such as `at(charger,robot)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundAtom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl GroundAtom {
    pub fn new(predicate: &str, args: &[&str]) -> Self {
        GroundAtom {
            predicate: predicate.to_string(),
            args: args.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.args.is_empty() {
            write!(f, "{}", self.predicate)
        } else {
            write!(f, "{}({})", self.predicate, self.args.join(","))
        }
    }
}

/// The totally ordered set of ground atoms over a finite set of predicates and
/// typed objects. Atom `j` is bit `j` of every abstract state.
#[derive(Clone, Debug)]
pub struct AtomUniverse {
    def: UniverseDef,
    atoms: Vec<GroundAtom>,
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl PartialEq for AtomUniverse {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names
    }
}

impl Eq for AtomUniverse {}

/// Grounds every predicate over the type-consistent object tuples.
///
/// Types are inferred from the predicate and object declarations.
pub fn build_universe(predicates: &[Predicate], objects: &[Object]) -> Result<AtomUniverse> {
    let mut types: Vec<String> = predicates
        .iter()
        .flat_map(|p| p.params.iter().cloned())
        .chain(objects.iter().map(|o| o.ty.clone()))
        .collect();
    types.sort();
    types.dedup();
    build_universe_typed(&types, predicates, objects)
}

/// Like [`build_universe`] with an explicit type set; undeclared types are
/// configuration errors.
pub fn build_universe_typed(
    types: &[String],
    predicates: &[Predicate],
    objects: &[Object],
) -> Result<AtomUniverse> {
    let type_set: HashSet<&str> = types.iter().map(String::as_str).collect();
    let mut seen = HashSet::new();
    for p in predicates {
        if !seen.insert(p.name.as_str()) {
            return Err(Error::Config(format!("duplicate predicate `{}`", p.name)));
        }
        for t in &p.params {
            if !type_set.contains(t.as_str()) {
                return Err(Error::Config(format!(
                    "predicate `{}` uses undeclared type `{t}`",
                    p.name
                )));
            }
        }
    }
    let mut seen = HashSet::new();
    for o in objects {
        if !seen.insert(o.name.as_str()) {
            return Err(Error::Config(format!("duplicate object `{}`", o.name)));
        }
        if !type_set.contains(o.ty.as_str()) {
            return Err(Error::Config(format!(
                "object `{}` has undeclared type `{}`",
                o.name, o.ty
            )));
        }
    }

    let mut by_type: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for o in objects {
        by_type.entry(o.ty.as_str()).or_default().push(o.name.as_str());
    }
    for names in by_type.values_mut() {
        names.sort_unstable();
    }

    let mut sorted_preds: Vec<&Predicate> = predicates.iter().collect();
    sorted_preds.sort_by(|a, b| a.name.cmp(&b.name));

    let mut atoms = Vec::new();
    for p in sorted_preds {
        let domains: Vec<&[&str]> = p
            .params
            .iter()
            .map(|t| by_type.get(t.as_str()).map(Vec::as_slice).unwrap_or(&[]))
            .collect();
        // Cartesian product in lexicographic order of the object-name tuples.
        let mut tuples: Vec<Vec<&str>> = vec![Vec::new()];
        for d in &domains {
            tuples = tuples
                .into_iter()
                .flat_map(|t| {
                    d.iter().map(move |o| {
                        let mut next = t.clone();
                        next.push(*o);
                        next
                    })
                })
                .collect();
        }
        atoms.extend(tuples.into_iter().map(|args| GroundAtom {
            predicate: p.name.clone(),
            args: args.into_iter().map(str::to_string).collect(),
        }));
    }

    let names: Vec<String> = atoms.iter().map(|a| a.to_string()).collect();
    let index = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect();
    let def = UniverseDef {
        types: types.to_vec(),
        objects: objects
            .iter()
            .map(|o| (o.name.clone(), o.ty.clone()))
            .collect(),
        predicates: predicates
            .iter()
            .map(|p| (p.name.clone(), p.params.clone()))
            .collect(),
    };
    Ok(AtomUniverse {
        def,
        atoms,
        names,
        index,
    })
}

impl AtomUniverse {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[GroundAtom] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &GroundAtom {
        &self.atoms[i]
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn definition(&self) -> &UniverseDef {
        &self.def
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownAtom(name.to_string()))
    }

    /// Type of the named object, if declared.
    pub fn object_type(&self, object: &str) -> Option<&str> {
        self.def
            .objects
            .iter()
            .find(|(n, _)| n == object)
            .map(|(_, t)| t.as_str())
    }

    /// All atoms of `predicate` whose arguments have the same types as `atom`'s.
    pub fn regroundings(&self, atom: usize) -> Vec<usize> {
        let pred = &self.atoms[atom].predicate;
        (0..self.atoms.len())
            .filter(|&j| &self.atoms[j].predicate == pred)
            .collect()
    }

    pub fn encode_state<S: AsRef<str>>(
        &self,
        atoms: impl IntoIterator<Item = S>,
    ) -> Result<AbstractState> {
        let mut bits = Bits::zeros(self.len());
        for a in atoms {
            bits.set(self.index_of(a.as_ref())?, true);
        }
        Ok(AbstractState(bits))
    }

    pub fn encode_atoms<'a>(
        &self,
        atoms: impl IntoIterator<Item = &'a GroundAtom>,
    ) -> Result<AbstractState> {
        self.encode_state(atoms.into_iter().map(|a| a.to_string()))
    }

    /// Sorted atom names that hold in `state`.
    pub fn decode_state(&self, state: &AbstractState) -> Vec<String> {
        let mut names: Vec<String> = state
            .0
            .ones_iter()
            .map(|i| self.names[i].clone())
            .collect();
        names.sort();
        names
    }

    pub fn empty_state(&self) -> AbstractState {
        AbstractState(Bits::zeros(self.len()))
    }

    pub fn mask<S: AsRef<str>>(&self, atoms: impl IntoIterator<Item = S>) -> Result<Bits> {
        Ok(self.encode_state(atoms)?.0)
    }

    pub fn mask_names(&self, bits: &Bits) -> Vec<String> {
        let mut names: Vec<String> = bits.ones_iter().map(|i| self.names[i].clone()).collect();
        names.sort();
        names
    }

    /// Parses `name` or `¬name` / `not name` into a literal.
    pub fn parse_literal(&self, text: &str) -> Result<Literal> {
        let t = text.trim();
        let (positive, body) = if let Some(rest) = t.strip_prefix('¬') {
            (false, rest)
        } else if let Some(rest) = t.strip_prefix("not ") {
            (false, rest)
        } else {
            (true, t)
        };
        Ok(Literal {
            atom: self.index_of(body.trim())?,
            positive,
        })
    }

    pub fn into_shared(self) -> Arc<AtomUniverse> {
        Arc::new(self)
    }
}

/// An abstract state: bit `j` is the truth value of atom `j` (closed world).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AbstractState(pub Bits);

impl AbstractState {
    pub fn bits(&self) -> &Bits {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn holds(&self, atom: usize) -> bool {
        self.0.get(atom)
    }

    pub fn with(&self, atom: usize, value: bool) -> AbstractState {
        let mut b = self.0.clone();
        b.set(atom, value);
        AbstractState(b)
    }

    /// Enumerates every state over `n` atoms. Only sensible for small `n`.
    pub fn enumerate(n: usize) -> impl Iterator<Item = AbstractState> {
        assert!(n <= 24, "exhaustive enumeration limited to 24 atoms");
        (0u64..(1u64 << n)).map(move |v| AbstractState(Bits::from_u64(n, v)))
    }
}

impl fmt::Debug for AbstractState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S[{:?}]", self.0)
    }
}

/// A single ground literal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub atom: usize,
    pub positive: bool,
}

impl Literal {
    pub fn display(&self, universe: &AtomUniverse) -> String {
        if self.positive {
            universe.name(self.atom).to_string()
        } else {
            format!("¬{}", universe.name(self.atom))
        }
    }

    pub fn as_conjunction(&self, n: usize) -> LiteralConjunction {
        let mut c = LiteralConjunction::empty(n);
        if self.positive {
            c.positives.set(self.atom, true);
        } else {
            c.negatives.set(self.atom, true);
        }
        c
    }
}

/// Conjunction of literals: atoms in `positives` must hold, atoms in `negatives`
/// must not.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LiteralConjunction {
    pub positives: Bits,
    pub negatives: Bits,
}

impl LiteralConjunction {
    pub fn new(positives: Bits, negatives: Bits) -> Result<Self> {
        if positives.len() != negatives.len() {
            return Err(Error::Dimension {
                expected: positives.len(),
                found: negatives.len(),
            });
        }
        if positives.intersects(&negatives) {
            return Err(Error::Contract(
                "literal conjunction asserts and denies the same atom".into(),
            ));
        }
        Ok(LiteralConjunction {
            positives,
            negatives,
        })
    }

    /// The empty (always true) conjunction.
    pub fn empty(n: usize) -> Self {
        LiteralConjunction {
            positives: Bits::zeros(n),
            negatives: Bits::zeros(n),
        }
    }

    pub fn from_names<S: AsRef<str>>(
        universe: &AtomUniverse,
        positives: impl IntoIterator<Item = S>,
        negatives: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        Self::new(universe.mask(positives)?, universe.mask(negatives)?)
    }

    pub fn len(&self) -> usize {
        self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_zero() && self.negatives.is_zero()
    }

    /// True when every atom is constrained, i.e. exactly one state satisfies it.
    pub fn is_full(&self) -> bool {
        self.positives.or(&self.negatives).count_ones() == self.len()
    }

    #[inline]
    pub fn satisfied_by(&self, state: &AbstractState) -> bool {
        self.positives.is_subset_of(&state.0) && !self.negatives.intersects(&state.0)
    }

    pub fn literals(&self) -> Vec<Literal> {
        let mut out: Vec<Literal> = self
            .positives
            .ones_iter()
            .map(|atom| Literal {
                atom,
                positive: true,
            })
            .chain(self.negatives.ones_iter().map(|atom| Literal {
                atom,
                positive: false,
            }))
            .collect();
        out.sort_by_key(|l| (l.atom, !l.positive));
        out
    }

    pub fn display(&self, universe: &AtomUniverse) -> String {
        let lits = self.literals();
        if lits.is_empty() {
            return "⊤".to_string();
        }
        lits.iter()
            .map(|l| l.display(universe))
            .collect::<Vec<_>>()
            .join(" ∧ ")
    }
}

/// ℓ(s): the full conjunction satisfied by `state` alone.
pub fn literal_of(state: &AbstractState) -> LiteralConjunction {
    LiteralConjunction {
        positives: state.0.clone(),
        negatives: state.0.not(),
    }
}

/// A rule condition: a DNF over literal conjunctions, optionally negated.
///
/// Clauses that constrain every atom are indexed by the single state they accept,
/// so membership checks on the pessimistic and optimistic conditions built from
/// observed states are hash lookups.
#[derive(Clone, Debug)]
pub struct Condition {
    negated: bool,
    clauses: Vec<LiteralConjunction>,
    full: HashSet<AbstractState>,
    partial: Vec<usize>,
}

impl PartialEq for Condition {
    fn eq(&self, other: &Self) -> bool {
        self.negated == other.negated && self.clauses == other.clauses
    }
}

impl Condition {
    pub fn dnf(clauses: Vec<LiteralConjunction>) -> Self {
        Self::build(false, clauses)
    }

    pub fn negated_dnf(clauses: Vec<LiteralConjunction>) -> Self {
        Self::build(true, clauses)
    }

    /// Condition accepted by every state.
    pub fn always() -> Self {
        Self::negated_dnf(Vec::new())
    }

    fn build(negated: bool, clauses: Vec<LiteralConjunction>) -> Self {
        let mut full = HashSet::new();
        let mut partial = Vec::new();
        for (i, c) in clauses.iter().enumerate() {
            if c.is_full() {
                full.insert(AbstractState(c.positives.clone()));
            } else {
                partial.push(i);
            }
        }
        Condition {
            negated,
            clauses,
            full,
            partial,
        }
    }

    pub fn is_negated(&self) -> bool {
        self.negated
    }

    pub fn clauses(&self) -> &[LiteralConjunction] {
        &self.clauses
    }

    fn dnf_holds(&self, state: &AbstractState) -> bool {
        self.full.contains(state)
            || self
                .partial
                .iter()
                .any(|&i| self.clauses[i].satisfied_by(state))
    }

    /// Unchecked membership test; the state must belong to the condition's universe.
    #[inline]
    pub fn accepts(&self, state: &AbstractState) -> bool {
        self.dnf_holds(state) != self.negated
    }

    pub fn display(&self, universe: &AtomUniverse) -> String {
        let body = if self.clauses.is_empty() {
            "⊥".to_string()
        } else {
            self.clauses
                .iter()
                .map(|c| format!("({})", c.display(universe)))
                .collect::<Vec<_>>()
                .join(" ∨ ")
        };
        if self.negated {
            format!("¬[{body}]")
        } else {
            body
        }
    }
}

/// Checked satisfaction test: errors when the state and condition come from
/// universes of different sizes.
pub fn satisfies(state: &AbstractState, condition: &Condition) -> Result<bool> {
    if let Some(c) = condition.clauses.first() {
        if c.len() != state.len() {
            return Err(Error::Dimension {
                expected: c.len(),
                found: state.len(),
            });
        }
    }
    Ok(condition.accepts(state))
}

/// Maps environment states to abstract states. Must be deterministic.
pub trait AbstractionFn<X> {
    fn abstract_state(&self, x: &X) -> AbstractState;
}
