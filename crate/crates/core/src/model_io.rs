//! Model serialization: a JSON document with atom names (round-trippable) and a
//! human-readable text listing.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::abstraction::{AtomUniverse, Condition, LiteralConjunction, UniverseDef};
use crate::capability_model::{Capability, CapabilityModel, ConditionalEffectRule, Flavor, Outcome};
use crate::dataset::EffectPair;
use crate::error::Result;
use crate::scalar::Probability;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConjunctionDoc {
    #[serde(default)]
    pub positive: Vec<String>,
    #[serde(default)]
    pub negative: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionDoc {
    #[serde(default)]
    pub negated: bool,
    pub clauses: Vec<ConjunctionDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "P: Probability")]
pub struct OutcomeDoc<P> {
    pub probability: P,
    #[serde(default)]
    pub add: Vec<String>,
    #[serde(default)]
    pub del: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "P: Probability")]
pub struct RuleDoc<P> {
    pub condition: ConditionDoc,
    pub outcomes: Vec<OutcomeDoc<P>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "P: Probability")]
pub struct CapabilityDoc<P> {
    pub name: String,
    pub intent: ConjunctionDoc,
    pub rules: Vec<RuleDoc<P>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "P: Probability")]
pub struct ModelDoc<P> {
    pub flavor: Flavor,
    pub universe: UniverseDef,
    pub capabilities: Vec<CapabilityDoc<P>>,
}

fn conj_doc(c: &LiteralConjunction, u: &AtomUniverse) -> ConjunctionDoc {
    ConjunctionDoc {
        positive: u.mask_names(&c.positives),
        negative: u.mask_names(&c.negatives),
    }
}

fn conj_from(d: &ConjunctionDoc, u: &AtomUniverse) -> Result<LiteralConjunction> {
    LiteralConjunction::from_names(u, &d.positive, &d.negative)
}

pub fn to_doc<P: Probability>(model: &CapabilityModel<P>) -> ModelDoc<P> {
    let u = model.universe();
    ModelDoc {
        flavor: model.flavor(),
        universe: u.definition().clone(),
        capabilities: model
            .capabilities()
            .map(|c| CapabilityDoc {
                name: c.name.clone(),
                intent: conj_doc(&c.intent, u),
                rules: c
                    .rules
                    .iter()
                    .map(|r| RuleDoc {
                        condition: ConditionDoc {
                            negated: r.condition.is_negated(),
                            clauses: r.condition.clauses().iter().map(|k| conj_doc(k, u)).collect(),
                        },
                        outcomes: r
                            .outcomes
                            .iter()
                            .map(|o| OutcomeDoc {
                                probability: o.probability,
                                add: u.mask_names(&o.effect.add),
                                del: u.mask_names(&o.effect.del),
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// Rebuilds a model; the universe is reconstructed from the embedded definition.
pub fn from_doc<P: Probability>(doc: &ModelDoc<P>) -> Result<CapabilityModel<P>> {
    let u = Arc::new(doc.universe.build()?);
    let mut model = CapabilityModel::new(u.clone(), doc.flavor);
    for c in &doc.capabilities {
        let mut cap = Capability::new(c.name.clone(), conj_from(&c.intent, &u)?);
        for r in &c.rules {
            let clauses = r
                .condition
                .clauses
                .iter()
                .map(|k| conj_from(k, &u))
                .collect::<Result<Vec<_>>>()?;
            let condition = if r.condition.negated {
                Condition::negated_dnf(clauses)
            } else {
                Condition::dnf(clauses)
            };
            let outcomes = r
                .outcomes
                .iter()
                .map(|o| {
                    Ok(Outcome {
                        probability: o.probability,
                        effect: EffectPair::from_names(&u, &o.add, &o.del)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            cap.rules.push(ConditionalEffectRule::new(condition, outcomes)?);
        }
        model.insert(cap)?;
    }
    Ok(model)
}

pub fn to_json<P: Probability>(model: &CapabilityModel<P>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&to_doc(model))?)
}

pub fn from_json<P: Probability>(text: &str) -> Result<CapabilityModel<P>> {
    from_doc(&serde_json::from_str::<ModelDoc<P>>(text)?)
}

/// Text listing in the style of a capability card.
pub fn to_text<P: Probability>(model: &CapabilityModel<P>) -> String {
    let u = model.universe();
    let mut out = String::new();
    for c in model.capabilities() {
        let _ = writeln!(out, "Capability Name: {}", c.name);
        let _ = writeln!(out, "Intent: {}", c.intent.display(u));
        if c.rules.is_empty() {
            let _ = writeln!(out, "  (no rules)");
        }
        for (i, r) in c.rules.iter().enumerate() {
            let _ = writeln!(out, "Conditional Effect r{}:", i + 1);
            let _ = writeln!(out, "  Condition: {}", r.condition.display(u));
            let _ = writeln!(out, "  Effects:");
            for o in &r.outcomes {
                let _ = writeln!(out, "    {:.2}: {}", o.probability, o.effect.display(u));
            }
        }
        out.push('\n');
    }
    out
}
