//! Acceptance criteria 1–8. Runs without the libtest harness so each criterion
//! prints exactly one PASS/FAIL line; exits non-zero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::Command;
use std::time::Instant;

use capml::abstraction::{AbstractState, LiteralConjunction};
use capml::capability_model::{build_models, equivalent, first_disagreement};
use capml::dataset::{TemporalBound, Transition, TransitionDataset};
use capml::environment::{
    Abstraction, BlackBoxAgent, Environment, Place, RoadWorld, ScriptedAgent, Simulator, VacuumState, VacuumWorld,
};
use capml::evaluation::{exact_vd, ground_truth_transitions, sampled_vd, WeightedTransition};
use capml::learner::{self, LearnerConfig, Variant};
use capml::query_engine::{tv_distance, StateDistribution};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 10;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Criterion 1: soundness and completeness on 100 random datasets, exhaustive over 2^n states.
fn sound_and_complete() -> Verdict {
    let start = Instant::now();
    let mut failures = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..100 {
        let n = if i % 10 == 0 { 12 } else { rng.gen_range(1..=12) };
        let u = universe(n);
        let caps = cap_names(rng.gen_range(1..=3));
        let ds = random_dataset(&mut rng, n, &caps);
        let (pess, opt) = build_models::<f64>(&u, &intents(&u, &caps), &ds);
        let observed: BTreeSet<Transition> = ds.iter().map(|(t, _)| t).collect();
        let complete = observed.iter().all(|t| pess.entails(t));
        let opt_complete = observed.iter().all(|t| opt.entails(t));
        let mut sound = true;
        for s in all_states(n) {
            for c in &caps {
                for s2 in pess.possible_successors(&s, c) {
                    let t = Transition::new(s.clone(), c.clone(), s2);
                    if pess.entails(&t) && !observed.contains(&t) {
                        sound = false;
                    }
                }
            }
        }
        failures += !(complete && opt_complete && sound) as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(failures == 0 && secs < 60.0, format!("{failures} failures / 100 datasets, {secs:.1}s (< 60s)"))
}

/// Criterion 2: every ground-truth transition injected; all three models agree.
fn exhaustive_injection() -> Verdict {
    let start = Instant::now();
    let w = VacuumWorld::new();
    let u = w.universe().clone();
    let gt = w.ground_truth();
    let mut ds = TransitionDataset::new();
    for s in AbstractState::enumerate(u.len()) {
        for c in gt.names() {
            for (s2, p) in gt.predict(&s, c) {
                ds.add(Transition::new(s.clone(), c, s2), (p * 1000.0).round() as u64);
            }
        }
    }
    let intents: BTreeMap<String, LiteralConjunction> =
        gt.capabilities().map(|c| (c.name.clone(), c.intent.clone())).collect();
    let (pess, opt) = build_models::<f64>(&u, &intents, &ds);
    let states = || AbstractState::enumerate(u.len());
    let ok = equivalent(&pess, &opt, states()) && equivalent(&pess, &gt, states()) && equivalent(&opt, &gt, states());
    let secs = start.elapsed().as_secs_f64();
    let detail = match first_disagreement(&pess, &gt, states()) {
        Some(t) => format!("disagree on {} from {:?}", t.c, u.decode_state(&t.s)),
        None => format!("M_pess ≡ M_opt ≡ ground truth over {} states", 1 << u.len()),
    };
    verdict(ok && secs < 10.0, format!("{detail}, {secs:.2}s (< 10s)"))
}

struct RunSummary {
    final_vd: f64,
    /// Cumulative capability executions when exact VD first fell below 0.1.
    executions_to_01: Option<usize>,
    seconds: f64,
}

fn learn_curve<E: Environment>(env: &E, dstar: &[WeightedTransition], variant: Variant, seed: u64) -> RunSummary {
    let start = Instant::now();
    let cfg = LearnerConfig {
        variant,
        seed,
        ..LearnerConfig::default()
    };
    let mut first = None;
    let out = learner::run::<_, f64>(env, &cfg, |ev| {
        if first.is_none() && exact_vd(ev.pess, dstar) < 0.1 {
            first = Some(ev.record.cumulative_capability_executions);
        }
    })
    .expect("learning run");
    RunSummary {
        final_vd: exact_vd(&out.pess, dstar),
        executions_to_01: first,
        seconds: start.elapsed().as_secs_f64(),
    }
}

type Runs = BTreeMap<Variant, Vec<RunSummary>>;

fn all_runs<E: Environment>(env: &E) -> Runs {
    let s0 = env.abstraction(&env.reset_state());
    let dstar = ground_truth_transitions(&env.ground_truth(), &s0);
    [Variant::Exact, Variant::Sampled, Variant::Random]
        .into_iter()
        .map(|v| (v, (0..SEEDS).map(|seed| learn_curve(env, &dstar, v, seed)).collect()))
        .collect()
}

/// Criterion 3: mean final exact VD over 10 seeds, both PCML variants.
fn convergence(vacuum: &Runs) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut secs = 0.0;
    for v in [Variant::Exact, Variant::Sampled] {
        let runs = &vacuum[&v];
        let mean = runs.iter().map(|r| r.final_vd).sum::<f64>() / runs.len() as f64;
        secs += runs.iter().map(|r| r.seconds).sum::<f64>();
        pass &= mean < 0.05;
        parts.push(format!("{v} mean exact_vd {mean:.4}"));
    }
    pass &= secs < 600.0;
    verdict(pass, format!("{} (< 0.05), {secs:.0}s (< 600s)", parts.join(", ")))
}

fn median_executions(runs: &[RunSummary]) -> f64 {
    let mut xs: Vec<f64> = runs
        .iter()
        .map(|r| r.executions_to_01.map_or(f64::INFINITY, |x| x as f64))
        .collect();
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        (xs[k / 2 - 1] + xs[k / 2]) / 2.0
    }
}

/// Criterion 6: median executions to exact VD < 0.1, PCML vs random.
fn query_efficiency(vacuum: &Runs, roads: &Runs) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, runs) in [("vacuum", vacuum), ("roads", roads)] {
        let random = median_executions(&runs[&Variant::Random]);
        let exact = median_executions(&runs[&Variant::Exact]);
        let sampled = median_executions(&runs[&Variant::Sampled]);
        pass &= exact < random && sampled < random;
        parts.push(format!("{name}: exact {exact} sampled {sampled} random {random}"));
    }
    verdict(pass, parts.join("; "))
}

/// Criterion 4: 2,000 executions of clean(l1) from a state its rule covers.
fn clean_rule_fidelity() -> Verdict {
    let w = VacuumWorld::new();
    let u = w.universe().clone();
    let name = "achieve__clean(l1)";
    let intent = u.parse_literal("clean(l1)").unwrap().as_conjunction(u.len());
    let x0 = VacuumState {
        pos: Place::L1,
        battery: 2,
        has_vacuum: true,
        clean: [false, false],
    };
    let mut sim = Simulator::new(&w, 2024);
    let mut ds = TransitionDataset::new();
    for _ in 0..2000 {
        sim.revert(&x0);
        let traj = ScriptedAgent.attempt(&mut sim, &intent, 100);
        ds.record(&traj, name, &Abstraction(&w), TemporalBound::Unbounded).unwrap();
    }
    let intents: BTreeMap<String, LiteralConjunction> = [(name.to_string(), intent)].into_iter().collect();
    let (pess, _) = build_models::<f64>(&u, &intents, &ds);
    let rule = &pess.get(name).unwrap().rules[0];
    let mut probs: Vec<f64> = rule.outcomes.iter().map(|o| o.probability).collect();
    probs.sort_by(|a, b| b.total_cmp(a));
    let target = [0.50, 0.25, 0.25];
    let pass = probs.len() == 3 && probs.iter().zip(target).all(|(p, t)| (p - t).abs() <= 0.03);
    verdict(pass, format!("learned {probs:.3?} vs (0.50, 0.25, 0.25) ± 0.03"))
}

/// Criterion 5: push against dense enumeration on 1,000 random instances.
fn push_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let n = if i % 10 == 0 { 12 } else { rng.gen_range(1..=12) };
        let u = universe(n);
        let m = random_model(&mut rng, &u);
        let rho = random_distribution(&mut rng, n);
        let pushed = rho.push(&m, "c");
        let dense = dense_push(&m, "c", &rho);
        for (k, &p) in dense.iter().enumerate() {
            worst = worst.max((pushed.prob(&state(n, k as u64)) - p).abs());
        }
    }
    verdict(worst <= 1e-9, format!("max per-state error {worst:.2e} (≤ 1e-9)"))
}

/// Criterion 7: the worked metric examples.
fn metric_examples() -> Verdict {
    let n = 2;
    let (a, b, c) = (state(n, 0), state(n, 1), state(n, 2));
    let dist = |e: &[(AbstractState, f64)]| StateDistribution::<f64>::from_probabilities(e.iter().cloned());
    let ds = |e: &[(&AbstractState, u64)]| {
        let mut d = TransitionDataset::new();
        for (s2, k) in e {
            d.add(Transition::new(a.clone(), "c", (*s2).clone()), *k);
        }
        d
    };
    let half = dist(&[(a.clone(), 0.5), (b.clone(), 0.5)]);
    let cases = [
        ("tv identical", tv_distance(&half, &half), 0.0),
        ("tv disjoint", tv_distance(&dist(&[(a.clone(), 1.0)]), &dist(&[(c.clone(), 1.0)])), 1.0),
        ("tv half", tv_distance(&half, &dist(&[(a.clone(), 1.0)])), 0.5),
        ("vd identical", sampled_vd(&ds(&[(&b, 2), (&c, 1)]), &ds(&[(&b, 2), (&c, 1)])), 0.0),
        ("vd disjoint", sampled_vd(&ds(&[(&b, 1)]), &ds(&[(&c, 1)])), 1.0),
        ("vd ratios", sampled_vd(&ds(&[(&b, 3), (&c, 1)]), &ds(&[(&b, 2), (&c, 2)])), 0.25),
    ];
    let bad: Vec<String> = cases
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > 1e-12)
        .map(|(name, got, want)| format!("{name}: {got} ≠ {want}"))
        .collect();
    verdict(bad.is_empty(), if bad.is_empty() { "6/6 examples within 1e-12".into() } else { bad.join(", ") })
}

/// Criterion 8: two `learn` invocations with one config and seed.
fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("vacuum.json");
    std::fs::write(&cfg, r#"{"environment": {"name": "vacuum"}, "seed": 42, "learner": {"max_queries": 40}}"#).unwrap();
    let mut models = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_capml"))
            .args(["learn", "--quiet", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        if !status.success() {
            return verdict(false, format!("learn exited with {status}"));
        }
        models.push(std::fs::read(out.join("model.json")).unwrap());
    }
    let same = models[0] == models[1];
    verdict(same, format!("model.json {} ({} bytes)", if same { "byte-identical" } else { "differs" }, models[0].len()))
}

fn report(id: usize, title: &str, v: &Verdict) {
    println!("criterion {id} [{}] {title}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
}

fn main() {
    let mut verdicts: Vec<(usize, &str, Verdict)> = vec![
        (1, "soundness and completeness", sound_and_complete()),
        (2, "exhaustive injection", exhaustive_injection()),
    ];
    for (id, title, v) in &verdicts {
        report(*id, title, v);
    }
    let vacuum = all_runs(&VacuumWorld::new());
    let roads = all_runs(&RoadWorld::new(0.8));
    let rest: Vec<(usize, &str, Verdict)> = vec![
        (3, "convergence", convergence(&vacuum)),
        (4, "clean(l1) fidelity", clean_rule_fidelity()),
        (5, "push oracle", push_oracle()),
        (6, "query efficiency", query_efficiency(&vacuum, &roads)),
        (7, "metric examples", metric_examples()),
        (8, "determinism", determinism()),
    ];
    for (id, title, v) in &rest {
        report(*id, title, v);
    }
    verdicts.extend(rest);
    let failed = verdicts.iter().filter(|(_, _, v)| !v.pass).count();
    println!("acceptance: {}/{} criteria pass", verdicts.len() - failed, verdicts.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
