//! PCML-S: MCTS over sampled abstract states. A step samples s′ from the even
//! mixture of the two models' predictions and earns 1 when s′ lies in the
//! symmetric difference of their supports.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{argmax_by, capability_names, uct_score, QueryPolicy, SearchConfig, Synthesis};
use crate::abstraction::AbstractState;
use crate::capability_model::CapabilityModel;
use crate::scalar::Probability;

struct Prediction {
    pess: Vec<(AbstractState, f64)>,
    opt: Vec<(AbstractState, f64)>,
}

impl Prediction {
    fn new<P: Probability>(s: &AbstractState, c: &str, pess: &CapabilityModel<P>, opt: &CapabilityModel<P>) -> Self {
        let conv = |m: BTreeMap<AbstractState, P>| m.into_iter().map(|(k, v)| (k, v.as_f64())).collect();
        Prediction {
            pess: conv(pess.predict(s, c)),
            opt: conv(opt.predict(s, c)),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> (AbstractState, f64) {
        let side = if rng.gen_bool(0.5) { &self.pess } else { &self.opt };
        let mut u = rng.gen::<f64>();
        let mut pick = &side[side.len() - 1].0;
        for (s, p) in side {
            if u < *p {
                pick = s;
                break;
            }
            u -= p;
        }
        let in_p = self.pess.iter().any(|(s, _)| s == pick);
        let in_o = self.opt.iter().any(|(s, _)| s == pick);
        (pick.clone(), if in_p != in_o { 1.0 } else { 0.0 })
    }
}

struct EdgeStats {
    cap: usize,
    n: u64,
    q: f64,
    prediction: Option<Prediction>,
    children: BTreeMap<AbstractState, usize>,
}

struct Node {
    state: AbstractState,
    depth: usize,
    n: u64,
    v: f64,
    edges: Vec<EdgeStats>,
}

struct Search<'a, P> {
    pess: &'a CapabilityModel<P>,
    opt: &'a CapabilityModel<P>,
    caps: Vec<String>,
    cfg: &'a SearchConfig,
    nodes: Vec<Node>,
    rng: ChaCha8Rng,
}

impl<'a, P: Probability> Search<'a, P> {
    /// C_s: capabilities with a firing rule at `s` under either model.
    fn applicable(&self, s: &AbstractState) -> Vec<usize> {
        (0..self.caps.len())
            .filter(|&i| {
                let c = &self.caps[i];
                self.pess.get(c).is_some_and(|k| k.fires(s)) || self.opt.get(c).is_some_and(|k| k.fires(s))
            })
            .collect()
    }

    fn make_node(&self, state: AbstractState, depth: usize) -> Node {
        let edges = if depth < self.cfg.depth {
            self.applicable(&state)
                .into_iter()
                .map(|cap| EdgeStats {
                    cap,
                    n: 0,
                    q: 0.0,
                    prediction: None,
                    children: BTreeMap::new(),
                })
                .collect()
        } else {
            Vec::new()
        };
        Node {
            state,
            depth,
            n: 0,
            v: 0.0,
            edges,
        }
    }

    fn rollout(&mut self, state: &AbstractState, depth: usize) -> f64 {
        let runs = self.cfg.rollouts_sampled.max(1);
        let mut total = 0.0;
        for _ in 0..runs {
            let mut s = state.clone();
            let mut ret = 0.0;
            for _ in depth..self.cfg.depth {
                let app = self.applicable(&s);
                if app.is_empty() {
                    break;
                }
                let c = app[self.rng.gen_range(0..app.len())];
                let pred = Prediction::new(&s, &self.caps[c], self.pess, self.opt);
                let (next, r) = pred.sample(&mut self.rng);
                ret += r;
                s = next;
            }
            total += ret;
        }
        total / runs as f64
    }

    fn iterate(&mut self) {
        let mut path: Vec<(usize, usize, f64, usize)> = Vec::new();
        let mut node = 0;
        loop {
            let nd = &self.nodes[node];
            if nd.edges.is_empty() {
                break;
            }
            let parent_n = nd.n as f64;
            let e = argmax_by(
                nd.edges
                    .iter()
                    .enumerate()
                    .map(|(i, e)| (i, uct_score(e.q, parent_n, e.n as f64, self.cfg.kappa))),
            )
            .expect("nonempty edges");
            if self.nodes[node].edges[e].prediction.is_none() {
                let pred = Prediction::new(
                    &self.nodes[node].state,
                    &self.caps[self.nodes[node].edges[e].cap],
                    self.pess,
                    self.opt,
                );
                self.nodes[node].edges[e].prediction = Some(pred);
            }
            let (next, r) = self.nodes[node].edges[e]
                .prediction
                .as_ref()
                .expect("cached")
                .sample(&mut self.rng);
            if let Some(&child) = self.nodes[node].edges[e].children.get(&next) {
                path.push((node, e, r, child));
                node = child;
                continue;
            }
            let depth = self.nodes[node].depth + 1;
            let child = self.make_node(next.clone(), depth);
            let idx = self.nodes.len();
            self.nodes.push(child);
            self.nodes[node].edges[e].children.insert(next.clone(), idx);
            let v = if self.nodes[idx].edges.is_empty() { 0.0 } else { self.rollout(&next, depth) };
            self.nodes[idx].v = v;
            path.push((node, e, r, idx));
            break;
        }
        for &(p, e, r, child) in path.iter().rev() {
            let target = r + self.nodes[child].v;
            let edge = &mut self.nodes[p].edges[e];
            edge.n += 1;
            edge.q += (target - edge.q) / edge.n as f64;
            let nd = &mut self.nodes[p];
            nd.n += 1;
            nd.v = nd
                .edges
                .iter()
                .filter(|e| e.n > 0)
                .map(|e| e.q)
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }

    fn extract(&self) -> QueryPolicy {
        let mut steps: Vec<BTreeMap<AbstractState, String>> = Vec::new();
        let mut level = vec![0usize];
        while !level.is_empty() {
            let mut step = BTreeMap::new();
            let mut next = Vec::new();
            for &i in &level {
                let nd = &self.nodes[i];
                let best = argmax_by(
                    nd.edges
                        .iter()
                        .enumerate()
                        .filter(|(_, e)| e.n > 0)
                        .map(|(k, e)| (k, e.q)),
                );
                let Some(b) = best else { continue };
                let edge = &nd.edges[b];
                if edge.q <= 0.0 || step.contains_key(&nd.state) {
                    continue;
                }
                step.insert(nd.state.clone(), self.caps[edge.cap].clone());
                next.extend(edge.children.values().copied());
            }
            if step.is_empty() {
                break;
            }
            steps.push(step);
            level = next;
        }
        QueryPolicy::Stepwise(steps)
    }

    /// Mean reward estimate of capability `c` at the root (test hook).
    #[cfg(test)]
    fn root_q(&self, c: &str) -> Option<f64> {
        self.nodes[0]
            .edges
            .iter()
            .find(|e| self.caps[e.cap] == c)
            .map(|e| e.q)
    }
}

fn run_search<'a, P: Probability>(
    s0: &AbstractState,
    pess: &'a CapabilityModel<P>,
    opt: &'a CapabilityModel<P>,
    cfg: &'a SearchConfig,
    seed: u64,
) -> Search<'a, P> {
    let mut search = Search {
        pess,
        opt,
        caps: capability_names(pess, opt),
        cfg,
        nodes: Vec::new(),
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let root = search.make_node(s0.clone(), 0);
    search.nodes.push(root);
    if !search.nodes[0].edges.is_empty() {
        for _ in 0..cfg.iterations {
            search.iterate();
        }
    }
    search
}

/// PCML-S synthesis from `s0`. Deterministic in `seed`.
pub fn synthesize_sampled<P: Probability>(
    s0: &AbstractState,
    pess: &CapabilityModel<P>,
    opt: &CapabilityModel<P>,
    cfg: &SearchConfig,
    seed: u64,
) -> Synthesis {
    if cfg.iterations == 0 || cfg.depth == 0 {
        return Synthesis::empty();
    }
    let search = run_search(s0, pess, opt, cfg, seed);
    let score = search.nodes[0].v.max(0.0);
    Synthesis {
        policy: if score > 0.0 { search.extract() } else { QueryPolicy::empty() },
        score,
        tree_size: search.nodes.len(),
    }
}
