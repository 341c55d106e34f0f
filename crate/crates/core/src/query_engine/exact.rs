//! PCML-E: MCTS over pairs of exact state distributions, rewarded by δ_TV.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::distribution::{tv_distance, StateDistribution};
use super::{argmax_by, capability_names, uct_score, QueryPolicy, SearchConfig, Synthesis};
use crate::abstraction::AbstractState;
use crate::capability_model::CapabilityModel;
use crate::scalar::Probability;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Edge {
    Open,
    Pruned,
    Child { node: usize, n: u64 },
}

struct Node<P> {
    psi: StateDistribution<P>,
    omega: StateDistribution<P>,
    key: u64,
    reward: f64,
    parent: Option<usize>,
    depth: usize,
    n: u64,
    v: f64,
    exhausted: bool,
    edges: Vec<Edge>,
}

fn support_key<P: Probability>(a: &StateDistribution<P>, b: &StateDistribution<P>) -> u64 {
    let mut h = DefaultHasher::new();
    for s in a.support() {
        s.hash(&mut h);
    }
    0xfeu8.hash(&mut h);
    for s in b.support() {
        s.hash(&mut h);
    }
    h.finish()
}

struct Search<'a, P> {
    pess: &'a CapabilityModel<P>,
    opt: &'a CapabilityModel<P>,
    caps: Vec<String>,
    cfg: &'a SearchConfig,
    nodes: Vec<Node<P>>,
    rng: ChaCha8Rng,
}

impl<'a, P: Probability> Search<'a, P> {
    fn make_node(
        &self,
        psi: StateDistribution<P>,
        omega: StateDistribution<P>,
        parent: Option<usize>,
        depth: usize,
    ) -> Node<P> {
        Node {
            key: support_key(&psi, &omega),
            reward: tv_distance(&psi, &omega).as_f64(),
            psi,
            omega,
            parent,
            depth,
            n: 0,
            v: 0.0,
            exhausted: depth >= self.cfg.depth,
            edges: vec![Edge::Open; self.caps.len()],
        }
    }

    /// True when the support pair of (psi, omega) equals that of `from` or any of its ancestors.
    fn duplicates_path(&self, key: u64, psi: &StateDistribution<P>, omega: &StateDistribution<P>, from: usize) -> bool {
        let mut cur = Some(from);
        while let Some(i) = cur {
            let n = &self.nodes[i];
            if n.key == key && n.psi.same_support(psi) && n.omega.same_support(omega) {
                return true;
            }
            cur = n.parent;
        }
        false
    }

    /// Capabilities with a firing rule on either support under the matching model.
    fn applicable(&self, psi: &StateDistribution<P>, omega: &StateDistribution<P>) -> Vec<usize> {
        (0..self.caps.len())
            .filter(|&i| {
                let c = &self.caps[i];
                let fires = |m: &CapabilityModel<P>, d: &StateDistribution<P>| {
                    m.get(c).is_some_and(|cap| d.support().any(|s| cap.fires(s)))
                };
                fires(self.pess, psi) || fires(self.opt, omega)
            })
            .collect()
    }

    /// Best return over random rollouts from `node`, stopping at the depth bound,
    /// at pairs with no applicable capability, or on revisiting a support pair.
    fn rollout(&mut self, node: usize) -> f64 {
        let mut path_keys: Vec<u64> = Vec::new();
        let mut cur = Some(node);
        while let Some(i) = cur {
            path_keys.push(self.nodes[i].key);
            cur = self.nodes[i].parent;
        }
        let base = path_keys.len();
        let mut best = 0.0f64;
        for _ in 0..self.cfg.rollouts_exact.max(1) {
            path_keys.truncate(base);
            let mut psi = self.nodes[node].psi.clone();
            let mut omega = self.nodes[node].omega.clone();
            let mut ret = 0.0;
            for _ in self.nodes[node].depth..self.cfg.depth {
                let app = self.applicable(&psi, &omega);
                let Some(&c) = app.choose(&mut self.rng) else {
                    break;
                };
                let np = psi.push(self.pess, &self.caps[c]);
                let no = omega.push(self.opt, &self.caps[c]);
                let key = support_key(&np, &no);
                if path_keys.contains(&key) {
                    break;
                }
                path_keys.push(key);
                ret += tv_distance(&np, &no).as_f64();
                psi = np;
                omega = no;
            }
            best = best.max(ret);
        }
        best
    }

    fn expand(&mut self, node: usize) -> Vec<(usize, usize)> {
        let mut open: Vec<usize> = (0..self.caps.len())
            .filter(|&c| self.nodes[node].edges[c] == Edge::Open)
            .collect();
        open.shuffle(&mut self.rng);
        let mut created = Vec::new();
        for c in open {
            if created.len() >= self.cfg.expand_per_visit {
                break;
            }
            let psi = self.nodes[node].psi.push(self.pess, &self.caps[c]);
            let omega = self.nodes[node].omega.push(self.opt, &self.caps[c]);
            let key = support_key(&psi, &omega);
            if self.duplicates_path(key, &psi, &omega, node) {
                self.nodes[node].edges[c] = Edge::Pruned;
                continue;
            }
            let depth = self.nodes[node].depth + 1;
            let child = self.make_node(psi, omega, Some(node), depth);
            let idx = self.nodes.len();
            self.nodes.push(child);
            self.nodes[idx].v = if self.nodes[idx].exhausted { 0.0 } else { self.rollout(idx) };
            self.nodes[node].edges[c] = Edge::Child { node: idx, n: 0 };
            created.push((c, idx));
        }
        created
    }

    fn q(&self, child: usize) -> f64 {
        self.nodes[child].reward + self.nodes[child].v
    }

    fn refresh(&mut self, node: usize) {
        let mut v = 0.0f64;
        let mut open = false;
        let mut all_done = true;
        for e in &self.nodes[node].edges {
            match *e {
                Edge::Open => open = true,
                Edge::Pruned => {}
                Edge::Child { node: c, .. } => {
                    v = v.max(self.q(c));
                    all_done &= self.nodes[c].exhausted;
                }
            }
        }
        let has_children = self.nodes[node].edges.iter().any(|e| matches!(e, Edge::Child { .. }));
        if has_children {
            self.nodes[node].v = v;
        }
        if self.nodes[node].depth >= self.cfg.depth || (!open && all_done) {
            self.nodes[node].exhausted = true;
        }
    }

    fn select(&self, node: usize) -> Option<(usize, usize)> {
        let n = &self.nodes[node];
        let pick = argmax_by(n.edges.iter().enumerate().filter_map(|(c, e)| match *e {
            Edge::Child { node: ch, n: ne } if !self.nodes[ch].exhausted => {
                Some((c, uct_score(self.q(ch), n.n as f64, ne as f64, self.cfg.kappa)))
            }
            _ => None,
        }))?;
        match n.edges[pick] {
            Edge::Child { node: ch, .. } => Some((pick, ch)),
            _ => None,
        }
    }

    fn iterate(&mut self) {
        let mut path: Vec<(usize, usize)> = Vec::new();
        let mut node = 0;
        let visits;
        loop {
            if self.nodes[node].exhausted {
                visits = 0;
                break;
            }
            if self.nodes[node].edges.contains(&Edge::Open) {
                let created = self.expand(node);
                for &(c, _) in &created {
                    if let Edge::Child { n, .. } = &mut self.nodes[node].edges[c] {
                        *n += 1;
                    }
                }
                visits = created.len() as u64;
                self.nodes[node].n += visits;
                self.refresh(node);
                break;
            }
            match self.select(node) {
                Some((c, child)) => {
                    path.push((node, c));
                    node = child;
                }
                None => {
                    self.refresh(node);
                    visits = 0;
                    break;
                }
            }
        }
        for &(p, c) in path.iter().rev() {
            if let Edge::Child { n, .. } = &mut self.nodes[p].edges[c] {
                *n += visits;
            }
            self.nodes[p].n += visits;
            self.refresh(p);
        }
    }

    fn extract(&self) -> QueryPolicy {
        let mut steps = Vec::new();
        let mut node = 0;
        loop {
            let n = &self.nodes[node];
            let best = argmax_by(n.edges.iter().enumerate().filter_map(|(c, e)| match *e {
                Edge::Child { node: ch, .. } => Some((c, self.q(ch))),
                _ => None,
            }));
            let Some(c) = best else { break };
            let Edge::Child { node: ch, .. } = n.edges[c] else { break };
            if self.q(ch) <= 0.0 {
                break;
            }
            let step: BTreeMap<AbstractState, String> = n
                .psi
                .support()
                .chain(n.omega.support())
                .map(|s| (s.clone(), self.caps[c].clone()))
                .collect();
            steps.push(step);
            node = ch;
        }
        QueryPolicy::Stepwise(steps)
    }
}

/// PCML-E synthesis from `s0`. Deterministic in `seed`.
pub fn synthesize_exact<P: Probability>(
    s0: &AbstractState,
    pess: &CapabilityModel<P>,
    opt: &CapabilityModel<P>,
    cfg: &SearchConfig,
    seed: u64,
) -> Synthesis {
    let caps = capability_names(pess, opt);
    if cfg.iterations == 0 || caps.is_empty() || cfg.depth == 0 {
        return Synthesis::empty();
    }
    let mut search = Search {
        pess,
        opt,
        caps,
        cfg,
        nodes: Vec::new(),
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let root = search.make_node(
        StateDistribution::point(s0.clone()),
        StateDistribution::point(s0.clone()),
        None,
        0,
    );
    search.nodes.push(root);
    for _ in 0..cfg.iterations {
        if search.nodes[0].exhausted {
            break;
        }
        search.iterate();
    }
    let score = search.nodes[0].v;
    Synthesis {
        policy: if score > 0.0 { search.extract() } else { QueryPolicy::empty() },
        score,
        tree_size: search.nodes.len(),
    }
}

/// Exhaustive search of the same distinguishing MDP: best cumulative δ_TV over
/// all capability sequences up to `depth`, cutting sequences that revisit a
/// support pair on their own path. Exponential; for small test instances only.
pub fn exhaustive_best_score<P: Probability>(
    s0: &AbstractState,
    pess: &CapabilityModel<P>,
    opt: &CapabilityModel<P>,
    depth: usize,
) -> f64 {
    fn go<P: Probability>(
        psi: &StateDistribution<P>,
        omega: &StateDistribution<P>,
        pess: &CapabilityModel<P>,
        opt: &CapabilityModel<P>,
        caps: &[String],
        left: usize,
        path: &mut Vec<(StateDistribution<P>, StateDistribution<P>)>,
    ) -> f64 {
        if left == 0 {
            return 0.0;
        }
        let mut best = 0.0f64;
        for c in caps {
            let np = psi.push(pess, c);
            let no = omega.push(opt, c);
            if path.iter().any(|(a, b)| a.same_support(&np) && b.same_support(&no)) {
                continue;
            }
            let r = tv_distance(&np, &no).as_f64();
            path.push((np.clone(), no.clone()));
            best = best.max(r + go(&np, &no, pess, opt, caps, left - 1, path));
            path.pop();
        }
        best
    }
    let caps = capability_names(pess, opt);
    let root = StateDistribution::point(s0.clone());
    let mut path = vec![(root.clone(), root.clone())];
    go(&root, &root, pess, opt, &caps, depth, &mut path)
}
