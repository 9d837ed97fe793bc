//! Modularity of a partition and its approximate maximization with the
//! Louvain method (local moving + aggregation).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::netbuild::MemberGraph;

/// Smallest modularity gain for which a node leaves its community.
pub const MIN_MOVE_GAIN: f64 = 1e-12;
/// Node evaluations per level are capped at this multiple of the node count.
const MAX_SWEEPS: usize = 1_000;

/// Community label per graph node, dense and numbered by first appearance.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<usize>,
}

impl Partition {
    /// Relabels arbitrary labels densely in order of first appearance.
    pub fn new(labels: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Self { labels }
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            labels: (0..n).collect(),
        }
    }

    pub fn single_community(n: usize) -> Self {
        Self { labels: vec![0; n] }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, node: usize) -> usize {
        self.labels[node]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_communities(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModularityReport {
    pub q: f64,
    pub n_communities: usize,
    pub weighted: bool,
    pub seed: u64,
}

/// Newman-Girvan modularity. In unweighted mode every edge counts 1 and node
/// degrees are used; in weighted mode edge weights and node strengths.
pub fn modularity(g: &MemberGraph, p: &Partition, weighted: bool) -> Result<f64> {
    if p.len() != g.n_nodes() {
        return Err(Error::PartitionMismatch {
            expected: g.n_nodes(),
            got: p.len(),
        });
    }
    let weight = |w: f64| if weighted { w } else { 1.0 };
    let total: f64 = g.edges().iter().map(|&(_, _, w)| weight(w)).sum();
    if g.n_edges() == 0 || total <= 0.0 {
        return Err(Error::EdgelessGraph);
    }
    let k = p.n_communities();
    let mut internal = vec![0.0; k];
    let mut cut = vec![0.0; k];
    for &(u, v, w) in g.edges() {
        let (cu, cv) = (p.label(u as usize), p.label(v as usize));
        let w = weight(w);
        if cu == cv {
            internal[cu] += w;
        } else {
            cut[cu] += w;
            cut[cv] += w;
        }
    }
    // per community: L_c / W - (K_c / 2W)^2 with K_c = 2 L_c + cut_c
    let q = internal
        .iter()
        .zip(&cut)
        .map(|(&l, &c)| {
            let share = (2.0 * l + c) / (2.0 * total);
            l / total - share * share
        })
        .sum();
    Ok(q)
}

/// Working graph of one Louvain level: symmetric adjacency without
/// self-loops, plus a self-loop weight per node.
struct Level {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
    self_loops: Vec<f64>,
    strength: Vec<f64>,
}

fn level_strength(g: &MemberGraph, i: usize, weighted: bool) -> f64 {
    if weighted {
        g.strength(i)
    } else {
        g.degree(i) as f64
    }
}

impl Level {
    fn from_graph(g: &MemberGraph, weighted: bool) -> Self {
        let n = g.n_nodes();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::with_capacity(2 * g.n_edges());
        let mut weights = Vec::with_capacity(2 * g.n_edges());
        let mut strength = Vec::with_capacity(n);
        offsets.push(0);
        for i in 0..n {
            let mut k = 0.0;
            for &(j, w) in g.neighbors(i) {
                let w = if weighted { w } else { 1.0 };
                targets.push(j);
                weights.push(w);
                k += w;
            }
            strength.push(k);
            offsets.push(targets.len());
        }
        Self {
            offsets,
            targets,
            weights,
            self_loops: vec![0.0; n],
            strength,
        }
    }

    fn from_edges(n: usize, edges: &[(u32, u32, f64)], self_loops: Vec<f64>) -> Self {
        let mut offsets = vec![0usize; n + 1];
        for &(u, v, _) in edges {
            offsets[u as usize + 1] += 1;
            offsets[v as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0u32; 2 * edges.len()];
        let mut weights = vec![0.0; 2 * edges.len()];
        let mut strength: Vec<f64> = self_loops.iter().map(|s| 2.0 * s).collect();
        for &(u, v, w) in edges {
            let (u, v) = (u as usize, v as usize);
            targets[fill[u]] = v as u32;
            weights[fill[u]] = w;
            fill[u] += 1;
            targets[fill[v]] = u as u32;
            weights[fill[v]] = w;
            fill[v] += 1;
            strength[u] += w;
            strength[v] += w;
        }
        Self {
            offsets,
            targets,
            weights,
            self_loops,
            strength,
        }
    }

    fn n(&self) -> usize {
        self.self_loops.len()
    }

    fn neighbors(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.targets[r.clone()], &self.weights[r])
    }

    /// Greedy local moving from singletons. Nodes are visited from a queue
    /// seeded in shuffled order; when a node moves, its neighbors outside the
    /// new community are queued again. A node moves only for a strictly
    /// positive gain. Returns the community of every node and whether any
    /// node moved.
    fn local_moving(&self, two_w: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
        let n = self.n();
        let mut comm: Vec<u32> = (0..n as u32).collect();
        let mut tot = self.strength.clone();
        // ring buffer; a node is queued at most once at a time
        let mut queue: Vec<u32> = (0..n as u32).collect();
        queue.shuffle(rng);
        let (mut head, mut queue_len) = (0usize, n);
        let mut queued = vec![true; n];

        // edge weights are positive, so a zero link marks an unseen community
        let mut link = vec![0.0f64; n];
        let max_degree = (0..n).map(|i| self.offsets[i + 1] - self.offsets[i]).max().unwrap_or(0);
        let mut touched = vec![0u32; max_degree + 1];
        let mut any_moved = false;
        let mut budget = MAX_SWEEPS.saturating_mul(n.max(1));

        while queue_len > 0 && budget > 0 {
            let i = queue[head] as usize;
            head = if head + 1 == n { 0 } else { head + 1 };
            queue_len -= 1;
            queued[i] = false;
            budget -= 1;

            let ci = comm[i];
            let ki = self.strength[i];
            let (nbrs, ws) = self.neighbors(i);
            let mut n_touched = 0;
            for (&j, &wij) in nbrs.iter().zip(ws) {
                // SAFETY: targets are node ids < n, labels are node ids < n,
                // and a node has at most `max_degree` distinct neighbor labels.
                unsafe {
                    let cj = *comm.get_unchecked(j as usize);
                    let l = link.get_unchecked_mut(cj as usize);
                    *touched.get_unchecked_mut(n_touched) = cj;
                    n_touched += (*l == 0.0) as usize;
                    *l += wij;
                }
            }
            tot[ci as usize] -= ki;

            let scale = ki / two_w;
            let stay = link[ci as usize] - tot[ci as usize] * scale;
            let (mut best, mut best_gain) = (ci, stay);
            for &c in &touched[..n_touched] {
                let g = link[c as usize] - tot[c as usize] * scale;
                if g > best_gain || (g == best_gain && best != ci && c < best) {
                    best = c;
                    best_gain = g;
                }
            }
            if best != ci && 2.0 * (best_gain - stay) / two_w <= MIN_MOVE_GAIN {
                best = ci;
            }
            tot[best as usize] += ki;
            for &c in &touched[..n_touched] {
                link[c as usize] = 0.0;
            }
            if best != ci {
                comm[i] = best;
                any_moved = true;
                for &j in nbrs {
                    let j = j as usize;
                    let push = !queued[j] & (comm[j] != best);
                    let mut tail = head + queue_len;
                    if tail >= n {
                        tail -= n;
                    }
                    queue[tail] = j as u32;
                    queue_len += push as usize;
                    queued[j] |= push;
                }
            }
        }
        (comm.into_iter().map(|c| c as usize).collect(), any_moved)
    }

    /// Collapses communities into nodes.
    fn aggregate(&self, comm: &[usize], n_comm: usize) -> Level {
        let mut self_loops = vec![0.0; n_comm];
        let mut start = vec![0usize; n_comm + 1];
        for &c in comm {
            start[c + 1] += 1;
        }
        for c in 0..n_comm {
            start[c + 1] += start[c];
        }
        let mut fill = start.clone();
        let mut members = vec![0usize; comm.len()];
        for (i, &c) in comm.iter().enumerate() {
            members[fill[c]] = i;
            fill[c] += 1;
        }

        let mut acc = vec![0.0f64; n_comm];
        let mut touched: Vec<usize> = Vec::new();
        let mut edges: Vec<(u32, u32, f64)> = Vec::new();
        for c in 0..n_comm {
            for &i in &members[start[c]..start[c + 1]] {
                self_loops[c] += self.self_loops[i];
                let (nbrs, ws) = self.neighbors(i);
                for (&j, &w) in nbrs.iter().zip(ws) {
                    let cj = comm[j as usize];
                    if cj == c {
                        // each internal edge is seen from both ends
                        self_loops[c] += 0.5 * w;
                    } else if cj > c {
                        if acc[cj] == 0.0 {
                            touched.push(cj);
                        }
                        acc[cj] += w;
                    }
                }
            }
            touched.sort_unstable();
            for &cj in &touched {
                edges.push((c as u32, cj as u32, acc[cj]));
                acc[cj] = 0.0;
            }
            touched.clear();
        }
        Level::from_edges(n_comm, &edges, self_loops)
    }
}

/// Renumbers communities densely by first appearance; returns the count.
fn renumber(comm: &mut [usize]) -> usize {
    let mut map = vec![usize::MAX; comm.len()];
    let mut next = 0;
    for c in comm.iter_mut() {
        if map[*c] == usize::MAX {
            map[*c] = next;
            next += 1;
        }
        *c = map[*c];
    }
    next
}

/// Louvain community detection. Node visit order at every level is a
/// shuffle seeded by `seed`; ties between equally good communities go to the
/// lowest label. The result is never worse than the all-singletons or the
/// single-community partition.
pub fn louvain(g: &MemberGraph, seed: u64, weighted: bool) -> Result<(Partition, ModularityReport)> {
    let n = g.n_nodes();
    let two_w: f64 = 2.0 * g.edges().iter().map(|e| if weighted { e.2 } else { 1.0 }).sum::<f64>();
    if g.n_edges() == 0 || two_w <= 0.0 {
        return Err(Error::EdgelessGraph);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut membership: Vec<usize> = (0..n).collect();
    let mut level = Level::from_graph(g, weighted);
    loop {
        let (mut comm, moved) = level.local_moving(two_w, &mut rng);
        if !moved {
            break;
        }
        let n_comm = renumber(&mut comm);
        for m in membership.iter_mut() {
            *m = comm[*m];
        }
        if n_comm == level.n() {
            break;
        }
        level = level.aggregate(&comm, n_comm);
    }

    let mut best = Partition::new(&membership);
    let mut q = modularity(g, &best, weighted)?;
    // closed forms: singletons give -sum (k_i / 2W)^2, one community gives 0
    let q_singletons = -(0..n)
        .map(|i| (level_strength(g, i, weighted) / two_w).powi(2))
        .sum::<f64>();
    if q_singletons > q {
        best = Partition::singletons(n);
        q = modularity(g, &best, weighted)?;
    }
    if q < 0.0 {
        best = Partition::single_community(n);
        q = 0.0;
    }
    let report = ModularityReport {
        q,
        n_communities: best.n_communities(),
        weighted,
        seed,
    };
    Ok((best, report))
}
