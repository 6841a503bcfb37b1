//! DAG representation, random DAG generators, and graph surgery.
//!
//! The edge list (sorted parent sets per node) is the canonical storage; a
//! dense adjacency matrix is kept alongside for O(1) edge queries during
//! scoring. Both are immutable after construction.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Directed acyclic graph over nodes `0..d`. Node index is the node identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DagRepr", into = "DagRepr")]
pub struct Dag {
    d: usize,
    parents: Vec<Vec<usize>>,
    adj: Vec<bool>, // row-major, adj[i*d + j] == edge i -> j
}

#[derive(Serialize, Deserialize, Clone)]
struct DagRepr {
    d: usize,
    edges: Vec<(usize, usize)>,
}

impl From<Dag> for DagRepr {
    fn from(g: Dag) -> DagRepr {
        DagRepr {
            d: g.d,
            edges: g.edges(),
        }
    }
}

impl TryFrom<DagRepr> for Dag {
    type Error = Error;
    fn try_from(r: DagRepr) -> Result<Dag> {
        Dag::new(r.d, &r.edges)
    }
}

impl Dag {
    /// Validates indices, self-loops, duplicates, and acyclicity.
    pub fn new(d: usize, edges: &[(usize, usize)]) -> Result<Dag> {
        if d == 0 {
            return Err(Error::invalid("node count must be positive"));
        }
        let mut adj = vec![false; d * d];
        let mut parents = vec![Vec::new(); d];
        for &(i, j) in edges {
            if i >= d || j >= d {
                return Err(Error::invalid(format!("edge ({i}, {j}) out of range for d={d}")));
            }
            if i == j {
                return Err(Error::invalid(format!("self-loop at node {i}")));
            }
            if adj[i * d + j] {
                return Err(Error::invalid(format!("duplicate edge ({i}, {j})")));
            }
            adj[i * d + j] = true;
            parents[j].push(i);
        }
        for p in &mut parents {
            p.sort_unstable();
        }
        let g = Dag { d, parents, adj };
        g.kahn_order()
            .ok_or_else(|| Error::CorruptGraph("edge set contains a directed cycle".into()))?;
        Ok(g)
    }

    pub fn empty(d: usize) -> Result<Dag> {
        Dag::new(d, &[])
    }

    pub fn node_count(&self) -> usize {
        self.d
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn has_edge(&self, parent: usize, child: usize) -> bool {
        self.adj[parent * self.d + child]
    }

    /// All edges in (parent, child) lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for i in 0..self.d {
            for j in 0..self.d {
                if self.adj[i * self.d + j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Dense adjacency view, row-major: entry `i*d + j` is the edge i -> j.
    pub fn adjacency(&self) -> &[bool] {
        &self.adj
    }

    /// Copy of the graph with every incoming edge of `target` removed.
    pub fn mutilate(&self, target: usize) -> Result<Dag> {
        if target >= self.d {
            return Err(Error::invalid(format!(
                "mutilation target {target} out of range for d={}",
                self.d
            )));
        }
        let mut g = self.clone();
        for &p in &self.parents[target] {
            g.adj[p * self.d + target] = false;
        }
        g.parents[target].clear();
        Ok(g)
    }

    /// Kahn's algorithm, always picking the smallest ready index, so the
    /// result is stable: the empty graph yields the identity permutation.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        self.kahn_order()
            .ok_or_else(|| Error::CorruptGraph("cycle detected in topological sort".into()))
    }

    fn kahn_order(&self) -> Option<Vec<usize>> {
        let d = self.d;
        let mut indeg: Vec<usize> = (0..d).map(|j| self.parents[j].len()).collect();
        let mut placed = vec![false; d];
        let mut order = Vec::with_capacity(d);
        for _ in 0..d {
            let next = (0..d).find(|&j| !placed[j] && indeg[j] == 0)?;
            placed[next] = true;
            order.push(next);
            for j in 0..d {
                if self.adj[next * d + j] {
                    indeg[j] -= 1;
                }
            }
        }
        Some(order)
    }

    /// Edge-list text form: a `# dag d=<n>` header, then one
    /// `parent<TAB>child` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("# dag d={}\n", self.d);
        for (i, j) in self.edges() {
            s.push_str(&format!("{i}\t{j}\n"));
        }
        s
    }

    pub fn from_edge_list(text: &str) -> Result<Dag> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty edge-list document".into()))?;
        let d: usize = header
            .strip_prefix("# dag d=")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad header line {header:?}")))?;
        let mut edges = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split('\t');
            let parse = |tok: Option<&str>| -> Result<usize> {
                tok.and_then(|t| t.trim().parse().ok())
                    .ok_or_else(|| Error::Parse(format!("bad edge line {line:?}")))
            };
            let i = parse(it.next())?;
            let j = parse(it.next())?;
            edges.push((i, j));
        }
        Dag::new(d, &edges)
    }
}

/// Random-graph family for ground-truth generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphFamily {
    ErdosRenyi { expected_edges_per_vertex: f64 },
    ScaleFree { expected_edges_per_vertex: f64 },
}

impl GraphFamily {
    pub fn expected_edges_per_vertex(&self) -> f64 {
        match *self {
            GraphFamily::ErdosRenyi { expected_edges_per_vertex } => expected_edges_per_vertex,
            GraphFamily::ScaleFree { expected_edges_per_vertex } => expected_edges_per_vertex,
        }
    }
}

/// Draw a random DAG. Erdos-Renyi flips a coin for every ordered pair along a
/// random permutation; ScaleFree grows the graph by preferential attachment
/// over a random arrival order, each arriving node spending its out-edges on
/// already-present nodes (all edges point backwards in arrival order, so the
/// result is acyclic by construction).
pub fn generate_dag<R: Rng>(family: &GraphFamily, d: usize, rng: &mut R) -> Result<Dag> {
    if d < 2 {
        return Err(Error::invalid("random graphs need at least 2 nodes"));
    }
    let epv = family.expected_edges_per_vertex();
    if !(epv > 0.0) {
        return Err(Error::invalid("expected_edges_per_vertex must be positive"));
    }
    match family {
        GraphFamily::ErdosRenyi { .. } => {
            let n_pairs = d * (d - 1) / 2;
            let p = (epv * d as f64 / n_pairs as f64).min(1.0);
            erdos_renyi_with_p(d, p, rng)
        }
        GraphFamily::ScaleFree { .. } => scale_free(d, epv, rng),
    }
}

/// Core ER draw with an explicit inclusion probability.
pub(crate) fn erdos_renyi_with_p<R: Rng>(d: usize, p: f64, rng: &mut R) -> Result<Dag> {
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(rng);
    let mut edges = Vec::new();
    for a in 0..d {
        for b in a + 1..d {
            if rng.gen::<f64>() < p {
                edges.push((perm[a], perm[b]));
            }
        }
    }
    Dag::new(d, &edges)
}

fn scale_free<R: Rng>(d: usize, epv: f64, rng: &mut R) -> Result<Dag> {
    let mut arrival: Vec<usize> = (0..d).collect();
    arrival.shuffle(rng);
    let mut degree = vec![0usize; d];
    let mut edges = Vec::new();
    let whole = epv.floor() as usize;
    let frac = epv - epv.floor();
    for t in 1..d {
        let node = arrival[t];
        let mut m = whole + usize::from(frac > 0.0 && rng.gen::<f64>() < frac);
        m = m.min(t); // can't attach to more nodes than have arrived
        let mut chosen = vec![false; t];
        for _ in 0..m {
            // degree + 1 smoothing keeps isolated early nodes reachable
            let total: usize = (0..t)
                .filter(|&s| !chosen[s])
                .map(|s| degree[arrival[s]] + 1)
                .sum();
            let mut pick = rng.gen_range(0..total);
            let mut sel = usize::MAX;
            for s in 0..t {
                if chosen[s] {
                    continue;
                }
                let w = degree[arrival[s]] + 1;
                if pick < w {
                    sel = s;
                    break;
                }
                pick -= w;
            }
            chosen[sel] = true;
            let tgt = arrival[sel];
            edges.push((node, tgt));
            degree[node] += 1;
            degree[tgt] += 1;
        }
    }
    Dag::new(d, &edges)
}
