//! Scale-free graphs, edge betweenness and shortest-path usage.

use std::collections::{HashSet, VecDeque};
use std::io::{BufRead, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::stats::{fit_power_law, PowerLawFit};

/// Simple undirected graph on nodes 0..n.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    /// Edges as (u, v) with u < v; the position is the edge id.
    edges: Vec<(u32, u32)>,
    /// Neighbour and connecting edge id per node.
    #[serde(skip)]
    adj: Vec<Vec<(u32, u32)>>,
}

impl Graph {
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n > u32::MAX as usize {
            return Err(Error::Graph(format!("{n} nodes exceed the supported size")));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut list = Vec::with_capacity(edges.len());
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Graph(format!("edge ({a}, {b}) names a node outside 0..{n}")));
            }
            if a == b {
                return Err(Error::Graph(format!("self-loop at node {a}")));
            }
            let (u, v) = (a.min(b) as u32, a.max(b) as u32);
            if !seen.insert((u, v)) {
                return Err(Error::Graph(format!("duplicate edge ({u}, {v})")));
            }
            let id = list.len() as u32;
            list.push((u, v));
            adj[u as usize].push((v, id));
            adj[v as usize].push((u, id));
        }
        Ok(Graph { n, edges: list, adj })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn edge_id(&self, u: usize, v: usize) -> Option<usize> {
        let (a, b) = (u.min(v) as u32, u.max(v) as u32);
        self.adj
            .get(a as usize)?
            .iter()
            .find(|(w, _)| *w == b)
            .map(|(_, id)| *id as usize)
    }

    /// Hop distances from `source`, `u32::MAX` where unreachable.
    pub fn bfs(&self, source: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.n];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source as u32);
        while let Some(u) = queue.pop_front() {
            let du = dist[u as usize];
            for &(v, _) in &self.adj[u as usize] {
                if dist[v as usize] == u32::MAX {
                    dist[v as usize] = du + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.n == 0 || self.bfs(0).iter().all(|&d| d != u32::MAX)
    }

    /// Subgraph induced by the largest connected component, nodes relabelled
    /// in increasing order of their old ids.
    pub fn largest_component(&self) -> Graph {
        let mut label = vec![u32::MAX; self.n];
        let mut best: Vec<u32> = Vec::new();
        for s in 0..self.n {
            if label[s] != u32::MAX {
                continue;
            }
            let dist = self.bfs(s);
            let members: Vec<u32> = (0..self.n as u32).filter(|&v| dist[v as usize] != u32::MAX).collect();
            for &v in &members {
                label[v as usize] = s as u32;
            }
            if members.len() > best.len() {
                best = members;
            }
        }
        let mut new_id = vec![u32::MAX; self.n];
        for (i, &v) in best.iter().enumerate() {
            new_id[v as usize] = i as u32;
        }
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .filter(|(u, v)| new_id[*u as usize] != u32::MAX && new_id[*v as usize] != u32::MAX)
            .map(|(u, v)| (new_id[*u as usize] as usize, new_id[*v as usize] as usize))
            .collect();
        Graph::from_edges(best.len(), &edges).expect("subgraph of a simple graph is simple")
    }

    /// Reads whitespace-separated "u v" lines; blank lines and lines starting
    /// with '#' are skipped. The node count is one past the largest id.
    pub fn read_edge_list<R: BufRead>(reader: R) -> Result<Graph> {
        let mut edges = Vec::new();
        let mut n = 0usize;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Graph(format!("read failed: {e}")))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let mut next = || -> Result<usize> {
                parts
                    .next()
                    .ok_or_else(|| Error::Graph(format!("line {}: expected two node ids", lineno + 1)))?
                    .parse::<usize>()
                    .map_err(|e| Error::Graph(format!("line {}: {e}", lineno + 1)))
            };
            let (u, v) = (next()?, next()?);
            n = n.max(u + 1).max(v + 1);
            edges.push((u, v));
        }
        Graph::from_edges(n, &edges)
    }

    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (u, v) in &self.edges {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }
}

/// Preferential-attachment growth: a complete graph on m + 1 nodes, then
/// each new node links to m distinct existing nodes chosen with probability
/// proportional to their degree.
pub fn generate_sf_graph(n: usize, m: usize, seed: u64) -> Result<Graph> {
    if m == 0 || n <= m {
        return Err(Error::param("n", format!("need n > m ≥ 1, got n = {n}, m = {m}")));
    }
    let mut rng = StreamKey::new(seed).stream(0);
    let mut edges = Vec::with_capacity(m * (m + 1) / 2 + (n - m - 1) * m);
    // Every edge end, so a uniform pick is a degree-proportional pick.
    let mut ends: Vec<usize> = Vec::with_capacity(2 * edges.capacity());
    for u in 0..=m {
        for v in (u + 1)..=m {
            edges.push((u, v));
            ends.push(u);
            ends.push(v);
        }
    }
    let mut targets: Vec<usize> = Vec::with_capacity(m);
    for new in (m + 1)..n {
        targets.clear();
        while targets.len() < m {
            let t = ends[rng.random_range(0..ends.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            edges.push((t, new));
            ends.push(t);
            ends.push(new);
        }
    }
    Graph::from_edges(n, &edges)
}

const SOURCE_CHUNK: usize = 64;

/// Brandes accumulation from one source into per-edge credit.
fn accumulate_from(g: &Graph, s: usize, credit: &mut [f64], scratch: &mut Scratch) {
    let Scratch {
        dist,
        sigma,
        delta,
        order,
    } = scratch;
    dist.iter_mut().for_each(|d| *d = u32::MAX);
    sigma.iter_mut().for_each(|x| *x = 0.0);
    delta.iter_mut().for_each(|x| *x = 0.0);
    order.clear();
    dist[s] = 0;
    sigma[s] = 1.0;
    let mut head = 0;
    order.push(s as u32);
    while head < order.len() {
        let u = order[head] as usize;
        head += 1;
        for &(v, _) in &g.adj[u] {
            let v = v as usize;
            if dist[v] == u32::MAX {
                dist[v] = dist[u] + 1;
                order.push(v as u32);
            }
            if dist[v] == dist[u] + 1 {
                sigma[v] += sigma[u];
            }
        }
    }
    for &w in order.iter().rev() {
        let w = w as usize;
        for &(v, e) in &g.adj[w] {
            let v = v as usize;
            if dist[v] != u32::MAX && dist[v] + 1 == dist[w] {
                let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                credit[e as usize] += c;
                delta[v] += c;
            }
        }
    }
}

struct Scratch {
    dist: Vec<u32>,
    sigma: Vec<f64>,
    delta: Vec<f64>,
    order: Vec<u32>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            dist: vec![0; n],
            sigma: vec![0.0; n],
            delta: vec![0.0; n],
            order: Vec::with_capacity(n),
        }
    }
}

/// Exact edge betweenness: every unordered pair of distinct nodes spreads
/// weight 1 evenly over its shortest paths, and each edge collects the
/// weight of the paths through it. Indexed by edge id.
pub fn edge_betweenness(g: &Graph) -> Result<Vec<f64>> {
    if !g.is_connected() {
        return Err(Error::Graph("betweenness needs a connected graph".into()));
    }
    let n = g.n;
    let m = g.edges.len();
    let chunks: Vec<Vec<f64>> = (0..n.div_ceil(SOURCE_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut credit = vec![0.0; m];
            let mut scratch = Scratch::new(n);
            for s in (c * SOURCE_CHUNK)..((c + 1) * SOURCE_CHUNK).min(n) {
                accumulate_from(g, s, &mut credit, &mut scratch);
            }
            credit
        })
        .collect();
    let mut total = vec![0.0; m];
    for chunk in &chunks {
        for (t, c) in total.iter_mut().zip(chunk) {
            *t += c;
        }
    }
    // Each unordered pair was counted from both ends.
    total.iter_mut().for_each(|b| *b *= 0.5);
    Ok(total)
}

/// ℓ_i = B_i/B̄ for every edge of a connected graph.
pub fn relative_loads(g: &Graph) -> Result<Vec<f64>> {
    Ok(loads_from_betweenness(&edge_betweenness(g)?))
}

/// ℓ_i = B_i/B̄ from precomputed betweenness.
pub fn loads_from_betweenness(betweenness: &[f64]) -> Vec<f64> {
    let mean = betweenness.iter().sum::<f64>() / betweenness.len() as f64;
    betweenness.iter().map(|b| b / mean).collect()
}

/// Writes `edge,u,v,betweenness,load` rows.
pub fn write_load_csv<W: Write>(g: &Graph, betweenness: &[f64], mut out: W) -> std::io::Result<()> {
    let loads = loads_from_betweenness(betweenness);
    writeln!(out, "edge,u,v,betweenness,load")?;
    for (i, ((u, v), (b, l))) in g.edges.iter().zip(betweenness.iter().zip(&loads)).enumerate() {
        writeln!(out, "{i},{u},{v},{b},{l}")?;
    }
    Ok(())
}

/// Tail exponent 2 + δ of the load density.
pub fn fit_load_exponent(loads: &[f64]) -> Result<PowerLawFit> {
    if loads.len() < 1000 {
        return Err(Error::InsufficientData(format!(
            "load fit needs ≥ 1000 values, got {}",
            loads.len()
        )));
    }
    fit_power_law(loads, 50)
}

/// Fraction of unordered node pairs with at least one shortest path through
/// each of `edges` (given by id).
pub fn affected_paths_fractions(g: &Graph, edges: &[usize]) -> Result<Vec<f64>> {
    if let Some(&bad) = edges.iter().find(|&&e| e >= g.edge_count()) {
        return Err(Error::Graph(format!("edge id {bad} is not in the graph")));
    }
    if !g.is_connected() {
        return Err(Error::Graph("path usage needs a connected graph".into()));
    }
    let n = g.n;
    let ends: Vec<(usize, usize)> = edges
        .iter()
        .map(|&e| (g.edges[e].0 as usize, g.edges[e].1 as usize))
        .collect();
    let from_ends: Vec<(Vec<u32>, Vec<u32>)> = ends.iter().map(|&(u, v)| (g.bfs(u), g.bfs(v))).collect();
    let counts: Vec<Vec<u64>> = (0..n.div_ceil(SOURCE_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut local = vec![0u64; edges.len()];
            for s in (c * SOURCE_CHUNK)..((c + 1) * SOURCE_CHUNK).min(n) {
                let ds = g.bfs(s);
                for (k, &(u, v)) in ends.iter().enumerate() {
                    let (du, dv) = (&from_ends[k].0, &from_ends[k].1);
                    // Orient the edge away from s; equal distances mean no
                    // shortest path from s uses it.
                    let far = if ds[u] + 1 == ds[v] {
                        dv
                    } else if ds[v] + 1 == ds[u] {
                        du
                    } else {
                        continue;
                    };
                    let near_dist = ds[u].min(ds[v]);
                    local[k] += (s + 1..n).filter(|&t| near_dist + 1 + far[t] == ds[t]).count() as u64;
                }
            }
            local
        })
        .collect();
    let pairs = (n * (n - 1) / 2) as f64;
    let mut totals = vec![0u64; edges.len()];
    for c in &counts {
        for (t, x) in totals.iter_mut().zip(c) {
            *t += x;
        }
    }
    Ok(totals.iter().map(|&t| t as f64 / pairs).collect())
}

pub fn affected_paths_fraction(g: &Graph, edge: usize) -> Result<f64> {
    Ok(affected_paths_fractions(g, &[edge])?[0])
}
