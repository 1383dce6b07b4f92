//! Communication graphs, per-round neighbour selection and mixing matrices.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::sparse::Matrix;

pub const MAX_GRAPH_ATTEMPTS: usize = 1000;

/// Undirected connected graph with closed neighbourhoods (`i` in `N_i`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyGraph {
    neighborhoods: Vec<Vec<usize>>,
}

impl TopologyGraph {
    /// Builds a graph from undirected 0-based edges. Self loops are ignored;
    /// the result must be connected.
    pub fn from_edges(m: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("m", "graph needs at least one node"));
        }
        let mut adj = vec![vec![false; m]; m];
        for &(i, j) in edges {
            if i >= m || j >= m {
                return Err(Error::invalid("edges", format!("edge ({i}, {j}) outside 0..{m}")));
            }
            adj[i][j] = true;
            adj[j][i] = true;
        }
        let g = Self::from_adjacency(&adj);
        if !g.is_connected() {
            return Err(Error::invalid("edges", "graph is not connected"));
        }
        Ok(g)
    }

    fn from_adjacency(adj: &[Vec<bool>]) -> Self {
        let m = adj.len();
        let neighborhoods = (0..m)
            .map(|i| (0..m).filter(|&j| j == i || adj[i][j]).collect())
            .collect();
        TopologyGraph { neighborhoods }
    }

    pub fn complete(m: usize) -> Self {
        TopologyGraph {
            neighborhoods: (0..m).map(|_| (0..m).collect()).collect(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.neighborhoods.len()
    }

    /// Closed neighbourhood `N_i`, ascending.
    pub fn neighborhood(&self, i: usize) -> &[usize] {
        &self.neighborhoods[i]
    }

    /// Number of neighbours excluding `i` itself.
    pub fn degree(&self, i: usize) -> usize {
        self.neighborhoods[i].len() - 1
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.neighborhoods[i].binary_search(&j).is_ok()
    }

    /// Undirected edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, nb) in self.neighborhoods.iter().enumerate() {
            out.extend(nb.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.num_nodes()).all(|i| {
            self.neighborhoods[i].contains(&i)
                && self.neighborhoods[i]
                    .iter()
                    .all(|&j| self.neighborhoods[j].binary_search(&i).is_ok())
        })
    }

    pub fn is_connected(&self) -> bool {
        let adj: Vec<Vec<usize>> = self.neighborhoods.clone();
        connected(self.num_nodes(), &adj)
    }

    /// One `i j` pair per line, 0-based, preceded by a `# nodes m` header.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# nodes {}\n", self.num_nodes());
        for (i, j) in self.edges() {
            writeln!(out, "{i} {j}").unwrap();
        }
        out
    }

    /// Parses the format written by [`TopologyGraph::to_edge_list`]. Without
    /// a header the node count is one past the largest index.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut declared = None;
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(m) = rest.trim().strip_prefix("nodes") {
                    declared = Some(m.trim().parse::<usize>().map_err(|e| Error::Parse {
                        path: "<edge list>".into(),
                        line: lineno + 1,
                        reason: e.to_string(),
                    })?);
                }
                continue;
            }
            let parsed: Vec<usize> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e: std::num::ParseIntError| Error::Parse {
                    path: "<edge list>".into(),
                    line: lineno + 1,
                    reason: e.to_string(),
                })?;
            if parsed.len() != 2 {
                return Err(Error::Parse {
                    path: "<edge list>".into(),
                    line: lineno + 1,
                    reason: format!("expected two node ids, found {}", parsed.len()),
                });
            }
            edges.push((parsed[0], parsed[1]));
        }
        let inferred = edges.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(1);
        Self::from_edges(declared.unwrap_or(inferred), &edges)
    }
}

fn connected(m: usize, adj: &[Vec<usize>]) -> bool {
    if m == 0 {
        return true;
    }
    let mut seen = vec![false; m];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count == m
}

/// Erdős–Rényi graph, resampled until connected.
pub fn generate_random_graph<R: Rng + ?Sized>(m: usize, edge_prob: f64, rng: &mut R) -> Result<TopologyGraph> {
    if m == 0 {
        return Err(Error::invalid("m", "graph needs at least one node"));
    }
    if !(edge_prob > 0.0 && edge_prob <= 1.0) {
        return Err(Error::invalid("edge_prob", format!("{edge_prob} not in (0, 1]")));
    }
    if m == 1 {
        return Ok(TopologyGraph::complete(1));
    }
    for _ in 0..MAX_GRAPH_ATTEMPTS {
        let mut adj = vec![vec![false; m]; m];
        for i in 0..m {
            for j in i + 1..m {
                if rng.random::<f64>() < edge_prob {
                    adj[i][j] = true;
                    adj[j][i] = true;
                }
            }
        }
        let g = TopologyGraph::from_adjacency(&adj);
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::Disconnected {
        attempts: MAX_GRAPH_ATTEMPTS,
        edge_prob,
    })
}

/// Per-node selected subsets `N_i^k`, each ascending and containing `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundSelection {
    sets: Vec<Vec<usize>>,
}

impl RoundSelection {
    pub fn new(sets: Vec<Vec<usize>>) -> Result<Self> {
        for (i, s) in sets.iter().enumerate() {
            if !s.contains(&i) {
                return Err(Error::invalid("selection", format!("N_{i}^k must contain {i}")));
            }
            if s.iter().any(|&j| j >= sets.len()) {
                return Err(Error::invalid("selection", format!("N_{i}^k has an out-of-range node")));
            }
        }
        let sets = sets
            .into_iter()
            .map(|mut s| {
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect();
        Ok(RoundSelection { sets })
    }

    /// Every node selects its whole neighbourhood.
    pub fn full(g: &TopologyGraph) -> Self {
        RoundSelection {
            sets: (0..g.num_nodes()).map(|i| g.neighborhood(i).to_vec()).collect(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.sets.len()
    }

    pub fn set(&self, i: usize) -> &[usize] {
        &self.sets[i]
    }

    /// `t_i = |N_i^k|`.
    pub fn size(&self, i: usize) -> usize {
        self.sets[i].len()
    }
}

/// `t_i = max(1, round(r |N_i|))` with `|N_i|` the closed neighbourhood size.
pub fn responder_count(g: &TopologyGraph, i: usize, rate: f64) -> usize {
    let full = g.neighborhood(i).len();
    ((rate * full as f64).round() as usize).clamp(1, full)
}

fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("r", format!("participation rate {rate} not in (0, 1]")))
    }
}

/// Uniformly samples `t_i - 1` neighbours of `i` and adds `i` itself.
pub fn select_for_node<R: Rng + ?Sized>(g: &TopologyGraph, i: usize, rate: f64, rng: &mut R) -> Vec<usize> {
    let t = responder_count(g, i, rate);
    let others: Vec<usize> = g.neighborhood(i).iter().copied().filter(|&j| j != i).collect();
    let mut set = vec![i];
    if t - 1 == others.len() {
        set.extend_from_slice(&others);
    } else if t > 1 {
        set.extend(sample(rng, others.len(), t - 1).into_iter().map(|k| others[k]));
    }
    set.sort_unstable();
    set
}

/// Random selection for all nodes from a single generator, in node order.
pub fn select_neighbors<R: Rng + ?Sized>(g: &TopologyGraph, rate: f64, rng: &mut R) -> Result<RoundSelection> {
    check_rate(rate)?;
    Ok(RoundSelection {
        sets: (0..g.num_nodes())
            .map(|i| select_for_node(g, i, rate, rng))
            .collect(),
    })
}

/// `{i}` plus the `t_i - 1` neighbours with the smallest latency (ties by
/// node id). `latencies[(i, j)]` is the delay of `j`'s reply to `i`.
pub fn responders_for_node(g: &TopologyGraph, i: usize, latencies: &Matrix, t: usize) -> Vec<usize> {
    let mut others: Vec<usize> = g.neighborhood(i).iter().copied().filter(|&j| j != i).collect();
    others.sort_by(|&a, &b| {
        latencies
            .get(i, a)
            .total_cmp(&latencies.get(i, b))
            .then(a.cmp(&b))
    });
    let mut set = vec![i];
    set.extend(others.into_iter().take(t.saturating_sub(1)));
    set.sort_unstable();
    set
}

pub fn select_responders(g: &TopologyGraph, latencies: &Matrix, t: &[usize]) -> Result<RoundSelection> {
    let m = g.num_nodes();
    if latencies.rows() != m || latencies.cols() != m || t.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: latencies.rows(),
        });
    }
    if latencies.data().iter().any(|&x| x < 0.0 || x.is_nan()) {
        return Err(Error::invalid("latencies", "latencies must be nonnegative"));
    }
    Ok(RoundSelection {
        sets: (0..m).map(|i| responders_for_node(g, i, latencies, t[i])).collect(),
    })
}

/// Exponential reply latency for every link of node `i` (row `i` of the
/// latency matrix), drawn in neighbour order.
pub fn sample_latency_row<R: Rng + ?Sized>(g: &TopologyGraph, i: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let exp = Exp::new(rate).expect("latency rate must be positive");
    let mut row = vec![f64::INFINITY; g.num_nodes()];
    for &j in g.neighborhood(i) {
        row[j] = if j == i { 0.0 } else { exp.sample(rng) };
    }
    row
}

/// Column-stochastic `A^k` with `A_{ji} = 1 / t_i` for `j` in `N_i^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix(pub Matrix);

impl MixingMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

pub fn mixing_matrix(sel: &RoundSelection) -> MixingMatrix {
    let m = sel.num_nodes();
    let mut a = Matrix::zeros(m, m);
    for i in 0..m {
        let w = 1.0 / sel.size(i) as f64;
        for &j in sel.set(i) {
            a.set(j, i, w);
        }
    }
    MixingMatrix(a)
}

/// True iff the union of selected edges over the window connects all nodes.
pub fn check_window_connectivity(window: &[RoundSelection]) -> bool {
    let Some(first) = window.first() else {
        return false;
    };
    let m = first.num_nodes();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); m];
    for sel in window {
        for i in 0..m {
            for &j in sel.set(i) {
                if j != i {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
    }
    connected(m, &adj)
}

/// Convergence constants `tau = (1 - m^{-mB})^{1/B}` and
/// `c0 = (80 m sqrt(l) / (1 - tau))^2`. Both are astronomically close to
/// their limits for realistic `m`, so the log-space values are kept too.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TheoryConstants {
    pub tau: f64,
    pub ln_one_minus_tau: f64,
    pub c0: f64,
    pub ln_c0: f64,
}

pub fn theory_constants(m: usize, window: usize, lipschitz: f64) -> Result<TheoryConstants> {
    if m < 2 || window < 1 {
        return Err(Error::invalid("m", "theory constants need m >= 2 and B >= 1"));
    }
    if !(lipschitz > 0.0) {
        return Err(Error::invalid("lipschitz", "must be positive"));
    }
    let b = window as f64;
    // x = m^{-mB}
    let ln_x = -(m as f64) * b * (m as f64).ln();
    let ln_one_minus_tau = if ln_x > -700.0 {
        let x = ln_x.exp();
        (-((-x).ln_1p() / b).exp_m1()).ln()
    } else {
        // 1 - (1 - x)^{1/B} = x / B (1 + O(x)) and x underflows here.
        ln_x - b.ln()
    };
    let tau = -ln_one_minus_tau.exp_m1();
    let ln_c0 = 2.0 * ((80.0 * m as f64).ln() + 0.5 * lipschitz.ln() - ln_one_minus_tau);
    Ok(TheoryConstants {
        tau,
        ln_one_minus_tau,
        c0: ln_c0.exp(),
        ln_c0,
    })
}

/// Lower bound on the probability that every pair communicates at least
/// once within `B` rounds: `prod_i [1 - (1 - (t_i-1)/(m-1))^B]^{m-1}`.
pub fn window_connectivity_probability_bound(t: &[usize], window: usize) -> f64 {
    let m = t.len();
    if m < 2 {
        return 1.0;
    }
    let mut ln_p = 0.0;
    for &ti in t {
        let q = 1.0 - (ti.saturating_sub(1)) as f64 / (m - 1) as f64;
        let inner = 1.0 - q.powi(window as i32);
        if inner <= 0.0 {
            return 0.0;
        }
        ln_p += (m - 1) as f64 * inner.ln();
    }
    ln_p.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};

    #[test]
    fn tiny_graphs() {
        let mut rng = substream(1, Stream::Graph, 0);
        let g = generate_random_graph(2, 1.0, &mut rng).unwrap();
        assert_eq!(g.neighborhood(0), &[0, 1]);
        assert_eq!(g.neighborhood(1), &[0, 1]);
        let g = generate_random_graph(5, 1.0, &mut rng).unwrap();
        assert_eq!(g, TopologyGraph::complete(5));
    }

    #[test]
    fn random_graph_is_connected_and_symmetric() {
        let mut rng = substream(7, Stream::Graph, 0);
        let g = generate_random_graph(32, 0.3, &mut rng).unwrap();
        assert!(g.is_connected());
        assert!(g.is_symmetric());
        assert!((0..32).all(|i| g.neighborhood(i).len() >= 2));
    }

    #[test]
    fn hopeless_edge_probability_errors() {
        let mut rng = substream(7, Stream::Graph, 0);
        let err = generate_random_graph(60, 0.001, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Disconnected { .. }));
        assert!(generate_random_graph(4, 0.0, &mut rng).is_err());
    }

    #[test]
    fn edge_list_roundtrip() {
        let mut rng = substream(3, Stream::Graph, 0);
        let g = generate_random_graph(12, 0.4, &mut rng).unwrap();
        let text = g.to_edge_list();
        assert_eq!(TopologyGraph::parse_edge_list(&text).unwrap(), g);
        assert_eq!(TopologyGraph::parse_edge_list("0 1\n1 2\n").unwrap().num_nodes(), 3);
        assert!(TopologyGraph::parse_edge_list("0 1\n2 3\n").is_err());
        assert!(TopologyGraph::parse_edge_list("0 x\n").is_err());
    }

    #[test]
    fn full_rate_selects_everything() {
        let mut rng = substream(5, Stream::Graph, 0);
        let g = generate_random_graph(10, 0.5, &mut rng).unwrap();
        let sel = select_neighbors(&g, 1.0, &mut rng).unwrap();
        assert_eq!(sel, RoundSelection::full(&g));
        assert!(select_neighbors(&g, 0.0, &mut rng).is_err());
    }

    #[test]
    fn low_rate_selects_self_only() {
        // |N_0| = 5 closed.
        let g = TopologyGraph::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        assert_eq!(responder_count(&g, 0, 0.2), 1);
        let mut rng = substream(5, Stream::Selection, 0);
        assert_eq!(select_for_node(&g, 0, 0.2, &mut rng), vec![0]);
    }

    #[test]
    fn selection_is_uniform_over_neighbours() {
        // Star centre with 9 leaves: |N_0| = 10, t = 5 so 4 of 9 leaves per draw.
        let edges: Vec<(usize, usize)> = (1..10).map(|j| (0, j)).collect();
        let g = TopologyGraph::from_edges(10, &edges).unwrap();
        let mut rng = substream(11, Stream::Selection, 0);
        let draws = 10_000;
        let mut counts = [0usize; 10];
        for _ in 0..draws {
            let set = select_for_node(&g, 0, 0.5, &mut rng);
            assert_eq!(set.len(), 5);
            assert!(set.contains(&0));
            for j in set {
                counts[j] += 1;
            }
        }
        let expected = draws as f64 * 4.0 / 9.0;
        let chi2: f64 = counts[1..]
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // chi-square with 8 dof, 99.9% quantile ~ 26.1.
        assert!(chi2 < 26.1, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn responders_follow_latency() {
        let g = TopologyGraph::complete(4);
        let flat = Matrix::zeros(4, 4);
        let sel = select_responders(&g, &flat, &[3, 3, 3, 3]).unwrap();
        assert_eq!(sel.set(0), &[0, 1, 2]);
        assert_eq!(sel.set(3), &[0, 1, 3]);

        let mut lat = Matrix::zeros(4, 4);
        lat.set(0, 1, f64::INFINITY);
        let sel = select_responders(&g, &lat, &[3, 1, 1, 1]).unwrap();
        assert_eq!(sel.set(0), &[0, 2, 3]);

        let mut bad = Matrix::zeros(4, 4);
        bad.set(0, 1, -1.0);
        assert!(select_responders(&g, &bad, &[2; 4]).is_err());
    }

    #[test]
    fn responders_match_sorting_oracle() {
        let mut rng = substream(21, Stream::Graph, 0);
        let g = generate_random_graph(16, 0.5, &mut rng).unwrap();
        let mut lat = Matrix::zeros(16, 16);
        for i in 0..16 {
            let row = sample_latency_row(&g, i, 2.0, &mut rng);
            for (j, x) in row.into_iter().enumerate() {
                lat.set(i, j, x);
            }
        }
        let t: Vec<usize> = (0..16).map(|i| responder_count(&g, i, 0.5)).collect();
        let sel = select_responders(&g, &lat, &t).unwrap();
        for i in 0..16 {
            let mut pairs: Vec<(f64, usize)> = g
                .neighborhood(i)
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (lat.get(i, j), j))
                .collect();
            pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut expect: Vec<usize> = pairs.iter().take(t[i] - 1).map(|p| p.1).collect();
            expect.push(i);
            expect.sort_unstable();
            assert_eq!(sel.set(i), expect.as_slice());
        }
    }

    #[test]
    fn mixing_examples() {
        let sel = RoundSelection::new(vec![vec![0, 1], vec![0, 1]]).unwrap();
        let a = mixing_matrix(&sel);
        assert!(a.matrix().data().iter().all(|&x| x == 0.5));

        let sel = RoundSelection::new(vec![vec![0], vec![1], vec![2]]).unwrap();
        assert_eq!(mixing_matrix(&sel).0, Matrix::identity(3));

        let sel = RoundSelection::new(vec![vec![0, 2], vec![0, 1, 2], vec![2]]).unwrap();
        for s in mixing_matrix(&sel).matrix().column_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(RoundSelection::new(vec![vec![1], vec![1]]).is_err());
    }

    #[test]
    fn random_mixing_is_column_stochastic() {
        let mut rng = substream(8, Stream::Graph, 0);
        let g = generate_random_graph(20, 0.3, &mut rng).unwrap();
        for _ in 0..20 {
            let sel = select_neighbors(&g, 0.4, &mut rng).unwrap();
            for s in mixing_matrix(&sel).matrix().column_sums() {
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    /// All subsets of `N_i \ {i}` of size `t - 1`, as bitmasks.
    fn subsets(others: &[usize], k: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for mask in 0u32..(1 << others.len()) {
            if mask.count_ones() as usize == k {
                out.push(
                    (0..others.len())
                        .filter(|b| mask >> b & 1 == 1)
                        .map(|b| others[b])
                        .collect(),
                );
            }
        }
        out
    }

    fn expected_mixing(g: &TopologyGraph, t: usize) -> Matrix {
        let m = g.num_nodes();
        let mut e = Matrix::zeros(m, m);
        for i in 0..m {
            let others: Vec<usize> = g.neighborhood(i).iter().copied().filter(|&j| j != i).collect();
            let choices = subsets(&others, t - 1);
            for choice in &choices {
                let mut set = choice.clone();
                set.push(i);
                for &j in &set {
                    let cur = e.get(j, i);
                    e.set(j, i, cur + 1.0 / t as f64 / choices.len() as f64);
                }
            }
        }
        e
    }

    #[test]
    fn expected_mixing_is_doubly_stochastic_on_regular_graphs() {
        let cycle = TopologyGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let triangle = TopologyGraph::complete(3);
        for (g, t) in [(&cycle, 2), (&cycle, 3), (&triangle, 2)] {
            let e = expected_mixing(g, t);
            for s in e.row_sums().into_iter().chain(e.column_sums()) {
                assert!((s - 1.0).abs() < 1e-12, "sum {s}");
            }
        }
    }

    #[test]
    fn window_connectivity_examples() {
        let g = TopologyGraph::complete(4);
        let full = RoundSelection::full(&g);
        assert!(check_window_connectivity(&[full.clone(), full]));
        let selfish = RoundSelection::new(vec![vec![0], vec![1], vec![2]]).unwrap();
        assert!(!check_window_connectivity(&[selfish.clone(), selfish]));
        assert!(!check_window_connectivity(&[]));
    }

    #[test]
    fn random_windows_are_usually_connected() {
        let mut connected_count = 0;
        for seed in 0..100 {
            let mut rng = substream(seed, Stream::Graph, 0);
            let g = generate_random_graph(8, 0.5, &mut rng).unwrap();
            let window: Vec<RoundSelection> = (0..20)
                .map(|_| select_neighbors(&g, 0.5, &mut rng).unwrap())
                .collect();
            if check_window_connectivity(&window) {
                connected_count += 1;
            }
        }
        assert!(connected_count >= 99, "{connected_count}/100");
    }

    #[test]
    fn theory_constants_small_case() {
        let c = theory_constants(2, 1, 1.0).unwrap();
        assert!((c.tau - 0.75).abs() < 1e-15);
        assert!((c.c0 - 409_600.0).abs() < 1e-6);
        assert!(theory_constants(1, 1, 1.0).is_err());
        assert!(theory_constants(2, 0, 1.0).is_err());
    }

    #[test]
    fn theory_constants_large_case_stays_finite_in_log_space() {
        let c = theory_constants(32, 20, 5.0).unwrap();
        assert!(c.ln_one_minus_tau.is_finite() && c.ln_one_minus_tau < 0.0);
        assert!(c.ln_c0.is_finite() && c.ln_c0 > 0.0);
        assert!(c.tau > 0.0 && c.tau <= 1.0);
    }

    #[test]
    fn probability_bound_behaves() {
        assert_eq!(window_connectivity_probability_bound(&[1, 1, 1], 10), 0.0);
        let p = window_connectivity_probability_bound(&[17; 32], 20);
        assert!(p > 0.99, "{p}");
    }
}
