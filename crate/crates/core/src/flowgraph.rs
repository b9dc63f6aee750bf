//! Task-flow graph: relays offload to their successor or compute locally,
//! which is modeled as a virtual edge straight to the destination.

use std::collections::VecDeque;
use std::io::Write;

use crate::error::{ExportError, ModelError};
use crate::rates::RateSet;

/// Largest node count accepted by the exhaustive cut enumerations.
pub const ENUMERATION_LIMIT: usize = 22;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowGraph {
    n: usize,
    /// Row-major `n x n`, bits/s.
    adjacency: Vec<f64>,
    pub directed: bool,
    pub node_weights: Vec<f64>,
}

impl FlowGraph {
    /// Wrap a dense adjacency matrix with unit node weights.
    pub fn from_dense(n: usize, adjacency: Vec<f64>, directed: bool) -> Result<Self, ModelError> {
        if adjacency.len() != n * n {
            return Err(ModelError::Dimension {
                expected: n * n,
                got: adjacency.len(),
            });
        }
        if let Some(a) = adjacency.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return Err(ModelError::Domain(format!(
                "edge weight {a} must be finite and nonnegative"
            )));
        }
        Ok(FlowGraph {
            n,
            adjacency,
            directed,
            node_weights: vec![1.0; n],
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i * self.n + j]
    }

    pub fn set_weight(&mut self, i: usize, j: usize, w: f64) {
        self.adjacency[i * self.n + j] = w;
        if !self.directed {
            self.adjacency[j * self.n + i] = w;
        }
    }

    pub fn adjacency(&self) -> &[f64] {
        &self.adjacency
    }

    pub fn total_weight(&self) -> f64 {
        let sum: f64 = self.adjacency.iter().sum();
        if self.directed {
            sum
        } else {
            sum / 2.0
        }
    }

    /// Heavy source and destination, unit weight elsewhere.
    pub fn with_terminal_weight(mut self, w: f64) -> Self {
        let n = self.n;
        self.node_weights = vec![1.0; n];
        self.node_weights[0] = w;
        self.node_weights[n - 1] = w;
        self
    }

    pub fn with_node_weights(mut self, w: Vec<f64>) -> Result<Self, ModelError> {
        if w.len() != self.n {
            return Err(ModelError::Dimension {
                expected: self.n,
                got: w.len(),
            });
        }
        self.node_weights = w;
        Ok(self)
    }

    /// The same edges with directions dropped.
    pub fn symmetrized(&self) -> FlowGraph {
        if !self.directed {
            return self.clone();
        }
        let n = self.n;
        let mut adjacency = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    adjacency[i * n + j] = self.weight(i, j) + self.weight(j, i);
                }
            }
        }
        FlowGraph {
            n,
            adjacency,
            directed: false,
            node_weights: self.node_weights.clone(),
        }
    }

    /// Edge list `i,j,weight` with 1-based node labels; undirected graphs
    /// list each edge once with `i < j`.
    pub fn write_edges_csv<W: Write>(&self, out: W) -> Result<(), ExportError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "j", "weight"])?;
        for i in 0..self.n {
            let start = if self.directed { 0 } else { i + 1 };
            for j in start..self.n {
                let a = self.weight(i, j);
                if a != 0.0 {
                    w.write_record([(i + 1).to_string(), (j + 1).to_string(), a.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Directed task-flow graph of a rate set. With 0-based labels, transmitting
/// node `i` feeds `i + 1` with its offloading rate and the destination with
/// its local rate; the last relay's two edges merge into one.
pub fn build_adjacency(rates: &RateSet) -> Result<FlowGraph, ModelError> {
    let hops = rates.hops();
    let n = hops + 1;
    for &r in rates.offload.iter().chain(&rates.local) {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(ModelError::Domain(format!(
                "rate {r} must be finite and nonnegative"
            )));
        }
    }
    let mut adjacency = vec![0.0; n * n];
    for i in 0..hops {
        if i + 1 == hops {
            adjacency[i * n + n - 1] = rates.offload[i] + rates.local[i];
        } else {
            adjacency[i * n + i + 1] = rates.offload[i];
            adjacency[i * n + n - 1] = rates.local[i];
        }
    }
    FlowGraph::from_dense(n, adjacency, true)
}

/// Exact max-flow by shortest augmenting paths on real capacities.
/// Undirected edges act as two opposing arcs of equal capacity.
pub fn max_flow(g: &FlowGraph, s: usize, d: usize) -> f64 {
    assert_ne!(s, d, "source and sink must differ");
    let n = g.len();
    let mut residual = if g.directed {
        g.adjacency.clone()
    } else {
        g.symmetrized().adjacency
    };
    let stop = 1e-12 * g.total_weight();
    let mut flow = 0.0;
    let mut parent = vec![usize::MAX; n];
    let mut queue = VecDeque::with_capacity(n);
    loop {
        parent.iter_mut().for_each(|p| *p = usize::MAX);
        parent[s] = s;
        queue.clear();
        queue.push_back(s);
        'bfs: while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if parent[v] == usize::MAX && residual[u * n + v] > stop {
                    parent[v] = u;
                    if v == d {
                        break 'bfs;
                    }
                    queue.push_back(v);
                }
            }
        }
        if parent[d] == usize::MAX {
            break;
        }
        let mut bottleneck = f64::INFINITY;
        let mut v = d;
        while v != s {
            let u = parent[v];
            bottleneck = bottleneck.min(residual[u * n + v]);
            v = u;
        }
        if bottleneck <= stop {
            break;
        }
        let mut v = d;
        while v != s {
            let u = parent[v];
            residual[u * n + v] -= bottleneck;
            residual[v * n + u] += bottleneck;
            v = u;
        }
        flow += bottleneck;
    }
    flow
}

/// Minimum over all `s`-`d` separating node sets of the weight leaving the
/// source side.
pub fn min_cut_bruteforce(g: &FlowGraph, s: usize, d: usize) -> Result<f64, ModelError> {
    let n = g.len();
    if n > ENUMERATION_LIMIT {
        return Err(ModelError::Budget {
            nodes: n,
            max: ENUMERATION_LIMIT,
        });
    }
    assert_ne!(s, d, "source and sink must differ");
    let others: Vec<usize> = (0..n).filter(|&v| v != s && v != d).collect();
    let mut best = f64::INFINITY;
    let mut in_s = vec![false; n];
    for mask in 0u32..(1u32 << others.len()) {
        in_s.iter_mut().for_each(|b| *b = false);
        in_s[s] = true;
        for (bit, &v) in others.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                in_s[v] = true;
            }
        }
        let mut cut = 0.0;
        for i in (0..n).filter(|&i| in_s[i]) {
            for j in (0..n).filter(|&j| !in_s[j]) {
                cut += g.weight(i, j);
            }
        }
        best = best.min(cut);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowEquivalence {
    pub directed: f64,
    pub undirected: f64,
    pub holds: bool,
}

/// Compare source-to-destination max-flow of the directed task graph with
/// that of its undirected counterpart.
pub fn check_flow_equivalence(rates: &RateSet) -> Result<FlowEquivalence, ModelError> {
    let g = build_adjacency(rates)?;
    let d = g.len() - 1;
    let directed = max_flow(&g, 0, d);
    let undirected = max_flow(&g.symmetrized(), 0, d);
    let scale = directed.abs().max(undirected.abs());
    let holds = (directed - undirected).abs() <= 1e-9 * scale;
    Ok(FlowEquivalence {
        directed,
        undirected,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn three_node() -> RateSet {
        RateSet::from_rates(vec![2.0, 1.5], vec![1.0, 0.5])
    }

    fn random_rates(rng: &mut ChaCha8Rng, n: usize) -> RateSet {
        RateSet::from_rates(
            (0..n - 1).map(|_| rng.random_range(0.0..10.0)).collect(),
            (0..n - 1).map(|_| rng.random_range(0.0..10.0)).collect(),
        )
    }

    #[test]
    fn adjacency_transcription() {
        let g = build_adjacency(&three_node()).unwrap();
        assert_eq!(
            g.adjacency(),
            &[0.0, 2.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0]
        );
        let two = build_adjacency(&RateSet::from_rates(vec![3.0], vec![2.0])).unwrap();
        assert_eq!(two.adjacency(), &[0.0, 5.0, 0.0, 0.0]);
        let zero = build_adjacency(&RateSet::from_rates(vec![0.0; 4], vec![0.0; 4])).unwrap();
        assert!(zero.adjacency().iter().all(|&a| a == 0.0));
        assert_eq!(max_flow(&zero, 0, 4), 0.0);
        assert!(build_adjacency(&RateSet::from_rates(vec![-1.0], vec![0.0])).is_err());
    }

    #[test]
    fn structural_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in 2..12 {
            let g = build_adjacency(&random_rates(&mut rng, n)).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let allowed = j == i + 1 || (j == n - 1 && i < n - 1);
                    if !allowed {
                        assert_eq!(g.weight(i, j), 0.0);
                    }
                }
            }
            let u = g.symmetrized();
            for i in 0..n {
                assert_eq!(u.weight(i, i), 0.0);
                for j in 0..n {
                    assert_eq!(u.weight(i, j), u.weight(j, i));
                }
            }
        }
    }

    #[test]
    fn three_node_flow_and_cut() {
        let g = build_adjacency(&three_node()).unwrap();
        assert_eq!(max_flow(&g, 0, 2), 3.0);
        assert_eq!(min_cut_bruteforce(&g, 0, 2).unwrap(), 3.0);
        let eq = check_flow_equivalence(&three_node()).unwrap();
        assert_eq!((eq.directed, eq.undirected, eq.holds), (3.0, 3.0, true));
        let zero =
            check_flow_equivalence(&RateSet::from_rates(vec![0.0; 3], vec![0.0; 3])).unwrap();
        assert!(zero.holds && zero.directed == 0.0 && zero.undirected == 0.0);
    }

    #[test]
    fn single_edge() {
        let g = FlowGraph::from_dense(2, vec![0.0, 5.0, 0.0, 0.0], true).unwrap();
        assert_eq!(max_flow(&g, 0, 1), 5.0);
        assert_eq!(min_cut_bruteforce(&g, 0, 1).unwrap(), 5.0);
    }

    #[test]
    fn budget_enforced() {
        let n = ENUMERATION_LIMIT + 1;
        let g = FlowGraph::from_dense(n, vec![0.0; n * n], false).unwrap();
        assert!(matches!(
            min_cut_bruteforce(&g, 0, n - 1),
            Err(ModelError::Budget { .. })
        ));
    }

    #[test]
    fn flow_equals_cut_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..300 {
            let n = rng.random_range(3..=10);
            let rates = random_rates(&mut rng, n);
            let g = build_adjacency(&rates).unwrap();
            let f = max_flow(&g, 0, n - 1);
            let c = min_cut_bruteforce(&g, 0, n - 1).unwrap();
            assert!((f - c).abs() <= 1e-9 * c.max(1e-300));
            assert!(check_flow_equivalence(&rates).unwrap().holds);
        }
    }

    #[test]
    fn undirected_graph_with_chord() {
        // 0-1-2-3 square with the 1-2 chord
        let mut g = FlowGraph::from_dense(4, vec![0.0; 16], false).unwrap();
        g.set_weight(0, 1, 3.0);
        g.set_weight(0, 2, 1.0);
        g.set_weight(1, 2, 2.0);
        g.set_weight(1, 3, 1.0);
        g.set_weight(2, 3, 4.0);
        assert_eq!(max_flow(&g, 0, 3), 4.0);
        assert_eq!(min_cut_bruteforce(&g, 0, 3).unwrap(), 4.0);
    }

    #[test]
    fn increasing_an_edge_never_hurts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.random_range(3..=8);
            let mut g = build_adjacency(&random_rates(&mut rng, n)).unwrap();
            let before = max_flow(&g, 0, n - 1);
            let i = rng.random_range(0..n - 1);
            let j = if rng.random_bool(0.5) { i + 1 } else { n - 1 };
            let w = g.weight(i, j);
            g.set_weight(i, j, w + rng.random_range(0.0..5.0));
            assert!(max_flow(&g, 0, n - 1) >= before * (1.0 - 1e-12));
        }
    }

    #[test]
    fn edge_csv() {
        let g = build_adjacency(&three_node()).unwrap();
        let mut buf = Vec::new();
        g.write_edges_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "i,j,weight\n1,2,2\n1,3,1\n2,3,2\n"
        );
    }
}
