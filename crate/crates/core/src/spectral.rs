//! Weighted Laplacian spectrum of the undirected task graph, the weighted
//! Cheeger constant, and the sensitivity of the algebraic connectivity to
//! edge weights.

use crate::error::ModelError;
use crate::flowgraph::{FlowGraph, ENUMERATION_LIMIT};

const MAX_SWEEPS: usize = 100;

/// Dense symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

/// Eigenvalues in ascending order with matching unit eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// `vectors[k]` belongs to `values[k]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
pub fn symmetric_eigen(m: &SymMatrix) -> Result<Eigen, ModelError> {
    let n = m.n;
    let mut a = m.data.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = m.frobenius();
    let tol = (f64::EPSILON * scale).powi(2);
    let mut converged = n < 2 || scale == 0.0;
    let mut sweep = 0;
    while !converged {
        if sweep == MAX_SWEEPS {
            return Err(ModelError::NoConvergence { sweeps: MAX_SWEEPS });
        }
        sweep += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].powi(2))
            .sum();
        converged = off <= tol;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[x * n + x].total_cmp(&a[y * n + y]).then(x.cmp(&y)));
    let values = order.iter().map(|&k| a[k * n + k]).collect();
    let vectors = order
        .iter()
        .map(|&k| {
            let mut col: Vec<f64> = (0..n).map(|i| v[i * n + k]).collect();
            normalize_sign(&mut col);
            col
        })
        .collect();
    Ok(Eigen { values, vectors })
}

/// Make the first non-negligible component positive.
fn normalize_sign(v: &mut [f64]) {
    let big = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * big) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Laplacian data of the undirected graph and its weighted normalization
/// `W^{-1/2} (D - A) W^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedLaplacian {
    pub matrix: SymMatrix,
    pub degrees: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedLaplacian {
    pub fn w_min(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn delta_max(&self) -> f64 {
        self.degrees.iter().copied().fold(0.0, f64::max)
    }
}

/// Directed graphs are symmetrized first.
pub fn weighted_laplacian(g: &FlowGraph) -> Result<WeightedLaplacian, ModelError> {
    let g = g.symmetrized();
    let n = g.len();
    if let Some(w) = g.node_weights.iter().find(|w| !(**w > 0.0)) {
        return Err(ModelError::Domain(format!(
            "node weight {w} must be positive"
        )));
    }
    let degrees: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| g.weight(i, j)).sum())
        .collect();
    let inv_sqrt: Vec<f64> = g.node_weights.iter().map(|w| 1.0 / w.sqrt()).collect();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let l = if i == j { degrees[i] } else { -g.weight(i, j) };
            data[i * n + j] = inv_sqrt[i] * l * inv_sqrt[j];
        }
    }
    Ok(WeightedLaplacian {
        matrix: SymMatrix { n, data },
        degrees,
        weights: g.node_weights.clone(),
    })
}

/// Second-smallest eigenpair of `L_W` and the spacing to its neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    pub laplacian: WeightedLaplacian,
    pub eigen: Eigen,
    pub lambda: f64,
    pub vector: Vec<f64>,
    /// Distance from `lambda` to the nearest other eigenvalue.
    pub gap: f64,
}

impl SpectralState {
    pub fn analyze(g: &FlowGraph) -> Result<Self, ModelError> {
        let laplacian = weighted_laplacian(g)?;
        let (eigen, lambda, vector, gap) = second_eigenpair(&laplacian.matrix)?;
        Ok(SpectralState {
            laplacian,
            eigen,
            lambda,
            vector,
            gap,
        })
    }

    pub fn is_simple(&self) -> bool {
        self.gap > 1e-9 * self.laplacian.matrix.frobenius()
    }

    /// `(v_i / sqrt(w_i) - v_j / sqrt(w_j))^2`, the rate at which `lambda`
    /// moves per unit of undirected edge weight `a_ij`.
    pub fn edge_sensitivity(&self, i: usize, j: usize) -> f64 {
        let w = &self.laplacian.weights;
        let d = self.vector[i] / w[i].sqrt() - self.vector[j] / w[j].sqrt();
        d * d
    }
}

pub fn second_eigenpair(l: &SymMatrix) -> Result<(Eigen, f64, Vec<f64>, f64), ModelError> {
    if l.n < 2 {
        return Err(ModelError::Dimension {
            expected: 2,
            got: l.n,
        });
    }
    let eigen = symmetric_eigen(l)?;
    let vals = &eigen.values;
    let lambda = vals[1];
    let mut gap = lambda - vals[0];
    if let Some(next) = vals.get(2) {
        gap = gap.min(next - lambda);
    }
    let vector = eigen.vectors[1].clone();
    Ok((eigen, lambda, vector, gap))
}

/// Weighted Cheeger constant over all nonempty proper node subsets.
pub fn cheeger_constant(g: &FlowGraph) -> Result<f64, ModelError> {
    let n = g.len();
    if n > ENUMERATION_LIMIT {
        return Err(ModelError::Budget {
            nodes: n,
            max: ENUMERATION_LIMIT,
        });
    }
    let g = g.symmetrized();
    let w = &g.node_weights;
    let total_w: f64 = w.iter().sum();
    let mut best = f64::INFINITY;
    // S and its complement give the same ratio; fix node 0 inside S
    for mask in 0u32..(1u32 << (n - 1)) {
        let full = (mask << 1) | 1;
        if full == (1u32 << n) - 1 {
            continue;
        }
        let inside = |i: usize| full >> i & 1 == 1;
        let mut cut = 0.0;
        let mut ws = 0.0;
        for i in (0..n).filter(|&i| inside(i)) {
            ws += w[i];
            for j in (0..n).filter(|&j| !inside(j)) {
                cut += g.weight(i, j);
            }
        }
        let ratio = cut / ws.min(total_w - ws);
        best = best.min(ratio);
    }
    Ok(best)
}

/// `lambda / 2 <= C <= sqrt(2 delta_max lambda / w_min)` up to a relative
/// slack of 1e-9.
pub fn check_cheeger_inequality(lambda: f64, cheeger: f64, delta_max: f64, w_min: f64) -> bool {
    let slack = 1e-9;
    let lower = lambda / 2.0;
    let upper = (2.0 * delta_max * lambda.max(0.0) / w_min).sqrt();
    let lower_ok = lower <= cheeger + slack * lower.abs().max(cheeger.abs());
    let upper_ok = cheeger <= upper + slack * upper.abs().max(cheeger.abs());
    lower_ok && upper_ok
}

/// Derivatives of one undirected edge weight with respect to the stacked
/// decision variables, as sparse `(variable, value)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDerivative {
    pub i: usize,
    pub j: usize,
    pub partials: Vec<(usize, f64)>,
}

/// `d lambda / d x_k = sum over edges (v_i/sqrt(w_i) - v_j/sqrt(w_j))^2 d a_ij / d x_k`,
/// counting each undirected edge once.
pub fn lambda_gradient(
    state: &SpectralState,
    edges: &[EdgeDerivative],
    num_vars: usize,
) -> Result<Vec<f64>, ModelError> {
    if !state.is_simple() {
        return Err(ModelError::Degenerate { gap: state.gap });
    }
    let mut grad = vec![0.0; num_vars];
    for edge in edges {
        let sens = state.edge_sensitivity(edge.i, edge.j);
        for &(k, d) in &edge.partials {
            if k >= num_vars {
                return Err(ModelError::Dimension {
                    expected: num_vars,
                    got: k + 1,
                });
            }
            grad[k] += sens * d;
        }
    }
    Ok(grad)
}
