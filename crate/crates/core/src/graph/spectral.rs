use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigendecomposition, Matrix};

use super::Graph;

/// Eigenvalues within this distance of 1 count toward the eigenvalue-1 multiplicity.
pub const DEFAULT_UNIT_EIGENVALUE_TOL: f64 = 1e-8;

/// `G = D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃ = D + I`, and `Δ̃ = I − G`.
#[derive(Debug, Clone)]
pub struct PropagationOperator {
    pub g: Matrix,
    pub laplacian: Matrix,
    /// Augmented degrees `d_i = D_ii + 1`.
    pub degrees: Vec<f64>,
}

impl PropagationOperator {
    pub fn new(graph: &Graph) -> Self {
        let n = graph.node_count();
        let degrees: Vec<f64> = graph.degrees().iter().map(|&d| d as f64 + 1.0).collect();
        let mut g = Matrix::zeros(n, n);
        for i in 0..n {
            g[(i, i)] = 1.0 / degrees[i];
        }
        for &(u, v) in graph.edges() {
            let w = 1.0 / (degrees[u] * degrees[v]).sqrt();
            g[(u, v)] = w;
            g[(v, u)] = w;
        }
        let mut laplacian = g.scale(-1.0);
        for i in 0..n {
            laplacian[(i, i)] += 1.0;
        }
        PropagationOperator { g, laplacian, degrees }
    }

    pub fn node_count(&self) -> usize {
        self.degrees.len()
    }

    /// `‖D̃^{1/2} 1‖ = sqrt(Σ d_i)`.
    pub fn degree_norm(&self) -> f64 {
        self.degrees.iter().sum::<f64>().sqrt()
    }
}

/// Orthonormal basis `Q` (n×m) of the eigenvalue-1 eigenspace `M` of `G`,
/// together with the spectrum used by the contraction bounds.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub m: usize,
    pub q: Matrix,
    pub component_labels: Vec<usize>,
    /// Largest `|λ_i|` over eigenvalues that are not 1.
    pub lambda2: f64,
    /// Largest eigenvalue below 1 (`λ_{m+1}`), or `None` when every eigenvalue is 1.
    pub lambda_next: Option<f64>,
    /// Full spectrum of `G`, descending.
    pub eigenvalues: Vec<f64>,
}

impl SpectralBasis {
    pub fn new(graph: &Graph, op: &PropagationOperator) -> Result<Self> {
        Self::with_tolerance(graph, op, DEFAULT_UNIT_EIGENVALUE_TOL)
    }

    /// Columns come from the closed form `D̃^{1/2} u_i / ‖D̃^{1/2} u_i‖` over
    /// component indicators `u_i`; only `lambda2` uses the eigensolver.
    pub fn with_tolerance(graph: &Graph, op: &PropagationOperator, unit_tol: f64) -> Result<Self> {
        let n = graph.node_count();
        if op.node_count() != n {
            return Err(Error::Input(format!(
                "operator has {} nodes but graph has {n}",
                op.node_count()
            )));
        }
        let (labels, m) = graph.connected_components();

        let mut mass = vec![0.0; m];
        for (i, &c) in labels.iter().enumerate() {
            mass[c] += op.degrees[i];
        }
        let mut q = Matrix::zeros(n, m);
        for (i, &c) in labels.iter().enumerate() {
            q[(i, c)] = (op.degrees[i] / mass[c]).sqrt();
        }

        let eig = symmetric_eigendecomposition(&op.g, 1e-12)?;
        let rest: Vec<f64> = eig
            .values
            .iter()
            .copied()
            .filter(|l| (l - 1.0).abs() >= unit_tol)
            .collect();
        let lambda2 = rest.iter().fold(0.0f64, |acc, l| acc.max(l.abs()));
        let lambda_next = rest.first().copied();

        Ok(SpectralBasis {
            m,
            q,
            component_labels: labels,
            lambda2,
            lambda_next,
            eigenvalues: eig.values,
        })
    }

    pub fn node_count(&self) -> usize {
        self.q.rows()
    }

    /// Number of eigenvalues within `tol` of 1, as counted by the eigensolver.
    pub fn unit_multiplicity(&self, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|l| (*l - 1.0).abs() < tol).count()
    }

    /// The single basis vector of a connected graph.
    pub fn unit_vector(&self) -> Result<Vec<f64>> {
        if self.m != 1 {
            return Err(Error::Unsupported(format!(
                "expected a connected graph (m = 1), found m = {}",
                self.m
            )));
        }
        Ok(self.q.column(0))
    }
}
