//! Code-node / visit-hyperedge incidence structure.
//!
//! The binary incidence matrix `H` (codes × visits) is kept in both
//! compressed-row and compressed-column form so that products with `H` and
//! `Hᵀ` each walk contiguous index lists.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::ehr::{EhrDataset, SupervisedExample};
use crate::error::{Result, ShgtError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypergraph {
    num_nodes: usize,
    num_edges: usize,
    row_ptr: Vec<usize>,
    row_edges: Vec<usize>,
    col_ptr: Vec<usize>,
    col_nodes: Vec<usize>,
    edge_to_patient: Vec<(usize, usize)>,
}

impl Hypergraph {
    /// Builds from explicit hyperedges (lists of node ids). Duplicate members
    /// within an edge are collapsed; empty edges are rejected.
    pub fn from_edges(
        num_nodes: usize,
        edges: &[Vec<usize>],
        edge_to_patient: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if edge_to_patient.len() != edges.len() {
            return Err(ShgtError::InvalidDataset(format!(
                "{} edges but {} edge owners",
                edges.len(),
                edge_to_patient.len()
            )));
        }
        let mut col_ptr = Vec::with_capacity(edges.len() + 1);
        let mut col_nodes = Vec::new();
        col_ptr.push(0);
        for (j, edge) in edges.iter().enumerate() {
            let mut members = edge.clone();
            members.sort_unstable();
            members.dedup();
            if members.is_empty() {
                return Err(ShgtError::InvalidDataset(format!("hyperedge {j} is empty")));
            }
            if let Some(&i) = members.last().filter(|&&i| i >= num_nodes) {
                return Err(ShgtError::InvalidDataset(format!(
                    "hyperedge {j} references node {i} >= {num_nodes}"
                )));
            }
            col_nodes.extend(members);
            col_ptr.push(col_nodes.len());
        }

        // Transpose the column form by counting sort.
        let mut row_ptr = vec![0usize; num_nodes + 1];
        for &i in &col_nodes {
            row_ptr[i + 1] += 1;
        }
        for i in 0..num_nodes {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut fill = row_ptr.clone();
        let mut row_edges = vec![0usize; col_nodes.len()];
        for j in 0..edges.len() {
            for &i in &col_nodes[col_ptr[j]..col_ptr[j + 1]] {
                row_edges[fill[i]] = j;
                fill[i] += 1;
            }
        }

        Ok(Hypergraph {
            num_nodes,
            num_edges: edges.len(),
            row_ptr,
            row_edges,
            col_ptr,
            col_nodes,
            edge_to_patient,
        })
    }

    /// Number of code nodes, `m`.
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of visit hyperedges, `n`.
    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn nnz(&self) -> usize {
        self.col_nodes.len()
    }

    /// Nodes incident to edge `j`, sorted ascending.
    pub fn edge_nodes(&self, j: usize) -> &[usize] {
        &self.col_nodes[self.col_ptr[j]..self.col_ptr[j + 1]]
    }

    /// Edges incident to node `i`, sorted ascending.
    pub fn node_edges(&self, i: usize) -> &[usize] {
        &self.row_edges[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// `(patient index, visit ordinal)` owning edge `j`.
    pub fn edge_owner(&self, j: usize) -> (usize, usize) {
        self.edge_to_patient[j]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.num_nodes && j < self.num_edges && self.edge_nodes(j).binary_search(&i).is_ok()
    }

    /// Every nonzero `(i, j)` in row-major order.
    pub fn nonzeros(&self) -> Vec<(usize, usize)> {
        (0..self.num_nodes)
            .flat_map(|i| self.node_edges(i).iter().map(move |&j| (i, j)))
            .collect()
    }

    /// Row sums of `H`.
    pub fn node_degrees(&self) -> Vec<usize> {
        self.row_ptr.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Column sums of `H`.
    pub fn edge_degrees(&self) -> Vec<usize> {
        self.col_ptr.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut h = Array2::zeros((self.num_nodes, self.num_edges));
        for j in 0..self.num_edges {
            for &i in self.edge_nodes(j) {
                h[(i, j)] = 1.0;
            }
        }
        h
    }

    /// `H · W` for `W` of shape `n × d`.
    pub fn mul_dense(&self, w: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_rows("H·W", w, self.num_edges)?;
        let mut out = Array2::zeros((self.num_nodes, w.ncols()));
        for i in 0..self.num_nodes {
            let mut row = out.row_mut(i);
            for &j in self.node_edges(i) {
                row += &w.row(j);
            }
        }
        Ok(out)
    }

    /// `Hᵀ · W` for `W` of shape `m × d`.
    pub fn t_mul_dense(&self, w: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_rows("Hᵀ·W", w, self.num_nodes)?;
        let mut out = Array2::zeros((self.num_edges, w.ncols()));
        for j in 0..self.num_edges {
            let mut row = out.row_mut(j);
            for &i in self.edge_nodes(j) {
                row += &w.row(i);
            }
        }
        Ok(out)
    }

    /// Coordinate-list dump, one `i j` line per nonzero in row-major order.
    pub fn to_coo_string(&self) -> String {
        let mut out = String::with_capacity(self.nnz() * 8);
        for (i, j) in self.nonzeros() {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    pub fn write_coo(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_coo_string()).map_err(|e| ShgtError::io(path, e))
    }
}

fn check_rows(context: &str, w: ArrayView2<f64>, rows: usize) -> Result<()> {
    if w.nrows() != rows {
        return Err(ShgtError::Shape {
            context: context.to_string(),
            expected: (rows, w.ncols()),
            found: w.dim(),
        });
    }
    Ok(())
}

/// One hyperedge per input visit of each example, indexed by (patient order,
/// visit ordinal) exactly as `make_examples` assigned edge ids.
pub fn build_hypergraph(
    dataset: &EhrDataset,
    examples: &[SupervisedExample],
) -> Result<Hypergraph> {
    let mut edges = Vec::new();
    let mut owners = Vec::new();
    for ex in examples {
        let patient = dataset.patients.get(ex.patient_index).ok_or_else(|| {
            ShgtError::InvalidDataset(format!("example refers to patient {}", ex.patient_index))
        })?;
        let inputs = patient.input_visits();
        if inputs.len() != ex.input_visit_edge_ids.len() {
            return Err(ShgtError::InvalidDataset(format!(
                "patient {} has {} input visits but {} edge ids",
                ex.patient_index,
                inputs.len(),
                ex.input_visit_edge_ids.len()
            )));
        }
        for (visit, &edge_id) in inputs.iter().zip(&ex.input_visit_edge_ids) {
            if edge_id != edges.len() {
                return Err(ShgtError::InvalidDataset(format!(
                    "edge ids are not consecutive at patient {}",
                    ex.patient_index
                )));
            }
            edges.push(visit.codes.clone());
            owners.push((ex.patient_index, visit.ordinal));
        }
    }
    Hypergraph::from_edges(dataset.vocabulary.len(), &edges, owners)
}
