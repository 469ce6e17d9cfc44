use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::graph::EncodedGraph;
use super::ModelError;
use crate::tensor::{axpy_mat_vec, axpy_outer, axpy_vec_mat, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, m: &mut Matrix<f64>) {
        if self == Activation::Relu {
            m.as_mut_slice().iter_mut().for_each(|x| *x = x.max(0.0));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForwardMode {
    /// Iterate the edge list.
    Sparse,
    /// Materialise one normalised `N × N` adjacency matrix per active relation.
    Dense,
}

/// Scalar multiply-adds spent in a forward pass.
///
/// Sparse mode: `2·F_in·F_out` per edge message and per self-loop. Dense mode:
/// `2·N²·F_in` per adjacency product plus `2·N·F_in·F_out` per weight product.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounter {
    multiply_adds: u64,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.multiply_adds = 0;
    }

    pub fn add(&mut self, n: u64) {
        self.multiply_adds += n;
    }

    pub fn multiply_adds(&self) -> u64 {
        self.multiply_adds
    }
}

/// Weights of one layer: `relations[r]` is `W_r` and `self_loop` is `W_0`, all `F_in × F_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights<W> {
    pub relations: Vec<Matrix<W>>,
    pub self_loop: Matrix<W>,
}

impl<W: Copy + Default> LayerWeights<W> {
    pub fn zeros(relation_count: usize, dim_in: usize, dim_out: usize) -> Self {
        LayerWeights {
            relations: (0..relation_count).map(|_| Matrix::zeros(dim_in, dim_out)).collect(),
            self_loop: Matrix::zeros(dim_in, dim_out),
        }
    }

    pub fn dim_in(&self) -> usize {
        self.self_loop.rows()
    }

    pub fn dim_out(&self) -> usize {
        self.self_loop.cols()
    }

    pub fn check(&self) -> Result<(), ModelError> {
        let shape = self.self_loop.shape();
        match self.relations.iter().position(|m| m.shape() != shape) {
            Some(r) => Err(ModelError::DimMismatch(alloc::format!(
                "relation {r} weight is {:?}, self-loop is {shape:?}",
                self.relations[r].shape()
            ))),
            None => Ok(()),
        }
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(W) -> U + Copy) -> LayerWeights<U> {
        LayerWeights { relations: self.relations.iter().map(|m| m.map(f)).collect(), self_loop: self.self_loop.map(f) }
    }
}

fn check_inputs<W: Copy + Default>(g: &EncodedGraph, h: &Matrix<f64>, layer: &LayerWeights<W>) -> Result<(), ModelError> {
    layer.check()?;
    if h.rows() != g.num_nodes() || h.cols() != layer.dim_in() {
        return Err(ModelError::DimMismatch(alloc::format!(
            "input is {:?}, expected ({}, {})",
            h.shape(),
            g.num_nodes(),
            layer.dim_in()
        )));
    }
    if g.relation_count() > layer.relations.len() {
        return Err(ModelError::DimMismatch(alloc::format!(
            "graph has {} relations, layer has {}",
            g.relation_count(),
            layer.relations.len()
        )));
    }
    Ok(())
}

/// One RGCN layer over the edge list.
pub fn rgcn_layer_forward<W: Copy + Default + Into<f64>>(
    g: &EncodedGraph,
    h: &Matrix<f64>,
    layer: &LayerWeights<W>,
    activation: Activation,
    counter: &mut OpCounter,
) -> Result<Matrix<f64>, ModelError> {
    check_inputs(g, h, layer)?;
    let (fi, fo) = (layer.dim_in(), layer.dim_out());
    let mut out = Matrix::zeros(g.num_nodes(), fo);
    let per_product = 2 * (fi * fo) as u64;
    for (e, &c) in g.edges().iter().zip(g.edge_norm()) {
        axpy_vec_mat(h.row(e.src), layer.relations[e.rel].as_slice(), fo, c, out.row_mut(e.dst));
        counter.add(per_product);
    }
    for i in 0..g.num_nodes() {
        axpy_vec_mat(h.row(i), layer.self_loop.as_slice(), fo, 1.0, out.row_mut(i));
        counter.add(per_product);
    }
    activation.apply(&mut out);
    Ok(out)
}

/// One RGCN layer via dense per-relation adjacency products `(A_r · H) · W_r`.
pub fn rgcn_layer_forward_dense<W: Copy + Default + Into<f64>>(
    g: &EncodedGraph,
    h: &Matrix<f64>,
    layer: &LayerWeights<W>,
    activation: Activation,
    counter: &mut OpCounter,
) -> Result<Matrix<f64>, ModelError> {
    check_inputs(g, h, layer)?;
    let n = g.num_nodes();
    let (fi, fo) = (layer.dim_in(), layer.dim_out());
    let mut out = Matrix::zeros(n, fo);
    let mut adj = Matrix::<f64>::zeros(n, n);
    let mut agg = Matrix::<f64>::zeros(n, fi);
    for r in g.active_relations() {
        adj.as_mut_slice().iter_mut().for_each(|x| *x = 0.0);
        for (e, &c) in g.edges().iter().zip(g.edge_norm()) {
            if e.rel == r {
                adj.set(e.dst, e.src, c);
            }
        }
        agg.as_mut_slice().iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let row = agg.row_mut(i);
            for j in 0..n {
                let a = adj.get(i, j);
                for (acc, &x) in row.iter_mut().zip(h.row(j)) {
                    *acc += a * x;
                }
            }
        }
        counter.add(2 * (n * n * fi) as u64);
        for i in 0..n {
            axpy_vec_mat(agg.row(i), layer.relations[r].as_slice(), fo, 1.0, out.row_mut(i));
        }
        counter.add(2 * (n * fi * fo) as u64);
    }
    for i in 0..n {
        axpy_vec_mat(h.row(i), layer.self_loop.as_slice(), fo, 1.0, out.row_mut(i));
    }
    counter.add(2 * (n * fi * fo) as u64);
    activation.apply(&mut out);
    Ok(out)
}

/// `L`-layer composition: ReLU between layers, identity after the last.
/// Resets `counter` first.
pub fn forward<W: Copy + Default + Into<f64>>(
    g: &EncodedGraph,
    h0: &Matrix<f64>,
    layers: &[LayerWeights<W>],
    mode: ForwardMode,
    counter: &mut OpCounter,
) -> Result<Matrix<f64>, ModelError> {
    counter.reset();
    if layers.is_empty() {
        return Err(ModelError::Invalid("model has no layers".into()));
    }
    let mut h = h0.clone();
    for (l, layer) in layers.iter().enumerate() {
        let act = if l + 1 == layers.len() { Activation::Identity } else { Activation::Relu };
        h = match mode {
            ForwardMode::Sparse => rgcn_layer_forward(g, &h, layer, act, counter)?,
            ForwardMode::Dense => rgcn_layer_forward_dense(g, &h, layer, act, counter)?,
        };
    }
    Ok(h)
}

/// Backward pass of one layer's pre-activation. Accumulates weight gradients
/// into `grad` and returns the gradient with respect to the input `h`.
pub(crate) fn rgcn_layer_backward(
    g: &EncodedGraph,
    h: &Matrix<f64>,
    layer: &LayerWeights<f64>,
    d_pre: &Matrix<f64>,
    grad: &mut LayerWeights<f64>,
) -> Matrix<f64> {
    let fo = layer.dim_out();
    let mut dh = Matrix::zeros(h.rows(), h.cols());
    for (e, &c) in g.edges().iter().zip(g.edge_norm()) {
        let dy = d_pre.row(e.dst);
        axpy_outer(h.row(e.src), dy, c, grad.relations[e.rel].as_mut_slice());
        axpy_mat_vec(layer.relations[e.rel].as_slice(), fo, dy, c, dh.row_mut(e.src));
    }
    for i in 0..h.rows() {
        let dy = d_pre.row(i);
        axpy_outer(h.row(i), dy, 1.0, grad.self_loop.as_mut_slice());
        axpy_mat_vec(layer.self_loop.as_slice(), fo, dy, 1.0, dh.row_mut(i));
    }
    dh
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rgcn::Edge;
    use alloc::vec;

    fn identity_layer(relation_count: usize, n: usize, w0: f64, wr: f64) -> LayerWeights<f64> {
        let mut l = LayerWeights::zeros(relation_count, n, n);
        for i in 0..n {
            l.self_loop.set(i, i, w0);
            for m in &mut l.relations {
                m.set(i, i, wr);
            }
        }
        l
    }

    #[test]
    fn no_edges_identity_self_loop() {
        let g = EncodedGraph::untyped(3, 1, []).unwrap();
        let h = Matrix::from_vec(3, 2, vec![1.0, -2.0, 3.0, 4.0, -5.0, 6.0]).unwrap();
        let out = rgcn_layer_forward(&g, &h, &identity_layer(1, 2, 1.0, 0.0), Activation::Identity, &mut OpCounter::new())
            .unwrap();
        assert_eq!(out, h);
    }

    #[test]
    fn single_message() {
        let g = EncodedGraph::untyped(2, 1, [Edge::new(0, 0, 1)]).unwrap();
        let h = Matrix::from_vec(2, 2, vec![1.5, -2.0, 7.0, 8.0]).unwrap();
        let layer = identity_layer(1, 2, 0.0, 1.0);
        for mode in [ForwardMode::Sparse, ForwardMode::Dense] {
            let out = forward(&g, &h, core::slice::from_ref(&layer), mode, &mut OpCounter::new()).unwrap();
            assert_eq!(out.row(1), h.row(0));
            assert_eq!(out.row(0), &[0.0, 0.0]);
        }
    }

    #[test]
    fn dim_mismatch() {
        let g = EncodedGraph::untyped(2, 1, []).unwrap();
        let h = Matrix::zeros(2, 3);
        let layer = LayerWeights::<f64>::zeros(1, 2, 2);
        assert!(matches!(
            rgcn_layer_forward(&g, &h, &layer, Activation::Relu, &mut OpCounter::new()),
            Err(ModelError::DimMismatch(_))
        ));
    }

    #[test]
    fn sparse_counter_formula() {
        let g = EncodedGraph::untyped(4, 2, [Edge::new(0, 0, 1), Edge::new(2, 1, 1), Edge::new(3, 0, 2)]).unwrap();
        let layers = vec![LayerWeights::<f32>::zeros(2, 3, 5), LayerWeights::<f32>::zeros(2, 5, 5)];
        let mut c = OpCounter::new();
        forward(&g, &Matrix::zeros(4, 3), &layers, ForwardMode::Sparse, &mut c).unwrap();
        assert_eq!(c.multiply_adds(), (3 + 4) * 2 * 15 + (3 + 4) * 2 * 25);
    }
}
