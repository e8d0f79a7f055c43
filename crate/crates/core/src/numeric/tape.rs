//! Reverse-mode differentiation over a flat operation tape.
//!
//! Forward calls append nodes holding concrete values; `backward` walks the
//! tape in reverse, accumulating gradients into node buffers and, for nodes
//! that read parameters, directly into the registry tensors' grad slots.
//! Every forward op validates shapes and rejects non-finite results at the
//! op that produced them.
//!
//! Vector nodes are `(len, 1)`; matrix nodes created by `gather_rows` are
//! `(k, d)` row-major; scalars are `(1, 1)`.

use crate::error::{Result, RmnError};

use super::{log_sum_exp, sigmoid, softmax_stable, ParamId, ParamRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// Whole parameter loaded as a node (used for vector-valued params).
    ParamVec { param: ParamId },
    /// One embedding-table row as a length-d vector.
    EmbedRow { table: ParamId, row: usize },
    /// Selected table rows stacked into a (k, d) matrix node.
    GatherRows { table: ParamId, rows: Vec<usize> },
    /// y = W x with a parameter matrix.
    MatVec { weight: ParamId, x: NodeId },
    /// y = x + b with a parameter vector.
    AddBias { x: NodeId, bias: ParamId },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    OneMinus { x: NodeId },
    Sigmoid { x: NodeId },
    Tanh { x: NodeId },
    /// y = A x where A is a (k, d) matrix node and x a length-d vector.
    MatVecNode { matrix: NodeId, x: NodeId },
    /// y = A^T p where A is a (k, d) matrix node and p a length-k vector.
    MatTVecNode { matrix: NodeId, x: NodeId },
    Softmax { x: NodeId },
    /// Scalar `logsumexp(logits) - logits[target]`.
    CrossEntropy { logits: NodeId, target: usize },
    /// Elementwise multiply by a fixed mask (inverted-dropout scaling baked in).
    Dropout { x: NodeId, mask: Vec<f64> },
    SumElems { x: NodeId },
}

struct Node {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn values(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].values
    }

    /// Gradient of the last `backward` root with respect to node `id`.
    /// Empty slice if the node was not reached.
    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.grads[id.0]
    }

    fn push(&mut self, op_name: &'static str, rows: usize, cols: usize, values: Vec<f64>, op: Op) -> Result<NodeId> {
        debug_assert_eq!(values.len(), rows * cols);
        if !values.iter().all(|v| v.is_finite()) {
            return Err(RmnError::NonFinite { op: op_name });
        }
        self.nodes.push(Node {
            rows,
            cols,
            values,
            op,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn vec_len(&self, id: NodeId) -> usize {
        self.nodes[id.0].values.len()
    }

    fn expect_vector(&self, op: &'static str, id: NodeId) -> Result<usize> {
        let n = &self.nodes[id.0];
        if n.cols != 1 {
            return Err(RmnError::ShapeMismatch {
                op,
                expected: "column vector".into(),
                got: format!("{}x{}", n.rows, n.cols),
            });
        }
        Ok(n.rows)
    }

    pub fn leaf(&mut self, values: &[f64]) -> Result<NodeId> {
        self.push("leaf", values.len(), 1, values.to_vec(), Op::Leaf)
    }

    pub fn leaf_zeros(&mut self, len: usize) -> Result<NodeId> {
        self.push("leaf", len, 1, vec![0.0; len], Op::Leaf)
    }

    pub fn param_vec(&mut self, params: &ParamRegistry, param: ParamId) -> Result<NodeId> {
        let t = params.get(param);
        self.push(
            "param_vec",
            t.len(),
            1,
            t.values().to_vec(),
            Op::ParamVec { param },
        )
    }

    pub fn embed_row(&mut self, params: &ParamRegistry, table: ParamId, row: usize) -> Result<NodeId> {
        let t = params.get(table);
        if row >= t.rows() {
            return Err(RmnError::InvalidTokenId {
                id: row as u32,
                vocab: t.rows(),
            });
        }
        let values = t.row(row).to_vec();
        self.push("embed_row", t.cols(), 1, values, Op::EmbedRow { table, row })
    }

    pub fn gather_rows(&mut self, params: &ParamRegistry, table: ParamId, rows: &[usize]) -> Result<NodeId> {
        let t = params.get(table);
        let d = t.cols();
        let mut values = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            if r >= t.rows() {
                return Err(RmnError::InvalidTokenId {
                    id: r as u32,
                    vocab: t.rows(),
                });
            }
            values.extend_from_slice(t.row(r));
        }
        self.push(
            "gather_rows",
            rows.len(),
            d,
            values,
            Op::GatherRows {
                table,
                rows: rows.to_vec(),
            },
        )
    }

    pub fn matvec(&mut self, params: &ParamRegistry, weight: ParamId, x: NodeId) -> Result<NodeId> {
        let w = params.get(weight);
        let n = self.expect_vector("matvec", x)?;
        if w.cols() != n {
            return Err(RmnError::ShapeMismatch {
                op: "matvec",
                expected: format!("vector of length {}", w.cols()),
                got: format!("{n}"),
            });
        }
        let xs = self.values(x);
        let mut out = vec![0.0; w.rows()];
        for (i, o) in out.iter_mut().enumerate() {
            let row = w.row(i);
            let mut acc = 0.0;
            for (wv, xv) in row.iter().zip(xs.iter()) {
                acc += wv * xv;
            }
            *o = acc;
        }
        self.push("matvec", w.rows(), 1, out, Op::MatVec { weight, x })
    }

    pub fn add_bias(&mut self, params: &ParamRegistry, x: NodeId, bias: ParamId) -> Result<NodeId> {
        let b = params.get(bias);
        let n = self.expect_vector("add_bias", x)?;
        if b.len() != n {
            return Err(RmnError::ShapeMismatch {
                op: "add_bias",
                expected: format!("bias of length {n}"),
                got: format!("{}", b.len()),
            });
        }
        let values: Vec<f64> = self
            .values(x)
            .iter()
            .zip(b.values().iter())
            .map(|(a, b)| a + b)
            .collect();
        self.push("add_bias", n, 1, values, Op::AddBias { x, bias })
    }

    fn binary_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<(usize, usize)> {
        let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
        if na.rows != nb.rows || na.cols != nb.cols {
            return Err(RmnError::ShapeMismatch {
                op,
                expected: format!("{}x{}", na.rows, na.cols),
                got: format!("{}x{}", nb.rows, nb.cols),
            });
        }
        Ok((na.rows, na.cols))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (rows, cols) = self.binary_shape("add", a, b)?;
        let values: Vec<f64> = self
            .values(a)
            .iter()
            .zip(self.values(b).iter())
            .map(|(x, y)| x + y)
            .collect();
        self.push("add", rows, cols, values, Op::Add { a, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (rows, cols) = self.binary_shape("mul", a, b)?;
        let values: Vec<f64> = self
            .values(a)
            .iter()
            .zip(self.values(b).iter())
            .map(|(x, y)| x * y)
            .collect();
        self.push("mul", rows, cols, values, Op::Mul { a, b })
    }

    pub fn one_minus(&mut self, x: NodeId) -> Result<NodeId> {
        let n = &self.nodes[x.0];
        let (rows, cols) = (n.rows, n.cols);
        let values: Vec<f64> = n.values.iter().map(|v| 1.0 - v).collect();
        self.push("one_minus", rows, cols, values, Op::OneMinus { x })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let n = &self.nodes[x.0];
        let (rows, cols) = (n.rows, n.cols);
        let values: Vec<f64> = n.values.iter().map(|&v| sigmoid(v)).collect();
        self.push("sigmoid", rows, cols, values, Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        let n = &self.nodes[x.0];
        let (rows, cols) = (n.rows, n.cols);
        let values: Vec<f64> = n.values.iter().map(|v| v.tanh()).collect();
        self.push("tanh", rows, cols, values, Op::Tanh { x })
    }

    pub fn matvec_node(&mut self, matrix: NodeId, x: NodeId) -> Result<NodeId> {
        let m = &self.nodes[matrix.0];
        let (k, d) = (m.rows, m.cols);
        let n = self.expect_vector("matvec_node", x)?;
        if n != d {
            return Err(RmnError::ShapeMismatch {
                op: "matvec_node",
                expected: format!("vector of length {d}"),
                got: format!("{n}"),
            });
        }
        let xs = self.values(x);
        let mv = self.values(matrix);
        let mut out = vec![0.0; k];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &mv[i * d..(i + 1) * d];
            *o = row.iter().zip(xs.iter()).map(|(a, b)| a * b).sum();
        }
        self.push("matvec_node", k, 1, out, Op::MatVecNode { matrix, x })
    }

    pub fn mat_t_vec_node(&mut self, matrix: NodeId, x: NodeId) -> Result<NodeId> {
        let m = &self.nodes[matrix.0];
        let (k, d) = (m.rows, m.cols);
        let n = self.expect_vector("mat_t_vec_node", x)?;
        if n != k {
            return Err(RmnError::ShapeMismatch {
                op: "mat_t_vec_node",
                expected: format!("vector of length {k}"),
                got: format!("{n}"),
            });
        }
        let ps = self.values(x);
        let mv = self.values(matrix);
        let mut out = vec![0.0; d];
        for (i, &p) in ps.iter().enumerate() {
            let row = &mv[i * d..(i + 1) * d];
            for (o, r) in out.iter_mut().zip(row.iter()) {
                *o += p * r;
            }
        }
        self.push("mat_t_vec_node", d, 1, out, Op::MatTVecNode { matrix, x })
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let len = self.expect_vector("softmax", x)?;
        let values = softmax_stable(self.values(x))?;
        self.push("softmax", len, 1, values, Op::Softmax { x })
    }

    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let len = self.expect_vector("cross_entropy", logits)?;
        if target >= len {
            return Err(RmnError::InvalidArgument {
                what: "cross_entropy",
                why: format!("target {target} out of range for {len} logits"),
            });
        }
        let ls = self.values(logits);
        let value = log_sum_exp(ls) - ls[target];
        self.push(
            "cross_entropy",
            1,
            1,
            vec![value],
            Op::CrossEntropy { logits, target },
        )
    }

    pub fn dropout(&mut self, x: NodeId, mask: Vec<f64>) -> Result<NodeId> {
        let n = self.expect_vector("dropout", x)?;
        if mask.len() != n {
            return Err(RmnError::ShapeMismatch {
                op: "dropout",
                expected: format!("mask of length {n}"),
                got: format!("{}", mask.len()),
            });
        }
        let values: Vec<f64> = self
            .values(x)
            .iter()
            .zip(mask.iter())
            .map(|(v, m)| v * m)
            .collect();
        self.push("dropout", n, 1, values, Op::Dropout { x, mask })
    }

    pub fn sum_elems(&mut self, x: NodeId) -> Result<NodeId> {
        let value: f64 = self.values(x).iter().sum();
        self.push("sum_elems", 1, 1, vec![value], Op::SumElems { x })
    }

    /// Propagate `seed` from the scalar node `root` back through the tape.
    ///
    /// Parameter gradients accumulate (+=) into the registry; call
    /// `zero_all_grads` first when starting a fresh batch. Node gradients
    /// stay available through [`Tape::grad`] until the next backward call.
    pub fn backward(&mut self, root: NodeId, seed: f64, params: &mut ParamRegistry) -> Result<()> {
        if self.nodes[root.0].values.len() != 1 {
            return Err(RmnError::InvalidArgument {
                what: "backward",
                why: "root must be a scalar node".into(),
            });
        }
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        grads[root.0] = vec![seed];

        fn acc(grads: &mut [Vec<f64>], id: NodeId, len: usize) -> &mut [f64] {
            if grads[id.0].is_empty() {
                grads[id.0] = vec![0.0; len];
            }
            &mut grads[id.0]
        }

        for i in (0..=root.0).rev() {
            if grads[i].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut grads[i]);
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::ParamVec { param } => {
                    let pg = params.get_mut(*param).grad_mut();
                    for (pg, gv) in pg.iter_mut().zip(g.iter()) {
                        *pg += gv;
                    }
                }
                Op::EmbedRow { table, row } => {
                    let t = params.get_mut(*table);
                    let d = t.cols();
                    let tg = &mut t.grad_mut()[row * d..(row + 1) * d];
                    for (tg, gv) in tg.iter_mut().zip(g.iter()) {
                        *tg += gv;
                    }
                }
                Op::GatherRows { table, rows } => {
                    let t = params.get_mut(*table);
                    let d = t.cols();
                    let tg = t.grad_mut();
                    for (slot, &r) in rows.iter().enumerate() {
                        let src = &g[slot * d..(slot + 1) * d];
                        let dst = &mut tg[r * d..(r + 1) * d];
                        for (dv, sv) in dst.iter_mut().zip(src.iter()) {
                            *dv += sv;
                        }
                    }
                }
                Op::MatVec { weight, x } => {
                    let (weight, x) = (*weight, *x);
                    let xs = &self.nodes[x.0].values;
                    {
                        let w = params.get_mut(weight);
                        let cols = w.cols();
                        let wg = w.grad_mut();
                        for (r, gv) in g.iter().enumerate() {
                            let dst = &mut wg[r * cols..(r + 1) * cols];
                            for (dv, xv) in dst.iter_mut().zip(xs.iter()) {
                                *dv += gv * xv;
                            }
                        }
                    }
                    let w = params.get(weight);
                    let xg = acc(&mut grads, x, xs.len());
                    for (r, gv) in g.iter().enumerate() {
                        let row = w.row(r);
                        for (xgv, wv) in xg.iter_mut().zip(row.iter()) {
                            *xgv += gv * wv;
                        }
                    }
                }
                Op::AddBias { x, bias } => {
                    let (x, bias) = (*x, *bias);
                    let bg = params.get_mut(bias).grad_mut();
                    for (bv, gv) in bg.iter_mut().zip(g.iter()) {
                        *bv += gv;
                    }
                    let xg = acc(&mut grads, x, g.len());
                    for (xv, gv) in xg.iter_mut().zip(g.iter()) {
                        *xv += gv;
                    }
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    let ag = acc(&mut grads, a, g.len());
                    for (av, gv) in ag.iter_mut().zip(g.iter()) {
                        *av += gv;
                    }
                    let bg = acc(&mut grads, b, g.len());
                    for (bv, gv) in bg.iter_mut().zip(g.iter()) {
                        *bv += gv;
                    }
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    {
                        let bs = &self.nodes[b.0].values;
                        let ag = acc(&mut grads, a, g.len());
                        for ((av, gv), bv) in ag.iter_mut().zip(g.iter()).zip(bs.iter()) {
                            *av += gv * bv;
                        }
                    }
                    let as_ = &self.nodes[a.0].values;
                    let bg = acc(&mut grads, b, g.len());
                    for ((bv, gv), av) in bg.iter_mut().zip(g.iter()).zip(as_.iter()) {
                        *bv += gv * av;
                    }
                }
                Op::OneMinus { x } => {
                    let x = *x;
                    let xg = acc(&mut grads, x, g.len());
                    for (xv, gv) in xg.iter_mut().zip(g.iter()) {
                        *xv -= gv;
                    }
                }
                Op::Sigmoid { x } => {
                    let x = *x;
                    let ys = &self.nodes[i].values;
                    let xg = acc(&mut grads, x, g.len());
                    for ((xv, gv), yv) in xg.iter_mut().zip(g.iter()).zip(ys.iter()) {
                        *xv += gv * yv * (1.0 - yv);
                    }
                }
                Op::Tanh { x } => {
                    let x = *x;
                    let ys = &self.nodes[i].values;
                    let xg = acc(&mut grads, x, g.len());
                    for ((xv, gv), yv) in xg.iter_mut().zip(g.iter()).zip(ys.iter()) {
                        *xv += gv * (1.0 - yv * yv);
                    }
                }
                Op::MatVecNode { matrix, x } => {
                    let (matrix, x) = (*matrix, *x);
                    let d = self.nodes[matrix.0].cols;
                    {
                        let xs = &self.nodes[x.0].values;
                        let mg = acc(&mut grads, matrix, d * g.len());
                        for (r, gv) in g.iter().enumerate() {
                            let dst = &mut mg[r * d..(r + 1) * d];
                            for (dv, xv) in dst.iter_mut().zip(xs.iter()) {
                                *dv += gv * xv;
                            }
                        }
                    }
                    let ms = &self.nodes[matrix.0].values;
                    let xg = acc(&mut grads, x, d);
                    for (r, gv) in g.iter().enumerate() {
                        let row = &ms[r * d..(r + 1) * d];
                        for (xv, mv) in xg.iter_mut().zip(row.iter()) {
                            *xv += gv * mv;
                        }
                    }
                }
                Op::MatTVecNode { matrix, x } => {
                    let (matrix, x) = (*matrix, *x);
                    let d = self.nodes[matrix.0].cols;
                    let k = self.nodes[matrix.0].rows;
                    {
                        let ps = &self.nodes[x.0].values;
                        let mg = acc(&mut grads, matrix, d * k);
                        for (r, pv) in ps.iter().enumerate() {
                            let dst = &mut mg[r * d..(r + 1) * d];
                            for (dv, gv) in dst.iter_mut().zip(g.iter()) {
                                *dv += pv * gv;
                            }
                        }
                    }
                    let ms = &self.nodes[matrix.0].values;
                    let pg = acc(&mut grads, x, k);
                    for (r, pv) in pg.iter_mut().enumerate() {
                        let row = &ms[r * d..(r + 1) * d];
                        *pv += row.iter().zip(g.iter()).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                Op::Softmax { x } => {
                    let x = *x;
                    let ys = &self.nodes[i].values;
                    let dot: f64 = g.iter().zip(ys.iter()).map(|(a, b)| a * b).sum();
                    let xg = acc(&mut grads, x, g.len());
                    for ((xv, gv), yv) in xg.iter_mut().zip(g.iter()).zip(ys.iter()) {
                        *xv += yv * (gv - dot);
                    }
                }
                Op::CrossEntropy { logits, target } => {
                    let (logits, target) = (*logits, *target);
                    let p = softmax_stable(&self.nodes[logits.0].values)?;
                    let gv = g[0];
                    let lg = acc(&mut grads, logits, p.len());
                    for (j, (lv, pv)) in lg.iter_mut().zip(p.iter()).enumerate() {
                        let indicator = if j == target { 1.0 } else { 0.0 };
                        *lv += gv * (pv - indicator);
                    }
                }
                Op::Dropout { x, mask } => {
                    let xg = acc(&mut grads, *x, g.len());
                    for ((xv, gv), mv) in xg.iter_mut().zip(g.iter()).zip(mask.iter()) {
                        *xv += gv * mv;
                    }
                }
                Op::SumElems { x } => {
                    let x = *x;
                    let len = self.vec_len(x);
                    let gv = g[0];
                    let xg = acc(&mut grads, x, len);
                    for xv in xg.iter_mut() {
                        *xv += gv;
                    }
                }
            }
            grads[i] = g;
        }
        self.grads = grads;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Tensor;

    #[test]
    fn matvec_forward_and_backward() {
        let mut params = ParamRegistry::new();
        let w = params
            .register("w", Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap())
            .unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(&[1.0, 0.5, -1.0]).unwrap();
        let y = tape.matvec(&params, w, x).unwrap();
        assert_eq!(tape.values(y), &[-1.0, 0.5]);
        let s = tape.sum_elems(y).unwrap();
        tape.backward(s, 1.0, &mut params).unwrap();
        // dW[i][j] = x[j]; dx[j] = sum_i W[i][j]
        assert_eq!(
            params.get(w).grad(),
            &[1.0, 0.5, -1.0, 1.0, 0.5, -1.0]
        );
        assert_eq!(tape.grad(x), &[5.0, 7.0, 9.0]);
    }

    #[test]
    fn gather_rows_accumulates_repeated_ids() {
        let mut params = ParamRegistry::new();
        let t = params
            .register("t", Tensor::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap())
            .unwrap();
        let mut tape = Tape::new();
        let rows = tape.gather_rows(&params, t, &[1, 1, 2]).unwrap();
        assert_eq!(tape.values(rows), &[3.0, 4.0, 3.0, 4.0, 5.0, 6.0]);
        let s = tape.sum_elems(rows).unwrap();
        tape.backward(s, 1.0, &mut params).unwrap();
        assert_eq!(params.get(t).grad(), &[0.0, 0.0, 2.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let mut params = ParamRegistry::new();
        let logits = params
            .register("logits", Tensor::vector(vec![0.0, 0.0]).unwrap())
            .unwrap();
        let mut tape = Tape::new();
        let l = tape.param_vec(&params, logits).unwrap();
        let ce = tape.cross_entropy(l, 0).unwrap();
        assert!((tape.values(ce)[0] - (2.0f64).ln()).abs() < 1e-12);
        tape.backward(ce, 1.0, &mut params).unwrap();
        let g = params.get(logits).grad();
        assert!((g[0] + 0.5).abs() < 1e-12);
        assert!((g[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn non_finite_result_is_rejected_at_the_producing_op() {
        let mut tape = Tape::new();
        let x = tape.leaf(&[700.0]).unwrap();
        // exp(700) inside softmax would overflow without max subtraction;
        // softmax handles it, but mul can overflow to infinity.
        let big = tape.leaf(&[1e308]).unwrap();
        let bigger = tape.mul(big, big);
        assert!(matches!(bigger, Err(RmnError::NonFinite { .. })));
        assert!(tape.softmax(x).is_ok());
    }

    #[test]
    fn softmax_node_backward_matches_finite_differences() {
        let mut params = ParamRegistry::new();
        let p = params
            .register("x", Tensor::vector(vec![0.3, -0.7, 1.1]).unwrap())
            .unwrap();
        let run = |params: &ParamRegistry| -> f64 {
            let mut tape = Tape::new();
            let x = tape.param_vec(params, p).unwrap();
            let sm = tape.softmax(x).unwrap();
            let w = tape.leaf(&[0.2, 1.4, -0.3]).unwrap();
            let prod = tape.mul(sm, w).unwrap();
            let s = tape.sum_elems(prod).unwrap();
            tape.values(s)[0]
        };
        // analytic
        let mut tape = Tape::new();
        let x = tape.param_vec(&params, p).unwrap();
        let sm = tape.softmax(x).unwrap();
        let w = tape.leaf(&[0.2, 1.4, -0.3]).unwrap();
        let prod = tape.mul(sm, w).unwrap();
        let s = tape.sum_elems(prod).unwrap();
        tape.backward(s, 1.0, &mut params).unwrap();
        let analytic = params.get(p).grad().to_vec();
        let eps = 1e-6;
        for k in 0..3 {
            let orig = params.get(p).values()[k];
            params.get_mut(p).values_mut()[k] = orig + eps;
            let up = run(&params);
            params.get_mut(p).values_mut()[k] = orig - eps;
            let down = run(&params);
            params.get_mut(p).values_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            assert!(
                (analytic[k] - numeric).abs() < 1e-8,
                "slot {k}: {} vs {}",
                analytic[k],
                numeric
            );
        }
    }
}
