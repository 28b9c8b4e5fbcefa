//! Operation tape with reverse-mode differentiation.
//!
//! Every operation appends a node holding its value; [`Tape::backward`] walks
//! the nodes in reverse and accumulates vector-Jacobian products. Matrices
//! are `[rows, cols]`; "row" operations broadcast a `[cols]` vector across
//! every row.

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    /// `x · wᵀ` for `x: [n, k]`, `w: [m, k]`.
    MatMulT(Var, Var),
    AddRow(Var, Var),
    SubRow(Var, Var),
    MulRow(Var, Var),
    DivRow(Var, Var),
    /// Column means of a matrix.
    ColMean(Var),
    Square(Var),
    Sqrt(Var),
    AddScalar(Var),
    Scale(Var, T),
    Relu(Var),
    LogSoftmax(Var),
    /// Weighted mean negative log-likelihood over the rows of a log-prob matrix.
    WeightedNll {
        logp: Var,
        labels: Vec<usize>,
        row_weights: Vec<T>,
        total_weight: T,
    },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_err(msg: String) -> Error {
    Error::Shape(msg)
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn check(&self, v: Var) -> Result<&Node<T>> {
        self.nodes
            .get(v.0)
            .ok_or_else(|| Error::State(format!("variable {} is not on this tape", v.0)))
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numerics(format!(
                "non-finite value produced by {}",
                op_name(&op)
            )));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records an input tensor. Trainable parameters pass `requires_grad = true`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numerics("non-finite leaf tensor".into()));
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul_t(&mut self, x: Var, w: Var) -> Result<Var> {
        let (n, k) = self.check(x)?.value.expect_matrix("matmul input")?;
        let (m, k2) = self.check(w)?.value.expect_matrix("matmul weight")?;
        if k != k2 {
            return Err(shape_err(format!("matmul: input has {k} columns, weight expects {k2}")));
        }
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            let xr = &xv[i * k..(i + 1) * k];
            for j in 0..m {
                let wr = &wv[j * k..(j + 1) * k];
                out[i * m + j] = xr.iter().zip(wr).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            }
        }
        self.push(Tensor::new(vec![n, m], out)?, Op::MatMulT(x, w), &[x, w])
    }

    fn row_binary(&mut self, x: Var, r: Var, what: &str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (n, d) = self.check(x)?.value.expect_matrix(what)?;
        let rv = &self.check(r)?.value;
        if rv.shape() != [d] {
            return Err(shape_err(format!("{what}: row operand shape {:?}, expected [{d}]", rv.shape())));
        }
        let xv = self.value(x).data();
        let rv = rv.data();
        let out = (0..n * d).map(|i| f(xv[i], rv[i % d])).collect();
        Tensor::new(vec![n, d], out)
    }

    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let v = self.row_binary(x, b, "add_row", |a, b| a + b)?;
        self.push(v, Op::AddRow(x, b), &[x, b])
    }

    pub fn sub_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let v = self.row_binary(x, b, "sub_row", |a, b| a - b)?;
        self.push(v, Op::SubRow(x, b), &[x, b])
    }

    pub fn mul_row(&mut self, x: Var, g: Var) -> Result<Var> {
        let v = self.row_binary(x, g, "mul_row", |a, b| a * b)?;
        self.push(v, Op::MulRow(x, g), &[x, g])
    }

    pub fn div_row(&mut self, x: Var, s: Var) -> Result<Var> {
        let v = self.row_binary(x, s, "div_row", |a, b| a / b)?;
        self.push(v, Op::DivRow(x, s), &[x, s])
    }

    pub fn col_mean(&mut self, x: Var) -> Result<Var> {
        let (n, d) = self.check(x)?.value.expect_matrix("col_mean")?;
        if n == 0 {
            return Err(shape_err("col_mean of an empty matrix".into()));
        }
        let xv = self.value(x).data();
        let inv = T::one() / T::from_usize(n).unwrap();
        let mut out = vec![T::zero(); d];
        for i in 0..n {
            for (o, &v) in out.iter_mut().zip(&xv[i * d..(i + 1) * d]) {
                *o = *o + v;
            }
        }
        out.iter_mut().for_each(|o| *o = *o * inv);
        self.push(Tensor::vector(out), Op::ColMean(x), &[x])
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        let v = self.check(x)?.value.map(|a| a * a);
        self.push(v, Op::Square(x), &[x])
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        let v = self.check(x)?.value.map(|a| a.sqrt());
        self.push(v, Op::Sqrt(x), &[x])
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Result<Var> {
        let v = self.check(x)?.value.map(|a| a + c);
        self.push(v, Op::AddScalar(x), &[x])
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let v = self.check(x)?.value.map(|a| a * c);
        self.push(v, Op::Scale(x, c), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = self.check(x)?.value.map(|a| if a > T::zero() { a } else { T::zero() });
        self.push(v, Op::Relu(x), &[x])
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let (n, d) = self.check(x)?.value.expect_matrix("log_softmax")?;
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(n * d);
        for i in 0..n {
            let row = &xv[i * d..(i + 1) * d];
            out.extend(log_softmax_row(row));
        }
        self.push(Tensor::new(vec![n, d], out)?, Op::LogSoftmax(x), &[x])
    }

    /// `Σ_n w[y_n] · (−logp[n, y_n]) / Σ_n w[y_n]`.
    pub fn weighted_nll(&mut self, logp: Var, labels: &[usize], class_weights: &[T]) -> Result<Var> {
        let (n, c) = self.check(logp)?.value.expect_matrix("weighted_nll")?;
        if labels.len() != n {
            return Err(shape_err(format!("{} labels for {n} rows", labels.len())));
        }
        if class_weights.len() != c {
            return Err(shape_err(format!("{} class weights for {c} classes", class_weights.len())));
        }
        if class_weights.iter().any(|&w| !(w > T::zero()) || !w.is_finite()) {
            return Err(Error::Precondition("class weights must be positive and finite".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::Precondition(format!("label {bad} outside 0..{c}")));
        }
        let lp = self.value(logp).data();
        let row_weights: Vec<T> = labels.iter().map(|&y| class_weights[y]).collect();
        let total_weight = row_weights.iter().fold(T::zero(), |a, &b| a + b);
        let sum = labels
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (i, &y)| acc - row_weights[i] * lp[i * c + y]);
        self.push(
            Tensor::scalar(sum / total_weight),
            Op::WeightedNll {
                logp,
                labels: labels.to_vec(),
                row_weights,
                total_weight,
            },
            &[logp],
        )
    }

    /// Reverse pass from a scalar output. Returns gradients for every node that
    /// depends on a `requires_grad` leaf; `d output / d output = 1`.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        let out = self.check(output).map_err(|_| {
            Error::State("backward called for a variable that no forward pass recorded".into())
        })?;
        if out.value.len() != 1 {
            return Err(shape_err(format!(
                "backward needs a scalar output, got shape {:?}",
                out.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::full(out.value.shape().to_vec(), T::one()));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad {
                *g = None;
            }
        }
        if let Some(bad) = grads.iter().flatten().find(|g| !g.is_finite()) {
            return Err(Error::Numerics(format!("non-finite gradient of shape {:?}", bad.shape())));
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let gv = g.data();
        let mut acc = |v: Var, delta: Vec<T>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(t) => t.data_mut().iter_mut().zip(delta).for_each(|(a, d)| *a = *a + d),
                slot @ None => {
                    *slot = Some(Tensor::new(self.nodes[v.0].value.shape().to_vec(), delta).expect("gradient shape"))
                }
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMulT(x, w) => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (n, k) = (xv.rows(), xv.cols());
                let m = wv.rows();
                let (xd, wd) = (xv.data(), wv.data());
                let mut gx = vec![T::zero(); n * k];
                let mut gw = vec![T::zero(); m * k];
                for i in 0..n {
                    for j in 0..m {
                        let gij = gv[i * m + j];
                        if gij == T::zero() {
                            continue;
                        }
                        for t in 0..k {
                            gx[i * k + t] = gx[i * k + t] + gij * wd[j * k + t];
                            gw[j * k + t] = gw[j * k + t] + gij * xd[i * k + t];
                        }
                    }
                }
                acc(*x, gx);
                acc(*w, gw);
            }
            Op::AddRow(x, b) | Op::SubRow(x, b) => {
                let d = self.value(*b).len();
                let sign = if matches!(node.op, Op::SubRow(..)) { -T::one() } else { T::one() };
                acc(*x, gv.to_vec());
                acc(*b, col_sums(gv, d).into_iter().map(|s| sign * s).collect());
            }
            Op::MulRow(x, s) => {
                let (xd, sd) = (self.value(*x).data(), self.value(*s).data());
                let d = sd.len();
                acc(*x, gv.iter().enumerate().map(|(i, &gi)| gi * sd[i % d]).collect());
                let prod: Vec<T> = gv.iter().zip(xd).map(|(&gi, &xi)| gi * xi).collect();
                acc(*s, col_sums(&prod, d));
            }
            Op::DivRow(x, s) => {
                let (xd, sd) = (self.value(*x).data(), self.value(*s).data());
                let d = sd.len();
                acc(*x, gv.iter().enumerate().map(|(i, &gi)| gi / sd[i % d]).collect());
                let prod: Vec<T> = gv
                    .iter()
                    .zip(xd)
                    .enumerate()
                    .map(|(i, (&gi, &xi))| -gi * xi / (sd[i % d] * sd[i % d]))
                    .collect();
                acc(*s, col_sums(&prod, d));
            }
            Op::ColMean(x) => {
                let xv = self.value(*x);
                let (n, d) = (xv.rows(), xv.cols());
                let inv = T::one() / T::from_usize(n).unwrap();
                acc(*x, (0..n * d).map(|i| gv[i % d] * inv).collect());
            }
            Op::Square(x) => {
                let xd = self.value(*x).data();
                acc(*x, gv.iter().zip(xd).map(|(&gi, &xi)| gi * (xi + xi)).collect());
            }
            Op::Sqrt(x) => {
                let yd = node.value.data();
                let two = T::lit(2.0);
                acc(*x, gv.iter().zip(yd).map(|(&gi, &yi)| gi / (two * yi)).collect());
            }
            Op::AddScalar(x) => acc(*x, gv.to_vec()),
            Op::Scale(x, c) => acc(*x, gv.iter().map(|&gi| gi * *c).collect()),
            Op::Relu(x) => {
                let xd = self.value(*x).data();
                acc(
                    *x,
                    gv.iter()
                        .zip(xd)
                        .map(|(&gi, &xi)| if xi > T::zero() { gi } else { T::zero() })
                        .collect(),
                );
            }
            Op::LogSoftmax(x) => {
                let yv = &node.value;
                let (n, d) = (yv.rows(), yv.cols());
                let yd = yv.data();
                let mut gx = vec![T::zero(); n * d];
                for i in 0..n {
                    let r = i * d..(i + 1) * d;
                    let gsum = gv[r.clone()].iter().fold(T::zero(), |a, &b| a + b);
                    for j in r {
                        gx[j] = gv[j] - yd[j].exp() * gsum;
                    }
                }
                acc(*x, gx);
            }
            Op::WeightedNll {
                logp,
                labels,
                row_weights,
                total_weight,
            } => {
                let c = self.value(*logp).cols();
                let mut gl = vec![T::zero(); labels.len() * c];
                for (i, &y) in labels.iter().enumerate() {
                    gl[i * c + y] = -gv[0] * row_weights[i] / *total_weight;
                }
                acc(*logp, gl);
            }
        }
        Ok(())
    }
}

fn col_sums<T: Scalar>(v: &[T], d: usize) -> Vec<T> {
    let mut out = vec![T::zero(); d];
    for (i, &x) in v.iter().enumerate() {
        out[i % d] = out[i % d] + x;
    }
    out
}

/// Numerically stable `x − logsumexp(x)`.
pub fn log_softmax_row<T: Scalar>(row: &[T]) -> Vec<T> {
    let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let lse = max + row.iter().fold(T::zero(), |a, &b| a + (b - max).exp()).ln();
    row.iter().map(|&v| v - lse).collect()
}

fn op_name<T>(op: &Op<T>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMulT(..) => "matmul",
        Op::AddRow(..) => "add_row",
        Op::SubRow(..) => "sub_row",
        Op::MulRow(..) => "mul_row",
        Op::DivRow(..) => "div_row",
        Op::ColMean(..) => "col_mean",
        Op::Square(..) => "square",
        Op::Sqrt(..) => "sqrt",
        Op::AddScalar(..) => "add_scalar",
        Op::Scale(..) => "scale",
        Op::Relu(..) => "relu",
        Op::LogSoftmax(..) => "log_softmax",
        Op::WeightedNll { .. } => "weighted_nll",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_values_and_grads() {
        let mut tape = Tape::new();
        let x = tape.leaf(m(&[&[1.0, 2.0], &[3.0, 4.0]]), true).unwrap();
        let w = tape.leaf(m(&[&[1.0, 0.0], &[0.5, -1.0], &[2.0, 1.0]]), true).unwrap();
        let y = tape.matmul_t(x, w).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, -1.5, 4.0, 3.0, -2.5, 10.0]);
        let mean = tape.col_mean(y).unwrap();
        assert_eq!(tape.value(mean).data(), &[2.0, -2.0, 7.0]);
    }

    #[test]
    fn row_broadcast_gradients() {
        // loss = nll(log_softmax((x - a) * g)); check d/da = -sum_rows d/d(x - a)
        let mut tape = Tape::new();
        let x = tape.leaf(m(&[&[1.0, 2.0, 0.0], &[0.5, -1.0, 3.0]]), true).unwrap();
        let a = tape.leaf(Tensor::vector(vec![0.1, 0.2, 0.3]), true).unwrap();
        let g = tape.leaf(Tensor::vector(vec![1.0, 2.0, 0.5]), true).unwrap();
        let c = tape.sub_row(x, a).unwrap();
        let y = tape.mul_row(c, g).unwrap();
        let lp = tape.log_softmax(y).unwrap();
        let loss = tape.weighted_nll(lp, &[0, 2], &[1.0, 1.0, 1.0]).unwrap();
        let grads = tape.backward(loss).unwrap();
        let gx = grads.get(x).unwrap().data();
        let ga = grads.get(a).unwrap().data();
        for j in 0..3 {
            assert!((ga[j] + gx[j] + gx[3 + j]).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_on_unknown_var_is_state_error() {
        let tape: Tape<f64> = Tape::new();
        assert!(matches!(tape.backward(Var(0)), Err(Error::State(_))));
    }

    #[test]
    fn loss_gradient_of_itself_is_one() {
        let mut tape = Tape::new();
        let x = tape.leaf(m(&[&[0.3, -0.2, 0.9]]), true).unwrap();
        let lp = tape.log_softmax(x).unwrap();
        let loss = tape.weighted_nll(lp, &[2], &[1.0, 1.0, 1.0]).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(loss).unwrap().data(), &[1.0]);
        // d(-log softmax_y)/dx = softmax - onehot
        let sm: Vec<f64> = log_softmax_row::<f64>(&[0.3, -0.2, 0.9]).iter().map(|v| v.exp()).collect();
        let gx = g.get(x).unwrap().data();
        assert!((gx[0] - sm[0]).abs() < 1e-12);
        assert!((gx[2] - (sm[2] - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn non_scalar_backward_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(m(&[&[1.0, 2.0]]), true).unwrap();
        assert!(matches!(tape.backward(x), Err(Error::Shape(_))));
    }

    #[test]
    fn nan_is_a_hard_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![-1.0f64]), true).unwrap();
        assert!(matches!(tape.sqrt(x), Err(Error::Numerics(_))));
        assert!(matches!(
            tape.leaf(Tensor::vector(vec![f64::NAN]), false),
            Err(Error::Numerics(_))
        ));
    }

    #[test]
    fn bad_label_is_precondition_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(m(&[&[0.0, 0.0, 0.0]]), true).unwrap();
        let lp = tape.log_softmax(x).unwrap();
        assert!(matches!(tape.weighted_nll(lp, &[3], &[1.0; 3]), Err(Error::Precondition(_))));
    }
}
