//! Reverse-mode differentiation over a linear tape.
//!
//! Nodes are appended in evaluation order, so iterating the tape backwards
//! is a valid topological order and every node is visited exactly once.

use crate::error::{Error, Result};
use crate::linalg::{pinv, Mat};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<R: Real = f32> {
    names: Vec<String>,
    values: Vec<Tensor<R>>,
}

impl<R: Real> Default for ParamStore<R> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
        }
    }
}

impl<R: Real> ParamStore<R> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<R>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<R> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<R> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<R>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values(&self) -> &[Tensor<R>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor<R>] {
        &mut self.values
    }

    pub fn cast<S: Real>(&self) -> ParamStore<S> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
        }
    }
}

/// Gradients indexed by [`ParamId`], shaped like their parameters.
#[derive(Debug, Clone)]
pub struct Grads<R: Real = f32> {
    pub values: Vec<Tensor<R>>,
}

impl<R: Real> Grads<R> {
    pub fn get(&self, id: ParamId) -> &Tensor<R> {
        &self.values[id.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<R: Real> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, R),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Abs(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    GatherRows(Var, Vec<usize>),
    SliceCols(Var, usize),
    Lstsq { a: Var, b: Var, pinv: Mat },
    ScalarFn { input: Var, grad: Tensor<R> },
}

#[derive(Debug, Clone)]
struct Node<R: Real> {
    value: Tensor<R>,
    op: Op<R>,
}

#[derive(Debug, Clone)]
pub struct Tape<R: Real = f32> {
    nodes: Vec<Node<R>>,
}

impl<R: Real> Default for Tape<R> {
    fn default() -> Self {
        Self { nodes: Vec::new() }
    }
}

fn same_shape<R: Real>(a: &Tensor<R>, b: &Tensor<R>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl<R: Real> Tape<R> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<R>, op: Op<R>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<R> {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Tensor<R>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore<R>, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// `a + bias` with `bias` (length `cols`) added to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(bias));
        let c = av.cols();
        if bv.len() != c {
            return Err(Error::Shape(format!(
                "bias of {} values for {} columns",
                bv.len(),
                c
            )));
        }
        let mut out = av.clone();
        for row in out.data_mut().chunks_mut(c.max(1)) {
            for (o, &b) in row.iter_mut().zip(bv.data()) {
                *o = *o + b;
            }
        }
        Ok(self.push(out, Op::AddRow(a, bias)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "add")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "sub")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "mul")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: R) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: R) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.push(v, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > R::zero() { x } else { R::zero() });
        self.push(v, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(R::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| R::one() / (R::one() + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(R::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(R::abs);
        self.push(v, Op::Abs(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.mul(a, a)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let n = R::of(t.len().max(1) as f64);
        let v = Tensor::scalar(t.sum() / n);
        self.push(v, Op::Mean(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).clone().reshape(shape)?;
        Ok(self.push(v, Op::Reshape(a)))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= t.rows()) {
            return Err(Error::Shape(format!("row {bad} of {}", t.rows())));
        }
        let v = t.gather_rows(idx);
        Ok(self.push(v, Op::GatherRows(a, idx.to_vec())))
    }

    /// Columns `start..end` of a `[rows, cols]` view.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        let (m, c) = (t.rows(), t.cols());
        if start > end || end > c {
            return Err(Error::Shape(format!("columns {start}..{end} of {c}")));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for i in 0..m {
            data.extend_from_slice(&t.row(i)[start..end]);
        }
        let v = Tensor::new(vec![m, w], data)?;
        Ok(self.push(v, Op::SliceCols(a, start)))
    }

    /// Minimum-norm least-squares solution `X = A⁺B`, computed in `f64`.
    pub fn lstsq(&mut self, a: Var, b: Var) -> Result<Var> {
        let am = to_mat(self.value(a));
        let bm = to_mat(self.value(b));
        if am.rows() != bm.rows() || am.rows() == 0 {
            return Err(Error::Shape(format!(
                "lstsq: A is {}x{}, B is {}x{}",
                am.rows(),
                am.cols(),
                bm.rows(),
                bm.cols()
            )));
        }
        let p = pinv(&am)?;
        let x = p.matmul(&bm)?;
        Ok(self.push(from_mat(&x), Op::Lstsq { a, b, pinv: p }))
    }

    /// A scalar computed outside the tape from `input`, with its gradient
    /// with respect to `input` supplied by the caller.
    pub fn scalar_fn(&mut self, input: Var, value: R, grad: Tensor<R>) -> Result<Var> {
        same_shape(self.value(input), &grad, "scalar_fn gradient")?;
        Ok(self.push(Tensor::scalar(value), Op::ScalarFn { input, grad }))
    }

    /// Gradients of the scalar `loss` with respect to every parameter in
    /// `store`; parameters the loss does not depend on get zeros.
    pub fn backward(&self, loss: Var, store: &ParamStore<R>) -> Result<Grads<R>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        if !lv.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let mut adj: Vec<Option<Tensor<R>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::full(lv.shape(), R::one()));
        let mut grads: Vec<Tensor<R>> = store.values().iter().map(|p| Tensor::zeros(p.shape())).collect();

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient at tape node {i}")));
            }
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    let slot = grads
                        .get_mut(id.0)
                        .ok_or_else(|| Error::Shape(format!("unknown parameter {}", id.0)))?;
                    slot.add_assign(&g);
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul(&self.value(*b).transpose())?;
                    let gb = self.value(*a).transpose().matmul(&g)?;
                    accumulate(&mut adj, *a, ga.reshape(self.value(*a).shape())?);
                    accumulate(&mut adj, *b, gb.reshape(self.value(*b).shape())?);
                }
                Op::AddRow(a, bias) => {
                    let c = g.cols();
                    let mut gb = vec![R::zero(); c];
                    for row in g.data().chunks(c.max(1)) {
                        for (s, &x) in gb.iter_mut().zip(row) {
                            *s = *s + x;
                        }
                    }
                    let gb = Tensor::new(self.value(*bias).shape().to_vec(), gb)?;
                    accumulate(&mut adj, *a, g);
                    accumulate(&mut adj, *bias, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *b, g.map(|x| -x));
                    accumulate(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y)?;
                    let gb = g.zip_map(self.value(*a), |x, y| x * y)?;
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::Scale(a, s) => accumulate(&mut adj, *a, g.map(|x| x * *s)),
                Op::AddScalar(a) => accumulate(&mut adj, *a, g),
                Op::Relu(a) => {
                    let ga = g.zip_map(self.value(*a), |x, v| if v > R::zero() { x } else { R::zero() })?;
                    accumulate(&mut adj, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = g.zip_map(&node.value, |x, y| x * (R::one() - y * y))?;
                    accumulate(&mut adj, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, |x, y| x * y * (R::one() - y))?;
                    accumulate(&mut adj, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = g.zip_map(&node.value, |x, y| x * y)?;
                    accumulate(&mut adj, *a, ga);
                }
                Op::Abs(a) => {
                    let ga = g.zip_map(self.value(*a), |x, v| {
                        if v > R::zero() {
                            x
                        } else if v < R::zero() {
                            -x
                        } else {
                            R::zero()
                        }
                    })?;
                    accumulate(&mut adj, *a, ga);
                }
                Op::Sum(a) => {
                    let s = g.data()[0];
                    accumulate(&mut adj, *a, Tensor::full(self.value(*a).shape(), s));
                }
                Op::Mean(a) => {
                    let t = self.value(*a);
                    let s = g.data()[0] / R::of(t.len().max(1) as f64);
                    accumulate(&mut adj, *a, Tensor::full(t.shape(), s));
                }
                Op::Reshape(a) => {
                    let ga = g.reshape(self.value(*a).shape())?;
                    accumulate(&mut adj, *a, ga);
                }
                Op::GatherRows(a, idx) => {
                    let t = self.value(*a);
                    let c = t.cols();
                    let mut ga = Tensor::zeros(t.shape());
                    for (k, &r) in idx.iter().enumerate() {
                        let src = &g.data()[k * c..(k + 1) * c];
                        let dst = &mut ga.data_mut()[r * c..(r + 1) * c];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d = *d + s;
                        }
                    }
                    accumulate(&mut adj, *a, ga);
                }
                Op::SliceCols(a, start) => {
                    let t = self.value(*a);
                    let (m, c) = (t.rows(), t.cols());
                    let w = g.cols();
                    let mut ga = Tensor::zeros(t.shape());
                    for i in 0..m {
                        let dst = &mut ga.data_mut()[i * c + start..i * c + start + w];
                        dst.copy_from_slice(g.row(i));
                    }
                    accumulate(&mut adj, *a, ga);
                }
                Op::Lstsq { a, b, pinv } => {
                    let (ga, gb) = lstsq_backward(&to_mat(self.value(*a)), &to_mat(self.value(*b)), pinv, &to_mat(&g))?;
                    accumulate(&mut adj, *a, from_mat(&ga).reshape(self.value(*a).shape())?);
                    accumulate(&mut adj, *b, from_mat(&gb).reshape(self.value(*b).shape())?);
                }
                Op::ScalarFn { input, grad } => {
                    let s = g.data()[0];
                    accumulate(&mut adj, *input, grad.map(|x| x * s));
                }
            }
        }
        for (k, gr) in grads.iter().enumerate() {
            if !gr.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {}", store.name(ParamId(k)))));
            }
        }
        Ok(Grads { values: grads })
    }
}

fn accumulate<R: Real>(adj: &mut [Option<Tensor<R>>], v: Var, g: Tensor<R>) {
    match &mut adj[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn to_mat<R: Real>(t: &Tensor<R>) -> Mat {
    Mat::from_vec(t.rows(), t.cols(), t.data().iter().map(|v| v.as_f64()).collect())
        .expect("rows*cols equals the tensor length")
}

pub(crate) fn from_mat<R: Real>(m: &Mat) -> Tensor<R> {
    Tensor::new(vec![m.rows(), m.cols()], m.data().iter().map(|&v| R::of(v)).collect())
        .expect("matrix dimensions are consistent")
}

/// Adjoints of `X = A⁺B` for `A` (m×k), `B` (m×n) given `X̄` (k×n), valid
/// where the rank of `A` is locally constant.
fn lstsq_backward(a: &Mat, b: &Mat, p: &Mat, gx: &Mat) -> Result<(Mat, Mat)> {
    let pt = p.transpose();
    let gb = pt.matmul(gx)?;
    // Adjoint of A⁺ (k×m).
    let gp = gx.matmul(&b.transpose())?;
    let gpt = gp.transpose();
    let m = a.rows();
    let k = a.cols();
    let proj_col = Mat::identity(m).sub(&a.matmul(p)?)?; // I − AA⁺
    let proj_row = Mat::identity(k).sub(&p.matmul(a)?)?; // I − A⁺A
    let t1 = pt.matmul(&gp)?.matmul(&pt)?.scale(-1.0);
    let t2 = proj_col.matmul(&gpt)?.matmul(p)?.matmul(&pt)?;
    let t3 = pt.matmul(p)?.matmul(&gpt)?.matmul(&proj_row)?;
    let ga = t1.add(&t2)?.add(&t3)?;
    Ok((ga, gb))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_has_derivative_two_x() {
        let mut store = ParamStore::<f64>::new();
        let x = store.add("x", Tensor::scalar(3.0));
        let mut tape = Tape::new();
        let xv = tape.param(&store, x);
        let y = tape.mul(xv, xv).unwrap();
        let g = tape.backward(y, &store).unwrap();
        assert_eq!(g.get(x).data(), &[6.0]);
    }

    #[test]
    fn unreached_parameter_gets_zero() {
        let mut store = ParamStore::<f32>::new();
        let x = store.add("x", Tensor::scalar(2.0));
        let p = store.add("p", Tensor::zeros(&[2, 3]));
        let mut tape = Tape::new();
        let xv = tape.param(&store, x);
        let y = tape.scale(xv, 4.0);
        let g = tape.backward(y, &store).unwrap();
        assert_eq!(g.get(x).data(), &[4.0]);
        assert_eq!(g.get(p), &Tensor::zeros(&[2, 3]));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let store = ParamStore::<f32>::new();
        let mut tape = Tape::new();
        let v = tape.leaf(Tensor::zeros(&[2]));
        assert!(matches!(tape.backward(v, &store), Err(Error::Shape(_))));
    }

    #[test]
    fn nan_loss_is_rejected() {
        let mut store = ParamStore::<f32>::new();
        let x = store.add("x", Tensor::scalar(f32::NAN));
        let mut tape = Tape::new();
        let v = tape.param(&store, x);
        assert!(matches!(tape.backward(v, &store), Err(Error::NonFinite(_))));
    }

    #[test]
    fn gather_rows_scatters_back() {
        let mut store = ParamStore::<f64>::new();
        let x = store.add("x", Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap());
        let mut tape = Tape::new();
        let xv = tape.param(&store, x);
        let g = tape.gather_rows(xv, &[2, 0, 2]).unwrap();
        let s = tape.sum(g);
        let grads = tape.backward(s, &store).unwrap();
        assert_eq!(grads.get(x).data(), &[1.0, 0.0, 2.0]);
    }
}
