use super::{NnError, ParamRef, Params};
use crate::scalar::FloatScalar;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Input,
    Linear {
        w: ParamRef,
        b: Option<ParamRef>,
        x: Var,
    },
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Square(Var),
    LogSoftmax(Var),
    Scale(Var, T),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddN(Vec<Var>),
    Concat(Vec<Var>),
    Sum(Var),
    Pick(Var, usize),
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Vec<T>,
    op: Op<T>,
}

/// Records vector operations for one forward pass.
///
/// Values are computed eagerly. [`Tape::backward`] may be called once; a
/// second call without recording a fresh tape is an error.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
    relu_margin: Option<T>,
}

impl<T: FloatScalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: FloatScalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            consumed: false,
            relu_margin: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    /// Smallest |pre-activation| seen by any relu on this tape.
    pub fn relu_margin(&self) -> Option<T> {
        self.relu_margin
    }

    /// A constant; no gradient flows into it.
    pub fn input(&mut self, values: Vec<T>) -> Var {
        self.push(values, Op::Input)
    }

    pub fn constant(&mut self, value: T) -> Var {
        self.push(vec![value], Op::Input)
    }

    /// `W x + b` with `W` stored row-major as `[out, in]`.
    pub fn linear<P: Params<T> + ?Sized>(
        &mut self,
        params: &P,
        w: ParamRef,
        b: Option<ParamRef>,
        x: Var,
    ) -> Result<Var, NnError> {
        let wt = params.tensor(w);
        let (out, inp) = match wt.shape.as_slice() {
            [o, i] => (*o, *i),
            s => {
                return Err(NnError::ShapeMismatch(format!(
                    "weight '{}' must be 2-d, has shape {s:?}",
                    wt.name
                )))
            }
        };
        let xv = &self.nodes[x.0].value;
        if xv.len() != inp {
            return Err(NnError::ShapeMismatch(format!(
                "weight '{}' expects input of length {inp}, got {}",
                wt.name,
                xv.len()
            )));
        }
        let mut y = match b {
            Some(b) => {
                let bt = params.tensor(b);
                if bt.values.len() != out {
                    return Err(NnError::ShapeMismatch(format!(
                        "bias '{}' has length {}, expected {out}",
                        bt.name,
                        bt.values.len()
                    )));
                }
                bt.values.clone()
            }
            None => vec![T::zero(); out],
        };
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &wt.values[o * inp..(o + 1) * inp];
            *yo = row.iter().zip(xv).fold(*yo, |acc, (&a, &b)| acc + a * b);
        }
        Ok(self.push(y, Op::Linear { w, b, x }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let margin = xv
            .iter()
            .map(|v| v.abs())
            .fold(self.relu_margin, |m, v| Some(m.map_or(v, |m| m.min(v))));
        let y = xv.iter().map(|&v| v.max(T::zero())).collect();
        self.relu_margin = margin;
        self.push(y, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let y = self.nodes[x.0].value.iter().map(|v| v.tanh()).collect();
        self.push(y, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let y = self.nodes[x.0].value.iter().map(|v| v.exp()).collect();
        self.push(y, Op::Exp(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let y = self.nodes[x.0].value.iter().map(|&v| v * v).collect();
        self.push(y, Op::Square(x))
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let m = xv.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + xv.iter().fold(T::zero(), |acc, &v| acc + (v - m).exp()).ln();
        let y = xv.iter().map(|&v| v - lse).collect();
        self.push(y, Op::LogSoftmax(x))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let y = self.nodes[x.0].value.iter().map(|&v| v * c).collect();
        self.push(y, Op::Scale(x, c))
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Vec<T>, NnError> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.len() != bv.len() {
            return Err(NnError::ShapeMismatch(format!(
                "elementwise operands of length {} and {}",
                av.len(),
                bv.len()
            )));
        }
        Ok(av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let y = self.zip_with(a, b, |x, y| x + y)?;
        Ok(self.push(y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let y = self.zip_with(a, b, |x, y| x - y)?;
        Ok(self.push(y, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let y = self.zip_with(a, b, |x, y| x * y)?;
        Ok(self.push(y, Op::Mul(a, b)))
    }

    /// Elementwise sum of equally sized vectors.
    pub fn add_n(&mut self, xs: &[Var]) -> Result<Var, NnError> {
        let first = xs
            .first()
            .ok_or_else(|| NnError::ShapeMismatch("add_n of nothing".into()))?;
        let len = self.nodes[first.0].value.len();
        let mut y = vec![T::zero(); len];
        for x in xs {
            let xv = &self.nodes[x.0].value;
            if xv.len() != len {
                return Err(NnError::ShapeMismatch(format!(
                    "add_n operands of length {len} and {}",
                    xv.len()
                )));
            }
            for (a, &b) in y.iter_mut().zip(xv) {
                *a = *a + b;
            }
        }
        Ok(self.push(y, Op::AddN(xs.to_vec())))
    }

    pub fn concat(&mut self, xs: &[Var]) -> Var {
        let y = xs
            .iter()
            .flat_map(|x| self.nodes[x.0].value.iter().copied())
            .collect();
        self.push(y, Op::Concat(xs.to_vec()))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0]
            .value
            .iter()
            .fold(T::zero(), |acc, &v| acc + v);
        self.push(vec![s], Op::Sum(x))
    }

    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var, NnError> {
        let xv = &self.nodes[x.0].value;
        let v = *xv.get(index).ok_or_else(|| {
            NnError::ShapeMismatch(format!("pick {index} from length {}", xv.len()))
        })?;
        Ok(self.push(vec![v], Op::Pick(x, index)))
    }

    /// Accumulates d`loss`/d(parameter) into every reachable parameter's grad.
    pub fn backward<P: Params<T> + ?Sized>(
        &mut self,
        loss: Var,
        params: &mut P,
    ) -> Result<(), NnError> {
        if self.consumed {
            return Err(NnError::StaleTape);
        }
        let len = self.nodes[loss.0].value.len();
        if len != 1 {
            return Err(NnError::NotScalar(len));
        }
        if !self.nodes[loss.0].value[0].is_finite() {
            return Err(NnError::NonFinite("loss"));
        }
        self.consumed = true;

        let mut grads: Vec<Vec<T>> = Vec::with_capacity(loss.0 + 1);
        for node in &self.nodes[..=loss.0] {
            grads.push(vec![T::zero(); node.value.len()]);
        }
        grads[loss.0][0] = T::one();

        for idx in (0..=loss.0).rev() {
            let g = std::mem::take(&mut grads[idx]);
            if g.iter().all(|v| v.is_zero()) {
                continue;
            }
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Linear { w, b, x } => {
                    let xv = &self.nodes[x.0].value;
                    let inp = xv.len();
                    let wt = params.tensor_mut(*w);
                    if wt.grad.len() != wt.values.len() {
                        wt.zero_grad();
                    }
                    for (o, &go) in g.iter().enumerate() {
                        if go.is_zero() {
                            continue;
                        }
                        let row = &mut wt.grad[o * inp..(o + 1) * inp];
                        for (gw, &xi) in row.iter_mut().zip(xv) {
                            *gw = *gw + go * xi;
                        }
                    }
                    let wt = params.tensor(*w);
                    let gx = &mut grads[x.0];
                    for (o, &go) in g.iter().enumerate() {
                        if go.is_zero() {
                            continue;
                        }
                        let row = &wt.values[o * inp..(o + 1) * inp];
                        for (gxi, &wi) in gx.iter_mut().zip(row) {
                            *gxi = *gxi + go * wi;
                        }
                    }
                    if let Some(b) = b {
                        let bt = params.tensor_mut(*b);
                        if bt.grad.len() != bt.values.len() {
                            bt.zero_grad();
                        }
                        for (gb, &go) in bt.grad.iter_mut().zip(&g) {
                            *gb = *gb + go;
                        }
                    }
                }
                Op::Relu(x) => {
                    let xv = &self.nodes[x.0].value;
                    for ((gx, &gi), &xi) in grads[x.0].iter_mut().zip(&g).zip(xv) {
                        if xi > T::zero() {
                            *gx = *gx + gi;
                        }
                    }
                }
                Op::Tanh(x) => {
                    for ((gx, &gi), &y) in grads[x.0].iter_mut().zip(&g).zip(&node.value) {
                        *gx = *gx + gi * (T::one() - y * y);
                    }
                }
                Op::Exp(x) => {
                    for ((gx, &gi), &y) in grads[x.0].iter_mut().zip(&g).zip(&node.value) {
                        *gx = *gx + gi * y;
                    }
                }
                Op::Square(x) => {
                    let xv = &self.nodes[x.0].value;
                    let two = T::one() + T::one();
                    for ((gx, &gi), &xi) in grads[x.0].iter_mut().zip(&g).zip(xv) {
                        *gx = *gx + two * gi * xi;
                    }
                }
                Op::LogSoftmax(x) => {
                    // dy_i/dx_j = delta_ij - softmax_j
                    let total = g.iter().fold(T::zero(), |acc, &v| acc + v);
                    for ((gx, &gi), &y) in grads[x.0].iter_mut().zip(&g).zip(&node.value) {
                        *gx = *gx + gi - y.exp() * total;
                    }
                }
                Op::Scale(x, c) => {
                    for (gx, &gi) in grads[x.0].iter_mut().zip(&g) {
                        *gx = *gx + gi * *c;
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], &g, T::one());
                    accumulate(&mut grads[b.0], &g, T::one());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[a.0], &g, T::one());
                    accumulate(&mut grads[b.0], &g, -T::one());
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    for ((ga, &gi), &bi) in grads[a.0].iter_mut().zip(&g).zip(bv) {
                        *ga = *ga + gi * bi;
                    }
                    for ((gb, &gi), &ai) in grads[b.0].iter_mut().zip(&g).zip(av) {
                        *gb = *gb + gi * ai;
                    }
                }
                Op::AddN(xs) => {
                    for x in xs {
                        accumulate(&mut grads[x.0], &g, T::one());
                    }
                }
                Op::Concat(xs) => {
                    let mut offset = 0;
                    for x in xs {
                        let n = self.nodes[x.0].value.len();
                        accumulate(&mut grads[x.0], &g[offset..offset + n], T::one());
                        offset += n;
                    }
                }
                Op::Sum(x) => {
                    for gx in grads[x.0].iter_mut() {
                        *gx = *gx + g[0];
                    }
                }
                Op::Pick(x, i) => {
                    grads[x.0][*i] = grads[x.0][*i] + g[0];
                }
            }
        }
        Ok(())
    }
}

fn accumulate<T: FloatScalar>(dst: &mut [T], src: &[T], sign: T) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + sign * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamStore;

    fn identity_layer() -> (ParamStore<f64>, ParamRef, ParamRef) {
        let mut store = ParamStore::new();
        let w = store.add_zeros("w", vec![2, 2]);
        let b = store.add_zeros("b", vec![2]);
        store.tensors[w].values = vec![1.0, 0.0, 0.0, 1.0];
        (
            store,
            ParamRef { slot: 0, index: w },
            ParamRef { slot: 0, index: b },
        )
    }

    #[test]
    fn identity_forward_and_linear_chain_rule() {
        let (mut store, w, b) = identity_layer();
        let mut tape = Tape::new();
        let x = tape.input(vec![1.0, 2.0]);
        let y = tape.linear(&store, w, Some(b), x).unwrap();
        assert_eq!(tape.value(y), &[1.0, 2.0]);
        let loss = tape.sum(y);
        tape.backward(loss, &mut store).unwrap();
        // d(sum(Wx+b))/dW[o][i] = x[i]
        assert_eq!(store.tensors[w.index].grad, vec![1.0, 2.0, 1.0, 2.0]);
        assert_eq!(store.tensors[b.index].grad, vec![1.0, 1.0]);
    }

    #[test]
    fn relu_definition() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(vec![-1.0, 3.0]);
        let y = tape.relu(x);
        assert_eq!(tape.value(y), &[0.0, 3.0]);
        assert_eq!(tape.relu_margin(), Some(1.0));
    }

    #[test]
    fn zero_loss_gives_zero_gradients() {
        let (mut store, w, b) = identity_layer();
        let mut tape = Tape::new();
        let x = tape.input(vec![1.0, 2.0]);
        let y = tape.linear(&store, w, Some(b), x).unwrap();
        let z = tape.scale(y, 0.0);
        let loss = tape.sum(z);
        tape.backward(loss, &mut store).unwrap();
        assert!(store.tensors.iter().all(|t| t.grad.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn backward_twice_is_an_error() {
        let (mut store, w, b) = identity_layer();
        let mut tape = Tape::new();
        let x = tape.input(vec![1.0, 2.0]);
        let y = tape.linear(&store, w, Some(b), x).unwrap();
        let loss = tape.sum(y);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(tape.backward(loss, &mut store), Err(NnError::StaleTape));
        assert_eq!(tape.backward(y, &mut store), Err(NnError::StaleTape));
    }

    #[test]
    fn non_scalar_loss_and_shape_errors() {
        let (mut store, w, b) = identity_layer();
        let mut tape = Tape::new();
        let x = tape.input(vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            tape.linear(&store, w, Some(b), x),
            Err(NnError::ShapeMismatch(_))
        ));
        assert_eq!(tape.backward(x, &mut store), Err(NnError::NotScalar(3)));
        let y = tape.input(vec![1.0]);
        assert!(tape.add(x, y).is_err());
    }

    #[test]
    fn log_softmax_matches_direct_formula() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(vec![1.0, 0.0]);
        let y = tape.log_softmax(x);
        let e = std::f64::consts::E;
        assert!((tape.value(y)[0] - (e / (e + 1.0)).ln()).abs() < 1e-15);
        assert!((tape.value(y)[1] - (1.0 / (e + 1.0)).ln()).abs() < 1e-15);
    }
}
