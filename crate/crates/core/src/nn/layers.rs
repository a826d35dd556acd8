use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NnError, ParamRef, ParamStore, Params, Tape, Var};
use crate::scalar::FloatScalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply<T: FloatScalar>(self, tape: &mut Tape<T>, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// Output layer of an [`Mlp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Unnormalised scores over `n` discrete actions.
    Logits(usize),
    /// A single scalar estimate.
    Value,
}

impl Head {
    pub fn arity(self) -> usize {
        match self {
            Head::Logits(n) => n,
            Head::Value => 1,
        }
    }
}

/// Layer layout of a feedforward network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub head: Head,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, head: Head) -> Self {
        NetworkSpec {
            input_dim,
            hidden,
            activation: Activation::Relu,
            head,
        }
    }

    /// `(in, out)` of every dense layer in order.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim;
        for &h in self.hidden.iter().chain(std::iter::once(&self.head.arity())) {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }
}

/// Affine map `W x + b` whose tensors live in a [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: usize,
    pub bias: Option<usize>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new<T: FloatScalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_uniform(format!("{name}.weight"), vec![out_dim, in_dim], in_dim, rng);
        let bias = bias.then(|| store.add_zeros(format!("{name}.bias"), vec![out_dim]));
        Dense {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward<T: FloatScalar, P: Params<T> + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        params: &P,
        slot: usize,
        x: Var,
    ) -> Result<Var, NnError> {
        let w = ParamRef {
            slot,
            index: self.weight,
        };
        let b = self.bias.map(|index| ParamRef { slot, index });
        tape.linear(params, w, b, x)
    }

    pub fn tensor_indices(&self) -> Vec<usize> {
        std::iter::once(self.weight).chain(self.bias).collect()
    }
}

/// Feedforward network: hidden layers with one activation, then a linear head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: NetworkSpec,
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn new<T: FloatScalar, R: Rng + ?Sized>(
        spec: NetworkSpec,
        store: &mut ParamStore<T>,
        name: &str,
        rng: &mut R,
    ) -> Self {
        let layers = spec
            .layer_dims()
            .into_iter()
            .enumerate()
            .map(|(k, (i, o))| Dense::new(store, &format!("{name}.{k}"), i, o, true, rng))
            .collect();
        Mlp { spec, layers }
    }

    pub fn forward<T: FloatScalar, P: Params<T> + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        params: &P,
        slot: usize,
        x: Var,
    ) -> Result<Var, NnError> {
        let got = tape.value(x).len();
        if got != self.spec.input_dim {
            return Err(NnError::ShapeMismatch(format!(
                "network expects input of length {}, got {got}",
                self.spec.input_dim
            )));
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, params, slot, h)?;
            if k < last {
                h = self.spec.activation.apply(tape, h);
            }
        }
        Ok(h)
    }

    pub fn tensor_indices(&self) -> Vec<usize> {
        self.layers.iter().flat_map(Dense::tensor_indices).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layer_dims_chain() {
        let spec = NetworkSpec::new(14, vec![64], Head::Value);
        assert_eq!(spec.layer_dims(), vec![(14, 64), (64, 1)]);
        let spec = NetworkSpec::new(2, vec![8, 4], Head::Logits(2));
        assert_eq!(spec.layer_dims(), vec![(2, 8), (8, 4), (4, 2)]);
    }

    #[test]
    fn two_layer_net_matches_hand_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f64>::new();
        let net = Mlp::new(NetworkSpec::new(2, vec![2], Head::Value), &mut store, "n", &mut rng);
        // hidden = relu([[1, -1], [2, 0.5]] x + [0.1, -3]); out = [3, -2] . hidden + 0.25
        store.tensors[0].values = vec![1.0, -1.0, 2.0, 0.5];
        store.tensors[1].values = vec![0.1, -3.0];
        store.tensors[2].values = vec![3.0, -2.0];
        store.tensors[3].values = vec![0.25];
        let mut tape = Tape::new();
        let x = tape.input(vec![0.5, -1.5]);
        let y = net.forward(&mut tape, &store, 0, x).unwrap();
        // pre = [0.5 + 1.5 + 0.1, 1.0 - 0.75 - 3] = [2.1, -2.75] -> relu [2.1, 0]
        assert!((tape.scalar(y) - (3.0 * 2.1 + 0.25)).abs() < 1e-12);
    }

    #[test]
    fn input_dim_is_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f64>::new();
        let net = Mlp::new(NetworkSpec::new(3, vec![4], Head::Logits(2)), &mut store, "n", &mut rng);
        let mut tape = Tape::new();
        let x = tape.input(vec![0.0; 2]);
        assert!(net.forward(&mut tape, &store, 0, x).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::<f32>::new();
        let net = Mlp::new(NetworkSpec::new(2, vec![4], Head::Logits(2)), &mut store, "n", &mut rng);
        let mut tape = Tape::new();
        let x = tape.input(vec![0.5f32, 0.25]);
        let y = net.forward(&mut tape, &store, 0, x).unwrap();
        assert_eq!(tape.value(y).len(), 2);
        assert!(tape.value(y).iter().all(|v| v.is_finite()));
    }
}
