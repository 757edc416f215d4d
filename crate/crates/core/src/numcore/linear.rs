use rand::Rng;

use super::{NumError, ParamId, ParamStore, Tape, Tensor, Var};

/// Affine map `x·W + b` whose parameters live in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Uniform `±1/√fan_in` initialization for weights and bias.
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-bound..bound)).collect::<Vec<_>>();
        let w = Tensor::matrix(fan_in, fan_out, draw(fan_in * fan_out)).expect("finite draws");
        let b = Tensor::vector(draw(fan_out)).expect("finite draws");
        Self::register(store, name, w, b)
    }

    pub fn zeros(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Self {
        Self::register(store, name, Tensor::zeros(&[fan_in, fan_out]), Tensor::zeros(&[fan_out]))
    }

    fn register(store: &mut ParamStore, name: &str, w: Tensor, b: Tensor) -> Self {
        let (fan_in, fan_out) = (w.rows(), w.cols());
        let weight = store.add(format!("{name}.weight"), w);
        let bias = store.add(format!("{name}.bias"), b);
        Linear { weight, bias, fan_in, fan_out }
    }

    /// Recovers a layer from the two consecutive tensors at `weight`, `weight+1`.
    pub fn from_store(store: &ParamStore, weight: usize) -> Result<Self, NumError> {
        if weight + 1 >= store.len() {
            return Err(NumError::Index(format!("no linear layer at parameter {weight}")));
        }
        let (w, b) = (store.get(ParamId(weight)), store.get(ParamId(weight + 1)));
        if w.rank() != 2 || b.shape() != [w.cols()] {
            return Err(NumError::Dimension(format!("linear layer shapes {:?} / {:?}", w.shape(), b.shape())));
        }
        Ok(Linear { weight: ParamId(weight), bias: ParamId(weight + 1), fan_in: w.rows(), fan_out: w.cols() })
    }

    pub fn forward(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var, NumError> {
        let y = tape.matmul(x, bound[self.weight.index()])?;
        tape.add_row(y, bound[self.bias.index()])
    }
}
