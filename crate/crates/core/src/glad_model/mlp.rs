use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected scalar-output network: `tanh` on hidden layers, `sigmoid`
/// on the output.
///
/// Layer `l` maps `dims[l]` inputs to `dims[l + 1]` outputs with a row-major
/// `dims[l + 1] × dims[l]` weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMlp", into = "RawMlp")]
pub struct Mlp {
    dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawMlp {
    dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl TryFrom<RawMlp> for Mlp {
    type Error = Error;
    fn try_from(raw: RawMlp) -> Result<Self> {
        Mlp::new(raw.dims, raw.weights, raw.biases)
    }
}

impl From<Mlp> for RawMlp {
    fn from(m: Mlp) -> Self {
        RawMlp { dims: m.dims, weights: m.weights, biases: m.biases }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Mlp {
    pub fn new(dims: Vec<usize>, weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&n| n == 0) {
            return Err(Error::ShapeError(format!("invalid layer dims {dims:?}")));
        }
        if *dims.last().unwrap() != 1 {
            return Err(Error::ShapeError(format!("network output must be scalar, dims {dims:?}")));
        }
        let layers = dims.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::ShapeError(format!(
                "{layers} layers need {layers} weight and bias blocks, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..layers {
            if weights[l].len() != dims[l] * dims[l + 1] || biases[l].len() != dims[l + 1] {
                return Err(Error::ShapeError(format!("layer {l} does not match dims {dims:?}")));
            }
        }
        if weights.iter().chain(&biases).flatten().any(|v| !v.is_finite()) {
            return Err(Error::ShapeError("network parameters must be finite".into()));
        }
        Ok(Self { dims, weights, biases })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let weights = dims.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = dims[1..].iter().map(|&n| vec![0.0; n]).collect();
        Self::new(dims.to_vec(), weights, biases)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn xavier(dims: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        for (l, w) in net.weights.iter_mut().enumerate() {
            let bound = (6.0 / (dims[l] + dims[l + 1]) as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.gen_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    /// Zero weights with the output bias set to `logit(value)`, so the
    /// network outputs `value` (up to rounding) for every input.
    pub fn constant(dims: &[usize], value: f64) -> Result<Self> {
        if !(value > 0.0 && value < 1.0) {
            return Err(Error::InvalidConfig(format!("constant output must lie in (0,1), got {value}")));
        }
        let mut net = Self::zeros(dims)?;
        net.biases.last_mut().unwrap()[0] = (value / (1.0 - value)).ln();
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    /// Appends parameters layer by layer: weights (row-major) then biases.
    pub fn extend_flat(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
    }

    /// Overwrites parameters from `flat` in [`Mlp::extend_flat`] order and
    /// returns the unread tail.
    pub fn read_flat<'a>(&mut self, flat: &'a [f64]) -> Result<&'a [f64]> {
        if flat.len() < self.num_params() {
            return Err(Error::ShapeError(format!(
                "{} values for a network with {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut rest = flat;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (head, tail) = rest.split_at(w.len());
            w.copy_from_slice(head);
            let (head, tail) = tail.split_at(b.len());
            b.copy_from_slice(head);
            rest = tail;
        }
        Ok(rest)
    }

    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        if input.len() != self.input_dim() {
            return Err(Error::ShapeError(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        Ok(self.eval(input, &mut Vec::new()))
    }

    /// Forward pass that leaves every layer's activation in `acts`
    /// (`acts[0]` is the input, the last entry holds the scalar output).
    pub(crate) fn eval(&self, input: &[f64], acts: &mut Vec<Vec<f64>>) -> f64 {
        acts.clear();
        acts.push(input.to_vec());
        let last = self.num_layers() - 1;
        for l in 0..=last {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let x = &acts[l];
            let w = &self.weights[l];
            let mut out: Vec<f64> = (0..n_out)
                .map(|o| self.biases[l][o] + (0..n_in).map(|i| w[o * n_in + i] * x[i]).sum::<f64>())
                .collect();
            for v in out.iter_mut() {
                *v = if l == last { sigmoid(*v) } else { v.tanh() };
            }
            acts.push(out);
        }
        acts[last + 1][0]
    }

    /// Back-propagates `grad_out = ∂L/∂output` through activations recorded
    /// by [`Mlp::eval`]. Parameter gradients are accumulated into `grad`
    /// (flat layout) and the input gradient is written to `grad_input`.
    pub(crate) fn backprop(&self, acts: &[Vec<f64>], grad_out: f64, grad: &mut [f64], grad_input: &mut [f64]) {
        let layers = self.num_layers();
        let offsets = self.layer_offsets();
        let y = acts[layers][0];
        let mut delta = vec![grad_out * y * (1.0 - y)];
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let x = &acts[l];
            let w = &self.weights[l];
            let (w_off, b_off) = offsets[l];
            for o in 0..n_out {
                for i in 0..n_in {
                    grad[w_off + o * n_in + i] += delta[o] * x[i];
                }
                grad[b_off + o] += delta[o];
            }
            let mut back: Vec<f64> = (0..n_in).map(|i| (0..n_out).map(|o| w[o * n_in + i] * delta[o]).sum()).collect();
            if l == 0 {
                grad_input.copy_from_slice(&back);
            } else {
                for (b, a) in back.iter_mut().zip(x) {
                    *b *= 1.0 - a * a;
                }
                delta = back;
            }
        }
    }

    /// `(weight offset, bias offset)` of each layer in the flat layout.
    fn layer_offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| {
                let entry = (off, off + w.len());
                off += w.len() + b.len();
                entry
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_half() {
        let net = Mlp::zeros(&[3, 3, 3, 3, 1]).unwrap();
        assert_eq!(net.forward(&[1.0, -50.0, 3.0]).unwrap(), 0.5);
        assert_eq!(net.num_params(), 40);
    }

    #[test]
    fn single_layer_closed_form() {
        let net = Mlp::new(vec![1, 1], vec![vec![0.0]], vec![vec![3f64.ln()]]).unwrap();
        assert!((net.forward(&[7.0]).unwrap() - 0.75).abs() < 1e-15);
        let net = Mlp::new(vec![1, 1], vec![vec![2.0]], vec![vec![-1.0]]).unwrap();
        assert!((net.forward(&[0.25]).unwrap() - 1.0 / (1.0 + 0.5f64.exp())).abs() < 1e-15);
    }

    #[test]
    fn matches_independent_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::xavier(&[3, 3, 3, 3, 1], &mut rng).unwrap();
        for _ in 0..10 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            // Straight matrix-vector products on the raw blocks.
            let mut a = x.clone();
            for l in 0..4 {
                let rows = net.dims()[l + 1];
                let z: Vec<f64> = (0..rows)
                    .map(|r| {
                        let row = &net.weights()[l][r * a.len()..(r + 1) * a.len()];
                        row.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>() + net.biases()[l][r]
                    })
                    .collect();
                a = if l == 3 { z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect() } else { z.iter().map(|v| v.tanh()).collect() };
            }
            assert!((net.forward(&x).unwrap() - a[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn output_stays_in_open_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::xavier(&[2, 3, 1], &mut rng).unwrap();
        for x in [-1e6, -10.0, 0.0, 10.0, 1e6] {
            let y = net.forward(&[x, 0.5]).unwrap();
            assert!(y > 0.0 && y < 1.0);
        }
        let c = Mlp::constant(&[2, 3, 1], 0.3).unwrap();
        assert!((c.forward(&[123.0, -4.0]).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Mlp::zeros(&[3]).is_err());
        assert!(Mlp::zeros(&[3, 2]).is_err());
        assert!(Mlp::new(vec![2, 1], vec![vec![1.0]], vec![vec![0.0]]).is_err());
        let net = Mlp::zeros(&[2, 3, 1]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::ShapeError(_))));
    }

    #[test]
    fn flat_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Mlp::xavier(&[2, 3, 1], &mut rng).unwrap();
        let mut flat = Vec::new();
        net.extend_flat(&mut flat);
        flat.push(42.0);
        let mut other = Mlp::zeros(&[2, 3, 1]).unwrap();
        let rest = other.read_flat(&flat).unwrap();
        assert_eq!(rest, &[42.0]);
        assert_eq!(other, net);
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::xavier(&[3, 3, 3, 3, 1], &mut rng).unwrap();
        let x = [0.3, -1.2, 0.7];
        let mut acts = Vec::new();
        net.eval(&x, &mut acts);
        let mut grad = vec![0.0; net.num_params()];
        let mut gin = vec![0.0; 3];
        net.backprop(&acts, 1.0, &mut grad, &mut gin);

        let mut flat = Vec::new();
        net.extend_flat(&mut flat);
        let h = 1e-6;
        for k in 0..flat.len() {
            let mut plus = net.clone();
            let mut p = flat.clone();
            p[k] += h;
            plus.read_flat(&p).unwrap();
            let mut minus = net.clone();
            p[k] -= 2.0 * h;
            minus.read_flat(&p).unwrap();
            let fd = (plus.forward(&x).unwrap() - minus.forward(&x).unwrap()) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-8, "param {k}: {fd} vs {}", grad[k]);
        }
        for i in 0..3 {
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let fd = (net.forward(&xp).unwrap() - net.forward(&xm).unwrap()) / (2.0 * h);
            assert!((fd - gin[i]).abs() < 1e-8);
        }
    }
}
