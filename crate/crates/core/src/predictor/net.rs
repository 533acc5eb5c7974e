use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::PredictorError;

pub const INPUTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Per-feature min/max scaling to `[0, 1]` for the inputs and the label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub input_min: [f64; INPUTS],
    pub input_max: [f64; INPUTS],
    pub label_min: f64,
    pub label_max: f64,
}

fn span(lo: f64, hi: f64) -> f64 {
    let s = hi - lo;
    if s > 1e-12 {
        s
    } else {
        1.0
    }
}

impl Normalizer {
    pub fn identity() -> Self {
        Normalizer {
            input_min: [0.0; INPUTS],
            input_max: [1.0; INPUTS],
            label_min: 0.0,
            label_max: 1.0,
        }
    }

    pub fn fit(rows: impl IntoIterator<Item = ([f64; INPUTS], f64)>) -> Self {
        let mut n = Normalizer {
            input_min: [f64::INFINITY; INPUTS],
            input_max: [f64::NEG_INFINITY; INPUTS],
            label_min: f64::INFINITY,
            label_max: f64::NEG_INFINITY,
        };
        for (x, y) in rows {
            for (i, v) in x.into_iter().enumerate() {
                n.input_min[i] = n.input_min[i].min(v);
                n.input_max[i] = n.input_max[i].max(v);
            }
            n.label_min = n.label_min.min(y);
            n.label_max = n.label_max.max(y);
        }
        n
    }

    pub fn is_valid(&self) -> bool {
        let finite = self
            .input_min
            .iter()
            .chain(&self.input_max)
            .chain([&self.label_min, &self.label_max])
            .all(|v| v.is_finite());
        finite
            && (0..INPUTS).all(|i| self.input_min[i] <= self.input_max[i])
            && self.label_min <= self.label_max
    }

    /// Scales `x`, clamping to the fitted range. The flag reports clamping.
    pub fn inputs(&self, x: &[f64; INPUTS]) -> ([f64; INPUTS], bool) {
        let mut out = [0.0; INPUTS];
        let mut clamped = false;
        for i in 0..INPUTS {
            let v = x[i].clamp(self.input_min[i], self.input_max[i]);
            clamped |= v != x[i];
            out[i] = (v - self.input_min[i]) / span(self.input_min[i], self.input_max[i]);
        }
        (out, clamped)
    }

    pub fn label(&self, y: f64) -> f64 {
        (y - self.label_min) / self.label_span()
    }

    pub fn denormalize_label(&self, y: f64) -> f64 {
        self.label_min + y * self.label_span()
    }

    pub fn label_span(&self) -> f64 {
        span(self.label_min, self.label_max)
    }
}

/// Fully connected regression network with hidden-layer activations and a
/// linear scalar output. Parameters live in one flat buffer, layer by layer:
/// row-major weights (`out x in`) followed by biases.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionNet {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
    pub normalizer: Normalizer,
}

/// Activations of every layer for one sample, reused across calls.
#[derive(Debug, Default)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

pub(crate) fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl RegressionNet {
    /// Uniform initialization in `+-1/sqrt(fan_in)` for weights and biases.
    pub fn new<R: Rng + ?Sized>(
        hidden: &[usize],
        activation: Activation,
        normalizer: Normalizer,
        rng: &mut R,
    ) -> Self {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(INPUTS);
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut params = Vec::with_capacity(param_count(&sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] * w[1] + w[1]) {
                params.push(rng.random_range(-bound..bound));
            }
        }
        RegressionNet {
            sizes,
            activation,
            params,
            normalizer,
        }
    }

    pub fn from_parts(
        sizes: Vec<usize>,
        activation: Activation,
        params: Vec<f64>,
        normalizer: Normalizer,
    ) -> Result<Self, PredictorError> {
        if sizes.len() < 2 || sizes[0] != INPUTS || *sizes.last().unwrap() != 1 {
            return Err(PredictorError::ModelFormat(format!(
                "layer sizes {sizes:?} must start at {INPUTS} and end at 1"
            )));
        }
        if sizes.contains(&0) {
            return Err(PredictorError::ModelFormat("empty layer".into()));
        }
        if params.len() != param_count(&sizes) {
            return Err(PredictorError::ModelFormat(format!(
                "expected {} parameters, found {}",
                param_count(&sizes),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(PredictorError::ModelFormat("non-finite weight".into()));
        }
        if !normalizer.is_valid() {
            return Err(PredictorError::ModelFormat("degenerate normalizer".into()));
        }
        Ok(RegressionNet {
            sizes,
            activation,
            params,
            normalizer,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Output for an already-normalized input, in normalized label units.
    pub fn forward(&self, x: &[f64; INPUTS], ws: &mut Workspace) -> f64 {
        let layers = self.sizes.len();
        ws.acts.resize_with(layers, Vec::new);
        ws.acts[0].clear();
        ws.acts[0].extend_from_slice(x);
        let mut off = 0;
        for l in 1..layers {
            let (n_in, n_out) = (self.sizes[l - 1], self.sizes[l]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let (prev, rest) = ws.acts.split_at_mut(l);
            let input = &prev[l - 1];
            let out = &mut rest[0];
            out.clear();
            let last = l == layers - 1;
            for j in 0..n_out {
                let row = &w[j * n_in..(j + 1) * n_in];
                let z = b[j] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                out.push(if last { z } else { self.activation.apply(z) });
            }
        }
        ws.acts[layers - 1][0]
    }

    /// Adds `scale * d(0.5 * (f(x) - y)^2)/d(params)` into `grad`, after a
    /// forward pass. Returns the residual `f(x) - y`.
    fn backward(
        &self,
        x: &[f64; INPUTS],
        y: f64,
        scale: f64,
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> f64 {
        let residual = self.forward(x, ws) - y;
        let layers = self.sizes.len();
        ws.deltas.resize_with(layers, Vec::new);
        ws.deltas[layers - 1].clear();
        ws.deltas[layers - 1].push(residual * scale);

        // Offsets of each layer's parameter block.
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }

        for l in (1..layers).rev() {
            let (n_in, n_out) = (self.sizes[l - 1], self.sizes[l]);
            let off = offsets[l - 1];
            let (before, after) = ws.deltas.split_at_mut(l);
            let delta = &after[0];
            let input = &ws.acts[l - 1];
            {
                let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for j in 0..n_out {
                    let d = delta[j];
                    gb[j] += d;
                    let row = &mut gw[j * n_in..(j + 1) * n_in];
                    for (g, a) in row.iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
            }
            if l > 1 {
                let w = &self.params[off..off + n_in * n_out];
                let prev = &mut before[l - 1];
                prev.clear();
                prev.resize(n_in, 0.0);
                for j in 0..n_out {
                    let d = delta[j];
                    let row = &w[j * n_in..(j + 1) * n_in];
                    for (p, wv) in prev.iter_mut().zip(row) {
                        *p += d * wv;
                    }
                }
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= self.activation.derivative(*a);
                }
            }
        }
        residual
    }

    /// Mean squared error over `batch` (normalized units) and its gradient,
    /// written into `grad` (overwritten).
    pub fn loss_and_grad(
        &self,
        batch: &[([f64; INPUTS], f64)],
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let n = batch.len() as f64;
        // d/dp mean((f - y)^2) = (2/n) sum (f - y) df/dp
        let scale = 2.0 / n;
        let mut sse = 0.0;
        for (x, y) in batch {
            let r = self.backward(x, *y, scale, grad, ws);
            sse += r * r;
        }
        sse / n
    }

    pub fn loss(&self, batch: &[([f64; INPUTS], f64)], ws: &mut Workspace) -> f64 {
        let sse: f64 = batch
            .iter()
            .map(|(x, y)| {
                let r = self.forward(x, ws) - y;
                r * r
            })
            .sum();
        sse / batch.len() as f64
    }

    /// Prediction in label units for raw inputs. Inputs outside the fitted
    /// range are clamped; the flag reports it.
    pub fn predict_raw(&self, x: &[f64; INPUTS], ws: &mut Workspace) -> (f64, bool) {
        let (xn, clamped) = self.normalizer.inputs(x);
        (
            self.normalizer.denormalize_label(self.forward(&xn, ws)),
            clamped,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_layout() {
        assert_eq!(
            param_count(&[3, 64, 64, 1]),
            3 * 64 + 64 + 64 * 64 + 64 + 64 + 1
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = RegressionNet::new(&[4, 2], Activation::Relu, Normalizer::identity(), &mut rng);
        assert_eq!(net.sizes(), &[3, 4, 2, 1]);
        assert_eq!(net.params().len(), param_count(&[3, 4, 2, 1]));
        let bound = 1.0 / 3f64.sqrt();
        assert!(net.params()[..16].iter().all(|p| p.abs() <= bound));
    }

    #[test]
    fn hand_computed_forward() {
        // 3 -> 1 (relu) -> 1, weights chosen by hand.
        let params = vec![1.0, -2.0, 0.5, 0.25, /* out */ 3.0, -1.0];
        let net = RegressionNet::from_parts(
            vec![3, 1, 1],
            Activation::Relu,
            params,
            Normalizer::identity(),
        )
        .unwrap();
        let mut ws = Workspace::default();
        // hidden = relu(1 - 2*0.5 + 0.5*2 + 0.25) = 1.25; out = 3*1.25 - 1
        assert_eq!(net.forward(&[1.0, 0.5, 2.0], &mut ws), 2.75);
        // hidden pre-activation negative -> 0 -> output is the bias
        assert_eq!(net.forward(&[0.0, 1.0, 0.0], &mut ws), -1.0);
    }

    #[test]
    fn from_parts_rejects_bad_shapes() {
        let n = Normalizer::identity();
        assert!(
            RegressionNet::from_parts(vec![2, 1], Activation::Relu, vec![0.0; 3], n.clone())
                .is_err()
        );
        assert!(
            RegressionNet::from_parts(vec![3, 1], Activation::Relu, vec![0.0; 3], n.clone())
                .is_err()
        );
        assert!(RegressionNet::from_parts(
            vec![3, 1],
            Activation::Relu,
            vec![f64::NAN, 0.0, 0.0, 0.0],
            n
        )
        .is_err());
    }

    #[test]
    fn normalizer_clamps_and_flags() {
        let n = Normalizer {
            input_min: [0.0, 0.0, 2.0],
            input_max: [90.0, 15.0, 16.0],
            label_min: 0.0,
            label_max: 40.0,
        };
        let (x, c) = n.inputs(&[45.0, 15.0, 9.0]);
        assert!(!c);
        assert_eq!(x, [0.5, 1.0, 0.5]);
        let (x, c) = n.inputs(&[-1.0, 7.5, 30.0]);
        assert!(c);
        assert_eq!(x, [0.0, 0.5, 1.0]);
        assert_eq!(n.denormalize_label(n.label(12.5)), 12.5);
    }
}
