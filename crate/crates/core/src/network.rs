//! Fully connected network mapping a state to an n-step co-state trajectory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::problem::{Matrix, Vector};

pub const MODEL_FORMAT: &str = "costate-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
    Softplus,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Softplus => "softplus",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "softplus" => Ok(Activation::Softplus),
            other => Err(Error::arg(format!("unknown activation '{other}'"))),
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Softplus => {
                if z > 30.0 {
                    z
                } else {
                    z.exp().ln_1p()
                }
            }
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => 1.0 / (1.0 + (-z).exp()),
        }
    }
}

/// Where a model came from; carried through save/load.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelMetadata {
    pub problem_id: String,
    pub delta: f64,
    pub config_hash: String,
}

/// Network parameters θ. Layer `l` holds a row-major `out×in` weight matrix
/// and an `out` bias vector; hidden layers apply the activation, the output
/// layer is affine. Inputs are multiplied elementwise by `input_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnModel {
    layer_sizes: Vec<usize>,
    pub(crate) weights: Vec<Vec<f64>>,
    pub(crate) biases: Vec<Vec<f64>>,
    activation: Activation,
    horizon: usize,
    state_dim: usize,
    input_scale: Vec<f64>,
    pub metadata: ModelMetadata,
}

/// Per-layer gradients with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &ConnModel) -> Self {
        Gradients {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Flattened in [`ConnModel::param`] order.
    pub fn flat(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).flatten().all(|v| v.is_finite())
    }
}

/// Activations of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the input of layer l (the scaled state for l = 0).
    inputs: Vec<Vec<f64>>,
    /// Hidden pre-activations.
    pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl ConnModel {
    /// Glorot-uniform weights from `seed`, zero biases.
    pub fn new(
        state_dim: usize,
        horizon: usize,
        hidden: &[usize],
        activation: Activation,
        input_scale: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        if state_dim == 0 || horizon == 0 {
            return Err(Error::arg("state_dim and horizon must be positive"));
        }
        if hidden.contains(&0) {
            return Err(Error::arg("hidden layer widths must be positive"));
        }
        if input_scale.len() != state_dim || input_scale.iter().any(|s| !s.is_finite() || *s == 0.0) {
            return Err(Error::arg("input_scale must hold one finite non-zero factor per state"));
        }
        let mut layer_sizes = vec![state_dim];
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(horizon * state_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push((0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect());
            biases.push(vec![0.0; fan_out]);
        }
        Ok(ConnModel {
            layer_sizes,
            weights,
            biases,
            activation,
            horizon,
            state_dim,
            input_scale,
            metadata: ModelMetadata::default(),
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }
    pub fn activation(&self) -> Activation {
        self.activation
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }
    pub fn input_scale(&self) -> &[f64] {
        &self.input_scale
    }

    /// Zero the output layer, making every prediction the zero trajectory.
    pub fn zero_output_layer(&mut self) {
        if let (Some(w), Some(b)) = (self.weights.last_mut(), self.biases.last_mut()) {
            w.iter_mut().for_each(|v| *v = 0.0);
            b.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    fn locate(&self, mut index: usize) -> (usize, bool, usize) {
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if index < w.len() {
                return (l, true, index);
            }
            index -= w.len();
            if index < b.len() {
                return (l, false, index);
            }
            index -= b.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameter by flat index: layer by layer, weights then biases.
    pub fn param(&self, index: usize) -> f64 {
        match self.locate(index) {
            (l, true, i) => self.weights[l][i],
            (l, false, i) => self.biases[l][i],
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        match self.locate(index) {
            (l, true, i) => self.weights[l][i] = value,
            (l, false, i) => self.biases[l][i] = value,
        }
    }

    pub fn params_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).flatten().all(|v| v.is_finite())
    }

    /// Overwrite the parameters of layer `l`.
    pub fn set_layer(&mut self, l: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<()> {
        if l + 1 >= self.layer_sizes.len() {
            return Err(Error::arg("layer index out of range"));
        }
        let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        if weights.len() != fan_in * fan_out || biases.len() != fan_out {
            return Err(Error::arg(format!("layer {l} expects {fan_out}x{fan_in} weights and {fan_out} biases")));
        }
        self.weights[l] = weights;
        self.biases[l] = biases;
        Ok(())
    }

    pub fn forward_cached(&self, x: &Vector) -> Result<ForwardCache> {
        if x.len() != self.state_dim {
            return Err(Error::arg(format!("input has length {}, expected {}", x.len(), self.state_dim)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("network input must be finite"));
        }
        let layers = self.weights.len();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers - 1);
        let mut a: Vec<f64> = x.iter().zip(&self.input_scale).map(|(v, s)| v * s).collect();
        for l in 0..layers {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &self.weights[l];
            let mut z = self.biases[l].clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                *zo += row.iter().zip(&a).map(|(wi, ai)| wi * ai).sum::<f64>();
            }
            let next: Vec<f64> = if l + 1 < layers {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            } else {
                z.clone()
            };
            debug_assert_eq!(next.len(), fan_out);
            inputs.push(a);
            if l + 1 < layers {
                pre.push(z);
            }
            a = next;
        }
        Ok(ForwardCache { inputs, pre, output: a })
    }

    /// Predicted co-state trajectory, n×p (row j is step j of the horizon).
    pub fn forward(&self, x: &Vector) -> Result<Matrix> {
        let cache = self.forward_cached(x)?;
        Ok(self.output_matrix(&cache.output))
    }

    pub(crate) fn output_matrix(&self, out: &[f64]) -> Matrix {
        Matrix::from_row_slice(self.horizon, self.state_dim, out)
    }

    /// Backpropagate `dL/d(output)` (flattened row-major n×p).
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64]) -> Gradients {
        let layers = self.weights.len();
        let mut grads = Gradients::zeros_like(self);
        let mut delta = grad_output.to_vec();
        for l in (0..layers).rev() {
            let fan_in = self.layer_sizes[l];
            let input = &cache.inputs[l];
            let gw = &mut grads.weights[l];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &mut gw[o * fan_in..(o + 1) * fan_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            grads.biases[l].copy_from_slice(&delta);
            if l == 0 {
                break;
            }
            let w = &self.weights[l];
            let mut prev = vec![0.0; fan_in];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &w[o * fan_in..(o + 1) * fan_in];
                for (p, wi) in prev.iter_mut().zip(row) {
                    *p += d * wi;
                }
            }
            let z = &cache.pre[l - 1];
            for ((p, &zi), &ai) in prev.iter_mut().zip(z).zip(input) {
                *p *= self.activation.derivative(zi, ai);
            }
            delta = prev;
        }
        grads
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        let _ = writeln!(out, "{MODEL_FORMAT} {MODEL_VERSION}");
        let _ = writeln!(out, "problem_id {}", self.metadata.problem_id);
        let _ = writeln!(out, "delta {:?}", self.metadata.delta);
        let _ = writeln!(out, "config_hash {}", self.metadata.config_hash);
        let _ = writeln!(out, "horizon {}", self.horizon);
        let _ = writeln!(out, "state_dim {}", self.state_dim);
        let _ = writeln!(out, "activation {}", self.activation.name());
        let sizes: Vec<String> = self.layer_sizes.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "layer_sizes {}", sizes.join(" "));
        let _ = writeln!(out, "input_scale {}", join(&self.input_scale));
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let fan_in = self.layer_sizes[l];
            let _ = writeln!(out, "layer {l}");
            for row in w.chunks(fan_in) {
                let _ = writeln!(out, "w {}", join(row));
            }
            let _ = writeln!(out, "b {}", join(b));
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::parse(what, "unexpected end of file"))
        };
        let (_, head) = next("header")?;
        let mut parts = head.split_whitespace();
        if parts.next() != Some(MODEL_FORMAT) {
            return Err(Error::parse("header", format!("not a {MODEL_FORMAT} file")));
        }
        let version = parts.next().unwrap_or("");
        if version != MODEL_VERSION.to_string() {
            return Err(Error::Version {
                found: version.to_string(),
                expected: MODEL_VERSION.to_string(),
            });
        }
        let mut field = |key: &str| -> Result<String> {
            let (no, line) = next(key)?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.to_string()),
                None if line == key => Ok(String::new()),
                _ => Err(Error::parse(format!("line {no}"), format!("expected '{key}'"))),
            }
        };
        let problem_id = field("problem_id")?;
        let delta: f64 = parse_num(&field("delta")?, "delta")?;
        let config_hash = field("config_hash")?;
        let horizon: usize = parse_num(&field("horizon")?, "horizon")?;
        let state_dim: usize = parse_num(&field("state_dim")?, "state_dim")?;
        let activation = Activation::from_name(&field("activation")?)
            .map_err(|e| Error::parse("activation", e.to_string()))?;
        let layer_sizes: Vec<usize> = field("layer_sizes")?
            .split_whitespace()
            .map(|t| parse_num(t, "layer_sizes"))
            .collect::<Result<_>>()?;
        let input_scale: Vec<f64> = field("input_scale")?
            .split_whitespace()
            .map(|t| parse_num(t, "input_scale"))
            .collect::<Result<_>>()?;
        if layer_sizes.len() < 2
            || layer_sizes[0] != state_dim
            || *layer_sizes.last().unwrap() != horizon * state_dim
            || layer_sizes.contains(&0)
        {
            return Err(Error::parse("layer_sizes", "inconsistent with horizon and state_dim"));
        }
        if input_scale.len() != state_dim {
            return Err(Error::parse("input_scale", "expected one factor per state"));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_sizes.len() - 1 {
            let record = format!("layer {l}");
            let (_, tag) = next(&record)?;
            if tag != record {
                return Err(Error::parse(&record, format!("expected '{record}', found '{tag}'")));
            }
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let mut w = Vec::with_capacity(fan_in * fan_out);
            for o in 0..fan_out {
                let row_record = format!("layer {l}, weight row {o}");
                let (_, line) = next(&row_record)?;
                let values = line
                    .strip_prefix("w ")
                    .ok_or_else(|| Error::parse(&row_record, "expected a 'w' row"))?;
                let row: Vec<f64> = values
                    .split_whitespace()
                    .map(|t| parse_num(t, &row_record))
                    .collect::<Result<_>>()?;
                if row.len() != fan_in {
                    return Err(Error::parse(&row_record, format!("expected {fan_in} values")));
                }
                w.extend(row);
            }
            let b_record = format!("layer {l}, biases");
            let (_, line) = next(&b_record)?;
            let values = line
                .strip_prefix("b ")
                .ok_or_else(|| Error::parse(&b_record, "expected a 'b' row"))?;
            let b: Vec<f64> = values
                .split_whitespace()
                .map(|t| parse_num(t, &b_record))
                .collect::<Result<_>>()?;
            if b.len() != fan_out {
                return Err(Error::parse(&b_record, format!("expected {fan_out} values")));
            }
            weights.push(w);
            biases.push(b);
        }
        let (_, end) = next("end marker")?;
        if end != "end" {
            return Err(Error::parse("end marker", "expected 'end'"));
        }
        Ok(ConnModel {
            layer_sizes,
            weights,
            biases,
            activation,
            horizon,
            state_dim,
            input_scale,
            metadata: ModelMetadata {
                problem_id,
                delta,
                config_hash,
            },
        })
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, record: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(record, format!("cannot parse '{s}'")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Vector {
        Vector::from_element(1, v)
    }

    #[test]
    fn zero_output_layer_gives_zero_trajectory() {
        let mut m = ConnModel::new(1, 11, &[8, 8], Activation::Tanh, vec![0.2], 1).unwrap();
        m.zero_output_layer();
        let out = m.forward(&s(3.7)).unwrap();
        assert_eq!(out.shape(), (11, 1));
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_set_single_hidden_unit() {
        // x -> scale 0.5 -> tanh(2·0.5x + 0.1) -> [3h - 1, -h + 0.5]
        let mut m = ConnModel::new(1, 2, &[1], Activation::Tanh, vec![0.5], 0).unwrap();
        m.set_layer(0, vec![2.0], vec![0.1]).unwrap();
        m.set_layer(1, vec![3.0, -1.0], vec![-1.0, 0.5]).unwrap();
        let out = m.forward(&s(0.8)).unwrap();
        let h = (0.9f64).tanh();
        assert_eq!(out[(0, 0)], 3.0 * h - 1.0);
        assert_eq!(out[(1, 0)], -h + 0.5);
    }

    #[test]
    fn forward_is_repeatable_and_checks_input() {
        let m = ConnModel::new(1, 5, &[6], Activation::Softplus, vec![1.0], 9).unwrap();
        assert_eq!(m.forward(&s(0.3)).unwrap(), m.forward(&s(0.3)).unwrap());
        assert!(matches!(m.forward(&s(f64::NAN)), Err(Error::Argument(_))));
        assert!(matches!(m.forward(&Vector::zeros(2)), Err(Error::Argument(_))));
    }

    #[test]
    fn two_dimensional_output_layout() {
        let m = ConnModel::new(2, 3, &[4], Activation::Tanh, vec![1.0, 1.0], 2).unwrap();
        let x = Vector::from_vec(vec![0.1, -0.2]);
        let cache = m.forward_cached(&x).unwrap();
        let out = m.forward(&x).unwrap();
        assert_eq!(out.shape(), (3, 2));
        assert_eq!(out[(1, 0)], cache.output[2]);
        assert_eq!(out[(1, 1)], cache.output[3]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        for act in [Activation::Tanh, Activation::Softplus] {
            let m = ConnModel::new(2, 3, &[5, 4], act, vec![0.5, 2.0], 4).unwrap();
            let x = Vector::from_vec(vec![0.3, -0.7]);
            let weights_out: Vec<f64> = (0..6).map(|i| 0.3 * i as f64 - 0.5).collect();
            let objective = |mm: &ConnModel| {
                let c = mm.forward_cached(&x).unwrap();
                c.output.iter().zip(&weights_out).map(|(a, b)| a * b).sum::<f64>()
            };
            let g = m.backward(&m.forward_cached(&x).unwrap(), &weights_out).flat();
            for i in 0..m.num_params() {
                let mut mp = m.clone();
                let mut mm = m.clone();
                mp.set_param(i, m.param(i) + 1e-6);
                mm.set_param(i, m.param(i) - 1e-6);
                let fd = (objective(&mp) - objective(&mm)) / 2e-6;
                assert!((fd - g[i]).abs() <= 1e-6 * fd.abs().max(1.0), "{act:?} param {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn text_round_trip() {
        let mut m = ConnModel::new(1, 11, &[16, 16], Activation::Tanh, vec![0.2], 3).unwrap();
        m.metadata = ModelMetadata {
            problem_id: "quad1d".into(),
            delta: 0.05,
            config_hash: "abc123".into(),
        };
        let back = ConnModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.horizon(), 11);
    }

    #[test]
    fn corrupted_and_versioned_files() {
        let m = ConnModel::new(1, 4, &[3], Activation::Relu, vec![1.0], 3).unwrap();
        let text = m.to_text();
        let lines: Vec<&str> = text.lines().collect();
        let cut = lines[..lines.len() - 3].join("\n");
        assert!(matches!(ConnModel::from_text(&cut), Err(Error::Parse { .. })));
        let garbled = text.replacen("w ", "w nope ", 1);
        assert!(matches!(ConnModel::from_text(&garbled), Err(Error::Parse { .. })));
        let other = text.replacen("costate-model 1", "costate-model 2", 1);
        assert!(matches!(ConnModel::from_text(&other), Err(Error::Version { .. })));
    }
}
