//! Per-window training of a [`ConnModel`] with an Adam update.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::dataset::{windows, Dataset};
use crate::error::{Error, Result};
use crate::loss::{loss_continuity_grad, loss_prediction, loss_prediction_grad, ContinuityOptions};
use crate::network::{Activation, ConnModel, Gradients};
use crate::problem::{Matrix, OcpProblem, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub n_epoch: usize,
    pub learning_rate: f64,
    pub continuity_weight: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub horizon: usize,
    pub continuity: ContinuityOptions,
    /// Visit windows in a seeded random order instead of trajectory order.
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_epoch: 20,
            learning_rate: 1e-3,
            continuity_weight: 1.0,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            hidden: vec![64, 64],
            activation: Activation::Softplus,
            horizon: 11,
            continuity: ContinuityOptions::default(),
            shuffle: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_epoch == 0 {
            return Err(Error::arg("n_epoch must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::arg("learning rate must be positive"));
        }
        if !(self.continuity_weight >= 0.0) || !self.continuity_weight.is_finite() {
            return Err(Error::arg("continuity weight must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::arg("moment decay rates must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::arg("epsilon must be positive"));
        }
        if self.horizon < 2 {
            return Err(Error::arg("horizon must be at least 2"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::arg("hidden layer widths must be positive"));
        }
        if self.continuity.substeps == 0 {
            return Err(Error::arg("continuity substeps must be at least 1"));
        }
        Ok(())
    }

    /// Hex SHA-256 over every field, stored alongside trained models.
    pub fn hash(&self) -> String {
        let text = format!(
            "epochs={} lr={:?} w={:?} seed={} b1={:?} b2={:?} eps={:?} hidden={:?} act={} n={} scheme={} sub={} shuffle={}",
            self.n_epoch,
            self.learning_rate,
            self.continuity_weight,
            self.seed,
            self.beta1,
            self.beta2,
            self.epsilon,
            self.hidden,
            self.activation.name(),
            self.horizon,
            self.continuity.scheme.name(),
            self.continuity.substeps,
            self.shuffle
        );
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Per-epoch means over all windows.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub prediction_loss: f64,
    pub continuity_loss: f64,
    pub continuity_weight: f64,
    pub updates: usize,
    pub diverged_windows: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ConnModel,
    pub log: Vec<EpochLog>,
    /// Why training stopped early; `model` is then the last finite checkpoint.
    pub aborted: Option<String>,
}

/// Losses of a single window evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowLoss {
    pub prediction: f64,
    pub continuity: f64,
    pub diverged: bool,
}

impl WindowLoss {
    pub fn total(&self, continuity_weight: f64) -> f64 {
        self.prediction + continuity_weight * self.continuity
    }
}

/// Fresh model sized for `dataset`, with inputs scaled by the inverse
/// half-width of the initial states.
pub fn init_model(problem: &OcpProblem, dataset: &Dataset, config: &TrainConfig) -> Result<ConnModel> {
    config.validate()?;
    let p = problem.state_dim();
    if dataset.state_dim() != p {
        return Err(Error::arg("dataset and problem state dimensions differ"));
    }
    let mut scale = Vec::with_capacity(p);
    for i in 0..p {
        let lo = dataset.entries.iter().map(|e| e.x0[i]).fold(f64::INFINITY, f64::min);
        let hi = dataset.entries.iter().map(|e| e.x0[i]).fold(f64::NEG_INFINITY, f64::max);
        let half = 0.5 * (hi - lo);
        scale.push(if half > 0.0 && half.is_finite() { 1.0 / half } else { 1.0 });
    }
    let mut model = ConnModel::new(p, config.horizon, &config.hidden, config.activation, scale, config.seed)?;
    model.metadata.problem_id = problem.id().to_string();
    model.metadata.delta = problem.delta();
    model.metadata.config_hash = config.hash();
    Ok(model)
}

/// Gradient of `L_prediction + w·L_continuity` on one window with respect
/// to every model parameter.
pub fn gradients(
    model: &ConnModel,
    problem: &OcpProblem,
    x_window: &Matrix,
    lambda_window: &Matrix,
    config: &TrainConfig,
) -> Result<(Gradients, WindowLoss)> {
    let n = model.horizon();
    let p = model.state_dim();
    if x_window.shape() != (n, p) || lambda_window.shape() != (n, p) {
        return Err(Error::arg(format!("windows must be {n}x{p}")));
    }
    let x0: Vector = x_window.row(0).transpose();
    let cache = model.forward_cached(&x0)?;
    let pred = Matrix::from_row_slice(n, p, &cache.output);
    let prediction = loss_prediction(&pred, lambda_window)?;
    let mut dpred = loss_prediction_grad(&pred, lambda_window);
    let mut continuity = 0.0;
    let mut diverged = false;
    if config.continuity_weight > 0.0 {
        let (c, g) = loss_continuity_grad(problem, x_window, &pred, problem.delta(), config.continuity)?;
        continuity = c.value;
        diverged = c.diverged;
        dpred += g * config.continuity_weight;
    }
    // Row-major flattening matches the output layout.
    let flat: Vec<f64> = (0..n).flat_map(|j| (0..p).map(move |i| (j, i))).map(|ij| dpred[ij]).collect();
    let grads = model.backward(&cache, &flat);
    Ok((
        grads,
        WindowLoss {
            prediction,
            continuity,
            diverged,
        },
    ))
}

/// Adam moment estimates for every parameter.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Gradients,
    v: Gradients,
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    pub fn new(model: &ConnModel, config: &TrainConfig) -> Self {
        Adam {
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            t: 0,
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, model: &mut ConnModel, grads: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - self.beta2.powi(self.t.min(i32::MAX as u64) as i32);
        let step = self.lr * c2.sqrt() / c1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon * c2.sqrt());
        let update = |theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for (((th, gi), mi), vi) in theta.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                // Dead units would otherwise decay into subnormals, which are slow.
                if mi.abs() < 1e-200 {
                    *mi = 0.0;
                }
                *th -= step * *mi / (vi.sqrt() + eps);
            }
        };
        for l in 0..model.weights.len() {
            update(&mut model.weights[l], &grads.weights[l], &mut self.m.weights[l], &mut self.v.weights[l]);
            update(&mut model.biases[l], &grads.biases[l], &mut self.m.biases[l], &mut self.v.biases[l]);
        }
    }
}

/// Train for `config.n_epoch` epochs, one Adam update per window, visiting
/// trajectories in dataset order and windows in time order unless
/// `config.shuffle` is set. `n_epoch = 0` is accepted and returns the model
/// unchanged.
pub fn train(model: ConnModel, dataset: &Dataset, problem: &OcpProblem, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(model, dataset, problem, config, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with_progress(
    mut model: ConnModel,
    dataset: &Dataset,
    problem: &OcpProblem,
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    if config.n_epoch > 0 {
        config.validate()?;
    }
    let n = model.horizon();
    if n != config.horizon {
        return Err(Error::arg(format!(
            "model horizon {n} differs from configured horizon {}",
            config.horizon
        )));
    }
    if dataset.state_dim() != model.state_dim() || problem.state_dim() != model.state_dim() {
        return Err(Error::arg("model, dataset and problem state dimensions differ"));
    }
    if n >= dataset.steps {
        return Err(Error::arg(format!(
            "horizon {n} must be shorter than the trajectory length {}",
            dataset.steps
        )));
    }
    let mut all = Vec::new();
    for entry in &dataset.entries {
        all.extend(windows(entry, n)?);
    }
    let mut order: Vec<usize> = (0..all.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_0de5);
    let mut adam = Adam::new(&model, config);
    let mut log = Vec::with_capacity(config.n_epoch);
    let mut checkpoint = model.clone();
    for epoch in 0..config.n_epoch {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let (mut pred_sum, mut cont_sum, mut diverged) = (0.0, 0.0, 0usize);
        let mut failure = None;
        for &w in &order {
            let win = &all[w];
            let (grads, loss) = gradients(&model, problem, &win.x_window, &win.lambda_window, config)?;
            if !loss.prediction.is_finite() || !grads.is_finite() {
                failure = Some(format!("non-finite loss or gradient in epoch {epoch} at window {}", win.k));
                break;
            }
            adam.step(&mut model, &grads);
            if !model.params_finite() {
                failure = Some(format!("parameters became non-finite in epoch {epoch}"));
                break;
            }
            pred_sum += loss.prediction;
            cont_sum += loss.continuity;
            diverged += loss.diverged as usize;
        }
        if let Some(reason) = failure {
            return Ok(TrainOutcome {
                model: checkpoint,
                log,
                aborted: Some(reason),
            });
        }
        let count = all.len() as f64;
        let entry = EpochLog {
            epoch,
            prediction_loss: pred_sum / count,
            continuity_loss: cont_sum / count,
            continuity_weight: config.continuity_weight,
            updates: all.len(),
            diverged_windows: diverged,
        };
        progress(&entry);
        log.push(entry);
        checkpoint = model.clone();
    }
    model.metadata.config_hash = config.hash();
    Ok(TrainOutcome {
        model,
        log,
        aborted: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_dataset;
    use crate::problem::{quad1d, vdp2d};
    use crate::tpbvp::SolverConfig;

    fn tiny_dataset() -> (OcpProblem, Dataset) {
        let p = quad1d().with_grid(1.0, 0.05).unwrap();
        let (ds, _) = generate_dataset(&p, -1.0, 1.0, 3, &SolverConfig::default()).unwrap();
        (p, ds)
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            n_epoch: 2,
            hidden: vec![8, 8],
            horizon: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_leaves_model_unchanged() {
        let (p, ds) = tiny_dataset();
        let cfg = TrainConfig {
            n_epoch: 0,
            ..small_config()
        };
        let model = init_model(&p, &ds, &small_config()).unwrap();
        let out = train(model.clone(), &ds, &p, &cfg).unwrap();
        assert_eq!(out.model.layer_sizes(), model.layer_sizes());
        for i in 0..model.num_params() {
            assert_eq!(out.model.param(i), model.param(i));
        }
        assert!(out.log.is_empty());
    }

    #[test]
    fn update_count_is_windows_per_epoch() {
        let (p, ds) = tiny_dataset();
        let cfg = small_config();
        let out = train(init_model(&p, &ds, &cfg).unwrap(), &ds, &p, &cfg).unwrap();
        assert_eq!(out.log.len(), 2);
        // 3 trajectories of 21 points, horizon 5: 3·(21 − 5) windows.
        assert!(out.log.iter().all(|e| e.updates == 48));
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let (p, ds) = tiny_dataset();
        let cfg = TrainConfig {
            n_epoch: 20,
            ..small_config()
        };
        let a = train(init_model(&p, &ds, &cfg).unwrap(), &ds, &p, &cfg).unwrap();
        let b = train(init_model(&p, &ds, &cfg).unwrap(), &ds, &p, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log, b.log);
        assert!(a.log.last().unwrap().prediction_loss < a.log[0].prediction_loss);
        let shuffled = TrainConfig { shuffle: true, ..cfg.clone() };
        let c = train(init_model(&p, &ds, &shuffled).unwrap(), &ds, &p, &shuffled).unwrap();
        assert_ne!(c.model, a.model);
    }

    #[test]
    fn zero_model_on_zero_window_has_zero_gradient() {
        let p = quad1d();
        let cfg = TrainConfig {
            hidden: vec![4],
            horizon: 3,
            ..TrainConfig::default()
        };
        let mut m = ConnModel::new(1, 3, &[4], Activation::Tanh, vec![0.2], 0).unwrap();
        for i in 0..m.num_params() {
            m.set_param(i, 0.0);
        }
        let z = Matrix::zeros(3, 1);
        let (g, loss) = gradients(&m, &p, &z, &z, &cfg).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
        assert_eq!(loss.total(1.0), 0.0);
    }

    #[test]
    fn zero_weight_gives_prediction_gradient() {
        let p = vdp2d();
        let m = ConnModel::new(2, 4, &[6], Activation::Tanh, vec![1.0, 1.0], 5).unwrap();
        let xw = Matrix::from_fn(4, 2, |i, j| 0.5 - 0.1 * i as f64 + 0.2 * j as f64);
        let lw = Matrix::from_fn(4, 2, |i, j| 0.3 * i as f64 - 0.4 * j as f64);
        let cfg = TrainConfig {
            continuity_weight: 0.0,
            horizon: 4,
            ..TrainConfig::default()
        };
        let (g, _) = gradients(&m, &p, &xw, &lw, &cfg).unwrap();
        let cache = m.forward_cached(&xw.row(0).transpose()).unwrap();
        let pred = Matrix::from_row_slice(4, 2, &cache.output);
        let d = loss_prediction_grad(&pred, &lw);
        let flat: Vec<f64> = (0..4).flat_map(|j| (0..2).map(move |i| (j, i))).map(|ij| d[ij]).collect();
        assert_eq!(g, m.backward(&cache, &flat));
    }

    #[test]
    fn config_validation_and_hash() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Argument(_))));
        let a = TrainConfig::default().hash();
        let b = TrainConfig {
            seed: 1,
            ..TrainConfig::default()
        }
        .hash();
        assert_eq!(a.len(), 64);
        assert_ne!(a, b);
    }
}
