use std::fmt::Write as _;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::network::{forward, loss, sample_gradients, Gradients, LossKind};
use super::params::{MlNetParams, ParamKind};
use crate::error::{Error, Result};
use crate::likelihood::Observations;
use crate::scalar::{lit, Real};

/// Ground-truth patch (flattened row-major) and the binary observations of
/// its sensor region.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample<T> {
    pub truth: Array1<T>,
    pub obs: Observations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig<T> {
    pub batch_size: usize,
    /// Relative step: each update moves a tensor by `learning_rate · ‖P‖`
    /// along the normalized negative gradient.
    pub learning_rate: T,
    pub epochs: usize,
    /// Epoch `e` updates `order[e % order.len()]`.
    pub order: Vec<ParamKind>,
    pub validation_fraction: f64,
    /// Epochs without a new best validation loss before the rate decays.
    pub patience: usize,
    pub decay: T,
    pub loss: LossKind,
    pub seed: u64,
}

impl<T: Real> Default for TrainConfig<T> {
    fn default() -> Self {
        TrainConfig {
            batch_size: 100,
            learning_rate: lit(0.01),
            epochs: 20,
            order: ParamKind::ALL.to_vec(),
            validation_fraction: 0.2,
            patience: 5,
            decay: lit(0.5),
            loss: LossKind::Mse,
            seed: 0,
        }
    }
}

impl<T: Real> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.learning_rate >= T::zero()) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning rate must be finite and >= 0".into()));
        }
        if self.order.is_empty() {
            return Err(Error::Config("round-robin order is empty".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation fraction must lie in (0, 1)".into()));
        }
        if !(self.decay > T::zero() && self.decay <= T::one()) {
            return Err(Error::Config("decay must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow<T> {
    pub epoch: usize,
    /// `None` for the initial evaluation.
    pub tensor: Option<ParamKind>,
    pub learning_rate: T,
    pub train_loss: T,
    pub validation_loss: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingHistory<T> {
    pub rows: Vec<HistoryRow<T>>,
    /// Epoch whose parameters were returned (0 = initialization).
    pub best_epoch: usize,
    pub aborted: bool,
}

pub const HISTORY_CSV_HEADER: &str = "epoch,tensor,learning_rate,train_loss,validation_loss";

impl<T: Real> TrainingHistory<T> {
    pub fn initial_validation(&self) -> T {
        self.rows[0].validation_loss
    }

    pub fn best_validation(&self) -> T {
        self.rows
            .iter()
            .map(|r| r.validation_loss)
            .fold(T::infinity(), T::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let tensor = r.tensor.map_or("init", ParamKind::name);
            let _ = writeln!(
                out,
                "{},{tensor},{:e},{:.12e},{:.12e}",
                r.epoch, r.learning_rate, r.train_loss, r.validation_loss
            );
        }
        out
    }
}

/// Mean loss of the network over `samples`.
pub fn dataset_loss<T: Real>(params: &MlNetParams<T>, samples: &[&TrainingSample<T>], kind: LossKind) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::invalid("empty sample set"));
    }
    let losses = samples
        .par_iter()
        .map(|s| {
            let (x, _) = forward(params, &s.obs)?;
            loss(x.view(), s.truth.view(), kind)
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(losses.into_iter().fold(T::zero(), |a, b| a + b) / T::from_usize(samples.len()).unwrap())
}

fn batch_gradient<T: Real>(
    params: &MlNetParams<T>,
    batch: &[&TrainingSample<T>],
    kind: LossKind,
) -> Result<(T, Gradients<T>)> {
    let parts = batch
        .par_iter()
        .map(|s| sample_gradients(params, &s.obs, s.truth.view(), kind))
        .collect::<Result<Vec<_>>>()?;
    let mut total = Gradients::zeros(params);
    let mut value = T::zero();
    for (v, g) in &parts {
        value += *v;
        total.add_assign(g);
    }
    let inv = T::one() / T::from_usize(batch.len()).unwrap();
    total.scale(inv);
    Ok((value * inv, total))
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

fn apply_update<T: Real>(params: &mut MlNetParams<T>, grads: &Gradients<T>, kind: ParamKind, rate: T) {
    let g = grads.tensor(kind);
    let g_norm = norm(g);
    if !(g_norm > T::zero()) || rate == T::zero() {
        return;
    }
    let p_norm = norm(params.tensor(kind));
    let scale = rate * if p_norm > T::zero() { p_norm } else { T::one() } / g_norm;
    for (p, &gi) in params.tensor_mut(kind).iter_mut().zip(g) {
        *p -= scale * gi;
    }
    params.project();
}

fn is_numeric_failure(e: &Error) -> bool {
    e.is_numeric()
}

/// Minibatch training with round-robin tensor updates and validation-based
/// model selection. A non-finite loss stops training early with
/// `history.aborted` set; the best parameters seen so far are returned.
pub fn train_mlnet<T: Real>(
    dataset: &[TrainingSample<T>],
    init: &MlNetParams<T>,
    cfg: &TrainConfig<T>,
) -> Result<(MlNetParams<T>, TrainingHistory<T>)> {
    cfg.validate()?;
    if dataset.len() < 2 {
        return Err(Error::Config("training needs at least two samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    indices.shuffle(&mut rng);
    let n_val = ((dataset.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, dataset.len() - 1);
    let validation: Vec<&TrainingSample<T>> = indices[..n_val].iter().map(|&i| &dataset[i]).collect();
    let mut train: Vec<&TrainingSample<T>> = indices[n_val..].iter().map(|&i| &dataset[i]).collect();

    let mut params = init.clone();
    let mut best = params.clone();
    let initial_val = dataset_loss(&params, &validation, cfg.loss)?;
    let initial_train = dataset_loss(&params, &train, cfg.loss)?;
    let mut history = TrainingHistory {
        rows: vec![HistoryRow {
            epoch: 0,
            tensor: None,
            learning_rate: cfg.learning_rate,
            train_loss: initial_train,
            validation_loss: initial_val,
        }],
        best_epoch: 0,
        aborted: false,
    };
    let mut best_val = initial_val;
    let mut rate = cfg.learning_rate;
    let mut stall = 0;

    'epochs: for epoch in 1..=cfg.epochs {
        let kind = cfg.order[(epoch - 1) % cfg.order.len()];
        train.shuffle(&mut rng);
        let mut sum = T::zero();
        for batch in train.chunks(cfg.batch_size) {
            let (value, grads) = match batch_gradient(&params, batch, cfg.loss) {
                Ok(r) => r,
                Err(e) if is_numeric_failure(&e) => {
                    log::warn!("epoch {epoch}: {e}; stopping");
                    history.aborted = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            if !value.is_finite() {
                history.aborted = true;
                break 'epochs;
            }
            sum += value * T::from_usize(batch.len()).unwrap();
            apply_update(&mut params, &grads, kind, rate);
        }
        let train_loss = sum / T::from_usize(train.len()).unwrap();
        let validation_loss = match dataset_loss(&params, &validation, cfg.loss) {
            Ok(v) if v.is_finite() => v,
            Ok(_) => {
                history.aborted = true;
                break;
            }
            Err(e) if is_numeric_failure(&e) => {
                history.aborted = true;
                break;
            }
            Err(e) => return Err(e),
        };
        history.rows.push(HistoryRow {
            epoch,
            tensor: Some(kind),
            learning_rate: rate,
            train_loss,
            validation_loss,
        });
        log::info!("epoch {epoch} [{kind}] train {train_loss:.6e} validation {validation_loss:.6e}");
        if validation_loss < best_val {
            best_val = validation_loss;
            best = params.clone();
            history.best_epoch = epoch;
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.patience.max(1) {
                rate *= cfg.decay;
                params = best.clone();
                stall = 0;
            }
        }
    }
    Ok((best, history))
}
