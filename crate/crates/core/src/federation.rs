//! FedAvg server and the client training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{FlareError, Result};
use crate::model::ModelParams;
use crate::scheduler::{SchedulerDecision, StabilityState};
use crate::stats::ConfidenceSample;

/// How consecutive scheduler windows relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    /// Each window consumes `w` fresh loss pairs.
    #[default]
    Tumbling,
    /// A window over the latest `w` pairs is evaluated after every round.
    Sliding,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPair {
    pub train: f64,
    pub val: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOptions {
    pub learning_rate: f64,
    /// `None` means one full-batch step per round; `Some(b)` runs one epoch of
    /// mini-batches of size `b` per round.
    pub batch_size: Option<usize>,
    pub val_fraction: f64,
    pub window_mode: WindowMode,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            batch_size: None,
            val_fraction: 0.2,
            window_mode: WindowMode::Tumbling,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClientState {
    id: usize,
    model: ModelParams,
    /// Fixed-size local data, oldest sample first.
    local: LabeledDataset,
    train: LabeledDataset,
    val: LabeledDataset,
    test: LabeledDataset,
    scheduler: StabilityState,
    sensors: Vec<usize>,
    losses: Vec<LossPair>,
    window_start: usize,
    options: TrainingOptions,
    rng: ChaCha8Rng,
}

impl ClientState {
    pub fn new(
        id: usize,
        model: ModelParams,
        local: LabeledDataset,
        test: LabeledDataset,
        scheduler: StabilityState,
        sensors: Vec<usize>,
        options: TrainingOptions,
        seed: u64,
    ) -> Result<Self> {
        if local.dim() != model.input_dim() || test.dim() != model.input_dim() {
            return Err(FlareError::contract("client data dimension does not match the model"));
        }
        if !(options.val_fraction > 0.0 && options.val_fraction < 1.0) {
            return Err(FlareError::config("validation fraction must lie in (0, 1)"));
        }
        if !(options.learning_rate > 0.0 && options.learning_rate.is_finite()) {
            return Err(FlareError::config("learning rate must be positive"));
        }
        if options.batch_size == Some(0) {
            return Err(FlareError::config("mini-batch size must be positive"));
        }
        let val_len = val_len(local.len(), options.val_fraction);
        if val_len == 0 || val_len >= local.len() {
            return Err(FlareError::config(format!(
                "{} local samples cannot be split into train and validation",
                local.len()
            )));
        }
        let mut client = Self {
            id,
            model,
            train: local.clone(),
            val: local.clone(),
            local,
            test,
            scheduler,
            sensors,
            losses: Vec::new(),
            window_start: 0,
            options,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        client.resplit()?;
        Ok(client)
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn train_split(&self) -> &LabeledDataset {
        &self.train
    }

    pub fn val_split(&self) -> &LabeledDataset {
        &self.val
    }

    pub fn test_split(&self) -> &LabeledDataset {
        &self.test
    }

    pub fn local_data(&self) -> &LabeledDataset {
        &self.local
    }

    pub fn scheduler(&self) -> &StabilityState {
        &self.scheduler
    }

    pub fn scheduler_mut(&mut self) -> &mut StabilityState {
        &mut self.scheduler
    }

    pub fn sensors(&self) -> &[usize] {
        &self.sensors
    }

    pub fn losses(&self) -> &[LossPair] {
        &self.losses
    }

    /// Samples counted for FedAvg weighting.
    pub fn sample_count(&self) -> usize {
        self.train.len()
    }

    fn resplit(&mut self) -> Result<()> {
        let n = self.local.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut self.rng);
        let (val_idx, train_idx) = idx.split_at(val_len(n, self.options.val_fraction));
        let mut val_idx = val_idx.to_vec();
        let mut train_idx = train_idx.to_vec();
        val_idx.sort_unstable();
        train_idx.sort_unstable();
        self.val = self.local.select(&val_idx)?;
        self.train = self.local.select(&train_idx)?;
        Ok(())
    }

    /// Starts local training from the global model.
    pub fn receive_global(&mut self, global: &ModelParams) -> Result<()> {
        if !global.same_shape(&self.model) {
            return Err(FlareError::contract(format!(
                "global model {:?} does not match client {} model {:?}",
                global.sizes(),
                self.id,
                self.model.sizes()
            )));
        }
        self.model = global.clone();
        Ok(())
    }

    fn train_one_round(&mut self) -> Result<LossPair> {
        let lr = self.options.learning_rate;
        let val = self.model.cross_entropy_loss(&self.val)?;
        let train = match self.options.batch_size {
            Some(b) if b < self.train.len() => {
                let loss = self.model.cross_entropy_loss(&self.train)?;
                let mut order: Vec<usize> = (0..self.train.len()).collect();
                order.shuffle(&mut self.rng);
                for chunk in order.chunks(b) {
                    let batch = self.train.select(chunk)?;
                    self.model.train_step(&batch, lr)?;
                }
                loss
            }
            _ => self.model.train_step(&self.train, lr)?,
        };
        Ok(LossPair { train, val })
    }

    /// Continues training the current local model for `rounds` rounds and
    /// feeds the loss stream to the scheduler. Returns the decisions of every
    /// window completed along the way.
    pub fn train_rounds(&mut self, rounds: usize) -> Result<Vec<SchedulerDecision>> {
        let w = self.scheduler.window_len();
        let mut decisions = Vec::new();
        for _ in 0..rounds {
            let pair = self.train_one_round()?;
            self.losses.push(pair);
            let ready = match self.options.window_mode {
                WindowMode::Tumbling => self.losses.len() - self.window_start >= w,
                WindowMode::Sliding => self.losses.len() >= w,
            };
            if ready {
                let window = &self.losses[self.losses.len() - w..];
                let train: Vec<f64> = window.iter().map(|p| p.train).collect();
                let val: Vec<f64> = window.iter().map(|p| p.val).collect();
                decisions.push(self.scheduler.observe_window(&train, &val)?);
                self.window_start = self.losses.len();
            }
        }
        Ok(decisions)
    }

    /// Resets the local model to `global`, then trains `rounds` rounds.
    pub fn local_train_round(&mut self, global: &ModelParams, rounds: usize) -> Result<Vec<SchedulerDecision>> {
        if rounds == 0 {
            return Err(FlareError::contract("at least one training round is required"));
        }
        self.receive_global(global)?;
        self.train_rounds(rounds)
    }

    /// FIFO-replaces the oldest local samples with `upload` and re-samples the
    /// validation split. Local data size never changes.
    pub fn ingest_sensor_data(&mut self, upload: &LabeledDataset) -> Result<()> {
        if upload.is_empty() {
            return Err(FlareError::contract("upload must not be empty"));
        }
        if upload.dim() != self.local.dim() {
            return Err(FlareError::contract(format!(
                "upload dimension {} does not match client data {}",
                upload.dim(),
                self.local.dim()
            )));
        }
        let n = self.local.len();
        self.local = if upload.len() >= n {
            let keep: Vec<usize> = (upload.len() - n..upload.len()).collect();
            upload.select(&keep)?
        } else {
            let keep: Vec<usize> = (upload.len()..n).collect();
            self.local.select(&keep)?.concat(upload)?
        };
        self.resplit()
    }

    /// Confidences of `model` on the client's test split.
    pub fn reference_confidences(&self, model: &ModelParams) -> Result<ConfidenceSample> {
        ConfidenceSample::confidences(model.confidences(self.test.features())?)
    }
}

fn val_len(n: usize, fraction: f64) -> usize {
    ((n as f64) * fraction).round() as usize
}

/// Sample-count weighted parameter mean.
///
/// Computed as `x_0 + sum_k w_k (x_k - x_0)`, which is exactly `x_0` when all
/// inputs agree.
pub fn fedavg_aggregate(locals: &[(&ModelParams, usize)]) -> Result<ModelParams> {
    let (first, _) = *locals
        .first()
        .ok_or_else(|| FlareError::contract("FedAvg needs at least one local model"))?;
    if let Some((m, _)) = locals.iter().find(|(m, _)| !m.same_shape(first)) {
        return Err(FlareError::contract(format!(
            "local model {:?} does not match {:?}",
            m.sizes(),
            first.sizes()
        )));
    }
    if locals.iter().any(|&(_, c)| c == 0) {
        return Err(FlareError::contract("sample counts must be positive"));
    }
    let total: usize = locals.iter().map(|&(_, c)| c).sum();
    let base = first.to_flat();
    let mut acc = base.clone();
    for &(model, count) in &locals[1..] {
        let w = count as f64 / total as f64;
        for ((o, x), b) in acc.iter_mut().zip(model.to_flat()).zip(&base) {
            *o += w * (x - b);
        }
    }
    first.with_flat(&acc)
}

#[derive(Debug, Clone)]
pub struct ServerState {
    global: ModelParams,
    round: u64,
    weights: Vec<usize>,
}

impl ServerState {
    pub fn new(global: ModelParams) -> Self {
        Self {
            global,
            round: 0,
            weights: Vec::new(),
        }
    }

    pub fn global(&self) -> &ModelParams {
        &self.global
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Sample counts used in the latest aggregation.
    pub fn weights(&self) -> &[usize] {
        &self.weights
    }

    pub fn aggregate(&mut self, locals: &[(&ModelParams, usize)]) -> Result<&ModelParams> {
        if let Some((m, _)) = locals.iter().find(|(m, _)| !m.same_shape(&self.global)) {
            return Err(FlareError::contract(format!(
                "local model {:?} does not match global {:?}",
                m.sizes(),
                self.global.sizes()
            )));
        }
        self.global = fedavg_aggregate(locals)?;
        self.weights = locals.iter().map(|&(_, c)| c).collect();
        self.round += 1;
        Ok(&self.global)
    }
}
