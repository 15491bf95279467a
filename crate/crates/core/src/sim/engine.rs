//! Virtual-clock event loop.
//!
//! Time is in whole simulated seconds. Events at the same instant run in a
//! fixed order: drift injection, sensor batches, sensor uploads, the training
//! tick (all clients in id order, then aggregation), initial and fixed-interval
//! deployments, and finally metric sampling.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{SchedulerKind, SimConfig};
use super::ledger::{CommLedger, Link, Reason, TransferRecord};
use super::metrics::{DecisionEvent, DecisionKind, DeploymentEvent, MetricSample, MetricsLog};
use super::seeds::{derive_seed, Stream};
use crate::codec::{convert_model, decode_deployment, decode_upload, encode_deployment, encode_upload};
use crate::dataset::LabeledDataset;
use crate::drift::{apply_corruption, SyntheticTask};
use crate::error::Result;
use crate::federation::{ClientState, ServerState};
use crate::model::ModelParams;
use crate::monitor::{MonitorAction, SensorState};
use crate::scheduler::{SchedulerAction, StabilityState};

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub config: SimConfig,
    pub ledger: CommLedger,
    pub metrics: MetricsLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Drift(usize),
    SensorBatch(usize),
    SensorUpload(usize),
    TrainingTick,
    InitialDeploy,
    FixedDeploy,
    Metrics,
}

struct Sensor {
    client: usize,
    monitor: SensorState,
    stream: LabeledDataset,
    eval: LabeledDataset,
    /// Corrupted copies of `stream` and `eval` while a drift is active.
    drifted: Option<(LabeledDataset, LabeledDataset)>,
    rng: ChaCha8Rng,
    cached_accuracy: Option<f64>,
    last_ks: Option<f64>,
}

impl Sensor {
    fn stream(&self) -> &LabeledDataset {
        self.drifted.as_ref().map_or(&self.stream, |(s, _)| s)
    }

    fn eval(&self) -> &LabeledDataset {
        self.drifted.as_ref().map_or(&self.eval, |(_, e)| e)
    }

    fn accuracy(&mut self) -> Result<Option<f64>> {
        if self.cached_accuracy.is_none() {
            if let Some(model) = self.monitor.model() {
                self.cached_accuracy = Some(model.evaluate_accuracy(self.eval())?);
            }
        }
        Ok(self.cached_accuracy)
    }
}

struct Sim {
    cfg: SimConfig,
    clients: Vec<ClientState>,
    server: ServerState,
    sensors: Vec<Sensor>,
    ledger: CommLedger,
    metrics: MetricsLog,
    queue: BinaryHeap<Reverse<(u64, Event)>>,
    last_sigma: Vec<f64>,
    rounds: u64,
    initial_deploy_done: bool,
}

/// Runs one scenario to completion. The config is validated before any step.
pub fn run_simulation(config: &SimConfig) -> Result<SimOutput> {
    config.validate()?;
    let mut sim = Sim::build(config.clone())?;
    sim.run()?;
    Ok(SimOutput {
        config: sim.cfg,
        ledger: sim.ledger,
        metrics: sim.metrics,
    })
}

fn rng(seed: u64, stream: Stream, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index as u64))
}

impl Sim {
    fn build(cfg: SimConfig) -> Result<Self> {
        let seed = cfg.seed;
        let task = SyntheticTask::new(cfg.classes, cfg.dim, derive_seed(seed, Stream::Task, 0))?;
        let global = ModelParams::init_mlp(&cfg.model_sizes(), &mut rng(seed, Stream::ModelInit, 0))?;
        let mut clients = Vec::with_capacity(cfg.num_clients);
        for c in 0..cfg.num_clients {
            let mut data_rng = rng(seed, Stream::ClientData, c);
            let local = task.sample(cfg.local_samples, &mut data_rng)?;
            let test = task.sample(cfg.test_samples, &mut data_rng)?;
            let sensors = (c * cfg.sensors_per_client..(c + 1) * cfg.sensors_per_client).collect();
            clients.push(ClientState::new(
                c,
                global.clone(),
                local,
                test,
                StabilityState::new(cfg.alpha, cfg.beta, cfg.window)?,
                sensors,
                cfg.training_options(),
                derive_seed(seed, Stream::ClientTraining, c as u64),
            )?);
        }
        let mut sensors = Vec::with_capacity(cfg.num_sensors());
        for s in 0..cfg.num_sensors() {
            let mut data_rng = rng(seed, Stream::SensorData, s);
            sensors.push(Sensor {
                client: cfg.client_of(s),
                monitor: SensorState::new(cfg.phi, cfg.inference_batch)?,
                stream: task.sample(cfg.sensor_pool, &mut data_rng)?,
                eval: task.sample(cfg.eval_samples, &mut data_rng)?,
                drifted: None,
                rng: rng(seed, Stream::SensorBatches, s),
                cached_accuracy: None,
                last_ks: None,
            });
        }
        let mut queue = BinaryHeap::new();
        for (i, e) in cfg.drift.events.iter().enumerate() {
            queue.push(Reverse((e.time_s, Event::Drift(i))));
        }
        queue.push(Reverse((cfg.seconds_per_training_round, Event::TrainingTick)));
        queue.push(Reverse((cfg.pretrain_s, Event::InitialDeploy)));
        Ok(Self {
            metrics: MetricsLog::new(cfg.num_sensors()),
            last_sigma: vec![0.0; cfg.num_clients],
            cfg,
            clients,
            server: ServerState::new(global),
            sensors,
            ledger: CommLedger::new(),
            queue,
            rounds: 0,
            initial_deploy_done: false,
        })
    }

    fn schedule(&mut self, time: u64, event: Event) {
        if time <= self.cfg.duration_s {
            self.queue.push(Reverse((time, event)));
        }
    }

    fn run(&mut self) -> Result<()> {
        while let Some(Reverse((t, event))) = self.queue.pop() {
            match event {
                Event::Drift(i) => self.inject_drift(t, i)?,
                Event::SensorBatch(s) => self.sensor_batch(t, s)?,
                Event::SensorUpload(s) => self.fixed_upload(t, s)?,
                Event::TrainingTick => self.training_tick(t)?,
                Event::InitialDeploy => self.initial_deploy(t)?,
                Event::FixedDeploy => self.fixed_deploy(t)?,
                Event::Metrics => self.sample_metrics(t)?,
            }
        }
        Ok(())
    }

    fn inject_drift(&mut self, _t: u64, index: usize) -> Result<()> {
        let event = self.cfg.drift.events[index];
        let seed = derive_seed(self.cfg.seed, Stream::Corruption, index as u64);
        let sensor = &mut self.sensors[event.sensor];
        let stream = apply_corruption(&sensor.stream, event.corruption, seed)?;
        let eval = apply_corruption(&sensor.eval, event.corruption, seed ^ 1)?;
        sensor.drifted = Some((stream, eval));
        sensor.cached_accuracy = None;
        self.metrics.drifts.push(event);
        Ok(())
    }

    fn sensor_batch(&mut self, t: u64, s: usize) -> Result<()> {
        let sensor = &mut self.sensors[s];
        let pool = sensor.stream().len();
        let picks = rand::seq::index::sample(&mut sensor.rng, pool, self.cfg.inference_batch).into_vec();
        let batch = sensor.stream().select(&picks)?;
        let decision = sensor.monitor.observe_inference_batch(&batch)?;
        sensor.last_ks = Some(decision.ks);
        if self.cfg.scheduler == SchedulerKind::Flare && decision.action == MonitorAction::SendDataToClient {
            self.metrics.decisions.push(DecisionEvent {
                time_s: t,
                node: s,
                kind: DecisionKind::Trigger {
                    ks: decision.ks,
                    prev_ks: decision.prev_ks,
                },
            });
            self.upload(t, s)?;
        }
        self.schedule(t + self.cfg.seconds_per_inference_batch, Event::SensorBatch(s));
        Ok(())
    }

    fn fixed_upload(&mut self, t: u64, s: usize) -> Result<()> {
        self.upload(t, s)?;
        if let SchedulerKind::Fixed { upload_interval_s, .. } = self.cfg.scheduler {
            self.schedule(t + upload_interval_s, Event::SensorUpload(s));
        }
        Ok(())
    }

    /// Ships the sensor's latest batch to its client, which ingests it.
    fn upload(&mut self, t: u64, s: usize) -> Result<()> {
        let sensor = &self.sensors[s];
        let Some(buffer) = sensor.monitor.buffer() else {
            return Ok(());
        };
        let payload = encode_upload(buffer);
        let client = sensor.client;
        self.ledger.append(TransferRecord {
            time_s: t,
            link: Link::Uplink,
            bytes: payload.len() as u64,
            reason: Reason::RawData,
            client,
            sensor: Some(s),
        })?;
        let received = decode_upload(&payload, self.cfg.dim, self.cfg.classes, buffer.provenance().clone())?;
        self.clients[client].ingest_sensor_data(&received)
    }

    fn deploy(&mut self, t: u64, c: usize, forced: bool) -> Result<()> {
        let client = &self.clients[c];
        let blob = convert_model(client.model(), self.cfg.quantize);
        let reference = client.reference_confidences(&blob.decode()?)?;
        let payload = encode_deployment(&blob, &reference);
        for &s in client.sensors() {
            self.ledger.append(TransferRecord {
                time_s: t,
                link: Link::Downlink,
                bytes: payload.len() as u64,
                reason: Reason::Deploy,
                client: c,
                sensor: Some(s),
            })?;
            let (blob, reference) = decode_deployment(&payload)?;
            let sensor = &mut self.sensors[s];
            sensor.monitor.install_model(&blob, reference)?;
            sensor.cached_accuracy = None;
            if self.metrics.initial_accuracy[s].is_none() {
                self.metrics.initial_accuracy[s] = sensor.accuracy()?;
            }
        }
        self.metrics.deployments.push(DeploymentEvent {
            time_s: t,
            client: c,
            forced,
        });
        Ok(())
    }

    fn training_tick(&mut self, t: u64) -> Result<()> {
        let flare = self.cfg.scheduler == SchedulerKind::Flare;
        for c in 0..self.clients.len() {
            let decisions = self.clients[c].train_rounds(1)?;
            for d in decisions {
                self.last_sigma[c] = d.sigma_w;
                if !flare {
                    continue;
                }
                self.metrics.decisions.push(DecisionEvent {
                    time_s: t,
                    node: c,
                    kind: DecisionKind::Window {
                        branch: d.branch,
                        sigma_w: d.sigma_w,
                    },
                });
                if self.initial_deploy_done && d.action == SchedulerAction::DeployModel {
                    self.deploy(t, c, false)?;
                }
            }
        }
        self.rounds += 1;
        if self.rounds.is_multiple_of(self.cfg.aggregation_every as u64) {
            self.aggregate(t)?;
        }
        self.schedule(t + self.cfg.seconds_per_training_round, Event::TrainingTick);
        Ok(())
    }

    fn aggregate(&mut self, t: u64) -> Result<()> {
        let bytes = convert_model(self.server.global(), false).byte_count() as u64;
        for c in 0..self.clients.len() {
            self.ledger.append(TransferRecord {
                time_s: t,
                link: Link::Fl,
                bytes,
                reason: Reason::Aggregate,
                client: c,
                sensor: None,
            })?;
        }
        let locals: Vec<(&ModelParams, usize)> =
            self.clients.iter().map(|c| (c.model(), c.sample_count())).collect();
        let global = self.server.aggregate(&locals)?.clone();
        for (c, client) in self.clients.iter_mut().enumerate() {
            client.receive_global(&global)?;
            self.ledger.append(TransferRecord {
                time_s: t,
                link: Link::Fl,
                bytes,
                reason: Reason::Aggregate,
                client: c,
                sensor: None,
            })?;
        }
        Ok(())
    }

    /// Deploys every client's model regardless of scheduler and starts the
    /// sensor and fixed-interval clocks.
    fn initial_deploy(&mut self, t: u64) -> Result<()> {
        for c in 0..self.clients.len() {
            if self.cfg.scheduler == SchedulerKind::Flare {
                let sigma = self.last_sigma[c];
                self.clients[c].scheduler_mut().rebase(sigma);
            }
            self.deploy(t, c, true)?;
        }
        self.initial_deploy_done = true;

        let mut phase_rng = rng(self.cfg.phase_seed(), Stream::Phase, 0);
        let batch_s = self.cfg.seconds_per_inference_batch;
        for s in 0..self.sensors.len() {
            let offset = phase_rng.gen_range(1..=batch_s);
            self.schedule(t + offset, Event::SensorBatch(s));
        }
        if let SchedulerKind::Fixed {
            deploy_interval_s,
            upload_interval_s,
            upload_phase_s,
        } = self.cfg.scheduler
        {
            self.schedule(t + deploy_interval_s, Event::FixedDeploy);
            for s in 0..self.sensors.len() {
                let phase = upload_phase_s.unwrap_or_else(|| phase_rng.gen_range(1..=upload_interval_s));
                self.schedule(t + phase, Event::SensorUpload(s));
            }
        }
        self.schedule(t, Event::Metrics);
        Ok(())
    }

    fn fixed_deploy(&mut self, t: u64) -> Result<()> {
        for c in 0..self.clients.len() {
            self.deploy(t, c, false)?;
        }
        if let SchedulerKind::Fixed { deploy_interval_s, .. } = self.cfg.scheduler {
            self.schedule(t + deploy_interval_s, Event::FixedDeploy);
        }
        Ok(())
    }

    fn sample_metrics(&mut self, t: u64) -> Result<()> {
        for (s, sensor) in self.sensors.iter_mut().enumerate() {
            if let Some(accuracy) = sensor.accuracy()? {
                self.metrics.samples.push(MetricSample {
                    time_s: t,
                    sensor: s,
                    accuracy,
                    ks: sensor.last_ks,
                });
            }
        }
        self.schedule(t + self.cfg.metrics_interval_s, Event::Metrics);
        Ok(())
    }
}
