use std::path::Path;

use rand::seq::SliceRandom;

use super::optim::{clip_global_norm, cosine_lr, AdamW, Schedule};
use crate::augment::{augment, AugmentConfig, Strategy};
use crate::config::RunConfig;
use crate::contrastive::{batch_infonce, LossConfig, MemoryQueue};
use crate::datamodel::{csv_err, write_csv, LabeledDataset, SpectralTemporalCube};
use crate::encoder::forward::{encode_batch, inverse_temperature, pool_ground_batch, Bound};
use crate::encoder::{EncoderConfig, EncoderParams, LOGIT_SCALE};
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor};
use crate::rng;

/// Optimizer and loop settings (`train.*` keys).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    pub clip_norm: f64,
    /// Stop early after this many completed epochs, keeping the schedule of
    /// the full run (used to produce resumable checkpoints).
    pub stop_after: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            lr: 1e-4,
            weight_decay: 0.01,
            warmup_epochs: 10,
            clip_norm: 1.0,
            stop_after: None,
        }
    }
}

/// Everything that determines a training run besides the data and seed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainSetup {
    pub encoder: EncoderConfig,
    pub loss: LossConfig,
    pub augment: AugmentConfig,
    pub train: TrainConfig,
}

impl TrainSetup {
    pub fn from_config(c: &RunConfig) -> Result<Self> {
        let encoder = EncoderConfig::from_pairs(&c.section("encoder."))?;
        let d = LossConfig::default();
        let loss = LossConfig {
            queue_size: c.parse_or("loss.queue_size", d.queue_size)?,
            tau_init: c.parse_or("loss.tau_init", d.tau_init)?,
            tau_min: c.parse_or("loss.tau_min", d.tau_min)?,
        };
        let a = AugmentConfig::default();
        let rgb_band_indices = match c.get("augment.rgb_bands") {
            None => a.rgb_band_indices,
            Some(s) if s.trim().is_empty() => Vec::new(),
            Some(s) => s
                .split(',')
                .map(|b| b.trim().parse().map_err(|_| Error::Config(format!("augment.rgb_bands: bad index '{b}'"))))
                .collect::<Result<_>>()?,
        };
        let augment = AugmentConfig {
            strategy: c.get("augment.strategy").map(str::parse::<Strategy>).transpose()?.unwrap_or(a.strategy),
            apply_probability: c.parse_or("augment.prob", a.apply_probability)?,
            rgb_band_indices,
            seed: c.seed()?,
        };
        let t = TrainConfig::default();
        let train = TrainConfig {
            epochs: c.parse_or("train.epochs", t.epochs)?,
            batch_size: c.parse_or("train.batch_size", t.batch_size)?,
            lr: c.parse_or("train.lr", t.lr)?,
            weight_decay: c.parse_or("train.weight_decay", t.weight_decay)?,
            warmup_epochs: c.parse_or("train.warmup_epochs", t.warmup_epochs)?,
            clip_norm: c.parse_or("train.clip_norm", t.clip_norm)?,
            stop_after: c.parse_opt("train.stop_after")?,
        };
        let s = Self {
            encoder,
            loss,
            augment,
            train,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.loss.validate()?;
        self.augment.validate(self.encoder.bands)?;
        let t = &self.train;
        if t.batch_size < 2 {
            return Err(Error::Config("train.batch_size must be at least 2".into()));
        }
        if t.epochs == 0 || t.warmup_epochs >= t.epochs {
            return Err(Error::Config(format!(
                "need 0 <= train.warmup_epochs < train.epochs, got {} and {}",
                t.warmup_epochs, t.epochs
            )));
        }
        if !(t.clip_norm > 0.0) || !(t.weight_decay >= 0.0) || !(t.lr >= 0.0) {
            return Err(Error::Config("train.clip_norm must be > 0, train.lr and train.weight_decay >= 0".into()));
        }
        if self.loss.queue_size <= t.batch_size {
            return Err(Error::Config("loss.queue_size must exceed train.batch_size".into()));
        }
        Ok(())
    }
}

/// One row of the loss log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Sample-weighted mean training loss.
    pub mean_loss: f64,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
}

/// Complete resumable state of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: EncoderParams,
    pub optimizer: AdamW,
    pub queue: MemoryQueue,
    pub seed: u64,
    /// Completed epochs.
    pub epoch: usize,
    pub log: Vec<EpochLog>,
}

impl TrainState {
    pub fn fresh(setup: &TrainSetup, seed: u64) -> Result<Self> {
        let mut params = EncoderParams::init(&setup.encoder, setup.loss.tau_init, seed)?;
        snap(params.tensors_mut());
        let optimizer = AdamW::new(params.tensors(), setup.train.weight_decay);
        let queue = MemoryQueue::new(setup.loss.queue_size, setup.encoder.output_width)?;
        Ok(Self {
            params,
            optimizer,
            queue,
            seed,
            epoch: 0,
            log: Vec::new(),
        })
    }

    /// Optimizer steps taken so far.
    pub fn step(&self) -> u64 {
        self.optimizer.step
    }
}

fn snap(ts: &mut [Tensor]) {
    ts.iter_mut().for_each(Tensor::round_to_f32);
}

fn check_data(ds: &LabeledDataset, enc: &EncoderConfig) -> Result<()> {
    if ds.len() < 2 {
        return Err(Error::InvalidArgument("training needs at least 2 sites".into()));
    }
    for c in ds.cubes() {
        if c.step_len() != enc.input_width() {
            return Err(Error::Config(format!(
                "site '{}' has timestep width {} but the encoder expects {} (encoder.bands x encoder.patch^2)",
                c.site_id,
                c.step_len(),
                enc.input_width()
            )));
        }
    }
    if let Some(g) = ds.ground().iter().find(|g| g.width() != enc.output_width) {
        return Err(Error::Config(format!(
            "site '{}' has ground width {} but encoder.output_width is {}",
            g.site_id,
            g.width(),
            enc.output_width
        )));
    }
    Ok(())
}

/// Per-epoch visiting order: a seeded permutation of `0..n`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, &[rng::TAG_SHUFFLE, epoch as u64]));
    idx
}

/// Contrastive training. Starts from `resume` when given, otherwise from a
/// fresh initialization under `seed`. `on_epoch` sees every completed epoch.
///
/// Parameters, moments and the queue are rounded to `f32` at each epoch
/// boundary so a checkpoint written there resumes bit-exactly.
pub fn train_contrastive(
    ds: &LabeledDataset,
    setup: &TrainSetup,
    seed: u64,
    resume: Option<TrainState>,
    mut on_epoch: impl FnMut(&TrainState),
) -> Result<TrainState> {
    setup.validate()?;
    check_data(ds, &setup.encoder)?;
    let mut st = match resume {
        Some(s) => {
            if s.params.config() != &setup.encoder || s.seed != seed {
                return Err(Error::Config("resume checkpoint was written with a different encoder config or seed".into()));
            }
            s
        }
        None => TrainState::fresh(setup, seed)?,
    };
    let tc = &setup.train;
    let n = ds.len();
    let steps_per_epoch = n.div_ceil(tc.batch_size);
    let schedule = Schedule::new(tc.lr, tc.warmup_epochs, tc.epochs, steps_per_epoch)?;
    let last = tc.stop_after.map_or(tc.epochs, |s| s.min(tc.epochs));
    let max_scale = setup.loss.max_logit_scale();
    let scale_idx = st.params.index_of(LOGIT_SCALE).expect("logit scale");
    let names = st.params.names().to_vec();
    let aug = AugmentConfig {
        seed,
        ..setup.augment.clone()
    };

    while st.epoch < last {
        let epoch = st.epoch;
        let order = epoch_order(seed, epoch, n);
        let mut total = 0.0;
        let mut lr = 0.0;
        for batch in order.chunks(tc.batch_size) {
            let step = st.optimizer.step as usize;
            let cubes: Vec<SpectralTemporalCube> = batch
                .iter()
                .map(|&i| {
                    let mut r = aug.sample_rng(epoch as u64, i as u64);
                    augment(&ds.cubes()[i], &aug, &mut r).cube
                })
                .collect();
            let cube_refs: Vec<&SpectralTemporalCube> = cubes.iter().collect();
            let ground: Vec<_> = batch.iter().map(|&i| &ds.ground()[i]).collect();

            let mut g = Graph::new();
            let b = Bound::new(&mut g, &st.params, true);
            let s = encode_batch(&mut g, &b, &cube_refs)?;
            let zs = g.l2_normalize_rows(s)?;
            let pooled = pool_ground_batch(&mut g, &b, &ground)?;
            let zg = g.l2_normalize_rows(pooled)?;
            let inv_tau = inverse_temperature(&mut g, &b);
            let loss = batch_infonce(&mut g, zs, zg, inv_tau, &st.queue)?;
            let value = g.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            let mut grads_by_var = g.backward(loss)?;
            let mut grads: Vec<Tensor> = b
                .vars()
                .iter()
                .zip(st.params.tensors())
                .map(|(&v, p)| grads_by_var.take(v).unwrap_or_else(|| Tensor::zeros(p.dims())))
                .collect();
            clip_global_norm(&mut grads, tc.clip_norm);
            lr = cosine_lr(step + 1, &schedule)?;
            let zg_rows = g.value(zg).clone();
            drop(b);
            st.optimizer.update(st.params.tensors_mut(), &grads, &names, lr)?;
            let ls = &mut st.params.tensors_mut()[scale_idx].data_mut()[0];
            *ls = ls.min(max_scale);
            for r in 0..zg_rows.rows() {
                st.queue.push(zg_rows.row(r))?;
            }
            total += value * batch.len() as f64;
        }
        snap(st.params.tensors_mut());
        snap(&mut st.optimizer.m);
        snap(&mut st.optimizer.v);
        st.queue.round_to_f32();
        st.epoch += 1;
        st.log.push(EpochLog {
            epoch: st.epoch,
            mean_loss: total / n as f64,
            lr,
        });
        on_epoch(&st);
    }
    Ok(st)
}

/// `epoch,mean_loss,lr` CSV. Values are written in shortest round-trip form.
pub fn write_loss_csv(path: &Path, log: &[EpochLog]) -> Result<()> {
    write_csv(
        path,
        &["epoch", "mean_loss", "lr"],
        log.iter().map(|r| vec![r.epoch.to_string(), r.mean_loss.to_string(), r.lr.to_string()]),
    )
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<EpochLog>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let bad = || Error::Format(format!("{}: malformed loss log row", path.display()));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != 3 {
            return Err(bad());
        }
        out.push(EpochLog {
            epoch: rec[0].parse().map_err(|_| bad())?,
            mean_loss: rec[1].parse().map_err(|_| bad())?,
            lr: rec[2].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}
