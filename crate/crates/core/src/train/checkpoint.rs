use std::path::Path;

use super::optim::AdamW;
use super::trainer::{read_loss_csv, write_loss_csv, TrainState};
use crate::contrastive::MemoryQueue;
use crate::datamodel::{kv, read_tensor_f64, write_tensor_f64};
use crate::encoder::{load_params, save_params, ENCODER_MANIFEST};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Loss log written inside every checkpoint directory.
pub const LOSS_LOG: &str = "loss.csv";

/// Writes parameters, optimizer moments, queue contents, seed, epoch and the
/// loss log. All tensors must already be `f32`-representable for a
/// bit-exact reload (the trainer guarantees this at epoch boundaries).
pub fn save_checkpoint(dir: &Path, st: &TrainState) -> Result<()> {
    let mut pairs = save_params(dir, &st.params)?;
    for (i, name) in st.params.names().iter().enumerate() {
        for (tag, t) in [("m", &st.optimizer.m[i]), ("v", &st.optimizer.v[i])] {
            let file = format!("optim.{tag}.{name}.tsr");
            write_tensor_f64(dir.join(&file), t.dims(), t.data())?;
            pairs.insert(format!("optim.{tag}.{name}"), file);
        }
    }
    let o = &st.optimizer;
    for (k, v) in [
        ("optim.step", o.step.to_string()),
        ("optim.beta1", o.beta1.to_string()),
        ("optim.beta2", o.beta2.to_string()),
        ("optim.eps", o.eps.to_string()),
        ("optim.weight_decay", o.weight_decay.to_string()),
        ("queue.capacity", st.queue.capacity().to_string()),
        ("queue.width", st.queue.width().to_string()),
        ("queue.len", st.queue.len().to_string()),
        ("state.seed", st.seed.to_string()),
        ("state.epoch", st.epoch.to_string()),
        ("state.loss_log", LOSS_LOG.to_string()),
    ] {
        pairs.insert(k.to_string(), v);
    }
    if !st.queue.is_empty() {
        write_tensor_f64(dir.join("queue.tsr"), &[st.queue.len(), st.queue.width()], &st.queue.to_flat())?;
        pairs.insert("queue.file".into(), "queue.tsr".into());
    }
    write_loss_csv(&dir.join(LOSS_LOG), &st.log)?;
    kv::write(&dir.join(ENCODER_MANIFEST), &pairs)
}

pub fn load_checkpoint(dir: &Path) -> Result<TrainState> {
    let params = load_params(dir)?;
    let pairs = kv::read(&dir.join(ENCODER_MANIFEST))?;
    let get = |k: &str| pairs.get(k).ok_or_else(|| Error::Format(format!("checkpoint missing '{k}'")));
    fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
        v.parse().map_err(|_| Error::Format(format!("checkpoint key '{k}': bad value '{v}'")))
    }
    let mut m = Vec::new();
    let mut v = Vec::new();
    for (name, p) in params.iter() {
        for (tag, out) in [("m", &mut m), ("v", &mut v)] {
            let (dims, data) = read_tensor_f64(dir.join(get(&format!("optim.{tag}.{name}"))?))?;
            if dims != p.dims() {
                return Err(Error::Shape(format!("optimizer moment for '{name}' has dims {dims:?}")));
            }
            out.push(Tensor::new(dims, data)?);
        }
    }
    let optimizer = AdamW {
        beta1: num("optim.beta1", get("optim.beta1")?)?,
        beta2: num("optim.beta2", get("optim.beta2")?)?,
        eps: num("optim.eps", get("optim.eps")?)?,
        weight_decay: num("optim.weight_decay", get("optim.weight_decay")?)?,
        step: num("optim.step", get("optim.step")?)?,
        m,
        v,
    };
    let capacity: usize = num("queue.capacity", get("queue.capacity")?)?;
    let width: usize = num("queue.width", get("queue.width")?)?;
    let len: usize = num("queue.len", get("queue.len")?)?;
    let flat = match pairs.get("queue.file") {
        Some(f) => {
            let (dims, data) = read_tensor_f64(dir.join(f))?;
            if dims != [len, width] {
                return Err(Error::Shape(format!("queue tensor dims {dims:?}, expected [{len}, {width}]")));
            }
            data
        }
        None if len == 0 => Vec::new(),
        None => return Err(Error::Format("checkpoint queue.len > 0 but no queue.file".into())),
    };
    let queue = MemoryQueue::from_flat(capacity, width, &flat)?;
    let log = read_loss_csv(&dir.join(get("state.loss_log")?))?;
    let epoch: usize = num("state.epoch", get("state.epoch")?)?;
    if log.len() != epoch {
        return Err(Error::CountMismatch {
            what: "loss log rows".into(),
            expected: epoch,
            found: log.len(),
        });
    }
    Ok(TrainState {
        params,
        optimizer,
        queue,
        seed: num("state.seed", get("state.seed")?)?,
        epoch,
        log,
    })
}
