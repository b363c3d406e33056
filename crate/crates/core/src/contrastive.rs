//! Normalization, queue-based logits, InfoNCE and the ground-embedding
//! memory queue.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::numerics::{dot, l2_norm, log_sum_exp, softmax, Graph, Tensor, Var};

/// Loss hyperparameters (`loss.*` keys).
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub queue_size: usize,
    pub tau_init: f64,
    pub tau_min: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            queue_size: 4096,
            tau_init: 0.07,
            tau_min: 0.01,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.queue_size == 0 {
            return Err(Error::Config("loss.queue_size must be positive".into()));
        }
        if !(self.tau_min > 0.0) || !(self.tau_init >= self.tau_min) {
            return Err(Error::Config(format!(
                "need 0 < loss.tau_min <= loss.tau_init, got {} and {}",
                self.tau_min, self.tau_init
            )));
        }
        Ok(())
    }

    /// Upper bound on the stored logit scale, `ln(1 / tau_min)`.
    pub fn max_logit_scale(&self) -> f64 {
        (1.0 / self.tau_min).ln()
    }
}

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = l2_norm(v);
    if !(n > 1e-12) {
        return Err(Error::Degenerate(format!("cannot normalize a vector of norm {n}")));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// FIFO ring of unit-norm ground embeddings used as negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryQueue {
    capacity: usize,
    width: usize,
    entries: VecDeque<Vec<f64>>,
}

impl MemoryQueue {
    pub fn new(capacity: usize, width: usize) -> Result<Self> {
        if capacity == 0 || width == 0 {
            return Err(Error::InvalidArgument("queue capacity and width must be positive".into()));
        }
        Ok(Self {
            capacity,
            width,
            entries: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.iter().map(Vec::as_slice)
    }

    /// Appends `z`, evicting the oldest entry when full. The stored copy is
    /// renormalized.
    pub fn push(&mut self, z: &[f64]) -> Result<()> {
        if z.len() != self.width {
            return Err(Error::Shape(format!("queue width {} but entry has {}", self.width, z.len())));
        }
        let n = l2_norm(z);
        if !((n - 1.0).abs() <= 1e-4) {
            return Err(Error::InvalidArgument(format!("queue entries must be unit norm, got norm {n}")));
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(z.iter().map(|x| x / n).collect());
        Ok(())
    }

    /// Entries as a row-major `[len, width]` buffer, oldest first.
    pub fn to_flat(&self) -> Vec<f64> {
        self.entries.iter().flatten().copied().collect()
    }

    /// Rounds stored entries to `f32` precision (checkpoint granularity).
    pub(crate) fn round_to_f32(&mut self) {
        for e in &mut self.entries {
            e.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    /// Restores a queue from rows stored oldest first.
    pub fn from_flat(capacity: usize, width: usize, flat: &[f64]) -> Result<Self> {
        let mut q = Self::new(capacity, width)?;
        if !flat.len().is_multiple_of(width) || flat.len() / width > capacity {
            return Err(Error::Format(format!(
                "queue state of {} values does not fit capacity {capacity} x width {width}",
                flat.len()
            )));
        }
        q.entries = flat.chunks(width).map(<[f64]>::to_vec).collect();
        Ok(q)
    }
}

/// `[z_S . z_G, z_S . q_1, ..., z_S . q_K']`, queue entries oldest first.
pub fn compute_logits(z_s: &[f64], z_g: &[f64], queue: &MemoryQueue) -> Result<Vec<f64>> {
    if z_s.len() != z_g.len() || z_s.len() != queue.width() {
        return Err(Error::Shape(format!(
            "logit inputs of widths {}, {} and queue width {}",
            z_s.len(),
            z_g.len(),
            queue.width()
        )));
    }
    let mut out = Vec::with_capacity(1 + queue.len());
    out.push(dot(z_s, z_g));
    out.extend(queue.iter().map(|q| dot(z_s, q)));
    Ok(out)
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be > 0, got {tau}")));
    }
    Ok(())
}

/// `-log softmax(logits / tau)[0]`.
pub fn infonce_loss(logits: &[f64], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if logits.is_empty() {
        return Err(Error::Empty("logits"));
    }
    let scaled: Vec<f64> = logits.iter().map(|l| l / tau).collect();
    Ok((log_sum_exp(&scaled) - scaled[0]).max(0.0))
}

/// Gradient of [`infonce_loss`] with respect to the logits:
/// `(softmax(logits / tau) - e_0) / tau`.
pub fn infonce_grad(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    let scaled: Vec<f64> = logits.iter().map(|l| l / tau).collect();
    let mut p = softmax(&scaled)?;
    p[0] -= 1.0;
    Ok(p.into_iter().map(|v| v / tau).collect())
}

/// Mean InfoNCE over a batch, recorded on `g`.
///
/// `z_s` and `z_g` are `[B, D]` unit rows, `inv_tau` is a one-element node.
/// With a non-empty queue each row's logits are `[z_s.z_g, z_s.Q^T]`;
/// with an empty queue the other ground rows of the batch are the negatives.
pub fn batch_infonce(g: &mut Graph, z_s: Var, z_g: Var, inv_tau: Var, queue: &MemoryQueue) -> Result<Var> {
    let b = g.value(z_s).rows();
    if b < 2 && queue.is_empty() {
        return Err(Error::InvalidArgument("batch of 1 with an empty queue has no negatives".into()));
    }
    let (logits, targets) = if queue.is_empty() {
        (g.matmul_ex(z_s, z_g, true), (0..b).collect::<Vec<_>>())
    } else {
        let q = g.constant(Tensor::matrix(queue.len(), queue.width(), queue.to_flat()));
        let pos = g.row_dot(z_s, z_g);
        let neg = g.matmul_ex(z_s, q, true);
        (g.concat_cols(pos, neg), vec![0; b])
    };
    let scaled = g.mul_scalar(logits, inv_tau);
    Ok(g.cross_entropy_rows(scaled, &targets))
}
