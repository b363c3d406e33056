use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Linear warmup followed by cosine annealing to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub steps_per_epoch: usize,
}

impl Schedule {
    pub fn new(base_lr: f64, warmup_epochs: usize, total_epochs: usize, steps_per_epoch: usize) -> Result<Self> {
        if warmup_epochs >= total_epochs {
            return Err(Error::Config(format!(
                "train.warmup_epochs ({warmup_epochs}) must be below train.epochs ({total_epochs})"
            )));
        }
        if steps_per_epoch == 0 {
            return Err(Error::Config("no optimizer steps per epoch".into()));
        }
        if !(base_lr >= 0.0) {
            return Err(Error::Config(format!("train.lr must be >= 0, got {base_lr}")));
        }
        Ok(Self {
            base_lr,
            warmup_epochs,
            total_epochs,
            steps_per_epoch,
        })
    }

    pub fn warmup_steps(&self) -> usize {
        self.warmup_epochs * self.steps_per_epoch
    }

    pub fn total_steps(&self) -> usize {
        self.total_epochs * self.steps_per_epoch
    }
}

/// Learning rate at `step` (0 ..= total steps).
pub fn cosine_lr(step: usize, s: &Schedule) -> Result<f64> {
    let (w, total) = (s.warmup_steps(), s.total_steps());
    if step > total {
        return Err(Error::InvalidArgument(format!("step {step} past the end of the schedule ({total})")));
    }
    if step < w {
        return Ok(s.base_lr * step as f64 / w as f64);
    }
    let progress = (step - w) as f64 / (total - w) as f64;
    Ok(s.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// AdamW with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamW {
    /// Zeroed moments shaped like `params`.
    pub fn new(params: &[Tensor], weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.dims())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.dims())).collect(),
        }
    }

    /// One update. `names` label parameters in error messages.
    pub fn update(&mut self, params: &mut [Tensor], grads: &[Tensor], names: &[String], lr: f64) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "{} parameters, {} gradients, {} moment tensors",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        if !(lr >= 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {lr}")));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.dims() != g.dims() || p.dims() != self.m[i].dims() {
                return Err(Error::Shape(format!("parameter {} dims {:?} vs gradient {:?}", label(names, i), p.dims(), g.dims())));
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(label(names, i)));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let shrink = 1.0 - lr * self.weight_decay;
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
            for j in 0..pd.len() {
                let gj = g.data()[j];
                md[j] = self.beta1 * md[j] + (1.0 - self.beta1) * gj;
                vd[j] = self.beta2 * vd[j] + (1.0 - self.beta2) * gj * gj;
                let mhat = md[j] / c1;
                let vhat = vd[j] / c2;
                pd[j] = pd[j] * shrink - lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

fn label(names: &[String], i: usize) -> String {
    names.get(i).cloned().unwrap_or_else(|| format!("#{i}"))
}

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().flat_map(|g| g.data()).map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}
