use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{argmax, Graph, Tensor};
use crate::rng;
use crate::train::AdamW;

/// Affine classifier on frozen embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    /// `[D, classes]`
    pub weight: Tensor,
    /// `[classes]`
    pub bias: Tensor,
}

impl LinearProbe {
    /// `U(-1/sqrt(D), 1/sqrt(D))` weights and zero bias.
    pub fn init(width: usize, classes: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, &[rng::TAG_PROBE]);
        let b = 1.0 / (width as f64).sqrt();
        Self {
            weight: Tensor::matrix(width, classes, (0..width * classes).map(|_| r.gen_range(-b..b)).collect()),
            bias: Tensor::zeros(&[classes]),
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let c = self.bias.len();
        let w = self.weight.data();
        let scores: Vec<f64> = (0..c)
            .map(|j| self.bias.data()[j] + x.iter().enumerate().map(|(i, v)| v * w[i * c + j]).sum::<f64>())
            .collect();
        argmax(&scores).expect("at least one class")
    }

    pub fn accuracy(&self, xs: &[Vec<f64>], labels: &[usize]) -> f64 {
        if xs.is_empty() {
            return 0.0;
        }
        xs.iter().zip(labels).filter(|(x, &l)| self.predict(x) == l).count() as f64 / xs.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub probe: LinearProbe,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Full-batch softmax regression trained with AdamW (no weight decay).
/// Embeddings are inputs only; nothing upstream is touched.
#[allow(clippy::too_many_arguments)]
pub fn linear_probe(
    train_x: &[Vec<f64>],
    train_y: &[usize],
    test_x: &[Vec<f64>],
    test_y: &[usize],
    n_classes: usize,
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<ProbeResult> {
    if n_classes < 2 {
        return Err(Error::InvalidArgument("linear probe needs at least 2 classes".into()));
    }
    if train_x.is_empty() || train_x.len() != train_y.len() || test_x.len() != test_y.len() {
        return Err(Error::CountMismatch {
            what: "probe samples and labels".into(),
            expected: train_x.len(),
            found: train_y.len(),
        });
    }
    let mut counts = vec![0usize; n_classes];
    for &y in train_y.iter().chain(test_y) {
        if y >= n_classes {
            return Err(Error::InvalidArgument(format!("label {y} out of range for {n_classes} classes")));
        }
    }
    train_y.iter().for_each(|&y| counts[y] += 1);
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::InvalidArgument(format!("class {c} has no training samples")));
    }
    let d = train_x[0].len();
    let x = Tensor::matrix(train_x.len(), d, train_x.concat());
    let mut probe = LinearProbe::init(d, n_classes, seed);
    let mut params = vec![probe.weight.clone(), probe.bias.clone()];
    let mut opt = AdamW::new(&params, 0.0);
    let names = vec!["probe.weight".to_string(), "probe.bias".to_string()];
    for _ in 0..steps {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let w = g.param(params[0].clone());
        let b = g.param(params[1].clone());
        let logits = g.linear(xv, w, b);
        let loss = g.cross_entropy_rows(logits, train_y);
        let mut grads = g.backward(loss)?;
        let gs = vec![grads.take(w).expect("weight grad"), grads.take(b).expect("bias grad")];
        opt.update(&mut params, &gs, &names, lr)?;
    }
    probe.weight = params[0].clone();
    probe.bias = params[1].clone();
    Ok(ProbeResult {
        train_accuracy: probe.accuracy(train_x, train_y),
        test_accuracy: probe.accuracy(test_x, test_y),
        probe,
    })
}
