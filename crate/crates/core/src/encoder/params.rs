use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::EncoderConfig;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng;

pub const LOGIT_SCALE: &str = "logit_scale";
pub const POOL_QUERY: &str = "pool.query";

/// Name and shape of every learnable tensor, in a fixed order.
pub fn param_shapes(c: &EncoderConfig) -> Vec<(String, Vec<usize>)> {
    let (w, f, h, d) = (c.model_width, c.ffn_width, c.head_width, c.output_width);
    let mut s: Vec<(String, Vec<usize>)> = vec![
        ("embed.weight".into(), vec![c.input_width(), w]),
        ("embed.bias".into(), vec![w]),
        ("pos".into(), vec![c.position_slots, w]),
        ("cls".into(), vec![1, w]),
    ];
    for l in 0..c.layers {
        let p = |n: &str| format!("layer{l}.{n}");
        s.extend([
            (p("ln1.gain"), vec![w]),
            (p("ln1.bias"), vec![w]),
            (p("attn.qkv.weight"), vec![w, 3 * w]),
            (p("attn.qkv.bias"), vec![3 * w]),
            (p("attn.out.weight"), vec![w, w]),
            (p("attn.out.bias"), vec![w]),
            (p("ln2.gain"), vec![w]),
            (p("ln2.bias"), vec![w]),
            (p("ffn.up.weight"), vec![w, f]),
            (p("ffn.up.bias"), vec![f]),
            (p("ffn.down.weight"), vec![f, w]),
            (p("ffn.down.bias"), vec![w]),
        ]);
    }
    s.extend([
        ("final_ln.gain".into(), vec![w]),
        ("final_ln.bias".into(), vec![w]),
        ("head.fc1.weight".into(), vec![w, h]),
        ("head.fc1.bias".into(), vec![h]),
        ("head.fc2.weight".into(), vec![h, d]),
        ("head.fc2.bias".into(), vec![d]),
        (POOL_QUERY.into(), vec![d]),
        (LOGIT_SCALE.into(), vec![1]),
    ]);
    s
}

/// Exact number of learnable scalars, including the attention-pool query and
/// the temperature.
pub fn param_count(c: &EncoderConfig) -> usize {
    param_shapes(c).iter().map(|(_, d)| d.iter().product::<usize>()).sum()
}

/// Learnable tensors of the satellite encoder, the ground attention pool and
/// the contrastive temperature (stored as `log(1/tau)`).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    config: EncoderConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl EncoderParams {
    /// Random initialization: linear layers `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
    /// position embeddings and class token `N(0, 0.02)`, layer norms at
    /// identity, pooling query at zero (uniform pooling).
    pub fn init(config: &EncoderConfig, tau_init: f64, seed: u64) -> Result<Self> {
        config.validate()?;
        if !(tau_init > 0.0) {
            return Err(Error::Config(format!("loss.tau_init must be > 0, got {tau_init}")));
        }
        let mut rng = rng::stream(seed, &[rng::TAG_INIT]);
        let normal = Normal::new(0.0, 0.02).expect("valid normal");
        let shapes = param_shapes(config);
        let mut names = Vec::with_capacity(shapes.len());
        let mut tensors = Vec::with_capacity(shapes.len());
        for (name, dims) in shapes {
            let n: usize = dims.iter().product();
            let data: Vec<f64> = if name == LOGIT_SCALE {
                vec![(1.0 / tau_init).ln()]
            } else if name == POOL_QUERY || name.ends_with("ln1.bias") || name.ends_with("ln2.bias") || name == "final_ln.bias" {
                vec![0.0; n]
            } else if name.ends_with(".gain") {
                vec![1.0; n]
            } else if name == "pos" || name == "cls" {
                (0..n).map(|_| normal.sample(&mut rng)).collect()
            } else {
                let fan_in = linear_fan_in(config, &name);
                let bound = 1.0 / (fan_in as f64).sqrt();
                (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
            };
            names.push(name);
            tensors.push(Tensor::new(dims, data)?);
        }
        Ok(Self {
            config: config.clone(),
            names,
            tensors,
        })
    }

    /// Assembles parameters from named tensors, checking names and shapes.
    pub fn from_named(config: &EncoderConfig, mut named: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let shapes = param_shapes(config);
        let mut names = Vec::with_capacity(shapes.len());
        let mut tensors = Vec::with_capacity(shapes.len());
        for (name, dims) in shapes {
            let pos = named
                .iter()
                .position(|(n, _)| *n == name)
                .ok_or_else(|| Error::Format(format!("missing parameter '{name}'")))?;
            let (_, t) = named.swap_remove(pos);
            if t.dims() != dims.as_slice() {
                return Err(Error::Shape(format!("parameter '{name}' has dims {:?}, expected {dims:?}", t.dims())));
            }
            if let Some(i) = t.first_non_finite() {
                return Err(Error::NonFinite {
                    what: format!("parameter '{name}'"),
                    index: i,
                });
            }
            names.push(name);
            tensors.push(t);
        }
        if let Some((extra, _)) = named.first() {
            return Err(Error::Format(format!("unexpected parameter '{extra}'")));
        }
        Ok(Self {
            config: config.clone(),
            names,
            tensors,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(move |i| &mut self.tensors[i])
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Current temperature `tau = exp(-logit_scale)`.
    pub fn temperature(&self) -> f64 {
        (-self.get(LOGIT_SCALE).expect("logit_scale").data()[0]).exp()
    }
}

fn linear_fan_in(c: &EncoderConfig, name: &str) -> usize {
    let leaf = name.rsplit_once('.').map(|(prefix, _)| prefix).unwrap_or(name);
    if leaf == "embed" {
        c.input_width()
    } else if leaf.ends_with("ffn.down") {
        c.ffn_width
    } else if leaf == "head.fc2" {
        c.head_width
    } else {
        c.model_width
    }
}
