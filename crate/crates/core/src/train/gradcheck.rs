use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::contrastive::{batch_infonce, l2_normalize, MemoryQueue};
use crate::datamodel::{GroundEmbeddingSet, SpectralTemporalCube};
use crate::encoder::forward::{encode_batch, inverse_temperature, pool_ground_batch, Bound};
use crate::encoder::{EncoderConfig, EncoderParams, LOGIT_SCALE, POOL_QUERY};
use crate::error::{Error, Result};
use crate::numerics::check::{finite_difference_grads, relative_error};
use crate::numerics::{Graph, Tensor};
use crate::rng;

/// Result of comparing analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `(parameter name, relative error)` for every parameter tensor.
    pub per_param: Vec<(String, f64)>,
    /// Relative error of the attention-pool query under a pool-only loss.
    pub pool_only: f64,
}

impl GradCheckReport {
    pub fn max(&self) -> f64 {
        self.per_param.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    pub fn temperature(&self) -> f64 {
        self.per_param.iter().find(|(n, _)| n == LOGIT_SCALE).map_or(f64::NAN, |(_, e)| *e)
    }

    pub fn worst(&self) -> Option<&(String, f64)> {
        self.per_param.iter().max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

struct Problem {
    params: EncoderParams,
    cubes: Vec<SpectralTemporalCube>,
    ground: Vec<GroundEmbeddingSet>,
    queue: MemoryQueue,
}

fn problem(config: &EncoderConfig, seed: u64) -> Result<Problem> {
    let mut params = EncoderParams::init(config, 0.07, seed)?;
    let mut r = rng::stream(seed, &[rng::TAG_INIT, 1]);
    // a random pool query so the pooling softmax is not uniform
    for v in params.get_mut(POOL_QUERY).expect("pool query").data_mut() {
        *v = StandardNormal.sample(&mut r);
    }
    let d = config.output_width;
    let mut cube = |months: Vec<u8>| {
        let n = months.len() * config.input_width();
        SpectralTemporalCube::new("gc", months, config.bands, config.patch, config.patch, (0..n).map(|_| r.gen_range(-1.0..1.0)).collect())
    };
    // ragged batch of two
    let cubes = vec![cube(vec![1, 4, 7, 10])?, cube(vec![2, 3, 11])?];
    let vec_d = |r: &mut rand_chacha::ChaCha8Rng| (0..d).map(|_| StandardNormal.sample(r)).collect::<Vec<f64>>();
    let mut ground = Vec::new();
    for i in 0..2 {
        ground.push(GroundEmbeddingSet::new(format!("g{i}"), [vec_d(&mut r), vec_d(&mut r), vec_d(&mut r), vec_d(&mut r)])?);
    }
    let mut queue = MemoryQueue::new(8, d)?;
    for _ in 0..3 {
        queue.push(&l2_normalize(&vec_d(&mut r))?)?;
    }
    Ok(Problem {
        params,
        cubes,
        ground,
        queue,
    })
}

fn full_loss(p: &Problem, params: &EncoderParams, g: &mut Graph, trainable: bool) -> Result<(crate::numerics::Var, Vec<crate::numerics::Var>)> {
    let b = Bound::new(g, params, trainable);
    let cubes: Vec<_> = p.cubes.iter().collect();
    let ground: Vec<_> = p.ground.iter().collect();
    let s = encode_batch(g, &b, &cubes)?;
    let zs = g.l2_normalize_rows(s)?;
    let pooled = pool_ground_batch(g, &b, &ground)?;
    let zg = g.l2_normalize_rows(pooled)?;
    let it = inverse_temperature(g, &b);
    let loss = batch_infonce(g, zs, zg, it, &p.queue)?;
    Ok((loss, b.vars().to_vec()))
}

fn with_tensors(base: &EncoderParams, ts: &[Tensor]) -> EncoderParams {
    let mut p = base.clone();
    p.tensors_mut().clone_from_slice(ts);
    p
}

/// Central-difference check of every parameter under the InfoNCE loss on a
/// ragged batch of two, with a partially filled queue. Intended for tiny
/// configurations (every scalar is perturbed twice).
pub fn grad_check_model(config: &EncoderConfig, seed: u64) -> Result<GradCheckReport> {
    let p = problem(config, seed)?;
    let mut g = Graph::new();
    let (loss, vars) = full_loss(&p, &p.params, &mut g, true)?;
    let mut grads = g.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(p.params.tensors())
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.dims())))
        .collect();
    let mut ts = p.params.tensors().to_vec();
    let numeric = finite_difference_grads(&mut ts, |ts| {
        let params = with_tensors(&p.params, ts);
        let mut g = Graph::new();
        let (loss, _) = full_loss(&p, &params, &mut g, false)?;
        Ok(g.value(loss).data()[0])
    })?;
    let per_param = p
        .params
        .names()
        .iter()
        .zip(analytic.iter().zip(&numeric))
        .map(|(n, (a, f))| (n.clone(), relative_error(a, f)))
        .collect();
    Ok(GradCheckReport {
        per_param,
        pool_only: pool_check(&p)?,
    })
}

fn pool_check(p: &Problem) -> Result<f64> {
    let d = p.params.config().output_width;
    let ground: Vec<_> = p.ground.iter().collect();
    let weights: Vec<f64> = (0..ground.len() * d).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
    let qi = p.params.index_of(POOL_QUERY).ok_or_else(|| Error::Format("no pool query".into()))?;
    let eval = |params: &EncoderParams, trainable: bool| -> Result<(Graph, crate::numerics::Var, crate::numerics::Var)> {
        let mut g = Graph::new();
        let b = Bound::new(&mut g, params, trainable);
        let pooled = pool_ground_batch(&mut g, &b, &ground)?;
        let w = g.constant(Tensor::matrix(ground.len(), d, weights.clone()));
        let dots = g.row_dot(pooled, w);
        let s = g.sum(dots);
        let q = b.vars()[qi];
        Ok((g, s, q))
    };
    let (g, s, q) = eval(&p.params, true)?;
    let analytic = g.backward(s)?.get(q).cloned().unwrap_or_else(|| Tensor::zeros(&[d]));
    let mut ts = vec![p.params.tensors()[qi].clone()];
    let numeric = finite_difference_grads(&mut ts, |ts| {
        let mut params = p.params.clone();
        params.tensors_mut()[qi] = ts[0].clone();
        let (g, s, _) = eval(&params, false)?;
        Ok(g.value(s).data()[0])
    })?;
    Ok(relative_error(&analytic, &numeric[0]))
}
