//! Zero-shot classification, cross-view retrieval, scenicness correlation
//! and the linear-probe upper bound.

mod metrics;
mod probe;
mod zeroshot;

use std::path::Path;

pub use metrics::{category_recall_at_k, kendall_tau, pearson_r, rank_gallery, recall_at_k};
pub use probe::{linear_probe, LinearProbe, ProbeResult};
pub use zeroshot::{
    build_class_embeddings, class_scores, scenicness_score, top1_accuracy, zero_shot_classify, ClassEmbeddingSet, Ensemble,
};

use crate::augment::{aggregate_temporal, TemporalAggregation};
use crate::contrastive::l2_normalize;
use crate::datamodel::{write_csv, LabeledDataset, SpectralTemporalCube};
use crate::encoder::{attn_pool_ground_batch, encode_satellite_batch, EncoderParams};
use crate::error::{Error, Result};

/// Normalized embeddings of every site in a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedded {
    pub site_ids: Vec<String>,
    pub satellite: Vec<Vec<f64>>,
    pub ground: Vec<Vec<f64>>,
}

/// Encodes every cube (after temporal aggregation) and attention-pools every
/// ground set, L2-normalizing both.
pub fn embed_dataset(ds: &LabeledDataset, params: &EncoderParams, temporal: TemporalAggregation) -> Result<Embedded> {
    let cubes: Vec<SpectralTemporalCube> = ds.cubes().iter().map(|c| aggregate_temporal(c, temporal)).collect::<Result<_>>()?;
    let refs: Vec<&SpectralTemporalCube> = cubes.iter().collect();
    let ground: Vec<_> = ds.ground().iter().collect();
    let norm = |vs: Vec<Vec<f64>>| vs.iter().map(|v| l2_normalize(v)).collect::<Result<Vec<_>>>();
    Ok(Embedded {
        site_ids: ds.site_ids().map(str::to_string).collect(),
        satellite: norm(encode_satellite_batch(&refs, params)?)?,
        ground: norm(attn_pool_ground_batch(&ground, params)?)?,
    })
}

/// Class index (into `classes`) of every site with a label in `taxonomy`,
/// as `(site position, class index)` pairs.
pub fn labeled_indices(ds: &LabeledDataset, taxonomy: &str, classes: &[String]) -> Result<Vec<(usize, usize)>> {
    let labels = ds.labels(taxonomy).ok_or_else(|| Error::Format(format!("dataset has no taxonomy '{taxonomy}'")))?;
    let mut out = Vec::new();
    for (i, site) in ds.site_ids().enumerate() {
        if let Some(name) = labels.get(site) {
            let c = classes
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Format(format!("label '{name}' of site '{site}' not in the {taxonomy} class list")))?;
            out.push((i, c));
        }
    }
    Ok(out)
}

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub taxonomy: String,
    pub metric: String,
    pub mode: String,
    pub temporal_setting: String,
    pub value: f64,
    pub support: usize,
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    write_csv(
        path,
        &["taxonomy", "metric", "mode", "temporal_setting", "value", "support"],
        rows.iter().map(|r| {
            vec![
                r.taxonomy.clone(),
                r.metric.clone(),
                r.mode.clone(),
                r.temporal_setting.clone(),
                r.value.to_string(),
                r.support.to_string(),
            ]
        }),
    )
}

/// `site_id,true_score,pred_score`.
pub fn write_scenicness_csv(path: &Path, rows: &[(String, f64, f64)]) -> Result<()> {
    write_csv(
        path,
        &["site_id", "true_score", "pred_score"],
        rows.iter().map(|(s, t, p)| vec![s.clone(), t.to_string(), p.to_string()]),
    )
}
