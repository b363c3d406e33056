//! Deterministic synthetic phenology data.
//!
//! Every class gets a seasonal profile per band,
//! `base_b + A sin(2 pi m / 12 + phi_c + psi_b)`, with the class phase
//! `phi_c = 2 pi c / n_classes`, plus Gaussian noise per site. Each class
//! also gets a random unit prototype `u_c`; a site's four ground embeddings
//! are `normalize(u_c + noise)`. Ground embeddings never see the cube, so
//! the encoder has to learn the mapping.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::config::RunConfig;
use crate::contrastive::l2_normalize;
use crate::datamodel::{
    write_dataset, write_prompt_tables, GroundEmbeddingSet, LabeledDataset, PromptEmbeddingTable, SpectralTemporalCube,
};
use crate::error::{Error, Result};
use crate::rng;

/// Taxonomy name of the synthetic class labels.
pub const TAXONOMY: &str = "landcover";
/// Taxonomy name of the value-tagged scenicness prompt table.
pub const SCENICNESS_TAXONOMY: &str = "scenicness";
/// Prompts per class in the descriptive style.
pub const DESCRIPTIVE_PROMPTS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub sites_per_class: usize,
    pub timesteps: usize,
    pub bands: usize,
    pub embed_width: usize,
    /// Standard deviation of per-value cube noise.
    pub noise_std: f64,
    /// Seasonal amplitude `A`.
    pub amplitude: f64,
    /// Norm of the noise added to ground and prompt embeddings.
    pub embed_noise: f64,
    /// Fraction of each class held out for evaluation.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_classes: 8,
            sites_per_class: 64,
            timesteps: 12,
            bands: 10,
            embed_width: 512,
            noise_std: 0.05,
            amplitude: 0.2,
            embed_noise: 0.3,
            test_fraction: 0.25,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn from_config(c: &RunConfig) -> Result<Self> {
        let d = Self::default();
        let s = Self {
            n_classes: c.parse_or("synth.n_classes", d.n_classes)?,
            sites_per_class: c.parse_or("synth.sites_per_class", d.sites_per_class)?,
            timesteps: c.parse_or("synth.timesteps", d.timesteps)?,
            bands: c.parse_or("synth.bands", d.bands)?,
            embed_width: c.parse_or("synth.embed_width", d.embed_width)?,
            noise_std: c.parse_or("synth.noise_std", d.noise_std)?,
            test_fraction: c.parse_or("synth.test_fraction", d.test_fraction)?,
            seed: c.seed()?,
            ..d
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 || self.sites_per_class == 0 || self.bands == 0 || self.embed_width < 2 {
            return Err(Error::Config("synth needs >= 2 classes, >= 1 site per class, bands and width > 0".into()));
        }
        if !(1..=12).contains(&self.timesteps) {
            return Err(Error::Config(format!("synth.timesteps must be in 1..=12, got {}", self.timesteps)));
        }
        if !(self.noise_std >= 0.0) || !(self.embed_noise >= 0.0) || !(self.amplitude > 0.0) {
            return Err(Error::Config("synth noise must be >= 0 and amplitude > 0".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config(format!("synth.test_fraction must be in [0,1), got {}", self.test_fraction)));
        }
        Ok(())
    }

    /// Held-out sites per class.
    pub fn test_per_class(&self) -> usize {
        (self.sites_per_class as f64 * self.test_fraction).round() as usize
    }

    /// Lower bound on the largest per-entry difference between any two
    /// noise-free class cubes over 12 monthly steps:
    /// `2 A sin(pi / n_classes) cos(pi / 12)`.
    pub fn amplitude_gap(&self) -> f64 {
        let pi = std::f64::consts::PI;
        2.0 * self.amplitude * (pi / self.n_classes as f64).sin() * (pi / 12.0).cos()
    }

    pub fn class_name(c: usize) -> String {
        format!("class_{c}")
    }
}

/// Generated datasets and prompt tables.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    /// `(style, table)` for the class taxonomy.
    pub prompts: Vec<(&'static str, PromptEmbeddingTable)>,
    /// Value-tagged scenicness prompts, same styles.
    pub scenicness_prompts: Vec<(&'static str, PromptEmbeddingTable)>,
    pub prototypes: Vec<Vec<f64>>,
}

fn noisy_unit(base: &[f64], noise_norm: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let s = noise_norm / (base.len() as f64).sqrt();
    let v: Vec<f64> = base.iter().map(|b| b + s * Distribution::<f64>::sample(&StandardNormal, rng)).collect();
    l2_normalize(&v)
}

fn gaussian_unit(d: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    l2_normalize(&(0..d).map(|_| StandardNormal.sample(rng)).collect::<Vec<f64>>())
}

/// Calendar months used for `t` steps: evenly spread over the year.
fn months(t: usize) -> Vec<u8> {
    (0..t).map(|i| (1 + i * 12 / t) as u8).collect()
}

/// Noise-free seasonal cube of class `c`, `[T, C]` row-major.
pub fn class_profile(spec: &SynthSpec, c: usize, band_base: &[f64], band_phase: &[f64]) -> Vec<f64> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let phi = two_pi * c as f64 / spec.n_classes as f64;
    let mut out = Vec::with_capacity(spec.timesteps * spec.bands);
    for m in months(spec.timesteps) {
        for b in 0..spec.bands {
            out.push(band_base[b] + spec.amplitude * (two_pi * m as f64 / 12.0 + phi + band_phase[b]).sin());
        }
    }
    out
}

/// Cubes, ground sets, labels and scenicness of one split.
type Split = (Vec<SpectralTemporalCube>, Vec<GroundEmbeddingSet>, BTreeMap<String, String>, BTreeMap<String, f64>);

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut r = rng::stream(spec.seed, &[rng::TAG_SYNTH]);
    let band_base: Vec<f64> = (0..spec.bands).map(|_| r.gen_range(0.2..0.5)).collect();
    let band_phase: Vec<f64> = (0..spec.bands).map(|_| r.gen_range(0.0..std::f64::consts::TAU)).collect();
    let prototypes: Vec<Vec<f64>> = (0..spec.n_classes).map(|_| gaussian_unit(spec.embed_width, &mut r)).collect::<Result<_>>()?;

    // scenicness: one distinct value per class spread over [2, 9]
    let mut class_value: Vec<f64> = (0..spec.n_classes)
        .map(|c| 2.0 + 7.0 * c as f64 / (spec.n_classes - 1) as f64)
        .collect();
    class_value.shuffle(&mut r);

    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).expect("valid normal");
    let n_test = spec.test_per_class();
    let mut split: [Split; 2] = Default::default();
    let month_list = months(spec.timesteps);
    for c in 0..spec.n_classes {
        let profile = class_profile(spec, c, &band_base, &band_phase);
        for i in 0..spec.sites_per_class {
            let site = format!("site_{c:02}_{i:03}");
            let values: Vec<f64> = profile
                .iter()
                .map(|v| if spec.noise_std > 0.0 { v + noise.sample(&mut r) } else { *v })
                .collect();
            let cube = SpectralTemporalCube::new(site.clone(), month_list.clone(), spec.bands, 1, 1, values)?;
            let dirs = [
                noisy_unit(&prototypes[c], spec.embed_noise, &mut r)?,
                noisy_unit(&prototypes[c], spec.embed_noise, &mut r)?,
                noisy_unit(&prototypes[c], spec.embed_noise, &mut r)?,
                noisy_unit(&prototypes[c], spec.embed_noise, &mut r)?,
            ];
            let score = (class_value[c] + r.gen_range(-0.5..0.5)).clamp(1.0, 10.0);
            let k = usize::from(i >= spec.sites_per_class - n_test);
            split[k].0.push(cube);
            split[k].1.push(GroundEmbeddingSet::new(site.clone(), dirs)?);
            split[k].2.insert(site.clone(), SynthSpec::class_name(c));
            split[k].3.insert(site, score);
        }
    }
    let [train, test] = split.map(|(cubes, ground, labels, scores)| {
        LabeledDataset::new(cubes, ground, BTreeMap::from([(TAXONOMY.to_string(), labels)]), Some(scores))
    });

    let classes: Vec<String> = (0..spec.n_classes).map(SynthSpec::class_name).collect();
    let mut prompts = Vec::new();
    let mut scenic = Vec::new();
    for style in crate::datamodel::PROMPT_STYLES {
        let per_class = match style {
            "class" => 1,
            "template" => 1,
            _ => DESCRIPTIVE_PROMPTS,
        };
        let vecs: Vec<Vec<Vec<f64>>> = prototypes
            .iter()
            .map(|u| {
                (0..per_class)
                    .map(|_| if style == "class" { Ok(u.clone()) } else { noisy_unit(u, spec.embed_noise, &mut r) })
                    .collect::<Result<_>>()
            })
            .collect::<Result<_>>()?;
        let values: Vec<Vec<f64>> = class_value.iter().map(|&v| vec![v; per_class]).collect();
        prompts.push((style, PromptEmbeddingTable::new(TAXONOMY, classes.clone(), vecs.clone(), None)?));
        let scenic_classes = classes.iter().map(|c| format!("scenic_{c}")).collect();
        scenic.push((style, PromptEmbeddingTable::new(SCENICNESS_TAXONOMY, scenic_classes, vecs, Some(values))?));
    }
    Ok(SynthData {
        train: train?,
        test: test?,
        prompts,
        scenicness_prompts: scenic,
        prototypes,
    })
}

/// Paths of files written by [`write_synth`].
#[derive(Debug, Clone)]
pub struct SynthPaths {
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
    pub prompt_dir: PathBuf,
}

/// Writes `train/`, `test/` and `prompts/` under `dir`.
pub fn write_synth(dir: &Path, data: &SynthData) -> Result<SynthPaths> {
    let train_manifest = write_dataset(dir.join("train"), &data.train)?;
    let test_manifest = if data.test.is_empty() {
        train_manifest.clone()
    } else {
        write_dataset(dir.join("test"), &data.test)?
    };
    let prompt_dir = dir.join("prompts");
    let tables: Vec<(&str, &PromptEmbeddingTable)> = data.prompts.iter().map(|(s, t)| (*s, t)).collect();
    write_prompt_tables(&prompt_dir, &tables)?;
    let tables: Vec<(&str, &PromptEmbeddingTable)> = data.scenicness_prompts.iter().map(|(s, t)| (*s, t)).collect();
    write_prompt_tables(&prompt_dir, &tables)?;
    Ok(SynthPaths {
        train_manifest,
        test_manifest,
        prompt_dir,
    })
}
