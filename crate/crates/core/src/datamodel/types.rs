use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Month slot used for timesteps that aggregate several months.
pub const AGGREGATE_MONTH: u8 = 0;

/// One site's reflectance series, `T x C x H x W`, with the calendar month
/// (1..=12, or [`AGGREGATE_MONTH`]) of each timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTemporalCube {
    pub site_id: String,
    months: Vec<u8>,
    bands: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl SpectralTemporalCube {
    pub fn new(
        site_id: impl Into<String>,
        months: Vec<u8>,
        bands: usize,
        height: usize,
        width: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let t = months.len();
        if !(1..=12).contains(&t) {
            return Err(Error::Shape(format!("cube needs 1..=12 timesteps, got {t}")));
        }
        if bands == 0 || height == 0 || width == 0 {
            return Err(Error::Shape("cube extents must be positive".into()));
        }
        if height != width {
            return Err(Error::Shape(format!("cube patch must be square, got {height}x{width}")));
        }
        if values.len() != t * bands * height * width {
            return Err(Error::Shape(format!(
                "cube {t}x{bands}x{height}x{width} needs {} values, got {}",
                t * bands * height * width,
                values.len()
            )));
        }
        if months.iter().any(|&m| m > 12) || months.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format(format!("months {months:?} must be strictly increasing in 0..=12")));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "cube".into(),
                index,
            });
        }
        Ok(Self {
            site_id: site_id.into(),
            months,
            bands,
            height,
            width,
            values,
        })
    }

    pub fn timesteps(&self) -> usize {
        self.months.len()
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Flattened width of one timestep, `C * H * W`.
    pub fn step_len(&self) -> usize {
        self.bands * self.pixels()
    }

    pub fn months(&self) -> &[u8] {
        &self.months
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Flattened `C x H x W` slice of timestep `t`.
    pub fn step(&self, t: usize) -> &[f64] {
        let n = self.step_len();
        &self.values[t * n..(t + 1) * n]
    }

    pub fn value(&self, t: usize, band: usize, y: usize, x: usize) -> f64 {
        self.values[((t * self.bands + band) * self.height + y) * self.width + x]
    }

    /// Builds a cube with the same band and pixel layout from selected
    /// `(month, step values)` pairs. Used by augmentations; skips validation
    /// of values that came from an already-valid cube.
    pub(crate) fn with_steps(&self, months: Vec<u8>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), months.len() * self.step_len());
        Self {
            site_id: self.site_id.clone(),
            months,
            bands: self.bands,
            height: self.height,
            width: self.width,
            values,
        }
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

pub const DIRECTIONS: [&str; 4] = ["north", "east", "south", "west"];

/// Precomputed embeddings of the four directional ground photos of a site.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundEmbeddingSet {
    pub site_id: String,
    /// north, east, south, west
    pub directions: [Vec<f64>; 4],
}

impl GroundEmbeddingSet {
    pub fn new(site_id: impl Into<String>, directions: [Vec<f64>; 4]) -> Result<Self> {
        let d = directions[0].len();
        if d == 0 || directions.iter().any(|v| v.len() != d) {
            return Err(Error::Shape("ground directions must share a positive width".into()));
        }
        for (k, v) in directions.iter().enumerate() {
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    what: format!("ground embedding ({})", DIRECTIONS[k]),
                    index: i,
                });
            }
        }
        Ok(Self {
            site_id: site_id.into(),
            directions,
        })
    }

    pub fn width(&self) -> usize {
        self.directions[0].len()
    }
}

/// Text-prompt embeddings for one taxonomy: `P` prompts per class, each
/// optionally tagged with a scalar value (scenicness ratings).
#[derive(Debug, Clone, PartialEq)]
pub struct PromptEmbeddingTable {
    pub taxonomy: String,
    pub classes: Vec<String>,
    pub prompts: Vec<Vec<Vec<f64>>>,
    pub values: Option<Vec<Vec<f64>>>,
}

impl PromptEmbeddingTable {
    pub fn new(
        taxonomy: impl Into<String>,
        classes: Vec<String>,
        prompts: Vec<Vec<Vec<f64>>>,
        values: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Empty("prompt table classes"));
        }
        if classes.len() != prompts.len() {
            return Err(Error::CountMismatch {
                what: "prompt classes".into(),
                expected: classes.len(),
                found: prompts.len(),
            });
        }
        let d = prompts[0].first().map(Vec::len).unwrap_or(0);
        for (c, ps) in prompts.iter().enumerate() {
            if ps.is_empty() {
                return Err(Error::Format(format!("class '{}' has no prompts", classes[c])));
            }
            if ps.iter().any(|p| p.len() != d || d == 0) {
                return Err(Error::Shape("prompt widths must be uniform and positive".into()));
            }
        }
        if let Some(vals) = &values {
            if vals.len() != prompts.len() || vals.iter().zip(&prompts).any(|(v, p)| v.len() != p.len()) {
                return Err(Error::Shape("one value per prompt required".into()));
            }
        }
        Ok(Self {
            taxonomy: taxonomy.into(),
            classes,
            prompts,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.prompts[0][0].len()
    }
}

/// Aligned cubes, ground embeddings and per-taxonomy labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    cubes: Vec<SpectralTemporalCube>,
    ground: Vec<GroundEmbeddingSet>,
    /// taxonomy -> site_id -> class name
    labels: BTreeMap<String, BTreeMap<String, String>>,
    scenicness: Option<BTreeMap<String, f64>>,
}

impl LabeledDataset {
    pub fn new(
        cubes: Vec<SpectralTemporalCube>,
        ground: Vec<GroundEmbeddingSet>,
        labels: BTreeMap<String, BTreeMap<String, String>>,
        scenicness: Option<BTreeMap<String, f64>>,
    ) -> Result<Self> {
        if cubes.len() != ground.len() {
            return Err(Error::CountMismatch {
                what: "ground embedding sets vs cubes".into(),
                expected: cubes.len(),
                found: ground.len(),
            });
        }
        for (i, (c, g)) in cubes.iter().zip(&ground).enumerate() {
            if c.site_id != g.site_id {
                return Err(Error::Format(format!(
                    "site {i}: cube '{}' does not match ground '{}'",
                    c.site_id, g.site_id
                )));
            }
        }
        let known: std::collections::HashSet<&str> = cubes.iter().map(|c| c.site_id.as_str()).collect();
        if known.len() != cubes.len() {
            return Err(Error::Format("duplicate site ids".into()));
        }
        for (taxonomy, map) in &labels {
            if let Some(site) = map.keys().find(|s| !known.contains(s.as_str())) {
                return Err(Error::UnknownSite {
                    taxonomy: taxonomy.clone(),
                    site_id: site.clone(),
                });
            }
        }
        if let Some(scores) = &scenicness {
            for (site, &s) in scores {
                if !known.contains(site.as_str()) {
                    return Err(Error::UnknownSite {
                        taxonomy: "scenicness".into(),
                        site_id: site.clone(),
                    });
                }
                if !(1.0..=10.0).contains(&s) {
                    return Err(Error::Format(format!("scenicness {s} for '{site}' outside [1,10]")));
                }
            }
        }
        Ok(Self {
            cubes,
            ground,
            labels,
            scenicness,
        })
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn cubes(&self) -> &[SpectralTemporalCube] {
        &self.cubes
    }

    pub fn ground(&self) -> &[GroundEmbeddingSet] {
        &self.ground
    }

    pub fn taxonomies(&self) -> impl Iterator<Item = &str> {
        self.labels.keys().map(String::as_str)
    }

    pub fn labels(&self, taxonomy: &str) -> Option<&BTreeMap<String, String>> {
        self.labels.get(taxonomy)
    }

    pub fn all_labels(&self) -> &BTreeMap<String, BTreeMap<String, String>> {
        &self.labels
    }

    pub fn scenicness(&self) -> Option<&BTreeMap<String, f64>> {
        self.scenicness.as_ref()
    }

    pub fn site_ids(&self) -> impl Iterator<Item = &str> {
        self.cubes.iter().map(|c| c.site_id.as_str())
    }
}
