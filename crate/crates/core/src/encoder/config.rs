use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Shape of the satellite temporal transformer and its heads.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    /// Token width inside the transformer.
    pub model_width: usize,
    /// Hidden width of each feed-forward block.
    pub ffn_width: usize,
    /// Hidden width of the two-layer projection head.
    pub head_width: usize,
    /// Width of the shared embedding space (ground embedding width).
    pub output_width: usize,
    pub bands: usize,
    /// Side of the square pixel patch.
    pub patch: usize,
    /// Month slots 0..=12, slot 0 holding aggregated steps.
    pub position_slots: usize,
    pub ln_eps: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            layers: 6,
            heads: 8,
            model_width: 512,
            ffn_width: 256,
            head_width: 256,
            output_width: 512,
            bands: 10,
            patch: 1,
            position_slots: 13,
            ln_eps: 1e-5,
        }
    }
}

impl EncoderConfig {
    /// Flattened width of one timestep, `C * H * W`.
    pub fn input_width(&self) -> usize {
        self.bands * self.patch * self.patch
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("layers", self.layers),
            ("heads", self.heads),
            ("model_width", self.model_width),
            ("ffn_width", self.ffn_width),
            ("head_width", self.head_width),
            ("output_width", self.output_width),
            ("bands", self.bands),
            ("patch", self.patch),
        ];
        if let Some((k, _)) = widths.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("encoder.{k} must be positive")));
        }
        if !self.model_width.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "encoder.model_width {} not divisible by encoder.heads {}",
                self.model_width, self.heads
            )));
        }
        if self.position_slots != 13 {
            return Err(Error::Config("encoder needs 13 position slots (months 1-12 plus aggregate)".into()));
        }
        if !(self.ln_eps > 0.0) {
            return Err(Error::Config("encoder.ln_eps must be > 0".into()));
        }
        Ok(())
    }

    /// Serializes to `encoder.*` key/value pairs.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        [
            ("encoder.layers", self.layers.to_string()),
            ("encoder.heads", self.heads.to_string()),
            ("encoder.model_width", self.model_width.to_string()),
            ("encoder.ffn_width", self.ffn_width.to_string()),
            ("encoder.head_width", self.head_width.to_string()),
            ("encoder.output_width", self.output_width.to_string()),
            ("encoder.bands", self.bands.to_string()),
            ("encoder.patch", self.patch.to_string()),
            ("encoder.ln_eps", format!("{:e}", self.ln_eps)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Reads `encoder.*` keys on top of the defaults.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mut c = Self::default();
        for (k, v) in pairs {
            let Some(field) = k.strip_prefix("encoder.") else { continue };
            let int = || -> Result<usize> {
                v.parse().map_err(|_| Error::Config(format!("{k}: expected a positive integer, got '{v}'")))
            };
            match field {
                "layers" => c.layers = int()?,
                "heads" => c.heads = int()?,
                "model_width" => c.model_width = int()?,
                "ffn_width" => c.ffn_width = int()?,
                "head_width" => c.head_width = int()?,
                "output_width" => c.output_width = int()?,
                "bands" => c.bands = int()?,
                "patch" => c.patch = int()?,
                "ln_eps" => {
                    c.ln_eps = v.parse().map_err(|_| Error::Config(format!("{k}: bad number '{v}'")))?
                }
                _ => return Err(Error::Config(format!("unknown key '{k}'"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Tiny configuration used for gradient checks.
    pub fn tiny() -> Self {
        Self {
            layers: 1,
            heads: 2,
            model_width: 8,
            ffn_width: 16,
            head_width: 8,
            output_width: 8,
            bands: 3,
            patch: 1,
            position_slots: 13,
            ln_eps: 1e-5,
        }
    }
}
