use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::config::EncoderConfig;
use super::params::EncoderParams;
use crate::datamodel::{kv, read_tensor_f64, write_tensor_f64};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MANIFEST: &str = "encoder.manifest";

/// Writes one container file per parameter plus `encoder.manifest`
/// (config keys and `param.<name>=<file>` entries). Returns the manifest
/// pairs so callers can extend them.
pub fn save_params(dir: &Path, params: &EncoderParams) -> Result<BTreeMap<String, String>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut pairs = params.config().to_pairs();
    for (name, t) in params.iter() {
        let file = format!("{name}.tsr");
        write_tensor_f64(dir.join(&file), t.dims(), t.data())?;
        pairs.insert(format!("param.{name}"), file);
    }
    kv::write(&dir.join(MANIFEST), &pairs)?;
    Ok(pairs)
}

pub fn load_params(dir: &Path) -> Result<EncoderParams> {
    let pairs = kv::read(&dir.join(MANIFEST))?;
    let config_pairs: BTreeMap<String, String> =
        pairs.iter().filter(|(k, _)| k.starts_with("encoder.")).map(|(k, v)| (k.clone(), v.clone())).collect();
    let config = EncoderConfig::from_pairs(&config_pairs)?;
    let mut named = Vec::new();
    for (k, v) in &pairs {
        let Some(name) = k.strip_prefix("param.") else { continue };
        let (dims, data) = read_tensor_f64(dir.join(v))?;
        named.push((name.to_string(), Tensor::new(dims, data)?));
    }
    EncoderParams::from_named(&config, named)
}
