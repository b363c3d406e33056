//! Dataset manifests, label CSVs and prompt tables on disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::container::{read_tensor, write_tensor_f64};
use super::kv;
use super::types::{GroundEmbeddingSet, LabeledDataset, PromptEmbeddingTable, SpectralTemporalCube};
use crate::error::{Error, Result};

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn check_finite(what: &str, values: &[f32]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            what: what.to_string(),
            index,
        }),
        None => Ok(()),
    }
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    if !e.is_io_error() {
        return Error::Format(format!("{}: {e}", path.display()));
    }
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

/// Reads a two-column CSV with a header whose first column is `site_id`.
pub fn read_two_column_csv(path: &Path) -> Result<(String, Vec<(String, String)>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.len() != 2 || &header[0] != "site_id" {
        return Err(Error::Format(format!(
            "{}: header must be 'site_id,<column>'",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        rows.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok((header[1].to_string(), rows))
}

pub(crate) fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_site_list(path: &Path) -> Result<Vec<String>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.len() != 1 || &header[0] != "site_id" {
        return Err(Error::Format(format!("{}: header must be 'site_id'", path.display())));
    }
    reader
        .records()
        .map(|r| r.map(|r| r[0].to_string()).map_err(|e| csv_err(path, e)))
        .collect()
}

/// Loads and validates the dataset described by a manifest.
///
/// Manifest keys: `cubes` (N x T x C x H x W), `months` (N x T), `ground`
/// (N x 4 x D), optional `sites` (CSV `site_id`; defaults to row indices),
/// `labels.<taxonomy>` (CSV `site_id,<taxonomy>`), optional `scenicness`
/// (CSV `site_id,score`). Relative paths resolve against the manifest's
/// directory.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let manifest_path = manifest_path.as_ref();
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let m = kv::read(manifest_path)?;
    for k in m.keys() {
        let known = matches!(k.as_str(), "cubes" | "months" | "ground" | "sites" | "scenicness")
            || k.strip_prefix("labels.").is_some_and(|t| !t.is_empty());
        if !known {
            return Err(Error::Format(format!("{}: unknown manifest key '{k}'", manifest_path.display())));
        }
    }
    let get = |k: &str| {
        m.get(k)
            .map(|v| resolve(base, v))
            .ok_or_else(|| Error::Format(format!("{}: missing key '{k}'", manifest_path.display())))
    };

    let (cdims, cvals) = read_tensor(get("cubes")?)?;
    if cdims.len() != 5 {
        return Err(Error::Format(format!("cubes tensor must be rank 5, got {cdims:?}")));
    }
    let (n, t, c, h, w) = (cdims[0], cdims[1], cdims[2], cdims[3], cdims[4]);
    check_finite("cubes", &cvals)?;

    let (mdims, mvals) = read_tensor(get("months")?)?;
    if mdims.len() != 2 {
        return Err(Error::Format(format!("months tensor must be rank 2, got {mdims:?}")));
    }
    if mdims[0] != n {
        return Err(Error::CountMismatch {
            what: "months rows".into(),
            expected: n,
            found: mdims[0],
        });
    }
    if mdims[1] != t {
        return Err(Error::CountMismatch {
            what: "months per site".into(),
            expected: t,
            found: mdims[1],
        });
    }
    check_finite("months", &mvals)?;

    let (gdims, gvals) = read_tensor(get("ground")?)?;
    if gdims.len() != 3 || gdims[1] != 4 {
        return Err(Error::Format(format!("ground tensor must be N x 4 x D, got {gdims:?}")));
    }
    if gdims[0] != n {
        return Err(Error::CountMismatch {
            what: "ground rows".into(),
            expected: n,
            found: gdims[0],
        });
    }
    check_finite("ground", &gvals)?;
    let d = gdims[2];

    let sites: Vec<String> = match m.get("sites") {
        Some(p) => read_site_list(&resolve(base, p))?,
        None => (0..n).map(|i| i.to_string()).collect(),
    };
    if sites.len() != n {
        return Err(Error::CountMismatch {
            what: "site list".into(),
            expected: n,
            found: sites.len(),
        });
    }

    let step = c * h * w;
    let mut cubes = Vec::with_capacity(n);
    let mut ground = Vec::with_capacity(n);
    for (i, site) in sites.iter().enumerate() {
        let months = mvals[i * t..(i + 1) * t]
            .iter()
            .map(|&v| {
                if v.fract() == 0.0 && (0.0..=12.0).contains(&v) {
                    Ok(v as u8)
                } else {
                    Err(Error::Format(format!("site '{site}': invalid month {v}")))
                }
            })
            .collect::<Result<Vec<u8>>>()?;
        let values = cvals[i * t * step..(i + 1) * t * step].iter().map(|&v| f64::from(v)).collect();
        cubes.push(SpectralTemporalCube::new(site.clone(), months, c, h, w, values)?);
        let dir = |k: usize| -> Vec<f64> {
            gvals[(i * 4 + k) * d..(i * 4 + k + 1) * d].iter().map(|&v| f64::from(v)).collect()
        };
        ground.push(GroundEmbeddingSet::new(site.clone(), [dir(0), dir(1), dir(2), dir(3)])?);
    }

    let mut labels = BTreeMap::new();
    for (k, v) in &m {
        let Some(taxonomy) = k.strip_prefix("labels.") else { continue };
        let (_, rows) = read_two_column_csv(&resolve(base, v))?;
        let map: BTreeMap<String, String> = rows.into_iter().collect();
        labels.insert(taxonomy.to_string(), map);
    }

    let scenicness = match m.get("scenicness") {
        Some(p) => {
            let path = resolve(base, p);
            let (_, rows) = read_two_column_csv(&path)?;
            let mut map = BTreeMap::new();
            for (site, s) in rows {
                let score: f64 = s
                    .parse()
                    .map_err(|_| Error::Format(format!("{}: bad score '{s}'", path.display())))?;
                map.insert(site, score);
            }
            Some(map)
        }
        None => None,
    };

    LabeledDataset::new(cubes, ground, labels, scenicness)
}

/// Writes a dataset as tensor files plus `dataset.manifest` into `dir` and
/// returns the manifest path. All cubes must share `T x C x H x W`.
pub fn write_dataset(dir: impl AsRef<Path>, ds: &LabeledDataset) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let first = ds.cubes().first().ok_or(Error::Empty("dataset"))?;
    let (t, c, h, w) = (first.timesteps(), first.bands(), first.height(), first.width());
    let d = ds.ground()[0].width();
    let n = ds.len();
    let mut cubes = Vec::with_capacity(n * t * c * h * w);
    let mut months = Vec::with_capacity(n * t);
    let mut ground = Vec::with_capacity(n * 4 * d);
    for (cube, g) in ds.cubes().iter().zip(ds.ground()) {
        if (cube.timesteps(), cube.bands(), cube.height(), cube.width()) != (t, c, h, w) || g.width() != d {
            return Err(Error::Shape(format!("site '{}' differs in shape from the first site", cube.site_id)));
        }
        cubes.extend_from_slice(cube.values());
        months.extend(cube.months().iter().map(|&m| f64::from(m)));
        for v in &g.directions {
            ground.extend_from_slice(v);
        }
    }
    write_tensor_f64(dir.join("cubes.tsr"), &[n, t, c, h, w], &cubes)?;
    write_tensor_f64(dir.join("months.tsr"), &[n, t], &months)?;
    write_tensor_f64(dir.join("ground.tsr"), &[n, 4, d], &ground)?;
    write_csv(&dir.join("sites.csv"), &["site_id"], ds.site_ids().map(|s| vec![s.to_string()]))?;

    let mut manifest = BTreeMap::new();
    manifest.insert("cubes".to_string(), "cubes.tsr".to_string());
    manifest.insert("months".to_string(), "months.tsr".to_string());
    manifest.insert("ground".to_string(), "ground.tsr".to_string());
    manifest.insert("sites".to_string(), "sites.csv".to_string());
    for (taxonomy, map) in ds.all_labels() {
        let file = format!("labels_{taxonomy}.csv");
        write_csv(
            &dir.join(&file),
            &["site_id", taxonomy],
            map.iter().map(|(s, c)| vec![s.clone(), c.clone()]),
        )?;
        manifest.insert(format!("labels.{taxonomy}"), file);
    }
    if let Some(scores) = ds.scenicness() {
        write_csv(
            &dir.join("scenicness.csv"),
            &["site_id", "score"],
            scores.iter().map(|(s, v)| vec![s.clone(), v.to_string()]),
        )?;
        manifest.insert("scenicness".to_string(), "scenicness.csv".to_string());
    }
    let path = dir.join("dataset.manifest");
    kv::write(&path, &manifest)?;
    Ok(path)
}

/// Prompt styles, each stored as its own `[classes, P, D]` tensor.
pub const PROMPT_STYLES: [&str; 3] = ["class", "template", "descriptive"];

/// Writes prompt tables (one per style, sharing taxonomy and class list)
/// under `dir` with a `prompts_<taxonomy>.manifest` index.
pub fn write_prompt_tables(dir: impl AsRef<Path>, tables: &[(&str, &PromptEmbeddingTable)]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (_, first) = tables.first().ok_or(Error::Empty("prompt tables"))?;
    let taxonomy = &first.taxonomy;
    let classes_file = format!("prompts_{taxonomy}_classes.csv");
    write_csv(&dir.join(&classes_file), &["class"], first.classes.iter().map(|c| vec![c.clone()]))?;
    let mut manifest = BTreeMap::new();
    manifest.insert("taxonomy".to_string(), taxonomy.clone());
    manifest.insert("classes".to_string(), classes_file);
    for (style, table) in tables {
        if table.classes != first.classes {
            return Err(Error::Format(format!("style '{style}' has a different class list")));
        }
        let p = table.prompts[0].len();
        if table.prompts.iter().any(|ps| ps.len() != p) {
            return Err(Error::Shape("prompt count must be uniform across classes on disk".into()));
        }
        let d = table.width();
        let flat: Vec<f64> = table.prompts.iter().flatten().flatten().copied().collect();
        let file = format!("prompts_{taxonomy}_{style}.tsr");
        write_tensor_f64(dir.join(&file), &[table.classes.len(), p, d], &flat)?;
        manifest.insert(style.to_string(), file);
        if let Some(values) = &table.values {
            let flat: Vec<f64> = values.iter().flatten().copied().collect();
            let file = format!("prompts_{taxonomy}_{style}_values.tsr");
            write_tensor_f64(dir.join(&file), &[table.classes.len(), p], &flat)?;
            manifest.insert(format!("{style}.values"), file);
        }
    }
    let path = dir.join(format!("prompts_{taxonomy}.manifest"));
    kv::write(&path, &manifest)?;
    Ok(path)
}

/// Loads one style from a prompt manifest written by [`write_prompt_tables`].
pub fn load_prompt_table(manifest_path: impl AsRef<Path>, style: &str) -> Result<PromptEmbeddingTable> {
    let manifest_path = manifest_path.as_ref();
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let m = kv::read(manifest_path)?;
    let get = |k: &str| {
        m.get(k)
            .ok_or_else(|| Error::Format(format!("{}: missing key '{k}'", manifest_path.display())))
    };
    let taxonomy = get("taxonomy")?.clone();
    let classes_path = resolve(base, get("classes")?);
    let mut reader = csv::Reader::from_path(&classes_path).map_err(|e| csv_err(&classes_path, e))?;
    let classes: Vec<String> = reader
        .records()
        .map(|r| r.map(|r| r[0].to_string()).map_err(|e| csv_err(&classes_path, e)))
        .collect::<Result<_>>()?;
    let (dims, vals) = read_tensor(resolve(base, get(style)?))?;
    if dims.len() != 3 || dims[0] != classes.len() {
        return Err(Error::Format(format!("prompt tensor dims {dims:?} do not match {} classes", classes.len())));
    }
    check_finite("prompts", &vals)?;
    let (p, d) = (dims[1], dims[2]);
    let prompts = (0..dims[0])
        .map(|c| {
            (0..p)
                .map(|i| vals[(c * p + i) * d..(c * p + i + 1) * d].iter().map(|&v| f64::from(v)).collect())
                .collect()
        })
        .collect();
    let values = match m.get(&format!("{style}.values")) {
        Some(rel) => {
            let (vd, vv) = read_tensor(resolve(base, rel))?;
            if vd != [dims[0], p] {
                return Err(Error::Format(format!("prompt values dims {vd:?}, expected [{}, {p}]", dims[0])));
            }
            check_finite("prompt values", &vv)?;
            Some(vv.chunks(p).map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect())
        }
        None => None,
    };
    PromptEmbeddingTable::new(taxonomy, classes, prompts, values)
}
