use std::fmt;
use std::str::FromStr;

use crate::contrastive::l2_normalize;
use crate::datamodel::PromptEmbeddingTable;
use crate::error::{Error, Result};
use crate::numerics::{argmax, dot, softmax};

/// Prompt ensembling: average embeddings (early) or similarities (late).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ensemble {
    #[default]
    Early,
    Late,
}

impl FromStr for Ensemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "early" => Ok(Ensemble::Early),
            "late" => Ok(Ensemble::Late),
            _ => Err(Error::Config(format!("unknown ensemble mode '{s}' (early, late)"))),
        }
    }
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Ensemble::Early => "early",
            Ensemble::Late => "late",
        })
    }
}

/// Unit class vectors: one fused vector per class (early) or every prompt
/// (late).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEmbeddingSet {
    pub taxonomy: String,
    pub classes: Vec<String>,
    pub mode: Ensemble,
    pub vectors: Vec<Vec<Vec<f64>>>,
}

fn fuse(prompts: &[Vec<f64>], what: &str) -> Result<Vec<f64>> {
    if let [only] = prompts {
        return l2_normalize(only);
    }
    let d = prompts[0].len();
    let mut mean = vec![0.0; d];
    for p in prompts {
        for (m, v) in mean.iter_mut().zip(l2_normalize(p)?) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= prompts.len() as f64);
    l2_normalize(&mean).map_err(|_| Error::Degenerate(format!("prompts of {what} average to zero")))
}

pub fn build_class_embeddings(table: &PromptEmbeddingTable, mode: Ensemble) -> Result<ClassEmbeddingSet> {
    let vectors = table
        .prompts
        .iter()
        .zip(&table.classes)
        .map(|(ps, name)| match mode {
            Ensemble::Early => Ok(vec![fuse(ps, &format!("class '{name}'"))?]),
            Ensemble::Late => ps.iter().map(|p| l2_normalize(p)).collect(),
        })
        .collect::<Result<_>>()?;
    Ok(ClassEmbeddingSet {
        taxonomy: table.taxonomy.clone(),
        classes: table.classes.clone(),
        mode,
        vectors,
    })
}

/// Per-class score: cosine to the fused vector, or the mean cosine over
/// prompts.
pub fn class_scores(image: &[f64], classes: &ClassEmbeddingSet) -> Vec<f64> {
    classes.vectors.iter().map(|ps| ps.iter().map(|p| dot(image, p)).sum::<f64>() / ps.len() as f64).collect()
}

/// Index of the best-scoring class; ties go to the lower index.
pub fn zero_shot_classify(image: &[f64], classes: &ClassEmbeddingSet) -> Result<usize> {
    if classes.vectors.is_empty() {
        return Err(Error::Empty("class embedding set"));
    }
    if let Some(w) = classes.vectors[0].first().map(Vec::len) {
        if w != image.len() {
            return Err(Error::Shape(format!("image width {} vs class width {w}", image.len())));
        }
    }
    Ok(argmax(&class_scores(image, classes)).expect("nonempty"))
}

/// Fraction of `images` whose prediction equals `labels[i]` (class indices).
pub fn top1_accuracy(images: &[Vec<f64>], labels: &[usize], classes: &ClassEmbeddingSet) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::Empty("images"));
    }
    let mut hits = 0;
    for (img, &l) in images.iter().zip(labels) {
        if zero_shot_classify(img, classes)? == l {
            hits += 1;
        }
    }
    Ok(hits as f64 / images.len() as f64)
}

/// Softmax-weighted mean of prompt values: `sum_i w_i v_i` with
/// `w = softmax(beta * cos_i)`. Late scores every prompt; early first fuses
/// the prompts that share a value.
pub fn scenicness_score(image: &[f64], table: &PromptEmbeddingTable, mode: Ensemble, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!("scenicness sharpness must be > 0, got {beta}")));
    }
    let values = table.values.as_ref().ok_or_else(|| Error::Format(format!("prompt table '{}' has no values", table.taxonomy)))?;
    let mut groups: Vec<(f64, Vec<Vec<f64>>)> = Vec::new();
    for (ps, vs) in table.prompts.iter().zip(values) {
        for (p, &v) in ps.iter().zip(vs) {
            if !(1.0..=10.0).contains(&v) {
                return Err(Error::Format(format!("prompt value {v} outside [1,10]")));
            }
            match mode {
                Ensemble::Late => groups.push((v, vec![p.clone()])),
                Ensemble::Early => match groups.iter_mut().find(|(gv, _)| *gv == v) {
                    Some((_, members)) => members.push(p.clone()),
                    None => groups.push((v, vec![p.clone()])),
                },
            }
        }
    }
    if groups.is_empty() {
        return Err(Error::Empty("scenicness prompts"));
    }
    let img = l2_normalize(image)?;
    let logits: Vec<f64> = groups
        .iter()
        .map(|(v, ps)| Ok(beta * dot(&img, &fuse(ps, &format!("value {v}"))?)))
        .collect::<Result<_>>()?;
    let w = softmax(&logits)?;
    Ok(w.iter().zip(&groups).map(|(w, (v, _))| w * v).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(prompts: Vec<Vec<Vec<f64>>>, values: Option<Vec<Vec<f64>>>) -> PromptEmbeddingTable {
        let classes = (0..prompts.len()).map(|i| format!("c{i}")).collect();
        PromptEmbeddingTable::new("t", classes, prompts, values).unwrap()
    }

    #[test]
    fn single_prompt_modes_agree() {
        let t = table(vec![vec![vec![3.0, 4.0]], vec![vec![0.0, 2.0]]], None);
        let e = build_class_embeddings(&t, Ensemble::Early).unwrap();
        let l = build_class_embeddings(&t, Ensemble::Late).unwrap();
        assert_eq!(e.vectors, l.vectors);
        assert_eq!(e.vectors[0][0], vec![0.6, 0.8]);
        let img = [0.1, 0.9];
        assert_eq!(class_scores(&img, &e), class_scores(&img, &l));
    }

    #[test]
    fn antipodal_prompts_fail_early() {
        let t = table(vec![vec![vec![1.0, 0.0], vec![-1.0, 0.0]]], None);
        assert!(matches!(build_class_embeddings(&t, Ensemble::Early), Err(Error::Degenerate(_))));
        assert!(build_class_embeddings(&t, Ensemble::Late).is_ok());
    }

    #[test]
    fn early_fused_matches_direct() {
        let ps = vec![vec![1.0, 2.0, 2.0], vec![0.0, 3.0, 4.0]];
        let t = table(vec![ps.clone()], None);
        let e = build_class_embeddings(&t, Ensemble::Early).unwrap();
        let a: Vec<f64> = ps[0].iter().map(|v| v / 3.0).collect();
        let b: Vec<f64> = ps[1].iter().map(|v| v / 5.0).collect();
        let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y) / 2.0).collect();
        let n = m.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (x, y) in e.vectors[0][0].iter().zip(m.iter().map(|v| v / n)) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn classify_and_scale_invariance() {
        let protos = [vec![1.0, 0.2, 0.0], vec![0.0, 1.0, 0.3], vec![0.3, 0.0, 1.0]];
        let t = table(protos.iter().map(|p| vec![p.clone()]).collect(), None);
        let c = build_class_embeddings(&t, Ensemble::Early).unwrap();
        for j in 0..3 {
            assert_eq!(zero_shot_classify(&c.vectors[j][0], &c).unwrap(), j);
        }
        let scaled = table(protos.iter().map(|p| vec![p.iter().map(|v| v * 7.5).collect()]).collect(), None);
        let cs = build_class_embeddings(&scaled, Ensemble::Early).unwrap();
        let img = [0.4, 0.5, 0.1];
        assert_eq!(zero_shot_classify(&img, &c).unwrap(), zero_shot_classify(&img, &cs).unwrap());
        let empty = ClassEmbeddingSet {
            taxonomy: "t".into(),
            classes: vec![],
            mode: Ensemble::Early,
            vectors: vec![],
        };
        assert!(zero_shot_classify(&img, &empty).is_err());
    }

    #[test]
    fn scenicness_examples() {
        let one = table(vec![vec![vec![1.0, 0.0]]], Some(vec![vec![6.5]]));
        for img in [[0.3, 0.9], [-1.0, 0.1]] {
            assert_eq!(scenicness_score(&img, &one, Ensemble::Late, 20.0).unwrap(), 6.5);
        }
        // equal similarities
        let two = table(vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]], Some(vec![vec![2.0], vec![8.0]]));
        let s = scenicness_score(&[1.0, 1.0], &two, Ensemble::Late, 20.0).unwrap();
        assert!((s - 5.0).abs() < 1e-12);
        // collinear with prompt 1 and large beta
        let s = scenicness_score(&[0.0, 1.0], &two, Ensemble::Early, 1e3).unwrap();
        assert!((s - 8.0).abs() < 1e-9);
        let s = scenicness_score(&[0.2, 0.7], &two, Ensemble::Late, 3.0).unwrap();
        assert!((2.0..=8.0).contains(&s));
        assert!(scenicness_score(&[0.2, 0.7], &two, Ensemble::Late, 0.0).is_err());
    }
}
