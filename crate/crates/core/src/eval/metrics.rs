use crate::error::{Error, Result};
use crate::numerics::{dot, l2_norm};

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let n = l2_norm(a) * l2_norm(b);
    if n > 0.0 {
        dot(a, b) / n
    } else {
        0.0
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k < 1 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={n}")));
    }
    Ok(())
}

/// Gallery indices ordered by decreasing cosine similarity to `query`,
/// ties broken by lower index.
pub fn rank_gallery(query: &[f64], gallery: &[Vec<f64>]) -> Vec<usize> {
    let sims: Vec<f64> = gallery.iter().map(|g| cosine(query, g)).collect();
    let mut order: Vec<usize> = (0..gallery.len()).collect();
    order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
    order
}

/// Fraction of queries whose partner `gallery[pairing[i]]` ranks within the
/// top `k` by cosine similarity (ties broken by lower gallery index).
pub fn recall_at_k(queries: &[Vec<f64>], gallery: &[Vec<f64>], pairing: &[usize], k: usize) -> Result<f64> {
    let n = queries.len();
    if n == 0 {
        return Err(Error::Empty("retrieval queries"));
    }
    if gallery.len() != n || pairing.len() != n {
        return Err(Error::CountMismatch {
            what: "retrieval gallery and pairing".into(),
            expected: n,
            found: gallery.len().min(pairing.len()),
        });
    }
    let mut seen = vec![false; n];
    for &p in pairing {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidArgument("retrieval pairing is not a bijection".into()));
        }
    }
    check_k(k, n)?;
    let mut hits = 0usize;
    for (q, &target) in queries.iter().zip(pairing) {
        let sims: Vec<f64> = gallery.iter().map(|g| cosine(q, g)).collect();
        let t = sims[target];
        // rank of the target under the (similarity desc, index asc) order
        let rank = sims.iter().enumerate().filter(|&(j, &s)| s > t || (s == t && j < target)).count();
        if rank < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / n as f64)
}

/// Category-level recall: a query counts as a hit when any of its top `k`
/// gallery items carries the query's label.
pub fn category_recall_at_k<L: PartialEq>(
    queries: &[Vec<f64>],
    query_labels: &[L],
    gallery: &[Vec<f64>],
    gallery_labels: &[L],
    k: usize,
) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::Empty("retrieval queries"));
    }
    if queries.len() != query_labels.len() || gallery.len() != gallery_labels.len() {
        return Err(Error::CountMismatch {
            what: "retrieval labels".into(),
            expected: queries.len(),
            found: query_labels.len(),
        });
    }
    check_k(k, gallery.len())?;
    let hits = queries
        .iter()
        .zip(query_labels)
        .filter(|(q, l)| rank_gallery(q, gallery)[..k].iter().any(|&j| gallery_labels[j] == **l))
        .count();
    Ok(hits as f64 / queries.len() as f64)
}

fn check_series(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::CountMismatch {
            what: "correlation series".into(),
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("correlation needs at least 2 points".into()));
    }
    Ok(())
}

/// Product-moment correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    check_series(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Number of pairs tied within runs of equal values in a sorted slice.
fn tied_pairs(sorted: impl Iterator<Item = f64>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev = None;
    for v in sorted {
        if prev == Some(v) {
            run += 1;
        } else {
            total += run * run.saturating_sub(1) / 2;
            run = 1;
        }
        prev = Some(v);
    }
    total + run * run.saturating_sub(1) / 2
}

/// Merge sort by value counting swaps (discordant inversions).
fn sort_count_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_count_swaps(&mut v[..mid], &mut buf[..mid]) + sort_count_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall tau-b (tie-corrected), O(n log n).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    check_series(x, y)?;
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("kendall_tau needs finite values".into()));
    }
    let n = x.len() as u64;
    let n0 = n * (n - 1) / 2;
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    let n1 = tied_pairs(idx.iter().map(|&i| x[i]));
    // pairs tied in both
    let mut n3 = 0u64;
    let mut run = 1u64;
    for w in idx.windows(2) {
        if x[w[0]] == x[w[1]] && y[w[0]] == y[w[1]] {
            run += 1;
        } else {
            n3 += run * (run - 1) / 2;
            run = 1;
        }
    }
    n3 += run * (run - 1) / 2;
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; ys.len()];
    let swaps = sort_count_swaps(&mut ys, &mut buf);
    let n2 = tied_pairs(ys.iter().copied());
    if n1 == n0 || n2 == n0 {
        return Err(Error::Degenerate("kendall_tau undefined for an all-tied series".into()));
    }
    // concordant - discordant = n0 - n1 - n2 + n3 - 2 * swaps
    let numer = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    Ok((numer / denom).clamp(-1.0, 1.0))
}
