use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::EmbeddingMatrix;
use crate::diffcore::{row_distance, DistanceMode, Tensor};
use crate::error::{dim_err, param_err, Error, Result};
use crate::scalar::Real;

/// Euclidean distances between every query and every reference row.
pub fn distance_matrix<T: Real>(q: &EmbeddingMatrix<T>, r: &EmbeddingMatrix<T>) -> Result<Tensor<T>> {
    if q.dim() != r.dim() {
        return Err(dim_err!("query dim {} differs from gallery dim {}", q.dim(), r.dim()));
    }
    if q.is_empty() || r.is_empty() {
        return Err(dim_err!("distance matrix of an empty embedding set"));
    }
    let m = r.len();
    let rows: Vec<Vec<T>> = (0..q.len())
        .into_par_iter()
        .map(|i| {
            let qi = q.row(i);
            (0..m).map(|j| row_distance(qi, r.row(j), DistanceMode::Euclidean)).collect()
        })
        .collect();
    Tensor::new(&[q.len(), m], rows.concat())
}

/// 0-based rank of reference `target` in a row: the number of references
/// strictly closer, plus equally close ones with a lower index.
pub fn rank_of<T: Real>(row: &[T], target: usize) -> usize {
    let d = row[target];
    row.iter()
        .enumerate()
        .filter(|&(j, &v)| v < d || (v == d && j < target))
        .count()
}

fn check_gt<T: Real>(dist: &Tensor<T>, gt: &[usize]) -> Result<(usize, usize)> {
    if dist.rank() != 2 {
        return Err(dim_err!("distance matrix must be 2-D, got {:?}", dist.shape()));
    }
    let (n, m) = (dist.shape()[0], dist.shape()[1]);
    if gt.len() != n {
        return Err(dim_err!("{} ground-truth entries for {n} queries", gt.len()));
    }
    if let Some(&bad) = gt.iter().find(|&&j| j >= m) {
        return Err(param_err!("ground-truth index {bad} outside gallery of {m}"));
    }
    Ok((n, m))
}

/// Fraction of queries whose true reference is among the `k` closest.
pub fn recall_at_k<T: Real>(dist: &Tensor<T>, gt: &[usize], k: usize) -> Result<f64> {
    let (n, m) = check_gt(dist, gt)?;
    if k == 0 || k > m {
        return Err(param_err!("K = {k} outside 1..={m}"));
    }
    let hits = (0..n).filter(|&i| rank_of(dist.row(i), gt[i]) < k).count();
    Ok(hits as f64 / n as f64)
}

/// `K` used for top-1% recall: `ceil(0.01·M)`, at least 1.
pub fn one_percent_k(gallery: usize) -> usize {
    gallery.div_ceil(100).max(1)
}

pub fn top_one_percent<T: Real>(dist: &Tensor<T>, gt: &[usize]) -> Result<f64> {
    let m = dist.shape().get(1).copied().unwrap_or(0);
    recall_at_k(dist, gt, one_percent_k(m))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecallReport {
    pub recall_at: BTreeMap<usize, f64>,
    pub top_one_percent: f64,
    pub gallery_size: usize,
}

impl RecallReport {
    pub fn compute<T: Real>(dist: &Tensor<T>, gt: &[usize], ks: &[usize]) -> Result<Self> {
        let mut recall_at = BTreeMap::new();
        for &k in ks {
            recall_at.insert(k, recall_at_k(dist, gt, k)?);
        }
        Ok(Self {
            recall_at,
            top_one_percent: top_one_percent(dist, gt)?,
            gallery_size: dist.shape()[1],
        })
    }

    /// `k,recall` rows with six decimals.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("k,recall\n");
        for (k, r) in &self.recall_at {
            out.push_str(&format!("{k},{r:.6}\n"));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

/// Ground-truth gallery index per query. Without an explicit map a query
/// matches the gallery row with the same id.
pub fn ground_truth_indices<T: Real>(
    queries: &EmbeddingMatrix<T>,
    gallery: &EmbeddingMatrix<T>,
    map: Option<&HashMap<String, String>>,
) -> Result<Vec<usize>> {
    let index: HashMap<&str, usize> = gallery.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    queries
        .ids()
        .iter()
        .map(|q| {
            let target = match map {
                Some(m) => m
                    .get(q)
                    .ok_or_else(|| Error::Data(format!("no ground truth for query `{q}`")))?
                    .as_str(),
                None => q.as_str(),
            };
            index
                .get(target)
                .copied()
                .ok_or_else(|| Error::Data(format!("ground-truth reference `{target}` for query `{q}` is not in the gallery")))
        })
        .collect()
}
