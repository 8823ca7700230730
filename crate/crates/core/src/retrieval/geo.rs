use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::diffcore::Tensor;
use crate::error::{dim_err, Error, Result};
use crate::scalar::Real;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Clone, Debug, PartialEq)]
pub struct GeoSample {
    pub id: String,
    pub latitude: f64,
    pub longitude: f64,
}

impl GeoSample {
    pub fn new(id: impl Into<String>, latitude: f64, longitude: f64) -> Result<Self> {
        let s = Self {
            id: id.into(),
            latitude,
            longitude,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.latitude) || !(-180.0..=180.0).contains(&self.longitude) {
            return Err(Error::Data(format!(
                "sample `{}` has out-of-range coordinates ({}, {})",
                self.id, self.latitude, self.longitude
            )));
        }
        Ok(())
    }
}

/// Great-circle distance in meters.
pub fn haversine_m(a: &GeoSample, b: &GeoSample) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let (p1, p2) = (a.latitude.to_radians(), b.latitude.to_radians());
    let dp = p2 - p1;
    let dl = (b.longitude - a.longitude).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin())
}

/// Accuracy at each threshold: a query is localized when its top-1
/// retrieved reference lies within the threshold of the query's position.
pub fn geolocalize_curve<T: Real>(
    dist: &Tensor<T>,
    query_ids: &[String],
    ref_ids: &[String],
    geo: &HashMap<String, GeoSample>,
    thresholds: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if dist.rank() != 2 || dist.shape()[0] != query_ids.len() || dist.shape()[1] != ref_ids.len() {
        return Err(dim_err!(
            "distance matrix {:?} does not match {} queries × {} references",
            dist.shape(),
            query_ids.len(),
            ref_ids.len()
        ));
    }
    let lookup = |id: &String| geo.get(id).ok_or_else(|| Error::Data(format!("no geo position for `{id}`")));
    let mut errors = Vec::with_capacity(query_ids.len());
    for (i, qid) in query_ids.iter().enumerate() {
        let row = dist.row(i);
        let top = top1(row);
        errors.push(haversine_m(lookup(qid)?, lookup(&ref_ids[top])?)?);
    }
    let n = errors.len().max(1) as f64;
    Ok(thresholds
        .iter()
        .map(|&t| (t, errors.iter().filter(|&&e| e <= t).count() as f64 / n))
        .collect())
}

/// Index of the smallest entry, lowest index on ties.
fn top1<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v < row[best] {
            best = j;
        }
    }
    best
}

/// `threshold_m,accuracy` rows with six decimals.
pub fn write_geo_csv(path: &Path, curve: &[(f64, f64)]) -> Result<()> {
    let mut out = String::from("threshold_m,accuracy\n");
    for (t, a) in curve {
        out.push_str(&format!("{t:.6},{a:.6}\n"));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
