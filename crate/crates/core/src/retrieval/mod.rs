//! Retrieval evaluation: distance matrices, recall@K, top-1% and
//! geo-localization accuracy.

mod embedding;
mod geo;
mod recall;

pub use embedding::EmbeddingMatrix;
pub use geo::{geolocalize_curve, haversine_m, write_geo_csv, GeoSample, EARTH_RADIUS_M};
pub use recall::{
    distance_matrix, ground_truth_indices, one_percent_k, rank_of, recall_at_k, top_one_percent, RecallReport,
};

#[cfg(test)]
mod tests;
