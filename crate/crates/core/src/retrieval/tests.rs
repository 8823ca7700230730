use std::collections::HashMap;

use proptest::prelude::*;

use super::*;
use crate::diffcore::Tensor;

fn emb(ids: &[&str], rows: &[Vec<f64>]) -> EmbeddingMatrix<f64> {
    let dim = rows[0].len();
    EmbeddingMatrix::new(ids.iter().map(|s| s.to_string()).collect(), dim, rows.concat()).unwrap()
}

#[test]
fn distance_examples() {
    let q = emb(&["q"], &[vec![0.0]]);
    let r = emb(&["a", "b"], &[vec![3.0], vec![-4.0]]);
    let d = distance_matrix(&q, &r).unwrap();
    assert!((d.at2(0, 0) - 3.0).abs() < 1e-9 && (d.at2(0, 1) - 4.0).abs() < 1e-9);

    let s = emb(&["x", "y"], &[vec![1.0, 2.0], vec![-1.0, 0.5]]);
    let d = distance_matrix(&s, &s).unwrap();
    assert!(d.at2(0, 0) <= 1e-6 && d.at2(1, 1) <= 1e-6);
    assert!(distance_matrix(&q, &s).is_err());
}

#[test]
fn duplicate_ids_rejected() {
    assert!(EmbeddingMatrix::new(vec!["a".into(), "a".into()], 1, vec![0.0f64, 1.0]).is_err());
    assert!(EmbeddingMatrix::<f64>::new(vec![], 4, vec![]).is_ok());
}

#[test]
fn recall_extremes() {
    let d = Tensor::from_rows(&[vec![0.1, 0.5, 0.9], vec![0.7, 0.2, 0.3], vec![0.4, 0.6, 0.0]]).unwrap();
    assert_eq!(recall_at_k(&d, &[0, 1, 2], 1).unwrap(), 1.0);
    // truth is always the farthest reference
    assert_eq!(recall_at_k(&d, &[2, 0, 1], 2).unwrap(), 0.0);
    assert!(recall_at_k(&d, &[0, 1, 2], 0).is_err());
    assert!(recall_at_k(&d, &[0, 1, 2], 4).is_err());
}

#[test]
fn ties_broken_by_reference_index() {
    let d = Tensor::from_rows(&[vec![1.0, 1.0, 1.0]]).unwrap();
    assert_eq!(recall_at_k(&d, &[0], 1).unwrap(), 1.0);
    assert_eq!(recall_at_k(&d, &[2], 2).unwrap(), 0.0);
    assert_eq!(recall_at_k(&d, &[2], 3).unwrap(), 1.0);
}

#[test]
fn one_percent_rule() {
    assert_eq!(one_percent_k(100), 1);
    assert_eq!(one_percent_k(50), 1);
    assert_eq!(one_percent_k(200), 2);
    assert_eq!(one_percent_k(8884), 89);
}

#[test]
fn haversine_examples() {
    let a = GeoSample::new("a", 40.0, -80.0).unwrap();
    let b = GeoSample::new("b", 41.0, -80.0).unwrap();
    assert_eq!(haversine_m(&a, &a).unwrap(), 0.0);
    let d = haversine_m(&a, &b).unwrap();
    assert!((d - 111_194.926_644_558_73).abs() < 1.0, "{d}");
    assert_eq!(d, haversine_m(&b, &a).unwrap());
    assert!(GeoSample::new("c", 91.0, 0.0).is_err());
    let bad = GeoSample { id: "z".into(), latitude: 0.0, longitude: 200.0 };
    assert!(matches!(haversine_m(&a, &bad), Err(crate::Error::Data(_))));
}

#[test]
fn geo_curve_missing_position_names_id() {
    let d = Tensor::from_rows(&[vec![0.0, 1.0]]).unwrap();
    let mut geo = HashMap::new();
    geo.insert("q".to_string(), GeoSample::new("q", 0.0, 0.0).unwrap());
    let err = geolocalize_curve(&d, &["q".into()], &["r0".into(), "r1".into()], &geo, &[10.0]).unwrap_err();
    assert!(err.to_string().contains("r0"));
}

#[test]
fn csv_formats() {
    let dir = tempfile::tempdir().unwrap();
    let d = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.5]]).unwrap();
    let report = RecallReport::compute(&d, &[0, 0], &[1, 2]).unwrap();
    let p = dir.path().join("r.csv");
    report.write_csv(&p).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap(), "k,recall\n1,0.500000\n2,1.000000\n");
    let p = dir.path().join("g.csv");
    write_geo_csv(&p, &[(5.0, 0.25)]).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap(), "threshold_m,accuracy\n5.000000,0.250000\n");
}

fn matrix() -> impl Strategy<Value = (Vec<f64>, usize, usize)> {
    (2usize..12, 2usize..12).prop_flat_map(|(n, m)| {
        (proptest::collection::vec(0.0f64..10.0, n * m), Just(n), Just(m))
    })
}

proptest! {
    #[test]
    fn recall_monotone_in_k((data, n, m) in matrix(), seed in 0usize..1000) {
        let d = Tensor::new(&[n, m], data).unwrap();
        let gt: Vec<usize> = (0..n).map(|i| (i * 7 + seed) % m).collect();
        let mut prev = 0.0;
        for k in 1..=m {
            let r = recall_at_k(&d, &gt, k).unwrap();
            prop_assert!(r >= prev);
            prev = r;
        }
        prop_assert_eq!(prev, 1.0);
    }

    #[test]
    fn gallery_permutation_invariant((data, n, m) in matrix(), shift in 1usize..50) {
        let d = Tensor::new(&[n, m], data.clone()).unwrap();
        let gt: Vec<usize> = (0..n).map(|i| i % m).collect();
        // reverse gallery order; continuous random data has no ties
        let perm: Vec<usize> = (0..m).map(|j| (j + shift) % m).collect();
        let mut pdata = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                pdata[i * m + perm[j]] = data[i * m + j];
            }
        }
        let pd = Tensor::new(&[n, m], pdata).unwrap();
        let pgt: Vec<usize> = gt.iter().map(|&g| perm[g]).collect();
        for k in 1..=m {
            prop_assert_eq!(recall_at_k(&d, &gt, k).unwrap(), recall_at_k(&pd, &pgt, k).unwrap());
        }
    }

    #[test]
    fn appending_reference_never_helps((data, n, m) in matrix(), extra in proptest::collection::vec(0.0f64..10.0, 12)) {
        let d = Tensor::new(&[n, m], data.clone()).unwrap();
        let gt: Vec<usize> = (0..n).map(|i| i % m).collect();
        let mut wider = Vec::with_capacity(n * (m + 1));
        for i in 0..n {
            wider.extend_from_slice(&data[i * m..(i + 1) * m]);
            wider.push(extra[i]);
        }
        let dw = Tensor::new(&[n, m + 1], wider).unwrap();
        for k in 1..=m {
            prop_assert!(recall_at_k(&dw, &gt, k).unwrap() <= recall_at_k(&d, &gt, k).unwrap());
        }
    }

    #[test]
    fn geo_curve_monotone(lats in proptest::collection::vec(-1.0f64..1.0, 6), ts in proptest::collection::vec(0.0f64..300_000.0, 1..8)) {
        let ids: Vec<String> = (0..6).map(|i| format!("s{i}")).collect();
        let geo: HashMap<String, GeoSample> = ids.iter().zip(&lats)
            .map(|(id, &lat)| (id.clone(), GeoSample::new(id.clone(), lat, 0.0).unwrap()))
            .collect();
        let d = Tensor::from_fn(&[6, 6], |i| ((i * 37) % 11) as f64);
        let mut ts = ts;
        ts.sort_by(f64::total_cmp);
        let curve = geolocalize_curve(&d, &ids, &ids, &geo, &ts).unwrap();
        for w in curve.windows(2) {
            prop_assert!(w[1].1 >= w[0].1);
        }
    }
}
