use super::{LossConfig, LossKind, TripletBatch};
use crate::diffcore::{row_distance, DistanceMode, Graph, Tensor, Var};
use crate::error::{dim_err, param_err, Result};
use crate::scalar::Real;

/// Distance between two embeddings.
pub fn pair_distance<T: Real>(a: &[T], b: &[T], mode: DistanceMode) -> Result<T> {
    if a.len() != b.len() {
        return Err(dim_err!("embedding dims differ: {} vs {}", a.len(), b.len()));
    }
    Ok(row_distance(a, b, mode))
}

/// `N×M` matrix of distances between the rows of `q` and `r`.
pub fn batch_distance_matrix<T: Real>(q: &Tensor<T>, r: &Tensor<T>, mode: DistanceMode) -> Result<Tensor<T>> {
    let ((n, e), (m, e2)) = (q.rows_cols(), r.rows_cols());
    if e != e2 {
        return Err(dim_err!("embedding dims differ: {:?} vs {:?}", q.shape(), r.shape()));
    }
    let mut data = Vec::with_capacity(n * m);
    for i in 0..n {
        let qi = q.row(i);
        data.extend((0..m).map(|j| row_distance(qi, r.row(j), mode)));
    }
    Tensor::new(&[n, m], data)
}

/// Mean triplet loss of `triplets` over aligned query/reference embeddings.
pub fn batch_loss<T: Real>(
    g: &mut Graph<T>,
    f_query: Var,
    f_ref: Var,
    triplets: &TripletBatch,
    cfg: &LossConfig,
) -> Result<Var> {
    cfg.validate()?;
    if triplets.is_empty() {
        return Err(param_err!("batch loss over an empty triplet set"));
    }
    let (qs, rs) = (g.value(f_query).shape(), g.value(f_ref).shape());
    if qs != rs || qs.len() != 2 {
        return Err(dim_err!("query embeddings {qs:?} and reference embeddings {rs:?} must align"));
    }
    let pos: Vec<_> = triplets.triples.iter().map(|t| t.positive_pair()).collect();
    let neg: Vec<_> = triplets.triples.iter().map(|t| t.negative_pair()).collect();
    let dp = g.cross_distance(f_query, f_ref, pos, cfg.distance)?;
    let dn = g.cross_distance(f_query, f_ref, neg, cfg.distance)?;
    let per = match cfg.kind {
        LossKind::WeightedSoftMargin => g.soft_margin(dp, dn, T::c(cfg.alpha))?,
        LossKind::SoftMargin => g.soft_margin(dp, dn, T::one())?,
        LossKind::Margin => g.hinge(dp, dn, T::c(cfg.margin))?,
    };
    Ok(g.mean(per))
}

/// Evaluates [`batch_loss`] on plain tensors.
pub fn batch_loss_value<T: Real>(
    f_query: &Tensor<T>,
    f_ref: &Tensor<T>,
    triplets: &TripletBatch,
    cfg: &LossConfig,
) -> Result<T> {
    let mut g = Graph::new();
    let q = g.input(f_query.clone());
    let r = g.input(f_ref.clone());
    let l = batch_loss(&mut g, q, r, triplets, cfg)?;
    Ok(g.value(l).item())
}

/// `λ1·L(f_g, f_a) + λ2·L(f_synth, f_a)`, each term over its own triplets.
/// Terms whose weight is zero are left off the tape.
#[allow(clippy::too_many_arguments)]
pub fn joint_loss<T: Real>(
    g: &mut Graph<T>,
    f_g: Var,
    f_synth: Var,
    f_a: Var,
    main: &TripletBatch,
    aux: &TripletBatch,
    cfg: &LossConfig,
) -> Result<Var> {
    cfg.validate()?;
    let mut total = None;
    for (w, q, t) in [(cfg.lambda1, f_g, main), (cfg.lambda2, f_synth, aux)] {
        if w == 0.0 {
            continue;
        }
        let l = batch_loss(g, q, f_a, t, cfg)?;
        let l = g.scale(l, T::c(w));
        total = Some(match total {
            None => l,
            Some(acc) => g.add(acc, l)?,
        });
    }
    total.ok_or_else(|| param_err!("joint loss with both weights zero"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{enumerate_exhaustive_triplets, weighted_soft_margin_loss};

    #[test]
    fn distance_examples() {
        let d = pair_distance(&[0.0, 0.0], &[3.0, 4.0], DistanceMode::Euclidean).unwrap();
        assert!((d - 5.0f64).abs() < 1e-9);
        let z = pair_distance(&[1.0, 2.0], &[1.0, 2.0], DistanceMode::Euclidean).unwrap();
        assert!((z - 1e-6f64).abs() < 1e-12);
        assert_eq!(pair_distance(&[1.0, 2.0], &[1.0, 2.0], DistanceMode::SquaredEuclidean).unwrap(), 0.0f64);
        assert!(pair_distance(&[1.0], &[1.0, 2.0], DistanceMode::Euclidean).is_err());
    }

    #[test]
    fn identical_embeddings_give_ln2() {
        let f = Tensor::<f64>::full(&[5, 3], 0.25);
        let t = enumerate_exhaustive_triplets(5).unwrap();
        let l = batch_loss_value(&f, &f, &t, &LossConfig::default()).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn separated_batch_is_near_zero() {
        let q = Tensor::from_fn(&[4, 4], |i| if i % 5 == 0 { 10.0 } else { 0.0 });
        let t = enumerate_exhaustive_triplets(4).unwrap();
        let l = batch_loss_value(&q, &q, &t, &LossConfig::default()).unwrap();
        assert!(l < 1e-8, "{l}");
    }

    #[test]
    fn empty_triplets_rejected() {
        let f = Tensor::<f64>::zeros(&[2, 2]);
        let t = TripletBatch { triples: vec![], batch_size: 2 };
        assert!(batch_loss_value(&f, &f, &t, &LossConfig::default()).is_err());
    }

    #[test]
    fn joint_reductions() {
        let fg = Tensor::from_fn(&[4, 3], |i| (i as f64 * 1.3).sin());
        let fs = Tensor::from_fn(&[4, 3], |i| (i as f64 * 0.4).cos());
        let fa = Tensor::from_fn(&[4, 3], |i| (i as f64 * 0.9).sin());
        let t = enumerate_exhaustive_triplets(4).unwrap();
        let eval = |cfg: LossConfig, s: &Tensor<f64>| {
            let mut g = Graph::new();
            let (a, b, c) = (g.input(fg.clone()), g.input(s.clone()), g.input(fa.clone()));
            let l = joint_loss(&mut g, a, b, c, &t, &t, &cfg).unwrap();
            g.value(l).item()
        };
        let two = batch_loss_value(&fg, &fa, &t, &LossConfig::default()).unwrap();
        let cfg0 = LossConfig { lambda2: 0.0, ..LossConfig::default() };
        assert_eq!(eval(cfg0, &fs), 10.0 * two);
        let same = eval(LossConfig::default(), &fg);
        assert!((same - 11.0 * two).abs() < 1e-12);

        let flat = Tensor::full(&[4, 3], 1.0);
        let mut g = Graph::new();
        let (a, b, c) = (g.input(flat.clone()), g.input(flat.clone()), g.input(flat.clone()));
        let l = joint_loss(&mut g, a, b, c, &t, &t, &LossConfig::default()).unwrap();
        assert!((g.value(l).item() - 11.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn batch_matches_scalar_loop() {
        let q = Tensor::from_fn(&[4, 6], |i| ((i * 7919) % 13) as f64 / 13.0);
        let r = Tensor::from_fn(&[4, 6], |i| ((i * 104729) % 17) as f64 / 17.0);
        let t = enumerate_exhaustive_triplets(4).unwrap();
        let got = batch_loss_value(&q, &r, &t, &LossConfig::default()).unwrap();
        let dist = |a: &[f64], b: &[f64]| {
            let mut s = 0.0;
            for k in 0..a.len() {
                s += (a[k] - b[k]) * (a[k] - b[k]);
            }
            (s + 1e-12f64).sqrt()
        };
        let mut sum = 0.0;
        for tr in &t.triples {
            let (pq, pr) = tr.positive_pair();
            let (nq, nr) = tr.negative_pair();
            let dp = dist(q.row(pq), r.row(pr));
            let dn = dist(q.row(nq), r.row(nr));
            sum += weighted_soft_margin_loss(dp, dn, 10.0).unwrap();
        }
        assert!((got - sum / t.len() as f64).abs() < 1e-10);
    }
}
