//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs without the libtest harness so the lines always print.

mod common;

use std::collections::HashMap;
use std::error::Error as StdError;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use common::canny_ref::{iou, reference_canny, shapes};
use xview::diffcore::{finite_diff_check, ConvGeom, DistanceMode, GradCheckOptions, Graph, Mode, ParamStore, Tensor, Var};
use xview::encoder::{build_two_stream, EncoderConfig};
use xview::fusion::init_fusion;
use xview::losses::{
    batch_loss, enumerate_exhaustive_triplets, joint_loss, mine_hard_negatives, soft_margin_loss, triplet_loss,
    weighted_soft_margin_loss, LossConfig, LossKind, Triplet,
};
use xview::pipeline::{
    decode_embeddings, encode_embeddings, generate_synthetic_dataset, materialize_proxy, run_stage_on_views,
    Checkpoint, EmbedView, Stage, StageConfig, StageModel, StageOutput, SyntheticSpec,
};
use xview::retrieval::{
    distance_matrix, geolocalize_curve, haversine_m, one_percent_k, recall_at_k, top_one_percent, EmbeddingMatrix,
    GeoSample,
};
use xview::synthproxy::{canny, CannyParams, GrayImage};

type AnyResult<T> = Result<T, Box<dyn StdError>>;
type Fragment = dyn Fn(&mut Graph<f64>, &ParamStore<f64>) -> xview::Result<Var>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> AnyResult<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

const SEEDS: u64 = 5;

fn config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.toml")
}

fn stage_config(stage: Stage, seed: u64) -> AnyResult<StageConfig> {
    let mut cfg = StageConfig::load(config_path(), stage)?;
    cfg.seed = seed;
    cfg.proxy.seed = seed;
    Ok(cfg)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| normal(rng))
}

// ---------------------------------------------------------------- 1

fn triplet_counts() -> AnyResult<Outcome> {
    let n30 = enumerate_exhaustive_triplets(30)?.len();
    let n24 = enumerate_exhaustive_triplets(24)?.len();
    let mut ok = n30 == 1740 && n24 == 1104;
    for b in 2..=64usize {
        let t = enumerate_exhaustive_triplets(b)?;
        let mut seen = std::collections::HashSet::new();
        ok &= t.len() == 2 * b * (b - 1) && t.triples.iter().all(|x| seen.insert(*x) && x.negative != x.anchor);
    }
    outcome(ok, format!("B=30 → {n30}, B=24 → {n24}, B∈2..=64 distinct and 2·B·(B−1)"))
}

// ---------------------------------------------------------------- 2

fn loss_identities() -> AnyResult<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_ln2 = 0.0f64;
    for _ in 0..1000 {
        let d = rng.random_range(0.0..50.0);
        let a = rng.random_range(0.01..100.0);
        worst_ln2 = worst_ln2.max((weighted_soft_margin_loss(d, d, a)? - std::f64::consts::LN_2).abs());
    }
    let mut alpha_one = 0;
    let mut zero_iff = 0;
    for _ in 0..10_000 {
        let dp: f64 = rng.random_range(0.0..10.0);
        let dn: f64 = rng.random_range(0.0..10.0);
        if weighted_soft_margin_loss(dp, dn, 1.0)? == soft_margin_loss(dp, dn)
            && soft_margin_loss(dp, dn) == (dp - dn).exp().ln_1p()
        {
            alpha_one += 1;
        }
        let m: f64 = rng.random_range(0.0..2.0);
        if (triplet_loss(dp, dn, m) == 0.0) == (dn >= dp + m) {
            zero_iff += 1;
        }
    }
    // boundary case where the hinge is exactly zero
    let edge = triplet_loss(1.0, 1.5, 0.5) == 0.0 && triplet_loss(1.0, 1.25, 0.5) > 0.0;
    let ok = worst_ln2 <= 1e-12 && alpha_one == 10_000 && zero_iff == 10_000 && edge;
    outcome(
        ok,
        format!("|L(d,d)−ln2| ≤ {worst_ln2:.1e}, α=1 exact {alpha_one}/10000, hinge zero-iff {zero_iff}/10000"),
    )
}

// ---------------------------------------------------------------- 3

/// Fixed random linear read-out so every output entry gets its own upstream gradient.
fn readout(g: &mut Graph<f64>, y: Var, seed: u64) -> xview::Result<Var> {
    let y = if g.value(y).rank() == 4 { g.flatten(y)? } else { y };
    if g.value(y).rank() == 1 {
        return Ok(g.sum(y));
    }
    let d = g.value(y).shape()[1];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = g.input(random_tensor(&mut rng, &[d, 1]));
    let b = g.input(Tensor::zeros(&[1]));
    let z = g.linear(y, w, b)?;
    Ok(g.sum(z))
}

fn store_of(entries: &[(&str, Tensor<f64>)]) -> ParamStore<f64> {
    let mut s = ParamStore::new();
    for (name, t) in entries {
        s.insert(*name, t.clone());
    }
    s
}

fn gradient_suite() -> AnyResult<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let all = GradCheckOptions::default();
    let mut results: Vec<(&str, f64)> = Vec::new();
    let mut run = |name: &'static str,
                   store: ParamStore<f64>,
                   opts: GradCheckOptions,
                   f: &Fragment|
     -> AnyResult<()> {
        let report = finite_diff_check(&store, opts, f)?;
        results.push((name, report.max_rel_error));
        Ok(())
    };

    let s = store_of(&[
        ("x", random_tensor(&mut rng, &[3, 5])),
        ("w", random_tensor(&mut rng, &[5, 4])),
        ("b", random_tensor(&mut rng, &[4])),
    ]);
    run("linear", s, all, &|g, s| {
        let (x, w, b) = (g.param(s, "x")?, g.param(s, "w")?, g.param(s, "b")?);
        let y = g.linear(x, w, b)?;
        readout(g, y, 1)
    })?;

    let s = store_of(&[
        ("x", random_tensor(&mut rng, &[2, 2, 6, 5])),
        ("k", random_tensor(&mut rng, &[3, 2, 3, 3])),
        ("b", random_tensor(&mut rng, &[3])),
    ]);
    for (name, geom) in [
        ("conv2d s1 p0", ConvGeom { stride: 1, pad: 0 }),
        ("conv2d s2 p1", ConvGeom { stride: 2, pad: 1 }),
    ] {
        run(name, s.clone(), all, &move |g, s| {
            let (x, k, b) = (g.param(s, "x")?, g.param(s, "k")?, g.param(s, "b")?);
            let y = g.conv2d(x, k, b, geom)?;
            readout(g, y, 2)
        })?;
    }

    let s = store_of(&[("x", random_tensor(&mut rng, &[2, 3, 4, 4]))]);
    run("relu", s.clone(), all, &|g, s| {
        let x = g.param(s, "x")?;
        let y = g.relu(x);
        readout(g, y, 3)
    })?;
    run("dropout", s.clone(), all, &|g, s| {
        let x = g.param(s, "x")?;
        let y = g.dropout(x, 0.5, Mode::Train { stream: 7 }, 11)?;
        readout(g, y, 4)
    })?;
    run("gap", s.clone(), all, &|g, s| {
        let x = g.param(s, "x")?;
        let y = g.gap(x)?;
        readout(g, y, 5)
    })?;
    run("flatten", s, all, &|g, s| {
        let x = g.param(s, "x")?;
        let y = g.flatten(x)?;
        readout(g, y, 6)
    })?;

    let s = store_of(&[
        ("a", random_tensor(&mut rng, &[3, 4])),
        ("b", random_tensor(&mut rng, &[3, 2])),
        ("c", random_tensor(&mut rng, &[3, 4])),
    ]);
    run("concat", s.clone(), all, &|g, s| {
        let (a, b) = (g.param(s, "a")?, g.param(s, "b")?);
        let y = g.concat(&[a, b])?;
        readout(g, y, 7)
    })?;
    run("add + scale", s.clone(), all, &|g, s| {
        let (a, c) = (g.param(s, "a")?, g.param(s, "c")?);
        let y = g.add(a, c)?;
        let y = g.scale(y, -2.5);
        readout(g, y, 8)
    })?;
    run("l2_normalize", s.clone(), all, &|g, s| {
        let a = g.param(s, "a")?;
        let y = g.l2_normalize(a)?;
        readout(g, y, 9)
    })?;
    run("mean", s.clone(), all, &|g, s| {
        let a = g.param(s, "a")?;
        let y = g.relu(a);
        Ok(g.mean(y))
    })?;
    for (name, mode) in [
        ("distance euclidean", DistanceMode::Euclidean),
        ("distance squared", DistanceMode::SquaredEuclidean),
    ] {
        run(name, s.clone(), all, &move |g, s| {
            let (a, c) = (g.param(s, "a")?, g.param(s, "c")?);
            let d = g.cross_distance(a, c, vec![(0, 0), (0, 2), (1, 2), (2, 1), (2, 2)], mode)?;
            let d = g.scale(d, 0.7);
            Ok(g.sum(d))
        })?;
    }

    let s = store_of(&[
        ("dp", Tensor::from_fn(&[6], |_| rng.random_range(0.0..2.0))),
        ("dn", Tensor::from_fn(&[6], |_| rng.random_range(0.0..2.0))),
    ]);
    run("soft margin", s.clone(), all, &|g, s| {
        let (dp, dn) = (g.param(s, "dp")?, g.param(s, "dn")?);
        let y = g.soft_margin(dp, dn, 10.0)?;
        Ok(g.sum(y))
    })?;
    run("hinge", s, all, &|g, s| {
        let (dp, dn) = (g.param(s, "dp")?, g.param(s, "dn")?);
        let y = g.hinge(dp, dn, 0.3)?;
        Ok(g.sum(y))
    })?;

    let mut enc = EncoderConfig::toy(3, 8, 12);
    enc.conv_blocks.truncate(3);
    for (b, c) in enc.conv_blocks.iter_mut().zip([3, 4, 4]) {
        b.out_channels = c;
    }
    enc.tap_layers = vec![1, 2];
    enc.dropout_blocks = 2;
    enc.embed_dim = 5;
    let images = random_tensor(&mut rng, &[2, 3, 8, 12]);
    for (name, gap, normalize) in [("encoder stack", false, false), ("encoder stack gap+norm", true, true)] {
        let mut cfg = enc.clone();
        cfg.use_gap = gap;
        cfg.normalize = normalize;
        let model = build_two_stream::<f64>(cfg.clone(), cfg, true)?;
        let encoder = model.ground.clone();
        let images = images.clone();
        run(name, model.store, all, &move |g, s| {
            let x = g.input(images.clone());
            let y = encoder.forward(g, s, x, Mode::Train { stream: 3 })?;
            readout(g, y, 10)
        })?;
    }

    let cfg = LossConfig::default();
    let s = store_of(&[
        ("q", random_tensor(&mut rng, &[4, 6])),
        ("r", random_tensor(&mut rng, &[4, 6])),
        ("s", random_tensor(&mut rng, &[4, 6])),
    ]);
    let exhaustive = enumerate_exhaustive_triplets(4)?;
    for kind in [LossKind::WeightedSoftMargin, LossKind::SoftMargin, LossKind::Margin] {
        let cfg = LossConfig { kind, margin: 0.2, ..cfg };
        let t = exhaustive.clone();
        run("batch_loss B=4", s.clone(), all, &move |g, s| {
            let (q, r) = (g.param(s, "q")?, g.param(s, "r")?);
            batch_loss(g, q, r, &t, &cfg)
        })?;
    }
    let hard = {
        let d = xview::losses::batch_distance_matrix(s.value("q")?, s.value("r")?, DistanceMode::Euclidean)?;
        mine_hard_negatives(&d)?
    };
    {
        let t = hard.clone();
        run("batch_loss B=4 hard", s.clone(), all, &move |g, s| {
            let (q, r) = (g.param(s, "q")?, g.param(s, "r")?);
            batch_loss(g, q, r, &t, &cfg)
        })?;
    }
    let jcfg = LossConfig {
        lambda1: 10.0,
        lambda2: 1.0,
        ..cfg
    };
    {
        let (main, aux) = (exhaustive.clone(), hard.clone());
        run("joint_loss λ 10/1", s, all, &move |g, s| {
            let (fg, fa, fs) = (g.param(s, "q")?, g.param(s, "r")?, g.param(s, "s")?);
            joint_loss(g, fg, fs, fa, &main, &aux, &jcfg)
        })?;
    }

    // fusion end to end over frozen encoders
    let mut ga = EncoderConfig::toy(3, 8, 16);
    ga.conv_blocks.truncate(3);
    ga.tap_layers = vec![1, 2];
    ga.embed_dim = 6;
    let mut aa = ga.clone();
    aa.input_width = 8;
    let model = build_two_stream::<f64>(ga, aa, false)?;
    let ground_img = random_tensor(&mut rng, &[4, 3, 8, 16]).map(|v| 0.5 + 0.2 * v);
    let aerial_img = random_tensor(&mut rng, &[4, 3, 8, 8]).map(|v| 0.5 + 0.2 * v);
    let synth_img = random_tensor(&mut rng, &[4, 3, 8, 8]).map(|v| 0.5 + 0.2 * v);
    let fg = model.ground.encode(&model.store, &ground_img, Mode::Eval)?;
    let fa = model.aerial.encode(&model.store, &aerial_img, Mode::Eval)?;
    let fs = model.aerial.encode(&model.store, &synth_img, Mode::Eval)?;
    let head = init_fusion::<f64>(6, 9)?;
    let store = head.store.clone();
    run("fusion head", store, all, &move |g, s| {
        let (a, b, c) = (g.input(fg.clone()), g.input(fs.clone()), g.input(fa.clone()));
        let q = head.fuse_query(g, s, a, b)?;
        let r = head.project_reference(g, s, c)?;
        batch_loss(g, q, r, &exhaustive, &cfg)
    })?;

    let worst = results.iter().cloned().fold(("", 0.0f64), |acc, x| if x.1 > acc.1 { x } else { acc });
    outcome(
        results.iter().all(|r| r.1 < 1e-4),
        format!("{} checks, worst {:.2e} ({})", results.len(), worst.1, worst.0),
    )
}

// ---------------------------------------------------------------- 4

fn oracle_recall(dist: &Tensor<f64>, gt: &[usize], k: usize) -> f64 {
    let (n, m) = (dist.shape()[0], dist.shape()[1]);
    let mut hits = 0;
    for (i, &target) in gt.iter().enumerate() {
        let row = dist.row(i);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap().then(a.cmp(&b)));
        if order.iter().position(|&j| j == target).unwrap() < k {
            hits += 1;
        }
    }
    hits as f64 / n as f64
}

fn recall_oracle() -> AnyResult<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checks = 0;
    let mut mismatches = 0;
    for trial in 0..20 {
        let coarse = trial % 2 == 1;
        let dist = Tensor::from_fn(&[200, 200], |_| {
            let v: f64 = rng.random();
            if coarse { (v * 20.0).round() / 20.0 } else { v }
        });
        let gt: Vec<usize> = (0..200).map(|_| rng.random_range(0..200)).collect();
        for k in [1, 5, 10] {
            checks += 1;
            if recall_at_k(&dist, &gt, k)? != oracle_recall(&dist, &gt, k) {
                mismatches += 1;
            }
        }
        checks += 1;
        if top_one_percent(&dist, &gt)? != oracle_recall(&dist, &gt, 2) {
            mismatches += 1;
        }
    }
    let k200 = one_percent_k(200);
    outcome(
        mismatches == 0 && k200 == 2,
        format!("{checks} comparisons, {mismatches} mismatches, 1% of 200 → K={k200}"),
    )
}

// ---------------------------------------------------------------- 5

fn hard_negative_oracle() -> AnyResult<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut equal = 0;
    for trial in 0..50 {
        let coarse = trial % 5 == 0;
        let dist = Tensor::from_fn(&[30, 30], |_| {
            let v: f64 = rng.random();
            if coarse { (v * 8.0).round() } else { v }
        });
        let all = enumerate_exhaustive_triplets(30)?;
        let mut expected: Vec<Triplet> = Vec::new();
        for group in all.triples.chunk_by(|a, b| a.anchor == b.anchor && a.direction == b.direction) {
            let d = |t: &Triplet| {
                let (i, j) = t.negative_pair();
                dist.at2(i, j)
            };
            let best = group.iter().fold(group[0], |acc, t| if d(t) < d(&acc) { *t } else { acc });
            expected.push(best);
        }
        if mine_hard_negatives(&dist)?.triples == expected {
            equal += 1;
        }
    }
    outcome(equal == 50, format!("{equal}/50 batches match the exhaustive argmin"))
}

// ---------------------------------------------------------------- 6

fn canny_checks() -> AnyResult<Outcome> {
    let p = CannyParams::default();
    let flat = canny(&GrayImage::from_fn(32, 32, |_, _| 0.5)?, &p)?;
    let step = canny(&GrayImage::from_fn(32, 32, |_, x| if x < 16 { 0.2 } else { 0.8 })?, &p)?;
    let near = step.on_pixels().iter().all(|&(_, x)| x == 15 || x == 16);
    let rows = (0..32).filter(|&y| (0..32).any(|x| step.get(y, x))).count();
    let mut worst = f64::INFINITY;
    let mut names = Vec::new();
    for (name, img) in shapes() {
        let score = iou(&canny(&img, &p)?, &reference_canny(&img, p.low, p.high));
        worst = worst.min(score);
        names.push(format!("{name} {score:.3}"));
    }
    let ok = flat.count() == 0 && near && step.count() > 0 && rows as f64 >= 0.9 * 32.0 && worst >= 0.9;
    outcome(
        ok,
        format!(
            "flat {} edges, step within 1px {near}, rows {rows}/32, IoU vs imageproc: {}",
            flat.count(),
            names.join(", ")
        ),
    )
}

// ---------------------------------------------------------------- 7, 8, 10

struct Benchmark {
    _dir: tempfile::TempDir,
    train: xview::fusion::ViewSet<f64>,
    test: xview::fusion::ViewSet<f64>,
}

fn benchmark(seed: u64, fidelity: Option<f64>) -> AnyResult<Benchmark> {
    let dir = tempfile::tempdir()?;
    let spec = SyntheticSpec { seed, ..Default::default() };
    let ds = generate_synthetic_dataset(&spec, dir.path())?;
    let mut proxy = stage_config(Stage::BaselineGa, seed)?.proxy;
    if let Some(rho) = fidelity {
        proxy.fidelity = rho;
    }
    let synth = dir.path().join("synth");
    let train = materialize_proxy(&ds.train, &proxy, &synth)?.load_views(None)?;
    let test = materialize_proxy(&ds.test, &proxy, &synth)?.load_views(None)?;
    Ok(Benchmark { _dir: dir, train, test })
}

fn train(stage: Stage, seed: u64, views: &xview::fusion::ViewSet<f64>, warm: Option<&StageOutput>) -> AnyResult<StageOutput> {
    let cfg = stage_config(stage, seed)?;
    Ok(run_stage_on_views(&cfg, views, warm.map(|w| &w.checkpoint))?)
}

fn held_out(out: &StageOutput, test: &xview::fusion::ViewSet<f64>, k: Option<usize>) -> AnyResult<f64> {
    let model = StageModel::from_checkpoint(&out.checkpoint)?;
    let q = model.embed(test, EmbedView::Query)?;
    let r = model.embed(test, EmbedView::Reference)?;
    let dist = distance_matrix(&q, &r)?;
    let gt: Vec<usize> = (0..q.len()).collect();
    Ok(match k {
        Some(k) => recall_at_k(&dist, &gt, k)?,
        None => top_one_percent(&dist, &gt)?,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn table_ordering() -> AnyResult<Outcome> {
    let (mut base, mut joint, mut fusion) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..SEEDS {
        let b = benchmark(seed, None)?;
        let o_base = train(Stage::BaselineGa, seed, &b.train, None)?;
        let o_joint = train(Stage::Joint, seed, &b.train, Some(&o_base))?;
        let o_fusion = train(Stage::Fusion, seed, &b.train, Some(&o_joint))?;
        base.push(held_out(&o_base, &b.test, Some(1))?);
        joint.push(held_out(&o_joint, &b.test, Some(1))?);
        fusion.push(held_out(&o_fusion, &b.test, Some(1))?);
    }
    let (mb, mj, mf) = (mean(&base), mean(&joint), mean(&fusion));
    outcome(
        mf >= mj && mj >= mb && mj - mb >= 0.02,
        format!("top-1 over {SEEDS} seeds: baseline {:.1}%, joint {:.1}%, fusion {:.1}%", 100.0 * mb, 100.0 * mj, 100.0 * mf),
    )
}

fn proxy_monotonicity() -> AnyResult<Outcome> {
    let mut means = Vec::new();
    for rho in [0.0, 0.5, 1.0] {
        let mut scores = Vec::new();
        for seed in 0..SEEDS {
            let b = benchmark(seed, Some(rho))?;
            let out = train(Stage::BaselineSynth, seed, &b.train, None)?;
            scores.push(held_out(&out, &b.test, None)?);
        }
        means.push(mean(&scores));
    }
    outcome(
        means.windows(2).all(|w| w[1] >= w[0]),
        format!(
            "synth-query top-1% at ρ 0 / 0.5 / 1: {:.1}% / {:.1}% / {:.1}%",
            100.0 * means[0],
            100.0 * means[1],
            100.0 * means[2]
        ),
    )
}

fn determinism_and_io() -> AnyResult<Outcome> {
    let run = || -> AnyResult<Vec<(Stage, Checkpoint)>> {
        let b = benchmark(0, None)?;
        let base = train(Stage::BaselineGa, 0, &b.train, None)?;
        let synth = train(Stage::BaselineSynth, 0, &b.train, None)?;
        let joint = train(Stage::Joint, 0, &b.train, Some(&base))?;
        let fusion = train(Stage::Fusion, 0, &b.train, Some(&joint))?;
        Ok([base, synth, joint, fusion].into_iter().map(|o| (o.checkpoint.stage, o.checkpoint)).collect())
    };
    let (a, b) = (run()?, run()?);
    let mut identical = 0;
    for ((sa, ca), (_, cb)) in a.iter().zip(&b) {
        if ca.encode()? == cb.encode()? {
            identical += 1;
        } else {
            eprintln!("  {sa}: checkpoints differ");
        }
    }

    let dir = tempfile::tempdir()?;
    let mut round_trip = true;
    for (stage, ck) in &a {
        let path = dir.path().join(format!("{stage}.xvmc"));
        ck.save(&path)?;
        let back = Checkpoint::load(&path)?;
        round_trip &= back == *ck && back.encode()? == ck.encode()? && back.digest() == ck.digest();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let ids: Vec<String> = (0..17).map(|i| format!("id-{i}")).collect();
    let data: Vec<f64> = (0..17 * 9).map(|_| normal(&mut rng) * 1e3).collect();
    let m = EmbeddingMatrix::new(ids.clone(), 9, data.clone())?;
    let back = decode_embeddings(&encode_embeddings(&m)?)?;
    let exact32 = back.ids() == ids.as_slice()
        && back.data().iter().zip(&data).all(|(&b, &d)| b == d as f32);
    round_trip &= exact32;

    outcome(
        identical == a.len() && round_trip,
        format!("{identical}/{} stages bit-identical, containers round-trip {round_trip}", a.len()),
    )
}

// ---------------------------------------------------------------- 9

fn geo_checks() -> AnyResult<Outcome> {
    let one_degree = haversine_m(&GeoSample::new("a", 0.0, 0.0)?, &GeoSample::new("b", 1.0, 0.0)?)?;

    let dir = tempfile::tempdir()?;
    let ds = generate_synthetic_dataset(&SyntheticSpec::default(), dir.path())?;
    let geo = ds.test.geo_samples();
    let ids = ds.test.ids();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dist = Tensor::from_fn(&[ids.len(), ids.len()], |_| rng.random::<f64>());
    let thresholds: Vec<f64> = (0..=200).map(|i| 100.0 * i as f64).collect();
    let curve = geolocalize_curve(&dist, &ids, &ids, &geo, &thresholds)?;
    let monotone = curve.windows(2).all(|w| w[1].1 >= w[0].1) && curve.last().map(|c| c.1) == Some(1.0);

    // queries sit on refs 0..20 along a meridian, 0.001° apart; query i
    // retrieves ref i + offset[i]
    let offsets: [i64; 20] = [0, 0, 0, 0, 0, 1, 1, 1, -1, -1, 2, 2, -2, 3, 0, 0, 5, -4, 1, 0];
    let mut table = HashMap::new();
    let q_ids: Vec<String> = (0..20).map(|i| format!("q{i}")).collect();
    let r_ids: Vec<String> = (0..25).map(|j| format!("r{j}")).collect();
    for (i, id) in q_ids.iter().enumerate() {
        table.insert(id.clone(), GeoSample::new(id.clone(), 40.0 + 0.001 * i as f64, -80.0)?);
    }
    for (j, id) in r_ids.iter().enumerate() {
        table.insert(id.clone(), GeoSample::new(id.clone(), 40.0 + 0.001 * j as f64, -80.0)?);
    }
    let d = Tensor::from_fn(&[20, 25], |k| {
        let (i, j) = (k / 25, k % 25);
        if j as i64 == i as i64 + offsets[i] { 0.0 } else { 1.0 + j as f64 }
    });
    let hand = [(0.0, 8), (50.0, 8), (120.0, 14), (250.0, 17), (400.0, 18), (500.0, 19), (1000.0, 20)];
    let got = geolocalize_curve(&d, &q_ids, &r_ids, &table, &hand.map(|h| h.0))?;
    let exact = got.iter().zip(&hand).all(|(g, h)| g.0 == h.0 && g.1 == h.1 as f64 / 20.0);

    outcome(
        monotone && exact && (one_degree - 111_195.0).abs() <= 1.0,
        format!("1° = {one_degree:.2} m, grid curve monotone {monotone}, 20-sample oracle exact {exact}"),
    )
}

// ----------------------------------------------------------------

type Criterion = (u32, &'static str, Duration, fn() -> AnyResult<Outcome>);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "triplet count", Duration::from_secs(1), triplet_counts),
        (2, "loss identities", Duration::from_secs(1), loss_identities),
        (3, "gradient suite", Duration::from_secs(30), gradient_suite),
        (4, "recall oracle", Duration::from_secs(10), recall_oracle),
        (5, "hard-negative oracle", Duration::from_secs(5), hard_negative_oracle),
        (6, "canny", Duration::from_secs(10), canny_checks),
        (7, "cross-view ordering", Duration::from_secs(600), table_ordering),
        (8, "proxy fidelity monotonicity", Duration::from_secs(600), proxy_monotonicity),
        (9, "geo-localization", Duration::from_secs(5), geo_checks),
        (10, "determinism and io", Duration::from_secs(900), determinism_and_io),
    ];
    let mut failed = 0;
    for (n, name, budget, f) in criteria {
        let t = Instant::now();
        let res = std::panic::catch_unwind(f);
        let took = t.elapsed();
        let (pass, detail) = match res {
            Ok(Ok(o)) => (o.pass && took <= budget, o.detail),
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".to_string()),
        };
        if !pass {
            failed += 1;
        }
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {verdict} {name}: {detail} [{took:.1?} / budget {budget:?}]");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
