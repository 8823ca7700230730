use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::config::{ResolvedConfig, Stage, StageConfig};
use super::container::Checkpoint;
use super::manifest::Manifest;
use crate::diffcore::{mix, name_key, AdamConfig, Mode, ParamStore};
use crate::encoder::{
    build_two_stream, Encoder, JointModel, AERIAL_PREFIX, GROUND_PREFIX, SHARED_PREFIX,
};
use crate::error::{Error, Result};
use crate::fusion::{extract_fusion_features, train_fusion_on_features, FusionModel, FusionTrainConfig, ViewSet};
use crate::losses::{batch_loss, joint_loss};
use crate::retrieval::{distance_matrix, recall_at_k, EmbeddingMatrix};
use crate::synthproxy::{proxy_synthesize, read_rgb, write_rgb, ProxyConfig};
use crate::training::{run_schedule, select_triplets, Schedule, StepRecord};
use crate::Tensor;

const ENCODE_CHUNK: usize = 32;

/// Which embedding a trained stage produces for a split.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbedView {
    /// The stage's query descriptor (fused for the fusion stage).
    Query,
    /// The stage's reference descriptor.
    Reference,
    /// Synthesized views through the aerial encoder.
    Synth,
}

/// Result of [`run_stage`].
#[derive(Clone, Debug)]
pub struct StageOutput {
    pub checkpoint: Checkpoint,
    pub log: Vec<StepRecord>,
    /// `(step, recall@1)` on the training subset.
    pub recall_log: Vec<(usize, f64)>,
}

impl StageOutput {
    pub fn initial_loss(&self) -> Option<f64> {
        self.log.first().map(|r| r.loss)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.log.last().map(|r| r.loss)
    }

    /// `step,loss,phase` rows.
    pub fn write_log(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("step,loss,phase\n");
        for r in &self.log {
            out.push_str(&format!("{},{},{}\n", r.step, r.loss, r.phase));
        }
        write_text(path.as_ref(), &out)
    }

    pub fn write_recall_log(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("step,recall_at_1\n");
        for (s, r) in &self.recall_log {
            out.push_str(&format!("{s},{r:.6}\n"));
        }
        write_text(path.as_ref(), &out)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// A trained stage rebuilt from its checkpoint.
#[derive(Clone, Debug)]
pub struct StageModel {
    pub stage: Stage,
    pub resolved: ResolvedConfig,
    pub store: ParamStore<f64>,
    pub ground: Encoder,
    pub aerial: Encoder,
    pub fusion: Option<FusionModel<f64>>,
}

fn stream_prefixes(stage: Stage, shared: bool) -> (&'static str, &'static str) {
    match stage {
        Stage::BaselineGa | Stage::BaselineSynth if shared => (SHARED_PREFIX, SHARED_PREFIX),
        _ => (GROUND_PREFIX, AERIAL_PREFIX),
    }
}

impl StageModel {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let resolved = ResolvedConfig::from_text(&ck.config_text)?;
        let (gp, ap) = stream_prefixes(ck.stage, resolved.config.share_weights);
        let ground = Encoder::describe(resolved.ground.clone(), gp)?;
        let aerial = Encoder::describe(resolved.aerial.clone(), ap)?;
        let store = ck.to_store::<f64>();
        for enc in [&ground, &aerial] {
            for (name, shape) in enc.param_shapes()? {
                match store.value(&name) {
                    Ok(t) if t.shape() == shape.as_slice() => {}
                    _ => return Err(Error::Checkpoint(format!("parameter `{name}` missing or not {shape:?}"))),
                }
            }
        }
        let fusion = if ck.stage == Stage::Fusion {
            let mut head = ParamStore::new();
            for (name, p) in store.iter().filter(|(n, _)| n.starts_with("fusion.")) {
                head.insert(name, p.value.clone());
            }
            Some(FusionModel::from_store(head)?)
        } else {
            None
        };
        Ok(Self { stage: ck.stage, resolved, store, ground, aerial, fusion })
    }

    pub fn uses_edgemap(&self) -> bool {
        self.resolved.config.with_edgemap
    }

    fn encode(&self, enc: &Encoder, images: &Tensor) -> Result<Tensor> {
        enc.encode_frozen(&self.store, images, ENCODE_CHUNK)
    }

    pub fn embed_tensor(&self, views: &ViewSet<f64>, which: EmbedView) -> Result<Tensor> {
        match (which, self.stage) {
            (EmbedView::Query, Stage::BaselineSynth) => self.encode(&self.ground, views.require_synth()?),
            (EmbedView::Query, Stage::Fusion) => {
                let fg = self.encode(&self.ground, &views.ground)?;
                let fs = self.encode(&self.aerial, views.require_synth()?)?;
                self.fusion.as_ref().expect("fusion head").fuse_query_values(&fg, &fs)
            }
            (EmbedView::Query, _) => self.encode(&self.ground, &views.ground),
            (EmbedView::Reference, Stage::Fusion) => {
                let fa = self.encode(&self.aerial, &views.aerial)?;
                self.fusion.as_ref().expect("fusion head").project_reference_values(&fa)
            }
            (EmbedView::Reference, _) => self.encode(&self.aerial, &views.aerial),
            (EmbedView::Synth, _) => self.encode(&self.aerial, views.require_synth()?),
        }
    }

    pub fn embed(&self, views: &ViewSet<f64>, which: EmbedView) -> Result<EmbeddingMatrix<f64>> {
        EmbeddingMatrix::from_tensor(views.ids.clone(), &self.embed_tensor(views, which)?)
    }

    /// Recall@k of the stage's query against its references, matched by row.
    pub fn recall_at(&self, views: &ViewSet<f64>, k: usize) -> Result<f64> {
        let q = self.embed(views, EmbedView::Query)?;
        let r = self.embed(views, EmbedView::Reference)?;
        let gt: Vec<usize> = (0..q.len()).collect();
        recall_at_k(&distance_matrix(&q, &r)?, &gt, k)
    }
}

fn schedule(cfg: &StageConfig) -> Schedule {
    Schedule {
        batch_size: cfg.batch(),
        steps_exhaustive: cfg.steps_exhaustive,
        steps_hard_negative: cfg.steps_hard_negative,
        adam: AdamConfig::with_lr(cfg.lr),
        seed: mix(cfg.seed, name_key(cfg.stage.name()), 0),
    }
}

fn channels(t: &Tensor) -> (usize, usize, usize) {
    let s = t.shape();
    (s[1], s[2], s[3])
}

/// Recall@1 of `q` against `r` over the first `n` rows.
fn subset_recall(q: &Tensor, r: &Tensor) -> Result<f64> {
    let ids: Vec<String> = (0..q.shape()[0]).map(|i| i.to_string()).collect();
    let qm = EmbeddingMatrix::from_tensor(ids.clone(), q)?;
    let rm = EmbeddingMatrix::from_tensor(ids, r)?;
    let gt: Vec<usize> = (0..qm.len()).collect();
    recall_at_k(&distance_matrix(&qm, &rm)?, &gt, 1)
}

fn first_rows(t: &Tensor, n: usize) -> Result<Tensor> {
    t.slice_rows(0, n.min(t.shape()[0]))
}

fn check_warm_start(cfg: &StageConfig, warm: Option<&Checkpoint>, allowed: Option<Stage>) -> Result<()> {
    match (warm, allowed) {
        (None, Some(req)) => Err(Error::Stage(format!(
            "stage {} requires a {req} checkpoint as warm start (--warm-start)",
            cfg.stage
        ))),
        (Some(ck), req) if ck.stage != cfg.stage && Some(ck.stage) != req => Err(Error::Stage(format!(
            "stage {} cannot start from a {} checkpoint{}",
            cfg.stage,
            ck.stage,
            req.map(|r| format!("; it needs a {r} checkpoint")).unwrap_or_default()
        ))),
        _ => Ok(()),
    }
}

/// Loads the manifest's images and runs one stage.
pub fn run_stage(cfg: &StageConfig, manifest: &Manifest, warm_start: Option<&Checkpoint>) -> Result<StageOutput> {
    let views = manifest.load_views(cfg.with_edgemap.then_some(&cfg.canny))?;
    run_stage_on_views(cfg, &views, warm_start)
}

/// Runs one stage on already decoded views.
///
/// The joint stage starts from a `baseline-ga` checkpoint and the fusion
/// stage from a `joint` checkpoint; any stage may also resume from its own
/// checkpoint when the configs agree.
pub fn run_stage_on_views(cfg: &StageConfig, views: &ViewSet<f64>, warm_start: Option<&Checkpoint>) -> Result<StageOutput> {
    cfg.validate()?;
    let required = match cfg.stage {
        Stage::BaselineGa | Stage::BaselineSynth => None,
        Stage::Joint => Some(Stage::BaselineGa),
        Stage::Fusion => Some(Stage::Joint),
    };
    check_warm_start(cfg, warm_start, required)?;
    if cfg.stage == Stage::Fusion && warm_start.map(|c| c.stage) == Some(Stage::Fusion) {
        return Err(Error::Stage("fusion trains a fresh head from a joint checkpoint".into()));
    }
    match cfg.stage {
        Stage::BaselineGa | Stage::BaselineSynth => run_two_stream(cfg, views, warm_start),
        Stage::Joint => run_joint(cfg, views, warm_start.expect("checked")),
        Stage::Fusion => run_fusion(cfg, views, warm_start.expect("checked")),
    }
}

fn recall_every(cfg: &StageConfig, step: usize) -> bool {
    cfg.eval_every > 0 && (step + 1).is_multiple_of(cfg.eval_every)
}

fn run_two_stream(cfg: &StageConfig, views: &ViewSet<f64>, warm: Option<&Checkpoint>) -> Result<StageOutput> {
    let query = match cfg.stage {
        Stage::BaselineSynth => views.require_synth()?,
        _ => &views.ground,
    };
    let reference = &views.aerial;
    let (qc, qh, qw) = channels(query);
    let (rc, rh, rw) = channels(reference);
    let cfg_q = cfg.encoder.resolve(qc, qh, qw, cfg.seed)?;
    let cfg_r = cfg.encoder.resolve(rc, rh, rw, cfg.seed)?;
    let resolved = ResolvedConfig { config: cfg.clone(), ground: cfg_q.clone(), aerial: cfg_r.clone() };
    let resolved = ResolvedConfig { config: StageConfig { batch_size: Some(cfg.batch()), ..resolved.config }, ..resolved };
    let text = resolved.to_text()?;
    let mut model = build_two_stream::<f64>(cfg_q, cfg_r, cfg.share_weights)?;
    if let Some(ck) = warm {
        ck.check_resume(cfg.stage, &text)?;
        model.store = ck.to_store();
    }
    let (ground, aerial) = (model.ground.clone(), model.aerial.clone());
    let mut recall_log = Vec::new();
    let log = run_schedule(
        &mut model.store,
        views.len(),
        &schedule(cfg),
        |g, s, batch, phase, step| {
            let xq = g.input(query.select_rows(batch)?);
            let xr = g.input(reference.select_rows(batch)?);
            let stream = step as u64 * 4;
            let fq = ground.forward(g, s, xq, Mode::Train { stream })?;
            let fr = aerial.forward(g, s, xr, Mode::Train { stream: stream + 1 })?;
            let triplets = select_triplets(phase, g.value(fq), g.value(fr), cfg.loss.distance)?;
            batch_loss(g, fq, fr, &triplets, &cfg.loss)
        },
        |step, s| {
            if recall_every(cfg, step) {
                let q = ground.encode_frozen(s, &first_rows(query, cfg.eval_subset)?, ENCODE_CHUNK)?;
                let r = aerial.encode_frozen(s, &first_rows(reference, cfg.eval_subset)?, ENCODE_CHUNK)?;
                let r1 = subset_recall(&q, &r)?;
                log::info!("{} step {}: train recall@1 {r1:.4}", cfg.stage, step + 1);
                recall_log.push((step + 1, r1));
            }
            Ok(())
        },
    )?;
    Ok(StageOutput { checkpoint: Checkpoint::from_store(cfg.stage, cfg.seed, text, &model.store), log, recall_log })
}

fn run_joint(cfg: &StageConfig, views: &ViewSet<f64>, warm: &Checkpoint) -> Result<StageOutput> {
    let synth = views.require_synth()?;
    let src = ResolvedConfig::from_text(&warm.config_text)?;
    let mut joint = if warm.stage == Stage::Joint {
        JointModel {
            store: warm.to_store(),
            ground: Encoder::describe(src.ground.clone(), GROUND_PREFIX)?,
            aerial: Encoder::describe(src.aerial.clone(), AERIAL_PREFIX)?,
        }
    } else {
        let (gp, ap) = stream_prefixes(warm.stage, src.config.share_weights);
        JointModel::from_two_stream_store(src.ground.clone(), src.aerial.clone(), &warm.to_store(), gp, ap)?
    };
    let resolved = ResolvedConfig {
        config: StageConfig { batch_size: Some(cfg.batch()), encoder: src.config.encoder.clone(), with_edgemap: src.config.with_edgemap, ..cfg.clone() },
        ground: src.ground,
        aerial: src.aerial,
    };
    let text = resolved.to_text()?;
    if warm.stage == Stage::Joint {
        warm.check_resume(cfg.stage, &text)?;
    }
    let (ground, aerial) = (joint.ground.clone(), joint.aerial.clone());
    let mut recall_log = Vec::new();
    let log = run_schedule(
        &mut joint.store,
        views.len(),
        &schedule(cfg),
        |g, s, batch, phase, step| {
            let xg = g.input(views.ground.select_rows(batch)?);
            let xs = g.input(synth.select_rows(batch)?);
            let xa = g.input(views.aerial.select_rows(batch)?);
            let stream = step as u64 * 4;
            let fg = ground.forward(g, s, xg, Mode::Train { stream })?;
            let fa = aerial.forward(g, s, xa, Mode::Train { stream: stream + 1 })?;
            let fs = aerial.forward(g, s, xs, Mode::Train { stream: stream + 2 })?;
            let main = select_triplets(phase, g.value(fg), g.value(fa), cfg.loss.distance)?;
            let aux = select_triplets(phase, g.value(fs), g.value(fa), cfg.loss.distance)?;
            joint_loss(g, fg, fs, fa, &main, &aux, &cfg.loss)
        },
        |step, s| {
            if recall_every(cfg, step) {
                let q = ground.encode_frozen(s, &first_rows(&views.ground, cfg.eval_subset)?, ENCODE_CHUNK)?;
                let r = aerial.encode_frozen(s, &first_rows(&views.aerial, cfg.eval_subset)?, ENCODE_CHUNK)?;
                let r1 = subset_recall(&q, &r)?;
                log::info!("joint step {}: train recall@1 {r1:.4}", step + 1);
                recall_log.push((step + 1, r1));
            }
            Ok(())
        },
    )?;
    Ok(StageOutput { checkpoint: Checkpoint::from_store(Stage::Joint, cfg.seed, text, &joint.store), log, recall_log })
}

fn run_fusion(cfg: &StageConfig, views: &ViewSet<f64>, warm: &Checkpoint) -> Result<StageOutput> {
    let src = ResolvedConfig::from_text(&warm.config_text)?;
    let joint = JointModel {
        store: warm.to_store(),
        ground: Encoder::describe(src.ground.clone(), GROUND_PREFIX)?,
        aerial: Encoder::describe(src.aerial.clone(), AERIAL_PREFIX)?,
    };
    let resolved = ResolvedConfig {
        config: StageConfig { batch_size: Some(cfg.batch()), encoder: src.config.encoder.clone(), with_edgemap: src.config.with_edgemap, ..cfg.clone() },
        ground: src.ground,
        aerial: src.aerial,
    };
    let text = resolved.to_text()?;
    let features = extract_fusion_features(&joint, views)?;
    let train_cfg = FusionTrainConfig { schedule: schedule(cfg), loss: cfg.loss, init_seed: cfg.seed };
    let (head, log) = train_fusion_on_features(&features, &train_cfg)?;
    let mut recall_log = Vec::new();
    if cfg.eval_every > 0 && !log.is_empty() {
        let n = cfg.eval_subset.min(views.len());
        let q = head.fuse_query_values(&first_rows(&features.ground, n)?, &first_rows(&features.synth, n)?)?;
        let r = head.project_reference_values(&first_rows(&features.aerial, n)?)?;
        let r1 = subset_recall(&q, &r)?;
        log::info!("fusion step {}: train recall@1 {r1:.4}", log.len());
        recall_log.push((log.len(), r1));
    }
    let mut store = joint.store;
    for (name, p) in head.store.iter() {
        store.insert(name, p.value.clone());
    }
    Ok(StageOutput { checkpoint: Checkpoint::from_store(Stage::Fusion, cfg.seed, text, &store), log, recall_log })
}

/// Runs the proxy over every row and writes `<id>_s.ppm` files into
/// `out_dir`. Returns the manifest with its synth column filled.
pub fn materialize_proxy(manifest: &Manifest, cfg: &ProxyConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let rows = manifest
        .rows
        .par_iter()
        .map(|r| {
            let synth = proxy_synthesize(&read_rgb(&r.ground)?, &read_rgb(&r.aerial)?, cfg)?;
            let path = out_dir.join(format!("{}_s.ppm", r.id));
            write_rgb(&path, &synth)?;
            let mut row = r.clone();
            row.synth = Some(path);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok(Manifest { split: manifest.split, rows })
}
