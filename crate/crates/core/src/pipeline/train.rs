use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graphs::{control_steps, step_graph, step_targets, visual_rows};
use crate::error::{Error, Result};
use crate::models::{
    latent_loss, loss_eq1, pretrain_memorization_ae, AePretrainConfig, AePretrainReport,
    Checkpoint, LatentTargetEncoder, LossConfig, ModelConfig, ModelVariant, Predictor, Preset,
    Reduction,
};
use crate::sim::{Dataset, Episode};
use crate::tensor::{Adam, AdamConfig, Ctx, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub variant: ModelVariant,
    /// Prediction horizon of the final stage.
    pub horizon: usize,
    /// Epochs over all stages.
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    /// Train 1-step, 2-step, ... up to `horizon` in consecutive stages.
    pub curriculum: bool,
    /// Weight of the latent loss (auto-predictor variants).
    pub latent_weight: f64,
    pub reduction: Reduction,
    pub seed: u64,
    pub preset: Preset,
    /// Optional cap on optimizer steps over all stages, split like epochs.
    pub max_steps: Option<usize>,
    /// Multi-step loop-back mode; `None` uses the variant default.
    pub reencode: Option<bool>,
    /// Autoencoder that provides latent targets.
    pub ae: AePretrainConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: ModelVariant::Ap,
            horizon: 1,
            epochs: 13,
            lr: 1e-3,
            batch: 30,
            curriculum: true,
            latent_weight: 1.0,
            reduction: Reduction::Mean,
            seed: 0,
            preset: Preset::Desk,
            max_steps: None,
            reencode: None,
            ae: AePretrainConfig::default(),
        }
    }
}

/// Splits `total` into `parts` near-equal shares, the remainder going to the
/// earliest shares.
pub fn split_evenly(total: usize, parts: usize) -> Vec<usize> {
    let (base, rem) = (total / parts, total % parts);
    (0..parts).map(|i| base + usize::from(i < rem)).collect()
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.curriculum && self.epochs < self.horizon {
            return bad(format!(
                "{} epochs cannot cover {} curriculum stages",
                self.epochs, self.horizon
            ));
        }
        if self.batch < 2 {
            return bad(format!(
                "batch size {} is below 2 (batch norm needs two samples)",
                self.batch
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if !(self.latent_weight >= 0.0 && self.latent_weight.is_finite()) {
            return bad(format!(
                "latent weight {} must be non-negative",
                self.latent_weight
            ));
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be positive".into());
        }
        Ok(())
    }

    /// Horizon of every stage.
    pub fn stage_horizons(&self) -> Vec<usize> {
        if self.curriculum {
            (1..=self.horizon).collect()
        } else {
            vec![self.horizon]
        }
    }

    /// Epochs of every stage.
    pub fn stage_epochs(&self) -> Vec<usize> {
        split_evenly(self.epochs, self.stage_horizons().len())
    }

    pub fn model_config(&self, width: usize, height: usize) -> Result<ModelConfig> {
        let mut m = ModelConfig::from_preset(self.preset, self.variant, width, height)?;
        m.loss = LossConfig {
            reduction: self.reduction,
            latent_weight: self.latent_weight,
        };
        Ok(m)
    }

    pub fn reencode(&self) -> bool {
        self.reencode.unwrap_or(self.variant.reencodes_by_default())
    }

    fn uses_latent_loss(&self) -> bool {
        self.variant.is_ap() && self.latent_weight > 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub stage: usize,
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub checkpoint: Checkpoint,
    pub epochs: Vec<EpochLog>,
    pub steps: usize,
    pub ae: Option<AePretrainReport>,
    /// Completed stages loaded from an earlier run.
    pub resumed_stages: u32,
    pub checkpoints: Vec<PathBuf>,
}

pub fn stage_checkpoint_path(dir: &Path, stage: usize) -> PathBuf {
    dir.join(format!("stage{stage}.odck"))
}

/// Start steps with `horizon` future frames, as `(episode, t)`.
fn samples(episodes: &[Episode], horizon: usize) -> Vec<(usize, usize)> {
    episodes
        .iter()
        .enumerate()
        .flat_map(|(e, ep)| (0..ep.len().saturating_sub(horizon)).map(move |t| (e, t)))
        .collect()
}

/// Shuffled batches whose samples all have the same object count. Batches
/// of a single sample are dropped: batch norm in the per-graph encoders needs
/// two rows.
fn batches(
    episodes: &[Episode],
    all: &[(usize, usize)],
    size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<(usize, usize)>> {
    let mut groups: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for &s in all {
        groups.entry(episodes[s.0].n).or_default().push(s);
    }
    let mut out = Vec::new();
    for mut g in groups.into_values() {
        g.shuffle(rng);
        out.extend(g.chunks(size).filter(|c| c.len() >= 2).map(<[_]>::to_vec));
    }
    out.shuffle(rng);
    out
}

/// Latest stage checkpoint in `dir` that belongs to `model`.
fn find_resume(dir: &Path, model: &ModelConfig, stages: usize) -> Result<Option<Checkpoint>> {
    for k in (1..=stages).rev() {
        let p = stage_checkpoint_path(dir, k);
        if p.exists() {
            let ck = Checkpoint::load(&p)?;
            if ck.config != *model {
                return Err(Error::Config(format!(
                    "{} was written for a different model configuration",
                    p.display()
                )));
            }
            return Ok(Some(ck));
        }
    }
    Ok(None)
}

fn check_dataset(data: &Dataset, model: &ModelConfig) -> Result<()> {
    if data.episodes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (i, ep) in data.episodes.iter().enumerate() {
        if (ep.w, ep.h) != (model.width, model.height) {
            return Err(Error::Schema(format!(
                "episode {i} of {} has {}x{} frames, expected {}x{}",
                data.name, ep.w, ep.h, model.width, model.height
            )));
        }
    }
    Ok(())
}

/// Trains `cfg.variant` on `data`. With `out`, a checkpoint is written after
/// every stage; with `resume`, training continues after the latest stage
/// checkpoint found there.
pub fn train(
    cfg: &TrainConfig,
    data: &Dataset,
    out: Option<&Path>,
    resume: bool,
) -> Result<TrainReport> {
    cfg.validate()?;
    let first = data.episodes.first().ok_or(Error::EmptyDataset)?;
    let model_cfg = cfg.model_config(first.w, first.h)?;
    check_dataset(data, &model_cfg)?;
    let episodes = &data.episodes;
    let horizons = cfg.stage_horizons();
    let stage_epochs = cfg.stage_epochs();
    let stage_steps = cfg.max_steps.map(|m| split_evenly(m, horizons.len()));
    let n_stages = horizons.len();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut predictor = Predictor::new(model_cfg.clone(), cfg.seed)?;
    let mut adam = Adam::new(
        &predictor.store,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut done = 0u32;
    if let (Some(dir), true) = (out, resume) {
        if let Some(ck) = find_resume(dir, &model_cfg, n_stages)? {
            log::info!("resuming after stage {}/{n_stages}", ck.stage);
            predictor = Predictor::with_params(model_cfg.clone(), &ck.params)?;
            adam = ck.adam;
            adam.config.lr = cfg.lr;
            done = ck.stage;
        }
    }

    let mut ae_report = None;
    let targets: Option<LatentTargetEncoder> =
        if cfg.uses_latent_loss() && (done as usize) < n_stages {
            let all: Vec<(&Episode, usize)> = episodes
                .iter()
                .flat_map(|ep| (0..ep.len()).map(move |t| (ep, t)))
                .collect();
            let rows = visual_rows(&all, &model_cfg);
            let ae_cfg = AePretrainConfig {
                seed: cfg.ae.seed ^ cfg.seed,
                ..cfg.ae.clone()
            };
            let (enc, report) = pretrain_memorization_ae(&model_cfg, &rows, &ae_cfg)?;
            log::info!(
                "latent-target autoencoder: mean IoU {:.3} after {} steps",
                report.best_iou,
                report.steps
            );
            if done == 0 {
                // start in the latent space the targets live in
                predictor.store.copy_matching(enc.params());
            }
            ae_report = Some(report);
            Some(enc)
        } else {
            None
        };

    let reencode = cfg.reencode();
    let mut logs = Vec::new();
    let mut written = Vec::new();
    let mut total_steps = 0usize;
    let mut checkpoint = None;
    for (si, (&horizon, &epochs)) in horizons.iter().zip(&stage_epochs).enumerate() {
        let stage = si + 1;
        if stage <= done as usize {
            continue;
        }
        log::info!("stage {stage}/{n_stages}: {horizon}-step prediction, {epochs} epochs");
        let all = samples(episodes, horizon);
        if all.is_empty() {
            return Err(Error::Schema(format!(
                "no episode of {} has more than {horizon} steps",
                data.name
            )));
        }
        let budget = stage_steps.as_ref().map(|s| s[si]);
        let mut stage_steps_done = 0usize;
        'epochs: for epoch in 1..=epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(((stage as u64) << 32) | epoch as u64);
            let (mut sum, mut count) = (0.0, 0usize);
            for batch in batches(episodes, &all, cfg.batch, &mut rng) {
                if budget.is_some_and(|b| stage_steps_done >= b) {
                    if count > 0 {
                        logs.push(epoch_log(stage, n_stages, epoch, count, sum));
                    }
                    break 'epochs;
                }
                let loss = train_step(
                    &mut predictor,
                    &mut adam,
                    episodes,
                    &batch,
                    horizon,
                    reencode,
                    targets.as_ref(),
                )
                .map_err(|e| diagnose(e, stage, epoch, stage_steps_done, &batch))?;
                sum += loss;
                count += 1;
                stage_steps_done += 1;
                total_steps += 1;
            }
            logs.push(epoch_log(stage, n_stages, epoch, count, sum));
        }
        // continue from exactly what a resumed run would load
        let ck = Checkpoint {
            config: model_cfg.clone(),
            stage: stage as u32,
            params: predictor.store.clone(),
            adam: adam.clone(),
        }
        .rounded();
        predictor.store = ck.params.clone();
        adam = ck.adam.clone();
        adam.config.lr = cfg.lr;
        if let Some(dir) = out {
            let p = stage_checkpoint_path(dir, stage);
            ck.save(&p)?;
            written.push(p);
        }
        checkpoint = Some(ck);
    }
    let checkpoint = match checkpoint {
        Some(c) => c,
        None => Checkpoint {
            config: model_cfg,
            stage: done,
            params: predictor.store,
            adam,
        },
    };
    Ok(TrainReport {
        checkpoint,
        epochs: logs,
        steps: total_steps,
        ae: ae_report,
        resumed_stages: done,
        checkpoints: written,
    })
}

fn epoch_log(stage: usize, n_stages: usize, epoch: usize, steps: usize, sum: f64) -> EpochLog {
    let mean_loss = if steps == 0 {
        f64::NAN
    } else {
        sum / steps as f64
    };
    log::info!("stage {stage}/{n_stages} epoch {epoch}: loss {mean_loss:.6} over {steps} steps");
    EpochLog {
        stage,
        epoch,
        steps,
        mean_loss,
    }
}

fn diagnose(e: Error, stage: usize, epoch: usize, step: usize, batch: &[(usize, usize)]) -> Error {
    match e {
        Error::NonFiniteLoss { loss, .. } => {
            log::error!("non-finite loss {loss} at stage {stage}, epoch {epoch}, step {step}; batch (episode, t): {batch:?}");
            Error::NonFiniteLoss {
                loss,
                stage,
                epoch,
                step,
            }
        }
        Error::NonFiniteGradient(name) => {
            log::error!("non-finite gradient for `{name}` at stage {stage}, epoch {epoch}, step {step}; batch (episode, t): {batch:?}");
            Error::NonFiniteGradient(name)
        }
        other => other,
    }
}

/// One optimizer step on a batch; returns the loss.
fn train_step(
    p: &mut Predictor,
    adam: &mut Adam,
    episodes: &[Episode],
    batch: &[(usize, usize)],
    horizon: usize,
    reencode: bool,
    latent: Option<&LatentTargetEncoder>,
) -> Result<f64> {
    let Predictor { model, store } = p;
    let cfg = &model.config;
    let at = |k: usize| -> Vec<(&Episode, usize)> {
        batch.iter().map(|&(e, t)| (&episodes[e], t + k)).collect()
    };
    let graphs = at(0)
        .iter()
        .map(|&(ep, t)| step_graph(ep, t, cfg))
        .collect::<Result<Vec<_>>>()?;
    let controls = control_steps(&at(0), horizon);
    let targets: Vec<_> = (1..=horizon).map(|k| step_targets(&at(k), cfg)).collect();
    let latent_targets: Option<Vec<Tensor>> = match latent {
        Some(enc) => Some(
            (1..=horizon)
                .map(|k| enc.encode(&visual_rows(&at(k), cfg)))
                .collect::<Result<_>>()?,
        ),
        None => None,
    };
    let grads = {
        let mut ctx = Ctx::train(store);
        let (topo, outputs) = model.forward(&mut ctx, &graphs, &controls, reencode)?;
        let mut loss = loss_eq1(
            &mut ctx.tape,
            &topo,
            cfg.variant,
            &outputs,
            &targets,
            &cfg.loss,
        )?;
        if let Some(lt) = &latent_targets {
            let preds: Vec<_> = outputs
                .iter()
                .map(|o| o.latent.expect("auto-predictor latents"))
                .collect();
            let l = latent_loss(&mut ctx.tape, &topo, &preds, lt, &cfg.loss)?;
            loss = ctx.tape.add(loss, l)?;
        }
        let value = ctx.tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                loss: value,
                stage: 0,
                epoch: 0,
                step: 0,
            });
        }
        (ctx.backward(loss)?, value)
    };
    adam.update(store, &grads.0)?;
    Ok(grads.1)
}
