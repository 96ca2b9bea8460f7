use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::pipeline::iou;
use crate::tensor::{Adam, AdamConfig, Ctx, ParamStore, Sequential, Tensor};

/// Settings of the autoencoder that provides latent targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AePretrainConfig {
    pub max_steps: usize,
    pub batch: usize,
    pub lr: f64,
    /// Training stops once the mean IoU over all samples reaches this.
    pub target_iou: f64,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for AePretrainConfig {
    fn default() -> Self {
        AePretrainConfig {
            max_steps: 2000,
            batch: 30,
            lr: 1e-3,
            target_iou: 0.95,
            eval_every: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AePretrainReport {
    pub steps: usize,
    pub best_iou: f64,
    pub reached_target: bool,
}

/// Frozen encoder of a pretrained autoencoder. Only encoding is exposed.
pub struct LatentTargetEncoder {
    encoder: Sequential,
    store: ParamStore,
    visual_shape: [usize; 3],
}

impl LatentTargetEncoder {
    /// Latents `[rows, latent]` of flattened object inputs `[rows, c * h * w]`.
    pub fn encode(&self, visual: &Tensor) -> Result<Tensor> {
        let [c, h, w] = self.visual_shape;
        if visual.rank() != 2 || visual.row_len() != c * h * w {
            return Err(Error::shape(
                "latent targets",
                visual.shape(),
                &[visual.rows(), c * h * w],
            ));
        }
        let mut ctx = Ctx::frozen(&self.store);
        let x = ctx
            .tape
            .constant(visual.clone().reshape(&[visual.rows(), c, h, w])?);
        let z = self.encoder.forward(&mut ctx, x)?;
        Ok(ctx.tape.value(z).clone())
    }

    pub fn latent_width(&self) -> usize {
        self.encoder.out_width()
    }

    /// Encoder parameters, named like a predictor's node encoder.
    pub(crate) fn params(&self) -> &ParamStore {
        &self.store
    }
}

struct Autoencoder {
    encoder: Sequential,
    decoder: Sequential,
}

impl Autoencoder {
    fn masks(&self, ctx: &mut Ctx, x: &Tensor, shape: [usize; 3]) -> Result<crate::tensor::Var> {
        let [c, h, w] = shape;
        let rows = x.rows();
        let xv = ctx.tape.constant(x.clone().reshape(&[rows, c, h, w])?);
        let z = self.encoder.forward(ctx, xv)?;
        let y = self.decoder.forward(ctx, z)?;
        let flat = ctx.tape.reshape(y, &[rows, h * w])?;
        Ok(ctx.tape.sigmoid(flat))
    }

    fn mean_iou(
        &self,
        store: &ParamStore,
        samples: &Tensor,
        targets: &Tensor,
        shape: [usize; 3],
    ) -> Result<f64> {
        let mut total = 0.0;
        let all: Vec<usize> = (0..samples.rows()).collect();
        for chunk in all.chunks(64) {
            let mut ctx = Ctx::frozen(store);
            let m = self.masks(&mut ctx, &samples.select_rows(chunk), shape)?;
            let pred = ctx.tape.value(m);
            for (k, &r) in chunk.iter().enumerate() {
                total += iou(pred.row(k), targets.row(r));
            }
        }
        Ok(total / samples.rows() as f64)
    }
}

/// Trains an autoencoder (node encoder, then the node decoder applied to the
/// latent alone) to reproduce the object masks of `samples`
/// (`[rows, c * h * w]`) until the mean IoU reaches the target or the step
/// budget is spent. Returns the encoder of the best evaluated parameters.
pub fn pretrain_memorization_ae(
    model: &ModelConfig,
    samples: &Tensor,
    cfg: &AePretrainConfig,
) -> Result<(LatentTargetEncoder, AePretrainReport)> {
    let shape = model.visual_shape();
    let [c, h, w] = shape;
    let px = h * w;
    if samples.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if samples.rank() != 2 || samples.row_len() != c * px {
        return Err(Error::shape(
            "autoencoder samples",
            samples.shape(),
            &[samples.rows(), c * px],
        ));
    }
    if cfg.batch < 2 || cfg.eval_every == 0 {
        return Err(Error::Config(
            "autoencoder batch must be at least 2 and eval_every positive".into(),
        ));
    }
    let mc = model.variant.mask_channel() * px;
    let targets = Tensor::from_rows(
        &(0..samples.rows())
            .map(|r| samples.row(r)[mc..mc + px].to_vec())
            .collect::<Vec<_>>(),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut store = ParamStore::new();
    let latent = model.latent_width()?;
    let ae = Autoencoder {
        encoder: Sequential::build(
            &mut store,
            "node_encoder",
            &model.nets.node_encoder,
            &shape,
            &mut rng,
        )?,
        decoder: Sequential::build(
            &mut store,
            "node_decoder",
            &model.nets.node_decoder,
            &[latent],
            &mut rng,
        )?,
    };
    let mut adam = Adam::new(
        &store,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut order: Vec<usize> = (0..samples.rows()).collect();
    let mut cursor = order.len();
    let mut best = (f64::NEG_INFINITY, store.clone());
    let mut steps = 0;
    while steps < cfg.max_steps {
        if cursor + cfg.batch > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = &order[cursor..(cursor + cfg.batch).min(order.len())];
        cursor += cfg.batch;
        if idx.len() < 2 {
            continue;
        }
        let grads = {
            let mut ctx = Ctx::train(&mut store);
            let m = ae.masks(&mut ctx, &samples.select_rows(idx), shape)?;
            let loss = ctx.tape.bce_loss(&targets.select_rows(idx), m)?;
            let l = ctx.tape.value(loss).item();
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss {
                    loss: l,
                    stage: 0,
                    epoch: 0,
                    step: steps,
                });
            }
            ctx.backward(loss)?
        };
        adam.update(&mut store, &grads)?;
        steps += 1;
        if steps % cfg.eval_every == 0 || steps == cfg.max_steps {
            let score = ae.mean_iou(&store, samples, &targets, shape)?;
            log::debug!("autoencoder step {steps}: mean IoU {score:.4}");
            if score > best.0 {
                best = (score, store.clone());
            }
            if score >= cfg.target_iou {
                break;
            }
        }
    }
    if best.0 == f64::NEG_INFINITY {
        best = (ae.mean_iou(&store, samples, &targets, shape)?, store);
    }
    let reached_target = best.0 >= cfg.target_iou;
    if !reached_target {
        log::warn!(
            "autoencoder reached mean IoU {:.3} < {:.3} after {steps} steps; using the best parameters",
            best.0,
            cfg.target_iou
        );
    }
    let mut enc_store = ParamStore::new();
    let encoder = Sequential::build(
        &mut enc_store,
        "node_encoder",
        &model.nets.node_encoder,
        &shape,
        &mut rng,
    )?;
    enc_store.copy_matching(&best.1);
    Ok((
        LatentTargetEncoder {
            encoder,
            store: enc_store,
            visual_shape: shape,
        },
        AePretrainReport {
            steps,
            best_iou: best.0,
            reached_target,
        },
    ))
}
