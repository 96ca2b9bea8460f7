use super::{LossConfig, ModelVariant, Reduction, StepOutput};
use crate::error::{Error, Result};
use crate::graphnet::Topology;
use crate::tensor::{Tape, Tensor, Var};

/// Ground truth for one prediction step, in the batched row order of the
/// model output.
#[derive(Clone, Debug)]
pub struct StepTargets {
    /// `[nodes, h * w]` binary masks.
    pub masks: Tensor,
    /// `[nodes, 6]`, for variants that predict poses.
    pub poses: Option<Tensor>,
    /// `[edges, 9]` pose edges or `[edges, eh * ew]` edge masks.
    pub edges: Option<Tensor>,
}

/// Per-row weights averaging rows within each graph, then over graphs and
/// steps. Rows of graphs without any rows of this kind get no weight.
fn row_weights(membership: &[usize], n_graphs: usize, steps: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_graphs];
    for &g in membership {
        counts[g] += 1;
    }
    membership
        .iter()
        .map(|&g| 1.0 / (steps * n_graphs * counts[g]) as f64)
        .collect()
}

/// Weighted sum of a per-row term; with [`Reduction::Sum`] the per-row mean
/// is turned back into a sum over the row's components.
fn reduce(
    tape: &mut Tape,
    rows: Var,
    weights: &[f64],
    row_len: usize,
    reduction: Reduction,
) -> Result<Var> {
    let k = match reduction {
        Reduction::Mean => 1.0,
        Reduction::Sum => row_len as f64,
    };
    let w: Vec<f64> = weights.iter().map(|w| w * k).collect();
    tape.weighted_sum(rows, &w)
}

fn need<'a>(t: &'a Option<Tensor>, what: &str) -> Result<&'a Tensor> {
    t.as_ref()
        .ok_or_else(|| Error::Schema(format!("missing {what} targets")))
}

/// Supervised multi-step loss: per step, the mean edge term plus the mean
/// node term (mask cross-entropy, plus squared pose error where poses are
/// predicted), averaged over steps and over the graphs of the batch. Edge
/// terms use squared error for pose edges and cross-entropy for mask edges.
pub fn loss_eq1(
    tape: &mut Tape,
    topo: &Topology,
    variant: ModelVariant,
    outputs: &[StepOutput],
    targets: &[StepTargets],
    config: &LossConfig,
) -> Result<Var> {
    if outputs.is_empty() || outputs.len() != targets.len() {
        return Err(Error::Schema(format!(
            "{} prediction steps but {} target steps",
            outputs.len(),
            targets.len()
        )));
    }
    let n = outputs.len();
    let node_w = row_weights(&topo.node_graph, topo.n_graphs, n);
    let edge_w = row_weights(&topo.edge_graph, topo.n_graphs, n);
    let mut terms = Vec::new();
    for (out, tgt) in outputs.iter().zip(targets) {
        let bce = tape.bce_rows(&tgt.masks, out.masks)?;
        terms.push(reduce(
            tape,
            bce,
            &node_w,
            tgt.masks.row_len(),
            config.reduction,
        )?);
        if variant.has_pose() {
            let pred = out
                .poses
                .ok_or_else(|| Error::Schema("model produced no poses".into()))?;
            let t = tape.constant(need(&tgt.poses, "pose")?.clone());
            let se = tape.sq_err_rows(pred, t)?;
            terms.push(reduce(tape, se, &node_w, 6, config.reduction)?);
        }
        if variant.is_gn() && topo.n_edges() > 0 {
            let pred = out
                .edges
                .ok_or_else(|| Error::Schema("model produced no edges".into()))?;
            let target = need(&tgt.edges, "edge")?;
            let rows = if variant.has_segm_edges() {
                tape.bce_rows(target, pred)?
            } else {
                let t = tape.constant(target.clone());
                tape.sq_err_rows(pred, t)?
            };
            terms.push(reduce(
                tape,
                rows,
                &edge_w,
                target.row_len(),
                config.reduction,
            )?);
        }
    }
    sum(tape, &terms)
}

/// Squared distance between predicted object latents and the latents of the
/// true future frames, averaged like the node term of [`loss_eq1`] and scaled
/// by `config.latent_weight`.
pub fn latent_loss(
    tape: &mut Tape,
    topo: &Topology,
    predicted: &[Var],
    targets: &[Tensor],
    config: &LossConfig,
) -> Result<Var> {
    if predicted.is_empty() || predicted.len() != targets.len() {
        return Err(Error::Schema(format!(
            "{} latent steps but {} targets",
            predicted.len(),
            targets.len()
        )));
    }
    let w: Vec<f64> = row_weights(&topo.node_graph, topo.n_graphs, predicted.len())
        .into_iter()
        .map(|w| w * config.latent_weight)
        .collect();
    let mut terms = Vec::with_capacity(predicted.len());
    for (&p, t) in predicted.iter().zip(targets) {
        let c = tape.constant(t.clone());
        let se = tape.sq_err_rows(p, c)?;
        terms.push(reduce(tape, se, &w, t.row_len(), config.reduction)?);
    }
    sum(tape, &terms)
}

fn sum(tape: &mut Tape, terms: &[Var]) -> Result<Var> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = tape.add(acc, t)?;
    }
    Ok(acc)
}
