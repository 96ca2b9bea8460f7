use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graphs::{control_steps, step_graph};
use super::metrics::iou;
use crate::error::{Error, Result};
use crate::models::{Checkpoint, Predictor};
use crate::par;
use crate::sim::{Dataset, Episode};
use crate::tensor::Tensor;

impl Predictor {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        Predictor::with_params(ck.config.clone(), &ck.params)
    }
}

/// Anything that predicts future object masks of an episode.
pub trait MaskPredictor: Sync {
    fn name(&self) -> String;

    /// For every start step `t`, masks `[objects, h * w]` of steps
    /// `t + 1 ..= t + n`.
    fn predict(&self, ep: &Episode, starts: &[usize], n: usize) -> Result<Vec<Vec<Tensor>>>;
}

fn check_horizon(ep: &Episode, starts: &[usize], n: usize) -> Result<()> {
    for &t in starts {
        if n == 0 || t + n >= ep.len() {
            return Err(Error::Horizon {
                start: t,
                horizon: n,
                len: ep.len(),
            });
        }
    }
    Ok(())
}

/// A trained model with a fixed loop-back mode.
pub struct ModelRollout<'a> {
    pub predictor: &'a Predictor,
    pub reencode: bool,
}

impl<'a> ModelRollout<'a> {
    /// Uses the variant's default loop-back mode.
    pub fn new(predictor: &'a Predictor) -> Self {
        ModelRollout {
            predictor,
            reencode: predictor.model.variant().reencodes_by_default(),
        }
    }
}

/// Start steps evaluated per forward pass.
const STARTS_PER_PASS: usize = 16;

impl MaskPredictor for ModelRollout<'_> {
    fn name(&self) -> String {
        self.predictor.model.variant().to_string()
    }

    fn predict(&self, ep: &Episode, starts: &[usize], n: usize) -> Result<Vec<Vec<Tensor>>> {
        check_horizon(ep, starts, n)?;
        let cfg = &self.predictor.model.config;
        let mut out = Vec::with_capacity(starts.len());
        for chunk in starts.chunks(STARTS_PER_PASS) {
            let graphs = chunk
                .iter()
                .map(|&t| step_graph(ep, t, cfg))
                .collect::<Result<Vec<_>>>()?;
            let samples: Vec<(&Episode, usize)> = chunk.iter().map(|&t| (ep, t)).collect();
            let steps = self.predictor.predict_masks(
                &graphs,
                &control_steps(&samples, n),
                self.reencode,
            )?;
            for (k, _) in chunk.iter().enumerate() {
                let rows: Vec<usize> = (k * ep.n..(k + 1) * ep.n).collect();
                out.push(steps.iter().map(|s| s.select_rows(&rows)).collect());
            }
        }
        Ok(out)
    }
}

/// Predicted masks of steps `start + 1 ..= start + n`.
pub fn rollout(
    predictor: &Predictor,
    ep: &Episode,
    start: usize,
    n: usize,
    reencode: bool,
) -> Result<Vec<Tensor>> {
    let r = ModelRollout {
        predictor,
        reencode,
    };
    Ok(r.predict(ep, &[start], n)?.remove(0))
}

fn recorded_masks(ep: &Episode, t: usize) -> Tensor {
    let data = (0..ep.n)
        .flat_map(|i| ep.mask(t, i).iter().map(|&m| f64::from(m)))
        .collect();
    Tensor::new(vec![ep.n, ep.w * ep.h], data).expect("sized by construction")
}

/// Echoes the recorded future masks.
pub struct OracleEcho;

impl MaskPredictor for OracleEcho {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn predict(&self, ep: &Episode, starts: &[usize], n: usize) -> Result<Vec<Vec<Tensor>>> {
        check_horizon(ep, starts, n)?;
        Ok(starts
            .iter()
            .map(|&t| (1..=n).map(|k| recorded_masks(ep, t + k)).collect())
            .collect())
    }
}

/// Predicts empty masks everywhere.
pub struct ZeroMasks;

impl MaskPredictor for ZeroMasks {
    fn name(&self) -> String {
        "zero".into()
    }

    fn predict(&self, ep: &Episode, starts: &[usize], n: usize) -> Result<Vec<Vec<Tensor>>> {
        check_horizon(ep, starts, n)?;
        Ok(starts
            .iter()
            .map(|_| vec![Tensor::zeros(&[ep.n, ep.w * ep.h]); n])
            .collect())
    }
}

/// Which start steps of an episode are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Every start step with `n` future frames.
    Sliding,
    /// Only the first step of each episode.
    FirstStep,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sliding" => Ok(EvalMode::Sliding),
            "first_step" | "first-step" => Ok(EvalMode::FirstStep),
            _ => Err(Error::Config(format!(
                "unknown evaluation mode `{s}` (expected sliding or first_step)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub key: usize,
    pub mean_iou: f64,
    pub n_items: usize,
}

/// One scored (episode, start, step, object) prediction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub episode: usize,
    pub start: usize,
    pub step: usize,
    pub object: usize,
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub variant: String,
    pub horizon: usize,
    pub mode: EvalMode,
    pub seed: u64,
    /// Mean over every (episode, start, step, object) item.
    pub mean_iou: f64,
    pub n_items: usize,
    /// By prediction step `1..=horizon`.
    pub per_step: Vec<Breakdown>,
    /// By number of objects in the episode.
    pub per_object_count: Vec<Breakdown>,
    #[serde(skip)]
    pub items: Vec<EvalItem>,
}

fn breakdown(items: &[EvalItem], key: impl Fn(&EvalItem) -> usize) -> Vec<Breakdown> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for it in items {
        let e = acc.entry(key(it)).or_default();
        e.0 += it.iou;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(key, (s, n))| Breakdown {
            key,
            mean_iou: s / n as f64,
            n_items: n,
        })
        .collect()
}

/// Rolls `model` out `n` steps from the start steps selected by `mode` in
/// every episode, rounds the predictions and averages the IoU over all
/// (episode, start, step, object) items. Episodes too short for `n` steps
/// are skipped.
pub fn evaluate(
    model: &dyn MaskPredictor,
    data: &Dataset,
    n: usize,
    mode: EvalMode,
) -> Result<EvalReport> {
    if data.episodes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if n == 0 {
        return Err(Error::Config(
            "evaluation horizon must be at least 1".into(),
        ));
    }
    let per_episode = par::try_map(data.episodes.len(), |e| -> Result<Vec<EvalItem>> {
        let ep = &data.episodes[e];
        let starts: Vec<usize> = match mode {
            EvalMode::Sliding => (0..ep.len().saturating_sub(n)).collect(),
            EvalMode::FirstStep if ep.len() > n => vec![0],
            EvalMode::FirstStep => vec![],
        };
        if starts.is_empty() {
            return Ok(vec![]);
        }
        let preds = model.predict(ep, &starts, n)?;
        let mut items = Vec::with_capacity(starts.len() * n * ep.n);
        for (&t, steps) in starts.iter().zip(&preds) {
            for (k, masks) in steps.iter().enumerate() {
                if masks.shape() != [ep.n, ep.w * ep.h] {
                    return Err(Error::shape(
                        "predicted masks",
                        masks.shape(),
                        &[ep.n, ep.w * ep.h],
                    ));
                }
                for i in 0..ep.n {
                    let target: Vec<f64> = ep
                        .mask(t + k + 1, i)
                        .iter()
                        .map(|&m| f64::from(m))
                        .collect();
                    items.push(EvalItem {
                        episode: e,
                        start: t,
                        step: k + 1,
                        object: i,
                        iou: iou(masks.row(i), &target),
                    });
                }
            }
        }
        Ok(items)
    })?;
    let items: Vec<EvalItem> = per_episode.into_iter().flatten().collect();
    if items.is_empty() {
        return Err(Error::Schema(format!(
            "no episode of {} is longer than {n} steps",
            data.name
        )));
    }
    let mean_iou = items.iter().map(|i| i.iou).sum::<f64>() / items.len() as f64;
    let counts: Vec<usize> = data.episodes.iter().map(|e| e.n).collect();
    Ok(EvalReport {
        dataset: data.name.clone(),
        variant: model.name(),
        horizon: n,
        mode,
        seed: 0,
        mean_iou,
        n_items: items.len(),
        per_step: breakdown(&items, |i| i.step),
        per_object_count: breakdown(&items, |i| counts[i.episode]),
        items,
    })
}

pub const CSV_HEADER: &str = "dataset,variant,horizon,mean_iou,n_items,seed";

/// One line of the comma-separated report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub variant: String,
    pub horizon: usize,
    pub mean_iou: f64,
    pub n_items: usize,
    pub seed: u64,
}

impl From<&EvalReport> for ReportRow {
    fn from(r: &EvalReport) -> Self {
        ReportRow {
            dataset: r.dataset.clone(),
            variant: r.variant.clone(),
            horizon: r.horizon,
            mean_iou: r.mean_iou,
            n_items: r.n_items,
            seed: r.seed,
        }
    }
}

fn csv_field(s: &str) -> Result<&str> {
    if s.contains([',', '\n', '"']) {
        return Err(Error::Config(format!(
            "report field `{s}` contains a separator"
        )));
    }
    Ok(s)
}

pub fn to_csv(rows: &[ReportRow]) -> Result<String> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6},{},{}",
            csv_field(&r.dataset)?,
            csv_field(&r.variant)?,
            r.horizon,
            r.mean_iou,
            r.n_items,
            r.seed
        )
        .expect("writing to a string");
    }
    Ok(out)
}

pub fn parse_csv(text: &str, path: &Path) -> Result<Vec<ReportRow>> {
    let err = |line: usize, msg: String| Error::Format {
        what: "report",
        path: path.to_path_buf(),
        msg: format!("line {line}: {msg}"),
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        Some((i, h)) => {
            return Err(err(
                i + 1,
                format!("expected header `{CSV_HEADER}`, found `{h}`"),
            ))
        }
        None => return Err(err(1, "empty report".into())),
    }
    lines
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            if f.len() != 6 {
                return Err(err(i + 1, format!("expected 6 fields, found {}", f.len())));
            }
            let num = |k: usize| err(i + 1, format!("bad number `{}`", f[k]));
            let mean_iou: f64 = f[3].parse().map_err(|_| num(3))?;
            if !(0.0..=1.0).contains(&mean_iou) {
                return Err(err(i + 1, format!("mean IoU {mean_iou} outside [0, 1]")));
            }
            Ok(ReportRow {
                dataset: f[0].to_string(),
                variant: f[1].to_string(),
                horizon: f[2].parse().map_err(|_| num(2))?,
                mean_iou,
                n_items: f[4].parse().map_err(|_| num(4))?,
                seed: f[5].parse().map_err(|_| num(5))?,
            })
        })
        .collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

/// Fixed-width text table of report rows.
pub fn format_table(rows: &[ReportRow]) -> String {
    let dw = rows
        .iter()
        .map(|r| r.dataset.len())
        .chain([7])
        .max()
        .unwrap_or(7);
    let vw = rows
        .iter()
        .map(|r| r.variant.len())
        .chain([7])
        .max()
        .unwrap_or(7);
    let mut out = format!(
        "{:<dw$}  {:<vw$}  {:>7}  {:>8}  {:>8}  {:>6}\n",
        "dataset", "variant", "horizon", "mean_iou", "n_items", "seed"
    );
    for r in rows {
        writeln!(
            out,
            "{:<dw$}  {:<vw$}  {:>7}  {:>8.4}  {:>8}  {:>6}",
            r.dataset, r.variant, r.horizon, r.mean_iou, r.n_items, r.seed
        )
        .expect("writing to a string");
    }
    out
}

impl EvalReport {
    /// Text table with the per-step and per-object-count breakdowns.
    pub fn detailed_table(&self) -> String {
        let mut out = format_table(&[ReportRow::from(self)]);
        for (title, rows) in [
            ("step", &self.per_step),
            ("objects", &self.per_object_count),
        ] {
            for b in rows {
                writeln!(
                    out,
                    "  {title} {:>3}: {:.4} ({} items)",
                    b.key, b.mean_iou, b.n_items
                )
                .expect("writing to a string");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            ReportRow {
                dataset: "test3".into(),
                variant: "ap".into(),
                horizon: 1,
                mean_iou: 0.875,
                n_items: 120,
                seed: 3,
            },
            ReportRow {
                dataset: "test5_5novel".into(),
                variant: "baseline".into(),
                horizon: 5,
                mean_iou: 0.5,
                n_items: 7,
                seed: 0,
            },
        ];
        let text = to_csv(&rows).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(parse_csv(&text, Path::new("r.csv")).unwrap(), rows);
        let table = format_table(&rows);
        assert_eq!(table.lines().count(), 3);
        assert!(table.contains("0.8750"));
    }

    #[test]
    fn malformed_reports() {
        let p = Path::new("r.csv");
        assert!(parse_csv("", p).is_err());
        assert!(parse_csv("a,b\n", p).is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\nx,y,1,nan?,2,3\n"), p).is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\nx,y,1,1.5,2,3\n"), p).is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\nx,y,1,0.5,2\n"), p).is_err());
        assert_eq!(parse_csv(&format!("{CSV_HEADER}\n"), p).unwrap(), vec![]);
    }
}
