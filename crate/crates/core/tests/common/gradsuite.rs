//! Finite-difference gradient checks for every layer kind.

use objdyn::tensor::gradcheck::{check, project};
use objdyn::tensor::{ConvGeom, Tape, Tensor, Var};
use objdyn::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-3;
pub const TOL: f64 = 1e-4;
pub const CASES: usize = 20;

/// Values bounded away from zero so ReLU kinks stay outside `x ± h`.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.05..1.5);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Distinct values with gaps of at least 0.01 so max-pool argmaxes are stable.
fn distinct(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
    v.shuffle(rng);
    Tensor::new(shape.to_vec(), v).unwrap()
}

type Case = (Vec<Tensor>, Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>);

fn case(kind: &str, rng: &mut ChaCha8Rng, i: usize) -> Case {
    match kind {
        "dense" => {
            let (b, fin, fout) = if i == 0 {
                (4, 8, 16)
            } else {
                (
                    rng.gen_range(1..5),
                    rng.gen_range(1..7),
                    rng.gen_range(1..7),
                )
            };
            let x = Tensor::randn(&[b, fin], 1.0, rng);
            let w = Tensor::randn(&[fin, fout], 0.5, rng);
            let bias = Tensor::randn(&[fout], 0.5, rng);
            (
                vec![x, w, bias],
                Box::new(|t, v| {
                    let y = t.dense(v[0], v[1], v[2])?;
                    project(t, y)
                }),
            )
        }
        "conv" => {
            let (b, c, h, w) = if i == 0 {
                (2, 3, 8, 8)
            } else {
                (
                    rng.gen_range(1..3),
                    rng.gen_range(1..3),
                    rng.gen_range(4..8),
                    rng.gen_range(4..8),
                )
            };
            let (o, k, s, p) = if i == 0 {
                (4, 3, 2, 1)
            } else {
                (
                    rng.gen_range(1..4),
                    rng.gen_range(1..4),
                    rng.gen_range(1..3),
                    rng.gen_range(0..2),
                )
            };
            let kw = if i % 3 == 1 { (k % 3) + 1 } else { k };
            let geom = ConvGeom {
                kh: k,
                kw,
                sh: s,
                sw: rng.gen_range(1..3),
                ph: p,
                pw: p,
            };
            let x = Tensor::randn(&[b, c, h, w], 1.0, rng);
            let wt = Tensor::randn(&[o, c, k, kw], 0.5, rng);
            (
                vec![x, wt],
                Box::new(move |t, v| {
                    let y = t.conv2d(v[0], v[1], geom)?;
                    project(t, y)
                }),
            )
        }
        "transpconv" => {
            let (b, c, h, w) = (
                rng.gen_range(1..3),
                rng.gen_range(1..3),
                rng.gen_range(1..5),
                rng.gen_range(1..5),
            );
            // every case past the first cycles through anisotropic strides
            let geom = if i == 0 {
                ConvGeom {
                    kh: 4,
                    kw: 4,
                    sh: 2,
                    sw: 1,
                    ph: 0,
                    pw: 0,
                }
            } else {
                let k = rng.gen_range(1..4);
                ConvGeom {
                    kh: k + 1,
                    kw: k,
                    sh: rng.gen_range(1..3),
                    sw: rng.gen_range(1..3),
                    ph: 0,
                    pw: 0,
                }
            };
            let o = rng.gen_range(1..4);
            let x = Tensor::randn(&[b, c, h, w], 1.0, rng);
            let wt = Tensor::randn(&[c, o, geom.kh, geom.kw], 0.5, rng);
            (
                vec![x, wt],
                Box::new(move |t, v| {
                    let y = t.transp_conv2d(v[0], v[1], geom)?;
                    project(t, y)
                }),
            )
        }
        "maxpool" => {
            let shape = [
                rng.gen_range(1..3),
                rng.gen_range(1..3),
                rng.gen_range(2..7),
                rng.gen_range(2..7),
            ];
            let x = distinct(&shape, rng);
            (
                vec![x],
                Box::new(|t, v| {
                    let y = t.maxpool2(v[0])?;
                    project(t, y)
                }),
            )
        }
        "batchnorm" => {
            let conv = i % 2 == 1;
            let b = rng.gen_range(2..5);
            let f = rng.gen_range(1..4);
            let shape = if conv { vec![b, f, 3, 2] } else { vec![b, f] };
            let x = Tensor::randn(&shape, 1.0, rng);
            let gamma = Tensor::uniform(&[f], 0.5, 1.5, rng);
            let beta = Tensor::randn(&[f], 0.5, rng);
            (
                vec![x, gamma, beta],
                Box::new(|t, v| {
                    let (y, _, _) = t.batch_norm_train(v[0], v[1], v[2])?;
                    project(t, y)
                }),
            )
        }
        "batchnorm_eval" => {
            let f = rng.gen_range(1..4);
            let x = Tensor::randn(&[3, f, 2, 2], 1.0, rng);
            let gamma = Tensor::uniform(&[f], 0.5, 1.5, rng);
            let beta = Tensor::randn(&[f], 0.5, rng);
            let mean: Vec<f64> = (0..f).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let var: Vec<f64> = (0..f).map(|_| rng.gen_range(0.5..2.0)).collect();
            (
                vec![x, gamma, beta],
                Box::new(move |t, v| {
                    let y = t.batch_norm_eval(v[0], v[1], v[2], &mean, &var)?;
                    project(t, y)
                }),
            )
        }
        "relu" => {
            let x = away_from_zero(&[rng.gen_range(1..4), rng.gen_range(1..6)], rng);
            (
                vec![x],
                Box::new(|t, v| {
                    let y = t.relu(v[0]);
                    project(t, y)
                }),
            )
        }
        "sigmoid" => {
            let x = Tensor::randn(&[rng.gen_range(1..4), rng.gen_range(1..6)], 2.0, rng);
            (
                vec![x],
                Box::new(|t, v| {
                    let y = t.sigmoid(v[0]);
                    project(t, y)
                }),
            )
        }
        "bce" => {
            let shape = [rng.gen_range(1..4), rng.gen_range(1..6)];
            // Central differences lose accuracy where the gradient (q-p)/(q(1-q))
            // is small but the third derivative is not, so keep predictions off
            // the ends and fractional targets away from their prediction.
            let q = Tensor::uniform(&shape, 0.25, 0.75, rng);
            let p = q.map(|qv| {
                if rng.gen_bool(0.3) {
                    let off = rng.gen_range(0.15..0.25);
                    if qv > 0.5 {
                        qv - off
                    } else {
                        qv + off
                    }
                } else {
                    f64::from(rng.gen_range(0..2))
                }
            });
            (vec![q], Box::new(move |t, v| t.bce_loss(&p, v[0])))
        }
        "mse" => {
            let shape = [rng.gen_range(1..4), rng.gen_range(1..6)];
            let a = Tensor::randn(&shape, 1.0, rng);
            let b = Tensor::randn(&shape, 1.0, rng);
            (vec![a, b], Box::new(|t, v| t.mse_loss(v[0], v[1])))
        }
        "graph_ops" => {
            // concat, slice, gather, scatter, add/sub/scale, reshape, row losses
            let n = rng.gen_range(2..5);
            let a = Tensor::randn(&[n, 3], 1.0, rng);
            let b = Tensor::randn(&[n, 2], 1.0, rng);
            let idx: Vec<usize> = (0..6).map(|_| rng.gen_range(0..n)).collect();
            (
                vec![a, b],
                Box::new(move |t, v| {
                    let c = t.concat(&[v[0], v[1]])?;
                    let s = t.slice_cols(c, 1, 3)?;
                    let g = t.gather_rows(s, &idx)?;
                    let sc = t.scatter_add_rows(g, &idx, n)?;
                    let d = t.sub(sc, s)?;
                    let e = t.scale(d, 0.7);
                    let f = t.add(e, s)?;
                    let r = t.reshape(f, &[1, n * 3])?;
                    let half = t.scale(r, 0.5);
                    let rows = t.sq_err_rows(r, half)?;
                    let z = t.sum_all(rows);
                    let p = project(t, f)?;
                    let zp = t.add(z, p)?;
                    Ok(zp)
                }),
            )
        }
        other => panic!("unknown layer kind {other}"),
    }
}

pub const KINDS: &[&str] = &[
    "dense",
    "conv",
    "transpconv",
    "maxpool",
    "batchnorm",
    "batchnorm_eval",
    "relu",
    "sigmoid",
    "bce",
    "mse",
    "graph_ops",
];

/// Largest relative error over `CASES` random instances of `kind`.
pub fn run(kind: &str, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..CASES)
        .map(|i| {
            let (inputs, f) = case(kind, &mut rng, i);
            check(&inputs, H, |t, v| f(t, v)).unwrap_or_else(|e| panic!("{kind} case {i}: {e}"))
        })
        .fold(0.0, f64::max)
}
