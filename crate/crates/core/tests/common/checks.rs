//! Property checks shared by the integration tests and the acceptance
//! harness. Each check panics on failure and returns a one-line summary.

use std::time::Instant;

use objdyn::graphnet::{fully_connected_edges, AttributedGraph, Topology};
use objdyn::models::{
    latent_loss, loss_eq1, LossConfig, ModelVariant, Predictor, Reduction, StepOutput, StepTargets,
};
use objdyn::pipeline::{evaluate, iou, EvalMode, MaskPredictor};
use objdyn::sim::{
    generate_episode, generate_with_states, Body, Dataset, Episode, Frame, Manifest, Physics,
    Pusher, Role, WorldState,
};
use objdyn::sim::{PENETRATION_TOL, V_MAX};
use objdyn::tensor::{Ctx, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::gradsuite;
use super::graphs::{perm_rows_deviation, random_graph, random_perm, CoreMlps};
use super::models::{config, controls, graph, jitter, perturbed};

pub type StepValues = (Tensor, Option<Tensor>, Option<Tensor>, Option<Tensor>);

/// Masks, poses, edges and latents of every predicted step.
pub fn run(
    p: &Predictor,
    graphs: &[AttributedGraph],
    c: &[Tensor],
    reencode: bool,
) -> Vec<StepValues> {
    let mut ctx = Ctx::frozen(&p.store);
    let (_, steps) = p.model.forward(&mut ctx, graphs, c, reencode).unwrap();
    let val = |v: Option<objdyn::tensor::Var>| v.map(|v| ctx.tape.value(v).clone());
    steps
        .iter()
        .map(|s| {
            (
                ctx.tape.value(s.masks).clone(),
                val(s.poses),
                val(s.edges),
                val(s.latent),
            )
        })
        .collect()
}

pub fn gradients() -> String {
    let t0 = Instant::now();
    let mut worst = (0.0, "");
    for (i, kind) in gradsuite::KINDS.iter().enumerate() {
        let err = gradsuite::run(kind, 100 + i as u64);
        assert!(err < gradsuite::TOL, "{kind}: max relative error {err:e}");
        if err > worst.0 {
            worst = (err, kind);
        }
    }
    format!(
        "{} layer kinds x {} cases, worst relative error {:.1e} ({}), {:.1}s",
        gradsuite::KINDS.len(),
        gradsuite::CASES,
        worst.0,
        worst.1,
        t0.elapsed().as_secs_f64()
    )
}

pub fn full_block_equivariance(cases: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mlps = CoreMlps::new(&mut rng);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.gen_range(2..=6);
        let g = random_graph(n, &mut rng);
        let perm = random_perm(n, &mut rng);
        let (v, e, u) = mlps.run(&g);
        let (vp, ep, up) = mlps.run(&g.permute_nodes(&perm));
        assert_eq!(ep.rows(), n * (n - 1));
        // edge order is kept by the permutation, only endpoints are renamed
        let dev = perm_rows_deviation(&v, &vp, &perm)
            .max(e.max_abs_diff(&ep))
            .max(u.max_abs_diff(&up));
        assert!(dev < 1e-6, "deviation {dev:e}");
        worst = worst.max(dev);
    }
    format!("full block: {cases} graphs, max deviation {worst:.1e}")
}

/// Permutes the objects of random graphs and compares every predicted step.
pub fn predictor_equivariance(variant: ModelVariant, cases: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = perturbed(variant, seed, &mut rng);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.gen_range(2..=6);
        let g = graph(&p.model.config, n, &mut rng);
        let perm = random_perm(n, &mut rng);
        let c = controls(1, 2, &mut rng);
        let a = run(&p, &[g.clone()], &c, false);
        let b = run(&p, &[g.permute_nodes(&perm)], &c, false);
        for (x, y) in a.iter().zip(&b) {
            let mut dev = x.0.select_rows(&perm).max_abs_diff(&y.0);
            for (px, py) in [(&x.1, &y.1), (&x.3, &y.3)] {
                if let (Some(px), Some(py)) = (px, py) {
                    dev = dev.max(px.select_rows(&perm).max_abs_diff(py));
                }
            }
            if let (Some(ex), Some(ey)) = (&x.2, &y.2) {
                dev = dev.max(ex.max_abs_diff(ey));
            }
            assert!(dev < 1e-6, "{variant}: deviation {dev:e}");
            worst = worst.max(dev);
        }
    }
    format!("{variant}: {cases} graphs, max deviation {worst:.1e}")
}

fn oracle_bce(p: f64, q: f64) -> f64 {
    let q = q.clamp(1e-7, 1.0 - 1e-7);
    -(p * q.ln() + (1.0 - p) * (1.0 - q).ln())
}

fn row_mean(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).sum::<f64>() / a.len() as f64
}

struct LossCase {
    topo: Topology,
    variant: ModelVariant,
    masks: Vec<Tensor>,
    mask_t: Vec<Tensor>,
    poses: Vec<Tensor>,
    pose_t: Vec<Tensor>,
    edges: Vec<Tensor>,
    edge_t: Vec<Tensor>,
}

impl LossCase {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let variant = [
            ModelVariant::GnPosVel,
            ModelVariant::GnSegm,
            ModelVariant::GnNoEdges,
            ModelVariant::Ap,
        ][rng.gen_range(0..4)];
        let counts: Vec<usize> = (0..rng.gen_range(1..4))
            .map(|_| rng.gen_range(1..5))
            .collect();
        let topo = if variant.has_edges() {
            Topology::from_graphs(counts.iter().map(|&n| (n, fully_connected_edges(n))))
        } else {
            Topology::edgeless(&counts)
        };
        let (nv, ne) = (topo.n_nodes(), topo.n_edges());
        let n = rng.gen_range(1..4);
        let px = rng.gen_range(1..10);
        let ew = if variant.has_segm_edges() {
            rng.gen_range(1..6)
        } else {
            9
        };
        let unit =
            |r: usize, c: usize, rng: &mut ChaCha8Rng| Tensor::uniform(&[r, c], 0.0, 1.0, rng);
        let bin = |r: usize, c: usize, rng: &mut ChaCha8Rng| {
            unit(r, c, rng).map(|v| f64::from(u8::from(v > 0.5)))
        };
        let mut c = LossCase {
            topo,
            variant,
            masks: vec![],
            mask_t: vec![],
            poses: vec![],
            pose_t: vec![],
            edges: vec![],
            edge_t: vec![],
        };
        for _ in 0..n {
            c.masks.push(unit(nv, px, rng));
            c.mask_t.push(bin(nv, px, rng));
            c.poses.push(Tensor::randn(&[nv, 6], 1.0, rng));
            c.pose_t.push(Tensor::randn(&[nv, 6], 1.0, rng));
            if variant.has_segm_edges() {
                c.edges.push(unit(ne, ew, rng));
                c.edge_t.push(bin(ne, ew, rng));
            } else {
                c.edges.push(Tensor::randn(&[ne, ew], 1.0, rng));
                c.edge_t.push(Tensor::randn(&[ne, ew], 1.0, rng));
            }
        }
        c
    }

    fn library(&self, cfg: &LossConfig, repeat: usize) -> f64 {
        let mut tape = Tape::new();
        let mut outs = vec![];
        let mut tgts = vec![];
        for _ in 0..repeat {
            for t in 0..self.masks.len() {
                outs.push(StepOutput {
                    masks: tape.leaf(self.masks[t].clone()),
                    poses: Some(tape.leaf(self.poses[t].clone())),
                    edges: Some(tape.leaf(self.edges[t].clone())),
                    latent: None,
                });
                tgts.push(StepTargets {
                    masks: self.mask_t[t].clone(),
                    poses: Some(self.pose_t[t].clone()),
                    edges: Some(self.edge_t[t].clone()),
                });
            }
        }
        let l = loss_eq1(&mut tape, &self.topo, self.variant, &outs, &tgts, cfg).unwrap();
        tape.value(l).item()
    }

    fn scalar_loop(&self, sum: bool) -> f64 {
        let v = self.variant;
        let agg = |a: &[f64], b: &[f64], f: fn(f64, f64) -> f64| {
            let m = row_mean(a, b, f);
            if sum {
                m * a.len() as f64
            } else {
                m
            }
        };
        let sq = |x: f64, y: f64| (x - y) * (x - y);
        let bce = |p: f64, q: f64| oracle_bce(p, q);
        let mut total = 0.0;
        for t in 0..self.masks.len() {
            let mut step = 0.0;
            for g in 0..self.topo.n_graphs {
                let nodes: Vec<usize> = (0..self.topo.n_nodes())
                    .filter(|&i| self.topo.node_graph[i] == g)
                    .collect();
                let edges: Vec<usize> = (0..self.topo.n_edges())
                    .filter(|&i| self.topo.edge_graph[i] == g)
                    .collect();
                let mut node_term = 0.0;
                for &i in &nodes {
                    node_term += agg(self.mask_t[t].row(i), self.masks[t].row(i), bce);
                    if v.has_pose() {
                        node_term += agg(self.poses[t].row(i), self.pose_t[t].row(i), sq);
                    }
                }
                let mut edge_term = 0.0;
                if v.is_gn() && !edges.is_empty() {
                    for &i in &edges {
                        edge_term += if v.has_segm_edges() {
                            agg(self.edge_t[t].row(i), self.edges[t].row(i), bce)
                        } else {
                            agg(self.edges[t].row(i), self.edge_t[t].row(i), sq)
                        };
                    }
                    edge_term /= edges.len() as f64;
                }
                step += edge_term + node_term / nodes.len() as f64;
            }
            total += step / self.topo.n_graphs as f64;
        }
        total / self.masks.len() as f64
    }
}

pub fn supervised_loss_oracle(cases: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for i in 0..cases {
        let c = LossCase::random(&mut rng);
        let sum = i % 4 == 3;
        let cfg = LossConfig {
            reduction: if sum { Reduction::Sum } else { Reduction::Mean },
            ..LossConfig::default()
        };
        let lib = c.library(&cfg, 1);
        let oracle = c.scalar_loop(sum);
        let rel = (lib - oracle).abs() / oracle.abs().max(1.0);
        assert!(rel <= 1e-9, "case {i} {}: {lib} vs {oracle}", c.variant);
        // the same per-step errors over twice the steps
        let doubled = c.library(&cfg, 2);
        assert!(
            (doubled - lib).abs() <= 1e-9 * lib.abs().max(1.0),
            "case {i}: doubling steps changed {lib} to {doubled}"
        );
        worst = worst.max(rel);
    }
    format!("supervised loss: {cases} instances, worst relative error {worst:.1e}")
}

pub fn latent_loss_oracle(cases: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let counts: Vec<usize> = (0..rng.gen_range(1..4))
            .map(|_| rng.gen_range(1..5))
            .collect();
        let topo = Topology::edgeless(&counts);
        let n = rng.gen_range(1..4);
        let width = rng.gen_range(1..8);
        let weight = rng.gen_range(0.0..3.0);
        let preds: Vec<Tensor> = (0..n)
            .map(|_| Tensor::randn(&[topo.n_nodes(), width], 1.0, &mut rng))
            .collect();
        let tgts: Vec<Tensor> = (0..n)
            .map(|_| Tensor::randn(&[topo.n_nodes(), width], 1.0, &mut rng))
            .collect();
        let cfg = LossConfig {
            latent_weight: weight,
            ..LossConfig::default()
        };
        let lib = |repeat: usize| {
            let mut tape = Tape::new();
            let vars: Vec<_> = (0..repeat)
                .flat_map(|_| &preds)
                .map(|p| tape.leaf(p.clone()))
                .collect();
            let tg: Vec<Tensor> = (0..repeat).flat_map(|_| tgts.iter().cloned()).collect();
            let l = latent_loss(&mut tape, &topo, &vars, &tg, &cfg).unwrap();
            tape.value(l).item()
        };
        let mut oracle = 0.0;
        for t in 0..n {
            for g in 0..topo.n_graphs {
                let nodes: Vec<usize> = (0..topo.n_nodes())
                    .filter(|&i| topo.node_graph[i] == g)
                    .collect();
                let s: f64 = nodes
                    .iter()
                    .map(|&i| row_mean(preds[t].row(i), tgts[t].row(i), |a, b| (a - b) * (a - b)))
                    .sum();
                oracle += s / nodes.len() as f64;
            }
        }
        oracle *= weight / (n * topo.n_graphs) as f64;
        let got = lib(1);
        let rel = (got - oracle).abs() / oracle.max(1.0);
        assert!(rel <= 1e-9, "{got} vs {oracle}");
        assert!((lib(2) - got).abs() <= 1e-9 * got.max(1.0));
        worst = worst.max(rel);
    }
    format!("latent loss: {cases} instances, worst relative error {worst:.1e}")
}

fn brute_iou(a: u32, b: u32) -> f64 {
    let (mut i, mut u) = (0, 0);
    for bit in 0..9 {
        let (x, y) = ((a >> bit) & 1, (b >> bit) & 1);
        if x == 1 && y == 1 {
            i += 1;
        }
        if x == 1 || y == 1 {
            u += 1;
        }
    }
    if u == 0 {
        1.0
    } else {
        f64::from(i) / f64::from(u)
    }
}

pub fn exhaustive_iou() -> String {
    let masks: Vec<Vec<f64>> = (0..512u32)
        .map(|m| (0..9).map(|b| f64::from((m >> b) & 1)).collect())
        .collect();
    for a in 0..512u32 {
        for b in 0..512u32 {
            let got = iou(&masks[a as usize], &masks[b as usize]);
            assert_eq!(got, brute_iou(a, b), "{a:09b} vs {b:09b}");
        }
    }
    "all 512 x 512 pairs of 3x3 masks exact".into()
}

fn frame(n: usize, masks: &[[u8; 4]]) -> Frame {
    Frame {
        rgb: vec![0.0; 12],
        depth: vec![0.0; 4],
        masks: masks.iter().flatten().copied().collect(),
        pos: vec![[0.0; 3]; n],
        vel: vec![[0.0; 3]; n],
        control: [0.0; 6],
    }
}

/// Predicts the same hand-chosen 2x2 mask for every object.
struct Fixed;

impl MaskPredictor for Fixed {
    fn name(&self) -> String {
        "fixed".into()
    }

    fn predict(
        &self,
        ep: &Episode,
        starts: &[usize],
        n: usize,
    ) -> objdyn::Result<Vec<Vec<Tensor>>> {
        // rounds to [1, 1, 0, 0]
        let row = [0.9, 0.5, 0.2, 0.49];
        let data: Vec<f64> = (0..ep.n).flat_map(|_| row).collect();
        Ok(starts
            .iter()
            .map(|_| vec![Tensor::new(vec![ep.n, 4], data.clone()).unwrap(); n])
            .collect())
    }
}

pub fn dataset(role: Role, count: usize, seed: u64) -> Dataset {
    let cfg = role.config(32, 24);
    let episodes: Vec<Episode> = (0..count)
        .map(|i| generate_episode(&cfg, seed + i as u64).unwrap())
        .collect();
    Dataset {
        name: role.name().into(),
        dir: Default::default(),
        manifest: Manifest {
            dataset: role.name().into(),
            base_seed: seed,
            shape_ids: cfg.shape_ids.clone(),
            sim: cfg,
            episodes: vec![],
        },
        episodes,
    }
}

/// Two hand-built episodes with known per-item IoU {1, 1/2, 0, 1/2}.
pub fn micro_dataset_mean() -> String {
    let a = Episode {
        n: 2,
        w: 2,
        h: 2,
        frames: vec![
            frame(2, &[[0; 4], [0; 4]]),
            frame(2, &[[1, 1, 0, 0], [1, 0, 0, 0]]),
        ],
    };
    let b = Episode {
        n: 1,
        w: 2,
        h: 2,
        frames: vec![
            frame(1, &[[0; 4]]),
            frame(1, &[[0, 0, 1, 1]]),
            frame(1, &[[0, 1, 0, 0]]),
        ],
    };
    let mut data = dataset(Role::Test3, 0, 0);
    data.episodes = vec![a, b];
    let r = evaluate(&Fixed, &data, 1, EvalMode::Sliding).unwrap();
    let items: Vec<f64> = r.items.iter().map(|i| i.iou).collect();
    assert_eq!(items, vec![1.0, 0.5, 0.0, 0.5]);
    let brute = items.iter().sum::<f64>() / items.len() as f64;
    assert_eq!(r.mean_iou, brute);
    assert_eq!(r.mean_iou, 0.5);
    assert_eq!(r.n_items, 4);
    let by_count: Vec<(usize, f64, usize)> = r
        .per_object_count
        .iter()
        .map(|b| (b.key, b.mean_iou, b.n_items))
        .collect();
    assert_eq!(by_count, vec![(1, 0.25, 2), (2, 0.75, 2)]);
    format!("micro-dataset mean {} over {} items", r.mean_iou, r.n_items)
}

pub fn baseline_is_zero_update_ap() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = perturbed(ModelVariant::Baseline, 5, &mut rng);
    let mut ap = Predictor::new(config(ModelVariant::Ap), 6).unwrap();
    let copied = ap.store.copy_matching(&base.store);
    assert_eq!(copied, base.store.len());
    let graphs: Vec<_> = [3, 1]
        .iter()
        .map(|&n| graph(&base.model.config, n, &mut rng))
        .collect();
    let c = controls(2, 3, &mut rng);
    let mut worst = 0.0f64;
    for reencode in [false, true] {
        let a = run(&base, &graphs, &c, reencode);
        let b = run(&ap, &graphs, &c, reencode);
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max(x.0.max_abs_diff(&y.0));
        }
    }
    assert!(worst <= 1e-6, "deviation {worst:e}");
    // a trained-looking update changes the prediction
    jitter(&mut ap.store, &mut rng);
    ap.store.copy_matching(&base.store);
    let a = run(&base, &graphs, &c, false);
    let b = run(&ap, &graphs, &c, false);
    assert!(a[0].0.max_abs_diff(&b[0].0) > 1e-6);
    format!("baseline vs zero-update AP: max deviation {worst:.1e}")
}

pub fn single_object_ignores_interaction() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ap = perturbed(ModelVariant::Ap, 7, &mut rng);
    let mut no = Predictor::new(config(ModelVariant::ApNoInteract), 8).unwrap();
    no.store.copy_matching(&ap.store);
    let graphs: Vec<_> = (0..3)
        .map(|_| graph(&ap.model.config, 1, &mut rng))
        .collect();
    let c = controls(3, 3, &mut rng);
    for reencode in [false, true] {
        let a = run(&ap, &graphs, &c, reencode);
        let b = run(&no, &graphs, &c, reencode);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.0, y.0);
            assert_eq!(x.3, y.3);
        }
    }
    "single-object AP and AP without interaction bitwise equal".into()
}

pub fn encoder_latents(p: &Predictor, graphs: &[AttributedGraph]) -> Tensor {
    let rows: Vec<Vec<f64>> = graphs
        .iter()
        .flat_map(|g| &g.nodes)
        .map(|n| n.visual.as_ref().unwrap().data().to_vec())
        .collect();
    let x = Tensor::from_rows(&rows).unwrap();
    let [c, h, w] = p.model.config.visual_shape();
    let mut ctx = Ctx::frozen(&p.store);
    let xv = ctx
        .tape
        .constant(x.reshape(&[rows.len(), c, h, w]).unwrap());
    let z = p.model.node_encoder().forward(&mut ctx, xv).unwrap();
    ctx.tape.value(z).clone()
}

pub fn fresh_update_is_identity() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for v in [ModelVariant::Ap, ModelVariant::ApNoInteract] {
        let p = Predictor::new(config(v), 9).unwrap();
        let graphs: Vec<_> = [2, 4]
            .iter()
            .map(|&n| graph(&p.model.config, n, &mut rng))
            .collect();
        let z = encoder_latents(&p, &graphs);
        for (_, _, _, latent) in run(&p, &graphs, &controls(2, 3, &mut rng), false) {
            assert_eq!(latent.unwrap(), z);
        }
    }
    "freshly initialized update leaves latents unchanged".into()
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Pinned hashes of three reference episodes. Any change to physics,
/// rendering, the policy or the file layout shows up here.
const GOLDEN: [(Role, u64, &str); 3] = [
    (
        Role::Train3,
        0,
        "991175c938e405f0dc41fc1b4f80c264d99e79709c8a424a1f36b34aa07bf583",
    ),
    (
        Role::Test5TwoNovel,
        7,
        "6da661cd9f67d6894814926d4e563a2822dbcbee763776cf72d4b63e838ff43e",
    ),
    (
        Role::Test5FiveNovel,
        42,
        "4c11def332ac413d84ddde521df87b91900a8a2b8bc14d784ac63f7e7cbdad84",
    ),
];

pub fn golden_episodes() -> String {
    for (role, seed, want) in GOLDEN {
        let ep = generate_episode(&role.config(32, 24), seed).unwrap();
        let got = sha256_hex(&ep.to_bytes().unwrap());
        assert_eq!(got, want, "{role} seed {seed}");
    }
    "3 pinned episodes byte-identical".into()
}

fn container_excess(world: &WorldState) -> f64 {
    let [w, h] = world.container;
    world
        .objects
        .iter()
        .flat_map(|b| b.vertices())
        .map(|v| (-v[0]).max(v[0] - w).max(-v[1]).max(v[1] - h))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn physical_invariants(episodes: u64) -> String {
    let mut worst_pen = 0.0f64;
    let mut worst_wall = f64::NEG_INFINITY;
    for seed in 0..episodes {
        let role = Role::ALL[(seed % 4) as usize];
        let cfg = role.config(32, 24);
        let (ep, states) = generate_with_states(&cfg, 1000 + seed).unwrap();
        let (lo, hi) = role.steps();
        assert!((lo..=hi).contains(&ep.len()), "{role}: T={}", ep.len());
        assert_eq!(states.len(), ep.len());
        for (t, s) in states.iter().enumerate() {
            worst_pen = worst_pen.max(s.max_penetration());
            worst_wall = worst_wall.max(container_excess(s));
            let p = &s.pusher;
            assert!(p.pos[0] >= p.radius - 1e-9 && p.pos[0] <= s.container[0] - p.radius + 1e-9);
            assert!(p.pos[1] >= p.radius - 1e-9 && p.pos[1] <= s.container[1] - p.radius + 1e-9);
            for b in &s.objects {
                assert!(
                    b.vel[0].hypot(b.vel[1]) <= V_MAX + 1e-9,
                    "seed {seed} t {t} speed {}",
                    b.vel[0].hypot(b.vel[1])
                );
            }
            if t > 0 {
                let prev = &states[t - 1];
                for (b, a) in s.objects.iter().zip(&prev.objects) {
                    let implied = [
                        (b.pos[0] - a.pos[0]) / cfg.physics.dt,
                        (b.pos[1] - a.pos[1]) / cfg.physics.dt,
                    ];
                    let limit = (V_MAX / implied[0].hypot(implied[1])).min(1.0);
                    for k in 0..2 {
                        let want = implied[k] * limit;
                        assert!(
                            (want - b.vel[k]).abs() < 1e-9,
                            "seed {seed} t {t}: velocity {} vs displacement {want}",
                            b.vel[k]
                        );
                    }
                }
            }
            // recorded kinematics agree with the state
            let f = &ep.frames[t];
            for (i, b) in s.objects.iter().enumerate() {
                assert!((f64::from(f.pos[i][0]) - b.pos[0]).abs() < 1e-5);
                assert!((f64::from(f.pos[i][2]) - b.height / 2.0).abs() < 1e-6);
                assert_eq!(f.vel[i][2], 0.0);
            }
            let next = states.get(t + 1).unwrap_or(s);
            assert!((f64::from(f.control[0]) - next.pusher.pos[0]).abs() < 1e-5);
            assert!((f64::from(f.control[1]) - next.pusher.pos[1]).abs() < 1e-5);
        }
    }
    assert!(worst_pen <= PENETRATION_TOL, "penetration {worst_pen}");
    assert!(worst_wall <= PENETRATION_TOL, "wall excess {worst_wall}");
    format!(
        "{episodes} episodes: max penetration {worst_pen:.1e}, max wall excess {worst_wall:.1e}"
    )
}

/// A lone, untouched object follows the damped closed form
/// `v_k = v_0 (1 - f dt)^k`, `x_k = x_0 + dt * sum_{j=1..k} v_j`.
pub fn free_motion() -> String {
    let mut worst = 0.0f64;
    for friction in [0.0, 0.5, 2.0] {
        let mut body = Body::new(1, 0.8, [1.0, 1.2], 0.4);
        body.vel = [0.9, 0.35];
        let physics = Physics {
            friction,
            ..Physics::default()
        };
        let dt = physics.dt;
        let mut w = WorldState {
            objects: vec![body],
            pusher: Pusher {
                pos: [3.7, 2.7],
                vel: [0.0; 2],
                radius: 0.15,
                z: 0.5,
            },
            container: [4.0, 3.0],
            t: 0,
            physics,
        };
        let (x0, v0) = ([1.0, 1.2], [0.9, 0.35]);
        let decay: f64 = 1.0 - friction * dt;
        for k in 1..=8 {
            w.step([0.0, 0.0]).unwrap();
            let o = &w.objects[0];
            let sum: f64 = (1..=k).map(|j| decay.powi(j)).sum();
            for a in 0..2 {
                worst = worst.max((o.vel[a] - v0[a] * decay.powi(k)).abs());
                worst = worst.max((o.pos[a] - (x0[a] + dt * v0[a] * sum)).abs());
            }
            assert_eq!(o.angle, 0.4);
        }
    }
    assert!(worst <= 1e-9, "free motion off by {worst:e}");
    format!("free motion exact to {worst:.1e}")
}

pub fn episode_lengths() -> String {
    let mut seen = vec![];
    for role in Role::ALL {
        let cfg = role.config(16, 12);
        let lens: Vec<usize> = (0..60)
            .map(|s| generate_episode(&cfg, s).unwrap().len())
            .collect();
        let (lo, hi) = role.steps();
        assert!(
            lens.iter().all(|l| (lo..=hi).contains(l)),
            "{role}: {lens:?}"
        );
        let (min, max) = (*lens.iter().min().unwrap(), *lens.iter().max().unwrap());
        assert!(
            (max - min) * 2 >= hi - lo,
            "{role}: lengths barely vary {lens:?}"
        );
        seen.push(format!("{role} {min}..{max}"));
    }
    format!("lengths within role ranges ({})", seen.join(", "))
}
