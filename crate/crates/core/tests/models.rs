mod common;

use std::path::Path;

use common::checks::{self, encoder_latents, run};
use common::models::{config, controls, graph, perturbed, H, W};
use objdyn::models::{Checkpoint, ModelVariant, Predictor};
use objdyn::tensor::{Adam, AdamConfig, Ctx};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn graph_network_output_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = perturbed(ModelVariant::GnPosVel, 1, &mut rng);
    let g = graph(&p.model.config, 3, &mut rng);
    let out = run(&p, &[g], &controls(1, 1, &mut rng), false);
    assert_eq!(out.len(), 1);
    let (masks, poses, edges, latent) = &out[0];
    assert_eq!(masks.shape(), [3, W * H]);
    assert!(masks.data().iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(poses.as_ref().unwrap().shape(), [3, 6]);
    assert_eq!(edges.as_ref().unwrap().shape(), [6, 9]);
    assert!(latent.is_none());
}

#[test]
fn every_variant_runs_multi_step_on_mixed_batches() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for v in ModelVariant::ALL {
        let p = perturbed(v, 2, &mut rng);
        let graphs: Vec<_> = [1, 3, 2]
            .iter()
            .map(|&n| graph(&p.model.config, n, &mut rng))
            .collect();
        for reencode in [false, true] {
            let out = run(&p, &graphs, &controls(3, 3, &mut rng), reencode);
            assert_eq!(out.len(), 3, "{v}");
            for (m, poses, edges, latent) in &out {
                assert_eq!(m.shape(), [6, W * H], "{v}");
                assert_eq!(poses.is_some(), v.has_pose(), "{v}");
                assert_eq!(
                    edges.as_ref().map(|e| e.rows()),
                    v.has_edges().then_some(2 + 6),
                    "{v}"
                );
                assert_eq!(latent.is_some(), v.is_ap(), "{v}");
            }
        }
    }
}

#[test]
fn mismatched_inputs_are_schema_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ap = Predictor::new(config(ModelVariant::Ap), 0).unwrap();
    let gn = Predictor::new(config(ModelVariant::GnPosVel), 0).unwrap();
    let g_gn = graph(&gn.model.config, 2, &mut rng);
    let g_ap = graph(&ap.model.config, 2, &mut rng);
    let mut ctx = Ctx::frozen(&ap.store);
    assert!(ap
        .model
        .forward(&mut ctx, &[g_gn.clone()], &controls(1, 1, &mut rng), false)
        .is_err());
    assert!(ap
        .model
        .forward(&mut ctx, &[g_ap.clone()], &controls(2, 1, &mut rng), false)
        .is_err());
    assert!(ap.model.forward(&mut ctx, &[g_ap], &[], false).is_err());
    let mut ctx = Ctx::frozen(&gn.store);
    let mut no_edges = g_gn.clone();
    no_edges.edges.clear();
    assert!(gn
        .model
        .forward(&mut ctx, &[g_gn], &controls(1, 1, &mut rng), false)
        .is_ok());
    let edgeless = Predictor::new(config(ModelVariant::GnNoEdges), 0).unwrap();
    let g = graph(&gn.model.config, 2, &mut rng);
    let mut ctx = Ctx::frozen(&edgeless.store);
    assert!(edgeless
        .model
        .forward(&mut ctx, &[g], &controls(1, 1, &mut rng), false)
        .is_err());
}

#[test]
fn predictions_commute_with_object_permutations() {
    checks::predictor_equivariance(ModelVariant::Ap, 50, 4);
    checks::predictor_equivariance(ModelVariant::ApNoInteract, 8, 5);
    checks::predictor_equivariance(ModelVariant::GnSegm, 8, 6);
    checks::predictor_equivariance(ModelVariant::GnPosVel, 8, 7);
}

#[test]
fn baseline_equals_auto_predictor_with_zero_update() {
    checks::baseline_is_zero_update_ap();
}

#[test]
fn single_object_interaction_is_inert() {
    checks::single_object_ignores_interaction();
}

#[test]
fn fresh_update_is_the_identity() {
    checks::fresh_update_is_identity();
}

#[test]
fn constant_interaction_adds_once_per_other_object() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut p = Predictor::new(config(ModelVariant::Ap), 10).unwrap();
    // zero weights, constant bias in the last interaction layer
    let last = p
        .store
        .iter()
        .filter(|(_, q)| q.name.starts_with("f_interact.") && q.name.ends_with(".b"))
        .map(|(id, _)| id)
        .last()
        .unwrap();
    let c_val: Vec<f64> = (0..p.model.latent_width())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    p.store.value_mut(last).data_mut().copy_from_slice(&c_val);
    let graphs = vec![graph(&p.model.config, 3, &mut rng)];
    let z = encoder_latents(&p, &graphs);
    let out = run(&p, &graphs, &controls(1, 1, &mut rng), false);
    let latent = out[0].3.as_ref().unwrap();
    for r in 0..3 {
        for (k, &c) in c_val.iter().enumerate() {
            let want = z.row(r)[k] + 2.0 * c;
            assert!((latent.row(r)[k] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn supervised_loss_matches_scalar_loops() {
    checks::supervised_loss_oracle(100);
}

#[test]
fn latent_loss_matches_scalar_loops() {
    checks::latent_loss_oracle(100);
}

#[test]
fn checkpoint_round_trips_into_a_fresh_predictor() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = perturbed(ModelVariant::GnSegm, 11, &mut rng);
    let adam = Adam::new(&p.store, AdamConfig::default());
    let ck = Checkpoint {
        config: p.model.config.clone(),
        stage: 1,
        params: p.store.clone(),
        adam,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stage1.odck");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.stage, 1);
    assert_eq!(back.variant(), ModelVariant::GnSegm);
    let q = Predictor::with_params(back.config.clone(), &back.params).unwrap();
    let g = vec![graph(&p.model.config, 3, &mut rng)];
    let c = controls(1, 2, &mut rng);
    let (a, b) = (run(&p, &g, &c, false), run(&q, &g, &c, false));
    // parameters are stored as f32
    for (x, y) in a.iter().zip(&b) {
        assert!(x.0.max_abs_diff(&y.0) < 1e-4);
    }
    // a checkpoint does not load into another architecture
    assert!(Predictor::with_params(config(ModelVariant::Ap), &back.params).is_err());
    assert!(Checkpoint::load(Path::new("/nonexistent/ck.odck")).is_err());
}
