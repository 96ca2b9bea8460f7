mod common;

use std::path::Path;

use common::checks;
use objdyn::sim::geometry::V2;
use objdyn::sim::{
    generate_dataset, generate_episode, initial_world, load_dataset, render, Body, Episode,
    Physics, Pusher, Role, SimConfig, WorldState,
};
use objdyn::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn golden_episodes_are_byte_identical() {
    checks::golden_episodes();
}

#[test]
fn generation_is_deterministic() {
    let cfg = Role::Test3.config(32, 24);
    let a = generate_episode(&cfg, 99).unwrap();
    let b = generate_episode(&cfg, 99).unwrap();
    assert_eq!(a, b);
    let c = generate_episode(&cfg, 100).unwrap();
    assert_ne!(a, c);
}

#[test]
fn hundred_episodes_respect_the_physical_invariants() {
    checks::physical_invariants(100);
}

#[test]
fn lengths_cover_the_role_ranges() {
    checks::episode_lengths();
}

#[test]
fn untouched_object_follows_the_damped_closed_form() {
    checks::free_motion();
}

#[test]
fn masks_are_binary_disjoint_and_one_per_object() {
    let cfg = Role::Test5TwoNovel.config(32, 24);
    let ep = generate_episode(&cfg, 5).unwrap();
    assert_eq!(ep.n, 5);
    let px = ep.w * ep.h;
    for f in &ep.frames {
        assert_eq!(f.masks.len(), 5 * px);
        for p in 0..px {
            let owners: u32 = (0..5).map(|i| u32::from(f.masks[i * px + p])).sum();
            assert!(owners <= 1);
            let depth = f.depth[p];
            // object pixels have depth; free floor is 0 or the pusher tip
            if owners == 1 {
                assert!(depth > 0.0 && depth < 0.85);
            }
        }
    }
}

/// Independent rasterizer: intersect each pixel-centre row with the polygon
/// edges and count the centres between the two crossings.
fn scanline_count(poly: &[V2], w: usize, h: usize, container: V2) -> usize {
    let (sx, sy) = (container[0] / w as f64, container[1] / h as f64);
    let mut count = 0;
    for row in 0..h {
        let y = (row as f64 + 0.5) * sy;
        let mut xs = Vec::new();
        for k in 0..poly.len() {
            let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
            if (a[1] <= y) != (b[1] <= y) {
                xs.push(a[0] + (y - a[1]) / (b[1] - a[1]) * (b[0] - a[0]));
            }
        }
        if xs.len() < 2 {
            continue;
        }
        let (xl, xr) = (
            xs.iter().copied().fold(f64::INFINITY, f64::min),
            xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        );
        count += (0..w)
            .filter(|&c| (c as f64 + 0.5) * sx >= xl && (c as f64 + 0.5) * sx <= xr)
            .count();
    }
    count
}

fn lone_body(body: Body) -> WorldState {
    WorldState {
        objects: vec![body],
        pusher: Pusher {
            pos: [0.2, 0.2],
            vel: [0.0; 2],
            radius: 0.15,
            z: 0.9,
        },
        container: [4.0, 3.0],
        t: 0,
        physics: Physics::default(),
    }
}

#[test]
fn mask_area_matches_a_scanline_rasterizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let shape = rng.gen_range(0..8);
        let body = Body::new(
            shape,
            0.9,
            [rng.gen_range(1.0..3.0), rng.gen_range(0.9..2.1)],
            rng.gen_range(0.0..6.28),
        );
        let poly = body.vertices();
        let world = lone_body(body);
        for (w, h) in [(32, 24), (64, 48)] {
            let r = render(&world, w, h);
            let got = r.masks.iter().filter(|&&m| m == 1).count();
            assert_eq!(
                got,
                scanline_count(&poly, w, h, world.container),
                "shape {shape} at {w}x{h}"
            );
        }
    }
}

#[test]
fn mask_centroid_tracks_the_object() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let shape = rng.gen_range(0..8);
        let pos = [rng.gen_range(1.0..3.0), rng.gen_range(0.9..2.1)];
        let world = lone_body(Body::new(shape, 0.9, pos, rng.gen_range(0.0..6.28)));
        let (w, h) = (32, 24);
        let r = render(&world, w, h);
        let (mut sr, mut sc, mut k) = (0.0, 0.0, 0.0);
        for row in 0..h {
            for col in 0..w {
                if r.masks[row * w + col] == 1 {
                    sr += row as f64 + 0.5;
                    sc += col as f64 + 0.5;
                    k += 1.0;
                }
            }
        }
        let (px_col, px_row) = (pos[0] / 4.0 * w as f64, pos[1] / 3.0 * h as f64);
        assert!((sc / k - px_col).hypot(sr / k - px_row) < 2.0);
    }
}

#[test]
fn overcrowded_container_fails_placement() {
    let mut cfg = SimConfig::desk(vec![0, 1, 2, 3, 4, 5, 6, 7, 0, 1, 2, 3], 7, 7);
    cfg.object_size = 1.4;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    match initial_world(&cfg, &mut rng) {
        Err(Error::Placement { objects, attempts }) => {
            assert_eq!(objects, 12);
            assert_eq!(attempts, 1000);
        }
        other => panic!("expected a placement failure, got {other:?}"),
    }
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn datasets_regenerate_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = Role::Train3.config(32, 24);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let m = generate_dataset("train3", &cfg, 20, 500, &a).unwrap();
    generate_dataset("train3", &cfg, 20, 500, &b).unwrap();
    assert_eq!(m.episodes.len(), 20);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    assert_eq!(dir_bytes(&a).len(), 21);

    let ds = load_dataset(&a).unwrap();
    assert_eq!(ds.episodes.len(), 20);
    assert_eq!(ds.manifest, m);
    assert_eq!(
        ds.manifest.total_steps(),
        ds.episodes.iter().map(Episode::len).sum::<usize>()
    );
    assert_eq!(ds.episodes[3], generate_episode(&cfg, 503).unwrap());
}

#[test]
fn empty_dataset_has_only_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let m = generate_dataset("test3", &Role::Test3.config(32, 24), 0, 1, tmp.path()).unwrap();
    assert!(m.episodes.is_empty());
    assert_eq!(dir_bytes(tmp.path()).len(), 1);
    assert!(load_dataset(tmp.path()).unwrap().episodes.is_empty());
}

#[test]
fn dataset_load_rejects_a_mismatched_episode() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = Role::Train3.config(16, 12);
    let m = generate_dataset("train3", &cfg, 2, 0, tmp.path()).unwrap();
    // swap in an episode with a different length
    let other = (0..50)
        .map(|s| generate_episode(&cfg, s).unwrap())
        .find(|e| e.len() != m.episodes[0].t)
        .unwrap();
    other.save(&tmp.path().join(&m.episodes[0].file)).unwrap();
    assert!(load_dataset(tmp.path()).is_err());
}
