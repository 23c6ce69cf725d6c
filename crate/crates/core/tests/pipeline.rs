//! End-to-end checks: generate a scene, render its maps, decode with every
//! mode, and score against ground truth.

use grm3d_core::metrics::evaluate;
use grm3d_core::pipeline::{decode_scene_maps, DecodeParams, GraphMode};
use grm3d_core::sdar::{refine, GateSource, SdarWeights};
use grm3d_core::skeleton::SkeletonConfig;
use grm3d_core::synth::{
    corrupt_maps, generate_scene, render_maps, CorruptParams, RenderParams, SceneParams,
};
use grm3d_core::DEFAULT_PCK_THRESHOLD;

#[test]
fn every_decoder_reconstructs_clean_scenes_exactly() {
    let skeleton = SkeletonConfig::default();
    for seed in [3u64, 14, 159] {
        for person_count in [1usize, 3] {
            let params = SceneParams { person_count, ..SceneParams::default() };
            let scene = generate_scene(&skeleton, &params, seed).unwrap();
            let maps = render_maps(&scene, &skeleton, &RenderParams::default()).unwrap();
            let gt = scene.gt_poses();
            for mode in [GraphMode::Star, GraphMode::Tree, GraphMode::Dgr] {
                let outcome = decode_scene_maps(
                    &maps,
                    &skeleton,
                    &DecodeParams { mode, ..DecodeParams::default() },
                )
                .unwrap();
                let report = evaluate(
                    &gt,
                    &outcome.valid_poses(),
                    skeleton.mid_hip(),
                    DEFAULT_PCK_THRESHOLD,
                );
                assert_eq!(
                    report.pck_rel, 100.0,
                    "seed {seed}, {person_count} persons, {mode}: all joints within threshold"
                );
                let mpjpe = report.mpjpe.expect("matched persons");
                assert!(
                    mpjpe <= 1.5,
                    "seed {seed}, {person_count} persons, {mode}: mpjpe {mpjpe}"
                );
            }
        }
    }
}

#[test]
fn decoder_robustness_ranks_dgr_above_tree_above_star_under_corruption() {
    let skeleton = SkeletonConfig::default();
    let render = RenderParams::default();
    let mut sums = [0.0f64; 3];
    let scenes = 24usize;
    for seed in 0..scenes as u64 {
        let params = SceneParams {
            width: 192,
            height: 192,
            person_count: 3,
            crowding: 0.5,
        };
        let scene = generate_scene(&skeleton, &params, 1000 + seed).unwrap();
        let mut maps = render_maps(&scene, &skeleton, &render).unwrap();
        corrupt_maps(
            &mut maps,
            &scene,
            &skeleton,
            &render,
            &CorruptParams {
                occlusion_prob: 0.3,
                seed: 2000 + seed,
                depth_noise_divisor: 2000.0,
                ..CorruptParams::default()
            },
        )
        .unwrap();
        let gt = scene.gt_poses();
        for (slot, mode) in [GraphMode::Star, GraphMode::Tree, GraphMode::Dgr]
            .into_iter()
            .enumerate()
        {
            let outcome = decode_scene_maps(
                &maps,
                &skeleton,
                &DecodeParams { mode, ..DecodeParams::default() },
            )
            .unwrap();
            let report = evaluate(
                &gt,
                &outcome.valid_poses(),
                skeleton.mid_hip(),
                DEFAULT_PCK_THRESHOLD,
            );
            sums[slot] += report.pck_rel;
        }
    }
    let [star, tree, dgr] = sums.map(|s| s / scenes as f64);
    assert!(
        dgr > tree + 1.0 && tree > star + 1.0,
        "expected dgr > tree > star with real gaps, got dgr {dgr:.1}, tree {tree:.1}, star {star:.1}"
    );
}

#[test]
fn zero_weight_refinement_leaves_decoding_untouched() {
    let skeleton = SkeletonConfig::default();
    let params = SceneParams { person_count: 2, ..SceneParams::default() };
    let scene = generate_scene(&skeleton, &params, 71).unwrap();
    let render = RenderParams { feature_channels: Some(4), feature_seed: 9, ..RenderParams::default() };
    let maps = render_maps(&scene, &skeleton, &render).unwrap();
    let weights = SdarWeights::zeros(skeleton.joint_count(), 4);
    let refined = refine(&maps, &weights, GateSource::Refined).unwrap();
    assert_eq!(refined, maps, "zero weights are a bitwise no-op");

    let decode = DecodeParams::default();
    let a = decode_scene_maps(&maps, &skeleton, &decode).unwrap();
    let b = decode_scene_maps(&refined, &skeleton, &decode).unwrap();
    assert_eq!(a.valid_poses(), b.valid_poses());
}
