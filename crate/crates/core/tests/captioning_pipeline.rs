use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use talk2bev::captioning::{
    build_gt_map, build_language_map, mock_annotators, BuildOptions, CaptionerClient, ImageRegion, MockCaptioner,
    PromptKind, SceneScript,
};
use talk2bev::geometry::locate_object;
use talk2bev::synth::{generate_synthetic_scene, SynthParams};

#[test]
fn jittered_crops_still_match_their_object() {
    let opts = BuildOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut trials, mut matched) = (0, 0);
    let mut seed = 0;
    while trials < 100 {
        let bundle = generate_synthetic_scene(seed, &SynthParams { n_objects: 6, ..Default::default() }).unwrap();
        seed += 1;
        let script = SceneScript::from_bundle(&bundle, &opts.correspondence);
        let captioner = MockCaptioner::new(script);
        for o in bundle.gt_objects.as_ref().unwrap() {
            let Ok(crop) = locate_object(o.object_id, o.position, &bundle.lidar_points, &bundle.cameras, &opts.correspondence) else {
                continue;
            };
            if trials == 100 {
                break;
            }
            let [u0, v0, u1, v1] = crop.bbox_px;
            let (w, h) = (u1 - u0, v1 - v0);
            let mut j = |span: f64| rng.gen_range(-0.1..0.1) * span;
            let cam = bundle.camera(&crop.camera_name).unwrap();
            let region = ImageRegion {
                camera_name: crop.camera_name.clone(),
                image_path: None,
                bbox_px: [u0 + j(w), v0 + j(h), u1 + j(w), v1 + j(h)],
                image_size: (cam.image_w, cam.image_h),
            };
            let text = captioner.describe(&region, "describe", PromptKind::Object).unwrap();
            trials += 1;
            if text == o.crop_descriptions.foreground_text {
                matched += 1;
            }
        }
    }
    assert!(matched >= 95, "{matched}/100 jittered crops matched");
}

#[test]
fn language_map_agrees_with_ground_truth_map() {
    let opts = BuildOptions::default();
    for seed in 0..10 {
        let bundle = generate_synthetic_scene(seed, &SynthParams { n_objects: 8, ..Default::default() }).unwrap();
        let captioner = MockCaptioner::from_bundle(&bundle, &opts.correspondence);
        let map = build_language_map(&bundle, &captioner, &opts).unwrap();
        let gt = build_gt_map(&bundle, &mock_annotators(&bundle, &opts.correspondence), &opts).unwrap();
        assert_eq!(map.object_ids(), gt.object_ids());
        let cell = bundle.grid.meta.cell_size_m;
        for (a, b) in map.objects.iter().zip(&gt.objects) {
            assert!(a.distance_to(b) <= cell, "object {} moved {} m", a.object_id, a.distance_to(b));
            assert_eq!(a.area_m2, b.area_m2);
            let caption = b.crop_descriptions.foreground_text.split(" | OCR: ").next().unwrap();
            if !a.crop_descriptions.foreground_text.is_empty() {
                assert_eq!(caption, a.crop_descriptions.foreground_text);
                assert_eq!(a.crop_descriptions.background_text, b.crop_descriptions.background_text);
            }
        }
        assert!(map.provenance.not_visible.len() < map.objects.len());
    }
}
