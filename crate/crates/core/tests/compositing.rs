mod common;

use groupsplat::render::{render_forward, RenderSettings};

#[test]
fn forward_matches_naive_compositing() {
    let mut blended = 0;
    for seed in 0..100 {
        let (set, cam, bg) = common::random_scene(seed);
        let out = render_forward(&set, &cam, bg, &RenderSettings::default()).unwrap();
        let naive = common::naive_render(&set, &cam, bg);
        let worst = out.image.data.iter().zip(&naive).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "seed {seed}: max difference {worst:e}");
        blended += out.total_blends();
    }
    assert!(blended > 10_000, "scenes are too sparse to exercise blending: {blended}");
}

#[test]
fn sequential_and_parallel_paths_agree_bitwise() {
    for seed in 0..20 {
        let (set, cam, bg) = common::random_scene(seed);
        let par = render_forward(&set, &cam, bg, &RenderSettings::default()).unwrap();
        let seq = render_forward(&set, &cam, bg, &RenderSettings { parallel: false, ..RenderSettings::default() }).unwrap();
        assert_eq!(par.image, seq.image);
        assert_eq!(par.blend_counts, seq.blend_counts);
        assert_eq!(par.per_gaussian_hits, seq.per_gaussian_hits);
    }
}

#[test]
fn tile_size_does_not_change_the_image() {
    for seed in 0..20 {
        let (set, cam, bg) = common::random_scene(seed);
        let a = render_forward(&set, &cam, bg, &RenderSettings::default()).unwrap();
        let b = render_forward(&set, &cam, bg, &RenderSettings { tile_size: 5, ..RenderSettings::default() }).unwrap();
        assert_eq!(a.image, b.image);
    }
}
