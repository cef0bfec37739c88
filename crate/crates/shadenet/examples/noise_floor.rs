use shadenet::loss::dssim;
use shadenet::render::*;

fn main() {
    let scene = make_scene(&SceneRecipe { seed: 11 ^ 0xdead, extra_primitives: 5 });
    let scene = make_scene(&SceneRecipe { seed: scene.bounds().diagonal() as u64 + 1, extra_primitives: 5 });
    let _ = &scene;
    // Use the same derivation as the generator for a realistic view.
    let scene = make_scene(&SceneRecipe { seed: 3, extra_primitives: 5 });
    let cams = sample_views(&scene, 4, 96, 96, 9).unwrap();
    for (i, cam) in cams.iter().enumerate() {
        let spec = |spp| AoSpec { radius: 0.3, spp, weighting: HemisphereWeighting::Cosine };
        let hi = ao_ground_truth(&scene, cam, &spec(4096), 1000);
        let a = ao_ground_truth(&scene, cam, &spec(256), 1);
        let b = ao_ground_truth(&scene, cam, &spec(256), 2);
        let m1k = ao_ground_truth(&scene, cam, &spec(1024), 3);
        println!(
            "view {i}: dssim(hi,256)={:.4} dssim(256,256')={:.4} dssim(hi,1024)={:.4} mean={:.3}",
            dssim(&hi, &a).unwrap(),
            dssim(&a, &b).unwrap(),
            dssim(&hi, &m1k).unwrap(),
            hi.mean()
        );
    }
}
