use mono4d_core::loss::LossWeights;
use mono4d_core::refine::{refine_scene, RefineParams};
use mono4d_core::synth::{Preset, Scene};
use mono4d_core::SceneInputs;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corrupted(inputs: &SceneInputs, seed: u64, spread: f64) -> (SceneInputs, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma: Vec<f64> =
        (0..inputs.num_frames()).map(|t| if t == 0 { 0.0 } else { rng.random_range(-spread..spread) }).collect();
    let mut bad = inputs.clone();
    for (d, s) in bad.depths.iter_mut().zip(&sigma) {
        *d = d.scaled(s.exp());
    }
    (bad, sigma)
}

#[test]
fn recovers_per_frame_depth_scales() {
    let scene = Scene::preset(Preset::Static, 11, 10).unwrap();
    let inputs = scene.inputs(Some(20)).unwrap();
    let (bad, sigma) = corrupted(&inputs, 5, 0.3);
    let out = refine_scene(&bad, &RefineParams::new(10), &LossWeights::default()).unwrap();
    for (t, (s, c)) in out.params.log_scales.iter().zip(&sigma).enumerate() {
        assert!((s + c).abs() < 0.02, "frame {t}: {s} vs {}", -c);
    }
    assert!(out.trace.windows(2).all(|w| w[1].report.total <= w[0].report.total));
    assert!(out.report().total < out.trace[0].report.total);
}

#[test]
fn consistent_inputs_stay_put() {
    let scene = Scene::preset(Preset::Static, 12, 6).unwrap();
    let inputs = scene.inputs(Some(15)).unwrap();
    let out = refine_scene(&inputs, &RefineParams::new(6), &LossWeights::default()).unwrap();
    assert!(out.params.log_scales.iter().all(|s| s.abs() < 1e-3), "{:?}", out.params.log_scales);
    assert!(out.params.log_focal.abs() < 1e-3);
}

#[test]
fn a_global_depth_scale_changes_nothing() {
    let scene = Scene::preset(Preset::Static, 13, 6).unwrap();
    let inputs = scene.inputs(Some(15)).unwrap();
    let (bad, _) = corrupted(&inputs, 8, 0.2);
    let params = RefineParams { max_iterations: 5, ..RefineParams::new(6) };
    let a = refine_scene(&bad, &params, &LossWeights::default()).unwrap();
    let b = refine_scene(&bad.with_scaled_depths(3.0), &params, &LossWeights::default()).unwrap();
    assert_eq!(a.trace.len(), b.trace.len());
    for (x, y) in a.params.log_scales.iter().zip(&b.params.log_scales) {
        assert!((x - y).abs() < 1e-6, "{x} vs {y}");
    }
    for (x, y) in a.trace.iter().zip(&b.trace) {
        assert!((x.report.total - y.report.total).abs() <= 1e-6 * x.report.total.abs().max(1e-12));
    }
}
