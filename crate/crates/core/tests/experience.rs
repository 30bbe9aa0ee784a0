use dynexp::dataset::{render_run, sample_meta, Family, ScenarioConfig};
use dynexp::experience::{
    dynamic_image, dynamic_image_coefficients, median_image, pool_appearance, pool_masks, pool_masks_with_argmax,
    summarize_run, MaskTensor, SummaryStack,
};
use dynexp::render::{Image, Planes};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Closed form through harmonic numbers, 1-based:
/// `a_t = 2(T - t + 1) - (T + 1)(H_T - H_{t-1})`.
fn harmonic_alpha(t_len: usize) -> Vec<f64> {
    let h: Vec<f64> = (0..=t_len)
        .scan(0.0, |acc, k| {
            if k > 0 {
                *acc += 1.0 / k as f64;
            }
            Some(*acc)
        })
        .collect();
    let tf = t_len as f64;
    (1..=t_len)
        .map(|t| 2.0 * (tf - t as f64 + 1.0) - (tf + 1.0) * (h[t_len] - h[t - 1]))
        .collect()
}

fn random_frames(rng: &mut ChaCha8Rng, n: usize, h: usize, w: usize) -> Vec<Image> {
    (0..n)
        .map(|_| {
            let mut img = Image::filled(h, w, [0.0; 3]);
            img.data.iter_mut().for_each(|v| *v = rng.random());
            img
        })
        .collect()
}

#[test]
fn coefficients_match_harmonic_closed_form() {
    for t in 1..=500 {
        let a = dynamic_image_coefficients(t).unwrap();
        let b = harmonic_alpha(t);
        let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9 * scale, "T={t}: {x} vs {y}");
        }
        let sum: f64 = a.iter().sum();
        assert!(sum.abs() <= 1e-9 * scale, "T={t}: sum {sum}");
    }
    assert!(dynamic_image_coefficients(0).is_err());
}

#[test]
fn rendered_run_matches_naive_weighted_sum() {
    let cfg = ScenarioConfig::new(Family::R4);
    let sample = sample_meta(&cfg, 1, 60, 17).unwrap();
    let frames = render_run(&sample.scenario, &sample.experience_runs[0], &cfg.palette).unwrap();
    assert_eq!(frames.len(), 60);
    let alpha = harmonic_alpha(60);
    let got = dynamic_image(&frames).unwrap();
    for idx in 0..got.data.len() {
        let naive: f64 = frames.iter().zip(&alpha).map(|(f, a)| a * f.data[idx]).sum();
        assert!((got.data[idx] - naive).abs() <= 1e-9, "index {idx}");
    }
}

#[test]
fn static_video_has_zero_dynamic_image() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = random_frames(&mut rng, 1, 8, 8).remove(0);
    for t in [1, 2, 7, 60] {
        let d = dynamic_image(&vec![f.clone(); t]).unwrap();
        assert!(d.data.iter().all(|v| v.abs() < 1e-9));
        assert_eq!(median_image(&vec![f.clone(); t]).unwrap(), f);
    }
}

#[test]
fn dynamic_image_is_linear_in_frames() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_frames(&mut rng, 9, 6, 5);
    let y = random_frames(&mut rng, 9, 6, 5);
    let (a, b) = (0.7, -1.3);
    let mix: Vec<Image> = x
        .iter()
        .zip(&y)
        .map(|(p, q)| {
            let mut m = p.clone();
            for (v, w) in m.data.iter_mut().zip(&q.data) {
                *v = a * *v + b * w;
            }
            m
        })
        .collect();
    let dx = dynamic_image(&x).unwrap();
    let dy = dynamic_image(&y).unwrap();
    let dm = dynamic_image(&mix).unwrap();
    for i in 0..dm.data.len() {
        assert!((dm.data[i] - (a * dx.data[i] + b * dy.data[i])).abs() < 1e-9);
    }
}

#[test]
fn reversing_time_changes_the_dynamic_image() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let frames = random_frames(&mut rng, 12, 4, 4);
    let mut rev = frames.clone();
    rev.reverse();
    let a = dynamic_image(&frames).unwrap();
    let b = dynamic_image(&rev).unwrap();
    assert!(a.data.iter().zip(&b.data).any(|(x, y)| (x - y).abs() > 1e-6));
    // The median ignores order.
    assert_eq!(median_image(&frames).unwrap(), median_image(&rev).unwrap());
}

#[test]
fn summary_round_trips_through_raw_bytes() {
    let cfg = ScenarioConfig::desk(Family::C);
    let sample = sample_meta(&cfg, 2, 10, 9).unwrap();
    let frames = render_run(&sample.scenario, &sample.experience_runs[1], &cfg.palette).unwrap();
    let stack = summarize_run(&frames).unwrap();
    assert_eq!(stack.planes().channels, SummaryStack::CHANNELS);
    let mut bytes = Vec::new();
    stack.write_raw(&mut bytes).unwrap();
    let back = SummaryStack::read_raw(bytes.as_slice()).unwrap();
    let rounded: Vec<f64> = stack.planes().data.iter().map(|v| *v as f32 as f64).collect();
    assert_eq!(back.planes().data, rounded);
    assert!(SummaryStack::new(Planes::zeros(3, 4, 4)).is_err());
}

fn mask(h: usize, w: usize, v: Vec<f64>) -> MaskTensor {
    MaskTensor { height: h, width: w, data: v }
}

proptest! {
    #[test]
    fn mask_pooling_is_an_order_free_upper_bound(
        vals in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 12), 1..6),
        rot in 0usize..6,
    ) {
        let masks: Vec<MaskTensor> = vals.iter().map(|v| mask(3, 4, v.clone())).collect();
        let (pooled, arg) = pool_masks_with_argmax(&masks).unwrap();
        for (i, p) in pooled.data.iter().enumerate() {
            prop_assert!(masks.iter().all(|m| m.data[i] <= *p));
            prop_assert_eq!(masks[arg[i]].data[i], *p);
        }
        let mut shuffled = masks.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        prop_assert_eq!(pool_masks(&shuffled).unwrap(), pooled.clone());
        prop_assert_eq!(pool_masks(&masks[..1]).unwrap(), masks[0].clone());
    }

    #[test]
    fn appearance_pooling_keeps_the_most_energetic_plane(
        vals in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3 * 4), 1..5),
    ) {
        let tensors: Vec<Planes> = vals.iter().map(|v| Planes::from_vec(3, 2, 2, v.clone()).unwrap()).collect();
        let pooled = pool_appearance(&tensors).unwrap();
        for c in 0..3 {
            let energy = |p: &[f64]| p.iter().map(|v| v * v).sum::<f64>();
            let best = tensors.iter().map(|t| energy(t.plane(c))).fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(energy(pooled.plane(c)), best);
            prop_assert!(tensors.iter().any(|t| t.plane(c) == pooled.plane(c)));
        }
    }
}

#[test]
fn pooling_rejects_bad_input() {
    assert!(pool_masks(&[]).is_err());
    assert!(pool_masks(&[MaskTensor::zeros(2, 2), MaskTensor::zeros(2, 3)]).is_err());
    assert!(pool_appearance(&[Planes::zeros(3, 2, 2), Planes::zeros(3, 2, 3)]).is_err());
}
