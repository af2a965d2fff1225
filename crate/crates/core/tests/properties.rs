use jointmotion_core::diffusion::{loss_rec, loss_vel, Schedule, VarianceKind};
use jointmotion_core::metrics::{
    beat_alignment_score, beat_consistency, diversity, frechet, jaw_l1, lmk_l1, lvd, LandmarkBasis, DEFAULT_SIGMA,
};
use jointmotion_core::sampler::{blend_overlap, blend_weights, plan_windows};
use jointmotion_core::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |d| Tensor::matrix(rows, cols, d).unwrap())
}

fn faces(frames: usize) -> impl Strategy<Value = (Tensor, Tensor)> {
    (matrix(frames, 103), matrix(frames, 103))
}

fn features(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, dim), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn frechet_is_symmetric_non_negative_and_zero_on_self(a in features(12, 3), b in features(15, 3)) {
        let ab = frechet(&a, &b).unwrap();
        let ba = frechet(&b, &a).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-8 * (1.0 + ab));
        prop_assert!(frechet(&a, &a).unwrap() < 1e-6);
    }

    #[test]
    fn frechet_grows_with_mean_shift(a in features(12, 3), shift in 0.5f64..5.0) {
        let b: Vec<Vec<f64>> = a.iter().map(|v| v.iter().map(|x| x + shift).collect()).collect();
        let d = frechet(&a, &b).unwrap();
        prop_assert!((d - 3.0 * shift * shift).abs() < 1e-6 * (1.0 + d));
    }

    #[test]
    fn face_metrics_are_symmetric_non_negative_and_zero_on_self((a, b) in faces(5)) {
        let basis = LandmarkBasis::shipped().unwrap();
        for f in [jaw_l1, |x: &Tensor, y: &Tensor| lmk_l1(x, y, &LandmarkBasis::shipped().unwrap())] {
            let ab = f(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, f(&b, &a).unwrap());
            prop_assert_eq!(f(&a, &a).unwrap(), 0.0);
        }
        let v = lvd(&a, &b, &basis).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert!((v - lvd(&b, &a, &basis).unwrap()).abs() < 1e-12);
        prop_assert_eq!(lvd(&a, &a, &basis).unwrap(), 0.0);
    }

    #[test]
    fn lvd_ignores_constant_offsets((a, b) in faces(6), off in -3.0f64..3.0) {
        let basis = LandmarkBasis::shipped().unwrap();
        let shifted = a.map(|x| x + off);
        prop_assert!(lvd(&a, &shifted, &basis).unwrap() < 1e-9);
        let base = lvd(&a, &b, &basis).unwrap();
        prop_assert!((lvd(&shifted, &b, &basis).unwrap() - base).abs() < 1e-9);
    }

    #[test]
    fn beat_consistency_stays_in_unit_interval(body in matrix(60, 4), env in prop::collection::vec(0.0f64..1.0, 60)) {
        match beat_consistency(&body, &env, 30.0, DEFAULT_SIGMA) {
            Ok(s) => prop_assert!((0.0..=1.0).contains(&s)),
            Err(e) => prop_assert!(e.to_string().contains("no audio beats")),
        }
    }

    #[test]
    fn beat_score_decreases_under_uniform_shift(
        beats in prop::collection::btree_set(0u32..200, 1..8),
        step in 0.005f64..0.05,
    ) {
        let audio: Vec<f64> = beats.iter().map(|b| *b as f64 * 0.05).collect();
        let mut last = f64::INFINITY;
        for k in 0..5 {
            let kin: Vec<f64> = audio.iter().map(|t| t + k as f64 * step).collect();
            let s = beat_alignment_score(&audio, &kin, DEFAULT_SIGMA).unwrap();
            prop_assert!(s <= last + 1e-15);
            last = s;
        }
    }

    #[test]
    fn diversity_is_homogeneous(f in features(10, 4), c in 0.1f64..10.0, seed in 0u64..1000) {
        let g: Vec<Vec<f64>> = f.iter().map(|v| v.iter().map(|x| c * x).collect()).collect();
        let a = diversity(&f, 5, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = diversity(&g, 5, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!((b - c * a).abs() < 1e-9 * (1.0 + b));
    }

    #[test]
    fn blended_frames_lie_between_their_sources(prev in matrix(4, 6), next in matrix(4, 6)) {
        let out = blend_overlap(&prev, &next).unwrap();
        for i in 0..out.len() {
            let (p, n, o) = (prev.data()[i], next.data()[i], out.data()[i]);
            prop_assert!(o >= p.min(n) - 1e-15 && o <= p.max(n) + 1e-15);
        }
    }

    #[test]
    fn blend_weights_are_complementary_and_monotone(len in 1usize..12) {
        let w = blend_weights(len);
        prop_assert_eq!(w.len(), len);
        for (i, (p, n)) in w.iter().enumerate() {
            prop_assert!((p + n - 1.0).abs() < 1e-15);
            if i > 0 {
                prop_assert!(*p < w[i - 1].0);
            }
        }
    }

    #[test]
    fn window_plan_covers_exactly(frames in 34usize..2000) {
        let offs = plan_windows(frames, 34, 4).unwrap();
        prop_assert_eq!(offs[0], 0);
        prop_assert_eq!(offs.last().unwrap() + 34, frames);
        for w in offs.windows(2) {
            prop_assert!(w[1] > w[0] && w[1] - w[0] <= 30);
        }
    }

    #[test]
    fn schedule_products_decrease(steps in 1usize..600, start in 1e-5f64..1e-2, span in 0.0f64..0.3) {
        let s = Schedule::linear(steps, start, start + span).unwrap();
        let ab = s.alpha_bars();
        prop_assert!(ab[0] < 1.0 && ab[0] > 0.0);
        prop_assert!(ab.windows(2).all(|w| w[1] < w[0]));
        for t in 1..=steps {
            prop_assert!(s.variance(t, VarianceKind::Posterior) <= s.variance(t, VarianceKind::Beta) + 1e-18);
        }
    }

    #[test]
    fn noiseless_posterior_chain_returns_the_oracle_target(x0 in matrix(2, 3), xt in matrix(2, 3), steps in 1usize..60) {
        let s = Schedule::linear(steps, 1e-3, 0.2).unwrap();
        let mut x = xt;
        for t in (1..=steps).rev() {
            x = s.posterior_step(&x, &x0, t, VarianceKind::Posterior, None).unwrap();
        }
        for (a, b) in x.data().iter().zip(x0.data()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn losses_are_non_negative_and_zero_on_target(a in matrix(5, 3), b in matrix(5, 3)) {
        prop_assert!(loss_rec(&a, &b).unwrap() >= 0.0);
        prop_assert!(loss_vel(&a, &b).unwrap() >= 0.0);
        prop_assert_eq!(loss_rec(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(loss_vel(&a, &a.map(|x| x)).unwrap(), 0.0);
    }
}
