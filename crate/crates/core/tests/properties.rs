use lfms_core::epsilon_zero::beta_of_epsilon;
use lfms_core::filtering::{normalize, shape_function, systematic_resample};
use lfms_core::levy_noise::{generate_two_sided_stable, StableParams, Window};
use lfms_core::manifold::eval_f;
use lfms_core::model::fixtures::{ts1, ts1_slow_noise, TS1_MU};
use lfms_core::model::{from_transformed, simulate_full, to_transformed, Analysis};
use lfms_core::rng::rng_for;
use lfms_core::{BackwardWindow, Realization};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn paths_vanish_at_origin_and_shifts_compose(
        seed in any::<u64>(),
        alpha in 1.1f64..1.95,
        a in 0usize..50,
        b in 0usize..50,
    ) {
        let dt = 0.01;
        let p = StableParams::new(alpha, 1.0, 1).unwrap();
        let path = generate_two_sided_stable(p, Window::new(1.0, 1.0, dt), &mut rng_for(seed, &[])).unwrap();
        prop_assert_eq!(path.value(0.0).unwrap(), &[0.0][..]);
        let (ta, tb) = (a as f64 * dt, b as f64 * dt);
        let twice = path.shift(ta).unwrap().shift(tb).unwrap();
        let once = path.shift(ta + tb).unwrap();
        prop_assert_eq!(twice.value(0.0).unwrap(), vec![0.0]);
        for k in -50..=0 {
            let s = k as f64 * dt;
            prop_assert_eq!(twice.value(s).unwrap(), once.value(s).unwrap());
        }
    }

    #[test]
    fn normalized_weights_sum_to_one_and_ignore_offsets(
        log_w in prop::collection::vec(-30.0f64..30.0, 1..200),
        offset in -500.0f64..500.0,
    ) {
        let (w, ess) = normalize(&log_w);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(ess >= 1.0 - 1e-9 && ess <= log_w.len() as f64 + 1e-9);
        let shifted: Vec<f64> = log_w.iter().map(|l| l + offset).collect();
        let (w2, _) = normalize(&shifted);
        for (x, y) in w.iter().zip(&w2) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn systematic_counts_stay_within_one_of_expectation(
        log_w in prop::collection::vec(-5.0f64..5.0, 1..300),
        u0 in 0.0f64..1.0,
    ) {
        let (w, _) = normalize(&log_w);
        let idx = systematic_resample(&w, u0);
        prop_assert_eq!(idx.len(), w.len());
        prop_assert!(idx.windows(2).all(|p| p[0] <= p[1]));
        let n = w.len() as f64;
        let mut counts = vec![0usize; w.len()];
        idx.iter().for_each(|&i| counts[i] += 1);
        for (c, wi) in counts.iter().zip(&w) {
            prop_assert!((*c as f64 - n * wi).abs() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn beta_decreases_with_epsilon(e1 in 1e-5f64..0.2, e2 in 1e-5f64..0.2) {
        prop_assume!((e1 - e2).abs() > 1e-9);
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        let b_lo = beta_of_epsilon(2.0, 1.0, 1.0, lo).unwrap();
        let b_hi = beta_of_epsilon(2.0, 1.0, 1.0, hi).unwrap();
        prop_assert!(b_lo.beta < b_hi.beta);
        prop_assert!(b_lo.beta > 0.0 && b_lo.t0 < 0.0);
    }

    #[test]
    fn shape_term_decreases_in_time(eps in 0.01f64..0.5, p in 1.1f64..4.0, t in 0.0f64..3.0, dt in 0.01f64..1.0) {
        prop_assert!(shape_function(eps, p, 1.0, t + dt) <= shape_function(eps, p, 1.0, t));
        let floor = (eps / (4.0 * p)).powf(0.25);
        prop_assert!(shape_function(eps, p, 1.0, t) >= floor);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn stationary_shift_round_trips(seed in any::<u64>(), u0 in -2.0f64..2.0, v0 in -2.0f64..2.0) {
        let model = ts1(0.1);
        let dt = 0.002;
        let omega = Realization::generate(&model, &ts1_slow_noise(), 0.0, 0.5, dt, Default::default(), seed, 0).unwrap();
        let full = simulate_full(&model, &omega.fast, &omega.slow, (&[u0], &[v0]), 0.5, dt).unwrap();
        let back = from_transformed(&to_transformed(&full, &omega.zeta, &omega.varsigma).unwrap(), &omega.zeta, &omega.varsigma).unwrap();
        for k in 0..full.len() {
            prop_assert!((full.u_at(k)[0] - back.u_at(k)[0]).abs() < 1e-12);
            prop_assert!((full.v_at(k)[0] - back.v_at(k)[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn manifold_is_bounded_and_lipschitz(seed in any::<u64>(), y1 in -3.0f64..3.0, y2 in -3.0f64..3.0) {
        let model = ts1(0.1);
        let dt = 0.002;
        let window = BackwardWindow::for_model(&model, Some(TS1_MU), dt, 1e-6).unwrap().with_picard_tol(1e-10);
        let omega = Realization::generate(&model, &ts1_slow_noise(), window.t_back, 0.0, dt, Default::default(), seed, 0).unwrap();
        let f1 = eval_f(&model, &omega.zeta, &omega.varsigma, 0.0, &[y1], &window).unwrap()[0];
        let f2 = eval_f(&model, &omega.zeta, &omega.varsigma, 0.0, &[y2], &window).unwrap()[0];
        let an = Analysis::new(&model, Some(TS1_MU)).unwrap();
        prop_assert!(f1.abs() <= an.manifold_bound() + 1e-6);
        prop_assert!((f1 - f2).abs() <= an.manifold_lipschitz() * (y1 - y2).abs() + 1e-6);
    }
}
