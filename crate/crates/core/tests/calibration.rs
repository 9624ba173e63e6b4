use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharedspace_core::ga::{ga_optimize, GaConfig};
use sharedspace_core::logit::{backward_eliminate, fit_multinomial_logit, newton_fit, LogitProblem};
use sharedspace_core::metrics::{ade, speed_deviation};
use sharedspace_core::{Action, Vec2};

fn track() -> impl Strategy<Value = Vec<(i64, Vec2)>> {
    prop::collection::vec((-20.0..20.0f64, -20.0..20.0f64), 2..30)
        .prop_map(|ps| ps.into_iter().enumerate().map(|(k, (x, y))| (k as i64, Vec2::new(x, y))).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn ade_and_speed_deviation_are_symmetric(a in track(), b in track()) {
        prop_assert_eq!(ade(&a, &b).unwrap(), ade(&b, &a).unwrap());
        prop_assert_eq!(speed_deviation(&a, &b, 0.5).unwrap(), speed_deviation(&b, &a, 0.5).unwrap());
    }

    #[test]
    fn ade_scales_with_the_difference_field(a in track(), b in track(), k in 0.0..10.0f64) {
        let n = a.len().min(b.len());
        let scaled: Vec<(i64, Vec2)> = a[..n].iter().zip(&b[..n]).map(|(&(f, p), &(_, q))| (f, p + (q - p) * k)).collect();
        let base = ade(&a[..n], &b[..n]).unwrap();
        let got = ade(&a[..n], &scaled).unwrap();
        prop_assert!((got - k * base).abs() <= 1e-9 * (1.0 + k * base), "{} vs {}", got, k * base);
    }
}

/// Random logit data drawn from moderate coefficients.
fn logit_data(seed: u64, rows: usize, width: usize, classes: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta: Vec<Vec<f64>> = (0..classes).map(|_| (0..=width).map(|_| rng.random_range(-0.8..0.8)).collect()).collect();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..rows {
        let row: Vec<f64> = (0..width).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w: Vec<f64> = beta
            .iter()
            .enumerate()
            .map(|(c, b)| if c == 0 { 1.0 } else { (b[0] + row.iter().zip(&b[1..]).map(|(a, b)| a * b).sum::<f64>()).exp() })
            .collect();
        let mut u = rng.random::<f64>() * w.iter().sum::<f64>();
        let mut cls = classes - 1;
        for (c, wc) in w.iter().enumerate() {
            if u < *wc {
                cls = c;
                break;
            }
            u -= wc;
        }
        x.push(row);
        y.push(cls);
    }
    (x, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn logit_gradient_matches_central_differences(seed in any::<u64>(), width in 1usize..4, classes in 2usize..4) {
        let (x, y) = logit_data(seed, 40, width, classes);
        let problem = LogitProblem::new(&x, &y, classes, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let beta: Vec<f64> = (0..problem.parameter_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = problem.gradient(&beta);
        for i in 0..beta.len() {
            let h = 1e-5;
            let (mut up, mut down) = (beta.clone(), beta.clone());
            up[i] += h;
            down[i] -= h;
            let fd = (problem.log_likelihood(&up) - problem.log_likelihood(&down)) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0), "param {}: {} vs {}", i, fd, g[i]);
        }
    }

    #[test]
    fn fitted_logit_is_first_order_optimal(seed in any::<u64>(), width in 1usize..4, classes in 2usize..4) {
        let (x, y) = logit_data(seed, 400, width, classes);
        let problem = LogitProblem::new(&x, &y, classes, 0).unwrap();
        let Ok((beta, _, _)) = newton_fit(&problem) else { return Ok(()); };
        let g = problem.gradient(&beta).into_iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        prop_assert!(g < 1e-6, "{}", g);
    }

    #[test]
    fn elimination_ends_at_a_fixed_point(seed in any::<u64>(), alpha in 0.01..0.2f64) {
        let classes = [Action::Continue, Action::Decelerate, Action::Deviate];
        let (x, y) = logit_data(seed, 300, 4, 3);
        let outcomes: Vec<Action> = y.iter().map(|&c| classes[c]).collect();
        let names: Vec<String> = (0..4).map(|j| format!("f{j}")).collect();
        let Ok(el) = backward_eliminate(&names, &x, &outcomes, Action::Continue, alpha, &[]) else { return Ok(()); };
        prop_assume!(!el.retained.is_empty());
        let cols: Vec<usize> = el.retained.iter().map(|n| names.iter().position(|m| m == n).unwrap()).collect();
        let sub: Vec<Vec<f64>> = x.iter().map(|r| cols.iter().map(|&j| r[j]).collect()).collect();
        let refit = fit_multinomial_logit(&el.retained, &sub, &outcomes, Action::Continue).unwrap();
        for j in 0..el.retained.len() {
            prop_assert!(refit.feature_p_value(j) <= alpha);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn ga_best_never_worsens(seed in any::<u64>(), genes in 1usize..5, target in -3.0..3.0f64) {
        let cfg = GaConfig {
            population_size: 20,
            max_generations: 40,
            seed,
            bounds: vec![(-5.0, 5.0); genes],
            ..GaConfig::default()
        };
        let res = ga_optimize(&cfg, &[], |batch: &[Vec<f64>]| {
            batch.iter().map(|g| g.iter().map(|v| (v - target).powi(2)).sum()).collect()
        })
        .unwrap();
        for w in res.history.windows(2) {
            prop_assert!(w[1].best <= w[0].best);
            prop_assert!(w[1].best_ever <= w[0].best_ever);
        }
        prop_assert_eq!(res.best.fitness, Some(res.history.last().unwrap().best_ever));
    }
}
