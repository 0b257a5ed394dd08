use onesim::analysis::{ols_simple, pearson, ranks, spearman, transition_matrix, welch_t};
use proptest::prelude::*;

fn distinct_pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-1e3f64..1e3, n),
            prop::collection::vec(-1e3f64..1e3, n),
        )
    })
}

fn nonconstant(x: &[f64]) -> bool {
    x.iter().any(|v| (v - x[0]).abs() > 1e-6)
}

proptest! {
    #[test]
    fn spearman_invariant_under_monotone_maps((x, y) in distinct_pairs()) {
        prop_assume!(nonconstant(&x) && nonconstant(&y));
        let base = spearman(&x, &y).unwrap().estimate;
        let x2: Vec<f64> = x.iter().map(|v| (v / 500.0).exp()).collect();
        let y2: Vec<f64> = y.iter().map(|v| 3.0 * v - 7.0).collect();
        let mapped = spearman(&x2, &y2).unwrap().estimate;
        prop_assert!((base - mapped).abs() < 1e-9, "{base} vs {mapped}");
        let flipped: Vec<f64> = y.iter().map(|v| -v).collect();
        prop_assert!((spearman(&x, &flipped).unwrap().estimate + base).abs() < 1e-9);
    }

    #[test]
    fn pearson_is_bounded_and_symmetric((x, y) in distinct_pairs()) {
        prop_assume!(nonconstant(&x) && nonconstant(&y));
        let r = pearson(&x, &y).unwrap().estimate;
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        prop_assert!((r - pearson(&y, &x).unwrap().estimate).abs() < 1e-12);
    }

    #[test]
    fn ranks_average_ties(x in prop::collection::vec(0u8..5, 1..30)) {
        let xs: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let r = ranks(&xs);
        let n = xs.len() as f64;
        prop_assert!((r.iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
        for i in 0..xs.len() {
            for j in 0..xs.len() {
                if xs[i] == xs[j] {
                    prop_assert_eq!(r[i], r[j]);
                } else if xs[i] < xs[j] {
                    prop_assert!(r[i] < r[j]);
                }
            }
        }
    }

    #[test]
    fn welch_t_is_antisymmetric((x, y) in distinct_pairs()) {
        prop_assume!(nonconstant(&x) && nonconstant(&y));
        let a = welch_t(&x, &y).unwrap();
        let b = welch_t(&y, &x).unwrap();
        prop_assert!((a.estimate + b.estimate).abs() < 1e-9);
        prop_assert_eq!(a.p_value.map(|p| (p * 1e9).round()), b.p_value.map(|p| (p * 1e9).round()));
        let p = a.p_value.unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn ols_recovers_exact_lines(x in prop::collection::vec(-100f64..100.0, 3..30), a in -5f64..5.0, b in -5f64..5.0) {
        prop_assume!(nonconstant(&x) && b.abs() > 1e-3);
        let y: Vec<f64> = x.iter().map(|v| a + b * v).collect();
        let fit = ols_simple(&x, &y).unwrap();
        prop_assert!((fit.slope - b).abs() < 1e-6);
        prop_assert!((fit.intercept - a).abs() < 1e-6);
        prop_assert!((fit.r_squared - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ols_r2_is_squared_beta((x, y) in distinct_pairs()) {
        prop_assume!(nonconstant(&x) && nonconstant(&y));
        let fit = ols_simple(&x, &y).unwrap();
        prop_assert!((fit.r_squared - fit.beta_standardized.powi(2)).abs() < 1e-12);
        prop_assert!((fit.beta_standardized - pearson(&x, &y).unwrap().estimate).abs() < 1e-12);
    }

    #[test]
    fn transition_rows_are_stochastic(series in prop::collection::vec(prop::collection::vec(0usize..4, 10), 1..12)) {
        let m = transition_matrix(&series, 4, 5).unwrap();
        let total: u64 = m.counts.iter().flatten().sum();
        prop_assert_eq!(total as usize, series.len() * 5);
        for (row, counts) in m.rows.iter().zip(&m.counts) {
            match row {
                Some(p) => prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12),
                None => prop_assert!(counts.iter().all(|&c| c == 0)),
            }
        }
    }
}

#[test]
fn degenerate_inputs_are_errors() {
    assert!(spearman(&[1.0], &[2.0]).is_err());
    assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    assert!(welch_t(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    assert!(transition_matrix(&[vec![0, 9]], 3, 1).is_err());
}
