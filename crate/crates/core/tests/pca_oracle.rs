use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use soundocc::features::fit_pca;

fn oracle_eigenvalues(rows: &[Vec<f64>]) -> Vec<f64> {
    let m = rows.len();
    let d = rows[0].len();
    let x = DMatrix::from_fn(m, d, |i, j| rows[i][j]);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(m, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (m as f64 - 1.0);
    let mut values: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigenvalues_match_nalgebra(
        rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 8..40),
        target in 0.5f64..0.99,
    ) {
        let model = fit_pca(&rows, target).unwrap();
        let expected = oracle_eigenvalues(&rows);
        let total: f64 = expected.iter().sum();
        prop_assert!((model.total_variance - total).abs() <= 1e-9 * total.max(1.0));
        for (a, b) in model.explained_variance.iter().zip(&expected) {
            prop_assert!((a - b).abs() <= 1e-8 * total.max(1.0), "{a} vs {b}");
        }
        let mut cumulative = 0.0;
        let n = expected
            .iter()
            .position(|v| {
                cumulative += v / total;
                cumulative >= target - 1e-12
            })
            .unwrap()
            + 1;
        prop_assert_eq!(model.n, n);
    }
}
