use serde::{Deserialize, Serialize};

use super::eigen::symmetric_eigen;
use crate::{Error, Result};

pub const DEFAULT_VARIANCE_TARGET: f64 = 0.95;

/// Principal components retained to reach a target explained variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `n` orthonormal rows, ordered by decreasing variance.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub n: usize,
    /// Sum of all covariance eigenvalues, retained or not.
    pub total_variance: f64,
    pub variance_target: f64,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| v / self.total_variance)
            .collect()
    }

    /// `components · (x − mean)`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Length {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect())
    }

    /// Map projected values back into input space.
    pub fn reconstruct(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.n {
            return Err(Error::Length {
                expected: self.n,
                actual: z.len(),
            });
        }
        let mut out = self.mean.clone();
        for (c, &w) in self.components.iter().zip(z) {
            for (o, ci) in out.iter_mut().zip(c) {
                *o += w * ci;
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: PcaModel = serde_json::from_str(s)?;
        if m.components.len() != m.n
            || m.explained_variance.len() != m.n
            || m.components.iter().any(|c| c.len() != m.mean.len())
        {
            return Err(Error::InvalidConfig("inconsistent PCA model dimensions".into()));
        }
        Ok(m)
    }
}

/// Sample covariance (1/(m−1) scaling) and column means.
pub(crate) fn covariance(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let m = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for (acc, x) in mean.iter_mut().zip(r) {
            *acc += x;
        }
    }
    mean.iter_mut().for_each(|x| *x /= m as f64);
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            let di = r[i] - mean[i];
            for j in i..d {
                cov[i][j] += di * (r[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= (m - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    (mean, cov)
}

/// Fit PCA on row vectors, keeping the smallest number of components whose
/// cumulative explained-variance ratio reaches `variance_target`.
pub fn fit_pca(rows: &[Vec<f64>], variance_target: f64) -> Result<PcaModel> {
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "PCA needs at least 2 rows, got {}",
            rows.len()
        )));
    }
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "variance target must lie in (0, 1], got {variance_target}"
        )));
    }
    let d = rows[0].len();
    if d == 0 {
        return Err(Error::InsufficientData("PCA rows are empty".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::Length {
            expected: d,
            actual: r.len(),
        });
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Domain("PCA input contains non-finite values".into()));
    }

    let (mean, cov) = covariance(rows);
    let (values, vectors) = symmetric_eigen(&cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));

    let values: Vec<f64> = order.iter().map(|&k| values[k].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    let scale: f64 = mean.iter().map(|m| m * m).sum::<f64>().max(1.0);
    if total <= f64::EPSILON * scale {
        return Err(Error::Degenerate("zero total variance".into()));
    }

    let mut n = d;
    let mut cumulative = 0.0;
    for (i, v) in values.iter().enumerate() {
        cumulative += v;
        if cumulative / total >= variance_target {
            n = i + 1;
            break;
        }
    }

    let components = order[..n]
        .iter()
        .map(|&k| {
            let mut c: Vec<f64> = (0..d).map(|i| vectors[i][k]).collect();
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            c.iter_mut().for_each(|x| *x /= norm);
            // Sign convention: largest-magnitude entry positive.
            let lead = c
                .iter()
                .enumerate()
                .fold(0, |best, (i, x)| if x.abs() > c[best].abs() { i } else { best });
            if c[lead] < 0.0 {
                c.iter_mut().for_each(|x| *x = -*x);
            }
            c
        })
        .collect();

    Ok(PcaModel {
        mean,
        components,
        explained_variance: values[..n].to_vec(),
        n,
        total_variance: total,
        variance_target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line_points() -> Vec<Vec<f64>> {
        let dir = [1.0, 2.0, -1.0, 0.5, 0.0, 3.0, 1.0, -2.0];
        (0..10)
            .map(|t| dir.iter().map(|d| d * t as f64 + 0.25).collect())
            .collect()
    }

    #[test]
    fn rank_one_data_keeps_one_component() {
        let m = fit_pca(&line_points(), 0.95).unwrap();
        assert_eq!(m.n, 1);
        assert!((m.explained_variance_ratio()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn isotropic_data_keeps_all_components() {
        // ±e_i for every axis: covariance is a multiple of identity.
        let mut rows = Vec::new();
        for i in 0..8 {
            for s in [-1.0, 1.0] {
                let mut r = vec![0.0; 8];
                r[i] = s;
                rows.push(r);
            }
        }
        let m = fit_pca(&rows, 0.95).unwrap();
        assert_eq!(m.n, 8);
        for v in &m.explained_variance {
            assert!((v - 2.0 / 15.0).abs() < 1e-12);
        }
    }

    #[test]
    fn project_mean_is_zero_and_reconstructs_rank_one() {
        let rows = line_points();
        let m = fit_pca(&rows, 0.95).unwrap();
        assert!(m.project(&m.mean).unwrap().iter().all(|z| z.abs() < 1e-12));
        for r in &rows {
            let back = m.reconstruct(&m.project(r).unwrap()).unwrap();
            for (a, b) in back.iter().zip(r) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn three_point_line_projection_is_signed_distance() {
        // Points (0,0), (3,4), (6,8): mean (3,4), unit direction (0.6, 0.8).
        let rows = vec![vec![0.0, 0.0], vec![3.0, 4.0], vec![6.0, 8.0]];
        let m = fit_pca(&rows, 0.95).unwrap();
        assert_eq!(m.n, 1);
        assert!((m.components[0][0] - 0.6).abs() < 1e-12);
        assert!((m.components[0][1] - 0.8).abs() < 1e-12);
        assert!((m.project(&rows[0]).unwrap()[0] + 5.0).abs() < 1e-12);
        assert!((m.project(&rows[2]).unwrap()[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            fit_pca(&[vec![1.0; 8]], 0.95),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            fit_pca(&[vec![1.5; 8], vec![1.5; 8]], 0.95),
            Err(Error::Degenerate(_))
        ));
        assert!(fit_pca(&[vec![1.0, 2.0], vec![1.0]], 0.95).is_err());
        let m = fit_pca(&line_points(), 0.95).unwrap();
        assert!(matches!(m.project(&[1.0]), Err(Error::Length { .. })));
    }

    #[test]
    fn components_orthonormal_and_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..8).map(|j| rng.random::<f64>() * (j + 1) as f64).collect())
            .collect();
        let m = fit_pca(&rows, 1.0).unwrap();
        for i in 0..m.n {
            for j in 0..m.n {
                let dot: f64 = m.components[i].iter().zip(&m.components[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9, "({i},{j}) {dot}");
            }
        }
        assert!(m.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn json_round_trip() {
        let m = fit_pca(&line_points(), 0.95).unwrap();
        assert_eq!(PcaModel::from_json(&m.to_json().unwrap()).unwrap(), m);
    }
}
