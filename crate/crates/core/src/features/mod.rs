//! Haar-then-PCA embedding of noise histograms.

mod eigen;
mod pca;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::data::NoiseHistogram;
use crate::{Error, Result};

pub use pca::{fit_pca, PcaModel, DEFAULT_VARIANCE_TARGET};

/// Coefficients of a full orthonormal Haar decomposition, ordered
/// `[scaling, coarsest detail, ..., finest details]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaarCoefficients {
    pub coefficients: Vec<f64>,
}

fn check_power_of_two(len: usize) -> Result<()> {
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::Length {
            expected: len.max(1).next_power_of_two(),
            actual: len,
        });
    }
    Ok(())
}

/// Full multi-level orthonormal Haar transform. The input length must be a
/// power of two (8 for the standard histogram layout).
pub fn haar_transform(signal: &[f64]) -> Result<HaarCoefficients> {
    check_power_of_two(signal.len())?;
    let mut work = signal.to_vec();
    let mut scratch = vec![0.0; signal.len()];
    let mut n = signal.len();
    while n > 1 {
        let half = n / 2;
        for i in 0..half {
            let (a, b) = (work[2 * i], work[2 * i + 1]);
            scratch[i] = (a + b) * std::f64::consts::FRAC_1_SQRT_2;
            scratch[half + i] = (a - b) * std::f64::consts::FRAC_1_SQRT_2;
        }
        work[..n].copy_from_slice(&scratch[..n]);
        n = half;
    }
    Ok(HaarCoefficients { coefficients: work })
}

pub fn inverse_haar(coeffs: &HaarCoefficients) -> Result<Vec<f64>> {
    let c = &coeffs.coefficients;
    check_power_of_two(c.len())?;
    let mut work = c.clone();
    let mut scratch = vec![0.0; c.len()];
    let mut n = 1;
    while n < c.len() {
        for i in 0..n {
            let (a, d) = (work[i], work[n + i]);
            scratch[2 * i] = (a + d) * std::f64::consts::FRAC_1_SQRT_2;
            scratch[2 * i + 1] = (a - d) * std::f64::consts::FRAC_1_SQRT_2;
        }
        work[..2 * n].copy_from_slice(&scratch[..2 * n]);
        n *= 2;
    }
    Ok(work)
}

/// PCA embedding of one slot's histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub room_id: String,
    pub slot_start: DateTime<Utc>,
    pub values: Vec<f64>,
}

/// Haar coefficients of the frequency-normalised histogram.
pub fn histogram_haar(hist: &NoiseHistogram) -> Result<Vec<f64>> {
    Ok(haar_transform(&hist.frequencies()?)?.coefficients)
}

/// Embed histograms, fitting a fresh PCA model unless one is supplied.
pub fn featurize_slots(
    histograms: &[NoiseHistogram],
    model: Option<&PcaModel>,
) -> Result<(PcaModel, Vec<FeatureVector>)> {
    let coeffs: Vec<Vec<f64>> = histograms.iter().map(histogram_haar).collect::<Result<_>>()?;
    let model = match model {
        Some(m) => m.clone(),
        None => fit_pca(&coeffs, DEFAULT_VARIANCE_TARGET)?,
    };
    let features = histograms
        .iter()
        .zip(&coeffs)
        .map(|(h, c)| {
            Ok(FeatureVector {
                room_id: h.room_id.clone(),
                slot_start: h.slot_start,
                values: model.project(c)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((model, features))
}
