use serde::{Deserialize, Serialize};

use crate::error::{NlrError, Result};
use crate::linalg::median;

/// Robust residual scale estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleVariant {
    /// `1.4826 · med|r − med r|`.
    Mad,
    /// `1.1926 · med_i med_j |r_i − r_j|`.
    KpsMedMed,
    /// `2.2219 · {|r_i − r_j|; i < j}_(l)` with `l = C(⌊n/2⌋+1, 2)`.
    KpsOrderStat,
}

pub fn robust_scale(residuals: &[f64], variant: ScaleVariant) -> Result<f64> {
    let n = residuals.len();
    if n < 2 {
        return Err(NlrError::InvalidArgument(format!(
            "robust scale needs at least 2 residuals, got {n}"
        )));
    }
    let s = match variant {
        ScaleVariant::Mad => {
            let m = median(residuals);
            let dev: Vec<f64> = residuals.iter().map(|r| (r - m).abs()).collect();
            1.4826 * median(&dev)
        }
        ScaleVariant::KpsMedMed => {
            let inner: Vec<f64> = residuals
                .iter()
                .map(|ri| {
                    let d: Vec<f64> = residuals.iter().map(|rj| (ri - rj).abs()).collect();
                    median(&d)
                })
                .collect();
            1.1926 * median(&inner)
        }
        ScaleVariant::KpsOrderStat => {
            let mut d = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in i + 1..n {
                    d.push((residuals[i] - residuals[j]).abs());
                }
            }
            let h = n / 2 + 1;
            let l = h * (h - 1) / 2;
            let (_, kth, _) = d.select_nth_unstable_by(l - 1, f64::total_cmp);
            2.2219 * *kth
        }
    };
    if !(s > 0.0) {
        return Err(NlrError::DegenerateScale);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mad_example() {
        let s = robust_scale(&[1.0, 2.0, 3.0, 4.0, 5.0], ScaleVariant::Mad).unwrap();
        assert!((s - 1.4826).abs() < 1e-15);
    }

    #[test]
    fn degenerate() {
        for v in [ScaleVariant::Mad, ScaleVariant::KpsMedMed, ScaleVariant::KpsOrderStat] {
            assert_eq!(robust_scale(&[2.0; 6], v), Err(NlrError::DegenerateScale));
        }
        assert!(robust_scale(&[1.0], ScaleVariant::Mad).is_err());
    }

    #[test]
    fn order_stat_small() {
        let s = robust_scale(&[0.0, 1.0, 3.0], ScaleVariant::KpsOrderStat).unwrap();
        assert!((s - 2.2219).abs() < 1e-15);
    }

    #[test]
    fn order_stat_enumeration() {
        // n = 6: l = C(4, 2) = 6 → sixth smallest pairwise distance
        let r: [f64; 6] = [0.3, -1.2, 2.5, 0.9, -0.4, 4.0];
        let mut d = vec![];
        for i in 0..6 {
            for j in i + 1..6 {
                d.push((r[i] - r[j]).abs());
            }
        }
        d.sort_by(f64::total_cmp);
        let s = robust_scale(&r, ScaleVariant::KpsOrderStat).unwrap();
        assert!((s - 2.2219 * d[5]).abs() < 1e-15);
    }

    #[test]
    fn med_med_small() {
        // inner medians: (1, 1, 2) → outer median 1
        let s = robust_scale(&[0.0, 1.0, 3.0], ScaleVariant::KpsMedMed).unwrap();
        assert!((s - 1.1926).abs() < 1e-15);
    }
}
