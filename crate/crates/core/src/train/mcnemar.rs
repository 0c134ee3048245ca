use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// Instances system A got right and B got wrong.
    pub b: u64,
    /// Instances system A got wrong and B got right.
    pub c: u64,
    pub statistic: f64,
    pub p_value: f64,
}

/// Continuity-corrected statistic `(|b − c| − 1)² / (b + c)` with its
/// one-degree-of-freedom chi-square tail. No discordant pairs gives `p = 1`.
pub fn mcnemar_counts(b: u64, c: u64) -> McNemar {
    if b + c == 0 {
        return McNemar {
            b,
            c,
            statistic: 0.0,
            p_value: 1.0,
        };
    }
    let diff = b.abs_diff(c) as f64 - 1.0;
    let statistic = diff * diff / (b + c) as f64;
    McNemar {
        b,
        c,
        statistic,
        p_value: erfc((statistic / 2.0).sqrt()),
    }
}

pub fn mcnemar<T: PartialEq>(pred_a: &[T], pred_b: &[T], gold: &[T]) -> Result<McNemar> {
    if pred_a.len() != gold.len() || pred_b.len() != gold.len() {
        return Err(Error::invalid(format!(
            "prediction lengths {} and {} against {} gold labels",
            pred_a.len(),
            pred_b.len(),
            gold.len()
        )));
    }
    let (mut b, mut c) = (0, 0);
    for ((a, bb), g) in pred_a.iter().zip(pred_b).zip(gold) {
        match (a == g, bb == g) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(mcnemar_counts(b, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_two() {
        let m = mcnemar_counts(10, 2);
        assert!((m.statistic - 49.0 / 12.0).abs() < 1e-12);
        assert!((m.p_value - 0.0433).abs() < 1e-3);
    }

    #[test]
    fn equal_counts() {
        for b in 1..20 {
            let m = mcnemar_counts(b, b);
            assert!((m.statistic - 1.0 / (2.0 * b as f64)).abs() < 1e-12);
            assert!(m.p_value > 0.05);
        }
    }

    #[test]
    fn identical_predictions() {
        let g = [1, 0, 1, 1];
        let m = mcnemar(&[1, 1, 0, 1], &[1, 1, 0, 1], &g).unwrap();
        assert_eq!((m.b, m.c, m.p_value), (0, 0, 1.0));
        assert!(mcnemar(&[1], &[1, 0], &[1]).is_err());
    }

    #[test]
    fn zero_difference_exceeds_unit_difference() {
        // the continuity correction makes |b − c| = 0 score above |b − c| = 1
        assert!(mcnemar_counts(5, 5).statistic > mcnemar_counts(6, 5).statistic);
    }

    #[test]
    fn symmetric_and_monotone() {
        for total in 2..40u64 {
            let mut last = f64::INFINITY;
            for b in total / 2 + 1..=total {
                let c = total - b;
                let m = mcnemar_counts(b, c);
                assert_eq!(m.statistic, mcnemar_counts(c, b).statistic);
                assert!(m.p_value <= last + 1e-15);
                last = m.p_value;
            }
        }
    }
}
