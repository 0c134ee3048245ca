//! Class-embedding metric losses and the two non-softmax decision rules.

use crate::corpus::RiskLabel;
use crate::error::{Error, Result};
use crate::nn::Tensor2;

/// Hinge value and its gradients with respect to the representation and
/// the positive and negative class embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricLoss {
    pub loss: f64,
    pub grad_x: Vec<f64>,
    pub grad_positive: Vec<f64>,
    pub grad_negative: Vec<f64>,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `max(0, ‖x − C_p‖ − ‖x − C_n‖ + margin)` with gradients.
///
/// At zero distance the norm's subgradient 0 is used.
pub fn metric_hinge(x: &[f64], classes: &Tensor2, positive: usize, negative: usize, margin: f64) -> Result<MetricLoss> {
    if positive == negative {
        return Err(Error::invalid(format!(
            "positive and negative class are both {positive}"
        )));
    }
    if positive >= classes.rows() || negative >= classes.rows() {
        return Err(Error::invalid(format!(
            "class index out of range for {} classes",
            classes.rows()
        )));
    }
    if x.len() != classes.cols() {
        return Err(Error::Shape(format!(
            "representation of {} dims against {}-dim classes",
            x.len(),
            classes.cols()
        )));
    }
    let cp = classes.row(positive);
    let cn = classes.row(negative);
    let dp = distance(x, cp);
    let dn = distance(x, cn);
    let value = dp - dn + margin;
    let d = x.len();
    if value <= 0.0 {
        return Ok(MetricLoss {
            loss: 0.0,
            grad_x: vec![0.0; d],
            grad_positive: vec![0.0; d],
            grad_negative: vec![0.0; d],
        });
    }
    let unit = |c: &[f64], dist: f64| -> Vec<f64> {
        if dist == 0.0 {
            vec![0.0; d]
        } else {
            x.iter().zip(c).map(|(a, b)| (a - b) / dist).collect()
        }
    };
    let up = unit(cp, dp);
    let un = unit(cn, dn);
    Ok(MetricLoss {
        loss: value,
        grad_x: up.iter().zip(&un).map(|(a, b)| a - b).collect(),
        grad_positive: up.iter().map(|v| -v).collect(),
        grad_negative: un,
    })
}

/// Margin `alpha` between the correct class `p` and a negative class `n`.
pub fn class_metric_loss(x: &[f64], p: usize, n: usize, classes: &Tensor2, alpha: f64) -> Result<f64> {
    Ok(metric_hinge(x, classes, p, n, alpha)?.loss)
}

/// Margin scaled by the rank gap, `alpha·|p − n|`.
pub fn class_metric_ordinal_loss(x: &[f64], p: usize, n: usize, classes: &Tensor2, alpha: f64) -> Result<f64> {
    Ok(metric_hinge(x, classes, p, n, ordinal_margin(p, n, alpha))?.loss)
}

pub fn ordinal_margin(p: usize, n: usize, alpha: f64) -> f64 {
    alpha * p.abs_diff(n) as f64
}

/// Nearest class embedding by Euclidean distance; ties go to the lower severity.
pub fn metric_classify(x: &[f64], classes: &Tensor2) -> RiskLabel {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for j in 0..classes.rows().min(RiskLabel::COUNT) {
        let d = distance(x, classes.row(j));
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    RiskLabel::from_index(best).expect("index below class count")
}

/// Rounds a regression output to the nearest label, halves away from zero,
/// clamped to the label range.
pub fn mse_classify(y: f64) -> RiskLabel {
    let r = y.round().clamp(0.0, (RiskLabel::COUNT - 1) as f64);
    RiskLabel::from_index(r as usize).expect("clamped into range")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes(rows: &[Vec<f64>]) -> Tensor2 {
        Tensor2::from_rows(rows).unwrap()
    }

    #[test]
    fn hinge_inactive_and_active() {
        // ‖X−C_p‖ = 0.5, ‖X−C_n‖ = 2.0
        let c = classes(&[vec![0.5, 0.0], vec![2.0, 0.0]]);
        assert_eq!(class_metric_loss(&[0.0, 0.0], 0, 1, &c, 1.0).unwrap(), 0.0);
        // swapped roles: 2.0 − 0.5 + 1.0
        assert!((class_metric_loss(&[0.0, 0.0], 1, 0, &c, 1.0).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn zero_distance_case() {
        let c = classes(&[vec![1.0, 1.0], vec![1.0, 1.3]]);
        let l = class_metric_loss(&[1.0, 1.0], 0, 1, &c, 0.5).unwrap();
        assert!((l - 0.2).abs() < 1e-12);
        let l = class_metric_loss(&[1.0, 1.0], 0, 1, &c, 0.1).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn same_class_is_an_error() {
        let c = classes(&[vec![0.0], vec![1.0]]);
        assert!(class_metric_loss(&[0.0], 1, 1, &c, 1.0).is_err());
        assert!(class_metric_ordinal_loss(&[0.0], 0, 0, &c, 1.0).is_err());
        assert!(class_metric_loss(&[0.0, 1.0], 0, 1, &c, 1.0).is_err());
    }

    #[test]
    fn ordinal_margin_scales_with_rank_gap() {
        assert_eq!(ordinal_margin(0, 3, 0.5), 1.5);
        let c = classes(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let x = [0.7];
        assert_eq!(
            class_metric_ordinal_loss(&x, 1, 2, &c, 0.4).unwrap(),
            class_metric_loss(&x, 1, 2, &c, 0.4).unwrap()
        );
        // equidistant representation: loss equals the margin
        let x = [1.5];
        assert!((class_metric_ordinal_loss(&x, 1, 2, &c, 0.3).unwrap() - 0.3).abs() < 1e-15);
        let c = classes(&[vec![-1.0], vec![0.0], vec![0.0], vec![1.0]]);
        assert!((class_metric_ordinal_loss(&[0.0], 0, 3, &c, 0.5).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn metric_classify_rules() {
        let c = classes(&[vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 5.0], vec![9.0, 9.0]]);
        assert_eq!(metric_classify(&[0.0, 5.0], &c), RiskLabel::Red);
        assert_eq!(metric_classify(&[1.0, 0.0], &c), RiskLabel::Green);
    }

    #[test]
    fn mse_rounding() {
        assert_eq!(mse_classify(2.6), RiskLabel::Crisis);
        assert_eq!(mse_classify(-0.4), RiskLabel::Green);
        assert_eq!(mse_classify(1.5), RiskLabel::Red);
        assert_eq!(mse_classify(0.5), RiskLabel::Amber);
        assert_eq!(mse_classify(17.0), RiskLabel::Crisis);
        assert_eq!(mse_classify(f64::NAN), RiskLabel::Green);
    }
}
