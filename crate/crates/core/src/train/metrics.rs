//! Shared-task scoring: per-class precision/recall/F1 and the grouped
//! macro-F1 views of the four-level triage scale.

use std::fmt::Write as _;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::corpus::RiskLabel;
use crate::error::{Error, Result};

pub type Exact = Ratio<u64>;

fn ratio(n: u64, d: u64) -> Exact {
    if d == 0 {
        Exact::from_integer(0)
    } else {
        Exact::new(n, d)
    }
}

pub fn to_f64(r: Exact) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prf<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

impl Prf<Exact> {
    /// Undefined ratios are 0.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        Self {
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
        }
    }

    pub fn to_f64(self) -> Prf<f64> {
        Prf {
            precision: to_f64(self.precision),
            recall: to_f64(self.recall),
            f1: to_f64(self.f1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassScore<T> {
    pub label: String,
    pub support: u64,
    #[serde(flatten)]
    pub scores: Prf<T>,
}

/// Two-way collapse of the label scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryGroup<T> {
    /// Mean F1 of the negative and the positive side.
    pub macro_f1: T,
    pub positive_f1: T,
    pub accuracy: T,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report<T> {
    pub count: u64,
    /// `confusion[gold][pred]`.
    pub confusion: Vec<Vec<u64>>,
    pub classes: Vec<ClassScore<T>>,
    /// Mean F1 over amber, red and crisis.
    pub non_green_f1: T,
    /// Green against everything else.
    pub flagged: BinaryGroup<T>,
    /// Green and amber against red and crisis.
    pub urgent: BinaryGroup<T>,
    pub all_f1: T,
    pub all_accuracy: T,
}

pub type ExactReport = Report<Exact>;
pub type EvalReport = Report<f64>;

fn confusion<T: Copy>(gold: &[T], pred: &[T], classes: usize, index: impl Fn(T) -> usize) -> Result<Vec<Vec<u64>>> {
    if gold.len() != pred.len() {
        return Err(Error::invalid(format!(
            "{} gold labels against {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    let mut m = vec![vec![0u64; classes]; classes];
    for (&g, &p) in gold.iter().zip(pred) {
        m[index(g)][index(p)] += 1;
    }
    Ok(m)
}

fn class_counts(m: &[Vec<u64>], c: usize) -> (u64, u64, u64) {
    let tp = m[c][c];
    let fp = (0..m.len()).map(|g| m[g][c]).sum::<u64>() - tp;
    let fn_ = m[c].iter().sum::<u64>() - tp;
    (tp, fp, fn_)
}

fn mean(values: impl IntoIterator<Item = Exact>) -> Exact {
    let (sum, n) = values
        .into_iter()
        .fold((Exact::from_integer(0), 0u64), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        sum
    } else {
        sum / n
    }
}

/// Collapses the confusion matrix onto `positive` vs the rest.
fn binary_group(m: &[Vec<u64>], positive: &[usize]) -> BinaryGroup<Exact> {
    let pos = |i: usize| positive.contains(&i);
    let mut b = [[0u64; 2]; 2];
    for (g, row) in m.iter().enumerate() {
        for (p, &v) in row.iter().enumerate() {
            b[usize::from(pos(g))][usize::from(pos(p))] += v;
        }
    }
    let bm: Vec<Vec<u64>> = b.iter().map(|r| r.to_vec()).collect();
    let f1 = |c| {
        let (tp, fp, fn_) = class_counts(&bm, c);
        Prf::from_counts(tp, fp, fn_).f1
    };
    let total = b[0][0] + b[0][1] + b[1][0] + b[1][1];
    BinaryGroup {
        macro_f1: mean([f1(0), f1(1)]),
        positive_f1: f1(1),
        accuracy: ratio(b[0][0] + b[1][1], total),
    }
}

/// Exact scores over the four triage labels.
pub fn clpsych_exact(gold: &[RiskLabel], pred: &[RiskLabel]) -> Result<ExactReport> {
    let m = confusion(gold, pred, RiskLabel::COUNT, RiskLabel::index)?;
    let classes: Vec<ClassScore<Exact>> = RiskLabel::ALL
        .iter()
        .map(|l| {
            let (tp, fp, fn_) = class_counts(&m, l.index());
            ClassScore {
                label: l.name().to_string(),
                support: tp + fn_,
                scores: Prf::from_counts(tp, fp, fn_),
            }
        })
        .collect();
    let count = gold.len() as u64;
    let correct: u64 = (0..RiskLabel::COUNT).map(|i| m[i][i]).sum();
    Ok(Report {
        count,
        non_green_f1: mean(classes[1..].iter().map(|c| c.scores.f1)),
        flagged: binary_group(&m, &[1, 2, 3]),
        urgent: binary_group(&m, &[2, 3]),
        all_f1: mean(classes.iter().map(|c| c.scores.f1)),
        all_accuracy: ratio(correct, count),
        classes,
        confusion: m,
    })
}

pub fn clpsych_metrics(gold: &[RiskLabel], pred: &[RiskLabel]) -> Result<EvalReport> {
    Ok(clpsych_exact(gold, pred)?.to_f64())
}

impl ExactReport {
    pub fn to_f64(&self) -> EvalReport {
        let group = |g: &BinaryGroup<Exact>| BinaryGroup {
            macro_f1: to_f64(g.macro_f1),
            positive_f1: to_f64(g.positive_f1),
            accuracy: to_f64(g.accuracy),
        };
        Report {
            count: self.count,
            confusion: self.confusion.clone(),
            classes: self
                .classes
                .iter()
                .map(|c| ClassScore {
                    label: c.label.clone(),
                    support: c.support,
                    scores: c.scores.to_f64(),
                })
                .collect(),
            non_green_f1: to_f64(self.non_green_f1),
            flagged: group(&self.flagged),
            urgent: group(&self.urgent),
            all_f1: to_f64(self.all_f1),
            all_accuracy: to_f64(self.all_accuracy),
        }
    }
}

impl EvalReport {
    /// Plain-text table: the grouped scores, then per-class rows and the confusion matrix.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>12} | {:>8} {:>8} | {:>8} {:>8} | {:>8} {:>8}",
            "Non-green", "Flagged", "", "Urgent", "", "All", ""
        );
        let _ = writeln!(
            s,
            "{:>12} | {:>8} {:>8} | {:>8} {:>8} | {:>8} {:>8}",
            "F1", "F1", "Acc", "F1", "Acc", "F1", "Acc"
        );
        let _ = writeln!(
            s,
            "{:>12.2} | {:>8.2} {:>8.2} | {:>8.2} {:>8.2} | {:>8.2} {:>8.2}",
            self.non_green_f1,
            self.flagged.macro_f1,
            self.flagged.accuracy,
            self.urgent.macro_f1,
            self.urgent.accuracy,
            self.all_f1,
            self.all_accuracy
        );
        s.push('\n');
        let _ = writeln!(s, "{:<8} {:>9} {:>9} {:>9} {:>8}", "class", "precision", "recall", "f1", "support");
        for c in &self.classes {
            let _ = writeln!(
                s,
                "{:<8} {:>9.3} {:>9.3} {:>9.3} {:>8}",
                c.label, c.scores.precision, c.scores.recall, c.scores.f1, c.support
            );
        }
        s.push('\n');
        let _ = write!(s, "{:<8}", "gold\\pred");
        for l in RiskLabel::ALL {
            let _ = write!(s, " {:>7}", l.name());
        }
        s.push('\n');
        for (l, row) in RiskLabel::ALL.iter().zip(&self.confusion) {
            let _ = write!(s, "{:<9}", l.name());
            for v in row {
                let _ = write!(s, " {v:>7}");
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMetrics<T> {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub accuracy: T,
}

pub fn binary_exact<T: PartialEq>(gold: &[T], pred: &[T], positive: &T) -> Result<BinaryMetrics<Exact>> {
    if gold.len() != pred.len() {
        return Err(Error::invalid(format!(
            "{} gold labels against {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        match (g == positive, p == positive) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let prf = Prf::from_counts(tp, fp, fn_);
    Ok(BinaryMetrics {
        tp,
        fp,
        fn_,
        tn,
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
    })
}

/// Positive-class precision, recall and F1.
pub fn binary_metrics<T: PartialEq>(gold: &[T], pred: &[T], positive: &T) -> Result<BinaryMetrics<f64>> {
    let e = binary_exact(gold, pred, positive)?;
    Ok(BinaryMetrics {
        tp: e.tp,
        fp: e.fp,
        fn_: e.fn_,
        tn: e.tn,
        precision: to_f64(e.precision),
        recall: to_f64(e.recall),
        f1: to_f64(e.f1),
        accuracy: to_f64(e.accuracy),
    })
}

impl BinaryMetrics<f64> {
    pub fn render(&self) -> String {
        format!(
            "{:>9} {:>9} {:>9} {:>9}\n{:>9.3} {:>9.3} {:>9.3} {:>9.3}\n\ntp {}  fp {}  fn {}  tn {}\n",
            "precision", "recall", "f1", "accuracy", self.precision, self.recall, self.f1, self.accuracy, self.tp, self.fp, self.fn_, self.tn
        )
    }
}
