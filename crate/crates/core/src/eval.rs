//! Classification metrics and the Stuart-Maxwell test of marginal
//! homogeneity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gold-by-predicted counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[gold][pred]`.
    pub counts: Vec<Vec<u64>>,
    pub labels: Vec<String>,
}

impl ConfusionMatrix {
    pub fn from_indices(gold: &[usize], pred: &[usize], labels: Vec<String>) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(Error::LengthMismatch {
                left: gold.len(),
                right: pred.len(),
            });
        }
        if gold.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let k = labels.len();
        let mut counts = vec![vec![0u64; k]; k];
        for (&g, &p) in gold.iter().zip(pred) {
            if g >= k || p >= k {
                return Err(Error::UnknownLabel {
                    line: None,
                    label: format!("class index {}", g.max(p)),
                });
            }
            counts[g][p] += 1;
        }
        Ok(ConfusionMatrix { counts, labels })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }
}

fn label_indices<S: AsRef<str>>(items: &[S], labels: &[String]) -> Result<Vec<usize>> {
    items
        .iter()
        .enumerate()
        .map(|(i, s)| {
            labels
                .iter()
                .position(|l| l == s.as_ref())
                .ok_or_else(|| Error::UnknownLabel {
                    line: Some(i + 1),
                    label: s.as_ref().to_string(),
                })
        })
        .collect()
}

/// Confusion matrix from label names.
pub fn confusion<S: AsRef<str>>(gold: &[S], pred: &[S], labels: &[String]) -> Result<ConfusionMatrix> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    ConfusionMatrix::from_indices(
        &label_indices(gold, labels)?,
        &label_indices(pred, labels)?,
        labels.to_vec(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_avg: Averages,
    pub weighted: Averages,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class, macro and support-weighted precision, recall and F1. A zero
/// denominator gives 0 for that metric.
pub fn metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let k = cm.num_classes();
    let total = cm.total();
    let mut per_class = Vec::with_capacity(k);
    let mut correct = 0;
    for c in 0..k {
        let tp = cm.counts[c][c];
        correct += tp;
        let support: u64 = cm.counts[c].iter().sum();
        let predicted: u64 = cm.counts.iter().map(|row| row[c]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.push(ClassMetrics {
            label: cm.labels[c].clone(),
            precision,
            recall,
            f1,
            support,
        });
    }
    let mean = |f: fn(&ClassMetrics) -> f64| {
        if k == 0 {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / k as f64
        }
    };
    let macro_avg = Averages {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
    };
    let weighted_mean = |f: fn(&ClassMetrics) -> f64| {
        if total == 0 {
            0.0
        } else {
            per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64
        }
    };
    // support-weighted recall is Σ tp / N; computed that way it equals accuracy exactly
    let weighted = Averages {
        precision: weighted_mean(|m| m.precision),
        recall: ratio(correct, total),
        f1: weighted_mean(|m| m.f1),
    };
    MetricsReport {
        per_class,
        macro_avg,
        weighted,
        accuracy: ratio(correct, total),
    }
}

/// Paired outcomes of two systems on the same items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedTable {
    /// `n[i][j]`: items where system A says `i` and system B says `j`.
    pub n: Vec<Vec<u64>>,
}

impl PairedTable {
    pub fn new(n: Vec<Vec<u64>>) -> Result<Self> {
        let k = n.len();
        if k < 2 || n.iter().any(|row| row.len() != k) {
            return Err(Error::ShapeMismatch(format!(
                "paired table must be square with k >= 2, got {k} rows"
            )));
        }
        let t = PairedTable { n };
        if t.total() == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(t)
    }

    pub fn from_indices(a: &[usize], b: &[usize], k: usize) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        let mut n = vec![vec![0u64; k]; k];
        for (&i, &j) in a.iter().zip(b) {
            if i >= k || j >= k {
                return Err(Error::UnknownLabel {
                    line: None,
                    label: format!("class index {}", i.max(j)),
                });
            }
            n[i][j] += 1;
        }
        PairedTable::new(n)
    }

    /// Table from two label sequences over `labels`.
    pub fn from_labels<S: AsRef<str>>(a: &[S], b: &[S], labels: &[String]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        PairedTable::from_indices(&label_indices(a, labels)?, &label_indices(b, labels)?, labels.len())
    }

    pub fn k(&self) -> usize {
        self.n.len()
    }

    pub fn total(&self) -> u64 {
        self.n.iter().flatten().sum()
    }

    fn row_sum(&self, i: usize) -> u64 {
        self.n[i].iter().sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        self.n.iter().map(|r| r[j]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmResult {
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Categories that occur in at least one margin.
fn retained(table: &PairedTable) -> Vec<usize> {
    (0..table.k())
        .filter(|&i| table.row_sum(i) + table.col_sum(i) > 0)
        .collect()
}

/// Stuart-Maxwell statistic `dᵀ S⁻¹ d` with the category `dropped` left out
/// of the reduction. `dropped` must be one of the retained categories.
pub fn stuart_maxwell_dropping(table: &PairedTable, dropped: usize) -> Result<SmResult> {
    let keep = retained(table);
    if keep.len() < 2 {
        return Err(Error::SingularCovariance);
    }
    if !keep.contains(&dropped) {
        return Err(Error::Domain(format!("category {dropped} is not present in the table")));
    }
    let df = keep.len() - 1;
    let cats: Vec<usize> = keep.into_iter().filter(|&c| c != dropped).collect();
    let n = &table.n;

    let d: Vec<f64> = cats
        .iter()
        .map(|&i| table.row_sum(i) as f64 - table.col_sum(i) as f64)
        .collect();
    if d.iter().all(|&v| v == 0.0) {
        return Ok(SmResult {
            chi2: 0.0,
            df,
            p_value: 1.0,
        });
    }
    let s: Vec<Vec<f64>> = cats
        .iter()
        .map(|&i| {
            cats.iter()
                .map(|&j| {
                    if i == j {
                        (table.row_sum(i) + table.col_sum(i) - 2 * n[i][i]) as f64
                    } else {
                        -((n[i][j] + n[j][i]) as f64)
                    }
                })
                .collect()
        })
        .collect();
    let x = solve(s, d.clone()).ok_or(Error::SingularCovariance)?;
    let chi2 = d.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>().max(0.0);
    Ok(SmResult {
        chi2,
        df,
        p_value: chi_square_sf(chi2, df)?,
    })
}

/// Stuart-Maxwell test of marginal homogeneity. Categories absent from both
/// margins are removed first; of the rest, the one with the smallest
/// combined margin (last on ties) is left out of the reduction.
pub fn stuart_maxwell(table: &PairedTable) -> Result<SmResult> {
    let keep = retained(table);
    let dropped = keep
        .iter()
        .copied()
        .min_by_key(|&i| (table.row_sum(i) + table.col_sum(i), std::cmp::Reverse(i)))
        .ok_or(Error::SingularCovariance)?;
    stuart_maxwell_dropping(table, dropped)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting. `None`
/// when a pivot is negligible relative to the matrix scale.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    let tol = scale * n as f64 * f64::EPSILON * 16.0;
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= tol {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const MAX_ITER: usize = 500;

/// Regularized upper incomplete gamma `Q(a, x)`: series for `x < a + 1`,
/// Lentz continued fraction otherwise.
pub fn gamma_q(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !(x >= 0.0) {
        return Err(Error::Domain(format!("gamma_q({a}, {x})")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * f64::EPSILON {
                break;
            }
        }
        Ok((1.0 - sum * log_prefactor.exp()).clamp(0.0, 1.0))
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < f64::EPSILON {
                break;
            }
        }
        Ok((log_prefactor.exp() * h).clamp(0.0, 1.0))
    }
}

/// Upper-tail probability of the chi-square distribution.
pub fn chi_square_sf(x: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(Error::Domain("chi-square needs df >= 1".into()));
    }
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("chi-square statistic {x} is negative")));
    }
    gamma_q(df as f64 / 2.0, x / 2.0)
}
