//! The fixed model zoo. Labels are class indices `0..n_classes`.

use std::fmt;

use serde::Serialize;

use super::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Knn,
    LogisticRegression,
    Dummy,
}

pub const KNN_K: usize = 5;
pub const LOGREG_ITERATIONS: usize = 500;
pub const LOGREG_STEP: f64 = 0.1;
pub const LOGREG_L2: f64 = 1e-2;

impl Model {
    pub const ALL: [Model; 3] = [Model::Knn, Model::LogisticRegression, Model::Dummy];

    pub fn name(self) -> &'static str {
        match self {
            Model::Knn => "knn",
            Model::LogisticRegression => "logistic_regression",
            Model::Dummy => "dummy",
        }
    }

    /// Trains on `(train, labels)` and predicts one class per test row.
    pub fn fit_predict(self, train: &Matrix, labels: &[usize], n_classes: usize, test: &Matrix) -> Vec<usize> {
        assert_eq!(train.rows(), labels.len());
        match self {
            Model::Knn => knn(train, labels, n_classes, test, KNN_K),
            Model::LogisticRegression => LogReg::fit(train, labels, n_classes).predict(test),
            Model::Dummy => vec![majority(labels, n_classes); test.rows()],
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn majority(labels: &[usize], n_classes: usize) -> usize {
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    // First maximum, so ties go to the smallest label.
    (0..n_classes).fold(0, |best, c| if counts[c] > counts[best] { c } else { best })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Euclidean k-nearest-neighbours with a plain majority vote. Equal
/// distances are ordered by training index; vote ties go to the class with
/// the smaller summed distance, then the smaller label.
pub fn knn(train: &Matrix, labels: &[usize], n_classes: usize, test: &Matrix, k: usize) -> Vec<usize> {
    let k = k.min(train.rows());
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(train.rows());
    (0..test.rows())
        .map(|t| {
            let q = test.row(t);
            order.clear();
            order.extend((0..train.rows()).map(|i| (sq_dist(q, train.row(i)), i)));
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut votes = vec![(0usize, 0.0f64); n_classes];
            for &(d, i) in &order[..k] {
                votes[labels[i]].0 += 1;
                votes[labels[i]].1 += d.sqrt();
            }
            (0..n_classes)
                .fold(None::<usize>, |best, c| match best {
                    _ if votes[c].0 == 0 => best,
                    None => Some(c),
                    Some(b) => {
                        let better = votes[c].0 > votes[b].0 || (votes[c].0 == votes[b].0 && votes[c].1 < votes[b].1);
                        Some(if better { c } else { b })
                    }
                })
                .unwrap_or(0)
        })
        .collect()
}

/// Multinomial logistic regression by full-batch gradient descent from
/// zero weights. The bias is not penalized.
#[derive(Debug, Clone)]
pub struct LogReg {
    weights: Matrix,
    bias: Vec<f64>,
}

impl LogReg {
    pub fn fit(x: &Matrix, labels: &[usize], n_classes: usize) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let mut weights = Matrix::zeros(n_classes, d);
        let mut bias = vec![0.0; n_classes];
        let mut probs = vec![0.0; n_classes];
        let mut grad_b = vec![0.0; n_classes];
        for _ in 0..LOGREG_ITERATIONS {
            let mut grad_w = Matrix::zeros(n_classes, d);
            grad_b.iter_mut().for_each(|g| *g = 0.0);
            for i in 0..n {
                let row = x.row(i);
                softmax_into(&weights, &bias, row, &mut probs);
                for c in 0..n_classes {
                    let err = probs[c] - if labels[i] == c { 1.0 } else { 0.0 };
                    grad_b[c] += err;
                    for (g, v) in grad_w.row_mut(c).iter_mut().zip(row) {
                        *g += err * v;
                    }
                }
            }
            for c in 0..n_classes {
                bias[c] -= LOGREG_STEP * grad_b[c] / n as f64;
                for j in 0..d {
                    let g = grad_w[(c, j)] / n as f64 + LOGREG_L2 * weights[(c, j)];
                    weights[(c, j)] -= LOGREG_STEP * g;
                }
            }
        }
        LogReg { weights, bias }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        let c = self.bias.len();
        (0..x.rows())
            .map(|i| {
                let row = x.row(i);
                let logit = |k: usize| self.bias[k] + self.weights.row(k).iter().zip(row).map(|(w, v)| w * v).sum::<f64>();
                (0..c).fold(0, |best, k| if logit(k) > logit(best) { k } else { best })
            })
            .collect()
    }
}

fn softmax_into(weights: &Matrix, bias: &[f64], row: &[f64], out: &mut [f64]) {
    for (c, o) in out.iter_mut().enumerate() {
        *o = bias[c] + weights.row(c).iter().zip(row).map(|(w, v)| w * v).sum::<f64>();
    }
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> (Matrix, Vec<usize>) {
        let x = Matrix::from_rows(&(0..20).map(|i| vec![i as f64]).collect::<Vec<_>>());
        let y = (0..20).map(|i| usize::from(i >= 10)).collect();
        (x, y)
    }

    #[test]
    fn dummy_prefers_smallest_label_on_ties() {
        assert_eq!(majority(&[1, 0, 1, 0], 2), 0);
        assert_eq!(majority(&[2, 1, 2], 3), 2);
    }

    #[test]
    fn knn_separates_a_line() {
        let (x, y) = line();
        let test = Matrix::from_rows(&[vec![-3.0], vec![4.2], vec![15.0], vec![30.0]]);
        assert_eq!(knn(&x, &y, 2, &test, 5), [0, 0, 1, 1]);
    }

    #[test]
    fn knn_vote_tie_uses_distance() {
        // k = 4 with two votes each; class 1 is closer in total.
        let x = Matrix::from_rows(&[vec![-3.0], vec![-3.0], vec![2.0], vec![2.0]]);
        let test = Matrix::from_rows(&[vec![0.0]]);
        assert_eq!(knn(&x, &[0, 0, 1, 1], 2, &test, 4), [1]);
    }

    #[test]
    fn logreg_separates_a_line() {
        let (x, y) = line();
        let centered = Matrix::from_rows(&(0..20).map(|i| vec![(x[(i, 0)] - 9.5) / 5.0]).collect::<Vec<_>>());
        let m = LogReg::fit(&centered, &y, 2);
        assert_eq!(m.predict(&centered), y);
    }

    #[test]
    fn logreg_handles_zero_features() {
        let x = Matrix::zeros(5, 0);
        let pred = Model::LogisticRegression.fit_predict(&x, &[1, 1, 1, 0, 0], 2, &Matrix::zeros(2, 0));
        assert_eq!(pred, [1, 1]);
    }
}
