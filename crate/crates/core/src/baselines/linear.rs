//! Linear and generative classifiers over fixed-length feature vectors.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::heads::softmax_rows;
use crate::params::{Decay, ParamView, ParamViewMut, Parameterized};
use crate::{visit_array, visit_array_mut, Error, Result};

fn check_xy(x: &Array2<f64>, y: &[usize], num_classes: usize) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if x.nrows() == 0 {
        return Err(Error::Config("cannot fit on an empty training set".into()));
    }
    if num_classes < 2 {
        return Err(Error::Config("at least 2 classes are required".into()));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= num_classes) {
        return Err(Error::data("labels", format!("label {bad} outside 0..{num_classes}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite feature value".into()));
    }
    Ok(())
}

fn check_width(x: &Array2<f64>, expected: usize) -> Result<()> {
    if x.ncols() != expected {
        return Err(Error::Shape(format!(
            "features of width {}, model expects {expected}",
            x.ncols()
        )));
    }
    Ok(())
}

/// Per-feature centering and scaling fitted on training data. Constant
/// features keep scale 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            scale: Array1::ones(dim),
        }
    }

    pub fn fit(x: &Array2<f64>) -> Self {
        let n = x.nrows() as f64;
        let mean = x.sum_axis(Axis(0)) / n;
        let mut var = Array1::<f64>::zeros(x.ncols());
        for row in x.outer_iter() {
            var.zip_mut_with(&(&row - &mean), |v, d| *v += d * d);
        }
        let scale = var.mapv(|v| {
            let s = (v / n).sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        });
        Self { mean, scale }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean) / &self.scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearParams {
    pub learning_rate: f64,
    pub iterations: usize,
    /// L2 strength for logistic regression.
    pub l2: f64,
    /// Regularization for the hinge loss.
    pub svm_lambda: f64,
    pub standardize: bool,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            iterations: 300,
            l2: 1e-4,
            svm_lambda: 1e-4,
            standardize: true,
        }
    }
}

/// Multinomial logistic regression trained by full-batch gradient descent on
/// mean cross-entropy plus `l2/2 · ‖W‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    pub standardizer: Standardizer,
    /// `k × C`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LogisticRegression {
    pub fn zeros(dim: usize, num_classes: usize) -> Self {
        Self {
            standardizer: Standardizer::identity(dim),
            weight: Array2::zeros((dim, num_classes)),
            bias: Array1::zeros(num_classes),
        }
    }

    pub fn fit(x: &Array2<f64>, y: &[usize], num_classes: usize, params: &LinearParams) -> Result<Self> {
        check_xy(x, y, num_classes)?;
        let mut model = Self::zeros(x.ncols(), num_classes);
        if params.standardize {
            model.standardizer = Standardizer::fit(x);
        }
        let xs = model.standardizer.apply(x);
        let n = x.nrows() as f64;
        let mut onehot = Array2::<f64>::zeros((x.nrows(), num_classes));
        for (i, &c) in y.iter().enumerate() {
            onehot[[i, c]] = 1.0;
        }
        for _ in 0..params.iterations {
            let p = softmax_rows(&(xs.dot(&model.weight) + &model.bias));
            let diff = (p - &onehot) / n;
            let gw = xs.t().dot(&diff) + &model.weight * params.l2;
            let gb = diff.sum_axis(Axis(0));
            model.weight.scaled_add(-params.learning_rate, &gw);
            model.bias.scaled_add(-params.learning_rate, &gb);
        }
        if model.weight.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("logistic regression diverged".into()));
        }
        Ok(model)
    }

    /// Class probabilities.
    pub fn scores(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        check_width(x, self.weight.nrows())?;
        Ok(softmax_rows(&(self.standardizer.apply(x).dot(&self.weight) + &self.bias)))
    }
}

/// One-vs-rest linear SVM trained by full-batch subgradient descent on
/// `λ/2 · ‖w‖² + mean(max(0, 1 − y·(w·x + b)))` with step `η/√t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    pub standardizer: Standardizer,
    /// `k × C`, one column per one-vs-rest problem.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearSvm {
    pub fn zeros(dim: usize, num_classes: usize) -> Self {
        Self {
            standardizer: Standardizer::identity(dim),
            weight: Array2::zeros((dim, num_classes)),
            bias: Array1::zeros(num_classes),
        }
    }

    pub fn fit(x: &Array2<f64>, y: &[usize], num_classes: usize, params: &LinearParams) -> Result<Self> {
        check_xy(x, y, num_classes)?;
        let mut model = Self::zeros(x.ncols(), num_classes);
        if params.standardize {
            model.standardizer = Standardizer::fit(x);
        }
        let xs = model.standardizer.apply(x);
        let n = x.nrows() as f64;
        let mut targets = Array2::<f64>::from_elem((x.nrows(), num_classes), -1.0);
        for (i, &c) in y.iter().enumerate() {
            targets[[i, c]] = 1.0;
        }
        for t in 1..=params.iterations {
            let eta = params.learning_rate / (t as f64).sqrt();
            let margins = xs.dot(&model.weight) + &model.bias;
            // d(mean hinge)/d(score) = −y/n where the margin is violated
            let mut d = Array2::<f64>::zeros(margins.dim());
            ndarray::Zip::from(&mut d)
                .and(&margins)
                .and(&targets)
                .for_each(|d, &m, &yv| {
                    if yv * m < 1.0 {
                        *d = -yv / n;
                    }
                });
            let gw = xs.t().dot(&d) + &model.weight * params.svm_lambda;
            let gb = d.sum_axis(Axis(0));
            model.weight.scaled_add(-eta, &gw);
            model.bias.scaled_add(-eta, &gb);
        }
        if model.weight.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("SVM training diverged".into()));
        }
        Ok(model)
    }

    /// Per-class margins `w_c · x + b_c`.
    pub fn scores(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        check_width(x, self.weight.nrows())?;
        Ok(self.standardizer.apply(x).dot(&self.weight) + &self.bias)
    }
}

pub const NB_VARIANCE_FLOOR: f64 = 1e-9;

/// Gaussian naive Bayes with per-class maximum-likelihood means and
/// variances (floored at [`NB_VARIANCE_FLOOR`]) and empirical priors.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNb {
    /// `C × k`
    pub means: Array2<f64>,
    pub variances: Array2<f64>,
    pub log_priors: Array1<f64>,
}

impl GaussianNb {
    pub fn zeros(dim: usize, num_classes: usize) -> Self {
        Self {
            means: Array2::zeros((num_classes, dim)),
            variances: Array2::ones((num_classes, dim)),
            log_priors: Array1::zeros(num_classes),
        }
    }

    pub fn fit(x: &Array2<f64>, y: &[usize], num_classes: usize) -> Result<Self> {
        check_xy(x, y, num_classes)?;
        let k = x.ncols();
        let mut counts = vec![0usize; num_classes];
        for &c in y {
            counts[c] += 1;
        }
        if let Some(absent) = counts.iter().position(|&c| c == 0) {
            return Err(Error::data(
                "naive Bayes",
                format!("class {absent} has no training examples"),
            ));
        }
        let mut model = Self::zeros(k, num_classes);
        for (row, &c) in x.outer_iter().zip(y) {
            let mut m = model.means.row_mut(c);
            m += &row;
        }
        for (c, &cnt) in counts.iter().enumerate() {
            model.means.row_mut(c).mapv_inplace(|v| v / cnt as f64);
        }
        let mut sq = Array2::<f64>::zeros((num_classes, k));
        for (row, &c) in x.outer_iter().zip(y) {
            let d = &row - &model.means.row(c);
            let mut s = sq.row_mut(c);
            s += &(&d * &d);
        }
        for (c, &cnt) in counts.iter().enumerate() {
            let v = sq.row(c).mapv(|s| (s / cnt as f64).max(NB_VARIANCE_FLOOR));
            model.variances.row_mut(c).assign(&v);
            model.log_priors[c] = (cnt as f64 / y.len() as f64).ln();
        }
        Ok(model)
    }

    /// Posterior class probabilities.
    pub fn scores(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        check_width(x, self.means.ncols())?;
        let c = self.means.nrows();
        let mut logp = Array2::<f64>::zeros((x.nrows(), c));
        let log_norm: Vec<f64> = (0..c)
            .map(|j| -0.5 * self.variances.row(j).iter().map(|v| (2.0 * std::f64::consts::PI * v).ln()).sum::<f64>())
            .collect();
        for (i, row) in x.outer_iter().enumerate() {
            for j in 0..c {
                let mut s = self.log_priors[j] + log_norm[j];
                for ((&xv, &m), &v) in row.iter().zip(self.means.row(j)).zip(self.variances.row(j)) {
                    s -= (xv - m) * (xv - m) / (2.0 * v);
                }
                logp[[i, j]] = s;
            }
        }
        Ok(softmax_rows(&logp))
    }
}

impl Parameterized for LogisticRegression {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(ParamView<'a>)) {
        visit_array!(f, "standardizer.mean", self.standardizer.mean, Decay::No);
        visit_array!(f, "standardizer.scale", self.standardizer.scale, Decay::No);
        visit_array!(f, "weight", self.weight, Decay::Yes);
        visit_array!(f, "bias", self.bias, Decay::No);
    }
    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(ParamViewMut<'a>)) {
        visit_array_mut!(f, "standardizer.mean", self.standardizer.mean, Decay::No);
        visit_array_mut!(f, "standardizer.scale", self.standardizer.scale, Decay::No);
        visit_array_mut!(f, "weight", self.weight, Decay::Yes);
        visit_array_mut!(f, "bias", self.bias, Decay::No);
    }
}

impl Parameterized for LinearSvm {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(ParamView<'a>)) {
        visit_array!(f, "standardizer.mean", self.standardizer.mean, Decay::No);
        visit_array!(f, "standardizer.scale", self.standardizer.scale, Decay::No);
        visit_array!(f, "weight", self.weight, Decay::Yes);
        visit_array!(f, "bias", self.bias, Decay::No);
    }
    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(ParamViewMut<'a>)) {
        visit_array_mut!(f, "standardizer.mean", self.standardizer.mean, Decay::No);
        visit_array_mut!(f, "standardizer.scale", self.standardizer.scale, Decay::No);
        visit_array_mut!(f, "weight", self.weight, Decay::Yes);
        visit_array_mut!(f, "bias", self.bias, Decay::No);
    }
}

impl Parameterized for GaussianNb {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(ParamView<'a>)) {
        visit_array!(f, "means", self.means, Decay::No);
        visit_array!(f, "variances", self.variances, Decay::No);
        visit_array!(f, "log_priors", self.log_priors, Decay::No);
    }
    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(ParamViewMut<'a>)) {
        visit_array_mut!(f, "means", self.means, Decay::No);
        visit_array_mut!(f, "variances", self.variances, Decay::No);
        visit_array_mut!(f, "log_priors", self.log_priors, Decay::No);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use crate::train::argmax_rows;
    use ndarray::array;
    use rand::Rng as _;

    fn clouds(n: usize, seed_value: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = seed::rng(seed_value);
        let mut x = Array2::zeros((2 * n, 3));
        let mut y = Vec::new();
        for i in 0..2 * n {
            let c = i % 2;
            let sign = if c == 0 { 1.0 } else { -1.0 };
            for j in 0..3 {
                x[[i, j]] = sign + rng.random_range(-0.05..0.05);
            }
            y.push(c);
        }
        (x, y)
    }

    #[test]
    fn separable_clouds() {
        let (x, y) = clouds(50, 1);
        let p = LinearParams::default();
        let lr = LogisticRegression::fit(&x, &y, 2, &p).unwrap();
        assert_eq!(argmax_rows(&lr.scores(&x).unwrap()), y);
        let svm = LinearSvm::fit(&x, &y, 2, &p).unwrap();
        assert_eq!(argmax_rows(&svm.scores(&x).unwrap()), y);
    }

    #[test]
    fn zero_lr_is_uniform_and_picks_class_zero() {
        let lr = LogisticRegression::zeros(4, 3);
        let s = lr.scores(&Array2::from_elem((2, 4), 1.7)).unwrap();
        for v in s.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(argmax_rows(&s), vec![0, 0]);
        assert!(lr.scores(&Array2::zeros((1, 5))).is_err());
    }

    #[test]
    fn svm_margins_flip_with_negated_input() {
        let mut svm = LinearSvm::zeros(2, 2);
        svm.weight = array![[1.0, -1.0], [0.5, -0.5]];
        let x = array![[0.3, -2.0]];
        let a = svm.scores(&x).unwrap();
        let b = svm.scores(&(-&x)).unwrap();
        for (p, q) in a.iter().zip(b.iter()) {
            assert_eq!(*p, -*q);
        }
    }

    #[test]
    fn nb_one_dimensional_posterior() {
        let x = array![[0.9], [1.1], [-1.1], [-0.9]];
        let y = [0, 0, 1, 1];
        let nb = GaussianNb::fit(&x, &y, 2).unwrap();
        assert!((nb.means[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((nb.means[[1, 0]] + 1.0).abs() < 1e-12);
        assert!((nb.variances[[0, 0]] - 0.01).abs() < 1e-12);
        // hand posterior at x = 2: equal priors and variances, so the ratio
        // is exp(-(1² - 3²)/(2·0.01))
        let p = nb.scores(&array![[2.0]]).unwrap();
        let odds: f64 = (8.0f64 / 0.02).exp();
        assert!((p[[0, 0]] - odds / (1.0 + odds)).abs() < 1e-12);
        assert_eq!(argmax_rows(&p), vec![0]);
    }

    #[test]
    fn nb_matches_sample_statistics() {
        let mut rng = seed::rng(3);
        let x = Array2::from_shape_simple_fn((40, 4), || rng.random_range(-3.0..3.0));
        let y: Vec<usize> = (0..40).map(|i| i % 3).collect();
        let nb = GaussianNb::fit(&x, &y, 3).unwrap();
        for c in 0..3 {
            let rows: Vec<usize> = (0..40).filter(|i| y[*i] == c).collect();
            for j in 0..4 {
                let vals: Vec<f64> = rows.iter().map(|&i| x[[i, j]]).collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let v = vals.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / vals.len() as f64;
                assert!((nb.means[[c, j]] - m).abs() < 1e-12);
                assert!((nb.variances[[c, j]] - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nb_requires_every_class() {
        let x = array![[0.0], [1.0]];
        assert!(GaussianNb::fit(&x, &[0, 0], 2).is_err());
    }

    #[test]
    fn duplicated_data_same_decisions() {
        let mut rng = seed::rng(7);
        let x = Array2::from_shape_simple_fn((60, 5), || rng.random_range(-1.0..1.0));
        let y: Vec<usize> = x.outer_iter().map(|r| usize::from(r[0] + 0.5 * r[1] > 0.0)).collect();
        let x2 = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let y2: Vec<usize> = y.iter().chain(&y).copied().collect();
        let test = Array2::from_shape_simple_fn((200, 5), || rng.random_range(-1.0..1.0));
        let p = LinearParams::default();
        let a = LogisticRegression::fit(&x, &y, 2, &p).unwrap();
        let b = LogisticRegression::fit(&x2, &y2, 2, &p).unwrap();
        assert_eq!(argmax_rows(&a.scores(&test).unwrap()), argmax_rows(&b.scores(&test).unwrap()));
        let a = LinearSvm::fit(&x, &y, 2, &p).unwrap();
        let b = LinearSvm::fit(&x2, &y2, 2, &p).unwrap();
        assert_eq!(argmax_rows(&a.scores(&test).unwrap()), argmax_rows(&b.scores(&test).unwrap()));
    }
}
