//! Multi-class linear discriminant analysis.
//!
//! Fitting solves the generalized eigenproblem `S_b w = lambda S~_w w`
//! for the raw between- and within-class scatter matrices, where
//! `S~_w = S_w + gamma * (tr(S_w)/B) * I` is the shrinkage-regularized
//! within-class scatter. The solve whitens `S~_w` with its Cholesky
//! factor and eigendecomposes the resulting symmetric matrix, so the
//! retained projection columns are `S~_w`-orthonormal. Classification
//! uses the Gaussian discriminant with the shared covariance
//! `S~_w / (N - K)` (or `/ N` when every class has a single sample).

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

use crate::data::Group;

#[derive(Debug, Error)]
pub enum LdaError {
    #[error("{rows} sample rows but {labels} labels")]
    LabelCountMismatch { rows: usize, labels: usize },
    #[error("no samples")]
    Empty,
    #[error("sample row {row} has {found} features, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in sample row {row}, feature {col}")]
    NonFinite { row: usize, col: usize },
    #[error("need at least two distinct classes, found {0}")]
    SingleClass(usize),
    #[error("negative shrinkage gamma {0}")]
    NegativeGamma(f64),
    #[error("regularized within-class scatter is not positive definite (gamma = {gamma})")]
    NotPositiveDefinite { gamma: f64 },
    #[error("expected a {expected}-dimensional vector, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("model file {path}: {reason}")]
    ModelFormat { path: PathBuf, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Class priors used by the Gaussian discriminant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorsMode {
    Empirical,
    Uniform,
}

impl fmt::Display for PriorsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriorsMode::Empirical => "empirical",
            PriorsMode::Uniform => "uniform",
        })
    }
}

impl FromStr for PriorsMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "empirical" => Ok(PriorsMode::Empirical),
            "uniform" => Ok(PriorsMode::Uniform),
            other => Err(format!("unknown priors mode {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub gamma: f64,
    pub priors: PriorsMode,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            gamma: 1e-3,
            priors: PriorsMode::Empirical,
        }
    }
}

/// Sepsis-versus-rest relabeling of the three cohort groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryLabel {
    Negative,
    Positive,
}

impl From<Group> for BinaryLabel {
    fn from(g: Group) -> Self {
        match g {
            Group::Sepsis => BinaryLabel::Positive,
            Group::Healthy | Group::Pancreatic => BinaryLabel::Negative,
        }
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinaryLabel::Negative => "negative",
            BinaryLabel::Positive => "positive",
        })
    }
}

impl FromStr for BinaryLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "negative" => Ok(BinaryLabel::Negative),
            "positive" => Ok(BinaryLabel::Positive),
            other => Err(format!("unknown binary label {other:?}")),
        }
    }
}

/// Maps labels onto the binary alphabet; the identity on values that are
/// already binary, so repeated application is idempotent.
pub fn relabel_binary<T: Into<BinaryLabel> + Copy>(labels: &[T]) -> Vec<BinaryLabel> {
    labels.iter().map(|&l| l.into()).collect()
}

/// A fitted discriminant model.
#[derive(Clone, Debug, PartialEq)]
pub struct LdaModel<L> {
    labels: Vec<L>,
    counts: Vec<usize>,
    priors: Vec<f64>,
    means: Vec<DVector<f64>>,
    grand_mean: DVector<f64>,
    pooled_scatter: DMatrix<f64>,
    gamma: f64,
    eigenvalues: Vec<f64>,
    projection: DMatrix<f64>,
    score_weights: Vec<DVector<f64>>,
    score_offsets: Vec<f64>,
}

impl<L> LdaModel<L> {
    pub fn labels(&self) -> &[L] {
        &self.labels
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn class_means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn grand_mean(&self) -> &DVector<f64> {
        &self.grand_mean
    }

    /// Raw pooled within-class scatter (sum of outer products).
    pub fn pooled_scatter(&self) -> &DMatrix<f64> {
        &self.pooled_scatter
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Eigenvalues of the retained components, non-increasing.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// B x m projection basis, columns S~_w-orthonormal.
    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    pub fn dim(&self) -> usize {
        self.grand_mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.projection.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.counts.iter().sum()
    }

    /// The regularized within-class scatter this model was fitted with.
    pub fn regularized_scatter(&self) -> DMatrix<f64> {
        regularize(&self.pooled_scatter, self.gamma)
    }

    /// Projects `x - grand_mean` onto the discriminant basis.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, LdaError> {
        if x.len() != self.dim() {
            return Err(LdaError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let centered: Vec<f64> = x
            .iter()
            .zip(self.grand_mean.iter())
            .map(|(a, b)| a - b)
            .collect();
        Ok((0..self.n_components())
            .map(|j| {
                self.projection
                    .column(j)
                    .iter()
                    .zip(&centered)
                    .map(|(w, c)| w * c)
                    .sum()
            })
            .collect())
    }

    /// Per-class discriminant scores (before softmax).
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>, LdaError> {
        if x.len() != self.dim() {
            return Err(LdaError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self
            .score_weights
            .iter()
            .zip(&self.score_offsets)
            .map(|(w, off)| w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + off)
            .collect())
    }
}

impl<L: Clone> LdaModel<L> {
    /// Gaussian discriminant decision: the argmax class and the softmax
    /// posteriors over all classes. Ties resolve to the earlier class in
    /// `labels`.
    pub fn classify(&self, x: &[f64]) -> Result<(L, Vec<f64>), LdaError> {
        let scores = self.scores(x)?;
        let mut best = 0usize;
        for k in 1..scores.len() {
            if scores[k] > scores[best] {
                best = k;
            }
        }
        Ok((self.labels[best].clone(), softmax(&scores)))
    }
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

fn regularize(scatter: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let b = scatter.nrows();
    let trace: f64 = (0..b).map(|i| scatter[(i, i)]).sum();
    // a zero-variance training set would make the trace-scaled ridge vanish;
    // fall back to a unit scale so gamma > 0 always regularizes
    let scale = if trace > 0.0 { trace / b as f64 } else { 1.0 };
    let mut out = scatter.clone();
    for i in 0..b {
        out[(i, i)] += gamma * scale;
    }
    out
}

/// Fits an LDA model on `samples` (one row per observation).
///
/// Classes are the sorted distinct labels. Requires at least two classes
/// and finite inputs; fails with [`LdaError::NotPositiveDefinite`] when
/// the regularized scatter cannot be factorized (only possible at
/// `gamma = 0`).
pub fn fit_lda<L: Clone + Ord + fmt::Debug>(
    samples: &[&[f64]],
    labels: &[L],
    config: &LdaConfig,
) -> Result<LdaModel<L>, LdaError> {
    if samples.is_empty() {
        return Err(LdaError::Empty);
    }
    if samples.len() != labels.len() {
        return Err(LdaError::LabelCountMismatch {
            rows: samples.len(),
            labels: labels.len(),
        });
    }
    if config.gamma < 0.0 || !config.gamma.is_finite() {
        return Err(LdaError::NegativeGamma(config.gamma));
    }
    let n = samples.len();
    let b = samples[0].len();
    for (row, s) in samples.iter().enumerate() {
        if s.len() != b {
            return Err(LdaError::RaggedRow {
                row,
                expected: b,
                found: s.len(),
            });
        }
        for (col, v) in s.iter().enumerate() {
            if !v.is_finite() {
                return Err(LdaError::NonFinite { row, col });
            }
        }
    }

    let mut classes: Vec<L> = labels.to_vec();
    classes.sort();
    classes.dedup();
    let k = classes.len();
    if k < 2 {
        return Err(LdaError::SingleClass(k));
    }
    let class_of: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label in class list"))
        .collect();

    let mut counts = vec![0usize; k];
    let mut sums = vec![vec![0.0f64; b]; k];
    for (row, &c) in class_of.iter().enumerate() {
        counts[c] += 1;
        for (acc, v) in sums[c].iter_mut().zip(samples[row]) {
            *acc += v;
        }
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s.iter().map(|v| v / c as f64).collect())
        .collect();
    let mut grand = vec![0.0f64; b];
    for s in samples {
        for (acc, v) in grand.iter_mut().zip(*s) {
            *acc += v;
        }
    }
    for g in grand.iter_mut() {
        *g /= n as f64;
    }

    // raw pooled within-class scatter, accumulated column-major on the
    // lower triangle then mirrored
    let mut sw = vec![0.0f64; b * b];
    let mut d = vec![0.0f64; b];
    for (row, &c) in class_of.iter().enumerate() {
        let x = samples[row];
        let mu = &means[c];
        for j in 0..b {
            d[j] = x[j] - mu[j];
        }
        for j in 0..b {
            let dj = d[j];
            if dj != 0.0 {
                let col = &mut sw[j * b..(j + 1) * b];
                for i in j..b {
                    col[i] += d[i] * dj;
                }
            }
        }
    }
    for j in 0..b {
        for i in (j + 1)..b {
            sw[i * b + j] = sw[j * b + i];
        }
    }
    let sw = DMatrix::from_vec(b, b, sw);

    let mut sb = DMatrix::<f64>::zeros(b, b);
    for (c, mu) in means.iter().enumerate() {
        let w = counts[c] as f64;
        for j in 0..b {
            let dj = mu[j] - grand[j];
            for i in 0..b {
                sb[(i, j)] += w * (mu[i] - grand[i]) * dj;
            }
        }
    }

    let sw_reg = regularize(&sw, config.gamma);
    let chol = Cholesky::new(sw_reg).ok_or(LdaError::NotPositiveDefinite {
        gamma: config.gamma,
    })?;
    let l = chol.l();
    let not_pd = || LdaError::NotPositiveDefinite {
        gamma: config.gamma,
    };
    // M = L^-1 S_b L^-T, symmetric PSD with the generalized eigenvalues
    let a = l.solve_lower_triangular(&sb).ok_or_else(not_pd)?;
    let m_raw = l.solve_lower_triangular(&a.transpose()).ok_or_else(not_pd)?;
    let m_sym = (&m_raw + m_raw.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m_sym);

    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("finite eigenvalues")
    });
    let lambda_max = eig.eigenvalues[order[0]];
    let rank_tol = if lambda_max > 0.0 {
        lambda_max * 1e-10
    } else {
        f64::INFINITY
    };
    let rank = order
        .iter()
        .filter(|&&i| eig.eigenvalues[i] > rank_tol)
        .count();
    let m = rank.min(k - 1);

    let lt = l.transpose();
    let mut columns = Vec::with_capacity(m);
    let mut eigenvalues = Vec::with_capacity(m);
    for &idx in order.iter().take(m) {
        let u = eig.eigenvectors.column(idx).clone_owned();
        let w = lt.solve_upper_triangular(&u).ok_or_else(not_pd)?;
        columns.push(w);
        eigenvalues.push(eig.eigenvalues[idx]);
    }
    let projection = if columns.is_empty() {
        DMatrix::zeros(b, 0)
    } else {
        DMatrix::from_columns(&columns)
    };

    let priors: Vec<f64> = match config.priors {
        PriorsMode::Empirical => counts.iter().map(|&c| c as f64 / n as f64).collect(),
        PriorsMode::Uniform => vec![1.0 / k as f64; k],
    };

    // shared covariance S~_w / (N - K); fall back to / N when N = K
    let denom = if n > k { (n - k) as f64 } else { n as f64 };
    let mean_vecs: Vec<DVector<f64>> = means
        .iter()
        .map(|m| DVector::from_column_slice(m))
        .collect();
    let mut score_weights = Vec::with_capacity(k);
    let mut score_offsets = Vec::with_capacity(k);
    for (c, mu) in mean_vecs.iter().enumerate() {
        let a = chol.solve(mu) * denom;
        let off = -0.5 * a.dot(mu) + priors[c].ln();
        score_weights.push(a);
        score_offsets.push(off);
    }

    Ok(LdaModel {
        labels: classes,
        counts,
        priors,
        means: mean_vecs,
        grand_mean: DVector::from_vec(grand),
        pooled_scatter: sw,
        gamma: config.gamma,
        eigenvalues,
        projection,
        score_weights,
        score_offsets,
    })
}

fn floats_to_line(values: impl Iterator<Item = f64>) -> String {
    values
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn line_to_floats(path: &Path, line: &str) -> Result<Vec<f64>, LdaError> {
    if line.is_empty() {
        return Ok(Vec::new());
    }
    line.split(' ')
        .map(|s| {
            s.parse::<f64>().map_err(|_| LdaError::ModelFormat {
                path: path.to_path_buf(),
                reason: format!("bad float {s:?}"),
            })
        })
        .collect()
}

/// Saves a model as a text container; `load_model` reproduces it exactly.
pub fn save_model<L: fmt::Display>(model: &LdaModel<L>, path: &Path) -> Result<(), LdaError> {
    let b = model.dim();
    let m = model.n_components();
    let mut out = String::new();
    out.push_str(&format!("bands={b}\n"));
    out.push_str(&format!("classes={}\n", model.labels.len()));
    out.push_str(&format!("components={m}\n"));
    out.push_str(&format!("gamma={}\n", model.gamma));
    let label_strings: Vec<String> = model.labels.iter().map(|l| l.to_string()).collect();
    out.push_str(&format!("labels={}\n", label_strings.join(",")));
    let count_strings: Vec<String> = model.counts.iter().map(|c| c.to_string()).collect();
    out.push_str(&format!("counts={}\n", count_strings.join(",")));
    out.push_str(&format!(
        "priors={}\n",
        floats_to_line(model.priors.iter().cloned())
    ));
    out.push_str(&format!(
        "offsets={}\n",
        floats_to_line(model.score_offsets.iter().cloned())
    ));
    out.push_str(&format!(
        "eigenvalues={}\n",
        floats_to_line(model.eigenvalues.iter().cloned())
    ));
    out.push_str(&format!(
        "grand_mean={}\n",
        floats_to_line(model.grand_mean.iter().cloned())
    ));
    for (c, mu) in model.means.iter().enumerate() {
        out.push_str(&format!("mean.{c}={}\n", floats_to_line(mu.iter().cloned())));
    }
    for (c, w) in model.score_weights.iter().enumerate() {
        out.push_str(&format!(
            "weight.{c}={}\n",
            floats_to_line(w.iter().cloned())
        ));
    }
    for i in 0..b {
        out.push_str(&format!(
            "scatter.{i}={}\n",
            floats_to_line((0..b).map(|j| model.pooled_scatter[(i, j)]))
        ));
    }
    for i in 0..b {
        out.push_str(&format!(
            "projection.{i}={}\n",
            floats_to_line((0..m).map(|j| model.projection[(i, j)]))
        ));
    }
    fs::write(path, out).map_err(|source| LdaError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a model written by [`save_model`].
pub fn load_model<L>(path: &Path) -> Result<LdaModel<L>, LdaError>
where
    L: FromStr + Clone + Ord + fmt::Debug,
{
    let text = fs::read_to_string(path).map_err(|source| LdaError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |reason: String| LdaError::ModelFormat {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.lines();
    let mut next_kv = |expect: &str| -> Result<String, LdaError> {
        let line = lines
            .next()
            .ok_or_else(|| bad(format!("missing {expect}")))?;
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {line:?} is not key=value")))?;
        if !(key == expect || key.starts_with(&format!("{expect}."))) {
            return Err(bad(format!("expected {expect}, got {key}")));
        }
        Ok(value.to_string())
    };

    let b: usize = next_kv("bands")?.parse().map_err(|_| bad("bad bands".into()))?;
    let k: usize = next_kv("classes")?
        .parse()
        .map_err(|_| bad("bad classes".into()))?;
    let m: usize = next_kv("components")?
        .parse()
        .map_err(|_| bad("bad components".into()))?;
    let gamma: f64 = next_kv("gamma")?.parse().map_err(|_| bad("bad gamma".into()))?;
    let labels: Vec<L> = next_kv("labels")?
        .split(',')
        .map(|s| L::from_str(s).map_err(|_| bad(format!("bad label {s:?}"))))
        .collect::<Result<_, _>>()?;
    if labels.len() != k {
        return Err(bad("label count mismatch".into()));
    }
    let counts: Vec<usize> = next_kv("counts")?
        .split(',')
        .map(|s| s.parse().map_err(|_| bad(format!("bad count {s:?}"))))
        .collect::<Result<_, _>>()?;
    let priors = line_to_floats(path, &next_kv("priors")?)?;
    let score_offsets = line_to_floats(path, &next_kv("offsets")?)?;
    let eigenvalues = line_to_floats(path, &next_kv("eigenvalues")?)?;
    let grand_mean = DVector::from_vec(line_to_floats(path, &next_kv("grand_mean")?)?);
    if grand_mean.len() != b {
        return Err(bad("grand_mean length mismatch".into()));
    }
    let mut means = Vec::with_capacity(k);
    for _ in 0..k {
        means.push(DVector::from_vec(line_to_floats(path, &next_kv("mean")?)?));
    }
    let mut score_weights = Vec::with_capacity(k);
    for _ in 0..k {
        score_weights.push(DVector::from_vec(line_to_floats(
            path,
            &next_kv("weight")?,
        )?));
    }
    let mut scatter = DMatrix::zeros(b, b);
    for i in 0..b {
        let row = line_to_floats(path, &next_kv("scatter")?)?;
        if row.len() != b {
            return Err(bad(format!("scatter row {i} length mismatch")));
        }
        for (j, v) in row.into_iter().enumerate() {
            scatter[(i, j)] = v;
        }
    }
    let mut projection = DMatrix::zeros(b, m);
    for i in 0..b {
        let row = line_to_floats(path, &next_kv("projection")?)?;
        if row.len() != m {
            return Err(bad(format!("projection row {i} length mismatch")));
        }
        for (j, v) in row.into_iter().enumerate() {
            projection[(i, j)] = v;
        }
    }

    Ok(LdaModel {
        labels,
        counts,
        priors,
        means,
        grand_mean,
        pooled_scatter: scatter,
        gamma,
        eigenvalues,
        projection,
        score_weights,
        score_offsets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn rows(data: &[Vec<f64>]) -> Vec<&[f64]> {
        data.iter().map(|r| r.as_slice()).collect()
    }

    fn random_instance(
        seed: u64,
        n: usize,
        b: usize,
        k: usize,
    ) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = crate::rng::substream_rng(seed, 20);
        let mut samples = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = if i < k { i } else { rng.gen_range(0..k) };
            let row: Vec<f64> = (0..b)
                .map(|j| {
                    let noise: f64 = rng.sample(StandardNormal);
                    class as f64 * (1.0 + j as f64 * 0.25) + noise
                })
                .collect();
            samples.push(row);
            labels.push(class);
        }
        (samples, labels)
    }

    #[test]
    fn one_dimensional_two_class_geometry() {
        let data = vec![vec![-1.0], vec![-1.0], vec![1.0], vec![1.0]];
        let labels = vec![0usize, 0, 1, 1];
        let model = fit_lda(
            &rows(&data),
            &labels,
            &LdaConfig {
                gamma: 1e-6,
                priors: PriorsMode::Uniform,
            },
        )
        .unwrap();
        assert_eq!(model.n_components(), 1);
        let p_neg = model.project(&[-1.0]).unwrap()[0];
        let p_pos = model.project(&[1.0]).unwrap()[0];
        assert!(p_neg * p_pos < 0.0, "projected means must have opposite signs");
        assert_eq!(model.classify(&[-0.9]).unwrap().0, 0);
        assert_eq!(model.classify(&[0.9]).unwrap().0, 1);
    }

    #[test]
    fn two_classes_give_exactly_one_component() {
        for b in [1usize, 3, 7] {
            let (samples, labels) = random_instance(b as u64, 24, b, 2);
            let model = fit_lda(&rows(&samples), &labels, &LdaConfig::default()).unwrap();
            assert_eq!(model.n_components(), 1);
        }
    }

    #[test]
    fn rank_bound_holds() {
        for seed in 0..20u64 {
            let k = 2 + (seed as usize % 2);
            let (samples, labels) = random_instance(seed, 30, 5, k);
            let model = fit_lda(&rows(&samples), &labels, &LdaConfig::default()).unwrap();
            assert!(model.n_components() < k);
        }
    }

    #[test]
    fn eigenpairs_satisfy_the_generalized_problem() {
        for seed in 0..25u64 {
            let (samples, labels) = random_instance(seed, 40, 12, 3);
            let model = fit_lda(&rows(&samples), &labels, &LdaConfig::default()).unwrap();

            // rebuild S_b from the model itself
            let b = model.dim();
            let mut sb = DMatrix::<f64>::zeros(b, b);
            for (c, mu) in model.class_means().iter().enumerate() {
                let d = mu - model.grand_mean();
                sb += model.counts()[c] as f64 * &d * d.transpose();
            }
            let sreg = model.regularized_scatter();
            let sb_norm = sb.norm();
            for (j, &lambda) in model.eigenvalues().iter().enumerate() {
                let w = model.projection().column(j);
                let resid = (&sb * w) - lambda * (&sreg * w);
                assert!(
                    resid.norm() <= 1e-7 * sb_norm,
                    "residual {} vs bound {}",
                    resid.norm(),
                    1e-7 * sb_norm
                );
                assert!(lambda >= -1e-10);
                if j > 0 {
                    assert!(lambda <= model.eigenvalues()[j - 1]);
                }
            }
            let prior_sum: f64 = model.priors().iter().sum();
            assert!((prior_sum - 1.0).abs() <= 1e-12);
            assert!(model.priors().iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn projection_is_scatter_orthonormal_and_centered() {
        let (samples, labels) = random_instance(3, 60, 8, 3);
        let model = fit_lda(&rows(&samples), &labels, &LdaConfig::default()).unwrap();
        let sreg = model.regularized_scatter();
        let w = model.projection();
        let gram = w.transpose() * sreg * w;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(gram[(i, j)], expect, epsilon = 1e-8);
            }
        }
        let zero = model
            .project(model.grand_mean().as_slice())
            .unwrap();
        for v in zero {
            assert!(v.abs() < 1e-9);
        }

        // class means land on distinct projected points
        let projected: Vec<Vec<f64>> = model
            .class_means()
            .iter()
            .map(|mu| model.project(mu.as_slice()).unwrap())
            .collect();
        for i in 0..projected.len() {
            for j in (i + 1)..projected.len() {
                let dist: f64 = projected[i]
                    .iter()
                    .zip(&projected[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                assert!(dist > 1e-3, "projected means {i} and {j} coincide");
            }
        }
    }

    #[test]
    fn projection_is_linear() {
        let (samples, labels) = random_instance(5, 30, 6, 3);
        let model = fit_lda(&rows(&samples), &labels, &LdaConfig::default()).unwrap();
        let mut rng = crate::rng::substream_rng(5, 21);
        let x: Vec<f64> = (0..6).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = (0..6).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let (a, bcoef) = (0.7, -1.3);
        // affine combination consistent with mean-centering: project(g + a(x-g) + b(y-g))
        let g = model.grand_mean();
        let combo: Vec<f64> = (0..6)
            .map(|i| g[i] + a * (x[i] - g[i]) + bcoef * (y[i] - g[i]))
            .collect();
        let px = model.project(&x).unwrap();
        let py = model.project(&y).unwrap();
        let pc = model.project(&combo).unwrap();
        for j in 0..pc.len() {
            assert_relative_eq!(pc[j], a * px[j] + bcoef * py[j], epsilon = 1e-9);
        }
    }

    #[test]
    fn class_means_classify_to_their_own_class() {
        let (samples, labels) = random_instance(9, 45, 5, 3);
        let model = fit_lda(
            &rows(&samples),
            &labels,
            &LdaConfig {
                gamma: 1e-3,
                priors: PriorsMode::Uniform,
            },
        )
        .unwrap();
        for (c, mu) in model.class_means().iter().enumerate() {
            let x: Vec<f64> = mu.iter().cloned().collect();
            let (label, posteriors) = model.classify(&x).unwrap();
            assert_eq!(label, model.labels()[c]);
            let sum: f64 = posteriors.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn posteriors_are_normalized_and_shift_invariant() {
        let scores = vec![1.5, -0.25, 0.75];
        let p = softmax(&scores);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = scores.iter().map(|s| s + 100.0).collect();
        let q = softmax(&shifted);
        for (a, b) in p.iter().zip(&q) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn label_is_scale_invariant_at_gamma_zero() {
        for seed in 0..10u64 {
            let (samples, labels) = random_instance(seed, 50, 4, 3);
            let cfg = LdaConfig {
                gamma: 0.0,
                priors: PriorsMode::Empirical,
            };
            let model = fit_lda(&rows(&samples), &labels, &cfg).unwrap();
            let c = 3.5;
            let scaled: Vec<Vec<f64>> = samples
                .iter()
                .map(|r| r.iter().map(|v| v * c).collect())
                .collect();
            let scaled_model = fit_lda(&rows(&scaled), &labels, &cfg).unwrap();
            let mut rng = crate::rng::substream_rng(seed, 22);
            for _ in 0..50 {
                let x: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0).collect();
                let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
                assert_eq!(
                    model.classify(&x).unwrap().0,
                    scaled_model.classify(&xs).unwrap().0
                );
            }
        }
    }

    #[test]
    fn eigenvalues_shrink_monotonically_in_gamma() {
        let (samples, labels) = random_instance(13, 40, 6, 3);
        let gammas = [0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0];
        let mut previous: Option<Vec<f64>> = None;
        for &gamma in &gammas {
            let model = fit_lda(
                &rows(&samples),
                &labels,
                &LdaConfig {
                    gamma,
                    priors: PriorsMode::Empirical,
                },
            )
            .unwrap();
            let ev = model.eigenvalues().to_vec();
            if let Some(prev) = &previous {
                for (p, c) in prev.iter().zip(&ev) {
                    assert!(c <= &(p + 1e-12), "eigenvalue grew with gamma");
                }
            }
            previous = Some(ev);
        }
    }

    #[test]
    fn fitting_is_deterministic() {
        let (samples, labels) = random_instance(31, 50, 10, 3);
        let a = fit_lda(&rows(&samples), &labels, &LdaConfig::default()).unwrap();
        let b = fit_lda(&rows(&samples), &labels, &LdaConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let data = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            fit_lda(&rows(&data), &[0usize, 0], &LdaConfig::default()),
            Err(LdaError::SingleClass(1))
        ));
        let nan = vec![vec![f64::NAN], vec![1.0]];
        assert!(matches!(
            fit_lda(&rows(&nan), &[0usize, 1], &LdaConfig::default()),
            Err(LdaError::NonFinite { row: 0, col: 0 })
        ));
        // zero within-class variance at gamma = 0 cannot be factorized
        let flat = vec![vec![0.0], vec![1.0]];
        let err = fit_lda(
            &rows(&flat),
            &[0usize, 1],
            &LdaConfig {
                gamma: 0.0,
                priors: PriorsMode::Uniform,
            },
        );
        assert!(matches!(err, Err(LdaError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn relabeling_is_binary_and_idempotent() {
        let groups = [Group::Healthy, Group::Sepsis, Group::Pancreatic];
        let binary = relabel_binary(&groups);
        assert_eq!(
            binary,
            vec![
                BinaryLabel::Negative,
                BinaryLabel::Positive,
                BinaryLabel::Negative
            ]
        );
        assert_eq!(relabel_binary(&binary), binary);
        assert_eq!(
            relabel_binary(&[Group::Sepsis, Group::Sepsis]),
            vec![BinaryLabel::Positive; 2]
        );
    }

    #[test]
    fn model_round_trips_through_text() {
        let (samples, labels) = random_instance(77, 25, 5, 3);
        let group_labels: Vec<Group> = labels
            .iter()
            .map(|&c| Group::ALL[c])
            .collect();
        let model = fit_lda(&rows(&samples), &group_labels, &LdaConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.lda");
        save_model(&model, &path).unwrap();
        let loaded: LdaModel<Group> = load_model(&path).unwrap();
        assert_eq!(model, loaded);
    }

    #[test]
    fn classify_rejects_wrong_dimension() {
        let (samples, labels) = random_instance(1, 20, 4, 2);
        let model = fit_lda(&rows(&samples), &labels, &LdaConfig::default()).unwrap();
        assert!(matches!(
            model.classify(&[0.0; 3]),
            Err(LdaError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            model.project(&[0.0; 5]),
            Err(LdaError::DimensionMismatch { .. })
        ));
    }
}
