//! Gaussian (linear) information-theoretic estimators.
//!
//! Every quantity is a function of a single sample covariance, [`CovModel`],
//! and is evaluated through log-determinants of its principal submatrices:
//!
//! - entropy: `H(S) = ½ ln((2πe)^|S| det Σ_S)`
//! - mutual information: `I(A;B) = H(A) + H(B) − H(A∪B)`
//! - conditional MI: `I(A;B|C) = H(A∪C) + H(B∪C) − H(A∪B∪C) − H(C)`
//! - total correlation, dual total correlation and O-information.
//!
//! All values are in nats.

use std::collections::HashSet;
use std::f64::consts::{E, PI};

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nonnegative quantities that come out below zero by less than this are
/// rounding noise and are clamped to zero.
pub const CLAMP_TOLERANCE: f64 = 1e-10;

/// Agreement required between the two algebraic routes to the O-information.
pub const O_INFORMATION_ROUTE_TOLERANCE: f64 = 1e-9;

/// When to regularise a sample covariance, and by how much.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgePolicy {
    /// Relative ridge: the added diagonal is `lambda * trace / d`.
    pub lambda: f64,
    /// Ridge is only added when the condition number exceeds this.
    pub max_condition: f64,
}

impl Default for RidgePolicy {
    fn default() -> Self {
        RidgePolicy {
            lambda: 1e-8,
            max_condition: 1e10,
        }
    }
}

/// Sample covariance over a labelled set of (possibly lagged) variables.
#[derive(Clone, Debug)]
pub struct CovModel {
    labels: Vec<String>,
    matrix: DMatrix<f64>,
    sample_count: usize,
    ridge_applied: f64,
}

impl CovModel {
    /// Wraps a known covariance matrix, e.g. a population covariance.
    pub fn from_matrix(
        labels: Vec<String>,
        matrix: DMatrix<f64>,
        sample_count: usize,
    ) -> Result<Self> {
        let d = labels.len();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::InvalidInput(format!(
                "covariance is {}x{} but there are {d} labels",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        check_unique(&labels)?;
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        for i in 0..d {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariance has non-finite entries".into()));
        }
        Ok(CovModel {
            labels,
            matrix,
            sample_count,
            ridge_applied: 0.0,
        })
    }

    /// Generic labels `v0, v1, …` for a bare matrix.
    pub fn unlabelled(matrix: DMatrix<f64>) -> Result<Self> {
        let labels = (0..matrix.nrows()).map(|i| format!("v{i}")).collect();
        Self::from_matrix(labels, matrix, 0)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    /// Diagonal loading added by the ridge policy (0 when none was needed).
    pub fn ridge_applied(&self) -> f64 {
        self.ridge_applied
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownVariable(label.to_string()))
    }

    pub fn indices<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        labels.iter().map(|l| self.index_of(l.as_ref())).collect()
    }

    /// Principal submatrix on `subset`, in the given order.
    pub fn submatrix(&self, subset: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(subset.len(), subset.len(), |i, j| {
            self.matrix[(subset[i], subset[j])]
        })
    }

    fn labels_of(&self, subset: &[usize]) -> Vec<String> {
        subset
            .iter()
            .filter_map(|&i| self.labels.get(i).cloned())
            .collect()
    }

    fn check_subset(&self, subset: &[usize]) -> Result<()> {
        if subset.is_empty() {
            return Err(Error::InvalidInput("empty variable subset".into()));
        }
        let mut seen = HashSet::with_capacity(subset.len());
        for &i in subset {
            if i >= self.dim() {
                return Err(Error::InvalidInput(format!(
                    "variable index {i} out of range for dimension {}",
                    self.dim()
                )));
            }
            if !seen.insert(i) {
                return Err(Error::InvalidInput(format!(
                    "variable `{}` repeated in subset",
                    self.labels[i]
                )));
            }
        }
        Ok(())
    }

    /// `ln det Σ_S`, via Cholesky.
    pub fn log_det(&self, subset: &[usize]) -> Result<f64> {
        self.check_subset(subset)?;
        let chol = Cholesky::new(self.submatrix(subset))
            .ok_or_else(|| Error::DegenerateSubset(self.labels_of(subset)))?;
        let l = chol.l_dirty();
        let mut acc = 0.0;
        for i in 0..subset.len() {
            let d = l[(i, i)];
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::DegenerateSubset(self.labels_of(subset)));
            }
            acc += d.ln();
        }
        Ok(2.0 * acc)
    }

    /// Differential entropy of the Gaussian marginal on `subset`.
    pub fn gaussian_entropy(&self, subset: &[usize]) -> Result<f64> {
        let k = subset.len() as f64;
        Ok(0.5 * (k * (2.0 * PI * E).ln() + self.log_det(subset)?))
    }

    pub fn mutual_information(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        disjoint(&[a, b])?;
        let ab = union(&[a, b]);
        let value = self.gaussian_entropy(a)? + self.gaussian_entropy(b)?
            - self.gaussian_entropy(&ab)?;
        clamp_nonnegative(value, "mutual information")
    }

    /// `I(A;B|C)`; an empty `C` reduces to [`CovModel::mutual_information`].
    pub fn conditional_mi(&self, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
        if c.is_empty() {
            return self.mutual_information(a, b);
        }
        disjoint(&[a, b, c])?;
        let value = self.log_det(&union(&[a, c]))? + self.log_det(&union(&[b, c]))?
            - self.log_det(&union(&[a, b, c]))?
            - self.log_det(c)?;
        clamp_nonnegative(0.5 * value, "conditional mutual information")
    }

    /// Multi-information: `Σ_k H(X_k) − H(S)`.
    pub fn total_correlation(&self, subset: &[usize]) -> Result<f64> {
        require_multivariate(subset)?;
        let marginals = subset
            .iter()
            .map(|&k| self.gaussian_entropy(&[k]))
            .sum::<Result<f64>>()?;
        clamp_nonnegative(
            marginals - self.gaussian_entropy(subset)?,
            "total correlation",
        )
    }

    /// `H(S) − Σ_k H(X_k | S∖k)`.
    ///
    /// The conditional variances come from the diagonal of the precision
    /// matrix, `Var(X_k | rest) = 1 / (Σ_S⁻¹)_kk`.
    pub fn dual_total_correlation(&self, subset: &[usize]) -> Result<f64> {
        require_multivariate(subset)?;
        self.check_subset(subset)?;
        let chol = Cholesky::new(self.submatrix(subset))
            .ok_or_else(|| Error::DegenerateSubset(self.labels_of(subset)))?;
        let precision = chol.inverse();
        let joint = self.gaussian_entropy(subset)?;
        let half_log_2pie = 0.5 * (2.0 * PI * E).ln();
        let mut conditionals = 0.0;
        for k in 0..subset.len() {
            let p = precision[(k, k)];
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::DegenerateSubset(self.labels_of(subset)));
            }
            conditionals += half_log_2pie - 0.5 * p.ln();
        }
        clamp_nonnegative(joint - conditionals, "dual total correlation")
    }

    /// `Ω(S) = TC(S) − DTC(S)`, cross-checked against
    /// `(n−2) H(S) + Σ_k [H(X_k) − H(S∖k)]`.
    pub fn o_information(&self, subset: &[usize]) -> Result<f64> {
        require_multivariate(subset)?;
        if subset.len() == 2 {
            // TC and DTC both reduce to I(X1;X2).
            self.check_subset(subset)?;
            self.log_det(subset)?;
            return Ok(0.0);
        }
        let by_difference =
            self.total_correlation(subset)? - self.dual_total_correlation(subset)?;

        let n = subset.len();
        let mut by_subsets = (n as f64 - 2.0) * self.gaussian_entropy(subset)?;
        let mut rest = Vec::with_capacity(n - 1);
        for (k, &var) in subset.iter().enumerate() {
            rest.clear();
            rest.extend(subset.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &v)| v));
            by_subsets += self.gaussian_entropy(&[var])? - self.gaussian_entropy(&rest)?;
        }

        if (by_difference - by_subsets).abs() > O_INFORMATION_ROUTE_TOLERANCE {
            return Err(Error::InternalConsistency(format!(
                "O-information routes disagree: {by_difference} vs {by_subsets}"
            )));
        }
        Ok(by_difference)
    }
}

/// Column-centred sample covariance (divisor `T − 1`) of a `T × d` data
/// matrix, ridge-regularised when badly conditioned.
pub fn estimate_covariance(
    labels: Vec<String>,
    data: &DMatrix<f64>,
    policy: &RidgePolicy,
) -> Result<CovModel> {
    let (t, d) = data.shape();
    if labels.len() != d {
        return Err(Error::InvalidInput(format!(
            "{} labels for {d} columns",
            labels.len()
        )));
    }
    check_unique(&labels)?;
    if t <= d {
        return Err(Error::SeriesTooShort {
            needed: d + 1,
            got: t,
        });
    }

    let mut centred = data.clone();
    for (j, mut col) in centred.column_iter_mut().enumerate() {
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(labels[j].clone()));
        }
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let mut matrix = centred.tr_mul(&centred) / (t as f64 - 1.0);
    // tr_mul is symmetric up to summation order; make it exact.
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    for (j, label) in labels.iter().enumerate() {
        if !(matrix[(j, j)] > 0.0) {
            return Err(Error::ZeroVariance(label.clone()));
        }
    }

    let mut ridge_applied = 0.0;
    if condition_number(&matrix) > policy.max_condition {
        ridge_applied = policy.lambda * matrix.trace() / d as f64;
        for i in 0..d {
            matrix[(i, i)] += ridge_applied;
        }
        log::debug!("ridge {ridge_applied:e} added to {d}x{d} covariance");
    }

    Ok(CovModel {
        labels,
        matrix,
        sample_count: t,
        ridge_applied,
    })
}

/// Spectral condition number of a symmetric matrix (infinite if singular).
pub fn condition_number(matrix: &DMatrix<f64>) -> f64 {
    let eig = matrix.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Clamps rounding-level negatives of a nonnegative quantity to zero.
pub fn clamp_nonnegative(value: f64, what: &str) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value > -CLAMP_TOLERANCE {
        Ok(0.0)
    } else {
        Err(Error::InternalConsistency(format!(
            "{what} is negative ({value:e})"
        )))
    }
}

fn require_multivariate(subset: &[usize]) -> Result<()> {
    if subset.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 variables, got {}",
            subset.len()
        )));
    }
    Ok(())
}

fn disjoint(sets: &[&[usize]]) -> Result<()> {
    let mut seen = HashSet::new();
    for set in sets {
        if set.is_empty() {
            return Err(Error::InvalidInput("empty variable subset".into()));
        }
        for &i in set.iter() {
            if !seen.insert(i) {
                return Err(Error::InvalidInput(format!(
                    "variable index {i} appears in more than one subset"
                )));
            }
        }
    }
    Ok(())
}

fn union(sets: &[&[usize]]) -> Vec<usize> {
    sets.iter().flat_map(|s| s.iter().copied()).collect()
}

fn check_unique(labels: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(labels.len());
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate label `{l}`")));
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Log-det oracle by Gaussian elimination, independent of nalgebra.

    use std::f64::consts::{E, PI};

    pub fn det(m: &[Vec<f64>]) -> f64 {
        let n = m.len();
        let mut a: Vec<Vec<f64>> = m.to_vec();
        let mut det = 1.0;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            if a[pivot][col] == 0.0 {
                return 0.0;
            }
            if pivot != col {
                a.swap(pivot, col);
                det = -det;
            }
            det *= a[col][col];
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
        det
    }

    pub fn sub(m: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
        idx.iter()
            .map(|&i| idx.iter().map(|&j| m[i][j]).collect())
            .collect()
    }

    pub fn entropy(m: &[Vec<f64>], idx: &[usize]) -> f64 {
        0.5 * (idx.len() as f64 * (2.0 * PI * E).ln() + det(&sub(m, idx)).ln())
    }

    pub fn mi(m: &[Vec<f64>], a: &[usize], b: &[usize]) -> f64 {
        let ab: Vec<usize> = a.iter().chain(b).copied().collect();
        entropy(m, a) + entropy(m, b) - entropy(m, &ab)
    }

    pub fn cmi(m: &[Vec<f64>], a: &[usize], b: &[usize], c: &[usize]) -> f64 {
        if c.is_empty() {
            return mi(m, a, b);
        }
        let cat = |xs: &[&[usize]]| -> Vec<usize> { xs.iter().flat_map(|x| x.iter().copied()).collect() };
        entropy(m, &cat(&[a, c])) + entropy(m, &cat(&[b, c]))
            - entropy(m, &cat(&[a, b, c]))
            - entropy(m, c)
    }

    pub fn tc(m: &[Vec<f64>], s: &[usize]) -> f64 {
        s.iter().map(|&k| entropy(m, &[k])).sum::<f64>() - entropy(m, s)
    }

    pub fn dtc(m: &[Vec<f64>], s: &[usize]) -> f64 {
        let h = entropy(m, s);
        let cond: f64 = s
            .iter()
            .map(|&k| {
                let rest: Vec<usize> = s.iter().copied().filter(|&j| j != k).collect();
                h - entropy(m, &rest)
            })
            .sum();
        h - cond
    }

    pub fn o_info(m: &[Vec<f64>], s: &[usize]) -> f64 {
        tc(m, s) - dtc(m, s)
    }
}
