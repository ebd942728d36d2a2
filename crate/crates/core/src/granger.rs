//! Pairwise linear Granger causality.
//!
//! For a source `X` and target `Y` the reduced model regresses `Y_t` on its
//! own `p` lags, the full model adds `q` lags of `X`, both by OLS with an
//! intercept. The statistic is `F = ln(σ²_reduced / σ²_full)`, tested with
//! the asymptotic likelihood-ratio law `N·F ~ χ²(q)`.
//!
//! Regressions are carried out on the sample covariance of the lag
//! embedding, so the same [`CovModel`] also yields the Gaussian transfer
//! entropy `I(y; X⁻ | Y⁻)`, which equals `F / 2`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::estimators::{estimate_covariance, CovModel, RidgePolicy};
use crate::ingest::{Exclusion, ReturnPanel};
use crate::network::AdjacencyMatrix;

/// Extra samples required beyond the largest lag.
pub const MIN_EXCESS_SAMPLES: usize = 10;

/// Unfloored statistics below this are treated as a numerical failure.
const NEGATIVE_F_TOLERANCE: f64 = -1e-9;

/// A labelled, borrowed time series.
#[derive(Clone, Copy, Debug)]
pub struct Series<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
}

impl<'a> Series<'a> {
    pub fn new(label: &'a str, values: &'a [f64]) -> Self {
        Series { label, values }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcConfig {
    /// Largest lag order considered by BIC.
    pub p_max: usize,
    /// Significance level for keeping a link.
    pub alpha: f64,
    pub ridge: RidgePolicy,
}

impl Default for GcConfig {
    fn default() -> Self {
        GcConfig {
            p_max: 20,
            alpha: 0.01,
            ridge: RidgePolicy::default(),
        }
    }
}

/// An OLS autoregressive fit (reduced when `sources` is empty).
#[derive(Clone, Debug, PartialEq)]
pub struct VarFit {
    pub target: String,
    pub sources: Vec<String>,
    pub order_p: usize,
    pub order_q: usize,
    /// `a_1..a_p` followed by `b_1..b_q` for each source, in original units.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Maximum-likelihood innovation variance (divisor `sample_count`).
    pub residual_variance: f64,
    pub sample_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcEdge {
    pub source: String,
    pub target: String,
    /// `ln(σ²_r / σ²_f)`, nats, floored at zero.
    pub f_value: f64,
    pub p_value: f64,
    pub order_p: usize,
    pub order_q: usize,
    pub sample_count: usize,
    pub significant: bool,
}

/// Lag embedding of one series: row `r` holds `(x_{t-1}, …, x_{t-p})` for
/// `t = p + r`, and `futures[r] = x_t`.
pub fn embed(series: &[f64], lags: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if lags == 0 {
        return Err(Error::InvalidInput("embedding needs at least one lag".into()));
    }
    if series.len() <= lags {
        return Err(Error::SeriesTooShort {
            needed: lags + 1,
            got: series.len(),
        });
    }
    let rows = series.len() - lags;
    let design = DMatrix::from_fn(rows, lags, |r, l| series[lags + r - (l + 1)]);
    Ok((design, series[lags..].to_vec()))
}

/// Lag-embedded sample covariance of a (source, target) pair, laid out as
/// `[y_t, y_{t-1}..y_{t-p}, x_{t-1}..x_{t-q}]` over rows `t = max(p,q)..T`.
#[derive(Clone, Debug)]
pub struct PairCovariance {
    cov: CovModel,
    p: usize,
    q: usize,
    scale_target: f64,
    scale_source: f64,
    mean_target: f64,
    mean_source: f64,
}

impl PairCovariance {
    pub fn build(
        source: Series<'_>,
        target: Series<'_>,
        p: usize,
        q: usize,
        ridge: &RidgePolicy,
    ) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::InvalidInput("lag orders must be at least 1".into()));
        }
        if source.values.len() != target.values.len() {
            return Err(Error::InvalidInput(format!(
                "`{}` has {} points but `{}` has {}",
                source.label,
                source.values.len(),
                target.label,
                target.values.len()
            )));
        }
        let t = target.values.len();
        let m = p.max(q);
        if t <= m + MIN_EXCESS_SAMPLES {
            return Err(Error::SeriesTooShort {
                needed: m + MIN_EXCESS_SAMPLES + 1,
                got: t,
            });
        }
        let (y, mean_target, scale_target) = standardize(target)?;
        let (x, mean_source, scale_source) = standardize(source)?;

        let rows = t - m;
        let d = 1 + p + q;
        let data = DMatrix::from_fn(rows, d, |r, c| {
            let t = m + r;
            if c == 0 {
                y[t]
            } else if c <= p {
                y[t - c]
            } else {
                x[t - (c - p)]
            }
        });
        let mut labels = Vec::with_capacity(d);
        labels.push(format!("{}[t]", target.label));
        labels.extend((1..=p).map(|l| format!("{}[t-{l}]", target.label)));
        labels.extend((1..=q).map(|l| format!("{}[t-{l}]", source.label)));
        // A series paired with itself would produce duplicate labels.
        if source.label == target.label {
            for l in labels.iter_mut().skip(1 + p) {
                l.insert_str(0, "src:");
            }
        }
        let cov = estimate_covariance(labels, &data, ridge)?;
        Ok(PairCovariance {
            cov,
            p,
            q,
            scale_target,
            scale_source,
            mean_target,
            mean_source,
        })
    }

    pub fn cov(&self) -> &CovModel {
        &self.cov
    }

    pub fn sample_count(&self) -> usize {
        self.cov.sample_count()
    }

    fn target_lags(&self) -> Vec<usize> {
        (1..=self.p).collect()
    }

    fn source_lags(&self) -> Vec<usize> {
        (self.p + 1..=self.p + self.q).collect()
    }

    /// Unfloored `ln(σ²_r / σ²_f)`.
    pub fn granger_f_raw(&self) -> Result<f64> {
        let reduced = residual_variance(&self.cov, 0, &self.target_lags())?;
        let mut all = self.target_lags();
        all.extend(self.source_lags());
        let full = residual_variance(&self.cov, 0, &all)?;
        Ok((reduced / full).ln())
    }

    /// `I(y; X⁻ | Y⁻)` from the same covariance.
    pub fn transfer_entropy(&self) -> Result<f64> {
        self.cov
            .conditional_mi(&[0], &self.source_lags(), &self.target_lags())
    }

    /// OLS fit of the reduced (`with_source = false`) or full model,
    /// reported in the units of the original series.
    pub fn fit(&self, target: &str, source: &str, with_source: bool) -> Result<VarFit> {
        let mut regressors = self.target_lags();
        if with_source {
            regressors.extend(self.source_lags());
        }
        let sxx = self.cov.submatrix(&regressors);
        let sxy = DVector::from_iterator(
            regressors.len(),
            regressors.iter().map(|&r| self.cov.matrix()[(r, 0)]),
        );
        let chol = Cholesky::new(sxx)
            .ok_or_else(|| Error::DegenerateSubset(self.cov.labels()[1..].to_vec()))?;
        let beta = chol.solve(&sxy);
        let resid = residual_variance(&self.cov, 0, &regressors)?;

        let n = self.sample_count() as f64;
        let mut coefficients = Vec::with_capacity(regressors.len());
        let mut intercept = self.mean_target;
        for (k, b) in beta.iter().enumerate() {
            let (coef, mean) = if k < self.p {
                (*b, self.mean_target)
            } else {
                (b * self.scale_target / self.scale_source, self.mean_source)
            };
            intercept -= coef * mean;
            coefficients.push(coef);
        }
        Ok(VarFit {
            target: target.to_string(),
            sources: if with_source {
                vec![source.to_string()]
            } else {
                Vec::new()
            },
            order_p: self.p,
            order_q: if with_source { self.q } else { 0 },
            coefficients,
            intercept,
            residual_variance: resid * (n - 1.0) / n * self.scale_target * self.scale_target,
            sample_count: self.sample_count(),
        })
    }
}

/// Variance of `target` left unexplained by linear regression on
/// `regressors` (the Schur complement), read off a Cholesky factor.
pub fn residual_variance(cov: &CovModel, target: usize, regressors: &[usize]) -> Result<f64> {
    let mut order = regressors.to_vec();
    order.push(target);
    let chol = Cholesky::new(cov.submatrix(&order)).ok_or_else(|| {
        Error::DeterministicFit(cov.labels()[target].clone())
    })?;
    let l = chol.l_dirty()[(order.len() - 1, order.len() - 1)];
    let v = l * l;
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::DeterministicFit(cov.labels()[target].clone()));
    }
    Ok(v)
}

/// BIC lag-order selection over `1..=p_max` with a sample trimmed to `p_max`
/// for every candidate. When a source is given, `q = p` source lags are
/// included. Ties go to the smaller order.
pub fn select_order_bic(
    target: Series<'_>,
    source: Option<Series<'_>>,
    p_max: usize,
    ridge: &RidgePolicy,
) -> Result<usize> {
    let t = target.values.len();
    if p_max == 0 || 4 * p_max >= t {
        return Err(Error::InvalidInput(format!(
            "p_max = {p_max} must satisfy 1 <= p_max < T/4 (T = {t})"
        )));
    }
    if let Some(s) = source {
        if s.values.len() != t {
            return Err(Error::InvalidInput(format!(
                "`{}` and `{}` differ in length",
                s.label, target.label
            )));
        }
    }
    let (y, _, _) = standardize(target)?;
    let x = source.map(standardize).transpose()?.map(|(x, _, _)| x);
    let per_lag = if x.is_some() { 2 } else { 1 };

    // Interleaved lags so that every candidate order is a prefix:
    // [y_{t-1}, x_{t-1}, y_{t-2}, x_{t-2}, …, y_t].
    let rows = t - p_max;
    let d = per_lag * p_max + 1;
    let data = DMatrix::from_fn(rows, d, |r, c| {
        let t = p_max + r;
        if c == d - 1 {
            y[t]
        } else {
            let lag = c / per_lag + 1;
            match (&x, c % per_lag) {
                (Some(x), 1) => x[t - lag],
                _ => y[t - lag],
            }
        }
    });
    let labels = (0..d).map(|i| format!("c{i}")).collect();
    let cov = estimate_covariance(labels, &data, ridge)?;
    let chol = Cholesky::new(cov.matrix().clone())
        .ok_or_else(|| Error::DeterministicFit(target.label.to_string()))?;
    let l = chol.l_dirty();

    let n = rows as f64;
    let total = cov.matrix()[(d - 1, d - 1)];
    let mut explained = 0.0;
    let mut best: Option<(usize, f64)> = None;
    for p in 1..=p_max {
        for j in per_lag * (p - 1)..per_lag * p {
            explained += l[(d - 1, j)] * l[(d - 1, j)];
        }
        let resid = (total - explained) * (n - 1.0) / n;
        if !(resid > 0.0 && resid.is_finite()) {
            continue;
        }
        let params = (per_lag * p + 1) as f64;
        let bic = n * resid.ln() + params * n.ln();
        if best.is_none_or(|(_, b)| bic < b) {
            best = Some((p, bic));
        }
    }
    best.map(|(p, _)| p)
        .ok_or_else(|| Error::DeterministicFit(target.label.to_string()))
}

/// Granger causality from `source` to `target` with `p` target lags and `q`
/// source lags.
pub fn pairwise_gc(
    source: Series<'_>,
    target: Series<'_>,
    p: usize,
    q: usize,
    alpha: f64,
    ridge: &RidgePolicy,
) -> Result<GcEdge> {
    let pair = PairCovariance::build(source, target, p, q, ridge)?;
    let raw = pair.granger_f_raw()?;
    if raw < NEGATIVE_F_TOLERANCE {
        return Err(Error::InternalConsistency(format!(
            "full model fits worse than the nested reduced model (F = {raw:e})"
        )));
    }
    let f_value = raw.max(0.0);
    let n = pair.sample_count();
    let p_value = lr_p_value(n as f64 * f_value, q)?;
    Ok(GcEdge {
        source: source.label.to_string(),
        target: target.label.to_string(),
        f_value,
        p_value,
        order_p: p,
        order_q: q,
        sample_count: n,
        significant: p_value < alpha,
    })
}

/// Upper tail of `χ²(dof)` at `statistic`.
pub fn lr_p_value(statistic: f64, dof: usize) -> Result<f64> {
    let chi2 = ChiSquared::new(dof as f64)
        .map_err(|e| Error::InvalidInput(format!("chi-square law: {e}")))?;
    Ok(chi2.sf(statistic).clamp(0.0, 1.0))
}

/// Gaussian transfer entropy `I(y; X⁻ | Y⁻)` with `p` lags on both sides.
pub fn transfer_entropy_gaussian(
    source: Series<'_>,
    target: Series<'_>,
    p: usize,
    ridge: &RidgePolicy,
) -> Result<f64> {
    PairCovariance::build(source, target, p, p, ridge)?.transfer_entropy()
}

/// Result of the pairwise analysis of one window.
#[derive(Clone, Debug)]
pub struct GcNetwork {
    pub adjacency: AdjacencyMatrix,
    /// Every evaluated ordered pair, significant or not.
    pub edges: Vec<GcEdge>,
    /// Active columns left out as degenerate.
    pub excluded: Vec<Exclusion>,
    /// Pairs whose estimation failed: `(source, target, reason)`.
    pub failures: Vec<(String, String, String)>,
    pub diagnostics: Vec<String>,
}

/// Weighted directed network of one window: `a_ij = F(i → j)` for
/// significant pairs, 0 otherwise. Orders come from BIC per ordered pair,
/// with `q = p`.
pub fn gc_matrix(panel: &ReturnPanel, config: &GcConfig) -> Result<GcNetwork> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::Config(format!("alpha = {} not in (0, 1)", config.alpha)));
    }
    let (usable, excluded) = panel.usable_columns();
    let labels: Vec<String> = usable.iter().map(|&j| panel.labels[j].clone()).collect();
    let n = usable.len();
    let mut diagnostics = Vec::new();
    for ex in &excluded {
        diagnostics.push(format!("window {}: excluded {}", panel.window_id, ex));
    }
    if n < 2 {
        diagnostics.push(format!(
            "window {}: {n} usable column(s), network left empty",
            panel.window_id
        ));
        return Ok(GcNetwork {
            adjacency: AdjacencyMatrix::new(Some(panel.window_id), labels, DMatrix::zeros(n, n), config.alpha)?,
            edges: Vec::new(),
            excluded,
            failures: Vec::new(),
            diagnostics,
        });
    }

    let t = panel.len();
    let p_max = config.p_max.min(t.saturating_sub(1) / 4).max(1);
    if p_max < config.p_max {
        diagnostics.push(format!(
            "window {}: p_max lowered to {p_max} for T = {t}",
            panel.window_id
        ));
    }

    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<GcEdge>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let x = Series::new(&labels[i], panel.column(usable[i]));
            let y = Series::new(&labels[j], panel.column(usable[j]));
            let p = select_order_bic(y, Some(x), p_max, &config.ridge)?;
            pairwise_gc(x, y, p, p, config.alpha, &config.ridge)
        })
        .collect();

    let mut weights = DMatrix::zeros(n, n);
    let mut edges = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (&(i, j), res) in pairs.iter().zip(results) {
        match res {
            Ok(edge) => {
                if edge.significant {
                    weights[(i, j)] = edge.f_value;
                }
                edges.push(edge);
            }
            Err(e) => {
                diagnostics.push(format!(
                    "window {}: {} -> {} failed: {e}",
                    panel.window_id, labels[i], labels[j]
                ));
                failures.push((labels[i].clone(), labels[j].clone(), e.to_string()));
            }
        }
    }
    Ok(GcNetwork {
        adjacency: AdjacencyMatrix::new(Some(panel.window_id), labels, weights, config.alpha)?,
        edges,
        excluded,
        failures,
        diagnostics,
    })
}

/// Z-scores a series; constant or non-finite input is rejected.
fn standardize(series: Series<'_>) -> Result<(Vec<f64>, f64, f64)> {
    let v = series.values;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(series.label.to_string()));
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance(series.label.to_string()));
    }
    Ok((v.iter().map(|x| (x - mean) / sd).collect(), mean, sd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_var, CouplingSpec};
    use rand::{Rng, SeedableRng};

    #[test]
    fn embed_layout() {
        let (design, futures) = embed(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(design, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 3.0, 2.0]));
        assert_eq!(futures, vec![3.0, 4.0]);

        let (design, futures) = embed(&[5.0, 6.0], 1).unwrap();
        assert_eq!(design.nrows(), 1);
        assert_eq!(futures, vec![6.0]);

        let (design, _) = embed(&[2.0; 6], 2).unwrap();
        assert!(design.iter().all(|&v| v == 2.0));

        assert!(embed(&[1.0, 2.0], 2).is_err());
    }

    fn white(seed: u64, t: usize) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..t).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
    }

    #[test]
    fn bic_prefers_order_one_on_white_noise() {
        let y = white(11, 5000);
        let x = white(12, 5000);
        let ridge = RidgePolicy::default();
        assert_eq!(select_order_bic(Series::new("y", &y), None, 10, &ridge).unwrap(), 1);
        assert_eq!(
            select_order_bic(Series::new("y", &y), Some(Series::new("x", &x)), 10, &ridge).unwrap(),
            1
        );
    }

    #[test]
    fn bic_rejects_bad_p_max() {
        let y = white(1, 40);
        let ridge = RidgePolicy::default();
        assert!(select_order_bic(Series::new("y", &y), None, 10, &ridge).is_err());
        assert!(select_order_bic(Series::new("y", &y), None, 0, &ridge).is_err());
    }

    #[test]
    fn bic_recovers_ar3() {
        let spec = CouplingSpec::new(1, vec![(0, 0, 1, 0.2), (0, 0, 3, 0.6)], vec![1.0], 5).unwrap();
        let y = gen_var(&spec, 20_000).unwrap().column(0).to_vec();
        let p = select_order_bic(Series::new("y", &y), None, 8, &RidgePolicy::default()).unwrap();
        assert_eq!(p, 3);
    }

    #[test]
    fn gc_detects_shifted_copy() {
        let x = white(21, 3000);
        let noise = white(22, 3000);
        let y: Vec<f64> = (0..3000)
            .map(|t| if t == 0 { 0.0 } else { x[t - 1] + 1e-4 * noise[t] })
            .collect();
        let edge = pairwise_gc(
            Series::new("x", &x),
            Series::new("y", &y),
            1,
            1,
            0.01,
            &RidgePolicy::default(),
        )
        .unwrap();
        assert!(edge.f_value > 10.0, "{}", edge.f_value);
        assert!(edge.p_value < 1e-12);
        assert!(edge.significant);
    }

    #[test]
    fn constant_input_is_rejected() {
        let x = vec![1.0; 100];
        let y = white(3, 100);
        let err = pairwise_gc(Series::new("x", &x), Series::new("y", &y), 1, 1, 0.01, &RidgePolicy::default())
            .unwrap_err();
        assert!(matches!(err, Error::ZeroVariance(ref l) if l == "x"));
    }

    #[test]
    fn too_short_is_rejected() {
        let x = white(3, 12);
        let y = white(4, 12);
        assert!(matches!(
            pairwise_gc(Series::new("x", &x), Series::new("y", &y), 2, 2, 0.01, &RidgePolicy::default()),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn fits_recover_coefficients_in_original_units() {
        // y_t = 0.5 y_{t-1} + 0.9 x_{t-1} + e, with x scaled by 10
        let spec = CouplingSpec::new(2, vec![(1, 1, 1, 0.5), (0, 1, 1, 0.9)], vec![1.0, 1.0], 8).unwrap();
        let panel = gen_var(&spec, 50_000).unwrap();
        let x: Vec<f64> = panel.column(0).iter().map(|v| 10.0 * v + 3.0).collect();
        let y = panel.column(1).to_vec();
        let pair = PairCovariance::build(Series::new("x", &x), Series::new("y", &y), 1, 1, &RidgePolicy::default()).unwrap();
        let full = pair.fit("y", "x", true).unwrap();
        assert_eq!(full.coefficients.len(), 2);
        assert!((full.coefficients[0] - 0.5).abs() < 0.02);
        assert!((full.coefficients[1] - 0.09).abs() < 0.002);
        assert!((full.residual_variance - 1.0).abs() < 0.03);
        assert_eq!(full.sample_count, 49_999);
        let reduced = pair.fit("y", "x", false).unwrap();
        assert!(reduced.sources.is_empty());
        assert!((reduced.residual_variance - 1.81).abs() < 0.05);
        assert!(reduced.residual_variance > full.residual_variance);
    }

    #[test]
    fn gc_is_deterministic_and_te_identity_holds() {
        let spec = CouplingSpec::new(2, vec![(1, 1, 1, 0.5), (0, 1, 1, 0.4)], vec![1.0, 1.0], 99).unwrap();
        let panel = gen_var(&spec, 4000).unwrap();
        let x = Series::new("x", panel.column(0));
        let y = Series::new("y", panel.column(1));
        let ridge = RidgePolicy::default();
        let a = pairwise_gc(x, y, 2, 2, 0.01, &ridge).unwrap();
        let b = pairwise_gc(x, y, 2, 2, 0.01, &ridge).unwrap();
        assert_eq!(a, b);
        let pair = PairCovariance::build(x, y, 2, 2, &ridge).unwrap();
        let f = pair.granger_f_raw().unwrap();
        let te = pair.transfer_entropy().unwrap();
        assert!((f - 2.0 * te).abs() < 1e-9);
    }

    #[test]
    fn gc_matrix_single_column_is_empty() {
        let spec = CouplingSpec::independent(1, 1);
        let panel = gen_var(&spec, 2000).unwrap();
        let net = gc_matrix(&panel, &GcConfig::default()).unwrap();
        assert_eq!(net.adjacency.len(), 1);
        assert!(net.edges.is_empty());
        assert!(!net.diagnostics.is_empty());
    }
}
