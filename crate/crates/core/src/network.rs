//! Statistics over per-window Granger networks.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::granger::GcEdge;
use crate::oinfo::{MultipletKind, MultipletResult};

/// Fewest shared node pairs for which two windows are compared.
pub const MIN_CORRELATION_OVERLAP: usize = 10;

/// Level above which a window correlation is reported as not significant.
pub const CORRELATION_SIGNIFICANCE: f64 = 0.01;

/// Trailing window of the moving averages in [`window_indicators`].
pub const MOVING_AVERAGE_WINDOWS: usize = 10;

/// Directed weighted network: `weights[(i, j)]` is the causality from
/// `labels[i]` to `labels[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyMatrix {
    /// `None` for a network that aggregates several windows.
    pub window_id: Option<usize>,
    pub labels: Vec<String>,
    pub weights: DMatrix<f64>,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Strengths {
    pub k_out: Vec<f64>,
    pub k_in: Vec<f64>,
}

impl AdjacencyMatrix {
    pub fn new(
        window_id: Option<usize>,
        labels: Vec<String>,
        weights: DMatrix<f64>,
        alpha: f64,
    ) -> Result<Self> {
        let n = labels.len();
        if weights.shape() != (n, n) {
            return Err(Error::InvalidInput(format!(
                "adjacency is {:?} for {n} labels",
                weights.shape()
            )));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::InvalidInput(format!("duplicate node `{dup}`")));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::InvalidInput(format!("self-loop on `{}`", labels[i])));
            }
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput("adjacency weights must be finite and >= 0".into()));
        }
        Ok(AdjacencyMatrix {
            window_id,
            labels,
            weights,
            alpha,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// `k_out_i = Σ_j a_ij`, `k_in_i = Σ_j a_ji`.
    pub fn strengths(&self) -> Strengths {
        let n = self.len();
        let k_out = (0..n).map(|i| self.weights.row(i).sum()).collect();
        let k_in = (0..n).map(|i| self.weights.column(i).sum()).collect();
        Strengths { k_out, k_in }
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.sum()
    }
}

/// Mean network over windows. Each edge is averaged over the windows in
/// which both of its endpoints are present.
pub fn average_network(matrices: &[AdjacencyMatrix]) -> Result<AdjacencyMatrix> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::InvalidInput("no networks to average".into()))?;
    let labels: Vec<String> = matrices
        .iter()
        .flat_map(|m| m.labels.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let n = labels.len();
    let mut sum = DMatrix::<f64>::zeros(n, n);
    let mut count = DMatrix::<u32>::zeros(n, n);
    for m in matrices {
        let map: Vec<usize> = m.labels.iter().map(|l| index[l.as_str()]).collect();
        for i in 0..m.len() {
            for j in 0..m.len() {
                if i != j {
                    sum[(map[i], map[j])] += m.weights[(i, j)];
                    count[(map[i], map[j])] += 1;
                }
            }
        }
    }
    let weights = DMatrix::from_fn(n, n, |i, j| {
        if count[(i, j)] == 0 {
            0.0
        } else {
            sum[(i, j)] / count[(i, j)] as f64
        }
    });
    AdjacencyMatrix::new(None, labels, weights, first.alpha)
}

/// Pearson coefficient and two-sided p-value; `None` when undefined.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return None;
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    Some((r, correlation_p_value(r, n)))
}

/// Two-sided p-value of a correlation coefficient via the `t(n−2)` law.
fn correlation_p_value(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let law = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * law.sf(t.abs())).clamp(0.0, 1.0)
}

/// Pairwise similarity of window networks.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowCorrelation {
    pub window_ids: Vec<Option<usize>>,
    /// Pearson coefficients; NaN where undefined, 1 on the diagonal.
    pub coefficients: DMatrix<f64>,
    /// NaN on the diagonal and where undefined.
    pub p_values: DMatrix<f64>,
    /// Node pairs shared by both windows.
    pub overlap: DMatrix<usize>,
}

impl WindowCorrelation {
    pub fn is_defined(&self, h: usize, k: usize) -> bool {
        !self.coefficients[(h, k)].is_nan()
    }

    /// Off-diagonal entries with `p <= 0.01`.
    pub fn is_significant(&self, h: usize, k: usize) -> bool {
        h != k && self.p_values[(h, k)] <= CORRELATION_SIGNIFICANCE
    }
}

/// Pearson correlation between the off-diagonal weights of every pair of
/// windows, restricted to ordered node pairs present in both.
pub fn window_correlation(matrices: &[AdjacencyMatrix]) -> Result<WindowCorrelation> {
    let w = matrices.len();
    if w < 2 {
        return Err(Error::InvalidInput(format!(
            "window correlation needs at least 2 networks, got {w}"
        )));
    }
    let mut coefficients = DMatrix::from_element(w, w, f64::NAN);
    let mut p_values = DMatrix::from_element(w, w, f64::NAN);
    let mut overlap = DMatrix::zeros(w, w);
    for h in 0..w {
        coefficients[(h, h)] = 1.0;
        let nh = matrices[h].len();
        overlap[(h, h)] = nh * nh.saturating_sub(1);
        for k in h + 1..w {
            let (a, b) = (&matrices[h], &matrices[k]);
            let shared: Vec<(usize, usize)> = a
                .labels
                .iter()
                .enumerate()
                .filter_map(|(i, l)| b.index_of(l).map(|j| (i, j)))
                .collect();
            let mut x = Vec::new();
            let mut y = Vec::new();
            for &(ai, bi) in &shared {
                for &(aj, bj) in &shared {
                    if ai != aj {
                        x.push(a.weights[(ai, aj)]);
                        y.push(b.weights[(bi, bj)]);
                    }
                }
            }
            overlap[(h, k)] = x.len();
            overlap[(k, h)] = x.len();
            if x.len() < MIN_CORRELATION_OVERLAP {
                continue;
            }
            if let Some((r, p)) = pearson(&x, &y) {
                coefficients[(h, k)] = r;
                coefficients[(k, h)] = r;
                p_values[(h, k)] = p;
                p_values[(k, h)] = p;
            }
        }
    }
    Ok(WindowCorrelation {
        window_ids: matrices.iter().map(|m| m.window_id).collect(),
        coefficients,
        p_values,
        overlap,
    })
}

/// Average ranks (1-based), ties sharing the mean rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankCorrelation {
    /// `None` when either variable has constant ranks.
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
    pub n: usize,
}

impl RankCorrelation {
    /// `**` for p < 0.01, `*` for p < 0.05.
    pub fn stars(&self) -> &'static str {
        match self.p_value {
            Some(p) if p < 0.01 => "**",
            Some(p) if p < 0.05 => "*",
            _ => "",
        }
    }
}

pub fn spearman(x: &[f64], y: &[f64]) -> RankCorrelation {
    let n = x.len().min(y.len());
    match pearson(&ranks(&x[..n]), &ranks(&y[..n])) {
        Some((rho, p)) => RankCorrelation {
            rho: Some(rho),
            p_value: Some(p),
            n,
        },
        None => RankCorrelation {
            rho: None,
            p_value: None,
            n,
        },
    }
}

/// Age and time-averaged strengths of one node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeHistory {
    pub ticker: String,
    /// Windows in which the node was present.
    pub age: usize,
    pub mean_in: f64,
    pub mean_out: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgeStrength {
    pub nodes: Vec<NodeHistory>,
    pub rho_in: RankCorrelation,
    pub rho_out: RankCorrelation,
}

/// Per-node ages and mean strengths over the windows where each node is
/// present, sorted by ticker.
pub fn node_histories(matrices: &[AdjacencyMatrix]) -> Vec<NodeHistory> {
    let mut acc: BTreeMap<&str, (usize, f64, f64)> = BTreeMap::new();
    for m in matrices {
        let s = m.strengths();
        for (i, l) in m.labels.iter().enumerate() {
            let e = acc.entry(l.as_str()).or_insert((0, 0.0, 0.0));
            e.0 += 1;
            e.1 += s.k_in[i];
            e.2 += s.k_out[i];
        }
    }
    acc.into_iter()
        .map(|(t, (age, sin, sout))| NodeHistory {
            ticker: t.to_string(),
            age,
            mean_in: sin / age as f64,
            mean_out: sout / age as f64,
        })
        .collect()
}

/// Spearman correlation of node age with mean in- and out-strength.
pub fn age_strength_correlation(nodes: Vec<NodeHistory>) -> Result<AgeStrength> {
    if nodes.len() < 5 {
        return Err(Error::InvalidInput(format!(
            "age-strength correlation needs at least 5 nodes, got {}",
            nodes.len()
        )));
    }
    let ages: Vec<f64> = nodes.iter().map(|n| n.age as f64).collect();
    let k_in: Vec<f64> = nodes.iter().map(|n| n.mean_in).collect();
    let k_out: Vec<f64> = nodes.iter().map(|n| n.mean_out).collect();
    Ok(AgeStrength {
        rho_in: spearman(&ages, &k_in),
        rho_out: spearman(&ages, &k_out),
        nodes,
    })
}

/// Inputs of one window for [`window_indicators`]; absent parts are `None`.
#[derive(Clone, Debug, Default)]
pub struct WindowInputs<'a> {
    pub window_id: usize,
    pub start: i64,
    pub traded_value: Option<f64>,
    pub edges: Option<&'a [GcEdge]>,
    pub multiplets: Option<&'a [MultipletResult]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorOptions {
    /// Average `F` over significant pairs only instead of all pairs.
    pub significant_only: bool,
    /// Multiplet size whose values are averaged.
    pub multiplet_size: usize,
}

impl Default for IndicatorOptions {
    fn default() -> Self {
        IndicatorOptions {
            significant_only: false,
            multiplet_size: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRow {
    pub window: usize,
    pub start: i64,
    pub total_volume: Option<f64>,
    pub mean_f: Option<f64>,
    pub mean_redundancy: Option<f64>,
    pub mean_synergy: Option<f64>,
    pub ma10_total_volume: Option<f64>,
    pub ma10_mean_f: Option<f64>,
    pub ma10_mean_redundancy: Option<f64>,
    pub ma10_mean_synergy: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Trailing moving average over up to `width` rows, skipping gaps.
pub fn trailing_mean(series: &[Option<f64>], width: usize) -> Vec<Option<f64>> {
    (0..series.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(width);
            mean(series[lo..=i].iter().flatten().copied())
        })
        .collect()
}

/// Per-window summary: traded value, mean Granger statistic, and mean
/// redundant / synergistic dynamic O-information of the best multiplets of
/// the configured size, each with a trailing 10-window moving average.
pub fn window_indicators(windows: &[WindowInputs<'_>], options: &IndicatorOptions) -> Vec<IndicatorRow> {
    let volume: Vec<Option<f64>> = windows.iter().map(|w| w.traded_value).collect();
    let mean_f: Vec<Option<f64>> = windows
        .iter()
        .map(|w| {
            w.edges.and_then(|edges| {
                mean(
                    edges
                        .iter()
                        .filter(|e| !options.significant_only || e.significant)
                        .map(|e| e.f_value),
                )
            })
        })
        .collect();
    let kind_mean = |kind: MultipletKind| -> Vec<Option<f64>> {
        windows
            .iter()
            .map(|w| {
                w.multiplets.and_then(|ms| {
                    mean(
                        ms.iter()
                            .filter(|m| m.kind == kind && m.size == options.multiplet_size)
                            .map(|m| m.value),
                    )
                })
            })
            .collect()
    };
    let redundancy = kind_mean(MultipletKind::Redundant);
    let synergy = kind_mean(MultipletKind::Synergistic);

    let ma_volume = trailing_mean(&volume, MOVING_AVERAGE_WINDOWS);
    let ma_f = trailing_mean(&mean_f, MOVING_AVERAGE_WINDOWS);
    let ma_red = trailing_mean(&redundancy, MOVING_AVERAGE_WINDOWS);
    let ma_syn = trailing_mean(&synergy, MOVING_AVERAGE_WINDOWS);

    windows
        .iter()
        .enumerate()
        .map(|(i, w)| IndicatorRow {
            window: w.window_id,
            start: w.start,
            total_volume: volume[i],
            mean_f: mean_f[i],
            mean_redundancy: redundancy[i],
            mean_synergy: synergy[i],
            ma10_total_volume: ma_volume[i],
            ma10_mean_f: ma_f[i],
            ma10_mean_redundancy: ma_red[i],
            ma10_mean_synergy: ma_syn[i],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn adj(id: usize, labels: &[&str], rows: &[&[f64]]) -> AdjacencyMatrix {
        let n = labels.len();
        let w = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        AdjacencyMatrix::new(Some(id), labels.iter().map(|s| s.to_string()).collect(), w, 0.01).unwrap()
    }

    fn random_adj(id: usize, n: usize, rng: &mut impl Rng) -> AdjacencyMatrix {
        let labels: Vec<String> = (0..n).map(|i| format!("n{i:02}")).collect();
        let w = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rng.random::<f64>() });
        AdjacencyMatrix::new(Some(id), labels, w, 0.01).unwrap()
    }

    #[test]
    fn strength_examples() {
        let s = adj(0, &["a", "b"], &[&[0.0, 1.0], &[2.0, 0.0]]).strengths();
        assert_eq!(s.k_out, vec![1.0, 2.0]);
        assert_eq!(s.k_in, vec![2.0, 1.0]);

        let zero = adj(0, &["a", "b", "c"], &[&[0.0; 3], &[0.0; 3], &[0.0; 3]]).strengths();
        assert_eq!(zero.k_out, vec![0.0; 3]);
        assert_eq!(zero.k_in, vec![0.0; 3]);

        let labels = ["hub", "l1", "l2", "l3", "l4", "l5"];
        let w = DMatrix::from_fn(6, 6, |i, j| if i == 0 && j > 0 { 0.3 } else { 0.0 });
        let star = AdjacencyMatrix::new(Some(0), labels.iter().map(|s| s.to_string()).collect(), w, 0.01).unwrap();
        let s = star.strengths();
        assert_close!(s.k_out[0], 1.5, 1e-12);
        for leaf in 1..6 {
            assert_close!(s.k_in[leaf], 0.3, 1e-15);
        }
    }

    #[test]
    fn rejects_self_loops_and_negative_weights() {
        let labels = vec!["a".to_string(), "b".to_string()];
        assert!(AdjacencyMatrix::new(None, labels.clone(), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), 0.01).is_err());
        assert!(AdjacencyMatrix::new(None, labels, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 0.0, 0.0]), 0.01).is_err());
    }

    #[test]
    fn average_network_rules() {
        let a = adj(0, &["x", "y"], &[&[0.0, 2.0], &[1.0, 0.0]]);
        assert_eq!(average_network(&[a.clone(), a.clone()]).unwrap().weights, a.weights);

        let b = adj(1, &["x", "y"], &[&[0.0, 0.0], &[1.0, 0.0]]);
        let avg = average_network(&[a.clone(), b]).unwrap();
        assert_eq!(avg.weights[(0, 1)], 1.0);
        assert_eq!(avg.window_id, None);

        // z only present in one window: its edges are that window's weights
        let c = adj(2, &["x", "z"], &[&[0.0, 0.4], &[0.6, 0.0]]);
        let avg = average_network(&[a, c]).unwrap();
        assert_eq!(avg.labels, vec!["x", "y", "z"]);
        assert_eq!(avg.weights[(0, 2)], 0.4);
        assert_eq!(avg.weights[(2, 0)], 0.6);
        assert_eq!(avg.weights[(1, 2)], 0.0);

        assert!(average_network(&[]).is_err());
    }

    #[test]
    fn window_correlation_examples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let a = random_adj(0, 6, &mut rng);
        let mut doubled = a.clone();
        doubled.weights *= 2.0;
        doubled.window_id = Some(1);
        let wc = window_correlation(&[a.clone(), doubled, a.clone()]).unwrap();
        assert_close!(wc.coefficients[(0, 1)], 1.0, 1e-12);
        assert_close!(wc.coefficients[(0, 2)], 1.0, 1e-12);
        assert_eq!(wc.coefficients[(1, 1)], 1.0);
        assert!(wc.is_significant(0, 1));

        // fewer than 10 shared ordered pairs: undefined
        let small = random_adj(3, 3, &mut rng);
        let wc = window_correlation(&[small.clone(), small]).unwrap();
        assert!(!wc.is_defined(0, 1));
        assert_eq!(wc.overlap[(0, 1)], 6);

        assert!(window_correlation(&[a]).is_err());
    }

    #[test]
    fn independent_networks_are_rarely_significant() {
        // permutation-style Monte Carlo: 200 pairs of independent 30-node networks
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut flagged = 0;
        for _ in 0..200 {
            let a = random_adj(0, 30, &mut rng);
            let b = random_adj(1, 30, &mut rng);
            let wc = window_correlation(&[a, b]).unwrap();
            assert!(wc.coefficients[(0, 1)].abs() < 0.15);
            if wc.is_significant(0, 1) {
                flagged += 1;
            }
        }
        // expected 2 of 200 at the 1% level
        assert!(flagged <= 8, "{flagged}");
    }

    #[test]
    fn spearman_examples() {
        let ages = [1.0, 2.0, 3.0, 4.0, 5.0];
        let up = spearman(&ages, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_close!(up.rho.unwrap(), 1.0, 1e-12);
        assert_eq!(up.stars(), "**");
        let down = spearman(&ages, &[5.0, 4.0, 3.0, 2.0, 1.0]);
        assert_close!(down.rho.unwrap(), -1.0, 1e-12);
        let flat = spearman(&ages, &[1.0; 5]);
        assert_eq!(flat.rho, None);
    }

    #[test]
    fn spearman_on_independent_data() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut significant = 0;
        for _ in 0..200 {
            let a: Vec<f64> = (0..100).map(|_| rng.random()).collect();
            let b: Vec<f64> = (0..100).map(|_| rng.random()).collect();
            let r = spearman(&a, &b);
            assert!(r.rho.unwrap().abs() < 0.4);
            if r.p_value.unwrap() < 0.05 {
                significant += 1;
            }
        }
        assert!(significant <= 20, "{significant}");
    }

    #[test]
    fn rank_ties_share_mean_rank() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn age_strength_requires_five_nodes() {
        let nodes = node_histories(&[adj(0, &["a", "b"], &[&[0.0, 1.0], &[0.0, 0.0]])]);
        assert_eq!(nodes.len(), 2);
        assert!(age_strength_correlation(nodes).is_err());
    }

    #[test]
    fn node_histories_average_over_presence() {
        let w0 = adj(0, &["a", "b"], &[&[0.0, 1.0], &[0.0, 0.0]]);
        let w1 = adj(1, &["a", "b", "c"], &[&[0.0, 3.0, 0.0], &[0.0, 0.0, 0.0], &[2.0, 0.0, 0.0]]);
        let h = node_histories(&[w0, w1]);
        assert_eq!(h[0], NodeHistory { ticker: "a".into(), age: 2, mean_in: 1.0, mean_out: 2.0 });
        assert_eq!(h[2], NodeHistory { ticker: "c".into(), age: 1, mean_in: 0.0, mean_out: 2.0 });
    }

    fn edge(f: f64, significant: bool) -> GcEdge {
        GcEdge {
            source: "a".into(),
            target: "b".into(),
            f_value: f,
            p_value: if significant { 0.0 } else { 0.5 },
            order_p: 1,
            order_q: 1,
            sample_count: 100,
            significant,
        }
    }

    #[test]
    fn indicator_means_and_moving_average() {
        let edges = [edge(0.2, true), edge(0.4, false)];
        let rows = window_indicators(
            &[WindowInputs {
                window_id: 0,
                start: 0,
                traded_value: Some(50.0),
                edges: Some(&edges),
                multiplets: None,
            }],
            &IndicatorOptions::default(),
        );
        assert_close!(rows[0].mean_f.unwrap(), 0.3, 1e-15);
        assert_eq!(rows[0].total_volume, Some(50.0));
        assert_eq!(rows[0].mean_synergy, None);
        let sig = window_indicators(
            &[WindowInputs { window_id: 0, start: 0, traded_value: None, edges: Some(&edges), multiplets: None }],
            &IndicatorOptions { significant_only: true, multiplet_size: 5 },
        );
        assert_eq!(sig[0].mean_f, Some(0.2));

        let constant = vec![Some(4.0); 25];
        assert!(trailing_mean(&constant, 10).iter().all(|v| *v == Some(4.0)));
        let ramp: Vec<Option<f64>> = (0..12).map(|i| Some(i as f64)).collect();
        let ma = trailing_mean(&ramp, 10);
        assert_eq!(ma[0], Some(0.0));
        assert_eq!(ma[11], Some(6.5));
    }

    proptest! {
        #[test]
        fn strength_sums_balance(n in 1usize..12, seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = random_adj(0, n, &mut rng);
            let s = m.strengths();
            let total = m.total_weight();
            prop_assert!((s.k_in.iter().sum::<f64>() - total).abs() < 1e-9);
            prop_assert!((s.k_out.iter().sum::<f64>() - total).abs() < 1e-9);
        }

        #[test]
        fn window_correlation_is_symmetric_and_bounded(seed in any::<u64>(), w in 2usize..6) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let ms: Vec<AdjacencyMatrix> = (0..w).map(|i| random_adj(i, 5, &mut rng)).collect();
            let wc = window_correlation(&ms).unwrap();
            for h in 0..w {
                prop_assert_eq!(wc.coefficients[(h, h)], 1.0);
                for k in 0..w {
                    let c = wc.coefficients[(h, k)];
                    prop_assert!(c.is_nan() && wc.coefficients[(k, h)].is_nan() || c == wc.coefficients[(k, h)]);
                    prop_assert!(c.is_nan() || (-1.0..=1.0).contains(&c));
                }
            }
        }

        #[test]
        fn average_lies_between_extremes(seed in any::<u64>(), w in 1usize..5) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let ms: Vec<AdjacencyMatrix> = (0..w).map(|i| random_adj(i, 4, &mut rng)).collect();
            let avg = average_network(&ms).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    let lo = ms.iter().map(|m| m.weights[(i, j)]).fold(f64::INFINITY, f64::min);
                    let hi = ms.iter().map(|m| m.weights[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(avg.weights[(i, j)] >= lo - 1e-12 && avg.weights[(i, j)] <= hi + 1e-12);
                }
            }
        }

        #[test]
        fn spearman_ignores_monotone_transforms(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = (0..20).map(|_| rng.random_range(1.0..10.0)).collect();
            let b: Vec<f64> = (0..20).map(|_| rng.random_range(0.1..10.0)).collect();
            let t: Vec<f64> = b.iter().map(|v| v.ln() * 3.0 + v.powi(3)).collect();
            prop_assert_eq!(spearman(&a, &b), spearman(&a, &t));
        }
    }
}
