//! Dynamic O-information toward a target and the search for the most
//! redundant and most synergistic source multiplets.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate_covariance, CovModel, RidgePolicy, O_INFORMATION_ROUTE_TOLERANCE};
use crate::ingest::{AssetClass, Registry, ReturnPanel};
use crate::synth::stream_rng;

/// Largest multiplet the search builds by default.
pub const DEFAULT_N_MAX: usize = 5;

/// Samples beyond the parameter count a dynamic O-information fit needs.
pub const MIN_EXCESS_SAMPLES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultipletKind {
    Redundant,
    Synergistic,
}

impl MultipletKind {
    pub const ALL: [MultipletKind; 2] = [MultipletKind::Redundant, MultipletKind::Synergistic];

    pub fn as_str(self) -> &'static str {
        match self {
            MultipletKind::Redundant => "redundant",
            MultipletKind::Synergistic => "synergistic",
        }
    }

    /// Whether `a` is strictly more extreme than `b` for this kind.
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            MultipletKind::Redundant => a > b,
            MultipletKind::Synergistic => a < b,
        }
    }
}

impl fmt::Display for MultipletKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MultipletKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "redundant" | "redundancy" => Ok(MultipletKind::Redundant),
            "synergistic" | "synergy" => Ok(MultipletKind::Synergistic),
            other => Err(Error::InvalidInput(format!("unknown multiplet kind `{other}`"))),
        }
    }
}

/// Best multiplet of one size and kind for one target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultipletResult {
    pub window_id: usize,
    pub target: String,
    pub kind: MultipletKind,
    pub size: usize,
    /// In selection order: the pair (sorted), then one member per extension.
    pub members: Vec<String>,
    /// Dynamic O-information in nats.
    pub value: f64,
    pub lag_p: usize,
}

/// `Δʸ = (1−n) I(y; S) + Σ_k I(y; S∖k)`: the change in O-information from
/// adjoining `target` to `sources`.
pub fn delta_y(cov: &CovModel, sources: &[usize], target: usize) -> Result<f64> {
    let n = sources.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("Δʸ needs at least 2 sources, got {n}")));
    }
    if sources.contains(&target) {
        return Err(Error::InvalidInput("target is among the sources".into()));
    }
    let y = [target];
    let mut value = (1.0 - n as f64) * cov.mutual_information(&y, sources)?;
    for k in 0..n {
        value += cov.mutual_information(&y, &without(sources, k))?;
    }

    let mut joint = sources.to_vec();
    joint.push(target);
    let lhs = cov.o_information(&joint)?;
    let rhs = cov.o_information(sources)? + value;
    let scale = lhs.abs().max(rhs.abs()).max(1.0);
    if (lhs - rhs).abs() > O_INFORMATION_ROUTE_TOLERANCE * scale {
        return Err(Error::InternalConsistency(format!(
            "Ω(S ∪ y) = {lhs} but Ω(S) + Δʸ = {rhs}"
        )));
    }
    Ok(value)
}

fn without(set: &[usize], k: usize) -> Vec<usize> {
    set.iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .map(|(_, &v)| v)
        .collect()
}

/// Joint covariance of the present value and lags `1..=p` of a set of
/// z-scored columns, over the rows where every lag exists.
#[derive(Clone, Debug)]
pub struct LaggedCovariance {
    labels: Vec<String>,
    lag: usize,
    cov: CovModel,
}

impl LaggedCovariance {
    /// `columns` must be finite and non-constant.
    pub fn build(labels: Vec<String>, columns: &[&[f64]], lag: usize, ridge: &RidgePolicy) -> Result<Self> {
        let m = columns.len();
        if lag == 0 {
            return Err(Error::InvalidInput("dynamic O-information needs lag >= 1".into()));
        }
        if labels.len() != m {
            return Err(Error::InvalidInput(format!("{} labels for {m} columns", labels.len())));
        }
        let t = columns.first().map_or(0, |c| c.len());
        if columns.iter().any(|c| c.len() != t) {
            return Err(Error::InvalidInput("columns differ in length".into()));
        }
        if t <= lag {
            return Err(Error::SeriesTooShort { needed: lag + 1, got: t });
        }
        let z: Vec<Vec<f64>> = columns
            .iter()
            .zip(&labels)
            .map(|(c, l)| zscore(c, l))
            .collect::<Result<_>>()?;
        let rows = t - lag;
        let d = m * (lag + 1);
        let data = DMatrix::from_fn(rows, d, |r, c| {
            let (col, shift) = if c < m { (c, 0) } else { ((c - m) / lag, (c - m) % lag + 1) };
            z[col][r + lag - shift]
        });
        let mut names = Vec::with_capacity(d);
        names.extend(labels.iter().map(|l| format!("{l}[t]")));
        for l in &labels {
            for k in 1..=lag {
                names.push(format!("{l}[t-{k}]"));
            }
        }
        let cov = estimate_covariance(names, &data, ridge)?;
        Ok(LaggedCovariance { labels, lag, cov })
    }

    /// Covariance over all usable columns of a panel.
    pub fn from_panel(panel: &ReturnPanel, lag: usize, ridge: &RidgePolicy) -> Result<Self> {
        let (usable, _) = panel.usable_columns();
        let labels = usable.iter().map(|&j| panel.labels[j].clone()).collect();
        let columns: Vec<&[f64]> = usable.iter().map(|&j| panel.column(j)).collect();
        Self::build(labels, &columns, lag, ridge)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn cov(&self) -> &CovModel {
        &self.cov
    }

    pub fn sample_count(&self) -> usize {
        self.cov.sample_count()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownVariable(label.to_string()))
    }

    fn present(&self, j: usize) -> usize {
        j
    }

    fn past(&self, columns: &[usize]) -> Vec<usize> {
        let m = self.labels.len();
        columns
            .iter()
            .flat_map(|&j| (0..self.lag).map(move |k| m + j * self.lag + k))
            .collect()
    }

    /// `dΩʸ(S) = (1−n) I(y; S⁻ | Y⁻) + Σ_k I(y; S⁻∖k | Y⁻)` with column
    /// indices into [`LaggedCovariance::labels`].
    pub fn dynamic_o_information(&self, target: usize, sources: &[usize]) -> Result<f64> {
        let n = sources.len();
        let m = self.labels.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!("dynamic O-information needs at least 2 sources, got {n}")));
        }
        if target >= m || sources.iter().any(|&s| s >= m) {
            return Err(Error::InvalidInput("column index out of range".into()));
        }
        if sources.contains(&target) {
            return Err(Error::InvalidInput(format!("target `{}` is among the sources", self.labels[target])));
        }
        let params = self.lag * (n + 1);
        if self.sample_count() + self.lag <= params + MIN_EXCESS_SAMPLES {
            return Err(Error::SeriesTooShort {
                needed: params + MIN_EXCESS_SAMPLES + 1,
                got: self.sample_count() + self.lag,
            });
        }
        let y = [self.present(target)];
        let y_past = self.past(&[target]);
        let mut value = (1.0 - n as f64) * self.cov.conditional_mi(&y, &self.past(sources), &y_past)?;
        for k in 0..n {
            value += self.cov.conditional_mi(&y, &self.past(&without(sources, k)), &y_past)?;
        }
        Ok(value)
    }

    fn value_of(&self, target: usize, members: &[usize]) -> Result<f64> {
        self.dynamic_o_information(target, members)
    }
}

fn zscore(values: &[f64], label: &str) -> Result<Vec<f64>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(label.to_string()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance(label.to_string()));
    }
    Ok(values.iter().map(|v| (v - mean) / sd).collect())
}

/// Panel columns by label, rejecting inactive and degenerate ones.
fn checked_columns<'a>(panel: &'a ReturnPanel, labels: &[&str]) -> Result<Vec<&'a [f64]>> {
    labels
        .iter()
        .map(|&l| {
            let j = panel.column_index(l).ok_or_else(|| Error::UnknownVariable(l.to_string()))?;
            if !panel.active[j] {
                return Err(Error::InvalidInput(format!("column `{l}` is inactive in window {}", panel.window_id)));
            }
            Ok(panel.column(j))
        })
        .collect()
}

/// Dynamic O-information of `sources` toward `target` with lag order `p`.
pub fn dynamic_o_information(panel: &ReturnPanel, target: &str, sources: &[&str], p: usize, ridge: &RidgePolicy) -> Result<f64> {
    let mut labels = vec![target];
    labels.extend_from_slice(sources);
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = labels.iter().find(|l| !seen.insert(**l)) {
        return Err(Error::InvalidInput(format!("`{dup}` appears twice among target and sources")));
    }
    let columns = checked_columns(panel, &labels)?;
    let lc = LaggedCovariance::build(labels.iter().map(|s| s.to_string()).collect(), &columns, p, ridge)?;
    let src: Vec<usize> = (1..labels.len()).collect();
    lc.dynamic_o_information(0, &src)
}

/// Settings of the multiplet search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OinfoConfig {
    pub lag: usize,
    pub n_max: usize,
    pub ridge: RidgePolicy,
}

impl Default for OinfoConfig {
    fn default() -> Self {
        OinfoConfig {
            lag: 1,
            n_max: DEFAULT_N_MAX,
            ridge: RidgePolicy::default(),
        }
    }
}

/// Greedy multiplet search over the usable columns of one window.
#[derive(Clone, Debug)]
pub struct MultipletSearch {
    window_id: usize,
    lc: LaggedCovariance,
}

impl MultipletSearch {
    pub fn new(panel: &ReturnPanel, lag: usize, ridge: &RidgePolicy) -> Result<Self> {
        Ok(MultipletSearch {
            window_id: panel.window_id,
            lc: LaggedCovariance::from_panel(panel, lag, ridge)?,
        })
    }

    pub fn from_lagged(window_id: usize, lc: LaggedCovariance) -> Self {
        MultipletSearch { window_id, lc }
    }

    pub fn labels(&self) -> &[String] {
        self.lc.labels()
    }

    pub fn lagged(&self) -> &LaggedCovariance {
        &self.lc
    }

    fn result(&self, target: usize, kind: MultipletKind, members: &[usize], value: f64) -> MultipletResult {
        MultipletResult {
            window_id: self.window_id,
            target: self.lc.labels[target].clone(),
            kind,
            size: members.len(),
            members: members.iter().map(|&j| self.lc.labels[j].clone()).collect(),
            value,
            lag_p: self.lc.lag,
        }
    }

    /// Exhaustive scan over unordered source pairs.
    pub fn best_pair(&self, target: &str, kind: MultipletKind) -> Result<MultipletResult> {
        let t = self.lc.index_of(target)?;
        let labels = &self.lc.labels;
        let mut candidates: Vec<usize> = (0..labels.len()).filter(|&j| j != t).collect();
        candidates.sort_by(|&a, &b| labels[a].cmp(&labels[b]));
        if candidates.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "target `{target}` has {} candidate source(s), a pair needs 2",
                candidates.len()
            )));
        }
        let mut best: Option<([usize; 2], f64)> = None;
        for (a, &i) in candidates.iter().enumerate() {
            for &j in &candidates[a + 1..] {
                let v = self.lc.value_of(t, &[i, j])?;
                // candidates are label-sorted, so the first of equal values wins ties
                if best.is_none_or(|(_, b)| kind.better(v, b)) {
                    best = Some(([i, j], v));
                }
            }
        }
        let (pair, value) = best.expect("at least one pair");
        Ok(self.result(t, kind, &pair, value))
    }

    /// Adds the remaining source giving the most extreme value.
    pub fn greedy_extend(&self, current: &MultipletResult) -> Result<MultipletResult> {
        let t = self.lc.index_of(&current.target)?;
        let members: Vec<usize> = current
            .members
            .iter()
            .map(|m| self.lc.index_of(m))
            .collect::<Result<_>>()?;
        let labels = &self.lc.labels;
        let mut candidates: Vec<usize> = (0..labels.len())
            .filter(|j| *j != t && !members.contains(j))
            .collect();
        candidates.sort_by(|&a, &b| labels[a].cmp(&labels[b]));
        if candidates.is_empty() {
            return Err(Error::Exhausted);
        }
        let mut best: Option<(usize, f64)> = None;
        let mut trial = members.clone();
        trial.push(0);
        for &c in &candidates {
            *trial.last_mut().unwrap() = c;
            let v = self.lc.value_of(t, &trial)?;
            if best.is_none_or(|(_, b)| current.kind.better(v, b)) {
                best = Some((c, v));
            }
        }
        let (c, value) = best.expect("at least one candidate");
        *trial.last_mut().unwrap() = c;
        Ok(self.result(t, current.kind, &trial, value))
    }

    /// Sizes `2..=n_max` of both kinds for one target.
    pub fn scan_target(&self, target: &str, n_max: usize) -> Result<Vec<MultipletResult>> {
        let mut out = Vec::new();
        for kind in MultipletKind::ALL {
            let mut current = self.best_pair(target, kind)?;
            out.push(current.clone());
            while current.size < n_max {
                current = self.greedy_extend(&current)?;
                out.push(current.clone());
            }
        }
        Ok(out)
    }
}

/// Best pair of `kind` toward `target` over the usable columns of `panel`.
pub fn best_pair(panel: &ReturnPanel, target: &str, p: usize, kind: MultipletKind, ridge: &RidgePolicy) -> Result<MultipletResult> {
    MultipletSearch::new(panel, p, ridge)?.best_pair(target, kind)
}

/// One greedy step from `current` over the usable columns of `panel`.
pub fn greedy_extend(panel: &ReturnPanel, current: &MultipletResult, ridge: &RidgePolicy) -> Result<MultipletResult> {
    MultipletSearch::new(panel, current.lag_p, ridge)?.greedy_extend(current)
}

#[derive(Clone, Debug, Default)]
pub struct MultipletScan {
    /// Ordered by target (as requested), kind, size.
    pub results: Vec<MultipletResult>,
    /// `(target, reason)`.
    pub failures: Vec<(String, String)>,
    pub diagnostics: Vec<String>,
}

/// Best multiplets of sizes `2..=n_max` of both kinds for every target.
/// Sizes are capped at the number of candidate sources; a failing target is
/// recorded and the scan continues.
pub fn multiplet_scan(panel: &ReturnPanel, targets: &[String], config: &OinfoConfig) -> Result<MultipletScan> {
    if config.n_max < 2 {
        return Err(Error::Config(format!("n_max = {} is below 2", config.n_max)));
    }
    let mut scan = MultipletScan::default();
    let (usable, excluded) = panel.usable_columns();
    for ex in &excluded {
        scan.diagnostics.push(format!("window {}: excluded {}", panel.window_id, ex));
    }
    if usable.len() < 3 {
        let reason = format!("{} usable column(s), multiplets need 3", usable.len());
        scan.diagnostics.push(format!("window {}: {reason}", panel.window_id));
        scan.failures.extend(targets.iter().map(|t| (t.clone(), reason.clone())));
        return Ok(scan);
    }
    let search = MultipletSearch::new(panel, config.lag, &config.ridge)?;
    let n_max = config.n_max.min(usable.len() - 1);
    if n_max < config.n_max {
        scan.diagnostics.push(format!(
            "window {}: multiplet sizes capped at {n_max} ({} usable columns)",
            panel.window_id,
            usable.len()
        ));
    }
    let per_target: Vec<Result<Vec<MultipletResult>>> =
        targets.par_iter().map(|t| search.scan_target(t, n_max)).collect();
    for (target, res) in targets.iter().zip(per_target) {
        match res {
            Ok(r) => scan.results.extend(r),
            Err(e) => {
                scan.diagnostics.push(format!("window {}: target {target} failed: {e}", panel.window_id));
                scan.failures.push((target.clone(), e.to_string()));
            }
        }
    }
    Ok(scan)
}

/// Circular-shift null distribution of a dynamic O-information value.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateNull {
    pub observed: f64,
    pub surrogates: Vec<f64>,
}

impl SurrogateNull {
    pub fn mean(&self) -> f64 {
        self.surrogates.iter().sum::<f64>() / self.surrogates.len() as f64
    }

    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        let n = self.surrogates.len() as f64;
        (self.surrogates.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }

    /// Whether `|observed| < k·sd` of the null.
    pub fn within(&self, k: f64) -> bool {
        self.observed.abs() < k * self.std_dev()
    }
}

/// Shifts every source circularly by its own uniform offset in
/// `[min_shift, T − min_shift]`, destroying cross-dependence while keeping
/// each series' autocorrelation.
pub fn surrogate_null(
    panel: &ReturnPanel,
    target: &str,
    sources: &[&str],
    p: usize,
    surrogates: usize,
    min_shift: usize,
    seed: u64,
) -> Result<SurrogateNull> {
    let ridge = RidgePolicy::default();
    let observed = dynamic_o_information(panel, target, sources, p, &ridge)?;
    let t = panel.len();
    if surrogates < 2 || t <= 2 * min_shift {
        return Err(Error::InvalidInput(format!(
            "{surrogates} surrogates with shift >= {min_shift} on {t} rows"
        )));
    }
    let mut labels = vec![target];
    labels.extend_from_slice(sources);
    let columns = checked_columns(panel, &labels)?;
    let names: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
    let src: Vec<usize> = (1..labels.len()).collect();
    let values = (0..surrogates)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream_rng(seed, s as u64);
            let shifted: Vec<Vec<f64>> = columns[1..]
                .iter()
                .map(|c| {
                    let k = rng.random_range(min_shift..=t - min_shift);
                    c[k..].iter().chain(&c[..k]).copied().collect()
                })
                .collect();
            let mut cols: Vec<&[f64]> = vec![columns[0]];
            cols.extend(shifted.iter().map(Vec::as_slice));
            LaggedCovariance::build(names.clone(), &cols, p, &ridge)?.dynamic_o_information(0, &src)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SurrogateNull {
        observed,
        surrogates: values,
    })
}

/// Appearances of one asset in the stored best multiplets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipRow {
    pub ticker: String,
    /// `None` when the asset is missing from the registry.
    pub class: Option<AssetClass>,
    pub redundant: usize,
    pub synergistic: usize,
}

impl MembershipRow {
    pub fn total(&self) -> usize {
        self.redundant + self.synergistic
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Membership {
    /// Sorted by total count descending, then ticker.
    pub rows: Vec<MembershipRow>,
    pub diagnostics: Vec<String>,
}

/// Counts each appearance of an asset once per stored result, so a member of
/// the nested multiplets of sizes 2 through 5 counts 4 times.
pub fn membership_counts(results: &[MultipletResult], registry: &Registry) -> Membership {
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in results {
        for m in &r.members {
            let e = counts.entry(m.as_str()).or_default();
            match r.kind {
                MultipletKind::Redundant => e.0 += 1,
                MultipletKind::Synergistic => e.1 += 1,
            }
        }
    }
    let mut out = Membership::default();
    for (ticker, (redundant, synergistic)) in counts {
        let class = registry.class_of(ticker);
        if class.is_none() {
            out.diagnostics.push(format!("{ticker} missing from registry, counted as unknown"));
        }
        out.rows.push(MembershipRow {
            ticker: ticker.to_string(),
            class,
            redundant,
            synergistic,
        });
    }
    out.rows.sort_by(|a, b| b.total().cmp(&a.total()).then_with(|| a.ticker.cmp(&b.ticker)));
    out
}

/// Mean class composition of the best multiplets of one kind and size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassFraction {
    pub kind: MultipletKind,
    pub size: usize,
    /// Number of results averaged.
    pub count: usize,
    pub coin: f64,
    pub token: f64,
    pub stablecoin: f64,
    pub fiat: f64,
    pub unknown: f64,
}

impl ClassFraction {
    pub fn of(&self, class: Option<AssetClass>) -> f64 {
        match class {
            Some(AssetClass::Coin) => self.coin,
            Some(AssetClass::Token) => self.token,
            Some(AssetClass::Stablecoin) => self.stablecoin,
            Some(AssetClass::Fiat) => self.fiat,
            None => self.unknown,
        }
    }
}

/// For each kind and size, the mean over results of the share of members in
/// each class. Rows are ordered by kind, then size.
pub fn class_fractions(results: &[MultipletResult], registry: &Registry) -> Vec<ClassFraction> {
    let mut groups: BTreeMap<(MultipletKind, usize), Vec<&MultipletResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.kind, r.size)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((kind, size), rs)| {
            let mut acc = [0.0; 5];
            for r in &rs {
                let n = r.members.len() as f64;
                for m in &r.members {
                    let slot = match registry.class_of(m) {
                        Some(AssetClass::Coin) => 0,
                        Some(AssetClass::Token) => 1,
                        Some(AssetClass::Stablecoin) => 2,
                        Some(AssetClass::Fiat) => 3,
                        None => 4,
                    };
                    acc[slot] += 1.0 / n;
                }
            }
            let c = rs.len() as f64;
            ClassFraction {
                kind,
                size,
                count: rs.len(),
                coin: acc[0] / c,
                token: acc[1] / c,
                stablecoin: acc[2] / c,
                fiat: acc[3] / c,
                unknown: acc[4] / c,
            }
        })
        .collect()
}

/// Orders results by window, target, kind and size.
pub fn sort_results(results: &mut [MultipletResult]) {
    results.sort_by(|a, b| {
        a.window_id
            .cmp(&b.window_id)
            .then_with(|| a.target.cmp(&b.target))
            .then_with(|| a.kind.cmp(&b.kind))
            .then_with(|| a.size.cmp(&b.size))
            .then_with(|| a.value.partial_cmp(&b.value).unwrap_or(Ordering::Equal))
    });
}
