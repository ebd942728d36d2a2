//! Batch pipeline: trade files to per-window networks and multiplets, then
//! cross-window summaries.
//!
//! Output tree under `run.out`:
//!
//! ```text
//! manifest.json             effective config, hash, per-window status
//! ingest.json               calendar and per-window panel shapes
//! volumes.csv               traded value per window
//! panels/panel_<w>.csv
//! networks/{edges,gc,adjacency,strengths}_<w>.csv
//! multiplets/multiplets_<w>.csv
//! window_corr.csv  window_corr_p.csv  average_network.csv  indicators.csv
//! membership.csv  class_fractions.csv  age_strength.csv  age_strength_summary.csv
//! ```
//!
//! Reruns with an unchanged configuration reuse the ingested panels and skip
//! windows already marked complete in the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, Weekday};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::RidgePolicy;
use crate::granger::{gc_matrix, GcConfig, GcEdge};
use crate::ingest::calendar::{format_date, format_timestamp};
use crate::ingest::{load_market, Registry, ReturnPanel, WindowCalendar, MINUTES_PER_WINDOW};
use crate::io;
use crate::network::{
    age_strength_correlation, average_network, node_histories, window_correlation, window_indicators,
    AdjacencyMatrix, IndicatorOptions, WindowInputs,
};
use crate::oinfo::{class_fractions, membership_counts, multiplet_scan, MultipletKind, MultipletResult, OinfoConfig};
use crate::synth::{gen_planted_highorder, gen_trade_tapes, gen_var, CouplingSpec, SynthMetadata, PRNG_ID};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    /// Directory of `<TICKER><fiat>.csv` trade files.
    pub dir: Option<PathBuf>,
    pub fiat: String,
    /// Asset registry; defaults to `<dir>/registry.csv` when present.
    pub registry: Option<PathBuf>,
}

impl Default for InputSection {
    fn default() -> Self {
        InputSection {
            dir: None,
            fiat: "USD".into(),
            registry: None,
        }
    }
}

/// Explicit calendar. Without one, windows are derived from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalendarSection {
    /// A Monday, quoted: `start = "2019-12-30"`.
    pub start: NaiveDate,
    pub windows: usize,
    /// Last covered day (inclusive); defaults to the end of the last full week.
    pub end: Option<NaiveDate>,
}

impl CalendarSection {
    pub fn calendar(&self) -> Result<WindowCalendar> {
        let start_ts = self.start.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp();
        let end = match self.end {
            Some(d) => d.and_hms_opt(23, 59, 59).expect("valid time").and_utc().timestamp(),
            None => start_ts + self.windows as i64 * MINUTES_PER_WINDOW * 60 - 1,
        };
        WindowCalendar::from_date(self.start, self.windows, end)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrangerSection {
    pub alpha: f64,
    pub p_max: usize,
}

impl Default for GrangerSection {
    fn default() -> Self {
        GrangerSection { alpha: 0.01, p_max: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OinfoSection {
    pub lag: usize,
    pub n_max: usize,
}

impl Default for OinfoSection {
    fn default() -> Self {
        OinfoSection { lag: 1, n_max: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub ridge_lambda: f64,
    pub max_condition: f64,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        let r = RidgePolicy::default();
        EstimatorSection {
            ridge_lambda: r.lambda,
            max_condition: r.max_condition,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndicatorSection {
    /// Average F over significant pairs only.
    pub significant_only: bool,
    /// Multiplet size averaged in the indicators; defaults to `n_max`.
    pub multiplet_size: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub seed: u64,
    /// Skip the cross-window summaries when any window fails.
    pub strict: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            out: PathBuf::from("out"),
            jobs: 0,
            seed: 0,
            strict: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputSection,
    pub calendar: Option<CalendarSection>,
    pub granger: GrangerSection,
    pub oinfo: OinfoSection,
    pub estimators: EstimatorSection,
    pub indicators: IndicatorSection,
    pub run: RunSection,
}

/// Command-line values that replace configuration entries.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub fiat: Option<String>,
    pub alpha: Option<f64>,
    pub p_max: Option<usize>,
    pub lag: Option<usize>,
    pub n_max: Option<usize>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub strict: bool,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.input {
            self.input.dir = Some(v.clone());
        }
        if let Some(v) = &o.fiat {
            self.input.fiat = v.clone();
        }
        if let Some(v) = o.alpha {
            self.granger.alpha = v;
        }
        if let Some(v) = o.p_max {
            self.granger.p_max = v;
        }
        if let Some(v) = o.lag {
            self.oinfo.lag = v;
        }
        if let Some(v) = o.n_max {
            self.oinfo.n_max = v;
        }
        if let Some(v) = o.jobs {
            self.run.jobs = v;
        }
        if let Some(v) = o.seed {
            self.run.seed = v;
        }
        if o.strict {
            self.run.strict = true;
        }
        if let Some(v) = &o.out {
            self.run.out = v.clone();
        }
    }

    /// Checks the analysis settings; with `needs_input`, also the input
    /// directory.
    pub fn validate(&self, needs_input: bool) -> Result<()> {
        let g = &self.granger;
        if !(g.alpha > 0.0 && g.alpha < 1.0) {
            return Err(Error::Config(format!("alpha = {} must lie in (0, 1)", g.alpha)));
        }
        if g.p_max == 0 {
            return Err(Error::Config("p_max must be at least 1".into()));
        }
        if self.oinfo.lag == 0 {
            return Err(Error::Config("oinfo lag must be at least 1".into()));
        }
        if !(2..=8).contains(&self.oinfo.n_max) {
            return Err(Error::Config(format!("n_max = {} must lie in 2..=8", self.oinfo.n_max)));
        }
        if let Some(s) = self.indicators.multiplet_size {
            if !(2..=self.oinfo.n_max).contains(&s) {
                return Err(Error::Config(format!("indicator multiplet size {s} outside 2..={}", self.oinfo.n_max)));
            }
        }
        let e = &self.estimators;
        if !(e.ridge_lambda >= 0.0 && e.ridge_lambda.is_finite() && e.max_condition > 1.0) {
            return Err(Error::Config("ridge settings must be finite, lambda >= 0, max_condition > 1".into()));
        }
        if self.input.fiat.is_empty() {
            return Err(Error::Config("fiat selector is empty".into()));
        }
        if let Some(c) = &self.calendar {
            c.calendar().map_err(|e| Error::Config(e.to_string()))?;
        }
        if needs_input {
            let dir = self.input_dir()?;
            if !dir.is_dir() {
                return Err(Error::Config(format!("input directory {} not found", dir.display())));
            }
            if let Some(r) = &self.input.registry {
                if !r.is_file() {
                    return Err(Error::Config(format!("registry {} not found", r.display())));
                }
            }
        }
        Ok(())
    }

    pub fn input_dir(&self) -> Result<&Path> {
        self.input
            .dir
            .as_deref()
            .ok_or_else(|| Error::Config("no input directory given".into()))
    }

    pub fn ridge(&self) -> RidgePolicy {
        RidgePolicy {
            lambda: self.estimators.ridge_lambda,
            max_condition: self.estimators.max_condition,
        }
    }

    pub fn gc_config(&self) -> GcConfig {
        GcConfig {
            p_max: self.granger.p_max,
            alpha: self.granger.alpha,
            ridge: self.ridge(),
        }
    }

    pub fn oinfo_config(&self) -> OinfoConfig {
        OinfoConfig {
            lag: self.oinfo.lag,
            n_max: self.oinfo.n_max,
            ridge: self.ridge(),
        }
    }

    pub fn indicator_options(&self) -> IndicatorOptions {
        IndicatorOptions {
            significant_only: self.indicators.significant_only,
            multiplet_size: self.indicators.multiplet_size.unwrap_or(self.oinfo.n_max),
        }
    }

    /// SHA-256 over every setting that affects results; `jobs`, `strict`
    /// and `out` are left out.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct View<'a> {
            input: &'a InputSection,
            calendar: &'a Option<CalendarSection>,
            granger: &'a GrangerSection,
            oinfo: &'a OinfoSection,
            estimators: &'a EstimatorSection,
            indicators: &'a IndicatorSection,
            seed: u64,
        }
        let view = View {
            input: &self.input,
            calendar: &self.calendar,
            granger: &self.granger,
            oinfo: &self.oinfo,
            estimators: &self.estimators,
            indicators: &self.indicators,
            seed: self.run.seed,
        };
        let bytes = serde_json::to_vec(&view).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Paths of every file the pipeline writes.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
    pub fn ingest_index(&self) -> PathBuf {
        self.root.join("ingest.json")
    }
    pub fn volumes(&self) -> PathBuf {
        self.root.join("volumes.csv")
    }
    pub fn panel(&self, w: usize) -> PathBuf {
        self.root.join("panels").join(format!("panel_{w}.csv"))
    }
    pub fn edges(&self, w: usize) -> PathBuf {
        self.root.join("networks").join(format!("edges_{w}.csv"))
    }
    pub fn gc_pairs(&self, w: usize) -> PathBuf {
        self.root.join("networks").join(format!("gc_{w}.csv"))
    }
    pub fn adjacency(&self, w: usize) -> PathBuf {
        self.root.join("networks").join(format!("adjacency_{w}.csv"))
    }
    pub fn strengths(&self, w: usize) -> PathBuf {
        self.root.join("networks").join(format!("strengths_{w}.csv"))
    }
    pub fn multiplets(&self, w: usize) -> PathBuf {
        self.root.join("multiplets").join(format!("multiplets_{w}.csv"))
    }
    pub fn window_corr(&self) -> PathBuf {
        self.root.join("window_corr.csv")
    }
    pub fn window_corr_p(&self) -> PathBuf {
        self.root.join("window_corr_p.csv")
    }
    pub fn average_network(&self) -> PathBuf {
        self.root.join("average_network.csv")
    }
    pub fn indicators(&self) -> PathBuf {
        self.root.join("indicators.csv")
    }
    pub fn membership(&self) -> PathBuf {
        self.root.join("membership.csv")
    }
    pub fn class_fractions(&self) -> PathBuf {
        self.root.join("class_fractions.csv")
    }
    pub fn age_strength(&self) -> PathBuf {
        self.root.join("age_strength.csv")
    }
    pub fn age_strength_summary(&self) -> PathBuf {
        self.root.join("age_strength_summary.csv")
    }

    fn window_outputs(&self, w: usize) -> [PathBuf; 5] {
        [self.edges(w), self.gc_pairs(w), self.adjacency(w), self.strengths(w), self.multiplets(w)]
    }
}

/// Shape of one ingested window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestedWindow {
    pub window: usize,
    /// Unix seconds of the window's Monday.
    pub start: i64,
    pub rows: usize,
    /// Active tickers, in panel column order.
    pub columns: Vec<String>,
}

/// Record of the ingest stage, `ingest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestIndex {
    pub config_hash: String,
    pub calendar: WindowCalendar,
    pub windows: Vec<IngestedWindow>,
    pub diagnostics: Vec<String>,
}

impl IngestIndex {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowStatus {
    Complete,
    /// Fewer than two active columns: nothing to analyse.
    Empty,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub window: usize,
    pub start: String,
    pub rows: usize,
    pub columns: usize,
    pub status: WindowStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub edges: usize,
    pub multiplets: usize,
    pub diagnostics: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalendarRecord {
    pub start: String,
    pub end: String,
    pub windows: usize,
}

/// `manifest.json`. Holds no timestamps, so an unchanged rerun rewrites it
/// byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub prng: String,
    /// How unspecified choices were resolved.
    pub interpretations: BTreeMap<String, String>,
    pub calendar: Option<CalendarRecord>,
    pub windows: Vec<WindowRecord>,
    pub summaries_complete: bool,
    pub diagnostics: Vec<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn failed_windows(&self) -> Vec<usize> {
        self.windows
            .iter()
            .filter(|w| w.status == WindowStatus::Failed)
            .map(|w| w.window)
            .collect()
    }
}

fn interpretations(config: &RunConfig) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        m.insert(k.to_string(), v);
    };
    put("estimator", "gaussian log-determinant, nats".into());
    put("gc_test", "likelihood ratio, N*F ~ chi2(q)".into());
    put("gc_order", "BIC per ordered pair, q = p".into());
    put("oinfo_lag", config.oinfo.lag.to_string());
    put("window_corr_overlap", "intersection of ordered node pairs, >= 10 pairs".into());
    put("average_network", "mean over windows where both endpoints are active".into());
    put(
        "mean_f",
        if config.indicators.significant_only { "significant pairs" } else { "all evaluated pairs" }.into(),
    );
    put("membership_counting", "once per stored multiplet (per size level)".into());
    put("class_fraction", "mean over best multiplets of member share per class".into());
    put("total_volume", "sum of minute volume x minute price".into());
    put("activity", "first bar at or before window start".into());
    m
}

/// Loads trade files, writes one panel per window, `volumes.csv` and
/// `ingest.json`.
pub fn ingest_stage(config: &RunConfig) -> Result<IngestIndex> {
    let layout = Layout::new(&config.run.out);
    let dir = config.input_dir()?;
    let mut diagnostics = Vec::new();
    let registry_path = config.input.registry.clone().or_else(|| {
        let p = dir.join("registry.csv");
        p.is_file().then_some(p)
    });
    let registry = match registry_path {
        Some(p) => Registry::load(&p)?,
        None => {
            diagnostics.push("no registry given; asset classes are unknown".to_string());
            Registry::new()
        }
    };
    let calendar = config.calendar.as_ref().map(CalendarSection::calendar).transpose()?;
    let market = load_market(dir, &config.input.fiat, &registry, calendar)?;
    diagnostics.extend(market.diagnostics);

    let mut windows = Vec::with_capacity(market.panels.len());
    for panel in &market.panels {
        io::write_panel(&layout.panel(panel.window_id), panel)?;
        windows.push(IngestedWindow {
            window: panel.window_id,
            start: market.calendar.window_start(panel.window_id),
            rows: panel.len(),
            columns: (0..panel.width())
                .filter(|&j| panel.active[j])
                .map(|j| panel.labels[j].clone())
                .collect(),
        });
    }
    let volumes: Vec<(usize, i64, f64)> = market
        .traded_value
        .iter()
        .enumerate()
        .map(|(w, v)| (w, market.calendar.window_start(w), *v))
        .collect();
    io::write_volumes(&layout.volumes(), &volumes)?;
    let index = IngestIndex {
        config_hash: config.hash(),
        calendar: market.calendar,
        windows,
        diagnostics,
    };
    io::write_json(&layout.ingest_index(), &index)?;
    info!(
        "ingested {} windows from {} ({})",
        index.windows.len(),
        dir.display(),
        config.input.fiat
    );
    Ok(index)
}

/// Reads the registry named by the configuration, or an empty one.
pub fn load_registry(config: &RunConfig) -> Result<Registry> {
    let path = config.input.registry.clone().or_else(|| {
        let p = config.input.dir.as_ref()?.join("registry.csv");
        p.is_file().then_some(p)
    });
    match path {
        Some(p) => Registry::load(&p),
        None => Ok(Registry::new()),
    }
}

/// Outcome of the per-window analysis.
#[derive(Clone, Debug)]
pub struct WindowOutcome {
    pub edges: Vec<GcEdge>,
    pub adjacency: AdjacencyMatrix,
    pub multiplets: Vec<MultipletResult>,
    pub diagnostics: Vec<String>,
}

/// Granger network of one panel, written to the network files.
pub fn gc_stage(config: &RunConfig, layout: &Layout, panel: &ReturnPanel) -> Result<(Vec<GcEdge>, AdjacencyMatrix, Vec<String>)> {
    let w = panel.window_id;
    let net = gc_matrix(panel, &config.gc_config())?;
    io::write_edges(&layout.edges(w), w, &net.edges)?;
    io::write_gc_pairs(&layout.gc_pairs(w), w, &net.edges)?;
    io::write_adjacency(&layout.adjacency(w), &net.adjacency)?;
    io::write_strengths(&layout.strengths(w), &net.adjacency)?;
    Ok((net.edges, net.adjacency, net.diagnostics))
}

/// Best multiplets toward every usable column, written to the multiplet file.
pub fn oinfo_stage(config: &RunConfig, layout: &Layout, panel: &ReturnPanel) -> Result<(Vec<MultipletResult>, Vec<String>)> {
    let (usable, _) = panel.usable_columns();
    let targets: Vec<String> = usable.iter().map(|&j| panel.labels[j].clone()).collect();
    let scan = multiplet_scan(panel, &targets, &config.oinfo_config())?;
    io::write_multiplets(&layout.multiplets(panel.window_id), &scan.results)?;
    let mut diagnostics = scan.diagnostics;
    for (t, e) in &scan.failures {
        diagnostics.push(format!("multiplets toward {t} failed: {e}"));
    }
    Ok((scan.results, diagnostics))
}

/// Reads a window's panel and runs both analyses on it.
pub fn analyse_window(config: &RunConfig, layout: &Layout, window: &IngestedWindow) -> Result<WindowOutcome> {
    let panel = io::read_panel(&layout.panel(window.window), window.window, window.start)?;
    if panel.labels != window.columns || panel.len() != window.rows {
        return Err(Error::format(
            layout.panel(window.window),
            format!(
                "panel is {}x{}, ingest recorded {}x{}",
                panel.len(),
                panel.width(),
                window.rows,
                window.columns.len()
            ),
        ));
    }
    let (edges, adjacency, mut diagnostics) = gc_stage(config, layout, &panel)?;
    let (multiplets, more) = oinfo_stage(config, layout, &panel)?;
    diagnostics.extend(more);
    Ok(WindowOutcome {
        edges,
        adjacency,
        multiplets,
        diagnostics,
    })
}

fn complete_windows(manifest: &Manifest) -> Vec<usize> {
    manifest
        .windows
        .iter()
        .filter(|w| w.status == WindowStatus::Complete)
        .map(|w| w.window)
        .collect()
}

fn read_adjacencies(config: &RunConfig, layout: &Layout, windows: &[usize]) -> Result<Vec<AdjacencyMatrix>> {
    windows
        .iter()
        .map(|&w| io::read_adjacency(&layout.adjacency(w), Some(w), config.granger.alpha))
        .collect()
}

/// Average network and the age-strength correlation.
pub fn net_stats_stage(config: &RunConfig, layout: &Layout, complete: &[usize]) -> Result<Vec<String>> {
    let mut diagnostics = Vec::new();
    let adjacency = read_adjacencies(config, layout, complete)?;
    if adjacency.is_empty() {
        diagnostics.push("no complete window: average network not formed".into());
    } else {
        io::write_adjacency(&layout.average_network(), &average_network(&adjacency)?)?;
    }
    match age_strength_correlation(node_histories(&adjacency)) {
        Ok(a) => io::write_age_strength(&layout.age_strength(), &layout.age_strength_summary(), &a)?,
        Err(e) => diagnostics.push(format!("age-strength correlation skipped: {e}")),
    }
    Ok(diagnostics)
}

/// Window-by-window similarity of the networks.
pub fn window_corr_stage(config: &RunConfig, layout: &Layout, complete: &[usize]) -> Result<Vec<String>> {
    let adjacency = read_adjacencies(config, layout, complete)?;
    if adjacency.len() < 2 {
        return Ok(vec![format!("{} complete window(s): window correlation needs 2", adjacency.len())]);
    }
    let wc = window_correlation(&adjacency)?;
    io::write_window_corr(&layout.window_corr(), &layout.window_corr_p(), &wc)?;
    Ok(Vec::new())
}

/// Weekly indicators, multiplet membership and class fractions.
pub fn indicators_stage(config: &RunConfig, layout: &Layout, index: &IngestIndex, complete: &[usize]) -> Result<Vec<String>> {
    let edges: BTreeMap<usize, Vec<GcEdge>> = complete
        .iter()
        .map(|&w| Ok((w, io::read_gc_pairs(&layout.gc_pairs(w))?)))
        .collect::<Result<_>>()?;
    let multiplets: BTreeMap<usize, Vec<MultipletResult>> = complete
        .iter()
        .map(|&w| Ok((w, io::read_multiplets(&layout.multiplets(w))?)))
        .collect::<Result<_>>()?;
    let volumes: BTreeMap<usize, f64> = io::read_volumes(&layout.volumes())?
        .into_iter()
        .map(|(w, _, v)| (w, v))
        .collect();

    let inputs: Vec<WindowInputs<'_>> = index
        .windows
        .iter()
        .map(|w| WindowInputs {
            window_id: w.window,
            start: w.start,
            traded_value: volumes.get(&w.window).copied(),
            edges: edges.get(&w.window).map(Vec::as_slice),
            multiplets: multiplets.get(&w.window).map(Vec::as_slice),
        })
        .collect();
    io::write_indicators(&layout.indicators(), &window_indicators(&inputs, &config.indicator_options()))?;

    let registry = load_registry(config)?;
    let all: Vec<MultipletResult> = multiplets.into_values().flatten().collect();
    let membership = membership_counts(&all, &registry);
    io::write_membership(&layout.membership(), &membership)?;
    io::write_class_fractions(&layout.class_fractions(), &class_fractions(&all, &registry))?;
    Ok(membership.diagnostics)
}

/// Every cross-window summary, from the files of `complete` windows.
/// Returns diagnostics for summaries that could not be formed.
pub fn summary_stage(config: &RunConfig, layout: &Layout, index: &IngestIndex, complete: &[usize]) -> Result<Vec<String>> {
    let mut diagnostics = net_stats_stage(config, layout, complete)?;
    diagnostics.extend(window_corr_stage(config, layout, complete)?);
    diagnostics.extend(indicators_stage(config, layout, index, complete)?);
    Ok(diagnostics)
}

/// Windows of an earlier ingest whose per-window files are all present.
pub fn analysed_windows(layout: &Layout, index: &IngestIndex) -> Vec<usize> {
    index
        .windows
        .iter()
        .map(|w| w.window)
        .filter(|&w| layout.window_outputs(w).iter().all(|p| p.exists()))
        .collect()
}

/// Which analysis a per-window subcommand runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowAnalysis {
    Granger,
    Multiplets,
}

/// Runs one analysis over the ingested panels in `config.run.out`, or over
/// `only` when given. Returns `(window, error)` for each failing window.
pub fn per_window_stage(config: &RunConfig, analysis: WindowAnalysis, only: Option<usize>) -> Result<Vec<(usize, String)>> {
    let layout = Layout::new(&config.run.out);
    let index = IngestIndex::load(&layout.ingest_index())?;
    let windows: Vec<&IngestedWindow> = index
        .windows
        .iter()
        .filter(|w| only.is_none_or(|o| o == w.window) && w.columns.len() >= 2)
        .collect();
    if let Some(o) = only {
        if windows.is_empty() {
            return Err(Error::InvalidInput(format!("window {o} not ingested or has fewer than 2 active columns")));
        }
    }
    let pool = thread_pool(config.run.jobs)?;
    let mut failures: Vec<(usize, String)> = pool.install(|| {
        windows
            .par_iter()
            .filter_map(|w| {
                let run = || -> Result<()> {
                    let panel = io::read_panel(&layout.panel(w.window), w.window, w.start)?;
                    match analysis {
                        WindowAnalysis::Granger => gc_stage(config, &layout, &panel).map(|_| ()),
                        WindowAnalysis::Multiplets => oinfo_stage(config, &layout, &panel).map(|_| ()),
                    }
                };
                run().err().map(|e| (w.window, e.to_string()))
            })
            .collect()
    });
    failures.sort();
    Ok(failures)
}

/// Result of [`run_pipeline`].
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub manifest: Option<Manifest>,
    /// Windows analysed in this invocation (not reused).
    pub computed: Vec<usize>,
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Runs every stage. Configuration problems give exit code 2, window
/// failures exit code 1.
pub fn run_pipeline(config: &RunConfig) -> RunOutcome {
    if let Err(e) = config.validate(true) {
        log::error!("{e}");
        return RunOutcome {
            exit_code: EXIT_CONFIG,
            manifest: None,
            computed: Vec::new(),
        };
    }
    let pool = match thread_pool(config.run.jobs) {
        Ok(p) => p,
        Err(e) => {
            log::error!("{e}");
            return RunOutcome {
                exit_code: EXIT_CONFIG,
                manifest: None,
                computed: Vec::new(),
            };
        }
    };
    match pool.install(|| run_stages(config)) {
        Ok(outcome) => outcome,
        Err(e) => {
            log::error!("run aborted: {e}");
            RunOutcome {
                exit_code: EXIT_PARTIAL,
                manifest: None,
                computed: Vec::new(),
            }
        }
    }
}

fn run_stages(config: &RunConfig) -> Result<RunOutcome> {
    let layout = Layout::new(&config.run.out);
    fs::create_dir_all(&layout.root).map_err(|e| Error::io(&layout.root, e))?;
    let hash = config.hash();

    let prior = Manifest::load(&layout.manifest()).ok().filter(|m| m.config_hash == hash);
    if prior.is_none() && layout.manifest().exists() {
        info!("configuration changed since the last run; recomputing");
    }

    let index = match IngestIndex::load(&layout.ingest_index()) {
        Ok(i) if i.config_hash == hash && i.windows.iter().all(|w| layout.panel(w.window).exists()) => {
            info!("reusing ingested panels");
            i
        }
        _ => ingest_stage(config)?,
    };

    let prior_status: BTreeMap<usize, &WindowRecord> = prior
        .as_ref()
        .map(|m| m.windows.iter().map(|w| (w.window, w)).collect())
        .unwrap_or_default();

    let reusable = |w: &IngestedWindow| -> Option<WindowRecord> {
        let rec = prior_status.get(&w.window)?;
        let files_present = layout.window_outputs(w.window).iter().all(|p| p.exists());
        match rec.status {
            WindowStatus::Complete if files_present => Some((*rec).clone()),
            WindowStatus::Empty => Some((*rec).clone()),
            _ => None,
        }
    };

    let todo: Vec<&IngestedWindow> = index.windows.iter().filter(|w| reusable(w).is_none()).collect();
    let computed: Vec<usize> = todo.iter().map(|w| w.window).collect();
    let results: Vec<(usize, WindowRecord)> = todo
        .par_iter()
        .map(|w| (w.window, evaluate_window(config, &layout, w)))
        .collect();
    let mut fresh: BTreeMap<usize, WindowRecord> = results.into_iter().collect();

    let mut records = Vec::with_capacity(index.windows.len());
    for w in &index.windows {
        let rec = match fresh.remove(&w.window) {
            Some(r) => r,
            None => reusable(w).expect("either reused or computed"),
        };
        records.push(rec);
    }

    let failed: Vec<usize> = records
        .iter()
        .filter(|r| r.status == WindowStatus::Failed)
        .map(|r| r.window)
        .collect();
    let mut manifest = Manifest {
        tool: "infonet".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: hash,
        config: config.clone(),
        prng: PRNG_ID.into(),
        interpretations: interpretations(config),
        calendar: Some(CalendarRecord {
            start: format_timestamp(index.calendar.start()),
            end: format_timestamp(index.calendar.end()),
            windows: index.calendar.window_count(),
        }),
        windows: records,
        summaries_complete: false,
        diagnostics: index.diagnostics.clone(),
    };

    if config.run.strict && !failed.is_empty() {
        warn!("strict mode: window(s) {failed:?} failed, summaries skipped");
        io::write_json(&layout.manifest(), &manifest)?;
        return Ok(RunOutcome {
            exit_code: EXIT_PARTIAL,
            manifest: Some(manifest),
            computed,
        });
    }

    let summaries_fresh = prior.as_ref().is_some_and(|m| m.summaries_complete) && computed.is_empty();
    if summaries_fresh {
        manifest.diagnostics = prior.expect("checked").diagnostics;
        manifest.summaries_complete = true;
    } else {
        let complete = complete_windows(&manifest);
        let diags = summary_stage(config, &layout, &index, &complete)?;
        manifest.diagnostics.extend(diags);
        manifest.summaries_complete = true;
    }
    io::write_json(&layout.manifest(), &manifest)?;
    for w in &failed {
        warn!("window {w} failed");
    }
    Ok(RunOutcome {
        exit_code: if failed.is_empty() { EXIT_OK } else { EXIT_PARTIAL },
        manifest: Some(manifest),
        computed,
    })
}

fn evaluate_window(config: &RunConfig, layout: &Layout, w: &IngestedWindow) -> WindowRecord {
    let mut rec = WindowRecord {
        window: w.window,
        start: format_date(w.start),
        rows: w.rows,
        columns: w.columns.len(),
        status: WindowStatus::Complete,
        error: None,
        edges: 0,
        multiplets: 0,
        diagnostics: Vec::new(),
    };
    if w.columns.len() < 2 {
        rec.status = WindowStatus::Empty;
        rec.diagnostics.push(format!("{} active column(s), nothing to analyse", w.columns.len()));
        return rec;
    }
    match analyse_window(config, layout, w) {
        Ok(out) => {
            rec.edges = out.edges.iter().filter(|e| e.significant).count();
            rec.multiplets = out.multiplets.len();
            rec.diagnostics = out.diagnostics;
            info!("window {} done: {} edges, {} multiplets", w.window, rec.edges, rec.multiplets);
        }
        Err(e) => {
            warn!("window {} failed: {e}", w.window);
            for p in layout.window_outputs(w.window) {
                let _ = fs::remove_file(p);
            }
            rec.status = WindowStatus::Failed;
            rec.error = Some(e.to_string());
        }
    }
    rec
}

/// What the `synth` command generates.
#[derive(Clone, Debug)]
pub enum SynthRequest {
    Var { spec: CouplingSpec, length: usize },
    Planted { kind: MultipletKind, extra: usize, length: usize, seed: u64 },
    /// Minute trade tapes from the day before `monday` through `weeks` full
    /// weeks, so ingest finds exactly `weeks` windows.
    Tapes {
        spec: CouplingSpec,
        monday: NaiveDate,
        weeks: usize,
        scale: f64,
        quote: String,
    },
}

/// Writes `panel_0.csv` (or the trade tapes) and the sidecar `synth.json`
/// into `dir`.
pub fn write_synth(dir: &Path, request: &SynthRequest) -> Result<SynthMetadata> {
    if let SynthRequest::Tapes {
        spec,
        monday,
        weeks,
        scale,
        quote,
    } = request
    {
        if monday.weekday() != Weekday::Mon {
            return Err(Error::InvalidInput(format!("{monday} is not a Monday")));
        }
        if *weeks == 0 {
            return Err(Error::InvalidInput("tapes need at least one week".into()));
        }
        let first = monday.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp() - 86_400;
        let minutes = 1440 + *weeks * MINUTES_PER_WINDOW as usize - 1;
        for (ticker, trades) in gen_trade_tapes(spec, first, minutes, *scale)? {
            io::write_trades(&dir.join(format!("{ticker}{quote}.csv")), &trades)?;
        }
        let meta = SynthMetadata::for_var(spec, minutes);
        io::write_json(&dir.join("synth.json"), &meta)?;
        return Ok(meta);
    }
    let (panel, meta) = match request {
        SynthRequest::Tapes { .. } => unreachable!("handled above"),
        SynthRequest::Var { spec, length } => (gen_var(spec, *length)?, SynthMetadata::for_var(spec, *length)),
        SynthRequest::Planted { kind, extra, length, seed } => {
            let planted = gen_planted_highorder(*kind, *extra, *length, *seed)?;
            let meta = SynthMetadata::for_planted(&planted);
            (planted.panel, meta)
        }
    };
    io::write_panel(&dir.join("panel_0.csv"), &panel)?;
    io::write_json(&dir.join("synth.json"), &meta)?;
    Ok(meta)
}
