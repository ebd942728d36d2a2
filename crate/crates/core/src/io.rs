//! CSV and JSON files exchanged between pipeline stages.
//!
//! Floats are written with Rust's shortest round-trip formatting; missing
//! or undefined values are written as `NA`. Files are written to a sibling
//! temporary path and renamed into place, so a reader never sees a partial
//! file.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::granger::GcEdge;
use crate::ingest::calendar::format_date;
use crate::ingest::{ReturnPanel, TradeRecord};
use crate::network::{AdjacencyMatrix, AgeStrength, IndicatorRow, WindowCorrelation};
use crate::oinfo::{ClassFraction, Membership, MultipletResult};

pub const MISSING: &str = "NA";

pub fn fmt_f64(v: f64) -> String {
    // shortest round-trip digits; exponent form outside [1e-4, 1e15)
    let a = v.abs();
    if v.is_nan() {
        MISSING.to_string()
    } else if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING.to_string(), fmt_f64)
}

fn parse_f64(path: &Path, field: &str) -> Result<f64> {
    if field == MISSING {
        return Ok(f64::NAN);
    }
    field
        .parse()
        .map_err(|_| Error::format(path, format!("`{field}` is not a number")))
}

fn parse_usize(path: &Path, field: &str) -> Result<usize> {
    field
        .parse()
        .map_err(|_| Error::format(path, format!("`{field}` is not a count")))
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_rows<I, R>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>())?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    write_atomic(path, &bytes)
}

fn header(fields: &[&str]) -> Vec<String> {
    fields.iter().map(|s| s.to_string()).collect()
}

fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let head: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok((head, rows))
}

fn expect_header(path: &Path, got: &[String], want: &[&str]) -> Result<()> {
    if got.iter().map(String::as_str).ne(want.iter().copied()) {
        return Err(Error::format(path, format!("header {got:?}, expected {want:?}")));
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// A trade tape in the ingest format: `timestamp,price,volume`, no header.
pub fn write_trades(path: &Path, trades: &[TradeRecord]) -> Result<()> {
    let mut text = String::with_capacity(trades.len() * 40);
    for t in trades {
        text.push_str(&format!("{},{},{}\n", t.timestamp, fmt_f64(t.price), fmt_f64(t.volume)));
    }
    write_atomic(path, text.as_bytes())
}

/// `panel_<w>.csv`: active columns only, one header row of tickers.
pub fn write_panel(path: &Path, panel: &ReturnPanel) -> Result<()> {
    let cols: Vec<usize> = (0..panel.width()).filter(|&j| panel.active[j]).collect();
    let head: Vec<String> = cols.iter().map(|&j| panel.labels[j].clone()).collect();
    let rows = (0..panel.len()).map(|t| cols.iter().map(move |&j| fmt_f64(panel.values[(t, j)])));
    write_rows(path, &head, rows)
}

/// Reads a panel written by [`write_panel`]; every column is active.
pub fn read_panel(path: &Path, window_id: usize, start: i64) -> Result<ReturnPanel> {
    let (head, rows) = read_rows(path)?;
    if head.is_empty() || head.iter().any(String::is_empty) {
        return Err(Error::format(path, "missing ticker header"));
    }
    let n = head.len();
    let mut data = Vec::with_capacity(rows.len() * n);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::format(path, format!("row {} has {} fields, expected {n}", i + 2, row.len())));
        }
        for field in row {
            let v = parse_f64(path, field)?;
            if !v.is_finite() {
                return Err(Error::format(path, format!("row {} holds a missing value", i + 2)));
            }
            data.push(v);
        }
    }
    let values = DMatrix::from_row_slice(rows.len(), n, &data);
    ReturnPanel::new(window_id, start, head, values, vec![true; n], vec![None; n])
}

const EDGE_HEADER: [&str; 7] = ["window", "source", "target", "f_value", "p_value", "order_p", "order_q"];
const GC_HEADER: [&str; 9] = [
    "window", "source", "target", "f_value", "p_value", "order_p", "order_q", "samples", "significant",
];

/// `edges_<w>.csv`: the significant ordered pairs.
pub fn write_edges(path: &Path, window: usize, edges: &[GcEdge]) -> Result<()> {
    let rows = edges.iter().filter(|e| e.significant).map(|e| {
        vec![
            window.to_string(),
            e.source.clone(),
            e.target.clone(),
            fmt_f64(e.f_value),
            fmt_f64(e.p_value),
            e.order_p.to_string(),
            e.order_q.to_string(),
        ]
    });
    write_rows(path, &header(&EDGE_HEADER), rows)
}

/// `gc_<w>.csv`: every evaluated ordered pair.
pub fn write_gc_pairs(path: &Path, window: usize, edges: &[GcEdge]) -> Result<()> {
    let rows = edges.iter().map(|e| {
        vec![
            window.to_string(),
            e.source.clone(),
            e.target.clone(),
            fmt_f64(e.f_value),
            fmt_f64(e.p_value),
            e.order_p.to_string(),
            e.order_q.to_string(),
            e.sample_count.to_string(),
            e.significant.to_string(),
        ]
    });
    write_rows(path, &header(&GC_HEADER), rows)
}

pub fn read_gc_pairs(path: &Path) -> Result<Vec<GcEdge>> {
    let (head, rows) = read_rows(path)?;
    expect_header(path, &head, &GC_HEADER)?;
    rows.iter()
        .map(|r| {
            Ok(GcEdge {
                source: r[1].to_string(),
                target: r[2].to_string(),
                f_value: parse_f64(path, &r[3])?,
                p_value: parse_f64(path, &r[4])?,
                order_p: parse_usize(path, &r[5])?,
                order_q: parse_usize(path, &r[6])?,
                sample_count: parse_usize(path, &r[7])?,
                significant: r[8]
                    .parse()
                    .map_err(|_| Error::format(path, format!("`{}` is not a boolean", &r[8])))?,
            })
        })
        .collect()
}

/// `adjacency_<w>.csv`: dense matrix, rows are sources.
pub fn write_adjacency(path: &Path, a: &AdjacencyMatrix) -> Result<()> {
    let mut head = vec!["source".to_string()];
    head.extend(a.labels.iter().cloned());
    let rows = (0..a.len()).map(|i| {
        std::iter::once(a.labels[i].clone()).chain((0..a.len()).map(move |j| fmt_f64(a.weights[(i, j)])))
    });
    write_rows(path, &head, rows)
}

pub fn read_adjacency(path: &Path, window_id: Option<usize>, alpha: f64) -> Result<AdjacencyMatrix> {
    let (head, rows) = read_rows(path)?;
    if head.first().map(String::as_str) != Some("source") {
        return Err(Error::format(path, "adjacency header must start with `source`"));
    }
    let labels: Vec<String> = head[1..].to_vec();
    let n = labels.len();
    if rows.len() != n {
        return Err(Error::format(path, format!("{} rows for {n} nodes", rows.len())));
    }
    let mut weights = DMatrix::zeros(n, n);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n + 1 || r[0] != labels[i] {
            return Err(Error::format(path, format!("row {} does not match the header", i + 2)));
        }
        for j in 0..n {
            weights[(i, j)] = parse_f64(path, &r[j + 1])?;
        }
    }
    AdjacencyMatrix::new(window_id, labels, weights, alpha).map_err(|e| Error::format(path, e.to_string()))
}

/// `strengths_<w>.csv`: `ticker,k_in,k_out`.
pub fn write_strengths(path: &Path, a: &AdjacencyMatrix) -> Result<()> {
    let s = a.strengths();
    let rows = (0..a.len()).map(|i| vec![a.labels[i].clone(), fmt_f64(s.k_in[i]), fmt_f64(s.k_out[i])]);
    write_rows(path, &header(&["ticker", "k_in", "k_out"]), rows)
}

const MULTIPLET_HEADER: [&str; 7] = ["window", "target", "kind", "size", "value", "lag", "members"];

/// `multiplets_<w>.csv`: members joined with `|` in selection order.
pub fn write_multiplets(path: &Path, results: &[MultipletResult]) -> Result<()> {
    let rows = results.iter().map(|r| {
        vec![
            r.window_id.to_string(),
            r.target.clone(),
            r.kind.to_string(),
            r.size.to_string(),
            fmt_f64(r.value),
            r.lag_p.to_string(),
            r.members.join("|"),
        ]
    });
    write_rows(path, &header(&MULTIPLET_HEADER), rows)
}

pub fn read_multiplets(path: &Path) -> Result<Vec<MultipletResult>> {
    let (head, rows) = read_rows(path)?;
    expect_header(path, &head, &MULTIPLET_HEADER)?;
    rows.iter()
        .map(|r| {
            let members: Vec<String> = r[6].split('|').map(str::to_string).collect();
            let size = parse_usize(path, &r[3])?;
            if members.len() != size {
                return Err(Error::format(path, format!("size {size} with {} members", members.len())));
            }
            Ok(MultipletResult {
                window_id: parse_usize(path, &r[0])?,
                target: r[1].to_string(),
                kind: r[2].parse().map_err(|e: Error| Error::format(path, e.to_string()))?,
                size,
                members,
                value: parse_f64(path, &r[4])?,
                lag_p: parse_usize(path, &r[5])?,
            })
        })
        .collect()
}

fn window_name(id: Option<usize>) -> String {
    id.map_or_else(|| "all".to_string(), |w| w.to_string())
}

fn write_square(path: &Path, ids: &[Option<usize>], m: &DMatrix<f64>) -> Result<()> {
    let mut head = vec!["window".to_string()];
    head.extend(ids.iter().map(|&w| window_name(w)));
    let rows = (0..ids.len())
        .map(|h| std::iter::once(window_name(ids[h])).chain((0..ids.len()).map(move |k| fmt_f64(m[(h, k)]))));
    write_rows(path, &head, rows)
}

/// `window_corr.csv` and its companion of p-values.
pub fn write_window_corr(path: &Path, p_path: &Path, wc: &WindowCorrelation) -> Result<()> {
    write_square(path, &wc.window_ids, &wc.coefficients)?;
    write_square(p_path, &wc.window_ids, &wc.p_values)
}

pub fn read_window_corr(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let (head, rows) = read_rows(path)?;
    let ids = head[1..].to_vec();
    let n = ids.len();
    if rows.len() != n {
        return Err(Error::format(path, "window correlation matrix is not square"));
    }
    let mut m = DMatrix::zeros(n, n);
    for (h, r) in rows.iter().enumerate() {
        for k in 0..n {
            m[(h, k)] = parse_f64(path, r.get(k + 1).unwrap_or(MISSING))?;
        }
    }
    Ok((ids, m))
}

/// `indicators.csv`.
pub fn write_indicators(path: &Path, rows: &[IndicatorRow]) -> Result<()> {
    let head = header(&[
        "window",
        "start_date",
        "total_volume",
        "mean_f",
        "mean_redundancy",
        "mean_synergy",
        "ma10_total_volume",
        "ma10_mean_f",
        "ma10_mean_redundancy",
        "ma10_mean_synergy",
    ]);
    let rows = rows.iter().map(|r| {
        vec![
            r.window.to_string(),
            format_date(r.start),
            fmt_opt(r.total_volume),
            fmt_opt(r.mean_f),
            fmt_opt(r.mean_redundancy),
            fmt_opt(r.mean_synergy),
            fmt_opt(r.ma10_total_volume),
            fmt_opt(r.ma10_mean_f),
            fmt_opt(r.ma10_mean_redundancy),
            fmt_opt(r.ma10_mean_synergy),
        ]
    });
    write_rows(path, &head, rows)
}

/// `volumes.csv`: `window,start,total_volume` with `start` in Unix seconds.
pub fn write_volumes(path: &Path, rows: &[(usize, i64, f64)]) -> Result<()> {
    let rows = rows.iter().map(|(w, s, v)| vec![w.to_string(), s.to_string(), fmt_f64(*v)]);
    write_rows(path, &header(&["window", "start", "total_volume"]), rows)
}

pub fn read_volumes(path: &Path) -> Result<Vec<(usize, i64, f64)>> {
    let (head, rows) = read_rows(path)?;
    expect_header(path, &head, &["window", "start", "total_volume"])?;
    rows.iter()
        .map(|r| {
            let start = r[1].parse().map_err(|_| Error::format(path, format!("`{}` is not a timestamp", &r[1])))?;
            Ok((parse_usize(path, &r[0])?, start, parse_f64(path, &r[2])?))
        })
        .collect()
}

/// `membership.csv`: `ticker,class,redundant,synergistic,total`.
pub fn write_membership(path: &Path, m: &Membership) -> Result<()> {
    let rows = m.rows.iter().map(|r| {
        vec![
            r.ticker.clone(),
            r.class.map_or("unknown", |c| c.as_str()).to_string(),
            r.redundant.to_string(),
            r.synergistic.to_string(),
            r.total().to_string(),
        ]
    });
    write_rows(path, &header(&["ticker", "class", "redundant", "synergistic", "total"]), rows)
}

/// `class_fractions.csv`.
pub fn write_class_fractions(path: &Path, fractions: &[ClassFraction]) -> Result<()> {
    let rows = fractions.iter().map(|f| {
        vec![
            f.kind.to_string(),
            f.size.to_string(),
            f.count.to_string(),
            fmt_f64(f.coin),
            fmt_f64(f.token),
            fmt_f64(f.stablecoin),
            fmt_f64(f.fiat),
            fmt_f64(f.unknown),
        ]
    });
    write_rows(
        path,
        &header(&["kind", "size", "count", "coin", "token", "stablecoin", "fiat", "unknown"]),
        rows,
    )
}

/// `age_strength.csv` (per node) and a summary with the two rank
/// correlations.
pub fn write_age_strength(path: &Path, summary_path: &Path, a: &AgeStrength) -> Result<()> {
    let rows = a
        .nodes
        .iter()
        .map(|n| vec![n.ticker.clone(), n.age.to_string(), fmt_f64(n.mean_in), fmt_f64(n.mean_out)]);
    write_rows(path, &header(&["ticker", "age", "mean_k_in", "mean_k_out"]), rows)?;
    let summary = [("in", a.rho_in), ("out", a.rho_out)].map(|(name, r)| {
        vec![
            name.to_string(),
            fmt_opt(r.rho),
            fmt_opt(r.p_value),
            r.stars().to_string(),
            r.n.to_string(),
        ]
    });
    write_rows(summary_path, &header(&["strength", "rho", "p_value", "stars", "n"]), summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oinfo::MultipletKind;
    use proptest::prelude::*;

    #[test]
    fn panel_round_trip_is_exact() {
        let panel = ReturnPanel::new(
            3,
            0,
            vec!["A".into(), "B".into(), "C".into()],
            DMatrix::from_row_slice(2, 3, &[0.1, f64::NAN, 1e-300, -2.5e-7, f64::NAN, 1.0 / 3.0]),
            vec![true, false, true],
            vec![None; 3],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel_3.csv");
        write_panel(&path, &panel).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("A,C\n"));
        let back = read_panel(&path, 3, 0).unwrap();
        assert_eq!(back.labels, vec!["A", "C"]);
        assert_eq!(back.column(0), &[0.1, -2.5e-7]);
        assert_eq!(back.column(1), &[1e-300, 1.0 / 3.0]);
    }

    #[test]
    fn corrupted_panel_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel_0.csv");
        fs::write(&path, "A,B\n0.1,0.2\n0.3\n").unwrap();
        assert!(matches!(read_panel(&path, 0, 0), Err(Error::Format { .. })));
        fs::write(&path, "A,B\n0.1,zz\n").unwrap();
        assert!(matches!(read_panel(&path, 0, 0), Err(Error::Format { .. })));
    }

    #[test]
    fn edges_and_pairs() {
        let edges = vec![
            GcEdge {
                source: "A".into(),
                target: "B".into(),
                f_value: 0.25,
                p_value: 1e-12,
                order_p: 2,
                order_q: 2,
                sample_count: 100,
                significant: true,
            },
            GcEdge {
                source: "B".into(),
                target: "A".into(),
                f_value: 0.001,
                p_value: 0.4,
                order_p: 1,
                order_q: 1,
                sample_count: 100,
                significant: false,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let e = dir.path().join("edges_0.csv");
        write_edges(&e, 0, &edges).unwrap();
        assert_eq!(
            fs::read_to_string(&e).unwrap(),
            "window,source,target,f_value,p_value,order_p,order_q\n0,A,B,0.25,1e-12,2,2\n"
        );
        let g = dir.path().join("gc_0.csv");
        write_gc_pairs(&g, 0, &edges).unwrap();
        assert_eq!(read_gc_pairs(&g).unwrap(), edges);
    }

    #[test]
    fn adjacency_and_multiplets_round_trip() {
        let a = AdjacencyMatrix::new(
            Some(1),
            vec!["x".into(), "y".into()],
            DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.125, 0.0]),
            0.01,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("adjacency_1.csv");
        write_adjacency(&p, &a).unwrap();
        assert_eq!(read_adjacency(&p, Some(1), 0.01).unwrap(), a);

        let s = dir.path().join("strengths_1.csv");
        write_strengths(&s, &a).unwrap();
        assert_eq!(fs::read_to_string(&s).unwrap(), "ticker,k_in,k_out\nx,0.125,0.5\ny,0.5,0.125\n");

        let results = vec![MultipletResult {
            window_id: 1,
            target: "y".into(),
            kind: MultipletKind::Synergistic,
            size: 3,
            members: vec!["a".into(), "c".into(), "b".into()],
            value: -0.0625,
            lag_p: 1,
        }];
        let m = dir.path().join("multiplets_1.csv");
        write_multiplets(&m, &results).unwrap();
        assert!(fs::read_to_string(&m).unwrap().contains("1,y,synergistic,3,-0.0625,1,a|c|b"));
        assert_eq!(read_multiplets(&m).unwrap(), results);
    }

    #[test]
    fn missing_values_print_as_na() {
        assert_eq!(fmt_f64(f64::NAN), "NA");
        assert_eq!(fmt_opt(None), "NA");
        assert!(parse_f64(Path::new("x"), "NA").unwrap().is_nan());
    }

    #[test]
    fn atomic_write_leaves_no_temporary() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("f.json");
        write_json(&p, &vec![1, 2]).unwrap();
        let names: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("f.json")]);
    }

    proptest! {
        #[test]
        fn floats_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            prop_assert_eq!(parse_f64(Path::new("x"), &fmt_f64(v)).unwrap().to_bits(), v.to_bits());
        }
    }
}
