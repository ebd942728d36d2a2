//! Directed information-flow networks and high-order dependencies among
//! asset return series.
//!
//! The crate covers the whole analysis chain: trade tapes are aggregated to
//! minute bars and sliced into weekly return panels ([`ingest`]); pairwise
//! linear Granger causality builds a weighted directed network per window
//! ([`granger`], [`network`]); dynamic O-information with a greedy multiplet
//! search measures redundant and synergistic source groups per target
//! ([`oinfo`]). All information quantities are Gaussian log-determinant
//! estimates in nats ([`estimators`]). [`synth`] provides generators with
//! known ground truth, and [`pipeline`] wires everything into a resumable
//! batch run.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {:e})", $tol);
    }};
}

pub mod error;
pub mod estimators;
pub mod granger;
pub mod ingest;
pub mod io;
pub mod network;
pub mod oinfo;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
pub use estimators::{estimate_covariance, CovModel, RidgePolicy};
pub use granger::{GcConfig, GcEdge, VarFit};
pub use ingest::{AssetClass, AssetMeta, MinuteBar, Registry, ReturnPanel, TradeRecord, WindowCalendar};
pub use network::AdjacencyMatrix;
pub use oinfo::{MultipletKind, MultipletResult};
