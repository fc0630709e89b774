//! File formats: edge-list graph exchange, trajectory CSV, and analytic-report
//! CSV/JSON rows.
//!
//! The edge-list format is one JSON header line followed by one `u v` edge per
//! line (1-based original node ids):
//!
//! ```text
//! {"n":5,"kind":"k_regular","seed":7,"misbehaving":[5]}
//! 1 2
//! 2 3
//! ...
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::analysis::AnalyticReport;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::graphs::Network;

#[derive(Debug, Serialize, Deserialize)]
struct EdgeListHeader {
    n: usize,
    kind: String,
    seed: u64,
    misbehaving: Vec<usize>,
}

/// Writes a network as a JSON header line plus `u v` edge lines (1-based ids).
pub fn write_edge_list<W: Write>(net: &Network, out: &mut W) -> Result<()> {
    let header = EdgeListHeader {
        n: net.n(),
        kind: net
            .source()
            .map(|s| s.kind_name().to_string())
            .unwrap_or_else(|| "explicit".to_string()),
        seed: net.source().map(|s| s.seed).unwrap_or(0),
        misbehaving: {
            let mut ids = net.misbehaving_ids().to_vec();
            ids.sort_unstable();
            ids
        },
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    let mut edges: Vec<(usize, usize)> = net
        .edges()
        .into_iter()
        .map(|(u, v)| {
            let (a, b) = (net.label(u), net.label(v));
            (a.min(b), a.max(b))
        })
        .collect();
    edges.sort_unstable();
    for (u, v) in edges {
        writeln!(out, "{u} {v}")?;
    }
    Ok(())
}

/// Reads a network written by [`write_edge_list`].
pub fn read_edge_list<R: BufRead>(input: R) -> Result<Network> {
    let mut lines = input.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Config("empty edge-list file".into()))??;
    let header: EdgeListHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::Config(format!("bad edge-list header: {e}")))?;
    let mut edges = Vec::new();
    for line in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<usize> {
            tok.and_then(|t| t.parse::<usize>().ok())
                .ok_or_else(|| Error::Config(format!("bad edge line: {trimmed:?}")))
        };
        let u = parse(parts.next())?;
        let v = parse(parts.next())?;
        if u == 0 || v == 0 || u > header.n || v > header.n {
            return Err(Error::Config(format!(
                "edge ({u}, {v}) out of range for n = {}",
                header.n
            )));
        }
        edges.push((u - 1, v - 1));
    }
    let net = Network::from_edges(header.n, &edges)?;
    if header.misbehaving.is_empty() {
        Ok(net)
    } else {
        net.mark_misbehaving(&header.misbehaving)
    }
}

/// Trajectory CSV: `k,node_id,role,state` with 1-based original node ids.
pub fn write_trajectory_csv<W: Write>(
    traj: &Trajectory,
    net: &Network,
    out: &mut W,
) -> Result<()> {
    writeln!(out, "k,node_id,role,state")?;
    for k in 0..=traj.horizon {
        for i in 0..net.n() {
            let role = if i < net.n_regular() {
                "regular"
            } else {
                "misbehaving"
            };
            writeln!(out, "{k},{},{role},{}", net.label(i), traj.states[(k, i)])?;
        }
    }
    Ok(())
}

pub const REPORT_CSV_HEADER: &str = "lambda,e_v,e_n,e_total,e_deception,e_consensus";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One CSV row matching [`REPORT_CSV_HEADER`]; the decomposition columns are
/// empty outside their single-attacker diagonal-prior scope.
pub fn report_csv_row(report: &AnalyticReport) -> String {
    format!(
        "{},{},{},{},{},{}",
        report.lambda,
        report.e_v,
        report.e_n,
        report.e_total,
        opt(report.e_deception),
        opt(report.e_consensus)
    )
}

/// Scalar view of a report for JSON output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportScalars {
    pub lambda: f64,
    pub e_v: f64,
    pub e_n: f64,
    pub e_total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_deception: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_consensus: Option<f64>,
}

impl From<&AnalyticReport> for ReportScalars {
    fn from(r: &AnalyticReport) -> Self {
        Self {
            lambda: r.lambda,
            e_v: r.e_v,
            e_n: r.e_n,
            e_total: r.e_total,
            e_deception: r.e_deception,
            e_consensus: r.e_consensus,
        }
    }
}

pub fn report_json(report: &AnalyticReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ReportScalars::from(report))?)
}
