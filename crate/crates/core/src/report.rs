//! Joined per-feature table and its rank correlations.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::attribution::ImportanceReport;
use crate::error::Result;
use crate::flow::{RedundancyScore, SensitivityScore};
use crate::numkit::{spearman, RankCorrelation};
use crate::vinformation::{fmt_opt, ComplexityProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterRow {
    pub feature_id: usize,
    pub complexity: Option<f64>,
    pub lambda: Option<f64>,
    pub importance: Option<f64>,
    pub redundancy: Option<f64>,
    pub sensitivity: Option<f64>,
}

pub const METRICS: [&str; 5] = ["K", "lambda", "importance", "redundancy", "sensitivity"];

impl MasterRow {
    fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "K" => self.complexity,
            "lambda" => self.lambda,
            "importance" => self.importance,
            "redundancy" => self.redundancy,
            "sensitivity" => self.sensitivity,
            _ => None,
        }
    }
}

pub fn master_table(
    n_features: usize,
    profiles: &[ComplexityProfile],
    importance: Option<&ImportanceReport>,
    redundancy: Option<&[RedundancyScore]>,
    sensitivity: Option<&[SensitivityScore]>,
) -> Vec<MasterRow> {
    let mut rows: Vec<MasterRow> = (0..n_features)
        .map(|feature_id| MasterRow {
            feature_id,
            complexity: None,
            lambda: None,
            importance: None,
            redundancy: None,
            sensitivity: None,
        })
        .collect();
    for p in profiles.iter().filter(|p| p.feature_id < n_features) {
        rows[p.feature_id].complexity = p.complexity_k;
        rows[p.feature_id].lambda = p.lambda_ttd;
    }
    for f in importance.map(|r| r.per_feature.as_slice()).unwrap_or_default() {
        if let Some(row) = rows.get_mut(f.feature_id) {
            row.importance = Some(f.importance);
        }
    }
    for r in redundancy.unwrap_or_default() {
        if let Some(row) = rows.get_mut(r.feature_id) {
            row.redundancy = Some(r.aggregate);
        }
    }
    for s in sensitivity.unwrap_or_default() {
        if let Some(row) = rows.get_mut(s.feature_id) {
            row.sensitivity = Some(s.aggregate);
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub x: String,
    pub y: String,
    pub n: usize,
    pub correlation: RankCorrelation,
}

/// Spearman correlation of `K` with every other populated metric.
pub fn complexity_correlations(rows: &[MasterRow], n_permutations: usize, seed: u64) -> Result<Vec<PairCorrelation>> {
    let mut out = Vec::new();
    for other in &METRICS[1..] {
        let (xs, ys): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter_map(|r| Some((r.metric("K")?, r.metric(other)?)))
            .unzip();
        if xs.len() < 3 {
            continue;
        }
        out.push(PairCorrelation {
            x: "K".into(),
            y: other.to_string(),
            n: xs.len(),
            correlation: spearman(&xs, &ys, n_permutations, seed)?,
        });
    }
    Ok(out)
}

pub fn write_master_csv(rows: &[MasterRow], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "feature_id,{}", METRICS.join(","))?;
    for r in rows {
        let cells: Vec<String> = METRICS.iter().map(|m| fmt_opt(r.metric(m))).collect();
        writeln!(out, "{},{}", r.feature_id, cells.join(","))?;
    }
    Ok(())
}

pub fn write_correlations_csv(pairs: &[PairCorrelation], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "x,y,n,rho,p_value,n_permutations")?;
    for p in pairs {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.x, p.y, p.n, p.correlation.rho, p.correlation.p_value, p.correlation.n_permutations
        )?;
    }
    Ok(())
}
