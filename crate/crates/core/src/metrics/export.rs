use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::scores::ConceptStats;
use crate::error::{Error, Result};

pub const STATS_HEADER: &str = "concept,energy,modality_score,active,bridge,attribution";

/// One row per concept; inactive concepts leave `modality_score` empty.
pub fn write_stats_csv<W: Write>(mut w: W, stats: &ConceptStats) -> Result<()> {
    let c = stats.width();
    if stats.modality_score.len() != c || stats.bridge.len() != c || stats.attribution.len() != c {
        return Err(Error::shape("concept statistics have mismatched lengths"));
    }
    writeln!(w, "{STATS_HEADER}")?;
    for i in 0..c {
        let (score, active) = match stats.modality_score[i] {
            Some(s) => (s.to_string(), true),
            None => (String::new(), false),
        };
        writeln!(w, "{i},{},{score},{active},{},{}", stats.energy[i], stats.bridge[i], stats.attribution[i])?;
    }
    Ok(())
}

/// Two-column CSV with the given header names.
pub fn write_two_column_csv<W: Write, A: std::fmt::Display, B: std::fmt::Display>(
    mut w: W,
    header: (&str, &str),
    rows: impl IntoIterator<Item = (A, B)>,
) -> Result<()> {
    writeln!(w, "{},{}", header.0, header.1)?;
    for (a, b) in rows {
        writeln!(w, "{a},{b}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopSetReport {
    pub metric: String,
    pub fraction: f64,
    pub indices: Vec<usize>,
}

impl TopSetReport {
    pub fn new(metric: impl Into<String>, fraction: f64, indices: &BTreeSet<usize>) -> Self {
        Self { metric: metric.into(), fraction, indices: indices.iter().copied().collect() }
    }
}
