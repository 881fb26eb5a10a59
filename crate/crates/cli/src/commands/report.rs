use std::fs::File;
use std::io::{self, BufWriter, Write};

use anyhow::Context;
use saeprobe::metrics::{write_stats_csv, ConceptStats};
use saeprobe::retrieval::RetrievalReport;
use serde_json::Value;

use crate::args::{Format, ReportArgs};
use crate::rundir::read_json;
use crate::settings::usage;

enum Input {
    Stats(ConceptStats),
    Retrieval(RetrievalReport),
}

pub fn run(args: &ReportArgs) -> anyhow::Result<()> {
    let raw: Value = read_json(&args.input)?;
    let input = if raw.get("energy").is_some() {
        Input::Stats(serde_json::from_value(raw).context("metrics::ConceptStats")?)
    } else if raw.get("recall_at").is_some() {
        Input::Retrieval(serde_json::from_value(raw).context("retrieval::RetrievalReport")?)
    } else {
        return Err(usage(format!("{} is neither an analyze stats file nor an eval report", args.input.display())));
    };

    let mut out: Box<dyn Write> = match &args.output {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    match (args.format, &input) {
        (Format::Csv, Input::Stats(s)) => write_stats_csv(&mut out, s)?,
        (Format::Csv, Input::Retrieval(r)) => r.write_csv(&mut out)?,
        (Format::Json, Input::Stats(s)) => writeln!(out, "{}", serde_json::to_string_pretty(s)?)?,
        (Format::Json, Input::Retrieval(r)) => writeln!(out, "{}", serde_json::to_string_pretty(r)?)?,
    }
    out.flush()?;
    Ok(())
}
