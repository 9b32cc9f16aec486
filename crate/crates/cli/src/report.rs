use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::PathBuf;

use anyhow::{bail, Context};
use nct_core::experiment::ExperimentConfig;
use nct_core::train::{Coefficients, LossReport, Stage};

use crate::train::LOSS_LOG;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Loss log written by `train`.
    #[arg(long, conflicts_with = "config")]
    log: Option<PathBuf>,
    /// Experiment whose loss log to read.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    output: Option<PathBuf>,
}

const TERMS: [&str; 6] = ["sent", "nct", "ud", "sd", "ud_mono", "sd_mono"];

/// One table row: the weighted value of every computed term.
pub struct Row {
    pub stage: u8,
    pub step: u64,
    pub steps: u64,
    pub lambda: f64,
    pub total: f64,
    pub terms: [Option<f64>; 6],
}

impl Row {
    pub fn from_report(r: &LossReport) -> anyhow::Result<Self> {
        let Some(stage) = Stage::from_number(r.stage) else {
            bail!("record with unknown stage {}", r.stage);
        };
        let k = Coefficients::for_stage(stage, &r.weights, r.objective, r.lambda);
        let c = &r.components;
        let pairs = [
            (c.sent, k.sent),
            (c.nct, k.nct),
            (c.ud, k.ud),
            (c.sd, k.sd),
            (c.ud_mono, k.ud_mono),
            (c.sd_mono, k.sd_mono),
        ];
        Ok(Row {
            stage: r.stage,
            step: r.step,
            steps: r.steps,
            lambda: r.lambda,
            total: r.total,
            terms: pairs.map(|(v, w)| v.map(|v| v * w)),
        })
    }

    pub fn sum(&self) -> f64 {
        self.terms.iter().flatten().sum()
    }
}

pub fn read_log(path: &PathBuf) -> anyhow::Result<Vec<LossReport>> {
    let file = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .with_context(|| format!("{}:{}: malformed loss record", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

pub fn run(args: &Args) -> anyhow::Result<()> {
    let path = match (&args.log, &args.config) {
        (Some(p), _) => p.clone(),
        (None, Some(c)) => ExperimentConfig::load(c)?.out.join(LOSS_LOG),
        (None, None) => bail!("pass --log or --config"),
    };
    let records = read_log(&path)?;
    if records.is_empty() {
        bail!("{} holds no loss records", path.display());
    }
    let rows = records.iter().map(Row::from_report).collect::<anyhow::Result<Vec<_>>>()?;

    let header = ["stage", "step", "n/N", "lambda", "total"]
        .into_iter()
        .chain(TERMS)
        .chain(["sum"])
        .collect::<Vec<_>>();
    let mut table = vec![header.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    for (i, r) in rows.iter().enumerate() {
        let sum = r.sum();
        if (sum - r.total).abs() > 1e-9 * r.total.abs().max(1.0) {
            bail!("record {}: weighted terms sum to {sum}, logged total is {}", i + 1, r.total);
        }
        let mut cells = vec![
            r.stage.to_string(),
            r.step.to_string(),
            format!("{}/{}", r.step, r.steps),
            format!("{:.6}", r.lambda),
            format!("{:.6}", r.total),
        ];
        cells.extend(r.terms.iter().map(|&t| cell(t)));
        cells.push(format!("{sum:.6}"));
        table.push(cells);
    }

    let widths: Vec<usize> = (0..header.len())
        .map(|c| table.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    for row in &table {
        let line: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        writeln!(text, "{}", line.join("  ").trim_end())?;
    }
    print!("{text}");
    if let Some(out) = &args.output {
        let csv: String = table.iter().map(|row| row.join(",") + "\n").collect();
        std::fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}
