//! CSV reports.
//!
//! Each file starts with a `# schema=<name>` comment line, then a header row.
//! Floats use Rust's shortest round-trip formatting.

use std::io::Write;
use std::path::Path;

use super::Result;
use crate::diagnostics::{DeGiorgiSequence, EnergyLedger, LinfProfile};
use crate::experiments::{AttractorProbe, NuSweepReport, SemicontinuityReport};

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub schema: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(schema: &str, header: &[&str]) -> Self {
        Self {
            schema: schema.to_owned(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_writer<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# schema={}", self.schema)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_string(&self) -> String {
        let mut buf = Vec::new();
        self.to_writer(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

pub fn write_csv(path: impl AsRef<Path>, table: &CsvTable) -> Result<()> {
    let file = std::fs::File::create(path)?;
    table.to_writer(std::io::BufWriter::new(file))
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(f).unwrap_or_default()
}

pub fn ledger_table(ledger: &EnergyLedger) -> CsvTable {
    let mut t = CsvTable::new(
        "energy-ledger-v1",
        &["t", "energy", "dissipation", "injection", "cum_dissipation", "cum_injection", "residual"],
    );
    for r in ledger.rows() {
        t.push(vec![
            f(r.t),
            f(r.energy),
            f(r.dissipation),
            f(r.injection),
            f(r.cumulative_dissipation),
            f(r.cumulative_injection),
            f(r.residual),
        ]);
    }
    t
}

pub fn linf_table(profile: &LinfProfile) -> CsvTable {
    let mut t = CsvTable::new("linf-profile-v1", &["t", "linf", "ratio"]);
    for i in 0..profile.times.len() {
        t.push(vec![f(profile.times[i]), f(profile.linf[i]), f(profile.ratio[i])]);
    }
    t
}

pub fn de_giorgi_table(seq: &DeGiorgiSequence) -> CsvTable {
    let mut t = CsvTable::new("de-giorgi-v1", &["n", "level", "t_n", "c_n"]);
    for n in 0..seq.c.len() {
        t.push(vec![n.to_string(), f(seq.levels[n]), f(seq.times[n]), f(seq.c[n])]);
    }
    t
}

pub fn sweep_table(report: &NuSweepReport) -> CsvTable {
    let mut t = CsvTable::new("nu-sweep-v1", &["nu", "t", "s", "error"]);
    for r in &report.rows {
        t.push(vec![f(r.nu), f(r.t), f(r.s), f(r.error)]);
    }
    t
}

pub fn ball_table(probe: &AttractorProbe) -> CsvTable {
    let mut t = CsvTable::new(
        "absorbing-ball-v1",
        &["seed", "initial_norm", "radius", "entry_time", "max_ratio_after_entry", "min_decay_rate", "failure"],
    );
    for m in &probe.members {
        t.push(vec![
            m.seed.to_string(),
            f(m.initial_norm),
            f(probe.radius),
            opt(m.entry_time),
            f(m.max_ratio_after_entry),
            f(m.min_decay_rate),
            m.failure.clone().unwrap_or_default(),
        ]);
    }
    t
}

pub fn distance_table(probe: &AttractorProbe) -> CsvTable {
    let mut t = CsvTable::new("distances-v1", &["seed_a", "seed_b", "t", "strong", "weak", "weak_tail_bound"]);
    for ((a, b), series) in &probe.distances {
        for i in 0..series.times.len() {
            t.push(vec![
                a.to_string(),
                b.to_string(),
                f(series.times[i]),
                f(series.strong[i]),
                f(series.weak[i]),
                f(series.tail_bound),
            ]);
        }
    }
    t
}

pub fn semicontinuity_table(report: &SemicontinuityReport) -> CsvTable {
    let mut t = CsvTable::new("semicontinuity-v1", &["nu", "excess", "cloud_size", "burn_in", "label"]);
    for (i, nu) in report.nu_list.iter().enumerate() {
        t.push(vec![
            f(*nu),
            f(report.excess[i]),
            report.cloud_sizes.get(i).map(|c| c.to_string()).unwrap_or_default(),
            f(report.burn_in),
            report.label.to_owned(),
        ]);
    }
    t
}
