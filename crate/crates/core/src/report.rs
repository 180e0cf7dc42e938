//! CSV reports. Numbers carry 12 significant digits and a '.' decimal separator.

use std::io::Write;

use crate::equilibrium::TraceRow;
use crate::sim_eval::ExampleReport;

/// Formats `x` with 12 significant digits, trimming trailing zeros.
pub fn fmt12(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim(mantissa))
    }
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_trace<W: Write>(out: W, trace: &[TraceRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "value", "policy_delta", "nature_delta"])?;
    for row in trace {
        w.write_record([
            row.round.to_string(),
            fmt12(row.value),
            fmt12(row.policy_delta),
            fmt12(row.nature_delta),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_example<W: Write>(out: W, report: &ExampleReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "formulation",
        "K1",
        "worst_case_cost",
        "adversary_description",
    ])?;
    for row in &report.rows {
        w.write_record([
            row.formulation.clone(),
            fmt12(row.k1),
            fmt12(row.worst_case_cost),
            row.adversary.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Summary of a synthesis run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub value: f64,
    pub gap: f64,
    pub iterations: usize,
    pub lambda_v: f64,
    pub lambda_w: f64,
    pub cost_core: f64,
}

pub fn write_summary<W: Write>(out: W, s: &Summary) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "value",
        "gap",
        "iterations",
        "lambda_v",
        "lambda_w",
        "cost_core",
    ])?;
    w.write_record([
        fmt12(s.value),
        fmt12(s.gap),
        s.iterations.to_string(),
        fmt12(s.lambda_v),
        fmt12(s.lambda_w),
        fmt12(s.cost_core),
    ])?;
    w.flush()?;
    Ok(())
}

/// Monte Carlo estimate next to the analytic expected cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub samples: usize,
    pub seed: u64,
    pub mean: f64,
    pub stderr: f64,
    pub analytic: f64,
}

impl Evaluation {
    /// `|mean - analytic|` in standard errors (0 when both agree exactly).
    pub fn z_score(&self) -> f64 {
        let diff = (self.mean - self.analytic).abs();
        if diff == 0.0 {
            0.0
        } else {
            diff / self.stderr
        }
    }
}

pub fn write_evaluation<W: Write>(out: W, e: &Evaluation) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["samples", "seed", "mean", "stderr", "analytic", "z_score"])?;
    w.write_record([
        e.samples.to_string(),
        e.seed.to_string(),
        fmt12(e.mean),
        fmt12(e.stderr),
        fmt12(e.analytic),
        fmt12(e.z_score()),
    ])?;
    w.flush()?;
    Ok(())
}
