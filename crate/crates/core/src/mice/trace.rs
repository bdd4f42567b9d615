use std::collections::BTreeSet;
use std::fmt::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::plot::{Chart, Range};
use crate::util::{fmt_f64, write_file};

use super::ImputedStack;

/// Mean and SD of the values imputed for one variable in one sweep of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub chain: usize,
    pub iteration: usize,
    pub variable: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub entries: Vec<TraceEntry>,
}

impl ConvergenceTrace {
    pub fn variables(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.entries
            .iter()
            .filter(|e| seen.insert(e.variable.clone()))
            .map(|e| e.variable.clone())
            .collect()
    }

    pub fn series(&self, variable: &str, chain: usize) -> Vec<&TraceEntry> {
        self.entries
            .iter()
            .filter(|e| e.variable == variable && e.chain == chain)
            .collect()
    }
}

pub fn trace_csv(trace: &ConvergenceTrace) -> String {
    let mut out = String::from("chain,iteration,variable,mean,sd\n");
    for e in &trace.entries {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.chain,
            e.iteration,
            e.variable,
            fmt_f64(e.mean),
            fmt_f64(e.sd)
        );
    }
    out
}

/// One panel per variable stacked vertically, one line per chain.
pub fn trace_svg(trace: &ConvergenceTrace) -> String {
    let chains: BTreeSet<usize> = trace.entries.iter().map(|e| e.chain).collect();
    let mut panels = String::new();
    let vars = trace.variables();
    for (i, var) in vars.iter().enumerate() {
        let x = Range::covering(trace.entries.iter().map(|e| e.iteration as f64));
        let y = Range::covering(trace.entries.iter().filter(|e| &e.variable == var).map(|e| e.mean));
        let mut chart = Chart::new(&format!("{var}: mean of imputed values"), "Iteration", "Mean", x, y);
        for &c in &chains {
            let pts: Vec<(f64, f64)> = trace
                .series(var, c)
                .iter()
                .map(|e| (e.iteration as f64, e.mean))
                .collect();
            chart.polyline(&pts, c, &format!("chain {c}"));
        }
        let _ = writeln!(panels, "<g transform=\"translate(0,{})\">", i * 480);
        panels.push_str(&chart.finish());
        panels.push_str("</g>\n");
    }
    let height = vars.len().max(1) * 480;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"{height}\" viewBox=\"0 0 640 {height}\">\n{panels}</svg>\n"
    )
}

/// Writes the trace as CSV to `csv_path` and the plot next to it as `.svg`.
pub fn convergence_trace(stack: &ImputedStack, csv_path: impl AsRef<Path>) -> Result<()> {
    let path = csv_path.as_ref();
    write_file(path, &trace_csv(&stack.trace))?;
    write_file(&path.with_extension("svg"), &trace_svg(&stack.trace))
}
