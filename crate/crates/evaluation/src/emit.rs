use std::fmt::Write;
use std::str::FromStr;

use crate::report::{Aggregate, EvalReport, ReportKind};
use crate::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Tab-separated summary table (`report.tsv`).
    Tsv,
    /// Full JSON dump of cells and aggregates (`report.meta`).
    Meta,
    /// Completeness / balanced-accuracy series per model (`sweep.plotdata`).
    PlotData,
}

impl ReportFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Tsv => "report.tsv",
            ReportFormat::Meta => "report.meta",
            ReportFormat::PlotData => "sweep.plotdata",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(ReportFormat::Tsv),
            "meta" => Ok(ReportFormat::Meta),
            "plotdata" => Ok(ReportFormat::PlotData),
            other => Err(EvalError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmitOptions {
    /// Timing makes output differ between runs; leave it out for
    /// reproducible reports.
    pub timing: bool,
}

impl Default for EmitOptions {
    fn default() -> Self {
        Self { timing: true }
    }
}

const NA: &str = "NA";

fn num(x: Option<f64>) -> String {
    x.map_or_else(|| NA.to_string(), |v| format!("{v:.6}"))
}

fn level(p: f64) -> String {
    format!("{p:.2}")
}

pub fn emit_report(report: &EvalReport, format: ReportFormat, options: EmitOptions) -> String {
    let report = if options.timing { report.clone() } else { report.without_timing() };
    match format {
        ReportFormat::Tsv => match report.kind {
            ReportKind::Comparison => comparison_table(&report, options),
            ReportKind::Sweep => sweep_table(&report),
        },
        ReportFormat::Meta => serde_json::to_string_pretty(&report).expect("reports serialize") + "\n",
        ReportFormat::PlotData => plot_data(&report),
    }
}

fn comparison_table(report: &EvalReport, options: EmitOptions) -> String {
    let mut header = vec![
        "model",
        "variant",
        "completeness",
        "repetitions",
        "failed",
        "train_balanced_accuracy",
        "balanced_accuracy",
        "balanced_accuracy_std",
        "accuracy",
    ];
    if options.timing {
        header.extend(["train_ms", "inference_ms", "per_row_inference_ms"]);
    }
    let mut out = header.join("\t") + "\n";
    for a in &report.aggregates {
        let mut row = vec![
            a.model.clone(),
            a.variant.name().to_string(),
            level(a.completeness),
            a.repetitions.to_string(),
            a.failed.to_string(),
            num(a.mean_train_balanced_accuracy),
            num(a.mean_balanced_accuracy),
            num(a.std_balanced_accuracy),
            num(a.mean_accuracy),
        ];
        if options.timing {
            let t = a.mean_timing.as_ref();
            row.push(num(t.and_then(|t| t.train_ms)));
            row.push(num(t.map(|t| t.inference_ms)));
            row.push(num(t.map(|t| t.per_row_inference_ms)));
        }
        out += &(row.join("\t") + "\n");
    }
    out
}

/// One row per model, one column of mean balanced accuracy per level.
fn sweep_table(report: &EvalReport) -> String {
    let levels = report.levels();
    let mut out = String::from("model\tvariant");
    for &p in &levels {
        write!(out, "\t{}", level(p)).unwrap();
    }
    out.push('\n');
    for (model, variant) in report.models() {
        write!(out, "{model}\t{}", variant.name()).unwrap();
        for &p in &levels {
            let cell = report.aggregate(&model, variant, p).and_then(|a| a.mean_balanced_accuracy);
            write!(out, "\t{}", num(cell)).unwrap();
        }
        out.push('\n');
    }
    out
}

fn plot_data(report: &EvalReport) -> String {
    let mut out = String::from("# completeness\tbalanced_accuracy\n");
    for (model, variant) in report.models() {
        let series: Vec<&Aggregate> = report
            .aggregates
            .iter()
            .filter(|a| a.model == model && a.variant == variant)
            .collect();
        write!(out, "\n# {model} {}\n", variant.name()).unwrap();
        for a in series {
            writeln!(out, "{}\t{}", level(a.completeness), num(a.mean_balanced_accuracy)).unwrap();
        }
    }
    out
}
