use std::fmt::Write as _;
use std::path::Path;

use super::config::Task;
use super::pipeline::{score, TaskOutcome};
use super::svg::{bar_panels, histogram_panels, line_chart, BarPanel, Histogram, Series};
use crate::error::{Error, Result};
use crate::metrics::{error_pdf, errors, EvalReport, DEFAULT_PDF_BINS};
use crate::model::Family;
use crate::timeseries::{format_timestamp, parse_timestamp};

pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const FIGURES_DIR: &str = "figures";

const CM: f64 = 100.0;

pub fn predictions_file(task: Task) -> String {
    format!("predictions_task{}.csv", task.number())
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One row per task and model. Values in meters; `fer` is empty when undefined.
pub fn metrics_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("task,model,n_samples,mse,rmse,fer,max_error,max_error_timestamp,bias,error_std\n");
    for r in reports {
        let fer = r.fer.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.task,
            r.model_name,
            r.n_samples,
            r.mse,
            r.rmse,
            fer,
            r.max_error,
            format_timestamp(r.max_error_timestamp),
            r.bias,
            r.error_std
        );
    }
    out
}

/// `timestamp,target,<model>...`
pub fn predictions_csv(outcome: &TaskOutcome) -> String {
    let mut out = String::from("timestamp,target");
    for (f, _) in &outcome.predictions {
        out.push(',');
        out.push_str(f.name());
    }
    out.push('\n');
    for (i, (t, y)) in outcome.timestamps.iter().zip(&outcome.target).enumerate() {
        let _ = write!(out, "{},{}", format_timestamp(*t), y);
        for (_, p) in &outcome.predictions {
            let _ = write!(out, ",{}", p[i]);
        }
        out.push('\n');
    }
    out
}

/// Reads a predictions table back and rescores it.
pub fn parse_predictions(task: Task, text: &str) -> Result<TaskOutcome> {
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|l| l.1).unwrap_or_default();
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "timestamp" || cols[1] != "target" {
        return Err(Error::Parse {
            line: 1,
            message: "expected header timestamp,target,<model>...".into(),
        });
    }
    let families = cols[2..].iter().map(|c| Family::parse(c)).collect::<Result<Vec<_>>>()?;
    let mut timestamps = Vec::new();
    let mut target = Vec::new();
    let mut preds = vec![Vec::new(); families.len()];
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Parse {
            line: i + 1,
            message: m.to_string(),
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(bad("wrong number of fields"));
        }
        timestamps.push(parse_timestamp(fields[0]).ok_or_else(|| bad("bad timestamp"))?);
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        target.push(num(fields[1])?);
        for (p, f) in preds.iter_mut().zip(&fields[2..]) {
            p.push(num(f)?);
        }
    }
    score(task, timestamps, target, families.into_iter().zip(preds).collect())
}

pub fn load_predictions(dir: &Path, task: Task) -> Result<TaskOutcome> {
    let path = dir.join(predictions_file(task));
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    parse_predictions(task, &text)
}

fn cm(v: f64) -> String {
    format!("{:.2}", v * CM)
}

pub fn text_report(outcomes: &[TaskOutcome]) -> String {
    let mut out = String::new();
    for o in outcomes {
        let _ = writeln!(out, "Task {} ({} test samples)", o.task.number(), o.timestamps.len());
        let _ = writeln!(
            out,
            "{:<8}{:>10}{:>9}{:>14}  {:<22}{:>10}{:>11}",
            "model", "RMSE cm", "FER", "max err cm", "at", "bias cm", "std cm"
        );
        for r in &o.reports {
            let fer = r.fer.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into());
            let _ = writeln!(
                out,
                "{:<8}{:>10}{:>9}{:>14}  {:<22}{:>10}{:>11}",
                r.model_name,
                cm(r.rmse),
                fer,
                cm(r.max_error),
                format_timestamp(r.max_error_timestamp),
                cm(r.bias),
                cm(r.error_std)
            );
        }
        out.push('\n');
    }
    out
}

fn label(name: &str) -> String {
    Family::parse(name).map(|f| f.label().to_string()).unwrap_or_else(|_| name.to_string())
}

/// FER/RMSE bars, max-error bars, error time series and error histograms.
pub fn write_figures(outcomes: &[TaskOutcome], dir: &Path) -> Result<()> {
    let fig = dir.join(FIGURES_DIR);
    let mut max_labels = Vec::new();
    let mut max_values = Vec::new();
    for o in outcomes {
        let n = o.task.number();
        let labels: Vec<String> = o.reports.iter().map(|r| label(&r.model_name)).collect();
        let fer: Vec<f64> = o.reports.iter().map(|r| r.fer.unwrap_or(f64::NAN)).collect();
        let rmse: Vec<f64> = o.reports.iter().map(|r| r.rmse * CM).collect();
        let maxe: Vec<f64> = o.reports.iter().map(|r| r.max_error * CM).collect();
        write(
            &fig.join(format!("fer_rmse_task{n}.svg")),
            &bar_panels(
                &format!("Task {n}"),
                &[
                    BarPanel { title: "FER", labels: &labels, values: &fer },
                    BarPanel { title: "RMSE (cm)", labels: &labels, values: &rmse },
                ],
            ),
        )?;
        max_labels.push(labels);
        max_values.push(maxe);

        let t0 = o.timestamps.first().copied().unwrap_or(0);
        let days: Vec<f64> = o.timestamps.iter().map(|t| (t - t0) as f64 / 86400.0).collect();
        let mut errs = Vec::new();
        for (f, p) in &o.predictions {
            let e: Vec<f64> = errors(&o.target, p)?.iter().map(|v| v * CM).collect();
            errs.push((f.label(), e));
        }
        let series: Vec<Series> = errs
            .iter()
            .map(|(l, e)| Series { label: l, x: &days, y: e })
            .collect();
        write(
            &fig.join(format!("errors_task{n}.svg")),
            &line_chart(
                &format!("Task {n}: prediction minus target"),
                &format!("days since {}", format_timestamp(t0)),
                "cm",
                &series,
            ),
        )?;

        let pdfs = errs
            .iter()
            .filter(|(_, e)| e.len() >= 2)
            .map(|(l, e)| Ok((*l, error_pdf(e, DEFAULT_PDF_BINS)?)))
            .collect::<Result<Vec<_>>>()?;
        let hists: Vec<Histogram> = pdfs
            .iter()
            .map(|(l, p)| Histogram {
                label: l,
                edges: &p.edges,
                density: &p.density,
                gaussian: &p.gaussian,
            })
            .collect();
        write(
            &fig.join(format!("error_pdf_task{n}.svg")),
            &histogram_panels(&format!("Task {n}: error distribution"), "error (cm)", &hists),
        )?;
    }
    let titles: Vec<String> = outcomes.iter().map(|o| format!("Task {} max error (cm)", o.task.number())).collect();
    let panels: Vec<BarPanel> = titles
        .iter()
        .zip(max_labels.iter().zip(&max_values))
        .map(|(t, (l, v))| BarPanel { title: t, labels: l, values: v })
        .collect();
    write(&fig.join("max_error.svg"), &bar_panels("Maximum absolute error", &panels))
}

/// metrics.csv, the prediction tables, report.txt and the figures.
pub fn emit_reports(outcomes: &[TaskOutcome], dir: &Path) -> Result<()> {
    if outcomes.iter().all(|o| o.reports.is_empty()) {
        return Err(Error::InvalidArgument("no reports to emit".into()));
    }
    let reports: Vec<EvalReport> = outcomes.iter().flat_map(|o| o.reports.clone()).collect();
    write(&dir.join(METRICS_FILE), &metrics_csv(&reports))?;
    for o in outcomes {
        write(&dir.join(predictions_file(o.task)), &predictions_csv(o))?;
    }
    write(&dir.join(REPORT_FILE), &text_report(outcomes))?;
    write_figures(outcomes, dir)
}

/// Figures and the text report only.
pub fn emit_figures(outcomes: &[TaskOutcome], dir: &Path) -> Result<()> {
    write(&dir.join(REPORT_FILE), &text_report(outcomes))?;
    write_figures(outcomes, dir)
}
