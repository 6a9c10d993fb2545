//! Tables, histograms, per-replication exports and the run manifest.
//!
//! Everything written here is a pure function of the report contents, so
//! identical runs produce byte-identical files. Runtime is deliberately
//! left out of every file.

use std::fmt::Write as _;
use std::fs;
use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::config::{load_config, serialize_config};
use crate::error::{Error, Result};
use crate::estimators::{ForecastMethod, ForecastMetrics, InferenceEstimate, InferenceMethod};
use crate::montecarlo::{histogram, AggregateReport, Histogram, PipelineSet, ReplicationRecord, Series};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "DMLSIM_OUT";
pub const DEFAULT_OUT_DIR: &str = "dmlsim-out";
pub const DEFAULT_BINS: usize = 30;

pub const SCENARIO_FILE: &str = "scenario.cfg";
pub const REPLICATIONS_FILE: &str = "replications.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
    Markdown,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Text => "txt",
            TableFormat::Csv => "csv",
            TableFormat::Markdown => "md",
        }
    }
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(TableFormat::Text),
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            _ => Err(Error::InvalidArgument(format!("unknown table format {s:?}"))),
        }
    }
}

/// A rectangular table of preformatted cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn render(&self, format: TableFormat) -> String {
        match format {
            TableFormat::Text => self.render_text(),
            TableFormat::Csv => self.render_csv(),
            TableFormat::Markdown => self.render_markdown(),
        }
    }

    fn widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                w[i] = w[i].max(cell.chars().count());
            }
        }
        w
    }

    fn render_text(&self) -> String {
        let w = self.widths();
        let line = |cells: &[String]| {
            cells
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if i == 0 {
                        format!("{c:<width$}", width = w[i])
                    } else {
                        format!("{c:>width$}", width = w[i])
                    }
                })
                .collect::<Vec<_>>()
                .join("  ")
        };
        let rule = "-".repeat(w.iter().sum::<usize>() + 2 * (w.len() - 1));
        let mut out = format!("{}\n{rule}\n{}\n{rule}\n", self.title, line(&self.header));
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out.push_str(&rule);
        out.push('\n');
        out
    }

    fn render_csv(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            wtr.write_record(row).expect("in-memory write");
        }
        String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("cells are UTF-8")
    }

    fn render_markdown(&self) -> String {
        let esc = |c: &String| c.replace('|', "\\|");
        let mut out = format!("**{}**\n\n", self.title);
        let _ = writeln!(
            out,
            "| {} |",
            self.header.iter().map(esc).collect::<Vec<_>>().join(" | ")
        );
        let align: Vec<&str> = (0..self.header.len())
            .map(|i| if i == 0 { ":---" } else { "---:" })
            .collect();
        let _ = writeln!(out, "| {} |", align.join(" | "));
        for row in &self.rows {
            let _ = writeln!(out, "| {} |", row.iter().map(esc).collect::<Vec<_>>().join(" | "));
        }
        out
    }
}

fn fixed(v: f64, decimals: usize) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v:.decimals$}")
    }
}

fn percent(rate: f64) -> String {
    if rate.is_nan() {
        "NA".to_string()
    } else {
        format!("{:.1}%", 100.0 * rate)
    }
}

/// Label for one scenario in side-by-side tables.
pub fn scenario_label(report: &AggregateReport) -> String {
    format!("{} training obs", report.scenario.n_train)
}

/// Average RMSE per forecasting method; one row per requested method.
pub fn forecast_table(report: &AggregateReport) -> Table {
    comparison_forecast_table(&[report])
}

/// Inference summary with one column per requested method.
pub fn inference_table(report: &AggregateReport) -> Table {
    comparison_inference_table(&[report])
}

/// Forecast table with one pair of columns per report. Methods missing
/// from a report are shown as `NA`.
pub fn comparison_forecast_table(reports: &[&AggregateReport]) -> Table {
    let mut methods: Vec<ForecastMethod> = reports.iter().flat_map(|r| r.pipelines.forecast_methods()).collect();
    methods.sort();
    methods.dedup();
    let mut header = vec!["RMSE".to_string()];
    for r in reports {
        let suffix = if reports.len() > 1 {
            format!(" ({})", scenario_label(r))
        } else {
            String::new()
        };
        header.push(format!("In sample{suffix}"));
        header.push(format!("Out of sample{suffix}"));
    }
    let rows = methods
        .iter()
        .map(|&m| {
            let mut row = vec![m.label().to_string()];
            for r in reports {
                match r.forecast_row(m) {
                    Some(f) => {
                        row.push(fixed(f.mean_in_sample_rmse, 3));
                        row.push(fixed(f.mean_out_of_sample_rmse, 3));
                    }
                    None => row.extend(["NA".to_string(), "NA".to_string()]),
                }
            }
            row
        })
        .collect();
    Table {
        title: format!("Average RMSE over {}", replication_phrase(reports)),
        header,
        rows,
    }
}

/// Inference table with the rows mean, sd, t-statistic, p-value and
/// rejection rate, and one column per (report, method).
pub fn comparison_inference_table(reports: &[&AggregateReport]) -> Table {
    let mut header = vec!["alpha".to_string()];
    let mut columns = Vec::new();
    for r in reports {
        for m in r.pipelines.inference_methods() {
            let suffix = if reports.len() > 1 {
                format!(" ({})", scenario_label(r))
            } else {
                String::new()
            };
            header.push(format!("{}{suffix}", m.label()));
            columns.push(r.inference_row(m).expect("requested method has a row"));
        }
    }
    let row = |label: &str, cell: &dyn Fn(&crate::montecarlo::InferenceRow) -> String| {
        std::iter::once(label.to_string())
            .chain(columns.iter().map(|c| cell(c)))
            .collect::<Vec<_>>()
    };
    let rows = vec![
        row("Mean estimate", &|c| fixed(c.mean_estimate, 4)),
        row("Std. dev.", &|c| fixed(c.sd_estimate, 4)),
        row("t-statistic", &|c| fixed(c.t_stat_of_mean, 3)),
        row("p-value", &|c| fixed(c.p_value_of_mean, 4)),
        row("Rejection rate", &|c| percent(c.rejection_rate)),
    ];
    Table {
        title: format!("Inference on alpha over {}", replication_phrase(reports)),
        header,
        rows,
    }
}

fn replication_phrase(reports: &[&AggregateReport]) -> String {
    let mut counts: Vec<usize> = reports.iter().map(|r| r.scenario.replications).collect();
    counts.dedup();
    match counts.as_slice() {
        [one] => format!("{one} replications"),
        _ => format!(
            "{} replications",
            counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("/")
        ),
    }
}

/// Plain-text notes that do not fit the tables: support size and failures.
pub fn summary_notes(report: &AggregateReport) -> String {
    let mut out = String::new();
    if let Some(pl) = report.forecast_row(ForecastMethod::PostLasso) {
        if let Some(s) = pl.mean_support_size {
            let _ = writeln!(out, "Post-lasso mean selected features: {}", fixed(s, 2));
        }
    }
    for f in &report.forecast_rows {
        if f.failures > 0 {
            let _ = writeln!(out, "{}: {} failed replications excluded", f.method.label(), f.failures);
        }
    }
    for i in &report.inference_rows {
        if i.failures > 0 {
            let _ = writeln!(out, "{}: {} failed replications excluded", i.method.label(), i.failures);
        }
    }
    out
}

/// Kind of file listed in the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArtifactKind {
    ForecastTable,
    InferenceTable,
    HistogramCsv,
    HistogramSvg,
    PerRepCsv,
    ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmittedFile {
    /// Path relative to the output directory.
    pub path: String,
    pub kind: ArtifactKind,
    /// FNV-1a 64-bit digest of the file bytes, as 16 hex digits.
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_path: String,
    pub output_directory: String,
    pub emitted_files: Vec<EmittedFile>,
}

pub fn checksum(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn write_artifact(dir: &Path, name: &str, kind: ArtifactKind, bytes: &[u8]) -> Result<EmittedFile> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), bytes)?;
    Ok(EmittedFile {
        path: name.to_string(),
        kind,
        checksum: format!("{:016x}", checksum(bytes)),
    })
}

/// Write the forecast and inference tables (whichever have rows).
pub fn emit_tables(report: &AggregateReport, format: TableFormat, dir: &Path) -> Result<Vec<EmittedFile>> {
    emit_table_pair(&[report], format, dir, "")
}

/// Side-by-side tables for several scenarios.
pub fn emit_comparison_tables(
    reports: &[&AggregateReport],
    format: TableFormat,
    dir: &Path,
) -> Result<Vec<EmittedFile>> {
    emit_table_pair(reports, format, dir, "comparison_")
}

fn emit_table_pair(
    reports: &[&AggregateReport],
    format: TableFormat,
    dir: &Path,
    prefix: &str,
) -> Result<Vec<EmittedFile>> {
    let ext = format.extension();
    let mut out = Vec::new();
    if reports.iter().any(|r| !r.forecast_rows.is_empty()) {
        let text = comparison_forecast_table(reports).render(format);
        out.push(write_artifact(
            dir,
            &format!("{prefix}forecast.{ext}"),
            ArtifactKind::ForecastTable,
            text.as_bytes(),
        )?);
    }
    if reports.iter().any(|r| !r.inference_rows.is_empty()) {
        let text = comparison_inference_table(reports).render(format);
        out.push(write_artifact(
            dir,
            &format!("{prefix}inference.{ext}"),
            ArtifactKind::InferenceTable,
            text.as_bytes(),
        )?);
    }
    Ok(out)
}

/// Series with a histogram figure.
pub const HISTOGRAM_SERIES: [Series; 3] = [Series::OosRmsePostLasso, Series::AlphaNaive, Series::AlphaPartialling];

fn series_title(which: Series) -> &'static str {
    match which {
        Series::OosRmseOls => "Out-of-sample RMSE, OLS",
        Series::OosRmsePostLasso => "Out-of-sample RMSE, post-lasso",
        Series::AlphaNaive => "Estimates of alpha, naive",
        Series::AlphaPartialling => "Estimates of alpha, partialling-out",
    }
}

/// Histogram of one series: bins and overlay in one CSV.
///
/// Bin rows carry `lower, upper, count` and the empirical density
/// `count / (total · width)`. Overlay rows have `lower == upper == x`,
/// no count, and the fitted normal density.
pub fn histogram_csv(h: &Histogram) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["kind", "lower", "upper", "count", "density"])
        .expect("in-memory write");
    let width = h.bin_width();
    let total = h.total() as f64;
    for (i, &c) in h.counts.iter().enumerate() {
        let density = if width > 0.0 {
            c as f64 / (total * width)
        } else {
            f64::NAN
        };
        wtr.write_record([
            "bin".to_string(),
            format!("{:.6}", h.edges[i]),
            format!("{:.6}", h.edges[i + 1]),
            c.to_string(),
            fixed(density, 6),
        ])
        .expect("in-memory write");
    }
    for &(x, d) in &h.overlay {
        let xs = format!("{x:.6}");
        wtr.write_record(["overlay".to_string(), xs.clone(), xs, String::new(), format!("{d:.6}")])
            .expect("in-memory write");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("ASCII output")
}

/// Self-contained SVG bar chart with the normal overlay as a polyline.
pub fn histogram_svg(h: &Histogram, title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const LEFT: f64 = 60.0;
    const RIGHT: f64 = 40.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 50.0;
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;

    let lo = h.edges[0];
    let hi = h.edges[h.edges.len() - 1];
    let width = h.bin_width();
    let total = h.total() as f64;
    // Degenerate ranges draw a single full-height bar.
    let degenerate = !(width > 0.0);
    let bar_density: Vec<f64> = h
        .counts
        .iter()
        .map(|&c| {
            if degenerate {
                c as f64 / total
            } else {
                c as f64 / (total * width)
            }
        })
        .collect();
    let peak = bar_density
        .iter()
        .copied()
        .chain(h.overlay.iter().map(|p| p.1))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let sx = |x: f64| {
        if degenerate {
            LEFT + plot_w / 2.0
        } else {
            LEFT + (x - lo) / (hi - lo) * plot_w
        }
    };
    let sy = |d: f64| TOP + plot_h - d / peak * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        xml_escape(title)
    );
    if degenerate {
        let bw = plot_w / 4.0;
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4a78b0" stroke="white"/>"##,
            LEFT + (plot_w - bw) / 2.0,
            sy(1.0),
            bw,
            plot_h
        );
    } else {
        let bw = plot_w / h.counts.len() as f64;
        for (i, d) in bar_density.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            let _ = writeln!(
                svg,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4a78b0" stroke="white"/>"##,
                LEFT + bw * i as f64,
                sy(*d),
                bw,
                TOP + plot_h - sy(*d)
            );
        }
    }
    if !h.overlay.is_empty() {
        let pts: Vec<String> = h
            .overlay
            .iter()
            .map(|&(x, d)| format!("{:.2},{:.2}", sx(x), sy(d)))
            .collect();
        let _ = writeln!(
            svg,
            r##"<polyline fill="none" stroke="#d62728" stroke-width="2" points="{}"/>"##,
            pts.join(" ")
        );
    }
    let base = TOP + plot_h;
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{base}" x2="{:.1}" y2="{base}" stroke="black"/>"#,
        LEFT + plot_w
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{base}" stroke="black"/>"#
    );
    let ticks: Vec<(f64, f64)> = if degenerate {
        vec![(sx(lo), lo)]
    } else {
        (0..=4)
            .map(|i| lo + (hi - lo) * i as f64 / 4.0)
            .map(|x| (sx(x), x))
            .collect()
    };
    for (px, x) in ticks {
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{base}" x2="{px:.2}" y2="{:.1}" stroke="black"/>"#,
            base + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{px:.2}" y="{:.1}" text-anchor="middle">{x:.3}</text>"#,
            base + 20.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">n = {}, mean = {}, sd = {}</text>"#,
        W / 2.0,
        H - 10.0,
        h.total(),
        fixed(h.mean, 4),
        fixed(h.sd, 4)
    );
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Write `histogram_<series>.csv` and `.svg`.
pub fn emit_histograms(report: &AggregateReport, which: Series, bins: usize, dir: &Path) -> Result<Vec<EmittedFile>> {
    let values = report.series(which);
    if values.is_empty() {
        return Err(Error::MissingSeries(which.slug().to_string()));
    }
    let h = histogram(&values, bins)?;
    let stem = format!("histogram_{}", which.slug());
    Ok(vec![
        write_artifact(
            dir,
            &format!("{stem}.csv"),
            ArtifactKind::HistogramCsv,
            histogram_csv(&h).as_bytes(),
        )?,
        write_artifact(
            dir,
            &format!("{stem}.svg"),
            ArtifactKind::HistogramSvg,
            histogram_svg(&h, series_title(which)).as_bytes(),
        )?,
    ])
}

/// One row of the per-replication CSV. Status is `ok`, `skipped` or
/// `failed`; on failure `*_error` holds the message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RepRow {
    rep_index: u64,
    ols_status: String,
    ols_error: Option<String>,
    ols_in_rmse: Option<f64>,
    ols_oos_rmse: Option<f64>,
    post_lasso_status: String,
    post_lasso_error: Option<String>,
    post_lasso_in_rmse: Option<f64>,
    post_lasso_oos_rmse: Option<f64>,
    post_lasso_support: Option<usize>,
    post_lasso_d_selected: Option<bool>,
    naive_status: String,
    naive_error: Option<String>,
    naive_alpha: Option<f64>,
    naive_se: Option<f64>,
    naive_t: Option<f64>,
    naive_p: Option<f64>,
    naive_reject: Option<bool>,
    naive_support_y: Option<f64>,
    naive_support_d: Option<f64>,
    partialling_out_status: String,
    partialling_out_error: Option<String>,
    partialling_out_alpha: Option<f64>,
    partialling_out_se: Option<f64>,
    partialling_out_t: Option<f64>,
    partialling_out_p: Option<f64>,
    partialling_out_reject: Option<bool>,
    partialling_out_support_y: Option<f64>,
    partialling_out_support_d: Option<f64>,
}

const OK: &str = "ok";
const SKIPPED: &str = "skipped";
const FAILED: &str = "failed";

type ForecastCells = (String, Option<String>, Option<ForecastMetrics>);
type InferenceCells = (String, Option<String>, Option<InferenceEstimate>);

fn status_of<T: Copy>(r: Option<&Result<T>>) -> (String, Option<String>, Option<T>) {
    match r {
        None => (SKIPPED.into(), None, None),
        Some(Ok(v)) => (OK.into(), None, Some(*v)),
        Some(Err(e)) => (FAILED.into(), Some(e.to_string()), None),
    }
}

impl RepRow {
    fn from_record(r: &ReplicationRecord) -> Self {
        let (ols_status, ols_error, ols): ForecastCells = status_of(r.ols.as_ref());
        let (pl_status, pl_error, pl): ForecastCells = status_of(r.post_lasso.as_ref());
        let (nv_status, nv_error, nv): InferenceCells = status_of(r.naive.as_ref());
        let (po_status, po_error, po): InferenceCells = status_of(r.partialling_out.as_ref());
        RepRow {
            rep_index: r.rep_index,
            ols_status,
            ols_error,
            ols_in_rmse: ols.map(|m| m.in_sample_rmse),
            ols_oos_rmse: ols.map(|m| m.out_of_sample_rmse),
            post_lasso_status: pl_status,
            post_lasso_error: pl_error,
            post_lasso_in_rmse: pl.map(|m| m.in_sample_rmse),
            post_lasso_oos_rmse: pl.map(|m| m.out_of_sample_rmse),
            post_lasso_support: pl.and_then(|m| m.support_size),
            post_lasso_d_selected: pl.and_then(|m| m.treatment_selected),
            naive_status: nv_status,
            naive_error: nv_error,
            naive_alpha: nv.map(|e| e.alpha_hat),
            naive_se: nv.map(|e| e.std_error),
            naive_t: nv.map(|e| e.t_stat),
            naive_p: nv.map(|e| e.p_value),
            naive_reject: nv.map(|e| e.rejected_at_5pct),
            naive_support_y: nv.map(|e| e.first_stage_support_sizes.0),
            naive_support_d: nv.map(|e| e.first_stage_support_sizes.1),
            partialling_out_status: po_status,
            partialling_out_error: po_error,
            partialling_out_alpha: po.map(|e| e.alpha_hat),
            partialling_out_se: po.map(|e| e.std_error),
            partialling_out_t: po.map(|e| e.t_stat),
            partialling_out_p: po.map(|e| e.p_value),
            partialling_out_reject: po.map(|e| e.rejected_at_5pct),
            partialling_out_support_y: po.map(|e| e.first_stage_support_sizes.0),
            partialling_out_support_d: po.map(|e| e.first_stage_support_sizes.1),
        }
    }

    fn into_record(self, line: usize) -> Result<ReplicationRecord> {
        let missing = |what: &str| Error::Parse {
            line,
            message: format!("{what} is ok but has missing values"),
        };
        let rebuild =
            |status: &str, error: Option<String>, what: &str| -> Result<Option<std::result::Result<(), Error>>> {
                match status {
                    SKIPPED => Ok(None),
                    OK => Ok(Some(Ok(()))),
                    FAILED => Ok(Some(Err(Error::Recorded(error.unwrap_or_default())))),
                    other => Err(Error::Parse {
                        line,
                        message: format!("{what}: unknown status {other:?}"),
                    }),
                }
            };
        let forecast = |status: Option<std::result::Result<(), Error>>,
                        method: ForecastMethod,
                        ins: Option<f64>,
                        oos: Option<f64>,
                        support: Option<usize>,
                        d_sel: Option<bool>|
         -> Result<Option<Result<ForecastMetrics>>> {
            Ok(match status {
                None => None,
                Some(Err(e)) => Some(Err(e)),
                Some(Ok(())) => Some(Ok(ForecastMetrics {
                    method,
                    in_sample_rmse: ins.ok_or_else(|| missing(method.label()))?,
                    out_of_sample_rmse: oos.ok_or_else(|| missing(method.label()))?,
                    support_size: support,
                    treatment_selected: d_sel,
                })),
            })
        };
        #[allow(clippy::too_many_arguments)]
        fn inference(
            status: Option<std::result::Result<(), Error>>,
            method: InferenceMethod,
            vals: [Option<f64>; 6],
            reject: Option<bool>,
            missing: &dyn Fn(&str) -> Error,
        ) -> Result<Option<Result<InferenceEstimate>>> {
            Ok(match status {
                None => None,
                Some(Err(e)) => Some(Err(e)),
                Some(Ok(())) => {
                    let get = |i: usize| vals[i].ok_or_else(|| missing(method.label()));
                    Some(Ok(InferenceEstimate {
                        method,
                        alpha_hat: get(0)?,
                        std_error: get(1)?,
                        t_stat: get(2)?,
                        p_value: get(3)?,
                        rejected_at_5pct: reject.ok_or_else(|| missing(method.label()))?,
                        first_stage_support_sizes: (get(4)?, get(5)?),
                    }))
                }
            })
        }
        let s = self;
        Ok(ReplicationRecord {
            rep_index: s.rep_index,
            ols: forecast(
                rebuild(&s.ols_status, s.ols_error, "ols")?,
                ForecastMethod::Ols,
                s.ols_in_rmse,
                s.ols_oos_rmse,
                None,
                None,
            )?,
            post_lasso: forecast(
                rebuild(&s.post_lasso_status, s.post_lasso_error, "post_lasso")?,
                ForecastMethod::PostLasso,
                s.post_lasso_in_rmse,
                s.post_lasso_oos_rmse,
                s.post_lasso_support,
                s.post_lasso_d_selected,
            )?,
            naive: inference(
                rebuild(&s.naive_status, s.naive_error, "naive")?,
                InferenceMethod::Naive,
                [
                    s.naive_alpha,
                    s.naive_se,
                    s.naive_t,
                    s.naive_p,
                    s.naive_support_y,
                    s.naive_support_d,
                ],
                s.naive_reject,
                &missing,
            )?,
            partialling_out: inference(
                rebuild(&s.partialling_out_status, s.partialling_out_error, "partialling_out")?,
                InferenceMethod::PartiallingOut,
                [
                    s.partialling_out_alpha,
                    s.partialling_out_se,
                    s.partialling_out_t,
                    s.partialling_out_p,
                    s.partialling_out_support_y,
                    s.partialling_out_support_d,
                ],
                s.partialling_out_reject,
                &missing,
            )?,
        })
    }
}

/// Per-replication CSV. Floats use the shortest round-trip form, so
/// [`read_replications_csv`] recovers every successful value exactly.
pub fn replications_csv(report: &AggregateReport) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for r in &report.records {
        wtr.serialize(RepRow::from_record(r))?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub fn read_replications_csv(text: &str) -> Result<Vec<ReplicationRecord>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<RepRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        out.push(row.into_record(line)?);
    }
    Ok(out)
}

fn pipelines_of(records: &[ReplicationRecord]) -> PipelineSet {
    match records.first() {
        None => PipelineSet::none(),
        Some(r) => PipelineSet {
            ols: r.ols.is_some(),
            post_lasso: r.post_lasso.is_some(),
            naive: r.naive.is_some(),
            partialling_out: r.partialling_out.is_some(),
        },
    }
}

/// Rebuild a report from `scenario.cfg` and `replications.csv` in `dir`.
/// The replayed runtime is zero.
pub fn replay(dir: &Path) -> Result<AggregateReport> {
    let scenario = load_config(&dir.join(SCENARIO_FILE))?;
    let records = read_replications_csv(&fs::read_to_string(dir.join(REPLICATIONS_FILE))?)?;
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let pipelines = pipelines_of(&records);
    if records
        .iter()
        .any(|r| pipelines_of(std::slice::from_ref(r)) != pipelines)
    {
        return Err(Error::Validation("replications disagree on which pipelines ran".into()));
    }
    Ok(AggregateReport::from_records(scenario, pipelines, records, 0.0))
}

/// What [`emit_run`] writes besides the scenario and per-replication files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmitOptions {
    pub format: TableFormat,
    pub bins: usize,
    pub per_replication: bool,
}

impl Default for EmitOptions {
    fn default() -> Self {
        Self {
            format: TableFormat::Text,
            bins: DEFAULT_BINS,
            per_replication: true,
        }
    }
}

/// Write every artifact for one run plus `manifest.json`.
pub fn emit_run(report: &AggregateReport, config_path: &str, dir: &Path, opts: EmitOptions) -> Result<RunManifest> {
    let mut files = emit_tables(report, opts.format, dir)?;
    for which in HISTOGRAM_SERIES {
        if !report.series(which).is_empty() {
            files.extend(emit_histograms(report, which, opts.bins, dir)?);
        }
    }
    files.push(write_artifact(
        dir,
        SCENARIO_FILE,
        ArtifactKind::ScenarioConfig,
        serialize_config(&report.scenario).as_bytes(),
    )?);
    if opts.per_replication {
        files.push(write_artifact(
            dir,
            REPLICATIONS_FILE,
            ArtifactKind::PerRepCsv,
            replications_csv(report)?.as_bytes(),
        )?);
    }
    write_manifest(config_path, dir, files)
}

/// Write `manifest.json` listing `files`.
pub fn write_manifest(config_path: &str, dir: &Path, emitted_files: Vec<EmittedFile>) -> Result<RunManifest> {
    let manifest = RunManifest {
        config_path: config_path.to_string(),
        output_directory: dir.display().to_string(),
        emitted_files,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(MANIFEST_FILE), json + "\n")?;
    Ok(manifest)
}
