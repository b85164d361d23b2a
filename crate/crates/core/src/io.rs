//! CSV ingestion and TSV/JSON report emission.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NlrError, Result};
use crate::estimators::FitResult;
use crate::inference::{NullDistribution, TestResult};
use crate::influence::IfRow;
use crate::model::Dataset;
use crate::simlab::SimReport;
use crate::tuning::TuningTrace;

/// Version tag carried by every JSON report.
pub const SCHEMA: &str = "robust-nlr/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Tsv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = NlrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(OutputFormat::Tsv),
            "json" => Ok(OutputFormat::Json),
            other => Err(NlrError::InvalidArgument(format!("unknown output format {other:?}"))),
        }
    }
}

/// Dataset plus the covariate column names from the header.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvData {
    pub covariates: Vec<String>,
    pub data: Dataset,
}

/// Reads a comma-separated file with a header row. The column named `y` is
/// the response; every other column is a covariate, kept in file order.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    Ok(read_csv_with_names(path)?.data)
}

pub fn read_csv_with_names(path: impl AsRef<Path>) -> Result<CsvData> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text)
}

/// Parses CSV text. Rows in errors count the header as row 1; columns are 1-based.
pub fn parse_csv(text: &str) -> Result<CsvData> {
    if text.trim().is_empty() {
        return Err(NlrError::EmptyFile);
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, 0, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let y_col = header.iter().position(|h| h == "y").ok_or_else(|| {
        parse_err(1, 0, "header has no column named \"y\"".into())
    })?;
    if header.len() < 2 {
        return Err(parse_err(1, 0, "need at least one covariate column besides \"y\"".into()));
    }
    let covariates: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != y_col)
        .map(|(_, h)| h.clone())
        .collect();
    let mut rows = vec![];
    let mut y = vec![];
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, 0, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(parse_err(
                line,
                0,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let mut row = Vec::with_capacity(header.len() - 1);
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, j + 1, format!("not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(line, j + 1, format!("non-finite value {cell:?}")));
            }
            if j == y_col {
                y.push(v);
            } else {
                row.push(v);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(NlrError::EmptyFile);
    }
    Ok(CsvData {
        covariates,
        data: Dataset::new(rows, y)?,
    })
}

fn parse_err(row: usize, column: usize, message: String) -> NlrError {
    NlrError::Parse { row, column, message }
}

/// CSV text with covariate columns `names` (or `x1 … xk`) followed by `y`.
/// Values use the shortest representation that parses back to the same bits.
pub fn write_csv(data: &Dataset, names: Option<&[String]>) -> String {
    let default: Vec<String> = (1..=data.k()).map(|j| format!("x{j}")).collect();
    let names = names.unwrap_or(&default);
    let mut out = String::new();
    for name in names {
        out.push_str(name);
        out.push(',');
    }
    out.push_str("y\n");
    for i in 0..data.n() {
        for v in data.row(i) {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{}", data.y()[i]);
    }
    out
}

/// Writes through a sibling temporary file and a rename, so readers never
/// see a partial report.
pub fn write_atomic(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    let name = path
        .file_name()
        .ok_or_else(|| NlrError::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRow {
    pub param: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
}

/// Serializable view of a fit for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema: String,
    pub method: String,
    pub tuning: Option<f64>,
    pub params: Vec<ParamRow>,
    pub converged: bool,
    /// `(trim fraction, TAPE)` when requested.
    pub tape: Option<(f64, f64)>,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn new(fit: &FitResult, tape: Option<(f64, f64)>) -> Self {
        let se = |j: usize| fit.std_errors.as_ref().and_then(|s| s.get(j).copied());
        let mut params: Vec<ParamRow> = fit
            .beta
            .iter()
            .enumerate()
            .map(|(j, &b)| ParamRow {
                param: format!("beta{}", j + 1),
                estimate: b,
                std_error: se(j),
            })
            .collect();
        let p = fit.beta.len();
        if let Some(s2) = fit.sigma2 {
            params.push(ParamRow {
                param: "sigma2".into(),
                estimate: s2,
                std_error: se(p),
            });
            // delta method: se(σ) = se(σ²)/(2σ)
            params.push(ParamRow {
                param: "sigma".into(),
                estimate: s2.sqrt(),
                std_error: se(p).map(|s| s / (2.0 * s2.sqrt())),
            });
        } else if let Some(s) = fit.scale_estimate_used {
            params.push(ParamRow {
                param: "scale".into(),
                estimate: s,
                std_error: None,
            });
        }
        FitReport {
            schema: SCHEMA.into(),
            method: fit.method.to_string(),
            tuning: fit.tuning,
            params,
            converged: fit.optim.converged,
            tape,
            warnings: fit.warnings.clone(),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialize");
    s.push('\n');
    s
}

pub fn emit_fit_report(report: &FitReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => to_json(report),
        OutputFormat::Tsv => {
            let mut out = String::from("param\testimate\tstd_error\n");
            for r in &report.params {
                let _ = writeln!(out, "{}\t{}\t{}", r.param, r.estimate, opt(r.std_error));
            }
            if let Some((trim, v)) = report.tape {
                let _ = writeln!(out, "tape_{trim}\t{v}\t");
            }
            out
        }
    }
}

pub fn parse_fit_report(json: &str) -> Result<FitReport> {
    parse_json(json)
}

fn parse_json<T: for<'de> Deserialize<'de>>(json: &str) -> Result<T> {
    let v: serde_json::Value =
        serde_json::from_str(json).map_err(|e| NlrError::InvalidArgument(format!("invalid JSON: {e}")))?;
    match v.get("schema").and_then(|s| s.as_str()) {
        Some(SCHEMA) => {}
        other => {
            return Err(NlrError::InvalidArgument(format!(
                "unsupported report schema {other:?}, expected {SCHEMA:?}"
            )))
        }
    }
    serde_json::from_value(v).map_err(|e| NlrError::InvalidArgument(format!("malformed report: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub schema: String,
    pub hypothesis: String,
    #[serde(flatten)]
    pub result: TestResult,
}

impl TestReport {
    pub fn new(hypothesis: &str, result: TestResult) -> Self {
        TestReport {
            schema: SCHEMA.into(),
            hypothesis: hypothesis.into(),
            result,
        }
    }
}

fn distribution_label(d: NullDistribution) -> String {
    match d {
        NullDistribution::ChiSq(r) => format!("chisq({r})"),
        NullDistribution::StdNormal => "normal".into(),
    }
}

pub fn emit_test_report(report: &TestReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => to_json(report),
        OutputFormat::Tsv => {
            let r = &report.result;
            format!(
                "hypothesis\tstatistic\tdistribution\tp_value\tcritical_value\tgamma\treject\talpha\n{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                report.hypothesis,
                r.statistic,
                distribution_label(r.distribution),
                r.p_value,
                r.critical_value,
                r.gamma,
                r.reject,
                r.alpha_used
            )
        }
    }
}

pub fn parse_test_report(json: &str) -> Result<TestReport> {
    parse_json(json)
}

#[derive(Serialize)]
struct Wrapped<'a, T> {
    schema: &'a str,
    kind: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// IF profile: `t`, `IF_beta1 … IF_betap`, `IF_sigma2`.
pub fn emit_influence(rows: &[IfRow], format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Body<'a> {
                rows: &'a [IfRow],
            }
            to_json(&Wrapped {
                schema: SCHEMA,
                kind: "influence",
                body: &Body { rows },
            })
        }
        OutputFormat::Tsv => {
            let p = rows.first().map(|r| r.beta.len()).unwrap_or(0);
            let mut out = String::from("t");
            for j in 1..=p {
                let _ = write!(out, "\tIF_beta{j}");
            }
            out.push_str("\tIF_sigma2\n");
            for r in rows {
                let _ = write!(out, "{}", r.t);
                for b in &r.beta {
                    let _ = write!(out, "\t{b}");
                }
                let _ = writeln!(out, "\t{}", r.sigma2);
            }
            out
        }
    }
}

/// Tuning trace: one line per round and grid point, preceded by the choice.
pub fn emit_tuning(trace: &TuningTrace, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => to_json(&Wrapped {
            schema: SCHEMA,
            kind: "tuning",
            body: trace,
        }),
        OutputFormat::Tsv => {
            let mut out = format!(
                "# alpha_hat={} converged={} rounds={}\nround\tpilot_alpha\talpha\test_mse\tchosen\n",
                trace.alpha_hat,
                trace.converged,
                trace.rounds.len()
            );
            for (k, r) in trace.rounds.iter().enumerate() {
                for (a, m) in trace.grid.iter().zip(&r.est_mse) {
                    let chosen = (a - r.chosen_alpha).abs() < 1e-12;
                    let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", k + 1, r.pilot_alpha, a, opt(*m), chosen);
                }
            }
            out
        }
    }
}

/// Simulation report in the layout of the estimator comparison tables: one
/// line per method and measure, parameters across.
pub fn emit_sim_report(report: &SimReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => to_json(&Wrapped {
            schema: SCHEMA,
            kind: "simulation",
            body: report,
        }),
        OutputFormat::Tsv => {
            let mut out = String::new();
            if !report.methods.is_empty() {
                out.push_str("method\tmeasure\tbeta1\tbeta2\tsigma\tsucceeded\tfailed\tstatus\n");
                for m in &report.methods {
                    let status = if m.unreliable { "UNRELIABLE" } else { "ok" };
                    let cell = |name: &str, f: fn(&crate::simlab::ParamSummary) -> f64| {
                        m.param(name).map(|p| f(p).to_string()).unwrap_or_default()
                    };
                    let measures: [(&str, fn(&crate::simlab::ParamSummary) -> f64); 4] = [
                        ("EBias", |p| p.ebias),
                        ("EBias_se", |p| p.ebias_se),
                        ("EMSE", |p| p.emse),
                        ("EMSE_se", |p| p.emse_se),
                    ];
                    for (label, f) in measures {
                        let _ = writeln!(
                            out,
                            "{}\t{label}\t{}\t{}\t{}\t{}\t{}\t{status}",
                            m.label,
                            cell("beta1", f),
                            cell("beta2", f),
                            cell("sigma", f),
                            m.succeeded,
                            m.failed
                        );
                    }
                    let _ = writeln!(
                        out,
                        "{}\tAPE\t{}\t\t\t{}\t{}\t{status}",
                        m.label,
                        opt(m.ape),
                        m.succeeded,
                        m.failed
                    );
                }
            }
            if !report.rejection.is_empty() {
                out.push_str("alpha\tn\tec\trate\trejections\tsucceeded\tfailed\tmean_p\tstatus\n");
                for c in &report.rejection {
                    let _ = writeln!(
                        out,
                        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                        c.alpha,
                        c.n,
                        c.proportion,
                        c.rate,
                        c.rejections,
                        c.succeeded,
                        c.failed,
                        c.mean_p_value,
                        if c.unreliable { "UNRELIABLE" } else { "ok" }
                    );
                }
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::fit_mdpde;
    use crate::model::MichaelisMenten;
    use crate::optim::OptimizerConfig;
    use proptest::prelude::*;

    #[test]
    fn two_row_file() {
        let c = parse_csv("x,y\n1,2\n2,3\n").unwrap();
        assert_eq!((c.data.n(), c.data.k()), (2, 1));
        assert_eq!(c.covariates, vec!["x"]);
        assert_eq!(c.data.y(), &[2.0, 3.0]);
    }

    #[test]
    fn y_column_may_come_first() {
        let c = parse_csv("y,conc\n0.5,1\n0.7,2\n").unwrap();
        assert_eq!(c.data.column(0), vec![1.0, 2.0]);
        assert_eq!(c.data.y(), &[0.5, 0.7]);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_csv("x,z\n1,2\n"), Err(NlrError::Parse { row: 1, .. })));
        assert!(matches!(
            parse_csv("x,y\n1,2\n3,abc\n"),
            Err(NlrError::Parse { row: 3, column: 2, .. })
        ));
        assert!(matches!(parse_csv("x,y\n1\n"), Err(NlrError::Parse { row: 2, .. })));
        assert_eq!(parse_csv(""), Err(NlrError::EmptyFile));
        assert_eq!(parse_csv("x,y\n"), Err(NlrError::EmptyFile));
    }

    #[test]
    fn fit_report_layout_and_round_trip() {
        let x: Vec<f64> = (1..=20).map(f64::from).collect();
        let y = x.iter().map(|&v| 5.0 * v / (1.0 + v) + 0.2 * (v * 0.9).sin()).collect();
        let d = Dataset::univariate(x, y).unwrap();
        let fit = fit_mdpde(&MichaelisMenten, &d, 0.3, &OptimizerConfig::default()).unwrap();
        let rep = FitReport::new(&fit, Some((0.3, 0.01)));
        let tsv = emit_fit_report(&rep, OutputFormat::Tsv);
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "param\testimate\tstd_error");
        assert!(lines[1].starts_with("beta1\t"));
        assert!(lines[3].starts_with("sigma2\t"));
        let json = emit_fit_report(&rep, OutputFormat::Json);
        assert!(json.contains("\"schema\": \"robust-nlr/1\""));
        assert_eq!(parse_fit_report(&json).unwrap(), rep);
    }

    #[test]
    fn schema_is_checked() {
        assert!(parse_fit_report("{\"schema\":\"other/2\"}").is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.tsv");
        write_atomic(&p, "a\n").unwrap();
        write_atomic(&p, "b\n").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "b\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in prop::collection::vec((prop::collection::vec(-1e12f64..1e12, 2), -1e6f64..1e6), 1..30)) {
            let x: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let d = Dataset::new(x, y).unwrap();
            let back = parse_csv(&write_csv(&d, None)).unwrap();
            prop_assert_eq!(back.data, d);
        }

        #[test]
        fn fit_report_json_round_trip(values in prop::collection::vec(prop::num::f64::NORMAL, 3), se in prop::option::of(0.0f64..1e9)) {
            let report = FitReport {
                schema: SCHEMA.into(),
                method: "MDPDE".into(),
                tuning: Some(values[0].abs().min(1.0)),
                params: values
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| ParamRow { param: format!("beta{}", j + 1), estimate: v, std_error: se })
                    .collect(),
                converged: true,
                tape: se.map(|s| (0.3, s)),
                warnings: vec![],
            };
            let back = parse_fit_report(&emit_fit_report(&report, OutputFormat::Json)).unwrap();
            prop_assert_eq!(back, report);
        }
    }
}
