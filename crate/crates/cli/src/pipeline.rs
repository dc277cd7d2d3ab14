//! The five commands and the files they write.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use spatial_lrd_core::io::fmt_f64;
use spatial_lrd_core::limits::{limit_variance_nd_mc, limit_variance_psd_mc};
use spatial_lrd_core::montecarlo::{
    growth_regression, normality_test, predicted_variance, regime_limit, scan_point, DEFAULT_DROP,
};
use spatial_lrd_core::{
    CltReport, CoefficientModel, DependenceClass, GrowthFit, Histogram, LimitVariance, Regime,
    RegionPrototype, ScanPoint, ScanRow, SumSampler, VERSION,
};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Scan,
    Decompose,
    Limits,
    Mc,
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Scan => "scan",
            Command::Decompose => "decompose",
            Command::Limits => "limits",
            Command::Mc => "mc",
            Command::Report => "report",
        }
    }
}

pub const SCAN_FILE: &str = "scan.csv";
pub const GROWTH_FILE: &str = "growth.json";
pub const DECOMPOSITION_FILE: &str = "decomposition.csv";
pub const LIMITS_FILE: &str = "limits.json";
pub const CLT_FILE: &str = "clt.json";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ERROR_FILE: &str = "error.json";

const DECOMPOSITION_HEADER: &str = "lambda,t_n,N_n,interior_count,exterior_count,boundary_count,\
interior_sum,exterior_sum,boundary_sum,boundary_sum_scaled,sigma_sq_total,tail_bound";

/// A validated configuration with its model and region built.
pub struct Run {
    pub command: Command,
    pub config: RunConfig,
    pub model: CoefficientModel,
    pub region: RegionPrototype,
    pub out_dir: PathBuf,
}

impl Run {
    /// `base_dir` resolves relative table paths; `out_dir` overrides the
    /// configured output directory.
    pub fn new(
        command: Command,
        config: RunConfig,
        base_dir: Option<&Path>,
        out_dir: Option<PathBuf>,
    ) -> Result<Self, CliError> {
        config.validate()?;
        let (model, region) = config.build(base_dir)?;
        let out_dir = out_dir.unwrap_or_else(|| config.output_dir());
        Ok(Self {
            command,
            config,
            model,
            region,
            out_dir,
        })
    }

    fn provenance(&self) -> Value {
        json!({
            "version": VERSION,
            "command": self.command.name(),
            "config": self.config.to_json(),
        })
    }

    fn csv_preamble(&self) -> String {
        format!(
            "# spatial-lrd {VERSION}\n# command: {}\n# config: {}\n",
            self.command.name(),
            serde_json::to_string(&self.config.to_json()).expect("json")
        )
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out_dir)
            .map_err(|e| CliError::Io(format!("{}: {e}", self.out_dir.display())))?;
        let path = self.out_dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    fn write_json(&self, name: &str, body: Value) -> Result<PathBuf, CliError> {
        let mut doc = self.provenance();
        if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
            d.extend(b);
        }
        let mut text = serde_json::to_string_pretty(&doc).expect("json");
        text.push('\n');
        self.write(name, &text)
    }

    fn classification(&self) -> Option<DependenceClass> {
        self.model.classify().ok()
    }

    /// Scan points over the grid; only the last keeps its theta field.
    fn scan_points(&self) -> Result<Vec<ScanPoint>, CliError> {
        let opts = self.config.scan_options();
        let grid = &self.config.experiment.lambda_grid;
        let mut points: Vec<ScanPoint> = Vec::with_capacity(grid.len());
        for &lambda in grid {
            if let Some(prev) = points.last_mut() {
                prev.field.values = Vec::new();
            }
            points.push(scan_point(&self.model, &self.region, lambda, &opts)?);
        }
        Ok(points)
    }

    fn growth(rows: &[ScanRow]) -> Option<GrowthFit> {
        if rows.len() < 4 {
            return None;
        }
        growth_regression(
            &rows
                .iter()
                .map(|r| (r.lambda, r.sigma_sq))
                .collect::<Vec<_>>(),
        )
        .ok()
    }

    fn write_scan(&self, rows: &[ScanRow]) -> Result<Outcome, CliError> {
        let growth = Self::growth(rows);
        let class = self.classification();
        let growth_json = json!({
            "growth": growth,
            "predicted_exponent": class.map(|c| c.predicted_variance_exponent),
            "regime": class.map(|c| c.label),
        });
        let mut csv = self.csv_preamble();
        writeln!(
            csv,
            "# growth: {}",
            serde_json::to_string(&growth_json).expect("json")
        )
        .unwrap();
        csv.push_str(ScanRow::CSV_HEADER);
        csv.push('\n');
        for r in rows {
            csv.push_str(&r.to_csv_line());
            csv.push('\n');
        }
        let files = vec![
            self.write(SCAN_FILE, &csv)?,
            self.write_json(GROWTH_FILE, growth_json)?,
        ];
        Ok(Outcome { files, pass: None })
    }

    fn write_decomposition(&self, points: &[ScanPoint]) -> Result<Outcome, CliError> {
        let mut csv = self.csv_preamble();
        csv.push_str(DECOMPOSITION_HEADER);
        csv.push('\n');
        for p in points {
            let d = &p.decomposition;
            let [ni, ne, nb] = p.class_counts;
            writeln!(
                csv,
                "{},{},{},{ni},{ne},{nb},{},{},{},{},{},{}",
                fmt_f64(p.row.lambda),
                fmt_f64(d.t_n),
                p.row.n_sites,
                fmt_f64(d.interior_sum),
                fmt_f64(d.exterior_sum),
                fmt_f64(d.boundary_sum),
                fmt_f64(d.boundary_sum_scaled),
                fmt_f64(d.sigma_sq_total),
                fmt_f64(d.tail_bound),
            )
            .unwrap();
        }
        Ok(Outcome {
            files: vec![self.write(DECOMPOSITION_FILE, &csv)?],
            pass: None,
        })
    }

    /// Limiting variance and, for integral limits, the Monte Carlo
    /// cross-check.
    fn limits(&self, rows: &[ScanRow]) -> Result<LimitsResult, CliError> {
        let class = self.model.classify()?;
        let limit = regime_limit(&self.model, &self.region, &class, rows)?;
        let e = &self.config.experiment;
        let cross_check = match class.label {
            Regime::Psd => Some(limit_variance_psd_mc(
                &self.model,
                &self.region,
                e.limit_samples,
                e.seed,
            )?),
            Regime::NdNee => Some(limit_variance_nd_mc(
                &self.model,
                &self.region,
                e.limit_samples,
                e.seed,
            )?),
            _ => None,
        };
        let agreement = match (&limit, &cross_check) {
            (Some(a), Some(b)) => Some((a.value - b.value).abs() / a.value.abs()),
            _ => None,
        };
        Ok(LimitsResult {
            class,
            limit,
            cross_check,
            relative_difference: agreement,
        })
    }

    fn write_limits(&self, l: &LimitsResult) -> Result<Outcome, CliError> {
        let body = json!({
            "regime": l.class.label,
            "predicted_exponent": l.class.predicted_variance_exponent,
            "limit": l.limit,
            "cross_check": l.cross_check,
            "relative_difference": l.relative_difference,
        });
        Ok(Outcome {
            files: vec![self.write_json(LIMITS_FILE, body)?],
            pass: None,
        })
    }

    fn mc(&self, last: &ScanPoint) -> Result<(CltReport, Histogram, f64, bool), CliError> {
        let e = &self.config.experiment;
        let sampler = SumSampler::new(&last.field, DEFAULT_DROP)?;
        let samples = sampler.sample(e.innovation, e.replicates, e.seed);
        let scale = sampler.sigma_sq().sqrt();
        let report = normality_test(&samples, scale, "computed sigma_n")?;
        let z: Vec<f64> = samples.iter().map(|s| s / scale).collect();
        let hist = Histogram::new(&z, e.histogram_bins)?;
        let omitted = sampler.omitted_variance();
        Ok((report, hist, omitted, omitted < 0.01 * sampler.sigma_sq()))
    }

    fn write_mc(&self, last: &ScanPoint) -> Result<(Outcome, CltReport), CliError> {
        let (report, hist, omitted, valid) = self.mc(last)?;
        let body = json!({
            "lambda": last.row.lambda,
            "innovation": self.config.experiment.innovation,
            "clt": report,
            "omitted_variance": omitted,
            "valid": valid,
        });
        let files = vec![
            self.write_json(CLT_FILE, body)?,
            self.write(
                HISTOGRAM_FILE,
                &format!("{}{}", self.csv_preamble(), hist.to_csv()),
            )?,
        ];
        let pass = report.pass;
        Ok((
            Outcome {
                files,
                pass: Some(pass),
            },
            report,
        ))
    }

    pub fn execute(&self) -> Result<Outcome, CliError> {
        match self.command {
            Command::Scan => {
                let points = self.scan_points()?;
                self.write_scan(&rows(&points))
            }
            Command::Decompose => {
                let points = self.scan_points()?;
                self.write_decomposition(&points)
            }
            Command::Limits => {
                let class = self.model.classify()?;
                // only extrapolated constants need the scan
                let needs_rows = matches!(class.label, Regime::NdEe | Regime::NdCritical)
                    && !matches!(
                        self.model.kind(),
                        spatial_lrd_core::ModelKind::SeparableNd { .. }
                    );
                let rows = if needs_rows {
                    rows(&self.scan_points()?)
                } else {
                    Vec::new()
                };
                let l = self.limits(&rows)?;
                self.write_limits(&l)
            }
            Command::Mc => {
                let top = *self
                    .config
                    .experiment
                    .lambda_grid
                    .last()
                    .expect("validated");
                let point =
                    scan_point(&self.model, &self.region, top, &self.config.scan_options())?;
                Ok(self.write_mc(&point)?.0)
            }
            Command::Report => self.report(),
        }
    }

    fn report(&self) -> Result<Outcome, CliError> {
        let points = self.scan_points()?;
        let rows = rows(&points);
        let mut files = self.write_scan(&rows)?.files;
        files.extend(self.write_decomposition(&points)?.files);
        let l = self.limits(&rows)?;
        files.extend(self.write_limits(&l)?.files);
        let last = points.last().expect("validated grid");
        let (mc, clt) = self.write_mc(last)?;
        files.extend(mc.files);

        let growth = Self::growth(&rows);
        let predicted = l.class.predicted_variance_exponent;
        let ratios: Vec<Value> = match &l.limit {
            Some(lim) => rows
                .iter()
                .map(|r| {
                    let p =
                        predicted_variance(&self.model, &l.class, lim.value, r.lambda, r.n_sites)?;
                    Ok(json!({ "lambda": r.lambda, "ratio": r.sigma_sq / p }))
                })
                .collect::<Result<_, CliError>>()?,
            None => Vec::new(),
        };
        let lindeberg_decreasing = rows
            .windows(2)
            .all(|w| w[1].lindeberg_ratio < w[0].lindeberg_ratio);
        let edge_constant = match (l.class.label, &l.limit) {
            (Regime::NdEe, Some(lim)) => {
                let r = rows.last().expect("validated grid");
                let per_lambda = r.sigma_sq / r.lambda;
                Some(json!({
                    "sigma_sq_over_lambda": per_lambda,
                    "limit": lim.value,
                    "relative_difference": (per_lambda - lim.value) / lim.value,
                }))
            }
            _ => None,
        };
        let summary = json!({
            "regime": l.class.label,
            "predicted_exponent": predicted,
            "measured_slope": growth.map(|g| g.slope),
            "slope_confidence_halfwidth": growth.map(|g| g.confidence_halfwidth),
            "slope_consistent": growth.map(|g| (g.slope - predicted).abs() <= g.confidence_halfwidth),
            "narrow_span": growth.map(|g| g.narrow_span),
            "limit": l.limit.as_ref().map(|v| v.value),
            "limit_ratios": ratios,
            "edge_constant": edge_constant,
            "lindeberg_decreasing": lindeberg_decreasing,
            "clt_pass": clt.pass,
        });
        files.push(self.write_json(SUMMARY_FILE, summary)?);
        Ok(Outcome {
            files,
            pass: Some(clt.pass),
        })
    }

    /// Writes `error.json` into the output directory, best effort.
    pub fn write_error(out_dir: &Path, err: &CliError) -> Option<PathBuf> {
        std::fs::create_dir_all(out_dir).ok()?;
        let path = out_dir.join(ERROR_FILE);
        let mut text = serde_json::to_string_pretty(&err.report()).ok()?;
        text.push('\n');
        std::fs::write(&path, text).ok()?;
        Some(path)
    }
}

fn rows(points: &[ScanPoint]) -> Vec<ScanRow> {
    points.iter().map(|p| p.row.clone()).collect()
}

struct LimitsResult {
    class: DependenceClass,
    limit: Option<LimitVariance>,
    cross_check: Option<LimitVariance>,
    relative_difference: Option<f64>,
}

/// Files written by a command and, for Monte Carlo runs, the KS verdict.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub pass: Option<bool>,
}
