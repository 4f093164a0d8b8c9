//! The audit pipeline: runs every diagnostic in a fixed order on one
//! response/regressor pair, records each step, and renders a verdict.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arimax::{arma_joint_test, fit_armax, ArimaxFit, ArimaxSpec};
use crate::diagnostics::{acf, durbin_alternative_with, pacf, residual_lag_scatter, CorrelogramPoint, Presample};
use crate::error::{Error, Result};
use crate::plot::{PlotKind, PlotSpec};
use crate::regress::{ols_fit, pearson_corr, t_test, RegressionFit};
use crate::series::{load_csv, Dataset, DateSpec, Provenance, Series};
use crate::unitroot::{adf_test, AdfResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Step names in execution order.
pub const PIPELINE: [&str; 11] = [
    "load_interpolate",
    "levels_ols",
    "residual_lag_scatter",
    "durbin_levels",
    "adf_levels",
    "adf_differences",
    "differenced_ols",
    "differenced_correlogram",
    "armax_fit",
    "arma_joint_test",
    "innovation_correlogram",
];

pub const FIG_SCATTER: &str = "fig1_residual_lag_scatter.svg";
pub const FIG_DIFF_ACF: &str = "differenced_residuals_acf.svg";
pub const FIG_DIFF_PACF: &str = "differenced_residuals_pacf.svg";
pub const FIG_INNOV_ACF: &str = "innovations_acf.svg";
pub const FIG_INNOV_PACF: &str = "innovations_pacf.svg";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Levels Durbin test must reject below this.
    pub durbin_alpha: f64,
    /// Both levels ADF tests must fail to reject at this level.
    pub adf_alpha: f64,
    /// Slope tests count as significant below this.
    pub beta_alpha: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { durbin_alpha: 0.01, adf_alpha: 0.10, beta_alpha: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Markdown,
    Svg,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "md" | "markdown" => Ok(Format::Markdown),
            "svg" => Ok(Format::Svg),
            other => Err(Error::InvalidParameter(format!("unknown format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub input: PathBuf,
    pub date: DateSpec,
    pub y: String,
    pub x: String,
    pub interpolate: bool,
    pub durbin_lags: usize,
    pub adf_lags: usize,
    pub acf_lags: usize,
    pub presample: Presample,
    pub arimax: ArimaxSpec,
    pub thresholds: Thresholds,
}

impl AuditConfig {
    /// Defaults: two-column dates in `A` (year) and `B` (month), 12 lags
    /// for the Durbin and ADF tests, 20 correlogram lags, ARIMA(1,1,1)
    /// errors with robust standard errors, interpolation on.
    pub fn new(input: impl Into<PathBuf>, y: impl Into<String>, x: impl Into<String>) -> Self {
        AuditConfig {
            input: input.into(),
            date: DateSpec::two_column("A", "B"),
            y: y.into(),
            x: x.into(),
            interpolate: true,
            durbin_lags: 12,
            adf_lags: 12,
            acf_lags: 20,
            presample: Presample::ZeroFill,
            arimax: ArimaxSpec::default(),
            thresholds: Thresholds::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.durbin_lags == 0 || self.adf_lags == 0 || self.acf_lags == 0 {
            return Err(Error::InvalidParameter("lag settings must be >= 1".into()));
        }
        if self.y == self.x {
            return Err(Error::InvalidParameter("y and x must be distinct columns".into()));
        }
        let t = self.thresholds;
        if ![t.durbin_alpha, t.adf_alpha, t.beta_alpha].iter().all(|a| *a > 0.0 && *a < 1.0) {
            return Err(Error::InvalidParameter("thresholds must lie in (0, 1)".into()));
        }
        self.arimax.validate()
    }
}

/// A reported statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Stat {
    Int(i64),
    Num(f64),
    Bool(bool),
    Text(String),
}

impl Stat {
    /// Non-finite numbers are stored as text so the JSON stays valid.
    pub fn num(v: f64) -> Stat {
        if v.is_finite() {
            Stat::Num(v)
        } else {
            Stat::Text(format!("{v}"))
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Stat::Num(v) => Some(*v),
            Stat::Int(v) => Some(*v as f64),
            Stat::Text(t) => t.parse().ok(),
            Stat::Bool(_) => None,
        }
    }
}

impl From<usize> for Stat {
    fn from(v: usize) -> Self {
        Stat::Int(v as i64)
    }
}

impl From<bool> for Stat {
    fn from(v: bool) -> Self {
        Stat::Bool(v)
    }
}

impl From<&str> for Stat {
    fn from(v: &str) -> Self {
        Stat::Text(v.to_string())
    }
}

impl From<String> for Stat {
    fn from(v: String) -> Self {
        Stat::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub name: String,
    /// SHA-256 over the series the step consumed.
    pub inputs_digest: String,
    pub statistics: BTreeMap<String, Stat>,
    pub interpretation: String,
    pub plots: Vec<String>,
}

impl Step {
    pub fn stat(&self, key: &str) -> Option<f64> {
        self.statistics.get(key).and_then(Stat::as_f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plot {
    pub file: String,
    pub spec: PlotSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    LevelsRelationshipSupported,
    SpuriousLevelsRelationship,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::LevelsRelationshipSupported => "levels-relationship-supported",
            Verdict::SpuriousLevelsRelationship => "spurious-levels-relationship",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub step: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub config: AuditConfig,
    pub provenance: Option<Provenance>,
    pub steps: Vec<Step>,
    pub plots: Vec<Plot>,
    pub verdict: Verdict,
    /// Set when a step failed and later steps were not run.
    pub truncated: Option<Truncation>,
    pub notes: Vec<String>,
}

impl AuditReport {
    pub fn step(&self, name: &str) -> Option<&Step> {
        self.steps.iter().find(|s| s.name == name)
    }

    /// True when the ARMAX optimizer stopped short of its tolerances.
    pub fn nonconverged(&self) -> bool {
        self.step("armax_fit")
            .and_then(|s| s.statistics.get("converged"))
            .is_some_and(|c| *c == Stat::Bool(false))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// A failed audit: the step that failed, its cause and the report up to
/// that point.
#[derive(Debug, thiserror::Error)]
#[error("audit step {step} failed: {source}")]
pub struct AuditError {
    pub step: String,
    #[source]
    pub source: Error,
    pub partial: Box<AuditReport>,
}

/// Applies the verdict rule to a report's statistics.
///
/// Spurious when the levels Durbin test rejects at `durbin_alpha`, neither
/// levels series rejects a unit root at `adf_alpha`, and both the
/// differenced OLS slope and the ARMAX slope are insignificant at
/// `beta_alpha`. Supported when the levels Durbin test does not reject,
/// both levels series reject a unit root, and the levels slope is
/// significant. Anything else, including missing statistics, is
/// inconclusive.
pub fn verdict(steps: &[Step], t: &Thresholds) -> Verdict {
    let get = |step: &str, key: &str| steps.iter().find(|s| s.name == step).and_then(|s| s.stat(key));
    let durbin = get("durbin_levels", "p_value");
    let adf_y = get("adf_levels", "p_value_y");
    let adf_x = get("adf_levels", "p_value_x");
    let levels = get("levels_ols", "slope_p");
    let diff = get("differenced_ols", "slope_p");
    let armax = get("armax_fit", "beta_p");
    if let (Some(d), Some(ay), Some(ax), Some(ds), Some(am)) = (durbin, adf_y, adf_x, diff, armax) {
        if d < t.durbin_alpha && ay > t.adf_alpha && ax > t.adf_alpha && ds > t.beta_alpha && am > t.beta_alpha {
            return Verdict::SpuriousLevelsRelationship;
        }
    }
    if let (Some(d), Some(ay), Some(ax), Some(l)) = (durbin, adf_y, adf_x, levels) {
        if d >= t.durbin_alpha && ay < t.adf_alpha && ax < t.adf_alpha && l < t.beta_alpha {
            return Verdict::LevelsRelationshipSupported;
        }
    }
    Verdict::Inconclusive
}

pub fn digest(series: &[&Series]) -> String {
    let mut h = Sha256::new();
    for s in series {
        h.update(s.name().as_bytes());
        h.update([0]);
        h.update(s.start().encoded().to_le_bytes());
        for v in s.values() {
            match v {
                Some(v) => {
                    h.update([1]);
                    h.update(v.to_bits().to_le_bytes());
                }
                None => h.update([0]),
            }
        }
    }
    h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "p < 0.001".into()
    } else {
        format!("p = {p:.3}")
    }
}

fn significance(p: f64, alpha: f64) -> &'static str {
    if p < alpha {
        "significant"
    } else {
        "not significant"
    }
}

struct Runner {
    report: AuditReport,
}

type Stats = BTreeMap<String, Stat>;

fn stats<const N: usize>(items: [(&str, Stat); N]) -> Stats {
    items.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

impl Runner {
    fn push(&mut self, name: &str, inputs: &[&Series], statistics: Stats, interpretation: String, plots: Vec<Plot>) {
        debug_assert_eq!(PIPELINE[self.report.steps.len()], name);
        let files = plots.iter().map(|p| p.file.clone()).collect();
        self.report.plots.extend(plots);
        self.report.steps.push(Step {
            name: name.to_string(),
            inputs_digest: digest(inputs),
            statistics,
            interpretation,
            plots: files,
        });
    }

    fn fail(mut self, step: &str, source: Error) -> AuditError {
        self.report.truncated = Some(Truncation { step: step.to_string(), error: source.to_string() });
        self.report.verdict = verdict(&self.report.steps, &self.report.config.thresholds);
        AuditError { step: step.to_string(), source, partial: Box::new(self.report) }
    }
}

fn slope_stats(prefix: &str, fit: &RegressionFit, out: &mut Stats) -> Result<f64> {
    let tt = t_test(fit, 1)?;
    let mut put = |k: &str, v: Stat| {
        out.insert(format!("{prefix}{k}"), v);
    };
    put("intercept", Stat::num(fit.coef[0]));
    put("slope", Stat::num(fit.coef[1]));
    put("slope_se", Stat::num(fit.se(1)));
    put("slope_t", Stat::num(tt.t));
    put("slope_p", Stat::num(tt.p));
    put("r_squared", Stat::num(fit.r_squared));
    put("nobs", fit.nobs.into());
    Ok(tt.p)
}

fn adf_stats(suffix: &str, r: &AdfResult, out: &mut Stats) {
    out.insert(format!("tau_{suffix}"), Stat::num(r.tau));
    out.insert(format!("p_value_{suffix}"), Stat::num(r.p_value));
    out.insert(format!("p_raw_{suffix}"), Stat::num(r.p_raw));
    out.insert(format!("nobs_{suffix}"), r.nobs_used.into());
}

fn correlogram_plot(file: &str, title: &str, y_label: &str, points: Vec<CorrelogramPoint>) -> Plot {
    Plot {
        file: file.into(),
        spec: PlotSpec { title: title.into(), x_label: "Lag".into(), y_label: y_label.into(), kind: PlotKind::Correlogram { points } },
    }
}

fn correlogram_step(s: &Series, lags: usize, what: &str, files: (&str, &str)) -> Result<(Stats, String, Vec<Plot>)> {
    let a = acf(s, lags)?;
    let p = pacf(s, lags)?;
    let outside_a = a[1..].iter().filter(|c| c.value.abs() > c.conf_band).count();
    let outside_p = p.iter().filter(|c| c.value.abs() > c.conf_band).count();
    let st = stats([
        ("lags", lags.into()),
        ("acf_1", Stat::num(a[1].value)),
        ("pacf_1", Stat::num(p[0].value)),
        ("conf_band", Stat::num(a[0].conf_band)),
        ("acf_outside_band", outside_a.into()),
        ("pacf_outside_band", outside_p.into()),
    ]);
    let text = format!(
        "{what}: {outside_a} of {lags} autocorrelations and {outside_p} of {lags} partial autocorrelations lie outside the 95% band (lag-1 ACF {:.3}).",
        a[1].value
    );
    let plots = vec![
        correlogram_plot(files.0, &format!("Autocorrelations of {what}"), "Autocorrelation", a[1..].to_vec()),
        correlogram_plot(files.1, &format!("Partial autocorrelations of {what}"), "Partial autocorrelation", p),
    ];
    Ok((st, text, plots))
}

/// Loads `cfg.input` and runs the pipeline.
pub fn run_audit(cfg: &AuditConfig) -> std::result::Result<AuditReport, AuditError> {
    let empty = Runner { report: empty_report(cfg) };
    if let Err(e) = cfg.validate() {
        return Err(empty.fail(PIPELINE[0], e));
    }
    match load_csv(&cfg.input, &cfg.date, &[&cfg.y, &cfg.x]) {
        Ok(ds) => run_audit_dataset(cfg, &ds),
        Err(e) => Err(empty.fail(PIPELINE[0], e)),
    }
}

fn empty_report(cfg: &AuditConfig) -> AuditReport {
    AuditReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        provenance: None,
        steps: Vec::new(),
        plots: Vec::new(),
        verdict: Verdict::Inconclusive,
        truncated: None,
        notes: vec![
            format!(
                "The regression with ARMA errors is estimated in differences: d = {} is applied to both {} and {} before estimation.",
                cfg.arimax.d, cfg.y, cfg.x
            ),
            "ADF p-values are MacKinnon (1994) approximations reported in [0.001, 0.999]; p_raw holds the unclamped surface value.".into(),
            format!(
                "Verdict thresholds: Durbin {} / ADF {} / slope {}.",
                cfg.thresholds.durbin_alpha, cfg.thresholds.adf_alpha, cfg.thresholds.beta_alpha
            ),
        ],
    }
}

/// Runs the pipeline on an already loaded dataset.
#[allow(clippy::redundant_closure_call)]
pub fn run_audit_dataset(cfg: &AuditConfig, ds: &Dataset) -> std::result::Result<AuditReport, AuditError> {
    let mut run = Runner { report: empty_report(cfg) };
    run.report.provenance = Some(ds.provenance().clone());
    if let Err(e) = cfg.validate() {
        return Err(run.fail(PIPELINE[0], e));
    }
    macro_rules! step {
        ($name:expr, $body:expr) => {
            match (|| -> Result<_> { $body })() {
                Ok(v) => v,
                Err(e) => return Err(run.fail($name, e)),
            }
        };
    }
    let th = cfg.thresholds;
    let lags = cfg.durbin_lags;

    // 1. load and interpolate
    let (y, x_raw, x) = step!(PIPELINE[0], {
        let y = ds.column(&cfg.y)?.clone();
        let x_raw = ds.column(&cfg.x)?.clone();
        let x = if cfg.interpolate {
            x_raw.interpolate_linear()?.with_name(format!("i{}", cfg.x))
        } else {
            x_raw.clone()
        };
        Ok((y, x_raw, x))
    });
    let filled = x.count_observed() - x_raw.count_observed();
    run.push(
        PIPELINE[0],
        &[&y, &x_raw],
        stats([
            ("months", y.len().into()),
            ("start", y.start().to_string().into()),
            ("end", y.end().to_string().into()),
            ("raw_rows", ds.provenance().raw_rows.into()),
            ("y_observed", y.count_observed().into()),
            ("x_observed", x_raw.count_observed().into()),
            ("x_interpolated", filled.into()),
        ]),
        format!(
            "{} months from {} to {}; {filled} missing values of {} filled by linear interpolation{}.",
            y.len(),
            y.start(),
            y.end(),
            cfg.x,
            if cfg.interpolate { "" } else { " (interpolation disabled)" }
        ),
        vec![],
    );

    // 2. levels correlation and OLS
    let levels = step!(PIPELINE[1], {
        let corr = pearson_corr(&y, &x_raw)?;
        let corr_i = pearson_corr(&y, &x)?;
        let fit = ols_fit(&y, &[&x], true)?;
        let mut st = stats([
            ("r", Stat::num(corr.r)),
            ("r_p", Stat::num(corr.p_value)),
            ("r_nobs", corr.nobs.into()),
            ("r_interpolated", Stat::num(corr_i.r)),
            ("r_interpolated_p", Stat::num(corr_i.p_value)),
        ]);
        let p = slope_stats("", &fit, &mut st)?;
        Ok((fit, st, corr.r, corr.p_value, p))
    });
    let (levels_fit, st, r, rp, slope_p) = levels;
    run.push(
        PIPELINE[1],
        &[&y, &x_raw, &x],
        st,
        format!(
            "Levels: r = {r:.2} ({}); the OLS slope of {} on {} is {} at the {} level ({}).",
            fmt_p(rp),
            cfg.y,
            x.name(),
            significance(slope_p, th.beta_alpha),
            th.beta_alpha,
            fmt_p(slope_p)
        ),
        vec![],
    );

    // 3. residual lag scatter
    let resid = &levels_fit.residuals;
    let scatter = step!(PIPELINE[2], residual_lag_scatter(resid));
    let lag1 = match &scatter.kind {
        PlotKind::Scatter { line: Some(l), .. } => l.slope,
        _ => f64::NAN,
    };
    run.push(
        PIPELINE[2],
        &[resid],
        stats([("lag1_autocorrelation", Stat::num(lag1))]),
        format!("Levels residuals plotted against their first lag; lag-1 autocorrelation {lag1:.3}."),
        vec![Plot { file: FIG_SCATTER.into(), spec: scatter }],
    );

    // 4. Durbin's alternative test on the levels regression
    let (dz, dd) = step!(PIPELINE[3], {
        Ok((
            durbin_alternative_with(&y, &[&x], lags, cfg.presample)?,
            durbin_alternative_with(
                &y,
                &[&x],
                lags,
                if cfg.presample == Presample::ZeroFill { Presample::DropRows } else { Presample::ZeroFill },
            )?,
        ))
    });
    run.push(
        PIPELINE[3],
        &[&y, &x],
        stats([
            ("chi2", Stat::num(dz.chi2)),
            ("df", dz.df.into()),
            ("p_value", Stat::num(dz.p_value)),
            ("nobs", dz.nobs.into()),
            ("presample", format!("{:?}", dz.presample).into()),
            ("chi2_alternate_presample", Stat::num(dd.chi2)),
            ("p_value_alternate_presample", Stat::num(dd.p_value)),
        ]),
        format!(
            "Durbin's alternative test, {lags} lags: chi2({}) = {:.2}, {}; serial correlation in the levels residuals is {}.",
            dz.df,
            dz.chi2,
            fmt_p(dz.p_value),
            if dz.p_value < th.durbin_alpha { "detected" } else { "not detected" }
        ),
        vec![],
    );

    // 5. ADF on levels
    let (ay, ax) = step!(PIPELINE[4], Ok((adf_test(&y, cfg.adf_lags)?, adf_test(&x, cfg.adf_lags)?)));
    let mut st = stats([("lags", cfg.adf_lags.into())]);
    adf_stats("y", &ay, &mut st);
    adf_stats("x", &ax, &mut st);
    let unit = |p: f64| if p > th.adf_alpha { "unit root not rejected" } else { "unit root rejected" };
    run.push(
        PIPELINE[4],
        &[&y, &x],
        st,
        format!(
            "ADF, {} lags: {} tau = {:.2} ({}, {}); {} tau = {:.2} ({}, {}).",
            cfg.adf_lags,
            cfg.y,
            ay.tau,
            fmt_p(ay.p_value),
            unit(ay.p_value),
            x.name(),
            ax.tau,
            fmt_p(ax.p_value),
            unit(ax.p_value)
        ),
        vec![],
    );

    // 6. first differences and ADF on them
    let (dy, dx, ady, adx) = step!(PIPELINE[5], {
        let dy = y.diff(1)?;
        let dx = x.diff(1)?;
        let ady = adf_test(&dy, cfg.adf_lags)?;
        let adx = adf_test(&dx, cfg.adf_lags)?;
        Ok((dy, dx, ady, adx))
    });
    let mut st = stats([("lags", cfg.adf_lags.into())]);
    adf_stats("y", &ady, &mut st);
    adf_stats("x", &adx, &mut st);
    run.push(
        PIPELINE[5],
        &[&dy, &dx],
        st,
        format!(
            "ADF on first differences: {} tau = {:.2} ({}); {} tau = {:.2} ({}).",
            dy.name(),
            ady.tau,
            fmt_p(ady.p_value),
            dx.name(),
            adx.tau,
            fmt_p(adx.p_value)
        ),
        vec![],
    );

    // 7. differenced OLS, correlation and Durbin test
    let (dfit, st, dslope_p, dr, drp, dchi2, ddf, dp) = step!(PIPELINE[6], {
        let fit = ols_fit(&dy, &[&dx], true)?;
        let corr = pearson_corr(&dy, &dx)?;
        let d = durbin_alternative_with(&dy, &[&dx], lags, cfg.presample)?;
        let mut st = stats([
            ("r", Stat::num(corr.r)),
            ("r_p", Stat::num(corr.p_value)),
            ("durbin_chi2", Stat::num(d.chi2)),
            ("durbin_df", d.df.into()),
            ("durbin_p_value", Stat::num(d.p_value)),
        ]);
        let p = slope_stats("", &fit, &mut st)?;
        Ok((fit, st, p, corr.r, corr.p_value, d.chi2, d.df, d.p_value))
    });
    run.push(
        PIPELINE[6],
        &[&dy, &dx],
        st,
        format!(
            "Differences: r = {dr:.2} ({}); the slope is {} at the {} level ({}). Durbin's alternative test: chi2({ddf}) = {dchi2:.2}, {}.",
            fmt_p(drp),
            significance(dslope_p, th.beta_alpha),
            th.beta_alpha,
            fmt_p(dslope_p),
            fmt_p(dp)
        ),
        vec![],
    );

    // 8. correlogram of differenced residuals
    let dres = &dfit.residuals;
    let (st, text, plots) = step!(
        PIPELINE[7],
        correlogram_step(dres, cfg.acf_lags, "differenced-regression residuals", (FIG_DIFF_ACF, FIG_DIFF_PACF))
    );
    run.push(PIPELINE[7], &[dres], st, text, plots);

    // 9. regression with ARMA errors
    let fit: ArimaxFit = step!(PIPELINE[8], fit_armax(&y, &[&x], &cfg.arimax));
    let layout = fit.layout();
    let bt = fit.slope_test();
    let mut st = stats([
        ("constant", Stat::num(fit.beta[0])),
        ("constant_se", Stat::num(fit.se(0))),
        ("beta", Stat::num(bt.coef)),
        ("beta_se", Stat::num(bt.se)),
        ("beta_z", Stat::num(bt.z)),
        ("beta_p", Stat::num(bt.p)),
        ("sigma", Stat::num(fit.sigma)),
        ("loglik", Stat::num(fit.loglik)),
        ("nobs", fit.nobs.into()),
        ("converged", fit.converged.into()),
        ("iterations", fit.iterations.into()),
        ("boundary", fit.boundary.into()),
        ("vce", format!("{:?}", fit.spec.vce).to_lowercase().into()),
        ("order", format!("({},{},{})", fit.spec.p, fit.spec.d, fit.spec.q).into()),
    ]);
    if let Some(i) = layout.rho() {
        st.insert("rho".into(), Stat::num(fit.rho));
        st.insert("rho_se".into(), Stat::num(fit.se(i)));
    }
    if let Some(i) = layout.theta() {
        st.insert("theta".into(), Stat::num(fit.theta));
        st.insert("theta_se".into(), Stat::num(fit.se(i)));
    }
    let mut text = format!(
        "ARIMA({},{},{}) errors, {:?} standard errors: beta = {:.4} (z = {:.2}, {}), {} at the {} level.",
        fit.spec.p,
        fit.spec.d,
        fit.spec.q,
        fit.spec.vce,
        bt.coef,
        bt.z,
        fmt_p(bt.p),
        significance(bt.p, th.beta_alpha),
        th.beta_alpha
    );
    if !fit.converged {
        text.push_str(" WARNING: the optimizer did not converge; estimates are the last iterate.");
    }
    if fit.boundary {
        text.push_str(" WARNING: an ARMA parameter is at the stationarity/invertibility boundary.");
    }
    run.push(PIPELINE[8], &[&y, &x], st, text, vec![]);

    // 10. joint test of the ARMA terms
    let w = step!(PIPELINE[9], arma_joint_test(&fit));
    run.push(
        PIPELINE[9],
        &[&fit.innovations],
        stats([("chi2", Stat::num(w.statistic)), ("df", w.df.into()), ("p_value", Stat::num(w.p_value))]),
        format!(
            "Joint Wald test of the ARMA terms: chi2({}) = {:.2}, {}; ARMA terms jointly {}.",
            w.df,
            w.statistic,
            fmt_p(w.p_value),
            if w.p_value < 0.05 { "significant" } else { "not significant" }
        ),
        vec![],
    );

    // 11. correlogram of the innovations
    let (st, text, plots) = step!(
        PIPELINE[10],
        correlogram_step(&fit.innovations, cfg.acf_lags, "ARMAX innovations", (FIG_INNOV_ACF, FIG_INNOV_PACF))
    );
    run.push(PIPELINE[10], &[&fit.innovations], st, text, plots);

    run.report.verdict = verdict(&run.report.steps, &th);
    Ok(run.report)
}

impl AuditReport {
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(s, "# Time-series regression audit: {} on {}\n", c.y, c.x);
        let _ = writeln!(s, "- Input: `{}`", c.input.display());
        let _ = writeln!(s, "- Verdict: **{}**", self.verdict);
        let t = c.thresholds;
        let _ = writeln!(
            s,
            "- Thresholds: Durbin alpha {}, ADF alpha {}, slope alpha {}",
            t.durbin_alpha, t.adf_alpha, t.beta_alpha
        );
        let _ = writeln!(
            s,
            "- Lags: Durbin {}, ADF {}, correlograms {}; interpolation {}",
            c.durbin_lags,
            c.adf_lags,
            c.acf_lags,
            if c.interpolate { "on" } else { "off" }
        );
        if let Some(tr) = &self.truncated {
            let _ = writeln!(s, "\n> **TRUNCATED** at step `{}`: {}", tr.step, tr.error);
        }
        for (i, step) in self.steps.iter().enumerate() {
            let _ = writeln!(s, "\n## {}. {}\n\n{}\n", i + 1, step.name, step.interpretation);
            let _ = writeln!(s, "| statistic | value |\n|---|---|");
            for (k, v) in &step.statistics {
                let v = match v {
                    Stat::Num(x) => format!("{x:.6}"),
                    Stat::Int(x) => x.to_string(),
                    Stat::Bool(b) => b.to_string(),
                    Stat::Text(t) => t.clone(),
                };
                let _ = writeln!(s, "| {k} | {v} |");
            }
            for p in &step.plots {
                let _ = writeln!(s, "\n![{p}]({p})");
            }
        }
        if !self.notes.is_empty() {
            let _ = writeln!(s, "\n## Notes\n");
            for n in &self.notes {
                let _ = writeln!(s, "- {n}");
            }
        }
        s
    }
}

/// Writes the requested formats into `dir` and returns the paths written.
pub fn render(report: &AuditReport, formats: &[Format], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if formats.is_empty() {
        return Ok(written);
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut put = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    let mut formats = formats.to_vec();
    formats.sort();
    formats.dedup();
    for f in formats {
        match f {
            Format::Json => put("report.json", report.to_json()?)?,
            Format::Markdown => put("report.md", report.to_markdown())?,
            Format::Svg => {
                for p in &report.plots {
                    put(&p.file, p.spec.to_svg())?;
                }
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(name: &str, kv: &[(&str, f64)]) -> Step {
        Step {
            name: name.into(),
            inputs_digest: String::new(),
            statistics: kv.iter().map(|(k, v)| (k.to_string(), Stat::num(*v))).collect(),
            interpretation: String::new(),
            plots: vec![],
        }
    }

    fn steps(durbin: f64, ay: f64, ax: f64, lv: f64, ds: f64, am: f64) -> Vec<Step> {
        vec![
            step("levels_ols", &[("slope_p", lv)]),
            step("durbin_levels", &[("p_value", durbin)]),
            step("adf_levels", &[("p_value_y", ay), ("p_value_x", ax)]),
            step("differenced_ols", &[("slope_p", ds)]),
            step("armax_fit", &[("beta_p", am)]),
        ]
    }

    #[test]
    fn verdict_rule() {
        let t = Thresholds::default();
        assert_eq!(verdict(&steps(0.0001, 0.87, 0.34, 0.0, 0.27, 0.42), &t), Verdict::SpuriousLevelsRelationship);
        assert_eq!(verdict(&steps(0.5, 0.01, 0.02, 0.0, 0.0, 0.0), &t), Verdict::LevelsRelationshipSupported);
        // differenced slope significant: not spurious
        assert_eq!(verdict(&steps(0.0001, 0.87, 0.34, 0.0, 0.01, 0.42), &t), Verdict::Inconclusive);
        // one level series stationary
        assert_eq!(verdict(&steps(0.0001, 0.05, 0.34, 0.0, 0.27, 0.42), &t), Verdict::Inconclusive);
        assert_eq!(verdict(&steps(0.0001, 0.87, 0.34, 0.0, 0.27, 0.42)[..4], &t), Verdict::Inconclusive);
        let loose = Thresholds { durbin_alpha: 0.6, ..t };
        assert_eq!(verdict(&steps(0.5, 0.87, 0.34, 0.0, 0.27, 0.42), &loose), Verdict::SpuriousLevelsRelationship);
    }

    #[test]
    fn stat_json_round_trip() {
        let m: Stats = stats([
            ("a", Stat::num(1.0)),
            ("b", 12usize.into()),
            ("c", Stat::num(f64::INFINITY)),
            ("d", true.into()),
            ("e", "x".into()),
            ("f", Stat::num(0.1 + 0.2)),
        ]);
        let text = serde_json::to_string(&m).unwrap();
        let back: Stats = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back["c"].as_f64(), Some(f64::INFINITY));
    }

    #[test]
    fn config_validation() {
        let mut c = AuditConfig::new("f.csv", "y", "y");
        assert!(c.validate().is_err());
        c.x = "x".into();
        assert!(c.validate().is_ok());
        c.acf_lags = 0;
        assert!(c.validate().is_err());
        assert_eq!("md".parse::<Format>().unwrap(), Format::Markdown);
        assert!("pdf".parse::<Format>().is_err());
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = Series::from_values("a", &[1.0, 2.0]).unwrap();
        let b = Series::from_values("a", &[1.0, 2.5]).unwrap();
        assert_eq!(digest(&[&a]), digest(&[&a.clone()]));
        assert_ne!(digest(&[&a]), digest(&[&b]));
        assert_eq!(digest(&[&a]).len(), 64);
    }
}
