//! Augmented Dickey-Fuller unit-root test with MacKinnon approximate
//! p-values.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regress::ols_matrix;
use crate::series::Series;
use crate::stats::normal_cdf;

/// Deterministic terms in the test regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deterministic {
    None,
    Constant,
    ConstantTrend,
}

impl Deterministic {
    fn code(self) -> &'static str {
        match self {
            Deterministic::None => "nc",
            Deterministic::Constant => "c",
            Deterministic::ConstantTrend => "ct",
        }
    }
}

/// Reported p-values are clamped to this range.
pub const P_FLOOR: f64 = 0.001;
pub const P_CEILING: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clamp {
    None,
    Floor,
    Ceiling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxPValue {
    /// Clamped to `[P_FLOOR, P_CEILING]`.
    pub p: f64,
    /// Value of the response surface before clamping.
    pub raw: f64,
    pub clamp: Clamp,
}

#[derive(Debug, Clone, PartialEq)]
struct Surface {
    tau_max: f64,
    tau_min: f64,
    tau_star: f64,
    small: Vec<f64>,
    large: Vec<f64>,
}

const TABLE: &str = include_str!("../data/mackinnon_1994.txt");

fn parse_table(text: &str) -> Result<Vec<(String, Surface)>> {
    let mut specs: Vec<(String, Surface)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::InvalidParameter(format!("response-surface table line {}", lineno + 1));
        let mut fields = line.split(',').map(str::trim);
        let spec = fields.next().ok_or_else(bad)?.to_string();
        let region = fields.next().ok_or_else(bad)?;
        let vals = fields
            .map(|v| v.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        if vals.is_empty() {
            return Err(bad());
        }
        let idx = match specs.iter().position(|(s, _)| *s == spec) {
            Some(i) => i,
            None => {
                specs.push((
                    spec,
                    Surface {
                        tau_max: f64::NAN,
                        tau_min: f64::NAN,
                        tau_star: f64::NAN,
                        small: vec![],
                        large: vec![],
                    },
                ));
                specs.len() - 1
            }
        };
        let s = &mut specs[idx].1;
        match region {
            "tau_max" => s.tau_max = vals[0],
            "tau_min" => s.tau_min = vals[0],
            "tau_star" => s.tau_star = vals[0],
            "smallp" => s.small = vals,
            "largep" => s.large = vals,
            _ => return Err(bad()),
        }
    }
    for (name, s) in &specs {
        if s.tau_max.is_nan() || s.tau_min.is_nan() || s.tau_star.is_nan() || s.small.is_empty() || s.large.is_empty() {
            return Err(Error::InvalidParameter(format!("response surface {name:?} incomplete")));
        }
    }
    Ok(specs)
}

fn table() -> &'static [(String, Surface)] {
    static T: OnceLock<Vec<(String, Surface)>> = OnceLock::new();
    T.get_or_init(|| parse_table(TABLE).expect("embedded response-surface table is well formed"))
}

fn poly(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// MacKinnon (1994) approximate p-value for a Dickey-Fuller tau statistic.
pub fn mackinnon_pvalue(tau: f64, spec: Deterministic) -> Result<ApproxPValue> {
    let surface = table()
        .iter()
        .find(|(s, _)| s == spec.code())
        .map(|(_, s)| s)
        .ok_or_else(|| Error::UnsupportedSpec(format!("{spec:?}")))?;
    if tau.is_nan() {
        return Err(Error::InvalidParameter("tau is NaN".into()));
    }
    let raw = if tau > surface.tau_max {
        1.0
    } else if tau < surface.tau_min {
        0.0
    } else if tau <= surface.tau_star {
        normal_cdf(poly(&surface.small, tau))
    } else {
        normal_cdf(poly(&surface.large, tau))
    };
    let (p, clamp) = if raw < P_FLOOR {
        (P_FLOOR, Clamp::Floor)
    } else if raw > P_CEILING {
        (P_CEILING, Clamp::Ceiling)
    } else {
        (raw, Clamp::None)
    };
    Ok(ApproxPValue { p, raw, clamp })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    /// t-statistic on the lagged level.
    pub tau: f64,
    pub lags: usize,
    pub nobs_used: usize,
    pub p_value: f64,
    pub p_raw: f64,
    pub clamp: Clamp,
    pub spec: Deterministic,
    /// Coefficient on the lagged level.
    pub gamma: f64,
}

/// Regresses `D.s` on a constant, `L.s` and `lags` lagged differences.
pub fn adf_test(s: &Series, lags: usize) -> Result<AdfResult> {
    let (_, x) = s.observed_support()?;
    let n = x.len();
    if n < lags + 2 || n - lags - 1 <= lags + 3 {
        return Err(Error::InsufficientData(format!(
            "ADF with {lags} lags needs more than {} observations (have {n})",
            2 * lags + 4
        )));
    }
    if x.iter().all(|v| *v == x[0]) {
        return Err(Error::Constant(format!("{} is constant", s.name())));
    }
    let dx: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    // row for time t uses dx[t-1] = x[t] - x[t-1]
    let rows: Vec<usize> = (lags + 1..n).collect();
    let k = lags + 2;
    let design = DMatrix::from_fn(rows.len(), k, |r, c| {
        let t = rows[r];
        match c {
            0 => x[t - 1],
            c if c <= lags => dx[t - 1 - c],
            _ => 1.0,
        }
    });
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&t| dx[t - 1]));
    let fit = ols_matrix(&design, &y)?;
    let tau = fit.t_stat(0);
    let spec = Deterministic::Constant;
    let p = mackinnon_pvalue(tau, spec)?;
    Ok(AdfResult {
        tau,
        lags,
        nobs_used: rows.len(),
        p_value: p.p,
        p_raw: p.raw,
        clamp: p.clamp,
        spec,
        gamma: fit.coef[0],
    })
}
