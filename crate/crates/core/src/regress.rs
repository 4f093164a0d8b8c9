//! Ordinary least squares with classical inference, Pearson correlation and
//! Wald joint tests.
//!
//! Missing data policy: listwise deletion. A row enters a regression only if
//! the response and every regressor are observed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{check_aligned, Series};
use crate::stats::{chi2_sf, student_t_two_sided};

/// Relative threshold on `|R_ii| / max_j |R_jj|` below which the design is
/// treated as rank deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Result of a least-squares solve on a dense design.
#[derive(Debug, Clone)]
pub struct OlsCore {
    pub coef: DVector<f64>,
    pub vcov: DMatrix<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
    pub sigma2: f64,
    pub nobs: usize,
    pub dof_resid: usize,
}

impl OlsCore {
    pub fn se(&self, i: usize) -> f64 {
        self.vcov[(i, i)].max(0.0).sqrt()
    }

    pub fn t_stat(&self, i: usize) -> f64 {
        self.coef[i] / self.se(i)
    }
}

/// Least squares via Householder QR. `vcov = sigma2 (R'R)^-1` with
/// `sigma2 = RSS / (n - k)`.
pub fn ols_matrix(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsCore> {
    let (n, k) = x.shape();
    if k == 0 {
        return Err(Error::EmptySelection("design matrix has no columns".into()));
    }
    if n <= k {
        return Err(Error::InsufficientData(format!(
            "{n} observations for {k} coefficients"
        )));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    for i in 0..k {
        if !(r[(i, i)].abs() > RANK_TOL * max_diag) {
            return Err(Error::RankDeficient { column: i });
        }
    }
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let qty = qty.rows(0, k).into_owned();
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient { column: k - 1 })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(Error::RankDeficient { column: k - 1 })?;
    let residuals = y - x * &coef;
    let rss = residuals.norm_squared();
    let dof_resid = n - k;
    let sigma2 = rss / dof_resid as f64;
    let mut vcov = (&r_inv * r_inv.transpose()) * sigma2;
    // symmetrize away rounding
    for i in 0..k {
        for j in 0..i {
            let m = 0.5 * (vcov[(i, j)] + vcov[(j, i)]);
            vcov[(i, j)] = m;
            vcov[(j, i)] = m;
        }
    }
    Ok(OlsCore {
        coef,
        vcov,
        residuals,
        rss,
        sigma2,
        nobs: n,
        dof_resid,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    /// Coefficient labels; `_cons` first when an intercept is included.
    pub names: Vec<String>,
    pub coef: DVector<f64>,
    pub vcov: DMatrix<f64>,
    /// Residuals on the response's index, missing where a row was dropped.
    pub residuals: Series,
    pub nobs: usize,
    pub dof_resid: usize,
    pub r_squared: f64,
    pub sigma2: f64,
    pub rss: f64,
    pub intercept: bool,
}

/// Outcome of a single-coefficient t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    /// Standard error was zero (perfect fit); `t` is then infinite or zero.
    pub degenerate: bool,
}

impl RegressionFit {
    pub fn se(&self, i: usize) -> f64 {
        self.vcov[(i, i)].max(0.0).sqrt()
    }

    pub fn t_test(&self, i: usize) -> Result<TTest> {
        t_test(self, i)
    }
}

/// Two-sided t-test of `coef[i] = 0` with `dof_resid` degrees of freedom.
pub fn t_test(fit: &RegressionFit, i: usize) -> Result<TTest> {
    if i >= fit.coef.len() {
        return Err(Error::InvalidParameter(format!(
            "coefficient index {i} out of range (have {})",
            fit.coef.len()
        )));
    }
    let b = fit.coef[i];
    let se = fit.se(i);
    if se == 0.0 {
        return Ok(if b == 0.0 {
            TTest { t: 0.0, p: 1.0, degenerate: true }
        } else {
            TTest { t: b.signum() * f64::INFINITY, p: 0.0, degenerate: true }
        });
    }
    let t = b / se;
    Ok(TTest {
        t,
        p: student_t_two_sided(t, fit.dof_resid as f64),
        degenerate: false,
    })
}

/// Rows (positions in the shared index) where every series is observed.
pub(crate) fn complete_rows(series: &[&Series]) -> Vec<usize> {
    let n = series.first().map_or(0, |s| s.len());
    (0..n)
        .filter(|&t| series.iter().all(|s| s.get(t).is_some()))
        .collect()
}

/// Regresses `y` on `xs` (plus a constant when `intercept`).
pub fn ols_fit(y: &Series, xs: &[&Series], intercept: bool) -> Result<RegressionFit> {
    let mut all = vec![y];
    all.extend_from_slice(xs);
    check_aligned(&all)?;
    let rows = complete_rows(&all);
    let k = xs.len() + usize::from(intercept);
    if rows.len() <= k {
        return Err(Error::InsufficientData(format!(
            "{} complete rows for {k} coefficients",
            rows.len()
        )));
    }
    let x = DMatrix::from_fn(rows.len(), k, |r, c| {
        let t = rows[r];
        match (intercept, c) {
            (true, 0) => 1.0,
            (true, c) => xs[c - 1].get(t).unwrap(),
            (false, c) => xs[c].get(t).unwrap(),
        }
    });
    let yv = DVector::from_iterator(rows.len(), rows.iter().map(|&t| y.get(t).unwrap()));
    let core = ols_matrix(&x, &yv)?;

    let tss = if intercept {
        let m = yv.mean();
        yv.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
    } else {
        yv.norm_squared()
    };
    let r_squared = if tss > 0.0 {
        (1.0 - core.rss / tss).clamp(0.0, 1.0)
    } else {
        1.0
    };

    let mut resid = vec![None; y.len()];
    for (r, &t) in rows.iter().enumerate() {
        resid[t] = Some(core.residuals[r]);
    }
    let mut names = Vec::with_capacity(k);
    if intercept {
        names.push("_cons".to_string());
    }
    names.extend(xs.iter().map(|s| s.name().to_string()));

    Ok(RegressionFit {
        names,
        coef: core.coef,
        vcov: core.vcov,
        residuals: Series::new("residuals", y.start(), resid)?,
        nobs: core.nobs,
        dof_resid: core.dof_resid,
        r_squared,
        sigma2: core.sigma2,
        rss: core.rss,
        intercept,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrResult {
    pub r: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub nobs: usize,
}

/// Sample Pearson correlation over complete pairs, with a two-sided t-test
/// on `n - 2` degrees of freedom.
pub fn pearson_corr(a: &Series, b: &Series) -> Result<CorrResult> {
    check_aligned(&[a, b])?;
    let rows = complete_rows(&[a, b]);
    let n = rows.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("{n} complete pairs, need 3")));
    }
    let av: Vec<f64> = rows.iter().map(|&t| a.get(t).unwrap()).collect();
    let bv: Vec<f64> = rows.iter().map(|&t| b.get(t).unwrap()).collect();
    pearson_slices(&av, &bv)
}

pub(crate) fn pearson_slices(av: &[f64], bv: &[f64]) -> Result<CorrResult> {
    let n = av.len();
    let ma = av.iter().sum::<f64>() / n as f64;
    let mb = bv.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in av.iter().zip(bv) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Constant("correlation with a constant series".into()));
    }
    let r = (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0);
    let dof = (n - 2) as f64;
    let (t_stat, p_value) = if r.abs() == 1.0 {
        (r * f64::INFINITY, 0.0)
    } else {
        let t = r * (dof / (1.0 - r * r)).sqrt();
        (t, student_t_two_sided(t, dof))
    };
    Ok(CorrResult {
        r,
        t_stat,
        p_value,
        nobs: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Wald chi-squared test that the selected coefficients are jointly zero:
/// `c' V^-1 c` with `df = |subset|`.
pub fn wald_joint(subset: &[usize], coef: &DVector<f64>, vcov: &DMatrix<f64>) -> Result<WaldResult> {
    if subset.is_empty() {
        return Err(Error::EmptySelection("Wald test needs at least one coefficient".into()));
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= coef.len() || i >= vcov.nrows()) {
        return Err(Error::InvalidParameter(format!("coefficient index {bad} out of range")));
    }
    let m = subset.len();
    let c = DVector::from_iterator(m, subset.iter().map(|&i| coef[i]));
    let v = DMatrix::from_fn(m, m, |r, s| vcov[(subset[r], subset[s])]);
    let chol = v
        .cholesky()
        .ok_or_else(|| Error::Singular("Wald covariance submatrix is not positive definite".into()))?;
    let z = chol
        .l()
        .solve_lower_triangular(&c)
        .ok_or_else(|| Error::Singular("Wald covariance submatrix".into()))?;
    let statistic = z.norm_squared();
    if !statistic.is_finite() {
        return Err(Error::Singular("Wald statistic is not finite".into()));
    }
    Ok(WaldResult {
        statistic,
        df: m,
        p_value: chi2_sf(statistic, m as f64),
    })
}
