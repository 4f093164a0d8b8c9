//! Residual autocorrelation diagnostics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plot::{Line, PlotKind, PlotSpec};
use crate::regress::{complete_rows, ols_fit, ols_matrix, wald_joint};
use crate::series::{check_aligned, Series};
use crate::stats::chi2_sf;

/// Treatment of lagged residuals that fall before the estimation sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Presample {
    /// Replace unavailable lagged residuals with zero and keep every row.
    #[default]
    ZeroFill,
    /// Drop rows whose lagged residuals are unavailable.
    DropRows,
}

/// Durbin's alternative test for serial correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurbinAltResult {
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
    pub lags: usize,
    /// Rows in the auxiliary regression.
    pub nobs: usize,
    pub presample: Presample,
}

/// Fits `y` on `xs` by OLS, then regresses the residuals on the regressors,
/// a constant and `lags` lagged residuals. The statistic is the Wald
/// chi-squared for joint nullity of the lagged-residual coefficients.
pub fn durbin_alternative(y: &Series, xs: &[&Series], lags: usize) -> Result<DurbinAltResult> {
    durbin_alternative_with(y, xs, lags, Presample::ZeroFill)
}

pub fn durbin_alternative_with(
    y: &Series,
    xs: &[&Series],
    lags: usize,
    presample: Presample,
) -> Result<DurbinAltResult> {
    if lags == 0 {
        return Err(Error::InvalidParameter("Durbin test needs lags >= 1".into()));
    }
    let fit = ols_fit(y, xs, true)?;
    let resid = &fit.residuals;
    let mut all = vec![y];
    all.extend_from_slice(xs);
    check_aligned(&all)?;
    let rows = complete_rows(&all);

    let mut kept = Vec::with_capacity(rows.len());
    for &t in &rows {
        let lagged: Vec<Option<f64>> = (1..=lags)
            .map(|j| t.checked_sub(j).and_then(|s| resid.get(s)))
            .collect();
        match presample {
            Presample::ZeroFill => kept.push((t, lagged.iter().map(|v| v.unwrap_or(0.0)).collect::<Vec<_>>())),
            Presample::DropRows => {
                if lagged.iter().all(Option::is_some) {
                    kept.push((t, lagged.into_iter().map(Option::unwrap).collect()));
                }
            }
        }
    }
    let k = 1 + xs.len() + lags;
    if kept.len() <= k {
        return Err(Error::InsufficientData(format!(
            "auxiliary regression has {} rows for {k} coefficients",
            kept.len()
        )));
    }
    let x = DMatrix::from_fn(kept.len(), k, |r, c| {
        let (t, ref lagged) = kept[r];
        if c < xs.len() {
            xs[c].get(t).unwrap()
        } else if c == xs.len() {
            1.0
        } else {
            lagged[c - xs.len() - 1]
        }
    });
    let e = DVector::from_iterator(kept.len(), kept.iter().map(|(t, _)| resid.get(*t).unwrap()));
    let aux = ols_matrix(&x, &e)?;
    let subset: Vec<usize> = (k - lags..k).collect();
    let w = wald_joint(&subset, &aux.coef, &aux.vcov)?;
    Ok(DurbinAltResult {
        chi2: w.statistic,
        df: lags,
        p_value: chi2_sf(w.statistic, lags as f64),
        lags,
        nobs: kept.len(),
        presample,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelogramPoint {
    pub lag: usize,
    pub value: f64,
    /// Half-width of the approximate 95% band, `1.96 / sqrt(n)`.
    pub conf_band: f64,
}

fn autocorrelations(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    let denom: f64 = c.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return Err(Error::Constant("autocorrelation of a constant series".into()));
    }
    Ok((0..=max_lag)
        .map(|k| {
            if k == 0 {
                1.0
            } else {
                c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / denom
            }
        })
        .collect())
}

/// Sample autocorrelations at lags `0..=max_lag` using the common
/// denominator over all observations.
pub fn acf(s: &Series, max_lag: usize) -> Result<Vec<CorrelogramPoint>> {
    let (_, x) = s.observed_support()?;
    let n = x.len();
    if max_lag >= n {
        return Err(Error::InsufficientData(format!("max_lag {max_lag} >= n = {n}")));
    }
    let band = 1.96 / (n as f64).sqrt();
    Ok(autocorrelations(&x, max_lag)?
        .into_iter()
        .enumerate()
        .map(|(lag, value)| CorrelogramPoint { lag, value, conf_band: band })
        .collect())
}

/// Partial autocorrelations at lags `1..=max_lag` by the Durbin-Levinson
/// recursion on the sample autocorrelations.
pub fn pacf(s: &Series, max_lag: usize) -> Result<Vec<CorrelogramPoint>> {
    let (_, x) = s.observed_support()?;
    let n = x.len();
    if max_lag == 0 || 2 * max_lag >= n {
        return Err(Error::InsufficientData(format!(
            "pacf needs 1 <= max_lag < n/2 (max_lag {max_lag}, n {n})"
        )));
    }
    let r = autocorrelations(&x, max_lag)?;
    let band = 1.96 / (n as f64).sqrt();
    let mut phi: Vec<f64> = Vec::with_capacity(max_lag);
    let mut v = 1.0;
    let mut out = Vec::with_capacity(max_lag);
    for k in 1..=max_lag {
        let num = r[k] - (1..k).map(|j| phi[j - 1] * r[k - j]).sum::<f64>();
        if !(v > 1e-14) {
            return Err(Error::Singular(format!("Toeplitz system singular at lag {k}")));
        }
        let a = num / v;
        let prev = phi.clone();
        for j in 1..k {
            phi[j - 1] = prev[j - 1] - a * prev[k - j - 1];
        }
        phi.push(a);
        v *= 1.0 - a * a;
        out.push(CorrelogramPoint { lag: k, value: a, conf_band: band });
    }
    Ok(out)
}

/// Scatter of each residual against its predecessor, with a line through
/// the centroid whose slope is the lag-1 autocorrelation.
pub fn residual_lag_scatter(residuals: &Series) -> Result<PlotSpec> {
    if residuals.count_observed() < 3 {
        return Err(Error::InsufficientData("scatter needs at least 3 residuals".into()));
    }
    let points: Vec<(f64, f64)> = (1..residuals.len())
        .filter_map(|t| Some((residuals.get(t - 1)?, residuals.get(t)?)))
        .collect();
    let line = residuals
        .observed_support()
        .ok()
        .and_then(|(_, x)| {
            let slope = autocorrelations(&x, 1).ok()?[1];
            let m = x.iter().sum::<f64>() / x.len() as f64;
            Some(Line { slope, intercept: m - slope * m })
        });
    Ok(PlotSpec {
        title: "Residuals against lagged residuals".into(),
        x_label: "Residuals, L".into(),
        y_label: "Residuals".into(),
        kind: PlotKind::Scatter { points, line },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::MonthIndex;

    fn ser(v: &[f64]) -> Series {
        Series::from_values("s", v).unwrap()
    }

    /// PACF by sequential OLS of x_t on x_{t-1..t-k}, taking the last
    /// coefficient. The demeaned series is zero-padded at both ends so the
    /// normal equations use the full-sample autocovariances.
    fn pacf_by_regression(x: &[f64], k: usize) -> f64 {
        let n = x.len();
        let m = x.iter().sum::<f64>() / n as f64;
        let c = |t: isize| if t >= 0 && (t as usize) < n { x[t as usize] - m } else { 0.0 };
        let rows = n + k;
        let xm = DMatrix::from_fn(rows, k, |r, j| c(r as isize - j as isize - 1));
        let y = DVector::from_iterator(rows, (0..rows).map(|r| c(r as isize)));
        let fit = ols_matrix(&xm, &y).unwrap();
        fit.coef[k - 1]
    }

    #[test]
    fn acf_lag_zero_is_one() {
        let s = ser(&[0.3, 1.2, -0.7, 2.2, 0.1]);
        let a = acf(&s, 4).unwrap();
        assert_eq!(a[0].value, 1.0);
        assert!(a.iter().all(|p| p.value.abs() <= 1.0));
        assert!((a[0].conf_band - 1.96 / 5f64.sqrt()).abs() < 1e-15);
        assert!(acf(&s, 5).is_err());
        assert!(acf(&ser(&[1.0; 6]), 2).is_err());
    }

    #[test]
    fn acf_alternating_sequence() {
        // mean 0, every product -1: value(1) = -(n-1)/n
        let n = 100;
        let x: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let a = acf(&ser(&x), 2).unwrap();
        assert!((a[1].value - (-(n as f64 - 1.0) / n as f64)).abs() < 1e-14);
        assert!((a[2].value - (n as f64 - 2.0) / n as f64).abs() < 1e-14);
    }

    #[test]
    fn pacf_base_case_matches_acf() {
        let s = ser(&[0.3, 1.2, -0.7, 2.2, 0.1, -1.0, 0.4, 0.9]);
        let a = acf(&s, 3).unwrap();
        let p = pacf(&s, 3).unwrap();
        assert_eq!(p[0].lag, 1);
        assert_eq!(p[0].value, a[1].value);
        assert!(pacf(&s, 4).is_err());
        assert!(pacf(&s, 0).is_err());
    }

    #[test]
    fn pacf_agrees_with_sequential_regression() {
        // deterministic pseudo-random AR(2)-like sequence
        let mut x = vec![0.0f64; 200];
        let mut state = 12345u64;
        for t in 2..200 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            x[t] = 0.5 * x[t - 1] - 0.3 * x[t - 2] + u;
        }
        let p = pacf(&ser(&x), 6).unwrap();
        for k in 1..=6 {
            let oracle = pacf_by_regression(&x, k);
            assert!((p[k - 1].value - oracle).abs() < 1e-6, "lag {k}: {} vs {oracle}", p[k - 1].value);
        }
    }

    #[test]
    fn scatter_points() {
        let spec = residual_lag_scatter(&ser(&[1.0, 2.0, 3.0])).unwrap();
        match spec.kind {
            PlotKind::Scatter { points, .. } => assert_eq!(points, vec![(1.0, 2.0), (2.0, 3.0)]),
            _ => panic!("expected scatter"),
        }
        assert!(residual_lag_scatter(&ser(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn durbin_presample_conventions() {
        let n = 60;
        let x: Vec<f64> = (0..n).map(|t| ((t * 7919) % 101) as f64 / 10.0).collect();
        let mut e = vec![0.0; n];
        for t in 1..n {
            e[t] = 0.7 * e[t - 1] + (((t * 104729) % 97) as f64 / 97.0 - 0.5);
        }
        let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| 1.0 + 0.5 * a + b).collect();
        let (ys, xs) = (ser(&y), ser(&x));
        let z = durbin_alternative(&ys, &[&xs], 3).unwrap();
        let d = durbin_alternative_with(&ys, &[&xs], 3, Presample::DropRows).unwrap();
        assert_eq!((z.nobs, d.nobs), (n, n - 3));
        assert_eq!(z.df, 3);
        assert!(z.chi2 > 0.0 && d.chi2 > 0.0);
        assert!(z.p_value < 0.01);
        assert!(durbin_alternative(&ys, &[&xs], 0).is_err());
        assert!(durbin_alternative(&ser(&y[..5]), &[&ser(&x[..5])], 3).is_err());
    }

    #[test]
    fn durbin_matches_explicit_wald() {
        // one lag, zero-filled: aux design [x, 1, e_{t-1}]
        let x = [1.0, 2.0, 4.0, 3.0, 6.0, 5.0, 8.0, 7.0, 9.0, 12.0];
        let y = [2.0, 2.5, 4.1, 3.0, 5.9, 5.2, 8.8, 6.9, 9.5, 11.0];
        let fit = ols_fit(&ser(&y), &[&ser(&x)], true).unwrap();
        let e: Vec<f64> = fit.residuals.values().iter().map(|v| v.unwrap()).collect();
        let xm = DMatrix::from_fn(10, 3, |r, c| match c {
            0 => x[r],
            1 => 1.0,
            _ => if r == 0 { 0.0 } else { e[r - 1] },
        });
        let aux = ols_matrix(&xm, &DVector::from_vec(e.clone())).unwrap();
        let expect = aux.coef[2] * aux.coef[2] / aux.vcov[(2, 2)];
        let got = durbin_alternative(&ser(&y), &[&ser(&x)], 1).unwrap();
        assert!((got.chi2 - expect).abs() < 1e-10 * expect.max(1.0));
    }

    #[test]
    fn acf_rejects_interior_gaps() {
        let s = Series::new("s", MonthIndex::from_encoded(0), vec![None, Some(1.0), None, Some(2.0), Some(0.5)]).unwrap();
        assert!(acf(&s, 1).is_err());
        let t = Series::new("t", MonthIndex::from_encoded(0), vec![None, Some(1.0), Some(3.0), Some(2.0), None]).unwrap();
        assert_eq!(acf(&t, 1).unwrap().len(), 2);
    }
}
