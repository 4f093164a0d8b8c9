//! Regression with ARMA(1,1) errors on (optionally) differenced data,
//! estimated by exact Gaussian maximum likelihood.
//!
//! The model for the `d`-th differences `y'`, `x'` is
//!
//! ```text
//! y'_t = c + b x'_t + e_t
//! e_t  = rho e_{t-1} + theta u_{t-1} + u_t,   u_t ~ N(0, sigma^2)
//! ```
//!
//! The likelihood comes from the Kalman filter on the state
//! `(e_t, theta u_t)` with transition `[[rho, 1], [0, 0]]`, started from
//! the stationary distribution. For this state the second predicted
//! component is always zero and the filter collapses to two scalar
//! recursions on the one-step prediction `a_t` and the scaled prediction
//! variance `h_t = F_t / sigma^2`:
//!
//! ```text
//! h_1     = (1 + 2 rho theta + theta^2) / (1 - rho^2)
//! a_{t+1} = rho z_t + (theta / h_t) (z_t - a_t)
//! h_{t+1} = 1 + theta^2 - theta^2 / h_t
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dual::{Dual, Real, LANES};
use crate::error::{Error, Result};
use crate::optim::{Bfgs, NelderMead};
use crate::regress::{complete_rows, ols_matrix, wald_joint, WaldResult};
use crate::series::{check_aligned, MonthIndex, Series};
use crate::stats::normal_two_sided;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Parameters within this distance of +-1 are reported as a boundary pile-up.
pub const BOUNDARY_TOL: f64 = 1e-4;

/// Smallest differenced sample accepted by [`fit_armax`].
pub const MIN_OBS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vce {
    Classical,
    Robust,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaxSpec {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub vce: Vce,
}

impl Default for ArimaxSpec {
    /// ARIMA(1,1,1) errors with robust standard errors.
    fn default() -> Self {
        ArimaxSpec { p: 1, d: 1, q: 1, vce: Vce::Robust }
    }
}

impl ArimaxSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p > 1 || self.q > 1 || self.d > 1 {
            return Err(Error::InvalidParameter(format!(
                "orders ({},{},{}) unsupported; p, d, q must each be 0 or 1",
                self.p, self.d, self.q
            )));
        }
        Ok(())
    }
}

/// Model parameters on their natural scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaxParams {
    pub c: f64,
    pub beta: Vec<f64>,
    pub rho: f64,
    pub theta: f64,
    pub sigma: f64,
}

impl ArmaxParams {
    fn is_admissible(&self) -> bool {
        self.rho.abs() < 1.0 && self.theta.abs() < 1.0 && self.sigma > 0.0
    }
}

/// Position of each free parameter in the packed vector
/// `[c, beta.., rho?, theta?, sigma]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub k: usize,
    pub ar: bool,
    pub ma: bool,
}

impl Layout {
    pub fn new(k: usize, spec: &ArimaxSpec) -> Self {
        Layout { k, ar: spec.p == 1, ma: spec.q == 1 }
    }

    pub fn len(&self) -> usize {
        2 + self.k + usize::from(self.ar) + usize::from(self.ma)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn rho(&self) -> Option<usize> {
        self.ar.then_some(1 + self.k)
    }

    pub fn theta(&self) -> Option<usize> {
        self.ma.then_some(1 + self.k + usize::from(self.ar))
    }

    pub fn sigma(&self) -> usize {
        self.len() - 1
    }

    pub fn pack(&self, p: &ArmaxParams) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.push(p.c);
        v.extend_from_slice(&p.beta);
        if self.ar {
            v.push(p.rho);
        }
        if self.ma {
            v.push(p.theta);
        }
        v.push(p.sigma);
        v
    }

    pub fn unpack(&self, v: &[f64]) -> ArmaxParams {
        ArmaxParams {
            c: v[0],
            beta: v[1..=self.k].to_vec(),
            rho: self.rho().map_or(0.0, |i| v[i]),
            theta: self.theta().map_or(0.0, |i| v[i]),
            sigma: v[self.sigma()],
        }
    }
}

/// Differenced, complete estimation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmaxData {
    y: Vec<f64>,
    x: Vec<Vec<f64>>,
}

impl ArmaxData {
    /// `x` holds one vector per regressor, each as long as `y`.
    pub fn new(y: Vec<f64>, x: Vec<Vec<f64>>) -> Result<Self> {
        if x.iter().any(|c| c.len() != y.len()) {
            return Err(Error::IndexMismatch("regressor length differs from response".into()));
        }
        Ok(ArmaxData { y, x })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn regressors(&self) -> usize {
        self.x.len()
    }

    /// Runs the filter, calling `sink(t, loglik_t, v_t, h_t)` per
    /// observation. Returns false if the recursion leaves the admissible
    /// region.
    fn filter<T: Real>(&self, c: T, beta: &[T], rho: T, theta: T, sigma: T, mut sink: impl FnMut(usize, T, T, T)) -> bool {
        let s2 = sigma * sigma;
        let ln_s2 = s2.ln();
        let denom = T::cst(1.0) - rho * rho;
        if !(denom.val() > 0.0) || !(s2.val() > 0.0) {
            return false;
        }
        let mut h = (rho * theta * 2.0 + theta * theta + 1.0) / denom;
        let mut a = T::cst(0.0);
        let th2 = theta * theta;
        for t in 0..self.y.len() {
            let mut z = T::cst(self.y[t]) - c;
            for (b, col) in beta.iter().zip(&self.x) {
                z = z - *b * col[t];
            }
            let hv = h.val();
            if !(hv > 0.0 && hv.is_finite()) {
                return false;
            }
            let v = z - a;
            let ll = (h.ln() + ln_s2 + v * v / (s2 * h) + LN_2PI) * -0.5;
            if !ll.val().is_finite() {
                return false;
            }
            sink(t, ll, v, h);
            a = rho * z + theta * v / h;
            h = th2 + 1.0 - th2 / h;
        }
        true
    }

    /// Exact Gaussian log-likelihood, or `-inf` outside the admissible
    /// region or on a non-finite intermediate.
    pub fn loglik(&self, p: &ArmaxParams) -> f64 {
        if !p.is_admissible() || p.beta.len() != self.x.len() {
            return f64::NEG_INFINITY;
        }
        let mut total = 0.0;
        let ok = self.filter(p.c, &p.beta, p.rho, p.theta, p.sigma, |_, ll, _, _| total += ll);
        if ok && total.is_finite() {
            total
        } else {
            f64::NEG_INFINITY
        }
    }

    fn dual_params(&self, layout: &Layout, v: &[f64]) -> (Dual, Vec<Dual>, Dual, Dual, Dual) {
        let var = |i: usize| Dual::var(v[i], i);
        let c = var(0);
        let beta = (1..=layout.k).map(var).collect();
        let rho = layout.rho().map_or(Dual::cst(0.0), var);
        let theta = layout.theta().map_or(Dual::cst(0.0), var);
        (c, beta, rho, theta, var(layout.sigma()))
    }

    /// Log-likelihood and its exact gradient over the packed parameters.
    pub fn loglik_gradient(&self, layout: &Layout, packed: &[f64]) -> (f64, Vec<f64>) {
        let n = layout.len();
        if !layout.unpack(packed).is_admissible() {
            return (f64::NEG_INFINITY, vec![0.0; n]);
        }
        let (c, beta, rho, theta, sigma) = self.dual_params(layout, packed);
        let mut total = Dual::cst(0.0);
        let ok = self.filter(c, &beta, rho, theta, sigma, |_, ll, _, _| total = total + ll);
        if !ok || !total.v.is_finite() {
            return (f64::NEG_INFINITY, vec![0.0; n]);
        }
        (total.v, total.d[..n].to_vec())
    }

    /// Per-observation score vectors (gradients of each loglik term).
    pub fn scores(&self, layout: &Layout, packed: &[f64]) -> Option<Vec<Vec<f64>>> {
        let n = layout.len();
        let (c, beta, rho, theta, sigma) = self.dual_params(layout, packed);
        let mut out = Vec::with_capacity(self.len());
        let ok = self.filter(c, &beta, rho, theta, sigma, |_, ll, _, _| out.push(ll.d[..n].to_vec()));
        ok.then_some(out)
    }

    /// Innovations `v_t / sqrt(h_t)`, on the scale of the white-noise shock.
    pub fn innovations(&self, p: &ArmaxParams) -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(self.len());
        let ok = self.filter(p.c, &p.beta, p.rho, p.theta, p.sigma, |_, _, v, h| out.push(v / h.sqrt()));
        ok.then_some(out)
    }
}

/// Log-likelihood of `y` given regressors `xs` (already differenced, fully
/// observed and aligned). Returns `-inf` for inadmissible parameters.
pub fn state_space_loglik(p: &ArmaxParams, y: &[f64], xs: &[&[f64]]) -> f64 {
    match ArmaxData::new(y.to_vec(), xs.iter().map(|x| x.to_vec()).collect()) {
        Ok(data) => data.loglik(p),
        Err(_) => f64::NEG_INFINITY,
    }
}

mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(serde::de::Error::custom("ragged matrix"));
        }
        Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaxFit {
    pub spec: ArimaxSpec,
    /// Labels of the packed parameters.
    pub names: Vec<String>,
    pub params: Vec<f64>,
    /// Constant first, then one slope per regressor.
    pub beta: Vec<f64>,
    pub rho: f64,
    pub theta: f64,
    pub sigma: f64,
    pub loglik: f64,
    /// Covariance of the packed parameters per `spec.vce`.
    #[serde(with = "matrix_rows")]
    pub vcov: DMatrix<f64>,
    /// Inverse observed information, kept for comparison with `vcov`.
    #[serde(with = "matrix_rows")]
    pub vcov_classical: DMatrix<f64>,
    pub innovations: Series,
    pub nobs: usize,
    pub converged: bool,
    pub iterations: usize,
    pub boundary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub coef: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
}

impl ArimaxFit {
    pub fn layout(&self) -> Layout {
        Layout::new(self.beta.len() - 1, &self.spec)
    }

    pub fn se(&self, i: usize) -> f64 {
        self.vcov[(i, i)].max(0.0).sqrt()
    }

    /// Normal-theory test of packed parameter `i` against zero.
    pub fn z_test(&self, i: usize) -> ZTest {
        let se = self.se(i);
        let z = self.params[i] / se;
        ZTest { coef: self.params[i], se, z, p: normal_two_sided(z) }
    }

    /// Test of the first regressor's slope.
    pub fn slope_test(&self) -> ZTest {
        self.z_test(1)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Sandwich covariance `A^-1 (sum_t g_t g_t') A^-1` with `A = -H`, the
/// negative Hessian of the log-likelihood, and `g_t` per-observation scores.
pub fn robust_vcov(hessian: &DMatrix<f64>, scores: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let a_inv = classical_vcov(hessian)?;
    let n = hessian.nrows();
    let mut meat = DMatrix::<f64>::zeros(n, n);
    for g in scores {
        let g = DVector::from_column_slice(g);
        meat += &g * g.transpose();
    }
    let v = &a_inv * meat * &a_inv;
    Ok((&v + v.transpose()) * 0.5)
}

/// Inverse of the observed information `-H`.
pub fn classical_vcov(hessian: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let info = -hessian;
    let chol = info
        .cholesky()
        .ok_or_else(|| Error::Singular("log-likelihood Hessian is not negative definite".into()))?;
    let inv = chol.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Hessian by central differences of the exact gradient.
fn numeric_hessian(data: &ArmaxData, layout: &Layout, x: &[f64]) -> DMatrix<f64> {
    let n = layout.len();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut step = 1e-5 * x[i].abs().max(1e-2);
        if Some(i) == layout.rho() || Some(i) == layout.theta() {
            step = step.min(0.5 * (1.0 - x[i].abs()));
        }
        if i == layout.sigma() {
            step = step.min(0.5 * x[i]);
        }
        let mut up = x.to_vec();
        let mut dn = x.to_vec();
        up[i] += step;
        dn[i] -= step;
        let (_, gu) = data.loglik_gradient(layout, &up);
        let (_, gd) = data.loglik_gradient(layout, &dn);
        for j in 0..n {
            h[(i, j)] = (gu[j] - gd[j]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Differences `y` and `xs` `spec.d` times and collects the contiguous
/// complete sample. Returns the data and the position of its first row.
fn prepare(y: &Series, xs: &[&Series], spec: &ArimaxSpec) -> Result<(ArmaxData, usize)> {
    let mut all = vec![y];
    all.extend_from_slice(xs);
    check_aligned(&all)?;
    let diffed: Vec<Series> = all
        .iter()
        .map(|s| if spec.d == 1 { s.diff(1) } else { Ok((*s).clone()) })
        .collect::<Result<_>>()?;
    let refs: Vec<&Series> = diffed.iter().collect();
    let rows = complete_rows(&refs);
    let (first, last) = match (rows.first(), rows.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(Error::InsufficientData("no complete observations".into())),
    };
    if rows.len() != last - first + 1 {
        return Err(Error::InsufficientData(
            "missing values inside the estimation sample; interpolate first".into(),
        ));
    }
    if rows.len() < MIN_OBS {
        return Err(Error::InsufficientData(format!(
            "{} observations after differencing, need {MIN_OBS}",
            rows.len()
        )));
    }
    let col = |s: &Series| rows.iter().map(|&t| s.get(t).unwrap()).collect::<Vec<f64>>();
    let yv = col(&diffed[0]);
    let xv: Vec<Vec<f64>> = diffed[1..].iter().map(col).collect();
    for (x, s) in xv.iter().zip(&diffed[1..]) {
        if x.iter().all(|v| *v == x[0]) {
            return Err(Error::Constant(format!("regressor {} is constant", s.name())));
        }
    }
    Ok((ArmaxData::new(yv, xv)?, first))
}

/// Fits the regression with ARMA errors by maximum likelihood.
///
/// The optimizer runs Nelder-Mead to find the basin and BFGS with exact
/// gradients to polish, on coordinates where `rho = tanh(u)`,
/// `theta = tanh(v)` and `sigma = exp(w)`. A fit that stops without meeting
/// the convergence tolerances is returned with `converged = false`.
pub fn fit_armax(y: &Series, xs: &[&Series], spec: &ArimaxSpec) -> Result<ArimaxFit> {
    spec.validate()?;
    if xs.is_empty() {
        return Err(Error::EmptySelection("ARMAX needs at least one regressor".into()));
    }
    let layout = Layout::new(xs.len(), spec);
    if layout.len() > LANES {
        return Err(Error::InvalidParameter(format!(
            "at most {} regressors supported",
            LANES - 4
        )));
    }
    let (data, first) = prepare(y, xs, spec)?;
    let n = data.len();

    // OLS starting values
    let design = DMatrix::from_fn(n, 1 + layout.k, |r, c| if c == 0 { 1.0 } else { data.x[c - 1][r] });
    let ols = ols_matrix(&design, &DVector::from_column_slice(&data.y))?;
    let e = &ols.residuals;
    let r1 = {
        let m = e.mean();
        let den: f64 = e.iter().map(|v| (v - m) * (v - m)).sum();
        let num: f64 = (1..n).map(|t| (e[t] - m) * (e[t - 1] - m)).sum();
        if den > 0.0 { (num / den).clamp(-0.9, 0.9) } else { 0.0 }
    };
    let start = ArmaxParams {
        c: ols.coef[0],
        beta: ols.coef.iter().skip(1).copied().collect(),
        rho: if layout.ar { r1 } else { 0.0 },
        theta: 0.0,
        sigma: (ols.rss / n as f64).sqrt().max(1e-12),
    };

    // unconstrained coordinates; regression terms scaled by their OLS se
    let scale: Vec<f64> = (0..=layout.k)
        .map(|i| {
            let se = ols.se(i);
            if se > 0.0 && se.is_finite() { se } else { 1.0 }
        })
        .collect();
    let to_natural = |z: &[f64]| -> Vec<f64> {
        let mut v = z.to_vec();
        for i in 0..=layout.k {
            v[i] = z[i] * scale[i];
        }
        if let Some(i) = layout.rho() {
            v[i] = z[i].tanh();
        }
        if let Some(i) = layout.theta() {
            v[i] = z[i].tanh();
        }
        let s = layout.sigma();
        v[s] = z[s].exp();
        v
    };
    let mut z0 = layout.pack(&start);
    for i in 0..=layout.k {
        z0[i] /= scale[i];
    }
    if let Some(i) = layout.rho() {
        z0[i] = z0[i].atanh();
    }
    if let Some(i) = layout.theta() {
        z0[i] = z0[i].atanh();
    }
    let s = layout.sigma();
    z0[s] = z0[s].ln();

    let objective = |z: &[f64]| -> f64 {
        let ll = data.loglik(&layout.unpack(&to_natural(z)));
        if ll.is_finite() { -ll / n as f64 } else { f64::INFINITY }
    };
    let steps: Vec<f64> = (0..layout.len())
        .map(|i| if i <= layout.k { 1.0 } else if i == s { 0.2 } else { 0.3 })
        .collect();
    let coarse = NelderMead { max_iter: 400 * layout.len(), ftol: 1e-8, xtol: 1e-5 }.minimize(objective, &z0, &steps);

    let objective_grad = |z: &[f64]| -> (f64, Vec<f64>) {
        let v = to_natural(z);
        let (ll, g) = data.loglik_gradient(&layout, &v);
        if !ll.is_finite() {
            return (f64::INFINITY, vec![0.0; z.len()]);
        }
        let mut gz = g;
        for i in 0..=layout.k {
            gz[i] *= scale[i];
        }
        if let Some(i) = layout.rho() {
            gz[i] *= 1.0 - v[i] * v[i];
        }
        if let Some(i) = layout.theta() {
            gz[i] *= 1.0 - v[i] * v[i];
        }
        gz[s] *= v[s];
        (-ll / n as f64, gz.into_iter().map(|d| -d / n as f64).collect())
    };
    let polished = Bfgs::default().minimize(objective_grad, &coarse.x);

    let packed = to_natural(&polished.x);
    let params = layout.unpack(&packed);
    let loglik = data.loglik(&params);
    if !loglik.is_finite() {
        return Err(Error::Singular("log-likelihood not finite at the optimum".into()));
    }
    let boundary = params.rho.abs() > 1.0 - BOUNDARY_TOL || params.theta.abs() > 1.0 - BOUNDARY_TOL;

    let hessian = numeric_hessian(&data, &layout, &packed);
    let vcov_classical = classical_vcov(&hessian)?;
    let vcov = match spec.vce {
        Vce::Classical => vcov_classical.clone(),
        Vce::Robust => {
            let scores = data
                .scores(&layout, &packed)
                .ok_or_else(|| Error::Singular("scores not finite at the optimum".into()))?;
            robust_vcov(&hessian, &scores)?
        }
    };

    let innov = data.innovations(&params).unwrap_or_default();
    let mut values = vec![None; y.len()];
    for (i, v) in innov.into_iter().enumerate() {
        values[first + i] = Some(v);
    }
    let innovations = Series::new("innovations", y.start(), values)?;

    let mut names = vec!["_cons".to_string()];
    names.extend(xs.iter().map(|x| {
        if spec.d == 1 { format!("D.{}", x.name()) } else { x.name().to_string() }
    }));
    if layout.ar {
        names.push("rho".into());
    }
    if layout.ma {
        names.push("theta".into());
    }
    names.push("sigma".into());

    let mut beta = vec![params.c];
    beta.extend_from_slice(&params.beta);
    Ok(ArimaxFit {
        spec: *spec,
        names,
        params: packed,
        beta,
        rho: params.rho,
        theta: params.theta,
        sigma: params.sigma,
        loglik,
        vcov,
        vcov_classical,
        innovations,
        nobs: n,
        converged: polished.converged,
        iterations: coarse.iterations + polished.iterations,
        boundary,
    })
}

/// Joint Wald test that the AR and MA coefficients are zero.
pub fn arma_joint_test(fit: &ArimaxFit) -> Result<WaldResult> {
    let layout = fit.layout();
    let subset: Vec<usize> = [layout.rho(), layout.theta()].into_iter().flatten().collect();
    if subset.is_empty() {
        return Err(Error::EmptySelection("model has no ARMA terms".into()));
    }
    wald_joint(&subset, &DVector::from_column_slice(&fit.params), &fit.vcov)
}

/// First month of the estimation sample for a fit on `y`.
pub fn sample_start(fit: &ArimaxFit) -> Option<MonthIndex> {
    fit.innovations
        .values()
        .iter()
        .position(Option::is_some)
        .map(|i| fit.innovations.month_at(i))
}
