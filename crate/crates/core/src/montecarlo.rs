//! Simulation harness: Gaussian process generators on reproducible RNG
//! streams and the spurious-regression replication experiment.
//!
//! Every replication draws from its own ChaCha20 stream, selected by
//! `seed` (the key) and the replication index (the stream id), so results
//! do not depend on thread scheduling. Normal variates come from the
//! inverse CDF applied to one 53-bit uniform each.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::arimax::ArmaxParams;
use crate::error::{Error, Result};
use crate::regress::pearson_slices;
use crate::series::{MonthIndex, Series};
use crate::stats::{quantile_sorted, CompensatedSum};

/// Identifies the generator and stream-splitting scheme in outputs.
pub const RNG_ID: &str = "chacha20-v1";

/// Nominal two-sided 5% cutoff for |t|.
pub const T_CRIT: f64 = 1.96;

/// Standard normal variates from one RNG stream.
pub struct NormalStream {
    rng: ChaCha20Rng,
    normal: Normal,
}

impl NormalStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        NormalStream { rng, normal: Normal::standard() }
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u = self.uniform();
        self.normal.inverse_cdf(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Process {
    RandomWalk,
    WhiteNoise,
    Ar1 { rho: f64 },
    Arma11 { rho: f64, theta: f64 },
}

impl Process {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Process::Ar1 { rho } => rho.abs() < 1.0,
            Process::Arma11 { rho, theta } => rho.abs() < 1.0 && theta.abs() < 1.0,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{self:?}: need |rho| < 1 and |theta| < 1")))
        }
    }

    /// Draws `n` values, starting AR and ARMA recursions from their
    /// stationary distribution.
    pub fn sample(&self, n: usize, sigma: f64, rng: &mut NormalStream) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        match *self {
            Process::WhiteNoise => out.extend((0..n).map(|_| sigma * rng.normal())),
            Process::RandomWalk => {
                let mut level = 0.0;
                for _ in 0..n {
                    level += sigma * rng.normal();
                    out.push(level);
                }
            }
            Process::Ar1 { rho } => {
                if n > 0 {
                    let mut e = sigma / (1.0 - rho * rho).sqrt() * rng.normal();
                    out.push(e);
                    for _ in 1..n {
                        e = rho * e + sigma * rng.normal();
                        out.push(e);
                    }
                }
            }
            Process::Arma11 { rho, theta } => {
                if n > 0 {
                    // (e_0, u_0) jointly normal with var(e) = gamma0, cov(e, u) = sigma^2
                    let excess = sigma * (rho + theta).abs() / (1.0 - rho * rho).sqrt();
                    let mut u = sigma * rng.normal();
                    let mut e = u + excess * rng.normal();
                    out.push(e);
                    for _ in 1..n {
                        let un = sigma * rng.normal();
                        e = rho * e + theta * u + un;
                        u = un;
                        out.push(e);
                    }
                }
            }
        }
        out
    }
}

/// Deterministic series for `(process, n, sigma, seed)`, using stream 0.
pub fn generate(process: Process, n: usize, sigma: f64, seed: u64) -> Result<Series> {
    process.validate()?;
    if n == 0 || !(sigma > 0.0) {
        return Err(Error::InvalidParameter("need n >= 1 and sigma > 0".into()));
    }
    let mut rng = NormalStream::new(seed, 0);
    Series::from_values("sim", &process.sample(n, sigma, &mut rng))
}

/// Runs `f(rep, stream)` for each replication in parallel and returns the
/// results in replication order.
pub fn replicate<T: Send>(reps: usize, seed: u64, f: impl Fn(usize, &mut NormalStream) -> T + Sync) -> Vec<T> {
    (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = NormalStream::new(seed, i as u64);
            f(i, &mut rng)
        })
        .collect()
}

/// Simulates `(y, x)` in levels for a regression with ARMA(1,1) errors in
/// `d`-th differences. `x'` is white noise with unit variance; integrated
/// series start at zero.
pub fn simulate_armax(params: &ArmaxParams, n: usize, d: usize, start: MonthIndex, rng: &mut NormalStream) -> Result<(Series, Series)> {
    if params.beta.len() != 1 {
        return Err(Error::InvalidParameter("simulate_armax takes one regressor".into()));
    }
    let errors = Process::Arma11 { rho: params.rho, theta: params.theta };
    errors.validate()?;
    let xd: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let e = errors.sample(n, params.sigma, rng);
    let yd: Vec<f64> = xd.iter().zip(&e).map(|(x, e)| params.c + params.beta[0] * x + e).collect();
    let integrate = |v: &[f64]| -> Vec<Option<f64>> {
        if d == 0 {
            return v.iter().map(|x| Some(*x)).collect();
        }
        let mut level = 0.0;
        std::iter::once(Some(0.0))
            .chain(v.iter().map(|dv| {
                level += dv;
                Some(level)
            }))
            .collect()
    };
    Ok((Series::new("y", start, integrate(&yd))?, Series::new("x", start, integrate(&xd))?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub process: Process,
    pub sigma: f64,
    /// Regress first differences instead of levels.
    #[serde(default)]
    pub differenced: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.process.validate()?;
        if self.n < 10 {
            return Err(Error::InvalidParameter(format!("n = {} (need >= 10)", self.n)));
        }
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be >= 1".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub slope: f64,
    pub t: f64,
    pub r2: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub prob: f64,
    pub abs_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: SimConfig,
    pub rng: String,
    pub t_crit: f64,
    pub rejection_rate: f64,
    pub mean_abs_t: f64,
    pub mean_r2: f64,
    /// Quantiles of |t| across replications.
    pub quantiles: Vec<Quantile>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub summary: ExperimentSummary,
    pub records: Vec<RepRecord>,
}

impl Experiment {
    /// Per-replication statistics as CSV.
    pub fn records_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn one_regression(rep: usize, cfg: &SimConfig, rng: &mut NormalStream) -> RepRecord {
    let mut y = cfg.process.sample(cfg.n, cfg.sigma, rng);
    let mut x = cfg.process.sample(cfg.n, cfg.sigma, rng);
    if cfg.differenced {
        y = y.windows(2).map(|w| w[1] - w[0]).collect();
        x = x.windows(2).map(|w| w[1] - w[0]).collect();
    }
    match pearson_slices(&x, &y) {
        Ok(c) => {
            let (mx, my) = (x.iter().sum::<f64>() / x.len() as f64, y.iter().sum::<f64>() / y.len() as f64);
            let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
            let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
            RepRecord { rep, slope: sxy / sxx, t: c.t_stat, r2: c.r * c.r, reject: c.t_stat.abs() > T_CRIT }
        }
        Err(_) => RepRecord { rep, slope: f64::NAN, t: f64::NAN, r2: f64::NAN, reject: false },
    }
}

/// Regresses one independent draw of `cfg.process` on another, `reps`
/// times, and tallies nominal 5% rejections of a zero slope.
pub fn spurious_experiment(cfg: &SimConfig) -> Result<Experiment> {
    cfg.validate()?;
    let records = replicate(cfg.reps, cfg.seed, |i, rng| one_regression(i, cfg, rng));
    let valid: Vec<&RepRecord> = records.iter().filter(|r| r.t.is_finite()).collect();
    if valid.is_empty() {
        return Err(Error::InsufficientData("no replication produced a finite t statistic".into()));
    }
    let m = valid.len() as f64;
    let rejections = valid.iter().filter(|r| r.reject).count() as f64;
    let mean_abs_t = valid.iter().map(|r| r.t.abs()).collect::<CompensatedSum>().value() / m;
    let mean_r2 = valid.iter().map(|r| r.r2).collect::<CompensatedSum>().value() / m;
    let mut abs_t: Vec<f64> = valid.iter().map(|r| r.t.abs()).collect();
    abs_t.sort_by(f64::total_cmp);
    let quantiles = [0.05, 0.25, 0.5, 0.75, 0.95]
        .iter()
        .map(|&prob| Quantile { prob, abs_t: quantile_sorted(&abs_t, prob) })
        .collect();
    Ok(Experiment {
        summary: ExperimentSummary {
            config: *cfg,
            rng: RNG_ID.to_string(),
            t_crit: T_CRIT,
            rejection_rate: rejections / m,
            mean_abs_t,
            mean_r2,
            quantiles,
        },
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::acf;

    #[test]
    fn white_noise_moments() {
        let s = generate(Process::WhiteNoise, 100_000, 1.0, 11).unwrap();
        let v: Vec<f64> = s.values().iter().map(|v| v.unwrap()).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        assert!(m.abs() < 0.02, "{m}");
        assert!((0.99..=1.01).contains(&sd), "{sd}");
    }

    #[test]
    fn ar1_lag_one_autocorrelation() {
        let s = generate(Process::Ar1 { rho: 0.6 }, 100_000, 1.0, 5).unwrap();
        let r = acf(&s, 1).unwrap();
        assert!((r[1].value - 0.6).abs() < 0.01, "{}", r[1].value);
    }

    #[test]
    fn arma11_stationary_start_has_right_variance() {
        // variance of the first draw across streams
        let (rho, theta) = (0.6, 0.3);
        let first = replicate(20_000, 3, |_, rng| Process::Arma11 { rho, theta }.sample(1, 1.0, rng)[0]);
        let var = first.iter().map(|v| v * v).sum::<f64>() / first.len() as f64;
        let gamma0 = (1.0 + 2.0 * rho * theta + theta * theta) / (1.0 - rho * rho);
        assert!((var / gamma0 - 1.0).abs() < 0.05, "{var} vs {gamma0}");
    }

    #[test]
    fn random_walk_differences_look_white() {
        let s = generate(Process::RandomWalk, 2000, 1.0, 9).unwrap();
        let d = s.diff(1).unwrap().values()[1..].iter().map(|v| v.unwrap()).collect::<Vec<_>>();
        let r = acf(&Series::from_values("d", &d).unwrap(), 20).unwrap();
        let inside = r[1..].iter().filter(|p| p.value.abs() <= p.conf_band).count();
        assert!(inside >= 17, "{inside} of 20 inside the band");
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = NormalStream::new(42, 0).normal();
        let b = NormalStream::new(42, 0).normal();
        let c = NormalStream::new(42, 1).normal();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(a, c);
        let s1 = generate(Process::Arma11 { rho: 0.5, theta: -0.2 }, 50, 2.0, 1).unwrap();
        let s2 = generate(Process::Arma11 { rho: 0.5, theta: -0.2 }, 50, 2.0, 1).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(generate(Process::Ar1 { rho: 1.0 }, 10, 1.0, 0).is_err());
        let cfg = SimConfig { n: 5, reps: 10, seed: 0, process: Process::RandomWalk, sigma: 1.0, differenced: false };
        assert!(spurious_experiment(&cfg).is_err());
    }

    #[test]
    fn spurious_rejection_grows_with_n() {
        let cfg = |n| SimConfig { n, reps: 400, seed: 17, process: Process::RandomWalk, sigma: 1.0, differenced: false };
        let small = spurious_experiment(&cfg(25)).unwrap().summary.rejection_rate;
        let large = spurious_experiment(&cfg(500)).unwrap().summary.rejection_rate;
        assert!(large > small, "{small} vs {large}");
        let e = spurious_experiment(&cfg(25)).unwrap();
        assert!((0.0..=1.0).contains(&e.summary.rejection_rate));
        assert_eq!(e.records.len(), 400);
        assert!(e.records_csv().unwrap().starts_with("rep,slope,t,r2,reject\n"));
    }
}
