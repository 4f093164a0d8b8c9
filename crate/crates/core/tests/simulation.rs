use tsaudit::diagnostics::durbin_alternative;
use tsaudit::montecarlo::{replicate, Process};
use tsaudit::regress::{ols_fit, t_test};
use tsaudit::series::Series;

fn series(name: &str, v: &[f64]) -> Series {
    Series::from_values(name, v).unwrap()
}

#[test]
fn null_slope_pvalues_are_uniform() {
    let reps = 1000;
    let mut p = replicate(reps, 21, |_, rng| {
        let x = Process::WhiteNoise.sample(1000, 1.0, rng);
        let y = Process::WhiteNoise.sample(1000, 1.0, rng);
        let fit = ols_fit(&series("y", &y), &[&series("x", &x)], true).unwrap();
        t_test(&fit, 1).unwrap().p
    });
    p.sort_by(f64::total_cmp);
    // Kolmogorov-Smirnov distance to U(0, 1); 1.36 / sqrt(n) is the 5% critical value
    let d = p
        .iter()
        .enumerate()
        .map(|(i, v)| ((i + 1) as f64 / reps as f64 - v).max(v - i as f64 / reps as f64))
        .fold(0.0, f64::max);
    assert!(d < 1.36 / (reps as f64).sqrt(), "KS distance {d}");
}

#[test]
fn durbin_size_on_iid_residuals() {
    let rej = replicate(2000, 22, |_, rng| {
        let e = Process::WhiteNoise.sample(500, 1.0, rng);
        let x = Process::WhiteNoise.sample(500, 1.0, rng);
        let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| 0.3 + a + b).collect();
        durbin_alternative(&series("y", &y), &[&series("x", &x)], 12).unwrap().p_value < 0.05
    });
    let rate = rej.iter().filter(|b| **b).count() as f64 / rej.len() as f64;
    assert!((rate - 0.05).abs() <= 0.02, "{rate}");
}
