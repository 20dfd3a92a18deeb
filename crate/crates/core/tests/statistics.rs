//! Distributional checks of the generators and estimators against known laws.

use rvseries::coefficients::{generate_coefficients, MultiplierLaw};
use rvseries::innovations::{compound_poisson_path, iid_panel, pareto_sample, single_jump_path, stable_sample};
use rvseries::tails::{ks_distance, ks_two_sample, series_tail_constant, series_tail_constant_mc};
use rvseries::{CoefficientFamily, Grid, InnovationSpec, StreamKey, TailModel};

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn pareto_exceedances_match_exact_tail() {
    let n = 200_000;
    let key = StreamKey::new(101);
    let xs: Vec<f64> = (0..n as u64).map(|i| pareto_sample(&key.child(i), 1.5, 2.0).unwrap()).collect();
    assert!(xs.iter().all(|&x| x >= 2.0));
    for x in [3.0, 10.0, 40.0] {
        let exact = (x / 2.0f64).powf(-1.5);
        let freq = xs.iter().filter(|&&v| v > x).count() as f64 / n as f64;
        assert!((freq - exact).abs() <= 4.0 * binomial_se(exact, n), "x {x}: {freq} vs {exact}");
    }
}

#[test]
fn stable_laws_have_known_scale() {
    let n = 100_000;
    let key = StreamKey::new(102);
    // alpha = 2 is N(0, 2)
    let g: Vec<f64> = (0..n as u64).map(|i| stable_sample(&key.child(i), 2.0, 0.0).unwrap()).collect();
    let mean = g.iter().sum::<f64>() / n as f64;
    let var = g.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    // SE of the sample variance of N(0, 2): 2 sqrt(2/n)
    assert!((var - 2.0).abs() <= 4.0 * 2.0 * (2.0 / n as f64).sqrt(), "{var}");
    // alpha = 1, beta = 0 is standard Cauchy: median |X| = 1
    let c: Vec<f64> = (0..n as u64)
        .map(|i| stable_sample(&key.child(n as u64 + i), 1.0, 0.0).unwrap())
        .collect();
    let ks = ks_distance(&c, |x| 0.5 + x.atan() / std::f64::consts::PI).unwrap();
    assert!(ks < 1.63 / (n as f64).sqrt(), "KS {ks}");
    let below = c.iter().filter(|x| x.abs() < 1.0).count() as f64 / n as f64;
    assert!((below - 0.5).abs() <= 4.0 * binomial_se(0.5, n));
}

#[test]
fn compound_poisson_sup_tail_is_rate_times_jump_tail() {
    let g = Grid::new(50).unwrap();
    let tail = TailModel::new(1.5, 1.0, 0.5).unwrap();
    let rate = 2.0;
    let n = 200_000;
    let key = StreamKey::new(103);
    let norms: Vec<f64> = (0..n as u64)
        .map(|i| compound_poisson_path(&key.child(i), g, rate, &tail).unwrap().sup_norm())
        .collect();
    let x = 60.0;
    let exceed = norms.iter().filter(|&&v| v > x).count() as f64;
    let predicted = rate * tail.exceedance(x) * n as f64;
    // one large jump dominates; the second-order term is O(P(|J| > x)^2)
    assert!((exceed - predicted).abs() <= 4.0 * predicted.sqrt() + 0.05 * predicted, "{exceed} vs {predicted}");
    let zero = norms.iter().filter(|&&v| v == 0.0).count() as f64 / n as f64;
    assert!((zero - (-rate).exp()).abs() <= 4.0 * binomial_se((-rate).exp(), n));
}

#[test]
fn single_jump_time_is_uniform() {
    let m = 20;
    let g = Grid::new(m).unwrap();
    let tail = TailModel::new(1.0, 1.0, 0.5).unwrap();
    let n = 40_000;
    let key = StreamKey::new(104);
    let mut counts = vec![0usize; m + 1];
    for i in 0..n as u64 {
        let p = single_jump_path(&key.child(i), g, &tail).unwrap();
        let tau = p.values().iter().position(|&v| v != 0.0).unwrap();
        counts[tau] += 1;
    }
    assert_eq!(counts[0], 0);
    let expected = n as f64 / m as f64;
    let chi2: f64 = counts[1..].iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 19 degrees of freedom, 0.999 quantile
    assert!(chi2 < 43.82, "chi-square {chi2}");
}

#[test]
fn panels_from_distinct_keys_share_a_law() {
    let g = Grid::new(10).unwrap();
    let spec = InnovationSpec::CompoundPoisson {
        rate: 1.0,
        tail: TailModel::new(1.2, 1.0, 0.5).unwrap(),
    };
    let a: Vec<f64> = iid_panel(&StreamKey::new(105), &spec, g, 20_000)
        .unwrap()
        .iter()
        .map(|p| p.sup_norm())
        .collect();
    let b: Vec<f64> = iid_panel(&StreamKey::new(106), &spec, g, 20_000)
        .unwrap()
        .iter()
        .map(|p| p.sup_norm())
        .collect();
    let d = ks_two_sample(&a, &b).unwrap();
    // 0.999 critical value: 1.95 sqrt(2/n)
    assert!(d < 1.95 * (2.0 / 20_000f64).sqrt(), "{d}");
    assert_ne!(a, b);
}

#[test]
fn sre_log_coefficients_drift_at_mean_log_multiplier() {
    let g = Grid::new(1).unwrap();
    let law = MultiplierLaw::Uniform { lower: 0.0, upper: 0.9 };
    let family = CoefficientFamily::sre(law);
    let terms = 41;
    let samples = 4000;
    let mut slope = 0.0;
    for s in 0..samples as u64 {
        let d = generate_coefficients(&StreamKey::new(107).child(s), &family, g, terms).unwrap();
        slope += d.paths[terms - 1].values()[0].ln() / (terms - 1) as f64;
    }
    slope /= samples as f64;
    // E ln Y for Y ~ U(0, 0.9)
    let expected = 0.9f64.ln() - 1.0;
    // Var ln Y = 1, so the slope of one walk has SE 1/sqrt(40)
    let se = 1.0 / ((terms - 1) as f64).sqrt() / (samples as f64).sqrt();
    assert!((slope - expected).abs() <= 4.0 * se, "{slope} vs {expected}");
    assert!((law.log_moment() - expected).abs() < 1e-12);
}

#[test]
fn tail_constant_routes_agree() {
    let g = Grid::new(4).unwrap();
    let key = StreamKey::new(108);
    let geo = CoefficientFamily::geometric(0.5);
    let closed = series_tail_constant(&key, &geo, g, 1.0, 1.5, 10).unwrap();
    let mc = series_tail_constant_mc(&key, &geo, g, 1.0, 1.5, 100, 1000).unwrap();
    assert!((mc.value - closed.value).abs() <= 3.0 * mc.se + 1e-12, "{mc:?} {closed:?}");
    let sre = CoefficientFamily::sre(MultiplierLaw::Uniform { lower: 0.0, upper: 0.9 });
    let closed = series_tail_constant(&key, &sre, g, 0.25, 1.5, 10).unwrap();
    let mc = series_tail_constant_mc(&key, &sre, g, 0.25, 1.5, 20_000, 1000).unwrap();
    assert!((mc.value - closed.value).abs() <= 3.0 * mc.se, "{mc:?} {closed:?}");
}
