//! Statistical checks on Haar sampling and empirical measures.

use brlie::gpoints::{conjugacy_log, haar_sample_streams, GroupElement};
use brlie::numerics::linear_fit;
use brlie::weyl::character;
use brlie::RootSystem;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn rs(s: &str) -> RootSystem {
    RootSystem::from_spec_str(s).unwrap()
}

/// Eigenangle θ ∈ [0, π] of an SU(2) element with eigenvalues e^{±iθ}.
fn su2_angle(g: &GroupElement) -> f64 {
    g.eigenphases().unwrap()[0][0].abs()
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn haar_samples_are_orthogonal_to_nontrivial_characters() {
    let su3 = rs("A2");
    let n = 100_000;
    let classes: Vec<Vec<f64>> = haar_sample_streams(&su3, 1, "orthogonality", n)
        .unwrap()
        .iter()
        .map(|g| conjugacy_log(&su3, g).unwrap().xi)
        .collect();
    let band = 5.0 / (n as f64).sqrt();
    for lambda in [[1, 0], [0, 1], [1, 1], [2, 0], [3, 0]] {
        let mean = classes
            .iter()
            .map(|x| character(&su3, &lambda, x).unwrap())
            .sum::<num_complex::Complex64>()
            / n as f64;
        assert!(
            mean.norm() < band,
            "{lambda:?}: |mean| = {:.3e} vs band {band:.3e}",
            mean.norm()
        );
    }
    let trivial: f64 = classes
        .iter()
        .map(|x| character(&su3, &[0, 0], x).unwrap().re)
        .sum::<f64>()
        / n as f64;
    assert_eq!(trivial, 1.0);
}

#[test]
fn su2_eigenangles_follow_the_weyl_density() {
    let su2 = rs("A1");
    let n = 100_000;
    let bins = 20;
    let mut counts = vec![0usize; bins];
    for g in haar_sample_streams(&su2, 2, "eigenangles", n).unwrap() {
        let t = su2_angle(&g);
        counts[((t / std::f64::consts::PI * bins as f64) as usize).min(bins - 1)] += 1;
    }
    // CDF of (2/π) sin²θ on [0, π].
    let cdf = |t: f64| (t - t.sin() * t.cos()) / std::f64::consts::PI;
    let chi2: f64 = (0..bins)
        .map(|k| {
            let a = std::f64::consts::PI * k as f64 / bins as f64;
            let b = std::f64::consts::PI * (k + 1) as f64 / bins as f64;
            let want = n as f64 * (cdf(b) - cdf(a));
            (counts[k] as f64 - want).powi(2) / want
        })
        .sum();
    let critical = ChiSquared::new((bins - 1) as f64)
        .unwrap()
        .inverse_cdf(0.99);
    assert!(chi2 < critical, "χ² = {chi2:.2} ≥ {critical:.2}");
}

#[test]
fn left_translation_preserves_the_haar_distribution() {
    let su2 = rs("A1");
    let n = 20_000;
    let g = haar_sample_streams(&su2, 3, "translate-by", 1)
        .unwrap()
        .remove(0);
    let shifted: Vec<f64> = haar_sample_streams(&su2, 3, "translated", n)
        .unwrap()
        .iter()
        .map(|y| su2_angle(&g.mul(y)))
        .collect();
    let fresh: Vec<f64> = haar_sample_streams(&su2, 3, "reference", n)
        .unwrap()
        .iter()
        .map(su2_angle)
        .collect();
    let d = ks_statistic(shifted, fresh);
    // 1% critical value of the two-sample test
    let critical = 1.628 * (2.0 / n as f64).sqrt();
    assert!(d < critical, "KS {d:.4} ≥ {critical:.4}");
}

#[test]
fn empirical_measures_converge_weakly() {
    let su3 = rs("A2");
    let total = 100_000;
    let classes: Vec<Vec<f64>> = haar_sample_streams(&su3, 4, "glivenko-cantelli", total)
        .unwrap()
        .iter()
        .map(|g| conjugacy_log(&su3, g).unwrap().xi)
        .collect();
    // Dictionary of central functions with known Haar integrals.
    let dictionary: Vec<(Box<dyn Fn(&[f64]) -> f64>, f64)> = vec![
        (Box::new(|x| character(&su3, &[1, 0], x).unwrap().re), 0.0),
        (Box::new(|x| character(&su3, &[1, 1], x).unwrap().re), 0.0),
        (Box::new(|x| character(&su3, &[2, 1], x).unwrap().im), 0.0),
        (
            Box::new(|x| character(&su3, &[1, 0], x).unwrap().norm_sqr()),
            1.0,
        ),
        (
            Box::new(|x| character(&su3, &[1, 1], x).unwrap().norm_sqr()),
            1.0,
        ),
    ];
    let values: Vec<Vec<f64>> = dictionary
        .iter()
        .map(|(f, _)| classes.iter().map(|x| f(x)).collect())
        .collect();
    let sizes = [100usize, 1_000, 10_000, 100_000];
    let errors: Vec<f64> = sizes
        .iter()
        .map(|&n| {
            values
                .iter()
                .zip(&dictionary)
                .map(|(v, (_, want))| (v[..n].iter().sum::<f64>() / n as f64 - want).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let fit = linear_fit(
        &sizes.iter().map(|&n| (n as f64).ln()).collect::<Vec<_>>(),
        &errors.iter().map(|e| e.ln()).collect::<Vec<_>>(),
    );
    assert!(
        fit.slope < -0.25 && fit.slope > -0.8,
        "slope {} from {errors:?}",
        fit.slope
    );
    assert!(errors[3] < errors[0], "{errors:?}");
}

#[test]
fn long_products_stay_unitary() {
    for spec in ["A1", "A2", "A1xA1"] {
        let r = rs(spec);
        let mut acc = GroupElement::identity(&r).unwrap();
        for g in haar_sample_streams(&r, 5, "products", 1000).unwrap() {
            acc = acc.mul_stable(&g);
        }
        assert!(
            acc.unitarity_defect() < 1e-8,
            "{spec}: {}",
            acc.unitarity_defect()
        );
        assert!(conjugacy_log(&r, &acc).is_ok());
    }
}
