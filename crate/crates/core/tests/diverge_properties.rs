//! End-to-end properties of the divergence machinery on SU(2).

use brlie::diverge::{
    alignment_target, asymptotic_onset, construction_stage, empirical_k_average,
    find_divergence_measure, independence_probe, k_profile_fit, k_profile_integral,
    kronecker_sup_search, kronecker_terms, window_for_budget, ConstructionStage, DivergenceConfig,
    KroneckerTerm, PsiProfile,
};
use brlie::gpoints::{empirical_measure, haar_sample_streams, GroupPoint};
use brlie::kernels::maximal::BallVolumes;
use brlie::kernels::poisson::reference_calibration;
use brlie::kernels::{CentralKernel, RadialMultiplier};
use brlie::weyl::weyl_integrate_radial;
use brlie::RootSystem;
use proptest::prelude::*;

fn a1() -> RootSystem {
    RootSystem::from_spec_str("A1").unwrap()
}

#[test]
fn haar_sampled_norms_show_no_small_relation() {
    let rs = a1();
    for trial in 0..100 {
        let ys: Vec<GroupPoint> = haar_sample_streams(&rs, 11, &format!("relation/{trial}/y"), 4)
            .unwrap()
            .into_iter()
            .map(GroupPoint::Matrix)
            .collect();
        let x = GroupPoint::Matrix(
            haar_sample_streams(&rs, 11, &format!("relation/{trial}/x"), 1)
                .unwrap()
                .remove(0),
        );
        let norms: Vec<f64> = empirical_measure(ys)
            .unwrap()
            .quotient_classes(&rs, &x)
            .unwrap()
            .iter()
            .map(|c| c.norm)
            .collect();
        let v = independence_probe(&norms, 50, 1e-8).unwrap();
        assert!(v.independent(), "trial {trial}: {v:?}");
    }
}

#[test]
fn empirical_k_average_matches_the_integral() {
    let rs = a1();
    let scale = 10.0;
    let n = 100_000;
    let psi = PsiProfile::new(&rs, scale).unwrap();
    let breaks = [0.0, 1.0 / scale, rs.r0, 2.0 * rs.r0];
    let mean = k_profile_integral(&rs, scale, 8).unwrap();
    let second = weyl_integrate_radial(&rs, |r| psi.value(r).powi(2), &breaks, 8, 20).unwrap();
    let sigma = ((second - mean * mean) / n as f64).sqrt();
    let pts: Vec<GroupPoint> = haar_sample_streams(&rs, 12, "k-average", n)
        .unwrap()
        .into_iter()
        .map(GroupPoint::Matrix)
        .collect();
    let mu = empirical_measure(pts).unwrap();
    for x in [
        GroupPoint::identity(&rs),
        GroupPoint::Matrix(haar_sample_streams(&rs, 12, "k-x", 1).unwrap().remove(0)),
    ] {
        let got = empirical_k_average(&rs, &x, &mu, scale).unwrap();
        assert!(
            (got - mean).abs() < 3.0 * sigma,
            "{got} vs {mean} ± {sigma}"
        );
    }
}

#[test]
fn measures_far_from_the_probe_average_to_zero() {
    let rs = a1();
    // ⟨α, ξ⟩ between 3π/2 and 2π: beyond 2r0 but inside the alcove.
    let pts: Vec<GroupPoint> = [3.3, 3.6, 3.9]
        .iter()
        .map(|&t| GroupPoint::Class(vec![2.0 * t / rs.gram[(0, 0)]]))
        .collect();
    for p in &pts {
        assert!(p.class(&rs).unwrap().norm > 2.0 * rs.r0);
    }
    let mu = empirical_measure(pts).unwrap();
    assert_eq!(
        empirical_k_average(&rs, &GroupPoint::identity(&rs), &mu, 50.0).unwrap(),
        0.0
    );
}

#[test]
fn inner_plateau_bounds_the_integral_from_below() {
    let rs = a1();
    let vols = BallVolumes::build(&rs, 1, 1000).unwrap();
    let mut plateaus = Vec::new();
    for scale in [10.0, 100.0, 1000.0] {
        let plateau = vols.volume(&rs, 1.0 / scale).unwrap() * scale.powi(rs.dim as i32);
        assert!(k_profile_integral(&rs, scale, 8).unwrap() >= plateau);
        plateaus.push(plateau);
    }
    // Ahlfors regularity: the plateau contribution is of constant order.
    let (lo, hi) = plateaus
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &p| (a.min(p), b.max(p)));
    assert!(lo > 0.0 && hi / lo < 1.1, "{plateaus:?}");
}

#[test]
fn rank_one_slope_matches_the_small_ball_density() {
    // Near the identity |D|² ∼ c r², giving ∫ r⁻³ c r² dr = c log(r0 R0):
    // c = (2/π)(|α|/2)³ from the SU(2) ball volume (θ − sinθ cosθ)/π.
    let rs = a1();
    let a = rs.positive_roots[0].norm2.sqrt();
    let c = 2.0 / std::f64::consts::PI * (a / 2.0).powi(3);
    let fit = k_profile_fit(&rs, &[10.0, 1e2, 1e3, 1e4]).unwrap();
    assert!(
        (fit.fit.slope / c - 1.0).abs() < 0.01,
        "{} vs {c}",
        fit.fit.slope
    );
}

#[test]
fn baseline_matches_the_single_cosine_oracle() {
    let rs = a1();
    let c = reference_calibration(&rs).unwrap().constant();
    let probes = haar_sample_streams(&rs, 2024, "probes", 40).unwrap();
    let mu = brlie::gpoints::AtomicMeasure::dirac(GroupPoint::identity(&rs));
    let mut above = 0;
    for x in probes {
        let x = GroupPoint::Matrix(x);
        let terms = kronecker_terms(&rs, c, &mu.quotient_classes(&rs, &x).unwrap(), &mu.weights);
        let target = alignment_target(rs.dim, &terms);
        if target == 0.0 {
            continue;
        }
        let lo = asymptotic_onset(rs.dim, &terms, 0.01);
        let s = kronecker_sup_search(
            rs.dim,
            &terms,
            lo,
            window_for_budget(&terms, lo, 20_000),
            20_000,
        )
        .unwrap();
        assert!((s.ratio() - 1.0).abs() < 1e-3, "ratio {}", s.ratio());
        if s.achieved_sup > 2.0 {
            above += 1;
        }
    }
    assert!(above > 0);
}

#[test]
fn easy_levels_are_certified_by_the_identity() {
    let rs = a1();
    let cfg = DivergenceConfig {
        probes: 40,
        budget: 10_000,
        ..DivergenceConfig::default()
    };
    let run = find_divergence_measure(&rs, 1.01, 0.8, &cfg).unwrap();
    assert!(run.report.certified);
    assert_eq!(run.report.n_points, 1);
    assert_eq!(run.measure.len(), 1);
    assert!(run.measure.points[0].is_identity(&rs));
}

#[test]
fn k_averages_clear_the_log_threshold_for_large_n() {
    // R0 for L = 2, and the threshold k-slope · log R0 used by calibration.
    let rs = a1();
    let cfg = DivergenceConfig::default();
    let report = find_divergence_measure(
        &rs,
        2.0,
        0.1,
        &DivergenceConfig {
            probes: 4,
            budget: 8192,
            n_max: 8,
            max_retries: 0,
            ..cfg
        },
    )
    .unwrap()
    .report;
    let threshold = report.k_fit.fit.slope * report.scale.ln();
    let probes: Vec<GroupPoint> = haar_sample_streams(&rs, 2024, "probes", 40)
        .unwrap()
        .into_iter()
        .map(GroupPoint::Matrix)
        .collect();
    let mut rates = Vec::new();
    let mut n = 64;
    while n <= 1 << 15 {
        let pts: Vec<GroupPoint> = haar_sample_streams(&rs, 2024, &format!("k-calibration/{n}"), n)
            .unwrap()
            .into_iter()
            .map(GroupPoint::Matrix)
            .collect();
        let mu = empirical_measure(pts).unwrap();
        let pass = probes
            .iter()
            .filter(|x| empirical_k_average(&rs, x, &mu, report.scale).unwrap() >= threshold)
            .count() as f64
            / probes.len() as f64;
        rates.push((n, pass));
        if pass >= 0.9 {
            break;
        }
        n *= 2;
    }
    assert!(rates.last().unwrap().1 >= 0.9, "{rates:?}");
    assert!(rates.last().unwrap().1 >= rates[0].1, "{rates:?}");
}

#[test]
fn stages_keep_their_invariants() {
    let rs = a1();
    for seed in [1, 2] {
        let cfg = DivergenceConfig {
            seed,
            probes: 12,
            n_max: 16,
            budget: 4_000,
            max_retries: 0,
            ..DivergenceConfig::default()
        };
        let first = ConstructionStage::seed(&rs);
        assert_eq!((first.eta, first.scale, first.n_points), (0.5, 2.0, 1));
        let stage = match construction_stage(&rs, &first, &cfg).unwrap() {
            Ok(s) => s,
            Err(f) => f.stage,
        };
        assert!(stage.invariants_hold(), "seed {seed}");
        assert!(stage.eta <= first.eta / 2.0 && stage.eta * stage.kbar_sup <= 1.0);
        assert!(stage.scale > 6.0 * first.scale);
        assert!(stage.third_term_max <= 2.0);
    }
}

#[test]
fn partial_sums_have_controlled_l1_norm() {
    let rs = a1();
    let cfg = DivergenceConfig {
        probes: 12,
        n_max: 16,
        budget: 4_000,
        max_retries: 0,
        ..DivergenceConfig::default()
    };
    let first = ConstructionStage::seed(&rs);
    let second = match construction_stage(&rs, &first, &cfg).unwrap() {
        Ok(s) => s,
        Err(f) => f.stage,
    };
    let stages = [&first, &second];
    let kernels: Vec<CentralKernel> = stages
        .iter()
        .map(|s| CentralKernel::new(&rs, RadialMultiplier::BumpV, s.scale).unwrap())
        .collect();
    let sup_l1 = kernels
        .iter()
        .map(|k| k.l1_norm(&k.quadrature(8)).unwrap())
        .fold(0.0, f64::max);
    let bound = sup_l1 * stages.iter().map(|s| s.eta).sum::<f64>();
    let n = 20_000;
    let xs = haar_sample_streams(&rs, 13, "partial-sum", n).unwrap();
    let vals: Vec<f64> = xs
        .into_iter()
        .map(|x| {
            let x = GroupPoint::Matrix(x);
            stages
                .iter()
                .zip(&kernels)
                .map(|(s, k)| {
                    let mu = s.measure.as_ref().expect("stage measure");
                    s.eta * mu.convolve_central(&rs, &x, |c| k.eval(&c.xi)).unwrap()
                })
                .sum::<f64>()
                .abs()
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / n as f64;
    let sd =
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt();
    assert!(
        mean - 3.0 * sd <= bound,
        "‖f_J‖₁ ≈ {mean} ± {sd} vs {bound}"
    );
    assert!(mean > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn profile_shape(scale in 3.0f64..1e4, t in 0.0f64..1.0) {
        let rs = a1();
        let psi = PsiProfile::new(&rs, scale).unwrap();
        let n = rs.dim as i32;
        let inner = t / scale;
        prop_assert_eq!(psi.value(inner), scale.powi(n));
        let mid = 1.0 / scale + t * (rs.r0 - 1.0 / scale);
        prop_assert!((psi.value(mid) - mid.powi(-n)).abs() <= 1e-12 * mid.powi(-n));
        let outer = rs.r0 * (1.0 + t);
        prop_assert!(psi.value(outer) <= outer.powi(-n));
        prop_assert_eq!(psi.value(2.0 * rs.r0 + t), 0.0);
        // continuity at the breaks
        for b in [1.0 / scale, rs.r0] {
            prop_assert!((psi.value(b * (1.0 + 1e-9)) / psi.value(b) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn search_is_monotone_in_budget(
        norms in proptest::collection::vec(0.3f64..4.0, 1..4),
        amps in proptest::collection::vec(0.5f64..2.0, 3),
        small in 1usize..4,
    ) {
        let terms: Vec<KroneckerTerm> = norms
            .iter()
            .zip(&amps)
            .map(|(&norm, &amplitude)| KroneckerTerm { norm, amplitude, weight: 1.0 / norms.len() as f64 })
            .collect();
        let n = 3;
        let lo = asymptotic_onset(n, &terms, 0.01);
        let block = brlie::diverge::search_block_cost();
        let big = 4 * block;
        let hi = window_for_budget(&terms, lo, big);
        let a = kronecker_sup_search(n, &terms, lo, hi, small * block).unwrap();
        let b = kronecker_sup_search(n, &terms, lo, hi, big).unwrap();
        prop_assert!(b.achieved_sup >= a.achieved_sup);
        prop_assert!(a.evaluations <= small * block && b.evaluations <= big);
    }
}
