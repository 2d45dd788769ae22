//! Rational-independence probe and the phase-alignment search for a few
//! Haar-sampled classes, plus a commensurate negative control.

use brlie::diverge::{
    asymptotic_onset, commensurate_ceiling, independence_probe, kronecker_sup_search,
    kronecker_terms, remainder_bound, window_for_budget, KroneckerTerm,
};
use brlie::gpoints::{empirical_measure, haar_sample_streams, GroupPoint};
use brlie::kernels::poisson::reference_calibration;
use brlie::RootSystem;

fn main() -> brlie::Result<()> {
    let rs = RootSystem::from_spec_str("A1")?;
    let c = reference_calibration(&rs)?.constant();
    let ys: Vec<GroupPoint> = haar_sample_streams(&rs, 3, "kronecker/y", 4)?
        .into_iter()
        .map(GroupPoint::Matrix)
        .collect();
    let x = GroupPoint::Matrix(haar_sample_streams(&rs, 3, "kronecker/x", 1)?.remove(0));
    let mu = empirical_measure(ys)?;
    let classes = mu.quotient_classes(&rs, &x)?;
    let norms: Vec<f64> = classes.iter().map(|c| c.norm).collect();
    println!("norms {norms:?}");
    println!(
        "relation search (|c| ≤ 50): {:?}",
        independence_probe(&norms, 50, 1e-8)?
    );

    let terms = kronecker_terms(&rs, c, &classes, &mu.weights);
    let lo = asymptotic_onset(rs.dim, &terms, 0.01);
    let hi = window_for_budget(&terms, lo, 1_000_000);
    let s = kronecker_sup_search(rs.dim, &terms, lo, hi, 1_000_000)?;
    println!(
        "sup {:.5} at R = {:.2}, target {:.5}, ratio {:.4}",
        s.achieved_sup,
        s.witness_r,
        s.theoretical_target,
        s.ratio()
    );

    let base = 0.9;
    let planted: Vec<KroneckerTerm> = [1.0, 2.0, 3.0]
        .iter()
        .map(|&k| KroneckerTerm {
            norm: k * base,
            amplitude: 1.0,
            weight: 1.0 / 3.0,
        })
        .collect();
    let lo = asymptotic_onset(rs.dim, &planted, 0.01);
    let s = kronecker_sup_search(
        rs.dim,
        &planted,
        lo,
        window_for_budget(&planted, lo, 1_000_000),
        1_000_000,
    )?;
    // The leading-term ceiling plus the Bessel correction still present at R_lo.
    let ceiling = commensurate_ceiling(rs.dim, &planted, base, 4096);
    println!(
        "commensurate 1:2:3 -> sup {:.5}, ceiling {:.5} + {:.1e}, target {:.5}",
        s.achieved_sup,
        ceiling,
        remainder_bound(rs.dim, &planted, lo),
        s.theoretical_target
    );
    Ok(())
}
