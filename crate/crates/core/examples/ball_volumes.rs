//! Haar volumes of balls around the identity and the maximal function of an
//! empirical measure.

use brlie::gpoints::{empirical_measure, haar_sample_streams, GroupPoint};
use brlie::kernels::{maximal_function, BallVolumes};
use brlie::RootSystem;

fn main() -> brlie::Result<()> {
    let rs = RootSystem::from_spec_str("A1")?;
    let vols = BallVolumes::build(&rs, 1, 200_000)?;
    for f in [0.25, 0.5, 1.0, 2.0, 3.0] {
        let r = f * rs.r0;
        println!(
            "|B(e, {r:.3})| = {:.6}  (r^n ratio {:.5})",
            vols.volume(&rs, r)?,
            vols.volume(&rs, r)? / r.powi(3)
        );
    }
    let pts: Vec<GroupPoint> = haar_sample_streams(&rs, 3, "atoms", 64)?
        .into_iter()
        .map(GroupPoint::Matrix)
        .collect();
    let mu = empirical_measure(pts)?;
    let grid: Vec<f64> = (1..=30).map(|i| 0.05 * i as f64).collect();
    let x = GroupPoint::identity(&rs);
    println!(
        "M(mu)(e) over the grid = {:.4}",
        maximal_function(&rs, &mu, &x, &grid, &vols)?
    );
    Ok(())
}
