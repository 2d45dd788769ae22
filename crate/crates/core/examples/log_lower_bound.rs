//! ∫k_{R0} grows like log R0: the fitted slope c(G) on A1 and A2, against the
//! empirical averages over Haar samples.

use brlie::diverge::{empirical_k_average, k_profile_fit};
use brlie::gpoints::{empirical_measure, haar_sample_streams, GroupPoint};
use brlie::RootSystem;

fn main() -> brlie::Result<()> {
    for spec in ["A1", "A2"] {
        let rs = RootSystem::from_spec_str(spec)?;
        let fit = k_profile_fit(&rs, &[10.0, 1e2, 1e3, 1e4])?;
        println!(
            "{spec}: integrals {:?}\n    slope {:.6e}, R² {:.10}",
            fit.integrals, fit.fit.slope, fit.fit.r_squared
        );
    }
    let rs = RootSystem::from_spec_str("A1")?;
    let pts: Vec<GroupPoint> = haar_sample_streams(&rs, 9, "k-average", 20_000)?
        .into_iter()
        .map(GroupPoint::Matrix)
        .collect();
    let mu = empirical_measure(pts)?;
    let x = GroupPoint::identity(&rs);
    for r0 in [10.0, 100.0] {
        let exact = brlie::diverge::k_profile_integral(&rs, r0, 8)?;
        println!(
            "R0 = {r0}: empirical {:.5} vs integral {exact:.5}",
            empirical_k_average(&rs, &x, &mu, r0)?
        );
    }
    Ok(())
}
