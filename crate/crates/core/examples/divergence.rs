//! A divergence certificate on SU(2) at a small level with a reduced probe grid.

use brlie::diverge::{find_divergence_measure, DivergenceConfig};
use brlie::RootSystem;

fn main() -> brlie::Result<()> {
    let rs = RootSystem::from_spec_str("A1")?;
    let cfg = DivergenceConfig {
        probes: 40,
        n_max: 64,
        budget: 20_000,
        ..DivergenceConfig::default()
    };
    for level in [1.5, 2.0] {
        let run = find_divergence_measure(&rs, level, 0.1, &cfg)?;
        let r = &run.report;
        println!(
            "L = {level}: R0 = {:.3e}, N = {}, baseline pass {:.3}, pass rate {:.3}, certified {}",
            r.scale, r.n_points, r.baseline_pass_rate, r.pass_rate, r.certified
        );
    }
    Ok(())
}
