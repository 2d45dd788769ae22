//! Root data of every supported group, with the ⟨ρ,ρ⟩ = n/24 check.

use brlie::rootsys::SUPPORTED_GROUPS;
use brlie::RootSystem;

fn main() -> brlie::Result<()> {
    println!(
        "{:<7} {:>3} {:>3} {:>4} {:>4} {:>14} {:>10}",
        "group", "n", "m", "|A+|", "|W|", "<rho,rho>-n/24", "r0"
    );
    for spec in SUPPORTED_GROUPS {
        let rs = RootSystem::from_spec_str(spec)?;
        let rho2 = rs.inner(&rs.rho, &rs.rho);
        println!(
            "{:<7} {:>3} {:>3} {:>4} {:>4} {:>14.2e} {:>10.5}",
            spec,
            rs.dim,
            rs.rank,
            rs.positive_roots.len(),
            rs.weyl_order(),
            rho2 - rs.dim as f64 / 24.0,
            rs.r0
        );
    }
    Ok(())
}
