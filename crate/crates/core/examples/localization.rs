//! Kernel blow-up on shrinking annuli in SU(3), and decay of Bochner-Riesz
//! means at a point where the function vanishes nearby.

use brlie::localize::{
    ae_localization_check, annulus_blowup_scan, AnnulusConfig, LocalizationConfig,
};
use brlie::RootSystem;

fn main() -> brlie::Result<()> {
    let su3 = RootSystem::from_spec_str("A2")?;
    for f in [0.2, 0.1, 0.05] {
        let s = annulus_blowup_scan(&su3, f * su3.r0, &AnnulusConfig::default())?;
        println!(
            "eps = {f}·r0: annulus sup {:.3e}, lattice-shift part {:.3e}, rank correlation with driver {:.3}",
            s.annulus_sup, s.shifted_annulus_sup, s.rank_correlation
        );
    }
    for spec in ["A1", "A2"] {
        let rs = RootSystem::from_spec_str(spec)?;
        let r = ae_localization_check(&rs, &LocalizationConfig::default())?;
        println!(
            "{spec}: admissible {}, first-half max {:.3e}, second-half max {:.3e}",
            r.admissible, r.first_half_max, r.second_half_max
        );
    }
    Ok(())
}
