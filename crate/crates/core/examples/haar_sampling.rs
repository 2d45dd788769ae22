//! Haar sampling on SU(3), conjugacy classes in the alcove, and class-mode
//! sampling on G2, which has no matrix model here.

use brlie::gpoints::{conjugacy_log, haar_sample_streams, sample_classes_streams};
use brlie::RootSystem;

fn main() -> brlie::Result<()> {
    let su3 = RootSystem::from_spec_str("A2")?;
    let g = haar_sample_streams(&su3, 42, "example", 5)?;
    for (i, x) in g.iter().enumerate() {
        let c = conjugacy_log(&su3, x)?;
        println!(
            "g{i}: unitarity defect {:.1e}, class {:?}, d(g, e) = {:.4}",
            x.unitarity_defect(),
            c.xi,
            c.norm
        );
    }
    let prod = g[0].mul(&g[1]).mul(&g[2].inverse());
    println!(
        "g0 g1 g2⁻¹ stays special unitary: defect {:.1e}",
        prod.unitarity_defect()
    );

    let g2 = RootSystem::from_spec_str("G2")?;
    let s = sample_classes_streams(&g2, 42, "example", 1000)?;
    println!(
        "G2 class sampling: {} points, acceptance rate {:.3}",
        s.points.len(),
        s.acceptance_rate()
    );
    Ok(())
}
