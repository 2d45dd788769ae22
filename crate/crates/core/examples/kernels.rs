//! Central kernels on SU(2): the exact weight sum, the Poisson Γ-sum and its
//! main term, and the L¹ norms of the smooth kernels V_R.

use brlie::kernels::poisson::{kernel_poisson_auto, kernel_tilde, reference_calibration};
use brlie::kernels::{CentralKernel, RadialMultiplier, RadialTransform};
use brlie::RootSystem;

fn main() -> brlie::Result<()> {
    let rs = RootSystem::from_spec_str("A1")?;
    let cal = reference_calibration(&rs)?;
    let c = cal.constant();
    println!(
        "calibrated constant {c:.6} (analytic deviation {:.1e})",
        cal.analytic_deviation
    );

    let big_r = 12.0;
    let exact = CentralKernel::new(&rs, RadialMultiplier::BumpV, big_r)?;
    let t = RadialTransform::new(RadialMultiplier::BumpV, rs.dim)?;
    println!(
        "{:>8} {:>16} {:>16} {:>16}",
        "xi", "exact", "poisson", "main term"
    );
    for xi in [0.5, 1.5, 3.0, 6.0, 9.0] {
        let e = exact.eval(&[xi])?;
        let p = kernel_poisson_auto(&rs, &t, c, big_r, &[xi], 1e-6)?;
        let m = kernel_tilde(&rs, &t, c, big_r, &[xi])?;
        println!("{xi:>8.2} {e:>16.8e} {:>16.8e} {m:>16.8e}", p.value);
    }

    for big_r in [5.0, 10.0, 20.0, 40.0] {
        let v = CentralKernel::new(&rs, RadialMultiplier::BumpV, big_r)?;
        let l1 = v.l1_norm(&v.quadrature(4))?;
        println!("||V_{big_r}||_1 = {l1:.6}");
    }
    Ok(())
}
