//! Weyl dimensions and characters, and orthonormality of characters under the
//! Weyl integration formula on A2.

use brlie::weyl::{character, dimension, weyl_integrate, TorusQuadrature};
use brlie::RootSystem;
use num_complex::Complex64;

fn main() -> brlie::Result<()> {
    let rs = RootSystem::from_spec_str("A2")?;
    for c in [[0, 0], [1, 0], [1, 1], [2, 0], [3, 0], [2, 2]] {
        println!("dim V{c:?} = {}", dimension(&rs, &c)?);
    }
    let xi = [0.9, 2.1];
    println!("chi_(1,1)(exp xi) = {}", character(&rs, &[1, 1], &xi)?);

    let weights: Vec<[i64; 2]> = vec![[0, 0], [1, 0], [0, 1], [1, 1], [2, 0]];
    let quad = TorusQuadrature::for_max_frequency(2, 12);
    let mut worst: f64 = 0.0;
    for a in &weights {
        for b in &weights {
            let g = weyl_integrate(&rs, &quad, |x| {
                character(&rs, a, x).unwrap_or_default()
                    * character(&rs, b, x).unwrap_or_default().conj()
            });
            let want = if a == b {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
            worst = worst.max((g - want).norm());
        }
    }
    println!("max |<chi_a, chi_b> - delta_ab| = {worst:.2e}");
    Ok(())
}
