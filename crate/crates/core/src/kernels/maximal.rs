//! Haar volumes of balls around the identity and the maximal function of an
//! atomic measure.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpoints::{AtomicMeasure, GroupPoint};
use crate::numerics::{pairwise_sum, stream_rng};
use crate::rootsys::RootSystem;
use crate::weyl::{weyl_denominator, weyl_integrate_radial};

/// Default Monte Carlo sample count for the volume table.
pub const DEFAULT_VOLUME_SAMPLES: usize = 1_000_000;

const CHUNK: usize = 1 << 14;

/// |B(e, r)| under normalised Haar measure.
///
/// Up to 2r0 the volume is the radial integral of |D|²/|W| over the ball in
/// the Lie algebra of the torus; beyond it a seeded Monte Carlo table is used
/// (uniform torus samples weighted by |D|², keyed by their alcove norm).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BallVolumes {
    pub group: String,
    pub seed: u64,
    pub samples: usize,
    /// Radius up to which the exact integral is used.
    pub exact_below: f64,
    norms: Vec<f64>,
    cumulative: Vec<f64>,
}

type CacheKey = (String, u64, usize);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<BallVolumes>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<BallVolumes>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl BallVolumes {
    /// Cached table for (group, seed, samples).
    pub fn cached(rs: &RootSystem, seed: u64, samples: usize) -> Result<Arc<Self>> {
        let key = (rs.spec.to_string(), seed, samples);
        if let Some(v) = cache().lock().expect("volume cache poisoned").get(&key) {
            return Ok(v.clone());
        }
        let v = Arc::new(Self::build(rs, seed, samples)?);
        cache()
            .lock()
            .expect("volume cache poisoned")
            .insert(key, v.clone());
        Ok(v)
    }

    pub fn build(rs: &RootSystem, seed: u64, samples: usize) -> Result<Self> {
        if samples == 0 {
            return Err(Error::Empty("ball volume table needs samples".into()));
        }
        let m = rs.rank;
        let chunks = samples.div_ceil(CHUNK);
        let parts: Result<Vec<Vec<(f64, f64)>>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = stream_rng(seed, &format!("ball-volumes/{c}"));
                let n = CHUNK.min(samples - c * CHUNK);
                (0..n)
                    .map(|_| {
                        let xi: Vec<f64> = (0..m)
                            .map(|i| rng.random::<f64>() * rs.gamma[(i, i)])
                            .collect();
                        let d2 = weyl_denominator(rs, &xi).norm_sqr();
                        Ok((rs.norm(&rs.reduce_to_q(&xi)?), d2))
                    })
                    .collect()
            })
            .collect();
        let mut pts: Vec<(f64, f64)> = parts?.into_iter().flatten().collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let scale = 1.0 / (samples as f64 * rs.weyl_order() as f64);
        let mut acc = 0.0;
        let mut norms = Vec::with_capacity(pts.len());
        let mut cumulative = Vec::with_capacity(pts.len());
        for (r, w) in pts {
            acc += w * scale;
            norms.push(r);
            cumulative.push(acc);
        }
        Ok(Self {
            group: rs.spec.to_string(),
            seed,
            samples,
            exact_below: 2.0 * rs.r0,
            norms,
            cumulative,
        })
    }

    /// Monte Carlo estimate of |B(e, r)|.
    pub fn monte_carlo(&self, r: f64) -> f64 {
        let k = self.norms.partition_point(|&v| v < r);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    /// Total mass of the table; 1 up to sampling error.
    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// |B(e, r)|, exact below 2r0.
    pub fn volume(&self, rs: &RootSystem, r: f64) -> Result<f64> {
        if r <= 0.0 {
            return Ok(0.0);
        }
        if r <= self.exact_below {
            return weyl_integrate_radial(rs, |_| 1.0, &[0.0, r], 4, 16);
        }
        Ok(self.monte_carlo(r))
    }
}

/// M(ν)(x) = max over the grid of |ν|(B(x, r)) / |B(x, r)|.
pub fn maximal_function(
    rs: &RootSystem,
    nu: &AtomicMeasure,
    x: &GroupPoint,
    r_grid: &[f64],
    volumes: &BallVolumes,
) -> Result<f64> {
    if r_grid.is_empty() {
        return Err(Error::Empty("maximal function needs a radius grid".into()));
    }
    let dists: Vec<f64> = nu
        .quotient_classes(rs, x)?
        .into_iter()
        .map(|c| c.norm)
        .collect();
    let mut best: f64 = 0.0;
    for &r in r_grid {
        let mass: Vec<f64> = dists
            .iter()
            .zip(&nu.weights)
            .filter(|(d, _)| **d < r)
            .map(|(_, w)| w.abs())
            .collect();
        let vol = volumes.volume(rs, r)?;
        if vol > 0.0 {
            best = best.max(pairwise_sum(&mass) / vol);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rs(s: &str) -> RootSystem {
        RootSystem::from_spec_str(s).unwrap()
    }

    #[test]
    fn exact_and_sampled_volumes_agree() {
        for s in ["A1", "A2", "A1xA1", "G2"] {
            let r = rs(s);
            let v = BallVolumes::build(&r, 1, 200_000).unwrap();
            assert!((v.total() - 1.0).abs() < 0.02, "{s}: total {}", v.total());
            for f in [0.5, 1.0, 1.5, 2.0] {
                let rad = f * r.r0;
                let exact = v.volume(&r, rad).unwrap();
                let mc = v.monte_carlo(rad);
                // binomial-type error of the weighted indicator
                let sd =
                    (exact / 200_000.0).sqrt() * 4f64.powi(r.positive_roots.len() as i32 / 2 + 1);
                assert!(
                    (exact - mc).abs() < 5.0 * sd + 1e-4,
                    "{s} r={rad}: {exact} vs {mc}"
                );
            }
        }
    }

    #[test]
    fn rank_one_volume_closed_form() {
        // SU(2): |B(e, r)| = (2/π) ∫_0^θ sin² with θ = r/|ξ|-per-radian.
        let r = rs("A1");
        let v = BallVolumes::build(&r, 2, 1000).unwrap();
        let a = r.positive_roots[0].norm2.sqrt();
        for rad in [0.1, 0.5, 1.0, 2.0] {
            let theta = (0.5 * a * rad).min(PI);
            let want = (theta - theta.sin() * theta.cos()) / PI;
            let got = v.volume(&r, rad).unwrap();
            assert!((got - want).abs() < 1e-12, "r={rad}: {got} vs {want}");
        }
    }

    #[test]
    fn ahlfors_regular_near_the_identity() {
        let r = rs("A1");
        let v = BallVolumes::build(&r, 3, 1000).unwrap();
        let n = r.dim as i32;
        let ratios: Vec<f64> = (0..10)
            .map(|i| {
                let rad = 0.05 + 0.05 * i as f64;
                v.volume(&r, rad).unwrap() / rad.powi(n)
            })
            .collect();
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        assert!(lo > 0.0 && hi / lo < 1.5, "{ratios:?}");
    }

    #[test]
    fn maximal_function_dominates_the_mass() {
        let r = rs("A1");
        let v = BallVolumes::build(&r, 4, 50_000).unwrap();
        let nu = AtomicMeasure::dirac(GroupPoint::identity(&r));
        let x = GroupPoint::Matrix(crate::gpoints::GroupElement::from_torus(&r, &[2.0]).unwrap());
        let grid: Vec<f64> = (1..=20).map(|i| 0.5 * i as f64).collect();
        let m = maximal_function(&r, &nu, &x, &grid, &v).unwrap();
        assert!(m >= nu.mass() - 0.02, "{m}");
        assert!(matches!(
            maximal_function(&r, &nu, &x, &[], &v),
            Err(Error::Empty(_))
        ));
    }
}
