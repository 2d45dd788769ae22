//! Localization experiments: blow-up of the critical kernel on small annuli
//! around the identity (rank ≥ 2), and decay of Bochner-Riesz means at points
//! of an open set where the function vanishes.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::gpoints::{conjugacy_log, haar_sample_streams, GroupElement};
use crate::kernels::poisson::{gamma_points, poisson_constant};
use crate::kernels::{
    bochner_riesz_transform_constant, critical_index, RadialMultiplier, RadialTransform,
};
use crate::numerics::{linear_fit, pairwise_sum, spearman, stream_rng, LinearFit};
use crate::rootsys::RootSystem;
use crate::weyl::{
    max_orbit_coordinate, weyl_denominator, weyl_integrate_real, CharacterProjector, ExpSum,
    TorusQuadrature,
};

fn root_pairings(rs: &RootSystem, v: &[f64]) -> Vec<f64> {
    rs.positive_roots
        .iter()
        .map(|r| r.dual.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Smallest nonzero γ ∈ Γ with |⟨α,γ⟩| ≥ 2|⟨α,ξ⟩| for every root it does not
/// annihilate; ties are broken by the lexicographic order of coefficients.
pub fn doubling_shift(rs: &RootSystem, xi: &[f64]) -> Result<Vec<f64>> {
    let p = root_pairings(rs, xi);
    let mut radius = 2.0
        * (0..rs.rank)
            .map(|i| rs.norm(&rs.gamma_vector(i)))
            .fold(0.0, f64::max);
    for _ in 0..8 {
        for (c, g) in gamma_points(rs, radius) {
            if c.iter().all(|&x| x == 0) {
                continue;
            }
            let q = root_pairings(rs, &g);
            if q.iter()
                .zip(&p)
                .all(|(a, b)| a.abs() < 1e-9 || a.abs() >= 2.0 * b.abs())
            {
                return Ok(g);
            }
        }
        radius *= 2.0;
    }
    Err(Error::Numerical(format!(
        "no doubling shift found for ξ = {xi:?}"
    )))
}

/// 1 / |Π_{α: ⟨α,γ0⟩ ≠ 0} ⟨α,ξ⟩|.
pub fn blowup_driver(rs: &RootSystem, xi: &[f64], shift: &[f64]) -> f64 {
    let p = root_pairings(rs, xi);
    let q = root_pairings(rs, shift);
    1.0 / p
        .iter()
        .zip(&q)
        .filter(|(_, b)| b.abs() >= 1e-9)
        .map(|(a, _)| a.abs())
        .product::<f64>()
}

/// Settings for [`annulus_blowup_scan`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusConfig {
    pub seed: u64,
    /// Radial and angular node counts of the annulus grid.
    pub radial: usize,
    pub angular: usize,
    /// Start of the R window.
    pub r_start: f64,
    /// The window covers this many beat periods 2π/ε of the shortest shifts.
    pub beat_periods: f64,
    /// Γ-sum cut as a multiple of |γ0|.
    pub cut_factor: f64,
}

impl Default for AnnulusConfig {
    fn default() -> Self {
        Self {
            seed: 11,
            radial: 4,
            angular: 12,
            r_start: 20.0,
            beat_periods: 2.0,
            cut_factor: 6.0,
        }
    }
}

/// One annulus node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnulusPoint {
    pub xi: Vec<f64>,
    pub norm: f64,
    /// sup over the R window of the full Γ-sum |K_R(exp ξ)|.
    pub sup: f64,
    /// sup over the window of the γ ≠ 0 part alone.
    pub shifted_sup: f64,
    pub driver: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnulusScan {
    pub group: String,
    pub epsilon: f64,
    pub r_window: (f64, f64),
    pub r_step: f64,
    pub cut: f64,
    pub shift: Vec<f64>,
    pub points: Vec<AnnulusPoint>,
    pub annulus_sup: f64,
    pub shifted_annulus_sup: f64,
    /// Spearman correlation of the γ ≠ 0 sup with the driver.
    pub rank_correlation: f64,
}

/// Jittered polar grid with ε < |ξ| < 2ε, keeping off the walls.
fn annulus_grid(rs: &RootSystem, eps: f64, cfg: &AnnulusConfig) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(cfg.seed, &format!("annulus/{eps:.6e}"));
    // Orthonormal frame of the Killing metric via the Cholesky factor.
    let l = rs
        .gram
        .clone()
        .cholesky()
        .expect("Killing form is positive")
        .l();
    let lt_inv = l.transpose().try_inverse().expect("invertible");
    let mut out = Vec::new();
    for i in 0..cfg.radial {
        for j in 0..cfg.angular {
            loop {
                let s = (i as f64 + rng.random::<f64>()) / cfg.radial as f64;
                let r = eps * (1.0 + s.clamp(0.01, 0.99));
                let dir: Vec<f64> = if rs.rank == 2 {
                    let t = 2.0 * PI * (j as f64 + rng.random::<f64>()) / cfg.angular as f64;
                    vec![t.cos(), t.sin()]
                } else {
                    let g: Vec<f64> = (0..rs.rank)
                        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                        .collect();
                    let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                    g.iter().map(|x| x / n).collect()
                };
                let xi: Vec<f64> = (0..rs.rank)
                    .map(|a| r * (0..rs.rank).map(|b| lt_inv[(a, b)] * dir[b]).sum::<f64>())
                    .collect();
                if weyl_denominator(rs, &xi).norm() > 1e-14 {
                    out.push(xi);
                    break;
                }
            }
        }
    }
    out
}

/// Sup over an R window of the critical kernel K_R(exp ξ) for ξ on the annulus
/// ε < |ξ| < 2ε, evaluated by the Γ-sum, alongside the blow-up driver.
pub fn annulus_blowup_scan(
    rs: &RootSystem,
    epsilon: f64,
    cfg: &AnnulusConfig,
) -> Result<AnnulusScan> {
    if rs.rank < 2 {
        return Err(Error::Hypothesis(format!(
            "pointwise localization only fails in rank ≥ 2; {} has rank {}",
            rs.spec, rs.rank
        )));
    }
    if !(epsilon > 0.0 && 2.0 * epsilon < rs.r0) {
        return Err(Error::Config(format!(
            "need 0 < 2ε < r0 = {:.4} (got ε = {epsilon})",
            rs.r0
        )));
    }
    let n = rs.dim;
    let t = RadialTransform::new(RadialMultiplier::critical(rs), n)?;
    let c = poisson_constant(rs);
    let grid = annulus_grid(rs, epsilon, cfg);
    // γ0 is the same for every node once ε is small; take it at the outer edge.
    let shift = doubling_shift(rs, &grid[0])?;
    let g0 = rs.norm(&shift);
    let cut = cfg.cut_factor * g0;
    let gammas = gamma_points(rs, cut);
    let r_step = PI / (4.0 * (g0 + 2.0 * epsilon));
    let r_end = cfg.r_start + cfg.beat_periods * 2.0 * PI / epsilon;
    let steps = ((r_end - cfg.r_start) / r_step).ceil() as usize;
    let rn_scale = |r: f64| r.powi(n as i32);

    let points: Vec<AnnulusPoint> = grid
        .par_iter()
        .map(|xi| {
            let d = weyl_denominator(rs, xi);
            let terms: Vec<(bool, f64, f64)> = gammas
                .iter()
                .map(|(coef, g)| {
                    let y: Vec<f64> = xi.iter().zip(g).map(|(a, b)| a + b).collect();
                    let poly: f64 = root_pairings(rs, &y).iter().product();
                    (coef.iter().all(|&x| x == 0), poly, rs.norm(&y))
                })
                .collect();
            let mut sup: f64 = 0.0;
            let mut shifted_sup: f64 = 0.0;
            for k in 0..=steps {
                let big_r = cfg.r_start + k as f64 * r_step;
                let mut main = 0.0;
                let mut rest = Vec::with_capacity(terms.len());
                for &(zero, poly, norm) in &terms {
                    let v = poly * rn_scale(big_r) * t.eval(big_r * norm)?;
                    if zero {
                        main = v;
                    } else {
                        rest.push(v);
                    }
                }
                let rest = pairwise_sum(&rest);
                let full = (c * Complex64::new(main + rest, 0.0) / d).re;
                let shifted = (c * Complex64::new(rest, 0.0) / d).re;
                sup = sup.max(full.abs());
                shifted_sup = shifted_sup.max(shifted.abs());
            }
            Ok(AnnulusPoint {
                xi: xi.clone(),
                norm: rs.norm(xi),
                sup,
                shifted_sup,
                driver: blowup_driver(rs, xi, &shift),
            })
        })
        .collect::<Result<_>>()?;
    let a: Vec<f64> = points.iter().map(|p| p.shifted_sup).collect();
    let b: Vec<f64> = points.iter().map(|p| p.driver).collect();
    Ok(AnnulusScan {
        group: rs.spec.to_string(),
        epsilon,
        r_window: (cfg.r_start, cfg.r_start + steps as f64 * r_step),
        r_step,
        cut,
        shift,
        annulus_sup: points.iter().map(|p| p.sup).fold(0.0, f64::max),
        shifted_annulus_sup: a.iter().cloned().fold(0.0, f64::max),
        rank_correlation: spearman(&a, &b),
        points,
    })
}

/// Decay of the Bessel remainder at one point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemainderDecay {
    pub xi: Vec<f64>,
    /// Window starts and the max of |II| over each window.
    pub scales: Vec<f64>,
    pub maxima: Vec<f64>,
    /// Fit of log max|II| against log R; the slope should be near −1.
    pub fit: LinearFit,
}

/// II(R) = K_R(exp ξ) − I(R), where I replaces every Bessel factor by its
/// leading cosine. Its window maxima are fitted against R on a log scale.
pub fn remainder_decay(
    rs: &RootSystem,
    xi: &[f64],
    scales: &[f64],
    cut: f64,
) -> Result<RemainderDecay> {
    let d = weyl_denominator(rs, xi);
    if d.norm() < 1e-12 {
        return Err(Error::Hypothesis(
            "the remainder only vanishes off the walls".into(),
        ));
    }
    let n = rs.dim;
    let t = RadialTransform::new(RadialMultiplier::critical(rs), n)?;
    let cn = bochner_riesz_transform_constant(n, critical_index(rs));
    let c = poisson_constant(rs);
    let lead = cn * (2.0 / PI).sqrt();
    let terms: Vec<(f64, f64)> = gamma_points(rs, cut)
        .into_iter()
        .map(|(_, g)| {
            let y: Vec<f64> = xi.iter().zip(&g).map(|(a, b)| a + b).collect();
            (root_pairings(rs, &y).iter().product::<f64>(), rs.norm(&y))
        })
        .collect();
    let max_norm = terms.iter().map(|t| t.1).fold(0.0, f64::max);
    let maxima: Vec<f64> = scales
        .par_iter()
        .map(|&r0| {
            // One window of width 2π/min|ξ+γ| at resolution π/(8 max|ξ+γ|).
            let width = 2.0 * PI / rs.norm(xi);
            let h = PI / (8.0 * max_norm);
            let steps = (width / h).ceil() as usize;
            let mut best: f64 = 0.0;
            for k in 0..=steps {
                let big_r = r0 + k as f64 * h;
                let mut v = Vec::with_capacity(terms.len());
                for &(poly, norm) in &terms {
                    let x = big_r * norm;
                    let exact = t.eval(x)?;
                    let asym = lead * (x - n as f64 * PI / 2.0).cos() / x.powi(n as i32);
                    v.push(poly * big_r.powi(n as i32) * (exact - asym));
                }
                best = best.max((c * Complex64::new(pairwise_sum(&v), 0.0) / d).re.abs());
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let lx: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let ly: Vec<f64> = maxima.iter().map(|m| m.ln()).collect();
    Ok(RemainderDecay {
        xi: xi.to_vec(),
        scales: scales.to_vec(),
        maxima,
        fit: linear_fit(&lx, &ly),
    })
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    fn from_values(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = pairwise_sum(v) / n;
        let var = pairwise_sum(&v.iter().map(|x| (x - mean).powi(2)).collect::<Vec<_>>())
            / (n - 1.0).max(1.0);
        Self {
            mean,
            std_error: (var / n).sqrt(),
            samples: v.len(),
        }
    }
}

/// F(x,t) = ∫_{G/T} f(g t⁻¹ g⁻¹ x) d[g] by averaging over Haar samples g.
pub fn conjugation_average<F>(
    rs: &RootSystem,
    f: F,
    x: &GroupElement,
    t: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Estimate>
where
    F: Fn(&GroupElement) -> f64 + Sync,
{
    if samples < 2 {
        return Err(Error::Config(
            "conjugation average needs at least two samples".into(),
        ));
    }
    let t_inv = GroupElement::from_torus(rs, t)?.inverse();
    let gs = haar_sample_streams(rs, seed, "conjugation", samples)?;
    let vals: Vec<f64> = gs
        .par_iter()
        .map(|g| f(&g.mul(&t_inv).mul(&g.inverse()).mul(x)))
        .collect();
    Ok(Estimate::from_values(&vals))
}

/// Settings for [`ae_localization_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationConfig {
    pub seed: u64,
    /// Radius of U as a fraction of r0.
    pub u_fraction: f64,
    /// Support of the radial bump, as fractions of r0.
    pub bump_inner: f64,
    pub bump_outer: f64,
    /// Distance of the probe from e as a fraction of r0.
    pub probe_fraction: f64,
    pub r_grid: Vec<f64>,
    /// Samples for the D-condition estimate.
    pub d_samples: usize,
    /// Relative standard error above which the probe is inadmissible.
    pub d_max_rel_error: f64,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self {
            seed: 5,
            u_fraction: 0.5,
            bump_inner: 0.75,
            bump_outer: 1.75,
            probe_fraction: 0.25,
            r_grid: (1..=16).map(|i| 5.0 * i as f64).collect(),
            d_samples: 20_000,
            d_max_rel_error: 0.1,
        }
    }
}

/// The test function: a smooth bump in d(y, e), zero on B(e, inner·r0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialBump {
    pub inner: f64,
    pub outer: f64,
}

impl RadialBump {
    pub fn value(&self, r: f64) -> f64 {
        if r <= self.inner || r >= self.outer {
            return 0.0;
        }
        let u = (2.0 * r - self.inner - self.outer) / (self.outer - self.inner);
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub group: String,
    pub probe: Vec<f64>,
    pub u_radius: f64,
    pub bump: RadialBump,
    /// (1/|D|) ∗ |f| at the probe.
    pub d_condition: Estimate,
    /// sup|f| · ∫_G 1/|D|, which bounds the D-condition everywhere.
    pub d_condition_bound: f64,
    pub admissible: bool,
    pub r_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub first_half_max: f64,
    pub second_half_max: f64,
    pub decays: bool,
}

/// Computes S_R f(x) spectrally for the radial bump f, which vanishes on U =
/// B(e, u·r0), at a probe x ∈ U, and reports whether |S_R f(x)| decays along
/// the R grid.
pub fn ae_localization_check(
    rs: &RootSystem,
    cfg: &LocalizationConfig,
) -> Result<LocalizationReport> {
    if cfg.r_grid.len() < 2 {
        return Err(Error::Config("the R grid needs at least two values".into()));
    }
    if !(cfg.probe_fraction < cfg.u_fraction
        && cfg.u_fraction <= cfg.bump_inner
        && cfg.bump_inner < cfg.bump_outer
        && cfg.bump_outer < 2.0)
    {
        return Err(Error::Config(
            "need probe < U radius ≤ bump inner < bump outer < 2 (fractions of r0)".into(),
        ));
    }
    let bump = RadialBump {
        inner: cfg.bump_inner * rs.r0,
        outer: cfg.bump_outer * rs.r0,
    };
    let u = rs.generic_direction.clone();
    let un = rs.norm(&u);
    let probe: Vec<f64> = u
        .iter()
        .map(|x| x * cfg.probe_fraction * rs.r0 / un)
        .collect();
    let dx = weyl_denominator(rs, &probe);

    // D-condition: Monte Carlo in the matrix model, else only the bound.
    let quad_d = TorusQuadrature::new(rs.rank, 64);
    let inv_d_integral = weyl_integrate_real(rs, &quad_d, |xi| {
        let d = weyl_denominator(rs, xi).norm();
        if d > 0.0 {
            1.0 / d
        } else {
            0.0
        }
    });
    let d_condition_bound = inv_d_integral;
    let d_condition = if rs.spec.has_matrix_model() {
        let x = GroupElement::from_torus(rs, &probe)?;
        let ys = haar_sample_streams(rs, cfg.seed, "d-condition", cfg.d_samples)?;
        let vals: Vec<f64> = ys
            .par_iter()
            .map(|y| {
                let dy = weyl_denominator(rs, &conjugacy_log(rs, y)?.xi).norm();
                let z = conjugacy_log(rs, &y.inverse().mul(&x))?;
                Ok(bump.value(z.norm) / dy)
            })
            .collect::<Result<_>>()?;
        Estimate::from_values(&vals)
    } else {
        Estimate {
            mean: d_condition_bound,
            std_error: 0.0,
            samples: 0,
        }
    };
    let admissible = d_condition.mean.is_finite()
        && d_condition.std_error <= cfg.d_max_rel_error * d_condition.mean.abs().max(1e-300);

    let r_max = cfg.r_grid.iter().cloned().fold(0.0, f64::max);
    let per_axis = 4 * max_orbit_coordinate(rs, r_max) + 8;
    let quad = TorusQuadrature::new(rs.rank, per_axis);
    let proj = CharacterProjector::new_real(rs, quad, |xi| match rs.reduce_to_q(xi) {
        Ok(q) => bump.value(rs.norm(&q)),
        Err(_) => 0.0,
    });
    let weights = rs.dominant_weights_in_ball(r_max)?;
    let coeffs: Vec<(Vec<i64>, f64, f64)> = weights
        .iter()
        .map(|w| {
            (
                w.coords.clone(),
                proj.coefficient(rs, &w.coords).re,
                w.shifted_norm,
            )
        })
        .collect();
    let mult = RadialMultiplier::critical(rs);
    let values: Vec<f64> = cfg
        .r_grid
        .iter()
        .map(|&big_r| {
            let terms: Vec<(&[i64], f64)> = coeffs
                .iter()
                .filter(|(_, _, s)| *s < big_r)
                .map(|(c, a, s)| (c.as_slice(), a * mult.value(s / big_r)))
                .collect();
            let es = ExpSum::alternating(rs, terms);
            (es.eval(rs, &probe) / dx).re
        })
        .collect();
    let half = values.len() / 2;
    let first_half_max = values[..half].iter().map(|v| v.abs()).fold(0.0, f64::max);
    let second_half_max = values[half..].iter().map(|v| v.abs()).fold(0.0, f64::max);
    Ok(LocalizationReport {
        group: rs.spec.to_string(),
        probe,
        u_radius: cfg.u_fraction * rs.r0,
        bump,
        d_condition,
        d_condition_bound,
        admissible,
        r_grid: cfg.r_grid.clone(),
        values,
        first_half_max,
        second_half_max,
        decays: second_half_max < first_half_max,
    })
}
