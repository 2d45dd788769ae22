//! Central kernels K(x) = Σ_λ φ(|λ+ρ|/R) d_λ χ_λ(x) and their Poisson-side
//! description.

pub mod bessel;
pub mod maximal;
pub mod poisson;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::numerics::{pairwise_sum, PanelRule};
use crate::rootsys::{DominantWeight, RootSystem};
use crate::weyl::{self, divide_by_denominator, ExpSum, TorusQuadrature};

pub use bessel::bessel_tilde;
pub use maximal::{maximal_function, BallVolumes};
pub use poisson::{
    calibrate_constant, decomposition_residual, kernel_poisson, kernel_tilde, kernel_tilde_delta0,
    poisson_constant, reference_calibration, wall_avoiding_grid, PoissonCalibration, PoissonValue,
};

/// e^{-1/t} for t > 0, else 0.
fn sigma(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// Smooth step from 0 (t ≤ 0) to 1 (t ≥ 1).
pub fn smoothstep(t: f64) -> f64 {
    let a = sigma(t);
    let b = sigma(1.0 - t);
    if a + b == 0.0 {
        return if t > 0.5 { 1.0 } else { 0.0 };
    }
    a / (a + b)
}

/// Profile φ of a radial spectral multiplier, evaluated at r = |λ+ρ|/R.
#[derive(Clone)]
pub enum RadialMultiplier {
    /// (1 − r²)₊^δ
    BochnerRiesz { delta: f64 },
    /// 1 on [0,1], 0 on [2,∞), smooth.
    BumpV,
    /// 1 on [0,1/3], (1 − r²)₊^{δ₀} on [2/3,∞), smooth in (−1,1).
    BarPhi { delta0: f64 },
    Custom {
        name: String,
        support: f64,
        /// Decay exponent p with |φ̂₍ₙ₎(r)| ⪯ r^{−p}; used for Γ-sum tail bounds.
        decay: f64,
        profile: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for RadialMultiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl RadialMultiplier {
    /// The critical Bochner-Riesz multiplier δ₀ = (n−1)/2.
    pub fn critical(rs: &RootSystem) -> Self {
        Self::BochnerRiesz {
            delta: critical_index(rs),
        }
    }

    pub fn bar_phi(rs: &RootSystem) -> Self {
        Self::BarPhi {
            delta0: critical_index(rs),
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        let r = r.abs();
        match self {
            Self::BochnerRiesz { delta } => bochner_riesz(*delta, r),
            Self::BumpV => 1.0 - smoothstep(r - 1.0),
            Self::BarPhi { delta0 } => {
                let t = smoothstep(3.0 * r - 1.0);
                (1.0 - t) + t * bochner_riesz(*delta0, r)
            }
            Self::Custom {
                profile, support, ..
            } => {
                if r >= *support {
                    0.0
                } else {
                    profile(r)
                }
            }
        }
    }

    pub fn support(&self) -> f64 {
        match self {
            Self::BumpV => 2.0,
            Self::Custom { support, .. } => *support,
            _ => 1.0,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::BochnerRiesz { delta } => format!("bochner_riesz({delta})"),
            Self::BumpV => "bump_v".into(),
            Self::BarPhi { delta0 } => format!("bar_phi({delta0})"),
            Self::Custom { name, .. } => format!("custom({name})"),
        }
    }

    /// Exponent p in |φ̂₍ₙ₎(r)| ⪯ r^{−p}. Smooth profiles decay faster than
    /// any power; n + 4 is what the tail bounds use for them.
    pub fn decay_exponent(&self, n: usize) -> f64 {
        match self {
            Self::BochnerRiesz { delta } => 0.5 * (n as f64 + 1.0) + delta,
            Self::BumpV => n as f64 + 4.0,
            Self::BarPhi { delta0 } => 0.5 * (n as f64 + 1.0) + delta0,
            Self::Custom { decay, .. } => *decay,
        }
    }

    pub fn record(&self) -> MultiplierRecord {
        let (kind, delta) = match self {
            Self::BochnerRiesz { delta } => ("bochner_riesz", Some(*delta)),
            Self::BumpV => ("bump_v", None),
            Self::BarPhi { delta0 } => ("bar_phi", Some(*delta0)),
            Self::Custom { .. } => ("custom", None),
        };
        MultiplierRecord {
            kind: kind.into(),
            delta,
            support: self.support(),
            smoothing: "s(t) = σ(t)/(σ(t)+σ(1−t)), σ(t) = exp(−1/t)·1{t>0}".into(),
        }
    }

    /// Parses `br:<δ>`, `br0` (critical index), `bump_v` or `bar_phi`.
    pub fn parse_for(s: &str, rs: &RootSystem) -> Result<Self> {
        let s = s.trim();
        match s {
            "br0" | "critical" => return Ok(Self::critical(rs)),
            "bar_phi" => return Ok(Self::bar_phi(rs)),
            _ => {}
        }
        s.parse()
    }
}

impl FromStr for RadialMultiplier {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "bump_v" {
            return Ok(Self::BumpV);
        }
        if let Some(d) = s
            .strip_prefix("br:")
            .or_else(|| s.strip_prefix("bochner_riesz:"))
        {
            let delta: f64 = d
                .parse()
                .map_err(|_| Error::Config(format!("bad Bochner-Riesz order {d:?}")))?;
            if !(delta >= 0.0) {
                return Err(Error::Config(format!(
                    "Bochner-Riesz order must be ≥ 0, got {delta}"
                )));
            }
            return Ok(Self::BochnerRiesz { delta });
        }
        if let Some(d) = s.strip_prefix("bar_phi:") {
            let delta0: f64 = d
                .parse()
                .map_err(|_| Error::Config(format!("bad bar_phi order {d:?}")))?;
            return Ok(Self::BarPhi { delta0 });
        }
        Err(Error::Config(format!(
            "unknown multiplier {s:?}: expected br:<δ>, br0, bump_v, bar_phi or bar_phi:<δ₀>"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierRecord {
    pub kind: String,
    pub delta: Option<f64>,
    pub support: f64,
    pub smoothing: String,
}

fn bochner_riesz(delta: f64, r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else if delta == 0.0 {
        1.0
    } else {
        (1.0 - r * r).powf(delta)
    }
}

/// δ₀ = (n − 1)/2.
pub fn critical_index(rs: &RootSystem) -> f64 {
    0.5 * (rs.dim as f64 - 1.0)
}

/// (2π)^{n/2} 2^δ Γ(δ+1): φ̂₍ₙ₎ of (1−s²)₊^δ is this times J̃_{n/2+δ}.
pub fn bochner_riesz_transform_constant(n: usize, delta: f64) -> f64 {
    (2.0 * std::f64::consts::PI).powf(0.5 * n as f64) * 2f64.powf(delta) * gamma(delta + 1.0)
}

/// φ̂₍ₙ₎(r) = (2π)^{n/2} ∫₀^∞ φ(s) J̃_{(n−2)/2}(rs) s^{n−1} ds by composite
/// Gauss-Legendre quadrature.
pub fn radial_fourier_quadrature(mult: &RadialMultiplier, n: usize, r: f64) -> Result<f64> {
    let nu = 0.5 * (n as f64 - 2.0);
    let integrand = |s: f64| mult.value(s) * bessel_tilde(nu, r * s) * s.powi(n as i32 - 1);
    let pre = (2.0 * std::f64::consts::PI).powf(0.5 * n as f64);
    let value = match mult {
        RadialMultiplier::BochnerRiesz { .. } => graded_integral(0.0, 1.0, r, &integrand),
        RadialMultiplier::BumpV => {
            smooth_integral(0.0, 1.0, r, &integrand)
                + smooth_integral(1.0, 2.0, 2.0 * r + 20.0, &integrand)
        }
        RadialMultiplier::BarPhi { .. } => {
            smooth_integral(0.0, 1.0 / 3.0, r, &integrand)
                + smooth_integral(1.0 / 3.0, 2.0 / 3.0, 2.0 * r + 20.0, &integrand)
                + graded_integral(2.0 / 3.0, 1.0, r, &integrand)
        }
        RadialMultiplier::Custom { support, .. } => graded_integral(0.0, *support, r, &integrand),
    };
    if !value.is_finite() {
        return Err(Error::Integration(format!(
            "radial transform of {} at r = {r} is not finite",
            mult.label()
        )));
    }
    Ok(pre * value)
}

fn panels_for(a: f64, b: f64, r: f64) -> usize {
    (((b - a) * r / 2.0).ceil() as usize + 4).max(4)
}

fn smooth_integral(a: f64, b: f64, r: f64, f: &impl Fn(f64) -> f64) -> f64 {
    PanelRule::uniform(a, b, 2 * panels_for(a, b, r), 16).integrate(f)
}

fn graded_integral(a: f64, b: f64, r: f64, f: &impl Fn(f64) -> f64) -> f64 {
    PanelRule::graded_at_end(a, b, panels_for(a, b, r), 40, 16).integrate(f)
}

/// φ̂₍ₙ₎ for a multiplier with the decay data needed by Γ-sum tail bounds.
#[derive(Debug, Clone)]
pub struct RadialTransform {
    pub multiplier: RadialMultiplier,
    pub n: usize,
    /// p with |φ̂(r)| ≤ decay_constant · r^{−p} for r ≥ 1.
    pub decay_exponent: f64,
    pub decay_constant: f64,
}

impl RadialTransform {
    pub fn new(multiplier: RadialMultiplier, n: usize) -> Result<Self> {
        let p = multiplier.decay_exponent(n);
        let mut t = Self {
            multiplier,
            n,
            decay_exponent: p,
            decay_constant: f64::INFINITY,
        };
        let samples: Vec<f64> = (0..=48).map(|i| 10f64.powf(i as f64 / 16.0)).collect();
        let mut worst: f64 = 0.0;
        for r in samples {
            worst = worst.max(t.eval(r)?.abs() * r.powf(p));
        }
        // Headroom for oscillation peaks falling between samples.
        t.decay_constant = 2.0 * worst;
        Ok(t)
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        let n = self.n;
        match &self.multiplier {
            RadialMultiplier::BochnerRiesz { delta } => {
                Ok(bochner_riesz_transform_constant(n, *delta)
                    * bessel_tilde(0.5 * n as f64 + delta, r))
            }
            RadialMultiplier::BarPhi { delta0 } => {
                // closed-form critical part plus the smooth difference on [0, 2/3]
                let closed = bochner_riesz_transform_constant(n, *delta0)
                    * bessel_tilde(0.5 * n as f64 + delta0, r);
                let d0 = *delta0;
                let nu = 0.5 * (n as f64 - 2.0);
                let diff = |s: f64| {
                    let t = smoothstep(3.0 * s - 1.0);
                    (1.0 - t)
                        * (1.0 - bochner_riesz(d0, s))
                        * bessel_tilde(nu, r * s)
                        * s.powi(n as i32 - 1)
                };
                let pre = (2.0 * std::f64::consts::PI).powf(0.5 * n as f64);
                let smooth = smooth_integral(0.0, 1.0 / 3.0, r, &diff)
                    + smooth_integral(1.0 / 3.0, 2.0 / 3.0, 2.0 * r + 20.0, &diff);
                Ok(closed + pre * smooth)
            }
            m => radial_fourier_quadrature(m, n, r),
        }
    }

    pub fn at_zero(&self) -> Result<f64> {
        self.eval(0.0)
    }
}

/// φ̂₍ₙ₎(r), using the closed form where one is known.
pub fn radial_fourier(mult: &RadialMultiplier, n: usize, r: f64) -> Result<f64> {
    match mult {
        RadialMultiplier::BochnerRiesz { delta } => {
            Ok(bochner_riesz_transform_constant(n, *delta)
                * bessel_tilde(0.5 * n as f64 + delta, r))
        }
        _ => radial_fourier_quadrature(mult, n, r),
    }
}

/// Spectral coefficients a_λ of Σ a_λ d_λ χ_λ, keyed by fundamental-weight
/// coordinates of λ.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectralCoefficients {
    pub entries: BTreeMap<Vec<i64>, f64>,
}

impl SpectralCoefficients {
    pub fn from_multiplier(rs: &RootSystem, mult: &RadialMultiplier, scale: f64) -> Result<Self> {
        let ws = rs.dominant_weights_in_ball(mult.support() * scale)?;
        let entries = ws
            .iter()
            .filter_map(|w| {
                let a = mult.value(w.shifted_norm / scale);
                (a != 0.0).then(|| (w.coords.clone(), a))
            })
            .collect();
        Ok(Self { entries })
    }

    pub fn get(&self, coords: &[i64]) -> f64 {
        self.entries.get(coords).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Convolution of central kernels: d_λχ_λ ∗ d_λ'χ_λ' = δ_{λλ'} d_λχ_λ, so
/// coefficients multiply pointwise.
pub fn spectral_convolve(
    a: &SpectralCoefficients,
    b: &SpectralCoefficients,
) -> SpectralCoefficients {
    let entries = a
        .entries
        .iter()
        .filter_map(|(k, x)| b.entries.get(k).map(|y| (k.clone(), x * y)))
        .filter(|(_, v)| *v != 0.0)
        .collect();
    SpectralCoefficients { entries }
}

/// A central function given by finitely many spectral coefficients.
#[derive(Debug, Clone)]
pub struct CentralKernel<'a> {
    pub rs: &'a RootSystem,
    /// `None` for kernels assembled from raw coefficients.
    pub multiplier: Option<RadialMultiplier>,
    pub scale: f64,
    pub coefficients: SpectralCoefficients,
    numerator: ExpSum,
    max_coord: usize,
}

impl<'a> CentralKernel<'a> {
    /// K_R^φ with coefficients φ(|λ+ρ|/R).
    pub fn new(rs: &'a RootSystem, multiplier: RadialMultiplier, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::Config(format!(
                "kernel scale must be positive, got {scale}"
            )));
        }
        let coefficients = SpectralCoefficients::from_multiplier(rs, &multiplier, scale)?;
        let mut k = Self::from_coefficients(rs, coefficients)?;
        k.multiplier = Some(multiplier);
        k.scale = scale;
        Ok(k)
    }

    pub fn from_coefficients(
        rs: &'a RootSystem,
        coefficients: SpectralCoefficients,
    ) -> Result<Self> {
        let mut terms = Vec::with_capacity(coefficients.len());
        for (c, a) in &coefficients.entries {
            let d = rs.dominant_weight(c)?;
            terms.push((c.as_slice(), a * d.dim as f64));
        }
        let numerator = ExpSum::alternating(rs, terms);
        let max_coord = numerator.max_abs.iter().copied().max().unwrap_or(0) as usize;
        Ok(Self {
            rs,
            multiplier: None,
            scale: 0.0,
            coefficients,
            numerator,
            max_coord,
        })
    }

    /// D(ξ)·K(ξ) as an exponential sum.
    pub fn numerator(&self) -> &ExpSum {
        &self.numerator
    }

    /// Largest fundamental-weight coordinate among the frequencies of D·K.
    pub fn max_coordinate(&self) -> usize {
        self.max_coord
    }

    pub fn weights(&self) -> Result<Vec<DominantWeight>> {
        self.coefficients
            .entries
            .keys()
            .map(|c| self.rs.dominant_weight(c))
            .collect()
    }

    /// K(exp ξ); the imaginary residual must be negligible.
    pub fn eval(&self, xi: &[f64]) -> Result<f64> {
        if self.numerator.is_empty() {
            return Ok(0.0);
        }
        let xi = self.rs.reduce_to_q(xi)?;
        let z = divide_by_denominator(self.rs, &self.numerator, &xi)?;
        let scale = self.at_identity().abs().max(1.0);
        if z.im.abs() > 1e-8 * scale {
            return Err(Error::Numerical(format!(
                "central kernel has imaginary residual {:.3e} at ξ = {xi:?}",
                z.im
            )));
        }
        Ok(z.re)
    }

    /// Σ a_λ d_λ², the value at the identity.
    pub fn at_identity(&self) -> f64 {
        let vals: Vec<f64> = self
            .coefficients
            .entries
            .iter()
            .map(|(c, a)| {
                let d = self
                    .rs
                    .dimension_exact(&c.iter().map(|x| x + 1).collect::<Vec<_>>())
                    as f64;
                a * d * d
            })
            .collect();
        pairwise_sum(&vals)
    }

    /// Evaluates at many points in parallel, preserving order.
    pub fn eval_many(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        points.par_iter().map(|x| self.eval(x)).collect()
    }

    /// Smallest admissible torus grid for this kernel.
    pub fn quadrature(&self, oversample: usize) -> TorusQuadrature {
        TorusQuadrature::new(self.rs.rank, (2 * self.max_coord + 2) * oversample.max(1))
    }

    /// ‖K‖_{L¹(G)} = (1/|W|) ∫_T |K| |D|² dt, computed as ∫ |D·K|·|D| so that
    /// walls need no division.
    pub fn l1_norm(&self, quad: &TorusQuadrature) -> Result<f64> {
        l1_norm(self, quad)
    }
}

/// See [`CentralKernel::l1_norm`].
pub fn l1_norm(k: &CentralKernel, quad: &TorusQuadrature) -> Result<f64> {
    let rs = k.rs;
    if quad.rank != rs.rank {
        return Err(Error::Resolution(format!(
            "quadrature rank {} does not match group rank {}",
            quad.rank, rs.rank
        )));
    }
    if quad.per_axis <= 2 * k.max_coord {
        return Err(Error::Resolution(format!(
            "{} nodes per axis alias frequencies up to {}; need more than {}",
            quad.per_axis,
            k.max_coord,
            2 * k.max_coord
        )));
    }
    let num = weyl::expsum_on_grid(rs, &k.numerator, quad);
    let den = weyl::denominator_on_grid(rs, quad);
    let vals: Vec<f64> = num
        .iter()
        .zip(&den)
        .map(|(a, b)| a.norm() * b.norm())
        .collect();
    Ok(pairwise_sum(&vals) * quad.weight() / rs.weyl_order() as f64)
}

/// (K₁ ∗ K₂)(exp ξ) on SU(2) by direct quadrature over the group, for use as
/// an oracle against [`spectral_convolve`]. Haar measure in the coordinates
/// y = (cos ψ, sin ψ·n) is (2/π) sin²ψ dψ dn/(4π), and the class angle of
/// y⁻¹x depends on n only through its height z.
pub fn rank_one_group_convolution(
    rs: &RootSystem,
    k1: &CentralKernel,
    k2: &CentralKernel,
    xi: &[f64],
) -> Result<f64> {
    if rs.spec.to_string() != "A1" {
        return Err(Error::Hypothesis(
            "group-side convolution oracle is implemented for A1 only".into(),
        ));
    }
    let alpha = rs.positive_roots[0].dual[0];
    let from_angle = |theta: f64| vec![2.0 * theta / alpha];
    let theta = weyl::half_angle(rs, xi);
    let deg = k1.max_coord + k2.max_coord + 4;
    let psi_nodes = 2 * deg + 2;
    let (zn, zw) = crate::numerics::gauss_legendre(deg + 2);
    let mut rows = Vec::with_capacity(psi_nodes);
    for i in 0..psi_nodes {
        let psi = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / psi_nodes as f64;
        let (sp, cp) = psi.sin_cos();
        if sp.abs() < 1e-14 {
            continue;
        }
        let a = k1.eval(&from_angle(psi.abs()))?;
        let mut inner = 0.0;
        for (z, w) in zn.iter().zip(&zw) {
            let c = (cp * theta.cos() + sp * theta.sin() * z).clamp(-1.0, 1.0);
            inner += w * k2.eval(&from_angle(c.acos()))?;
        }
        rows.push(sp * sp * a * 0.5 * inner);
    }
    // Uniform nodes over the full period integrate the trigonometric
    // polynomial in ψ exactly; the half-period Haar density (2/π) sin²ψ on
    // [0, π] becomes (1/π) sin²ψ over [0, 2π).
    Ok(
        pairwise_sum(&rows) * (2.0 * std::f64::consts::PI / psi_nodes as f64)
            / std::f64::consts::PI,
    )
}
