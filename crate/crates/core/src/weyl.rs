//! Weyl denominator, characters, dimensions and integration over the group.
//!
//! A central function whose product with the denominator is a finite
//! exponential sum is stored as an [`ExpSum`]: frequencies are integer
//! coordinates in the fundamental-weight basis, so on the torus grid every
//! phase is a root of unity and evaluation reduces to table lookups.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::pairwise_sum_complex;
use crate::rootsys::{dot, RootSystem};

/// Below this |D| characters are evaluated through a limit rule.
pub const WALL_TOL: f64 = 1e-6;
const PAR_CHUNK: usize = 1 << 15;
/// A sine factor this small is treated as an exact zero.
const WALL_SNAP: f64 = 1e-10;
/// Richardson estimates must agree to this relative accuracy.
const RICHARDSON_TOL: f64 = 1e-6;

fn i_pow(k: usize) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// D(ξ) = (2i)^k Π_{α>0} sin(⟨α, ξ⟩ / 2).
pub fn weyl_denominator(rs: &RootSystem, xi: &[f64]) -> Complex64 {
    let k = rs.positive_roots.len();
    let p: f64 = rs
        .positive_roots
        .iter()
        .map(|r| (0.5 * dot(&r.dual, xi)).sin())
        .product();
    i_pow(k) * (2f64.powi(k as i32) * p)
}

/// D(ξ) through the alternating sum Σ_w ε(w) e^{i⟨wρ, ξ⟩}.
pub fn weyl_denominator_alternating(rs: &RootSystem, xi: &[f64]) -> Complex64 {
    rs.weyl_orbit(&rs.rho)
        .iter()
        .map(|(v, s)| Complex64::from_polar(*s as f64, rs.inner(v, xi)))
        .sum()
}

/// Weyl dimension through the metric, rounded, and checked against the
/// exact integer route. `coords` are fundamental-weight coordinates of λ.
pub fn dimension(rs: &RootSystem, coords: &[i64]) -> Result<u64> {
    let w = rs.dominant_weight(coords)?;
    let f = rs.dimension_float(&w.lambda);
    let r = f.round();
    let residual = (f - r).abs() / f.abs().max(1.0);
    if residual >= 1e-6 || r as u64 != w.dim {
        return Err(Error::NormalizationCorrupt(format!(
            "Weyl product {f} for {coords:?} does not round to the exact dimension {}",
            w.dim
        )));
    }
    Ok(w.dim)
}

/// A finite sum Σ c_t e^{i⟨μ_t, ξ⟩} with μ_t on the weight lattice.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExpSum {
    pub rank: usize,
    /// Fundamental-weight coordinates of the frequencies, row-major.
    pub freqs: Vec<i32>,
    pub coeffs: Vec<f64>,
    /// Largest |coordinate| per axis.
    pub max_abs: Vec<i32>,
}

impl ExpSum {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            freqs: Vec::new(),
            coeffs: Vec::new(),
            max_abs: vec![0; rank],
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn push(&mut self, c: &[i64], coeff: f64) {
        for (i, &x) in c.iter().enumerate() {
            self.freqs.push(x as i32);
            self.max_abs[i] = self.max_abs[i].max(x.unsigned_abs() as i32);
        }
        self.coeffs.push(coeff);
    }

    /// Alternating sum Σ_λ a_λ Σ_w ε(w) e^{i⟨w(λ+ρ), ξ⟩}, i.e. D times the
    /// central function Σ a_λ χ_λ. Input pairs are (λ coordinates, a_λ).
    pub fn alternating<'a>(
        rs: &RootSystem,
        terms: impl IntoIterator<Item = (&'a [i64], f64)>,
    ) -> Self {
        let mut out = Self::new(rs.rank);
        for (k, a) in terms {
            if a == 0.0 {
                continue;
            }
            let c: Vec<i64> = k.iter().map(|x| x + 1).collect();
            for (w, el) in rs.weyl.iter().enumerate() {
                out.push(&rs.apply_weyl_omega(w, &c), el.sign as f64 * a);
            }
        }
        out
    }

    /// Per-axis tables of e^{i c θ_j} for c in [−max, max].
    fn tables(&self, rs: &RootSystem, xi: &[f64]) -> Vec<Vec<Complex64>> {
        (0..self.rank)
            .map(|j| {
                let theta = rs.omega_pairing[j] * xi[j];
                let mx = self.max_abs[j];
                (-mx..=mx)
                    .map(|c| {
                        let (s, co) = (c as f64 * theta).sin_cos();
                        Complex64::new(co, s)
                    })
                    .collect()
            })
            .collect()
    }

    pub fn eval(&self, rs: &RootSystem, xi: &[f64]) -> Complex64 {
        let t = self.tables(rs, xi);
        let n = self.len();
        if n <= PAR_CHUNK {
            return self.eval_range(&t, 0, n);
        }
        // Fixed chunking keeps the reduction order independent of threads.
        let parts: Vec<Complex64> = (0..n.div_ceil(PAR_CHUNK))
            .into_par_iter()
            .map(|c| self.eval_range(&t, c * PAR_CHUNK, ((c + 1) * PAR_CHUNK).min(n)))
            .collect();
        pairwise_sum_complex(&parts)
    }

    fn eval_range(&self, t: &[Vec<Complex64>], lo: usize, hi: usize) -> Complex64 {
        let off = &self.max_abs;
        let m = self.rank;
        let freqs = &self.freqs[lo * m..hi * m];
        let coeffs = &self.coeffs[lo..hi];
        let mut acc = Complex64::new(0.0, 0.0);
        match m {
            1 => {
                for (f, c) in freqs.iter().zip(coeffs) {
                    acc += t[0][(f + off[0]) as usize] * c;
                }
            }
            2 => {
                for (f, c) in freqs.chunks_exact(2).zip(coeffs) {
                    acc += t[0][(f[0] + off[0]) as usize] * t[1][(f[1] + off[1]) as usize] * c;
                }
            }
            _ => {
                for (f, c) in freqs.chunks_exact(m).zip(coeffs) {
                    let mut z = Complex64::new(*c, 0.0);
                    for j in 0..m {
                        z *= t[j][(f[j] + off[j]) as usize];
                    }
                    acc += z;
                }
            }
        }
        acc
    }

    /// Σ c (i⟨μ, u⟩)^j e^{i⟨μ, ξ⟩} / j!, the j-th Taylor coefficient along u.
    pub fn eval_jet(&self, rs: &RootSystem, xi: &[f64], u: &[f64], order: usize) -> Complex64 {
        let m = self.rank;
        let up: Vec<f64> = (0..m).map(|j| rs.omega_pairing[j] * u[j]).collect();
        let tp: Vec<f64> = (0..m).map(|j| rs.omega_pairing[j] * xi[j]).collect();
        let fact: f64 = (1..=order).map(|x| x as f64).product();
        let ij = i_pow(order);
        let mut acc = Complex64::new(0.0, 0.0);
        for (f, c) in self.freqs.chunks_exact(m).zip(&self.coeffs) {
            let mut fu = 0.0;
            let mut ph = 0.0;
            for j in 0..m {
                fu += f[j] as f64 * up[j];
                ph += f[j] as f64 * tp[j];
            }
            acc += Complex64::from_polar(c * fu.powi(order as i32), ph);
        }
        acc * ij / fact
    }

    /// Largest |⟨μ, u⟩| over the frequencies.
    fn max_directional(&self, rs: &RootSystem, u: &[f64]) -> f64 {
        let m = self.rank;
        let up: Vec<f64> = (0..m).map(|j| rs.omega_pairing[j] * u[j]).collect();
        self.freqs
            .chunks_exact(m)
            .map(|f| (0..m).map(|j| f[j] as f64 * up[j]).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

/// Divides an alternating exponential sum by D(ξ), handling walls: exact
/// walls by l'Hôpital along the generic direction, near walls by polynomial
/// extrapolation in t² from samples at ξ ± t·u.
pub fn divide_by_denominator(rs: &RootSystem, num: &ExpSum, xi: &[f64]) -> Result<Complex64> {
    let d = weyl_denominator(rs, xi);
    if d.norm() > WALL_TOL {
        return Ok(num.eval(rs, xi) / d);
    }
    let k = rs.positive_roots.len();
    let u = &rs.generic_direction;
    let x = rs.pairings(xi);
    let sines: Vec<f64> = x.iter().map(|v| (0.5 * v).sin()).collect();
    let on_wall: Vec<bool> = sines.iter().map(|s| s.abs() < WALL_SNAP).collect();
    let j = on_wall.iter().filter(|&&b| b).count();
    let rest_ok = sines
        .iter()
        .zip(&on_wall)
        .all(|(s, &z)| z || s.abs() > 1e-4);
    if j > 0 && rest_ok {
        let mut den = i_pow(k) * 2f64.powi(k as i32);
        for (i, r) in rs.positive_roots.iter().enumerate() {
            if on_wall[i] {
                den *= (0.5 * x[i]).cos() * dot(&r.dual, u) / 2.0;
            } else {
                den *= sines[i];
            }
        }
        return Ok(num.eval_jet(rs, xi, u, j) / den);
    }
    // Near a wall but not on it: the quotient is entire along ξ + t·u and
    // even in t about ξ after symmetrising, so sample it where D is no longer
    // tiny and extrapolate a polynomial in t² back to t = 0.
    let scale = num.max_directional(rs, u).max(1.0);
    let t0 = sampling_step(rs, &x, u, EXTRAPOLATION_REACH / scale);
    let g = |t: f64| -> Complex64 {
        let p: Vec<f64> = xi.iter().zip(u).map(|(a, b)| a + t * b).collect();
        let q: Vec<f64> = xi.iter().zip(u).map(|(a, b)| a - t * b).collect();
        0.5 * (num.eval(rs, &p) / weyl_denominator(rs, &p)
            + num.eval(rs, &q) / weyl_denominator(rs, &q))
    };
    let nodes = extrapolation_nodes();
    let s: Vec<f64> = nodes.iter().map(|f| (f * t0) * (f * t0)).collect();
    let v: Vec<Complex64> = nodes.iter().map(|f| g(f * t0)).collect();
    let full = neville_at_zero(&s, &v);
    let reduced = neville_at_zero(&s[1..], &v[1..]);
    let disagreement = (full - reduced).norm();
    if !(disagreement <= RICHARDSON_TOL * full.norm().max(1.0)) {
        return Err(Error::SingularEvaluation(format!(
            "extrapolated estimates near a wall disagree by {disagreement:.3e} at ξ = {xi:?} (|D| = {:.3e}, step {t0:.3e})",
            d.norm()
        )));
    }
    Ok(full)
}

/// Shrinks `reach` until no wall crossing of the line ξ + t·u falls in the
/// sampled band, so every sample has a well-conditioned denominator.
fn sampling_step(rs: &RootSystem, pairings: &[f64], u: &[f64], reach: f64) -> f64 {
    let mut zeros = Vec::new();
    for (r, &x) in rs.positive_roots.iter().zip(pairings) {
        let c = dot(&r.dual, u);
        if c.abs() < 1e-300 {
            continue;
        }
        let span = 2.0 * c.abs() * reach;
        let lo = ((x - span) / (2.0 * PI)).floor() as i64;
        let hi = ((x + span) / (2.0 * PI)).ceil() as i64;
        for m in lo..=hi {
            zeros.push(((2.0 * PI * m as f64 - x) / c).abs());
        }
    }
    let mut t0 = reach;
    for _ in 0..64 {
        match zeros.iter().find(|&&z| z > 0.15 * t0 && z < 1.5 * t0) {
            Some(&z) => t0 = z / 1.5,
            None => break,
        }
    }
    t0
}

/// Sampling reach in units of the reciprocal top frequency along u.
const EXTRAPOLATION_REACH: f64 = 3.0;

/// Chebyshev points in s = t² over [0.3², 1], returned as t / reach.
fn extrapolation_nodes() -> Vec<f64> {
    const COUNT: usize = 10;
    let (a, b) = (0.09, 1.0);
    (0..COUNT)
        .map(|i| {
            let c = (std::f64::consts::PI * (i as f64 + 0.5) / COUNT as f64).cos();
            (0.5 * (a + b) + 0.5 * (b - a) * c).sqrt()
        })
        .collect()
}

/// Value at 0 of the interpolating polynomial through (s_i, v_i).
fn neville_at_zero(s: &[f64], v: &[Complex64]) -> Complex64 {
    let mut p = v.to_vec();
    let n = p.len();
    for lvl in 1..n {
        for i in 0..n - lvl {
            let (a, b) = (s[i], s[i + lvl]);
            p[i] = (p[i + 1] * a - p[i] * b) / (a - b);
        }
    }
    p[0]
}

/// χ_λ(exp ξ) by the alternating-sum formula.
pub fn character(rs: &RootSystem, coords: &[i64], xi: &[f64]) -> Result<Complex64> {
    rs.dominant_weight(coords)?;
    let num = ExpSum::alternating(rs, [(coords, 1.0)]);
    divide_by_denominator(rs, &num, xi)
}

/// Uniform tensor grid over a period cell of Γ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusQuadrature {
    pub rank: usize,
    pub per_axis: usize,
    /// Exponentials with every fundamental-weight coordinate of absolute
    /// value at most this bound are integrated exactly.
    pub nyquist_bound: usize,
}

impl TorusQuadrature {
    pub fn new(rank: usize, per_axis: usize) -> Self {
        assert!(per_axis >= 1);
        Self {
            rank,
            per_axis,
            nyquist_bound: per_axis - 1,
        }
    }

    /// Grid for integrands whose frequencies have coordinates up to
    /// `max_coord`, with the 2× safety margin.
    pub fn for_max_frequency(rank: usize, max_coord: usize) -> Self {
        Self::new(rank, 2 * max_coord + 2)
    }

    pub fn node_count(&self) -> usize {
        self.per_axis.pow(self.rank as u32)
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.node_count() as f64
    }

    /// Node with flat index `idx = k_0 + N k_1 + N² k_2`.
    pub fn node(&self, rs: &RootSystem, idx: usize) -> Vec<f64> {
        let n = self.per_axis;
        let mut k = idx;
        (0..self.rank)
            .map(|i| {
                let ki = k % n;
                k /= n;
                ki as f64 / n as f64 * rs.gamma[(i, i)]
            })
            .collect()
    }
}

/// (1/|W|) Σ_nodes weight · f(ξ) · |D(ξ)|².
pub fn weyl_integrate<F>(rs: &RootSystem, quad: &TorusQuadrature, f: F) -> Complex64
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    let vals: Vec<Complex64> = (0..quad.node_count())
        .into_par_iter()
        .map(|i| {
            let xi = quad.node(rs, i);
            let d2 = weyl_denominator(rs, &xi).norm_sqr();
            if d2 == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                f(&xi) * d2
            }
        })
        .collect();
    pairwise_sum_complex(&vals) * (quad.weight() / rs.weyl_order() as f64)
}

/// Real-valued convenience wrapper.
pub fn weyl_integrate_real<F>(rs: &RootSystem, quad: &TorusQuadrature, f: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    weyl_integrate(rs, quad, |x| Complex64::new(f(x), 0.0)).re
}

/// Weyl integral of a radial central function supported in B(0, 2r0),
/// (1/|W|)(1/|T|) ∫ f(|ξ|) |D(ξ)|² dξ, in polar coordinates of an
/// orthonormal chart.
///
/// `breaks` starts at 0 and partitions the radial range; an interval
/// [a, b] with a > 0 gets `panels_per_decade · log10(b/a)` log-spaced panels
/// (at least one), the first interval two uniform ones.
pub fn weyl_integrate_radial<F>(
    rs: &RootSystem,
    f: F,
    breaks: &[f64],
    panels_per_decade: usize,
    order: usize,
) -> Result<f64>
where
    F: Fn(f64) -> f64 + Sync,
{
    if breaks.len() < 2 || breaks[0] != 0.0 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Resolution(format!(
            "radial breaks must start at 0 and increase: {breaks:?}"
        )));
    }
    let top = *breaks.last().expect("non-empty");
    if top > 2.0 * rs.r0 * (1.0 + 1e-12) {
        return Err(Error::Hypothesis(format!(
            "radial integration radius {top} exceeds 2r0 = {}, where |ξ| stops being the distance to e",
            2.0 * rs.r0
        )));
    }
    if panels_per_decade == 0 || order < 4 {
        return Err(Error::Resolution(format!(
            "radial rule with {panels_per_decade} panels per decade and order {order} cannot resolve the profile"
        )));
    }
    let m = rs.rank;
    let chol = rs
        .gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Internal("metric is not positive definite".into()))?;
    let inv_t = chol
        .l()
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::Internal("singular Cholesky factor".into()))?;
    // |D|² on the sphere of radius ρ has angular frequencies up to ρ·Σ|α|.
    let freq: f64 = rs.positive_roots.iter().map(|a| a.norm2.sqrt()).sum();
    let ang = 32 + 4 * (freq * top).ceil() as usize;
    let sphere: Vec<(Vec<f64>, f64)> = match m {
        1 => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
        2 => {
            let h = 2.0 * PI / ang as f64;
            (0..ang)
                .map(|k| {
                    let t = k as f64 * h;
                    (vec![t.cos(), t.sin()], h)
                })
                .collect()
        }
        _ => {
            let n = ang / 2 + 8;
            let (x, w) = crate::numerics::gauss_legendre(n);
            let h = PI / n as f64;
            let mut pts = Vec::with_capacity(2 * n * n);
            for (c, wc) in x.iter().zip(&w) {
                let s = (1.0 - c * c).sqrt();
                for k in 0..2 * n {
                    let p = k as f64 * h;
                    pts.push((vec![s * p.cos(), s * p.sin(), *c], wc * h));
                }
            }
            pts
        }
    };
    let shell = |rho: f64| -> f64 {
        let vals: Vec<f64> = sphere
            .iter()
            .map(|(dir, w)| {
                let xi: Vec<f64> = (0..m)
                    .map(|i| (0..m).map(|j| inv_t[(i, j)] * dir[j] * rho).sum())
                    .collect();
                w * weyl_denominator(rs, &xi).norm_sqr()
            })
            .collect();
        crate::numerics::pairwise_sum(&vals) * rho.powi(m as i32 - 1)
    };
    let mut cuts = vec![0.0];
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a == 0.0 {
            cuts.push(0.5 * b);
        } else {
            let k = ((b / a).log10() * panels_per_decade as f64).ceil().max(1.0) as usize;
            for i in 1..k {
                cuts.push(a * (b / a).powf(i as f64 / k as f64));
            }
        }
        cuts.push(b);
    }
    let rule = crate::numerics::PanelRule::new(&cuts, order);
    Ok(rule.integrate(|r| f(r) * shell(r)) / (rs.weyl_order() as f64 * rs.covolume_gamma))
}

fn fft_axes(data: &mut [Complex64], n: usize, rank: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let total = data.len();
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..rank {
        let stride = n.pow(axis as u32);
        let block = stride * n;
        for start in (0..total).step_by(block) {
            for off in 0..stride {
                for (t, v) in line.iter_mut().enumerate() {
                    *v = data[start + off + t * stride];
                }
                fft.process(&mut line);
                for (t, v) in line.iter().enumerate() {
                    data[start + off + t * stride] = *v;
                }
            }
        }
    }
}

/// Values of an exponential sum on every node of the grid, by one inverse
/// FFT. Exact at the nodes for any grid size.
pub fn expsum_on_grid(rs: &RootSystem, es: &ExpSum, quad: &TorusQuadrature) -> Vec<Complex64> {
    let n = quad.per_axis;
    let m = rs.rank;
    let mut data = vec![Complex64::new(0.0, 0.0); quad.node_count()];
    for (f, c) in es.freqs.chunks_exact(m).zip(&es.coeffs) {
        let mut idx = 0usize;
        let mut stride = 1usize;
        for &x in f {
            idx += (x as i64).rem_euclid(n as i64) as usize * stride;
            stride *= n;
        }
        data[idx] += *c;
    }
    fft_axes(&mut data, n, m, true);
    data
}

/// D on every node of the grid.
pub fn denominator_on_grid(rs: &RootSystem, quad: &TorusQuadrature) -> Vec<Complex64> {
    (0..quad.node_count())
        .map(|i| weyl_denominator(rs, &quad.node(rs, i)))
        .collect()
}

/// Character coefficients ∫_G f χ̄_λ of a central function from its values
/// on the torus grid, via one forward FFT of f·D.
#[derive(Debug, Clone)]
pub struct CharacterProjector {
    pub quad: TorusQuadrature,
    spectrum: Vec<Complex64>,
}

impl CharacterProjector {
    pub fn new_real<F>(rs: &RootSystem, quad: TorusQuadrature, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        Self::new(rs, quad, |x| Complex64::new(f(x), 0.0))
    }

    pub fn new<F>(rs: &RootSystem, quad: TorusQuadrature, f: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64 + Sync,
    {
        let w = quad.weight();
        let mut data: Vec<Complex64> = (0..quad.node_count())
            .into_par_iter()
            .map(|i| {
                let xi = quad.node(rs, i);
                weyl_denominator(rs, &xi) * f(&xi) * w
            })
            .collect();
        fft_axes(&mut data, quad.per_axis, rs.rank, false);
        Self {
            quad,
            spectrum: data,
        }
    }

    pub fn coefficient(&self, rs: &RootSystem, coords: &[i64]) -> Complex64 {
        let n = self.quad.per_axis as i64;
        let c: Vec<i64> = coords.iter().map(|x| x + 1).collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for (w, el) in rs.weyl.iter().enumerate() {
            let wc = rs.apply_weyl_omega(w, &c);
            let mut idx = 0usize;
            let mut stride = 1usize;
            for &x in &wc {
                idx += x.rem_euclid(n) as usize * stride;
                stride *= n as usize;
            }
            acc += self.spectrum[idx] * el.sign as f64;
        }
        acc / rs.weyl_order() as f64
    }
}

/// Largest fundamental-weight coordinate of w(λ+ρ) over λ in a ball.
pub fn max_orbit_coordinate(rs: &RootSystem, radius: f64) -> usize {
    let mut mx = 0i64;
    rs.for_each_shifted_in_ball(radius, |c| {
        for w in 0..rs.weyl_order() {
            for x in rs.apply_weyl_omega(w, c) {
                mx = mx.max(x.abs());
            }
        }
        true
    });
    mx as usize
}

/// Uniform angle helper for rank-one closed forms: θ = ⟨α, ξ⟩ / 2.
pub fn half_angle(rs: &RootSystem, xi: &[f64]) -> f64 {
    0.5 * dot(&rs.positive_roots[0].dual, xi)
}
