//! Group elements, Haar sampling and conjugacy classes.
//!
//! A-series groups (and products of them) are realised by special unitary
//! matrices, one block per simple factor. Every other group runs in class
//! mode, where a point is only its conjugacy class given as an alcove
//! coordinate, sampled from the Weyl integration density.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::{pairwise_sum, stream_rng};
use crate::rootsys::{GroupSpec, RootSystem};
use crate::weyl::weyl_denominator;

pub type CMatrix = DMatrix<Complex64>;

/// Points per independent random stream in the parallel samplers.
pub const STREAM_CHUNK: usize = 4096;

/// Unitarity defect above which products are re-orthonormalised.
pub const REORTHONORMALIZE_AT: f64 = 1e-12;

/// An element of a matrix group: one special unitary block per simple factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub group: GroupSpec,
    pub blocks: Vec<CMatrix>,
}

fn require_matrix_model(rs: &RootSystem) -> Result<()> {
    if rs.spec.has_matrix_model() {
        Ok(())
    } else {
        Err(Error::Mode(format!(
            "{} has no matrix model here; use class mode (alcove coordinates sampled from the Weyl density)",
            rs.spec
        )))
    }
}

/// ⟨α_i, ξ⟩ for the simple roots.
fn simple_pairings(rs: &RootSystem, xi: &[f64]) -> Vec<f64> {
    (0..rs.rank)
        .map(|i| (0..rs.rank).map(|j| rs.gram[(i, j)] * xi[j]).sum())
        .collect()
}

fn block_sizes(rs: &RootSystem) -> Vec<usize> {
    rs.factor_ranges.iter().map(|r| r.len() + 1).collect()
}

impl GroupElement {
    pub fn identity(rs: &RootSystem) -> Result<Self> {
        require_matrix_model(rs)?;
        Ok(Self {
            group: rs.spec.clone(),
            blocks: block_sizes(rs)
                .into_iter()
                .map(|n| CMatrix::identity(n, n))
                .collect(),
        })
    }

    /// exp ξ for a torus coordinate ξ: diagonal blocks with the eigenphases
    /// of the defining representations.
    pub fn from_torus(rs: &RootSystem, xi: &[f64]) -> Result<Self> {
        require_matrix_model(rs)?;
        let blocks = rs
            .factor_ranges
            .iter()
            .map(|range| {
                let p = &simple_pairings(rs, xi)[range.clone()];
                // φ_1 = ⟨ω_1, ξ⟩ and φ_{k+1} = φ_k − ⟨α_k, ξ⟩
                let mut phi = rs.omega_pairing[range.start] * xi[range.start];
                let mut d = vec![Complex64::from_polar(1.0, phi)];
                for &pk in p {
                    phi -= pk;
                    d.push(Complex64::from_polar(1.0, phi));
                }
                CMatrix::from_diagonal(&nalgebra::DVector::from_vec(d))
            })
            .collect();
        Ok(Self {
            group: rs.spec.clone(),
            blocks,
        })
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(
            self.group, other.group,
            "product of elements of different groups"
        );
        Self {
            group: self.group.clone(),
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    pub fn inverse(&self) -> Self {
        Self {
            group: self.group.clone(),
            blocks: self.blocks.iter().map(|b| b.adjoint()).collect(),
        }
    }

    /// g · self · g⁻¹.
    pub fn conjugate_by(&self, g: &Self) -> Self {
        g.mul(self).mul(&g.inverse())
    }

    /// Largest of ‖U*U − I‖_max and |det U − 1| over the blocks.
    pub fn unitarity_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let n = b.nrows();
                let g = b.adjoint() * b - CMatrix::identity(n, n);
                let off = g.iter().map(|z| z.norm()).fold(0.0, f64::max);
                off.max((b.determinant() - 1.0).norm())
            })
            .fold(0.0, f64::max)
    }

    /// Gram-Schmidt on the columns, then the determinant phase is removed.
    pub fn reorthonormalize(&mut self) {
        for b in &mut self.blocks {
            let n = b.nrows();
            for j in 0..n {
                for i in 0..j {
                    let proj: Complex64 = (0..n).map(|k| b[(k, i)].conj() * b[(k, j)]).sum();
                    for k in 0..n {
                        let v = b[(k, i)];
                        b[(k, j)] -= proj * v;
                    }
                }
                let norm = (0..n).map(|k| b[(k, j)].norm_sqr()).sum::<f64>().sqrt();
                for k in 0..n {
                    b[(k, j)] /= norm;
                }
            }
            fix_determinant(b);
        }
    }

    /// Product that re-orthonormalises once the defect passes the threshold.
    pub fn mul_stable(&self, other: &Self) -> Self {
        let mut p = self.mul(other);
        if p.unitarity_defect() > REORTHONORMALIZE_AT {
            p.reorthonormalize();
        }
        p
    }

    /// Eigenphases of each block, in (−π, π], summing to zero per block.
    pub fn eigenphases(&self) -> Result<Vec<Vec<f64>>> {
        self.blocks.iter().map(block_phases).collect()
    }
}

fn fix_determinant(b: &mut CMatrix) {
    let n = b.nrows();
    let det = b.determinant();
    let root = Complex64::from_polar(1.0, -det.arg() / n as f64);
    for j in 0..n {
        for k in 0..n {
            b[(k, j)] *= root;
        }
    }
}

fn block_phases(b: &CMatrix) -> Result<Vec<f64>> {
    let n = b.nrows();
    let mut phases: Vec<f64> = if n == 2 {
        // U = [[a+ib, c+id], [−c+id, a−ib]]: the rotation angle is
        // atan2(|(b,c,d)|, a), accurate near the identity.
        let (a, bi) = (
            0.5 * (b[(0, 0)].re + b[(1, 1)].re),
            0.5 * (b[(0, 0)].im - b[(1, 1)].im),
        );
        let (c, d) = (
            0.5 * (b[(0, 1)].re - b[(1, 0)].re),
            0.5 * (b[(0, 1)].im + b[(1, 0)].im),
        );
        let t = (bi * bi + c * c + d * d).sqrt().atan2(a);
        vec![t, -t]
    } else {
        let ev = b.clone().eigenvalues().ok_or_else(|| {
            Error::Numerical("complex Schur decomposition did not converge".into())
        })?;
        ev.iter().map(|z| z.arg()).collect()
    };
    // Choose branches so the phases sum to exactly zero.
    let total: f64 = phases.iter().sum();
    let turns = (total / (2.0 * PI)).round() as i64;
    if turns != 0 {
        let mut order: Vec<usize> = (0..n).collect();
        if turns > 0 {
            order.sort_by(|&i, &j| phases[j].total_cmp(&phases[i]));
        } else {
            order.sort_by(|&i, &j| phases[i].total_cmp(&phases[j]));
        }
        for &i in order.iter().take(turns.unsigned_abs() as usize) {
            phases[i] -= 2.0 * PI * turns.signum() as f64;
        }
    }
    let residual: f64 = phases.iter().sum();
    if residual.abs() > 1e-8 {
        return Err(Error::Numerical(format!(
            "eigenphases do not sum to zero (residual {residual:.3e})"
        )));
    }
    Ok(phases)
}

/// The conjugacy class of an element as a point of the alcove Q.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyLog {
    pub xi: Vec<f64>,
    pub norm: f64,
}

impl ConjugacyLog {
    pub fn from_torus(rs: &RootSystem, xi: &[f64]) -> Result<Self> {
        let xi = rs.reduce_to_q(xi)?;
        let norm = rs.norm(&xi);
        Ok(Self { xi, norm })
    }

    /// The class of the inverse element.
    pub fn inverse(&self, rs: &RootSystem) -> Result<Self> {
        let neg: Vec<f64> = self.xi.iter().map(|v| -v).collect();
        Self::from_torus(rs, &neg)
    }
}

/// Alcove representative of the class of x.
pub fn conjugacy_log(rs: &RootSystem, x: &GroupElement) -> Result<ConjugacyLog> {
    if x.group != rs.spec {
        return Err(Error::Mode(format!(
            "element of {} used with root system {}",
            x.group, rs.spec
        )));
    }
    let mut pairings = vec![0.0; rs.rank];
    for (range, b) in rs.factor_ranges.iter().zip(&x.blocks) {
        let phases = block_phases(b)?;
        for (k, j) in range.clone().enumerate() {
            pairings[j] = phases[k] - phases[k + 1];
        }
    }
    let xi: Vec<f64> = (0..rs.rank)
        .map(|i| {
            (0..rs.rank)
                .map(|j| rs.gram_inv[(i, j)] * pairings[j])
                .sum()
        })
        .collect();
    ConjugacyLog::from_torus(rs, &xi)
}

/// d(x, e) for the bi-invariant metric: the alcove norm of the class, which
/// is the geodesic distance below 2r0 and a canonical proxy beyond.
pub fn distance_to_identity(rs: &RootSystem, x: &GroupElement) -> Result<f64> {
    Ok(conjugacy_log(rs, x)?.norm)
}

fn haar_block(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let mut g =
        |_: usize, _: usize| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    if n == 2 {
        let (a, b, c, d): (f64, f64, f64, f64) = {
            let z0 = g(0, 0);
            let z1 = g(0, 0);
            (z0.re, z0.im, z1.re, z1.im)
        };
        let r = (a * a + b * b + c * c + d * d).sqrt();
        let (a, b, c, d) = (a / r, b / r, c / r, d / r);
        return CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(a, b),
                Complex64::new(c, d),
                Complex64::new(-c, d),
                Complex64::new(a, -b),
            ],
        );
    }
    let z = CMatrix::from_fn(n, n, g);
    let qr = z.qr();
    let (mut q, r) = qr.unpack();
    // Phase correction makes Q Haar on U(n).
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for k in 0..n {
            q[(k, j)] *= ph;
        }
    }
    fix_determinant(&mut q);
    q
}

/// i.i.d. Haar elements from one generator.
pub fn haar_sample(
    rs: &RootSystem,
    rng: &mut ChaCha8Rng,
    count: usize,
) -> Result<Vec<GroupElement>> {
    require_matrix_model(rs)?;
    let sizes = block_sizes(rs);
    Ok((0..count)
        .map(|_| GroupElement {
            group: rs.spec.clone(),
            blocks: sizes.iter().map(|&n| haar_block(n, rng)).collect(),
        })
        .collect())
}

/// Names of the streams used for `count` points drawn in chunks.
pub fn stream_names(base: &str, count: usize) -> Vec<String> {
    (0..count.div_ceil(STREAM_CHUNK))
        .map(|i| format!("{base}/{i}"))
        .collect()
}

/// Haar sample drawn in parallel, one seeded stream per chunk of
/// `STREAM_CHUNK` points; identical for any thread count.
pub fn haar_sample_streams(
    rs: &RootSystem,
    seed: u64,
    base: &str,
    count: usize,
) -> Result<Vec<GroupElement>> {
    require_matrix_model(rs)?;
    let names = stream_names(base, count);
    let chunks: Result<Vec<Vec<GroupElement>>> = names
        .par_iter()
        .enumerate()
        .map(|(i, name)| {
            let n = STREAM_CHUNK.min(count - i * STREAM_CHUNK);
            haar_sample(rs, &mut stream_rng(seed, name), n)
        })
        .collect();
    Ok(chunks?.into_iter().flatten().collect())
}

/// Upper bound of |D|² used as the rejection envelope, from a grid search
/// with local refinement, padded by 1%.
pub fn denominator_envelope(rs: &RootSystem) -> f64 {
    let m = rs.rank;
    let per_axis: usize = match m {
        1 => 2001,
        2 => 301,
        _ => 61,
    };
    let total = per_axis.pow(m as u32);
    let at = |idx: usize| -> Vec<f64> {
        let mut k = idx;
        (0..m)
            .map(|i| {
                let c = k % per_axis;
                k /= per_axis;
                rs.gamma[(i, i)] * c as f64 / per_axis as f64
            })
            .collect()
    };
    let (best_idx, _) = (0..total)
        .map(|i| (i, weyl_denominator(rs, &at(i)).norm_sqr()))
        .fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    // Coordinate ascent from the best node.
    let mut x = at(best_idx);
    let mut best = weyl_denominator(rs, &x).norm_sqr();
    let mut step: Vec<f64> = (0..m).map(|i| rs.gamma[(i, i)] / per_axis as f64).collect();
    for _ in 0..200 {
        let mut improved = false;
        for i in 0..m {
            for s in [-1.0, 1.0] {
                let mut y = x.clone();
                y[i] += s * step[i];
                let v = weyl_denominator(rs, &y).norm_sqr();
                if v > best {
                    best = v;
                    x = y;
                    improved = true;
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    best * 1.01
}

/// Classes drawn from the Weyl density |D|²/|W| by rejection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassSample {
    pub points: Vec<Vec<f64>>,
    pub proposed: u64,
    pub envelope: f64,
}

impl ClassSample {
    pub fn acceptance_rate(&self) -> f64 {
        self.points.len() as f64 / self.proposed.max(1) as f64
    }
}

/// Rejection sampling of classes: uniform proposals on the torus cell (their
/// alcove images are uniform on Q), accepted with probability |D|²/envelope.
pub fn sample_classes(
    rs: &RootSystem,
    rng: &mut ChaCha8Rng,
    count: usize,
    envelope: f64,
) -> Result<ClassSample> {
    let m = rs.rank;
    let mut points = Vec::with_capacity(count);
    let mut proposed = 0u64;
    while points.len() < count {
        proposed += 1;
        let xi: Vec<f64> = (0..m)
            .map(|i| rng.random::<f64>() * rs.gamma[(i, i)])
            .collect();
        let d2 = weyl_denominator(rs, &xi).norm_sqr();
        if d2 > envelope {
            return Err(Error::Numerical(format!(
                "|D|² = {d2:.6} exceeds the rejection envelope {envelope:.6}"
            )));
        }
        if rng.random::<f64>() * envelope < d2 {
            points.push(rs.reduce_to_q(&xi)?);
        }
    }
    Ok(ClassSample {
        points,
        proposed,
        envelope,
    })
}

/// Parallel class sampling over named streams.
pub fn sample_classes_streams(
    rs: &RootSystem,
    seed: u64,
    base: &str,
    count: usize,
) -> Result<ClassSample> {
    let envelope = denominator_envelope(rs);
    let names = stream_names(base, count);
    let parts: Result<Vec<ClassSample>> = names
        .par_iter()
        .enumerate()
        .map(|(i, name)| {
            let n = STREAM_CHUNK.min(count - i * STREAM_CHUNK);
            sample_classes(rs, &mut stream_rng(seed, name), n, envelope)
        })
        .collect();
    let mut out = ClassSample {
        points: Vec::with_capacity(count),
        proposed: 0,
        envelope,
    };
    for p in parts? {
        out.points.extend(p.points);
        out.proposed += p.proposed;
    }
    Ok(out)
}

/// A point of G: a matrix, or in class mode only its conjugacy class.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupPoint {
    Matrix(GroupElement),
    Class(Vec<f64>),
}

impl GroupPoint {
    pub fn identity(rs: &RootSystem) -> Self {
        match GroupElement::identity(rs) {
            Ok(e) => GroupPoint::Matrix(e),
            Err(_) => GroupPoint::Class(vec![0.0; rs.rank]),
        }
    }

    pub fn class(&self, rs: &RootSystem) -> Result<ConjugacyLog> {
        match self {
            GroupPoint::Matrix(g) => conjugacy_log(rs, g),
            GroupPoint::Class(xi) => ConjugacyLog::from_torus(rs, xi),
        }
    }

    /// Class of x·y⁻¹. In class mode only x = e is available, since the
    /// class of a product is not determined by the classes of its factors.
    pub fn class_of_quotient(&self, rs: &RootSystem, y: &GroupPoint) -> Result<ConjugacyLog> {
        match (self, y) {
            (GroupPoint::Matrix(x), GroupPoint::Matrix(y)) => {
                conjugacy_log(rs, &x.mul(&y.inverse()))
            }
            (x, GroupPoint::Class(yc)) if x.is_identity(rs) => {
                ConjugacyLog::from_torus(rs, yc)?.inverse(rs)
            }
            _ => Err(Error::Mode(
                "class-mode points only support quotients x·y⁻¹ with x = e".into(),
            )),
        }
    }

    pub fn is_identity(&self, rs: &RootSystem) -> bool {
        match self {
            GroupPoint::Matrix(g) => g.blocks.iter().all(|b| {
                let n = b.nrows();
                (b - CMatrix::identity(n, n))
                    .iter()
                    .all(|z| z.norm() < 1e-14)
            }),
            GroupPoint::Class(xi) => rs.torus_norm(xi).map(|n| n < 1e-14).unwrap_or(false),
        }
    }
}

/// A finite non-negative combination of point masses.
#[derive(Debug, Clone)]
pub struct AtomicMeasure {
    pub points: Vec<GroupPoint>,
    pub weights: Vec<f64>,
}

impl AtomicMeasure {
    pub fn new(points: Vec<GroupPoint>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty(
                "an atomic measure needs at least one point".into(),
            ));
        }
        if points.len() != weights.len() {
            return Err(Error::Config(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::Config(format!("negative or undefined weight {w}")));
        }
        Ok(Self { points, weights })
    }

    pub fn dirac(point: GroupPoint) -> Self {
        Self {
            points: vec![point],
            weights: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// ‖ν‖ = Σ weights.
    pub fn mass(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    pub fn is_probability(&self) -> bool {
        (self.mass() - 1.0).abs() < 1e-12
    }

    /// Classes of x·y_j⁻¹ for every atom y_j.
    pub fn quotient_classes(&self, rs: &RootSystem, x: &GroupPoint) -> Result<Vec<ConjugacyLog>> {
        self.points
            .par_iter()
            .map(|y| x.class_of_quotient(rs, y))
            .collect()
    }

    /// (f ∗ ν)(x) = Σ_j w_j f(x y_j⁻¹) for a central f given on classes.
    pub fn convolve_central<F>(&self, rs: &RootSystem, x: &GroupPoint, f: F) -> Result<f64>
    where
        F: Fn(&ConjugacyLog) -> Result<f64> + Sync,
    {
        let terms: Result<Vec<f64>> = self
            .points
            .par_iter()
            .zip(&self.weights)
            .map(|(y, w)| Ok(w * f(&x.class_of_quotient(rs, y)?)?))
            .collect();
        Ok(pairwise_sum(&terms?))
    }
}

/// μ = (1/N) Σ δ_{y_j}.
pub fn empirical_measure(points: Vec<GroupPoint>) -> Result<AtomicMeasure> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Empty(
            "empirical measure of an empty point list".into(),
        ));
    }
    AtomicMeasure::new(points, vec![1.0 / n as f64; n])
}

/// On-disk form of a sampled point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSetFile {
    pub group: GroupSpec,
    pub seed: u64,
    pub streams: Vec<String>,
    /// Per point, per block: row-major (re, im) entries.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub matrices: Option<Vec<Vec<Vec<[f64; 2]>>>>,
    /// Per point: alcove coordinates (class mode).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub classes: Option<Vec<Vec<f64>>>,
}

impl PointSetFile {
    pub fn from_points(
        group: &GroupSpec,
        seed: u64,
        streams: Vec<String>,
        points: &[GroupPoint],
    ) -> Result<Self> {
        let mut matrices = Vec::new();
        let mut classes = Vec::new();
        for p in points {
            match p {
                GroupPoint::Matrix(g) => matrices.push(
                    g.blocks
                        .iter()
                        .map(|b| {
                            let n = b.nrows();
                            (0..n * n)
                                .map(|k| [b[(k / n, k % n)].re, b[(k / n, k % n)].im])
                                .collect()
                        })
                        .collect(),
                ),
                GroupPoint::Class(xi) => classes.push(xi.clone()),
            }
        }
        if !matrices.is_empty() && !classes.is_empty() {
            return Err(Error::Mode(
                "a point set mixes matrix and class points".into(),
            ));
        }
        Ok(Self {
            group: group.clone(),
            seed,
            streams,
            matrices: (!matrices.is_empty()).then_some(matrices),
            classes: (!classes.is_empty()).then_some(classes),
        })
    }

    pub fn points(&self) -> Result<Vec<GroupPoint>> {
        if let Some(ms) = &self.matrices {
            return ms
                .iter()
                .map(|blocks| {
                    let blocks = blocks
                        .iter()
                        .map(|entries| {
                            let n = (entries.len() as f64).sqrt().round() as usize;
                            if n * n != entries.len() {
                                return Err(Error::Config(format!(
                                    "block with {} entries is not square",
                                    entries.len()
                                )));
                            }
                            Ok(CMatrix::from_row_iterator(
                                n,
                                n,
                                entries.iter().map(|e| Complex64::new(e[0], e[1])),
                            ))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(GroupPoint::Matrix(GroupElement {
                        group: self.group.clone(),
                        blocks,
                    }))
                })
                .collect();
        }
        Ok(self
            .classes
            .iter()
            .flatten()
            .map(|xi| GroupPoint::Class(xi.clone()))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rs(s: &str) -> RootSystem {
        RootSystem::from_spec_str(s).unwrap()
    }

    #[test]
    fn identity_has_zero_log() {
        for s in ["A1", "A2", "A1xA1"] {
            let r = rs(s);
            let e = GroupElement::identity(&r).unwrap();
            let c = conjugacy_log(&r, &e).unwrap();
            assert!(c.norm < 1e-15, "{s}");
            assert_eq!(distance_to_identity(&r, &e).unwrap(), c.norm);
        }
    }

    #[test]
    fn rank_one_eigenphase_gives_root_pairing() {
        let r = rs("A1");
        for theta in [0.1, 0.7, 1.5, 2.9, 3.1] {
            let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                Complex64::from_polar(1.0, theta),
                Complex64::from_polar(1.0, -theta),
            ]));
            let x = GroupElement {
                group: r.spec.clone(),
                blocks: vec![d],
            };
            let c = conjugacy_log(&r, &x).unwrap();
            let pairing = r.positive_roots[0].dual[0] * c.xi[0];
            assert!(
                (pairing - 2.0 * theta).abs() < 1e-12,
                "θ={theta}: {pairing}"
            );
        }
    }

    #[test]
    fn log_inverts_exp_inside_the_alcove() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in ["A1", "A2", "A1xA1"] {
            let r = rs(s);
            for _ in 0..200 {
                let raw: Vec<f64> = (0..r.rank)
                    .map(|i| rng.random::<f64>() * r.gamma[(i, i)])
                    .collect();
                let xi = r.reduce_to_q(&raw).unwrap();
                let g = GroupElement::from_torus(&r, &xi).unwrap();
                let back = conjugacy_log(&r, &g).unwrap();
                let err = xi
                    .iter()
                    .zip(&back.xi)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(err < 1e-8, "{s} {xi:?} -> {:?}", back.xi);
            }
        }
    }

    #[test]
    fn samples_are_special_unitary_and_products_stay_so() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for s in ["A1", "A2", "A1xA1"] {
            let r = rs(s);
            let xs = haar_sample(&r, &mut rng, 1000).unwrap();
            assert!(xs.iter().all(|x| x.unitarity_defect() < 1e-10), "{s}");
            let mut p = GroupElement::identity(&r).unwrap();
            for x in &xs {
                p = p.mul_stable(x);
            }
            assert!(p.unitarity_defect() < 1e-8, "{s}: {}", p.unitarity_defect());
            let e = p.mul(&p.inverse());
            assert!(GroupPoint::Matrix(e.clone()).class(&r).unwrap().norm < 1e-6);
        }
    }

    #[test]
    fn conjugation_and_inversion_preserve_the_class_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for s in ["A1", "A2"] {
            let r = rs(s);
            let xs = haar_sample(&r, &mut rng, 100).unwrap();
            let gs = haar_sample(&r, &mut rng, 100).unwrap();
            for (x, g) in xs.iter().zip(&gs) {
                let a = conjugacy_log(&r, x).unwrap().norm;
                let b = conjugacy_log(&r, &x.conjugate_by(g)).unwrap().norm;
                let c = distance_to_identity(&r, &x.inverse()).unwrap();
                assert!((a - b).abs() < 1e-9, "{s}: {a} vs {b}");
                assert!((a - c).abs() < 1e-9, "{s}: {a} vs {c}");
            }
        }
    }

    #[test]
    fn distance_on_the_small_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for s in ["A1", "A2", "A1xA1"] {
            let r = rs(s);
            for _ in 0..20 {
                let dir: Vec<f64> = (0..r.rank).map(|_| rng.random::<f64>()).collect();
                let xi = r.reduce_to_q(&dir).unwrap();
                let scale = 0.5 * r.r0 / r.norm(&xi);
                let xi: Vec<f64> = xi.iter().map(|v| v * scale).collect();
                let g = GroupElement::from_torus(&r, &xi).unwrap();
                let d = distance_to_identity(&r, &g).unwrap();
                assert!((d - 0.5 * r.r0).abs() < 1e-9, "{s}: {d}");
            }
        }
    }

    #[test]
    fn stream_sampling_is_reproducible() {
        let r = rs("A2");
        let a = haar_sample_streams(&r, 11, "pts", 5000).unwrap();
        let b = haar_sample_streams(&r, 11, "pts", 5000).unwrap();
        assert_eq!(a, b);
        assert_eq!(stream_names("pts", 5000).len(), 2);
        let c = haar_sample_streams(&r, 12, "pts", 10).unwrap();
        assert_ne!(a[..10], c[..]);
    }

    #[test]
    fn class_mode_is_required_off_the_a_series() {
        let r = rs("G2");
        assert!(matches!(GroupElement::identity(&r), Err(Error::Mode(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let env = denominator_envelope(&r);
        let cs = sample_classes(&r, &mut rng, 200, env).unwrap();
        assert!(cs.points.iter().all(|x| r.domain.contains(x, 1e-9)));
        assert!(cs.acceptance_rate() > 0.0);
    }

    #[test]
    fn envelope_matches_known_maxima() {
        // max |D|² is 4 on SU(2) and 27 on SU(3).
        assert!((denominator_envelope(&rs("A1")) / 1.01 - 4.0).abs() < 1e-9);
        assert!((denominator_envelope(&rs("A2")) / 1.01 - 27.0).abs() < 1e-6);
    }

    #[test]
    fn empirical_measures() {
        let r = rs("A1");
        let e = GroupPoint::identity(&r);
        let d = empirical_measure(vec![e.clone()]).unwrap();
        assert_eq!(d.mass(), 1.0);
        assert!(d.is_probability());
        assert!(matches!(empirical_measure(vec![]), Err(Error::Empty(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<GroupPoint> = haar_sample(&r, &mut rng, 7)
            .unwrap()
            .into_iter()
            .map(GroupPoint::Matrix)
            .collect();
        let mu = empirical_measure(pts.clone()).unwrap();
        assert!(mu.is_probability());
        let x = GroupPoint::Matrix(haar_sample(&r, &mut rng, 1).unwrap().remove(0));
        let got = mu.convolve_central(&r, &x, |c| Ok(c.norm)).unwrap();
        let want: f64 = pts
            .iter()
            .map(|y| match (&x, y) {
                (GroupPoint::Matrix(a), GroupPoint::Matrix(b)) => {
                    distance_to_identity(&r, &a.mul(&b.inverse())).unwrap()
                }
                _ => unreachable!(),
            })
            .sum::<f64>()
            / 7.0;
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn point_sets_round_trip() {
        let r = rs("A1xA1");
        let pts: Vec<GroupPoint> = haar_sample_streams(&r, 3, "rt", 5)
            .unwrap()
            .into_iter()
            .map(GroupPoint::Matrix)
            .collect();
        let f = PointSetFile::from_points(&r.spec, 3, stream_names("rt", 5), &pts).unwrap();
        let back = PointSetFile::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.points().unwrap(), pts);
        let g = rs("G2");
        let cls: Vec<GroupPoint> = vec![GroupPoint::Class(vec![0.1, 0.2])];
        let f = PointSetFile::from_points(&g.spec, 1, vec![], &cls).unwrap();
        assert_eq!(
            PointSetFile::from_json(&f.to_json().unwrap())
                .unwrap()
                .points()
                .unwrap(),
            cls
        );
    }
}
