//! The divergence machinery: the radial profile k_{R0}, its averages over
//! empirical measures, the rational-independence probe, the search for
//! simultaneous phase alignment, and finite stages of the construction of a
//! divergent integrable function.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{E, PI};

use crate::error::{Error, Result};
use crate::gpoints::{
    empirical_measure, haar_sample_streams, stream_names, AtomicMeasure, ConjugacyLog, GroupPoint,
    PointSetFile,
};
use crate::kernels::poisson::{polynomial_over_denominator, reference_calibration};
use crate::kernels::{
    bessel_tilde, bochner_riesz_transform_constant, critical_index, CentralKernel, RadialMultiplier,
};
use crate::numerics::{golden_max, linear_fit, pairwise_sum, LinearFit};
use crate::rootsys::RootSystem;
use crate::weyl::{weyl_integrate_radial, TorusQuadrature};

/// ψ_{R0}: R0ⁿ up to 1/R0, r⁻ⁿ up to r0, r⁻ⁿ(2 − r/r0) up to 2r0, then 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiProfile {
    pub scale: f64,
    pub r0: f64,
    pub n: usize,
}

impl PsiProfile {
    pub fn new(rs: &RootSystem, scale: f64) -> Result<Self> {
        if !(scale > E) || !(1.0 / scale < rs.r0) {
            return Err(Error::Hypothesis(format!(
                "the profile needs R0 > e and 1/R0 < r0 = {:.4} (got R0 = {scale})",
                rs.r0
            )));
        }
        Ok(Self {
            scale,
            r0: rs.r0,
            n: rs.dim,
        })
    }

    pub fn value(&self, r: f64) -> f64 {
        let n = self.n as i32;
        if r <= 1.0 / self.scale {
            self.scale.powi(n)
        } else if r <= self.r0 {
            r.powi(-n)
        } else if r < 2.0 * self.r0 {
            r.powi(-n) * (2.0 - r / self.r0)
        } else {
            0.0
        }
    }
}

/// ∫_G k_{R0} by the Weyl integration formula in polar coordinates, with
/// panel breaks at 1/R0, r0 and 2r0.
pub fn k_profile_integral(rs: &RootSystem, scale: f64, panels_per_decade: usize) -> Result<f64> {
    let psi = PsiProfile::new(rs, scale)?;
    weyl_integrate_radial(
        rs,
        |r| psi.value(r),
        &[0.0, 1.0 / scale, rs.r0, 2.0 * rs.r0],
        panels_per_decade,
        20,
    )
}

/// ∫k against log R0 over a set of scales.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KProfileFit {
    pub scales: Vec<f64>,
    pub integrals: Vec<f64>,
    pub fit: LinearFit,
}

pub fn k_profile_fit(rs: &RootSystem, scales: &[f64]) -> Result<KProfileFit> {
    let integrals = scales
        .iter()
        .map(|&s| k_profile_integral(rs, s, 8))
        .collect::<Result<Vec<_>>>()?;
    let logs: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    Ok(KProfileFit {
        scales: scales.to_vec(),
        integrals: integrals.clone(),
        fit: linear_fit(&logs, &integrals),
    })
}

/// (1/N) Σ ψ_{R0}(d(x y_j⁻¹, e)).
pub fn empirical_k_average(
    rs: &RootSystem,
    x: &GroupPoint,
    mu: &AtomicMeasure,
    scale: f64,
) -> Result<f64> {
    let psi = PsiProfile::new(rs, scale)?;
    mu.convolve_central(rs, x, |c| Ok(psi.value(c.norm)))
}

/// Outcome of the small-coefficient integer relation search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum IndependenceVerdict {
    /// No relation within the bound. Evidence, not proof.
    NoRelationFound { coeff_bound: i64, tol: f64 },
    Relation {
        coefficients: Vec<i64>,
        residual: f64,
    },
}

impl IndependenceVerdict {
    pub fn independent(&self) -> bool {
        matches!(self, IndependenceVerdict::NoRelationFound { .. })
    }
}

/// Largest count handled by the exhaustive search.
pub const EXHAUSTIVE_LIMIT: usize = 6;

/// Exhaustive search for c ≠ 0 with |c_j| ≤ bound and |Σ c_j x_j| < tol,
/// split in two halves (meet in the middle). Returns the relation with the
/// smallest max-coefficient, normalised so the first nonzero entry is positive.
pub fn independence_probe(
    norms: &[f64],
    coeff_bound: i64,
    tol: f64,
) -> Result<IndependenceVerdict> {
    let n = norms.len();
    if n == 0 {
        return Err(Error::Empty(
            "independence probe needs at least one number".into(),
        ));
    }
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::Mode(format!(
            "exhaustive relation search handles at most {EXHAUSTIVE_LIMIT} numbers (got {n}); use a lattice-reduction method"
        )));
    }
    let half = n / 2;
    let enumerate = |xs: &[f64]| -> Vec<(f64, Vec<i64>)> {
        let mut out = vec![(0.0, vec![])];
        for &x in xs {
            let mut next = Vec::with_capacity(out.len() * (2 * coeff_bound as usize + 1));
            for (s, c) in &out {
                for k in -coeff_bound..=coeff_bound {
                    let mut c2 = c.clone();
                    c2.push(k);
                    next.push((s + k as f64 * x, c2));
                }
            }
            out = next;
        }
        out
    };
    let left = enumerate(&norms[..half]);
    let mut right = enumerate(&norms[half..]);
    right.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<(i64, Vec<i64>, f64)> = None;
    for (s, a) in &left {
        let lo = right.partition_point(|(v, _)| *v <= -s - tol);
        for (v, b) in right[lo..].iter().take_while(|(v, _)| *v < -s + tol) {
            let mut c: Vec<i64> = a.iter().chain(b).copied().collect();
            if c.iter().all(|&k| k == 0) {
                continue;
            }
            if let Some(&first) = c.iter().find(|&&k| k != 0) {
                if first < 0 {
                    c.iter_mut().for_each(|k| *k = -*k);
                }
            }
            let size = c.iter().map(|k| k.abs()).max().unwrap_or(0);
            let better = match &best {
                None => true,
                Some((bs, bc, _)) => size < *bs || (size == *bs && c < *bc),
            };
            if better {
                best = Some((size, c, (s + v).abs()));
            }
        }
    }
    Ok(match best {
        None => IndependenceVerdict::NoRelationFound { coeff_bound, tol },
        Some((_, coefficients, residual)) => IndependenceVerdict::Relation {
            coefficients,
            residual,
        },
    })
}

/// One summand of K̃_R ∗ μ(x): weight · amplitude · Rⁿ J̃_{n−1/2}(R·norm),
/// where amplitude = c_n·C·Π⟨α,ξ⟩/D(ξ) (real and ≥ 0 on Q0) and zero off Q0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KroneckerTerm {
    pub norm: f64,
    pub amplitude: f64,
    pub weight: f64,
}

/// Terms for the classes ξ_j = class of x y_j⁻¹.
pub fn kronecker_terms(
    rs: &RootSystem,
    c: Complex64,
    classes: &[ConjugacyLog],
    weights: &[f64],
) -> Vec<KroneckerTerm> {
    let n = rs.dim;
    let cn = bochner_riesz_transform_constant(n, critical_index(rs));
    classes
        .iter()
        .zip(weights)
        .map(|(cl, &w)| {
            let amplitude = if rs.domain.in_q0(&cl.xi) {
                (c * polynomial_over_denominator(rs, &cl.xi)).re * cn
            } else {
                0.0
            };
            KroneckerTerm {
                norm: cl.norm,
                amplitude,
                weight: w,
            }
        })
        .collect()
}

/// Σ_j w_j A_j Rⁿ J̃_{n−1/2}(R|ξ_j|).
pub fn tilde_sum(n: usize, terms: &[KroneckerTerm], big_r: f64) -> f64 {
    let nu = n as f64 - 0.5;
    let rn = big_r.powi(n as i32);
    let vals: Vec<f64> = terms
        .iter()
        .filter(|t| t.amplitude != 0.0 && t.weight != 0.0)
        .map(|t| t.weight * t.amplitude * rn * bessel_tilde(nu, big_r * t.norm))
        .collect();
    pairwise_sum(&vals)
}

/// The simultaneous-alignment value Σ w_j |A_j| √(2/π) / |ξ_j|ⁿ.
pub fn alignment_target(n: usize, terms: &[KroneckerTerm]) -> f64 {
    let c = (2.0 / PI).sqrt();
    pairwise_sum(
        &terms
            .iter()
            .filter(|t| t.amplitude != 0.0 && t.norm > 0.0)
            .map(|t| t.weight * t.amplitude.abs() * c / t.norm.powi(n as i32))
            .collect::<Vec<_>>(),
    )
}

/// Size of the first correction to the Bessel asymptotics at R,
/// Σ w|A|√(2/π)(4ν²−1)/(8R|ξ|^{n+1}).
pub fn remainder_bound(n: usize, terms: &[KroneckerTerm], big_r: f64) -> f64 {
    let nu = n as f64 - 0.5;
    let c = (2.0 / PI).sqrt() * (4.0 * nu * nu - 1.0) / 8.0;
    terms
        .iter()
        .filter(|t| t.amplitude != 0.0 && t.norm > 0.0)
        .map(|t| t.weight * t.amplitude.abs() * c / (big_r * t.norm.powi(n as i32 + 1)))
        .sum()
}

/// Smallest R at which [`remainder_bound`] is below `rel` times the target,
/// and at least the range where the expansion itself is accurate.
pub fn asymptotic_onset(n: usize, terms: &[KroneckerTerm], rel: f64) -> f64 {
    let nu = n as f64 - 0.5;
    let target = alignment_target(n, terms);
    if target == 0.0 {
        return 1.0;
    }
    let min_norm = terms
        .iter()
        .filter(|t| t.amplitude != 0.0 && t.norm > 0.0)
        .map(|t| t.norm)
        .fold(f64::INFINITY, f64::min);
    (remainder_bound(n, terms, 1.0) / (rel * target))
        .max(2.0 * nu * nu / min_norm)
        .max(1.0)
}

/// Result of the phase-alignment search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KroneckerSearch {
    pub achieved_sup: f64,
    pub witness_r: f64,
    pub theoretical_target: f64,
    pub r_lo: f64,
    pub r_hi: f64,
    /// Right end of the part of the window actually scanned.
    pub scanned_to: f64,
    pub evaluations: usize,
    /// The budget ran out before the coarse grid covered the window.
    pub partial: bool,
}

impl KroneckerSearch {
    pub fn ratio(&self) -> f64 {
        if self.theoretical_target > 0.0 {
            self.achieved_sup / self.theoretical_target
        } else {
            0.0
        }
    }
}

/// Grid points per block; each block also refines its best local maxima.
pub const SEARCH_BLOCK: usize = 8192;
const REFINED_PER_BLOCK: usize = 10;
const GOLDEN_ITERS: usize = 30;

/// Cost of one block of the search in objective evaluations.
pub fn search_block_cost() -> usize {
    SEARCH_BLOCK + REFINED_PER_BLOCK * (GOLDEN_ITERS + 2)
}

/// Grid spacing π / (4 max|ξ_j|).
pub fn search_spacing(terms: &[KroneckerTerm]) -> f64 {
    let max_norm = terms
        .iter()
        .filter(|t| t.amplitude != 0.0)
        .map(|t| t.norm)
        .fold(0.0, f64::max);
    PI / (4.0 * max_norm.max(1e-12))
}

/// Window end so that the coarse grid from `r_lo` fits the budget.
pub fn window_for_budget(terms: &[KroneckerTerm], r_lo: f64, budget: usize) -> f64 {
    let blocks = (budget / search_block_cost()).max(1);
    r_lo + (blocks * SEARCH_BLOCK) as f64 * search_spacing(terms)
}

/// Maximises |Σ_j w_j K̃_R(ξ_j)| over R ∈ [r_lo, r_hi]: a coarse grid with
/// spacing π/(4 max|ξ_j|), processed in blocks, with golden-section
/// refinement around the best local maxima of each block. Only whole blocks
/// are run, so a larger budget never lowers the result.
pub fn kronecker_sup_search(
    n: usize,
    terms: &[KroneckerTerm],
    r_lo: f64,
    r_hi: f64,
    budget: usize,
) -> Result<KroneckerSearch> {
    if !(r_lo < r_hi) {
        return Err(Error::Config(format!(
            "search window needs R_lo < R_hi (got {r_lo}, {r_hi})"
        )));
    }
    let active: Vec<KroneckerTerm> = terms
        .iter()
        .copied()
        .filter(|t| t.amplitude != 0.0)
        .collect();
    let target = alignment_target(n, &active);
    if active.is_empty() {
        return Ok(KroneckerSearch {
            achieved_sup: 0.0,
            witness_r: r_lo,
            theoretical_target: 0.0,
            r_lo,
            r_hi,
            scanned_to: r_hi,
            evaluations: 0,
            partial: false,
        });
    }
    if active.iter().any(|t| t.norm <= 0.0) {
        return Err(Error::Hypothesis(
            "a class at the identity has no oscillation to align".into(),
        ));
    }
    let h = search_spacing(&active);
    let total = ((r_hi - r_lo) / h).floor() as usize + 1;
    let f = |r: f64| tilde_sum(n, &active, r).abs();
    let mut best = (r_lo, f64::NEG_INFINITY);
    let mut evaluations = 0usize;
    let mut start = 0usize;
    while start < total {
        let len = SEARCH_BLOCK.min(total - start);
        let cost = len + REFINED_PER_BLOCK * (GOLDEN_ITERS + 2);
        if evaluations + cost > budget {
            break;
        }
        let vals: Vec<f64> = (start..start + len)
            .into_par_iter()
            .map(|i| f(r_lo + i as f64 * h))
            .collect();
        evaluations += len;
        let mut peaks: Vec<usize> = (0..len)
            .filter(|&i| {
                (i == 0 || vals[i] >= vals[i - 1]) && (i + 1 == len || vals[i] >= vals[i + 1])
            })
            .collect();
        peaks.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
        for (i, v) in vals.iter().enumerate() {
            if *v > best.1 {
                best = (r_lo + (start + i) as f64 * h, *v);
            }
        }
        for &i in peaks.iter().take(REFINED_PER_BLOCK) {
            let c = r_lo + (start + i) as f64 * h;
            let (a, b) = ((c - h).max(r_lo), (c + h).min(r_hi));
            let (x, v) = golden_max(f, a, b, GOLDEN_ITERS);
            evaluations += GOLDEN_ITERS + 2;
            if v > best.1 {
                best = (x, v);
            }
        }
        start += len;
    }
    let partial = start < total;
    if start == 0 {
        // Not even one block fits: evaluate what the budget allows.
        let len = budget.min(total);
        for i in 0..len {
            let r = r_lo + i as f64 * h;
            let v = f(r);
            if v > best.1 {
                best = (r, v);
            }
        }
        evaluations += len;
        start = len;
    }
    Ok(KroneckerSearch {
        achieved_sup: best.1.max(0.0),
        witness_r: best.0,
        theoretical_target: target,
        r_lo,
        r_hi,
        scanned_to: (r_lo + start.saturating_sub(1) as f64 * h).min(r_hi),
        evaluations,
        partial,
    })
}

/// max over one common period of the leading-term sum when every norm is an
/// integer multiple of `base`: the best any R can do for commensurate norms.
pub fn commensurate_ceiling(n: usize, terms: &[KroneckerTerm], base: f64, samples: usize) -> f64 {
    let c = (2.0 / PI).sqrt();
    let active: Vec<&KroneckerTerm> = terms.iter().filter(|t| t.amplitude != 0.0).collect();
    let g = |theta: f64| -> f64 {
        active
            .iter()
            .map(|t| {
                let k = (t.norm / base).round();
                t.weight * t.amplitude * c / t.norm.powi(n as i32)
                    * (k * theta - n as f64 * PI / 2.0).cos()
            })
            .sum::<f64>()
            .abs()
    };
    let h = 2.0 * PI / samples as f64;
    let (i, _) = (0..samples)
        .map(|i| (i, g(i as f64 * h)))
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let t = i as f64 * h;
    golden_max(g, t - h, t + h, 60).1.max(g(t))
}

/// Settings of the divergence experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceConfig {
    pub seed: u64,
    pub probes: usize,
    pub n_start: usize,
    pub n_max: usize,
    /// Certification rounds, each doubling N.
    pub max_retries: usize,
    /// Objective evaluations per probe in the alignment search.
    pub budget: usize,
    /// Allowed size of the Bessel correction relative to the target.
    pub asymptotic_tolerance: f64,
    /// Lower end of every search window (the construction uses 6R_{j−1}).
    pub r_min: f64,
    pub k_scales: Vec<f64>,
    /// Largest R0 considered; larger requirements are capped and reported.
    pub scale_cap: f64,
    /// Skips the δ_e baseline and N calibration: use exactly this N.
    pub forced_n: Option<usize>,
}

impl Default for DivergenceConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            probes: 200,
            n_start: 8,
            n_max: 256,
            max_retries: 3,
            budget: 100_000,
            asymptotic_tolerance: 0.01,
            r_min: 1.0,
            k_scales: vec![10.0, 100.0, 1000.0, 10000.0],
            scale_cap: 1e8,
            forced_n: None,
        }
    }
}

/// One row of the probe table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeRow {
    pub probe: usize,
    pub k_average: f64,
    pub achieved_sup: f64,
    pub witness_r: f64,
    pub target: f64,
    pub partial: bool,
    pub pass: bool,
}

/// Everything `find_divergence_measure` decided and measured.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub group: String,
    pub level: f64,
    pub epsilon: f64,
    pub constant_re: f64,
    pub constant_im: f64,
    pub k_fit: KProfileFit,
    /// inf over Q0 of the alignment prefactor |A(ξ)|√(2/π).
    pub prefactor_floor: f64,
    /// c(G) = k-slope × prefactor floor.
    pub log_constant: f64,
    pub scale: f64,
    pub scale_capped: bool,
    pub n_points: usize,
    pub baseline_pass_rate: f64,
    pub k_pass_rate: f64,
    pub pass_rate: f64,
    pub rounds: usize,
    pub certified: bool,
    pub seed: u64,
    pub probe_stream: String,
    pub measure_streams: Vec<String>,
    pub probes: Vec<ProbeRow>,
}

/// The measure together with its certificate.
#[derive(Debug, Clone)]
pub struct DivergenceRun {
    pub measure: AtomicMeasure,
    pub points: PointSetFile,
    pub report: DivergenceReport,
}

fn probe_points(rs: &RootSystem, seed: u64, count: usize) -> Result<Vec<GroupPoint>> {
    Ok(haar_sample_streams(rs, seed, "probes", count)?
        .into_iter()
        .map(GroupPoint::Matrix)
        .collect())
}

fn certify(
    rs: &RootSystem,
    c: Complex64,
    mu: &AtomicMeasure,
    probes: &[GroupPoint],
    level: f64,
    cfg: &DivergenceConfig,
    scale: f64,
) -> Result<Vec<ProbeRow>> {
    let n = rs.dim;
    probes
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let classes = mu.quotient_classes(rs, x)?;
            let terms = kronecker_terms(rs, c, &classes, &mu.weights);
            let psi = PsiProfile::new(rs, scale)?;
            let k_average = pairwise_sum(
                &classes
                    .iter()
                    .zip(&mu.weights)
                    .map(|(cl, w)| w * psi.value(cl.norm))
                    .collect::<Vec<_>>(),
            );
            let r_lo = asymptotic_onset(n, &terms, cfg.asymptotic_tolerance).max(cfg.r_min);
            let r_hi = window_for_budget(&terms, r_lo, cfg.budget);
            let s = kronecker_sup_search(n, &terms, r_lo, r_hi, cfg.budget)?;
            Ok(ProbeRow {
                probe: i,
                k_average,
                achieved_sup: s.achieved_sup,
                witness_r: s.witness_r,
                target: s.theoretical_target,
                partial: s.partial,
                pass: s.achieved_sup > level,
            })
        })
        .collect()
}

fn rate(rows: &[ProbeRow]) -> f64 {
    rows.iter().filter(|r| r.pass).count() as f64 / rows.len().max(1) as f64
}

/// Builds μ = (1/N)Σδ_{y_j} with |K̃_R ∗ μ(x)| > L for some R in the search
/// window on at least a (1−ε) fraction of a seeded probe grid.
///
/// R0 is chosen with c·log R0 > L, where c is the fitted k-slope times the
/// floor of the alignment prefactor; N is doubled until the k-average
/// exceeds the k-slope times log R0 on a (1−ε) fraction of probes, then the
/// alignment search certifies, doubling N again on failure. A run that never
/// certifies is returned with `certified = false` and its diagnostics.
pub fn find_divergence_measure(
    rs: &RootSystem,
    level: f64,
    epsilon: f64,
    cfg: &DivergenceConfig,
) -> Result<DivergenceRun> {
    if !(level > 1.0) || !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!(
            "need L > 1 and 0 < ε < 1 (got L = {level}, ε = {epsilon})"
        )));
    }
    if cfg.probes == 0 {
        return Err(Error::Config("the probe grid is empty".into()));
    }
    let c = reference_calibration(rs)?.constant();
    let k_fit = k_profile_fit(rs, &cfg.k_scales)?;
    let floor =
        c.norm() * bochner_riesz_transform_constant(rs.dim, critical_index(rs)) * (2.0 / PI).sqrt();
    let log_constant = k_fit.fit.slope * floor;
    if !(log_constant > 0.0) {
        return Err(Error::Numerical(format!(
            "non-positive log constant {log_constant}"
        )));
    }
    let wanted = (level / log_constant).exp() * (1.0 + 1e-9);
    let min_scale = (1.0 / rs.r0).max(E) * 1.0001;
    let scale_capped = wanted > cfg.scale_cap;
    let scale = wanted.clamp(min_scale, cfg.scale_cap);
    let probes = probe_points(rs, cfg.seed, cfg.probes)?;
    let e = GroupPoint::identity(rs);

    let mut report = DivergenceReport {
        group: rs.spec.to_string(),
        level,
        epsilon,
        constant_re: c.re,
        constant_im: c.im,
        k_fit,
        prefactor_floor: floor,
        log_constant,
        scale,
        scale_capped,
        n_points: 1,
        baseline_pass_rate: 0.0,
        k_pass_rate: 0.0,
        pass_rate: 0.0,
        rounds: 0,
        certified: false,
        seed: cfg.seed,
        probe_stream: "probes".into(),
        measure_streams: vec![],
        probes: vec![],
    };

    let sample = |n: usize| -> Result<(AtomicMeasure, Vec<GroupPoint>, Vec<String>)> {
        let base = format!("measure/{n}");
        let pts: Vec<GroupPoint> = haar_sample_streams(rs, cfg.seed, &base, n)?
            .into_iter()
            .map(GroupPoint::Matrix)
            .collect();
        Ok((empirical_measure(pts.clone())?, pts, stream_names(&base, n)))
    };
    let finish = |mu: AtomicMeasure,
                  pts: Vec<GroupPoint>,
                  streams: Vec<String>,
                  mut report: DivergenceReport| {
        report.measure_streams = streams.clone();
        let points = PointSetFile::from_points(&rs.spec, cfg.seed, streams, &pts)?;
        Ok(DivergenceRun {
            measure: mu,
            points,
            report,
        })
    };

    let mut n = match cfg.forced_n {
        Some(n) => n.max(1),
        None => {
            // δ_e already certifies small levels.
            let mu = AtomicMeasure::dirac(e.clone());
            let rows = certify(rs, c, &mu, &probes, level, cfg, scale)?;
            report.baseline_pass_rate = rate(&rows);
            if report.baseline_pass_rate >= 1.0 - epsilon {
                report.pass_rate = report.baseline_pass_rate;
                report.k_pass_rate = f64::NAN;
                report.certified = true;
                report.probes = rows;
                return finish(mu, vec![e], vec![], report);
            }
            // Smallest N whose k-averages clear k-slope · log R0.
            let threshold = report.k_fit.fit.slope * scale.ln();
            let mut n = cfg.n_start.max(2);
            loop {
                let (mu, _, _) = sample(n)?;
                let avgs: Vec<f64> = probes
                    .par_iter()
                    .map(|x| empirical_k_average(rs, x, &mu, scale))
                    .collect::<Result<_>>()?;
                report.k_pass_rate =
                    avgs.iter().filter(|&&a| a >= threshold).count() as f64 / avgs.len() as f64;
                if report.k_pass_rate >= 1.0 - epsilon || n >= cfg.n_max {
                    break n;
                }
                n = (2 * n).min(cfg.n_max);
            }
        }
    };

    let mut last = None;
    for round in 0..=cfg.max_retries {
        let (mu, pts, streams) = sample(n)?;
        let rows = certify(rs, c, &mu, &probes, level, cfg, scale)?;
        report.rounds = round + 1;
        report.n_points = n;
        report.pass_rate = rate(&rows);
        report.probes = rows;
        let done = report.pass_rate >= 1.0 - epsilon;
        last = Some((mu, pts, streams));
        if done {
            report.certified = true;
            break;
        }
        if cfg.forced_n.is_some() || n >= cfg.n_max {
            break;
        }
        n = (2 * n).min(cfg.n_max);
    }
    let (mu, pts, streams) = last.expect("at least one round runs");
    finish(mu, pts, streams, report)
}

/// One stage (η_j, R_j, μ_j) of the construction and its certificates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstructionStage {
    pub index: usize,
    pub eta: f64,
    pub scale: f64,
    pub n_points: usize,
    /// sup_{1≤R≤R_{j−1}} ‖K̄_R‖_∞ used to choose η_j.
    pub kbar_sup: f64,
    /// Median over probes of the achieved alignment sup.
    pub achieved_sup: f64,
    /// Largest witness R among passing probes.
    pub witness_r: f64,
    /// Fraction of probes where sup over (6R_{j−1}, R_j) exceeds 2^j/η_j.
    pub witness_set_fraction: f64,
    pub eta_halving: bool,
    pub eta_kbar: bool,
    pub scale_growth: bool,
    /// max over probes and R of |III| for the previous stage's window.
    pub third_term_max: f64,
    #[serde(skip)]
    pub measure: Option<AtomicMeasure>,
    pub divergence: Option<DivergenceReport>,
}

impl ConstructionStage {
    /// η₁ = 1/2, R₁ = 2, μ₁ = δ_e.
    pub fn seed(rs: &RootSystem) -> Self {
        Self {
            index: 1,
            eta: 0.5,
            scale: 2.0,
            n_points: 1,
            kbar_sup: f64::NAN,
            achieved_sup: f64::NAN,
            witness_r: f64::NAN,
            witness_set_fraction: f64::NAN,
            eta_halving: true,
            eta_kbar: true,
            scale_growth: true,
            third_term_max: 0.0,
            measure: Some(AtomicMeasure::dirac(GroupPoint::identity(rs))),
            divergence: None,
        }
    }

    /// The three structural constraints of the construction.
    pub fn invariants_hold(&self) -> bool {
        self.eta_halving && self.eta_kbar && self.scale_growth
    }
}

/// A stage whose divergence certificate failed; the constrained parts are
/// still filled in.
#[derive(Debug, Clone)]
pub struct StageFailure {
    pub stage: ConstructionStage,
    pub reason: String,
}

/// sup over an R grid in [1, r_max] and a torus grid of |K̄_R|.
pub fn kbar_sup_norm(rs: &RootSystem, r_max: f64, r_steps: usize) -> Result<f64> {
    let mut best: f64 = 0.0;
    for i in 0..r_steps.max(1) {
        let big_r = if r_steps <= 1 {
            r_max
        } else {
            1.0 + (r_max - 1.0) * i as f64 / (r_steps - 1) as f64
        };
        let k = CentralKernel::new(rs, RadialMultiplier::bar_phi(rs), big_r)?;
        let quad = TorusQuadrature::new(rs.rank, (2 * k.max_coordinate() + 2).max(16));
        let nodes: Vec<Vec<f64>> = (0..quad.node_count()).map(|j| quad.node(rs, j)).collect();
        let vals = k.eval_many(&nodes)?;
        best = vals
            .iter()
            .fold(best, |a, v| a.max(v.abs()))
            .max(k.at_identity().abs());
    }
    Ok(best)
}

/// Builds stage j from stage j−1.
pub fn construction_stage(
    rs: &RootSystem,
    prev: &ConstructionStage,
    cfg: &DivergenceConfig,
) -> Result<std::result::Result<ConstructionStage, StageFailure>> {
    let j = prev.index + 1;
    let kbar_sup = kbar_sup_norm(rs, prev.scale, 8)?;
    let eta = (prev.eta / 2.0).min(1.0 / kbar_sup);
    let level = 2f64.powi(j as i32 + 1) / eta;
    let epsilon = 2f64.powi(-(j as i32) - 1);
    let mut stage_cfg = cfg.clone();
    stage_cfg.r_min = cfg.r_min.max(6.0 * prev.scale * (1.0 + 1e-9));
    let run = find_divergence_measure(rs, level, epsilon, &stage_cfg)?;
    let threshold = 2f64.powi(j as i32) / eta;
    let rows = &run.report.probes;
    let witness_r = rows
        .iter()
        .filter(|r| r.achieved_sup > threshold)
        .map(|r| r.witness_r)
        .fold(f64::NAN, f64::max);
    let scale = if witness_r.is_finite() {
        witness_r.max(stage_cfg.r_min) * (1.0 + 1e-6)
    } else {
        stage_cfg.r_min * (1.0 + 1e-6)
    };
    let witness_set_fraction = rows.iter().filter(|r| r.achieved_sup > threshold).count() as f64
        / rows.len().max(1) as f64;
    let mut sups: Vec<f64> = rows.iter().map(|r| r.achieved_sup).collect();
    sups.sort_by(f64::total_cmp);
    let achieved_sup = sups.get(sups.len() / 2).copied().unwrap_or(f64::NAN);

    // |III| on the previous window: η_j |K̄_R ∗ μ_j(x)| for R ∈ [1, R_{j−1}].
    let probes = probe_points(rs, cfg.seed, cfg.probes)?;
    let mut third: f64 = 0.0;
    for i in 0..6 {
        let big_r = 1.0 + (prev.scale - 1.0) * i as f64 / 5.0;
        let k = CentralKernel::new(rs, RadialMultiplier::bar_phi(rs), big_r)?;
        let vals: Vec<f64> = probes
            .par_iter()
            .map(|x| run.measure.convolve_central(rs, x, |c| k.eval(&c.xi)))
            .collect::<Result<_>>()?;
        third = vals.iter().fold(third, |a, v| a.max(eta * v.abs()));
    }

    let stage = ConstructionStage {
        index: j,
        eta,
        scale,
        n_points: run.measure.len(),
        kbar_sup,
        achieved_sup,
        witness_r,
        witness_set_fraction,
        eta_halving: eta <= prev.eta / 2.0,
        eta_kbar: eta * kbar_sup <= 1.0 + 1e-12,
        scale_growth: scale > 6.0 * prev.scale,
        third_term_max: third,
        measure: Some(run.measure),
        divergence: Some(run.report.clone()),
    };
    if run.report.certified && witness_set_fraction >= 1.0 - 2f64.powi(-(j as i32)) {
        Ok(Ok(stage))
    } else {
        let reason = format!(
            "divergence certificate at L = {level:.4e} failed: pass rate {:.3} (needed {:.3}), R0 = {:.4e}{}",
            run.report.pass_rate,
            1.0 - epsilon,
            run.report.scale,
            if run.report.scale_capped { " (capped)" } else { "" }
        );
        Ok(Err(StageFailure { stage, reason }))
    }
}
