//! Root data, Killing geometry, Weyl group and lattices.
//!
//! Vectors in the Cartan subalgebra are written in the basis of simple roots,
//! so the simple roots themselves are unit coordinate vectors and the metric
//! is `⟨a, b⟩ = aᵀ G b` with `G` the Gram matrix of the simple roots.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default ceiling on the number of enumerated dominant weights.
pub const DEFAULT_WEIGHT_CAP: usize = 4_000_000;

const MAX_WEYL_ORDER: usize = 10_000;
const REDUCTION_STEP_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Series {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
}

impl Series {
    fn from_char(c: char) -> Option<Self> {
        Some(match c {
            'A' => Series::A,
            'B' => Series::B,
            'C' => Series::C,
            'D' => Series::D,
            'E' => Series::E,
            'F' => Series::F,
            'G' => Series::G,
            _ => return None,
        })
    }

    fn letter(self) -> char {
        match self {
            Series::A => 'A',
            Series::B => 'B',
            Series::C => 'C',
            Series::D => 'D',
            Series::E => 'E',
            Series::F => 'F',
            Series::G => 'G',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Factor {
    pub series: Series,
    pub rank: usize,
}

impl Factor {
    /// Dimension of the simple group of this type.
    pub fn dimension(&self) -> usize {
        let r = self.rank;
        match self.series {
            Series::A => r * (r + 2),
            Series::B | Series::C => r * (2 * r + 1),
            Series::D => r * (2 * r - 1),
            Series::E => match r {
                6 => 78,
                7 => 133,
                _ => 248,
            },
            Series::F => 52,
            Series::G => 14,
        }
    }

    fn is_valid(&self) -> bool {
        match self.series {
            Series::A => self.rank >= 1,
            Series::B | Series::C => self.rank >= 2,
            Series::D => self.rank >= 4,
            Series::E => (6..=8).contains(&self.rank),
            Series::F => self.rank == 4,
            Series::G => self.rank == 2,
        }
    }

    fn is_supported(&self) -> bool {
        matches!(
            (self.series, self.rank),
            (Series::A, 1) | (Series::A, 2) | (Series::B, 2) | (Series::C, 2) | (Series::G, 2)
        )
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.series.letter(), self.rank)
    }
}

/// A product of simple factors, written like `A1xA2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroupSpec {
    pub factors: Vec<Factor>,
}

impl GroupSpec {
    /// Total rank m.
    pub fn rank(&self) -> usize {
        self.factors.iter().map(|f| f.rank).sum()
    }

    /// Group dimension n.
    pub fn dimension(&self) -> usize {
        self.factors.iter().map(Factor::dimension).sum()
    }

    /// Number of positive roots, (n − m)/2.
    pub fn positive_root_count(&self) -> usize {
        (self.dimension() - self.rank()) / 2
    }

    /// True when every factor can be realised by unitary matrices here.
    pub fn has_matrix_model(&self) -> bool {
        self.factors.iter().all(|f| f.series == Series::A)
    }
}

impl FromStr for GroupSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::SpecParse {
            input: s.to_string(),
        };
        let trimmed = s.trim();
        if trimmed.is_empty() {
            return Err(bad());
        }
        let mut factors = Vec::new();
        for part in trimmed.split('x') {
            let mut chars = part.chars();
            let series = chars.next().and_then(Series::from_char).ok_or_else(bad)?;
            let digits = chars.as_str();
            if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
                return Err(bad());
            }
            let rank: usize = digits.parse().map_err(|_| bad())?;
            let factor = Factor { series, rank };
            if !factor.is_valid() {
                return Err(bad());
            }
            factors.push(factor);
        }
        Ok(GroupSpec { factors })
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.factors.iter().map(|x| x.to_string()).collect();
        write!(f, "{}", parts.join("x"))
    }
}

impl Serialize for GroupSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for GroupSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Symmetric bilinear form on simple roots (before Killing scaling) and the
/// highest root, both in simple-root coordinates.
fn factor_form(f: &Factor) -> (Vec<Vec<f64>>, Vec<i64>) {
    match (f.series, f.rank) {
        (Series::A, 1) => (vec![vec![2.0]], vec![1]),
        (Series::A, 2) => (vec![vec![2.0, -1.0], vec![-1.0, 2.0]], vec![1, 1]),
        // α1 long, α2 short
        (Series::B, 2) => (vec![vec![2.0, -1.0], vec![-1.0, 1.0]], vec![1, 2]),
        // α1 short, α2 long
        (Series::C, 2) => (vec![vec![1.0, -1.0], vec![-1.0, 2.0]], vec![2, 1]),
        // α1 short, α2 long
        (Series::G, 2) => (vec![vec![2.0 / 3.0, -1.0], vec![-1.0, 2.0]], vec![3, 2]),
        _ => unreachable!("checked by is_supported"),
    }
}

/// One positive root with the data needed in hot loops.
#[derive(Debug, Clone)]
pub struct Root {
    /// Integer coordinates in the simple-root basis.
    pub coords: Vec<i64>,
    /// Covector `G·α`, so that `⟨α, ξ⟩ = dual · ξ`.
    pub dual: Vec<f64>,
    pub norm2: f64,
    /// Coordinates of the coroot in the simple-coroot basis.
    pub coroot: Vec<i64>,
    pub factor: usize,
}

/// A Weyl group element.
#[derive(Debug, Clone)]
pub struct WeylElement {
    /// Action on simple-root coordinates (integer entries).
    pub matrix: DMatrix<f64>,
    /// Action on fundamental-weight coordinates, row-major.
    pub omega_action: Vec<i64>,
    pub sign: i32,
}

/// A half-space `normal · ξ ≤ bound`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub bound: f64,
    pub label: String,
}

impl HalfSpace {
    fn value(&self, xi: &[f64]) -> f64 {
        dot(&self.normal, xi)
    }
}

/// The closed fundamental alcove Q and its sub-region Q0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FundamentalDomain {
    pub description: String,
    pub walls: Vec<HalfSpace>,
    /// Inside the alcove, `|⟨α, ξ⟩| < π` for all roots reduces to these.
    pub q0_walls: Vec<HalfSpace>,
}

impl FundamentalDomain {
    pub fn contains(&self, xi: &[f64], tol: f64) -> bool {
        self.walls.iter().all(|w| w.value(xi) <= w.bound + tol)
    }

    /// Q0 membership of a point already in the alcove.
    pub fn in_q0(&self, xi: &[f64]) -> bool {
        self.q0_walls.iter().all(|w| w.value(xi) < w.bound)
    }
}

/// Result of reducing a point to the alcove, with the group element used.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub xi: Vec<f64>,
    /// Linear part w ∈ W.
    pub linear: DMatrix<f64>,
    /// Translation γ ∈ Γ with `xi = w(ξ) + γ`.
    pub shift: Vec<f64>,
}

/// An element of the dominant cone with cached dimension and shifted norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominantWeight {
    /// Coordinates in the fundamental-weight basis.
    pub coords: Vec<i64>,
    /// The weight in simple-root coordinates.
    pub lambda: Vec<f64>,
    pub dim: u64,
    /// |λ + ρ|.
    pub shifted_norm: f64,
}

#[derive(Debug, Clone)]
pub struct RootSystem {
    pub spec: GroupSpec,
    pub rank: usize,
    pub dim: usize,
    pub gram: DMatrix<f64>,
    pub gram_inv: DMatrix<f64>,
    pub positive_roots: Vec<Root>,
    pub rho: Vec<f64>,
    /// Columns are the fundamental weights.
    pub omega: DMatrix<f64>,
    /// Gram matrix of the fundamental weights.
    pub omega_gram: DMatrix<f64>,
    /// Columns are the basis 2π·α_i∨ of Γ.
    pub gamma: DMatrix<f64>,
    pub weyl: Vec<WeylElement>,
    pub factor_ranges: Vec<Range<usize>>,
    /// Highest root of each simple factor, simple-root coordinates.
    pub highest_roots: Vec<Vec<i64>>,
    pub domain: FundamentalDomain,
    /// Largest radius with B(0, 2r0) inside Q0 and |ξ| the distance to e.
    pub r0: f64,
    /// Fixed direction with ⟨α, u⟩ ≠ 0 for every root.
    pub generic_direction: Vec<f64>,
    /// Π_{α>0} ⟨ρ, α⟩.
    pub rho_product: f64,
    pub covolume_gamma: f64,
    pub covolume_weights: f64,
    /// Coordinates c with λ + ρ = Σ c_j ω_j are integers ≥ 1; ⟨ω_j, ξ⟩ = omega_pairing[j]·ξ_j.
    pub omega_pairing: Vec<f64>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}

fn round_exact(x: f64, what: &str) -> Result<i64> {
    let r = x.round();
    if (x - r).abs() > 1e-8 {
        return Err(Error::Internal(format!("{what}: {x} is not integral")));
    }
    Ok(r as i64)
}

impl RootSystem {
    /// Builds the root datum of a supported group.
    pub fn build(spec: &GroupSpec) -> Result<Self> {
        if spec.factors.is_empty() {
            return Err(Error::SpecParse {
                input: String::new(),
            });
        }
        if let Some(f) = spec.factors.iter().find(|f| !f.is_supported()) {
            return Err(Error::UnsupportedGroup {
                spec: spec.to_string(),
                reason: format!("factor {f} is outside the supported set A1, A2, B2, C2, G2"),
            });
        }
        let m = spec.rank();
        if m > 3 {
            return Err(Error::UnsupportedGroup {
                spec: spec.to_string(),
                reason: format!("total rank {m} exceeds the desk-scale limit of 3"),
            });
        }

        // Block-diagonal symmetric form and factor bookkeeping.
        let mut form = DMatrix::<f64>::zeros(m, m);
        let mut factor_ranges = Vec::new();
        let mut highest_roots = Vec::new();
        let mut offset = 0;
        for f in &spec.factors {
            let (b, theta) = factor_form(f);
            for i in 0..f.rank {
                for j in 0..f.rank {
                    form[(offset + i, offset + j)] = b[i][j];
                }
            }
            let mut h = vec![0i64; m];
            h[offset..offset + f.rank].copy_from_slice(&theta);
            highest_roots.push(h);
            factor_ranges.push(offset..offset + f.rank);
            offset += f.rank;
        }

        let simple_reflection = |i: usize| -> DMatrix<f64> {
            // s_i(v) = v − (2 (B v)_i / B_ii) e_i
            let mut s = DMatrix::<f64>::identity(m, m);
            for j in 0..m {
                s[(i, j)] -= 2.0 * form[(i, j)] / form[(i, i)];
            }
            s.map(|x| x.round())
        };
        let reflections: Vec<DMatrix<f64>> = (0..m).map(simple_reflection).collect();

        // Roots: orbit of the simple roots under simple reflections.
        let mut root_set: BTreeSet<Vec<i64>> = BTreeSet::new();
        let mut frontier: Vec<Vec<i64>> = (0..m)
            .map(|i| {
                let mut e = vec![0i64; m];
                e[i] = 1;
                e
            })
            .collect();
        while let Some(r) = frontier.pop() {
            if !root_set.insert(r.clone()) {
                continue;
            }
            let rf: Vec<f64> = r.iter().map(|&x| x as f64).collect();
            for s in &reflections {
                let img: Vec<i64> = mat_vec(s, &rf).iter().map(|x| x.round() as i64).collect();
                if !root_set.contains(&img) {
                    frontier.push(img);
                }
            }
        }
        let positive_coords: Vec<Vec<i64>> = root_set
            .iter()
            .filter(|r| r.iter().all(|&x| x >= 0))
            .cloned()
            .collect();
        if positive_coords.len() != spec.positive_root_count() {
            return Err(Error::Internal(format!(
                "found {} positive roots, expected {}",
                positive_coords.len(),
                spec.positive_root_count()
            )));
        }

        // Killing scaling per factor: G = c·B with G⁻¹ = Σ_{±roots} α αᵀ.
        let mut gram = form.clone();
        for (fi, range) in factor_ranges.iter().enumerate() {
            let k = range.len();
            let mut s = DMatrix::<f64>::zeros(k, k);
            for r in positive_coords.iter().filter(|r| {
                r.iter()
                    .enumerate()
                    .any(|(i, &x)| x != 0 && range.contains(&i))
            }) {
                for a in 0..k {
                    for b in 0..k {
                        s[(a, b)] += 2.0 * (r[range.start + a] * r[range.start + b]) as f64;
                    }
                }
            }
            let block = form.view((range.start, range.start), (k, k)).clone_owned();
            let binv = block
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Internal(format!("singular form on factor {fi}")))?;
            let c = binv.trace() / s.trace();
            for a in 0..k {
                for b in 0..k {
                    gram[(range.start + a, range.start + b)] = c * block[(a, b)];
                }
            }
        }
        let gram_inv = gram
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Internal("singular Gram matrix".into()))?;

        let mut positive_roots = Vec::new();
        for coords in &positive_coords {
            let cf: Vec<f64> = coords.iter().map(|&x| x as f64).collect();
            let dual = mat_vec(&gram, &cf);
            let norm2 = dot(&cf, &dual);
            let coroot = coords
                .iter()
                .enumerate()
                .map(|(i, &a)| round_exact(a as f64 * gram[(i, i)] / norm2, "coroot coefficient"))
                .collect::<Result<Vec<i64>>>()?;
            let factor = factor_ranges
                .iter()
                .position(|r| {
                    coords
                        .iter()
                        .enumerate()
                        .any(|(i, &x)| x != 0 && r.contains(&i))
                })
                .expect("root lies in some factor");
            positive_roots.push(Root {
                coords: coords.clone(),
                dual,
                norm2,
                coroot,
                factor,
            });
        }

        let mut rho = vec![0.0; m];
        for r in &positive_roots {
            for (x, &c) in rho.iter_mut().zip(&r.coords) {
                *x += 0.5 * c as f64;
            }
        }

        // ω_j = G⁻¹ e_j · G_jj / 2 and γ_i = (4π / G_ii) e_i.
        let mut omega = DMatrix::<f64>::zeros(m, m);
        let mut gamma = DMatrix::<f64>::zeros(m, m);
        for j in 0..m {
            for i in 0..m {
                omega[(i, j)] = gram_inv[(i, j)] * gram[(j, j)] / 2.0;
            }
            gamma[(j, j)] = 4.0 * PI / gram[(j, j)];
        }
        let omega_gram = omega.transpose() * &gram * &omega;
        let omega_inv = omega
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Internal("singular weight basis".into()))?;
        let omega_pairing: Vec<f64> = (0..m).map(|j| gram[(j, j)] / 2.0).collect();

        // Weyl group by closure under simple reflections, breadth first.
        let key =
            |mat: &DMatrix<f64>| -> Vec<i64> { mat.iter().map(|x| x.round() as i64).collect() };
        let mut seen: HashMap<Vec<i64>, usize> = HashMap::new();
        let mut elements: Vec<DMatrix<f64>> = vec![DMatrix::identity(m, m)];
        seen.insert(key(&elements[0]), 0);
        let mut head = 0;
        while head < elements.len() {
            let cur = elements[head].clone();
            head += 1;
            for s in &reflections {
                let next = (s * &cur).map(|x| x.round());
                let k = key(&next);
                if let std::collections::hash_map::Entry::Vacant(slot) = seen.entry(k) {
                    slot.insert(elements.len());
                    elements.push(next);
                    if elements.len() > MAX_WEYL_ORDER {
                        return Err(Error::Capacity {
                            what: "Weyl group closure".into(),
                            cap: MAX_WEYL_ORDER,
                        });
                    }
                }
            }
        }
        let mut weyl = Vec::with_capacity(elements.len());
        for mat in elements {
            let det = mat.determinant();
            let sign = if det > 0.0 { 1 } else { -1 };
            let om = &omega_inv * &mat * &omega;
            let omega_action = om
                .transpose()
                .iter()
                .map(|&x| round_exact(x, "Weyl action on weights"))
                .collect::<Result<Vec<i64>>>()?;
            weyl.push(WeylElement {
                matrix: mat,
                omega_action,
                sign,
            });
        }

        // Alcove walls and Q0.
        let mut walls = Vec::new();
        for (i, r) in positive_roots.iter().enumerate() {
            if r.coords.iter().sum::<i64>() == 1 {
                walls.push(HalfSpace {
                    normal: r.dual.iter().map(|x| -x).collect(),
                    bound: 0.0,
                    label: format!("simple root {i}: ⟨α, ξ⟩ ≥ 0"),
                });
            }
        }
        let mut q0_walls = Vec::new();
        for (fi, h) in highest_roots.iter().enumerate() {
            let hf: Vec<f64> = h.iter().map(|&x| x as f64).collect();
            let dual = mat_vec(&gram, &hf);
            walls.push(HalfSpace {
                normal: dual.clone(),
                bound: 2.0 * PI,
                label: format!("highest root of factor {fi}: ⟨θ, ξ⟩ ≤ 2π"),
            });
            q0_walls.push(HalfSpace {
                normal: dual,
                bound: PI,
                label: format!("highest root of factor {fi}: ⟨θ, ξ⟩ < π"),
            });
        }
        let domain = FundamentalDomain {
            description: "closed fundamental alcove of the affine Weyl group W ⋉ Γ".into(),
            walls,
            q0_walls,
        };

        let max_root = positive_roots
            .iter()
            .map(|r| r.norm2.sqrt())
            .fold(0.0, f64::max);
        let gamma_gram = gamma.transpose() * &gram * &gamma;
        let min_gamma = shortest_vector(&gamma_gram);
        let r0 = 0.5 * (PI / max_root).min(min_gamma / 2.0);

        // ρ pairs positively with every positive root; a small irrational tilt
        // keeps the direction off any special line.
        let rho_len = dot(&rho, &mat_vec(&gram, &rho)).sqrt();
        let tilt = [1.0, 0.5 * 2f64.sqrt(), 0.3 * 3f64.sqrt()];
        let mut generic_direction: Vec<f64> =
            (0..m).map(|i| rho[i] / rho_len + 0.07 * tilt[i]).collect();
        for attempt in 0..32 {
            let n = dot(&generic_direction, &mat_vec(&gram, &generic_direction)).sqrt();
            let ok = positive_roots
                .iter()
                .all(|r| dot(&r.dual, &generic_direction).abs() > 0.2 * n * r.norm2.sqrt());
            if ok {
                break;
            }
            generic_direction[attempt % m] += 0.037;
        }

        let rho_product = positive_roots.iter().map(|r| dot(&r.dual, &rho)).product();
        let covolume_gamma = gamma_gram.determinant().sqrt();
        let covolume_weights = omega_gram.determinant().sqrt();

        let rs = RootSystem {
            spec: spec.clone(),
            rank: m,
            dim: spec.dimension(),
            gram,
            gram_inv,
            positive_roots,
            rho,
            omega,
            omega_gram,
            gamma,
            weyl,
            factor_ranges,
            highest_roots,
            domain,
            r0,
            generic_direction,
            rho_product,
            covolume_gamma,
            covolume_weights,
            omega_pairing,
        };
        Ok(rs)
    }

    /// Parses and builds in one step.
    pub fn from_spec_str(s: &str) -> Result<Self> {
        Self::build(&s.parse()?)
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.rank {
            for j in 0..self.rank {
                s += a[i] * self.gram[(i, j)] * b[j];
            }
        }
        s
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }

    /// ⟨α, ξ⟩ for every positive root, in root order.
    pub fn pairings(&self, xi: &[f64]) -> Vec<f64> {
        self.positive_roots
            .iter()
            .map(|r| dot(&r.dual, xi))
            .collect()
    }

    /// Simple roots as coordinate vectors.
    pub fn simple_roots(&self) -> Vec<Vec<f64>> {
        (0..self.rank)
            .map(|i| {
                let mut e = vec![0.0; self.rank];
                e[i] = 1.0;
                e
            })
            .collect()
    }

    /// All roots ±A as vectors.
    pub fn all_roots(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(2 * self.positive_roots.len());
        for r in &self.positive_roots {
            let v: Vec<f64> = r.coords.iter().map(|&x| x as f64).collect();
            out.push(v.iter().map(|x| -x).collect());
            out.push(v);
        }
        out
    }

    pub fn weyl_order(&self) -> usize {
        self.weyl.len()
    }

    /// Fundamental weight j as a vector.
    pub fn fundamental_weight(&self, j: usize) -> Vec<f64> {
        self.omega.column(j).iter().copied().collect()
    }

    /// Lattice generator γ_i.
    pub fn gamma_vector(&self, i: usize) -> Vec<f64> {
        self.gamma.column(i).iter().copied().collect()
    }

    /// Weight with the given fundamental-weight coordinates.
    pub fn weight_vector(&self, coords: &[i64]) -> Vec<f64> {
        let c: Vec<f64> = coords.iter().map(|&x| x as f64).collect();
        mat_vec(&self.omega, &c)
    }

    /// Image of ξ under every Weyl element, with signatures.
    pub fn weyl_orbit(&self, xi: &[f64]) -> Vec<(Vec<f64>, i32)> {
        self.weyl
            .iter()
            .map(|w| (mat_vec(&w.matrix, xi), w.sign))
            .collect()
    }

    pub fn apply_weyl(&self, w: usize, xi: &[f64]) -> Vec<f64> {
        mat_vec(&self.weyl[w].matrix, xi)
    }

    /// w acting on fundamental-weight coordinates.
    pub fn apply_weyl_omega(&self, w: usize, c: &[i64]) -> Vec<i64> {
        let m = self.rank;
        let a = &self.weyl[w].omega_action;
        (0..m)
            .map(|i| (0..m).map(|j| a[i * m + j] * c[j]).sum())
            .collect()
    }

    /// Exact Weyl dimension from integer coroot pairings; `c = λ + ρ` in
    /// fundamental-weight coordinates.
    pub fn dimension_exact(&self, c: &[i64]) -> u64 {
        let mut num: u128 = 1;
        let mut den: u128 = 1;
        for r in &self.positive_roots {
            let p: i64 = r.coroot.iter().zip(c).map(|(a, b)| a * b).sum();
            let q: i64 = r.coroot.iter().sum();
            num *= p.unsigned_abs() as u128;
            den *= q as u128;
        }
        (num / den) as u64
    }

    /// Floating Weyl product Π ⟨λ+ρ, α⟩ / ⟨ρ, α⟩ through the metric.
    pub fn dimension_float(&self, lambda: &[f64]) -> f64 {
        let shifted: Vec<f64> = lambda.iter().zip(&self.rho).map(|(a, b)| a + b).collect();
        self.positive_roots
            .iter()
            .map(|r| dot(&r.dual, &shifted) / dot(&r.dual, &self.rho))
            .product()
    }

    fn make_weight(&self, k: Vec<i64>) -> DominantWeight {
        let c: Vec<i64> = k.iter().map(|x| x + 1).collect();
        let cf: Vec<f64> = c.iter().map(|&x| x as f64).collect();
        let shifted_norm = quad_form(&self.omega_gram, &cf).sqrt();
        let lambda = self.weight_vector(&k);
        DominantWeight {
            dim: self.dimension_exact(&c),
            coords: k,
            lambda,
            shifted_norm,
        }
    }

    /// Dominant weight with the given fundamental-weight coordinates.
    pub fn dominant_weight(&self, coords: &[i64]) -> Result<DominantWeight> {
        if coords.len() != self.rank || coords.iter().any(|&x| x < 0) {
            return Err(Error::Config(format!(
                "weight {coords:?} is not dominant for a rank {} group",
                self.rank
            )));
        }
        Ok(self.make_weight(coords.to_vec()))
    }

    /// All λ ∈ Λ with |λ + ρ| < R, lexicographic in coordinates.
    pub fn dominant_weights_in_ball(&self, radius: f64) -> Result<Vec<DominantWeight>> {
        self.dominant_weights_in_ball_capped(radius, DEFAULT_WEIGHT_CAP)
    }

    pub fn dominant_weights_in_ball_capped(
        &self,
        radius: f64,
        cap: usize,
    ) -> Result<Vec<DominantWeight>> {
        let mut out = Vec::new();
        let mut cap_hit = false;
        self.for_each_shifted_in_ball(radius, |c| {
            if out.len() >= cap {
                cap_hit = true;
                return false;
            }
            out.push(self.make_weight(c.iter().map(|x| x - 1).collect()));
            true
        });
        if cap_hit {
            return Err(Error::Capacity {
                what: format!("dominant weights with |λ+ρ| < {radius}"),
                cap,
            });
        }
        Ok(out)
    }

    /// Visits every c ≥ 1 (componentwise) with cᵀ G_ω c < R², in
    /// lexicographic order, until the visitor returns false.
    pub fn for_each_shifted_in_ball(&self, radius: f64, mut visit: impl FnMut(&[i64]) -> bool) {
        let m = self.rank;
        let r2 = radius * radius;
        let lmin = self.omega_gram.symmetric_eigenvalues().min();
        let bound = (radius / lmin.sqrt()).floor() as i64 + 1;
        let g = &self.omega_gram;
        let mut c = vec![1i64; m];
        // recursion over the leading coordinates, the last solved exactly
        fn rec(
            level: usize,
            m: usize,
            c: &mut Vec<i64>,
            g: &DMatrix<f64>,
            r2: f64,
            bound: i64,
            visit: &mut dyn FnMut(&[i64]) -> bool,
        ) -> bool {
            if level + 1 == m {
                let last = m - 1;
                let a = g[(last, last)];
                let mut b = 0.0;
                let mut q0 = 0.0;
                for i in 0..last {
                    b += g[(last, i)] * c[i] as f64;
                    for j in 0..last {
                        q0 += g[(i, j)] * (c[i] * c[j]) as f64;
                    }
                }
                let disc = b * b - a * (q0 - r2);
                if disc <= 0.0 {
                    return true;
                }
                let hi = (-b + disc.sqrt()) / a;
                let lo = (-b - disc.sqrt()) / a;
                let start = (lo.floor() as i64 + 1).max(1);
                let end = hi.ceil() as i64;
                for v in start..=end {
                    c[last] = v;
                    let cf: Vec<f64> = c.iter().map(|&x| x as f64).collect();
                    if quad_form(g, &cf) < r2 && !visit(c) {
                        return false;
                    }
                }
                return true;
            }
            for v in 1..=bound {
                c[level] = v;
                // prune on the leading block alone, which is a lower bound
                let lead: Vec<f64> = c[..=level].iter().map(|&x| x as f64).collect();
                let sub = g.view((0, 0), (level + 1, level + 1)).clone_owned();
                if quad_form(&sub, &lead) >= r2 && v > 1 {
                    // increasing v further only grows the leading block here
                    // when all cross terms are nonnegative; stay conservative
                    let cross_nonneg = (0..=level).all(|i| (0..=level).all(|j| sub[(i, j)] >= 0.0));
                    if cross_nonneg {
                        break;
                    }
                }
                if !rec(level + 1, m, c, g, r2, bound, visit) {
                    return false;
                }
            }
            true
        }
        rec(0, m, &mut c, g, r2, bound, &mut visit);
    }

    /// Reduces ξ to the closed alcove by a lattice shift and an alcove walk.
    pub fn reduce_to_q(&self, xi: &[f64]) -> Result<Vec<f64>> {
        Ok(self.reduce_to_q_traced(xi)?.xi)
    }

    pub fn reduce_to_q_traced(&self, xi: &[f64]) -> Result<Reduction> {
        let m = self.rank;
        let mut x = xi.to_vec();
        // Γ is diagonal in simple-root coordinates.
        for i in 0..m {
            let g = self.gamma[(i, i)];
            let t = (x[i] / g).floor();
            x[i] -= t * g;
        }
        let mut linear = DMatrix::<f64>::identity(m, m);
        let scale = 1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let tol = 1e-13 * scale;
        for _ in 0..REDUCTION_STEP_CAP {
            let mut moved = false;
            for i in 0..m {
                let p: f64 = (0..m).map(|j| self.gram[(i, j)] * x[j]).sum();
                if p < -tol {
                    // s_i(ξ) = ξ − ⟨α_i, ξ⟩ α_i∨
                    let f = 2.0 * p / self.gram[(i, i)];
                    x[i] -= f;
                    let mut refl = DMatrix::<f64>::identity(m, m);
                    for j in 0..m {
                        refl[(i, j)] -= 2.0 * self.gram[(i, j)] / self.gram[(i, i)];
                    }
                    linear = refl * linear;
                    moved = true;
                    break;
                }
            }
            if moved {
                continue;
            }
            for h in &self.highest_roots {
                let hf: Vec<f64> = h.iter().map(|&v| v as f64).collect();
                let dual = mat_vec(&self.gram, &hf);
                let p = dot(&dual, &x);
                if p > 2.0 * PI + tol {
                    let n2 = dot(&dual, &hf);
                    let f = 2.0 * (p - 2.0 * PI) / n2;
                    for j in 0..m {
                        x[j] -= f * hf[j];
                    }
                    let mut refl = DMatrix::<f64>::identity(m, m);
                    for a in 0..m {
                        for b in 0..m {
                            refl[(a, b)] -= 2.0 * hf[a] * dual[b] / n2;
                        }
                    }
                    linear = refl * linear;
                    moved = true;
                    break;
                }
            }
            if !moved {
                let wx = mat_vec(&linear, xi);
                let shift = x.iter().zip(&wx).map(|(a, b)| a - b).collect();
                return Ok(Reduction {
                    xi: x,
                    linear,
                    shift,
                });
            }
        }
        Err(Error::Internal(format!(
            "alcove reduction did not converge within {REDUCTION_STEP_CAP} steps"
        )))
    }

    /// Whether the class of exp ξ meets Q0.
    pub fn class_in_q0(&self, xi: &[f64]) -> Result<bool> {
        Ok(self.domain.in_q0(&self.reduce_to_q(xi)?))
    }

    /// Norm of the shortest representative of ξ modulo Γ.
    pub fn torus_norm(&self, xi: &[f64]) -> Result<f64> {
        let x = self.reduce_to_q(xi)?;
        Ok(self.min_shift_norm(&x))
    }

    pub(crate) fn min_shift_norm(&self, x: &[f64]) -> f64 {
        let m = self.rank;
        let mut best = self.norm(x);
        let combos = 3usize.pow(m as u32);
        let mut y = vec![0.0; m];
        for code in 0..combos {
            let mut k = code;
            for i in 0..m {
                let t = (k % 3) as f64 - 1.0;
                k /= 3;
                y[i] = x[i] + t * self.gamma[(i, i)];
            }
            best = best.min(self.norm(&y));
        }
        best
    }

    /// Killing self-consistency residual |⟨ξ,η⟩ − Σ_{±roots} ⟨α,ξ⟩⟨α,η⟩|.
    pub fn killing_residual(&self, xi: &[f64], eta: &[f64]) -> f64 {
        let lhs = self.inner(xi, eta);
        let rhs: f64 = self
            .positive_roots
            .iter()
            .map(|r| 2.0 * dot(&r.dual, xi) * dot(&r.dual, eta))
            .sum();
        (lhs - rhs).abs()
    }

    /// JSON-friendly snapshot of the root datum.
    pub fn record(&self) -> RootSystemRecord {
        let cols = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.ncols())
                .map(|j| m.column(j).iter().copied().collect())
                .collect()
        };
        RootSystemRecord {
            spec: self.spec.to_string(),
            rank: self.rank,
            dimension: self.dim,
            positive_root_count: self.positive_roots.len(),
            weyl_order: self.weyl.len(),
            gram: (0..self.rank)
                .map(|i| (0..self.rank).map(|j| self.gram[(i, j)]).collect())
                .collect(),
            simple_roots: self.simple_roots(),
            positive_roots: self
                .positive_roots
                .iter()
                .map(|r| r.coords.clone())
                .collect(),
            rho: self.rho.clone(),
            rho_norm2: self.inner(&self.rho, &self.rho),
            fundamental_weights: cols(&self.omega),
            gamma_basis: cols(&self.gamma),
            r0: self.r0,
            fundamental_domain: self.domain.description.clone(),
        }
    }
}

fn quad_form(g: &DMatrix<f64>, c: &[f64]) -> f64 {
    let n = c.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += c[i] * g[(i, j)] * c[j];
        }
    }
    s
}

/// Shortest nonzero vector of the lattice with the given Gram matrix, by
/// scanning small coefficient vectors.
fn shortest_vector(g: &DMatrix<f64>) -> f64 {
    let m = g.nrows();
    let span = 5usize;
    let side = 2 * span + 1;
    let mut best = f64::INFINITY;
    for code in 0..side.pow(m as u32) {
        let mut k = code;
        let mut c = vec![0.0; m];
        for x in c.iter_mut() {
            *x = (k % side) as f64 - span as f64;
            k /= side;
        }
        if c.iter().all(|&x| x == 0.0) {
            continue;
        }
        best = best.min(quad_form(g, &c).sqrt());
    }
    best
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RootSystemRecord {
    pub spec: String,
    pub rank: usize,
    pub dimension: usize,
    pub positive_root_count: usize,
    pub weyl_order: usize,
    pub gram: Vec<Vec<f64>>,
    pub simple_roots: Vec<Vec<f64>>,
    pub positive_roots: Vec<Vec<i64>>,
    pub rho: Vec<f64>,
    pub rho_norm2: f64,
    pub fundamental_weights: Vec<Vec<f64>>,
    pub gamma_basis: Vec<Vec<f64>>,
    pub r0: f64,
    pub fundamental_domain: String,
}

/// Groups covered by the test and acceptance suites.
pub const SUPPORTED_GROUPS: [&str; 6] = ["A1", "A1xA1", "A2", "B2", "C2", "G2"];
