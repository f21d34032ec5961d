//! Clustered sphere datasets that force many first-layer hyperplanes, and
//! tools for measuring how many hyperplanes a labelling needs.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construct::{build_first_layer, ConstructionConfig};
use crate::geometry::{self, dot, norm, random_unit_vector, Dataset, SeparationMode};
use crate::rng::{self, StepRng};
use crate::{Error, Result};

/// Tolerance on ‖normal‖ = 1.
pub const NORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Hyperplane {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let len = norm(&normal);
        if (len - 1.0).abs() > NORMAL_TOL || !offset.is_finite() {
            return Err(Error::InvalidInput(format!(
                "hyperplane normal has norm {len}, expected 1"
            )));
        }
        Ok(Self { normal, offset })
    }

    /// Rescales `w·x + b = 0` to a unit normal.
    pub fn from_affine(w: &[f64], b: f64) -> Result<Self> {
        let len = norm(w);
        if !(len > 0.0 && len.is_finite()) {
            return Err(Error::InvalidInput("hyperplane normal is zero".into()));
        }
        Self::new(w.iter().map(|v| v / len).collect(), b / len)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) + self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredDataset {
    pub delta: f64,
    /// √n centers on the sphere of radius √(1−δ).
    pub centers: Vec<Vec<f64>>,
    pub points: Vec<Vec<f64>>,
    /// Cluster index of every point.
    pub cluster_of: Vec<usize>,
    pub labels: Vec<bool>,
}

impl ClusteredDataset {
    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn to_dataset(&self) -> Result<Dataset> {
        Dataset::from_parts(self.points.clone(), self.labels.clone())
    }
}

/// Accepts proposals farther than `min_dist` from everything accepted so far.
fn sample_spread(
    rng: &mut StepRng,
    count: usize,
    min_dist: f64,
    mut propose: impl FnMut(&mut StepRng) -> Vec<f64>,
) -> Result<Vec<Vec<f64>>> {
    let budget = 1000 * count;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut rejected = 0;
    while out.len() < count {
        let c = propose(rng);
        if out.iter().all(|a| geometry::squared_distance(a, &c).sqrt() >= min_dist) {
            out.push(c);
        } else {
            rejected += 1;
            if rejected >= budget {
                return Err(Error::Infeasible {
                    requested: count,
                    accepted: out.len(),
                    attempted: rejected,
                });
            }
        }
    }
    Ok(out)
}

/// Householder reflection taking e1 to the unit vector `u`, applied to `v`.
fn reflect_e1_to(u: &[f64], v: &[f64]) -> Vec<f64> {
    let mut w = u.iter().map(|x| -x).collect::<Vec<_>>();
    w[0] += 1.0;
    let ww = dot(&w, &w);
    if ww < 1e-24 {
        return v.to_vec();
    }
    let s = 2.0 * dot(&w, v) / ww;
    v.iter().zip(&w).map(|(a, b)| a - s * b).collect()
}

/// √n clusters of √n unit vectors each.
///
/// Centers lie on the sphere of radius √(1−δ), at least 3√δ apart. One
/// template of √n offsets on √δ·S^{d−2} (orthogonal to e1, pairwise at
/// least δ apart) is carried to every center by the reflection taking e1 to
/// the center direction, so every point has unit norm. Labels alternate
/// within each cluster.
pub fn build_cluster_dataset(n: usize, d: usize, delta: f64, seed: u64) -> Result<ClusteredDataset> {
    let s = n.isqrt();
    if s * s != n || n < 4 {
        return Err(Error::InvalidInput(format!(
            "n must be a perfect square at least 4, got {n}"
        )));
    }
    if d < 3 {
        return Err(Error::InvalidInput(format!("d must be at least 3, got {d}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {delta}")));
    }
    let mut rng = rng::step_rng(seed, rng::stream::CLUSTERS);
    let r_center = (1.0 - delta).sqrt();
    let r_offset = delta.sqrt();
    let centers = sample_spread(&mut rng, s, 3.0 * r_offset, |rng| {
        random_unit_vector(rng, d).into_iter().map(|v| v * r_center).collect()
    })?;
    // slack so rounding in the reflection cannot pull a pair below δ
    let template = sample_spread(&mut rng, s, delta * (1.0 + 1e-9), |rng| {
        let mut v = vec![0.0];
        v.extend(random_unit_vector(rng, d - 1).into_iter().map(|x| x * r_offset));
        v
    })?;

    let mut points = Vec::with_capacity(n);
    let mut cluster_of = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (ci, c) in centers.iter().enumerate() {
        let u: Vec<f64> = c.iter().map(|v| v / r_center).collect();
        for (k, off) in template.iter().enumerate() {
            let moved = reflect_e1_to(&u, off);
            points.push(c.iter().zip(&moved).map(|(a, b)| a + b).collect());
            cluster_of.push(ci);
            labels.push(k % 2 == 1);
        }
    }
    let cds = ClusteredDataset {
        delta,
        centers,
        points,
        cluster_of,
        labels,
    };
    let verdict = geometry::check_separation(
        &cds.to_dataset()?,
        SeparationMode::distance(delta)?,
        geometry::DEFAULT_TOL,
    )?;
    if !verdict.holds {
        return Err(Error::InvariantBreach(format!(
            "clustered points {:?} only {} apart",
            verdict.worst_pair, verdict.worst_value
        )));
    }
    Ok(cds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    AllPairs,
    OppositeLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationCount {
    pub separated: usize,
    pub total: usize,
    /// `(point, plane)` pairs with a zero evaluation; such a point is not
    /// separated by that plane.
    pub on_plane: Vec<(usize, usize)>,
}

fn check_points(points: &[Vec<f64>], labels: &[bool]) -> Result<usize> {
    let d = points
        .first()
        .ok_or_else(|| Error::InvalidInput("no points".into()))?
        .len();
    if labels.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: labels.len(),
        });
    }
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p.len(),
        });
    }
    Ok(d)
}

fn required(mode: PairMode, labels: &[bool], i: usize, j: usize) -> bool {
    mode == PairMode::AllPairs || labels[i] != labels[j]
}

/// Pairs strictly split by at least one plane.
pub fn count_separated_pairs(
    points: &[Vec<f64>],
    labels: &[bool],
    planes: &[Hyperplane],
    mode: PairMode,
) -> Result<SeparationCount> {
    let d = check_points(points, labels)?;
    if let Some(h) = planes.iter().find(|h| h.normal.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: h.normal.len(),
        });
    }
    let words = planes.len().div_ceil(64).max(1);
    let mut pos = vec![0u64; points.len() * words];
    let mut neg = vec![0u64; points.len() * words];
    let mut on_plane = Vec::new();
    for (i, p) in points.iter().enumerate() {
        for (k, h) in planes.iter().enumerate() {
            let v = h.eval(p);
            let bit = 1u64 << (k % 64);
            if v > 0.0 {
                pos[i * words + k / 64] |= bit;
            } else if v < 0.0 {
                neg[i * words + k / 64] |= bit;
            } else {
                on_plane.push((i, k));
            }
        }
    }
    let n = points.len();
    let (separated, total) = (0..n)
        .into_par_iter()
        .map(|i| {
            let (pi, ni) = (&pos[i * words..(i + 1) * words], &neg[i * words..(i + 1) * words]);
            let mut sep = 0;
            let mut tot = 0;
            for j in i + 1..n {
                if !required(mode, labels, i, j) {
                    continue;
                }
                tot += 1;
                let (pj, nj) = (&pos[j * words..(j + 1) * words], &neg[j * words..(j + 1) * words]);
                if (0..words).any(|w| (pi[w] & nj[w]) | (ni[w] & pj[w]) != 0) {
                    sep += 1;
                }
            }
            (sep, tot)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(SeparationCount {
        separated,
        total,
        on_plane,
    })
}

/// Largest instance [`min_hyperplanes_bruteforce`] accepts.
pub const BRUTEFORCE_MAX_POINTS: usize = 12;

/// Sets of point pairs split by some line, one per linearly separable
/// dichotomy of the planar point set. Pair (i, j) is bit `pair_index`.
fn dichotomy_masks(points: &[Vec<f64>], pair_bit: &dyn Fn(usize, usize) -> Option<usize>) -> Vec<u128> {
    use std::f64::consts::PI;
    let n = points.len();
    let mut crit: Vec<f64> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (dx, dy) = (points[j][0] - points[i][0], points[j][1] - points[i][1]);
            if dx != 0.0 || dy != 0.0 {
                // directions orthogonal to p_j − p_i, folded into [0, π)
                crit.push((dy.atan2(dx) + PI / 2.0).rem_euclid(PI));
            }
        }
    }
    crit.sort_by(f64::total_cmp);
    crit.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let dirs: Vec<f64> = if crit.is_empty() {
        vec![0.0]
    } else {
        (0..crit.len())
            .map(|k| {
                let next = if k + 1 < crit.len() { crit[k + 1] } else { crit[0] + PI };
                0.5 * (crit[k] + next)
            })
            .collect()
    };
    let mut masks = HashSet::new();
    for theta in dirs {
        let (c, s) = (theta.cos(), theta.sin());
        let mut order: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (c * p[0] + s * p[1], i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        for cut in 1..n {
            if order[cut - 1].0 == order[cut].0 {
                continue;
            }
            let mut mask = 0u128;
            for &(_, a) in &order[..cut] {
                for &(_, b) in &order[cut..] {
                    if let Some(bit) = pair_bit(a.min(b), a.max(b)) {
                        mask |= 1 << bit;
                    }
                }
            }
            if mask != 0 {
                masks.insert(mask);
            }
        }
    }
    let mut masks: Vec<u128> = masks.into_iter().collect();
    masks.sort_unstable();
    masks
}

fn cover(masks: &[u128], uncovered: u128, budget: usize) -> bool {
    if uncovered == 0 {
        return true;
    }
    if budget == 0 {
        return false;
    }
    let low = uncovered & uncovered.wrapping_neg();
    masks
        .iter()
        .filter(|&&m| m & low != 0)
        .any(|&m| cover(masks, uncovered & !m, budget - 1))
}

/// Fewest lines that split every required pair of a planar instance.
///
/// Every labelling a line can induce is enumerated by sweeping the line
/// direction through the arrangement of pair directions, then an exact set
/// cover is found by iterative deepening.
pub fn min_hyperplanes_bruteforce(points: &[Vec<f64>], labels: &[bool], mode: PairMode) -> Result<usize> {
    let d = check_points(points, labels)?;
    let n = points.len();
    if n > BRUTEFORCE_MAX_POINTS || d != 2 {
        return Err(Error::InvalidInput(format!(
            "brute force handles at most {BRUTEFORCE_MAX_POINTS} points in the plane, got {n} in d = {d}"
        )));
    }
    let mut index = vec![vec![None; n]; n];
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if required(mode, labels, i, j) {
                if points[i] == points[j] {
                    return Err(Error::InvalidInput(format!(
                        "points {i} and {j} coincide and cannot be split"
                    )));
                }
                index[i][j] = Some(pairs);
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        return Ok(0);
    }
    let masks = dichotomy_masks(points, &|i, j| index[i][j]);
    let all = if pairs == 128 { u128::MAX } else { (1u128 << pairs) - 1 };
    (1..=pairs)
        .find(|&k| cover(&masks, all, k))
        .ok_or_else(|| Error::InvariantBreach("pairs cannot be covered".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureConfig {
    pub trials: usize,
    /// Random planes for the band measurement.
    pub planes: usize,
    /// The `t` in the band half-width c·√(δ·ln t / d).
    pub t: f64,
    pub band_constant: f64,
    pub seed: u64,
}

impl PressureConfig {
    pub fn new(trials: usize, seed: u64) -> Self {
        Self {
            trials,
            planes: 10_000,
            t: 8.0,
            band_constant: 12.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureTrial {
    pub seed: u64,
    pub m_start: usize,
    pub m_used: usize,
    pub retries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureReport {
    pub config: PressureConfig,
    pub trials: Vec<PressureTrial>,
    pub mean_m_used: f64,
    pub clusters: usize,
    pub band: f64,
    /// Mean over planes of the fraction of centers inside the band.
    pub near_center_fraction: f64,
    /// Any opposite-label pair in a cluster needs a plane through it.
    pub hyperplanes_per_cluster: usize,
    pub effective_clusters_per_plane: f64,
    /// clusters · per-cluster / effective-per-plane; `None` if no plane
    /// came near a center.
    pub implied_lower_bound: Option<f64>,
}

/// Band half-width c·√(δ·ln t / d).
pub fn band_width(band_constant: f64, delta: f64, t: f64, d: usize) -> f64 {
    band_constant * (delta * t.ln() / d as f64).sqrt()
}

/// Mean fraction of `centers` within `band` of planes w·x + b = 0 with
/// w ~ N(0, I), b ~ N(0, 1).
pub fn near_center_fraction(centers: &[Vec<f64>], band: f64, planes: usize, rng: &mut StepRng) -> f64 {
    if centers.is_empty() || planes == 0 {
        return 0.0;
    }
    let d = centers[0].len();
    let mut hits = 0usize;
    for _ in 0..planes {
        let w: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let b: f64 = rng.sample(StandardNormal);
        let len = norm(&w);
        hits += centers.iter().filter(|c| (dot(&w, c) + b).abs() <= band * len).count();
    }
    hits as f64 / (planes * centers.len()) as f64
}

/// Runs the coding layer on a clustered dataset and measures how often
/// random planes pass near cluster centers.
pub fn first_layer_pressure_experiment(cds: &ClusteredDataset, cfg: &PressureConfig) -> Result<PressureReport> {
    let ds = cds.to_dataset()?;
    let mode = SeparationMode::distance(cds.delta)?;
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = rng::derive_seed(cfg.seed, t as u64);
            let fl = build_first_layer(&ds, &ConstructionConfig::new(mode, seed))?;
            Ok(PressureTrial {
                seed,
                m_start: fl.m_start,
                m_used: fl.m_used,
                retries: fl.retries,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let band = band_width(cfg.band_constant, cds.delta, cfg.t, cds.dim());
    let mut rng = rng::step_rng(cfg.seed, rng::stream::PRESSURE_PLANES);
    let fraction = near_center_fraction(&cds.centers, band, cfg.planes, &mut rng);
    let clusters = cds.centers.len();
    let effective = fraction * clusters as f64;
    Ok(PressureReport {
        config: *cfg,
        mean_m_used: if trials.is_empty() {
            0.0
        } else {
            trials.iter().map(|t| t.m_used as f64).sum::<f64>() / trials.len() as f64
        },
        trials,
        clusters,
        band,
        near_center_fraction: fraction,
        hyperplanes_per_cluster: 1,
        effective_clusters_per_plane: effective,
        implied_lower_bound: (effective > 0.0).then(|| clusters as f64 / effective),
    })
}
