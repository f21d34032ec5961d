//! Datasets, δ-separation checks and synthetic separated datasets.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{self, StepRng};
use crate::{Error, Result};

/// Absolute slack on distances and angles used when callers have no
/// better value.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub features: Vec<f64>,
    pub label: bool,
}

impl LabeledPoint {
    pub fn new(features: Vec<f64>, label: bool) -> Self {
        Self { features, label }
    }
}

/// A nonempty list of points sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    points: Vec<LabeledPoint>,
}

impl Dataset {
    pub fn new(points: Vec<LabeledPoint>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::InvalidInput("dataset must contain at least one point".into()))?;
        let dim = first.features.len();
        if dim == 0 {
            return Err(Error::InvalidInput("points must have at least one feature".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.features.len(),
                });
            }
            if let Some(bad) = p.features.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("point {i} has non-finite feature {bad}")));
            }
        }
        Ok(Self { dim, points })
    }

    /// Builds a dataset from parallel feature and label lists.
    pub fn from_parts(features: Vec<Vec<f64>>, labels: Vec<bool>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        Self::new(
            features
                .into_iter()
                .zip(labels)
                .map(|(f, l)| LabeledPoint::new(f, l))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for the usual `len`/`is_empty` pairing.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[LabeledPoint] {
        &self.points
    }

    pub fn features(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.iter().map(|p| p.features.as_slice())
    }

    pub fn labels(&self) -> Vec<bool> {
        self.points.iter().map(|p| p.label).collect()
    }

    /// Same features, new labels.
    pub fn with_labels(&self, labels: &[bool]) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: labels.len(),
            });
        }
        let points = self
            .points
            .iter()
            .zip(labels)
            .map(|(p, &l)| LabeledPoint::new(p.features.clone(), l))
            .collect();
        Ok(Self { dim: self.dim, points })
    }
}

/// Which of the two separation assumptions a dataset is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SeparationMode {
    /// Pairwise angle at least `delta` radians.
    Angular { delta: f64 },
    /// Norms at most 1 and pairwise ℓ² distance at least `delta`.
    Distance { delta: f64 },
}

impl SeparationMode {
    pub fn angular(delta: f64) -> Result<Self> {
        let mode = SeparationMode::Angular { delta };
        mode.validate()?;
        Ok(mode)
    }

    pub fn distance(delta: f64) -> Result<Self> {
        let mode = SeparationMode::Distance { delta };
        mode.validate()?;
        Ok(mode)
    }

    pub fn delta(&self) -> f64 {
        match *self {
            SeparationMode::Angular { delta } | SeparationMode::Distance { delta } => delta,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SeparationMode::Angular { .. } => "angular",
            SeparationMode::Distance { .. } => "distance",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (delta, max) = match *self {
            SeparationMode::Angular { delta } => (delta, PI),
            SeparationMode::Distance { delta } => (delta, 2.0),
        };
        if !(delta > 0.0 && delta <= max) {
            return Err(Error::InvalidInput(format!(
                "{} delta must lie in (0, {max}], got {delta}",
                self.name()
            )));
        }
        Ok(())
    }

    fn is_extreme(&self) -> bool {
        match *self {
            SeparationMode::Angular { delta } => delta >= PI,
            SeparationMode::Distance { delta } => delta >= 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationVerdict {
    pub holds: bool,
    /// The closest pair, `None` for a single point.
    pub worst_pair: Option<(usize, usize)>,
    /// Smallest pairwise angle (radians) or distance; +∞ without pairs.
    pub worst_value: f64,
    /// Largest feature norm. Only constrained in distance mode.
    pub max_norm: f64,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

fn unit(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    (n > 0.0).then(|| a.iter().map(|v| v / n).collect())
}

/// Angle between two vectors already normalized by [`unit`].
fn unit_angle(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b).clamp(-1.0, 1.0).acos()
}

/// Finds the pair minimizing `score` (ties broken by lowest index pair).
fn closest_pair<F>(n: usize, score: F) -> Option<((usize, usize), f64)>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    (0..n)
        .into_par_iter()
        .filter_map(|i| {
            (i + 1..n).map(|j| ((i, j), score(i, j))).fold(
                None,
                |best: Option<((usize, usize), f64)>, cur| match best {
                    Some(b) if b.1 <= cur.1 => Some(b),
                    _ => Some(cur),
                },
            )
        })
        .reduce_with(|a, b| if a.1 < b.1 || (a.1 == b.1 && a.0 < b.0) { a } else { b })
}

pub fn check_separation(ds: &Dataset, mode: SeparationMode, tol: f64) -> Result<SeparationVerdict> {
    mode.validate()?;
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::InvalidInput(format!("tolerance must be >= 0, got {tol}")));
    }
    let n = ds.len();
    let max_norm = ds.features().map(norm).fold(0.0, f64::max);
    match mode {
        SeparationMode::Angular { delta } => {
            let units = ds
                .features()
                .enumerate()
                .map(|(index, f)| unit(f).ok_or(Error::ZeroNorm { index }))
                .collect::<Result<Vec<_>>>()?;
            // acos is decreasing, so the smallest angle is the largest cosine.
            let best = closest_pair(n, |i, j| -dot(&units[i], &units[j]).clamp(-1.0, 1.0));
            let (worst_pair, worst_value) = match best {
                Some((pair, neg_cos)) => (Some(pair), (-neg_cos).acos()),
                None => (None, f64::INFINITY),
            };
            Ok(SeparationVerdict {
                holds: worst_value >= delta - tol,
                worst_pair,
                worst_value,
                max_norm,
            })
        }
        SeparationMode::Distance { delta } => {
            let pts: Vec<&[f64]> = ds.features().collect();
            let best = closest_pair(n, |i, j| squared_distance(pts[i], pts[j]));
            let (worst_pair, worst_value) = match best {
                Some((pair, sq)) => (Some(pair), sq.sqrt()),
                None => (None, f64::INFINITY),
            };
            Ok(SeparationVerdict {
                holds: worst_value >= delta - tol && max_norm <= 1.0 + tol,
                worst_pair,
                worst_value,
                max_norm,
            })
        }
    }
}

pub(crate) fn random_unit_vector(rng: &mut StepRng, d: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&g);
        if n > 1e-12 {
            return g.into_iter().map(|v| v / n).collect();
        }
    }
}

/// Uniform samples from the sphere of the given radius (Gaussian-normalize).
pub fn sample_sphere_uniform(d: usize, radius: f64, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if d < 2 {
        return Err(Error::InvalidInput(format!("sphere sampling needs d >= 2, got {d}")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
    }
    let mut rng = rng::step_rng(seed, rng::stream::SPHERE);
    Ok((0..count)
        .map(|_| {
            random_unit_vector(&mut rng, d)
                .into_iter()
                .map(|v| v * radius)
                .collect()
        })
        .collect())
}

fn random_in_ball(rng: &mut StepRng, d: usize) -> Vec<f64> {
    let dir = random_unit_vector(rng, d);
    let r = rng.random::<f64>().powf(1.0 / d as f64);
    dir.into_iter().map(|v| v * r).collect()
}

/// Rejection-samples a δ-separated dataset with uniformly random labels.
///
/// Distance mode draws from the unit ball, angular mode from the unit
/// sphere. Acceptance uses the exact formulas of [`check_separation`], so
/// the result always validates with `tol = 0`. The rejection budget is
/// `1000 * n`.
pub fn generate_separated_dataset(n: usize, d: usize, mode: SeparationMode, seed: u64) -> Result<Dataset> {
    mode.validate()?;
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput("n and d must be positive".into()));
    }
    let mut rng = rng::step_rng(seed, rng::stream::DATASET_POINTS);
    let features = if mode.is_extreme() {
        extreme_pair(&mut rng, n, d)?
    } else {
        rejection_sample(&mut rng, n, d, mode)?
    };
    let mut label_rng = rng::step_rng(seed, rng::stream::DATASET_LABELS);
    let labels = (0..n).map(|_| label_rng.random::<bool>()).collect();
    Dataset::from_parts(features, labels)
}

/// δ equal to the diameter (or π) admits only an antipodal pair, which has
/// probability zero under any continuous proposal. Axis vectors make the
/// distance exactly 2 in floating point.
fn extreme_pair(rng: &mut StepRng, n: usize, d: usize) -> Result<Vec<Vec<f64>>> {
    if n > 2 {
        return Err(Error::Infeasible {
            requested: n,
            accepted: 2,
            attempted: 0,
        });
    }
    let axis = rng.random_range(0..d);
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let mut a = vec![0.0; d];
    a[axis] = sign;
    let b: Vec<f64> = a.iter().map(|v| -v).collect();
    Ok([a, b].into_iter().take(n).collect())
}

fn rejection_sample(rng: &mut StepRng, n: usize, d: usize, mode: SeparationMode) -> Result<Vec<Vec<f64>>> {
    let budget = 1000 * n;
    let mut rejections = 0usize;
    let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(n);
    // angular acceptance compares the re-normalized vectors check_separation sees
    let mut units: Vec<Vec<f64>> = Vec::new();
    while accepted.len() < n {
        let (candidate, ok) = match mode {
            SeparationMode::Distance { delta } => {
                let c = random_in_ball(rng, d);
                let ok = norm(&c) <= 1.0 && accepted.par_iter().all(|a| squared_distance(a, &c).sqrt() >= delta);
                (c, ok)
            }
            SeparationMode::Angular { delta } => {
                let c = random_unit_vector(rng, d);
                let u = unit(&c).expect("unit vector has nonzero norm");
                let ok = units.par_iter().all(|a| unit_angle(a, &u) >= delta);
                if ok {
                    units.push(u);
                }
                (c, ok)
            }
        };
        if ok {
            accepted.push(candidate);
        } else {
            rejections += 1;
            if rejections >= budget {
                return Err(Error::Infeasible {
                    requested: n,
                    accepted: accepted.len(),
                    attempted: rejections,
                });
            }
        }
    }
    Ok(accepted)
}

/// Dataset plus the optional `cluster` column written by the lower-bound
/// harness.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvDataset {
    pub dataset: Dataset,
    pub clusters: Option<Vec<usize>>,
}

/// Writes `label,f1,...,fd[,cluster]` with round-trip float formatting.
pub fn write_csv<W: Write>(ds: &Dataset, clusters: Option<&[usize]>, out: W) -> Result<()> {
    if let Some(c) = clusters {
        if c.len() != ds.len() {
            return Err(Error::DimensionMismatch {
                expected: ds.len(),
                got: c.len(),
            });
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["label".to_string()];
    header.extend((1..=ds.dim()).map(|i| format!("f{i}")));
    if clusters.is_some() {
        header.push("cluster".into());
    }
    w.write_record(&header).map_err(csv_io)?;
    for (i, p) in ds.points().iter().enumerate() {
        let mut row = Vec::with_capacity(ds.dim() + 2);
        row.push(if p.label { "1".to_string() } else { "0".to_string() });
        row.extend(p.features.iter().map(|v| format!("{v:?}")));
        if let Some(c) = clusters {
            row.push(c[i].to_string());
        }
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::parse("csv", format!("{other:?}")),
    }
}

pub fn read_csv<R: Read>(input: R) -> Result<CsvDataset> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers().map_err(csv_io)?.clone();
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols.first() != Some(&"label") {
        return Err(Error::parse("line 1", "first column must be `label`"));
    }
    let has_cluster = cols.last() == Some(&"cluster");
    let feature_cols = &cols[1..cols.len() - usize::from(has_cluster)];
    for (i, c) in feature_cols.iter().enumerate() {
        if *c != format!("f{}", i + 1) {
            return Err(Error::parse(
                format!("line 1, column {}", i + 2),
                format!("expected `f{}`, found `{c}`", i + 1),
            ));
        }
    }
    let d = feature_cols.len();
    let mut points = Vec::new();
    let mut clusters = Vec::new();
    for (row_idx, rec) in r.records().enumerate() {
        let line = row_idx + 2;
        let rec = rec.map_err(|e| Error::parse(format!("line {line}"), e.to_string()))?;
        if rec.len() != cols.len() {
            return Err(Error::parse(
                format!("line {line}"),
                format!("expected {} fields, found {}", cols.len(), rec.len()),
            ));
        }
        let label = match rec[0].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(
                    format!("line {line}, column 1"),
                    format!("label must be 0 or 1, found `{other}`"),
                ))
            }
        };
        let features = (0..d)
            .map(|k| {
                rec[k + 1]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(format!("line {line}, column {}", k + 2), e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        if has_cluster {
            let c = rec[d + 1]
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::parse(format!("line {line}, column {}", d + 2), e.to_string()))?;
            clusters.push(c);
        }
        points.push(LabeledPoint::new(features, label));
    }
    Ok(CsvDataset {
        dataset: Dataset::new(points)?,
        clusters: has_cluster.then_some(clusters),
    })
}
