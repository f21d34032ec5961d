use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{BinaryCode, ConstructionConfig};
use crate::geometry::{self, Dataset, SeparationMode};
use crate::netcore::{RealLayer, ThresholdLayer, MARGIN_WARNING};
use crate::rng::{self, StepRng};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct FirstLayer {
    pub layer: ThresholdLayer,
    /// `codes[i] = σ(W x_i + b)`, pairwise distinct.
    pub codes: Vec<BinaryCode>,
    pub m_start: usize,
    pub m_used: usize,
    /// Rejected draws before the accepted one.
    pub retries: usize,
    /// Smallest |pre-activation| over all samples and neurons.
    pub min_margin: f64,
}

/// Initial width of the coding layer.
///
/// Angular: ⌈(4π/δ)·ln(n/ε)⌉. Distance: ⌈(c_dist/δ)·ln(n/ε)⌉.
pub fn first_layer_width(n: usize, mode: SeparationMode, eps1: f64, c_dist: f64) -> usize {
    let c = match mode {
        SeparationMode::Angular { .. } => 4.0 * std::f64::consts::PI,
        SeparationMode::Distance { .. } => c_dist,
    };
    let m = (c / mode.delta() * (n as f64 / eps1).ln()).ceil();
    (m as usize).max(1)
}

struct Draw {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Row-major weights first, then biases (distance mode only).
fn draw(rng: &mut StepRng, m: usize, d: usize, mode: SeparationMode) -> Draw {
    let weights = (0..m * d).map(|_| rng.sample(StandardNormal)).collect();
    let bias = match mode {
        SeparationMode::Angular { .. } => vec![0.0; m],
        SeparationMode::Distance { .. } => (0..m).map(|_| rng.sample(StandardNormal)).collect(),
    };
    Draw { weights, bias }
}

/// A fresh `m`-neuron coding layer drawn as [`build_first_layer`] draws it,
/// without any postcondition.
pub fn sample_gaussian_layer(m: usize, d: usize, mode: SeparationMode, seed: u64) -> Result<ThresholdLayer> {
    let mut rng = rng::step_rng(seed, rng::stream::FIRST_LAYER);
    let Draw { weights, bias } = draw(&mut rng, m, d, mode);
    Ok(ThresholdLayer::Real(RealLayer::new(m, d, weights, bias)?))
}

fn encode(draw: &Draw, m: usize, x: &[f64]) -> (BinaryCode, f64) {
    let d = x.len();
    let mut code = BinaryCode::zeroed(m);
    let mut margin = f64::INFINITY;
    for r in 0..m {
        let t = geometry::dot(&draw.weights[r * d..(r + 1) * d], x) + draw.bias[r];
        margin = margin.min(t.abs());
        if t >= 0.0 {
            code.set(r, true);
        }
    }
    (code, margin)
}

/// Pairs `(first, later)` of samples sharing a code.
fn collisions(codes: &[BinaryCode]) -> Vec<(usize, usize)> {
    let mut seen: HashMap<&BinaryCode, usize> = HashMap::with_capacity(codes.len());
    let mut out = Vec::new();
    for (i, c) in codes.iter().enumerate() {
        if let Some(&j) = seen.get(c) {
            out.push((j, i));
        } else {
            seen.insert(c, i);
        }
    }
    out
}

/// Random Gaussian hyperplanes whose sign patterns give every sample a
/// distinct code.
///
/// A draw is rejected if two codes collide or a pre-activation falls within
/// [`MARGIN_WARNING`] of zero. After `cfg.doubling_after` consecutive
/// rejections at one width the width doubles.
pub fn build_first_layer(ds: &Dataset, cfg: &ConstructionConfig) -> Result<FirstLayer> {
    cfg.validate()?;
    let verdict = geometry::check_separation(ds, cfg.mode, geometry::DEFAULT_TOL)?;
    if !verdict.holds {
        let (i, j) = verdict.worst_pair.unwrap_or((0, 0));
        return Err(Error::NotSeparated(format!(
            "{} separation {} required, points {i} and {j} at {} (max norm {})",
            cfg.mode.name(),
            cfg.mode.delta(),
            verdict.worst_value,
            verdict.max_norm
        )));
    }
    let n = ds.len();
    let d = ds.dim();
    let xs: Vec<&[f64]> = ds.features().collect();
    let m_start = first_layer_width(n, cfg.mode, cfg.eps1, cfg.c_dist);
    let mut rng = rng::step_rng(cfg.seed, rng::stream::FIRST_LAYER);
    let mut m = m_start;
    let mut streak = 0;
    let mut last_failure = String::new();
    for attempt in 0..cfg.max_retries {
        let draw = draw(&mut rng, m, d, cfg.mode);
        let encoded: Vec<(BinaryCode, f64)> = xs.par_iter().map(|x| encode(&draw, m, x)).collect();
        let min_margin = encoded.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        let codes: Vec<BinaryCode> = encoded.into_iter().map(|e| e.0).collect();
        let clash = collisions(&codes);
        if clash.is_empty() && min_margin >= MARGIN_WARNING {
            return Ok(FirstLayer {
                layer: ThresholdLayer::Real(RealLayer::new(m, d, draw.weights, draw.bias)?),
                codes,
                m_start,
                m_used: m,
                retries: attempt,
                min_margin,
            });
        }
        last_failure = match clash
            .iter()
            .min_by(|a, b| geometry::distance(xs[a.0], xs[a.1]).total_cmp(&geometry::distance(xs[b.0], xs[b.1])))
        {
            Some(&(i, j)) => format!(
                "{} colliding pairs at width {m}; closest is ({i}, {j}) at distance {}",
                clash.len(),
                geometry::distance(xs[i], xs[j])
            ),
            None => format!("pre-activation margin {min_margin:e} at width {m}"),
        };
        streak += 1;
        if streak == cfg.doubling_after {
            m *= 2;
            streak = 0;
        }
    }
    Err(Error::RetriesExhausted {
        step: "first_layer",
        attempts: cfg.max_retries,
        detail: last_failure,
    })
}
