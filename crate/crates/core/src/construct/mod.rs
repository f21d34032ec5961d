//! The memorizing network, built in four steps.
//!
//! 1. Random Gaussian hyperplanes give each sample a distinct code
//!    z⁽¹⁾ ∈ {0,1}^{d1} ([`build_first_layer`]).
//! 2. Random GF(2) masks shorten it to z⁽²⁾ ∈ {0,1}^{d2}, compiled into
//!    threshold XOR trees ([`plan_compression`], [`build_xor_subnetwork`]).
//! 3. A trie over z⁽²⁾ splits the samples into K prefix groups of at most
//!    ⌈√n⌉ each; a selector layer detects the group ([`prefix_partition`],
//!    [`build_selector_layer`]).
//! 4. The code is copied into its group's chunk, matched against the group
//!    members one neuron per position, and the matches are OR-ed
//!    ([`build_expansion_layer`], [`build_memorization_layer`],
//!    [`build_output_layer`]).
//!
//! Steps 1 and 2 are randomized and retried until their outputs are
//! distinct; everything after is deterministic.

mod code;
mod compression;
mod first_layer;
mod layers;
mod partition;

pub use code::{gf2_inner_product, BinaryCode};
pub use compression::{
    build_xor_subnetwork, compression_width, plan_compression, sample_masks, xor_budget, Compression, CompressionPlan,
    XorBudget, XorSubnetwork,
};
pub use first_layer::{build_first_layer, first_layer_width, sample_gaussian_layer, FirstLayer};
pub use layers::{
    build_expansion_layer, build_memorization_layer, build_output_layer, build_selector_layer, expansion_code,
    selector_code,
};
pub use partition::{ceil_sqrt, prefix_partition, PrefixPartition, Subset};

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::geometry::{Dataset, SeparationMode};
use crate::netcore::{SizeTotals, ThresholdLayer, ThresholdNetwork};
use crate::{Error, Result};

pub const DEFAULT_EPS: f64 = 0.1;
pub const DEFAULT_C_DIST: f64 = 13.0;
pub const DEFAULT_MAX_RETRIES: usize = 20;
pub const DEFAULT_DOUBLING_AFTER: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstructionConfig {
    pub mode: SeparationMode,
    /// Failure budget of the coding layer; only affects its initial width.
    pub eps1: f64,
    /// Failure budget of the compression; only affects its initial width.
    pub eps2: f64,
    pub seed: u64,
    /// Draws per randomized step before giving up.
    pub max_retries: usize,
    /// Width constant for the coding layer in distance mode.
    pub c_dist: f64,
    /// Consecutive rejections at one width before the width doubles.
    pub doubling_after: usize,
}

impl ConstructionConfig {
    pub fn new(mode: SeparationMode, seed: u64) -> Self {
        Self {
            mode,
            eps1: DEFAULT_EPS,
            eps2: DEFAULT_EPS,
            seed,
            max_retries: DEFAULT_MAX_RETRIES,
            c_dist: DEFAULT_C_DIST,
            doubling_after: DEFAULT_DOUBLING_AFTER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mode.validate()?;
        for (name, eps) in [("eps1", self.eps1), ("eps2", self.eps2)] {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::InvalidInput(format!("{name} must lie in (0, 1), got {eps}")));
            }
        }
        if self.max_retries == 0 || self.doubling_after == 0 {
            return Err(Error::InvalidInput(
                "max_retries and doubling_after must be positive".into(),
            ));
        }
        if !(self.c_dist > 0.0 && self.c_dist.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "c_dist must be positive, got {}",
                self.c_dist
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub name: String,
    /// Index of the step's first layer in the network.
    pub first_layer: usize,
    pub totals: SizeTotals,
}

impl StepRecord {
    pub fn layers(&self) -> Range<usize> {
        self.first_layer..self.first_layer + self.totals.layers
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogBases {
    pub first_layer_width: String,
    pub compression_width: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionReport {
    pub n: usize,
    pub input_dim: usize,
    pub config: ConstructionConfig,
    pub log_bases: LogBases,
    pub steps: Vec<StepRecord>,
    pub totals: SizeTotals,
    /// Coding width.
    pub d1: usize,
    /// Compressed code length.
    pub d2: usize,
    /// Expanded width, K·(d2 + 1).
    pub d3: usize,
    pub k: usize,
    /// Memorization neurons: the largest subset.
    pub r: usize,
    /// ⌈√n⌉.
    pub subset_cap: usize,
    /// √n·d2.
    pub k_bound: f64,
    pub first_layer_m_start: usize,
    pub first_layer_retries: usize,
    pub first_layer_min_margin: f64,
    pub compression_m_start: usize,
    pub compression_retries: usize,
    pub xor_levels: usize,
    pub xor_gadget_neurons: usize,
    pub xor_padding_neurons: usize,
    pub xor_padding_weights: usize,
    /// m_used + 3(d1−1)d2 + padding + (K + d2) + K(d2 + 1) + ⌈√n⌉ + 1.
    pub neuron_bound: usize,
    /// d2 + 1, the cap on every integer weight.
    pub integer_weight_bound: i64,
}

impl ConstructionReport {
    pub fn step(&self, name: &str) -> Option<&StepRecord> {
        self.steps.iter().find(|s| s.name == name)
    }
}

pub mod step {
    pub const FIRST_LAYER: &str = "first_layer";
    pub const COMPRESSION: &str = "compression";
    pub const SELECTOR: &str = "selector";
    pub const EXPANSION: &str = "expansion";
    pub const MEMORIZATION: &str = "memorization";
    pub const OUTPUT: &str = "output";
}

/// Everything a construction produced, including the intermediate codes
/// each prefix of the network is expected to reproduce.
#[derive(Debug, Clone)]
pub struct Construction {
    pub network: ThresholdNetwork,
    pub report: ConstructionReport,
    pub codes: Vec<BinaryCode>,
    pub compressed: Vec<BinaryCode>,
    pub partition: PrefixPartition,
}

impl Construction {
    pub fn into_parts(self) -> (ThresholdNetwork, ConstructionReport) {
        (self.network, self.report)
    }
}

/// Builds a network with `forward(x_i) = y_i` for every sample.
///
/// The result is checked on the whole training set before it is returned; a
/// mismatch is reported as [`Error::InvariantBreach`].
pub fn construct_memorizer(ds: &Dataset, cfg: &ConstructionConfig) -> Result<Construction> {
    let labels = ds.labels();
    let first = build_first_layer(ds, cfg)?;
    let d1 = first.m_used;
    let comp = plan_compression(&first.codes, cfg)?;
    let d2 = comp.plan.output_len();
    let xor = build_xor_subnetwork(&comp.plan, d1)?;
    let part = prefix_partition(&comp.compressed)?;
    let k = part.k();

    let mut steps = Vec::new();
    let mut layers: Vec<ThresholdLayer> = Vec::new();
    let mut push_step = |name: &str, new: Vec<ThresholdLayer>, layers: &mut Vec<ThresholdLayer>| {
        steps.push(StepRecord {
            name: name.to_string(),
            first_layer: layers.len(),
            totals: SizeTotals::of_layers(&new),
        });
        layers.extend(new);
    };
    push_step(step::FIRST_LAYER, vec![first.layer], &mut layers);
    push_step(step::COMPRESSION, xor.layers.clone(), &mut layers);
    push_step(step::SELECTOR, vec![build_selector_layer(&part, d2)?], &mut layers);
    push_step(step::EXPANSION, vec![build_expansion_layer(&part, d2)?], &mut layers);
    let memo = build_memorization_layer(&part, &comp.compressed, &labels)?;
    let r = memo.rows();
    push_step(step::MEMORIZATION, vec![memo], &mut layers);
    push_step(step::OUTPUT, vec![build_output_layer(r)?], &mut layers);

    let network = ThresholdNetwork::new(ds.dim(), layers)?;
    let totals = steps.iter().fold(SizeTotals::default(), |acc, s| acc.combine(s.totals));
    let cap = part.cap;
    let report = ConstructionReport {
        n: ds.len(),
        input_dim: ds.dim(),
        config: *cfg,
        log_bases: LogBases {
            first_layer_width: "natural".into(),
            compression_width: "2".into(),
        },
        steps,
        totals,
        d1,
        d2,
        d3: k * (d2 + 1),
        k,
        r,
        subset_cap: cap,
        k_bound: part.k_bound(),
        first_layer_m_start: first.m_start,
        first_layer_retries: first.retries,
        first_layer_min_margin: first.min_margin,
        compression_m_start: comp.m_start,
        compression_retries: comp.retries,
        xor_levels: xor.levels,
        xor_gadget_neurons: xor.gadget_neurons,
        xor_padding_neurons: xor.padding_neurons,
        xor_padding_weights: xor.padding_weights,
        neuron_bound: d1 + xor_budget(d1, d2).neurons + xor.padding_neurons + (k + d2) + k * (d2 + 1) + cap + 1,
        integer_weight_bound: d2 as i64 + 1,
    };

    verify(&network, &report, ds, &labels)?;
    Ok(Construction {
        network,
        report,
        codes: first.codes,
        compressed: comp.compressed,
        partition: part,
    })
}

fn verify(net: &ThresholdNetwork, report: &ConstructionReport, ds: &Dataset, labels: &[bool]) -> Result<()> {
    let xs: Vec<&[f64]> = ds.features().collect();
    let out = net.forward_batch(&xs)?;
    if let Some(i) = out.iter().zip(labels).position(|(a, b)| a != b) {
        return Err(Error::InvariantBreach(format!(
            "sample {i} evaluates to {} but is labelled {}",
            u8::from(out[i]),
            u8::from(labels[i])
        )));
    }
    let max = net.layers()[1..]
        .iter()
        .filter_map(|l| l.max_abs_integer())
        .max()
        .unwrap_or(0);
    if !net.has_integer_tail() || max > report.integer_weight_bound {
        return Err(Error::InvariantBreach(format!(
            "integer weights reach {max}, bound is {}",
            report.integer_weight_bound
        )));
    }
    if report.totals.neurons > report.neuron_bound {
        return Err(Error::InvariantBreach(format!(
            "{} neurons exceed the bound {}",
            report.totals.neurons, report.neuron_bound
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::generate_separated_dataset;
    use crate::netcore::audit;

    #[test]
    fn config_validation() {
        let mut c = ConstructionConfig::new(SeparationMode::distance(0.2).unwrap(), 0);
        assert!(c.validate().is_ok());
        c.eps1 = 1.0;
        assert!(c.validate().is_err());
        c.eps1 = 0.1;
        c.max_retries = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_sample_constant() {
        for label in [false, true] {
            let ds = Dataset::from_parts(vec![vec![0.1, -0.2, 0.3]], vec![label]).unwrap();
            let cfg = ConstructionConfig::new(SeparationMode::distance(0.5).unwrap(), 1);
            let c = construct_memorizer(&ds, &cfg).unwrap();
            assert_eq!(c.network.forward(&[0.1, -0.2, 0.3]).unwrap(), label);
            assert_eq!(c.report.k, 1);
        }
    }

    #[test]
    fn xor_labelling_in_the_plane() {
        let xs = vec![vec![0.5, 0.5], vec![-0.5, 0.5], vec![-0.5, -0.5], vec![0.5, -0.5]];
        let ds = Dataset::from_parts(xs.clone(), vec![true, false, true, false]).unwrap();
        let cfg = ConstructionConfig::new(SeparationMode::distance(0.5).unwrap(), 2);
        let c = construct_memorizer(&ds, &cfg).unwrap();
        assert_eq!(c.network.forward_batch(&xs).unwrap(), vec![true, false, true, false]);
    }

    #[test]
    fn report_is_consistent_with_audit() {
        let mode = SeparationMode::distance(0.3).unwrap();
        let ds = generate_separated_dataset(64, 6, mode, 4).unwrap();
        let c = construct_memorizer(&ds, &ConstructionConfig::new(mode, 8)).unwrap();
        let r = &c.report;
        assert_eq!(audit(&c.network), r.totals);
        assert_eq!(r.d3, r.k * (r.d2 + 1));
        assert_eq!(r.step(step::EXPANSION).unwrap().totals.neurons, r.d3);
        assert_eq!(r.step(step::SELECTOR).unwrap().totals.neurons, r.k + r.d2);
        assert_eq!(r.step(step::FIRST_LAYER).unwrap().totals.neurons, r.d1);
        assert!(r.totals.neurons <= r.neuron_bound);
        let covered: usize = r.steps.iter().map(|s| s.totals.layers).sum();
        assert_eq!(covered, c.network.layers().len());
    }

    #[test]
    fn identical_inputs_identical_networks() {
        let mode = SeparationMode::angular(0.3).unwrap();
        let ds = generate_separated_dataset(30, 5, mode, 6).unwrap();
        let cfg = ConstructionConfig::new(mode, 99);
        let a = construct_memorizer(&ds, &cfg).unwrap();
        let b = construct_memorizer(&ds, &cfg).unwrap();
        assert_eq!(a.network, b.network);
        assert_eq!(a.report, b.report);
    }
}
