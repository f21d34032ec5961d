use std::collections::HashSet;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::code::parity_and;
use super::{BinaryCode, ConstructionConfig};
use crate::netcore::{IntegerLayerBuilder, ThresholdLayer};
use crate::rng;
use crate::{Error, Result};

/// The random masks b_1 … b_m over codes of length d⁽¹⁾.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressionPlan {
    masks: Vec<BinaryCode>,
}

impl CompressionPlan {
    pub fn new(masks: Vec<BinaryCode>) -> Result<Self> {
        let first = masks
            .first()
            .ok_or_else(|| Error::InvalidInput("compression needs at least one mask".into()))?;
        if let Some(bad) = masks.iter().find(|m| m.len() != first.len()) {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                got: bad.len(),
            });
        }
        Ok(Self { masks })
    }

    pub fn masks(&self) -> &[BinaryCode] {
        &self.masks
    }

    pub fn input_len(&self) -> usize {
        self.masks[0].len()
    }

    pub fn output_len(&self) -> usize {
        self.masks.len()
    }

    /// (⟨z, b_1⟩, …, ⟨z, b_m⟩).
    pub fn apply(&self, z: &BinaryCode) -> Result<BinaryCode> {
        if z.len() != self.input_len() {
            return Err(Error::DimensionMismatch {
                expected: self.input_len(),
                got: z.len(),
            });
        }
        let mut out = BinaryCode::zeroed(self.masks.len());
        for (k, mask) in self.masks.iter().enumerate() {
            out.set(k, parity_and(z, mask));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct Compression {
    pub plan: CompressionPlan,
    /// z⁽²⁾ for every sample, pairwise distinct.
    pub compressed: Vec<BinaryCode>,
    pub m_start: usize,
    pub retries: usize,
}

/// ⌈3·log₂(n/ε′)⌉.
pub fn compression_width(n: usize, eps2: f64) -> usize {
    ((3.0 * (n as f64 / eps2).log2()).ceil() as usize).max(1)
}

pub(crate) fn all_distinct(codes: &[BinaryCode]) -> bool {
    let mut seen = HashSet::with_capacity(codes.len());
    codes.iter().all(|c| seen.insert(c))
}

/// `count` masks of i.i.d. Bernoulli(1/2) bits, drawn as
/// [`plan_compression`] draws them.
pub fn sample_masks(count: usize, len: usize, seed: u64) -> Result<Vec<BinaryCode>> {
    BinaryCode::zeros(len)?;
    let mut rng = rng::step_rng(seed, rng::stream::COMPRESSION);
    Ok((0..count)
        .map(|_| BinaryCode::from_words(len, || rng.next_u64()))
        .collect())
}

/// Draws Bernoulli(1/2) masks until the compressed codes are distinct.
pub fn plan_compression(codes: &[BinaryCode], cfg: &ConstructionConfig) -> Result<Compression> {
    cfg.validate()?;
    let d1 = codes
        .first()
        .ok_or_else(|| Error::InvalidInput("no codes to compress".into()))?
        .len();
    if let Some(bad) = codes.iter().find(|c| c.len() != d1) {
        return Err(Error::DimensionMismatch {
            expected: d1,
            got: bad.len(),
        });
    }
    if !all_distinct(codes) {
        return Err(Error::Precondition(
            "codes to compress are not pairwise distinct".into(),
        ));
    }
    let m_start = compression_width(codes.len(), cfg.eps2);
    let mut rng = rng::step_rng(cfg.seed, rng::stream::COMPRESSION);
    let mut m = m_start;
    let mut streak = 0;
    for attempt in 0..cfg.max_retries {
        let masks: Vec<BinaryCode> = (0..m).map(|_| BinaryCode::from_words(d1, || rng.next_u64())).collect();
        let plan = CompressionPlan::new(masks)?;
        let compressed = codes.iter().map(|z| plan.apply(z)).collect::<Result<Vec<_>>>()?;
        if all_distinct(&compressed) {
            return Ok(Compression {
                plan,
                compressed,
                m_start,
                retries: attempt,
            });
        }
        streak += 1;
        if streak == cfg.doubling_after {
            m *= 2;
            streak = 0;
        }
    }
    Err(Error::RetriesExhausted {
        step: "compression",
        attempts: cfg.max_retries,
        detail: format!("compressed codes still collide at width {m}"),
    })
}

/// XOR trees compiled to threshold layers, with their size accounting.
#[derive(Debug, Clone)]
pub struct XorSubnetwork {
    pub layers: Vec<ThresholdLayer>,
    /// Tree levels; each level is two layers. Zero when no mask has two
    /// inputs, in which case a single selection layer is emitted.
    pub levels: usize,
    /// 3 per XOR node, Σ 3(p_k − 1) over masks of popcount p_k ≥ 1.
    pub gadget_neurons: usize,
    /// Pass-through and constant-zero neurons.
    pub padding_neurons: usize,
    /// Weights plus biases of the padding neurons.
    pub padding_weights: usize,
}

#[derive(Clone, Copy)]
enum Node {
    Xor(usize, usize),
    Pass(usize),
}

/// Compiles `plan` into layers mapping z ∈ {0,1}^{d1} to the compressed code.
///
/// Each output bit is a balanced XOR tree over the inputs its mask selects.
/// A tree level is two layers: the gadget pair σ(a−b−1), σ(b−a−1), then the
/// combiner σ(u+v−1). Shallower trees are padded with σ(2z−1) so every
/// output lands in the final layer, in mask order.
pub fn build_xor_subnetwork(plan: &CompressionPlan, d1: usize) -> Result<XorSubnetwork> {
    if plan.input_len() != d1 {
        return Err(Error::DimensionMismatch {
            expected: d1,
            got: plan.input_len(),
        });
    }
    let mut wires: Vec<Vec<usize>> = plan.masks().iter().map(|m| m.ones().collect()).collect();
    let levels = wires
        .iter()
        .map(|w| w.len().max(1).next_power_of_two().trailing_zeros() as usize)
        .max()
        .unwrap_or(0);
    let mut out = XorSubnetwork {
        layers: Vec::with_capacity(2 * levels.max(1)),
        levels,
        gadget_neurons: 0,
        padding_neurons: 0,
        padding_weights: 0,
    };

    if levels == 0 {
        let mut b = IntegerLayerBuilder::new(d1);
        for w in &wires {
            match w.first() {
                Some(&j) => out.pass(&mut b, j)?,
                None => out.constant_zero(&mut b)?,
            };
        }
        out.layers.push(b.build()?);
        return Ok(out);
    }

    let mut width = d1;
    for level in 0..levels {
        let last = level + 1 == levels;
        let mut a = IntegerLayerBuilder::new(width);
        let mut nodes: Vec<Vec<Node>> = Vec::with_capacity(wires.len());
        for w in &wires {
            let mut ns = Vec::with_capacity(w.len().div_ceil(2));
            for pair in w.chunks(2) {
                ns.push(match *pair {
                    [x, y] => {
                        let u = a.push([(x, 1), (y, -1)], -1)?;
                        let v = a.push([(x, -1), (y, 1)], -1)?;
                        out.gadget_neurons += 2;
                        Node::Xor(u, v)
                    }
                    [x] => Node::Pass(out.pass(&mut a, x)?),
                    _ => unreachable!("chunks(2)"),
                });
            }
            nodes.push(ns);
        }
        width = a.rows();
        out.layers.push(a.build()?);

        let mut b = IntegerLayerBuilder::new(width);
        for (w, ns) in wires.iter_mut().zip(&nodes) {
            w.clear();
            for node in ns {
                w.push(match *node {
                    Node::Xor(u, v) => {
                        out.gadget_neurons += 1;
                        b.push([(u, 1), (v, 1)], -1)?
                    }
                    Node::Pass(p) => out.pass(&mut b, p)?,
                });
            }
            if last && w.is_empty() {
                w.push(out.constant_zero(&mut b)?);
            }
        }
        width = b.rows();
        out.layers.push(b.build()?);
    }
    debug_assert!(wires.iter().enumerate().all(|(k, w)| w == &[k]));
    Ok(out)
}

impl XorSubnetwork {
    fn pass(&mut self, b: &mut IntegerLayerBuilder, j: usize) -> Result<usize> {
        self.padding_neurons += 1;
        self.padding_weights += 2;
        b.push([(j, 2)], -1)
    }

    fn constant_zero(&mut self, b: &mut IntegerLayerBuilder) -> Result<usize> {
        self.padding_neurons += 1;
        self.padding_weights += 1;
        b.push([], -1)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct XorBudget {
    pub neurons: usize,
    pub weights: usize,
}

/// 3(d1−1)m neurons and 9(d1−1)m weights-plus-biases, before padding.
pub fn xor_budget(d1: usize, m: usize) -> XorBudget {
    XorBudget {
        neurons: 3 * d1.saturating_sub(1) * m,
        weights: 9 * d1.saturating_sub(1) * m,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SeparationMode;
    use crate::netcore::{propagate_bits, SizeTotals};
    use rand::{Rng, SeedableRng};

    fn cfg() -> ConstructionConfig {
        ConstructionConfig::new(SeparationMode::distance(0.5).unwrap(), 3)
    }

    fn code(s: &str) -> BinaryCode {
        s.parse().unwrap()
    }

    fn plan(masks: &[&str]) -> CompressionPlan {
        CompressionPlan::new(masks.iter().map(|m| code(m)).collect()).unwrap()
    }

    #[test]
    fn width_formula() {
        assert_eq!(compression_width(16, 0.1), 22);
        assert_eq!(compression_width(1, 0.1), 10);
    }

    #[test]
    fn sixteen_codes_compress_distinctly() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut set = std::collections::BTreeSet::new();
        while set.len() < 16 {
            let bits: Vec<bool> = (0..20).map(|_| r.random()).collect();
            set.insert(BinaryCode::from_bools(&bits).unwrap());
        }
        let codes: Vec<_> = set.into_iter().collect();
        let c = plan_compression(&codes, &cfg()).unwrap();
        assert!(all_distinct(&c.compressed));
        assert!(c.compressed.iter().all(|z| z.len() == 22));
        for (z, z2) in codes.iter().zip(&c.compressed) {
            assert_eq!(&c.plan.apply(z).unwrap(), z2);
        }
    }

    #[test]
    fn duplicate_codes_are_a_precondition_error() {
        let codes = vec![code("0101"), code("0101")];
        assert!(matches!(plan_compression(&codes, &cfg()), Err(Error::Precondition(_))));
    }

    #[test]
    fn full_mask_parity() {
        let x = build_xor_subnetwork(&plan(&["1111"]), 4).unwrap();
        assert_eq!(propagate_bits(&x.layers, &[1, 1, 0, 1]).unwrap(), vec![1]);
        assert_eq!(x.levels, 2);
        assert_eq!(x.gadget_neurons, 9);
        assert_eq!(x.padding_neurons, 0);
    }

    #[test]
    fn uneven_trees_are_padded() {
        let p = plan(&["11111", "00100", "00000", "11000"]);
        let x = build_xor_subnetwork(&p, 5).unwrap();
        assert_eq!(x.levels, 3);
        assert_eq!(x.layers.len(), 6);
        // popcounts 5, 1, 0 and 2
        assert_eq!(x.gadget_neurons, 3 * (4 + 1));
        for v in 0u32..32 {
            let bits: Vec<u8> = (0..5).map(|i| (v >> i & 1) as u8).collect();
            let z = BinaryCode::from_bits(&bits).unwrap();
            assert_eq!(
                propagate_bits(&x.layers, &bits).unwrap(),
                p.apply(&z).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn shallow_masks_use_one_selection_layer() {
        let p = plan(&["010", "000", "001"]);
        let x = build_xor_subnetwork(&p, 3).unwrap();
        assert_eq!((x.levels, x.layers.len()), (0, 1));
        assert_eq!(propagate_bits(&x.layers, &[1, 1, 0]).unwrap(), vec![1, 0, 0]);
        assert_eq!(propagate_bits(&x.layers, &[0, 0, 1]).unwrap(), vec![0, 0, 1]);
    }

    #[test]
    fn sizes_within_budget() {
        let p = plan(&["1011011", "1111111", "0000001", "0101010"]);
        let x = build_xor_subnetwork(&p, 7).unwrap();
        let t = SizeTotals::of_layers(&x.layers);
        let budget = xor_budget(7, 4);
        assert_eq!(t.neurons, x.gadget_neurons + x.padding_neurons);
        assert!(t.neurons <= budget.neurons + x.padding_neurons);
        assert!(t.weights <= budget.weights + x.padding_weights);
    }

    #[test]
    fn plan_rejects_mixed_lengths() {
        assert!(CompressionPlan::new(vec![code("01"), code("011")]).is_err());
        assert!(CompressionPlan::new(vec![]).is_err());
        assert!(build_xor_subnetwork(&plan(&["01"]), 3).is_err());
    }
}
