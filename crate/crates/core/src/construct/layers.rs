//! The integer layers after compression: prefix selector, up-projection,
//! memorization and the final OR.

use super::{BinaryCode, PrefixPartition};
use crate::netcore::{IntegerLayerBuilder, ThresholdLayer};
use crate::{Error, Result};

/// K + d2 neurons: prefix indicators s_i, then copies of z.
pub fn build_selector_layer(part: &PrefixPartition, d2: usize) -> Result<ThresholdLayer> {
    let mut b = IntegerLayerBuilder::new(d2);
    for s in &part.subsets {
        if s.prefix.len() > d2 {
            return Err(Error::InvalidInput(format!(
                "prefix of length {} exceeds code length {d2}",
                s.prefix.len()
            )));
        }
        let weights = s
            .prefix
            .iter()
            .enumerate()
            .map(|(j, &bit)| (j, if bit { 1 } else { -1 }));
        b.push(weights, -(s.prefix_ones() as i64))?;
    }
    for j in 0..d2 {
        b.push([(j, 2)], -1)?;
    }
    b.build()
}

/// K chunks of d2 + 1 neurons over the input (s, z). Chunk i is
/// (σ(s_i − 1), σ(s_i + z_1 − 2), …, σ(s_i + z_{d2} − 2)).
pub fn build_expansion_layer(part: &PrefixPartition, d2: usize) -> Result<ThresholdLayer> {
    let k = part.k();
    let mut b = IntegerLayerBuilder::new(k + d2);
    for i in 0..k {
        b.push([(i, 1)], -1)?;
        for j in 0..d2 {
            b.push([(i, 1), (k + j, 1)], -2)?;
        }
    }
    b.build()
}

/// One neuron per position within a subset. For subset j, neuron i holds
/// (−t + y − 1, 2z − 1) on chunk j when the subset has an i-th member with
/// code z, label y and t = |z|, and a lone −1 on chunk j's indicator
/// otherwise. Biases are zero.
pub fn build_memorization_layer(
    part: &PrefixPartition,
    codes: &[BinaryCode],
    labels: &[bool],
) -> Result<ThresholdLayer> {
    if codes.len() != labels.len() || codes.len() != part.n {
        return Err(Error::InvalidInput(format!(
            "{} codes, {} labels, partition over {} samples",
            codes.len(),
            labels.len(),
            part.n
        )));
    }
    let d2 = part.code_len;
    let chunk = d2 + 1;
    let mut b = IntegerLayerBuilder::new(part.k() * chunk);
    let mut row = Vec::new();
    for i in 0..part.max_subset_size() {
        row.clear();
        for (j, s) in part.subsets.iter().enumerate() {
            let base = j * chunk;
            match s.members.get(i) {
                Some(&sample) => {
                    let z = &codes[sample];
                    if z.len() != d2 {
                        return Err(Error::DimensionMismatch {
                            expected: d2,
                            got: z.len(),
                        });
                    }
                    let t = z.count_ones() as i64;
                    row.push((base, -t + i64::from(labels[sample]) - 1));
                    row.extend((0..d2).map(|q| (base + 1 + q, if z.get(q) { 1 } else { -1 })));
                }
                None => row.push((base, -1)),
            }
        }
        b.push(row.iter().copied(), 0)?;
    }
    b.build()
}

/// σ(2q_1 + … + 2q_w − 1): OR of the inputs.
pub fn build_output_layer(width: usize) -> Result<ThresholdLayer> {
    if width == 0 {
        return Err(Error::InvalidInput("output layer needs at least one input".into()));
    }
    let mut b = IntegerLayerBuilder::new(width);
    b.push((0..width).map(|j| (j, 2)), -1)?;
    b.build()
}

/// Selector output for a sample: one-hot over subsets, then its code.
pub fn selector_code(part: &PrefixPartition, subset: usize, z: &BinaryCode) -> Vec<u8> {
    let mut v = vec![0u8; part.k()];
    v[subset] = 1;
    v.extend(z.to_bits());
    v
}

/// Expansion output for a sample: chunk `subset` is (1, z), the rest zero.
pub fn expansion_code(part: &PrefixPartition, subset: usize, z: &BinaryCode) -> Vec<u8> {
    let chunk = part.code_len + 1;
    let mut v = vec![0u8; part.k() * chunk];
    v[subset * chunk] = 1;
    for q in z.ones() {
        v[subset * chunk + 1 + q] = 1;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::super::partition::Subset;
    use super::*;
    use crate::netcore::propagate_bits;

    fn part(subsets: Vec<(Vec<bool>, Vec<usize>)>, code_len: usize) -> PrefixPartition {
        let n = subsets.iter().map(|s| s.1.len()).sum();
        PrefixPartition {
            subsets: subsets
                .into_iter()
                .map(|(prefix, members)| Subset { prefix, members })
                .collect(),
            n,
            code_len,
            cap: super::super::partition::ceil_sqrt(n),
        }
    }

    fn code(s: &str) -> BinaryCode {
        s.parse().unwrap()
    }

    #[test]
    fn selector_indicator_examples() {
        let p = part(vec![(vec![true, false], vec![0])], 4);
        let l = build_selector_layer(&p, 4).unwrap();
        assert_eq!(l.fire_bits(&[1, 0, 1, 1]), vec![1, 1, 0, 1, 1]);
        assert_eq!(l.fire_bits(&[1, 1, 0, 0]), vec![0, 1, 1, 0, 0]);
    }

    #[test]
    fn empty_prefix_always_fires() {
        let p = part(vec![(vec![], vec![0])], 3);
        let l = build_selector_layer(&p, 3).unwrap();
        assert_eq!(l.fire_bits(&[0, 0, 0])[0], 1);
        assert_eq!(l.fire_bits(&[1, 1, 1])[0], 1);
    }

    #[test]
    fn expansion_places_code_in_its_chunk() {
        let p = part(vec![(vec![false], vec![0]), (vec![true], vec![1])], 2);
        let l = build_expansion_layer(&p, 2).unwrap();
        assert_eq!(l.rows(), 6);
        assert_eq!(l.fire_bits(&[1, 0, 1, 0]), vec![1, 1, 0, 0, 0, 0]);
        assert_eq!(l.fire_bits(&[0, 0, 1, 1]), vec![0; 6]);
    }

    #[test]
    fn memorization_single_code() {
        let p = part(vec![(vec![], vec![0, 1])], 2);
        let codes = vec![code("11"), code("10")];
        let l = build_memorization_layer(&p, &codes, &[true, false]).unwrap();
        // neuron 0 is tuned to z = 11, y = 1; chunk = (−2, 1, 1)
        assert_eq!(l.fire_bits(&[1, 1, 1])[0], 1);
        assert_eq!(l.fire_bits(&[1, 1, 0])[0], 0);
        // neuron 1 is tuned to z = 10 with y = 0, so it is silent on both
        assert_eq!(l.fire_bits(&[1, 1, 0])[1], 0);
        assert_eq!(l.fire_bits(&[1, 1, 1])[1], 0);
    }

    #[test]
    fn sentinel_blocks_short_subsets() {
        let p = part(vec![(vec![false], vec![0, 1]), (vec![true], vec![2])], 2);
        let codes = vec![code("00"), code("01"), code("10")];
        let labels = [true, true, true];
        let l = build_memorization_layer(&p, &codes, &labels).unwrap();
        // neuron 1 on sample 2 (only member of subset 1) must stay silent
        let x = expansion_code(&p, 1, &codes[2]);
        assert_eq!(l.fire_bits(&x), vec![1, 0]);
        let x = expansion_code(&p, 0, &codes[1]);
        assert_eq!(l.fire_bits(&x), vec![0, 1]);
    }

    #[test]
    fn output_is_or() {
        let l = build_output_layer(3).unwrap();
        assert_eq!(l.fire_bits(&[0, 0, 0]), vec![0]);
        assert_eq!(l.fire_bits(&[0, 1, 0]), vec![1]);
        assert_eq!(l.fire_bits(&[1, 1, 1]), vec![1]);
        assert!(build_output_layer(0).is_err());
    }

    #[test]
    fn stage_codes_chain() {
        let p = part(vec![(vec![false], vec![0, 1]), (vec![true], vec![2])], 2);
        let codes = [code("00"), code("01"), code("10")];
        let layers = vec![
            build_selector_layer(&p, 2).unwrap(),
            build_expansion_layer(&p, 2).unwrap(),
        ];
        for (s, z) in [(0, &codes[0]), (0, &codes[1]), (1, &codes[2])] {
            assert_eq!(layers[0].fire_bits(&z.to_bits()), selector_code(&p, s, z));
            assert_eq!(propagate_bits(&layers, &z.to_bits()).unwrap(), expansion_code(&p, s, z));
        }
    }

    #[test]
    fn misaligned_labels_rejected() {
        let p = part(vec![(vec![], vec![0])], 2);
        assert!(build_memorization_layer(&p, &[code("01")], &[]).is_err());
    }
}
