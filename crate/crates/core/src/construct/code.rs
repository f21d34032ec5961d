use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Fixed-length bit vector packed into `u64` words, bit `i` of the code in
/// word `i / 64`. Unused high bits of the last word stay zero, so derived
/// equality and hashing compare codes bit for bit.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinaryCode {
    words: Vec<u64>,
    len: usize,
}

impl BinaryCode {
    pub(crate) fn zeroed(len: usize) -> Self {
        debug_assert!(len > 0);
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn zeros(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidInput("binary codes must have positive length".into()));
        }
        Ok(Self::zeroed(len))
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let mut code = Self::zeros(bits.len())?;
        for (i, &b) in bits.iter().enumerate() {
            match b {
                0 => {}
                1 => code.set(i, true),
                _ => return Err(Error::InvalidInput(format!("bit {i} is {b}, not 0 or 1"))),
            }
        }
        Ok(code)
    }

    pub fn from_bools(bits: &[bool]) -> Result<Self> {
        let mut code = Self::zeros(bits.len())?;
        for (i, &b) in bits.iter().enumerate() {
            code.set(i, b);
        }
        Ok(code)
    }

    /// Fills the code from a word source; bits past `len` are cleared.
    pub(crate) fn from_words(len: usize, mut next: impl FnMut() -> u64) -> Self {
        let mut code = Self::zeroed(len);
        for w in &mut code.words {
            *w = next();
        }
        code.clear_tail();
        code
    }

    fn clear_tail(&mut self) {
        let r = self.len % 64;
        if r != 0 {
            *self.words.last_mut().expect("nonempty") &= (1u64 << r) - 1;
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    /// Always false; codes have positive length.
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        let m = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= m;
        } else {
            self.words[i / 64] &= !m;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| self.get(i))
    }

    pub fn to_bits(&self) -> Vec<u8> {
        (0..self.len).map(|i| u8::from(self.get(i))).collect()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

impl fmt::Debug for BinaryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryCode({self})")
    }
}

impl fmt::Display for BinaryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BinaryCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::InvalidInput(format!("'{c}' is not a bit"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::from_bits(&bits)
    }
}

/// ⟨z, mask⟩ over GF(2): parity of the bitwise AND.
pub fn gf2_inner_product(z: &BinaryCode, mask: &BinaryCode) -> Result<bool> {
    if z.len != mask.len {
        return Err(Error::DimensionMismatch {
            expected: mask.len,
            got: z.len,
        });
    }
    Ok(parity_and(z, mask))
}

#[inline]
pub(crate) fn parity_and(z: &BinaryCode, mask: &BinaryCode) -> bool {
    let ones: u32 = z.words.iter().zip(&mask.words).map(|(a, b)| (a & b).count_ones()).sum();
    ones & 1 == 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn code(s: &str) -> BinaryCode {
        s.parse().unwrap()
    }

    #[test]
    fn inner_product_examples() {
        assert!(!gf2_inner_product(&code("101"), &code("111")).unwrap());
        assert!(!gf2_inner_product(&code("1101"), &code("0111")).unwrap());
        assert!(!gf2_inner_product(&code("1101"), &code("0101")).unwrap());
        assert!(gf2_inner_product(&code("1100"), &code("0100")).unwrap());
    }

    #[test]
    fn zero_code_annihilates() {
        let z = BinaryCode::zeros(130).unwrap();
        let m = BinaryCode::from_words(130, || u64::MAX);
        assert_eq!(m.count_ones(), 130);
        assert!(!gf2_inner_product(&z, &m).unwrap());
    }

    #[test]
    fn length_mismatch_is_error() {
        assert!(gf2_inner_product(&code("10"), &code("101")).is_err());
    }

    #[test]
    fn empty_and_bad_bits_rejected() {
        assert!(BinaryCode::zeros(0).is_err());
        assert!(BinaryCode::from_bits(&[0, 2]).is_err());
        assert!("01x".parse::<BinaryCode>().is_err());
    }

    #[test]
    fn display_round_trip() {
        let c = code("0010110");
        assert_eq!(c.to_string(), "0010110");
        assert_eq!(c.to_bits(), vec![0, 0, 1, 0, 1, 1, 0]);
        assert_eq!(c.ones().collect::<Vec<_>>(), vec![2, 4, 5]);
    }

    proptest! {
        #[test]
        fn packed_parity_matches_bitwise_fold(
            pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..300)
        ) {
            let (a, b): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
            let expected = a.iter().zip(&b).fold(false, |acc, (x, y)| acc ^ (*x && *y));
            let got = gf2_inner_product(
                &BinaryCode::from_bools(&a).unwrap(),
                &BinaryCode::from_bools(&b).unwrap(),
            ).unwrap();
            prop_assert_eq!(got, expected);
        }

        /// Linearity in the mask: ⟨z, a⊕b⟩ = ⟨z, a⟩ ⊕ ⟨z, b⟩.
        #[test]
        fn inner_product_is_linear(
            bits in proptest::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 1..200)
        ) {
            let z: Vec<bool> = bits.iter().map(|t| t.0).collect();
            let a: Vec<bool> = bits.iter().map(|t| t.1).collect();
            let b: Vec<bool> = bits.iter().map(|t| t.2).collect();
            let ab: Vec<bool> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
            let c = |v: &[bool]| BinaryCode::from_bools(v).unwrap();
            prop_assert_eq!(
                gf2_inner_product(&c(&z), &c(&ab)).unwrap(),
                gf2_inner_product(&c(&z), &c(&a)).unwrap() ^ gf2_inner_product(&c(&z), &c(&b)).unwrap()
            );
        }
    }
}
