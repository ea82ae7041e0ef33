//! Packed bit strings with MSB-first writers and readers.
//!
//! Two integer codes live here:
//!
//! - Elias gamma (`n ≥ 1`): `⌊log2 n⌋` zero bits followed by the binary
//!   expansion of `n`. Used for the self-delimiting headers of trace
//!   encodings.
//! - An order-preserving variant: `⌊log2 n⌋` one bits, a zero, then the binary
//!   expansion of `n`. Lexicographic order on codewords equals numeric order,
//!   which makes the canonical formula encoding sort like its integer fields.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

/// A growable string of bits stored MSB-first in bytes.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString {
    bytes: Vec<u8>,
    len: usize,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wraps `bytes` and keeps the first `len` bits. Bits past `len` are cleared.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Option<Self> {
        if len > bytes.len() * 8 {
            return None;
        }
        let mut bytes = bytes[..len.div_ceil(8)].to_vec();
        if !len.is_multiple_of(8) {
            let last = bytes.len() - 1;
            bytes[last] &= 0xffu8 << (8 - len % 8);
        }
        Some(Self { bytes, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Backing bytes, zero-padded to the next byte boundary.
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn get(&self, i: usize) -> Option<bool> {
        (i < self.len).then(|| self.bytes[i / 8] & (0x80 >> (i % 8)) != 0)
    }

    pub fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.len() - 1;
            self.bytes[last] |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u64, width: u32) {
        debug_assert!(
            width == 64 || value >> width == 0,
            "value does not fit width"
        );
        for i in (0..width).rev() {
            self.push((value >> i) & 1 == 1);
        }
    }

    pub fn push_gamma(&mut self, n: u64) {
        assert!(n >= 1, "gamma code is defined for n >= 1");
        let bits = 64 - n.leading_zeros();
        for _ in 1..bits {
            self.push(false);
        }
        self.push_bits(n, bits);
    }

    pub fn push_ordered(&mut self, n: u64) {
        assert!(n >= 1, "ordered code is defined for n >= 1");
        let bits = 64 - n.leading_zeros();
        for _ in 1..bits {
            self.push(true);
        }
        self.push(false);
        self.push_bits(n, bits);
    }

    pub fn extend(&mut self, other: &BitString) {
        for bit in other.iter() {
            self.push(bit);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.bytes[i / 8] & (0x80 >> (i % 8)) != 0)
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader { bits: self, pos: 0 }
    }
}

impl Ord for BitString {
    fn cmp(&self, other: &Self) -> Ordering {
        // Padding bits are zero, so whole-byte comparison agrees with bitwise
        // lexicographic order up to the shorter length.
        let common = self.len.min(other.len);
        let full = common / 8;
        match self.bytes[..full].cmp(&other.bytes[..full]) {
            Ordering::Equal => {}
            ord => return ord,
        }
        for i in full * 8..common {
            match self.get(i).cmp(&other.get(i)) {
                Ordering::Equal => {}
                ord => return ord,
            }
        }
        self.len.cmp(&other.len)
    }
}

impl PartialOrd for BitString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::with_capacity(self.len);
        for bit in self.iter() {
            s.push(if bit { '1' } else { '0' });
        }
        f.write_str(&s)
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

/// Sequential reader over a [`BitString`].
#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bits: &'a BitString,
    pos: usize,
}

impl BitReader<'_> {
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bits.len - self.pos
    }

    pub fn read_bit(&mut self) -> Option<bool> {
        let bit = self.bits.get(self.pos)?;
        self.pos += 1;
        Some(bit)
    }

    pub fn read_bits(&mut self, width: u32) -> Option<u64> {
        if self.remaining() < width as usize {
            return None;
        }
        let mut value = 0u64;
        for _ in 0..width {
            value = (value << 1) | u64::from(self.read_bit()?);
        }
        Some(value)
    }

    pub fn read_gamma(&mut self) -> Option<u64> {
        let mut zeros = 0u32;
        while !self.read_bit()? {
            zeros += 1;
            if zeros >= 64 {
                return None;
            }
        }
        let rest = self.read_bits(zeros)?;
        Some((1u64 << zeros) | rest)
    }

    pub fn read_ordered(&mut self) -> Option<u64> {
        let mut ones = 0u32;
        while self.read_bit()? {
            ones += 1;
            if ones >= 64 {
                return None;
            }
        }
        let value = self.read_bits(ones + 1)?;
        (value >> ones == 1).then_some(value)
    }
}

/// Length in bits of the Elias gamma codeword for `n ≥ 1`.
pub fn gamma_len(n: u64) -> usize {
    assert!(n >= 1, "gamma code is defined for n >= 1");
    2 * (63 - n.leading_zeros() as usize) + 1
}

/// Length in bits of the order-preserving codeword for `n ≥ 1`.
pub fn ordered_len(n: u64) -> usize {
    gamma_len(n) + 1
}

/// Fixed width needed to address one of `range` values; zero when `range ≤ 1`.
pub fn field_width(range: u64) -> u32 {
    if range <= 1 {
        0
    } else {
        64 - (range - 1).leading_zeros()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bits(s: &str) -> BitString {
        let mut b = BitString::new();
        for c in s.chars() {
            b.push(c == '1');
        }
        b
    }

    #[test]
    fn gamma_codewords() {
        let mut b = BitString::new();
        b.push_gamma(5);
        assert_eq!(b.to_string(), "00101");
        let mut b = BitString::new();
        b.push_gamma(1);
        b.push_gamma(2);
        assert_eq!(b.to_string(), "1010");
        assert_eq!(gamma_len(5), 5);
        assert_eq!(gamma_len(2), 3);
        assert_eq!(gamma_len(1), 1);
    }

    #[test]
    fn ordered_codewords_sort_numerically() {
        let codes: Vec<BitString> = (1..200u64)
            .map(|n| {
                let mut b = BitString::new();
                b.push_ordered(n);
                assert_eq!(b.len(), ordered_len(n));
                b
            })
            .collect();
        for w in codes.windows(2) {
            assert!(w[0] < w[1], "{} !< {}", w[0], w[1]);
        }
    }

    #[test]
    fn field_widths() {
        assert_eq!(field_width(0), 0);
        assert_eq!(field_width(1), 0);
        assert_eq!(field_width(2), 1);
        assert_eq!(field_width(4), 2);
        assert_eq!(field_width(5), 3);
        assert_eq!(field_width(16), 4);
        assert_eq!(field_width(17), 5);
    }

    #[test]
    fn prefix_sorts_first() {
        assert!(bits("01") < bits("010"));
        assert!(bits("0111") < bits("1"));
        assert_eq!(bits("101").cmp(&bits("101")), Ordering::Equal);
    }

    #[test]
    fn from_bytes_clears_padding() {
        let b = BitString::from_bytes(&[0xff, 0xff], 10).unwrap();
        assert_eq!(b.to_string(), "1111111111");
        assert_eq!(b.as_bytes(), &[0xff, 0xc0]);
        assert!(BitString::from_bytes(&[0], 9).is_none());
    }

    proptest! {
        #[test]
        fn codes_roundtrip(values in proptest::collection::vec(1u64..u64::MAX / 2, 0..20)) {
            let mut b = BitString::new();
            for &v in &values {
                b.push_gamma(v);
                b.push_ordered(v);
            }
            let mut r = b.reader();
            for &v in &values {
                prop_assert_eq!(r.read_gamma(), Some(v));
                prop_assert_eq!(r.read_ordered(), Some(v));
            }
            prop_assert_eq!(r.remaining(), 0);
        }

        #[test]
        fn ord_matches_string_order(a in "[01]{0,40}", b in "[01]{0,40}") {
            prop_assert_eq!(bits(&a).cmp(&bits(&b)), a.cmp(&b));
        }
    }
}
