//! Attribute-position metadata: bitsets and the mapping functions that lift
//! record-level lineage to attribute-value granularity.
//!
//! A bitset annotates one operation (or one input side of a join/append) and
//! positions are mapped through it with prefix popcount (rank) and select.
//! Operations that preserve attribute positions carry no annotation and use
//! the identity mapping.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

/// What a bitset describes. Determines which mapping applies per direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitsetSemantics {
    /// Length = input attribute count; bit set iff the attribute is kept.
    VerticalReduction,
    /// Combined encoding over the output attribute count: source bits in the
    /// first `input_attrs` positions, then one set bit per new attribute.
    VerticalAugmentation { input_attrs: usize },
    /// Length = output attribute count; bit set iff the output attribute
    /// originates from this input side of a join.
    JoinSide,
    /// As `JoinSide`, for one side of an append.
    AppendSide,
}

/// Positional bit string over attribute positions (position 0 first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttrBitset {
    words: Vec<u64>,
    len: usize,
    semantics: BitsetSemantics,
}

impl AttrBitset {
    pub fn new(bits: impl IntoIterator<Item = bool>, semantics: BitsetSemantics) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for b in bits {
            if len % 64 == 0 {
                words.push(0u64);
            }
            if b {
                *words.last_mut().unwrap() |= 1u64 << (len % 64);
            }
            len += 1;
        }
        AttrBitset {
            words,
            len,
            semantics,
        }
    }

    /// Parse a 0/1 string such as `"10011"`; leftmost character is position 0.
    pub fn parse(s: &str, semantics: BitsetSemantics) -> Result<Self> {
        let mut bits = Vec::with_capacity(s.len());
        for ch in s.chars() {
            match ch {
                '0' => bits.push(false),
                '1' => bits.push(true),
                _ => {
                    return Err(Error::InvalidParams(format!(
                        "bitset may contain only 0 and 1, found {ch:?}"
                    )))
                }
            }
        }
        Ok(AttrBitset::new(bits, semantics))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn semantics(&self) -> BitsetSemantics {
        self.semantics
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Number of set bits in positions `0..=i`.
    pub fn rank1_inclusive(&self, i: usize) -> usize {
        debug_assert!(i < self.len);
        let word = i / 64;
        let mut count = 0usize;
        for w in &self.words[..word] {
            count += w.count_ones() as usize;
        }
        let keep = 64 - (i % 64) - 1;
        count + (self.words[word] << keep).count_ones() as usize
    }

    /// Position of the (k+1)-th set bit (k is 0-based).
    pub fn select1(&self, k: usize) -> Option<usize> {
        let mut remaining = k;
        for (wi, w) in self.words.iter().enumerate() {
            let ones = w.count_ones() as usize;
            if remaining < ones {
                let mut w = *w;
                for _ in 0..remaining {
                    w &= w - 1; // clear lowest set bit
                }
                return Some(wi * 64 + w.trailing_zeros() as usize);
            }
            remaining -= ones;
        }
        None
    }

    /// Render as a 0/1 string, position 0 first.
    pub fn to_bit_string(&self) -> String {
        (0..self.len).map(|i| if self.get(i) { '1' } else { '0' }).collect()
    }
}

impl fmt::Display for AttrBitset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bit_string())
    }
}

fn check_pos(pos: usize, len: usize) -> Result<()> {
    if pos < len {
        Ok(())
    } else {
        Err(Error::AttrOutOfRange { pos, len })
    }
}

/// Forward mapping through a vertical reduction: input position to output
/// position, or `None` when the attribute was dropped.
pub fn map_f_vr(b: &AttrBitset, i: usize) -> Result<Option<usize>> {
    check_pos(i, b.len())?;
    if !b.get(i) {
        return Ok(None);
    }
    Ok(Some(b.rank1_inclusive(i) - 1))
}

/// Backward mapping through a vertical reduction: output position to the
/// unique kept input position.
pub fn map_b_vr(b: &AttrBitset, i: usize) -> Result<usize> {
    b.select1(i).ok_or(Error::AttrOutOfRange {
        pos: i,
        len: b.count_ones(),
    })
}

/// Backward mapping through a vertical augmentation. Positions below the
/// input attribute count map to themselves; new attributes map to the set of
/// source attributes flagged in the bitset.
pub fn map_b_va(b: &AttrBitset, input_attrs: usize, i: usize) -> Result<BTreeSet<usize>> {
    check_pos(i, b.len())?;
    if i < input_attrs {
        return Ok(BTreeSet::from([i]));
    }
    Ok((0..input_attrs).filter(|&j| b.get(j)).collect())
}

/// Forward mapping of one join input side: input position to the position of
/// the corresponding set bit in the output bitset.
pub fn map_f_join(b: &AttrBitset, i: usize) -> Result<usize> {
    b.select1(i).ok_or(Error::AttrOutOfRange {
        pos: i,
        len: b.count_ones(),
    })
}

/// Backward mapping of one join input side: output position to input
/// position, or `None` when the attribute does not originate from this side.
pub fn map_b_join(b: &AttrBitset, i: usize) -> Result<Option<usize>> {
    check_pos(i, b.len())?;
    if !b.get(i) {
        return Ok(None);
    }
    Ok(Some(b.rank1_inclusive(i) - 1))
}

/// Identity mapping for operations that preserve attribute positions.
pub fn identity_attr_map(i: usize) -> usize {
    i
}

/// Attribute annotation attached to an operation (one per input side for
/// join/append). The bitset form assumes attribute order is preserved; the
/// kept-order form is the fallback for order-altering stitches, listing for
/// each output position the source input position on this side, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttrAnnot {
    Bitset(AttrBitset),
    KeptOrder {
        semantics: BitsetSemantics,
        map: Vec<Option<usize>>,
    },
}

impl AttrAnnot {
    pub fn semantics(&self) -> BitsetSemantics {
        match self {
            AttrAnnot::Bitset(b) => b.semantics(),
            AttrAnnot::KeptOrder { semantics, .. } => *semantics,
        }
    }

    /// Map an input-side position to output positions.
    pub fn forward(&self, i: usize) -> Result<BTreeSet<usize>> {
        match self {
            AttrAnnot::Bitset(b) => match b.semantics() {
                BitsetSemantics::VerticalReduction => {
                    Ok(map_f_vr(b, i)?.into_iter().collect())
                }
                BitsetSemantics::VerticalAugmentation { input_attrs } => {
                    check_pos(i, input_attrs)?;
                    Ok(BTreeSet::from([identity_attr_map(i)]))
                }
                BitsetSemantics::JoinSide | BitsetSemantics::AppendSide => {
                    Ok(BTreeSet::from([map_f_join(b, i)?]))
                }
            },
            AttrAnnot::KeptOrder { map, .. } => Ok(map
                .iter()
                .enumerate()
                .filter(|(_, src)| **src == Some(i))
                .map(|(out, _)| out)
                .collect()),
        }
    }

    /// Map an output position backward to input-side positions.
    pub fn backward(&self, i: usize) -> Result<BTreeSet<usize>> {
        match self {
            AttrAnnot::Bitset(b) => match b.semantics() {
                BitsetSemantics::VerticalReduction => Ok(BTreeSet::from([map_b_vr(b, i)?])),
                BitsetSemantics::VerticalAugmentation { input_attrs } => {
                    map_b_va(b, input_attrs, i)
                }
                BitsetSemantics::JoinSide | BitsetSemantics::AppendSide => {
                    Ok(map_b_join(b, i)?.into_iter().collect())
                }
            },
            AttrAnnot::KeptOrder { map, .. } => {
                check_pos(i, map.len())?;
                Ok(map[i].into_iter().collect())
            }
        }
    }

    /// Render for debug output and spec files: bit string or position list.
    pub fn render(&self) -> String {
        match self {
            AttrAnnot::Bitset(b) => b.to_bit_string(),
            AttrAnnot::KeptOrder { map, .. } => {
                let parts: Vec<String> = map
                    .iter()
                    .map(|m| match m {
                        Some(p) => p.to_string(),
                        None => "-".to_string(),
                    })
                    .collect();
                format!("[{}]", parts.join(","))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vr(s: &str) -> AttrBitset {
        AttrBitset::parse(s, BitsetSemantics::VerticalReduction).unwrap()
    }

    fn js(s: &str) -> AttrBitset {
        AttrBitset::parse(s, BitsetSemantics::JoinSide).unwrap()
    }

    #[test]
    fn forward_vertical_reduction() {
        let b = vr("10011");
        assert_eq!(map_f_vr(&b, 0).unwrap(), Some(0));
        assert_eq!(map_f_vr(&b, 1).unwrap(), None);
        assert_eq!(map_f_vr(&b, 2).unwrap(), None);
        assert_eq!(map_f_vr(&b, 4).unwrap(), Some(2));
        assert!(map_f_vr(&b, 5).is_err());
    }

    #[test]
    fn backward_vertical_reduction() {
        let b = vr("10011");
        assert_eq!(map_b_vr(&b, 0).unwrap(), 0);
        assert_eq!(map_b_vr(&b, 1).unwrap(), 3);
        assert_eq!(map_b_vr(&b, 2).unwrap(), 4);
        assert!(map_b_vr(&b, 3).is_err());
    }

    #[test]
    fn backward_vertical_augmentation() {
        let b = AttrBitset::parse(
            "101011",
            BitsetSemantics::VerticalAugmentation { input_attrs: 4 },
        )
        .unwrap();
        assert_eq!(map_b_va(&b, 4, 4).unwrap(), BTreeSet::from([0, 2]));
        assert_eq!(map_b_va(&b, 4, 5).unwrap(), BTreeSet::from([0, 2]));
        assert_eq!(map_b_va(&b, 4, 2).unwrap(), BTreeSet::from([2]));
        // Degenerate annotation: no source bits below the input count.
        let b = AttrBitset::parse(
            "000011",
            BitsetSemantics::VerticalAugmentation { input_attrs: 4 },
        )
        .unwrap();
        assert_eq!(map_b_va(&b, 4, 5).unwrap(), BTreeSet::new());
    }

    #[test]
    fn forward_join_mapping() {
        assert_eq!(map_f_join(&js("10101"), 1).unwrap(), 2);
        assert_eq!(map_f_join(&js("11010"), 0).unwrap(), 0);
        assert!(map_f_join(&js("10101"), 3).is_err());
    }

    #[test]
    fn backward_join_mapping() {
        assert_eq!(map_b_join(&js("11010"), 1).unwrap(), Some(1));
        assert_eq!(map_b_join(&js("11010"), 2).unwrap(), None);
        assert_eq!(map_b_join(&js("10101"), 0).unwrap(), Some(0));
    }

    #[test]
    fn bit_string_round_trips() {
        let b = vr("1001101");
        assert_eq!(b.to_bit_string(), "1001101");
        assert_eq!(b.count_ones(), 4);
    }

    #[test]
    fn kept_order_fallback_maps_both_ways() {
        // Three kept attributes, order altered: output = input 3, 1, 4.
        let a = AttrAnnot::KeptOrder {
            semantics: BitsetSemantics::VerticalReduction,
            map: vec![Some(3), Some(1), Some(4)],
        };
        assert_eq!(a.forward(3).unwrap(), BTreeSet::from([0]));
        assert_eq!(a.forward(0).unwrap(), BTreeSet::new());
        assert_eq!(a.backward(1).unwrap(), BTreeSet::from([1]));
        assert_eq!(a.backward(2).unwrap(), BTreeSet::from([4]));
        assert!(a.backward(3).is_err());
    }

    #[test]
    fn identity_map_is_identity() {
        assert_eq!(identity_attr_map(0), 0);
        assert_eq!(identity_attr_map(7), 7);
    }

    proptest! {
        // Round trip on kept positions, vertical reduction and join mappings.
        #[test]
        fn roundtrip_on_kept_positions(bits in prop::collection::vec(any::<bool>(), 1..=64)) {
            let b = AttrBitset::new(bits.clone(), BitsetSemantics::VerticalReduction);
            for (i, &set) in bits.iter().enumerate() {
                if set {
                    let out = map_f_vr(&b, i).unwrap().unwrap();
                    prop_assert_eq!(map_b_vr(&b, out).unwrap(), i);
                }
            }
            let j = AttrBitset::new(bits.clone(), BitsetSemantics::JoinSide);
            for (i, &set) in bits.iter().enumerate() {
                if set {
                    let input = map_b_join(&j, i).unwrap().unwrap();
                    prop_assert_eq!(map_f_join(&j, input).unwrap(), i);
                }
            }
        }

        // Order preservation: forward mapping restricted to set bits is
        // strictly increasing.
        #[test]
        fn forward_vr_monotone(bits in prop::collection::vec(any::<bool>(), 1..=64)) {
            let b = AttrBitset::new(bits.clone(), BitsetSemantics::VerticalReduction);
            let mut last: Option<usize> = None;
            for (i, &set) in bits.iter().enumerate() {
                if set {
                    let out = map_f_vr(&b, i).unwrap().unwrap();
                    if let Some(prev) = last {
                        prop_assert!(out > prev);
                    }
                    last = Some(out);
                }
            }
        }

        #[test]
        fn rank_select_inverse(bits in prop::collection::vec(any::<bool>(), 1..=200)) {
            let b = AttrBitset::new(bits, BitsetSemantics::VerticalReduction);
            for k in 0..b.count_ones() {
                let pos = b.select1(k).unwrap();
                prop_assert!(b.get(pos));
                prop_assert_eq!(b.rank1_inclusive(pos), k + 1);
            }
            prop_assert!(b.select1(b.count_ones()).is_none());
        }
    }
}
