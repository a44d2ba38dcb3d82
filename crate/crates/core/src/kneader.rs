//! Weight kneading.
//!
//! A lane's weights are cut into windows of `ks` consecutive weights. Inside a
//! window the essential bits of each magnitude column are compacted upward
//! into as few words as possible: word `k` of column `b` holds the `k`-th
//! weight (in lane order) whose bit `b` is set. Each occupied slot records a
//! pointer back to the source weight and that weight's sign, so the window's
//! word count is the largest column popcount rather than the window length.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::Bitwidth;

/// Widest magnitude field handled by the datapath (16-bit weights).
pub const MAX_COLUMNS: usize = 15;

/// Largest supported kneading stride; pointers are stored as `u16`.
pub const MAX_STRIDE: usize = 1 << 16;

pub const DEFAULT_STRIDE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Pos,
    #[serde(rename = "-")]
    Neg,
}

impl Sign {
    pub fn of(v: i32) -> Sign {
        if v < 0 {
            Sign::Neg
        } else {
            Sign::Pos
        }
    }

    pub fn apply(self, v: i64) -> i64 {
        match self {
            Sign::Pos => v,
            Sign::Neg => -v,
        }
    }
}

/// One essential bit after kneading: which weight of the window it came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KneadedEntry {
    pub pointer: u16,
    pub sign: Sign,
}

impl KneadedEntry {
    pub fn new(pointer: usize, sign: Sign) -> Self {
        debug_assert!(pointer < MAX_STRIDE);
        KneadedEntry { pointer: pointer as u16, sign }
    }

    pub fn pointer(&self) -> usize {
        self.pointer as usize
    }
}

/// A kneaded weight: at most one entry per magnitude column.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct KneadedWord {
    width: u8,
    entries: [Option<KneadedEntry>; MAX_COLUMNS],
}

impl KneadedWord {
    pub fn empty(width: usize) -> Self {
        assert!(width <= MAX_COLUMNS, "word width {width} exceeds {MAX_COLUMNS}");
        KneadedWord { width: width as u8, entries: [None; MAX_COLUMNS] }
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn get(&self, column: usize) -> Option<KneadedEntry> {
        self.entries[..self.width()][column]
    }

    pub fn set(&mut self, column: usize, entry: Option<KneadedEntry>) {
        let w = self.width();
        self.entries[..w][column] = entry;
    }

    /// Occupied columns in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, KneadedEntry)> + '_ {
        self.entries[..self.width()].iter().enumerate().filter_map(|(b, e)| e.map(|e| (b, e)))
    }

    pub fn entry_count(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.entry_count() == 0
    }
}

impl fmt::Debug for KneadedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (b, e) in self.iter() {
            let s = if e.sign == Sign::Neg { "-" } else { "+" };
            m.entry(&format_args!("b{b}"), &format_args!("{s}p{}", e.pointer));
        }
        m.finish()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KneadedGroup {
    /// Lane-local index of the window's first weight.
    pub start: usize,
    /// Source weights covered by the window; `ks` except possibly the last.
    pub window_size: usize,
    pub words: Vec<KneadedWord>,
}

impl KneadedGroup {
    pub fn entry_count(&self) -> usize {
        self.words.iter().map(KneadedWord::entry_count).sum()
    }
}

/// Cycles the SAC unit spends on a group: one per kneaded word.
pub fn group_cycle_count(g: &KneadedGroup) -> usize {
    g.words.len()
}

/// All groups of one lane, terminated by the pass marker.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KneadedLane {
    pub bitwidth: Bitwidth,
    pub ks: usize,
    /// Number of source weights.
    pub len: usize,
    pub groups: Vec<KneadedGroup>,
}

impl KneadedLane {
    pub fn total_words(&self) -> usize {
        self.groups.iter().map(group_cycle_count).sum()
    }

    pub fn total_entries(&self) -> usize {
        self.groups.iter().map(KneadedGroup::entry_count).sum()
    }

    pub fn columns(&self) -> usize {
        self.bitwidth.magnitude_bits()
    }

    /// `(word, window)` pairs in issue order.
    pub fn words(&self) -> impl Iterator<Item = (&KneadedWord, &KneadedGroup)> + '_ {
        self.groups.iter().flat_map(|g| g.words.iter().map(move |w| (w, g)))
    }

    /// Serialisable view for debugging dumps.
    pub fn dump(&self) -> LaneDump {
        LaneDump {
            bitwidth: self.bitwidth.bits(),
            ks: self.ks,
            len: self.len,
            pointer_bits: pointer_bits(self.ks),
            total_words: self.total_words(),
            groups: self
                .groups
                .iter()
                .map(|g| GroupDump {
                    start: g.start,
                    window_size: g.window_size,
                    words: g
                        .words
                        .iter()
                        .map(|w| {
                            w.iter()
                                .map(|(column, e)| EntryDump { column, pointer: e.pointer(), sign: e.sign })
                                .collect()
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct LaneDump {
    pub bitwidth: u32,
    pub ks: usize,
    pub len: usize,
    pub pointer_bits: u32,
    pub total_words: usize,
    pub groups: Vec<GroupDump>,
}

#[derive(Debug, Serialize)]
pub struct GroupDump {
    pub start: usize,
    pub window_size: usize,
    pub words: Vec<Vec<EntryDump>>,
}

#[derive(Debug, Serialize)]
pub struct EntryDump {
    pub column: usize,
    pub pointer: usize,
    pub sign: Sign,
}

/// Bits needed for a window pointer, `ceil(log2 ks)`.
pub fn pointer_bits(ks: usize) -> u32 {
    if ks <= 1 {
        0
    } else {
        usize::BITS - (ks - 1).leading_zeros()
    }
}

pub fn check_stride(ks: usize) -> Result<()> {
    if (1..=MAX_STRIDE).contains(&ks) {
        Ok(())
    } else {
        Err(Error::InvalidStride(ks))
    }
}

/// Kneads one lane of weights with stride `ks`.
pub fn knead_lane(weights: &[i32], bitwidth: Bitwidth, ks: usize) -> Result<KneadedLane> {
    check_stride(ks)?;
    let max = bitwidth.max_value();
    if let Some((index, &v)) = weights.iter().enumerate().find(|(_, v)| v.abs() > max) {
        return Err(Error::OutOfRange { index, value: v as i64, max: max as i64 });
    }
    let m = bitwidth.magnitude_bits();
    let groups = weights
        .chunks(ks)
        .enumerate()
        .map(|(i, window)| knead_window(window, i * ks, m))
        .collect();
    Ok(KneadedLane { bitwidth, ks, len: weights.len(), groups })
}

fn knead_window(window: &[i32], start: usize, m: usize) -> KneadedGroup {
    let mut fill = [0usize; MAX_COLUMNS];
    let mut words: Vec<KneadedWord> = Vec::new();
    for (p, &w) in window.iter().enumerate() {
        let entry = KneadedEntry::new(p, Sign::of(w));
        let mut mag = w.unsigned_abs();
        while mag != 0 {
            let b = mag.trailing_zeros() as usize;
            let k = fill[b];
            if k == words.len() {
                words.push(KneadedWord::empty(m));
            }
            words[k].set(b, Some(entry));
            fill[b] += 1;
            mag &= mag - 1;
        }
    }
    KneadedGroup { start, window_size: window.len(), words }
}

/// Recovers the signed source weights from a kneaded lane.
pub fn decode_lane(lane: &KneadedLane) -> std::result::Result<Vec<i32>, Violation> {
    let mut mags = vec![0u32; lane.len];
    let mut signs: Vec<Option<Sign>> = vec![None; lane.len];
    for (gi, g) in lane.groups.iter().enumerate() {
        for w in &g.words {
            for (b, e) in w.iter() {
                let p = e.pointer();
                let idx = g.start + p;
                if p >= g.window_size || idx >= lane.len {
                    return Err(Violation::new(gi, Some(b), ViolationKind::PointerOutOfWindow));
                }
                if mags[idx] & (1 << b) != 0 {
                    return Err(Violation::new(gi, Some(b), ViolationKind::Conservation));
                }
                mags[idx] |= 1 << b;
                match signs[idx] {
                    Some(s) if s != e.sign => {
                        return Err(Violation::new(gi, Some(b), ViolationKind::SignMismatch))
                    }
                    _ => signs[idx] = Some(e.sign),
                }
            }
        }
    }
    Ok(mags
        .iter()
        .zip(&signs)
        .map(|(&m, s)| if *s == Some(Sign::Neg) { -(m as i32) } else { m as i32 })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    /// Group windows do not tile the lane with the declared stride.
    Tiling,
    /// A word's width differs from the lane's magnitude width.
    Width,
    PointerOutOfWindow,
    /// A column's entries are not the set of source weights with that bit.
    Conservation,
    /// Right entries, wrong order.
    Stability,
    /// A column's entries do not occupy a prefix of the words.
    NotCompacted,
    SignMismatch,
    /// Word count differs from the largest column popcount.
    WordCount,
    Reconstruction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Violation {
    pub group: usize,
    pub column: Option<usize>,
    pub kind: ViolationKind,
}

impl Violation {
    fn new(group: usize, column: Option<usize>, kind: ViolationKind) -> Self {
        Violation { group, column, kind }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} violation in group {}", self.kind, self.group)?;
        if let Some(c) = self.column {
            write!(f, ", column {c}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Violation {}

/// Checks `lane` against the weights it was kneaded from: tiling, per-column
/// conservation and order, compaction, signs, word count, and full decode.
/// Reports the first violation found.
pub fn validate_kneading(weights: &[i32], lane: &KneadedLane) -> std::result::Result<(), Violation> {
    let m = lane.columns();
    if lane.len != weights.len() || lane.ks == 0 {
        return Err(Violation::new(0, None, ViolationKind::Tiling));
    }
    let expected_groups = weights.len().div_ceil(lane.ks);
    if lane.groups.len() != expected_groups {
        return Err(Violation::new(lane.groups.len().min(expected_groups), None, ViolationKind::Tiling));
    }

    for (gi, g) in lane.groups.iter().enumerate() {
        let start = gi * lane.ks;
        let size = lane.ks.min(weights.len() - start);
        if g.start != start || g.window_size != size {
            return Err(Violation::new(gi, None, ViolationKind::Tiling));
        }
        if g.words.iter().any(|w| w.width() != m) {
            return Err(Violation::new(gi, None, ViolationKind::Width));
        }
        let window = &weights[start..start + size];

        let mut max_pop = 0;
        for b in 0..m {
            let expected: Vec<usize> = (0..size).filter(|&p| window[p].unsigned_abs() & (1 << b) != 0).collect();
            max_pop = max_pop.max(expected.len());
            let mut found = Vec::with_capacity(expected.len());
            for w in &g.words {
                if let Some(e) = w.get(b) {
                    if e.pointer() >= size {
                        return Err(Violation::new(gi, Some(b), ViolationKind::PointerOutOfWindow));
                    }
                    if e.sign != Sign::of(window[e.pointer()]) {
                        return Err(Violation::new(gi, Some(b), ViolationKind::SignMismatch));
                    }
                    found.push(e.pointer());
                }
            }
            if found != expected {
                let mut sorted = found.clone();
                sorted.sort_unstable();
                let kind = if sorted == expected { ViolationKind::Stability } else { ViolationKind::Conservation };
                return Err(Violation::new(gi, Some(b), kind));
            }
        }
        for b in 0..m {
            let occupied: Vec<bool> = g.words.iter().map(|w| w.get(b).is_some()).collect();
            if occupied.windows(2).any(|pair| !pair[0] && pair[1]) {
                return Err(Violation::new(gi, Some(b), ViolationKind::NotCompacted));
            }
        }
        if g.words.len() != max_pop {
            return Err(Violation::new(gi, None, ViolationKind::WordCount));
        }
    }

    let decoded = decode_lane(lane)?;
    if let Some(i) = decoded.iter().zip(weights).position(|(d, w)| d != w) {
        return Err(Violation::new(i / lane.ks, None, ViolationKind::Reconstruction));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(p: usize) -> Option<KneadedEntry> {
        Some(KneadedEntry::new(p, Sign::Pos))
    }

    #[test]
    fn hand_kneaded_example() {
        let lane = knead_lane(&[0b1010, 0b0110, 0b0001], Bitwidth::B8, 3).unwrap();
        assert_eq!(lane.groups.len(), 1);
        let g = &lane.groups[0];
        assert_eq!(g.words.len(), 2);
        let w0 = g.words[0];
        assert_eq!(w0.get(3), entry(0));
        assert_eq!(w0.get(2), entry(1));
        assert_eq!(w0.get(1), entry(0));
        assert_eq!(w0.get(0), entry(2));
        assert_eq!(w0.entry_count(), 4);
        let w1 = g.words[1];
        assert_eq!(w1.get(1), entry(1));
        assert_eq!(w1.entry_count(), 1);
    }

    #[test]
    fn six_weights_three_cycles() {
        // column 0 is set in three weights; no other column exceeds two
        let window = [0b0101, 0b0011, -0b0100, 0b0001, 0b1000, 0];
        let lane = knead_lane(&window, Bitwidth::B16, 6).unwrap();
        assert_eq!(group_cycle_count(&lane.groups[0]), 3);
        assert!(validate_kneading(&window, &lane).is_ok());
    }

    #[test]
    fn zero_window_has_no_words() {
        let lane = knead_lane(&[0; 8], Bitwidth::B16, 8).unwrap();
        assert_eq!(group_cycle_count(&lane.groups[0]), 0);
        assert_eq!(lane.total_words(), 0);
    }

    #[test]
    fn identical_weights_do_not_squeeze() {
        for k in 1..=9 {
            let window = vec![-0b1011_0110; k];
            let lane = knead_lane(&window, Bitwidth::B16, 16).unwrap();
            assert_eq!(group_cycle_count(&lane.groups[0]), k);
        }
    }

    #[test]
    fn partial_last_window() {
        let w: Vec<i32> = (1..=10).collect();
        let lane = knead_lane(&w, Bitwidth::B8, 4).unwrap();
        let sizes: Vec<_> = lane.groups.iter().map(|g| (g.start, g.window_size)).collect();
        assert_eq!(sizes, vec![(0, 4), (4, 4), (8, 2)]);
        assert!(validate_kneading(&w, &lane).is_ok());
    }

    #[test]
    fn rejects_bad_stride_and_range() {
        assert!(matches!(knead_lane(&[1], Bitwidth::B8, 0), Err(Error::InvalidStride(0))));
        assert!(knead_lane(&[1], Bitwidth::B8, MAX_STRIDE + 1).is_err());
        assert!(knead_lane(&[1], Bitwidth::B8, MAX_STRIDE).is_ok());
        assert!(matches!(knead_lane(&[200], Bitwidth::B8, 4), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn pointer_width() {
        assert_eq!(pointer_bits(1), 0);
        assert_eq!(pointer_bits(2), 1);
        assert_eq!(pointer_bits(10), 4);
        assert_eq!(pointer_bits(16), 4);
        assert_eq!(pointer_bits(17), 5);
        assert_eq!(pointer_bits(32), 5);
    }

    #[test]
    fn decode_recovers_weights() {
        let w = [3, -7, 0, 127, -1, 64, 0, -100];
        let lane = knead_lane(&w, Bitwidth::B8, 3).unwrap();
        assert_eq!(decode_lane(&lane).unwrap(), w);
    }

    #[test]
    fn corrupted_pointer_is_located() {
        let w = [0b0110, 0b0011, 0b1000, 0b0101, 0b0010];
        let mut lane = knead_lane(&w, Bitwidth::B8, 3).unwrap();
        // group 1 holds weights 3 and 4; retarget column 2 of its first word
        let mut word = lane.groups[1].words[0];
        assert_eq!(word.get(2), entry(0));
        word.set(2, entry(1));
        lane.groups[1].words[0] = word;
        let v = validate_kneading(&w, &lane).unwrap_err();
        assert_eq!((v.group, v.column, v.kind), (1, Some(2), ViolationKind::Conservation));
    }

    #[test]
    fn swapped_words_break_stability() {
        let w = [0b011, 0b011, 0b001];
        let mut lane = knead_lane(&w, Bitwidth::B8, 3).unwrap();
        lane.groups[0].words.swap(0, 1);
        let v = validate_kneading(&w, &lane).unwrap_err();
        assert_eq!((v.group, v.column, v.kind), (0, Some(0), ViolationKind::Stability));
    }

    #[test]
    fn flipped_sign_detected() {
        let w = [5, -3];
        let mut lane = knead_lane(&w, Bitwidth::B8, 2).unwrap();
        let mut word = lane.groups[0].words[0];
        word.set(0, Some(KneadedEntry::new(0, Sign::Neg)));
        lane.groups[0].words[0] = word;
        assert_eq!(validate_kneading(&w, &lane).unwrap_err().kind, ViolationKind::SignMismatch);
    }

    #[test]
    fn extra_empty_word_detected() {
        let w = [1, 2];
        let mut lane = knead_lane(&w, Bitwidth::B8, 2).unwrap();
        lane.groups[0].words.push(KneadedWord::empty(7));
        assert_eq!(validate_kneading(&w, &lane).unwrap_err().kind, ViolationKind::WordCount);
    }

    #[test]
    fn dump_lists_entries() {
        let lane = knead_lane(&[0b10, -0b01], Bitwidth::B8, 2).unwrap();
        let json = serde_json::to_value(lane.dump()).unwrap();
        assert_eq!(json["pointer_bits"], 1);
        let word = &json["groups"][0]["words"][0];
        assert_eq!(word[0]["column"], 0);
        assert_eq!(word[0]["pointer"], 1);
        assert_eq!(word[0]["sign"], "-");
        assert_eq!(word[1]["column"], 1);
    }
}
