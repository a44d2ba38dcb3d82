//! Split-and-accumulate execution.
//!
//! Each kneaded word is decoded by a splitter: for every occupied column the
//! referenced activation (negated for negative weights) is forwarded to that
//! column's segment accumulator, and empty columns forward zero. After the
//! lane's last word the rear adder tree reduces the segments once:
//! `sum = Σ_b S[b] · 2^b`.
//!
//! In int8 mode the datapath is split into two banks of 7 columns that run two
//! independent lanes side by side, one word from each per cycle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kneader::{KneadedLane, KneadedWord, Sign, MAX_COLUMNS};
use crate::tensor::Bitwidth;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SacMode {
    Fp16,
    Int8,
}

impl SacMode {
    /// Segment columns per bank.
    pub fn bank_columns(self) -> usize {
        match self {
            SacMode::Fp16 => Bitwidth::B16.magnitude_bits(),
            SacMode::Int8 => Bitwidth::B8.magnitude_bits(),
        }
    }

    pub fn banks(self) -> usize {
        match self {
            SacMode::Fp16 => 1,
            SacMode::Int8 => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SacConfig {
    /// Rear adder tree latency, charged once per non-empty lane.
    pub tree_latency: u64,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig { tree_latency: 1 }
    }
}

/// Datapath event counters, shared by every engine so energy can be
/// accounted uniformly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub words_consumed: u64,
    pub segment_adds: u64,
    pub tree_firings: u64,
    pub splitter_decodes: u64,
    pub buffer_reads: u64,
    pub macs: u64,
}

impl std::ops::AddAssign for EventCounts {
    fn add_assign(&mut self, o: Self) {
        self.words_consumed += o.words_consumed;
        self.segment_adds += o.segment_adds;
        self.tree_firings += o.tree_firings;
        self.splitter_decodes += o.splitter_decodes;
        self.buffer_reads += o.buffer_reads;
        self.macs += o.macs;
    }
}

/// Activations reachable by one kneaded group.
#[derive(Clone, Copy, Debug)]
pub struct ActivationWindow<'a>(pub &'a [i32]);

impl<'a> ActivationWindow<'a> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-column splitter outputs; only the first `width` entries are meaningful.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitterOutput {
    values: [i64; MAX_COLUMNS],
    width: usize,
}

impl SplitterOutput {
    pub fn as_slice(&self) -> &[i64] {
        &self.values[..self.width]
    }
}

pub fn splitter_dispatch(word: &KneadedWord, window: ActivationWindow<'_>) -> Result<SplitterOutput> {
    let mut values = [0i64; MAX_COLUMNS];
    for (b, e) in word.iter() {
        let p = e.pointer();
        let a = *window
            .0
            .get(p)
            .ok_or(Error::PointerOutOfWindow { pointer: p, window: window.len() })?;
        values[b] = e.sign.apply(a as i64);
    }
    Ok(SplitterOutput { values, width: word.width() })
}

/// Segment registers of one SAC unit plus its cycle and event counters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentState {
    mode: SacMode,
    banks: [[i64; MAX_COLUMNS]; 2],
    cycles: u64,
    events: EventCounts,
}

impl SegmentState {
    pub fn new(mode: SacMode) -> Self {
        SegmentState { mode, banks: [[0; MAX_COLUMNS]; 2], cycles: 0, events: EventCounts::default() }
    }

    pub fn mode(&self) -> SacMode {
        self.mode
    }

    pub fn segments(&self, bank: usize) -> &[i64] {
        assert!(bank < self.mode.banks(), "bank {bank} unavailable in {:?} mode", self.mode);
        &self.banks[bank][..self.mode.bank_columns()]
    }

    /// Accumulation cycles charged so far.
    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    pub fn events(&self) -> EventCounts {
        self.events
    }

    fn add_word(&mut self, bank: usize, word: &KneadedWord, window: ActivationWindow<'_>) -> Result<()> {
        let datapath = self.mode.bank_columns();
        let fits = match self.mode {
            SacMode::Fp16 => word.width() <= datapath,
            SacMode::Int8 => word.width() == datapath,
        };
        if !fits {
            return Err(Error::WidthMismatch { word: word.width(), datapath });
        }
        let out = splitter_dispatch(word, window)?;
        let segments = &mut self.banks[bank];
        for (b, _) in word.iter() {
            segments[b] = segments[b].checked_add(out.values[b]).ok_or(Error::Overflow { column: b })?;
            self.events.segment_adds += 1;
        }
        self.events.words_consumed += 1;
        self.events.splitter_decodes += 1;
        self.events.buffer_reads += 1;
        Ok(())
    }

    /// One fp16-mode cycle: the whole word goes to bank 0.
    pub fn accumulate_word(&mut self, word: &KneadedWord, window: ActivationWindow<'_>) -> Result<()> {
        if self.mode != SacMode::Fp16 {
            return Err(Error::Config("accumulate_word needs fp16 mode; use accumulate_pair".into()));
        }
        self.add_word(0, word, window)?;
        self.cycles += 1;
        Ok(())
    }

    /// One int8-mode cycle: the upper and lower halves each take an optional word.
    pub fn accumulate_pair(
        &mut self,
        lower: Option<(&KneadedWord, ActivationWindow<'_>)>,
        upper: Option<(&KneadedWord, ActivationWindow<'_>)>,
    ) -> Result<()> {
        if self.mode != SacMode::Int8 {
            return Err(Error::Config("accumulate_pair needs int8 mode".into()));
        }
        if let Some((w, win)) = lower {
            self.add_word(0, w, win)?;
        }
        if let Some((w, win)) = upper {
            self.add_word(1, w, win)?;
        }
        self.cycles += 1;
        Ok(())
    }

    /// Shift-and-add of one bank: `Σ_b S[b] · 2^b`.
    pub fn rear_sum_bank(&self, bank: usize) -> Result<i64> {
        self.segments(bank).iter().enumerate().try_fold(0i64, |acc, (b, &s)| {
            s.checked_mul(1i64 << b).and_then(|v| acc.checked_add(v)).ok_or(Error::Overflow { column: b })
        })
    }
}

pub fn sac_accumulate_word(state: &mut SegmentState, word: &KneadedWord, window: ActivationWindow<'_>) -> Result<()> {
    state.accumulate_word(word, window)
}

/// Rear adder tree over bank 0.
pub fn rear_sum(state: &SegmentState) -> Result<i64> {
    state.rear_sum_bank(0)
}

/// Product `a · w` via bit decomposition of `|w|`, without kneading.
pub fn sac_pairwise(a: i32, w: i32, bitwidth: Bitwidth) -> Result<i64> {
    if !bitwidth.contains(w as i64) {
        return Err(Error::OutOfRange { index: 0, value: w as i64, max: bitwidth.max_value() as i64 });
    }
    let mut segments = [0i64; MAX_COLUMNS];
    let signed = Sign::of(w).apply(a as i64);
    let mag = w.unsigned_abs();
    for (b, s) in segments.iter_mut().enumerate().take(bitwidth.magnitude_bits()) {
        if mag & (1 << b) != 0 {
            *s += signed;
        }
    }
    segments.iter().enumerate().try_fold(0i64, |acc, (b, &s)| {
        s.checked_mul(1i64 << b).and_then(|v| acc.checked_add(v)).ok_or(Error::Overflow { column: b })
    })
}

/// Outcome of running one lane (or one int8 lane pair) on any engine.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LaneResult {
    pub sum: i64,
    pub accumulation_cycles: u64,
    pub tree_cycles: u64,
    pub events: EventCounts,
}

impl LaneResult {
    pub fn cycles(&self) -> u64 {
        self.accumulation_cycles + self.tree_cycles
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PairLaneResult {
    pub sums: [i64; 2],
    pub accumulation_cycles: u64,
    pub tree_cycles: u64,
    pub events: EventCounts,
}

impl PairLaneResult {
    pub fn cycles(&self) -> u64 {
        self.accumulation_cycles + self.tree_cycles
    }
}

fn check_lengths(lane: &KneadedLane, activations: &[i32]) -> Result<()> {
    if lane.len != activations.len() {
        return Err(Error::LengthMismatch { weights: lane.len, activations: activations.len() });
    }
    Ok(())
}

fn window<'a>(acts: &'a [i32], g: &crate::kneader::KneadedGroup) -> ActivationWindow<'a> {
    ActivationWindow(&acts[g.start..g.start + g.window_size])
}

/// Runs one kneaded lane on the fp16 datapath.
pub fn run_lane_fp16(lane: &KneadedLane, activations: &[i32], cfg: SacConfig) -> Result<LaneResult> {
    check_lengths(lane, activations)?;
    let mut state = SegmentState::new(SacMode::Fp16);
    for (word, g) in lane.words() {
        state.accumulate_word(word, window(activations, g))?;
    }
    let mut events = state.events();
    events.buffer_reads += activations.len() as u64;
    if lane.len == 0 {
        return Ok(LaneResult { events, ..LaneResult::default() });
    }
    events.tree_firings = 1;
    Ok(LaneResult {
        sum: rear_sum(&state)?,
        accumulation_cycles: state.cycles(),
        tree_cycles: cfg.tree_latency,
        events,
    })
}

/// Runs two 8-bit lanes through the split int8 datapath.
pub fn run_lane_int8(
    lane_a: &KneadedLane,
    lane_b: &KneadedLane,
    acts_a: &[i32],
    acts_b: &[i32],
    cfg: SacConfig,
) -> Result<PairLaneResult> {
    for lane in [lane_a, lane_b] {
        if lane.bitwidth != Bitwidth::B8 {
            return Err(Error::IncompatibleEngine { engine: "tetris-int8".into(), bits: lane.bitwidth.bits() });
        }
    }
    if lane_a.ks != lane_b.ks {
        return Err(Error::Config(format!("int8 halves kneaded with different strides {} and {}", lane_a.ks, lane_b.ks)));
    }
    check_lengths(lane_a, acts_a)?;
    check_lengths(lane_b, acts_b)?;

    let mut state = SegmentState::new(SacMode::Int8);
    let mut a = lane_a.words();
    let mut b = lane_b.words();
    loop {
        let lower = a.next().map(|(w, g)| (w, window(acts_a, g)));
        let upper = b.next().map(|(w, g)| (w, window(acts_b, g)));
        if lower.is_none() && upper.is_none() {
            break;
        }
        state.accumulate_pair(lower, upper)?;
    }
    let mut events = state.events();
    events.buffer_reads += (acts_a.len() + acts_b.len()) as u64;
    if lane_a.len == 0 && lane_b.len == 0 {
        return Ok(PairLaneResult { events, ..PairLaneResult::default() });
    }
    // the split last level yields one rear sum per non-empty half
    events.tree_firings = [lane_a.len, lane_b.len].iter().filter(|&&n| n > 0).count() as u64;
    Ok(PairLaneResult {
        sums: [state.rear_sum_bank(0)?, state.rear_sum_bank(1)?],
        accumulation_cycles: state.cycles(),
        tree_cycles: cfg.tree_latency,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kneader::{knead_lane, KneadedEntry};

    fn word_with(width: usize, entries: &[(usize, usize, Sign)]) -> KneadedWord {
        let mut w = KneadedWord::empty(width);
        for &(b, p, s) in entries {
            w.set(b, Some(KneadedEntry::new(p, s)));
        }
        w
    }

    #[test]
    fn dispatch_forwards_pointed_activation() {
        let w = word_with(15, &[(2, 1, Sign::Pos)]);
        let out = splitter_dispatch(&w, ActivationWindow(&[7, 4])).unwrap();
        let mut expected = vec![0; 15];
        expected[2] = 4;
        assert_eq!(out.as_slice(), expected.as_slice());
    }

    #[test]
    fn dispatch_empty_and_negative() {
        let out = splitter_dispatch(&KneadedWord::empty(15), ActivationWindow(&[1, 2])).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0));
        let w = word_with(15, &[(0, 0, Sign::Neg)]);
        assert_eq!(splitter_dispatch(&w, ActivationWindow(&[5])).unwrap().as_slice()[0], -5);
    }

    #[test]
    fn dispatch_pointer_outside_window() {
        let w = word_with(15, &[(3, 2, Sign::Pos)]);
        let err = splitter_dispatch(&w, ActivationWindow(&[1, 2])).unwrap_err();
        assert!(matches!(err, Error::PointerOutOfWindow { pointer: 2, window: 2 }));
    }

    #[test]
    fn accumulate_and_cycle_charge() {
        let mut s = SegmentState::new(SacMode::Fp16);
        let w = word_with(15, &[(2, 1, Sign::Pos)]);
        sac_accumulate_word(&mut s, &w, ActivationWindow(&[7, 4])).unwrap();
        assert_eq!(&s.segments(0)[..4], &[0, 0, 4, 0]);
        assert_eq!(s.cycles(), 1);
        let before = s.segments(0).to_vec();
        sac_accumulate_word(&mut s, &KneadedWord::empty(15), ActivationWindow(&[7, 4])).unwrap();
        assert_eq!(s.segments(0), before.as_slice());
        assert_eq!(s.cycles(), 2);
        let w2 = word_with(15, &[(2, 0, Sign::Pos)]);
        sac_accumulate_word(&mut s, &w2, ActivationWindow(&[7, 4])).unwrap();
        assert_eq!(s.segments(0)[2], 11);
    }

    #[test]
    fn overflow_is_reported() {
        let mut s = SegmentState::new(SacMode::Fp16);
        s.banks[0][3] = i64::MAX - 1;
        let w = word_with(15, &[(3, 0, Sign::Pos)]);
        let err = s.accumulate_word(&w, ActivationWindow(&[5])).unwrap_err();
        assert!(matches!(err, Error::Overflow { column: 3 }));
        let mut s = SegmentState::new(SacMode::Fp16);
        s.banks[0][14] = i64::MAX / 4;
        assert!(matches!(rear_sum(&s), Err(Error::Overflow { column: 14 })));
    }

    #[test]
    fn rear_sum_examples() {
        let mut s = SegmentState::new(SacMode::Fp16);
        assert_eq!(rear_sum(&s).unwrap(), 0);
        s.banks[0][0] = 5;
        s.banks[0][1] = 2;
        assert_eq!(rear_sum(&s).unwrap(), 9);
        let mut s = SegmentState::new(SacMode::Fp16);
        s.banks[0][14] = 1;
        assert_eq!(rear_sum(&s).unwrap(), 16384);
    }

    #[test]
    fn pairwise_products() {
        assert_eq!(sac_pairwise(3, 5, Bitwidth::B16).unwrap(), 15);
        assert_eq!(sac_pairwise(12345, 0, Bitwidth::B16).unwrap(), 0);
        assert_eq!(sac_pairwise(-2, 3, Bitwidth::B16).unwrap(), -6);
        assert_eq!(sac_pairwise(-2, -3, Bitwidth::B8).unwrap(), 6);
        assert!(sac_pairwise(1, 128, Bitwidth::B8).is_err());
    }

    #[test]
    fn fp16_lane_dot_product() {
        let lane = knead_lane(&[3, 1], Bitwidth::B16, 16).unwrap();
        let r = run_lane_fp16(&lane, &[2, 3], SacConfig::default()).unwrap();
        assert_eq!(r.sum, 9);
        assert_eq!(r.accumulation_cycles, 2);
        assert_eq!(r.cycles(), 3);
    }

    #[test]
    fn empty_lane_costs_nothing() {
        let lane = knead_lane(&[], Bitwidth::B16, 16).unwrap();
        let r = run_lane_fp16(&lane, &[], SacConfig::default()).unwrap();
        assert_eq!((r.sum, r.cycles(), r.events.tree_firings), (0, 0, 0));
    }

    #[test]
    fn zero_weight_lane_is_pass_only() {
        let lane = knead_lane(&[0, 0, 0], Bitwidth::B16, 16).unwrap();
        let r = run_lane_fp16(&lane, &[4, 5, 6], SacConfig { tree_latency: 2 }).unwrap();
        assert_eq!((r.sum, r.accumulation_cycles, r.tree_cycles), (0, 0, 2));
    }

    #[test]
    fn lane_length_mismatch() {
        let lane = knead_lane(&[1, 2], Bitwidth::B16, 16).unwrap();
        assert!(matches!(
            run_lane_fp16(&lane, &[1], SacConfig::default()),
            Err(Error::LengthMismatch { weights: 2, activations: 1 })
        ));
    }

    #[test]
    fn int8_identical_halves_consume_two_words_per_cycle() {
        let w = [5, -3, 127, 0, 64, -1];
        let acts = [1, 2, 3, 4, 5, -6];
        let lane = knead_lane(&w, Bitwidth::B8, 4).unwrap();
        let r = run_lane_int8(&lane, &lane, &acts, &acts, SacConfig::default()).unwrap();
        let expected: i64 = w.iter().zip(&acts).map(|(&a, &b)| a as i64 * b as i64).sum();
        assert_eq!(r.sums, [expected, expected]);
        assert_eq!(r.events.words_consumed, 2 * r.accumulation_cycles);
        assert_eq!(r.accumulation_cycles, lane.total_words() as u64);
        assert_eq!(r.cycles(), lane.total_words() as u64 + 1);

        let fp = run_lane_fp16(&lane, &acts, SacConfig::default()).unwrap();
        assert_eq!(fp.events.words_consumed, fp.accumulation_cycles);
    }

    #[test]
    fn int8_empty_upper_half() {
        let w = [7, 9, -11];
        let acts = [3, 3, 3];
        let a = knead_lane(&w, Bitwidth::B8, 16).unwrap();
        let b = knead_lane(&[], Bitwidth::B8, 16).unwrap();
        let r = run_lane_int8(&a, &b, &acts, &[], SacConfig::default()).unwrap();
        assert_eq!(r.sums, [15, 0]);
        assert_eq!(r.accumulation_cycles, a.total_words() as u64);
    }

    #[test]
    fn int8_rejects_wide_lanes() {
        let a = knead_lane(&[1], Bitwidth::B16, 16).unwrap();
        assert!(run_lane_int8(&a, &a, &[1], &[1], SacConfig::default()).is_err());
        let b = knead_lane(&[1], Bitwidth::B8, 16).unwrap();
        let c = knead_lane(&[1], Bitwidth::B8, 8).unwrap();
        assert!(run_lane_int8(&b, &c, &[1], &[1], SacConfig::default()).is_err());
    }

    #[test]
    fn mode_guards() {
        let mut s = SegmentState::new(SacMode::Int8);
        let w = KneadedWord::empty(7);
        assert!(s.accumulate_word(&w, ActivationWindow(&[])).is_err());
        let wide = KneadedWord::empty(15);
        assert!(matches!(
            s.accumulate_pair(Some((&wide, ActivationWindow(&[]))), None),
            Err(Error::WidthMismatch { word: 15, datapath: 7 })
        ));
    }
}
