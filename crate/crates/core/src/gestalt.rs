//! Ratcliff/Obershelp gestalt pattern matching.
//!
//! Produces the same matching blocks and ratio as Python's
//! `difflib.SequenceMatcher(None, a, b)` when the auto-junk heuristic is not
//! triggered. The heuristic is never applied here, so results depend only on
//! the two inputs. Strings are compared as sequences of Unicode scalar values.

use std::collections::HashMap;

/// A run of `length` equal characters starting at `a_start` in the first
/// sequence and `b_start` in the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatchBlock {
    pub a_start: usize,
    pub b_start: usize,
    pub length: usize,
}

impl MatchBlock {
    pub const fn new(a_start: usize, b_start: usize, length: usize) -> Self {
        MatchBlock {
            a_start,
            b_start,
            length,
        }
    }
}

/// Precomputed matcher for a fixed pair of sequences.
///
/// Build once with [`SequenceMatcher::new`] when several queries run against
/// the same pair; the free functions in this module are one-shot wrappers.
#[derive(Debug, Clone)]
pub struct SequenceMatcher {
    a: Vec<char>,
    b: Vec<char>,
    /// Positions of each character in `b`, ascending.
    b2j: HashMap<char, Vec<usize>>,
}

impl SequenceMatcher {
    pub fn new(a: &str, b: &str) -> Self {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut b2j: HashMap<char, Vec<usize>> = HashMap::new();
        for (j, &c) in b.iter().enumerate() {
            b2j.entry(c).or_default().push(j);
        }
        SequenceMatcher { a, b, b2j }
    }

    pub fn len_a(&self) -> usize {
        self.a.len()
    }

    pub fn len_b(&self) -> usize {
        self.b.len()
    }

    /// Longest common run inside `a[a_lo..a_hi]` and `b[b_lo..b_hi]`.
    ///
    /// Ties go to the smallest `a_start`, then the smallest `b_start`. With no
    /// common character the result is `(a_lo, b_lo, 0)`.
    ///
    /// # Panics
    ///
    /// If a window is inverted or extends past the end of its sequence.
    pub fn find_longest_match(&self, a_lo: usize, a_hi: usize, b_lo: usize, b_hi: usize) -> MatchBlock {
        assert!(a_lo <= a_hi && a_hi <= self.a.len(), "invalid window on first sequence");
        assert!(b_lo <= b_hi && b_hi <= self.b.len(), "invalid window on second sequence");

        let mut best = MatchBlock::new(a_lo, b_lo, 0);
        // prev[j - b_lo + 1] = length of the common run ending at a[i - 1], b[j].
        // Slot 0 stays zero and stands in for b[b_lo - 1].
        let width = b_hi - b_lo;
        let mut prev = vec![0usize; width + 1];
        let mut next = vec![0usize; width + 1];
        let mut prev_set: Vec<usize> = Vec::new();
        let mut next_set: Vec<usize> = Vec::new();
        for i in a_lo..a_hi {
            for &slot in &next_set {
                next[slot] = 0;
            }
            next_set.clear();
            if let Some(positions) = self.b2j.get(&self.a[i]) {
                let start = positions.partition_point(|&j| j < b_lo);
                for &j in &positions[start..] {
                    if j >= b_hi {
                        break;
                    }
                    let slot = j - b_lo + 1;
                    let k = prev[slot - 1] + 1;
                    next[slot] = k;
                    next_set.push(slot);
                    if k > best.length {
                        best = MatchBlock::new(i + 1 - k, j + 1 - k, k);
                    }
                }
            }
            std::mem::swap(&mut prev, &mut next);
            std::mem::swap(&mut prev_set, &mut next_set);
        }
        best
    }

    /// All maximal matching blocks, ascending, adjacent runs merged, ending
    /// with the sentinel `(len(a), len(b), 0)`.
    pub fn matching_blocks(&self) -> Vec<MatchBlock> {
        let (la, lb) = (self.a.len(), self.b.len());
        let mut queue = vec![(0, la, 0, lb)];
        let mut found = Vec::new();
        while let Some((alo, ahi, blo, bhi)) = queue.pop() {
            let m = self.find_longest_match(alo, ahi, blo, bhi);
            if m.length == 0 {
                continue;
            }
            if alo < m.a_start && blo < m.b_start {
                queue.push((alo, m.a_start, blo, m.b_start));
            }
            let (a_end, b_end) = (m.a_start + m.length, m.b_start + m.length);
            if a_end < ahi && b_end < bhi {
                queue.push((a_end, ahi, b_end, bhi));
            }
            found.push(m);
        }
        found.sort_by_key(|m| (m.a_start, m.b_start, m.length));

        let mut blocks: Vec<MatchBlock> = Vec::with_capacity(found.len() + 1);
        for m in found {
            match blocks.last_mut() {
                Some(last)
                    if last.a_start + last.length == m.a_start && last.b_start + last.length == m.b_start =>
                {
                    last.length += m.length;
                }
                _ => blocks.push(m),
            }
        }
        blocks.push(MatchBlock::new(la, lb, 0));
        blocks
    }

    /// Total number of matched characters.
    pub fn matched(&self) -> usize {
        self.matching_blocks().iter().map(|m| m.length).sum()
    }

    /// `2 * M / (len(a) + len(b))`, or 1.0 when both sequences are empty.
    pub fn ratio(&self) -> f64 {
        let total = self.a.len() + self.b.len();
        if total == 0 {
            return 1.0;
        }
        2.0 * self.matched() as f64 / total as f64
    }
}

/// See [`SequenceMatcher::find_longest_match`]. Indices count characters.
pub fn find_longest_match(a: &str, b: &str, a_lo: usize, a_hi: usize, b_lo: usize, b_hi: usize) -> MatchBlock {
    SequenceMatcher::new(a, b).find_longest_match(a_lo, a_hi, b_lo, b_hi)
}

pub fn matching_blocks(a: &str, b: &str) -> Vec<MatchBlock> {
    SequenceMatcher::new(a, b).matching_blocks()
}

/// Upper bound on [`ratio`] from character counts alone, ignoring order.
pub fn quick_ratio(a: &str, b: &str) -> f64 {
    let mut ascii = [0i64; 128];
    let mut other: HashMap<char, i64> = HashMap::new();
    let mut len_b = 0usize;
    for c in b.chars() {
        len_b += 1;
        match c.is_ascii() {
            true => ascii[c as usize] += 1,
            false => *other.entry(c).or_default() += 1,
        }
    }
    let (mut len_a, mut matches) = (0usize, 0usize);
    for c in a.chars() {
        len_a += 1;
        let avail = match c.is_ascii() {
            true => &mut ascii[c as usize],
            false => other.entry(c).or_default(),
        };
        if *avail > 0 {
            matches += 1;
        }
        *avail -= 1;
    }
    let total = len_a + len_b;
    if total == 0 {
        return 1.0;
    }
    2.0 * matches as f64 / total as f64
}

/// Gestalt similarity in `[0, 1]`. Not symmetric in general.
pub fn ratio(a: &str, b: &str) -> f64 {
    SequenceMatcher::new(a, b).ratio()
}
