//! Reduced words in a free group, stored as run-length syllables.
//!
//! A letter id is `2·gen + inv`; its inverse is `id ^ 1`. Syllables keep
//! long powers of one generator (cusp excursions) compact.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Syllable {
    pub gen: u16,
    pub pow: i32,
}

#[inline]
pub fn letter(gen: u16, inverse: bool) -> u32 {
    2 * gen as u32 + inverse as u32
}

#[inline]
pub fn letter_gen(l: u32) -> u16 {
    (l / 2) as u16
}

#[inline]
pub fn letter_is_inverse(l: u32) -> bool {
    l & 1 == 1
}

/// A freely reduced word: adjacent syllables have distinct generators and
/// no power is zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word {
    syllables: Vec<Syllable>,
}

impl Word {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_letter(l: u32) -> Self {
        let mut w = Self::default();
        w.push_letter(l);
        w
    }

    /// Builds a word from syllables, reducing as it goes.
    pub fn from_syllables(s: impl IntoIterator<Item = Syllable>) -> Self {
        let mut w = Self::default();
        for syl in s {
            w.push_syllable(syl);
        }
        w
    }

    pub fn from_letters(letters: impl IntoIterator<Item = u32>) -> Self {
        let mut w = Self::default();
        for l in letters {
            w.push_letter(l);
        }
        w
    }

    pub fn syllables(&self) -> &[Syllable] {
        &self.syllables
    }

    pub fn is_identity(&self) -> bool {
        self.syllables.is_empty()
    }

    /// Number of letters.
    pub fn len(&self) -> usize {
        self.syllables.iter().map(|s| s.pow.unsigned_abs() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.syllables.is_empty()
    }

    pub fn push_syllable(&mut self, syl: Syllable) {
        if syl.pow == 0 {
            return;
        }
        match self.syllables.last_mut() {
            Some(last) if last.gen == syl.gen => {
                last.pow += syl.pow;
                if last.pow == 0 {
                    self.syllables.pop();
                }
            }
            _ => self.syllables.push(syl),
        }
    }

    pub fn push_letter(&mut self, l: u32) {
        let pow = if letter_is_inverse(l) { -1 } else { 1 };
        self.push_syllable(Syllable {
            gen: letter_gen(l),
            pow,
        });
    }

    pub fn first_letter(&self) -> Option<u32> {
        self.syllables.first().map(|s| letter(s.gen, s.pow < 0))
    }

    pub fn last_letter(&self) -> Option<u32> {
        self.syllables.last().map(|s| letter(s.gen, s.pow < 0))
    }

    pub fn letters(&self) -> impl Iterator<Item = u32> + '_ {
        self.syllables
            .iter()
            .flat_map(|s| std::iter::repeat_n(letter(s.gen, s.pow < 0), s.pow.unsigned_abs() as usize))
    }

    pub fn inverse(&self) -> Self {
        Self {
            syllables: self
                .syllables
                .iter()
                .rev()
                .map(|s| Syllable {
                    gen: s.gen,
                    pow: -s.pow,
                })
                .collect(),
        }
    }

    /// Product `self · other` with free cancellation.
    pub fn concat(&self, other: &Word) -> Self {
        let mut w = self.clone();
        for s in &other.syllables {
            w.push_syllable(*s);
        }
        w
    }

    pub fn is_cyclically_reduced(&self) -> bool {
        match (self.syllables.first(), self.syllables.last()) {
            (Some(a), Some(b)) => self.syllables.len() == 1 || a.gen != b.gen,
            _ => true,
        }
    }

    /// Canonical representative of the conjugacy class of a cyclically
    /// reduced word: the lexicographically least syllable rotation.
    pub fn cyclic_canonical(&self) -> Self {
        let n = self.syllables.len();
        if n <= 1 {
            return self.clone();
        }
        let s = &self.syllables;
        let best = (0..n)
            .min_by(|&i, &j| (0..n).map(|k| s[(i + k) % n]).cmp((0..n).map(|k| s[(j + k) % n])))
            .unwrap_or(0);
        Self {
            syllables: (0..n).map(|k| s[(best + k) % n]).collect(),
        }
    }

    /// Cyclically reduces by conjugation; returns `None` for words
    /// conjugate to the identity.
    pub fn cyclic_reduction(&self) -> Option<Self> {
        let mut s = self.syllables.clone();
        loop {
            match s.len() {
                0 => return None,
                1 => return Some(Self { syllables: s }),
                n if s[0].gen == s[n - 1].gen => {
                    let last = s.pop().unwrap_or(s[0]);
                    s[0].pow += last.pow;
                    if s[0].pow == 0 {
                        s.remove(0);
                    }
                }
                _ => return Some(Self { syllables: s }),
            }
        }
    }

    /// Whether the cyclic word is not a proper power.
    pub fn is_primitive(&self) -> bool {
        let s = &self.syllables;
        let n = s.len();
        match n {
            0 => false,
            1 => s[0].pow.abs() == 1,
            _ => (1..n)
                .filter(|p| n.is_multiple_of(*p))
                .all(|p| (0..n).any(|k| s[k] != s[(k + p) % n])),
        }
    }

    /// Compact form with generator indices, e.g. `0^3.1^-1`; `e` for the identity.
    pub fn to_index_string(&self) -> String {
        self.render(|g| g.to_string())
    }

    /// Display form with generator labels.
    pub fn to_label_string(&self, labels: &[String]) -> String {
        self.render(|g| labels.get(g as usize).cloned().unwrap_or_else(|| g.to_string()))
    }

    fn render(&self, name: impl Fn(u16) -> String) -> String {
        if self.syllables.is_empty() {
            return "e".into();
        }
        self.syllables
            .iter()
            .map(|s| format!("{}^{}", name(s.gen), s.pow))
            .collect::<Vec<_>>()
            .join(".")
    }

    pub fn parse_index_string(text: &str) -> Result<Self> {
        if text == "e" {
            return Ok(Self::identity());
        }
        let mut w = Self::identity();
        for part in text.split('.') {
            let (g, p) = part
                .split_once('^')
                .ok_or_else(|| Error::Parse(format!("bad syllable {part:?}")))?;
            let gen = g
                .parse::<u16>()
                .map_err(|e| Error::Parse(format!("{part:?}: {e}")))?;
            let pow = p
                .parse::<i32>()
                .map_err(|e| Error::Parse(format!("{part:?}: {e}")))?;
            if pow == 0 {
                return Err(Error::Parse(format!("zero power in {part:?}")));
            }
            let before = w.syllables.len();
            w.push_syllable(Syllable { gen, pow });
            if w.syllables.len() <= before {
                return Err(Error::Parse(format!("word {text:?} is not reduced")));
            }
        }
        Ok(w)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_index_string())
    }
}
