//! One-sided subshifts of finite type over a finite alphabet.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{divisors, gcd, mobius};

/// A symbol of the alphabet. Alphabets are limited to 256 symbols.
pub type Symbol = u8;

/// A validated irreducible, aperiodic subshift of finite type.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u8>>", into = "Vec<Vec<u8>>")]
pub struct Sft {
    alphabet_size: usize,
    /// Row-major 0/1 transition matrix.
    transitions: Vec<bool>,
    irreducible: bool,
    period: usize,
}

impl fmt::Debug for Sft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Sft")
            .field("alphabet_size", &self.alphabet_size)
            .field("transitions", &self.rows())
            .finish()
    }
}

impl TryFrom<Vec<Vec<u8>>> for Sft {
    type Error = Error;
    fn try_from(rows: Vec<Vec<u8>>) -> Result<Self> {
        Sft::validate(&rows)
    }
}

impl From<Sft> for Vec<Vec<u8>> {
    fn from(sft: Sft) -> Self {
        sft.rows()
    }
}

impl Sft {
    /// Validate a square 0/1 matrix and build the subshift.
    ///
    /// Rejects non-square or non-binary matrices, reducible matrices (naming
    /// the first unreachable symbol pair) and periodic matrices (naming the
    /// gcd of the cycle lengths).
    pub fn validate<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::InvalidMatrix("matrix is empty".into()));
        }
        if k > 256 {
            return Err(Error::InvalidMatrix(format!(
                "alphabet of {k} symbols exceeds the limit of 256"
            )));
        }
        let mut transitions = Vec::with_capacity(k * k);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != k {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                match v {
                    0 => transitions.push(false),
                    1 => transitions.push(true),
                    _ => {
                        return Err(Error::InvalidMatrix(format!(
                            "entry ({i}, {j}) is {v}, expected 0 or 1"
                        )))
                    }
                }
            }
        }

        // Reachability through paths of length >= 1.
        for from in 0..k {
            let reach = reachable_from(&transitions, k, from);
            if let Some(to) = (0..k).find(|&to| !reach[to]) {
                return Err(Error::Reducible { from, to });
            }
        }
        let period = cycle_gcd(&transitions, k);
        if period != 1 {
            return Err(Error::Periodic { period });
        }
        Ok(Self {
            alphabet_size: k,
            transitions,
            irreducible: true,
            period,
        })
    }

    /// The full shift on `k` symbols.
    pub fn full_shift(k: usize) -> Result<Self> {
        let rows = vec![vec![1u8; k]; k];
        Self::validate(&rows)
    }

    /// The golden-mean shift: the word `11` is forbidden.
    pub fn golden_mean() -> Self {
        Self::validate(&[[1u8, 1], [1, 0]]).expect("golden-mean matrix is valid")
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn is_irreducible(&self) -> bool {
        self.irreducible
    }

    /// Gcd of admissible cycle lengths; always 1 for a validated subshift.
    pub fn period(&self) -> usize {
        self.period
    }

    #[inline]
    pub fn allows(&self, a: Symbol, b: Symbol) -> bool {
        self.transitions[a as usize * self.alphabet_size + b as usize]
    }

    /// The transition matrix as rows of 0/1 entries.
    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.transitions
            .chunks(self.alphabet_size)
            .map(|r| r.iter().map(|&b| b as u8).collect())
            .collect()
    }

    /// True if every adjacent pair of the (linear) word is allowed.
    pub fn is_admissible_word(&self, word: &[Symbol]) -> bool {
        word.iter().all(|&s| (s as usize) < self.alphabet_size)
            && word.windows(2).all(|w| self.allows(w[0], w[1]))
    }

    /// True if the word is admissible as a cyclic word, closing edge included.
    pub fn is_admissible_cycle(&self, word: &[Symbol]) -> bool {
        match (word.first(), word.last()) {
            (Some(&first), Some(&last)) => {
                self.is_admissible_word(word) && self.allows(last, first)
            }
            _ => false,
        }
    }

    /// All admissible words of the given length, in lexicographic order.
    pub fn admissible_words(&self, len: usize) -> Vec<Vec<Symbol>> {
        let k = self.alphabet_size;
        let mut out: Vec<Vec<Symbol>> = vec![Vec::new()];
        for _ in 0..len {
            let mut next = Vec::with_capacity(out.len() * k);
            for w in &out {
                for s in 0..self.alphabet_size {
                    let s = s as Symbol;
                    if w.last().is_none_or(|&l| self.allows(l, s)) {
                        let mut v = w.clone();
                        v.push(s);
                        next.push(v);
                    }
                }
            }
            out = next;
        }
        out
    }

    /// Number of admissible cyclic words of length `n`, i.e. `trace(A^n)`.
    pub fn count_periodic_points(&self, n: usize) -> Result<u128> {
        if n == 0 {
            return Err(Error::InvalidParameter("n must be positive".into()));
        }
        let k = self.alphabet_size;
        let base: Vec<u128> = self.transitions.iter().map(|&b| b as u128).collect();
        let power = matrix_power(&base, k, n)?;
        (0..k).try_fold(0u128, |acc, i| {
            acc.checked_add(power[i * k + i])
                .ok_or_else(|| Error::Overflow(format!("computing trace(A^{n})")))
        })
    }

    /// Number of prime orbits of period `n`, by Möbius inversion of the
    /// periodic-point counts.
    pub fn count_prime_orbits(&self, n: usize) -> Result<u128> {
        let mut total: i128 = 0;
        for d in divisors(n) {
            let mu = mobius(d) as i128;
            if mu == 0 {
                continue;
            }
            let fix = i128::try_from(self.count_periodic_points(n / d)?)
                .map_err(|_| Error::Overflow(format!("Möbius inversion at n = {n}")))?;
            total = total
                .checked_add(mu * fix)
                .ok_or_else(|| Error::Overflow(format!("Möbius inversion at n = {n}")))?;
        }
        Ok((total / n as i128) as u128)
    }
}

/// Render a word with one base-36 digit per symbol (`0`-`9`, then `a`-`z`).
pub fn format_word(word: &[Symbol]) -> String {
    word.iter()
        .map(|&s| char::from_digit(u32::from(s), 36).unwrap_or('?'))
        .collect()
}

/// Parse a word written with one base-36 digit per symbol.
pub fn parse_word(text: &str) -> Result<Vec<Symbol>> {
    text.chars()
        .map(|c| {
            c.to_digit(36)
                .map(|d| d as Symbol)
                .ok_or_else(|| Error::InvalidParameter(format!("invalid symbol {c:?} in {text:?}")))
        })
        .collect()
}

fn reachable_from(transitions: &[bool], k: usize, from: usize) -> Vec<bool> {
    let mut seen = vec![false; k];
    let mut queue = VecDeque::new();
    for j in 0..k {
        if transitions[from * k + j] && !seen[j] {
            seen[j] = true;
            queue.push_back(j);
        }
    }
    while let Some(u) = queue.pop_front() {
        for j in 0..k {
            if transitions[u * k + j] && !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen
}

/// Period of an irreducible graph: gcd of `level(u) + 1 - level(v)` over edges.
fn cycle_gcd(transitions: &[bool], k: usize) -> usize {
    let mut level = vec![usize::MAX; k];
    level[0] = 0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for v in 0..k {
            if transitions[u * k + v] && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0;
    for u in 0..k {
        for v in 0..k {
            if transitions[u * k + v] {
                let diff = (level[u] as i64 + 1 - level[v] as i64).unsigned_abs() as usize;
                g = gcd(g, diff);
            }
        }
    }
    g
}

fn matrix_power(base: &[u128], k: usize, mut n: usize) -> Result<Vec<u128>> {
    let mut result: Vec<u128> = (0..k * k)
        .map(|i| u128::from(i / k == i % k))
        .collect();
    let mut b = base.to_vec();
    while n > 0 {
        if n & 1 == 1 {
            result = matrix_mul(&result, &b, k)?;
        }
        n >>= 1;
        if n > 0 {
            b = matrix_mul(&b, &b, k)?;
        }
    }
    Ok(result)
}

fn matrix_mul(a: &[u128], b: &[u128], k: usize) -> Result<Vec<u128>> {
    let overflow = || Error::Overflow("raising the transition matrix to a power".into());
    let mut out = vec![0u128; k * k];
    for i in 0..k {
        for l in 0..k {
            let x = a[i * k + l];
            if x == 0 {
                continue;
            }
            for j in 0..k {
                let term = x.checked_mul(b[l * k + j]).ok_or_else(overflow)?;
                out[i * k + j] = out[i * k + j].checked_add(term).ok_or_else(overflow)?;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_and_golden_mean_are_valid() {
        let full = Sft::validate(&[[1u8, 1], [1, 1]]).unwrap();
        assert_eq!(full.alphabet_size(), 2);
        assert!(full.is_irreducible());
        assert_eq!(full.period(), 1);
        let gm = Sft::validate(&[[1u8, 1], [1, 0]]).unwrap();
        assert!(!gm.allows(1, 1));
    }

    #[test]
    fn identity_matrix_is_reducible() {
        let err = Sft::validate(&[[1u8, 0], [0, 1]]).unwrap_err();
        assert_eq!(err, Error::Reducible { from: 0, to: 1 });
        assert!(err.to_string().contains("reducible"));
    }

    #[test]
    fn swap_matrix_is_periodic() {
        let err = Sft::validate(&[[0u8, 1], [1, 0]]).unwrap_err();
        assert_eq!(err, Error::Periodic { period: 2 });
    }

    #[test]
    fn malformed_matrices_rejected() {
        assert!(matches!(
            Sft::validate::<[u8; 2]>(&[]),
            Err(Error::InvalidMatrix(_))
        ));
        assert!(matches!(
            Sft::validate(&[vec![1u8, 1], vec![1]]),
            Err(Error::InvalidMatrix(_))
        ));
        assert!(matches!(
            Sft::validate(&[[1u8, 2], [1, 1]]),
            Err(Error::InvalidMatrix(_))
        ));
        // A lone symbol without a self-loop has no admissible cycle.
        assert_eq!(
            Sft::validate(&[[0u8]]).unwrap_err(),
            Error::Reducible { from: 0, to: 0 }
        );
    }

    #[test]
    fn periodic_point_counts() {
        let full = Sft::full_shift(2).unwrap();
        assert_eq!(full.count_periodic_points(4).unwrap(), 16);
        let gm = Sft::golden_mean();
        assert_eq!(gm.count_periodic_points(1).unwrap(), 1);
        assert_eq!(gm.count_periodic_points(3).unwrap(), 4);
        // Lucas numbers.
        assert_eq!(gm.count_periodic_points(10).unwrap(), 123);
    }

    #[test]
    fn periodic_point_count_overflow_is_reported() {
        let full = Sft::full_shift(2).unwrap();
        assert_eq!(full.count_periodic_points(127).unwrap(), 1u128 << 127);
        assert!(matches!(
            full.count_periodic_points(128),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn prime_orbit_counts_by_mobius() {
        let full = Sft::full_shift(2).unwrap();
        let expected = [2u128, 1, 2, 3, 6, 9, 18, 30, 56, 99];
        for (i, &e) in expected.iter().enumerate() {
            assert_eq!(full.count_prime_orbits(i + 1).unwrap(), e);
        }
    }

    #[test]
    fn admissible_words_are_lexicographic() {
        let gm = Sft::golden_mean();
        let words = gm.admissible_words(3);
        assert_eq!(
            words,
            vec![
                vec![0, 0, 0],
                vec![0, 0, 1],
                vec![0, 1, 0],
                vec![1, 0, 0],
                vec![1, 0, 1]
            ]
        );
        assert!(gm.is_admissible_cycle(&[0, 1]));
        assert!(!gm.is_admissible_cycle(&[1]));
        assert!(!gm.is_admissible_cycle(&[]));
    }

    #[test]
    fn word_text_round_trip() {
        assert_eq!(format_word(&[0, 1, 10, 35]), "01az");
        assert_eq!(parse_word("01az").unwrap(), vec![0, 1, 10, 35]);
        assert!(parse_word("0-1").is_err());
    }

    #[test]
    fn serde_round_trip_validates() {
        let gm = Sft::golden_mean();
        let json = serde_json::to_string(&gm).unwrap();
        assert_eq!(json, "[[1,1],[1,0]]");
        let back: Sft = serde_json::from_str(&json).unwrap();
        assert_eq!(back, gm);
        assert!(serde_json::from_str::<Sft>("[[1,0],[0,1]]").is_err());
    }
}
