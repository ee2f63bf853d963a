//! Closed orbits of a subshift: canonical cyclic words, constrained Lyndon
//! word enumeration and Birkhoff sums along orbits.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::LocallyConstantPotential;
use crate::sft::{format_word, Sft, Symbol};

/// Default cap on the number of prime orbits a single enumeration may produce.
pub const DEFAULT_ORBIT_BUDGET: usize = 10_000_000;

/// A prime closed orbit, stored as its lexicographically minimal rotation.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PrimeOrbit {
    word: Box<[Symbol]>,
}

impl PrimeOrbit {
    /// Build a prime orbit from any rotation of an admissible primitive word.
    pub fn new(sft: &Sft, word: &[Symbol]) -> Result<Self> {
        if word.is_empty() {
            return Err(Error::InvalidParameter("orbit word is empty".into()));
        }
        if !sft.is_admissible_cycle(word) {
            return Err(Error::InadmissibleWindow {
                window: word.to_vec(),
            });
        }
        if primitive_root_len(word) != word.len() {
            return Err(Error::InvalidParameter(format!(
                "word {} is a proper power",
                format_word(word)
            )));
        }
        Ok(Self {
            word: canonical_representative(word).into_boxed_slice(),
        })
    }

    pub(crate) fn from_canonical(word: &[Symbol]) -> Self {
        debug_assert_eq!(canonical_representative(word), word);
        Self { word: word.into() }
    }

    pub fn word(&self) -> &[Symbol] {
        &self.word
    }

    pub fn period(&self) -> usize {
        self.word.len()
    }
}

impl fmt::Debug for PrimeOrbit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", format_word(&self.word))
    }
}

impl fmt::Display for PrimeOrbit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", format_word(&self.word))
    }
}

/// A closed orbit: a prime orbit traversed `multiplicity` times.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClosedOrbit {
    pub base: PrimeOrbit,
    pub multiplicity: usize,
}

impl ClosedOrbit {
    pub fn new(base: PrimeOrbit, multiplicity: usize) -> Result<Self> {
        if multiplicity == 0 {
            return Err(Error::InvalidParameter("multiplicity must be positive".into()));
        }
        Ok(Self { base, multiplicity })
    }

    pub fn prime(base: PrimeOrbit) -> Self {
        Self {
            base,
            multiplicity: 1,
        }
    }

    /// Decompose an admissible cyclic word as `γ^m` with `γ` prime.
    pub fn from_word(sft: &Sft, word: &[Symbol]) -> Result<Self> {
        let root = primitive_root_len(word);
        let base = PrimeOrbit::new(sft, &word[..root])?;
        if !sft.is_admissible_cycle(word) {
            return Err(Error::InadmissibleWindow {
                window: word.to_vec(),
            });
        }
        Ok(Self {
            base,
            multiplicity: word.len() / root,
        })
    }

    pub fn length(&self) -> usize {
        self.base.period() * self.multiplicity
    }

    pub fn is_prime(&self) -> bool {
        self.multiplicity == 1
    }

    /// Von Mangoldt value: the period of the underlying prime orbit.
    pub fn von_mangoldt(&self) -> usize {
        self.base.period()
    }
}

impl fmt::Debug for ClosedOrbit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for ClosedOrbit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.multiplicity == 1 {
            write!(f, "{}", self.base)
        } else {
            write!(f, "{}^{}", self.base, self.multiplicity)
        }
    }
}

/// Lexicographically minimal rotation of a cyclic word (Booth's algorithm).
pub fn canonical_representative(word: &[Symbol]) -> Vec<Symbol> {
    let n = word.len();
    if n == 0 {
        return Vec::new();
    }
    let start = least_rotation(word);
    word[start..].iter().chain(&word[..start]).copied().collect()
}

fn least_rotation(word: &[Symbol]) -> usize {
    let n = word.len();
    let at = |i: isize| word[i as usize % n];
    let mut failure = vec![-1isize; 2 * n];
    let mut k: isize = 0;
    for j in 1..2 * n as isize {
        let sj = at(j);
        let mut i = failure[(j - k - 1) as usize];
        while i != -1 && sj != at(k + i + 1) {
            if sj < at(k + i + 1) {
                k = j - i - 1;
            }
            i = failure[i as usize];
        }
        if sj != at(k + i + 1) {
            // here i == -1
            if sj < at(k) {
                k = j;
            }
            failure[(j - k) as usize] = -1;
        } else {
            failure[(j - k) as usize] = i + 1;
        }
    }
    k as usize % n
}

/// Length of the shortest `u` with `word = u^m`.
pub fn primitive_root_len(word: &[Symbol]) -> usize {
    let n = word.len();
    (1..=n)
        .filter(|d| n % d == 0)
        .find(|&d| (d..n).all(|i| word[i] == word[i - d]))
        .unwrap_or(n)
}

/// Period value `ℓ_φ(γ)` of a potential along a closed orbit.
pub fn birkhoff_sum(orbit: &ClosedOrbit, potential: &LocallyConstantPotential) -> f64 {
    orbit.multiplicity as f64 * potential.cyclic_sum(orbit.base.word())
}

/// Birkhoff sum along an arbitrary rotation of a cyclic word. The word is
/// canonicalised first, so the value is exactly rotation invariant.
pub fn birkhoff_sum_word(word: &[Symbol], potential: &LocallyConstantPotential) -> f64 {
    let canonical = canonical_representative(word);
    potential.cyclic_sum(&canonical)
}

/// Enumerate the prime orbits of period `n` in lexicographic order.
pub fn enumerate_prime_orbits(sft: &Sft, n: usize, budget: usize) -> Result<Vec<PrimeOrbit>> {
    map_prime_orbits(sft, n, budget, PrimeOrbit::from_canonical)
}

/// Apply `f` to the canonical word of every prime orbit of period `n` and
/// collect the results in lexicographic order of the words.
///
/// The search tree is split into prefix blocks that are processed in
/// parallel; results are concatenated in prefix order, so the output does not
/// depend on the number of worker threads.
pub fn map_prime_orbits<T, F>(sft: &Sft, n: usize, budget: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&[Symbol]) -> T + Sync,
{
    if n == 0 {
        return Err(Error::InvalidParameter("period must be positive".into()));
    }
    let needed = sft.count_prime_orbits(n)?;
    if needed > budget as u128 {
        return Err(Error::BudgetExceeded { needed, budget });
    }

    let k = sft.alphabet_size();
    let mut split = 0;
    let mut leaves = 1usize;
    while split < n && leaves < 256 {
        split += 1;
        leaves = leaves.saturating_mul(k);
    }

    let mut tasks = Vec::new();
    {
        let mut gen = LyndonGen::new(sft, n);
        gen.collect_prefixes(1, 1, split, &mut tasks);
    }

    let chunks: Vec<Vec<T>> = tasks
        .into_par_iter()
        .map(|(prefix, p)| {
            let mut gen = LyndonGen::new(sft, n);
            gen.word[1..=prefix.len()].copy_from_slice(&prefix);
            let mut out = Vec::new();
            gen.run(prefix.len() + 1, p, &mut |w| out.push(f(w)));
            out
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

/// Fredricksen–Kessler–Maiorana generation restricted to admissible words.
/// `word[0]` is a sentinel; the word under construction is `word[1..=n]`.
struct LyndonGen<'a> {
    sft: &'a Sft,
    n: usize,
    word: Vec<Symbol>,
}

impl<'a> LyndonGen<'a> {
    fn new(sft: &'a Sft, n: usize) -> Self {
        Self {
            sft,
            n,
            word: vec![0; n + 1],
        }
    }

    fn children(&self, t: usize, p: usize) -> impl Iterator<Item = (Symbol, usize)> + '_ {
        let start = self.word[t - p];
        let k = self.sft.alphabet_size();
        (start as usize..k).filter_map(move |j| {
            let j = j as Symbol;
            let ok = t == 1 || self.sft.allows(self.word[t - 1], j);
            ok.then_some((j, if j == start { p } else { t }))
        })
    }

    fn collect_prefixes(
        &mut self,
        t: usize,
        p: usize,
        depth: usize,
        out: &mut Vec<(Vec<Symbol>, usize)>,
    ) {
        if t > depth {
            out.push((self.word[1..t].to_vec(), p));
            return;
        }
        let kids: Vec<_> = self.children(t, p).collect();
        for (j, q) in kids {
            self.word[t] = j;
            self.collect_prefixes(t + 1, q, depth, out);
        }
    }

    fn run(&mut self, t: usize, p: usize, visit: &mut dyn FnMut(&[Symbol])) {
        if t > self.n {
            if p == self.n && self.sft.allows(self.word[self.n], self.word[1]) {
                visit(&self.word[1..]);
            }
            return;
        }
        let start = self.word[t - p];
        let k = self.sft.alphabet_size();
        for j in start as usize..k {
            let j = j as Symbol;
            if t > 1 && !self.sft.allows(self.word[t - 1], j) {
                continue;
            }
            self.word[t] = j;
            self.run(t + 1, if j == start { p } else { t }, visit);
        }
    }
}

/// All closed orbits of length exactly `n`: prime orbits of every period
/// `d | n`, repeated `n / d` times. Ordered by base period, then word.
pub fn enumerate_closed_orbits(sft: &Sft, n: usize, budget: usize) -> Result<Vec<ClosedOrbit>> {
    let mut out = Vec::new();
    for d in (1..=n).filter(|d| n % d == 0) {
        for base in enumerate_prime_orbits(sft, d, budget)? {
            out.push(ClosedOrbit {
                base,
                multiplicity: n / d,
            });
        }
    }
    Ok(out)
}
