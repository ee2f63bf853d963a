//! Locally constant potentials: real functions of the first `k` symbols.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::KahanSum;
use crate::sft::{format_word, parse_word, Sft, Symbol};

/// Largest window table we are willing to allocate.
const MAX_TABLE_SIZE: usize = 1 << 24;

/// A function on the subshift that depends only on the first `depth` symbols.
///
/// Values are stored densely, indexed by the base-`k` code of the window
/// (first symbol most significant). Inadmissible windows hold `NaN` and are
/// never exposed.
#[derive(Clone, Debug)]
pub struct LocallyConstantPotential {
    sft: Arc<Sft>,
    depth: usize,
    values: Vec<f64>,
}

impl PartialEq for LocallyConstantPotential {
    fn eq(&self, other: &Self) -> bool {
        self.depth == other.depth
            && self.sft == other.sft
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a == b || (a.is_nan() && b.is_nan()))
    }
}

/// Serialisable form: depth plus a window -> value table, windows written as
/// base-36 symbol strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialTable {
    pub depth: usize,
    pub values: BTreeMap<String, f64>,
}

impl LocallyConstantPotential {
    /// Build a potential from a function of admissible windows.
    pub fn from_fn<F>(sft: &Sft, depth: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&[Symbol]) -> f64,
    {
        let sft = Arc::new(sft.clone());
        Self::from_fn_arc(sft, depth, &mut f)
    }

    fn from_fn_arc(sft: Arc<Sft>, depth: usize, f: &mut dyn FnMut(&[Symbol]) -> f64) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidParameter("potential depth must be positive".into()));
        }
        let k = sft.alphabet_size();
        let size = table_size(k, depth)?;
        let mut values = vec![f64::NAN; size];
        for w in sft.admissible_words(depth) {
            let v = f(&w);
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "potential value on window {} is not finite",
                    format_word(&w)
                )));
            }
            values[encode(&w, k)] = v;
        }
        Ok(Self { sft, depth, values })
    }

    /// The constant potential `c` at the given depth.
    pub fn constant(sft: &Sft, depth: usize, c: f64) -> Result<Self> {
        Self::from_fn(sft, depth, |_| c)
    }

    /// Potential with independent uniform values in `[low, high)` on every
    /// admissible window.
    pub fn random<R: Rng + ?Sized>(sft: &Sft, depth: usize, rng: &mut R, low: f64, high: f64) -> Result<Self> {
        if !(low < high) {
            return Err(Error::InvalidParameter(format!("empty range [{low}, {high})")));
        }
        Self::from_fn(sft, depth, |_| rng.random_range(low..high))
    }

    /// Coin-flip weight on the full 2-shift: `log p` on symbol 0 and
    /// `log(1 - p)` on symbol 1, for `0 < p < 1/2`.
    pub fn coin_flip(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "coin-flip probability {p} must lie in (0, 1/2)"
            )));
        }
        let full = Sft::full_shift(2)?;
        Self::from_fn(&full, 1, |w| if w[0] == 0 { p.ln() } else { (1.0 - p).ln() })
    }

    /// Parity observable `(-1)^{x_1}` on the full 2-shift: `+1` on symbol 0,
    /// `-1` on symbol 1.
    pub fn parity() -> Self {
        let full = Sft::full_shift(2).expect("full 2-shift is valid");
        Self::from_fn(&full, 1, |w| if w[0] == 0 { 1.0 } else { -1.0 })
            .expect("parity values are finite")
    }

    /// Build from a serialised window table. Every admissible window must be
    /// present and no inadmissible window may appear.
    pub fn from_table(sft: &Sft, table: &PotentialTable) -> Result<Self> {
        let k = sft.alphabet_size();
        let depth = table.depth;
        if depth == 0 {
            return Err(Error::InvalidParameter("potential depth must be positive".into()));
        }
        let size = table_size(k, depth)?;
        let mut values = vec![f64::NAN; size];
        for (key, &v) in &table.values {
            let w = parse_word(key)?;
            if w.len() != depth {
                return Err(Error::WindowLength {
                    expected: depth,
                    got: w.len(),
                });
            }
            if !sft.is_admissible_word(&w) {
                return Err(Error::InadmissibleWindow { window: w });
            }
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("value on window {key} is not finite")));
            }
            values[encode(&w, k)] = v;
        }
        if let Some(missing) = sft
            .admissible_words(depth)
            .into_iter()
            .find(|w| values[encode(w, k)].is_nan())
        {
            return Err(Error::InvalidParameter(format!(
                "no value for admissible window {}",
                format_word(&missing)
            )));
        }
        Ok(Self {
            sft: Arc::new(sft.clone()),
            depth,
            values,
        })
    }

    pub fn to_table(&self) -> PotentialTable {
        PotentialTable {
            depth: self.depth,
            values: self.windows().map(|(w, v)| (format_word(&w), v)).collect(),
        }
    }

    pub fn sft(&self) -> &Sft {
        &self.sft
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Admissible windows with their values, in lexicographic order.
    pub fn windows(&self) -> impl Iterator<Item = (Vec<Symbol>, f64)> + '_ {
        let k = self.sft.alphabet_size();
        self.sft
            .admissible_words(self.depth)
            .into_iter()
            .map(move |w| {
                let v = self.values[encode(&w, k)];
                (w, v)
            })
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| !v.is_nan())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| !v.is_nan())
            .fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Value on a window of exactly `depth` admissible symbols.
    pub fn evaluate(&self, window: &[Symbol]) -> Result<f64> {
        if window.len() != self.depth {
            return Err(Error::WindowLength {
                expected: self.depth,
                got: window.len(),
            });
        }
        if !self.sft.is_admissible_word(window) {
            return Err(Error::InadmissibleWindow {
                window: window.to_vec(),
            });
        }
        Ok(self.values[encode(window, self.sft.alphabet_size())])
    }

    /// Table lookup without admissibility checks; the window must be admissible
    /// and have length `depth`.
    #[inline]
    pub(crate) fn value_unchecked(&self, window: &[Symbol]) -> f64 {
        self.values[encode(window, self.sft.alphabet_size())]
    }

    /// Sum of the potential over all `n` windows of a cyclic word, windows
    /// wrapping around the end of the word.
    pub fn cyclic_sum(&self, word: &[Symbol]) -> f64 {
        let n = word.len();
        if n == 0 {
            return 0.0;
        }
        let k = self.sft.alphabet_size();
        let size = self.values.len();
        let mut code = 0usize;
        for j in 0..self.depth {
            code = code * k + word[j % n] as usize;
        }
        let mut acc = KahanSum::new();
        for i in 0..n {
            acc.add(self.values[code]);
            code = (code * k + word[(i + self.depth) % n] as usize) % size;
        }
        acc.value()
    }

    /// Same function expressed at a larger depth.
    pub fn refine_depth(&self, depth: usize) -> Result<Self> {
        if depth < self.depth {
            return Err(Error::InvalidParameter(format!(
                "cannot refine depth {} down to {depth}",
                self.depth
            )));
        }
        if depth == self.depth {
            return Ok(self.clone());
        }
        let k = self.sft.alphabet_size();
        let shift = k.pow((depth - self.depth) as u32);
        Self::from_fn_arc(self.sft.clone(), depth, &mut |w| self.values[encode(w, k) / shift])
    }

    /// `κ∘σ − κ`: the depth-`k+1` potential `κ(x₂…x_{k+1}) − κ(x₁…x_k)`.
    pub fn coboundary_of(kappa: &Self) -> Self {
        let k = kappa.depth;
        Self::from_fn_arc(kappa.sft.clone(), k + 1, &mut |w| {
            kappa.value_unchecked(&w[1..]) - kappa.value_unchecked(&w[..k])
        })
        .expect("coboundary of a valid potential is valid")
    }

    /// Pointwise `Σ c_i p_i` after refining every input to the largest depth.
    pub fn linear_combination(coeffs: &[f64], potentials: &[&Self]) -> Result<Self> {
        if coeffs.len() != potentials.len() || potentials.is_empty() {
            return Err(Error::InvalidParameter(
                "need one coefficient per potential and at least one potential".into(),
            ));
        }
        let first = potentials[0];
        if potentials.iter().any(|p| p.sft != first.sft) {
            return Err(Error::MismatchedSft);
        }
        let depth = potentials.iter().map(|p| p.depth).max().unwrap_or(1);
        let refined: Vec<Self> = potentials
            .iter()
            .map(|p| p.refine_depth(depth))
            .collect::<Result<_>>()?;
        let k = first.sft.alphabet_size();
        Self::from_fn_arc(first.sft.clone(), depth, &mut |w| {
            let code = encode(w, k);
            coeffs
                .iter()
                .zip(&refined)
                .map(|(c, p)| c * p.values[code])
                .sum()
        })
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        Self::linear_combination(&[a, b], &[self, other])
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            sft: self.sft.clone(),
            depth: self.depth,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add_constant(&self, c: f64) -> Self {
        Self {
            sft: self.sft.clone(),
            depth: self.depth,
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }
}

fn table_size(k: usize, depth: usize) -> Result<usize> {
    u32::try_from(depth)
        .ok()
        .and_then(|d| k.checked_pow(d))
        .filter(|&s| s <= MAX_TABLE_SIZE)
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "window table for alphabet {k} and depth {depth} is too large"
            ))
        })
}

#[inline]
fn encode(window: &[Symbol], k: usize) -> usize {
    window.iter().fold(0usize, |acc, &s| acc * k + s as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbits::{birkhoff_sum, enumerate_closed_orbits, DEFAULT_ORBIT_BUDGET};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn evaluate_examples() {
        let psi = LocallyConstantPotential::coin_flip(0.3).unwrap();
        assert_eq!(psi.evaluate(&[0]).unwrap(), 0.3f64.ln());
        let phi = LocallyConstantPotential::parity();
        assert_eq!(phi.evaluate(&[1]).unwrap(), -1.0);
        let gm = Sft::golden_mean();
        let zero = LocallyConstantPotential::constant(&gm, 2, 0.0).unwrap();
        assert_eq!(zero.evaluate(&[1, 0]).unwrap(), 0.0);
        assert!(matches!(
            zero.evaluate(&[1, 1]),
            Err(Error::InadmissibleWindow { .. })
        ));
        assert!(matches!(
            zero.evaluate(&[1]),
            Err(Error::WindowLength { .. })
        ));
    }

    #[test]
    fn coin_flip_range_and_normalisation() {
        let psi = LocallyConstantPotential::coin_flip(0.3).unwrap();
        assert_eq!(psi.evaluate(&[1]).unwrap(), 0.7f64.ln());
        for p in [0.01, 0.2, 0.3, 0.49] {
            let psi = LocallyConstantPotential::coin_flip(p).unwrap();
            let total = psi.evaluate(&[0]).unwrap().exp() + psi.evaluate(&[1]).unwrap().exp();
            assert!((total - 1.0).abs() < 1e-15);
        }
        assert!(LocallyConstantPotential::coin_flip(0.5).is_err());
        assert!(LocallyConstantPotential::coin_flip(0.0).is_err());
    }

    #[test]
    fn coboundary_examples() {
        let full = Sft::full_shift(2).unwrap();
        let c = LocallyConstantPotential::constant(&full, 1, 3.0).unwrap();
        let cob = LocallyConstantPotential::coboundary_of(&c);
        assert!(cob.windows().all(|(_, v)| v == 0.0));

        let kappa = LocallyConstantPotential::from_fn(&full, 1, |w| w[0] as f64).unwrap();
        let phi = LocallyConstantPotential::coboundary_of(&kappa);
        assert_eq!(phi.depth(), 2);
        assert_eq!(phi.evaluate(&[0, 1]).unwrap(), 1.0);
        assert_eq!(phi.evaluate(&[1, 0]).unwrap(), -1.0);
        assert_eq!(phi.cyclic_sum(&[0, 1]), 0.0);
    }

    #[test]
    fn random_coboundary_has_zero_periods() {
        let full = Sft::full_shift(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let kappa = LocallyConstantPotential::random(&full, 2, &mut rng, -1.0, 1.0).unwrap();
        let phi = LocallyConstantPotential::coboundary_of(&kappa);
        for n in 1..=12 {
            let tol = 1e-12 * n as f64 * kappa.max_abs();
            for orbit in enumerate_closed_orbits(&full, n, DEFAULT_ORBIT_BUDGET).unwrap() {
                assert!(birkhoff_sum(&orbit, &phi).abs() <= tol, "{orbit}");
            }
        }
    }

    #[test]
    fn linear_combination_examples() {
        let psi = LocallyConstantPotential::coin_flip(0.3).unwrap();
        let phi = LocallyConstantPotential::parity();
        let same = LocallyConstantPotential::linear_combination(&[1.0, 0.0], &[&phi, &psi]).unwrap();
        assert_eq!(same, phi);
        let sum = LocallyConstantPotential::linear_combination(&[1.0, 1.0], &[&psi, &phi]).unwrap();
        assert_eq!(sum.evaluate(&[0]).unwrap(), 0.3f64.ln() + 1.0);

        let full = Sft::full_shift(2).unwrap();
        let deep = LocallyConstantPotential::constant(&full, 3, 1.0).unwrap();
        let mixed = psi.combine(1.0, &deep, 0.0).unwrap();
        assert_eq!(mixed, psi.refine_depth(3).unwrap());

        let gm = Sft::golden_mean();
        let other = LocallyConstantPotential::constant(&gm, 1, 1.0).unwrap();
        assert_eq!(
            psi.combine(1.0, &other, 1.0).unwrap_err(),
            Error::MismatchedSft
        );
    }

    #[test]
    fn refine_examples() {
        let phi = LocallyConstantPotential::parity();
        let r2 = phi.refine_depth(2).unwrap();
        assert_eq!(r2.evaluate(&[0, 1]).unwrap(), 1.0);
        let twice = r2.refine_depth(4).unwrap();
        assert_eq!(twice, phi.refine_depth(4).unwrap());
        assert!(r2.refine_depth(1).is_err());
    }

    #[test]
    fn refinement_preserves_birkhoff_sums_exactly() {
        let gm = Sft::golden_mean();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = LocallyConstantPotential::random(&gm, 2, &mut rng, -2.0, 2.0).unwrap();
        let r = p.refine_depth(4).unwrap();
        for n in 1..=10 {
            for orbit in enumerate_closed_orbits(&gm, n, DEFAULT_ORBIT_BUDGET).unwrap() {
                assert_eq!(birkhoff_sum(&orbit, &p), birkhoff_sum(&orbit, &r));
            }
        }
    }

    #[test]
    fn table_round_trip_and_validation() {
        let gm = Sft::golden_mean();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = LocallyConstantPotential::random(&gm, 2, &mut rng, -1.0, 1.0).unwrap();
        let table = p.to_table();
        assert_eq!(table.values.len(), 3);
        assert_eq!(LocallyConstantPotential::from_table(&gm, &table).unwrap(), p);

        let mut bad = table.clone();
        bad.values.insert("11".into(), 0.0);
        assert!(matches!(
            LocallyConstantPotential::from_table(&gm, &bad),
            Err(Error::InadmissibleWindow { .. })
        ));
        let mut missing = table;
        missing.values.remove("00");
        assert!(LocallyConstantPotential::from_table(&gm, &missing).is_err());
    }

    #[test]
    fn json_schema_shape() {
        let table = LocallyConstantPotential::parity().to_table();
        let json = serde_json::to_string(&table).unwrap();
        assert_eq!(json, r#"{"depth":1,"values":{"0":1.0,"1":-1.0}}"#);
    }
}
