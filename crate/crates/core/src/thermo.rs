//! Pressure, equilibrium states, means and dynamical variances for locally
//! constant potentials, computed from Perron data of block transfer matrices.

use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{linear_fit, log_sum_exp_weighted, KahanSum};
use crate::orbits::{birkhoff_sum, enumerate_closed_orbits};
use crate::potential::LocallyConstantPotential;
use crate::sft::{Sft, Symbol};

/// Relative tolerance on the Collatz-Wielandt bracket of the Perron root.
pub const POWER_TOLERANCE: f64 = 1e-13;
pub const POWER_MAX_ITERATIONS: usize = 100_000;
/// Power iterations before switching to a repeated-squaring start.
const SQUARING_AFTER: usize = 2_000;
const SQUARING_MAX_DIM: usize = 512;
/// Iterations allowed after the squared start before settling for the
/// tightest bracket seen, provided it is below `STALL_TOLERANCE`. Badly
/// conditioned matrices stall a little above `POWER_TOLERANCE` from rounding.
const STALL_WINDOW: usize = 1_000;
const STALL_TOLERANCE: f64 = 1e-10;
const POWER_BOUND_STEPS: usize = 6;
pub const DEFAULT_MAX_LAG: usize = 200;
/// Largest |t| accepted by [`complex_pressure`].
pub const DEFAULT_BRANCH_RADIUS: f64 = 0.5;
const BRANCH_STEP: f64 = 0.05;
const BRANCH_MIN_STEP: f64 = 1e-4;

/// Admissible blocks of a fixed length and the one-symbol shifts between them.
#[derive(Clone, Debug)]
pub struct BlockSpace {
    block_length: usize,
    blocks: Vec<Vec<Symbol>>,
    /// `succ[i]` lists `(appended symbol, target block index)`.
    succ: Vec<Vec<(Symbol, usize)>>,
    index: Vec<usize>,
    alphabet_size: usize,
}

impl BlockSpace {
    pub fn new(sft: &Sft, block_length: usize) -> Result<Self> {
        if block_length == 0 {
            return Err(Error::InvalidParameter("block length must be positive".into()));
        }
        let k = sft.alphabet_size();
        let size = u32::try_from(block_length)
            .ok()
            .and_then(|l| k.checked_pow(l))
            .filter(|&s| s <= 1 << 24)
            .ok_or_else(|| Error::InvalidParameter(format!("block length {block_length} is too large")))?;
        let blocks = sft.admissible_words(block_length);
        let mut index = vec![usize::MAX; size];
        for (i, b) in blocks.iter().enumerate() {
            index[code(b, k)] = i;
        }
        let succ = blocks
            .iter()
            .map(|b| {
                let last = *b.last().expect("blocks are nonempty");
                (0..k)
                    .map(|c| c as Symbol)
                    .filter(|&c| sft.allows(last, c))
                    .map(|c| {
                        let target = (code(b, k) * k + c as usize) % size;
                        (c, index[target])
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            block_length,
            blocks,
            succ,
            index,
            alphabet_size: k,
        })
    }

    pub fn block_length(&self) -> usize {
        self.block_length
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Vec<Symbol>] {
        &self.blocks
    }

    pub fn successors(&self, i: usize) -> &[(Symbol, usize)] {
        &self.succ[i]
    }

    /// Index of an admissible block, if it is one.
    pub fn index_of(&self, block: &[Symbol]) -> Option<usize> {
        if block.len() != self.block_length {
            return None;
        }
        let i = self.index[code(block, self.alphabet_size)];
        (i != usize::MAX).then_some(i)
    }

    /// The length `block_length + 1` word read along the edge `i -> via c`.
    fn edge_word(&self, i: usize, c: Symbol) -> Vec<Symbol> {
        let mut w = self.blocks[i].clone();
        w.push(c);
        w
    }
}

fn code(w: &[Symbol], k: usize) -> usize {
    w.iter().fold(0, |acc, &s| acc * k + s as usize)
}

/// Block length used for a potential of the given depth.
fn block_length_for(depth: usize) -> usize {
    depth.saturating_sub(1).max(1)
}

/// Value of a depth-`d` potential on the edge word `b·c`, read from its last
/// `d` symbols.
fn edge_value(p: &LocallyConstantPotential, word: &[Symbol]) -> f64 {
    p.value_unchecked(&word[word.len() - p.depth()..])
}

/// Nonnegative matrix over admissible `(k-1)`-blocks with entry
/// `exp(ψ(window))` for each overlap-compatible pair.
#[derive(Clone, Debug)]
pub struct TransferMatrix {
    space: BlockSpace,
    /// `log_entries[i][e]` is `ψ` on the `e`-th outgoing edge of block `i`.
    log_entries: Vec<Vec<f64>>,
}

impl TransferMatrix {
    pub fn new(sft: &Sft, psi: &LocallyConstantPotential) -> Result<Self> {
        check_same(sft, psi)?;
        Self::with_block_length(psi, block_length_for(psi.depth()))
    }

    fn with_block_length(psi: &LocallyConstantPotential, block_length: usize) -> Result<Self> {
        debug_assert!(block_length + 1 >= psi.depth());
        let space = BlockSpace::new(psi.sft(), block_length)?;
        let log_entries = (0..space.len())
            .map(|i| {
                space
                    .successors(i)
                    .iter()
                    .map(|&(c, _)| edge_value(psi, &space.edge_word(i, c)))
                    .collect()
            })
            .collect();
        Ok(Self { space, log_entries })
    }

    pub fn block_length(&self) -> usize {
        self.space.block_length
    }

    pub fn states(&self) -> &[Vec<Symbol>] {
        &self.space.blocks
    }

    pub fn space(&self) -> &BlockSpace {
        &self.space
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.space.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for (&(_, j), &l) in self.space.successors(i).iter().zip(&self.log_entries[i]) {
                m[(i, j)] += l.exp();
            }
        }
        m
    }

    /// `trace(M^n)`, by dense repeated multiplication.
    pub fn weighted_trace(&self, n: usize) -> f64 {
        let m = self.to_dense();
        let mut p = DMatrix::identity(m.nrows(), m.ncols());
        for _ in 0..n {
            p = &p * &m;
        }
        p.trace()
    }

    fn max_log_entry(&self) -> f64 {
        self.log_entries
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Entries divided by `exp(shift)`, laid out like the successor lists.
    fn scaled_entries(&self, shift: f64) -> Vec<Vec<f64>> {
        self.log_entries
            .iter()
            .map(|row| row.iter().map(|l| (l - shift).exp()).collect())
            .collect()
    }
}

fn check_same(sft: &Sft, p: &LocallyConstantPotential) -> Result<()> {
    if p.sft() == sft {
        Ok(())
    } else {
        Err(Error::MismatchedSft)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PressureMethod {
    Spectral,
    OrbitSum,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PressureEstimate {
    pub value: f64,
    pub method: PressureMethod,
    pub error_bound: f64,
    pub n_used: Option<(usize, usize)>,
}

/// Perron data of a scaled transfer matrix.
struct Perron {
    /// `log` of the Perron root, including the scaling shift.
    log_root: f64,
    /// Perron root of the scaled matrix.
    root: f64,
    right: Vec<f64>,
    left: Vec<f64>,
    error_bound: f64,
}

/// Power iteration for the Perron root of a primitive sparse matrix, with
/// Collatz-Wielandt bounds `min (Mv)_i/v_i <= λ <= max (Mv)_i/v_i`.
fn perron_vector(
    space: &BlockSpace,
    entries: &[Vec<f64>],
    transpose: bool,
) -> Result<(f64, Vec<f64>, f64)> {
    let n = space.len();
    let mut v = vec![1.0; n];
    let mut u = vec![0.0; n];
    let apply = |v: &[f64], u: &mut [f64]| {
        if transpose {
            u.iter_mut().for_each(|x| *x = 0.0);
            for i in 0..n {
                for (&(_, j), &w) in space.successors(i).iter().zip(&entries[i]) {
                    u[j] += v[i] * w;
                }
            }
        } else {
            for i in 0..n {
                u[i] = space
                    .successors(i)
                    .iter()
                    .zip(&entries[i])
                    .map(|(&(_, j), &w)| w * v[j])
                    .sum();
            }
        }
    };
    let bounds = |v: &[f64], u: &[f64]| {
        v.iter().zip(u).fold((f64::INFINITY, 0.0f64), |(lo, hi), (&a, &b)| {
            let r = b / a;
            (lo.min(r), hi.max(r))
        })
    };
    let mut converged_at = None;
    let mut best_gap = f64::INFINITY;
    // Tightest bracket seen before convergence, for the rounding-floor exit.
    let mut stalled = (f64::INFINITY, 0.0, 0.0, Vec::new());
    let mut limit = POWER_MAX_ITERATIONS;
    let mut iter = 0;
    let (lo, hi) = loop {
        if iter == SQUARING_AFTER && converged_at.is_none() && n <= SQUARING_MAX_DIM {
            if let Some(start) = squared_start(space, entries, transpose) {
                v = start;
                limit = SQUARING_AFTER + STALL_WINDOW;
            }
        }
        apply(&v, &mut u);
        let (mut lo, mut hi) = bounds(&v, &u);
        if limit < POWER_MAX_ITERATIONS {
            // Bounds on λ^p from M^p, intersected. A second eigenvalue near
            // a p-th root of unity times λ leaves v inaccurate, but cancels here.
            let mut w = u.clone();
            let mut next = vec![0.0; n];
            for p in 2..=POWER_BOUND_STEPS {
                apply(&w, &mut next);
                std::mem::swap(&mut w, &mut next);
                let (a, b) = bounds(&v, &w);
                let exponent = 1.0 / p as f64;
                if a > 0.0 && b.is_finite() {
                    lo = lo.max(a.powf(exponent));
                    hi = hi.min(b.powf(exponent));
                }
            }
        }
        let gap = (hi - lo) / hi;
        let scale = u.iter().copied().fold(0.0, f64::max);
        iter += 1;
        match converged_at {
            None if gap <= POWER_TOLERANCE => {
                converged_at = Some(iter);
                best_gap = gap;
            }
            None if iter >= limit => {
                let (best, lo, hi, best_v) = std::mem::take(&mut stalled);
                if best > STALL_TOLERANCE {
                    return Err(Error::NonConvergence { iterations: iter, gap: best.min(gap) });
                }
                v = best_v;
                break (lo, hi);
            }
            None => {
                if gap < stalled.0 {
                    stalled = (gap, lo, hi, v.clone());
                }
            }
            // Keep polishing the eigenvector while the bracket still shrinks.
            Some(start) => {
                if gap >= best_gap || iter - start >= 64 {
                    break (lo, hi);
                }
                best_gap = gap;
            }
        }
        for (a, b) in v.iter_mut().zip(&u) {
            *a = b / scale;
        }
    };
    let root = 0.5 * (lo + hi);
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    Ok((root, v, (hi / lo).ln()))
}

/// Row sums of `M^(2^k)` (or column sums when `transpose`), scaled after
/// each squaring. Used when the spectral gap is too small for power
/// iteration, as happens for `sφ` with large `s`. `None` if an entry
/// underflows to zero.
fn squared_start(space: &BlockSpace, entries: &[Vec<f64>], transpose: bool) -> Option<Vec<f64>> {
    let n = space.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for (&(_, j), &w) in space.successors(i).iter().zip(&entries[i]) {
            m[(i, j)] += w;
        }
    }
    if transpose {
        m = m.transpose();
    }
    for _ in 0..80 {
        let mut next = &m * &m;
        let scale = next.max();
        if !(scale > 0.0 && scale.is_finite()) {
            return None;
        }
        next /= scale;
        // Relative per entry: small components of the Perron vector settle last.
        let change = next.iter().zip(m.iter()).fold(0.0f64, |acc, (&a, &b)| {
            if a > 0.0 { acc.max((a - b).abs() / a) } else { acc }
        });
        m = next;
        if change <= 4.0 * f64::EPSILON {
            break;
        }
    }
    let v: Vec<f64> = (0..n).map(|i| m.row(i).sum()).collect();
    let top = v.iter().copied().fold(0.0, f64::max);
    v.iter()
        .all(|&x| x > 0.0 && x.is_finite())
        .then(|| v.iter().map(|x| x / top).collect())
}

fn perron(tm: &TransferMatrix) -> Result<Perron> {
    let shift = tm.max_log_entry();
    let entries = tm.scaled_entries(shift);
    let (root, right, err_r) = perron_vector(&tm.space, &entries, false)?;
    let (_, left, err_l) = perron_vector(&tm.space, &entries, true)?;
    Ok(Perron {
        log_root: root.ln() + shift,
        root,
        right,
        left,
        error_bound: err_r.max(err_l).max(f64::EPSILON),
    })
}

/// `log` of the spectral radius of the transfer matrix of `psi`.
pub fn pressure_spectral(sft: &Sft, psi: &LocallyConstantPotential) -> Result<PressureEstimate> {
    let tm = TransferMatrix::new(sft, psi)?;
    let p = perron(&tm)?;
    Ok(PressureEstimate {
        value: p.log_root,
        method: PressureMethod::Spectral,
        error_bound: p.error_bound,
        n_used: None,
    })
}

/// Shorthand for the value of [`pressure_spectral`] on the potential's own
/// subshift.
pub fn pressure(psi: &LocallyConstantPotential) -> Result<f64> {
    pressure_spectral(psi.sft(), psi).map(|p| p.value)
}

/// `a_n = log Σ_{γ ∈ P(n)} d(γ)·exp(ℓ_ψ(γ))` with `d` the prime period, so
/// that every cyclic word of length `n` counts once.
pub fn log_orbit_sum(sft: &Sft, psi: &LocallyConstantPotential, n: usize, budget: usize) -> Result<f64> {
    let terms: Vec<(f64, f64)> = enumerate_closed_orbits(sft, n, budget)?
        .iter()
        .map(|o| (o.von_mangoldt() as f64, birkhoff_sum(o, psi)))
        .collect();
    Ok(log_sum_exp_weighted(&terms))
}

/// Pressure as the slope of `a_n` against `n` over the top half of `n_range`.
pub fn pressure_orbit_sum(
    sft: &Sft,
    psi: &LocallyConstantPotential,
    n_range: RangeInclusive<usize>,
    budget: usize,
) -> Result<PressureEstimate> {
    check_same(sft, psi)?;
    let (lo, hi) = (*n_range.start(), *n_range.end());
    if lo == 0 || hi < lo + 1 {
        return Err(Error::InvalidParameter(format!(
            "orbit-sum range {lo}..={hi} needs at least two positive lengths"
        )));
    }
    let start = (lo + hi).div_ceil(2).min(hi - 1);
    let ns: Vec<usize> = (start..=hi).collect();
    let a: Vec<f64> = ns
        .iter()
        .map(|&n| log_orbit_sum(sft, psi, n, budget))
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let (slope, _, rms) = linear_fit(&xs, &a)
        .ok_or_else(|| Error::InvalidParameter("orbit-sum fit is singular".into()))?;
    let spread = a
        .windows(2)
        .map(|w| (w[1] - w[0] - slope).abs())
        .fold(0.0, f64::max);
    Ok(PressureEstimate {
        value: slope,
        method: PressureMethod::OrbitSum,
        error_bound: rms + spread + 1e-12 * slope.abs().max(1.0),
        n_used: Some((start, hi)),
    })
}

/// Markov measure on admissible blocks realising the equilibrium state of a
/// locally constant potential.
#[derive(Clone, Debug)]
pub struct EquilibriumState {
    space: BlockSpace,
    stationary: Vec<f64>,
    /// Transition probabilities laid out like the block successor lists.
    transition: Vec<Vec<f64>>,
    entropy: f64,
    pressure: f64,
    psi: LocallyConstantPotential,
}

impl EquilibriumState {
    pub fn block_length(&self) -> usize {
        self.space.block_length
    }

    pub fn blocks(&self) -> &[Vec<Symbol>] {
        &self.space.blocks
    }

    pub fn block_stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Dense row-stochastic transition matrix over blocks.
    pub fn block_transition(&self) -> DMatrix<f64> {
        let n = self.space.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for (&(_, j), &p) in self.space.successors(i).iter().zip(&self.transition[i]) {
                m[(i, j)] += p;
            }
        }
        m
    }

    pub fn entropy(&self) -> f64 {
        self.entropy
    }

    pub fn pressure(&self) -> f64 {
        self.pressure
    }

    pub fn potential(&self) -> &LocallyConstantPotential {
        &self.psi
    }

    pub fn mean_of(&self, phi: &LocallyConstantPotential) -> Result<f64> {
        integrate(self, phi)
    }

    /// Measure of the cylinder set of an admissible word of length at least
    /// the block length.
    pub fn cylinder_probability(&self, word: &[Symbol]) -> f64 {
        let l = self.space.block_length;
        if word.len() < l {
            return self
                .space
                .blocks
                .iter()
                .zip(&self.stationary)
                .filter(|(b, _)| b.starts_with(word))
                .map(|(_, &p)| p)
                .sum();
        }
        let Some(mut i) = self.space.index_of(&word[..l]) else {
            return 0.0;
        };
        let mut prob = self.stationary[i];
        for &c in &word[l..] {
            let Some(e) = self.space.successors(i).iter().position(|&(s, _)| s == c) else {
                return 0.0;
            };
            prob *= self.transition[i][e];
            i = self.space.successors(i)[e].1;
        }
        prob
    }

    /// The same measure as a chain on longer blocks.
    fn lifted(&self, block_length: usize) -> Result<(BlockSpace, Vec<f64>, Vec<Vec<f64>>)> {
        let l = self.space.block_length;
        let space = BlockSpace::new(self.psi.sft(), block_length)?;
        let stationary = space
            .blocks
            .iter()
            .map(|b| self.cylinder_probability(b))
            .collect();
        let transition = (0..space.len())
            .map(|i| {
                let tail = self
                    .space
                    .index_of(&space.blocks[i][block_length - l..])
                    .expect("suffix of an admissible block is admissible");
                space
                    .successors(i)
                    .iter()
                    .map(|&(c, _)| {
                        let e = self
                            .space
                            .successors(tail)
                            .iter()
                            .position(|&(s, _)| s == c)
                            .expect("same last symbol, same successors");
                        self.transition[tail][e]
                    })
                    .collect()
            })
            .collect();
        Ok((space, stationary, transition))
    }
}

/// Gibbs-Markov equilibrium state of `psi` from left/right Perron vectors.
pub fn equilibrium_state(sft: &Sft, psi: &LocallyConstantPotential) -> Result<EquilibriumState> {
    let tm = TransferMatrix::new(sft, psi)?;
    let p = perron(&tm)?;
    let shift = tm.max_log_entry();
    let entries = tm.scaled_entries(shift);
    let space = tm.space;
    let n = space.len();
    let transition: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let row: Vec<f64> = space
                .successors(i)
                .iter()
                .zip(&entries[i])
                .map(|(&(_, j), &w)| w * p.right[j] / (p.root * p.right[i]))
                .collect();
            // Remove the residual normalisation error of the eigenvector.
            let total: f64 = row.iter().sum();
            row.into_iter().map(|x| x / total).collect()
        })
        .collect();
    let mut stationary: Vec<f64> = p.left.iter().zip(&p.right).map(|(l, r)| l * r).collect();
    let total: f64 = stationary.iter().sum();
    stationary.iter_mut().for_each(|x| *x /= total);

    let mut entropy = KahanSum::new();
    for i in 0..n {
        for &q in &transition[i] {
            if q > 0.0 {
                entropy.add(-stationary[i] * q * q.ln());
            }
        }
    }
    Ok(EquilibriumState {
        space,
        stationary,
        transition,
        entropy: entropy.value().max(0.0),
        pressure: p.log_root,
        psi: psi.clone(),
    })
}

/// `μ_ψ(φ)`: sum over admissible windows of cylinder measure times `φ`.
pub fn integrate(state: &EquilibriumState, phi: &LocallyConstantPotential) -> Result<f64> {
    check_same(state.psi.sft(), phi)?;
    let l = state.space.block_length;
    let d = phi.depth();
    let mut acc = KahanSum::new();
    if d <= l + 1 {
        for i in 0..state.space.len() {
            let b = &state.space.blocks[i];
            if d <= l {
                acc.add(state.stationary[i] * phi.value_unchecked(&b[..d]));
                continue;
            }
            for (&(c, _), &q) in state.space.successors(i).iter().zip(&state.transition[i]) {
                let w = state.space.edge_word(i, c);
                acc.add(state.stationary[i] * q * phi.value_unchecked(&w));
            }
        }
    } else {
        for w in state.psi.sft().admissible_words(d) {
            acc.add(state.cylinder_probability(&w) * phi.value_unchecked(&w));
        }
    }
    Ok(acc.value())
}

/// Green-Kubo sum `C(0) + 2 Σ_{j=1}^{max_lag} C(j)` with exact autocovariances
/// of the centred observable under the stationary block chain.
pub fn variance_green_kubo(
    state: &EquilibriumState,
    phi: &LocallyConstantPotential,
    max_lag: usize,
) -> Result<f64> {
    let (c, _) = autocovariances(state, phi, max_lag)?;
    let c0 = c[0];
    if c0 > 0.0 && c[max_lag].abs() > 1e-10 * c0 {
        log::warn!(
            "autocovariance has not decayed at lag {max_lag}: C = {:e}, C(0) = {c0:e}",
            c[max_lag]
        );
    }
    let mut acc = KahanSum::new();
    acc.add(c0);
    for &cj in &c[1..] {
        acc.add(2.0 * cj);
    }
    Ok(acc.value().max(0.0))
}

/// Autocovariances `C(0..=max_lag)` and the mean of `phi`.
pub fn autocovariances(
    state: &EquilibriumState,
    phi: &LocallyConstantPotential,
    max_lag: usize,
) -> Result<(Vec<f64>, f64)> {
    check_same(state.psi.sft(), phi)?;
    let l = state.space.block_length.max(phi.depth());
    let lifted;
    let (space, stationary, transition) = if l == state.space.block_length {
        (&state.space, &state.stationary, &state.transition)
    } else {
        lifted = state.lifted(l)?;
        (&lifted.0, &lifted.1, &lifted.2)
    };
    let d = phi.depth();
    let raw: Vec<f64> = space.blocks.iter().map(|b| phi.value_unchecked(&b[..d])).collect();
    let mean: f64 = raw
        .iter()
        .zip(stationary)
        .map(|(f, p)| f * p)
        .collect::<KahanSum>()
        .value();
    let f: Vec<f64> = raw.iter().map(|x| x - mean).collect();
    let mut g = f.clone();
    let mut out = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        if lag > 0 {
            g = (0..space.len())
                .map(|i| {
                    space
                        .successors(i)
                        .iter()
                        .zip(&transition[i])
                        .map(|(&(_, j), &q)| q * g[j])
                        .sum()
                })
                .collect();
        }
        let c: KahanSum = (0..space.len()).map(|i| stationary[i] * f[i] * g[i]).collect();
        out.push(c.value());
    }
    Ok((out, mean))
}

/// Second derivative of `t -> P(ψ + tφ)` at 0 by central differences with
/// one Richardson step between `h` and `h/2`.
pub fn variance_curvature(
    sft: &Sft,
    psi: &LocallyConstantPotential,
    phi: &LocallyConstantPotential,
    step: f64,
) -> Result<f64> {
    if !(step > 0.0 && step <= 0.1) {
        return Err(Error::InvalidParameter(format!("curvature step {step} must lie in (0, 0.1]")));
    }
    check_same(sft, psi)?;
    let p = |t: f64| -> Result<f64> {
        let q = LocallyConstantPotential::linear_combination(&[1.0, t], &[psi, phi])?;
        pressure(&q)
    };
    let p0 = p(0.0)?;
    let second = |h: f64| -> Result<f64> { Ok((p(h)? - 2.0 * p0 + p(-h)?) / (h * h)) };
    let d1 = second(step)?;
    let d2 = second(step / 2.0)?;
    Ok(((4.0 * d2 - d1) / 3.0).max(0.0))
}

/// Central first difference of `t -> P(ψ + tφ)` at 0; approximates `μ_ψ(φ)`.
pub fn pressure_derivative(
    psi: &LocallyConstantPotential,
    phi: &LocallyConstantPotential,
    step: f64,
) -> Result<f64> {
    let p = |t: f64| -> Result<f64> {
        pressure(&LocallyConstantPotential::linear_combination(&[1.0, t], &[psi, phi])?)
    };
    Ok((p(step)? - p(-step)?) / (2.0 * step))
}

/// Eigenvalues of the transfer matrix with complex weights
/// `exp(ψ(w) + i t φ(w))`, computed after dividing by `exp(shift)`.
fn complex_spectrum(
    space: &BlockSpace,
    psi: &LocallyConstantPotential,
    phi: &LocallyConstantPotential,
    shift: f64,
    t: f64,
) -> Result<Vec<Complex64>> {
    let n = space.len();
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        for &(c, j) in space.successors(i) {
            let w = space.edge_word(i, c);
            let z = Complex64::new(edge_value(psi, &w) - shift, t * edge_value(phi, &w));
            m[(i, j)] += z.exp();
        }
    }
    let eig = m
        .eigenvalues()
        .ok_or(Error::NonConvergence { iterations: 0, gap: f64::NAN })?;
    Ok(eig.iter().copied().collect())
}

/// `s(t) = P(ψ + itφ)`: the complex log of the eigenvalue branch continuously
/// connected to the Perron root at `t = 0`.
pub fn complex_pressure(
    sft: &Sft,
    psi: &LocallyConstantPotential,
    phi: &LocallyConstantPotential,
    t: f64,
) -> Result<Complex64> {
    complex_pressure_with_radius(sft, psi, phi, t, DEFAULT_BRANCH_RADIUS)
}

pub fn complex_pressure_with_radius(
    sft: &Sft,
    psi: &LocallyConstantPotential,
    phi: &LocallyConstantPotential,
    t: f64,
    radius: f64,
) -> Result<Complex64> {
    check_same(sft, psi)?;
    check_same(sft, phi)?;
    if !(t.abs() <= radius) {
        return Err(Error::InvalidParameter(format!(
            "|t| = {} exceeds the branch radius {radius}",
            t.abs()
        )));
    }
    let depth = psi.depth().max(phi.depth());
    let space = BlockSpace::new(sft, block_length_for(depth))?;
    let shift = psi.windows().map(|(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
    let p0 = pressure(psi)?;
    let mut lambda = Complex64::new((p0 - shift).exp(), 0.0);
    let mut arg = 0.0;
    let mut tau = 0.0f64;
    let target = t;
    let direction = target.signum();
    let mut step = BRANCH_STEP;
    while tau != target {
        let next = if (target - tau).abs() <= step { target } else { tau + direction * step };
        let eig = complex_spectrum(&space, psi, phi, shift, next)?;
        let mut dist: Vec<(f64, Complex64)> = eig.iter().map(|&z| ((z - lambda).norm(), z)).collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (best, z) = dist[0];
        let second = dist.get(1).map_or(f64::INFINITY, |d| d.0);
        if second <= 2.0 * best + 1e-12 * lambda.norm() {
            if step / 2.0 >= BRANCH_MIN_STEP {
                step /= 2.0;
                continue;
            }
            return Err(Error::BranchAmbiguity {
                t: next,
                nearest: best,
                second,
            });
        }
        arg += (z / lambda).arg();
        lambda = z;
        tau = next;
        step = BRANCH_STEP;
    }
    Ok(Complex64::new(lambda.norm().ln() + shift, arg))
}
