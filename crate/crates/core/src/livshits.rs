//! Numerical Livshits checks: period scans, coboundary solving, and the
//! positive-proportion and nonpositive hypothesis tests.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::orbit_stats::{
    default_period_tolerance, exponential_growth_rate, weighted_orbit_measure, weighted_proportion,
    PeriodPredicate,
};
use crate::orbits::{map_prime_orbits, ClosedOrbit, PrimeOrbit};
use crate::potential::LocallyConstantPotential;
use crate::sft::Sft;
use crate::thermo::{equilibrium_state, pressure, variance_green_kubo, DEFAULT_MAX_LAG};

/// Residual below which a solved transfer function is accepted.
pub const COBOUNDARY_RESIDUAL: f64 = 1e-9;
/// Proportions above this count as positive upper density.
pub const PROPORTION_THRESHOLD: f64 = 0.01;
/// Largest growth rate of `Q'` accepted as subexponential.
pub const GROWTH_EPSILON: f64 = 0.02;
pub const ZERO_TEMPERATURE_GRID: [f64; 3] = [10.0, 20.0, 40.0];
pub const CERTIFICATE_LABEL: &str = "certified up to n_max and residual tolerance";

/// A closed orbit together with its `φ`-period.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    #[serde(serialize_with = "display")]
    pub orbit: ClosedOrbit,
    pub period: f64,
}

fn display<S: serde::Serializer>(o: &ClosedOrbit, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(o)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeriodSummary {
    pub n_max: usize,
    pub tol: f64,
    pub all_zero: bool,
    pub all_nonpositive: bool,
    /// First orbit, by period then word, with `|ℓ_φ| > tol`.
    pub nonzero_witness: Option<Witness>,
    /// First orbit, by period then word, with `ℓ_φ > tol`.
    pub positive_witness: Option<Witness>,
    /// The orbit attaining `max ℓ_φ(γ)/ℓ(γ)`.
    pub worst_orbit: Witness,
    pub max_orbit_average: f64,
    pub prime_orbits_checked: usize,
}

/// `φ`-periods of every prime orbit of period `1..=n_max`, indexed by period.
fn prime_period_table(
    sft: &Sft,
    phi: &LocallyConstantPotential,
    n_max: usize,
    budget: usize,
) -> Result<Vec<Vec<(PrimeOrbit, f64)>>> {
    let mut table = vec![Vec::new()];
    for n in 1..=n_max {
        table.push(map_prime_orbits(sft, n, budget, |w| {
            (PrimeOrbit::from_canonical(w), phi.cyclic_sum(w))
        })?);
    }
    Ok(table)
}

/// Scan all closed orbits of length at most `n_max`. Powers of a prime orbit
/// have proportional periods, so only prime orbits are evaluated.
pub fn check_periods(
    sft: &Sft,
    phi: &LocallyConstantPotential,
    n_max: usize,
    tol: f64,
    budget: usize,
) -> Result<PeriodSummary> {
    if phi.sft() != sft {
        return Err(Error::MismatchedSft);
    }
    let table = prime_period_table(sft, phi, n_max, budget)?;
    summarize(&table, n_max, tol)
}

fn summarize(table: &[Vec<(PrimeOrbit, f64)>], n_max: usize, tol: f64) -> Result<PeriodSummary> {
    let mut nonzero = None;
    let mut positive = None;
    let mut worst: Option<(f64, &PrimeOrbit, f64)> = None;
    let mut checked = 0;
    for (n, row) in table.iter().enumerate().skip(1) {
        for (orbit, period) in row {
            checked += 1;
            let witness = || Witness {
                orbit: ClosedOrbit::prime(orbit.clone()),
                period: *period,
            };
            if nonzero.is_none() && period.abs() > tol {
                nonzero = Some(witness());
            }
            if positive.is_none() && *period > tol {
                positive = Some(witness());
            }
            let avg = period / n as f64;
            if worst.is_none_or(|(a, _, _)| avg > a) {
                worst = Some((avg, orbit, *period));
            }
        }
    }
    let (max_avg, orbit, period) =
        worst.ok_or_else(|| Error::InvalidParameter("n_max must be positive".into()))?;
    Ok(PeriodSummary {
        n_max,
        tol,
        all_zero: nonzero.is_none(),
        all_nonpositive: positive.is_none(),
        nonzero_witness: nonzero,
        positive_witness: positive,
        worst_orbit: Witness {
            orbit: ClosedOrbit::prime(orbit.clone()),
            period,
        },
        max_orbit_average: max_avg,
        prime_orbits_checked: checked,
    })
}

#[derive(Clone, Debug)]
pub enum CoboundaryOutcome {
    Solved {
        kappa: LocallyConstantPotential,
        depth: usize,
        residual: f64,
    },
    Failed {
        best_residual: f64,
        depths_tried: Vec<usize>,
    },
}

impl CoboundaryOutcome {
    pub fn kappa(&self) -> Option<&LocallyConstantPotential> {
        match self {
            Self::Solved { kappa, .. } => Some(kappa),
            Self::Failed { .. } => None,
        }
    }

    pub fn residual(&self) -> f64 {
        match self {
            Self::Solved { residual, .. } => *residual,
            Self::Failed { best_residual, .. } => *best_residual,
        }
    }
}

/// Search for `κ` with `κ∘σ − κ = φ`, trying depths `max(k−1, 1)` up to
/// `max_depth`. Each depth is a least-squares problem over all admissible
/// windows with the gauge `κ(first block) = 0`.
pub fn solve_coboundary(
    sft: &Sft,
    phi: &LocallyConstantPotential,
    max_depth: usize,
) -> Result<CoboundaryOutcome> {
    if phi.sft() != sft {
        return Err(Error::MismatchedSft);
    }
    let k = phi.depth();
    let first = k.saturating_sub(1).max(1);
    let mut best = f64::INFINITY;
    let mut tried = Vec::new();
    for depth in first..=max_depth.max(first) {
        tried.push(depth);
        let (kappa, residual) = solve_at_depth(sft, phi, depth)?;
        best = best.min(residual);
        if residual <= COBOUNDARY_RESIDUAL {
            let rebuilt = LocallyConstantPotential::coboundary_of(&kappa);
            let d = rebuilt.depth().max(k);
            let (a, b) = (rebuilt.refine_depth(d)?, phi.refine_depth(d)?);
            let diff = a
                .windows()
                .zip(b.windows())
                .map(|((_, x), (_, y))| (x - y).abs())
                .fold(0.0, f64::max);
            if diff <= COBOUNDARY_RESIDUAL {
                return Ok(CoboundaryOutcome::Solved {
                    kappa,
                    depth,
                    residual: residual.max(diff),
                });
            }
        }
    }
    Ok(CoboundaryOutcome::Failed {
        best_residual: best,
        depths_tried: tried,
    })
}

/// Least-squares `κ` of the given depth and the max-norm residual.
fn solve_at_depth(
    sft: &Sft,
    phi: &LocallyConstantPotential,
    depth: usize,
) -> Result<(LocallyConstantPotential, f64)> {
    let blocks = sft.admissible_words(depth);
    let index: BTreeMap<&[u8], usize> = blocks.iter().enumerate().map(|(i, b)| (b.as_slice(), i)).collect();
    let len = phi.depth().max(depth + 1);
    let windows = sft.admissible_words(len);
    // Column 0 is fixed to zero by the gauge and dropped.
    let cols = blocks.len() - 1;
    let mut a = DMatrix::zeros(windows.len(), cols.max(1));
    let mut b = DVector::zeros(windows.len());
    for (r, w) in windows.iter().enumerate() {
        let head = index[&w[..depth]];
        let tail = index[&w[1..=depth]];
        if tail > 0 {
            a[(r, tail - 1)] += 1.0;
        }
        if head > 0 {
            a[(r, head - 1)] -= 1.0;
        }
        b[r] = phi.value_unchecked(&w[..phi.depth()]);
    }
    let solution = if cols == 0 {
        DVector::zeros(1)
    } else {
        a.clone()
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| Error::InvalidParameter(format!("coboundary solve failed: {e}")))?
    };
    let residual = (&a * &solution - &b).amax();
    let kappa = LocallyConstantPotential::from_fn(sft, depth, |w| {
        let i = index[w];
        if i == 0 {
            0.0
        } else {
            solution[i - 1]
        }
    })?;
    Ok((kappa, residual))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Coboundary,
    CohomologousNonpositive,
    Rejected,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Coboundary => "coboundary",
            Self::CohomologousNonpositive => "cohomologous_nonpositive",
            Self::Rejected => "rejected",
        }
    }
}

#[derive(Clone, Debug)]
pub struct LivshitsReport {
    pub verdict: Verdict,
    /// Counterexample orbit; always present when rejected.
    pub evidence: Option<Witness>,
    /// Weighted zero-period proportion per `n` (positive-proportion test).
    pub proportions: BTreeMap<usize, f64>,
    pub limsup_proportion: Option<f64>,
    pub variance_estimate: f64,
    pub kappa: Option<LocallyConstantPotential>,
    pub coboundary_residual: Option<f64>,
    pub periods: PeriodSummary,
    /// `|Q'(n)|` counting periodic points (nonpositive test).
    pub positive_point_counts: BTreeMap<usize, u64>,
    /// `|Q'(n)|` counting orbits (nonpositive test).
    pub positive_orbit_counts: BTreeMap<usize, u64>,
    pub growth_rate: Option<f64>,
    /// `(s, P(sφ)/s)` on the zero-temperature grid.
    pub zero_temperature: Vec<(f64, f64)>,
    pub label: &'static str,
}

fn tolerance_or_default(tol: Option<f64>, n: usize, phi: &LocallyConstantPotential) -> f64 {
    tol.unwrap_or_else(|| default_period_tolerance(n, phi))
}

/// Weighted zero-period proportions over `n_range`; if their limsup over the
/// upper half exceeds [`PROPORTION_THRESHOLD`], certify by period scan and
/// coboundary solve.
pub fn positive_proportion_test(
    sft: &Sft,
    phi: &LocallyConstantPotential,
    psi: &LocallyConstantPotential,
    n_range: std::ops::RangeInclusive<usize>,
    tol: Option<f64>,
    budget: usize,
) -> Result<LivshitsReport> {
    if phi.sft() != sft || psi.sft() != sft {
        return Err(Error::MismatchedSft);
    }
    let (lo, hi) = (*n_range.start(), *n_range.end());
    if lo == 0 || hi < lo {
        return Err(Error::InvalidParameter(format!("invalid length range {lo}..={hi}")));
    }
    let mut proportions = BTreeMap::new();
    for n in lo..=hi {
        let m = weighted_orbit_measure(sft, psi, n, budget)?;
        let p = weighted_proportion(&m, phi, PeriodPredicate::Zero, tolerance_or_default(tol, n, phi))?;
        proportions.insert(n, p);
    }
    let top = lo + (hi - lo) / 2;
    let limsup = proportions.range(top..).map(|(_, &p)| p).fold(0.0, f64::max);

    let periods = check_periods(sft, phi, hi, tolerance_or_default(tol, hi, phi), budget)?;
    let state = equilibrium_state(sft, psi)?;
    let variance = variance_green_kubo(&state, phi, DEFAULT_MAX_LAG)?;

    let mut report = LivshitsReport {
        verdict: Verdict::Rejected,
        evidence: periods.nonzero_witness.clone(),
        proportions,
        limsup_proportion: Some(limsup),
        variance_estimate: variance,
        kappa: None,
        coboundary_residual: None,
        periods,
        positive_point_counts: BTreeMap::new(),
        positive_orbit_counts: BTreeMap::new(),
        growth_rate: None,
        zero_temperature: Vec::new(),
        label: CERTIFICATE_LABEL,
    };
    if limsup > PROPORTION_THRESHOLD {
        let solved = solve_coboundary(sft, phi, phi.depth() + 2)?;
        report.coboundary_residual = Some(solved.residual());
        match (report.periods.all_zero, solved) {
            (true, CoboundaryOutcome::Solved { kappa, .. }) => {
                report.verdict = Verdict::Coboundary;
                report.kappa = Some(kappa);
                report.evidence = None;
            }
            (false, CoboundaryOutcome::Failed { .. }) => {}
            (zero, outcome) => {
                return Err(Error::CertificateDisagreement(format!(
                    "all periods zero up to n = {hi}: {zero}; coboundary residual {:e}",
                    outcome.residual()
                )));
            }
        }
    }
    if report.verdict == Verdict::Rejected && report.evidence.is_none() {
        return Err(Error::CertificateDisagreement(format!(
            "zero-period proportion {limsup} is small but no orbit up to n = {hi} has a nonzero period"
        )));
    }
    Ok(report)
}

/// Growth of `Q'(n) = {γ : ℓ_φ(γ) > tol}` under the unweighted count, the
/// maximal orbit average, and `P(sφ)/s` on [`ZERO_TEMPERATURE_GRID`].
pub fn nonpositive_test(
    sft: &Sft,
    phi: &LocallyConstantPotential,
    n_range: std::ops::RangeInclusive<usize>,
    tol: Option<f64>,
    budget: usize,
) -> Result<LivshitsReport> {
    if phi.sft() != sft {
        return Err(Error::MismatchedSft);
    }
    let (lo, hi) = (*n_range.start(), *n_range.end());
    if lo == 0 || hi < lo {
        return Err(Error::InvalidParameter(format!("invalid length range {lo}..={hi}")));
    }
    let table = prime_period_table(sft, phi, hi, budget)?;
    let mut points = BTreeMap::new();
    let mut orbits = BTreeMap::new();
    for n in lo..=hi {
        let t = tolerance_or_default(tol, n, phi);
        let (mut pts, mut orb) = (0u64, 0u64);
        for d in (1..=n).filter(|d| n % d == 0) {
            let reps = (n / d) as f64;
            for (_, period) in &table[d] {
                if reps * period > t {
                    pts += d as u64;
                    orb += 1;
                }
            }
        }
        points.insert(n, pts);
        orbits.insert(n, orb);
    }
    let counts: BTreeMap<usize, f64> = points.iter().map(|(&n, &c)| (n, c as f64)).collect();
    let rate = match exponential_growth_rate(&counts) {
        Ok(r) => r,
        Err(Error::TooFewPoints { .. }) if points.get(&hi) == Some(&0) => 0.0,
        Err(e) => return Err(e),
    };
    let average_tol = tol.unwrap_or_else(|| 1e-9 * phi.max_abs());
    let periods = summarize(&table, hi, tolerance_or_default(tol, hi, phi))?;
    let zero_temperature = ZERO_TEMPERATURE_GRID
        .iter()
        .map(|&s| Ok((s, pressure(&phi.scale(s))? / s)))
        .collect::<Result<Vec<_>>>()?;
    let zero = LocallyConstantPotential::constant(sft, 1, 0.0)?;
    let variance = variance_green_kubo(&equilibrium_state(sft, &zero)?, phi, DEFAULT_MAX_LAG)?;

    let accepted = rate <= GROWTH_EPSILON && periods.max_orbit_average <= average_tol;
    let evidence = if accepted {
        None
    } else {
        periods.positive_witness.clone().or_else(|| Some(periods.worst_orbit.clone()))
    };
    Ok(LivshitsReport {
        verdict: if accepted {
            Verdict::CohomologousNonpositive
        } else {
            Verdict::Rejected
        },
        evidence,
        proportions: BTreeMap::new(),
        limsup_proportion: None,
        variance_estimate: variance,
        kappa: None,
        coboundary_residual: None,
        periods,
        positive_point_counts: points,
        positive_orbit_counts: orbits,
        growth_rate: Some(rate),
        zero_temperature,
        label: CERTIFICATE_LABEL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbits::{birkhoff_sum, DEFAULT_ORBIT_BUDGET};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const B: usize = DEFAULT_ORBIT_BUDGET;

    fn full2() -> Sft {
        Sft::full_shift(2).unwrap()
    }

    #[test]
    fn period_scan_examples() {
        let sft = full2();
        let kappa = LocallyConstantPotential::from_fn(&sft, 2, |w| (3 * w[0] + w[1]) as f64).unwrap();
        let cob = LocallyConstantPotential::coboundary_of(&kappa);
        let s = check_periods(&sft, &cob, 10, 1e-9, B).unwrap();
        assert!(s.all_zero && s.all_nonpositive);
        assert!(s.max_orbit_average <= 1e-9);

        let parity = LocallyConstantPotential::parity();
        let s = check_periods(&sft, &parity, 10, 1e-9, B).unwrap();
        assert!(!s.all_zero);
        let w = s.nonzero_witness.unwrap();
        assert_eq!(w.orbit.to_string(), "(0)");
        assert_eq!(w.period, 1.0);

        let minus = LocallyConstantPotential::constant(&sft, 1, -1.0).unwrap();
        let s = check_periods(&sft, &minus, 10, 1e-9, B).unwrap();
        assert!(s.all_nonpositive && !s.all_zero);
        assert_eq!(s.max_orbit_average, -1.0);
    }

    #[test]
    fn coboundary_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for sft in [full2(), Sft::golden_mean(), Sft::full_shift(3).unwrap()] {
            let kappa0 = LocallyConstantPotential::random(&sft, 1, &mut rng, -1.0, 1.0).unwrap();
            let phi = LocallyConstantPotential::coboundary_of(&kappa0);
            let out = solve_coboundary(&sft, &phi, phi.depth() + 2).unwrap();
            let CoboundaryOutcome::Solved { kappa, residual, .. } = out else {
                panic!("no solution");
            };
            assert!(residual <= 1e-12);
            let shift = kappa.evaluate(&[0]).unwrap() - kappa0.evaluate(&[0]).unwrap();
            for (w, v) in kappa.windows() {
                assert!((v - kappa0.evaluate(&w).unwrap() - shift).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deeper_coboundary_is_found() {
        let sft = Sft::golden_mean();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let kappa0 = LocallyConstantPotential::random(&sft, 3, &mut rng, -1.0, 1.0).unwrap();
        let phi = LocallyConstantPotential::coboundary_of(&kappa0);
        let out = solve_coboundary(&sft, &phi, 5).unwrap();
        assert!(out.kappa().is_some());
        assert!(out.residual() <= 1e-9);
    }

    #[test]
    fn parity_is_not_a_coboundary() {
        let parity = LocallyConstantPotential::parity();
        match solve_coboundary(&full2(), &parity, 3).unwrap() {
            CoboundaryOutcome::Failed { best_residual, depths_tried } => {
                assert!(best_residual > 0.1, "{best_residual}");
                assert_eq!(depths_tried, vec![1, 2, 3]);
            }
            CoboundaryOutcome::Solved { .. } => panic!("parity solved"),
        }
        let zero = LocallyConstantPotential::constant(&full2(), 1, 0.0).unwrap();
        let out = solve_coboundary(&full2(), &zero, 3).unwrap();
        assert!(out.kappa().unwrap().windows().all(|(_, v)| v == 0.0));
    }

    #[test]
    fn positive_proportion_verdicts() {
        let sft = full2();
        let psi = LocallyConstantPotential::coin_flip(0.3).unwrap();
        let kappa = LocallyConstantPotential::from_fn(&sft, 1, |w| w[0] as f64).unwrap();
        let cob = LocallyConstantPotential::coboundary_of(&kappa);
        let r = positive_proportion_test(&sft, &cob, &psi, 4..=12, None, B).unwrap();
        assert_eq!(r.verdict, Verdict::Coboundary);
        assert!(r.proportions.values().all(|&p| (p - 1.0).abs() < 1e-12));
        assert!(r.kappa.is_some());
        assert_eq!(r.label, CERTIFICATE_LABEL);

        let one = LocallyConstantPotential::constant(&sft, 1, 1.0).unwrap();
        let r = positive_proportion_test(&sft, &one, &psi, 4..=12, None, B).unwrap();
        assert_eq!(r.verdict, Verdict::Rejected);
        assert!(r.proportions.values().all(|&p| p == 0.0));

        let parity = LocallyConstantPotential::parity();
        let r = positive_proportion_test(&sft, &parity, &psi, 8..=16, None, B).unwrap();
        assert_eq!(r.verdict, Verdict::Rejected);
        let w = r.evidence.unwrap();
        assert_eq!(birkhoff_sum(&w.orbit, &parity), w.period);
        assert!((r.variance_estimate - 0.84).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_verdicts() {
        let sft = full2();
        let minus = LocallyConstantPotential::constant(&sft, 1, -1.0).unwrap();
        let r = nonpositive_test(&sft, &minus, 4..=12, None, B).unwrap();
        assert_eq!(r.verdict, Verdict::CohomologousNonpositive);
        assert_eq!(r.growth_rate, Some(0.0));

        let parity = LocallyConstantPotential::parity();
        let r = nonpositive_test(&sft, &parity, 4..=16, None, B).unwrap();
        assert_eq!(r.verdict, Verdict::Rejected);
        assert_eq!(r.evidence.as_ref().unwrap().orbit.to_string(), "(0)");
        assert!((r.growth_rate.unwrap() - 2f64.ln()).abs() < 0.1);

        let kappa = LocallyConstantPotential::from_fn(&sft, 2, |w| (w[0] + 2 * w[1]) as f64 * 0.7).unwrap();
        let phi = LocallyConstantPotential::coboundary_of(&kappa).add_constant(-0.1);
        let r = nonpositive_test(&sft, &phi, 4..=12, None, B).unwrap();
        assert_eq!(r.verdict, Verdict::CohomologousNonpositive);
        assert!((r.periods.max_orbit_average + 0.1).abs() < 1e-9);
        for w in r.zero_temperature.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-12);
        }
        for &(_, v) in &r.zero_temperature {
            assert!(r.periods.max_orbit_average <= v + 1e-8);
        }
    }

    /// Point-count `|Q'(n)|` for parity is the number of binary words of
    /// length `n` with more zeros than ones.
    #[test]
    fn parity_positive_counts_match_binomial_tail() {
        let sft = full2();
        let r = nonpositive_test(&sft, &LocallyConstantPotential::parity(), 1..=14, None, B).unwrap();
        for (&n, &count) in &r.positive_point_counts {
            let expected: u64 = (0..=n)
                .filter(|&z| 2 * z > n)
                .map(|z| (0..z).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64))
                .sum();
            assert_eq!(count, expected, "n = {n}");
        }
    }
}
