//! Suspension flows over subshifts with locally constant roofs.
//!
//! A closed flow orbit is a closed base orbit; its length is the roof's
//! Birkhoff sum. Flow-side weights give every closed orbit `exp(ℓ_ψ̄(γ))`
//! (one atom per orbit, powers included).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{linear_fit, log_sum_exp, KahanSum};
use crate::orbit_stats::{
    ks_distance_to_normal, normalized_period_sample, MeasureDomain, MultiplicityConvention,
    WeightedOrbitMeasure,
};
use crate::orbits::{map_prime_orbits, ClosedOrbit, PrimeOrbit};
use crate::potential::LocallyConstantPotential;
use crate::sft::Sft;
use crate::thermo::{equilibrium_state, integrate, pressure, variance_green_kubo, DEFAULT_MAX_LAG};

/// Residual required of the Bowen root.
pub const BOWEN_RESIDUAL: f64 = 1e-10;
/// Roofs with smaller Green-Kubo variance are treated as constant.
pub const MIN_ROOF_VARIANCE: f64 = 1e-3;
pub const CENTERING_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_FLOW_STEP: f64 = 1e-2;

#[derive(Clone, Debug)]
pub struct SuspensionFlow {
    roof: LocallyConstantPotential,
    r_min: f64,
}

impl SuspensionFlow {
    pub fn new(sft: &Sft, roof: LocallyConstantPotential) -> Result<Self> {
        if roof.sft() != sft {
            return Err(Error::MismatchedSft);
        }
        if let Some((window, value)) = roof.windows().find(|&(_, v)| !(v > 0.0)) {
            return Err(Error::NonPositiveRoof { window, value });
        }
        let r_min = roof.min_value();
        Ok(Self { roof, r_min })
    }

    pub fn base(&self) -> &Sft {
        self.roof.sft()
    }

    pub fn roof(&self) -> &LocallyConstantPotential {
        &self.roof
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    /// Largest base period that can produce a flow orbit of length `<= len`.
    pub fn max_base_period(&self, len: f64) -> usize {
        (len / self.r_min).ceil().max(0.0) as usize
    }
}

pub fn make_suspension(sft: &Sft, roof: LocallyConstantPotential) -> Result<SuspensionFlow> {
    SuspensionFlow::new(sft, roof)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowOrbit {
    #[serde(serialize_with = "display")]
    pub base_orbit: ClosedOrbit,
    pub length: f64,
}

fn display<S: serde::Serializer>(o: &ClosedOrbit, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(o)
}

/// A length window: `(t, t + delta]` or the cumulative `(0, t]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum LengthWindow {
    Window { t: f64, delta: f64 },
    Cumulative { t: f64 },
}

impl LengthWindow {
    pub fn window(t: f64, delta: f64) -> Self {
        Self::Window { t, delta }
    }

    pub fn cumulative(t: f64) -> Self {
        Self::Cumulative { t }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Window { t, delta } => t >= 0.0 && delta > 0.0 && (t + delta).is_finite(),
            Self::Cumulative { t } => t >= 0.0 && t.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid length window {self:?}")))
        }
    }

    pub fn lower(&self) -> f64 {
        match *self {
            Self::Window { t, .. } => t,
            Self::Cumulative { .. } => 0.0,
        }
    }

    pub fn upper(&self) -> f64 {
        match *self {
            Self::Window { t, delta } => t + delta,
            Self::Cumulative { t } => t,
        }
    }

    #[inline]
    pub fn contains(&self, len: f64) -> bool {
        len > self.lower() && len <= self.upper()
    }
}

/// Prime orbit data up to a base period: roof length and `ℓ_ψ̄`, per period.
struct PrimeFlowData {
    /// `by_period[d]` holds `(word if kept, roof length, ℓ_ψ̄)`.
    by_period: Vec<Vec<(Option<PrimeOrbit>, f64, f64)>>,
}

fn check_flow_budget(flow: &SuspensionFlow, n_max: usize, budget: usize) -> Result<()> {
    let mut needed: u128 = 0;
    for d in 1..=n_max {
        needed = needed.saturating_add(flow.base().count_prime_orbits(d)?);
    }
    if needed > budget as u128 {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    Ok(())
}

/// Enumerate prime orbits of base period `<= n_max`, keeping the words of
/// those with some power whose length satisfies `keep`.
fn prime_flow_data<K>(
    flow: &SuspensionFlow,
    psi_bar: &LocallyConstantPotential,
    n_max: usize,
    budget: usize,
    keep: K,
) -> Result<PrimeFlowData>
where
    K: Fn(f64) -> bool + Sync,
{
    if psi_bar.sft() != flow.base() {
        return Err(Error::MismatchedSft);
    }
    check_flow_budget(flow, n_max, budget)?;
    let mut by_period = vec![Vec::new()];
    for d in 1..=n_max {
        let max_reps = n_max / d;
        by_period.push(map_prime_orbits(flow.base(), d, usize::MAX, |w| {
            let len = flow.roof.cyclic_sum(w);
            let lpsi = psi_bar.cyclic_sum(w);
            let kept = (1..=max_reps).any(|m| keep(m as f64 * len));
            (kept.then(|| PrimeOrbit::from_canonical(w)), len, lpsi)
        })?);
    }
    Ok(PrimeFlowData { by_period })
}

/// Flow orbits with length in the window, ordered by base period, word and
/// multiplicity.
pub fn flow_orbits_in_window(
    flow: &SuspensionFlow,
    window: LengthWindow,
    budget: usize,
) -> Result<Vec<FlowOrbit>> {
    Ok(window_atoms(flow, &flow.roof, window, budget)?
        .into_iter()
        .map(|(o, len, _)| FlowOrbit {
            base_orbit: o,
            length: len,
        })
        .collect())
}

/// `(orbit, length, ℓ_ψ̄)` for every closed orbit in the window.
fn window_atoms(
    flow: &SuspensionFlow,
    psi_bar: &LocallyConstantPotential,
    window: LengthWindow,
    budget: usize,
) -> Result<Vec<(ClosedOrbit, f64, f64)>> {
    window.validate()?;
    let n_max = flow.max_base_period(window.upper());
    let data = prime_flow_data(flow, psi_bar, n_max, budget, |len| window.contains(len))?;
    let mut out = Vec::new();
    for (d, row) in data.by_period.into_iter().enumerate().skip(1) {
        for (orbit, len, lpsi) in row {
            let Some(orbit) = orbit else { continue };
            for m in 1..=n_max / d {
                let l = m as f64 * len;
                if window.contains(l) {
                    out.push((
                        ClosedOrbit::new(orbit.clone(), m)?,
                        l,
                        m as f64 * lpsi,
                    ));
                }
            }
        }
    }
    Ok(out)
}

/// The Bowen root `s*` with `P(ψ̄ − s*·roof) = 0`.
pub fn flow_pressure(flow: &SuspensionFlow, psi_bar: &LocallyConstantPotential) -> Result<f64> {
    bowen_root(flow, psi_bar)
}

fn bowen_root(flow: &SuspensionFlow, psi_bar: &LocallyConstantPotential) -> Result<f64> {
    if psi_bar.sft() != flow.base() {
        return Err(Error::MismatchedSft);
    }
    let f = |s: f64| -> Result<f64> { pressure(&psi_bar.combine(1.0, &flow.roof, -s)?) };
    let f0 = f(0.0)?;
    if f0 == 0.0 {
        return Ok(0.0);
    }
    // Grow a bracket geometrically on the side where the root lies.
    let dir = f0.signum();
    let (mut lo, mut hi) = (0.0, dir);
    let mut step = 1.0;
    let mut tries = 0;
    while f(hi)?.signum() == f0.signum() {
        lo = hi;
        step *= 2.0;
        hi += dir * step;
        tries += 1;
        if tries > 60 {
            return Err(Error::BracketFailure {
                low: 0.0f64.min(hi),
                high: 0.0f64.max(hi),
            });
        }
    }
    let (mut a, mut b) = if lo < hi { (lo, hi) } else { (hi, lo) };
    // f is decreasing: f(a) > 0 > f(b).
    while b - a > 1e-13 * a.abs().max(b.abs()).max(1.0) {
        let mid = 0.5 * (a + b);
        if f(mid)? > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let mut s = 0.5 * (a + b);
    let mut value = f(s)?;
    // Newton polish with derivative −μ_s(roof).
    for _ in 0..3 {
        if value == 0.0 {
            break;
        }
        let q = psi_bar.combine(1.0, &flow.roof, -s)?;
        let state = equilibrium_state(flow.base(), &q)?;
        let slope = -integrate(&state, &flow.roof)?;
        let next = s - value / slope;
        let v = f(next)?;
        if v.abs() >= value.abs() {
            break;
        }
        s = next;
        value = v;
    }
    if value.abs() > BOWEN_RESIDUAL {
        return Err(Error::NonConvergence {
            iterations: 0,
            gap: value.abs(),
        });
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitSelection {
    Prime,
    All,
    NonPrime,
}

impl OrbitSelection {
    fn admits(self, multiplicity: usize) -> bool {
        match self {
            Self::Prime => multiplicity == 1,
            Self::All => true,
            Self::NonPrime => multiplicity > 1,
        }
    }
}

/// `Σ exp(ℓ_ψ̄(γ))` over a window. An empty window has `count = 0`,
/// `weight = 0` and `log_weight = −∞`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeightedCount {
    pub count: usize,
    pub log_weight: f64,
    pub weight: f64,
}

impl WeightedCount {
    fn from_logs(logs: &[f64]) -> Self {
        let log_weight = log_sum_exp(logs);
        Self {
            count: logs.len(),
            log_weight,
            weight: log_weight.exp(),
        }
    }
}

pub fn weighted_count(
    flow: &SuspensionFlow,
    psi_bar: &LocallyConstantPotential,
    window: LengthWindow,
    selection: OrbitSelection,
    budget: usize,
) -> Result<WeightedCount> {
    let atoms = window_atoms(flow, psi_bar, window, budget)?;
    let logs: Vec<f64> = atoms
        .iter()
        .filter(|(o, _, _)| selection.admits(o.multiplicity))
        .map(|&(_, _, l)| l)
        .collect();
    Ok(WeightedCount::from_logs(&logs))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountingRow {
    pub t: f64,
    pub prime: WeightedCount,
    pub non_prime: WeightedCount,
    /// Prime weighted sum over `(0, T]` divided by `e^{PT}/(PT)`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountingAsymptotics {
    pub pressure: f64,
    pub rows: Vec<CountingRow>,
    /// Growth rate of the non-prime cumulative sums minus the pressure.
    pub prime_gap: f64,
    pub non_prime_rate: f64,
}

/// Cumulative prime and non-prime weighted sums on `t_grid` compared with
/// `e^{PT}/(PT)`.
pub fn verify_counting_asymptotics(
    flow: &SuspensionFlow,
    psi_bar: &LocallyConstantPotential,
    t_grid: &[f64],
    budget: usize,
) -> Result<CountingAsymptotics> {
    let p = flow_pressure(flow, psi_bar)?;
    if !(p > 0.0) {
        return Err(Error::NonPositivePressure { pressure: p });
    }
    if t_grid.is_empty() || t_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidParameter("T grid must be nonempty and positive".into()));
    }
    let t_max = t_grid.iter().copied().fold(0.0, f64::max);
    let n_max = flow.max_base_period(t_max);
    let data = prime_flow_data(flow, psi_bar, n_max, budget, |_| false)?;
    // Every closed orbit of length <= t_max as (length, ℓ_ψ̄, multiplicity).
    let mut all: Vec<(f64, f64, usize)> = Vec::new();
    for (d, row) in data.by_period.iter().enumerate().skip(1) {
        for &(_, len, lpsi) in row {
            for m in 1..=n_max / d {
                if m as f64 * len <= t_max {
                    all.push((m as f64 * len, m as f64 * lpsi, m));
                }
            }
        }
    }
    let rows: Vec<CountingRow> = t_grid
        .iter()
        .map(|&t| {
            let (mut prime, mut non_prime) = (Vec::new(), Vec::new());
            for &(len, lpsi, m) in &all {
                if len <= t {
                    if m == 1 {
                        prime.push(lpsi);
                    } else {
                        non_prime.push(lpsi);
                    }
                }
            }
            let prime = WeightedCount::from_logs(&prime);
            let non_prime = WeightedCount::from_logs(&non_prime);
            let ratio = (prime.log_weight - (p * t - (p * t).ln())).exp();
            CountingRow {
                t,
                prime,
                non_prime,
                ratio,
            }
        })
        .collect();
    let fit: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.non_prime.count > 0)
        .map(|r| (r.t, r.non_prime.log_weight))
        .collect();
    let top = &fit[fit.len() / 2..];
    let non_prime_rate = if top.len() >= 2 {
        let xs: Vec<f64> = top.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = top.iter().map(|p| p.1).collect();
        linear_fit(&xs, &ys).map(|(s, _, _)| s).unwrap_or(f64::NAN)
    } else {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: top.len(),
        });
    };
    Ok(CountingAsymptotics {
        pressure: p,
        rows,
        prime_gap: non_prime_rate - p,
        non_prime_rate,
    })
}

/// `μ_{T,Δ,ψ̄}`: weights `∝ exp(ℓ_ψ̄)` on the flow orbits of `(T, T+Δ]`.
pub fn flow_weighted_measure(
    flow: &SuspensionFlow,
    psi_bar: &LocallyConstantPotential,
    t: f64,
    delta: f64,
    budget: usize,
) -> Result<WeightedOrbitMeasure> {
    let atoms = window_atoms(flow, psi_bar, LengthWindow::window(t, delta), budget)?;
    WeightedOrbitMeasure::from_log_weights(
        MeasureDomain::Flow { t, delta },
        MultiplicityConvention::OrbitCount,
        atoms.into_iter().map(|(o, _, l)| (o, l)).collect(),
    )
}

/// Bowen root `s(t)` of `P(ψ̄ + tφ̄ − s·roof) = 0`.
pub fn bowen_root_tilted(
    flow: &SuspensionFlow,
    psi_bar: &LocallyConstantPotential,
    phi_bar: &LocallyConstantPotential,
    t: f64,
) -> Result<f64> {
    bowen_root(flow, &psi_bar.combine(1.0, phi_bar, t)?)
}

/// `σ²_flow = s''(0)` by central differences with one Richardson step.
pub fn flow_variance(
    flow: &SuspensionFlow,
    psi_bar: &LocallyConstantPotential,
    phi_bar: &LocallyConstantPotential,
    step: f64,
) -> Result<f64> {
    if !(step > 0.0 && step <= 0.1) {
        return Err(Error::InvalidParameter(format!("step {step} must lie in (0, 0.1]")));
    }
    let s0 = bowen_root_tilted(flow, psi_bar, phi_bar, 0.0)?;
    let second = |h: f64| -> Result<f64> {
        let up = bowen_root_tilted(flow, psi_bar, phi_bar, h)?;
        let down = bowen_root_tilted(flow, psi_bar, phi_bar, -h)?;
        Ok((up - 2.0 * s0 + down) / (h * h))
    };
    let d1 = second(step)?;
    let d2 = second(step / 2.0)?;
    Ok(((4.0 * d2 - d1) / 3.0).max(0.0))
}

/// Flow mean `μ(φ̄)/μ(roof)` under the base equilibrium state of
/// `ψ̄ − s*·roof`.
pub fn flow_mean(
    flow: &SuspensionFlow,
    psi_bar: &LocallyConstantPotential,
    phi_bar: &LocallyConstantPotential,
) -> Result<f64> {
    let s = flow_pressure(flow, psi_bar)?;
    let state = equilibrium_state(flow.base(), &psi_bar.combine(1.0, &flow.roof, -s)?)?;
    Ok(integrate(&state, phi_bar)? / integrate(&state, &flow.roof)?)
}

/// `φ̄ − c·roof` with `c` the flow mean, so that the result has flow mean 0.
pub fn center_flow_observable(
    flow: &SuspensionFlow,
    psi_bar: &LocallyConstantPotential,
    phi_bar: &LocallyConstantPotential,
) -> Result<(LocallyConstantPotential, f64)> {
    let c = flow_mean(flow, psi_bar, phi_bar)?;
    Ok((phi_bar.combine(1.0, &flow.roof, -c)?, c))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowCltResult {
    pub ks_distance: f64,
    pub sigma_flow: f64,
    pub atoms: usize,
    /// Mean and variance of `ℓ_φ̄/√T` under the window measure.
    pub sample_mean: f64,
    pub sample_variance: f64,
    pub flow_pressure: f64,
    pub roof_variance: f64,
}

/// KS distance of `ℓ_φ̄/√T` under `μ_{T,Δ,ψ̄}` to `Normal(0, σ²_flow)`.
pub fn flow_clt_check(
    flow: &SuspensionFlow,
    psi_bar: &LocallyConstantPotential,
    phi_bar: &LocallyConstantPotential,
    t: f64,
    delta: f64,
    budget: usize,
) -> Result<FlowCltResult> {
    let p = flow_pressure(flow, psi_bar)?;
    if !(p > 0.0) {
        return Err(Error::NonPositivePressure { pressure: p });
    }
    let state = equilibrium_state(flow.base(), &psi_bar.combine(1.0, &flow.roof, -p)?)?;
    let roof_variance = variance_green_kubo(&state, &flow.roof, DEFAULT_MAX_LAG)?;
    if !(roof_variance > MIN_ROOF_VARIANCE) {
        return Err(Error::DegenerateRoof {
            variance: roof_variance,
        });
    }
    let mean = integrate(&state, phi_bar)? / integrate(&state, &flow.roof)?;
    if mean.abs() > CENTERING_TOLERANCE {
        return Err(Error::NotCentered { mean });
    }
    let sigma2 = flow_variance(flow, psi_bar, phi_bar, DEFAULT_FLOW_STEP)?;
    if sigma2 <= 1e-8 {
        return Err(Error::DegenerateVariance { sigma2 });
    }
    let m = flow_weighted_measure(flow, psi_bar, t, delta, budget)?;
    let sample = normalized_period_sample(&m, phi_bar, 0.0, 1.0)?;
    let sigma = sigma2.sqrt();
    Ok(FlowCltResult {
        ks_distance: ks_distance_to_normal(&sample, sigma),
        sigma_flow: sigma,
        atoms: m.atoms().len(),
        sample_mean: sample.mean(),
        sample_variance: sample.variance(),
        flow_pressure: p,
        roof_variance,
    })
}

/// Sum of the orbit weights `exp(ℓ_ψ̄)` over `(0, t]` restricted to base
/// period `n` when the roof is constant 1; used to cross-check against the
/// discrete enumeration.
pub fn discrete_prime_weight(
    sft: &Sft,
    psi: &LocallyConstantPotential,
    n: usize,
    budget: usize,
) -> Result<f64> {
    let sums = map_prime_orbits(sft, n, budget, |w| psi.cyclic_sum(w).exp())?;
    Ok(sums.into_iter().collect::<KahanSum>().value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbits::{enumerate_closed_orbits, DEFAULT_ORBIT_BUDGET};
    use crate::thermo::variance_curvature;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    const B: usize = DEFAULT_ORBIT_BUDGET;

    fn full2() -> Sft {
        Sft::full_shift(2).unwrap()
    }

    fn unit_roof() -> SuspensionFlow {
        let sft = full2();
        make_suspension(&sft, LocallyConstantPotential::constant(&sft, 1, 1.0).unwrap()).unwrap()
    }

    fn tilted_roof() -> SuspensionFlow {
        let sft = full2();
        let roof = LocallyConstantPotential::from_fn(&sft, 1, |w| 1.0 + 0.2 * w[0] as f64).unwrap();
        make_suspension(&sft, roof).unwrap()
    }

    fn zero() -> LocallyConstantPotential {
        LocallyConstantPotential::constant(&full2(), 1, 0.0).unwrap()
    }

    /// Bisection on `e^{−s} + e^{−1.2 s} = 1`.
    fn scalar_bowen_oracle() -> f64 {
        let g = |s: f64| (-s).exp() + (-1.2 * s).exp() - 1.0;
        let (mut a, mut b) = (0.0, 2.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if g(m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn construction() {
        let f = tilted_roof();
        assert_eq!(f.r_min(), 1.0);
        let sft = full2();
        let bad = LocallyConstantPotential::from_fn(&sft, 1, |w| w[0] as f64).unwrap();
        assert!(matches!(
            make_suspension(&sft, bad),
            Err(Error::NonPositiveRoof { ref window, value }) if window == &vec![0] && value == 0.0
        ));
    }

    #[test]
    fn unit_roof_windows() {
        let f = unit_roof();
        let orbits = flow_orbits_in_window(&f, LengthWindow::window(2.5, 1.5), B).unwrap();
        let mut expected: Vec<ClosedOrbit> = enumerate_closed_orbits(&full2(), 3, B).unwrap();
        expected.extend(enumerate_closed_orbits(&full2(), 4, B).unwrap());
        let got: BTreeSet<String> = orbits.iter().map(|o| o.base_orbit.to_string()).collect();
        let want: BTreeSet<String> = expected.iter().map(|o| o.to_string()).collect();
        assert_eq!(got, want);
        assert!(orbits.iter().all(|o| o.length == o.base_orbit.length() as f64));
    }

    #[test]
    fn window_partition_is_exact() {
        let sft = Sft::golden_mean();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let roof = LocallyConstantPotential::random(&sft, 2, &mut rng, 0.5, 1.5).unwrap();
        let f = make_suspension(&sft, roof).unwrap();
        let key = |v: Vec<FlowOrbit>| -> BTreeSet<String> {
            v.into_iter().map(|o| o.base_orbit.to_string()).collect()
        };
        let (t, d) = (6.3, 2.1);
        let head = key(flow_orbits_in_window(&f, LengthWindow::cumulative(t), B).unwrap());
        let tail = key(flow_orbits_in_window(&f, LengthWindow::window(t, d), B).unwrap());
        let whole = key(flow_orbits_in_window(&f, LengthWindow::cumulative(t + d), B).unwrap());
        assert!(head.is_disjoint(&tail));
        assert_eq!(head.union(&tail).cloned().collect::<BTreeSet<_>>(), whole);

        let psi = LocallyConstantPotential::random(&sft, 1, &mut rng, -0.5, 0.5).unwrap();
        let w = |win| weighted_count(&f, &psi, win, OrbitSelection::All, B).unwrap();
        let (a, b, c) = (
            w(LengthWindow::cumulative(t)),
            w(LengthWindow::window(t, d)),
            w(LengthWindow::cumulative(t + d)),
        );
        assert_eq!(a.count + b.count, c.count);
        assert!((a.weight + b.weight - c.weight).abs() < 1e-12 * c.weight);
    }

    #[test]
    fn empty_window_sentinel() {
        let f = unit_roof();
        let c = weighted_count(&f, &zero(), LengthWindow::window(0.2, 0.5), OrbitSelection::All, B).unwrap();
        assert_eq!(c.count, 0);
        assert_eq!(c.weight, 0.0);
        assert_eq!(c.log_weight, f64::NEG_INFINITY);
        assert!(matches!(
            flow_weighted_measure(&f, &zero(), 0.2, 0.5, B),
            Err(Error::EmptyWindow)
        ));
    }

    #[test]
    fn unit_roof_counts_match_base() {
        let f = unit_roof();
        for n in 1..=10 {
            let win = LengthWindow::window(n as f64 - 0.5, 1.0);
            let all = weighted_count(&f, &zero(), win, OrbitSelection::All, B).unwrap();
            assert_eq!(all.count, enumerate_closed_orbits(&full2(), n, B).unwrap().len());
            let psi = LocallyConstantPotential::coin_flip(0.3).unwrap();
            let prime = weighted_count(&f, &psi, win, OrbitSelection::Prime, B).unwrap();
            let direct = discrete_prime_weight(&full2(), &psi, n, B).unwrap();
            assert!((prime.weight - direct).abs() < 1e-13 * direct.max(1e-300));
        }
    }

    #[test]
    fn bowen_root_oracles() {
        let f = unit_roof();
        assert!((flow_pressure(&f, &zero()).unwrap() - 2f64.ln()).abs() < 1e-12);
        let psi = LocallyConstantPotential::coin_flip(0.3).unwrap().add_constant(0.4);
        assert!((flow_pressure(&f, &psi).unwrap() - 0.4).abs() < 1e-12);

        let sft = full2();
        let c = 2.5;
        let g = make_suspension(&sft, LocallyConstantPotential::constant(&sft, 1, c).unwrap()).unwrap();
        assert!((flow_pressure(&g, &zero()).unwrap() - 2f64.ln() / c).abs() < 1e-12);

        let s = flow_pressure(&tilted_roof(), &zero()).unwrap();
        let oracle = scalar_bowen_oracle();
        assert!((s - oracle).abs() < 1e-10, "{s} vs {oracle}");
        assert!((s - 0.631_947_857_6).abs() < 1e-9);
        let residual = pressure(&zero().combine(1.0, tilted_roof().roof(), -s).unwrap()).unwrap();
        assert!(residual.abs() <= BOWEN_RESIDUAL);
    }

    #[test]
    fn bowen_root_decreases_with_roof() {
        let sft = full2();
        let base = tilted_roof();
        let bigger = make_suspension(&sft, base.roof().add_constant(0.3)).unwrap();
        assert!(flow_pressure(&bigger, &zero()).unwrap() < flow_pressure(&base, &zero()).unwrap());
        let negative = LocallyConstantPotential::constant(&sft, 1, -3.0).unwrap();
        let s = flow_pressure(&base, &negative).unwrap();
        assert!(s < 0.0);
    }

    #[test]
    fn flow_variance_reduces_to_discrete() {
        let f = unit_roof();
        let psi = LocallyConstantPotential::coin_flip(0.3).unwrap();
        let parity = LocallyConstantPotential::parity();
        let flow = flow_variance(&f, &psi, &parity, DEFAULT_FLOW_STEP).unwrap();
        let discrete = variance_curvature(&full2(), &psi, &parity, DEFAULT_FLOW_STEP).unwrap();
        assert!((flow - discrete).abs() < 1e-8, "{flow} vs {discrete}");
        assert!((flow - 0.84).abs() < 1e-8);
    }

    #[test]
    fn flow_measure_modulation_bound() {
        let f = tilted_roof();
        let psi = LocallyConstantPotential::coin_flip(0.3).unwrap().add_constant(1.0);
        let c = 0.7;
        let (t, delta) = (8.0, 1.0);
        let m = flow_weighted_measure(&f, &psi, t, delta, B).unwrap();
        let shifted = flow_weighted_measure(&f, &psi.add_constant(c), t, delta, B).unwrap();
        // ℓ_{ψ+c} = ℓ_ψ + c·n with n ∈ [T/r_max, (T+Δ)/r_min].
        let ratios: Vec<f64> = m
            .atoms()
            .iter()
            .zip(shifted.atoms())
            .map(|(a, b)| b.weight / a.weight)
            .collect();
        let (lo, hi) = ratios
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
        let spread = c * ((t + delta) / 1.0 - t / 1.2);
        assert!(hi / lo <= spread.exp() * (1.0 + 1e-12));

        let uniform = flow_weighted_measure(&f, &zero(), t, delta, B).unwrap();
        let w0 = uniform.atoms()[0].weight;
        assert!(uniform.atoms().iter().all(|a| (a.weight - w0).abs() < 1e-15));
        let single = flow_weighted_measure(&unit_roof(), &zero(), 0.5, 0.6, B).unwrap();
        assert_eq!(single.atoms().len(), 2);
    }

    #[test]
    fn clt_preconditions() {
        let f = tilted_roof();
        let psi = LocallyConstantPotential::coin_flip(0.3).unwrap().add_constant(1.0);
        let parity = LocallyConstantPotential::parity();
        assert!(matches!(
            flow_clt_check(&f, &psi, &parity, 8.0, 1.0, B),
            Err(Error::NotCentered { .. })
        ));
        let (centered, _) = center_flow_observable(&f, &psi, &parity).unwrap();
        assert!(flow_mean(&f, &psi, &centered).unwrap().abs() < 1e-12);
        let r = flow_clt_check(&f, &psi, &centered, 10.0, 1.0, B).unwrap();
        assert!(r.sigma_flow > 0.0 && r.ks_distance < 0.5);

        let kappa = LocallyConstantPotential::from_fn(&full2(), 1, |w| w[0] as f64).unwrap();
        let cob = LocallyConstantPotential::coboundary_of(&kappa);
        assert!(matches!(
            flow_clt_check(&f, &psi, &cob, 8.0, 1.0, B),
            Err(Error::DegenerateVariance { .. })
        ));
        assert!(matches!(
            flow_clt_check(&unit_roof(), &psi, &cob, 8.0, 1.0, B),
            Err(Error::DegenerateRoof { .. })
        ));
    }

    #[test]
    fn counting_requires_positive_pressure() {
        let f = tilted_roof();
        let psi = LocallyConstantPotential::coin_flip(0.3).unwrap();
        assert!(matches!(
            verify_counting_asymptotics(&f, &psi, &[4.0, 8.0], B),
            Err(Error::NonPositivePressure { .. })
        ));
        let r = verify_counting_asymptotics(&f, &zero(), &[6.0, 8.0, 10.0, 12.0], B).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert!(r.prime_gap < 0.0);
        let budget_err = verify_counting_asymptotics(&f, &zero(), &[30.0], 1000);
        assert!(matches!(budget_err, Err(Error::BudgetExceeded { .. })));
    }
}
