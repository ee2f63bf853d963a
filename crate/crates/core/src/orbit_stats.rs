//! Weighted measures on closed orbits and the distributional statistics
//! computed from them.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{linear_fit, log_sum_exp, standard_normal_cdf, KahanSum};
use crate::orbits::{birkhoff_sum, enumerate_closed_orbits, ClosedOrbit};
use crate::potential::LocallyConstantPotential;
use crate::sft::Sft;

/// Scale below which a normalised sample is refused.
pub const DEGENERATE_SCALE: f64 = 1e-8;

/// How an orbit of prime period `d` contributes to a weighted total.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplicityConvention {
    /// Each periodic point counts once: an orbit of prime period `d` carries
    /// `d·exp(ℓ_ψ)`, so totals equal weighted traces.
    PointCount,
    /// Each orbit carries `exp(ℓ_ψ)`.
    OrbitCount,
}

impl MultiplicityConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PointCount => "point_count",
            Self::OrbitCount => "orbit_count",
        }
    }

    fn log_factor(self, orbit: &ClosedOrbit) -> f64 {
        match self {
            Self::PointCount => (orbit.von_mangoldt() as f64).ln(),
            Self::OrbitCount => 0.0,
        }
    }
}

/// Which orbits a measure lives on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MeasureDomain {
    /// Closed orbits of base length exactly `n`.
    Discrete { n: usize },
    /// Flow orbits with length in `(t, t + delta]`.
    Flow { t: f64, delta: f64 },
}

impl MeasureDomain {
    /// The length used to normalise Birkhoff sums: `n`, or `T` for flows.
    pub fn scale_length(&self) -> f64 {
        match *self {
            Self::Discrete { n } => n as f64,
            Self::Flow { t, .. } => t,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub orbit: ClosedOrbit,
    /// Probability mass.
    pub weight: f64,
    /// `ℓ_ψ(γ)`.
    pub log_weight: f64,
}

/// A probability measure on finitely many closed orbits with masses
/// proportional to `exp(ℓ_ψ(γ))` (times the multiplicity factor).
#[derive(Clone, Debug)]
pub struct WeightedOrbitMeasure {
    domain: MeasureDomain,
    convention: MultiplicityConvention,
    atoms: Vec<Atom>,
    log_normalizer: f64,
}

impl WeightedOrbitMeasure {
    /// Normalise `(orbit, ℓ_ψ)` pairs into a probability measure.
    pub fn from_log_weights(
        domain: MeasureDomain,
        convention: MultiplicityConvention,
        orbits: Vec<(ClosedOrbit, f64)>,
    ) -> Result<Self> {
        if orbits.is_empty() {
            return Err(Error::EmptyWindow);
        }
        let raw: Vec<f64> = orbits
            .iter()
            .map(|(o, l)| convention.log_factor(o) + l)
            .collect();
        let log_normalizer = log_sum_exp(&raw);
        let atoms = orbits
            .into_iter()
            .zip(raw)
            .map(|((orbit, log_weight), r)| Atom {
                orbit,
                weight: (r - log_normalizer).exp(),
                log_weight,
            })
            .collect();
        Ok(Self {
            domain,
            convention,
            atoms,
            log_normalizer,
        })
    }

    pub fn domain(&self) -> MeasureDomain {
        self.domain
    }

    pub fn convention(&self) -> MultiplicityConvention {
        self.convention
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// `log Σ` of the unnormalised atom weights.
    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    /// Total mass on orbits that are proper powers.
    pub fn non_prime_mass(&self) -> f64 {
        self.atoms
            .iter()
            .filter(|a| !a.orbit.is_prime())
            .map(|a| a.weight)
            .collect::<KahanSum>()
            .value()
    }

    /// `Σ weight · f(orbit)`.
    pub fn expectation<F: Fn(&ClosedOrbit) -> f64>(&self, f: F) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.weight * f(&a.orbit))
            .collect::<KahanSum>()
            .value()
    }
}

/// `μ_{n,ψ}` over all closed orbits of length `n`, in the point-count
/// convention.
pub fn weighted_orbit_measure(
    sft: &Sft,
    psi: &LocallyConstantPotential,
    n: usize,
    budget: usize,
) -> Result<WeightedOrbitMeasure> {
    if psi.sft() != sft {
        return Err(Error::MismatchedSft);
    }
    let orbits = enumerate_closed_orbits(sft, n, budget)?;
    let pairs: Vec<(ClosedOrbit, f64)> = orbits
        .into_par_iter()
        .map(|o| {
            let l = birkhoff_sum(&o, psi);
            (o, l)
        })
        .collect();
    WeightedOrbitMeasure::from_log_weights(
        MeasureDomain::Discrete { n },
        MultiplicityConvention::PointCount,
        pairs,
    )
}

/// A finitely supported distribution on the real line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
    masses: Vec<f64>,
}

impl EmpiricalDistribution {
    /// Sort by value, merge equal values and normalise the masses.
    pub fn new(points: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut points: Vec<(f64, f64)> = points.into_iter().filter(|&(_, m)| m > 0.0).collect();
        if points.is_empty() {
            return Err(Error::InvalidParameter("empty distribution".into()));
        }
        if points.iter().any(|(v, m)| !v.is_finite() || !m.is_finite()) {
            return Err(Error::InvalidParameter("distribution has non-finite entries".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = points.iter().map(|p| p.1).collect::<KahanSum>().value();
        let mut values: Vec<f64> = Vec::with_capacity(points.len());
        let mut masses: Vec<f64> = Vec::with_capacity(points.len());
        for (v, m) in points {
            if values.last() == Some(&v) {
                *masses.last_mut().expect("parallel vectors") += m / total;
            } else {
                values.push(v);
                masses.push(m / total);
            }
        }
        Ok(Self { values, masses })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mean(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.masses)
            .map(|(v, m)| v * m)
            .collect::<KahanSum>()
            .value()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.values
            .iter()
            .zip(&self.masses)
            .map(|(v, m)| m * (v - mean) * (v - mean))
            .collect::<KahanSum>()
            .value()
    }

    /// `sup_x |F(x) − G(x)|` for a continuous CDF `G`, checking the left and
    /// right limits of `F` at every atom.
    pub fn ks_distance<G: Fn(f64) -> f64>(&self, cdf: G) -> f64 {
        let mut below = 0.0;
        let mut acc = KahanSum::new();
        let mut worst = 0.0f64;
        for (&v, &m) in self.values.iter().zip(&self.masses) {
            let g = cdf(v);
            acc.add(m);
            let above = acc.value().min(1.0);
            worst = worst.max((below - g).abs()).max((above - g).abs());
            below = above;
        }
        worst
    }
}

/// Law of `(ℓ_φ(γ) − L·center) / (scale·√L)` under `m`, where `L` is the
/// orbit length `n` (or `T` for flow windows).
pub fn normalized_period_sample(
    m: &WeightedOrbitMeasure,
    phi: &LocallyConstantPotential,
    center: f64,
    scale: f64,
) -> Result<EmpiricalDistribution> {
    if !(scale > DEGENERATE_SCALE) {
        return Err(Error::DegenerateVariance { sigma2: scale * scale });
    }
    let len = m.domain.scale_length();
    let denom = scale * len.sqrt();
    let points: Vec<(f64, f64)> = m
        .atoms
        .par_iter()
        .map(|a| {
            let l = birkhoff_sum(&a.orbit, phi);
            let offset = match m.domain {
                MeasureDomain::Discrete { .. } => a.orbit.length() as f64 * center,
                MeasureDomain::Flow { t, .. } => t * center,
            };
            ((l - offset) / denom, a.weight)
        })
        .collect();
    EmpiricalDistribution::new(points)
}

pub fn ks_distance_to_standard_normal(d: &EmpiricalDistribution) -> f64 {
    d.ks_distance(standard_normal_cdf)
}

/// KS distance to `Normal(0, sigma²)`.
pub fn ks_distance_to_normal(d: &EmpiricalDistribution, sigma: f64) -> f64 {
    d.ks_distance(|x| standard_normal_cdf(x / sigma))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodPredicate {
    /// `|ℓ_φ(γ)| <= tol`.
    Zero,
    /// `ℓ_φ(γ) > tol`.
    Positive,
}

impl PeriodPredicate {
    pub fn holds(self, period: f64, tol: f64) -> bool {
        match self {
            Self::Zero => period.abs() <= tol,
            Self::Positive => period > tol,
        }
    }
}

/// Default zero-period tolerance `1e-9 · n · max|φ|`.
pub fn default_period_tolerance(n: usize, phi: &LocallyConstantPotential) -> f64 {
    1e-9 * n as f64 * phi.max_abs()
}

/// Total mass of orbits whose `φ`-period satisfies the predicate.
pub fn weighted_proportion(
    m: &WeightedOrbitMeasure,
    phi: &LocallyConstantPotential,
    predicate: PeriodPredicate,
    tol: f64,
) -> Result<f64> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be nonnegative")));
    }
    let (mut hit, mut miss) = (KahanSum::new(), KahanSum::new());
    for a in &m.atoms {
        if predicate.holds(birkhoff_sum(&a.orbit, phi), tol) {
            hit.add(a.weight);
        } else {
            miss.add(a.weight);
        }
    }
    // A ratio of the two masses is exactly 0 or 1 when one side is empty.
    let (hit, miss) = (hit.value(), miss.value());
    Ok(hit / (hit + miss))
}

/// Least-squares slope of `log count` against `n` over the upper half of the
/// nonzero data points.
pub fn exponential_growth_rate(counts: &BTreeMap<usize, f64>) -> Result<f64> {
    let points: Vec<(f64, f64)> = counts
        .iter()
        .filter(|&(_, &c)| c > 0.0)
        .map(|(&n, &c)| (n as f64, c.ln()))
        .collect();
    if points.len() < 4 {
        return Err(Error::TooFewPoints {
            needed: 4,
            got: points.len(),
        });
    }
    let top = &points[points.len() / 2..];
    let xs: Vec<f64> = top.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = top.iter().map(|p| p.1).collect();
    let (slope, _, _) = linear_fit(&xs, &ys)
        .ok_or_else(|| Error::InvalidParameter("growth-rate fit is singular".into()))?;
    Ok(slope)
}
