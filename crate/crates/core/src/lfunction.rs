//! Truncated logarithmic derivative of the weighted orbit L-function,
//!
//! `η(s,t) = Σ_{γ prime} Σ_{n≥1} ℓ(γ) exp(n(ℓ_ψ(γ) − s ℓ(γ) + i t ℓ_φ(γ)))`,
//!
//! with pole location and `s(t)` fitting.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{fit_powers, KahanSum};
use crate::orbits::map_prime_orbits;
use crate::potential::LocallyConstantPotential;
use crate::sft::Sft;
use crate::suspension::{flow_pressure, SuspensionFlow};
use crate::thermo::{complex_pressure, pressure, TransferMatrix};

pub const DEFAULT_MARGIN: f64 = 1e-3;
pub const DEFAULT_MAX_REPETITION: usize = 8;
/// Largest relative tail bound of a sample used in pole fitting.
pub const POLE_FIT_MAX_TAIL: f64 = 1e-3;
pub const POLE_FIT_MIN_POINTS: usize = 8;
pub const POLE_FIT_MAX_RESIDUAL: f64 = 0.05;

#[derive(Clone, Debug)]
pub enum LSystem {
    Discrete(Sft),
    Flow(SuspensionFlow),
}

/// Per-prime-orbit data `(ℓ, ℓ_ψ, ℓ_φ)`, grouped implicitly by base period.
#[derive(Clone, Debug)]
pub struct LSeriesTruncation {
    system: LSystem,
    psi: LocallyConstantPotential,
    phi: LocallyConstantPotential,
    /// Roof, constant 1 for discrete systems.
    roof: LocallyConstantPotential,
    max_base_period: usize,
    max_repetition: usize,
    margin: f64,
    pressure: f64,
    orbits: Vec<(f64, f64, f64)>,
}

impl LSeriesTruncation {
    pub fn new(
        system: LSystem,
        psi: LocallyConstantPotential,
        phi: LocallyConstantPotential,
        max_base_period: usize,
        max_repetition: usize,
        budget: usize,
    ) -> Result<Self> {
        if max_base_period == 0 || max_repetition == 0 {
            return Err(Error::InvalidParameter("truncation bounds must be at least 1".into()));
        }
        let (sft, roof, p) = match &system {
            LSystem::Discrete(sft) => (
                sft.clone(),
                LocallyConstantPotential::constant(sft, 1, 1.0)?,
                pressure(&psi)?,
            ),
            LSystem::Flow(flow) => (flow.base().clone(), flow.roof().clone(), flow_pressure(flow, &psi)?),
        };
        if psi.sft() != &sft || phi.sft() != &sft {
            return Err(Error::MismatchedSft);
        }
        let mut needed: u128 = 0;
        for d in 1..=max_base_period {
            needed = needed.saturating_add(sft.count_prime_orbits(d)?);
        }
        if needed > budget as u128 {
            return Err(Error::BudgetExceeded { needed, budget });
        }
        let mut orbits = Vec::new();
        for d in 1..=max_base_period {
            orbits.extend(map_prime_orbits(&sft, d, usize::MAX, |w| {
                (roof.cyclic_sum(w), psi.cyclic_sum(w), phi.cyclic_sum(w))
            })?);
        }
        Ok(Self {
            system,
            psi,
            phi,
            roof,
            max_base_period,
            max_repetition,
            margin: DEFAULT_MARGIN,
            pressure: p,
            orbits,
        })
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    pub fn system(&self) -> &LSystem {
        &self.system
    }

    pub fn psi(&self) -> &LocallyConstantPotential {
        &self.psi
    }

    pub fn phi(&self) -> &LocallyConstantPotential {
        &self.phi
    }

    /// Pressure used for the convergence check: discrete pressure of `ψ` or
    /// the flow pressure.
    pub fn pressure(&self) -> f64 {
        self.pressure
    }

    pub fn max_base_period(&self) -> usize {
        self.max_base_period
    }

    pub fn max_repetition(&self) -> usize {
        self.max_repetition
    }

    pub fn prime_orbit_count(&self) -> usize {
        self.orbits.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EtaValue {
    pub value: Complex64,
    /// Bound on the absolute value of everything the truncation omits.
    pub tail_bound: f64,
}

impl EtaValue {
    pub fn relative_tail(&self) -> f64 {
        self.tail_bound / self.value.norm()
    }
}

/// Truncated `η(s,t)` with a tail bound.
///
/// Omitted terms are (i) all powers of prime orbits with base period above
/// the cutoff `D`, bounded through `tr(M^N) <= dim·λ^N` for the transfer
/// matrix of `ψ − Re(s)·roof`, and (ii) repetitions beyond `R` of the
/// retained orbits, summed exactly as geometric tails.
pub fn eta_truncated(trunc: &LSeriesTruncation, s: Complex64, t: f64) -> Result<EtaValue> {
    let sigma = s.re;
    if !(sigma > trunc.pressure + trunc.margin) {
        return Err(Error::DivergentRegion {
            re_s: sigma,
            pressure: trunc.pressure,
            margin: trunc.margin,
        });
    }
    let (mut re, mut im) = (KahanSum::new(), KahanSum::new());
    let mut repetition_tail = KahanSum::new();
    for &(len, lpsi, lphi) in &trunc.orbits {
        let z = Complex64::new(lpsi - sigma * len, t * lphi - s.im * len).exp();
        let mut zn = z;
        for _ in 0..trunc.max_repetition {
            let term = zn * len;
            re.add(term.re);
            im.add(term.im);
            zn *= z;
        }
        let x = z.norm();
        if x >= 1.0 {
            return Err(Error::DivergentRegion {
                re_s: sigma,
                pressure: trunc.pressure,
                margin: trunc.margin,
            });
        }
        repetition_tail.add(len * x.powi(trunc.max_repetition as i32 + 1) / (1.0 - x));
    }
    let tilted = trunc.psi.combine(1.0, &trunc.roof, -sigma)?;
    let lambda = pressure(&tilted)?.exp();
    let dim = TransferMatrix::new(tilted.sft(), &tilted)?.states().len() as f64;
    let r_max = trunc.roof.max_abs();
    let period_tail = if lambda < 1.0 {
        r_max * dim * lambda.powi(trunc.max_base_period as i32 + 1) / (1.0 - lambda)
    } else {
        f64::INFINITY
    };
    Ok(EtaValue {
        value: Complex64::new(re.value(), im.value()),
        tail_bound: period_tail + repetition_tail.value(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PoleFitMethod {
    Rational,
    Reciprocal,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoleEstimate {
    pub s0: f64,
    pub residue: f64,
    pub relative_residual: f64,
    pub method: PoleFitMethod,
    /// `(s, η(s,0), tail bound)` of the samples used.
    pub samples: Vec<(f64, f64, f64)>,
}

/// Locate the real pole left of `bracket` by fitting `c/(s − s₀)` plus a
/// quadratic background
/// to `η(s, 0)` sampled in the bracket, denser towards its left edge. Falls
/// back to a linear fit of `1/η` when the rational fit is poor.
pub fn locate_real_pole(trunc: &LSeriesTruncation, bracket: (f64, f64)) -> Result<PoleEstimate> {
    let (a, b) = bracket;
    if !(a < b) {
        return Err(Error::InvalidParameter(format!("invalid bracket [{a}, {b}]")));
    }
    let count = 24;
    let mut samples = Vec::new();
    for i in 0..count {
        let u = i as f64 / (count - 1) as f64;
        let s = a + (b - a) * u * u;
        let e = eta_truncated(trunc, Complex64::new(s, 0.0), 0.0)?;
        if e.relative_tail() <= POLE_FIT_MAX_TAIL {
            samples.push((s, e.value.re, e.tail_bound));
        }
    }
    if samples.len() < POLE_FIT_MIN_POINTS {
        return Err(Error::TooFewPoints {
            needed: POLE_FIT_MIN_POINTS,
            got: samples.len(),
        });
    }
    let xs: Vec<f64> = samples.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = samples.iter().map(|p| p.1).collect();
    let left = xs[0];
    let width = xs[xs.len() - 1] - left;

    let rational = fit_rational(&xs, &ys, left - 4.0 * width - 1.0, left - 1e-9 * width.max(1.0));
    if let Some((s0, c, resid)) = rational {
        if c > 0.0 && resid <= POLE_FIT_MAX_RESIDUAL {
            return Ok(PoleEstimate {
                s0,
                residue: c,
                relative_residual: resid,
                method: PoleFitMethod::Rational,
                samples,
            });
        }
    }
    // 1/η ≈ (s − s₀)/c near the pole: use the half of the samples closest to it.
    let near = (xs.len() / 2).max(POLE_FIT_MIN_POINTS.min(xs.len()));
    let inv: Vec<f64> = ys[..near].iter().map(|y| 1.0 / y).collect();
    let (coeffs, rms) = fit_powers(&xs[..near], &inv, &[0, 1])
        .ok_or_else(|| Error::PoorFit { residual: f64::INFINITY })?;
    let scale = (inv.iter().map(|v| v * v).sum::<f64>() / near as f64).sqrt();
    let resid = rms / scale;
    if coeffs[1] <= 0.0 || resid > POLE_FIT_MAX_RESIDUAL {
        return Err(Error::PoorFit {
            residual: rational.map_or(resid, |r| r.2.min(resid)),
        });
    }
    Ok(PoleEstimate {
        s0: -coeffs[0] / coeffs[1],
        residue: 1.0 / coeffs[1],
        relative_residual: resid,
        method: PoleFitMethod::Reciprocal,
        samples,
    })
}

/// Least squares of `c/(x − s₀) + a + b·u + e·u²` (`u` the centred sample
/// position) by variable projection: for fixed
/// `s₀` the model is linear; `s₀` is chosen by a grid scan in `[lo, hi]`
/// followed by golden-section refinement. Returns `(s₀, c, relative rms)`.
fn fit_rational(xs: &[f64], ys: &[f64], lo: f64, hi: f64) -> Option<(f64, f64, f64)> {
    let scale = (ys.iter().map(|y| y * y).sum::<f64>() / ys.len() as f64).sqrt();
    let center = xs.iter().sum::<f64>() / xs.len() as f64;
    let residual = |s0: f64| -> Option<(f64, f64)> {
        let design = nalgebra::DMatrix::from_fn(xs.len(), 4, |i, j| {
            let u = xs[i] - center;
            match j {
                0 => 1.0 / (xs[i] - s0),
                1 => 1.0,
                2 => u,
                _ => u * u,
            }
        });
        let rhs = nalgebra::DVector::from_column_slice(ys);
        let coef = design.clone().svd(true, true).solve(&rhs, 1e-14).ok()?;
        let r = &design * &coef - &rhs;
        Some(((r.norm_squared() / xs.len() as f64).sqrt() / scale, coef[0]))
    };
    let grid = 400;
    let mut best = (f64::INFINITY, lo);
    for i in 0..=grid {
        let s0 = lo + (hi - lo) * i as f64 / grid as f64;
        if let Some((r, _)) = residual(s0) {
            if r < best.0 {
                best = (r, s0);
            }
        }
    }
    let h = (hi - lo) / grid as f64;
    let (mut a, mut b) = ((best.1 - h).max(lo), (best.1 + h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let f = |x: f64| residual(x).map_or(f64::INFINITY, |r| r.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * a.abs().max(1.0) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let s0 = 0.5 * (a + b);
    let (r, coef) = residual(s0)?;
    Some((s0, coef, r))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadraticFit {
    pub p_hat: f64,
    pub mu_hat: f64,
    pub sigma2_hat: f64,
}

/// Fit `Re s(t) ≈ P − σ² t²/2` and `Im s(t) ≈ μ t` over `t_grid`, where
/// `s(t) = P(ψ + itφ)` is the tracked complex pressure.
pub fn s_of_t_quadratic_fit(
    sft: &Sft,
    psi: &LocallyConstantPotential,
    phi: &LocallyConstantPotential,
    t_grid: &[f64],
) -> Result<(QuadraticFit, Vec<(f64, Complex64)>)> {
    if t_grid.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: t_grid.len(),
        });
    }
    let values: Vec<(f64, Complex64)> = t_grid
        .iter()
        .map(|&t| Ok((t, complex_pressure(sft, psi, phi, t)?)))
        .collect::<Result<_>>()?;
    let ts: Vec<f64> = values.iter().map(|v| v.0).collect();
    let re: Vec<f64> = values.iter().map(|v| v.1.re).collect();
    let im: Vec<f64> = values.iter().map(|v| v.1.im).collect();
    let (c_re, _) = fit_powers(&ts, &re, &[0, 2])
        .ok_or_else(|| Error::InvalidParameter("t grid does not determine a quadratic".into()))?;
    let (c_im, _) = fit_powers(&ts, &im, &[1])
        .ok_or_else(|| Error::InvalidParameter("t grid does not determine a slope".into()))?;
    Ok((
        QuadraticFit {
            p_hat: c_re[0],
            mu_hat: c_im[0],
            sigma2_hat: -2.0 * c_re[1],
        },
        values,
    ))
}
