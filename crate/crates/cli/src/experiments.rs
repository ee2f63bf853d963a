//! The experiment kinds and their CSV column contracts.

use std::ops::RangeInclusive;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use symdyn::lfunction::{self, LSeriesTruncation, LSystem, DEFAULT_MAX_REPETITION};
use symdyn::livshits::{self, LivshitsReport};
use symdyn::orbit_stats::{self, MultiplicityConvention};
use symdyn::orbits::{self, DEFAULT_ORBIT_BUDGET};
use symdyn::sft::format_word;
use symdyn::suspension::{self, SuspensionFlow};
use symdyn::thermo::{self, DEFAULT_MAX_LAG};
use symdyn::LocallyConstantPotential;

use crate::config::Resolved;
use crate::output::{num, Table};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub required: &'static [&'static str],
    pub optional: &'static [&'static str],
    pub outputs: &'static [&'static str],
}

/// Every experiment kind, in a fixed order.
pub const CATALOG: [CatalogEntry; 9] = [
    CatalogEntry {
        name: "enumerate",
        required: &["system.transitions", "params.n_range"],
        optional: &["params.budget", "params.columns"],
        outputs: &["enumerate", "enumerate_counts"],
    },
    CatalogEntry {
        name: "pressure",
        required: &["system.transitions", "potentials.<psi>"],
        optional: &["params.psi", "params.n_range", "params.budget"],
        outputs: &["pressure", "pressure_orbit_sums"],
    },
    CatalogEntry {
        name: "equilibrium",
        required: &["system.transitions", "potentials.<psi>"],
        optional: &["params.psi", "params.observables"],
        outputs: &["equilibrium", "equilibrium_blocks"],
    },
    CatalogEntry {
        name: "variance",
        required: &["system.transitions", "potentials.<psi>", "potentials.<phi>"],
        optional: &["params.psi", "params.phi", "params.max_lag", "params.step"],
        outputs: &["variance", "autocovariance"],
    },
    CatalogEntry {
        name: "clt",
        required: &[
            "system.transitions",
            "potentials.<psi>",
            "potentials.<phi>",
            "params.n_range (discrete) or params.t_grid (with system.roof)",
        ],
        optional: &[
            "system.roof",
            "params.psi",
            "params.phi",
            "params.center",
            "params.scale",
            "params.delta",
            "params.budget",
        ],
        outputs: &["clt (discrete)", "flow_clt (with system.roof)"],
    },
    CatalogEntry {
        name: "livshits-positive-proportion",
        required: &["system.transitions", "potentials.<phi>", "potentials.<psi>", "params.n_range"],
        optional: &["params.phi", "params.psi", "params.tol", "params.budget"],
        outputs: &["livshits_proportions", "livshits_verdict"],
    },
    CatalogEntry {
        name: "livshits-nonpositive",
        required: &["system.transitions", "potentials.<phi>", "params.n_range"],
        optional: &["params.phi", "params.tol", "params.budget"],
        outputs: &["livshits_counts", "livshits_zero_temperature", "livshits_verdict"],
    },
    CatalogEntry {
        name: "suspension-asymptotics",
        required: &["system.transitions", "system.roof", "potentials.<psi>", "params.t_grid"],
        optional: &["params.psi", "params.budget"],
        outputs: &["suspension_counts", "suspension_summary"],
    },
    CatalogEntry {
        name: "lfunction",
        required: &[
            "system.transitions",
            "potentials.<psi>",
            "potentials.<phi>",
            "params.max_base_period",
            "params.bracket",
        ],
        optional: &[
            "system.roof",
            "params.psi",
            "params.phi",
            "params.max_repetition",
            "params.t_grid",
            "params.budget",
        ],
        outputs: &["lfunction_pole", "lfunction_eta", "lfunction_s_of_t", "lfunction_fit"],
    },
];

/// `n_range` as a single `n` or an inclusive `[low, high]`.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(untagged)]
enum NRange {
    One(usize),
    Span([usize; 2]),
}

impl NRange {
    fn range(self) -> Result<RangeInclusive<usize>, CliError> {
        let (a, b) = match self {
            Self::One(n) => (n, n),
            Self::Span([a, b]) => (a, b),
        };
        if a == 0 || a > b {
            return Err(CliError::Schema(format!("n_range [{a}, {b}] must satisfy 1 <= low <= high")));
        }
        Ok(a..=b)
    }
}

fn default_budget() -> usize {
    DEFAULT_ORBIT_BUDGET
}
fn psi_name() -> String {
    "psi".into()
}
fn phi_name() -> String {
    "phi".into()
}

fn params<T: DeserializeOwned>(kind: &str, v: &Value) -> Result<T, CliError> {
    serde_json::from_value(v.clone()).map_err(|e| CliError::Schema(format!("params for {kind}: {e}")))
}

fn check_budget(budget: usize) -> Result<(), CliError> {
    if budget == 0 {
        return Err(CliError::Schema("budget must be positive".into()));
    }
    Ok(())
}

fn check_grid(name: &str, grid: &[f64]) -> Result<(), CliError> {
    if grid.is_empty() || grid.iter().any(|t| !t.is_finite()) {
        return Err(CliError::Schema(format!("{name} must be a non-empty list of finite numbers")));
    }
    Ok(())
}

pub fn run(kind: &str, cfg: &Resolved, p: &Value) -> Result<Vec<Table>, CliError> {
    match kind {
        "enumerate" => enumerate(cfg, params(kind, p)?),
        "pressure" => pressure(cfg, params(kind, p)?),
        "equilibrium" => equilibrium(cfg, params(kind, p)?),
        "variance" => variance(cfg, params(kind, p)?),
        "clt" => clt(cfg, params(kind, p)?),
        "livshits-positive-proportion" => positive_proportion(cfg, params(kind, p)?),
        "livshits-nonpositive" => nonpositive(cfg, params(kind, p)?),
        "suspension-asymptotics" => suspension_asymptotics(cfg, params(kind, p)?),
        "lfunction" => lfunction(cfg, params(kind, p)?),
        other => Err(CliError::Schema(format!(
            "unknown experiment `{other}`; see `symdyn list-experiments`"
        ))),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnumerateParams {
    n_range: NRange,
    #[serde(default = "default_budget")]
    budget: usize,
    /// Potentials whose periods get a column; all named ones by default.
    columns: Option<Vec<String>>,
}

fn enumerate(cfg: &Resolved, p: EnumerateParams) -> Result<Vec<Table>, CliError> {
    check_budget(p.budget)?;
    let range = p.n_range.range()?;
    let names: Vec<String> = p.columns.unwrap_or_else(|| cfg.potentials.keys().cloned().collect());
    let pots = names
        .iter()
        .map(|n| cfg.potential(n))
        .collect::<Result<Vec<_>, _>>()?;
    let mut header = vec!["period".to_string(), "word".to_string()];
    header.extend(names.iter().map(|n| format!("period_{n}")));
    let mut orbits_table = Table {
        name: "enumerate".into(),
        header,
        rows: Vec::new(),
        multiplicity: None,
    };
    let mut counts = Table::new(
        "enumerate_counts",
        &["n", "prime_orbits", "prime_orbits_mobius", "periodic_points"],
    );
    for n in range {
        let primes = orbits::enumerate_prime_orbits(&cfg.sft, n, p.budget)?;
        for orbit in &primes {
            let mut row = vec![n.to_string(), format_word(orbit.word())];
            row.extend(pots.iter().map(|pot| num(pot.cyclic_sum(orbit.word()))));
            orbits_table.push(row);
        }
        counts.push(vec![
            n.to_string(),
            primes.len().to_string(),
            cfg.sft.count_prime_orbits(n)?.to_string(),
            cfg.sft.count_periodic_points(n)?.to_string(),
        ]);
    }
    Ok(vec![orbits_table, counts])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PressureParams {
    #[serde(default = "psi_name")]
    psi: String,
    n_range: Option<NRange>,
    #[serde(default = "default_budget")]
    budget: usize,
}

fn pressure(cfg: &Resolved, p: PressureParams) -> Result<Vec<Table>, CliError> {
    check_budget(p.budget)?;
    let psi = cfg.potential(&p.psi)?;
    let range = p.n_range.unwrap_or(NRange::Span([8, 16])).range()?;
    let mut summary = Table::new("pressure", &["method", "value", "error_bound", "n_low", "n_high"]);
    let spectral = thermo::pressure_spectral(&cfg.sft, psi)?;
    summary.push(vec!["spectral".into(), num(spectral.value), num(spectral.error_bound), String::new(), String::new()]);
    let orbit = thermo::pressure_orbit_sum(&cfg.sft, psi, range.clone(), p.budget)?;
    let (lo, hi) = orbit.n_used.unwrap_or((*range.start(), *range.end()));
    summary.push(vec!["orbit_sum".into(), num(orbit.value), num(orbit.error_bound), lo.to_string(), hi.to_string()]);
    let mut sums = Table::new("pressure_orbit_sums", &["n", "log_sum", "log_sum_over_n"])
        .with_multiplicity(MultiplicityConvention::PointCount.as_str());
    for n in range {
        let l = thermo::log_orbit_sum(&cfg.sft, psi, n, p.budget)?;
        sums.push(vec![n.to_string(), num(l), num(l / n as f64)]);
    }
    Ok(vec![summary, sums])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EquilibriumParams {
    #[serde(default = "psi_name")]
    psi: String,
    /// Potentials to integrate; all named ones by default.
    observables: Option<Vec<String>>,
}

fn equilibrium(cfg: &Resolved, p: EquilibriumParams) -> Result<Vec<Table>, CliError> {
    let psi = cfg.potential(&p.psi)?;
    let state = thermo::equilibrium_state(&cfg.sft, psi)?;
    let mut summary = Table::new("equilibrium", &["quantity", "value"]);
    summary.push(vec!["pressure".into(), num(state.pressure())]);
    summary.push(vec!["entropy".into(), num(state.entropy())]);
    let names = p.observables.unwrap_or_else(|| cfg.potentials.keys().cloned().collect());
    for name in &names {
        let value = thermo::integrate(&state, cfg.potential(name)?)?;
        summary.push(vec![format!("mean_{name}"), num(value)]);
    }
    let mut blocks = Table::new("equilibrium_blocks", &["block", "probability"]);
    for (b, pr) in state.blocks().iter().zip(state.block_stationary()) {
        blocks.push(vec![format_word(b), num(*pr)]);
    }
    Ok(vec![summary, blocks])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VarianceParams {
    #[serde(default = "psi_name")]
    psi: String,
    #[serde(default = "phi_name")]
    phi: String,
    #[serde(default = "default_max_lag")]
    max_lag: usize,
    #[serde(default = "default_step")]
    step: f64,
}

fn default_max_lag() -> usize {
    DEFAULT_MAX_LAG
}
fn default_step() -> f64 {
    1e-2
}

fn variance(cfg: &Resolved, p: VarianceParams) -> Result<Vec<Table>, CliError> {
    let psi = cfg.potential(&p.psi)?;
    let phi = cfg.potential(&p.phi)?;
    let state = thermo::equilibrium_state(&cfg.sft, psi)?;
    let gk = thermo::variance_green_kubo(&state, phi, p.max_lag)?;
    let curv = thermo::variance_curvature(&cfg.sft, psi, phi, p.step)?;
    let mut summary = Table::new("variance", &["method", "value"]);
    summary.push(vec!["green_kubo".into(), num(gk)]);
    summary.push(vec!["curvature".into(), num(curv)]);
    summary.push(vec!["mean".into(), num(thermo::integrate(&state, phi)?)]);
    let (cov, _) = thermo::autocovariances(&state, phi, p.max_lag)?;
    let mut table = Table::new("autocovariance", &["lag", "covariance"]);
    for (j, c) in cov.iter().enumerate() {
        table.push(vec![j.to_string(), num(*c)]);
    }
    Ok(vec![summary, table])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CltParams {
    #[serde(default = "psi_name")]
    psi: String,
    #[serde(default = "phi_name")]
    phi: String,
    n_range: Option<NRange>,
    /// Defaults to the equilibrium mean of `phi`.
    center: Option<f64>,
    /// Defaults to the square root of the dynamical variance.
    scale: Option<f64>,
    t_grid: Option<Vec<f64>>,
    #[serde(default = "one")]
    delta: f64,
    #[serde(default = "default_budget")]
    budget: usize,
}

fn one() -> f64 {
    1.0
}

fn clt(cfg: &Resolved, p: CltParams) -> Result<Vec<Table>, CliError> {
    check_budget(p.budget)?;
    let psi = cfg.potential(&p.psi)?;
    let phi = cfg.potential(&p.phi)?;
    if let Some(roof) = &cfg.roof {
        let grid = p
            .t_grid
            .ok_or_else(|| CliError::Schema("clt over a suspension needs params.t_grid".into()))?;
        check_grid("t_grid", &grid)?;
        if p.n_range.is_some() || p.center.is_some() || p.scale.is_some() {
            return Err(CliError::Schema(
                "n_range, center and scale apply to discrete systems only; the flow observable is centred automatically"
                    .into(),
            ));
        }
        let flow = SuspensionFlow::new(&cfg.sft, roof.clone())?;
        return flow_clt(&flow, psi, phi, &grid, p.delta, p.budget);
    }
    if p.t_grid.is_some() {
        return Err(CliError::Schema("t_grid needs system.roof".into()));
    }
    let range = p
        .n_range
        .ok_or_else(|| CliError::Schema("clt needs params.n_range".into()))?
        .range()?;
    let state = thermo::equilibrium_state(&cfg.sft, psi)?;
    let center = match p.center {
        Some(c) => c,
        None => thermo::integrate(&state, phi)?,
    };
    let scale = match p.scale {
        Some(s) => s,
        None => thermo::variance_green_kubo(&state, phi, DEFAULT_MAX_LAG)?.sqrt(),
    };
    let mut table = Table::new(
        "clt",
        &["n", "atoms", "center", "scale", "sample_mean", "sample_variance", "non_prime_mass", "ks_distance"],
    )
    .with_multiplicity(MultiplicityConvention::PointCount.as_str());
    for n in range {
        let m = orbit_stats::weighted_orbit_measure(&cfg.sft, psi, n, p.budget)?;
        let d = orbit_stats::normalized_period_sample(&m, phi, center, scale)?;
        table.push(vec![
            n.to_string(),
            m.atoms().len().to_string(),
            num(center),
            num(scale),
            num(d.mean()),
            num(d.variance()),
            num(m.non_prime_mass()),
            num(orbit_stats::ks_distance_to_standard_normal(&d)),
        ]);
    }
    Ok(vec![table])
}

fn flow_clt(
    flow: &SuspensionFlow,
    psi: &LocallyConstantPotential,
    phi: &LocallyConstantPotential,
    grid: &[f64],
    delta: f64,
    budget: usize,
) -> Result<Vec<Table>, CliError> {
    let (centred, c) = suspension::center_flow_observable(flow, psi, phi)?;
    let mut table = Table::new(
        "flow_clt",
        &[
            "t",
            "delta",
            "atoms",
            "centering",
            "flow_pressure",
            "sigma_flow",
            "sample_mean",
            "sample_variance",
            "ks_distance",
        ],
    )
    .with_multiplicity(MultiplicityConvention::OrbitCount.as_str());
    for &t in grid {
        let r = suspension::flow_clt_check(flow, psi, &centred, t, delta, budget)?;
        table.push(vec![
            num(t),
            num(delta),
            r.atoms.to_string(),
            num(c),
            num(r.flow_pressure),
            num(r.sigma_flow),
            num(r.sample_mean),
            num(r.sample_variance),
            num(r.ks_distance),
        ]);
    }
    Ok(vec![table])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PositiveProportionParams {
    #[serde(default = "phi_name")]
    phi: String,
    #[serde(default = "psi_name")]
    psi: String,
    n_range: NRange,
    tol: Option<f64>,
    #[serde(default = "default_budget")]
    budget: usize,
}

fn positive_proportion(cfg: &Resolved, p: PositiveProportionParams) -> Result<Vec<Table>, CliError> {
    check_budget(p.budget)?;
    let report = livshits::positive_proportion_test(
        &cfg.sft,
        cfg.potential(&p.phi)?,
        cfg.potential(&p.psi)?,
        p.n_range.range()?,
        p.tol,
        p.budget,
    )?;
    let mut table = Table::new("livshits_proportions", &["n", "zero_period_proportion"])
        .with_multiplicity(MultiplicityConvention::PointCount.as_str());
    for (n, v) in &report.proportions {
        table.push(vec![n.to_string(), num(*v)]);
    }
    Ok(vec![table, verdict_table(&report)])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NonpositiveParams {
    #[serde(default = "phi_name")]
    phi: String,
    n_range: NRange,
    tol: Option<f64>,
    #[serde(default = "default_budget")]
    budget: usize,
}

fn nonpositive(cfg: &Resolved, p: NonpositiveParams) -> Result<Vec<Table>, CliError> {
    check_budget(p.budget)?;
    let report =
        livshits::nonpositive_test(&cfg.sft, cfg.potential(&p.phi)?, p.n_range.range()?, p.tol, p.budget)?;
    let mut counts = Table::new("livshits_counts", &["n", "positive_points", "positive_orbits"]);
    for (n, points) in &report.positive_point_counts {
        let orbits = report.positive_orbit_counts.get(n).copied().unwrap_or(0);
        counts.push(vec![n.to_string(), points.to_string(), orbits.to_string()]);
    }
    let mut zt = Table::new("livshits_zero_temperature", &["s", "pressure_over_s"]);
    for (s, v) in &report.zero_temperature {
        zt.push(vec![num(*s), num(*v)]);
    }
    Ok(vec![counts, zt, verdict_table(&report)])
}

fn verdict_table(r: &LivshitsReport) -> Table {
    let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
    let mut t = Table::new("livshits_verdict", &["key", "value"]);
    let mut put = |k: &str, v: String| t.push(vec![k.to_string(), v]);
    put("verdict", r.verdict.as_str().into());
    put("evidence_orbit", r.evidence.as_ref().map(|w| w.orbit.to_string()).unwrap_or_default());
    put("evidence_period", opt(r.evidence.as_ref().map(|w| w.period)));
    put("limsup_proportion", opt(r.limsup_proportion));
    put("variance_estimate", num(r.variance_estimate));
    put("coboundary_residual", opt(r.coboundary_residual));
    put("kappa_depth", r.kappa.as_ref().map(|k| k.depth().to_string()).unwrap_or_default());
    put("n_max", r.periods.n_max.to_string());
    put("period_tolerance", num(r.periods.tol));
    put("prime_orbits_checked", r.periods.prime_orbits_checked.to_string());
    put("max_orbit_average", num(r.periods.max_orbit_average));
    put("worst_orbit", r.periods.worst_orbit.orbit.to_string());
    put("growth_rate", opt(r.growth_rate));
    put("label", r.label.into());
    t
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SuspensionParams {
    #[serde(default = "psi_name")]
    psi: String,
    t_grid: Vec<f64>,
    #[serde(default = "default_budget")]
    budget: usize,
}

fn flow_of(cfg: &Resolved) -> Result<SuspensionFlow, CliError> {
    let roof = cfg
        .roof
        .clone()
        .ok_or_else(|| CliError::Schema("this experiment needs system.roof".into()))?;
    Ok(SuspensionFlow::new(&cfg.sft, roof)?)
}

fn suspension_asymptotics(cfg: &Resolved, p: SuspensionParams) -> Result<Vec<Table>, CliError> {
    check_budget(p.budget)?;
    check_grid("t_grid", &p.t_grid)?;
    let flow = flow_of(cfg)?;
    let r = suspension::verify_counting_asymptotics(&flow, cfg.potential(&p.psi)?, &p.t_grid, p.budget)?;
    let mut rows = Table::new(
        "suspension_counts",
        &["t", "prime_count", "prime_weight", "non_prime_count", "non_prime_weight", "ratio"],
    )
    .with_multiplicity(MultiplicityConvention::OrbitCount.as_str());
    for row in &r.rows {
        rows.push(vec![
            num(row.t),
            row.prime.count.to_string(),
            num(row.prime.weight),
            row.non_prime.count.to_string(),
            num(row.non_prime.weight),
            num(row.ratio),
        ]);
    }
    let mut summary = Table::new("suspension_summary", &["quantity", "value"]);
    summary.push(vec!["flow_pressure".into(), num(r.pressure)]);
    summary.push(vec!["non_prime_rate".into(), num(r.non_prime_rate)]);
    summary.push(vec!["prime_gap".into(), num(r.prime_gap)]);
    Ok(vec![rows, summary])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LfunctionParams {
    #[serde(default = "psi_name")]
    psi: String,
    #[serde(default = "phi_name")]
    phi: String,
    max_base_period: usize,
    #[serde(default = "default_repetition")]
    max_repetition: usize,
    bracket: [f64; 2],
    t_grid: Option<Vec<f64>>,
    #[serde(default = "default_budget")]
    budget: usize,
}

fn default_repetition() -> usize {
    DEFAULT_MAX_REPETITION
}

fn lfunction(cfg: &Resolved, p: LfunctionParams) -> Result<Vec<Table>, CliError> {
    check_budget(p.budget)?;
    let psi = cfg.potential(&p.psi)?;
    let phi = cfg.potential(&p.phi)?;
    let system = match &cfg.roof {
        Some(_) => LSystem::Flow(flow_of(cfg)?),
        None => LSystem::Discrete(cfg.sft.clone()),
    };
    let discrete = matches!(system, LSystem::Discrete(_));
    let trunc = LSeriesTruncation::new(system, psi.clone(), phi.clone(), p.max_base_period, p.max_repetition, p.budget)?;
    let pole = lfunction::locate_real_pole(&trunc, (p.bracket[0], p.bracket[1]))?;
    let mut pole_table = Table::new(
        "lfunction_pole",
        &["s0", "residue", "relative_residual", "method", "pressure"],
    )
    .with_multiplicity(MultiplicityConvention::OrbitCount.as_str());
    let method = serde_json::to_value(&pole.method)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    pole_table.push(vec![
        num(pole.s0),
        num(pole.residue),
        num(pole.relative_residual),
        method,
        num(trunc.pressure()),
    ]);
    let mut eta = Table::new("lfunction_eta", &["s", "t", "re_eta", "im_eta", "tail_bound"])
        .with_multiplicity(MultiplicityConvention::OrbitCount.as_str());
    for &(s, v, tail) in &pole.samples {
        eta.push(vec![num(s), num(0.0), num(v), num(0.0), num(tail)]);
    }
    let mut tables = vec![pole_table, eta];
    if let Some(grid) = p.t_grid {
        check_grid("t_grid", &grid)?;
        if !discrete {
            return Err(CliError::Schema("the s(t) fit is defined for discrete systems only".into()));
        }
        let (fit, path) = lfunction::s_of_t_quadratic_fit(&cfg.sft, psi, phi, &grid)?;
        let mut st = Table::new("lfunction_s_of_t", &["t", "re_s", "im_s"]);
        for (t, s) in path {
            st.push(vec![num(t), num(s.re), num(s.im)]);
        }
        let mut f = Table::new("lfunction_fit", &["p_hat", "mu_hat", "sigma2_hat"]);
        f.push(vec![num(fit.p_hat), num(fit.mu_hat), num(fit.sigma2_hat)]);
        tables.push(st);
        tables.push(f);
    }
    Ok(tables)
}
