//! JSON experiment configuration and potential resolution.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::Value;
use symdyn::{LocallyConstantPotential, PotentialTable, Sft};

use crate::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    #[serde(default)]
    pub potentials: BTreeMap<String, PotentialSpec>,
    pub experiment: String,
    #[serde(default = "empty_params")]
    pub params: Value,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn empty_params() -> Value {
    Value::Object(Default::default())
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub transitions: Vec<Vec<u8>>,
    pub roof: Option<PotentialSpec>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    CoinFlip {
        p: f64,
    },
    Parity,
    Constant {
        value: f64,
        #[serde(default = "one")]
        depth: usize,
    },
    Table {
        depth: usize,
        values: BTreeMap<String, f64>,
    },
    /// `Σ cᵢ·potentialᵢ + constant` over named potentials.
    Combination {
        terms: Vec<(f64, String)>,
        #[serde(default)]
        constant: f64,
    },
    /// `κ∘σ − κ` for the named `κ`, plus an optional constant.
    Coboundary {
        kappa: String,
        #[serde(default)]
        constant: f64,
    },
    Random {
        depth: usize,
        low: f64,
        high: f64,
    },
}

fn one() -> usize {
    1
}

impl PotentialSpec {
    fn references(&self) -> Vec<&str> {
        match self {
            Self::Combination { terms, .. } => terms.iter().map(|(_, n)| n.as_str()).collect(),
            Self::Coboundary { kappa, .. } => vec![kappa.as_str()],
            _ => Vec::new(),
        }
    }
}

/// A validated configuration with every potential built on the system's SFT.
pub struct Resolved {
    pub sft: Sft,
    pub roof: Option<LocallyConstantPotential>,
    pub potentials: BTreeMap<String, LocallyConstantPotential>,
}

impl Resolved {
    pub fn potential(&self, name: &str) -> Result<&LocallyConstantPotential, CliError> {
        self.potentials
            .get(name)
            .ok_or_else(|| CliError::Schema(format!("unknown potential `{name}`")))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Schema(format!("config: {e}")))
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let sft = Sft::validate(&self.system.transitions)?;
        let mut built: BTreeMap<String, LocallyConstantPotential> = BTreeMap::new();
        // Random potentials draw from seed + their index in name order.
        let indices: BTreeMap<&str, u64> = self
            .potentials
            .keys()
            .enumerate()
            .map(|(i, k)| (k.as_str(), i as u64))
            .collect();
        let mut visiting = BTreeSet::new();
        for name in self.potentials.keys() {
            self.build_named(name, &sft, &indices, &mut built, &mut visiting)?;
        }
        let roof = match &self.system.roof {
            Some(spec) => Some(self.build(spec, &sft, u64::MAX, &built)?),
            None => None,
        };
        Ok(Resolved {
            sft,
            roof,
            potentials: built,
        })
    }

    fn build_named(
        &self,
        name: &str,
        sft: &Sft,
        indices: &BTreeMap<&str, u64>,
        built: &mut BTreeMap<String, LocallyConstantPotential>,
        visiting: &mut BTreeSet<String>,
    ) -> Result<(), CliError> {
        if built.contains_key(name) {
            return Ok(());
        }
        let spec = self
            .potentials
            .get(name)
            .ok_or_else(|| CliError::Schema(format!("unknown potential `{name}`")))?;
        if !visiting.insert(name.to_string()) {
            return Err(CliError::Schema(format!("potential `{name}` refers to itself")));
        }
        for dep in spec.references() {
            self.build_named(dep, sft, indices, built, visiting)?;
        }
        let pot = self.build(spec, sft, indices[name], built)?;
        visiting.remove(name);
        built.insert(name.to_string(), pot);
        Ok(())
    }

    fn build(
        &self,
        spec: &PotentialSpec,
        sft: &Sft,
        index: u64,
        built: &BTreeMap<String, LocallyConstantPotential>,
    ) -> Result<LocallyConstantPotential, CliError> {
        let lookup = |n: &str| {
            built
                .get(n)
                .ok_or_else(|| CliError::Schema(format!("unknown potential `{n}`")))
        };
        let pot = match spec {
            PotentialSpec::CoinFlip { p } => LocallyConstantPotential::coin_flip(*p)?,
            PotentialSpec::Parity => LocallyConstantPotential::parity(),
            PotentialSpec::Constant { value, depth } => {
                LocallyConstantPotential::constant(sft, *depth, *value)?
            }
            PotentialSpec::Table { depth, values } => LocallyConstantPotential::from_table(
                sft,
                &PotentialTable {
                    depth: *depth,
                    values: values.clone(),
                },
            )?,
            PotentialSpec::Combination { terms, constant } => {
                if terms.is_empty() {
                    return Err(CliError::Schema("combination needs at least one term".into()));
                }
                let coeffs: Vec<f64> = terms.iter().map(|(c, _)| *c).collect();
                let pots = terms
                    .iter()
                    .map(|(_, n)| lookup(n))
                    .collect::<Result<Vec<_>, _>>()?;
                LocallyConstantPotential::linear_combination(&coeffs, &pots)?.add_constant(*constant)
            }
            PotentialSpec::Coboundary { kappa, constant } => {
                LocallyConstantPotential::coboundary_of(lookup(kappa)?).add_constant(*constant)
            }
            PotentialSpec::Random { depth, low, high } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(index));
                LocallyConstantPotential::random(sft, *depth, &mut rng, *low, *high)?
            }
        };
        if pot.sft() != sft {
            return Err(CliError::Core(symdyn::Error::MismatchedSft));
        }
        Ok(pot)
    }
}
