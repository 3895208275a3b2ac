//! TOML experiment configuration: parsing, defaulting and range checks.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::chain::CouplingProfile;
use crate::oracle::{Convention, MAX_DENSE_SITES};
use crate::precision::{default_zero_mode_tolerance, validate_bits, DOUBLE_BITS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Fig4a,
    Fig4b,
    OracleCompare,
    ConcentricAverage,
    RspScaling,
    Custom,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Fig4a,
        ExperimentKind::Fig4b,
        ExperimentKind::OracleCompare,
        ExperimentKind::ConcentricAverage,
        ExperimentKind::RspScaling,
        ExperimentKind::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Fig4a => "fig4a",
            ExperimentKind::Fig4b => "fig4b",
            ExperimentKind::OracleCompare => "oracle-compare",
            ExperimentKind::ConcentricAverage => "concentric-average",
            ExperimentKind::RspScaling => "rsp-scaling",
            ExperimentKind::Custom => "custom",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            ExperimentKind::Fig4a => "N=20 concentric XX chain, J_n = exp(-n^2): end-block and averaged entropies",
            ExperimentKind::Fig4b => "N=20 concentric XX chain, J_n = exp(-n): end-block and averaged entropies",
            ExperimentKind::OracleCompare => "random XY chains in a field: free fermions against dense diagonalization",
            ExperimentKind::ConcentricAverage => "position-averaged cut count of the concentric pairing against its closed form",
            ExperimentKind::RspScaling => "strong-disorder RG ensemble (N=512, delta=5, 100 seeds): entropy vs log2 L",
            ExperimentKind::Custom => "user-supplied chain: entropy profile, plus RG pairing when applicable",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A rejected configuration, naming the offending field when known.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub field: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(field: &str, message: impl Into<String>) -> Self {
        ConfigError {
            field: Some(field.to_string()),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "{field}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: ExperimentKind,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    dump_correlation: Option<bool>,
    chain: Option<RawChain>,
    scan: Option<RawScan>,
    ensemble: Option<RawEnsemble>,
    oracle: Option<RawOracle>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChain {
    n_sites: Option<usize>,
    precision_bits: Option<u32>,
    zero_mode_tolerance: Option<f64>,
    profile: Option<RawProfile>,
    chain_file: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    kind: String,
    rate: Option<f64>,
    epsilon: Option<f64>,
    alpha_power: Option<f64>,
    j0: Option<f64>,
    couplings: Option<Vec<f64>>,
    delta: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScan {
    l_min: Option<usize>,
    l_max: Option<usize>,
    positions: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnsemble {
    n_sites: Option<usize>,
    delta: Option<f64>,
    samples: Option<usize>,
    l_min: Option<usize>,
    l_max: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOracle {
    n_sites: Option<usize>,
    samples: Option<usize>,
    coupling: Option<[f64; 2]>,
    field: Option<[f64; 2]>,
    tolerance: Option<f64>,
    convention: Option<Convention>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainConfig {
    pub n_sites: usize,
    pub precision_bits: u32,
    pub zero_mode_tolerance: f64,
    pub profile: Option<CouplingProfile>,
    pub chain_file: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanConfig {
    pub l_min: usize,
    pub l_max: usize,
    pub positions: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleConfig {
    pub n_sites: usize,
    pub delta: f64,
    pub samples: usize,
    pub l_min: usize,
    pub l_max: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleConfig {
    pub n_sites: usize,
    pub samples: usize,
    pub coupling: (f64, f64),
    pub field: (f64, f64),
    pub tolerance: f64,
    pub convention: Convention,
}

/// A fully defaulted, range-checked run description.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub dump_correlation: bool,
    pub chain: ChainConfig,
    pub scan: ScanConfig,
    pub ensemble: EnsembleConfig,
    pub oracle: OracleConfig,
}

impl ExperimentConfig {
    /// The preset for `kind` with every field at its default. Custom runs
    /// have no preset chain and are rejected.
    pub fn preset(kind: ExperimentKind) -> Result<Self, ConfigError> {
        validate_config(&format!("experiment = \"{}\"\n", kind.name()))
    }

    /// Override the arithmetic precision of the chain.
    pub fn with_precision(mut self, bits: u32) -> Result<Self, ConfigError> {
        validate_bits(bits).map_err(|e| ConfigError::at("chain.precision_bits", e.to_string()))?;
        if bits != self.chain.precision_bits && self.chain.zero_mode_tolerance != 0.0 {
            self.chain.zero_mode_tolerance = default_zero_mode_tolerance(bits);
        }
        self.chain.precision_bits = bits;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        if let Some(CouplingProfile::RandomStrongDisorder { seed: s, .. }) = self.chain.profile.as_mut() {
            *s = seed;
        }
        self
    }
}

fn positive(field: &str, x: f64) -> Result<f64, ConfigError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(ConfigError::at(field, format!("must be positive and finite, got {x}")))
    }
}

fn resolve_profile(raw: RawProfile, seed: u64) -> Result<CouplingProfile, ConfigError> {
    let need = |name: &str, v: Option<f64>| {
        v.ok_or_else(|| ConfigError::at(&format!("chain.profile.{name}"), "required for this profile kind"))
    };
    let profile = match raw.kind.as_str() {
        "gaussian" => CouplingProfile::Gaussian {
            rate: positive("chain.profile.rate", raw.rate.unwrap_or(1.0))?,
        },
        "exponential" => CouplingProfile::Exponential {
            rate: positive("chain.profile.rate", raw.rate.unwrap_or(1.0))?,
        },
        "power_of_epsilon" => CouplingProfile::PowerOfEpsilon {
            epsilon: need("epsilon", raw.epsilon)?,
            alpha_power: raw.alpha_power.unwrap_or(2.0),
        },
        "rg_scheme" => CouplingProfile::RgScheme {
            epsilon: need("epsilon", raw.epsilon)?,
            j0: raw.j0.unwrap_or(1.0),
        },
        "explicit" => CouplingProfile::Explicit {
            couplings: raw
                .couplings
                .ok_or_else(|| ConfigError::at("chain.profile.couplings", "required for this profile kind"))?,
        },
        "random_strong_disorder" => CouplingProfile::RandomStrongDisorder {
            delta: raw.delta.unwrap_or(5.0),
            seed: raw.seed.unwrap_or(seed),
        },
        other => {
            return Err(ConfigError::at(
                "chain.profile.kind",
                format!(
                    "unknown profile `{other}`; expected gaussian, exponential, power_of_epsilon, \
                     rg_scheme, explicit or random_strong_disorder"
                ),
            ))
        }
    };
    profile
        .validate()
        .map_err(|e| ConfigError::at("chain.profile", e.to_string()))?;
    Ok(profile)
}

fn range(field: &str, lo: usize, hi: usize, min: usize, max: usize) -> Result<(), ConfigError> {
    if lo < min || hi > max || lo > hi {
        return Err(ConfigError::at(
            field,
            format!("block range {lo}..={hi} must lie within {min}..={max}"),
        ));
    }
    Ok(())
}

/// Parse a TOML document into a complete configuration. Unknown keys,
/// missing required values and out-of-range entries are rejected with the
/// field (and, for syntax problems, the line) named.
pub fn validate_config(document: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(document).map_err(|e| ConfigError {
        field: None,
        message: e.to_string(),
    })?;
    let kind = raw.experiment;
    let seed = raw.seed.unwrap_or(0);
    let rc = raw.chain.unwrap_or_default();

    let default_n = match kind {
        ExperimentKind::ConcentricAverage => 100,
        ExperimentKind::RspScaling => 512,
        ExperimentKind::OracleCompare => 8,
        _ => 20,
    };
    let n_sites = rc.n_sites.unwrap_or(default_n);
    if n_sites == 0 {
        return Err(ConfigError::at("chain.n_sites", "must be at least 1"));
    }
    let precision_bits = rc.precision_bits.unwrap_or(DOUBLE_BITS);
    validate_bits(precision_bits).map_err(|e| ConfigError::at("chain.precision_bits", e.to_string()))?;
    let fig4 = matches!(kind, ExperimentKind::Fig4a | ExperimentKind::Fig4b);
    let zero_mode_tolerance = rc
        .zero_mode_tolerance
        .unwrap_or(if fig4 { 0.0 } else { default_zero_mode_tolerance(precision_bits) });
    if !(zero_mode_tolerance.is_finite() && (0.0..1.0).contains(&zero_mode_tolerance)) {
        return Err(ConfigError::at(
            "chain.zero_mode_tolerance",
            format!("must lie in [0, 1), got {zero_mode_tolerance}"),
        ));
    }
    let profile = match rc.profile {
        Some(p) => Some(resolve_profile(p, seed)?),
        None => match kind {
            ExperimentKind::Fig4a => Some(CouplingProfile::gaussian()),
            ExperimentKind::Fig4b => Some(CouplingProfile::exponential()),
            _ => None,
        },
    };
    if kind == ExperimentKind::Custom && profile.is_none() && rc.chain_file.is_none() {
        return Err(ConfigError::at(
            "chain",
            "custom experiments need chain.profile or chain.chain_file",
        ));
    }
    if kind == ExperimentKind::Custom && profile.is_some() && rc.chain_file.is_some() {
        return Err(ConfigError::at(
            "chain.chain_file",
            "give either chain.profile or chain.chain_file, not both",
        ));
    }
    let concentric = fig4 || kind == ExperimentKind::ConcentricAverage || (kind == ExperimentKind::Custom && profile.is_some());
    if concentric && n_sites % 2 != 0 {
        return Err(ConfigError::at(
            "chain.n_sites",
            format!("concentric chains need an even number of sites, got {n_sites}"),
        ));
    }
    if let Some(CouplingProfile::Explicit { couplings }) = &profile {
        if couplings.len() != n_sites / 2 {
            return Err(ConfigError::at(
                "chain.profile.couplings",
                format!("{n_sites} sites need {} couplings, got {}", n_sites / 2, couplings.len()),
            ));
        }
    }

    let rs = raw.scan.unwrap_or_default();
    let scan_max = n_sites.saturating_sub(1).max(1);
    let scan = ScanConfig {
        l_min: rs.l_min.unwrap_or(1),
        l_max: rs.l_max.unwrap_or(scan_max),
        positions: rs.positions.unwrap_or(true),
    };
    if kind != ExperimentKind::OracleCompare && kind != ExperimentKind::RspScaling {
        range("scan", scan.l_min, scan.l_max, 1, scan_max)?;
    }

    let re = raw.ensemble.unwrap_or_default();
    let ensemble = EnsembleConfig {
        n_sites: re.n_sites.unwrap_or(if kind == ExperimentKind::RspScaling { n_sites } else { 512 }),
        delta: re.delta.unwrap_or(5.0),
        samples: re.samples.unwrap_or(100),
        l_min: re.l_min.unwrap_or(4),
        l_max: re.l_max.unwrap_or(64),
    };
    if kind == ExperimentKind::RspScaling {
        if ensemble.n_sites % 2 != 0 || ensemble.n_sites < 2 {
            return Err(ConfigError::at(
                "ensemble.n_sites",
                format!("decimation needs an even number of sites, got {}", ensemble.n_sites),
            ));
        }
        if !(ensemble.delta.is_finite() && ensemble.delta >= 1.0) {
            return Err(ConfigError::at("ensemble.delta", format!("must be at least 1, got {}", ensemble.delta)));
        }
        if ensemble.samples == 0 {
            return Err(ConfigError::at("ensemble.samples", "must be at least 1"));
        }
        range("ensemble", ensemble.l_min, ensemble.l_max, 1, ensemble.n_sites)?;
        if ensemble.l_max - ensemble.l_min < 2 {
            return Err(ConfigError::at("ensemble", "the fit needs at least 3 block sizes"));
        }
    }

    let ro = raw.oracle.unwrap_or_default();
    let oracle = OracleConfig {
        n_sites: ro.n_sites.unwrap_or(if kind == ExperimentKind::OracleCompare { n_sites } else { 8 }),
        samples: ro.samples.unwrap_or(1),
        coupling: ro.coupling.map(|[a, b]| (a, b)).unwrap_or((0.2, 1.0)),
        field: ro.field.map(|[a, b]| (a, b)).unwrap_or((0.0, 0.5)),
        tolerance: ro.tolerance.unwrap_or(1e-8),
        convention: ro.convention.unwrap_or(Convention::JordanWigner),
    };
    if kind == ExperimentKind::OracleCompare {
        if oracle.n_sites < 2 || oracle.n_sites > MAX_DENSE_SITES {
            return Err(ConfigError::at(
                "oracle.n_sites",
                format!("must lie in 2..={MAX_DENSE_SITES}, got {}", oracle.n_sites),
            ));
        }
        for (name, (lo, hi)) in [("oracle.coupling", oracle.coupling), ("oracle.field", oracle.field)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(ConfigError::at(name, format!("need finite lo <= hi, got [{lo}, {hi}]")));
            }
        }
        if oracle.samples == 0 {
            return Err(ConfigError::at("oracle.samples", "must be at least 1"));
        }
        positive("oracle.tolerance", oracle.tolerance)?;
    }

    Ok(ExperimentConfig {
        experiment: kind,
        seed,
        out_dir: raw.out_dir,
        dump_correlation: raw.dump_correlation.unwrap_or(false),
        chain: ChainConfig {
            n_sites,
            precision_bits,
            zero_mode_tolerance,
            profile,
            chain_file: rc.chain_file,
        },
        scan,
        ensemble,
        oracle,
    })
}
