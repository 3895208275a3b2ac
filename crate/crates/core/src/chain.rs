//! Open spin-1/2 XY chains: coupling profiles, concentric layouts and the
//! quadratic-form matrices of the Jordan–Wigner fermion problem.

use rand::distributions::{Distribution, Open01};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::precision::{validate_bits, Real};

/// How the bond strengths `J_n` decay with the distance `n` from the
/// central bond (`n = 0`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingProfile {
    /// `J_n = exp(-rate · n²)`.
    Gaussian { rate: f64 },
    /// `J_n = exp(-rate · n)`.
    Exponential { rate: f64 },
    /// `J_n = ε^{α(n)}` with `α(n) = n^alpha_power`.
    PowerOfEpsilon { epsilon: f64, alpha_power: f64 },
    /// `J_0` at the centre, then `J_i = ε (ε²/2)^{i-1} J_0`.
    RgScheme { epsilon: f64, j0: f64 },
    /// `J_0, J_1, …, J_{N/2-1}` given directly.
    Explicit { couplings: Vec<f64> },
    /// `J_n = u_n^δ`, `u_n` uniform on (0, 1) from a seeded generator.
    RandomStrongDisorder { delta: f64, seed: u64 },
}

impl CouplingProfile {
    pub fn gaussian() -> Self {
        CouplingProfile::Gaussian { rate: 1.0 }
    }

    pub fn exponential() -> Self {
        CouplingProfile::Exponential { rate: 1.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CouplingProfile::Gaussian { .. } => "gaussian",
            CouplingProfile::Exponential { .. } => "exponential",
            CouplingProfile::PowerOfEpsilon { .. } => "power_of_epsilon",
            CouplingProfile::RgScheme { .. } => "rg_scheme",
            CouplingProfile::Explicit { .. } => "explicit",
            CouplingProfile::RandomStrongDisorder { .. } => "random_strong_disorder",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidProfile(msg));
        match self {
            CouplingProfile::Gaussian { rate } | CouplingProfile::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return bad(format!("rate must be positive and finite, got {rate}"));
                }
            }
            CouplingProfile::PowerOfEpsilon {
                epsilon,
                alpha_power,
            } => {
                if !(*epsilon > 0.0 && *epsilon < 1.0) {
                    return bad(format!("epsilon must lie in (0, 1), got {epsilon}"));
                }
                if !(alpha_power.is_finite() && *alpha_power > 0.0) {
                    return bad(format!("alpha_power must be positive, got {alpha_power}"));
                }
            }
            CouplingProfile::RgScheme { epsilon, j0 } => {
                if !(*epsilon > 0.0 && *epsilon < 1.0) {
                    return bad(format!("epsilon must lie in (0, 1), got {epsilon}"));
                }
                if !(j0.is_finite() && *j0 > 0.0) {
                    return bad(format!("j0 must be positive, got {j0}"));
                }
            }
            CouplingProfile::Explicit { couplings } => {
                if let Some(c) = couplings.iter().find(|c| !c.is_finite() || **c < 0.0) {
                    return bad(format!("explicit couplings must be finite and non-negative, got {c}"));
                }
            }
            CouplingProfile::RandomStrongDisorder { delta, .. } => {
                if !(delta.is_finite() && *delta >= 1.0) {
                    return bad(format!("delta must be at least 1, got {delta}"));
                }
            }
        }
        Ok(())
    }

    /// Strengths `J_0 … J_{count-1}` at `bits` of precision. Values that
    /// underflow the backend are flushed to zero and reported.
    pub fn strengths<T: Real>(&self, count: usize, bits: u32) -> Result<(Vec<T>, Vec<Warning>)> {
        self.validate()?;
        let c = |x: f64| T::from_f64(x, bits);
        let raw: Vec<T> = match self {
            CouplingProfile::Gaussian { rate } => (0..count)
                .map(|n| (-(c(*rate) * c((n * n) as f64))).exp())
                .collect(),
            CouplingProfile::Exponential { rate } => (0..count)
                .map(|n| (-(c(*rate) * c(n as f64))).exp())
                .collect(),
            CouplingProfile::PowerOfEpsilon {
                epsilon,
                alpha_power,
            } => {
                let ln_eps = c(*epsilon).ln();
                (0..count)
                    .map(|n| {
                        let alpha = if n == 0 { 0.0 } else { (n as f64).powf(*alpha_power) };
                        (ln_eps.clone() * c(alpha)).exp()
                    })
                    .collect()
            }
            CouplingProfile::RgScheme { epsilon, j0 } => {
                let eps = c(*epsilon);
                let ratio = eps.clone() * eps.clone() / c(2.0);
                let mut out = Vec::with_capacity(count);
                let mut current = c(*j0);
                for n in 0..count {
                    if n == 1 {
                        current = eps.clone() * current;
                    } else if n > 1 {
                        current = ratio.clone() * current;
                    }
                    out.push(current.clone());
                }
                out
            }
            CouplingProfile::Explicit { couplings } => {
                if couplings.len() != count {
                    return Err(Error::InvalidProfile(format!(
                        "explicit profile needs {count} couplings (J_0..J_{}), got {}",
                        count.saturating_sub(1),
                        couplings.len()
                    )));
                }
                couplings.iter().map(|&x| c(x)).collect()
            }
            CouplingProfile::RandomStrongDisorder { delta, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..count)
                    .map(|_| {
                        let u: f64 = Open01.sample(&mut rng);
                        (c(u).ln() * c(*delta)).exp()
                    })
                    .collect()
            }
        };
        Ok(flush_underflow(raw, bits))
    }
}

fn flush_underflow<T: Real>(values: Vec<T>, bits: u32) -> (Vec<T>, Vec<Warning>) {
    let mut warnings = Vec::new();
    let out = values
        .into_iter()
        .enumerate()
        .map(|(n, v)| {
            if v.is_underflowed() {
                warnings.push(Warning::CouplingUnderflow {
                    index: n,
                    value: v.to_f64(),
                });
                T::zero_at(bits)
            } else {
                v
            }
        })
        .collect();
    (out, warnings)
}

/// Non-fatal conditions recorded while building a chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum Warning {
    /// Profile strength `J_index` fell below the normal range and was set to zero.
    CouplingUnderflow { index: usize, value: f64 },
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::CouplingUnderflow { index, value } => write!(
                f,
                "coupling J_{index} = {value:e} underflows the active precision and was recorded as 0"
            ),
        }
    }
}

/// How a chain was generated.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<CouplingProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parameters: Vec<(String, f64)>,
}

impl Provenance {
    pub fn new(generator: &str) -> Self {
        Provenance {
            generator: generator.to_string(),
            ..Default::default()
        }
    }
}

/// Open chain of `n_sites` spins: bond `k` joins sites `k+1` and `k+2`
/// (1-based), so there are `n_sites - 1` bonds.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSpec<T> {
    n_sites: usize,
    jx: Vec<T>,
    jy: Vec<T>,
    field: Vec<T>,
    precision_bits: u32,
    provenance: Provenance,
    warnings: Vec<Warning>,
}

impl<T: Real> ChainSpec<T> {
    pub fn new(jx: Vec<T>, jy: Vec<T>, field: Vec<T>, precision_bits: u32) -> Result<Self> {
        validate_bits(precision_bits)?;
        let n_sites = field.len();
        if n_sites == 0 {
            return Err(Error::InvalidChain("a chain needs at least one site".into()));
        }
        if jx.len() + 1 != n_sites || jy.len() + 1 != n_sites {
            return Err(Error::InvalidChain(format!(
                "{n_sites} sites need {} bonds, got jx={} jy={}",
                n_sites - 1,
                jx.len(),
                jy.len()
            )));
        }
        if let Some(x) = jx.iter().chain(&jy).chain(&field).find(|x| !x.is_finite()) {
            return Err(Error::InvalidChain(format!("non-finite entry {x}")));
        }
        let mut warnings = Vec::new();
        for (k, j) in jx.iter().chain(&jy).enumerate() {
            if j.is_underflowed() {
                warnings.push(Warning::CouplingUnderflow {
                    index: k % (n_sites - 1).max(1),
                    value: j.to_f64(),
                });
            }
        }
        Ok(ChainSpec {
            n_sites,
            jx,
            jy,
            field,
            precision_bits,
            provenance: Provenance::new("explicit"),
            warnings,
        })
    }

    /// XX chain (`jx = jy`) in zero field.
    pub fn xx(bonds: Vec<T>, precision_bits: u32) -> Result<Self> {
        let n = bonds.len() + 1;
        ChainSpec::new(
            bonds.clone(),
            bonds,
            vec![T::zero_at(precision_bits); n],
            precision_bits,
        )
    }

    /// Uniform XX chain with every bond equal to `j`.
    pub fn uniform_xx(n_sites: usize, j: f64, precision_bits: u32) -> Result<Self> {
        let bonds = vec![T::from_f64(j, precision_bits); n_sites.saturating_sub(1)];
        let mut chain = ChainSpec::xx(bonds, precision_bits)?;
        chain.provenance = Provenance {
            parameters: vec![("j".into(), j)],
            ..Provenance::new("uniform_xx")
        };
        Ok(chain)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn jx(&self) -> &[T] {
        &self.jx
    }

    pub fn jy(&self) -> &[T] {
        &self.jy
    }

    pub fn field(&self) -> &[T] {
        &self.field
    }

    pub fn precision_bits(&self) -> u32 {
        self.precision_bits
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn warnings(&self) -> &[Warning] {
        &self.warnings
    }

    pub fn is_xx(&self) -> bool {
        self.jx == self.jy
    }

    pub fn has_zero_field(&self) -> bool {
        self.field.iter().all(Real::is_zero)
    }

    /// The same chain with site order reversed.
    pub fn reversed(&self) -> Self {
        let rev = |v: &[T]| v.iter().rev().cloned().collect::<Vec<_>>();
        ChainSpec {
            n_sites: self.n_sites,
            jx: rev(&self.jx),
            jy: rev(&self.jy),
            field: rev(&self.field),
            precision_bits: self.precision_bits,
            provenance: Provenance::new("reversed"),
            warnings: self.warnings.clone(),
        }
    }

    /// Re-express every entry in another backend.
    pub fn convert<U: Real>(&self, precision_bits: u32) -> Result<ChainSpec<U>> {
        let conv = |v: &[T]| -> Result<Vec<U>> {
            v.iter()
                .map(|x| U::parse_decimal(&x.to_decimal(), precision_bits))
                .collect()
        };
        let mut out = ChainSpec::new(
            conv(&self.jx)?,
            conv(&self.jy)?,
            conv(&self.field)?,
            precision_bits,
        )?;
        out.provenance = self.provenance.clone();
        Ok(out)
    }

    pub fn to_document(&self) -> ChainDocument {
        let dec = |v: &[T]| v.iter().map(Real::to_decimal).collect();
        ChainDocument {
            n_sites: self.n_sites,
            jx: dec(&self.jx),
            jy: dec(&self.jy),
            field: dec(&self.field),
            precision_bits: self.precision_bits,
            provenance: self.provenance.clone(),
            warnings: self.warnings.clone(),
        }
    }

    pub fn from_document(doc: &ChainDocument) -> Result<Self> {
        let bits = doc.precision_bits;
        validate_bits(bits)?;
        let parse = |v: &[String]| -> Result<Vec<T>> {
            v.iter().map(|s| T::parse_decimal(s, bits)).collect()
        };
        let mut chain = ChainSpec::new(parse(&doc.jx)?, parse(&doc.jy)?, parse(&doc.field)?, bits)?;
        if chain.n_sites != doc.n_sites {
            return Err(Error::InvalidChain(format!(
                "n_sites = {} disagrees with {} field entries",
                doc.n_sites, chain.n_sites
            )));
        }
        chain.provenance = doc.provenance.clone();
        for w in &doc.warnings {
            if !chain.warnings.contains(w) {
                chain.warnings.push(w.clone());
            }
        }
        Ok(chain)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("chain document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ChainDocument =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        ChainSpec::from_document(&doc)
    }
}

/// Text form of a [`ChainSpec`]; numbers are decimal strings that parse back
/// to the identical value at `precision_bits`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainDocument {
    pub n_sites: usize,
    pub jx: Vec<String>,
    pub jy: Vec<String>,
    pub field: Vec<String>,
    pub precision_bits: u32,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
}

/// Mirror-symmetric XX chain: the central bond between sites `N/2` and
/// `N/2+1` gets `J_0`, and the bonds `N/2 ± i` both get `J_i`.
pub fn build_concentric_chain<T: Real>(
    n_sites: usize,
    profile: &CouplingProfile,
    precision_bits: u32,
) -> Result<ChainSpec<T>> {
    if n_sites < 2 || n_sites % 2 != 0 {
        return Err(Error::InvalidChain(format!(
            "concentric chains need an even number of sites >= 2, got {n_sites}"
        )));
    }
    validate_bits(precision_bits)?;
    let half = n_sites / 2;
    let (strengths, warnings) = profile.strengths::<T>(half, precision_bits)?;
    // Bond k (0-based) sits at distance |k - (half - 1)| from the centre.
    let bonds: Vec<T> = (0..n_sites - 1)
        .map(|k| strengths[k.abs_diff(half - 1)].clone())
        .collect();
    let mut chain = ChainSpec::xx(bonds, precision_bits)?;
    chain.warnings = warnings;
    chain.provenance = Provenance {
        generator: "concentric".into(),
        seed: match profile {
            CouplingProfile::RandomStrongDisorder { seed, .. } => Some(*seed),
            _ => None,
        },
        profile: Some(profile.clone()),
        parameters: Vec::new(),
    };
    Ok(chain)
}

/// XX chain with independent bonds `J_i = u_i^δ`, `u_i` uniform on (0, 1).
pub fn sample_strong_disorder_chain<T: Real>(
    n_sites: usize,
    delta: f64,
    seed: u64,
    precision_bits: u32,
) -> Result<ChainSpec<T>> {
    if n_sites == 0 {
        return Err(Error::InvalidChain("a chain needs at least one site".into()));
    }
    let profile = CouplingProfile::RandomStrongDisorder { delta, seed };
    let (bonds, warnings) = profile.strengths::<T>(n_sites - 1, precision_bits)?;
    let mut chain = ChainSpec::xx(bonds, precision_bits)?;
    chain.warnings = warnings;
    chain.provenance = Provenance {
        generator: "strong_disorder".into(),
        seed: Some(seed),
        profile: Some(profile),
        parameters: vec![("delta".into(), delta)],
    };
    Ok(chain)
}

/// Random XY chain in a transverse field: `Jx, Jy` uniform on `coupling`,
/// `λ` uniform on `field`. Deterministic per seed.
pub fn sample_xy_chain<T: Real>(
    n_sites: usize,
    coupling: (f64, f64),
    field: (f64, f64),
    seed: u64,
    precision_bits: u32,
) -> Result<ChainSpec<T>> {
    use rand::Rng;
    if n_sites == 0 {
        return Err(Error::InvalidChain("a chain needs at least one site".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |(lo, hi): (f64, f64)| T::from_f64(rng.gen_range(lo..=hi), precision_bits);
    let jx: Vec<T> = (0..n_sites - 1).map(|_| draw(coupling)).collect();
    let jy: Vec<T> = (0..n_sites - 1).map(|_| draw(coupling)).collect();
    let lam: Vec<T> = (0..n_sites).map(|_| draw(field)).collect();
    Ok(ChainSpec::new(jx, jy, lam, precision_bits)?.with_provenance(Provenance {
        generator: "random_xy".into(),
        seed: Some(seed),
        profile: None,
        parameters: vec![
            ("coupling_min".into(), coupling.0),
            ("coupling_max".into(), coupling.1),
            ("field_min".into(), field.0),
            ("field_max".into(), field.1),
        ],
    }))
}

/// `H = Σ A_ij c†_i c_j + ½ Σ B_ij (c†_i c†_j + h.c.)` for an open chain.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticForm<T> {
    pub a: Matrix<T>,
    pub b: Matrix<T>,
    pub precision_bits: u32,
}

impl<T: Real> QuadraticForm<T> {
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    /// `A + B`, whose SVD yields the Bogoliubov modes.
    pub fn plus(&self) -> Matrix<T> {
        self.a.add(&self.b)
    }

    /// `A − B = (A + B)ᵀ`.
    pub fn minus(&self) -> Matrix<T> {
        self.a.sub(&self.b)
    }
}

/// `A_ii = 2λ_i`, `A_{i,i+1} = A_{i+1,i} = Jx_i + Jy_i`,
/// `B_{i,i+1} = −B_{i+1,i} = Jx_i − Jy_i`.
pub fn assemble_quadratic_form<T: Real>(chain: &ChainSpec<T>) -> QuadraticForm<T> {
    let n = chain.n_sites();
    let bits = chain.precision_bits();
    let two = T::from_f64(2.0, bits);
    let mut a = Matrix::zeros(n, n, bits);
    let mut b = Matrix::zeros(n, n, bits);
    for i in 0..n {
        a[(i, i)] = two.clone() * chain.field[i].clone();
    }
    for k in 0..n.saturating_sub(1) {
        let sum = chain.jx[k].clone() + chain.jy[k].clone();
        let diff = chain.jx[k].clone() - chain.jy[k].clone();
        a[(k, k + 1)] = sum.clone();
        a[(k + 1, k)] = sum;
        b[(k + 1, k)] = -diff.clone();
        b[(k, k + 1)] = diff;
    }
    QuadraticForm {
        a,
        b,
        precision_bits: bits,
    }
}
