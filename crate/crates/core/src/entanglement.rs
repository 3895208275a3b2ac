//! Block entropies from correlation-matrix blocks, plus the Frobenius and β
//! diagnostics of the near-maximal regime.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{linear_fit, singular_values, Matrix};
use crate::precision::Real;
use crate::solver::CorrelationMatrix;

/// Singular values above `1 + PHYSICALITY_SLACK` are rejected, not clipped.
pub const PHYSICALITY_SLACK: f64 = 1e-8;

/// Contiguous block of `block_len` sites starting at `block_start` (1-based).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockSpectrum {
    pub block_start: usize,
    pub block_len: usize,
    pub nus: Vec<f64>,
    pub entropy_bits: f64,
}

fn check_block(n: usize, start: usize, len: usize) -> Result<()> {
    if start == 0 || len == 0 || start + len - 1 > n {
        return Err(Error::InvalidBlock(format!(
            "block start={start} len={len} does not fit in {n} sites"
        )));
    }
    Ok(())
}

/// `T = G[start..start+len-1, start..start+len-1]`, 1-based and inclusive.
pub fn block_submatrix<T: Real>(g: &Matrix<T>, start: usize, len: usize) -> Result<Matrix<T>> {
    check_block(g.rows(), start, len)?;
    let idx: Vec<usize> = (start - 1..start - 1 + len).collect();
    Ok(g.select(&idx, &idx))
}

/// Rows and columns of `g` restricted to the given 1-based sites.
pub fn site_submatrix<T: Real>(g: &Matrix<T>, sites: &[usize]) -> Result<Matrix<T>> {
    let n = g.rows();
    if sites.is_empty() || sites.iter().any(|&s| s == 0 || s > n) {
        return Err(Error::InvalidBlock(format!("site set {sites:?} is not within 1..={n}")));
    }
    let idx: Vec<usize> = sites.iter().map(|s| s - 1).collect();
    Ok(g.select(&idx, &idx))
}

/// Singular values of `T`, clipped into `[0, 1]` and sorted descending.
pub fn nu_spectrum<T: Real>(t: &Matrix<T>) -> Result<Vec<f64>> {
    if t.rows() == 0 {
        return Ok(Vec::new());
    }
    let s = singular_values(t)?;
    s.iter()
        .map(|x| {
            let v = x.to_f64();
            if !(v <= 1.0 + PHYSICALITY_SLACK) {
                return Err(Error::PhysicalityViolation(format!(
                    "block singular value {v} exceeds 1"
                )));
            }
            Ok(v.clamp(0.0, 1.0))
        })
        .collect()
}

/// `H(p) = −p log₂ p − (1−p) log₂(1−p)` with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    binary_entropy_pair(p, 1.0 - p)
}

fn binary_entropy_pair(p: f64, q: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    term(p) + term(q)
}

/// Entropy of one mode with singular value `ν`: `H((1+ν)/2)`.
pub fn mode_entropy(nu: f64) -> f64 {
    binary_entropy_pair(0.5 * (1.0 + nu), 0.5 * (1.0 - nu))
}

/// Deficit of one mode from a full bit: `h(ν) = 1 − H((1+ν)/2)`.
pub fn h(nu: f64) -> f64 {
    if nu > 0.5 {
        return 1.0 - mode_entropy(nu);
    }
    // (1+ν)ln(1+ν) + (1−ν)ln(1−ν) rearranged to avoid cancellation at small ν.
    (2.0 * nu * nu.atanh() + (-nu * nu).ln_1p()) / (2.0 * std::f64::consts::LN_2)
}

/// `S = Σ_k H((1+ν_k)/2)` in bits.
pub fn block_entropy(nus: &[f64]) -> f64 {
    nus.iter().map(|&v| mode_entropy(v)).sum()
}

/// Spectrum and entropy of one contiguous block.
pub fn block_spectrum<T: Real>(g: &Matrix<T>, start: usize, len: usize) -> Result<BlockSpectrum> {
    let t = block_submatrix(g, start, len)?;
    let nus = nu_spectrum(&t)?;
    Ok(BlockSpectrum {
        block_start: start,
        block_len: len,
        entropy_bits: block_entropy(&nus),
        nus,
    })
}

/// Entropy of an arbitrary set of 1-based sites.
pub fn site_set_entropy<T: Real>(g: &Matrix<T>, sites: &[usize]) -> Result<f64> {
    Ok(block_entropy(&nu_spectrum(&site_submatrix(g, sites)?)?))
}

/// `‖T‖_F²` and the near-maximal prediction `S ≈ L − ‖T‖_F²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FrobeniusDiagnostic {
    pub fro_sq: f64,
    pub entropy_prediction: f64,
}

pub fn frobenius_diagnostic<T: Real>(t: &Matrix<T>) -> FrobeniusDiagnostic {
    let bits = t.as_slice().first().map(Real::bits).unwrap_or(53);
    let fro_sq = t.frobenius_sq(bits).to_f64();
    FrobeniusDiagnostic {
        fro_sq,
        entropy_prediction: t.rows() as f64 - fro_sq,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingClass {
    Maximal,
    VolumeLaw,
    SubVolumeLaw,
}

impl std::fmt::Display for ScalingClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScalingClass::Maximal => "maximal",
            ScalingClass::VolumeLaw => "volume-law",
            ScalingClass::SubVolumeLaw => "sub-volume-law",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BetaEstimate {
    pub beta: f64,
    pub block_len: usize,
    pub class: ScalingClass,
}

const CLASS_TOLERANCE: f64 = 1e-12;

/// `β̂ = (1/L) Σ_k h(ν_k)` for one block spectrum.
pub fn beta_of(nus: &[f64]) -> f64 {
    if nus.is_empty() {
        return 0.0;
    }
    nus.iter().map(|&v| h(v)).sum::<f64>() / nus.len() as f64
}

/// β̂ from the largest block among `spectra`, with its scaling class.
pub fn beta_estimate(spectra: &[Vec<f64>]) -> Option<BetaEstimate> {
    let largest = spectra.iter().max_by_key(|s| s.len())?;
    let beta = beta_of(largest);
    let class = if beta <= CLASS_TOLERANCE {
        ScalingClass::Maximal
    } else if beta >= 1.0 - CLASS_TOLERANCE {
        ScalingClass::SubVolumeLaw
    } else {
        ScalingClass::VolumeLaw
    };
    Some(BetaEstimate {
        beta,
        block_len: largest.len(),
        class,
    })
}

/// Exponent `p` of `|T_ij| ~ (ij)^{-p}` (1-based block indices), fitted by
/// least squares over entries above `1e-14 · max|T|`. Returns `+∞` when
/// `T = 0`.
pub fn decay_exponent_fit(t: &Matrix<f64>) -> Result<f64> {
    let max = t.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return Ok(f64::INFINITY);
    }
    let floor = 1e-14 * max;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for i in 0..t.rows() {
        for j in 0..t.cols() {
            let v = t[(i, j)].abs();
            if v > floor {
                x.push((((i + 1) * (j + 1)) as f64).ln());
                y.push(v.ln());
            }
        }
    }
    Ok(-linear_fit(&x, &y)?.slope)
}

/// All blocks of one size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    pub block_len: usize,
    /// `S_L(i)` for `i = 1 … N−L+1`.
    pub per_position: Vec<f64>,
    pub average: f64,
    pub end_entropy: f64,
    pub end_nus: Vec<f64>,
    pub fro_sq: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyCurve {
    pub n_sites: usize,
    pub rows: Vec<CurveRow>,
    pub beta: Option<BetaEstimate>,
}

fn curve_row<T: Real>(g: &Matrix<T>, len: usize, positions: bool) -> Result<CurveRow> {
    let n = g.rows();
    let end_t = block_submatrix(g, 1, len)?;
    let end_nus = nu_spectrum(&end_t)?;
    let end_entropy = block_entropy(&end_nus);
    let per_position = if positions {
        (1..=n - len + 1)
            .map(|i| {
                if i == 1 {
                    Ok(end_entropy)
                } else {
                    block_spectrum(g, i, len).map(|b| b.entropy_bits)
                }
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![end_entropy]
    };
    let average = per_position.iter().sum::<f64>() / per_position.len() as f64;
    Ok(CurveRow {
        block_len: len,
        average,
        end_entropy,
        fro_sq: frobenius_diagnostic(&end_t).fro_sq,
        beta: beta_of(&end_nus),
        end_nus,
        per_position,
    })
}

/// β̂ uses end blocks up to `N/2`; longer end blocks are complements of
/// shorter ones and carry no new information.
fn assemble_curve(n: usize, rows: Vec<CurveRow>) -> EntropyCurve {
    let spectra: Vec<Vec<f64>> = rows
        .iter()
        .filter(|r| 2 * r.block_len <= n)
        .map(|r| r.end_nus.clone())
        .collect();
    EntropyCurve {
        n_sites: n,
        beta: beta_estimate(&spectra),
        rows,
    }
}

/// `S_L(i)` for every `L ∈ 1..N−1` and every position, with end-block
/// diagnostics.
pub fn entropy_profile<T: Real>(g: &CorrelationMatrix<T>) -> Result<EntropyCurve> {
    let lens: Vec<usize> = (1..g.n()).collect();
    block_profile(g, &lens, true)
}

/// End blocks only, for the given block lengths.
pub fn end_block_profile<T: Real>(g: &CorrelationMatrix<T>, lens: &[usize]) -> Result<EntropyCurve> {
    block_profile(g, lens, false)
}

/// Rows for the given block lengths; with `positions` every placement of
/// each block is evaluated, otherwise only the end block. Rows are computed
/// in parallel and returned in the order of `lens`.
pub fn block_profile<T: Real>(g: &CorrelationMatrix<T>, lens: &[usize], positions: bool) -> Result<EntropyCurve> {
    let rows = lens
        .par_iter()
        .map(|&len| curve_row(&g.g, len, positions))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble_curve(g.n(), rows))
}

impl EntropyCurve {
    pub fn row(&self, len: usize) -> Option<&CurveRow> {
        self.rows.iter().find(|r| r.block_len == len)
    }

    /// Columns `L, position, S_bits`.
    pub fn write_positions_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["L", "position", "S_bits"])?;
        for r in &self.rows {
            for (i, s) in r.per_position.iter().enumerate() {
                w.write_record([r.block_len.to_string(), (i + 1).to_string(), fmt_num(*s)])
                    ?;
            }
        }
        Ok(w.flush()?)
    }

    /// Columns `L, S_end_bits, S_avg_bits, fro_sq, L_minus_fro_sq, beta_est`.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["L", "S_end_bits", "S_avg_bits", "fro_sq", "L_minus_fro_sq", "beta_est"])
            ?;
        for r in &self.rows {
            w.write_record([
                r.block_len.to_string(),
                fmt_num(r.end_entropy),
                fmt_num(r.average),
                fmt_num(r.fro_sq),
                fmt_num(r.block_len as f64 - r.fro_sq),
                fmt_num(r.beta),
            ])
            ?;
        }
        Ok(w.flush()?)
    }
}

/// 17 significant digits, enough to round-trip a double.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_concentric_chain, sample_xy_chain, ChainSpec, CouplingProfile};
    use crate::solver::solve_chain;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn two_site_g() -> Matrix<f64> {
        Matrix::from_row_major(2, 2, vec![0.0, -1.0, -1.0, 0.0])
    }

    #[test]
    fn block_extraction() {
        let g = two_site_g();
        assert_eq!(block_submatrix(&g, 1, 2).unwrap(), g);
        assert_eq!(block_submatrix(&g, 1, 1).unwrap().as_slice(), &[0.0]);
        assert_eq!(block_submatrix(&g, 2, 1).unwrap().as_slice(), &[0.0]);
        assert!(matches!(block_submatrix(&g, 2, 2), Err(Error::InvalidBlock(_))));
        assert!(matches!(block_submatrix(&g, 0, 1), Err(Error::InvalidBlock(_))));
    }

    #[test]
    fn nu_examples() {
        assert_eq!(nu_spectrum(&Matrix::from_row_major(1, 1, vec![0.0])).unwrap(), vec![0.0]);
        let id = Matrix::<f64>::identity(3, 53);
        for v in nu_spectrum(&id).unwrap() {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
        }
        let bad = Matrix::from_row_major(1, 1, vec![1.0 + 1e-6]);
        assert!(matches!(nu_spectrum(&bad), Err(Error::PhysicalityViolation(_))));
        let edge = Matrix::from_row_major(1, 1, vec![-(1.0 + 1e-9)]);
        assert_eq!(nu_spectrum(&edge).unwrap(), vec![1.0]);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(block_entropy(&[0.0]), 1.0);
        assert_eq!(block_entropy(&[1.0]), 0.0);
        assert_abs_diff_eq!(block_entropy(&[0.5]), 0.811_278_124_459_132_9, epsilon = 1e-15);
        assert_abs_diff_eq!(binary_entropy(0.75), 0.811_278_124_459_132_9, epsilon = 1e-15);
    }

    #[test]
    fn h_is_complement_of_mode_entropy() {
        for k in 0..=100 {
            let nu = k as f64 / 100.0;
            assert_abs_diff_eq!(h(nu) + mode_entropy(nu), 1.0, epsilon = 1e-14);
        }
        assert_eq!(h(0.0), 0.0);
        assert_eq!(h(1.0), 1.0);
        // Small-ν expansion h ≈ ν² / (2 ln 2).
        assert_abs_diff_eq!(h(1e-6), 1e-12 / (2.0 * std::f64::consts::LN_2), epsilon = 1e-22);
    }

    #[test]
    fn frobenius_examples() {
        let z = Matrix::<f64>::zeros(3, 3, 53);
        assert_eq!(
            frobenius_diagnostic(&z),
            FrobeniusDiagnostic { fro_sq: 0.0, entropy_prediction: 3.0 }
        );
        let id = Matrix::<f64>::identity(3, 53);
        assert_eq!(
            frobenius_diagnostic(&id),
            FrobeniusDiagnostic { fro_sq: 3.0, entropy_prediction: 0.0 }
        );
    }

    #[test]
    fn beta_examples() {
        let b = beta_estimate(&[vec![0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!((b.beta, b.block_len, b.class), (0.0, 2, ScalingClass::Maximal));
        let b = beta_estimate(&[vec![1.0; 4]]).unwrap();
        assert_eq!((b.beta, b.class), (1.0, ScalingClass::SubVolumeLaw));
        assert!(beta_estimate(&[]).is_none());
    }

    #[test]
    fn exponential_chain_is_volume_law() {
        let c = build_concentric_chain::<f64>(20, &CouplingProfile::exponential(), 53).unwrap();
        let (_, g) = solve_chain(&c, 1e-12).unwrap();
        let curve = end_block_profile(&g, &(1..=10).collect::<Vec<_>>()).unwrap();
        let b = curve.beta.unwrap();
        assert_eq!(b.block_len, 10);
        assert_eq!(b.class, ScalingClass::VolumeLaw);
        assert!(b.beta > 0.0 && b.beta < 1.0);
    }

    #[test]
    fn decay_fit_examples() {
        let t = Matrix::from_fn(6, 6, |i, j| 1.0 / (((i + 1) * (j + 1)) as f64));
        assert_abs_diff_eq!(decay_exponent_fit(&t).unwrap(), 1.0, epsilon = 1e-6);
        let z = Matrix::<f64>::zeros(4, 4, 53);
        assert_eq!(decay_exponent_fit(&z).unwrap(), f64::INFINITY);
    }

    #[test]
    fn singlet_profile() {
        let chain = ChainSpec::<f64>::xx(vec![1.0], 53).unwrap();
        let (_, g) = solve_chain(&chain, 1e-12).unwrap();
        let curve = entropy_profile(&g).unwrap();
        assert_eq!(curve.rows.len(), 1);
        let r = &curve.rows[0];
        assert_abs_diff_eq!(r.per_position[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.per_position[1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.average, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn csv_layout() {
        let chain = ChainSpec::<f64>::uniform_xx(4, 1.0, 53).unwrap();
        let (_, g) = solve_chain(&chain, 1e-12).unwrap();
        let curve = entropy_profile(&g).unwrap();
        let mut pos = Vec::new();
        curve.write_positions_csv(&mut pos).unwrap();
        let pos = String::from_utf8(pos).unwrap();
        assert_eq!(pos.lines().count(), 1 + 4 + 3 + 2);
        assert!(pos.starts_with("L,position,S_bits\n1,1,"));
        let mut sum = Vec::new();
        curve.write_summary_csv(&mut sum).unwrap();
        let sum = String::from_utf8(sum).unwrap();
        assert_eq!(
            sum.lines().next().unwrap(),
            "L,S_end_bits,S_avg_bits,fro_sq,L_minus_fro_sq,beta_est"
        );
        assert_eq!(sum.lines().count(), 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn complement_and_bounds(n in 2usize..10, seed in 0u64..10_000, start in 1usize..10, len in 1usize..10) {
            prop_assume!(start + len - 1 <= n && len < n);
            let chain = sample_xy_chain::<f64>(n, (0.2, 1.0), (0.05, 0.5), seed, 53).unwrap();
            let (_, g) = solve_chain(&chain, 1e-12).unwrap();
            let block: Vec<usize> = (start..start + len).collect();
            let rest: Vec<usize> = (1..=n).filter(|s| !block.contains(s)).collect();
            let sb = site_set_entropy(&g.g, &block).unwrap();
            let sr = site_set_entropy(&g.g, &rest).unwrap();
            prop_assert!((sb - sr).abs() < 1e-8);
            prop_assert!(sb >= 0.0 && sb <= len as f64 + 1e-12);
            let nus = block_spectrum(&g.g, start, len).unwrap().nus;
            let deficit: f64 = nus.iter().map(|&v| h(v)).sum();
            prop_assert!((sb - (len as f64 - deficit)).abs() < 1e-12);
        }

        #[test]
        fn average_is_mean_of_positions(n in 2usize..9, seed in 0u64..10_000) {
            let chain = sample_xy_chain::<f64>(n, (0.2, 1.0), (0.05, 0.5), seed, 53).unwrap();
            let (_, g) = solve_chain(&chain, 1e-12).unwrap();
            let curve = entropy_profile(&g).unwrap();
            for r in &curve.rows {
                prop_assert_eq!(r.per_position.len(), n - r.block_len + 1);
                let mean = r.per_position.iter().sum::<f64>() / r.per_position.len() as f64;
                prop_assert_eq!(mean, r.average);
                prop_assert!(r.per_position.iter().all(|&s| s >= 0.0 && s <= r.block_len as f64 + 1e-12));
            }
        }
    }
}
