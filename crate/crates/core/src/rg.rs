//! Strongest-bond decimation for XX chains and bond-counting entropies of
//! the resulting singlet pairings.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{sample_strong_disorder_chain, ChainSpec};
use crate::error::{Error, Result};
use crate::linalg::linear_fit;
use crate::precision::Real;

/// One decimation step: the frozen pair of sites (1-based), the bond
/// strength, and the effective bond created between the pair's neighbours.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecimationStep {
    pub left: usize,
    pub right: usize,
    pub ln_strength: f64,
    pub strength: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ln_effective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub effective: Option<f64>,
}

/// Perfect matching of `n_sites` sites into singlets.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingletPairing {
    pub n_sites: usize,
    /// `(p, q)` with `p < q`, 1-based, in formation order.
    pub pairs: Vec<(usize, usize)>,
    pub decimation_log: Vec<DecimationStep>,
}

impl SingletPairing {
    /// `partner[s-1]` is the site paired with `s`.
    pub fn partners(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_sites];
        for &(p, q) in &self.pairs {
            out[p - 1] = q;
            out[q - 1] = p;
        }
        out
    }

    pub fn is_perfect_matching(&self) -> bool {
        let mut seen = vec![false; self.n_sites];
        for &(p, q) in &self.pairs {
            if p == 0 || q > self.n_sites || p >= q || seen[p - 1] || seen[q - 1] {
                return false;
            }
            seen[p - 1] = true;
            seen[q - 1] = true;
        }
        seen.iter().all(|&s| s)
    }

    /// Same pairs regardless of formation order.
    pub fn same_matching(&self, other: &SingletPairing) -> bool {
        self.n_sites == other.n_sites && self.partners() == other.partners()
    }

    /// Columns `p, q`.
    pub fn write_pairs_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["p", "q"])?;
        for &(p, q) in &self.pairs {
            w.write_record([p.to_string(), q.to_string()])?;
        }
        Ok(w.flush()?)
    }

    pub fn decimation_log_json(&self) -> String {
        serde_json::to_string_pretty(&self.decimation_log).expect("decimation log serializes")
    }
}

fn ensure_even(n_sites: usize) -> Result<()> {
    if n_sites == 0 || n_sites % 2 != 0 {
        return Err(Error::InvalidChain(format!(
            "singlet pairings need an even number of sites, got {n_sites}"
        )));
    }
    Ok(())
}

/// Repeatedly freeze the strongest bond `J_max` between active neighbours
/// `l, r` into a singlet and join their outer neighbours with
/// `J̃ = J_left J_right / (2 J_max)`. Ties go to the lowest site index. All
/// strengths are carried as logarithms.
pub fn decimate<T: Real>(chain: &ChainSpec<T>) -> Result<SingletPairing> {
    let n = chain.n_sites();
    ensure_even(n)?;
    if !chain.is_xx() || !chain.has_zero_field() {
        return Err(Error::UnsupportedModel(
            "decimation needs an XX chain (jx = jy) in zero field".into(),
        ));
    }
    let bits = chain.precision_bits();
    let zero = T::zero_at(bits);
    if let Some(j) = chain.jx().iter().find(|j| **j <= zero) {
        return Err(Error::InvalidChain(format!("decimation needs positive couplings, got {j}")));
    }
    let ln2 = T::from_f64(2.0, bits).ln();

    // Active sites in order; ln_bond[k] joins active[k] and active[k+1].
    let mut active: Vec<usize> = (1..=n).collect();
    let mut ln_bond: Vec<T> = chain.jx().iter().map(Real::ln).collect();
    let mut pairs = Vec::with_capacity(n / 2);
    let mut log = Vec::with_capacity(n / 2);

    while !active.is_empty() {
        let mut k = 0;
        for i in 1..ln_bond.len() {
            if ln_bond[i] > ln_bond[k] {
                k = i;
            }
        }
        let (l, r) = (active[k], active[k + 1]);
        let ln_max = ln_bond[k].clone();
        let ln_new = (k > 0 && k + 2 < active.len()).then(|| {
            ln_bond[k - 1].clone() + ln_bond[k + 1].clone() - ln2.clone() - ln_max.clone()
        });
        log.push(DecimationStep {
            left: l,
            right: r,
            ln_strength: ln_max.to_f64(),
            strength: ln_max.exp().to_f64(),
            ln_effective: ln_new.as_ref().map(Real::to_f64),
            effective: ln_new.as_ref().map(|x| x.exp().to_f64()),
        });
        pairs.push((l, r));

        active.drain(k..k + 2);
        match ln_new {
            Some(v) => {
                ln_bond.splice(k - 1..k + 2, [v]);
            }
            None if ln_bond.len() == 1 => ln_bond.clear(),
            None if k == 0 => {
                ln_bond.drain(0..2);
            }
            None => {
                ln_bond.drain(k - 1..k + 1);
            }
        }
    }
    Ok(SingletPairing {
        n_sites: n,
        pairs,
        decimation_log: log,
    })
}

/// `J̃_0 = J_0`, `J̃_i = J_i² / (2 J̃_{i−1})`: the effective couplings of a
/// mirror-symmetric chain that decimates from the centre outwards.
pub fn symmetric_effective_couplings(strengths: &[f64]) -> impl Iterator<Item = f64> + '_ {
    let ln2 = std::f64::consts::LN_2;
    let mut prev: Option<f64> = None;
    strengths.iter().map(move |&j| {
        let next = match prev {
            None => j.ln(),
            Some(p) => 2.0 * j.ln() - ln2 - p,
        };
        prev = Some(next);
        next.exp()
    })
}

/// Singlets between sites `N/2 − i + 1` and `N/2 + i`, `i = 1 … N/2`.
pub fn concentric_pairing(n_sites: usize) -> Result<SingletPairing> {
    ensure_even(n_sites)?;
    let half = n_sites / 2;
    Ok(SingletPairing {
        n_sites,
        pairs: (1..=half).map(|i| (half - i + 1, half + i)).collect(),
        decimation_log: Vec::new(),
    })
}

/// Number of singlets with exactly one site in `start..start+len−1`.
pub fn pairing_entropy(pairing: &SingletPairing, start: usize, len: usize) -> Result<usize> {
    let n = pairing.n_sites;
    if start == 0 || len == 0 || start + len - 1 > n {
        return Err(Error::InvalidBlock(format!(
            "block start={start} len={len} does not fit in {n} sites"
        )));
    }
    let inside = |s: usize| s >= start && s < start + len;
    Ok(pairing
        .pairs
        .iter()
        .filter(|&&(p, q)| inside(p) != inside(q))
        .count())
}

/// Cut counts for every position `i = 1 … N−L+1`, by a sliding window.
pub fn pairing_entropy_positions(pairing: &SingletPairing, len: usize) -> Result<Vec<usize>> {
    let n = pairing.n_sites;
    let mut cut = pairing_entropy(pairing, 1, len)? as i64;
    let partner = pairing.partners();
    let mut out = Vec::with_capacity(n - len + 1);
    out.push(cut as usize);
    for i in 1..=n - len {
        // Window [i, i+L−1] becomes [i+1, i+L].
        let j = i + len;
        let in_old = |s: usize| s >= i && s < j;
        let pi = partner[i - 1];
        cut += if in_old(pi) { 1 } else { -1 };
        let in_new = |s: usize| s > i && s <= j;
        let pj = partner[j - 1];
        cut += if in_new(pj) { -1 } else { 1 };
        out.push(cut as usize);
    }
    Ok(out)
}

/// Mean cut count over all `N−L+1` positions of a block of `len` sites.
pub fn average_pairing_entropy(pairing: &SingletPairing, len: usize) -> Result<f64> {
    let counts = pairing_entropy_positions(pairing, len)?;
    Ok(counts.iter().sum::<usize>() as f64 / counts.len() as f64)
}

/// `(1 − L / (2(N − L))) · L`.
pub fn concentric_average_entropy(n_sites: usize, block_len: usize) -> f64 {
    let (n, l) = (n_sites as f64, block_len as f64);
    (1.0 - l / (2.0 * (n - l))) * l
}

/// Disorder- and position-averaged cut count at one block size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RspRow {
    pub block_len: usize,
    pub mean_entropy_bits: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RspFit {
    /// Slope of mean entropy against `log₂ L`.
    pub slope: f64,
    pub intercept: f64,
    pub rows: Vec<RspRow>,
}

impl RspFit {
    /// Columns `L, mean_entropy_bits, stderr`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["L", "mean_entropy_bits", "stderr"])?;
        for r in &self.rows {
            w.write_record([
                r.block_len.to_string(),
                format!("{:.16e}", r.mean_entropy_bits),
                format!("{:.16e}", r.stderr),
            ])?;
        }
        Ok(w.flush()?)
    }
}

/// Least-squares fit of the ensemble-averaged entropy against `log₂ L`.
pub fn rsp_scaling_fit(ensemble: &[SingletPairing], block_lens: &[usize]) -> Result<RspFit> {
    let mut lens = block_lens.to_vec();
    lens.sort_unstable();
    lens.dedup();
    if lens.len() < 3 {
        return Err(Error::FitUnderdetermined(format!(
            "need at least 3 distinct block sizes, got {}",
            lens.len()
        )));
    }
    if ensemble.is_empty() {
        return Err(Error::FitUnderdetermined("empty ensemble".into()));
    }
    let rows = lens
        .iter()
        .map(|&len| {
            let samples = ensemble
                .iter()
                .map(|p| average_pairing_entropy(p, len))
                .collect::<Result<Vec<_>>>()?;
            let m = samples.len() as f64;
            let mean = samples.iter().sum::<f64>() / m;
            let stderr = if samples.len() > 1 {
                let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0);
                (var / m).sqrt()
            } else {
                0.0
            };
            Ok(RspRow {
                block_len: len,
                mean_entropy_bits: mean,
                stderr,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = rows.iter().map(|r| (r.block_len as f64).log2()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.mean_entropy_bits).collect();
    let fit = linear_fit(&x, &y)?;
    Ok(RspFit {
        slope: fit.slope,
        intercept: fit.intercept,
        rows,
    })
}

/// Decimate `count` strong-disorder chains with seeds `base_seed + k`, in
/// parallel. The ensemble order follows the seeds.
pub fn strong_disorder_ensemble(
    n_sites: usize,
    delta: f64,
    base_seed: u64,
    count: usize,
) -> Result<Vec<SingletPairing>> {
    (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let chain = sample_strong_disorder_chain::<f64>(n_sites, delta, base_seed.wrapping_add(k), 53)?;
            decimate(&chain)
        })
        .collect()
}
