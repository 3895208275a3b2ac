//! Dense exact diagonalization of small chains: ground states, reduced
//! density matrices, von Neumann entropies and second-order degenerate
//! perturbation theory.
//!
//! Basis index bit `N − s` holds site `s` (site 1 is the most significant
//! bit) and `σ^z|0⟩ = +|0⟩`.

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::chain::ChainSpec;
use crate::error::{Error, Result};

/// Largest chain the dense oracle accepts.
pub const MAX_DENSE_SITES: usize = 14;

/// Relative gap below which a ground state is flagged degenerate.
pub const DEGENERACY_GAP: f64 = 1e-10;

/// Sign and normalization of the spin Hamiltonian built from a chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `−½ Σ (Jx σˣσˣ + Jy σʸσʸ) − Σ λ σᶻ`.
    HalfCoupling,
    /// `+Σ (Jx σˣσˣ + Jy σʸσʸ) − Σ λ σᶻ`.
    Antiferro,
    /// `−Σ (Jx σˣσˣ + Jy σʸσʸ) − Σ λ σᶻ`, whose ground energy is `−½ Σ Λ_k`
    /// of the free-fermion modes.
    JordanWigner,
}

fn check_size(n: usize) -> Result<()> {
    if n > MAX_DENSE_SITES {
        return Err(Error::TooLarge {
            n_sites: n,
            limit: MAX_DENSE_SITES,
        });
    }
    Ok(())
}

fn site_bit(n: usize, site: usize) -> usize {
    1 << (n - site)
}

/// Dense `2^N × 2^N` Hamiltonian of an open chain.
pub fn build_dense_hamiltonian(chain: &ChainSpec<f64>, convention: Convention) -> Result<Mat<f64>> {
    let n = chain.n_sites();
    check_size(n)?;
    let dim = 1usize << n;
    let scale = match convention {
        Convention::HalfCoupling => -0.5,
        Convention::Antiferro => 1.0,
        Convention::JordanWigner => -1.0,
    };
    let mut h = Mat::<f64>::zeros(dim, dim);
    for x in 0..dim {
        let mut diag = 0.0;
        for s in 1..=n {
            let up = x & site_bit(n, s) == 0;
            diag -= chain.field()[s - 1] * if up { 1.0 } else { -1.0 };
        }
        h[(x, x)] += diag;
        for k in 0..n.saturating_sub(1) {
            let (a, b) = (site_bit(n, k + 1), site_bit(n, k + 2));
            let equal = (x & a == 0) == (x & b == 0);
            let (jx, jy) = (chain.jx()[k], chain.jy()[k]);
            let amp = if equal { jx - jy } else { jx + jy };
            if amp != 0.0 {
                h[(x ^ a ^ b, x)] += scale * amp;
            }
        }
    }
    Ok(h)
}

/// Real ground vector of a dense symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseState {
    /// `log₂` of the dimension, or `None` when the dimension is not a power of two.
    pub n_sites: Option<usize>,
    pub amplitudes: Vec<f64>,
    pub energy: f64,
    pub gap: f64,
    pub degenerate: bool,
}

/// Eigenvalues ascending with matching eigenvector columns.
pub fn eigh(h: &Mat<f64>) -> (Vec<f64>, Mat<f64>) {
    let evd = h.selfadjoint_eigendecomposition(Side::Lower);
    let s = evd.s().column_vector();
    let dim = h.nrows();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| s.read(a).total_cmp(&s.read(b)));
    let values = order.iter().map(|&i| s.read(i)).collect();
    let u = evd.u();
    let vectors = Mat::from_fn(dim, dim, |i, j| u.read(i, order[j]));
    (values, vectors)
}

/// Lowest eigenpair. The sign is fixed by making the largest-magnitude
/// amplitude (lowest index on ties) positive.
pub fn ground_state(h: &Mat<f64>) -> Result<DenseState> {
    let dim = h.nrows();
    if dim == 0 || h.ncols() != dim {
        return Err(Error::NumericalFailure("ground state needs a non-empty square matrix".into()));
    }
    let (values, vectors) = eigh(h);
    let mut amplitudes: Vec<f64> = (0..dim).map(|i| vectors.read(i, 0)).collect();
    let max = amplitudes.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let lead = amplitudes
        .iter()
        .position(|a| a.abs() >= max - 1e-12)
        .unwrap_or(0);
    if amplitudes[lead] < 0.0 {
        amplitudes.iter_mut().for_each(|a| *a = -*a);
    }
    let range = values[dim - 1] - values[0];
    let gap = if dim > 1 { values[1] - values[0] } else { f64::INFINITY };
    Ok(DenseState {
        n_sites: dim.is_power_of_two().then(|| dim.trailing_zeros() as usize),
        amplitudes,
        energy: values[0],
        gap,
        degenerate: dim > 1 && gap <= DEGENERACY_GAP * range,
    })
}

/// Computational basis vector for the given bits (site 1 first).
pub fn basis_state(bits: &[u8]) -> Vec<f64> {
    let n = bits.len();
    let idx = bits
        .iter()
        .enumerate()
        .filter(|(_, &b)| b != 0)
        .fold(0usize, |acc, (s, _)| acc | site_bit(n, s + 1));
    let mut v = vec![0.0; 1 << n];
    v[idx] = 1.0;
    v
}

/// `tr_{complement} |ψ⟩⟨ψ|` for a set of 1-based sites. The reduced basis
/// orders the block's sites ascending, first site most significant.
pub fn reduced_density(state: &DenseState, block: &[usize]) -> Result<Mat<f64>> {
    let n = state
        .n_sites
        .ok_or_else(|| Error::InvalidBlock("state dimension is not a power of two".into()))?;
    let mut sites = block.to_vec();
    sites.sort_unstable();
    sites.dedup();
    if sites.is_empty() || sites.len() != block.len() || sites.len() >= n || sites.iter().any(|&s| s == 0 || s > n) {
        return Err(Error::InvalidBlock(format!(
            "block {block:?} must be a non-empty proper subset of 1..={n} without repeats"
        )));
    }
    let rest: Vec<usize> = (1..=n).filter(|s| !sites.contains(s)).collect();
    let (db, dc) = (1usize << sites.len(), 1usize << rest.len());
    let pack = |x: usize, set: &[usize]| {
        set.iter()
            .fold(0usize, |acc, &s| (acc << 1) | usize::from(x & site_bit(n, s) != 0))
    };
    let mut psi = Mat::<f64>::zeros(db, dc);
    for (x, &a) in state.amplitudes.iter().enumerate() {
        psi[(pack(x, &sites), pack(x, &rest))] = a;
    }
    Ok(&psi * psi.transpose())
}

/// Clipping threshold for small negative density-matrix eigenvalues.
pub const NEGATIVE_EIGEN_SLACK: f64 = 1e-10;

/// `−Σ p log₂ p` over the eigenvalues of `rho`.
pub fn entropy_vn(rho: &Mat<f64>) -> Result<f64> {
    let values = rho.selfadjoint_eigenvalues(Side::Lower);
    let mut s = 0.0;
    for p in values {
        if p < -NEGATIVE_EIGEN_SLACK {
            return Err(Error::PhysicalityViolation(format!(
                "density matrix eigenvalue {p:e} is negative"
            )));
        }
        if p > 0.0 {
            s -= p * p.log2();
        }
    }
    Ok(s.max(0.0))
}

/// Entropy of the contiguous block `start..start+len−1`.
pub fn block_entropy(state: &DenseState, start: usize, len: usize) -> Result<f64> {
    let block: Vec<usize> = (start..start + len).collect();
    entropy_vn(&reduced_density(state, &block)?)
}

fn check_orthonormal(basis: &[Vec<f64>], dim: usize) -> Result<()> {
    for (a, u) in basis.iter().enumerate() {
        if u.len() != dim {
            return Err(Error::InvalidSubspace(format!(
                "basis vector {a} has length {}, expected {dim}",
                u.len()
            )));
        }
        for (b, v) in basis.iter().enumerate().skip(a) {
            let d: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
            let want = if a == b { 1.0 } else { 0.0 };
            if (d - want).abs() > 1e-10 {
                return Err(Error::InvalidSubspace(format!(
                    "basis vectors {a} and {b} have overlap {d}, expected {want}"
                )));
            }
        }
    }
    Ok(())
}

fn apply(h: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    (0..h.nrows())
        .map(|i| (0..h.ncols()).map(|j| h.read(i, j) * v[j]).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `⟨b_m| H |b_n⟩` on an orthonormal subspace basis.
pub fn effective_hamiltonian_projection(h: &Mat<f64>, basis: &[Vec<f64>]) -> Result<Mat<f64>> {
    check_orthonormal(basis, h.nrows())?;
    let hb: Vec<Vec<f64>> = basis.iter().map(|b| apply(h, b)).collect();
    let d = basis.len();
    Ok(Mat::from_fn(d, d, |m, n| dot(&basis[m], &hb[n])))
}

/// Second-order degenerate perturbation theory on one level of `h0`.
#[derive(Clone, Debug)]
pub struct PTResult {
    /// `M_{mm'} = Σ_k ⟨m|V|k⟩⟨k|V|m'⟩ / (E⁽⁰⁾ − E_k)` over levels outside the subspace.
    pub effective_matrix: Mat<f64>,
    pub unperturbed_energy: f64,
    /// Eigenvalues of `effective_matrix`, ascending: the `λ²` coefficients.
    pub second_order: Vec<f64>,
    pub subspace_dim: usize,
}

impl PTResult {
    /// `E⁽⁰⁾ + λ² E⁽²⁾` per level.
    pub fn energies_at(&self, lambda: f64) -> Vec<f64> {
        self.second_order
            .iter()
            .map(|e| self.unperturbed_energy + lambda * lambda * e)
            .collect()
    }
}

/// Second-order matrix for `h0 + λ v` on the degenerate level spanned by
/// `degenerate_basis`. Fails when the first-order matrix does not vanish.
pub fn degenerate_pt2(h0: &Mat<f64>, v: &Mat<f64>, degenerate_basis: &[Vec<f64>]) -> Result<PTResult> {
    let dim = h0.nrows();
    if degenerate_basis.is_empty() {
        return Err(Error::InvalidSubspace("empty degenerate basis".into()));
    }
    check_orthonormal(degenerate_basis, dim)?;
    let (values, vectors) = eigh(h0);
    let range = (values[dim - 1] - values[0]).max(1.0);
    let e0 = dot(&degenerate_basis[0], &apply(h0, &degenerate_basis[0]));
    for (m, b) in degenerate_basis.iter().enumerate() {
        let hb = apply(h0, b);
        let res = hb.iter().zip(b).map(|(x, y)| (x - e0 * y).powi(2)).sum::<f64>().sqrt();
        if res > 1e-10 * range {
            return Err(Error::InvalidSubspace(format!(
                "basis vector {m} is not an eigenvector of h0 at energy {e0}"
            )));
        }
    }
    let level_tol = 1e-9 * range;
    let on_level = values.iter().filter(|e| (*e - e0).abs() <= level_tol).count();
    if on_level != degenerate_basis.len() {
        return Err(Error::InvalidSubspace(format!(
            "level {e0} has multiplicity {on_level} but {} basis vectors were given",
            degenerate_basis.len()
        )));
    }

    let first = effective_hamiltonian_projection(v, degenerate_basis)?;
    let first_max = (0..first.nrows())
        .flat_map(|i| (0..first.ncols()).map(move |j| (i, j)))
        .fold(0.0f64, |m, (i, j)| m.max(first.read(i, j).abs()));
    if first_max > 1e-12 {
        return Err(Error::FirstOrderNotZero(first_max));
    }

    let d = degenerate_basis.len();
    let vb: Vec<Vec<f64>> = degenerate_basis.iter().map(|b| apply(v, b)).collect();
    let mut m = Mat::<f64>::zeros(d, d);
    for k in 0..dim {
        if (values[k] - e0).abs() <= level_tol {
            continue;
        }
        let col: Vec<f64> = (0..dim).map(|i| vectors.read(i, k)).collect();
        let overlaps: Vec<f64> = vb.iter().map(|x| dot(&col, x)).collect();
        let denom = e0 - values[k];
        for a in 0..d {
            for b in 0..d {
                m[(a, b)] += overlaps[a] * overlaps[b] / denom;
            }
        }
    }
    let mut second_order = m.selfadjoint_eigenvalues(Side::Lower);
    second_order.sort_by(f64::total_cmp);
    Ok(PTResult {
        effective_matrix: m,
        unperturbed_energy: e0,
        second_order,
        subspace_dim: d,
    })
}

/// Row-major copy of a dense matrix.
pub fn to_rows(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m.read(i, j)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn xx(bonds: Vec<f64>) -> ChainSpec<f64> {
        ChainSpec::xx(bonds, 53).unwrap()
    }

    fn spectrum(h: &Mat<f64>) -> Vec<f64> {
        eigh(h).0
    }

    fn singlet(n: usize, a: usize, b: usize) -> Vec<f64> {
        // (|..0_a..1_b..⟩ − |..1_a..0_b..⟩)/√2 with all other sites 0
        let mut v = vec![0.0; 1 << n];
        v[site_bit(n, b)] = std::f64::consts::FRAC_1_SQRT_2;
        v[site_bit(n, a)] = -std::f64::consts::FRAC_1_SQRT_2;
        v
    }

    #[test]
    fn two_site_conventions() {
        let c = xx(vec![1.0]);
        let e = spectrum(&build_dense_hamiltonian(&c, Convention::HalfCoupling).unwrap());
        assert_abs_diff_eq!(e[0], -1.0, epsilon = 1e-14);
        let gs = ground_state(&build_dense_hamiltonian(&c, Convention::HalfCoupling).unwrap()).unwrap();
        // Symmetric triplet (|01⟩ + |10⟩)/√2.
        assert_abs_diff_eq!(gs.amplitudes[1], gs.amplitudes[2], epsilon = 1e-14);

        let h = build_dense_hamiltonian(&c, Convention::Antiferro).unwrap();
        let e = spectrum(&h);
        for (x, y) in e.iter().zip([-2.0, 0.0, 0.0, 2.0]) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-14);
        }
        let gs = ground_state(&h).unwrap();
        assert_abs_diff_eq!(gs.energy, -2.0, epsilon = 1e-14);
        let s = singlet(2, 1, 2);
        let overlap: f64 = dot(&gs.amplitudes, &s);
        assert_abs_diff_eq!(overlap.abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn single_spin_zeeman() {
        let c = ChainSpec::<f64>::new(vec![], vec![], vec![0.4], 53).unwrap();
        let h = build_dense_hamiltonian(&c, Convention::HalfCoupling).unwrap();
        assert_eq!(to_rows(&h), vec![vec![-0.4, 0.0], vec![0.0, 0.4]]);
    }

    #[test]
    fn too_large() {
        let c = ChainSpec::<f64>::uniform_xx(15, 1.0, 53).unwrap();
        assert!(matches!(
            build_dense_hamiltonian(&c, Convention::JordanWigner),
            Err(Error::TooLarge { n_sites: 15, limit: 14 })
        ));
    }

    #[test]
    fn diagonal_ground_state() {
        let h = Mat::from_fn(3, 3, |i, j| if i == j { (i + 1) as f64 } else { 0.0 });
        let gs = ground_state(&h).unwrap();
        assert_eq!(gs.energy, 1.0);
        assert_eq!(gs.amplitudes, vec![1.0, 0.0, 0.0]);
        assert!(!gs.degenerate);
        assert_eq!(gs.n_sites, None);
        let d = Mat::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        assert!(ground_state(&d).unwrap().degenerate);
    }

    #[test]
    fn reduced_density_examples() {
        let gs = ground_state(&build_dense_hamiltonian(&xx(vec![1.0]), Convention::Antiferro).unwrap()).unwrap();
        let rho = reduced_density(&gs, &[1]).unwrap();
        assert_abs_diff_eq!(rho.read(0, 0), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(rho.read(1, 1), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(rho.read(0, 1), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(entropy_vn(&rho).unwrap(), 1.0, epsilon = 1e-12);

        let prod = DenseState {
            n_sites: Some(2),
            amplitudes: basis_state(&[0, 0]),
            energy: 0.0,
            gap: 1.0,
            degenerate: false,
        };
        let rho = reduced_density(&prod, &[1]).unwrap();
        assert_eq!(to_rows(&rho), vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(entropy_vn(&rho).unwrap(), 0.0);
        assert!(reduced_density(&prod, &[1, 2]).is_err());
        assert!(reduced_density(&prod, &[]).is_err());
        assert!(reduced_density(&prod, &[3]).is_err());
    }

    #[test]
    fn concentric_four_spin_block_entropy() {
        let lam = 0.01;
        let h = build_dense_hamiltonian(&xx(vec![lam, 1.0, lam]), Convention::Antiferro).unwrap();
        let gs = ground_state(&h).unwrap();
        let s = block_entropy(&gs, 1, 2).unwrap();
        assert!((s - 2.0).abs() < 0.01, "S = {s}");
    }

    #[test]
    fn entropy_vn_examples() {
        let diag = |a: f64, b: f64| Mat::from_fn(2, 2, |i, j| if i != j { 0.0 } else if i == 0 { a } else { b });
        assert_abs_diff_eq!(entropy_vn(&diag(0.5, 0.5)).unwrap(), 1.0, epsilon = 1e-14);
        assert_eq!(entropy_vn(&diag(1.0, 0.0)).unwrap(), 0.0);
        assert_abs_diff_eq!(entropy_vn(&diag(0.75, 0.25)).unwrap(), 0.811_278_124_459_132_9, epsilon = 1e-14);
        assert!(matches!(entropy_vn(&diag(1.1, -0.1)), Err(Error::PhysicalityViolation(_))));
        assert!(entropy_vn(&diag(1.0, -1e-12)).is_ok());
    }

    #[test]
    fn projection_examples() {
        let h = build_dense_hamiltonian(&xx(vec![1.0]), Convention::Antiferro).unwrap();
        let full: Vec<Vec<f64>> = (0..4).map(|k| (0..4).map(|i| if i == k { 1.0 } else { 0.0 }).collect()).collect();
        let p = effective_hamiltonian_projection(&h, &full).unwrap();
        let mut e = spectrum(&p);
        e.sort_by(f64::total_cmp);
        for (x, y) in e.iter().zip(spectrum(&h)) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-14);
        }
        let gs = ground_state(&h).unwrap();
        let one = effective_hamiltonian_projection(&h, &[gs.amplitudes.clone()]).unwrap();
        assert_abs_diff_eq!(one.read(0, 0), gs.energy, epsilon = 1e-14);
        let skew = vec![vec![1.0, 0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0]];
        assert!(matches!(
            effective_hamiltonian_projection(&h, &skew),
            Err(Error::InvalidSubspace(_))
        ));
    }

    #[test]
    fn pt2_zero_perturbation_and_first_order_guard() {
        let h0 = build_dense_hamiltonian(&xx(vec![1.0]), Convention::Antiferro).unwrap();
        let gs = ground_state(&h0).unwrap();
        let zero = Mat::<f64>::zeros(4, 4);
        let r = degenerate_pt2(&h0, &zero, &[gs.amplitudes.clone()]).unwrap();
        assert_eq!(r.effective_matrix.read(0, 0), 0.0);
        let field = ChainSpec::<f64>::new(vec![0.0], vec![0.0], vec![1.0, 1.0], 53).unwrap();
        let h0 = build_dense_hamiltonian(&field, Convention::Antiferro).unwrap();
        let r = degenerate_pt2(&h0, &h0, &[basis_state(&[0, 0])]);
        assert!(matches!(r, Err(Error::FirstOrderNotZero(_))));
    }

    fn four_spin(bonds: [f64; 3]) -> Mat<f64> {
        build_dense_hamiltonian(&xx(bonds.to_vec()), Convention::Antiferro).unwrap()
    }

    #[test]
    fn four_spin_second_order_matches_exact_spectrum() {
        // |a⟩₁|ψ₋⟩₂₃|b⟩₄ for (a, b) = 00, 01, 10, 11.
        let basis: Vec<Vec<f64>> = [(0u8, 0u8), (0, 1), (1, 0), (1, 1)]
            .iter()
            .map(|&(a, b)| {
                let up = basis_state(&[a, 0, 1, b]);
                let down = basis_state(&[a, 1, 0, b]);
                up.iter().zip(&down).map(|(u, d)| (u - d) * std::f64::consts::FRAC_1_SQRT_2).collect()
            })
            .collect();
        let pt = degenerate_pt2(&four_spin([0.0, 1.0, 0.0]), &four_spin([1.0, 0.0, 1.0]), &basis).unwrap();
        assert_abs_diff_eq!(pt.unperturbed_energy, -2.0, epsilon = 1e-14);
        let want = [[-2.0, 0.0, 0.0, 0.0], [0.0, -2.0, 2.0, 0.0], [0.0, 2.0, -2.0, 0.0], [0.0, 0.0, 0.0, -2.0]];
        for (row, w) in to_rows(&pt.effective_matrix).iter().zip(want) {
            for (x, y) in row.iter().zip(w) {
                assert_abs_diff_eq!(*x, y, epsilon = 1e-12);
            }
        }
        // Independent route: the four lowest exact levels at small λ.
        let lambda = 1e-3;
        let exact = spectrum(&four_spin([lambda, 1.0, lambda]));
        for (e, c) in exact.iter().take(4).zip(&pt.second_order) {
            assert_abs_diff_eq!((e + 2.0) / (lambda * lambda), *c, epsilon = 1e-4);
        }
        assert_eq!(pt.energies_at(lambda).len(), 4);
    }
}
