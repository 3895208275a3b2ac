//! Bogoliubov modes of the quadratic fermion problem and the ground-state
//! correlation matrix.

use crate::chain::{assemble_quadratic_form, ChainSpec, Provenance, QuadraticForm};
use crate::error::{Error, Result};
use crate::linalg::{svd, Matrix};
use crate::precision::{default_zero_mode_tolerance, Real};

/// Relative residual allowed in `‖(A+B) − Σ Λ_k Φ_kᵀ Ψ_k‖_F ≤ tol ‖A+B‖_F`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Excitation energies `Λ_k` (descending) with paired mode vectors: row `k`
/// of `phi` is `Φ_k`, row `k` of `psi` is `Ψ_k`.
#[derive(Clone, Debug)]
pub struct ModeSet<T> {
    pub lambdas: Vec<T>,
    pub phi: Matrix<T>,
    pub psi: Matrix<T>,
    pub zero_mode_tolerance: f64,
    pub precision_bits: u32,
}

impl<T: Real> ModeSet<T> {
    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    /// `‖M − Σ_k Λ_k Φ_kᵀ Ψ_k‖_F / ‖M‖_F`, or the absolute norm when `M = 0`.
    pub fn relative_residual(&self, m: &Matrix<T>) -> f64 {
        let n = self.n();
        let bits = self.precision_bits;
        let recon = Matrix::from_fn(n, n, |i, j| {
            (0..n).fold(T::zero_at(bits), |acc, k| {
                acc + self.lambdas[k].clone() * self.phi[(k, i)].clone() * self.psi[(k, j)].clone()
            })
        });
        let err = m.sub(&recon).frobenius_sq(bits).to_f64().sqrt();
        let scale = m.frobenius_sq(bits).to_f64().sqrt();
        if scale > 0.0 {
            err / scale
        } else {
            err
        }
    }

    pub fn lambdas_f64(&self) -> Vec<f64> {
        self.lambdas.iter().map(Real::to_f64).collect()
    }
}

/// Ground-state matrix `G_{mn} = ⟨(c†_n − c_n)(c†_m + c_m)⟩`.
#[derive(Clone, Debug)]
pub struct CorrelationMatrix<T> {
    pub g: Matrix<T>,
    pub source: Provenance,
}

impl<T: Real> CorrelationMatrix<T> {
    pub fn n(&self) -> usize {
        self.g.rows()
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        self.g.to_f64()
    }

    /// Row-major CSV dump, one matrix row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n() {
            let row: Vec<String> = self.g.row(i).iter().map(|x| format!("{:.16e}", x.to_f64())).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Modes with the default zero-mode tolerance for the form's precision.
pub fn solve_modes<T: Real>(qf: &QuadraticForm<T>) -> Result<ModeSet<T>> {
    solve_modes_with(qf, default_zero_mode_tolerance(qf.precision_bits))
}

/// SVD of `A + B`: left vectors give `Φ`, right vectors `Ψ`, singular values
/// `Λ`. A mode below `zero_mode_tolerance · max Λ` (or exactly zero) leaves
/// the vacuum ambiguous and is rejected.
pub fn solve_modes_with<T: Real>(qf: &QuadraticForm<T>, zero_mode_tolerance: f64) -> Result<ModeSet<T>> {
    let bits = qf.precision_bits;
    let m = qf.plus();
    if !m.all_finite() {
        return Err(Error::NumericalFailure("A + B has non-finite entries".into()));
    }
    let n = m.rows();
    if n == 0 {
        return Ok(ModeSet {
            lambdas: Vec::new(),
            phi: Matrix::zeros(0, 0, bits),
            psi: Matrix::zeros(0, 0, bits),
            zero_mode_tolerance,
            precision_bits: bits,
        });
    }
    let dec = svd(&m)?;
    let max = dec.s[0].clone();
    let threshold = max.clone() * T::from_f64(zero_mode_tolerance, bits);
    for (k, s) in dec.s.iter().enumerate() {
        if s.is_zero() || *s < threshold {
            return Err(Error::DegenerateGroundState {
                index: k,
                value: s.to_f64(),
                threshold: threshold.to_f64(),
            });
        }
    }
    let modes = ModeSet {
        lambdas: dec.s,
        phi: dec.u.transpose(),
        psi: dec.v.transpose(),
        zero_mode_tolerance,
        precision_bits: bits,
    };
    let res = modes.relative_residual(&m);
    if !(res <= RESIDUAL_TOLERANCE) {
        return Err(Error::NumericalFailure(format!(
            "mode reconstruction residual {res:e} exceeds {RESIDUAL_TOLERANCE:e}"
        )));
    }
    Ok(modes)
}

/// Vacuum energy `−½ Σ_k Λ_k`.
pub fn ground_energy<T: Real>(modes: &ModeSet<T>) -> T {
    let bits = modes.precision_bits;
    let sum = modes
        .lambdas
        .iter()
        .fold(T::zero_at(bits), |acc, l| acc + l.clone());
    -(sum / T::from_f64(2.0, bits))
}

/// `G = −Ψᵀ Φ`.
pub fn correlation_matrix<T: Real>(modes: &ModeSet<T>, source: Provenance) -> CorrelationMatrix<T> {
    let bits = modes.precision_bits;
    let g = modes.psi.transpose().matmul(&modes.phi, bits).map(|x| -x.clone());
    CorrelationMatrix { g, source }
}

/// Assemble, solve and correlate in one step.
pub fn solve_chain<T: Real>(chain: &ChainSpec<T>, zero_mode_tolerance: f64) -> Result<(ModeSet<T>, CorrelationMatrix<T>)> {
    let qf = assemble_quadratic_form(chain);
    let modes = solve_modes_with(&qf, zero_mode_tolerance)?;
    let g = correlation_matrix(&modes, chain.provenance().clone());
    Ok((modes, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_concentric_chain, sample_xy_chain, CouplingProfile};
    use crate::precision::Extended;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn form(chain: &ChainSpec<f64>) -> QuadraticForm<f64> {
        assemble_quadratic_form(chain)
    }

    #[test]
    fn two_site_xx() {
        let chain = ChainSpec::<f64>::xx(vec![1.0], 53).unwrap();
        let modes = solve_modes(&form(&chain)).unwrap();
        assert_abs_diff_eq!(modes.lambdas[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(modes.lambdas[1], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ground_energy(&modes), -2.0, epsilon = 1e-14);
        let g = correlation_matrix(&modes, Provenance::default());
        let expect = [0.0, -1.0, -1.0, 0.0];
        for (x, y) in g.g.as_slice().iter().zip(expect) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-14);
        }
    }

    #[test]
    fn single_site_field() {
        let chain = ChainSpec::<f64>::new(vec![], vec![], vec![0.3], 53).unwrap();
        let modes = solve_modes(&form(&chain)).unwrap();
        assert_abs_diff_eq!(modes.lambdas[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(modes.phi[(0, 0)].abs(), 1.0, epsilon = 1e-15);
        assert_eq!(modes.phi[(0, 0)], modes.psi[(0, 0)]);
        let g = correlation_matrix(&modes, Provenance::default());
        assert_abs_diff_eq!(g.g[(0, 0)], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn empty_energy_is_zero() {
        let modes = ModeSet::<f64> {
            lambdas: vec![],
            phi: Matrix::zeros(0, 0, 53),
            psi: Matrix::zeros(0, 0, 53),
            zero_mode_tolerance: 1e-12,
            precision_bits: 53,
        };
        assert_eq!(ground_energy(&modes), 0.0);
    }

    #[test]
    fn zero_mode_is_rejected() {
        // Odd uniform XX chain has an exact zero mode.
        let chain = ChainSpec::<f64>::uniform_xx(3, 1.0, 53).unwrap();
        assert!(matches!(
            solve_modes(&form(&chain)),
            Err(Error::DegenerateGroundState { .. })
        ));
        let free = ChainSpec::<f64>::new(vec![0.0], vec![0.0], vec![0.0, 1.0], 53).unwrap();
        assert!(matches!(
            solve_modes_with(&form(&free), 0.0),
            Err(Error::DegenerateGroundState { .. })
        ));
    }

    #[test]
    fn non_finite_is_numerical_failure() {
        let mut qf = form(&ChainSpec::<f64>::xx(vec![1.0], 53).unwrap());
        qf.a[(0, 1)] = f64::INFINITY;
        assert!(matches!(solve_modes(&qf), Err(Error::NumericalFailure(_))));
    }

    #[test]
    fn squared_eigenproblem_holds() {
        let chain = sample_xy_chain::<f64>(8, (0.2, 1.0), (0.0, 0.5), 3, 53).unwrap();
        let qf = form(&chain);
        let modes = solve_modes(&qf).unwrap();
        // (A − B)(A + B) Ψ_kᵀ = Λ_k² Ψ_kᵀ
        let prod = qf.minus().matmul(&qf.plus(), 53);
        for k in 0..8 {
            for i in 0..8 {
                let lhs: f64 = (0..8).map(|j| prod[(i, j)] * modes.psi[(k, j)]).sum();
                let rhs = modes.lambdas[k].powi(2) * modes.psi[(k, i)];
                assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn xx_half_filling_diagonal() {
        let chain = build_concentric_chain::<f64>(12, &CouplingProfile::exponential(), 53).unwrap();
        let (_, g) = solve_chain(&chain, 1e-12).unwrap();
        for i in 0..12 {
            assert_abs_diff_eq!(g.g[(i, i)], 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn correlation_is_minus_polar_factor_transpose() {
        // Independent route: G = −Qᵀ where Q = (A+B) ((A+B)ᵀ(A+B))^{-1/2},
        // computed here by Newton iteration on the polar decomposition.
        let chain = sample_xy_chain::<f64>(6, (0.2, 1.0), (0.1, 0.5), 11, 53).unwrap();
        let qf = form(&chain);
        let (_, g) = solve_chain(&chain, 1e-12).unwrap();
        let mut q = qf.plus();
        for _ in 0..60 {
            let inv_t = invert(&q).transpose();
            q = Matrix::from_fn(6, 6, |i, j| 0.5 * (q[(i, j)] + inv_t[(i, j)]));
        }
        for i in 0..6 {
            for j in 0..6 {
                assert_abs_diff_eq!(g.g[(i, j)], -q[(j, i)], epsilon = 1e-12);
            }
        }
    }

    fn invert(m: &Matrix<f64>) -> Matrix<f64> {
        let n = m.rows();
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut r = m.row(i).to_vec();
                r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
                r
            })
            .collect();
        for c in 0..n {
            let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
            a.swap(c, p);
            let d = a[c][c];
            for x in a[c].iter_mut() {
                *x /= d;
            }
            for r in 0..n {
                if r != c {
                    let f = a[r][c];
                    for k in 0..2 * n {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        Matrix::from_fn(n, n, |i, j| a[i][n + j])
    }

    #[test]
    fn extended_matches_double_on_gaussian_chain() {
        let p = CouplingProfile::gaussian();
        let c64 = build_concentric_chain::<f64>(20, &p, 53).unwrap();
        let cext = build_concentric_chain::<Extended>(20, &p, 256).unwrap();
        let (_, g64) = solve_chain(&c64, 0.0).unwrap();
        let (_, gext) = solve_chain(&cext, 0.0).unwrap();
        let gext = gext.to_f64();
        for (a, b) in g64.g.as_slice().iter().zip(gext.as_slice()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn mode_invariants(n in 2usize..10, seed in 0u64..10_000) {
            let chain = sample_xy_chain::<f64>(n, (0.2, 1.0), (0.05, 0.5), seed, 53).unwrap();
            let qf = form(&chain);
            let modes = solve_modes(&qf).unwrap();
            let pp = modes.phi.matmul(&modes.phi.transpose(), 53);
            let ss = modes.psi.matmul(&modes.psi.transpose(), 53);
            for i in 0..n {
                for j in 0..n {
                    let id = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((pp[(i, j)] - id).abs() < 1e-10);
                    prop_assert!((ss[(i, j)] - id).abs() < 1e-10);
                }
            }
            prop_assert!(modes.lambdas.iter().all(|&l| l >= 0.0));
            // (A − B) Φ_kᵀ = Λ_k Ψ_kᵀ
            let minus = qf.minus();
            for k in 0..n {
                for i in 0..n {
                    let lhs: f64 = (0..n).map(|j| minus[(i, j)] * modes.phi[(k, j)]).sum();
                    prop_assert!((lhs - modes.lambdas[k] * modes.psi[(k, i)]).abs() < 1e-10);
                }
            }
            prop_assert!(modes.relative_residual(&qf.plus()) <= RESIDUAL_TOLERANCE);
        }

        #[test]
        fn squared_rows_and_columns_sum_to_one(n in 2usize..10, seed in 0u64..10_000) {
            let chain = sample_xy_chain::<f64>(n, (0.2, 1.0), (0.05, 0.5), seed, 53).unwrap();
            let (_, g) = solve_chain(&chain, 1e-12).unwrap();
            for i in 0..n {
                let row: f64 = (0..n).map(|j| g.g[(i, j)].powi(2)).sum();
                let col: f64 = (0..n).map(|j| g.g[(j, i)].powi(2)).sum();
                prop_assert!((row - 1.0).abs() < 1e-8);
                prop_assert!((col - 1.0).abs() < 1e-8);
            }
        }

        #[test]
        fn reversal_reverses_g(n in 2usize..10, seed in 0u64..10_000, xx in any::<bool>()) {
            let chain = if xx {
                let c = sample_xy_chain::<f64>(n, (0.2, 1.0), (0.05, 0.5), seed, 53).unwrap();
                ChainSpec::new(c.jx().to_vec(), c.jx().to_vec(), c.field().to_vec(), 53).unwrap()
            } else {
                sample_xy_chain::<f64>(n, (0.2, 1.0), (0.05, 0.5), seed, 53).unwrap()
            };
            let (_, g) = solve_chain(&chain, 1e-12).unwrap();
            let (_, gr) = solve_chain(&chain.reversed(), 1e-12).unwrap();
            for i in 0..n {
                for j in 0..n {
                    // Reversal maps B to −B, so for XY chains G is also transposed.
                    let expect = if xx { g.g[(n - 1 - i, n - 1 - j)] } else { g.g[(n - 1 - j, n - 1 - i)] };
                    prop_assert!((gr.g[(i, j)] - expect).abs() < 1e-10);
                }
            }
        }
    }
}
