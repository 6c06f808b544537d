//! Moment maps of the torus action on `ℱ` and the functional `φ = ½‖𝝁‖²`.
//!
//! Per cell, `μ_•(F) = −(F*ω_V ∧ ω̂_•)/σ`. Expanding the wedge shows
//! `μ_•(A) = ½⟨ℛ_•A, A⟩` (Frobenius pairing), so `dμ_•(Ḟ) = ⟨ℛ_•F, Ḟ⟩` and the
//! `𝒢`-gradient of `φ` is `Σ_• μ_• ℛ_•F`.
//!
//! The smooth derivation writes `φ` with a factor `½`; the polyhedral one
//! prints `‖𝝁‖²` without it, and the expanded sum once reads
//! `½‖μ_I‖ + ½‖μ_J‖ + ½‖μ_J‖`. We use `φ = ½(‖μ_I‖² + ‖μ_J‖² + ‖μ_K‖²)`, the
//! only choice compatible with the gradient formula and the decay law
//! `d/dt ‖F‖² = −4‖𝝁‖²`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::forms::{CellField, ClosedBasis};
use crate::mesh::TorusMesh;
use crate::quatgeom::{
    omega_hat, pullback, wedge_ratio, FormLabel, Involutions, Matrix4, Structure,
};

/// `(μ_I, μ_J, μ_K)` of a single matrix.
pub fn mu_matrix(a: &Matrix4) -> [f64; 3] {
    let pb = pullback(a, &omega_hat(FormLabel::V));
    Structure::ALL.map(|s| -wedge_ratio(&pb, &omega_hat(s.into())))
}

/// Values of `μ_I, μ_J, μ_K` on every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentValue {
    pub per_cell: Vec<[f64; 3]>,
}

impl MomentValue {
    pub fn get(&self, which: Structure, cell: usize) -> f64 {
        self.per_cell[cell][which.index()]
    }

    /// `‖μ_•‖² = Σ_σ μ_•(σ)² vol(σ)` for each label.
    pub fn norms2(&self, mesh: &TorusMesh) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (c, m) in mesh.cells().iter().zip(&self.per_cell) {
            for k in 0..3 {
                out[k] += m[k] * m[k] * c.volume;
            }
        }
        out
    }

    pub fn norm2(&self, mesh: &TorusMesh) -> f64 {
        self.norms2(mesh).iter().sum()
    }
}

pub fn mu(f: &CellField) -> MomentValue {
    MomentValue { per_cell: f.values().par_iter().map(mu_matrix).collect() }
}

/// `‖𝝁(F)‖² = Σ_• ‖μ_•(F)‖²`
pub fn mu_norm2(mesh: &TorusMesh, f: &CellField) -> f64 {
    mu(f).norm2(mesh)
}

pub fn mu_norm(mesh: &TorusMesh, f: &CellField) -> f64 {
    mu_norm2(mesh, f).sqrt()
}

/// `φ(F) = ½‖𝝁(F)‖² = ½(‖μ_I‖² + ‖μ_J‖² + ‖μ_K‖²)`.
///
/// Written without the ½ it is `‖𝝁‖²`; that variant doubles the gradient and
/// breaks the decay constant −4 of the flow, so the ½ is kept everywhere.
pub fn phi(mesh: &TorusMesh, f: &CellField) -> f64 {
    0.5 * mu_norm2(mesh, f)
}

/// `∇φ(F) = W_I + W_J + W_K` with `W_• = μ_•(F)·ℛ_•F` per cell.
pub fn grad_phi(f: &CellField) -> CellField {
    let inv = Involutions::new();
    let values = f
        .values()
        .par_iter()
        .map(|a| {
            let m = mu_matrix(a);
            Structure::ALL
                .iter()
                .fold(Matrix4::zeros(), |acc, &s| acc + inv.apply(s, a) * m[s.index()])
        })
        .collect();
    CellField::from_values(values)
}

/// A single summand `W_•`.
pub fn w_field(which: Structure, f: &CellField) -> CellField {
    let inv = Involutions::new();
    let values = f
        .values()
        .iter()
        .map(|a| inv.apply(which, a) * mu_matrix(a)[which.index()])
        .collect();
    CellField::from_values(values)
}

/// Second derivative of `φ` restricted to `ℱ^c_α`, in basis coordinates.
#[derive(Debug, Clone)]
pub struct HessianReport {
    pub matrix: DMatrix<f64>,
    /// Eigenvalues in ascending order.
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
    /// Eigenvalues with `|λ| ≤ kernel_tol · max(1, λ_max)`.
    pub kernel_dim: usize,
    /// True when `‖𝝁(F)‖` was below the tolerance, so the curvature term was dropped
    /// analytically (it vanishes at zeros).
    pub at_zero: bool,
}

/// Hessian of `φ` at `F` on the basis of `ℱ^c_α`:
/// `H(Ḟ1, Ḟ2) = Σ_σ vol Σ_• (⟨ℛ_•F, Ḟ1⟩⟨ℛ_•F, Ḟ2⟩ + μ_•⟨ℛ_•Ḟ1, Ḟ2⟩)`.
///
/// At a zero of `𝝁` only the squared terms survive and `H` is positive
/// semidefinite. Away from zeros the full expression is returned and
/// `at_zero` is false.
pub fn hessian_form(
    basis: &ClosedBasis,
    f: &CellField,
    zero_tol: f64,
    kernel_tol: f64,
) -> HessianReport {
    let mesh = basis.mesh();
    let n = basis.dim();
    let at_zero = mu_norm(mesh, f) <= zero_tol;
    let elements: Vec<CellField> = (0..n).map(|i| basis.element(i)).collect();
    let inv = Involutions::new();
    let mut h = DMatrix::zeros(n, n);
    for (ci, cell) in mesh.cells().iter().enumerate() {
        let a = &f.values()[ci];
        let m = mu_matrix(a);
        let active: Vec<usize> = (0..n).filter(|&i| elements[i].values()[ci].amax() > 0.0).collect();
        for s in Structure::ALL {
            let ra = inv.apply(s, a);
            let g: Vec<f64> = active.iter().map(|&i| ra.component_mul(&elements[i].values()[ci]).sum()).collect();
            for (p, &i) in active.iter().enumerate() {
                let rb = inv.apply(s, &elements[i].values()[ci]);
                for (q, &j) in active.iter().enumerate() {
                    let mut v = g[p] * g[q];
                    if !at_zero {
                        v += m[s.index()] * rb.component_mul(&elements[j].values()[ci]).sum();
                    }
                    h[(i, j)] += cell.volume * v;
                }
            }
        }
    }
    let mut eigenvalues: Vec<f64> = h.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let min_eigenvalue = eigenvalues.first().copied().unwrap_or(0.0);
    let max_abs = eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let kernel_dim = eigenvalues.iter().filter(|l| l.abs() <= kernel_tol * max_abs.max(1.0)).count();
    HessianReport { matrix: h, eigenvalues, min_eigenvalue, kernel_dim, at_zero }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{differentiate, inner_g, Potential};
    use crate::mesh::{build_mesh, Lattice};
    use crate::quatgeom::{frobenius, r_involution, Vector4};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn mesh2() -> Arc<TorusMesh> {
        Arc::new(build_mesh(Lattice::standard(), 2).unwrap())
    }

    fn random_field(n: usize, rng: &mut ChaCha8Rng) -> CellField {
        CellField::from_values((0..n).map(|_| Matrix4::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect())
    }

    #[test]
    fn identity_and_zero_have_no_moment() {
        assert_eq!(mu_matrix(&Matrix4::identity()), [0.0; 3]);
        assert_eq!(mu_matrix(&Matrix4::zeros()), [0.0; 3]);
    }

    #[test]
    fn diag_1112() {
        let m = mu_matrix(&Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 1.0, 2.0)));
        assert!((m[0] + 1.0).abs() < 1e-15);
        assert!(m[1].abs() < 1e-15 && m[2].abs() < 1e-15);
    }

    #[test]
    fn moment_is_half_frobenius_of_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = Matrix4::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let m = mu_matrix(&a);
            for s in Structure::ALL {
                let expect = 0.5 * frobenius(&r_involution(s, &a), &a);
                assert!((m[s.index()] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn phi_of_single_cell() {
        let mesh = mesh2();
        let mut f = CellField::zeros(mesh.n_cells());
        f.values_mut()[7] = Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 1.0, 2.0));
        let expect = 0.5 * mesh.cells()[7].volume;
        assert!((phi(&mesh, &f) - expect).abs() < 1e-15);
    }

    #[test]
    fn homogeneity() {
        let mesh = mesh2();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = random_field(mesh.n_cells(), &mut rng);
        let f2 = f.scale(2.0);
        assert!((phi(&mesh, &f2) - 16.0 * phi(&mesh, &f)).abs() < 1e-10 * phi(&mesh, &f2));
        let g = grad_phi(&f);
        assert!((&grad_phi(&f2) - &g.scale(8.0)).max_abs() < 1e-11 * g.max_abs());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mesh = mesh2();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = 1e-5;
        for _ in 0..5 {
            let f = random_field(mesh.n_cells(), &mut rng);
            let d = random_field(mesh.n_cells(), &mut rng);
            let mut fp = f.clone();
            fp.axpy(h, &d);
            let mut fm = f.clone();
            fm.axpy(-h, &d);
            let fd = (phi(&mesh, &fp) - phi(&mesh, &fm)) / (2.0 * h);
            let an = inner_g(&mesh, &grad_phi(&f), &d).unwrap();
            assert!((fd - an).abs() <= 1e-6 * an.abs());
        }
    }

    #[test]
    fn key_identity_per_structure() {
        let mesh = mesh2();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let f = random_field(mesh.n_cells(), &mut rng);
        let n2 = mu(&f).norms2(&mesh);
        for s in Structure::ALL {
            let lhs = inner_g(&mesh, &w_field(s, &f), &f).unwrap();
            assert!((lhs - 2.0 * n2[s.index()]).abs() < 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn hessian_at_zero_field_vanishes() {
        let mesh = mesh2();
        let basis = ClosedBasis::new(mesh.clone(), Matrix4::identity()).unwrap();
        let r = hessian_form(&basis, &CellField::zeros(mesh.n_cells()), 1e-12, 1e-10);
        assert_eq!(r.matrix.amax(), 0.0);
        assert!(r.at_zero);
    }

    #[test]
    fn hessian_off_zero_matches_finite_differences() {
        // the flagged general form must still be the true second derivative
        let mesh = mesh2();
        let basis = ClosedBasis::new(mesh.clone(), Matrix4::identity()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let u = Potential {
            values: (0..mesh.n_vertices()).map(|_| Vector4::from_fn(|_, _| rng.random_range(-0.3..0.3))).collect(),
        };
        let mut f = differentiate(&mesh, &u);
        f.axpy(1.0, &CellField::constant(mesh.n_cells(), Matrix4::identity()));
        let c = basis.coords_of(&f);
        let r = hessian_form(&basis, &f, 1e-12, 1e-10);
        assert!(!r.at_zero);
        let phi_c = |x: &DVector<f64>| phi(&mesh, &basis.materialize(x));
        let h = 1e-4;
        for &(i, j) in &[(0usize, 0usize), (5, 9), (60, 60), (20, 60)] {
            let e = |k: usize, s: f64| {
                let mut v = DVector::zeros(basis.dim());
                v[k] = s;
                v
            };
            let fd = (phi_c(&(&c + e(i, h) + e(j, h))) - phi_c(&(&c + e(i, h) - e(j, h)))
                - phi_c(&(&c - e(i, h) + e(j, h)))
                + phi_c(&(&c - e(i, h) - e(j, h))))
                / (4.0 * h * h);
            let an = r.matrix[(i, j)];
            assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-3), "{i},{j}: {fd} vs {an}");
        }
    }
}
