//! Locally constant `V`-valued 1-forms on a triangulated torus.
//!
//! A [`CellField`] stores one matrix per 4-cell. Whitney (closed) fields are
//! those whose restrictions to every 3-face agree from both sides; the
//! subspace `ℱ^c_α` of Whitney fields with class on the ray `ℝα` is spanned by
//! differentials of hat potentials plus the constant field `α`, see
//! [`ClosedBasis`].

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{EdgeStep, PolyMap, TorusMesh};
use crate::quatgeom::{right_mul_i_matrix, Matrix4, Vector4};

/// Default absolute per-face tolerance for the Whitney condition.
pub const WHITNEY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FormsError {
    #[error("field has {got} entries but the mesh has {expected}")]
    MeshMismatch { expected: usize, got: usize },
    #[error("field is not Whitney: residual {residual:e} on face {face}")]
    NotWhitney { residual: f64, face: usize },
    #[error("polyhedral map lifts disagree across face {face} (defect {defect:e})")]
    InconsistentLift { face: usize, defect: f64 },
    #[error("Gram matrix of the closed basis is numerically singular")]
    SingularGram,
    #[error("dump was written for mesh {found}, current mesh is {expected}")]
    HashMismatch { expected: String, found: String },
}

/// One constant matrix per 4-cell: an element of `ℱ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    values: Vec<Matrix4>,
}

impl CellField {
    pub fn zeros(n_cells: usize) -> Self {
        CellField { values: vec![Matrix4::zeros(); n_cells] }
    }

    pub fn constant(n_cells: usize, a: Matrix4) -> Self {
        CellField { values: vec![a; n_cells] }
    }

    pub fn from_values(values: Vec<Matrix4>) -> Self {
        CellField { values }
    }

    pub fn values(&self) -> &[Matrix4] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix4] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scale(&self, s: f64) -> CellField {
        CellField { values: self.values.iter().map(|a| a * s).collect() }
    }

    /// `self += s · other`
    pub fn axpy(&mut self, s: f64, other: &CellField) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b * s;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|a| a.amax()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|a| a.iter().all(|x| x.is_finite()))
    }

    pub fn check_mesh(&self, mesh: &TorusMesh) -> Result<(), FormsError> {
        if self.len() != mesh.n_cells() {
            return Err(FormsError::MeshMismatch { expected: mesh.n_cells(), got: self.len() });
        }
        Ok(())
    }

    pub fn to_dump(&self, mesh: &TorusMesh) -> CellFieldDump {
        CellFieldDump {
            mesh_hash: mesh.hash().to_string(),
            m: mesh.subdivisions(),
            lattice: mesh.lattice().to_rows(),
            cells: self
                .values
                .iter()
                .map(|a| std::array::from_fn(|i| a[(i / 4, i % 4)]))
                .collect(),
            alpha: None,
        }
    }

    pub fn from_dump(mesh: &TorusMesh, dump: &CellFieldDump) -> Result<CellField, FormsError> {
        if dump.mesh_hash != mesh.hash() {
            return Err(FormsError::HashMismatch {
                expected: mesh.hash().to_string(),
                found: dump.mesh_hash.clone(),
            });
        }
        let field = CellField {
            values: dump.cells.iter().map(|c| Matrix4::from_row_slice(c)).collect(),
        };
        field.check_mesh(mesh)?;
        Ok(field)
    }
}

impl Add for &CellField {
    type Output = CellField;
    fn add(self, o: &CellField) -> CellField {
        CellField { values: self.values.iter().zip(&o.values).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &CellField {
    type Output = CellField;
    fn sub(self, o: &CellField) -> CellField {
        CellField { values: self.values.iter().zip(&o.values).map(|(a, b)| a - b).collect() }
    }
}

impl Neg for &CellField {
    type Output = CellField;
    fn neg(self) -> CellField {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &CellField {
    type Output = CellField;
    fn mul(self, s: f64) -> CellField {
        self.scale(s)
    }
}

/// Per-cell values stored row-major, tagged with the mesh they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFieldDump {
    pub mesh_hash: String,
    pub m: usize,
    pub lattice: [[f64; 4]; 4],
    pub cells: Vec<[f64; 16]>,
    /// Class direction the field was evolved in, row-major, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<[[f64; 4]; 4]>,
}

/// A polyhedral function `M → V`, one value per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub values: Vec<Vector4>,
}

impl Potential {
    pub fn zeros(n_vertices: usize) -> Self {
        Potential { values: vec![Vector4::zeros(); n_vertices] }
    }

    /// Hat function at `vertex` with values in direction `dir`.
    pub fn hat(n_vertices: usize, vertex: usize, dir: Vector4) -> Self {
        let mut p = Potential::zeros(n_vertices);
        p.values[vertex] = dir;
        p
    }

    pub fn to_dump(&self, mesh: &TorusMesh) -> PotentialDump {
        PotentialDump {
            mesh_hash: mesh.hash().to_string(),
            vertices: self.values.iter().map(|v| (*v).into()).collect(),
        }
    }

    pub fn from_dump(mesh: &TorusMesh, dump: &PotentialDump) -> Result<Potential, FormsError> {
        if dump.mesh_hash != mesh.hash() {
            return Err(FormsError::HashMismatch {
                expected: mesh.hash().to_string(),
                found: dump.mesh_hash.clone(),
            });
        }
        if dump.vertices.len() != mesh.n_vertices() {
            return Err(FormsError::MeshMismatch {
                expected: mesh.n_vertices(),
                got: dump.vertices.len(),
            });
        }
        Ok(Potential { values: dump.vertices.iter().map(|v| Vector4::from(*v)).collect() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialDump {
    pub mesh_hash: String,
    pub vertices: Vec<[f64; 4]>,
}

/// Periods of a Whitney field: column `k` is the integral along generator loop `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohClass(pub Matrix4);

impl CohClass {
    /// Entrywise inner product.
    pub fn dot(&self, other: &CohClass) -> f64 {
        self.0.component_mul(&other.0).sum()
    }

    /// Class of the constant field with matrix `a`.
    pub fn of_constant(mesh: &TorusMesh, a: &Matrix4) -> CohClass {
        CohClass(a * mesh.lattice().generators())
    }
}

/// `𝒟u`: per cell the unique matrix interpolating the vertex values.
pub fn differentiate(mesh: &TorusMesh, u: &Potential) -> CellField {
    let values = mesh
        .cells()
        .iter()
        .map(|c| {
            (0..5).fold(Matrix4::zeros(), |acc, j| acc + u.values[c.vertices[j]] * c.bary_grads[j])
        })
        .collect();
    CellField { values }
}

/// Differential of a polyhedral map, after certifying its lifts agree across faces
/// modulo `Γ`.
pub fn diff_of_map(mesh: &TorusMesh, f: &PolyMap, tol: f64) -> Result<CellField, FormsError> {
    if f.cell_images.len() != mesh.n_cells() {
        return Err(FormsError::MeshMismatch { expected: mesh.n_cells(), got: f.cell_images.len() });
    }
    let lattice = mesh.lattice();
    for (fi, face) in mesh.faces().iter().enumerate() {
        let [c1, c2] = face.cells;
        let (cell1, cell2) = (&mesh.cells()[c1], &mesh.cells()[c2]);
        let mut offset: Option<Vector4> = None;
        for j in (0..5).filter(|&j| j != face.opposite[0]) {
            let k = cell2.local_index(cell1.vertices[j]).expect("face vertices shared");
            let d = f.cell_images[c2][k] - f.cell_images[c1][j];
            let defect = match offset {
                None => {
                    offset = Some(d);
                    (d - lattice.round(&d)).amax()
                }
                Some(o) => (d - o).amax(),
            };
            if defect > tol {
                return Err(FormsError::InconsistentLift { face: fi, defect });
            }
        }
    }
    let values = mesh
        .cells()
        .iter()
        .zip(&f.cell_images)
        .map(|(c, q)| (0..5).fold(Matrix4::zeros(), |acc, j| acc + q[j] * c.bary_grads[j]))
        .collect();
    Ok(CellField { values })
}

#[derive(Debug, Clone)]
pub struct WhitneyReport {
    pub per_face: Vec<f64>,
    pub max: f64,
    pub worst_face: usize,
}

pub fn whitney_residual(mesh: &TorusMesh, f: &CellField) -> WhitneyReport {
    let per_face: Vec<f64> = mesh
        .faces()
        .iter()
        .map(|face| {
            let a = &f.values[face.cells[0]];
            let b = &f.values[face.cells[1]];
            face.frame.iter().map(|t| (a * t - b * t).amax()).fold(0.0, f64::max)
        })
        .collect();
    let (worst_face, max) = per_face
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, r)| if r > acc.1 { (i, r) } else { acc });
    WhitneyReport { per_face, max, worst_face }
}

/// Value of `F` on an edge, evaluated in one incident cell.
pub fn edge_value(mesh: &TorusMesh, f: &CellField, edge: usize) -> Vector4 {
    let e = &mesh.edges()[edge];
    f.values[e.cell] * e.displacement
}

pub fn path_integral(mesh: &TorusMesh, f: &CellField, steps: &[EdgeStep]) -> Vector4 {
    steps.iter().map(|s| edge_value(mesh, f, s.edge) * f64::from(s.sign)).sum()
}

/// Period matrix of a Whitney field along the four generator loops.
pub fn cohomology_class(mesh: &TorusMesh, f: &CellField, tol: f64) -> Result<CohClass, FormsError> {
    f.check_mesh(mesh)?;
    let report = whitney_residual(mesh, f);
    if report.max > tol {
        return Err(FormsError::NotWhitney { residual: report.max, face: report.worst_face });
    }
    Ok(periods(mesh, f))
}

/// Loop sums without the Whitney check.
pub(crate) fn periods(mesh: &TorusMesh, f: &CellField) -> CohClass {
    let mut p = Matrix4::zeros();
    for (k, l) in mesh.generator_loops().iter().enumerate() {
        p.set_column(k, &path_integral(mesh, f, &l.steps));
    }
    CohClass(p)
}

pub(crate) fn inner_unchecked(mesh: &TorusMesh, a: &CellField, b: &CellField) -> f64 {
    mesh.cells()
        .iter()
        .zip(a.values.iter().zip(&b.values))
        .map(|(c, (x, y))| x.component_mul(y).sum() * c.volume)
        .sum()
}

/// `𝒢(F1, F2) = Σ_σ ⟨F1(σ), F2(σ)⟩ vol(σ)`.
pub fn inner_g(mesh: &TorusMesh, a: &CellField, b: &CellField) -> Result<f64, FormsError> {
    a.check_mesh(mesh)?;
    b.check_mesh(mesh)?;
    Ok(inner_unchecked(mesh, a, b))
}

pub fn norm2_g(mesh: &TorusMesh, a: &CellField) -> f64 {
    inner_unchecked(mesh, a, a)
}

/// Per-cell unit-phase action `F_σ ↦ e^{iθ_σ} F_σ` through the complex structure of `V`.
pub fn torus_act(phases: &[f64], f: &CellField) -> CellField {
    let ri = right_mul_i_matrix();
    let values = f
        .values
        .iter()
        .zip(phases)
        .map(|(a, &t)| a * t.cos() + ri * a * t.sin())
        .collect();
    CellField { values }
}

/// Explicit parametrization of `ℱ^c_α = {𝒟u + τ α}` with the potential pinned to
/// zero at vertex 0, and the `𝒢`-Gram factorization used for projection.
///
/// Coordinates: entry `4(v−1) + a` is component `a` of the potential at vertex
/// `v ≥ 1`; the last entry (when `α ≠ 0`) is the coefficient of the constant
/// field `α`.
pub struct ClosedBasis {
    mesh: Arc<TorusMesh>,
    alpha: Matrix4,
    degenerate: bool,
    gram: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl std::fmt::Debug for ClosedBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClosedBasis")
            .field("dim", &self.dim())
            .field("alpha", &self.alpha)
            .field("degenerate", &self.degenerate)
            .finish()
    }
}

impl ClosedBasis {
    pub fn new(mesh: Arc<TorusMesh>, alpha: Matrix4) -> Result<ClosedBasis, FormsError> {
        let degenerate = alpha.amax() == 0.0;
        let n_exact = 4 * (mesh.n_vertices() - 1);
        let dim = n_exact + usize::from(!degenerate);
        let mut gram = DMatrix::zeros(dim, dim);
        for c in mesh.cells() {
            for (i, &v) in c.vertices.iter().enumerate() {
                if v == 0 {
                    continue;
                }
                for (j, &w) in c.vertices.iter().enumerate() {
                    if w == 0 {
                        continue;
                    }
                    let s = c.volume * c.bary_grads[i].dot(&c.bary_grads[j]);
                    for a in 0..4 {
                        gram[(4 * (v - 1) + a, 4 * (w - 1) + a)] += s;
                    }
                }
                if !degenerate {
                    let g = alpha * c.bary_grads[i].transpose() * c.volume;
                    for a in 0..4 {
                        gram[(4 * (v - 1) + a, n_exact)] += g[a];
                        gram[(n_exact, 4 * (v - 1) + a)] += g[a];
                    }
                }
            }
            if !degenerate {
                gram[(n_exact, n_exact)] += c.volume * alpha.norm_squared();
            }
        }
        let chol = Cholesky::new(gram.clone()).ok_or(FormsError::SingularGram)?;
        let diag_min: f64 = chol.l_dirty().diagonal().min();
        let diag_max: f64 = gram.diagonal().max();
        if !(diag_min > 1e-10 * diag_max.sqrt()) {
            return Err(FormsError::SingularGram);
        }
        Ok(ClosedBasis { mesh, alpha, degenerate, gram, chol })
    }

    pub fn mesh(&self) -> &Arc<TorusMesh> {
        &self.mesh
    }

    pub fn alpha(&self) -> &Matrix4 {
        &self.alpha
    }

    /// True when `α = 0`, i.e. only exact fields are spanned.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    fn n_exact(&self) -> usize {
        4 * (self.mesh.n_vertices() - 1)
    }

    /// Index of the `α` coordinate, if present.
    pub fn alpha_index(&self) -> Option<usize> {
        (!self.degenerate).then(|| self.n_exact())
    }

    pub fn potential_of(&self, coords: &DVector<f64>) -> Potential {
        let mut u = Potential::zeros(self.mesh.n_vertices());
        for v in 1..self.mesh.n_vertices() {
            u.values[v] = Vector4::from_fn(|a, _| coords[4 * (v - 1) + a]);
        }
        u
    }

    /// The field with the given basis coordinates.
    pub fn materialize(&self, coords: &DVector<f64>) -> CellField {
        let mut f = differentiate(&self.mesh, &self.potential_of(coords));
        if let Some(ia) = self.alpha_index() {
            let t = coords[ia];
            f.values.iter_mut().for_each(|x| *x += self.alpha * t);
        }
        f
    }

    /// The `i`-th basis element as a field.
    pub fn element(&self, i: usize) -> CellField {
        let mut e = DVector::zeros(self.dim());
        e[i] = 1.0;
        self.materialize(&e)
    }

    /// `(𝒢(b_i, F))_i`
    pub fn load(&self, f: &CellField) -> DVector<f64> {
        let n_exact = self.n_exact();
        let mut b = DVector::zeros(self.dim());
        for (c, a) in self.mesh.cells().iter().zip(&f.values) {
            for (j, &v) in c.vertices.iter().enumerate() {
                if v == 0 {
                    continue;
                }
                let g = a * c.bary_grads[j].transpose() * c.volume;
                for k in 0..4 {
                    b[4 * (v - 1) + k] += g[k];
                }
            }
            if !self.degenerate {
                b[n_exact] += c.volume * self.alpha.component_mul(a).sum();
            }
        }
        b
    }

    /// Coordinates of `Π_α F`.
    pub fn project_coords(&self, f: &CellField) -> DVector<f64> {
        self.chol.solve(&self.load(f))
    }

    /// `𝒢`-orthogonal projection onto `ℱ^c_α`.
    pub fn project(&self, f: &CellField) -> CellField {
        self.materialize(&self.project_coords(f))
    }

    /// Best-fit coordinates of a field already in `ℱ^c_α`.
    pub fn coords_of(&self, f: &CellField) -> DVector<f64> {
        self.project_coords(f)
    }

    /// `𝒢`-inner product of two fields given by coordinates.
    pub fn inner_coords(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&(&self.gram * y))
    }

    /// Class multiplier `τ` with `[F] = τα` for coordinates `x` (0 in degenerate mode).
    pub fn tau_of(&self, x: &DVector<f64>) -> f64 {
        self.alpha_index().map_or(0.0, |i| x[i])
    }
}

/// `Π_α` as a free function.
pub fn project_alpha(basis: &ClosedBasis, f: &CellField) -> CellField {
    basis.project(f)
}

pub fn build_closed_basis(mesh: Arc<TorusMesh>, alpha: Matrix4) -> Result<ClosedBasis, FormsError> {
    ClosedBasis::new(mesh, alpha)
}

/// Scalar Whitney constraint matrix: rows `(face, frame vector)`, columns
/// `(cell, coordinate)`. A field is Whitney iff each of its four rows,
/// viewed as a covector per cell, lies in the nullspace.
pub fn whitney_constraint_matrix(mesh: &TorusMesh) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(3 * mesh.faces().len(), 4 * mesh.n_cells());
    for (fi, face) in mesh.faces().iter().enumerate() {
        for (i, t) in face.frame.iter().enumerate() {
            for k in 0..4 {
                c[(3 * fi + i, 4 * face.cells[0] + k)] += t[k];
                c[(3 * fi + i, 4 * face.cells[1] + k)] -= t[k];
            }
        }
    }
    c
}

/// Rank of the scalar Whitney constraint matrix computed blockwise in the Fourier
/// basis of the grid translations. The Kuhn mesh is invariant under `(ℤ/m)⁴`, so
/// the matrix splits into `m⁴` blocks of 24·4 columns.
pub fn whitney_constraint_rank_fourier(mesh: &TorusMesh) -> usize {
    use nalgebra::Complex;
    let m = mesh.subdivisions();
    let n_base = m.pow(4);
    let base_of = |cell: usize| cell / 24;
    let grid_of = |base: usize| -> [usize; 4] { std::array::from_fn(|k| (base / m.pow(k as u32)) % m) };
    // faces touching a cell of the first cube represent every translation orbit
    let faces: Vec<_> = mesh
        .faces()
        .iter()
        .filter(|f| base_of(f.cells[0]) == 0 || base_of(f.cells[1]) == 0)
        .collect();
    let mut rank = 0;
    for freq in 0..n_base {
        let k = grid_of(freq);
        let phase = |cell: usize| {
            let c = grid_of(base_of(cell));
            let s: usize = (0..4).map(|i| k[i] * c[i]).sum();
            let ang = 2.0 * std::f64::consts::PI * (s % m) as f64 / m as f64;
            Complex::new(ang.cos(), ang.sin())
        };
        let mut block = DMatrix::<Complex<f64>>::zeros(3 * faces.len(), 96);
        for (fi, face) in faces.iter().enumerate() {
            let (p1, p2) = (phase(face.cells[0]), phase(face.cells[1]));
            let (l1, l2) = (face.cells[0] % 24, face.cells[1] % 24);
            for (i, t) in face.frame.iter().enumerate() {
                for a in 0..4 {
                    block[(3 * fi + i, 4 * l1 + a)] += p1 * t[a];
                    block[(3 * fi + i, 4 * l2 + a)] -= p2 * t[a];
                }
            }
        }
        rank += block.rank(1e-9);
    }
    rank
}

/// `dim ℱ^c` as `4 × nullity` of the dense scalar constraint matrix.
/// Returns the nullspace too, one column per closed scalar form.
pub fn closed_nullspace_dense(mesh: &TorusMesh) -> DMatrix<f64> {
    crate::linalg::Rref::new(&whitney_constraint_matrix(mesh), 1e-10).nullspace()
}

/// `dim ℱ^c_α` from the constraint nullspace: closed forms whose period matrix
/// lies on the line through `[α]`. Counted as `dim ℱ^c` minus the rank of the
/// period map followed by projection onto the complement of `[α]`.
pub fn closed_alpha_dimension_dense(mesh: &TorusMesh, alpha: &Matrix4) -> usize {
    let scalar = closed_nullspace_dense(mesh);
    let pa = CohClass::of_constant(mesh, alpha).0;
    let dir = if pa.amax() > 0.0 { Some(pa / pa.norm()) } else { None };
    let k = scalar.ncols();
    let mut period_rows = DMatrix::zeros(4 * k, 16);
    for comp in 0..4 {
        for j in 0..k {
            let values = (0..mesh.n_cells())
                .map(|c| {
                    let mut a = Matrix4::zeros();
                    for x in 0..4 {
                        a[(comp, x)] = scalar[(4 * c + x, j)];
                    }
                    a
                })
                .collect();
            let mut p = periods(mesh, &CellField { values }).0;
            if let Some(d) = &dir {
                p -= d * d.component_mul(&p).sum();
            }
            for (i, x) in p.iter().enumerate() {
                period_rows[(comp * k + j, i)] = *x;
            }
        }
    }
    4 * k - crate::linalg::Rref::new(&period_rows, 1e-9).rank
}

/// `dim ℱ^c` from spanning sets: rank of the `𝒢`-Gram matrix of the
/// differentials of all hat potentials (gauge fixed) and the 16 constant fields.
pub fn closed_dimension_by_basis(mesh: &Arc<TorusMesh>) -> usize {
    let exact = ClosedBasis::new(mesh.clone(), Matrix4::zeros()).expect("exact Gram is definite");
    let mut fields: Vec<CellField> = (0..exact.dim()).map(|i| exact.element(i)).collect();
    for r in 0..4 {
        for c in 0..4 {
            let mut a = Matrix4::zeros();
            a[(r, c)] = 1.0;
            fields.push(CellField::constant(mesh.n_cells(), a));
        }
    }
    let n = fields.len();
    let gram = DMatrix::from_fn(n, n, |i, j| inner_unchecked(mesh, &fields[i], &fields[j]));
    crate::linalg::psd_rank(&gram, 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, Lattice};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mesh2() -> Arc<TorusMesh> {
        Arc::new(build_mesh(Lattice::standard(), 2).unwrap())
    }

    fn random_potential(n: usize, rng: &mut ChaCha8Rng) -> Potential {
        Potential {
            values: (0..n).map(|_| Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect(),
        }
    }

    #[test]
    fn constant_potential_has_zero_differential() {
        let mesh = mesh2();
        let u = Potential { values: vec![Vector4::new(1.0, 2.0, 3.0, 4.0); mesh.n_vertices()] };
        assert!(differentiate(&mesh, &u).max_abs() < 1e-14);
    }

    #[test]
    fn hat_differential_is_local() {
        let mesh = mesh2();
        let v = 5;
        let f = differentiate(&mesh, &Potential::hat(mesh.n_vertices(), v, Vector4::new(1.0, 0.0, 0.0, 0.0)));
        for (c, a) in mesh.cells().iter().zip(f.values()) {
            assert_eq!(c.vertices.contains(&v), a.amax() > 0.0);
        }
    }

    #[test]
    fn hat_differential_matches_edge_solve() {
        // oracle: solve A·(p_j − p_0) = u_j − u_0 with a generic dense solver
        let mesh = mesh2();
        let u = Potential::hat(mesh.n_vertices(), 3, Vector4::new(0.0, 1.0, -2.0, 0.5));
        let f = differentiate(&mesh, &u);
        for (c, a) in mesh.cells().iter().zip(f.values()) {
            let e = DMatrix::from_fn(4, 4, |r, col| c.lift[col + 1][r] - c.lift[0][r]);
            let rhs = DMatrix::from_fn(4, 4, |r, col| u.values[c.vertices[col + 1]][r] - u.values[c.vertices[0]][r]);
            // A E = R  ⇔  Eᵀ Aᵀ = Rᵀ
            let at = e.transpose().lu().solve(&rhs.transpose()).unwrap();
            for r in 0..4 {
                for col in 0..4 {
                    assert!((at[(col, r)] - a[(r, col)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn differentials_are_whitney_with_zero_class() {
        let mesh = mesh2();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let u = random_potential(mesh.n_vertices(), &mut rng);
            let norm = u.values.iter().map(|v| v.amax()).fold(0.0, f64::max);
            let f = differentiate(&mesh, &u);
            assert!(whitney_residual(&mesh, &f).max <= 1e-12 * norm.max(1.0));
            let p = cohomology_class(&mesh, &f, WHITNEY_TOL).unwrap();
            assert!(p.0.amax() < 1e-10);
        }
    }

    #[test]
    fn random_cell_field_is_not_whitney() {
        let mesh = mesh2();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = CellField::from_values(
            (0..mesh.n_cells()).map(|_| Matrix4::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect(),
        );
        let r = whitney_residual(&mesh, &f);
        assert!(r.max > 1e-3);
        assert!(matches!(cohomology_class(&mesh, &f, WHITNEY_TOL), Err(FormsError::NotWhitney { .. })));
    }

    #[test]
    fn constant_field_class() {
        let mesh = mesh2();
        let a = Matrix4::from_fn(|r, c| (r as f64) * 0.5 - c as f64);
        let f = CellField::constant(mesh.n_cells(), a);
        assert_eq!(whitney_residual(&mesh, &f).max, 0.0);
        let p = cohomology_class(&mesh, &f, WHITNEY_TOL).unwrap();
        // direct summation oracle over the loop displacements
        for (k, l) in mesh.generator_loops().iter().enumerate() {
            let mut s = Vector4::zeros();
            for st in &l.steps {
                s += a * mesh.edges()[st.edge].displacement * f64::from(st.sign);
            }
            assert!((p.0.column(k) - s).norm() < 1e-14);
        }
        assert!((p.0 - a).norm() < 1e-14);
    }

    #[test]
    fn identity_map_differential() {
        let mesh = mesh2();
        let id = PolyMap::affine(&mesh, &Matrix4::identity(), &Vector4::zeros());
        let f = diff_of_map(&mesh, &id, 1e-9).unwrap();
        assert!((&f - &CellField::constant(mesh.n_cells(), Matrix4::identity())).max_abs() < 1e-13);
        let shifted = PolyMap::affine(&mesh, &Matrix4::identity(), &Vector4::new(0.3, -0.1, 0.7, 2.0));
        let g = diff_of_map(&mesh, &shifted, 1e-9).unwrap();
        assert!((&f - &g).max_abs() < 1e-13);
        let p = cohomology_class(&mesh, &f, WHITNEY_TOL).unwrap();
        assert!((p.0 - Matrix4::identity()).amax() < 1e-13);
    }

    #[test]
    fn integer_linear_map_differential() {
        let mesh = mesh2();
        let a = Matrix4::new(1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 1.0, 0.0, 0.0, 1.0, 1.0);
        let f = diff_of_map(&mesh, &PolyMap::affine(&mesh, &a, &Vector4::zeros()), 1e-9).unwrap();
        for v in f.values() {
            assert!((v - a).amax() < 1e-13);
        }
    }

    #[test]
    fn inconsistent_lift_is_rejected() {
        let mesh = mesh2();
        let mut map = PolyMap::affine(&mesh, &Matrix4::identity(), &Vector4::zeros());
        map.cell_images[0][1] += Vector4::new(0.1, 0.0, 0.0, 0.0);
        assert!(matches!(diff_of_map(&mesh, &map, 1e-9), Err(FormsError::InconsistentLift { .. })));
        // non-integral linear map: images of a face differ by a non-lattice vector
        let half = PolyMap::affine(&mesh, &(Matrix4::identity() * 0.5), &Vector4::zeros());
        assert!(diff_of_map(&mesh, &half, 1e-9).is_err());
    }

    #[test]
    fn identity_field_norm() {
        let mesh = mesh2();
        let id = CellField::constant(mesh.n_cells(), Matrix4::identity());
        assert!((inner_g(&mesh, &id, &id).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(inner_g(&mesh, &id, &CellField::zeros(mesh.n_cells())).unwrap(), 0.0);
        assert!(matches!(inner_g(&mesh, &id, &CellField::zeros(3)), Err(FormsError::MeshMismatch { .. })));
    }

    #[test]
    fn torus_action_basics() {
        let mesh = mesh2();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = CellField::from_values(
            (0..mesh.n_cells()).map(|_| Matrix4::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect(),
        );
        let zero = vec![0.0; mesh.n_cells()];
        assert!((&torus_act(&zero, &f) - &f).max_abs() < 1e-15);
        let pi = vec![std::f64::consts::PI; mesh.n_cells()];
        assert!((&torus_act(&pi, &f) + &f).max_abs() < 1e-14);
        let th: Vec<f64> = (0..mesh.n_cells()).map(|_| rng.random_range(0.0..6.3)).collect();
        let th2: Vec<f64> = (0..mesh.n_cells()).map(|_| rng.random_range(0.0..6.3)).collect();
        let sum: Vec<f64> = th.iter().zip(&th2).map(|(a, b)| a + b).collect();
        let lhs = torus_act(&th, &torus_act(&th2, &f));
        assert!((&lhs - &torus_act(&sum, &f)).max_abs() < 1e-13);
        let acted = torus_act(&th, &f);
        assert!((norm2_g(&mesh, &acted) - norm2_g(&mesh, &f)).abs() < 1e-12);
    }

    #[test]
    fn closed_basis_dimensions() {
        let mesh = mesh2();
        let b = ClosedBasis::new(mesh.clone(), Matrix4::identity()).unwrap();
        assert_eq!(b.dim(), 61);
        assert!(!b.is_degenerate());
        let d = ClosedBasis::new(mesh, Matrix4::zeros()).unwrap();
        assert_eq!(d.dim(), 60);
        assert!(d.is_degenerate());
    }

    #[test]
    fn basis_elements_are_whitney() {
        let mesh = mesh2();
        let b = ClosedBasis::new(mesh.clone(), Matrix4::identity()).unwrap();
        for i in 0..b.dim() {
            assert!(whitney_residual(&mesh, &b.element(i)).max < 1e-13);
        }
    }

    #[test]
    fn gram_matches_inner_products() {
        let mesh = mesh2();
        let alpha = Matrix4::from_fn(|r, c| 1.0 + r as f64 - 0.3 * c as f64);
        let b = ClosedBasis::new(mesh.clone(), alpha).unwrap();
        for &(i, j) in &[(0, 0), (3, 7), (10, 60), (60, 60), (17, 44)] {
            let g = inner_g(&mesh, &b.element(i), &b.element(j)).unwrap();
            assert!((g - b.gram()[(i, j)]).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_fixes_closed_fields() {
        let mesh = mesh2();
        let b = ClosedBasis::new(mesh.clone(), Matrix4::identity()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut f = differentiate(&mesh, &random_potential(mesh.n_vertices(), &mut rng));
        f.axpy(0.7, &CellField::constant(mesh.n_cells(), Matrix4::identity()));
        let p = b.project(&f);
        assert!((&p - &f).max_abs() <= 1e-10 * f.max_abs());
    }

    #[test]
    fn projection_is_idempotent_and_self_adjoint() {
        let mesh = mesh2();
        let b = ClosedBasis::new(mesh.clone(), Matrix4::identity()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rand_field = |rng: &mut ChaCha8Rng| {
            CellField::from_values(
                (0..mesh.n_cells()).map(|_| Matrix4::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect(),
            )
        };
        for _ in 0..5 {
            let f = rand_field(&mut rng);
            let g = rand_field(&mut rng);
            let pf = b.project(&f);
            assert!((&b.project(&pf) - &pf).max_abs() < 1e-10);
            let lhs = inner_g(&mesh, &pf, &g).unwrap();
            let rhs = inner_g(&mesh, &f, &b.project(&g)).unwrap();
            assert!((lhs - rhs).abs() < 1e-10);
            assert!(norm2_g(&mesh, &pf) <= norm2_g(&mesh, &f));
            let resid = &f - &pf;
            for i in [0, 13, 60] {
                assert!(inner_g(&mesh, &resid, &b.element(i)).unwrap().abs() < 1e-11);
            }
        }
    }

    #[test]
    fn shifted_loop_gives_same_period() {
        let mesh = mesh2();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = Matrix4::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let mut f = differentiate(&mesh, &random_potential(mesh.n_vertices(), &mut rng));
        f.axpy(1.0, &CellField::constant(mesh.n_cells(), a));
        let p = cohomology_class(&mesh, &f, WHITNEY_TOL).unwrap();
        for k in 0..4 {
            // loop through grid point (0,1,1,0) + j e_k, homotopic to generator loop k
            let mut start = [0i64, 1, 1, 0];
            start[k] = 0;
            let mut d = [0i64; 4];
            d[k] = 1;
            let steps: Vec<EdgeStep> = (0..2)
                .map(|j| {
                    let mut s = start;
                    s[k] += j;
                    mesh.edge_between(s, d).unwrap()
                })
                .collect();
            let shifted = path_integral(&mesh, &f, &steps);
            assert!((shifted - p.0.column(k)).norm() < 1e-10);
        }
    }

    #[test]
    fn cell_field_dump_round_trip() {
        let mesh = mesh2();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = CellField::from_values(
            (0..mesh.n_cells()).map(|_| Matrix4::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect(),
        );
        let text = serde_json::to_string(&f.to_dump(&mesh)).unwrap();
        let back = CellField::from_dump(&mesh, &serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, f);
        let mut bad = f.to_dump(&mesh);
        bad.mesh_hash = "deadbeef".into();
        assert!(matches!(CellField::from_dump(&mesh, &bad), Err(FormsError::HashMismatch { .. })));
    }

    #[test]
    fn potential_dump_round_trip() {
        let mesh = mesh2();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = random_potential(mesh.n_vertices(), &mut rng);
        let text = serde_json::to_string(&u.to_dump(&mesh)).unwrap();
        assert_eq!(Potential::from_dump(&mesh, &serde_json::from_str(&text).unwrap()).unwrap(), u);
    }
}
