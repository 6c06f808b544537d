//! From a Whitney form with integral class back to a polyhedral map, and the
//! per-cell symplectic certificate.

use serde::Serialize;
use thiserror::Error;

use crate::forms::{cohomology_class, diff_of_map, edge_value, CellField, CohClass, FormsError};
use crate::mesh::{Lattice, PolyMap, TorusMesh};
use crate::quatgeom::{omega_hat, pullback, FormLabel, Matrix4, Vector4};

#[derive(Debug, Error)]
pub enum RebuildError {
    #[error(transparent)]
    Forms(#[from] FormsError),
    #[error("class is not integral: max distance to an integer matrix is {max_dev:e}")]
    NonIntegral { max_dev: f64 },
    #[error("edge {edge} fails to close modulo the lattice (defect {defect:e})")]
    Closure { edge: usize, defect: f64 },
    #[error("base vertex {0} out of range")]
    BaseVertex(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegralityReport {
    pub integral: bool,
    /// `Γ⁻¹ P` rounded entrywise: the induced map on `Γ` in lattice coordinates.
    pub rounded: Matrix4,
    pub max_dev: f64,
}

/// A class is the class of a map `M → M` iff its periods lie in `Γ`, i.e.
/// `Γ⁻¹ P` is an integer matrix.
pub fn is_integral_class(p: &CohClass, lattice: &Lattice, tol: f64) -> IntegralityReport {
    let n = lattice.inverse() * p.0;
    let rounded = n.map(f64::round);
    let max_dev = (n - rounded).amax();
    IntegralityReport { integral: max_dev <= tol, rounded, max_dev }
}

#[derive(Debug, Clone)]
pub struct Primitive {
    pub map: PolyMap,
    pub base_vertex: usize,
    /// Closure defect of every edge, indexed like `mesh.edges()`; tree edges give 0.
    pub closure_defects: Vec<f64>,
    pub max_closure_defect: f64,
}

fn lattice_defect(lattice: &Lattice, v: &Vector4) -> f64 {
    (v - lattice.round(v)).amax()
}

/// Integrate `F` along the spanning tree, starting from `U(base) = 0`, then lift
/// each cell so that its images differ by `F_σ` applied to the lift
/// displacements.
pub fn primitive(mesh: &TorusMesh, f: &CellField, base: usize, tol: f64) -> Result<Primitive, RebuildError> {
    if base >= mesh.n_vertices() {
        return Err(RebuildError::BaseVertex(base));
    }
    let class = cohomology_class(mesh, f, tol)?;
    let integrality = is_integral_class(&class, mesh.lattice(), tol);
    if !integrality.integral {
        return Err(RebuildError::NonIntegral { max_dev: integrality.max_dev });
    }
    let tree = mesh.spanning_tree();
    let mut from_root = vec![Vector4::zeros(); mesh.n_vertices()];
    for &v in &tree.order {
        if let Some((p, step)) = tree.parent[v] {
            from_root[v] = from_root[p] + edge_value(mesh, f, step.edge) * f64::from(step.sign);
        }
    }
    let origin = from_root[base];
    let u: Vec<Vector4> = from_root.iter().map(|x| x - origin).collect();

    let lattice = mesh.lattice();
    let closure_defects: Vec<f64> = mesh
        .edges()
        .iter()
        .enumerate()
        .map(|(i, e)| lattice_defect(lattice, &(u[e.ends[1]] - u[e.ends[0]] - edge_value(mesh, f, i))))
        .collect();
    let (worst, max_closure_defect) = closure_defects
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc });
    if max_closure_defect > tol {
        return Err(RebuildError::Closure { edge: worst, defect: max_closure_defect });
    }

    let cell_images = mesh
        .cells()
        .iter()
        .zip(f.values())
        .map(|(c, a)| {
            let q0 = u[c.vertices[0]];
            std::array::from_fn(|j| {
                if j == 0 {
                    return q0;
                }
                let target = q0 + a * (c.lift[j] - c.lift[0]);
                let uj = u[c.vertices[j]];
                uj + lattice.round(&(target - uj))
            })
        })
        .collect();
    Ok(Primitive {
        map: PolyMap { vertex_images: u, cell_images },
        base_vertex: base,
        closure_defects,
        max_closure_defect,
    })
}

/// `max_σ ‖𝒟(primitive(F)) − F‖`, the round-trip error.
pub fn round_trip_error(mesh: &TorusMesh, f: &CellField, p: &Primitive, tol: f64) -> Result<f64, RebuildError> {
    let back = diff_of_map(mesh, &p.map, tol)?;
    Ok((&back - f).max_abs())
}

#[derive(Debug, Clone, Serialize)]
pub struct SymplecticReport {
    /// `‖F_σ*ω_V − ω_V‖` per cell.
    pub per_cell: Vec<f64>,
    pub max_defect: f64,
    /// `max_σ ‖ASD(F_σ*ω_V)‖`; zero exactly where `𝝁` vanishes.
    pub max_asd_defect: f64,
    pub verdict: bool,
    /// Piecewise affine symplectic maps need not be homeomorphisms; nothing is claimed.
    pub homeomorphism: &'static str,
}

pub fn verify_symplectic(f: &CellField, tol: f64) -> SymplecticReport {
    let omega = omega_hat(FormLabel::V);
    let mut max_asd_defect: f64 = 0.0;
    let per_cell: Vec<f64> = f
        .values()
        .iter()
        .map(|a| {
            let pb = pullback(a, &omega);
            max_asd_defect = max_asd_defect.max(pb.anti_self_dual_part().norm());
            (pb - omega).norm()
        })
        .collect();
    let max_defect = per_cell.iter().copied().fold(0.0, f64::max);
    SymplecticReport { verdict: max_defect <= tol, per_cell, max_defect, max_asd_defect, homeomorphism: "unknown" }
}

/// Serialized map: vertex and per-cell images plus the closure table.
#[derive(Debug, Clone, Serialize)]
pub struct MapExport {
    pub mesh_hash: String,
    pub base_vertex: usize,
    pub vertex_images: Vec<[f64; 4]>,
    pub cell_images: Vec<[[f64; 4]; 5]>,
    pub closure_defects: Vec<ClosureEntry>,
    pub max_closure_defect: f64,
    pub homeomorphism: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosureEntry {
    pub edge: usize,
    pub ends: [usize; 2],
    pub defect: f64,
}

impl MapExport {
    pub fn new(mesh: &TorusMesh, p: &Primitive) -> MapExport {
        MapExport {
            mesh_hash: mesh.hash().to_string(),
            base_vertex: p.base_vertex,
            vertex_images: p.map.vertex_images.iter().map(|v| (*v).into()).collect(),
            cell_images: p.map.cell_images.iter().map(|c| c.map(|v| v.into())).collect(),
            closure_defects: mesh
                .edges()
                .iter()
                .zip(&p.closure_defects)
                .enumerate()
                .map(|(i, (e, &d))| ClosureEntry { edge: i, ends: e.ends, defect: d })
                .collect(),
            max_closure_defect: p.max_closure_defect,
            homeomorphism: "unknown",
        }
    }
}

/// Plot data: one row per vertex with its position and image, so any pair of
/// coordinates can be plotted against any other.
pub fn write_plot_data<W: std::io::Write>(w: W, mesh: &TorusMesh, p: &Primitive) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["vertex", "x1", "y1", "x2", "y2", "f_x1", "f_y1", "f_x2", "f_y2"])?;
    for (i, (x, y)) in mesh.vertices().iter().zip(&p.map.vertex_images).enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(x.iter().chain(y.iter()).map(|v| v.to_string()));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}
