//! Euclidean triangulations of the torus `M = V/Γ`.
//!
//! Each of the `m⁴` sub-cubes of the fundamental domain is cut into the 24
//! Kuhn simplices `c, c+e_π(0), c+e_π(0)+e_π(1), …, c+(1,1,1,1)`. All
//! combinatorics are done on integer grid points in `ℤ⁴` (in units of `1/m`
//! of a lattice generator) so that face and edge identification modulo
//! `mℤ⁴` is exact.

use std::collections::{HashMap, VecDeque};

use nalgebra::RowVector4;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::quatgeom::{Matrix4, Vector4};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("subdivision count must be at least 2, got {0}")]
    Subdivision(usize),
    #[error("lattice generators are degenerate or negatively oriented (det = {0})")]
    Lattice(f64),
    #[error("mesh invariant violated: {0}")]
    Invariant(String),
}

type GridPoint = [i64; 4];

/// The lattice `Γ`, stored as the matrix whose columns are the generators.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    generators: Matrix4,
}

impl Lattice {
    pub fn standard() -> Self {
        Lattice { generators: Matrix4::identity() }
    }

    pub fn new(generators: Matrix4) -> Result<Self, MeshError> {
        let det = generators.determinant();
        if !det.is_finite() || det <= 1e-12 {
            return Err(MeshError::Lattice(det));
        }
        Ok(Lattice { generators })
    }

    /// Build from a list of generator vectors (one per row).
    pub fn from_rows(rows: [[f64; 4]; 4]) -> Result<Self, MeshError> {
        Lattice::new(Matrix4::from_fn(|r, c| rows[c][r]))
    }

    pub fn to_rows(&self) -> [[f64; 4]; 4] {
        let g = &self.generators;
        std::array::from_fn(|k| std::array::from_fn(|r| g[(r, k)]))
    }

    pub fn generators(&self) -> &Matrix4 {
        &self.generators
    }

    pub fn generator(&self, k: usize) -> Vector4 {
        self.generators.column(k).into_owned()
    }

    pub fn det(&self) -> f64 {
        self.generators.determinant()
    }

    /// Coordinates of `v` in the generator basis.
    pub fn coords(&self, v: &Vector4) -> Vector4 {
        self.inverse() * v
    }

    pub fn inverse(&self) -> Matrix4 {
        self.generators.try_inverse().expect("lattice validated at construction")
    }

    /// The lattice point nearest to `v` in lattice coordinates (entrywise rounding).
    pub fn round(&self, v: &Vector4) -> Vector4 {
        self.generators * self.coords(v).map(f64::round)
    }
}

impl Default for Lattice {
    fn default() -> Self {
        Lattice::standard()
    }
}

/// A 4-cell together with its affine lift to `V`.
#[derive(Debug, Clone)]
pub struct Cell {
    pub vertices: [usize; 5],
    /// Lifted vertex positions in `V`, mutually consistent.
    pub lift: [Vector4; 5],
    grid: [GridPoint; 5],
    pub volume: f64,
    /// Gradients of the barycentric coordinates (as row covectors).
    pub bary_grads: [RowVector4<f64>; 5],
}

impl Cell {
    /// Edge matrix with columns `lift[j] − lift[0]`, `j = 1..4`.
    pub fn edge_matrix(&self) -> Matrix4 {
        Matrix4::from_fn(|r, c| self.lift[c + 1][r] - self.lift[0][r])
    }

    pub fn local_index(&self, vertex: usize) -> Option<usize> {
        self.vertices.iter().position(|&v| v == vertex)
    }
}

/// A 3-face shared by two cells, with a tangent frame common to both lifts.
#[derive(Debug, Clone)]
pub struct Face {
    pub cells: [usize; 2],
    /// Local index (in each incident cell) of the vertex opposite this face.
    pub opposite: [usize; 2],
    pub frame: [Vector4; 3],
}

#[derive(Debug, Clone)]
pub struct Edge {
    /// Start and end vertex ids.
    pub ends: [usize; 2],
    /// Lifted displacement `end − start` in `V`.
    pub displacement: Vector4,
    /// One incident cell.
    pub cell: usize,
}

/// A step along an edge, `sign = +1` in the edge direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeStep {
    pub edge: usize,
    pub sign: i8,
}

#[derive(Debug, Clone)]
pub struct GeneratorLoop {
    pub steps: Vec<EdgeStep>,
}

#[derive(Debug, Clone)]
pub struct SpanningTree {
    pub root: usize,
    /// Edge step reaching each vertex from its parent (`None` at the root).
    pub parent: Vec<Option<(usize, EdgeStep)>>,
    /// Vertices in breadth-first order.
    pub order: Vec<usize>,
}

impl SpanningTree {
    pub fn edge_count(&self) -> usize {
        self.parent.iter().filter(|p| p.is_some()).count()
    }

    pub fn contains_edge(&self, edge: usize) -> bool {
        self.parent.iter().flatten().any(|(_, s)| s.edge == edge)
    }
}

#[derive(Debug, Clone)]
pub struct TorusMesh {
    lattice: Lattice,
    m: usize,
    vertices: Vec<Vector4>,
    cells: Vec<Cell>,
    faces: Vec<Face>,
    edges: Vec<Edge>,
    tree: SpanningTree,
    loops: [GeneratorLoop; 4],
    hash: String,
}

fn vertex_id(p: &GridPoint, m: i64) -> usize {
    let mut id = 0i64;
    for k in (0..4).rev() {
        id = id * m + p[k].rem_euclid(m);
    }
    id as usize
}

/// Canonical representative of a set of grid points modulo `mℤ⁴`.
fn canonical(points: &mut [GridPoint], m: i64) {
    points.sort();
    let shift = points[0].map(|x| x.div_euclid(m) * m);
    for p in points.iter_mut() {
        for k in 0..4 {
            p[k] -= shift[k];
        }
    }
}

fn permutations4() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let mut seen = [false; 4];
                    p.iter().for_each(|&x| seen[x] = true);
                    if seen.iter().all(|&s| s) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

impl TorusMesh {
    fn to_v(&self, p: &GridPoint) -> Vector4 {
        grid_to_v(&self.lattice, self.m, p)
    }
}

fn grid_to_v(lattice: &Lattice, m: usize, p: &GridPoint) -> Vector4 {
    lattice.generators() * Vector4::from_fn(|k, _| p[k] as f64) / m as f64
}

/// Build the Kuhn triangulation of `V/Γ` with `m` subdivisions per axis.
pub fn build_mesh(lattice: Lattice, m: usize) -> Result<TorusMesh, MeshError> {
    if m < 2 {
        return Err(MeshError::Subdivision(m));
    }
    let mi = m as i64;
    let n_vertices = m.pow(4);
    let vertices: Vec<Vector4> = (0..n_vertices)
        .map(|id| {
            let p: GridPoint = std::array::from_fn(|k| ((id / m.pow(k as u32)) % m) as i64);
            grid_to_v(&lattice, m, &p)
        })
        .collect();

    let mut cells = Vec::with_capacity(24 * n_vertices);
    for base in 0..n_vertices {
        let c: GridPoint = std::array::from_fn(|k| ((base / m.pow(k as u32)) % m) as i64);
        for perm in permutations4() {
            let mut grid = [c; 5];
            for j in 0..4 {
                grid[j + 1] = grid[j];
                grid[j + 1][perm[j]] += 1;
            }
            cells.push(make_cell(&lattice, m, grid));
        }
    }

    let mut face_index: HashMap<[GridPoint; 4], usize> = HashMap::new();
    let mut half_faces: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut face_keys: Vec<[GridPoint; 4]> = Vec::new();
    for (ci, cell) in cells.iter().enumerate() {
        for opp in 0..5 {
            let mut pts: Vec<GridPoint> = (0..5).filter(|&j| j != opp).map(|j| cell.grid[j]).collect();
            canonical(&mut pts, mi);
            let key: [GridPoint; 4] = [pts[0], pts[1], pts[2], pts[3]];
            let id = *face_index.entry(key).or_insert_with(|| {
                half_faces.push(Vec::new());
                face_keys.push(key);
                half_faces.len() - 1
            });
            half_faces[id].push((ci, opp));
        }
    }
    let mut faces = Vec::with_capacity(half_faces.len());
    for (inc, key) in half_faces.iter().zip(face_keys.iter()) {
        if inc.len() != 2 {
            return Err(MeshError::Invariant(format!(
                "3-face shared by {} cells instead of 2",
                inc.len()
            )));
        }
        let t = |i: usize| -> Vector4 {
            let d: GridPoint = std::array::from_fn(|k| key[i][k] - key[0][k]);
            grid_to_v(&lattice, m, &d)
        };
        faces.push(Face {
            cells: [inc[0].0, inc[1].0],
            opposite: [inc[0].1, inc[1].1],
            frame: [t(1), t(2), t(3)],
        });
    }

    let mut edge_index: HashMap<[GridPoint; 2], usize> = HashMap::new();
    let mut edges: Vec<Edge> = Vec::new();
    for (ci, cell) in cells.iter().enumerate() {
        for a in 0..5 {
            for b in (a + 1)..5 {
                let mut pts = [cell.grid[a], cell.grid[b]];
                canonical(&mut pts, mi);
                edge_index.entry(pts).or_insert_with(|| {
                    let d: GridPoint = std::array::from_fn(|k| pts[1][k] - pts[0][k]);
                    edges.push(Edge {
                        ends: [vertex_id(&pts[0], mi), vertex_id(&pts[1], mi)],
                        displacement: grid_to_v(&lattice, m, &d),
                        cell: ci,
                    });
                    edges.len() - 1
                });
            }
        }
    }

    let tree = spanning_tree(n_vertices, &edges)?;

    let loops: [GeneratorLoop; 4] = std::array::from_fn(|k| {
        let steps = (0..mi)
            .map(|j| {
                let mut pts = [[0i64; 4], [0i64; 4]];
                pts[0][k] = j;
                pts[1][k] = j + 1;
                let start = pts[0];
                canonical(&mut pts, mi);
                let edge = edge_index[&pts];
                let sign = if pts[0] == start { 1 } else { -1 };
                EdgeStep { edge, sign }
            })
            .collect();
        GeneratorLoop { steps }
    });

    let mut mesh = TorusMesh {
        lattice,
        m,
        vertices,
        cells,
        faces,
        edges,
        tree,
        loops,
        hash: String::new(),
    };
    mesh.hash = mesh.compute_hash();
    Ok(mesh)
}

fn make_cell(lattice: &Lattice, m: usize, mut grid: [GridPoint; 5]) -> Cell {
    let lift_of = |grid: &[GridPoint; 5]| grid.map(|p| grid_to_v(lattice, m, &p));
    let edge_det = |lift: &[Vector4; 5]| {
        Matrix4::from_fn(|r, c| lift[c + 1][r] - lift[0][r]).determinant()
    };
    let mut lift = lift_of(&grid);
    if edge_det(&lift) < 0.0 {
        grid.swap(3, 4);
        lift = lift_of(&grid);
    }
    let mi = m as i64;
    let vertices = grid.map(|p| vertex_id(&p, mi));
    let edge_matrix = Matrix4::from_fn(|r, c| lift[c + 1][r] - lift[0][r]);
    let det = edge_matrix.determinant();
    let inv = edge_matrix.try_inverse().expect("Kuhn simplices are non-degenerate");
    let mut bary_grads = [RowVector4::zeros(); 5];
    for j in 1..5 {
        bary_grads[j] = inv.row(j - 1).into_owned();
        bary_grads[0] -= bary_grads[j];
    }
    Cell { vertices, lift, grid, volume: det / 24.0, bary_grads }
}

fn spanning_tree(n_vertices: usize, edges: &[Edge]) -> Result<SpanningTree, MeshError> {
    let mut adjacency: Vec<Vec<(usize, EdgeStep)>> = vec![Vec::new(); n_vertices];
    for (e, edge) in edges.iter().enumerate() {
        let [a, b] = edge.ends;
        adjacency[a].push((b, EdgeStep { edge: e, sign: 1 }));
        adjacency[b].push((a, EdgeStep { edge: e, sign: -1 }));
    }
    let mut parent = vec![None; n_vertices];
    let mut seen = vec![false; n_vertices];
    let mut order = Vec::with_capacity(n_vertices);
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &(w, step) in &adjacency[v] {
            if !seen[w] {
                seen[w] = true;
                parent[w] = Some((v, step));
                queue.push_back(w);
            }
        }
    }
    if order.len() != n_vertices {
        return Err(MeshError::Invariant("edge graph is disconnected".into()));
    }
    Ok(SpanningTree { root: 0, parent, order })
}

impl TorusMesh {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn subdivisions(&self) -> usize {
        self.m
    }

    pub fn vertices(&self) -> &[Vector4] {
        &self.vertices
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn spanning_tree(&self) -> &SpanningTree {
        &self.tree
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Per-face pair of tangent frames; both incident cells see the same triple.
    pub fn face_frames(&self) -> Vec<[[Vector4; 3]; 2]> {
        self.faces.iter().map(|f| [f.frame, f.frame]).collect()
    }

    pub fn generator_loops(&self) -> &[GeneratorLoop; 4] {
        &self.loops
    }

    pub fn total_volume(&self) -> f64 {
        self.cells.iter().map(|c| c.volume).sum()
    }

    /// Summed displacement of a path of edge steps.
    pub fn winding(&self, steps: &[EdgeStep]) -> Vector4 {
        steps
            .iter()
            .map(|s| self.edges[s.edge].displacement * f64::from(s.sign))
            .sum()
    }

    /// Edge path from the tree root to `v`.
    pub fn tree_path(&self, mut v: usize) -> Vec<EdgeStep> {
        let mut path = Vec::new();
        while let Some((p, step)) = self.tree.parent[v] {
            path.push(step);
            v = p;
        }
        path.reverse();
        path
    }

    /// Lifted position of the vertex with the given grid offset from a cell's base
    /// point; used to translate loops.
    pub fn lift_of_grid(&self, p: [i64; 4]) -> Vector4 {
        self.to_v(&p)
    }

    /// Edge joining grid point `a` to `a + d` (0/1 direction `d`), with orientation.
    pub fn edge_between(&self, a: [i64; 4], d: [i64; 4]) -> Option<EdgeStep> {
        let b: GridPoint = std::array::from_fn(|k| a[k] + d[k]);
        let mut pts = [a, b];
        canonical(&mut pts, self.m as i64);
        let want = self.to_v(&std::array::from_fn(|k| pts[1][k] - pts[0][k]));
        let ends = [vertex_id(&pts[0], self.m as i64), vertex_id(&pts[1], self.m as i64)];
        let found = self
            .edges
            .iter()
            .position(|e| e.ends == ends && (e.displacement - want).norm() < 1e-12)?;
        let sign = if pts[0] == a { 1 } else { -1 };
        Some(EdgeStep { edge: found, sign })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn dump(&self) -> MeshDump {
        MeshDump {
            lattice: self.lattice.to_rows(),
            m: self.m,
            vertices: self.vertices.iter().map(|v| (*v).into()).collect(),
            cells: self
                .cells
                .iter()
                .map(|c| CellDump { vertices: c.vertices, lift: c.lift.map(|p| p.into()) })
                .collect(),
            faces: self
                .faces
                .iter()
                .map(|f| FaceDump { cells: f.cells, frame: f.frame.map(|t| t.into()) })
                .collect(),
        }
    }

    fn compute_hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.dump()).expect("mesh dump serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Check every structural invariant; used by tests and the CLI.
    pub fn validate(&self) -> Result<(), MeshError> {
        let bad = |s: String| Err(MeshError::Invariant(s));
        if 2 * self.faces.len() != 5 * self.cells.len() {
            return bad("2·#faces != 5·#cells".into());
        }
        let det = self.lattice.det();
        if (self.total_volume() - det).abs() > 1e-12 * det.max(1.0) {
            return bad(format!("volumes sum to {} instead of {det}", self.total_volume()));
        }
        for (i, c) in self.cells.iter().enumerate() {
            if c.volume <= 0.0 {
                return bad(format!("cell {i} has non-positive volume"));
            }
            let mut ids = c.vertices;
            ids.sort();
            if ids.windows(2).any(|w| w[0] == w[1]) {
                return bad(format!("cell {i} does not project injectively"));
            }
        }
        for (k, l) in self.loops.iter().enumerate() {
            if (self.winding(&l.steps) - self.lattice.generator(k)).norm() > 1e-12 {
                return bad(format!("generator loop {k} has the wrong winding"));
            }
        }
        if self.tree.edge_count() + 1 != self.n_vertices() {
            return bad("spanning tree has the wrong size".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDump {
    pub vertices: [usize; 5],
    pub lift: [[f64; 4]; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceDump {
    pub cells: [usize; 2],
    pub frame: [[f64; 4]; 3],
}

/// Structured text dump of a mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshDump {
    pub lattice: [[f64; 4]; 4],
    pub m: usize,
    pub vertices: Vec<[f64; 4]>,
    pub cells: Vec<CellDump>,
    pub faces: Vec<FaceDump>,
}

/// A polyhedral self-map of the torus: vertex images plus per-cell lifted images.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMap {
    pub vertex_images: Vec<Vector4>,
    pub cell_images: Vec<[Vector4; 5]>,
}

impl PolyMap {
    /// The affine map `x ↦ A x + b`, lifted cell by cell.
    pub fn affine(mesh: &TorusMesh, a: &Matrix4, b: &Vector4) -> PolyMap {
        PolyMap {
            vertex_images: mesh.vertices().iter().map(|x| a * x + b).collect(),
            cell_images: mesh.cells().iter().map(|c| c.lift.map(|x| a * x + b)).collect(),
        }
    }
}
