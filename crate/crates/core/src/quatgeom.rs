//! Quaternionic and exterior algebra on ℝ⁴ ≅ ℍ.
//!
//! Coordinates are `(x1, y1, x2, y2)`, identified with the quaternion
//! `x1 + y1·i + x2·j − y2·k`. This is the chart `(z1, z2) ↦ z1 + j·z2`
//! written out (`j·(i y2) = −k y2`), and it is the chart under which
//! `ω̂_• = g(•·, ·)` reproduces the coefficient tables in [`omega_hat`].
//!
//! Two-forms are stored in the lexicographic basis `dXp∧dXq`, `p < q`, with
//! `(X1, X2, X3, X4) = (x1, y1, x2, y2)`. The volume form is
//! `σ = dx1∧dy1∧dx2∧dy2 = ω_V²/2`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

pub type Vector4 = nalgebra::Vector4<f64>;
pub type Matrix4 = nalgebra::Matrix4<f64>;

/// One of the three left complex structures `I`, `J`, `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Structure {
    I,
    J,
    K,
}

impl Structure {
    pub const ALL: [Structure; 3] = [Structure::I, Structure::J, Structure::K];

    pub fn index(self) -> usize {
        match self {
            Structure::I => 0,
            Structure::J => 1,
            Structure::K => 2,
        }
    }

    fn unit(self) -> Quaternion {
        match self {
            Structure::I => Quaternion::new(0.0, 1.0, 0.0, 0.0),
            Structure::J => Quaternion::new(0.0, 0.0, 1.0, 0.0),
            Structure::K => Quaternion::new(0.0, 0.0, 0.0, 1.0),
        }
    }
}

/// Label of the four distinguished constant 2-forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormLabel {
    /// The Kähler form `ω_V` of the right complex structure.
    V,
    I,
    J,
    K,
}

impl From<Structure> for FormLabel {
    fn from(s: Structure) -> Self {
        match s {
            Structure::I => FormLabel::I,
            Structure::J => FormLabel::J,
            Structure::K => FormLabel::K,
        }
    }
}

/// Quaternion `a + b·i + c·j + d·k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Quaternion {
    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Quaternion { a, b, c, d }
    }

    /// Quaternion represented by the coordinate vector `(x1, y1, x2, y2)`.
    pub fn from_coords(v: &Vector4) -> Self {
        Quaternion::new(v[0], v[1], v[2], -v[3])
    }

    pub fn to_coords(self) -> Vector4 {
        Vector4::new(self.a, self.b, self.c, -self.d)
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, o: Quaternion) -> Quaternion {
        Quaternion::new(
            self.a * o.a - self.b * o.b - self.c * o.c - self.d * o.d,
            self.a * o.b + self.b * o.a + self.c * o.d - self.d * o.c,
            self.a * o.c - self.b * o.d + self.c * o.a + self.d * o.b,
            self.a * o.d + self.b * o.c - self.c * o.b + self.d * o.a,
        )
    }
}

fn matrix_from_map(f: impl Fn(Quaternion) -> Quaternion) -> Matrix4 {
    let mut m = Matrix4::zeros();
    for n in 0..4 {
        let col = f(Quaternion::from_coords(&Vector4::ith(n, 1.0))).to_coords();
        m.set_column(n, &col);
    }
    m
}

/// Matrix of `v ↦ •·v` in coordinates.
pub fn left_mul_matrix(which: Structure) -> Matrix4 {
    let u = which.unit();
    matrix_from_map(|q| u * q)
}

/// Matrix of `v ↦ v·i`, the complex structure of `V`.
pub fn right_mul_i_matrix() -> Matrix4 {
    let i = Structure::I.unit();
    matrix_from_map(|q| q * i)
}

pub fn left_mul(which: Structure, v: &Vector4) -> Vector4 {
    (which.unit() * Quaternion::from_coords(v)).to_coords()
}

pub fn right_mul_i(v: &Vector4) -> Vector4 {
    (Quaternion::from_coords(v) * Structure::I.unit()).to_coords()
}

/// Index pairs of the stored coefficients, in storage order.
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Constant 2-form on ℝ⁴, coefficients `[c12, c13, c14, c23, c24, c34]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TwoForm(pub [f64; 6]);

impl TwoForm {
    pub const ZERO: TwoForm = TwoForm([0.0; 6]);

    /// Coefficient of `dXp∧dXq` for any `p ≠ q` (antisymmetric extension).
    pub fn coeff(&self, p: usize, q: usize) -> f64 {
        self.to_antisymmetric()[(p, q)]
    }

    pub fn from_antisymmetric(m: &Matrix4) -> TwoForm {
        let mut c = [0.0; 6];
        for (slot, &(p, q)) in c.iter_mut().zip(PAIRS.iter()) {
            *slot = m[(p, q)];
        }
        TwoForm(c)
    }

    /// `B` with `β(u, v) = uᵀ B v`.
    pub fn to_antisymmetric(&self) -> Matrix4 {
        let mut m = Matrix4::zeros();
        for (&c, &(p, q)) in self.0.iter().zip(PAIRS.iter()) {
            m[(p, q)] = c;
            m[(q, p)] = -c;
        }
        m
    }

    pub fn eval(&self, u: &Vector4, v: &Vector4) -> f64 {
        u.dot(&(self.to_antisymmetric() * v))
    }

    /// Euclidean norm of the coefficient vector.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &TwoForm) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn self_dual_part(&self) -> TwoForm {
        (*self + hodge_star(self)) * 0.5
    }

    pub fn anti_self_dual_part(&self) -> TwoForm {
        (*self - hodge_star(self)) * 0.5
    }
}

impl Add for TwoForm {
    type Output = TwoForm;
    fn add(self, o: TwoForm) -> TwoForm {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(o.0.iter()) {
            *a += b;
        }
        TwoForm(c)
    }
}

impl AddAssign for TwoForm {
    fn add_assign(&mut self, o: TwoForm) {
        *self = *self + o;
    }
}

impl Sub for TwoForm {
    type Output = TwoForm;
    fn sub(self, o: TwoForm) -> TwoForm {
        self + (-o)
    }
}

impl Neg for TwoForm {
    type Output = TwoForm;
    fn neg(self) -> TwoForm {
        self * -1.0
    }
}

impl Mul<f64> for TwoForm {
    type Output = TwoForm;
    fn mul(self, s: f64) -> TwoForm {
        TwoForm(self.0.map(|c| c * s))
    }
}

/// The constant forms `ω_V`, `ω̂_I`, `ω̂_J`, `ω̂_K`.
pub fn omega_hat(which: FormLabel) -> TwoForm {
    match which {
        // dx1∧dy1 + dx2∧dy2
        FormLabel::V => TwoForm([1.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
        // dx1∧dy1 − dx2∧dy2
        FormLabel::I => TwoForm([1.0, 0.0, 0.0, 0.0, 0.0, -1.0]),
        // dx1∧dx2 + dy1∧dy2
        FormLabel::J => TwoForm([0.0, 1.0, 0.0, 0.0, 1.0, 0.0]),
        // −dx1∧dy2 − dx2∧dy1, and dx2∧dy1 = −dX2∧dX3
        FormLabel::K => TwoForm([0.0, 0.0, -1.0, 1.0, 0.0, 0.0]),
    }
}

pub fn hodge_star(beta: &TwoForm) -> TwoForm {
    let [c12, c13, c14, c23, c24, c34] = beta.0;
    TwoForm([c34, -c24, c23, c14, -c13, c12])
}

/// Coefficient of `β1∧β2` against `σ`.
pub fn wedge_ratio(b1: &TwoForm, b2: &TwoForm) -> f64 {
    let [a12, a13, a14, a23, a24, a34] = b1.0;
    let [b12, b13, b14, b23, b24, b34] = b2.0;
    a12 * b34 - a13 * b24 + a14 * b23 + a23 * b14 - a24 * b13 + a34 * b12
}

/// `(A*β)(u, v) = β(Au, Av)`.
pub fn pullback(a: &Matrix4, beta: &TwoForm) -> TwoForm {
    TwoForm::from_antisymmetric(&(a.transpose() * beta.to_antisymmetric() * a))
}

/// `ℛ_• A = −R_i · A · L_•`: the value of `i·(−F∘•)` on a single matrix.
pub fn r_involution(which: Structure, a: &Matrix4) -> Matrix4 {
    -(right_mul_i_matrix() * a * left_mul_matrix(which))
}

/// Eigen-splitting `A = A⁺ + A⁻` with `ℛ_• A^± = ±A^±`.
pub fn split_pm(which: Structure, a: &Matrix4) -> (Matrix4, Matrix4) {
    let r = r_involution(which, a);
    ((a + r) * 0.5, (a - r) * 0.5)
}

/// Frobenius inner product of two matrices.
pub fn frobenius(a: &Matrix4, b: &Matrix4) -> f64 {
    a.component_mul(b).sum()
}

/// Precomputed `R_i` and `L_•` for the hot loops.
#[derive(Debug, Clone, Copy)]
pub struct Involutions {
    right_i: Matrix4,
    left: [Matrix4; 3],
}

impl Involutions {
    pub fn new() -> Self {
        Involutions {
            right_i: right_mul_i_matrix(),
            left: Structure::ALL.map(left_mul_matrix),
        }
    }

    pub fn apply(&self, which: Structure, a: &Matrix4) -> Matrix4 {
        -(self.right_i * a * self.left[which.index()])
    }
}

impl Default for Involutions {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis_quat(n: usize) -> Vector4 {
        // 1, i, j, k in coordinates
        match n {
            0 => Vector4::new(1.0, 0.0, 0.0, 0.0),
            1 => Vector4::new(0.0, 1.0, 0.0, 0.0),
            2 => Vector4::new(0.0, 0.0, 1.0, 0.0),
            _ => Vector4::new(0.0, 0.0, 0.0, -1.0),
        }
    }

    fn assert_vec_eq(a: &Vector4, b: &Vector4) {
        assert!((a - b).norm() < 1e-15, "{a:?} != {b:?}");
    }

    #[test]
    fn left_multiplication_table() {
        let one = basis_quat(0);
        let i = basis_quat(1);
        let k = basis_quat(3);
        assert_vec_eq(&left_mul(Structure::I, &one), &i);
        assert_vec_eq(&left_mul(Structure::J, &i), &-k);
        assert_vec_eq(&left_mul(Structure::K, &k), &-one);
    }

    #[test]
    fn right_multiplication_table() {
        assert_vec_eq(&right_mul_i(&basis_quat(0)), &basis_quat(1));
        assert_vec_eq(&right_mul_i(&basis_quat(2)), &-basis_quat(3));
    }

    #[test]
    fn quaternion_relations() {
        let li = left_mul_matrix(Structure::I);
        let lj = left_mul_matrix(Structure::J);
        let lk = left_mul_matrix(Structure::K);
        let id = Matrix4::identity();
        assert!((li * lj - lk).norm() < 1e-15);
        for l in [li, lj, lk] {
            assert!((l * l + id).norm() < 1e-15);
        }
        assert!((li * lj + lj * li).norm() < 1e-15);
        assert!((lj * lk + lk * lj).norm() < 1e-15);
        let ri = right_mul_i_matrix();
        for l in [li, lj, lk] {
            assert!((l * ri - ri * l).norm() < 1e-15);
        }
    }

    #[test]
    fn omega_hat_is_metric_dual_of_left_structures() {
        for s in Structure::ALL {
            let l = left_mul_matrix(s);
            let form = omega_hat(s.into());
            for p in 0..4 {
                for q in 0..4 {
                    let u = Vector4::ith(p, 1.0);
                    let v = Vector4::ith(q, 1.0);
                    assert!(((l * u).dot(&v) - form.eval(&u, &v)).abs() < 1e-15);
                }
            }
        }
        let ri = right_mul_i_matrix();
        let wv = omega_hat(FormLabel::V);
        for p in 0..4 {
            for q in 0..4 {
                let u = Vector4::ith(p, 1.0);
                let v = Vector4::ith(q, 1.0);
                assert!(((ri * u).dot(&v) - wv.eval(&u, &v)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn printed_coefficients() {
        let i = omega_hat(FormLabel::I);
        assert_eq!(i.coeff(0, 1), 1.0);
        assert_eq!(i.coeff(2, 3), -1.0);
        let j = omega_hat(FormLabel::J);
        assert_eq!(j.coeff(0, 2), 1.0);
        assert_eq!(j.coeff(1, 3), 1.0);
        let k = omega_hat(FormLabel::K);
        assert_eq!(k.coeff(0, 3), -1.0);
        // dx2∧dy1
        assert_eq!(k.coeff(2, 1), -1.0);
    }

    #[test]
    fn hodge_star_properties() {
        let dx1dy1 = TwoForm([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(hodge_star(&dx1dy1), TwoForm([0.0, 0.0, 0.0, 0.0, 0.0, 1.0]));
        let wv = omega_hat(FormLabel::V);
        assert_eq!(hodge_star(&wv), wv);
        for s in Structure::ALL {
            let w = omega_hat(s.into());
            assert_eq!(hodge_star(&w), -w);
        }
        // star(dx1∧dx2) = −dy1∧dy2, star(dx1∧dy2) = dy1∧dx2
        assert_eq!(hodge_star(&TwoForm([0.0, 1.0, 0.0, 0.0, 0.0, 0.0])).coeff(1, 3), -1.0);
        assert_eq!(hodge_star(&TwoForm([0.0, 0.0, 1.0, 0.0, 0.0, 0.0])).coeff(1, 2), 1.0);
    }

    #[test]
    fn wedge_table() {
        let wv = omega_hat(FormLabel::V);
        assert_eq!(wedge_ratio(&wv, &wv), 2.0);
        for s in Structure::ALL {
            let w = omega_hat(s.into());
            assert_eq!(wedge_ratio(&w, &w), -2.0);
            assert_eq!(wedge_ratio(&wv, &w), 0.0);
            for t in Structure::ALL {
                if s != t {
                    assert_eq!(wedge_ratio(&w, &omega_hat(t.into())), 0.0);
                }
            }
        }
    }

    #[test]
    fn wedge_matches_hodge_pairing() {
        // β∧γ = ⟨β, *γ⟩ σ
        let b = TwoForm([0.3, -1.2, 0.7, 2.0, 0.1, -0.4]);
        let g = TwoForm([1.1, 0.5, -0.3, 0.2, 0.9, 1.7]);
        assert!((wedge_ratio(&b, &g) - b.dot(&hodge_star(&g))).abs() < 1e-14);
    }

    #[test]
    fn pullback_examples() {
        let b = TwoForm([0.3, -1.2, 0.7, 2.0, 0.1, -0.4]);
        assert_eq!(pullback(&Matrix4::identity(), &b), b);
        let twice = pullback(&(Matrix4::identity() * 2.0), &b);
        for (x, y) in twice.0.iter().zip(b.0.iter()) {
            assert!((x - 4.0 * y).abs() < 1e-14);
        }
        let d = Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 1.0, 2.0));
        let p = pullback(&d, &omega_hat(FormLabel::V));
        assert_eq!(p, TwoForm([1.0, 0.0, 0.0, 0.0, 0.0, 2.0]));
    }

    #[test]
    fn pullback_brute_force() {
        let a = Matrix4::from_fn(|r, c| ((r * 7 + c * 3) % 5) as f64 - 1.5);
        let b = TwoForm([0.3, -1.2, 0.7, 2.0, 0.1, -0.4]);
        let p = pullback(&a, &b);
        for &(x, y) in PAIRS.iter() {
            let u = Vector4::ith(x, 1.0);
            let v = Vector4::ith(y, 1.0);
            assert!((p.coeff(x, y) - b.eval(&(a * u), &(a * v))).abs() < 1e-13);
        }
    }

    #[test]
    fn r_involution_on_identity() {
        // −(I·v)·i on 1, i, j, k by direct quaternion products
        let mut expected = Matrix4::zeros();
        for n in 0..4 {
            let q = Quaternion::from_coords(&Vector4::ith(n, 1.0));
            let img = Structure::I.unit() * q * Structure::I.unit();
            expected.set_column(n, &(-img.to_coords()));
        }
        let r = r_involution(Structure::I, &Matrix4::identity());
        assert!((r - expected).norm() < 1e-15);
        assert!((r - Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, -1.0, -1.0))).norm() < 1e-15);
        assert_eq!(r_involution(Structure::I, &Matrix4::zeros()), Matrix4::zeros());
    }

    #[test]
    fn split_of_identity() {
        let (p, m) = split_pm(Structure::I, &Matrix4::identity());
        assert!((p - Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 0.0, 0.0))).norm() < 1e-15);
        assert!((m - Matrix4::from_diagonal(&Vector4::new(0.0, 0.0, 1.0, 1.0))).norm() < 1e-15);
    }

    #[test]
    fn split_of_eigenvector() {
        let a = Matrix4::from_fn(|r, c| (r as f64) - 0.5 * c as f64);
        let (plus, _) = split_pm(Structure::J, &a);
        let (p2, m2) = split_pm(Structure::J, &plus);
        assert!((p2 - plus).norm() < 1e-14);
        assert!(m2.norm() < 1e-14);
    }

    #[test]
    fn anti_self_dual_basis_is_orthogonal() {
        let ws: Vec<TwoForm> = Structure::ALL.iter().map(|&s| omega_hat(s.into())).collect();
        for (a, wa) in ws.iter().enumerate() {
            for (b, wb) in ws.iter().enumerate() {
                let expected = if a == b { 2.0 } else { 0.0 };
                assert_eq!(wa.dot(wb), expected);
            }
            assert_eq!(wa.dot(&omega_hat(FormLabel::V)), 0.0);
        }
    }
}
