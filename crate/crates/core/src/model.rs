//! The quaternionic point model: `R^{4n}` with structure matrices `I`, `J`,
//! `K = IJ`, dense `(0,s)`-tensors over the standard orthonormal basis, slot
//! operators, full structure action, alternation and wedge products.
//!
//! Conventions (used throughout the crate):
//! - `A_(i) b(X_1,..,X_i,..,X_s) = -b(X_1,..,A X_i,..,X_s)`,
//! - `A b(X_1,..,X_s) = (-1)^s b(A X_1,..,A X_s)`,
//! - `<a,b>` is the full orthonormal-basis contraction,
//! - alternation is projection-normalized (divide by the number of
//!   permutations), wedges are shuffle sums without factorial denominators.

use nalgebra::{DMatrix, DVector};

use crate::error::CoreError;

/// Label for one of the three local almost complex structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Structure {
    I,
    J,
    K,
}

pub const STRUCTURES: [Structure; 3] = [Structure::I, Structure::J, Structure::K];

impl Structure {
    /// Cyclic successor: I -> J -> K -> I.
    pub fn next(self) -> Structure {
        match self {
            Structure::I => Structure::J,
            Structure::J => Structure::K,
            Structure::K => Structure::I,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Structure::I => 0,
            Structure::J => 1,
            Structure::K => 2,
        }
    }

    pub fn label(self) -> char {
        match self {
            Structure::I => 'I',
            Structure::J => 'J',
            Structure::K => 'K',
        }
    }
}

/// The fixed point-model: `R^{4n}` with its flat metric and the three
/// structure matrices, block-diagonal copies of left multiplication by the
/// imaginary quaternions on coordinates `(x, y, z, w)`.
#[derive(Debug, Clone)]
pub struct QuatFrame {
    n: usize,
    dim: usize,
    mats: [DMatrix<f64>; 3],
}

/// 4x4 blocks of left multiplication by i, j, k on `x + yi + zj + wk`.
const BLOCK_I: [[f64; 4]; 4] = [
    [0.0, -1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, -1.0],
    [0.0, 0.0, 1.0, 0.0],
];
const BLOCK_J: [[f64; 4]; 4] = [
    [0.0, 0.0, -1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [1.0, 0.0, 0.0, 0.0],
    [0.0, -1.0, 0.0, 0.0],
];
const BLOCK_K: [[f64; 4]; 4] = [
    [0.0, 0.0, 0.0, -1.0],
    [0.0, 0.0, -1.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 0.0],
];

impl QuatFrame {
    /// Build the frame for half-quaternionic dimension `n` (manifold
    /// dimension `4n`).  Deterministic: the matrices are integral and fixed.
    pub fn build(n: usize) -> Result<Self, CoreError> {
        if n == 0 {
            return Err(CoreError::ZeroDimension);
        }
        let dim = 4 * n;
        let block = |b: &[[f64; 4]; 4]| {
            let mut m = DMatrix::<f64>::zeros(dim, dim);
            for c in 0..n {
                for r in 0..4 {
                    for s in 0..4 {
                        m[(4 * c + r, 4 * c + s)] = b[r][s];
                    }
                }
            }
            m
        };
        Ok(QuatFrame {
            n,
            dim,
            mats: [block(&BLOCK_I), block(&BLOCK_J), block(&BLOCK_K)],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Manifold dimension `4n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn structure(&self, a: Structure) -> &DMatrix<f64> {
        &self.mats[a.index()]
    }

    /// Kähler form `omega_A(X, Y) = <X, A Y>` as an order-2 skew tensor.
    pub fn kaehler_form(&self, a: Structure) -> Tensor {
        let m = self.structure(a);
        let mut t = Tensor::zeros(self.dim, 2);
        for i in 0..self.dim {
            for j in 0..self.dim {
                // <e_i, A e_j> = A[i, j]
                t.data_mut()[i * self.dim + j] = m[(i, j)];
            }
        }
        t
    }
}

/// Dense `(0,r)`-tensor over `R^{dim}` in the standard orthonormal basis,
/// stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dim: usize,
    order: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dim: usize, order: usize) -> Tensor {
        assert!(order >= 1, "tensor order must be at least 1");
        Tensor {
            dim,
            order,
            data: vec![0.0; dim.pow(order as u32)],
        }
    }

    pub fn from_vec(dim: usize, order: usize, data: Vec<f64>) -> Result<Tensor, CoreError> {
        if data.len() != dim.pow(order as u32) {
            return Err(CoreError::InvalidInput(format!(
                "expected {} entries for an order-{} tensor over R^{}, got {}",
                dim.pow(order as u32),
                order,
                dim,
                data.len()
            )));
        }
        Ok(Tensor { dim, order, data })
    }

    /// One-form from a coefficient vector.
    pub fn from_one_form(v: &DVector<f64>) -> Tensor {
        Tensor {
            dim: v.len(),
            order: 1,
            data: v.iter().copied().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let f = self.flat(idx);
        self.data[f] = v;
    }

    fn flat(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.order);
        let mut f = 0;
        for &i in idx {
            debug_assert!(i < self.dim);
            f = f * self.dim + i;
        }
        f
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let mut out = self.clone();
        for x in out.data.iter_mut() {
            *x *= c;
        }
        out
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.order, other.order);
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (x, y) in out.data.iter_mut().zip(other.data.iter()) {
            *x += *y;
        }
        out
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        self.add(&other.scale(-1.0))
    }

    pub fn axpy(&mut self, c: f64, other: &Tensor) {
        assert_eq!(self.order, other.order);
        assert_eq!(self.dim, other.dim);
        for (x, y) in self.data.iter_mut().zip(other.data.iter()) {
            *x += c * *y;
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Tensor product placing `self`'s slots before `other`'s.
    pub fn outer(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.dim, other.dim);
        let mut out = Tensor::zeros(self.dim, self.order + other.order);
        let stride = other.data.len();
        for (i, &a) in self.data.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.data.iter().enumerate() {
                out.data[i * stride + j] = a * b;
            }
        }
        out
    }
}

/// `A_(i) b`: contract slot `i` (1-based) with the structure matrix and flip
/// the sign.  Applying it twice with the same structure and slot negates
/// (`A^2 = -1` leaves one net sign flip).
pub fn slot_act(frame: &QuatFrame, a: Structure, slot: usize, b: &Tensor) -> Result<Tensor, CoreError> {
    if slot == 0 || slot > b.order() {
        return Err(CoreError::SlotOutOfRange { slot, order: b.order() });
    }
    Ok(contract_slot(frame.structure(a), slot, b, -1.0))
}

/// out(..., X_i, ...) = sign * b(..., M X_i, ...)
fn contract_slot(m: &DMatrix<f64>, slot: usize, b: &Tensor, sign: f64) -> Tensor {
    let dim = b.dim();
    let order = b.order();
    // view data as [pre, dim, post]
    let post: usize = dim.pow((order - slot) as u32);
    let pre: usize = dim.pow((slot - 1) as u32);
    let mut out = Tensor::zeros(dim, order);
    let src = b.data();
    let dst = out.data_mut();
    for p in 0..pre {
        let base = p * dim * post;
        for y in 0..dim {
            // M e_y = sum_z M[z, y] e_z
            for z in 0..dim {
                let c = m[(z, y)];
                if c == 0.0 {
                    continue;
                }
                let s = base + z * post;
                let d = base + y * post;
                for q in 0..post {
                    dst[d + q] += sign * c * src[s + q];
                }
            }
        }
    }
    out
}

/// `b` with slot `i` (1-based) contracted by an arbitrary matrix and the
/// sign flipped, the single-slot piece of the derivation action.
pub fn matrix_slot_act(m: &DMatrix<f64>, slot: usize, b: &Tensor) -> Result<Tensor, CoreError> {
    if slot == 0 || slot > b.order() {
        return Err(CoreError::SlotOutOfRange { slot, order: b.order() });
    }
    Ok(contract_slot(m, slot, b, -1.0))
}

/// Derivation (Lie algebra) action: `rho(S) b = -sum_i b(X_1,.., S X_i,..)`.
pub fn derivation_act(m: &DMatrix<f64>, b: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(b.dim(), b.order());
    for slot in 1..=b.order() {
        out.axpy(1.0, &contract_slot(m, slot, b, -1.0));
    }
    out
}

/// Full structure action `A b(X_1,..,X_s) = (-1)^s b(A X_1,..,A X_s)`.
pub fn full_act(frame: &QuatFrame, a: Structure, b: &Tensor) -> Tensor {
    let s = b.order();
    let m = frame.structure(a);
    let mut cur = b.clone();
    for slot in 1..=s {
        cur = contract_slot(m, slot, &cur, 1.0);
    }
    if s % 2 == 1 {
        cur = cur.scale(-1.0);
    }
    cur
}

/// Full orthonormal-basis contraction `<a, b>`.
pub fn tensor_inner(a: &Tensor, b: &Tensor) -> Result<f64, CoreError> {
    if a.order() != b.order() {
        return Err(CoreError::OrderMismatch { left: a.order(), right: b.order() });
    }
    if a.dim() != b.dim() {
        return Err(CoreError::DimMismatch { left: a.dim(), right: b.dim() });
    }
    Ok(a.data().iter().zip(b.data().iter()).map(|(x, y)| x * y).sum())
}

const PERMS4: [([usize; 4], f64); 24] = {
    // All permutations of (0,1,2,3) with signs, lexicographic.
    [
        ([0, 1, 2, 3], 1.0),
        ([0, 1, 3, 2], -1.0),
        ([0, 2, 1, 3], -1.0),
        ([0, 2, 3, 1], 1.0),
        ([0, 3, 1, 2], 1.0),
        ([0, 3, 2, 1], -1.0),
        ([1, 0, 2, 3], -1.0),
        ([1, 0, 3, 2], 1.0),
        ([1, 2, 0, 3], 1.0),
        ([1, 2, 3, 0], -1.0),
        ([1, 3, 0, 2], -1.0),
        ([1, 3, 2, 0], 1.0),
        ([2, 0, 1, 3], 1.0),
        ([2, 0, 3, 1], -1.0),
        ([2, 1, 0, 3], -1.0),
        ([2, 1, 3, 0], 1.0),
        ([2, 3, 0, 1], 1.0),
        ([2, 3, 1, 0], -1.0),
        ([3, 0, 1, 2], -1.0),
        ([3, 0, 2, 1], 1.0),
        ([3, 1, 0, 2], 1.0),
        ([3, 1, 2, 0], -1.0),
        ([3, 2, 0, 1], -1.0),
        ([3, 2, 1, 0], 1.0),
    ]
};

/// Projection-normalized alternation over the trailing four slots; spectator
/// slots are untouched.  Idempotent on its image.
pub fn alternate4(b: &Tensor) -> Result<Tensor, CoreError> {
    if b.order() < 4 {
        return Err(CoreError::OrderTooSmall { order: b.order(), need: 4 });
    }
    let dim = b.dim();
    let spect: usize = dim.pow((b.order() - 4) as u32);
    let d2 = dim * dim;
    let d3 = d2 * dim;
    let d4 = d3 * dim;
    let mut out = Tensor::zeros(dim, b.order());
    let src = b.data();
    let dst = out.data_mut();
    for p in 0..spect {
        let base = p * d4;
        for i0 in 0..dim {
            for i1 in 0..dim {
                for i2 in 0..dim {
                    for i3 in 0..dim {
                        let pos = [i0, i1, i2, i3];
                        let mut acc = 0.0;
                        for (perm, sign) in PERMS4.iter() {
                            let f = base
                                + pos[perm[0]] * d3
                                + pos[perm[1]] * d2
                                + pos[perm[2]] * dim
                                + pos[perm[3]];
                            acc += sign * src[f];
                        }
                        dst[base + i0 * d3 + i1 * d2 + i2 * dim + i3] = acc / 24.0;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// (2,2)-shuffles of (0,1,2,3): first pair feeds the left factor.
const SHUFFLES22: [([usize; 4], f64); 6] = [
    ([0, 1, 2, 3], 1.0),
    ([0, 2, 1, 3], -1.0),
    ([0, 3, 1, 2], 1.0),
    ([1, 2, 0, 3], 1.0),
    ([1, 3, 0, 2], -1.0),
    ([2, 3, 0, 1], 1.0),
];

/// Wedge of two 2-forms as a shuffle sum (six terms, no factorial
/// denominators): `(a ^ b)(X_1..X_4) = sum_sh sign a(X_p, X_q) b(X_r, X_s)`.
pub fn wedge_2_2(a: &Tensor, b: &Tensor) -> Result<Tensor, CoreError> {
    if a.order() != 2 || b.order() != 2 {
        return Err(CoreError::InvalidInput("wedge_2_2 expects two 2-forms".into()));
    }
    let dim = a.dim();
    let mut out = Tensor::zeros(dim, 4);
    let d2 = dim * dim;
    let d3 = d2 * dim;
    let av = a.data();
    let bv = b.data();
    let dst = out.data_mut();
    for i0 in 0..dim {
        for i1 in 0..dim {
            for i2 in 0..dim {
                for i3 in 0..dim {
                    let pos = [i0, i1, i2, i3];
                    let mut acc = 0.0;
                    for (sh, sign) in SHUFFLES22.iter() {
                        acc += sign
                            * av[pos[sh[0]] * dim + pos[sh[1]]]
                            * bv[pos[sh[2]] * dim + pos[sh[3]]];
                    }
                    dst[i0 * d3 + i1 * d2 + i2 * dim + i3] = acc;
                }
            }
        }
    }
    Ok(out)
}

/// Wedge a `(1 + 2)`-tensor (one spectator slot, skew 2-form part) with a
/// 2-form: `(beta ^ omega)(X; Y,Z,V,W)` is the (2,2)-shuffle sum in the last
/// four slots with `X` untouched.
pub fn wedge22(beta: &Tensor, omega: &Tensor, tol: f64) -> Result<Tensor, CoreError> {
    if beta.order() != 3 || omega.order() != 2 {
        return Err(CoreError::InvalidInput(
            "wedge22 expects an order-3 tensor and a 2-form".into(),
        ));
    }
    let dim = beta.dim();
    // validate declared skew symmetries
    let scale = beta.max_abs().max(1e-300);
    let mut worst = 0.0f64;
    for x in 0..dim {
        for y in 0..dim {
            for z in 0..y {
                let r = beta.data()[(x * dim + y) * dim + z] + beta.data()[(x * dim + z) * dim + y];
                worst = worst.max(r.abs());
            }
        }
    }
    if worst > tol * scale {
        return Err(CoreError::SymmetryViolation("wedge22 factor not skew in last two slots", worst));
    }
    let oscale = omega.max_abs().max(1e-300);
    let mut oworst = 0.0f64;
    for y in 0..dim {
        for z in 0..y {
            oworst = oworst.max((omega.data()[y * dim + z] + omega.data()[z * dim + y]).abs());
        }
    }
    if oworst > tol * oscale {
        return Err(CoreError::SymmetryViolation("wedge22 2-form factor not skew", oworst));
    }

    let d2 = dim * dim;
    let d3 = d2 * dim;
    let d4 = d3 * dim;
    let mut out = Tensor::zeros(dim, 5);
    let bv = beta.data();
    let ov = omega.data();
    let dst = out.data_mut();
    for x in 0..dim {
        let bbase = x * d2;
        let obase = x * d4;
        for i0 in 0..dim {
            for i1 in 0..dim {
                for i2 in 0..dim {
                    for i3 in 0..dim {
                        let pos = [i0, i1, i2, i3];
                        let mut acc = 0.0;
                        for (sh, sign) in SHUFFLES22.iter() {
                            acc += sign
                                * bv[bbase + pos[sh[0]] * dim + pos[sh[1]]]
                                * ov[pos[sh[2]] * dim + pos[sh[3]]];
                        }
                        dst[obase + i0 * d3 + i1 * d2 + i2 * dim + i3] = acc;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Wedge of two one-forms: `(a ^ b)(X, Y) = a(X) b(Y) - a(Y) b(X)`.
pub fn wedge_1_1(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.order(), 1);
    assert_eq!(b.order(), 1);
    let dim = a.dim();
    let mut out = Tensor::zeros(dim, 2);
    for x in 0..dim {
        for y in 0..dim {
            out.data_mut()[x * dim + y] = a.data()[x] * b.data()[y] - a.data()[y] * b.data()[x];
        }
    }
    out
}

/// Wedge of a one-form with a 2-form, three-term shuffle sum:
/// `(a ^ w)(X,Y,Z) = a(X) w(Y,Z) - a(Y) w(X,Z) + a(Z) w(X,Y)`.
pub fn wedge_1_2(a: &Tensor, w: &Tensor) -> Tensor {
    assert_eq!(a.order(), 1);
    assert_eq!(w.order(), 2);
    let dim = a.dim();
    let mut out = Tensor::zeros(dim, 3);
    let d2 = dim * dim;
    for x in 0..dim {
        for y in 0..dim {
            for z in 0..dim {
                out.data_mut()[x * d2 + y * dim + z] = a.data()[x] * w.data()[y * dim + z]
                    - a.data()[y] * w.data()[x * dim + z]
                    + a.data()[z] * w.data()[x * dim + y];
            }
        }
    }
    out
}

/// Apply the structure matrix to a one-form via the full action:
/// `(A eta)(X) = -eta(A X)`.
pub fn act_one_form(frame: &QuatFrame, a: Structure, eta: &DVector<f64>) -> DVector<f64> {
    -frame.structure(a).transpose() * eta
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, dim: usize, order: usize) -> Tensor {
        let mut t = Tensor::zeros(dim, order);
        for x in t.data_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        t
    }

    #[test]
    fn quaternion_identities() {
        for n in 1..=3 {
            let f = QuatFrame::build(n).unwrap();
            let dim = f.dim();
            let id = DMatrix::<f64>::identity(dim, dim);
            let (i, j, k) = (f.structure(Structure::I), f.structure(Structure::J), f.structure(Structure::K));
            assert_eq!(i * i, -&id);
            assert_eq!(j * j, -&id);
            assert_eq!(k * k, -&id);
            assert_eq!(i * j, k.clone());
            assert_eq!(j * i, -k.clone());
            assert_eq!(j * k, i.clone());
            assert_eq!(k * i, j.clone());
            for m in [i, j, k] {
                assert_eq!(m.transpose() * m, id.clone());
                assert_eq!(m.transpose(), -m.clone());
            }
        }
    }

    #[test]
    fn rejects_n_zero() {
        assert!(QuatFrame::build(0).is_err());
    }

    #[test]
    fn kaehler_form_properties() {
        let f = QuatFrame::build(2).unwrap();
        for a in STRUCTURES {
            let w = f.kaehler_form(a);
            // skew
            for x in 0..f.dim() {
                assert_eq!(w.get(&[x, x]), 0.0);
                for y in 0..f.dim() {
                    assert_eq!(w.get(&[x, y]), -w.get(&[y, x]));
                }
            }
            // omega_A(A X, A Y) = omega_A(X, Y)
            let acted = full_act(&f, a, &w);
            assert!(acted.sub(&w).max_abs() < 1e-14);
        }
    }

    #[test]
    fn inner_products_of_kaehler_forms() {
        for n in 1..=3 {
            let f = QuatFrame::build(n).unwrap();
            let wi = f.kaehler_form(Structure::I);
            let wj = f.kaehler_form(Structure::J);
            assert_abs_diff_eq!(tensor_inner(&wi, &wi).unwrap(), 4.0 * n as f64, epsilon = 1e-12);
            assert_abs_diff_eq!(tensor_inner(&wi, &wj).unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn inner_product_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = random_tensor(&mut rng, 8, 3);
        assert!(tensor_inner(&b, &b).unwrap() > 0.0);
        let z = Tensor::zeros(8, 3);
        assert_eq!(tensor_inner(&z, &z).unwrap(), 0.0);
        assert!(tensor_inner(&b, &Tensor::zeros(8, 2)).is_err());
    }

    #[test]
    fn slot_act_involution_and_metric() {
        let f = QuatFrame::build(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_tensor(&mut rng, f.dim(), 3);
        let twice = slot_act(&f, Structure::I, 1, &slot_act(&f, Structure::I, 1, &b).unwrap()).unwrap();
        assert!(twice.add(&b).max_abs() < 1e-13);
        // I_(2) omega_I (X, Y) = -omega_I(X, I Y) = <X, Y>
        let wi = f.kaehler_form(Structure::I);
        let g = slot_act(&f, Structure::I, 2, &wi).unwrap();
        for x in 0..f.dim() {
            for y in 0..f.dim() {
                let expect = if x == y { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(g.get(&[x, y]), expect, epsilon = 1e-14);
            }
        }
        assert!(slot_act(&f, Structure::I, 4, &b).is_err());
        assert!(slot_act(&f, Structure::I, 0, &b).is_err());
    }

    #[test]
    fn full_act_on_kaehler_forms() {
        let f = QuatFrame::build(2).unwrap();
        let wi = f.kaehler_form(Structure::I);
        // omega_I is (1,1) for I, anti-invariant for J and K
        assert!(full_act(&f, Structure::I, &wi).sub(&wi).max_abs() < 1e-14);
        assert!(full_act(&f, Structure::J, &wi).add(&wi).max_abs() < 1e-14);
        assert!(full_act(&f, Structure::K, &wi).add(&wi).max_abs() < 1e-14);
    }

    #[test]
    fn full_act_squared_sign_depends_on_order() {
        // (A(A b)) = (-1)^s b: negation on odd order, identity on even.
        let f = QuatFrame::build(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let eta = random_tensor(&mut rng, f.dim(), 1);
        let twice = full_act(&f, Structure::J, &full_act(&f, Structure::J, &eta));
        assert!(twice.add(&eta).max_abs() < 1e-14);
        let b = random_tensor(&mut rng, f.dim(), 2);
        let twice = full_act(&f, Structure::J, &full_act(&f, Structure::J, &b));
        assert!(twice.sub(&b).max_abs() < 1e-14);
    }

    #[test]
    fn full_act_equals_slot_act_composition() {
        let f = QuatFrame::build(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for order in 1..=4 {
            let b = random_tensor(&mut rng, f.dim(), order);
            for a in STRUCTURES {
                let full = full_act(&f, a, &b);
                let mut comp = b.clone();
                for slot in 1..=order {
                    comp = slot_act(&f, a, slot, &comp).unwrap();
                }
                assert!(full.sub(&comp).max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inner_product_invariance_under_full_act() {
        let f = QuatFrame::build(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for order in 1..=3 {
            let a = random_tensor(&mut rng, f.dim(), order);
            let b = random_tensor(&mut rng, f.dim(), order);
            for s in STRUCTURES {
                let lhs = tensor_inner(&full_act(&f, s, &a), &full_act(&f, s, &b)).unwrap();
                let rhs = tensor_inner(&a, &b).unwrap();
                assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-11 * (1.0 + rhs.abs()));
            }
        }
    }

    #[test]
    fn alternation_idempotent_and_kills_symmetric() {
        let f = QuatFrame::build(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random_tensor(&mut rng, f.dim(), 4);
        let alt = alternate4(&b).unwrap();
        let again = alternate4(&alt).unwrap();
        assert!(again.sub(&alt).max_abs() < 1e-13);
        // symmetric pair pattern dies
        let mut g = Tensor::zeros(f.dim(), 2);
        for i in 0..f.dim() {
            g.set(&[i, i], 1.0);
        }
        let gg = g.outer(&g);
        assert!(alternate4(&gg).unwrap().max_abs() < 1e-14);
        assert!(alternate4(&g).is_err());
    }

    #[test]
    fn alternation_of_wedge_squares() {
        // a(w (x) w) is the projection-normalized version of w ^ w: the
        // 6-term shuffle wedge equals 6 times the alternation of the product.
        let f = QuatFrame::build(2).unwrap();
        let w = f.kaehler_form(Structure::I);
        let wedge = wedge_2_2(&w, &w).unwrap();
        let alt = alternate4(&w.outer(&w)).unwrap();
        assert!(wedge.sub(&alt.scale(6.0)).max_abs() < 1e-12);
    }

    #[test]
    fn wedge22_matches_brute_shuffle_and_rejects_bad_flags() {
        let f = QuatFrame::build(1).unwrap();
        let dim = f.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let eta = random_tensor(&mut rng, dim, 1);
        let wi = f.kaehler_form(Structure::I);
        let beta = eta.outer(&wi);
        let out = wedge22(&beta, &wi, 1e-12).unwrap();
        // independent oracle: direct shuffle sum
        for x in 0..dim {
            for a in 0..dim {
                for b in 0..dim {
                    for c in 0..dim {
                        for d in 0..dim {
                            let pos = [a, b, c, d];
                            let mut acc = 0.0;
                            for (sh, sign) in super::SHUFFLES22.iter() {
                                acc += sign
                                    * beta.get(&[x, pos[sh[0]], pos[sh[1]]])
                                    * wi.get(&[pos[sh[2]], pos[sh[3]]]);
                            }
                            assert_abs_diff_eq!(out.get(&[x, a, b, c, d]), acc, epsilon = 1e-13);
                        }
                    }
                }
            }
        }
        // zero in, zero out
        let zero = Tensor::zeros(dim, 3);
        assert!(wedge22(&zero, &wi, 1e-12).unwrap().max_abs() == 0.0);
        // non-skew factor rejected
        let bad = random_tensor(&mut rng, dim, 3);
        assert!(wedge22(&bad, &wi, 1e-12).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn prop_inner_invariance(seed in 0u64..1000) {
            let f = QuatFrame::build(1).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_tensor(&mut rng, f.dim(), 2);
            let b = random_tensor(&mut rng, f.dim(), 2);
            for s in STRUCTURES {
                let lhs = tensor_inner(&full_act(&f, s, &a), &full_act(&f, s, &b)).unwrap();
                let rhs = tensor_inner(&a, &b).unwrap();
                proptest::prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()));
            }
        }
    }
}
