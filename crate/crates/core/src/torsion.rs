//! The `(lambda, alpha)` parametrization of admissible first-order torsion
//! data: every admissible triple `(nabla omega_I, nabla omega_J, nabla
//! omega_K)` is
//!
//! ```text
//! nabla omega_A = lambda_C (x) omega_B - lambda_B (x) omega_C
//!               + B_(2) alpha_C - C_(2) alpha_B,        (A,B,C) cyclic,
//! ```
//!
//! with `lambda_A` one-forms and `alpha_A` order-3 tensors that are, in each
//! fixed first slot, symmetric, trace-free and commute with all three
//! structures.  This module builds a deterministic orthonormal basis of that
//! alpha space, reconstructs triples from parameters, extracts parameters
//! back out, and validates raw triples against the defining relations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::model::{
    act_one_form, slot_act, QuatFrame, Structure, Tensor, STRUCTURES,
};

/// Cyclic companions: `I -> (J, K)`, `J -> (K, I)`, `K -> (I, J)`.
pub fn cyclic(a: Structure) -> (Structure, Structure) {
    (a.next(), a.next().next())
}

/// Orthonormal basis of the per-slot alpha space: real `4n x 4n` matrices
/// that are symmetric, trace-free and commute with `I`, `J`, `K`.  The space
/// has dimension `2n^2 - n - 1` per slot (so it is zero when `n = 1`).
#[derive(Debug, Clone)]
pub struct AlphaBasis {
    dim: usize,
    slot_mats: Vec<DMatrix<f64>>,
}

impl AlphaBasis {
    pub fn build(frame: &QuatFrame) -> Result<AlphaBasis, CoreError> {
        let d = frame.dim();
        let n = frame.n();
        // Unknowns: all d^2 entries of S.  Rows: S = S^T, SI = IS, SJ = JS,
        // tr S = 0.  (Commuting with K follows from I and J.)
        let entry = |r: usize, c: usize| r * d + c;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for r in 0..d {
            for c in 0..r {
                let mut row = vec![0.0; d * d];
                row[entry(r, c)] += 1.0;
                row[entry(c, r)] -= 1.0;
                rows.push(row);
            }
        }
        for a in [Structure::I, Structure::J] {
            let m = frame.structure(a);
            for r in 0..d {
                for c in 0..d {
                    // (S M - M S)[r, c] = sum_k S[r,k] M[k,c] - M[r,k] S[k,c]
                    let mut row = vec![0.0; d * d];
                    for k in 0..d {
                        row[entry(r, k)] += m[(k, c)];
                        row[entry(k, c)] -= m[(r, k)];
                    }
                    rows.push(row);
                }
            }
        }
        let mut trace = vec![0.0; d * d];
        for r in 0..d {
            trace[entry(r, r)] = 1.0;
        }
        rows.push(trace);

        let nrows = rows.len();
        let mut cmat = DMatrix::<f64>::zeros(nrows, d * d);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                cmat[(i, j)] = v;
            }
        }
        let basis_vecs = nullspace(&cmat, 1e-10);
        let expect = if n >= 1 { 2 * n * n - n - 1 } else { 0 };
        if basis_vecs.len() != expect {
            return Err(CoreError::UnexpectedIsotypic(format!(
                "alpha slot space has dimension {}, expected {}",
                basis_vecs.len(),
                expect
            )));
        }
        let slot_mats = basis_vecs
            .into_iter()
            .map(|v| DMatrix::from_fn(d, d, |r, c| v[entry(r, c)]))
            .collect();
        Ok(AlphaBasis { dim: d, slot_mats })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dimension of the matrix space attached to one first-slot direction.
    pub fn slot_dim(&self) -> usize {
        self.slot_mats.len()
    }

    /// Dimension of the full alpha space, `4n * slot_dim`.
    pub fn total_dim(&self) -> usize {
        self.dim * self.slot_dim()
    }

    pub fn slot_mat(&self, b: usize) -> &DMatrix<f64> {
        &self.slot_mats[b]
    }

    /// Basis tensor `e_x (x) S_b` as an order-3 tensor; basis index is
    /// `x * slot_dim + b`.
    pub fn tensor(&self, idx: usize) -> Tensor {
        let m = self.slot_dim();
        let (x, b) = (idx / m, idx % m);
        let d = self.dim;
        let mut t = Tensor::zeros(d, 3);
        let s = &self.slot_mats[b];
        for y in 0..d {
            for z in 0..d {
                t.data_mut()[(x * d + y) * d + z] = s[(y, z)];
            }
        }
        t
    }

    /// Linear combination of basis tensors.
    pub fn assemble(&self, coords: &[f64]) -> Tensor {
        assert_eq!(coords.len(), self.total_dim());
        let d = self.dim;
        let m = self.slot_dim();
        let mut t = Tensor::zeros(d, 3);
        for x in 0..d {
            for b in 0..m {
                let c = coords[x * m + b];
                if c == 0.0 {
                    continue;
                }
                let s = &self.slot_mats[b];
                for y in 0..d {
                    for z in 0..d {
                        t.data_mut()[(x * d + y) * d + z] += c * s[(y, z)];
                    }
                }
            }
        }
        t
    }

    /// Orthogonal projection coordinates of an arbitrary order-3 tensor.
    pub fn project_coords(&self, alpha: &Tensor) -> Vec<f64> {
        let d = self.dim;
        let m = self.slot_dim();
        let mut coords = vec![0.0; self.total_dim()];
        for x in 0..d {
            for b in 0..m {
                let s = &self.slot_mats[b];
                let mut acc = 0.0;
                for y in 0..d {
                    for z in 0..d {
                        acc += alpha.data()[(x * d + y) * d + z] * s[(y, z)];
                    }
                }
                coords[x * m + b] = acc;
            }
        }
        coords
    }
}

/// Nullspace basis of a wide-or-tall constraint matrix, orthonormal rows of
/// `V^T` with singular value below `tol * sigma_max` (or absolute `tol` when
/// the matrix vanishes).
pub fn nullspace(m: &DMatrix<f64>, tol: f64) -> Vec<DVector<f64>> {
    // pad wide matrices to square so v_t spans the whole domain
    let work = if m.nrows() < m.ncols() {
        let mut w = DMatrix::<f64>::zeros(m.ncols(), m.ncols());
        w.rows_mut(0, m.nrows()).copy_from(m);
        w
    } else {
        m.clone()
    };
    let svd = work.svd(false, true);
    let vt = svd.v_t.expect("svd requested v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let thresh = if smax > 0.0 { tol * smax } else { tol };
    let mut out = Vec::new();
    let ncols = m.ncols();
    for i in 0..ncols {
        let s = if i < svd.singular_values.len() {
            svd.singular_values[i]
        } else {
            0.0
        };
        if s <= thresh {
            out.push(vt.row(i).transpose());
        }
    }
    out
}

/// The free parameters of an admissible torsion triple.
#[derive(Debug, Clone)]
pub struct TorsionParams {
    pub lambda: [DVector<f64>; 3],
    pub alpha: [Tensor; 3],
}

impl TorsionParams {
    /// Total parameter count: `3 * 4n` lambdas plus `3 * 4n(2n^2 - n - 1)`
    /// alphas.
    pub fn param_dim(frame: &QuatFrame, basis: &AlphaBasis) -> usize {
        3 * frame.dim() + 3 * basis.total_dim()
    }

    /// Decode a flat coordinate vector laid out as
    /// `[lambda_I, lambda_J, lambda_K, alpha_I, alpha_J, alpha_K]`.
    pub fn from_coords(
        frame: &QuatFrame,
        basis: &AlphaBasis,
        coords: &[f64],
    ) -> Result<TorsionParams, CoreError> {
        let d = frame.dim();
        let m = basis.total_dim();
        if coords.len() != 3 * d + 3 * m {
            return Err(CoreError::InvalidInput(format!(
                "expected {} parameter coordinates, got {}",
                3 * d + 3 * m,
                coords.len()
            )));
        }
        let lam = |i: usize| DVector::from_column_slice(&coords[i * d..(i + 1) * d]);
        let alf = |i: usize| basis.assemble(&coords[3 * d + i * m..3 * d + (i + 1) * m]);
        Ok(TorsionParams {
            lambda: [lam(0), lam(1), lam(2)],
            alpha: [alf(0), alf(1), alf(2)],
        })
    }

    /// Flat coordinates, inverse of [`TorsionParams::from_coords`] for
    /// admissible alphas.
    pub fn to_coords(&self, basis: &AlphaBasis) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.lambda {
            out.extend(l.iter().copied());
        }
        for a in &self.alpha {
            out.extend(basis.project_coords(a));
        }
        out
    }
}

/// A raw triple of covariant derivatives of the three Kähler forms, each an
/// order-3 tensor (first slot is the derivative direction).
#[derive(Debug, Clone)]
pub struct TorsionTriple {
    pub nabla: [Tensor; 3],
}

/// Serialization schema for torsion triples: `n` plus three row-major
/// `(4n)^3` arrays.
#[derive(Debug, Serialize, Deserialize)]
pub struct TorsionTripleRecord {
    pub n: usize,
    pub nabla_omega_i: Vec<f64>,
    pub nabla_omega_j: Vec<f64>,
    pub nabla_omega_k: Vec<f64>,
}

impl TorsionTriple {
    pub fn from_record(rec: &TorsionTripleRecord) -> Result<(QuatFrame, TorsionTriple), CoreError> {
        let frame = QuatFrame::build(rec.n)?;
        let d = frame.dim();
        let mk = |v: &Vec<f64>| Tensor::from_vec(d, 3, v.clone());
        let triple = TorsionTriple {
            nabla: [
                mk(&rec.nabla_omega_i)?,
                mk(&rec.nabla_omega_j)?,
                mk(&rec.nabla_omega_k)?,
            ],
        };
        Ok((frame, triple))
    }

    pub fn to_record(&self, frame: &QuatFrame) -> TorsionTripleRecord {
        TorsionTripleRecord {
            n: frame.n(),
            nabla_omega_i: self.nabla[0].data().to_vec(),
            nabla_omega_j: self.nabla[1].data().to_vec(),
            nabla_omega_k: self.nabla[2].data().to_vec(),
        }
    }

    pub fn get(&self, a: Structure) -> &Tensor {
        &self.nabla[a.index()]
    }

    pub fn norm(&self) -> f64 {
        self.nabla
            .iter()
            .map(|t| t.norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Lemma-style reconstruction of the full triple from its parameters.
pub fn reconstruct(frame: &QuatFrame, params: &TorsionParams) -> TorsionTriple {
    let d = frame.dim();
    let omega: Vec<Tensor> = STRUCTURES.iter().map(|&a| frame.kaehler_form(a)).collect();
    let mut nabla = Vec::with_capacity(3);
    for &a in &STRUCTURES {
        let (b, c) = cyclic(a);
        let lam_b = Tensor::from_one_form(&params.lambda[b.index()]);
        let lam_c = Tensor::from_one_form(&params.lambda[c.index()]);
        let mut t = lam_c.outer(&omega[b.index()]);
        t.axpy(-1.0, &lam_b.outer(&omega[c.index()]));
        t.axpy(
            1.0,
            &slot_act(frame, b, 2, &params.alpha[c.index()]).expect("order-3 slot"),
        );
        t.axpy(
            -1.0,
            &slot_act(frame, c, 2, &params.alpha[b.index()]).expect("order-3 slot"),
        );
        debug_assert_eq!(t.dim(), d);
        nabla.push(t);
    }
    TorsionTriple {
        nabla: [nabla.remove(0), nabla.remove(0), nabla.remove(0)],
    }
}

/// `lambda_A(X) = (1/4n) <nabla_X omega_B, omega_C>` with `(A,B,C)` cyclic.
pub fn extract_lambda(frame: &QuatFrame, triple: &TorsionTriple, a: Structure) -> DVector<f64> {
    let (b, c) = cyclic(a);
    let d = frame.dim();
    let omega_c = frame.kaehler_form(c);
    let nb = triple.get(b);
    DVector::from_fn(d, |x, _| {
        let mut acc = 0.0;
        for y in 0..d {
            for z in 0..d {
                acc += nb.data()[(x * d + y) * d + z] * omega_c.data()[y * d + z];
            }
        }
        acc / d as f64
    })
}

/// `alpha_A = -lambda_A (x) g + (1/2)(B_(2) - B_(3)) nabla omega_C`.
pub fn extract_alpha(frame: &QuatFrame, triple: &TorsionTriple, a: Structure) -> Tensor {
    let (b, c) = cyclic(a);
    let d = frame.dim();
    let lam = extract_lambda(frame, triple, a);
    let nc = triple.get(c);
    let mut out = slot_act(frame, b, 2, nc).expect("order-3 slot");
    out.axpy(-1.0, &slot_act(frame, b, 3, nc).expect("order-3 slot"));
    let mut out = out.scale(0.5);
    for x in 0..d {
        for y in 0..d {
            let idx = (x * d + y) * d + y;
            out.data_mut()[idx] -= lam[x];
        }
    }
    out
}

pub fn extract_params(frame: &QuatFrame, triple: &TorsionTriple) -> TorsionParams {
    TorsionParams {
        lambda: [
            extract_lambda(frame, triple, Structure::I),
            extract_lambda(frame, triple, Structure::J),
            extract_lambda(frame, triple, Structure::K),
        ],
        alpha: [
            extract_alpha(frame, triple, Structure::I),
            extract_alpha(frame, triple, Structure::J),
            extract_alpha(frame, triple, Structure::K),
        ],
    }
}

/// `eta_A(X) = sum_i alpha_A(e_i, e_i, X)`.
pub fn eta_of_alpha(frame: &QuatFrame, alpha: &Tensor) -> DVector<f64> {
    let d = frame.dim();
    DVector::from_fn(d, |x, _| {
        let mut acc = 0.0;
        for i in 0..d {
            acc += alpha.data()[(i * d + i) * d + x];
        }
        acc
    })
}

/// The `EH`-component of an admissible alpha, rebuilt in closed form from its
/// trace one-form.  Defined only for `n >= 2`; at `n = 1` the alpha space is
/// zero.
pub fn alpha_e_part(frame: &QuatFrame, alpha: &Tensor) -> Result<Tensor, CoreError> {
    let n = frame.n();
    if n < 2 {
        return Err(CoreError::DimensionTooSmall(n));
    }
    let eta = eta_of_alpha(frame, alpha);
    Ok(alpha_from_eta(frame, &eta))
}

/// `(1 / ((2n+1)(n-1))) { 4n e_i (x) (eta v e_i)^H - eta (x) g }` where
/// `4 (a v b)^H = a v b + Ia v Ib + Ja v Jb + Ka v Kb` and
/// `a v b = (1/2)(a (x) b + b (x) a)`.
pub fn alpha_from_eta(frame: &QuatFrame, eta: &DVector<f64>) -> Tensor {
    let n = frame.n();
    let d = frame.dim();
    let denom = ((2 * n + 1) * (n - 1)) as f64;
    let acted: Vec<DVector<f64>> = STRUCTURES
        .iter()
        .map(|&a| act_one_form(frame, a, eta))
        .collect();
    let mut t = Tensor::zeros(d, 3);
    for x in 0..d {
        // basis columns of each structure matrix give the acted frame vector
        for y in 0..d {
            for z in 0..d {
                let mut acc = 0.5 * (eta[y] * ind(x, z) + ind(x, y) * eta[z]);
                for (s, av) in STRUCTURES.iter().zip(acted.iter()) {
                    let m = frame.structure(*s);
                    acc += 0.5 * (av[y] * m[(z, x)] + m[(y, x)] * av[z]);
                }
                // 4n * (..)^H = n * (sum of the four v-terms)
                let mut v = n as f64 * acc;
                if y == z {
                    v -= eta[x];
                }
                t.data_mut()[(x * d + y) * d + z] = v / denom;
            }
        }
    }
    t
}

fn ind(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// Validate the defining relations of an admissible triple.  Checks, per
/// structure `A`: skewness of `nabla omega_A` in the last two slots, the
/// `(1,1)`-type condition `nabla_X omega_A (AY, AZ) = - nabla_X omega_A (Y,
/// Z)`, and the linear relation `nabla_X omega_A (Y, Z) = nabla_X omega_B
/// (CY, Z) - nabla_X omega_C (Y, BZ)`, i.e. `nabla omega_A = - C_(2) nabla
/// omega_B + B_(3) nabla omega_C`.  Residuals are relative to the triple
/// norm.
pub fn check_relations(frame: &QuatFrame, triple: &TorsionTriple, tol: f64) -> Result<(), CoreError> {
    let d = frame.dim();
    let scale = triple.norm().max(1e-300);
    for &a in &STRUCTURES {
        let t = triple.get(a);
        let mut worst = 0.0f64;
        for x in 0..d {
            for y in 0..d {
                for z in 0..=y {
                    let r = t.data()[(x * d + y) * d + z] + t.data()[(x * d + z) * d + y];
                    worst = worst.max(r.abs());
                }
            }
        }
        if worst > tol * scale {
            return Err(CoreError::Inadmissible {
                which: "derivative not skew in last two slots",
                residual: worst / scale,
                tol,
            });
        }
        // A_(2) A_(3) t (X,Y,Z) = t(X, AY, AZ); require it equal -t
        let typed = slot_act(frame, a, 2, &slot_act(frame, a, 3, t).expect("slot"))
            .expect("slot")
            .add(t);
        if typed.max_abs() > tol * scale {
            return Err(CoreError::Inadmissible {
                which: "derivative has a type-(1,1) component for its own structure",
                residual: typed.max_abs() / scale,
                tol,
            });
        }
    }
    for &a in &STRUCTURES {
        let (b, c) = cyclic(a);
        let mut rhs = slot_act(frame, c, 2, triple.get(b)).expect("slot").scale(-1.0);
        rhs.axpy(1.0, &slot_act(frame, b, 3, triple.get(c)).expect("slot"));
        let res = rhs.sub(triple.get(a)).max_abs();
        if res > tol * scale {
            return Err(CoreError::Inadmissible {
                which: "cyclic linear relation between the three derivatives fails",
                residual: res / scale,
                tol,
            });
        }
    }
    Ok(())
}
