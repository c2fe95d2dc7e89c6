//! Quadratic-Casimir machinery for the two commuting Lie algebra actions on
//! tensor spaces: the algebra of metric-skew matrices commuting with all
//! three structures (dimension `n(2n+1)`) and the three-dimensional algebra
//! spanned by the structures themselves.  Eigenspaces of the Casimir on an
//! invariant subspace are the isotypic components; they serve as the
//! independent oracle for every representation-theoretic split elsewhere in
//! the crate.

use nalgebra::{DMatrix, DVector};

use crate::error::CoreError;
use crate::model::{derivation_act, QuatFrame, Tensor, STRUCTURES};
use crate::torsion::{nullspace, AlphaBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgebraKind {
    /// Skew matrices commuting with `I`, `J`, `K`.
    Commutant,
    /// The span of `I`, `J`, `K`.
    Structures,
}

/// Trace-orthonormal basis of one of the two algebras.
#[derive(Debug, Clone)]
pub struct LieAlgebraBasis {
    kind: AlgebraKind,
    mats: Vec<DMatrix<f64>>,
}

impl LieAlgebraBasis {
    pub fn build(frame: &QuatFrame, kind: AlgebraKind) -> Result<LieAlgebraBasis, CoreError> {
        let d = frame.dim();
        let mats = match kind {
            AlgebraKind::Structures => {
                let s = (d as f64).sqrt();
                STRUCTURES
                    .iter()
                    .map(|&a| frame.structure(a) / s)
                    .collect()
            }
            AlgebraKind::Commutant => {
                // nullspace construction: skew and commuting with I and J
                let entry = |r: usize, c: usize| r * d + c;
                let mut rows: Vec<Vec<f64>> = Vec::new();
                for r in 0..d {
                    for c in 0..=r {
                        let mut row = vec![0.0; d * d];
                        row[entry(r, c)] += 1.0;
                        row[entry(c, r)] += 1.0;
                        rows.push(row);
                    }
                }
                for a in [crate::model::Structure::I, crate::model::Structure::J] {
                    let m = frame.structure(a);
                    for r in 0..d {
                        for c in 0..d {
                            let mut row = vec![0.0; d * d];
                            for k in 0..d {
                                row[entry(r, k)] += m[(k, c)];
                                row[entry(k, c)] -= m[(r, k)];
                            }
                            rows.push(row);
                        }
                    }
                }
                let mut cmat = DMatrix::<f64>::zeros(rows.len(), d * d);
                for (i, row) in rows.iter().enumerate() {
                    for (j, &v) in row.iter().enumerate() {
                        cmat[(i, j)] = v;
                    }
                }
                let vecs = nullspace(&cmat, 1e-10);
                let n = frame.n();
                if vecs.len() != n * (2 * n + 1) {
                    return Err(CoreError::UnexpectedIsotypic(format!(
                        "commutant algebra has dimension {}, expected {}",
                        vecs.len(),
                        n * (2 * n + 1)
                    )));
                }
                vecs.into_iter()
                    .map(|v| DMatrix::from_fn(d, d, |r, c| v[entry(r, c)]))
                    .collect()
            }
        };
        let basis = LieAlgebraBasis { kind, mats };
        basis.check_closure(1e-9)?;
        Ok(basis)
    }

    pub fn kind(&self) -> AlgebraKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn mat(&self, i: usize) -> &DMatrix<f64> {
        &self.mats[i]
    }

    /// Commutators of basis elements must project back onto the span with no
    /// residual.
    fn check_closure(&self, tol: f64) -> Result<(), CoreError> {
        for a in &self.mats {
            for b in &self.mats {
                let comm = a * b - b * a;
                let mut rem = comm.clone();
                for s in &self.mats {
                    let c = rem.dot(s) / s.dot(s);
                    rem -= s * c;
                }
                let res = rem.abs().max();
                if res > tol {
                    return Err(CoreError::SpaceNotInvariant(res));
                }
            }
        }
        Ok(())
    }
}

/// Orthonormal spanning set of a tensor subspace, columns of a
/// `(dim^order) x k` matrix.
#[derive(Debug, Clone)]
pub struct TensorSpan {
    dim: usize,
    order: usize,
    cols: DMatrix<f64>,
}

impl TensorSpan {
    /// Orthonormalize a list of spanning tensors, dropping dependent ones.
    pub fn from_tensors(tensors: &[Tensor]) -> Result<TensorSpan, CoreError> {
        let first = tensors.first().ok_or_else(|| {
            CoreError::InvalidInput("tensor span needs at least one tensor".into())
        })?;
        let (dim, order) = (first.dim(), first.order());
        let mut cols: Vec<DVector<f64>> = Vec::new();
        for t in tensors {
            if t.dim() != dim || t.order() != order {
                return Err(CoreError::InvalidInput(
                    "mixed shapes in tensor span".into(),
                ));
            }
            let mut v = DVector::from_column_slice(t.data());
            let scale = v.norm().max(1e-300);
            for c in &cols {
                let k = v.dot(c);
                v -= c * k;
            }
            if v.norm() > 1e-9 * scale {
                let nv = v.norm();
                cols.push(v / nv);
            }
        }
        let mut m = DMatrix::<f64>::zeros(dim.pow(order as u32), cols.len());
        for (j, c) in cols.iter().enumerate() {
            m.set_column(j, c);
        }
        Ok(TensorSpan {
            dim,
            order,
            cols: m,
        })
    }

    /// The full alpha space as a span.
    pub fn from_alpha_basis(basis: &AlphaBasis) -> TensorSpan {
        let tensors: Vec<Tensor> = (0..basis.total_dim()).map(|i| basis.tensor(i)).collect();
        TensorSpan::from_tensors(&tensors).expect("alpha basis nonempty")
    }

    pub fn len(&self) -> usize {
        self.cols.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.ncols() == 0
    }

    pub fn coords(&self, t: &Tensor, tol: f64) -> Result<DVector<f64>, CoreError> {
        let v = DVector::from_column_slice(t.data());
        let c = self.cols.transpose() * &v;
        let res = (&v - &self.cols * &c).norm();
        let scale = v.norm().max(1e-300);
        if res > tol * scale {
            return Err(CoreError::SpaceNotInvariant(res / scale));
        }
        Ok(c)
    }

    pub fn tensor(&self, c: &DVector<f64>) -> Tensor {
        let v = &self.cols * c;
        Tensor::from_vec(self.dim, self.order, v.iter().copied().collect()).expect("sized")
    }

    pub fn basis_tensor(&self, i: usize) -> Tensor {
        Tensor::from_vec(
            self.dim,
            self.order,
            self.cols.column(i).iter().copied().collect(),
        )
        .expect("sized")
    }
}

/// Matrices of the derivation action of every algebra element on the span;
/// fails if the span is not invariant.
pub fn action_matrices(
    basis: &LieAlgebraBasis,
    span: &TensorSpan,
) -> Result<Vec<DMatrix<f64>>, CoreError> {
    let k = span.len();
    let mut out = Vec::with_capacity(basis.len());
    for s in 0..basis.len() {
        let mut m = DMatrix::<f64>::zeros(k, k);
        for j in 0..k {
            let acted = derivation_act(basis.mat(s), &span.basis_tensor(j));
            let c = span.coords(&acted, 1e-8)?;
            m.set_column(j, &c);
        }
        out.push(m);
    }
    Ok(out)
}

/// Quadratic Casimir `sum_a rho(S_a)^2` on the span, with invariance and
/// commutation checks.
pub fn casimir(basis: &LieAlgebraBasis, span: &TensorSpan) -> Result<DMatrix<f64>, CoreError> {
    let actions = action_matrices(basis, span)?;
    let k = span.len();
    let mut c = DMatrix::<f64>::zeros(k, k);
    for m in &actions {
        c += m * m;
    }
    let sym = (&c - c.transpose()).abs().max();
    if sym > 1e-8 * c.abs().max().max(1e-300) {
        return Err(CoreError::ProjectorFault("casimir not symmetric", sym));
    }
    c = (&c + c.transpose()) * 0.5;
    for m in &actions {
        let comm = (&c * m - m * &c).abs().max();
        if comm > 1e-7 * c.abs().max().max(1e-300) {
            return Err(CoreError::ProjectorFault("casimir does not commute with the action", comm));
        }
    }
    Ok(c)
}

#[derive(Debug, Clone)]
pub struct IsotypicComponent {
    pub eigenvalue: f64,
    pub projector: DMatrix<f64>,
    pub dim: usize,
    pub label: String,
}

#[derive(Debug, Clone)]
pub struct IsotypicDecomposition {
    pub components: Vec<IsotypicComponent>,
}

impl IsotypicDecomposition {
    /// Eigenvalue clustering of a symmetric operator.  Cluster boundaries
    /// are gaps larger than `cluster_tol` relative to the largest eigenvalue
    /// magnitude; smaller nonzero gaps abort.
    pub fn from_casimir(c: &DMatrix<f64>, cluster_tol: f64) -> Result<IsotypicDecomposition, CoreError> {
        let k = c.nrows();
        let eig = c.clone().symmetric_eigen();
        let mut idx: Vec<usize> = (0..k).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        let scale = eig
            .eigenvalues
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()))
            .max(1e-300);
        // the eigensolver can return invalid pairs on larger matrices, so
        // every pair is validated before its use in a projector
        for i in 0..k {
            let v = eig.eigenvectors.column(i);
            let res = (c * v - eig.eigenvalues[i] * v).norm() / scale;
            if res > 1e-10 {
                return Err(CoreError::ProjectorFault(
                    "eigensolver returned an invalid eigenpair",
                    res,
                ));
            }
        }
        let mut components = Vec::new();
        let mut start = 0usize;
        while start < k {
            let mut end = start + 1;
            while end < k {
                let gap = (eig.eigenvalues[idx[end]] - eig.eigenvalues[idx[end - 1]]).abs() / scale;
                if gap > cluster_tol {
                    break;
                }
                end += 1;
            }
            if end < k {
                let gap = (eig.eigenvalues[idx[end]] - eig.eigenvalues[idx[end - 1]]).abs() / scale;
                if gap < 10.0 * cluster_tol {
                    return Err(CoreError::AmbiguousClustering(gap));
                }
            }
            let mut p = DMatrix::<f64>::zeros(k, k);
            let mut mean = 0.0;
            for &i in &idx[start..end] {
                let v = eig.eigenvectors.column(i);
                p += v * v.transpose();
                mean += eig.eigenvalues[i];
            }
            mean /= (end - start) as f64;
            components.push(IsotypicComponent {
                eigenvalue: mean,
                projector: p,
                dim: end - start,
                label: String::new(),
            });
            start = end;
        }
        Ok(IsotypicDecomposition { components })
    }

    pub fn total_dim(&self) -> usize {
        self.components.iter().map(|c| c.dim).sum()
    }

    pub fn by_label(&self, label: &str) -> Option<&IsotypicComponent> {
        self.components.iter().find(|c| c.label == label)
    }
}

/// Expected real dimensions of the three isotypic pieces of the alpha space.
/// The trace piece matches the one-form space; the top exterior piece is
/// absent below `n = 3`.
pub fn alpha_module_dims(n: usize) -> (usize, usize, usize) {
    let e = 4 * n;
    let two_n = 2 * n;
    let lambda3 = if two_n >= 3 {
        2 * (two_n * (two_n - 1) * (two_n - 2) / 6 - two_n)
    } else {
        0
    };
    let total = 4 * n * (2 * n * n - n - 1);
    let k = total - e - lambda3;
    (lambda3, k, e)
}

pub const LABEL_L3E: &str = "Lambda3_0E";
pub const LABEL_K: &str = "K";
pub const LABEL_E: &str = "E";
pub const LABEL_H: &str = "H";
pub const LABEL_S3H: &str = "S3H";

/// Commutant-Casimir decomposition of the alpha space with components
/// labeled by their forced dimensions.
pub fn alpha_isotypic(frame: &QuatFrame, basis: &AlphaBasis) -> Result<IsotypicDecomposition, CoreError> {
    let n = frame.n();
    if n < 2 {
        return Err(CoreError::DimensionTooSmall(n));
    }
    let span = TensorSpan::from_alpha_basis(basis);
    let lie = LieAlgebraBasis::build(frame, AlgebraKind::Commutant)?;
    let cas = casimir(&lie, &span)?;
    let mut dec = IsotypicDecomposition::from_casimir(&cas, 1e-6)?;
    let (d3, dk, de) = alpha_module_dims(n);
    for comp in dec.components.iter_mut() {
        comp.label = if comp.dim == de {
            LABEL_E.to_string()
        } else if comp.dim == dk {
            LABEL_K.to_string()
        } else if comp.dim == d3 {
            LABEL_L3E.to_string()
        } else {
            return Err(CoreError::UnexpectedIsotypic(format!(
                "alpha component of dimension {} matches no module (expected {d3}/{dk}/{de})",
                comp.dim
            )));
        };
    }
    let expect = if d3 == 0 { 2 } else { 3 };
    if dec.components.len() != expect {
        return Err(CoreError::UnexpectedIsotypic(format!(
            "alpha space split into {} components, expected {expect}",
            dec.components.len()
        )));
    }
    Ok(dec)
}

/// Split an admissible alpha into its three isotypic parts (top-exterior,
/// middle, trace); absent parts come back zero.
pub fn alpha_components(
    basis: &AlphaBasis,
    dec: &IsotypicDecomposition,
    alpha: &Tensor,
) -> Result<[Tensor; 3], CoreError> {
    let coords = DVector::from_column_slice(&basis.project_coords(alpha));
    // the span in alpha_isotypic is built from basis tensors in order, so
    // basis coordinates and span coordinates agree
    let mut out: Vec<Tensor> = Vec::with_capacity(3);
    for label in [LABEL_L3E, LABEL_K, LABEL_E] {
        match dec.by_label(label) {
            Some(c) => {
                let part = &c.projector * &coords;
                out.push(basis.assemble(part.as_slice()));
            }
            None => out.push(Tensor::zeros(alpha.dim(), 3)),
        }
    }
    Ok([out.remove(0), out.remove(0), out.remove(0)])
}

/// Structure-algebra Casimir split of a span known to contain only the two
/// outer types (eigenvalue magnitude ratio `5:1`, the `k(k+2)` values for
/// `k = 3` and `k = 1`).  Labels the larger-magnitude component `S3H`.
pub fn sp1_split_h_s3h(
    frame: &QuatFrame,
    span: &TensorSpan,
) -> Result<IsotypicDecomposition, CoreError> {
    let lie = LieAlgebraBasis::build(frame, AlgebraKind::Structures)?;
    let cas = casimir(&lie, span)?;
    let mut dec = IsotypicDecomposition::from_casimir(&cas, 1e-6)?;
    if dec.components.len() != 2 {
        return Err(CoreError::UnexpectedIsotypic(format!(
            "expected exactly two structure-algebra types, found {}",
            dec.components.len()
        )));
    }
    // sort by |eigenvalue|: smaller is H (k=1), larger is S3H (k=3)
    dec.components
        .sort_by(|a, b| a.eigenvalue.abs().partial_cmp(&b.eigenvalue.abs()).unwrap());
    let ratio = dec.components[1].eigenvalue / dec.components[0].eigenvalue;
    if (ratio - 5.0).abs() > 1e-6 {
        return Err(CoreError::UnexpectedIsotypic(format!(
            "eigenvalue ratio {ratio} does not match the expected 5:1 split"
        )));
    }
    dec.components[0].label = LABEL_H.to_string();
    dec.components[1].label = LABEL_S3H.to_string();
    Ok(dec)
}
