//! Decision variables, affine matrix expressions and the problem container.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::LmiError;

/// Default margin used to encode a strict inequality `M ≻ 0` as `M ⪰ ε·I`.
pub const DEFAULT_STRICT_MARGIN: f64 = 1e-6;

/// Sign restriction on a scalar variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Free,
    Nonneg,
    /// Encoded as `v ≥ ε_strict`.
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VarKind {
    Scalar(Sign),
    Symmetric { size: usize, positive_definite: bool },
    Matrix { rows: usize, cols: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

/// Handle to a declared variable. Cheap to clone; only meaningful for the
/// problem that created it.
#[derive(Debug, Clone, PartialEq)]
pub struct Var {
    id: VarId,
    offset: usize,
    shape: Shape,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Scalar,
    Symmetric(usize),
    Matrix(usize, usize),
}

impl Var {
    pub fn id(&self) -> VarId {
        self.id
    }

    pub fn rows(&self) -> usize {
        match self.shape {
            Shape::Scalar => 1,
            Shape::Symmetric(n) => n,
            Shape::Matrix(r, _) => r,
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape {
            Shape::Scalar => 1,
            Shape::Symmetric(n) => n,
            Shape::Matrix(_, c) => c,
        }
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self.shape, Shape::Scalar)
    }

    /// Number of scalar unknowns carried by this variable.
    pub fn len(&self) -> usize {
        match self.shape {
            Shape::Scalar => 1,
            Shape::Symmetric(n) => n * (n + 1) / 2,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Global index range of the scalar unknowns.
    pub fn entries(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// `(row, col)` position of local entry `k`. Symmetric variables store the
    /// upper triangle row by row; the entry also acts on `(col, row)`.
    fn position(&self, k: usize) -> (usize, usize) {
        match self.shape {
            Shape::Scalar => (0, 0),
            Shape::Symmetric(n) => {
                let mut k = k;
                for i in 0..n {
                    let row_len = n - i;
                    if k < row_len {
                        return (i, i + k);
                    }
                    k -= row_len;
                }
                unreachable!("entry index out of range")
            }
            Shape::Matrix(_, c) => (k / c, k % c),
        }
    }

    fn is_symmetric(&self) -> bool {
        matches!(self.shape, Shape::Symmetric(_))
    }

    fn assemble(&self, values: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows(), self.cols());
        for k in 0..self.len() {
            let (i, j) = self.position(k);
            let v = values[self.offset + k];
            out[(i, j)] = v;
            if self.is_symmetric() {
                out[(j, i)] = v;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarInfo {
    pub name: String,
    pub kind: VarKind,
    pub offset: usize,
    pub len: usize,
}

/// A symmetric matrix that depends affinely on the scalar unknowns:
/// `constant + Σ_k y_k · coefficient_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrixExpr {
    size: usize,
    constant: DMatrix<f64>,
    terms: BTreeMap<usize, DMatrix<f64>>,
}

impl AffineMatrixExpr {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            constant: DMatrix::zeros(size, size),
            terms: BTreeMap::new(),
        }
    }

    /// `constant` must be symmetric; it is symmetrized on entry.
    pub fn from_constant(constant: DMatrix<f64>) -> Self {
        assert!(constant.is_square(), "constant term must be square");
        let size = constant.nrows();
        let mut e = Self::zeros(size);
        e.add_constant(0, 0, &constant);
        e
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn constant(&self) -> &DMatrix<f64> {
        &self.constant
    }

    /// Coefficient matrices keyed by global unknown index.
    pub fn terms(&self) -> &BTreeMap<usize, DMatrix<f64>> {
        &self.terms
    }

    /// Places `block` with its top-left corner at `(row, col)`. Off-diagonal
    /// placements are mirrored to `(col, row)`; diagonal placements are
    /// symmetrized as `(B + Bᵀ)/2`.
    pub fn add_constant(&mut self, row: usize, col: usize, block: &DMatrix<f64>) {
        place(&mut self.constant, row, col, block);
    }

    /// Adds `scale · left · V · right` at `(row, col)`, where `V` is the value
    /// of `var`. `None` stands for an identity of the matching size.
    pub fn add_var(
        &mut self,
        row: usize,
        col: usize,
        left: Option<&DMatrix<f64>>,
        var: &Var,
        right: Option<&DMatrix<f64>>,
        scale: f64,
    ) {
        let out_rows = left.map_or(var.rows(), |l| {
            assert_eq!(l.ncols(), var.rows(), "left factor does not match variable rows");
            l.nrows()
        });
        let out_cols = right.map_or(var.cols(), |r| {
            assert_eq!(r.nrows(), var.cols(), "right factor does not match variable cols");
            r.ncols()
        });
        for k in 0..var.len() {
            let (i, j) = var.position(k);
            let mut block = DMatrix::zeros(out_rows, out_cols);
            outer_acc(&mut block, left, i, right, j, scale);
            if var.is_symmetric() && i != j {
                outer_acc(&mut block, left, j, right, i, scale);
            }
            let coeff = self
                .terms
                .entry(var.offset + k)
                .or_insert_with(|| DMatrix::zeros(self.size, self.size));
            place(coeff, row, col, &block);
        }
    }

    /// Adds `v · block` at `(row, col)` for a scalar variable `v`.
    pub fn add_scaled(&mut self, row: usize, col: usize, var: &Var, block: &DMatrix<f64>) {
        assert!(var.is_scalar(), "add_scaled expects a scalar variable");
        let coeff = self
            .terms
            .entry(var.offset)
            .or_insert_with(|| DMatrix::zeros(self.size, self.size));
        place(coeff, row, col, block);
    }

    pub fn value(&self, values: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (&k, coeff) in &self.terms {
            let v = values[k];
            if v != 0.0 {
                out += coeff * v;
            }
        }
        out
    }

    pub fn max_index(&self) -> Option<usize> {
        self.terms.keys().next_back().copied()
    }
}

fn outer_acc(
    block: &mut DMatrix<f64>,
    left: Option<&DMatrix<f64>>,
    i: usize,
    right: Option<&DMatrix<f64>>,
    j: usize,
    scale: f64,
) {
    // left·e_i e_jᵀ·right = left[:, i] · right[j, :]
    match (left, right) {
        (None, None) => block[(i, j)] += scale,
        (Some(l), None) => {
            for r in 0..block.nrows() {
                block[(r, j)] += scale * l[(r, i)];
            }
        }
        (None, Some(rt)) => {
            for c in 0..block.ncols() {
                block[(i, c)] += scale * rt[(j, c)];
            }
        }
        (Some(l), Some(rt)) => {
            for r in 0..block.nrows() {
                let lv = l[(r, i)];
                if lv == 0.0 {
                    continue;
                }
                for c in 0..block.ncols() {
                    block[(r, c)] += scale * lv * rt[(j, c)];
                }
            }
        }
    }
}

fn place(target: &mut DMatrix<f64>, row: usize, col: usize, block: &DMatrix<f64>) {
    let (br, bc) = block.shape();
    assert!(
        row + br <= target.nrows() && col + bc <= target.ncols(),
        "block placement out of bounds"
    );
    if row == col {
        assert_eq!(br, bc, "diagonal placement must be square");
        for i in 0..br {
            for j in 0..bc {
                target[(row + i, col + j)] += 0.5 * (block[(i, j)] + block[(j, i)]);
            }
        }
    } else {
        assert!(
            row + br <= col || col + bc <= row,
            "off-diagonal placement overlaps the diagonal"
        );
        for i in 0..br {
            for j in 0..bc {
                target[(row + i, col + j)] += block[(i, j)];
                target[(col + j, row + i)] += block[(i, j)];
            }
        }
    }
}

/// One constraint `expr ⪰ margin·I`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub expr: AffineMatrixExpr,
    pub strict: bool,
    pub margin: f64,
}

/// A set of declared variables and affine matrix inequalities.
#[derive(Debug, Clone)]
pub struct LmiProblem {
    vars: Vec<(VarInfo, Var)>,
    n_unknowns: usize,
    constraints: Vec<Constraint>,
    strict_margin: f64,
}

impl Default for LmiProblem {
    fn default() -> Self {
        Self::new()
    }
}

impl LmiProblem {
    pub fn new() -> Self {
        Self {
            vars: Vec::new(),
            n_unknowns: 0,
            constraints: Vec::new(),
            strict_margin: DEFAULT_STRICT_MARGIN,
        }
    }

    pub fn with_strict_margin(mut self, eps: f64) -> Self {
        assert!(eps > 0.0 && eps.is_finite());
        self.strict_margin = eps;
        self
    }

    pub fn strict_margin(&self) -> f64 {
        self.strict_margin
    }

    pub fn n_unknowns(&self) -> usize {
        self.n_unknowns
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn variables(&self) -> impl Iterator<Item = (&VarInfo, &Var)> {
        self.vars.iter().map(|(i, v)| (i, v))
    }

    fn declare(&mut self, name: &str, kind: VarKind, shape: Shape) -> Var {
        let var = Var {
            id: VarId(self.vars.len()),
            offset: self.n_unknowns,
            shape,
        };
        let info = VarInfo {
            name: name.to_string(),
            kind,
            offset: var.offset,
            len: var.len(),
        };
        self.n_unknowns += var.len();
        self.vars.push((info, var.clone()));
        var
    }

    pub fn scalar(&mut self, name: &str, sign: Sign) -> Var {
        let v = self.declare(name, VarKind::Scalar(sign), Shape::Scalar);
        let mut e = AffineMatrixExpr::zeros(1);
        e.add_var(0, 0, None, &v, None, 1.0);
        match sign {
            Sign::Free => {}
            Sign::Nonneg => self.constrain(&format!("{name} >= 0"), e),
            Sign::Positive => self.constrain_strict(&format!("{name} > 0"), e),
        }
        v
    }

    pub fn symmetric(&mut self, name: &str, size: usize, positive_definite: bool) -> Var {
        let v = self.declare(
            name,
            VarKind::Symmetric {
                size,
                positive_definite,
            },
            Shape::Symmetric(size),
        );
        if positive_definite && size > 0 {
            let mut e = AffineMatrixExpr::zeros(size);
            e.add_var(0, 0, None, &v, None, 1.0);
            self.constrain_strict(&format!("{name} > 0"), e);
        }
        v
    }

    pub fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> Var {
        self.declare(name, VarKind::Matrix { rows, cols }, Shape::Matrix(rows, cols))
    }

    /// Adds `expr ⪰ 0`.
    pub fn constrain(&mut self, name: &str, expr: AffineMatrixExpr) {
        self.constraints.push(Constraint {
            name: name.to_string(),
            expr,
            strict: false,
            margin: 0.0,
        });
    }

    /// Adds `expr ≻ 0`, encoded as `expr ⪰ ε·(1 + ‖constant‖)·I`.
    pub fn constrain_strict(&mut self, name: &str, expr: AffineMatrixExpr) {
        let scale = 1.0 + spectral_norm_sym(expr.constant());
        self.constraints.push(Constraint {
            name: name.to_string(),
            expr,
            strict: true,
            margin: self.strict_margin * scale,
        });
    }

    pub(crate) fn validate(&self) -> Result<(), LmiError> {
        for c in &self.constraints {
            if let Some(k) = c.expr.max_index() {
                if k >= self.n_unknowns {
                    return Err(LmiError::UnknownVariable {
                        constraint: c.name.clone(),
                        index: k,
                    });
                }
            }
            let finite = c.expr.constant().iter().all(|v| v.is_finite())
                && c.expr.terms().values().all(|m| m.iter().all(|v| v.is_finite()));
            if !finite {
                return Err(LmiError::NonFinite(c.name.clone()));
            }
            if c.expr.size() == 0 {
                return Err(LmiError::EmptyConstraint(c.name.clone()));
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> ProblemSummary {
        ProblemSummary {
            n_variables: self.vars.len(),
            n_unknowns: self.n_unknowns,
            strict_margin: self.strict_margin,
            variables: self.vars.iter().map(|(i, _)| i.clone()).collect(),
            constraints: self
                .constraints
                .iter()
                .map(|c| ConstraintSummary {
                    name: c.name.clone(),
                    size: c.expr.size(),
                    strict: c.strict,
                    margin: c.margin,
                    n_terms: c.expr.terms().len(),
                    nnz: c.expr.terms().values().map(|m| m.iter().filter(|v| **v != 0.0).count()).sum(),
                })
                .collect(),
        }
    }
}

/// Values of all scalar unknowns of a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    values: Vec<f64>,
}

impl Assignment {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, var: &Var) -> DMatrix<f64> {
        var.assemble(&self.values)
    }

    pub fn scalar(&self, var: &Var) -> f64 {
        assert!(var.is_scalar());
        self.values[var.offset]
    }

    /// Overwrites `var` with `value` (the upper triangle for symmetric vars).
    pub fn set(&mut self, var: &Var, value: &DMatrix<f64>) {
        assert_eq!(value.shape(), (var.rows(), var.cols()));
        for k in 0..var.len() {
            let (i, j) = var.position(k);
            self.values[var.offset + k] = value[(i, j)];
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintSummary {
    pub name: String,
    pub size: usize,
    pub strict: bool,
    pub margin: f64,
    pub n_terms: usize,
    pub nnz: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemSummary {
    pub n_variables: usize,
    pub n_unknowns: usize,
    pub strict_margin: f64,
    pub variables: Vec<VarInfo>,
    pub constraints: Vec<ConstraintSummary>,
}

pub(crate) fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let s = 0.5 * (m + m.transpose());
    s.symmetric_eigenvalues().iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}
