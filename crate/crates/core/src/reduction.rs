//! Change of variables that turns general block constraints into a plain
//! sum constraint, and the conformal splitting of feasible directions.
//!
//! With `A_i` of full row rank `m`, every block is written as
//! `x_i = A_i⁺ y_i + Ā_i z_i`, where the columns of `Ā_i` are an orthonormal
//! basis of `ker A_i`. Then `Σ_i A_i x_i = Σ_i y_i`, so the coupled
//! constraint becomes `Σ_i y_i = 0` and `z_i` is free.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{norm_inf, null_basis, pinv, rank, singular_values, PINV_RCOND};
use crate::model::{
    BlockPartition, ConstraintKind, Coords, LinearConstraints, Objective, Problem, SeparableNonsmooth,
    RANK_RCOND,
};

/// `(L_i / σ_min(A_i)², L_i)`: Lipschitz constants of the partial gradients
/// in `y_i` and in `z_i`, with `σ_min` the smallest nonzero singular value.
pub fn transformed_lipschitz(l: f64, a: &DMatrix<f64>) -> (f64, f64) {
    let s = singular_values(a);
    let max = s.first().copied().unwrap_or(0.0);
    let min = s
        .iter()
        .rev()
        .copied()
        .find(|&v| v > PINV_RCOND * max)
        .unwrap_or(0.0);
    if min > 0.0 {
        (l / (min * min), l)
    } else {
        (l, l)
    }
}

/// Coordinates `base[offset..]` of another coordinate source.
struct Shifted<'a, X: ?Sized> {
    base: &'a X,
    offset: usize,
}

impl<X: Coords + ?Sized> Coords for Shifted<'_, X> {
    #[inline]
    fn coord(&self, k: usize) -> f64 {
        self.base.coord(self.offset + k)
    }
}

/// The objective `g(y, z) = f(φ(y, z))` in the transformed variables.
///
/// Block `i` holds `(y_i, z_i)` of length `n_i`. The auxiliary state is
/// `[x ; aux_f]`, the lifted point followed by the auxiliary state of `f`.
#[derive(Clone, Debug)]
pub struct ReducedProblem<O> {
    objective: O,
    rows: usize,
    pinvs: Vec<DMatrix<f64>>,
    nulls: Vec<DMatrix<f64>>,
    partition: BlockPartition,
    lipschitz: Vec<f64>,
    lipschitz_yz: Vec<(f64, f64)>,
}

/// Builds the transformed problem for `f` under `constraints`.
pub fn reduce_problem<O: Objective>(
    objective: O,
    constraints: &LinearConstraints,
) -> Result<ReducedProblem<O>> {
    if objective.partition() != constraints.partition() {
        return Err(Error::Reduction(
            "objective and constraints use different block partitions".into(),
        ));
    }
    let m = constraints.rows();
    let mut pinvs = Vec::with_capacity(constraints.num_blocks());
    let mut nulls = Vec::with_capacity(constraints.num_blocks());
    let mut lipschitz = Vec::with_capacity(constraints.num_blocks());
    let mut lipschitz_yz = Vec::with_capacity(constraints.num_blocks());
    for (i, a) in constraints.blocks().iter().enumerate() {
        let n = a.ncols();
        if m > n {
            return Err(Error::Reduction(format!(
                "A_{i} has {m} rows but only {n} columns; merge blocks so that every block has at least {m} coordinates"
            )));
        }
        let r = rank(a, RANK_RCOND);
        if r < m {
            return Err(Error::Reduction(format!(
                "A_{i} has rank {r} < {m}; the transformed variables need full row rank blocks"
            )));
        }
        let null = null_basis(a, PINV_RCOND);
        if null.ncols() != n - m {
            return Err(Error::Reduction(format!(
                "null space of A_{i} has dimension {}, expected {}",
                null.ncols(),
                n - m
            )));
        }
        pinvs.push(pinv(a, PINV_RCOND));
        nulls.push(null);
        let (ly, lz) = transformed_lipschitz(objective.block_lipschitz()[i], a);
        lipschitz.push(ly.max(lz));
        lipschitz_yz.push((ly, lz));
    }
    Ok(ReducedProblem {
        partition: constraints.partition().clone(),
        objective,
        rows: m,
        pinvs,
        nulls,
        lipschitz,
        lipschitz_yz,
    })
}

impl<O: Objective> ReducedProblem<O> {
    pub fn inner(&self) -> &O {
        &self.objective
    }

    /// `A_i⁺`, of size `n_i × m`.
    pub fn pinv(&self, i: usize) -> &DMatrix<f64> {
        &self.pinvs[i]
    }

    /// `Ā_i`, of size `n_i × (n_i - m)` with orthonormal columns.
    pub fn null_basis(&self, i: usize) -> &DMatrix<f64> {
        &self.nulls[i]
    }

    /// `(L_y, L_z)` for block `i`.
    pub fn lipschitz_yz(&self, i: usize) -> (f64, f64) {
        self.lipschitz_yz[i]
    }

    /// `φ`: maps `(y, z)` blocks to `x`.
    pub fn lift(&self, v: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; v.len()];
        for i in 0..self.partition.num_blocks() {
            let r = self.partition.range(i);
            let xi = self.lift_block(i, &v[r.clone()]);
            x[r].copy_from_slice(xi.as_slice());
        }
        x
    }

    fn lift_block(&self, i: usize, v: &[f64]) -> DVector<f64> {
        let m = self.rows;
        let y = DVector::from_column_slice(&v[..m]);
        let mut x = &self.pinvs[i] * y;
        if v.len() > m {
            x += &self.nulls[i] * DVector::from_column_slice(&v[m..]);
        }
        x
    }

    /// `y_i = A_i x_i`, `z_i = Ā_iᵀ x_i`; the inverse of [`Self::lift`] on feasible blocks.
    pub fn project(&self, constraints: &LinearConstraints, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; x.len()];
        let m = self.rows;
        for i in 0..self.partition.num_blocks() {
            let r = self.partition.range(i);
            let xi = DVector::from_column_slice(&x[r.clone()]);
            let y = constraints.block(i) * &xi;
            let z = self.nulls[i].tr_mul(&xi);
            let out = &mut v[r];
            out[..m].copy_from_slice(y.as_slice());
            out[m..].copy_from_slice(z.as_slice());
        }
        v
    }

    /// The transformed constraint `Σ_i y_i = 0`, written as `A'_i = [I_m 0]`.
    pub fn constraints(&self) -> Result<LinearConstraints> {
        let m = self.rows;
        let blocks = self
            .partition
            .sizes()
            .iter()
            .map(|&n| {
                let mut a = DMatrix::zeros(m, n);
                a.view_mut((0, 0), (m, m)).fill_with_identity();
                a
            })
            .collect();
        LinearConstraints::general(blocks)
    }

    /// The transformed smooth problem started from `project(x0)`.
    pub fn into_problem(self, constraints: &LinearConstraints, x0: &[f64]) -> Result<Problem<Self>> {
        let v0 = self.project(constraints, x0);
        let reduced = self.constraints()?;
        let b = self.partition.num_blocks();
        Problem::new(self, reduced, SeparableNonsmooth::zero(b), v0)
    }

    fn x_len(&self) -> usize {
        self.partition.dim()
    }
}

impl<O: Objective> Objective for ReducedProblem<O> {
    fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    fn block_lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    fn value(&self, v: &[f64]) -> f64 {
        self.objective.value(&self.lift(v))
    }

    fn partial_grad<X: Coords + ?Sized>(&self, i: usize, _v: &X, aux: &X, out: &mut [f64]) {
        let x = Shifted { base: aux, offset: 0 };
        let inner_aux = Shifted {
            base: aux,
            offset: self.x_len(),
        };
        let mut g = vec![0.0; out.len()];
        self.objective.partial_grad(i, &x, &inner_aux, &mut g);
        let g = DVector::from_vec(g);
        let m = self.rows;
        let gy = self.pinvs[i].tr_mul(&g);
        out[..m].copy_from_slice(gy.as_slice());
        if out.len() > m {
            let gz = self.nulls[i].tr_mul(&g);
            out[m..].copy_from_slice(gz.as_slice());
        }
    }

    fn aux_len(&self) -> usize {
        self.x_len() + self.objective.aux_len()
    }

    fn build_aux(&self, v: &[f64]) -> Vec<f64> {
        let mut x = self.lift(v);
        let inner = self.objective.build_aux(&x);
        x.extend(inner);
        x
    }

    fn aux_increment(&self, i: usize, d_i: &[f64], apply: &mut dyn FnMut(usize, f64)) {
        let dx = self.lift_block(i, d_i);
        let offset = self.partition.offset(i);
        for (k, &v) in dx.iter().enumerate() {
            apply(offset + k, v);
        }
        let n = self.x_len();
        self.objective
            .aux_increment(i, dx.as_slice(), &mut |c, v| apply(n + c, v));
    }

    fn value_with_aux(&self, _v: &[f64], aux: &[f64]) -> f64 {
        let (x, inner) = aux.split_at(self.x_len());
        if self.objective.aux_len() > 0 {
            self.objective.value_with_aux(x, inner)
        } else {
            self.objective.value(x)
        }
    }

    fn pair_delta(
        &self,
        i: usize,
        j: usize,
        _v: &[f64],
        aux: &[f64],
        d_i: &[f64],
        d_j: &[f64],
    ) -> Option<f64> {
        let (x, inner) = aux.split_at(self.x_len());
        let dx_i = self.lift_block(i, d_i);
        let dx_j = self.lift_block(j, d_j);
        self.objective
            .pair_delta(i, j, x, inner, dx_i.as_slice(), dx_j.as_slice())
    }
}

/// One piece of a conformal splitting: a vector supported on blocks `i < j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConformalPiece {
    pub i: usize,
    pub j: usize,
    /// Full-length vector, zero outside blocks `i` and `j`.
    pub d: Vec<f64>,
}

/// Splits a feasible direction of a sum constraint into pair-supported pieces
/// that are sign-conformal with `d` and each satisfy the constraint.
///
/// Each constraint row is handled greedily: the entry of smallest magnitude is
/// cancelled against the largest entry of opposite sign. Pieces that share a
/// block pair are merged.
pub fn conformal_decompose(d: &[f64], constraints: &LinearConstraints) -> Result<Vec<ConformalPiece>> {
    let coeffs = match (constraints.kind(), constraints.coefficients()) {
        (ConstraintKind::Sum | ConstraintKind::SingleRow, Some(c)) => c,
        _ => {
            return Err(Error::Config(
                "conformal decomposition needs a sum constraint".into(),
            ))
        }
    };
    if coeffs.iter().any(|&c| c == 0.0) {
        return Err(Error::Config(
            "conformal decomposition needs nonzero sum coefficients".into(),
        ));
    }
    let p = constraints.partition();
    p.check_len(d.len())?;
    let tol = 1e-10 * (1.0 + norm_inf(d));
    let residual = constraints.apply(d)?.amax();
    if residual > tol {
        return Err(Error::Feasibility(format!(
            "direction violates the constraint by {residual:e}"
        )));
    }

    let b = p.num_blocks();
    let rows = constraints.rows();
    let mut merged: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    let mut r = vec![0.0; b];
    for row in 0..rows {
        for (i, ri) in r.iter_mut().enumerate() {
            *ri = coeffs[i] * d[p.offset(i) + row];
        }
        loop {
            let Some(a) = (0..b)
                .filter(|&i| r[i] != 0.0)
                .min_by(|&x, &y| r[x].abs().total_cmp(&r[y].abs()))
            else {
                break;
            };
            let partner = (0..b)
                .filter(|&i| r[i] * r[a] < 0.0)
                .max_by(|&x, &y| r[x].abs().total_cmp(&r[y].abs()));
            let Some(c) = partner else {
                if r.iter().all(|v| v.abs() <= tol) {
                    break;
                }
                return Err(Error::Internal(format!(
                    "row {row} left an unbalanced residual {}",
                    r[a]
                )));
            };
            let v = r[a];
            r[a] = 0.0;
            r[c] += v;
            if r[c] * v > 0.0 {
                // round-off pushed the partner across zero
                r[c] = 0.0;
            }
            let key = (a.min(c), a.max(c));
            let piece = merged.entry(key).or_insert_with(|| vec![0.0; d.len()]);
            piece[p.offset(a) + row] += v / coeffs[a];
            piece[p.offset(c) + row] -= v / coeffs[c];
        }
    }
    Ok(merged
        .into_iter()
        .map(|((i, j), d)| ConformalPiece { i, j, d })
        .collect())
}
