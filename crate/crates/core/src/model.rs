//! Problem representation: variable blocks, coupled linear constraints,
//! smooth objective oracles and separable nonsmooth terms.
//!
//! The problems solved by this crate have the form
//!
//! ```text
//! minimize f(x) + h(x)   subject to   A x = Σ_i A_i x_i = 0
//! ```
//!
//! where `x = (x_1, ..., x_b)` is split into `b` contiguous blocks, `f` has
//! block-Lipschitz partial gradients and `h` is a sum of per-block terms.

use std::fmt;
use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, norm_inf};

/// Splitting of the flat `n`-vector into `b >= 2` contiguous blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockPartition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config(format!(
                "a partition needs at least two blocks, got {}",
                sizes.len()
            )));
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Config(format!("block {i} has size zero")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &s in &sizes {
            acc += s;
            offsets.push(acc);
        }
        Ok(BlockPartition { sizes, offsets })
    }

    /// `b` blocks of equal size.
    pub fn uniform(b: usize, size: usize) -> Result<Self> {
        Self::new(vec![size; b])
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    /// Total dimension `n`.
    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn max_block_size(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    pub(crate) fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.num_blocks() {
            Err(Error::Index {
                index: i,
                len: self.num_blocks(),
            })
        } else {
            Ok(())
        }
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            Err(Error::Dimension(format!(
                "vector has length {len}, partition has dimension {}",
                self.dim()
            )))
        } else {
            Ok(())
        }
    }
}

/// The `i`-th block of `x`.
pub fn block_slice<'a>(x: &'a [f64], i: usize, partition: &BlockPartition) -> Result<&'a [f64]> {
    partition.check_len(x.len())?;
    partition.check_index(i)?;
    Ok(&x[partition.range(i)])
}

/// Mutable view of the `i`-th block of `x`; writes go straight into `x`.
pub fn block_slice_mut<'a>(
    x: &'a mut [f64],
    i: usize,
    partition: &BlockPartition,
) -> Result<&'a mut [f64]> {
    partition.check_len(x.len())?;
    partition.check_index(i)?;
    Ok(&mut x[partition.range(i)])
}

/// Structural tag of a constraint matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    /// Arbitrary dense `A_i`, each with full row rank.
    General,
    /// `A_i = c_i I` with `n_i = m`.
    Sum,
    /// One constraint row, scalar blocks: `Σ_i c_i x_i = 0`.
    SingleRow,
}

/// `Ax = Σ_i A_i x_i = 0`, stored as one dense `m × n_i` matrix per block.
#[derive(Clone, Debug)]
pub struct LinearConstraints {
    rows: usize,
    blocks: Vec<DMatrix<f64>>,
    kind: ConstraintKind,
    partition: BlockPartition,
    coefficients: Option<Vec<f64>>,
}

/// Full-row-rank test: `σ_min > RANK_RCOND · σ_max`.
pub const RANK_RCOND: f64 = 1e-10;

impl LinearConstraints {
    /// General constraints. Every `A_i` must have `m` rows and full row rank.
    pub fn general(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let rows = blocks.first().map(|a| a.nrows()).unwrap_or(0);
        if rows == 0 {
            return Err(Error::Config("constraints need at least one row".into()));
        }
        for (i, a) in blocks.iter().enumerate() {
            if a.nrows() != rows {
                return Err(Error::Dimension(format!(
                    "block {i} has {} rows, expected {rows}",
                    a.nrows()
                )));
            }
            if linalg::rank(a, RANK_RCOND) < rows {
                return Err(Error::Config(format!(
                    "A_{i} ({}x{}) does not have full row rank",
                    a.nrows(),
                    a.ncols()
                )));
            }
        }
        let partition = BlockPartition::new(blocks.iter().map(|a| a.ncols()).collect())?;
        Ok(LinearConstraints {
            rows,
            blocks,
            kind: ConstraintKind::General,
            partition,
            coefficients: None,
        })
    }

    /// Weighted sum constraint `Σ_i c_i x_i = 0` over blocks of size `dim`.
    pub fn sum(coefficients: Vec<f64>, dim: usize) -> Result<Self> {
        let partition = BlockPartition::uniform(coefficients.len(), dim)?;
        for (i, &c) in coefficients.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::Config(format!("coefficient {i} is not finite")));
            }
            if c == 0.0 {
                warn!("sum constraint coefficient c_{i} is zero; A_{i} is rank deficient");
            }
        }
        let blocks = coefficients
            .iter()
            .map(|&c| DMatrix::identity(dim, dim) * c)
            .collect();
        Ok(LinearConstraints {
            rows: dim,
            blocks,
            kind: ConstraintKind::Sum,
            partition,
            coefficients: Some(coefficients),
        })
    }

    /// `Σ_i x_i = 0` with `A_i = I`.
    pub fn zero_sum(b: usize, dim: usize) -> Result<Self> {
        Self::sum(vec![1.0; b], dim)
    }

    /// A single equality row over scalar blocks, e.g. `Σ_i y_i α_i = 0`.
    pub fn single_row(coefficients: Vec<f64>) -> Result<Self> {
        let mut c = Self::sum(coefficients, 1)?;
        c.kind = ConstraintKind::SingleRow;
        Ok(c)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn kind(&self) -> ConstraintKind {
        self.kind
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, i: usize) -> &DMatrix<f64> {
        &self.blocks[i]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// Scalar coefficient `c_i` for `Sum` / `SingleRow` constraints.
    pub fn coefficient(&self, i: usize) -> Option<f64> {
        self.coefficients.as_ref().map(|c| c[i])
    }

    pub fn coefficients(&self) -> Option<&[f64]> {
        self.coefficients.as_deref()
    }

    /// True when every block is the identity (`Σ_i x_i = 0`).
    pub fn is_identity_sum(&self) -> bool {
        self.kind == ConstraintKind::Sum
            && self.coefficients().is_some_and(|c| c.iter().all(|&v| v == 1.0))
    }

    /// `Σ_i A_i x_i` as an `m`-vector.
    pub fn apply(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.partition.check_len(x.len())?;
        let mut out = DVector::zeros(self.rows);
        match &self.coefficients {
            Some(c) => {
                for (i, &ci) in c.iter().enumerate() {
                    for (r, v) in x[self.partition.range(i)].iter().enumerate() {
                        out[r] += ci * v;
                    }
                }
            }
            None => {
                for (i, a) in self.blocks.iter().enumerate() {
                    let xi = DVector::from_column_slice(&x[self.partition.range(i)]);
                    out += a * xi;
                }
            }
        }
        Ok(out)
    }

    /// The concatenated `m × n` matrix.
    pub fn dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.rows, self.partition.dim());
        for (i, ai) in self.blocks.iter().enumerate() {
            a.view_mut((0, self.partition.offset(i)), ai.shape())
                .copy_from(ai);
        }
        a
    }
}

/// `‖Ax‖∞` computed from the per-block products.
pub fn feasibility_residual(constraints: &LinearConstraints, x: &[f64]) -> Result<f64> {
    Ok(constraints.apply(x)?.amax())
}

/// Tolerance used for feasibility checks of iterates: `1e-8 (1 + ‖x‖∞)`.
pub fn feasibility_tolerance(x: &[f64]) -> f64 {
    1e-8 * (1.0 + norm_inf(x))
}

/// Read access to coordinates of an iterate.
///
/// Sequential engines use plain slices; the asynchronous engine reads through
/// atomics. Objectives are written against this trait so one gradient routine
/// serves both.
pub trait Coords {
    fn coord(&self, k: usize) -> f64;
}

impl Coords for [f64] {
    #[inline]
    fn coord(&self, k: usize) -> f64 {
        self[k]
    }
}

impl Coords for Vec<f64> {
    #[inline]
    fn coord(&self, k: usize) -> f64 {
        self[k]
    }
}

/// Smooth part `f` of the objective.
///
/// Some objectives keep an auxiliary state vector next to `x` (for example the
/// primal weights of a linear SVM dual). Engines own that vector, seed it with
/// [`Objective::build_aux`] and keep it in sync through
/// [`Objective::aux_increment`].
pub trait Objective: Send + Sync {
    fn partition(&self) -> &BlockPartition;

    /// Block Lipschitz constants `L_i` of the partial gradients.
    fn block_lipschitz(&self) -> &[f64];

    /// `f(x)` evaluated from scratch.
    fn value(&self, x: &[f64]) -> f64;

    /// `∇_i f(x)` written to `out` (length `n_i`).
    fn partial_grad<X: Coords + ?Sized>(&self, i: usize, x: &X, aux: &X, out: &mut [f64]);

    /// Number `N` of components when `f = (1/N) Σ_l f_l`.
    fn component_count(&self) -> usize {
        1
    }

    fn component_value(&self, _l: usize, x: &[f64]) -> f64 {
        self.value(x)
    }

    fn component_partial_grad<X: Coords + ?Sized>(
        &self,
        _l: usize,
        i: usize,
        x: &X,
        aux: &X,
        out: &mut [f64],
    ) {
        self.partial_grad(i, x, aux, out)
    }

    /// Known bound `M ≥ ‖∇f_l‖`, if any.
    fn grad_bound(&self) -> Option<f64> {
        None
    }

    fn aux_len(&self) -> usize {
        0
    }

    fn build_aux(&self, _x: &[f64]) -> Vec<f64> {
        Vec::new()
    }

    /// Reports the auxiliary-state change caused by moving block `i` by `d_i`.
    fn aux_increment(&self, _i: usize, _d_i: &[f64], _apply: &mut dyn FnMut(usize, f64)) {}

    /// `f(x)` using a consistent auxiliary state; defaults to [`Objective::value`].
    fn value_with_aux(&self, x: &[f64], _aux: &[f64]) -> f64 {
        self.value(x)
    }

    /// `f(x + U_ij d) - f(x)` when it can be computed cheaply.
    fn pair_delta(
        &self,
        _i: usize,
        _j: usize,
        _x: &[f64],
        _aux: &[f64],
        _d_i: &[f64],
        _d_j: &[f64],
    ) -> Option<f64> {
        None
    }
}

/// The full gradient, block by block.
pub fn full_gradient<O: Objective>(obj: &O, x: &[f64]) -> Vec<f64> {
    let p = obj.partition();
    let aux = obj.build_aux(x);
    let mut g = vec![0.0; p.dim()];
    for i in 0..p.num_blocks() {
        obj.partial_grad(i, x, aux.as_slice(), &mut g[p.range(i)]);
    }
    g
}

/// A convex scalar function applied to every coordinate of a block.
///
/// Implementations expose the value, the domain and the subdifferential
/// `[left, right]` at a point in the domain; the pairwise prox solver only
/// needs these three.
pub trait ScalarTerm: Send + Sync + fmt::Debug {
    fn value(&self, u: f64) -> f64;
    fn subdifferential(&self, u: f64) -> (f64, f64);
    fn domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
}

/// `weight · |u|`.
#[derive(Clone, Copy, Debug)]
pub struct AbsValue {
    pub weight: f64,
}

impl ScalarTerm for AbsValue {
    fn value(&self, u: f64) -> f64 {
        self.weight * u.abs()
    }

    fn subdifferential(&self, u: f64) -> (f64, f64) {
        if u > 0.0 {
            (self.weight, self.weight)
        } else if u < 0.0 {
            (-self.weight, -self.weight)
        } else {
            (-self.weight, self.weight)
        }
    }
}

/// The per-coordinate term `h_i` of one block.
#[derive(Clone, Debug, Default)]
pub enum BlockTerm {
    #[default]
    Zero,
    /// Indicator of `[lo, hi]`.
    Box { lo: f64, hi: f64 },
    Custom(Arc<dyn ScalarTerm>),
}

impl BlockTerm {
    pub fn value(&self, u: f64) -> f64 {
        match self {
            BlockTerm::Zero => 0.0,
            BlockTerm::Box { lo, hi } => {
                if u >= *lo && u <= *hi {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            BlockTerm::Custom(t) => t.value(u),
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        match self {
            BlockTerm::Zero => (f64::NEG_INFINITY, f64::INFINITY),
            BlockTerm::Box { lo, hi } => (*lo, *hi),
            BlockTerm::Custom(t) => t.domain(),
        }
    }

    pub fn subdifferential(&self, u: f64) -> (f64, f64) {
        match self {
            BlockTerm::Zero => (0.0, 0.0),
            BlockTerm::Box { lo, hi } => {
                let left = if u <= *lo { f64::NEG_INFINITY } else { 0.0 };
                let right = if u >= *hi { f64::INFINITY } else { 0.0 };
                (left, right)
            }
            BlockTerm::Custom(t) => t.subdifferential(u),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, BlockTerm::Zero)
    }
}

/// `h(x) = Σ_i h_i(x_i)`, each `h_i` acting coordinatewise.
#[derive(Clone, Debug)]
pub struct SeparableNonsmooth {
    terms: Vec<BlockTerm>,
}

impl SeparableNonsmooth {
    pub fn zero(b: usize) -> Self {
        SeparableNonsmooth {
            terms: vec![BlockTerm::Zero; b],
        }
    }

    pub fn uniform(b: usize, term: BlockTerm) -> Self {
        SeparableNonsmooth {
            terms: vec![term; b],
        }
    }

    pub fn per_block(terms: Vec<BlockTerm>) -> Self {
        SeparableNonsmooth { terms }
    }

    pub fn num_blocks(&self) -> usize {
        self.terms.len()
    }

    pub fn term(&self, i: usize) -> &BlockTerm {
        &self.terms[i]
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(BlockTerm::is_zero)
    }

    pub fn block_value(&self, i: usize, x_i: &[f64]) -> f64 {
        let t = &self.terms[i];
        if t.is_zero() {
            return 0.0;
        }
        x_i.iter().map(|&u| t.value(u)).sum()
    }

    pub fn value(&self, x: &[f64], partition: &BlockPartition) -> f64 {
        (0..self.terms.len())
            .map(|i| self.block_value(i, &x[partition.range(i)]))
            .sum()
    }
}

/// An iterate together with its cached objective and feasibility residual.
#[derive(Clone, Debug)]
pub struct Iterate {
    pub x: Vec<f64>,
    pub objective: f64,
    pub feasibility: f64,
}

impl Iterate {
    pub fn evaluate<O: Objective>(problem: &Problem<O>, x: Vec<f64>) -> Result<Self> {
        let feasibility = feasibility_residual(&problem.constraints, &x)?;
        let objective = problem.composite_value(&x);
        Ok(Iterate {
            x,
            objective,
            feasibility,
        })
    }
}

/// Everything an engine needs: `f`, `A`, `h` and a feasible start.
#[derive(Clone, Debug)]
pub struct Problem<O> {
    pub objective: O,
    pub constraints: LinearConstraints,
    pub nonsmooth: SeparableNonsmooth,
    pub x0: Vec<f64>,
}

impl<O: Objective> Problem<O> {
    pub fn new(
        objective: O,
        constraints: LinearConstraints,
        nonsmooth: SeparableNonsmooth,
        x0: Vec<f64>,
    ) -> Result<Self> {
        if objective.partition() != constraints.partition() {
            return Err(Error::Dimension(
                "objective and constraints use different block partitions".into(),
            ));
        }
        if nonsmooth.num_blocks() != constraints.num_blocks() {
            return Err(Error::Dimension(format!(
                "nonsmooth term has {} blocks, constraints have {}",
                nonsmooth.num_blocks(),
                constraints.num_blocks()
            )));
        }
        if objective.block_lipschitz().iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Config("block Lipschitz constants must be positive".into()));
        }
        constraints.partition().check_len(x0.len())?;
        Ok(Problem {
            objective,
            constraints,
            nonsmooth,
            x0,
        })
    }

    pub fn partition(&self) -> &BlockPartition {
        self.constraints.partition()
    }

    /// `F(x) = f(x) + h(x)`.
    pub fn composite_value(&self, x: &[f64]) -> f64 {
        let f = self.objective.value(x);
        if self.nonsmooth.is_zero() {
            f
        } else {
            f + self.nonsmooth.value(x, self.partition())
        }
    }
}
