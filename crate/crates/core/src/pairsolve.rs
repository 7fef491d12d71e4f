//! Exact solvers for the two-block subproblem
//!
//! ```text
//! min_{A_i d_i + A_j d_j = 0}  <g_i, d_i> + <g_j, d_j> + (2α)⁻¹(‖d_i‖² + ‖d_j‖²)
//!                              + h_i(x_i + d_i) + h_j(x_j + d_j)
//! ```
//!
//! in the three regimes that admit an exact answer: smooth with general
//! `A_i` (closed form through a Gram pseudo-inverse), a single constraint row
//! with box terms (an SMO-style clipped step), and the zero-sum identity case
//! with arbitrary coordinatewise terms (one-dimensional monotone root finding).

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::CommGraph;
use crate::linalg::{sym_pinv, PINV_RCOND};
use crate::model::{BlockTerm, ConstraintKind, LinearConstraints, SeparableNonsmooth};

/// A feasible pair direction: `A_i d_i + A_j d_j = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairUpdate {
    pub i: usize,
    pub j: usize,
    pub d_i: Vec<f64>,
    pub d_j: Vec<f64>,
    /// Multiplier `λ` of the pair constraint (smooth regime only).
    pub dual: Option<Vec<f64>>,
}

/// `(A_i A_iᵀ + A_j A_jᵀ)⁺` through a symmetric eigendecomposition.
pub fn gram_pinv(a_i: &DMatrix<f64>, a_j: &DMatrix<f64>) -> DMatrix<f64> {
    let g = a_i * a_i.transpose() + a_j * a_j.transpose();
    sym_pinv(&g, PINV_RCOND)
}

/// Gram pseudo-inverses for every edge of a graph, built once up front.
#[derive(Clone, Debug)]
pub struct GramCache {
    entries: Vec<DMatrix<f64>>,
    index: HashMap<(usize, usize), usize>,
}

impl GramCache {
    pub fn build(constraints: &LinearConstraints, graph: &CommGraph) -> Result<Self> {
        if graph.num_nodes() != constraints.num_blocks() {
            return Err(Error::Dimension(format!(
                "graph has {} nodes, constraints have {} blocks",
                graph.num_nodes(),
                constraints.num_blocks()
            )));
        }
        let mut entries = Vec::with_capacity(graph.num_edges());
        let mut index = HashMap::with_capacity(graph.num_edges());
        for (e, &(i, j)) in graph.edges().iter().enumerate() {
            entries.push(gram_pinv(constraints.block(i), constraints.block(j)));
            index.insert((i, j), e);
        }
        Ok(GramCache { entries, index })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn by_edge(&self, e: usize) -> &DMatrix<f64> {
        &self.entries[e]
    }

    /// Entry for the unordered pair `{i, j}`.
    pub fn get(&self, i: usize, j: usize) -> Option<&DMatrix<f64>> {
        self.index
            .get(&(i.min(j), i.max(j)))
            .map(|&e| &self.entries[e])
    }
}

/// Closed-form minimizer of the smooth pair subproblem:
///
/// ```text
/// λ   = α (A_i A_iᵀ + A_j A_jᵀ)⁺ (A_i g_i + A_j g_j)
/// d_i = -α g_i + A_iᵀ λ
/// d_j = -α g_j + A_jᵀ λ
/// ```
///
/// `gram` must be the cached pseudo-inverse for the pair.
pub fn smooth_pair_update(
    g_i: &[f64],
    g_j: &[f64],
    a_i: &DMatrix<f64>,
    a_j: &DMatrix<f64>,
    alpha: f64,
    gram: &DMatrix<f64>,
) -> Result<PairUpdate> {
    let mut d_i = vec![0.0; g_i.len()];
    let mut d_j = vec![0.0; g_j.len()];
    let lambda = smooth_into(g_i, g_j, a_i, a_j, alpha, gram, &mut d_i, &mut d_j)?;
    Ok(PairUpdate {
        i: 0,
        j: 1,
        d_i,
        d_j,
        dual: Some(lambda.as_slice().to_vec()),
    })
}

#[allow(clippy::too_many_arguments)]
fn smooth_into(
    g_i: &[f64],
    g_j: &[f64],
    a_i: &DMatrix<f64>,
    a_j: &DMatrix<f64>,
    alpha: f64,
    gram: &DMatrix<f64>,
    d_i: &mut [f64],
    d_j: &mut [f64],
) -> Result<DVector<f64>> {
    let m = a_i.nrows();
    if a_j.nrows() != m
        || a_i.ncols() != g_i.len()
        || a_j.ncols() != g_j.len()
        || gram.shape() != (m, m)
        || d_i.len() != g_i.len()
        || d_j.len() != g_j.len()
    {
        return Err(Error::Internal(format!(
            "pair dimensions inconsistent: A_i {:?}, A_j {:?}, gram {:?}, |g_i|={}, |g_j|={}",
            a_i.shape(),
            a_j.shape(),
            gram.shape(),
            g_i.len(),
            g_j.len()
        )));
    }
    let gi = DVector::from_column_slice(g_i);
    let gj = DVector::from_column_slice(g_j);
    let rhs = a_i * &gi + a_j * &gj;
    let lambda = gram * rhs * alpha;
    let ti = a_i.tr_mul(&lambda);
    let tj = a_j.tr_mul(&lambda);
    for (k, d) in d_i.iter_mut().enumerate() {
        *d = -alpha * g_i[k] + ti[k];
    }
    for (k, d) in d_j.iter_mut().enumerate() {
        *d = -alpha * g_j[k] + tj[k];
    }
    Ok(lambda)
}

/// Smooth update for `A_i = c_i I`, `A_j = c_j I`; no Gram matrix is formed.
#[allow(clippy::too_many_arguments)]
pub fn scaled_identity_pair_update(
    g_i: &[f64],
    g_j: &[f64],
    c_i: f64,
    c_j: f64,
    alpha: f64,
    d_i: &mut [f64],
    d_j: &mut [f64],
) {
    let s = c_i * c_i + c_j * c_j;
    let inv = if s > 0.0 { 1.0 / s } else { 0.0 };
    for k in 0..g_i.len() {
        let lambda = alpha * (c_i * g_i[k] + c_j * g_j[k]) * inv;
        d_i[k] = -alpha * g_i[k] + c_i * lambda;
        d_j[k] = -alpha * g_j[k] + c_j * lambda;
    }
}

/// Exact minimizer for one constraint row `y_i d_i + y_j d_j = 0` over scalar
/// blocks with box terms `lo <= x + d <= hi`.
///
/// Writing `d_i = t / y_i`, `d_j = -t / y_j` reduces the problem to a strongly
/// convex quadratic in `t` on an interval; the unconstrained minimizer is
/// clipped to that interval.
#[allow(clippy::too_many_arguments)]
pub fn box_pair_update(
    g_i: f64,
    g_j: f64,
    y_i: f64,
    y_j: f64,
    x_i: f64,
    x_j: f64,
    lo: f64,
    hi: f64,
    alpha: f64,
) -> Result<PairUpdate> {
    let (d_i, d_j) = box_step(g_i, g_j, y_i, y_j, x_i, x_j, (lo, hi), (lo, hi), alpha)?;
    Ok(PairUpdate {
        i: 0,
        j: 1,
        d_i: vec![d_i],
        d_j: vec![d_j],
        dual: None,
    })
}

fn in_box(x: f64, (lo, hi): (f64, f64)) -> bool {
    let slack = 1e-12 * (1.0 + x.abs());
    x >= lo - slack && x <= hi + slack
}

/// `t` range keeping `x + t/c` inside `[lo, hi]`.
fn t_range(x: f64, c: f64, (lo, hi): (f64, f64)) -> (f64, f64) {
    let a = c * (lo - x);
    let b = c * (hi - x);
    if c > 0.0 {
        (a, b)
    } else {
        (b, a)
    }
}

#[allow(clippy::too_many_arguments)]
fn box_step(
    g_i: f64,
    g_j: f64,
    y_i: f64,
    y_j: f64,
    x_i: f64,
    x_j: f64,
    box_i: (f64, f64),
    box_j: (f64, f64),
    alpha: f64,
) -> Result<(f64, f64)> {
    if y_i == 0.0 || y_j == 0.0 {
        return Err(Error::Config("single-row coefficients must be nonzero".into()));
    }
    if !in_box(x_i, box_i) || !in_box(x_j, box_j) {
        return Err(Error::Feasibility(format!(
            "pair ({x_i}, {x_j}) outside its box constraints"
        )));
    }
    let (ai, bi) = t_range(x_i, y_i, box_i);
    // d_j = -t/y_j, so the range for t flips sign of the coefficient.
    let (aj, bj) = t_range(x_j, -y_j, box_j);
    let t_lo = ai.max(aj).min(0.0);
    let t_hi = bi.min(bj).max(0.0);
    let curvature = 1.0 / (y_i * y_i) + 1.0 / (y_j * y_j);
    let slope = g_i / y_i - g_j / y_j;
    let t_free = -alpha * slope / curvature;
    let t = if t_free.is_nan() {
        0.0
    } else {
        t_free.clamp(t_lo, t_hi)
    };
    Ok((t / y_i, -t / y_j))
}

/// Minimizer for the zero-sum identity pair (`d_j = -d_i`) with arbitrary
/// coordinatewise terms `h_i`, `h_j`.
///
/// For each coordinate the scalar problem
/// `(g_i - g_j) t + t²/α + h_i(x_i + t) + h_j(x_j - t)` is solved by bisection
/// on its (monotone) subdifferential.
pub fn prox_pair_update(
    g_i: &[f64],
    g_j: &[f64],
    x_i: &[f64],
    x_j: &[f64],
    h_i: &BlockTerm,
    h_j: &BlockTerm,
    alpha: f64,
) -> Result<PairUpdate> {
    let n = g_i.len();
    if g_j.len() != n || x_i.len() != n || x_j.len() != n {
        return Err(Error::Dimension(
            "prox pair update needs blocks of equal size".into(),
        ));
    }
    let mut d_i = vec![0.0; n];
    let mut d_j = vec![0.0; n];
    prox_into(g_i, g_j, x_i, x_j, h_i, h_j, alpha, &mut d_i, &mut d_j)?;
    Ok(PairUpdate {
        i: 0,
        j: 1,
        d_i,
        d_j,
        dual: None,
    })
}

#[allow(clippy::too_many_arguments)]
fn prox_into(
    g_i: &[f64],
    g_j: &[f64],
    x_i: &[f64],
    x_j: &[f64],
    h_i: &BlockTerm,
    h_j: &BlockTerm,
    alpha: f64,
    d_i: &mut [f64],
    d_j: &mut [f64],
) -> Result<()> {
    let gnorm = g_i
        .iter()
        .chain(g_j)
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    for k in 0..g_i.len() {
        let t = scalar_prox(g_i[k] - g_j[k], x_i[k], x_j[k], h_i, h_j, alpha, gnorm)?;
        d_i[k] = t;
        d_j[k] = -t;
    }
    Ok(())
}

const BISECTION_CAP: usize = 200;
const BRACKET_LIMIT: f64 = 1e12;

fn scalar_prox(
    a: f64,
    x_i: f64,
    x_j: f64,
    h_i: &BlockTerm,
    h_j: &BlockTerm,
    alpha: f64,
    gnorm: f64,
) -> Result<f64> {
    if h_i.is_zero() && h_j.is_zero() {
        return Ok(-alpha * a / 2.0);
    }
    let (lo_i, hi_i) = h_i.domain();
    let (lo_j, hi_j) = h_j.domain();
    let t_min = (lo_i - x_i).max(x_j - hi_j);
    let t_max = (hi_i - x_i).min(x_j - lo_j);
    if !(t_min <= 0.0 + 1e-12 * (1.0 + x_i.abs() + x_j.abs()) && t_max >= -1e-12 * (1.0 + x_i.abs() + x_j.abs())) {
        return Err(Error::Feasibility(format!(
            "pair ({x_i}, {x_j}) outside the domain of its nonsmooth terms"
        )));
    }
    let t_min = t_min.min(0.0);
    let t_max = t_max.max(0.0);

    // subdifferential of the scalar objective at t: [left, right]
    let slope = |t: f64| -> (f64, f64) {
        let (li, ri) = h_i.subdifferential(x_i + t);
        let (lj, rj) = h_j.subdifferential(x_j - t);
        let base = a + 2.0 * t / alpha;
        (base + li - rj, base + ri - lj)
    };

    if t_min.is_finite() && slope(t_min).1 >= 0.0 {
        return Ok(t_min);
    }
    if t_max.is_finite() && slope(t_max).0 <= 0.0 {
        return Ok(t_max);
    }

    let mut radius = alpha * (gnorm + 1.0);
    let (mut lo, mut hi);
    loop {
        lo = (-radius).max(t_min);
        hi = radius.min(t_max);
        let left_ok = lo == t_min || slope(lo).1 < 0.0;
        let right_ok = hi == t_max || slope(hi).0 > 0.0;
        if left_ok && right_ok {
            break;
        }
        radius *= 2.0;
        if radius > BRACKET_LIMIT {
            return Err(Error::Unbounded(format!(
                "no bracket within |t| <= {BRACKET_LIMIT:e} (a = {a}, x = ({x_i}, {x_j}))"
            )));
        }
    }
    for _ in 0..BISECTION_CAP {
        let mid = 0.5 * (lo + hi);
        let (l, r) = slope(mid);
        if l > 0.0 {
            hi = mid;
        } else if r < 0.0 {
            lo = mid;
        } else {
            return Ok(mid);
        }
        if hi - lo <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Regime-dispatching pair solver used by the engines.
#[derive(Clone, Debug)]
pub struct PairSolver {
    regime: Regime,
}

#[derive(Clone, Debug)]
enum Regime {
    Gram(GramCache, Vec<DMatrix<f64>>),
    ScaledIdentity(Vec<f64>),
    SingleRowBox(Vec<f64>, Vec<(f64, f64)>),
    IdentityProx(Vec<BlockTerm>),
}

impl PairSolver {
    /// Picks the exact solver for `(A, h)`.
    ///
    /// Smooth problems use the closed form. With `h ≠ 0` the supported cases
    /// are a single constraint row with box terms and `Σ_i x_i = 0` with any
    /// coordinatewise terms.
    pub fn new(
        constraints: &LinearConstraints,
        graph: &CommGraph,
        nonsmooth: &SeparableNonsmooth,
    ) -> Result<Self> {
        if graph.num_nodes() != constraints.num_blocks() {
            return Err(Error::Dimension(format!(
                "graph has {} nodes, problem has {} blocks",
                graph.num_nodes(),
                constraints.num_blocks()
            )));
        }
        let regime = if nonsmooth.is_zero() {
            match constraints.coefficients() {
                Some(c) => Regime::ScaledIdentity(c.to_vec()),
                None => Regime::Gram(
                    GramCache::build(constraints, graph)?,
                    constraints.blocks().to_vec(),
                ),
            }
        } else if constraints.kind() == ConstraintKind::SingleRow {
            let mut boxes = Vec::with_capacity(constraints.num_blocks());
            for i in 0..constraints.num_blocks() {
                match nonsmooth.term(i) {
                    BlockTerm::Zero => boxes.push((f64::NEG_INFINITY, f64::INFINITY)),
                    BlockTerm::Box { lo, hi } => boxes.push((*lo, *hi)),
                    BlockTerm::Custom(_) => {
                        return Err(Error::Config(
                            "single-row composite updates support box terms only".into(),
                        ))
                    }
                }
            }
            Regime::SingleRowBox(constraints.coefficients().unwrap().to_vec(), boxes)
        } else if constraints.is_identity_sum() {
            Regime::IdentityProx((0..constraints.num_blocks()).map(|i| nonsmooth.term(i).clone()).collect())
        } else {
            return Err(Error::Config(
                "composite pair updates need a zero-sum identity constraint or a single row with box terms".into(),
            ));
        };
        Ok(PairSolver { regime })
    }

    /// Writes the pair direction for edge `e = (i, j)` into `d_i`, `d_j`.
    #[allow(clippy::too_many_arguments)]
    pub fn solve(
        &self,
        e: usize,
        (i, j): (usize, usize),
        g_i: &[f64],
        g_j: &[f64],
        x_i: &[f64],
        x_j: &[f64],
        alpha: f64,
        d_i: &mut [f64],
        d_j: &mut [f64],
    ) -> Result<()> {
        match &self.regime {
            Regime::Gram(cache, blocks) => {
                smooth_into(g_i, g_j, &blocks[i], &blocks[j], alpha, cache.by_edge(e), d_i, d_j)?;
            }
            Regime::ScaledIdentity(c) => {
                scaled_identity_pair_update(g_i, g_j, c[i], c[j], alpha, d_i, d_j);
            }
            Regime::SingleRowBox(c, boxes) => {
                let (a, b) = box_step(
                    g_i[0], g_j[0], c[i], c[j], x_i[0], x_j[0], boxes[i], boxes[j], alpha,
                )?;
                d_i[0] = a;
                d_j[0] = b;
            }
            Regime::IdentityProx(terms) => {
                prox_into(g_i, g_j, x_i, x_j, &terms[i], &terms[j], alpha, d_i, d_j)?;
            }
        }
        Ok(())
    }

    /// Box bounds of block `i` for regimes that clamp on apply.
    pub fn box_of(&self, i: usize) -> Option<(f64, f64)> {
        match &self.regime {
            Regime::SingleRowBox(_, boxes) => Some(boxes[i]),
            Regime::IdentityProx(terms) => match &terms[i] {
                BlockTerm::Box { lo, hi } => Some((*lo, *hi)),
                _ => None,
            },
            _ => None,
        }
    }
}
