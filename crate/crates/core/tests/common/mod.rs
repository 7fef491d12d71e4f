//! Independent reference solutions used by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use lccd::model::{feasibility_residual, AbsValue, BlockTerm, LinearConstraints, Objective};
use lccd::problems::{AverageOfQuadratics, SvmDataset, SvmDual};
use lccd::reduction::ConformalPiece;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

/// Solves `min <g, d> + ‖d‖²/(2α)  s.t.  B d = 0` through the full KKT system
/// `[I/α  Bᵀ; B  0] [d; μ] = [-g; 0]`.
pub fn kkt_pair_direction(g: &[f64], b: &DMatrix<f64>, alpha: f64) -> Vec<f64> {
    let n = g.len();
    let m = b.nrows();
    let mut k = DMatrix::zeros(n + m, n + m);
    for i in 0..n {
        k[(i, i)] = 1.0 / alpha;
    }
    k.view_mut((0, n), (n, m)).copy_from(&b.transpose());
    k.view_mut((n, 0), (m, n)).copy_from(b);
    let mut rhs = DVector::zeros(n + m);
    for i in 0..n {
        rhs[i] = -g[i];
    }
    let sol = k.lu().solve(&rhs).expect("KKT system is nonsingular");
    sol.as_slice()[..n].to_vec()
}

/// Minimizer of a strictly convex function on `[lo, hi]`: a coarse grid
/// followed by ternary search around the best grid point.
pub fn brute_force_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    assert!(lo <= hi && lo.is_finite() && hi.is_finite());
    if hi - lo == 0.0 {
        return lo;
    }
    let n = 2000;
    let h = (hi - lo) / n as f64;
    let mut best = 0;
    let mut best_v = f64::INFINITY;
    for k in 0..=n {
        let v = f(lo + k as f64 * h);
        if v < best_v {
            best_v = v;
            best = k;
        }
    }
    let mut a = (lo + (best as f64 - 1.0) * h).max(lo);
    let mut b = (lo + (best as f64 + 1.0) * h).min(hi);
    for _ in 0..300 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if f(m1) <= f(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let t = 0.5 * (a + b);
    // endpoints may be the minimizer exactly
    [lo, t, hi]
        .into_iter()
        .min_by(|x, y| f(*x).total_cmp(&f(*y)))
        .unwrap()
}

/// Exact minimizer of a function that is quadratic between consecutive
/// `breaks` on `[lo, hi]`: each piece is fitted from three samples and its
/// clamped vertex joins the endpoints and breakpoints as candidates.
pub fn piecewise_quadratic_min(f: impl Fn(f64) -> f64, breaks: &[f64], lo: f64, hi: f64) -> f64 {
    assert!(lo <= hi && lo.is_finite() && hi.is_finite());
    let mut knots: Vec<f64> = breaks.iter().copied().filter(|b| *b > lo && *b < hi).collect();
    knots.push(lo);
    knots.push(hi);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut cands = knots.clone();
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = (b - a) / 4.0;
        if h <= 0.0 {
            continue;
        }
        let mid = 0.5 * (a + b);
        let (f0, f1, f2) = (f(mid - h), f(mid), f(mid + h));
        let curv = (f0 - 2.0 * f1 + f2) / (2.0 * h * h);
        if curv > 0.0 {
            let slope = (f2 - f0) / (2.0 * h);
            cands.push((mid - slope / (2.0 * curv)).clamp(a, b));
        }
    }
    cands.into_iter().min_by(|x, y| f(*x).total_cmp(&f(*y))).unwrap()
}

/// `min C Σ‖x - c‖²` subject to `Ax = 0` through the dense KKT system
/// `[2C I  Aᵀ; A  0] [x; λ] = [2C c; 0]`.
pub fn kkt_quadratic(scale: f64, centers: &[f64], constraints: &LinearConstraints) -> (Vec<f64>, f64) {
    let a = constraints.dense();
    let n = a.ncols();
    let m = a.nrows();
    let mut k = DMatrix::zeros(n + m, n + m);
    for i in 0..n {
        k[(i, i)] = 2.0 * scale;
    }
    k.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    k.view_mut((n, 0), (m, n)).copy_from(&a);
    let mut rhs = DVector::zeros(n + m);
    for i in 0..n {
        rhs[i] = 2.0 * scale * centers[i];
    }
    let sol = k.lu().solve(&rhs).expect("KKT system is nonsingular");
    let x = sol.as_slice()[..n].to_vec();
    let f = scale * x.iter().zip(centers).map(|(x, c)| (x - c) * (x - c)).sum::<f64>();
    (x, f)
}

/// Same optimum with the KKT system reduced by block elimination, for
/// instances too large for a dense factorization of the full system:
/// `(A Aᵀ) λ' = A c`, `x = c - Aᵀλ'`.
pub fn kkt_quadratic_schur(scale: f64, centers: &[f64], constraints: &LinearConstraints) -> (Vec<f64>, f64) {
    let a = constraints.dense();
    let c = DVector::from_column_slice(centers);
    let s = &a * a.transpose();
    let lambda = s.cholesky().expect("A Aᵀ is positive definite").solve(&(&a * &c));
    let x = &c - a.transpose() * lambda;
    let f = scale * (&x - &c).norm_squared();
    (x.as_slice().to_vec(), f)
}

/// `∇_i f(α) = y_i Σ_j α_j y_j z_iᵀz_j - 1` summed directly over all pairs.
pub fn svm_direct_gradient(ds: &SvmDataset, alpha: &[f64]) -> Vec<f64> {
    let n = ds.len();
    (0..n)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..n {
                if alpha[j] != 0.0 {
                    s += alpha[j] * ds.label(j) * ds.example(i).dot(ds.example(j));
                }
            }
            ds.label(i) * s - 1.0
        })
        .collect()
}

/// `½ Σ_ij α_i α_j y_i y_j z_iᵀz_j - Σ α_i` summed directly.
pub fn svm_direct_value(ds: &SvmDataset, alpha: &[f64]) -> f64 {
    let n = ds.len();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            q += alpha[i] * alpha[j] * ds.label(i) * ds.label(j) * ds.example(i).dot(ds.example(j));
        }
    }
    0.5 * q - alpha.iter().sum::<f64>()
}

/// Separable toy: margin-1 separator `w = (1, 0)` with support vectors
/// `(1, 0)` and `(-1, 0)`, dual optimum `α = (1/2, 0, 1/2, 0)`, `f* = -1/2`.
pub fn toy_svm() -> SvmDataset {
    SvmDataset::from_dense(
        &[vec![1.0, 0.0], vec![2.0, 1.0], vec![-1.0, 0.0], vec![-2.0, -1.0]],
        vec![1.0, 1.0, -1.0, -1.0],
    )
    .unwrap()
}

pub fn gradient_of<O: Objective>(obj: &O, x: &[f64]) -> Vec<f64> {
    lccd::model::full_gradient(obj, x)
}

pub fn svm_weights(obj: &SvmDual, alpha: &[f64]) -> Vec<f64> {
    obj.weights(alpha)
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn pair_matrix(a_i: &DMatrix<f64>, a_j: &DMatrix<f64>) -> DMatrix<f64> {
    let m = a_i.nrows();
    let mut b = DMatrix::zeros(m, a_i.ncols() + a_j.ncols());
    b.view_mut((0, 0), a_i.shape()).copy_from(a_i);
    b.view_mut((0, a_i.ncols()), a_j.shape()).copy_from(a_j);
    b
}

pub fn smooth_case(seed: u64, m: usize) -> (Vec<f64>, Vec<f64>, DMatrix<f64>, DMatrix<f64>, f64) {
    let mut r = rng(seed);
    let ni = m + (seed as usize % 3);
    let nj = m + ((seed as usize / 3) % 3);
    let a_i = normal_matrix(&mut r, m, ni);
    let a_j = normal_matrix(&mut r, m, nj);
    let g_i = normal_vec(&mut r, ni);
    let g_j = normal_vec(&mut r, nj);
    let alpha = uniform(&mut r, 0.1, 2.0);
    (g_i, g_j, a_i, a_j, alpha)
}

/// `(d_i, d_j)` minimizing the box pair problem, found on the segment
/// parametrized by `d_i`.
pub fn box_oracle(g_i: f64, g_j: f64, y_i: f64, y_j: f64, x_i: f64, x_j: f64, lo: f64, hi: f64, alpha: f64) -> (f64, f64) {
    let ratio = -y_i / y_j; // d_j = ratio · d_i
    let (mut a, mut b) = (lo - x_i, hi - x_i);
    let (p, q) = ((lo - x_j) / ratio, (hi - x_j) / ratio);
    a = a.max(p.min(q));
    b = b.min(p.max(q));
    let obj = |d: f64| {
        let dj = ratio * d;
        g_i * d + g_j * dj + (d * d + dj * dj) / (2.0 * alpha)
    };
    let d = piecewise_quadratic_min(obj, &[], a, b);
    (d, ratio * d)
}

pub fn random_box_case(seed: u64) -> (f64, f64, f64, f64, f64, f64, f64, f64, f64) {
    let mut r = rng(seed);
    let sign = |r: &mut rand_chacha::ChaCha8Rng| if uniform(r, 0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
    let (lo, hi) = (0.0, uniform(&mut r, 0.5, 3.0));
    let y_i = sign(&mut r);
    let y_j = sign(&mut r);
    let x = |r: &mut rand_chacha::ChaCha8Rng| {
        // a third of the points sit on a bound
        match uniform(r, 0.0, 3.0) as u32 {
            0 => lo,
            1 => hi,
            _ => uniform(r, lo, hi),
        }
    };
    let x_i = x(&mut r);
    let x_j = x(&mut r);
    let g_i = 3.0 * normal_vec(&mut r, 1)[0];
    let g_j = 3.0 * normal_vec(&mut r, 1)[0];
    let alpha = uniform(&mut r, 0.1, 2.0);
    (g_i, g_j, y_i, y_j, x_i, x_j, lo, hi, alpha)
}

pub fn prox_oracle(a: f64, x_i: f64, x_j: f64, h_i: &BlockTerm, h_j: &BlockTerm, alpha: f64) -> f64 {
    let (li, ui) = h_i.domain();
    let (lj, uj) = h_j.domain();
    let reach = alpha * (a.abs() + 10.0) + 1.0;
    let lo = (li - x_i).max(x_j - uj).max(-reach);
    let hi = (ui - x_i).min(x_j - lj).min(reach);
    let kinks = [-x_i, x_j];
    piecewise_quadratic_min(|t| a * t + t * t / alpha + h_i.value(x_i + t) + h_j.value(x_j - t), &kinks, lo, hi)
}

pub fn random_term(r: &mut rand_chacha::ChaCha8Rng, kind: u32) -> BlockTerm {
    match kind {
        0 => BlockTerm::Custom(Arc::new(AbsValue { weight: uniform(r, 0.1, 2.0) })),
        _ => BlockTerm::Box { lo: -1.0, hi: uniform(r, 0.5, 2.0) },
    }
}

/// Random prox pair instance with ℓ₁ and box terms on `n ≤ 3` coordinates.
pub fn random_prox_case(seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, BlockTerm, BlockTerm, f64) {
    let mut r = rng(10_000 + seed);
    let n = 1 + (seed as usize % 3);
    let h_i = random_term(&mut r, (seed % 3 == 1) as u32);
    let h_j = random_term(&mut r, (seed % 3 != 0) as u32);
    let inside = |r: &mut rand_chacha::ChaCha8Rng, h: &BlockTerm| -> f64 {
        let (lo, hi) = h.domain();
        if lo.is_finite() {
            uniform(r, lo, hi)
        } else {
            2.0 * normal_vec(r, 1)[0]
        }
    };
    let x_i: Vec<f64> = (0..n).map(|_| inside(&mut r, &h_i)).collect();
    let x_j: Vec<f64> = (0..n).map(|_| inside(&mut r, &h_j)).collect();
    let g_i = normal_vec(&mut r, n);
    let g_j = normal_vec(&mut r, n);
    let alpha = uniform(&mut r, 0.1, 2.0);
    (g_i, g_j, x_i, x_j, h_i, h_j, alpha)
}

/// A feasible point: `x = (I - A⁺A) w` with the pseudo-inverse from a
/// dense least-squares solve.
pub fn feasible_point(constraints: &LinearConstraints, w: &[f64]) -> Vec<f64> {
    let a = constraints.dense();
    let wv = DVector::from_column_slice(w);
    let lambda = (&a * a.transpose()).cholesky().unwrap().solve(&(&a * &wv));
    (wv - a.transpose() * lambda).as_slice().to_vec()
}

pub fn check_pieces(d: &[f64], pieces: &[ConformalPiece], constraints: &LinearConstraints) {
    let part = constraints.partition();
    let scale = 1.0 + d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut sum = vec![0.0; d.len()];
    for piece in pieces {
        for (s, v) in sum.iter_mut().zip(&piece.d) {
            *s += v;
        }
        let support: Vec<usize> = (0..part.num_blocks())
            .filter(|&b| part.range(b).any(|c| piece.d[c] != 0.0))
            .collect();
        assert_eq!(support, vec![piece.i, piece.j]);
        assert!(feasibility_residual(constraints, &piece.d).unwrap() <= 1e-10 * scale);
        for (a, b) in piece.d.iter().zip(d) {
            assert!(a * b >= 0.0);
        }
    }
    for (a, b) in sum.iter().zip(d) {
        assert!((a - b).abs() <= 1e-10 * scale);
    }
    let nnz = d.iter().filter(|v| **v != 0.0).count();
    assert!(pieces.len() <= nnz);
}

/// Optimum of `(1/N) Σ_l ‖x - c_l‖²` under the constraints, from the KKT system
/// of the equivalent `‖x - c̄‖²`, with the value summed component by component.
pub fn toy_optimum(obj: &AverageOfQuadratics, constraints: &LinearConstraints) -> (Vec<f64>, f64) {
    let centers = obj.centers();
    let n = centers[0].len();
    let mean: Vec<f64> = (0..n)
        .map(|c| centers.iter().map(|v| v[c]).sum::<f64>() / centers.len() as f64)
        .collect();
    let (x, _) = kkt_quadratic(1.0, &mean, constraints);
    let f = centers
        .iter()
        .map(|v| v.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum::<f64>()
        / centers.len() as f64;
    (x, f)
}
