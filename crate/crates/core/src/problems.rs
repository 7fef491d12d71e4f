//! Concrete problems: a separable quadratic with random coupling
//! constraints, an average of quadratics for the stochastic engine, and the
//! dual of a linear support vector machine.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{dot, sym_pinv, PINV_RCOND};
use crate::model::{
    BlockPartition, BlockTerm, Coords, LinearConstraints, Objective, Problem, SeparableNonsmooth,
};

/// `f(x) = C Σ_i ‖x_i - c_i‖²` with one center vector per coordinate.
#[derive(Clone, Debug)]
pub struct SeparableQuadratic {
    scale: f64,
    centers: Vec<f64>,
    partition: BlockPartition,
    lipschitz: Vec<f64>,
}

impl SeparableQuadratic {
    pub fn new(scale: f64, centers: Vec<f64>, partition: BlockPartition) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!("scale must be positive, got {scale}")));
        }
        partition.check_len(centers.len())?;
        let lipschitz = vec![2.0 * scale; partition.num_blocks()];
        Ok(SeparableQuadratic {
            scale,
            centers,
            partition,
            lipschitz,
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Value of block `i` alone; `f` is the sum of these.
    pub fn block_value(&self, i: usize, x_i: &[f64]) -> f64 {
        let c = &self.centers[self.partition.range(i)];
        self.scale * x_i.iter().zip(c).map(|(x, c)| (x - c) * (x - c)).sum::<f64>()
    }

    /// Minimizer over `{x : Ax = 0}`: the projection `c - Aᵀ(AAᵀ)⁺Ac` of the centers.
    pub fn constrained_minimum(&self, constraints: &LinearConstraints) -> Result<(Vec<f64>, f64)> {
        if constraints.partition() != &self.partition {
            return Err(Error::Dimension("constraints use a different partition".into()));
        }
        let x = project_kernel(constraints, &self.centers);
        let f = self.value(&x);
        Ok((x, f))
    }
}

/// Orthogonal projection of `v` onto `ker A`, accumulated block by block.
fn project_kernel(constraints: &LinearConstraints, v: &[f64]) -> Vec<f64> {
    let m = constraints.rows();
    let part = constraints.partition();
    let mut gram = DMatrix::zeros(m, m);
    let mut av = DVector::zeros(m);
    for (i, a) in constraints.blocks().iter().enumerate() {
        gram += a * a.transpose();
        av += a * DVector::from_column_slice(&v[part.range(i)]);
    }
    let lambda = sym_pinv(&gram, PINV_RCOND) * av;
    let mut x = v.to_vec();
    for (i, a) in constraints.blocks().iter().enumerate() {
        let shift = a.transpose() * &lambda;
        for (xc, s) in x[part.range(i)].iter_mut().zip(shift.iter()) {
            *xc -= s;
        }
    }
    x
}

impl Objective for SeparableQuadratic {
    fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    fn block_lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.scale
            * x.iter()
                .zip(&self.centers)
                .map(|(x, c)| (x - c) * (x - c))
                .sum::<f64>()
    }

    fn partial_grad<X: Coords + ?Sized>(&self, i: usize, x: &X, _aux: &X, out: &mut [f64]) {
        let off = self.partition.offset(i);
        for (k, o) in out.iter_mut().enumerate() {
            *o = 2.0 * self.scale * (x.coord(off + k) - self.centers[off + k]);
        }
    }

    fn pair_delta(
        &self,
        i: usize,
        j: usize,
        x: &[f64],
        _aux: &[f64],
        d_i: &[f64],
        d_j: &[f64],
    ) -> Option<f64> {
        let mut s = 0.0;
        for (b, d) in [(i, d_i), (j, d_j)] {
            let off = self.partition.offset(b);
            for (k, &dk) in d.iter().enumerate() {
                s += (2.0 * (x[off + k] - self.centers[off + k]) + dk) * dk;
            }
        }
        Some(self.scale * s)
    }
}

/// Random quadratic test instance with coupling constraints drawn from `U[0, 1]`.
///
/// Block `i` (1-based) is centered at `(i mod 10)·1`, and `C` is chosen so that
/// `f(0) = target_f0`. The start `x⁰ = 0` is feasible.
pub fn synthetic_quadratic(
    blocks: usize,
    dim: usize,
    rows: usize,
    target_f0: f64,
    seed: u64,
) -> Result<Problem<SeparableQuadratic>> {
    if blocks == 0 || dim == 0 || rows == 0 {
        return Err(Error::Config("block count, block size and row count must be positive".into()));
    }
    if rows > dim {
        return Err(Error::Config(format!(
            "{rows} constraint rows cannot have full row rank on blocks of size {dim}"
        )));
    }
    if !(target_f0 > 0.0 && target_f0.is_finite()) {
        return Err(Error::Config(format!("target f(0) must be positive, got {target_f0}")));
    }
    let partition = BlockPartition::uniform(blocks, dim)?;
    let mut centers = Vec::with_capacity(blocks * dim);
    for i in 0..blocks {
        let c = ((i + 1) % 10) as f64;
        centers.extend(std::iter::repeat(c).take(dim));
    }
    let base: f64 = centers.iter().map(|c| c * c).sum();
    if base == 0.0 {
        return Err(Error::Config("all block centers are zero; f(0) cannot be calibrated".into()));
    }
    let scale = target_f0 / base;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a_blocks = (0..blocks)
        .map(|_| DMatrix::from_fn(rows, dim, |_, _| rng.gen::<f64>()))
        .collect();
    let constraints = LinearConstraints::general(a_blocks)?;
    let objective = SeparableQuadratic::new(scale, centers, partition)?;
    let x0 = vec![0.0; blocks * dim];
    Problem::new(objective, constraints, SeparableNonsmooth::zero(blocks), x0)
}

/// `f(x) = (1/N) Σ_l ‖x - c_l‖²`, each `f_l` a full quadratic.
#[derive(Clone, Debug)]
pub struct AverageOfQuadratics {
    centers: Vec<Vec<f64>>,
    mean: Vec<f64>,
    offset: f64,
    partition: BlockPartition,
    lipschitz: Vec<f64>,
}

impl AverageOfQuadratics {
    pub fn new(centers: Vec<Vec<f64>>, partition: BlockPartition) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Config("at least one component is required".into()));
        }
        for c in &centers {
            partition.check_len(c.len())?;
        }
        let n = partition.dim();
        let count = centers.len() as f64;
        let mut mean = vec![0.0; n];
        for c in &centers {
            for (m, v) in mean.iter_mut().zip(c) {
                *m += v / count;
            }
        }
        // f(x) = ‖x - mean‖² + offset
        let offset = centers.iter().map(|c| dot(c, c)).sum::<f64>() / count - dot(&mean, &mean);
        let lipschitz = vec![2.0; partition.num_blocks()];
        Ok(AverageOfQuadratics {
            centers,
            mean,
            offset,
            partition,
            lipschitz,
        })
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    /// Minimizer over `{x : Ax = 0}` and the optimal value.
    pub fn constrained_minimum(&self, constraints: &LinearConstraints) -> Result<(Vec<f64>, f64)> {
        if constraints.partition() != &self.partition {
            return Err(Error::Dimension("constraints use a different partition".into()));
        }
        let x = project_kernel(constraints, &self.mean);
        let f = self.value(&x);
        Ok((x, f))
    }
}

impl Objective for AverageOfQuadratics {
    fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    fn block_lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.mean)
            .map(|(x, m)| (x - m) * (x - m))
            .sum::<f64>()
            + self.offset
    }

    fn partial_grad<X: Coords + ?Sized>(&self, i: usize, x: &X, _aux: &X, out: &mut [f64]) {
        let off = self.partition.offset(i);
        for (k, o) in out.iter_mut().enumerate() {
            *o = 2.0 * (x.coord(off + k) - self.mean[off + k]);
        }
    }

    fn component_count(&self) -> usize {
        self.centers.len()
    }

    fn component_value(&self, l: usize, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.centers[l])
            .map(|(x, c)| (x - c) * (x - c))
            .sum()
    }

    fn component_partial_grad<X: Coords + ?Sized>(
        &self,
        l: usize,
        i: usize,
        x: &X,
        _aux: &X,
        out: &mut [f64],
    ) {
        let off = self.partition.offset(i);
        let c = &self.centers[l];
        for (k, o) in out.iter_mut().enumerate() {
            *o = 2.0 * (x.coord(off + k) - c[off + k]);
        }
    }

    fn pair_delta(
        &self,
        i: usize,
        j: usize,
        x: &[f64],
        _aux: &[f64],
        d_i: &[f64],
        d_j: &[f64],
    ) -> Option<f64> {
        let mut s = 0.0;
        for (b, d) in [(i, d_i), (j, d_j)] {
            let off = self.partition.offset(b);
            for (k, &dk) in d.iter().enumerate() {
                s += (2.0 * (x[off + k] - self.mean[off + k]) + dk) * dk;
            }
        }
        Some(s)
    }
}

/// Zero-sum average-of-quadratics instance with standard normal centers.
pub fn stochastic_toy(
    blocks: usize,
    dim: usize,
    components: usize,
    seed: u64,
) -> Result<Problem<AverageOfQuadratics>> {
    let partition = BlockPartition::uniform(blocks, dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = (0..components)
        .map(|_| (0..blocks * dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let objective = AverageOfQuadratics::new(centers, partition)?;
    let constraints = LinearConstraints::zero_sum(blocks, dim)?;
    Problem::new(
        objective,
        constraints,
        SeparableNonsmooth::zero(blocks),
        vec![0.0; blocks * dim],
    )
}

/// A sparse feature vector with strictly increasing 0-based indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVector {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn new(indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::Dimension("index and value lists differ in length".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("feature indices must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("feature values must be finite".into()));
        }
        Ok(SparseVector { indices, values })
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn dot_dense<X: Coords + ?Sized>(&self, w: &X, offset: usize) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&k, v)| v * w.coord(offset + k))
            .sum()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut a, mut b, mut s) = (0, 0, 0.0);
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    s += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        s
    }

    fn overlap(&self, other: &SparseVector) -> (usize, usize) {
        let (mut a, mut b, mut common) = (0, 0, 0);
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    common += 1;
                    a += 1;
                    b += 1;
                }
            }
        }
        (common, self.nnz() + other.nnz() - common)
    }
}

/// Labeled sparse examples for a binary linear classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmDataset {
    examples: Vec<SparseVector>,
    labels: Vec<f64>,
    feature_dim: usize,
}

impl SvmDataset {
    pub fn new(examples: Vec<SparseVector>, labels: Vec<f64>, feature_dim: usize) -> Result<Self> {
        if examples.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} examples but {} labels",
                examples.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l != 1.0 && l != -1.0) {
            return Err(Error::Config(format!("labels must be +1 or -1, got {l}")));
        }
        if let Some(k) = examples.iter().filter_map(|e| e.indices.last()).find(|&&k| k >= feature_dim) {
            return Err(Error::Dimension(format!(
                "feature index {k} exceeds dimension {feature_dim}"
            )));
        }
        Ok(SvmDataset {
            examples,
            labels,
            feature_dim,
        })
    }

    /// Builds a dataset from dense rows, dropping zero entries.
    pub fn from_dense(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        let dim = rows.iter().map(|r| r.len()).max().unwrap_or(0);
        let examples = rows
            .iter()
            .map(|r| {
                let (idx, val): (Vec<usize>, Vec<f64>) =
                    r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, v)| (k, *v)).unzip();
                SparseVector::new(idx, val)
            })
            .collect::<Result<_>>()?;
        Self::new(examples, labels, dim)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn example(&self, i: usize) -> &SparseVector {
        &self.examples[i]
    }

    pub fn examples(&self) -> &[SparseVector] {
        &self.examples
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn average_nnz(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.examples.iter().map(|e| e.nnz()).sum::<usize>() as f64 / self.len() as f64
    }

    /// The first `count` examples.
    pub fn head(&self, count: usize) -> SvmDataset {
        let count = count.min(self.len());
        SvmDataset {
            examples: self.examples[..count].to_vec(),
            labels: self.labels[..count].to_vec(),
            feature_dim: self.feature_dim,
        }
    }

    /// Mean Jaccard overlap of feature supports over up to `pairs` random example pairs.
    pub fn average_support_overlap(&self, pairs: usize, seed: u64) -> f64 {
        let n = self.len();
        if n < 2 || pairs == 0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0.0;
        for _ in 0..pairs {
            let i = rng.gen_range(0..n);
            let mut j = rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let (common, union) = self.examples[i].overlap(&self.examples[j]);
            if union > 0 {
                total += common as f64 / union as f64;
            }
        }
        total / pairs as f64
    }
}

/// Reads a sparse labeled dataset (`<label> <idx>:<val> ...`, 1-based indices).
/// Gzip-compressed files are detected by their magic bytes.
pub fn parse_libsvm(path: impl AsRef<Path>, feature_dim: Option<usize>) -> Result<SvmDataset> {
    let mut file = File::open(path.as_ref())?;
    let mut magic = [0u8; 2];
    let got = file.read(&mut magic)?;
    let file = File::open(path.as_ref())?;
    if got == 2 && magic == [0x1f, 0x8b] {
        parse_libsvm_reader(BufReader::new(GzDecoder::new(file)), feature_dim)
    } else {
        parse_libsvm_reader(BufReader::new(file), feature_dim)
    }
}

pub fn parse_libsvm_reader<R: BufRead>(reader: R, feature_dim: Option<usize>) -> Result<SvmDataset> {
    let mut examples = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0;
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let mut tokens = content.split_whitespace();
        let label = match tokens.next() {
            Some("+1") | Some("1") => 1.0,
            Some("-1") => -1.0,
            Some(t) => return Err(err(format!("label must be +1, 1 or -1, got '{t}'"))),
            None => unreachable!(),
        };
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("expected <index>:<value>, got '{tok}'")))?;
            let i: usize = i
                .parse()
                .map_err(|_| err(format!("bad feature index '{i}'")))?;
            if i == 0 {
                return Err(err("feature indices are 1-based".into()));
            }
            let v: f64 = v
                .parse()
                .map_err(|_| err(format!("bad feature value '{v}'")))?;
            if !v.is_finite() {
                return Err(err(format!("feature value '{v}' is not finite")));
            }
            if indices.last().is_some_and(|&last| i - 1 <= last) {
                return Err(err(format!("feature index {i} is not strictly increasing")));
            }
            indices.push(i - 1);
            values.push(v);
            max_index = max_index.max(i);
        }
        examples.push(SparseVector { indices, values });
        labels.push(label);
    }
    let dim = match feature_dim {
        Some(d) if d < max_index => {
            return Err(Error::Config(format!(
                "feature dimension {d} is smaller than the largest index {max_index}"
            )))
        }
        Some(d) => d,
        None => max_index,
    };
    SvmDataset::new(examples, labels, dim)
}

/// Sparse binary dataset shaped like one-hot encoded census records:
/// `fields` categorical fields spread over `features` binary features, one
/// active feature per field, labels from a noisy planted linear rule.
pub fn synthetic_census_like(
    examples: usize,
    features: usize,
    fields: usize,
    seed: u64,
) -> Result<SvmDataset> {
    if fields == 0 || features < fields || examples == 0 {
        return Err(Error::Config(
            "need at least one example and at least one feature per field".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // field boundaries: split the features into `fields` nonempty ranges
    let mut cuts: Vec<usize> = (1..features).collect();
    cuts.shuffle(&mut rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(fields - 1).collect();
    cuts.sort_unstable();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(features);
    let planted: Vec<f64> = (0..features).map(|_| rng.sample(StandardNormal)).collect();
    let mut weights_per_field = Vec::with_capacity(fields);
    for f in 0..fields {
        // skewed category frequencies
        let w: Vec<f64> = (bounds[f]..bounds[f + 1]).map(|k| 1.0 / (1.0 + (k - bounds[f]) as f64)).collect();
        weights_per_field.push(w);
    }
    let mut exs = Vec::with_capacity(examples);
    let mut margins = Vec::with_capacity(examples);
    for _ in 0..examples {
        let mut idx = Vec::with_capacity(fields);
        for f in 0..fields {
            let w = &weights_per_field[f];
            let total: f64 = w.iter().sum();
            let mut u = rng.gen::<f64>() * total;
            let mut pick = w.len() - 1;
            for (k, &wk) in w.iter().enumerate() {
                if u < wk {
                    pick = k;
                    break;
                }
                u -= wk;
            }
            idx.push(bounds[f] + pick);
        }
        let margin: f64 = idx.iter().map(|&k| planted[k]).sum::<f64>()
            + 1.5 * rng.sample::<f64, _>(StandardNormal);
        margins.push(margin);
        exs.push(SparseVector {
            values: vec![1.0; idx.len()],
            indices: idx,
        });
    }
    // roughly a quarter positive, as in census income data
    let mut sorted = margins.clone();
    sorted.sort_by(f64::total_cmp);
    let threshold = sorted[(sorted.len() * 3) / 4];
    let labels = margins
        .iter()
        .map(|&m| if m >= threshold { 1.0 } else { -1.0 })
        .collect();
    SvmDataset::new(exs, labels, features)
}

/// Dual of the linear SVM: `f(α) = ½‖w‖² - Σ_i α_i` with `w = Σ_i α_i y_i z_i`.
///
/// The auxiliary state is `w`; the partial gradient `y_i z_iᵀw - 1` is one
/// sparse dot product.
#[derive(Clone, Debug)]
pub struct SvmDual {
    dataset: SvmDataset,
    c: f64,
    partition: BlockPartition,
    lipschitz: Vec<f64>,
}

impl SvmDual {
    pub fn new(dataset: SvmDataset, c: f64) -> Result<Self> {
        if dataset.len() < 2 {
            return Err(Error::Config("the dual needs at least two examples".into()));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("box bound C must be positive, got {c}")));
        }
        let partition = BlockPartition::uniform(dataset.len(), 1)?;
        let lipschitz = dataset
            .examples()
            .iter()
            .map(|e| e.squared_norm().max(1e-12))
            .collect();
        Ok(SvmDual {
            dataset,
            c,
            partition,
            lipschitz,
        })
    }

    pub fn dataset(&self) -> &SvmDataset {
        &self.dataset
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// `w = Σ_i α_i y_i z_i` computed from scratch.
    pub fn weights(&self, alpha: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.dataset.feature_dim()];
        for (i, e) in self.dataset.examples().iter().enumerate() {
            let s = alpha[i] * self.dataset.label(i);
            if s != 0.0 {
                for (&k, v) in e.indices.iter().zip(&e.values) {
                    w[k] += s * v;
                }
            }
        }
        w
    }
}

impl Objective for SvmDual {
    fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    fn block_lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    fn value(&self, alpha: &[f64]) -> f64 {
        self.value_with_aux(alpha, &self.weights(alpha))
    }

    fn partial_grad<X: Coords + ?Sized>(&self, i: usize, _x: &X, aux: &X, out: &mut [f64]) {
        out[0] = self.dataset.label(i) * self.dataset.example(i).dot_dense(aux, 0) - 1.0;
    }

    fn aux_len(&self) -> usize {
        self.dataset.feature_dim()
    }

    fn build_aux(&self, alpha: &[f64]) -> Vec<f64> {
        self.weights(alpha)
    }

    fn aux_increment(&self, i: usize, d_i: &[f64], apply: &mut dyn FnMut(usize, f64)) {
        let s = d_i[0] * self.dataset.label(i);
        if s != 0.0 {
            let e = self.dataset.example(i);
            for (&k, v) in e.indices.iter().zip(&e.values) {
                apply(k, s * v);
            }
        }
    }

    fn value_with_aux(&self, alpha: &[f64], w: &[f64]) -> f64 {
        0.5 * dot(w, w) - alpha.iter().sum::<f64>()
    }

    fn pair_delta(
        &self,
        i: usize,
        j: usize,
        _x: &[f64],
        w: &[f64],
        d_i: &[f64],
        d_j: &[f64],
    ) -> Option<f64> {
        let (zi, zj) = (self.dataset.example(i), self.dataset.example(j));
        let si = d_i[0] * self.dataset.label(i);
        let sj = d_j[0] * self.dataset.label(j);
        let w_dw = si * zi.dot_dense(w, 0) + sj * zj.dot_dense(w, 0);
        let dw2 = si * si * zi.squared_norm() + sj * sj * zj.squared_norm() + 2.0 * si * sj * zi.dot(zj);
        Some(w_dw + 0.5 * dw2 - (d_i[0] + d_j[0]))
    }
}

/// The SVM dual with `Σ_i y_i α_i = 0`, `0 <= α_i <= C`, started at `α = 0`.
pub fn svm_dual_problem(dataset: SvmDataset, c: f64) -> Result<Problem<SvmDual>> {
    if dataset.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    let labels = dataset.labels().to_vec();
    let b = labels.len();
    let objective = SvmDual::new(dataset, c)?;
    let constraints = LinearConstraints::single_row(labels)?;
    let h = SeparableNonsmooth::uniform(b, BlockTerm::Box { lo: 0.0, hi: c });
    Problem::new(objective, constraints, h, vec![0.0; b])
}
