//! Finite probability distributions, joint tables, and seeded sampling.
//!
//! Everything downstream (environments, inference, planning, bounds) is built
//! on the two value types here: [`FiniteDistribution`], a probability vector
//! over an indexed support, and [`JointTable`], a normalized table over a
//! product of finite supports. Both are immutable after construction and
//! enforce non-negativity plus unit mass within [`MASS_TOL`].
//!
//! All logarithms used in the crate are natural logarithms (nats), and the
//! convention `0 * log 0 = 0` applies wherever entropy-like sums appear.

use thiserror::Error;

/// Absolute tolerance for "weights sum to one" checks.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbError {
    #[error("all weights are zero; nothing to normalize")]
    AllZero,
    #[error("negative mass {weight} at index {index}")]
    NegativeMass { index: usize, weight: f64 },
    #[error("weights sum to {sum}, not 1 within {MASS_TOL}")]
    NotNormalized { sum: f64 },
    #[error("non-finite weight at index {index}")]
    NonFinite { index: usize },
    #[error("variable index {index} out of range for {n_vars} variables")]
    BadIndex { index: usize, n_vars: usize },
    #[error("conditioning slice (variable {given} = {value}) has zero mass")]
    ZeroConditioningMass { given: usize, value: usize },
    #[error("support sizes differ: {left} vs {right}")]
    SupportMismatch { left: usize, right: usize },
    #[error("empty support")]
    EmptySupport,
    #[error("table length {len} does not match product of dims {expected}")]
    ShapeMismatch { len: usize, expected: usize },
}

/// A probability vector over an indexed finite support.
///
/// Invariants (checked at every construction): all weights are non-negative
/// and finite, and they sum to one within [`MASS_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDistribution {
    weights: Vec<f64>,
}

impl FiniteDistribution {
    /// Wraps an already-normalized weight vector, verifying the invariants.
    pub fn new(weights: Vec<f64>) -> Result<Self, ProbError> {
        if weights.is_empty() {
            return Err(ProbError::EmptySupport);
        }
        let mut sum = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(ProbError::NonFinite { index: i });
            }
            if w < 0.0 {
                return Err(ProbError::NegativeMass { index: i, weight: w });
            }
            sum += w;
        }
        if (sum - 1.0).abs() > MASS_TOL {
            return Err(ProbError::NotNormalized { sum });
        }
        Ok(Self { weights })
    }

    /// Divides raw non-negative weights by their sum.
    pub fn normalize(raw: &[f64]) -> Result<Self, ProbError> {
        if raw.is_empty() {
            return Err(ProbError::EmptySupport);
        }
        let mut sum = 0.0;
        for (i, &w) in raw.iter().enumerate() {
            if !w.is_finite() {
                return Err(ProbError::NonFinite { index: i });
            }
            if w < 0.0 {
                return Err(ProbError::NegativeMass { index: i, weight: w });
            }
            sum += w;
        }
        if sum <= 0.0 {
            return Err(ProbError::AllZero);
        }
        let weights = raw.iter().map(|w| w / sum).collect();
        Ok(Self { weights })
    }

    pub fn point_mass(support_size: usize, at: usize) -> Self {
        assert!(at < support_size, "atom outside support");
        let mut weights = vec![0.0; support_size];
        weights[at] = 1.0;
        Self { weights }
    }

    pub fn uniform(support_size: usize) -> Self {
        assert!(support_size > 0);
        Self {
            weights: vec![1.0 / support_size as f64; support_size],
        }
    }

    pub fn support_size(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Expectation of `f` over the support.
    pub fn expect(&self, mut f: impl FnMut(usize) -> f64) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, &w)| if w > 0.0 { w * f(i) } else { 0.0 })
            .sum()
    }

    /// Inverse-CDF sample over the stored weight order.
    ///
    /// The support ordering is part of the reproducibility contract: the same
    /// `RandomSource` state always yields the same index.
    pub fn sample(&self, rng: &mut RandomSource) -> usize {
        let u = rng.next_f64();
        let mut acc = 0.0;
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        // Guard against accumulated rounding at u ≈ 1: return the last atom
        // with positive mass.
        self.weights
            .iter()
            .rposition(|&w| w > 0.0)
            .expect("distribution has positive mass")
    }
}

/// A normalized table over a product of finite supports, stored flat in
/// row-major order (last variable fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    dims: Vec<usize>,
    weights: Vec<f64>,
}

impl JointTable {
    pub fn new(dims: Vec<usize>, weights: Vec<f64>) -> Result<Self, ProbError> {
        let expected: usize = dims.iter().product();
        if dims.is_empty() || dims.contains(&0) || expected == 0 {
            return Err(ProbError::EmptySupport);
        }
        if weights.len() != expected {
            return Err(ProbError::ShapeMismatch {
                len: weights.len(),
                expected,
            });
        }
        let mut sum = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(ProbError::NonFinite { index: i });
            }
            if w < 0.0 {
                return Err(ProbError::NegativeMass { index: i, weight: w });
            }
            sum += w;
        }
        if (sum - 1.0).abs() > MASS_TOL {
            return Err(ProbError::NotNormalized { sum });
        }
        Ok(Self { dims, weights })
    }

    /// Builds the table from a function of multi-indices, then normalizes the
    /// check (the caller is expected to supply normalized mass).
    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self, ProbError> {
        let total: usize = dims.iter().product();
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; dims.len()];
        for _ in 0..total {
            weights.push(f(&idx));
            // increment mixed-radix counter, last variable fastest
            for v in (0..dims.len()).rev() {
                idx[v] += 1;
                if idx[v] < dims[v] {
                    break;
                }
                idx[v] = 0;
            }
        }
        Self::new(dims, weights)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.dims.len());
        let mut flat = 0;
        for (v, &i) in multi.iter().enumerate() {
            debug_assert!(i < self.dims[v]);
            flat = flat * self.dims[v] + i;
        }
        flat
    }

    pub fn weight(&self, multi: &[usize]) -> f64 {
        self.weights[self.flat_index(multi)]
    }

    /// Sums out every variable not in `keep`. `keep` is interpreted as a set;
    /// kept variables retain their original relative order.
    pub fn marginalize(&self, keep: &[usize]) -> Result<JointTable, ProbError> {
        if keep.is_empty() {
            return Err(ProbError::EmptySupport);
        }
        for &k in keep {
            if k >= self.dims.len() {
                return Err(ProbError::BadIndex {
                    index: k,
                    n_vars: self.dims.len(),
                });
            }
        }
        let mut kept: Vec<usize> = keep.to_vec();
        kept.sort_unstable();
        kept.dedup();
        let out_dims: Vec<usize> = kept.iter().map(|&v| self.dims[v]).collect();
        let out_total: usize = out_dims.iter().product();
        let mut out = vec![0.0; out_total];
        let mut idx = vec![0usize; self.dims.len()];
        for &w in &self.weights {
            let mut flat = 0;
            for (pos, &v) in kept.iter().enumerate() {
                flat = flat * out_dims[pos] + idx[v];
            }
            out[flat] += w;
            for v in (0..self.dims.len()).rev() {
                idx[v] += 1;
                if idx[v] < self.dims[v] {
                    break;
                }
                idx[v] = 0;
            }
        }
        JointTable::new(out_dims, out)
    }

    /// Conditions on `variable = value` and renormalizes the slice over the
    /// remaining variables.
    pub fn condition(&self, given: usize, value: usize) -> Result<JointTable, ProbError> {
        if given >= self.dims.len() {
            return Err(ProbError::BadIndex {
                index: given,
                n_vars: self.dims.len(),
            });
        }
        if self.dims.len() == 1 {
            // Conditioning a single-variable table leaves nothing behind.
            return Err(ProbError::EmptySupport);
        }
        if value >= self.dims[given] {
            return Err(ProbError::BadIndex {
                index: value,
                n_vars: self.dims[given],
            });
        }
        let out_dims: Vec<usize> = self
            .dims
            .iter()
            .enumerate()
            .filter(|&(v, _)| v != given)
            .map(|(_, &d)| d)
            .collect();
        let out_total: usize = out_dims.iter().product();
        let mut out = vec![0.0; out_total];
        let mut mass = 0.0;
        let mut idx = vec![0usize; self.dims.len()];
        for &w in &self.weights {
            if idx[given] == value {
                let mut flat = 0;
                for (v, &i) in idx.iter().enumerate() {
                    if v != given {
                        flat = flat * self.dims[v] + i;
                    }
                }
                out[flat] += w;
                mass += w;
            }
            for v in (0..self.dims.len()).rev() {
                idx[v] += 1;
                if idx[v] < self.dims[v] {
                    break;
                }
                idx[v] = 0;
            }
        }
        if mass <= 0.0 {
            return Err(ProbError::ZeroConditioningMass { given, value });
        }
        for w in &mut out {
            *w /= mass;
        }
        JointTable::new(out_dims, out)
    }

    /// Marginal distribution of a single variable.
    pub fn marginal(&self, variable: usize) -> Result<FiniteDistribution, ProbError> {
        let table = self.marginalize(&[variable])?;
        FiniteDistribution::new(table.weights)
    }

    /// Flattens the whole table into a distribution over joint cells.
    pub fn to_distribution(&self) -> FiniteDistribution {
        FiniteDistribution::new(self.weights.clone()).expect("joint table is normalized")
    }
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Counter-based deterministic random source.
///
/// Identical `(seed, stream_id)` pairs yield identical draw sequences on any
/// platform. The source is the only stateful object in the crate and must not
/// be shared between concurrent callers; split work by `stream_id` instead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomSource {
    seed: u64,
    stream_id: u64,
    counter: u64,
}

impl RandomSource {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self {
            seed,
            stream_id,
            counter: 0,
        }
    }

    /// A fresh source on a derived stream, independent of `self`'s position.
    pub fn split(&self, stream_id: u64) -> Self {
        Self::new(self.seed, splitmix64(self.stream_id ^ stream_id.wrapping_mul(GOLDEN_GAMMA)))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        splitmix64(
            splitmix64(self.seed ^ self.stream_id.wrapping_mul(GOLDEN_GAMMA))
                .wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)),
        )
    }

    /// Uniform draw in `[0, 1)` with 53-bit mantissa precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform draw in `0..bound`.
    pub fn next_below(&mut self, bound: usize) -> usize {
        assert!(bound > 0);
        // Desk-scale bounds make modulo bias negligible, but rejection keeps
        // the draw exactly uniform.
        let bound = bound as u64;
        let threshold = u64::MAX - u64::MAX % bound;
        loop {
            let candidate = self.next_u64();
            if candidate < threshold {
                return (candidate % bound) as usize;
            }
        }
    }
}
