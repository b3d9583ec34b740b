//! Binning estimators for entropy, mutual information and KL divergence.
//!
//! Continuous samples are discretized into equal-width bins per dimension;
//! each sample's vector of bin indices becomes one discrete symbol, and the
//! plug-in estimators run on the resulting empirical distributions. All
//! quantities are in bits. Count maps are ordered (BTreeMap) so summation
//! order, and therefore every reported value, is deterministic.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::error::{Error, Result};

/// A symbol is the per-dimension bin index vector of one sample.
pub type SymbolKey = Vec<u32>;

/// Equal-width binning specification: one `[low, high)` range per dimension
/// plus the shared bin count (last bin closed).
#[derive(Debug, Clone, PartialEq)]
pub struct BinSpec {
    ranges: Vec<(f64, f64)>,
    bin_count: usize,
}

impl BinSpec {
    /// Per-dimension empirical `[min, max]` ranges, widened by 1e-12 at the
    /// top so the maximum falls inside the last bin. Constant dimensions get
    /// the degenerate range `[v, v + 1e-12]`.
    pub fn from_data(data: &Array2<f64>, bin_count: usize) -> Result<Self> {
        Self::validate_bins(bin_count)?;
        let ranges = data
            .rows()
            .into_iter()
            .map(|row| {
                let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi + 1e-12)
            })
            .collect();
        Ok(Self { ranges, bin_count })
    }

    /// The same fixed range for every dimension.
    pub fn fixed(dims: usize, bin_count: usize, low: f64, high: f64) -> Result<Self> {
        Self::validate_bins(bin_count)?;
        if high.is_nan() || low.is_nan() || high <= low {
            return Err(Error::Config(format!(
                "bin range must satisfy high > low, got [{low}, {high}]"
            )));
        }
        Ok(Self {
            ranges: vec![(low, high); dims],
            bin_count,
        })
    }

    fn validate_bins(bin_count: usize) -> Result<()> {
        if bin_count < 2 {
            return Err(Error::Config(format!(
                "bin count must be at least 2, got {bin_count}"
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.ranges.len()
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    pub fn range(&self, dim: usize) -> (f64, f64) {
        self.ranges[dim]
    }
}

/// Bin indices, `dims x samples`, every entry in `[0, bin_count)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedMatrix {
    indices: Array2<u32>,
    bin_count: usize,
}

impl BinnedMatrix {
    pub fn dims(&self) -> usize {
        self.indices.nrows()
    }

    pub fn samples(&self) -> usize {
        self.indices.ncols()
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    pub fn indices(&self) -> &Array2<u32> {
        &self.indices
    }

    /// The symbol of one sample: its column of bin indices.
    pub fn key(&self, sample: usize) -> SymbolKey {
        self.indices.column(sample).to_vec()
    }
}

/// Maps `v` in `[lo, hi)` to `floor(B (v - lo) / (hi - lo))`, clamping values
/// outside the range to the edge bins; the last bin is closed.
pub fn discretize(data: &Array2<f64>, spec: &BinSpec) -> Result<BinnedMatrix> {
    if data.nrows() != spec.dims() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} dims, bin spec has {}",
            data.nrows(),
            spec.dims()
        )));
    }
    let b = spec.bin_count();
    let mut indices = Array2::zeros(data.raw_dim());
    for (dim, row) in data.rows().into_iter().enumerate() {
        let (lo, hi) = spec.range(dim);
        let width = hi - lo;
        for (j, &v) in row.iter().enumerate() {
            let raw = (b as f64 * (v - lo) / width).floor();
            let idx = if raw < 0.0 {
                0
            } else if raw >= b as f64 {
                (b - 1) as u32
            } else {
                raw as u32
            };
            indices[[dim, j]] = idx;
        }
    }
    Ok(BinnedMatrix {
        indices,
        bin_count: b,
    })
}

/// Normalized probability mass over symbol keys. No zero-probability entries
/// are stored and the support is kept sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    probabilities: BTreeMap<SymbolKey, f64>,
}

impl DiscreteDistribution {
    /// Builds a distribution from symbol counts, dropping zero counts.
    pub fn from_counts<I: IntoIterator<Item = (SymbolKey, u64)>>(counts: I) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut total = 0u64;
        for (key, count) in counts {
            if count == 0 {
                continue;
            }
            total += count;
            *map.entry(key).or_insert(0.0) += count as f64;
        }
        if total == 0 {
            return Err(Error::Config("empty distribution".into()));
        }
        for v in map.values_mut() {
            *v /= total as f64;
        }
        Ok(Self { probabilities: map })
    }

    /// Builds a distribution from explicit probabilities; they must be
    /// positive and sum to 1 within 1e-12.
    pub fn from_probabilities<I: IntoIterator<Item = (SymbolKey, f64)>>(
        entries: I,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut sum = 0.0;
        for (key, p) in entries {
            if !p.is_finite() || p <= 0.0 {
                return Err(Error::Config(format!(
                    "probabilities must be positive and finite, got {p}"
                )));
            }
            sum += p;
            map.insert(key, p);
        }
        if map.is_empty() || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "probabilities must sum to 1 within 1e-12, got {sum}"
            )));
        }
        Ok(Self { probabilities: map })
    }

    pub fn support_size(&self) -> usize {
        self.probabilities.len()
    }

    pub fn probability(&self, key: &SymbolKey) -> Option<f64> {
        self.probabilities.get(key).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SymbolKey, f64)> {
        self.probabilities.iter().map(|(k, &p)| (k, p))
    }
}

/// The empirical distribution of a binned sample set: one symbol per sample
/// column, probability `count / samples`.
pub fn empirical_distribution(binned: &BinnedMatrix) -> Result<DiscreteDistribution> {
    if binned.samples() == 0 {
        return Err(Error::Config("no samples to estimate from".into()));
    }
    let mut counts: BTreeMap<SymbolKey, u64> = BTreeMap::new();
    for j in 0..binned.samples() {
        *counts.entry(binned.key(j)).or_insert(0) += 1;
    }
    DiscreteDistribution::from_counts(counts)
}

/// Shannon entropy in bits, `-sum p log2 p`.
pub fn entropy(p: &DiscreteDistribution) -> f64 {
    -p.iter().map(|(_, prob)| prob * prob.log2()).sum::<f64>()
}

/// Entropy of a count multiset. Counts are sorted before summation so the
/// result depends only on the multiset, making mutual information exactly
/// symmetric and invariant under key relabeling.
fn counts_entropy<'a, I: Iterator<Item = &'a u64>>(counts: I, total: u64) -> f64 {
    let mut sorted: Vec<u64> = counts.copied().collect();
    sorted.sort_unstable();
    let n = total as f64;
    -sorted
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Co-occurrence counts of `(key_a, key_b)` symbol pairs per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCounts {
    counts: BTreeMap<(SymbolKey, SymbolKey), u64>,
    total: u64,
}

impl JointCounts {
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, pair: &(SymbolKey, SymbolKey)) -> u64 {
        self.counts.get(pair).copied().unwrap_or(0)
    }

    pub fn support_size(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(SymbolKey, SymbolKey), u64)> {
        self.counts.iter().map(|(k, &c)| (k, c))
    }

    pub fn marginal_a(&self) -> BTreeMap<SymbolKey, u64> {
        let mut out: BTreeMap<SymbolKey, u64> = BTreeMap::new();
        for ((a, _), &c) in self.counts.iter() {
            *out.entry(a.clone()).or_insert(0) += c;
        }
        out
    }

    pub fn marginal_b(&self) -> BTreeMap<SymbolKey, u64> {
        let mut out: BTreeMap<SymbolKey, u64> = BTreeMap::new();
        for ((_, b), &c) in self.counts.iter() {
            *out.entry(b.clone()).or_insert(0) += c;
        }
        out
    }
}

/// Tallies co-occurring symbol pairs over samples.
pub fn joint_counts(a: &BinnedMatrix, b: &BinnedMatrix) -> Result<JointCounts> {
    if a.samples() != b.samples() {
        return Err(Error::SampleCountMismatch {
            left: a.samples(),
            right: b.samples(),
        });
    }
    let mut counts: BTreeMap<(SymbolKey, SymbolKey), u64> = BTreeMap::new();
    for j in 0..a.samples() {
        *counts.entry((a.key(j), b.key(j))).or_insert(0) += 1;
    }
    Ok(JointCounts {
        counts,
        total: a.samples() as u64,
    })
}

/// Mutual information in bits, `H(A) + H(B) - H(A,B)` from the empirical
/// marginals and joint. Tiny negative values from floating-point
/// cancellation clamp to 0.
pub fn mutual_information(joint: &JointCounts) -> f64 {
    let total = joint.total();
    let h_a = counts_entropy(joint.marginal_a().values(), total);
    let h_b = counts_entropy(joint.marginal_b().values(), total);
    let h_ab = counts_entropy(joint.counts.values(), total);
    let mi = h_a + h_b - h_ab;
    if mi < 0.0 {
        0.0
    } else {
        mi
    }
}

/// KL divergence in bits, `sum p log2(p/q)`. Requires `support(p)` to be a
/// subset of `support(q)`.
pub fn kl_divergence(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    let mut kl = 0.0;
    for (key, p_prob) in p.iter() {
        let q_prob = q.probability(key).ok_or(Error::AbsoluteContinuity)?;
        kl += p_prob * (p_prob / q_prob).log2();
    }
    Ok(kl.max(0.0))
}

/// The two KL terms of the feature-distribution objective and their
/// information-theoretic reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdlTerms {
    /// `KL(p(X,T) || p(X) p(T))`, identical to the mutual information.
    pub mi_xt_bits: f64,
    /// `KL(p(T) || uniform)` over all `bin_count^t_dims` cells, in closed
    /// form `log2(bin_count^t_dims) - H[T]`.
    pub kl_uniform_bits: f64,
    /// `H[T]`.
    pub entropy_t_bits: f64,
}

/// Evaluates both forms of the feature-distribution objective on binned
/// samples: the joint-vs-product KL (= mutual information), the divergence
/// of `p(T)` from the uniform reference, and the entropy of `p(T)`.
pub fn fdl_objective_terms(
    x_binned: &BinnedMatrix,
    t_binned: &BinnedMatrix,
    t_bin_count: usize,
    t_dims: usize,
) -> Result<FdlTerms> {
    let joint = joint_counts(x_binned, t_binned)?;
    let total = joint.total();

    // KL route for the first term: explicit joint distribution against the
    // product of the empirical marginals (whose support always covers the
    // joint support). Pair keys are flattened by concatenation; the x-key
    // length is fixed so the encoding is unambiguous.
    let p_joint = DiscreteDistribution::from_counts(
        joint
            .iter()
            .map(|((a, b), c)| (concat_keys(a, b), c))
            .collect::<Vec<_>>(),
    )?;
    let marginal_a = joint.marginal_a();
    let marginal_b = joint.marginal_b();
    let n = total as f64;
    let mut product = Vec::with_capacity(marginal_a.len() * marginal_b.len());
    for (a, &ca) in marginal_a.iter() {
        for (b, &cb) in marginal_b.iter() {
            product.push((concat_keys(a, b), (ca as f64 / n) * (cb as f64 / n)));
        }
    }
    // The product masses sum to 1 exactly up to rounding; renormalize the
    // tail error so the distribution invariant holds.
    let sum: f64 = product.iter().map(|(_, p)| *p).sum();
    let q_product =
        DiscreteDistribution::from_probabilities(product.into_iter().map(|(k, p)| (k, p / sum)))?;
    let mi_xt_bits = kl_divergence(&p_joint, &q_product)?;

    let p_t = empirical_distribution(t_binned)?;
    let entropy_t_bits = entropy(&p_t);
    let kl_uniform_bits = t_dims as f64 * (t_bin_count as f64).log2() - entropy_t_bits;

    Ok(FdlTerms {
        mi_xt_bits,
        kl_uniform_bits,
        entropy_t_bits,
    })
}

fn concat_keys(a: &SymbolKey, b: &SymbolKey) -> SymbolKey {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}
