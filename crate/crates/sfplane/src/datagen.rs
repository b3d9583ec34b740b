//! Seeded synthetic data for the four simulations.
//!
//! All randomness flows from a single 64-bit seed. Substreams (distribution
//! parameters, train samples, test samples, weight initialization) are
//! derived with a splitmix64 mixer and fed to ChaCha8 generators, so every
//! dataset is a pure function of `(sim_id, seed)` and reproducible across
//! platforms. Normal variates come from the ziggurat sampler of the
//! `rand_distr` crate.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sf::DataMatrix;

/// Substream salts. Documented in the README; changing them changes every
/// generated dataset.
pub mod stream {
    pub const DIST_MEAN: u64 = 0xD1;
    pub const DIST_COV: u64 = 0xD2;
    pub const TRAIN: u64 = 0xD3;
    pub const TEST: u64 = 0xD4;
    pub const WEIGHTS: u64 = 0xD5;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A 64-bit seed that fully determines all downstream randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// Derives an independent substream seed: `splitmix64(seed ^ splitmix64(salt))`.
    pub fn derive(self, salt: u64) -> RngSeed {
        RngSeed(splitmix64(self.0 ^ splitmix64(salt)))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// Mean and covariance of a multivariate Gaussian. The covariance must be
/// symmetric and positive definite.
#[derive(Debug, Clone)]
pub struct MvnSpec {
    mean: Array1<f64>,
    cholesky_lower: Array2<f64>,
    covariance: Array2<f64>,
}

impl MvnSpec {
    pub fn new(mean: Array1<f64>, covariance: Array2<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "covariance {}x{} does not match mean length {}",
                covariance.nrows(),
                covariance.ncols(),
                d
            )));
        }
        for i in 0..d {
            for j in 0..i {
                if (covariance[[i, j]] - covariance[[j, i]]).abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "covariance is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let cholesky_lower = cholesky(&covariance)?;
        Ok(Self {
            mean,
            cholesky_lower,
            covariance,
        })
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }
}

/// Train/test pair drawn independently from one distribution.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: DataMatrix,
    pub test: DataMatrix,
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::NotPositiveDefinite);
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Samples a `dims x n` matrix of i.i.d. `N(0, sigma^2)` entries, filled one
/// sample (column) at a time.
pub fn sample_isotropic_gaussian(
    dims: usize,
    sigma: f64,
    n: usize,
    seed: RngSeed,
) -> Result<DataMatrix> {
    if dims == 0 || n == 0 {
        return Err(Error::Config(format!(
            "requested an empty sample: dims={dims}, n={n}"
        )));
    }
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::Config(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let mut rng = seed.rng();
    let mut values = Array2::zeros((dims, n));
    for j in 0..n {
        for i in 0..dims {
            let z: f64 = StandardNormal.sample(&mut rng);
            values[[i, j]] = sigma * z;
        }
    }
    DataMatrix::new(values)
}

/// Random symmetric positive-definite matrix `M^T M / d + 0.1 I` with `M`
/// standard normal. The ridge keeps the smallest eigenvalue at 0.1 or above.
pub fn random_spd(dims: usize, seed: RngSeed) -> Result<Array2<f64>> {
    if dims == 0 {
        return Err(Error::Config("spd dimension must be at least 1".into()));
    }
    let mut rng = seed.rng();
    let m = Array2::from_shape_simple_fn((dims, dims), || StandardNormal.sample(&mut rng));
    let mut sigma = m.t().dot(&m) / dims as f64;
    // Symmetrize exactly: t().dot() can differ from its transpose in the
    // last ulp.
    for i in 0..dims {
        for j in 0..i {
            let v = 0.5 * (sigma[[i, j]] + sigma[[j, i]]);
            sigma[[i, j]] = v;
            sigma[[j, i]] = v;
        }
        sigma[[i, i]] += 0.1;
    }
    Ok(sigma)
}

/// Samples `n` columns `mean + L z` with `z` i.i.d. standard normal and `L`
/// the lower Cholesky factor of the covariance.
pub fn sample_mvn(spec: &MvnSpec, n: usize, seed: RngSeed) -> Result<DataMatrix> {
    if n == 0 {
        return Err(Error::Config("requested an empty sample".into()));
    }
    let d = spec.dims();
    let mut rng = seed.rng();
    let mut values = Array2::zeros((d, n));
    let mut z = Array1::zeros(d);
    for j in 0..n {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        let x = spec.mean() + &spec.cholesky_lower.dot(&z);
        values.column_mut(j).assign(&x);
    }
    DataMatrix::new(values)
}

pub const TRAIN_SAMPLES: usize = 900;
pub const TEST_SAMPLES: usize = 100;

/// Builds the dataset for one simulation and returns it with the input and
/// output dimensionalities:
///
/// 1. 2D isotropic Gaussian (sigma 0.5) mapped to 2 features;
/// 2. 4D Gaussian with uniform(-5, 5) mean and random SPD covariance, to 2;
/// 3. the same 4D generator, to 8;
/// 4. a 10D Gaussian of the same family, to 4.
///
/// Train and test (900/100 samples) come from disjoint substreams of `seed`,
/// and the distribution parameters are resampled per call.
pub fn make_simulation_data(sim_id: u8, seed: RngSeed) -> Result<(Dataset, usize, usize)> {
    let (input_dim, output_dim) = simulation_dims(sim_id)?;
    let train_seed = seed.derive(stream::TRAIN);
    let test_seed = seed.derive(stream::TEST);
    let dataset = if sim_id == 1 {
        Dataset {
            train: sample_isotropic_gaussian(input_dim, 0.5, TRAIN_SAMPLES, train_seed)?,
            test: sample_isotropic_gaussian(input_dim, 0.5, TEST_SAMPLES, test_seed)?,
        }
    } else {
        let mut mean_rng = seed.derive(stream::DIST_MEAN).rng();
        let uniform = Uniform::new(-5.0, 5.0).expect("valid range");
        let mean = Array1::from_shape_simple_fn(input_dim, || uniform.sample(&mut mean_rng));
        let covariance = random_spd(input_dim, seed.derive(stream::DIST_COV))?;
        let spec = MvnSpec::new(mean, covariance)?;
        Dataset {
            train: sample_mvn(&spec, TRAIN_SAMPLES, train_seed)?,
            test: sample_mvn(&spec, TEST_SAMPLES, test_seed)?,
        }
    };
    Ok((dataset, input_dim, output_dim))
}

/// Input/output dimensions of a simulation, or a config error for an unknown id.
pub fn simulation_dims(sim_id: u8) -> Result<(usize, usize)> {
    match sim_id {
        1 => Ok((2, 2)),
        2 => Ok((4, 2)),
        3 => Ok((4, 8)),
        4 => Ok((10, 4)),
        other => Err(Error::Config(format!(
            "unknown simulation id {other}, valid ids are 1, 2, 3, 4"
        ))),
    }
}

/// Writes samples as CSV, one sample per line, header `dim_0,...,dim_{d-1}`.
pub fn write_samples_csv(data: &DataMatrix, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    let header: Vec<String> = (0..data.dims()).map(|i| format!("dim_{i}")).collect();
    writeln!(out, "{}", header.join(",")).map_err(io_err)?;
    for col in data.values().columns() {
        let row: Vec<String> = col.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", row.join(",")).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Reads the [`write_samples_csv`] format back into a `dims x samples` matrix.
pub fn read_samples_csv(path: &Path) -> Result<DataMatrix> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{}: empty file", path.display())))?
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let dims = header.split(',').count();
    let mut samples: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dims {
            return Err(Error::Parse(format!(
                "{}: line {} has {} fields, expected {}",
                path.display(),
                lineno + 2,
                fields.len(),
                dims
            )));
        }
        for field in fields {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Parse(format!(
                    "{}: line {}: not a number: {field:?}",
                    path.display(),
                    lineno + 2
                ))
            })?;
            samples.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Parse(format!(
            "{}: no samples after the header",
            path.display()
        )));
    }
    // File rows are samples; transpose into dims x samples.
    let by_rows = Array2::from_shape_vec((n, dims), samples).expect("counted above");
    DataMatrix::new(by_rows.t().to_owned())
}
