//! The sparse filtering transform and its objective.
//!
//! Data `X` (dimensions x samples) is mapped through
//! `T = l2col(l2row(sqrt((WX)^2 + eps)))`: the element-wise absolute value is
//! smoothed by `eps` so the objective stays differentiable at zero, rows are
//! l2-normalized, then columns are l2-normalized. The training objective is
//! the l1 norm of `T` (sum of all entries, all nonnegative), and the gradient
//! with respect to `W` is computed by reverse-mode chain rule through the two
//! normalizations and the smooth absolute value.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::datagen::RngSeed;
use crate::error::{Error, Result};

/// Default smoothing constant for the absolute value surrogate.
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Rows with l2 norm below this are treated as degenerate. Unreachable after
/// `soft_abs` (entries are at least sqrt(eps)), guarded anyway.
const NORM_FLOOR: f64 = 1e-300;

/// Input data, `dims x samples`. Columns are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
}

impl DataMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "data matrix must be at least 1x1, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        ensure_finite(&values, "data matrix")?;
        Ok(Self { values })
    }

    pub fn dims(&self) -> usize {
        self.values.nrows()
    }

    pub fn samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// Learned weights, `features x input dims`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    values: Array2<f64>,
}

impl WeightMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "weight matrix must be at least 1x1, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        ensure_finite(&values, "weight matrix")?;
        Ok(Self { values })
    }

    /// Rebuilds a `features x dims` matrix from a row-major flat vector.
    pub fn from_flat(features: usize, dims: usize, flat: &Array1<f64>) -> Result<Self> {
        if flat.len() != features * dims {
            return Err(Error::DimensionMismatch(format!(
                "flat length {} does not match {}x{}",
                flat.len(),
                features,
                dims
            )));
        }
        let values =
            Array2::from_shape_vec((features, dims), flat.to_vec()).expect("shape checked above");
        Self::new(values)
    }

    /// Row-major flattening, the inverse of [`WeightMatrix::from_flat`].
    pub fn to_flat(&self) -> Array1<f64> {
        Array1::from_iter(self.values.iter().copied())
    }

    pub fn features(&self) -> usize {
        self.values.nrows()
    }

    pub fn dims(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// The transformed representation, `features x samples`. Every entry lies in
/// `[0, 1]` and every column has unit l2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    values: Array2<f64>,
}

impl Representation {
    pub fn features(&self) -> usize {
        self.values.nrows()
    }

    pub fn samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// Objective value together with its gradient in `W`.
#[derive(Debug, Clone)]
pub struct ObjectiveEval {
    /// Sum of all entries of the representation (sum of column l1 norms).
    pub value: f64,
    /// Exact analytical derivative of `value` with respect to `W`.
    pub gradient: Array2<f64>,
}

fn ensure_finite(m: &Array2<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Smooth element-wise absolute value `sqrt(m^2 + epsilon)`.
pub fn soft_abs(m: &Array2<f64>, epsilon: f64) -> Result<Array2<f64>> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::Config(format!(
            "soft_abs epsilon must be positive, got {epsilon}"
        )));
    }
    ensure_finite(m, "soft_abs input")?;
    Ok(m.mapv(|v| (v * v + epsilon).sqrt()))
}

/// Divides every row by its l2 norm.
pub fn row_normalize(m: &Array2<f64>) -> Result<Array2<f64>> {
    let mut out = m.clone();
    for (index, mut row) in out.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm < NORM_FLOOR {
            return Err(Error::DegenerateRow { index });
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(out)
}

/// Divides every column by its l2 norm.
pub fn col_normalize(m: &Array2<f64>) -> Result<Array2<f64>> {
    let mut out = m.clone();
    for (index, mut col) in out.columns_mut().into_iter().enumerate() {
        let norm = col.dot(&col).sqrt();
        if norm < NORM_FLOOR {
            return Err(Error::DegenerateRow { index });
        }
        col.mapv_inplace(|v| v / norm);
    }
    Ok(out)
}

fn check_shapes(weights: &WeightMatrix, data: &DataMatrix) -> Result<()> {
    if weights.dims() != data.dims() {
        return Err(Error::DimensionMismatch(format!(
            "weights expect {} input dims, data has {}",
            weights.dims(),
            data.dims()
        )));
    }
    Ok(())
}

/// Applies the full transform `col_normalize(row_normalize(soft_abs(W X)))`.
pub fn sf_forward(
    weights: &WeightMatrix,
    data: &DataMatrix,
    epsilon: f64,
) -> Result<Representation> {
    check_shapes(weights, data)?;
    let activations = soft_abs(&weights.values().dot(data.values()), epsilon)?;
    let values = col_normalize(&row_normalize(&activations)?)?;
    Ok(Representation { values })
}

/// Evaluates the l1 objective and its analytical gradient in `W`.
///
/// Backward pass: with `Z = WX`, `A = sqrt(Z^2 + eps)`, `R` the row-normalized
/// `A` and `T` the column-normalized `R`, the upstream gradient of the sum is
/// all ones; normalizing a vector `v` to `u = v/|v|` pulls a gradient `g` back
/// as `(g - u (u.g)) / |v|`, applied per column and then per row, and the
/// smooth absolute value contributes the factor `Z / A`.
pub fn sf_objective_and_gradient(
    weights: &WeightMatrix,
    data: &DataMatrix,
    epsilon: f64,
) -> Result<ObjectiveEval> {
    check_shapes(weights, data)?;
    let x = data.values();
    let z = weights.values().dot(x);
    let a = soft_abs(&z, epsilon)?;

    let row_norms = a
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .collect::<Array1<f64>>();
    if row_norms.iter().any(|&n| n < NORM_FLOOR) {
        let index = row_norms.iter().position(|&n| n < NORM_FLOOR).unwrap();
        return Err(Error::DegenerateRow { index });
    }
    let r = &a / &row_norms.view().insert_axis(Axis(1));

    let col_norms = r
        .columns()
        .into_iter()
        .map(|c| c.dot(&c).sqrt())
        .collect::<Array1<f64>>();
    let t = &r / &col_norms.view().insert_axis(Axis(0));

    let value = t.sum();

    // d(sum)/dT = 1 everywhere; pull back through the column normalization.
    let col_dots = t.sum_axis(Axis(0)); // t_j . ones = column l1 norm
    let grad_r =
        (1.0 - &t * &col_dots.view().insert_axis(Axis(0))) / col_norms.view().insert_axis(Axis(0));

    // Through the row normalization.
    let row_dots = (&r * &grad_r).sum_axis(Axis(1));
    let grad_a = (&grad_r - &r * &row_dots.view().insert_axis(Axis(1)))
        / row_norms.view().insert_axis(Axis(1));

    // Through soft_abs: dA/dZ = Z / A.
    let grad_z = grad_a * &z / &a;

    let gradient = grad_z.dot(&x.t());
    Ok(ObjectiveEval { value, gradient })
}

/// Draws a `features x dims` weight matrix with i.i.d. standard normal
/// entries, filled row by row from the seeded generator.
pub fn init_weights(features: usize, dims: usize, seed: RngSeed) -> Result<WeightMatrix> {
    if features == 0 || dims == 0 {
        return Err(Error::Config(format!(
            "weight shape must be at least 1x1, got {features}x{dims}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    let values = Array2::from_shape_simple_fn((features, dims), || StandardNormal.sample(&mut rng));
    WeightMatrix::new(values)
}
