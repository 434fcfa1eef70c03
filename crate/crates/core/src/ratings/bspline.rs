//! Least-squares B-spline smoothing on the per-second grid.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::RatingsError;

/// B-spline basis of a given order (degree + 1) with uniformly spaced
/// breakpoints over `[0, T]`.
#[derive(Debug, Clone)]
pub struct BSplineBasis {
    order: usize,
    knots: Vec<f64>,
}

impl BSplineBasis {
    /// Breakpoints at every multiple of `spacing` below `t_end`, plus `t_end`.
    pub fn uniform(t_end: f64, order: usize, spacing: f64) -> Result<BSplineBasis, RatingsError> {
        if order == 0 {
            return Err(RatingsError::InvalidSpline(
                "order must be at least 1".into(),
            ));
        }
        if spacing.is_nan() || t_end.is_nan() || spacing <= 0.0 || t_end <= 0.0 {
            return Err(RatingsError::InvalidSpline(format!(
                "need positive knot spacing and span, got spacing {spacing}, span {t_end}"
            )));
        }
        let mut knots = vec![0.0; order];
        let mut b = spacing;
        while b < t_end - 1e-9 * spacing {
            knots.push(b);
            b += spacing;
        }
        knots.extend(std::iter::repeat_n(t_end, order));
        Ok(BSplineBasis { order, knots })
    }

    pub fn len(&self) -> usize {
        self.knots.len() - self.order
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn interior_knots(&self) -> usize {
        self.knots.len() - 2 * self.order
    }

    /// Index of the first nonzero basis function at `x` and the `order`
    /// nonzero values (Cox–de Boor).
    pub fn eval(&self, x: f64) -> (usize, Vec<f64>) {
        let k = self.order;
        let n = self.len();
        let hi = self.knots[n];
        let x = x.clamp(self.knots[k - 1], hi);
        // span: knots[span] <= x < knots[span + 1], last span closed at the end
        let span = if x >= hi {
            n - 1
        } else {
            let upper = self.knots.partition_point(|&kn| kn <= x);
            (upper - 1).clamp(k - 1, n - 1)
        };
        let mut values = vec![0.0; k];
        let mut left = vec![0.0; k];
        let mut right = vec![0.0; k];
        values[0] = 1.0;
        for j in 1..k {
            left[j] = x - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { values[r] / denom };
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        (span + 1 - k, values)
    }
}

/// Projects curves sampled at `0, 1, ..., T` onto a B-spline space.
///
/// The normal matrix is factored once and reused for every curve.
#[derive(Debug, Clone)]
pub struct Smoother {
    basis: BSplineBasis,
    rows: Vec<(usize, Vec<f64>)>,
    chol: Cholesky<f64, Dyn>,
}

impl Smoother {
    pub fn new(
        grid_len: usize,
        order: usize,
        knot_spacing_s: usize,
    ) -> Result<Smoother, RatingsError> {
        if grid_len < 2 {
            return Err(RatingsError::TooFewSamples {
                samples: grid_len,
                required: 2,
            });
        }
        let t_end = (grid_len - 1) as f64;
        let basis = BSplineBasis::uniform(t_end, order, knot_spacing_s as f64)?;
        let required = order + basis.interior_knots();
        if grid_len < required {
            return Err(RatingsError::TooFewSamples {
                samples: grid_len,
                required,
            });
        }
        let nb = basis.len();
        let rows: Vec<(usize, Vec<f64>)> = (0..grid_len).map(|t| basis.eval(t as f64)).collect();
        let mut gram = DMatrix::zeros(nb, nb);
        for (first, vals) in &rows {
            for (a, va) in vals.iter().enumerate() {
                for (b, vb) in vals.iter().enumerate() {
                    gram[(first + a, first + b)] += va * vb;
                }
            }
        }
        let chol = Cholesky::new(gram).ok_or_else(|| {
            RatingsError::InvalidSpline("basis is not identifiable on this grid".into())
        })?;
        Ok(Smoother { basis, rows, chol })
    }

    pub fn basis(&self) -> &BSplineBasis {
        &self.basis
    }

    /// Least-squares spline coefficients for `values`.
    pub fn coefficients(&self, values: &[f64]) -> Result<DVector<f64>, RatingsError> {
        if values.len() != self.rows.len() {
            return Err(RatingsError::GridMismatch {
                expected: self.rows.len(),
                found: values.len(),
            });
        }
        let mut rhs = DVector::zeros(self.basis.len());
        for ((first, vals), y) in self.rows.iter().zip(values) {
            for (a, va) in vals.iter().enumerate() {
                rhs[first + a] += va * y;
            }
        }
        Ok(self.chol.solve(&rhs))
    }

    /// Evaluates a coefficient vector back on the grid.
    pub fn evaluate(&self, coef: &DVector<f64>) -> Vec<f64> {
        self.rows
            .iter()
            .map(|(first, vals)| {
                vals.iter()
                    .enumerate()
                    .map(|(a, v)| v * coef[first + a])
                    .sum()
            })
            .collect()
    }

    pub fn smooth(&self, values: &[f64]) -> Result<Vec<f64>, RatingsError> {
        Ok(self.evaluate(&self.coefficients(values)?))
    }
}
