use crate::error::{invalid, Result};

/// A named, shaped tensor of real-valued weights stored flat in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl WeightTensor {
    /// Builds a tensor, checking that the shape matches the value count and
    /// that every value is finite.
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(invalid(format!(
                "shape {:?} holds {} elements but {} values were given",
                shape,
                expected,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("value at index {i} is not finite")));
        }
        Ok(Self {
            name: name.into(),
            shape,
            values,
        })
    }

    /// A rank-1 tensor over `values`.
    pub fn from_vec(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(name, vec![n], values)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Same name and shape, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.name.clone(), self.shape.clone(), values)
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Number of distinct values (bitwise on the f64 representation after
    /// folding `-0.0` into `0.0`).
    pub fn distinct_count(&self) -> usize {
        distinct_count(&self.values)
    }
}

pub(crate) fn distinct_count(values: &[f64]) -> usize {
    let mut sorted: Vec<f64> = values.iter().map(|v| v + 0.0).collect();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    sorted.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_shape_mismatch() {
        assert!(WeightTensor::new("w", vec![2, 3], vec![0.0; 5]).is_err());
        assert!(WeightTensor::new("w", vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(WeightTensor::from_vec("w", vec![1.0, f64::NAN]).is_err());
        assert!(WeightTensor::from_vec("w", vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn distinct_folds_signed_zero() {
        let t = WeightTensor::from_vec("w", vec![0.0, -0.0, 1.0, 1.0]).unwrap();
        assert_eq!(t.distinct_count(), 2);
    }
}
