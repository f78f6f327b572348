use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("embedding has zero length")]
    ZeroDim,
    #[error("embedding contains non-finite values")]
    NonFinite,
    #[error("embedding has zero norm and cannot be normalized")]
    ZeroNorm,
    #[error("embedding norm {0} is not 1 within 1e-6")]
    NotUnit(f64),
}

pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Unit-norm vector in a named embedding space. Cosine similarity between
/// two vectors of one space is their dot product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    space_id: String,
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// L2-normalizes `values`.
    pub fn normalized(space_id: impl Into<String>, mut values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::ZeroDim);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(EmbeddingError::ZeroNorm);
        }
        for v in &mut values {
            *v /= norm;
        }
        Ok(Self {
            space_id: space_id.into(),
            values,
        })
    }

    /// Accepts `values` only if already unit length.
    pub fn from_unit(space_id: impl Into<String>, values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::ZeroDim);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(EmbeddingError::NotUnit(norm));
        }
        Ok(Self {
            space_id: space_id.into(),
            values,
        })
    }

    pub fn space_id(&self) -> &str {
        &self.space_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_on_construction() {
        let v = EmbeddingVector::normalized("s", vec![3.0, 4.0]).unwrap();
        assert_eq!(v.values(), &[0.6, 0.8]);
        assert_eq!(v.dim(), 2);
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert_eq!(EmbeddingVector::normalized("s", vec![]), Err(EmbeddingError::ZeroDim));
        assert_eq!(EmbeddingVector::normalized("s", vec![0.0, 0.0]), Err(EmbeddingError::ZeroNorm));
        assert_eq!(EmbeddingVector::normalized("s", vec![f64::NAN]), Err(EmbeddingError::NonFinite));
        assert!(matches!(EmbeddingVector::from_unit("s", vec![1.0, 1.0]), Err(EmbeddingError::NotUnit(_))));
    }
}
