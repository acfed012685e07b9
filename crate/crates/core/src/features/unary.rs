use crate::error::{Error, Result};

/// Elementwise squared difference of two descriptors.
pub fn phi0(s: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    if s.len() != u.len() {
        return Err(Error::DimensionMismatch {
            expected: s.len(),
            found: u.len(),
        });
    }
    Ok(s.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).collect())
}

/// `<theta0, phi0(s, u)>` without materialising the feature vector.
pub fn collapse_unary(theta0: &[f64], s: &[f64], u: &[f64]) -> Result<f64> {
    if theta0.len() != s.len() {
        return Err(Error::DimensionMismatch {
            expected: theta0.len(),
            found: s.len(),
        });
    }
    if s.len() != u.len() {
        return Err(Error::DimensionMismatch {
            expected: s.len(),
            found: u.len(),
        });
    }
    Ok(theta0
        .iter()
        .zip(s.iter().zip(u))
        .map(|(w, (a, b))| w * (a - b) * (a - b))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi0_examples() {
        assert_eq!(phi0(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(phi0(&[1.0, 2.0], &[0.0, 4.0]).unwrap(), vec![1.0, 4.0]);
        assert!(phi0(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn collapse_examples() {
        assert_eq!(collapse_unary(&[0.0, 0.0], &[1.0, 2.0], &[0.0, 4.0]).unwrap(), 0.0);
        assert_eq!(collapse_unary(&[1.0, 1.0], &[1.0, 2.0], &[0.0, 4.0]).unwrap(), 5.0);
        assert!(collapse_unary(&[1.0], &[1.0, 2.0], &[0.0, 4.0]).is_err());
    }
}
