use crate::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConstraintError {
    #[error("constraint normal must have at least two components (got {0})")]
    TooShort(usize),
    #[error("constraint normal must be nonzero")]
    Zero,
    #[error("constraint normal component {index} is not finite")]
    NonFinite { index: usize },
    /// With both leading components positive, the constraint may only
    /// involve the first two coordinates.
    #[error("n has nonzero component {index} (0-based) while n[0] > 0 and n[1] > 0")]
    Structure { index: usize },
}

/// Normal vector `n` of the linear constraint `nᵀx < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintNormal<T>(Vec<T>);

impl<T: Scalar> ConstraintNormal<T> {
    pub fn new(components: Vec<T>) -> Result<Self, ConstraintError> {
        Self::violations(&components).into_iter().next().map_or(Ok(Self(components)), Err)
    }

    /// Every rule the components break, in a stable order.
    pub fn violations(components: &[T]) -> Vec<ConstraintError> {
        let mut out = Vec::new();
        if components.len() < 2 {
            out.push(ConstraintError::TooShort(components.len()));
        }
        for (index, c) in components.iter().enumerate() {
            if !c.is_finite() {
                out.push(ConstraintError::NonFinite { index });
            }
        }
        if components.iter().all(|c| *c == T::zero()) {
            out.push(ConstraintError::Zero);
        }
        if components.len() >= 3 && components[0] > T::zero() && components[1] > T::zero() {
            for (index, c) in components.iter().enumerate().skip(2) {
                if *c != T::zero() {
                    out.push(ConstraintError::Structure { index });
                }
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[T] {
        &self.0
    }

    pub fn dot(&self, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.0.len());
        self.0.iter().zip(x).fold(T::zero(), |acc, (a, b)| acc + *a * *b)
    }

    /// `(n₁, n₂)` when no later component is active.
    pub fn planar(&self) -> Option<[T; 2]> {
        if self.0[2..].iter().all(|c| *c == T::zero()) {
            Some([self.0[0], self.0[1]])
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structure_rule() {
        assert_eq!(ConstraintNormal::new(vec![1.0, 1.0, 1.0]), Err(ConstraintError::Structure { index: 2 }));
        assert!(ConstraintNormal::new(vec![1.0, 0.0, 1.0]).is_ok());
        assert!(ConstraintNormal::new(vec![0.6, 0.8, 0.0]).is_ok());
        assert_eq!(ConstraintNormal::<f64>::new(vec![0.0, 0.0]), Err(ConstraintError::Zero));
        assert_eq!(ConstraintNormal::new(vec![1.0]), Err(ConstraintError::TooShort(1)));
        assert_eq!(ConstraintNormal::<f64>::violations(&[1.0, 2.0, 3.0, 4.0]).len(), 2);
    }

    #[test]
    fn planar_projection() {
        let n = ConstraintNormal::new(vec![0.6, 0.8, 0.0]).unwrap();
        assert_eq!(n.planar(), Some([0.6, 0.8]));
        assert_eq!(n.dot(&[1.0, 1.0, 5.0]), 1.4);
        assert_eq!(ConstraintNormal::new(vec![1.0, 0.0, 2.0]).unwrap().planar(), None);
    }
}
