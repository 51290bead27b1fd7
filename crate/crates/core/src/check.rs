use crate::scalar::Scalar;

/// Outcome of a numeric inequality `lesser <= greater`, accepted with absolute slack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inequality<T> {
    pub lesser: T,
    pub greater: T,
    pub slack: T,
}

impl<T: Scalar> Inequality<T> {
    pub fn new(lesser: T, greater: T) -> Self {
        Self {
            lesser,
            greater,
            slack: T::CHECK_SLACK,
        }
    }

    pub fn holds(&self) -> bool {
        self.lesser <= self.greater + self.slack
    }

    /// `greater - lesser`; negative when the inequality is violated before slack.
    pub fn margin(&self) -> T {
        self.greater - self.lesser
    }
}
