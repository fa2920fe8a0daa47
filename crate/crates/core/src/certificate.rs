use crate::types::DiscreteDistribution;

/// Which comparator branch attains the regret in one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Comparator `β ≤ θ`.
    Left,
    /// Comparator `β ≥ θ`.
    Right,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegretStatus {
    Optimal,
    /// Value of a feasible point found by local search; a lower bound.
    LocalOnly,
    BoundPair { lower: f64, upper: f64 },
}

/// Regret value with the comparator and worst-case distributions attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretCertificate {
    pub value: f64,
    pub beta_star: Vec<f64>,
    pub side: Option<Side>,
    pub worst_case: Vec<DiscreteDistribution>,
    pub lambda: f64,
    pub status: RegretStatus,
    /// A subgradient of `θ ↦ R(θ)` at the evaluated decision.
    pub subgradient: Vec<f64>,
}

impl RegretCertificate {
    /// Midpoint for bound pairs, the value otherwise.
    pub fn estimate(&self) -> f64 {
        match self.status {
            RegretStatus::BoundPair { lower, upper } if upper.is_finite() => 0.5 * (lower + upper),
            _ => self.value,
        }
    }
}
