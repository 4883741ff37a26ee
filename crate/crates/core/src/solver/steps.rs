use super::SolverError;

/// Step sizes `c` (dual proximal-gradient step) and `γ` (multiplier step and
/// consensus penalty weight). Convergence needs `1/c ≥ h + γ τ̄(MᵀM)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub c: f64,
    pub gamma: f64,
}

fn check_positive(name: &str, v: f64) -> Result<(), SolverError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SolverError::Precondition(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// Whether `1/c ≥ h + γτ` holds. The boundary itself is accepted: `c = fl(1/(h + γτ))`
/// passes even when `1/c` rounds to just below the bound.
///
/// `h` must be positive (every finite `σ_i` yields `h_i > 0`); `τ` may be zero for a
/// single-agent graph.
pub fn validate_step_sizes(h: f64, tau: f64, c: f64, gamma: f64) -> Result<bool, SolverError> {
    check_positive("h", h)?;
    check_positive("c", c)?;
    check_positive("gamma", gamma)?;
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(SolverError::Precondition(format!(
            "spectral radius must be non-negative, got {tau}"
        )));
    }
    let bound = h + gamma * tau;
    Ok(1.0 / c >= bound || c <= 1.0 / bound)
}

/// `c = 1/(h + γτ)`, exactly on the boundary of the step-size condition.
pub fn suggest_step_sizes(h: f64, tau: f64, gamma: f64) -> Result<StepSizes, SolverError> {
    check_positive("h", h)?;
    check_positive("gamma", gamma)?;
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(SolverError::Precondition(format!(
            "spectral radius must be non-negative, got {tau}"
        )));
    }
    Ok(StepSizes {
        c: 1.0 / (h + gamma * tau),
        gamma,
    })
}

impl StepSizes {
    pub fn validate(&self, h: f64, tau: f64) -> Result<(), SolverError> {
        if validate_step_sizes(h, tau, self.c, self.gamma)? {
            Ok(())
        } else {
            Err(SolverError::StepSizeRejected {
                inv_c: 1.0 / self.c,
                bound: h + self.gamma * tau,
            })
        }
    }
}
