use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("empty input")]
    Empty,
    #[error("non-finite input")]
    NonFinite,
    #[error("beta must be positive, got {0}")]
    NonPositiveBeta(f64),
}

/// Negative log-likelihood of refined responses: the mean over examples of
/// minus the summed token log-probabilities.
pub fn sft_loss(sequences: &[Vec<f64>]) -> Result<f64, LossError> {
    if sequences.is_empty() || sequences.iter().any(Vec::is_empty) {
        return Err(LossError::Empty);
    }
    let mut total = 0.0;
    for seq in sequences {
        let mut s = 0.0;
        for &lp in seq {
            if !lp.is_finite() {
                return Err(LossError::NonFinite);
            }
            s += lp;
        }
        total += s;
    }
    Ok(-total / sequences.len() as f64)
}

/// Sequence log-probabilities of the preferred and dispreferred responses
/// under the policy and the frozen reference model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpoInputs {
    pub policy_preferred: f64,
    pub reference_preferred: f64,
    pub policy_dispreferred: f64,
    pub reference_dispreferred: f64,
    pub beta: f64,
}

impl DpoInputs {
    fn check(&self) -> Result<(), LossError> {
        let xs = [
            self.policy_preferred,
            self.reference_preferred,
            self.policy_dispreferred,
            self.reference_dispreferred,
            self.beta,
        ];
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(LossError::NonFinite);
        }
        if self.beta <= 0.0 {
            return Err(LossError::NonPositiveBeta(self.beta));
        }
        Ok(())
    }
}

/// Preferred log-ratio minus dispreferred log-ratio.
pub fn dpo_margin(x: &DpoInputs) -> f64 {
    (x.policy_preferred - x.reference_preferred) - (x.policy_dispreferred - x.reference_dispreferred)
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln sigmoid(beta * margin)`.
pub fn dpo_loss(x: &DpoInputs) -> Result<f64, LossError> {
    x.check()?;
    Ok(softplus(-x.beta * dpo_margin(x)))
}

/// Partial derivatives of [`dpo_loss`] with respect to the four log-probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpoGradient {
    pub policy_preferred: f64,
    pub reference_preferred: f64,
    pub policy_dispreferred: f64,
    pub reference_dispreferred: f64,
}

pub fn dpo_gradient(x: &DpoInputs) -> Result<DpoGradient, LossError> {
    x.check()?;
    let g = -x.beta * sigmoid(-x.beta * dpo_margin(x));
    Ok(DpoGradient {
        policy_preferred: g,
        reference_preferred: -g,
        policy_dispreferred: -g,
        reference_dispreferred: g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(margin: f64, beta: f64) -> DpoInputs {
        DpoInputs {
            policy_preferred: margin,
            reference_preferred: 0.0,
            policy_dispreferred: 0.0,
            reference_dispreferred: 0.0,
            beta,
        }
    }

    #[test]
    fn sft_examples() {
        assert_eq!(sft_loss(&[vec![0.0]]).unwrap(), 0.0);
        assert_eq!(sft_loss(&[vec![-1.0, -1.0]]).unwrap(), 2.0);
        assert_eq!(sft_loss(&[vec![-1.0], vec![-3.0, -1.0]]).unwrap(), 2.5);
        assert_eq!(sft_loss(&[]), Err(LossError::Empty));
        assert_eq!(sft_loss(&[vec![f64::NAN]]), Err(LossError::NonFinite));
    }

    #[test]
    fn dpo_examples() {
        let eq = DpoInputs {
            policy_preferred: -3.0,
            reference_preferred: -3.0,
            policy_dispreferred: -3.0,
            reference_dispreferred: -3.0,
            beta: 0.1,
        };
        assert!((dpo_loss(&eq).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let oracle = -(1.0 / (1.0 + (-2.0f64).exp())).ln();
        assert!((dpo_loss(&inputs(2.0, 1.0)).unwrap() - oracle).abs() < 1e-12);
        assert!((oracle - 0.126928).abs() < 1e-6);
        assert_eq!(dpo_loss(&inputs(1.0, 2.0)).unwrap(), dpo_loss(&inputs(2.0, 1.0)).unwrap());
        assert!(matches!(dpo_loss(&inputs(1.0, 0.0)), Err(LossError::NonPositiveBeta(_))));
        assert_eq!(dpo_loss(&inputs(f64::INFINITY, 1.0)), Err(LossError::NonFinite));
    }

    #[test]
    fn extreme_margins_stay_finite() {
        assert!(dpo_loss(&inputs(1e6, 1.0)).unwrap() >= 0.0);
        assert!((dpo_loss(&inputs(-1e6, 1.0)).unwrap() - 1e6).abs() < 1e-6);
    }
}
