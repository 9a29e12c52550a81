use super::{NnError, PwDRecNetGrads, PwDRecNetParams};

pub const DEFAULT_RHO: f64 = 0.9;
pub const DEFAULT_EPS: f64 = 1e-8;
pub const DEFAULT_LR: f64 = 1e-3;

/// Running mean of squared gradients, one entry per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RmspropState {
    pub v: Vec<f64>,
    pub rho: f64,
    pub eps: f64,
    pub lr: f64,
}

impl RmspropState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            v: vec![0.0; n_params],
            rho: DEFAULT_RHO,
            eps: DEFAULT_EPS,
            lr,
        }
    }

    pub fn for_params(params: &PwDRecNetParams, lr: f64) -> Self {
        Self::new(params.n_params(), lr)
    }

    /// One update over flat slices: `v <- rho v + (1 - rho) g^2`,
    /// `p <- p - lr g / (sqrt(v) + eps)`.
    pub fn step_slice(&mut self, offset: usize, params: &mut [f64], grads: &[f64]) {
        let v = &mut self.v[offset..offset + params.len()];
        for ((p, &g), v) in params.iter_mut().zip(grads).zip(v) {
            *v = self.rho * *v + (1.0 - self.rho) * g * g;
            *p -= self.lr * g / (v.sqrt() + self.eps);
        }
    }
}

pub fn rmsprop_step(
    params: &mut PwDRecNetParams,
    grads: &PwDRecNetGrads,
    state: &mut RmspropState,
) -> Result<(), NnError> {
    if state.v.len() != params.n_params() || grads.convs.len() != params.n_specs() {
        return Err(NnError::ShapeMismatch("optimizer state does not match parameters".into()));
    }
    if !(state.rho > 0.0 && state.rho < 1.0) {
        return Err(NnError::InvalidConfig(format!("rho {}", state.rho)));
    }
    let mut offset = 0;
    for (spec, g) in params.specs_mut().zip(&grads.convs) {
        if g.weights.len() != spec.weights.len() || g.bias.len() != spec.bias.len() {
            return Err(NnError::ShapeMismatch("gradient does not match convolution".into()));
        }
        state.step_slice(offset, &mut spec.weights, &g.weights);
        offset += spec.weights.len();
        state.step_slice(offset, &mut spec.bias, &g.bias);
        offset += spec.bias.len();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = RmspropState::new(3, DEFAULT_LR);
        let mut p = vec![1.0, -2.0, 0.5];
        s.step_slice(0, &mut p, &[0.0; 3]);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(s.v, vec![0.0; 3]);
    }

    #[test]
    fn first_step_by_hand() {
        let mut s = RmspropState::new(1, 1e-3);
        let mut p = vec![0.0];
        s.step_slice(0, &mut p, &[2.0]);
        assert!((s.v[0] - 0.4).abs() < 1e-12);
        let expected = -1e-3 * 2.0 / (0.4f64.sqrt() + 1e-8);
        assert!((p[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let mut s = RmspropState::new(1, 1e-3);
        let mut p = vec![0.0];
        let mut last = 0.0;
        for _ in 0..400 {
            let before = p[0];
            s.step_slice(0, &mut p, &[3.0]);
            last = before - p[0];
        }
        // v -> g^2 so the step -> lr * g / |g|
        assert!((s.v[0] - 9.0).abs() < 1e-9);
        assert!((last - 1e-3).abs() < 1e-9);
    }
}
