use crate::error::{Channel, DsaError, Result};

/// A two-level spin state given either by real amplitudes or by populations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpinState {
    Amplitudes { up: f64, down: f64 },
    Weights { up: f64, down: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeakValueMode {
    /// Pure states: `M2 = (αa + βb)²`.
    Quantum,
    /// Mixed states: `M2 = α²a² + β²b²`.
    Classical,
}

const NORM_TOL: f64 = 1e-9;

impl SpinState {
    fn weights(&self, key: &str) -> Result<(f64, f64)> {
        let (up, down) = match *self {
            SpinState::Amplitudes { up, down } => (up * up, down * down),
            SpinState::Weights { up, down } => (up, down),
        };
        for w in [up, down] {
            if !(0.0..=1.0).contains(&w) {
                return Err(DsaError::invalid(key, format!("weight {w} is outside [0, 1]")));
            }
        }
        if ((up + down) - 1.0).abs() > NORM_TOL {
            return Err(DsaError::invalid(key, format!("weights sum to {}, not 1", up + down)));
        }
        Ok((up, down))
    }

    fn amplitudes(&self, key: &str) -> Result<(f64, f64)> {
        match *self {
            SpinState::Amplitudes { up, down } => {
                if !(up.is_finite() && down.is_finite()) {
                    return Err(DsaError::invalid(key, "amplitudes must be finite"));
                }
                if (up * up + down * down - 1.0).abs() > NORM_TOL {
                    return Err(DsaError::invalid(key, "amplitudes are not normalized"));
                }
                Ok((up, down))
            }
            SpinState::Weights { .. } => Err(DsaError::invalid(
                key,
                "quantum weak values need signed amplitudes, not populations",
            )),
        }
    }
}

/// Weak value `M1/M2` of `σ_z` with `M1 = α²a² − β²b²`.
///
/// In classical mode the result is a convex combination of ±1 and never leaves
/// `[−1, 1]`; it is undefined only when nothing is accepted (`α²a² = β²b² = 0`).
pub fn weak_value(pre: SpinState, post: SpinState, mode: WeakValueMode) -> Result<f64> {
    match mode {
        WeakValueMode::Quantum => {
            let (alpha, beta) = pre.amplitudes("pre")?;
            let (a, b) = post.amplitudes("post")?;
            let overlap = alpha * a + beta * b;
            if overlap == 0.0 {
                return Err(DsaError::SingularWeakValue);
            }
            let m1 = alpha * alpha * a * a - beta * beta * b * b;
            let value = m1 / (overlap * overlap);
            if !value.is_finite() {
                return Err(DsaError::SingularWeakValue);
            }
            Ok(value)
        }
        WeakValueMode::Classical => {
            let (alpha2, beta2) = pre.weights("pre")?;
            let (a2, b2) = post.weights("post")?;
            let up = alpha2 * a2;
            let down = beta2 * b2;
            let m2 = up + down;
            if m2 == 0.0 {
                return Err(DsaError::DegeneratePostselection { channel: Channel::Psa });
            }
            Ok((up - down) / m2)
        }
    }
}
