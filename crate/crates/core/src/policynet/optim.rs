use std::fmt;
use std::str::FromStr;

use super::{GradientBuffer, PolicyNetwork};
use crate::error::{Error, Result};

/// Adam state. Updates ascend: the buffer holds an estimate of the gradient
/// of the expected return, not of a loss.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(num_params: usize, learning_rate: f64) -> Self {
        OptimizerState {
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Applies one bias-corrected Adam ascent step using `buf.accum` as the
/// gradient, then clears the buffer.
///
/// Any averaging over batch items must already have been applied to `buf`.
pub fn optimizer_step(
    net: &mut PolicyNetwork,
    buf: &mut GradientBuffer,
    st: &mut OptimizerState,
) -> Result<()> {
    let n = net.num_params();
    if buf.accum.len() != n || st.first_moment.len() != n || st.second_moment.len() != n {
        return Err(Error::invalid(
            "gradient buffer, optimizer state and network sizes differ",
        ));
    }
    if let Some(i) = buf.accum.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!(
            "gradient entry {i} is {}",
            buf.accum[i]
        )));
    }
    st.step_count += 1;
    let t = st.step_count as i32;
    let bc1 = 1.0 - st.beta1.powi(t);
    let bc2 = 1.0 - st.beta2.powi(t);
    let params = net.params_mut();
    for (k, &g) in buf.accum.iter().enumerate() {
        let m = st.beta1 * st.first_moment[k] + (1.0 - st.beta1) * g;
        let v = st.beta2 * st.second_moment[k] + (1.0 - st.beta2) * g * g;
        st.first_moment[k] = m;
        st.second_moment[k] = v;
        params[k] += st.learning_rate * (m / bc1) / ((v / bc2).sqrt() + st.epsilon);
    }
    buf.reset();
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LrSchedule {
    /// Divide by 10 once, at the start of epoch 41.
    Greedy,
    /// Halve at the start of epochs 11, 21, 31 and 41 (total factor 16).
    NonGreedy,
}

impl fmt::Display for LrSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LrSchedule::Greedy => "greedy_schedule",
            LrSchedule::NonGreedy => "nongreedy_schedule",
        })
    }
}

impl FromStr for LrSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy_schedule" | "greedy" => Ok(LrSchedule::Greedy),
            "nongreedy_schedule" | "nongreedy" => Ok(LrSchedule::NonGreedy),
            other => Err(Error::invalid(format!("unknown schedule `{other}`"))),
        }
    }
}

/// Adjusts the learning rate at the start of `epoch` (1-based).
pub fn decay_learning_rate(st: &mut OptimizerState, schedule: LrSchedule, epoch: usize) {
    match schedule {
        LrSchedule::Greedy if epoch == 41 => st.learning_rate /= 10.0,
        LrSchedule::NonGreedy if matches!(epoch, 11 | 21 | 31 | 41) => st.learning_rate /= 2.0,
        _ => {}
    }
}
