//! Time-based Average Lagging and the latency-regularized objective.

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::stream::Trace;
use crate::time::Millis;

/// Exact millisecond value produced by the lagging metric.
pub type Lag = Ratio<i128>;

pub fn lag_to_f64(lag: &Lag) -> f64 {
    *lag.numer() as f64 / *lag.denom() as f64
}

/// Which delay each token contributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DelayFlavor {
    /// Speech time only.
    Nca,
    /// Speech time plus computation.
    Ca,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ALInput {
    pub delays: Vec<Millis>,
    pub num_frames: usize,
    pub frame_period: Millis,
    pub reference_length: usize,
    pub full_read_token_index: usize,
}

/// Index of the first token emitted with the whole source read. Falls back to
/// `|Y|` when the hypothesis finished earlier.
pub fn tau_from_frames(frames_read: &[usize], num_frames: usize) -> Result<usize> {
    if frames_read.is_empty() {
        return Err(Error::input("lagging is undefined for an empty hypothesis"));
    }
    Ok(frames_read
        .iter()
        .position(|&n| n >= num_frames)
        .map_or(frames_read.len(), |i| i + 1))
}

pub fn tau_full_read(trace: &Trace) -> Result<usize> {
    let frames: Vec<usize> = trace.delays().map(|d| d.frames_read).collect();
    tau_from_frames(&frames, trace.num_frames)
}

/// `(1/tau) * sum_{i=1..tau} [ d(y_i) - (|X| / |Y*|) * T_s * (i - 1) ]`, in ms.
pub fn average_lagging(input: &ALInput) -> Result<Lag> {
    if input.reference_length == 0 {
        return Err(Error::input("reference length must be positive"));
    }
    let tau = input.full_read_token_index;
    if tau == 0 || tau > input.delays.len() {
        return Err(Error::input(format!(
            "full-read index {tau} outside 1..={}",
            input.delays.len()
        )));
    }
    if input.delays.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::input("delays must be non-decreasing"));
    }

    let oracle_step = input.frame_period.to_ratio() * Ratio::from_integer(input.num_frames as i128)
        / Ratio::from_integer(input.reference_length as i128);
    let total: Lag = input.delays[..tau]
        .iter()
        .enumerate()
        .map(|(i, d)| d.to_ratio() - oracle_step * Ratio::from_integer(i as i128))
        .sum();
    Ok(total / Ratio::from_integer(tau as i128))
}

/// AL of one session. `reference_length = None` falls back to the hypothesis length.
pub fn trace_lagging(trace: &Trace, flavor: DelayFlavor, reference_length: Option<usize>) -> Result<Lag> {
    if flavor == DelayFlavor::Ca && !trace.ca_recorded {
        return Err(Error::input(format!(
            "trace `{}` carries no computation-aware delays",
            trace.stream_id
        )));
    }
    let delays: Vec<Millis> = trace
        .delays()
        .map(|d| match flavor {
            DelayFlavor::Nca => d.d_nca,
            DelayFlavor::Ca => d.d_ca,
        })
        .collect();
    let tau = tau_full_read(trace)?;
    average_lagging(&ALInput {
        reference_length: reference_length.unwrap_or(delays.len()),
        delays,
        num_frames: trace.num_frames,
        frame_period: trace.frame_period,
        full_read_token_index: tau,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveInput {
    /// `-log P(Y | X)`.
    pub neg_log_likelihood: f64,
    /// Latency cost `C(D)` in ms, typically AL.
    pub latency_cost: f64,
    pub lambda: f64,
}

/// `nll + lambda * max(C, 0)`: only positive latency is penalized.
pub fn regularized_objective(input: &ObjectiveInput) -> Result<f64> {
    if input.lambda.is_nan() || input.lambda < 0.0 {
        return Err(Error::input(format!(
            "lambda must be non-negative, got {}",
            input.lambda
        )));
    }
    if input.neg_log_likelihood.is_nan() || input.neg_log_likelihood < 0.0 {
        return Err(Error::input("negative log-likelihood must be non-negative"));
    }
    Ok(input.neg_log_likelihood + input.lambda * input.latency_cost.max(0.0))
}
