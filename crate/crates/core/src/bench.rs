//! Request latency probe used by the `bench_latency` keyword and the
//! console's bench mode.

use std::hint::black_box;
use std::time::Instant;

use crate::interceptors::InterceptionPoint;
use crate::lang::Value;
use crate::runtime::{NodeRuntime, RuntimeError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub requests: usize,
    pub mean_us: f64,
    pub std_us: f64,
}

/// Mean and standard deviation of a sample, in the sample's unit.
pub fn mean_std(samples: &[f64]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// A do-nothing interceptor that still reads the request, so the call
/// cannot be optimised away.
pub fn register_noop(runtime: &NodeRuntime) -> u64 {
    runtime.register_interceptor(&InterceptionPoint::ALL, |_, info| {
        black_box(info.operation.len());
    })
}

/// Issues `requests` echo calls against a scratch Echo component with
/// `interceptors` extra no-op interceptors registered, then tears both down.
pub fn measure_latency(
    runtime: &NodeRuntime,
    requests: usize,
    interceptors: usize,
) -> Result<LatencyStats, RuntimeError> {
    runtime.load_impl("Echo")?;
    let container = runtime.create_container();
    let echo = runtime.deploy_component(container, "Echo", &[])?;
    let ids: Vec<u64> = (0..interceptors).map(|_| register_noop(runtime)).collect();

    let arg = vec![Value::Int(1)];
    for _ in 0..requests.min(100) {
        let _ = runtime.call_component(echo, "echo", arg.clone());
    }
    let mut samples = Vec::with_capacity(requests);
    for _ in 0..requests {
        let start = Instant::now();
        let reply = runtime.call_component(echo, "echo", arg.clone());
        samples.push(start.elapsed().as_secs_f64() * 1e6);
        black_box(reply.ok());
    }

    for id in ids {
        runtime.unregister_interceptor(id);
    }
    runtime.remove_component(echo)?;
    let (mean_us, std_us) = mean_std(&samples);
    Ok(LatencyStats {
        requests,
        mean_us,
        std_us,
    })
}

/// Latency per interceptor count, measured on one shared Echo component.
/// Settings alternate every `per_block` requests (order rotated per block)
/// so drift and cache effects spread evenly over all of them.
#[derive(Debug, Clone, PartialEq)]
pub struct OverheadProfile {
    pub counts: Vec<usize>,
    /// Mean of the block means, per count.
    pub mean_us: Vec<f64>,
    /// Median of the block means, per count.
    pub median_us: Vec<f64>,
    pub std_us: Vec<f64>,
    pub requests_each: usize,
}

pub fn overhead_profile(
    runtime: &NodeRuntime,
    counts: &[usize],
    blocks: usize,
    per_block: usize,
) -> Result<OverheadProfile, RuntimeError> {
    runtime.load_impl("Echo")?;
    let container = runtime.create_container();
    let echo = runtime.deploy_component(container, "Echo", &[])?;
    let arg = vec![Value::Int(1)];
    for _ in 0..per_block {
        black_box(runtime.call_component(echo, "echo", arg.clone()).ok());
    }

    let mut block_means: Vec<Vec<f64>> = vec![Vec::with_capacity(blocks); counts.len()];
    for block in 0..blocks {
        for step in 0..counts.len() {
            let idx = (step + block) % counts.len();
            let ids: Vec<u64> = (0..counts[idx]).map(|_| register_noop(runtime)).collect();
            let start = Instant::now();
            for _ in 0..per_block {
                black_box(runtime.call_component(echo, "echo", arg.clone()).ok());
            }
            block_means[idx].push(start.elapsed().as_secs_f64() * 1e6 / per_block as f64);
            for id in ids {
                runtime.unregister_interceptor(id);
            }
        }
    }
    runtime.remove_component(echo)?;

    let mut mean_us = Vec::new();
    let mut median_us = Vec::new();
    let mut std_us = Vec::new();
    for mut means in block_means {
        let (m, s) = mean_std(&means);
        means.sort_by(f64::total_cmp);
        mean_us.push(m);
        std_us.push(s);
        median_us.push(means.get(means.len() / 2).copied().unwrap_or(0.0));
    }
    Ok(OverheadProfile {
        counts: counts.to_vec(),
        mean_us,
        median_us,
        std_us,
        requests_each: blocks * per_block,
    })
}
