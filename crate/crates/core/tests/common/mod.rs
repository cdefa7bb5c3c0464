#![allow(dead_code)]

use cellflow_core::config::{RunConfig, DEFAULT_CONFIG};

pub fn stock() -> RunConfig {
    RunConfig::parse(DEFAULT_CONFIG).expect("stock config parses")
}

/// Replace the listed keys of a config text, appending any that are absent.
pub fn with_keys(text: &str, keys: &[(&str, &str)]) -> String {
    let mut out = Vec::new();
    let mut used = vec![false; keys.len()];
    for line in text.lines() {
        let key = line.split('=').next().unwrap_or("").trim();
        match keys.iter().position(|(k, _)| *k == key) {
            Some(p) => {
                out.push(format!("{} = {}", keys[p].0, keys[p].1));
                used[p] = true;
            }
            None => out.push(line.to_string()),
        }
    }
    for ((k, v), u) in keys.iter().zip(used) {
        if !u {
            out.push(format!("{k} = {v}"));
        }
    }
    out.join("\n") + "\n"
}

pub fn stock_with(keys: &[(&str, &str)]) -> RunConfig {
    RunConfig::parse(&with_keys(DEFAULT_CONFIG, keys)).expect("modified config parses")
}

/// Maturity-independent instance: no maturation, constant rates and
/// constant initial profiles on three maturity nodes.
pub const SCALAR: &str = "
model.m_max = 1
model.tau_lo = 0.25
model.tau_hi = 0.5
model.horizon = 2
grid.n_m = 3
grid.n_t = 401
rates.delta.kind = constant
rates.delta.params = 1
rates.gamma.kind = constant
rates.gamma.params = 0.5
rates.sigma.kind = constant
rates.sigma.params = 0.05
rates.beta.kind = hill
rates.beta.params = 0.8, 2
rates.alpha.kind = saturating
rates.alpha.params = 0.3
rates.v.kind = parabolic
rates.v.params = 0, 1
rates.u.kind = parabolic
rates.u.params = 0, 1
rates.g.kind = linear
rates.g.params = 1
init.phi.amplitude = 0.6
init.psi.amplitude = 0.4
init.omega.amplitude = 0.3
";

pub fn scalar_with(keys: &[(&str, &str)]) -> RunConfig {
    RunConfig::parse(&with_keys(SCALAR, keys)).expect("scalar config parses")
}

/// Composite trapezoid of `f` on `[lo, hi]` with `n` intervals.
pub fn quad(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let h = (hi - lo) / n as f64;
    let inner: f64 = (1..n).map(|k| f(lo + k as f64 * h)).sum();
    h * (0.5 * f(lo) + inner + 0.5 * f(hi))
}
