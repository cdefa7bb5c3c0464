use crate::error::{Error, Result};

/// Composite trapezoid rule on uniformly spaced samples.
pub fn trapezoid(samples: &[f64], h: f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::domain(format!(
            "trapezoid needs >= 2 samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len();
    let inner: f64 = samples[1..n - 1].iter().sum();
    Ok(h * (0.5 * (samples[0] + samples[n - 1]) + inner))
}

/// Running trapezoid integral; element `k` integrates samples `0..=k`.
pub fn cumulative_trapezoid(samples: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    let mut acc = 0.0;
    for (k, &s) in samples.iter().enumerate() {
        if k > 0 {
            acc += 0.5 * h * (samples[k - 1] + s);
        }
        out.push(acc);
    }
    out
}

/// Total population at one `(t, m)`: trapezoid of an age density sampled at
/// ages `k * h_a` over `[a_lo, a_hi]`. Both bounds must be age nodes.
pub fn total_population(density: &[f64], h_a: f64, a_lo: f64, a_hi: f64) -> Result<f64> {
    let node = |a: f64| -> Result<usize> {
        let pos = a / h_a;
        let k = pos.round();
        if (pos - k).abs() > 1e-9 || k < 0.0 || k as usize >= density.len() {
            return Err(Error::domain(format!("age {a} is not a node of the age grid")));
        }
        Ok(k as usize)
    };
    let (lo, hi) = (node(a_lo)?, node(a_hi)?);
    if hi <= lo {
        return Err(Error::domain(format!("empty age range [{a_lo}, {a_hi}]")));
    }
    trapezoid(&density[lo..=hi], h_a)
}
