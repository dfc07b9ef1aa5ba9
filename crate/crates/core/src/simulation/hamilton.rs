use super::noise::{path_rng, standard_normals};
use crate::error::{Error, Result};

/// Discrete cointegrated pair `Δy¹_t = ε¹_t`, `y²_t = 2y¹_t + ε²_{t−1}`,
/// with `y¹_0 = y²_0 = 0` and independent standard-normal noise. Returns
/// `n_steps` observations of each series starting at `t = 0`.
pub fn simulate_hamilton(n_steps: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n_steps < 2 {
        return Err(Error::Parameter(format!("need at least 2 steps, got {n_steps}")));
    }
    let mut rng = path_rng(seed, 0);
    let mut e1 = vec![0.0; n_steps];
    let mut e2 = vec![0.0; n_steps];
    standard_normals(&mut rng, &mut e1);
    standard_normals(&mut rng, &mut e2);
    let mut y1 = vec![0.0; n_steps];
    let mut y2 = vec![0.0; n_steps];
    for t in 1..n_steps {
        y1[t] = y1[t - 1] + e1[t];
        y2[t] = 2.0 * y1[t] + e2[t - 1];
    }
    Ok((y1, y2))
}

/// Two independent standard-normal random walks from zero, the negative
/// control for cointegration tests.
pub fn independent_walks(n_steps: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n_steps < 2 {
        return Err(Error::Parameter(format!("need at least 2 steps, got {n_steps}")));
    }
    let walk = |stream: u64| {
        let mut z = vec![0.0; n_steps];
        standard_normals(&mut path_rng(seed, stream), &mut z);
        z[0] = 0.0;
        for t in 1..n_steps {
            z[t] += z[t - 1];
        }
        z
    };
    Ok((walk(1), walk(2)))
}
