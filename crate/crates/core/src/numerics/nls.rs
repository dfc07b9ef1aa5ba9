//! Levenberg-Marquardt for small nonlinear least-squares problems with
//! forward-difference Jacobians.

use super::{Matrix, Vector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged when `‖step‖ < step_tol · ‖params‖`.
    pub step_tol: f64,
    /// Converged when an accepted step lowers RSS by less than this fraction.
    pub rss_tol: f64,
    /// Relative finite-difference step for the Jacobian.
    pub fd_step: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            step_tol: 1e-10,
            rss_tol: 1e-12,
            fd_step: 1e-7,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vector,
    pub rss: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

fn finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Minimizes `‖r(p)‖²` starting from `p0`.
pub fn levenberg_marquardt<F>(mut residuals: F, p0: &Vector, opts: &LmOptions) -> Result<LmReport>
where
    F: FnMut(&Vector) -> Vector,
{
    if !finite(p0) {
        return Err(Error::Parameter("initial parameters are not finite".into()));
    }
    let np = p0.len();
    let mut p = p0.clone();
    let mut r = residuals(&p);
    let mut evaluations = 1;
    if !finite(&r) {
        return Err(Error::Parameter(
            "residuals are not finite at the initial parameters".into(),
        ));
    }
    let mut rss = r.norm_squared();
    let mut lambda = opts.initial_damping;
    let report = |p: Vector, rss: f64, iterations: usize, evaluations: usize| LmReport {
        params: p,
        rss,
        iterations,
        evaluations,
    };
    if rss == 0.0 || np == 0 {
        return Ok(report(p, rss, 0, evaluations));
    }

    for iter in 1..=opts.max_iterations {
        let m = r.len();
        let mut jac = Matrix::zeros(m, np);
        for j in 0..np {
            let h = opts.fd_step * p[j].abs().max(opts.fd_step);
            let mut shifted = p.clone();
            shifted[j] += h;
            let rj = residuals(&shifted);
            evaluations += 1;
            if !finite(&rj) {
                return Err(Error::Parameter(format!(
                    "non-finite residuals while differentiating parameter {j}"
                )));
            }
            jac.set_column(j, &((rj - &r) / h));
        }
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;

        loop {
            let mut lhs = jtj.clone();
            for i in 0..np {
                lhs[(i, i)] += lambda * jtj[(i, i)].max(1e-30);
            }
            let step = match lhs.cholesky() {
                Some(ch) => -ch.solve(&grad),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        return Ok(report(p, rss, iter, evaluations));
                    }
                    continue;
                }
            };
            if step.norm() <= opts.step_tol * (p.norm() + opts.step_tol) {
                return Ok(report(p, rss, iter, evaluations));
            }
            let trial = &p + &step;
            let r_trial = residuals(&trial);
            evaluations += 1;
            let rss_trial = r_trial.norm_squared();
            if finite(&r_trial) && rss_trial < rss {
                let rel = (rss - rss_trial) / rss;
                p = trial;
                r = r_trial;
                rss = rss_trial;
                lambda = (lambda / 10.0).max(1e-12);
                if rel < opts.rss_tol || rss == 0.0 {
                    return Ok(report(p, rss, iter, evaluations));
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                // No descent direction left at working precision.
                return Ok(report(p, rss, iter, evaluations));
            }
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        best: p.iter().copied().collect(),
        best_rss: rss,
    })
}

/// Fits `targets[i] ≈ model(params, inputs[i])`.
pub fn nls<M>(model: M, params0: &[f64], inputs: &[f64], targets: &[f64]) -> Result<Vec<f64>>
where
    M: Fn(&[f64], f64) -> f64,
{
    if inputs.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    let p0 = Vector::from_column_slice(params0);
    let res = levenberg_marquardt(
        |p| {
            Vector::from_iterator(
                inputs.len(),
                inputs
                    .iter()
                    .zip(targets)
                    .map(|(&x, &y)| model(p.as_slice(), x) - y),
            )
        },
        &p0,
        &LmOptions::default(),
    )?;
    Ok(res.params.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn decay(p: &[f64], x: f64) -> f64 {
        (-x / p[0]).exp()
    }

    #[test]
    fn recovers_time_constant_exactly() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.05).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| decay(&[0.5], x)).collect();
        let fit = nls(decay, &[2.0], &xs, &ys).unwrap();
        assert!((fit[0] - 0.5).abs() < 1e-6, "tau = {}", fit[0]);
    }

    #[test]
    fn optimal_start_is_returned() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| decay(&[0.7], x)).collect();
        let fit = nls(decay, &[0.7], &xs, &ys).unwrap();
        assert_eq!(fit, vec![0.7]);
    }

    #[test]
    fn noisy_data_within_five_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let xs: Vec<f64> = (0..200).map(|i| i as f64 * 0.01).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| decay(&[0.5], x) + noise.sample(&mut rng)).collect();
        let fit = nls(decay, &[1.0], &xs, &ys).unwrap();
        assert!((fit[0] - 0.5).abs() < 0.025, "tau = {}", fit[0]);
    }

    #[test]
    fn two_parameter_fit() {
        let model = |p: &[f64], x: f64| p[0] * (-p[1] * x).exp();
        let xs: Vec<f64> = (0..30).map(|i| i as f64 * 0.2).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| model(&[3.0, 0.8], x)).collect();
        let fit = nls(model, &[1.0, 0.1], &xs, &ys).unwrap();
        assert!((fit[0] - 3.0).abs() < 1e-6 && (fit[1] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn iteration_cap_reports_best() {
        let opts = LmOptions {
            max_iterations: 1,
            ..LmOptions::default()
        };
        let res = levenberg_marquardt(
            |p| Vector::from_vec(vec![p[0] - 1.0, 10.0 * (p[1] - p[0] * p[0])]),
            &Vector::from_vec(vec![-1.2, 1.0]),
            &opts,
        );
        match res {
            Err(Error::NotConverged { best, .. }) => assert_eq!(best.len(), 2),
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }
}
