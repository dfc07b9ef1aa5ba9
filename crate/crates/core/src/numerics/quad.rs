use crate::error::{Error, Result};

/// Nodes and weights of composite Simpson's rule with `panels` panels on
/// `[a, b]` (`2 * panels + 1` nodes).
pub fn simpson_nodes(a: f64, b: f64, panels: usize) -> impl Iterator<Item = (f64, f64)> {
    let panels = panels.max(1);
    let m = 2 * panels;
    let h = (b - a) / m as f64;
    (0..=m).map(move |i| {
        let w = if i == 0 || i == m {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let x = if i == m { b } else { a + i as f64 * h };
        (x, w * h / 3.0)
    })
}

/// Composite Simpson approximation of `∫_a^b f`, exact for cubics on each
/// panel.
pub fn quad_fixed<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> Result<f64> {
    if panels < 1 {
        return Err(Error::Parameter("quadrature needs at least one panel".into()));
    }
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(Error::Parameter(format!("invalid interval [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    Ok(simpson_nodes(a, b, panels).map(|(x, w)| w * f(x)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_cubic_single_panel() {
        let v = quad_fixed(|x| x * x * x, 0.0, 1.0, 1).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn exponential_converges() {
        let v = quad_fixed(f64::exp, 0.0, 1.0, 64).unwrap();
        assert!((v - (std::f64::consts::E - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn empty_interval() {
        assert_eq!(quad_fixed(|x| 1.0 / x, 0.0, 0.0, 4).unwrap(), 0.0);
    }

    #[test]
    fn rejects_zero_panels() {
        assert!(quad_fixed(|x| x, 0.0, 1.0, 0).is_err());
        assert!(quad_fixed(|x| x, 1.0, 0.0, 3).is_err());
    }

    #[test]
    fn weights_sum_to_length() {
        let s: f64 = simpson_nodes(2.0, 5.0, 7).map(|(_, w)| w).sum();
        assert!((s - 3.0).abs() < 1e-14);
    }
}
