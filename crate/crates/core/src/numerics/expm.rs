//! Matrix exponential by scaling and squaring with diagonal Padé
//! approximants (degrees 3, 5, 7, 9, 13), following Higham (2005),
//! "The scaling and squaring method for the matrix exponential revisited".

use super::{ensure_finite_matrix, ensure_square, Matrix};
use crate::error::{Error, Result};

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn norm1(a: &Matrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `U` and `V` for the low-degree approximants, from the coefficient table.
fn pade_low(a: &Matrix, b: &[f64]) -> (Matrix, Matrix) {
    let n = a.nrows();
    let ident = Matrix::identity(n, n);
    let a2 = a * a;
    let mut u_poly = &ident * b[1];
    let mut v = &ident * b[0];
    let mut pow = ident.clone();
    for k in 1..b.len() / 2 {
        pow = &pow * &a2;
        u_poly += &pow * b[2 * k + 1];
        v += &pow * b[2 * k];
    }
    (a * u_poly, v)
}

fn pade13(a: &Matrix) -> (Matrix, Matrix) {
    let n = a.nrows();
    let ident = Matrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * B13[13] + &a4 * B13[11] + &a2 * B13[9];
    let u = a * (&a6 * inner_u + &a6 * B13[7] + &a4 * B13[5] + &a2 * B13[3] + &ident * B13[1]);
    let inner_v = &a6 * B13[12] + &a4 * B13[10] + &a2 * B13[8];
    let v = &a6 * inner_v + &a6 * B13[6] + &a4 * B13[4] + &a2 * B13[2] + &ident * B13[0];
    (u, v)
}

fn solve_pade(u: Matrix, v: Matrix) -> Result<Matrix> {
    let p = &v + &u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::Singular("Padé denominator is singular".into()))
}

/// `e^A` for a square matrix.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    ensure_square(a, "expm input")?;
    ensure_finite_matrix(a, "expm input")?;
    let norm = norm1(a);
    if norm == 0.0 {
        return Ok(Matrix::identity(a.nrows(), a.ncols()));
    }
    for (theta, coeffs) in [
        (THETA_3, &B3[..]),
        (THETA_5, &B5[..]),
        (THETA_7, &B7[..]),
        (THETA_9, &B9[..]),
    ] {
        if norm <= theta {
            let (u, v) = pade_low(a, coeffs);
            return solve_pade(u, v);
        }
    }
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(s);
    let (u, v) = pade13(&scaled);
    let mut r = solve_pade(u, v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}
