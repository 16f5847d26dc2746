//! Matrix exponential by scaling and squaring with a degree-13 Padé approximant.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat};

const B: [f64; 14] = [
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

const THETA_13: f64 = 5.371920351148152;

fn norm_1(a: &Mat<c64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn lin(terms: &[(f64, &Mat<c64>)], eye: f64) -> Mat<c64> {
    let n = terms[0].1.nrows();
    Mat::from_fn(n, n, |i, j| {
        let mut v = c64::new(if i == j { eye } else { 0.0 }, 0.0);
        for (w, m) in terms {
            v += m[(i, j)] * *w;
        }
        v
    })
}

pub fn expm(a: &Mat<c64>) -> Mat<c64> {
    let n = a.nrows();
    let norm = norm_1(a);
    let s = if norm > THETA_13 { (norm / THETA_13).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(s);
    let a1 = Mat::from_fn(n, n, |i, j| a[(i, j)] * scale);
    let a2 = &a1 * &a1;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let inner_u = lin(&[(B[13], &a6), (B[11], &a4), (B[9], &a2)], 0.0);
    let u = {
        let w = &(&a6 * &inner_u) + &lin(&[(B[7], &a6), (B[5], &a4), (B[3], &a2)], B[1]);
        &a1 * &w
    };
    let inner_v = lin(&[(B[12], &a6), (B[10], &a4), (B[8], &a2)], 0.0);
    let v = &(&a6 * &inner_v) + &lin(&[(B[6], &a6), (B[4], &a4), (B[2], &a2)], B[0]);

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.partial_piv_lu().solve(&p);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}
