//! Test-only helpers: seeded inputs and a from-scratch rescorer that shares
//! no code with the library's search path.
#![allow(dead_code)]

use richspace_core::rng::GaussianStream;
use richspace_core::{Matrix, PromptEmbedding};

pub fn gaussian_matrix(rows: usize, cols: usize, stream: &mut GaussianStream) -> Matrix {
    Matrix::new(rows, cols, stream.normals(rows * cols, 1.0)).unwrap()
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

type Rows = Vec<Vec<f64>>;

fn foot(a: &Rows, b: &Rows, c: &Rows) -> Rows {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..a.len() {
        for j in 0..a[i].len() {
            let dir = b[i][j] - a[i][j];
            num += dir * (c[i][j] - a[i][j]);
            den += dir * dir;
        }
    }
    let t = num / den;
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + t * (y - x)).collect())
        .collect()
}

fn phi(x: &Rows, y: &Rows) -> f64 {
    let mut total = 0.0;
    for (rx, ry) in x.iter().zip(y) {
        let dot: f64 = rx.iter().zip(ry).map(|(p, q)| p * q).sum();
        let nx = rx.iter().map(|p| p * p).sum::<f64>().sqrt();
        let ny = ry.iter().map(|q| q * q).sum::<f64>().sqrt();
        total += dot / (nx * ny);
    }
    total / x.len() as f64
}

fn curve(a: &Rows, b: &Rows, c: &Rows, k: usize) -> Vec<f64> {
    let f = foot(a, b, c);
    (1..=k)
        .map(|i| {
            let wa = i as f64 / k as f64;
            let wb = (k - i) as f64 / k as f64;
            let z: Rows = a
                .iter()
                .zip(b)
                .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| wa * x + wb * y).collect())
                .collect();
            phi(&z, &f)
        })
        .collect()
}

/// Recompute both curves from scratch and return the 1-based argmax of their sum.
pub fn brute_force_i_opt(
    a: &PromptEmbedding,
    b: &PromptEmbedding,
    c: &PromptEmbedding,
    k: usize,
) -> usize {
    let ids = a.ids_length().max(b.ids_length()).max(c.ids_length());
    let (ra, rb, rc) = (
        to_rows(a.matrix()),
        to_rows(b.matrix()),
        to_rows(c.matrix()),
    );
    let full = curve(&ra, &rb, &rc, k);
    let trunc = curve(
        &ra[..ids].to_vec(),
        &rb[..ids].to_vec(),
        &rc[..ids].to_vec(),
        k,
    );
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for i in 0..k {
        let s = trunc[i] + full[i];
        if s > best_score {
            best_score = s;
            best = i;
        }
    }
    best + 1
}

/// Brute-force single-curve scores, for checking `cosine_sim_curve`.
pub fn brute_force_curve(a: &Matrix, b: &Matrix, c: &Matrix, k: usize) -> Vec<f64> {
    curve(&to_rows(a), &to_rows(b), &to_rows(c), k)
}

/// A noise matrix Frobenius-orthogonal to `dir` on the leading `split` rows
/// and on the remaining rows separately, scaled to `scale` times `reference`'s norm.
pub fn orthogonal_noise(
    dir: &Matrix,
    split: usize,
    reference: &Matrix,
    scale: f64,
    stream: &mut GaussianStream,
) -> Matrix {
    let cols = dir.cols();
    let mut noise = stream.normals(dir.rows() * cols, 1.0);
    let d = dir.as_slice();
    let at = split * cols;
    for (lo, hi) in [(0, at), (at, d.len())] {
        if lo == hi {
            continue;
        }
        let dd: f64 = d[lo..hi].iter().map(|v| v * v).sum();
        let nd: f64 = d[lo..hi]
            .iter()
            .zip(&noise[lo..hi])
            .map(|(p, q)| p * q)
            .sum();
        for j in lo..hi {
            noise[j] -= nd / dd * d[j];
        }
    }
    let norm = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
    let factor = scale * reference.norm() / norm;
    Matrix::new(
        dir.rows(),
        cols,
        noise.into_iter().map(|v| v * factor).collect(),
    )
    .unwrap()
}
