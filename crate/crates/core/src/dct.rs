//! Orthonormal two-dimensional DCT-II for reducing square images to their
//! low-frequency block.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Row `u` holds the orthonormal DCT-II basis vector of frequency `u`.
fn basis(n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for u in 0..n {
        let s = if u == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for x in 0..n {
            c[u * n + x] = s * (PI * (2 * x + 1) as f64 * u as f64 / (2 * n) as f64).cos();
        }
    }
    c
}

/// Side length of a square image with `pixels` entries.
pub fn image_side(pixels: usize) -> Result<usize> {
    let side = (pixels as f64).sqrt().round() as usize;
    if side == 0 || side * side != pixels {
        return Err(Error::InvalidParameter(format!("{pixels} pixels do not form a square image")));
    }
    Ok(side)
}

/// `C A C^T` (forward) or `C^T A C` (inverse) for an `n x n` row-major `a`.
fn sandwich(a: &[f64], n: usize, inverse: bool) -> Vec<f64> {
    let c = basis(n);
    let at = |m: &[f64], i: usize, j: usize, t: bool| if t { m[j * n + i] } else { m[i * n + j] };
    let mut tmp = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            tmp[i * n + j] = (0..n).map(|k| at(&c, i, k, inverse) * a[k * n + j]).sum();
        }
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (0..n).map(|k| tmp[i * n + k] * at(&c, j, k, inverse)).sum();
        }
    }
    out
}

pub fn dct2(image: &[f64]) -> Result<Vec<f64>> {
    let n = image_side(image.len())?;
    Ok(sandwich(image, n, false))
}

pub fn idct2(coeffs: &[f64]) -> Result<Vec<f64>> {
    let n = image_side(coeffs.len())?;
    Ok(sandwich(coeffs, n, true))
}

/// Top-left `keep x keep` block of the transform, row-major.
pub fn dct_reduce(image: &[f64], keep: usize) -> Result<Vec<f64>> {
    let n = image_side(image.len())?;
    if keep == 0 || keep > n {
        return Err(Error::InvalidParameter(format!(
            "keep must lie in 1..={n} for a {n}x{n} image, got {keep}"
        )));
    }
    let full = sandwich(image, n, false);
    Ok((0..keep)
        .flat_map(|i| full[i * n..i * n + keep].iter().copied())
        .collect())
}
