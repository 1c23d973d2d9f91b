//! Small dense vector helpers for dimensions 1 to 3.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `a + s * b`
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    if n > 0.0 && n.is_finite() {
        Some(scale(a, 1.0 / n))
    } else {
        None
    }
}

pub fn unit(dim: usize, axis: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[axis] = 1.0;
    e
}

/// Removes the components of `v` along the orthonormal vectors in `basis`.
pub fn reject(v: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut out = v.to_vec();
    for b in basis {
        let c = dot(&out, b);
        for (o, bi) in out.iter_mut().zip(b) {
            *o -= c * bi;
        }
    }
    out
}

/// Orthogonal projection onto the span of the orthonormal vectors in `basis`.
pub fn project(v: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for b in basis {
        let c = dot(v, b);
        for (o, bi) in out.iter_mut().zip(b) {
            *o += c * bi;
        }
    }
    out
}

/// Modified Gram-Schmidt with re-orthogonalization; vectors whose residual
/// falls below `tol` (relative to their input norm) are dropped.
pub fn gram_schmidt(vectors: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let nv = norm(v);
        if nv == 0.0 {
            continue;
        }
        let mut r = reject(v, &basis);
        r = reject(&r, &basis);
        let nr = norm(&r);
        if nr > tol * nv.max(1.0) {
            basis.push(scale(&r, 1.0 / nr));
        }
    }
    basis
}

/// Completes an orthonormal set to an orthonormal basis of the ambient space
/// and returns only the added vectors.
pub fn complement(basis: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    let mut all = basis.to_vec();
    let mut added = Vec::new();
    for axis in 0..dim {
        if all.len() == dim {
            break;
        }
        let r = reject(&reject(&unit(dim, axis), &all), &all);
        let nr = norm(&r);
        if nr > 1e-8 {
            let v = scale(&r, 1.0 / nr);
            all.push(v.clone());
            added.push(v);
        }
    }
    added
}

/// Flips `v` so that its first component with magnitude above `1e-12` is positive.
pub fn sign_normalize(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
    }
}

pub fn cross(a: &[f64], b: &[f64]) -> Vec<f64> {
    vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Minimum-norm least-squares solution of `rows * x = rhs` via SVD.
pub fn lstsq(rows: &[Vec<f64>], rhs: &[f64], cols: usize) -> Vec<f64> {
    if rows.is_empty() || cols == 0 {
        return vec![0.0; cols];
    }
    let a = nalgebra::DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
    let b = nalgebra::DVector::from_column_slice(rhs);
    let svd = a.svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(1e-300);
    match svd.solve(&b, eps) {
        Ok(x) => x.iter().copied().collect(),
        Err(_) => vec![0.0; cols],
    }
}
