//! Small dense linear-algebra helpers shared by the fitters.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Thin SVD with singular triplets sorted by decreasing singular value.
///
/// Signs are fixed so that the largest-magnitude entry of each left vector is
/// positive, which makes results reproducible across calls.
pub fn sorted_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let k = order.len();
    let mut us = DMatrix::zeros(m.nrows(), k);
    let mut vs = DMatrix::zeros(m.ncols(), k);
    let mut sv = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut ucol = u.column(src).into_owned();
        let mut vcol = v_t.row(src).transpose();
        if sign_of_dominant(ucol.as_slice()) < 0.0 {
            ucol.neg_mut();
            vcol.neg_mut();
        }
        us.set_column(dst, &ucol);
        vs.set_column(dst, &vcol);
        sv.push(svd.singular_values[src]);
    }
    (us, sv, vs)
}

/// Symmetric eigendecomposition, eigenpairs sorted by decreasing eigenvalue.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut vecs = DMatrix::zeros(m.nrows(), order.len());
    let mut vals = Vec::with_capacity(order.len());
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        if sign_of_dominant(col.as_slice()) < 0.0 {
            col.neg_mut();
        }
        vecs.set_column(dst, &col);
        vals.push(eig.eigenvalues[src]);
    }
    (vals, vecs)
}

fn sign_of_dominant(v: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for &x in v {
        if x.abs() > best.abs() + 1e-12 {
            best = x;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Orthonormal basis of the column space of `m` (modified Gram–Schmidt).
///
/// Fails when the columns are numerically dependent.
pub fn orthonormalize(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut q = m.clone();
    for j in 0..q.ncols() {
        for k in 0..j {
            let proj = q.column(k).dot(&q.column(j));
            let qk = q.column(k).into_owned();
            q.column_mut(j).axpy(-proj, &qk, 1.0);
        }
        let norm = q.column(j).norm();
        let scale = m.column(j).norm().max(1.0);
        if norm <= 1e-12 * scale {
            return Err(Error::Invalid(
                "columns are linearly dependent; cannot orthonormalize".into(),
            ));
        }
        q.column_mut(j).scale_mut(1.0 / norm);
    }
    // one re-orthogonalization pass keeps Q'Q = I to machine precision
    for j in 0..q.ncols() {
        for k in 0..j {
            let proj = q.column(k).dot(&q.column(j));
            let qk = q.column(k).into_owned();
            q.column_mut(j).axpy(-proj, &qk, 1.0);
        }
        let norm = q.column(j).norm();
        q.column_mut(j).scale_mut(1.0 / norm);
    }
    Ok(q)
}

/// Subtract column means in place.
pub fn center_columns(m: &mut DMatrix<f64>) {
    let n = m.nrows() as f64;
    for mut col in m.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
}

pub fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

/// Principal angles (radians, ascending) between the column spaces of `a` and `b`.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "subspaces live in R^{} and R^{}",
            a.nrows(),
            b.nrows()
        )));
    }
    let (qa, qb) = if a.ncols() >= b.ncols() {
        (orthonormalize(a)?, orthonormalize(b)?)
    } else {
        (orthonormalize(b)?, orthonormalize(a)?)
    };
    let cross = qa.transpose() * &qb;
    let mut cosines: Vec<f64> = cross.singular_values().iter().map(|s| s.clamp(0.0, 1.0)).collect();
    cosines.sort_by(|x, y| y.partial_cmp(x).unwrap());
    // small angles are resolved from sines, large ones from cosines
    let resid = &qb - &qa * &cross;
    let mut sines: Vec<f64> = resid.singular_values().iter().map(|s| s.clamp(0.0, 1.0)).collect();
    sines.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut angles: Vec<f64> = cosines
        .iter()
        .zip(&sines)
        .map(|(&c, &s)| if c * c >= 0.5 { s.asin() } else { c.acos() })
        .collect();
    angles.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(angles)
}

/// Largest principal angle in degrees.
pub fn max_principal_angle_deg(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let angles = principal_angles(a, b)?;
    Ok(angles.last().copied().unwrap_or(0.0).to_degrees())
}

/// Truncated PCA scores of a column-centered copy of `x`, scaled so that Z'Z = I.
pub fn pca_scores(x: &DMatrix<f64>, rank: usize) -> Result<DMatrix<f64>> {
    let limit = x.nrows().min(x.ncols() + 1);
    if rank == 0 || rank >= limit {
        return Err(Error::RankTooLarge { rank, limit });
    }
    let mut xc = x.clone();
    center_columns(&mut xc);
    let (u, _, _) = sorted_svd(&xc);
    Ok(u.columns(0, rank).into_owned())
}

pub fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}
