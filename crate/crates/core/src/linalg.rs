use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Eigendecomposition of a Hermitian matrix with eigenvalues in ascending
/// order; column `j` of `vectors` belongs to `values[j]`.
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
}

/// `a * b` through four real products, which take the blocked gemm path that
/// nalgebra's generic complex product does not.
pub fn complex_product(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    re.zip_map(&im, Complex64::new)
}

pub fn hermitian_residual(m: &DMatrix<Complex64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn check_hermitian(m: &DMatrix<Complex64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Validation(format!("{what} is not square")));
    }
    let scale = m.iter().fold(1.0_f64, |acc, z| acc.max(z.norm()));
    let residual = hermitian_residual(m);
    if residual > 1e-10 * scale {
        return Err(Error::Validation(format!(
            "{what} is not Hermitian (residual {residual:e})"
        )));
    }
    Ok(())
}

pub fn hermitian_eigen(m: &DMatrix<Complex64>) -> HermitianEigen {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| eig.eigenvectors[(i, order[j])]);
    HermitianEigen { values, vectors }
}

/// Labels each (ascending) eigenvalue with a block id; neighbours closer than
/// `gap` share a block.
pub fn degenerate_blocks(values: &[f64], gap: f64) -> Vec<usize> {
    let mut blocks = Vec::with_capacity(values.len());
    let mut id = 0;
    for (j, &v) in values.iter().enumerate() {
        if j > 0 && v - values[j - 1] >= gap {
            id += 1;
        }
        blocks.push(id);
    }
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_product_matches_the_generic_one() {
        let a = DMatrix::from_fn(5, 3, |i, j| Complex64::new(i as f64 - 1.5 * j as f64, (i * j) as f64 + 0.25));
        let b = DMatrix::from_fn(3, 4, |i, j| Complex64::new(0.5 * j as f64 - i as f64, 1.0 - (i + j) as f64));
        assert!((complex_product(&a, &b) - &a * &b).norm() < 1e-12);
    }

    #[test]
    fn eigenvalues_come_sorted_and_reconstruct() {
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[
                Complex64::new(3.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(0.5, 0.0),
                Complex64::new(0.0, -1.0),
                Complex64::new(-1.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.5, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
            ],
        );
        let eig = hermitian_eigen(&m);
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            3,
            eig.values.iter().map(|&v| Complex64::new(v, 0.0)),
        ));
        let back = &eig.vectors * d * eig.vectors.adjoint();
        assert!((back - m).norm() < 1e-12);
    }

    #[test]
    fn blocks_group_near_degenerate_levels() {
        assert_eq!(
            degenerate_blocks(&[0.0, 1e-12, 1.0, 2.0, 2.0], 1e-10),
            vec![0, 0, 1, 2, 2]
        );
    }

    #[test]
    fn non_hermitian_is_rejected() {
        let mut m = DMatrix::<Complex64>::identity(2, 2);
        m[(0, 1)] = Complex64::new(1.0, 0.0);
        assert!(check_hermitian(&m, "test").is_err());
    }
}
