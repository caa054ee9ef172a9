use nalgebra::DMatrix;
use ndarray::Array2;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

/// `rows x cols` matrix with orthonormal columns (or rows, for wide shapes)
/// scaled by `scale`, from the QR factorization of a Gaussian matrix.
pub fn orthogonal_init(rows: usize, cols: usize, scale: f64, rng: &mut dyn RngCore) -> Array2<f64> {
    let (tall, thin) = (rows.max(cols), rows.min(cols));
    let gaussian: DMatrix<f64> =
        DMatrix::from_fn(tall, thin, |_, _| StandardNormal.sample(&mut *rng));
    let qr = gaussian.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Sign fix makes the result uniformly distributed over orthogonal matrices.
    for j in 0..thin {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let v = if rows >= cols { q[(i, j)] } else { q[(j, i)] };
        scale * v
    })
}
