use crate::error::{Error, Result};
use crate::numerics::cache::{OpCache, OpKind, Record};
use crate::numerics::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct DenseGrads<T> {
    pub input: Vec<T>,
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

/// Affine map `W x + b` with `W` of shape (outputs, inputs).
pub fn dense<T: Scalar>(input: &[T], weights: &Matrix<T>, bias: &[T]) -> Result<(Vec<T>, OpCache<T>)> {
    if input.len() != weights.cols() || bias.len() != weights.rows() {
        return Err(Error::shape(format!(
            "dense: input {} / bias {} vs weights {}x{}",
            input.len(),
            bias.len(),
            weights.rows(),
            weights.cols()
        )));
    }
    let out = (0..weights.rows())
        .map(|r| {
            weights
                .row(r)
                .iter()
                .zip(input)
                .fold(bias[r], |acc, (&w, &x)| acc + w * x)
        })
        .collect();
    let cache = OpCache::new(Record::Dense {
        input: input.to_vec(),
        weights: weights.clone(),
    });
    Ok((out, cache))
}

pub fn dense_backward<T: Scalar>(cache: &OpCache<T>, grad_out: &[T]) -> Result<DenseGrads<T>> {
    let Record::Dense { input, weights } = cache.expect(OpKind::Dense)? else {
        unreachable!()
    };
    if grad_out.len() != weights.rows() {
        return Err(Error::CacheMismatch {
            expected: format!("Dense grad of length {}", weights.rows()),
            found: grad_out.len().to_string(),
        });
    }
    let mut grad_in = vec![T::zero(); weights.cols()];
    let mut grad_w = Matrix::zeros(weights.rows(), weights.cols());
    let cols = weights.cols();
    for (r, &g) in grad_out.iter().enumerate() {
        for (gi, &w) in grad_in.iter_mut().zip(weights.row(r)) {
            *gi = *gi + g * w;
        }
        let row = &mut grad_w.as_mut_slice()[r * cols..(r + 1) * cols];
        for (gw, &x) in row.iter_mut().zip(input) {
            *gw = g * x;
        }
    }
    Ok(DenseGrads {
        input: grad_in,
        weights: grad_w,
        bias: grad_out.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::finite_diff_check;

    #[test]
    fn identity_weights_pass_input_through() {
        let (out, _) = dense(&[1.0, -2.0, 3.5], &Matrix::identity(3), &[0.0; 3]).unwrap();
        assert_eq!(out, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn two_by_two_by_hand() {
        // [[1, 2], [3, 4]] · [5, 6] + [0.5, -1] = [17.5, 38]
        let w = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, cache) = dense(&[5.0, 6.0], &w, &[0.5, -1.0]).unwrap();
        assert_eq!(out, vec![17.5, 38.0]);
        let g = dense_backward(&cache, &[1.0, 10.0]).unwrap();
        assert_eq!(g.input, vec![31.0, 42.0]);
        assert_eq!(g.weights.as_slice(), &[5.0, 6.0, 50.0, 60.0]);
        assert_eq!(g.bias, vec![1.0, 10.0]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        assert!(dense(&[1.0, 2.0], &Matrix::identity(3), &[0.0; 3]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let w = Matrix::from_vec(3, 4, (0..12).map(|i| ((i * 7) % 5) as f64 * 0.3 - 0.6).collect()).unwrap();
        let x = vec![0.4, -1.2, 0.9, 2.0];
        let b = vec![0.1, 0.2, -0.3];
        let probe = [1.5, -0.7, 0.25];
        let (_, cache) = dense(&x, &w, &b).unwrap();
        let g = dense_backward(&cache, &probe).unwrap();
        let dot = |o: Vec<f64>| o.iter().zip(&probe).map(|(a, b)| a * b).sum::<f64>();

        let rep = finite_diff_check(|p: &[f64]| dot(dense(p, &w, &b).unwrap().0), &x, &g.input, 1e-5).unwrap();
        assert!(rep.max_rel_err < 1e-6);
        let rep = finite_diff_check(
            |p: &[f64]| dot(dense(&x, &Matrix::from_vec(3, 4, p.to_vec()).unwrap(), &b).unwrap().0),
            w.as_slice(),
            g.weights.as_slice(),
            1e-5,
        )
        .unwrap();
        assert!(rep.max_rel_err < 1e-6);
        let rep = finite_diff_check(|p: &[f64]| dot(dense(&x, &w, p).unwrap().0), &b, &g.bias, 1e-5).unwrap();
        assert!(rep.max_rel_err < 1e-6);
    }
}
