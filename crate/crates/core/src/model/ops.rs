//! Row-wise building blocks and their derivatives.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use super::Scalar;

/// `x w + b`.
pub(crate) fn linear<T: Scalar>(x: ArrayView2<'_, T>, w: ArrayView2<'_, T>, b: ArrayView1<'_, T>) -> Array2<T> {
    let mut y = x.dot(&w);
    y += &b;
    y
}

pub(crate) struct LayerNormCache<T> {
    pub xhat: Array2<T>,
    pub rstd: Array1<T>,
}

pub(crate) fn layer_norm<T: Scalar>(
    x: ArrayView2<'_, T>,
    gain: ArrayView1<'_, T>,
    bias: ArrayView1<'_, T>,
    eps: f64,
) -> (Array2<T>, LayerNormCache<T>) {
    let d = T::of(x.ncols() as f64);
    let eps = T::of(eps);
    let mut xhat = x.to_owned();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().fold(T::zero(), |a, &v| a + v * v) / d;
        *r = T::one() / (var + eps).sqrt();
        let s = *r;
        row.mapv_inplace(|v| v * s);
    }
    let mut y = &xhat * &gain;
    y += &bias;
    (y, LayerNormCache { xhat, rstd })
}

/// Returns `dx` and accumulates into `dgain`, `dbias`.
pub(crate) fn layer_norm_backward<T: Scalar>(
    dy: ArrayView2<'_, T>,
    cache: &LayerNormCache<T>,
    gain: ArrayView1<'_, T>,
    dgain: &mut ndarray::ArrayViewMut1<'_, T>,
    dbias: &mut ndarray::ArrayViewMut1<'_, T>,
) -> Array2<T> {
    *dgain += &(&dy * &cache.xhat).sum_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0));
    let d = T::of(dy.ncols() as f64);
    let mut dx = &dy * &gain;
    Zip::from(dx.rows_mut())
        .and(cache.xhat.rows())
        .and(&cache.rstd)
        .for_each(|mut g, xh, &r| {
            let mean_g = g.sum() / d;
            let mean_gx = g.iter().zip(xh.iter()).fold(T::zero(), |a, (&gi, &xi)| a + gi * xi) / d;
            Zip::from(&mut g).and(&xh).for_each(|gi, &xi| {
                *gi = r * (*gi - mean_g - xi * mean_gx);
            });
        });
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub(crate) fn gelu<T: Scalar>(u: T) -> T {
    let (c, a, half) = (T::of(GELU_C), T::of(GELU_A), T::of(0.5));
    half * u * (T::one() + (c * (u + a * u * u * u)).tanh())
}

pub(crate) fn gelu_grad<T: Scalar>(u: T) -> T {
    let (c, a, half) = (T::of(GELU_C), T::of(GELU_A), T::of(0.5));
    let t = (c * (u + a * u * u * u)).tanh();
    half * (T::one() + t) + half * u * (T::one() - t * t) * c * (T::one() + T::of(3.0) * a * u * u)
}

/// Softmax of every row, in place.
pub(crate) fn softmax_rows<T: Scalar>(s: &mut Array2<T>) {
    for mut row in s.rows_mut() {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
}

/// Given `p = softmax(s)` row-wise and `dp`, returns `ds`.
pub(crate) fn softmax_rows_backward<T: Scalar>(p: ArrayView2<'_, T>, dp: ArrayView2<'_, T>) -> Array2<T> {
    let mut ds = &dp * &p;
    for (mut row, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
        let dot = row.sum();
        Zip::from(&mut row).and(&prow).for_each(|d, &pi| *d = *d - pi * dot);
    }
    ds
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn layer_norm_rows_are_standardised() {
        let x = array![[1.0f64, 2.0, 3.0, 6.0], [0.5, 0.5, -1.0, 2.0]];
        let g = Array1::ones(4);
        let b = Array1::zeros(4);
        let (y, _) = layer_norm(x.view(), g.view(), b.view(), 1e-12);
        for row in y.rows() {
            assert!(row.sum().abs() < 1e-12);
            assert!((row.mapv(|v| v * v).sum() / 4.0 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gelu_derivative_matches_differences() {
        for &u in &[-3.0f64, -0.7, 0.0, 0.2, 1.5, 4.0] {
            let h = 1e-6;
            let fd = (gelu(u + h) - gelu(u - h)) / (2.0 * h);
            assert!((fd - gelu_grad(u)).abs() < 1e-8, "u={u}");
        }
        assert_eq!(gelu(0.0f64), 0.0);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut s = array![[1.0f64, 2.0, 3.0], [1000.0, 1000.0, -5.0]];
        softmax_rows(&mut s);
        for row in s.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }
}
