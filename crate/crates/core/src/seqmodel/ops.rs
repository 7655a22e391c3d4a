//! Dense row-major kernels shared by the forward and backward passes.

use crate::Scalar;

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `x[rows x din] * w[din x dout] + b`.
pub(crate) fn linear<T: Scalar>(x: &[T], rows: usize, w: &[T], b: &[T], din: usize, dout: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * dout];
    for r in 0..rows {
        let o = &mut out[r * dout..(r + 1) * dout];
        o.copy_from_slice(b);
        for (k, &a) in x[r * din..(r + 1) * din].iter().enumerate() {
            if a != T::zero() {
                axpy(a, &w[k * dout..(k + 1) * dout], o);
            }
        }
    }
    out
}

/// Backward of [`linear`]: accumulates `dw`, `db` and (if given) `dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward<T: Scalar>(
    x: &[T],
    dy: &[T],
    rows: usize,
    w: &[T],
    din: usize,
    dout: usize,
    dw: &mut [T],
    db: &mut [T],
    mut dx: Option<&mut [T]>,
) {
    for r in 0..rows {
        let dyr = &dy[r * dout..(r + 1) * dout];
        for (bj, &g) in db.iter_mut().zip(dyr) {
            *bj += g;
        }
        let xr = &x[r * din..(r + 1) * din];
        for k in 0..din {
            let wk = &w[k * dout..(k + 1) * dout];
            if xr[k] != T::zero() {
                axpy(xr[k], dyr, &mut dw[k * dout..(k + 1) * dout]);
            }
            if let Some(dx) = dx.as_deref_mut() {
                dx[r * din + k] += dot(dyr, wk);
            }
        }
    }
}

pub(crate) struct LnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

pub(crate) const LN_EPS: f64 = 1e-8;

pub(crate) fn layer_norm<T: Scalar>(x: &[T], rows: usize, d: usize, gain: &[T], bias: &[T]) -> (Vec<T>, LnCache<T>) {
    let mut y = vec![T::zero(); rows * d];
    let mut xhat = vec![T::zero(); rows * d];
    let mut inv_std = vec![T::zero(); rows];
    let n = T::of(d as f64);
    let eps = T::of(LN_EPS);
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().copied().sum::<T>() / n;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv = T::one() / (var + eps).sqrt();
        inv_std[r] = inv;
        for j in 0..d {
            let h = (xr[j] - mean) * inv;
            xhat[r * d + j] = h;
            y[r * d + j] = gain[j] * h + bias[j];
        }
    }
    (y, LnCache { xhat, inv_std })
}

pub(crate) fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    cache: &LnCache<T>,
    rows: usize,
    d: usize,
    gain: &[T],
    dgain: &mut [T],
    dbias: &mut [T],
) -> Vec<T> {
    let mut dx = vec![T::zero(); rows * d];
    let n = T::of(d as f64);
    let mut dxhat = vec![T::zero(); d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for j in 0..d {
            dgain[j] += dyr[j] * xh[j];
            dbias[j] += dyr[j];
            dxhat[j] = dyr[j] * gain[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat /= n;
        mean_dxhat_xhat /= n;
        let inv = cache.inv_std[r];
        for j in 0..d {
            dx[r * d + j] = inv * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    dx
}

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Logistic sigmoid, stable at both tails.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
