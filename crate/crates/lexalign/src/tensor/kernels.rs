//! Raw numeric kernels shared by the tape's forward and backward passes.
//!
//! Determinism contract: every output element is produced by one fixed-order
//! sequential reduction. The rayon paths only split work across output rows,
//! which leaves each element's accumulation order unchanged, so results are
//! bitwise identical regardless of thread count.

use super::Real;
use rayon::prelude::*;

/// Below this many multiply-adds the parallel dispatch overhead dominates.
const PAR_THRESHOLD: usize = 1 << 15;

/// C[m,n] = A[m,k] * B[k,n]
pub fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let row = |i: usize, out_row: &mut [T]| {
        out_row.fill(T::zero());
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row.iter()) {
                *o = *o + a_ip * bv;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD && m > 1 {
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, out_row)| row(i, out_row));
    } else {
        for (i, out_row) in out.chunks_mut(n).enumerate() {
            row(i, out_row);
        }
    }
}

/// C[m,n] = A[m,k] * B[n,k]^T   (rows of B are the columns of the product)
pub fn matmul_nt<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    let row = |i: usize, out_row: &mut [T]| {
        let a_row = &a[i * k..(i + 1) * k];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut s = T::zero();
            for (&x, &y) in a_row.iter().zip(b_row.iter()) {
                s = s + x * y;
            }
            *o = s;
        }
    };
    if m * k * n >= PAR_THRESHOLD && m > 1 {
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, out_row)| row(i, out_row));
    } else {
        for (i, out_row) in out.chunks_mut(n).enumerate() {
            row(i, out_row);
        }
    }
}

/// C[k,n] = A[m,k]^T * B[m,n]
pub fn matmul_tn<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    let row = |p: usize, out_row: &mut [T]| {
        out_row.fill(T::zero());
        for i in 0..m {
            let a_ip = a[i * k + p];
            let b_row = &b[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row.iter()) {
                *o = *o + a_ip * bv;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD && k > 1 {
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(p, out_row)| row(p, out_row));
    } else {
        for (p, out_row) in out.chunks_mut(n).enumerate() {
            row(p, out_row);
        }
    }
}

/// Row-wise max-subtracted softmax, in place over a [rows, cols] buffer.
pub fn softmax_rows_inplace<T: Real>(data: &mut [T], cols: usize) {
    if cols == 0 {
        return;
    }
    for row in data.chunks_mut(cols) {
        let mut max = row[0];
        for &x in row.iter() {
            if x > max {
                max = x;
            }
        }
        let mut sum = T::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum = sum + *x;
        }
        for x in row.iter_mut() {
            *x = *x / sum;
        }
    }
}

/// Row-wise log-sum-exp for [rows, cols]; used by the cross-entropy kernel.
pub fn log_sum_exp_row<T: Real>(row: &[T]) -> T {
    let mut max = row[0];
    for &x in row.iter() {
        if x > max {
            max = x;
        }
    }
    let mut sum = T::zero();
    for &x in row.iter() {
        sum = sum + (x - max).exp();
    }
    max + sum.ln()
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu<T: Real>(x: T) -> T {
    let c = T::from64(GELU_C);
    let a = T::from64(GELU_A);
    let half = T::from64(0.5);
    let inner = c * (x + a * x * x * x);
    half * x * (T::one() + inner.tanh())
}

/// d gelu / dx for the tanh approximation.
pub fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::from64(GELU_C);
    let a = T::from64(GELU_A);
    let half = T::from64(0.5);
    let three = T::from64(3.0);
    let inner = c * (x + a * x * x * x);
    let t = inner.tanh();
    let sech2 = T::one() - t * t;
    let d_inner = c * (T::one() + three * a * x * x);
    half * (T::one() + t) + half * x * sech2 * d_inner
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        // [[1,2],[3,4]] * [[5,6],[7,8]] = [[19,22],[43,50]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0f64; 4];
        matmul(&a, &b, 2, 2, 2, &mut c);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_variants_agree() {
        let mut rng = crate::tensor::Rng::new(17);
        let m = 5;
        let k = 7;
        let n = 3;
        let a: Vec<f64> = (0..m * k).map(|_| rng.next_normal()).collect();
        let b: Vec<f64> = (0..k * n).map(|_| rng.next_normal()).collect();
        let mut c = vec![0.0; m * n];
        matmul(&a, &b, m, k, n, &mut c);

        // nt: build B^T then multiply by matmul_nt against rows of B^T.
        let mut bt = vec![0.0; n * k];
        for i in 0..k {
            for j in 0..n {
                bt[j * k + i] = b[i * n + j];
            }
        }
        let mut c2 = vec![0.0; m * n];
        matmul_nt(&a, &bt, m, k, n, &mut c2);
        for (x, y) in c.iter().zip(c2.iter()) {
            assert!((x - y).abs() < 1e-12);
        }

        // tn: A^T^T * B
        let mut at = vec![0.0; k * m];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        let mut c3 = vec![0.0; m * n];
        matmul_tn(&at, &b, k, m, n, &mut c3);
        for (x, y) in c.iter().zip(c3.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn parallel_path_bitwise_matches_serial() {
        let mut rng = crate::tensor::Rng::new(3);
        // Big enough to trip the parallel path.
        let m = 64;
        let k = 64;
        let n = 64;
        let a: Vec<f32> = (0..m * k).map(|_| rng.next_normal() as f32).collect();
        let b: Vec<f32> = (0..k * n).map(|_| rng.next_normal() as f32).collect();
        let mut big = vec![0.0f32; m * n];
        matmul(&a, &b, m, k, n, &mut big);
        // Serial reference: same row kernel, forced sequential.
        let mut serial = vec![0.0f32; m * n];
        for i in 0..m {
            for p in 0..k {
                let a_ip = a[i * k + p];
                for j in 0..n {
                    serial[i * n + j] += a_ip * b[p * n + j];
                }
            }
        }
        assert_eq!(big, serial);
    }

    #[test]
    fn softmax_rows_stable() {
        let mut x = [1000.0f64, 0.0];
        softmax_rows_inplace(&mut x, 2);
        assert!(x[0] > 0.999_999);
        assert!(x[1] < 1e-300);
        assert!((x[0] + x[1] - 1.0).abs() < 1e-12);
    }
}
