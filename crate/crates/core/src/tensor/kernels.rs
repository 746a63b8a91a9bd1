//! Raw slice kernels behind the tensor ops. All parallel paths split work
//! by independent output rows/batches, so results are bit-identical for
//! any thread count (no cross-thread float reassociation).

use crate::element::Element;
use rayon::prelude::*;

/// Below this many multiply-adds, threading overhead dominates; stay serial.
const PAR_FLOP_THRESHOLD: usize = 1 << 18;

/// Batched C[g] += A[g] * B[g] over equal-shaped operand slices, parallel
/// across batch entries (each entry computed serially, so results do not
/// depend on the thread count).
pub fn matmul_nn_batched<T: Element>(
    a: &[T],
    b: &[T],
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    out: &mut [T],
) {
    debug_assert_eq!(a.len(), batch * m * k);
    debug_assert_eq!(b.len(), batch * k * n);
    debug_assert_eq!(out.len(), batch * m * n);
    let body = |i: usize, chunk: &mut [T]| {
        matmul_nn_serial(
            &a[i * m * k..(i + 1) * m * k],
            &b[i * k * n..(i + 1) * k * n],
            m,
            k,
            n,
            chunk,
        );
    };
    if batch > 1 && batch * m * n * k >= PAR_FLOP_THRESHOLD {
        out.par_chunks_mut(m * n).enumerate().for_each(|(i, c)| body(i, c));
    } else {
        for (i, c) in out.chunks_mut(m * n).enumerate() {
            body(i, c);
        }
    }
}

fn matmul_nn_serial<T: Element>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for (i, orow) in out.chunks_mut(n).enumerate() {
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
}

/// C[m,n] += A[m,k] * B[k,n]. All matmul kernels accumulate into `out`.
pub fn matmul_nn<T: Element>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let row = |i: usize, orow: &mut [T]| {
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    };
    if m * n * k >= PAR_FLOP_THRESHOLD && m > 1 {
        out.par_chunks_mut(n).enumerate().for_each(|(i, orow)| row(i, orow));
    } else {
        for (i, orow) in out.chunks_mut(n).enumerate() {
            row(i, orow);
        }
    }
}

/// C[m,n] += A[m,k] * B[n,k]^T
pub fn matmul_nt<T: Element>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    let row = |i: usize, orow: &mut [T]| {
        let arow = &a[i * k..(i + 1) * k];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                acc = acc + av * bv;
            }
            *o = *o + acc;
        }
    };
    if m * n * k >= PAR_FLOP_THRESHOLD && m > 1 {
        out.par_chunks_mut(n).enumerate().for_each(|(i, orow)| row(i, orow));
    } else {
        for (i, orow) in out.chunks_mut(n).enumerate() {
            row(i, orow);
        }
    }
}

/// C[k,n] += A[m,k]^T * B[m,n]
pub fn matmul_tn<T: Element>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    let row = |p: usize, orow: &mut [T]| {
        for i in 0..m {
            let av = a[i * k + p];
            let brow = &b[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    };
    if m * n * k >= PAR_FLOP_THRESHOLD && k > 1 {
        out.par_chunks_mut(n).enumerate().for_each(|(p, orow)| row(p, orow));
    } else {
        for (p, orow) in out.chunks_mut(n).enumerate() {
            row(p, orow);
        }
    }
}

/// Batched variant of `matmul_nt`, parallel across batch entries.
pub fn matmul_nt_batched<T: Element>(
    a: &[T],
    b: &[T],
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    out: &mut [T],
) {
    let body = |i: usize, chunk: &mut [T]| {
        matmul_nt(
            &a[i * m * k..(i + 1) * m * k],
            &b[i * n * k..(i + 1) * n * k],
            m,
            k,
            n,
            chunk,
        );
    };
    if batch > 1 && batch * m * n * k >= PAR_FLOP_THRESHOLD {
        out.par_chunks_mut(m * n).enumerate().for_each(|(i, c)| body(i, c));
    } else {
        for (i, c) in out.chunks_mut(m * n).enumerate() {
            body(i, c);
        }
    }
}

/// Batched variant of `matmul_tn`, parallel across batch entries.
pub fn matmul_tn_batched<T: Element>(
    a: &[T],
    b: &[T],
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    out: &mut [T],
) {
    let body = |i: usize, chunk: &mut [T]| {
        matmul_tn(
            &a[i * m * k..(i + 1) * m * k],
            &b[i * m * n..(i + 1) * m * n],
            m,
            k,
            n,
            chunk,
        );
    };
    if batch > 1 && batch * m * n * k >= PAR_FLOP_THRESHOLD {
        out.par_chunks_mut(k * n).enumerate().for_each(|(i, c)| body(i, c));
    } else {
        for (i, c) in out.chunks_mut(k * n).enumerate() {
            body(i, c);
        }
    }
}

/// Row-major strides for a shape.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Permute axes of a dense row-major buffer.
pub fn permute<T: Element>(data: &[T], shape: &[usize], axes: &[usize]) -> Vec<T> {
    let rank = shape.len();
    debug_assert_eq!(axes.len(), rank);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let in_strides = strides(shape);
    let out_strides = strides(&out_shape);
    let numel: usize = shape.iter().product();
    let mut out = vec![T::zero(); numel];
    // walk output linearly, map each index back to the input offset
    let mut idx = vec![0usize; rank];
    for (o, slot) in out.iter_mut().enumerate() {
        let mut rem = o;
        for d in 0..rank {
            idx[d] = rem / out_strides[d];
            rem %= out_strides[d];
        }
        let mut src = 0usize;
        for d in 0..rank {
            src += idx[d] * in_strides[axes[d]];
        }
        *slot = data[src];
    }
    out
}

/// Inverse of an axis permutation.
pub fn inverse_axes(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}
