//! Raw numeric kernels over row-major slices.

use crate::par;
use crate::scalar::Scalar;

/// `c <- alpha * op(a) * op(b) + beta * c` where `op(a)` is `m x k`,
/// `op(b)` is `k x n` and `c` is `m x n`, all row-major.
///
/// With `trans_a` the buffer `a` holds the `k x m` matrix; with `trans_b`
/// the buffer `b` holds the `n x k` matrix.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    trans_a: bool,
    b: &[T],
    trans_b: bool,
    beta: T,
    c: &mut [T],
) {
    assert!(a.len() >= m * k, "gemm: lhs buffer too small");
    assert!(b.len() >= k * n, "gemm: rhs buffer too small");
    assert!(c.len() >= m * n, "gemm: output buffer too small");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c[..m * n].iter_mut() {
            *v = if beta == T::zero() { T::zero() } else { *v * beta };
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every strided access by the slice lengths.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unfolds one `[c, h, w]` image into `[c*9, h*w]` columns for a 3x3
/// kernel with stride 1 and zero padding 1.
pub fn im2col_3x3<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for kh in 0..3 {
            for kw in 0..3 {
                let r = ch * 9 + kh * 3 + kw;
                let row = &mut cols[r * hw..(r + 1) * hw];
                for oy in 0..h {
                    let out = &mut row[oy * w..(oy + 1) * w];
                    let iy = oy + kh;
                    if iy < 1 || iy > h {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[(iy - 1) * w..iy * w];
                    match kw {
                        0 => {
                            out[0] = T::zero();
                            out[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => out.copy_from_slice(src),
                        _ => {
                            out[..w - 1].copy_from_slice(&src[1..]);
                            out[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col_3x3`]: scatters columns back, accumulating into `dx`.
pub fn col2im_3x3<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, dx: &mut [T]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &mut dx[ch * hw..(ch + 1) * hw];
        for kh in 0..3 {
            for kw in 0..3 {
                let r = ch * 9 + kh * 3 + kw;
                let row = &cols[r * hw..(r + 1) * hw];
                for oy in 0..h {
                    let iy = oy + kh;
                    if iy < 1 || iy > h {
                        continue;
                    }
                    let src = &row[oy * w..(oy + 1) * w];
                    let dst = &mut plane[(iy - 1) * w..iy * w];
                    let (d, s) = match kw {
                        0 => (&mut dst[..w - 1], &src[1..]),
                        1 => (&mut dst[..], src),
                        _ => (&mut dst[1..], &src[..w - 1]),
                    };
                    for (a, &b) in d.iter_mut().zip(s) {
                        *a = *a + b;
                    }
                }
            }
        }
    }
}

/// Samples per scratch buffer and per partial kernel gradient. Fixed, so
/// the summation order never depends on the thread count.
const CONV_GROUP: usize = 8;

/// Same-padded 3x3 cross-correlation of `x: [n, c, h, w]` with
/// `k: [f, c, 3, 3]`, giving `[n, f, h, w]`.
pub fn conv3x3_forward<T: Scalar>(x: &[T], dims: [usize; 4], k: &[T], f: usize) -> Vec<T> {
    let [n, c, h, w] = dims;
    let hw = h * w;
    let c9 = c * 9;
    let mut out = vec![T::zero(); n * f * hw];
    if hw == 0 {
        return out;
    }
    par::for_each_chunk_mut(&mut out, CONV_GROUP * f * hw, |g, o| {
        let mut col = vec![T::zero(); c9 * hw];
        for (j, oi) in o.chunks_mut(f * hw).enumerate() {
            let i = g * CONV_GROUP + j;
            im2col_3x3(&x[i * c * hw..(i + 1) * c * hw], c, h, w, &mut col);
            gemm(f, c9, hw, T::one(), k, false, &col, false, T::zero(), oi);
        }
    });
    out
}

/// Gradients of [`conv3x3_forward`] with respect to the input (when
/// `need_dx`) and the kernel. Columns are rebuilt from `x`.
pub fn conv3x3_backward<T: Scalar>(
    grad_out: &[T],
    x: &[T],
    dims: [usize; 4],
    k: &[T],
    f: usize,
    need_dx: bool,
) -> (Option<Vec<T>>, Vec<T>) {
    let [n, c, h, w] = dims;
    let hw = h * w;
    let c9 = c * 9;
    let groups = n.div_ceil(CONV_GROUP);
    let mut partial = vec![T::zero(); groups * f * c9];
    let mut dx = vec![T::zero(); if need_dx { n * c * hw } else { groups }];
    let dx_chunk = if need_dx { CONV_GROUP * c * hw } else { 1 };
    if hw > 0 && f * c9 > 0 {
        par::for_each_chunk_pair_mut(&mut partial, f * c9, &mut dx, dx_chunk, |g, dk, d| {
            let mut col = vec![T::zero(); c9 * hw];
            let end = ((g + 1) * CONV_GROUP).min(n);
            for i in g * CONV_GROUP..end {
                let go = &grad_out[i * f * hw..(i + 1) * f * hw];
                im2col_3x3(&x[i * c * hw..(i + 1) * c * hw], c, h, w, &mut col);
                gemm(f, hw, c9, T::one(), go, false, &col, true, T::one(), dk);
                if need_dx {
                    gemm(c9, f, hw, T::one(), k, true, go, false, T::zero(), &mut col);
                    let j = i - g * CONV_GROUP;
                    col2im_3x3(&col, c, h, w, &mut d[j * c * hw..(j + 1) * c * hw]);
                }
            }
        });
    }
    let mut dk = vec![T::zero(); f * c9];
    for p in partial.chunks(f * c9.max(1)).take(groups) {
        for (a, &b) in dk.iter_mut().zip(p) {
            *a = *a + b;
        }
    }
    (need_dx.then_some(dx), dk)
}

/// 2x2 stride-2 max pooling. Returns the pooled map and, per output, the
/// flat input index that won (first in row-major scan on ties).
pub fn maxpool2_forward<T: Scalar>(x: &[T], dims: [usize; 4]) -> (Vec<T>, Vec<usize>) {
    let [n, c, h, w] = dims;
    let (oh, ow) = (h / 2, w / 2);
    let planes = n * c;
    let mut out = vec![T::zero(); planes * oh * ow];
    let mut arg = vec![0usize; planes * oh * ow];
    par::for_each_chunk_pair_mut(&mut out, oh * ow, &mut arg, oh * ow, |p, o, a| {
        let base = p * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = base + (2 * oy) * w + 2 * ox;
                let mut best = x[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[idx] > best {
                        best = x[idx];
                        best_idx = idx;
                    }
                }
                o[oy * ow + ox] = best;
                a[oy * ow + ox] = best_idx;
            }
        }
    });
    (out, arg)
}
