//! Thin safe wrapper over `matrixmultiply::sgemm`.

/// Layout of a row-major operand as stored in memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Op {
    /// Use the matrix as stored.
    N,
    /// Use the transpose of the stored matrix.
    T,
}

/// `c = a · b + beta · c` where `a` is logically `m×k`, `b` is `k×n` and `c`
/// is a row-major `m×n` buffer.
///
/// `a` and `b` are row-major buffers of their *stored* shapes (`k×m` when
/// transposed, and so on).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    op_a: Op,
    b: &[f32],
    op_b: Op,
    beta: f32,
    c: &mut [f32],
) {
    assert_eq!(a.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(c.len(), m * n, "gemm: output length");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = match op_a {
        Op::N => (k as isize, 1),
        Op::T => (1, m as isize),
    };
    let (rsb, csb) = match op_b {
        Op::N => (n as isize, 1),
        Op::T => (1, k as isize),
    };
    // SAFETY: the asserts above guarantee every strided access stays inside
    // the three slices, and `c` does not alias `a` or `b` (unique borrow).
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
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

/// `c = a · bᵀ` for row-major `a` (`m×k`) and `b` (`n×k`), written for long
/// `k` and small `m`, `n` (conv weight gradients). Each dot product keeps
/// eight partial sums that are combined in a fixed order.
pub(crate) fn gemm_abt(m: usize, n: usize, k: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    assert_eq!(a.len(), m * k, "gemm_abt: lhs length");
    assert_eq!(b.len(), n * k, "gemm_abt: rhs length");
    assert_eq!(c.len(), m * n, "gemm_abt: output length");
    const L: usize = 8;
    let body = k - k % L;
    let mut i = 0;
    while i < m {
        let rows = (m - i).min(2);
        let mut j = 0;
        while j < n {
            let cols = (n - j).min(4);
            let mut acc = [[[0.0f32; L]; 4]; 2];
            let mut p = 0;
            while p < body {
                for (r, acc_r) in acc.iter_mut().enumerate().take(rows) {
                    let ar = &a[(i + r) * k + p..(i + r) * k + p + L];
                    for (s, acc_rs) in acc_r.iter_mut().enumerate().take(cols) {
                        let br = &b[(j + s) * k + p..(j + s) * k + p + L];
                        for l in 0..L {
                            acc_rs[l] += ar[l] * br[l];
                        }
                    }
                }
                p += L;
            }
            for r in 0..rows {
                for s in 0..cols {
                    let lanes = &acc[r][s];
                    let mut sum = ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5]))
                        + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]));
                    for q in body..k {
                        sum += a[(i + r) * k + q] * b[(j + s) * k + q];
                    }
                    c[(i + r) * n + j + s] = sum;
                }
            }
            j += cols;
        }
        i += rows;
    }
}

/// `c = a · b` as a sequence of row updates, for `m` small and `n` long.
/// `a` is `m×k` (or `k×m` when `op_a` is `T`), `b` is row-major `k×n`.
pub(crate) fn gemm_rows(m: usize, k: usize, n: usize, a: &[f32], op_a: Op, b: &[f32], c: &mut [f32]) {
    assert_eq!(a.len(), m * k, "gemm_rows: lhs length");
    assert_eq!(b.len(), k * n, "gemm_rows: rhs length");
    assert_eq!(c.len(), m * n, "gemm_rows: output length");
    for (i, out) in c.chunks_exact_mut(n).enumerate() {
        out.fill(0.0);
        for p in 0..k {
            let w = match op_a {
                Op::N => a[i * k + p],
                Op::T => a[p * m + i],
            };
            let row = &b[p * n..(p + 1) * n];
            for (o, &x) in out.iter_mut().zip(row) {
                *o += w * x;
            }
        }
    }
}
