//! Row-parallel dense matrix products.
//!
//! Each output row is produced by one task with a fixed summation order, so
//! results are bit-identical between [`ExecMode::Sequential`] and
//! [`ExecMode::Parallel`].

use crate::par::{self, ExecMode};

/// Below this many multiply-adds the parallel path is not worth scheduling.
const PAR_THRESHOLD: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// `A · B`
    NN,
    /// `A · Bᵀ`
    NT,
    /// `Aᵀ · B`
    TN,
}

/// Output shape `(m, n)` and inner dimension `k` for the given layout and
/// stored operand shapes, or `None` when they are incompatible.
pub fn product_dims(
    layout: Layout,
    a: (usize, usize),
    b: (usize, usize),
) -> Option<(usize, usize, usize)> {
    let (m, ka) = match layout {
        Layout::TN => (a.1, a.0),
        _ => a,
    };
    let (kb, n) = match layout {
        Layout::NT => (b.1, b.0),
        _ => b,
    };
    (ka == kb).then_some((m, ka, n))
}

/// Computes the product of row-major `a` (stored `a_shape`) and `b` (stored
/// `b_shape`) under `layout`. Panics on incompatible shapes; callers validate.
pub fn gemm(
    mode: ExecMode,
    layout: Layout,
    a: &[f64],
    a_shape: (usize, usize),
    b: &[f64],
    b_shape: (usize, usize),
) -> Vec<f64> {
    let (m, k, n) = product_dims(layout, a_shape, b_shape).expect("incompatible gemm shapes");
    let mut out = vec![0.0; m * n];
    let mode = if m * n * k >= PAR_THRESHOLD {
        mode
    } else {
        ExecMode::Sequential
    };
    match layout {
        Layout::NN => par::for_each_row(mode, &mut out, n, |i, row| {
            let a_row = &a[i * k..(i + 1) * k];
            for (p, &x) in a_row.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let b_row = &b[p * n..(p + 1) * n];
                for (o, &y) in row.iter_mut().zip(b_row) {
                    *o += x * y;
                }
            }
        }),
        Layout::NT => par::for_each_row(mode, &mut out, n, |i, row| {
            let a_row = &a[i * k..(i + 1) * k];
            for (j, o) in row.iter_mut().enumerate() {
                let b_row = &b[j * k..(j + 1) * k];
                *o = dot(a_row, b_row);
            }
        }),
        Layout::TN => par::for_each_row(mode, &mut out, n, |i, row| {
            for p in 0..k {
                let x = a[p * m + i];
                if x == 0.0 {
                    continue;
                }
                let b_row = &b[p * n..(p + 1) * n];
                for (o, &y) in row.iter_mut().zip(b_row) {
                    *o += x * y;
                }
            }
        }),
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
