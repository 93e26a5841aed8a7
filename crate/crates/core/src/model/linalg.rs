//! Thin safe wrappers over `matrixmultiply::sgemm`.

/// Strides of a row-major matrix with `cols` columns; `.t()` views it
/// transposed.
#[derive(Clone, Copy, Debug)]
pub struct View {
    pub rs: isize,
    pub cs: isize,
}

impl View {
    pub fn rows(cols: usize) -> Self {
        Self { rs: cols as isize, cs: 1 }
    }

    pub fn t(self) -> Self {
        Self { rs: self.cs, cs: self.rs }
    }

    fn extent(self, r: usize, c: usize) -> usize {
        if r == 0 || c == 0 {
            return 0;
        }
        (r as isize - 1) as usize * self.rs as usize + (c as isize - 1) as usize * self.cs as usize + 1
    }
}

/// `c = beta * c + a · b` where `a` is `m x k` and `b` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f32], av: View, b: &[f32], bv: View, beta: f32, c: &mut [f32], cv: View) {
    assert!(a.len() >= av.extent(m, k), "lhs buffer too small");
    assert!(b.len() >= bv.extent(k, n), "rhs buffer too small");
    assert!(c.len() >= cv.extent(m, n), "output buffer too small");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the asserts above bound every index sgemm touches.
    unsafe {
        matrixmultiply::sgemm(
            m, k, n, 1.0, a.as_ptr(), av.rs, av.cs, b.as_ptr(), bv.rs, bv.cs, beta, c.as_mut_ptr(), cv.rs, cv.cs,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transposed_products() {
        // a: 2x3, b: 3x2
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [0.0; 4];
        gemm(2, 3, 2, &a, View::rows(3), &b, View::rows(2), 0.0, &mut c, View::rows(2));
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
        // a^T a: 3x3 via transposed view
        let mut g = [0.0; 9];
        gemm(3, 2, 3, &a, View::rows(3).t(), &a, View::rows(3), 0.0, &mut g, View::rows(3));
        assert_eq!(g[0], 17.0);
        assert_eq!(g[4], 29.0);
        assert_eq!(g[8], 45.0);
    }
}
