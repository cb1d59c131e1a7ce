//! Type-I discrete sine transforms and the Dirichlet Poisson solver built on
//! them.
//!
//! The interior of a side-`N` box has `M = N - 2` sites per axis. The
//! orthogonal basis `sin(pi a i / (M+1))`, `a, i = 1..M`, diagonalizes the
//! killed random-walk kernel `P` with eigenvalues `(cos th_a + cos th_b)/2`,
//! `th_a = pi a / (M+1)`. DST-I is realized as a complex FFT of the odd
//! extension of length `2(M+1)`, so a 2D transform costs `O(M^2 log M)`.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Planned one-dimensional DST-I of length `m`:
/// `X_k = sum_{a=1..m} x_a sin(pi a k / (m+1))`.
pub struct Dst1 {
    m: usize,
    fft: Arc<dyn Fft<f64>>,
}

/// Scratch buffers for repeated transforms; allocate once per worker.
pub struct DstWorkspace {
    ext: Vec<Complex64>,
    scratch: Vec<Complex64>,
    col: Vec<f64>,
}

impl Dst1 {
    pub fn new(m: usize) -> Self {
        assert!(m >= 1);
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(2 * (m + 1));
        Dst1 { m, fft }
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn make_workspace(&self) -> DstWorkspace {
        DstWorkspace {
            ext: vec![Complex64::new(0.0, 0.0); 2 * (self.m + 1)],
            scratch: vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()],
            col: vec![0.0; self.m],
        }
    }

    /// In-place DST-I of `x` (length `m`). Unnormalized; applying twice
    /// multiplies by `(m+1)/2`.
    pub fn transform(&self, x: &mut [f64], ws: &mut DstWorkspace) {
        debug_assert_eq!(x.len(), self.m);
        let l = 2 * (self.m + 1);
        ws.ext[0] = Complex64::new(0.0, 0.0);
        ws.ext[self.m + 1] = Complex64::new(0.0, 0.0);
        for a in 1..=self.m {
            ws.ext[a] = Complex64::new(x[a - 1], 0.0);
            ws.ext[l - a] = Complex64::new(-x[a - 1], 0.0);
        }
        self.fft.process_with_scratch(&mut ws.ext, &mut ws.scratch);
        for k in 1..=self.m {
            x[k - 1] = -0.5 * ws.ext[k].im;
        }
    }
}

/// Two-dimensional DST-I on an `m x m` row-major grid.
pub struct Dst2d {
    dst: Dst1,
}

impl Dst2d {
    pub fn new(m: usize) -> Self {
        Dst2d { dst: Dst1::new(m) }
    }

    pub fn side(&self) -> usize {
        self.dst.len()
    }

    pub fn make_workspace(&self) -> DstWorkspace {
        self.dst.make_workspace()
    }

    /// In-place separable transform: rows, then columns.
    pub fn transform(&self, grid: &mut [f64], ws: &mut DstWorkspace) {
        let m = self.dst.len();
        debug_assert_eq!(grid.len(), m * m);
        for row in grid.chunks_exact_mut(m) {
            self.dst.transform(row, ws);
        }
        for x in 0..m {
            for y in 0..m {
                ws.col[y] = grid[y * m + x];
            }
            let mut col = std::mem::take(&mut ws.col);
            self.dst.transform(&mut col, ws);
            for y in 0..m {
                grid[y * m + x] = col[y];
            }
            ws.col = col;
        }
    }
}

/// Fast solver for `(I - P) h = rhs` on the interior of a side-`N` Dirichlet
/// box, where `P` averages the four lattice neighbors (zero outside).
pub struct PoissonSolver {
    dst: Dst2d,
    /// `1 / lambda_ab`, row-major over modes.
    inv_lambda: Vec<f64>,
}

impl PoissonSolver {
    /// `m` is the interior side (`N - 2`).
    pub fn new(m: usize) -> Self {
        let mut inv_lambda = vec![0.0; m * m];
        for b in 1..=m {
            let cb = (std::f64::consts::PI * b as f64 / (m + 1) as f64).cos();
            for a in 1..=m {
                let ca = (std::f64::consts::PI * a as f64 / (m + 1) as f64).cos();
                inv_lambda[(b - 1) * m + (a - 1)] = 1.0 / (1.0 - 0.5 * (ca + cb));
            }
        }
        PoissonSolver {
            dst: Dst2d::new(m),
            inv_lambda,
        }
    }

    pub fn interior_side(&self) -> usize {
        self.dst.side()
    }

    pub fn make_workspace(&self) -> DstWorkspace {
        self.dst.make_workspace()
    }

    /// Solve in place: `rhs` enters as the right-hand side on the interior
    /// grid and leaves as the solution.
    pub fn solve(&self, rhs: &mut [f64], ws: &mut DstWorkspace) {
        let m = self.dst.side();
        let norm = 2.0 / (m + 1) as f64; // (DST o DST = (m+1)/2 Id) per axis
        self.dst.transform(rhs, ws);
        for (v, il) in rhs.iter_mut().zip(&self.inv_lambda) {
            *v *= il * norm * norm;
        }
        self.dst.transform(rhs, ws);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dst1(x: &[f64]) -> Vec<f64> {
        let m = x.len();
        (1..=m)
            .map(|k| {
                (1..=m)
                    .map(|a| {
                        x[a - 1] * (std::f64::consts::PI * (a * k) as f64 / (m + 1) as f64).sin()
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_transform() {
        for m in [1usize, 2, 5, 14, 30, 62] {
            let dst = Dst1::new(m);
            let mut ws = dst.make_workspace();
            let mut x: Vec<f64> = (0..m).map(|i| ((i * 37 + 11) % 17) as f64 - 8.0).collect();
            let want = naive_dst1(&x);
            dst.transform(&mut x, &mut ws);
            for (got, want) in x.iter().zip(&want) {
                assert!((got - want).abs() < 1e-9, "m={m}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn involution_up_to_scale() {
        let m = 13;
        let dst = Dst1::new(m);
        let mut ws = dst.make_workspace();
        let orig: Vec<f64> = (0..m).map(|i| (i as f64).sin() + 0.3).collect();
        let mut x = orig.clone();
        dst.transform(&mut x, &mut ws);
        dst.transform(&mut x, &mut ws);
        let scale = (m + 1) as f64 / 2.0;
        for (a, b) in x.iter().zip(&orig) {
            assert!((a / scale - b).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_solver_inverts_operator() {
        // Check (I - P) h = rhs by applying the operator to the solution.
        let m = 14; // N = 16
        let solver = PoissonSolver::new(m);
        let mut ws = solver.make_workspace();
        let rhs: Vec<f64> = (0..m * m).map(|i| ((i % 7) as f64) - 3.0).collect();
        let mut h = rhs.clone();
        solver.solve(&mut h, &mut ws);
        let get = |x: i64, y: i64| -> f64 {
            if x < 0 || y < 0 || x >= m as i64 || y >= m as i64 {
                0.0
            } else {
                h[(y as usize) * m + x as usize]
            }
        };
        for y in 0..m as i64 {
            for x in 0..m as i64 {
                let applied = get(x, y)
                    - 0.25 * (get(x - 1, y) + get(x + 1, y) + get(x, y - 1) + get(x, y + 1));
                let want = rhs[(y as usize) * m + x as usize];
                assert!((applied - want).abs() < 1e-10, "at ({x},{y})");
            }
        }
    }
}
