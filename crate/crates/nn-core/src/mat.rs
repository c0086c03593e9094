//! Row-major f64 matrix with the three GEMM variants the backward passes
//! need. Inner loops run over contiguous rows so the compiler can vectorize.

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape mismatch");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// C = A · B with A = self (m×k), B (k×n).
    pub fn matmul(&self, b: &Mat) -> Mat {
        assert_eq!(self.cols, b.rows, "matmul inner dims");
        let mut c = Mat::zeros(self.rows, b.cols);
        self.matmul_into(b, &mut c);
        c
    }

    pub fn matmul_into(&self, b: &Mat, c: &mut Mat) {
        assert_eq!(self.cols, b.rows);
        assert_eq!(c.rows, self.rows);
        assert_eq!(c.cols, b.cols);
        let row_work = self.cols * b.cols;
        let kernel = |(i, c_row): (usize, &mut [f64])| {
            let a_row = self.row(i);
            for (k, &a_ik) in a_row.iter().enumerate() {
                if a_ik == 0.0 {
                    continue;
                }
                let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
                axpy(c_row, a_ik, b_row);
            }
        };
        // output rows are disjoint, so row parallelism stays deterministic
        if self.rows >= 32 && row_work >= 4096 {
            use rayon::prelude::*;
            c.data.par_chunks_mut(c.cols).enumerate().for_each(kernel);
        } else {
            c.data.chunks_mut(c.cols).enumerate().for_each(kernel);
        }
    }

    /// C += selfᵀ · B with self (k×m), B (k×n), C (m×n).
    /// This is the weight-gradient kernel (Xᵀ · dY).
    pub fn t_matmul_acc(&self, b: &Mat, c: &mut Mat) {
        assert_eq!(self.rows, b.rows, "t_matmul rows");
        assert_eq!(c.rows, self.cols);
        assert_eq!(c.cols, b.cols);
        if self.cols >= 32 && self.rows * b.cols >= 4096 {
            use rayon::prelude::*;
            let cols = c.cols;
            c.data
                .par_chunks_mut(cols)
                .enumerate()
                .for_each(|(i, c_row)| {
                    for k in 0..self.rows {
                        let a_ki = self.data[k * self.cols + i];
                        if a_ki == 0.0 {
                            continue;
                        }
                        axpy(c_row, a_ki, b.row(k));
                    }
                });
        } else {
            for k in 0..self.rows {
                let a_row = self.row(k);
                let b_row = b.row(k);
                for (i, &a_ki) in a_row.iter().enumerate() {
                    if a_ki == 0.0 {
                        continue;
                    }
                    let c_row = &mut c.data[i * c.cols..(i + 1) * c.cols];
                    axpy(c_row, a_ki, b_row);
                }
            }
        }
    }

    /// C = self · Bᵀ with self (m×k), B (n×k), C (m×n).
    /// This is the input-gradient kernel (dY · Wᵀ).
    pub fn matmul_nt(&self, b: &Mat) -> Mat {
        assert_eq!(self.cols, b.cols, "matmul_nt inner dims");
        let mut c = Mat::zeros(self.rows, b.rows);
        let kernel = |(i, c_row): (usize, &mut [f64])| {
            let a_row = self.row(i);
            for j in 0..b.rows {
                c_row[j] = dot(a_row, b.row(j));
            }
        };
        if self.rows >= 32 && self.cols * b.rows >= 4096 {
            use rayon::prelude::*;
            c.data.par_chunks_mut(b.rows).enumerate().for_each(kernel);
        } else {
            c.data.chunks_mut(b.rows).enumerate().for_each(kernel);
        }
        c
    }

    pub fn add_row_broadcast(&mut self, bias: &[f64]) {
        assert_eq!(bias.len(), self.cols);
        for i in 0..self.rows {
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (x, b) in row.iter_mut().zip(bias) {
                *x += b;
            }
        }
    }

    /// Column sums (bias-gradient kernel).
    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            axpy(&mut out, 1.0, self.row(i));
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        axpy(&mut self.data, 1.0, &other.data);
    }
}

#[inline]
pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small_known() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transpose_variants_agree_with_matmul() {
        let a = Mat::from_vec(3, 2, vec![1.0, -2.0, 0.5, 3.0, -1.5, 2.5]);
        let b = Mat::from_vec(3, 4, (0..12).map(|i| i as f64 * 0.3 - 1.0).collect());
        // aᵀ·b via t_matmul_acc
        let mut c = Mat::zeros(2, 4);
        a.t_matmul_acc(&b, &mut c);
        // oracle: transpose then matmul
        let mut at = Mat::zeros(2, 3);
        for i in 0..3 {
            for j in 0..2 {
                at.set(j, i, a.get(i, j));
            }
        }
        let expect = at.matmul(&b);
        for (x, y) in c.data().iter().zip(expect.data()) {
            assert!((x - y).abs() < 1e-14);
        }
        // a·bᵀ via matmul_nt where shapes line up: use b (3x4), d (5x4)
        let d = Mat::from_vec(5, 4, (0..20).map(|i| (i as f64).sin()).collect());
        let nt = b.matmul_nt(&d);
        let mut dt = Mat::zeros(4, 5);
        for i in 0..5 {
            for j in 0..4 {
                dt.set(j, i, d.get(i, j));
            }
        }
        let expect2 = b.matmul(&dt);
        for (x, y) in nt.data().iter().zip(expect2.data()) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}
