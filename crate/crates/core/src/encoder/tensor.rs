/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape {rows}x{cols} vs {} values", data.len());
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Mat::from_vec(rows.len(), cols, data)
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
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// `self * other`
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul inner dimensions");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * other^T`
    pub fn matmul_t(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_t inner dimensions");
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        out
    }

    /// `acc += self^T * other`
    pub fn t_matmul_into(&self, other: &Mat, acc: &mut Mat) {
        assert_eq!(self.rows, other.rows, "t_matmul inner dimensions");
        assert_eq!((acc.rows, acc.cols), (self.cols, other.cols), "t_matmul output shape");
        for k in 0..self.rows {
            let b = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &bv) in acc.row_mut(i).iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
    }

    pub fn add_row_vector(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.cols);
        for i in 0..self.rows {
            for (x, &b) in self.row_mut(i).iter_mut().zip(v) {
                *x += b;
            }
        }
    }

    /// Adds column sums of `self` into `acc`.
    pub fn col_sums_into(&self, acc: &mut [f64]) {
        assert_eq!(acc.len(), self.cols);
        for i in 0..self.rows {
            for (a, &x) in acc.iter_mut().zip(self.row(i)) {
                *a += x;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Columns `[start, start + width)` as a new matrix.
    pub fn columns(&self, start: usize, width: usize) -> Mat {
        let mut out = Mat::zeros(self.rows, width);
        for i in 0..self.rows {
            out.row_mut(i).copy_from_slice(&self.row(i)[start..start + width]);
        }
        out
    }

    /// Writes `block` into columns starting at `start`.
    pub fn set_columns(&mut self, start: usize, block: &Mat) {
        for i in 0..self.rows {
            let w = block.cols;
            self.row_mut(i)[start..start + w].copy_from_slice(block.row(i));
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_agree_with_naive_loops() {
        let a = Mat::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 0.0]]);
        let b = Mat::from_rows(&[vec![1.0, 0.0], vec![2.0, 1.0], vec![0.0, -1.0]]);
        let c = a.matmul(&b);
        assert_eq!(c.data, vec![5.0, -1.0, 0.0, 0.5]);

        let bt = Mat::from_rows(&[vec![1.0, 2.0, 0.0], vec![0.0, 1.0, -1.0]]);
        assert_eq!(a.matmul_t(&bt), c);

        let mut acc = Mat::zeros(3, 2);
        let d = Mat::from_rows(&[vec![1.0, 1.0], vec![2.0, 0.0]]);
        a.t_matmul_into(&d, &mut acc);
        // a^T d
        assert_eq!(acc.data, vec![-1.0, 1.0, 3.0, 2.0, 3.0, 3.0]);
    }

    #[test]
    fn column_blocks() {
        let mut a = Mat::from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0]]);
        let block = a.columns(2, 2);
        assert_eq!(block.data, vec![3.0, 4.0, 7.0, 8.0]);
        a.set_columns(0, &block);
        assert_eq!(a.row(1), &[7.0, 8.0, 7.0, 8.0]);
    }
}
