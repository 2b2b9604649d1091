//! Dimension-by-dimension application of small dense 1D operators to nodal
//! tensors.
//!
//! Arrays are laid out fastest-first as `[outer][n_{d-1}]...[n_0][inner]`,
//! where `inner` is usually the number of conserved variables and `outer`
//! counts repeated blocks (for instance time slices of a space-time tensor).

/// A row-major dense matrix with `rows × cols` entries.
#[derive(Clone, Debug, PartialEq)]
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

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        Mat::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).map(|k| self.at(i, k) * other.at(k, j)).sum()
        })
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Applies `mat` along tensor axis `axis`.
///
/// `ext` holds the extents of the `ext.len()` tensor axes (fastest first).
/// The source extent along `axis` must equal `mat.cols`; the destination has
/// `mat.rows` there. Any multiple of the tensor size in `src` is treated as
/// repeated outer blocks.
pub fn apply_axis(src: &[f64], ext: &[usize], inner: usize, axis: usize, mat: &Mat, dst: &mut Vec<f64>) {
    debug_assert_eq!(ext[axis], mat.cols);
    let stride: usize = inner * ext[..axis].iter().product::<usize>();
    let (rows, cols) = (mat.rows, mat.cols);
    let in_block = stride * cols;
    let out_block = stride * rows;
    let n_blocks = src.len() / in_block;
    // Every entry is assigned below, so only the length needs fixing.
    dst.resize(n_blocks * out_block, 0.0);
    dst.truncate(n_blocks * out_block);
    if cols == 0 {
        dst.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    for (s, d) in src.chunks_exact(in_block).zip(dst.chunks_exact_mut(out_block)) {
        for (row, drow) in d.chunks_exact_mut(stride).enumerate() {
            let m = &mat.data[row * cols..(row + 1) * cols];
            let s0 = &s[..stride];
            for (x, y) in drow.iter_mut().zip(s0) {
                *x = m[0] * y;
            }
            for (col, &mc) in m.iter().enumerate().skip(1) {
                let scol = &s[col * stride..(col + 1) * stride];
                for (x, y) in drow.iter_mut().zip(scol) {
                    *x += mc * y;
                }
            }
        }
    }
}

/// Applies one matrix per axis (tensor-product operator). `mats[a]` maps
/// extent `ext[a]` to `mats[a].rows`.
pub fn apply_tensor(src: &[f64], ext: &[usize], inner: usize, mats: &[&Mat]) -> Vec<f64> {
    let mut cur = src.to_vec();
    let mut ext = ext.to_vec();
    let mut tmp = Vec::new();
    for (axis, m) in mats.iter().enumerate() {
        apply_axis(&cur, &ext, inner, axis, m, &mut tmp);
        std::mem::swap(&mut cur, &mut tmp);
        ext[axis] = m.rows;
    }
    cur
}

/// Like [`apply_tensor`] but `None` entries leave that axis untouched.
pub fn apply_tensor_opt(src: &[f64], ext: &[usize], inner: usize, mats: &[Option<&Mat>]) -> Vec<f64> {
    let mut cur = src.to_vec();
    let mut ext = ext.to_vec();
    let mut tmp = Vec::new();
    for (axis, m) in mats.iter().enumerate() {
        if let Some(m) = m {
            apply_axis(&cur, &ext, inner, axis, m, &mut tmp);
            std::mem::swap(&mut cur, &mut tmp);
            ext[axis] = m.rows;
        }
    }
    cur
}

/// Decomposes a flat tensor index into per-axis indices (fastest first).
#[inline]
pub fn unflatten(mut idx: usize, n: usize, dim: usize) -> [usize; 3] {
    let mut out = [0usize; 3];
    for o in out.iter_mut().take(dim) {
        *o = idx % n;
        idx /= n;
    }
    out
}

#[inline]
pub fn flatten(ix: &[usize; 3], n: usize, dim: usize) -> usize {
    let mut idx = 0;
    for a in (0..dim).rev() {
        idx = idx * n + ix[a];
    }
    idx
}
