use rayon::prelude::*;

use crate::lattice::Point;

const PAR_THRESHOLD: usize = 1 << 15;

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct Csr {
    pub rows: usize,
    pub cols: usize,
    pub ptr: Vec<usize>,
    pub col: Vec<u32>,
    pub val: Vec<f64>,
}

impl Csr {
    pub fn builder(cols: usize) -> CsrBuilder {
        CsrBuilder { cols, ptr: vec![0], col: Vec::new(), val: Vec::new() }
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.ptr[i], self.ptr[i + 1]);
        (&self.col[a..b], &self.val[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        match c.binary_search(&(j as u32)) {
            Ok(k) => v[k],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let body = |(i, yi): (usize, &mut f64)| {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, &a)| a * x[j as usize]).sum();
        };
        if self.rows >= PAR_THRESHOLD {
            y.par_iter_mut().enumerate().for_each(body);
        } else {
            y.iter_mut().enumerate().for_each(body);
        }
    }

    pub fn transpose(&self) -> Csr {
        let mut count = vec![0usize; self.cols + 1];
        for &j in &self.col {
            count[j as usize + 1] += 1;
        }
        for j in 0..self.cols {
            count[j + 1] += count[j];
        }
        let ptr = count.clone();
        let mut next = count;
        let mut col = vec![0u32; self.nnz()];
        let mut val = vec![0.0; self.nnz()];
        for i in 0..self.rows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                let k = next[j as usize];
                col[k] = i as u32;
                val[k] = a;
                next[j as usize] += 1;
            }
        }
        Csr { rows: self.cols, cols: self.rows, ptr, col, val }
    }

    /// self · other, with explicit zeros dropped.
    pub fn multiply(&self, other: &Csr) -> Csr {
        assert_eq!(self.cols, other.rows);
        let chunk = 4096;
        let blocks: Vec<(Vec<usize>, Vec<u32>, Vec<f64>)> = (0..self.rows.div_ceil(chunk))
            .into_par_iter()
            .map(|b| {
                let mut marker = vec![usize::MAX; other.cols];
                let mut acc = vec![0.0; other.cols];
                let mut lens = Vec::new();
                let mut col = Vec::new();
                let mut val = Vec::new();
                let mut touched: Vec<u32> = Vec::new();
                for i in b * chunk..((b + 1) * chunk).min(self.rows) {
                    touched.clear();
                    let (ca, va) = self.row(i);
                    for (&k, &a) in ca.iter().zip(va) {
                        let (cb, vb) = other.row(k as usize);
                        for (&j, &bv) in cb.iter().zip(vb) {
                            let j = j as usize;
                            if marker[j] != i {
                                marker[j] = i;
                                acc[j] = 0.0;
                                touched.push(j as u32);
                            }
                            acc[j] += a * bv;
                        }
                    }
                    touched.sort_unstable();
                    let before = col.len();
                    for &j in &touched {
                        let v = acc[j as usize];
                        if v != 0.0 {
                            col.push(j);
                            val.push(v);
                        }
                    }
                    lens.push(col.len() - before);
                }
                (lens, col, val)
            })
            .collect();
        let mut out = Csr::builder(other.cols);
        for (lens, col, val) in blocks {
            let mut k = 0;
            for len in lens {
                out.push_row(&col[k..k + len], &val[k..k + len]);
                k += len;
            }
        }
        out.finish()
    }
}

pub struct CsrBuilder {
    cols: usize,
    ptr: Vec<usize>,
    col: Vec<u32>,
    val: Vec<f64>,
}

impl CsrBuilder {
    /// Appends a row; columns must be strictly increasing.
    pub fn push_row(&mut self, col: &[u32], val: &[f64]) {
        self.col.extend_from_slice(col);
        self.val.extend_from_slice(val);
        self.ptr.push(self.col.len());
    }

    /// Appends a row from unsorted (column, value) pairs, summing duplicates.
    pub fn push_unsorted(&mut self, entries: &mut [(u32, f64)]) {
        entries.sort_unstable_by_key(|e| e.0);
        let mut last: Option<u32> = None;
        for &(j, v) in entries.iter() {
            if last == Some(j) {
                *self.val.last_mut().unwrap() += v;
            } else {
                self.col.push(j);
                self.val.push(v);
                last = Some(j);
            }
        }
        self.ptr.push(self.col.len());
    }

    pub fn finish(self) -> Csr {
        Csr { rows: self.ptr.len() - 1, cols: self.cols, ptr: self.ptr, col: self.col, val: self.val }
    }
}

/// Dense lookup from lattice points to indices over a bounding box.
#[derive(Clone, Debug)]
pub struct PointIndex {
    lo: Point,
    w: i64,
    h: i64,
    slots: Vec<u32>,
}

impl PointIndex {
    pub fn new(points: &[Point]) -> Self {
        if points.is_empty() {
            return PointIndex { lo: Point::ORIGIN, w: 0, h: 0, slots: Vec::new() };
        }
        let (mut lo, mut hi) = (points[0], points[0]);
        for p in points {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let (w, h) = (hi.x - lo.x + 1, hi.y - lo.y + 1);
        let mut slots = vec![u32::MAX; (w * h) as usize];
        for (i, p) in points.iter().enumerate() {
            slots[((p.x - lo.x) * h + (p.y - lo.y)) as usize] = i as u32;
        }
        PointIndex { lo, w, h, slots }
    }

    pub fn get(&self, p: Point) -> Option<usize> {
        let (dx, dy) = (p.x - self.lo.x, p.y - self.lo.y);
        if dx < 0 || dy < 0 || dx >= self.w || dy >= self.h {
            return None;
        }
        match self.slots[(dx * self.h + dy) as usize] {
            u32::MAX => None,
            i => Some(i as usize),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    if a.len() >= PAR_THRESHOLD {
        a.par_iter().zip(b).map(|(x, y)| x * y).sum()
    } else {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Csr {
        let mut b = Csr::builder(3);
        b.push_row(&[0, 1], &[2.0, -1.0]);
        b.push_row(&[0, 1, 2], &[-1.0, 2.0, -1.0]);
        b.push_row(&[1, 2], &[-1.0, 2.0]);
        b.finish()
    }

    #[test]
    fn matvec_and_transpose() {
        let a = small();
        let mut y = vec![0.0; 3];
        a.matvec(&[1.0, 2.0, 3.0], &mut y);
        assert_eq!(y, vec![0.0, 0.0, 4.0]);
        let t = a.transpose();
        assert_eq!(t.col, a.col);
        assert_eq!(t.val, a.val);
    }

    #[test]
    fn multiply_matches_dense() {
        let a = small();
        let p = a.multiply(&a);
        assert_eq!(p.get(0, 0), 5.0);
        assert_eq!(p.get(0, 2), 1.0);
        assert_eq!(p.get(1, 1), 6.0);
    }

    #[test]
    fn unsorted_rows_merge() {
        let mut b = Csr::builder(4);
        b.push_unsorted(&mut vec![(3, 1.0), (1, 2.0), (3, 0.5)]);
        let m = b.finish();
        assert_eq!(m.col, vec![1, 3]);
        assert_eq!(m.val, vec![2.0, 1.5]);
    }
}
