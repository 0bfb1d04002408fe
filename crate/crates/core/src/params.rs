//! Flat parameter blocks shared by the policy and the control variate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense row-major matrix; vectors are stored as `rows × 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Block {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Block { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Block { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out += self · x`
    pub fn matvec_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o += dot(self.row(r), x);
        }
    }

    /// `out += selfᵀ · y`
    pub fn matvec_t_acc(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += yr * w;
            }
        }
    }

    /// `self += y ⊗ x`
    pub fn outer_acc(&mut self, y: &[f64], x: &[f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (w, xc) in self.row_mut(r).iter_mut().zip(x) {
                *w += yr * xc;
            }
        }
    }

    pub fn same_shape(&self, other: &Block) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A named collection of parameter slices, visited in a fixed order.
///
/// Optimizers, checkpoints and gradient checks operate on this view so
/// that the policy, the control variate and the temperature share one code
/// path.
pub trait ParamStore {
    fn names(&self) -> Vec<&'static str>;
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    /// Called by optimizers after an in-place update.
    fn mark_updated(&mut self) {}

    fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for s in self.slices() {
            out.extend_from_slice(s);
        }
        out
    }

    fn fill_zero(&mut self) {
        for s in self.slices_mut() {
            s.fill(0.0);
        }
        self.mark_updated();
    }

    /// Overwrite every coordinate from a flat vector in `flatten` order.
    fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::ShapeMismatch(format!(
                "flat vector has {} entries, store has {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        self.mark_updated();
        Ok(())
    }

    fn get_flat(&self, index: usize) -> f64 {
        let mut offset = index;
        for s in self.slices() {
            if offset < s.len() {
                return s[offset];
            }
            offset -= s.len();
        }
        panic!("flat index {index} out of range")
    }

    fn set_flat(&mut self, index: usize, value: f64) {
        let mut offset = index;
        for s in self.slices_mut() {
            if offset < s.len() {
                s[offset] = value;
                self.mark_updated();
                return;
            }
            offset -= s.len();
        }
        panic!("flat index {index} out of range")
    }

    /// `self += alpha · other`; shapes must agree.
    fn add_scaled(&mut self, alpha: f64, other: &dyn ParamStore) -> Result<()> {
        let theirs = other.slices();
        let mut mine = self.slices_mut();
        if mine.len() != theirs.len() || mine.iter().zip(&theirs).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::ShapeMismatch("parameter stores differ".into()));
        }
        for (a, b) in mine.iter_mut().zip(theirs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
        drop(mine);
        self.mark_updated();
        Ok(())
    }

    fn dot_with(&self, other: &dyn ParamStore) -> f64 {
        self.slices().iter().zip(other.slices()).map(|(a, b)| dot(a, b)).sum()
    }

    fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Human-readable coordinate labels, e.g. `output_proj[2,0]`.
    fn coordinate_labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.num_params());
        for (name, s) in self.names().into_iter().zip(self.slices()) {
            for i in 0..s.len() {
                out.push(format!("{name}[{i}]"));
            }
        }
        out
    }
}
