//! Row-major index arithmetic over the product support of a two-asset system.
//!
//! Axes are ordered `x_1, .., x_N, y_1, .., y_N`; axis `t - 1` is `X_t` and
//! axis `N + t - 1` is `Y_t`. Every dense tensor in the crate (couplings,
//! payoff tables, projections) uses this ordering, restricted to a sorted
//! subset of axes for projections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Support points of every axis of the product grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductGrid {
    maturities: usize,
    axes: Vec<Vec<f64>>,
}

impl ProductGrid {
    /// `x_axes[t]` and `y_axes[t]` are the support points at maturity `t + 1`.
    pub fn new(x_axes: Vec<Vec<f64>>, y_axes: Vec<Vec<f64>>) -> Result<Self> {
        if x_axes.len() != y_axes.len() || x_axes.is_empty() {
            return Err(Error::shape(format!(
                "both assets need the same positive number of maturities, got {} and {}",
                x_axes.len(),
                y_axes.len()
            )));
        }
        if x_axes.iter().chain(&y_axes).any(|a| a.is_empty()) {
            return Err(Error::shape("every axis needs at least one point"));
        }
        let maturities = x_axes.len();
        let mut axes = x_axes;
        axes.extend(y_axes);
        Ok(Self { maturities, axes })
    }

    /// Number of maturities `N`.
    pub fn maturities(&self) -> usize {
        self.maturities
    }

    pub fn num_axes(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, axis: usize) -> &[f64] {
        &self.axes[axis]
    }

    pub fn x_axis(&self, t: usize) -> usize {
        t - 1
    }

    pub fn y_axis(&self, t: usize) -> usize {
        self.maturities + t - 1
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    /// Total number of full-grid points.
    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shape of the sub-grid spanned by `axes` (sorted ascending).
    pub fn sub_shape(&self, axes: &[usize]) -> Vec<usize> {
        axes.iter().map(|&a| self.axes[a].len()).collect()
    }

    pub fn sub_len(&self, axes: &[usize]) -> usize {
        axes.iter().map(|&a| self.axes[a].len()).product()
    }

    /// Values of the grid point with multi-index `idx`, split into `(x, y)` paths.
    pub fn path_values(&self, idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let n = self.maturities;
        let x = (0..n).map(|a| self.axes[a][idx[a]]).collect();
        let y = (n..2 * n).map(|a| self.axes[a][idx[a]]).collect();
        (x, y)
    }
}

/// Row-major strides for `shape`.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

pub fn ravel(idx: &[usize], shape: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (&i, &n)| acc * n + i)
}

pub fn unravel(mut flat: usize, shape: &[usize], out: &mut [usize]) {
    for k in (0..shape.len()).rev() {
        out[k] = flat % shape[k];
        flat /= shape[k];
    }
}

/// Iterator over all multi-indices of `shape` in row-major order.
pub struct MultiIndex {
    shape: Vec<usize>,
    current: Vec<usize>,
    done: bool,
}

impl MultiIndex {
    pub fn new(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            current: vec![0; shape.len()],
            done: shape.contains(&0),
        }
    }
}

impl Iterator for MultiIndex {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        let mut k = self.shape.len();
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            self.current[k] += 1;
            if self.current[k] < self.shape[k] {
                break;
            }
            self.current[k] = 0;
        }
        Some(out)
    }
}

/// Maps every full-grid flat index to its flat index on the sub-grid of `axes`.
pub fn projection_map(full_shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let sub_shape: Vec<usize> = axes.iter().map(|&a| full_shape[a]).collect();
    let total: usize = full_shape.iter().product();
    let mut idx = vec![0; full_shape.len()];
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        unravel(flat, full_shape, &mut idx);
        let sub = axes.iter().zip(&sub_shape).fold(0, |acc, (&a, &n)| acc * n + idx[a]);
        out.push(sub);
    }
    out
}

/// Flat index on the sub-grid `sub_axes` of a point given on the sub-grid
/// `axes` (`sub_axes` must be a subset of `axes`).
pub fn restrict_index(
    idx_on_axes: &[usize],
    axes: &[usize],
    sub_axes: &[usize],
    full_shape: &[usize],
) -> usize {
    sub_axes.iter().fold(0, |acc, &a| {
        let pos = axes
            .iter()
            .position(|&b| b == a)
            .expect("sub_axes must be contained in axes");
        acc * full_shape[a] + idx_on_axes[pos]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ravel_unravel_agree() {
        let shape = [3, 1, 4, 2];
        let mut idx = [0; 4];
        for flat in 0..24 {
            unravel(flat, &shape, &mut idx);
            assert_eq!(ravel(&idx, &shape), flat);
        }
        assert_eq!(strides(&shape), vec![8, 8, 2, 1]);
    }

    #[test]
    fn multi_index_covers_grid_in_order() {
        let all: Vec<_> = MultiIndex::new(&[2, 3]).collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], vec![0, 0]);
        assert_eq!(all[4], vec![1, 1]);
        assert_eq!(MultiIndex::new(&[]).count(), 1);
    }

    #[test]
    fn projection_map_sums_to_marginal_counts() {
        let shape = [2, 3, 2];
        let map = projection_map(&shape, &[0, 2]);
        let mut counts = vec![0; 4];
        for s in map {
            counts[s] += 1;
        }
        assert_eq!(counts, vec![3; 4]);
    }

    #[test]
    fn restrict_index_picks_sub_coordinates() {
        let full = [3, 4, 5];
        // point (2, _, 4) on axes [0, 2] restricted to [2]
        assert_eq!(restrict_index(&[2, 4], &[0, 2], &[2], &full), 4);
        assert_eq!(restrict_index(&[2, 1, 4], &[0, 1, 2], &[0, 2], &full), 2 * 5 + 4);
    }
}
