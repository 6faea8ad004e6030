//! Lossless partitioning of dense matrices into equal-size block grids.

use ndarray::{s, Array2};

use crate::error::{Error, Result};

/// A matrix split into a `grid_rows x grid_cols` grid of equally sized blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMatrix {
    rows: usize,
    cols: usize,
    grid_rows: usize,
    grid_cols: usize,
    blocks: Vec<Array2<f64>>, // row-major over the grid
}

impl BlockMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn grid_rows(&self) -> usize {
        self.grid_rows
    }

    pub fn grid_cols(&self) -> usize {
        self.grid_cols
    }

    /// Shape of each block: `(rows / grid_rows, cols / grid_cols)`.
    pub fn block_shape(&self) -> (usize, usize) {
        (self.rows / self.grid_rows, self.cols / self.grid_cols)
    }

    pub fn block(&self, i: usize, j: usize) -> &Array2<f64> {
        &self.blocks[i * self.grid_cols + j]
    }

    /// Glues the blocks back together; exact inverse of [`partition`].
    pub fn reassemble(&self) -> Array2<f64> {
        let (br, bc) = self.block_shape();
        let mut out = Array2::zeros((self.rows, self.cols));
        for i in 0..self.grid_rows {
            for j in 0..self.grid_cols {
                out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc])
                    .assign(self.block(i, j));
            }
        }
        out
    }
}

/// Splits `m` into a `u x v` grid of equal blocks. Dimensions must divide
/// exactly; there is no implicit padding.
pub fn partition(m: &Array2<f64>, u: usize, v: usize) -> Result<BlockMatrix> {
    let (rows, cols) = m.dim();
    if u == 0 || v == 0 {
        return Err(Error::Partition("grid dimensions must be >= 1".into()));
    }
    if rows % u != 0 || cols % v != 0 {
        return Err(Error::Partition(format!(
            "matrix {rows}x{cols} does not divide into a {u}x{v} grid"
        )));
    }
    let (br, bc) = (rows / u, cols / v);
    let mut blocks = Vec::with_capacity(u * v);
    for i in 0..u {
        for j in 0..v {
            blocks.push(m.slice(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]).to_owned());
        }
    }
    Ok(BlockMatrix {
        rows,
        cols,
        grid_rows: u,
        grid_cols: v,
        blocks,
    })
}
