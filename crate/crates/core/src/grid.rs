//! Rectangular grids and nodal functions.
//!
//! All integral quantities downstream (energies, level-set measures,
//! residual pairings) are midpoint-rule sums over cells, with the cell
//! value taken as the average of the four corner nodes and the cell
//! gradient as the average of the two forward differences along opposite
//! edges. That gradient equals the gradient of the bilinear interpolant at
//! the cell center, so it is exact on affine functions and second-order
//! consistent at cell centers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Nodes per side, boundary included.
    pub nx: usize,
    pub ny: usize,
    pub origin: [f64; 2],
    pub hx: f64,
    pub hy: f64,
}

impl Grid {
    /// Grid over the rectangle [x0,x1]×[y0,y1] with nx×ny nodes.
    pub fn new(rect: [[f64; 2]; 2], nx: usize, ny: usize) -> Result<Grid> {
        if nx < 3 || ny < 3 {
            return Err(Error::input(format!("grid must be at least 3x3 nodes, got {nx}x{ny}")));
        }
        let [x, y] = rect;
        if !(x[0] < x[1] && y[0] < y[1]) {
            return Err(Error::input(format!("degenerate rectangle {rect:?}")));
        }
        Ok(Grid {
            nx,
            ny,
            origin: [x[0], y[0]],
            hx: (x[1] - x[0]) / (nx - 1) as f64,
            hy: (y[1] - y[0]) / (ny - 1) as f64,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn node_xy(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + i as f64 * self.hx, self.origin[1] + j as f64 * self.hy]
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    pub fn n_interior(&self) -> usize {
        (self.nx - 2) * (self.ny - 2)
    }

    /// Cells per side.
    pub fn ncx(&self) -> usize {
        self.nx - 1
    }

    pub fn ncy(&self) -> usize {
        self.ny - 1
    }

    pub fn n_cells(&self) -> usize {
        self.ncx() * self.ncy()
    }

    pub fn cell_center(&self, ci: usize, cj: usize) -> [f64; 2] {
        [
            self.origin[0] + (ci as f64 + 0.5) * self.hx,
            self.origin[1] + (cj as f64 + 0.5) * self.hy,
        ]
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn total_area(&self) -> f64 {
        self.cell_area() * self.n_cells() as f64
    }

    /// Diagonal of one cell; the spatial resolution limit quoted by
    /// certificate tolerances.
    pub fn cell_diameter(&self) -> f64 {
        (self.hx * self.hx + self.hy * self.hy).sqrt()
    }
}

/// Nodal scalar function on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteFunction {
    pub grid: Grid,
    /// Row-major nodal values, y-major: index j*nx + i.
    pub values: Vec<f64>,
}

impl DiscreteFunction {
    pub fn zeros(grid: Grid) -> DiscreteFunction {
        DiscreteFunction { values: vec![0.0; grid.n_nodes()], grid }
    }

    /// Nodal interpolant of an expression in x (u slot unused).
    pub fn interpolate(grid: Grid, e: &Expr) -> DiscreteFunction {
        let mut values = Vec::with_capacity(grid.n_nodes());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(e.eval(&grid.node_xy(i, j), 0.0));
            }
        }
        DiscreteFunction { grid, values }
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.node_index(i, j)]
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.grid.n_nodes() {
            return Err(Error::input(format!(
                "value array length {} disagrees with {}x{} grid",
                self.values.len(),
                self.grid.nx,
                self.grid.ny
            )));
        }
        if let Some(pos) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite nodal value at index {pos}")));
        }
        Ok(())
    }

    /// Average of the four corner values of cell (ci, cj).
    pub fn cell_avg(&self, ci: usize, cj: usize) -> f64 {
        0.25 * (self.value(ci, cj)
            + self.value(ci + 1, cj)
            + self.value(ci, cj + 1)
            + self.value(ci + 1, cj + 1))
    }

    /// Edge-averaged forward-difference gradient of cell (ci, cj); equals
    /// the bilinear interpolant's gradient at the cell center.
    pub fn cell_grad(&self, ci: usize, cj: usize) -> [f64; 2] {
        let u00 = self.value(ci, cj);
        let u10 = self.value(ci + 1, cj);
        let u01 = self.value(ci, cj + 1);
        let u11 = self.value(ci + 1, cj + 1);
        [
            (u10 - u00 + u11 - u01) / (2.0 * self.grid.hx),
            (u01 - u00 + u11 - u10) / (2.0 * self.grid.hy),
        ]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Midpoint-rule L^q norm using cell averages.
    pub fn lq_norm(&self, q: f64) -> f64 {
        let mut acc = 0.0;
        for cj in 0..self.grid.ncy() {
            for ci in 0..self.grid.ncx() {
                acc += self.cell_avg(ci, cj).abs().powf(q);
            }
        }
        (acc * self.grid.cell_area()).powf(1.0 / q)
    }

    /// Midpoint-rule L^q norm of the cell gradient field.
    pub fn grad_lq_norm(&self, q: f64) -> f64 {
        let mut acc = 0.0;
        for cj in 0..self.grid.ncy() {
            for ci in 0..self.grid.ncx() {
                let [gx, gy] = self.cell_grad(ci, cj);
                acc += (gx * gx + gy * gy).powf(0.5 * q);
            }
        }
        (acc * self.grid.cell_area()).powf(1.0 / q)
    }

    /// Largest cell-gradient magnitude.
    pub fn max_cell_grad(&self) -> f64 {
        let mut m = 0.0f64;
        for cj in 0..self.grid.ncy() {
            for ci in 0..self.grid.ncx() {
                let [gx, gy] = self.cell_grad(ci, cj);
                m = m.max((gx * gx + gy * gy).sqrt());
            }
        }
        m
    }

    /// Largest cell-averaged |u|.
    pub fn max_cell_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for cj in 0..self.grid.ncy() {
            for ci in 0..self.grid.ncx() {
                m = m.max(self.cell_avg(ci, cj).abs());
            }
        }
        m
    }
}
