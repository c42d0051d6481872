//! Uniform cell-centered rectangular grid with homogeneous Neumann boundary
//! treatment, scalar fields, and discrete integrals / norms / gradient energies.
//!
//! The Neumann condition is realized by mirror ghost cells (ghost value equals
//! the adjacent interior value), so boundary-normal face differences vanish
//! identically and boundary fluxes are exactly zero.

use crate::error::{KsError, Result};

/// Uniform cell-centered rectangle mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub area: f64,
}

impl Grid {
    /// Build a grid over `[0, lx] x [0, ly]` with `nx * ny` cells.
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(lx > 0.0 && lx.is_finite()) || !(ly > 0.0 && ly.is_finite()) {
            return Err(KsError::Config(format!(
                "domain side lengths must be positive and finite, got lx={lx}, ly={ly}"
            )));
        }
        if nx < 3 || ny < 3 {
            return Err(KsError::Config(format!(
                "cell counts must be at least 3 per axis, got nx={nx}, ny={ny}"
            )));
        }
        Ok(Grid {
            lx,
            ly,
            nx,
            ny,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
            area: lx * ly,
        })
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Flat index of cell (i, j); row-major by y then x.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    /// Cell-center coordinates of cell (i, j).
    #[inline]
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    #[inline]
    pub fn h_min(&self) -> f64 {
        self.hx.min(self.hy)
    }

    /// Cell area hx * hy, the quadrature weight of every cell.
    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }
}

/// One real value per cell, cell-centered, row-major by y then x.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    /// Constant field.
    pub fn constant(grid: Grid, c: f64) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.n_cells()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Sample `f(x, y)` at cell centers.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_cells());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.center(i, j);
                values.push(f(x, y));
            }
        }
        ScalarField { grid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    /// Hard check that every entry is finite.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(KsError::Numerical(format!(
                "non-finite field entry detected ({context})"
            )))
        }
    }

    /// Midpoint quadrature: hx * hy * sum of values.
    pub fn integrate(&self) -> f64 {
        self.grid.cell_area() * self.values.iter().sum::<f64>()
    }

    /// Discrete Dirichlet energy: sum over interior faces of
    /// hx*hy*(dw/h)^2, each face weighted once. Boundary faces contribute
    /// zero under the mirror-ghost Neumann treatment.
    pub fn gradient_energy(&self) -> f64 {
        let g = self.grid;
        let w = &self.values;
        let mut acc = 0.0;
        // x-faces between (i, j) and (i+1, j)
        for j in 0..g.ny {
            for i in 0..g.nx - 1 {
                let d = (w[g.idx(i + 1, j)] - w[g.idx(i, j)]) / g.hx;
                acc += d * d;
            }
        }
        // y-faces between (i, j) and (i, j+1)
        for j in 0..g.ny - 1 {
            for i in 0..g.nx {
                let d = (w[g.idx(i, j + 1)] - w[g.idx(i, j)]) / g.hy;
                acc += d * d;
            }
        }
        g.cell_area() * acc
    }

    /// (max, min, l2) over cells, l2 = sqrt(hx*hy*sum w^2).
    pub fn norms(&self) -> FieldNorms {
        let mut max = f64::NEG_INFINITY;
        let mut min = f64::INFINITY;
        let mut sq = 0.0;
        for &v in &self.values {
            max = max.max(v);
            min = min.min(v);
            sq += v * v;
        }
        FieldNorms {
            max,
            min,
            l2: (self.grid.cell_area() * sq).sqrt(),
        }
    }

    /// Discrete L4 norm: (hx*hy*sum w^4)^(1/4).
    pub fn l4_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|&v| v * v * v * v).sum();
        (self.grid.cell_area() * s).powf(0.25)
    }

    /// Discrete L2 inner product hx*hy*<a, b>.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        self.grid.cell_area()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldNorms {
    pub max: f64,
    pub min: f64,
    pub l2: f64,
}
