//! Rectangular evaluation grids over the spatial-angle box.

use nalgebra::DMatrix;

/// Monotone coordinate lists spanning `[-u_max, u_max] × [-v_max, v_max]`.
#[derive(Debug, Clone)]
pub struct AngleGrid {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl AngleGrid {
    /// Uniform symmetric grid with `nu × nv` points, endpoints included.
    pub fn symmetric(u_max: f64, v_max: f64, nu: usize, nv: usize) -> Self {
        Self {
            u: linspace(-u_max, u_max, nu),
            v: linspace(-v_max, v_max, nv),
        }
    }

    pub fn num_points(&self) -> usize {
        self.u.len() * self.v.len()
    }

    /// Index of the grid node closest to `(u, v)`.
    pub fn nearest(&self, u: f64, v: f64) -> (usize, usize) {
        (nearest_index(&self.u, u), nearest_index(&self.v, v))
    }
}

/// Values evaluated on an [`AngleGrid`]; `values[(i, j)]` belongs to
/// `(u[i], v[j])`.
#[derive(Debug, Clone)]
pub struct GridValues {
    pub grid: AngleGrid,
    pub values: DMatrix<f64>,
}

pub fn linspace(start: f64, end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5 * (start + end)],
        _ => {
            let step = (end - start) / (count - 1) as f64;
            (0..count).map(|i| start + step * i as f64).collect()
        }
    }
}

fn nearest_index(axis: &[f64], value: f64) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, &x) in axis.iter().enumerate() {
        let d = (x - value).abs();
        if d < best_dist {
            best_dist = d;
            best = i;
        }
    }
    best
}
