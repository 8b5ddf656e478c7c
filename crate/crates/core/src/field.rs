use crate::grid::PhaseGrid;

/// Which velocity variable a field is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameKind {
    /// `f(t, x, v)`, linearized around the full Maxwellian.
    Original,
    /// `g`, velocity measured relative to the bulk velocity.
    Shifted,
    /// `p`, velocity measured in thermal units.
    Scaled,
}

impl FrameKind {
    pub fn name(self) -> &'static str {
        match self {
            FrameKind::Original => "original",
            FrameKind::Shifted => "shifted",
            FrameKind::Scaled => "scaled",
        }
    }
}

/// A scalar field on the phase grid, stored x-major: `data[i * n_v + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionField {
    data: Vec<f64>,
    n_x: usize,
    n_v: usize,
    pub frame: FrameKind,
    /// z-derivative order carried by this field.
    pub order: usize,
    pub time: f64,
}

impl DistributionField {
    pub fn zeros(n_x: usize, n_v: usize, frame: FrameKind) -> Self {
        Self {
            data: vec![0.0; n_x * n_v],
            n_x,
            n_v,
            frame,
            order: 0,
            time: 0.0,
        }
    }

    pub fn zeros_like(grid: &PhaseGrid, frame: FrameKind) -> Self {
        Self::zeros(grid.n_x(), grid.n_v(), frame)
    }

    /// Tabulates `f(x_i, v_j)`.
    pub fn from_fn(grid: &PhaseGrid, frame: FrameKind, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros_like(grid, frame);
        for (i, &x) in grid.x.nodes().iter().enumerate() {
            for (j, &v) in grid.v.nodes().iter().enumerate() {
                out.data[i * grid.n_v() + j] = f(x, v);
            }
        }
        out
    }

    pub fn from_vec(data: Vec<f64>, n_x: usize, n_v: usize, frame: FrameKind) -> Option<Self> {
        (data.len() == n_x * n_v).then_some(Self {
            data,
            n_x,
            n_v,
            frame,
            order: 0,
            time: 0.0,
        })
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = order;
        self
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_v + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n_v + j] = value;
    }

    /// Velocity slice at spatial node `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_v..(i + 1) * self.n_v]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_v..(i + 1) * self.n_v]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.n_v)
    }

    pub fn rows_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        self.data.chunks_exact_mut(self.n_v)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_x == other.n_x && self.n_v == other.n_v
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|a| *a *= alpha);
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Central difference in x on the periodic grid.
    pub fn dx_central(&self, dx: f64) -> Self {
        let mut out = Self::zeros(self.n_x, self.n_v, self.frame);
        self.dx_central_into(dx, &mut out);
        out
    }

    /// [`Self::dx_central`] into a preallocated field of the same shape.
    pub(crate) fn dx_central_into(&self, dx: f64, out: &mut Self) {
        debug_assert!(self.same_shape(out));
        out.order = self.order;
        out.time = self.time;
        out.frame = self.frame;
        let inv = 0.5 / dx;
        let n = self.n_v;
        for i in 0..self.n_x {
            let ip = (i + 1) % self.n_x;
            let im = (i + self.n_x - 1) % self.n_x;
            let (a, b) = (self.row(ip), self.row(im));
            let o = &mut out.data[i * n..(i + 1) * n];
            for j in 0..n {
                o[j] = inv * (a[j] - b[j]);
            }
        }
    }

    /// Central difference in v (one-sided second order at the grid ends).
    pub fn dv_central(&self, dv: f64) -> Self {
        let mut out = Self::zeros(self.n_x, self.n_v, self.frame);
        out.order = self.order;
        out.time = self.time;
        let n = self.n_v;
        for i in 0..self.n_x {
            let r = self.row(i);
            let o = &mut out.data[i * n..(i + 1) * n];
            o[0] = (-3.0 * r[0] + 4.0 * r[1] - r[2]) / (2.0 * dv);
            o[n - 1] = (3.0 * r[n - 1] - 4.0 * r[n - 2] + r[n - 3]) / (2.0 * dv);
            for j in 1..n - 1 {
                o[j] = (r[j + 1] - r[j - 1]) / (2.0 * dv);
            }
        }
        out
    }
}
