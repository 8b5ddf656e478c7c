//! Discretely orthonormal polynomial basis under a Maxwellian weight.
//!
//! The basis is obtained by Gram-Schmidt on the monomials
//! `1, xi, xi^2, ...` with `xi = (v - u) / sqrt(T)`, using the *discrete*
//! weighted pairing of the velocity grid. Orthonormality therefore holds to
//! round-off on the grid regardless of quadrature error, which is what makes
//! the collision operator exactly self-adjoint and conservative at any
//! resolution. Each function is also kept as a coefficient vector in the
//! monomial basis so it can be evaluated off the grid.

use crate::error::{Error, Result};
use crate::grid::{MaxwellianParams, VelocityGrid};

/// Number of collision invariants in one velocity dimension (`d + 2`).
pub const HYDRO_DIM: usize = 3;

/// Which Maxwellian weights the inner product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightFrame {
    /// General `M(rho, u, T)`; the operator of the original frame.
    Star,
    /// `M(rho, 0, T)`; the operator of the shifted frame.
    ZeroMean,
    /// `M(rho, 0, 1)`; the operator of the scaled frame.
    Unit,
}

#[derive(Debug, Clone)]
pub struct CollisionBasis {
    params: MaxwellianParams,
    frame: WeightFrame,
    grid: VelocityGrid,
    /// `quad_weight_j * M(v_j)`
    weight: Vec<f64>,
    chi: Vec<Vec<f64>>,
    coeffs: Vec<Vec<f64>>,
    extra_modes: usize,
}

impl CollisionBasis {
    pub fn new(frame: WeightFrame, params: MaxwellianParams, grid: &VelocityGrid, extra_modes: usize) -> Result<Self> {
        match frame {
            WeightFrame::Star => {}
            WeightFrame::ZeroMean if params.u != 0.0 => {
                return Err(Error::InvalidArgument(format!(
                    "zero-mean weight frame with u = {}",
                    params.u
                )))
            }
            WeightFrame::Unit if params.u != 0.0 || params.temp != 1.0 => {
                return Err(Error::InvalidArgument(format!(
                    "unit weight frame with (u, T) = ({}, {})",
                    params.u, params.temp
                )))
            }
            _ => {}
        }
        check_resolution(&params, grid)?;

        let weight: Vec<f64> = grid
            .nodes()
            .iter()
            .zip(grid.weights())
            .map(|(&v, &q)| q * params.eval(v))
            .collect();
        let scale = params.thermal_speed();
        let xi: Vec<f64> = grid.nodes().iter().map(|&v| (v - params.u) / scale).collect();

        let n_modes = HYDRO_DIM + extra_modes;
        let mut chi: Vec<Vec<f64>> = Vec::with_capacity(n_modes);
        let mut coeffs: Vec<Vec<f64>> = Vec::with_capacity(n_modes);
        for k in 0..n_modes {
            let mut vec: Vec<f64> = xi.iter().map(|&s| s.powi(k as i32)).collect();
            let mut coef = vec![0.0; n_modes];
            coef[k] = 1.0;
            let before = weighted_dot(&weight, &vec, &vec).sqrt();
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for (c_i, a_i) in chi.iter().zip(&coeffs) {
                    let c = weighted_dot(&weight, c_i, &vec);
                    vec.iter_mut().zip(c_i).for_each(|(x, y)| *x -= c * y);
                    coef.iter_mut().zip(a_i).for_each(|(x, y)| *x -= c * y);
                }
            }
            let after = weighted_dot(&weight, &vec, &vec).sqrt();
            let residual = after / before;
            if !(residual > 1e-10) {
                return Err(Error::SingularBasis { mode: k, residual });
            }
            vec.iter_mut().for_each(|x| *x /= after);
            coef.iter_mut().for_each(|x| *x /= after);
            chi.push(vec);
            coeffs.push(coef);
        }

        Ok(Self {
            params,
            frame,
            grid: grid.clone(),
            weight,
            chi,
            coeffs,
            extra_modes,
        })
    }

    /// Basis for the general Maxwellian `params`.
    pub fn star(params: MaxwellianParams, grid: &VelocityGrid, extra_modes: usize) -> Result<Self> {
        Self::new(WeightFrame::Star, params, grid, extra_modes)
    }

    pub fn zero_mean(rho: f64, temp: f64, grid: &VelocityGrid, extra_modes: usize) -> Result<Self> {
        Self::new(WeightFrame::ZeroMean, MaxwellianParams::new(rho, 0.0, temp)?, grid, extra_modes)
    }

    pub fn unit(rho: f64, grid: &VelocityGrid, extra_modes: usize) -> Result<Self> {
        Self::new(WeightFrame::Unit, MaxwellianParams::unit(rho)?, grid, extra_modes)
    }

    pub fn dim(&self) -> usize {
        HYDRO_DIM
    }

    pub fn extra_modes(&self) -> usize {
        self.extra_modes
    }

    pub fn n_modes(&self) -> usize {
        self.chi.len()
    }

    pub fn params(&self) -> &MaxwellianParams {
        &self.params
    }

    pub fn frame(&self) -> WeightFrame {
        self.frame
    }

    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    /// Quadrature weight times Maxwellian at each node.
    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    /// Tabulated basis function `chi_m`.
    pub fn chi(&self, m: usize) -> &[f64] {
        &self.chi[m]
    }

    /// Evaluates `chi_m` at an arbitrary velocity from its monomial coefficients.
    pub fn eval(&self, m: usize, v: f64) -> f64 {
        let xi = (v - self.params.u) / self.params.thermal_speed();
        self.coeffs[m].iter().rev().fold(0.0, |acc, &c| acc * xi + c)
    }

    /// `k`-th velocity derivative of `chi_m` at `v`.
    pub fn eval_derivative(&self, m: usize, k: usize, v: f64) -> f64 {
        let s = self.params.thermal_speed();
        let xi = (v - self.params.u) / s;
        let c = &self.coeffs[m];
        let mut acc = 0.0;
        for l in (k..c.len()).rev() {
            let falling: f64 = (0..k).map(|i| (l - i) as f64).product();
            acc = acc * xi + c[l] * falling;
        }
        // Horner above skipped the powers below k, which is exactly xi^(l-k)
        acc / s.powi(k as i32)
    }

    /// Discrete weighted pairing on this basis' grid.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        weighted_dot(&self.weight, a, b)
    }

    /// Smallest and largest Maxwellian value on the grid (without quadrature weights).
    pub fn weight_bounds(&self) -> (f64, f64) {
        self.grid
            .nodes()
            .iter()
            .map(|&v| self.params.eval(v))
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), m| (lo.min(m), hi.max(m)))
    }
}

#[inline]
pub(crate) fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// The Maxwellian must be negligible (below 1e-8 of its peak) at both grid ends.
fn check_resolution(params: &MaxwellianParams, grid: &VelocityGrid) -> Result<()> {
    let peak = params.eval(params.u);
    let lo = params.eval(grid.v_min()) / peak;
    let hi = params.eval(grid.v_max()) / peak;
    if params.u <= grid.v_min() || params.u >= grid.v_max() || lo > 1e-8 || hi > 1e-8 {
        return Err(Error::InvalidArgument(format!(
            "velocity grid [{}, {}] does not resolve the Maxwellian (u = {}, T = {})",
            grid.v_min(),
            grid.v_max(),
            params.u,
            params.temp
        )));
    }
    Ok(())
}
