//! Phase-space discretization: a periodic spatial grid, a truncated uniform
//! velocity grid with trapezoid weights, and the Maxwellian that weights the
//! velocity inner product.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::DistributionField;

/// Cell-centred periodic grid on `[0, length)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    n_x: usize,
    length: f64,
    spacing: f64,
    nodes: Vec<f64>,
}

impl SpatialGrid {
    pub fn new(n_x: usize, length: f64) -> Result<Self> {
        if n_x < 4 {
            return Err(Error::InvalidArgument(format!(
                "spatial grid needs at least 4 cells, got {n_x}"
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "domain length must be positive, got {length}"
            )));
        }
        let spacing = length / n_x as f64;
        let nodes = (0..n_x).map(|i| (i as f64 + 0.5) * spacing).collect();
        Ok(Self {
            n_x,
            length,
            spacing,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.n_x
    }

    pub fn is_empty(&self) -> bool {
        self.n_x == 0
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Periodic index wrap.
    #[inline]
    pub fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.n_x as isize) as usize
    }
}

/// Uniform velocity grid with composite trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    v_min: f64,
    v_max: f64,
    spacing: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl VelocityGrid {
    pub fn new(n_v: usize, v_min: f64, v_max: f64) -> Result<Self> {
        if n_v < 3 {
            return Err(Error::InvalidArgument(format!(
                "velocity grid needs at least 3 nodes, got {n_v}"
            )));
        }
        if !(v_min < v_max) || !v_min.is_finite() || !v_max.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "velocity range [{v_min}, {v_max}] is empty"
            )));
        }
        let spacing = (v_max - v_min) / (n_v - 1) as f64;
        let nodes: Vec<f64> = (0..n_v)
            .map(|j| {
                if j == n_v - 1 {
                    v_max
                } else {
                    v_min + j as f64 * spacing
                }
            })
            .collect();
        let mut weights = vec![spacing; n_v];
        weights[0] = 0.5 * spacing;
        weights[n_v - 1] = 0.5 * spacing;
        Ok(Self {
            v_min,
            v_max,
            spacing,
            nodes,
            weights,
        })
    }

    /// Grid on `[center - halfwidth, center + halfwidth]`.
    pub fn centered(n_v: usize, center: f64, halfwidth: f64) -> Result<Self> {
        if !(halfwidth > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "velocity halfwidth must be positive, got {halfwidth}"
            )));
        }
        Self::new(n_v, center - halfwidth, center + halfwidth)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn v_min(&self) -> f64 {
        self.v_min
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Spatial grid times velocity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    pub x: SpatialGrid,
    pub v: VelocityGrid,
}

impl PhaseGrid {
    pub fn new(x: SpatialGrid, v: VelocityGrid) -> Self {
        Self { x, v }
    }

    pub fn n_x(&self) -> usize {
        self.x.len()
    }

    pub fn n_v(&self) -> usize {
        self.v.len()
    }

    pub(crate) fn check(&self, f: &DistributionField) -> Result<()> {
        if f.n_x() != self.n_x() || f.n_v() != self.n_v() {
            return Err(Error::GridMismatch(format!(
                "field is {}x{}, grid is {}x{}",
                f.n_x(),
                f.n_v(),
                self.n_x(),
                self.n_v()
            )));
        }
        Ok(())
    }
}

/// Maxwellian `rho (2 pi T)^{-1/2} exp(-(v-u)^2 / 2T)` at a fixed parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxwellianParams {
    pub rho: f64,
    pub u: f64,
    pub temp: f64,
}

impl MaxwellianParams {
    pub fn new(rho: f64, u: f64, temp: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "density must be positive, got {rho}"
            )));
        }
        if !(temp > 0.0 && temp.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {temp}"
            )));
        }
        if !u.is_finite() {
            return Err(Error::InvalidArgument(format!("bulk velocity {u}")));
        }
        Ok(Self { rho, u, temp })
    }

    /// Zero-mean, unit-temperature Maxwellian with the given density.
    pub fn unit(rho: f64) -> Result<Self> {
        Self::new(rho, 0.0, 1.0)
    }

    pub fn thermal_speed(&self) -> f64 {
        self.temp.sqrt()
    }

    pub fn eval(&self, v: f64) -> f64 {
        eval_maxwellian(self, v)
    }
}

pub fn eval_maxwellian(params: &MaxwellianParams, v: f64) -> f64 {
    let d = v - params.u;
    params.rho / (2.0 * PI * params.temp).sqrt() * (-d * d / (2.0 * params.temp)).exp()
}

/// Affine dependence of the linearization point on a scalar parameter `z`:
/// `u(z) = u0 + eps_u z`, `T(z) = T0 + eps_t z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertainMaxwellian {
    pub base: MaxwellianParams,
    pub eps_u: f64,
    pub eps_t: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl UncertainMaxwellian {
    pub fn new(base: MaxwellianParams, eps_u: f64, eps_t: f64, z_min: f64, z_max: f64) -> Result<Self> {
        if !(z_min <= z_max) {
            return Err(Error::InvalidArgument(format!(
                "empty z-range [{z_min}, {z_max}]"
            )));
        }
        let fam = Self {
            base,
            eps_u,
            eps_t,
            z_min,
            z_max,
        };
        // affine in z, so positivity at the endpoints covers the range
        for z in [z_min, z_max] {
            let t = fam.temp(z);
            if !(t > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "temperature T(z = {z}) = {t} is not positive"
                )));
            }
        }
        Ok(fam)
    }

    pub fn u(&self, z: f64) -> f64 {
        self.base.u + self.eps_u * z
    }

    pub fn temp(&self, z: f64) -> f64 {
        self.base.temp + self.eps_t * z
    }

    pub fn contains(&self, z: f64) -> bool {
        z >= self.z_min && z <= self.z_max
    }

    pub fn at(&self, z: f64) -> Result<MaxwellianParams> {
        if !self.contains(z) {
            return Err(Error::InvalidArgument(format!(
                "z = {z} outside admissible range [{}, {}]",
                self.z_min, self.z_max
            )));
        }
        MaxwellianParams::new(self.base.rho, self.u(z), self.temp(z))
    }

    /// `n`-th z-derivative of `u(z)`.
    pub fn u_derivative(&self, n: usize) -> f64 {
        match n {
            0 => self.base.u,
            1 => self.eps_u,
            _ => 0.0,
        }
    }

    /// `m`-th z-derivative of `sqrt(T(z))` at `z`.
    pub fn sqrt_temp_derivative(&self, z: f64, m: usize) -> Result<f64> {
        sqrt_affine_derivative(self.temp(z), self.eps_t, m)
    }
}

/// `d^m/dz^m sqrt(T0 + eps z)` evaluated where `T0 + eps z = temp`:
/// `(1/2)(1/2 - 1)...(1/2 - m + 1) eps^m temp^(1/2 - m)`.
pub fn sqrt_affine_derivative(temp: f64, eps: f64, m: usize) -> Result<f64> {
    if !(temp > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "temperature {temp} is not positive"
        )));
    }
    let mut falling = 1.0;
    for i in 0..m {
        falling *= 0.5 - i as f64;
    }
    Ok(falling * eps.powi(m as i32) * temp.powf(0.5 - m as f64))
}

/// Discrete weighted pairing `sum_j w_j a_j b_j M(v_j)`.
pub fn inner_weighted(a: &[f64], b: &[f64], params: &MaxwellianParams, grid: &VelocityGrid) -> Result<f64> {
    if a.len() != grid.len() || b.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "slices of length {} and {} on a velocity grid of {} nodes",
            a.len(),
            b.len(),
            grid.len()
        )));
    }
    Ok(grid
        .nodes()
        .iter()
        .zip(grid.weights())
        .zip(a.iter().zip(b))
        .map(|((&v, &w), (&x, &y))| w * x * y * params.eval(v))
        .sum())
}

/// Unweighted discrete `L^2(dx dv)` pairing.
pub fn inner_xv(a: &DistributionField, b: &DistributionField, grid: &PhaseGrid) -> Result<f64> {
    grid.check(a)?;
    grid.check(b)?;
    let dx = grid.x.spacing();
    let w = grid.v.weights();
    let mut total = 0.0;
    for (ra, rb) in a.rows().zip(b.rows()) {
        let row: f64 = ra.iter().zip(rb).zip(w).map(|((x, y), q)| q * x * y).sum();
        total += row;
    }
    Ok(dx * total)
}

pub fn norm_xv(a: &DistributionField, grid: &PhaseGrid) -> Result<f64> {
    Ok(inner_xv(a, a, grid)?.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spatial_grid_nodes() {
        let g = SpatialGrid::new(4, 1.0).unwrap();
        assert_eq!(g.nodes(), &[0.125, 0.375, 0.625, 0.875]);
        assert_eq!(g.spacing(), 0.25);
        let g = SpatialGrid::new(8, 2.0 * PI).unwrap();
        assert!((g.spacing() - PI / 4.0).abs() < 1e-15);
        assert!((g.spacing() * 8.0 - g.length()).abs() < 1e-15);
        assert_eq!(g.wrap(-1), 7);
        assert_eq!(g.wrap(8), 0);
    }

    #[test]
    fn spatial_grid_rejects_bad_input() {
        assert!(SpatialGrid::new(0, 1.0).is_err());
        assert!(SpatialGrid::new(3, 1.0).is_err());
        assert!(SpatialGrid::new(8, 0.0).is_err());
        assert!(SpatialGrid::new(8, -1.0).is_err());
    }

    #[test]
    fn velocity_weights_sum_to_span() {
        let g = VelocityGrid::new(129, -8.0, 8.0).unwrap();
        let s: f64 = g.weights().iter().sum();
        assert!((s - 16.0).abs() < 1e-12);
        assert_eq!(g.nodes()[64], 0.0);
        assert!(VelocityGrid::new(2, -1.0, 1.0).is_err());
        assert!(VelocityGrid::new(10, 1.0, 1.0).is_err());
    }

    #[test]
    fn maxwellian_values() {
        let inv = 1.0 / (2.0 * PI).sqrt();
        let m = MaxwellianParams::new(1.0, 0.0, 1.0).unwrap();
        assert!((m.eval(0.0) - inv).abs() < 1e-15);
        assert!((m.eval(0.0) - 0.398942).abs() < 1e-6);
        let m2 = MaxwellianParams::new(2.0, 0.0, 1.0).unwrap();
        assert!((m2.eval(0.0) - 2.0 * inv).abs() < 1e-15);
        let m3 = MaxwellianParams::new(1.0, 1.0, 1.0).unwrap();
        assert!((m3.eval(1.0) - inv).abs() < 1e-15);
        assert!((m3.eval(1.7) - m3.eval(0.3)).abs() < 1e-15);
        assert!(MaxwellianParams::new(0.0, 0.0, 1.0).is_err());
        assert!(MaxwellianParams::new(1.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn weighted_moments_of_gaussian() {
        let p = MaxwellianParams::new(1.0, 0.0, 1.0).unwrap();
        let g = VelocityGrid::centered(129, 0.0, 8.0).unwrap();
        let one = vec![1.0; g.len()];
        let v = g.nodes().to_vec();
        assert!((inner_weighted(&one, &one, &p, &g).unwrap() - 1.0).abs() < 1e-8);
        assert!((inner_weighted(&v, &v, &p, &g).unwrap() - 1.0).abs() < 1e-8);
        assert!(inner_weighted(&one, &v, &p, &g).unwrap().abs() < 1e-12);
        assert!(inner_weighted(&one, &v[1..], &p, &g).is_err());
    }

    #[test]
    fn sqrt_temperature_derivatives() {
        assert!((sqrt_affine_derivative(1.0, 1.0, 2).unwrap() + 0.25).abs() < 1e-15);
        assert!((sqrt_affine_derivative(4.0, 0.1, 1).unwrap() - 0.1 / 4.0).abs() < 1e-15);
        assert!((sqrt_affine_derivative(4.0, 0.1, 0).unwrap() - 2.0).abs() < 1e-15);
        // third derivative: (1/2)(-1/2)(-3/2) eps^3 T^{-5/2}
        let d3 = sqrt_affine_derivative(2.0, 0.3, 3).unwrap();
        assert!((d3 - 0.375 * 0.027 * 2f64.powf(-2.5)).abs() < 1e-15);
        assert!(sqrt_affine_derivative(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn family_positivity() {
        let base = MaxwellianParams::new(1.0, 0.5, 1.0).unwrap();
        assert!(UncertainMaxwellian::new(base, 0.1, 0.1, -1.0, 1.0).is_ok());
        assert!(UncertainMaxwellian::new(base, 0.1, 2.0, -1.0, 1.0).is_err());
        let fam = UncertainMaxwellian::new(base, 0.1, 0.1, -1.0, 1.0).unwrap();
        assert_eq!(fam.u_derivative(1), 0.1);
        assert_eq!(fam.u_derivative(2), 0.0);
        assert!(fam.at(2.0).is_err());
    }
}
