//! z-derivative hierarchies of the frame solutions.
//!
//! In the shifted frame only the advection speed `v + u(z)` depends on `z`,
//! in the scaled frame only `sqrt(T(z)) v`. Differentiating
//! `w_t + a(z, v) w_x = L w` `k` times gives the same equation for
//! `w^(k)` with the lower-triangular source
//!
//! ```text
//! S_k = - sum_{m=1..k} C(k, m) (d^m a / dz^m) dx w^(k-m)
//! ```
//!
//! The stack applies `S_k` inside each transport half-step, with the
//! central difference `dx` that the upwind flux is built from, so that the
//! orders advanced here are exactly the z-derivatives of the discrete
//! order-0 solution.

use crate::collision::CollisionOperator;
use crate::error::{Error, Result};
use crate::field::{DistributionField, FrameKind};
use crate::grid::{norm_xv, PhaseGrid, UncertainMaxwellian};
use crate::series::NormSeries;
use crate::solver::{self, FrameSpec, SolverConfig, TransportScheme, Workspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Perturbation {
    /// `u(z) = u0 + eps_u z`, studied in the shifted frame.
    Velocity,
    /// `T(z) = T0 + eps_T z`, studied in the scaled frame.
    Temperature,
}

impl Perturbation {
    pub fn frame(self) -> FrameKind {
        match self {
            Perturbation::Velocity => FrameKind::Shifted,
            Perturbation::Temperature => FrameKind::Scaled,
        }
    }
}

/// How the initial sensitivities are seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitSensitivity {
    /// Initial data is z-independent in the active frame: `w^(n)(0) = 0`, `n >= 1`.
    #[default]
    ZeroInFrame,
    /// Initial data is z-independent in the original frame and carried into
    /// the active frame, so `w^(n)(0)` follows from the chain rule.
    ChainRuleFromF,
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Partial Bell polynomials `B[n][k]` of the derivative sequence `x[1..]`
/// (`x[0]` is ignored), for `n, k <= x.len() - 1`.
pub fn partial_bell(x: &[f64]) -> Vec<Vec<f64>> {
    let n_max = x.len().saturating_sub(1);
    let mut b = vec![vec![0.0; n_max + 1]; n_max + 1];
    b[0][0] = 1.0;
    for n in 1..=n_max {
        for k in 1..=n {
            let mut s = 0.0;
            for i in 1..=n - k + 1 {
                s += binomial(n - 1, i - 1) * x[i] * b[n - i][k - 1];
            }
            b[n][k] = s;
        }
    }
    b
}

#[derive(Debug, Clone)]
pub struct SensitivityStack {
    fields: Vec<DistributionField>,
    perturbation: Perturbation,
    family: UncertainMaxwellian,
    z0: f64,
}

impl SensitivityStack {
    /// Stack with `order0` and zero sensitivities up to `n_max`.
    pub fn new(
        order0: DistributionField,
        n_max: usize,
        perturbation: Perturbation,
        family: UncertainMaxwellian,
        z0: f64,
    ) -> Result<Self> {
        let mut fields = vec![order0.with_order(0)];
        for k in 1..=n_max {
            let mut f = DistributionField::zeros(fields[0].n_x(), fields[0].n_v(), fields[0].frame);
            f.order = k;
            f.time = fields[0].time;
            fields.push(f);
        }
        Self::from_fields(fields, perturbation, family, z0)
    }

    pub fn from_fields(
        fields: Vec<DistributionField>,
        perturbation: Perturbation,
        family: UncertainMaxwellian,
        z0: f64,
    ) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty sensitivity stack".into()))?;
        for (k, f) in fields.iter().enumerate() {
            if !f.same_shape(first) || f.frame != first.frame || f.time != first.time {
                return Err(Error::InvalidArgument(format!(
                    "order {k} does not share grid, frame and time with order 0"
                )));
            }
        }
        if first.frame != perturbation.frame() {
            return Err(Error::InvalidArgument(format!(
                "{:?} perturbation needs the {} frame, got {}",
                perturbation,
                perturbation.frame().name(),
                first.frame.name()
            )));
        }
        family.at(z0)?;
        let fields = fields
            .into_iter()
            .enumerate()
            .map(|(k, f)| f.with_order(k))
            .collect();
        Ok(Self {
            fields,
            perturbation,
            family,
            z0,
        })
    }

    pub fn n_max(&self) -> usize {
        self.fields.len() - 1
    }

    pub fn fields(&self) -> &[DistributionField] {
        &self.fields
    }

    pub fn field(&self, k: usize) -> Result<&DistributionField> {
        self.fields.get(k).ok_or(Error::MissingOrder(k))
    }

    pub fn perturbation(&self) -> Perturbation {
        self.perturbation
    }

    pub fn family(&self) -> &UncertainMaxwellian {
        &self.family
    }

    pub fn z0(&self) -> f64 {
        self.z0
    }

    pub fn time(&self) -> f64 {
        self.fields[0].time
    }

    /// Frame with the advection speeds at `z0`.
    pub fn nominal_frame(&self, grid: &PhaseGrid) -> Result<FrameSpec> {
        frame_at(self.perturbation, &self.family, self.z0, grid)
    }

    /// `d^m a / dz^m` at `z0` for each velocity node.
    pub fn speed_derivative(&self, m: usize, grid: &PhaseGrid) -> Result<Vec<f64>> {
        match self.perturbation {
            Perturbation::Velocity => {
                let c = if m == 0 { self.family.u(self.z0) } else { self.family.u_derivative(m) };
                Ok(grid.v.nodes().iter().map(|&v| if m == 0 { v + c } else { c }).collect())
            }
            Perturbation::Temperature => {
                let c = self.family.sqrt_temp_derivative(self.z0, m)?;
                Ok(grid.v.nodes().iter().map(|&v| c * v).collect())
            }
        }
    }

    fn check_order(&self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::InvalidArgument("order 0 carries no source".into()));
        }
        if k > self.n_max() {
            return Err(Error::MissingOrder(k));
        }
        Ok(())
    }

    /// `-sum_{n=1..k} C(k,n) d^n u dx h^(k-n)`.
    pub fn velocity_source(&self, k: usize, grid: &PhaseGrid) -> Result<DistributionField> {
        if self.perturbation != Perturbation::Velocity {
            return Err(Error::Unsupported("velocity source on a temperature stack".into()));
        }
        self.check_order(k)?;
        let dx: Vec<_> = self.fields[..k].iter().map(|f| f.dx_central(grid.x.spacing())).collect();
        self.assemble_source(k, &dx, grid)
    }

    /// `-sum_{m=1..k} C(k,m) d^m sqrt(T) v dx q^(k-m)`.
    pub fn temperature_source(&self, k: usize, grid: &PhaseGrid) -> Result<DistributionField> {
        if self.perturbation != Perturbation::Temperature {
            return Err(Error::Unsupported("temperature source on a velocity stack".into()));
        }
        self.check_order(k)?;
        let dx: Vec<_> = self.fields[..k].iter().map(|f| f.dx_central(grid.x.spacing())).collect();
        self.assemble_source(k, &dx, grid)
    }

    pub fn source(&self, k: usize, grid: &PhaseGrid) -> Result<DistributionField> {
        match self.perturbation {
            Perturbation::Velocity => self.velocity_source(k, grid),
            Perturbation::Temperature => self.temperature_source(k, grid),
        }
    }

    fn assemble_source(&self, k: usize, dx: &[DistributionField], grid: &PhaseGrid) -> Result<DistributionField> {
        let mut out = DistributionField::zeros(grid.n_x(), grid.n_v(), self.fields[0].frame);
        out.order = k;
        out.time = self.time();
        self.assemble_source_into(k, dx, grid, &mut out)?;
        Ok(out)
    }

    fn assemble_source_into(
        &self,
        k: usize,
        dx: &[DistributionField],
        grid: &PhaseGrid,
        out: &mut DistributionField,
    ) -> Result<()> {
        out.data_mut().fill(0.0);
        for m in 1..=k {
            let coef = binomial(k, m);
            let speed = self.speed_derivative(m, grid)?;
            if speed.iter().all(|&s| s == 0.0) {
                continue;
            }
            let lower = &dx[k - m];
            for (row, src) in out.rows_mut().zip(lower.rows()) {
                for ((o, &d), &s) in row.iter_mut().zip(src).zip(&speed) {
                    *o -= coef * s * d;
                }
            }
        }
        Ok(())
    }

    /// Sources of orders `1..=n_max` into `scratch.sources`.
    fn all_sources_into(&self, grid: &PhaseGrid, scratch: &mut StackScratch) -> Result<()> {
        let n = self.n_max();
        let shape = &self.fields[0];
        let fresh = || DistributionField::zeros(shape.n_x(), shape.n_v(), shape.frame);
        scratch.dx.resize_with(n, fresh);
        scratch.sources.resize_with(n, fresh);
        for (f, d) in self.fields[..n].iter().zip(scratch.dx.iter_mut()) {
            f.dx_central_into(grid.x.spacing(), d);
        }
        for k in 1..=n {
            self.assemble_source_into(k, &scratch.dx, grid, &mut scratch.sources[k - 1])?;
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
struct StackScratch {
    ws: Workspace,
    dx: Vec<DistributionField>,
    sources: Vec<DistributionField>,
}

/// Frame of `perturbation` with speeds evaluated at `z`.
pub fn frame_at(perturbation: Perturbation, family: &UncertainMaxwellian, z: f64, grid: &PhaseGrid) -> Result<FrameSpec> {
    let p = family.at(z)?;
    match perturbation {
        Perturbation::Velocity => Ok(FrameSpec::shifted(&grid.v, p.u)),
        Perturbation::Temperature => FrameSpec::scaled(&grid.v, p.temp),
    }
}

fn check_stack_inputs(
    stack: &SensitivityStack,
    cfg: &SolverConfig,
    op: &CollisionOperator,
    frame: &FrameSpec,
    grid: &PhaseGrid,
) -> Result<()> {
    cfg.validate()?;
    if cfg.scheme != TransportScheme::Upwind {
        return Err(Error::Unsupported(
            "sensitivity hierarchies need the upwind flux (the limited flux is not differentiable in z)".into(),
        ));
    }
    for f in stack.fields() {
        grid.check(f)?;
    }
    if frame.kind() != stack.perturbation.frame() {
        return Err(Error::InvalidArgument("frame does not match the perturbation".into()));
    }
    solver::check_frame(grid, frame)?;
    solver::check_operator(op, frame, grid)?;
    cfg.check_cfl(grid, frame)
}

fn advance_unchecked(
    stack: &mut SensitivityStack,
    cfg: &SolverConfig,
    op: &CollisionOperator,
    frame: &FrameSpec,
    grid: &PhaseGrid,
    scratch: &mut StackScratch,
) -> Result<()> {
    let dt = cfg.step_size();
    let tau = 0.5 * dt;
    let half_transport = |stack: &mut SensitivityStack, scratch: &mut StackScratch| -> Result<()> {
        stack.all_sources_into(grid, scratch)?;
        for f in stack.fields.iter_mut() {
            let len = f.data().len();
            solver::transport_in_place(f, tau, frame, grid, cfg.scheme, scratch.ws.flux(len));
        }
        for (f, s) in stack.fields[1..].iter_mut().zip(&scratch.sources) {
            f.axpy(tau, s);
        }
        Ok(())
    };
    half_transport(stack, scratch)?;
    for f in stack.fields.iter_mut() {
        op.relax_field(f, dt / cfg.knudsen)?;
    }
    half_transport(stack, scratch)?;
    for f in stack.fields.iter_mut() {
        f.time += dt;
    }
    Ok(())
}

/// Advances every order by one step, lower orders feeding higher ones.
pub fn advance_stack(
    stack: &mut SensitivityStack,
    cfg: &SolverConfig,
    op: &CollisionOperator,
    frame: &FrameSpec,
    grid: &PhaseGrid,
) -> Result<()> {
    check_stack_inputs(stack, cfg, op, frame, grid)?;
    let before = stack.clone();
    advance_unchecked(stack, cfg, op, frame, grid, &mut StackScratch::default())?;
    if let Some(k) = stack.fields.iter().position(|f| !f.is_finite()) {
        return Err(Error::NonFinite {
            time: stack.time(),
            order: k,
            last_valid: Box::new(before.fields[k].clone()),
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct StackOutput {
    pub series: NormSeries,
    pub stack: SensitivityStack,
    /// Copies of the stack at the requested step counts.
    pub snapshots: Vec<(usize, SensitivityStack)>,
}

/// `dt p = L p - a(v) dx p`, the time derivative read off the equation.
pub fn time_derivative_from_equation(
    w: &DistributionField,
    op: &CollisionOperator,
    frame: &FrameSpec,
    grid: &PhaseGrid,
) -> Result<DistributionField> {
    let mut out = op.apply_field(w)?;
    let d = w.dx_central(grid.x.spacing());
    for (row, drow) in out.rows_mut().zip(d.rows()) {
        for ((o, &dx), &a) in row.iter_mut().zip(drow).zip(frame.speeds()) {
            *o -= a * dx;
        }
    }
    Ok(out)
}

fn record_stack(
    series: &mut NormSeries,
    stack: &SensitivityStack,
    op: &CollisionOperator,
    frame: &FrameSpec,
    grid: &PhaseGrid,
) -> Result<()> {
    let dx = grid.x.spacing();
    series.times.push(stack.time());
    for (k, f) in stack.fields.iter().enumerate() {
        series.norms[k].push(norm_xv(f, grid)?);
        series.weighted_norms[k].push(op.inner_field(f, f, dx).max(0.0).sqrt());
    }
    let g = &stack.fields[0];
    series.moments.push(op.integrated_moments(g, dx));
    let d = g.dx_central(dx);
    series.push_aux("dx_norm_order0", norm_xv(&d, grid)?);
    series.push_aux("dx_weighted_norm_order0", op.inner_field(&d, &d, dx).max(0.0).sqrt());
    if stack.perturbation == Perturbation::Temperature {
        let dt = time_derivative_from_equation(g, op, frame, grid)?;
        series.push_aux("dt_norm_order0", norm_xv(&dt, grid)?);
    }
    Ok(())
}

/// Integrates the whole hierarchy to `cfg.t_end`.
pub fn solve_stack(
    stack: &SensitivityStack,
    cfg: &SolverConfig,
    op: &CollisionOperator,
    frame: &FrameSpec,
    grid: &PhaseGrid,
    snapshot_steps: &[usize],
) -> Result<StackOutput> {
    check_stack_inputs(stack, cfg, op, frame, grid)?;
    let n_steps = cfg.n_steps();
    let every = cfg.sample_every();
    let dt = cfg.step_size();
    let t0 = stack.time();
    let mut series = NormSeries::new(stack.n_max() + 1);
    let mut current = stack.clone();
    record_stack(&mut series, &current, op, frame, grid)?;
    let mut snapshots = Vec::new();
    if snapshot_steps.contains(&0) {
        snapshots.push((0, current.clone()));
    }
    let mut last_valid = current.clone();
    let mut scratch = StackScratch::default();
    for n in 0..n_steps {
        advance_unchecked(&mut current, cfg, op, frame, grid, &mut scratch)?;
        let t = t0 + (n + 1) as f64 * dt;
        current.fields.iter_mut().for_each(|f| f.time = t);
        let sample = (n + 1) % every == 0 || n + 1 == n_steps;
        let snap = snapshot_steps.contains(&(n + 1));
        if sample || snap {
            if let Some(k) = current.fields.iter().position(|f| !f.is_finite()) {
                return Err(Error::NonFinite {
                    time: t,
                    order: k,
                    last_valid: Box::new(last_valid.fields[k].clone()),
                });
            }
            last_valid.clone_from(&current);
        }
        if sample {
            record_stack(&mut series, &current, op, frame, grid)?;
        }
        if snap {
            snapshots.push((n + 1, current.clone()));
        }
    }
    Ok(StackOutput {
        series,
        stack: current,
        snapshots,
    })
}

/// Original-frame z-derivative from a velocity stack:
/// `df/dz (v) = [h - eps_u dg/dv](v - u)`, evaluated on `target`.
///
/// `dg/dv` is a central difference, so the result carries an `O(dv^2)` error
/// on top of the interpolation back to original velocities.
pub fn frame_sensitivity_convert(
    stack: &SensitivityStack,
    grid: &PhaseGrid,
    target: &crate::grid::VelocityGrid,
) -> Result<DistributionField> {
    if stack.perturbation != Perturbation::Velocity {
        return Err(Error::Unsupported(
            "original-frame conversion is only defined for velocity perturbations".into(),
        ));
    }
    let h = stack.field(1)?;
    let g = stack.field(0)?;
    let mut r = h.clone();
    r.axpy(-stack.family.eps_u, &g.dv_central(grid.v.spacing()));
    let u = stack.family.u(stack.z0);
    let mut out = crate::transform::from_shifted_frame(&r, &grid.v, u, target)?;
    out.order = 1;
    Ok(out)
}

/// Initial stack for data given in the original frame by `profile(k, x, v)`,
/// the `k`-th velocity derivative of `f_i`.
///
/// With `ZeroInFrame` the profile is read directly as the active-frame data.
pub fn initial_stack(
    profile: &dyn Fn(usize, f64, f64) -> f64,
    mode: InitSensitivity,
    n_max: usize,
    perturbation: Perturbation,
    family: UncertainMaxwellian,
    z0: f64,
    grid: &PhaseGrid,
) -> Result<SensitivityStack> {
    let frame = perturbation.frame();
    match mode {
        InitSensitivity::ZeroInFrame => {
            let g = DistributionField::from_fn(grid, frame, |x, v| profile(0, x, v));
            SensitivityStack::new(g, n_max, perturbation, family, z0)
        }
        InitSensitivity::ChainRuleFromF => {
            let fields = chain_rule_fields(profile, n_max, perturbation, &family, z0, grid)?;
            SensitivityStack::from_fields(fields, perturbation, family, z0)
        }
    }
}

/// `d^n/dz^n f_i(c(z, v))` with `c = v + u(z)` or `c = sqrt(T(z)) v`, by Faa di Bruno.
fn chain_rule_fields(
    profile: &dyn Fn(usize, f64, f64) -> f64,
    n_max: usize,
    perturbation: Perturbation,
    family: &UncertainMaxwellian,
    z0: f64,
    grid: &PhaseGrid,
) -> Result<Vec<DistributionField>> {
    let frame = perturbation.frame();
    // derivatives of the inner map at z0, as multipliers of (1, v)
    let (base, slope_coeffs): (Box<dyn Fn(f64) -> f64>, Vec<f64>) = match perturbation {
        Perturbation::Velocity => {
            let u = family.u(z0);
            let mut d = vec![0.0; n_max + 1];
            if n_max >= 1 {
                d[1] = family.u_derivative(1);
            }
            (Box::new(move |v| v + u), d)
        }
        Perturbation::Temperature => {
            let s = family.temp(z0).sqrt();
            let d = (0..=n_max)
                .map(|m| family.sqrt_temp_derivative(z0, m))
                .collect::<Result<Vec<_>>>()?;
            (Box::new(move |v| s * v), d)
        }
    };
    let mut fields = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let f = DistributionField::from_fn(grid, frame, |x, v| {
            let c = base(v);
            if n == 0 {
                return profile(0, x, c);
            }
            let inner: Vec<f64> = slope_coeffs
                .iter()
                .map(|&d| match perturbation {
                    Perturbation::Velocity => d,
                    Perturbation::Temperature => d * v,
                })
                .collect();
            let bell = partial_bell(&inner[..=n]);
            (1..=n).map(|k| profile(k, x, c) * bell[n][k]).sum()
        });
        fields.push(f.with_order(n));
    }
    Ok(fields)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::CollisionBasis;
    use crate::grid::{MaxwellianParams, SpatialGrid, VelocityGrid};

    fn setup(perturbation: Perturbation) -> (PhaseGrid, CollisionOperator, UncertainMaxwellian) {
        let grid = PhaseGrid::new(
            SpatialGrid::new(16, 2.0 * std::f64::consts::PI).unwrap(),
            VelocityGrid::centered(33, 0.0, 8.0).unwrap(),
        );
        let base = MaxwellianParams::new(1.0, 0.5, 1.0).unwrap();
        let fam = UncertainMaxwellian::new(base, 0.1, 0.1, -1.0, 1.0).unwrap();
        let basis = match perturbation {
            Perturbation::Velocity => CollisionBasis::zero_mean(1.0, 1.0, &grid.v, 1).unwrap(),
            Perturbation::Temperature => CollisionBasis::unit(1.0, &grid.v, 1).unwrap(),
        };
        (grid, CollisionOperator::new(basis), fam)
    }

    fn wave(grid: &PhaseGrid, frame: FrameKind) -> DistributionField {
        DistributionField::from_fn(grid, frame, |x, v| x.sin() * (1.0 + v * v) * (-v * v / 4.0).exp())
    }

    #[test]
    fn binomials_and_bell() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(3, 0), 1.0);
        assert_eq!(binomial(2, 3), 0.0);
        // affine inner function: only B_{n,n} = x1^n survives
        let b = partial_bell(&[0.0, 2.0, 0.0, 0.0]);
        assert_eq!(b[3][3], 8.0);
        assert_eq!(b[3][2], 0.0);
        // B_{3,2} = 3 x1 x2
        let b = partial_bell(&[0.0, 2.0, 5.0, 7.0]);
        assert_eq!(b[3][2], 30.0);
        assert_eq!(b[3][1], 7.0);
    }

    #[test]
    fn first_order_velocity_source() {
        let (grid, _, fam) = setup(Perturbation::Velocity);
        let g = wave(&grid, FrameKind::Shifted);
        let stack = SensitivityStack::new(g.clone(), 2, Perturbation::Velocity, fam, 0.0).unwrap();
        let s = stack.velocity_source(1, &grid).unwrap();
        let mut expect = g.dx_central(grid.x.spacing());
        expect.scale(-0.1);
        assert!(s.sub(&expect).max_abs() < 1e-15);
        // second order: -2 eps dx h1, and h1 = 0 here
        assert_eq!(stack.velocity_source(2, &grid).unwrap().max_abs(), 0.0);
        assert!(matches!(stack.velocity_source(3, &grid), Err(Error::MissingOrder(3))));
        assert!(stack.temperature_source(1, &grid).is_err());
    }

    #[test]
    fn unperturbed_sources_vanish() {
        let (grid, _, fam) = setup(Perturbation::Velocity);
        let fam0 = UncertainMaxwellian { eps_u: 0.0, eps_t: 0.0, ..fam };
        let g = wave(&grid, FrameKind::Shifted);
        let mut fields = vec![g.clone(), g.clone(), g.clone()];
        fields[1].scale(0.3);
        let stack = SensitivityStack::from_fields(fields.clone(), Perturbation::Velocity, fam0, 0.0).unwrap();
        for k in 1..=2 {
            assert_eq!(stack.velocity_source(k, &grid).unwrap().max_abs(), 0.0);
        }
        let fields: Vec<_> = fields
            .into_iter()
            .map(|mut f| {
                f.frame = FrameKind::Scaled;
                f
            })
            .collect();
        let stack = SensitivityStack::from_fields(fields, Perturbation::Temperature, fam0, 0.0).unwrap();
        for k in 1..=2 {
            assert_eq!(stack.temperature_source(k, &grid).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn second_order_velocity_source_is_binomial() {
        let (grid, _, fam) = setup(Perturbation::Velocity);
        let g = wave(&grid, FrameKind::Shifted);
        let mut h1 = DistributionField::from_fn(&grid, FrameKind::Shifted, |x, v| (2.0 * x).cos() * v);
        h1.order = 1;
        let h2 = DistributionField::zeros_like(&grid, FrameKind::Shifted);
        let stack = SensitivityStack::from_fields(vec![g, h1.clone(), h2], Perturbation::Velocity, fam, 0.0).unwrap();
        let s = stack.velocity_source(2, &grid).unwrap();
        let mut expect = h1.dx_central(grid.x.spacing());
        expect.scale(-2.0 * 0.1);
        assert!(s.sub(&expect).max_abs() < 1e-15);
    }

    #[test]
    fn first_order_temperature_source() {
        let (grid, _, fam) = setup(Perturbation::Temperature);
        let p = wave(&grid, FrameKind::Scaled);
        let stack = SensitivityStack::new(p.clone(), 1, Perturbation::Temperature, fam, 0.0).unwrap();
        let s = stack.temperature_source(1, &grid).unwrap();
        let d = p.dx_central(grid.x.spacing());
        let c = 0.1 / 2.0; // eps_T / (2 sqrt(T)) at T = 1
        for i in 0..grid.n_x() {
            for (j, &v) in grid.v.nodes().iter().enumerate() {
                assert!((s.get(i, j) + c * v * d.get(i, j)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn order_zero_stack_matches_plain_solve() {
        let (grid, op, fam) = setup(Perturbation::Velocity);
        let g = wave(&grid, FrameKind::Shifted);
        let stack = SensitivityStack::new(g.clone(), 0, Perturbation::Velocity, fam, 0.0).unwrap();
        let frame = stack.nominal_frame(&grid).unwrap();
        let cfg = SolverConfig::from_cfl(&grid, &frame, 1.0, 1.0, 0.5, TransportScheme::Upwind).unwrap();
        let out = solve_stack(&stack, &cfg, &op, &frame, &grid, &[]).unwrap();
        let plain = solver::solve(&g, &cfg, &op, &frame, &grid, None).unwrap();
        assert_eq!(out.stack.fields()[0].data(), plain.field.data());
    }

    #[test]
    fn uniform_data_has_no_sensitivity() {
        let (grid, op, fam) = setup(Perturbation::Velocity);
        let g = DistributionField::from_fn(&grid, FrameKind::Shifted, |_, v| v.powi(3) - 3.0 * v);
        let stack = SensitivityStack::new(g, 2, Perturbation::Velocity, fam, 0.0).unwrap();
        let frame = stack.nominal_frame(&grid).unwrap();
        let cfg = SolverConfig::from_cfl(&grid, &frame, 1.0, 1.0, 0.5, TransportScheme::Upwind).unwrap();
        let out = solve_stack(&stack, &cfg, &op, &frame, &grid, &[]).unwrap();
        assert_eq!(out.stack.fields()[1].max_abs(), 0.0);
        assert_eq!(out.stack.fields()[2].max_abs(), 0.0);
    }

    #[test]
    fn lower_orders_do_not_depend_on_n_max() {
        let (grid, op, fam) = setup(Perturbation::Temperature);
        let p = wave(&grid, FrameKind::Scaled);
        let s1 = SensitivityStack::new(p.clone(), 1, Perturbation::Temperature, fam, 0.0).unwrap();
        let s3 = SensitivityStack::new(p, 3, Perturbation::Temperature, fam, 0.0).unwrap();
        let frame = s1.nominal_frame(&grid).unwrap();
        let cfg = SolverConfig::from_cfl(&grid, &frame, 0.5, 1.0, 0.5, TransportScheme::Upwind).unwrap();
        let a = solve_stack(&s1, &cfg, &op, &frame, &grid, &[]).unwrap();
        let b = solve_stack(&s3, &cfg, &op, &frame, &grid, &[]).unwrap();
        for k in 0..=1 {
            assert_eq!(a.stack.fields()[k].data(), b.stack.fields()[k].data());
        }
    }

    #[test]
    fn rejects_wrong_frame_and_scheme() {
        let (grid, op, fam) = setup(Perturbation::Velocity);
        let g = wave(&grid, FrameKind::Scaled);
        assert!(SensitivityStack::new(g, 1, Perturbation::Velocity, fam, 0.0).is_err());
        let g = wave(&grid, FrameKind::Shifted);
        let stack = SensitivityStack::new(g, 1, Perturbation::Velocity, fam, 0.0).unwrap();
        let frame = stack.nominal_frame(&grid).unwrap();
        let cfg = SolverConfig::from_cfl(
            &grid,
            &frame,
            0.1,
            1.0,
            0.5,
            TransportScheme::Muscl(crate::solver::Limiter::Minmod),
        )
        .unwrap();
        assert!(matches!(
            solve_stack(&stack, &cfg, &op, &frame, &grid, &[]),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn convert_rejects_temperature_and_passes_through_without_eps() {
        let (grid, _, fam) = setup(Perturbation::Temperature);
        let p = wave(&grid, FrameKind::Scaled);
        let stack = SensitivityStack::new(p, 1, Perturbation::Temperature, fam, 0.0).unwrap();
        assert!(frame_sensitivity_convert(&stack, &grid, &grid.v).is_err());

        let (grid, _, fam) = setup(Perturbation::Velocity);
        let fam0 = UncertainMaxwellian { eps_u: 0.0, ..fam };
        let fam0 = UncertainMaxwellian {
            base: MaxwellianParams::new(1.0, 0.0, 1.0).unwrap(),
            ..fam0
        };
        let g = wave(&grid, FrameKind::Shifted);
        let mut h = DistributionField::from_fn(&grid, FrameKind::Shifted, |x, v| x.cos() * (-v * v).exp());
        h.order = 1;
        let stack = SensitivityStack::from_fields(vec![g, h.clone()], Perturbation::Velocity, fam0, 0.0).unwrap();
        let df = frame_sensitivity_convert(&stack, &grid, &grid.v).unwrap();
        assert!(df.sub(&h).max_abs() < 1e-14);
    }
}
