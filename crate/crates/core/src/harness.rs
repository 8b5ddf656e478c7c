//! Verification tools: bound envelopes, growth fits, the finite-difference
//! collocation oracle in `z`, conservation audits and the acoustic limit.

use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::basis::{WeightFrame, HYDRO_DIM};
use crate::collision::CollisionOperator;
use crate::error::{Error, Result};
use crate::field::{DistributionField, FrameKind};
use crate::grid::{norm_xv, MaxwellianParams, PhaseGrid, UncertainMaxwellian};
use crate::sensitivity::{frame_at, solve_stack, time_derivative_from_equation, Perturbation, SensitivityStack};
use crate::series::NormSeries;
use crate::solver::{self, FrameSpec, SolverConfig, Workspace};

pub const DEFAULT_TOL_REL: f64 = 1e-6;
pub const DEFAULT_TOL_ABS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub name: String,
    pub pass: bool,
    /// Largest `norm - allowed` over the samples (negative when every sample has room).
    pub max_violation: f64,
    pub worst_time: f64,
    /// `allowed - norm` per sample.
    pub margins: Vec<f64>,
}

/// Checks `norms[order][s] <= envelope[s] (1 + tol_rel) + tol_abs` at every sample.
pub fn verify_envelope(
    series: &NormSeries,
    order: usize,
    bound: &str,
    tol_rel: f64,
    tol_abs: f64,
) -> Result<EnvelopeReport> {
    let env = series
        .envelopes
        .get(bound)
        .ok_or_else(|| Error::InvalidArgument(format!("no envelope named '{bound}'")))?;
    let norms = series.norm(order).ok_or(Error::MissingOrder(order))?;
    check_against(bound, &series.times, norms, env, tol_rel, tol_abs)
}

/// Same check for an arbitrary value series, e.g. an auxiliary diagnostic.
pub fn check_against(
    name: &str,
    times: &[f64],
    values: &[f64],
    bound: &[f64],
    tol_rel: f64,
    tol_abs: f64,
) -> Result<EnvelopeReport> {
    if values.len() != times.len() || bound.len() != times.len() {
        return Err(Error::InvalidArgument(format!("series lengths differ for '{name}'")));
    }
    let margins: Vec<f64> = values
        .iter()
        .zip(bound)
        .map(|(&n, &b)| b * (1.0 + tol_rel) + tol_abs - n)
        .collect();
    let (worst, &min_margin) = margins
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap_or((0, &f64::INFINITY));
    Ok(EnvelopeReport {
        name: name.to_string(),
        pass: margins.iter().all(|&m| m >= 0.0),
        max_violation: -min_margin,
        worst_time: times.get(worst).copied().unwrap_or(0.0),
        margins,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport {
    pub pass: bool,
    pub n_increases: usize,
    /// Largest `x[s+1] - x[s]`.
    pub max_increase: f64,
    pub max_relative_increase: f64,
    /// Time of the first increase beyond tolerance.
    pub first_violation: Option<f64>,
}

/// Nonincreasing check with an absolute tolerance per sample step.
pub fn verify_nonincreasing(times: &[f64], values: &[f64], tol: f64) -> MonotoneReport {
    let mut report = MonotoneReport {
        pass: true,
        n_increases: 0,
        max_increase: f64::NEG_INFINITY,
        max_relative_increase: f64::NEG_INFINITY,
        first_violation: None,
    };
    for (s, w) in values.windows(2).enumerate() {
        let inc = w[1] - w[0];
        report.max_increase = report.max_increase.max(inc);
        if w[0] > 0.0 {
            report.max_relative_increase = report.max_relative_increase.max(inc / w[0]);
        }
        if inc > tol {
            report.n_increases += 1;
            report.pass = false;
            report.first_violation.get_or_insert(times[s + 1]);
        }
    }
    if values.len() < 2 {
        report.max_increase = 0.0;
        report.max_relative_increase = 0.0;
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r2: f64,
    pub n_samples: usize,
}

/// Least-squares fit of `log y = log c + p log t` on `window`.
pub fn fit_growth_exponent(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<GrowthFit> {
    let (lo, hi) = window;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(&t, _)| t >= lo && t <= hi && t > 0.0)
        .map(|(&t, &y)| (t, y))
        .collect();
    if pts.len() < 20 {
        return Err(Error::DegenerateWindow(format!(
            "{} samples in [{lo}, {hi}], need at least 20",
            pts.len()
        )));
    }
    if let Some((t, y)) = pts.iter().find(|(_, y)| !(*y > 1e-12)) {
        return Err(Error::DegenerateWindow(format!("value {y:e} at t = {t} is below 1e-12")));
    }
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateWindow("window has a single time".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(GrowthFit {
        exponent: slope,
        prefactor: (my - slope * mx).exp(),
        r2,
        n_samples: pts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerRatioReport {
    pub pass: bool,
    pub start_value: f64,
    pub max_value: f64,
    pub nonincreasing: bool,
}

/// Boundedness of `y(t) / t^n` on `window`: the window maximum is at most
/// `slack` times the value at the window start, or the ratio never increases.
pub fn bounded_power_ratio(
    times: &[f64],
    values: &[f64],
    n: i32,
    window: (f64, f64),
    slack: f64,
) -> Result<PowerRatioReport> {
    let ratio: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(&t, _)| t >= window.0 && t <= window.1 && t > 0.0)
        .map(|(&t, &y)| (t, y / t.powi(n)))
        .collect();
    if ratio.len() < 2 {
        return Err(Error::DegenerateWindow(format!(
            "fewer than two samples in [{}, {}]",
            window.0, window.1
        )));
    }
    let start = ratio[0].1;
    let max = ratio.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let nonincreasing = ratio.windows(2).all(|w| w[1].1 <= w[0].1);
    Ok(PowerRatioReport {
        pass: nonincreasing || max <= slack * start,
        start_value: start,
        max_value: max,
        nonincreasing,
    })
}

/// Central finite differences in `z` from solutions at equispaced nodes
/// `z0 + k delta`; returns derivatives of orders `1..values.len()`.
pub fn central_differences(values: &[DistributionField], delta: f64) -> Result<Vec<DistributionField>> {
    let weights: Vec<(Vec<f64>, f64)> = match values.len() {
        3 => vec![(vec![-0.5, 0.0, 0.5], 1.0), (vec![1.0, -2.0, 1.0], 2.0)],
        5 => vec![
            (vec![1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0], 1.0),
            (vec![-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0], 2.0),
            (vec![-0.5, 1.0, 0.0, -1.0, 0.5], 3.0),
            (vec![1.0, -4.0, 6.0, -4.0, 1.0], 4.0),
        ],
        n => return Err(Error::InvalidArgument(format!("{n}-point stencil; use 3 or 5 nodes"))),
    };
    let first = &values[0];
    if values.iter().any(|v| !v.same_shape(first)) {
        return Err(Error::GridMismatch("collocation members differ in shape".into()));
    }
    let mut out = Vec::with_capacity(weights.len());
    for (k, (w, p)) in weights.into_iter().enumerate() {
        let mut d = DistributionField::zeros(first.n_x(), first.n_v(), first.frame);
        for (c, f) in w.iter().zip(values) {
            if *c != 0.0 {
                d.axpy(*c, f);
            }
        }
        d.scale(delta.powf(-p));
        d.order = k + 1;
        d.time = first.time;
        out.push(d);
    }
    Ok(out)
}

/// Initial data of a collocation member as a function of `z`.
pub type InitialByZ<'a> = dyn Fn(f64) -> Result<DistributionField> + Sync + 'a;

/// Deterministic problem solved at each collocation node.
pub struct CollocationProblem<'a> {
    pub grid: &'a PhaseGrid,
    pub op: &'a CollisionOperator,
    /// Nominal configuration; every member reuses its step size.
    pub cfg: SolverConfig,
    pub perturbation: Perturbation,
    pub family: UncertainMaxwellian,
    pub initial: &'a InitialByZ<'a>,
}

#[derive(Debug, Clone)]
pub struct CollocationResult {
    pub z_nodes: Vec<f64>,
    pub delta: f64,
    /// `(step, derivatives)` with `derivatives[k - 1]` the order-`k` estimate.
    pub snapshots: Vec<(usize, Vec<DistributionField>)>,
}

/// Finite-difference sensitivities from independent order-0 solves at
/// `z0 + k delta`, `|k| <= (n_z - 1) / 2`, taken at `snapshot_steps`.
///
/// Members use the nominal step size and the nominal numerical viscosity, so
/// the discrete scheme is a smooth function of `z` and the differences
/// converge at `O(delta^2)` to the direct hierarchy.
pub fn collocation_oracle(
    problem: &CollocationProblem<'_>,
    z0: f64,
    delta: f64,
    n_z: usize,
    snapshot_steps: &[usize],
) -> Result<CollocationResult> {
    if n_z != 3 && n_z != 5 {
        return Err(Error::InvalidArgument(format!("n_z = {n_z}; use 3 or 5")));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta = {delta} must be positive")));
    }
    let half = (n_z - 1) / 2;
    let z_nodes: Vec<f64> = (0..n_z).map(|k| z0 + (k as f64 - half as f64) * delta).collect();
    for &z in &z_nodes {
        if !problem.family.contains(z) {
            return Err(Error::OutOfRange(format!(
                "collocation node z = {z} outside [{}, {}]",
                problem.family.z_min, problem.family.z_max
            )));
        }
    }
    let nominal = frame_at(problem.perturbation, &problem.family, z0, problem.grid)?;
    let members: Vec<Vec<(usize, DistributionField)>> = z_nodes
        .par_iter()
        .map(|&z| {
            let frame = frame_at(problem.perturbation, &problem.family, z, problem.grid)?.with_viscosity_of(&nominal)?;
            let init = (problem.initial)(z)?;
            let stack = SensitivityStack::new(init, 0, problem.perturbation, problem.family, z)?;
            let out = solve_stack(&stack, &problem.cfg, problem.op, &frame, problem.grid, snapshot_steps)?;
            Ok(out
                .snapshots
                .into_iter()
                .map(|(n, s)| (n, s.fields()[0].clone()))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut snapshots = Vec::new();
    for (s, &(step, _)) in members[0].iter().enumerate() {
        let values: Vec<DistributionField> = members.iter().map(|m| m[s].1.clone()).collect();
        snapshots.push((step, central_differences(&values, delta)?));
    }
    Ok(CollocationResult {
        z_nodes,
        delta,
        snapshots,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RichardsonReport {
    /// Largest `||direct - fd||` over the snapshots at `delta` and `delta / 2`.
    pub discrepancy: f64,
    pub discrepancy_half: f64,
    pub ratio: f64,
    pub consistent: bool,
    pub warning: Option<String>,
}

/// Compares direct sensitivities with finite differences at `delta` and
/// `delta / 2`; a stencil of accuracy `order` should shrink the discrepancy
/// by `2^order`, accepted within 12.5%.
pub fn richardson_check(
    direct: &[DistributionField],
    fd: &[DistributionField],
    fd_half: &[DistributionField],
    grid: &PhaseGrid,
    order: i32,
) -> Result<RichardsonReport> {
    if direct.len() != fd.len() || direct.len() != fd_half.len() || direct.is_empty() {
        return Err(Error::InvalidArgument("snapshot counts differ".into()));
    }
    let mut d1: f64 = 0.0;
    let mut d2: f64 = 0.0;
    for ((h, a), b) in direct.iter().zip(fd).zip(fd_half) {
        d1 = d1.max(norm_xv(&h.sub(a), grid)?);
        d2 = d2.max(norm_xv(&h.sub(b), grid)?);
    }
    let ratio = d1 / d2;
    let expected = 2f64.powi(order);
    let consistent = (0.875 * expected..=1.125 * expected).contains(&ratio);
    let warning = (!consistent).then(|| {
        format!("halving delta changed the finite-difference discrepancy by {ratio:.3}, expected about {expected}")
    });
    Ok(RichardsonReport {
        discrepancy: d1,
        discrepancy_half: d2,
        ratio,
        consistent,
        warning,
    })
}

/// Linearized macroscopic perturbations `(rho~, u~, T~)` per spatial cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticState {
    pub rho_t: Vec<f64>,
    pub u_t: Vec<f64>,
    pub temp_t: Vec<f64>,
    pub params: MaxwellianParams,
}

impl AcousticState {
    fn solve(m: [f64; 3], p: &MaxwellianParams) -> [f64; 3] {
        let rho = m[0];
        let u = (m[1] - rho * p.u) / p.rho;
        let temp = (m[2] - rho * (p.u * p.u + p.temp) - 2.0 * p.rho * p.u * u) / p.rho;
        [rho, u, temp]
    }

    /// Moments `(m0, m1, m2)` of a Maxwellian perturbed by this state.
    pub fn moments(&self) -> Vec<[f64; 3]> {
        let p = &self.params;
        (0..self.rho_t.len())
            .map(|i| {
                let (r, u, t) = (self.rho_t[i], self.u_t[i], self.temp_t[i]);
                [
                    r,
                    r * p.u + p.rho * u,
                    r * (p.u * p.u + p.temp) + 2.0 * p.rho * p.u * u + p.rho * t,
                ]
            })
            .collect()
    }

    pub fn from_moments(moments: &[[f64; 3]], params: MaxwellianParams) -> Self {
        let mut s = Self {
            rho_t: Vec::with_capacity(moments.len()),
            u_t: Vec::with_capacity(moments.len()),
            temp_t: Vec::with_capacity(moments.len()),
            params,
        };
        for m in moments {
            let [r, u, t] = Self::solve(*m, &params);
            s.rho_t.push(r);
            s.u_t.push(u);
            s.temp_t.push(t);
        }
        s
    }

    fn component(&self, k: usize) -> &[f64] {
        match k {
            0 => &self.rho_t,
            1 => &self.u_t,
            _ => &self.temp_t,
        }
    }
}

/// Weighted moments `<(1, v, v^2), f>_*` per cell, inverted for `(rho~, u~, T~)`.
///
/// `op` must carry the general weight `M_*` of the original frame.
pub fn linearized_moments(f: &DistributionField, op: &CollisionOperator) -> Result<AcousticState> {
    if f.frame != FrameKind::Original {
        return Err(Error::InvalidArgument(format!(
            "moments need an original-frame field, got {}",
            f.frame.name()
        )));
    }
    if op.frame() != WeightFrame::Star {
        return Err(Error::InvalidArgument("moments need the M_* weighted operator".into()));
    }
    let moments = f.rows().map(|r| op.moments_weighted(r)).collect::<Result<Vec<_>>>()?;
    Ok(AcousticState::from_moments(&moments, *op.basis().params()))
}

pub fn acoustic_matrix(p: &MaxwellianParams) -> Matrix3<f64> {
    Matrix3::new(
        p.u, p.rho, 0.0, //
        p.temp / p.rho, p.u, 1.0, //
        0.0, 2.0 * p.temp, p.u,
    )
}

/// Real eigenvalues of [`acoustic_matrix`], ascending.
pub fn acoustic_eigenvalues(p: &MaxwellianParams) -> Result<[f64; HYDRO_DIM]> {
    let ev = acoustic_matrix(p)
        .schur()
        .eigenvalues()
        .ok_or_else(|| Error::InvalidArgument("acoustic matrix has complex eigenvalues".into()))?;
    let mut out = [ev[0], ev[1], ev[2]];
    out.sort_by(f64::total_cmp);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcousticRun {
    pub knudsen: f64,
    pub times: Vec<f64>,
    /// `||dt U + A dx U||_{L^2(dx)}` per interior step.
    pub residuals: Vec<f64>,
    /// Root mean square of `residuals`.
    pub rms_residual: f64,
}

/// Runs an original-frame solve and measures how far the moment profiles are
/// from solving the acoustic system, with central differences in `t` and `x`.
pub fn acoustic_limit_residual(
    initial: &DistributionField,
    cfg: &SolverConfig,
    op: &CollisionOperator,
    grid: &PhaseGrid,
) -> Result<AcousticRun> {
    let frame = FrameSpec::original(&grid.v);
    cfg.validate()?;
    grid.check(initial)?;
    solver::check_operator(op, &frame, grid)?;
    cfg.check_cfl(grid, &frame)?;
    let params = *op.basis().params();
    let a = acoustic_matrix(&params);
    let dt = cfg.step_size();
    let dx = grid.x.spacing();
    let n_x = grid.n_x();
    let mut ws = Workspace::default();
    let mut w = initial.clone();
    let mut states = vec![linearized_moments(&w, op)?];
    let mut times = vec![w.time];
    for n in 0..cfg.n_steps() {
        solver::step_in_place(&mut w, None, cfg, op, &frame, grid, &mut ws)?;
        w.time = initial.time + (n + 1) as f64 * dt;
        if !w.is_finite() {
            return Err(Error::NonFinite {
                time: w.time,
                order: 0,
                last_valid: Box::new(initial.clone()),
            });
        }
        states.push(linearized_moments(&w, op)?);
        times.push(w.time);
    }
    let mut residuals = Vec::new();
    let mut res_times = Vec::new();
    for s in 1..states.len().saturating_sub(1) {
        let (prev, cur, next) = (&states[s - 1], &states[s], &states[s + 1]);
        let mut sum = 0.0;
        for i in 0..n_x {
            let ip = grid.x.wrap(i as isize + 1);
            let im = grid.x.wrap(i as isize - 1);
            for r in 0..HYDRO_DIM {
                let dt_u = (next.component(r)[i] - prev.component(r)[i]) / (2.0 * dt);
                let mut adx = 0.0;
                for c in 0..HYDRO_DIM {
                    let comp = cur.component(c);
                    adx += a[(r, c)] * (comp[ip] - comp[im]) / (2.0 * dx);
                }
                sum += (dt_u + adx).powi(2) * dx;
            }
        }
        residuals.push(sum.sqrt());
        res_times.push(times[s]);
    }
    let rms = if residuals.is_empty() {
        0.0
    } else {
        (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt()
    };
    Ok(AcousticRun {
        knudsen: cfg.knudsen,
        times: res_times,
        residuals,
        rms_residual: rms,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservationReport {
    pub pass: bool,
    /// `max_t |m_k(t) - m_k(0)| / scale_k` for mass, momentum and energy.
    pub drift: [f64; 3],
    pub scale: [f64; 3],
}

/// Reference magnitudes `int <|phi_k|, |w|> dx` for relative drift.
pub fn moment_scales(w: &DistributionField, op: &CollisionOperator, dx: f64) -> [f64; 3] {
    let abs = DistributionField::from_vec(w.data().iter().map(|x| x.abs()).collect(), w.n_x(), w.n_v(), w.frame)
        .expect("same shape");
    let mut m = op.integrated_moments(&abs, dx);
    // |v| differs from v for the momentum row
    let nodes = op.basis().grid().nodes();
    let weight = op.basis().weight();
    m[1] = abs
        .rows()
        .map(|r| r.iter().enumerate().map(|(j, x)| weight[j] * nodes[j].abs() * x).sum::<f64>())
        .sum::<f64>()
        * dx;
    m
}

/// Relative drift of the recorded x-integrated weighted moments.
pub fn conservation_audit(series: &NormSeries, scale: [f64; 3], tol: f64) -> Result<ConservationReport> {
    let first = series
        .moments
        .first()
        .ok_or_else(|| Error::InvalidArgument("series has no moments".into()))?;
    let mut drift = [0.0f64; 3];
    for m in &series.moments {
        for k in 0..3 {
            let d = (m[k] - first[k]).abs() / scale[k].max(f64::MIN_POSITIVE);
            drift[k] = drift[k].max(d);
        }
    }
    Ok(ConservationReport {
        pass: drift.iter().all(|&d| d <= tol),
        drift,
        scale,
    })
}

/// Constants of the linear-growth bound for the first temperature sensitivity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureBoundConstants {
    /// `|d_z sqrt(T) / sqrt(T)|`.
    pub relative_rate: f64,
    /// Weighted/unweighted norm-equivalence factor on the grid.
    pub k_eq: f64,
    pub d: f64,
    pub p_norm: f64,
    /// `||L_1 p_i - sqrt(T) v dx p_i||`.
    pub dtp_norm: f64,
    pub slope: f64,
}

pub fn temperature_bound_constants(
    p_init: &DistributionField,
    op: &CollisionOperator,
    frame: &FrameSpec,
    grid: &PhaseGrid,
    family: &UncertainMaxwellian,
    z0: f64,
) -> Result<TemperatureBoundConstants> {
    let temp = family.temp(z0);
    let relative_rate = (family.sqrt_temp_derivative(z0, 1)? / temp.sqrt()).abs();
    let k_eq = op.norm_equivalence();
    let d = 1.0;
    let p_norm = norm_xv(p_init, grid)?;
    let dtp = time_derivative_from_equation(p_init, op, frame, grid)?;
    let dtp_norm = norm_xv(&dtp, grid)?;
    Ok(TemperatureBoundConstants {
        relative_rate,
        k_eq,
        d,
        p_norm,
        dtp_norm,
        slope: relative_rate * (k_eq * d.sqrt() * p_norm + dtp_norm),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionAudit {
    pub samples: usize,
    /// Largest `<L f, f>`.
    pub max_coercivity: f64,
    /// Largest `|<L f, g> - <f, L g>| / (||f|| ||g||)`.
    pub max_symmetry_defect: f64,
    /// Largest `|L phi| / max|phi|` over `phi = 1, v, v^2`.
    pub null_space_defect: f64,
    /// Largest `|<phi, L f>|`.
    pub max_moment: f64,
}

impl CollisionAudit {
    pub fn pass(&self, tol: f64) -> bool {
        self.max_coercivity <= tol
            && self.max_symmetry_defect <= tol
            && self.null_space_defect <= tol
            && self.max_moment <= tol
    }
}

/// Checks the structural properties of `L` on `samples` random slices.
pub fn collision_property_audit(op: &CollisionOperator, samples: usize, seed: u64) -> Result<CollisionAudit> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n_v = op.n_v();
    let nodes = op.basis().grid().nodes();
    let mut audit = CollisionAudit {
        samples,
        max_coercivity: f64::NEG_INFINITY,
        max_symmetry_defect: 0.0,
        null_space_defect: 0.0,
        max_moment: 0.0,
    };
    for k in 0..3 {
        let phi: Vec<f64> = nodes.iter().map(|v| v.powi(k)).collect();
        let scale = phi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let l = op.apply(&phi)?;
        let defect = l.iter().fold(0.0f64, |m, x| m.max(x.abs())) / scale;
        audit.null_space_defect = audit.null_space_defect.max(defect);
    }
    for _ in 0..samples {
        let f: Vec<f64> = (0..n_v).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..n_v).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lf = op.apply(&f)?;
        let lg = op.apply(&g)?;
        let b = op.basis();
        audit.max_coercivity = audit.max_coercivity.max(b.inner(&lf, &f));
        let norms = (b.inner(&f, &f) * b.inner(&g, &g)).sqrt();
        let defect = (b.inner(&lf, &g) - b.inner(&f, &lg)).abs() / norms;
        audit.max_symmetry_defect = audit.max_symmetry_defect.max(defect);
        let m = op.moments_weighted(&lf)?;
        audit.max_moment = m.iter().fold(audit.max_moment, |acc, x| acc.max(x.abs()));
    }
    Ok(audit)
}

/// Error of one refinement level of the manufactured-solution study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementLevel {
    pub n_x: usize,
    pub dt: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub levels: Vec<RefinementLevel>,
    /// `log2(e_k / e_{k+1})` between consecutive levels.
    pub orders: Vec<f64>,
}

impl ConvergenceStudy {
    /// Order observed between the two finest levels.
    pub fn finest_order(&self) -> f64 {
        self.orders.last().copied().unwrap_or(f64::NAN)
    }
}

/// Forced problem with the exact solution `w = sin(x - t) psi(v)`,
/// `psi(v) = (1 + v + v^3) exp(-v^2 / 4)`, in the shifted frame.
///
/// The forcing applies the discrete collision operator to the exact grid
/// values, so the velocity discretization is exact and the measured error is
/// that of the transport scheme and the splitting. `n_x` doubles between
/// levels with the step size tied to the cell width.
pub fn manufactured_convergence(
    n_x_levels: &[usize],
    n_v: usize,
    u: f64,
    knudsen: f64,
    t_end: f64,
    cfl_safety: f64,
    scheme: solver::TransportScheme,
) -> Result<ConvergenceStudy> {
    use crate::basis::CollisionBasis;
    use crate::grid::{SpatialGrid, VelocityGrid};
    if n_x_levels.len() < 2 {
        return Err(Error::InvalidArgument("need at least two refinement levels".into()));
    }
    let vgrid = VelocityGrid::centered(n_v, 0.0, 8.0)?;
    let op = CollisionOperator::new(CollisionBasis::zero_mean(1.0, 1.0, &vgrid, 1)?);
    let psi: Vec<f64> = vgrid
        .nodes()
        .iter()
        .map(|&v| (1.0 + v + v * v * v) * (-v * v / 4.0).exp())
        .collect();
    let l_psi = op.apply(&psi)?;
    let length = 2.0 * std::f64::consts::PI;
    let coarse_dx = length / n_x_levels[0] as f64;
    let frame = FrameSpec::shifted(&vgrid, u);
    let coarse_dt = cfl_safety * coarse_dx / frame.max_speed();
    let levels = n_x_levels
        .par_iter()
        .map(|&n_x| {
            let grid = PhaseGrid::new(SpatialGrid::new(n_x, length)?, vgrid.clone());
            let dt = coarse_dt * n_x_levels[0] as f64 / n_x as f64;
            let n_steps = (t_end / dt).round().max(1.0) as usize;
            let cfg = SolverConfig {
                dt: t_end / n_steps as f64,
                t_end,
                knudsen,
                cfl_safety,
                scheme,
                sample_stride: None,
            };
            let exact = |t: f64| {
                DistributionField::from_fn(&grid, FrameKind::Shifted, |x, v| {
                    let j = ((v - vgrid.v_min()) / vgrid.spacing()).round() as usize;
                    (x - t).sin() * psi[j]
                })
            };
            let speeds = frame.speeds().to_vec();
            let source = |t: f64| {
                let mut s = DistributionField::zeros_like(&grid, FrameKind::Shifted);
                for (i, &x) in grid.x.nodes().iter().enumerate() {
                    let (sn, cs) = (x - t).sin_cos();
                    for j in 0..vgrid.len() {
                        s.set(i, j, (speeds[j] - 1.0) * cs * psi[j] - sn * l_psi[j] / knudsen);
                    }
                }
                s
            };
            let out = solver::solve(&exact(0.0), &cfg, &op, &frame, &grid, Some(&source))?;
            let error = norm_xv(&out.field.sub(&exact(t_end)), &grid)?;
            Ok(RefinementLevel {
                n_x,
                dt: cfg.dt,
                error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let orders = levels
        .windows(2)
        .map(|w| (w[0].error / w[1].error).log2() / (w[1].n_x as f64 / w[0].n_x as f64).log2())
        .collect();
    Ok(ConvergenceStudy { levels, orders })
}
