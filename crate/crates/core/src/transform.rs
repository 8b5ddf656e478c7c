//! Changes of velocity variable by monotone cubic Hermite interpolation.
//!
//! `shift_velocity(f, s)` returns `v -> f(v - s)` and `scale_velocity(f, c)`
//! returns `v -> f(v / c)`. The frame maps are built on these:
//! the shifted frame reads the original field at `v + u`, the scaled frame
//! at `sqrt(T) v`, which is what turns the transport speeds into `v + u` and
//! `sqrt(T) v` and the collision weight into `M(0, T)` and `M(0, 1)`.

use crate::error::{Error, Result};
use crate::field::{DistributionField, FrameKind};
use crate::grid::VelocityGrid;

/// Piecewise cubic Hermite interpolant on a uniform grid with centered slopes
/// and the Hyman monotonicity filter (third order away from data extrema).
struct MonotoneCubic<'a> {
    x0: f64,
    h: f64,
    y: &'a [f64],
    d: Vec<f64>,
}

impl<'a> MonotoneCubic<'a> {
    fn new(x0: f64, h: f64, y: &'a [f64]) -> Self {
        let n = y.len();
        let delta: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]) / h).collect();
        let mut d = vec![0.0; n];
        for k in 1..n - 1 {
            let (a, b) = (delta[k - 1], delta[k]);
            if a * b > 0.0 {
                let bound = 3.0 * a.abs().min(b.abs());
                d[k] = (0.5 * (a + b)).clamp(-bound, bound);
            }
        }
        d[0] = edge_slope(delta[0], delta.get(1).copied().unwrap_or(delta[0]));
        d[n - 1] = edge_slope(delta[n - 2], if n > 2 { delta[n - 3] } else { delta[n - 2] });
        Self { x0, h, y, d }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let s = (x - self.x0) / self.h;
        let k = (s.floor().max(0.0) as usize).min(n - 2);
        let t = s - k as f64;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.y[k] + h10 * self.h * self.d[k] + h01 * self.y[k + 1] + h11 * self.h * self.d[k + 1]
    }
}

/// One-sided three-point slope, limited to keep monotonicity.
fn edge_slope(d0: f64, d1: f64) -> f64 {
    let d = 0.5 * (3.0 * d0 - d1);
    if d * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// Evaluates every velocity slice of `f` (on `src`) at `map(v)` for each node `v` of `target`.
fn resample(
    f: &DistributionField,
    src: &VelocityGrid,
    target: &VelocityGrid,
    frame: FrameKind,
    map: impl Fn(f64) -> f64,
) -> Result<DistributionField> {
    if f.n_v() != src.len() {
        return Err(Error::GridMismatch(format!(
            "field has {} velocity nodes, source grid {}",
            f.n_v(),
            src.len()
        )));
    }
    let tol = 1e-9 * src.spacing();
    let points: Vec<f64> = target.nodes().iter().map(|&v| map(v)).collect();
    if let Some(bad) = points
        .iter()
        .find(|&&p| p < src.v_min() - tol || p > src.v_max() + tol)
    {
        return Err(Error::OutOfRange(format!(
            "evaluation point {bad:.6} outside [{}, {}]",
            src.v_min(),
            src.v_max()
        )));
    }
    let mut out = DistributionField::zeros(f.n_x(), target.len(), frame);
    out.order = f.order;
    out.time = f.time;
    for (row_out, row_in) in out.rows_mut().zip(f.rows()) {
        let interp = MonotoneCubic::new(src.v_min(), src.spacing(), row_in);
        for (o, &p) in row_out.iter_mut().zip(&points) {
            *o = interp.eval(p);
        }
    }
    Ok(out)
}

/// `v -> f(v - s)` on the `target` grid.
pub fn shift_velocity(
    f: &DistributionField,
    src: &VelocityGrid,
    s: f64,
    target: &VelocityGrid,
) -> Result<DistributionField> {
    resample(f, src, target, f.frame, |v| v - s)
}

/// `v -> f(v / c)` on the `target` grid.
pub fn scale_velocity(
    f: &DistributionField,
    src: &VelocityGrid,
    c: f64,
    target: &VelocityGrid,
) -> Result<DistributionField> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("scale factor {c} must be positive")));
    }
    resample(f, src, target, f.frame, |v| v / c)
}

/// Original frame to shifted frame: `g(v) = f(v + u)`.
pub fn to_shifted_frame(
    f: &DistributionField,
    src: &VelocityGrid,
    u: f64,
    target: &VelocityGrid,
) -> Result<DistributionField> {
    let mut g = shift_velocity(f, src, -u, target)?;
    g.frame = FrameKind::Shifted;
    Ok(g)
}

/// Shifted frame back to the original frame: `f(v) = g(v - u)`.
pub fn from_shifted_frame(
    g: &DistributionField,
    src: &VelocityGrid,
    u: f64,
    target: &VelocityGrid,
) -> Result<DistributionField> {
    let mut f = shift_velocity(g, src, u, target)?;
    f.frame = FrameKind::Original;
    Ok(f)
}

/// Original frame to scaled frame: `p(v) = f(sqrt(T) v)`.
pub fn to_scaled_frame(
    f: &DistributionField,
    src: &VelocityGrid,
    temp: f64,
    target: &VelocityGrid,
) -> Result<DistributionField> {
    if !(temp > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature {temp} is not positive")));
    }
    let mut p = scale_velocity(f, src, 1.0 / temp.sqrt(), target)?;
    p.frame = FrameKind::Scaled;
    Ok(p)
}

/// Scaled frame back to the original frame: `f(v) = p(v / sqrt(T))`.
pub fn from_scaled_frame(
    p: &DistributionField,
    src: &VelocityGrid,
    temp: f64,
    target: &VelocityGrid,
) -> Result<DistributionField> {
    if !(temp > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature {temp} is not positive")));
    }
    let mut f = scale_velocity(p, src, temp.sqrt(), target)?;
    f.frame = FrameKind::Original;
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{PhaseGrid, SpatialGrid};

    fn gaussian_field(grid: &PhaseGrid, center: f64, var: f64) -> DistributionField {
        DistributionField::from_fn(grid, FrameKind::Original, |x, v| {
            (1.0 + 0.5 * x.sin()) * (-(v - center).powi(2) / (2.0 * var)).exp()
        })
    }

    fn phase(n_v: usize, half: f64) -> PhaseGrid {
        PhaseGrid::new(SpatialGrid::new(4, 1.0).unwrap(), VelocityGrid::centered(n_v, 0.0, half).unwrap())
    }

    #[test]
    fn zero_shift_and_unit_scale_are_identity() {
        let g = phase(65, 8.0);
        let f = gaussian_field(&g, 0.3, 1.0);
        let s = shift_velocity(&f, &g.v, 0.0, &g.v).unwrap();
        assert!(s.sub(&f).max_abs() < 1e-15);
        let p = to_scaled_frame(&f, &g.v, 1.0, &g.v).unwrap();
        assert!(p.sub(&f).max_abs() < 1e-15);
    }

    #[test]
    fn shift_moves_gaussian_at_third_order() {
        let mut errs = Vec::new();
        for n_v in [641, 1281, 2561] {
            let wide = phase(n_v, 10.0);
            let target = VelocityGrid::centered((n_v - 1) * 8 / 10 + 1, 0.0, 8.0).unwrap();
            let tgrid = PhaseGrid::new(wide.x.clone(), target.clone());
            let f = gaussian_field(&wide, 0.0, 1.0);
            let g = shift_velocity(&f, &wide.v, 0.37, &target).unwrap();
            let exact = gaussian_field(&tgrid, 0.37, 1.0);
            errs.push(g.sub(&exact).max_abs());
        }
        assert!(errs[0] < 1e-3, "{errs:?}");
        for w in errs.windows(2) {
            // O(dv^3) declared; allow the ratio a margin below 8
            assert!(w[0] / w[1] > 6.0, "{errs:?}");
        }
    }

    #[test]
    fn scale_broadens_gaussian() {
        let src = phase(401, 8.0);
        let target = VelocityGrid::centered(401, 0.0, 14.0).unwrap();
        let tgrid = PhaseGrid::new(src.x.clone(), target.clone());
        let f = gaussian_field(&src, 0.0, 1.0);
        let p = scale_velocity(&f, &src.v, 2.0, &target).unwrap();
        let exact = gaussian_field(&tgrid, 0.0, 4.0);
        assert!(p.sub(&exact).max_abs() < 1e-4);
    }

    #[test]
    fn frame_round_trips() {
        // each direction is measured on exact data; the composition may carry both errors
        let wide = phase(481, 12.0);
        let mid = VelocityGrid::centered(401, 0.0, 10.0).unwrap();
        let inner = VelocityGrid::centered(321, 0.0, 8.0).unwrap();
        let mgrid = PhaseGrid::new(wide.x.clone(), mid.clone());
        let igrid = PhaseGrid::new(wide.x.clone(), inner.clone());
        let f = gaussian_field(&wide, 0.2, 1.0);
        let exact = gaussian_field(&igrid, 0.2, 1.0);

        let g = to_shifted_frame(&f, &wide.v, 0.73, &mid).unwrap();
        assert_eq!(g.frame, FrameKind::Shifted);
        let mut g_exact = gaussian_field(&mgrid, 0.2 - 0.73, 1.0);
        g_exact.frame = FrameKind::Shifted;
        let fwd = g.sub(&g_exact).max_abs();
        let inv = from_shifted_frame(&g_exact, &mid, 0.73, &inner).unwrap().sub(&exact).max_abs();
        let back = from_shifted_frame(&g, &mid, 0.73, &inner).unwrap();
        assert_eq!(back.frame, FrameKind::Original);
        assert!(fwd > 0.0 && back.sub(&exact).max_abs() <= 2.0 * fwd.max(inv));

        let p = to_scaled_frame(&f, &wide.v, 1.44, &mid).unwrap();
        let p_exact = DistributionField::from_fn(&mgrid, FrameKind::Scaled, |x, v| {
            (1.0 + 0.5 * x.sin()) * (-(1.2 * v - 0.2).powi(2) / 2.0).exp()
        });
        let fwd = p.sub(&p_exact).max_abs();
        let inv = from_scaled_frame(&p_exact, &mid, 1.44, &inner).unwrap().sub(&exact).max_abs();
        let back = from_scaled_frame(&p, &mid, 1.44, &inner).unwrap();
        assert!(back.sub(&exact).max_abs() <= 2.0 * fwd.max(inv));
    }

    #[test]
    fn out_of_range_is_rejected() {
        let g = phase(65, 8.0);
        let f = gaussian_field(&g, 0.0, 1.0);
        assert!(matches!(shift_velocity(&f, &g.v, 1.0, &g.v), Err(Error::OutOfRange(_))));
        assert!(matches!(to_scaled_frame(&f, &g.v, 4.0, &g.v), Err(Error::OutOfRange(_))));
    }
}
