use linbgk::basis::CollisionBasis;
use linbgk::collision::CollisionOperator;
use linbgk::field::{DistributionField, FrameKind};
use linbgk::grid::{MaxwellianParams, PhaseGrid, SpatialGrid, UncertainMaxwellian, VelocityGrid};
use linbgk::sensitivity::{partial_bell, solve_stack, Perturbation, SensitivityStack};
use linbgk::solver::{solve, FrameSpec, Limiter, SolverConfig, TransportScheme};
use linbgk::transform::shift_velocity;
use proptest::prelude::*;

const N_V: usize = 65;

fn star_op(rho: f64, u: f64, temp: f64, extra: usize) -> CollisionOperator {
    let p = MaxwellianParams::new(rho, u, temp).unwrap();
    let grid = VelocityGrid::centered(N_V, u, 8.0 * temp.sqrt()).unwrap();
    CollisionOperator::new(CollisionBasis::star(p, &grid, extra).unwrap())
}

fn params() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.5..2.0f64, -1.0..1.0f64, 0.5..2.0f64)
}

fn slice() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, N_V)
}

fn wnorm(op: &CollisionOperator, f: &[f64]) -> f64 {
    op.basis().inner(f, f).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn collision_is_coercive((rho, u, t) in params(), f in slice()) {
        let op = star_op(rho, u, t, 2);
        let lf = op.apply(&f).unwrap();
        let n = wnorm(&op, &f);
        prop_assert!(op.basis().inner(&lf, &f) <= 1e-12 * (1.0 + n * n));
    }

    #[test]
    fn collision_is_self_adjoint((rho, u, t) in params(), f in slice(), g in slice()) {
        let op = star_op(rho, u, t, 2);
        let a = op.basis().inner(&op.apply(&f).unwrap(), &g);
        let b = op.basis().inner(&f, &op.apply(&g).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + wnorm(&op, &f) * wnorm(&op, &g)));
    }

    #[test]
    fn projection_is_idempotent((rho, u, t) in params(), f in slice()) {
        let op = star_op(rho, u, t, 0);
        let p = op.project(&f).unwrap();
        let pp = op.project(&p).unwrap();
        let scale = 1.0 + p.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in p.iter().zip(&pp) {
            prop_assert!((a - b).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn quadratics_are_collision_invariants((rho, u, t) in params(), c in prop::array::uniform3(-1.0..1.0f64)) {
        let op = star_op(rho, u, t, 1);
        let f: Vec<f64> = op.basis().grid().nodes().iter().map(|v| c[0] + c[1] * v + c[2] * v * v).collect();
        let scale = 1.0 + f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for x in op.apply(&f).unwrap() {
            prop_assert!(x.abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn collision_conserves_moments((rho, u, t) in params(), f in slice()) {
        let op = star_op(rho, u, t, 2);
        let m = op.moments_weighted(&op.apply(&f).unwrap()).unwrap();
        let n = wnorm(&op, &f);
        for k in m {
            prop_assert!(k.abs() <= 1e-12 * (1.0 + n) * (1.0 + u.abs() + t).powi(2));
        }
    }

    #[test]
    fn relaxation_contracts((rho, u, t) in params(), f in slice(), tau in 0.0..5.0f64) {
        let op = star_op(rho, u, t, 2);
        let mut g = f.clone();
        let mut s = vec![0.0; N_V];
        op.relax_slice(&mut g, tau, &mut s);
        prop_assert!(wnorm(&op, &g) <= wnorm(&op, &f) * (1.0 + 1e-13) + 1e-15);
    }

    #[test]
    fn bell_polynomials_of_linear_inner_function(a in -3.0..3.0f64) {
        // inner function a z has derivatives (a, 0, 0, ...)
        let b = partial_bell(&[0.0, a, 0.0, 0.0, 0.0]);
        for (n, row) in b.iter().enumerate().skip(1) {
            for (k, &x) in row.iter().enumerate().take(n + 1).skip(1) {
                let want = if k == n { a.powi(n as i32) } else { 0.0 };
                prop_assert!((x - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn bell_row_sums_of_exponential(c in 0.1..2.0f64) {
        // exp(c z) at z = 0: every derivative of the outer exp is 1,
        // so sum_k B[n][k](c, c^2, ...) = c^n
        let b = partial_bell(&[0.0, c, c * c, c.powi(3), c.powi(4)]);
        let bell = [1.0, 1.0, 2.0, 5.0, 15.0];
        for n in 1..=4 {
            let s: f64 = b[n].iter().sum();
            prop_assert!((s - bell[n] * c.powi(n as i32)).abs() <= 1e-12 * bell[n] * c.powi(n as i32).max(1.0));
        }
    }

    #[test]
    fn shifted_monotone_data_stays_monotone(
        steps in prop::collection::vec(0.0..1.0f64, 32),
        s in -0.5..0.5f64,
    ) {
        let src = VelocityGrid::new(33, -4.0, 4.0).unwrap();
        let mut y = vec![0.0];
        for d in &steps {
            y.push(y.last().unwrap() + d);
        }
        let f = DistributionField::from_vec(y.clone(), 1, 33, FrameKind::Original).unwrap();
        let target = VelocityGrid::new(97, -3.4, 3.4).unwrap();
        let g = shift_velocity(&f, &src, s, &target).unwrap();
        let out = g.row(0);
        for w in out.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12);
        }
        prop_assert!(out.iter().all(|&x| x >= -1e-12 && x <= y[32] + 1e-12));
    }
}

fn small_velocity_case(n_x: usize, u0: f64, eps_u: f64) -> (PhaseGrid, CollisionOperator, UncertainMaxwellian) {
    let v = VelocityGrid::centered(25, 0.0, 8.0).unwrap();
    let grid = PhaseGrid::new(SpatialGrid::new(n_x, 2.0 * std::f64::consts::PI).unwrap(), v);
    let basis = CollisionBasis::zero_mean(1.0, 1.0, &grid.v, 2).unwrap();
    let fam = UncertainMaxwellian::new(MaxwellianParams::new(1.0, u0, 1.0).unwrap(), eps_u, 0.0, -1.0, 1.0).unwrap();
    (grid, CollisionOperator::new(basis), fam)
}

fn initial(grid: &PhaseGrid, op: &CollisionOperator, phase: f64) -> DistributionField {
    let chi = op.basis().chi(3).to_vec();
    let mut g = DistributionField::zeros_like(grid, FrameKind::Shifted);
    for (i, &x) in grid.x.nodes().iter().enumerate() {
        let s = (x + phase).sin() + 0.3 * (2.0 * x).cos();
        for (o, c) in g.row_mut(i).iter_mut().zip(&chi) {
            *o = s * c;
        }
    }
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn lower_orders_ignore_higher_ones(
        u0 in -1.0..1.0f64,
        eps_u in -0.3..0.3f64,
        phase in 0.0..6.0f64,
        n_lo in 0usize..3,
        extra in 1usize..3,
    ) {
        let (grid, op, fam) = small_velocity_case(16, u0, eps_u);
        let g0 = initial(&grid, &op, phase);
        let frame = FrameSpec::shifted(&grid.v, fam.u(0.0));
        let cfg = SolverConfig::from_cfl(&grid, &frame, 0.3, 0.5, 0.5, TransportScheme::Upwind).unwrap();
        let lo = SensitivityStack::new(g0.clone(), n_lo, Perturbation::Velocity, fam, 0.0).unwrap();
        let hi = SensitivityStack::new(g0, n_lo + extra, Perturbation::Velocity, fam, 0.0).unwrap();
        let a = solve_stack(&lo, &cfg, &op, &frame, &grid, &[]).unwrap();
        let b = solve_stack(&hi, &cfg, &op, &frame, &grid, &[]).unwrap();
        for k in 0..=n_lo {
            prop_assert_eq!(a.stack.fields()[k].data(), b.stack.fields()[k].data());
        }
    }

    #[test]
    fn order_zero_stack_is_the_plain_solver(u0 in -1.0..1.0f64, phase in 0.0..6.0f64, kn in 0.05..5.0f64) {
        let (grid, op, fam) = small_velocity_case(16, u0, 0.1);
        let g0 = initial(&grid, &op, phase);
        let frame = FrameSpec::shifted(&grid.v, fam.u(0.0));
        let cfg = SolverConfig::from_cfl(&grid, &frame, 0.5, kn, 0.5, TransportScheme::Upwind).unwrap();
        let stack = SensitivityStack::new(g0.clone(), 0, Perturbation::Velocity, fam, 0.0).unwrap();
        let a = solve_stack(&stack, &cfg, &op, &frame, &grid, &[]).unwrap();
        let b = solve(&g0, &cfg, &op, &frame, &grid, None).unwrap();
        prop_assert_eq!(a.stack.fields()[0].data(), b.field.data());
        prop_assert_eq!(&a.series.norms[0], &b.series.norms[0]);
    }

    #[test]
    fn sourceless_weighted_norm_never_grows(
        u0 in -1.0..1.0f64,
        phase in 0.0..6.0f64,
        kn in 0.05..5.0f64,
        limiter in prop::sample::select(vec![None, Some(Limiter::Minmod), Some(Limiter::VanLeer), Some(Limiter::MonotonizedCentral)]),
    ) {
        let (grid, op, fam) = small_velocity_case(24, u0, 0.1);
        let g0 = initial(&grid, &op, phase);
        let frame = FrameSpec::shifted(&grid.v, fam.u(0.0));
        let scheme = limiter.map_or(TransportScheme::Upwind, TransportScheme::Muscl);
        let mut cfg = SolverConfig::from_cfl(&grid, &frame, 1.0, kn, 0.5, scheme).unwrap();
        cfg.sample_stride = Some(1);
        let out = solve(&g0, &cfg, &op, &frame, &grid, None).unwrap();
        let w = &out.series.weighted_norms[0];
        for pair in w.windows(2) {
            prop_assert!(pair[1] <= pair[0] * (1.0 + 1e-12));
        }
        let m0 = out.series.moments[0];
        let scale = m0.iter().fold(wnorm_field(&op, &g0, &grid), |m, x| m.max(x.abs()));
        for m in &out.series.moments {
            for k in 0..3 {
                prop_assert!((m[k] - m0[k]).abs() <= 1e-12 * scale);
            }
        }
    }
}

fn wnorm_field(op: &CollisionOperator, f: &DistributionField, grid: &PhaseGrid) -> f64 {
    op.inner_field(f, f, grid.x.spacing()).sqrt()
}

#[test]
fn stacks_reject_limited_transport() {
    let (grid, op, fam) = small_velocity_case(16, 0.5, 0.1);
    let g0 = initial(&grid, &op, 0.0);
    let frame = FrameSpec::shifted(&grid.v, fam.u(0.0));
    let cfg = SolverConfig::from_cfl(&grid, &frame, 0.1, 1.0, 0.5, TransportScheme::Muscl(Limiter::Minmod)).unwrap();
    let stack = SensitivityStack::new(g0, 1, Perturbation::Velocity, fam, 0.0).unwrap();
    assert!(matches!(
        solve_stack(&stack, &cfg, &op, &frame, &grid, &[]),
        Err(linbgk::Error::Unsupported(_))
    ));
}
