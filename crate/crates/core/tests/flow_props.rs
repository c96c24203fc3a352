use hyflow_core::automaton::{guard_strictness_transform, Edge, HybridAutomaton, Location};
use hyflow_core::engine::{simulate, SegmentKind, SimConfig};
use hyflow_core::graph::total_derivative;
use hyflow_core::integrator::{guaranteed_step, picard_enclosure, step_control, step_span, ButcherTable, FlowModel, IntegCfg};
use hyflow_core::interp::GPoly;
use hyflow_core::{AffineForm, EnvAff, Expr, Guard, Interval, NoiseAlloc, Rel, Reset, Trivalent};
use proptest::prelude::*;

fn iv(a: f64, b: f64) -> Interval {
    Interval::new(a, b).unwrap()
}

fn vdp() -> Vec<Expr> {
    let (x, y) = (Expr::var(0), Expr::var(1));
    vec![y.clone(), (1.0 - x.clone().powi(2)) * y - x]
}

fn rk4(f: &[Expr], x: &[f64], h: f64) -> Vec<f64> {
    let ev = |x: &[f64]| f.iter().map(|e| e.eval_f64(x, 0.0)).collect::<Vec<_>>();
    let shift = |x: &[f64], k: &[f64], s: f64| x.iter().zip(k).map(|(a, b)| a + s * b).collect::<Vec<_>>();
    let k1 = ev(x);
    let k2 = ev(&shift(x, &k1, h / 2.0));
    let k3 = ev(&shift(x, &k2, h / 2.0));
    let k4 = ev(&shift(x, &k3, h));
    (0..x.len()).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

fn ball() -> HybridAutomaton {
    HybridAutomaton {
        vars: vec!["y".into(), "v".into()],
        locations: vec![Location { name: "fall".into(), flow: vec![Expr::var(1), Expr::c(-9.81)] }],
        edges: vec![Edge::new(
            0,
            0,
            Guard::cmp(Expr::var(0), Rel::Lt, Expr::c(0.0)),
            Reset::new(vec![(0, Expr::c(0.0)), (1, -0.8 * Expr::var(1))]),
        )],
        init_location: 0,
        init_box: vec![iv(10.0, 10.2), Interval::point(0.0)],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derivative_matches_central_difference(x in -2.0..2.0f64, y in -2.0..2.0f64) {
        let f = vdp();
        let e = Expr::var(0) * Expr::var(1) + Expr::var(0).sin();
        let d = total_derivative(&e, &f).unwrap().eval_f64(&[x, y], 0.0);
        let delta = 1e-4;
        let fwd = rk4(&f, &[x, y], delta);
        let bwd = rk4(&f, &[x, y], -delta);
        let num = (e.eval_f64(&fwd, 0.0) - e.eval_f64(&bwd, 0.0)) / (2.0 * delta);
        prop_assert!((d - num).abs() <= 1e-5 * d.abs().max(1.0), "{} vs {}", d, num);
    }

    #[test]
    fn strict_guards_are_left_by_their_reset(v in -20.0..20.0f64) {
        let edge = Edge::new(0, 0, Guard::cmp(Expr::var(0), Rel::Le, Expr::c(0.0)), Reset::new(vec![(1, -0.8 * Expr::var(1))]));
        let (out, warning) = guard_strictness_transform(&edge);
        prop_assert!(warning.is_none());
        let after = out.reset.apply_f64(&[0.0, v], 0.0);
        prop_assert!(!out.guard.eval_f64(&after, 0.0));
        let mut al = NoiseAlloc::new();
        let forms = vec![AffineForm::constant(0.0), AffineForm::from_interval(iv(v, v + 1.0), &mut al)];
        let post = out.reset.apply_aff(&EnvAff::new(forms, AffineForm::zero()), &mut al).unwrap();
        prop_assert_eq!(out.guard.eval_aff(&EnvAff::new(post, AffineForm::zero()), &mut al).unwrap(), Trivalent::False);
    }

    #[test]
    fn picard_box_is_a_fixpoint(c in 0.5..2.0f64, r in 0.0..0.3f64, h in 0.01..0.3f64) {
        let flow = FlowModel::new(&vdp(), ButcherTable::ode23()).unwrap();
        let mut al = NoiseAlloc::new();
        let x = vec![AffineForm::from_interval(iv(c, c + r), &mut al), AffineForm::from_interval(iv(-c, -c + r), &mut al)];
        let t = Interval::point(0.0);
        if let Some(z) = picard_enclosure(&flow, &x, t, h, &IntegCfg::default()).unwrap() {
            let f = flow.eval_box(&z, step_span(t, h)).unwrap();
            let hh = iv(0.0, h);
            for j in 0..2 {
                let image = x[j].to_interval().add(&hh.mul(&f[j]));
                prop_assert!(z[j].contains_interval(&image));
            }
        }
    }

    #[test]
    fn rejection_never_grows_the_step(err in 0.0..1.0f64, tol in 1e-9..1e-2f64, h in 1e-5..1.0f64) {
        let cfg = IntegCfg { h_min: 1e-6, h_max: 2.0, ..IntegCfg::default() };
        let (ok, next) = step_control(err, tol, h, &cfg);
        prop_assert_eq!(ok, err <= tol);
        if !ok {
            prop_assert!(next <= h);
        }
    }

    #[test]
    fn oscillator_steps_contain_the_solution(x0 in 0.9..1.1f64, v0 in -0.1..0.1f64, taus in prop::collection::vec(0.0..=1.0f64, 10)) {
        let flow = FlowModel::new(&[Expr::var(1), -Expr::var(0)], ButcherTable::ode23()).unwrap();
        let cfg = IntegCfg { tol: 1e-6, ..IntegCfg::default() };
        let mut al = NoiseAlloc::new();
        let mut x = vec![AffineForm::from_interval(iv(0.9, 1.1), &mut al), AffineForm::from_interval(iv(-0.1, 0.1), &mut al)];
        let mut t = Interval::point(0.0);
        let mut h = 0.05;
        let exact = |s: f64| [x0 * s.cos() + v0 * s.sin(), -x0 * s.sin() + v0 * s.cos()];
        while t.hi() < 2.0 {
            let out = guaranteed_step(&flow, &x, t, h, &cfg, &mut al).unwrap();
            let end = exact(out.t_next.lo());
            for j in 0..2 {
                prop_assert!(out.x_next[j].to_interval().inflate(0.0, 1e-14).contains(end[j]));
            }
            for tau in &taus {
                let s = t.lo() + tau * out.h_used;
                let p = exact(s);
                for j in 0..2 {
                    prop_assert!(out.hull[j].inflate(0.0, 1e-14).contains(p[j]));
                }
            }
            x = out.x_next;
            t = out.t_next;
            h = out.h_next;
        }
    }

    #[test]
    fn interpolation_reproduces_nodes_and_degrades_monotonely(x0 in 0.5..2.0f64, w in 0.0..0.2f64, grow in 0.0..1.0f64, tau in 0.0..=1.0f64) {
        let flow = FlowModel::new(&[-Expr::var(0)], ButcherTable::ode23()).unwrap().with_derivative(3).unwrap();
        let cfg = IntegCfg { tol: 1e-4, ..IntegCfg::default() };
        let mut al = NoiseAlloc::new();
        let x = vec![AffineForm::from_interval(iv(x0, x0 + w), &mut al)];
        let out = guaranteed_step(&flow, &x, Interval::point(0.0), 0.1, &cfg, &mut al).unwrap();
        let h = out.h_used;
        // uncorrelated slack does not cancel in the cubic coefficients, so
        // the nodes carry all of their error as symbols, as in the engine
        let end: Vec<AffineForm> = out.x_next.iter().map(|f| f.absorb_slack(&mut al)).collect();
        let nodes = [x.clone(), end];
        let g = GPoly::build(&flow, &[0.0, h], &nodes, &out.hull, &mut al).unwrap();
        for (t, n) in [(0.0, &nodes[0]), (h, &nodes[1])] {
            let v = g.eval(Interval::point(t), &mut al).unwrap()[0].to_interval();
            prop_assert!(v.inflate(0.0, 1e-12).contains_interval(&n[0].to_interval()));
            prop_assert!(v.width() <= n[0].to_interval().width() + 1e-9);
        }
        // the remainder of x' = -x straddles zero only if f''' does
        let rc = g.remainder_coefficients()[0];
        let wide: Vec<Interval> = out.hull.iter().map(|b| b.inflate(grow, 0.0)).collect();
        let g2 = GPoly::build(&flow, &[0.0, h], &nodes, &wide, &mut al).unwrap();
        prop_assert!(g2.remainder_coefficients()[0].contains_interval(&rc));
        let t = Interval::point(tau * h);
        let narrow = g.eval(t, &mut al).unwrap()[0].to_interval();
        let broad = g2.eval(t, &mut al).unwrap()[0].to_interval();
        prop_assert!(broad.inflate(0.0, 1e-15).contains_interval(&narrow));
    }
}

#[test]
fn simultaneous_reset_swaps() {
    let r = Reset::new(vec![(0, Expr::var(1)), (1, Expr::var(0))]);
    assert_eq!(r.apply_f64(&[1.0, 2.0], 0.0), vec![2.0, 1.0]);
}

#[test]
fn bounce_times_lie_in_the_crossing_windows() {
    let ha = ball();
    let cfg = SimConfig { t_f: 4.0, ..SimConfig::default() };
    let fp = simulate(&ha, &cfg).unwrap();
    assert!(fp.complete);
    let windows: Vec<Interval> = (0..fp.branches.len()).flat_map(|b| fp.crossings(b)).collect();
    for k in 0..=20 {
        let y0 = 10.0 + 0.2 * k as f64 / 20.0;
        let first = (2.0 * y0 / 9.81).sqrt();
        assert!(windows.iter().any(|w| w.contains(first)), "y0 = {y0}: {first} not in {windows:?}");
        let second = first + 2.0 * 0.8 * 9.81 * first / 9.81;
        assert!(windows.iter().any(|w| w.contains(second)), "y0 = {y0}: second bounce {second} missed");
    }
}

#[test]
fn flowpipes_are_well_formed_and_reproducible() {
    let ha = ball();
    let cfg = SimConfig { t_f: 4.0, ..SimConfig::default() };
    let a = simulate(&ha, &cfg).unwrap();
    let b = simulate(&ha, &cfg).unwrap();
    assert_eq!(a, b);
    for br in &a.branches {
        for w in br.segments.windows(2) {
            assert!(w[0].t_hi <= w[1].t_hi);
        }
        for s in &br.segments {
            for (t, h) in s.tight.iter().zip(&s.hull) {
                assert!(h.contains_interval(t), "{:?} not in {:?}", t, h);
            }
            if let SegmentKind::Jump { .. } = s.kind {
                // tight is the reset state carried to the end of the crossing
                // window; its box may dip below the floor by at most what the
                // motion over that window allows
                let w = s.t_hi - s.t_lo;
                let speed = s.hull[1].mag() + 9.81 * w;
                assert!(s.tight[0].lo() >= -speed * w - 1e-12, "{:?} over a window of {w}", s.tight[0]);
            }
        }
    }
}
