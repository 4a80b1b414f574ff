//! Time-dependent checks against exact solutions.

use sgn_core::grid::{derivative, norms, periodic_shift};
use sgn_core::integrators::{
    char_roots, fitted_step, in_stability_region, Bootstrap, IntegratorKind, MultistepTable, PcgSettings, Stepper,
};
use sgn_core::model::conserved;
use sgn_core::scenarios::{manufactured, solitary_scenario, solitary_wave, ScenarioSpec, SolitaryWaveParams};
use sgn_core::{Field, PeriodicGrid, Vector};

fn rel_inf(a: &Field, b: &Field) -> f64 {
    norms(&(a - b)).inf_norm / norms(b).inf_norm.max(1e-300)
}

/// Fourth-order central difference in time of the exact (η, U).
fn exact_time_derivative(sc: &ScenarioSpec<f64>, t: f64, h: f64) -> (Field, Vector) {
    let at = |s: f64| sc.exact_at(t + s * h).unwrap().unwrap();
    let (m2, m1, p1, p2) = (at(-2.0), at(-1.0), at(1.0), at(2.0));
    let w = [1.0 / 12.0, -2.0 / 3.0, 2.0 / 3.0, -1.0 / 12.0];
    let mut eta = m2.eta.scale(w[0] / h);
    let mut mom = m2.momentum.scale(w[0] / h);
    for (c, s) in w[1..].iter().zip([&m1, &p1, &p2]) {
        eta.axpy(c / h, &s.eta);
        mom.axpy(c / h, &s.momentum);
    }
    (eta, mom)
}

#[test]
fn manufactured_forcing_reproduces_the_exact_time_derivative() {
    let g = PeriodicGrid::<f64>::new_1d(64, 1.0).unwrap();
    let sc = manufactured(&g).unwrap();
    let model = sc.model();
    for t in [0.0, 0.137, 0.5] {
        let state = sc.exact_at(t).unwrap().unwrap();
        let (d_eta, d_mom) = model.rhs(&state).unwrap();
        let (fd_eta, fd_mom) = exact_time_derivative(&sc, t, 1e-3);
        assert!(rel_inf(&d_eta, &fd_eta) < 1e-8, "η at t={t}: {}", rel_inf(&d_eta, &fd_eta));
        let e = rel_inf(d_mom.component(0), fd_mom.component(0));
        assert!(e < 1e-8, "U at t={t}: {e}");
    }
}

#[test]
fn solitary_wave_right_hand_side_is_pure_translation() {
    let g = PeriodicGrid::<f64>::new_1d(256, 100.0).unwrap();
    let p = SolitaryWaveParams::new(0.2, 1.0).unwrap().with_xi0(-50.0);
    let sc = solitary_scenario(p, &g, 1.0).unwrap();
    let s = &sc.initial;
    let (d_eta, d_mom) = sc.model().rhs(s).unwrap();
    let c = p.c();
    let tr_eta = derivative(&s.eta, 0).unwrap().scale(-c);
    let tr_mom = derivative(s.momentum.component(0), 0).unwrap().scale(-c);
    assert!(rel_inf(&d_eta, &tr_eta) < 1e-8);
    assert!(rel_inf(d_mom.component(0), &tr_mom) < 1e-8);
}

#[test]
fn solitary_wave_mass_matches_closed_form() {
    let p = SolitaryWaveParams::new(0.2, 1.0).unwrap().with_xi0(-60.0);
    let g = PeriodicGrid::<f64>::new_1d(512, 120.0).unwrap();
    let s = solitary_wave(&p, &g, 0.0).unwrap();
    let mass = conserved(&s, &sgn_core::operators::Bathymetry::flat(&g, 1.0).unwrap()).mass;
    // ∫ a sech²(γξ) dξ = 2a/γ
    assert!((mass - 2.0 * p.a / p.gamma()).abs() < 1e-12, "{mass}");
}

#[test]
fn conserved_quantities_hold_and_energy_drift_shrinks() {
    let g = PeriodicGrid::<f64>::new_1d(128, 100.0).unwrap();
    let p = SolitaryWaveParams::new(0.2, 1.0).unwrap().with_xi0(-50.0);
    let sc = solitary_scenario(p, &g, 2.0).unwrap();
    let c0 = sc.model().conserved(&sc.initial);
    let mut drift = Vec::new();
    for dt in [0.2, 0.1] {
        let mut st =
            Stepper::new(IntegratorKind::Ab2, sc.model(), sc.initial.clone(), dt, PcgSettings::default()).unwrap();
        st.advance_to(2.0).unwrap();
        let c = sc.model().conserved(st.state());
        assert!((c.mass - c0.mass).abs() < 1e-10);
        assert!((c.momentum[0] - c0.momentum[0]).abs() < 1e-10);
        drift.push((c.energy - c0.energy).abs());
    }
    assert!((drift[0] / drift[1]).log2() > 1.8, "{drift:?}");
}

#[test]
fn solitary_wave_travels_at_its_speed() {
    let g = PeriodicGrid::<f64>::new_1d(256, 100.0).unwrap();
    let p = SolitaryWaveParams::new(0.2, 1.0).unwrap().with_xi0(-30.0);
    let sc = solitary_scenario(p, &g, 10.0).unwrap();
    let (_, dt) = fitted_step(10.0, 0.2).unwrap();
    let mut st = Stepper::new(IntegratorKind::Rk4, sc.model(), sc.initial.clone(), dt, PcgSettings::default()).unwrap();
    st.advance_to(10.0).unwrap();
    let shift = periodic_shift(&sc.initial.eta, &st.state().eta).unwrap();
    assert!((shift / 10.0 / p.c() - 1.0).abs() < 1e-4, "{shift}");
}

#[test]
fn short_ladders_show_design_orders() {
    let g = PeriodicGrid::<f64>::new_1d(64, 1.0).unwrap();
    let sc = manufactured(&g).unwrap();
    let tf = 0.25;
    let exact = sc.exact_at(tf).unwrap().unwrap();
    for (kind, c0) in [(IntegratorKind::Ab3, 0.2), (IntegratorKind::Sbdf2, 0.05)] {
        let errs: Vec<f64> = (0..4)
            .map(|l| {
                let (_, dt) = fitted_step(tf, c0 / 64.0 / 2f64.powi(l)).unwrap();
                let mut st = Stepper::new(kind, sc.model(), sc.initial.clone(), dt, PcgSettings::default()).unwrap();
                st.bootstrap(&Bootstrap::Exact(sc.exact.clone().unwrap())).unwrap();
                st.advance_to(tf).unwrap();
                norms(&(&st.state().eta - &exact.eta)).inf_norm
            })
            .collect();
        let order = kind.order() as f64;
        // The first halving can still be pre-asymptotic at this resolution.
        for w in errs[1..].windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!((rate - order).abs() < 0.3, "{kind}: {errs:?}");
        }
    }
}

#[test]
fn sbdf2_roots_stay_inside_the_unit_disk() {
    let table = MultistepTable::sbdf2();
    for i in 0..200 {
        let lambda = 10f64.powf(-4.0 + 4.0 * (i as f64 + 0.5) / 200.0);
        assert!(in_stability_region(lambda, &table).unwrap(), "λ = {lambda}");
    }
    let mut roots = char_roots(0.5, &table).unwrap();
    roots.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
    assert!((roots[0].re - 0.5).abs() < 1e-12 && (roots[0].im + 0.5).abs() < 1e-12);
    assert!((roots[1].re - 0.5).abs() < 1e-12 && (roots[1].im - 0.5).abs() < 1e-12);
    assert!(!in_stability_region(2.5, &table).unwrap());
}
