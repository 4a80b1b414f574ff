use std::f64::consts::PI;

use sgn_core::grid::norms;
use sgn_core::integrators::{fitted_step, IntegratorKind, PcgSettings, Stepper};
use sgn_core::scenarios::{shelf_1d, ShelfParams};
use sgn_core::PeriodicGrid;

const L: f64 = 80.0 * PI;
const N: usize = 1024;

/// Runs to each time in `times` and returns the position and value of the
/// largest elevation seaward of the shelf.
fn reflected_crests(params: ShelfParams<f64>, times: &[f64]) -> Vec<(f64, f64)> {
    let g = PeriodicGrid::<f64>::new_1d(N, L).unwrap();
    let sc = shelf_1d(params, &g).unwrap();
    let (_, dt) = fitted_step(25.0, 0.5 * L / N as f64).unwrap();
    let mut st = Stepper::new(IntegratorKind::Rk4, sc.model(), sc.initial.clone(), dt, PcgSettings::default()).unwrap();
    let cutoff = params.shelf_start - 5.0;
    times
        .iter()
        .map(|&t| {
            st.advance_to(t).unwrap();
            let z = st.state().zeta(&sc.bathy);
            (0..N)
                .map(|i| (g.coords(i)[0], z.values()[i]))
                .filter(|(x, _)| *x < cutoff)
                .fold((f64::NAN, f64::NEG_INFINITY), |best, p| if p.1 > best.1 { p } else { best })
        })
        .collect()
}

#[test]
fn zero_height_shelf_is_plain_translation() {
    let g = PeriodicGrid::<f64>::new_1d(512, L).unwrap();
    let sc = shelf_1d(ShelfParams::new(0.0, L), &g).unwrap();
    let exact = sc.exact.clone().expect("flat bottom has an exact solution");
    let (_, dt) = fitted_step(10.0, 0.1).unwrap();
    let mut st = Stepper::new(IntegratorKind::Rk4, sc.model(), sc.initial.clone(), dt, PcgSettings::default()).unwrap();
    st.advance_to(10.0).unwrap();
    let err = norms(&(&st.state().eta - &exact(10.0).unwrap().eta)).inf_norm;
    assert!(err < 1e-6, "{err:e}");
}

#[test]
fn default_shelf_sends_back_a_small_leftward_crest() {
    let p = ShelfParams::new(0.5, L);
    let a = p.amplitude;
    let c = reflected_crests(p, &[75.0, 125.0]);
    let (x75, z75) = c[0];
    let (x125, z125) = c[1];
    // An abrupt step reflects (1 - sqrt(h1/h0)) / (1 + sqrt(h1/h0)) of a long wave;
    // a smooth ramp reflects less.
    let r = 0.5f64.sqrt();
    let step = (1.0 - r) / (1.0 + r);
    for z in [z75, z125] {
        assert!(z > 0.05 * a && z < step * a, "crest {z} vs a = {a}");
    }
    assert!(x125 < x75 - 30.0, "crest at {x75} then {x125}");
}

#[test]
fn wide_ramp_reflects_under_a_tenth_of_the_amplitude() {
    let mut p = ShelfParams::new(0.5, L);
    p.mollifier_width = L / 20.0;
    let a = p.amplitude;
    let c = reflected_crests(p, &[75.0, 125.0]);
    let (x75, z75) = c[0];
    let (x125, z125) = c[1];
    assert!(z125 > 0.0 && z125 < 0.1 * a, "crest {z125} vs a = {a}");
    assert!(z75 > 0.0 && x125 < x75, "crest at {x75} then {x125}");
}
