use coopfdtd::dynamics::*;
use coopfdtd::radiometry::AtomSpec;
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Lorentzian coupling `g² / (ω - ωc + iκ/2)` plus a flat background rate.
fn lossy_mode(freqs: &[f64], wc: f64, kappa: f64, g2: f64, background: f64) -> PairCoupling {
    let w = |om: f64| g2 / c(om - wc, kappa / 2.0) - c(0.0, background / 2.0);
    PairCoupling::from_samples(
        freqs.to_vec(),
        freqs.iter().map(|&om| -2.0 * w(om).im).collect(),
        freqs.iter().map(|&om| w(om).re).collect(),
        Branch::Retarded,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn markov_population_never_grows(
        g_ii in 1e-3f64..0.03,
        frac in -1.0f64..1.0,
        d_ii in -0.01f64..0.01,
        d_ij in -0.01f64..0.01,
    ) {
        let atom = AtomSpec::unit(1.0);
        let w = CouplingFunction::constant(0.5, 1.5, c(d_ii, -g_ii / 2.0), c(d_ij, -frac * g_ii / 2.0)).unwrap();
        let t: Vec<f64> = (0..120).map(|k| 5.0 * k as f64).collect();
        let tr = amplitudes((&atom, &atom), &w, &t).unwrap();
        let pop = tr.population();
        prop_assert!((pop[0] - 1.0).abs() < 1e-12 && tr.b[0].norm() < 1e-12);
        for p in pop.windows(2) {
            prop_assert!(p[1] <= p[0] + 1e-6, "{} -> {}", p[0], p[1]);
        }
        prop_assert!(pop.iter().all(|&p| p <= 1.0 + 1e-6));
    }

    #[test]
    fn poles_lie_in_lower_half_plane(
        g_ii in 1e-3f64..0.03,
        frac in -1.0f64..1.0,
        d_ij in -0.01f64..0.01,
    ) {
        let atom = AtomSpec::unit(1.0);
        let w = CouplingFunction::constant(0.5, 1.5, c(0.0, -g_ii / 2.0), c(d_ij, -frac * g_ii / 2.0)).unwrap();
        let poles = find_poles((&atom, &atom), &w, SearchBox::around((&atom, &atom), &w).unwrap()).unwrap();
        prop_assert_eq!(poles.poles.len(), 2);
        for p in &poles.poles {
            prop_assert!(p.im <= 1e-12);
            prop_assert!(p.residual <= ROOT_TOLERANCE);
        }
    }
}

#[test]
fn swapping_labels_swaps_roles() {
    let freqs: Vec<f64> = (0..=2000).map(|k| 0.8 + 2e-4 * k as f64).collect();
    let local = lossy_mode(&freqs, 1.0, 0.02, 4e-5, 1e-3);
    let cross = lossy_mode(&freqs, 1.0, 0.02, 3e-5, 0.0);
    let w = CouplingFunction::new(local.clone(), cross.clone(), cross, local).unwrap();
    let atom = AtomSpec::unit(1.0);
    let t: Vec<f64> = (0..40).map(|k| 20.0 * k as f64).collect();
    let fwd = amplitudes((&atom, &atom), &w, &t).unwrap();
    let rev = amplitudes((&atom, &atom), &w.swapped(), &t).unwrap();
    for k in 0..t.len() {
        assert!((fwd.a[k] - rev.a[k]).norm() < 1e-12 && (fwd.b[k] - rev.b[k]).norm() < 1e-12);
    }
    assert!(fwd.b.iter().any(|b| b.norm() > 0.1), "excitation should transfer");
}

#[test]
fn detuned_transfer_is_direction_independent() {
    // a symmetric coupling matrix gives G_ba = G_ab even for detuned atoms
    let freqs: Vec<f64> = (0..=2000).map(|k| 0.8 + 2e-4 * k as f64).collect();
    let local = lossy_mode(&freqs, 1.0, 0.05, 0.0, 2e-3);
    let cross = PairCoupling::constant(0.8, 1.2, c(3e-3, -5e-4)).unwrap();
    let w = CouplingFunction::new(local.clone(), cross.clone(), cross, local).unwrap();
    let (a, b) = (AtomSpec::unit(1.001), AtomSpec::unit(0.999));
    let t: Vec<f64> = (0..40).map(|k| 25.0 * k as f64).collect();
    let fwd = amplitudes((&a, &b), &w, &t).unwrap();
    let rev = amplitudes((&b, &a), &w.swapped(), &t).unwrap();
    for k in 0..t.len() {
        assert!((fwd.b[k] - rev.b[k]).norm() < 1e-9, "{k}");
        assert!((fwd.a[k] - rev.a[k]).norm() > 1e-4 || k == 0);
    }
}

#[test]
fn frequency_dependent_roots_depart_from_markov() {
    // a steep cross coupling near the atomic line shifts the roots away from
    // the constant-coupling estimate
    let freqs: Vec<f64> = (0..=4000).map(|k| 0.9 + 5e-5 * k as f64).collect();
    let local = lossy_mode(&freqs, 1.0, 0.004, 2e-6, 1e-4);
    let cross = lossy_mode(&freqs, 1.0, 0.004, 2e-6, 0.0);
    let w = CouplingFunction::new(local.clone(), cross.clone(), cross, local).unwrap();
    let atom = AtomSpec::unit(1.001);
    let bx = SearchBox::around((&atom, &atom), &w).unwrap();
    let poles = find_poles((&atom, &atom), &w, bx).unwrap();
    assert!(poles.poles.len() >= 2);
    let w_ii = w.aa.eval(1.001).unwrap();
    let w_ij = w.ab.eval(1.001).unwrap();
    let markov = markov_poles(1.001, -2.0 * w_ii.im, -2.0 * w_ij.im, w_ii.re, w_ij.re);
    let mut worst: f64 = 0.0;
    for p in &poles.poles {
        assert!(p.residual <= ROOT_TOLERANCE);
        let nearest = markov.roots().iter().map(|m| (m - p.z()).norm()).fold(f64::INFINITY, f64::min);
        worst = worst.max(nearest);
    }
    assert!(worst > 1e-5, "{worst}");
}
