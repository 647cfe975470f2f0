use coopfdtd::fdtd::*;
use coopfdtd::radiometry::*;
use coopfdtd::scene::*;

struct Spectra {
    p_a: PowerSpectrum,
    p_b: PowerSpectrum,
    p_ab: PowerSpectrum,
}

fn measure(scene: &Scene, grid: &GridParams, w: &SourceWaveform, f: &[f64]) -> Spectra {
    let a = scene.with_only(DipoleLabel::A).unwrap();
    let b = scene.with_only(DipoleLabel::B).unwrap();
    let recs = run_common_length::<f64>(&[scene, &a, &b], grid, w, f, StopCriterion::default(), false).unwrap();
    assert!(recs.iter().all(|r| r.metadata.steps == recs[0].metadata.steps));
    Spectra {
        p_a: emission_power(&recs[1], DipoleLabel::A).unwrap(),
        p_b: emission_power(&recs[2], DipoleLabel::B).unwrap(),
        p_ab: total_power(&recs[0]).unwrap(),
    }
}

fn vacuum_pair(pa: Vec3, pb: Vec3, axis: usize) -> Scene {
    let scene = build_vacuum([1.2; 3]).unwrap();
    place_dipoles(
        &scene,
        &[
            DipoleSpec::along_axis(DipoleLabel::A, pa, axis),
            DipoleSpec::along_axis(DipoleLabel::B, pb, axis),
        ],
    )
    .unwrap()
}

fn gamma_of(s: &Spectra, reference: &PowerSpectrum) -> GammaSpectrum {
    let co = cooperative_power(&s.p_ab, &s.p_a, &s.p_b).unwrap();
    let e = eta(&co, reference).unwrap();
    gamma_ij(&e, (&AtomSpec::unit(1.0), &AtomSpec::unit(1.0)))
}

fn grid() -> (GridParams, SourceWaveform, Vec<f64>) {
    (
        GridParams::with_resolution(10),
        SourceWaveform::new(1.0, 0.5),
        frequency_grid(0.7, 1.3, 13).unwrap(),
    )
}

#[test]
fn label_swap_leaves_cross_rate_unchanged() {
    let (g, w, f) = grid();
    let (p1, p2) = ([0.0, 0.0, -0.15], [0.0, 0.1, 0.2]);
    let fwd = measure(&vacuum_pair(p1, p2, 0), &g, &w, &f);
    let rev = measure(&vacuum_pair(p2, p1, 0), &g, &w, &f);
    let ga = gamma_of(&fwd, &fwd.p_a);
    let gb = gamma_of(&rev, &fwd.p_a);
    for (x, y) in ga.gamma.iter().zip(&gb.gamma) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300), "{x} {y}");
    }
}

#[test]
fn drive_amplitude_cancels() {
    let (g, w, f) = grid();
    let scene = vacuum_pair([0.0, 0.0, -0.1], [0.0, 0.0, 0.2], 0);
    let base = measure(&scene, &g, &w, &f);
    let loud = SourceWaveform { amplitude: 3.7, ..w };
    let scaled = measure(&scene, &g, &loud, &f);
    let e1 = eta(&cooperative_power(&base.p_ab, &base.p_a, &base.p_b).unwrap(), &base.p_a).unwrap();
    let e2 = eta(&cooperative_power(&scaled.p_ab, &scaled.p_a, &scaled.p_b).unwrap(), &scaled.p_a).unwrap();
    for (x, y) in e1.eta.iter().zip(&e2.eta) {
        assert!((x - y).abs() <= 1e-12 * x.abs(), "{x} {y}");
    }
    let g1 = gamma_local(&base.p_b, &base.p_a, &AtomSpec::unit(1.0), DipoleLabel::B).unwrap();
    let g2 = gamma_local(&scaled.p_b, &scaled.p_a, &AtomSpec::unit(1.0), DipoleLabel::B).unwrap();
    for (x, y) in g1.gamma.iter().zip(&g2.gamma) {
        assert!((x - y).abs() <= 1e-12 * x.abs(), "{x} {y}");
    }
}

#[test]
fn cross_rate_bounded_by_local_rates() {
    let (g, w, f) = grid();
    let atom = AtomSpec::unit(1.0);
    let vac = build_vacuum([1.2; 3]).unwrap();
    let vac = place_dipoles(&vac, &[DipoleSpec::along_axis(DipoleLabel::A, [0.0; 3], 0)]).unwrap();
    let reference = emission_power(&run::<f64>(&vac, &g, &w, &f, StopCriterion::default()).unwrap(), DipoleLabel::A).unwrap();
    // plates break the symmetry between the two sites
    let cavity = build_planar_cavity(0.7, [1.6, 1.6]).unwrap();
    let cavity = place_dipoles(
        &cavity,
        &[
            DipoleSpec::along_axis(DipoleLabel::A, [-0.1, 0.0, 0.2], 0),
            DipoleSpec::along_axis(DipoleLabel::B, [0.2, 0.1, 0.4], 0),
        ],
    )
    .unwrap();
    for scene in [vacuum_pair([0.0, 0.0, -0.1], [0.0, 0.0, 0.1], 0), cavity] {
        let s = measure(&scene, &g, &w, &f);
        let gij = gamma_of(&s, &reference);
        let gaa = gamma_local(&s.p_a, &reference, &atom, DipoleLabel::A).unwrap();
        let gbb = gamma_local(&s.p_b, &reference, &atom, DipoleLabel::B).unwrap();
        for k in 0..f.len() {
            let bound = (gaa.gamma[k].max(0.0) * gbb.gamma[k].max(0.0)).sqrt();
            // absolute slack of 1% of the vacuum rate covers sites whose
            // local rate is zero up to discretization noise
            let slack = 0.01 * bound.max(atom.vacuum_rate(f[k]));
            assert!(gij.gamma[k].abs() <= bound + slack, "f={} {} {}", f[k], gij.gamma[k], bound);
        }
    }
}
