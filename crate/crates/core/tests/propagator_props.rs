use nilheat::propagator::{
    assemble_hamiltonian, ground_energy, psi_eval, spectrum, spectrum_for_time, ThetaGrid,
};
use nilheat::QuarticParams;
use proptest::prelude::*;

fn decomposition(alpha: f64, beta: f64, tau: f64) -> nilheat::propagator::SpectralDecomposition {
    let p = QuarticParams::new(alpha, beta).unwrap();
    spectrum_for_time(&assemble_hamiltonian(&p, &ThetaGrid::default_for(&p)), tau).unwrap()
}

#[test]
fn pure_quartic_ground_energy() {
    let e0 = ground_energy(&QuarticParams::new(1.0, 0.0).unwrap());
    assert!((e0 - 1.0604).abs() < 1e-3, "{e0}");
    let p = QuarticParams::new(1.0, 0.0).unwrap();
    let dec = spectrum(&assemble_hamiltonian(&p, &ThetaGrid::new(8.0, 2048).unwrap()), 4).unwrap();
    assert!((dec.energies[0] - 1.0604).abs() < 1e-3);
}

#[test]
fn double_well_ground_energy_is_near_harmonic() {
    let e0 = ground_energy(&QuarticParams::new(1.0, -4.0).unwrap());
    assert!((e0 / 4.0 - 1.0).abs() < 0.3, "{e0}");
}

#[test]
fn ground_energy_grows_with_beta() {
    let e: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|&b| ground_energy(&QuarticParams::new(1.0, b).unwrap()))
        .collect();
    assert!(e.windows(2).all(|w| w[1] >= w[0]), "{e:?}");
}

#[test]
fn modes_alternate_parity() {
    let dec = decomposition(1.0, -1.0, 0.05);
    let n = dec.grid.len();
    for (k, mode) in dec.modes.iter().enumerate().take(10) {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let defect = (0..n).map(|j| (mode[j] - sign * mode[n - 1 - j]).abs()).fold(0.0, f64::max);
        assert!(defect <= 1e-8, "mode {k}: {defect}");
    }
}

#[test]
fn nonpositive_time_is_rejected() {
    let dec = decomposition(1.0, 0.0, 0.5);
    assert!(psi_eval(&dec, 0.0, 0.0, 0.0).is_err());
    assert!(psi_eval(&dec, -1.0, 0.0, 0.0).is_err());
    assert!(dec.kernel_matrix(0.0, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn kernel_is_symmetric_even_and_nonnegative(
        alpha in 0.2..2.0f64, beta in -2.0..2.0f64, tau in 0.1..1.0f64,
        th in -1.5..1.5f64, tb in -1.5..1.5f64
    ) {
        let dec = decomposition(alpha, beta, tau);
        let v = psi_eval(&dec, tau, th, tb).unwrap().value;
        let w = psi_eval(&dec, tau, tb, th).unwrap().value;
        let m = psi_eval(&dec, tau, -th, -tb).unwrap().value;
        let peak = psi_eval(&dec, tau, th, th).unwrap().value.max(psi_eval(&dec, tau, tb, tb).unwrap().value);
        prop_assert!((v - w).abs() <= 1e-12 * peak);
        prop_assert!((v - m).abs() <= 1e-10 * peak);
        prop_assert!(v >= -1e-8 * peak);
    }

    #[test]
    fn sign_flip_leaves_the_spectrum_unchanged(alpha in 0.2..2.0f64, beta in -2.0..2.0f64) {
        let a = decomposition(alpha, beta, 0.5);
        let b = decomposition(-alpha, -beta, 0.5);
        for (x, y) in a.energies.iter().zip(&b.energies) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }
}
