use std::collections::HashSet;

use nfdist::amplifier::{analytic_evm, apply_pa, PaModel};
use nfdist::channel::{array_response, LosChannel, PhaseModel, SphericalPoint, UserChannelParams};
use nfdist::geometry::ArrayGeometry;
use nfdist::waveform::Frame;
use nfdist::C64;
use proptest::prelude::*;

fn geometry() -> impl Strategy<Value = ArrayGeometry> {
    (1usize..16, 1usize..16, 0.02..0.2f64, 0.3..1.5f64, 0.3..1.5f64)
        .prop_map(|(my, mz, lambda, sy, sz)| ArrayGeometry::new(my, mz, sy * lambda, sz * lambda, lambda).unwrap())
}

fn complex() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| C64::new(re, im))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn element_position_is_a_grid_bijection(g in geometry()) {
        let mut seen = HashSet::new();
        for m in 0..g.num_elements() {
            let (ky, kz) = g.element_position(m).unwrap();
            let (iy, iz) = ((ky / g.d_y()).round(), (kz / g.d_z()).round());
            prop_assert!((ky - iy * g.d_y()).abs() < 1e-12 && (kz - iz * g.d_z()).abs() < 1e-12);
            prop_assert!(iy >= 0.0 && (iy as usize) < g.m_y() && iz >= 0.0 && (iz as usize) < g.m_z());
            prop_assert!(seen.insert((iy as usize, iz as usize)));
        }
        prop_assert_eq!(seen.len(), g.m_y() * g.m_z());
        prop_assert!(g.element_position(g.num_elements()).is_err());
    }

    #[test]
    fn near_field_starts_before_fraunhofer(g in geometry()) {
        let b = g.field_boundaries();
        if g.aperture() > g.wavelength() {
            prop_assert!(b.d_b < b.d_fa);
        }
    }

    #[test]
    fn response_norm_is_sqrt_m(
        g in geometry(),
        az in -80.0..80.0f64,
        el in -80.0..80.0f64,
        r in 1.0..200.0f64,
    ) {
        let p = SphericalPoint::from_degrees(az, el, Some(r)).unwrap();
        for model in [PhaseModel::Exact, PhaseModel::Fresnel] {
            let a = array_response(&g, &p, model).unwrap();
            let norm: f64 = a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            prop_assert!((norm - (g.num_elements() as f64).sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn channel_phase_slope_is_delay(
        az in -60.0..60.0f64,
        tau in 0.0..4.0f64,
        gain in complex(),
        nu in 0usize..64,
    ) {
        prop_assume!(gain.norm() > 1e-3);
        let g = ArrayGeometry::half_wavelength(4, 4, 0.1).unwrap();
        let user = UserChannelParams {
            position: SphericalPoint::from_degrees(az, 0.0, Some(10.0)).unwrap(),
            gain,
            delay: tau,
        };
        let ch = LosChannel::new(&[user], &g).unwrap();
        let (h0, h1) = (ch.matrix(nu), ch.matrix(nu + 1));
        let expected = C64::from_polar(1.0, -std::f64::consts::TAU * tau);
        for m in 0..g.num_elements() {
            prop_assert!((h1[(m, 0)] - h0[(m, 0)] * expected).norm() < 1e-9);
        }
        // linear in the gain
        let doubled = LosChannel::new(&[UserChannelParams { gain: gain * 2.0, ..user }], &g).unwrap();
        prop_assert!((doubled.matrix(nu) - h0 * C64::new(2.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn pa_commutes_with_phase_rotation(
        coeffs in prop::collection::vec(complex(), 6),
        samples in prop::collection::vec(complex(), 16),
        psi in 0.0..std::f64::consts::TAU,
    ) {
        // order 2, memory 1: terms p = 0, 1, 2 with two taps each
        let mut c = coeffs;
        c[0] += C64::new(1.5, 0.0);
        let model = PaModel::new(2, 1, c).unwrap();
        let r = C64::from_polar(1.0, psi);
        let x = Frame::from_antenna_major(2, 8, samples.clone()).unwrap();
        let xr = Frame::from_antenna_major(2, 8, samples.iter().map(|v| v * r).collect()).unwrap();
        let (y, yr) = (apply_pa(&model, &x).unwrap(), apply_pa(&model, &xr).unwrap());
        for (a, b) in y.data().iter().zip(yr.data()) {
            prop_assert!((a * r - b).norm() <= 1e-12 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn evm_grows_with_beta3(beta1 in 0.5..2.0f64, a in 0.0..0.08f64, b in 0.0..0.08f64) {
        prop_assume!((a - b).abs() > 1e-6);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let evm = |b3: f64| {
            let m = PaModel::third_order(C64::new(beta1, 0.0), C64::new(-b3 * beta1, 0.0)).unwrap();
            analytic_evm(&m, 1.0).unwrap().amplitude
        };
        prop_assert!(evm(lo) < evm(hi));
    }
}
