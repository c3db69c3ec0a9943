use std::f64::consts::{PI, TAU};

use dcs_core::dynamics::{self, effective_flipflop_signal, IntegrationPolicy};
use dcs_core::linalg;
use dcs_core::protocols::{self, Drive, ProtocolSpec};
use dcs_core::scalar::{re, C};
use dcs_core::spin::{self, local};
use dcs_core::waveform::{self, DcsWaveform, PmWaveform, Waveform};
use dcs_core::{InitialStateKind, Nucleus, QuantumState, SpinSystem};
use nalgebra::DVector;

const MHZ: f64 = TAU * 1e6;
const KHZ: f64 = TAU * 1e3;

fn carbon() -> SpinSystem<f64> {
    SpinSystem::new(1.0, vec![Nucleus::of_species("13C", 13.42 * KHZ, 17.09 * KHZ).unwrap()])
}

fn dcs_spec(measured: &str) -> ProtocolSpec<f64> {
    ProtocolSpec::new(
        Drive::Dcs {
            omega_max: MHZ,
            tau_switch_fraction: 0.0,
            t_initial_fraction: -0.5,
        },
        InitialStateKind::Sensing,
        vec![measured.into()],
    )
    .unwrap()
}

/// Dip of the full-dynamics spectral response near the nuclear frequency.
fn full_resonance(sys: &SpinSystem<f64>) -> f64 {
    let wn = sys.nuclear_frequency(0);
    protocols::locate_dip(sys, &dcs_spec("sigma_z"), wn - 3.0 * KHZ, wn + 3.0 * KHZ, 0.5e-3, &IntegrationPolicy::default(), 1.0)
        .unwrap()
}

#[test]
fn full_resonance_sits_just_below_nuclear_frequency() {
    let sys = carbon();
    let shift = (full_resonance(&sys) - sys.nuclear_frequency(0)) / KHZ;
    assert!(shift < 0.0 && shift > -0.8, "{shift} kHz");
}

#[test]
fn magnus_oracle_tracks_full_dynamics() {
    let sys = carbon();
    let wn = full_resonance(&sys);
    let w = Waveform::Dcs(DcsWaveform::optimal(MHZ, wn).unwrap());
    let s0 = spin::initial_state(InitialStateKind::Sensing, &sys);
    let tr = dynamics::propagate(&sys, &w, &s0, 0.5e-3, &IntegrationPolicy::default(), 2.5e-6).unwrap();
    let worst = tr
        .times
        .iter()
        .zip(tr.series("sigma_z").unwrap())
        .map(|(t, v)| (v - effective_flipflop_signal(MHZ, wn, 13.42 * KHZ, *t)).abs())
        .fold(0.0, f64::max);
    assert!(worst < 0.02, "{worst}");
}

#[test]
fn dnp_polarisation_follows_sine_squared() {
    let sys = carbon();
    let wn = full_resonance(&sys);
    let times: Vec<f64> = (0..=40).map(|i| i as f64 * 1e-5).collect();
    let r = protocols::run_dcs_dnp(&sys, MHZ, wn, &times, &IntegrationPolicy::default()).unwrap();
    let c = dynamics::effective_coupling(MHZ, wn, 13.42 * KHZ);
    for (t, p) in times.iter().zip(r.column("polarization[1]").unwrap()) {
        assert!((p - (c * t).sin().powi(2)).abs() < 0.02, "{t}: {p}");
    }
    // electron and nucleus exchange one quantum
    for (s, p) in r.column("sigma_z").unwrap().iter().zip(r.column("polarization[1]").unwrap()) {
        assert!((1.0 - s - p).abs() < 0.02);
    }
}

#[test]
fn detuned_dnp_stays_small() {
    let sys = carbon();
    let nu = sys.nuclear_frequency(0) + 50.0 * KHZ;
    let times: Vec<f64> = (0..=20).map(|i| i as f64 * 5e-5).collect();
    let r = protocols::run_dcs_dnp(&sys, MHZ, nu, &times, &IntegrationPolicy::default()).unwrap();
    for p in r.column("polarization[1]").unwrap() {
        assert!(p.abs() < 0.05);
    }
}

#[test]
fn far_off_resonance_sensing_is_flat() {
    let sys = carbon();
    let wn = sys.nuclear_frequency(0);
    let grid = [wn - 150.0 * KHZ, wn + 110.0 * KHZ];
    let r = protocols::run_dcs_sensing(&sys, MHZ, &grid, 0.308e-3, &IntegrationPolicy::default()).unwrap();
    for v in r.column("sigma_z").unwrap() {
        assert!((v - 1.0).abs() < 0.02, "{v}");
    }
}

#[test]
fn start_offset_does_not_change_response() {
    let sys = carbon();
    let wn = sys.nuclear_frequency(0);
    let make = |frac: f64| ProtocolSpec {
        drive: Drive::Dcs {
            omega_max: MHZ,
            tau_switch_fraction: 0.0,
            t_initial_fraction: frac,
        },
        ..dcs_spec("sigma_z")
    };
    let grid = [wn - 1.0 * KHZ, wn, wn + 1.0 * KHZ];
    let p = IntegrationPolicy::default();
    let a = protocols::run_sweep(&sys, &make(0.0), "nu", &grid, 0.308e-3, &p).unwrap();
    let b = protocols::run_sweep(&sys, &make(-0.5), "nu", &grid, 0.308e-3, &p).unwrap();
    for (x, y) in a.columns[0].1.iter().zip(&b.columns[0].1) {
        assert!((x - y).abs() < 0.01 * y.abs(), "{x} {y}");
    }
}

#[test]
fn trace_drift_over_a_million_steps() {
    let sys = carbon();
    let w = Waveform::Dcs(DcsWaveform::optimal(MHZ, 10.7135 * MHZ).unwrap());
    let s0 = spin::initial_state(InitialStateKind::Sensing, &sys);
    let policy = IntegrationPolicy {
        power_periods: false,
        ..IntegrationPolicy::default()
    };
    // two flat slices per period: 5e5 periods is 1e6 applied propagators
    let tau = w.period().unwrap();
    let tr = dynamics::evolve(&sys, &w, &s0, &[5e5 * tau], &[], &policy).unwrap();
    assert!((tr.final_state.trace() - 1.0).abs() < 1e-9);
}

fn toy_rate(omega_n: f64, ratio: f64, a: f64) -> (f64, f64) {
    let w = DcsWaveform::optimal(ratio * omega_n, omega_n).unwrap();
    let wf = Waveform::Dcs(w);
    let g = waveform::coupling_factor(&wf, omega_n, 100.0 * w.period()).unwrap().magnitude();
    let predicted = g * a.abs();
    let t_zero = PI / (4.0 * predicted);
    let times: Vec<f64> = (0..=600).map(|i| 1.5 * t_zero * i as f64 / 600.0).collect();
    let psi = DVector::from_vec(vec![re(0.0), re(1.0), re(0.0), re(0.0)]);
    let tr = dynamics::two_spin_toy_propagate(&wf, omega_n, a, &QuantumState::Pure(psi), &times, &IntegrationPolicy::default())
        .unwrap();
    let sz = tr.series("S_z").unwrap();
    let k = sz.iter().position(|v| *v <= 0.0).expect("zero crossing");
    let (t0, t1, v0, v1) = (times[k - 1], times[k], sz[k - 1], sz[k]);
    let crossing = t0 + (t1 - t0) * v0 / (v0 - v1);
    (PI / (4.0 * crossing), predicted)
}

#[test]
fn toy_transfer_rate_matches_coupling_factor() {
    let wn = 1.0e8;
    for a in [1e-3 * wn, 3e-4 * wn, -5e-4 * wn] {
        let (measured, predicted) = toy_rate(wn, 0.3, a);
        assert!((measured / predicted - 1.0).abs() < 0.05, "{measured} vs {predicted}");
    }
}

/// PM as a real dressed splitting against the phase-toggled drive
/// `Ω₀ + e^{iθ′}Ω₁` on the bare qubit, with the complex amplitude mapped
/// onto the (σ_z, σ_y) plane and each half period exponentiated directly.
#[test]
fn pm_matches_two_tone_bare_qubit() {
    let (om0, om1, period) = (0.5 * MHZ, 0.3 * MHZ, 97e-9);
    let sys = SpinSystem::bare();
    let wf = Waveform::Pm(PmWaveform::new(om0, om1, period).unwrap());
    let h = 1.0 / 2f64.sqrt();
    let psi = DVector::from_vec(vec![re(h), C::new(0.0, h)]);
    let periods = 37;
    let obs = [spin::sigma_x(&sys), spin::sigma_z(&sys)];
    let tr = dynamics::evolve(&sys, &wf, &QuantumState::Pure(psi.clone()), &[periods as f64 * period], &obs, &IntegrationPolicy::default())
        .unwrap();

    let half = |theta: f64| {
        let amp = C::new(om0, 0.0) + C::new(theta.cos(), theta.sin()) * om1;
        let hm = local::sigma_z::<f64>() * re(amp.re / 2.0) + local::sigma_y::<f64>() * re(amp.im / 2.0);
        linalg::expm_hermitian(&hm, period / 2.0)
    };
    let u = half(PI) * half(0.0);
    let mut direct = QuantumState::Pure(psi);
    for _ in 0..periods {
        direct.evolve(&u);
    }
    for (k, o) in obs.iter().enumerate() {
        let v = spin::expectation(&direct, o).unwrap();
        assert!((v - tr.observables[k].1[0]).abs() < 1e-10);
    }
}
