//! Experiment families built on the waveform and propagation layers: DCS
//! sensing and DNP, phase modulation (PM) and pulsed TOP-DNP.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::dynamics::{self, IntegrationPolicy, Trajectory};
use crate::error::{DcsError, Result};
use crate::linalg;
use crate::scalar::{re, Real};
use crate::spin::{self, local, InitialStateKind, Observable, QuantumState, SpinSystem};
use crate::waveform::{optimal_dcs, DcsWaveform, PmWaveform, Waveform};

/// Pulsed drive of strength `Ω_p` for `τ_p`, then silence for `d`, with a
/// constant microwave detuning `Δ` throughout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseTrain<T: Real> {
    pub rabi: T,
    pub pulse_len: T,
    pub delay: T,
    pub detuning: T,
}

impl<T: Real> PulseTrain<T> {
    pub fn new(rabi: T, pulse_len: T, delay: T, detuning: T) -> Result<Self> {
        if !(pulse_len > T::zero() && delay > T::zero()) {
            return Err(DcsError::InvalidParameter("pulse length and delay must be positive".into()));
        }
        if !(rabi.is_finite() && detuning.is_finite()) {
            return Err(DcsError::InvalidParameter("non-finite pulse-train parameters".into()));
        }
        Ok(Self {
            rabi,
            pulse_len,
            delay,
            detuning,
        })
    }

    pub fn period(&self) -> T {
        self.pulse_len + self.delay
    }

    /// `ω_m = 2π/(τ_p + d)`
    pub fn modulation_frequency(&self) -> T {
        T::two_pi() / self.period()
    }
}

/// Rotation angle `β ∈ [0, π]` of the electron-only period propagator
/// (pulse then delay) divided by the period.
pub fn effective_field_topdnp<T: Real>(rabi: T, detuning: T, pulse_len: T, delay: T) -> T {
    let half = T::lit(0.5);
    let sz = local::sigma_z::<T>();
    let sx = local::sigma_x::<T>();
    let h_pulse = &sz * re(rabi * half) + &sx * re(detuning * half);
    let h_delay = &sx * re(detuning * half);
    let u = linalg::expm_hermitian(&h_delay, delay) * linalg::expm_hermitian(&h_pulse, pulse_len);
    let tr = linalg::trace(&u);
    let c = (crate::scalar::modulus(tr) * half).min(T::one());
    T::lit(2.0) * c.acos() / (pulse_len + delay)
}

/// Detuning `Δ ≥ 0` solving `ω_m + ω_eff(Δ) = target`, taking the first
/// sign change of a scan over `[0, max_detuning]` and refining it by
/// bisection.
pub fn solve_topdnp_detuning<T: Real>(rabi: T, pulse_len: T, delay: T, target: T, max_detuning: T) -> Result<T> {
    let wm = T::two_pi() / (pulse_len + delay);
    let f = |d: T| wm + effective_field_topdnp(rabi, d, pulse_len, delay) - target;
    let steps = 2000;
    let h = max_detuning / T::lit(steps as f64);
    let mut a = T::zero();
    let mut fa = f(a);
    if fa == T::zero() {
        return Ok(a);
    }
    for i in 1..=steps {
        let b = h * T::lit(i as f64);
        let fb = f(b);
        if fa * fb <= T::zero() {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            for _ in 0..200 {
                let mid = (lo + hi) * T::lit(0.5);
                let fm = f(mid);
                if flo * fm <= T::zero() {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
                if hi - lo <= T::default_epsilon() * hi.abs().max(T::one()) {
                    break;
                }
            }
            return Ok((lo + hi) * T::lit(0.5));
        }
        a = b;
        fa = fb;
    }
    Err(DcsError::Bracketing(format!(
        "omega_m + omega_eff never reaches {} rad/s for detuning up to {} rad/s",
        target, max_detuning
    )))
}

/// Drive family and its fixed parameters; the swept tuning (ν or Δ) is
/// supplied when the waveform is built.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Drive<T: Real> {
    Constant {
        omega_e: T,
    },
    /// Optimal DCS for the tuning ν. The switching time is a fraction of τ₋
    /// and the start of the positive segment a fraction of τ₊.
    Dcs {
        omega_max: T,
        tau_switch_fraction: T,
        t_initial_fraction: T,
    },
    /// PM with period `2π/(ν − Ω₀)` for the tuning ν.
    Pm {
        omega0: T,
        omega1: T,
    },
    /// Pulse train with detuning Δ given by the tuning.
    Topdnp {
        rabi: T,
        pulse_len: T,
        delay: T,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolSpec<T: Real> {
    pub drive: Drive<T>,
    pub initial_state: InitialStateKind,
    /// Observable names understood by [`resolve_observable`].
    pub measured: Vec<String>,
    pub amplitude_error: T,
}

impl<T: Real> ProtocolSpec<T> {
    pub fn new(drive: Drive<T>, initial_state: InitialStateKind, measured: Vec<String>) -> Result<Self> {
        let spec = Self {
            drive,
            initial_state,
            measured,
            amplitude_error: T::zero(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude_error > -T::one()) {
            return Err(DcsError::InvalidParameter("amplitude error must exceed -1".into()));
        }
        if self.measured.is_empty() {
            return Err(DcsError::InvalidParameter("no observables requested".into()));
        }
        let bad = |m: &str| Err(DcsError::InvalidParameter(m.into()));
        match self.drive {
            Drive::Constant { omega_e } if !omega_e.is_finite() => bad("constant drive must be finite"),
            Drive::Dcs {
                omega_max,
                tau_switch_fraction,
                t_initial_fraction,
            } => {
                if !(omega_max > T::zero()) {
                    bad("DCS amplitude must be positive")
                } else if !(tau_switch_fraction >= T::zero() && tau_switch_fraction < T::one()) {
                    bad("DCS switching fraction must lie in [0, 1)")
                } else if !t_initial_fraction.is_finite() {
                    bad("DCS start offset must be finite")
                } else {
                    Ok(())
                }
            }
            Drive::Pm { omega0, omega1 } if !(omega0 >= T::zero() && omega1 >= T::zero()) => {
                bad("PM amplitudes must be non-negative")
            }
            Drive::Topdnp {
                rabi,
                pulse_len,
                delay,
            } => PulseTrain::new(rabi, pulse_len, delay, T::zero()).map(|_| ()),
            _ => Ok(()),
        }
    }

    /// Nominal waveform (no amplitude error) for the given tuning.
    pub fn nominal_waveform(&self, tuning: T) -> Result<Waveform<T>> {
        Ok(match self.drive {
            Drive::Constant { omega_e } => Waveform::Constant { omega_e },
            Drive::Dcs {
                omega_max,
                tau_switch_fraction,
                t_initial_fraction,
            } => {
                let (tp, tm) = optimal_dcs(omega_max, tuning)?;
                Waveform::Dcs(DcsWaveform::new(
                    omega_max,
                    tp,
                    tm,
                    tau_switch_fraction * tm,
                    t_initial_fraction * tp,
                )?)
            }
            Drive::Pm { omega0, omega1 } => {
                if !(tuning > omega0) {
                    return Err(DcsError::HartmannHahnRegime {
                        nu: tuning.to_f64_lossy(),
                        omega: omega0.to_f64_lossy(),
                    });
                }
                Waveform::Pm(PmWaveform::new(omega0, omega1, T::two_pi() / (tuning - omega0))?)
            }
            Drive::Topdnp {
                rabi,
                pulse_len,
                delay,
            } => Waveform::PulseTrain(PulseTrain::new(rabi, pulse_len, delay, tuning)?),
        })
    }

    /// Waveform actually applied: nominal timing, amplitudes scaled by `1 + δ`.
    pub fn waveform(&self, tuning: T) -> Result<Waveform<T>> {
        Ok(self
            .nominal_waveform(tuning)?
            .scale_amplitude(T::one() + self.amplitude_error))
    }

    /// Tuning that places the protocol's resonance at `frequency`: ν itself
    /// for DCS and PM, the detuning solving `ω_m + ω_eff = frequency` for
    /// TOP-DNP.
    pub fn tuning_for_frequency(&self, frequency: T) -> Result<T> {
        match self.drive {
            Drive::Topdnp {
                rabi,
                pulse_len,
                delay,
            } => {
                let wm = T::two_pi() / (pulse_len + delay);
                solve_topdnp_detuning(rabi, pulse_len, delay, frequency, T::lit(2.0) * wm + rabi.abs())
            }
            _ => Ok(frequency),
        }
    }
}

/// Same protocol with every drive amplitude scaled by a further `1 + δ`.
pub fn apply_amplitude_error<T: Real>(spec: &ProtocolSpec<T>, delta: T) -> Result<ProtocolSpec<T>> {
    let combined = (T::one() + spec.amplitude_error) * (T::one() + delta) - T::one();
    let out = ProtocolSpec {
        amplitude_error: combined,
        ..spec.clone()
    };
    out.validate()?;
    Ok(out)
}

/// Maps `sigma_z`, `sigma_x`, `I_z[j]`, `I_x[j]` and `polarization[j]`
/// (= 2⟨I_z[j]⟩, 1-based `j`) to operators on `system`.
pub fn resolve_observable<T: Real>(system: &SpinSystem<T>, name: &str) -> Result<Observable<T>> {
    let indexed = |prefix: &str| -> Option<usize> {
        name.strip_prefix(prefix)?
            .strip_suffix(']')?
            .parse::<usize>()
            .ok()
            .filter(|j| *j >= 1)
    };
    if name == "sigma_z" {
        return Ok(spin::sigma_z(system));
    }
    if name == "sigma_x" {
        return Ok(spin::sigma_x(system));
    }
    if let Some(j) = indexed("I_z[") {
        return spin::nuclear_iz(system, j - 1);
    }
    if let Some(j) = indexed("I_x[") {
        return spin::nuclear_ix(system, j - 1);
    }
    if let Some(j) = indexed("polarization[") {
        let iz = spin::nuclear_iz(system, j - 1)?;
        return Ok(Observable {
            name: name.to_string(),
            matrix: iz.matrix * re(T::lit(2.0)),
        });
    }
    Err(DcsError::InvalidParameter(format!("unknown observable '{name}'")))
}

/// Swept parameter values with one column per measured observable.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult<T: Real> {
    pub axis: String,
    pub values: Vec<T>,
    pub columns: Vec<(String, Vec<T>)>,
}

impl<T: Real> SweepResult<T> {
    pub fn column(&self, name: &str) -> Option<&[T]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    fn from_trajectory(axis: &str, tr: Trajectory<T>) -> Self {
        Self {
            axis: axis.to_string(),
            values: tr.times,
            columns: tr.observables,
        }
    }
}

/// Optional electron re-initialisation during a time trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElectronReset<T: Real> {
    pub interval: T,
}

fn observables_of<T: Real>(system: &SpinSystem<T>, spec: &ProtocolSpec<T>) -> Result<Vec<Observable<T>>> {
    spec.measured.iter().map(|m| resolve_observable(system, m)).collect()
}

/// One evolution per tuning value (in parallel), recording the measured
/// observables at `total_time`. Rows keep the order of `tunings`.
pub fn run_sweep<T: Real>(
    system: &SpinSystem<T>,
    spec: &ProtocolSpec<T>,
    axis: &str,
    tunings: &[T],
    total_time: T,
    policy: &IntegrationPolicy<T>,
) -> Result<SweepResult<T>> {
    let observables = observables_of(system, spec)?;
    let state0 = spin::initial_state(spec.initial_state, system);
    let rows: Vec<Vec<T>> = tunings
        .par_iter()
        .map(|&tuning| {
            let w = spec.waveform(tuning)?;
            let tr = dynamics::evolve(system, &w, &state0, &[total_time], &observables, policy)?;
            Ok(tr.observables.into_iter().map(|(_, v)| v[0]).collect())
        })
        .collect::<Result<_>>()?;
    let columns = observables
        .iter()
        .enumerate()
        .map(|(k, o)| (o.name.clone(), rows.iter().map(|r| r[k]).collect()))
        .collect();
    Ok(SweepResult {
        axis: axis.to_string(),
        values: tunings.to_vec(),
        columns,
    })
}

/// A single continuous evolution at fixed tuning sampled at `times`.
pub fn run_time_trace<T: Real>(
    system: &SpinSystem<T>,
    spec: &ProtocolSpec<T>,
    tuning: T,
    times: &[T],
    policy: &IntegrationPolicy<T>,
    reset: Option<ElectronReset<T>>,
) -> Result<SweepResult<T>> {
    let observables = observables_of(system, spec)?;
    let state0 = spin::initial_state(spec.initial_state, system);
    let w = spec.waveform(tuning)?;
    let tr = match reset {
        None => dynamics::evolve(system, &w, &state0, times, &observables, policy)?,
        Some(r) => evolve_with_resets(system, &w, spec.initial_state, times, &observables, policy, r.interval)?,
    };
    Ok(SweepResult::from_trajectory("time", tr))
}

/// `ρ → |e⟩⟨e| ⊗ Tr_e ρ` with the electron in tensor slot 0.
pub fn reset_electron<T: Real>(state: &QuantumState<T>, kind: InitialStateKind) -> QuantumState<T> {
    let rho = state.to_density();
    let d = rho.nrows() / 2;
    let nuclear = rho.view((0, 0), (d, d)) + rho.view((d, d), (d, d));
    let e: DVector<_> = kind.electron_vector::<T>();
    let pe = &e * e.adjoint();
    QuantumState::Mixed(pe.kronecker(&nuclear))
}

fn evolve_with_resets<T: Real>(
    system: &SpinSystem<T>,
    w: &Waveform<T>,
    kind: InitialStateKind,
    times: &[T],
    observables: &[Observable<T>],
    policy: &IntegrationPolicy<T>,
    interval: T,
) -> Result<Trajectory<T>> {
    if !(interval > T::zero()) {
        return Err(DcsError::InvalidParameter("reset interval must be positive".into()));
    }
    let mut state = spin::initial_state(kind, system);
    let mut now = T::zero();
    let mut next_reset = interval;
    let mut series: Vec<Vec<T>> = vec![Vec::new(); observables.len()];
    for &t in times {
        while next_reset <= t {
            let tr = evolve_from(system, w, &state, now, next_reset, policy)?;
            state = reset_electron(&tr, kind);
            now = next_reset;
            next_reset += interval;
        }
        state = evolve_from(system, w, &state, now, t, policy)?;
        now = t;
        for (o, s) in observables.iter().zip(series.iter_mut()) {
            s.push(spin::expectation(&state, o)?);
        }
    }
    Ok(Trajectory {
        times: times.to_vec(),
        observables: observables.iter().map(|o| o.name.clone()).zip(series).collect(),
        final_state: state,
    })
}

/// Evolves from absolute time `ta` to `tb` by offsetting the waveform.
fn evolve_from<T: Real>(
    system: &SpinSystem<T>,
    w: &Waveform<T>,
    state: &QuantumState<T>,
    ta: T,
    tb: T,
    policy: &IntegrationPolicy<T>,
) -> Result<QuantumState<T>> {
    let shifted = shift_waveform(w, ta)?;
    let tr = dynamics::evolve(system, &shifted, state, &[tb - ta], &[], policy)?;
    Ok(tr.final_state)
}

/// Waveform `t ↦ w(t + offset)`.
fn shift_waveform<T: Real>(w: &Waveform<T>, offset: T) -> Result<Waveform<T>> {
    match w {
        Waveform::Constant { .. } => Ok(*w),
        Waveform::Dcs(d) => Ok(Waveform::Dcs(d.with_t_initial(d.t_initial - offset)?)),
        _ if offset.wrap(w.period().unwrap_or(T::one())) == T::zero() => Ok(*w),
        _ => Err(DcsError::InvalidParameter(
            "electron resets must fall on whole periods for PM and pulse trains".into(),
        )),
    }
}

/// Golden-section search for the minimiser of a unimodal `f` on `[lo, hi]`,
/// stopping once the bracket is narrower than `tol`.
pub fn golden_minimum<T: Real, F: FnMut(T) -> Result<T>>(mut f: F, lo: T, hi: T, tol: T) -> Result<T> {
    if !(hi > lo) || !(tol > T::zero()) {
        return Err(DcsError::Bracketing("golden-section search needs lo < hi and tol > 0".into()));
    }
    let ratio = (T::lit(5.0).sqrt() - T::one()) * T::lit(0.5);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d)?;
        }
    }
    Ok((a + b) * T::lit(0.5))
}

/// Tuning in `[lo, hi]` minimising the first measured observable at
/// `total_time` under full dynamics: a coarse scan picks the deepest grid
/// point, golden-section search refines within its neighbours.
pub fn locate_dip<T: Real>(
    system: &SpinSystem<T>,
    spec: &ProtocolSpec<T>,
    lo: T,
    hi: T,
    total_time: T,
    policy: &IntegrationPolicy<T>,
    tol: T,
) -> Result<T> {
    let observable = resolve_observable(system, spec.measured.first().map_or("sigma_z", |s| s.as_str()))?;
    let state0 = spin::initial_state(spec.initial_state, system);
    let eval = |tuning: T| -> Result<T> {
        let w = spec.waveform(tuning)?;
        let tr = dynamics::evolve(system, &w, &state0, &[total_time], std::slice::from_ref(&observable), policy)?;
        Ok(tr.observables[0].1[0])
    };
    let n = 41;
    let step = (hi - lo) / T::lit((n - 1) as f64);
    let grid: Vec<T> = (0..n).map(|i| lo + step * T::lit(i as f64)).collect();
    let values: Vec<T> = grid.par_iter().map(|&x| eval(x)).collect::<Result<_>>()?;
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let a = if best == 0 { grid[0] } else { grid[best - 1] };
    let b = if best + 1 == n { grid[n - 1] } else { grid[best + 1] };
    golden_minimum(eval, a, b, tol)
}

/// DCS spectral response: one evolution from `|+⟩` per ν, recording `σ_z`.
pub fn run_dcs_sensing<T: Real>(
    system: &SpinSystem<T>,
    omega_max: T,
    nu_grid: &[T],
    total_time: T,
    policy: &IntegrationPolicy<T>,
) -> Result<SweepResult<T>> {
    let spec = ProtocolSpec::new(
        Drive::Dcs {
            omega_max,
            tau_switch_fraction: T::zero(),
            t_initial_fraction: -T::lit(0.5),
        },
        InitialStateKind::Sensing,
        vec!["sigma_z".into()],
    )?;
    run_sweep(system, &spec, "nu", nu_grid, total_time, policy)
}

/// DCS polarisation build-up `2⟨I_z[1]⟩` at fixed ν over `times`.
pub fn run_dcs_dnp<T: Real>(
    system: &SpinSystem<T>,
    omega_max: T,
    nu: T,
    times: &[T],
    policy: &IntegrationPolicy<T>,
) -> Result<SweepResult<T>> {
    let spec = ProtocolSpec::new(
        Drive::Dcs {
            omega_max,
            tau_switch_fraction: T::zero(),
            t_initial_fraction: -T::lit(0.5),
        },
        InitialStateKind::DnpDcs,
        vec!["sigma_z".into(), "polarization[1]".into()],
    )?;
    run_time_trace(system, &spec, nu, times, policy, None)
}

/// PM spectral response over ν, recording `σ_z`.
pub fn run_pm<T: Real>(
    system: &SpinSystem<T>,
    omega0: T,
    omega1: T,
    nu_grid: &[T],
    total_time: T,
    policy: &IntegrationPolicy<T>,
) -> Result<SweepResult<T>> {
    let spec = ProtocolSpec::new(
        Drive::Pm { omega0, omega1 },
        InitialStateKind::Sensing,
        vec!["sigma_z".into()],
    )?;
    run_sweep(system, &spec, "nu", nu_grid, total_time, policy)
}

/// TOP-DNP polarisation `2⟨I_z[1]⟩` over a detuning grid.
#[allow(clippy::too_many_arguments)]
pub fn run_topdnp<T: Real>(
    system: &SpinSystem<T>,
    rabi: T,
    pulse_len: T,
    delay: T,
    detuning_grid: &[T],
    total_time: T,
    initial: InitialStateKind,
    policy: &IntegrationPolicy<T>,
) -> Result<SweepResult<T>> {
    let spec = ProtocolSpec::new(
        Drive::Topdnp {
            rabi,
            pulse_len,
            delay,
        },
        initial,
        vec!["polarization[1]".into()],
    )?;
    run_sweep(system, &spec, "detuning", detuning_grid, total_time, policy)
}
