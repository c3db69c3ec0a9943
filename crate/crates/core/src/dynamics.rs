//! Exact propagation under a periodic piecewise-linear drive.
//!
//! Each flat stretch of the waveform is one exact exponential
//! `exp(−iHΔt)` from a cached eigendecomposition of `H(level)`. Ramps are cut
//! into slices, each propagated with the fourth-order Magnus step for a
//! linearly varying `H`. Whole periods are applied through the
//! period propagator raised to the required power, so the cost of a
//! trajectory scales with the number of samples rather than with `T/τ`.

use std::collections::HashMap;

use crate::error::{DcsError, Result};
use crate::linalg::{self, HermitianEigen};
use crate::scalar::{re, CMatrix, Real};
use crate::spin::{
    self, embed_in_slots, expectation_of, local, InitialStateKind, Observable, QuantumState, SpinSystem,
};
use crate::waveform::{DcsWaveform, Waveform};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrationPolicy<T: Real> {
    /// Longest slice used to discretise a ramp.
    pub max_step: T,
    /// Minimum number of slices per ramp.
    pub ramp_substeps: usize,
    /// Applied propagators between state trace/finiteness checks.
    pub unitarity_check_interval: usize,
    /// Bound on `‖U†U − 1‖_max` for every segment propagator.
    pub tolerance: T,
    /// Apply whole periods through powers of the period propagator.
    pub power_periods: bool,
}

impl<T: Real> Default for IntegrationPolicy<T> {
    fn default() -> Self {
        Self {
            max_step: T::lit(1e-9),
            ramp_substeps: 32,
            unitarity_check_interval: 1000,
            tolerance: T::unitarity_tol(),
            power_periods: true,
        }
    }
}

impl<T: Real> IntegrationPolicy<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_step > T::zero()) {
            return Err(DcsError::InvalidParameter("max_step must be positive".into()));
        }
        if self.ramp_substeps == 0 || self.unitarity_check_interval == 0 {
            return Err(DcsError::InvalidParameter(
                "ramp_substeps and unitarity_check_interval must be at least 1".into(),
            ));
        }
        if !(self.tolerance > T::zero()) {
            return Err(DcsError::InvalidParameter("tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    pub observables: Vec<(String, Vec<T>)>,
    pub final_state: QuantumState<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn series(&self, name: &str) -> Option<&[T]> {
        self.observables
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

/// Anything that maps a drive level and detuning to a Hamiltonian matrix.
pub trait HamiltonianModel<T: Real>: Sync {
    fn dimension(&self) -> usize;
    fn hamiltonian(&self, drive: T, detuning: T) -> CMatrix<T>;
}

impl<T: Real> HamiltonianModel<T> for SpinSystem<T> {
    fn dimension(&self) -> usize {
        SpinSystem::dimension(self)
    }

    fn hamiltonian(&self, drive: T, detuning: T) -> CMatrix<T> {
        spin::hamiltonian_with_detuning(self, drive, detuning).matrix
    }
}

/// Two spin-½ with `H₀ = ω_e S_z + ω_n I_z + a(S₋I₊ + S₊I₋)`, electron first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyTwoSpin<T: Real> {
    pub omega_n: T,
    pub a: T,
}

impl<T: Real> ToyTwoSpin<T> {
    pub fn s_z(&self) -> Observable<T> {
        Observable {
            name: "S_z".into(),
            matrix: embed_in_slots(&local::spin_z(), 0, 2).expect("slot 0"),
        }
    }

    pub fn i_z(&self) -> Observable<T> {
        Observable {
            name: "I_z".into(),
            matrix: embed_in_slots(&local::spin_z(), 1, 2).expect("slot 1"),
        }
    }
}

impl<T: Real> HamiltonianModel<T> for ToyTwoSpin<T> {
    fn dimension(&self) -> usize {
        4
    }

    fn hamiltonian(&self, drive: T, _detuning: T) -> CMatrix<T> {
        let sz = embed_in_slots(&local::spin_z(), 0, 2).expect("slot 0");
        let iz = embed_in_slots(&local::spin_z(), 1, 2).expect("slot 1");
        let sp = embed_in_slots(&local::spin_plus(), 0, 2).expect("slot 0");
        let sm = embed_in_slots(&local::spin_minus(), 0, 2).expect("slot 0");
        let ip = embed_in_slots(&local::spin_plus(), 1, 2).expect("slot 1");
        let im = embed_in_slots(&local::spin_minus(), 1, 2).expect("slot 1");
        sz * re(drive) + iz * re(self.omega_n) + (sm * ip + sp * im) * re(self.a)
    }
}

/// A stretch of constant Hamiltonian inside one period.
#[derive(Clone, Copy, Debug)]
struct Slice<T: Real> {
    start: T,
    len: T,
    /// Drive level at the slice midpoint.
    level: T,
    /// dω_e/dt, zero on flat stretches.
    slope: T,
}

fn bits<T: Real>(x: T) -> u64 {
    x.to_f64_lossy().to_bits()
}

struct Engine<'a, T: Real, M: HamiltonianModel<T>> {
    model: &'a M,
    detuning: T,
    policy: IntegrationPolicy<T>,
    period: Option<T>,
    slices: Vec<Slice<T>>,
    slice_props: Vec<CMatrix<T>>,
    eigen: HashMap<u64, HermitianEigen<T>>,
    period_prop: Option<CMatrix<T>>,
    powers: HashMap<u64, CMatrix<T>>,
    applied: usize,
    initial_trace: T,
}

impl<'a, T: Real, M: HamiltonianModel<T>> Engine<'a, T, M> {
    fn new(model: &'a M, waveform: &Waveform<T>, policy: IntegrationPolicy<T>) -> Result<Self> {
        policy.validate()?;
        let mut slices = Vec::new();
        for p in waveform.pieces() {
            if p.is_flat() {
                slices.push(Slice {
                    start: p.start,
                    len: p.len,
                    level: p.from,
                    slope: T::zero(),
                });
            } else {
                let by_step = (p.len / policy.max_step).ceil().to_usize().unwrap_or(1);
                let n = policy.ramp_substeps.max(by_step);
                let h = p.len / T::lit(n as f64);
                let slope = (p.to - p.from) / p.len;
                for i in 0..n {
                    let mid = (T::lit(i as f64) + T::lit(0.5)) * h;
                    slices.push(Slice {
                        start: p.start + T::lit(i as f64) * h,
                        len: h,
                        level: p.value_at(mid),
                        slope,
                    });
                }
            }
        }
        let mut engine = Self {
            model,
            detuning: waveform.detuning(),
            policy,
            period: waveform.period(),
            slices,
            slice_props: Vec::new(),
            eigen: HashMap::new(),
            period_prop: None,
            powers: HashMap::new(),
            applied: 0,
            initial_trace: T::one(),
        };
        if engine.period.is_some() {
            let mut props = Vec::with_capacity(engine.slices.len());
            for i in 0..engine.slices.len() {
                let s = engine.slices[i];
                let u = engine.slice_propagator(&s, s.start, s.start + s.len);
                engine.check_unitary(&u, s.start)?;
                props.push(u);
            }
            let mut up = linalg::identity::<T>(model.dimension());
            for u in &props {
                up = u * up;
            }
            engine.check_unitary(&up, T::zero())?;
            engine.slice_props = props;
            engine.period_prop = Some(up);
        }
        Ok(engine)
    }

    fn level_propagator(&mut self, level: T, dt: T) -> CMatrix<T> {
        let key = bits(level);
        let model = self.model;
        let detuning = self.detuning;
        self.eigen
            .entry(key)
            .or_insert_with(|| HermitianEigen::new(&model.hamiltonian(level, detuning)))
            .propagator(dt)
    }

    /// Propagator over `[a, b]` inside slice `s`. On a ramp, `H(t) = H_m + (t − t_m)Ḣ`
    /// and `exp(−i h H_m + (h³/12)[H_m, Ḣ])` is exact to fourth order in `h`.
    fn slice_propagator(&mut self, s: &Slice<T>, a: T, b: T) -> CMatrix<T> {
        if s.slope == T::zero() {
            return self.level_propagator(s.level, b - a);
        }
        let h = b - a;
        let mid = s.level + s.slope * ((a + b) * T::lit(0.5) - (s.start + s.len * T::lit(0.5)));
        let hm = self.model.hamiltonian(mid, self.detuning);
        // H is affine in the level, so one difference gives ∂H/∂level
        let dh = (self.model.hamiltonian(mid + T::one(), self.detuning) - &hm) * re(s.slope);
        let correction = linalg::commutator(&hm, &dh) * crate::scalar::C::new(T::zero(), h * h * h / T::lit(12.0));
        let k = hm * re(h) + correction;
        let k = (&k + k.adjoint()) * re(T::lit(0.5));
        HermitianEigen::new(&k).propagator(T::one())
    }

    fn check_unitary(&self, u: &CMatrix<T>, time: T) -> Result<()> {
        let drift = linalg::unitarity_defect(u);
        if !(drift <= self.policy.tolerance) {
            return Err(DcsError::UnitarityDrift {
                drift: drift.to_f64_lossy(),
                tolerance: self.policy.tolerance.to_f64_lossy(),
                time: time.to_f64_lossy(),
            });
        }
        Ok(())
    }

    fn apply(&mut self, state: &mut QuantumState<T>, u: &CMatrix<T>, time: T) -> Result<()> {
        state.evolve(u);
        self.applied += 1;
        if self.applied % self.policy.unitarity_check_interval == 0 {
            self.check_state(state, time)?;
        }
        Ok(())
    }

    fn check_state(&self, state: &QuantumState<T>, time: T) -> Result<()> {
        if !state.is_finite() {
            return Err(DcsError::NonFinite {
                time: time.to_f64_lossy(),
            });
        }
        let drift = (state.trace() - self.initial_trace).abs();
        let limit = self.policy.tolerance * T::lit(10.0);
        if !(drift <= limit) {
            return Err(DcsError::StateDrift {
                drift: drift.to_f64_lossy(),
                tolerance: limit.to_f64_lossy(),
                time: time.to_f64_lossy(),
            });
        }
        Ok(())
    }

    /// Applies the slices overlapping `[x0, x1]` within the period that
    /// starts at `origin`.
    fn apply_within_period(&mut self, state: &mut QuantumState<T>, origin: T, x0: T, x1: T) -> Result<()> {
        for i in 0..self.slices.len() {
            let s = self.slices[i];
            let a = s.start.max(x0);
            let b = (s.start + s.len).min(x1);
            if b <= a {
                continue;
            }
            if a == s.start && b == s.start + s.len {
                let u = self.slice_props[i].clone();
                self.apply(state, &u, origin + b)?;
            } else {
                let u = self.slice_propagator(&s, a, b);
                self.apply(state, &u, origin + b)?;
            }
        }
        Ok(())
    }

    fn apply_periods(&mut self, state: &mut QuantumState<T>, count: u64, origin: T, tau: T) -> Result<()> {
        if count == 0 {
            return Ok(());
        }
        if !self.policy.power_periods {
            for k in 0..count {
                self.apply_within_period(state, origin + T::lit(k as f64) * tau, T::zero(), tau)?;
            }
            return Ok(());
        }
        let up = self.period_prop.as_ref().expect("periodic engine");
        let u = self
            .powers
            .entry(count)
            .or_insert_with(|| linalg::unitary_power(up, count))
            .clone();
        // re-projection keeps the defect near round-off; allow log2(count) of it
        let slack = T::one() + T::lit((count as f64).log2().max(0.0));
        let drift = linalg::unitarity_defect(&u);
        if !(drift <= self.policy.tolerance * slack) {
            return Err(DcsError::UnitarityDrift {
                drift: drift.to_f64_lossy(),
                tolerance: (self.policy.tolerance * slack).to_f64_lossy(),
                time: (origin + T::lit(count as f64) * tau).to_f64_lossy(),
            });
        }
        self.apply(state, &u, origin + T::lit(count as f64) * tau)
    }

    /// Evolves `state` from time `ta` to `tb ≥ ta`.
    fn advance(&mut self, state: &mut QuantumState<T>, ta: T, tb: T) -> Result<()> {
        if tb <= ta {
            return Ok(());
        }
        let tau = match self.period {
            None => {
                let level = self.slices.first().map_or(T::zero(), |s| s.level);
                let u = self.level_propagator(level, tb - ta);
                self.check_unitary(&u, tb)?;
                return self.apply(state, &u, tb);
            }
            Some(tau) => tau,
        };
        let ka = (ta / tau).floor();
        let kb = (tb / tau).floor();
        let xa = (ta - ka * tau).max(T::zero());
        let xb = (tb - kb * tau).max(T::zero());
        if ka == kb {
            return self.apply_within_period(state, ka * tau, xa, xb);
        }
        self.apply_within_period(state, ka * tau, xa, tau)?;
        let whole = (kb - ka - T::one()).to_u64().unwrap_or(0);
        self.apply_periods(state, whole, (ka + T::one()) * tau, tau)?;
        self.apply_within_period(state, kb * tau, T::zero(), xb)
    }
}

/// Evolves `state0` under `model` driven by `waveform`, recording the
/// expectation of every observable at each of `times` (non-decreasing, ≥ 0).
pub fn evolve<T: Real, M: HamiltonianModel<T>>(
    model: &M,
    waveform: &Waveform<T>,
    state0: &QuantumState<T>,
    times: &[T],
    observables: &[Observable<T>],
    policy: &IntegrationPolicy<T>,
) -> Result<Trajectory<T>> {
    state0.validate()?;
    if state0.dimension() != model.dimension() {
        return Err(DcsError::DimensionMismatch {
            expected: model.dimension(),
            found: state0.dimension(),
        });
    }
    for o in observables {
        if o.matrix.nrows() != model.dimension() {
            return Err(DcsError::DimensionMismatch {
                expected: model.dimension(),
                found: o.matrix.nrows(),
            });
        }
    }
    if times.iter().any(|t| !(*t >= T::zero())) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(DcsError::InvalidParameter(
            "sample times must be non-negative and non-decreasing".into(),
        ));
    }
    let mut engine = Engine::new(model, waveform, *policy)?;
    let mut state = state0.clone();
    engine.initial_trace = state.trace();
    let mut series: Vec<Vec<T>> = vec![Vec::with_capacity(times.len()); observables.len()];
    let mut now = T::zero();
    for &t in times {
        engine.advance(&mut state, now, t)?;
        now = t;
        engine.check_state(&state, t)?;
        for (o, s) in observables.iter().zip(series.iter_mut()) {
            s.push(expectation_of(&state, &o.matrix)?);
        }
    }
    Ok(Trajectory {
        times: times.to_vec(),
        observables: observables.iter().map(|o| o.name.clone()).zip(series).collect(),
        final_state: state,
    })
}

/// Uniform grid `0, T/n, …, T` with spacing at most `sample_every`.
pub fn sample_grid<T: Real>(total_time: T, sample_every: T) -> Vec<T> {
    let n = (total_time / sample_every - T::lit(1e-9)).ceil().to_usize().unwrap_or(1).max(1);
    (0..=n)
        .map(|i| total_time * T::lit(i as f64) / T::lit(n as f64))
        .collect()
}

/// `σ_z` followed by `I_z[j]` for every nucleus.
pub fn default_observables<T: Real>(system: &SpinSystem<T>) -> Vec<Observable<T>> {
    let mut out = vec![spin::sigma_z(system)];
    for j in 0..system.nuclei.len() {
        out.push(spin::nuclear_iz(system, j).expect("nucleus index"));
    }
    out
}

/// Evolves the composite system for `total_time`, sampling `σ_z` and every
/// `I_z[j]` at most every `sample_every`.
pub fn propagate<T: Real>(
    system: &SpinSystem<T>,
    waveform: &Waveform<T>,
    state0: &QuantumState<T>,
    total_time: T,
    policy: &IntegrationPolicy<T>,
    sample_every: T,
) -> Result<Trajectory<T>> {
    if !(total_time > T::zero() && sample_every > T::zero()) {
        return Err(DcsError::InvalidParameter(
            "total time and sample spacing must be positive".into(),
        ));
    }
    let times = sample_grid(total_time, sample_every);
    evolve(system, waveform, state0, &times, &default_observables(system), policy)
}

/// `cos²((Ω/2πν) A_x T)`.
pub fn effective_flipflop_signal<T: Real>(omega_max: T, nu: T, a_x: T, total_time: T) -> T {
    let c = effective_coupling(omega_max, nu, a_x) * total_time;
    c.cos() * c.cos()
}

/// Leading-order flip-flop coupling `(Ω/2πν) A_x` in rad/s.
pub fn effective_coupling<T: Real>(omega_max: T, nu: T, a_x: T) -> T {
    omega_max * a_x / (T::two_pi() * nu)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MagnusBranch {
    FlipFlop,
    DoubleQuantum,
}

/// Leading-order effective Hamiltonian for the first nucleus under a DCS
/// waveform at its `k_D = 1` optimum.
pub fn magnus_effective_hamiltonian<T: Real>(
    system: &SpinSystem<T>,
    w: &DcsWaveform<T>,
    branch: MagnusBranch,
) -> Result<Observable<T>> {
    let nucleus = system
        .nuclei
        .first()
        .ok_or_else(|| DcsError::InvalidParameter("effective Hamiltonian needs one nucleus".into()))?;
    let nu = w.nu();
    let optimum = w.omega_max / nu;
    if w.tau_switch != T::zero() || (w.duty_ratio() - optimum).abs() > T::resonance_tol() {
        return Err(DcsError::InvalidParameter(
            "effective Hamiltonian needs an instantaneous DCS waveform with r_D = Omega/nu".into(),
        ));
    }
    let slots = system.slots();
    let sp = embed_in_slots(&local::sigma_plus(), 0, slots)?;
    let nuclear = match branch {
        MagnusBranch::FlipFlop => local::spin_minus(),
        MagnusBranch::DoubleQuantum => local::spin_plus(),
    };
    let i = embed_in_slots(&nuclear, 1, slots)?;
    let term = sp * i;
    let h = (&term + term.adjoint()) * re(effective_coupling(w.omega_max, nu, nucleus.hyperfine_x));
    Observable::new(
        match branch {
            MagnusBranch::FlipFlop => "H_flipflop",
            MagnusBranch::DoubleQuantum => "H_doublequantum",
        },
        h,
    )
}

/// Toy two-spin evolution sampled at `times`, recording `S_z` and `I_z`.
pub fn two_spin_toy_propagate<T: Real>(
    waveform: &Waveform<T>,
    omega_n: T,
    a: T,
    state0: &QuantumState<T>,
    times: &[T],
    policy: &IntegrationPolicy<T>,
) -> Result<Trajectory<T>> {
    let toy = ToyTwoSpin { omega_n, a };
    evolve(&toy, waveform, state0, times, &[toy.s_z(), toy.i_z()], policy)
}

/// Product state of the electron preparation and a mixed nuclear bath.
pub fn prepared_state<T: Real>(kind: InitialStateKind, system: &SpinSystem<T>) -> QuantumState<T> {
    spin::initial_state(kind, system)
}
