//! Modulation waveforms `ω_e(t)` and the resonance analytics built on them.
//!
//! The dressed splitting `ω_e(t)` is piecewise linear and periodic. Against a
//! nuclear frequency `ω_n` it defines the dynamic phase
//! `φ(t) = ∫₀ᵗ [ω_n − ω_e(t′)] dt′`, and the retained fraction of the bare
//! flip-flop coupling over a time `T` is the coupling factor
//! `g = (1/T) ∫₀ᵀ e^{iφ(t)} dt`. For `T = Nτ` this factorises as `g = η·J`
//! where `J` is the same average over a single period `[0, τ)` and `η` sums
//! the per-period phase slips `δ_φ = φ(τ) − 2πk_D`.
//!
//! A DCS waveform switches between `+Ω` for `τ₊` and `−Ω` for `τ₋`. The
//! positive segment begins at `t_I` (mod `τ`); with a non-zero switching time
//! `τ_s` each switch becomes a linear ramp of that duration centred on the
//! nominal switching instant, which leaves the period integral of `ω_e`
//! unchanged.

use crate::error::{DcsError, Result};
use crate::protocols::PulseTrain;
use crate::quadrature::Quadrature;
use crate::scalar::{cis, modulus, re, C, Real};

/// Two-level switching between `+Ω` and `−Ω` with unequal dwell times.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DcsWaveform<T: Real> {
    /// Ω, rad/s
    pub omega_max: T,
    pub tau_plus: T,
    pub tau_minus: T,
    pub tau_switch: T,
    pub t_initial: T,
}

impl<T: Real> DcsWaveform<T> {
    pub fn new(omega_max: T, tau_plus: T, tau_minus: T, tau_switch: T, t_initial: T) -> Result<Self> {
        let w = Self {
            omega_max,
            tau_plus,
            tau_minus,
            tau_switch,
            t_initial,
        };
        if !(tau_plus > T::zero() && tau_minus > T::zero()) {
            return Err(DcsError::InvalidParameter("DCS dwell times must be positive".into()));
        }
        if !(tau_switch >= T::zero() && tau_switch < tau_plus.min(tau_minus)) {
            return Err(DcsError::InvalidParameter(
                "switching time must satisfy 0 <= tau_s < min(tau_plus, tau_minus)".into(),
            ));
        }
        if !(omega_max.is_finite() && t_initial.is_finite()) {
            return Err(DcsError::InvalidParameter("non-finite DCS parameters".into()));
        }
        Ok(w)
    }

    /// Symmetric, instantaneous-switching waveform at the `k_D = 1` optimum
    /// for frequency `nu`.
    pub fn optimal(omega_max: T, nu: T) -> Result<Self> {
        let (tp, tm) = optimal_dcs(omega_max, nu)?;
        Self::new(omega_max, tp, tm, T::zero(), -tp * T::lit(0.5))
    }

    pub fn with_t_initial(self, t_initial: T) -> Result<Self> {
        Self::new(self.omega_max, self.tau_plus, self.tau_minus, self.tau_switch, t_initial)
    }

    pub fn with_tau_switch(self, tau_switch: T) -> Result<Self> {
        Self::new(self.omega_max, self.tau_plus, self.tau_minus, tau_switch, self.t_initial)
    }

    pub fn period(&self) -> T {
        self.tau_plus + self.tau_minus
    }

    /// `r_D = (τ₊ − τ₋)/τ`
    pub fn duty_ratio(&self) -> T {
        (self.tau_plus - self.tau_minus) / self.period()
    }

    /// `ν = 2π/τ + r_D Ω`
    pub fn nu(&self) -> T {
        T::two_pi() / self.period() + self.duty_ratio() * self.omega_max
    }

    fn pieces(&self) -> Vec<Piece<T>> {
        let tau = self.period();
        let s = self.tau_switch;
        let om = self.omega_max;
        let mut rel = Vec::with_capacity(4);
        if s > T::zero() {
            rel.push((s, -om, om));
        }
        rel.push((self.tau_plus - s, om, om));
        if s > T::zero() {
            rel.push((s, om, -om));
        }
        rel.push((self.tau_minus - s, -om, -om));

        let mut out = Vec::with_capacity(5);
        let mut t = (self.t_initial - s * T::lit(0.5)).wrap(tau);
        for (len, from, to) in rel {
            let end = t + len;
            if t >= tau {
                out.push(Piece::new(t - tau, len, from, to));
            } else if end > tau {
                let first = tau - t;
                let split = from + (to - from) * (first / len);
                out.push(Piece::new(t, first, from, split));
                out.push(Piece::new(T::zero(), len - first, split, to));
            } else {
                out.push(Piece::new(t, len, from, to));
            }
            t = end;
        }
        out.retain(|p| p.len > T::zero());
        out.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap_or(std::cmp::Ordering::Equal));
        out
    }
}

/// Square-wave modulation of the dressed splitting between `Ω₀ + Ω₁` (first
/// half period) and `Ω₀ − Ω₁` (second half).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PmWaveform<T: Real> {
    pub omega0: T,
    pub omega1: T,
    pub period: T,
}

impl<T: Real> PmWaveform<T> {
    pub fn new(omega0: T, omega1: T, period: T) -> Result<Self> {
        if !(period > T::zero()) {
            return Err(DcsError::InvalidParameter("PM period must be positive".into()));
        }
        if !(omega0 >= T::zero() && omega1 >= T::zero()) {
            return Err(DcsError::InvalidParameter("PM amplitudes must be non-negative".into()));
        }
        Ok(Self { omega0, omega1, period })
    }
}

/// One linear stretch of a waveform period, `start` measured from the period
/// origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Piece<T: Real> {
    pub start: T,
    pub len: T,
    pub from: T,
    pub to: T,
}

impl<T: Real> Piece<T> {
    pub fn new(start: T, len: T, from: T, to: T) -> Self {
        Self { start, len, from, to }
    }

    pub fn is_flat(&self) -> bool {
        self.from == self.to
    }

    pub fn value_at(&self, x: T) -> T {
        if self.is_flat() {
            self.from
        } else {
            self.from + (self.to - self.from) * (x / self.len)
        }
    }

    /// `∫₀ˣ ω_e` within the piece.
    pub fn integral_to(&self, x: T) -> T {
        if self.is_flat() {
            self.from * x
        } else {
            self.from * x + (self.to - self.from) * x * x / (T::lit(2.0) * self.len)
        }
    }

    pub fn integral(&self) -> T {
        self.integral_to(self.len)
    }

    /// `∫ ω_e²` over the whole piece.
    pub fn square_integral(&self) -> T {
        let (a, b) = (self.from, self.to);
        self.len * (a * a + a * b + b * b) / T::lit(3.0)
    }
}

/// Every modulation the experiments use.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Waveform<T: Real> {
    Constant { omega_e: T },
    Dcs(DcsWaveform<T>),
    Pm(PmWaveform<T>),
    PulseTrain(PulseTrain<T>),
}

impl<T: Real> Waveform<T> {
    /// `None` for the constant waveform.
    pub fn period(&self) -> Option<T> {
        match self {
            Waveform::Constant { .. } => None,
            Waveform::Dcs(w) => Some(w.period()),
            Waveform::Pm(w) => Some(w.period),
            Waveform::PulseTrain(p) => Some(p.period()),
        }
    }

    /// Constant microwave detuning; only pulse trains carry one.
    pub fn detuning(&self) -> T {
        match self {
            Waveform::PulseTrain(p) => p.detuning,
            _ => T::zero(),
        }
    }

    /// Pieces covering `[0, τ)`. The constant waveform yields a single flat
    /// piece of unit length.
    pub fn pieces(&self) -> Vec<Piece<T>> {
        match self {
            Waveform::Constant { omega_e } => vec![Piece::new(T::zero(), T::one(), *omega_e, *omega_e)],
            Waveform::Dcs(w) => w.pieces(),
            Waveform::Pm(w) => {
                let h = w.period * T::lit(0.5);
                vec![
                    Piece::new(T::zero(), h, w.omega0 + w.omega1, w.omega0 + w.omega1),
                    Piece::new(h, w.period - h, w.omega0 - w.omega1, w.omega0 - w.omega1),
                ]
            }
            Waveform::PulseTrain(p) => vec![
                Piece::new(T::zero(), p.pulse_len, p.rabi, p.rabi),
                Piece::new(p.pulse_len, p.delay, T::zero(), T::zero()),
            ],
        }
    }

    /// Same timing with every drive amplitude multiplied by `factor`.
    pub fn scale_amplitude(&self, factor: T) -> Self {
        match *self {
            Waveform::Constant { omega_e } => Waveform::Constant {
                omega_e: omega_e * factor,
            },
            Waveform::Dcs(w) => Waveform::Dcs(DcsWaveform {
                omega_max: w.omega_max * factor,
                ..w
            }),
            Waveform::Pm(w) => Waveform::Pm(PmWaveform {
                omega0: w.omega0 * factor,
                omega1: w.omega1 * factor,
                ..w
            }),
            Waveform::PulseTrain(p) => Waveform::PulseTrain(PulseTrain {
                rabi: p.rabi * factor,
                ..p
            }),
        }
    }

    /// Locates `t` within a period: (periods elapsed, piece, offset in piece).
    fn locate(&self, t: T) -> (T, Piece<T>, T) {
        match self.period() {
            None => {
                let p = self.pieces()[0];
                (T::zero(), p, t)
            }
            Some(tau) => {
                let k = (t / tau).floor();
                let x = t.wrap(tau);
                let pieces = self.pieces();
                let piece = pieces
                    .iter()
                    .rev()
                    .find(|p| p.start <= x)
                    .copied()
                    .unwrap_or(pieces[0]);
                let off = (x - piece.start).max(T::zero()).min(piece.len);
                (k, piece, off)
            }
        }
    }

    pub fn value(&self, t: T) -> T {
        let (_, piece, off) = self.locate(t);
        piece.value_at(off)
    }

    /// `∫₀ᵗ ω_e`
    pub fn drive_integral(&self, t: T) -> T {
        match self.period() {
            None => self.value(T::zero()) * t,
            Some(tau) => {
                let pieces = self.pieces();
                let full: T = pieces.iter().fold(T::zero(), |s, p| s + p.integral());
                let k = (t / tau).floor();
                let x = t - k * tau;
                let mut partial = T::zero();
                for p in &pieces {
                    if p.start + p.len <= x {
                        partial += p.integral();
                    } else if p.start < x {
                        partial += p.integral_to(x - p.start);
                    }
                }
                k * full + partial
            }
        }
    }

    /// Pieces laid out in absolute time over `[0, t_end]`, the last one
    /// clipped.
    pub fn pieces_until(&self, t_end: T) -> Vec<(T, Piece<T>)> {
        let mut out = Vec::new();
        match self.period() {
            None => {
                let p = self.pieces()[0];
                out.push((T::zero(), Piece { len: t_end, ..p }));
            }
            Some(tau) => {
                let pieces = self.pieces();
                let mut k = T::zero();
                'outer: loop {
                    for p in &pieces {
                        let start = k * tau + p.start;
                        if start >= t_end {
                            break 'outer;
                        }
                        let len = p.len.min(t_end - start);
                        let to = if len < p.len { p.value_at(len) } else { p.to };
                        out.push((start, Piece::new(p.start, len, p.from, to)));
                    }
                    k += T::one();
                }
            }
        }
        out
    }
}

/// `ω_e(t)`.
pub fn waveform_value<T: Real>(w: &Waveform<T>, t: T) -> T {
    w.value(t)
}

/// `φ(t) = ∫₀ᵗ [ω_n − ω_e(t′)] dt′`, exact for piecewise-linear waveforms.
pub fn dynamic_phase<T: Real>(w: &Waveform<T>, omega_n: T, t: T) -> T {
    omega_n * t - w.drive_integral(t)
}

/// `δ_φ = φ(τ) − 2π k_D`.
pub fn period_defect<T: Real>(w: &Waveform<T>, omega_n: T, k_d: i64) -> Result<T> {
    let tau = w
        .period()
        .ok_or_else(|| DcsError::InvalidParameter("period defect needs a periodic waveform".into()))?;
    Ok(dynamic_phase(w, omega_n, tau) - T::two_pi() * T::lit(k_d as f64))
}

/// `η(δ_φ, N) = (1/N) Σ_{m=1}^{N} e^{i(m−1)δ_φ}` in closed form.
pub fn eta<T: Real>(delta_phi: T, n: u64) -> C<T> {
    assert!(n >= 1, "eta needs N >= 1");
    let half = delta_phi * T::lit(0.5);
    let denom = half.sin();
    if denom.abs() <= T::default_epsilon() * T::lit(16.0) {
        // δ_φ is a multiple of 2π: every term equals one
        return re(T::one());
    }
    let nf = T::lit(n as f64);
    let ratio = (nf * half).sin() / (nf * denom);
    cis((nf - T::one()) * half) * re(ratio)
}

/// `∫ e^{iφ(t)} dt` over one absolute-time piece, φ at its start given.
fn piece_phase_integral<T: Real>(
    piece: &Piece<T>,
    phi0: T,
    omega_n: T,
    tol: T,
) -> Result<C<T>> {
    let phase = |x: T| phi0 + omega_n * x - piece.integral_to(x);
    let quad = piece_quadrature(tol, piece.len);
    Ok(quad.integrate(|x| cis(phase(x)), T::zero(), piece.len)?.value)
}

fn piece_quadrature<T: Real>(tol: T, len: T) -> Quadrature<T> {
    // Piece integrals are summed with cancellation; hold each one tighter,
    // measured against the piece length (the integrand has unit modulus).
    let t = (tol * T::lit(1e-2)).max(T::default_epsilon() * T::lit(64.0));
    Quadrature {
        rel_tol: t,
        abs_tol: t * len,
        ..Quadrature::default()
    }
}

/// `J = (1/τ) ∫₀^τ e^{iφ(t)} dt` by adaptive quadrature.
pub fn period_functional_j<T: Real>(w: &Waveform<T>, omega_n: T) -> Result<C<T>> {
    period_functional_j_tol(w, omega_n, T::quadrature_tol())
}

pub fn period_functional_j_tol<T: Real>(w: &Waveform<T>, omega_n: T, tol: T) -> Result<C<T>> {
    let tau = w
        .period()
        .ok_or_else(|| DcsError::InvalidParameter("J needs a periodic waveform".into()))?;
    let mut sum = re(T::zero());
    for p in w.pieces() {
        let phi0 = dynamic_phase(w, omega_n, p.start);
        sum += piece_phase_integral(&p, phi0, omega_n, tol)?;
    }
    Ok(sum * re(T::one() / tau))
}

/// Coupling factor together with its `η·J` factorisation when `T = Nτ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingFactor<T: Real> {
    pub g: C<T>,
    pub periods: Option<u64>,
    pub eta: Option<C<T>>,
    pub j: Option<C<T>>,
}

impl<T: Real> CouplingFactor<T> {
    pub fn magnitude(&self) -> T {
        modulus(self.g)
    }
}

/// `g = (1/T) ∫₀ᵀ e^{iφ(t)} dt`. When `T` is an integer number of periods
/// the `η·J` route is evaluated as well and must agree within `1e-8`.
pub fn coupling_factor<T: Real>(w: &Waveform<T>, omega_n: T, total_time: T) -> Result<CouplingFactor<T>> {
    if !(total_time > T::zero()) {
        return Err(DcsError::InvalidParameter("total time must be positive".into()));
    }
    let mut sum = re(T::zero());
    for (start, p) in w.pieces_until(total_time) {
        let phi0 = dynamic_phase(w, omega_n, start);
        sum += piece_phase_integral(&p, phi0, omega_n, T::quadrature_tol())?;
    }
    let g = sum * re(T::one() / total_time);

    let mut out = CouplingFactor {
        g,
        periods: None,
        eta: None,
        j: None,
    };
    if let Some(tau) = w.period() {
        let ratio = total_time / tau;
        let n = ratio.round();
        if n >= T::one() && (ratio - n).abs() <= T::lit(1e-9) * n {
            let periods = n.to_u64().unwrap_or(1);
            let j = period_functional_j(w, omega_n)?;
            let e = eta(dynamic_phase(w, omega_n, tau), periods);
            let discrepancy = modulus(g - e * j);
            let limit = T::lit(1e-8).max(T::quadrature_tol() * T::lit(10.0));
            if discrepancy > limit {
                return Err(DcsError::FactorizationMismatch {
                    discrepancy: discrepancy.to_f64_lossy(),
                    periods,
                });
            }
            out.periods = Some(periods);
            out.eta = Some(e);
            out.j = Some(j);
        }
    }
    Ok(out)
}

/// Resonant nuclear frequency `k_D ν + r_D (1 − k_D) Ω`.
pub fn resonance_frequency<T: Real>(omega_max: T, tau_plus: T, tau_minus: T, k_d: i64) -> T {
    let tau = tau_plus + tau_minus;
    let r = (tau_plus - tau_minus) / tau;
    let nu = T::two_pi() / tau + r * omega_max;
    let k = T::lit(k_d as f64);
    k * nu + r * (T::one() - k) * omega_max
}

/// Dwell times `τ± = π/(ν ∓ Ω)` that maximise `|J|` at `k_D = 1`.
pub fn optimal_dcs<T: Real>(omega_max: T, nu: T) -> Result<(T, T)> {
    if !(nu > omega_max) || omega_max < T::zero() {
        return Err(DcsError::HartmannHahnRegime {
            nu: nu.to_f64_lossy(),
            omega: omega_max.to_f64_lossy(),
        });
    }
    Ok((T::pi() / (nu - omega_max), T::pi() / (nu + omega_max)))
}

/// Closed-form `J` of the symmetric waveform (`t_I = −τ₊/2`, `τ_s = 0`) on
/// the resonance manifold:
/// `4(−1)^{k_D} Ω sin[¼(1 + r_D)(ω_n − Ω)τ] / [(ω_n² − Ω²)τ]`.
///
/// The quadrature of `e^{iφ}` with `φ = ∫(ω_n − ω_e)` equals `(−1)^{k_D}`
/// times this value.
pub fn closed_form_j_symmetric<T: Real>(omega_max: T, omega_n: T, tau_plus: T, tau_minus: T, k_d: i64) -> Result<T> {
    let resonance = resonance_frequency(omega_max, tau_plus, tau_minus, k_d);
    let scale = omega_n.abs().max(resonance.abs());
    if (omega_n - resonance).abs() > T::resonance_tol() * scale {
        return Err(DcsError::OffResonance {
            omega_n: omega_n.to_f64_lossy(),
            resonance: resonance.to_f64_lossy(),
            k_d,
        });
    }
    let tau = tau_plus + tau_minus;
    let denom = (omega_n * omega_n - omega_max * omega_max) * tau;
    if denom.abs() <= T::default_epsilon() * (omega_n * omega_n * tau).abs() {
        return Err(DcsError::HartmannHahnRegime {
            nu: omega_n.to_f64_lossy(),
            omega: omega_max.to_f64_lossy(),
        });
    }
    let r = (tau_plus - tau_minus) / tau;
    let sign = if k_d.rem_euclid(2) == 0 { T::one() } else { -T::one() };
    let arg = T::lit(0.25) * (T::one() + r) * (omega_n - omega_max) * tau;
    Ok(sign * T::lit(4.0) * omega_max * arg.sin() / denom)
}

/// Period mean of `ω_e(t)²`.
pub fn average_power<T: Real>(w: &Waveform<T>) -> T {
    match w.period() {
        None => {
            let v = w.value(T::zero());
            v * v
        }
        Some(tau) => w.pieces().iter().fold(T::zero(), |s, p| s + p.square_integral()) / tau,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    const MHZ: f64 = TAU * 1e6;

    /// Midpoint-rule oracle for `∫₀ᵗ ω_e`, sampling `value()` only.
    fn drive_integral_oracle(w: &Waveform<f64>, t: f64, n: usize) -> f64 {
        let h = t / n as f64;
        (0..n).map(|i| w.value((i as f64 + 0.5) * h)).sum::<f64>() * h
    }

    fn fig2_dcs() -> DcsWaveform<f64> {
        DcsWaveform::optimal(MHZ, 10.713 * MHZ).unwrap()
    }

    #[test]
    fn dcs_segment_values() {
        let w = DcsWaveform::new(2.0, 3.0, 1.0, 0.0, 0.0).unwrap();
        let wf = Waveform::Dcs(w);
        assert_eq!(wf.value(1.5), 2.0);
        assert_eq!(wf.value(3.0 + 0.5), -2.0);
        assert_eq!(wf.value(4.0 + 1.5), 2.0);
    }

    #[test]
    fn pm_alternates() {
        let om0 = 0.5 * MHZ;
        let wf = Waveform::Pm(PmWaveform::new(om0, om0, 100e-9).unwrap());
        assert_eq!(wf.value(10e-9), 2.0 * om0);
        assert_eq!(wf.value(60e-9), 0.0);
        assert_eq!(wf.value(110e-9), 2.0 * om0);
    }

    #[test]
    fn t_initial_shifts_positive_segment() {
        let w = DcsWaveform::new(1.0, 3.0, 1.0, 0.0, 1.0).unwrap();
        let wf = Waveform::Dcs(w);
        assert_eq!(wf.value(0.5), -1.0);
        assert_eq!(wf.value(1.5), 1.0);
        assert_eq!(wf.value(3.9), 1.0);
        // symmetric: positive segment centred on t = 0
        let sym = Waveform::Dcs(w.with_t_initial(-1.5).unwrap());
        assert_eq!(sym.value(0.1), 1.0);
        assert_eq!(sym.value(1.6), -1.0);
        assert_eq!(sym.value(3.9), 1.0);
    }

    #[test]
    fn ramps_are_linear_and_centred() {
        let w = DcsWaveform::<f64>::new(1.0, 3.0, 2.0, 0.4, 0.0).unwrap();
        let wf = Waveform::Dcs(w);
        assert!((wf.value(0.0) - 0.0).abs() < 1e-12);
        assert!((wf.value(0.1) - 0.5).abs() < 1e-12);
        assert!((wf.value(3.0)).abs() < 1e-12);
        assert!((wf.value(3.1) + 0.5).abs() < 1e-12);
        assert!((wf.value(4.9) + 0.5).abs() < 1e-12);
        // centred ramps keep the period integral of the ideal square wave
        assert!((wf.drive_integral(5.0) - (3.0 - 2.0)).abs() < 1e-12);
        for p in wf.pieces() {
            assert!(p.len > 0.0);
        }
    }

    #[test]
    fn invalid_dcs_rejected() {
        assert!(DcsWaveform::new(1.0, 0.0, 1.0, 0.0, 0.0).is_err());
        assert!(DcsWaveform::new(1.0, 1.0, 1.0, 1.0, 0.0).is_err());
        assert!(DcsWaveform::new(1.0, 1.0, 1.0, -0.1, 0.0).is_err());
    }

    #[test]
    fn constant_resonant_phase_is_zero() {
        let wf = Waveform::Constant { omega_e: 3.0 };
        for t in [0.0, 0.7, 12.0] {
            assert_eq!(dynamic_phase(&wf, 3.0, t), 0.0);
        }
    }

    #[test]
    fn phase_after_one_period() {
        let w = DcsWaveform::new(MHZ, 51e-9, 43e-9, 0.0, 0.0).unwrap();
        let wf = Waveform::Dcs(w);
        let wn = 10.0 * MHZ;
        let expected = wn * w.period() - MHZ * (w.tau_plus - w.tau_minus);
        assert!((dynamic_phase(&wf, wn, w.period()) - expected).abs() < 1e-12);
    }

    #[test]
    fn phase_matches_midpoint_oracle_with_ramps() {
        let w = DcsWaveform::new(1.3, 2.0, 1.1, 0.3, 0.77).unwrap();
        let wf = Waveform::Dcs(w);
        for t in [0.4, 2.9, 7.3, 11.0] {
            let exact = wf.drive_integral(t);
            let oracle = drive_integral_oracle(&wf, t, 2_000_000);
            assert!((exact - oracle).abs() < 1e-6, "{t}: {exact} vs {oracle}");
        }
    }

    #[test]
    fn resonance_has_zero_defect() {
        let w = fig2_dcs();
        let wf = Waveform::Dcs(w);
        let d = period_defect(&wf, w.nu(), 1).unwrap();
        assert!(d.abs() < 1e-12);
        assert!((dynamic_phase(&wf, w.nu(), w.period()) - TAU).abs() < 1e-12);
    }

    #[test]
    fn defect_is_linear_in_nuclear_frequency() {
        let w = fig2_dcs();
        let wf = Waveform::Dcs(w);
        let delta = TAU * 10e3;
        let d = period_defect(&wf, w.nu() + delta, 1).unwrap();
        assert!((d - delta * w.period()).abs() < 1e-12);
        // 2π × 10 kHz × 94.165 ns
        assert!((d - 5.917e-3).abs() < 1e-6, "{d}");
    }

    #[test]
    fn eta_values() {
        for n in [1, 7, 50] {
            assert_eq!(eta(0.0, n), re(1.0));
            assert_eq!(eta(4.0 * PI, n), re(1.0));
        }
        assert!(modulus(eta(TAU / 50.0, 50)) < 1e-14);
        assert!(modulus(eta(PI, 2)) < 1e-15);
    }

    #[test]
    fn eta_matches_direct_sum() {
        for (d, n) in [(0.3, 5u64), (1e-4, 1000), (2.9, 17)] {
            let direct: C<f64> = (0..n).map(|m| cis(m as f64 * d)).sum::<C<f64>>() / n as f64;
            assert!(modulus(eta(d, n) - direct) < 1e-12);
        }
    }

    #[test]
    fn eta_first_zeros_at_two_pi_over_n() {
        // bisection on Re-part sign change is unreliable; bracket |η| minimum instead
        let n = 50u64;
        let target = TAU / n as f64;
        let (mut a, mut b) = (0.5 * target, 1.5 * target);
        for _ in 0..200 {
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            if modulus(eta(m1, n)) < modulus(eta(m2, n)) {
                b = m2;
            } else {
                a = m1;
            }
        }
        let zero = 0.5 * (a + b);
        assert!((zero - target).abs() < 1e-10);
        assert!((-zero + target).abs() < 1e-10);
        assert!(modulus(eta(-target, n)) < 1e-14);
    }

    #[test]
    fn constant_j_is_one() {
        let wf = Waveform::Pm(PmWaveform::new(2.0, 0.0, 1.0).unwrap());
        let j = period_functional_j(&wf, 2.0).unwrap();
        assert!(modulus(j - re(1.0)) < 1e-14);
    }

    #[test]
    fn constant_coupling_is_sinc() {
        let (we, wn, t) = (3.0, 5.0, 2.2);
        let g = coupling_factor(&Waveform::Constant { omega_e: we }, wn, t).unwrap();
        let x: f64 = (we - wn) * t / 2.0;
        let expected = cis(-x) * re(x.sin() / x);
        assert!(modulus(g.g - expected) < 1e-12);
        let unit = coupling_factor(&Waveform::Constant { omega_e: wn }, wn, t).unwrap();
        assert!(modulus(unit.g - re(1.0)) < 1e-14);
        assert!(unit.periods.is_none());
    }

    #[test]
    fn optimal_coupling_magnitude() {
        // Ω/ν = 0.3, T = 50τ: |g| = 2Ω/(πν)
        let nu = 1.0e7;
        let om = 0.3 * nu;
        let w = DcsWaveform::optimal(om, nu).unwrap();
        let wf = Waveform::Dcs(w);
        let g = coupling_factor(&wf, nu, 50.0 * w.period()).unwrap();
        assert_eq!(g.periods, Some(50));
        assert!((g.magnitude() - 2.0 * 0.3 / PI).abs() < 1e-9);
        assert!((g.magnitude() - 0.19099).abs() < 1e-5);
    }

    #[test]
    fn resonance_frequency_examples() {
        let (om, tp, tm) = (MHZ, 51.477e-9, 42.688e-9);
        let tau = tp + tm;
        let r = (tp - tm) / tau;
        let nu = TAU / tau + r * om;
        assert!((resonance_frequency(om, tp, tm, 1) - nu).abs() < 1e-6);
        assert!((resonance_frequency(om, tp, tm, 0) - r * om).abs() < 1e-9);
        assert!((resonance_frequency(om, tp, tm, 1) / MHZ - 10.713).abs() < 1e-3);
    }

    #[test]
    fn optimal_dcs_examples() {
        let (tp, tm) = optimal_dcs(MHZ, 10.713 * MHZ).unwrap();
        assert!((tp * 1e9 - 51.477).abs() < 1e-3);
        assert!((tm * 1e9 - 42.688).abs() < 1e-3);
        assert!(((tp + tm) * 1e9 - 94.165).abs() < 1e-3);
        let (a, b) = optimal_dcs(0.0, 2.0).unwrap();
        assert_eq!(a, PI / 2.0);
        assert_eq!(b, PI / 2.0);
        let w = DcsWaveform::<f64>::optimal(0.3, 1.0).unwrap();
        assert!((w.duty_ratio() - 0.3).abs() < 1e-15);
        assert!((resonance_frequency(0.3, w.tau_plus, w.tau_minus, 1) - 1.0).abs() < 1e-12);
        assert!(matches!(
            optimal_dcs(2.0, 1.0),
            Err(DcsError::HartmannHahnRegime { .. })
        ));
    }

    #[test]
    fn closed_form_at_optimum() {
        let (om, nu) = (0.3, 1.0);
        let (tp, tm) = optimal_dcs(om, nu).unwrap();
        let j = closed_form_j_symmetric(om, nu, tp, tm, 1).unwrap();
        assert!((j + 2.0 * om / (PI * nu)).abs() < 1e-14);
        assert!((j.abs() - 0.19099).abs() < 1e-5);
    }

    #[test]
    fn closed_form_errors() {
        let (tp, tm) = optimal_dcs(0.3, 1.0).unwrap();
        assert!(matches!(
            closed_form_j_symmetric(0.3, 1.1, tp, tm, 1),
            Err(DcsError::OffResonance { .. })
        ));
        // r_D = 1 puts the k_D = 0 resonance at ω_n = Ω
        let tp = 1.0;
        let tm = 1e-30;
        assert!(closed_form_j_symmetric(0.3, resonance_frequency(0.3, tp, tm, 0), tp, tm, 0).is_err());
    }

    /// Pinned sign relation between the quadrature and the closed form.
    #[test]
    fn closed_form_sign_against_quadrature() {
        let om: f64 = 0.3;
        for (k, tp, tm) in [(1, 3.0, 2.0), (2, 3.0, 2.0), (3, 2.2, 4.1), (2, 2.2, 4.1)] {
            let w = DcsWaveform::new(om, tp, tm, 0.0, -tp / 2.0).unwrap();
            let wn = resonance_frequency(om, tp, tm, k);
            let j = period_functional_j(&Waveform::Dcs(w), wn).unwrap();
            let cf = closed_form_j_symmetric(om, wn, tp, tm, k).unwrap();
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            assert!(j.im.abs() < 1e-10);
            assert!((j.re - sign * cf).abs() < 1e-10 * cf.abs().max(1e-3), "k={k}");
        }
    }

    #[test]
    fn average_power_examples() {
        let om = MHZ;
        let dcs = Waveform::Dcs(fig2_dcs());
        assert!((average_power(&dcs) - om * om).abs() < 1e-12 * om * om);
        let a = om / 2f64.sqrt();
        let pm = Waveform::Pm(PmWaveform::new(a, a, 100e-9).unwrap());
        assert!((average_power(&pm) - om * om).abs() < 1e-9 * om * om);
        let half = Waveform::Pm(PmWaveform::new(0.5 * om, 0.5 * om, 100e-9).unwrap());
        assert!((average_power(&half) - 0.5 * om * om).abs() < 1e-9 * om * om);
        let ramped = Waveform::Dcs(DcsWaveform::<f64>::new(1.0, 3.0, 2.0, 0.3, 0.0).unwrap());
        // two ramps each of mean square 1/3 replace a full-power stretch
        assert!((average_power(&ramped) - (5.0 - 2.0 * 0.3 * (2.0 / 3.0)) / 5.0).abs() < 1e-12);
    }

    #[test]
    fn f32_waveform_analytics() {
        let w = DcsWaveform::<f32>::optimal(0.3, 1.0).unwrap();
        let wf = Waveform::Dcs(w);
        let g = coupling_factor(&wf, 1.0f32, 10.0 * w.period()).unwrap();
        assert!((g.magnitude() - 0.190_985_93).abs() < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn periodicity(tp in 0.5f64..3.0, tm in 0.5f64..3.0, ti in -5.0f64..5.0, ts in prop::collection::vec(0.0f64..100.0, 16)) {
            let wf = Waveform::Dcs(DcsWaveform::new(1.7, tp, tm, 0.0, ti).unwrap());
            let tau = tp + tm;
            for t in ts {
                prop_assert_eq!(wf.value(t + tau), wf.value(t));
            }
        }

        #[test]
        fn bounded_by_omega(tp in 0.5f64..3.0, tm in 0.5f64..3.0, frac in 0.0f64..0.99, t in 0.0f64..50.0) {
            let ts = frac * tp.min(tm);
            let wf = Waveform::Dcs(DcsWaveform::new(1.7, tp, tm, ts, 0.3).unwrap());
            prop_assert!(wf.value(t).abs() <= 1.7 + 1e-12);
        }

        #[test]
        fn phase_additivity(t1 in 0.0f64..20.0, t2 in 0.0f64..20.0, frac in 0.0f64..0.9) {
            let w = DcsWaveform::new(0.8, 1.4, 0.9, frac * 0.9, -0.2).unwrap();
            let wf = Waveform::Dcs(w);
            let wn = 3.1;
            let segment: f64 = wf
                .pieces_until(t1 + t2)
                .into_iter()
                .filter(|(s, p)| *s + p.len > t1)
                .map(|(s, p)| {
                    let skip = (t1 - s).max(0.0);
                    wn * (p.len - skip) - (p.integral() - p.integral_to(skip))
                })
                .sum();
            let lhs = dynamic_phase(&wf, wn, t1 + t2);
            prop_assert!((lhs - (dynamic_phase(&wf, wn, t1) + segment)).abs() < 1e-9);
        }

        #[test]
        fn factorization(
            tp in 0.5f64..3.0,
            tm in 0.5f64..3.0,
            ti in -2.0f64..2.0,
            wn in 1.0f64..6.0,
            n in 1u64..40,
        ) {
            let w = DcsWaveform::new(0.7, tp, tm, 0.0, ti).unwrap();
            let wf = Waveform::Dcs(w);
            let g = coupling_factor(&wf, wn, n as f64 * w.period()).unwrap();
            let ej = g.eta.unwrap() * g.j.unwrap();
            prop_assert!(modulus(g.g - ej) < 1e-8);
            prop_assert!(g.magnitude() <= 1.0 + 1e-12);
        }

        #[test]
        fn j_magnitude_invariant_under_t_initial(tp in 0.5f64..3.0, tm in 0.5f64..3.0, shift in 0.0f64..1.0) {
            let w = DcsWaveform::new(0.4, tp, tm, 0.0, 0.0).unwrap();
            let wn = resonance_frequency(0.4, tp, tm, 1);
            let base = modulus(period_functional_j(&Waveform::Dcs(w), wn).unwrap());
            for ti in [-tp / 2.0, shift * w.period()] {
                let other = modulus(period_functional_j(&Waveform::Dcs(w.with_t_initial(ti).unwrap()), wn).unwrap());
                prop_assert!((other - base).abs() < 1e-9);
            }
        }

        #[test]
        fn closed_form_on_resonance_manifold(tp in 0.5f64..3.0, tm in 0.5f64..3.0, om in 0.05f64..0.6, k in 1i64..4) {
            let w = DcsWaveform::new(om, tp, tm, 0.0, -tp / 2.0).unwrap();
            let wn = resonance_frequency(om, tp, tm, k);
            prop_assume!((wn - om).abs() > 1e-3);
            let cf = closed_form_j_symmetric(om, wn, tp, tm, k).unwrap();
            let j = modulus(period_functional_j(&Waveform::Dcs(w), wn).unwrap());
            prop_assert!((j - cf.abs()).abs() <= 1e-8 * cf.abs().max(1e-6));
        }
    }
}
