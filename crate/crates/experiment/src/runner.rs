//! Sweep orchestration: turns a resolved config into result tables.

use std::f64::consts::TAU;

use dcs_core::dynamics::effective_flipflop_signal;
use dcs_core::protocols::{self, ElectronReset, ProtocolSpec};
use dcs_core::waveform::{self, DcsWaveform, Waveform};
use dcs_core::{InitialStateKind, IntegrationPolicy, SpinSystem};
use rayon::prelude::*;

use crate::config::{self, Axis, ProtocolConfig, ProtocolKind, ResolvedConfig, TuningMode, RAD_PER_KHZ, RAD_PER_MHZ};
use crate::error::{ExperimentError, Result};

/// One output file: the swept axis plus one column per protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    /// File stem, e.g. `sigma_z` or `polarization_1_delta_0.01`.
    pub name: String,
    pub observable: String,
    pub amplitude_error: Option<f64>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub config: ResolvedConfig,
    pub axis: Axis,
    /// Axis values in config units.
    pub axis_values: Vec<f64>,
    pub tables: Vec<Table>,
    /// Derived settings worth recording, e.g. located resonance frequencies.
    pub tunings: Vec<Tuning>,
}

/// Tuning a time-axis protocol actually ran at, in config units.
#[derive(Clone, Debug, PartialEq)]
pub struct Tuning {
    pub protocol: String,
    /// `nu_mhz` or `detuning_mhz`.
    pub quantity: &'static str,
    pub value: f64,
    pub amplitude_error: Option<f64>,
}

impl Tuning {
    pub fn describe(&self) -> String {
        match self.amplitude_error {
            Some(d) => format!("{}: {} = {} (delta = {d})", self.protocol, self.quantity, self.value),
            None => format!("{}: {} = {}", self.protocol, self.quantity, self.value),
        }
    }
}

impl RunOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Column `series` of the table holding `observable` at amplitude error `delta`.
    pub fn series(&self, observable: &str, delta: Option<f64>, series: &str) -> Option<&[f64]> {
        self.tables
            .iter()
            .find(|t| t.observable == observable && t.amplitude_error == delta)?
            .column(series)
    }

    pub fn grid_note(&self) -> String {
        let s = &self.config.sweep;
        format!(
            "{} points over [{}, {}] {} (step {})",
            s.points,
            s.start,
            s.stop,
            s.axis.column_name(),
            s.step()
        )
    }

    pub fn tuning(&self, protocol: &str, delta: Option<f64>) -> Option<f64> {
        self.tunings
            .iter()
            .find(|t| t.protocol == protocol && t.amplitude_error == delta)
            .map(|t| t.value)
    }
}

/// Runs the experiment, using `workers` threads when given and the global
/// pool otherwise.
pub fn run(config: &ResolvedConfig, workers: Option<usize>) -> Result<RunOutput> {
    match workers {
        None => run_inner(config),
        Some(0) => Err(ExperimentError::Config("--workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ExperimentError::Io(format!("thread pool: {e}")))?
            .install(|| run_inner(config)),
    }
}

fn run_inner(config: &ResolvedConfig) -> Result<RunOutput> {
    let axis_values = config.sweep.grid();
    let mut out = RunOutput {
        config: config.clone(),
        axis: config.sweep.axis,
        axis_values,
        tables: Vec::new(),
        tunings: Vec::new(),
    };
    if out.axis == Axis::OmegaNOverNu {
        out.tables.push(analytic(config, &out.axis_values)?);
        return Ok(out);
    }

    let system = config::build_system(config.system.as_ref().expect("resolved dynamic config has a system"))?;
    let policy = config::policy_of(&config.integration);
    let deltas: Vec<Option<f64>> = match &config.sweep.amplitude_errors {
        None => vec![None],
        Some(list) => list.iter().copied().map(Some).collect(),
    };
    for delta in deltas {
        let runs: Vec<ProtocolRun> = config
            .protocol
            .par_iter()
            .map(|p| run_protocol(&system, p, delta.unwrap_or(0.0), config, &out.axis_values, &policy))
            .collect::<Result<_>>()?;
        for r in &runs {
            if let Some((quantity, value)) = r.tuning {
                out.tunings.push(Tuning {
                    protocol: r.name.clone(),
                    quantity,
                    value,
                    amplitude_error: delta,
                });
            }
        }
        let mut observables: Vec<&str> = Vec::new();
        for r in &runs {
            for (o, _) in &r.columns {
                if !observables.contains(&o.as_str()) {
                    observables.push(o);
                }
            }
        }
        for o in observables {
            let columns = runs
                .iter()
                .filter_map(|r| {
                    r.columns
                        .iter()
                        .find(|(n, _)| n == o)
                        .map(|(_, v)| (r.name.clone(), v.clone()))
                })
                .collect();
            out.tables.push(Table {
                name: table_name(o, delta),
                observable: o.to_string(),
                amplitude_error: delta,
                columns,
            });
        }
    }
    Ok(out)
}

/// `polarization[1]` → `polarization_1`, with an amplitude-error suffix.
pub fn table_name(observable: &str, delta: Option<f64>) -> String {
    let mut stem: String = observable
        .chars()
        .filter_map(|c| match c {
            '[' => Some('_'),
            ']' => None,
            c if c.is_ascii_alphanumeric() || c == '_' => Some(c),
            _ => Some('_'),
        })
        .collect();
    if let Some(d) = delta {
        stem.push_str(&format!("_delta_{d}"));
    }
    stem
}

fn analytic(config: &ResolvedConfig, grid: &[f64]) -> Result<Table> {
    let p = &config.protocol[0];
    // only ratios matter; fix nu at 1 MHz
    let nu = RAD_PER_MHZ;
    let omega = p.omega_over_nu.unwrap_or(0.0) * nu;
    let base = DcsWaveform::optimal(omega, nu)?;
    let w = Waveform::Dcs(DcsWaveform::new(
        omega,
        base.tau_plus,
        base.tau_minus,
        p.tau_switch_fraction.unwrap_or(0.0) * base.tau_minus,
        p.t_initial_fraction.unwrap_or(-0.5) * base.tau_plus,
    )?);
    let total = config.sweep.periods.unwrap_or(1.0) * base.period();
    let rows: Vec<(f64, f64, f64)> = grid
        .par_iter()
        .map(|&x| {
            let cf = waveform::coupling_factor(&w, x * nu, total)?;
            Ok((cf.magnitude(), cf.g.re, cf.g.im))
        })
        .collect::<Result<_>>()?;
    Ok(Table {
        name: "coupling_factor".into(),
        observable: "coupling_factor".into(),
        amplitude_error: None,
        columns: vec![
            ("abs_g".into(), rows.iter().map(|r| r.0).collect()),
            ("re_g".into(), rows.iter().map(|r| r.1).collect()),
            ("im_g".into(), rows.iter().map(|r| r.2).collect()),
        ],
    })
}

struct ProtocolRun {
    name: String,
    columns: Vec<(String, Vec<f64>)>,
    tuning: Option<(&'static str, f64)>,
}

fn run_protocol(
    system: &SpinSystem<f64>,
    p: &ProtocolConfig,
    delta: f64,
    config: &ResolvedConfig,
    grid: &[f64],
    policy: &IntegrationPolicy<f64>,
) -> Result<ProtocolRun> {
    let spec = protocols::apply_amplitude_error(&config::protocol_spec(p)?, delta)?;
    let total = config.sweep.total_time_ms.unwrap_or(0.0) * 1e-3;
    let mut tuning_used = None;
    let columns = match config.sweep.axis {
        Axis::NuMhz | Axis::DetuningMhz => {
            let tunings: Vec<f64> = grid.iter().map(|v| v * RAD_PER_MHZ).collect();
            protocols::run_sweep(system, &spec, config.sweep.axis.column_name(), &tunings, total, policy)?.columns
        }
        Axis::MismatchKhz => {
            let wn = system.nuclear_frequency(0);
            let tunings: Vec<f64> = grid
                .par_iter()
                .map(|m| spec.tuning_for_frequency(wn + m * RAD_PER_KHZ))
                .collect::<dcs_core::Result<_>>()?;
            protocols::run_sweep(system, &spec, "mismatch_khz", &tunings, total, policy)?.columns
        }
        Axis::TimeMs => {
            let times: Vec<f64> = grid.iter().map(|t| t * 1e-3).collect();
            let tuning = time_axis_tuning(system, p, &spec, policy)?;
            tuning_used = match p.kind {
                ProtocolKind::Topdnp => Some(("detuning_mhz", tuning / RAD_PER_MHZ)),
                ProtocolKind::Constant => None,
                _ => Some(("nu_mhz", tuning / RAD_PER_MHZ)),
            };
            if p.kind == ProtocolKind::EffectiveFlipflop {
                effective_columns(system, p, delta, tuning, &times)
            } else {
                let reset = p.electron_reset_ms.map(|ms| ElectronReset { interval: ms * 1e-3 });
                protocols::run_time_trace(system, &spec, tuning, &times, policy, reset)?.columns
            }
        }
        Axis::OmegaNOverNu => unreachable!("handled by the analytic path"),
    };
    Ok(ProtocolRun {
        name: p.name.clone(),
        columns,
        tuning: tuning_used,
    })
}

fn time_axis_tuning(
    system: &SpinSystem<f64>,
    p: &ProtocolConfig,
    spec: &ProtocolSpec<f64>,
    policy: &IntegrationPolicy<f64>,
) -> Result<f64> {
    let explicit = match p.kind {
        ProtocolKind::Topdnp => p.detuning_mhz,
        ProtocolKind::Constant => Some(0.0),
        _ => p.nu_mhz,
    };
    if let Some(v) = explicit {
        return Ok(v * RAD_PER_MHZ);
    }
    let wn = system.nuclear_frequency(0);
    match p.tuning {
        Some(TuningMode::Nuclear) => Ok(spec.tuning_for_frequency(wn)?),
        Some(TuningMode::Dip) => {
            let sensing = ProtocolSpec {
                initial_state: InitialStateKind::Sensing,
                measured: vec!["sigma_z".into()],
                ..spec.clone()
            };
            let half = p.dip_window_khz.unwrap_or(3.0) * RAD_PER_KHZ;
            let t = p.dip_time_ms.unwrap_or(0.0) * 1e-3;
            // 1 Hz resolution
            Ok(protocols::locate_dip(system, &sensing, wn - half, wn + half, t, policy, TAU)?)
        }
        None => Err(ExperimentError::Config(format!("protocol '{}' has no tuning", p.name))),
    }
}

fn effective_columns(
    system: &SpinSystem<f64>,
    p: &ProtocolConfig,
    delta: f64,
    nu: f64,
    times: &[f64],
) -> Vec<(String, Vec<f64>)> {
    let omega = p.omega_max_mhz.unwrap_or(0.0) * RAD_PER_MHZ * (1.0 + delta);
    let a_x = system.nuclei[0].hyperfine_x;
    p.measured
        .iter()
        .flatten()
        .map(|m| {
            let v = times
                .iter()
                .map(|&t| {
                    let cos2 = effective_flipflop_signal(omega, nu, a_x, t);
                    if m == "sigma_z" {
                        cos2
                    } else {
                        1.0 - cos2
                    }
                })
                .collect();
            (m.clone(), v)
        })
        .collect()
}
