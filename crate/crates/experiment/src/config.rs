//! Experiment configuration: TOML schema, defaults and unit conversion.
//!
//! Frequencies are written in linear units (`*_mhz`, `*_khz`) and converted
//! to angular frequency on ingest; times are `*_ms` / `*_ns`. A config is
//! either `preset = "<name>"` (optionally with an `[output]` table) or the
//! explicit `[system]`, `[[protocol]]`, `[sweep]`, `[integration]` and
//! `[output]` blocks. See `presets/*.toml` for annotated examples.

use std::collections::HashSet;
use std::f64::consts::TAU;
use std::path::Path;

use dcs_core::protocols::{self, Drive, ProtocolSpec};
use dcs_core::{InitialStateKind, IntegrationPolicy, Nucleus, SpinSystem};
use serde::{Deserialize, Serialize};

use crate::error::{ExperimentError, Result};
use crate::presets;

pub const RAD_PER_MHZ: f64 = TAU * 1e6;
pub const RAD_PER_KHZ: f64 = TAU * 1e3;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub protocol: Vec<ProtocolConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integration: Option<IntegrationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub field_tesla: f64,
    #[serde(default)]
    pub nuclei: Vec<NucleusConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NucleusConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub species: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_mhz_per_tesla: Option<f64>,
    pub hyperfine_x_khz: f64,
    pub hyperfine_z_khz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Dcs,
    Pm,
    Topdnp,
    Constant,
    /// Closed-form leading-order flip-flop signal, for overlaying on DCS.
    EffectiveFlipflop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningMode {
    /// Resonance placed on the first nucleus' frequency.
    Nuclear,
    /// Full-dynamics dip located near the first nucleus' frequency.
    Dip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub name: String,
    pub kind: ProtocolKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_max_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_switch_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_initial_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_over_nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega0_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega1_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rabi_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_len_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_e_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<InitialStateKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuningMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dip_time_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dip_window_khz: Option<f64>,
    /// Electron re-initialisation interval for time traces (off by default).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub electron_reset_ms: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    NuMhz,
    DetuningMhz,
    MismatchKhz,
    TimeMs,
    OmegaNOverNu,
}

impl Axis {
    pub fn column_name(self) -> &'static str {
        match self {
            Axis::NuMhz => "nu_mhz",
            Axis::DetuningMhz => "detuning_mhz",
            Axis::MismatchKhz => "mismatch_khz",
            Axis::TimeMs => "time_ms",
            Axis::OmegaNOverNu => "omega_n_over_nu",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: Axis,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_time_ms: Option<f64>,
    /// Total time in periods of the waveform (analytic axis only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<f64>,
    /// Runs the whole sweep once per listed amplitude error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude_errors: Option<Vec<f64>>,
}

impl SweepConfig {
    /// `start + (stop − start)·i/(points − 1)` in config units.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    self.stop
                } else {
                    self.start + (self.stop - self.start) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }

    pub fn step(&self) -> f64 {
        (self.stop - self.start) / (self.points - 1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp_substeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unitarity_check_interval: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    /// Upper bound on the spacing of a time axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_every_ms: Option<f64>,
}

/// A validated config with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemConfig>,
    pub protocol: Vec<ProtocolConfig>,
    pub sweep: SweepConfig,
    pub integration: IntegrationConfig,
    pub output: OutputConfig,
}

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| config_err(e.to_string()))
}

/// Reads, parses and resolves a config file.
pub fn load_config(path: &Path) -> Result<ResolvedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    resolve(parse_config(&text)?)
}

/// Expands a preset, applies defaults and validates.
pub fn resolve(config: ExperimentConfig) -> Result<ResolvedConfig> {
    if let Some(name) = &config.preset {
        if config.system.is_some()
            || !config.protocol.is_empty()
            || config.sweep.is_some()
            || config.integration.is_some()
        {
            return Err(config_err(
                "a config sets either `preset` or the explicit system/protocol/sweep/integration blocks, not both",
            ));
        }
        let text = presets::preset_text(name).ok_or_else(|| {
            config_err(format!(
                "unknown preset '{name}' (known: {})",
                presets::names().join(", ")
            ))
        })?;
        let mut expanded = parse_config(text)?;
        expanded.preset = None;
        if let Some(out) = config.output {
            let base = expanded.output.get_or_insert_with(OutputConfig::default);
            if out.directory.is_some() {
                base.directory = out.directory;
            }
            if out.sample_every_ms.is_some() {
                base.sample_every_ms = out.sample_every_ms;
            }
        }
        return resolve_explicit(name.clone(), expanded);
    }
    resolve_explicit("custom".into(), config)
}

fn resolve_explicit(name: String, config: ExperimentConfig) -> Result<ResolvedConfig> {
    let mut sweep = config.sweep.ok_or_else(|| config_err("missing [sweep] block"))?;
    if config.protocol.is_empty() {
        return Err(config_err("at least one [[protocol]] block is required"));
    }
    validate_sweep(&sweep)?;
    let mut output = config.output.unwrap_or_default();
    if output.directory.is_none() {
        output.directory = Some(format!("out/{name}"));
    }
    if let Some(s) = output.sample_every_ms {
        if !(s > 0.0) {
            return Err(config_err("output.sample_every_ms: must be positive"));
        }
        if sweep.axis == Axis::TimeMs {
            let needed = ((sweep.stop - sweep.start) / s - 1e-9).ceil() as usize + 1;
            sweep.points = sweep.points.max(needed);
        }
    }
    let integration = resolve_integration(config.integration)?;

    let analytic = sweep.axis == Axis::OmegaNOverNu;
    let system = match (config.system, analytic) {
        (Some(s), _) => Some(s),
        (None, true) => None,
        (None, false) => return Err(config_err("missing [system] block")),
    };
    let core_system = system.as_ref().map(build_system).transpose()?;

    let mut names = HashSet::new();
    let mut protocol = Vec::with_capacity(config.protocol.len());
    for (i, p) in config.protocol.into_iter().enumerate() {
        let path = format!("protocol[{i}]");
        if p.name.trim().is_empty() {
            return Err(config_err(format!("{path}.name: must not be empty")));
        }
        if !names.insert(p.name.clone()) {
            return Err(config_err(format!("{path}.name: duplicate protocol name '{}'", p.name)));
        }
        protocol.push(resolve_protocol(&path, p, &sweep, core_system.as_ref())?);
    }
    if analytic && protocol.len() != 1 {
        return Err(config_err("sweep.axis = omega_n_over_nu takes exactly one dcs protocol"));
    }
    Ok(ResolvedConfig {
        name,
        system,
        protocol,
        sweep,
        integration,
        output,
    })
}

fn validate_sweep(s: &SweepConfig) -> Result<()> {
    if s.points < 2 {
        return Err(config_err("sweep.points: must be at least 2"));
    }
    if !(s.start.is_finite() && s.stop.is_finite()) || s.stop <= s.start {
        return Err(config_err("sweep.start/stop: need finite start < stop"));
    }
    match s.axis {
        Axis::TimeMs => {
            if s.start < 0.0 {
                return Err(config_err("sweep.start: times must be non-negative"));
            }
        }
        Axis::OmegaNOverNu => {
            if !s.periods.is_some_and(|p| p > 0.0) {
                return Err(config_err("sweep.periods: required and positive for omega_n_over_nu"));
            }
        }
        _ => {
            if !s.total_time_ms.is_some_and(|t| t > 0.0) {
                return Err(config_err("sweep.total_time_ms: required and positive for this axis"));
            }
        }
    }
    if let Some(list) = &s.amplitude_errors {
        if list.is_empty() || list.iter().any(|d| !(*d > -1.0)) {
            return Err(config_err("sweep.amplitude_errors: need a non-empty list of values > -1"));
        }
    }
    Ok(())
}

fn resolve_integration(c: Option<IntegrationConfig>) -> Result<IntegrationConfig> {
    let d = IntegrationPolicy::<f64>::default();
    let c = c.unwrap_or(IntegrationConfig {
        max_step_ns: None,
        ramp_substeps: None,
        unitarity_check_interval: None,
        tolerance: None,
    });
    let out = IntegrationConfig {
        max_step_ns: Some(c.max_step_ns.unwrap_or(d.max_step * 1e9)),
        ramp_substeps: Some(c.ramp_substeps.unwrap_or(d.ramp_substeps)),
        unitarity_check_interval: Some(c.unitarity_check_interval.unwrap_or(d.unitarity_check_interval)),
        tolerance: Some(c.tolerance.unwrap_or(d.tolerance)),
    };
    policy_of(&out)
        .validate()
        .map_err(|e| config_err(format!("integration: {e}")))?;
    Ok(out)
}

pub fn policy_of(c: &IntegrationConfig) -> IntegrationPolicy<f64> {
    let d = IntegrationPolicy::<f64>::default();
    IntegrationPolicy {
        max_step: c.max_step_ns.map_or(d.max_step, |v| v * 1e-9),
        ramp_substeps: c.ramp_substeps.unwrap_or(d.ramp_substeps),
        unitarity_check_interval: c.unitarity_check_interval.unwrap_or(d.unitarity_check_interval),
        tolerance: c.tolerance.unwrap_or(d.tolerance),
        power_periods: true,
    }
}

pub fn build_system(s: &SystemConfig) -> Result<SpinSystem<f64>> {
    if !s.field_tesla.is_finite() {
        return Err(config_err("system.field_tesla: must be finite"));
    }
    let mut nuclei = Vec::with_capacity(s.nuclei.len());
    for (i, n) in s.nuclei.iter().enumerate() {
        let path = format!("system.nuclei[{i}]");
        let ax = n.hyperfine_x_khz * RAD_PER_KHZ;
        let az = n.hyperfine_z_khz * RAD_PER_KHZ;
        let nucleus = match (&n.species, n.gamma_mhz_per_tesla) {
            (Some(sp), None) => Nucleus::of_species(sp, ax, az),
            (None, Some(g)) => Nucleus::new(n.label.clone().unwrap_or_else(|| format!("n{}", i + 1)), g * RAD_PER_MHZ, ax, az),
            _ => {
                return Err(config_err(format!(
                    "{path}: give exactly one of `species` or `gamma_mhz_per_tesla`"
                )))
            }
        }
        .map_err(|e| config_err(format!("{path}: {e}")))?;
        let nucleus = match &n.label {
            Some(l) => Nucleus { label: l.clone(), ..nucleus },
            None => nucleus,
        };
        nuclei.push(nucleus);
    }
    Ok(SpinSystem::new(s.field_tesla, nuclei))
}

fn require(path: &str, field: &str, v: Option<f64>) -> Result<f64> {
    match v {
        Some(x) if x.is_finite() => Ok(x),
        Some(_) => Err(config_err(format!("{path}.{field}: must be finite"))),
        None => Err(config_err(format!("{path}.{field}: required for this protocol kind"))),
    }
}

fn resolve_protocol(
    path: &str,
    mut p: ProtocolConfig,
    sweep: &SweepConfig,
    system: Option<&SpinSystem<f64>>,
) -> Result<ProtocolConfig> {
    match p.kind {
        ProtocolKind::Dcs | ProtocolKind::EffectiveFlipflop => {
            if sweep.axis == Axis::OmegaNOverNu {
                let r = require(path, "omega_over_nu", p.omega_over_nu)?;
                if !(r > 0.0 && r < 1.0) {
                    return Err(config_err(format!("{path}.omega_over_nu: must lie in (0, 1)")));
                }
            } else {
                require(path, "omega_max_mhz", p.omega_max_mhz)?;
            }
            p.tau_switch_fraction.get_or_insert(0.0);
            p.t_initial_fraction.get_or_insert(-0.5);
        }
        ProtocolKind::Pm => {
            require(path, "omega0_mhz", p.omega0_mhz)?;
            require(path, "omega1_mhz", p.omega1_mhz)?;
        }
        ProtocolKind::Topdnp => {
            require(path, "rabi_mhz", p.rabi_mhz)?;
            require(path, "pulse_len_ns", p.pulse_len_ns)?;
            require(path, "delay_ns", p.delay_ns)?;
        }
        ProtocolKind::Constant => {
            require(path, "omega_e_mhz", p.omega_e_mhz)?;
        }
    }
    if sweep.axis == Axis::OmegaNOverNu {
        if p.kind != ProtocolKind::Dcs {
            return Err(config_err(format!("{path}.kind: the analytic axis needs a dcs protocol")));
        }
        return Ok(p);
    }
    p.initial_state.get_or_insert(match p.kind {
        ProtocolKind::Topdnp => InitialStateKind::TopdnpParallel,
        _ => InitialStateKind::Sensing,
    });
    p.measured.get_or_insert_with(|| vec!["sigma_z".into()]);
    p.amplitude_error.get_or_insert(0.0);

    let spec = protocol_spec(&p).map_err(|e| config_err(format!("{path}: {e}")))?;
    let system = system.expect("system present for dynamic axes");
    if p.kind == ProtocolKind::EffectiveFlipflop {
        if sweep.axis != Axis::TimeMs {
            return Err(config_err(format!("{path}.kind: effective_flipflop is a time-axis overlay")));
        }
        for m in p.measured.as_deref().unwrap_or_default() {
            if m != "sigma_z" && m != "polarization[1]" {
                return Err(config_err(format!(
                    "{path}.measured: effective_flipflop provides sigma_z and polarization[1] only"
                )));
            }
        }
        if system.nuclei.is_empty() {
            return Err(config_err(format!("{path}: effective_flipflop needs a nucleus")));
        }
    }
    for m in &spec.measured {
        protocols::resolve_observable(system, m).map_err(|e| config_err(format!("{path}.measured: {e}")))?;
    }

    match sweep.axis {
        Axis::DetuningMhz if p.kind != ProtocolKind::Topdnp => {
            return Err(config_err(format!("{path}.kind: the detuning axis applies to topdnp only")));
        }
        Axis::NuMhz if p.kind == ProtocolKind::Topdnp => {
            return Err(config_err(format!("{path}.kind: sweep topdnp over detuning_mhz or mismatch_khz")));
        }
        Axis::MismatchKhz | Axis::TimeMs if system.nuclei.is_empty() => {
            return Err(config_err("system: this axis is measured against the first nucleus"));
        }
        Axis::TimeMs => {
            let fixed = match p.kind {
                ProtocolKind::Topdnp => p.detuning_mhz.is_some(),
                ProtocolKind::Constant => true,
                _ => p.nu_mhz.is_some(),
            };
            if !fixed && p.tuning.is_none() {
                return Err(config_err(format!(
                    "{path}: a time axis needs `tuning` or an explicit nu_mhz / detuning_mhz"
                )));
            }
            if p.tuning == Some(TuningMode::Dip) && p.kind == ProtocolKind::Topdnp {
                return Err(config_err(format!("{path}.tuning: dip search applies to dcs/pm")));
            }
            if p.tuning == Some(TuningMode::Dip) {
                p.dip_window_khz.get_or_insert(3.0);
                p.dip_time_ms.get_or_insert(sweep.stop);
            }
        }
        _ => {}
    }
    if let Some(r) = p.electron_reset_ms {
        if sweep.axis != Axis::TimeMs || !(r > 0.0) {
            return Err(config_err(format!(
                "{path}.electron_reset_ms: positive, and only on a time axis"
            )));
        }
    }
    Ok(p)
}

/// Core protocol description of a resolved protocol block.
pub fn protocol_spec(p: &ProtocolConfig) -> dcs_core::Result<ProtocolSpec<f64>> {
    let drive = match p.kind {
        ProtocolKind::Dcs | ProtocolKind::EffectiveFlipflop => Drive::Dcs {
            omega_max: p.omega_max_mhz.unwrap_or(0.0) * RAD_PER_MHZ,
            tau_switch_fraction: p.tau_switch_fraction.unwrap_or(0.0),
            t_initial_fraction: p.t_initial_fraction.unwrap_or(-0.5),
        },
        ProtocolKind::Pm => Drive::Pm {
            omega0: p.omega0_mhz.unwrap_or(0.0) * RAD_PER_MHZ,
            omega1: p.omega1_mhz.unwrap_or(0.0) * RAD_PER_MHZ,
        },
        ProtocolKind::Topdnp => Drive::Topdnp {
            rabi: p.rabi_mhz.unwrap_or(0.0) * RAD_PER_MHZ,
            pulse_len: p.pulse_len_ns.unwrap_or(0.0) * 1e-9,
            delay: p.delay_ns.unwrap_or(0.0) * 1e-9,
        },
        ProtocolKind::Constant => Drive::Constant {
            omega_e: p.omega_e_mhz.unwrap_or(0.0) * RAD_PER_MHZ,
        },
    };
    let mut spec = ProtocolSpec::new(
        drive,
        p.initial_state.unwrap_or(InitialStateKind::Sensing),
        p.measured.clone().unwrap_or_else(|| vec!["sigma_z".into()]),
    )?;
    spec = protocols::apply_amplitude_error(&spec, p.amplitude_error.unwrap_or(0.0))?;
    Ok(spec)
}
