//! Per-preset checks on a finished run.

use std::f64::consts::PI;

use dcs_core::dynamics::effective_flipflop_signal;

use crate::config::{self, RAD_PER_KHZ, RAD_PER_MHZ};
use crate::error::{ExperimentError, Result};
use crate::presets;
use crate::runner::{self, RunOutput};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance bound, e.g. `< 0.02`.
    pub bound: String,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub preset: String,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "{} {}: {} = {:.6e} (want {})\n",
                if c.pass { "PASS" } else { "FAIL" },
                self.preset,
                c.name,
                c.value,
                c.bound
            ));
        }
        s
    }

    fn push(&mut self, name: impl Into<String>, value: f64, bound: impl Into<String>, pass: bool) {
        self.checks.push(Check {
            name: name.into(),
            value,
            bound: bound.into(),
            pass,
        });
    }
}

/// Runs `preset` and evaluates its checks.
pub fn verify(preset: &str, workers: Option<usize>) -> Result<Report> {
    let cfg = config::resolve(config::ExperimentConfig {
        preset: Some(preset.to_string()),
        ..Default::default()
    })?;
    let out = runner::run(&cfg, workers)?;
    evaluate(preset, &out)
}

fn missing(what: &str) -> ExperimentError {
    ExperimentError::Verification(format!("run output lacks {what}"))
}

fn col<'a>(out: &'a RunOutput, observable: &str, delta: Option<f64>, series: &str) -> Result<&'a [f64]> {
    out.series(observable, delta, series)
        .ok_or_else(|| missing(&format!("series '{series}' of {observable}")))
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i)
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i)
}

fn nearest(grid: &[f64], x: f64) -> usize {
    argmin(&grid.iter().map(|g| (g - x).abs()).collect::<Vec<_>>())
}

fn min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Vertex of the parabola through the grid maximum of `|v|` and its neighbours.
pub fn peak_center(grid: &[f64], v: &[f64]) -> f64 {
    let a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    let k = argmax(&a);
    if k == 0 || k + 1 == a.len() {
        return grid[k];
    }
    let (y0, y1, y2) = (a[k - 1], a[k], a[k + 1]);
    let h = grid[k + 1] - grid[k];
    let denom = y0 - 2.0 * y1 + y2;
    if denom == 0.0 {
        return grid[k];
    }
    grid[k] + 0.5 * h * (y0 - y2) / denom
}

/// Evaluates the checks for `preset` against a finished run.
pub fn evaluate(preset: &str, out: &RunOutput) -> Result<Report> {
    let mut r = Report {
        preset: preset.to_string(),
        checks: Vec::new(),
    };
    let x = &out.axis_values;
    let cfg = &out.config;
    match preset {
        "fig1f" => {
            let g = out
                .table("coupling_factor")
                .and_then(|t| t.column("abs_g"))
                .ok_or_else(|| missing("abs_g"))?;
            let ratio = cfg.protocol[0].omega_over_nu.unwrap_or(0.0);
            let expected = 2.0 * ratio / PI;
            let got = g[nearest(x, 1.0)];
            let rel = (got / expected - 1.0).abs();
            r.push("|g| at omega_n = nu, relative error to 2 Omega/(pi nu)", rel, "< 0.01", rel < 0.01);
            let n = cfg.sweep.periods.unwrap_or(1.0);
            for side in [-1.0, 1.0] {
                let v = g[nearest(x, 1.0 + side / n)];
                r.push(format!("|g| at omega_n/nu = 1 {} 1/N", if side < 0.0 { "-" } else { "+" }), v, "< 0.02", v < 0.02);
            }
            // |J| still rises slightly with omega_n at nu, so the sampled
            // maximum may sit one row above 1
            let peak = x[argmax(g)];
            let step = cfg.sweep.step();
            r.push("peak row omega_n/nu", peak, format!("1 +- {step}"), (peak - 1.0).abs() <= step * (1.0 + 1e-9));
        }
        "fig2a" | "fig2c" => {
            let dcs = col(out, "sigma_z", None, "dcs")?;
            let pm = col(out, "sigma_z", None, "pm")?;
            let dip = x[argmin(dcs)];
            let off = (dip - 10.713).abs() * 1e3;
            r.push("DCS dip distance from 10.713 MHz [kHz]", off, "<= 0.8", off <= 0.8);
            let (cd, cp) = (1.0 - min(dcs), 1.0 - min(pm));
            r.push("DCS contrast minus PM contrast", cd - cp, "> 0", cd > cp);
        }
        "fig2b" | "fig2d" => {
            let dcs = col(out, "sigma_z", None, "dcs")?;
            let pm = col(out, "sigma_z", None, "pm")?;
            let nu = out.tuning("dcs", None).ok_or_else(|| missing("the DCS tuning"))? * RAD_PER_MHZ;
            let p = &cfg.protocol[0];
            let omega = p.omega_max_mhz.unwrap_or(0.0) * RAD_PER_MHZ;
            let a_x = cfg.system.as_ref().map_or(0.0, |s| s.nuclei[0].hyperfine_x_khz) * RAD_PER_KHZ;
            let worst = x
                .iter()
                .zip(dcs)
                .map(|(t, v)| (v - effective_flipflop_signal(omega, nu, a_x, t * 1e-3)).abs())
                .fold(0.0, f64::max);
            r.push("max |<sigma_z> - cos^2(cT)|", worst, "< 0.02", worst < 0.02);
            let at = effective_flipflop_signal(omega, nu, a_x, 0.308e-3);
            r.push("cos^2(cT) at T = 0.308 ms", at, "0.858 +- 0.001", (at - 0.858).abs() < 1e-3);
            let (cd, cp) = (1.0 - min(dcs), 1.0 - min(pm));
            r.push("DCS contrast minus PM contrast", cd - cp, "> 0", cd > cp);
        }
        "fig3a" | "fig3b" | "fig3c" | "fig3d" => {
            let obs = "polarization[1]";
            let dcs = max_abs(col(out, obs, None, "dcs")?);
            let top = max_abs(col(out, obs, None, "topdnp_parallel")?).max(max_abs(col(out, obs, None, "topdnp_perpendicular")?));
            r.push("max |P| DCS minus max |P| TOP-DNP", dcs - top, "> 0", dcs > top);
        }
        "fig4a" => {
            let obs = "polarization[1]";
            let k = nearest(x, 0.0);
            let dcs = col(out, obs, None, "dcs")?[k];
            let ramped = col(out, obs, None, "dcs_ramped")?[k];
            let rel = (ramped / dcs - 1.0).abs();
            r.push("ramped / shifted-start DCS relative change on resonance", rel, "< 0.05", rel < 0.05);
            for other in ["pm", "topdnp"] {
                let v = col(out, obs, None, other)?[k];
                r.push(format!("on-resonance |P| DCS minus {other}"), dcs.abs() - v.abs(), "> 0", dcs.abs() > v.abs());
            }
        }
        "fig4b" => {
            let obs = "polarization[1]";
            let k = nearest(x, 0.0);
            let deltas = cfg.sweep.amplitude_errors.clone().unwrap_or_default();
            let (d0, d1) = match deltas.as_slice() {
                [a, b, ..] => (Some(*a), Some(*b)),
                _ => return Err(missing("two amplitude errors")),
            };
            let change = |s: &str| -> Result<f64> { Ok((col(out, obs, d1, s)?[k] - col(out, obs, d0, s)?[k]).abs()) };
            let dcs = change("dcs")?;
            r.push("on-resonance |dP| DCS", dcs, "informational", true);
            for other in ["pm", "topdnp"] {
                let v = change(other)?;
                r.push(format!("on-resonance |dP| DCS minus {other}"), dcs - v, "< 0", dcs < v);
            }
            let shift = peak_center(x, col(out, obs, d1, "dcs")?) - peak_center(x, col(out, obs, d0, "dcs")?);
            let sys = config::build_system(cfg.system.as_ref().ok_or_else(|| missing("a system"))?)?;
            let omega = cfg.protocol[0].omega_max_mhz.unwrap_or(0.0) * RAD_PER_MHZ;
            let delta = d1.unwrap_or(0.0) - d0.unwrap_or(0.0);
            let predicted = omega / sys.nuclear_frequency(0) * delta * omega / RAD_PER_KHZ;
            let rel = (shift.abs() / predicted - 1.0).abs();
            r.push("DCS peak shift relative error to r_D delta Omega", rel, "< 0.2", rel < 0.2);
        }
        other => {
            return Err(ExperimentError::Config(format!(
                "unknown preset '{other}' (known: {})",
                presets::names().join(", ")
            )))
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola_vertex() {
        let grid: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let v: Vec<f64> = grid.iter().map(|g| 1.0 - (g - 0.537f64).powi(2)).collect();
        assert!((peak_center(&grid, &v) - 0.537).abs() < 1e-12);
    }

    #[test]
    fn fig1f_passes() {
        let report = verify("fig1f", None).unwrap();
        assert!(report.passed(), "{}", report.render());
        assert_eq!(report.checks.len(), 4);
    }
}
