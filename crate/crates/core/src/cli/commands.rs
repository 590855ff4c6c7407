use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::cli::config::Scenario;
use crate::cli::plot::trajectory_plots;
use crate::delayform::{residual_check_control, residual_check_observer, ResidualOptions};
use crate::error::{Error, Result};
use crate::kernels::{export_kernels, KernelBundle, TriGrid};
use crate::model::{check_assumption1, Assumption1Report};
use crate::sim::{fit_decay, fit_decay_series, run_closed_loop, Mode, SimConfig, Trajectory};
use crate::synthesis::{
    design_filter, stage, FullSynthesis, LowPassFilter, Staged, SweepPoint, SynthesisResult, DECAY_FACTOR,
};

pub const EXIT_OK: i32 = 0;
/// An assumption or certificate failed.
pub const EXIT_FAILED: i32 = 1;
/// Malformed configuration or arguments.
pub const EXIT_CONFIG: i32 = 2;
/// The simulation diverged.
pub const EXIT_DIVERGED: i32 = 3;

/// Largest delay-form residual accepted by `synthesize`.
pub const RESIDUAL_THRESHOLD: f64 = 5e-3;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Invalid(_) | Error::Json(_) | Error::InvalidModel(_) | Error::Precondition(_) | Error::Dimension(_) => {
            EXIT_CONFIG
        }
        _ => EXIT_FAILED,
    }
}

/// What a command produced: its exit code, a JSON report and the files written.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: i32,
    pub report: serde_json::Value,
    pub artifacts: Vec<PathBuf>,
}

impl Outcome {
    pub fn from_error(err: &Error) -> Self {
        Self {
            code: exit_code(err),
            report: json!({ "error": err.to_string() }),
            artifacts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub pass: bool,
    pub margin: f64,
    /// Spectral abscissa of the designed closed-loop matrix, when the design succeeded.
    pub abscissa: Option<f64>,
    /// `[re, im]` of the offending eigenvalues, when it failed.
    pub eigenvalues: Vec<[f64; 2]>,
    pub message: Option<String>,
}

impl AssumptionCheck {
    fn new<T>(design: &Result<T>, margin: f64, abscissa: impl Fn(&T) -> f64) -> Self {
        match design {
            Ok(d) => Self {
                pass: true,
                margin,
                abscissa: Some(abscissa(d)),
                eigenvalues: Vec::new(),
                message: None,
            },
            Err(e) => Self {
                pass: false,
                margin,
                abscissa: None,
                eigenvalues: match e {
                    Error::Unstabilizable { eigenvalues } => eigenvalues.iter().map(|z| [z.re, z.im]).collect(),
                    _ => Vec::new(),
                },
                message: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidateReport {
    pub scenario: String,
    pub pass: bool,
    pub assumption1: Assumption1Report,
    pub assumption2: AssumptionCheck,
    pub assumption3: AssumptionCheck,
}

/// `$HYPERSTAB_CACHE` if set, else `<outputs>/cache`.
pub fn cache_dir(scn: &Scenario) -> PathBuf {
    std::env::var_os("HYPERSTAB_CACHE")
        .map(PathBuf::from)
        .unwrap_or_else(|| scn.outputs.join("cache"))
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Checks all three assumptions, keeping the staged synthesis for later commands.
pub fn check_assumptions(scn: &Scenario, cache: Option<&Path>) -> Result<(ValidateReport, Staged)> {
    let a1 = check_assumption1(&scn.model, scn.config.synthesis.theta_points)?;
    let opts = scn.options();
    let bundle = KernelBundle::solve_cached(&scn.model, TriGrid::new(opts.n_grid)?, cache)?;
    let staged = stage(&scn.model, opts, bundle)?;
    let a2 = AssumptionCheck::new(&staged.observer, opts.observer_margin, |o| o.abscissa);
    let a3 = AssumptionCheck::new(&staged.controller, opts.control_margin, |c| c.abscissa);
    let report = ValidateReport {
        scenario: scn.name.clone(),
        pass: a1.pass && a2.pass && a3.pass,
        assumption1: a1,
        assumption2: a2,
        assumption3: a3,
    };
    Ok((report, staged))
}

pub fn cmd_validate(scn: &Scenario, cache: Option<&Path>) -> Outcome {
    let run = || -> Result<Outcome> {
        let (report, _) = check_assumptions(scn, cache)?;
        fs::create_dir_all(&scn.outputs)?;
        let path = scn.outputs.join("validate.json");
        write_json(&path, &report)?;
        Ok(Outcome {
            code: if report.pass { EXIT_OK } else { EXIT_FAILED },
            report: serde_json::to_value(&report)?,
            artifacts: vec![path],
        })
    };
    run().unwrap_or_else(|e| Outcome::from_error(&e))
}

/// The filter given in the scenario, or the result of the cutoff sweep.
fn resolve_filter(scn: &Scenario, syn: &FullSynthesis) -> Result<(LowPassFilter, Vec<SweepPoint>)> {
    match scn.config.sim.filter {
        Some(f) => Ok((f, Vec::new())),
        None => {
            let s = &scn.config.synthesis;
            design_filter(syn, &scn.config.sim, s.filter_omega0, s.filter_doublings)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub residual_observer: f64,
    pub residual_control: f64,
    pub threshold: f64,
    pub pass: bool,
}

pub fn residual_certificate(syn: &FullSynthesis, seed: u64) -> Result<Certificate> {
    let obs = residual_check_observer(
        &syn.observer_form,
        &syn.model,
        &syn.coupling,
        ResidualOptions::for_horizon(syn.observer_form.horizon, seed),
    )?;
    let ctl = residual_check_control(
        &syn.control_form,
        &syn.model,
        &syn.coupling,
        &syn.control_kernels,
        ResidualOptions::for_horizon(syn.control_form.horizon, seed),
    )?;
    Ok(Certificate {
        residual_observer: obs,
        residual_control: ctl,
        threshold: RESIDUAL_THRESHOLD,
        pass: obs <= RESIDUAL_THRESHOLD && ctl <= RESIDUAL_THRESHOLD,
    })
}

fn relative(files: &[PathBuf], base: &Path) -> Vec<String> {
    files
        .iter()
        .map(|p| p.strip_prefix(base).unwrap_or(p).to_string_lossy().into_owned())
        .collect()
}

pub fn cmd_synthesize(scn: &Scenario, cache: Option<&Path>) -> Outcome {
    let run = || -> Result<Outcome> {
        let (report, staged) = check_assumptions(scn, cache)?;
        if !report.pass {
            return Ok(Outcome {
                code: EXIT_FAILED,
                report: json!({ "validate": report }),
                artifacts: Vec::new(),
            });
        }
        let out = &scn.outputs;
        let mut artifacts = export_kernels(&out.join("kernels"), &staged.bundle)?;
        let kernel_csvs = relative(&artifacts, out);
        let forms = out.join("delayform");
        fs::create_dir_all(&forms)?;
        let of = &staged.observer_form;
        let cf = &staged.control_form;
        for (name, op) in [
            ("observer_f_alpha", &of.f_alpha),
            ("observer_f_xi", &of.f_xi),
            ("observer_f_x", &of.f_x),
            ("observer_f_u", &of.f_u),
            ("control_p_alpha", &cf.p_alpha),
            ("control_p_xi", &cf.p_xi),
            ("control_p_x", &cf.p_x),
        ] {
            let p = forms.join(format!("{name}.csv"));
            op.write_csv(&p)?;
            artifacts.push(p);
        }
        let syn = staged.finish(&scn.model, scn.options())?;
        artifacts.extend(SynthesisResult::write_operator_csvs(&syn, out)?);
        let cert = residual_certificate(&syn, scn.config.sim.seed)?;
        let p = out.join("certificate.json");
        write_json(&p, &cert)?;
        artifacts.push(p);
        let (filter, sweep) = resolve_filter(scn, &syn)?;
        let result = SynthesisResult::new(&syn, Some((filter, sweep)), kernel_csvs);
        let p = out.join("synthesis.json");
        fs::write(&p, result.to_json_string() + "\n")?;
        artifacts.push(p);
        Ok(Outcome {
            code: if cert.pass { EXIT_OK } else { EXIT_FAILED },
            report: json!({
                "validate": report,
                "certificate": cert,
                "filter": result.filter,
                "artifacts": relative(&artifacts, out),
            }),
            artifacts,
        })
    };
    run().unwrap_or_else(|e| Outcome::from_error(&e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub mode: String,
    pub diverged: bool,
    /// `χ` ended above where it started.
    pub growing: bool,
    pub chi_initial: f64,
    pub chi_final: f64,
    pub ratio: f64,
    /// Least-squares `(rate, r²)` of `ln χ` past `t = τ`.
    pub fit: Option<(f64, f64)>,
    /// Same for the observer error, when it ran.
    pub error_fit: Option<(f64, f64)>,
    pub filter: Option<LowPassFilter>,
}

impl DecayReport {
    pub fn new(traj: &Trajectory, tau: f64, filter: Option<LowPassFilter>) -> Self {
        let chi = traj.chi_state();
        let (first, last) = (chi[0], chi[chi.len() - 1]);
        let err = traj.chi_error();
        Self {
            mode: traj.mode.as_str().into(),
            diverged: traj.diverged,
            growing: !(last <= first),
            chi_initial: first,
            chi_final: last,
            ratio: last / first,
            fit: fit_decay(traj, tau).ok(),
            error_fit: err
                .iter()
                .any(|e| e.is_finite())
                .then(|| fit_decay_series(&traj.times(), &err, tau).ok())
                .flatten(),
            filter,
        }
    }
}

/// Builds the synthesis, refusing on failed assumptions unless `force`.
fn synthesis_for(scn: &Scenario, cache: Option<&Path>, force: bool) -> Result<std::result::Result<FullSynthesis, ValidateReport>> {
    let (report, staged) = check_assumptions(scn, cache)?;
    if !report.pass && !force {
        return Ok(Err(report));
    }
    Ok(Ok(staged.finish(&scn.model, scn.options())?))
}

/// Simulates and writes `trajectory_<mode>.csv`, `decay_<mode>.json` and the plots; the plots are
/// rendered from the CSV as written.
pub fn cmd_simulate(scn: &Scenario, mode: Mode, cache: Option<&Path>, force: bool) -> Outcome {
    let run = || -> Result<Outcome> {
        let syn = match synthesis_for(scn, cache, force)? {
            Ok(s) => s,
            Err(report) => {
                return Ok(Outcome {
                    code: EXIT_FAILED,
                    report: json!({ "validate": report }),
                    artifacts: Vec::new(),
                })
            }
        };
        let mut cfg = scn.config.sim.clone();
        if mode == Mode::OutputFeedback {
            cfg.filter = Some(resolve_filter(scn, &syn)?.0);
        }
        let traj = run_closed_loop(&syn, &cfg, mode)?;
        let out = &scn.outputs;
        fs::create_dir_all(out)?;
        let name = mode.as_str();
        let csv = out.join(format!("trajectory_{name}.csv"));
        traj.write_csv(&csv)?;
        let mut artifacts = vec![csv.clone()];
        artifacts.extend(write_plots(&csv, out)?);
        let report = DecayReport::new(&traj, scn.model.tau(), cfg.filter.filter(|_| mode == Mode::OutputFeedback));
        let p = out.join(format!("decay_{name}.json"));
        write_json(&p, &report)?;
        artifacts.push(p);
        Ok(Outcome {
            code: if traj.diverged { EXIT_DIVERGED } else { EXIT_OK },
            report: json!({ "decay": report, "artifacts": relative(&artifacts, out) }),
            artifacts,
        })
    };
    run().unwrap_or_else(|e| Outcome::from_error(&e))
}

/// Renders the plots of a trajectory CSV into `dir`.
pub fn write_plots(csv: &Path, dir: &Path) -> Result<Vec<PathBuf>> {
    let traj = Trajectory::read_csv(csv)?;
    let mut out = Vec::new();
    for (name, svg) in trajectory_plots(&traj) {
        let p = dir.join(name);
        fs::write(&p, svg)?;
        out.push(p);
    }
    Ok(out)
}

const PARAMETERS: [&str; 18] = [
    "grid", "seed", "t_end", "omega_c", "epsilon", "observer_margin", "control_margin", "lambda", "mu", "a0", "e0",
    "c0", "a1", "e1", "c1", "r", "q", "q_mat",
];

/// Splits `name[i,j]` into a known parameter and its index.
pub fn parse_parameter(name: &str) -> Result<(&str, Vec<usize>)> {
    let (base, index) = match name.split_once('[') {
        Some((b, rest)) => {
            let idx = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::Invalid(format!("bad parameter index in {name:?}")))?;
            let idx: Vec<usize> = idx
                .split(',')
                .map(|v| v.trim().parse().map_err(|_| Error::Invalid(format!("bad parameter index in {name:?}"))))
                .collect::<Result<_>>()?;
            (b, idx)
        }
        None => (name, Vec::new()),
    };
    if !PARAMETERS.contains(&base) {
        return Err(Error::Invalid(format!(
            "unknown sweep parameter {name:?}; expected one of {}",
            PARAMETERS.join(", ")
        )));
    }
    Ok((base, index))
}

/// Applies `name = value` to a copy of the scenario and rechecks it. Model entries take an
/// optional `[i,j]` (matrices) or `[i]` (speeds) index, defaulting to the first entry.
pub fn apply_parameter(scn: &Scenario, name: &str, value: f64) -> Result<Scenario> {
    let mut s = scn.clone();
    let (base, index) = parse_parameter(name)?;
    let integer = || -> Result<usize> {
        if value >= 0.0 && value.fract() == 0.0 {
            Ok(value as usize)
        } else {
            Err(Error::Invalid(format!("{name} needs a non-negative integer, got {value}")))
        }
    };
    let md = &mut s.model;
    match base {
        "grid" => s.config.grid = integer()?,
        "seed" => s.config.sim.seed = integer()? as u64,
        "t_end" => s.config.sim.t_end = value,
        "omega_c" => s.config.sim.filter = Some(LowPassFilter::butterworth2(value)?),
        "epsilon" => s.config.synthesis.epsilon = value,
        "observer_margin" => s.config.synthesis.observer_margin = Some(value),
        "control_margin" => s.config.synthesis.control_margin = Some(value),
        "lambda" | "mu" => {
            let v = if base == "lambda" { &mut md.lambda } else { &mut md.mu };
            let i = index.first().copied().unwrap_or(0);
            *v.get_mut(i).ok_or_else(|| Error::Invalid(format!("{name}: index out of range")))? = value;
        }
        "a0" | "e0" | "c0" | "a1" | "e1" | "c1" | "r" | "q" | "q_mat" => {
            let m = match base {
                "a0" => &mut md.a0,
                "e0" => &mut md.e0,
                "c0" => &mut md.c0,
                "a1" => &mut md.a1,
                "e1" => &mut md.e1,
                "c1" => &mut md.c1,
                "r" => &mut md.r,
                _ => &mut md.q_mat,
            };
            let (i, j) = match index[..] {
                [] => (0, 0),
                [i, j] => (i, j),
                _ => return Err(Error::Invalid(format!("{name}: matrix entries need [i,j]"))),
            };
            if i >= m.nrows() || j >= m.ncols() {
                return Err(Error::Invalid(format!("{name}: index out of range")));
            }
            m[(i, j)] = value;
        }
        _ => unreachable!("checked by parse_parameter"),
    }
    let errors = s.model.validate();
    if !errors.is_empty() {
        return Err(Error::InvalidModel(errors));
    }
    s.precheck()?;
    Ok(s)
}

/// One summary row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub assumption1: Option<bool>,
    pub assumption2: Option<bool>,
    pub assumption3: Option<bool>,
    pub sup_radius: Option<f64>,
    pub residual_observer: Option<f64>,
    pub residual_control: Option<f64>,
    pub ratio: Option<f64>,
    pub decay_rate: Option<f64>,
    pub r2: Option<f64>,
    pub diverged: Option<bool>,
    pub pass: bool,
    pub error: Option<String>,
}

fn sweep_row(scn: &Scenario, name: &str, value: f64, mode: Mode, cache: Option<&Path>) -> SweepRow {
    let mut row = SweepRow {
        value,
        assumption1: None,
        assumption2: None,
        assumption3: None,
        sup_radius: None,
        residual_observer: None,
        residual_control: None,
        ratio: None,
        decay_rate: None,
        r2: None,
        diverged: None,
        pass: false,
        error: None,
    };
    let mut run = || -> Result<()> {
        let s = apply_parameter(scn, name, value)?;
        let (report, staged) = check_assumptions(&s, cache)?;
        row.assumption1 = Some(report.assumption1.pass);
        row.sup_radius = Some(report.assumption1.sup_radius);
        row.assumption2 = Some(report.assumption2.pass);
        row.assumption3 = Some(report.assumption3.pass);
        if !report.pass {
            return Ok(());
        }
        let syn = staged.finish(&s.model, s.options())?;
        let cert = residual_certificate(&syn, s.config.sim.seed)?;
        row.residual_observer = Some(cert.residual_observer);
        row.residual_control = Some(cert.residual_control);
        let mut cfg: SimConfig = s.config.sim.clone();
        if mode == Mode::OutputFeedback {
            cfg.filter = Some(resolve_filter(&s, &syn)?.0);
        }
        let traj = run_closed_loop(&syn, &cfg, mode)?;
        let d = DecayReport::new(&traj, s.model.tau(), None);
        row.ratio = Some(d.ratio);
        row.decay_rate = d.fit.map(|f| f.0);
        row.r2 = d.fit.map(|f| f.1);
        row.diverged = Some(d.diverged);
        row.pass = cert.pass && !d.diverged && (mode == Mode::OpenLoop || d.ratio <= DECAY_FACTOR);
        Ok(())
    };
    if let Err(e) = run() {
        row.error = Some(e.to_string());
    }
    row
}

fn csv_cell<T: std::fmt::Debug>(v: &Option<T>) -> String {
    v.as_ref().map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn sweep_csv(name: &str, rows: &[SweepRow]) -> String {
    let mut s = format!(
        "{name},assumption1,assumption2,assumption3,sup_radius,residual_observer,residual_control,ratio,decay_rate,r2,diverged,pass,error\n"
    );
    for r in rows {
        let err = r.error.as_deref().unwrap_or("").replace(['"', '\n'], "'");
        let _ = writeln!(
            s,
            "{:?},{},{},{},{},{},{},{},{},{},{},{},\"{err}\"",
            r.value,
            csv_cell(&r.assumption1),
            csv_cell(&r.assumption2),
            csv_cell(&r.assumption3),
            csv_cell(&r.sup_radius),
            csv_cell(&r.residual_observer),
            csv_cell(&r.residual_control),
            csv_cell(&r.ratio),
            csv_cell(&r.decay_rate),
            csv_cell(&r.r2),
            csv_cell(&r.diverged),
            r.pass,
        );
    }
    s
}

/// Validates and simulates once per value, in parallel; failures are recorded per row.
pub fn cmd_sweep(scn: &Scenario, name: &str, values: &[f64], mode: Mode, cache: Option<&Path>) -> Outcome {
    if values.is_empty() {
        return Outcome::from_error(&Error::Invalid("sweep needs at least one value".into()));
    }
    if let Err(e) = parse_parameter(name) {
        return Outcome::from_error(&e);
    }
    let rows: Vec<SweepRow> = values.par_iter().map(|v| sweep_row(scn, name, *v, mode, cache)).collect();
    let run = || -> Result<Outcome> {
        fs::create_dir_all(&scn.outputs)?;
        let safe: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
        let p = scn.outputs.join(format!("sweep_{safe}.csv"));
        fs::write(&p, sweep_csv(name, &rows))?;
        Ok(Outcome {
            code: EXIT_OK,
            report: json!({ "parameter": name, "mode": mode.as_str(), "rows": rows }),
            artifacts: vec![p],
        })
    };
    run().unwrap_or_else(|e| Outcome::from_error(&e))
}
