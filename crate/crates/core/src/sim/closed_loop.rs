use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{apply_t, xi_functional};
use crate::model::{chi_norm, GridField, PlantModel, PlantState};
use crate::sim::observer::Observer;
use crate::sim::PlantStepper;
use crate::synthesis::{ControlLaw, FullSynthesis, LowPassFilter};

/// First line of every trajectory CSV.
pub const TRAJECTORY_SCHEMA: &str = "# hyperstab-trajectory v1";

/// χ-norm beyond which a run is declared divergent and truncated.
pub const DIVERGENCE_THRESHOLD: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    OpenLoop,
    StateFeedback,
    OutputFeedback,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::OpenLoop => "open_loop",
            Mode::StateFeedback => "state_feedback",
            Mode::OutputFeedback => "output_feedback",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open_loop" => Ok(Mode::OpenLoop),
            "state_feedback" => Ok(Mode::StateFeedback),
            "output_feedback" => Ok(Mode::OutputFeedback),
            _ => Err(Error::Invalid(format!(
                "unknown mode {s:?}; expected open_loop, state_feedback or output_feedback"
            ))),
        }
    }
}

/// Simulation settings; the spatial grid is the synthesis grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Time step; defaults to unit CFL for the fastest speed.
    #[serde(default)]
    pub dt: Option<f64>,
    pub t_end: f64,
    #[serde(default)]
    pub seed: u64,
    /// χ-norm of the random initial state.
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Record every this many steps; 0 picks about 400 samples.
    #[serde(default)]
    pub record_every: usize,
    #[serde(default = "default_stations")]
    pub stations: Vec<f64>,
    /// Run the observer alongside state feedback or open loop as well.
    #[serde(default)]
    pub run_observer: bool,
    /// Low-pass filter on the output-feedback input.
    #[serde(default)]
    pub filter: Option<LowPassFilter>,
}

fn one() -> f64 {
    1.0
}

fn default_stations() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}

impl SimConfig {
    pub fn new(t_end: f64) -> Self {
        Self {
            dt: None,
            t_end,
            seed: 0,
            amplitude: 1.0,
            record_every: 0,
            stations: default_stations(),
            run_observer: false,
            filter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    /// Component-major: `u_i` at every station, then `u_{i+1}`.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub input: Vec<f64>,
    pub y: Vec<f64>,
    pub chi_state: f64,
    /// `NaN` without an observer.
    pub chi_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub mode: Mode,
    pub dims: (usize, usize, usize, usize),
    pub stations: Vec<f64>,
    pub samples: Vec<Sample>,
    pub diverged: bool,
}

fn fmt_row(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn chi_state(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.chi_state).collect()
    }

    pub fn chi_error(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.chi_error).collect()
    }

    pub fn header(&self) -> Vec<String> {
        let (p, n, m, q) = self.dims;
        let mut h = vec!["t".to_string()];
        h.extend((0..p).map(|i| format!("X0_{i}")));
        h.extend((0..q).map(|i| format!("X1_{i}")));
        for (name, comps) in [("u", n), ("v", m)] {
            for c in 0..comps {
                h.extend(self.stations.iter().map(|x| format!("{name}{c}@{x}")));
            }
        }
        h.extend((0..n).map(|i| format!("U_{i}")));
        h.extend((0..n).map(|i| format!("y_{i}")));
        h.push("chi_state".into());
        h.push("chi_error".into());
        h
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            f,
            "{TRAJECTORY_SCHEMA} mode={} dims={},{},{},{} diverged={}",
            self.mode.as_str(),
            self.dims.0,
            self.dims.1,
            self.dims.2,
            self.dims.3,
            self.diverged
        )?;
        writeln!(f, "{}", self.header().join(","))?;
        for s in &self.samples {
            let vals = std::iter::once(s.t)
                .chain(s.x0.iter().copied())
                .chain(s.x1.iter().copied())
                .chain(s.u.iter().copied())
                .chain(s.v.iter().copied())
                .chain(s.input.iter().copied())
                .chain(s.y.iter().copied())
                .chain([s.chi_state, s.chi_error]);
            writeln!(f, "{}", fmt_row(vals))?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let bad = |what: &str| Error::Invalid(format!("trajectory CSV: {what}"));
        let first = lines.next().ok_or_else(|| bad("empty file"))??;
        let meta = first
            .strip_prefix(TRAJECTORY_SCHEMA)
            .ok_or_else(|| bad("missing schema line"))?;
        let field = |key: &str| {
            meta.split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                .ok_or_else(|| bad(&format!("missing {key}")))
        };
        let mode = Mode::from_str(field("mode")?)?;
        let dims: Vec<usize> = field("dims")?
            .split(',')
            .map(|v| v.parse().map_err(|_| bad("dims")))
            .collect::<Result<_>>()?;
        if dims.len() != 4 {
            return Err(bad("dims"));
        }
        let diverged = field("diverged")? == "true";
        let (p, n, m, q) = (dims[0], dims[1], dims[2], dims[3]);
        let header = lines.next().ok_or_else(|| bad("missing header"))??;
        let cols: Vec<&str> = header.split(',').collect();
        let mut stations = Vec::new();
        for c in &cols {
            if let Some(rest) = c.strip_prefix("u0@") {
                stations.push(rest.parse().map_err(|_| bad("station"))?);
            }
        }
        let mut traj = Trajectory {
            mode,
            dims: (p, n, m, q),
            stations,
            samples: Vec::new(),
            diverged,
        };
        if traj.header() != cols {
            return Err(bad("header does not match the schema"));
        }
        let ns = traj.stations.len();
        for line in lines {
            let line = line?;
            let v: Vec<f64> = line
                .split(',')
                .map(|x| x.parse().map_err(|_| bad("number")))
                .collect::<Result<_>>()?;
            if v.len() != cols.len() {
                return Err(bad("row length"));
            }
            let mut it = v.into_iter();
            let mut take = |k: usize| (&mut it).take(k).collect::<Vec<f64>>();
            let t = take(1)[0];
            let x0 = take(p);
            let x1 = take(q);
            let u = take(n * ns);
            let vv = take(m * ns);
            let input = take(n);
            let y = take(n);
            let tail = take(2);
            traj.samples.push(Sample {
                t,
                x0,
                x1,
                u,
                v: vv,
                input,
                y,
                chi_state: tail[0],
                chi_error: tail[1],
            });
        }
        Ok(traj)
    }
}

/// Smooth random state with χ-norm `amplitude`.
pub fn random_initial_state(model: &PlantModel, n_grid: usize, seed: u64, amplitude: f64) -> PlantState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = |comps: usize| {
        let modes: Vec<Vec<(f64, f64)>> = (0..comps)
            .map(|_| (1..=3).map(|k| (rng.gen_range(-1.0..1.0) / k as f64, rng.gen_range(0.0..std::f64::consts::TAU))).collect())
            .collect();
        GridField::from_fn(comps, n_grid, |c, x| {
            modes[c]
                .iter()
                .enumerate()
                .map(|(k, (a, ph))| a * ((k + 1) as f64 * std::f64::consts::PI * x + ph).sin())
                .sum()
        })
    };
    let u = field(model.n);
    let v = field(model.m);
    let x0 = DVector::from_fn(model.p, |_, _| rng.gen_range(-1.0..1.0));
    let x1 = DVector::from_fn(model.q, |_, _| rng.gen_range(-1.0..1.0));
    let s = PlantState { x0, u, v, x1 };
    let c = chi_norm(&s);
    if c == 0.0 {
        s
    } else {
        s.scaled(amplitude / c)
    }
}

fn sample(t: f64, st: &PlantState, stations: &[f64], input: &DVector<f64>, chi_error: f64) -> Sample {
    let at = |f: &GridField| {
        (0..f.comps())
            .flat_map(|c| stations.iter().map(move |x| f.interp(c, *x)))
            .collect::<Vec<f64>>()
    };
    let last = st.u.n_grid() - 1;
    Sample {
        t,
        x0: st.x0.iter().copied().collect(),
        x1: st.x1.iter().copied().collect(),
        u: at(&st.u),
        v: at(&st.v),
        input: input.iter().copied().collect(),
        y: st.u.node(last).iter().copied().collect(),
        chi_state: chi_norm(st),
        chi_error,
    }
}

/// Runs the plant from a random initial state under the chosen law.
///
/// State feedback reads `ξ` from the plant through the inverse transform and `X₁` directly;
/// output feedback reads both from the observer and applies the configured filter.
pub fn run_closed_loop(syn: &FullSynthesis, cfg: &SimConfig, mode: Mode) -> Result<Trajectory> {
    let md = &syn.model;
    let n_grid = syn.options.n_grid;
    let h = 1.0 / (n_grid - 1) as f64;
    let dt = cfg.dt.unwrap_or(h / md.max_speed());
    if !(cfg.t_end > 0.0 && dt > 0.0) {
        return Err(Error::Invalid("t_end and dt must be positive".into()));
    }
    if cfg.stations.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::Invalid("stations must lie in [0, 1]".into()));
    }
    let stepper = PlantStepper::new(md, n_grid, dt)?;
    let steps = (cfg.t_end / dt).round() as usize;
    let every = if cfg.record_every == 0 {
        (steps / 400).max(1)
    } else {
        cfg.record_every
    };
    let last = n_grid - 1;

    let mut state = random_initial_state(md, n_grid, cfg.seed, cfg.amplitude);
    let xi_of = match mode {
        Mode::StateFeedback => Some(xi_functional(&syn.kernels)?),
        _ => None,
    };
    let filter = match mode {
        Mode::OutputFeedback => cfg.filter.as_ref(),
        _ => None,
    };
    let mut law = match mode {
        Mode::OpenLoop => None,
        _ => Some(ControlLaw::new(&syn.controller, filter, dt, 0.0)?),
    };
    let mut observer = if mode == Mode::OutputFeedback || cfg.run_observer {
        Some(Observer::new(syn, n_grid, dt, 0.0, &state.u.node(last))?)
    } else {
        None
    };

    let zero = DVector::zeros(md.n);
    let control = |law: &mut Option<ControlLaw>, t: f64, st: &PlantState, obs: &Option<Observer>| -> Result<DVector<f64>> {
        let Some(law) = law else { return Ok(zero.clone()) };
        match (mode, &xi_of, obs) {
            (Mode::StateFeedback, Some(xi), _) => law.evaluate(t, &xi.eval(st), &st.x1),
            (Mode::OutputFeedback, _, Some(o)) => {
                let z = o.z();
                law.evaluate(t, &z.rows(0, md.p).into_owned(), &z.rows(md.p, md.q).into_owned())
            }
            _ => Ok(zero.clone()),
        }
    };
    let error_norm = |st: &PlantState, obs: &Option<Observer>| -> Result<f64> {
        match obs {
            Some(o) => Ok(chi_norm(&st.minus(&apply_t(&syn.kernels, &o.estimate())?))),
            None => Ok(f64::NAN),
        }
    };

    let mut input = control(&mut law, 0.0, &state, &observer)?;
    stepper.close(&mut state, &input);
    if let Some(o) = observer.as_mut() {
        o.close(&input)?;
    }
    let mut samples = vec![sample(0.0, &state, &cfg.stations, &input, error_norm(&state, &observer)?)];
    let mut diverged = false;
    for s in 1..=steps {
        let t = s as f64 * dt;
        let mut next = stepper.advance(&state);
        // Until the law runs, the actuated node holds the previous input.
        stepper.close(&mut next, &input);
        if let Some(o) = observer.as_mut() {
            o.advance(&next.u.node(last))?;
        }
        input = control(&mut law, t, &next, &observer)?;
        stepper.close(&mut next, &input);
        if let Some(o) = observer.as_mut() {
            o.close(&input)?;
        }
        state = next;
        let chi = chi_norm(&state);
        if !chi.is_finite() || chi > DIVERGENCE_THRESHOLD {
            diverged = true;
            if chi.is_finite() {
                samples.push(sample(t, &state, &cfg.stations, &input, f64::NAN));
            }
            break;
        }
        if s % every == 0 || s == steps {
            samples.push(sample(t, &state, &cfg.stations, &input, error_norm(&state, &observer)?));
        }
    }
    Ok(Trajectory {
        mode,
        dims: (md.p, md.n, md.m, md.q),
        stations: cfg.stations.clone(),
        samples,
        diverged,
    })
}

/// Least-squares slope and `r²` of `ln value` against `t` on `t ≥ t_start`, stopping at the first
/// non-positive value.
pub fn fit_decay_series(times: &[f64], values: &[f64], t_start: f64) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= t_start)
        .take_while(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Precondition(format!("fewer than two positive samples after t = {t_start}")));
    }
    let k = pts.len() as f64;
    let (mt, ml) = pts.iter().fold((0.0, 0.0), |(a, b), (t, l)| (a + t / k, b + l / k));
    let (mut stt, mut stl, mut sll) = (0.0, 0.0, 0.0);
    for (t, l) in &pts {
        stt += (t - mt) * (t - mt);
        stl += (t - mt) * (l - ml);
        sll += (l - ml) * (l - ml);
    }
    if stt == 0.0 {
        return Err(Error::Precondition("samples share one time".into()));
    }
    let rate = stl / stt;
    let r2 = if sll == 0.0 { 1.0 } else { stl * stl / (stt * sll) };
    Ok((rate, r2))
}

/// Decay rate of the state χ-norm after `t_start`.
pub fn fit_decay(traj: &Trajectory, t_start: f64) -> Result<(f64, f64)> {
    fit_decay_series(&traj.times(), &traj.chi_state(), t_start)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_exponential_fit() {
        let t: Vec<f64> = (0..200).map(|k| k as f64 * 0.05).collect();
        let v: Vec<f64> = t.iter().map(|t| 3.0 * (-2.0 * t).exp()).collect();
        let (rate, r2) = fit_decay_series(&t, &v, 1.0).unwrap();
        assert!((rate + 2.0).abs() < 1e-6);
        assert!(r2 >= 0.999999);
        let (rate, _) = fit_decay_series(&t, &vec![0.7; 200], 0.0).unwrap();
        assert!(rate.abs() < 1e-12);
    }

    #[test]
    fn fit_stops_at_zero() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let v = [1.0, (-1.0f64).exp(), 0.0, 5.0];
        let (rate, _) = fit_decay_series(&t, &v, 0.0).unwrap();
        assert!((rate + 1.0).abs() < 1e-12);
    }

    #[test]
    fn modes_parse() {
        assert_eq!("output_feedback".parse::<Mode>().unwrap(), Mode::OutputFeedback);
        assert!("closed".parse::<Mode>().is_err());
    }
}
