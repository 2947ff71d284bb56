//! Scenario files.
//!
//! TOML with the sections `[system]`, `[barrier]`, `[nominal]`, `[safety]`,
//! `[run]` and the optional `[sweep]`, `[grid]`, `[meta]`. Matrices are
//! arrays of rows; a system matrix may also be an array of matrices, one per
//! step. Unknown keys are rejected. See `presets/` for complete examples.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::barrier::{Barrier, GammaMode, LevelSetSearch};
use crate::error::{Error, Result};
use crate::filter::{CjSpec, FeedbackMode, InfeasiblePolicy, SafetyParams, DEFAULT_INPUT_BOX};
use crate::linalg::{from_rows, to_rows};
use crate::lqr::NominalController;
use crate::montecarlo::{lattice_2d, Scenario, DEFAULT_HORIZON};
use crate::system::{LinearSystem, Schedule};

pub const PRESET_NAMES: [&str; 4] = ["halfplane", "ellipsoid", "pendulum_output", "pendulum_state"];

const DEFAULT_SIGMA: f64 = 0.1;
const DEFAULT_GAMMA_DRAWS: usize = 10_000;
const DEFAULT_GAMMA_SEED: u64 = 7;
const DEFAULT_TRIALS: usize = 1000;

pub fn preset_text(name: &str) -> Result<&'static str> {
    Ok(match name {
        "halfplane" => include_str!("../presets/halfplane.toml"),
        "ellipsoid" => include_str!("../presets/ellipsoid.toml"),
        "pendulum_output" => include_str!("../presets/pendulum_output.toml"),
        "pendulum_state" => include_str!("../presets/pendulum_state.toml"),
        _ => {
            return Err(Error::Config(format!(
                "unknown preset '{name}' (available: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    })
}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Constant(Rows),
    Varying(Vec<Rows>),
}

impl MatrixSpec {
    fn to_schedule(&self, context: &'static str) -> Result<Schedule> {
        match self {
            MatrixSpec::Constant(rows) => Ok(Schedule::Constant(from_rows(context, rows)?)),
            MatrixSpec::Varying(steps) => steps
                .iter()
                .map(|rows| from_rows(context, rows))
                .collect::<Result<Vec<_>>>()
                .map(Schedule::Varying),
        }
    }

    fn from_schedule(s: &Schedule) -> Self {
        match s {
            Schedule::Constant(m) => MatrixSpec::Constant(to_rows(m)),
            Schedule::Varying(ms) => MatrixSpec::Varying(ms.iter().map(to_rows).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(rename = "A")]
    pub a: MatrixSpec,
    #[serde(rename = "B")]
    pub b: MatrixSpec,
    #[serde(rename = "C")]
    pub c: MatrixSpec,
    #[serde(rename = "Q")]
    pub q: MatrixSpec,
    #[serde(rename = "R")]
    pub r: MatrixSpec,
    /// Defaults to `Q_0`.
    #[serde(rename = "P0", default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum BarrierKind {
    HalfSpace,
    ConcaveQuadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierSection {
    pub kind: BarrierKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(rename = "fallback_M", default, skip_serializing_if = "Option::is_none")]
    pub fallback_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum NominalKind {
    StaticGain,
    Lqr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NominalSection {
    pub kind: NominalKind,
    /// Feedback gain of `u = −K (x − target) + offset`.
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Rows>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    OutputFeedback,
    StateFeedback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    LeastViolation,
    Nominal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaModeName {
    Analytic,
    Montecarlo,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSetSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetySection {
    pub alpha: f64,
    /// `c′_J = k_J · c_J^max`; exclusive with `cj_abs`.
    #[serde(rename = "k_J", default, skip_serializing_if = "Option::is_none")]
    pub k_j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cj_abs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub mode: ModeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infeasible_policy: Option<PolicyName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_mode: Option<GammaModeName>,
    /// Used with `gamma_mode = "fixed"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_draws: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_box: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_set: Option<LevelSetSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    pub x0: Vec<f64>,
    /// Defaults to `x0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xhat0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_x0: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_trajectories: Option<bool>,
}

/// `(α, k_J)` points: the product of `alpha` and `k_J`, or explicit `points`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(rename = "k_J", default, skip_serializing_if = "Option::is_none")]
    pub k_j: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
}

/// Lattice of initial states over a 2-D box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub counts: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<MetaSection>,
    pub system: SystemSection,
    pub barrier: BarrierSection,
    pub nominal: NominalSection,
    pub safety: SafetySection,
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
}

/// Run-level settings that are not part of the scenario itself.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub trials: usize,
    pub master_seed: u64,
    pub log_trajectories: bool,
}

fn require<T: Clone>(value: &Option<T>, key: &str) -> Result<T> {
    value.clone().ok_or_else(|| Error::Config(format!("missing key {key}")))
}

fn forbid<T>(value: &Option<T>, key: &str, reason: &str) -> Result<()> {
    if value.is_some() {
        return Err(Error::Config(format!("key {key} is not allowed {reason}")));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn preset(name: &str) -> Result<Self> {
        Self::from_toml_str(preset_text(name)?)
    }

    /// Parses `text` after applying dotted-path overrides such as
    /// `safety.k_J=0.38`. Values use TOML syntax; bare words are strings.
    pub fn from_toml_str_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn name(&self) -> Option<&str> {
        self.meta.as_ref().and_then(|m| m.name.as_deref())
    }

    pub fn run_settings(&self) -> RunSettings {
        RunSettings {
            trials: self.run.trials.unwrap_or(DEFAULT_TRIALS),
            master_seed: self.run.master_seed.unwrap_or(0),
            log_trajectories: self.run.log_trajectories.unwrap_or(false),
        }
    }

    pub fn to_scenario(&self) -> Result<Scenario> {
        let s = &self.system;
        let sys = LinearSystem::new(
            s.a.to_schedule("system.A")?,
            s.b.to_schedule("system.B")?,
            s.c.to_schedule("system.C")?,
            s.q.to_schedule("system.Q")?,
            s.r.to_schedule("system.R")?,
        )?;
        let p0 = match &s.p0 {
            Some(rows) => from_rows("system.P0", rows)?,
            None => sys.q(0)?.clone(),
        };
        let n = sys.state_dim();

        let bar = &self.barrier;
        let barrier = match bar.kind {
            BarrierKind::HalfSpace => {
                forbid(&bar.c0, "barrier.c0", "for a half-space")?;
                forbid(&bar.w, "barrier.W", "for a half-space")?;
                forbid(&bar.center, "barrier.center", "for a half-space")?;
                Barrier::half_space(
                    DVector::from_vec(require(&bar.a, "barrier.a")?),
                    require(&bar.b, "barrier.b")?,
                )?
            }
            BarrierKind::ConcaveQuadratic => {
                forbid(&bar.a, "barrier.a", "for a concave quadratic")?;
                forbid(&bar.b, "barrier.b", "for a concave quadratic")?;
                let center = bar.center.clone().unwrap_or_else(|| vec![0.0; n]);
                Barrier::concave_quadratic(
                    require(&bar.c0, "barrier.c0")?,
                    from_rows("barrier.W", &require(&bar.w, "barrier.W")?)?,
                    DVector::from_vec(center),
                )?
            }
        };

        let nom = &self.nominal;
        let target = DVector::from_vec(nom.target.clone().unwrap_or_else(|| vec![0.0; n]));
        let nominal = match nom.kind {
            NominalKind::StaticGain => {
                forbid(&nom.q, "nominal.Q", "for a static gain")?;
                forbid(&nom.r, "nominal.R", "for a static gain")?;
                let gain = from_rows("nominal.K", &require(&nom.k, "nominal.K")?)?;
                let offset = DVector::from_vec(nom.offset.clone().unwrap_or_else(|| vec![0.0; gain.nrows()]));
                NominalController::StaticGain { gain, target, offset }
            }
            NominalKind::Lqr => {
                forbid(&nom.k, "nominal.K", "for an LQR nominal")?;
                forbid(&nom.offset, "nominal.offset", "for an LQR nominal")?;
                NominalController::Lqr {
                    q: from_rows("nominal.Q", &require(&nom.q, "nominal.Q")?)?,
                    r: from_rows("nominal.R", &require(&nom.r, "nominal.R")?)?,
                    target,
                }
            }
        };

        let saf = &self.safety;
        let cj = match (saf.k_j, saf.cj_abs) {
            (Some(k), None) => CjSpec::Fraction(k),
            (None, Some(c)) => CjSpec::Absolute(c),
            _ => return Err(Error::Config("set exactly one of safety.k_J and safety.cj_abs".into())),
        };
        let mode = match saf.mode {
            ModeName::OutputFeedback => FeedbackMode::OutputFeedback,
            ModeName::StateFeedback => FeedbackMode::StateFeedback,
        };
        let params = SafetyParams {
            alpha: saf.alpha,
            cj,
            sigma: saf.sigma.unwrap_or(DEFAULT_SIGMA),
            mode,
            infeasible_policy: match saf.infeasible_policy.unwrap_or(PolicyName::LeastViolation) {
                PolicyName::LeastViolation => InfeasiblePolicy::LeastViolation,
                PolicyName::Nominal => InfeasiblePolicy::Nominal,
            },
            input_box: saf.input_box.unwrap_or(DEFAULT_INPUT_BOX),
        };
        let gamma_mode = match saf.gamma_mode.unwrap_or(GammaModeName::Analytic) {
            GammaModeName::Analytic => GammaMode::Analytic,
            GammaModeName::Montecarlo => GammaMode::MonteCarlo {
                draws: saf.gamma_draws.unwrap_or(DEFAULT_GAMMA_DRAWS),
                seed: saf.gamma_seed.unwrap_or(DEFAULT_GAMMA_SEED),
            },
            GammaModeName::Fixed => GammaMode::Fixed(require(&saf.gamma, "safety.gamma")?),
        };
        if saf.gamma.is_some() && !matches!(gamma_mode, GammaMode::Fixed(_)) {
            return Err(Error::Config("safety.gamma requires gamma_mode = \"fixed\"".into()));
        }
        let mut level_set = LevelSetSearch::default();
        if let Some(ls) = &saf.level_set {
            level_set.samples = ls.samples.unwrap_or(level_set.samples);
            level_set.iterations = ls.iterations.unwrap_or(level_set.iterations);
            level_set.step_fraction = ls.step_fraction.unwrap_or(level_set.step_fraction);
            level_set.seed = ls.seed.unwrap_or(level_set.seed);
        }

        let x0 = DVector::from_vec(self.run.x0.clone());
        let xhat0 = self
            .run
            .xhat0
            .clone()
            .map(DVector::from_vec)
            .unwrap_or_else(|| x0.clone());
        let scenario = Scenario {
            sys,
            barrier,
            nominal,
            params,
            gamma_mode,
            level_set,
            x0,
            xhat0,
            p0,
            sample_x0: self.run.sample_x0.unwrap_or(false),
            horizon: self.run.horizon.unwrap_or(DEFAULT_HORIZON),
            fallback_m: bar.fallback_m,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Config text for an existing scenario (generic barriers have no text
    /// form). Every default is written out explicitly.
    pub fn from_scenario(scn: &Scenario, run: &RunSettings) -> Result<Self> {
        let [a, b, c, q, r] = scn.sys.schedules();
        let barrier = match &scn.barrier {
            Barrier::HalfSpace { a, b } => BarrierSection {
                kind: BarrierKind::HalfSpace,
                a: Some(a.iter().copied().collect()),
                b: Some(*b),
                c0: None,
                w: None,
                center: None,
                fallback_m: scn.fallback_m,
            },
            Barrier::ConcaveQuadratic { c0, w, center } => BarrierSection {
                kind: BarrierKind::ConcaveQuadratic,
                a: None,
                b: None,
                c0: Some(*c0),
                w: Some(to_rows(w)),
                center: Some(center.iter().copied().collect()),
                fallback_m: scn.fallback_m,
            },
            Barrier::Generic(_) => {
                return Err(Error::Config(
                    "generic barriers cannot be written to a config file".into(),
                ))
            }
        };
        let vec = |v: &DVector<f64>| v.iter().copied().collect::<Vec<_>>();
        let nominal = match &scn.nominal {
            NominalController::StaticGain { gain, target, offset } => NominalSection {
                kind: NominalKind::StaticGain,
                k: Some(to_rows(gain)),
                offset: Some(vec(offset)),
                q: None,
                r: None,
                target: Some(vec(target)),
            },
            NominalController::Lqr { q, r, target } => NominalSection {
                kind: NominalKind::Lqr,
                k: None,
                offset: None,
                q: Some(to_rows(q)),
                r: Some(to_rows(r)),
                target: Some(vec(target)),
            },
        };
        let p = &scn.params;
        let (k_j, cj_abs) = match p.cj {
            CjSpec::Fraction(k) => (Some(k), None),
            CjSpec::Absolute(c) => (None, Some(c)),
        };
        let (gamma_mode, gamma, gamma_draws, gamma_seed) = match scn.gamma_mode {
            GammaMode::Analytic => (GammaModeName::Analytic, None, None, None),
            GammaMode::MonteCarlo { draws, seed } => (GammaModeName::Montecarlo, None, Some(draws), Some(seed)),
            GammaMode::Fixed(g) => (GammaModeName::Fixed, Some(g), None, None),
        };
        let ls = &scn.level_set;
        Ok(Self {
            meta: None,
            system: SystemSection {
                a: MatrixSpec::from_schedule(a),
                b: MatrixSpec::from_schedule(b),
                c: MatrixSpec::from_schedule(c),
                q: MatrixSpec::from_schedule(q),
                r: MatrixSpec::from_schedule(r),
                p0: Some(to_rows(&scn.p0)),
            },
            barrier,
            nominal,
            safety: SafetySection {
                alpha: p.alpha,
                k_j,
                cj_abs,
                sigma: Some(p.sigma),
                mode: match p.mode {
                    FeedbackMode::OutputFeedback => ModeName::OutputFeedback,
                    FeedbackMode::StateFeedback => ModeName::StateFeedback,
                },
                infeasible_policy: Some(match p.infeasible_policy {
                    InfeasiblePolicy::LeastViolation => PolicyName::LeastViolation,
                    InfeasiblePolicy::Nominal => PolicyName::Nominal,
                }),
                gamma_mode: Some(gamma_mode),
                gamma,
                gamma_draws,
                gamma_seed,
                input_box: Some(p.input_box),
                level_set: Some(LevelSetSection {
                    samples: Some(ls.samples),
                    iterations: Some(ls.iterations),
                    step_fraction: Some(ls.step_fraction),
                    seed: Some(ls.seed),
                }),
            },
            run: RunSection {
                horizon: Some(scn.horizon),
                trials: Some(run.trials),
                master_seed: Some(run.master_seed),
                x0: vec(&scn.x0),
                xhat0: Some(vec(&scn.xhat0)),
                sample_x0: Some(scn.sample_x0),
                log_trajectories: Some(run.log_trajectories),
            },
            sweep: None,
            grid: None,
        })
    }

    /// `(α, k_J)` points of the `[sweep]` section.
    pub fn sweep_points(&self) -> Result<Vec<(f64, f64)>> {
        let sweep = self
            .sweep
            .as_ref()
            .ok_or_else(|| Error::Config("scenario has no [sweep] section".into()))?;
        if let Some(points) = &sweep.points {
            forbid(&sweep.alpha, "sweep.alpha", "together with sweep.points")?;
            forbid(&sweep.k_j, "sweep.k_J", "together with sweep.points")?;
            return Ok(points.iter().map(|p| (p[0], p[1])).collect());
        }
        let alphas = sweep.alpha.clone().unwrap_or_else(|| vec![self.safety.alpha]);
        let kjs = require(&sweep.k_j, "sweep.k_J")?;
        let points: Vec<(f64, f64)> = alphas.iter().flat_map(|&a| kjs.iter().map(move |&k| (a, k))).collect();
        if points.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        Ok(points)
    }

    pub fn grid_cells(&self) -> Result<Vec<DVector<f64>>> {
        let grid = self
            .grid
            .as_ref()
            .ok_or_else(|| Error::Config("scenario has no [grid] section".into()))?;
        if self.run.x0.len() != 2 {
            return Err(Error::Config("initial-state grids need a 2-D state".into()));
        }
        if grid.counts.contains(&0) {
            return Err(Error::Config("grid.counts must be positive".into()));
        }
        if grid.lo[0] > grid.hi[0] || grid.lo[1] > grid.hi[1] {
            return Err(Error::Config("grid.lo must not exceed grid.hi".into()));
        }
        Ok(lattice_2d(grid.lo, grid.hi, grid.counts))
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{item}' is not of the form key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("malformed override path '{path}'")));
    }
    let value = parse_value(raw.trim());
    let (last, parents) = keys.split_last().expect("nonempty path");
    let mut cursor = table;
    for key in parents {
        let entry = cursor
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path '{path}' runs through the non-table key '{key}'")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Flat view of the resolved numbers, for summaries.
pub fn matrix_map(scn: &Scenario) -> Result<BTreeMap<&'static str, Vec<Vec<f64>>>> {
    let sys = &scn.sys;
    let mut out = BTreeMap::new();
    out.insert("A", to_rows(sys.a(0)?));
    out.insert("B", to_rows(sys.b(0)?));
    out.insert("C", to_rows(sys.c(0)?));
    out.insert("Q", to_rows(sys.q(0)?));
    out.insert("R", to_rows(sys.r(0)?));
    out.insert("P0", to_rows(&scn.p0));
    Ok(out)
}
