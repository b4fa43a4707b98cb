//! Problem file schema and its conversion into core types.
//!
//! A problem file is one JSON document. Unknown keys are rejected at every
//! level, and everything is validated before any computation starts.

use std::fs;
use std::path::{Path, PathBuf};

use approach_core::bridge::io::read_binary;
use approach_core::bridge::{
    build_controllability_target, build_target_cylinder, GridSpec, MembershipMode, SectionsOptions, TimeSlicedGrid,
    DEFAULT_CONSTRAINT_SLACK,
};
use approach_core::flows::DEFAULT_SUBSTEPS;
use approach_core::gamespec::{
    sample_control_set, AuxiliarySystem, ControlSetDescriptor, GameProblem, SampledControlSet, TargetSpec, TerminalSet,
};
use approach_core::simulate::{AdversaryKind, StartRegion, TrialOptions};
use approach_core::vectorfield::{parse_field, FieldSignature, VectorField};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub schema_version: u32,
    pub dynamics: Dynamics,
    pub control_sets: ControlSets,
    pub horizon: f64,
    #[serde(default)]
    pub auxiliary: Option<Auxiliary>,
    pub target: TargetSection,
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub checks: ChecksSection,
    #[serde(default)]
    pub isaacs: IsaacsSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Dynamics {
    /// Optional state names; `x1..xn` always work too.
    #[serde(default)]
    pub state: Option<Vec<String>>,
    #[serde(default = "default_first")]
    pub first_player: String,
    #[serde(default = "default_second")]
    pub second_player: String,
    pub components: Vec<String>,
}

fn default_first() -> String {
    "u".into()
}

fn default_second() -> String {
    "v".into()
}

fn default_aux_control() -> String {
    "w".into()
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSets {
    pub p: ControlSetDescriptor,
    pub q: ControlSetDescriptor,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Auxiliary {
    #[serde(default = "default_aux_control")]
    pub control: String,
    pub components: Vec<String>,
    pub omega: ControlSetDescriptor,
    pub terminal: TerminalSet,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSection {
    /// `[0, ϑ] × F`.
    Cylinder { terminal: TerminalSet },
    /// Controllability set of the auxiliary system.
    Controllability,
    /// A previously exported grid, relative to the problem file.
    Grid { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub bounds: Vec<[f64; 2]>,
    pub cells: Vec<usize>,
    pub time_steps: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub max_iter: usize,
    pub membership: MembershipMode,
    pub substeps: usize,
    /// Cells of slack on the stay-in-E constraint (interpolated mode).
    pub constraint_slack: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            max_iter: 30,
            membership: MembershipMode::default(),
            substeps: DEFAULT_SUBSTEPS,
            constraint_slack: DEFAULT_CONSTRAINT_SLACK,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecksSection {
    /// Random samples for the commutation and bracket checks.
    pub samples: usize,
    /// Flow times are drawn from `[0, max_tau]`.
    pub max_tau: f64,
    pub commute_tolerance: f64,
    pub bracket_tolerance: f64,
    pub substeps: usize,
    pub sections: SectionsSection,
}

impl Default for ChecksSection {
    fn default() -> Self {
        ChecksSection {
            samples: 100,
            max_tau: 1.0,
            commute_tolerance: 1e-6,
            bracket_tolerance: 1e-8,
            substeps: DEFAULT_SUBSTEPS,
            sections: SectionsSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SectionsSection {
    pub samples_per_slice: usize,
    pub random_schedules: usize,
    pub tolerance_cells: usize,
}

impl Default for SectionsSection {
    fn default() -> Self {
        let d = SectionsOptions::default();
        SectionsSection {
            samples_per_slice: d.samples_per_slice,
            random_schedules: d.random_schedules,
            tolerance_cells: d.tolerance_cells,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsaacsSection {
    /// `(x, s)` pairs: states uniform in the grid box, directions from the
    /// deterministic sphere set.
    pub samples: usize,
    pub tolerance: f64,
}

impl Default for IsaacsSection {
    fn default() -> Self {
        IsaacsSection { samples: 1000, tolerance: 1e-12 }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub starts: usize,
    pub region: StartRegion,
    pub adversaries: Vec<AdversaryKind>,
    /// Partition step counts; empty means the grid's time steps.
    pub partitions: Vec<usize>,
    /// Capture radius; absent means 1.5 cell diagonals.
    pub epsilon: Option<f64>,
    pub step_aware: bool,
    pub substeps: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            starts: 200,
            region: StartRegion::InsideEroded(2),
            adversaries: vec![AdversaryKind::Constant(0), AdversaryKind::Lookahead],
            partitions: vec![],
            epsilon: None,
            step_aware: true,
            substeps: 4,
        }
    }
}

/// A validated problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub file: ProblemFile,
    pub game: GameProblem,
    /// The auxiliary section, if present.
    pub aux: Option<AuxiliarySystem>,
    pub spec: GridSpec,
    pub base_dir: PathBuf,
}

fn input(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {msg}", path.display()))
}

impl Problem {
    pub fn load(path: &Path) -> Result<Problem, CliError> {
        let text = fs::read_to_string(path).map_err(|e| input(path, e))?;
        let file: ProblemFile = serde_json::from_str(&text).map_err(|e| input(path, e))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Problem::from_file(file, base_dir).map_err(|e| match e {
            CliError::Input(msg) => input(path, msg),
            other => other,
        })
    }

    pub fn from_file(file: ProblemFile, base_dir: PathBuf) -> Result<Problem, CliError> {
        let bad = |m: String| CliError::Input(m);
        if file.schema_version != SCHEMA_VERSION {
            return Err(bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        if file.solver.max_iter == 0 {
            return Err(bad("solver.max_iter must be at least 1".into()));
        }
        if file.solver.substeps == 0 || file.checks.substeps == 0 || file.simulate.substeps == 0 {
            return Err(bad("substeps must be at least 1".into()));
        }
        if !(file.solver.constraint_slack >= 0.0) {
            return Err(bad("solver.constraint_slack must be non-negative".into()));
        }
        if file.isaacs.samples == 0 || file.checks.samples == 0 {
            return Err(bad("sample counts must be at least 1".into()));
        }
        if !(file.checks.max_tau >= 0.0) {
            return Err(bad("checks.max_tau must be non-negative".into()));
        }
        if file.simulate.partitions.contains(&0) {
            return Err(bad("simulate.partitions must be positive".into()));
        }

        let dyn_ = &file.dynamics;
        let n = dyn_.components.len();
        if let Some(names) = &dyn_.state {
            if names.len() != n {
                return Err(bad(format!("dynamics.state names {} states, components give {n}", names.len())));
            }
        }
        let p = sample(&file.control_sets.p, "control_sets.p")?;
        let q = sample(&file.control_sets.q, "control_sets.q")?;
        let f = field(
            &dyn_.components,
            dyn_.state.clone(),
            vec![(dyn_.first_player.clone(), p.dim()), (dyn_.second_player.clone(), q.dim())],
            "dynamics",
        )?;

        let g = &file.grid;
        if g.bounds.len() != n || g.cells.len() != n {
            return Err(bad(format!(
                "grid has {} bounds and {} cell counts for {n} states",
                g.bounds.len(),
                g.cells.len()
            )));
        }
        let spec =
            GridSpec::new(g.bounds.iter().map(|b| (b[0], b[1])).collect(), g.cells.clone(), g.time_steps, file.horizon)
                .map_err(|e| bad(format!("grid: {e}")))?;

        let aux = match &file.auxiliary {
            None => None,
            Some(a) => {
                let omega = sample(&a.omega, "auxiliary.omega")?;
                let gf = field(&a.components, dyn_.state.clone(), vec![(a.control.clone(), omega.dim())], "auxiliary")?;
                Some(AuxiliarySystem::new(gf, omega, a.terminal.clone()).map_err(|e| bad(format!("auxiliary: {e}")))?)
            }
        };

        let target = match &file.target {
            TargetSection::Cylinder { terminal } => TargetSpec::Cylinder(terminal.clone()),
            TargetSection::Controllability => TargetSpec::Controllability(
                aux.clone().ok_or_else(|| bad("target kind \"controllability\" needs an auxiliary section".into()))?,
            ),
            TargetSection::Grid { path } => {
                let full = base_dir.join(path);
                let bytes = fs::read(&full).map_err(|e| bad(format!("target grid {}: {e}", full.display())))?;
                let grid =
                    read_binary(bytes.as_slice()).map_err(|e| bad(format!("target grid {}: {e}", full.display())))?;
                if grid.spec() != &spec {
                    return Err(bad(format!("target grid {} does not match the grid section", full.display())));
                }
                TargetSpec::ExplicitGrid(grid)
            }
        };
        let game = GameProblem::new(f, p, q, file.horizon, target).map_err(|e| bad(format!("problem: {e}")))?;
        for a in &file.simulate.adversaries {
            if let AdversaryKind::Constant(k) = a {
                if *k >= game.q().len() {
                    return Err(bad(format!("simulate.adversaries: no second-player sample {k}")));
                }
            }
        }
        Ok(Problem { file, game, aux, spec, base_dir })
    }

    /// The auxiliary system for the transformation: the explicit section,
    /// or `g ≡ 0` over the cylinder's base.
    pub fn transform_aux(&self) -> Result<AuxiliarySystem, CliError> {
        if let Some(a) = &self.aux {
            return Ok(a.clone());
        }
        match &self.file.target {
            TargetSection::Cylinder { terminal } => AuxiliarySystem::cylinder(self.spec.ndim(), terminal.clone())
                .map_err(|e| CliError::Input(format!("auxiliary: {e}"))),
            _ => Err(CliError::Input("this command needs an auxiliary section".into())),
        }
    }

    /// The target grid `M` and the number of dropped one-step landings
    /// while building it.
    pub fn target_grid(&self) -> Result<(TimeSlicedGrid, usize), CliError> {
        Ok(match self.game.target() {
            TargetSpec::Cylinder(t) => (build_target_cylinder(t, &self.spec, false), 0),
            TargetSpec::ExplicitGrid(g) => (g.clone(), 0),
            TargetSpec::Controllability(aux) => {
                let c = build_controllability_target(
                    aux,
                    &self.spec,
                    self.file.solver.membership,
                    self.file.solver.substeps,
                )?;
                (c.grid, c.dropped)
            }
        })
    }

    pub fn sections_options(&self) -> SectionsOptions {
        let s = &self.file.checks.sections;
        SectionsOptions {
            samples_per_slice: s.samples_per_slice,
            random_schedules: s.random_schedules,
            tolerance_cells: s.tolerance_cells,
            substeps: self.file.checks.substeps,
            seed: self.file.seed,
        }
    }

    pub fn trial_options(&self) -> TrialOptions {
        let s = &self.file.simulate;
        TrialOptions {
            starts: s.starts,
            region: s.region,
            adversaries: s.adversaries.clone(),
            partitions: if s.partitions.is_empty() { vec![self.spec.time_steps()] } else { s.partitions.clone() },
            epsilon: s.epsilon,
            step_aware: s.step_aware,
            substeps: s.substeps,
            seed: self.file.seed,
        }
    }
}

fn sample(d: &ControlSetDescriptor, at: &str) -> Result<SampledControlSet, CliError> {
    sample_control_set(d).map_err(|e| CliError::Input(format!("{at}: {e}")))
}

fn field(
    components: &[String],
    state: Option<Vec<String>>,
    groups: Vec<(String, usize)>,
    at: &str,
) -> Result<VectorField, CliError> {
    let err = |e: String| CliError::Input(format!("{at}: {e}"));
    let sig = match state {
        Some(names) => FieldSignature::with_state_names(names, groups),
        None => FieldSignature::new(components.len(), groups),
    }
    .map_err(|e| err(e.to_string()))?;
    parse_field(components, sig).map_err(|e| err(e.to_string()))
}
