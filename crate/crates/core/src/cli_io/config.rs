//! Run configuration files.
//!
//! The format is TOML with fixed sections; every key not listed below is
//! rejected. Profiles over `x` are given either as a number, a named preset,
//! or an arithmetic expression in `x`, `L` and `pi` (functions `sin`, `cos`,
//! `exp`, `tanh`, `sqrt`, `ln`, `abs` are available):
//!
//! ```toml
//! [grid]
//! L = 6.283185307179586
//! Nx = 64
//! Nv = 32
//! v_max = 6.0
//!
//! [physics]
//! lambda = 0.5
//! T_e = 1.0
//! eta_const = 0.1          # or eta_profile = "0.1 + 0.05 * x / L"
//! Bx0 = 0.0
//!
//! [initial]
//! density = "uniform"      # presets: uniform, perturbed
//! temperature = 1.0
//! drift_x = 0.0            # drift_y, drift_z likewise
//! By = "sine"              # presets: zero, sine; or "0.1 * sin(pi * x / L)"
//! Bz = 0.0
//!
//! [imposed]                # optional background field B_imp
//! By = "0.1 * sin(pi * x / L)"
//!
//! [time]
//! dt = 0.01
//! t_end = 5.0
//! splitting_order = "lie"  # or "strang"
//!
//! [solver]                 # all optional
//! newton_tol = 1e-12
//! linear_tol = 1e-12
//! theta = 1.0
//! remap_order = 2
//! limiter = true
//! midpoint_field = false
//!
//! [output]                 # optional
//! cadence = 100
//! directory = "output"
//! ```

use std::path::{Path, PathBuf};

use evalexpr::{
    build_operator_tree, ContextWithMutableFunctions, ContextWithMutableVariables, DefaultNumericTypes,
    EvalexprError, Function, HashMapContext, Node, Value,
};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid_state::{
    make_maxwellian, EtaProfile, ImposedField, PhaseSpaceGrid, RunConfig, SimulationState, SplittingOrder, Vec3,
};
use crate::remap::RemapKernel;
use crate::splitting::initialize_state;

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Profile {
    Value(f64),
    Text(String),
}

impl Profile {
    fn zero() -> Self {
        Profile::Value(0.0)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    #[serde(rename = "L")]
    length: f64,
    #[serde(rename = "Nx")]
    nx: i64,
    #[serde(rename = "Nv")]
    nv: i64,
    v_max: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhysicsSection {
    lambda: f64,
    #[serde(rename = "T_e")]
    t_e: f64,
    eta_const: Option<f64>,
    eta_profile: Option<Profile>,
    #[serde(rename = "Bx0", default)]
    bx0: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    #[serde(default = "uniform")]
    density: Profile,
    #[serde(default = "unit")]
    temperature: f64,
    #[serde(default = "Profile::zero")]
    drift_x: Profile,
    #[serde(default = "Profile::zero")]
    drift_y: Profile,
    #[serde(default = "Profile::zero")]
    drift_z: Profile,
    #[serde(rename = "By", default = "Profile::zero")]
    by: Profile,
    #[serde(rename = "Bz", default = "Profile::zero")]
    bz: Profile,
}

fn uniform() -> Profile {
    Profile::Text("uniform".into())
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImposedSection {
    #[serde(rename = "By", default = "Profile::zero")]
    by: Profile,
    #[serde(rename = "Bz", default = "Profile::zero")]
    bz: Profile,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeSection {
    dt: f64,
    t_end: f64,
    #[serde(default)]
    splitting_order: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    newton_tol: Option<f64>,
    linear_tol: Option<f64>,
    theta: Option<f64>,
    remap_order: Option<i64>,
    limiter: Option<bool>,
    midpoint_field: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    cadence: Option<i64>,
    directory: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    grid: GridSection,
    physics: PhysicsSection,
    initial: InitialSection,
    imposed: Option<ImposedSection>,
    time: TimeSection,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    output: OutputSection,
}

/// Everything needed to build the initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialRecipe {
    pub density: Vec<f64>,
    pub temperature: f64,
    pub drift: Vec<Vec3>,
    pub bx0: f64,
    pub by: Vec<f64>,
    pub bz: Vec<f64>,
}

/// A parsed and validated configuration file.
#[derive(Clone, Debug)]
pub struct RunSetup {
    pub grid: PhaseSpaceGrid,
    pub config: RunConfig,
    pub initial: InitialRecipe,
    /// Number of steps of size `dt` reaching `t_end`.
    pub steps: u64,
    pub output_dir: PathBuf,
}

impl RunSetup {
    /// Maxwellian initial state with `n_e` solved from the initial density.
    pub fn initial_state(&self) -> Result<SimulationState> {
        let r = &self.initial;
        let f = make_maxwellian(&self.grid, &r.density, r.temperature, &r.drift)?;
        initialize_state(f, r.bx0, r.by.clone(), r.bz.clone(), &self.config)
    }
}

pub fn parse_config(path: &Path) -> Result<RunSetup> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text, path)
}

/// Parses configuration text; `origin` is only used in error messages.
pub fn parse_config_str(text: &str, origin: &Path) -> Result<RunSetup> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        Error::Parse {
            path: origin.to_path_buf(),
            line,
            message: e.message().to_string(),
        }
    })?;
    build(file)
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

fn build(file: ConfigFile) -> Result<RunSetup> {
    let g = &file.grid;
    if g.nx < 1 {
        return Err(invalid(format!("Nx must be >= 1, got {}", g.nx)));
    }
    if g.nv < 2 || g.nv % 2 != 0 {
        return Err(invalid(format!(
            "Nv must be even and >= 2 so that the reflection v_x -> -v_x maps the velocity grid onto itself, got {}",
            g.nv
        )));
    }
    let grid = PhaseSpaceGrid::new(g.length, g.nx as usize, g.nv as usize, g.v_max).map_err(|e| match e {
        Error::InvalidInput(m) => invalid(m),
        other => other,
    })?;

    let p = &file.physics;
    let eta = match (&p.eta_const, &p.eta_profile) {
        (Some(c), None) => EtaProfile::constant(&grid, *c),
        (None, Some(profile)) => {
            let eval = ProfileEval::new(profile, grid.length, &[])?;
            let values: Vec<f64> = (0..=grid.nx).map(|k| eval.at(grid.face_x(k))).collect::<Result<_>>()?;
            let centers: Vec<f64> = grid.x_centers.iter().map(|&x| eval.at(x)).collect::<Result<_>>()?;
            EtaProfile {
                centers,
                faces: values,
            }
        }
        (Some(_), Some(_)) => return Err(invalid("give either eta_const or eta_profile, not both")),
        (None, None) => return Err(invalid("missing resistivity: set eta_const or eta_profile")),
    };

    let t = &file.time;
    let mut config = RunConfig::new(&grid, p.lambda, p.t_e, 0.1, t.dt);
    config.eta = eta;
    config.t_end = t.t_end;
    config.splitting = match t.splitting_order.as_deref().map(str::to_ascii_lowercase).as_deref() {
        None | Some("lie") => SplittingOrder::Lie,
        Some("strang") => SplittingOrder::Strang,
        Some(other) => return Err(invalid(format!("splitting_order must be \"lie\" or \"strang\", got \"{other}\""))),
    };
    let s = &file.solver;
    if let Some(v) = s.newton_tol {
        config.newton_tol = v;
    }
    if let Some(v) = s.linear_tol {
        config.linear_tol = v;
    }
    if let Some(v) = s.theta {
        config.theta = v;
    }
    if let Some(v) = s.midpoint_field {
        config.midpoint_field = v;
    }
    let order = s.remap_order.unwrap_or(2);
    let limited = s.limiter.unwrap_or(true);
    config.kernel = u8::try_from(order)
        .ok()
        .and_then(|o| RemapKernel::from_order(o, limited))
        .ok_or_else(|| invalid(format!("remap_order must be 1 or 2, got {order}")))?;
    if order == 1 && !limited {
        return Err(invalid("limiter = false requires remap_order = 2"));
    }
    let cadence = file.output.cadence.unwrap_or(0);
    if cadence < 0 {
        return Err(invalid(format!("output cadence must be >= 0, got {cadence}")));
    }
    config.output_cadence = cadence as usize;

    if let Some(imp) = &file.imposed {
        let by = ProfileEval::new(&imp.by, grid.length, &[])?;
        let bz = ProfileEval::new(&imp.bz, grid.length, &[])?;
        // Evaluate once, including the ghost points, so errors surface here.
        for x in [-0.5 * grid.dx, grid.length + 0.5 * grid.dx].into_iter().chain(grid.x_centers.iter().copied()) {
            by.at(x)?;
            bz.at(x)?;
        }
        let field = ImposedField::from_fn(&grid, |x| (by.at(x).unwrap_or(f64::NAN), bz.at(x).unwrap_or(f64::NAN)));
        if !field.w1_inf().is_finite() {
            return Err(invalid("imposed field must be finite with a finite current"));
        }
        config.imposed = Some(field);
    }
    config.validate()?;

    let steps_f = t.t_end / t.dt;
    let steps = steps_f.round();
    if (steps - steps_f).abs() > 1e-9 * steps_f.max(1.0) {
        return Err(invalid(format!("t_end = {} is not a whole number of steps dt = {}", t.t_end, t.dt)));
    }

    let init = &file.initial;
    let sample = |profile: &Profile, presets: &[(&str, &str)]| -> Result<Vec<f64>> {
        let eval = ProfileEval::new(profile, grid.length, presets)?;
        grid.x_centers.iter().map(|&x| eval.at(x)).collect()
    };
    let density = sample(&init.density, DENSITY_PRESETS)?;
    if let Some(d) = density.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
        return Err(invalid(format!("initial density must be finite and >= 0, got {d}")));
    }
    if !(init.temperature > 0.0) {
        return Err(invalid(format!("temperature must be > 0, got {}", init.temperature)));
    }
    let dx_ = sample(&init.drift_x, &[])?;
    let dy_ = sample(&init.drift_y, &[])?;
    let dz_ = sample(&init.drift_z, &[])?;
    let drift = (0..grid.nx).map(|i| [dx_[i], dy_[i], dz_[i]]).collect();
    let initial = InitialRecipe {
        density,
        temperature: init.temperature,
        drift,
        bx0: p.bx0,
        by: sample(&init.by, FIELD_PRESETS)?,
        bz: sample(&init.bz, FIELD_PRESETS)?,
    };
    Ok(RunSetup {
        grid,
        config,
        initial,
        steps: steps as u64,
        output_dir: file.output.directory.unwrap_or_else(|| PathBuf::from("output")),
    })
}

const DENSITY_PRESETS: &[(&str, &str)] = &[("uniform", "1.0"), ("perturbed", "1.0 + 0.01 * cos(2.0 * pi * x / L)")];
const FIELD_PRESETS: &[(&str, &str)] = &[("zero", "0.0"), ("sine", "0.1 * sin(pi * x / L)")];

/// A compiled profile expression.
struct ProfileEval {
    constant: Option<f64>,
    tree: Option<Node<DefaultNumericTypes>>,
    context: HashMapContext<DefaultNumericTypes>,
    source: String,
}

fn math(f: fn(f64) -> f64) -> Function<DefaultNumericTypes> {
    Function::new(move |arg: &Value<DefaultNumericTypes>| Ok(Value::Float(f(arg.as_number()?))))
}

impl ProfileEval {
    fn new(profile: &Profile, length: f64, presets: &[(&str, &str)]) -> Result<Self> {
        let mut context = HashMapContext::<DefaultNumericTypes>::new();
        let text = match profile {
            Profile::Value(v) => {
                return Ok(Self {
                    constant: Some(*v),
                    tree: None,
                    context,
                    source: v.to_string(),
                })
            }
            Profile::Text(t) => presets.iter().find(|(name, _)| *name == t.trim()).map_or(t.as_str(), |p| p.1),
        };
        let setup = |ctx: &mut HashMapContext<DefaultNumericTypes>| -> std::result::Result<(), EvalexprError> {
            ctx.set_value("L".into(), Value::Float(length))?;
            ctx.set_value("pi".into(), Value::Float(std::f64::consts::PI))?;
            for (name, f) in [
                ("sin", f64::sin as fn(f64) -> f64),
                ("cos", f64::cos),
                ("exp", f64::exp),
                ("tanh", f64::tanh),
                ("sqrt", f64::sqrt),
                ("ln", f64::ln),
                ("abs", f64::abs),
            ] {
                ctx.set_function(name.into(), math(f))?;
            }
            Ok(())
        };
        setup(&mut context).map_err(|e| invalid(format!("expression context: {e}")))?;
        let tree = build_operator_tree::<DefaultNumericTypes>(text)
            .map_err(|e| invalid(format!("cannot parse profile \"{text}\": {e}")))?;
        Ok(Self {
            constant: None,
            tree: Some(tree),
            context,
            source: text.to_string(),
        })
    }

    fn at(&self, x: f64) -> Result<f64> {
        if let Some(c) = self.constant {
            return Ok(c);
        }
        let mut ctx = self.context.clone();
        ctx.set_value("x".into(), Value::Float(x))
            .map_err(|e| invalid(format!("expression context: {e}")))?;
        let tree = self.tree.as_ref().expect("expression profile has a tree");
        let v = tree
            .eval_number_with_context(&ctx)
            .map_err(|e| invalid(format!("cannot evaluate profile \"{}\" at x = {x}: {e}", self.source)))?;
        if !v.is_finite() {
            return Err(invalid(format!("profile \"{}\" is not finite at x = {x}", self.source)));
        }
        Ok(v)
    }
}
