//! Command line front end: configuration, the four commands and exit codes.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical abort,
//! 4 verification failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{
    self, decay_rate, lojasiewicz_slope, perturbed_identity, random_exact, seeded_rng, write_trace,
    Classification, FlowConfig, InitialCondition, Integrator, Status,
};
use crate::forms::{
    cohomology_class, whitney_residual, CellField, CellFieldDump, ClosedBasis, CohClass, FormsError,
};
use crate::mesh::{build_mesh, Lattice, MeshError, PolyMap, TorusMesh};
use crate::quatgeom::{Matrix4, Vector4};
use crate::rebuild::{is_integral_class, primitive, round_trip_error, verify_symplectic, write_plot_data, MapExport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("numerical abort: {0}")]
    Numerical(String),
    #[error("verification failed: {0}")]
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Verify(_) => EXIT_VERIFY,
        }
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn basis_err(e: FormsError) -> CliError {
    match e {
        FormsError::SingularGram => CliError::Numerical(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn identity_rows() -> [[f64; 4]; 4] {
    std::array::from_fn(|r| std::array::from_fn(|c| if r == c { 1.0 } else { 0.0 }))
}

fn matrix_of(rows: &[[f64; 4]; 4]) -> Matrix4 {
    Matrix4::from_fn(|r, c| rows[r][c])
}

fn rows_of(m: &Matrix4) -> [[f64; 4]; 4] {
    std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
}

/// Experiment configuration. Every field has a default, so `{}` is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Seeds the ChaCha8 generator behind all random initial data.
    pub seed: u64,
    pub lattice: LatticeSection,
    pub mesh: MeshSection,
    pub alpha: AlphaSection,
    pub init: InitSection,
    pub integrator: IntegratorSection,
    pub stopping: StoppingSection,
    pub output: OutputSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            lattice: LatticeSection::default(),
            mesh: MeshSection::default(),
            alpha: AlphaSection::default(),
            init: InitSection::PerturbedIdentity { epsilon: 0.05 },
            integrator: IntegratorSection::default(),
            stopping: StoppingSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSection {
    /// One generator per row.
    pub generators: [[f64; 4]; 4],
}

impl Default for LatticeSection {
    fn default() -> Self {
        LatticeSection { generators: identity_rows() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSection {
    pub m: usize,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection { m: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlphaSection {
    /// Row-major; all zeros selects the degenerate (exact-only) mode.
    pub matrix: [[f64; 4]; 4],
}

impl Default for AlphaSection {
    fn default() -> Self {
        AlphaSection { matrix: identity_rows() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSection {
    Identity,
    /// `Id + ε·𝒟u`, `u` uniform in `[−1, 1]⁴` per vertex.
    PerturbedIdentity { epsilon: f64 },
    /// `𝒟u` rescaled to the given `𝒢`-norm.
    Exact { norm: f64 },
    /// Differential of `x ↦ A x` (row-major `A`, integer entries for a map of the torus).
    LinearMap { matrix: [[f64; 4]; 4] },
    Coords { values: Vec<f64> },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub method: Integrator,
    pub h0: f64,
    pub adaptive: bool,
    pub max_step: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let d = FlowConfig::default();
        IntegratorSection { method: d.integrator, h0: d.h0, adaptive: d.adaptive, max_step: d.max_step }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoppingSection {
    pub mu_tol: f64,
    pub max_time: f64,
    pub max_steps: usize,
    pub tau_min: f64,
}

impl Default for StoppingSection {
    fn default() -> Self {
        let d = FlowConfig::default();
        StoppingSection { mu_tol: d.mu_tol, max_time: d.max_time, max_steps: d.max_steps, tau_min: d.tau_min }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub trace_stride: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), trace_stride: 1 }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            integrator: self.integrator.method,
            h0: self.integrator.h0,
            adaptive: self.integrator.adaptive,
            max_step: self.integrator.max_step,
            mu_tol: self.stopping.mu_tol,
            max_time: self.stopping.max_time,
            max_steps: self.stopping.max_steps,
            trace_stride: self.output.trace_stride,
            tau_min: self.stopping.tau_min,
        }
    }

    pub fn lattice(&self) -> Result<Lattice, CliError> {
        Ok(Lattice::from_rows(self.lattice.generators)?)
    }

    pub fn build_mesh(&self) -> Result<Arc<TorusMesh>, CliError> {
        Ok(Arc::new(build_mesh(self.lattice()?, self.mesh.m)?))
    }

    pub fn alpha(&self) -> Matrix4 {
        matrix_of(&self.alpha.matrix)
    }
}

#[derive(Debug, Parser)]
#[command(name = "hkflow", version, about = "Moment map flow on triangulated 4-tori")]
pub struct Cli {
    /// Bound on worker threads for per-cell loops.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mesh counts, volume and the dimension of the closed-form basis.
    MeshInfo(MeshInfoArgs),
    /// Run the flow and write trace.csv, final.form and summary.json.
    Flow(FlowArgs),
    /// Check a form file: Whitney residual, integrality, symplectic defect.
    Verify(VerifyArgs),
    /// Integrate a form with integral class into a polyhedral map.
    ExportMap(ExportArgs),
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Overrides {
    fn config(&self) -> Result<Config, CliError> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(m) = self.m {
            cfg.mesh.m = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct MeshInfoArgs {
    #[command(flatten)]
    pub common: Overrides,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[command(flatten)]
    pub common: Overrides,
    #[arg(long, value_parser = parse_integrator)]
    pub integrator: Option<Integrator>,
    #[arg(long)]
    pub h0: Option<f64>,
    #[arg(long)]
    pub adaptive: Option<bool>,
    #[arg(long)]
    pub max_step: Option<f64>,
    #[arg(long)]
    pub mu_tol: Option<f64>,
    #[arg(long)]
    pub max_time: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub tau_min: Option<f64>,
    #[arg(long)]
    pub trace_stride: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_integrator(s: &str) -> Result<Integrator, String> {
    match s {
        "euler" => Ok(Integrator::Euler),
        "rk4" => Ok(Integrator::Rk4),
        _ => Err(format!("unknown integrator {s:?} (expected euler or rk4)")),
    }
}

impl FlowArgs {
    pub fn config(&self) -> Result<Config, CliError> {
        let mut cfg = self.common.config()?;
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        set!(cfg.integrator.method, self.integrator);
        set!(cfg.integrator.h0, self.h0);
        set!(cfg.integrator.adaptive, self.adaptive);
        set!(cfg.integrator.max_step, self.max_step);
        set!(cfg.stopping.mu_tol, self.mu_tol);
        set!(cfg.stopping.max_time, self.max_time);
        set!(cfg.stopping.max_steps, self.max_steps);
        set!(cfg.stopping.tau_min, self.tau_min);
        set!(cfg.output.trace_stride, self.trace_stride);
        set!(cfg.output.dir, self.out.clone());
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Form file written by `flow`.
    pub form: PathBuf,
    /// Symplectic defect tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub whitney_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub integral_tol: f64,
    /// Divide by the class multiplier `τ` first (needs `alpha` in the file).
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub form: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub base: usize,
    #[arg(long, default_value = "map.json")]
    pub out: PathBuf,
    /// Companion CSV with vertex positions and images.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshInfo {
    pub m: usize,
    pub vertices: usize,
    pub cells: usize,
    pub faces: usize,
    pub edges: usize,
    pub total_volume: f64,
    pub basis_dim: usize,
    pub degenerate: bool,
    pub mesh_hash: String,
}

pub fn cmd_mesh_info(cfg: &Config) -> Result<MeshInfo, CliError> {
    let mesh = cfg.build_mesh()?;
    let basis = ClosedBasis::new(mesh.clone(), cfg.alpha()).map_err(basis_err)?;
    Ok(MeshInfo {
        m: mesh.subdivisions(),
        vertices: mesh.n_vertices(),
        cells: mesh.n_cells(),
        faces: mesh.faces().len(),
        edges: mesh.edges().len(),
        total_volume: mesh.total_volume(),
        basis_dim: basis.dim(),
        degenerate: basis.is_degenerate(),
        mesh_hash: mesh.hash().to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub status: String,
    pub steps: usize,
    pub final_mu_norm: f64,
    pub tau: f64,
    pub classification: String,
    pub t: f64,
    pub final_norm2: f64,
    pub max_whitney_residual: f64,
    pub rhs_norm: f64,
    pub abort_reason: Option<String>,
    pub decay_rate: Option<f64>,
    pub lojasiewicz_slope: Option<f64>,
    pub seed: u64,
    pub m: usize,
    pub mesh_hash: String,
}

fn label<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn read_form(path: &Path) -> Result<(Arc<TorusMesh>, CellField, Option<Matrix4>), CliError> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let dump: CellFieldDump = serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let mesh = Arc::new(build_mesh(Lattice::from_rows(dump.lattice)?, dump.m)?);
    let f = CellField::from_dump(&mesh, &dump).map_err(config_err)?;
    Ok((mesh, f, dump.alpha.as_ref().map(matrix_of)))
}

fn write_form(path: &Path, mesh: &TorusMesh, f: &CellField, alpha: &Matrix4) -> Result<(), CliError> {
    let mut dump = f.to_dump(mesh);
    dump.alpha = Some(rows_of(alpha));
    fs::write(path, serde_json::to_string_pretty(&dump).map_err(config_err)?)?;
    Ok(())
}

fn initial_condition(cfg: &Config, mesh: &Arc<TorusMesh>, dim: usize) -> Result<InitialCondition, CliError> {
    let mut rng = seeded_rng(cfg.seed);
    Ok(match &cfg.init {
        InitSection::Identity => InitialCondition::Identity,
        InitSection::PerturbedIdentity { epsilon } => {
            InitialCondition::Field(perturbed_identity(mesh, *epsilon, &mut rng))
        }
        InitSection::Exact { norm } => InitialCondition::Field(random_exact(mesh, *norm, &mut rng)),
        InitSection::LinearMap { matrix } => {
            let map = PolyMap::affine(mesh, &matrix_of(matrix), &Vector4::zeros());
            InitialCondition::Field(crate::forms::diff_of_map(mesh, &map, 1e-9).map_err(config_err)?)
        }
        InitSection::Coords { values } => {
            if values.len() != dim {
                return Err(config_err(format!("init coords have length {}, basis has {dim}", values.len())));
            }
            InitialCondition::Coords(DVector::from_vec(values.clone()))
        }
        InitSection::File { path } => {
            let (m2, f, _) = read_form(path)?;
            if m2.hash() != mesh.hash() {
                return Err(config_err("initial form was written for a different mesh"));
            }
            InitialCondition::Field(f)
        }
    })
}

/// Run the flow and write its outputs into `cfg.output.dir`.
pub fn cmd_flow(cfg: &Config) -> Result<Summary, CliError> {
    let fcfg = cfg.flow_config();
    fcfg.validate().map_err(CliError::Config)?;
    let mesh = cfg.build_mesh()?;
    let alpha = cfg.alpha();
    let basis = ClosedBasis::new(mesh.clone(), alpha).map_err(basis_err)?;
    let init = initial_condition(cfg, &mesh, basis.dim())?;
    let result = flow::run(&basis, &init, &fcfg);

    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    let trace_file = fs::File::create(dir.join("trace.csv"))?;
    write_trace(std::io::BufWriter::new(trace_file), &result.state.trace).map_err(config_err)?;
    let f = result.final_field();
    write_form(&dir.join("final.form"), &mesh, f, &alpha)?;
    if result.classification == Classification::Generic && result.status == Status::Converged {
        write_form(&dir.join("final_normalized.form"), &mesh, &f.scale(1.0 / result.tau), &alpha)?;
    }
    let summary = Summary {
        status: label(&result.status),
        steps: result.state.steps,
        final_mu_norm: result.final_mu_norm,
        tau: result.tau,
        classification: label(&result.classification),
        t: result.state.t,
        final_norm2: crate::forms::norm2_g(&mesh, f),
        max_whitney_residual: whitney_residual(&mesh, f).max,
        rhs_norm: crate::forms::norm2_g(&mesh, &flow::rhs(&basis, f)).sqrt(),
        abort_reason: result.abort_reason.clone(),
        decay_rate: decay_rate(&result.state.trace, 50),
        lojasiewicz_slope: lojasiewicz_slope(&result.state.trace, 50),
        seed: cfg.seed,
        m: cfg.mesh.m,
        mesh_hash: mesh.hash().to_string(),
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary).map_err(config_err)?)?;
    if result.status == Status::Aborted {
        return Err(CliError::Numerical(result.abort_reason.unwrap_or_default()));
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub normalized_by: Option<f64>,
    pub whitney_residual: f64,
    pub whitney_pass: bool,
    pub class_integral: bool,
    pub class_max_dev: f64,
    pub class_rounded: [[f64; 4]; 4],
    pub max_symplectic_defect: f64,
    pub max_asd_defect: f64,
    pub symplectic_pass: bool,
    pub homeomorphism: &'static str,
}

fn class_multiplier(mesh: &TorusMesh, f: &CellField, alpha: Option<Matrix4>, tol: f64) -> Result<f64, CliError> {
    let alpha = alpha.ok_or_else(|| config_err("--normalize needs a form file that records alpha"))?;
    let pa = CohClass::of_constant(mesh, &alpha);
    if pa.dot(&pa) == 0.0 {
        return Err(config_err("cannot normalize: alpha is zero"));
    }
    let p = cohomology_class(mesh, f, tol).map_err(|e| CliError::Verify(e.to_string()))?;
    let tau = p.dot(&pa) / pa.dot(&pa);
    if tau == 0.0 {
        return Err(CliError::Verify("class multiplier is zero".into()));
    }
    Ok(tau)
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<VerifyReport, CliError> {
    let (mesh, mut f, alpha) = read_form(&args.form)?;
    let mut normalized_by = None;
    if args.normalize {
        let tau = class_multiplier(&mesh, &f, alpha, args.whitney_tol)?;
        f = f.scale(1.0 / tau);
        normalized_by = Some(tau);
    }
    let w = whitney_residual(&mesh, &f);
    let whitney_pass = w.max <= args.whitney_tol;
    let integrality = whitney_pass.then(|| {
        is_integral_class(&crate::forms::periods(&mesh, &f), mesh.lattice(), args.integral_tol)
    });
    let s = verify_symplectic(&f, args.tol);
    let class_integral = integrality.as_ref().is_some_and(|r| r.integral);
    Ok(VerifyReport {
        pass: whitney_pass && class_integral && s.verdict,
        normalized_by,
        whitney_residual: w.max,
        whitney_pass,
        class_integral,
        class_max_dev: integrality.as_ref().map_or(f64::NAN, |r| r.max_dev),
        class_rounded: integrality.as_ref().map_or([[f64::NAN; 4]; 4], |r| rows_of(&r.rounded)),
        max_symplectic_defect: s.max_defect,
        max_asd_defect: s.max_asd_defect,
        symplectic_pass: s.verdict,
        homeomorphism: s.homeomorphism,
    })
}

pub fn cmd_export_map(args: &ExportArgs) -> Result<MapExport, CliError> {
    let (mesh, mut f, alpha) = read_form(&args.form)?;
    if args.normalize {
        f = f.scale(1.0 / class_multiplier(&mesh, &f, alpha, args.tol)?);
    }
    let p = primitive(&mesh, &f, args.base, args.tol).map_err(|e| CliError::Verify(e.to_string()))?;
    let err = round_trip_error(&mesh, &f, &p, args.tol).map_err(|e| CliError::Verify(e.to_string()))?;
    if err > args.tol {
        return Err(CliError::Verify(format!("round-trip error {err:e}")));
    }
    let export = MapExport::new(&mesh, &p);
    fs::write(&args.out, serde_json::to_string_pretty(&export).map_err(config_err)?)?;
    if let Some(plot) = &args.plot {
        write_plot_data(std::io::BufWriter::new(fs::File::create(plot)?), &mesh, &p).map_err(config_err)?;
    }
    Ok(export)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        // a pool may already exist when called repeatedly in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match cli.command {
        Command::MeshInfo(a) => {
            let info = cmd_mesh_info(&a.common.config()?)?;
            if a.json {
                println!("{}", serde_json::to_string_pretty(&info).map_err(config_err)?);
            } else {
                println!("m             {}", info.m);
                println!("vertices      {}", info.vertices);
                println!("cells         {}", info.cells);
                println!("faces         {}", info.faces);
                println!("edges         {}", info.edges);
                println!("total volume  {}", info.total_volume);
                println!("basis dim     {}{}", info.basis_dim, if info.degenerate { " (degenerate)" } else { "" });
                println!("mesh hash     {}", info.mesh_hash);
            }
        }
        Command::Flow(a) => {
            let s = cmd_flow(&a.config()?)?;
            println!("{}", serde_json::to_string_pretty(&s).map_err(config_err)?);
        }
        Command::Verify(a) => {
            let r = cmd_verify(&a)?;
            if a.json {
                println!("{}", serde_json::to_string_pretty(&r).map_err(config_err)?);
            } else {
                println!("whitney residual   {:e} {}", r.whitney_residual, pass_fail(r.whitney_pass));
                println!("integral class     dev {:e} {}", r.class_max_dev, pass_fail(r.class_integral));
                println!("symplectic defect  {:e} {}", r.max_symplectic_defect, pass_fail(r.symplectic_pass));
                println!("ASD defect         {:e}", r.max_asd_defect);
                println!("homeomorphism      {}", r.homeomorphism);
            }
            if !r.pass {
                return Err(CliError::Verify("one or more certificates failed".into()));
            }
        }
        Command::ExportMap(a) => {
            let e = cmd_export_map(&a)?;
            println!("wrote {} (max closure defect {:e})", a.out.display(), e.max_closure_defect);
        }
    }
    Ok(())
}

fn pass_fail(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
