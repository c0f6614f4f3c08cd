//! Convergence studies: a sequence of meshes, one solve per level, and the
//! error/rate report.
//!
//! Configuration is flat `key = value` text; `#` starts a comment. Keys:
//!
//! | key | value | default |
//! |---|---|---|
//! | `case` | catalog name | `ex1-sin2` |
//! | `mesh` | `tri`, `tri-perturbed`, `quad`, `mixed`, `lshape` | from the case domain |
//! | `levels` | comma list of subdivisions `n` | `10,20,40` |
//! | `mesh_files` | comma list of mesh paths, replaces the generator | |
//! | `m` | comma list of degrees | `2` |
//! | `patch` | `example1`, `example2`, `example3`, `custom:N` | from `mesh` |
//! | `mu`, `eta` | penalty constants | `m^4`, `m^2` (baseline: `2 m^6`, `5 m^2`) |
//! | `mode` | `reconstructed`, `baseline-full-dg` | `reconstructed` |
//! | `solver` | `direct-cholesky`, `cg` | `direct-cholesky` |
//! | `out` | output directory | `results` |
//! | `lambda` | estimate the stability constant | `true` |
//! | `probe` | run the coercivity probe | `false` |
//! | `dump_matrix` | write MatrixMarket files | `false` |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::assembly::{assemble, coercivity_probe, AssemblyError, DgSpace, Mode, PenaltyConfig};
use crate::mesh::{
    generate_lshape_tri, generate_structured_mixed, generate_structured_quad, generate_structured_tri, import_mesh,
    perturb_interior, MeshError, PolyMesh, Rect,
};
use crate::patch::{build_patches, patch_size_for_degree, PatchError, PatchProfile};
use crate::problems::{get_case, Domain, ManufacturedCase};
use crate::recon::{build_recon, estimate_lambda, ReconError};
use crate::solve::{compute_errors, convergence_rates, solve, ErrorReport, Rate, RateRow, SolveError, SolverKind};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("config: {0}")]
    Config(String),
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl StudyError {
    pub fn exit_code(&self) -> i32 {
        match self {
            StudyError::Config(_) => 2,
            StudyError::Numerical(_) => 3,
            StudyError::Io(_) => 4,
        }
    }
}

impl From<MeshError> for StudyError {
    fn from(e: MeshError) -> Self {
        match e {
            MeshError::InvalidArgument(_) => StudyError::Config(e.to_string()),
            _ => StudyError::Io(e.to_string()),
        }
    }
}

impl StudyError {
    /// Mesh failure while reading `path`.
    pub fn mesh_file(path: &Path, e: MeshError) -> Self {
        match e {
            MeshError::Io(io) => StudyError::Io(format!("{}: {io}", path.display())),
            other => StudyError::Io(format!("{}: {other}", path.display())),
        }
    }
}

impl From<PatchError> for StudyError {
    fn from(e: PatchError) -> Self {
        StudyError::Config(e.to_string())
    }
}

impl From<ReconError> for StudyError {
    fn from(e: ReconError) -> Self {
        StudyError::Numerical(e.to_string())
    }
}

impl From<SolveError> for StudyError {
    fn from(e: SolveError) -> Self {
        StudyError::Numerical(e.to_string())
    }
}

impl From<AssemblyError> for StudyError {
    fn from(e: AssemblyError) -> Self {
        match e {
            AssemblyError::Solve(_) | AssemblyError::ProbeNotConverged { .. } => StudyError::Numerical(e.to_string()),
            _ => StudyError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for StudyError {
    fn from(e: std::io::Error) -> Self {
        StudyError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Tri,
    /// `Tri` with interior vertices jittered by up to 20% of the local edge length.
    TriPerturbed,
    Quad,
    Mixed,
    LShape,
}

impl Generator {
    pub fn name(&self) -> &'static str {
        match self {
            Generator::Tri => "tri",
            Generator::TriPerturbed => "tri-perturbed",
            Generator::Quad => "quad",
            Generator::Mixed => "mixed",
            Generator::LShape => "lshape",
        }
    }

    pub fn generate(&self, n: usize) -> Result<PolyMesh, MeshError> {
        match self {
            Generator::Tri => generate_structured_tri(n, Rect::UNIT),
            Generator::TriPerturbed => {
                perturb_interior(&generate_structured_tri(n, Rect::UNIT)?, PERTURBATION, n as u64)
            }
            Generator::Quad => generate_structured_quad(n, n, Rect::UNIT),
            Generator::Mixed => generate_structured_mixed(n, Rect::UNIT),
            Generator::LShape => generate_lshape_tri(n),
        }
    }

    pub fn default_profile(&self) -> PatchProfile {
        match self {
            Generator::Tri | Generator::TriPerturbed | Generator::LShape => PatchProfile::Example1,
            // the example2 sizes leave boundary patches on four grid rows for m >= 4
            Generator::Quad | Generator::Mixed => PatchProfile::Example3,
        }
    }
}

impl FromStr for Generator {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tri" => Ok(Generator::Tri),
            "tri-perturbed" => Ok(Generator::TriPerturbed),
            "quad" => Ok(Generator::Quad),
            "mixed" => Ok(Generator::Mixed),
            "lshape" => Ok(Generator::LShape),
            other => Err(StudyError::Config(format!(
                "unknown mesh generator {other:?} (expected tri, tri-perturbed, quad, mixed or lshape)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Generated { generator: Generator, levels: Vec<usize> },
    Files(Vec<PathBuf>),
}

impl MeshSource {
    pub fn num_levels(&self) -> usize {
        match self {
            MeshSource::Generated { levels, .. } => levels.len(),
            MeshSource::Files(f) => f.len(),
        }
    }

    pub fn load(&self, level: usize) -> Result<PolyMesh, StudyError> {
        match self {
            MeshSource::Generated { generator, levels } => Ok(generator.generate(levels[level])?),
            MeshSource::Files(files) => Ok(import_mesh(&files[level])
                .map_err(|e| StudyError::mesh_file(&files[level], e))?
                .mesh),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub case: String,
    pub mesh: MeshSource,
    pub degrees: Vec<usize>,
    pub patch: PatchProfile,
    pub mu: Option<f64>,
    pub eta: Option<f64>,
    pub mode: Mode,
    pub solver: SolverKind,
    pub out: PathBuf,
    pub lambda: bool,
    pub probe: bool,
    pub dump_matrix: bool,
}

pub const MAX_DEGREE: usize = 8;
const PERTURBATION: f64 = 0.2;

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, StudyError> {
    v.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| StudyError::Config(format!("{key}: cannot parse {s:?}")))
        })
        .collect()
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, StudyError> {
    v.parse()
        .map_err(|_| StudyError::Config(format!("{key}: cannot parse {v:?}")))
}

pub const KEYS: [&str; 14] = [
    "case",
    "mesh",
    "levels",
    "mesh_files",
    "m",
    "patch",
    "mu",
    "eta",
    "mode",
    "solver",
    "out",
    "lambda",
    "probe",
    "dump_matrix",
];

/// Parses `key = value` lines into a map, rejecting unknown and repeated
/// keys.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>, StudyError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| StudyError::Config(format!("line {}: expected key = value", i + 1)))?;
        let k = k.trim().to_string();
        if !KEYS.contains(&k.as_str()) {
            return Err(StudyError::Config(format!("line {}: unknown key {k:?}", i + 1)));
        }
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(StudyError::Config(format!("line {}: duplicate key {k:?}", i + 1)));
        }
    }
    Ok(map)
}

impl StudyConfig {
    /// Builds a config from key-value pairs; missing keys take defaults.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, StudyError> {
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(StudyError::Config(format!("unknown key {k:?}")));
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let case = get("case").unwrap_or("ex1-sin2").to_string();
        let probe_case = get_case(&case, 2).map_err(|e| StudyError::Config(e.to_string()))?;
        let generator = match get("mesh") {
            Some(g) => g.parse()?,
            None => match probe_case.domain {
                Domain::LShape => Generator::LShape,
                Domain::UnitSquare => Generator::Tri,
            },
        };
        let mesh = match get("mesh_files") {
            Some(files) => MeshSource::Files(parse_list::<PathBuf>("mesh_files", files)?),
            None => MeshSource::Generated {
                generator,
                levels: parse_list("levels", get("levels").unwrap_or("10,20,40"))?,
            },
        };
        let patch = match get("patch") {
            Some(p) => p.parse::<PatchProfile>()?,
            None => generator.default_profile(),
        };
        let cfg = StudyConfig {
            case,
            mesh,
            degrees: parse_list("m", get("m").unwrap_or("2"))?,
            patch,
            mu: get("mu").map(|v| parse_value("mu", v)).transpose()?,
            eta: get("eta").map(|v| parse_value("eta", v)).transpose()?,
            mode: get("mode")
                .unwrap_or("reconstructed")
                .parse()
                .map_err(StudyError::Config)?,
            solver: get("solver")
                .unwrap_or("direct-cholesky")
                .parse()
                .map_err(StudyError::Config)?,
            out: PathBuf::from(get("out").unwrap_or("results")),
            lambda: parse_value("lambda", get("lambda").unwrap_or("true"))?,
            probe: parse_value("probe", get("probe").unwrap_or("false"))?,
            dump_matrix: parse_value("dump_matrix", get("dump_matrix").unwrap_or("false"))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, StudyError> {
        Self::from_map(&parse_key_values(text)?)
    }

    pub fn validate(&self) -> Result<(), StudyError> {
        if self.mesh.num_levels() == 0 {
            return Err(StudyError::Config("at least one level is required".into()));
        }
        if let MeshSource::Generated { levels, .. } = &self.mesh {
            if levels.contains(&0) {
                return Err(StudyError::Config("levels must be positive".into()));
            }
        }
        if self.degrees.is_empty() {
            return Err(StudyError::Config("at least one degree m is required".into()));
        }
        for &m in &self.degrees {
            if !(1..=MAX_DEGREE).contains(&m) {
                return Err(StudyError::Config(format!("m = {m} outside 1..={MAX_DEGREE}")));
            }
            if self.mode == Mode::Reconstructed {
                patch_size_for_degree(m, self.patch)?;
            }
            self.penalties(m)?;
        }
        get_case(&self.case, 2).map_err(|e| StudyError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn penalties(&self, m: usize) -> Result<PenaltyConfig, StudyError> {
        let d = PenaltyConfig::default_for(self.mode, m);
        Ok(PenaltyConfig::new(self.mu.unwrap_or(d.mu), self.eta.unwrap_or(d.eta))?)
    }
}

/// Result of one mesh level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult {
    pub level: usize,
    pub cells: usize,
    pub errors: ErrorReport,
    pub lambda_max: Option<f64>,
    pub residual: f64,
    pub iterations: Option<usize>,
    pub coercivity: Option<f64>,
    /// Smallest `sigma_min / sigma_max` of the patch fits.
    pub conditioning: Option<f64>,
}

/// Options of a single solve.
#[derive(Debug, Clone, Copy)]
pub struct LevelOptions {
    pub m: usize,
    pub mode: Mode,
    pub patch: PatchProfile,
    pub penalties: PenaltyConfig,
    pub solver: SolverKind,
    pub lambda: bool,
    pub probe: bool,
}

impl LevelOptions {
    pub fn new(m: usize, mode: Mode, patch: PatchProfile) -> Self {
        LevelOptions {
            m,
            mode,
            patch,
            penalties: PenaltyConfig::default_for(mode, m),
            solver: SolverKind::DirectCholesky,
            lambda: false,
            probe: false,
        }
    }
}

/// Builds the space, assembles, solves and measures the error on `mesh`.
/// Returns the level result and, if requested, the MatrixMarket dump.
pub fn run_level(
    mesh: &PolyMesh,
    case: &ManufacturedCase,
    opts: &LevelOptions,
    dump: bool,
) -> Result<(LevelResult, Option<String>), StudyError> {
    let exact = case
        .exact
        .as_ref()
        .ok_or_else(|| StudyError::Config(format!("case {:?} has no exact solution to measure against", case.name)))?;
    let (space, lambda_max, conditioning) = match opts.mode {
        Mode::Reconstructed => {
            let patches = build_patches(mesh, patch_size_for_degree(opts.m, opts.patch)?)?;
            let op = build_recon(mesh, &patches, opts.m)?;
            let lambda = opts.lambda.then(|| estimate_lambda(&op, mesh, &patches).max);
            (DgSpace::reconstructed(&op), lambda, Some(op.worst_conditioning()))
        }
        Mode::FullDg => (DgSpace::full_dg(mesh, opts.m), None, None),
    };
    let system = assemble(mesh, &space, case, opts.penalties)?;
    let coercivity = if opts.probe {
        Some(coercivity_probe(&system)?.estimate)
    } else {
        None
    };
    let sol = solve(&system.matrix, &system.rhs, opts.solver)?;
    let errors = compute_errors(mesh, &space, &sol.x, exact.as_ref()).map_err(|e| StudyError::Config(e.to_string()))?;
    let dump = dump.then(|| system.matrix.to_matrix_market());
    Ok((
        LevelResult {
            level: 0,
            cells: mesh.num_cells(),
            errors,
            lambda_max,
            residual: sol.residual,
            iterations: sol.iterations,
            coercivity,
            conditioning,
        },
        dump,
    ))
}

/// Per-degree study output.
#[derive(Debug, Clone)]
pub struct DegreeReport {
    pub m: usize,
    pub penalties: PenaltyConfig,
    pub levels: Vec<LevelResult>,
    pub rates: Vec<RateRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_default()
}

fn fmt_rate(r: Option<Rate>) -> String {
    r.map(|r| r.to_string()).unwrap_or_default()
}

impl DegreeReport {
    pub fn csv(&self) -> String {
        let mut s = String::from(
            "level,h,dofs,err_l2,err_energy,err_h2broken,rate_l2,rate_energy,lambda_max,solver_residual\n",
        );
        for (i, l) in self.levels.iter().enumerate() {
            let rate = i.checked_sub(1).and_then(|j| self.rates.get(j));
            let _ = writeln!(
                s,
                "{},{:.6e},{},{:.6e},{:.6e},{:.6e},{},{},{},{:.3e}",
                l.level,
                l.errors.h,
                l.errors.dofs,
                l.errors.l2,
                l.errors.energy,
                l.errors.h2_broken,
                fmt_rate(rate.map(|r| r.l2)),
                fmt_rate(rate.map(|r| r.energy)),
                fmt_opt(l.lambda_max),
                l.residual
            );
        }
        s
    }
}

fn run_degree(cfg: &StudyConfig, m: usize) -> Result<(DegreeReport, Vec<(String, String)>), StudyError> {
    let case = get_case(&cfg.case, m).map_err(|e| StudyError::Config(e.to_string()))?;
    let penalties = cfg.penalties(m)?;
    let opts = LevelOptions {
        m,
        mode: cfg.mode,
        patch: cfg.patch,
        penalties,
        solver: cfg.solver,
        lambda: cfg.lambda && cfg.mode == Mode::Reconstructed,
        probe: cfg.probe,
    };
    let mut levels = Vec::new();
    let mut dumps = Vec::new();
    for level in 0..cfg.mesh.num_levels() {
        let mesh = cfg.mesh.load(level)?;
        let (mut res, dump) = run_level(&mesh, &case, &opts, cfg.dump_matrix)?;
        res.level = level;
        if let Some(d) = dump {
            dumps.push((format!("matrix_m{m}_level{level}.mtx"), d));
        }
        levels.push(res);
    }
    let reports: Vec<ErrorReport> = levels.iter().map(|l| l.errors).collect();
    let rates = if reports.len() >= 2 {
        convergence_rates(&reports)?
    } else {
        Vec::new()
    };
    Ok((
        DegreeReport {
            m,
            penalties,
            levels,
            rates,
        },
        dumps,
    ))
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub degrees: Vec<DegreeReport>,
}

impl StudyReport {
    pub fn csv_name(&self, m: usize) -> String {
        format!("{}_{}_m{m}.csv", self.config.case, self.config.mode.tag())
    }

    pub fn summary(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "case: {}", c.case);
        let _ = writeln!(s, "mode: {}", c.mode.tag());
        match &c.mesh {
            MeshSource::Generated { generator, levels } => {
                let _ = writeln!(s, "mesh: {} levels {:?}", generator.name(), levels);
            }
            MeshSource::Files(f) => {
                let _ = writeln!(
                    s,
                    "mesh files: {}",
                    f.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
                );
            }
        }
        if c.mode == Mode::Reconstructed {
            let _ = writeln!(s, "patch profile: {:?}", c.patch);
        }
        let _ = writeln!(s, "solver: {}", c.solver.tag());
        let _ = writeln!(s, "energy norm: boundary faces included in both jump terms");
        for d in &self.degrees {
            let _ = writeln!(s, "\nm = {}  (mu = {}, eta = {})", d.m, d.penalties.mu, d.penalties.eta);
            let _ = writeln!(
                s,
                "{:>5} {:>10} {:>7} {:>11} {:>7} {:>11} {:>7} {:>11} {:>9}",
                "level", "h", "dofs", "L2", "rate", "energy", "rate", "H2 broken", "Lambda"
            );
            for (i, l) in d.levels.iter().enumerate() {
                let r = i.checked_sub(1).and_then(|j| d.rates.get(j));
                let _ = writeln!(
                    s,
                    "{:>5} {:>10.4e} {:>7} {:>11.4e} {:>7} {:>11.4e} {:>7} {:>11.4e} {:>9}",
                    l.level,
                    l.errors.h,
                    l.errors.dofs,
                    l.errors.l2,
                    r.map(|r| format!("{:.2}", rate_value(r.l2)))
                        .unwrap_or_else(|| "-".into()),
                    l.errors.energy,
                    r.map(|r| format!("{:.2}", rate_value(r.energy)))
                        .unwrap_or_else(|| "-".into()),
                    l.errors.h2_broken,
                    l.lambda_max.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into()),
                );
            }
            for l in &d.levels {
                if let Some(e) = l.coercivity {
                    let _ = writeln!(s, "level {}: smallest eigenvalue estimate {e:.6e}", l.level);
                }
            }
        }
        s
    }

    /// Writes one CSV per degree and `summary.txt` into the output
    /// directory. Returns the written paths.
    pub fn write(&self, extra: &[(String, String)]) -> Result<Vec<PathBuf>, StudyError> {
        let dir: &Path = &self.config.out;
        std::fs::create_dir_all(dir).map_err(|e| StudyError::Io(format!("{}: {e}", dir.display())))?;
        let mut files: Vec<(String, String)> = self.degrees.iter().map(|d| (self.csv_name(d.m), d.csv())).collect();
        files.push(("summary.txt".into(), self.summary()));
        files.extend(extra.iter().cloned());
        let mut written = Vec::new();
        for (name, content) in files {
            let path = dir.join(name);
            std::fs::write(&path, content).map_err(|e| StudyError::Io(format!("{}: {e}", path.display())))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn rate_value(r: Rate) -> f64 {
    match r {
        Rate::Value(v) => v,
        Rate::Exact => f64::INFINITY,
    }
}

/// Runs every degree of the study and writes the report files.
pub fn run_study(cfg: &StudyConfig) -> Result<(StudyReport, Vec<PathBuf>), StudyError> {
    cfg.validate()?;
    let mut degrees = Vec::new();
    let mut dumps = Vec::new();
    for &m in &cfg.degrees {
        let (d, dm) = run_degree(cfg, m)?;
        degrees.push(d);
        dumps.extend(dm);
    }
    let report = StudyReport {
        config: cfg.clone(),
        degrees,
    };
    let written = report.write(&dumps)?;
    Ok((report, written))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_defaults_and_overrides() {
        let cfg = StudyConfig::parse("# study\ncase = lshape-singular\nm = 2, 3\nlevels = 2,4\n").unwrap();
        assert_eq!(cfg.degrees, vec![2, 3]);
        assert_eq!(
            cfg.mesh,
            MeshSource::Generated {
                generator: Generator::LShape,
                levels: vec![2, 4]
            }
        );
        assert_eq!(cfg.patch, PatchProfile::Example1);
        assert_eq!(cfg.penalties(3).unwrap().mu, 81.0);
        assert_eq!(cfg.mode, Mode::Reconstructed);
    }

    #[test]
    fn config_errors() {
        for bad in [
            "case = nope",
            "m = 0",
            "m = two",
            "levels = ",
            "colour = red",
            "case = ex1-sin2\ncase = ex1-sin2",
            "mu = -1",
            "patch = custom:3\nm = 2",
            "just a line",
        ] {
            let err = StudyConfig::parse(bad).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad}: {err}");
        }
    }

    #[test]
    fn one_level_has_no_rates() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = StudyConfig::parse("case = poly-exact-m\nm = 2\nlevels = 4").unwrap();
        cfg.out = dir.path().to_path_buf();
        let (rep, files) = run_study(&cfg).unwrap();
        assert_eq!(files.len(), 2);
        let csv = std::fs::read_to_string(&files[0]).unwrap();
        let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row.len(), 10);
        assert_eq!((row[6], row[7]), ("", ""));
        assert!(rep.degrees[0].levels[0].errors.l2 < 1e-8);
    }
}
