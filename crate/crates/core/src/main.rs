use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use recon_dg::mesh::{import_mesh, PolyMesh};
use recon_dg::patch::{build_patch, patch_size_for_degree, PatchProfile};
use recon_dg::recon::{cell_basis, least_squares_map};
use recon_dg::study::{parse_key_values, run_study, Generator, StudyConfig, StudyError};

#[derive(Parser)]
#[command(
    name = "recon-dg",
    version,
    about = "Patch-reconstruction DG solver for the biharmonic problem"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence study and write CSV tables and a summary.
    Run(Box<RunArgs>),
    /// Print statistics of a mesh file (native format or Gmsh .msh).
    MeshInfo { file: PathBuf },
    /// Print the patch and reconstruction coefficients of one cell.
    DumpBasis(DumpArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key = value configuration file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    case: Option<String>,
    /// Degrees, comma separated
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    /// reconstructed | baseline-full-dg
    #[arg(long)]
    mode: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<String>,
    /// tri | quad | mixed | lshape
    #[arg(long)]
    mesh: Option<String>,
    /// Subdivisions per level, comma separated
    #[arg(long)]
    levels: Option<String>,
    /// Mesh files, comma separated (replaces the generator)
    #[arg(long)]
    mesh_files: Option<String>,
    /// example1 | example2 | example3 | custom:N
    #[arg(long)]
    patch: Option<String>,
    /// direct-cholesky | cg
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    probe: Option<String>,
    #[arg(long)]
    dump_matrix: Option<String>,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    cell: usize,
    /// Mesh file; if absent a generated mesh is used
    #[arg(long)]
    mesh_file: Option<PathBuf>,
    /// Generator for the default mesh
    #[arg(long, default_value = "tri")]
    mesh: String,
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Patch profile; defaults to the generator's
    #[arg(long)]
    patch: Option<String>,
}

fn run(args: RunArgs) -> Result<String, StudyError> {
    let mut map = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| StudyError::Io(format!("{}: {e}", path.display())))?;
            parse_key_values(&text)?
        }
        None => BTreeMap::new(),
    };
    let flags = [
        ("case", args.case),
        ("m", args.m),
        ("mu", args.mu),
        ("eta", args.eta),
        ("mode", args.mode),
        ("out", args.out),
        ("mesh", args.mesh),
        ("levels", args.levels),
        ("mesh_files", args.mesh_files),
        ("patch", args.patch),
        ("solver", args.solver),
        ("lambda", args.lambda),
        ("probe", args.probe),
        ("dump_matrix", args.dump_matrix),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            map.insert(k.to_string(), v);
        }
    }
    let cfg = StudyConfig::from_map(&map)?;
    let (report, files) = run_study(&cfg)?;
    let mut out = report.summary();
    out.push('\n');
    for f in files {
        let _ = writeln!(out, "wrote {}", f.display());
    }
    Ok(out)
}

fn mesh_info(file: &PathBuf) -> Result<String, StudyError> {
    let import = import_mesh(file).map_err(|e| StudyError::mesh_file(file, e))?;
    let mesh = &import.mesh;
    let mut s = String::new();
    for w in &import.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    let mut by_sides = BTreeMap::new();
    for c in mesh.cells() {
        *by_sides.entry(c.len()).or_insert(0usize) += 1;
    }
    let _ = writeln!(s, "vertices: {}", mesh.num_vertices());
    let _ = writeln!(s, "cells: {}", mesh.num_cells());
    for (k, n) in by_sides {
        let _ = writeln!(s, "  {k}-gons: {n}");
    }
    let _ = writeln!(
        s,
        "faces: {} ({} boundary)",
        mesh.num_faces(),
        mesh.num_boundary_faces()
    );
    let _ = writeln!(s, "h: {:.6e}", mesh.h());
    let _ = writeln!(s, "area: {:.6e}", mesh.total_area());
    let _ = writeln!(s, "shape regularity: {:.4}", mesh.shape_regularity());
    Ok(s)
}

fn dump_basis(args: DumpArgs) -> Result<String, StudyError> {
    let generator: Generator = args.mesh.parse()?;
    let mesh: PolyMesh = match &args.mesh_file {
        Some(f) => import_mesh(f).map_err(|e| StudyError::mesh_file(f, e))?.mesh,
        None => generator.generate(args.n)?,
    };
    if args.cell >= mesh.num_cells() {
        return Err(StudyError::Config(format!(
            "cell {} out of range (mesh has {} cells)",
            args.cell,
            mesh.num_cells()
        )));
    }
    let profile = match &args.patch {
        Some(p) => p.parse::<PatchProfile>()?,
        None => generator.default_profile(),
    };
    let patch = build_patch(&mesh, args.cell, patch_size_for_degree(args.m, profile)?)?;
    let basis = cell_basis(&mesh, args.cell, args.m);
    let map = least_squares_map(&basis, &patch.points)?;
    let mut s = String::new();
    let c = basis.center();
    let _ = writeln!(
        s,
        "cell {} (m = {}, center ({:.6}, {:.6}), scale {:.6e})",
        args.cell,
        args.m,
        c.x,
        c.y,
        basis.scale()
    );
    let _ = writeln!(s, "patch ({} cells): {:?}", patch.len(), patch.members);
    let _ = writeln!(s, "sigma_min / sigma_max = {:.6e}", map.sigma_min / map.sigma_max);
    let _ = writeln!(s, "monomials: {:?}", basis.exponents());
    let _ = writeln!(s, "coefficients (row = monomial, column = patch member):");
    for i in 0..map.matrix.nrows() {
        let row: Vec<String> = map.matrix.row(i).iter().map(|v| format!("{v:>13.6e}")).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    let _ = writeln!(s, "basis values at the center:");
    for (j, &k) in patch.members.iter().enumerate() {
        let _ = writeln!(s, "  lambda_{k} = {:.12}", map.matrix[(0, j)]);
    }
    Ok(s)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(*args),
        Command::MeshInfo { file } => mesh_info(&file),
        Command::DumpBasis(args) => dump_basis(args),
    };
    match result {
        Ok(s) => {
            print!("{s}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
