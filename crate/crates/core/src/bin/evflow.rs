use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use evflow::config::{parse_config, LayoutConfig, RunConfig};
use evflow::coupling::{block_jacobi_solve, BlockJacobiOptions};
use evflow::linalg::CgOptions;
use evflow::output::{format_sci, write_csv, write_csv_string, write_vtk};
use evflow::verification::{
    convergence_study_runs, evaluate_solution, rows_from_runs, LevelConvention, LevelRun, StudyOptions,
};
use evflow::{build_multiblock, compute_interface_trace, enumerate_dofs, Error, MixedSystem, MultiblockMesh, Result};

#[derive(Parser)]
#[command(name = "evflow", version, about = "Enhanced velocity mixed FEM for Darcy flow on non-matching multiblock grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one level and report interface errors; optionally write VTK fields.
    Solve(RunArgs),
    /// Run a convergence study over several levels and print/write the table.
    Convergence(RunArgs),
    /// Compare block-Jacobi domain decomposition with the monolithic solve.
    CompareDd(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; flags given alongside override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Builtin case: 1, 2, test1, test2, constant, linear-x.
    #[arg(long)]
    test: Option<String>,
    /// Single level (solve, compare-dd).
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated levels (convergence).
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    /// Coarse to fine mesh-size ratio.
    #[arg(long)]
    ratio: Option<usize>,
    /// Meaning of a level: coarse-domain or fine-block.
    #[arg(long)]
    level_convention: Option<String>,
    /// Relative residual target of the linear solver.
    #[arg(long)]
    tol: Option<f64>,
    /// Directory for VTK output (solve).
    #[arg(long)]
    vtk: Option<PathBuf>,
    /// CSV output path (convergence).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Unweighted discrete L2 norm on the interface.
    #[arg(long)]
    unweighted: bool,
    /// Use block-Jacobi instead of the monolithic solver (solve).
    #[arg(long)]
    block_jacobi: bool,
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
            parse_config(&text)?
        }
        None => {
            let case = args.test.clone().ok_or_else(|| Error::InvalidArgument("give --config or --test".into()))?;
            RunConfig::for_case(case, Vec::new())
        }
    };
    if let Some(t) = &args.test {
        cfg.case = t.clone();
    }
    if let Some(levels) = &args.levels {
        cfg.levels = levels.clone();
    }
    if args.n.is_some() {
        cfg.n = args.n;
    }
    if let Some(r) = args.ratio {
        cfg.ratio = r;
    }
    if let Some(c) = &args.level_convention {
        cfg.convention = match c.as_str() {
            "coarse-domain" => LevelConvention::CoarseDomain,
            "fine-block" => LevelConvention::FineBlock,
            other => return Err(Error::InvalidArgument(format!("unknown level convention {other:?}"))),
        };
    }
    if let Some(t) = args.tol {
        cfg.tol = t;
    }
    if args.vtk.is_some() {
        cfg.output.vtk_dir = args.vtk.clone();
    }
    if args.csv.is_some() {
        cfg.output.csv = args.csv.clone();
    }
    cfg.weighted_norm &= !args.unweighted;
    cfg.block_jacobi |= args.block_jacobi;
    cfg.validate()?;
    Ok(cfg)
}

fn single_mesh(cfg: &RunConfig) -> Result<(MultiblockMesh, usize)> {
    match &cfg.layout {
        LayoutConfig::Checkerboard => {
            let n = cfg.single_level().ok_or_else(|| Error::InvalidArgument("no level given (--n)".into()))?;
            Ok((cfg.convention.mesh(n, cfg.ratio)?, n))
        }
        LayoutConfig::Explicit(blocks) => Ok((build_multiblock(blocks)?, 0)),
    }
}

fn solver(cfg: &RunConfig) -> CgOptions {
    CgOptions { tol: cfg.tol, ..CgOptions::default() }
}

fn print_run(run: &LevelRun) {
    println!("cells        {}", run.mesh.n_cells());
    println!("sub-edges    {}", run.interface.sub_edges.len());
    println!("e_u          {}", format_sci(run.e_u.value));
    println!("e_rec        {}", format_sci(run.e_rec.value));
    println!("mass resid   {}", format_sci(run.mass_residual));
    println!("constraints  {}", format_sci(run.constraint_residual));
}

fn solve(cfg: &RunConfig) -> Result<()> {
    let case = cfg.manufactured_case()?;
    let (mesh, n) = single_mesh(cfg)?;
    let interface = compute_interface_trace(&mesh);
    let dofs = enumerate_dofs(&mesh, &interface);
    let solution = if cfg.block_jacobi {
        let opts = BlockJacobiOptions { inner: solver(cfg), ..Default::default() };
        let out = block_jacobi_solve(&case, &mesh, &interface, &dofs, opts)?;
        println!("block-Jacobi sweeps {}", out.iterations);
        out.solution
    } else {
        MixedSystem::assemble(&case, &mesh, &dofs)?.solve(solver(cfg))?
    };
    let run = evaluate_solution(&case, mesh, interface, dofs, solution, n, cfg.weighted_norm)?;
    print_run(&run);
    if let Some(dir) = &cfg.output.vtk_dir {
        for p in write_vtk(dir, &run.mesh, &run.solution, &run.dofs, &run.fields.nodal)? {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn convergence(cfg: &RunConfig) -> Result<()> {
    if !matches!(cfg.layout, LayoutConfig::Checkerboard) {
        return Err(Error::InvalidArgument("convergence studies need the checkerboard layout".into()));
    }
    if cfg.levels.is_empty() {
        return Err(Error::InvalidArgument("no levels given (--levels)".into()));
    }
    let case = cfg.manufactured_case()?;
    let opts = StudyOptions { ratio: cfg.ratio, weighted: cfg.weighted_norm, convention: cfg.convention, solver: solver(cfg) };
    let runs = convergence_study_runs(&case, &cfg.levels, opts)?;
    let rows = rows_from_runs(&runs)?;
    print!("{}", write_csv_string(&rows));
    if let Some(path) = &cfg.output.csv {
        write_csv(path, &rows)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn compare_dd(cfg: &RunConfig) -> Result<()> {
    let case = cfg.manufactured_case()?;
    let (mesh, _) = single_mesh(cfg)?;
    let interface = compute_interface_trace(&mesh);
    let dofs = enumerate_dofs(&mesh, &interface);
    let mono = MixedSystem::assemble(&case, &mesh, &dofs)?.solve(solver(cfg))?;
    let out = block_jacobi_solve(&case, &mesh, &interface, &dofs, BlockJacobiOptions::default())?;
    let max = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    println!("sweeps       {}", out.iterations);
    println!("max |dp|     {}", format_sci(max(&out.solution.p, &mono.p)));
    println!("max |du|     {}", format_sci(max(&out.solution.u, &mono.u)));
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("EVFLOW_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::InvalidArgument(format!("EVFLOW_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Solve(a) => solve(&load_config(&a)?),
        Command::Convergence(a) => convergence(&load_config(&a)?),
        Command::CompareDd(a) => compare_dd(&load_config(&a)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
