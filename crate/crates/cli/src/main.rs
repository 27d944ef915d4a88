mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use swe_dg::cases::{make_case, CASE_NAMES};
use swe_dg::operators::State;
use swe_dg::output::{write_snapshot_csv, write_snapshot_vtk, DiagnosticsWriter};
use swe_dg::space::DgField;
use swe_dg::study::{check_nested, l2_difference, with_resolution, ConvergenceTable, Simulation};
use swe_dg::Error;

use config::{parse_grid, spec_json, ConfigError, Format, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "swedg",
    version,
    about = "Entropy-stable DG solver for the shallow water equations"
)]
struct Cli {
    /// Cap on worker threads
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation
    Run(RunArgs),
    /// Errors and rates against a fine reference run
    Convergence(ConvArgs),
    /// Print the resolved parameters of a case (or `all`)
    Describe {
        case: String,
        #[arg(long)]
        json: bool,
    },
    /// Run the invariant suite on random states
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Case name; may also come from the config file
    case: Option<String>,
    /// Flat JSON config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of cells (1D) or N x N grid (2D)
    #[arg(long, conflicts_with_all = ["grid", "mesh"])]
    n: Option<usize>,
    /// 2D grid as NXxNY
    #[arg(long, value_parser = parse_grid, conflicts_with = "mesh")]
    grid: Option<(usize, usize)>,
    /// Mesh file
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[command(flatten)]
    over: Overrides,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Extra snapshot every N steps (0: output times only)
    #[arg(long)]
    every: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ConvArgs {
    case: String,
    /// Comma-separated coarse resolutions
    #[arg(long, value_delimiter = ',', required = true)]
    resolutions: Vec<usize>,
    #[arg(long)]
    reference: usize,
    #[command(flatten)]
    over: Overrides,
    #[arg(long, default_value = "convergence")]
    out: PathBuf,
    /// Also write every final state to this directory
    #[arg(long, conflicts_with = "from_states")]
    save_states: Option<PathBuf>,
    /// Build the table from previously saved states instead of running
    #[arg(long)]
    from_states: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let threads = cli.threads.or(match &cli.cmd {
        Cmd::Run(a) => a
            .config
            .as_ref()
            .and_then(|p| RunConfig::load(p).ok())
            .and_then(|c| c.threads),
        _ => None,
    });
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let res = match cli.cmd {
        Cmd::Run(a) => run(a, threads),
        Cmd::Convergence(a) => convergence(a),
        Cmd::Describe { case, json } => describe(&case, json),
        Cmd::Verify { seed, samples } => verify(seed, samples),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() || e.downcast_ref::<swe_dg::error::CaseError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::Basis(_) | Error::Mesh(_) | Error::Case(_)) => 2,
        Some(Error::Solver(swe_dg::error::SolverError::InvalidControl(_))) => 2,
        Some(Error::Solver(_) | Error::Physics(_)) => 3,
        _ => 1,
    }
}

fn create_dir(p: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn run(a: RunArgs, threads: Option<usize>) -> anyhow::Result<u8> {
    let file = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let resolution = match (a.n, a.grid, a.mesh) {
        (Some(n), ..) => Some(swe_dg::cases::Resolution::Cells(n)),
        (_, Some((nx, ny)), _) => Some(swe_dg::cases::Resolution::Grid(nx, ny)),
        (.., Some(p)) => Some(swe_dg::cases::Resolution::File(p)),
        _ => None,
    };
    let flags = RunConfig {
        case: a.case,
        resolution,
        over: a.over,
        out: a.out,
        format: a.format,
        every: a.every,
        seed: a.seed,
        threads,
    };
    let cfg = file.merge(flags);
    let spec = cfg.spec()?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out").join(&spec.name));
    let format = cfg.format.unwrap_or(Format::Csv);
    let every = cfg.every.unwrap_or(0);
    create_dir(&out)?;

    let mut sim = Simulation::new(spec)?;
    if let Some(hb) = cfg.over.hard_bound {
        sim.control.hard_bound = hb;
    }
    sim.control.validate().map_err(Error::from)?;
    log::info!(
        "{} on {} elements, k = {}",
        sim.spec.name,
        sim.scheme.space.mesh.n_elements(),
        sim.spec.degree
    );

    let mut manifest = json!({
        "solver": env!("CARGO_PKG_VERSION"),
        "config": spec_json(&sim.spec),
        "control": {
            "cfl": sim.control.cfl,
            "hard_bound": sim.control.hard_bound,
            "max_retries": sim.control.max_retries,
            "eps_avg": sim.control.eps_avg,
            "h_max0": sim.limiter.h_max0,
        },
        "elements": sim.scheme.space.mesh.n_elements(),
        "format": format.ext(),
        "every": every,
        "seed": cfg.seed.unwrap_or(0),
        "threads": rayon::current_num_threads(),
    });

    let mut diag = DiagnosticsWriter::create(&out.join("diagnostics.csv"))?;
    diag.push(&sim.history[0])?;
    let mut snaps: Vec<Value> = Vec::new();
    let write = |idx: usize,
                 t: f64,
                 sim_scheme: &swe_dg::operators::Scheme,
                 st: &State,
                 troubled: &[usize]|
     -> swe_dg::Result<String> {
        let name = format!("snapshot_{idx:04}.{}", format.ext());
        let path = out.join(&name);
        match format {
            Format::Csv => write_snapshot_csv(&path, sim_scheme, st, troubled)?,
            Format::Vtk => write_snapshot_vtk(&path, sim_scheme, st, troubled, t)?,
        }
        Ok(name)
    };
    let name = write(0, 0.0, &sim.scheme, &sim.state, &[])?;
    snaps.push(json!({"file": name, "t": 0.0, "step": 0}));

    let mut status = Ok(());
    let mut troubled: Vec<usize> = Vec::new();
    let mut extra: Vec<(usize, f64, State, Vec<usize>)> = Vec::new();
    for stop in sim.stops() {
        if stop <= sim.t {
            continue;
        }
        let mut io_fail: Option<std::io::Error> = None;
        let r = sim.run_to(stop, &mut |rec, st| {
            if let Err(e) = diag.push(rec) {
                io_fail.get_or_insert(e);
            }
            troubled.clone_from(&rec.info.last.troubled);
            if every > 0 && rec.step % every == 0 && rec.t < stop {
                extra.push((rec.step, rec.t, st.clone(), rec.info.last.troubled.clone()));
            }
        });
        if let Some(e) = io_fail {
            return Err(e).context("writing diagnostics");
        }
        for (step, t, st, tr) in extra.drain(..) {
            let name = write(snaps.len(), t, &sim.scheme, &st, &tr)?;
            snaps.push(json!({"file": name, "t": t, "step": step}));
        }
        if let Err(e) = r {
            status = Err(e);
            break;
        }
        let name = write(snaps.len(), sim.t, &sim.scheme, &sim.state, &troubled)?;
        snaps.push(json!({"file": name, "t": sim.t, "step": sim.steps}));
        log::info!("t = {} after {} steps", sim.t, sim.steps);
    }
    diag.flush()?;

    let last = sim.history.last().expect("history starts with the initial record");
    manifest["snapshots"] = json!(snaps);
    manifest["result"] = json!({
        "status": if status.is_ok() { "ok" } else { "aborted" },
        "error": status.as_ref().err().map(|e| e.to_string()),
        "t": sim.t,
        "steps": sim.steps,
        "mass": last.mass,
        "entropy": last.entropy,
    });
    let mpath = out.join("manifest.json");
    fs::write(&mpath, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", mpath.display()))?;
    status?;
    println!(
        "{}: t = {} in {} steps, output in {}",
        sim.spec.name,
        sim.t,
        sim.steps,
        out.display()
    );
    Ok(0)
}

fn state_json(sim: &Simulation, n: usize) -> Value {
    json!({
        "case": sim.spec.name,
        "degree": sim.spec.degree,
        "resolution": n,
        "t": sim.t,
        "h": sim.state.h.coeffs,
        "u": sim.state.u.coeffs,
        "m": sim.state.m.coeffs,
    })
}

fn load_state(dir: &Path, spec: &swe_dg::cases::CaseSpec, n: usize) -> anyhow::Result<Simulation> {
    let path = dir.join(format!("state_{n}.json"));
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if v["case"] != json!(spec.name) || v["degree"] != json!(spec.degree) {
        return Err(ConfigError(format!("{} belongs to a different case or degree", path.display())).into());
    }
    let mut sim = Simulation::new(with_resolution(spec, n))?;
    let read = |key: &str, f: &mut DgField| -> anyhow::Result<()> {
        let c: Vec<f64> =
            serde_json::from_value(v[key].clone()).with_context(|| format!("{}: field {key}", path.display()))?;
        if c.len() != f.coeffs.len() {
            bail!(
                "{}: field {key} has {} coefficients, expected {}",
                path.display(),
                c.len(),
                f.coeffs.len()
            );
        }
        f.coeffs = c;
        Ok(())
    };
    read("h", &mut sim.state.h)?;
    read("u", &mut sim.state.u)?;
    read("m", &mut sim.state.m)?;
    sim.t = v["t"].as_f64().unwrap_or(f64::NAN);
    Ok(sim)
}

fn convergence(a: ConvArgs) -> anyhow::Result<u8> {
    let mut spec = make_case(&a.case)?;
    config::apply(&mut spec, &a.over);
    spec.validate()?;
    check_nested(&a.resolutions, a.reference)?;
    create_dir(&a.out)?;
    if let Some(d) = &a.save_states {
        create_dir(d)?;
    }
    let get = |n: usize| -> anyhow::Result<Simulation> {
        if let Some(d) = &a.from_states {
            return load_state(d, &spec, n);
        }
        let mut sim = Simulation::new(with_resolution(&spec, n))?;
        sim.run()?;
        log::info!("N = {n} done in {} steps", sim.steps);
        if let Some(d) = &a.save_states {
            let p = d.join(format!("state_{n}.json"));
            fs::write(&p, serde_json::to_string(&state_json(&sim, n))?)
                .with_context(|| format!("writing {}", p.display()))?;
        }
        Ok(sim)
    };
    let fine = get(a.reference)?;
    let mut errs = Vec::new();
    for &n in &a.resolutions {
        let e = if n == a.reference {
            [0.0; 3]
        } else {
            let c = get(n)?;
            l2_difference((&c.scheme.space, &c.state), (&fine.scheme.space, &fine.state))?
        };
        errs.push((n, e));
    }
    let table = ConvergenceTable::from_errors(&spec.name, spec.degree, a.reference, fine.t, &errs);
    fs::write(a.out.join("convergence.csv"), table.to_csv())?;
    fs::write(a.out.join("convergence.txt"), table.to_text())?;
    print!("{}", table.to_text());
    Ok(0)
}

fn describe(case: &str, as_json: bool) -> anyhow::Result<u8> {
    let names: Vec<&str> = if case == "all" { CASE_NAMES.to_vec() } else { vec![case] };
    let mut specs = Vec::new();
    for n in names {
        specs.push(spec_json(&make_case(n)?));
    }
    if as_json {
        let v = if specs.len() == 1 {
            specs.pop().unwrap()
        } else {
            Value::Array(specs)
        };
        println!("{}", serde_json::to_string_pretty(&v)?);
        return Ok(0);
    }
    for s in &specs {
        let Value::Object(m) = s else { continue };
        println!("{}", s["case"].as_str().unwrap_or_default());
        for (k, v) in m {
            if k != "case" {
                println!("  {k:<22} {v}");
            }
        }
    }
    Ok(0)
}

fn verify(seed: u64, samples: usize) -> anyhow::Result<u8> {
    let results = swe_dg::verify::run_suite(seed, samples)?;
    let mut ok = true;
    for r in &results {
        println!(
            "{:<24} {}  {}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        );
        ok &= r.passed;
    }
    Ok(if ok { 0 } else { 1 })
}
