use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use decoupling_lab::cache::Cache;
use decoupling_lab::config::{config_hash, RunConfig};
use decoupling_lab::eval::{field_samples, EvalPlan};
use decoupling_lab::experiments::{
    estimate_phase_evals, fit_exponent, run_amplitude_campaign, run_corollary_campaign,
    run_decoupling_campaign, AmplitudeRow, Campaign, SweepRow,
};
use decoupling_lab::geometry::PointBatch;
use decoupling_lab::record::{make_payload, to_csv, ReportBody, ResultRecord, RunMeta};
use decoupling_lab::{Error, Params};

#[derive(Parser)]
#[command(
    name = "decoupling-lab",
    version,
    about = "Scale sweeps for wave-packet decoupling experiments on the truncated paraboloid"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the peak-height law over the scale list
    Amplitude(SweepArgs),
    /// Sweep both sides of the refined inequality at the critical exponent
    Decouple(SweepArgs),
    /// Sweep the square-mean bound on the fractal lattice set
    Corollary(SweepArgs),
    /// Run every campaign the configuration selects
    Sweep(SweepArgs),
    /// Evaluate the field at explicit points
    Eval(EvalArgs),
    /// Fit a growth exponent to two-column (R,value) CSV data
    Fit(FitArgs),
    /// Inspect or clear the result cache
    Cache(CacheArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// JSON run configuration; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated scale list, e.g. 256,512,1024,2048
    #[arg(long = "R", value_delimiter = ',', allow_hyphen_values = false)]
    r_list: Option<Vec<f64>>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Output directory for records and CSV exports (default: runs)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Phase-evaluation budget; oversized requests are refused
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    quad_order: Option<usize>,
    /// Bypass the cache for both lookup and store
    #[arg(long)]
    no_cache: bool,
    /// Cache directory (default: $DECOUPLING_LAB_CACHE, else <out>/cache)
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    sigma: f64,
    #[arg(long = "R")]
    r: f64,
    /// Points as "x1,x2;x3,x4;..."
    #[arg(long, conflicts_with = "points_file")]
    points: Option<String>,
    /// File with one comma-separated point per line
    #[arg(long)]
    points_file: Option<PathBuf>,
    #[arg(long)]
    quad_order: Option<usize>,
    /// Write the JSON samples here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// CSV file with lines "R,value"; a header line is allowed
    #[arg(long)]
    input: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    predicted: f64,
    #[arg(long, default_value_t = 0.05)]
    tol: f64,
    #[arg(long, default_value_t = 0.05)]
    eps_slack: f64,
}

#[derive(Args)]
struct CacheArgs {
    #[command(subcommand)]
    op: CacheOp,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CacheOp {
    /// Print the resolved cache directory
    Path,
    /// List cached result records
    List,
    /// Remove every cached record
    Clear,
}

fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::BudgetExceeded { .. } => ExitCode::from(3),
        _ => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Amplitude(args) => run_campaigns(args, Some(Campaign::Amplitude)),
        Command::Decouple(args) => run_campaigns(args, Some(Campaign::Decoupling)),
        Command::Corollary(args) => run_campaigns(args, Some(Campaign::Corollary)),
        Command::Sweep(args) => run_campaigns(args, None),
        Command::Eval(args) => run_eval(args),
        Command::Fit(args) => run_fit(args),
        Command::Cache(args) => run_cache(args),
    };
    match outcome {
        Ok(pass) => {
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn load_run_config(args: &SweepArgs) -> Result<RunConfig, Error> {
    let mut rc = match &args.config {
        Some(path) => RunConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => {
            let d = args.d.ok_or(Error::Config(
                "pass --config or both --d and --sigma".into(),
            ))?;
            let sigma = args.sigma.ok_or(Error::Config(
                "pass --config or both --d and --sigma".into(),
            ))?;
            RunConfig::from_json(&format!("{{\"d\": {d}, \"sigma\": {sigma}}}"))?
        }
    };
    if let Some(d) = args.d {
        rc.d = d;
    }
    if let Some(s) = args.sigma {
        rc.sigma = s;
    }
    if let Some(r) = &args.r_list {
        rc.r_list = Some(r.clone());
    }
    if let Some(seed) = args.seed {
        rc.seed = Some(seed);
    }
    if let Some(budget) = args.budget {
        rc.budget = Some(budget);
    }
    if let Some(q) = args.quad_order {
        rc.quad_order = Some(q);
    }
    if let Some(out) = &args.out {
        rc.out_dir = Some(out.clone());
    }
    if let Some(dir) = &args.cache_dir {
        rc.cache_dir = Some(dir.clone());
    }
    rc.no_cache |= args.no_cache;
    Ok(rc)
}

fn print_sweep_row(row: &SweepRow) {
    let comp = row
        .comparability
        .map(|c| format!("{c:.2}"))
        .unwrap_or_else(|| "-".into());
    let extra = match row.incidence_max {
        Some(inc) => format!(
            " incidence={inc:.3e} fractalC={:.2}",
            row.fractal_c.unwrap_or(f64::NAN)
        ),
        None => format!(" M={}", row.m),
    };
    println!(
        "  R={:<8} lhs={:.6e} rhs={:.6e} ratio={:.3}{extra} comp={comp} cubes={}",
        row.r, row.lhs, row.rhs, row.ratio, row.x_cubes
    );
}

fn print_amplitude_row(row: &AmplitudeRow) {
    println!(
        "  R={:<8} median={:.6e} predicted={:.6e} band=[{:.2},{:.2}] offpeak={:.2}",
        row.r,
        row.stats.median_ratio * row.stats.predicted,
        row.stats.predicted,
        row.stats.min_ratio,
        row.stats.max_ratio,
        row.stats.off_peak_median_ratio
    );
}

fn run_one_campaign(
    campaign: Campaign,
    sweep: &decoupling_lab::experiments::SweepConfig,
    hash: &str,
    cache: &Cache,
    use_cache: bool,
    out_dir: &Path,
) -> Result<bool, Error> {
    println!("campaign {} (config {})", campaign.name(), &hash[..12]);
    let record = match (use_cache, cache.lookup(hash, campaign.name())) {
        (true, Some(rec)) => {
            println!("  cache hit: {}", cache.root().join(format!("{hash}-{}.json", campaign.name())).display());
            rec
        }
        _ => {
            let started = Instant::now();
            let report = match campaign {
                Campaign::Amplitude => {
                    ReportBody::Amplitude(run_amplitude_campaign(sweep, print_amplitude_row)?)
                }
                Campaign::Decoupling => {
                    ReportBody::Sharpness(run_decoupling_campaign(sweep, print_sweep_row)?)
                }
                Campaign::Corollary => {
                    ReportBody::Sharpness(run_corollary_campaign(sweep, print_sweep_row)?)
                }
            };
            let meta = RunMeta {
                wall_ms: started.elapsed().as_millis() as u64,
                created_unix: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
                phase_eval_estimate: estimate_phase_evals(sweep, campaign)?,
            };
            let record = ResultRecord::new(
                make_payload(campaign, hash.to_string(), sweep, report),
                meta,
            );
            if use_cache {
                cache.store(&record)?;
            }
            record
        }
    };
    std::fs::create_dir_all(out_dir)?;
    let stem = format!("{}-{}", campaign.name(), &hash[..12]);
    let json_path = out_dir.join(format!("{stem}.json"));
    std::fs::write(&json_path, serde_json::to_string_pretty(&record)?)?;
    let csv_path = out_dir.join(format!("{stem}.csv"));
    std::fs::write(&csv_path, to_csv(&record))?;
    let pass = summarize(&record);
    println!("  wrote {} and {}", json_path.display(), csv_path.display());
    println!(
        "  verdict: {}",
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}

fn summarize(record: &ResultRecord) -> bool {
    match &record.payload.report {
        ReportBody::Amplitude(rep) => {
            println!(
                "  peak-law slope {:+.4} (predicted {:+.4}, tol {:.2}+{:.2}), peak band [{:.2}, {:.2}]",
                rep.fit.slope,
                rep.fit.predicted,
                rep.fit.tol,
                rep.fit.eps_slack,
                rep.min_ratio,
                rep.max_ratio
            );
            rep.pass
        }
        ReportBody::Sharpness(rep) => {
            println!(
                "  lhs slope {:+.4} / rhs slope {:+.4} (predicted {:+.4}), ratio slope {:+.4}",
                rep.lhs_fit.slope, rep.rhs_fit.slope, rep.lhs_fit.predicted, rep.ratio_fit.slope
            );
            if let Some(m_fit) = &rep.m_fit {
                println!(
                    "  overlap count slope {:+.4} (predicted {:+.4})",
                    m_fit.slope, m_fit.predicted
                );
            }
            if let Some(inc) = &rep.incidence_fit {
                println!(
                    "  incidence slope {:+.4} (bound {:+.4})",
                    inc.slope, inc.predicted
                );
            }
            for note in &rep.hypothesis.notes {
                println!("  note: {note}");
            }
            if !rep.hypothesis.comparability_pass {
                println!(
                    "  HYPOTHESIS VIOLATION: comparability {:?} exceeds {}",
                    rep.hypothesis.worst_comparability, rep.hypothesis.comparability_bound
                );
            }
            rep.pass
        }
    }
}

fn run_campaigns(args: SweepArgs, only: Option<Campaign>) -> Result<bool, Error> {
    let rc = load_run_config(&args)?;
    let mut sweep = rc.into_sweep()?;
    if let Some(campaign) = only {
        sweep.campaigns = vec![campaign];
    }
    let hash = config_hash(&sweep);
    let out_dir = rc.out_dir.clone().unwrap_or_else(|| PathBuf::from("runs"));
    let cache = Cache::resolve(rc.cache_dir.as_deref(), &out_dir);
    let mut all_pass = true;
    for campaign in sweep.campaigns.clone() {
        let pass = run_one_campaign(campaign, &sweep, &hash, &cache, !rc.no_cache, &out_dir)?;
        all_pass &= pass;
    }
    Ok(all_pass)
}

fn parse_point(text: &str, d: usize) -> Result<Vec<f64>, Error> {
    let coords: Result<Vec<f64>, _> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect();
    let coords = coords.map_err(|e| Error::Config(format!("bad coordinate in '{text}': {e}")))?;
    if coords.len() != d {
        return Err(Error::Config(format!(
            "point '{text}' has {} coordinates, expected {d}",
            coords.len()
        )));
    }
    Ok(coords)
}

fn run_eval(args: EvalArgs) -> Result<bool, Error> {
    let mut p = Params::new(args.d, args.sigma, args.r)?;
    if let Some(q) = args.quad_order {
        p.quad_order = q;
        p.validate()?;
    }
    let text = match (&args.points, &args.points_file) {
        (Some(t), _) => t.clone(),
        (None, Some(path)) => std::fs::read_to_string(path)?.lines().collect::<Vec<_>>().join(";"),
        (None, None) => return Err(Error::Config("pass --points or --points-file".into())),
    };
    let mut batch = PointBatch::new(p.d);
    let mut reach: f64 = p.coherence_radius();
    for chunk in text.split(';').filter(|c| !c.trim().is_empty()) {
        let point = parse_point(chunk, p.d)?;
        reach = reach.max(point.iter().map(|v| v * v).sum::<f64>().sqrt());
        batch.push(&point);
    }
    if batch.is_empty() {
        return Err(Error::Config("no points given".into()));
    }
    let plan = EvalPlan::for_params(&p, reach)?;
    let samples = field_samples(&plan, &batch);
    let json = serde_json::to_string_pretty(&samples)?;
    match &args.out {
        Some(path) => std::fs::write(path, json)?,
        None => println!("{json}"),
    }
    Ok(true)
}

fn run_fit(args: FitArgs) -> Result<bool, Error> {
    let text = std::fs::read_to_string(&args.input)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let a = parts.next().unwrap_or_default().trim();
        let b = parts.next().unwrap_or_default().trim();
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(r), Ok(v)) => records.push((r, v)),
            _ if i == 0 => continue, // header
            _ => {
                return Err(Error::Config(format!(
                    "line {} of {} is not 'R,value'",
                    i + 1,
                    args.input.display()
                )))
            }
        }
    }
    let fit = fit_exponent(&records, args.predicted, args.tol, args.eps_slack)?;
    println!("{}", serde_json::to_string_pretty(&fit)?);
    Ok(fit.pass)
}

fn run_cache(args: CacheArgs) -> Result<bool, Error> {
    let out_dir = args.out.unwrap_or_else(|| PathBuf::from("runs"));
    let cache = Cache::resolve(args.cache_dir.as_deref(), &out_dir);
    match args.op {
        CacheOp::Path => println!("{}", cache.root().display()),
        CacheOp::List => {
            for path in cache.list()? {
                println!("{}", path.display());
            }
        }
        CacheOp::Clear => {
            let n = cache.clear()?;
            println!("removed {n} cached records");
        }
    }
    Ok(true)
}
