use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;

use scaleaug::dataset::{augment_dataset, load_dataset, AugmentOptions};
use scaleaug::evolution::{
    run_search_with, Evaluator, ExternalEvaluator, LogLine, SearchConfig, SearchError,
    SurrogateEvaluator,
};
use scaleaug::gaussian::{gaussian_map, numeric_area, GaussianMapParams};
use scaleaug::metric::{pareto_scale_balance, pearson, ScaleStats, DEFAULT_EPS};
use scaleaug::policy::{encode_policy, parse_policy, search_space_cardinality, serialize_policy};
use scaleaug::{BlendDirection, BoxGeometry, Genome, Policy};

mod exit;

use exit::{Failure, Kind};

#[derive(Parser)]
#[command(name = "scaleaug", version, about = "Scale-aware augmentation policies for object detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Augment a COCO-style dataset with a policy.
    Apply(ApplyArgs),
    /// Run the evolutionary policy search.
    Search(SearchArgs),
    /// Compute Pareto Scale Balance for a stats document.
    Metric {
        #[arg(long)]
        stats: PathBuf,
        /// Guard on post-fine-tune AP, in fraction units.
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
    },
    /// Pearson correlation of a two-column CSV file.
    Pearson {
        #[arg(long)]
        pairs: PathBuf,
    },
    /// Render a box's Gaussian blending map as a grayscale PNG.
    Gaussmap(GaussmapArgs),
    /// Policy document utilities.
    Policy {
        #[command(subcommand)]
        command: PolicyCommand,
    },
    /// Print the exact size of the search space.
    SpaceSize,
}

#[derive(Subcommand)]
enum PolicyCommand {
    /// Parse and check a policy document.
    Validate { file: PathBuf },
    /// Print the published COCO policy as a document.
    Published,
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    TransformAtCenter,
    OriginalAtCenter,
}

impl From<Direction> for BlendDirection {
    fn from(d: Direction) -> Self {
        match d {
            Direction::TransformAtCenter => BlendDirection::TransformAtCenter,
            Direction::OriginalAtCenter => BlendDirection::OriginalAtCenter,
        }
    }
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Direction::TransformAtCenter)]
    direction: Direction,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("evaluator").required(true).args(["evaluator_cmd", "surrogate_seed"])))]
struct SearchArgs {
    /// JSON search configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Shell command with `{policy}` and `{stats}` placeholders.
    #[arg(long)]
    evaluator_cmd: Option<String>,
    /// Use the built-in surrogate with a hidden target drawn from this seed.
    #[arg(long)]
    surrogate_seed: Option<u64>,
    /// Line-delimited JSON log, one record per evaluation.
    #[arg(long)]
    out: PathBuf,
    /// Where the external evaluator's per-run files go.
    #[arg(long)]
    workdir: Option<PathBuf>,
    /// Per-evaluation timeout in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    /// Also write the best policy document here.
    #[arg(long)]
    best: Option<PathBuf>,
}

#[derive(Args)]
struct GaussmapArgs {
    /// Box as `x_c,y_c,h,w` in pixels.
    #[arg(long = "box", value_parser = parse_floats::<4>)]
    bbox: [f64; 4],
    /// Image size as `H,W`.
    #[arg(long, value_parser = parse_floats::<2>)]
    image: [f64; 2],
    #[arg(long)]
    ratio: f64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let values: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::data)
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
}

fn apply(args: ApplyArgs) -> Result<(), Failure> {
    let policy = parse_policy(&read(&args.policy)?)
        .with_context(|| format!("policy {}", args.policy.display()))
        .map_err(Failure::data)?;
    let index = load_dataset(&args.annotations, &args.images).map_err(Failure::data)?;
    let options = AugmentOptions {
        direction: args.direction.into(),
        ..AugmentOptions::default()
    };
    let report = augment_dataset(&index, &policy, args.seed, &args.out, &options).map_err(Failure::data)?;
    for s in &report.skipped {
        eprintln!("skipped image {} ({}): {}", s.image_id, s.file_name, s.reason);
    }
    print_json(&report);
    Ok(())
}

fn search(args: SearchArgs) -> Result<(), Failure> {
    let config: SearchConfig = match &args.config {
        Some(path) => {
            let text = read(path)?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(de)
                .map_err(|e| anyhow!("{} at {}: {}", path.display(), e.path(), e.inner()))
                .map_err(Failure::data)?
        }
        None => SearchConfig::default(),
    };
    config.validate().map_err(Failure::data)?;

    let evaluator: Box<dyn Evaluator> = match (&args.evaluator_cmd, args.surrogate_seed) {
        (Some(template), _) => {
            let workdir = args
                .workdir
                .clone()
                .unwrap_or_else(|| args.out.with_extension("runs"));
            let timeout = args.timeout.map(Duration::from_secs_f64);
            Box::new(ExternalEvaluator::new(template.clone(), workdir, timeout).map_err(Failure::usage)?)
        }
        (None, Some(seed)) => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            Box::new(SurrogateEvaluator::new(Genome::random(&mut rng)))
        }
        (None, None) => unreachable!("clap requires one evaluator"),
    };

    let file = File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(Failure::data)?;
    let mut log = BufWriter::new(file);
    let mut write_error = None;
    let outcome = run_search_with(&config, evaluator.as_ref(), |record| {
        if let Some(e) = &record.error {
            eprintln!("generation {} genome {}: {e}", record.generation, record.index);
        }
        let line = LogLine::from(record).to_json_line();
        if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            write_error.get_or_insert(e);
        }
    });
    if let Some(e) = write_error {
        return Err(Failure::data(anyhow!("writing {}: {e}", args.out.display())));
    }
    let outcome = outcome.map_err(|e| match e {
        SearchError::AllFailed { .. } => Failure::new(Kind::Evaluator, e),
        SearchError::InvalidConfig(_) => Failure::data(e),
    })?;

    let doc = serialize_policy(&outcome.best_policy);
    if let Some(path) = &args.best {
        std::fs::write(path, &doc)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::data)?;
    }
    eprintln!(
        "best metric {} after {} evaluations",
        outcome.best_metric,
        outcome.history.len()
    );
    println!("{doc}");
    Ok(())
}

fn metric(stats: &Path, eps: f64) -> Result<(), Failure> {
    let doc = read(stats)?;
    let stats = ScaleStats::from_json(&doc)
        .with_context(|| format!("stats {}", stats.display()))
        .map_err(Failure::data)?;
    let value = pareto_scale_balance(&stats, eps).map_err(Failure::data)?;
    print_json(&value);
    Ok(())
}

fn read_pairs(path: &Path) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        if row.len() != 2 {
            bail!("line {}: expected 2 columns, got {}", i + 1, row.len());
        }
        match (row[0].parse::<f64>(), row[1].parse::<f64>()) {
            (Ok(x), Ok(y)) => {
                xs.push(x);
                ys.push(y);
            }
            // A non-numeric first row is a header.
            _ if i == 0 => continue,
            _ => bail!("line {}: non-numeric value in {:?}", i + 1, row),
        }
    }
    Ok((xs, ys))
}

fn gaussmap(args: GaussmapArgs) -> Result<(), Failure> {
    let [x_c, y_c, h, w] = args.bbox;
    let [image_h, image_w] = args.image;
    let geometry = BoxGeometry {
        x_c,
        y_c,
        h,
        w,
        image_h,
        image_w,
    };
    let params = GaussianMapParams::new(geometry, args.ratio).map_err(Failure::data)?;
    let map = gaussian_map(&params).map_err(Failure::data)?;
    map.to_gray()
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))
        .map_err(Failure::data)?;
    print_json(&serde_json::json!({
        "sigma_h": params.sigmas.sigma_h,
        "sigma_w": params.sigmas.sigma_w,
        "numeric_area": numeric_area(&map),
        "target_area": args.ratio * h * w,
    }));
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Apply(args) => apply(args),
        Command::Search(args) => search(args),
        Command::Metric { stats, eps } => metric(&stats, eps),
        Command::Pearson { pairs } => {
            let (xs, ys) = read_pairs(&pairs).map_err(Failure::data)?;
            println!("{}", pearson(&xs, &ys).map_err(Failure::data)?);
            Ok(())
        }
        Command::Gaussmap(args) => gaussmap(args),
        Command::Policy { command } => match command {
            PolicyCommand::Validate { file } => {
                let policy = parse_policy(&read(&file)?)
                    .with_context(|| format!("policy {}", file.display()))
                    .map_err(Failure::data)?;
                let genome = encode_policy(&policy).map_err(Failure::data)?;
                let genes: Vec<String> = genome.genes().iter().map(u8::to_string).collect();
                println!("ok: genome {}", genes.join(","));
                Ok(())
            }
            PolicyCommand::Published => {
                println!("{}", serialize_policy(&Policy::published()));
                Ok(())
            }
        },
        Command::SpaceSize => {
            let c = search_space_cardinality();
            println!("{}", c.total);
            eprintln!(
                "image level {} x sub-policy {}^5 x area ratios {} = {:.4e}",
                c.image_level, c.per_sub_policy, c.area_ratios, c.total as f64
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { Kind::Usage.code() } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.kind.code())
        }
    }
}
