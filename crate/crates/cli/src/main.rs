use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::Rotation3;

use geoflow::boundary::{trace_boundary, BoundaryParams};
use geoflow::classify::{classify_point, error_rate, ClassModel, DecisionLabel, DEFAULT_TIE_TOL};
use geoflow::flow::{principal_flow, FlowParams};
use geoflow::io::{
    best_cell, generate_band, generate_pair, load_dataset, parse_grid, sweep, write_curve_csv,
    write_dataset, write_sweep_csv, BBox, Dataset, PairShape, PlotFormat, PointFormat, Scene,
    Shape, SweepConfig,
};
use geoflow::sim::{
    convergence_experiment, tilted_mirror_pair, write_convergence_csv, ConvergenceSetup,
};
use geoflow::{Curve, Error, Result, Sphere};

/// Principal flows and principal boundaries on the unit sphere.
#[derive(Parser)]
#[command(name = "geoflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the principal flow of one point cloud
    Flow(FlowArgs),
    /// Trace the principal boundary between the +1 and -1 classes
    Boundary(BoundaryArgs),
    /// Classify points against flows fit to labeled training data
    Classify(ClassifyArgs),
    /// Misclassification table over a grid of (h1, h2)
    Sweep(SweepArgs),
    /// Monte Carlo convergence of estimated flows and boundary
    Simulate(SimulateArgs),
    /// Write a synthetic labeled dataset
    Generate(GenerateArgs),
}

#[derive(Args)]
struct Input {
    /// Point file with a header row
    #[arg(long)]
    input: PathBuf,
    /// Coordinate columns of the input: xyz or lonlat (degrees)
    #[arg(long, default_value = "xyz", value_parser = parse_point_format)]
    input_format: PointFormat,
}

#[derive(Args)]
struct Output {
    /// Destination file; standard output when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Plot {
    /// csv (nodes with cumulative length) or svg (orthographic sketch)
    #[arg(long, default_value = "csv", value_parser = parse_plot_format)]
    format: PlotFormat,
    /// Crop the svg to lon_min,lon_max,lat_min,lat_max (degrees)
    #[arg(long, value_parser = parse_bbox)]
    bbox: Option<BBox>,
}

#[derive(Args)]
struct FlowOpts {
    /// Integration step; h/5 when omitted
    #[arg(long)]
    step: Option<f64>,
    /// Length cap for each half of a flow (radians)
    #[arg(long, default_value_t = std::f64::consts::PI)]
    max_length: f64,
}

impl FlowOpts {
    fn params(&self) -> FlowParams {
        FlowParams {
            step: self.step,
            max_length: self.max_length,
        }
    }
}

#[derive(Args)]
struct TraceOpts {
    /// Boundary step length (radians)
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    /// Initial mixing-weight increment for the equal-margin correction
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    /// Equal-margin tolerance; 1e-6 * mean(h1, h2) when omitted
    #[arg(long)]
    tol: Option<f64>,
}

impl TraceOpts {
    fn params(&self, max_length: f64) -> BoundaryParams {
        BoundaryParams {
            delta: self.delta,
            eps: self.eps,
            tol_margin: self.tol,
            max_length,
            ..BoundaryParams::default()
        }
    }
}

#[derive(Args)]
struct RuleOpts {
    /// Distance exponent of the relative gap
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Spread exponent of the relative gap
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
}

#[derive(Args)]
struct FlowArgs {
    #[command(flatten)]
    input: Input,
    /// Only use points with this label
    #[arg(long, allow_hyphen_values = true)]
    label: Option<i8>,
    /// Locality radius (radians)
    #[arg(long)]
    h: f64,
    #[command(flatten)]
    flow: FlowOpts,
    #[command(flatten)]
    plot: Plot,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct BoundaryArgs {
    #[command(flatten)]
    input: Input,
    /// Locality radius for the +1 class
    #[arg(long)]
    h1: f64,
    /// Locality radius for the -1 class
    #[arg(long)]
    h2: f64,
    #[command(flatten)]
    flow: FlowOpts,
    #[command(flatten)]
    trace: TraceOpts,
    #[command(flatten)]
    plot: Plot,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    input: Input,
    /// Points to classify (same format as --input); the training points when omitted
    #[arg(long)]
    query: Option<PathBuf>,
    #[arg(long)]
    h1: f64,
    #[arg(long)]
    h2: f64,
    #[command(flatten)]
    flow: FlowOpts,
    #[command(flatten)]
    rule: RuleOpts,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: Input,
    /// Grid for h1: start:stop:step (inclusive) or a comma list
    #[arg(long, default_value = "0.1:0.25:0.01")]
    h1: String,
    /// Grid for h2: start:stop:step (inclusive) or a comma list
    #[arg(long, default_value = "0.05:0.15:0.01")]
    h2: String,
    #[command(flatten)]
    flow: FlowOpts,
    #[command(flatten)]
    trace: TraceOpts,
    #[command(flatten)]
    rule: RuleOpts,
    /// Classify only; do not trace a boundary per cell
    #[arg(long)]
    no_boundary: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SimulateArgs {
    /// Normal-offset standard deviations, strictly decreasing
    #[arg(long, default_value = "0.08,0.04,0.02,0.01", value_delimiter = ',')]
    sd: Vec<f64>,
    /// Locality radius for the estimates
    #[arg(long, default_value_t = 0.1)]
    h: f64,
    /// Samples per class per replicate
    #[arg(long, default_value_t = 20000)]
    n_mc: usize,
    #[arg(long, default_value_t = 8)]
    replicates: usize,
    /// Spacing of the estimation grid along each population curve
    #[arg(long, default_value_t = 0.02)]
    step: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    trace: TraceOpts,
    /// Length cap for each direction of the population boundary
    #[arg(long, default_value_t = std::f64::consts::PI)]
    max_length: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct GenerateArgs {
    /// c, s, greatcircle (one class) or cs, bands (two classes)
    #[arg(long, default_value = "cs")]
    shape: String,
    /// Points per class
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Normal-offset standard deviation (radians)
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    /// Noise for the second class of a pair; same as --noise when omitted
    #[arg(long)]
    noise2: Option<f64>,
    /// Rotation applied to the template: roll,pitch,yaw in degrees
    #[arg(long, default_value = "0,0,0", allow_hyphen_values = true)]
    pose: String,
    /// Label for single-class shapes
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    label: i8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// xyz or lonlat
    #[arg(long, default_value = "xyz", value_parser = parse_point_format)]
    format: PointFormat,
    #[command(flatten)]
    output: Output,
}

fn parse_point_format(s: &str) -> std::result::Result<PointFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_plot_format(s: &str) -> std::result::Result<PlotFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_bbox(s: &str) -> std::result::Result<BBox, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_pose(s: &str) -> Result<Rotation3<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidParameter(format!("pose {s:?}: {e}")))?;
    match v[..] {
        [r, p, y] => Ok(Rotation3::from_euler_angles(
            r.to_radians(),
            p.to_radians(),
            y.to_radians(),
        )),
        _ => Err(Error::InvalidParameter(format!(
            "pose {s:?}: expected roll,pitch,yaw"
        ))),
    }
}

/// Writes through a buffer to `--out` or standard output.
fn with_output(
    out: &Option<PathBuf>,
    write: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    match out {
        Some(path) => {
            let file =
                File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            write(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            write(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn load(input: &Input) -> Result<Dataset> {
    load_dataset(&input.input, input.input_format, Some(1))
}

fn classes(data: &Dataset) -> Result<(Vec<geoflow::ManifoldPoint>, Vec<geoflow::ManifoldPoint>)> {
    let (c1, c2) = (data.class(1), data.class(-1));
    if c1.is_empty() || c2.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "need points labeled 1 and -1, found {} and {}",
            c1.len(),
            c2.len()
        )));
    }
    Ok((c1, c2))
}

fn emit(curves: Vec<Curve>, points: &Dataset, plot: &Plot, out: &Option<PathBuf>) -> Result<()> {
    with_output(out, |w| match plot.format {
        PlotFormat::Csv => write_curve_csv(&curves, w),
        PlotFormat::Svg => {
            let mut scene = Scene::new(600.0);
            scene.bbox = plot.bbox;
            scene.points = points
                .points
                .iter()
                .copied()
                .zip(points.labels.iter().copied())
                .collect();
            for c in curves {
                scene.add_curve(c);
            }
            w.write_all(scene.to_svg().as_bytes())?;
            Ok(())
        }
    })
}

fn run_flow(args: &FlowArgs) -> Result<()> {
    let m = Sphere;
    let mut data = load(&args.input)?;
    if let Some(label) = args.label {
        let pts = data.class(label);
        data = Dataset::new(pts.clone(), vec![label; pts.len()], data.source)?;
    }
    let flow = principal_flow(&m, &data.points, args.h, None, &args.flow.params())?;
    eprintln!(
        "flow: {} nodes, length {:.6}",
        flow.len(),
        flow.curve.length()
    );
    emit(vec![flow.curve], &data, &args.plot, &args.output.out)
}

fn run_boundary(args: &BoundaryArgs) -> Result<()> {
    let m = Sphere;
    let data = load(&args.input)?;
    let (c1, c2) = classes(&data)?;
    let fp = args.flow.params();
    let f1 = principal_flow(&m, &c1, args.h1, None, &fp)?;
    let f2 = principal_flow(&m, &c2, args.h2, None, &fp)?;
    let result = trace_boundary(&m, &f1, &f2, None, &args.trace.params(args.flow.max_length))
        .map_err(|f| f.error)?;
    eprintln!(
        "boundary: {} nodes, length {:.6}, max residual {:.3e}",
        result.curve.len(),
        result.curve.length(),
        result
            .per_node_residual
            .iter()
            .fold(0.0f64, |a, r| a.max(r.abs()))
    );
    let curves = match args.plot.format {
        PlotFormat::Csv => vec![result.curve],
        PlotFormat::Svg => vec![f1.curve, f2.curve, result.curve],
    };
    emit(curves, &data, &args.plot, &args.output.out)
}

fn label_text(d: DecisionLabel) -> &'static str {
    match d {
        DecisionLabel::Class(1) | DecisionLabel::Overlap(1) => "1",
        DecisionLabel::Boundary => "0",
        _ => "-1",
    }
}

fn run_classify(args: &ClassifyArgs) -> Result<()> {
    let m = Sphere;
    let data = load(&args.input)?;
    let (c1, c2) = classes(&data)?;
    let fp = args.flow.params();
    let m1 = ClassModel::fit(&m, 1, c1, args.h1, &fp)?;
    let m2 = ClassModel::fit(&m, -1, c2, args.h2, &fp)?;
    let query = match &args.query {
        Some(path) => load_dataset(path, args.input.input_format, Some(1))?,
        None => data.clone(),
    };
    let decisions = query
        .points
        .iter()
        .map(|p| {
            classify_point(
                &m,
                p,
                &m1,
                &m2,
                args.rule.alpha,
                args.rule.beta,
                DEFAULT_TIE_TOL,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    if args.query.is_none() {
        let labels: Vec<DecisionLabel> = decisions.iter().map(|d| d.label).collect();
        let rate = error_rate(&labels, &query.labels)?;
        eprintln!(
            "misses: {} (+1), {} (-1); error rate {:.4}",
            rate.misses.0, rate.misses.1, rate.rate
        );
    }
    with_output(&args.output.out, |w| {
        writeln!(w, "x,y,z,decision,d1,d2")?;
        for (p, d) in query.points.iter().zip(&decisions) {
            let c = p.coords();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                c.x,
                c.y,
                c.z,
                label_text(d.label),
                d.d1,
                d.d2
            )?;
        }
        Ok(())
    })
}

fn run_sweep(args: &SweepArgs) -> Result<()> {
    let m = Sphere;
    let data = load(&args.input)?;
    let (c1, c2) = classes(&data)?;
    let cfg = SweepConfig {
        flow: args.flow.params(),
        boundary: args.trace.params(args.flow.max_length),
        alpha: args.rule.alpha,
        beta: args.rule.beta,
        tie_tol: DEFAULT_TIE_TOL,
        skip_boundary: args.no_boundary,
    };
    let cells = sweep(
        &m,
        &c1,
        &c2,
        &parse_grid(&args.h1)?,
        &parse_grid(&args.h2)?,
        &cfg,
    )?;
    if let Some(b) = best_cell(&cells) {
        eprintln!(
            "best: h1 {} h2 {} misses {} + {} rate {:.4}",
            b.h1, b.h2, b.misses1, b.misses2, b.rate
        );
    }
    with_output(&args.output.out, |w| write_sweep_csv(&cells, w))
}

fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let m = Sphere;
    let setup = ConvergenceSetup {
        populations: tilted_mirror_pair(&m, 100)?,
        h: args.h,
        n_mc: args.n_mc,
        replicates: args.replicates,
        seed: args.seed,
        grid_spacing: args.step,
        stratified: true,
        boundary: args.trace.params(args.max_length),
    };
    let rows = convergence_experiment(&m, &setup, &args.sd)?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    with_output(&args.output.out, |w| write_convergence_csv(&rows, w))
}

fn run_generate(args: &GenerateArgs) -> Result<()> {
    let m = Sphere;
    let pose = parse_pose(&args.pose)?;
    let data = match args.shape.to_ascii_lowercase().as_str() {
        "cs" | "bands" => {
            let shape: PairShape = args.shape.parse()?;
            generate_pair(
                &m,
                shape,
                args.n,
                (args.noise, args.noise2.unwrap_or(args.noise)),
                &pose,
                args.seed,
            )?
        }
        _ => {
            let shape: Shape = args.shape.parse()?;
            generate_band(&m, shape, args.n, args.noise, &pose, args.seed, args.label)?
        }
    };
    with_output(&args.output.out, |w| write_dataset(&data, args.format, w))
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("GEOFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("GEOFLOW_THREADS={raw:?} is not a count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidParameter(e.to_string()))
}

fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Flow(a) => run_flow(a),
        Command::Boundary(a) => run_boundary(a),
        Command::Classify(a) => run_classify(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Generate(a) => run_generate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.name());
            ExitCode::from(1)
        }
    }
}
