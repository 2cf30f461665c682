//! `parc`: connectivity-driven whole-brain parcellation from the command
//! line.
//!
//! Data goes to files and standard output; progress and diagnostics go to
//! standard error. All randomness flows from `--seed`, so a command line
//! reproduces its outputs byte for byte, regardless of `--threads`.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use parc_core::group::{
    build_connectome, cross_validate, edgewise_ttests, majority_atlas, relabel_to_reference,
    select_top_edges, similarity_group_test, ClassifierParams, Connectome,
};
use parc_core::pipeline::{grid_segmentation, random_spatial_segmentation, synthetic_segmentation};
use parc_core::synth::{generate, SynthSpec};
use parc_core::{
    dice, iterate_parcellation, nmi, BrainMask, Error, Parcellation, PipelineParams, Segmentation,
    SimilarityGraph, SimilarityMeasure, SimilarityMetric, SparseConnectivity,
};

#[derive(Parser)]
#[command(
    name = "parc",
    version,
    about = "Connectivity-driven whole-brain parcellation"
)]
struct Cli {
    /// Worker threads (0 = all cores). Outputs do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the iterative parcellation pipeline.
    Parcellate(ParcellateArgs),
    /// Print NMI and Dice between two parcellation files.
    Compare { parc_a: PathBuf, parc_b: PathBuf },
    /// Align parcellations to a reference and write the majority atlas with
    /// its confidence map.
    Atlas(AtlasArgs),
    /// Aggregate voxel connectivity into a region-level connectome.
    Connectome(ConnectomeArgs),
    /// Similarity-based two-sample t-tests between two groups of
    /// parcellations.
    Ttest(TtestArgs),
    /// Edge-wise two-sample t-tests between two groups of connectomes.
    Edgetest(EdgetestArgs),
    /// Select the most significant connectome edges and cross-validate a
    /// max-margin classifier on them.
    Classify(ClassifyArgs),
    /// Generate a synthetic connectome with planted ground truth.
    Synth(SynthArgs),
    /// Build and dump the weighted similarity graph.
    GraphDump(GraphDumpArgs),
}

#[derive(Args)]
struct ParcellateArgs {
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    conn: PathBuf,
    /// Target region count.
    #[arg(long)]
    k: usize,
    /// Initial segmentation: file:<path>, random:<m>, grid:<cube>, or synthetic.
    #[arg(long)]
    init: String,
    #[arg(long, default_value_t = 2)]
    radius: i32,
    /// Profile similarity: correlation or cosine.
    #[arg(long, default_value = "correlation")]
    measure: String,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// Consecutive-iteration NMI that stops the loop.
    #[arg(long, default_value_t = 0.95)]
    stop_threshold: f64,
    #[arg(long, default_value_t = 10)]
    max_iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for parcellation.parc and trace.tsv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct AtlasArgs {
    /// Index of the reference parcellation within the input list.
    #[arg(long, default_value_t = 0)]
    reference: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Parcellation files, all with the same voxel count and k.
    #[arg(required = true)]
    parcs: Vec<PathBuf>,
}

#[derive(Args)]
struct ConnectomeArgs {
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    conn: PathBuf,
    #[arg(long)]
    parc: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TtestArgs {
    #[arg(long = "group-a", alias = "groupA", num_args = 1.., required = true)]
    group_a: Vec<PathBuf>,
    #[arg(long = "group-b", alias = "groupB", num_args = 1.., required = true)]
    group_b: Vec<PathBuf>,
    /// nmi or dice.
    #[arg(long, default_value = "nmi")]
    metric: String,
}

#[derive(Args)]
struct EdgetestArgs {
    #[arg(long = "group-a", alias = "groupA", num_args = 1.., required = true)]
    group_a: Vec<PathBuf>,
    #[arg(long = "group-b", alias = "groupB", num_args = 1.., required = true)]
    group_b: Vec<PathBuf>,
    /// Comma-separated p-value thresholds for the binary maps.
    #[arg(long, default_value = "0.05,0.00005")]
    thresholds: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long = "group-a", alias = "groupA", num_args = 1.., required = true)]
    group_a: Vec<PathBuf>,
    #[arg(long = "group-b", alias = "groupB", num_args = 1.., required = true)]
    group_b: Vec<PathBuf>,
    /// How many of the most significant edges feed the classifier.
    #[arg(long, default_value_t = 3)]
    edges: usize,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    /// Grid dimensions as NXxNYxNZ, e.g. 20x20x10.
    #[arg(long)]
    dims: String,
    /// Planted region count.
    #[arg(long)]
    k: u32,
    #[arg(long, default_value_t = 10.0)]
    mu_in: f64,
    #[arg(long, default_value_t = 1.0)]
    mu_out: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.3)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for mask.mask, conn.conn, truth.parc.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Write the binary twins instead of text.
    #[arg(long, default_value_t = false)]
    binary: bool,
}

#[derive(Args)]
struct GraphDumpArgs {
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    conn: PathBuf,
    /// Segmentation defining the profiles: file:<path>, random:<m>,
    /// grid:<cube>, or synthetic (which needs --k).
    #[arg(long)]
    init: String,
    #[arg(long, default_value_t = 0)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    radius: i32,
    #[arg(long, default_value = "correlation")]
    measure: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // ignore failure: the global pool may already exist
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NonConvergence { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Parcellate(args) => cmd_parcellate(args),
        Command::Compare { parc_a, parc_b } => cmd_compare(&parc_a, &parc_b),
        Command::Atlas(args) => cmd_atlas(args),
        Command::Connectome(args) => cmd_connectome(args),
        Command::Ttest(args) => cmd_ttest(args),
        Command::Edgetest(args) => cmd_edgetest(args),
        Command::Classify(args) => cmd_classify(args),
        Command::Synth(args) => cmd_synth(args),
        Command::GraphDump(args) => cmd_graph_dump(args),
    }
}

/// Build the initial segmentation named by an --init spec.
fn make_init(
    spec: &str,
    mask: &BrainMask,
    k: usize,
    params: &PipelineParams,
) -> Result<Segmentation, Error> {
    if let Some(path) = spec.strip_prefix("file:") {
        return Segmentation::read(path, mask);
    }
    if let Some(m) = spec.strip_prefix("random:") {
        let m: usize = m
            .parse()
            .map_err(|_| Error::Invalid(format!("bad region count in `{spec}`")))?;
        return random_spatial_segmentation(mask, m, params.seed);
    }
    if let Some(cube) = spec.strip_prefix("grid:") {
        let cube: i32 = cube
            .parse()
            .map_err(|_| Error::Invalid(format!("bad cube size in `{spec}`")))?;
        return grid_segmentation(mask, cube);
    }
    if spec == "synthetic" {
        if k < 1 {
            return Err(Error::Invalid("synthetic init needs --k >= 1".into()));
        }
        eprintln!("building synthetic (connectivity-blind) init with {k} regions");
        return synthetic_segmentation(mask, k, params);
    }
    Err(Error::Invalid(format!(
        "unknown init `{spec}` (expected file:<path>, random:<m>, grid:<cube>, or synthetic)"
    )))
}

fn pipeline_params(args: &ParcellateArgs) -> Result<PipelineParams, Error> {
    if args.k < 1 {
        return Err(Error::Invalid("k must be >= 1".into()));
    }
    let measure: SimilarityMeasure = args.measure.parse()?;
    let mut params = PipelineParams::new(args.k);
    params.radius = args.radius;
    params.measure = measure;
    params.restarts = args.restarts;
    params.stop_threshold = args.stop_threshold;
    params.max_iterations = args.max_iterations;
    params.seed = args.seed;
    Ok(params)
}

fn cmd_parcellate(args: ParcellateArgs) -> Result<(), Error> {
    let params = pipeline_params(&args)?;
    let mask = BrainMask::read(&args.mask)?;
    let conn = SparseConnectivity::read(&args.conn, &mask)?;
    eprintln!("{} voxels, {} connectivity entries", mask.len(), conn.nnz());
    let init = make_init(&args.init, &mask, args.k, &params)?;
    eprintln!("init has {} regions", init.k());

    let (parc, trace) = iterate_parcellation(&conn, &mask, &init, &params)?;
    for r in &trace.records {
        eprintln!(
            "iteration {}: nmi={:.4} dice={:.4}{}",
            r.iteration,
            r.nmi_prev,
            r.dice_prev,
            if r.degenerate { " (degenerate)" } else { "" }
        );
    }
    if !trace.converged {
        eprintln!("stopped at the iteration cap without reaching the threshold");
    }
    std::fs::create_dir_all(&args.out).map_err(Error::io(&args.out))?;
    parc.write(&mask, args.out.join("parcellation.parc"))?;
    trace.write(args.out.join("trace.tsv"))?;
    Ok(())
}

fn cmd_compare(parc_a: &PathBuf, parc_b: &PathBuf) -> Result<(), Error> {
    let a = Parcellation::read_standalone(parc_a)?;
    let b = Parcellation::read_standalone(parc_b)?;
    println!("nmi={} dice={}", nmi(&a, &b)?, dice(&a, &b)?);
    Ok(())
}

fn cmd_atlas(args: AtlasArgs) -> Result<(), Error> {
    if args.reference >= args.parcs.len() {
        return Err(Error::Invalid(format!(
            "reference index {} outside 0..{}",
            args.reference,
            args.parcs.len()
        )));
    }
    let parcs: Vec<Parcellation> = args
        .parcs
        .iter()
        .map(Parcellation::read_standalone)
        .collect::<Result<_, _>>()?;
    let reference = &parcs[args.reference];
    let relabeled: Vec<Parcellation> = parcs
        .iter()
        .map(|p| relabel_to_reference(p, reference))
        .collect::<Result<_, _>>()?;
    let atlas = majority_atlas(&relabeled)?;
    let contested = atlas.confidence.iter().filter(|&&c| c < 1.0).count();
    eprintln!(
        "{} of {} voxels are not unanimous",
        contested,
        atlas.confidence.len()
    );
    std::fs::create_dir_all(&args.out).map_err(Error::io(&args.out))?;
    atlas.write(args.out.join("atlas.parc"), args.out.join("atlas.conf"))?;
    Ok(())
}

fn cmd_connectome(args: ConnectomeArgs) -> Result<(), Error> {
    let mask = BrainMask::read(&args.mask)?;
    let conn = SparseConnectivity::read(&args.conn, &mask)?;
    let parc = Parcellation::read(&args.parc, &mask)?;
    let connectome = build_connectome(&conn, &parc)?;
    connectome.write(&args.out)
}

fn cmd_ttest(args: TtestArgs) -> Result<(), Error> {
    let metric: SimilarityMetric = args.metric.parse()?;
    let read_group = |paths: &[PathBuf]| -> Result<Vec<Parcellation>, Error> {
        paths.iter().map(Parcellation::read_standalone).collect()
    };
    let group_a = read_group(&args.group_a)?;
    let group_b = read_group(&args.group_b)?;
    let r = similarity_group_test(&group_a, &group_b, metric)?;
    println!("comparison\tp\tt");
    println!("A vs A-B\t{}\t{}", r.a_vs_across.p, r.a_vs_across.t);
    println!("B vs A-B\t{}\t{}", r.b_vs_across.p, r.b_vs_across.t);
    println!("A vs B\t{}\t{}", r.a_vs_b.p, r.a_vs_b.t);
    Ok(())
}

fn parse_thresholds(spec: &str) -> Result<Vec<f64>, Error> {
    spec.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Invalid(format!("bad threshold `{t}`")))
        })
        .collect()
}

fn read_connectomes(paths: &[PathBuf]) -> Result<Vec<Connectome>, Error> {
    paths.iter().map(Connectome::read).collect()
}

fn cmd_edgetest(args: EdgetestArgs) -> Result<(), Error> {
    let thresholds = parse_thresholds(&args.thresholds)?;
    let group_a = read_connectomes(&args.group_a)?;
    let group_b = read_connectomes(&args.group_b)?;
    let tests = edgewise_ttests(&group_a, &group_b, &thresholds)?;
    for (i, thr) in tests.thresholds.iter().enumerate() {
        eprintln!(
            "{} entries significant at p < {}",
            tests.marked_entries(i).len(),
            thr
        );
    }
    tests.write_report(&args.out)
}

fn cmd_classify(args: ClassifyArgs) -> Result<(), Error> {
    let group_a = read_connectomes(&args.group_a)?;
    let group_b = read_connectomes(&args.group_b)?;
    let tests = edgewise_ttests(&group_a, &group_b, &[])?;
    let edges = select_top_edges(&tests.p, tests.k, args.edges)?;
    let edge_list: Vec<String> = edges.iter().map(|(a, b)| format!("{a}:{b}")).collect();
    println!("edges={}", edge_list.join(" "));

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for c in &group_a {
        features.extend(edges.iter().map(|&(a, b)| c.get(a, b)));
        labels.push(1);
    }
    for c in &group_b {
        features.extend(edges.iter().map(|&(a, b)| c.get(a, b)));
        labels.push(-1);
    }
    let accuracy = cross_validate(
        &features,
        edges.len(),
        &labels,
        args.folds,
        args.seed,
        &ClassifierParams::default(),
    )?;
    println!("accuracy={accuracy}");
    Ok(())
}

fn parse_dims(spec: &str) -> Result<[i32; 3], Error> {
    let parts: Vec<&str> = spec.split('x').collect();
    if parts.len() != 3 {
        return Err(Error::Invalid(format!(
            "bad dims `{spec}` (expected NXxNYxNZ)"
        )));
    }
    let mut dims = [0i32; 3];
    for (d, p) in dims.iter_mut().zip(&parts) {
        *d = p
            .parse()
            .map_err(|_| Error::Invalid(format!("bad dims `{spec}`")))?;
    }
    Ok(dims)
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    let spec = SynthSpec {
        dims: parse_dims(&args.dims)?,
        k_true: args.k,
        within_strength: args.mu_in,
        between_strength: args.mu_out,
        noise: args.sigma,
        density: args.density,
        seed: args.seed,
    };
    let inst = generate(&spec)?;
    eprintln!(
        "{} voxels, {} entries, {} planted regions",
        inst.mask.len(),
        inst.connectivity.nnz(),
        args.k
    );
    std::fs::create_dir_all(&args.out).map_err(Error::io(&args.out))?;
    if args.binary {
        inst.mask.write_binary(args.out.join("mask.mask"))?;
        inst.connectivity.write_binary(args.out.join("conn.conn"))?;
        inst.ground_truth
            .write_binary(&inst.mask, args.out.join("truth.parc"))?;
    } else {
        inst.mask.write(args.out.join("mask.mask"))?;
        inst.connectivity.write(args.out.join("conn.conn"))?;
        inst.ground_truth
            .write(&inst.mask, args.out.join("truth.parc"))?;
    }
    Ok(())
}

fn cmd_graph_dump(args: GraphDumpArgs) -> Result<(), Error> {
    let mask = BrainMask::read(&args.mask)?;
    let conn = SparseConnectivity::read(&args.conn, &mask)?;
    let mut params = PipelineParams::new(args.k.max(1));
    params.radius = args.radius;
    params.measure = args.measure.parse()?;
    params.seed = args.seed;
    let init = make_init(&args.init, &mask, args.k, &params)?;
    let profiles = parc_core::profiles::aggregate_profiles(&conn, &init)?;
    let edges = parc_core::build_spatial_edges(&mask, args.radius);
    let graph: SimilarityGraph =
        parc_core::spatial_graph::weight_edges(&edges, &profiles, params.measure, args.radius)?;
    eprintln!("{} nodes, {} edges", graph.n, graph.edges.len());
    graph.write(&args.out)
}
