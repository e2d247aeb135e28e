#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Parser, Subcommand};

use circumesh::anchors::Histogram;
use circumesh::dataset::{self, AugmentParams, LabelBuilder, RecordHeader, TrainingSample};
use circumesh::detector::{self, Detector, DetectorConfig, Trainer};
use circumesh::metrics::{self, EvalParams};
use circumesh::pipeline::{self, FaceRecovery};
use circumesh::postprocess;
use circumesh::{io, synthetic, AnchorGrid, Error, IndexedMesh, PointCloud};

#[derive(Parser)]
#[command(name = "circumesh", version, about = "Point cloud triangulation by circumcenter detection")]
struct Cli {
    /// `key = value` settings; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize and decimate meshes, then write a labelled patch stream.
    Prepare {
        #[arg(long)]
        mesh_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        voxel: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        eta0: Option<f64>,
        /// `d_rho,d_theta,d_phi,R`; angles accept `pi/N`.
        #[arg(long)]
        grid: Option<String>,
        /// Extra randomly rotated and scaled copies per mesh.
        #[arg(long)]
        augment: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a detector on a patch stream.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iters: Option<u64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        decay_every: Option<u64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        neg_ratio: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        log_every: Option<u64>,
        /// Comma-separated per-point MLP widths.
        #[arg(long)]
        point_widths: Option<String>,
        #[arg(long)]
        conv_width: Option<usize>,
        #[arg(long)]
        head_widths: Option<String>,
        #[arg(long)]
        pe_levels: Option<usize>,
        #[arg(long)]
        beta: Option<usize>,
        #[arg(long)]
        slots: Option<usize>,
    },
    /// Triangulate a point cloud with a trained detector.
    Triangulate {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the K stored in the model.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        conf: Option<f64>,
        #[arg(long)]
        no_postprocess: bool,
        #[arg(long)]
        max_hole: Option<usize>,
    },
    /// Recover a mesh from its own exact circumcenters.
    Oracle {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        eta0: Option<f64>,
        #[arg(long)]
        grid: Option<String>,
    },
    /// Compare a reconstruction with a reference mesh.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dihedral: Option<f64>,
    },
    /// Recovery accuracy by largest interior angle.
    Angles {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        bin: Option<f64>,
    },
    /// Write a synthetic mesh (or its vertices, for `.xyz`).
    Synth {
        /// grid, icosphere, cylinder, cube, delaunay
        #[arg(long)]
        shape: String,
        #[arg(long)]
        out: PathBuf,
        /// Resolution: grid side, subdivision level, segments or point count.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(m) => CliError::Usage(m),
            other => CliError::Data(other),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

const KNOWN_KEYS: &[&str] = &[
    "voxel",
    "k",
    "eta0",
    "grid",
    "augment",
    "seed",
    "iters",
    "lr",
    "decay_every",
    "batch",
    "lambda",
    "neg_ratio",
    "log_every",
    "point_widths",
    "conv_width",
    "head_widths",
    "pe_levels",
    "beta",
    "slots",
    "conf",
    "max_hole",
    "samples",
    "eps",
    "dihedral",
    "bin",
    "n",
];

struct Settings(BTreeMap<String, String>);

impl Settings {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self(BTreeMap::new()));
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let map = io::parse_config(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if let Some(k) = map.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(CliError::Usage(format!("unknown config key `{k}`")));
        }
        Ok(Self(map))
    }

    /// Flag, then config file, then `default`.
    fn get<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T>
    where
        T::Err: Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.0.get(key) {
            Some(s) => s.parse().map_err(|e| CliError::Usage(format!("config `{key} = {s}`: {e}"))),
            None => Ok(default),
        }
    }

    fn get_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.0
            .get(key)
            .map(|s| s.parse().map_err(|e| CliError::Usage(format!("config `{key} = {s}`: {e}"))))
            .transpose()
    }
}

fn parse_number(s: &str) -> CliResult<f64> {
    let s = s.trim();
    let bad = || CliError::Usage(format!("invalid number `{s}`"));
    if let Some(rest) = s.strip_prefix("pi") {
        let rest = rest.trim();
        if rest.is_empty() {
            return Ok(std::f64::consts::PI);
        }
        let d: f64 = rest.strip_prefix('/').ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        return Ok(std::f64::consts::PI / d);
    }
    s.parse().map_err(|_| bad())
}

fn parse_grid(s: Option<String>) -> CliResult<AnchorGrid> {
    let Some(s) = s else {
        return Ok(AnchorGrid::default_grid());
    };
    let parts = s.split(',').map(parse_number).collect::<CliResult<Vec<_>>>()?;
    let [dr, dt, dp, r] = parts[..] else {
        return Err(CliError::Usage(format!("--grid needs 4 comma-separated values, got `{s}`")));
    };
    Ok(AnchorGrid::new(dr, dt, dp, r)?)
}

fn parse_widths(s: &str) -> CliResult<Vec<usize>> {
    s.split(',').map(|w| w.trim().parse().map_err(|_| CliError::Usage(format!("invalid width list `{s}`")))).collect()
}

fn mesh_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Data(Error::Io(e)))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("obj" | "ply")
            )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(Error::FormatMismatch(format!("no .obj or .ply meshes in {}", dir.display()))));
    }
    Ok(files)
}

fn prepare(settings: &Settings, a: PrepareArgs) -> CliResult {
    let voxel = settings.get(a.voxel, "voxel", 0.01)?;
    let k = settings.get(a.k, "k", 50)?;
    let eta0 = settings.get(a.eta0, "eta0", 0.01)?;
    let grid = parse_grid(settings.get_opt(a.grid, "grid")?)?;
    let copies = settings.get(a.augment, "augment", 0)?;
    let seed = settings.get(a.seed, "seed", 0)?;
    let mut samples: Vec<TrainingSample> = Vec::new();
    let mut radii = Histogram::new(grid.max_radius / 20.0, 2.0 * grid.max_radius);
    let (mut centers, mut in_range) = (0usize, 0usize);
    for (fi, path) in mesh_files(&a.mesh_dir)?.iter().enumerate() {
        let raw = io::load_mesh(path)?;
        let mut mesh = dataset::normalize_mesh(&raw);
        if voxel > 0.0 {
            mesh = dataset::voxel_decimate(&mesh, voxel)?;
        }
        for copy in 0..=copies {
            let m = if copy == 0 {
                mesh.clone()
            } else {
                let s = seed.wrapping_mul(1_000_003).wrapping_add((fi * 10_007 + copy) as u64);
                dataset::augment(&mesh, &AugmentParams::default(), s)
            };
            if m.vertex_count() <= k {
                eprintln!("skipping {} ({} vertices, need more than k = {k})", path.display(), m.vertex_count());
                break;
            }
            let builder = LabelBuilder::new(&m)?;
            for v in 0..m.vertex_count() {
                let s = builder.make_sample(v, &grid, k, eta0)?;
                for r in builder.normalized_radii(&s.patch)? {
                    radii.add(r);
                    centers += 1;
                    in_range += usize::from(r <= grid.max_radius);
                }
                samples.push(s);
            }
        }
        println!("{}: {} vertices, {} faces", path.display(), mesh.vertex_count(), mesh.face_count());
    }
    let header = RecordHeader { k, eta0, grid };
    let mut w = std::io::BufWriter::new(std::fs::File::create(&a.out).map_err(|e| CliError::Data(e.into()))?);
    dataset::write_records(&mut w, &header, &samples)?;
    std::io::Write::flush(&mut w).map_err(|e| CliError::Data(e.into()))?;
    let positives: usize = samples.iter().map(|s| s.positive_count()).sum();
    let out_of_range: usize = samples.iter().map(|s| s.dropped_out_of_range).sum();
    let outside: usize = samples.iter().map(|s| s.dropped_outside_patch).sum();
    println!("samples={} anchors={} positive_cells={positives}", samples.len(), grid.len());
    println!("dropped_out_of_range={out_of_range} dropped_outside_patch={outside}");
    println!(
        "normalized_circumradius in_range={:.4} q50={:.3} q90={:.3} q99={:.3}",
        if centers == 0 { 0.0 } else { in_range as f64 / centers as f64 },
        radii.quantile(0.5),
        radii.quantile(0.9),
        radii.quantile(0.99)
    );
    for (j, c) in radii.counts.iter().enumerate().filter(|(_, &c)| c > 0) {
        println!("radius_bin {:.4}-{:.4} {c}", j as f64 * radii.bin_width, (j + 1) as f64 * radii.bin_width);
    }
    Ok(())
}

struct PrepareArgs {
    mesh_dir: PathBuf,
    out: PathBuf,
    voxel: Option<f64>,
    k: Option<usize>,
    eta0: Option<f64>,
    grid: Option<String>,
    augment: Option<usize>,
    seed: Option<u64>,
}

struct TrainArgs {
    data: PathBuf,
    out: PathBuf,
    iters: Option<u64>,
    lr: Option<f64>,
    decay_every: Option<u64>,
    batch: Option<usize>,
    lambda: Option<f64>,
    neg_ratio: Option<f64>,
    seed: Option<u64>,
    log_every: Option<u64>,
    point_widths: Option<String>,
    conv_width: Option<usize>,
    head_widths: Option<String>,
    pe_levels: Option<usize>,
    beta: Option<usize>,
    slots: Option<usize>,
}

fn train(settings: &Settings, a: TrainArgs) -> CliResult {
    let file = std::fs::File::open(&a.data).map_err(|e| CliError::Data(e.into()))?;
    let (header, samples) = dataset::read_records(std::io::BufReader::new(file))?;
    let samples: Vec<TrainingSample> = samples.into_iter().filter(|s| s.patch.k() == header.k).collect();
    if samples.is_empty() {
        return Err(CliError::Data(Error::NoPositives));
    }
    let defaults = DetectorConfig::default();
    let config = DetectorConfig {
        pe_levels: settings.get(a.pe_levels, "pe_levels", defaults.pe_levels)?,
        depth_multiplier: settings.get(a.beta, "beta", defaults.depth_multiplier)?,
        point_widths: match settings.get_opt(a.point_widths, "point_widths")? {
            Some(s) => parse_widths(&s)?,
            None => defaults.point_widths.clone(),
        },
        conv_width: settings.get(a.conv_width, "conv_width", defaults.conv_width)?,
        head_widths: match settings.get_opt(a.head_widths, "head_widths")? {
            Some(s) => parse_widths(&s)?,
            None => defaults.head_widths.clone(),
        },
        anchors: header.grid.len(),
        slots: settings.get(a.slots, "slots", defaults.slots)?,
        lambda: settings.get(a.lambda, "lambda", defaults.lambda)?,
        neg_ratio: settings.get(a.neg_ratio, "neg_ratio", defaults.neg_ratio)?,
        learning_rate: settings.get(a.lr, "lr", defaults.learning_rate)?,
        decay_factor: defaults.decay_factor,
        decay_every: settings.get(a.decay_every, "decay_every", defaults.decay_every)?,
    };
    let iters = settings.get(a.iters, "iters", 1000)?;
    let batch = settings.get(a.batch, "batch", 400)?;
    let seed = settings.get(a.seed, "seed", 0)?;
    let log_every = settings.get(a.log_every, "log_every", 100)?.max(1);
    let detector = Detector::new(config, header.grid, seed)?;
    println!(
        "samples={} k={} anchors={} parameters={}",
        samples.len(),
        header.k,
        header.grid.len(),
        detector.parameters().parameter_count()
    );
    let monitor: Vec<TrainingSample> = samples.iter().take(512).cloned().collect();
    let mut trainer = Trainer::new(detector, seed.wrapping_add(1));
    let start = Instant::now();
    for it in 0..iters {
        let r = trainer.train_random_batch(&samples, batch)?;
        if (it + 1) % log_every == 0 || it + 1 == iters {
            let e = detector::evaluate(trainer.detector(), &monitor, 0.5, 256);
            println!(
                "iter={} loss={:.6} cls={:.6} loc={:.6} macc={:.4} miou={:.4} secs={:.1}",
                it + 1,
                r.total,
                r.classification,
                r.localization,
                e.m_acc,
                e.m_iou,
                start.elapsed().as_secs_f64()
            );
        }
    }
    detector::save_checkpoint(&a.out, trainer.detector(), header.k, header.eta0)?;
    println!("saved {}", a.out.display());
    Ok(())
}

fn non_manifold(mesh: &IndexedMesh) -> f64 {
    mesh.edge_adjacency().non_manifold_percentage()
}

fn run(cli: Cli) -> CliResult {
    let settings = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Prepare { mesh_dir, out, voxel, k, eta0, grid, augment, seed } => {
            prepare(&settings, PrepareArgs { mesh_dir, out, voxel, k, eta0, grid, augment, seed })
        }
        Command::Train {
            data,
            out,
            iters,
            lr,
            decay_every,
            batch,
            lambda,
            neg_ratio,
            seed,
            log_every,
            point_widths,
            conv_width,
            head_widths,
            pe_levels,
            beta,
            slots,
        } => train(
            &settings,
            TrainArgs {
                data,
                out,
                iters,
                lr,
                decay_every,
                batch,
                lambda,
                neg_ratio,
                seed,
                log_every,
                point_widths,
                conv_width,
                head_widths,
                pe_levels,
                beta,
                slots,
            },
        ),
        Command::Triangulate { cloud, model, out, k, conf, no_postprocess, max_hole } => {
            let ckpt = detector::load_checkpoint(&model)?;
            let k = settings.get(k, "k", ckpt.k)?;
            let conf = settings.get(conf, "conf", 0.5)?;
            let max_hole = settings.get(max_hole, "max_hole", postprocess::DEFAULT_MAX_HOLE_EDGES)?;
            let cloud = PointCloud::new(io::load_points(&cloud)?)?;
            let t = pipeline::triangulate(&cloud, &ckpt.detector, k, ckpt.eta0, conf)?;
            println!("points={} detections={}", cloud.len(), t.detections);
            println!("primitive_faces={} non_manifold_edges_pct={:.4}", t.mesh.face_count(), non_manifold(&t.mesh));
            let mesh = if no_postprocess {
                t.mesh.clone()
            } else {
                let start = Instant::now();
                let m = postprocess::postprocess(t.mesh.vertices.clone(), &t.triangles, max_hole);
                println!(
                    "final_faces={} non_manifold_edges_pct={:.4} postprocess_secs={:.3}",
                    m.face_count(),
                    non_manifold(&m),
                    start.elapsed().as_secs_f64()
                );
                m
            };
            println!(
                "patches_secs={:.3} inference_secs={:.3} recovery_secs={:.3}",
                t.timings.patches_secs, t.timings.inference_secs, t.timings.recovery_secs
            );
            io::save_mesh(&out, &mesh)?;
            Ok(())
        }
        Command::Oracle { mesh, out, k, eta0, grid } => {
            let k = settings.get(k, "k", 50)?;
            let eta0 = settings.get(eta0, "eta0", 0.01)?;
            let grid = parse_grid(settings.get_opt(grid, "grid")?)?;
            let reference = io::load_mesh(&mesh)?;
            if reference.vertex_count() <= k {
                return Err(CliError::Usage(format!(
                    "mesh has {} vertices; k must be smaller",
                    reference.vertex_count()
                )));
            }
            let o = pipeline::oracle_triangulate(&reference, k, eta0, &grid)?;
            let r = FaceRecovery::compare(&reference, &o.triangulation.mesh)?;
            println!("recovered {}/{} faces ({:.1}%) spurious={}", r.matched, r.reference, r.percentage(), r.spurious);
            println!(
                "centers={} dropped_out_of_range={} dropped_outside_patch={}",
                o.stats.centers, o.stats.dropped_out_of_range, o.stats.dropped_outside_patch
            );
            io::save_mesh(&out, &o.triangulation.mesh)?;
            Ok(())
        }
        Command::Eval { gt, pred, samples, eps, seed, dihedral } => {
            let d = EvalParams::default();
            let params = EvalParams {
                samples: settings.get(samples, "samples", d.samples)?,
                eps: settings.get(eps, "eps", d.eps)?,
                seed: settings.get(seed, "seed", d.seed)?,
                dihedral_deg: settings.get(dihedral, "dihedral", d.dihedral_deg)?,
            };
            if !(params.eps > 0.0) || params.samples == 0 {
                return Err(CliError::Usage("eps and samples must be positive".into()));
            }
            let report = metrics::evaluate_meshes(&io::load_mesh(&gt)?, &io::load_mesh(&pred)?, &params)?;
            print!("{}", report.to_key_value());
            println!("{}", report.to_json_line());
            Ok(())
        }
        Command::Angles { gt, pred, bin } => {
            let bin = settings.get(bin, "bin", 10.0)?;
            let bins = metrics::angle_accuracy_report(&io::load_mesh(&gt)?, &io::load_mesh(&pred)?, bin)?;
            for b in bins.iter().filter(|b| b.gt_faces > 0) {
                println!(
                    "angle={:.1}-{:.1} gt={} recovered={} accuracy={:.4}",
                    b.lo_deg,
                    b.hi_deg,
                    b.gt_faces,
                    b.recovered,
                    b.accuracy().unwrap_or(0.0)
                );
            }
            Ok(())
        }
        Command::Synth { shape, out, n, seed } => {
            let seed = settings.get(seed, "seed", 0)?;
            let mesh = match shape.as_str() {
                "grid" => synthetic::triangular_grid(n.unwrap_or(5), n.unwrap_or(5), 1.0),
                "icosphere" => synthetic::icosphere(n.unwrap_or(2)),
                "cylinder" => synthetic::open_cylinder(n.unwrap_or(16), 6, 1.0),
                "cube" => synthetic::cube(n.unwrap_or(4)),
                "delaunay" => synthetic::random_delaunay_surface(n.unwrap_or(300), 0.05, 0.1, seed),
                other => return Err(CliError::Usage(format!("unknown shape `{other}`"))),
            };
            if out.extension().and_then(|e| e.to_str()) == Some("xyz") {
                io::save_points(&out, &mesh.vertices)?;
            } else {
                io::save_mesh(&out, &mesh)?;
            }
            println!("vertices={} faces={}", mesh.vertex_count(), mesh.face_count());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
