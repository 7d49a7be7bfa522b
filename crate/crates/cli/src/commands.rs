use std::path::{Path, PathBuf};

use serde::Serialize;
use softsplat_core::geometry::{gen_lidar, gen_sphere, normalize_kitti, normalize_unit, BBox3D};
use softsplat_core::gradcheck::{run_all, SuiteResult, ABS_FLOOR, FD_STEP, GRADCHECK_TOLERANCE};
use softsplat_core::infotheory::{compare_strategies, ComparisonReport};
use softsplat_core::io::{load_cloud, load_cloud_with, save_cloud, save_grid, save_report, to_report_string};
use softsplat_core::io::{CloudFormat, GridFormat, Provenance};
use softsplat_core::metrics::{arc_cd, chamfer_l1, chamfer_with, fidelity_with, fscore, mmd};
use softsplat_core::nn::{counterfactual_ablate, grad_flow_probe, AblationParams, AblationReport, ProbeReport};
use softsplat_core::projection::{rasterize_hard, splat_forward_with, HardMode};
use softsplat_core::{
    CameraModel, Error, Exec, FeatureGrid, GridSemantics, PointCloud, ProjectionKind, Result, RunConfig,
};

use crate::args::*;

/// Resolves flags over the config file over defaults.
fn resolve_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_toml_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.sigma {
        cfg.splat.sigma = s;
    }
    if let Some(r) = args.radius {
        cfg.splat.radius = r;
    }
    if args.no_depth_weighting {
        cfg.splat.depth_weighting = false;
    }
    if args.height.is_some() || args.width.is_some() || args.distance.is_some() {
        cfg.camera = CameraModel::looking_at_origin(
            args.height.unwrap_or(cfg.camera.height),
            args.width.unwrap_or(cfg.camera.width),
            args.distance.unwrap_or(cfg.camera.translation[2]),
        )?;
    }
    if let Some(b) = args.bins {
        cfg.analysis.bins = b;
    }
    if let Some(t) = args.tau {
        cfg.analysis.tau = t;
    }
    if let Some(s) = args.seed_data {
        cfg.seeds.data = s;
    }
    if let Some(s) = args.seed_params {
        cfg.seeds.params = s;
    }
    if let Some(s) = args.seed_probe {
        cfg.seeds.probe = s;
    }
    // output locations are not part of an experiment's identity; leaving them
    // out keeps reports byte-identical wherever they are written
    cfg.output = None;
    cfg.validate()?;
    Ok(cfg)
}

fn synthesize(kind: SynthKind, n: usize, rays: usize, seed: u64) -> Result<PointCloud> {
    match kind {
        SynthKind::Sphere => gen_sphere(n, seed),
        SynthKind::Lidar => gen_lidar(n, rays, seed),
    }
}

/// Loads or generates the command's cloud and records the input path in the
/// effective config.
fn load_source(src: &SourceArgs, cfg: &mut RunConfig, default: (SynthKind, usize)) -> Result<PointCloud> {
    if let Some(p) = &src.input {
        cfg.input = Some(p.clone());
    }
    let cloud = match &cfg.input {
        Some(path) => {
            if src.synth.is_some() {
                return Err(Error::InvalidInput(
                    "--synth and an input file are mutually exclusive".into(),
                ));
            }
            let loaded = load_cloud_with(path, CloudFormat::from_path(path), src.lenient)?;
            if loaded.skipped > 0 {
                eprintln!(
                    "softsplat: skipped {} malformed lines in {}",
                    loaded.skipped,
                    path.display()
                );
            }
            loaded.cloud
        }
        None => synthesize(
            src.synth.unwrap_or(default.0),
            src.points.unwrap_or(default.1),
            src.rays,
            cfg.seeds.data,
        )?,
    };
    Ok(if src.raw_coords { cloud } else { normalize_unit(&cloud) })
}

#[derive(Serialize)]
struct Effective<'a, T: Serialize> {
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    run: Option<&'a RunConfig>,
    options: &'a T,
}

fn provenance<T: Serialize>(command: &'static str, run: Option<&RunConfig>, options: &T) -> Result<Provenance> {
    let mut p = Provenance::default();
    if let Some(cfg) = run {
        p = p
            .with_seed("data", cfg.seeds.data)
            .with_seed("params", cfg.seeds.params)
            .with_seed("probe", cfg.seeds.probe);
    }
    p.with_config(&Effective { command, run, options })
}

fn emit<T: Serialize>(report: &T, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => save_report(report, path),
        None => {
            println!("{}", to_report_string(report)?);
            Ok(())
        }
    }
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

fn write_grid(grid: &FeatureGrid, path: &Path, range: Option<&[f64]>, default_range: [f64; 2]) -> Result<Vec<PathBuf>> {
    let format = if is_pgm(path) {
        let range = match range {
            Some(r) => [r[0], r[1]],
            None => default_range,
        };
        GridFormat::Pgm { range }
    } else {
        GridFormat::Raw
    };
    save_grid(grid, path, format)
}

pub fn gen_synth(args: &GenSynthArgs) -> Result<()> {
    let cloud = synthesize(args.kind, args.points, args.rays, args.seed)?;
    save_cloud(&cloud, &args.output, CloudFormat::from_path(&args.output))
}

pub fn project(args: &ProjectArgs) -> Result<()> {
    let mut cfg = resolve_config(&args.config)?;
    let cloud = load_source(&args.source, &mut cfg, (SynthKind::Sphere, 2048))?;
    let mode = match args.mode {
        HardModeArg::Depth => HardMode::Depth,
        HardModeArg::Ccm => HardMode::Ccm,
    };
    let raster = rasterize_hard(&cloud, &cfg.camera, mode)?;
    let default_range = match mode {
        HardMode::Ccm => [0.0, 1.0],
        HardMode::Depth => [0.0, raster.grid.max_value().max(f64::MIN_POSITIVE)],
    };
    write_grid(&raster.grid, &args.output, args.range.as_deref(), default_range)?;
    Ok(())
}

pub fn splat(args: &SplatArgs, exec: Exec) -> Result<()> {
    let mut cfg = resolve_config(&args.config)?;
    let cloud = load_source(&args.source, &mut cfg, (SynthKind::Sphere, 2048))?;
    let feats = cloud.features().cloned().unwrap_or_else(|| cloud.ccm_colors());
    let (grid, aux) = splat_forward_with(&cloud, &feats, &cfg.camera, &cfg.splat, exec)?;
    write_grid(&grid, &args.output, args.range.as_deref(), [0.0, 1.0])?;
    if let Some(path) = &args.weights {
        save_grid(&aux.weight_grid(), path, GridFormat::Raw)?;
    }
    Ok(())
}

/// Hard and soft grids side by side, separated by a two-pixel bright bar.
fn panel(hard: &FeatureGrid, soft: &FeatureGrid) -> Result<FeatureGrid> {
    const GAP: usize = 2;
    let (h, w, c) = (hard.height(), hard.width(), hard.channels());
    let pw = 2 * w + GAP;
    let mut out = FeatureGrid::zeros(h, pw, c, GridSemantics::Generic);
    for row in 0..h {
        for ch in 0..c {
            for col in 0..w {
                out.set(row, col, ch, hard.get(row, col, ch));
                out.set(row, w + GAP + col, ch, soft.get(row, col, ch));
            }
            for col in w..w + GAP {
                out.set(row, col, ch, 1.0);
            }
        }
    }
    out.validate()?;
    Ok(out)
}

#[derive(Serialize)]
struct AnalyzeChecks {
    /// Soft coverage is at least twice the hard coverage.
    coverage_gain_at_least_two: bool,
    /// Soft CMIT strictly exceeds hard CMIT.
    soft_cmit_exceeds_hard: bool,
}

#[derive(Serialize)]
struct AnalyzeReport {
    comparison: ComparisonReport,
    checks: AnalyzeChecks,
    outputs: Vec<String>,
    provenance: Provenance,
}

pub fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let mut cfg = resolve_config(&args.config)?;
    let cloud = load_source(&args.source, &mut cfg, (SynthKind::Lidar, 2048))?;
    let prov = provenance("analyze", Some(&cfg), args)?;
    let cmp = compare_strategies(&cloud, &cfg.camera, &cfg.splat, &cfg.analysis, prov.clone())?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.clone(),
        source: e,
    })?;
    let mut written = Vec::new();
    written.extend(save_grid(
        &cmp.hard_grid,
        &args.out_dir.join("hard.raw"),
        GridFormat::Raw,
    )?);
    written.extend(save_grid(
        &cmp.soft_grid,
        &args.out_dir.join("soft.raw"),
        GridFormat::Raw,
    )?);
    let pgm = GridFormat::Pgm {
        range: cfg.analysis.range,
    };
    written.extend(save_grid(
        &panel(&cmp.hard_grid, &cmp.soft_grid)?,
        &args.out_dir.join("panel.pgm"),
        pgm,
    )?);

    let r = &cmp.report;
    let checks = AnalyzeChecks {
        coverage_gain_at_least_two: r.coverage_gain.is_some_and(|g| g >= 2.0),
        soft_cmit_exceeds_hard: r.soft.cmit > r.hard.cmit,
    };
    let passed = checks.coverage_gain_at_least_two && checks.soft_cmit_exceeds_hard;
    let outputs = written
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .chain(std::iter::once("report.json".to_string()))
        .collect();
    let report = AnalyzeReport {
        comparison: cmp.report.clone(),
        checks,
        outputs,
        provenance: prov,
    };
    save_report(&report, &args.out_dir.join("report.json"))?;
    println!(
        "coverage hard {:.6} soft {:.6} gain {}",
        r.hard.coverage,
        r.soft.coverage,
        r.coverage_gain.map_or("undefined".to_string(), |g| format!("{g:.3}"))
    );
    println!("cmit     hard {:.6} soft {:.6}", r.hard.cmit, r.soft.cmit);
    if !passed {
        return Err(Error::Internal(
            "soft projection did not dominate hard projection (see checks in report.json)".into(),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct GradcheckReport {
    fd_step: f64,
    tolerance: f64,
    abs_floor: f64,
    suites: Vec<SuiteResult>,
    passed: bool,
    provenance: Provenance,
}

pub fn gradcheck(args: &GradcheckArgs, exec: Exec) -> Result<()> {
    let suites = run_all(args.instances, args.seed, exec)?;
    for s in &suites {
        eprintln!(
            "{:<10} {} instances={} components={} max_rel_err={:.3e}",
            s.name,
            if s.passed { "ok  " } else { "FAIL" },
            s.instances,
            s.components,
            s.max_rel_err
        );
    }
    let passed = suites.iter().all(|s| s.passed);
    let report = GradcheckReport {
        fd_step: FD_STEP,
        tolerance: GRADCHECK_TOLERANCE,
        abs_floor: ABS_FLOOR,
        suites,
        passed,
        provenance: provenance("gradcheck", None, args)?.with_seed("instances", args.seed),
    };
    emit(&report, args.output.as_deref())?;
    if !passed {
        return Err(Error::Internal(
            "analytic gradients disagree with finite differences".into(),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct ProbeOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    hard: Option<ProbeReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    soft: Option<ProbeReport>,
    provenance: Provenance,
}

pub fn probe(args: &ProbeArgs) -> Result<()> {
    let mut cfg = resolve_config(&args.config)?;
    let cloud = load_source(&args.source, &mut cfg, (SynthKind::Sphere, 128))?;
    let prov = provenance("probe", Some(&cfg), args)?;
    let run = |kind: ProjectionKind| -> Result<ProbeReport> {
        let mut r = grad_flow_probe(&cloud, &cfg.camera, &cfg.splat, kind, cfg.seeds.probe)?;
        r.provenance = prov.clone();
        Ok(r)
    };
    let hard = matches!(args.mode, ProbeMode::Hard | ProbeMode::Both)
        .then(|| run(ProjectionKind::Hard))
        .transpose()?;
    let soft = matches!(args.mode, ProbeMode::Soft | ProbeMode::Both)
        .then(|| run(ProjectionKind::Soft))
        .transpose()?;
    let mismatch = soft.as_ref().is_some_and(|s| s.analytic_matches_fd == Some(false));
    emit(
        &ProbeOutput {
            hard,
            soft,
            provenance: prov,
        },
        args.output.as_deref(),
    )?;
    if mismatch {
        return Err(Error::Internal(
            "soft analytic gradient disagrees with finite differences".into(),
        ));
    }
    Ok(())
}

pub fn ablate(args: &AblateArgs) -> Result<()> {
    let mut cfg = resolve_config(&args.config)?;
    let cloud = load_source(&args.source, &mut cfg, (SynthKind::Sphere, 256))?;
    let mut params = AblationParams::init(args.channels, args.key_width, args.k, cfg.seeds.params);
    if args.zero_value_projection {
        params.attention.w_v.fill(0.0);
    }
    let mut report: AblationReport = counterfactual_ablate(&cloud, &cfg.camera, &cfg.splat, &params)?;
    report.provenance = provenance("ablate", Some(&cfg), args)?;
    emit(&report, args.output.as_deref())?;
    if !report.value_path_only {
        return Err(Error::Internal(
            "zeroed visual tokens changed the fused features".into(),
        ));
    }
    if args.zero_value_projection && report.sensitivity != 0.0 {
        return Err(Error::Internal(
            "output depends on the image despite a zero value projection".into(),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct LossReport {
    metric: Metric,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gradient_capped: Option<bool>,
    provenance: Provenance,
}

pub fn loss(args: &LossArgs, exec: Exec) -> Result<()> {
    let read = |p: &PathBuf| load_cloud(p, CloudFormat::from_path(p));
    let x = read(&args.x)?;
    let ys = args.y.iter().map(read).collect::<Result<Vec<_>>>()?;
    if args.metric != Metric::Mmd && ys.len() != 1 {
        return Err(Error::InvalidInput(format!(
            "{:?} compares exactly two clouds",
            args.metric
        )));
    }
    let y = &ys[0];
    let (mut reference_index, mut gradient_capped) = (None, None);
    let value = match args.metric {
        Metric::Chamfer => chamfer_with(&x, y, false, exec).value,
        Metric::ChamferL1 => chamfer_l1(&x, y).value,
        Metric::Arc => {
            let v = arc_cd(&x, y, args.lambda)?;
            gradient_capped = Some(v.grad_capped);
            v.value
        }
        Metric::Fscore => fscore(&x, y, args.threshold)?,
        Metric::Fidelity => fidelity_with(&x, y, exec),
        Metric::Mmd => {
            let (v, i) = mmd(&x, &ys)?;
            reference_index = Some(i);
            v
        }
    };
    let report = LossReport {
        metric: args.metric,
        value,
        reference_index,
        gradient_capped,
        provenance: provenance("loss", None, args)?,
    };
    emit(&report, args.output.as_deref())
}

pub fn normalize_kitti_cmd(args: &NormalizeKittiArgs) -> Result<()> {
    let cloud = load_cloud(&args.input, CloudFormat::from_path(&args.input))?;
    let bbox = BBox3D {
        center: [args.center[0], args.center[1], args.center[2]],
        dims: [args.dims[0], args.dims[1], args.dims[2]],
        yaw: args.yaw,
    };
    let out = normalize_kitti(&cloud, &bbox)?;
    save_cloud(&out, &args.output, CloudFormat::from_path(&args.output))
}
