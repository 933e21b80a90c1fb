use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use mixgrasp::detect::{decode_grid, nms_ariou, Detection};
use mixgrasp::io::{self, GripperConfig, PlanFile, SceneData};
use mixgrasp::planner::{finger_volumes, plan_scene, Outcome, PlanResult};
use mixgrasp::rotgeom::{ariou, RotatedBox2D};
use mixgrasp::scenegen::{self, generate};
use mixgrasp::{cloud, Error, Result};

#[derive(Parser)]
#[command(
    name = "mixgrasp",
    version,
    about = "Grasp planning for scenes mixing rigid objects and towels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a grasp or push for one scene file.
    Plan {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        gripper: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Score threshold when decoding a raw grid.
        #[arg(long, default_value_t = 0.5)]
        conf: f64,
        /// ArIoU suppression threshold when decoding a raw grid.
        #[arg(long, default_value_t = 0.45)]
        nms: f64,
        /// Use the raw grid even when the file also lists detections.
        #[arg(long)]
        use_grid: bool,
    },
    /// Generate a synthetic scene file from a scene spec.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the ArIoU of two boxes given as "cx,cy,w,h,theta_deg".
    Ariou {
        #[arg(allow_hyphen_values = true)]
        a: String,
        #[arg(allow_hyphen_values = true)]
        b: String,
    },
    /// Plan every scene in a directory and write a summary report.
    Eval {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        gripper: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        conf: f64,
        #[arg(long, default_value_t = 0.45)]
        nms: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan {
            scene,
            gripper,
            out,
            conf,
            nms,
            use_grid,
        } => run_plan(&scene, &gripper, &out, conf, nms, use_grid),
        Command::Gen { spec, out } => run_gen(&spec, &out),
        Command::Ariou { a, b } => run_ariou(&a, &b),
        Command::Eval {
            scenes,
            gripper,
            report,
            conf,
            nms,
        } => run_eval(&scenes, &gripper, &report, conf, nms),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(1)
        }
    }
}

fn detections_for(
    scene: &SceneData,
    conf: f64,
    nms: f64,
    use_grid: bool,
) -> Result<Vec<Detection>> {
    match &scene.raw_grid {
        Some((grid, anchors)) if use_grid || scene.detections.is_empty() => {
            nms_ariou(&decode_grid(grid, anchors, conf)?, nms)
        }
        _ => Ok(scene.detections.clone()),
    }
}

fn plan_file(
    path: &Path,
    cfg: &GripperConfig,
    conf: f64,
    nms: f64,
    use_grid: bool,
) -> Result<(SceneData, PlanResult)> {
    let loaded = io::load_scene(path)?;
    for w in &loaded.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    let scene = loaded.value;
    let dets = detections_for(&scene, conf, nms, use_grid)?;
    let result = plan_scene(&scene.cloud, &dets, &cfg.gripper, &cfg.classes)?;
    Ok((scene, result))
}

fn run_plan(
    scene: &Path,
    gripper: &Path,
    out: &Path,
    conf: f64,
    nms: f64,
    use_grid: bool,
) -> Result<ExitCode> {
    let cfg = io::load_gripper(gripper)?;
    let (_, result) = plan_file(scene, &cfg, conf, nms, use_grid)?;
    std::fs::write(out, io::plan_to_string(&PlanFile::from(&result))?)?;
    Ok(match result.outcome {
        Outcome::NoAction(reason) => {
            eprintln!("no action: {reason}");
            ExitCode::from(2)
        }
        _ => ExitCode::SUCCESS,
    })
}

fn run_gen(spec: &Path, out: &Path) -> Result<ExitCode> {
    let spec: scenegen::SceneSpec =
        serde_json::from_str(&std::fs::read_to_string(spec)?).map_err(|e| {
            Error::InvalidSpec(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
    let scene = generate(&spec)?;
    io::save_scene(out, &SceneData::from_scene(&scene, spec.seed))?;
    Ok(ExitCode::SUCCESS)
}

fn parse_box(s: &str) -> Result<RotatedBox2D> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidArgument(format!("box {s:?}: {e}")))?;
    match v[..] {
        [cx, cy, w, h, theta] if v.iter().all(|x| x.is_finite()) => {
            Ok(RotatedBox2D::new(cx, cy, w, h, theta))
        }
        _ => Err(Error::InvalidArgument(format!(
            "box {s:?}: expected five finite numbers cx,cy,w,h,theta_deg"
        ))),
    }
}

fn run_ariou(a: &str, b: &str) -> Result<ExitCode> {
    println!("{:.6}", ariou(&parse_box(a)?, &parse_box(b)?));
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct EvalEntry {
    file: String,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    outcome: Option<&'static str>,
    /// Fast finger counts equal the brute-force oracle's for the final grasp.
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_agrees: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct EvalReport {
    scenes: usize,
    planned: usize,
    errors: usize,
    modes: std::collections::BTreeMap<String, usize>,
    outcomes: std::collections::BTreeMap<&'static str, usize>,
    oracle_checks: usize,
    oracle_agreement_rate: Option<f64>,
    entries: Vec<EvalEntry>,
}

fn eval_one(path: &Path, cfg: &GripperConfig, conf: f64, nms: f64) -> EvalEntry {
    let file = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    let run = || -> Result<EvalEntry> {
        let (scene, result) = plan_file(path, cfg, conf, nms, false)?;
        let plan = PlanFile::from(&result);
        let (outcome, oracle_agrees) = match &result.outcome {
            Outcome::Grasp(g) => {
                let (l, r) = finger_volumes(g, &cfg.gripper)?;
                let fast = [
                    cloud::count_in(&scene.cloud, &l),
                    cloud::count_in(&scene.cloud, &r),
                ];
                let slow = scenegen::oracle_collision(&scene.cloud, &[l, r]);
                ("grasp", Some(fast[..] == slow[..]))
            }
            Outcome::Push(_) => ("push", None),
            Outcome::NoAction(_) => ("none", None),
        };
        Ok(EvalEntry {
            file: file.clone(),
            status: "ok",
            mode: Some(plan.mode),
            outcome: Some(outcome),
            oracle_agrees,
            error: None,
        })
    };
    run().unwrap_or_else(|e| EvalEntry {
        file: file.clone(),
        status: "error",
        mode: None,
        outcome: None,
        oracle_agrees: None,
        error: Some(format!("error[{}]: {e}", e.code())),
    })
}

fn run_eval(dir: &Path, gripper: &Path, report: &Path, conf: f64, nms: f64) -> Result<ExitCode> {
    let cfg = io::load_gripper(gripper)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|x| x == "json"));
    files.sort();

    let entries: Vec<EvalEntry> = files
        .par_iter()
        .map(|p| eval_one(p, &cfg, conf, nms))
        .collect();
    let mut modes = std::collections::BTreeMap::new();
    let mut outcomes = std::collections::BTreeMap::new();
    for e in &entries {
        if let Some(m) = &e.mode {
            *modes.entry(m.clone()).or_insert(0) += 1;
        }
        if let Some(o) = e.outcome {
            *outcomes.entry(o).or_insert(0) += 1;
        }
    }
    let checks: Vec<bool> = entries.iter().filter_map(|e| e.oracle_agrees).collect();
    let errors = entries.iter().filter(|e| e.status == "error").count();
    let summary = EvalReport {
        scenes: entries.len(),
        planned: entries.len() - errors,
        errors,
        modes,
        outcomes,
        oracle_checks: checks.len(),
        oracle_agreement_rate: (!checks.is_empty())
            .then(|| checks.iter().filter(|&&a| a).count() as f64 / checks.len() as f64),
        entries,
    };
    std::fs::write(report, io::to_json_pretty(&summary)?)?;
    Ok(if errors == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
