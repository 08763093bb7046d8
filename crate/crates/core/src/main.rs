//! Command-line entry point: dataset generation, training, single
//! predictions, case evaluation, cost-map rendering, and bundled-scenario
//! export. Every command is deterministic given its flags and seed; all
//! file outputs begin with a `# trajpred v… params=…` header line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use trajpred::cost::{render_cost_map, ContextSnapshot, CostParams};
use trajpred::eval::{run_case, Method};
use trajpred::fixtures;
use trajpred::geometry::{Rect, Vec2};
use trajpred::lanes::{extract_reference_line, ReferenceLine};
use trajpred::policy::{
    dataset_to_json, label_window, load_dataset, train, ObservationWindow, PolicyLabel,
    RecurrentClassifier, TrainConfig, TrainingExample,
};
use trajpred::predictor::{
    predict, PredictionState, PredictorConfig, DEFAULT_OBSERVATION_FRAMES,
    DEFAULT_PREDICTION_POINTS,
};
use trajpred::scenario::{load_scenario, serialize_scenario, AgentKind, PoseSample, Scenario};
use trajpred::simulator::maneuver_pack;

#[derive(Parser)]
#[command(name = "trajpred", version, about = "Two-level vehicle trajectory prediction")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a labeled observation-window dataset from bundled maneuver
    /// rollouts and/or scenario files.
    GenData {
        /// Directory of scenario JSON files to slide windows over.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_OBSERVATION_FRAMES)]
        t_obs: usize,
        #[arg(long, default_value_t = DEFAULT_PREDICTION_POINTS)]
        t_pred: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Maneuver-pack tracks per label (0 disables the pack).
        #[arg(long, default_value_t = 160)]
        pack_per_label: usize,
    },
    /// Train the maneuver classifier on a generated dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run one prediction round for one agent and write the trajectory.
    Predict {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Prediction epoch, seconds.
        #[arg(long)]
        t: f64,
        /// Target agent id (defaults to the scenario's player).
        #[arg(long)]
        target: Option<i64>,
        /// Cost-parameter JSON file (defaults to built-in values).
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a bundled case and score all methods frame by frame.
    Eval {
        /// Case name: straight_lane, curved_road, intersection_construction,
        /// red_light_construction, pedestrian_braking, red_light_offence.
        #[arg(long)]
        case: String,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        /// Output directory for the CSVs and event log.
        #[arg(long)]
        out: PathBuf,
        /// Evaluate every k-th candidate frame.
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// Render the cost-map layers of a scenario at one instant.
    Render {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        t: f64,
        /// Region "x0,y0,x1,y1" (defaults to a square ahead of the player).
        #[arg(long)]
        region: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        cell_size: f64,
        /// Desired speed for the speed-deviation layer (defaults to the
        /// local limit, which zeroes that layer).
        #[arg(long)]
        desired_speed: Option<f64>,
        #[arg(long)]
        params: Option<PathBuf>,
        /// Output directory, one CSV per layer.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the bundled scenario fixtures as JSON files.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
    },
}

fn info(msg: &str) {
    if std::env::var("TRAJPRED_LOG").map(|v| v == "quiet").unwrap_or(false) {
        return;
    }
    println!("{msg}");
}

/// First 16 hex chars of the SHA-256 of a canonical parameter string.
fn params_hash(canonical: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let digest = hasher.finalize();
    let mut out = String::new();
    for b in &digest[..8] {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn header(canonical_params: &str) -> String {
    format!("# trajpred v{} params={}\n", env!("CARGO_PKG_VERSION"), params_hash(canonical_params))
}

fn write_file(path: &Path, header_line: &str, body: &str) -> Result<(), String> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| format!("create {}: {e}", dir.display()))?;
    }
    fs::write(path, format!("{header_line}{body}"))
        .map_err(|e| format!("write {}: {e}", path.display()))
}

fn load_params(path: Option<&Path>) -> Result<CostParams, String> {
    let params = match path {
        None => CostParams::default(),
        Some(p) => {
            let text =
                fs::read_to_string(p).map_err(|e| format!("read {}: {e}", p.display()))?;
            let body = trajpred::scenario::strip_header_lines(&text);
            serde_json::from_str(body).map_err(|e| format!("parse {}: {e}", p.display()))?
        }
    };
    params.validate().map_err(|e| format!("invalid parameters: {e}"))?;
    Ok(params)
}

fn canonical_params(params: &CostParams) -> String {
    serde_json::to_string(params).expect("params serialize")
}

/// Resample an agent track onto the frame grid so windows can slide over
/// arbitrarily stored scripts.
fn resample_track(scenario: &Scenario, id: i64) -> Vec<PoseSample> {
    let agent = scenario.agent(id).expect("listed agent exists");
    let (t0, t1) = agent.time_span();
    let h = scenario.frame_period;
    let frames = ((t1 - t0) / h + 1e-9).floor() as usize + 1;
    (0..frames)
        .map(|k| scenario.agent_pose_at(id, t0 + k as f64 * h).expect("inside span"))
        .collect()
}

/// Labeled windows slid over every vehicle track of every scenario file.
fn windows_from_scenarios(
    dir: &Path,
    t_obs: usize,
    t_pred: usize,
    group_base: u64,
) -> Result<Vec<TrainingExample>, String> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| format!("read dir {}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map_or(false, |x| x == "json"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    let mut group = group_base;
    for file in files {
        let scenario =
            load_scenario(&file).map_err(|e| format!("load {}: {e}", file.display()))?;
        for agent in &scenario.agents {
            if agent.kind != AgentKind::Vehicle {
                continue;
            }
            let track = resample_track(&scenario, agent.id);
            if track.len() < t_obs + t_pred {
                group += 1;
                continue;
            }
            for i in (t_obs - 1..track.len() - t_pred).step_by(2) {
                if let Ok(label) = label_window(&track, i, t_obs, t_pred) {
                    out.push(TrainingExample {
                        window: ObservationWindow::from_track(&track[i + 1 - t_obs..=i]),
                        label,
                        group,
                    });
                }
            }
            group += 1;
        }
    }
    Ok(out)
}

fn label_histogram(examples: &[TrainingExample]) -> BTreeMap<&'static str, usize> {
    let mut hist = BTreeMap::new();
    for label in PolicyLabel::ALL {
        hist.insert(label.name(), 0);
    }
    for ex in examples {
        *hist.get_mut(ex.label.name()).unwrap() += 1;
    }
    hist
}

fn cmd_gen_data(
    scenarios: Option<PathBuf>,
    out: PathBuf,
    t_obs: usize,
    t_pred: usize,
    seed: u64,
    pack_per_label: usize,
) -> Result<(), String> {
    if scenarios.is_none() && pack_per_label == 0 {
        return Err("nothing to generate: pass --scenarios and/or --pack-per-label > 0".into());
    }
    let mut examples = Vec::new();
    if pack_per_label > 0 {
        examples.extend(
            maneuver_pack(t_obs, t_pred, pack_per_label, seed, 0).map_err(|e| e.to_string())?,
        );
    }
    if let Some(dir) = &scenarios {
        let base = 1_000_000; // keep scenario groups disjoint from pack groups
        examples.extend(windows_from_scenarios(dir, t_obs, t_pred, base)?);
    }
    let canonical = format!(
        "{{\"t_obs\":{t_obs},\"t_pred\":{t_pred},\"seed\":{seed},\"pack_per_label\":{pack_per_label}}}"
    );
    write_file(&out, &header(&canonical), &dataset_to_json(&examples, t_obs, t_pred))?;

    info(&format!("wrote {} windows to {}", examples.len(), out.display()));
    info("label histogram:");
    for (name, count) in label_histogram(&examples) {
        info(&format!("  {name:<18} {count}"));
    }
    Ok(())
}

fn cmd_train(
    data: PathBuf,
    out: PathBuf,
    epochs: usize,
    hidden: usize,
    seed: u64,
) -> Result<(), String> {
    let (examples, t_obs, _) = load_dataset(&data).map_err(|e| e.to_string())?;
    info(&format!("loaded {} windows (t_obs={t_obs}) from {}", examples.len(), data.display()));
    let config = TrainConfig { epochs, hidden, ..TrainConfig::default() };
    let (model, metrics) = train(&examples, &config, seed).map_err(|e| e.to_string())?;
    for m in &metrics {
        info(&format!(
            "epoch {:>3}  train_loss {:.4}  train_acc {:.3}  val_loss {:.4}  val_acc {:.3}",
            m.epoch, m.train_loss, m.train_accuracy, m.val_loss, m.val_accuracy
        ));
    }
    let canonical = format!(
        "{{\"epochs\":{epochs},\"hidden\":{hidden},\"seed\":{seed},\"windows\":{}}}",
        examples.len()
    );
    write_file(&out, &header(&canonical), &model.to_json())?;
    if let Some(last) = metrics.last() {
        info(&format!(
            "model written to {} (held-out accuracy {:.3})",
            out.display(),
            last.val_accuracy
        ));
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<RecurrentClassifier, String> {
    RecurrentClassifier::load(path).map_err(|e| format!("load model {}: {e}", path.display()))
}

fn cmd_predict(
    scenario_path: PathBuf,
    model_path: PathBuf,
    t: f64,
    target: Option<i64>,
    params_path: Option<PathBuf>,
    out: PathBuf,
) -> Result<(), String> {
    let scenario = load_scenario(&scenario_path)
        .map_err(|e| format!("load {}: {e}", scenario_path.display()))?;
    let model = load_model(&model_path)?;
    let params = load_params(params_path.as_deref())?;
    let target = target.unwrap_or(scenario.player_id);
    let cfg = PredictorConfig {
        observation_frames: model.t_obs(),
        params: params.clone(),
        ..PredictorConfig::default()
    };
    let state = PredictionState::new();
    let result = predict(&scenario, &model, target, t, &state, &cfg)
        .map_err(|e| format!("predict: {e}"))?;

    let mut body = String::new();
    let warnings: Vec<&str> = result.warnings.iter().map(|w| w.as_str()).collect();
    let _ = writeln!(
        body,
        "# target={} t={:.3} policy={} converged={} iterations={} initial_cost={:.6} final_cost={:.6} warnings={}",
        result.target_id,
        t,
        result.policy.map(|p| p.name()).unwrap_or("none"),
        result.converged,
        result.iterations,
        result.initial_cost,
        result.final_cost,
        if warnings.is_empty() { "none".to_string() } else { warnings.join("+") },
    );
    let _ = writeln!(body, "index,t,x,y");
    for i in 0..result.trajectory.len() {
        let p = result.trajectory.point(i);
        let _ = writeln!(body, "{},{:.3},{:.6},{:.6}", i, result.trajectory.time(i), p.x, p.y);
    }
    write_file(&out, &header(&canonical_params(&params)), &body)?;

    info(&format!(
        "prediction written to {} (policy {}, {} iterations, converged {})",
        out.display(),
        result.policy.map(|p| p.name()).unwrap_or("none"),
        result.iterations,
        result.converged
    ));
    info(&format!(
        "stage timings: inference {:.1} ms, rendering {:.1} ms, optimization {:.1} ms",
        result.timings.inference_s * 1e3,
        result.timings.rendering_s * 1e3,
        result.timings.optimization_s * 1e3
    ));
    for w in &warnings {
        info(&format!("warning: {w}"));
    }
    Ok(())
}

fn cmd_eval(
    case: String,
    model_path: PathBuf,
    params_path: Option<PathBuf>,
    out: PathBuf,
    stride: usize,
) -> Result<(), String> {
    let scenario = fixtures::case(&case).ok_or(format!(
        "unknown case {case:?}; bundled cases: straight_lane, {}",
        fixtures::CASE_NAMES.join(", ")
    ))?;
    let model = load_model(&model_path)?;
    let params = load_params(params_path.as_deref())?;
    let cfg = PredictorConfig {
        observation_frames: model.t_obs(),
        params: params.clone(),
        ..PredictorConfig::default()
    };
    let report =
        run_case(&case, &scenario, &model, &cfg, stride).map_err(|e| format!("eval: {e}"))?;

    fs::create_dir_all(&out).map_err(|e| format!("create {}: {e}", out.display()))?;
    let head = header(&canonical_params(&params));
    for method in Method::ALL {
        write_file(
            &out.join(format!("curve_{}.csv", method.name())),
            &head,
            &report.curve_csv(method),
        )?;
    }
    write_file(&out.join("summary.csv"), &head, &report.summary_csv())?;
    write_file(&out.join("frames.csv"), &head, &report.frames_csv())?;
    write_file(&out.join("events.log"), &head, &report.event_log())?;

    info(&format!(
        "evaluated {} frames of {case}; outputs in {}",
        report.frames.len(),
        out.display()
    ));
    for event in &report.events {
        info(&format!("event: {event}"));
    }
    Ok(())
}

fn parse_region(text: &str) -> Result<Rect, String> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("region part {s:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if parts.len() != 4 {
        return Err("region must be x0,y0,x1,y1".into());
    }
    let min = Vec2::new(parts[0].min(parts[2]), parts[1].min(parts[3]));
    let max = Vec2::new(parts[0].max(parts[2]), parts[1].max(parts[3]));
    if min.x == max.x || min.y == max.y {
        return Err("region has zero area".into());
    }
    Ok(Rect::new(min, max))
}

fn cmd_render(
    scenario_path: PathBuf,
    t: f64,
    region: Option<String>,
    cell_size: f64,
    desired_speed: Option<f64>,
    params_path: Option<PathBuf>,
    out: PathBuf,
) -> Result<(), String> {
    let scenario = load_scenario(&scenario_path)
        .map_err(|e| format!("load {}: {e}", scenario_path.display()))?;
    let params = load_params(params_path.as_deref())?;
    let pose = scenario
        .agent_pose_at(scenario.player_id, t)
        .map_err(|e| format!("player pose at t={t}: {e}"))?;

    let region = match region {
        Some(text) => parse_region(&text)?,
        None => {
            let ahead = Vec2::new(pose.theta.cos(), pose.theta.sin());
            let center = pose.position() + ahead * 15.0;
            Rect::new(center - Vec2::new(20.0, 20.0), center + Vec2::new(20.0, 20.0))
        }
    };

    // A reference line is required by the context builder but only its
    // direction field matters for rendering; fall back to a straight ray
    // when the pose matches no lane.
    let diag = (region.max - region.min).norm();
    let reference = extract_reference_line(&scenario, &pose, PolicyLabel::Forward, diag)
        .unwrap_or_else(|_| {
            let dir = Vec2::new(pose.theta.cos(), pose.theta.sin());
            ReferenceLine {
                points: vec![pose.position(), pose.position() + dir * diag.max(1.0)],
                policy: PolicyLabel::Forward,
                speed_limit: f64::INFINITY,
            }
        });

    // Index-0 positions are all the moving layer reads; constant points
    // suffice for rendering.
    let mo: Vec<_> = scenario
        .agents
        .iter()
        .filter(|a| a.id != scenario.player_id)
        .filter_map(|a| scenario.agent_pose_at(a.id, t).ok().map(|p| (a.id, p)))
        .map(|(id, p)| {
            let points = vec![p.position(); 4];
            (id, trajpred::trajectory::DiscreteTrajectory::new(points, t, scenario.frame_period))
        })
        .collect();

    // With no override the desired speed equals the local limit, which
    // zeroes the speed-deviation part of the context layer.
    let desired = desired_speed.unwrap_or(f64::INFINITY);
    let ctx = ContextSnapshot::build(&scenario, region, cell_size, t, reference, desired, mo)
        .map_err(|e| format!("context: {e}"))?;
    let grid =
        render_cost_map(&ctx, &params, region, cell_size).map_err(|e| format!("render: {e}"))?;

    fs::create_dir_all(&out).map_err(|e| format!("create {}: {e}", out.display()))?;
    let head = header(&canonical_params(&params));
    for (name, field) in grid.layers() {
        write_file(&out.join(format!("{name}.csv")), &head, &field.to_csv())?;
    }
    info(&format!("cost-map layers written to {}", out.display()));
    Ok(())
}

fn cmd_fixtures(out: PathBuf) -> Result<(), String> {
    fs::create_dir_all(&out).map_err(|e| format!("create {}: {e}", out.display()))?;
    let mut names = vec!["straight_lane"];
    names.extend(fixtures::CASE_NAMES);
    for name in names {
        let scenario = fixtures::case(name).expect("bundled case");
        let path = out.join(format!("{name}.json"));
        let canonical = format!("{{\"fixture\":\"{name}\"}}");
        let mut body = serialize_scenario(&scenario);
        body.push('\n');
        write_file(&path, &header(&canonical), &body)?;
        info(&format!("wrote {}", path.display()));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.cmd {
        Cmd::GenData { scenarios, out, t_obs, t_pred, seed, pack_per_label } => {
            cmd_gen_data(scenarios, out, t_obs, t_pred, seed, pack_per_label)
        }
        Cmd::Train { data, out, epochs, hidden, seed } => {
            cmd_train(data, out, epochs, hidden, seed)
        }
        Cmd::Predict { scenario, model, t, target, params, out } => {
            cmd_predict(scenario, model, t, target, params, out)
        }
        Cmd::Eval { case, model, params, out, stride } => {
            cmd_eval(case, model, params, out, stride)
        }
        Cmd::Render { scenario, t, region, cell_size, desired_speed, params, out } => {
            cmd_render(scenario, t, region, cell_size, desired_speed, params, out)
        }
        Cmd::Fixtures { out } => cmd_fixtures(out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
