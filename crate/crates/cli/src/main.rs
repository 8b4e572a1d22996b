//! Command-line front end: model checking, updates, reduction, satisfiability,
//! the soundness suite, scenarios and generators.
//!
//! Exit status: 0 for success, true or SAT; 1 for false, UNSAT or a failed
//! suite; 2 for usage and data errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use audel::frames::{load_frame_file, FrameLibrary};
use audel::model::KripkeModel;
use audel::proofkit::soundness_suite;
use audel::reduction::{reduce_with_budget, DEFAULT_STEP_BUDGET};
use audel::satsolver::{brute_force_sat, sat_del, Verdict};
use audel::semantics::{model_check, EvalContext};
use audel::syntax::{parse_formula, Formula, Language, Signature};
use audel::testkit::{bundled_dir, bundled_scenario, run_scenario, GenConfig, Generator};
use audel::update::{iterate_updates, product_update};

#[derive(Parser)]
#[command(name = "audel", version, about = "Epistemic models with agents that come and go")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a formula at a world of a model.
    Check {
        #[arg(short, long)]
        model: PathBuf,
        #[arg(short, long)]
        formula: String,
        /// Directory holding `<name>.json` for every frame the formula names.
        #[arg(long, default_value = ".")]
        frames: PathBuf,
        /// World label; defaults to the designated world.
        #[arg(short, long)]
        world: Option<String>,
    },
    /// Apply one or more updates to a pointed model.
    Update {
        #[arg(short, long)]
        model: PathBuf,
        /// `frame.json@event`, applied left to right.
        #[arg(short = 'u', long = "update", required = true)]
        updates: Vec<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Plain product update (no closure; rejects add and del arrows).
        #[arg(long)]
        product: bool,
    },
    /// Rewrite a formula into an equivalent update-free one.
    Reduce {
        #[arg(short, long)]
        formula: String,
        #[arg(long, default_value = ".")]
        frames: PathBuf,
        /// Emit the rewrite trace as JSON.
        #[arg(long)]
        trace: bool,
        #[arg(long, default_value_t = DEFAULT_STEP_BUDGET)]
        budget: usize,
    },
    /// Decide satisfiability over transitive models.
    Sat {
        #[arg(short, long)]
        formula: String,
        #[arg(long, default_value = ".")]
        frames: PathBuf,
        /// Write the verified witness model here when satisfiable.
        #[arg(long)]
        witness: Option<PathBuf>,
        /// Cross-check against exhaustive search over models of at most this many worlds.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        oracle: Option<u8>,
    },
    /// Test random axiom instances on random models.
    Soundness {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, env = "AUDEL_SEED", default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        bounds: Bounds,
    },
    /// Bundled and custom scenarios.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
    /// Render a model as Graphviz DOT.
    Dot {
        #[arg(short, long)]
        model: PathBuf,
    },
    /// Generate a random model, frame or formula.
    Gen {
        kind: GenKind,
        #[arg(long, env = "AUDEL_SEED", default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        bounds: Bounds,
        /// Formula language.
        #[arg(long, value_enum, default_value_t = Lang::El)]
        lang: Lang,
        #[arg(long, default_value_t = 3)]
        depth: usize,
    },
}

#[derive(Subcommand)]
enum ScenarioAction {
    /// Run a scenario file, or a bundled scenario by name.
    Run { scenario: String },
    /// List the bundled scenarios.
    List,
}

#[derive(Args)]
struct Bounds {
    #[arg(long, default_value_t = 5)]
    max_worlds: usize,
    #[arg(long, default_value_t = 3)]
    max_agents: usize,
    #[arg(long, default_value_t = 3)]
    max_events: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Model,
    Frame,
    Formula,
}

#[derive(Clone, Copy, ValueEnum)]
enum Lang {
    El,
    #[value(name = "del-")]
    DelMinus,
    Del,
}

/// A failure reported on stderr with exit status 2.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Check { model, formula, frames, world } => check(&model, &formula, &frames, world.as_deref()),
        Command::Update { model, updates, output, product } => update(&model, &updates, output.as_deref(), product),
        Command::Reduce { formula, frames, trace, budget } => reduce(&formula, &frames, trace, budget),
        Command::Sat { formula, frames, witness, oracle } => sat(&formula, &frames, witness.as_deref(), oracle),
        Command::Soundness { trials, seed, bounds } => {
            let report = soundness_suite(trials, &config(seed, &bounds)?);
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(report.is_sound())
        }
        Command::Scenario { action: ScenarioAction::Run { scenario } } => {
            let path = PathBuf::from(&scenario);
            let path = if path.exists() { path } else { bundled_scenario(&scenario) };
            let report = run_scenario(&path)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(report.passed)
        }
        Command::Scenario { action: ScenarioAction::List } => {
            let mut names: Vec<String> = std::fs::read_dir(bundled_dir())?
                .filter_map(|e| {
                    let path = e.ok()?.path();
                    let is_json = path.is_file() && path.extension()? == "json";
                    is_json.then(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))?
                })
                .collect();
            names.sort();
            for n in names {
                println!("{n}");
            }
            Ok(true)
        }
        Command::Dot { model } => {
            print!("{}", load_model(&model)?.to_dot());
            Ok(true)
        }
        Command::Gen { kind, seed, bounds, lang, depth } => {
            let mut g = Generator::new(config(seed, &bounds)?);
            match kind {
                GenKind::Model => println!("{}", g.gen_model().to_json()),
                GenKind::Frame => println!("{}", g.gen_frame().to_json()),
                GenKind::Formula => {
                    let lang = match lang {
                        Lang::El => Language::El,
                        Lang::DelMinus => Language::DelMinus,
                        Lang::Del => Language::Del,
                    };
                    let (_, list) = if lang == Language::El { (FrameLibrary::new(), Vec::new()) } else { g.gen_library(2) };
                    println!("{}", g.gen_formula_in(lang, depth, &list));
                }
            }
            Ok(true)
        }
    }
}

fn config(seed: u64, b: &Bounds) -> Result<GenConfig, Failure> {
    let cfg = GenConfig { max_worlds: b.max_worlds, max_agents: b.max_agents, max_events: b.max_events, seed, ..GenConfig::default() };
    cfg.check().map_err(Failure)?;
    Ok(cfg)
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure(format!("cannot read {}: {e}", path.display())))
}

/// Loads a model and insists on transitive relations.
fn load_model(path: &Path) -> Result<KripkeModel, Failure> {
    let m = KripkeModel::from_json(&read(path)?).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    let violations = m.validate();
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Failure(format!("{}: {}", path.display(), text.join("; "))));
    }
    Ok(m)
}

/// Parses a formula and loads the frames it names from `dir`.
fn formula_and_frames(text: &str, dir: &Path, signature: &mut Signature) -> Result<(Formula, FrameLibrary), Failure> {
    let phi = parse_formula(text, signature)?;
    signature.declare_all(&phi.fluents())?;
    let mut frames = FrameLibrary::new();
    frames.load_referenced(dir, &phi, signature)?;
    Ok((phi, frames))
}

fn check(model: &Path, formula: &str, dir: &Path, world: Option<&str>) -> Outcome {
    let m = load_model(model)?;
    let mut signature = Signature::new();
    signature.declare_all(m.fluents())?;
    let (phi, frames) = formula_and_frames(formula, dir, &mut signature)?;
    let s = match world {
        Some(label) => m.resolve_world(label)?,
        None => m.designated().ok_or_else(|| Failure("model has no designated world; pass --world".into()))?,
    };
    let holds = model_check(&Arc::new(m), s, &phi, &EvalContext::new(frames))?;
    println!("{holds}");
    Ok(holds)
}

fn update(model: &Path, targets: &[String], output: Option<&Path>, product: bool) -> Outcome {
    let m = load_model(model)?;
    let start = m.designated().ok_or_else(|| Failure("model has no designated world".into()))?;
    let mut signature = Signature::new();
    signature.declare_all(m.fluents())?;
    let mut steps = Vec::new();
    for target in targets {
        let (file, event) = target.rsplit_once('@').ok_or_else(|| Failure(format!("`{target}`: expected frame.json@event")))?;
        let frame = load_frame_file(Path::new(file), &signature)?;
        let e = frame.resolve_event(event)?;
        steps.push((Arc::new(frame), e));
    }
    let (result, world) = if product {
        let mut current = m;
        let mut world = start;
        for (k, (frame, e)) in steps.iter().enumerate() {
            let r = product_update(&current, frame)?;
            world = r.world(world, *e).ok_or_else(|| Failure(format!("step {}: precondition of `{}` fails", k + 1, frame.event_label(*e))))?;
            current = (*r.model).clone();
        }
        (current, world)
    } else {
        let r = iterate_updates(Arc::new(m), start, &steps)?;
        ((*r.model).clone(), r.world)
    };
    let mut result = result;
    result.set_designated(Some(world));
    let json = result.to_json();
    match output {
        Some(path) => std::fs::write(path, json + "\n").map_err(|e| Failure(format!("cannot write {}: {e}", path.display())))?,
        None => println!("{json}"),
    }
    Ok(true)
}

fn reduce(formula: &str, dir: &Path, trace: bool, budget: usize) -> Outcome {
    let (phi, frames) = formula_and_frames(formula, dir, &mut Signature::new())?;
    let red = reduce_with_budget(&phi, &frames, budget)?;
    if trace {
        let out = serde_json::json!({
            "input": phi.to_string(),
            "output": red.formula.to_string(),
            "steps": red.steps,
            "trace": red.trace,
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        println!("{}", red.formula);
    }
    Ok(true)
}

fn sat(formula: &str, dir: &Path, witness: Option<&Path>, oracle: Option<u8>) -> Outcome {
    let (phi, frames) = formula_and_frames(formula, dir, &mut Signature::new())?;
    let outcome = sat_del(&phi, &EvalContext::new(frames.clone()))?;
    if let Some(n) = oracle {
        let el = if phi.is_el() { phi.clone() } else { reduce_with_budget(&phi, &frames, DEFAULT_STEP_BUDGET)?.formula };
        let found = brute_force_sat(&el, n.into())?;
        match (&found, outcome.verdict) {
            (Some(m), Verdict::Unsat) => {
                return Err(Failure(format!("oracle found a {}-world model but the tableau says UNSAT", m.world_count())));
            }
            (Some(m), _) => eprintln!("oracle: model with {} worlds", m.world_count()),
            (None, _) => eprintln!("oracle: no model with at most {n} worlds"),
        }
    }
    println!("{}", if outcome.is_sat() { "SAT" } else { "UNSAT" });
    if let (Some(path), Some(w)) = (witness, &outcome.witness) {
        std::fs::write(path, w.to_json() + "\n").map_err(|e| Failure(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(outcome.is_sat())
}
