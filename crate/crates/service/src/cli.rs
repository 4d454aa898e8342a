//! Command-line interface. Exit codes: 0 success, 1 engine error, 2 usage
//! error. Errors go to stderr as one JSON line `{"error": {code, message}}`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use talk2bev::bench::{read_items, run_bench, write_items, BenchItem, BenchOptions, SystemUnderTest};
use talk2bev::bundle::{load_bundle, save_bundle};
use talk2bev::orchestrator::{answer_query, Conversation};
use talk2bev::synth::{generate_synthetic_scene, RigSpec, SynthParams};
use talk2bev::templates::Templates;

use crate::api::{cors, router, AppState};
use crate::config::{Backend, ServiceConfig};
use crate::engine::{discover_scenes, glob_scenes, Engine, EngineError, Generator};
use crate::images::write_camera_images;

#[derive(Debug, Parser)]
#[command(name = "talk2bev", version, about = "Build, query and benchmark captioned bird's-eye-view maps")]
pub struct Cli {
    /// Configuration file (TOML); TALK2BEV_* environment variables override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic scene bundle.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        n_objects: usize,
        #[arg(long)]
        out: PathBuf,
        /// Use only the front camera.
        #[arg(long)]
        front_only: bool,
        /// Skip the placeholder camera images.
        #[arg(long)]
        no_images: bool,
    },
    /// Build the language-enhanced map of a bundle.
    BuildMap {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_enum)]
        captioner: Option<Backend>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ask one question about a scene.
    Chat {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, value_enum)]
        llm: Option<Backend>,
        /// Rule file for the mock LLM.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, value_enum)]
        captioner: Option<Backend>,
        /// Answer without spatial operators.
        #[arg(long)]
        no_spatial_ops: bool,
    },
    /// Benchmark commands.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Run the REST service.
    Serve,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Score the system on scenes matching a glob.
    Run(BenchRunArgs),
    /// Write questions and spatial queries for scenes matching a glob.
    Gen {
        #[arg(long)]
        scenes: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Generator::Template)]
        generator: Generator,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Args)]
pub struct BenchRunArgs {
    #[arg(long)]
    pub scenes: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Score the system without spatial operators.
    #[arg(long)]
    pub no_spatial_ops: bool,
    /// Also score the other operator setting.
    #[arg(long)]
    pub ablation: bool,
    /// Question file from `bench gen`; generated on the fly when absent.
    #[arg(long)]
    pub questions: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub llm: Option<Backend>,
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

enum Failure {
    Usage(String),
    Engine(EngineError),
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        Failure::Engine(e)
    }
}

fn io_err(context: String) -> impl FnOnce(std::io::Error) -> EngineError {
    move |source| EngineError::Io { context, source }
}

/// Parses `args` and runs the command; returns the exit code.
pub fn run(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(message)) => {
            eprintln!("{}", json!({ "error": { "code": "usage", "message": message } }));
            2
        }
        Err(Failure::Engine(e)) => {
            eprintln!("{}", json!({ "error": { "code": e.code(), "message": e.to_string() } }));
            1
        }
    }
}

pub fn engine_from(cfg: &ServiceConfig) -> Result<Engine, EngineError> {
    let templates = match &cfg.templates_dir {
        Some(d) => Templates::load(d)?,
        None => Templates::builtin(),
    };
    Ok(Engine {
        templates,
        captioner: cfg.captioner.clone(),
        llm: cfg.llm.clone(),
        caption_parallelism: cfg.caption_parallelism,
        seed: cfg.seed,
        ..Default::default()
    })
}

fn set_llm(engine: &mut Engine, llm: Option<Backend>, script: Option<PathBuf>) -> Result<(), Failure> {
    if let Some(b) = llm {
        engine.llm.backend = b;
    }
    if script.is_some() {
        if engine.llm.backend != Backend::Mock {
            return Err(Failure::Usage("--script applies to the mock LLM only".into()));
        }
        engine.llm.script = script;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let cfg = ServiceConfig::load(cli.config.as_deref()).map_err(EngineError::from)?;
    let mut engine = engine_from(&cfg)?;
    match cli.command {
        Command::Synth {
            seed,
            n_objects,
            out,
            front_only,
            no_images,
        } => {
            let params = SynthParams {
                n_objects,
                rig: if front_only { RigSpec::FrontOnly } else { RigSpec::Surround },
                ..Default::default()
            };
            let bundle = generate_synthetic_scene(seed, &params)
                .map_err(|e| EngineError::Input(format!("cannot synthesize scene: {e}")))?;
            save_bundle(&bundle, &out).map_err(|source| EngineError::Bundle { path: out.clone(), source })?;
            if !no_images {
                write_camera_images(&bundle, &out).map_err(|e| EngineError::Backend(format!("writing images: {e}")))?;
            }
            println!("wrote {} ({} objects) to {}", bundle.scene_token, n_objects, out.display());
        }
        Command::BuildMap { scene, captioner, out } => {
            if let Some(b) = captioner {
                engine.captioner.backend = b;
            }
            let bundle = load_bundle(&scene).map_err(|source| EngineError::Bundle { path: scene.clone(), source })?;
            let map = engine.build_map(&bundle, &scene)?;
            fs::write(&out, map.to_json()).map_err(io_err(format!("writing {}", out.display())))?;
            println!("wrote map of {} ({} objects) to {}", map.scene_token, map.objects.len(), out.display());
        }
        Command::Chat {
            scene,
            query,
            llm,
            script,
            captioner,
            no_spatial_ops,
        } => {
            set_llm(&mut engine, llm, script)?;
            if let Some(b) = captioner {
                engine.captioner.backend = b;
            }
            let bundle = load_bundle(&scene).map_err(|source| EngineError::Bundle { path: scene.clone(), source })?;
            let map = engine.build_map(&bundle, &scene)?;
            let client = engine.llm()?;
            let mut conversation = Conversation::new("cli", &map.scene_token);
            conversation.tools_enabled = !no_spatial_ops;
            let outcome = answer_query(&map, &mut conversation, &query, client.as_ref(), &engine.templates)
                .map_err(EngineError::from)?;
            let out = json!({
                "schema_version": crate::api::API_SCHEMA_VERSION,
                "conversation_id": conversation.conversation_id,
                "referenced_object_ids": outcome.response.referenced_object_ids,
                "structured_response": outcome.response,
                "tool_trace": outcome.trace,
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
        }
        Command::Bench(BenchCommand::Gen {
            scenes,
            out,
            generator,
            seed,
        }) => {
            engine.generator = generator;
            if let Some(s) = seed {
                engine.seed = s;
            }
            let mut items = Vec::new();
            for dir in glob_scenes(&scenes)? {
                let loaded = engine.load_scene(&dir)?;
                let bench = loaded.bench.ok_or_else(|| {
                    EngineError::Input(format!("{} has no ground truth to generate from", dir.display()))
                })?;
                items.extend(bench.questions.into_iter().map(BenchItem::Mcq));
                items.extend(bench.queries.into_iter().map(BenchItem::Spatial));
            }
            let file = fs::File::create(&out).map_err(io_err(format!("creating {}", out.display())))?;
            write_items(&items, std::io::BufWriter::new(file)).map_err(io_err(format!("writing {}", out.display())))?;
            println!("wrote {} items to {}", items.len(), out.display());
        }
        Command::Bench(BenchCommand::Run(args)) => bench_run(engine, args)?,
        Command::Serve => serve(cfg, engine, cli.config.as_deref())?,
    }
    Ok(())
}

fn bench_run(mut engine: Engine, args: BenchRunArgs) -> Result<(), Failure> {
    set_llm(&mut engine, args.llm, args.script)?;
    if let Some(s) = args.seed {
        engine.seed = s;
    }
    let mut scenes = Vec::new();
    for dir in glob_scenes(&args.scenes)? {
        let loaded = engine.load_scene(&dir)?;
        let bench = loaded
            .bench
            .ok_or_else(|| EngineError::Input(format!("{} has no ground truth to score against", dir.display())))?;
        scenes.push(bench);
    }
    if let Some(qfile) = &args.questions {
        let file = fs::File::open(qfile).map_err(io_err(format!("opening {}", qfile.display())))?;
        let items = read_items(BufReader::new(file)).map_err(|e| EngineError::Input(format!("{}: {e}", qfile.display())))?;
        let mut by_scene: BTreeMap<String, (Vec<_>, Vec<_>)> = BTreeMap::new();
        for item in items {
            match item {
                BenchItem::Mcq(q) => by_scene.entry(q.scene_token.clone()).or_default().0.push(q),
                BenchItem::Spatial(q) => by_scene.entry(q.scene_token.clone()).or_default().1.push(q),
            }
        }
        for scene in &mut scenes {
            let (questions, queries) = by_scene.remove(&scene.map.scene_token).unwrap_or_default();
            scene.questions = questions;
            scene.queries = queries;
        }
        if let Some(token) = by_scene.keys().next() {
            return Err(EngineError::Input(format!("question file refers to scene {token}, which is not loaded")).into());
        }
    }
    let llm = engine.llm()?;
    let sut = SystemUnderTest {
        llm: llm.as_ref(),
        templates: &engine.templates,
    };
    let opts = BenchOptions {
        spatial_ops: !args.no_spatial_ops,
        ablation: args.ablation,
        seed: engine.seed,
        ..Default::default()
    };
    let report = run_bench(&scenes, &sut, &opts);
    report
        .write(&args.out)
        .map_err(io_err(format!("writing {}", args.out.display())))?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
    println!(
        "{} scenes: jaccard_mean {}, distance_error_mean {}, mcq accuracy {}; report at {}",
        report.counts.scenes,
        fmt(report.jaccard_mean),
        fmt(report.distance_error_mean),
        fmt(report.mcq.overall.map(|a| a.accuracy)),
        args.out.display()
    );
    Ok(())
}

fn serve(cfg: ServiceConfig, engine: Engine, path: Option<&Path>) -> Result<(), Failure> {
    if path.is_none() {
        return Err(Failure::Usage("serve needs --config FILE".into()));
    }
    let addr = cfg.validate().map_err(EngineError::from)?;
    let layer = cors(cfg.cors_origin.as_deref()).map_err(EngineError::Input)?;
    let scenes = discover_scenes(&cfg.scenes_dir)?
        .iter()
        .map(|d| engine.load_scene(d))
        .collect::<Result<Vec<_>, _>>()?;
    let mut state = AppState::new(scenes, engine.llm()?, engine.templates.clone());
    state.bench_parallelism = cfg.bench_parallelism;
    state.seed = cfg.seed;
    let state = Arc::new(state);
    let app = router(state.clone(), layer);
    let runtime = tokio::runtime::Runtime::new().map_err(io_err("starting runtime".into()))?;
    runtime
        .block_on(async move {
            let listener = tokio::net::TcpListener::bind(addr).await?;
            eprintln!("serving {} scenes on http://{}", state.scenes.len(), listener.local_addr()?);
            axum::serve(listener, app).await
        })
        .map_err(io_err(format!("serving on {addr}")))?;
    Ok(())
}
