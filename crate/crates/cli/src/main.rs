//! `menulens` command-line tool.
//!
//! Exit codes: 0 success, 1 failure, 2 usage error or unreadable input,
//! 3 no menu found (nothing detected or nothing parsed), 4 evaluation below
//! `--min-recall`.

mod config;
mod repl;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use menulens_core::eval::{item_names, recall_report, render_table, GroundTruthMenu, DEFAULT_THETA};
use menulens_core::frame_select::{parse_detection_set, parse_detections, select_keyframe, DetectionSet};
use menulens_core::llm::{CompletionClient, HttpChatClient};
use menulens_core::menu::{menu_from_json, menu_to_json, menu_to_markdown};
use menulens_core::ocr::{parse_ocr_document, run_external_ocr, serialize_ocr_document, OcrDocument, OCR_CMD_ENV};
use menulens_core::pipeline::{digitize, layout_document, run_pipeline, PipelineConfig};
use menulens_core::prefs::{import_manual, import_photos_metadata, import_places, import_transactions};
use menulens_core::ImageDims;

use crate::config::Config;

#[derive(Parser)]
#[command(name = "menulens", version, about = "Menu reading assistant: keyframe selection, menu parsing and recommendations")]
struct Cli {
    /// Configuration file (defaults to $MENULENS_CONFIG, then ~/.menulens.toml)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output on stderr (repeatable)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: keyframe selection, layout, menu parsing
    #[command(subcommand)]
    Pipeline(PipelineCmd),
    /// Keyframe selection only
    #[command(subcommand)]
    Frames(FramesCmd),
    /// Run the external OCR engine on an image
    #[command(subcommand)]
    Ocr(OcrCmd),
    /// Parse a single OCR document into a digital menu
    #[command(subcommand)]
    Menu(MenuCmd),
    /// Convert personal data exports into preference documents
    #[command(subcommand)]
    Prefs(PrefsCmd),
    /// Interactive recommendations over a parsed menu
    Chat(ChatArgs),
    /// Compare parsed menus against ground truth
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Run the HTTP service
    Serve(ServeArgs),
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// Detections plus per-frame OCR → menu JSON
    Run {
        /// Detections file: {dims, detections} or a bare detection array with --dims
        #[arg(long)]
        detections: PathBuf,
        /// Directory of frame_NNNN.ocr.json files
        #[arg(long)]
        ocr_dir: PathBuf,
        /// Frame size as WIDTHxHEIGHT when the detections file carries none
        #[arg(long, value_parser = parse_dims)]
        dims: Option<ImageDims>,
        /// Structure the menu with the configured language model
        #[arg(long)]
        llm: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum FramesCmd {
    /// Print the chosen keyframe index as JSON
    Select {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long, value_parser = parse_dims)]
        dims: Option<ImageDims>,
    },
}

#[derive(Subcommand)]
enum OcrCmd {
    /// Print the OCR document produced by the engine
    Run {
        image: PathBuf,
        /// Command template with an {image} placeholder (else $MENULENS_OCR_CMD, then the config file)
        #[arg(long)]
        ocr_cmd: Option<String>,
        /// Seconds before the engine is killed
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MenuFormat {
    Json,
    Markdown,
}

#[derive(Subcommand)]
enum MenuCmd {
    /// OCR document → digital menu
    Parse {
        ocr: PathBuf,
        #[arg(long)]
        llm: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: MenuFormat,
        /// Print the reconstructed reading order as JSON instead of the menu
        #[arg(long)]
        dump_layout: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Transactions,
    Places,
    Photos,
    Manual,
}

#[derive(Subcommand)]
enum PrefsCmd {
    /// Print preference documents as a JSON array
    Import {
        #[arg(long, value_enum)]
        source: SourceArg,
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct ChatArgs {
    /// Digital menu JSON
    #[arg(long)]
    menu: PathBuf,
    /// Profile directory, or a JSON array of preference documents
    #[arg(long)]
    prefs: Option<PathBuf>,
    /// Never call a language model
    #[arg(long)]
    offline: bool,
    #[arg(long)]
    llm_endpoint: Option<String>,
    /// Items per answer
    #[arg(short, long, default_value_t = 3)]
    k: usize,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Item recall of parsed menus at a similarity threshold
    Recall {
        /// Parsed menu file, or a directory of <menu_id>.menu.json files
        #[arg(long)]
        parsed: PathBuf,
        /// Ground-truth file, or a directory of them
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THETA)]
        theta: f64,
        /// Exit with status 4 when aggregate recall falls below this
        #[arg(long)]
        min_recall: Option<f64>,
    },
}

#[derive(clap::Args)]
struct ServeArgs {
    #[arg(long)]
    addr: Option<String>,
    /// Directory of web UI assets
    #[arg(long)]
    static_dir: Option<PathBuf>,
    #[arg(long)]
    llm_endpoint: Option<String>,
    /// Never call a language model
    #[arg(long)]
    offline: bool,
    /// Directory of named preference profiles
    #[arg(long)]
    profiles_dir: Option<PathBuf>,
    #[arg(long)]
    ocr_cmd: Option<String>,
}

/// Bad invocation or unreadable input; exits with status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Evaluation finished below the requested recall; exits with status 4.
#[derive(Debug)]
struct BelowThreshold;

impl std::fmt::Display for BelowThreshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("aggregate recall is below --min-recall")
    }
}

impl std::error::Error for BelowThreshold {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use menulens_core::Error as E;
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    if err.downcast_ref::<BelowThreshold>().is_some() {
        return 4;
    }
    for cause in err.chain() {
        if let Some(E::NoMenuDetected { .. } | E::EmptyMenu) = cause.downcast_ref::<E>() {
            return 3;
        }
    }
    1
}

fn parse_dims(s: &str) -> Result<ImageDims, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let dims = ImageDims {
        width: w.trim().parse().map_err(|_| "bad width")?,
        height: h.trim().parse().map_err(|_| "bad height")?,
    };
    dims.validate().map_err(|e| e.to_string())?;
    Ok(dims)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn pretty<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

fn load_detections(path: &Path, dims: Option<ImageDims>) -> Result<DetectionSet> {
    let bytes = read(path)?;
    let is_array = bytes.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'[');
    if is_array {
        let dims = dims.ok_or_else(|| usage("a bare detection array needs --dims WIDTHxHEIGHT"))?;
        let detections = parse_detections(&bytes).with_context(|| format!("reading {}", path.display()))?;
        return Ok(DetectionSet { dims, detections });
    }
    let mut set = parse_detection_set(&bytes).with_context(|| format!("reading {}", path.display()))?;
    if let Some(d) = dims {
        set.dims = d;
    }
    Ok(set)
}

/// `frame_NNNN.ocr.json` files keyed by frame index.
fn load_ocr_dir(dir: &Path) -> Result<BTreeMap<u32, OcrDocument>> {
    let entries = std::fs::read_dir(dir).map_err(|e| usage(format!("cannot read {}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(frame) = name
            .strip_prefix("frame_")
            .and_then(|n| n.strip_suffix(".ocr.json"))
            .and_then(|n| n.parse::<u32>().ok())
        else {
            log::debug!("ignoring {}", path.display());
            continue;
        };
        let doc = parse_ocr_document(&read(&path)?).with_context(|| format!("reading {}", path.display()))?;
        out.insert(frame, doc);
    }
    Ok(out)
}

fn llm_client(config: &Config, enabled: bool, endpoint: Option<&str>) -> Result<Option<HttpChatClient>> {
    if !enabled {
        return Ok(None);
    }
    let cfg = config
        .llm_config(endpoint)
        .ok_or_else(|| usage("no model endpoint: set [llm] endpoint in the config file"))?;
    Ok(Some(HttpChatClient::new(cfg)?))
}

fn as_dyn(client: &Option<HttpChatClient>) -> Option<&dyn CompletionClient> {
    client.as_ref().map(|c| c as &dyn CompletionClient)
}

fn run(cli: Cli) -> Result<()> {
    let config = Config::load(cli.config.as_deref()).map_err(|e| usage(format!("{e:#}")))?;
    let pipeline = PipelineConfig::default();
    match cli.command {
        Command::Pipeline(PipelineCmd::Run { detections, ocr_dir, dims, llm, out }) => {
            let set = load_detections(&detections, dims)?;
            let docs = load_ocr_dir(&ocr_dir)?;
            let client = llm_client(&config, llm, None)?;
            let result = run_pipeline(&set.detections, set.dims, &docs, as_dyn(&client), &pipeline)?;
            eprintln!("keyframe: {}", result.keyframe_index);
            write_output(out.as_deref(), &menu_to_json(&result.menu))
        }
        Command::Frames(FramesCmd::Select { detections, dims }) => {
            let set = load_detections(&detections, dims)?;
            let index = select_keyframe(&set.detections, set.dims, &pipeline.select)?;
            write_output(None, &pretty(&serde_json::json!({ "keyframe_index": index })))
        }
        Command::Ocr(OcrCmd::Run { image, ocr_cmd, timeout, out }) => {
            if !image.is_file() {
                return Err(usage(format!("no such image {}", image.display())));
            }
            let template = ocr_cmd
                .or_else(|| std::env::var(OCR_CMD_ENV).ok())
                .or_else(|| config.ocr.command.clone())
                .ok_or_else(|| usage(format!("no OCR command: pass --ocr-cmd or set {OCR_CMD_ENV}")))?;
            let secs = timeout.or(config.ocr.timeout_secs).unwrap_or(60.0);
            let timeout = Duration::try_from_secs_f64(secs).map_err(|_| usage("--timeout must be positive"))?;
            let doc = run_external_ocr(&image, &template, timeout)?;
            write_output(out.as_deref(), &serialize_ocr_document(&doc))
        }
        Command::Menu(MenuCmd::Parse { ocr, llm, out, format, dump_layout }) => {
            let doc = parse_ocr_document(&read(&ocr)?).with_context(|| format!("reading {}", ocr.display()))?;
            if dump_layout {
                return write_output(out.as_deref(), &pretty(&layout_document(&doc, &pipeline.layout)));
            }
            let client = llm_client(&config, llm, None)?;
            let menu = digitize(&doc, None, as_dyn(&client), &pipeline)?;
            let bytes = match format {
                MenuFormat::Json => menu_to_json(&menu),
                MenuFormat::Markdown => menu_to_markdown(&menu).into_bytes(),
            };
            write_output(out.as_deref(), &bytes)
        }
        Command::Prefs(PrefsCmd::Import { source, file, out }) => {
            let bytes = read(&file)?;
            let docs = match source {
                SourceArg::Transactions => {
                    let imported = import_transactions(&bytes)?;
                    if imported.skipped > 0 {
                        eprintln!("skipped {} unreadable row(s)", imported.skipped);
                    }
                    imported.docs
                }
                SourceArg::Places => import_places(&bytes)?,
                SourceArg::Photos => import_photos_metadata(&bytes)?,
                SourceArg::Manual => import_manual(&bytes)?,
            };
            eprintln!("imported {} document(s)", docs.len());
            write_output(out.as_deref(), &pretty(&docs))
        }
        Command::Chat(args) => {
            let client = if args.offline {
                None
            } else {
                match config.llm_config(args.llm_endpoint.as_deref()) {
                    Some(cfg) => Some(HttpChatClient::new(cfg)?),
                    None => {
                        log::info!("no model endpoint configured, answering offline");
                        None
                    }
                }
            };
            if args.k == 0 {
                return Err(usage("-k must be at least 1"));
            }
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            repl::run(&args.menu, args.prefs.as_deref(), args.k, as_dyn(&client), stdin.lock(), stdout.lock())
        }
        Command::Eval(EvalCmd::Recall { parsed, truth, theta, min_recall }) => {
            if !(0.0..=1.0).contains(&theta) {
                return Err(usage("--theta must lie in [0, 1]"));
            }
            let parsed_menus = load_parsed(&parsed)?;
            let truths = load_truth(&truth)?;
            let report = recall_report(&parsed_menus, &truths, theta)?;
            eprint!("{}", render_table(&report));
            write_output(None, &pretty(&report))?;
            match min_recall {
                Some(min) if report.aggregate_recall < min => Err(BelowThreshold.into()),
                _ => Ok(()),
            }
        }
        Command::Serve(args) => serve(&config, args),
    }
}

fn json_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn load_parsed(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let mut out = BTreeMap::new();
    for file in json_files(path)? {
        let name = file.file_name().unwrap().to_string_lossy();
        let id = name.strip_suffix(".menu.json").or_else(|| name.strip_suffix(".json")).unwrap_or(&name).to_string();
        let menu = menu_from_json(&read(&file)?).with_context(|| format!("reading {}", file.display()))?;
        out.insert(id, item_names(&menu));
    }
    Ok(out)
}

fn load_truth(path: &Path) -> Result<Vec<GroundTruthMenu>> {
    json_files(path)?
        .iter()
        .map(|f| GroundTruthMenu::from_json(&read(f)?).with_context(|| format!("reading {}", f.display())))
        .collect()
}

fn serve(config: &Config, args: ServeArgs) -> Result<()> {
    let addr = args.addr.or_else(|| config.serve.addr.clone()).unwrap_or_else(|| "127.0.0.1:8080".into());
    let static_dir = args.static_dir.or_else(|| config.serve.static_dir.clone());
    if let Some(d) = &static_dir {
        if !d.is_dir() {
            return Err(usage(format!("static dir {} does not exist", d.display())));
        }
    }
    let profiles_dir = args.profiles_dir.or_else(|| config.serve.profiles_dir.clone());
    let llm = if args.offline { None } else { config.llm_config(args.llm_endpoint.as_deref()) };
    if let Some(cfg) = &llm {
        cfg.validate()?;
    }
    let service = menulens_service::ServiceConfig {
        llm,
        profiles_dir,
        static_dir,
        ocr_cmd: args.ocr_cmd.or_else(|| std::env::var(OCR_CMD_ENV).ok()).or_else(|| config.ocr.command.clone()),
        ocr_timeout: Duration::from_secs_f64(config.ocr.timeout_secs.unwrap_or(60.0).max(0.001)),
        ..Default::default()
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| usage(format!("cannot listen on {addr}: {e}")))?;
        write_output(None, format!("http://{}\n", listener.local_addr()?).as_bytes())?;
        menulens_service::serve_on(listener, service).await.map_err(|e| anyhow!(e))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
