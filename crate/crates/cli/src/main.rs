use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use noteforge_core::config::Config;
use noteforge_core::dedup::select_keyframes;
use noteforge_core::eval::gold::load_annotations;
use noteforge_core::eval::{evaluate, DEFAULT_TOLERANCE};
use noteforge_core::fixture;
use noteforge_core::keyinfo::{detect_dynamic_keyframes, report_lines};
use noteforge_core::notegen::AssetStore;
use noteforge_core::pipeline::{self, Stage, ASSETS_DIR};
use noteforge_core::providers::Providers;
use noteforge_core::render::canonical::{parse_scheme, to_canonical};
use noteforge_core::render::{AssetLinks, Engagement, RenderModality, RenderOptions, Renderer, Verbosity};
use noteforge_core::Warnings;
use serde_json::json;

#[derive(Parser)]
#[command(name = "noteforge", version, about = "Turn instructional videos into structured notes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ProviderArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use deterministic mock providers (tables from the config, NOTEFORGE_MOCK_DIR or the source directory).
    #[arg(long)]
    mock: bool,
}

impl ProviderArgs {
    fn load(&self) -> Result<Config> {
        let config = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        config.validate()?;
        Ok(config)
    }

    fn providers(&self, config: &Config, source: &str) -> Result<Providers> {
        Ok(pipeline::build_providers(config, self.mock, Some(source))?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write scheme, transcript and assets to DIR.
    Process {
        src: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        providers: ProviderArgs,
    },
    /// Render a scheme document to HTML.
    Render {
        #[arg(long)]
        scheme: PathBuf,
        #[arg(long, default_value = "TEXT_IMAGE")]
        modality: RenderModality,
        #[arg(long, default_value = "CONCISE")]
        verbosity: Verbosity,
        #[arg(long, default_value = "PRINTABLE")]
        engagement: Engagement,
        #[arg(long)]
        no_emoji: bool,
        /// Link assets relative to the output file instead of embedding them.
        #[arg(long)]
        link_assets: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the job API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long)]
        jobs_root: PathBuf,
        /// Directory served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[command(flatten)]
        providers: ProviderArgs,
    },
    /// Score predicted keyframes and boundaries against gold annotations.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic video with matching mock tables.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(fixture::SCENARIOS))]
        scenario: String,
    },
    /// Keyframe selection only.
    Keyframes {
        video: String,
        #[arg(long)]
        sem_threshold: Option<f64>,
        #[arg(long)]
        vis_threshold: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        providers: ProviderArgs,
    },
    /// Build and dump the chapter/step hierarchy.
    Structure {
        video: String,
        #[arg(long)]
        out: PathBuf,
        /// Write Graphviz DOT instead of JSON.
        #[arg(long)]
        dot: bool,
        #[command(flatten)]
        providers: ProviderArgs,
    },
    /// Static and/or dynamic key information extraction.
    Keyinfo {
        video: String,
        #[arg(long = "static")]
        static_: bool,
        #[arg(long)]
        dynamic: bool,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        providers: ProviderArgs,
    },
}

fn print_warnings(w: &Warnings) {
    for line in w.iter() {
        eprintln!("warning: {line}");
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn stage_prefix(config: &Config, providers: &Providers, src: &str, w: &mut Warnings) -> Result<pipeline::Parsed> {
    Ok(pipeline::parse_source(config, providers, src, w)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Process { src, out, providers: pa } => {
            let config = pa.load()?;
            let providers = pa.providers(&config, &src)?;
            let result = pipeline::run(&config, &providers, &src, &out, &mut |s: Stage| eprintln!("{}", s.as_str()))?;
            print_warnings(&result.warnings);
            let steps = result.scheme.steps().count();
            println!(
                "{}: {} chapters, {} steps -> {}",
                result.scheme.video.title,
                result.scheme.chapters.len(),
                steps,
                out.display()
            );
        }
        Command::Render {
            scheme,
            modality,
            verbosity,
            engagement,
            no_emoji,
            link_assets,
            out,
        } => {
            let text = std::fs::read_to_string(&scheme).with_context(|| format!("reading {}", scheme.display()))?;
            let s = parse_scheme(&text)?;
            let base = scheme.parent().unwrap_or(Path::new("."));
            let store = AssetStore::open(base.join(ASSETS_DIR))?;
            let opts = RenderOptions {
                modality,
                verbosity,
                engagement,
                show_emoji: !no_emoji,
            };
            let links = if link_assets {
                let prefix = relative_assets(out.parent().unwrap_or(Path::new(".")), &base.join(ASSETS_DIR));
                AssetLinks::Relative(prefix)
            } else {
                AssetLinks::Inline
            };
            write(&out, &Renderer { store: &store, links }.render(&s, &opts)?)?;
        }
        Command::Serve {
            port,
            host,
            jobs_root,
            static_dir,
            providers: pa,
        } => {
            let config = pa.load()?;
            let opts = noteforge_server::ServeOptions {
                addr: SocketAddr::new(host, port),
                jobs_root,
                config,
                mock: pa.mock,
                static_dir,
            };
            tokio::runtime::Runtime::new()?.block_on(noteforge_server::serve(opts))?;
        }
        Command::Eval {
            pred,
            gold,
            tolerance,
            out,
        } => {
            let read = |p: &Path| -> Result<_> {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or("video");
                Ok(load_annotations(&text, name)?)
            };
            let (p, g) = (read(&pred)?, read(&gold)?);
            if g.is_empty() {
                bail!("{} has no annotations", gold.display());
            }
            let report = evaluate(&p, &g, tolerance);
            for v in &report.videos {
                println!(
                    "{}\tP={:.4}\tR={:.4}\tF1={:.4}\tMRA={}",
                    v.video,
                    v.keyframes.precision,
                    v.keyframes.recall,
                    v.keyframes.f1,
                    v.mra.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into())
                );
            }
            println!(
                "macro\tP={:.4}\tR={:.4}\tF1={:.4}\tMRA={}",
                report.keyframes.precision,
                report.keyframes.recall,
                report.keyframes.f1,
                report.mra.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into())
            );
            if let Some(out) = out {
                write(&out, &to_canonical(&report)?)?;
            }
        }
        Command::Fixture { out, scenario } => {
            let path = fixture::write_fixture(&scenario, &out)?;
            println!("{}", path.display());
        }
        Command::Keyframes {
            video,
            sem_threshold,
            vis_threshold,
            out,
            providers: pa,
        } => {
            let mut config = pa.load()?;
            if let Some(t) = sem_threshold {
                config.dedup.semantic_threshold = t;
            }
            if let Some(t) = vis_threshold {
                config.dedup.visual_threshold = t;
            }
            let providers = pa.providers(&config, &video)?;
            let mut w = Warnings::new();
            let parsed = stage_prefix(&config, &providers, &video, &mut w)?;
            let r = select_keyframes(&providers, &parsed.frames, &config.dedup, config.exec())?;
            print_warnings(&w);
            let doc = json!({
                "frames": parsed.frames.len(),
                "semantic_threshold": config.dedup.semantic_threshold,
                "visual_threshold": config.dedup.visual_threshold,
                "semantic_kept": r.semantic.kept_indices,
                "visual_kept": r.visual.kept_indices,
                "keyframes": r.keyframes.indices.iter().map(|&i| json!({"index": i, "t": parsed.frames[i].timestamp})).collect::<Vec<_>>(),
            });
            write(&out, &to_canonical(&doc)?)?;
            println!("{} of {} frames kept", r.keyframes.indices.len(), parsed.frames.len());
        }
        Command::Structure {
            video,
            out,
            dot,
            providers: pa,
        } => {
            let config = pa.load()?;
            let providers = pa.providers(&config, &video)?;
            let mut w = Warnings::new();
            let parsed = stage_prefix(&config, &providers, &video, &mut w)?;
            let s = pipeline::structure(&config, &providers, &parsed, &mut w)?;
            print_warnings(&w);
            let text = if dot { s.hierarchy.dot() } else { to_canonical(&s.hierarchy)? };
            write(&out, &text)?;
        }
        Command::Keyinfo {
            video,
            static_,
            dynamic,
            report,
            providers: pa,
        } => {
            let config = pa.load()?;
            let providers = pa.providers(&config, &video)?;
            let (want_static, want_dynamic) = if static_ || dynamic { (static_, dynamic) } else { (true, true) };
            let mut w = Warnings::new();
            let parsed = stage_prefix(&config, &providers, &video, &mut w)?;
            let (statics, dynamics) = if want_static {
                let s = pipeline::structure(&config, &providers, &parsed, &mut w)?;
                let k = pipeline::key_information(&config, &providers, &parsed, &s.dedup.keyframes.indices, &mut w)?;
                (k.annotations, if want_dynamic { k.dynamic } else { Vec::new() })
            } else {
                let (d, dw) = detect_dynamic_keyframes(&providers, &parsed.frames, &config.dynamic, config.exec());
                w.extend(dw);
                (Vec::new(), d)
            };
            print_warnings(&w);
            write(&report, &report_lines(&statics, &dynamics))?;
            println!("{} static, {} dynamic", statics.len(), dynamics.len());
        }
    }
    Ok(())
}

/// `assets` as seen from `from`, with a trailing slash.
fn relative_assets(from: &Path, assets: &Path) -> String {
    let abs = |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    let (from, to) = (abs(from), abs(assets));
    let common = from.components().zip(to.components()).take_while(|(a, b)| a == b).count();
    let mut parts: Vec<String> = from.components().skip(common).map(|_| "..".to_string()).collect();
    parts.extend(to.components().skip(common).map(|c| c.as_os_str().to_string_lossy().into_owned()));
    let mut s = parts.join("/");
    s.push('/');
    s
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
