use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use elboot_core::candidate::{
    backend_from_spec, serve_lines, BatchOptions, Candidate, GeneratorRequest,
};
use elboot_core::config::CONFIG_ENV;
use elboot_core::corpus::{extract_all, filter_linkable, parse_conll_with, ParseOptions};
use elboot_core::net::{
    Fetcher, FixtureTransport, HttpTransport, RateLimiter, ResponseCache, Transport,
};
use elboot_core::pipeline::{run_model_round, run_search_round, RoundSummary};
use elboot_core::review::{http, ReviewService};
use elboot_core::stats::{
    breakdown, collapse_small, coverage, provisional_coverage, render_breakdown, render_coverage,
    BreakdownOptions, Dimension, Measure, RenderFormat,
};
use elboot_core::workflow::{export_tsv, Store};
use elboot_core::{Clock, Config, Resolver, SystemClock, WikiSearch};
use log::info;

#[derive(Parser)]
#[command(
    name = "elboot",
    version,
    about = "Bootstrap an entity-linking corpus from NER annotations"
)]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,

    /// Override the journal directory from the config.
    #[arg(long, global = true)]
    journal_dir: Option<PathBuf>,

    /// Answer wiki requests from a recorded response file instead of the network.
    #[arg(long, global = true, value_name = "JSON")]
    replay_http: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse CoNLL files and create one workflow record per linkable mention.
    Ingest {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Ask a candidate generator for suggestions on pending mentions.
    Suggest {
        /// Command line of a stdio generator, or an http(s) URL.
        #[arg(long)]
        backend: String,
    },
    /// Run the wiki search fallback on mentions the model round is done with.
    Wapis,
    /// Serve the review API.
    Serve {
        #[arg(long)]
        addr: Option<SocketAddr>,
    },
    /// Close the workflow; everything not yet labeled becomes unlabeled.
    Finalize,
    /// Print the coverage report, or a breakdown along one dimension.
    Stats {
        /// One of label_language, subcategory, ne_type, morph_tag,
        /// unlabeled_category, unlabeled_factor. Omit for the coverage report.
        #[arg(long)]
        dimension: Option<Dimension>,
        #[arg(long, default_value = "coverage_share")]
        measure: Measure,
        /// tsv, json-lines or plot-data.
        #[arg(long, default_value = "tsv")]
        format: RenderFormat,
        /// Fold keys with fewer items into "other". Defaults to the config value.
        #[arg(long)]
        min_count: Option<u64>,
        /// Report on an unfinished workflow, counting open records as unlabeled.
        #[arg(long)]
        provisional: bool,
    },
    /// Write the labeled corpus as TSV.
    Export {
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Stdio generator that answers from a JSON fixture, for testing.
    MockBackend {
        /// Object mapping a mention id or surface to `[{"lang","title","score"}]`.
        fixture: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(dir) = &cli.journal_dir {
        config.journal_dir = dir.clone();
    }
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let ctx = Ctx {
        config,
        clock,
        replay_http: cli.replay_http,
    };
    match cli.command {
        Command::Ingest { files } => ingest(&ctx, &files),
        Command::Suggest { backend } => suggest(&ctx, &backend),
        Command::Wapis => wapis(&ctx),
        Command::Serve { addr } => serve(&ctx, addr),
        Command::Finalize => {
            let mut store = ctx.open_store()?;
            store.finalize()?;
            store.write_snapshot()?;
            println!("finalized {} records", store.records().len());
            Ok(())
        }
        Command::Stats {
            dimension,
            measure,
            format,
            min_count,
            provisional,
        } => {
            let min_count = min_count.unwrap_or(ctx.config.stats.min_count as u64);
            stats(&ctx, dimension, measure, format, min_count, provisional)
        }
        Command::Export { output } => export(&ctx, output.as_deref()),
        Command::MockBackend { fixture } => mock_backend(&fixture),
    }
}

struct Ctx {
    config: Config,
    clock: Arc<dyn Clock>,
    replay_http: Option<PathBuf>,
}

impl Ctx {
    fn open_store(&self) -> Result<Store> {
        let dir = &self.config.journal_dir;
        let mut store = Store::open(dir, self.clock.clone())
            .with_context(|| format!("opening journal in {}", dir.display()))?;
        store.set_snapshot_every(self.config.review.snapshot_every);
        store.set_preferred_languages(self.config.search.preferred_languages.clone());
        Ok(store)
    }

    fn transport(&self) -> Result<Arc<dyn Transport>> {
        Ok(match &self.replay_http {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                Arc::new(FixtureTransport::from_json(&text).context("parsing recorded responses")?)
            }
            None => {
                let s = &self.config.search;
                Arc::new(HttpTransport::new(
                    &s.user_agent,
                    Duration::from_secs(s.request_timeout_secs),
                )?)
            }
        })
    }

    fn fetcher(&self, transport: Arc<dyn Transport>, limiter: Arc<RateLimiter>) -> Fetcher {
        Fetcher::new(transport, limiter, self.clock.clone())
    }

    fn cache(&self, dir: PathBuf) -> Result<Arc<ResponseCache>> {
        let ttl = Duration::from_secs(self.config.search.cache_ttl_secs);
        let cache = ResponseCache::open(&dir, ttl, self.clock.clone())
            .with_context(|| format!("opening cache in {}", dir.display()))?;
        Ok(Arc::new(cache))
    }

    /// Search client and resolver sharing one transport and rate limit.
    fn wiki(&self) -> Result<(WikiSearch, Resolver)> {
        let transport = self.transport()?;
        let limiter = Arc::new(RateLimiter::new(
            self.config.search.rate_per_sec,
            1,
            self.clock.clone(),
        ));
        let search = WikiSearch::new(
            self.fetcher(transport.clone(), limiter.clone()),
            self.cache(self.config.search_cache_dir())?,
        );
        let resolver = Resolver::new(
            self.fetcher(transport, limiter),
            self.cache(self.config.resolver_cache_dir())?,
        )
        .with_host_template(self.config.resolver.host_template.clone());
        Ok((search, resolver))
    }
}

fn print_summary(round: &str, s: &RoundSummary) {
    println!(
        "{round}: attempted {}, suggested {}, empty {}, deferred {}",
        s.attempted, s.suggested, s.empty, s.deferred
    );
}

fn ingest(ctx: &Ctx, files: &[PathBuf]) -> Result<()> {
    let options = ParseOptions {
        doc_marker: ctx.config.ingest.doc_marker.clone(),
    };
    let mut docs = Vec::new();
    for path in files {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let parsed = parse_conll_with(&bytes, &options)
            .with_context(|| format!("parsing {}", path.display()))?;
        info!("{}: {} documents", path.display(), parsed.len());
        docs.extend(parsed);
    }
    let mentions = filter_linkable(extract_all(&docs, ctx.config.ingest.window_chars));
    let mut store = ctx.open_store()?;
    let added = store.init(&docs, &mentions)?;
    store.write_snapshot()?;
    println!(
        "ingested {} documents, {added} linkable mentions",
        docs.len()
    );
    Ok(())
}

fn suggest(ctx: &Ctx, spec: &str) -> Result<()> {
    let backend = backend_from_spec(spec).with_context(|| format!("starting backend {spec:?}"))?;
    let (_, resolver) = ctx.wiki()?;
    let g = &ctx.config.generator;
    let options = BatchOptions {
        max_candidates: g.max_candidates,
        timeout: Duration::from_secs(g.timeout_secs),
        fan_out: g.fan_out,
    };
    let mut store = ctx.open_store()?;
    let summary = run_model_round(&mut store, backend.as_ref(), &resolver, &options)?;
    store.write_snapshot()?;
    print_summary("model round", &summary);
    Ok(())
}

fn wapis(ctx: &Ctx) -> Result<()> {
    let (search, resolver) = ctx.wiki()?;
    let mut store = ctx.open_store()?;
    let s = &ctx.config.search;
    let summary = run_search_round(&mut store, &search, &resolver, &s.hosts, s.limit)?;
    store.write_snapshot()?;
    print_summary("search round", &summary);
    Ok(())
}

fn serve(ctx: &Ctx, addr: Option<SocketAddr>) -> Result<()> {
    let r = &ctx.config.review;
    let addr = match addr {
        Some(a) => a,
        None => r
            .addr
            .parse()
            .with_context(|| format!("review.addr {:?}", r.addr))?,
    };
    let store = ctx.open_store()?;
    let service = Arc::new(ReviewService::new(
        store,
        ctx.clock.clone(),
        Duration::from_secs(r.lease_ttl_secs),
    ));
    let app = http::router(service.clone(), r.auth_token.clone(), r.static_dir.clone());
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        http::serve(addr, app, shutdown).await
    })?;
    // the journal is authoritative; the snapshot only speeds up the next start
    if let Ok(service) = Arc::try_unwrap(service) {
        service.into_store().write_snapshot()?;
    }
    Ok(())
}

fn stats(
    ctx: &Ctx,
    dimension: Option<Dimension>,
    measure: Measure,
    format: RenderFormat,
    min_count: u64,
    provisional: bool,
) -> Result<()> {
    let store = ctx.open_store()?;
    let mut out = BufWriter::new(io::stdout().lock());
    match dimension {
        None => {
            let report = if provisional {
                provisional_coverage(&store)
            } else {
                coverage(&store)?
            };
            render_coverage(&report, format, &mut out)?;
        }
        Some(dimension) => {
            if provisional {
                bail!("--provisional applies to the coverage report only");
            }
            let options = BreakdownOptions {
                skew_subcategories: ctx
                    .config
                    .stats
                    .skew_subcategories
                    .iter()
                    .cloned()
                    .collect::<BTreeSet<_>>(),
            };
            let rows = breakdown(&store, dimension, measure, &options)?;
            render_breakdown(&collapse_small(&rows, min_count, measure), format, &mut out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn export(ctx: &Ctx, output: Option<&Path>) -> Result<()> {
    let store = ctx.open_store()?;
    let rows = match output {
        Some(path) => {
            let file =
                File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            let n = export_tsv(&store, &mut w)?;
            w.flush()?;
            n
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            let n = export_tsv(&store, &mut w)?;
            w.flush()?;
            n
        }
    };
    info!("exported {rows} rows");
    Ok(())
}

#[derive(serde::Deserialize)]
struct FixtureCandidate {
    lang: String,
    title: String,
    #[serde(default)]
    score: Option<f64>,
}

fn mock_backend(path: &Path) -> Result<()> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let fixture: HashMap<String, Vec<FixtureCandidate>> = serde_json::from_str(&text)?;
    let fixture: HashMap<String, Vec<Candidate>> = fixture
        .into_iter()
        .map(|(k, v)| {
            (
                k,
                v.into_iter()
                    .map(|c| Candidate::model(c.lang, c.title, c.score))
                    .collect(),
            )
        })
        .collect();
    let answer = |req: &GeneratorRequest| -> Vec<Candidate> {
        let found = fixture
            .get(&req.mention_id)
            .or_else(|| fixture.get(&req.mention));
        found
            .map(|c| c.iter().take(req.max_candidates).cloned().collect())
            .unwrap_or_default()
    };
    serve_lines(io::stdin().lock(), io::stdout().lock(), answer)?;
    Ok(())
}
