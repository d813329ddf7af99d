//! Command line front end. All analysis lives in the library; this
//! file is argument plumbing, output formatting and exit codes.
//!
//! Exit codes: 0 success, 1 usage, 2 malformed input or configuration,
//! 3 signature database failure.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use opsig_core::analytics::{self, jaccard_similarity, top_similar};
use opsig_core::apitable::{ApiFilter, ApiTable, PermissionMap};
use opsig_core::hash::{is_hex32, HashAlg};
use opsig_core::ingest::{self, ingest_path};
use opsig_core::ir::AppIr;
use opsig_core::mutator::{self, MutationKind, MutationSpec};
use opsig_core::signature::{sign_app, SignOptions, SignOutcome, SignatureBundle};
use opsig_core::store::{Label, Store};
use opsig_core::zeroday::{self, ZeroDayConfig};

#[derive(Parser)]
#[command(
    name = "opsig",
    version,
    about = "Opcode signature toolkit for disassembled mobile apps"
)]
struct Cli {
    /// API identifier table (one `class;->method<TAB>hex-id` per line)
    #[arg(long, global = true, value_name = "FILE")]
    api_table: Option<PathBuf>,

    /// Digest algorithm for newly computed signatures
    #[arg(long, global = true, value_name = "ALG", default_value = "md5", value_parser = parse_hash)]
    hash: HashAlg,

    /// Exclude API methods listed in FILE from signatures
    #[arg(long, global = true, value_name = "FILE")]
    api_filter: Option<PathBuf>,

    /// Permission map (`class;->method<TAB>PERM[,PERM...]` per line)
    #[arg(long, global = true, value_name = "FILE")]
    perm_map: Option<PathBuf>,

    /// Signature database directory
    #[arg(long, global = true, value_name = "DIR")]
    store: Option<PathBuf>,

    /// Print machine readable JSON instead of text summaries
    #[arg(long, global = true)]
    json: bool,

    /// Worker threads for corpus operations (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

fn parse_hash(s: &str) -> std::result::Result<HashAlg, String> {
    s.parse().map_err(|e| format!("{e}"))
}

#[derive(Subcommand)]
enum Command {
    /// Compute an app's signature bundle
    Sign(SignArgs),
    /// Produce signature-preserving variants of an app
    Mutate(MutateArgs),
    /// Score the similarity of two apps or signature bundles
    Similar(SimilarArgs),
    /// Rank stored apps by similarity to a target
    TopSimilar(TopSimilarArgs),
    /// Report the permissions an app's API calls require
    Perms(PermsArgs),
    /// Show which stored apps carry one class signature
    Assoc(AssocArgs),
    /// Signature database operations
    #[command(subcommand)]
    Db(DbCommand),
    /// Cluster a corpus and flag likely repackaged malware
    Zeroday(ZerodayArgs),
    /// Convert or inspect app interchange documents
    #[command(subcommand)]
    Air(AirCommand),
}

#[derive(Args)]
struct SignArgs {
    /// Smali bundle directory, `.tar` bundle, or interchange JSON
    input: PathBuf,
    /// Write the bundle here instead of stdout
    #[arg(short, long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Sign all code, reachable or not
    #[arg(long)]
    keep_dead: bool,
    /// Also write bundles for embedded apps into DIR
    #[arg(long, value_name = "DIR")]
    emit_nested: Option<PathBuf>,
}

#[derive(Args)]
struct MutateArgs {
    /// App to transform
    input: PathBuf,
    /// Directory that receives one interchange JSON per variant
    #[arg(short, long, value_name = "DIR")]
    out: PathBuf,
    /// Apply a single mutation instead of the whole suite
    #[arg(long, value_name = "KIND", value_parser = parse_mutation)]
    op: Option<MutationKind>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_mutation(s: &str) -> std::result::Result<MutationKind, String> {
    s.parse().map_err(|e| format!("{e}"))
}

#[derive(Args)]
struct SimilarArgs {
    a: PathBuf,
    b: PathBuf,
}

#[derive(Args)]
struct TopSimilarArgs {
    input: PathBuf,
    /// Keep the best PERCENT of stored apps
    #[arg(long, default_value_t = 10.0)]
    percent: f64,
}

#[derive(Args)]
struct PermsArgs {
    input: PathBuf,
}

#[derive(Args)]
struct AssocArgs {
    /// Class signature digest (32 hex characters)
    digest: String,
}

#[derive(Subcommand)]
enum DbCommand {
    /// Sign apps and insert them
    Add(DbAddArgs),
    /// Print one stored record
    Get { app_id: String },
    /// Rank application signatures by how many stored apps share them
    Freq,
    /// Import a label document (`app-id<TAB>label<TAB>source` per line)
    Labels { file: PathBuf },
}

#[derive(Args)]
struct DbAddArgs {
    inputs: Vec<PathBuf>,
    /// Insert bundles of embedded apps too
    #[arg(long)]
    with_nested: bool,
    /// Sign all code, reachable or not
    #[arg(long)]
    keep_dead: bool,
}

#[derive(Args)]
struct ZerodayArgs {
    /// Apps or signature bundles to cluster
    inputs: Vec<PathBuf>,
    /// Cluster everything in the signature database as well
    #[arg(long)]
    from_store: bool,
    /// Minimum average shared API weight for two clusters to merge
    #[arg(long, default_value_t = 100)]
    threshold: u64,
    /// Clusters must be strictly larger than this to be flagged
    #[arg(long, default_value_t = 10)]
    min_cluster_size: usize,
    /// Flag clusters whose known-malicious share is at most this
    #[arg(long, default_value_t = 0.2)]
    max_malicious_fraction: f64,
    /// Class digests to ignore (shared libraries, ad kits); one per line
    #[arg(long, value_name = "FILE")]
    whitelist: Option<PathBuf>,
    /// Write the full run report here
    #[arg(short, long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum AirCommand {
    /// Rewrite any supported input as canonical interchange JSON
    Convert {
        input: PathBuf,
        #[arg(short, long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Parse an input and report what it contains
    Check { input: PathBuf },
}

fn main() {
    // Die quietly when a downstream pipe closes, as `opsig ... | head` should.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Some(n) = cli.jobs {
        // Ignored if a pool already exists; only the first caller wins.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}

fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<opsig_core::Error>() {
            return match e {
                opsig_core::Error::Store(_) | opsig_core::Error::DuplicateApp(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Sign(args) => cmd_sign(&cli, args),
        Command::Mutate(args) => cmd_mutate(&cli, args),
        Command::Similar(args) => cmd_similar(&cli, args),
        Command::TopSimilar(args) => cmd_top_similar(&cli, args),
        Command::Perms(args) => cmd_perms(&cli, args),
        Command::Assoc(args) => cmd_assoc(&cli, args),
        Command::Db(db) => match db {
            DbCommand::Add(args) => cmd_db_add(&cli, args),
            DbCommand::Get { app_id } => cmd_db_get(&cli, app_id),
            DbCommand::Freq => cmd_db_freq(&cli),
            DbCommand::Labels { file } => cmd_db_labels(&cli, file),
        },
        Command::Zeroday(args) => cmd_zeroday(&cli, args),
        Command::Air(air) => match air {
            AirCommand::Convert { input, out } => cmd_air_convert(&cli, input, out.as_deref()),
            AirCommand::Check { input } => cmd_air_check(&cli, input),
        },
    }
}

/// Everything loaded from the global options that signing needs.
struct SignCtx {
    table: ApiTable,
    alg: HashAlg,
    filter: Option<ApiFilter>,
    pmap: Option<PermissionMap>,
}

impl SignCtx {
    fn load(cli: &Cli) -> Result<SignCtx> {
        let path = cli.api_table.as_deref().ok_or_else(|| {
            opsig_core::Error::Config("--api-table is required for this command".into())
        })?;
        let table =
            ApiTable::load(path).with_context(|| format!("loading {}", path.display()))?;
        let filter = match cli.api_filter.as_deref() {
            Some(p) => {
                Some(ApiFilter::load(p).with_context(|| format!("loading {}", p.display()))?)
            }
            None => None,
        };
        let pmap = match cli.perm_map.as_deref() {
            Some(p) => {
                Some(PermissionMap::load(p).with_context(|| format!("loading {}", p.display()))?)
            }
            None => None,
        };
        Ok(SignCtx {
            table,
            alg: cli.hash,
            filter,
            pmap,
        })
    }

    fn options(&self, keep_dead: bool) -> SignOptions<'_> {
        SignOptions {
            alg: self.alg,
            filter: self.filter.as_ref(),
            perm_map: self.pmap.as_ref(),
            keep_dead,
        }
    }

    fn ingest(&self, path: &Path) -> Result<AppIr> {
        let ingested = ingest_path(path, &self.table, self.alg)
            .with_context(|| format!("ingesting {}", path.display()))?;
        for w in &ingested.stats.warnings {
            eprintln!("warning: {w}");
        }
        Ok(ingested.app)
    }

    fn sign_path(&self, path: &Path, keep_dead: bool) -> Result<SignOutcome> {
        let app = self.ingest(path)?;
        let outcome = sign_app(&app, &self.table, &self.options(keep_dead));
        for w in &outcome.warnings {
            eprintln!("warning: {w}");
        }
        Ok(outcome)
    }
}

fn open_store(cli: &Cli) -> Result<Store> {
    let dir = cli.store.as_deref().ok_or_else(|| {
        opsig_core::Error::Config("--store is required for this command".into())
    })?;
    let store = Store::open(dir).with_context(|| format!("opening store {}", dir.display()))?;
    for w in &store.warnings {
        eprintln!("warning: {w}");
    }
    Ok(store)
}

/// A positional input is either a signature bundle JSON (recognized by
/// its `lev1` field) or an app in any ingestible form.
fn load_bundle_or_app(cli: &Cli, path: &Path) -> Result<SignatureBundle> {
    if path.is_file() {
        if let Ok(text) = fs::read_to_string(path) {
            if let Ok(serde_json::Value::Object(map)) = serde_json::from_str(&text) {
                if map.contains_key("lev1") {
                    return SignatureBundle::from_json(&text)
                        .with_context(|| format!("reading bundle {}", path.display()));
                }
            }
        }
    }
    Ok(SignCtx::load(cli)?.sign_path(path, false)?.bundle)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_sign(cli: &Cli, args: &SignArgs) -> Result<()> {
    let ctx = SignCtx::load(cli)?;
    let outcome = ctx.sign_path(&args.input, args.keep_dead)?;
    if let Some(dir) = args.emit_nested.as_deref() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for nested in &outcome.nested {
            let path = dir.join(format!("{}.json", nested.app_id));
            fs::write(&path, nested.to_json() + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
        }
        eprintln!("wrote {} nested bundle(s)", outcome.nested.len());
    } else if !outcome.nested.is_empty() {
        eprintln!(
            "note: input contains {} embedded app(s); pass --emit-nested to keep their bundles",
            outcome.nested.len()
        );
    }
    emit(args.out.as_deref(), &(outcome.bundle.to_json() + "\n"))
}

fn cmd_mutate(cli: &Cli, args: &MutateArgs) -> Result<()> {
    let ctx = SignCtx::load(cli)?;
    let app = ctx.ingest(&args.input)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let variants: Vec<(String, AppIr)> = match args.op {
        Some(kind) => {
            let spec = MutationSpec {
                kind,
                seed: args.seed,
            };
            vec![(kind.name().to_string(), mutator::mutate(&app, &spec, &ctx.table, ctx.alg))]
        }
        None => {
            let labels = [
                "reorder-classes",
                "reorder-methods",
                "touch-resources",
                "rename-identifiers",
                "insert-dead-method",
                "insert-dead-class",
                "combined",
            ];
            mutator::variant_suite(&app, args.seed, &ctx.table, ctx.alg)
                .into_iter()
                .zip(labels)
                .map(|(v, l)| (l.to_string(), v))
                .collect()
        }
    };

    let mut rows = Vec::new();
    for (label, variant) in &variants {
        let path = args.out.join(format!("{}.air.json", variant.app_id));
        fs::write(&path, ingest::air::to_json(variant) + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        rows.push(serde_json::json!({
            "kind": label,
            "app_id": variant.app_id,
            "path": path.to_string_lossy(),
        }));
        if !cli.json {
            println!("{label}\t{}\t{}", variant.app_id, path.display());
        }
    }
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    }
    Ok(())
}

fn cmd_similar(cli: &Cli, args: &SimilarArgs) -> Result<()> {
    let a = load_bundle_or_app(cli, &args.a)?;
    let b = load_bundle_or_app(cli, &args.b)?;
    let report = jaccard_similarity(&a, &b)?;
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!(
            "score {:.6} ({}/{})",
            report.score, report.numerator, report.denominator
        );
        println!(
            "common {}  only-a {}  only-b {}",
            report.common.len(),
            report.only_a.len(),
            report.only_b.len()
        );
        if report.degenerate {
            println!("note: neither app has any weighted class signature");
        }
    }
    Ok(())
}

fn cmd_top_similar(cli: &Cli, args: &TopSimilarArgs) -> Result<()> {
    let target = load_bundle_or_app(cli, &args.input)?;
    let store = open_store(cli)?;
    let top = top_similar(&target, &store, args.percent)?;
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&top)?);
        return Ok(());
    }
    println!(
        "{} of {} stored apps (skipped {} incompatible)",
        top.matches.len(),
        top.considered,
        top.skipped_incompatible
    );
    for (i, m) in top.matches.iter().enumerate() {
        println!(
            "{:>3}. {:.6}  {}  {}  {}",
            i + 1,
            m.report.score,
            m.app_id,
            m.package,
            m.label
        );
    }
    Ok(())
}

fn cmd_perms(cli: &Cli, args: &PermsArgs) -> Result<()> {
    let ctx = SignCtx::load(cli)?;
    if ctx.pmap.is_none() {
        return Err(opsig_core::Error::Config(
            "--perm-map is required for this command".into(),
        )
        .into());
    }
    let app = ctx.ingest(&args.input)?;
    let mut bundle = sign_app(&app, &ctx.table, &ctx.options(false)).bundle;
    let annotation =
        analytics::annotate_permissions(&mut bundle, &app, ctx.pmap.as_ref().unwrap())?;
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&annotation)?);
    } else {
        for perm in &annotation.app_perms {
            println!("{perm}");
        }
    }
    Ok(())
}

fn cmd_assoc(cli: &Cli, args: &AssocArgs) -> Result<()> {
    if !is_hex32(&args.digest) {
        return Err(opsig_core::Error::Config(format!(
            "`{}` is not a 32 character hex digest",
            args.digest
        ))
        .into());
    }
    let store = open_store(cli)?;
    let record = analytics::class_association(&args.digest, &store);
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&record)?);
        return Ok(());
    }
    println!(
        "apps {} (malicious {}, benign {}, unknown {})  weight {}",
        record.apps.len(),
        record.malicious_count,
        record.benign_count,
        record.unknown_count,
        record.api_count
    );
    if !record.permissions.is_empty() {
        let perms: Vec<&str> = record.permissions.iter().map(String::as_str).collect();
        println!("permissions: {}", perms.join(" "));
    }
    for app in &record.apps {
        println!("{app}");
    }
    Ok(())
}

fn cmd_db_add(cli: &Cli, args: &DbAddArgs) -> Result<()> {
    if args.inputs.is_empty() {
        return Err(opsig_core::Error::Config("no inputs given".into()).into());
    }
    let ctx = SignCtx::load(cli)?;
    let mut store = open_store(cli)?;
    for input in &args.inputs {
        let outcome = ctx.sign_path(input, args.keep_dead)?;
        let id = outcome.bundle.app_id.clone();
        let package = outcome.bundle.package.clone();
        store.insert(outcome.bundle)?;
        println!("added {id} ({package})");
        if args.with_nested {
            for nested in outcome.nested {
                let id = nested.app_id.clone();
                store.insert(nested)?;
                println!("added {id} (embedded)");
            }
        }
    }
    Ok(())
}

fn cmd_db_get(cli: &Cli, app_id: &str) -> Result<()> {
    let store = open_store(cli)?;
    let record = store.get(app_id).ok_or_else(|| {
        opsig_core::Error::Store(format!("app {app_id} not in store"))
    })?;
    if cli.json {
        println!("{}", serde_json::to_string_pretty(record)?);
    } else {
        println!("app_id   {}", record.bundle.app_id);
        println!("package  {}", record.bundle.package);
        println!("lev1     {}", record.bundle.lev1);
        println!("classes  {}", record.bundle.classes.len());
        println!("label    {}", record.label);
        println!("ingested {}", record.ingest_time);
    }
    Ok(())
}

fn cmd_db_freq(cli: &Cli) -> Result<()> {
    let store = open_store(cli)?;
    let freq = store.query_lev1_frequency();
    if cli.json {
        let rows: Vec<serde_json::Value> = freq
            .iter()
            .map(|(lev1, count)| {
                serde_json::json!({
                    "lev1": lev1,
                    "count": count,
                    "apps": store.apps_with_lev1(lev1),
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&rows)?);
        return Ok(());
    }
    for (lev1, count) in &freq {
        println!("{count:>6}  {lev1}  {}", store.apps_with_lev1(lev1).join(","));
    }
    Ok(())
}

fn cmd_db_labels(cli: &Cli, file: &Path) -> Result<()> {
    let document =
        fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let mut store = open_store(cli)?;
    let import = store.import_labels(&document)?;
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&import)?);
        return Ok(());
    }
    println!(
        "imported {} line(s), applied {}, {} unmatched",
        import.lines,
        import.applied,
        import.unmatched.len()
    );
    for id in &import.unmatched {
        println!("unmatched {id}");
    }
    Ok(())
}

fn cmd_zeroday(cli: &Cli, args: &ZerodayArgs) -> Result<()> {
    if args.inputs.is_empty() && !args.from_store {
        return Err(opsig_core::Error::Config(
            "no corpus: pass inputs or --from-store".into(),
        )
        .into());
    }

    let mut corpus: Vec<SignatureBundle> = Vec::new();
    let mut labels: BTreeMap<String, Label> = BTreeMap::new();
    if args.from_store {
        let store = open_store(cli)?;
        for record in store.records() {
            labels.insert(record.bundle.app_id.clone(), record.label);
            corpus.push(record.bundle.clone());
        }
    }
    for input in &args.inputs {
        let bundle = load_bundle_or_app(cli, input)?;
        let label = bundle
            .label
            .as_deref()
            .and_then(|l| l.parse().ok())
            .unwrap_or(Label::Unknown);
        labels.insert(bundle.app_id.clone(), label);
        corpus.push(bundle);
    }

    let whitelist: BTreeSet<String> = match args.whitelist.as_deref() {
        Some(path) => load_whitelist(path)?,
        None => BTreeSet::new(),
    };
    let cfg = ZeroDayConfig {
        threshold: args.threshold,
        min_cluster_size: args.min_cluster_size,
        max_malicious_fraction: args.max_malicious_fraction,
        whitelist,
    };
    let run = zeroday::cluster(&corpus, &cfg)?;
    let run = zeroday::flag_suspicious(run, &labels, &cfg);

    let json = serde_json::to_string_pretty(&run)?;
    if let Some(path) = args.out.as_deref() {
        fs::write(path, json.clone() + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if cli.json {
        println!("{json}");
        return Ok(());
    }
    let suspicious = run.verdicts.iter().filter(|v| v.suspicious).count();
    println!(
        "{} app(s), {} cluster(s), {} suspicious",
        corpus.len(),
        run.clusters.len(),
        suspicious
    );
    for (i, v) in run.verdicts.iter().enumerate() {
        println!(
            "cluster {i}: size {} malicious {}/{}{}",
            v.size,
            v.malicious_count,
            v.size,
            if v.suspicious { "  SUSPICIOUS" } else { "" }
        );
        if v.suspicious {
            for digest in &v.common_classes {
                println!("  common class {digest}");
            }
        }
    }
    Ok(())
}

fn load_whitelist(path: &Path) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut set = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !is_hex32(line) {
            return Err(opsig_core::Error::parse(
                idx + 1,
                format!("`{line}` is not a 32 character hex digest"),
            )
            .into());
        }
        set.insert(line.to_string());
    }
    Ok(set)
}

fn cmd_air_convert(cli: &Cli, input: &Path, out: Option<&Path>) -> Result<()> {
    let ctx = SignCtx::load(cli)?;
    let app = ctx.ingest(input)?;
    emit(out, &(ingest::air::to_json(&app) + "\n"))
}

fn cmd_air_check(cli: &Cli, input: &Path) -> Result<()> {
    let ctx = SignCtx::load(cli)?;
    let ingested = ingest_path(input, &ctx.table, ctx.alg)
        .with_context(|| format!("ingesting {}", input.display()))?;
    let app = &ingested.app;
    if cli.json {
        let summary = serde_json::json!({
            "app_id": app.app_id,
            "package": app.package,
            "classes": app.classes.len(),
            "methods": app.method_count(),
            "entry_points": app.entry_points.len(),
            "payloads": app.payloads.len(),
            "smali_files": ingested.stats.smali_files,
            "ignored_lines": ingested.stats.ignored_lines,
            "warnings": ingested.stats.warnings,
        });
        println!("{}", serde_json::to_string_pretty(&summary)?);
        return Ok(());
    }
    println!("app_id       {}", app.app_id);
    println!("package      {}", app.package);
    println!("classes      {}", app.classes.len());
    println!("methods      {}", app.method_count());
    println!("entry points {}", app.entry_points.len());
    println!("payloads     {}", app.payloads.len());
    for w in &ingested.stats.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
