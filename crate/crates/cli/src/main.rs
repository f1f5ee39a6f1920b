use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mohe::data::{ingest_items, ingest_sessions, path_label, to_jsonl, Ingested, ItemRecord};
use mohe::eup::{collect_label_pairs, eup_scores, eup_weighted_f1, EupTable, PairFilter};
use mohe::gradcheck::{run_suite, GradCheckConfig};
use mohe::metrics::{bootstrap_compare, compute_f1, segment_head_torso_tail, F1Report};
use mohe::model::{baseline_threads, Catalog, Framework, ModelConfig};
use mohe::par::Exec;
use mohe::pipeline::{Classifier, Prediction};
use mohe::reach::{comparison_table, fit_proportions, item_reachability, EtaConfig, ReachItem, ReachabilityReport};
use mohe::report::sig6;
use mohe::trainer::TrainConfig;
use mohe::{checkpoint, Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "mohe", version, about = "Multi-output headed ensemble text classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a classifier and write a checkpoint bundle plus training history.
    Train(TrainArgs),
    /// Predict classes for items with a saved checkpoint.
    Predict(PredictArgs),
    /// Score predictions against gold items.
    Eval(EvalArgs),
    /// EuP scores from sessions, optionally weighting per-genre F1.
    Eup(EupArgs),
    /// Item reachability for held-out items that were never bought.
    Reach(ReachArgs),
    /// Finite-difference gradient checks of every operator and a full model.
    Gradcheck(GradArgs),
}

#[derive(Args)]
struct Common {
    /// Abort once more than this many input lines fail to parse.
    #[arg(long, default_value_t = 0)]
    error_budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum CatalogArg {
    Ichiba,
    Sigir,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// JSON with optional `model` (ModelConfig) and `train` (TrainConfig) sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    items: PathBuf,
    /// Items scored after each evaluation epoch.
    #[arg(long)]
    heldout: Option<PathBuf>,
    /// Overrides the framework in the config.
    #[arg(long)]
    framework: Option<String>,
    /// Thread table used when the config has no model section.
    #[arg(long, value_enum, default_value = "sigir")]
    catalog: CatalogArg,
    /// Classes are genre paths truncated to this many levels.
    #[arg(long)]
    level: Option<usize>,
    /// Checkpoint directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    items: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Gold items.
    #[arg(long)]
    items: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    /// Second prediction file for a paired bootstrap comparison.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long)]
    level: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EupArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    sessions: PathBuf,
    /// Items carrying catalog genre paths.
    #[arg(long)]
    items: PathBuf,
    /// Items carrying provided (reference) genre paths; defaults to --items.
    #[arg(long)]
    provided: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    level: usize,
    /// `f1.json` from `eval`, for the EuP-weighted F1.
    #[arg(long)]
    f1: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReachArgs {
    #[command(flatten)]
    common: Common,
    /// Training items used for child proportions and concentrations.
    #[arg(long)]
    items: PathBuf,
    /// Held-out items; purchased or carted ones are skipped.
    #[arg(long)]
    heldout: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    /// `eup.json` written by the `eup` command at the same level.
    #[arg(long)]
    eup: PathBuf,
    #[arg(long)]
    level: usize,
    /// Second level, with its own EuP file, for a side-by-side table.
    #[arg(long, requires = "compare_eup")]
    compare_level: Option<usize>,
    #[arg(long)]
    compare_eup: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON ModelConfig; defaults to the seven-thread MoHE-2 table.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    framework: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Default, Deserialize, Serialize)]
struct RunConfig {
    model: Option<ModelConfig>,
    #[serde(default)]
    train: Option<TrainConfig>,
}

fn read_items(path: &Path, budget: usize) -> Result<Vec<ItemRecord>> {
    report_errors(path, ingest_items(path, budget)?)
}

fn report_errors<T>(path: &Path, ing: Ingested<T>) -> Result<Vec<T>> {
    for e in &ing.errors {
        eprintln!("{}: {e}", path.display());
    }
    Ok(ing.records)
}

fn read_predictions(path: &Path, budget: usize) -> Result<Vec<Prediction>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    let mut failures = 0;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(p) => out.push(p),
            Err(e) => {
                failures += 1;
                eprintln!("{}: line {}: {e}", path.display(), n + 1);
                if failures > budget {
                    return Err(Error::Parse { line: n + 1, message: e.to_string() });
                }
            }
        }
    }
    Ok(out)
}

fn predictions_by_id(preds: Vec<Prediction>) -> HashMap<String, String> {
    preds.into_iter().map(|p| (p.id, p.class)).collect()
}

fn train(a: TrainArgs) -> Result<()> {
    let run: RunConfig = match &a.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    let framework: Option<Framework> = a.framework.as_deref().map(str::parse).transpose()?;
    let catalog = match a.catalog {
        CatalogArg::Ichiba => Catalog::Ichiba,
        CatalogArg::Sigir => Catalog::Sigir,
    };
    let mut model = run
        .model
        .unwrap_or_else(|| ModelConfig::new(framework.unwrap_or(Framework::Mohe2), baseline_threads(catalog), 0));
    if let Some(f) = framework {
        model.framework = f;
    }
    if a.level.is_some() {
        model.label_level = a.level;
    }
    let mut tc = run.train.unwrap_or_default();
    tc.seed = a.common.seed;
    let items = read_items(&a.items, a.common.error_budget)?;
    let heldout = a.heldout.as_deref().map(|p| read_items(p, a.common.error_budget)).transpose()?;
    let (clf, history) = Classifier::fit(model, &items, heldout.as_deref(), &tc)?;
    checkpoint::save(&a.out, &clf)?;
    let mut buf = Vec::new();
    history.write_jsonl(&mut buf)?;
    fs::write(a.out.join("history.jsonl"), buf)?;
    for e in &history.epochs {
        let f1 = e.macro_f1.map(|f| format!("\tmacro_f1 {}", sig6(f))).unwrap_or_default();
        println!("epoch {}\tloss {}{f1}", e.epoch, sig6(e.mean_loss));
    }
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let clf = checkpoint::load(&a.model)?;
    let items = read_items(&a.items, a.common.error_budget)?;
    let preds = clf.predict(&items, Exec::Parallel)?;
    fs::write(&a.out, to_jsonl(&preds)?)?;
    println!("{} predictions written", preds.len());
    Ok(())
}

#[derive(Deserialize, Serialize)]
struct NamedF1 {
    classes: Vec<String>,
    report: F1Report,
}

impl NamedF1 {
    fn per_genre(&self) -> BTreeMap<String, f64> {
        self.classes.iter().cloned().zip(self.report.per_class.iter().map(|c| c.f1)).collect()
    }
}

fn eval(a: EvalArgs) -> Result<()> {
    let gold_items = read_items(&a.items, a.common.error_budget)?;
    let gold_names: Vec<String> = gold_items.iter().map(|it| path_label(&it.genre_path, a.level)).collect();
    let preds = predictions_by_id(read_predictions(&a.predictions, a.common.error_budget)?);
    let baseline = a
        .baseline
        .as_deref()
        .map(|p| read_predictions(p, a.common.error_budget).map(predictions_by_id))
        .transpose()?;
    let truncate = |c: &str| -> String {
        let parts: Vec<String> = c.split(" > ").map(str::to_string).collect();
        path_label(&parts, a.level)
    };
    let lookup = |m: &HashMap<String, String>, id: &str| -> Result<String> {
        m.get(id).map(|c| truncate(c)).ok_or_else(|| Error::Input(format!("no prediction for item {id}")))
    };
    let pred_names: Vec<String> = gold_items.iter().map(|it| lookup(&preds, &it.id)).collect::<Result<_>>()?;
    let base_names: Option<Vec<String>> = baseline
        .as_ref()
        .map(|b| gold_items.iter().map(|it| lookup(b, &it.id)).collect::<Result<_>>())
        .transpose()?;

    let mut classes: BTreeSet<String> = gold_names.iter().chain(&pred_names).cloned().collect();
    classes.extend(base_names.iter().flatten().cloned());
    let classes: Vec<String> = classes.into_iter().collect();
    let index = |n: &String| classes.binary_search(n).expect("class listed");
    let gold: Vec<usize> = gold_names.iter().map(index).collect();
    let pred: Vec<usize> = pred_names.iter().map(index).collect();
    let report = compute_f1(&pred, &gold, classes.len())?;

    fs::create_dir_all(&a.out)?;
    let named = NamedF1 { classes: classes.clone(), report };
    fs::write(a.out.join("f1.json"), serde_json::to_string_pretty(&named)? + "\n")?;
    let mut histogram = BTreeMap::new();
    for g in &gold_names {
        *histogram.entry(g.clone()).or_insert(0u64) += 1;
    }
    if !histogram.is_empty() {
        fs::write(a.out.join("segments.tsv"), segment_head_torso_tail(&histogram)?.to_table())?;
    }
    println!("micro_f1\t{}", sig6(named.report.micro_f1));
    println!("macro_f1\t{}", sig6(named.report.macro_f1));
    if let Some(base) = base_names {
        let b: Vec<usize> = base.iter().map(index).collect();
        let r = bootstrap_compare(&pred, &b, &gold, classes.len(), a.resamples, 0.95, a.common.seed, Exec::Parallel)?;
        fs::write(a.out.join("bootstrap.json"), serde_json::to_string_pretty(&r)? + "\n")?;
        println!(
            "delta_macro_f1\t{}\tinterval\t[{}, {}]\tsignificant\t{}",
            sig6(r.observed_delta),
            sig6(r.delta_interval.0),
            sig6(r.delta_interval.1),
            r.significant
        );
    }
    Ok(())
}

#[derive(Deserialize, Serialize)]
struct EupOutput {
    table: EupTable,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    weighted_f1: Option<f64>,
}

fn eup(a: EupArgs) -> Result<()> {
    let sessions = report_errors(&a.sessions, ingest_sessions(&a.sessions, a.common.error_budget)?)?;
    let labels = |items: Vec<ItemRecord>| -> HashMap<String, Vec<String>> {
        items.into_iter().map(|it| (it.id, it.genre_path)).collect()
    };
    let catalog = labels(read_items(&a.items, a.common.error_budget)?);
    let provided = match &a.provided {
        Some(p) => labels(read_items(p, a.common.error_budget)?),
        None => catalog.clone(),
    };
    let pairs = collect_label_pairs(&sessions, &catalog, &provided, PairFilter::default());
    let table = eup_scores(&pairs, a.level);
    let weighted_f1 = match &a.f1 {
        Some(p) => {
            let named: NamedF1 = serde_json::from_str(&fs::read_to_string(p)?)?;
            Some(eup_weighted_f1(&named.per_genre(), &table)?)
        }
        None => None,
    };
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("eup.tsv"), table.to_table())?;
    let out = EupOutput { table, weighted_f1 };
    fs::write(a.out.join("eup.json"), serde_json::to_string_pretty(&out)? + "\n")?;
    println!("pairs\t{}\tgenres\t{}", pairs.len(), out.table.entries.len());
    if let Some(w) = weighted_f1 {
        println!("eup_weighted_f1\t{}", sig6(w));
    }
    Ok(())
}

fn reach_at(
    a: &ReachArgs,
    train: &[ItemRecord],
    items: &[ReachItem],
    eup_path: &Path,
    level: usize,
) -> Result<ReachabilityReport> {
    let eup: EupOutput = serde_json::from_str(&fs::read_to_string(eup_path)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.common.seed);
    let props = fit_proportions(train, level, &EtaConfig::default(), &mut rng)?;
    let dir = a.out.join(format!("level{level}"));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("proportions.json"), serde_json::to_string_pretty(&props)? + "\n")?;
    let eligible: Vec<ReachItem> = items.iter().filter(|it| it.provided.len() > level).cloned().collect();
    let report = item_reachability(&eligible, &eup.table, &props, level)?;
    fs::write(dir.join("reach.tsv"), report.to_table())?;
    println!("level {level}\tmean {}\titems {}\tskipped {}", sig6(report.overall_mean()), eligible.len(), report.skipped);
    Ok(report)
}

fn reach(a: ReachArgs) -> Result<()> {
    let train = read_items(&a.items, a.common.error_budget)?;
    let heldout = read_items(&a.heldout, a.common.error_budget)?;
    let preds = predictions_by_id(read_predictions(&a.predictions, a.common.error_budget)?);
    let items: Vec<ReachItem> = heldout
        .iter()
        .filter(|it| !it.purchased_or_carted())
        .map(|it| ReachItem {
            id: it.id.clone(),
            provided: it.genre_path.clone(),
            predicted: preds.get(&it.id).map(|c| c.split(" > ").map(str::to_string).collect()).unwrap_or_default(),
        })
        .collect();
    let first = reach_at(&a, &train, &items, &a.eup, a.level)?;
    if let (Some(l2), Some(e2)) = (a.compare_level, a.compare_eup.as_deref()) {
        let second = reach_at(&a, &train, &items, e2, l2)?;
        let table = comparison_table(&[("classifier".to_string(), &first, &second)]);
        fs::write(a.out.join("comparison.tsv"), &table)?;
        print!("{table}");
    }
    Ok(())
}

fn gradcheck(a: GradArgs) -> Result<bool> {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => ModelConfig::new(Framework::Mohe2, baseline_threads(Catalog::Sigir), 10),
    };
    if let Some(f) = a.framework.as_deref() {
        cfg.framework = f.parse()?;
    }
    if cfg.num_classes == 0 {
        cfg.num_classes = 10;
    }
    cfg.validate()?;
    let vocab = vec![40; cfg.threads.len()];
    let meta_vocab = vec![20; cfg.meta_threads.len()];
    let gc = GradCheckConfig { seed: a.seed, ..GradCheckConfig::default() };
    let report = run_suite(&gc, &cfg, &vocab, &meta_vocab)?;
    if let Some(out) = &a.out {
        fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    for r in &report.results {
        let w = worst.entry(r.case.as_str()).or_insert(0.0);
        *w = w.max(r.max_rel_error);
    }
    for (case, w) in &worst {
        println!("{case}\t{}", sig6(*w));
    }
    println!(
        "points\t{}\tmax_rel_error\t{}\t{}",
        report.points(),
        sig6(report.max_rel_error()),
        if report.passed() { "PASS" } else { "FAIL" }
    );
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a).map(|_| true),
        Command::Predict(a) => predict(a).map(|_| true),
        Command::Eval(a) => eval(a).map(|_| true),
        Command::Eup(a) => eup(a).map(|_| true),
        Command::Reach(a) => reach(a).map(|_| true),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e @ Error::Usage(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
