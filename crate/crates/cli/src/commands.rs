use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::{json, Value};

use cogweb::agent::{
    evaluate_reward, run_episode, write_trajectory, AgentTask, EpisodeConfig, ModelPolicy, RewardCheck, Termination, Trajectory,
};
use cogweb::browser::fake::{FakeBrowser, FakeSite, FIXTURE_ROOT};
use cogweb::browser::instrumentation::InstrumentationBundle;
use cogweb::browser::{resolve_endpoint, Browser, CdpSession, ConnectOptions};
use cogweb::crawler::{crawl_site, read_store, write_store, CrawlBudget, CrawlConfig};
use cogweb::eval::{aggregate, aggregate_means, validate_manifest, JudgeScale, Prediction, Report, Scorer, BENCH_COUNTS};
use cogweb::geometry::Viewport;
use cogweb::imaging;
use cogweb::model::{ChatMessage, JudgeRubric, ModelClient};
use cogweb::popup::{JitterRanges, PopupAsset};
use cogweb::task::{TaskFamily, TaskInstance};
use cogweb::taskgen::{
    convert_external, generate_from_store, generate_noisy_tasks, generate_popup_tasks, image_path, write_dataset, Dataset,
    ExternalSchema, GenOptions, Skip,
};

use crate::provenance::Provenance;
use crate::{BrowserArgs, Command, ModelArgs, Status};

pub fn dispatch(cmd: Command, argv: &[String]) -> Result<Status> {
    match cmd {
        Command::Crawl { browser, start_url, instrumentation, max_layers, max_elements, max_records, input_settle_ms, out } => {
            crawl(argv, &browser, start_url, instrumentation, max_layers, max_elements, max_records, input_settle_ms, &out)
        }
        Command::GenTasks { store, seed, families, model, next_page_open, threshold, max_attempts, external, out } => {
            gen_tasks(argv, store.as_deref(), seed, &families, &model, next_page_open, threshold, max_attempts, &external, &out)
        }
        Command::SynthPopups { store, trajectories, assets, seed, out } => {
            synth_popups(argv, store.as_deref(), trajectories.as_deref(), assets.as_deref(), seed, &out)
        }
        Command::RunAgent { tasks, model, browser, max_steps, window, judge_endpoint, judge_model, out } => {
            run_agent(argv, &tasks, &model, &browser, max_steps, window, judge_endpoint.as_deref(), &judge_model, &out)
        }
        Command::Eval { bench, predictions, model, judge_endpoint, judge_model, judge_scale, images_root, report, csv } => eval(
            argv,
            &bench,
            predictions.as_deref(),
            &model,
            judge_endpoint.as_deref(),
            &judge_model,
            &judge_scale,
            images_root,
            &report,
            csv.as_deref(),
        ),
        Command::Validate { bench, manifest } => validate(&manifest, bench),
        Command::Report { report, means, csv } => report_cmd(argv, report.as_deref(), means.as_deref(), csv.as_deref()),
    }
}

fn status(partial: bool) -> Status {
    if partial {
        Status::Partial
    } else {
        Status::Ok
    }
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).unwrap_or_default());
}

fn open_browser(b: &BrowserArgs) -> Result<Box<dyn Browser>> {
    let viewport = Viewport::new(b.viewport_width, b.viewport_height)
        .ok_or_else(|| anyhow!("invalid viewport {}x{}", b.viewport_width, b.viewport_height))?;
    if b.fake {
        return Ok(Box::new(FakeBrowser::new(FakeSite::fixture(), viewport)));
    }
    let endpoint = resolve_endpoint(b.cdp_endpoint.as_deref())
        .ok_or_else(|| anyhow!("no browser: pass --cdp-endpoint, set COGWEB_CDP, or use --fake"))?;
    let session = CdpSession::connect(&endpoint, ConnectOptions { viewport, ..Default::default() })
        .with_context(|| format!("connecting to {endpoint}"))?;
    Ok(Box::new(session))
}

fn model_client(m: &ModelArgs) -> Option<ModelClient> {
    m.model_endpoint.as_deref().map(|e| ModelClient::http(e, &m.model_name))
}

fn read_jsonl(path: &Path) -> Result<Vec<(usize, Result<Value, String>)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, serde_json::from_str(l).map_err(|e| e.to_string())))
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn crawl(
    argv: &[String],
    b: &BrowserArgs,
    start_url: Option<String>,
    instrumentation: Option<PathBuf>,
    max_layers: u32,
    max_elements: usize,
    max_records: usize,
    input_settle_ms: u64,
    out: &Path,
) -> Result<Status> {
    let start = match (start_url, b.fake) {
        (Some(u), _) => u,
        (None, true) => FIXTURE_ROOT.to_string(),
        (None, false) => bail!("--start-url is required"),
    };
    let bundle = if b.fake {
        // The fake site answers the collection entrypoint natively.
        InstrumentationBundle::from_source("")
    } else {
        InstrumentationBundle::resolve(instrumentation.as_deref())
            .context("reading instrumentation bundle")?
            .ok_or_else(|| anyhow!("no instrumentation bundle: pass --instrumentation or set COGWEB_INSTRUMENTATION"))?
    };
    let config = CrawlConfig {
        max_layers,
        budget: CrawlBudget { max_elements_per_page: max_elements, max_records },
        settle: Duration::from_millis(b.settle_ms),
        input_settle: Duration::from_millis(input_settle_ms),
    };
    let mut browser = open_browser(b)?;
    let store = crawl_site(&mut *browser, &start, &bundle, &config)?;
    let site_dir = write_store(out, &store)?;
    let inputs: Vec<&Path> = instrumentation.as_deref().into_iter().collect();
    Provenance::new("crawl", argv, None, &inputs)?.write(&site_dir)?;
    for f in &store.failures {
        tracing::warn!(failure = %f, "element skipped");
    }
    print_json(&json!({
        "site_dir": site_dir.display().to_string(),
        "records": store.records.len(),
        "pages": store.pages.len(),
        "failures": store.failures.len(),
    }));
    Ok(status(!store.failures.is_empty()))
}

fn parse_families(names: &[String]) -> Result<Option<Vec<TaskFamily>>> {
    if names.is_empty() {
        return Ok(None);
    }
    names.iter().map(|n| n.trim().parse::<TaskFamily>().map_err(|e| anyhow!(e))).collect::<Result<_>>().map(Some)
}

/// Converts one external corpus and pulls its images into the dataset.
fn external_dataset(spec: &str) -> Result<Dataset> {
    let (schema, path) = spec.split_once('=').ok_or_else(|| anyhow!("--external expects <schema>=<path>, got '{spec}'"))?;
    let schema: ExternalSchema = schema.parse().map_err(|e: String| anyhow!(e))?;
    let path = Path::new(path);
    let root = path.parent().unwrap_or(Path::new("."));
    let mut records = Vec::new();
    let mut out = Dataset::default();
    for (line, v) in read_jsonl(path)? {
        match v {
            Ok(v) => records.push(v),
            Err(e) => out.skipped.push(Skip {
                family: schema.family(),
                record: format!("{}:{line}", path.display()),
                reason: format!("invalid JSON: {e}"),
            }),
        }
    }
    let (items, errors) = convert_external(schema, &records);
    for e in errors {
        tracing::warn!(error = %e, "external record skipped");
        out.skipped.push(Skip { family: schema.family(), record: path.display().to_string(), reason: e.to_string() });
    }
    'items: for mut g in items {
        let mut images = Vec::new();
        let mut paths = Vec::new();
        for (i, p) in g.instance.inputs.images.iter().enumerate() {
            match imaging::load_png(&root.join(p)) {
                Ok(img) => {
                    let dst = image_path(&g.instance.task_id, &format!("input_{i:02}"));
                    paths.push(dst.clone());
                    images.push((dst, img));
                }
                Err(e) => {
                    out.skipped.push(Skip {
                        family: g.instance.family,
                        record: g.instance.task_id.clone(),
                        reason: format!("image {p}: {e}"),
                    });
                    continue 'items;
                }
            }
        }
        g.instance.inputs.images = paths;
        g.images = images;
        out.items.push(g);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn gen_tasks(
    argv: &[String],
    store: Option<&Path>,
    seed: u64,
    families: &[String],
    model: &ModelArgs,
    next_page_open: bool,
    threshold: f64,
    max_attempts: u32,
    external: &[String],
    out: &Path,
) -> Result<Status> {
    if store.is_none() && external.is_empty() {
        bail!("nothing to do: pass --store and/or --external");
    }
    let mut dataset = Dataset::default();
    let mut inputs: Vec<PathBuf> = Vec::new();
    if let Some(dir) = store {
        let st = read_store(dir).with_context(|| format!("reading store {}", dir.display()))?;
        let mut opts = GenOptions { seed, next_page_open, threshold, max_attempts, ..Default::default() };
        if let Some(f) = parse_families(families)? {
            opts.families = f.into_iter().collect();
        }
        let annotator = model_client(model);
        dataset.extend(generate_from_store(&st, &opts, annotator.as_ref())?);
        inputs.push(dir.to_path_buf());
    }
    for spec in external {
        dataset.extend(external_dataset(spec)?);
        if let Some((_, p)) = spec.split_once('=') {
            inputs.push(PathBuf::from(p));
        }
    }
    finish_dataset(argv, "gen-tasks", seed, &inputs, dataset, out)
}

fn finish_dataset(argv: &[String], command: &str, seed: u64, inputs: &[PathBuf], dataset: Dataset, out: &Path) -> Result<Status> {
    write_dataset(out, &dataset)?;
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    Provenance::new(command, argv, Some(seed), &refs)?.write(out)?;
    let mut counts: BTreeMap<TaskFamily, usize> = BTreeMap::new();
    for i in dataset.instances() {
        *counts.entry(i.family).or_default() += 1;
    }
    print_json(&json!({
        "out": out.display().to_string(),
        "instances": dataset.items.len(),
        "skipped": dataset.skipped.len(),
        "families": counts.iter().map(|(f, n)| (f.as_str().to_string(), json!(n))).collect::<serde_json::Map<_, _>>(),
    }));
    Ok(status(!dataset.skipped.is_empty()))
}

fn load_trajectories(root: &Path) -> Result<BTreeMap<String, Trajectory>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(root).with_context(|| format!("reading {}", root.display()))? {
        let dir = e?.path();
        if dir.join("trajectory.json").is_file() {
            let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let traj = cogweb::agent::read_trajectory(&dir).with_context(|| format!("reading {}", dir.display()))?;
            out.insert(name, traj);
        }
    }
    Ok(out)
}

fn synth_popups(
    argv: &[String],
    store: Option<&Path>,
    trajectories: Option<&Path>,
    assets: Option<&Path>,
    seed: u64,
    out: &Path,
) -> Result<Status> {
    if store.is_none() && trajectories.is_none() {
        bail!("nothing to do: pass --store and/or --trajectories");
    }
    let assets = match assets {
        Some(dir) => PopupAsset::load_all(dir).with_context(|| format!("loading popup assets from {}", dir.display()))?,
        None => PopupAsset::builtin(),
    };
    if assets.is_empty() {
        bail!("no popup assets found");
    }
    let ranges = JitterRanges::default();
    let mut dataset = Dataset::default();
    let mut inputs = Vec::new();
    if let Some(dir) = store {
        let st = read_store(dir).with_context(|| format!("reading store {}", dir.display()))?;
        dataset.extend(generate_popup_tasks(&st, &assets, seed, &ranges)?);
        inputs.push(dir.to_path_buf());
    }
    if let Some(dir) = trajectories {
        let trajs = load_trajectories(dir)?;
        dataset.extend(generate_noisy_tasks(&trajs, &assets, seed, &ranges)?);
        inputs.push(dir.to_path_buf());
    }
    finish_dataset(argv, "synth-popups", seed, &inputs, dataset, out)
}

#[allow(clippy::too_many_arguments)]
fn run_agent(
    argv: &[String],
    tasks_path: &Path,
    model: &ModelArgs,
    b: &BrowserArgs,
    max_steps: usize,
    window: usize,
    judge_endpoint: Option<&str>,
    judge_model: &str,
    out: &Path,
) -> Result<Status> {
    let client = model_client(model).ok_or_else(|| anyhow!("--model-endpoint is required"))?;
    let mut tasks = Vec::new();
    for (line, v) in read_jsonl(tasks_path)? {
        let v = v.map_err(|e| anyhow!("{}:{line}: {e}", tasks_path.display()))?;
        let t: AgentTask = serde_json::from_value(v).map_err(|e| anyhow!("{}:{line}: {e}", tasks_path.display()))?;
        tasks.push(t);
    }
    if tasks.is_empty() {
        bail!("{} holds no tasks", tasks_path.display());
    }
    let judge = judge_endpoint.map(|e| ModelClient::http(e, judge_model));
    let mut browser = open_browser(b)?;
    let mut policy = ModelPolicy { client };
    let config = EpisodeConfig { max_steps, window, settle: Duration::from_millis(b.settle_ms) };
    fs::create_dir_all(out)?;
    let mut results = String::new();
    let mut partial = false;
    let mut successes = 0usize;
    for task in &tasks {
        let mut traj = run_episode(task, &mut policy, &mut *browser, &config);
        let check = match (&task.check, &judge) {
            (Some(p), _) => Some(RewardCheck::Fixture(p.clone())),
            (None, Some(j)) => Some(RewardCheck::Judge { client: j.clone(), rubric: JudgeRubric::default() }),
            (None, None) => None,
        };
        let mut reward_error = None;
        match check.map(|c| evaluate_reward(&traj, &c)) {
            Some(Ok(r)) => traj.reward = r,
            Some(Err(e)) => reward_error = Some(e.to_string()),
            None => reward_error = Some("no check and no judge endpoint".into()),
        }
        if traj.termination == Termination::Error || reward_error.is_some() {
            partial = true;
        }
        successes += usize::from(traj.reward == 1);
        write_trajectory(&out.join(&task.task_id), &traj).with_context(|| format!("writing trajectory {}", task.task_id))?;
        tracing::info!(task = %task.task_id, steps = traj.steps.len(), reward = traj.reward, "episode finished");
        let line = json!({
            "task_id": task.task_id,
            "termination": traj.termination,
            "steps": traj.steps.len(),
            "reward": traj.reward,
            "answer": traj.answer,
            "error": traj.error,
            "reward_error": reward_error,
        });
        results.push_str(&line.to_string());
        results.push('\n');
    }
    fs::write(out.join("results.jsonl"), results)?;
    Provenance::new("run-agent", argv, None, &[tasks_path])?.write(out)?;
    print_json(&json!({
        "episodes": tasks.len(),
        "success_rate": 100.0 * successes as f64 / tasks.len() as f64,
        "out": out.display().to_string(),
    }));
    Ok(status(partial))
}

/// Text and images sent to a live model for one instance.
fn instance_messages(inst: &TaskInstance, root: &Path) -> Result<Vec<ChatMessage>> {
    let mut text = inst.inputs.prompt.clone();
    let mut paths: Vec<&String> = inst.inputs.images.iter().collect();
    if let Some(choices) = &inst.inputs.choices {
        text.push_str("\n\nCandidates:");
        for c in choices {
            match (&c.image, &c.text) {
                (Some(p), _) => {
                    paths.push(p);
                    text.push_str(&format!("\n{}: image {}", c.label, paths.len()));
                }
                (None, Some(t)) => text.push_str(&format!("\n{}: {t}", c.label)),
                (None, None) => text.push_str(&format!("\n{}", c.label)),
            }
        }
    }
    if let Some(ax) = &inst.inputs.ax_text {
        text.push_str("\n\nAccessibility tree:\n");
        text.push_str(ax);
    }
    let images = paths
        .into_iter()
        .map(|p| imaging::load_png(&root.join(p)).with_context(|| format!("loading {p}")))
        .collect::<Result<Vec<_>>>()?;
    Ok(vec![ChatMessage::system("You are a web agent answering questions about webpages."), ChatMessage::user(text).with_images(images)])
}

#[allow(clippy::too_many_arguments)]
fn eval(
    argv: &[String],
    bench: &Path,
    predictions: Option<&Path>,
    model: &ModelArgs,
    judge_endpoint: Option<&str>,
    judge_model: &str,
    judge_scale: &str,
    images_root: Option<PathBuf>,
    report_path: &Path,
    csv: Option<&Path>,
) -> Result<Status> {
    let scale = match judge_scale {
        "times20" => JudgeScale::Times20,
        "linear" => JudgeScale::Linear,
        other => bail!("unknown --judge-scale '{other}' (times20 or linear)"),
    };
    let live = model_client(model);
    if predictions.is_none() && live.is_none() {
        bail!("pass --predictions or --model-endpoint");
    }
    let root = images_root.unwrap_or_else(|| bench.parent().map(Path::to_path_buf).unwrap_or_default());
    let mut partial = false;
    let mut instances = Vec::new();
    for (line, v) in read_jsonl(bench)? {
        match v.and_then(|v| serde_json::from_value::<TaskInstance>(v).map_err(|e| e.to_string())) {
            Ok(i) => instances.push(i),
            Err(e) => {
                tracing::warn!(line, error = %e, "manifest line skipped");
                partial = true;
            }
        }
    }
    let mut preds: HashMap<String, String> = HashMap::new();
    let mut inputs = vec![bench];
    if let Some(p) = predictions {
        for (line, v) in read_jsonl(p)? {
            let pr: Prediction = v
                .and_then(|v| serde_json::from_value(v).map_err(|e| e.to_string()))
                .map_err(|e| anyhow!("{}:{line}: {e}", p.display()))?;
            preds.insert(pr.task_id, pr.prediction);
        }
        inputs.push(p);
    }
    let scorer = Scorer {
        judge: judge_endpoint.map(|e| ModelClient::http(e, judge_model)),
        rubric: JudgeRubric::default(),
        scale,
        images_root: Some(root.clone()),
    };
    let mut scores = Vec::new();
    let mut score_lines = String::new();
    for inst in &instances {
        let pred = match (&live, preds.get(&inst.task_id)) {
            (_, Some(p)) => p.clone(),
            (Some(client), None) => match instance_messages(inst, &root).and_then(|m| Ok(client.chat(m)?)) {
                Ok(p) => p,
                Err(e) => {
                    tracing::warn!(task = %inst.task_id, error = %format!("{e:#}"), "prediction failed");
                    partial = true;
                    continue;
                }
            },
            (None, None) => {
                tracing::warn!(task = %inst.task_id, "no prediction");
                partial = true;
                continue;
            }
        };
        match scorer.score(inst, &pred) {
            Ok(s) => {
                score_lines.push_str(&serde_json::to_string(&s)?);
                score_lines.push('\n');
                scores.push(s);
            }
            Err(e) => {
                tracing::warn!(task = %inst.task_id, error = %e, "scoring failed");
                partial = true;
            }
        }
    }
    let report = aggregate(&scores).map_err(|e| anyhow!("nothing scored: {e}"))?;
    write_report(report_path, &report, csv)?;
    let scores_path = report_path.with_extension("scores.jsonl");
    fs::write(&scores_path, score_lines)?;
    let prov = Provenance::new("eval", argv, None, &inputs)?;
    write_provenance_beside(report_path, &prov)?;
    print!("{}", table(&report));
    Ok(status(partial))
}

fn write_provenance_beside(path: &Path, prov: &Provenance) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = format!("{}.provenance.json", path.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default());
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), serde_json::to_string_pretty(prov)? + "\n")?;
    Ok(())
}

fn write_report(path: &Path, report: &Report, csv: Option<&Path>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(report)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    if let Some(c) = csv {
        fs::write(c, report.to_csv()).with_context(|| format!("writing {}", c.display()))?;
    }
    Ok(())
}

/// Human-readable one-decimal table.
pub fn table(report: &Report) -> String {
    let r = report.rounded();
    let mut s = String::new();
    for f in TaskFamily::ALL {
        if let Some(v) = r.per_task.get(&f) {
            let n = r.counts.get(&f).copied().unwrap_or(0);
            s.push_str(&format!("{:<32} {:>6.1}  (n={n})\n", f.as_str(), v));
        }
    }
    for (c, v) in &r.per_cognition {
        s.push_str(&format!("{:<32} {:>6.1}\n", c.to_string().to_lowercase(), v));
    }
    match r.overall {
        Some(v) => s.push_str(&format!("{:<32} {:>6.1}{}\n", "overall", v, if r.complete { "" } else { "  (incomplete)" })),
        None => s.push_str("overall                          n/a\n"),
    }
    s
}

fn validate(manifest: &Path, bench: bool) -> Result<Status> {
    let text = fs::read_to_string(manifest).with_context(|| format!("reading {}", manifest.display()))?;
    let rep = validate_manifest(&text, bench);
    for e in &rep.errors {
        println!("error line {}: {}", e.line, e.message);
    }
    for f in &rep.flags {
        println!("flag line {} ({}): {}", f.line, f.task_id, f.problem);
    }
    for (fam, n) in &rep.counts {
        println!("{:<32} {n}", fam.as_str());
    }
    println!("total {}", rep.total);
    if bench {
        for (fam, found, expected) in rep.count_mismatches(&BENCH_COUNTS) {
            println!("note: {} has {found} instances, reference count is {expected}", fam.as_str());
        }
    }
    Ok(status(!rep.is_clean()))
}

fn report_cmd(argv: &[String], report: Option<&Path>, means: Option<&Path>, csv: Option<&Path>) -> Result<Status> {
    let (rep, input) = match (report, means) {
        (_, Some(m)) => {
            let raw: BTreeMap<String, f64> = serde_json::from_str(&fs::read_to_string(m).with_context(|| format!("reading {}", m.display()))?)
                .with_context(|| format!("parsing {}", m.display()))?;
            let means = raw
                .into_iter()
                .map(|(k, v)| k.parse::<TaskFamily>().map(|f| (f, v)).map_err(|e| anyhow!(e)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            (aggregate_means(&means).map_err(|e| anyhow!("{e}"))?, m)
        }
        (Some(r), None) => {
            let rep: Report = serde_json::from_str(&fs::read_to_string(r).with_context(|| format!("reading {}", r.display()))?)
                .with_context(|| format!("parsing {}", r.display()))?;
            (rep, r)
        }
        (None, None) => bail!("pass --report or --means"),
    };
    if let Some(c) = csv {
        fs::write(c, rep.to_csv()).with_context(|| format!("writing {}", c.display()))?;
        write_provenance_beside(c, &Provenance::new("report", argv, None, &[input])?)?;
    }
    print!("{}", table(&rep));
    Ok(Status::Ok)
}
