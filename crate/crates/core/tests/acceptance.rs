//! Acceptance suite. Each criterion prints one PASS/FAIL line with its
//! runtime; the process exits nonzero if any criterion fails.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cogweb::agent::{
    evaluate_reward, run_episode, Action, AgentTask, EpisodeConfig, FixturePredicate, RewardCheck, ScriptedPolicy, ScrollTarget,
    Step, Termination, Thought, Trajectory,
};
use cogweb::browser::fake::{FakeBrowser, FIXTURE_PRODUCTS, FIXTURE_ROOT};
use cogweb::browser::instrumentation::InstrumentationBundle;
use cogweb::browser::{Browser, ScrollDirection, DEFAULT_SETTLE};
use cogweb::crawler::{crawl_site, read_store, write_store, CrawlConfig};
use cogweb::eval::{aggregate, rouge_l, rouge_l_tokens, validate_manifest, Score};
use cogweb::imaging::solid;
use cogweb::model::{ModelClient, ModelConfig, ScriptedChat};
use cogweb::observation::{compose_observation, AXNode, AXTree, Observation};
use cogweb::popup::{build_noisy_trajectory, enumerate_close_subsets, inject_popup_ax, JitterRanges, PopupAsset};
use cogweb::task::{Cognition, TaskFamily};
use cogweb::taskgen::{annotate, generate_from_store, generate_noisy_tasks, generate_popup_tasks, write_dataset, GenOptions};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

// Benchmark column order.
const FAMILIES: [TaskFamily; 8] = [
    TaskFamily::ElementAttributeRecognition,
    TaskFamily::NextPagePrediction,
    TaskFamily::SourceElementPrediction,
    TaskFamily::ElementUnderstanding,
    TaskFamily::WebpageUnderstanding,
    TaskFamily::UserIntentionPrediction,
    TaskFamily::PopupClose,
    TaskFamily::SingleStepWebTask,
];

struct PublishedRow {
    model: &'static str,
    scores: [f64; 8],
    overall: f64,
    /// Memorizing, Understanding, Exploring where published.
    cognition: Option<[f64; 3]>,
}

const ROWS: [PublishedRow; 5] = [
    PublishedRow { model: "Claude Sonnet 4", scores: [79.7, 93.5, 62.5, 62.8, 54.3, 64.7, 100.0, 96.8], overall: 76.8, cognition: None },
    PublishedRow { model: "Gemini 2.5 Pro", scores: [79.8, 94.6, 84.4, 62.6, 73.5, 51.9, 96.6, 98.4], overall: 80.2, cognition: None },
    PublishedRow {
        model: "Qwen2.5-VL-7B",
        scores: [53.2, 83.9, 65.6, 60.0, 62.0, 51.9, 91.4, 90.3],
        overall: 69.8,
        cognition: Some([67.6, 61.0, 77.9]),
    },
    PublishedRow { model: "UI-TARS-7B-SFT", scores: [63.5, 88.0, 31.3, 48.0, 48.0, 32.4, 25.9, 33.9], overall: 46.4, cognition: None },
    PublishedRow {
        model: "Fine-tuned 7B",
        scores: [91.4, 93.5, 87.5, 69.2, 79.0, 61.4, 98.3, 95.2],
        overall: 84.4,
        cognition: Some([90.8, 74.1, 85.0]),
    },
];

fn aggregation_reproduces_tables() -> Outcome {
    for row in &ROWS {
        let scores: Vec<Score> = FAMILIES.iter().zip(row.scores).map(|(f, v)| Score::from_value(*f, v)).collect();
        let report = aggregate(&scores).map_err(|e| e.to_string())?;
        ensure!(report.complete, "{}: report not complete", row.model);
        // Oracle: plain means over the cognition column groups.
        let s = row.scores;
        let oracle = [(s[0] + s[1] + s[2]) / 3.0, (s[3] + s[4]) / 2.0, (s[5] + s[6] + s[7]) / 3.0];
        let oracle_overall = s.iter().sum::<f64>() / 8.0;
        for (c, want) in Cognition::ALL.iter().zip(oracle) {
            let got = report.per_cognition[c];
            ensure!((got - want).abs() < 1e-9, "{}: {c:?} = {got}, oracle {want}", row.model);
        }
        let overall = report.overall.ok_or("no overall")?;
        ensure!((overall - oracle_overall).abs() < 1e-9, "{}: overall {overall}, oracle {oracle_overall}", row.model);
        ensure!((overall - row.overall).abs() <= 0.05, "{}: overall {overall} vs published {}", row.model, row.overall);
        ensure!(report.rounded().overall == Some(row.overall), "{}: rounded overall differs from published", row.model);
        if let Some(published) = row.cognition {
            for (c, want) in Cognition::ALL.iter().zip(published) {
                let got = report.per_cognition[c];
                ensure!((got - want).abs() <= 0.05, "{}: {c:?} {got} vs published {want}", row.model);
            }
        }
    }
    Ok(format!("{} rows; overall and reported cognition scores within 0.05", ROWS.len()))
}

fn bench_counts_fixture() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bench_counts.jsonl");
    let text = fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let report = validate_manifest(&text, true);
    ensure!(report.is_clean(), "errors {:?} flags {:?}", report.errors.first(), report.flags.first());
    let expected = [249, 93, 32, 200, 77, 105, 58, 62];
    for (f, n) in FAMILIES.iter().zip(expected) {
        let got = report.counts.get(f).copied().unwrap_or(0);
        ensure!(got == n, "{}: {got} items, expected {n}", f.as_str());
    }
    ensure!(report.total == 876, "total {}", report.total);
    Ok("8 families, total 876".into())
}

/// F1, precision and recall for (lcs, m, n), computed in exact rationals.
fn rational_prf(lcs: usize, m: usize, n: usize) -> (f64, f64, f64) {
    if lcs == 0 || m == 0 || n == 0 {
        return (0.0, 0.0, 0.0);
    }
    let p = Ratio::new(lcs as u64, m as u64);
    let r = Ratio::new(lcs as u64, n as u64);
    let f = Ratio::from_integer(2) * p * r / (p + r);
    let f64_of = |q: Ratio<u64>| *q.numer() as f64 / *q.denom() as f64;
    (f64_of(p), f64_of(r), f64_of(f))
}

fn check_rouge(a_len: usize, b_len: usize, got: &cogweb::eval::RougeL, lcs: usize) -> Result<(), String> {
    check_against(rational_prf(lcs, a_len, b_len), got, lcs)
}

fn check_against((p, r, f): (f64, f64, f64), got: &cogweb::eval::RougeL, lcs: usize) -> Result<(), String> {
    ensure!(got.lcs == lcs, "lcs {} vs oracle {lcs}", got.lcs);
    ensure!((got.f1 - f).abs() <= 1e-12, "f1 {} vs oracle {f}", got.f1);
    ensure!((got.precision - p).abs() <= 1e-12 && (got.recall - r).abs() <= 1e-12, "precision/recall mismatch");
    Ok(())
}

const ALPHABET: u8 = 3;
const MAX_LEN: usize = 8;

/// Brute force over the 3-letter language of words up to length 8: the LCS
/// of a and b is the longest subsequence of b that is also a subsequence
/// of a. Every word's subsequence set is enumerated from its 2^len masks.
struct SubsequenceOracle {
    words: Vec<Vec<u8>>,
    len_of: Vec<u8>,
    /// Distinct subsequence indices per word, longest first.
    subs: Vec<Vec<u16>>,
    /// Subsequence membership bitset per word.
    bits: Vec<Vec<u64>>,
}

impl SubsequenceOracle {
    fn new() -> Self {
        let mut offsets = vec![0usize];
        for l in 0..MAX_LEN {
            offsets.push(offsets[l] + (ALPHABET as usize).pow(l as u32));
        }
        let index = |w: &[u8]| offsets[w.len()] + w.iter().fold(0usize, |acc, &c| acc * ALPHABET as usize + c as usize);
        let mut words = Vec::new();
        for l in 0..=MAX_LEN {
            for v in 0..(ALPHABET as usize).pow(l as u32) {
                let mut w = vec![0u8; l];
                let mut x = v;
                for slot in w.iter_mut().rev() {
                    *slot = (x % ALPHABET as usize) as u8;
                    x /= ALPHABET as usize;
                }
                words.push(w);
            }
        }
        let total = words.len();
        let word_bits = total.div_ceil(64);
        let mut subs = Vec::with_capacity(total);
        let mut bits = Vec::with_capacity(total);
        for w in &words {
            let mut set = HashSet::new();
            for mask in 0u32..(1 << w.len()) {
                let s: Vec<u8> = w.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, c)| *c).collect();
                set.insert(index(&s) as u16);
            }
            let mut list: Vec<u16> = set.into_iter().collect();
            // Higher index means longer word.
            list.sort_unstable_by(|a, b| b.cmp(a));
            let mut b = vec![0u64; word_bits];
            for &s in &list {
                b[s as usize / 64] |= 1 << (s % 64);
            }
            subs.push(list);
            bits.push(b);
        }
        let len_of = words.iter().map(|w| w.len() as u8).collect();
        Self { words, len_of, subs, bits }
    }

    fn lcs(&self, a: usize, b: usize) -> usize {
        let bits = &self.bits[a];
        for &s in &self.subs[b] {
            if bits[s as usize / 64] & (1 << (s % 64)) != 0 {
                return self.len_of[s as usize] as usize;
            }
        }
        unreachable!("the empty word is common to every pair")
    }
}

/// Memoized recursive LCS over word tokens.
fn lcs_recursive(a: &[&str], b: &[&str]) -> usize {
    fn go(a: &[&str], b: &[&str], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(v) = memo.get(&(i, j)) {
            return *v;
        }
        let v = if a[i] == b[j] { 1 + go(a, b, i + 1, j + 1, memo) } else { go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo)) };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

fn rouge_oracle() -> Outcome {
    let oracle = SubsequenceOracle::new();
    let n = oracle.words.len();
    // Exact values for every (lcs, m, n) the exhaustive sweep can produce.
    let mut prf = vec![(0.0, 0.0, 0.0); (MAX_LEN + 1).pow(3)];
    for l in 0..=MAX_LEN {
        for m in 0..=MAX_LEN {
            for k in 0..=MAX_LEN {
                prf[(l * (MAX_LEN + 1) + m) * (MAX_LEN + 1) + k] = rational_prf(l, m, k);
            }
        }
    }
    let mut pairs = 0u64;
    for a in 0..n {
        for b in 0..n {
            let got = rouge_l_tokens(&oracle.words[a], &oracle.words[b]);
            let lcs = oracle.lcs(a, b);
            let (m, k) = (oracle.words[a].len(), oracle.words[b].len());
            check_against(prf[(lcs * (MAX_LEN + 1) + m) * (MAX_LEN + 1) + k], &got, lcs)
                .map_err(|e| format!("{:?} vs {:?}: {e}", oracle.words[a], oracle.words[b]))?;
            pairs += 1;
        }
    }
    let vocab = ["open", "the", "cart", "page", "menu", "red"];
    let mut rng = ChaCha8Rng::seed_from_u64(0x0c0ffee);
    for _ in 0..10_000 {
        let sentence = |rng: &mut ChaCha8Rng| {
            let len = rng.gen_range(9..=48);
            (0..len).map(|_| vocab[rng.gen_range(0..vocab.len())]).collect::<Vec<_>>()
        };
        let (a, b) = (sentence(&mut rng), sentence(&mut rng));
        let got = rouge_l(&a.join(" "), &b.join("  "));
        check_rouge(a.len(), b.len(), &got, lcs_recursive(&a, &b)).map_err(|e| format!("random pair: {e}"))?;
    }
    Ok(format!("{pairs} exhaustive pairs + 10000 random pairs agree at 1e-12"))
}

fn random_content(rng: &mut ChaCha8Rng) -> String {
    const POOL: &[char] = &['a', 'b', 'Z', '0', '7', ' ', ' ', '[', ']', '[', ']', '\t', '"', '\'', ',', 'é', '日', '-', ':'];
    let len = rng.gen_range(0..24);
    (0..len).map(|_| POOL[rng.gen_range(0..POOL.len())]).collect()
}

fn random_action(rng: &mut ChaCha8Rng, variant: usize) -> Action {
    let id = if rng.gen_bool(0.2) { rng.gen() } else { rng.gen_range(0..500) };
    let direction = if rng.gen() { ScrollDirection::Up } else { ScrollDirection::Down };
    match variant {
        0 => Action::Click(id),
        1 => Action::Type { id, content: random_content(rng) },
        2 => Action::Scroll { target: ScrollTarget::Window, direction },
        3 => Action::Scroll { target: ScrollTarget::Element(id), direction },
        4 => Action::DbClick(id),
        5 => Action::GoBack,
        6 => Action::GoForward,
        7 => Action::Stop(random_content(rng)),
        8 => Action::Restart,
        _ => Action::Wait,
    }
}

fn action_grammar() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut bracketed = 0;
    for i in 0..10_000 {
        let a = random_action(&mut rng, i % 10);
        let text = a.format();
        if matches!(&a, Action::Type { content, .. } | Action::Stop(content) if content.contains(['[', ']'])) {
            bracketed += 1;
        }
        let back = Action::parse(&text).map_err(|e| format!("{text:?}: {e}"))?;
        ensure!(back == a, "{text:?} parsed as {back:?}");
        ensure!(back.format() == text, "format not canonical for {text:?}");
    }
    ensure!(bracketed > 500, "only {bracketed} bracketed payloads generated");
    Ok(format!("10000 payloads over 10 variants ({bracketed} with bracketed content)"))
}

fn popup_combinatorics() -> Outcome {
    for n in 1..=10usize {
        let methods: Vec<usize> = (0..n).collect();
        let subsets = enumerate_close_subsets(&methods).map_err(|e| e.to_string())?;
        ensure!(subsets.len() == (1 << n) - 1, "n={n}: {} subsets", subsets.len());
        ensure!(subsets.iter().all(|s| !s.is_empty()), "n={n}: empty subset");
        let distinct: HashSet<_> = subsets.iter().collect();
        ensure!(distinct.len() == subsets.len(), "n={n}: duplicates");
        ensure!(subsets.iter().all(|s| s.windows(2).all(|w| w[0] < w[1])), "n={n}: members out of order");
    }
    ensure!(enumerate_close_subsets::<usize>(&[]).is_err(), "n=0 accepted");
    ensure!(enumerate_close_subsets(&[0usize; 11]).is_err(), "n=11 accepted");
    Ok("n=1..10 give 2^n-1 distinct nonempty subsets".into())
}

fn random_tree(rng: &mut ChaCha8Rng, root: &str, max_nodes: usize) -> AXTree {
    const ROLES: [&str; 6] = ["button", "link", "heading", "StaticText", "textbox", "menuitem"];
    const NAMES: [&str; 6] = ["", "Close", "OK", "Home", "Buy now", "x"];
    let mut nodes = vec![AXNode::new(root, NAMES[rng.gen_range(0..NAMES.len())], 0)];
    let mut prev = 0u32;
    for _ in 0..rng.gen_range(0..max_nodes) {
        let depth = rng.gen_range(1..=prev + 1);
        nodes.push(AXNode::new(ROLES[rng.gen_range(0..ROLES.len())], NAMES[rng.gen_range(0..NAMES.len())], depth));
        prev = depth;
    }
    AXTree::from_nodes(nodes).expect("generated depths are valid")
}

fn label_multiset(trees: &[&AXTree]) -> BTreeMap<(String, String), usize> {
    let mut m = BTreeMap::new();
    for t in trees {
        for n in t.nodes() {
            *m.entry((n.role.clone(), n.name.clone())).or_default() += 1;
        }
    }
    m
}

fn random_trajectory(rng: &mut ChaCha8Rng, len: usize) -> Trajectory {
    let steps = (0..len)
        .map(|i| {
            let shade = rng.gen::<u8>();
            let shot = solid(320, 200, image::Rgba([shade, 255 - shade, 90, 255]));
            let obs = Observation::new(shot, random_tree(rng, "RootWebArea", 12), format!("http://fixture.local/{i}"), i as u32 + 1);
            // Anything but stop, which may only end a trajectory.
            let variant = [0, 1, 2, 3, 4, 5, 6, 8, 9][rng.gen_range(0..9)];
            let action = random_action(rng, variant);
            Step { observation: obs, thought: Thought::empty(), raw_output: action.format(), action, note: None }
        })
        .collect();
    Trajectory {
        query: "q".into(),
        initial_url: "http://fixture.local/0".into(),
        steps,
        termination: Termination::Stopped,
        reward: 1,
        answer: None,
        rejected: vec![],
        error: None,
    }
}

fn ax_injection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..1000 {
        let page = random_tree(&mut rng, "RootWebArea", 40);
        let popup = random_tree(&mut rng, "dialog", 8);
        let inj = inject_popup_ax(&page, &popup, &mut rng).map_err(|e| e.to_string())?;
        let ids: Vec<u32> = inj.tree.nodes().iter().map(|n| n.id).collect();
        ensure!(ids == (0..inj.tree.len() as u32).collect::<Vec<_>>(), "case {case}: ids not consecutive");
        ensure!(inj.tree.len() == page.len() + popup.len(), "case {case}: node count");
        ensure!(label_multiset(&[&inj.tree]) == label_multiset(&[&page, &popup]), "case {case}: (role, name) multiset changed");
        let mut all: Vec<u32> = inj.page_ids.iter().chain(&inj.popup_ids).copied().collect();
        all.sort_unstable();
        ensure!(all == ids, "case {case}: id maps are not a bijection");
        for (old, new) in inj.page_ids.iter().enumerate() {
            let (a, b) = (&page.nodes()[old], &inj.tree.nodes()[*new as usize]);
            ensure!((&a.role, &a.name) == (&b.role, &b.name), "case {case}: page node {old} mislabeled");
        }
    }
    let assets = PopupAsset::builtin();
    let ranges = JitterRanges::default();
    for case in 0..200 {
        let len = rng.gen_range(1..=5);
        let traj = random_trajectory(&mut rng, len);
        let t = rng.gen_range(1..=len);
        let asset = &assets[case % assets.len()];
        let noisy = build_noisy_trajectory(&traj, asset, t, rng.gen(), &ranges).map_err(|e| e.to_string())?;
        ensure!(noisy.steps.len() == len + 1, "case {case}: {} steps from {len}", noisy.steps.len());
        for (i, (a, b)) in traj.steps[..t - 1].iter().zip(&noisy.steps).enumerate() {
            let same = a.observation.screenshot.as_raw() == b.observation.screenshot.as_raw()
                && a.observation.ax_text == b.observation.ax_text
                && a.raw_output == b.raw_output
                && a == b;
            ensure!(same, "case {case}: prefix step {i} changed");
        }
        for (a, b) in traj.steps[t - 1..].iter().zip(&noisy.steps[t..]) {
            ensure!(a.observation.screenshot.as_raw() == b.observation.screenshot.as_raw(), "case {case}: suffix image changed");
            ensure!(a.observation.step + 1 == b.observation.step && a.action == b.action, "case {case}: suffix step mismatch");
        }
        ensure!(noisy.is_well_formed(), "case {case}: malformed trajectory");
    }
    Ok("1000 injections; 200 noisy trajectories".into())
}

fn ax_id(b: &mut FakeBrowser, url: &str, role: &str, name: &str) -> Result<u32, String> {
    b.navigate(url, DEFAULT_SETTLE).map_err(|e| e.to_string())?;
    let obs = compose_observation(b, 1).map_err(|e| e.to_string())?;
    obs.ax.nodes().iter().find(|n| n.role == role && n.name == name).map(|n| n.id).ok_or(format!("no {role} '{name}'"))
}

fn episode_loop() -> Outcome {
    let task = AgentTask {
        task_id: "buy".into(),
        query: "Open the products page and buy the product".into(),
        start_url: FIXTURE_ROOT.into(),
        check: Some(FixturePredicate::All {
            of: vec![
                FixturePredicate::UrlEquals { url: FIXTURE_PRODUCTS.into() },
                FixturePredicate::AxContains { role: "StaticText".into(), name: "bought".into() },
            ],
        }),
    };
    let check = RewardCheck::Fixture(task.check.clone().unwrap());
    let cfg = EpisodeConfig { max_steps: 15, ..Default::default() };

    let mut b = FakeBrowser::fixture();
    let products = ax_id(&mut b, FIXTURE_ROOT, "link", "Products")?;
    let buy = ax_id(&mut b, FIXTURE_PRODUCTS, "button", "Buy")?;
    let mut policy = ScriptedPolicy::new([
        format!("## Final Action Summary\nOpen the product list.\nclick [{products}]"),
        format!("## Final Action Summary\nBuy it.\nclick [{buy}]"),
        "## Final Action Summary\nDone.\nstop [bought]".to_string(),
    ]);
    let mut traj = run_episode(&task, &mut policy, &mut b, &cfg);
    traj.reward = evaluate_reward(&traj, &check).map_err(|e| e.to_string())?;
    ensure!(
        (traj.termination, traj.steps.len(), traj.reward) == (Termination::Stopped, 3, 1),
        "scripted run: {:?} after {} steps, reward {}",
        traj.termination,
        traj.steps.len(),
        traj.reward
    );

    let mut b = FakeBrowser::fixture();
    let mut policy = ScriptedPolicy::repeating("scroll [WINDOW] [down]");
    let mut traj = run_episode(&task, &mut policy, &mut b, &cfg);
    traj.reward = evaluate_reward(&traj, &check).map_err(|e| e.to_string())?;
    ensure!(
        (traj.termination, traj.steps.len(), traj.reward) == (Termination::MaxSteps, 15, 0),
        "non-stopping run: {:?} after {} steps, reward {}",
        traj.termination,
        traj.steps.len(),
        traj.reward
    );

    let mut b = FakeBrowser::fixture();
    let mut policy = ScriptedPolicy::new(["I think I should look around.", "Hmm, maybe the menu?", "Not sure."]);
    let traj = run_episode(&task, &mut policy, &mut b, &cfg);
    ensure!(
        traj.termination == Termination::Error && traj.rejected.len() == 3 && policy.prompts.len() == 3,
        "garbage run: {:?}, {} rejected, {} prompts",
        traj.termination,
        traj.rejected.len(),
        policy.prompts.len()
    );
    Ok("stopped/1 in 3 steps; max_steps/0 at 15; error after 3 unparseable".into())
}

fn annotation_gating() -> Outcome {
    let client = |confs: &[f64]| {
        let chat = Arc::new(ScriptedChat::texts(confs.iter().map(|c| format!("{{\"text\": \"reply {c}\", \"confidence\": {c}}}"))));
        let cfg = ModelConfig { endpoint: "mock".into(), model_name: "annotator".into(), params: Default::default() };
        (ModelClient::new(chat.clone(), cfg), chat)
    };
    let (c, chat) = client(&[0.3, 0.4, 0.45]);
    let a = annotate(&[], "describe", &c, 0.5, 3).map_err(|e| e.to_string())?;
    ensure!(!a.accepted() && a.attempts == 3 && chat.requests().len() == 3, "low sequence: {a:?}");
    let (c, chat) = client(&[0.2, 0.8]);
    let a = annotate(&[], "describe", &c, 0.5, 3).map_err(|e| e.to_string())?;
    ensure!(a.accepted() && a.attempts == 2 && a.text == "reply 0.8" && chat.requests().len() == 2, "retry sequence: {a:?}");
    Ok("(0.3, 0.4, 0.45) rejected after 3; (0.2, 0.8) accepted at 2".into())
}

fn tree_bytes(dir: &Path) -> Result<Vec<(PathBuf, Vec<u8>)>, String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).map_err(|e| e.to_string())? {
            let p = e.map_err(|e| e.to_string())?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).map_err(|e| e.to_string())?));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn seeded_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut b = FakeBrowser::fixture();
    let cfg = CrawlConfig { input_settle: Duration::ZERO, ..Default::default() };
    let crawled = crawl_site(&mut b, FIXTURE_ROOT, &InstrumentationBundle::from_source(""), &cfg).map_err(|e| e.to_string())?;
    let site = write_store(&tmp.path().join("store"), &crawled).map_err(|e| e.to_string())?;
    let store = read_store(&site).map_err(|e| e.to_string())?;

    let mut browser = FakeBrowser::fixture();
    let products = ax_id(&mut browser, FIXTURE_ROOT, "link", "Products")?;
    let task = AgentTask { task_id: "t".into(), query: "Open products".into(), start_url: FIXTURE_ROOT.into(), check: None };
    let mut policy = ScriptedPolicy::new([format!("click [{products}]"), "scroll [WINDOW] [down]".into(), "stop [done]".into()]);
    browser.reset_history().map_err(|e| e.to_string())?;
    let traj = run_episode(&task, &mut policy, &mut browser, &EpisodeConfig::default());
    let trajs: BTreeMap<String, Trajectory> = [("t".to_string(), traj)].into();

    let assets = PopupAsset::builtin();
    let ranges = JitterRanges::default();
    let mut manifests = Vec::new();
    for run in ["a", "b"] {
        let opts = GenOptions { seed: 7, ..Default::default() };
        let tasks = generate_from_store(&store, &opts, None).map_err(|e| e.to_string())?;
        let mut popups = generate_popup_tasks(&store, &assets, 7, &ranges).map_err(|e| e.to_string())?;
        popups.extend(generate_noisy_tasks(&trajs, &assets, 7, &ranges).map_err(|e| e.to_string())?);
        let (t_dir, p_dir) = (tmp.path().join(run).join("tasks"), tmp.path().join(run).join("popups"));
        write_dataset(&t_dir, &tasks).map_err(|e| e.to_string())?;
        write_dataset(&p_dir, &popups).map_err(|e| e.to_string())?;
        manifests.push((tree_bytes(&t_dir)?, tree_bytes(&p_dir)?, tasks.items.len(), popups.items.len()));
    }
    let (a, b) = (&manifests[0], &manifests[1]);
    ensure!(a.2 > 0 && a.3 > 0, "nothing generated ({} tasks, {} popup tasks)", a.2, a.3);
    ensure!(a.0 == b.0, "gen-tasks output differs between runs");
    ensure!(a.1 == b.1, "synth-popups output differs between runs");
    Ok(format!("{} task files and {} popup files identical across runs", a.0.len(), a.1.len()))
}

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { name: "aggregation arithmetic", budget: Duration::from_secs(1), run: aggregation_reproduces_tables },
        Criterion { name: "bench manifest validation", budget: Duration::from_secs(1), run: bench_counts_fixture },
        Criterion { name: "ROUGE-L oracle equivalence", budget: Duration::from_secs(60), run: rouge_oracle },
        Criterion { name: "action grammar round trip", budget: Duration::from_secs(10), run: action_grammar },
        Criterion { name: "popup close combinatorics", budget: Duration::from_secs(1), run: popup_combinatorics },
        Criterion { name: "AX injection and noisy trajectories", budget: Duration::from_secs(30), run: ax_injection },
        Criterion { name: "episode loop", budget: Duration::from_secs(10), run: episode_loop },
        Criterion { name: "annotation gating", budget: Duration::from_secs(1), run: annotation_gating },
        Criterion { name: "seeded determinism", budget: Duration::from_secs(60), run: seeded_determinism },
    ];
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.budget => Err(format!("{detail}; took {elapsed:.2?}, budget {:?}", c.budget)),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS [{}] {} ({elapsed:.2?}): {detail}", i + 1, c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {} ({elapsed:.2?}): {why}", i + 1, c.name);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
