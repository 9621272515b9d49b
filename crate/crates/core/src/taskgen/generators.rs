use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::prompts::{self, task_prompt, ELEMENT_SECTIONS, PAGE_SECTIONS};
use super::{annotate, derive_seed, image_path, Annotation, Dataset, Generated, Skip, TaskgenError};
use crate::agent::Trajectory;
use crate::crawler::{CrawlStore, InteractionRecord};
use crate::imaging::{self, draw_label, label_for, Image, MarkerStyle};
use crate::model::ModelClient;
use crate::observation::serialize_ax;
use crate::popup::{build_noisy_trajectory, synthesize_scene, JitterRanges, PopupAsset, SceneRecord};
use crate::task::{Choice, Gold, Metric, Provenance, TaskFamily, TaskInputs, TaskInstance};

pub const MIN_DISTRACTORS: usize = 3;
pub const MAX_DISTRACTORS: usize = 4;
pub const MIN_CANDIDATES: usize = 4;
pub const MAX_CANDIDATES: usize = 10;

fn task_id(family: TaskFamily, site: &str, key: &str) -> String {
    format!("{}-{site}-{key}", family.as_str())
}

fn provenance(generator: &str, record: &str, seed: Option<u64>) -> Provenance {
    Provenance { generator: generator.into(), record: Some(record.into()), seed, note: None }
}

fn inputs(family: TaskFamily, images: Vec<String>) -> TaskInputs {
    TaskInputs { images, prompt: task_prompt(family).into(), choices: None, ax_text: None }
}

/// Reference string for element attribute recognition.
pub fn attribute_gold(role: &str, name: &str) -> String {
    format!("role: {role}, name: {name}")
}

/// Inverse of [`attribute_gold`].
pub fn parse_attribute_reference(s: &str) -> Option<(String, String)> {
    let rest = s.trim().strip_prefix("role: ")?;
    let (role, name) = rest.split_once(", name: ")?;
    Some((role.to_string(), name.to_string()))
}

pub fn gen_element_attribute(site: &str, r: &InteractionRecord) -> Result<Generated, TaskgenError> {
    let (role, name) = (r.element.role.trim(), r.element.name.trim());
    if role.is_empty() || name.is_empty() {
        return Err(TaskgenError::SkipRecord("element has an empty role or name".into()));
    }
    let family = TaskFamily::ElementAttributeRecognition;
    let id = task_id(family, site, &r.id);
    let img = image_path(&id, "base_rect");
    let inst = TaskInstance::new(
        &id,
        family,
        Metric::RougeL,
        inputs(family, vec![img.clone()]),
        Gold::Text { value: attribute_gold(role, name) },
        provenance("element_attribute", &r.id, None),
    );
    Ok(Generated::new(inst, vec![(img, r.shots.base_rect.clone())]))
}

pub fn gen_subelements(site: &str, r: &InteractionRecord) -> Result<Generated, TaskgenError> {
    if r.diff.url_changed {
        return Err(TaskgenError::SkipRecord("click navigated away".into()));
    }
    if r.diff.added.is_empty() {
        return Err(TaskgenError::SkipRecord("click added no elements".into()));
    }
    let gold = r.diff.added.iter().map(|t| format!("{} '{}'", t.role, t.name)).collect::<Vec<_>>().join("\n");
    let family = TaskFamily::SubElementsPrediction;
    let id = task_id(family, site, &r.id);
    let img = image_path(&id, "base_rect");
    let inst = TaskInstance::new(
        &id,
        family,
        Metric::RougeL,
        inputs(family, vec![img.clone()]),
        Gold::Text { value: gold },
        provenance("subelements", &r.id, None),
    );
    Ok(Generated::new(inst, vec![(img, r.shots.base_rect.clone())]))
}

fn require_accepted(a: &Annotation) -> Result<(), TaskgenError> {
    if a.accepted() {
        Ok(())
    } else {
        Err(TaskgenError::AnnotationRejected { confidence: a.confidence, attempts: a.attempts })
    }
}

pub fn gen_page_change(site: &str, r: &InteractionRecord, a: &Annotation) -> Result<Generated, TaskgenError> {
    require_accepted(a)?;
    let family = TaskFamily::PageChangePrediction;
    let id = task_id(family, site, &r.id);
    let img = image_path(&id, "base_rect");
    let inst = TaskInstance::new(
        &id,
        family,
        Metric::RougeL,
        inputs(family, vec![img.clone()]),
        Gold::Text { value: a.text.clone() },
        provenance("page_change", &r.id, None),
    );
    Ok(Generated::new(inst, vec![(img, r.shots.base_rect.clone())]))
}

/// Multiple choice: the true post-click screenshot among 3 or 4 distractors
/// drawn from other distinct post-click pages of the store.
pub fn gen_next_page_mc(site: &str, store: &CrawlStore, r: &InteractionRecord, seed: u64) -> Result<Generated, TaskgenError> {
    let gold_hash = imaging::content_hash(&r.shots.click);
    let mut seen = BTreeSet::from([gold_hash]);
    let mut pool: Vec<&Image> = Vec::new();
    for o in &store.records {
        if seen.insert(imaging::content_hash(&o.shots.click)) {
            pool.push(&o.shots.click);
        }
    }
    if pool.len() < MIN_DISTRACTORS {
        return Err(TaskgenError::InsufficientDistractors { found: pool.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(MIN_DISTRACTORS..=MAX_DISTRACTORS.min(pool.len()));
    let mut options: Vec<(bool, &Image)> = pool.choose_multiple(&mut rng, k).map(|i| (false, *i)).collect();
    options.push((true, &r.shots.click));
    options.shuffle(&mut rng);

    let family = TaskFamily::NextPagePrediction;
    let id = task_id(family, site, &r.id);
    let base = image_path(&id, "base_rect");
    let mut images = vec![(base.clone(), r.shots.base_rect.clone())];
    let mut choices = Vec::new();
    let mut gold = String::new();
    for (i, (is_gold, img)) in options.into_iter().enumerate() {
        let label = label_for(i).to_string();
        let path = image_path(&id, &format!("choice_{label}"));
        images.push((path.clone(), img.clone()));
        if is_gold {
            gold = label.clone();
        }
        choices.push(Choice { label, image: Some(path), text: None });
    }
    let mut inp = inputs(family, vec![base]);
    inp.choices = Some(choices);
    let inst =
        TaskInstance::new(&id, family, Metric::Accuracy, inp, Gold::Choice { label: gold }, provenance("next_page_mc", &r.id, Some(seed)));
    Ok(Generated::new(inst, images))
}

/// Open-ended variant: describe the post-click page. Dataset only.
pub fn gen_next_page_open(site: &str, r: &InteractionRecord, a: &Annotation) -> Result<Generated, TaskgenError> {
    require_accepted(a)?;
    let family = TaskFamily::NextPagePrediction;
    let id = format!("{}-open", task_id(family, site, &r.id));
    let img = image_path(&id, "base_rect");
    let mut inp = inputs(family, vec![img.clone()]);
    inp.prompt = "Describe the page that will be shown after clicking the element highlighted by the red bounding box.".into();
    let inst = TaskInstance::new(&id, family, Metric::RougeL, inp, Gold::Text { value: a.text.clone() }, provenance("next_page_open", &r.id, None));
    Ok(Generated::new(inst, vec![(img, r.shots.base_rect.clone())]))
}

/// Sibling records usable as source-element candidates: distinct selector,
/// a visible box, and a post-click page different from the target's.
fn source_candidates<'a>(store: &'a CrawlStore, r: &'a InteractionRecord) -> Vec<&'a InteractionRecord> {
    let target_hash = imaging::content_hash(&r.shots.click);
    let (w, h) = r.shots.base.dimensions();
    let bounds = crate::geometry::Rect::new(0, 0, w, h);
    let mut seen_css = BTreeSet::from([r.element.css.clone()]);
    let mut out = Vec::new();
    for o in store.siblings(r) {
        if o.id == r.id || o.element.location.is_empty() || !bounds.contains(&o.element.location) {
            continue;
        }
        if imaging::content_hash(&o.shots.click) == target_hash || !seen_css.insert(o.element.css.clone()) {
            continue;
        }
        out.push(o);
    }
    out
}

/// Marks k labeled candidates (target included) on the pre-click page; the
/// model sees that and the post-click page and names the clicked label.
pub fn gen_source_element(site: &str, store: &CrawlStore, r: &InteractionRecord, seed: u64) -> Result<Generated, TaskgenError> {
    let others = source_candidates(store, r);
    let n = others.len() + 1;
    if r.element.location.is_empty() || n < MIN_CANDIDATES {
        return Err(TaskgenError::InsufficientCandidates { found: if r.element.location.is_empty() { 0 } else { n } });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(MIN_CANDIDATES..=MAX_CANDIDATES.min(n));
    let mut picked: Vec<&InteractionRecord> = others.choose_multiple(&mut rng, k - 1).copied().collect();
    picked.push(r);
    picked.shuffle(&mut rng);

    let mut marked = r.shots.base.clone();
    let mut markers = Vec::new();
    let mut choices = Vec::new();
    let mut gold = String::new();
    for (i, c) in picked.iter().enumerate() {
        let letter = label_for(i);
        let rect = c.element.location;
        imaging::draw_marker_in_place(&mut marked, rect, MarkerStyle::default())?;
        draw_label(&mut marked, rect, letter);
        if c.id == r.id {
            gold = letter.to_string();
        }
        markers.push((letter.to_string(), rect));
        choices.push(Choice { label: letter.to_string(), image: None, text: None });
    }
    let family = TaskFamily::SourceElementPrediction;
    let id = task_id(family, site, &r.id);
    let (pre, post) = (image_path(&id, "marked"), image_path(&id, "click"));
    let mut inp = inputs(family, vec![pre.clone(), post.clone()]);
    inp.choices = Some(choices);
    let inst =
        TaskInstance::new(&id, family, Metric::Accuracy, inp, Gold::Choice { label: gold }, provenance("source_element", &r.id, Some(seed)));
    let mut g = Generated::new(inst, vec![(pre, marked), (post, r.shots.click.clone())]);
    g.markers = markers;
    Ok(g)
}

/// Headings from `required` that do not appear in `text` (case-insensitive).
pub fn missing_sections(text: &str, required: &[&str]) -> Vec<String> {
    let lower = text.to_lowercase();
    required.iter().filter(|h| !lower.contains(&h.to_lowercase())).map(|h| h.to_string()).collect()
}

fn understanding(
    family: TaskFamily,
    site: &str,
    key: &str,
    record: &str,
    image: &Image,
    a: &Annotation,
    required: &[&str],
) -> Result<Generated, TaskgenError> {
    require_accepted(a)?;
    let missing = missing_sections(&a.text, required);
    if !missing.is_empty() {
        return Err(TaskgenError::MissingSections(missing));
    }
    let id = task_id(family, site, key);
    let img = image_path(&id, "input");
    let inst = TaskInstance::new(
        &id,
        family,
        Metric::LvmJudge,
        inputs(family, vec![img.clone()]),
        Gold::Text { value: a.text.clone() },
        provenance(family.as_str(), record, None),
    );
    Ok(Generated::new(inst, vec![(img, image.clone())]))
}

pub fn gen_element_understanding(site: &str, r: &InteractionRecord, a: &Annotation) -> Result<Generated, TaskgenError> {
    understanding(TaskFamily::ElementUnderstanding, site, &r.id, &r.id, &r.shots.base_rect, a, &ELEMENT_SECTIONS)
}

/// Page-scope variant; `r` supplies the page screenshot.
pub fn gen_webpage_understanding(site: &str, page_key: &str, r: &InteractionRecord, a: &Annotation) -> Result<Generated, TaskgenError> {
    understanding(TaskFamily::WebpageUnderstanding, site, page_key, &r.id, &r.shots.base, a, &PAGE_SECTIONS)
}

/// Popup composited over the record's pre-click page, with the merged tree as
/// text and every closing subset as gold.
pub fn gen_popup_close(
    site: &str,
    key: &str,
    r: &InteractionRecord,
    asset: &PopupAsset,
    seed: u64,
    ranges: &JitterRanges,
) -> Result<Generated, TaskgenError> {
    let scene = synthesize_scene(&r.shots.base, &r.pre_ax, asset, seed, ranges)?;
    let family = TaskFamily::PopupClose;
    let id = task_id(family, site, key);
    let img = image_path(&id, "popup");
    let mut inp = inputs(family, vec![img.clone()]);
    inp.ax_text = Some(serialize_ax(&scene.injection.tree));
    let mut src = provenance("popup_close", &r.id, Some(seed));
    let rec = SceneRecord { asset: asset.name.clone(), placement: scene.placement, methods: scene.methods.clone() };
    src.note = Some(serde_json::to_string(&rec).expect("scene record serializes"));
    let inst = TaskInstance::new(
        &id,
        family,
        Metric::Accuracy,
        inp,
        Gold::Strategies { methods: scene.methods, sets: scene.strategies },
        src,
    );
    Ok(Generated::new(inst, vec![(img, scene.image)]))
}

/// Trajectory with a popup inserted before step `t` (1-based); gold is the
/// full action sequence including the dismissal.
pub fn gen_noisy_multistep(
    key: &str,
    traj: &Trajectory,
    asset: &PopupAsset,
    t: usize,
    seed: u64,
    ranges: &JitterRanges,
) -> Result<Generated, TaskgenError> {
    let noisy = build_noisy_trajectory(traj, asset, t, seed, ranges)?;
    let family = TaskFamily::NoisyMultiStepWebTask;
    let id = format!("{}-{key}", family.as_str());
    let mut images = Vec::new();
    for s in &noisy.steps {
        images.push((image_path(&id, &format!("step_{:03}", s.observation.step)), s.observation.screenshot.clone()));
    }
    let mut inp = inputs(family, images.iter().map(|(p, _)| p.clone()).collect());
    inp.prompt = format!("{}\nTask: {}", inp.prompt, traj.query);
    inp.ax_text = Some(noisy.steps[t - 1].observation.ax_text.clone());
    let mut src = provenance("noisy_multistep", key, Some(seed));
    src.note = Some(format!("popup {} before step {t}", asset.name));
    let inst = TaskInstance::new(
        &id,
        family,
        Metric::SuccessRate,
        inp,
        Gold::ActionSequence { actions: noisy.steps.iter().map(|s| s.action.format()).collect() },
        src,
    );
    Ok(Generated::new(inst, images))
}

#[derive(Debug, Clone)]
pub struct GenOptions {
    pub seed: u64,
    pub families: BTreeSet<TaskFamily>,
    /// Also emit the open-ended next-page variant.
    pub next_page_open: bool,
    pub threshold: f64,
    pub max_attempts: u32,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            families: [
                TaskFamily::ElementAttributeRecognition,
                TaskFamily::SubElementsPrediction,
                TaskFamily::PageChangePrediction,
                TaskFamily::NextPagePrediction,
                TaskFamily::SourceElementPrediction,
                TaskFamily::ElementUnderstanding,
                TaskFamily::WebpageUnderstanding,
            ]
            .into(),
            next_page_open: false,
            threshold: super::ACCEPT_THRESHOLD,
            max_attempts: super::MAX_ANNOTATION_ATTEMPTS,
        }
    }
}

/// First record of each distinct pre-click page, keyed `p000`, `p001`, ...
pub fn page_sources(store: &CrawlStore) -> Vec<(String, &InteractionRecord)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in &store.records {
        if seen.insert((r.pre_url.clone(), r.chain.clone())) {
            out.push((format!("p{:03}", out.len()), r));
        }
    }
    out
}

struct Collector<'a> {
    out: Dataset,
    annotator: Option<&'a ModelClient>,
    threshold: f64,
    max_attempts: u32,
}

impl Collector<'_> {
    fn push(&mut self, family: TaskFamily, record: &str, res: Result<Generated, TaskgenError>) -> Result<(), TaskgenError> {
        match res {
            Ok(g) => self.out.items.push(g),
            Err(e @ TaskgenError::AnnotatorUnreachable(_)) => return Err(e),
            Err(e) => self.out.skipped.push(Skip { family, record: record.into(), reason: e.to_string() }),
        }
        Ok(())
    }

    fn annotate(&self, images: &[Image], prompt: &str) -> Result<Annotation, TaskgenError> {
        match self.annotator {
            Some(c) => annotate(images, prompt, c, self.threshold, self.max_attempts),
            None => Err(TaskgenError::SkipRecord("no annotator configured".into())),
        }
    }
}

/// Runs every selected generator over the store. Per-record failures become
/// skips; an unreachable annotator aborts.
pub fn generate_from_store(store: &CrawlStore, opts: &GenOptions, annotator: Option<&ModelClient>) -> Result<Dataset, TaskgenError> {
    let mut c = Collector { out: Dataset::default(), annotator, threshold: opts.threshold, max_attempts: opts.max_attempts };
    let site = store.site.as_str();
    let wants = |f: TaskFamily| opts.families.contains(&f);
    for r in &store.records {
        let rid = r.id.as_str();
        if wants(TaskFamily::ElementAttributeRecognition) {
            c.push(TaskFamily::ElementAttributeRecognition, rid, gen_element_attribute(site, r))?;
        }
        if wants(TaskFamily::SubElementsPrediction) {
            c.push(TaskFamily::SubElementsPrediction, rid, gen_subelements(site, r))?;
        }
        if wants(TaskFamily::PageChangePrediction) {
            let res = c
                .annotate(&[r.shots.base_rect.clone(), r.shots.click.clone()], prompts::ANNOTATE_PAGE_CHANGE)
                .and_then(|a| gen_page_change(site, r, &a));
            c.push(TaskFamily::PageChangePrediction, rid, res)?;
        }
        if wants(TaskFamily::NextPagePrediction) {
            let seed = derive_seed(opts.seed, &format!("next_page/{rid}"));
            c.push(TaskFamily::NextPagePrediction, rid, gen_next_page_mc(site, store, r, seed))?;
            if opts.next_page_open {
                let res = c.annotate(std::slice::from_ref(&r.shots.click), prompts::ANNOTATE_NEXT_PAGE).and_then(|a| gen_next_page_open(site, r, &a));
                c.push(TaskFamily::NextPagePrediction, rid, res)?;
            }
        }
        if wants(TaskFamily::SourceElementPrediction) {
            let seed = derive_seed(opts.seed, &format!("source/{rid}"));
            c.push(TaskFamily::SourceElementPrediction, rid, gen_source_element(site, store, r, seed))?;
        }
        if wants(TaskFamily::ElementUnderstanding) {
            let res = c
                .annotate(std::slice::from_ref(&r.shots.base_rect), &prompts::annotate_element())
                .and_then(|a| gen_element_understanding(site, r, &a));
            c.push(TaskFamily::ElementUnderstanding, rid, res)?;
        }
    }
    if wants(TaskFamily::WebpageUnderstanding) {
        for (key, r) in page_sources(store) {
            let res = c.annotate(std::slice::from_ref(&r.shots.base), &prompts::annotate_page()).and_then(|a| gen_webpage_understanding(site, &key, r, &a));
            c.push(TaskFamily::WebpageUnderstanding, &r.id, res)?;
        }
    }
    Ok(c.out)
}

/// One popup-close instance per distinct page; the asset is chosen by the
/// page's derived seed.
pub fn generate_popup_tasks(store: &CrawlStore, assets: &[PopupAsset], seed: u64, ranges: &JitterRanges) -> Result<Dataset, TaskgenError> {
    if assets.is_empty() {
        return Err(crate::popup::PopupError::InvalidAsset("no popup assets".into()).into());
    }
    let mut out = Dataset::default();
    for (key, r) in page_sources(store) {
        let s = derive_seed(seed, &format!("popup/{key}"));
        let asset = &assets[(s % assets.len() as u64) as usize];
        match gen_popup_close(&store.site, &key, r, asset, s, ranges) {
            Ok(g) => out.items.push(g),
            Err(e) => out.skipped.push(Skip { family: TaskFamily::PopupClose, record: r.id.clone(), reason: e.to_string() }),
        }
    }
    Ok(out)
}

/// Noisy variants of recorded trajectories; the insertion step and asset
/// come from each trajectory's derived seed.
pub fn generate_noisy_tasks(
    trajectories: &BTreeMap<String, Trajectory>,
    assets: &[PopupAsset],
    seed: u64,
    ranges: &JitterRanges,
) -> Result<Dataset, TaskgenError> {
    if assets.is_empty() {
        return Err(crate::popup::PopupError::InvalidAsset("no popup assets".into()).into());
    }
    let mut out = Dataset::default();
    for (key, traj) in trajectories {
        let s = derive_seed(seed, &format!("noisy/{key}"));
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        if traj.steps.is_empty() {
            out.skipped.push(Skip { family: TaskFamily::NoisyMultiStepWebTask, record: key.clone(), reason: "empty trajectory".into() });
            continue;
        }
        let t = rng.gen_range(1..=traj.steps.len());
        let asset = &assets[rng.gen_range(0..assets.len())];
        match gen_noisy_multistep(key, traj, asset, t, rng.gen(), ranges) {
            Ok(g) => out.items.push(g),
            Err(e) => out.skipped.push(Skip { family: TaskFamily::NoisyMultiStepWebTask, record: key.clone(), reason: e.to_string() }),
        }
    }
    Ok(out)
}
