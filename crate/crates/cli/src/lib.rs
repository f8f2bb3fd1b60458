//! The `gutcheck` command line. Every subcommand is a plain function over its
//! argument struct, so tests can drive the pipeline in-process.

use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gutcheck_core::augment::DiffAugmentPolicy;
use gutcheck_core::classifier::{cross_validate, Classifier, ClassifierConfig, CvResult, GanSources};
use gutcheck_core::explain::{average_heatmap, grad_cam};
use gutcheck_core::fid::{fid_report, FeatureExtractor, FidResult, PixelGrid, ToyEncoder};
use gutcheck_core::gan::{self, load_checkpoint, train_gan_with, Backend, GanConfig, GeneratorState};
use gutcheck_core::inception::InceptionV3;
use gutcheck_core::report::{self, ExperimentRecord};
use gutcheck_core::synth::{planted_dataset, two_mode_dataset, PlantedConfig};
use gutcheck_core::{
    dataset::write_image_folder, load_dataset, make_split, standardize, ClassSet, ImageSample, LabelClass, Pixels,
    Source, SplitPlan,
};
use gutcheck_nn::Container;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Parser)]
#[command(name = "gutcheck", version, about = "GAN-augmented stool image classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labelled image folder.
    Synth(SynthArgs),
    /// Fixed test set plus stratified folds, as JSON.
    Split(SplitArgs),
    TrainGan(TrainGanArgs),
    SampleGan(SampleGanArgs),
    Fid(FidArgs),
    /// Cross-validated classifier training.
    TrainClf(TrainClfArgs),
    Gradcam(GradcamArgs),
    Report(ReportArgs),
    /// Package a trained fold model for serving.
    Export(ExportArgs),
    Serve(ServeArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Split(a) => split(&a),
        Command::TrainGan(a) => train_gan(&a),
        Command::SampleGan(a) => sample_gan(&a),
        Command::Fid(a) => fid(&a),
        Command::TrainClf(a) => train_clf(&a),
        Command::Gradcam(a) => gradcam(&a),
        Command::Report(a) => report(&a),
        Command::Export(a) => export(&a),
        Command::Serve(a) => serve(&a),
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}

fn class_set(n: usize) -> Result<ClassSet> {
    Ok(ClassSet::for_count(n)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p)?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

/// Image files directly inside `dir`, sorted by name.
fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    files.sort();
    Ok(files)
}

fn load_image(path: &Path) -> Result<Pixels> {
    let img = image::open(path).with_context(|| format!("decoding {}", path.display()))?;
    Ok(standardize(&img)?)
}

/// Loads every id of the plan from the dataset root.
fn load_split_samples(data: &Path, classes: &ClassSet, plan: &SplitPlan) -> Result<Vec<ImageSample>> {
    let manifest = load_dataset(data, classes)?;
    for w in &manifest.warnings {
        log::warn!("{w}");
    }
    let mut ids = plan.test_ids.clone();
    ids.extend(plan.folds.iter().flatten().cloned());
    Ok(manifest.load_samples(&ids)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Class decided by a blob at the image centre.
    Planted,
    /// Two visual modes, written under `normal/`.
    TwoMode,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 60)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, value_enum, default_value_t = SynthKind::Planted)]
    pub kind: SynthKind,
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let samples = match a.kind {
        SynthKind::Planted => {
            let classes = class_set(a.classes)?;
            planted_dataset(classes.classes(), a.per_class, a.seed, &PlantedConfig::default())
        }
        SynthKind::TwoMode => two_mode_dataset(a.per_class, a.seed),
    };
    write_image_folder(&a.out, &samples)?;
    log::info!("wrote {} images to {}", samples.len(), a.out.display());
    Ok(())
}

/// `class=value` pairs separated by commas.
fn parse_class_map<T: std::str::FromStr>(s: &str) -> Result<BTreeMap<LabelClass, T>>
where
    T::Err: std::fmt::Display,
{
    let mut out = BTreeMap::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .with_context(|| format!("expected class=value, got `{part}`"))?;
        let class: LabelClass = k.trim().parse()?;
        let value = v.trim().parse::<T>().map_err(|e| anyhow::anyhow!("bad value for {class}: {e}"))?;
        out.insert(class, value);
    }
    Ok(out)
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    /// Per-class test counts, e.g. `abnormal=60,normal=60,no_stool=40`.
    #[arg(long)]
    pub test: String,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the dataset manifest as CSV.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

pub fn split(a: &SplitArgs) -> Result<()> {
    let classes = class_set(a.classes)?;
    let manifest = load_dataset(&a.data, &classes)?;
    let tests: BTreeMap<LabelClass, usize> = parse_class_map(&a.test)?;
    let plan = make_split(&manifest, &tests, a.k, a.seed)?;
    write_json(&a.out, &plan)?;
    if let Some(m) = &a.manifest {
        fs::write(m, manifest.to_csv()?)?;
    }
    log::info!("{} test ids, {} folds of {:?}", plan.test_ids.len(), plan.k, plan.folds.iter().map(Vec::len).collect::<Vec<_>>());
    Ok(())
}

/// Written next to a GAN checkpoint: which real images it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingData {
    pub classes: Vec<LabelClass>,
    pub n_images: usize,
}

const TRAINING_DATA_FILE: &str = "training_data.json";

#[derive(Debug, Args)]
pub struct TrainGanArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// dcgan, cgan or stylegan2_diffaug.
    #[arg(long)]
    pub backend: String,
    /// Class to train on, or `all` (the default for cgan).
    #[arg(long)]
    pub class: Option<String>,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    /// Restrict training images to the non-test ids of this split.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    /// DiffAugment transforms, e.g. `translation,cutout,color`.
    #[arg(long)]
    pub diffaug: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn train_gan(a: &TrainGanArgs) -> Result<()> {
    let backend = Backend::parse(&a.backend)?;
    let classes = class_set(a.classes)?;
    let mut cfg = GanConfig::new(backend);
    cfg.classes = classes.clone();
    cfg.resolution = a.resolution;
    cfg.steps = a.steps;
    cfg.seed = a.seed;
    cfg.checkpoint_every = a.checkpoint_every;
    if let Some(w) = a.width {
        cfg.width = w;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(l) = a.latent_dim {
        cfg.latent_dim = l;
    }
    if let Some(lr) = a.lr {
        cfg.lr_g = lr;
        cfg.lr_d = lr;
    }
    if let Some(list) = &a.diffaug {
        let p = DiffAugmentPolicy::parse(list)?;
        cfg.diffaugment = (!p.is_empty()).then_some(p);
    }
    let train_classes: Vec<LabelClass> = match a.class.as_deref() {
        None | Some("all") => {
            if !backend.is_conditional() {
                bail!("--class is required for the unconditional {} backend", backend.as_str());
            }
            classes.classes().to_vec()
        }
        Some(c) => vec![c.parse()?],
    };
    let manifest = load_dataset(&a.data, &classes)?;
    let ids: Vec<String> = match &a.split {
        Some(p) => {
            let plan: SplitPlan = read_json(p)?;
            plan.folds.iter().flatten().cloned().collect()
        }
        None => manifest.entries.iter().map(|e| e.id.clone()).collect(),
    };
    let ids: Vec<String> = ids
        .into_iter()
        .filter(|id| manifest.entry(id).is_some_and(|e| train_classes.contains(&e.label)))
        .collect();
    let samples = manifest.load_samples(&ids)?;
    log::info!("training {} on {} images", backend.as_str(), samples.len());
    let (_, log) = train_gan_with(&samples, &cfg, None, Some(&a.out))?;
    write_json(
        &a.out.join(TRAINING_DATA_FILE),
        &TrainingData {
            classes: train_classes,
            n_images: samples.len(),
        },
    )?;
    if let Some(last) = log.entries.last() {
        log::info!("step {}: d_loss {:.4} g_loss {:.4}", last.step, last.d_loss, last.g_loss);
    }
    Ok(())
}

fn training_data(ckpt: &Path) -> Option<TrainingData> {
    read_json(&ckpt.join(TRAINING_DATA_FILE)).ok()
}

#[derive(Debug, Args)]
pub struct SampleGanArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Class to generate; required for cgan.
    #[arg(long)]
    pub label: Option<LabelClass>,
    #[arg(long)]
    pub out: PathBuf,
}

/// File name of a generated image.
pub fn sample_file_name(backend: Backend, label: &str, seed: u64, i: usize) -> String {
    format!("{}_{label}_{seed}_{i}.png", backend.as_str())
}

/// Splits `<backend>_<label>_<seed>_<i>.png` back into its parts.
pub fn parse_sample_file_name(name: &str) -> Option<(String, LabelClass, u64, usize)> {
    let stem = name.strip_suffix(".png")?;
    let (rest, i) = stem.rsplit_once('_')?;
    let (rest, seed) = rest.rsplit_once('_')?;
    let (i, seed) = (i.parse().ok()?, seed.parse().ok()?);
    LabelClass::ALL.iter().find_map(|&c| {
        let backend = rest.strip_suffix(c.as_str())?.strip_suffix('_')?;
        (!backend.is_empty()).then(|| (backend.to_string(), c, seed, i))
    })
}

pub fn sample_gan(a: &SampleGanArgs) -> Result<()> {
    let state = load_checkpoint(&a.ckpt)?;
    let backend = state.config.backend;
    let (lib_label, name_label) = if backend.is_conditional() {
        let l = a.label.context("--label is required for the conditional backend")?;
        (Some(l), l.as_str().to_string())
    } else {
        let trained = training_data(&a.ckpt).filter(|t| t.classes.len() == 1).map(|t| t.classes[0]);
        let l = a.label.or(trained);
        (None, l.map_or_else(|| "any".to_string(), |l| l.as_str().to_string()))
    };
    let samples = gan::sample(&state, a.n, a.seed, lib_label)?;
    fs::create_dir_all(&a.out)?;
    for (i, s) in samples.iter().enumerate() {
        let path = a.out.join(sample_file_name(backend, &name_label, a.seed, i));
        s.pixels.to_rgb8().save(&path).with_context(|| format!("writing {}", path.display()))?;
    }
    log::info!("wrote {} samples to {}", samples.len(), a.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct FidArgs {
    /// Real images under `<real>/<class>/`.
    #[arg(long)]
    pub real: PathBuf,
    /// Generated images named `<backend>_<label>_<seed>_<i>.png`.
    #[arg(long)]
    pub fake: PathBuf,
    /// `inception:<weights.safetensors>`, `toy[:seed]` or `pixels[:grid]`.
    #[arg(long)]
    pub extractor: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the bar chart as SVG.
    #[arg(long)]
    pub chart: Option<PathBuf>,
}

pub fn make_extractor(spec: &str) -> Result<Box<dyn FeatureExtractor>> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    Ok(match kind {
        "inception" => {
            if arg.is_empty() {
                bail!("inception needs a weights path: inception:<file.safetensors>");
            }
            Box::new(InceptionV3::load(Path::new(arg))?)
        }
        "toy" => Box::new(ToyEncoder::new(if arg.is_empty() { 0 } else { arg.parse()? })),
        "pixels" => Box::new(PixelGrid { grid: if arg.is_empty() { 8 } else { arg.parse()? } }),
        other => bail!("unknown extractor `{other}`"),
    })
}

pub fn fid(a: &FidArgs) -> Result<()> {
    let ex = make_extractor(&a.extractor)?;
    let mut real: BTreeMap<LabelClass, Vec<Pixels>> = BTreeMap::new();
    for c in LabelClass::ALL {
        let dir = a.real.join(c.as_str());
        if dir.is_dir() {
            let imgs = image_files(&dir)?.iter().map(|p| load_image(p)).collect::<Result<Vec<_>>>()?;
            if !imgs.is_empty() {
                real.insert(c, imgs);
            }
        }
    }
    let mut fakes: BTreeMap<(LabelClass, String), Vec<Pixels>> = BTreeMap::new();
    for path in image_files(&a.fake)? {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let Some((backend, class, _, _)) = parse_sample_file_name(name) else {
            log::warn!("skipping {name}: not named <backend>_<label>_<seed>_<i>.png");
            continue;
        };
        fakes.entry((class, backend)).or_default().push(load_image(&path)?);
    }
    if fakes.is_empty() {
        bail!("no generated images found in {}", a.fake.display());
    }
    let result = fid_report(&real, &fakes, ex.as_ref())?;
    write_json(&a.out, &result)?;
    if let Some(chart) = &a.chart {
        fs::write(chart, report::render_fid_chart(&result))?;
    }
    for r in &result.rows {
        log::info!("{} {}: {:.3}", r.class, r.backend, r.fid);
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainClfArgs {
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long)]
    pub split: PathBuf,
    /// Classifier configuration JSON; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Generator checkpoints, `abnormal=dir,normal=dir,...`, or one directory for every class.
    #[arg(long)]
    pub gan_ckpt: Option<String>,
    #[arg(long)]
    pub data: PathBuf,
    /// Label for the results table; derived from the configuration when absent.
    #[arg(long)]
    pub model_type: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

pub const CV_RESULT_FILE: &str = "cv_result.json";
pub const RECORD_FILE: &str = "record.json";

fn gan_sources(spec: &str, classes: &ClassSet) -> Result<GanSources> {
    let dirs: BTreeMap<LabelClass, PathBuf> = if spec.contains('=') {
        parse_class_map(spec)?
    } else {
        classes.classes().iter().map(|&c| (c, PathBuf::from(spec))).collect()
    };
    let mut cache: BTreeMap<PathBuf, GeneratorState> = BTreeMap::new();
    let mut out = GanSources::new();
    for (class, dir) in dirs {
        if !cache.contains_key(&dir) {
            cache.insert(dir.clone(), load_checkpoint(&dir)?);
        }
        out.insert(class, cache[&dir].clone());
    }
    Ok(out)
}

fn default_model_type(cfg: &ClassifierConfig) -> String {
    let base = if cfg.num_classes == 2 { "Two Classes" } else { "Three Classes" };
    if cfg.use_classic_augment {
        format!("{base} + Image Augmentation")
    } else {
        base.to_string()
    }
}

pub fn train_clf(a: &TrainClfArgs) -> Result<()> {
    let mut cfg: ClassifierConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => ClassifierConfig::default(),
    };
    cfg.num_classes = a.classes;
    let classes = class_set(a.classes)?;
    let plan: SplitPlan = read_json(&a.split)?;
    let samples = load_split_samples(&a.data, &classes, &plan)?;
    let sources = a.gan_ckpt.as_deref().map(|s| gan_sources(s, &classes)).transpose()?;
    let cv = cross_validate(&samples, &plan, &cfg, sources.as_ref())?;
    write_run(&a.out, &cv, a.model_type.clone().unwrap_or_else(|| default_model_type(&cfg)), &plan)?;
    log::info!(
        "mean test accuracy {:.4} ± {:.4}, best {:.4}, mean loss {:.4}",
        cv.mean_test_accuracy,
        cv.std_test_accuracy,
        cv.best_accuracy,
        cv.mean_loss
    );
    Ok(())
}

/// Writes the run directory: per-fold model and log, confusion CSVs,
/// `cv_result.json` and the `record.json` read by `report`.
pub fn write_run(dir: &Path, cv: &CvResult, model_type: String, plan: &SplitPlan) -> Result<()> {
    fs::create_dir_all(dir)?;
    for f in &cv.folds {
        let fold_dir = dir.join(format!("fold_{}", f.fold));
        fs::create_dir_all(&fold_dir)?;
        if let Some(m) = &f.model {
            let extra = serde_json::json!({
                "fold": f.fold,
                "best_epoch": m.best_epoch,
                "best_val_loss": m.best_val_loss,
            });
            m.model.to_container(extra).save(&fold_dir.join("model.bin"))?;
        }
        let mut log = String::from("epoch,train_loss,val_loss,val_accuracy\n");
        for e in &f.log {
            log.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, e.val_loss, e.val_accuracy));
        }
        fs::write(fold_dir.join("log.csv"), log)?;
        fs::write(dir.join(format!("confusion_{}.csv", f.fold)), f.confusion.to_csv())?;
    }
    write_json(&dir.join(CV_RESULT_FILE), cv)?;
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&cv.config)?);
    h.update(serde_json::to_vec(plan)?);
    let hash: String = h.finalize().iter().take(6).map(|b| format!("{b:02x}")).collect();
    write_json(&dir.join(RECORD_FILE), &ExperimentRecord::from_cv(model_type, cv, hash)?)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct GradcamArgs {
    /// A fold `model.bin` or an exported model directory.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub class: LabelClass,
    /// Average the normalized maps of all images into one.
    #[arg(long)]
    pub avg: bool,
    /// Blend over the image (or the mean image with --avg) with this weight for the map.
    #[arg(long)]
    pub overlay_alpha: Option<f32>,
    /// Output PNG with --avg, otherwise a directory of PNGs.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn load_classifier(path: &Path) -> Result<Classifier> {
    if path.is_dir() {
        Ok(gutcheck_serve::load_model(path)?.model)
    } else {
        Ok(Classifier::from_container(&Container::load(path)?)?)
    }
}

fn mean_image(images: &[ImageSample]) -> Pixels {
    let mut out = Pixels::filled(images[0].pixels.height, images[0].pixels.width, [0.0; 3]);
    for s in images {
        for (o, v) in out.data.iter_mut().zip(&s.pixels.data) {
            *o += v / images.len() as f32;
        }
    }
    out
}

pub fn gradcam(a: &GradcamArgs) -> Result<()> {
    let model = load_classifier(&a.model)?;
    let images: Vec<ImageSample> = image_files(&a.images)?
        .iter()
        .map(|p| {
            Ok(ImageSample {
                id: p.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                label: a.class,
                source: Source::Real,
                pixels: load_image(p)?,
            })
        })
        .collect::<Result<_>>()?;
    if images.is_empty() {
        bail!("no images in {}", a.images.display());
    }
    if a.avg {
        let map = average_heatmap(&model, &images, a.class)?;
        let base = a.overlay_alpha.map(|al| (mean_image(&images), al));
        let png = report::heatmap_png(&map, base.as_ref().map(|(p, al)| (p, *al)))?;
        if let Some(p) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(p)?;
        }
        fs::write(&a.out, png)?;
        log::info!("centre-quarter mass {:.3}", map.center_quarter_mass());
    } else {
        fs::create_dir_all(&a.out)?;
        for s in &images {
            let map = grad_cam(&model, s, a.class)?;
            let png = report::heatmap_png(&map, a.overlay_alpha.map(|al| (&s.pixels, al)))?;
            let stem = Path::new(&s.id).file_stem().unwrap_or_default().to_string_lossy().into_owned();
            fs::write(a.out.join(format!("{stem}_gradcam.png")), png)?;
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Comma-separated run directories written by train-clf.
    #[arg(long, value_delimiter = ',')]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub fid: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn report(a: &ReportArgs) -> Result<()> {
    fs::create_dir_all(&a.out)?;
    let records: Vec<ExperimentRecord> = a.runs.iter().map(|r| read_json(&r.join(RECORD_FILE))).collect::<Result<_>>()?;
    let table = report::results_table(&records)?;
    fs::write(a.out.join("results_table.csv"), table.to_csv()?)?;
    fs::write(a.out.join("results_table.txt"), table.to_text())?;
    for (i, r) in records.iter().enumerate() {
        let panels: Vec<(String, &gutcheck_core::classifier::ConfusionMatrix)> = r
            .confusions
            .iter()
            .enumerate()
            .map(|(f, m)| (format!("fold {f}"), m))
            .collect();
        fs::write(a.out.join(format!("confusions_{i}.svg")), report::render_confusions(&panels))?;
    }
    if let Some(f) = &a.fid {
        let fid: FidResult = read_json(f)?;
        fs::write(a.out.join("fid_chart.svg"), report::render_fid_chart(&fid))?;
    }
    print!("{}", table.to_text());
    Ok(())
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// A run directory; the fold with the best test accuracy is exported.
    #[arg(long, conflicts_with = "model")]
    pub run: Option<PathBuf>,
    /// A single fold `model.bin`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn export(a: &ExportArgs) -> Result<()> {
    let (path, provenance) = match (&a.run, &a.model) {
        (Some(run), None) => {
            let cv: CvResult = read_json(&run.join(CV_RESULT_FILE))?;
            let fold = cv.folds.get(cv.best_fold()).context("run has no folds")?;
            let prov = serde_json::json!({
                "run": run,
                "fold": fold.fold,
                "test_accuracy": fold.test_accuracy,
            });
            (run.join(format!("fold_{}", fold.fold)).join("model.bin"), prov)
        }
        (None, Some(m)) => (m.clone(), serde_json::json!({ "model": m })),
        _ => bail!("pass either --run or --model"),
    };
    let model = load_classifier(&path)?;
    let meta = gutcheck_serve::export_model(&model, provenance, &a.out)?;
    log::info!("exported model {} to {}", meta.version, a.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Exported model directory (may be a symlink that is swapped on redeploy).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    /// Allowed browser origin; any origin when absent.
    #[arg(long)]
    pub cors_origin: Option<String>,
}

pub fn serve(a: &ServeArgs) -> Result<()> {
    let state = gutcheck_serve::AppState::from_dir(a.model.clone())
        .with_context(|| format!("loading model from {}", a.model.display()))?;
    let addr = SocketAddr::new(a.host, a.port);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(gutcheck_serve::http::serve(addr, state, a.cors_origin.clone()))?;
    Ok(())
}
