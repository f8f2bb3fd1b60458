//! Convolutional classifier, k-fold training protocol and test-set evaluation.

use std::collections::{BTreeMap, HashMap};

use gutcheck_nn::{
    derive_seed, layers::Init, stream, Adam, AdamConfig, Container, ForwardCtx, Graph, LayerSpec, ParamStore,
    Sequential, Tensor, Var,
};
use serde::{Deserialize, Serialize};

use crate::augment::{classic_augment, ClassicPolicy};
use crate::dataset::{ImageSample, Source};
use crate::gan::{self, GeneratorState};
use crate::label::{ClassSet, LabelClass};
use crate::pixels::{batch_tensor, Pixels, SIDE};
use crate::split::SplitPlan;
use crate::Error;

const INPUT_SCALE: f32 = 1.0 / 255.0;

/// Convolution blocks (3×3 conv, ReLU, 2×2 max-pool) followed by a dense head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub conv_channels: Vec<usize>,
    /// Stride of the first convolution; 2 halves the cost of the whole stack.
    pub first_stride: usize,
    pub dense: usize,
    pub dropout: f32,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            conv_channels: vec![32, 64, 128, 128],
            first_stride: 1,
            dense: 512,
            dropout: 0.5,
        }
    }
}

impl Architecture {
    /// A small variant that trains in seconds per epoch on one CPU core.
    pub fn desk() -> Self {
        Architecture {
            conv_channels: vec![8, 16, 32],
            first_stride: 2,
            dense: 32,
            dropout: 0.3,
        }
    }

    pub fn layers(&self, num_classes: usize) -> Result<Vec<LayerSpec>, Error> {
        if self.conv_channels.is_empty() || self.first_stride == 0 {
            return Err(Error::Config("architecture needs at least one conv block".into()));
        }
        let mut layers = Vec::new();
        let (mut ch, mut side) = (3, SIDE);
        for (i, &out) in self.conv_channels.iter().enumerate() {
            let stride = if i == 0 { self.first_stride } else { 1 };
            layers.push(LayerSpec::Conv2d {
                in_ch: ch,
                out_ch: out,
                kernel: 3,
                stride,
                pad: 1,
                bias: true,
            });
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::MaxPool2d { kernel: 2, stride: 2 });
            side = (side - 1) / stride + 1;
            side /= 2;
            ch = out;
            if side == 0 {
                return Err(Error::Config(format!("{} conv blocks shrink a {SIDE}px input to nothing", i + 1)));
            }
        }
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::Dense {
            in_features: ch * side * side,
            out_features: self.dense,
        });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::Dropout { p: self.dropout });
        layers.push(LayerSpec::Dense {
            in_features: self.dense,
            out_features: num_classes,
        });
        Ok(layers)
    }
}

/// Inputs are 128×128 RGB in [0, 255]; the network divides by 255 itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputContract {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub range: [f32; 2],
    pub scale: f32,
}

impl Default for InputContract {
    fn default() -> Self {
        InputContract {
            height: SIDE,
            width: SIDE,
            channels: 3,
            range: [0.0, 255.0],
            scale: INPUT_SCALE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub layers: Vec<LayerSpec>,
    pub classes: ClassSet,
    pub input: InputContract,
}

/// A layer stack with its parameters; the final layer yields one logit per class.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub descriptor: ModelDescriptor,
    net: Sequential,
    pub store: ParamStore,
}

/// A trained classifier plus the bookkeeping of the run that produced it.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Classifier,
    pub best_val_loss: f32,
    pub best_epoch: usize,
    pub fold: Option<usize>,
}

impl Classifier {
    pub fn from_layers(layers: Vec<LayerSpec>, classes: ClassSet, seed: u64) -> Self {
        let mut store = ParamStore::new();
        let mut rng = stream(&[seed, 0xc1f]);
        let net = Sequential::build(layers.clone(), &mut store, "net", Init::FanIn, &mut rng);
        Classifier {
            descriptor: ModelDescriptor {
                layers,
                classes,
                input: InputContract::default(),
            },
            net,
            store,
        }
    }

    pub fn classes(&self) -> &ClassSet {
        &self.descriptor.classes
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.descriptor.layers
    }

    /// Logits for an NCHW batch in [0, 255]; `trace` receives every layer output.
    pub(crate) fn forward_traced(
        &self,
        g: &mut Graph,
        track: bool,
        x: Tensor,
        ctx: &mut ForwardCtx,
    ) -> (Var, Vec<Var>) {
        let p = self.store.bind(g, track);
        let input = g.constant(x);
        let scaled = g.scale(input, self.descriptor.input.scale);
        let trace = self.net.forward_trace(g, &p, scaled, ctx);
        (*trace.last().expect("non-empty network"), trace)
    }

    /// Runs layers `start..` on an intermediate activation; returns logits.
    pub fn forward_from(&self, start: usize, act: &Tensor) -> Tensor {
        let store = self.shifted_store(start);
        let tail = Sequential::attach(self.layers()[start..].to_vec(), &store, "net")
            .expect("stored parameters match the descriptor");
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let x = g.constant(act.clone());
        let y = tail.forward(&mut g, &p, x, &mut ForwardCtx::eval());
        g.value(y).clone()
    }

    fn shifted_store(&self, start: usize) -> ParamStore {
        let mut s = ParamStore::new();
        for p in self.store.iter() {
            let rest = p.name.strip_prefix("net.").expect("net prefix");
            let (idx, kind) = rest.split_once('.').expect("layer index");
            let idx: usize = idx.parse().expect("numeric layer index");
            if idx >= start {
                s.add(format!("net.{}.{kind}", idx - start), p.value.clone(), p.trainable);
            }
        }
        s
    }

    /// Short content hash over the descriptor and every parameter value.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.descriptor).unwrap_or_default());
        for p in self.store.iter() {
            h.update(p.name.as_bytes());
            for v in p.value.data() {
                h.update(v.to_le_bytes());
            }
        }
        crate::dataset::hex(&h.finalize())[..16].to_string()
    }

    pub fn logits(&self, images: &[&Pixels]) -> Tensor {
        let mut g = Graph::new();
        let (y, _) = self.forward_traced(&mut g, false, batch_tensor(images, 1.0, 0.0), &mut ForwardCtx::eval());
        g.value(y).clone()
    }

    /// Class probabilities per image, in class-set order.
    pub fn predict_proba(&self, images: &[&Pixels]) -> Vec<Vec<f32>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(64) {
            let l = self.logits(chunk);
            out.extend(l.data().chunks(self.classes().len()).map(softmax));
        }
        out
    }

    pub fn to_container(&self, extra: serde_json::Value) -> Container {
        let meta = serde_json::json!({
            "descriptor": self.descriptor,
            "run": extra,
        });
        let mut c = Container::new(meta);
        c.push_store("", &self.store);
        c
    }

    pub fn from_container(c: &Container) -> Result<Self, Error> {
        let descriptor: ModelDescriptor = serde_json::from_value(
            c.meta
                .get("descriptor")
                .cloned()
                .ok_or_else(|| Error::InvalidInput("model file has no descriptor".into()))?,
        )?;
        let mut model = Classifier::from_layers(descriptor.layers.clone(), descriptor.classes.clone(), 0);
        model.descriptor = descriptor;
        c.load_store("", &mut model.store)?;
        Ok(model)
    }
}

/// Softmax in double precision.
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let m = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let e: Vec<f64> = logits.iter().map(|&v| (v as f64 - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| (v / s) as f32).collect()
}

/// First index of the maximum.
pub fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Untrained classifier for the given class count.
pub fn build_model(num_classes: usize, arch: &Architecture, seed: u64) -> Result<TrainedModel, Error> {
    let classes = ClassSet::for_count(num_classes)?;
    Ok(TrainedModel {
        model: Classifier::from_layers(arch.layers(num_classes)?, classes, seed),
        best_val_loss: f32::INFINITY,
        best_epoch: 0,
        fold: None,
    })
}

/// Missing fields take their defaults when deserialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub num_classes: usize,
    pub architecture: Architecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub k: usize,
    pub use_classic_augment: bool,
    pub classic_policy: ClassicPolicy,
    pub gan_images_per_class: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            num_classes: 3,
            architecture: Architecture::default(),
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            k: 5,
            use_classic_augment: true,
            classic_policy: ClassicPolicy::default(),
            gan_images_per_class: 200,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn classes(&self) -> Result<ClassSet, Error> {
        ClassSet::for_count(self.num_classes)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.epochs == 0 || self.batch_size == 0 || self.k == 0 {
            return Err(Error::Config("epochs, batch_size and k must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        self.classic_policy.validate()?;
        self.classes().map(|_| ())
    }
}

/// Generators providing extra training images, keyed by the class they produce.
pub type GanSources = BTreeMap<LabelClass, GeneratorState>;

#[derive(Debug, Clone)]
pub struct FoldData {
    pub train: Vec<ImageSample>,
    pub val: Vec<ImageSample>,
}

/// Training pool for one fold: the other folds' real images plus freshly
/// sampled GAN images; the validation set is the held-out fold alone.
pub fn assemble_fold_training_set(
    samples: &[ImageSample],
    plan: &SplitPlan,
    fold: usize,
    config: &ClassifierConfig,
    gan_sources: Option<&GanSources>,
) -> Result<FoldData, Error> {
    if fold >= plan.k {
        return Err(Error::InvalidInput(format!("fold {fold} out of range for k={}", plan.k)));
    }
    let classes = config.classes()?;
    let by_id: HashMap<&str, &ImageSample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let fetch = |ids: &[String]| -> Result<Vec<ImageSample>, Error> {
        ids.iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|s| (*s).clone())
                    .ok_or_else(|| Error::InvalidInput(format!("split id {id} has no loaded sample")))
            })
            .collect()
    };
    let mut train = fetch(&plan.train_ids(fold))?;
    let val = fetch(&plan.folds[fold])?;
    if let Some(sources) = gan_sources {
        if config.gan_images_per_class > 0 {
            for &class in classes.classes() {
                let gen = sources
                    .get(&class)
                    .ok_or_else(|| Error::Config(format!("no generator configured for class {class}")))?;
                let label = gen.config.backend.is_conditional().then_some(class);
                let seed = derive_seed(&[config.seed, fold as u64, class as u64, 0x6a4]);
                let images = gan::sample(gen, config.gan_images_per_class, seed, label)?;
                for (i, mut s) in images.into_iter().enumerate() {
                    s.id = format!("gan/{}/fold{fold}_{i:04}", class.as_str());
                    s.label = class;
                    train.push(s);
                }
            }
        }
    }
    Ok(FoldData { train, val })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f32,
    pub val_loss: f32,
    pub val_accuracy: f32,
}

#[derive(Debug, Clone)]
pub struct FoldTraining {
    pub model: TrainedModel,
    pub log: Vec<EpochLog>,
}

fn one_hot_targets(labels: &[usize], classes: usize) -> Tensor {
    let mut t = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        t[i * classes + l] = 1.0;
    }
    Tensor::new(&[labels.len(), classes], t)
}

fn label_indices(samples: &[&ImageSample], classes: &ClassSet) -> Result<Vec<usize>, Error> {
    samples
        .iter()
        .map(|s| {
            classes
                .index_of(s.label)
                .ok_or_else(|| Error::Usage(format!("label {} is outside the model's classes", s.label)))
        })
        .collect()
}

/// Mean cross-entropy and predictions over a sample set, without gradients.
fn score(model: &Classifier, samples: &[ImageSample]) -> Result<(f32, Vec<usize>, Vec<usize>), Error> {
    let classes = model.classes();
    let mut total = 0.0f64;
    let mut preds = Vec::with_capacity(samples.len());
    let mut truth = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(64) {
        let refs: Vec<&ImageSample> = chunk.iter().collect();
        let labels = label_indices(&refs, classes)?;
        let pix: Vec<&Pixels> = chunk.iter().map(|s| &s.pixels).collect();
        let logits = model.logits(&pix);
        for (row, &l) in logits.data().chunks(classes.len()).zip(&labels) {
            let p = softmax(row);
            total -= (p[l].max(1e-12) as f64).ln();
            preds.push(argmax(row));
            truth.push(l);
        }
    }
    Ok(((total / samples.len().max(1) as f64) as f32, preds, truth))
}

/// Trains on `train` and keeps the parameters of the epoch with the lowest validation loss.
pub fn train_fold(
    train: &[ImageSample],
    val: &[ImageSample],
    config: &ClassifierConfig,
    fold: usize,
) -> Result<FoldTraining, Error> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidInput("training and validation sets must be non-empty".into()));
    }
    let train_ids: std::collections::HashSet<&str> = train.iter().map(|s| s.id.as_str()).collect();
    if let Some(s) = val.iter().find(|s| train_ids.contains(s.id.as_str())) {
        return Err(Error::InvalidInput(format!("{} is in both training and validation sets", s.id)));
    }
    if let Some(s) = val.iter().find(|s| s.source == Source::Gan) {
        return Err(Error::InvalidInput(format!("generated image {} in validation set", s.id)));
    }
    let classes = config.classes()?;
    let seed = derive_seed(&[config.seed, fold as u64]);
    let mut model = Classifier::from_layers(config.architecture.layers(classes.len())?, classes.clone(), seed);
    let mut opt = Adam::new(
        AdamConfig {
            lr: config.learning_rate,
            ..Default::default()
        },
        &model.store,
    );
    let refs: Vec<&ImageSample> = train.iter().collect();
    let labels = label_indices(&refs, &classes)?;
    let mut best: Option<(f32, usize, ParamStore)> = None;
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let mut order_rng = stream(&[config.seed, fold as u64, epoch as u64, 0x5f]);
        let order = gutcheck_nn::layers::permutation(&mut order_rng, train.len());
        let mut epoch_loss = 0.0f64;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let augmented: Vec<Pixels>;
            let pix: Vec<&Pixels> = if config.use_classic_augment {
                augmented = idx
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| {
                        let s = derive_seed(&[config.seed, fold as u64, epoch as u64, b as u64, i as u64]);
                        classic_augment(&train[j].pixels, &config.classic_policy, s)
                    })
                    .collect::<Result<_, _>>()?;
                augmented.iter().collect()
            } else {
                idx.iter().map(|&j| &train[j].pixels).collect()
            };
            let y: Vec<usize> = idx.iter().map(|&j| labels[j]).collect();
            let mut drop_rng = stream(&[config.seed, fold as u64, epoch as u64, b as u64, 0xd0]);
            let mut g = Graph::new();
            let mut ctx = ForwardCtx::train(&mut drop_rng);
            let p = model.store.bind(&mut g, true);
            let input = g.constant(batch_tensor(&pix, 1.0, 0.0));
            let scaled = g.scale(input, model.descriptor.input.scale);
            let logits = model.net.forward(&mut g, &p, scaled, &mut ctx);
            let lsm = g.log_softmax(logits);
            let t = g.constant(one_hot_targets(&y, classes.len()));
            let picked = g.mul(lsm, t);
            let total = g.sum(picked);
            let loss = g.scale(total, -1.0 / y.len() as f32);
            let lv = g.value(loss).item();
            if !lv.is_finite() {
                return Err(Error::Divergence(format!("non-finite training loss in epoch {epoch}")));
            }
            epoch_loss += lv as f64 * y.len() as f64;
            let grads = g.backward(loss);
            opt.update(&mut model.store, &grads, &p);
        }
        let (val_loss, preds, truth) = score(&model, val)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence(format!("non-finite validation loss in epoch {epoch}")));
        }
        let correct = preds.iter().zip(&truth).filter(|(a, b)| a == b).count();
        log.push(EpochLog {
            epoch,
            train_loss: (epoch_loss / train.len() as f64) as f32,
            val_loss,
            val_accuracy: correct as f32 / val.len() as f32,
        });
        if best.as_ref().is_none_or(|(l, _, _)| val_loss < *l) {
            best = Some((val_loss, epoch, model.store.clone()));
        }
        log::debug!("fold {fold} epoch {epoch}: val loss {val_loss:.4}");
    }
    let (best_val_loss, best_epoch, store) = best.expect("at least one epoch");
    model.store = store;
    Ok(FoldTraining {
        model: TrainedModel {
            model,
            best_val_loss,
            best_epoch,
            fold: Some(fold),
        },
        log,
    })
}

/// Rows are true classes, columns predicted classes, both in class-set order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: ClassSet,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: ClassSet) -> Self {
        let n = classes.len();
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn from_pairs(classes: ClassSet, truth: &[usize], pred: &[usize]) -> Self {
        let mut m = Self::new(classes);
        for (&t, &p) in truth.iter().zip(pred) {
            m.counts[t][p] += 1;
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            self.correct() as f64 / t as f64
        }
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Header row of predicted classes, then one row per true class.
    pub fn to_csv(&self) -> String {
        let names: Vec<&str> = self.classes.classes().iter().map(|c| c.as_str()).collect();
        let mut s = format!("true\\predicted,{}\n", names.join(","));
        for (name, row) in names.iter().zip(&self.counts) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            s.push_str(&format!("{name},{}\n", cells.join(",")));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
    pub confusion: ConfusionMatrix,
}

/// Argmax predictions on `test`; accuracy is computed from the confusion matrix.
pub fn evaluate(model: &Classifier, test: &[ImageSample]) -> Result<Evaluation, Error> {
    if test.is_empty() {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    let (loss, preds, truth) = score(model, test)?;
    let confusion = ConfusionMatrix::from_pairs(model.classes().clone(), &truth, &preds);
    Ok(Evaluation {
        accuracy: confusion.accuracy(),
        loss: loss as f64,
        confusion,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub gan_images: usize,
    pub val_size: usize,
    pub best_epoch: usize,
    pub best_val_loss: f32,
    pub val_loss_curve: Vec<f32>,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub confusion: ConfusionMatrix,
    #[serde(skip)]
    pub model: Option<TrainedModel>,
    #[serde(skip)]
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvResult {
    pub config: ClassifierConfig,
    pub gan_used: bool,
    pub folds: Vec<FoldResult>,
    pub mean_test_accuracy: f64,
    /// Population standard deviation over fold accuracies.
    pub std_test_accuracy: f64,
    pub best_accuracy: f64,
    pub mean_loss: f64,
}

impl CvResult {
    pub fn from_folds(config: ClassifierConfig, gan_used: bool, folds: Vec<FoldResult>) -> Self {
        let accs: Vec<f64> = folds.iter().map(|f| f.test_accuracy).collect();
        let (mean, std) = mean_std(&accs);
        let best = accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean_loss = folds.iter().map(|f| f.test_loss).sum::<f64>() / folds.len().max(1) as f64;
        CvResult {
            config,
            gan_used,
            folds,
            mean_test_accuracy: mean,
            std_test_accuracy: std,
            best_accuracy: best,
            mean_loss,
        }
    }

    /// Index of the fold with the highest test accuracy; earliest on ties.
    pub fn best_fold(&self) -> usize {
        let accs: Vec<f32> = self.folds.iter().map(|f| f.test_accuracy as f32).collect();
        argmax(&accs)
    }
}

/// Mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trains one model per fold and scores each on the fixed test set.
///
/// `samples` must contain every id named by `plan`.
pub fn cross_validate(
    samples: &[ImageSample],
    plan: &SplitPlan,
    config: &ClassifierConfig,
    gan_sources: Option<&GanSources>,
) -> Result<CvResult, Error> {
    config.validate()?;
    if plan.k != config.k {
        return Err(Error::Config(format!("split has k={} but config has k={}", plan.k, config.k)));
    }
    let by_id: HashMap<&str, &ImageSample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let test: Vec<ImageSample> = plan
        .test_ids
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|s| (*s).clone())
                .ok_or_else(|| Error::InvalidInput(format!("test id {id} has no loaded sample")))
        })
        .collect::<Result<_, _>>()?;
    let gan_used = gan_sources.is_some() && config.gan_images_per_class > 0;
    let mut folds = Vec::with_capacity(plan.k);
    for fold in 0..plan.k {
        let data = assemble_fold_training_set(samples, plan, fold, config, gan_sources)?;
        let trained = train_fold(&data.train, &data.val, config, fold)?;
        let eval = evaluate(&trained.model.model, &test)?;
        log::info!(
            "fold {fold}: best epoch {} val loss {:.4} test accuracy {:.4}",
            trained.model.best_epoch,
            trained.model.best_val_loss,
            eval.accuracy
        );
        folds.push(FoldResult {
            fold,
            train_size: data.train.len(),
            gan_images: data.train.iter().filter(|s| s.source == Source::Gan).count(),
            val_size: data.val.len(),
            best_epoch: trained.model.best_epoch,
            best_val_loss: trained.model.best_val_loss,
            val_loss_curve: trained.log.iter().map(|e| e.val_loss).collect(),
            test_accuracy: eval.accuracy,
            test_loss: eval.loss,
            confusion: eval.confusion,
            model: Some(trained.model),
            log: trained.log,
        });
    }
    Ok(CvResult::from_folds(config.clone(), gan_used, folds))
}
