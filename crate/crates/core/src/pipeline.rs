//! The file-mediated pipeline behind the CLI. Every stage reads the
//! artifacts of earlier stages from the output directory and writes its own;
//! all randomness is derived from the run seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::{
    extract_activations, layer_name, predict_class, train_baseline, BaselineConfig, TrainingReport,
};
use crate::dec::{train_cluster_model, ClusterModel, DecConfig, Diagnostics};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::explain::{concept_purity, extract_concepts, rank_similar};
use crate::nn::{LayerSpec, Network};
use crate::report::{
    emit_html_report, emit_thumbnails, similarity_file_name, ConceptsFile, EvalSummary, LayerConcepts,
    QueryExplanation, SimilarityFile, CONCEPTS_FILE, EVAL_FILE, THUMBS_DIR,
};
use crate::store::{
    make_blobs, read_dump, read_idx_images, read_idx_labels, read_json, read_tensor_bundle, write_dump,
    write_idx_labels, write_json, write_tensor_bundle, ActivationDump, DatasetManifest, LabelArray, SplitInfo,
};
use crate::surrogate::{fit_posterior, normalize_weights, FullSurrogate, LayerSurrogate, DEFAULT_EPSILON};
use crate::tensor::Tensor;

pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// The four standard MNIST IDX files in `dir`; the first
    /// `train_limit`/`test_limit` samples of each split are used.
    Mnist {
        dir: PathBuf,
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
    /// Unit-variance Gaussian blobs, one class per blob.
    Blobs {
        clusters: usize,
        train_per_cluster: usize,
        test_per_cluster: usize,
        dim: usize,
        separation: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSetting {
    pub tag: String,
    pub weights: Vec<f64>,
}

fn default_top_k() -> usize {
    10
}

fn default_m() -> usize {
    10
}

fn default_queries() -> usize {
    50
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub dec: DecConfig,
    /// Per-layer replacements for `dec`, keyed by layer name.
    #[serde(default)]
    pub dec_layers: BTreeMap<String, DecConfig>,
    /// Surrogate layer weights; equal when absent.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// Training examples listed per concept.
    #[serde(default = "default_m")]
    pub m: usize,
    /// Number of test samples explained by `explain`.
    #[serde(default = "default_queries")]
    pub queries: usize,
    /// Settings rendered by `explain`; defaults to equal weights plus
    /// one-hot weights on the first and on the last layer.
    #[serde(default)]
    pub weight_settings: Option<Vec<WeightSetting>>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Overrides the seeds inside `baseline` and `dec`.
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn n_layers(&self) -> usize {
        self.baseline.selected_layers.len()
    }

    pub fn layer_names(&self) -> Vec<String> {
        self.baseline.selected_layers.iter().map(|&j| layer_name(j)).collect()
    }

    pub fn surrogate_weights(&self) -> Vec<f64> {
        self.weights.clone().unwrap_or_else(|| vec![1.0; self.n_layers()])
    }

    pub fn weight_settings(&self) -> Vec<WeightSetting> {
        if let Some(s) = &self.weight_settings {
            return s.clone();
        }
        let n = self.n_layers();
        let one_hot = |j: usize| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
        vec![
            WeightSetting {
                tag: "equal".into(),
                weights: vec![1.0; n],
            },
            WeightSetting {
                tag: "first".into(),
                weights: one_hot(0),
            },
            WeightSetting {
                tag: "last".into(),
                weights: one_hot(n - 1),
            },
        ]
    }

    fn check_weights(&self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.n_layers() {
            return Err(Error::Config(format!(
                "{} weights given for {} selected layers",
                weights.len(),
                self.n_layers()
            )));
        }
        normalize_weights(weights).map(|_| ())
    }

    pub fn validate(&self) -> Result<()> {
        if self.baseline.selected_layers.is_empty() {
            return Err(Error::Config("at least one layer must be selected".into()));
        }
        let classes = *self.baseline.layer_dims.last().unwrap_or(&0);
        self.baseline.validate(classes)?;
        self.dec.validate()?;
        for (name, cfg) in &self.dec_layers {
            if !self.layer_names().contains(name) {
                return Err(Error::Config(format!("dec_layers names unknown layer {name}")));
            }
            cfg.validate()?;
        }
        self.check_weights(&self.surrogate_weights())?;
        for s in self.weight_settings() {
            self.check_weights(&s.weights)?;
            if s.tag.is_empty() || !s.tag.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                return Err(Error::Config(format!("weight setting tag {:?} is not file-name safe", s.tag)));
            }
        }
        if self.top_k == 0 || self.m == 0 {
            return Err(Error::Config("top_k and m must be positive".into()));
        }
        match &self.dataset {
            DatasetConfig::Blobs {
                clusters,
                dim,
                train_per_cluster,
                test_per_cluster,
                ..
            } => {
                if self.baseline.layer_dims[0] != *dim || classes != *clusters {
                    return Err(Error::Config(format!(
                        "baseline layer_dims {:?} do not fit {clusters} blobs in {dim} dimensions",
                        self.baseline.layer_dims
                    )));
                }
                if *train_per_cluster == 0 || *test_per_cluster == 0 {
                    return Err(Error::Config("blob splits must be non-empty".into()));
                }
            }
            DatasetConfig::Mnist { .. } => {
                if self.baseline.layer_dims[0] != 784 || classes != 10 {
                    return Err(Error::Config(format!(
                        "MNIST needs layer_dims of the form 784-…-10, got {:?}",
                        self.baseline.layer_dims
                    )));
                }
            }
        }
        Ok(())
    }

    fn dec_for(&self, layer: &str) -> DecConfig {
        let mut cfg = self.dec_layers.get(layer).unwrap_or(&self.dec).clone();
        cfg.seed = derive_seed(self.seed, &format!("dec/{layer}"));
        cfg
    }

    fn baseline_config(&self) -> BaselineConfig {
        BaselineConfig {
            seed: derive_seed(self.seed, "baseline"),
            ..self.baseline.clone()
        }
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub weights: Option<Vec<f64>>,
    pub top_k: Option<usize>,
}

pub struct Dataset {
    pub train_x: Tensor<f32>,
    pub train_y: LabelArray,
    pub test_x: Tensor<f32>,
    pub test_y: LabelArray,
    pub classes: Vec<String>,
    /// Whether samples are square grayscale images that can be thumbnailed.
    pub images: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    layers: Vec<LayerSpec>,
    seed: u64,
    checksum: String,
    params_file: String,
}

fn save_network(net: &Network<f32>, dir: &Path, stem: &str) -> Result<()> {
    let params_file = format!("{stem}.bin");
    let tensors: Vec<(String, Tensor<f32>)> = net
        .params()
        .into_iter()
        .enumerate()
        .map(|(i, p)| (format!("param.{i}"), p.clone()))
        .collect();
    write_tensor_bundle(dir.join(&params_file), &tensors)?;
    write_json(
        dir.join(format!("{stem}.json")),
        &NetworkFile {
            layers: net.specs(),
            seed: net.seed(),
            checksum: net.checksum(),
            params_file,
        },
    )
}

fn load_network(path: &Path) -> Result<Network<f32>> {
    let file: NetworkFile = read_json(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let params = read_tensor_bundle(dir.join(&file.params_file))?
        .into_iter()
        .map(|(_, t)| t)
        .collect();
    let net = Network::from_specs(&file.layers, params, file.seed)?;
    if net.checksum() != file.checksum {
        return Err(Error::Format(crate::FormatError::Invalid(format!(
            "checksum mismatch for {}",
            path.display()
        ))));
    }
    Ok(net)
}

fn require(paths: &[PathBuf]) -> Result<()> {
    let missing: Vec<PathBuf> = paths.iter().filter(|p| !p.exists()).cloned().collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Missing(missing))
    }
}

fn weights_tag(weights: &[f64]) -> String {
    let parts: Vec<String> = weights.iter().map(|w| format!("{w}")).collect();
    format!("w{}", parts.join("_"))
}

pub struct Pipeline {
    pub config: RunConfig,
    /// Directory relative paths in the config are resolved against.
    pub base_dir: PathBuf,
    pub out: PathBuf,
    pub weights_override: Option<Vec<f64>>,
}

impl Pipeline {
    pub fn load(config_path: &Path, overrides: Overrides) -> Result<Self> {
        require(&[config_path.to_path_buf()])?;
        let text = std::fs::read_to_string(config_path).map_err(|e| Error::io(config_path, e))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", config_path.display())))?;
        let base_dir = config_path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .to_path_buf();
        Self::new(config, base_dir, overrides)
    }

    pub fn new(mut config: RunConfig, base_dir: PathBuf, overrides: Overrides) -> Result<Self> {
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(k) = overrides.top_k {
            config.top_k = k;
        }
        config.validate()?;
        if let Some(w) = &overrides.weights {
            config.check_weights(w)?;
        }
        let out = overrides.out.unwrap_or_else(|| base_dir.join(&config.output_dir));
        if let DatasetConfig::Mnist { dir, .. } = &config.dataset {
            let dir = base_dir.join(dir);
            require(&MNIST_FILES.iter().map(|f| dir.join(f)).collect::<Vec<_>>())?;
        }
        Ok(Self {
            config,
            base_dir,
            out,
            weights_override: overrides.weights,
        })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.config.dataset {
            DatasetConfig::Mnist {
                dir,
                train_limit,
                test_limit,
            } => {
                let dir = self.base_dir.join(dir);
                let load = |img: &str, lab: &str, limit: &Option<usize>| -> Result<(Tensor<f32>, LabelArray)> {
                    let (x, _, _) = read_idx_images(dir.join(img))?;
                    let mut y = read_idx_labels(dir.join(lab))?;
                    if x.rows() != y.len() {
                        return Err(Error::Alignment(format!("{img}: {} images, {} labels", x.rows(), y.len())));
                    }
                    let n = limit.map_or(y.len(), |l| l.min(y.len()));
                    y.truncate(n);
                    let y = LabelArray::new(y.labels().to_vec(), 10)?;
                    Ok((x.select_rows(&(0..n).collect::<Vec<_>>()), y))
                };
                let (train_x, train_y) = load(MNIST_FILES[0], MNIST_FILES[1], train_limit)?;
                let (test_x, test_y) = load(MNIST_FILES[2], MNIST_FILES[3], test_limit)?;
                Ok(Dataset {
                    train_x,
                    train_y,
                    test_x,
                    test_y,
                    classes: (0..10).map(|c| c.to_string()).collect(),
                    images: true,
                })
            }
            DatasetConfig::Blobs {
                clusters,
                train_per_cluster,
                test_per_cluster,
                dim,
                separation,
            } => {
                let per = train_per_cluster + test_per_cluster;
                let (x, y) = make_blobs(*clusters, per, *dim, *separation, derive_seed(self.config.seed, "blobs"))?;
                let (mut train, mut test) = (Vec::new(), Vec::new());
                for c in 0..*clusters {
                    train.extend(c * per..c * per + train_per_cluster);
                    test.extend(c * per + train_per_cluster..(c + 1) * per);
                }
                Ok(Dataset {
                    train_x: x.select_rows(&train),
                    train_y: y.select(&train),
                    test_x: x.select_rows(&test),
                    test_y: y.select(&test),
                    classes: (0..*clusters).map(|c| format!("blob{c}")).collect(),
                    images: false,
                })
            }
        }
    }

    fn manifest(&self) -> Result<DatasetManifest> {
        let path = self.path("manifest.json");
        require(std::slice::from_ref(&path))?;
        DatasetManifest::load(path)
    }

    fn update_manifest(&self, files: &[(String, String)]) -> Result<()> {
        let mut m = self.manifest()?;
        for (k, v) in files {
            m.files.insert(k.clone(), v.clone());
        }
        m.save(self.path("manifest.json"))
    }

    fn baseline(&self) -> Result<Network<f32>> {
        let path = self.path("baseline.json");
        require(std::slice::from_ref(&path))?;
        load_network(&path)
    }

    fn labels(&self, split: &str) -> Result<LabelArray> {
        let path = self.path(&format!("labels_{split}.idx"));
        require(std::slice::from_ref(&path))?;
        let classes = self.manifest()?.classes.len();
        LabelArray::new(read_idx_labels(path)?.labels().to_vec(), classes)
    }

    fn baseline_predictions(&self, split: &str) -> Result<Vec<u32>> {
        let path = self.path(&format!("baseline_pred_{split}.idx"));
        require(std::slice::from_ref(&path))?;
        Ok(read_idx_labels(path)?.labels().to_vec())
    }

    fn dump_path(&self, layer: &str, split: &str) -> String {
        format!("activations/{layer}_{split}.actv")
    }

    fn embedding_path(&self, layer: &str, split: &str) -> String {
        format!("embeddings/{layer}_{split}.emb")
    }

    fn read_dumps(&self, split: &str) -> Result<Vec<ActivationDump>> {
        let paths: Vec<PathBuf> = self
            .config
            .layer_names()
            .iter()
            .map(|l| self.path(&self.dump_path(l, split)))
            .collect();
        require(&paths)?;
        paths.iter().map(read_dump).collect()
    }

    fn read_embeddings(&self, split: &str) -> Result<Vec<Tensor<f32>>> {
        let paths: Vec<PathBuf> = self
            .config
            .layer_names()
            .iter()
            .map(|l| self.path(&self.embedding_path(l, split)))
            .collect();
        require(&paths)?;
        paths.iter().map(|p| read_dump(p).map(|d| d.to_tensor())).collect()
    }

    fn cluster_models(&self) -> Result<Vec<ClusterModel>> {
        let paths: Vec<PathBuf> = self
            .config
            .layer_names()
            .iter()
            .map(|l| self.path(&format!("clusters/{l}.json")))
            .collect();
        require(&paths)?;
        paths.iter().map(|p| ClusterModel::load(p)).collect()
    }

    /// Trains the baseline and writes it with labels, baseline predictions
    /// and a fresh manifest.
    pub fn train_baseline(&self) -> Result<TrainingReport> {
        let data = self.load_dataset()?;
        let cfg = self.config.baseline_config();
        let trained = train_baseline(&cfg, &data.train_x, &data.train_y, Some((&data.test_x, &data.test_y)))?;
        save_network(&trained.network, &self.out, "baseline")?;
        let report = trained.report(&cfg);
        write_json(self.path("training_report.json"), &report)?;
        let mut files = BTreeMap::new();
        for (split, x, y) in [("train", &data.train_x, &data.train_y), ("test", &data.test_x, &data.test_y)] {
            let rel = format!("labels_{split}.idx");
            write_idx_labels(self.path(&rel), y)?;
            files.insert(format!("{split}/labels"), rel);
            let pred = LabelArray::new(predict_class(&trained.network, x)?, y.n_classes())?;
            let rel = format!("baseline_pred_{split}.idx");
            write_idx_labels(self.path(&rel), &pred)?;
            files.insert(format!("{split}/baseline_pred"), rel);
        }
        files.insert("baseline".into(), "baseline.json".into());
        let manifest = DatasetManifest {
            splits: BTreeMap::from([
                ("train".to_string(), SplitInfo { count: data.train_y.len() }),
                ("test".to_string(), SplitInfo { count: data.test_y.len() }),
            ]),
            classes: data.classes,
            files,
            baseline_checksum: trained.checksum,
        };
        manifest.validate()?;
        manifest.save(self.path("manifest.json"))?;
        Ok(report)
    }

    /// Writes one ACTV dump per selected layer and split.
    pub fn dump_activations(&self) -> Result<()> {
        let net = self.baseline()?;
        let manifest = self.manifest()?;
        if net.checksum() != manifest.baseline_checksum {
            return Err(Error::Alignment("baseline differs from the one recorded in the manifest".into()));
        }
        let data = self.load_dataset()?;
        let mut files = Vec::new();
        for (split, x) in [("train", &data.train_x), ("test", &data.test_x)] {
            for dump in extract_activations(&net, x, &self.config.baseline.selected_layers)? {
                let rel = self.dump_path(&dump.layer_name, split);
                write_dump(&dump, self.path(&rel))?;
                files.push((format!("{split}/{}", dump.layer_name), rel));
            }
        }
        self.update_manifest(&files)?;
        self.manifest()?.check_counts(&self.out)
    }

    /// Trains one cluster model per layer, one thread each, and caches the
    /// train and test embeddings.
    pub fn train_clusters(&self) -> Result<Vec<Diagnostics>> {
        let train = self.read_dumps("train")?;
        let test = self.read_dumps("test")?;
        let results: Vec<Result<ClusterModel>> = std::thread::scope(|s| {
            let handles: Vec<_> = train
                .iter()
                .map(|dump| {
                    let cfg = self.config.dec_for(&dump.layer_name);
                    s.spawn(move || train_cluster_model(dump, &cfg))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Training("cluster worker panicked".into()))))
                .collect()
        });
        let mut diagnostics = Vec::new();
        let mut files = Vec::new();
        for ((model, tr), te) in results.into_iter().zip(&train).zip(&test) {
            let model = model?;
            let name = model.layer_name.clone();
            model.save(&self.path("clusters"), &name)?;
            files.push((format!("clusters/{name}"), format!("clusters/{name}.json")));
            for (split, dump) in [("train", tr), ("test", te)] {
                let emb = ActivationDump::new(format!("{name}.emb"), &model.encode(&dump.to_tensor())?)?;
                let rel = self.embedding_path(&name, split);
                write_dump(&emb, self.path(&rel))?;
                files.push((format!("{split}/{name}.emb"), rel));
            }
            diagnostics.push(model.diagnostics);
        }
        self.update_manifest(&files)?;
        Ok(diagnostics)
    }

    pub fn build_surrogate(&self) -> Result<FullSurrogate> {
        let models = self.cluster_models()?;
        let embeddings = self.read_embeddings("train")?;
        let labels = self.labels("train")?;
        let mut layers = Vec::with_capacity(models.len());
        for (model, z) in models.into_iter().zip(&embeddings) {
            let q = model.soft_assign(z)?;
            let posterior = fit_posterior(&q, &labels, DEFAULT_EPSILON)?;
            layers.push(LayerSurrogate::new(model, posterior)?);
        }
        let surrogate = FullSurrogate::new(layers, &self.config.surrogate_weights())?;
        let refs: Vec<String> = self.config.layer_names().iter().map(|l| format!("clusters/{l}.json")).collect();
        surrogate.save(&self.path("surrogate.json"), &refs)?;
        self.update_manifest(&[("surrogate".into(), "surrogate.json".into())])?;
        Ok(surrogate)
    }

    fn surrogate(&self) -> Result<FullSurrogate> {
        let path = self.path("surrogate.json");
        require(std::slice::from_ref(&path))?;
        FullSurrogate::load(&path)
    }

    /// Accuracy and fidelity on both splits, written to `eval.json`.
    pub fn evaluate(&self) -> Result<EvalSummary> {
        let surrogate = self.surrogate()?;
        let weights = match &self.weights_override {
            Some(w) => normalize_weights(w)?,
            None => surrogate.weights().to_vec(),
        };
        let mut reports = Vec::new();
        for split in ["train", "test"] {
            let acts: Vec<Tensor<f32>> = self.read_dumps(split)?.iter().map(ActivationDump::to_tensor).collect();
            let pred = surrogate.predict_with(&acts, &weights)?;
            reports.push(crate::surrogate::evaluate_predictions(
                &pred,
                &self.labels(split)?,
                &self.baseline_predictions(split)?,
                &weights,
            )?);
        }
        let test = reports.pop().expect("two splits");
        let train = reports.pop().expect("two splits");
        let summary = EvalSummary { train, test };
        write_json(self.path(EVAL_FILE), &summary)?;
        Ok(summary)
    }

    /// Test indices explained by `explain`, drawn once from the run seed.
    pub fn query_indices(&self, n_test: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, "queries"));
        let mut idx = rand::seq::index::sample(&mut rng, n_test, self.config.queries.min(n_test)).into_vec();
        idx.sort_unstable();
        idx
    }

    /// Ranks similar training examples for each query under every weight
    /// setting (or only the `--weights` override) and writes
    /// `similar_<tag>.json` per setting.
    pub fn explain(&self) -> Result<Vec<SimilarityFile>> {
        let train = self.read_embeddings("train")?;
        let test = self.read_embeddings("test")?;
        let train_y = self.labels("train")?;
        let test_y = self.labels("test")?;
        let test_pred = self.baseline_predictions("test")?;
        let settings = match &self.weights_override {
            Some(w) => vec![WeightSetting {
                tag: weights_tag(w),
                weights: w.clone(),
            }],
            None => self.config.weight_settings(),
        };
        let queries = self.query_indices(test_y.len());
        let mut out = Vec::new();
        for setting in settings {
            let mut explanations = Vec::with_capacity(queries.len());
            for &qi in &queries {
                let query: Vec<&[f32]> = test.iter().map(|t| t.row(qi)).collect();
                let result = rank_similar(qi, &query, &train, &setting.weights, self.config.top_k)?;
                explanations.push(QueryExplanation {
                    query_label: test_y.labels()[qi],
                    baseline_prediction: test_pred[qi],
                    neighbor_labels: result.neighbors.iter().map(|n| train_y.labels()[n.train_index]).collect(),
                    result,
                });
            }
            let file = SimilarityFile {
                weights: normalize_weights(&setting.weights)?,
                tag: setting.tag,
                top_k: self.config.top_k,
                queries: explanations,
            };
            write_json(self.path(&similarity_file_name(&file.tag)), &file)?;
            out.push(file);
        }
        Ok(out)
    }

    pub fn concepts(&self) -> Result<ConceptsFile> {
        let models = self.cluster_models()?;
        let train = self.read_embeddings("train")?;
        let labels = self.labels("train")?;
        let mut layers = Vec::new();
        for (model, z) in models.iter().zip(&train) {
            let concepts = extract_concepts(model, z, &labels, self.config.m)?;
            layers.push(LayerConcepts {
                layer_name: model.layer_name.clone(),
                purity: concept_purity(&concepts),
                concepts,
            });
        }
        let file = ConceptsFile {
            m: self.config.m,
            layers,
        };
        write_json(self.path(CONCEPTS_FILE), &file)?;
        Ok(file)
    }

    /// Writes thumbnails for every sample the results refer to, then
    /// `report.html`.
    pub fn report(&self) -> Result<PathBuf> {
        let data = self.load_dataset()?;
        if data.images {
            let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
            let mut names: Vec<PathBuf> = std::fs::read_dir(&self.out)
                .map_err(|e| Error::io(&self.out, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.starts_with("similar_") && n.ends_with(".json"))
                })
                .collect();
            names.sort();
            for path in names {
                let file: SimilarityFile = read_json(&path)?;
                for q in &file.queries {
                    test_idx.push(q.result.query_id);
                    train_idx.extend(q.result.indices());
                }
            }
            let concepts = self.path(CONCEPTS_FILE);
            if concepts.is_file() {
                let file: ConceptsFile = read_json(&concepts)?;
                for layer in &file.layers {
                    for c in &layer.concepts {
                        train_idx.extend(&c.members);
                    }
                }
            }
            for v in [&mut train_idx, &mut test_idx] {
                v.sort_unstable();
                v.dedup();
            }
            let thumbs = self.path(THUMBS_DIR);
            emit_thumbnails(&data.train_x, &train_idx, &thumbs, "train")?;
            emit_thumbnails(&data.test_x, &test_idx, &thumbs, "test")?;
        }
        emit_html_report(&self.out, data.images)
    }

    /// Every stage in order.
    pub fn run_all(&self) -> Result<()> {
        self.train_baseline()?;
        self.dump_activations()?;
        self.train_clusters()?;
        self.build_surrogate()?;
        self.evaluate()?;
        self.explain()?;
        self.concepts()?;
        self.report()?;
        Ok(())
    }
}
