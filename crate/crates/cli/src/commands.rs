//! One function per pipeline stage. Every stage reads its inputs from and
//! writes its outputs under `config.out`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use reidlab_core::bench::{
    build_tradeoff_report, measure_throughput, measure_throughput_parallel, RunManifest, ThroughputResult,
    TradeoffEntry,
};
use reidlab_core::dataset::{
    generate_synthetic, generate_synthetic_images, load_csv, load_image_corpus, save_csv, save_image_corpus,
    split_train_query_gallery, FeatureDataset, LabeledFeature, SyntheticSpec,
};
use reidlab_core::descriptor::{extract_all, extract_handcrafted, Image};
use reidlab_core::distill::{
    cache_teacher_outputs, run_sweep, train_student_with_distillation, DistillConfig, SweepData,
};
use reidlab_core::eval::{evaluate, Distance, EvalReport, ProtocolConfig};
use reidlab_core::metric::{
    fit_kissme, fit_pca, fit_xqda, pair_covariances, MahalanobisModel, PcaModel, XqdaModel, XqdaOptions,
};
use reidlab_core::neural::{input_matrix, train_classifier, MlpNetwork};
use reidlab_core::{Error, Result};
use serde::Serialize;

use crate::config::{DeepInput, RunConfig};

pub const SPLITS: [&str; 3] = ["train", "query", "gallery"];
pub const DEEP_METHODS: [&str; 3] = ["teacher", "student", "distilled"];

/// Locations of every artefact under the output directory.
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
        }
    }

    pub fn features(&self, kind: &str, split: &str) -> PathBuf {
        self.root.join("features").join(format!("{kind}_{split}.csv"))
    }

    pub fn images(&self) -> PathBuf {
        self.root.join("images")
    }

    pub fn model(&self, name: &str) -> PathBuf {
        self.root.join("models").join(format!("{name}.json"))
    }

    pub fn log(&self, name: &str) -> PathBuf {
        self.root.join("logs").join(format!("{name}.json"))
    }

    pub fn report(&self, file: &str) -> PathBuf {
        self.root.join("reports").join(file)
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    fn ensure_dirs(&self) -> Result<()> {
        for d in ["features", "models", "logs", "reports"] {
            let p = self.root.join(d);
            fs::create_dir_all(&p).map_err(|e| io_err(&p, e))?;
        }
        Ok(())
    }
}

pub fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Progress lines go to stderr unless `--quiet`.
pub struct Ctx {
    pub config: RunConfig,
    pub layout: Layout,
    pub quiet: bool,
}

impl Ctx {
    pub fn new(config: RunConfig, quiet: bool) -> Result<Self> {
        config.validate()?;
        config.write_snapshot()?;
        let layout = Layout::new(&config.out);
        layout.ensure_dirs()?;
        Ok(Self { config, layout, quiet })
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    /// Branch name of the metric-learning methods.
    fn metric_branch(&self) -> &'static str {
        if self.config.images.enabled {
            "handcrafted"
        } else {
            "raw"
        }
    }

    fn load_split(&self, kind: &str, split: &str) -> Result<FeatureDataset> {
        let path = self.layout.features(kind, split);
        if !path.exists() {
            return Err(io_err(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "run the producing stage first"),
            ));
        }
        load_csv(&path)
    }

    fn load_pca(&self) -> Result<Option<PcaModel>> {
        if self.config.metric.pca_dim == 0 {
            return Ok(None);
        }
        PcaModel::load_json(&self.layout.model("pca")).map(Some)
    }

    /// Features the deep branch trains and evaluates on.
    fn deep_split(&self, split: &str) -> Result<FeatureDataset> {
        match self.config.deep.input {
            DeepInput::Raw => self.load_split("raw", split),
            DeepInput::Handcrafted => {
                let ds = self.load_split("handcrafted", split)?;
                match self.load_pca()? {
                    Some(pca) => ds.map_vectors(|v| pca.apply(v)),
                    None => Ok(ds),
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// gen-data / extract

pub fn gen_data(ctx: &Ctx) -> Result<()> {
    let c = &ctx.config;
    let ds = generate_synthetic(&c.data, c.stage_seed("gen-data"))?;
    let split = split_train_query_gallery(&ds, &c.split, c.stage_seed("split"))?;
    for (name, part) in SPLITS.iter().zip([&split.train, &split.query, &split.gallery]) {
        save_csv(part, &ctx.layout.features("raw", name))?;
    }
    ctx.say(format!(
        "raw features: {} train / {} query / {} gallery records, dim {}",
        split.train.len(),
        split.query.len(),
        split.gallery.len(),
        ds.dim()
    ));
    if c.images.enabled {
        let images = generate_synthetic_images(
            &image_spec(c),
            c.images.height,
            c.images.width,
            c.stage_seed("gen-images"),
        )?;
        save_image_corpus(&images, &ctx.layout.images())?;
        ctx.say(format!("image corpus: {} images", images.len()));
    }
    Ok(())
}

fn image_spec(c: &RunConfig) -> SyntheticSpec {
    SyntheticSpec {
        intra_class_stddev: c.images.intra_class_stddev,
        camera_shift_stddev: c.images.camera_shift_stddev,
        ..c.data.clone()
    }
}

pub fn extract(ctx: &Ctx) -> Result<()> {
    let c = &ctx.config;
    if !c.images.enabled {
        return Err(Error::Config("extract needs images.enabled = true".into()));
    }
    let corpus = load_image_corpus(&ctx.layout.images())?;
    let refs: Vec<&Image> = corpus.iter().map(|li| &li.image).collect();
    let vectors = extract_all(&refs, &c.descriptor)?;
    let records = corpus
        .iter()
        .zip(vectors)
        .map(|(li, vector)| LabeledFeature {
            id: li.id,
            camera: li.camera,
            vector,
        })
        .collect();
    let ds = FeatureDataset::new(records)?;
    let split = split_train_query_gallery(&ds, &c.split, c.stage_seed("split"))?;
    for (name, part) in SPLITS.iter().zip([&split.train, &split.query, &split.gallery]) {
        save_csv(part, &ctx.layout.features("handcrafted", name))?;
    }
    ctx.say(format!("hand-crafted features: {} records, dim {}", ds.len(), ds.dim()));
    Ok(())
}

// ---------------------------------------------------------------------------
// fit-metric

#[derive(Serialize)]
struct FitLog {
    branch: String,
    train_records: usize,
    input_dim: usize,
    pca_dim: Option<usize>,
    xqda_subspace_dim: usize,
    xqda_used_fallback: bool,
    seconds: BTreeMap<String, f64>,
}

pub fn fit_metric(ctx: &Ctx) -> Result<()> {
    let c = &ctx.config;
    let train = ctx.load_split(ctx.metric_branch(), "train")?;
    let mut seconds = BTreeMap::new();

    let t0 = Instant::now();
    let pca = if c.metric.pca_dim > 0 {
        let pca = fit_pca(&train.vectors(), c.metric.pca_dim)?;
        pca.save_json(&ctx.layout.model("pca"))?;
        Some(pca)
    } else {
        None
    };
    seconds.insert("pca".to_string(), t0.elapsed().as_secs_f64());
    let projected = match &pca {
        Some(p) => train.map_vectors(|v| p.apply(v))?,
        None => train.clone(),
    };
    let vectors = projected.vectors();
    let ids = projected.ids();

    let t0 = Instant::now();
    let seed = c.stage_seed("fit-metric");
    let pairs = pair_covariances(&vectors, &ids, seed)?;
    let ridge = c
        .metric
        .ridge
        .unwrap_or_else(|| reidlab_core::metric::default_ridge(&pairs.similar));
    let kissme = fit_kissme(&pairs.similar, &pairs.dissimilar, ridge)?;
    kissme.save_json(&ctx.layout.model("kissme"))?;
    seconds.insert("kissme".to_string(), t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let opts = XqdaOptions {
        max_dim: c.metric.xqda_max_dim,
        ridge: c.metric.ridge,
        seed,
    };
    let xqda = fit_xqda(&vectors, &ids, &projected.cameras(), &opts)?;
    xqda.save_json(&ctx.layout.model("xqda"))?;
    seconds.insert("xqda".to_string(), t0.elapsed().as_secs_f64());

    let log = FitLog {
        branch: ctx.metric_branch().to_string(),
        train_records: train.len(),
        input_dim: train.dim(),
        pca_dim: pca.as_ref().map(|p| p.output_dim()),
        xqda_subspace_dim: xqda.subspace_dim(),
        xqda_used_fallback: xqda.used_fallback(),
        seconds,
    };
    write_json(&ctx.layout.log("fit_metric"), &log)?;
    ctx.say(format!(
        "metric models fitted on {} records (xqda subspace {})",
        train.len(),
        xqda.subspace_dim()
    ));
    Ok(())
}

// ---------------------------------------------------------------------------
// train / distill / sweep

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Role {
    Teacher,
    Student,
}

impl Role {
    fn name(self) -> &'static str {
        match self {
            Role::Teacher => "teacher",
            Role::Student => "student",
        }
    }
}

/// Teacher and both student arms start from these seeds so that the
/// independent and distilled students share their initialisation.
fn role_seed(c: &RunConfig, role: Role) -> u64 {
    c.stage_seed(&format!("train-{}", role.name()))
}

struct DeepTrainSet {
    inputs: nalgebra::DMatrix<f64>,
    labels: Vec<usize>,
    classes: usize,
}

fn deep_train_set(ctx: &Ctx) -> Result<DeepTrainSet> {
    let train = ctx.deep_split("train")?;
    let (labels, classes) = train.class_labels();
    Ok(DeepTrainSet {
        inputs: input_matrix(&train.vectors())?,
        labels,
        classes: classes.len(),
    })
}

pub fn train(ctx: &Ctx, role: Role) -> Result<()> {
    let c = &ctx.config;
    let set = deep_train_set(ctx)?;
    let net_cfg = match role {
        Role::Teacher => &c.teacher,
        Role::Student => &c.student,
    };
    let spec = net_cfg.spec(set.inputs.ncols(), set.classes);
    let (net, log) = train_classifier(&spec, &set.inputs, &set.labels, &c.train.with_seed(role_seed(c, role)))?;
    net.save_json(&ctx.layout.model(role.name()))?;
    write_json(&ctx.layout.log(&format!("train_{}", role.name())), &log)?;
    ctx.say(format!(
        "{}: {} parameters, final train accuracy {:.3}",
        role.name(),
        net.param_count(),
        log.epoch_accuracy.last().copied().unwrap_or(0.0)
    ));
    Ok(())
}

fn load_network(ctx: &Ctx, name: &str) -> Result<MlpNetwork> {
    MlpNetwork::load_json(&ctx.layout.model(name))
}

pub fn distill(ctx: &Ctx) -> Result<()> {
    let c = &ctx.config;
    let set = deep_train_set(ctx)?;
    let teacher = load_network(ctx, "teacher")?;
    let cache = cache_teacher_outputs(&teacher, &set.inputs)?;
    let spec = c.student.spec(set.inputs.ncols(), set.classes);
    let cfg = DistillConfig {
        rescale_soft_term: c.distill.rescale_soft_term,
        ..DistillConfig::new(
            c.distill.temperature,
            c.distill.lambda,
            c.train.with_seed(role_seed(c, Role::Student)),
        )
    };
    let (student, log) = train_student_with_distillation(&cache, &spec, &set.inputs, &set.labels, &cfg)?;
    student.save_json(&ctx.layout.model("distilled"))?;
    write_json(&ctx.layout.log("distill"), &log)?;
    ctx.say(format!(
        "distilled student (T={}, lambda={}): epoch-1 terms soft {:.4e}, weighted ce {:.4e}",
        c.distill.temperature,
        c.distill.lambda,
        log.epoch_distill_term.first().copied().unwrap_or(0.0),
        log.epoch_weighted_ce_term.first().copied().unwrap_or(0.0)
    ));
    Ok(())
}

pub fn sweep(ctx: &Ctx) -> Result<()> {
    let c = &ctx.config;
    let set = deep_train_set(ctx)?;
    let teacher = load_network(ctx, "teacher")?;
    let query = ctx.deep_split("query")?;
    let gallery = ctx.deep_split("gallery")?;
    let spec = c.student.spec(set.inputs.ncols(), set.classes);
    let mut grid = c.sweep.clone();
    grid.seeds = grid.seeds.iter().map(|s| c.stage_seed(&format!("sweep-{s}"))).collect();
    let data = SweepData {
        teacher: &teacher,
        student_spec: &spec,
        train_inputs: &set.inputs,
        train_labels: &set.labels,
        query: &query,
        gallery: &gallery,
        exclude_same_camera_positives: c.protocol.exclude_same_camera_positives,
    };
    let report = run_sweep(&data, &grid, &c.train.with_seed(0))?;
    report.save(
        &ctx.layout.report("sweep.csv"),
        &ctx.layout.report("sweep_summary.json"),
    )?;
    ctx.say(format!("sweep: {} rows", report.rows.len()));
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

/// Every method the pipeline can evaluate, in report order.
pub fn all_methods(c: &RunConfig) -> Vec<String> {
    let branch = if c.images.enabled { "handcrafted" } else { "raw" };
    let mut m: Vec<String> = ["euclidean", "kissme", "xqda"]
        .iter()
        .map(|d| format!("{branch}-{d}"))
        .collect();
    m.extend(DEEP_METHODS.map(String::from));
    m
}

pub fn check_methods(c: &RunConfig, methods: &[String]) -> Result<Vec<String>> {
    let known = all_methods(c);
    if methods.is_empty() {
        return Ok(known);
    }
    for m in methods {
        if !known.contains(m) {
            return Err(Error::Usage(format!("unknown method {m:?}; expected one of {known:?}")));
        }
    }
    Ok(methods.to_vec())
}

enum Prepared {
    Metric {
        query: FeatureDataset,
        gallery: FeatureDataset,
        model: MetricModel,
    },
    Deep {
        query: FeatureDataset,
        gallery: FeatureDataset,
    },
}

enum MetricModel {
    Euclidean,
    Kissme(MahalanobisModel),
    Xqda(XqdaModel),
}

fn prepare(ctx: &Ctx, method: &str) -> Result<(Prepared, usize)> {
    let branch = ctx.metric_branch();
    if let Some(kind) = method.strip_prefix(&format!("{branch}-")) {
        let query = ctx.load_split(branch, "query")?;
        let gallery = ctx.load_split(branch, "gallery")?;
        if kind == "euclidean" {
            let dim = query.dim();
            return Ok((
                Prepared::Metric {
                    query,
                    gallery,
                    model: MetricModel::Euclidean,
                },
                dim,
            ));
        }
        let (query, gallery) = match ctx.load_pca()? {
            Some(p) => (query.map_vectors(|v| p.apply(v))?, gallery.map_vectors(|v| p.apply(v))?),
            None => (query, gallery),
        };
        let (model, dim) = if kind == "kissme" {
            let m = MahalanobisModel::load_json(&ctx.layout.model("kissme"))?;
            let d = m.dim();
            (MetricModel::Kissme(m), d)
        } else {
            let m = XqdaModel::load_json(&ctx.layout.model("xqda"))?;
            let d = m.subspace_dim();
            (MetricModel::Xqda(m), d)
        };
        return Ok((Prepared::Metric { query, gallery, model }, dim));
    }
    let net = load_network(ctx, method)?;
    let query = reidlab_core::distill::deep_features(&net, &ctx.deep_split("query")?)?;
    let gallery = reidlab_core::distill::deep_features(&net, &ctx.deep_split("gallery")?)?;
    let dim = query.dim();
    Ok((Prepared::Deep { query, gallery }, dim))
}

fn eval_one(ctx: &Ctx, method: &str) -> Result<EvalReport> {
    let exclude = ctx.config.protocol.exclude_same_camera_positives;
    let (prepared, _) = prepare(ctx, method)?;
    match &prepared {
        Prepared::Metric { query, gallery, model } => {
            let distance = match model {
                MetricModel::Euclidean => Distance::Euclidean,
                MetricModel::Kissme(m) => Distance::Mahalanobis(m),
                MetricModel::Xqda(m) => Distance::Xqda(m),
            };
            evaluate(
                query,
                gallery,
                &ProtocolConfig {
                    exclude_same_camera_positives: exclude,
                    distance,
                },
            )
        }
        Prepared::Deep { query, gallery } => evaluate(
            query,
            gallery,
            &ProtocolConfig {
                exclude_same_camera_positives: exclude,
                distance: Distance::Euclidean,
            },
        ),
    }
}

pub fn eval(ctx: &Ctx, methods: &[String]) -> Result<()> {
    let methods = check_methods(&ctx.config, methods)?;
    for m in &methods {
        let report = eval_one(ctx, m)?;
        report.save(
            &ctx.layout.report(&format!("eval_{m}.json")),
            &ctx.layout.report(&format!("eval_{m}.csv")),
        )?;
        if !ctx.quiet {
            println!("{}", report.table_row(m));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bench / report

/// What a method has to compute for one query image.
enum Extractor {
    Descriptor,
    DescriptorPca(PcaModel),
    DescriptorPcaXqda(PcaModel, XqdaModel),
    Copy,
    Pca(PcaModel),
    PcaXqda(PcaModel, XqdaModel),
    Net { pca: Option<PcaModel>, net: MlpNetwork },
}

#[derive(Clone)]
enum BenchInput {
    Image(Image),
    Vector(Vec<f64>),
}

fn build_extractor(ctx: &Ctx, method: &str) -> Result<(Extractor, bool)> {
    let c = &ctx.config;
    let handcrafted = c.images.enabled;
    let branch = ctx.metric_branch();
    let xqda = || XqdaModel::load_json(&ctx.layout.model("xqda"));
    let pca = || PcaModel::load_json(&ctx.layout.model("pca"));
    let ex = match method.strip_prefix(&format!("{branch}-")) {
        Some("euclidean") if handcrafted => Extractor::Descriptor,
        Some("euclidean") => Extractor::Copy,
        Some(kind) if c.metric.pca_dim == 0 => match kind {
            "kissme" if handcrafted => Extractor::Descriptor,
            "kissme" => Extractor::Copy,
            _ => return Err(Error::Config("timing xqda requires metric.pca_dim > 0".into())),
        },
        Some("kissme") if handcrafted => Extractor::DescriptorPca(pca()?),
        Some("kissme") => Extractor::Pca(pca()?),
        Some(_) if handcrafted => Extractor::DescriptorPcaXqda(pca()?, xqda()?),
        Some(_) => Extractor::PcaXqda(pca()?, xqda()?),
        None => {
            let net = load_network(ctx, method)?;
            let from_images = c.deep.input == DeepInput::Handcrafted;
            let pca = if from_images { ctx.load_pca()? } else { None };
            return Ok((Extractor::Net { pca, net }, from_images));
        }
    };
    Ok((ex, handcrafted))
}

fn run_extractor(
    ex: &Extractor,
    cfg: &reidlab_core::descriptor::DescriptorConfig,
    input: &BenchInput,
) -> Result<Vec<f64>> {
    let descriptor = |img: &Image| extract_handcrafted(img, cfg);
    match (ex, input) {
        (Extractor::Descriptor, BenchInput::Image(img)) => descriptor(img),
        (Extractor::DescriptorPca(p), BenchInput::Image(img)) => p.apply(&descriptor(img)?),
        (Extractor::DescriptorPcaXqda(p, x), BenchInput::Image(img)) => x.project(&p.apply(&descriptor(img)?)?),
        (Extractor::Copy, BenchInput::Vector(v)) => Ok(v.clone()),
        (Extractor::Pca(p), BenchInput::Vector(v)) => p.apply(v),
        (Extractor::PcaXqda(p, x), BenchInput::Vector(v)) => x.project(&p.apply(v)?),
        (Extractor::Net { pca, net }, BenchInput::Image(img)) => {
            let d = descriptor(img)?;
            match pca {
                Some(p) => net.extract_one(&p.apply(&d)?),
                None => net.extract_one(&d),
            }
        }
        (Extractor::Net { net, .. }, BenchInput::Vector(v)) => net.extract_one(v),
        _ => Err(Error::Usage("extractor and input kind disagree".into())),
    }
}

fn bench_inputs(ctx: &Ctx, images: bool) -> Result<Vec<BenchInput>> {
    let n = ctx.config.bench.items;
    let pool: Vec<BenchInput> = if images {
        load_image_corpus(&ctx.layout.images())?
            .into_iter()
            .map(|li| BenchInput::Image(li.image))
            .collect()
    } else {
        ctx.load_split("raw", "query")?
            .into_records()
            .into_iter()
            .map(|r| BenchInput::Vector(r.vector))
            .collect()
    };
    if pool.is_empty() {
        return Err(Error::EmptyDataset("no benchmark inputs".into()));
    }
    Ok((0..n).map(|i| pool[i % pool.len()].clone()).collect())
}

pub fn bench(ctx: &Ctx, methods: &[String]) -> Result<()> {
    let c = &ctx.config;
    let methods = check_methods(c, methods)?;
    for m in &methods {
        let (ex, images) = build_extractor(ctx, m)?;
        let inputs = bench_inputs(ctx, images)?;
        let cfg = &c.descriptor;
        let result = measure_throughput(
            m,
            |x: &BenchInput| run_extractor(&ex, cfg, x),
            &inputs,
            c.bench.warmup,
            c.bench.repetitions,
        )?;
        result.save_json(&ctx.layout.report(&format!("throughput_{m}.json")))?;
        if c.bench.parallel {
            let par = measure_throughput_parallel(
                m,
                |x: &BenchInput| run_extractor(&ex, cfg, x),
                &inputs,
                c.bench.warmup,
                c.bench.repetitions,
            )?;
            par.save_json(&ctx.layout.report(&format!("throughput_{m}_parallel.json")))?;
        }
        ctx.say(format!("{m}: {:.1} images/s", result.images_per_second));
    }
    Ok(())
}

pub fn manifest(c: &RunConfig) -> Result<RunManifest> {
    // The output directory is not part of the experiment's identity.
    let snapshot = RunConfig {
        out: PathBuf::new(),
        ..c.clone()
    }
    .to_toml()?;
    let stages = [
        "gen-data",
        "split",
        "gen-images",
        "fit-metric",
        "train-teacher",
        "train-student",
    ];
    let mut seeds: BTreeMap<String, u64> = stages.iter().map(|s| (s.to_string(), c.stage_seed(s))).collect();
    seeds.insert("global".to_string(), c.seed);
    Ok(RunManifest {
        run_id: crate::config::sha256_hex(snapshot.as_bytes())[..16].to_string(),
        seeds,
        dataset_spec_hash: c.dataset_hash()?,
        config_hashes: c.section_hashes()?,
        notes: vec![
            "images/s from a single-threaded monotonic-clock loop; every method timed on the same CPU".to_string(),
        ],
    })
}

pub fn report(ctx: &Ctx, methods: &[String]) -> Result<()> {
    let c = &ctx.config;
    let methods = check_methods(c, methods)?;
    let manifest = manifest(c)?;
    let mut entries = Vec::with_capacity(methods.len());
    for m in &methods {
        let eval = EvalReport::load_json(&ctx.layout.report(&format!("eval_{m}.json")))?;
        let throughput = ThroughputResult::load_json(&ctx.layout.report(&format!("throughput_{m}.json")))?;
        let (feature_dim, param_count) = if DEEP_METHODS.contains(&m.as_str()) {
            let net = load_network(ctx, m)?;
            let dim = net.spec().feature_dim().unwrap_or(net.spec().input_dim);
            (dim, Some(net.param_count() as u64))
        } else {
            (prepare(ctx, m)?.1, None)
        };
        entries.push(TradeoffEntry {
            method: m.clone(),
            run_id: manifest.run_id.clone(),
            eval,
            throughput,
            feature_dim,
            param_count,
        });
    }
    let report = build_tradeoff_report(manifest, entries)?;
    report.save(&ctx.layout.reports())?;
    if !ctx.quiet {
        print!("{}", report.table());
    }
    Ok(())
}
