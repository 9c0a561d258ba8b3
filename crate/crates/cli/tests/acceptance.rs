//! Acceptance checks, one line per criterion. Runs as a plain binary so the
//! verdict lines are always printed; exits non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reidlab_core::bench::measure_throughput;
use reidlab_core::dataset::{
    generate_synthetic, split_train_query_gallery, FeatureDataset, LabeledFeature, Split, SplitSpec, SyntheticSpec,
};
use reidlab_core::distill::{
    cache_teacher_outputs, distillation_loss, entropy, evaluate_network, tempered_softmax,
    train_student_with_distillation, DistillConfig,
};
use reidlab_core::eval::{cmc_at_k, evaluate, ranked_lists, Distance, ProtocolConfig};
use reidlab_core::metric::{fit_kissme_on, fit_xqda, XqdaOptions};
use reidlab_core::neural::{
    accuracy, init_network, input_matrix, softmax, softmax_cross_entropy, train_classifier, MlpNetwork, MlpSpec,
    TrainConfig,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------------------
// 1. tempered softmax

fn tempered_softmax_suite() -> Verdict {
    const TEMPS: [f64; 7] = [1.0, 2.0, 3.0, 5.0, 10.0, 20.0, 30.0];
    let mut r = rng(11);
    let (mut worst_sum, mut worst_t1, mut worst_uniform) = (0.0f64, 0.0f64, 0.0f64);
    let mut monotone_violations = 0;
    let mut vectors = 0;
    while vectors < 1000 {
        let k = r.random_range(2..=40);
        let scale = [0.1, 1.0, 5.0, 20.0][r.random_range(0..4)];
        let z: Vec<f64> = (0..k).map(|_| r.random_range(-1.0..1.0) * scale).collect();
        if z.iter().all(|&v| v == z[0]) {
            continue;
        }
        vectors += 1;
        let mut last = f64::NEG_INFINITY;
        for t in TEMPS {
            let p = tempered_softmax(&z, t);
            worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
            let h = entropy(&p).expect("a softmax output is a distribution");
            if h < last {
                monotone_violations += 1;
            }
            last = h;
        }
        let p1 = tempered_softmax(&z, 1.0);
        let c = softmax(&z);
        worst_t1 = p1.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(worst_t1, f64::max);
        let u = 1.0 / k as f64;
        worst_uniform = tempered_softmax(&z, 1e6)
            .iter()
            .map(|p| (p - u).abs())
            .fold(worst_uniform, f64::max);
    }
    verdict(
        worst_sum <= 1e-12 && worst_t1 <= 1e-12 && monotone_violations == 0 && worst_uniform < 1e-5,
        format!(
            "sum err {worst_sum:.1e}, T=1 err {worst_t1:.1e}, entropy decreases {monotone_violations}, \
             uniform dev {worst_uniform:.1e}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. gradients

/// Largest entry-wise discrepancy relative to the largest gradient entry.
fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().chain(numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

const H: f64 = 1e-5;

fn central<F: FnMut(&[f64]) -> f64>(x: &[f64], mut f: F) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[i] += H;
            dn[i] -= H;
            (f(&up) - f(&dn)) / (2.0 * H)
        })
        .collect()
}

fn flatten(net: &MlpNetwork) -> Vec<f64> {
    net.layers()
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
        .collect()
}

fn unflatten(net: &mut MlpNetwork, theta: &[f64]) {
    let mut k = 0;
    for l in net.layers_mut() {
        for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
            *w = theta[k];
            k += 1;
        }
    }
}

/// Per-example `(logits_row, row) -> (loss, grad wrt logits)`.
type Objective<'a> = &'a dyn Fn(&[f64], usize) -> (f64, Vec<f64>);

/// Mean batch loss under `per_example(logits_row, row) -> (loss, grad)`.
fn batch_loss(net: &MlpNetwork, x: &DMatrix<f64>, per_example: Objective) -> f64 {
    let logits = net.logits(x).unwrap();
    (0..x.nrows())
        .map(|r| per_example(&logits.row(r).iter().copied().collect::<Vec<_>>(), r).0)
        .sum::<f64>()
        / x.nrows() as f64
}

fn backprop(net: &MlpNetwork, x: &DMatrix<f64>, per_example: Objective) -> Vec<f64> {
    let (logits, cache) = net.forward(x).unwrap();
    let mut g = DMatrix::zeros(logits.nrows(), logits.ncols());
    for r in 0..logits.nrows() {
        let (_, grad) = per_example(&logits.row(r).iter().copied().collect::<Vec<_>>(), r);
        for (c, v) in grad.into_iter().enumerate() {
            g[(r, c)] = v;
        }
    }
    let grads = net.backward(&cache, &g).unwrap();
    grads
        .layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
        .collect()
}

fn gradient_oracle() -> Verdict {
    let mut r = rng(22);
    let (mut worst_loss, mut worst_ce, mut worst_kd) = (0.0f64, 0.0f64, 0.0f64);
    let draws = 25;
    for draw in 0..draws {
        let k = r.random_range(2..=8);
        let t = [1.0, 2.0, 3.0, 7.5, 20.0][draw % 5];
        let lambda = [0.0, 1e-4, 0.01, 0.5, 1.0][r.random_range(0..5)];
        let cfg = DistillConfig::new(t, lambda, TrainConfig::default());
        let zt: Vec<f64> = (0..k).map(|_| r.random_range(-4.0..4.0)).collect();
        let zs: Vec<f64> = (0..k).map(|_| r.random_range(-4.0..4.0)).collect();
        let label = r.random_range(0..k);
        let (_, analytic) = distillation_loss(&zt, &zs, label, &cfg).unwrap();
        let numeric = central(&zs, |z| distillation_loss(&zt, z, label, &cfg).unwrap().0.total);
        worst_loss = worst_loss.max(relative_error(&analytic, &numeric));

        let spec = MlpSpec {
            input_dim: r.random_range(2..=6),
            hidden_widths: vec![r.random_range(3..=7), r.random_range(2..=5)],
            num_classes: k,
            width_multiplier: 1.0,
        };
        let mut net = init_network(&spec, 100 + draw as u64).unwrap();
        for l in net.layers_mut() {
            for b in l.bias.iter_mut() {
                *b = r.random_range(-0.3..0.3);
            }
        }
        let n = r.random_range(1..=5);
        let x = DMatrix::from_fn(n, spec.input_dim, |_, _| r.random_range(-2.0..2.0));
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let teacher = DMatrix::from_fn(n, k, |_, _| r.random_range(-3.0..3.0));
        let theta = flatten(&net);

        let ce = |z: &[f64], row: usize| softmax_cross_entropy(z, labels[row]);
        let kd = |z: &[f64], row: usize| {
            let zt: Vec<f64> = teacher.row(row).iter().copied().collect();
            let (l, g) = distillation_loss(&zt, z, labels[row], &cfg).unwrap();
            (l.total, g)
        };
        for (objective, worst) in [(&ce as Objective, &mut worst_ce), (&kd, &mut worst_kd)] {
            let analytic = backprop(&net, &x, objective);
            let mut probe = net.clone();
            let numeric = central(&theta, |th| {
                unflatten(&mut probe, th);
                batch_loss(&probe, &x, objective)
            });
            *worst = worst.max(relative_error(&analytic, &numeric));
        }
    }
    verdict(
        worst_loss <= 1e-4 && worst_ce <= 1e-4 && worst_kd <= 1e-4,
        format!(
            "{draws} draws; worst relative error: loss {worst_loss:.1e}, backprop ce {worst_ce:.1e}, \
             backprop distill {worst_kd:.1e}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. retrieval

struct OracleResult {
    cmc: Vec<f64>,
    map: f64,
    scored: usize,
}

/// Exhaustive reference: a gallery item's rank is the number of kept items
/// strictly before it under (distance, index) order.
fn brute_force(query: &[LabeledFeature], gallery: &[LabeledFeature], exclude: bool, max_k: usize) -> OracleResult {
    let mut hits_at = vec![0usize; max_k + 1];
    let (mut ap_sum, mut scored) = (0.0, 0usize);
    for q in query {
        let kept: Vec<(usize, f64)> = gallery
            .iter()
            .enumerate()
            .filter(|(_, g)| !(exclude && g.id == q.id && g.camera == q.camera))
            .map(|(j, g)| (j, g.vector.iter().zip(&q.vector).map(|(a, b)| (a - b) * (a - b)).sum()))
            .collect();
        let rank_of = |j: usize, d: f64| kept.iter().filter(|&&(i, e)| e < d || (e == d && i < j)).count() + 1;
        let mut ranks: Vec<usize> = kept
            .iter()
            .filter(|&&(j, _)| gallery[j].id == q.id)
            .map(|&(j, d)| rank_of(j, d))
            .collect();
        if ranks.is_empty() {
            continue;
        }
        ranks.sort_unstable();
        scored += 1;
        for h in &mut hits_at[ranks[0]..=max_k] {
            *h += 1;
        }
        let mut ap = 0.0;
        for (n, &rank) in ranks.iter().enumerate() {
            ap += (n + 1) as f64 / rank as f64;
        }
        ap_sum += ap / ranks.len() as f64;
    }
    let denom = scored.max(1) as f64;
    OracleResult {
        cmc: hits_at.iter().map(|&h| h as f64 / denom).collect(),
        map: ap_sum / denom,
        scored,
    }
}

fn random_records(r: &mut ChaCha8Rng, n: usize, ids: u32) -> Vec<LabeledFeature> {
    (0..n)
        .map(|_| LabeledFeature {
            id: r.random_range(0..ids),
            camera: r.random_range(0..3),
            vector: (0..3).map(|_| r.random_range(0..3) as f64).collect(),
        })
        .collect()
}

fn retrieval_oracle() -> Verdict {
    let mut r = rng(33);
    let (mut instances, mut mismatches, mut checked_queries) = (0, 0, 0);
    while instances < 1000 {
        let ids = r.random_range(2..=5);
        let n_gallery = r.random_range(1..=30);
        let gallery = random_records(&mut r, n_gallery, ids);
        let n_query = r.random_range(1..=4);
        let query = random_records(&mut r, n_query, ids);
        let exclude = r.random_bool(0.5);
        let oracle = brute_force(&query, &gallery, exclude, 30);
        if oracle.scored == 0
            || (exclude
                && query
                    .iter()
                    .any(|q| gallery.iter().all(|g| g.id == q.id && g.camera == q.camera)))
        {
            continue;
        }
        instances += 1;
        checked_queries += query.len();
        let (qd, gd) = (
            FeatureDataset::new(query).unwrap(),
            FeatureDataset::new(gallery).unwrap(),
        );
        let protocol = ProtocolConfig {
            exclude_same_camera_positives: exclude,
            distance: Distance::Euclidean,
        };
        let report = evaluate(&qd, &gd, &protocol).unwrap();
        let lists = ranked_lists(&qd, &gd, &protocol).unwrap();
        let cmc_ok = (1..=30).all(|k| cmc_at_k(&lists, k).fraction == oracle.cmc[k]);
        if !(cmc_ok && report.rank1 == oracle.cmc[1] && report.rank5 == oracle.cmc[5] && report.map == oracle.map) {
            mismatches += 1;
        }
    }
    verdict(
        mismatches == 0,
        format!("{instances} instances, {checked_queries} queries, {mismatches} mismatches"),
    )
}

// ---------------------------------------------------------------------------
// 4. metric ordering

fn split_for(spec: &SyntheticSpec, seed: u64) -> Split {
    let ds = generate_synthetic(spec, seed).unwrap();
    split_train_query_gallery(&ds, &SplitSpec::default(), seed).unwrap()
}

fn metric_spec() -> SyntheticSpec {
    SyntheticSpec {
        num_identities: 60,
        records_per_identity: 10,
        num_cameras: 4,
        dim: 32,
        intra_class_stddev: 0.9,
        camera_shift_stddev: 1.0,
        class_center_stddev: 1.0,
    }
}

fn rank1(split: &Split, distance: Distance) -> f64 {
    let protocol = ProtocolConfig {
        exclude_same_camera_positives: true,
        distance,
    };
    evaluate(&split.query, &split.gallery, &protocol).unwrap().rank1
}

fn xqda_rank1(split: &Split, max_dim: usize, seed: u64) -> f64 {
    let t = &split.train;
    let model = fit_xqda(&t.vectors(), &t.ids(), &t.cameras(), &XqdaOptions::new(max_dim, seed)).unwrap();
    rank1(split, Distance::Xqda(&model))
}

fn metric_ordering() -> Verdict {
    let spec = metric_spec();
    let (mut eu, mut ki, mut xq) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..20 {
        let split = split_for(&spec, seed);
        let t = &split.train;
        let kissme = fit_kissme_on(&t.vectors(), &t.ids(), seed).unwrap();
        eu.push(rank1(&split, Distance::Euclidean));
        ki.push(rank1(&split, Distance::Mahalanobis(&kissme)));
        xq.push(xqda_rank1(&split, spec.dim, seed));
    }
    let wins = xq.iter().zip(&eu).filter(|(x, e)| x >= e).count();
    let (me, mk, mx) = (mean(&eu), mean(&ki), mean(&xq));
    verdict(
        me <= mk && me <= mx && wins * 10 >= 9 * eu.len(),
        format!("mean rank-1 euclidean {me:.3}, kissme {mk:.3}, xqda {mx:.3}; xqda >= euclidean in {wins}/20 seeds"),
    )
}

// ---------------------------------------------------------------------------
// 5-6. distillation

fn distill_spec() -> SyntheticSpec {
    SyntheticSpec {
        num_identities: 40,
        records_per_identity: 12,
        num_cameras: 4,
        dim: 32,
        intra_class_stddev: 0.6,
        camera_shift_stddev: 1.0,
        class_center_stddev: 1.0,
    }
}

fn distill_train(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.02,
        batch_size: 16,
        epochs: 40,
        seed,
        ..TrainConfig::default()
    }
}

fn teacher_spec(input_dim: usize, classes: usize) -> MlpSpec {
    MlpSpec {
        input_dim,
        hidden_widths: vec![128, 64],
        num_classes: classes,
        width_multiplier: 1.0,
    }
}

struct DistillSetup {
    split: Split,
    x: DMatrix<f64>,
    labels: Vec<usize>,
    classes: usize,
    teacher: MlpNetwork,
    teacher_accuracy: f64,
}

fn distill_setup(seed: u64) -> DistillSetup {
    let split = split_for(&distill_spec(), seed);
    let (labels, classes) = split.train.class_labels();
    let x = input_matrix(&split.train.vectors()).unwrap();
    let (teacher, _) = train_classifier(
        &teacher_spec(x.ncols(), classes.len()),
        &x,
        &labels,
        &distill_train(1000 + seed),
    )
    .unwrap();
    let teacher_accuracy = accuracy(&teacher, &x, &labels).unwrap();
    DistillSetup {
        classes: classes.len(),
        split,
        x,
        labels,
        teacher,
        teacher_accuracy,
    }
}

fn distillation_benefit() -> Verdict {
    let seeds = 20;
    let (mut ind, mut t1, mut t3, mut min_acc) = (Vec::new(), Vec::new(), Vec::new(), f64::INFINITY);
    let mut identities = 0;
    for seed in 0..seeds {
        let s = distill_setup(seed);
        identities = s.classes;
        min_acc = min_acc.min(s.teacher_accuracy);
        let student = teacher_spec(s.x.ncols(), s.classes).with_width_multiplier(0.25);
        let train = distill_train(2000 + seed);
        let cache = cache_teacher_outputs(&s.teacher, &s.x).unwrap();
        let eval = |net: &MlpNetwork| {
            evaluate_network(net, &s.split.query, &s.split.gallery, true)
                .unwrap()
                .rank1
        };
        let (independent, _) = train_classifier(&student, &s.x, &s.labels, &train).unwrap();
        ind.push(eval(&independent));
        for (t, out) in [(1.0, &mut t1), (3.0, &mut t3)] {
            let cfg = DistillConfig::new(t, 1e-4, train.clone());
            let (net, _) = train_student_with_distillation(&cache, &student, &s.x, &s.labels, &cfg).unwrap();
            out.push(eval(&net));
        }
    }
    let (mi, m1, m3) = (mean(&ind), mean(&t1), mean(&t3));
    verdict(
        identities == 20 && min_acc >= 0.95 && m3 >= mi && m3 >= m1,
        format!(
            "{seeds} seeds, {identities} train identities, min teacher train acc {min_acc:.3}; mean rank-1 \
             independent {mi:.3}, distilled T=1 {m1:.3}, distilled T=3 {m3:.3}"
        ),
    )
}

fn loss_balance() -> Verdict {
    let s = distill_setup(0);
    let student = teacher_spec(s.x.ncols(), s.classes).with_width_multiplier(0.25);
    let cache = cache_teacher_outputs(&s.teacher, &s.x).unwrap();
    let epoch_one = |lambda: f64| {
        let cfg = DistillConfig::new(
            3.0,
            lambda,
            TrainConfig {
                epochs: 1,
                ..distill_train(2000)
            },
        );
        let (_, log) = train_student_with_distillation(&cache, &student, &s.x, &s.labels, &cfg).unwrap();
        (log.epoch_distill_term[0], log.epoch_weighted_ce_term[0])
    };
    let (soft_lo, ce_lo) = epoch_one(1e-4);
    let (soft_hi, ce_hi) = epoch_one(1e-2);
    let (ratio_lo, ratio_hi) = (soft_lo / ce_lo, soft_hi / ce_hi);
    verdict(
        soft_lo > ce_lo && ratio_lo / ratio_hi >= 10.0,
        format!(
            "epoch 1, T=3: lambda=1e-4 distill {soft_lo:.3} vs weighted ce {ce_lo:.2e} (ratio {ratio_lo:.0}); \
             lambda=1e-2 distill {soft_hi:.3} vs {ce_hi:.2e} (ratio {ratio_hi:.0}); narrowing {:.0}x",
            ratio_lo / ratio_hi
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. XQDA dimensionality

fn xqda_dimensionality() -> Verdict {
    let spec = metric_spec();
    let (mut lo, mut hi, mut dims) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..10 {
        let split = split_for(&spec, 100 + seed);
        let t = &split.train;
        let full = fit_xqda(&t.vectors(), &t.ids(), &t.cameras(), &XqdaOptions::new(spec.dim, seed)).unwrap();
        dims.push(full.subspace_dim());
        hi.push(rank1(&split, Distance::Xqda(&full)));
        lo.push(xqda_rank1(&split, 1, seed));
    }
    let (ml, mh) = (mean(&lo), mean(&hi));
    verdict(
        mh >= ml,
        format!(
            "{} informative dims; mean rank-1 at dim 1 {ml:.3}, at max admissible dim ({}..{}) {mh:.3}",
            spec.dim,
            dims.iter().min().unwrap(),
            dims.iter().max().unwrap()
        ),
    )
}

// ---------------------------------------------------------------------------
// 8. throughput

fn throughput_ordering() -> Verdict {
    let base = MlpSpec {
        input_dim: 256,
        hidden_widths: vec![1024, 512],
        num_classes: 100,
        width_multiplier: 1.0,
    };
    let mut r = rng(88);
    let inputs: Vec<Vec<f64>> = (0..400)
        .map(|_| (0..base.input_dim).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let alphas = [0.25, 0.5, 0.75, 1.0];
    let mut rates = Vec::new();
    let mut worst_recompute = 0.0f64;
    for a in alphas {
        let net = init_network(&base.with_width_multiplier(a), 1).unwrap();
        let t = measure_throughput(&format!("mlp-{a}"), |x: &Vec<f64>| net.extract_one(x), &inputs, 50, 5).unwrap();
        worst_recompute = worst_recompute.max((t.recomputed_rate() - t.images_per_second).abs() / t.images_per_second);
        rates.push(t.images_per_second);
    }
    let ordered = rates.windows(2).all(|w| w[1] <= w[0] * 1.02);
    let shown: Vec<String> = alphas.iter().zip(&rates).map(|(a, r)| format!("{a}: {r:.0}")).collect();
    verdict(
        ordered && worst_recompute <= 1e-3,
        format!(
            "images/s by alpha [{}]; recompute error {worst_recompute:.1e}",
            shown.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 9. determinism

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn run_pipeline(root: &Path, out: &Path) -> Result<(), String> {
    let status = Command::new("bash")
        .arg(root.join("scripts/pipeline.sh"))
        .arg(root.join("configs/default.toml"))
        .arg(out)
        .arg("7")
        .env("REIDLAB", env!("CARGO_BIN_EXE_reidlab"))
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("pipeline exited with {status}"))
    }
}

/// Files that must match byte for byte: everything except timing outputs.
fn compared_files(out: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    for dir in ["features", "models", "reports"] {
        let Ok(entries) = std::fs::read_dir(out.join(dir)) else {
            continue;
        };
        for e in entries.flatten() {
            let name = e.file_name().to_string_lossy().into_owned();
            let timed = name.starts_with("throughput_") || name.starts_with("tradeoff") || name == "scatter.csv";
            if !timed {
                files.push(Path::new(dir).join(name));
            }
        }
    }
    files.sort();
    files
}

fn determinism() -> Verdict {
    let root = workspace_root();
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        if let Err(e) = run_pipeline(&root, out) {
            return verdict(false, e);
        }
    }
    let files = compared_files(&a);
    let expected = ["features", "models", "reports/sweep", "reports/eval_"];
    let covered = expected
        .iter()
        .all(|p| files.iter().any(|f| f.to_string_lossy().starts_with(p)));
    let differing: Vec<String> = files
        .iter()
        .filter(|f| std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok())
        .map(|f| f.display().to_string())
        .collect();
    let same_listing = files == compared_files(&b);
    verdict(
        covered && same_listing && differing.is_empty(),
        format!("{} files compared, differing: {:?}", files.len(), differing),
    )
}

// ---------------------------------------------------------------------------

fn main() {
    type Criterion = (&'static str, Duration, fn() -> Verdict);
    let criteria: [Criterion; 9] = [
        ("tempered softmax suite", Duration::from_secs(5), tempered_softmax_suite),
        ("gradient oracle", Duration::from_secs(30), gradient_oracle),
        ("retrieval oracle", Duration::from_secs(10), retrieval_oracle),
        ("metric-learning ordering", Duration::from_secs(120), metric_ordering),
        ("distillation benefit", Duration::from_secs(600), distillation_benefit),
        ("loss-term balance", Duration::from_secs(120), loss_balance),
        (
            "xqda dimensionality trend",
            Duration::from_secs(120),
            xqda_dimensionality,
        ),
        ("throughput ordering", Duration::from_secs(60), throughput_ordering),
        ("pipeline determinism", Duration::from_secs(600), determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let elapsed = start.elapsed();
        let pass = v.pass && elapsed <= *budget;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {}. {name}: {} [{:.2}s of {}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
