//! Acceptance run over the bundled synthetic corpora.
//!
//! Prints one PASS/FAIL line per criterion and exits non-zero if any fails.
//! Nothing here is tuned per run: the corpora, model settings and seeds are
//! the ones in `embedrel::presets`, and `data/` must match what they
//! regenerate.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use embedrel::attribution::{conservation_report, lrp, saliency, ClassPolicy, Method};
use embedrel::corpus::Corpus;
use embedrel::evaluation::{
    downstream_classify, embed_with_word_scores, emit_report, Classifier, FeatureKind,
    LabeledVectors, PerturbationCurve, RemovalPolicy, WeightScheme, WeightedDocEmbedding,
};
use embedrel::pipeline::{eval_removal, eval_steering, eval_words, run_all, EvalSettings};
use embedrel::presets::{binary_corpus, desk_model, four_class_corpus, load_synthetic};
use embedrel::synth::{generate, write_corpus};
use embedrel::textcnn::{evaluate, train, ModelConfig, ModelParams, Overrides};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-4;
const FD_TOLERANCE: f64 = 1e-4;
const CONSERVATION_TOLERANCE: f64 = 1e-6;
const ORACLE_TOLERANCE: f64 = 1e-10;
const MIN_VAL_ACCURACY: f64 = 0.95;
const MIN_GAP: f64 = 0.10;
const SMALLEST_ABS_BAND: f64 = 0.02;
const MIN_KNN_GAIN: f64 = 0.05;

struct Outcome {
    id: &'static str,
    name: &'static str,
    pass: bool,
    detail: String,
}

struct Trained {
    corpus: Corpus,
    params: ModelParams,
    val_accuracy: f64,
    train_time: Duration,
}

fn workspace() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn bundled(stem: &str) -> (PathBuf, PathBuf) {
    let data = workspace().join("data");
    (
        data.join(format!("{stem}.jsonl")),
        data.join(format!("{stem}.manifest.json")),
    )
}

fn train_desk(stem: &str) -> Trained {
    let (corpus_path, manifest_path) = bundled(stem);
    let corpus = load_synthetic(&corpus_path, &manifest_path).expect("bundled corpus loads");
    let config = desk_model(&corpus);
    let start = Instant::now();
    let (params, _log) = train(&corpus, &config).expect("training succeeds");
    let train_time = start.elapsed();
    let val_accuracy = evaluate(&params, corpus.validation_docs()).unwrap().accuracy;
    Trained {
        corpus,
        params,
        val_accuracy,
        train_time,
    }
}

fn data_matches_presets() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut mismatched = Vec::new();
    for (stem, config) in [("synth_binary", binary_corpus()), ("synth_4class", four_class_corpus())] {
        let (docs, manifest) = generate(&config).unwrap();
        let corpus = dir.path().join("c.jsonl");
        let man = dir.path().join("c.manifest.json");
        write_corpus(&docs, &manifest, &corpus, &man).unwrap();
        let (want_corpus, want_manifest) = bundled(stem);
        if fs::read(&corpus).unwrap() != fs::read(want_corpus).unwrap()
            || fs::read(&man).unwrap() != fs::read(want_manifest).unwrap()
        {
            mismatched.push(stem);
        }
    }
    Outcome {
        id: "0",
        name: "bundled corpora regenerate from presets",
        pass: mismatched.is_empty(),
        detail: if mismatched.is_empty() {
            "data/synth_binary and data/synth_4class byte-identical".into()
        } else {
            format!("differs: {mismatched:?}")
        },
    }
}

fn tiny_random_model(rng: &mut ChaCha8Rng, use_bias: bool) -> ModelParams {
    let config = ModelConfig {
        vocab_size: 12,
        embed_dim: 5,
        filter_widths: vec![2, 3],
        filters_per_width: 3,
        num_classes: 3,
        seq_len: 9,
        use_bias,
        ..ModelConfig::default()
    };
    let mut params = ModelParams::init(&config, rng).unwrap();
    let mut fill = |values: &mut [f64]| values.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    fill(params.embedding.as_mut_slice());
    fill(params.dense_weights.as_mut_slice());
    for block in &mut params.conv {
        fill(block.weights.as_mut_slice());
        if use_bias {
            fill(&mut block.bias);
        }
    }
    if use_bias {
        fill(&mut params.dense_bias);
    }
    params
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for model in 0..10 {
        let params = tiny_random_model(&mut rng, model % 2 == 1);
        let cfg = &params.config;
        let ids: Vec<u32> = (0..cfg.seq_len)
            .map(|_| rng.gen_range(1..cfg.vocab_size as u32))
            .collect();
        let class = rng.gen_range(0..cfg.num_classes);
        let sa = saliency(&params, 0, &ids, class).unwrap();
        let base = params.embed(&ids).unwrap();
        for _ in 0..20 {
            let j = rng.gen_range(0..cfg.seq_len);
            let k = rng.gen_range(0..cfg.embed_dim);
            let logit_at = |delta: f64| {
                let mut e = base.clone();
                e.add_at(j, k, delta);
                params.forward_embedded(e, &Overrides::none()).unwrap().logits[class]
            };
            let fd = (logit_at(FD_STEP) - logit_at(-FD_STEP)) / (2.0 * FD_STEP);
            let analytic = sa.relevance.get(j, k);
            let scale = analytic.abs().max(fd.abs()).max(1e-8);
            worst = worst.max((analytic - fd).abs() / scale);
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        id: "1",
        name: "saliency matches central differences",
        pass: worst <= FD_TOLERANCE && elapsed < Duration::from_secs(10),
        detail: format!("{checked} coordinates, max rel err {worst:.2e}, {elapsed:.2?}"),
    }
}

fn criterion_2(binary: &Trained) -> Outcome {
    let start = Instant::now();
    let docs = binary.corpus.validation_docs().take(200);
    let report = conservation_report(
        &binary.params,
        docs,
        ClassPolicy::TrueLabel,
        binary.params.config.epsilon_lrp,
        CONSERVATION_TOLERANCE,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let pooled = report
        .entries
        .iter()
        .map(|e| e.pooled_residual / e.logit.abs().max(1.0))
        .fold(0.0, f64::max);
    let embedded = report
        .entries
        .iter()
        .map(|e| e.embedded_residual / e.logit.abs().max(1.0))
        .fold(0.0, f64::max);
    let flagged = report.flagged().count();
    Outcome {
        id: "2",
        name: "LRP conservation on a bias-free trained model",
        pass: report.bias_free
            && report.entries.len() == 200
            && flagged == 0
            && pooled <= CONSERVATION_TOLERANCE
            && embedded <= CONSERVATION_TOLERANCE
            && elapsed < Duration::from_secs(30),
        detail: format!(
            "{} docs, max scaled residual pooled {pooled:.1e} embedded {embedded:.1e}, {elapsed:.2?}",
            report.entries.len()
        ),
    }
}

/// ε-rule LRP for input → ReLU hidden → output, written unit by unit.
fn two_layer_lrp(
    x: &[f64],
    w1: &[Vec<f64>],
    b1: &[f64],
    w2: &[Vec<f64>],
    b2: &[f64],
    class: usize,
    eps: f64,
) -> (Vec<f64>, Vec<f64>) {
    let stab = |z: f64| z + eps * if z >= 0.0 { 1.0 } else { -1.0 };
    let mut z1 = vec![0.0; w1.len()];
    for h in 0..w1.len() {
        z1[h] = b1[h];
        for i in 0..x.len() {
            z1[h] += x[i] * w1[h][i];
        }
    }
    let a: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
    let mut out = b2[class];
    for h in 0..a.len() {
        out += a[h] * w2[h][class];
    }
    let mut r_hidden = vec![0.0; a.len()];
    for h in 0..a.len() {
        r_hidden[h] = a[h] * w2[h][class] / stab(out) * out;
    }
    let mut r_in = vec![0.0; x.len()];
    for h in 0..a.len() {
        if a[h] <= 0.0 {
            continue;
        }
        for i in 0..x.len() {
            r_in[i] += x[i] * w1[h][i] / stab(z1[h]) * r_hidden[h];
        }
    }
    (r_hidden, r_in)
}

fn criterion_3() -> Outcome {
    // seq_len equal to the single filter width leaves one window, so the
    // network is exactly input → dense ReLU → dense.
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    for net in 0..25 {
        let width = 2 + net % 3;
        let embed_dim = 1 + net % 2;
        let config = ModelConfig {
            vocab_size: 7,
            embed_dim,
            filter_widths: vec![width],
            filters_per_width: 3,
            num_classes: 2 + net % 2,
            seq_len: width,
            use_bias: net % 2 == 0,
            epsilon_lrp: [1e-9, 0.01, 0.1][net % 3],
            ..ModelConfig::default()
        };
        let mut params = ModelParams::init(&config, &mut rng).unwrap();
        let mut fill = |v: &mut [f64]| v.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        fill(params.embedding.as_mut_slice());
        fill(params.conv[0].weights.as_mut_slice());
        fill(params.dense_weights.as_mut_slice());
        if config.use_bias {
            fill(&mut params.conv[0].bias);
            fill(&mut params.dense_bias);
        }
        let ids: Vec<u32> = (0..width).map(|_| rng.gen_range(1..7)).collect();
        let x: Vec<f64> = ids
            .iter()
            .flat_map(|&id| params.embedding.row(id as usize).to_vec())
            .collect();
        let w1: Vec<Vec<f64>> = (0..3).map(|f| params.conv[0].weights.row(f).to_vec()).collect();
        let w2: Vec<Vec<f64>> = (0..3).map(|f| params.dense_weights.row(f).to_vec()).collect();
        for class in 0..config.num_classes {
            let (r_hidden, r_in) = two_layer_lrp(
                &x,
                &w1,
                &params.conv[0].bias,
                &w2,
                &params.dense_bias,
                class,
                config.epsilon_lrp,
            );
            let got = lrp(&params, 0, &ids, class).unwrap();
            for (a, b) in got.filter_scores.iter().zip(&r_hidden) {
                worst = worst.max((a - b).abs());
            }
            for (a, b) in got.relevance.as_slice().iter().zip(&r_in) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Outcome {
        id: "3",
        name: "LRP equals a hand-unrolled two-layer oracle",
        pass: worst <= ORACLE_TOLERANCE,
        detail: format!("25 nets, max abs diff {worst:.1e}"),
    }
}

fn find<'c>(
    curves: &'c [PerturbationCurve],
    tag: &str,
    policy: RemovalPolicy,
    method: &str,
) -> &'c PerturbationCurve {
    curves
        .iter()
        .find(|c| c.subset_tag == tag && c.policy == policy && c.method == method)
        .unwrap_or_else(|| panic!("no {} {method} curve for {tag}", policy.slug()))
}

/// Largest-LRP removal is never better than random, is clearly worse at
/// some count, and smallest-absolute removal stays near random.
fn directional(curves: &[PerturbationCurve], tag: &str, counts: &[usize], lines: &mut Vec<String>) -> bool {
    let largest = find(curves, tag, RemovalPolicy::Largest, "lrp");
    let smallest = find(curves, tag, RemovalPolicy::SmallestAbs, "lrp");
    let random = find(curves, tag, RemovalPolicy::Random, "rand");
    let mut ok = true;
    let mut best_gap: f64 = f64::NEG_INFINITY;
    let mut parts = Vec::new();
    for &m in counts {
        let l = largest.accuracy_for(m).unwrap();
        let s = smallest.accuracy_for(m).unwrap();
        let r = random.accuracy_for(m).unwrap();
        ok &= l <= r;
        ok &= (s - r).abs() <= SMALLEST_ABS_BAND;
        best_gap = best_gap.max(r - l);
        parts.push(format!("m={m} L={l:.3} S={s:.3} R={r:.3}"));
    }
    ok &= best_gap >= MIN_GAP;
    lines.push(format!(
        "{} {tag}: {} gap {best_gap:.3} {}",
        largest.feature_kind.as_str(),
        parts.join(", "),
        if ok { "ok" } else { "FAILED" }
    ));
    ok
}

fn criterion_4(binary: &Trained, settings: &EvalSettings) -> (Outcome, Vec<PerturbationCurve>) {
    let mut lines = Vec::new();
    let mut pass = binary.val_accuracy >= MIN_VAL_ACCURACY && binary.train_time < Duration::from_secs(60);
    let mut all_curves = Vec::new();
    for (kind, counts) in [(FeatureKind::Column, [8, 16, 24]), (FeatureKind::Filter, [2, 4, 6])] {
        let curves = eval_removal(&binary.params, &binary.corpus, kind, settings).unwrap();
        let tags = std::iter::once("all".to_string())
            .chain((0..binary.corpus.num_classes).map(|c| format!("class{c}")));
        for tag in tags {
            pass &= directional(&curves, &tag, &counts, &mut lines);
        }
        all_curves.extend(curves);
    }
    let detail = format!(
        "val acc {:.4} after {:.2?}\n{}",
        binary.val_accuracy,
        binary.train_time,
        lines.iter().map(|l| format!("      {l}")).collect::<Vec<_>>().join("\n")
    );
    (
        Outcome {
            id: "4",
            name: "removal curves follow attribution rankings (binary)",
            pass,
            detail,
        },
        all_curves,
    )
}

fn criterion_5(four: &Trained, settings: &EvalSettings) -> Outcome {
    let class = settings.steer_class;
    let mut pass = true;
    let mut lines = Vec::new();
    for kind in [FeatureKind::Column, FeatureKind::Filter] {
        let table = eval_steering(&four.params, &four.corpus, kind, settings).unwrap();
        for metric in &table.metrics {
            for &m in &table.removal_counts {
                for method in [Method::Lrp, Method::Sa] {
                    let total: usize = (0..four.corpus.num_classes)
                        .map(|c| table.count(method, metric, m, c).unwrap())
                        .sum();
                    pass &= total == table.subset_size;
                }
            }
        }
        let max_m = *table.removal_counts.last().unwrap();
        let attr = format!("attr_{class}");
        for other in (0..four.corpus.num_classes).filter(|&c| c != class) {
            let diff = format!("attr_{class}-attr_{other}");
            let toward = table.count(Method::Lrp, &diff, max_m, other).unwrap();
            let plain = table.count(Method::Lrp, &attr, max_m, other).unwrap();
            pass &= toward > plain;
            lines.push(format!(
                "{} m={max_m} n={}: c'={other} diff {toward} vs attr {plain}",
                kind.as_str(),
                table.subset_size
            ));
        }
    }
    Outcome {
        id: "5",
        name: "difference rankings steer toward the contrast class (4-class)",
        pass: pass && four.val_accuracy >= MIN_VAL_ACCURACY,
        detail: format!(
            "val acc {:.4}\n{}",
            four.val_accuracy,
            lines.iter().map(|l| format!("      {l}")).collect::<Vec<_>>().join("\n")
        ),
    }
}

fn criterion_6(runs: &[(&str, &Trained)], settings: &EvalSettings) -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for (name, run) in runs {
        let entries = eval_words(&run.params, &run.corpus, settings).unwrap();
        let knn = |scheme| {
            entries
                .iter()
                .find(|e| e.scheme == scheme && e.classifier == Classifier::knn(5).name())
                .unwrap()
                .accuracy
        };
        let (w0, wlrp) = (knn(WeightScheme::W0), knn(WeightScheme::Lrp));
        pass &= wlrp >= w0 + MIN_KNN_GAIN;
        lines.push(format!("{name}: KNN(5) w0 {w0:.4} wLRP {wlrp:.4}"));

        // Identity control: unit word scores reproduce the plain average.
        let vectors = |docs: Vec<&embedrel::corpus::LabeledDocument>, ones: bool| {
            let e: Vec<WeightedDocEmbedding> = docs
                .iter()
                .map(|d| WeightedDocEmbedding {
                    doc_id: d.doc_id,
                    scheme: if ones { WeightScheme::Lrp } else { WeightScheme::W0 },
                    vector: if ones {
                        embed_with_word_scores(&run.params, &d.token_ids, Some(&vec![1.0; d.token_ids.len()]))
                    } else {
                        embed_with_word_scores(&run.params, &d.token_ids, None)
                    },
                })
                .collect();
            LabeledVectors::from_embeddings(&e, docs).unwrap()
        };
        let train_docs: Vec<_> = run.corpus.train_docs().collect();
        let val_docs: Vec<_> = run.corpus.validation_docs().collect();
        let (t1, v1) = (vectors(train_docs.clone(), true), vectors(val_docs.clone(), true));
        let (t0, v0) = (vectors(train_docs, false), vectors(val_docs, false));
        let same_vectors = t1.vectors == t0.vectors && v1.vectors == v0.vectors;
        let a1 = downstream_classify(&t1, &v1, run.corpus.num_classes, Classifier::knn(5)).unwrap();
        let a0 = downstream_classify(&t0, &v0, run.corpus.num_classes, Classifier::knn(5)).unwrap();
        pass &= same_vectors && a1 == a0;
        lines.push(format!(
            "{name}: unit scores give identical vectors {same_vectors}, accuracy {a1:.4} == {a0:.4}"
        ));
    }
    Outcome {
        id: "6",
        name: "LRP-weighted document vectors beat the plain average",
        pass,
        detail: lines.iter().map(|l| format!("\n      {l}")).collect(),
    }
}

fn pipeline_bytes(dir: &Path) -> (Vec<u8>, Vec<(String, Vec<u8>)>) {
    let (corpus_path, manifest_path) = bundled("synth_binary");
    let corpus = load_synthetic(&corpus_path, &manifest_path).unwrap();
    let (params, _) = train(&corpus, &desk_model(&corpus)).unwrap();
    let report = run_all(&params, &corpus, &EvalSettings::default()).unwrap();
    let files = emit_report(dir, &report).unwrap();
    let mut contents: Vec<(String, Vec<u8>)> = files
        .iter()
        .map(|f| (f.file_name().unwrap().to_string_lossy().into_owned(), fs::read(f).unwrap()))
        .collect();
    contents.sort();
    (params.to_bytes().unwrap(), contents)
}

fn criterion_7() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (params_a, files_a) = pipeline_bytes(a.path());
    let (params_b, files_b) = pipeline_bytes(b.path());
    let same_params = params_a == params_b;
    let same_reports = files_a == files_b;
    Outcome {
        id: "7",
        name: "two seeded pipeline runs are byte-identical",
        pass: same_params && same_reports,
        detail: format!(
            "params {} bytes identical {same_params}; {} report files identical {same_reports}",
            params_a.len(),
            files_a.len()
        ),
    }
}

fn criterion_8(runs: &[(&str, &Trained, &[PerturbationCurve])]) -> Outcome {
    let mut pass = true;
    let mut checked = 0;
    for (_, run, curves) in runs {
        for curve in *curves {
            let docs: Vec<_> = run
                .corpus
                .validation_docs()
                .filter(|d| curve.subset_tag == "all" || curve.subset_tag == format!("class{}", d.label))
                .collect();
            let unperturbed = evaluate(&run.params, docs).unwrap().accuracy;
            pass &= curve.accuracy_for(0) == Some(unperturbed);
            if curve.policy == RemovalPolicy::Random {
                pass &= curve.per_seed.iter().all(|s| s[0] == unperturbed);
            }
            checked += 1;
        }
    }
    Outcome {
        id: "8",
        name: "zero removal reproduces unperturbed accuracy",
        pass: pass && checked > 0,
        detail: format!("{checked} curves"),
    }
}

fn main() -> ExitCode {
    let total = Instant::now();
    let mut outcomes = vec![data_matches_presets(), criterion_1(), criterion_3()];
    let settings = EvalSettings::default();

    let binary = train_desk("synth_binary");
    outcomes.push(criterion_2(&binary));
    let (c4, binary_curves) = criterion_4(&binary, &settings);
    outcomes.push(c4);

    let four = train_desk("synth_4class");
    outcomes.push(criterion_5(&four, &settings));
    outcomes.push(criterion_6(&[("binary", &binary), ("4-class", &four)], &settings));
    outcomes.push(criterion_7());

    let mut four_curves = eval_removal(&four.params, &four.corpus, FeatureKind::Column, &settings).unwrap();
    four_curves.extend(eval_removal(&four.params, &four.corpus, FeatureKind::Filter, &settings).unwrap());
    outcomes.push(criterion_8(&[
        ("binary", &binary, &binary_curves),
        ("4-class", &four, &four_curves),
    ]));

    outcomes.sort_by_key(|o| o.id);
    let mut failed = 0;
    for o in &outcomes {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{verdict} [{}] {}: {}", o.id, o.name, o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "{} of {} checks passed in {:.1?}",
        outcomes.len() - failed,
        outcomes.len(),
        total.elapsed()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
