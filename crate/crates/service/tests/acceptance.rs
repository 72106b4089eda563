//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Exits non-zero on a failed criterion only with `ACCEPTANCE_STRICT=1`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::http::StatusCode;
use common::*;
use hieroscribe_core::classic::{extract_features_batch, predict_svm, train_svm, FeatureConfig, LinearClassifierModel, SvmParams};
use hieroscribe_core::cnn::{
    predict_any, train_classifier, weighted_cce_logits, weighted_cross_entropy, CnnConfig, CnnTrainConfig,
    SoftmaxClassifierModel,
};
use hieroscribe_core::corpus::{class_frequencies, class_weights, ClassWeightTable, LabeledSample};
use hieroscribe_core::evaluation::balanced_accuracy;
use hieroscribe_core::metric::{
    classify_nearest_centroid, compute_centroids, contrastive_loss, cosine_contrastive, register_class,
    train_encoder, CentroidEntry, CentroidTable, Embedding, EncoderConfig, EncoderModel, MetricTrainConfig,
    DISSIMILAR, SIMILAR,
};
use hieroscribe_core::segmentation::{extract_components, BinaryImage};
use hieroscribe_core::synth::{generate, render_page, synthetic_dataset, templates, PageLayout, Perturbation};
use hieroscribe_core::transcription::{
    assemble_lines, export_csv, is_valid_token, parse_csv, render_line, GeometryConfig, PlacedGlyph, ReviewStatus,
    TranscriptionRecord,
};
use hieroscribe_core::{Execution, GardinerCode};
use hieroscribe_service::backend::MetricBackend;
use hieroscribe_service::{router, AppState, Backends, ModelPaths, ServiceConfig};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const SEED: u64 = 2024;
const IMAGE_SIZE: u32 = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(limit: Duration, start: Instant) -> (bool, String) {
    let t = start.elapsed();
    (t <= limit, format!("{:.2}s of {:.0}s budget", t.as_secs_f64(), limit.as_secs_f64()))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn central<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], i: usize) -> f64 {
    let h = 1e-6 * x[i].abs().max(1.0);
    let (mut a, mut b) = (x.to_vec(), x.to_vec());
    a[i] += h;
    b[i] -= h;
    (f(&a) - f(&b)) / (2.0 * h)
}

fn loss_exactness() -> Outcome {
    let start = Instant::now();
    // (s, y, margin, hand-evaluated loss)
    let contrastive: [(f64, u8, f64, f64); 20] = [
        (1.0, SIMILAR, 0.5, 0.0),
        (0.5, SIMILAR, 0.5, 0.25),
        (0.0, SIMILAR, 0.5, 1.0),
        (-1.0, SIMILAR, 0.5, 4.0),
        (0.9, SIMILAR, 0.5, 0.01),
        (-0.5, SIMILAR, 0.5, 2.25),
        (0.25, SIMILAR, 0.3, 0.5625),
        (0.8, SIMILAR, 0.5, 0.04),
        (0.1, SIMILAR, 0.9, 0.81),
        (1.0, SIMILAR, 0.0, 0.0),
        (0.4, DISSIMILAR, 0.5, 0.0),
        (0.5, DISSIMILAR, 0.5, 0.0),
        (-1.0, DISSIMILAR, 0.5, 0.0),
        (0.0, DISSIMILAR, 0.0, 0.0),
        (0.8, DISSIMILAR, 0.5, 0.09),
        (1.0, DISSIMILAR, 0.5, 0.25),
        (0.6, DISSIMILAR, 0.5, 0.01),
        (0.9, DISSIMILAR, 0.2, 0.49),
        (0.75, DISSIMILAR, 0.25, 0.25),
        (0.95, DISSIMILAR, 0.9, 0.0025),
    ];
    let mut worst = 0f64;
    for &(s, y, m, want) in &contrastive {
        worst = worst.max((contrastive_loss(s, y, m) - want).abs());
    }
    // (probabilities, one-hot rows, class weights, hand-evaluated loss)
    let cce: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>, f64)> = vec![
        (vec![vec![0.5, 0.5]], vec![vec![1.0, 0.0]], vec![1.0, 1.0], 0.693_147_180_559_945_3),
        (vec![vec![1.0, 0.0]], vec![vec![1.0, 0.0]], vec![1.0, 1.0], 0.0),
        (vec![vec![0.25, 0.75]], vec![vec![0.0, 1.0]], vec![1.0, 2.0], 0.575_364_144_903_561_8),
        (
            vec![vec![0.5, 0.5], vec![0.1, 0.9]],
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![2.0, 1.0],
            2.995_732_273_553_991,
        ),
        (vec![vec![0.2, 0.3, 0.5]], vec![vec![0.0, 0.0, 1.0]], vec![1.0, 1.0, 3.0], 2.079_441_541_679_835_7),
        (vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]], vec![1.0, 1.0], 27.631_021_115_928_547),
    ];
    for (p, y, w, want) in &cce {
        let got = weighted_cross_entropy(p, y, w).expect("valid CCE input");
        worst = worst.max((got - want).abs());
    }
    let (fast, t) = within(Duration::from_secs(1), start);
    outcome(
        worst <= 1e-9 && fast,
        format!("{} contrastive + {} CCE cases, max |error| {worst:.1e} (tol 1e-9), {t}", contrastive.len(), cce.len()),
    )
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0f64;
    let mut points = 0;
    while points < 100 {
        let d = rng.random_range(2..12);
        let u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = if rng.random_bool(0.5) { SIMILAR } else { DISSIMILAR };
        let (_, s, du, dv) = cosine_contrastive(&u, &v, y, 0.5);
        if y == DISSIMILAR && (s - 0.5).abs() < 1e-3 {
            continue;
        }
        for i in 0..d {
            let fu = central(|w| cosine_contrastive(w, &v, y, 0.5).0, &u, i);
            let fv = central(|w| cosine_contrastive(&u, w, y, 0.5).0, &v, i);
            for (fd, an) in [(fu, du[i]), (fv, dv[i])] {
                if fd.abs() > 1e-7 || an.abs() > 1e-7 {
                    worst = worst.max(rel_err(fd, an));
                }
            }
        }
        points += 1;
    }
    for _ in 0..100 {
        let c = rng.random_range(2..10);
        let z: Vec<f64> = (0..c).map(|_| rng.random_range(-3.0..3.0)).collect();
        let label = rng.random_range(0..c);
        let w = rng.random_range(0.1..5.0);
        let (_, g) = weighted_cce_logits(&z, label, w);
        for k in 0..c {
            let fd = central(|x| weighted_cce_logits(x, label, w).0, &z, k);
            if fd.abs() > 1e-7 || g[k].abs() > 1e-7 {
                worst = worst.max(rel_err(fd, g[k]));
            }
        }
    }
    let (fast, t) = within(Duration::from_secs(30), start);
    outcome(
        worst < 1e-4 && fast,
        format!("100 contrastive + 100 CCE points, max relative error {worst:.2e} (tol 1e-4), {t}"),
    )
}

fn flood_fill(b: &BinaryImage) -> BTreeSet<BTreeSet<(u32, u32)>> {
    let (w, h) = (b.width(), b.height());
    let mut seen = vec![false; (w * h) as usize];
    let mut out = BTreeSet::new();
    for y in 0..h {
        for x in 0..w {
            if !b.get(x, y) || seen[(y * w + x) as usize] {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut stack = vec![(x, y)];
            seen[(y * w + x) as usize] = true;
            while let Some((cx, cy)) = stack.pop() {
                comp.insert((cx, cy));
                for (dx, dy) in [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)] {
                    let (nx, ny) = (i64::from(cx) + dx, i64::from(cy) + dy);
                    if nx < 0 || ny < 0 || nx >= i64::from(w) || ny >= i64::from(h) {
                        continue;
                    }
                    let (nx, ny) = (nx as u32, ny as u32);
                    if b.get(nx, ny) && !seen[(ny * w + nx) as usize] {
                        seen[(ny * w + nx) as usize] = true;
                        stack.push((nx, ny));
                    }
                }
            }
            out.insert(comp);
        }
    }
    out
}

fn segmentation_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut mismatches = 0;
    let mut total = 0;
    for i in 0..50 {
        let density = [0.15, 0.3, 0.45, 0.55, 0.7][i % 5];
        let bits: Vec<bool> = (0..64 * 64).map(|_| rng.random_bool(density)).collect();
        let b = BinaryImage::from_fn(64, 64, |x, y| bits[(y * 64 + x) as usize]);
        let got: BTreeSet<BTreeSet<(u32, u32)>> = extract_components(&b)
            .iter()
            .map(|c| c.pixels.iter().copied().collect())
            .collect();
        let want = flood_fill(&b);
        total += want.len();
        if got != want {
            mismatches += 1;
        }
    }
    let (fast, t) = within(Duration::from_secs(10), start);
    outcome(
        mismatches == 0 && fast,
        format!("50 random 64x64 bitmaps, {total} components, {mismatches} mismatching bitmaps, {t}"),
    )
}

/// Everything trained by the synthetic benchmark, reused by later criteria.
struct Benchmark {
    encoder: EncoderModel,
    centroids: CentroidTable,
    svm: LinearClassifierModel,
    test: Vec<LabeledSample>,
    held_out: Vec<LabeledSample>,
}

fn split_per_class(samples: Vec<LabeledSample>, first: usize) -> (Vec<LabeledSample>, Vec<LabeledSample>) {
    let mut seen: BTreeMap<GardinerCode, usize> = BTreeMap::new();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for s in samples {
        let n = seen.entry(s.code.clone()).or_default();
        if *n < first {
            a.push(s);
        } else {
            b.push(s);
        }
        *n += 1;
    }
    (a, b)
}

fn metric_balanced_accuracy(encoder: &EncoderModel, table: &CentroidTable, test: &[LabeledSample]) -> f64 {
    let images: Vec<_> = test.iter().map(|s| &s.image).collect();
    let emb = encoder.embed_batch(&images, Execution::Parallel).expect("embedding");
    let pred: Vec<GardinerCode> = emb
        .iter()
        .map(|e| classify_nearest_centroid(e, table).expect("classification").code)
        .collect();
    let truth: Vec<GardinerCode> = test.iter().map(|s| s.code.clone()).collect();
    balanced_accuracy(&truth, &pred).expect("non-empty")
}

fn metric_config(pairs: usize, epochs: usize, validation_pairs: usize, seed: u64) -> MetricTrainConfig {
    MetricTrainConfig {
        pairs_per_epoch: pairs,
        batch_size: 32,
        max_epochs: epochs,
        patience: 3,
        validation_pairs,
        seed,
        ..MetricTrainConfig::default()
    }
}

fn synthetic_benchmark() -> (Outcome, Option<Benchmark>) {
    let start = Instant::now();
    let all = synthetic_dataset(21, 50, IMAGE_SIZE, SEED).expect("synthetic data");
    let codes: BTreeSet<GardinerCode> = all.iter().map(|s| s.code.clone()).collect();
    let held_code = templates()[20].code.clone();
    let (held_out, all): (Vec<_>, Vec<_>) = all.into_iter().partition(|s| s.code == held_code);
    let (train_all, test) = split_per_class(all, 40);
    let (fit, val) = split_per_class(train_all.clone(), 34);
    let classes = codes.len() - 1;

    let mut encoder = EncoderModel::new(EncoderConfig::desk(), SEED).expect("encoder");
    let history = match train_encoder(&mut encoder, &fit, &val, &metric_config(2048, 12, 400, SEED)) {
        Ok(h) => h,
        Err(e) => return (outcome(false, format!("encoder training failed: {e}")), None),
    };
    let centroids = compute_centroids(&encoder, train_all.iter().map(|s| (&s.code, &s.image)), Execution::Parallel)
        .expect("centroids");
    let mml = metric_balanced_accuracy(&encoder, &centroids, &test);
    let t_mml = start.elapsed();

    let feats = |set: &[LabeledSample]| {
        let images: Vec<_> = set.iter().map(|s| &s.image).collect();
        extract_features_batch(&images, &FeatureConfig::default(), Execution::Parallel).expect("features")
    };
    let labels = |set: &[LabeledSample]| set.iter().map(|s| s.code.clone()).collect::<Vec<_>>();
    let (fx, vx, tx) = (feats(&fit), feats(&val), feats(&test));
    let weights = class_weights(&class_frequencies(fit.iter().map(|s| &s.code))).expect("weights");
    let params = SvmParams {
        seed: SEED,
        ..SvmParams::default()
    };
    let svm = train_svm(&fx, &labels(&fit), &weights, Some((&vx, &labels(&val))), &params)
        .expect("svm")
        .model;
    let svm_pred: Vec<GardinerCode> = tx.iter().map(|f| predict_svm(&svm, f).expect("svm prediction").0).collect();
    let trad = balanced_accuracy(&labels(&test), &svm_pred).expect("non-empty");

    let (fast, t) = within(Duration::from_secs(15 * 60), start);
    let pass = classes >= 20 && mml >= 0.90 && trad >= 0.85 && fast;
    let detail = format!(
        "{classes} classes, 40 train (34 fit + 6 early-stopping) / 10 test each; Deep-MML {mml:.4} (>= 0.90, encoder {:.0}s, {} epochs), Trad-ML {trad:.4} (>= 0.85, C={}), {t} on {} thread(s)",
        t_mml.as_secs_f64(),
        history.epochs.len(),
        svm.selected_c,
        std::thread::available_parallelism().map_or(1, |n| n.get()),
    );
    (
        outcome(pass, detail),
        Some(Benchmark {
            encoder,
            centroids,
            svm,
            test,
            held_out,
        }),
    )
}

fn registration(b: &Benchmark) -> Outcome {
    let before = b.encoder.fingerprint();
    let code = b.held_out[0].code.clone();
    let (shots, rest) = b.held_out.split_at(5);
    let queries = &rest[rest.len() - 10..];
    let images: Vec<_> = shots.iter().map(|s| &s.image).collect();
    let table = match register_class(&b.centroids, code.clone(), &images, &b.encoder, false) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("registration failed: {e}")),
    };
    let hits = queries
        .iter()
        .filter(|s| {
            let e = b.encoder.embed_any(&s.image).expect("embedding");
            classify_nearest_centroid(&e, &table).expect("classification").code == code
        })
        .count();
    let recall = hits as f64 / queries.len() as f64;
    let untouched = b.encoder.fingerprint() == before && b.centroids.get(&code).is_none();
    outcome(
        recall >= 0.8 && untouched,
        format!(
            "held-out {code} registered from 5 examples; recall {recall:.2} on {} queries (>= 0.8); encoder unchanged: {}",
            queries.len(),
            untouched
        ),
    )
}

fn centroid_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut violations = 0;
    for _ in 0..1000 {
        let dim = rng.random_range(2..32);
        let k = rng.random_range(2..12);
        let codes: Vec<GardinerCode> = (1..=k).map(|i| format!("A{i}").parse().unwrap()).collect();
        let cents: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let z: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let emb = Embedding::from_raw(&z);
        let table = |order: &[usize], scales: &[f64]| {
            CentroidTable::from_entries(
                dim,
                "fp",
                order.iter().map(|&i| {
                    (
                        codes[i].clone(),
                        CentroidEntry {
                            centroid: cents[i].iter().map(|v| v * scales[i]).collect(),
                            support: 1,
                        },
                    )
                }),
            )
            .unwrap()
        };
        let ident: Vec<usize> = (0..k).collect();
        let base = classify_nearest_centroid(&emb, &table(&ident, &vec![1.0; k])).unwrap().code;
        let scales: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..10.0)).collect();
        let mut perm = ident.clone();
        perm.shuffle(&mut rng);
        let scaled = classify_nearest_centroid(&emb, &table(&ident, &scales)).unwrap().code;
        let permuted = classify_nearest_centroid(&emb, &table(&perm, &vec![1.0; k])).unwrap().code;
        violations += usize::from(scaled != base) + usize::from(permuted != base);
    }
    outcome(
        violations == 0,
        format!("1000 trials of positive rescaling and table permutation, {violations} violations"),
    )
}

fn balanced_accuracy_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut mismatches = 0;
    for _ in 0..100 {
        let k = rng.random_range(2..9);
        let m: Vec<Vec<usize>> = (0..k)
            .map(|_| (0..k).map(|_| if rng.random_bool(0.3) { 0 } else { rng.random_range(0..15) }).collect())
            .collect();
        let code = |i: usize| -> GardinerCode { format!("A{}", i + 1).parse().unwrap() };
        let (mut t, mut p) = (Vec::new(), Vec::new());
        for (i, row) in m.iter().enumerate() {
            for (j, &n) in row.iter().enumerate() {
                for _ in 0..n {
                    t.push(code(i));
                    p.push(code(j));
                }
            }
        }
        if t.is_empty() {
            t.push(code(0));
            p.push(code(0));
        }
        let mut pairs: Vec<_> = t.into_iter().zip(p).collect();
        pairs.shuffle(&mut rng);
        let (t, p): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let mut cm = vec![vec![0usize; k]; k];
        for (a, b) in t.iter().zip(&p) {
            let idx = |c: &GardinerCode| c.as_str()[1..].parse::<usize>().unwrap() - 1;
            cm[idx(a)][idx(b)] += 1;
        }
        let recalls: Vec<f64> = cm
            .iter()
            .enumerate()
            .filter(|(_, row)| row.iter().sum::<usize>() > 0)
            .map(|(i, row)| row[i] as f64 / row.iter().sum::<usize>() as f64)
            .collect();
        let oracle = recalls.iter().sum::<f64>() / recalls.len() as f64;
        if balanced_accuracy(&t, &p).unwrap() != oracle {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("100 random confusion matrices, {mismatches} inexact results"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn latency(b: &Benchmark, api_median: Option<f64>) -> Outcome {
    let mut times = Vec::with_capacity(b.test.len());
    for s in &b.test {
        let t = Instant::now();
        let e = b.encoder.embed_any(&s.image).expect("embedding");
        std::hint::black_box(classify_nearest_centroid(&e, &b.centroids).expect("classification"));
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let direct = median(times);
    let pass = direct <= 50.0 && api_median.is_some_and(|m| m <= 50.0);
    let api = api_median.map_or("n/a".to_string(), |m| format!("{m:.2} ms"));
    outcome(
        pass,
        format!(
            "Deep-MML median per glyph {direct:.2} ms over {} test glyphs, {api} inside the service (<= 50 ms)",
            b.test.len()
        ),
    )
}

fn random_field(rng: &mut ChaCha8Rng) -> String {
    const EDGE: [&str; 9] = ["", "a,b", "say \"hi\"", "line\nbreak", "crlf\r\nx", " padded ", "ÄÖ𓀀", "\"", ",,\"\n"];
    if rng.random_bool(0.4) {
        EDGE[rng.random_range(0..EDGE.len())].to_string()
    } else {
        let n = rng.random_range(0..10);
        (0..n)
            .map(|_| *b"abcXYZ019 -_:*".choose(rng).unwrap() as char)
            .collect()
    }
}

fn csv_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut failures = 0;
    let statuses = [ReviewStatus::Auto, ReviewStatus::Corrected, ReviewStatus::Confirmed];
    for _ in 0..100 {
        let n = rng.random_range(0..25);
        let mut keys = BTreeSet::new();
        let mut records = Vec::new();
        while records.len() < n {
            let r = TranscriptionRecord {
                support: random_field(&mut rng),
                spell: random_field(&mut rng),
                column: random_field(&mut rng),
                token_index: rng.random_range(0..6),
                mdc: random_field(&mut rng),
                review_status: statuses[rng.random_range(0..3)],
            };
            if keys.insert((r.support.clone(), r.spell.clone(), r.column.clone(), r.token_index)) {
                records.push(r);
            }
        }
        let mut bytes = Vec::new();
        let written = export_csv(&records, &mut bytes).unwrap();
        let back = parse_csv(bytes.as_slice()).unwrap();
        let mut want = records.clone();
        want.sort_by(|a, b| {
            (&a.column, a.token_index, &a.support, &a.spell).cmp(&(&b.column, b.token_index, &b.support, &b.spell))
        });
        if back != want || written != bytes.len() || bytes.starts_with(&[0xEF, 0xBB, 0xBF]) {
            failures += 1;
        }
    }
    let column = [
        PlacedGlyph::new((10, 0, 50, 10), "N35"),
        PlacedGlyph::new((14, 13, 46, 45), "G5"),
        PlacedGlyph::new((8, 80, 28, 110), "Z11"),
        PlacedGlyph::new((30, 82, 50, 112), "Q1"),
        PlacedGlyph::new((10, 150, 50, 165), "D4"),
        PlacedGlyph::new((15, 169, 45, 181), "X1"),
        PlacedGlyph::new((10, 185, 50, 195), "N35"),
    ];
    let line = render_line(&assemble_lines(&column, &GeometryConfig::default()).unwrap().tokens);
    let want = "N35:G5-Z11*Q1-D4:X1:N35";
    outcome(
        failures == 0 && line == want,
        format!("100 randomized record sets, {failures} round-trip failures; geometry fixture renders {line:?} (want {want:?})"),
    )
}

fn page_columns() -> Vec<Vec<GardinerCode>> {
    let c = |v: &[&str]| v.iter().map(|s| s.parse().unwrap()).collect::<Vec<GardinerCode>>();
    vec![c(&["N35", "Q3", "I10", "D4"]), c(&["X1", "Q1", "W11", "N5"]), c(&["M17", "O1", "R4"])]
}

struct FlowReport {
    outcome: Outcome,
    median_latency_ms: Option<f64>,
}

async fn api_flow(b: &Benchmark) -> FlowReport {
    let fail = |msg: String| FlowReport {
        outcome: outcome(false, msg),
        median_latency_ms: None,
    };
    let metric = MetricBackend {
        encoder: b.encoder.clone(),
        centroids: b.centroids.clone(),
        floor: None,
    };
    let backends = Backends::from_models(Some(metric), Some(b.svm.clone()), None, &ModelPaths::default());
    let app = router(AppState::with_backends(ServiceConfig::default(), Arc::new(backends)));
    let page = render_page(&page_columns(), &PageLayout::default(), SEED).expect("page");
    let (w, h) = page.image.dimensions();

    if get(&app, "/health").await.status != StatusCode::OK {
        return fail("health check failed".into());
    }
    let created = upload(&app, &png_bytes(&page.image), r#"{"support": "SYN1", "spell": "Spell 1"}"#).await;
    if created.status != StatusCode::CREATED {
        return fail(format!("create_session returned {}", created.status));
    }
    let id = created.json()["session_id"].as_str().unwrap_or_default().to_string();
    let seg = post_json(
        &app,
        &format!("/sessions/{id}/segment"),
        &json!({ "roi": [5, 5, w - 5, h - 5], "column_labels": ["c1", "c2", "c3"] }),
    )
    .await;
    if seg.status != StatusCode::OK {
        return fail(format!("segment_roi returned {}", seg.status));
    }
    let glyphs = seg.json()["glyphs"].as_array().cloned().unwrap_or_default();
    let in_bounds = glyphs.iter().all(|g| {
        let b: Vec<u32> = serde_json::from_value(g["bbox"].clone()).unwrap_or_default();
        b.len() == 4 && b[2] <= w && b[3] <= h
    });
    let cls = post_json(&app, &format!("/sessions/{id}/classify"), &json!({ "backend": "deep_mml" })).await;
    if cls.status != StatusCode::OK {
        return fail(format!("classify_session returned {}", cls.status));
    }
    let cls = cls.json();
    let median_latency_ms = cls["median_latency_ms"].as_f64();
    let predicted: Vec<String> = cls["predictions"]
        .as_array()
        .unwrap_or(&Vec::new())
        .iter()
        .map(|p| p["code"].as_str().unwrap_or_default().to_string())
        .collect();
    let truth: Vec<String> = page.glyphs.iter().map(|g| g.code.to_string()).collect();
    let correct = predicted.iter().zip(&truth).filter(|(a, b)| a == b).count();

    // Correct the first mistake, or relabel glyph 0 when there is none.
    let (gid, code) = predicted
        .iter()
        .zip(&truth)
        .position(|(a, b)| a != b)
        .map_or((0, "Aa1".to_string()), |i| (i, truth[i].clone()));
    let fix = post_json(
        &app,
        &format!("/sessions/{id}/corrections"),
        &json!({ "corrections": [{ "glyph_id": gid, "code": code }] }),
    )
    .await;
    if fix.status != StatusCode::OK {
        return fail(format!("corrections returned {}", fix.status));
    }
    let csv = get(&app, &format!("/sessions/{id}/export.csv")).await;
    if csv.status != StatusCode::OK {
        return fail(format!("export returned {}", csv.status));
    }
    let text = String::from_utf8(csv.body.clone()).unwrap_or_default();
    let records = match parse_csv(csv.body.as_slice()) {
        Ok(r) => r,
        Err(e) => return fail(format!("exported CSV does not parse: {e}")),
    };
    let mut again = Vec::new();
    export_csv(&records, &mut again).unwrap();
    let signs: usize = records
        .iter()
        .map(|r| r.mdc.split([':', '*']).count())
        .sum();
    let corrected = records.iter().filter(|r| r.review_status == ReviewStatus::Corrected).count();
    let valid = text.starts_with("support,spell,column,token_index,mdc,review_status\n")
        && !text.contains('\r')
        && again == csv.body
        && records.iter().all(|r| is_valid_token(&r.mdc) && r.support == "SYN1")
        && signs == glyphs.len()
        && corrected == 1;
    let pass = valid && in_bounds && glyphs.len() == truth.len();
    FlowReport {
        outcome: outcome(
            pass,
            format!(
                "create -> segment ({} of {} glyphs, in bounds: {in_bounds}) -> classify ({correct}/{} auto-correct) -> correct 1 -> export {} rows, {} bytes, valid: {valid}",
                glyphs.len(),
                truth.len(),
                truth.len(),
                records.len(),
                csv.body.len()
            ),
        ),
        median_latency_ms,
    }
}

fn long_tail(seed: u64) -> (f64, f64) {
    let all = templates();
    let classes: Vec<_> = all.iter().take(10).collect();
    let p = Perturbation::default();
    let train_counts: Vec<usize> = (0..10).map(|i| if i < 5 { 100 } else { 4 }).collect();
    let val_counts: Vec<usize> = (0..10).map(|i| if i < 5 { 15 } else { 1 }).collect();
    let train = generate(&classes, &train_counts, IMAGE_SIZE, &p, seed).unwrap();
    let val = generate(&classes, &val_counts, IMAGE_SIZE, &p, seed + 1000).unwrap();
    let test = generate(&classes, &[20; 10], IMAGE_SIZE, &p, seed + 2000).unwrap();

    let mut encoder = EncoderModel::new(EncoderConfig::desk(), seed).unwrap();
    train_encoder(&mut encoder, &train, &val, &metric_config(1024, 10, 300, seed)).unwrap();
    let table = compute_centroids(&encoder, train.iter().map(|s| (&s.code, &s.image)), Execution::Parallel).unwrap();
    let mml = metric_balanced_accuracy(&encoder, &table, &test);

    let weights: ClassWeightTable = class_weights(&class_frequencies(train.iter().map(|s| &s.code))).unwrap();
    let codes: Vec<GardinerCode> = classes.iter().map(|t| t.code.clone()).collect();
    let mut cnn = SoftmaxClassifierModel::new(CnnConfig::desk(), codes, seed).unwrap();
    let cfg = CnnTrainConfig {
        max_epochs: 30,
        seed,
        ..CnnTrainConfig::default()
    };
    train_classifier(&mut cnn, &train, &val, &weights, &cfg).unwrap();
    let truth: Vec<GardinerCode> = test.iter().map(|s| s.code.clone()).collect();
    let pred: Vec<GardinerCode> = test.iter().map(|s| predict_any(&cnn, &s.image).unwrap().code).collect();
    (mml, balanced_accuracy(&truth, &pred).unwrap())
}

fn imbalance_ordering() -> Outcome {
    let runs: Vec<(u64, f64, f64)> = [11u64, 12, 13]
        .iter()
        .map(|&s| {
            let (m, c) = long_tail(s);
            (s, m, c)
        })
        .collect();
    let wins = runs.iter().filter(|(_, m, c)| m >= c).count();
    let detail = runs
        .iter()
        .map(|(s, m, c)| format!("seed {s}: Deep-MML {m:.3} vs CNN {c:.3}"))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(wins == 3, format!("5x100 + 5x4 training images; {detail}; {wins}/3 runs with Deep-MML >= CNN"))
}

fn report(results: &mut Vec<(String, bool)>, name: &str, start: Instant, o: Outcome) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {name}: {} ({:.1}s)", o.detail, start.elapsed().as_secs_f64());
    results.push((name.to_string(), o.pass));
}

fn main() -> ExitCode {
    let mut results = Vec::new();
    let criteria: [(&str, fn() -> Outcome); 6] = [
        ("loss exactness", loss_exactness),
        ("gradient checks", gradient_checks),
        ("segmentation oracle", segmentation_oracle),
        ("centroid invariants", centroid_invariants),
        ("balanced-accuracy oracle", balanced_accuracy_oracle),
        ("CSV round trip", csv_round_trip),
    ];
    for (name, f) in criteria {
        let t = Instant::now();
        report(&mut results, name, t, f());
    }

    let t = Instant::now();
    let (bench_outcome, bench) = synthetic_benchmark();
    report(&mut results, "synthetic glyph benchmark", t, bench_outcome);
    match &bench {
        Some(b) => {
            let t = Instant::now();
            report(&mut results, "new-sign registration", t, registration(b));
            let t = Instant::now();
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().expect("runtime");
            let flow = rt.block_on(api_flow(b));
            report(&mut results, "full API flow", t, flow.outcome);
            let t = Instant::now();
            report(&mut results, "classification latency", t, latency(b, flow.median_latency_ms));
        }
        None => {
            for name in ["new-sign registration", "full API flow", "classification latency"] {
                report(&mut results, name, Instant::now(), outcome(false, "benchmark models unavailable"));
            }
        }
    }
    let t = Instant::now();
    report(&mut results, "imbalance ordering", t, imbalance_ordering());

    let failed: Vec<&str> = results.iter().filter(|(_, p)| !p).map(|(n, _)| n.as_str()).collect();
    println!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        return ExitCode::SUCCESS;
    }
    println!("failed: {}", failed.join(", "));
    if std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        ExitCode::FAILURE
    } else {
        println!("exit status 0; set ACCEPTANCE_STRICT=1 to fail the run on any FAIL line");
        ExitCode::SUCCESS
    }
}
