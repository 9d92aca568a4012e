//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::BTreeSet;
use std::time::Instant;

use docnade::evaluation::{
    coherence_npmi, document_representations, perplexity, perplexity_report,
    retrieval_precision_from_representations,
};
use docnade::training::initialize_with_source;
use docnade::{
    compute_gradients, train, Activation, Architecture, Corpus, Direction, Document,
    EmbeddingPrior, Model, OutputLayer, SoftmaxMode, TrainConfig, Vocabulary,
};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone)]
struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn vocab(k: usize) -> Vocabulary {
    Vocabulary::from_tokens((0..k).map(|i| format!("w{i:03}")).collect()).unwrap()
}

fn randomize(model: &mut Model, rng: &mut ChaCha8Rng, scale: f64) {
    for (_, t) in model.tensors_mut() {
        t.iter_mut().for_each(|x| *x = rng.random_range(-scale..scale));
    }
}

fn random_doc(rng: &mut ChaCha8Rng, k: usize, len: usize) -> Document {
    Document::new((0..len).map(|_| rng.random_range(0..k)).collect())
}

fn random_prior(rng: &mut ChaCha8Rng, h: usize, k: usize, lambda: f64) -> EmbeddingPrior {
    EmbeddingPrior::new(Array2::from_shape_fn((h, k), |_| rng.random_range(-1.0..1.0)), lambda)
        .unwrap()
}

/// Training loss: directional negative log-likelihoods summed.
fn loss(model: &Model, doc: &Document) -> f64 {
    let r = model.document_log_likelihood(doc).unwrap();
    -(r.log_fwd + r.log_bwd.unwrap_or(0.0))
}

fn fd_worst(model: &Model, doc: &Document) -> f64 {
    let grads = compute_gradients(model, doc).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().into_iter().map(|(_, g)| g.to_vec()).collect();
    let eps = 1e-5;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (t, g) in analytic.iter().enumerate() {
        for (i, &g) in g.iter().enumerate() {
            let orig = probe.tensors_mut()[t].1[i];
            probe.tensors_mut()[t].1[i] = orig + eps;
            let plus = loss(&probe, doc);
            probe.tensors_mut()[t].1[i] = orig - eps;
            let minus = loss(&probe, doc);
            probe.tensors_mut()[t].1[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max((g - numeric).abs() / g.abs().max(1.0));
        }
    }
    worst
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut instance = 0;
    let mut combo = 0;
    for bidir in [false, true] {
        for mode in [SoftmaxMode::Full, SoftmaxMode::Tree] {
            for lambda in [0.0, 0.5] {
                for deep in [false, true] {
                    // 16 combinations; the first four get a second instance.
                    let reps = if combo < 4 { 2 } else { 1 };
                    combo += 1;
                    for _ in 0..reps {
                        instance += 1;
                        let k = rng.random_range(2..=16);
                        let h = rng.random_range(1..=8);
                        let d = rng.random_range(1..=6);
                        let sizes = if deep { vec![h, rng.random_range(1..=8)] } else { vec![h] };
                        let act = if rng.random_bool(0.5) { Activation::Sigmoid } else { Activation::Tanh };
                        let mut m = Model::zeros(&sizes, k, mode, bidir, act, instance).unwrap();
                        randomize(&mut m, &mut rng, 0.5);
                        let m = m.with_prior(random_prior(&mut rng, h, k, lambda)).unwrap();
                        let doc = random_doc(&mut rng, k, d);
                        worst = worst.max(fd_worst(&m, &doc));
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        instance == 20 && worst < 1e-4 && secs < 30.0,
        format!("{instance} instances, worst relative error {worst:.2e}, {secs:.2}s"),
    )
}

fn normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut full_err = 0.0f64;
    let mut tree_err = 0.0f64;
    for k in [2, 3, 4, 5, 8, 16, 64] {
        for mode in [SoftmaxMode::Full, SoftmaxMode::Tree] {
            let mut m = Model::zeros(&[6], k, mode, true, Activation::Sigmoid, k as u64).unwrap();
            randomize(&mut m, &mut rng, 2.0);
            for dir in [Direction::Forward, Direction::Backward] {
                let h = Array1::from_shape_fn(6, |_| rng.random_range(0.0..1.0));
                match &m.params.output {
                    OutputLayer::Full => {
                        let p = m.conditional_distribution(h.view(), dir).unwrap();
                        full_err = full_err.max((p.sum() - 1.0).abs());
                    }
                    OutputLayer::Tree(tree) => {
                        let bias = match dir {
                            Direction::Forward => &m.params.b_fwd,
                            Direction::Backward => m.params.b_bwd.as_ref().unwrap(),
                        };
                        let total: f64 = (0..k)
                            .map(|w| {
                                tree.leaf_log_probability(h.view(), w, m.params.u.view(), bias.view())
                                    .unwrap()
                                    .exp()
                            })
                            .sum();
                        tree_err = tree_err.max((total - 1.0).abs());
                    }
                }
            }
        }
    }
    outcome(
        full_err < 1e-8 && tree_err < 1e-10,
        format!("full max |Σp-1| {full_err:.1e}, tree {tree_err:.1e}"),
    )
}

fn incremental_vs_naive() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (k, h) = (30, 7);
    let mut worst = 0.0f64;
    for n in 0..100 {
        let mut m = Model::zeros(&[h], k, SoftmaxMode::Full, true, Activation::Sigmoid, 0).unwrap();
        randomize(&mut m, &mut rng, 1.0);
        let lambda = if n % 2 == 0 { 0.0 } else { 0.7 };
        let prior = random_prior(&mut rng, h, k, lambda);
        let e = prior.matrix.clone();
        let m = if n % 2 == 0 { m } else { m.with_prior(prior).unwrap() };
        let len = rng.random_range(1..40);
        let doc = random_doc(&mut rng, k, len);
        for dir in [Direction::Forward, Direction::Backward] {
            let sweep = m.activation_sweep(&doc, dir).unwrap();
            let c = match dir {
                Direction::Forward => &m.params.c_fwd,
                Direction::Backward => m.params.c_bwd.as_ref().unwrap(),
            };
            for i in 0..len {
                let context: Vec<usize> = match dir {
                    Direction::Forward => (0..i).collect(),
                    Direction::Backward => (i + 1..len).collect(),
                };
                for j in 0..h {
                    let mut a = c[j];
                    for &pos in &context {
                        let v = doc.words[pos];
                        a += m.params.w[(j, v)] + lambda * e[(j, v)];
                    }
                    let naive = 1.0 / (1.0 + (-a).exp());
                    worst = worst.max((naive - sweep.hidden[(i, j)]).abs());
                }
            }
        }
    }
    outcome(worst < 1e-10, format!("100 documents, max deviation {worst:.1e}"))
}

fn degeneracies() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut lambda_err = 0.0f64;
    let mut bitwise = true;
    for n in 0..50 {
        let mode = if n % 2 == 0 { SoftmaxMode::Full } else { SoftmaxMode::Tree };
        let mut bi = Model::zeros(&[5], 12, mode, true, Activation::Sigmoid, n).unwrap();
        randomize(&mut bi, &mut rng, 1.0);
        let doc = random_doc(&mut rng, 12, 15);

        let with_zero = bi.clone().with_prior(random_prior(&mut rng, 5, 12, 0.0)).unwrap();
        let a = bi.document_log_likelihood(&doc).unwrap();
        let b = with_zero.document_log_likelihood(&doc).unwrap();
        lambda_err = lambda_err.max((a.combined - b.combined).abs());

        let mut fwd = Model::zeros(&[5], 12, mode, false, Activation::Sigmoid, n).unwrap();
        fwd.params.w = bi.params.w.clone();
        fwd.params.u = bi.params.u.clone();
        fwd.params.b_fwd = bi.params.b_fwd.clone();
        fwd.params.c_fwd = bi.params.c_fwd.clone();
        fwd.params.output = bi.params.output.clone();
        let x = bi.log_conditionals(&doc, Direction::Forward).unwrap();
        let y = fwd.log_conditionals(&doc, Direction::Forward).unwrap();
        bitwise &= x.iter().zip(&y).all(|(p, q)| p.to_bits() == q.to_bits());
    }
    outcome(
        lambda_err < 1e-12 && bitwise,
        format!("λ=0 max deviation {lambda_err:.1e}, forward conditionals bitwise equal: {bitwise}"),
    )
}

fn uniform_ppl() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let docs = (0..20)
        .map(|_| {
            let len = rng.random_range(1..30);
            random_doc(&mut rng, 16, len)
        })
        .collect();
    let corpus = Corpus::new(docs, vocab(16)).unwrap();
    let mut worst = 0.0f64;
    for mode in [SoftmaxMode::Full, SoftmaxMode::Tree] {
        for bidir in [false, true] {
            let m = Model::zeros(&[8], 16, mode, bidir, Activation::Sigmoid, 9).unwrap();
            worst = worst.max((perplexity(&m, &corpus).unwrap() - 16.0).abs());
        }
    }
    outcome(worst < 1e-9, format!("max |PPL-16| {worst:.1e}"))
}

/// Two topics over disjoint 50-word halves of a 100-word vocabulary, each with its own
/// random multinomial. Labels name the topic.
fn two_topic_corpus(n: usize, rng: &mut ChaCha8Rng, weights: &[Vec<f64>; 2]) -> Corpus {
    let docs = (0..n)
        .map(|i| {
            let topic = i % 2;
            let words = (0..20).map(|_| topic * 50 + sample(&weights[topic], rng)).collect();
            Document::with_labels(words, [format!("t{topic}")])
        })
        .collect();
    Corpus::new(docs, vocab(100)).unwrap()
}

fn sample(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn unigram_ppl(train: &Corpus, test: &Corpus) -> f64 {
    let k = train.vocab.len();
    let mut counts = vec![1.0; k];
    for d in &train.documents {
        for &w in &d.words {
            counts[w] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    let mean: f64 = test
        .documents
        .iter()
        .map(|d| d.words.iter().map(|&w| (counts[w] / total).ln()).sum::<f64>() / d.len() as f64)
        .sum::<f64>()
        / test.len() as f64;
    (-mean).exp()
}

fn config(bidirectional: bool, epochs: usize, learning_rate: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        arch: Architecture {
            hidden: vec![16],
            softmax: SoftmaxMode::Full,
            bidirectional,
            activation: Activation::Sigmoid,
        },
        learning_rate,
        epochs,
        seed,
        early_stop_patience: 0,
        ..TrainConfig::default()
    }
}

struct TwoTopic {
    train: Corpus,
    test: Corpus,
    model: Model,
}

fn synthetic_learning() -> (Outcome, TwoTopic) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let weights: [Vec<f64>; 2] =
        std::array::from_fn(|_| (0..50).map(|_| rng.random_range(0.2..1.0)).collect());
    let train_c = two_topic_corpus(500, &mut rng, &weights);
    let val = two_topic_corpus(100, &mut rng, &weights);
    let test = two_topic_corpus(100, &mut rng, &weights);
    let out = train(&train_c, &val, &config(false, 100, 0.01, 6), None).unwrap();
    let ppl = perplexity(&out.model, &test).unwrap();
    let unigram = unigram_ppl(&train_c, &test);
    let secs = start.elapsed().as_secs_f64();
    (
        outcome(
            ppl < 0.7 * unigram && secs < 300.0,
            format!(
                "test PPL {ppl:.2} vs unigram {unigram:.2} (ratio {:.3}), {} epochs, {secs:.1}s",
                ppl / unigram,
                out.history.len()
            ),
        ),
        TwoTopic {
            train: train_c,
            test,
            model: out.model,
        },
    )
}

/// Each document: ten words from a shared pool where the topic only tilts the
/// distribution, then ten words from the topic's own anchor words.
fn split_topic_corpus(n: usize, rng: &mut ChaCha8Rng) -> Corpus {
    const TOPICS: usize = 4;
    const POOL: usize = 60;
    const ANCHORS: usize = 10;
    let docs = (0..n)
        .map(|_| {
            let topic = rng.random_range(0..TOPICS);
            let mut words = Vec::with_capacity(20);
            for _ in 0..10 {
                let favored = rng.random_bool(0.5);
                let w = if favored {
                    topic * (POOL / TOPICS) + rng.random_range(0..POOL / TOPICS)
                } else {
                    rng.random_range(0..POOL)
                };
                words.push(w);
            }
            for _ in 0..10 {
                words.push(POOL + topic * ANCHORS + rng.random_range(0..ANCHORS));
            }
            Document::with_labels(words, [format!("t{topic}")])
        })
        .collect();
    Corpus::new(docs, vocab(POOL + TOPICS * ANCHORS)).unwrap()
}

fn bidirectional_benefit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let train_c = split_topic_corpus(500, &mut rng);
    let val = split_topic_corpus(100, &mut rng);
    let test = split_topic_corpus(100, &mut rng);
    let uni = train(&train_c, &val, &config(false, 100, 0.05, 7), None).unwrap();
    let bi = train(&train_c, &val, &config(true, 100, 0.05, 7), None).unwrap();
    let p_uni = perplexity(&uni.model, &test).unwrap();
    let report = perplexity_report(&bi.model, &test).unwrap();
    outcome(
        report.ppl < p_uni,
        format!(
            "iDocNADE {:.3} (fwd {:.3}, bwd {:.3}) vs DocNADE {p_uni:.3}",
            report.ppl,
            report.forward,
            report.backward.unwrap_or(f64::NAN)
        ),
    )
}

fn retrieval(data: &TwoTopic) -> Outcome {
    let train_reps = document_representations(&data.model, &data.train).unwrap();
    let test_reps = document_representations(&data.model, &data.test).unwrap();
    let tl = data.train.labels();
    let ql = data.test.labels();
    let p = retrieval_precision_from_representations(train_reps.view(), &tl, test_reps.view(), &ql, &[0.02])
        .unwrap()[0]
        .precision;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let random = |n: usize, rng: &mut ChaCha8Rng| -> Vec<BTreeSet<String>> {
        (0..n)
            .map(|_| [if rng.random_bool(0.3) { "x" } else { "y" }.to_string()].into())
            .collect()
    };
    let rtl = random(tl.len(), &mut rng);
    let mut rql = random(ql.len(), &mut rng);
    rql.shuffle(&mut rng);
    let base = rql
        .iter()
        .map(|q| rtl.iter().filter(|t| *t == q).count() as f64 / rtl.len() as f64)
        .sum::<f64>()
        / rql.len() as f64;
    let pr = retrieval_precision_from_representations(train_reps.view(), &rtl, test_reps.view(), &rql, &[0.02])
        .unwrap()[0]
        .precision;
    outcome(
        p > 0.9 && (pr - base).abs() <= 0.05,
        format!("precision@0.02 {p:.3}; randomized {pr:.3} vs base rate {base:.3}"),
    )
}

fn coherence_endpoints() -> Outcome {
    // Planted: "a" and "b" appear together or not at all in each single-window doc.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let v = vocab(20);
    let docs: Vec<Document> = (0..1000)
        .map(|_| {
            let mut words: Vec<usize> = (0..6).map(|_| rng.random_range(2..20)).collect();
            if rng.random_bool(0.4) {
                words.extend([0, 1]);
                words.shuffle(&mut rng);
            }
            Document::new(words)
        })
        .collect();
    let planted = coherence_npmi(&[vec!["w000".into(), "w001".into()]], &Corpus::new(docs, v.clone()).unwrap(), 10)
        .unwrap()
        .topics[0]
        .score
        .unwrap();

    // Independent: each word present in a window with probability 0.5 on its own.
    let docs: Vec<Document> = (0..100_000)
        .map(|_| {
            let mut words: Vec<usize> = (0..4).map(|_| rng.random_range(2..20)).collect();
            if rng.random_bool(0.5) {
                words.push(0);
            }
            if rng.random_bool(0.5) {
                words.push(1);
            }
            Document::new(words)
        })
        .collect();
    let report = coherence_npmi(&[vec!["w000".into(), "w001".into()]], &Corpus::new(docs, v).unwrap(), 10).unwrap();
    let independent = report.topics[0].score.unwrap();
    outcome(
        (planted - 1.0).abs() < 1e-6 && independent.abs() < 0.05 && report.windows == 100_000,
        format!("planted {planted:.9}, independent {independent:.4} over {} windows", report.windows),
    )
}

fn serialization() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut ok = true;
    let mut n = 0;
    for mode in [SoftmaxMode::Full, SoftmaxMode::Tree] {
        for bidir in [false, true] {
            for sizes in [vec![6], vec![6, 3]] {
                n += 1;
                let cfg = TrainConfig {
                    arch: Architecture {
                        hidden: sizes.clone(),
                        softmax: mode,
                        bidirectional: bidir,
                        activation: Activation::Tanh,
                    },
                    seed: n,
                    ..TrainConfig::default()
                };
                let prior = random_prior(&mut rng, 6, 25, 0.5);
                let m = initialize_with_source(25, &cfg, Some(prior), None).unwrap();
                let a = dir.path().join(format!("m{n}.a"));
                let b = dir.path().join(format!("m{n}.b"));
                m.save(&a).unwrap();
                let loaded = Model::load(&a).unwrap();
                loaded.save(&b).unwrap();
                ok &= std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();
                for _ in 0..5 {
                    let doc = random_doc(&mut rng, 25, 12);
                    let x = m.document_log_likelihood(&doc).unwrap();
                    let y = loaded.document_log_likelihood(&doc).unwrap();
                    ok &= x.combined.to_bits() == y.combined.to_bits()
                        && x.log_fwd.to_bits() == y.log_fwd.to_bits()
                        && x.log_bwd.map(f64::to_bits) == y.log_bwd.map(f64::to_bits);
                }
            }
        }
    }
    outcome(ok, format!("{n} models, files identical and likelihoods bit-equal: {ok}"))
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let two_topic = std::cell::OnceCell::new();
    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let criteria: [(&str, Check); 10] = [
        ("gradient oracle", Box::new(gradient_oracle)),
        ("normalization", Box::new(normalization)),
        ("incremental vs naive activations", Box::new(incremental_vs_naive)),
        ("degeneracies", Box::new(degeneracies)),
        ("uniform-model perplexity", Box::new(uniform_ppl)),
        (
            "synthetic learning",
            Box::new(|| two_topic.get_or_init(synthetic_learning).0.clone()),
        ),
        ("bidirectional benefit", Box::new(bidirectional_benefit)),
        (
            "retrieval sanity",
            Box::new(|| retrieval(&two_topic.get_or_init(synthetic_learning).1)),
        ),
        ("coherence endpoints", Box::new(coherence_endpoints)),
        ("serialization", Box::new(serialization)),
    ];
    let mut failed = Vec::new();
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if filter.as_ref().is_some_and(|f| *f != n.to_string()) {
            continue;
        }
        ran += 1;
        let o = check();
        println!("{} {n:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(format!("{n} ({name})"));
        }
    }
    if failed.is_empty() {
        println!("acceptance: {ran} criteria passed");
    } else {
        println!("acceptance: failed {}", failed.join(", "));
        std::process::exit(1);
    }
}
