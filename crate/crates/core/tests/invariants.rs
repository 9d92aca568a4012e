use docnade::evaluation::{perplexity, retrieval_precision_from_representations};
use docnade::{
    Activation, Direction, Document, EmbeddingPrior, Model, SoftmaxMode,
};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_model(seed: u64, k: usize, h: usize, mode: SoftmaxMode, bidir: bool) -> Model {
    let mut m = Model::zeros(&[h], k, mode, bidir, Activation::Sigmoid, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, t) in m.tensors_mut() {
        t.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
    }
    m
}

fn mode(tree: bool) -> SoftmaxMode {
    if tree {
        SoftmaxMode::Tree
    } else {
        SoftmaxMode::Full
    }
}

fn doc_strategy(k: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..k, 1..25)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bidirectional_forward_matches_docnade_bitwise(seed in 0u64..1000, tree: bool, words in doc_strategy(11)) {
        let bi = random_model(seed, 11, 5, mode(tree), true);
        let mut uni = Model::zeros(&[5], 11, mode(tree), false, Activation::Sigmoid, seed).unwrap();
        uni.params.w = bi.params.w.clone();
        uni.params.u = bi.params.u.clone();
        uni.params.b_fwd = bi.params.b_fwd.clone();
        uni.params.c_fwd = bi.params.c_fwd.clone();
        let doc = Document::new(words);
        let a = bi.log_conditionals(&doc, Direction::Forward).unwrap();
        let b = uni.log_conditionals(&doc, Direction::Forward).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        let r = bi.document_log_likelihood(&doc).unwrap();
        prop_assert_eq!(r.log_fwd.to_bits(), uni.document_log_likelihood(&doc).unwrap().log_fwd.to_bits());
    }

    #[test]
    fn zero_lambda_prior_is_inert(seed in 0u64..1000, tree: bool, bidir: bool, words in doc_strategy(9)) {
        let m = random_model(seed, 9, 4, mode(tree), bidir);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let e = Array2::from_shape_fn((4, 9), |_| rng.random_range(-3.0..3.0));
        let with = m.clone().with_prior(EmbeddingPrior::new(e, 0.0).unwrap()).unwrap();
        let doc = Document::new(words);
        let a = m.document_log_likelihood(&doc).unwrap().combined;
        let b = with.document_log_likelihood(&doc).unwrap().combined;
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn reversal_swaps_directions(seed in 0u64..1000, tree: bool, words in doc_strategy(10)) {
        let m = random_model(seed, 10, 6, mode(tree), true);
        let mut swapped = m.clone();
        let p = &mut swapped.params;
        std::mem::swap(&mut p.b_fwd, p.b_bwd.as_mut().unwrap());
        std::mem::swap(&mut p.c_fwd, p.c_bwd.as_mut().unwrap());
        let doc = Document::new(words.clone());
        let rev = Document::new(words.into_iter().rev().collect());
        let fwd = m.log_conditionals(&doc, Direction::Forward).unwrap();
        let mut bwd = swapped.log_conditionals(&rev, Direction::Backward).unwrap();
        bwd.reverse();
        for (x, y) in fwd.iter().zip(&bwd) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn forward_context_is_a_bag(seed in 0u64..1000, words in prop::collection::vec(0usize..8, 3..15)) {
        let m = random_model(seed, 8, 4, SoftmaxMode::Full, false);
        let mut shuffled = words.clone();
        let last = shuffled.len() - 1;
        shuffled[..last].reverse();
        let a = m.log_conditionals(&Document::new(words), Direction::Forward).unwrap();
        let b = m.log_conditionals(&Document::new(shuffled), Direction::Forward).unwrap();
        prop_assert!((a[last] - b[last]).abs() < 1e-12);
    }

    #[test]
    fn uniform_model_perplexity_is_vocab_size(k in 2usize..40, tree: bool, bidir: bool) {
        let vocab = docnade::Vocabulary::from_tokens((0..k).map(|i| format!("t{i}")).collect()).unwrap();
        let docs = (0..5).map(|i| Document::new((0..=i).map(|j| (i * 7 + j) % k).collect())).collect();
        let corpus = docnade::Corpus::new(docs, vocab).unwrap();
        let m = Model::zeros(&[3], k, mode(tree), bidir, Activation::Sigmoid, 0).unwrap();
        let ppl = perplexity(&m, &corpus).unwrap();
        if tree && !k.is_power_of_two() {
            // An unbalanced path split gives some words more mass than others.
            prop_assert!(ppl.is_finite());
        } else {
            prop_assert!((ppl - k as f64).abs() < 1e-9 * k as f64);
        }
    }

    #[test]
    fn retrieval_ignores_representation_scale(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let train = Array2::from_shape_fn((60, 5), |_| rng.random_range(-1.0..1.0));
        let test = Array2::from_shape_fn((20, 5), |_| rng.random_range(-1.0..1.0));
        let label = |rng: &mut ChaCha8Rng| -> std::collections::BTreeSet<String> {
            [["a", "b", "c"][rng.random_range(0..3)].to_string()].into()
        };
        let tl: Vec<_> = (0..60).map(|_| label(&mut rng)).collect();
        let ql: Vec<_> = (0..20).map(|_| label(&mut rng)).collect();
        let fractions = [0.05, 0.2, 1.0];
        let base = retrieval_precision_from_representations(train.view(), &tl, test.view(), &ql, &fractions).unwrap();
        let scaled_train = &train * 4.0;
        let scaled_test = &test * 0.25;
        let scaled = retrieval_precision_from_representations(scaled_train.view(), &tl, scaled_test.view(), &ql, &fractions).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!((a.precision - b.precision).abs() < 1e-12);
        }
    }
}
