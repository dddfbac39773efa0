// SPDX-License-Identifier: MIT OR Apache-2.0

//! Invariants of the patched forward pass over seeded random toy models.

mod common;

use idiom_circuits_core::graph::build_graph;
use idiom_circuits_core::model::ActivationCache;
use idiom_circuits_core::{forward, forward_with_patches, PatchSet};
use rand::Rng;

fn max_abs_diff(a: &ActivationCache, b: &ActivationCache) -> f32 {
    let mut m = 0.0f32;
    let mats = |c: &ActivationCache| {
        let mut v: Vec<Vec<f32>> = c.resid.iter().map(|r| r.data().to_vec()).collect();
        for l in &c.layers {
            for group in [&l.q, &l.k, &l.v, &l.pattern, &l.head_out] {
                v.extend(group.iter().map(|g| g.data().to_vec()));
            }
            v.push(l.mlp_out.data().to_vec());
        }
        v
    };
    for (x, y) in mats(a).iter().zip(mats(b).iter()) {
        for (xv, yv) in x.iter().zip(y) {
            m = m.max((xv - yv).abs());
        }
    }
    m
}

#[test]
fn empty_patch_set_is_bit_identical_to_plain_forward() {
    for seed in 0..10u64 {
        let mut rng = common::rng(seed);
        let weights = common::random_model(&mut rng);
        let c = &weights.config;
        let len = rng.gen_range(1..=c.max_seq);
        let clean = common::random_tokens(&mut rng, c.vocab_size, len);
        let corrupt = common::random_tokens(&mut rng, c.vocab_size, len);
        let clean_cache = forward(&weights, &clean).unwrap();
        let corrupt_cache = forward(&weights, &corrupt).unwrap();
        let patched = forward_with_patches(
            &weights,
            &clean,
            &corrupt_cache,
            &PatchSet::new(),
            c.n_layers - 1,
        )
        .unwrap();
        assert_eq!(patched, clean_cache, "seed {}", seed);
    }
}

#[test]
fn self_corruption_is_neutral_for_any_patch_set() {
    let mut rng = common::rng(99);
    let mut cases = 0;
    while cases < 100 {
        let weights = common::random_model(&mut rng);
        let c = weights.config.clone();
        let len = rng.gen_range(2..=c.max_seq);
        let tokens = common::random_tokens(&mut rng, c.vocab_size, len);
        let clean_cache = forward(&weights, &tokens).unwrap();
        let graph = build_graph(&c, len, c.n_layers - 1).unwrap();
        for _ in 0..4 {
            let patches = common::random_patch_set(&mut rng, &graph, 0.3);
            let patched =
                forward_with_patches(&weights, &tokens, &clean_cache, &patches, c.n_layers - 1)
                    .unwrap();
            let diff = max_abs_diff(&patched, &clean_cache);
            assert!(diff <= 1e-6, "case {}: max abs diff {}", cases, diff);
            cases += 1;
        }
    }
}

#[test]
fn attention_patterns_are_causal_and_normalized() {
    for seed in 10..20u64 {
        let mut rng = common::rng(seed);
        let weights = common::random_model(&mut rng);
        let c = &weights.config;
        let len = rng.gen_range(2..=c.max_seq);
        let clean = common::random_tokens(&mut rng, c.vocab_size, len);
        let corrupt = common::random_tokens(&mut rng, c.vocab_size, len);
        let corrupt_cache = forward(&weights, &corrupt).unwrap();
        let graph = build_graph(c, len, c.n_layers - 1).unwrap();
        let patches = common::random_patch_set(&mut rng, &graph, 0.2);
        let cache =
            forward_with_patches(&weights, &clean, &corrupt_cache, &patches, c.n_layers - 1)
                .unwrap();
        for layer in &cache.layers {
            for pattern in &layer.pattern {
                for dst in 0..len {
                    let row = pattern.row(dst);
                    let sum: f32 = row[..=dst].iter().sum();
                    assert!((sum - 1.0).abs() < 1e-5, "row sum {}", sum);
                    for &future in &row[dst + 1..] {
                        assert_eq!(future, 0.0, "future attention must be zero");
                    }
                }
            }
        }
    }
}

#[test]
fn residual_stream_recomposes_from_cached_parts() {
    for seed in 20..30u64 {
        let mut rng = common::rng(seed);
        let weights = common::random_model(&mut rng);
        let c = &weights.config;
        let len = rng.gen_range(1..=c.max_seq);
        let clean = common::random_tokens(&mut rng, c.vocab_size, len);
        let corrupt = common::random_tokens(&mut rng, c.vocab_size, len);
        let corrupt_cache = forward(&weights, &corrupt).unwrap();
        let graph = build_graph(c, len, c.n_layers - 1).unwrap();
        let patches = common::random_patch_set(&mut rng, &graph, 0.2);
        let cache =
            forward_with_patches(&weights, &clean, &corrupt_cache, &patches, c.n_layers - 1)
                .unwrap();
        for l in 0..cache.layers.len() {
            for t in 0..len {
                for d in 0..c.d_model {
                    let mut expected = cache.resid[l].at(t, d);
                    for h in 0..c.n_heads {
                        expected += cache.layers[l].head_out[h].at(t, d);
                    }
                    expected += cache.layers[l].mlp_out.at(t, d);
                    let got = cache.resid[l + 1].at(t, d);
                    assert!(
                        (expected - got).abs() <= 1e-4,
                        "seed {} layer {} token {} dim {}: {} vs {}",
                        seed,
                        l,
                        t,
                        d,
                        expected,
                        got
                    );
                }
            }
        }
    }
}

#[test]
fn patched_forward_is_deterministic() {
    let mut rng = common::rng(7);
    let weights = common::random_model(&mut rng);
    let c = &weights.config;
    let len = 5.min(c.max_seq);
    let clean = common::random_tokens(&mut rng, c.vocab_size, len);
    let corrupt = common::random_tokens(&mut rng, c.vocab_size, len);
    let corrupt_cache = forward(&weights, &corrupt).unwrap();
    let graph = build_graph(c, len, c.n_layers - 1).unwrap();
    let patches = common::random_patch_set(&mut rng, &graph, 0.4);
    let a = forward_with_patches(&weights, &clean, &corrupt_cache, &patches, c.n_layers - 1)
        .unwrap();
    let b = forward_with_patches(&weights, &clean, &corrupt_cache, &patches, c.n_layers - 1)
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn patch_outside_universe_is_rejected() {
    let mut rng = common::rng(3);
    let weights = common::random_model(&mut rng);
    let c = &weights.config;
    let len = 3.min(c.max_seq);
    let clean = common::random_tokens(&mut rng, c.vocab_size, len);
    let cache = forward(&weights, &clean).unwrap();
    // Same-token K edge: never part of the universe.
    let mut patches = PatchSet::new();
    patches.insert(idiom_circuits_core::EdgeId::k(0, 0, len - 1, len - 1));
    assert!(forward_with_patches(&weights, &clean, &cache, &patches, c.n_layers - 1).is_err());
}

#[test]
fn length_mismatch_is_rejected() {
    let mut rng = common::rng(4);
    let weights = common::random_model(&mut rng);
    let c = &weights.config;
    let clean = common::random_tokens(&mut rng, c.vocab_size, 4.min(c.max_seq));
    let corrupt = common::random_tokens(&mut rng, c.vocab_size, 2);
    let corrupt_cache = forward(&weights, &corrupt).unwrap();
    let result = forward_with_patches(
        &weights,
        &clean,
        &corrupt_cache,
        &PatchSet::new(),
        c.n_layers - 1,
    );
    assert!(matches!(
        result,
        Err(idiom_circuits_core::CoreError::LengthMismatch { .. })
    ));
}
