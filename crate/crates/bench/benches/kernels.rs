use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use demaudit_core::sae::{self, SaeConfig, SaeModel};
use demaudit_core::sentiment::{self, SentimentLexicon};
use demaudit_core::synth::{self, SynthConfig};
use demaudit_core::textindex::{InvertedIndex, KeywordQuery};
use demaudit_core::topics;
use demaudit_core::LemmaDictionary;

fn fixture() -> synth::Fixture {
    synth::generate(&SynthConfig { images: 5000, ..SynthConfig::default() }).unwrap()
}

fn index(c: &mut Criterion) {
    let fx = fixture();
    let dict = LemmaDictionary::builtin();
    c.bench_function("index_build_5k", |b| b.iter(|| InvertedIndex::over_captions(black_box(&fx.images), &dict)));
    let idx = InvertedIndex::over_captions(&fx.images, &dict);
    let queries: Vec<KeywordQuery> = ["thief", "woman", "street market", "young child"]
        .iter()
        .filter_map(|p| KeywordQuery::new(p, &dict).ok())
        .collect();
    c.bench_function("index_query_any", |b| b.iter(|| idx.query_any(black_box(&queries))));
}

fn vader(c: &mut Criterion) {
    let fx = fixture();
    let lex = SentimentLexicon::builtin();
    c.bench_function("vader_1k_captions", |b| {
        b.iter(|| fx.images[..1000].iter().map(|im| sentiment::vader_compound(&im.alt_text, &lex)).sum::<f64>())
    });
}

fn sae_step(c: &mut Criterion) {
    let fx = fixture();
    let x = fx.caption_embeddings.data();
    let d = fx.caption_embeddings.dim();
    let cfg = SaeConfig { expansion: 8, k: 8, ..SaeConfig::default() };
    let model = SaeModel::<f32>::init(d, &cfg).unwrap();
    let rows = 256;
    c.bench_function("sae_gradient_256", |b| b.iter(|| model.batch_gradient(black_box(&x[..rows * d]), rows, 1).unwrap()));
}

fn pmi(c: &mut Criterion) {
    let fx = fixture();
    let d = fx.caption_embeddings.dim();
    let cfg = SaeConfig { expansion: 8, k: 8, ..SaeConfig::default() };
    let model = SaeModel::<f32>::init(d, &cfg).unwrap();
    let counts = sae::activation_stats(&model, &fx.caption_embeddings).unwrap();
    let clustering = topics::cluster_topics(&fx.topics, 0.85).unwrap();
    let emb = topics::cluster_embeddings(&clustering, &fx.topics, Some(&fx.cluster_cache), false).unwrap();
    let dist = topics::feature_topic_dist(&model, &emb, topics::DEFAULT_TOP_N).unwrap();
    c.bench_function("pmi_counts", |b| b.iter(|| topics::pmi_from_counts(black_box(&counts), &dist, "bench").unwrap()));
    c.bench_function("cluster_topics", |b| b.iter(|| topics::cluster_topics(black_box(&fx.topics), 0.85).unwrap()));
}

criterion_group!(benches, index, vader, sae_step, pmi);
criterion_main!(benches);
