use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use demaudit_core::audit::{self, Attribute, KeywordSet, Level};
use demaudit_core::consensus::{self, ConsensusPolicy, GtMatchConfig, Split};
use demaudit_core::corpus::{self, BoxFilter, CorpusView, Gender, Identity, LoadMode};
use demaudit_core::embedding::EmbeddingMatrix;
use demaudit_core::io;
use demaudit_core::sae::{self, ActivationCounts, SaeModel};
use demaudit_core::sentiment::{self, HateKind, ScoreRecord, SentimentLexicon};
use demaudit_core::synth::{self, SynthConfig};
use demaudit_core::textindex::{InvertedIndex, KeywordQuery};
use demaudit_core::topics::{self, SaeRun, TopicVocabulary};
use demaudit_core::transfer::{self, BiasPoint, SimilarityPanel};
use demaudit_core::Error;
use serde_json::{json, Value};

use crate::config::Loaded;
use crate::{CliError, Command, Ctx};

const INGEST_IMAGES: &str = "ingest/images.jsonl";
const INGEST_BOXES: &str = "ingest/boxes.jsonl";
const INDEX_FILE: &str = "index/captions.idx";
const BIAS_POINTS: &str = "transfer/bias_points.csv";

const PIPELINE: &[&str] = &[
    "ingest",
    "index",
    "agree",
    "audit-composition",
    "audit-crime",
    "audit-geo",
    "audit-sentiment",
    "hcr",
    "sae-train",
    "sae-stats",
    "topics-pmi",
    "transfer-bias",
    "transfer-fit",
    "report",
];

pub fn dispatch(cmd: &Command, cfg: &Loaded) -> Result<(), CliError> {
    match cmd {
        Command::Pipeline => {
            for stage in PIPELINE {
                run_stage(stage, cfg)?;
            }
            Ok(())
        }
        other => run_stage(other.name(), cfg),
    }
}

fn run_stage(name: &'static str, cfg: &Loaded) -> Result<(), CliError> {
    let mut ctx = Ctx::new(cfg, name);
    let line = match name {
        "ingest" => ingest(&mut ctx)?,
        "index" => index(&mut ctx)?,
        "agree" => agree(&mut ctx)?,
        "audit-composition" => audit_composition(&mut ctx)?,
        "audit-crime" => audit_crime(&mut ctx, cfg.config.audit.crime_all_terms)?,
        "audit-geo" => audit_geo(&mut ctx)?,
        "audit-sentiment" => audit_sentiment(&mut ctx)?,
        "hcr" => hcr(&mut ctx)?,
        "sae-train" => sae_train(&mut ctx)?,
        "sae-stats" => sae_stats(&mut ctx)?,
        "topics-pmi" => topics_pmi(&mut ctx)?,
        "transfer-bias" => transfer_bias(&mut ctx)?,
        "transfer-fit" => transfer_fit(&mut ctx)?,
        "report" => report(&mut ctx)?,
        other => return Err(CliError::Validation(format!("unknown stage `{other}`"))),
    };
    ctx.finish()?;
    println!("{name}: {line}");
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    Ok(io::read_to_string(path)?)
}

fn load_corpus(ctx: &mut Ctx) -> Result<CorpusView, CliError> {
    let images = ctx.prior(INGEST_IMAGES, "ingest")?;
    let boxes = ctx.prior(INGEST_BOXES, "ingest")?;
    let images = corpus::load_images(&images, LoadMode::FailFast)?.records;
    let boxes = corpus::load_boxes(&boxes, &images, LoadMode::FailFast)?.records;
    let mut view = CorpusView::new(images, boxes)?;
    view.aggregate_labels();
    Ok(view)
}

fn load_index(ctx: &mut Ctx, corpus: &CorpusView) -> Result<InvertedIndex, CliError> {
    let path = ctx.prior(INDEX_FILE, "index")?;
    let index = InvertedIndex::load(&path)?;
    if index.doc_count() != corpus.images().len() {
        return Err(CliError::Validation(format!(
            "index covers {} captions but the corpus has {}; rerun `index`",
            index.doc_count(),
            corpus.images().len()
        )));
    }
    Ok(index)
}

fn label_counts<'a>(labels: impl Iterator<Item = &'a str>) -> BTreeMap<String, u64> {
    let mut m = BTreeMap::new();
    for l in labels {
        *m.entry(l.to_string()).or_insert(0) += 1;
    }
    m
}

fn ingest(ctx: &mut Ctx) -> Result<String, CliError> {
    let c = &ctx.cfg.config;
    let mode = if c.ingest.skip_bad_records {
        LoadMode::SkipAndCount
    } else {
        LoadMode::FailFast
    };
    let filter = BoxFilter {
        min_side: c.ingest.min_side,
        min_conf: c.ingest.min_conf,
    };
    let images_path = ctx.input(&c.inputs.images)?;
    let boxes_path = ctx.input(&c.inputs.boxes)?;
    let images = corpus::load_images(&images_path, mode)?;
    let boxes = corpus::load_boxes(&boxes_path, &images.records, mode)?;
    let (rejected_images, rejected_boxes) = (images.rejected.len(), boxes.rejected.len());
    let mut rejections = ctx.csv(&["source", "row", "reason"]);
    for (src, list) in [("images", &images.rejected), ("boxes", &boxes.rejected)] {
        for r in list {
            rejections.row([src, &r.row.to_string(), &r.reason]);
        }
    }
    let loaded_boxes = boxes.records.len();
    let mut view = CorpusView::new(images.records, boxes.records)?.filtered(&filter);
    view.aggregate_labels();
    ctx.write(INGEST_IMAGES, corpus::images_to_ndjson(view.images()).as_bytes())?;
    ctx.write(INGEST_BOXES, corpus::boxes_to_ndjson(view.boxes()).as_bytes())?;
    ctx.write_csv("ingest/rejections.csv", rejections)?;
    let summary = json!({
        "images": view.images().len(),
        "boxes_loaded": loaded_boxes,
        "boxes_kept": view.boxes().len(),
        "rejected_images": rejected_images,
        "rejected_boxes": rejected_boxes,
        "filter": {"min_side": filter.min_side, "min_conf": filter.min_conf},
        "image_gender": label_counts(view.images().iter().map(|i| i.image_gender.as_str())),
        "image_race": label_counts(view.images().iter().map(|i| i.image_race.as_str())),
    });
    ctx.write_json("ingest/ingest.json", summary)?;
    Ok(format!(
        "{} images, {} of {} boxes kept, {} records rejected",
        view.images().len(),
        view.boxes().len(),
        loaded_boxes,
        rejected_images + rejected_boxes
    ))
}

fn index(ctx: &mut Ctx) -> Result<String, CliError> {
    let corpus = load_corpus(ctx)?;
    let dict = ctx.dictionary()?;
    let index = InvertedIndex::over_captions(corpus.images(), &dict);
    index.save(&ctx.out_path(INDEX_FILE))?;
    ctx.wrote(INDEX_FILE);
    ctx.write_json("index/index.json", json!({"docs": index.doc_count(), "terms": index.term_count()}))?;
    Ok(format!("{} captions, {} terms", index.doc_count(), index.term_count()))
}

fn agree(ctx: &mut Ctx) -> Result<String, CliError> {
    let c = ctx.cfg.config.agree.clone();
    let path = ctx.input(&ctx.cfg.config.inputs.labelings.clone())?;
    let labelings = consensus::parse_labelings(&read(&path)?, &path.display().to_string())?;
    if labelings.len() < 2 {
        return Err(Error::invalid("agreement needs at least two annotators").into());
    }
    let mut t = ctx.csv(&["metric", "subject", "value"]);
    for (i, a) in labelings.iter().enumerate() {
        for b in &labelings[i + 1..] {
            let pair = format!("{}|{}", a.annotator, b.annotator);
            t.row(["cohen_kappa", &pair, &consensus::cohen_kappa(a, b)?.to_string()]);
            let labels: BTreeSet<&String> = a.labels.values().chain(b.labels.values()).collect();
            for l in labels {
                let v = consensus::jaccard_per_label(a, b, l);
                t.row(["jaccard", &format!("{pair}:{l}"), &v.to_string()]);
            }
        }
    }
    // Fleiss over items every annotator labeled.
    let shared: Vec<&String> = labelings[0]
        .labels
        .keys()
        .filter(|k| labelings.iter().all(|l| l.labels.contains_key(*k)))
        .collect();
    let cats: Vec<&String> = labelings
        .iter()
        .flat_map(|l| l.labels.values())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let counts: Vec<Vec<u64>> = shared
        .iter()
        .map(|item| {
            cats.iter()
                .map(|c| labelings.iter().filter(|l| &l.labels[*item] == *c).count() as u64)
                .collect()
        })
        .collect();
    let fleiss = match consensus::fleiss_kappa(&counts, labelings.len() as u64) {
        Ok(v) => Some(v),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e.into()),
    };
    t.row(["fleiss_kappa", "all", &fmt_opt(fleiss)]);
    let policy = if c.consensus_k == 0 {
        ConsensusPolicy::Unanimous
    } else {
        ConsensusPolicy::KOfN(c.consensus_k)
    };
    let outcome = consensus::consensus_filter(&labelings, policy)?;
    t.row(["consensus_kept", "all", &outcome.labels.len().to_string()]);
    t.row(["consensus_dropped", "all", &outcome.dropped.to_string()]);
    t.row(["consensus_ties", "all", &outcome.ties.to_string()]);
    ctx.write_csv("agree/agreement.csv", t)?;
    let mut t = ctx.csv(&["item_id", "label"]);
    for (item, label) in &outcome.labels {
        t.row([item, label]);
    }
    ctx.write_csv("agree/consensus.csv", t)?;

    // Gender-balanced sample of single-gender images.
    let corpus = load_corpus(ctx)?;
    let pool: Vec<(String, String)> = corpus
        .images()
        .iter()
        .filter(|i| i.image_gender.is_binary())
        .map(|i| (i.image_id.clone(), i.image_gender.as_str().to_string()))
        .collect();
    let quotas: BTreeMap<String, usize> = Gender::BINARY.iter().map(|g| (g.as_str().to_string(), c.sample_quota)).collect();
    let sample = consensus::balanced_sample(&pool, &quotas, c.sample_seed)?;
    let mut t = ctx.csv(&["item_id", "stratum", "split"]);
    for (id, stratum, split) in &sample.assignments {
        t.row([id.as_str(), stratum, split.as_str()]);
    }
    ctx.write_csv("agree/sample.csv", t)?;
    let mut t = ctx.csv(&["stratum", "quota", "available", "taken", "shortfall", "extra"]);
    for s in &sample.strata {
        t.row([
            s.stratum.clone(),
            s.quota.to_string(),
            s.available.to_string(),
            s.taken.to_string(),
            s.shortfall.to_string(),
            s.extra.to_string(),
        ]);
    }
    ctx.write_csv("agree/sample_strata.csv", t)?;

    let path = ctx.input(&ctx.cfg.config.inputs.detections.clone())?;
    let dets: Vec<_> = consensus::parse_detections(&read(&path)?, &path.display().to_string())?
        .iter()
        .map(|r| r.detections())
        .collect();
    let grid = if c.recall_thresholds.is_empty() {
        GtMatchConfig::standard()
    } else {
        GtMatchConfig::new(c.recall_thresholds.clone()).map_err(|e| CliError::Validation(e.to_string()))?
    };
    let recall = consensus::detection_recall(&dets, &grid)?;
    let mut t = ctx.csv(&["iou_threshold", "matched", "gt_total", "recall"]);
    for (i, th) in recall.thresholds.iter().enumerate() {
        t.row([th.to_string(), recall.matched[i].to_string(), recall.gt_total.to_string(), recall.recall[i].to_string()]);
    }
    t.row(["mean".to_string(), String::new(), recall.gt_total.to_string(), recall.mean_recall.to_string()]);
    ctx.write_csv("agree/recall.csv", t)?;
    ctx.write_json(
        "agree/agree.json",
        json!({
            "annotators": labelings.len(),
            "shared_items": shared.len(),
            "fleiss_kappa": fleiss,
            "consensus_kept": outcome.labels.len(),
            "sample": {
                "train": sample.ids_in(Split::Train).len(),
                "validation": sample.ids_in(Split::Validation).len(),
                "test": sample.ids_in(Split::Test).len(),
            },
            "mean_recall": recall.mean_recall,
        }),
    )?;
    Ok(format!(
        "{} annotators, fleiss {}, mean recall {:.4}",
        labelings.len(),
        fmt_opt(fleiss),
        recall.mean_recall
    ))
}

const ATTR_LEVELS: [(Attribute, Level); 4] = [
    (Attribute::Gender, Level::Box),
    (Attribute::Gender, Level::Image),
    (Attribute::Race, Level::Box),
    (Attribute::Race, Level::Image),
];

fn audit_composition(ctx: &mut Ctx) -> Result<String, CliError> {
    let corpus = load_corpus(ctx)?;
    let mut t = ctx.csv(&["attribute", "level", "category", "count", "share"]);
    for (attr, level) in ATTR_LEVELS {
        let d = audit::composition(&corpus, attr, level)?;
        for (cat, count) in d.counts() {
            t.row([attr.as_str(), level.as_str(), cat, &count.to_string(), &d.share(cat).to_string()]);
        }
    }
    ctx.write_csv("audit/composition.csv", t)?;
    let stats = audit::box_stats(&corpus);
    let mut t = ctx.csv(&["area_band", "boxes"]);
    for (i, n) in stats.area_bins.iter().enumerate() {
        t.row([format!("{}-{}%", i * 10, (i + 1) * 10), n.to_string()]);
    }
    ctx.write_csv("audit/box_area.csv", t)?;
    let mut t = ctx.csv(&["boxes_per_image", "images"]);
    for (k, n) in &stats.count_hist {
        t.row([k.to_string(), n.to_string()]);
    }
    ctx.write_csv("audit/box_counts.csv", t)?;
    ctx.write_json(
        "audit/composition.json",
        json!({
            "images": stats.images,
            "boxes": stats.boxes,
            "max_boxes_per_image": stats.max_count,
            "boxes_under_10pct_area": stats.fraction_below(1),
        }),
    )?;
    Ok(format!("{} images, {} boxes", stats.images, stats.boxes))
}

fn audit_crime(ctx: &mut Ctx, all_terms: bool) -> Result<String, CliError> {
    let corpus = load_corpus(ctx)?;
    let index = load_index(ctx, &corpus)?;
    let dict = ctx.dictionary()?;
    let set = if all_terms {
        KeywordSet::vocabulary(&index, &dict)?
    } else {
        match ctx.opt_input(&ctx.cfg.config.inputs.crime_keywords.clone())? {
            Some(p) => KeywordSet::parse("crime", &read(&p)?, &dict)?,
            None => KeywordSet::builtin_crime(&dict),
        }
    };
    let mut t = ctx.csv(&[
        "attribute",
        "level",
        "category",
        "baseline_count",
        "baseline_share",
        "subset_count",
        "subset_share",
        "delta",
    ]);
    let mut matched = 0;
    for (attr, level) in ATTR_LEVELS {
        let r = audit::relative_change(&corpus, &index, &set, attr, level);
        matched = r.matched_images;
        for row in &r.rows {
            t.row([
                attr.as_str().to_string(),
                level.as_str().to_string(),
                row.category.clone(),
                row.baseline_count.to_string(),
                row.baseline_share.to_string(),
                row.subset_count.to_string(),
                row.subset_share.to_string(),
                fmt_opt(row.delta),
            ]);
        }
    }
    ctx.write_csv("audit/crime_delta.csv", t)?;
    ctx.write_json(
        "audit/crime.json",
        json!({"keyword_set": set.name, "keywords": set.queries.len(), "matched_images": matched}),
    )?;
    Ok(format!("{} keywords matched {matched} images", set.queries.len()))
}

fn audit_geo(ctx: &mut Ctx) -> Result<String, CliError> {
    let corpus = load_corpus(ctx)?;
    let index = load_index(ctx, &corpus)?;
    let dict = ctx.dictionary()?;
    let groups = match ctx.opt_input(&ctx.cfg.config.inputs.countries.clone())? {
        Some(p) => audit::parse_country_groups(&read(&p)?, &dict)?,
        None => audit::builtin_country_groups(&dict),
    };
    let regions: BTreeMap<&str, &str> = groups
        .iter()
        .map(|g| (g.country.as_str(), g.region.as_deref().unwrap_or("")))
        .collect();
    let counts = audit::country_mentions(&corpus, &index, &groups);
    let mut t = ctx.csv(&["country", "region", "total", "with_person", "rank_total", "rank_with_person"]);
    for c in &counts {
        t.row([
            c.country.clone(),
            regions[c.country.as_str()].to_string(),
            c.total.to_string(),
            c.with_person.to_string(),
            c.rank_total.to_string(),
            c.rank_with_person.to_string(),
        ]);
    }
    ctx.write_csv("audit/countries.csv", t)?;
    let mentioned = counts.iter().filter(|c| c.total > 0).count();
    Ok(format!("{mentioned} of {} countries mentioned", counts.len()))
}

fn audit_sentiment(ctx: &mut Ctx) -> Result<String, CliError> {
    let corpus = load_corpus(ctx)?;
    let lex = match ctx.opt_input(&ctx.cfg.config.inputs.vader_lexicon.clone())? {
        Some(p) => SentimentLexicon::load(&p)?,
        None => SentimentLexicon::builtin(),
    };
    let scores = sentiment::score_captions(&corpus, &lex);
    let records: Vec<ScoreRecord> = corpus
        .images()
        .iter()
        .zip(&scores)
        .map(|(i, &compound)| ScoreRecord {
            image_id: i.image_id.clone(),
            compound,
        })
        .collect();
    ctx.write("sentiment/scores.jsonl", sentiment::scores_to_ndjson(&records).as_bytes())?;
    let mut t = ctx.csv(&["attribute", "group", "counted", "negative_ratio", "mean_compound"]);
    for attr in [Attribute::Gender, Attribute::Race] {
        let g = sentiment::group_sentiment(&corpus, &scores, attr)?;
        for r in &g.rows {
            t.row([
                attr.as_str().to_string(),
                r.group.clone(),
                r.counted.to_string(),
                r.negative_ratio.to_string(),
                r.mean_compound.to_string(),
            ]);
        }
        for e in &g.empty_groups {
            t.row([attr.as_str(), e, "0", "undefined", "undefined"]);
        }
    }
    ctx.write_csv("sentiment/groups.csv", t)?;
    let neutral = scores.iter().filter(|&&s| s == 0.0).count();
    Ok(format!("{} captions scored, {neutral} neutral", scores.len()))
}

fn hcr(ctx: &mut Ctx) -> Result<String, CliError> {
    let grid = ctx.cfg.config.hcr.taus.clone();
    if grid.is_empty() {
        return Err(CliError::Validation("empty HCR threshold grid".into()));
    }
    let path = ctx.input(&ctx.cfg.config.inputs.hate_scores.clone())?;
    let scores = sentiment::parse_hate_scores(&read(&path)?)?;
    let mut t = ctx.csv(&["type", "tau", "hcr"]);
    for kind in HateKind::ALL {
        for &tau in &grid {
            let v = sentiment::hcr(&scores, kind, tau).map_err(|e| match e {
                Error::Invalid(m) => CliError::Validation(m),
                e => e.into(),
            })?;
            t.row([kind.as_str().to_string(), tau.to_string(), v.to_string()]);
        }
    }
    ctx.write_csv("sentiment/hcr.csv", t)?;
    Ok(format!("{} items × {} thresholds", scores.len(), grid.len()))
}

fn sae_path(run: usize) -> String {
    format!("sae/run{run}.sae")
}

fn counts_path(run: usize) -> String {
    format!("sae/counts_run{run}.csv")
}

fn sae_train(ctx: &mut Ctx) -> Result<String, CliError> {
    let s = ctx.cfg.config.sae.clone();
    if s.runs == 0 {
        return Err(CliError::Validation("sae.runs must be at least 1".into()));
    }
    let path = ctx.input(&ctx.cfg.config.inputs.caption_embeddings.clone())?;
    let data = EmbeddingMatrix::load(&path)?;
    let mut t = ctx.csv(&["run", "epoch", "loss"]);
    let mut finals = Vec::new();
    for run in 0..s.runs {
        let cfg = s.run_config(run);
        cfg.validate(data.dim()).map_err(|e| CliError::Validation(e.to_string()))?;
        let out = sae::train::<f32>(data.data(), data.rows(), data.dim(), &cfg)?;
        out.model.save(&ctx.out_path(&sae_path(run)), &out.loss_trace)?;
        ctx.wrote(&sae_path(run));
        for (e, l) in out.loss_trace.iter().enumerate() {
            t.row([run.to_string(), e.to_string(), l.to_string()]);
        }
        finals.push(json!({
            "run": run,
            "seed": cfg.seed,
            "initial_loss": out.loss_trace[0],
            "final_loss": out.loss_trace[out.loss_trace.len() - 1],
        }));
    }
    ctx.write_csv("sae/loss.csv", t)?;
    ctx.write_json(
        "sae/train.json",
        json!({"rows": data.rows(), "dim": data.dim(), "features": data.dim() * s.expansion, "runs": finals}),
    )?;
    Ok(format!("{} runs on {} rows", s.runs, data.rows()))
}

fn sae_stats(ctx: &mut Ctx) -> Result<String, CliError> {
    let path = ctx.input(&ctx.cfg.config.inputs.caption_embeddings.clone())?;
    let data = EmbeddingMatrix::load(&path)?;
    let mut summary = Vec::new();
    for run in 0..ctx.cfg.config.sae.runs {
        let model_path = ctx.prior(&sae_path(run), "sae-train")?;
        let (model, _) = SaeModel::load(&model_path)?;
        let counts = sae::activation_stats(&model, &data)?;
        let mut t = ctx.csv(&["identity", "feature", "count"]);
        for i in 0..Identity::COUNT {
            let token = Identity::from_index(i).expect("index in range").token();
            for j in 0..counts.m {
                let c = counts.get(i, j);
                if c > 0 {
                    t.row([token.clone(), j.to_string(), c.to_string()]);
                }
            }
        }
        ctx.write_csv(&counts_path(run), t)?;
        let totals = counts.feature_totals();
        summary.push(json!({
            "run": run,
            "features": counts.m,
            "tagged_rows": counts.rows,
            "untagged_rows": counts.untagged,
            "dead_features": totals.iter().filter(|&&c| c == 0).count(),
        }));
    }
    ctx.write_json("sae/stats.json", json!({"runs": summary}))?;
    Ok(format!("{} runs counted", summary.len()))
}

fn read_counts(path: &Path, m: usize) -> Result<ActivationCounts, CliError> {
    let name = path.display().to_string();
    let (header, rows) = io::read_csv(&read(path)?, &name)?;
    if header != ["identity", "feature", "count"] {
        return Err(Error::Format(format!("{name}: expected header `identity,feature,count`")).into());
    }
    let mut counts = ActivationCounts::new(m);
    for (row, r) in rows {
        let bad = |message: String| Error::Record {
            source_name: name.clone(),
            row,
            message,
        };
        let id: Identity = r[0].parse().map_err(|e: Error| bad(e.to_string()))?;
        let j: usize = r[1].parse().map_err(|_| bad(format!("bad feature `{}`", r[1])))?;
        let c: u64 = r[2].parse().map_err(|_| bad(format!("bad count `{}`", r[2])))?;
        if j >= m {
            return Err(bad(format!("feature {j} out of range for {m} features")).into());
        }
        counts.counts[id.index() * m + j] = c;
    }
    Ok(counts)
}

fn topics_pmi(ctx: &mut Ctx) -> Result<String, CliError> {
    let c = ctx.cfg.config.topics.clone();
    let inputs = ctx.cfg.config.inputs.clone();
    let vocab = TopicVocabulary::load(&ctx.input(&inputs.topics)?, &ctx.input(&inputs.topic_embeddings)?)?;
    let cache = match ctx.opt_input(&inputs.cluster_cache)? {
        Some(p) => Some(EmbeddingMatrix::load(&p)?),
        None => None,
    };
    let mut models = Vec::new();
    for run in 0..ctx.cfg.config.sae.runs {
        let (model, _) = SaeModel::load(&ctx.prior(&sae_path(run), "sae-train")?)?;
        let counts = read_counts(&ctx.prior(&counts_path(run), "sae-stats")?, model.m)?;
        models.push((format!("run{run}"), model, counts));
    }
    let runs: Vec<SaeRun> = models
        .iter()
        .map(|(name, model, counts)| SaeRun {
            name: name.clone(),
            model,
            counts,
        })
        .collect();
    let taus = if c.taus.is_empty() { topics::tau_sweep() } else { c.taus.clone() };
    let (clusterings, results) = topics::sweep(&runs, &vocab, &taus, cache.as_ref(), c.mean_fallback, c.top_n)?;
    let scores = topics::topic_scores(&results, &clusterings, vocab.len(), c.order.into())?;
    let ranked = topics::top_topics(&scores, &vocab.labels, c.top_topics);
    let mut t = ctx.csv(&["identity", "topic", "score", "rank"]);
    for (i, list) in ranked.iter().enumerate() {
        let token = Identity::from_index(i).expect("index in range").token();
        for r in list {
            t.row([token.clone(), r.label.clone(), r.score.to_string(), r.rank.to_string()]);
        }
    }
    ctx.write_csv("topics/pmi_topics.csv", t)?;
    let mut t = ctx.csv(&["tau", "cluster", "size", "members"]);
    for cl in &clusterings {
        for (k, members) in cl.clusters.iter().enumerate() {
            t.row([cl.tau.to_string(), k.to_string(), members.len().to_string(), cl.cluster_text(k, &vocab.labels)]);
        }
    }
    ctx.write_csv("topics/clusterings.csv", t)?;
    let cluster_counts: Vec<usize> = clusterings.iter().map(|c| c.clusters.len()).collect();
    ctx.write_json(
        "topics/topics.json",
        json!({
            "topics": vocab.len(),
            "taus": taus,
            "clusters_per_tau": cluster_counts,
            "runs": runs.len(),
            "order": c.order,
        }),
    )?;
    Ok(format!("{} topics, {} clusterings, {} runs", vocab.len(), taus.len(), runs.len()))
}

/// Reads `category,gender,similarity` rows into per-category panels.
fn read_panels(path: &Path) -> Result<BTreeMap<String, (Vec<f64>, Vec<f64>)>, CliError> {
    let name = path.display().to_string();
    let (header, rows) = io::read_csv(&read(path)?, &name)?;
    if header != ["category", "gender", "similarity"] {
        return Err(Error::Format(format!("{name}: expected header `category,gender,similarity`")).into());
    }
    let mut panels: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (row, r) in rows {
        let bad = |message: String| Error::Record {
            source_name: name.clone(),
            row,
            message,
        };
        let v: f64 = r[2].parse().map_err(|_| bad(format!("bad similarity `{}`", r[2])))?;
        let entry = panels.entry(r[0].clone()).or_default();
        match r[1].as_str() {
            "female" => entry.0.push(v),
            "male" => entry.1.push(v),
            other => return Err(bad(format!("gender must be female or male, got `{other}`")).into()),
        }
    }
    Ok(panels)
}

fn transfer_bias(ctx: &mut Ctx) -> Result<String, CliError> {
    let corpus = load_corpus(ctx)?;
    let index = load_index(ctx, &corpus)?;
    let dict = ctx.dictionary()?;
    let inputs = ctx.cfg.config.inputs.clone();
    let tc = ctx.cfg.config.transfer.clone();
    let cats_path = ctx.input(&inputs.categories)?;
    let cats = transfer::parse_categories(&read(&cats_path)?, &cats_path.display().to_string())?;
    let lemma_set = transfer::parse_lemma_set(&read(&ctx.input(&inputs.category_lemmas)?)?);
    let filtered = transfer::filter_categories(&cats, &lemma_set, &index, &dict, tc.min_count);

    let panels = match ctx.opt_input(&inputs.similarities)? {
        Some(p) => Some(read_panels(&p)?),
        None => None,
    };
    let embeddings = match (ctx.opt_input(&inputs.category_embeddings)?, ctx.opt_input(&inputs.probe_images)?) {
        (Some(text), Some(images)) if panels.is_none() => {
            Some((EmbeddingMatrix::load(&text)?, EmbeddingMatrix::load(&images)?))
        }
        _ => None,
    };
    let generation = match ctx.opt_input(&inputs.generation_labels)? {
        Some(p) => Some(transfer::parse_generation_labels(&read(&p)?, &p.display().to_string())?),
        None => None,
    };

    let mut t = ctx.csv(&[
        "category",
        "source",
        "is_adjective",
        "count",
        "matched_images",
        "female",
        "male",
        "dataset_bias",
        "model_bias",
        "generation_bias",
        "generation_qualifying",
        "generation_attempts",
        "flags",
    ]);
    let mut prompts = ctx.csv(&["category", "prompt"]);
    let mut defined = 0;
    for cat in &filtered.kept {
        let mut flags = Vec::new();
        let q = KeywordQuery::new(&cat.label, &dict)?;
        let db = transfer::dataset_bias(&corpus, &index, &q);
        if db.ratio.is_none() {
            flags.push("no_single_gender_images");
        }
        let panel = if let Some(p) = &panels {
            p.get(&cat.label).map(|(f, m)| SimilarityPanel::new(f.clone(), m.clone())).transpose()?
        } else if let Some((text, images)) = &embeddings {
            text.row_of(&cat.label)
                .map(|r| SimilarityPanel::from_embeddings(text.row(r), images))
                .transpose()?
        } else {
            None
        };
        let mb = match panel.as_ref().map(transfer::model_bias) {
            Some(Ok(d)) => Some(d),
            Some(Err(Error::Undefined(_))) => {
                flags.push("constant_similarities");
                None
            }
            Some(Err(e)) => return Err(e.into()),
            None => {
                flags.push("no_embedding");
                None
            }
        };
        let gb = match generation.as_ref().and_then(|g| g.get(&cat.label)) {
            Some(labels) => match transfer::generation_bias(labels, tc.generation_quota, tc.generation_attempts) {
                Ok(g) => {
                    if g.under_quota {
                        flags.push("generation_under_quota");
                    }
                    Some(g)
                }
                Err(Error::Empty(_)) => {
                    flags.push("no_qualifying_generations");
                    None
                }
                Err(e) => return Err(e.into()),
            },
            None => None,
        };
        if db.ratio.is_some() && mb.is_some() {
            defined += 1;
        }
        t.row([
            cat.label.clone(),
            cat.source.as_str().to_string(),
            cat.is_adjective.to_string(),
            cat.count.to_string(),
            db.matched_images.to_string(),
            db.female.to_string(),
            db.male.to_string(),
            fmt_opt(db.ratio),
            fmt_opt(mb),
            fmt_opt(gb.as_ref().map(|g| g.ratio)),
            gb.as_ref().map_or(String::new(), |g| g.qualifying.to_string()),
            gb.as_ref().map_or(String::new(), |g| g.attempts.to_string()),
            flags.join(";"),
        ]);
        prompts.row([cat.label.clone(), transfer::prompt(cat)]);
    }
    ctx.write_csv(BIAS_POINTS, t)?;
    ctx.write_csv("transfer/prompts.csv", prompts)?;
    let per_source: BTreeMap<&str, usize> = filtered.kept_per_source.iter().map(|(s, n)| (s.as_str(), *n)).collect();
    ctx.write_json(
        "transfer/filter.json",
        json!({
            "categories": cats.len(),
            "kept": filtered.kept.len(),
            "kept_per_source": per_source,
            "not_a_lemma": filtered.not_a_lemma,
            "too_rare": filtered.too_rare,
            "min_count": tc.min_count,
        }),
    )?;
    Ok(format!("{} of {} categories kept, {defined} with both biases", filtered.kept.len(), cats.len()))
}

fn transfer_fit(ctx: &mut Ctx) -> Result<String, CliError> {
    let path = ctx.prior(BIAS_POINTS, "transfer-bias")?;
    let name = path.display().to_string();
    let (header, rows) = io::read_csv(&read(&path)?, &name)?;
    let col = |h: &str| {
        header
            .iter()
            .position(|x| x == h)
            .ok_or_else(|| Error::Format(format!("{name}: missing column `{h}`")))
    };
    let (ci, di, mi) = (col("category")?, col("dataset_bias")?, col("model_bias")?);
    let points: Vec<BiasPoint> = rows
        .iter()
        .filter_map(|(_, r)| {
            Some(BiasPoint {
                category: r[ci].clone(),
                dataset_bias: r[di].parse().ok()?,
                model_bias: r[mi].parse().ok()?,
            })
        })
        .collect();
    let fit = transfer::fit(&points)?;
    ctx.write_json("transfer/fit.json", serde_json::to_value(&fit).expect("fit serializes"))?;
    Ok(format!("n = {}, rho = {:.4}, R² = {:.4}", fit.n, fit.rho, fit.r2))
}

fn report(ctx: &mut Ctx) -> Result<String, CliError> {
    let mut stages = serde_json::Map::new();
    let mut files = Vec::new();
    let out_dir = ctx.cfg.out_dir.clone();
    let mut all: Vec<std::path::PathBuf> = Vec::new();
    collect_files(&out_dir, &mut all)?;
    all.sort();
    for p in &all {
        let rel = p.strip_prefix(&out_dir).unwrap_or(p).to_string_lossy().replace('\\', "/");
        if rel.starts_with("manifests/") || rel == "report.json" {
            continue;
        }
        if rel.ends_with(".json") {
            let mut v: Value = serde_json::from_str(&read(p)?).map_err(|e| Error::Format(format!("{rel}: {e}")))?;
            if let Some(o) = v.as_object_mut() {
                o.remove("meta");
            }
            stages.insert(rel.clone(), v);
        }
        files.push(json!({"path": rel, "sha256": io::sha256_file(p)?}));
    }
    let n = files.len();
    ctx.write_json("report.json", json!({"summaries": stages, "files": files}))?;
    Ok(format!("{n} report files"))
}

fn collect_files(dir: &Path, out: &mut Vec<std::path::PathBuf>) -> Result<(), CliError> {
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(_) => return Ok(()),
    };
    for e in entries {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

pub fn synth(dir: &Path, images: usize, seed: u64, dim: usize) -> Result<(), CliError> {
    if images == 0 || dim == 0 {
        return Err(CliError::Validation("--images and --dim must be positive".into()));
    }
    let cfg = SynthConfig { images, seed, dim };
    let fx = synth::generate(&cfg)?;
    let s = fx.write(dir, seed)?;
    println!("synth: {} images, {} boxes written to {}", s.images, s.boxes, dir.display());
    Ok(())
}
