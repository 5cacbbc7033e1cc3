//! Seeded synthetic fixtures in every input format the pipeline reads.
//!
//! Captions, boxes and embeddings are generated jointly so each stage sees
//! structure worth measuring: categories skew by gender, topics and crime
//! or country mentions vary by identity, and embeddings cluster by topic.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::audit;
use crate::consensus::{self, DetectionRecord, Labeling};
use crate::corpus::{self, Gender, Identity, ImageRecord, PersonBox, Race};
use crate::embedding::EmbeddingMatrix;
use crate::error::Result;
use crate::io;
use crate::sentiment::HateScore;
use crate::textindex::LemmaDictionary;
use crate::topics::{self, TopicVocabulary};
use crate::transfer::{self, CategorySource, SocialCategory};

/// File names written by [`Fixture::write`].
pub mod files {
    pub const IMAGES: &str = "images.jsonl";
    pub const BOXES: &str = "boxes.jsonl";
    pub const CAPTION_EMBEDDINGS: &str = "caption_embeddings.f32";
    pub const TOPICS: &str = "topics.csv";
    pub const TOPIC_EMBEDDINGS: &str = "topic_embeddings.f32";
    pub const CLUSTER_CACHE: &str = "cluster_cache.f32";
    pub const LABELINGS: &str = "labelings.csv";
    pub const DETECTIONS: &str = "detections.jsonl";
    pub const HATE_SCORES: &str = "hate_scores.jsonl";
    pub const CATEGORIES: &str = "categories.csv";
    pub const LEMMAS: &str = "lemmas.txt";
    pub const GENERATION_LABELS: &str = "generation_labels.csv";
    pub const CATEGORY_EMBEDDINGS: &str = "category_embeddings.f32";
    pub const PROBE_IMAGES: &str = "probe_images.f32";
    pub const SUMMARY: &str = "fixture.json";
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub images: usize,
    pub seed: u64,
    pub dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            images: 1000,
            seed: 1729,
            dim: 16,
        }
    }
}

// Groups of near-synonymous topics; members of a group embed close together.
const TOPIC_GROUPS: &[&[&str]] = &[
    &["football", "soccer"],
    &["basketball"],
    &["cooking", "kitchen", "recipe"],
    &["wedding", "bride"],
    &["office", "meeting"],
    &["beach", "ocean"],
    &["music", "concert", "guitar"],
    &["garden", "flower"],
    &["travel", "airport"],
    &["science", "laboratory"],
    &["church"],
    &["party"],
    &["hospital"],
    &["protest"],
    &["fashion", "dress", "runway"],
    &["car"],
    &["school", "classroom"],
    &["business", "finance"],
    &["dance"],
    &["fitness", "gym"],
    &["family"],
    &["art", "painting"],
];

// (label, programmed female share, adjective, in the lemma list, weight)
const CATEGORIES: &[(&str, f64, bool, bool, f64)] = &[
    ("nurse", 0.85, false, true, 1.0),
    ("engineer", 0.2, false, true, 1.0),
    ("teacher", 0.7, false, true, 1.0),
    ("pilot", 0.15, false, true, 1.0),
    ("chef", 0.35, false, true, 1.0),
    ("dancer", 0.8, false, true, 1.0),
    ("soldier", 0.1, false, true, 1.0),
    ("scientist", 0.35, false, true, 1.0),
    ("lawyer", 0.45, false, true, 1.0),
    ("farmer", 0.25, false, true, 1.0),
    ("librarian", 0.75, false, true, 1.0),
    ("mechanic", 0.1, false, true, 1.0),
    ("cashier", 0.6, false, true, 1.0),
    ("doctor", 0.4, false, true, 1.0),
    ("brave", 0.35, true, true, 1.0),
    ("elegant", 0.8, true, true, 1.0),
    ("cheerful", 0.6, true, true, 1.0),
    ("influencer", 0.7, false, false, 1.0),
    ("nanny", 0.9, false, true, 0.1),
];

const POSITIVE: &[&str] = &["happy", "beautiful", "great day", "love this", "wonderful", "smiling"];
const NEGATIVE: &[&str] = &["sad", "terrible", "angry", "not good", "awful", "lonely"];
const FILLERS: &[&str] = &["photo of a", "a", "portrait of", "picture:", "the"];

// Arbitrary per-race rates at which captions carry a crime keyword.
const CRIME_RATE: [f64; 7] = [0.04, 0.07, 0.03, 0.05, 0.04, 0.06, 0.05];
const RACE_WEIGHTS: [f64; 7] = [0.12, 0.1, 0.1, 0.07, 0.08, 0.08, 0.45];

#[derive(Debug, Clone)]
pub struct Fixture {
    pub images: Vec<ImageRecord>,
    pub boxes: Vec<PersonBox>,
    pub caption_embeddings: EmbeddingMatrix,
    pub topics: TopicVocabulary,
    pub cluster_cache: EmbeddingMatrix,
    pub labelings: Vec<Labeling>,
    pub detections: Vec<DetectionRecord>,
    pub hate_scores: Vec<HateScore>,
    pub categories: Vec<SocialCategory>,
    pub lemmas: Vec<String>,
    pub generation: BTreeMap<String, Vec<Option<Gender>>>,
    pub category_embeddings: EmbeddingMatrix,
    pub probe_images: EmbeddingMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureSummary {
    pub seed: u64,
    pub images: usize,
    pub boxes: usize,
    pub embedding_rows: usize,
    pub embedding_dim: usize,
    pub topics: usize,
    pub cluster_cache_rows: usize,
    pub labeled_items: usize,
    pub detection_images: usize,
    pub hate_scores: usize,
    pub categories: usize,
    pub probe_images: usize,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

fn pick_weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn other_gender(g: Gender) -> Gender {
    if g == Gender::Male {
        Gender::Female
    } else {
        Gender::Male
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.dim;
    let dict = LemmaDictionary::builtin();
    let crime: Vec<String> = io::parse_list(audit::BUILTIN_CRIME_KEYWORDS);
    let countries = audit::builtin_country_groups(&dict);

    // Topic vocabulary: one random direction per group, members jittered
    // by varying amounts so groups split at different thresholds.
    let mut topic_labels = Vec::new();
    let mut topic_vecs: Vec<Vec<f64>> = Vec::new();
    for group in TOPIC_GROUPS {
        let base = unit(gaussian_vec(&mut rng, d, 1.0));
        for (i, label) in group.iter().enumerate() {
            let jitter = if i == 0 { 0.0 } else { 0.03 + 0.03 * i as f64 };
            let noise = gaussian_vec(&mut rng, d, jitter);
            topic_vecs.push(unit(base.iter().zip(&noise).map(|(b, n)| b + n).collect()));
            topic_labels.push(label.to_string());
        }
    }
    let nt = topic_labels.len();
    let topic_emb = EmbeddingMatrix::new(d, topic_vecs.iter().flat_map(|v| to_f32(v)).collect(), topic_labels.clone())?;
    let sources = (0..nt).map(|i| if i % 3 == 0 { "wikipedia" } else { "caption" }.to_string()).collect();
    let topics = TopicVocabulary::new(topic_labels.clone(), sources, topic_emb)?;

    // Cluster embeddings for every clustering in the default sweep, as an
    // external text encoder would supply them.
    let mut cache_rows: BTreeMap<String, Vec<f32>> = BTreeMap::new();
    for tau in topics::tau_sweep() {
        let c = topics::cluster_topics(&topics, tau)?;
        for (k, members) in c.clusters.iter().enumerate() {
            if members.len() < 2 {
                continue;
            }
            let mut mean = vec![0.0; d];
            for &t in members {
                mean.iter_mut().zip(&topic_vecs[t]).for_each(|(a, b)| *a += b);
            }
            cache_rows.insert(topics::cluster_key(&c.cluster_text(k, &topic_labels)), to_f32(&unit(mean)));
        }
    }
    let cluster_cache = EmbeddingMatrix::new(
        d,
        cache_rows.values().flatten().copied().collect(),
        cache_rows.keys().cloned().collect(),
    )?;

    let identity_dirs: Vec<Vec<f64>> = (0..Identity::COUNT).map(|_| unit(gaussian_vec(&mut rng, d, 1.0))).collect();
    let cat_weight = |female: bool| -> Vec<f64> {
        CATEGORIES
            .iter()
            .map(|&(_, p, _, _, w)| w * if female { p } else { 1.0 - p })
            .collect()
    };
    let (female_w, male_w, any_w) = (
        cat_weight(true),
        cat_weight(false),
        CATEGORIES.iter().map(|c| c.4).collect::<Vec<_>>(),
    );

    let mut images = Vec::with_capacity(cfg.images);
    let mut boxes = Vec::new();
    let mut emb_data = Vec::with_capacity(cfg.images * d);
    let mut emb_ids = Vec::with_capacity(cfg.images);
    let mut emb_tags = Vec::with_capacity(cfg.images);
    let mut hate_scores = Vec::with_capacity(cfg.images);
    for n in 0..cfg.images {
        let id = format!("img{n:05}");
        let width = rng.gen_range(200..=1024u32);
        let height = rng.gen_range(200..=1024u32);
        let n_boxes = match pick_weighted(&mut rng, &[0.12, 0.5, 0.23, 0.1, 0.05]) {
            4 => rng.gen_range(4..=8),
            k => k,
        };
        let main_gender = if rng.gen_bool(0.55) { Gender::Male } else { Gender::Female };
        let main_race = Race::KNOWN[pick_weighted(&mut rng, &RACE_WEIGHTS)];
        let mut genders = Vec::new();
        let mut races = Vec::new();
        for _ in 0..n_boxes {
            let gender = match rng.gen::<f64>() {
                u if u < 0.8 => main_gender,
                u if u < 0.92 => other_gender(main_gender),
                _ => Gender::Unclear,
            };
            let race = match rng.gen::<f64>() {
                u if u < 0.85 => main_race,
                u if u < 0.93 => Race::KNOWN[rng.gen_range(0..7)],
                _ => Race::Unclear,
            };
            let w = rng.gen_range(10..=width / 2);
            let h = rng.gen_range(10..=height / 2);
            boxes.push(PersonBox {
                image_id: id.clone(),
                x: rng.gen_range(0..=width - w),
                y: rng.gen_range(0..=height - h),
                w,
                h,
                confidence: (rng.gen_range(0.3..1.0f64) * 1000.0).round() / 1000.0,
                gender,
                race,
                person_caption: rng.gen_bool(0.3).then(|| format!("a {} person", gender.as_str())),
            });
            genders.push(gender);
            races.push(race);
        }
        let image_gender = consensus::image_gender(&genders);
        let image_race = consensus::image_race(&races);
        let identity = Identity::new(image_gender, image_race);

        let mut words: Vec<String> = vec![FILLERS.choose(&mut rng).expect("fillers").to_string()];
        match rng.gen::<f64>() {
            u if u < 0.2 => words.push(POSITIVE.choose(&mut rng).expect("words").to_string()),
            u if u < 0.35 => words.push(NEGATIVE.choose(&mut rng).expect("words").to_string()),
            _ => {}
        }
        let mut noun = None;
        if n_boxes > 0 && rng.gen_bool(0.4) {
            let w = match image_gender {
                Gender::Female => &female_w,
                Gender::Male => &male_w,
                _ => &any_w,
            };
            let (label, _, adjective, _, _) = CATEGORIES[pick_weighted(&mut rng, w)];
            if adjective {
                words.push(label.to_string());
            } else {
                noun = Some(label);
            }
        }
        words.push(
            noun.unwrap_or(match (n_boxes, image_gender) {
                (0, _) => "scene",
                (_, Gender::Female) => "woman",
                (_, Gender::Male) => "man",
                (1, _) => "person",
                _ => "group of people",
            })
            .to_string(),
        );
        let topic = match identity {
            Some(ident) if rng.gen_bool(0.5) => (3 * ident.index() + rng.gen_range(0..2)) % nt,
            _ => rng.gen_range(0..nt),
        };
        words.push(format!("at the {}", topic_labels[topic]));
        if rng.gen_bool(0.3) {
            let region = image_race.is_known().then(|| image_race.as_str());
            let local: Vec<&audit::CountryGroup> =
                countries.iter().filter(|g| g.region.as_deref() == region).collect();
            let g = if !local.is_empty() && rng.gen_bool(0.6) {
                local.choose(&mut rng).expect("nonempty")
            } else {
                countries.choose(&mut rng).expect("countries")
            };
            words.push(format!("in {}", g.country));
        }
        let crime_rate = Race::KNOWN.iter().position(|&r| r == image_race).map_or(0.02, |i| CRIME_RATE[i]);
        let has_crime = n_boxes > 0 && rng.gen_bool(crime_rate);
        if has_crime {
            words.push(crime.choose(&mut rng).expect("crime words").clone());
        }
        images.push(ImageRecord::new(&id, width, height, words.join(" ")));

        let ident_dir = identity.map(|i| &identity_dirs[i.index()]);
        let noise = gaussian_vec(&mut rng, d, 0.15);
        let v: Vec<f64> = (0..d)
            .map(|k| topic_vecs[topic][k] + ident_dir.map_or(0.0, |dir| 0.6 * dir[k]) + noise[k])
            .collect();
        emb_data.extend(to_f32(&unit(v)));
        emb_ids.push(id.clone());
        emb_tags.push(identity);

        let u: f64 = rng.gen();
        let p = if has_crime { 2 } else { 4 };
        let round = |x: f64| (x * 1e6).round() / 1e6;
        hate_scores.push(HateScore {
            image_id: id,
            hateful: round(u.powi(p)),
            targeted: round(u.powi(p + 1) * rng.gen::<f64>()),
            aggressive: round(u.powi(p - 1) * rng.gen::<f64>()),
        });
    }
    let caption_embeddings = EmbeddingMatrix::new(d, emb_data, emb_ids)?.with_identities(emb_tags)?;

    // Three annotators relabel the gender of the first boxes with
    // increasing noise.
    let items: Vec<(String, Gender)> = {
        let mut per_image: BTreeMap<&str, usize> = BTreeMap::new();
        boxes
            .iter()
            .take(80)
            .map(|b| {
                let k = per_image.entry(b.image_id.as_str()).or_default();
                *k += 1;
                (format!("{}/{}", b.image_id, *k - 1), b.gender)
            })
            .collect()
    };
    let labelings = ["annotator_a", "annotator_b", "annotator_c"]
        .iter()
        .zip([0.08, 0.12, 0.18])
        .map(|(name, flip)| {
            Labeling::from_pairs(
                *name,
                items.iter().map(|(item, g)| {
                    let label = if rng.gen_bool(flip) {
                        *[Gender::Male, Gender::Female, Gender::Unclear].choose(&mut rng).expect("labels")
                    } else {
                        *g
                    };
                    (item.clone(), label.as_str())
                }),
            )
        })
        .collect();

    // Detector output against ground truth for the first 100 images with people.
    let mut detections = Vec::new();
    for img in &images {
        if detections.len() == 100 {
            break;
        }
        let gt: Vec<[f64; 4]> = boxes
            .iter()
            .filter(|b| b.image_id == img.image_id)
            .map(|b| [b.x as f64, b.y as f64, b.w as f64, b.h as f64])
            .collect();
        if gt.is_empty() {
            continue;
        }
        let mut pred = Vec::new();
        for g in &gt {
            if rng.gen_bool(0.9) {
                let jx = rng.gen_range(-0.15..0.15) * g[2];
                let jy = rng.gen_range(-0.15..0.15) * g[3];
                let s = rng.gen_range(0.85..1.15);
                pred.push([g[0] + jx, g[1] + jy, g[2] * s, g[3] * s, rng.gen_range(0.5..1.0)]);
            }
        }
        for _ in 0..rng.gen_range(0..=2) {
            let w = rng.gen_range(10.0..img.width as f64 / 2.0);
            let h = rng.gen_range(10.0..img.height as f64 / 2.0);
            pred.push([
                rng.gen_range(0.0..img.width as f64 - w),
                rng.gen_range(0.0..img.height as f64 - h),
                w,
                h,
                rng.gen_range(0.0..0.6),
            ]);
        }
        detections.push(DetectionRecord {
            image_id: img.image_id.clone(),
            pred,
            gt,
        });
    }

    // Social categories, their generation labels, and embeddings whose
    // gender lean follows the programmed female share.
    let categories: Vec<SocialCategory> = CATEGORIES
        .iter()
        .enumerate()
        .map(|(i, &(label, _, adj, _, _))| SocialCategory {
            label: label.to_string(),
            source: if i % 3 == 2 { CategorySource::Sobit } else { CategorySource::Guilbeault },
            is_adjective: adj,
            count: 0,
        })
        .collect();
    let mut lemmas: BTreeSet<String> = CATEGORIES.iter().filter(|c| c.3).map(|c| c.0.to_string()).collect();
    lemmas.extend(["person", "photo", "wedding", "police_officer"].map(String::from));
    let mut generation = BTreeMap::new();
    for (i, &(label, p, _, _, _)) in CATEGORIES.iter().enumerate() {
        let qualify = if i % 7 == 3 { 0.15 } else { rng.gen_range(0.5..0.95) };
        let lean = (p + rng.gen_range(-0.1..0.1)).clamp(0.0, 1.0);
        let mut labels = Vec::new();
        let mut ok = 0;
        while ok < transfer::GENERATION_QUOTA && labels.len() < transfer::GENERATION_ATTEMPTS {
            if rng.gen_bool(qualify) {
                ok += 1;
                labels.push(Some(if rng.gen_bool(lean) { Gender::Female } else { Gender::Male }));
            } else {
                labels.push(None);
            }
        }
        generation.insert(label.to_string(), labels);
    }
    let gender_axis = unit(gaussian_vec(&mut rng, d, 1.0));
    let mut cat_data = Vec::new();
    for &(_, p, _, _, _) in CATEGORIES {
        let lean = 2.0 * (p - 0.5) + rng.sample::<f64, _>(StandardNormal) * 0.15;
        let noise = gaussian_vec(&mut rng, d, 0.25);
        cat_data.extend(to_f32(&unit((0..d).map(|k| 0.6 * lean * gender_axis[k] + noise[k]).collect())));
    }
    let category_embeddings =
        EmbeddingMatrix::new(d, cat_data, CATEGORIES.iter().map(|c| c.0.to_string()).collect())?;
    let mut probe_data = Vec::new();
    let mut probe_tags = Vec::new();
    for i in 0..40 {
        let female = i % 2 == 0;
        let sign = if female { 1.0 } else { -1.0 };
        let noise = gaussian_vec(&mut rng, d, 0.3);
        probe_data.extend(to_f32(&unit((0..d).map(|k| 0.5 * sign * gender_axis[k] + noise[k]).collect())));
        let g = if female { Gender::Female } else { Gender::Male };
        probe_tags.push(Identity::new(g, Race::KNOWN[i % 7]));
    }
    let probe_images = EmbeddingMatrix::new(d, probe_data, (0..40).map(|i| format!("probe{i:03}")).collect())?
        .with_identities(probe_tags)?;

    Ok(Fixture {
        images,
        boxes,
        caption_embeddings,
        topics,
        cluster_cache,
        labelings,
        detections,
        hate_scores,
        categories,
        lemmas: lemmas.into_iter().collect(),
        generation,
        category_embeddings,
        probe_images,
    })
}

impl Fixture {
    pub fn summary(&self, seed: u64) -> FixtureSummary {
        FixtureSummary {
            seed,
            images: self.images.len(),
            boxes: self.boxes.len(),
            embedding_rows: self.caption_embeddings.rows(),
            embedding_dim: self.caption_embeddings.dim(),
            topics: self.topics.len(),
            cluster_cache_rows: self.cluster_cache.rows(),
            labeled_items: self.labelings.first().map_or(0, |l| l.labels.len()),
            detection_images: self.detections.len(),
            hate_scores: self.hate_scores.len(),
            categories: self.categories.len(),
            probe_images: self.probe_images.rows(),
        }
    }

    /// Writes every fixture file into `dir` (created if missing).
    pub fn write(&self, dir: &Path, seed: u64) -> Result<FixtureSummary> {
        let w = |name: &str, text: String| io::write_bytes(&dir.join(name), text.as_bytes());
        w(files::IMAGES, corpus::images_to_ndjson(&self.images))?;
        w(files::BOXES, corpus::boxes_to_ndjson(&self.boxes))?;
        self.caption_embeddings.save(&dir.join(files::CAPTION_EMBEDDINGS))?;
        let mut t = io::CsvTable::new(&["label", "source"]);
        for (l, s) in self.topics.labels.iter().zip(&self.topics.sources) {
            t.row([l, s]);
        }
        w(files::TOPICS, t.into_string())?;
        self.topics.embeddings.save(&dir.join(files::TOPIC_EMBEDDINGS))?;
        self.cluster_cache.save(&dir.join(files::CLUSTER_CACHE))?;
        w(files::LABELINGS, consensus::labelings_to_csv(&self.labelings))?;
        w(
            files::DETECTIONS,
            self.detections
                .iter()
                .map(|r| serde_json::to_string(r).expect("detections serialize") + "\n")
                .collect(),
        )?;
        w(
            files::HATE_SCORES,
            self.hate_scores
                .iter()
                .map(|r| serde_json::to_string(r).expect("scores serialize") + "\n")
                .collect(),
        )?;
        w(files::CATEGORIES, transfer::categories_to_csv(&self.categories))?;
        w(files::LEMMAS, self.lemmas.iter().map(|l| format!("{l}\n")).collect())?;
        w(files::GENERATION_LABELS, transfer::generation_labels_to_csv(&self.generation))?;
        self.category_embeddings.save(&dir.join(files::CATEGORY_EMBEDDINGS))?;
        self.probe_images.save(&dir.join(files::PROBE_IMAGES))?;
        let summary = self.summary(seed);
        w(files::SUMMARY, serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n")?;
        Ok(summary)
    }
}
