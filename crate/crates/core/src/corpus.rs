//! Annotation data model: images, person boxes, and the corpus view that ties
//! them together.
//!
//! Inputs are line-delimited JSON records. Image lines carry
//! `{"image_id", "width", "height", "alt_text"}`; box lines carry
//! `{"image_id", "x", "y", "w", "h", "confidence", "gender", "race",
//! "person_caption"}`. Boxes use a top-left origin and integer pixels.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus;
use crate::error::{Error, Result};
use crate::io;

/// Detector confidence floor; boxes below it are rejected at load.
pub const DETECTOR_CONFIDENCE_FLOOR: f64 = 0.25;
/// Default minimum box side length, in pixels.
pub const DEFAULT_MIN_SIDE: u32 = 30;

/// Perceived gender label of a box or an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Male,
    Female,
    Mixed,
    Unclear,
}

impl Gender {
    pub const ALL: [Gender; 4] = [Gender::Male, Gender::Female, Gender::Mixed, Gender::Unclear];
    /// The two labels kept by single-gender analyses.
    pub const BINARY: [Gender; 2] = [Gender::Female, Gender::Male];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Mixed => "mixed",
            Gender::Unclear => "unclear",
        }
    }

    pub fn is_binary(self) -> bool {
        matches!(self, Gender::Male | Gender::Female)
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Gender::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown gender label `{s}`")))
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Perceived race/ethnicity label. There is no `mixed` member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Race {
    Black,
    EastAsian,
    Latino,
    MiddleEastern,
    SouthAsian,
    SoutheastAsian,
    White,
    Unclear,
}

impl Race {
    pub const ALL: [Race; 8] = [
        Race::Black,
        Race::EastAsian,
        Race::Latino,
        Race::MiddleEastern,
        Race::SouthAsian,
        Race::SoutheastAsian,
        Race::White,
        Race::Unclear,
    ];
    /// The seven categories, excluding `unclear`.
    pub const KNOWN: [Race; 7] = [
        Race::Black,
        Race::EastAsian,
        Race::Latino,
        Race::MiddleEastern,
        Race::SouthAsian,
        Race::SoutheastAsian,
        Race::White,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Race::Black => "black",
            Race::EastAsian => "east_asian",
            Race::Latino => "latino",
            Race::MiddleEastern => "middle_eastern",
            Race::SouthAsian => "south_asian",
            Race::SoutheastAsian => "southeast_asian",
            Race::White => "white",
            Race::Unclear => "unclear",
        }
    }

    pub fn is_known(self) -> bool {
        self != Race::Unclear
    }
}

impl FromStr for Race {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Race::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown race label `{s}`")))
    }
}

impl fmt::Display for Race {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One of the 14 intersectional identities (binary gender × known race).
///
/// Index order is female × [`Race::KNOWN`] followed by male × [`Race::KNOWN`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Identity {
    pub gender: Gender,
    pub race: Race,
}

impl Identity {
    pub const COUNT: usize = 14;

    pub fn new(gender: Gender, race: Race) -> Option<Self> {
        (gender.is_binary() && race.is_known()).then_some(Identity { gender, race })
    }

    pub fn all() -> Vec<Identity> {
        Gender::BINARY
            .into_iter()
            .flat_map(|g| Race::KNOWN.into_iter().map(move |r| Identity { gender: g, race: r }))
            .collect()
    }

    pub fn index(self) -> usize {
        let g = if self.gender == Gender::Female { 0 } else { 7 };
        g + Race::KNOWN.iter().position(|&r| r == self.race).expect("known race")
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Identity::all().get(i).copied()
    }

    /// Token of the form `female_east_asian`.
    pub fn token(self) -> String {
        format!("{}_{}", self.gender, self.race)
    }
}

impl FromStr for Identity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Identity::all()
            .into_iter()
            .find(|i| i.token() == s)
            .ok_or_else(|| Error::invalid(format!("unknown identity `{s}`")))
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonBox {
    pub image_id: String,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub confidence: f64,
    pub gender: Gender,
    pub race: Race,
    pub person_caption: Option<String>,
}

impl PersonBox {
    pub fn min_side(&self) -> u32 {
        self.w.min(self.h)
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub alt_text: String,
    /// Derived by [`CorpusView::aggregate_labels`]; never read from input.
    pub image_gender: Gender,
    /// Derived by [`CorpusView::aggregate_labels`]; never read from input.
    pub image_race: Race,
}

impl ImageRecord {
    pub fn new(image_id: impl Into<String>, width: u32, height: u32, alt_text: impl Into<String>) -> Self {
        ImageRecord {
            image_id: image_id.into(),
            width,
            height,
            alt_text: alt_text.into(),
            image_gender: Gender::Unclear,
            image_race: Race::Unclear,
        }
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ImageLine<'a> {
    #[serde(borrow)]
    image_id: std::borrow::Cow<'a, str>,
    width: i64,
    height: i64,
    #[serde(borrow)]
    alt_text: std::borrow::Cow<'a, str>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct BoxLine<'a> {
    #[serde(borrow)]
    image_id: std::borrow::Cow<'a, str>,
    x: i64,
    y: i64,
    w: i64,
    h: i64,
    confidence: f64,
    #[serde(borrow)]
    gender: std::borrow::Cow<'a, str>,
    #[serde(borrow)]
    race: std::borrow::Cow<'a, str>,
    #[serde(default, borrow)]
    person_caption: Option<std::borrow::Cow<'a, str>>,
}

/// How loaders react to a malformed record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// Stop at the first bad record and report its row.
    #[default]
    FailFast,
    /// Drop bad records and report them.
    SkipAndCount,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub row: usize,
    pub reason: String,
}

/// Records accepted by a loader together with everything it rejected.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub rejected: Vec<Rejection>,
}

impl<T> Loaded<T> {
    pub fn count(&self) -> usize {
        self.records.len()
    }
}

fn dim(v: i64, what: &str) -> std::result::Result<u32, String> {
    if v < 1 {
        return Err(format!("{what} must be >= 1, got {v}"));
    }
    u32::try_from(v).map_err(|_| format!("{what} out of range: {v}"))
}

fn coord(v: i64, what: &str) -> std::result::Result<u32, String> {
    if v < 0 {
        return Err(format!("{what} must be >= 0, got {v}"));
    }
    u32::try_from(v).map_err(|_| format!("{what} out of range: {v}"))
}

fn parse_image_line(line: &str) -> std::result::Result<ImageRecord, String> {
    let raw: ImageLine = serde_json::from_str(line).map_err(|e| format!("malformed record: {e}"))?;
    Ok(ImageRecord::new(
        raw.image_id.into_owned(),
        dim(raw.width, "width")?,
        dim(raw.height, "height")?,
        raw.alt_text.into_owned(),
    ))
}

/// Sequential pass over already-parsed rows, in row order. Parse results may
/// come from parallel shards; ordering here keeps the outcome shard-independent.
fn collect_rows<T>(
    parsed: Vec<(usize, std::result::Result<T, String>)>,
    mode: LoadMode,
    source_name: &str,
    mut check: impl FnMut(&T) -> std::result::Result<(), String>,
) -> Result<Loaded<T>> {
    let mut records = Vec::with_capacity(parsed.len());
    let mut rejected = Vec::new();
    for (row, res) in parsed {
        match res.and_then(|rec| check(&rec).map(|_| rec)) {
            Ok(rec) => records.push(rec),
            Err(reason) => match mode {
                LoadMode::FailFast => {
                    return Err(Error::Record {
                        source_name: source_name.to_string(),
                        row,
                        message: reason,
                    })
                }
                LoadMode::SkipAndCount => rejected.push(Rejection { row, reason }),
            },
        }
    }
    Ok(Loaded { records, rejected })
}

/// Parses image records from line-delimited text.
pub fn parse_images(text: &str, mode: LoadMode, source_name: &str) -> Result<Loaded<ImageRecord>> {
    let parsed: Vec<_> = io::numbered_lines(text)
        .into_par_iter()
        .map(|(row, line)| (row, parse_image_line(line)))
        .collect();
    let mut seen = HashSet::new();
    collect_rows(parsed, mode, source_name, |rec| {
        if seen.insert(rec.image_id.clone()) {
            Ok(())
        } else {
            Err(format!("duplicate image_id `{}`", rec.image_id))
        }
    })
}

pub fn load_images(path: &Path, mode: LoadMode) -> Result<Loaded<ImageRecord>> {
    parse_images(&io::read_to_string(path)?, mode, &path.display().to_string())
}

fn parse_box_line(line: &str, dims: &HashMap<&str, (u32, u32)>) -> std::result::Result<PersonBox, String> {
    let raw: BoxLine = serde_json::from_str(line).map_err(|e| format!("malformed record: {e}"))?;
    let (width, height) = *dims
        .get(raw.image_id.as_ref())
        .ok_or_else(|| format!("orphan box: no image `{}`", raw.image_id))?;
    let x = coord(raw.x, "x")?;
    let y = coord(raw.y, "y")?;
    let w = dim(raw.w, "w")?;
    let h = dim(raw.h, "h")?;
    if x as u64 + w as u64 > width as u64 || y as u64 + h as u64 > height as u64 {
        return Err(format!(
            "box ({x},{y},{w},{h}) exceeds image bounds {width}x{height}"
        ));
    }
    if !raw.confidence.is_finite() || raw.confidence > 1.0 {
        return Err(format!("confidence {} outside [0, 1]", raw.confidence));
    }
    if raw.confidence < DETECTOR_CONFIDENCE_FLOOR {
        return Err(format!(
            "confidence {} below detector floor {DETECTOR_CONFIDENCE_FLOOR}",
            raw.confidence
        ));
    }
    let gender = raw.gender.parse::<Gender>().map_err(|e| e.to_string())?;
    let race = raw.race.parse::<Race>().map_err(|e| e.to_string())?;
    Ok(PersonBox {
        image_id: raw.image_id.into_owned(),
        x,
        y,
        w,
        h,
        confidence: raw.confidence,
        gender,
        race,
        person_caption: raw.person_caption.map(|c| c.into_owned()),
    })
}

/// Parses box records, validating each against its parent image.
pub fn parse_boxes(
    text: &str,
    images: &[ImageRecord],
    mode: LoadMode,
    source_name: &str,
) -> Result<Loaded<PersonBox>> {
    let dims: HashMap<&str, (u32, u32)> = images
        .iter()
        .map(|im| (im.image_id.as_str(), (im.width, im.height)))
        .collect();
    let parsed: Vec<_> = io::numbered_lines(text)
        .into_par_iter()
        .map(|(row, line)| (row, parse_box_line(line, &dims)))
        .collect();
    collect_rows(parsed, mode, source_name, |_| Ok(()))
}

pub fn load_boxes(path: &Path, images: &[ImageRecord], mode: LoadMode) -> Result<Loaded<PersonBox>> {
    parse_boxes(&io::read_to_string(path)?, images, mode, &path.display().to_string())
}

/// Serializes images in the canonical input schema (derived labels omitted).
pub fn images_to_ndjson(images: &[ImageRecord]) -> String {
    let mut out = String::new();
    for im in images {
        let line = ImageLine {
            image_id: im.image_id.as_str().into(),
            width: im.width as i64,
            height: im.height as i64,
            alt_text: im.alt_text.as_str().into(),
        };
        out.push_str(&serde_json::to_string(&line).expect("image record serializes"));
        out.push('\n');
    }
    out
}

/// Serializes boxes in the canonical input schema.
pub fn boxes_to_ndjson(boxes: &[PersonBox]) -> String {
    let mut out = String::new();
    for b in boxes {
        let line = BoxLine {
            image_id: b.image_id.as_str().into(),
            x: b.x as i64,
            y: b.y as i64,
            w: b.w as i64,
            h: b.h as i64,
            confidence: b.confidence,
            gender: b.gender.as_str().into(),
            race: b.race.as_str().into(),
            person_caption: b.person_caption.as_deref().map(Into::into),
        };
        out.push_str(&serde_json::to_string(&line).expect("box record serializes"));
        out.push('\n');
    }
    out
}

/// Size and confidence thresholds applied to detected boxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxFilter {
    pub min_side: u32,
    pub min_conf: f64,
}

impl Default for BoxFilter {
    fn default() -> Self {
        BoxFilter {
            min_side: DEFAULT_MIN_SIDE,
            min_conf: DETECTOR_CONFIDENCE_FLOOR,
        }
    }
}

impl BoxFilter {
    /// Both thresholds are inclusive: a 30×30 box passes the default filter.
    pub fn keeps(&self, b: &PersonBox) -> bool {
        b.min_side() >= self.min_side && b.confidence >= self.min_conf
    }
}

/// Keeps boxes with `min(w, h) >= min_side` and `confidence >= min_conf`,
/// preserving order.
pub fn filter_boxes(boxes: &[PersonBox], filter: &BoxFilter) -> Vec<PersonBox> {
    boxes.iter().filter(|b| filter.keeps(b)).cloned().collect()
}

/// Images, boxes, and the per-image box index.
#[derive(Debug, Clone)]
pub struct CorpusView {
    images: Vec<ImageRecord>,
    boxes: Vec<PersonBox>,
    by_id: HashMap<String, usize>,
    boxes_by_image: Vec<Vec<usize>>,
}

impl CorpusView {
    pub fn new(images: Vec<ImageRecord>, boxes: Vec<PersonBox>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(images.len());
        for (i, im) in images.iter().enumerate() {
            if by_id.insert(im.image_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(im.image_id.clone()));
            }
        }
        let mut boxes_by_image = vec![Vec::new(); images.len()];
        for (bi, b) in boxes.iter().enumerate() {
            let ii = *by_id
                .get(&b.image_id)
                .ok_or_else(|| Error::invalid(format!("box references unknown image `{}`", b.image_id)))?;
            boxes_by_image[ii].push(bi);
        }
        Ok(CorpusView {
            images,
            boxes,
            by_id,
            boxes_by_image,
        })
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn boxes(&self) -> &[PersonBox] {
        &self.boxes
    }

    pub fn image_index(&self, image_id: &str) -> Option<usize> {
        self.by_id.get(image_id).copied()
    }

    pub fn boxes_of(&self, image: usize) -> impl Iterator<Item = &PersonBox> + '_ {
        self.boxes_by_image[image].iter().map(move |&bi| &self.boxes[bi])
    }

    /// Positions in [`CorpusView::boxes`] of the boxes of `image`.
    pub fn box_positions(&self, image: usize) -> &[usize] {
        &self.boxes_by_image[image]
    }

    pub fn box_count(&self, image: usize) -> usize {
        self.boxes_by_image[image].len()
    }

    /// Drops boxes failing `filter`, keeping every image.
    pub fn filtered(self, filter: &BoxFilter) -> Self {
        let boxes = filter_boxes(&self.boxes, filter);
        CorpusView::new(self.images, boxes).expect("filtering preserves box/image resolution")
    }

    /// Derives image-level gender and race labels from each image's boxes.
    pub fn aggregate_labels(&mut self) {
        let labels: Vec<(Gender, Race)> = (0..self.images.len())
            .into_par_iter()
            .map(|i| {
                let genders: Vec<Gender> = self.boxes_of(i).map(|b| b.gender).collect();
                let races: Vec<Race> = self.boxes_of(i).map(|b| b.race).collect();
                (consensus::image_gender(&genders), consensus::image_race(&races))
            })
            .collect();
        for (im, (g, r)) in self.images.iter_mut().zip(labels) {
            im.image_gender = g;
            im.image_race = r;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(id: &str) -> ImageRecord {
        ImageRecord::new(id, 256, 256, "a cat")
    }

    fn bx(w: u32, h: u32, conf: f64) -> PersonBox {
        PersonBox {
            image_id: "a".into(),
            x: 0,
            y: 0,
            w,
            h,
            confidence: conf,
            gender: Gender::Male,
            race: Race::White,
            person_caption: None,
        }
    }

    #[test]
    fn empty_image_file() {
        let got = parse_images("", LoadMode::FailFast, "t").unwrap();
        assert_eq!(got.count(), 0);
    }

    #[test]
    fn minimal_image_record() {
        let got = parse_images(
            r#"{"image_id":"a","width":256,"height":256,"alt_text":"a cat"}"#,
            LoadMode::FailFast,
            "t",
        )
        .unwrap();
        assert_eq!(got.records, vec![img("a")]);
        assert_eq!(got.records[0].image_gender, Gender::Unclear);
    }

    #[test]
    fn image_errors() {
        let dup = "{\"image_id\":\"a\",\"width\":1,\"height\":1,\"alt_text\":\"\"}\n{\"image_id\":\"a\",\"width\":1,\"height\":1,\"alt_text\":\"\"}";
        let err = parse_images(dup, LoadMode::FailFast, "t").unwrap_err();
        assert!(err.to_string().contains("row 2") && err.to_string().contains("duplicate"));

        let zero = r#"{"image_id":"a","width":0,"height":1,"alt_text":""}"#;
        assert!(parse_images(zero, LoadMode::FailFast, "t").is_err());

        let wrong_case = r#"{"Image_id":"a","width":1,"height":1,"alt_text":""}"#;
        assert!(parse_images(wrong_case, LoadMode::FailFast, "t").is_err());
    }

    #[test]
    fn full_frame_box_accepted_off_by_one_rejected() {
        let images = vec![img("a")];
        let ok = r#"{"image_id":"a","x":0,"y":0,"w":256,"h":256,"confidence":0.9,"gender":"male","race":"white","person_caption":null}"#;
        assert_eq!(parse_boxes(ok, &images, LoadMode::FailFast, "t").unwrap().count(), 1);
        let bad = r#"{"image_id":"a","x":1,"y":0,"w":256,"h":10,"confidence":0.9,"gender":"male","race":"white","person_caption":null}"#;
        let err = parse_boxes(bad, &images, LoadMode::FailFast, "t").unwrap_err();
        assert!(err.to_string().contains("bounds"), "{err}");
    }

    #[test]
    fn box_enum_and_floor_errors() {
        let images = vec![img("a")];
        for line in [
            r#"{"image_id":"a","x":0,"y":0,"w":5,"h":5,"confidence":0.9,"gender":"man","race":"white","person_caption":null}"#,
            r#"{"image_id":"a","x":0,"y":0,"w":5,"h":5,"confidence":0.9,"gender":"male","race":"mixed","person_caption":null}"#,
            r#"{"image_id":"a","x":0,"y":0,"w":5,"h":5,"confidence":0.2,"gender":"male","race":"white","person_caption":null}"#,
            r#"{"image_id":"b","x":0,"y":0,"w":5,"h":5,"confidence":0.9,"gender":"male","race":"white","person_caption":null}"#,
        ] {
            assert!(parse_boxes(line, &images, LoadMode::FailFast, "t").is_err(), "{line}");
        }
    }

    #[test]
    fn filter_thresholds_inclusive() {
        let f = BoxFilter::default();
        assert!(!f.keeps(&bx(29, 40, 0.9)));
        assert!(f.keeps(&bx(30, 30, 0.25)));
        assert!(!f.keeps(&bx(30, 30, 0.2499)));
    }

    #[test]
    fn filter_identity_and_empty() {
        let boxes = vec![bx(1, 1, 0.25), bx(100, 3, 1.0)];
        let id = BoxFilter { min_side: 1, min_conf: 0.0 };
        assert_eq!(filter_boxes(&boxes, &id), boxes);
        assert!(filter_boxes(&[], &BoxFilter::default()).is_empty());
    }

    #[test]
    fn identity_indexing() {
        let all = Identity::all();
        assert_eq!(all.len(), Identity::COUNT);
        for (i, id) in all.iter().enumerate() {
            assert_eq!(id.index(), i);
            assert_eq!(id.token().parse::<Identity>().unwrap(), *id);
        }
        assert_eq!(all[0].token(), "female_black");
        assert_eq!(all[13].token(), "male_white");
        assert!(Identity::new(Gender::Mixed, Race::White).is_none());
    }

    #[test]
    fn corpus_view_rejects_orphans() {
        let err = CorpusView::new(vec![img("x")], vec![bx(5, 5, 0.5)]).unwrap_err();
        assert!(err.to_string().contains("unknown image"));
    }
}
