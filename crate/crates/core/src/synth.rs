//! Deterministic synthetic fixtures: an embedding table over the bundled
//! vocabularies, scripted annotation corpora with matching mock ASR answers,
//! and training logs with designed grading and transcription rates.

use crate::asr::{
    FixtureAlternative, FixtureEntry, FixtureKey, MockFixture, SegmentRef, SimulatedFailure, SpeechInterval,
    TranscriptionResult,
};
use crate::dataset::{CocoAnnotation, CocoCategory, CocoFile, CocoId, CocoImage, Polygon};
use crate::matcher::EmbeddingTable;
use crate::session::{
    write_atomic, AudioRef, Event, EventKind, ImageSession, SessionError, SessionMeta, SessionMode, SessionStore,
};
use crate::trainer::{TrainingLog, TrainingLogImage, TypedEntry};
use crate::vocabulary::Vocabulary;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const FIXTURE_SEED: u64 = 7;
pub const EMBEDDING_DIM: usize = 16;
pub const SAMPLE_RATE: u32 = 8000;

/// Words that are not class names, paired with the phrase they stand for.
/// Their vectors are placed next to the target phrase.
pub const CONFUSIONS: &[(&str, &str)] = &[
    ("oven", "stove"),
    ("signal", "light"),
    ("stoplight", "traffic light"),
    ("dock", "dog"),
    ("puppy", "dog"),
    ("kitty", "cat"),
    ("sofa", "couch"),
    ("automobile", "car"),
    ("television", "tv"),
    ("bike", "bicycle"),
    ("plane", "airplane"),
    ("motorbike", "motorcycle"),
    ("doughnut", "donut"),
    ("cellphone", "cell phone"),
    ("ship", "boat"),
    ("lorry", "truck"),
    ("lamb", "sheep"),
    ("shears", "scissors"),
    ("skiing", "skis"),
];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn round_to(v: f64, digits: i32) -> f64 {
    let f = 10f64.powi(digits);
    (v * f).round() / f
}

fn ms(t: f64) -> f64 {
    round_to(t, 3)
}

/// English plural of a single token, or `None` when the token already looks
/// plural.
pub fn plural(token: &str) -> Option<String> {
    match token {
        "person" => return Some("people".into()),
        "mouse" => return Some("mice".into()),
        "knife" => return Some("knives".into()),
        "sheep" => return None,
        _ => {}
    }
    if token.ends_with('s') && !(token.ends_with("ss") || token.ends_with("us")) {
        return None;
    }
    if ["s", "x", "ch", "sh"].iter().any(|s| token.ends_with(s)) {
        return Some(format!("{token}es"));
    }
    let b = token.as_bytes();
    if b.len() > 1 && b[b.len() - 1] == b'y' && !b"aeiou".contains(&b[b.len() - 2]) {
        return Some(format!("{}ies", &token[..token.len() - 1]));
    }
    Some(format!("{token}s"))
}

/// A way of saying `class` that is not its name: a listed confusion word,
/// else the plural of the last token.
pub fn spoken_variant(class: &str) -> String {
    if let Some((word, _)) = CONFUSIONS.iter().find(|(_, target)| *target == class) {
        return word.to_string();
    }
    let mut tokens: Vec<&str> = class.split(' ').collect();
    let last = tokens.pop().unwrap_or_default();
    let p = plural(last).unwrap_or_else(|| format!("{last}es"));
    tokens.push(&p);
    tokens.join(" ")
}

/// Seeded embedding table covering every class token of `vocabs`, the
/// confusion words, and plurals of the last tokens of all class names.
pub fn fixture_embeddings(vocabs: &[&Vocabulary], seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let derived: BTreeSet<&str> = CONFUSIONS.iter().map(|(w, _)| *w).collect();
    let class_tokens: BTreeSet<String> = vocabs
        .iter()
        .flat_map(|v| v.classes())
        .flat_map(|c| c.tokens().map(str::to_string).collect::<Vec<_>>())
        .collect();
    let mut table = EmbeddingTable::new(EMBEDDING_DIM);
    for token in class_tokens.iter().filter(|t| !derived.contains(t.as_str())) {
        let v = (0..EMBEDDING_DIM)
            .map(|_| round_to(rng.gen_range(-1.0..1.0), 4))
            .collect();
        table.insert(token, v);
    }
    let mut near = |table: &mut EmbeddingTable, word: &str, target: &str| {
        let parts: Vec<Vec<f64>> = target.split(' ').filter_map(|t| table.get(t).map(<[f64]>::to_vec)).collect();
        if parts.is_empty() || table.get(word).is_some() {
            return;
        }
        let v = (0..EMBEDDING_DIM)
            .map(|d| {
                let mean = parts.iter().map(|p| p[d]).sum::<f64>() / parts.len() as f64;
                round_to(mean + rng.gen_range(-0.05..0.05), 4)
            })
            .collect();
        table.insert(word, v);
    };
    for (word, target) in CONFUSIONS {
        near(&mut table, word, target);
    }
    let lasts: BTreeSet<String> = vocabs
        .iter()
        .flat_map(|v| v.classes())
        .filter_map(|c| c.tokens().last().map(str::to_string))
        .collect();
    for last in &lasts {
        if let Some(p) = plural(last) {
            near(&mut table, &p, last);
        }
    }
    table
}

/// Star-shaped polygon with `points` tips, coordinates rounded to 0.01 px.
pub fn star(cx: f64, cy: f64, r_outer: f64, r_inner: f64, points: usize, phase: f64) -> Polygon {
    let n = points * 2;
    Polygon(
        (0..n)
            .map(|k| {
                let r = if k % 2 == 0 { r_outer } else { r_inner };
                let a = phase + std::f64::consts::TAU * k as f64 / n as f64;
                (round_to(cx + r * a.cos(), 2), round_to(cy + r * a.sin(), 2))
            })
            .collect(),
    )
}

fn square(x: f64, y: f64, side: f64) -> Polygon {
    Polygon(vec![(x, y), (x + side, y), (x + side, y + side), (x, y + side)])
}

fn alternatives(texts: &[String]) -> Vec<FixtureAlternative> {
    texts
        .iter()
        .map(|t| FixtureAlternative {
            text: t.clone(),
            confidence: None,
        })
        .collect()
}

/// One scripted click and what the mock recognizer hears for it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedClick {
    pub x: f64,
    pub y: f64,
    /// Empty for a click without speech.
    pub with_hints: Vec<String>,
    pub without_hints: Vec<String>,
    pub fail: Option<SimulatedFailure>,
    pub speech_s: f64,
    /// Clicked and immediately undone.
    pub undone: bool,
}

impl ScriptedClick {
    pub fn spoken(x: f64, y: f64, with_hints: Vec<String>, without_hints: Vec<String>, speech_s: f64) -> Self {
        Self {
            x,
            y,
            with_hints,
            without_hints,
            fail: None,
            speech_s,
            undone: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedImage {
    pub image_id: String,
    pub annotator_id: String,
    pub width: u32,
    pub height: u32,
    /// One instance per entry.
    pub gt: Vec<(String, Polygon)>,
    pub clicks: Vec<ScriptedClick>,
    /// Length of a class-list consultation before the first click.
    pub consult_s: Option<f64>,
}

impl ScriptedImage {
    pub fn key(&self) -> String {
        format!("{}/{}", self.annotator_id, self.image_id)
    }

    /// Renders the session and the fixture entries for its kept clicks.
    pub fn script(&self, vocabulary_id: &str, sample_rate: u32) -> Result<(ImageSession, Vec<FixtureEntry>), SessionError> {
        let key = self.key();
        let mut events = vec![Event::new(EventKind::ImageShown, 0.0)];
        let mut entries = Vec::new();
        let mut speech = Vec::new();
        let mut cursor = 0.5;
        let mut pos = (f64::from(self.width) / 2.0, f64::from(self.height) / 2.0);
        if let Some(c) = self.consult_s {
            events.push(Event::new(EventKind::ShowClassesOpen, 0.6));
            events.push(Event::new(EventKind::ShowClassesClose, ms(0.6 + c)));
            cursor = ms(0.6 + c + 0.3);
        }
        let mut kept = 0;
        for click in &self.clicks {
            const MOVES: usize = 25;
            for m in 0..MOVES {
                let f = (m + 1) as f64 / (MOVES + 1) as f64;
                events.push(Event::at(
                    EventKind::MouseMove,
                    ms(cursor + 0.02 * m as f64),
                    round_to(pos.0 + (click.x - pos.0) * f, 2),
                    round_to(pos.1 + (click.y - pos.1) * f, 2),
                ));
            }
            let tc = ms(cursor + 0.52);
            events.push(Event::at(EventKind::Click, tc, click.x, click.y));
            pos = (click.x, click.y);
            if click.undone {
                events.push(Event::new(EventKind::UndoClick, ms(tc + 0.3)));
                cursor = ms(tc + 0.6);
                continue;
            }
            let speaks = !click.with_hints.is_empty();
            let seg_start = (tc - crate::alignment::DEFAULT_DELTA_S).max(0.0);
            let (s0, s1) = (ms(tc - 0.3), ms(tc - 0.3 + click.speech_s));
            if speaks {
                speech.push((s0, s1));
                cursor = ms(s1 + 0.4);
            } else {
                cursor = ms(tc + 0.8);
            }
            entries.push(FixtureEntry {
                key: FixtureKey::Segment {
                    session: key.clone(),
                    object_index: kept,
                },
                with_hints: alternatives(&click.with_hints),
                without_hints: alternatives(&click.without_hints),
                speech: if speaks {
                    vec![SpeechInterval {
                        start_s: ms(s0 - seg_start),
                        end_s: ms(s1 - seg_start),
                    }]
                } else {
                    Vec::new()
                },
                fail: click.fail,
            });
            kept += 1;
        }
        let submit = ms(cursor + 1.0);
        events.push(Event::new(EventKind::Submit, submit));

        let n = ((submit + 0.25) * f64::from(sample_rate)).round() as usize;
        let samples = (0..n)
            .map(|k| {
                let t = k as f64 / f64::from(sample_rate);
                if speech.iter().any(|&(a, b)| (a..b).contains(&t)) {
                    (2000.0 * (std::f64::consts::TAU * 220.0 * t).sin()) as i16
                } else {
                    0
                }
            })
            .collect();
        let meta = SessionMeta {
            image_id: self.image_id.clone(),
            image_width: self.width,
            image_height: self.height,
            vocabulary_id: vocabulary_id.to_string(),
            annotator_id: self.annotator_id.clone(),
            mode: SessionMode::Main,
        };
        Ok((ImageSession::new(meta, events, AudioRef::new(sample_rate, samples)?)?, entries))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteOptions {
    pub sample_rate: u32,
    /// Index of an image whose audio file is replaced by garbage.
    pub corrupt_audio: Option<usize>,
}

impl Default for WriteOptions {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            corrupt_audio: None,
        }
    }
}

/// Paths of a corpus written to disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrittenCorpus {
    pub store: PathBuf,
    pub gt: PathBuf,
    pub asr_fixture: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub vocabulary_id: String,
    pub images: Vec<ScriptedImage>,
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), SynthError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("fixture serializes");
    bytes.push(b'\n');
    Ok(write_atomic(path, &bytes)?)
}

fn coco_file(vocab: &Vocabulary, images: impl IntoIterator<Item = (String, u32, u32, Vec<(String, Polygon)>)>) -> CocoFile {
    let mut file = CocoFile {
        vocabulary_id: Some(vocab.id().to_string()),
        categories: vocab
            .classes()
            .iter()
            .enumerate()
            .map(|(i, c)| CocoCategory {
                id: i as u64 + 1,
                name: c.normalized().to_string(),
            })
            .collect(),
        ..CocoFile::default()
    };
    for (id, width, height, gt) in images {
        file.images.push(CocoImage {
            id: CocoId::Str(id.clone()),
            width,
            height,
            file_name: format!("{id}.jpg"),
        });
        for (class, poly) in gt {
            let category = vocab.position(&class).expect("ground truth uses vocabulary classes");
            file.annotations.push(CocoAnnotation {
                image_id: CocoId::Str(id.clone()),
                category_id: category as u64 + 1,
                segmentation: vec![poly.0.iter().flat_map(|&(x, y)| [x, y]).collect()],
            });
        }
    }
    file
}

impl SynthCorpus {
    pub fn coco_file(&self, vocab: &Vocabulary) -> CocoFile {
        coco_file(
            vocab,
            self.images
                .iter()
                .map(|i| (i.image_id.clone(), i.width, i.height, i.gt.clone())),
        )
    }

    /// Writes `store/`, `gt.json` and `asr_fixture.json` under `root`.
    pub fn write(&self, root: &Path, vocab: &Vocabulary, options: &WriteOptions) -> Result<WrittenCorpus, SynthError> {
        let out = WrittenCorpus {
            store: root.join("store"),
            gt: root.join("gt.json"),
            asr_fixture: root.join("asr_fixture.json"),
        };
        std::fs::create_dir_all(&out.store).map_err(|source| SynthError::Io {
            path: out.store.clone(),
            source,
        })?;
        let store = SessionStore::new(&out.store);
        let mut fixture = MockFixture::default();
        for (index, image) in self.images.iter().enumerate() {
            let (session, entries) = image.script(&self.vocabulary_id, options.sample_rate)?;
            let dir = store.dir_for(&session.meta);
            SessionStore::write(&dir, &session)?;
            if options.corrupt_audio == Some(index) {
                write_atomic(&dir.join(crate::session::AUDIO_FILE), b"RIFF\x10\0\0\0WAVEnot audio")?;
            }
            fixture.entries.extend(entries);
        }
        write_json(&out.gt, &self.coco_file(vocab))?;
        write_json(&out.asr_fixture, &fixture)?;
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// The 300-image replay corpus

pub const CORPUS_WIDTH: u32 = 640;
pub const CORPUS_HEIGHT: u32 = 480;

/// Filler that never names a class.
pub const FILLER: &str = "uhh";

fn cell_origin(j: usize) -> (f64, f64) {
    ((j % 2) as f64 * 320.0, (j / 2) as f64 * 240.0)
}

/// Scripted corpus of `n_images` images over `vocab` (at least 42 classes).
///
/// Image `i` holds `1 + i % 4` classes `(7i + 13j) mod n`, class `j` drawn as
/// a star in quadrant `j` with radius shrinking in `j`. The annotator clicks
/// the centers in order and names each class, except:
///
/// | rule | condition | click |
/// |---|---|---|
/// | missed | `i%10==9`, two or more classes | last class not clicked |
/// | ASR failure | `i%50==23` | class 0 unlabeled (transport error) |
/// | silence | `i%30==17` | class 0 unlabeled (no speech) |
/// | wrong name | `i%20==11` | class 0 heard as class `c0+41` first, itself second |
/// | second alternative | `i%6==1` | class 1 heard as filler first, itself second |
/// | variant | `i%12==5` | class 0 named by plural or synonym |
/// | off-object | `i%25==3` | class 0 clicked at its quadrant corner |
/// | extra | `i%15==7` | extra click naming absent class `7i+40` |
/// | re-click | `i%16==9` | class 0 clicked and named again at the end |
/// | undo | `i%40==13` | a stray click undone before the first click |
/// | consult | `i%7==2` | class list opened for `1 + (i%5)/2` s |
///
/// Rows are listed in precedence order; the first matching row decides the
/// answer for a click, while the location and extra-click rows combine with
/// any of them.
pub fn replay_corpus(vocab: &Vocabulary, n_images: usize) -> SynthCorpus {
    let n = vocab.len();
    assert!(n > 41, "replay corpus needs more than 41 classes");
    let name = |k: usize| vocab.classes()[k % n].normalized().to_string();
    let images = (0..n_images)
        .map(|i| {
            let n_gt = 1 + i % 4;
            let classes: Vec<usize> = (0..n_gt).map(|j| (7 * i + 13 * j) % n).collect();
            let gt: Vec<(String, Polygon)> = classes
                .iter()
                .enumerate()
                .map(|(j, &c)| {
                    let (ox, oy) = cell_origin(j);
                    let r = 100.0 - 20.0 * j as f64;
                    (name(c), star(ox + 160.0, oy + 120.0, r, 0.45 * r, 7, 0.1 * i as f64))
                })
                .collect();
            let speech_s = |j: usize| round_to(0.6 + 0.2 * ((3 * i + 7 * j) % 7) as f64, 1);
            let mut clicks = Vec::new();
            if i % 40 == 13 {
                clicks.push(ScriptedClick {
                    undone: true,
                    ..ScriptedClick::spoken(300.0, 200.0, vec![], vec![], 0.0)
                });
            }
            for (j, &c) in classes.iter().enumerate() {
                if i % 10 == 9 && n_gt >= 2 && j == n_gt - 1 {
                    continue;
                }
                let (ox, oy) = cell_origin(j);
                let (x, y) = if i % 25 == 3 && j == 0 {
                    (ox + 8.0, oy + 8.0)
                } else {
                    (ox + 160.0 + (i % 5) as f64 - 2.0, oy + 120.0 + j as f64 - 1.0)
                };
                let cls = name(c);
                let variant = spoken_variant(&cls);
                let mut click = ScriptedClick::spoken(
                    x,
                    y,
                    vec![cls.clone(), format!("{FILLER} {cls}")],
                    vec![variant.clone(), cls.clone()],
                    speech_s(j),
                );
                if i % 50 == 23 && j == 0 {
                    click.fail = Some(SimulatedFailure::Transport);
                } else if i % 30 == 17 && j == 0 {
                    click.with_hints.clear();
                    click.without_hints.clear();
                } else if i % 20 == 11 && j == 0 {
                    click.with_hints = vec![name(c + 41), cls.clone()];
                } else if i % 6 == 1 && j == 1 {
                    click.with_hints = vec![FILLER.to_string(), cls.clone()];
                } else if i % 12 == 5 && j == 0 {
                    click.with_hints = vec![variant, format!("{FILLER} {cls}")];
                }
                clicks.push(click);
            }
            if i % 15 == 7 {
                let cls = name(7 * i + 40);
                clicks.push(ScriptedClick::spoken(
                    ((37 * i) % 600 + 20) as f64,
                    ((53 * i) % 440 + 20) as f64,
                    vec![cls.clone()],
                    vec![cls],
                    0.8,
                ));
            }
            if i % 16 == 9 {
                let cls = name(classes[0]);
                clicks.push(ScriptedClick::spoken(164.0, 117.0, vec![cls.clone()], vec![cls], 0.7));
            }
            ScriptedImage {
                image_id: format!("img{i:03}"),
                annotator_id: format!("ann{}", i % 5 + 1),
                width: CORPUS_WIDTH,
                height: CORPUS_HEIGHT,
                gt,
                clicks,
                consult_s: (i % 7 == 2).then(|| 1.0 + 0.5 * ((i % 5) as f64)),
            }
        })
        .collect();
    SynthCorpus {
        vocabulary_id: vocab.id().to_string(),
        images,
    }
}

/// Location corpus: 20 images with 5 classes each, all named correctly.
/// Images `i%5==3` click class 0 off the object (4 misses in 100 countable
/// clicks). With `absent_clicks`, images 0 to 9 get one more click naming a
/// class that is not in the image.
pub fn location_corpus(vocab: &Vocabulary, absent_clicks: bool) -> SynthCorpus {
    let n = vocab.len();
    assert!(n > 45, "location corpus needs more than 45 classes");
    let name = |k: usize| vocab.classes()[k % n].normalized().to_string();
    let images = (0..20)
        .map(|i| {
            let cells: Vec<(f64, f64)> = (0..5).map(|j| ((j % 3) as f64 * 213.0, (j / 3) as f64 * 240.0)).collect();
            let gt: Vec<(String, Polygon)> = (0..5)
                .map(|j| {
                    let (ox, oy) = cells[j];
                    (name(5 * i + j), star(ox + 106.0, oy + 120.0, 80.0, 40.0, 5, 0.0))
                })
                .collect();
            let mut clicks: Vec<ScriptedClick> = (0..5)
                .map(|j| {
                    let (ox, oy) = cells[j];
                    let (x, y) = if i % 5 == 3 && j == 0 {
                        (ox + 4.0, oy + 4.0)
                    } else {
                        (ox + 106.0, oy + 120.0)
                    };
                    let cls = name(5 * i + j);
                    ScriptedClick::spoken(x, y, vec![cls.clone()], vec![cls], 0.9)
                })
                .collect();
            if absent_clicks && i < 10 {
                let cls = name(5 * i + 40);
                clicks.push(ScriptedClick::spoken(600.0, 400.0, vec![cls.clone()], vec![cls], 0.9));
            }
            ScriptedImage {
                image_id: format!("loc{i:02}"),
                annotator_id: "ann1".into(),
                width: CORPUS_WIDTH,
                height: CORPUS_HEIGHT,
                gt,
                clicks,
                consult_s: None,
            }
        })
        .collect();
    SynthCorpus {
        vocabulary_id: vocab.id().to_string(),
        images,
    }
}

// ---------------------------------------------------------------------------
// Training fixtures

/// A training log with the ground truth its images are graded against.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingFixture {
    pub log: TrainingLog,
    pub gt: BTreeMap<String, BTreeSet<String>>,
}

impl TrainingFixture {
    /// Ground truth as a COCO document with one square per class.
    pub fn coco_file(&self, vocab: &Vocabulary) -> CocoFile {
        coco_file(
            vocab,
            self.gt.iter().map(|(id, classes)| {
                let gt = classes
                    .iter()
                    .enumerate()
                    .map(|(k, c)| (c.clone(), square(10.0 + 20.0 * (k % 20) as f64, 10.0 + 20.0 * (k / 20) as f64, 15.0)))
                    .collect();
                (id.clone(), CORPUS_WIDTH, CORPUS_HEIGHT, gt)
            }),
        )
    }

    pub fn write(&self, dir: &Path, vocab: &Vocabulary) -> Result<(PathBuf, PathBuf), SynthError> {
        std::fs::create_dir_all(dir).map_err(|source| SynthError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let (log, gt) = (dir.join("training_log.json"), dir.join("gt.json"));
        write_json(&log, &self.log)?;
        write_json(&gt, &self.coco_file(vocab))?;
        Ok((log, gt))
    }
}

fn typed_entry(text: &str, k: usize) -> TypedEntry {
    TypedEntry {
        text: text.to_string(),
        x: (40 + 50 * (k % 4)) as f64,
        y: (60 + 30 * (k % 3)) as f64,
        t: 2.0 + 3.0 * k as f64,
    }
}

fn group_images(vocab: &Vocabulary, annotator: &str, prefix: &str, entries: Vec<(String, Option<Vec<String>>)>, per_image: usize) -> TrainingFixture {
    let mut images = Vec::new();
    let mut gt = BTreeMap::new();
    for (m, chunk) in entries.chunks(per_image).enumerate() {
        let image_id = format!("{prefix}{m:03}");
        let session = format!("{annotator}/{image_id}");
        let mut image = TrainingLogImage {
            image_id: image_id.clone(),
            typed: Vec::new(),
            spoken: Vec::new(),
        };
        for (k, (typed, spoken)) in chunk.iter().enumerate() {
            image.typed.push(typed_entry(typed, k));
            if let Some(texts) = spoken {
                let r = SegmentRef {
                    session: session.clone(),
                    object_index: k,
                };
                image.spoken.push(TranscriptionResult::from_texts(r, texts));
            }
        }
        let classes = chunk
            .iter()
            .filter_map(|(t, _)| vocab.contains(t).map(|c| c.normalized().to_string()))
            .collect();
        gt.insert(image_id, classes);
        images.push(image);
    }
    TrainingFixture {
        log: TrainingLog {
            annotator_id: annotator.to_string(),
            phrase_hints: true,
            images,
        },
        gt,
    }
}

/// Designed hit counts of [`transcription_fixture`], out of
/// [`TRANSCRIPTION_UTTERANCES`] spoken names: `(recall@1, recall@3)`.
pub const WITH_HINTS_HITS: (usize, usize) = (931, 965);
pub const WITHOUT_HINTS_HITS: (usize, usize) = (705, 847);
pub const TRANSCRIPTION_UTTERANCES: usize = 1000;
pub const SILENT_UTTERANCES: usize = 20;

/// Training log whose transcriptions contain the typed name at rank 1 for
/// `hits.0` utterances and within the top 3 for `hits.1`, plus silent
/// utterances without alternatives. Utterance `v` is placed by the
/// permutation `379 v mod 1000`.
pub fn transcription_fixture(vocab: &Vocabulary, phrase_hints: bool) -> TrainingFixture {
    let (top1, top3) = if phrase_hints { WITH_HINTS_HITS } else { WITHOUT_HINTS_HITS };
    let n = vocab.len();
    let total = TRANSCRIPTION_UTTERANCES + SILENT_UTTERANCES;
    let mut v = 0;
    let entries = (0..total)
        .map(|u| {
            if u % 51 == 50 {
                let cls = vocab.classes()[u % n].normalized().to_string();
                return (cls, Some(Vec::new()));
            }
            let cls = vocab.classes()[(7 * v) % n].normalized().to_string();
            let p = (379 * v) % TRANSCRIPTION_UTTERANCES;
            v += 1;
            let d1 = spoken_variant(&cls);
            let d2 = format!("{FILLER} {cls}");
            let alts = if p < top1 {
                vec![cls.clone(), d1, d2]
            } else if p < top3 {
                if p % 2 == 0 {
                    vec![d1, cls.clone(), d2]
                } else {
                    vec![d1, d2, cls.clone()]
                }
            } else {
                vec![d1, d2, "hmm".to_string()]
            };
            (cls, Some(alts))
        })
        .collect();
    let mut f = group_images(vocab, if phrase_hints { "hints" } else { "nohints" }, "tr", entries, 4);
    f.log.phrase_hints = phrase_hints;
    f
}

/// `total` typed names of which `outside` are not in `vocab`, spread by the
/// permutation `29 k mod total`.
pub fn usage_fixture(vocab: &Vocabulary, total: usize, outside: &[&str]) -> TrainingFixture {
    assert!(outside.iter().all(|w| vocab.contains(w).is_none()), "outside words must not be classes");
    let n = vocab.len();
    let slots: BTreeMap<usize, &str> = outside.iter().enumerate().map(|(k, w)| ((29 * k) % total, *w)).collect();
    assert_eq!(slots.len(), outside.len(), "slot permutation must not collide");
    let entries = (0..total)
        .map(|k| {
            let text = slots
                .get(&k)
                .map_or_else(|| vocab.classes()[(3 * k) % n].normalized().to_string(), |w| w.to_string());
            (text, None)
        })
        .collect();
    group_images(vocab, "usage", "use", entries, 4)
}

/// One 80-image round with 1000 ground-truth classes (alternating 13 and
/// 12 per image) of which `correct` are typed; nothing wrong is typed.
pub fn round_fixture(vocab: &Vocabulary, correct: usize) -> TrainingFixture {
    let n = vocab.len();
    assert!(n >= 40, "round fixture needs at least 40 classes");
    assert!(correct <= 960, "at most 12 correct per image");
    let mut images = Vec::new();
    let mut gt = BTreeMap::new();
    for m in 0..80 {
        let gt_count = if m % 2 == 0 { 13 } else { 12 };
        let classes: Vec<String> = (0..gt_count)
            .map(|k| vocab.classes()[(11 * m + 3 * k) % n].normalized().to_string())
            .collect();
        let typed_count = correct / 80 + usize::from(m < correct % 80);
        let image_id = format!("round{m:02}");
        images.push(TrainingLogImage {
            image_id: image_id.clone(),
            typed: classes[..typed_count].iter().enumerate().map(|(k, c)| typed_entry(c, k)).collect(),
            spoken: Vec::new(),
        });
        gt.insert(image_id, classes.into_iter().collect());
    }
    TrainingFixture {
        log: TrainingLog {
            annotator_id: "round".into(),
            phrase_hints: true,
            images,
        },
        gt,
    }
}
