use speaklabel_core::asr::SegmentRef;
use speaklabel_core::matcher::{embed_phrase, ResolutionMethod};
use speaklabel_core::synth::{fixture_embeddings, CONFUSIONS, FIXTURE_SEED};
use speaklabel_core::{EmbeddingTable, LabelMatcher, TranscriptionResult, Vocabulary};
use std::path::{Path, PathBuf};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn vocabularies() -> (Vocabulary, Vocabulary) {
    (
        Vocabulary::load(fixtures().join("vocab/coco80.json")).unwrap(),
        Vocabulary::load(fixtures().join("vocab/ilsvrc200.json")).unwrap(),
    )
}

#[test]
fn vocabulary_files() {
    let (coco, ilsvrc) = vocabularies();
    assert_eq!((coco.id(), coco.len()), ("coco80", 80));
    assert_eq!((ilsvrc.id(), ilsvrc.len()), ("ilsvrc200", 200));
    assert_eq!(coco.classes()[0].normalized(), "person");
    assert!(ilsvrc.contains("stove").is_some() && ilsvrc.contains("oven").is_none());
}

#[test]
fn committed_embeddings_match_the_generator() {
    let (coco, ilsvrc) = vocabularies();
    let committed = std::fs::read_to_string(fixtures().join("embeddings.txt")).unwrap();
    assert_eq!(committed, fixture_embeddings(&[&coco, &ilsvrc], FIXTURE_SEED).to_text());
}

#[test]
fn every_class_is_embedded() {
    let (coco, ilsvrc) = vocabularies();
    let table = EmbeddingTable::load(fixtures().join("embeddings.txt")).unwrap();
    for class in coco.classes().iter().chain(ilsvrc.classes()) {
        assert!(embed_phrase(class.normalized(), &table).is_some(), "{}", class.normalized());
    }
}

#[test]
fn confusions_fall_back_to_their_target() {
    let (coco, ilsvrc) = vocabularies();
    let table = EmbeddingTable::load(fixtures().join("embeddings.txt")).unwrap();
    for (spoken, target) in CONFUSIONS {
        for vocab in [&coco, &ilsvrc] {
            if vocab.contains(target).is_none() || vocab.contains(spoken).is_some() {
                continue;
            }
            let r = SegmentRef {
                session: "a/b".into(),
                object_index: 0,
            };
            let res = LabelMatcher::new(vocab, &table)
                .resolve(&TranscriptionResult::from_texts(r, &[spoken]))
                .unwrap();
            assert_eq!(res.method, ResolutionMethod::Embedding);
            assert_eq!(res.class.normalized(), *target, "{spoken} over {}", vocab.id());
        }
    }
}
