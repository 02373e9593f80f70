use proptest::prelude::*;
use speaklabel_core::asr::SegmentRef;
use speaklabel_core::metrics::{
    average_ranks, intersection_length, interval_union, location_accuracy, spearman_rank_correlation,
    total_length, transcription_recall_at_k,
};
use speaklabel_core::trainer::{grade_image, Feedback, TrainingImageRecord, TypedEntry};
use speaklabel_core::{segment_recording, EmbeddingTable, LabelMatcher, MaskTest, TranscriptionResult, Vocabulary};
use std::collections::BTreeSet;

fn seg_ref() -> SegmentRef {
    SegmentRef {
        session: "s/i".into(),
        object_index: 0,
    }
}

fn click_stream() -> impl Strategy<Value = (Vec<f64>, f64, f64)> {
    (1.0f64..60.0, prop::collection::vec(0.0f64..1.0, 0..20), prop::sample::select(vec![0.0, 0.25, 0.5, 1.0]))
        .prop_map(|(d, fracs, delta)| {
            let mut t: Vec<f64> = fracs.iter().map(|f| f * d).collect();
            t.sort_by(f64::total_cmp);
            (t, d, delta)
        })
}

proptest! {
    #[test]
    fn segments_chain_and_contain_their_clicks((times, duration, delta) in click_stream()) {
        let segs = segment_recording(&times, duration, delta).unwrap();
        prop_assert_eq!(segs.len(), times.len());
        for (i, s) in segs.iter().enumerate() {
            prop_assert!(s.start_s >= 0.0);
            prop_assert!(s.start_s <= times[i] && times[i] <= s.end_s);
            prop_assert_eq!(s.start_s, (times[i] - delta).max(0.0));
            let end = times.get(i + 1).copied().unwrap_or(duration);
            prop_assert_eq!(s.end_s, end);
        }
        if let Some(last) = segs.last() {
            prop_assert_eq!(last.end_s, duration);
        }
    }

    #[test]
    fn resolution_prefers_best_ranked_exact_name(
        names in prop::collection::btree_set("[a-z]{2,6}", 5..60),
        picks in prop::collection::vec((any::<bool>(), any::<prop::sample::Index>(), "[a-z]{2,6}"), 1..6),
    ) {
        let names: Vec<String> = names.into_iter().collect();
        let vocab = Vocabulary::new("p", &names).unwrap();
        let alts: Vec<String> = picks
            .iter()
            .map(|(use_class, idx, other)| if *use_class { idx.get(&names).to_uppercase() } else { other.clone() })
            .collect();
        let table = EmbeddingTable::new(3);
        let got = LabelMatcher::new(&vocab, &table).resolve(&TranscriptionResult::from_texts(seg_ref(), &alts));
        let want = alts.iter().position(|a| names.contains(&a.to_lowercase()));
        match (want, got) {
            (Some(k), Some(r)) => {
                prop_assert_eq!(r.class.normalized(), alts[k].to_lowercase());
                prop_assert_eq!(r.matched_alternative_rank as usize, k + 1);
            }
            (None, None) => {}
            (w, g) => prop_assert!(false, "expected {:?}, got {:?}", w, g),
        }
    }

    #[test]
    fn fallback_always_lands_in_the_vocabulary(
        vectors in prop::collection::vec(prop::collection::vec(-3i8..=3, 3), 6),
        classes in prop::collection::btree_set(0usize..6, 1..6),
        alts in prop::collection::vec(prop::collection::vec(0usize..7, 1..3), 1..4),
    ) {
        let tokens = ["aa", "bb", "cc", "dd", "ee", "ff"];
        let mut table = EmbeddingTable::new(3);
        for (t, v) in tokens.iter().zip(&vectors) {
            table.insert(t, v.iter().map(|&x| f64::from(x)).collect());
        }
        let names: Vec<&str> = classes.iter().map(|&i| tokens[i]).collect();
        let vocab = Vocabulary::new("p", &names).unwrap();
        let texts: Vec<String> = alts
            .iter()
            .map(|ids| ids.iter().map(|&i| tokens.get(i).copied().unwrap_or("zz")).collect::<Vec<_>>().join(" "))
            .collect();
        if let Some(r) = LabelMatcher::new(&vocab, &table).resolve(&TranscriptionResult::from_texts(seg_ref(), &texts)) {
            prop_assert!(vocab.contains(r.class.normalized()).is_some());
            prop_assert!((1..=texts.len() as u32).contains(&r.matched_alternative_rank));
            if let Some(s) = r.similarity {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
            }
        }
    }

    #[test]
    fn union_is_sorted_disjoint_and_covers_inputs(raw in prop::collection::vec((0u32..100, 0u32..20), 0..15)) {
        let intervals: Vec<(f64, f64)> = raw.iter().map(|&(a, l)| (f64::from(a), f64::from(a + l))).collect();
        let u = interval_union(intervals.clone());
        for w in u.windows(2) {
            prop_assert!(w[0].1 < w[1].0);
        }
        // half-integer probes decide coverage for integer endpoints
        for k in 0..240 {
            let p = f64::from(k) / 2.0 + 0.25;
            let covered = intervals.iter().any(|&(a, b)| b > a && a <= p && p <= b);
            prop_assert_eq!(covered, u.iter().any(|&(a, b)| a <= p && p <= b));
        }
        prop_assert!(total_length(&u) <= intervals.iter().map(|(a, b)| b - a).sum::<f64>() + 1e-9);
    }

    #[test]
    fn intersection_is_symmetric_and_bounded(
        a in prop::collection::vec((0u32..100, 1u32..20), 0..10),
        b in prop::collection::vec((0u32..100, 1u32..20), 0..10),
    ) {
        let to = |v: &[(u32, u32)]| interval_union(v.iter().map(|&(s, l)| (f64::from(s), f64::from(s + l))).collect());
        let (ua, ub) = (to(&a), to(&b));
        let ab = intersection_length(&ua, &ub);
        prop_assert!((ab - intersection_length(&ub, &ua)).abs() < 1e-9);
        prop_assert!(ab <= total_length(&ua).min(total_length(&ub)) + 1e-9);
        prop_assert!((intersection_length(&ua, &ua) - total_length(&ua)).abs() < 1e-9);
    }

    #[test]
    fn ranks_and_rho_are_well_formed(xs in prop::collection::vec(0u8..8, 2..40), seed in any::<u64>()) {
        let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
        let n = xs.len() as f64;
        let ranks = average_ranks(&xs);
        prop_assert!((ranks.iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| (x * 3.0 + ((seed >> (i % 64)) & 1) as f64) % 7.0).collect();
        match (spearman_rank_correlation(&xs, &ys), spearman_rank_correlation(&ys, &xs)) {
            (Some(a), Some(b)) => {
                prop_assert!((a - b).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&a));
            }
            (None, None) => {}
            other => prop_assert!(false, "asymmetric {:?}", other),
        }
        if let Some(r) = spearman_rank_correlation(&xs, &xs) {
            prop_assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grading_partitions_typed_and_truth(
        typed in prop::collection::vec(0usize..12, 0..10),
        truth in prop::collection::btree_set(0usize..10, 0..8),
    ) {
        let names = ["dog", "cat", "car", "bus", "cup", "tie", "kite", "boat", "bed", "sink"];
        let vocab = Vocabulary::new("p", &names).unwrap();
        let typed: Vec<&str> = typed.iter().map(|&i| names.get(i).copied().unwrap_or("lamp")).collect();
        let gt: BTreeSet<String> = truth.iter().map(|&i| names[i].to_string()).collect();
        let f = grade_image(&typed, &gt, &vocab);
        let canon: BTreeSet<String> = typed.iter().map(|t| t.to_string()).collect();
        let union: BTreeSet<String> = f.correct.union(&f.missed).cloned().collect();
        prop_assert_eq!(&union, &gt);
        let union: BTreeSet<String> = f.correct.union(&f.wrong).cloned().collect();
        prop_assert_eq!(&union, &canon);
        prop_assert!(f.correct.is_disjoint(&f.wrong) && f.correct.is_disjoint(&f.missed));
        prop_assert_eq!(f.typed_count, canon.len());
    }

    #[test]
    fn recall_at_one_never_exceeds_recall_at_three(
        rows in prop::collection::vec((0usize..5, prop::collection::vec(0usize..6, 0..4)), 1..30),
    ) {
        let words = ["dog", "cat", "car", "bus", "cup", "tie"];
        let records: Vec<TrainingImageRecord> = rows
            .iter()
            .map(|(typed, alts)| TrainingImageRecord {
                image_id: "i".into(),
                typed_entries: vec![TypedEntry { text: words[*typed].into(), x: 0.0, y: 0.0, t: 0.0 }],
                spoken_results: vec![TranscriptionResult::from_texts(
                    seg_ref(),
                    &alts.iter().map(|&a| words[a]).collect::<Vec<_>>(),
                )],
                feedback: Feedback::default(),
            })
            .collect();
        let (r1, r3) = (transcription_recall_at_k(&records, 1), transcription_recall_at_k(&records, 3));
        prop_assert!(r1.hits <= r3.hits);
        prop_assert_eq!(r1.counted + r1.excluded, records.len());
        prop_assert_eq!(r1.excluded, rows.iter().filter(|(_, a)| a.is_empty()).count());
    }

    #[test]
    fn location_counts_add_up(outcomes in prop::collection::vec(0u8..3, 0..50)) {
        let tests: Vec<MaskTest> = outcomes
            .iter()
            .map(|o| [MaskTest::Hit, MaskTest::Miss, MaskTest::ClassAbsent][*o as usize])
            .collect();
        let acc = location_accuracy(tests.iter().copied());
        prop_assert_eq!(acc.hits + acc.misses + acc.ignored, tests.len());
        match acc.value {
            Some(v) => prop_assert!((v - acc.hits as f64 / (acc.hits + acc.misses) as f64).abs() < 1e-15),
            None => prop_assert_eq!(acc.hits + acc.misses, 0),
        }
    }
}
