//! File format round trips and diagnostics.

use std::collections::HashSet;
use std::fs;

use ctxrank::evaluator::Lexicon;
use ctxrank::io::{self, ContextMap, TraceRow};
use ctxrank::layers::EmbeddingTable;
use ctxrank::relnet::{ContextBundle, Label};
use ctxrank::reranker::{Candidate, HypothesisSet, RankedCandidate};
use ctxrank::trainer::TrainingPair;
use ctxrank::Error;
use proptest::prelude::*;
use tempfile::TempDir;

fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,8}"
}

fn label() -> impl Strategy<Value = Label> {
    (word(), 0.0f64..=1.0).prop_map(|(w, c)| Label::new(&w, c).unwrap())
}

fn bundle() -> impl Strategy<Value = ContextBundle> {
    (
        prop::collection::vec(label(), 0..4),
        prop::collection::vec(label(), 0..3),
        prop::collection::vec(word(), 0..6),
    )
        .prop_map(|(o, p, c)| ContextBundle::new(o, p, &c.join(" ")))
}

fn hypothesis_set() -> impl Strategy<Value = HypothesisSet> {
    (word(), word(), prop::collection::vec((word(), 0.0f64..=1.0), 1..=10)).prop_map(|(id, gold, cs)| {
        let cands = cs.iter().map(|(w, s)| Candidate::new(w, *s).unwrap()).collect();
        HypothesisSet::new(&id, &gold, cands, ContextBundle::default()).unwrap()
    })
}

fn dir() -> TempDir {
    tempfile::tempdir().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hypotheses_round_trip(sets in prop::collection::vec(hypothesis_set(), 1..8)) {
        let mut seen = HashSet::new();
        let sets: Vec<_> = sets.into_iter().filter(|h| seen.insert(h.image_id.clone())).collect();
        let d = dir();
        let p = d.path().join("h.tsv");
        io::write_hypotheses(&p, &sets).unwrap();
        prop_assert_eq!(io::load_hypotheses(&p).unwrap(), sets);
    }

    #[test]
    fn contexts_round_trip(entries in prop::collection::btree_map(word(), bundle(), 1..8)) {
        let map: ContextMap = entries;
        let d = dir();
        let p = d.path().join("c.tsv");
        io::write_context(&p, &map).unwrap();
        prop_assert_eq!(io::load_context(&p).unwrap(), map);
    }

    #[test]
    fn pairs_round_trip(items in prop::collection::vec((word(), bundle(), word(), 0.0f64..=1.0), 1..8)) {
        let d = dir();
        let mut map = ContextMap::new();
        let pairs: Vec<(String, TrainingPair)> = items
            .into_iter()
            .map(|(id, ctx, cand, t)| {
                let ctx = map.entry(id.clone()).or_insert(ctx).clone();
                (id, TrainingPair::new(&cand, ctx, t).unwrap())
            })
            .collect();
        let refs: Vec<(&str, &TrainingPair)> = pairs.iter().map(|(i, p)| (i.as_str(), p)).collect();
        let (cp, pp) = (d.path().join("c.tsv"), d.path().join("p.tsv"));
        io::write_context(&cp, &map).unwrap();
        io::write_pairs(&pp, &refs).unwrap();
        let back = io::load_pairs(&pp, &io::load_context(&cp).unwrap()).unwrap();
        let want: Vec<TrainingPair> = pairs.into_iter().map(|(_, p)| p).collect();
        prop_assert_eq!(back, want);
    }

    #[test]
    fn embeddings_round_trip(rows in prop::collection::btree_map(word(), prop::collection::vec(-1e3f64..1e3, 3), 1..10)) {
        let table = EmbeddingTable::from_rows(rows.into_iter().collect()).unwrap();
        let d = dir();
        let p = d.path().join("e.txt");
        io::write_embeddings(&p, &table).unwrap();
        prop_assert_eq!(io::load_embeddings(&p, None).unwrap(), table);
    }

    #[test]
    fn lexicon_and_traces_round_trip(words in prop::collection::btree_set(word(), 1..20), score in 0.0f64..=1.0) {
        let d = dir();
        let lex = Lexicon::new(&words);
        let lp = d.path().join("l.txt");
        io::write_lexicon(&lp, &lex).unwrap();
        let back = io::load_lexicon(&lp).unwrap();
        prop_assert_eq!(back.words(), lex.words());
        let rows: Vec<TraceRow> = words
            .iter()
            .enumerate()
            .map(|(i, w)| TraceRow {
                image_id: format!("img{}", i / 3),
                rank: i % 3 + 1,
                candidate: RankedCandidate {
                    word: w.clone(),
                    baseline: score,
                    relatedness: score / 2.0,
                    context: 1.0,
                    unigram: 1e-5,
                    fused: score * score / 2.0e5,
                },
            })
            .collect();
        let tp = d.path().join("t.tsv");
        io::write_traces(&tp, &rows).unwrap();
        prop_assert_eq!(io::load_traces(&tp).unwrap(), rows);
    }
}

#[test]
fn empty_files_report_no_records() {
    let d = dir();
    let p = d.path().join("empty.tsv");
    fs::write(&p, "").unwrap();
    for err in [
        io::load_hypotheses(&p).unwrap_err(),
        io::load_context(&p).map(|_| ()).unwrap_err(),
        io::load_embeddings(&p, None).map(|_| ()).unwrap_err(),
    ] {
        assert!(matches!(err, Error::NoRecords(_)), "{err}");
        assert!(err.to_string().contains("no records"));
    }
    fs::write(&p, "#hypotheses v1\n# only a comment\n").unwrap();
    assert!(matches!(io::load_hypotheses(&p), Err(Error::NoRecords(_))));
}

#[test]
fn embedding_width_error_cites_the_line() {
    let d = dir();
    let p = d.path().join("e.txt");
    let mut text = String::new();
    for i in 0..6 {
        text.push_str(&format!("w{i} 0.1 0.2 0.3\n"));
    }
    text.push_str("bad 0.1 0.2\n");
    fs::write(&p, text).unwrap();
    match io::load_embeddings(&p, None) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_lines_cite_their_line() {
    let d = dir();
    let p = d.path().join("h.tsv");
    fs::write(&p, "#hypotheses v1\na\tgold\tw\t0.5\nb\tgold\tw\tnope\n").unwrap();
    let err = io::load_hypotheses(&p).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    fs::write(&p, "#context v1\na\tobj:0.5\n").unwrap();
    assert!(matches!(io::load_hypotheses(&p), Err(Error::Parse { line: 1, .. })));
    fs::write(&p, "#context v1\na\tobj\tplace:0.3\tcap\n").unwrap();
    assert!(matches!(io::load_context(&p), Err(Error::Parse { line: 2, .. })));
}

#[test]
fn duplicate_context_ids_keep_the_last_record() {
    let d = dir();
    let p = d.path().join("c.tsv");
    fs::write(&p, "#context v1\nimg\tbus:0.9\tstreet:0.5\tfirst\nimg\tjet:0.8\trunway:0.7\tsecond\n").unwrap();
    let map = io::load_context(&p).unwrap();
    assert_eq!(map.len(), 1);
    assert_eq!(map["img"].caption, ["second"]);
}

#[test]
fn unresolved_images_get_an_empty_context() {
    let mut sets = vec![
        HypothesisSet::new("known", "a", vec![Candidate::new("a", 0.5).unwrap()], ContextBundle::default()).unwrap(),
        HypothesisSet::new("lost", "b", vec![Candidate::new("b", 0.5).unwrap()], ContextBundle::default()).unwrap(),
    ];
    let mut map = ContextMap::new();
    map.insert("known".into(), ContextBundle::new(vec![Label::new("bus", 0.9).unwrap()], vec![], "x"));
    assert_eq!(io::attach_contexts(&mut sets, &map), ["lost"]);
    assert!(!sets[0].ctx.is_empty());
    assert!(sets[1].ctx.is_empty());
}

#[test]
fn embedding_restriction_keeps_only_requested_words() {
    let d = dir();
    let p = d.path().join("e.txt");
    fs::write(&p, "3 2\nalpha 1 0\nbeta 0 1\ngamma 1 1\n").unwrap();
    let keep: HashSet<String> = ["beta".to_string()].into();
    let t = io::load_embeddings(&p, Some(&keep)).unwrap();
    assert!(t.contains("beta") && !t.contains("alpha") && !t.contains("gamma"));
    assert_eq!(t.dim(), 2);
}
