mod common;

use common::{item, Fixture};
use nl2sql_eval::context::{
    build_context, build_prompt, match_score, question_ngrams, render_ddl, retrieve_values, DdlOptions,
    MATCH_THRESHOLD,
};
use nl2sql_eval::corpus::Difficulty;
use proptest::prelude::*;

const EUROPEAN: &str = "In which country was the first European Grand Prix hosted? Name the circuit and location.";

/// Brute-force longest common substring of `a` and any of `grams`.
fn oracle_score(grams: &[String], literal: &str) -> f64 {
    let lit: Vec<char> = literal.to_lowercase().chars().collect();
    let mut best = 0;
    for g in grams {
        let g: Vec<char> = g.chars().collect();
        for i in 0..lit.len() {
            for j in 0..g.len() {
                let mut l = 0;
                while i + l < lit.len() && j + l < g.len() && lit[i + l] == g[j + l] {
                    l += 1;
                }
                best = best.max(l);
            }
        }
    }
    best as f64 / lit.len() as f64
}

#[test]
fn grand_prix_scores_by_hand() {
    let grams = question_ngrams(EUROPEAN);
    assert!(grams.contains(&"european grand prix".to_string()));
    assert!(grams.contains(&"first european grand prix".to_string()));
    // "an grand prix" survives from "european", " grand prix" otherwise
    let expected = [
        ("European Grand Prix", 1.0),
        ("Italian Grand Prix", 13.0 / 18.0),
        ("Monaco Grand Prix", 11.0 / 17.0),
        ("British Grand Prix", 11.0 / 18.0),
        ("Australian Grand Prix", 13.0 / 21.0),
    ];
    for (lit, want) in expected {
        let got = match_score(EUROPEAN, lit);
        assert!((got - want).abs() < 1e-12, "{lit}: {got} vs {want}");
        assert!((oracle_score(&grams, lit) - want).abs() < 1e-12, "oracle disagrees on {lit}");
        assert!(got >= MATCH_THRESHOLD);
    }
    assert!(match_score(EUROPEAN, "Brands Hatch") < MATCH_THRESHOLD);
}

#[test]
fn retrieval_ranks_by_score_then_length() {
    let f = Fixture::new();
    let ctx = retrieve_values(EUROPEAN, &f.db("formula_1"), &f.schema("formula_1"), 3);
    assert_eq!(
        ctx.matched_values[&("races".to_string(), "name".to_string())],
        ["European Grand Prix", "Italian Grand Prix", "Monaco Grand Prix"]
    );
    let ctx = retrieve_values(EUROPEAN, &f.db("formula_1"), &f.schema("formula_1"), 5);
    assert_eq!(
        ctx.matched_values[&("races".to_string(), "name".to_string())],
        [
            "European Grand Prix",
            "Italian Grand Prix",
            "Monaco Grand Prix",
            "Australian Grand Prix",
            "British Grand Prix"
        ]
    );
}

#[test]
fn retrieved_name_reaches_the_prompt() {
    let f = Fixture::new();
    let it = item(
        "1",
        "codebase_community",
        "How many comments did Neil McGuigan get on his posts?",
        "SELECT 1",
        Difficulty::Simple,
    );
    let db = f.db("codebase_community");
    let schema = f.schema("codebase_community");
    let with = build_context(&it, &db, &schema, true, &DdlOptions::default());
    let without = build_context(&it, &db, &schema, false, &DdlOptions::default());
    assert!(with.ddl_text.contains("Neil McGuigan"));
    assert!(!without.ddl_text.contains("Neil McGuigan"));
    let prompt = build_prompt(&it, &with);
    assert!(prompt.contains(with.ddl_text.trim_end()) && prompt.contains(&it.question));
}

#[test]
fn render_is_byte_stable() {
    let f = Fixture::new();
    for db_id in ["codebase_community", "california_schools", "formula_1"] {
        let a = f.schema(db_id);
        let b = f.schema(db_id);
        for opts in [DdlOptions::default(), DdlOptions::plain()] {
            assert_eq!(render_ddl(&a, &opts), render_ddl(&b, &opts));
            assert_eq!(render_ddl(&a, &opts), render_ddl(&a, &opts));
        }
    }
}

const VOCAB: [&str; 16] = [
    "grand", "prix", "european", "monaco", "italian", "neil", "mcguigan", "ann", "alameda", "high", "berkeley",
    "unified", "circuit", "uk", "the", "lewis",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn retrieval_never_invents_literals(words in prop::collection::vec(0..VOCAB.len(), 1..8)) {
        let f = Fixture::new();
        let question: Vec<&str> = words.iter().map(|&i| VOCAB[i]).collect();
        let question = question.join(" ");
        for db_id in ["codebase_community", "california_schools", "formula_1"] {
            let db = f.db(db_id);
            let ctx = retrieve_values(&question, &db, &f.schema(db_id), 3);
            let conn = db.connect().unwrap();
            for ((table, column), values) in &ctx.matched_values {
                prop_assert!(values.len() <= 3);
                for v in values {
                    let n: i64 = conn
                        .query_row(
                            &format!("SELECT COUNT(*) FROM \"{table}\" WHERE \"{column}\" = ?1"),
                            [v],
                            |r| r.get(0),
                        )
                        .unwrap();
                    prop_assert!(n > 0, "{v:?} not in {table}.{column}");
                    prop_assert!(match_score(&question, v) >= MATCH_THRESHOLD);
                }
            }
        }
    }

    #[test]
    fn prompt_grows_with_values_per_column(words in prop::collection::vec(0..VOCAB.len(), 1..8)) {
        let f = Fixture::new();
        let question: Vec<&str> = words.iter().map(|&i| VOCAB[i]).collect();
        let it = item("1", "california_schools", &question.join(" "), "SELECT 1", Difficulty::Simple);
        let db = f.db("california_schools");
        let schema = f.schema("california_schools");
        let mut last = 0;
        for v in 0..6 {
            let opts = DdlOptions { include_values: true, values_per_column: v, include_descriptions: true };
            let len = build_prompt(&it, &build_context(&it, &db, &schema, true, &opts)).len();
            prop_assert!(len >= last, "values_per_column {v}: {len} < {last}");
            last = len;
        }
    }

    #[test]
    fn score_matches_brute_force(words in prop::collection::vec(0..VOCAB.len(), 1..10), lit in "[a-z ]{1,16}") {
        let question: Vec<&str> = words.iter().map(|&i| VOCAB[i]).collect();
        let question = question.join(" ");
        let got = match_score(&question, &lit);
        if lit.trim().is_empty() {
            prop_assert_eq!(got, 0.0);
        } else if lit.chars().count() >= 4 {
            prop_assert!((got - oracle_score(&question_ngrams(&question), &lit)).abs() < 1e-12);
        } else {
            let exact = question_ngrams(&question).contains(&lit.to_lowercase());
            prop_assert_eq!(got, if exact { 1.0 } else { 0.0 });
        }
    }
}
