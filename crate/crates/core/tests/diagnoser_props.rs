mod common;

use common::Fixture;
use nl2sql_eval::diagnoser::{classify_error, parse_sql, render, Category, Subtype};
use nl2sql_eval::executor::{compare_results, execute_sql, is_order_sensitive};
use proptest::prelude::*;

const SELECTS: [&str; 8] = [
    "T1.Id",
    "T1.DisplayName, T1.Reputation",
    "COUNT(*)",
    "MAX(T1.Reputation), MIN(T1.Id)",
    "DISTINCT T1.DisplayName",
    "T1.Reputation * 2 + 1 AS r",
    "CAST(T1.Reputation AS REAL) / 3",
    "CASE WHEN T1.Reputation > 50 THEN 'hi' ELSE 'lo' END, SUBSTR(T1.DisplayName, 1, 3)",
];
const FROMS: [&str; 3] = [
    "users AS T1",
    "users AS T1 INNER JOIN posts AS T2 ON T1.Id = T2.OwnerUserId",
    "users T1 LEFT JOIN comments AS T3 ON T3.UserId = T1.Id",
];
const WHERES: [&str; 6] = [
    "",
    "WHERE T1.Reputation > 40",
    "WHERE T1.DisplayName LIKE 'A%'",
    "WHERE T1.Id IN (SELECT OwnerUserId FROM posts WHERE Score >= 8)",
    "WHERE T1.Reputation BETWEEN 5 AND 100 AND NOT T1.Id = 2",
    "WHERE T1.DisplayName IS NOT NULL OR -T1.Reputation < -1",
];
const TAILS: [&str; 4] = [
    "",
    "ORDER BY T1.Reputation DESC LIMIT 2",
    "GROUP BY T1.DisplayName HAVING COUNT(*) >= 1",
    "ORDER BY 1 LIMIT 5 OFFSET 1",
];

const EXTRA: [&str; 12] = [
    "SELECT Id FROM users UNION SELECT Id FROM posts ORDER BY Id",
    "SELECT Id FROM users EXCEPT SELECT OwnerUserId FROM posts",
    "SELECT Id FROM users INTERSECT SELECT UserId FROM comments",
    "WITH top AS (SELECT Id, Reputation FROM users WHERE Reputation > 10) SELECT COUNT(*) FROM top",
    "SELECT `DisplayName` FROM \"users\" WHERE [Id] = 1",
    "SELECT COUNT(DISTINCT UserId) FROM comments WHERE Text NOT LIKE '%e%'",
    "SELECT PostId, SUM(Score) FROM comments GROUP BY PostId ORDER BY SUM(Score) DESC",
    "SELECT * FROM users WHERE Id NOT IN (1, 2)",
    "SELECT u.DisplayName FROM users u WHERE EXISTS (SELECT 1 FROM posts p WHERE p.OwnerUserId = u.Id)",
    "SELECT IIF(Score > 10, 'big', 'small') FROM posts",
    "SELECT 'it''s', 1.5e2, NULL, -3",
    "SELECT Title FROM posts WHERE Score > (SELECT AVG(Score) FROM posts)",
];

fn corpus() -> Vec<String> {
    let mut all = Vec::new();
    for s in SELECTS {
        for f in FROMS {
            for w in WHERES {
                for t in TAILS {
                    let q = format!("SELECT {s} FROM {f} {w} {t}");
                    all.push(q.split_whitespace().collect::<Vec<_>>().join(" "));
                }
            }
        }
    }
    // every third combination keeps the corpus varied but small
    let mut out: Vec<String> = all.into_iter().step_by(3).collect();
    out.extend(EXTRA.iter().map(|s| s.to_string()));
    out
}

#[test]
fn render_round_trips_a_query_corpus() {
    let f = Fixture::new();
    let db = f.db("codebase_community");
    let queries = corpus();
    assert!(queries.len() >= 200, "{}", queries.len());
    for q in &queries {
        let ast = parse_sql(q).unwrap_or_else(|e| panic!("{q}: {e}"));
        let once = render(&ast);
        let twice = render(&parse_sql(&once).unwrap_or_else(|e| panic!("rendered {once}: {e}")));
        assert_eq!(once, twice, "render is not a fixed point for {q}");
        // rendering must not change what the query means
        let a = execute_sql(&db, Some(q), 5.0);
        let b = execute_sql(&db, Some(&once), 5.0);
        assert!(a.is_ok(), "{q}: {:?}", a.error_message);
        assert!(compare_results(&a, &b, is_order_sensitive(q)), "{q}\n{once}");
    }
}

#[test]
fn labels_pair_with_their_category() {
    let f = Fixture::new();
    let schema = f.schema("codebase_community");
    let queries = corpus();
    let mut seen = std::collections::BTreeSet::new();
    for (i, gold) in queries.iter().enumerate().step_by(7) {
        for pred in queries.iter().skip(i % 5).step_by(23) {
            if pred == gold {
                continue;
            }
            let a = classify_error(Some(pred), gold, &schema, None, None);
            let b = classify_error(Some(pred), gold, &schema, None, None);
            assert_eq!(a, b, "nondeterministic label for {pred} vs {gold}");
            assert_eq!(a.category, a.subtype.category());
            seen.insert(a.category.as_str());
        }
    }
    assert!(seen.len() >= 3, "{seen:?}");
    for s in Subtype::ALL {
        assert!(Category::ALL.contains(&s.category()));
    }
}

const PAIRS: [(&str, &str); 6] = [
    (
        "SELECT {a}.DisplayName FROM users AS {a} WHERE {a}.Reputation > 50",
        "SELECT T1.DisplayName FROM users AS T1 WHERE T1.Reputation > 100",
    ),
    (
        "SELECT COUNT({b}.Id) FROM users AS {a} INNER JOIN comments AS {b} ON {a}.Id = {b}.UserId WHERE {a}.DisplayName = 'Ann Lee'",
        "SELECT COUNT(T2.Id) FROM users AS T1 INNER JOIN posts AS T2 ON T1.Id = T2.OwnerUserId WHERE T1.DisplayName = 'Ann Lee'",
    ),
    (
        "SELECT {a}.Title FROM posts AS {a}",
        "SELECT T1.Title FROM posts AS T1 WHERE T1.Score > 5",
    ),
    (
        "SELECT SUM({a}.Score) FROM comments AS {a}",
        "SELECT AVG(T1.Score) FROM comments AS T1",
    ),
    (
        "SELECT {a}.Text FROM comments AS {a} WHERE {a}.Score < 30",
        "SELECT T1.Text FROM comments AS T1 WHERE T1.Score > 30",
    ),
    (
        "SELECT {b}.Title FROM users AS {a} JOIN posts AS {b} ON {b}.OwnerUserId = {a}.Id WHERE {a}.DisplayName = 'Bo'",
        "SELECT T2.Title FROM users AS T1 JOIN posts AS T2 ON T2.OwnerUserId = T1.Id WHERE T1.DisplayName = 'Neil McGuigan'",
    ),
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn labels_ignore_alias_names(a in "[a-z]{1,6}", b in "[a-z]{1,6}", which in 0..PAIRS.len()) {
        let (a, b) = (format!("q_{a}"), format!("r_{b}"));
        let f = Fixture::new();
        let schema = f.schema("codebase_community");
        let (pred, gold) = PAIRS[which];
        let base = pred.replace("{a}", "T1").replace("{b}", "T2");
        let renamed = pred.replace("{a}", &a).replace("{b}", &b);
        let want = classify_error(Some(&base), gold, &schema, None, None);
        let got = classify_error(Some(&renamed), gold, &schema, None, None);
        prop_assert_eq!(want.category, got.category);
        prop_assert_eq!(want.subtype, got.subtype);
        // renaming the gold side as well changes nothing either
        let gold_renamed = gold.replace("T1", &b).replace("T2", &a);
        let again = classify_error(Some(&renamed), &gold_renamed, &schema, None, None);
        prop_assert_eq!(want.subtype, again.subtype);
    }

    #[test]
    fn parse_never_panics(s in "[ -~]{0,60}") {
        if let Ok(ast) = parse_sql(&s) {
            let once = render(&ast);
            prop_assert_eq!(render(&parse_sql(&once).unwrap()), once);
        }
    }
}
