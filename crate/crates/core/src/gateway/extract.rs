//! Pulls the final SQL query out of free-form model output.

struct Fence<'a> {
    lang: &'a str,
    body: &'a str,
}

/// Splits text into fenced blocks. An unterminated final fence runs to the end.
fn fences(text: &str) -> Vec<Fence<'_>> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let lang_len = after
            .find(|c: char| !c.is_ascii_alphanumeric())
            .unwrap_or(after.len());
        let lang = &after[..lang_len];
        let inner = &after[lang_len..];
        match inner.find("```") {
            Some(close) => {
                out.push(Fence {
                    lang,
                    body: &inner[..close],
                });
                rest = &inner[close + 3..];
            }
            None => {
                out.push(Fence { lang, body: inner });
                break;
            }
        }
    }
    out
}

fn is_sql_lang(lang: &str) -> bool {
    lang.eq_ignore_ascii_case("sql") || lang.eq_ignore_ascii_case("sqlite")
}

fn starts_like_query(s: &str) -> bool {
    let head: String = s
        .trim_start()
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .collect();
    head.eq_ignore_ascii_case("select") || head.eq_ignore_ascii_case("with")
}

fn find_ci(haystack: &str, needle: &str) -> Vec<usize> {
    let lower = haystack.to_ascii_lowercase();
    lower.match_indices(needle).map(|(i, _)| i).collect()
}

fn clean(sql: &str) -> Option<String> {
    let mut s = sql.trim();
    if let Some(i) = find_ci(s, "</answer>").first() {
        s = s[..*i].trim();
    }
    loop {
        let t = s.trim_end().trim_end_matches(';').trim_end();
        if t.len() == s.len() {
            break;
        }
        s = t;
    }
    let s = s.trim();
    (!s.is_empty()).then(|| s.to_string())
}

fn last_sql_fence(text: &str) -> Option<String> {
    fences(text)
        .iter()
        .rev()
        .filter(|f| is_sql_lang(f.lang))
        .find_map(|f| clean(f.body))
}

/// Start offsets of SELECT/WITH keywords that plausibly begin a query: written
/// in upper case, or at the start of a line in any case.
fn keyword_starts(text: &str) -> Vec<usize> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    for kw in ["select", "with"] {
        for i in find_ci(text, kw) {
            let end = i + kw.len();
            let before_ok = i == 0 || !(bytes[i - 1].is_ascii_alphanumeric() || bytes[i - 1] == b'_');
            let after_ok = end == bytes.len() || !(bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_');
            if !before_ok || !after_ok {
                continue;
            }
            let upper = &text[i..end] == kw.to_ascii_uppercase();
            let line_start = text[..i].rfind('\n').map_or(&text[..i], |nl| &text[nl + 1..i]).trim().is_empty();
            if upper || line_start {
                out.push(i);
            }
        }
    }
    out.sort_unstable();
    out
}

pub fn extract_sql(raw_text: &str) -> Option<String> {
    let answers = find_ci(raw_text, "<answer>");
    if let Some(&start) = answers.last() {
        let section = &raw_text[start + "<answer>".len()..];
        let section = match find_ci(section, "</answer>").first() {
            Some(&end) => &section[..end],
            None => section,
        };
        if let Some(sql) = last_sql_fence(section) {
            return Some(sql);
        }
    }
    if let Some(sql) = last_sql_fence(raw_text) {
        return Some(sql);
    }
    if let Some(sql) = fences(raw_text)
        .iter()
        .rev()
        .filter(|f| starts_like_query(f.body))
        .find_map(|f| clean(f.body))
    {
        return Some(sql);
    }
    // no usable fence: take the longest suffix starting at a query keyword
    let start = *keyword_starts(raw_text).first()?;
    let tail = &raw_text[start..];
    let tail = match tail.find("```") {
        Some(i) => &tail[..i],
        None => tail,
    };
    let sql = clean(tail)?;
    // a lone keyword is not a query
    sql.contains(char::is_whitespace).then_some(sql)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answer_block() {
        assert_eq!(
            extract_sql("<answer> reasoning ```sql SELECT 1 ``` </answer>").as_deref(),
            Some("SELECT 1")
        );
    }

    #[test]
    fn no_sql() {
        assert_eq!(extract_sql("no code here"), None);
        assert_eq!(extract_sql(""), None);
        assert_eq!(extract_sql("I will select the best option"), None);
    }

    #[test]
    fn last_of_two_blocks() {
        let t = "```sql\nSELECT 1;\n```\nthen\n```sql\nSELECT 2;\n```";
        assert_eq!(extract_sql(t).as_deref(), Some("SELECT 2"));
    }

    #[test]
    fn answer_section_wins_over_later_blocks() {
        let t = "<answer>```sql\nSELECT a FROM t\n```</answer>\n```sql\nSELECT junk\n```";
        assert_eq!(extract_sql(t).as_deref(), Some("SELECT a FROM t"));
    }

    #[test]
    fn unfenced_fallback() {
        let t = "The query is:\nSELECT name FROM users WHERE id = 3;\nDone.";
        assert_eq!(extract_sql(t).as_deref(), Some("SELECT name FROM users WHERE id = 3;\nDone."));
        let t = "we select rows.\nselect a from t;";
        assert_eq!(extract_sql(t).as_deref(), Some("select a from t"));
    }

    #[test]
    fn generic_fence_and_unterminated() {
        assert_eq!(extract_sql("```\nWITH x AS (SELECT 1) SELECT * FROM x\n```").as_deref(), Some("WITH x AS (SELECT 1) SELECT * FROM x"));
        assert_eq!(extract_sql("```sql\nSELECT 5 FROM t").as_deref(), Some("SELECT 5 FROM t"));
    }

    #[test]
    fn idempotent_when_rewrapped() {
        for t in ["<answer>```sql SELECT 1 ;; ```</answer>", "SELECT a\nFROM b;", "```SQL\n select 2\n```"] {
            let once = extract_sql(t).unwrap();
            assert_eq!(extract_sql(&format!("```sql\n{once}\n```")).unwrap(), once);
        }
    }
}
