//! Compound scores against frozen output of the NLTK VADER implementation
//! (see `scripts/vader_reference.py`).

use demaudit_core::sentiment::{vader_compound, SentimentLexicon};

#[derive(serde::Deserialize)]
struct Case {
    text: String,
    compound: f64,
}

#[test]
fn matches_reference_fixture() {
    let lex = SentimentLexicon::builtin();
    let cases: Vec<Case> = include_str!("fixtures/vader_reference.jsonl")
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(cases.len(), 100);
    let mut bad = Vec::new();
    for c in &cases {
        let got = vader_compound(&c.text, &lex);
        if (got - c.compound).abs() > 1e-9 {
            bad.push(format!("{:?}: got {got}, want {}", c.text, c.compound));
        }
    }
    assert!(bad.is_empty(), "{}", bad.join("\n"));
}
