use fdconfig_core::model::{parse_model, serialize_model, validate};
use fdconfig_core::testkit::{random_expr_model, random_model, SmallBounds, M1};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn serialize_then_parse_is_identity(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        for m in [random_model(&mut rng, &SmallBounds::default()), random_expr_model(&mut rng)] {
            prop_assert_eq!(validate(&m), vec![]);
            let text = serialize_model(&m);
            let back = parse_model(&text);
            prop_assert!(back.is_ok(), "{}\n{:?}", text, back);
            prop_assert_eq!(back.unwrap(), m);
        }
    }

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,200}") {
        let _ = parse_model(&text);
    }

    #[test]
    fn mutated_fixture_never_panics(pos in 0usize..M1.len(), del in 0usize..8, ins in "[ -~\\n]{0,6}") {
        let mut text = M1.as_bytes().to_vec();
        let end = (pos + del).min(text.len());
        text.splice(pos..end, ins.bytes());
        let text = String::from_utf8_lossy(&text);
        if let Ok(m) = parse_model(&text) {
            prop_assert_eq!(validate(&m), vec![]);
            prop_assert_eq!(parse_model(&serialize_model(&m)).unwrap(), m);
        }
    }

    #[test]
    fn token_soup_never_panics(tokens in prop::collection::vec(prop::sample::select(vec![
        "feature", "mandatory", "optional", "or", "xor", "attribute", "constraint", "int", "{", "}", "[", "]",
        "(", ")", ",", ".", "..", ":", "A", "B", "R", "1", "-", "+", "*", "&&", "||", "!", "=>", "<=>", "=",
        "!=", "<", "<=", ">", ">=", "true", "false", "99999999999999999999", "\n",
    ]), 0..60)) {
        let _ = parse_model(&tokens.join(" "));
    }
}

#[test]
fn m1_counts() {
    let m = parse_model(M1).unwrap();
    assert_eq!((m.features.len(), m.attributes.len(), m.constraints.len()), (5, 1, 1));
}
