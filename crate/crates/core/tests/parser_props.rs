use evidentia_core::parser::{render_turn, StageExpectation, Tag};
use evidentia_core::{parse_turn, validate_format, validate_turn, FormatViolation};
use proptest::prelude::*;

use FormatViolation::{MissingAnswerAndTool as MAT, MissingThink as MT, TagOrder as TO};

/// (think, tool_call, answer, action_first, stage2) and the expected violations.
type Row = ((u8, u8, u8, u8, u8), &'static [FormatViolation]);

const TOOL: &str = r#"{"tool":"FactProbe","query":"q"}"#;

/// Builds a turn from presence bits; with `action_first` the action blocks
/// precede the think block.
fn assemble(think: bool, tool: bool, answer: bool, action_first: bool) -> String {
    let t = if think { "<think>t</think>".to_string() } else { String::new() };
    let mut actions = String::new();
    if tool {
        actions += &format!("<tool_call>{TOOL}</tool_call>");
    }
    if answer {
        actions += "<answer>fake</answer>";
    }
    if action_first {
        actions + &t
    } else {
        t + &actions
    }
}

#[test]
fn tag_combination_table() {
    let table: [Row; 32] = [
        ((0, 0, 0, 0, 0), &[MT, MAT]),
        ((0, 0, 0, 1, 0), &[MT, MAT]),
        ((0, 0, 1, 0, 0), &[MT]),
        ((0, 0, 1, 1, 0), &[MT]),
        ((0, 1, 0, 0, 0), &[MT]),
        ((0, 1, 0, 1, 0), &[MT]),
        ((0, 1, 1, 0, 0), &[MT, TO]),
        ((0, 1, 1, 1, 0), &[MT, TO]),
        ((1, 0, 0, 0, 0), &[MAT]),
        ((1, 0, 0, 1, 0), &[MAT]),
        ((1, 0, 1, 0, 0), &[]),
        ((1, 0, 1, 1, 0), &[TO]),
        ((1, 1, 0, 0, 0), &[]),
        ((1, 1, 0, 1, 0), &[TO]),
        ((1, 1, 1, 0, 0), &[TO]),
        ((1, 1, 1, 1, 0), &[TO]),
        ((0, 0, 0, 0, 1), &[MT, MAT]),
        ((0, 0, 0, 1, 1), &[MT, MAT]),
        ((0, 0, 1, 0, 1), &[MT]),
        ((0, 0, 1, 1, 1), &[MT]),
        ((0, 1, 0, 0, 1), &[MT, MAT, TO]),
        ((0, 1, 0, 1, 1), &[MT, MAT, TO]),
        ((0, 1, 1, 0, 1), &[MT, TO]),
        ((0, 1, 1, 1, 1), &[MT, TO]),
        ((1, 0, 0, 0, 1), &[MAT]),
        ((1, 0, 0, 1, 1), &[MAT]),
        ((1, 0, 1, 0, 1), &[]),
        ((1, 0, 1, 1, 1), &[TO]),
        ((1, 1, 0, 0, 1), &[MAT, TO]),
        ((1, 1, 0, 1, 1), &[MAT, TO]),
        ((1, 1, 1, 0, 1), &[TO]),
        ((1, 1, 1, 1, 1), &[TO]),
    ];
    for ((t, c, a, o, s), expected) in table {
        let raw = assemble(t == 1, c == 1, a == 1, o == 1);
        let stage = if s == 1 { StageExpectation::Stage2 } else { StageExpectation::Stage1 };
        let v = validate_turn(&parse_turn(&raw), stage);
        assert_eq!(v.violations, expected, "{raw:?} {stage:?}");
        assert_eq!(v.well_formed, expected.is_empty(), "{raw:?} {stage:?}");
    }
}

fn body() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 .,!?'\n]{0,40}"
}

prop_compose! {
    fn well_formed_stage1()(think in body(), use_tool in any::<bool>(), query in "[a-z ]{1,20}",
                            start in 0u32..100, len in 1u32..50, fake in any::<bool>(), pad in "[ \n]{0,3}")
                            -> String {
        let action = if use_tool {
            if query.len() % 2 == 0 {
                format!("<tool_call>{}</tool_call>", serde_json::json!({"tool": "FactProbe", "query": query.trim().to_string() + "x"}))
            } else {
                format!("<tool_call>{}</tool_call>", serde_json::json!({"tool": "ClipScout", "start_s": start, "end_s": start + len}))
            }
        } else {
            format!("<answer>{}</answer>", if fake { "fake" } else { "real" })
        };
        format!("{pad}<think>{think}</think>{pad}{action}{pad}")
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn parse_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let raw = String::from_utf8_lossy(&bytes);
        let p = parse_turn(&raw);
        for w in p.span_map.windows(2) {
            prop_assert!(w[0].byte_end <= w[1].byte_start);
        }
        for t in Tag::ALL {
            prop_assert!(p.span_map.iter().filter(|s| s.tag == t).count() <= 1);
        }
    }

    #[test]
    fn tag_soup_is_total(parts in proptest::collection::vec(
        prop_oneof![
            Just("<think>".to_string()), Just("</think>".to_string()),
            Just("<tool_call>".to_string()), Just("</tool_call>".to_string()),
            Just("<answer>".to_string()), Just("</answer>".to_string()),
            Just("<".to_string()), Just("fake".to_string()), "[ -~]{0,6}",
        ], 0..16)) {
        let raw = parts.concat();
        let p = parse_turn(&raw);
        for stage in [StageExpectation::Stage1, StageExpectation::Stage2] {
            let v = validate_format(std::slice::from_ref(&p), stage);
            prop_assert_eq!(v.well_formed, v.violations.is_empty());
        }
    }

    #[test]
    fn well_formed_round_trip(raw in well_formed_stage1()) {
        let p = parse_turn(&raw);
        prop_assert!(validate_turn(&p, StageExpectation::Stage1).well_formed, "{:?}", raw);
        let again = parse_turn(&render_turn(&p));
        prop_assert_eq!(again.think_text, p.think_text);
        prop_assert_eq!(again.tool_call_raw, p.tool_call_raw);
        prop_assert_eq!(again.answer_raw, p.answer_raw);
    }

    #[test]
    fn removing_a_close_tag_breaks_format(raw in well_formed_stage1(), which in 0usize..2) {
        let p = parse_turn(&raw);
        let span = p.span_map[which];
        let close = span.tag.close();
        let at = span.byte_end - close.len();
        let damaged = format!("{}{}", &raw[..at], &raw[span.byte_end..]);
        let v = validate_turn(&parse_turn(&damaged), StageExpectation::Stage1);
        prop_assert!(!v.well_formed, "{:?}", damaged);
    }
}
