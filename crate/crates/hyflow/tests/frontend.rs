use hyflow::bench::{Source, FIXTURES, REGISTRY};
use hyflow::dsl::{load_dsl, parse_dsl, pretty};
use hyflow::json_model::parse_json_automaton;
use proptest::prelude::*;

fn dsl_sources() -> Vec<(&'static str, &'static str)> {
    REGISTRY
        .iter()
        .chain(FIXTURES)
        .filter_map(|e| match e.source {
            Source::Dsl(t) => Some((e.name, t)),
            Source::Json(_) => None,
        })
        .collect()
}

#[test]
fn pretty_printing_round_trips() {
    for (name, text) in dsl_sources() {
        let first = load_dsl(text).unwrap();
        let printed = pretty(&parse_dsl(text).unwrap());
        let second = load_dsl(&printed).unwrap_or_else(|e| panic!("{name}: reprinted model fails: {e}\n{printed}"));
        assert_eq!(first.ha, second.ha, "{name}");
        assert_eq!(first.cfg, second.cfg, "{name}");
        assert_eq!(pretty(&parse_dsl(&printed).unwrap()), printed, "{name}: printing is not stable");
    }
}

#[test]
fn lowering_keeps_declared_variables_in_order() {
    for (name, text) in dsl_sources() {
        let ast = parse_dsl(text).unwrap();
        let m = load_dsl(text).unwrap();
        let declared: Vec<&str> = ast.inits.iter().map(|i| i.var.name.as_str()).collect();
        assert_eq!(&m.ha.vars[..declared.len()], declared.as_slice(), "{name}");
    }
}

#[test]
fn every_shipped_model_validates() {
    for e in REGISTRY.iter().chain(FIXTURES) {
        let m = e.load().unwrap_or_else(|err| panic!("{}: {err}", e.name));
        m.ha.validate().unwrap();
    }
}

fn listing() -> &'static str {
    dsl_sources().into_iter().find(|(n, _)| *n == "pendulum").unwrap().1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn errors_carry_spans_inside_the_text(cut in 0usize..400, len in 0usize..6, ins in prop::sample::select(vec!["", ";", "(", "]", "=", "on", "$", "'", "\"", "1e", "[0,", "}"])) {
        let text = listing();
        let a = cut.min(text.len());
        let b = (a + len).min(text.len());
        if !text.is_char_boundary(a) || !text.is_char_boundary(b) {
            return Ok(());
        }
        let variant = format!("{}{}{}", &text[..a], ins, &text[b..]);
        if let Err(e) = load_dsl(&variant) {
            let span = e.span().expect("text errors have spans");
            prop_assert!(span.start <= span.end && span.end <= variant.len());
            prop_assert!(span.line >= 1 && span.line <= variant.lines().count().max(1) + 1);
            let shown = e.render("variant", &variant);
            prop_assert!(shown.contains('^'));
        }
    }

    #[test]
    fn malformed_json_never_panics(cut in 0usize..600, len in 0usize..8) {
        let text = include_str!("../models/thermostat.json");
        let a = cut.min(text.len());
        let b = (a + len).min(text.len());
        let variant = format!("{}{}", &text[..a], &text[b..]);
        if let Err(e) = parse_json_automaton(&variant) {
            prop_assert!(!e.to_string().is_empty());
        }
    }
}
