use decoq_cli::expr::{self, Expr, Scalar};
use decoq_cli::scenario::{AnalysisSpec, ModelSpec, OutputSpec, ScheduleSpec, Source};
use decoq_cli::Scenario;
use indexmap::IndexMap;
use num_rational::Rational64;
use proptest::prelude::*;

fn rational() -> impl Strategy<Value = Rational64> {
    (
        -100_000i64..100_000,
        prop::sample::select(vec![1i64, 2, 3, 4, 5, 7, 8, 10, 16, 125, 1000]),
    )
        .prop_map(|(n, d)| Rational64::new(n, d))
}

fn scalar() -> impl Strategy<Value = Scalar> {
    (
        rational(),
        prop_oneof![Just(Rational64::from(0)), rational()],
    )
        .prop_map(|(re, im)| Scalar { re, im })
}

fn expression(names: Vec<String>) -> BoxedStrategy<Expr> {
    let leaf = prop_oneof![
        scalar().prop_map(Expr::scalar),
        "[IXYZ]{1,4}".prop_map(|w| Expr::string(&w)),
        prop::sample::select(names).prop_map(|n| Expr::name(&n)),
    ];
    leaf.prop_recursive(4, 24, 4, |inner| {
        (
            prop::sample::select(vec![
                "sum", "tensor", "scale", "dag", "harmonic", "mul", "pauli", "ket",
            ]),
            prop::collection::vec(inner, 0..4),
        )
            .prop_map(|(name, args)| Expr::call(name, args))
    })
    .boxed()
}

fn source(e: Expr) -> Source {
    Source::from(e)
}

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

fn scenario() -> impl Strategy<Value = Scenario> {
    prop::collection::vec(
        "[A-Za-z_][A-Za-z0-9_]{0,5}".prop_filter("reserved", |n| n != "i"),
        1..4,
    )
    .prop_flat_map(|mut names| {
        names.sort();
        names.dedup();
        let e = expression(names.clone());
        (
            Just(names),
            "\\PC{0,12}",
            (1usize..64, 1usize..64),
            prop::collection::vec(e.clone(), 3),
            prop::collection::vec(e.clone(), 3..6),
            prop::collection::vec(e.clone(), 0..3),
            prop::collection::vec((e.clone(), e.clone()), 0..3),
            prop::option::of(e.clone()),
            prop::option::of((
                prop::collection::vec(finite(), 1..3),
                prop::collection::vec(prop::collection::vec(finite(), 0..3), 1..3),
            )),
            (
                prop::option::of(finite()),
                prop::option::of(1usize..500),
                prop::option::of((finite(), finite())),
                prop::collection::vec(e, 0..3),
            ),
            (
                prop::option::of("[a-z/_.]{1,12}"),
                prop::option::of("\\PC{1,8}"),
            ),
        )
    })
    .prop_map(
        |(
            names,
            title,
            (d_s, d_e),
            exprs,
            model_exprs,
            controls,
            coupling,
            interaction,
            schedule,
            analysis,
            outputs,
        )| {
            let operators: IndexMap<String, Source> = names
                .iter()
                .cloned()
                .zip(exprs.into_iter().cycle().map(source))
                .collect();
            let mut m = model_exprs.into_iter().map(source);
            Scenario {
                name: title,
                system_dim: d_s,
                env_dim: d_e,
                operators,
                model: ModelSpec {
                    drift: m.next().unwrap(),
                    environment: m.next().unwrap(),
                    observable: m.next().unwrap(),
                    bath_state: m.next(),
                    controls: controls.into_iter().map(source).collect(),
                    coupling: coupling
                        .into_iter()
                        .map(|(a, b)| (source(a), source(b)))
                        .collect(),
                    interaction: interaction.map(source),
                    schedule: schedule.map(|(times, values)| ScheduleSpec { times, values }),
                },
                analysis: AnalysisSpec {
                    tol: analysis.0,
                    max_dim: analysis.1,
                    compression: None,
                    t_span: analysis.2,
                    dt: None,
                    states: analysis.3.into_iter().map(source).collect(),
                    chain_states: None,
                    chain_times: Some(3),
                },
                outputs: OutputSpec {
                    traces: outputs.0,
                    report: outputs.1,
                },
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn canonical_form_is_a_fixed_point(s in scenario()) {
        let text = s.to_canonical();
        let parsed = Scenario::parse(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&parsed, &s);
        prop_assert_eq!(parsed.to_canonical(), text);
    }

    #[test]
    fn expressions_reparse_to_themselves(e in expression(vec!["A".into(), "rho_1".into()])) {
        let printed = e.to_string();
        let back = expr::parse(&printed).map_err(|err| TestCaseError::fail(format!("{err}: {printed}")))?;
        prop_assert_eq!(&back, &e);
        prop_assert_eq!(back.to_string(), printed);
    }
}

#[test]
fn shipped_scenarios_round_trip() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let Ok(s) = Scenario::load(&path) else {
            continue;
        };
        let text = s.to_canonical();
        assert_eq!(
            Scenario::parse(&text).unwrap().to_canonical(),
            text,
            "{}",
            path.display()
        );
    }
}
