mod common;

use common::{analysis_plan_ast, ANALYSIS_PLAN, MALFORMED_PLANS};
use gridbroker::plan::{
    parse_plan, validate_plan, Command, CommandKind, Expr, ParameterDecl, ParameterKind, PlanFile,
    Severity, TaskDecl,
};
use proptest::prelude::*;

#[test]
fn analysis_plan_parses_to_expected_ast() {
    let plan = parse_plan(ANALYSIS_PLAN).unwrap();
    assert_eq!(plan, analysis_plan_ast());
    assert_eq!(plan.task("nodestart").unwrap().commands.len(), 8);
    assert_eq!(plan.task("main").unwrap().commands.len(), 3);
    assert!(validate_plan(&plan).is_empty());
}

#[test]
fn source_lines_are_recorded() {
    let plan = parse_plan(ANALYSIS_PLAN).unwrap();
    assert_eq!(plan.parameters[0].line.get(), 1);
    assert_eq!(plan.task("main").unwrap().line.get(), 12);
    assert_eq!(plan.task("main").unwrap().commands[2].line.get(), 15);
}

#[test]
fn minimal_plan() {
    let plan = parse_plan("task main\nendtask").unwrap();
    assert!(plan.parameters.is_empty());
    assert_eq!(plan.tasks.len(), 1);
    assert!(plan.tasks[0].commands.is_empty());
}

#[test]
fn keywords_are_case_insensitive_identifiers_are_not() {
    let plan = parse_plan("PARAMETER n SINGLE 3;\nTask Main\n  Execute run $n\nENDTASK\n");
    // `Main` is not the reserved `main` task
    assert!(plan.is_err());
    let plan = parse_plan("PARAMETER n SINGLE 3;\nTask main\n  Execute run $n\nENDTASK\n").unwrap();
    assert_eq!(
        plan.parameter("n").unwrap().kind,
        ParameterKind::Single("3".into())
    );
}

#[test]
fn comments_and_blank_lines_are_ignored() {
    let text =
        "# header\n\nparameter A Set x y; # trailing\ntask main # the job\n  copy a b\nendtask\n";
    let plan = parse_plan(text).unwrap();
    assert_eq!(
        plan.parameter("A").unwrap().kind,
        ParameterKind::Set(vec!["x".into(), "y".into()])
    );
}

#[test]
fn every_malformed_plan_reports_a_line_numbered_error() {
    for (i, (text, line)) in MALFORMED_PLANS.iter().enumerate() {
        let diags = parse_plan(text).expect_err(&format!("plan {i} should be rejected"));
        assert!(!diags.is_empty());
        assert!(
            diags
                .iter()
                .any(|d| d.severity == Severity::Error && d.line == *line),
            "plan {i}: expected an error on line {line}, got {diags:?}"
        );
        let lines = text.lines().count();
        assert!(diags.iter().all(|d| d.line >= 1 && d.line <= lines.max(1)));
    }
}

#[test]
fn duplicate_set_value_is_named() {
    let diags = parse_plan("parameter X Set 1 2 2;\ntask main\nendtask").unwrap_err();
    assert!(
        diags
            .iter()
            .any(|d| d.message.contains("duplicate set value")),
        "{diags:?}"
    );
}

#[test]
fn undeclared_reference_is_named() {
    let mut plan = analysis_plan_ast();
    plan.tasks[1].commands.push(Command::new(CommandKind::Copy {
        src: Expr::new("$MISSING"),
        dst: Expr::new("x"),
    }));
    let diags = validate_plan(&plan);
    assert_eq!(diags.len(), 1);
    assert!(diags[0].message.contains("MISSING"));
}

#[test]
fn duplicate_parameter_is_one_error() {
    let mut plan = analysis_plan_ast();
    plan.parameters.push(plan.parameters[0].clone());
    assert_eq!(validate_plan(&plan).len(), 1);
}

fn word() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_.]{0,6}"
}

fn value() -> impl Strategy<Value = String> {
    "[a-z0-9][a-z0-9.]{0,4}"
}

prop_compose! {
    fn parameter(idx: usize)(kind in prop_oneof![
        value().prop_map(ParameterKind::Single),
        (-20i32..20, 0u32..10, 1u32..8).prop_map(|(lo, span, step)| ParameterKind::Range {
            lo: lo as f64 * 0.5,
            hi: (lo + span as i32) as f64 * 0.5,
            step: step as f64 * 0.25,
        }),
        prop::collection::btree_set(value(), 1..5)
            .prop_map(|s| ParameterKind::Set(s.into_iter().collect())),
        word().prop_map(|w| ParameterKind::Gridfile(format!("lfn:/data/{w}*.dat"))),
    ]) -> ParameterDecl {
        ParameterDecl::new(format!("P{idx}"), kind)
    }
}

fn command(params: usize) -> impl Strategy<Value = Command> {
    let expr = move || {
        (word(), prop::option::of(0..params.max(1)), any::<bool>()).prop_map(move |(w, r, node)| {
            let mut s = if node { format!("node:{w}") } else { w };
            if let (Some(i), true) = (r, params > 0) {
                s.push_str(&format!("$P{i}"));
            }
            Expr::new(s)
        })
    };
    prop_oneof![
        (expr(), expr()).prop_map(|(src, dst)| CommandKind::Copy { src, dst }),
        (expr(), expr()).prop_map(|(src, dst)| CommandKind::MCopy {
            src: Expr::new(format!("{src}*")),
            dst
        }),
        (any::<bool>(), expr(), prop::collection::vec(expr(), 0..4)).prop_map(
            |(on_node, program, args)| CommandKind::Execute {
                on_node,
                program,
                args
            }
        ),
        (expr(), expr())
            .prop_map(|(template, output)| CommandKind::Substitute { template, output }),
    ]
    .prop_map(Command::new)
}

fn plan() -> impl Strategy<Value = PlanFile> {
    (0usize..4)
        .prop_flat_map(|n| {
            let params: Vec<_> = (0..n).map(parameter).collect();
            (
                params,
                prop::option::of(prop::collection::vec(command(n), 0..4)),
                prop::collection::vec(command(n), 0..5),
            )
        })
        .prop_map(|(parameters, nodestart, main)| {
            let mut tasks = Vec::new();
            if let Some(cmds) = nodestart {
                tasks.push(TaskDecl::new("nodestart", cmds));
            }
            tasks.push(TaskDecl::new("main", main));
            PlanFile { parameters, tasks }
        })
}

proptest! {
    #[test]
    fn printing_then_parsing_is_identity(p in plan()) {
        prop_assert!(validate_plan(&p).is_empty(), "{:?}", validate_plan(&p));
        let text = p.to_string();
        let back = parse_plan(&text).map_err(|d| TestCaseError::fail(format!("{d:?}\n{text}")))?;
        prop_assert_eq!(back, p);
    }

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,200}") {
        let _ = parse_plan(&text);
    }

    #[test]
    fn line_mutations_of_the_analysis_plan_never_panic(
        line in 0usize..16,
        junk in "[ -~]{0,30}",
    ) {
        let mut lines: Vec<String> = ANALYSIS_PLAN.lines().map(String::from).collect();
        let i = line % lines.len();
        lines[i] = junk;
        if let Err(diags) = parse_plan(&lines.join("\n")) {
            prop_assert!(!diags.is_empty());
            prop_assert!(diags.iter().all(|d| d.line >= 1));
        }
    }
}
